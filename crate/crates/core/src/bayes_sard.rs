//! Bayes-Sard cubature: Bayesian cubature with a flat prior on the
//! coefficients of a polynomial space, so the rule integrates that space exactly.
//!
//! The naive path solves the saddle-point system `[[K, P], [P^T, 0]]` by the
//! range-space method (Cholesky of `K`, then of `P^T K^{-1} P`). The fast path
//! assumes the point set and the polynomial space are unions of fully
//! symmetric sets and solves the `(J + L) x (J + L)` block system instead.
//! Odd monomials integrate to zero against every symmetric rule and receive
//! zero weight, so only the even part of the space enters the fast system.

use nalgebra::{DMatrix, DVector};

use crate::bc::{clamp_variance, kernel_matrix, kernel_mean_vector, Diagnostics, ReducedSystem, Weights};
use crate::error::{Error, Result};
use crate::fss::{expand_nonneg, MultiIndex, NonNegFullySymmetricIndexSet, Points, SymmetricPointSet};
use crate::kernel::{CountingKernel, Kernel};
use crate::measure::Measure;
use crate::numeric::{binomial, monomial, LuFactor, SpdFactor};

/// Singular-value ratio below which a Vandermonde matrix counts as rank deficient.
pub const UNISOLVENCY_THRESHOLD: f64 = 1e-10;

/// A polynomial space spanned by unions of permutation orbits of multi-indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSpace {
    dim: usize,
    blocks: Vec<NonNegFullySymmetricIndexSet>,
}

/// Non-increasing `parts`-tuples of non-negative integers summing to `total`.
fn partitions(total: u32, parts: usize, max: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if prefix.len() == parts {
        if total == 0 {
            out.push(prefix.clone());
        }
        return;
    }
    let remaining = (parts - prefix.len()) as u32;
    let hi = max.min(total);
    for v in (0..=hi).rev() {
        if v.saturating_mul(remaining) < total {
            break;
        }
        prefix.push(v);
        partitions(total - v, parts, v, prefix, out);
        prefix.pop();
    }
}

impl PolynomialSpace {
    /// The span of the orbits of `generators`. Generators must be distinct up to permutation.
    pub fn from_generators(dim: usize, generators: &[MultiIndex]) -> Result<Self> {
        let mut blocks: Vec<NonNegFullySymmetricIndexSet> = Vec::with_capacity(generators.len());
        for g in generators {
            if g.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: g.len(),
                });
            }
            let block = expand_nonneg(g)?;
            if let Some(i) = blocks.iter().position(|b| b.generator == block.generator) {
                return Err(Error::DuplicateGenerator {
                    first: i,
                    second: blocks.len(),
                });
            }
            blocks.push(block);
        }
        if blocks.is_empty() {
            return Err(Error::InvalidInput("polynomial space has no generators".into()));
        }
        Ok(PolynomialSpace { dim, blocks })
    }

    /// All monomials of total degree at most `degree` in `dim` variables,
    /// ordered by degree and then by descending generator.
    pub fn total_degree(dim: usize, degree: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let mut gens = Vec::new();
        for d in 0..=degree {
            partitions(d, dim, d, &mut Vec::with_capacity(dim), &mut gens);
        }
        let space = Self::from_generators(dim, &gens)?;
        debug_assert_eq!(
            space.len() as u128,
            binomial(dim as u64 + degree as u64, degree as u64)
        );
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis monomials `Q`.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[NonNegFullySymmetricIndexSet] {
        &self.blocks
    }

    /// Every multi-index, block by block.
    pub fn indices(&self) -> impl Iterator<Item = &MultiIndex> {
        self.blocks.iter().flat_map(|b| b.indices.iter())
    }

    /// The blocks whose generator has only even entries.
    pub fn even_part(&self) -> Option<PolynomialSpace> {
        let blocks: Vec<_> = self.blocks.iter().filter(|b| b.is_even()).cloned().collect();
        if blocks.is_empty() {
            None
        } else {
            Some(PolynomialSpace { dim: self.dim, blocks })
        }
    }
}

/// `V[i][q] = x_i^{alpha_q}`, columns in the order of [`PolynomialSpace::indices`].
pub fn vandermonde(points: &Points, space: &PolynomialSpace) -> DMatrix<f64> {
    let indices: Vec<&MultiIndex> = space.indices().collect();
    DMatrix::from_fn(points.len(), indices.len(), |i, q| {
        monomial(points.get(i), indices[q])
    })
}

/// Checks that `space` has full column rank on `points`.
pub fn check_unisolvency(points: &Points, space: &PolynomialSpace) -> Result<f64> {
    let q = space.len();
    if q > points.len() {
        return Err(Error::InfeasibleSpace { q, n: points.len() });
    }
    let sv = vandermonde(points, space).singular_values();
    let max = sv.max();
    let ratio = if max > 0.0 { sv.min() / max } else { 0.0 };
    if !(ratio > UNISOLVENCY_THRESHOLD) {
        return Err(Error::NotUnisolvent { ratio });
    }
    Ok(ratio)
}

fn space_integrals(space: &PolynomialSpace, measure: &Measure) -> Result<DVector<f64>> {
    let values: Result<Vec<f64>> = space.indices().map(|a| measure.polynomial_integral(a)).collect();
    Ok(DVector::from_vec(values?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BscResult {
    pub posterior_mean: f64,
    pub posterior_variance: f64,
    pub kernel_weights: Weights,
    /// One weight per monomial of the space, in the order of [`PolynomialSpace::indices`].
    pub polynomial_weights: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl BscResult {
    pub fn posterior_sd(&self) -> f64 {
        self.posterior_variance.sqrt()
    }
}

/// Reference implementation on arbitrary points.
pub fn bsc_naive(
    points: &Points,
    k: &dyn Kernel,
    measure: &Measure,
    space: &PolynomialSpace,
    f_values: &[f64],
) -> Result<BscResult> {
    if points.dim() != measure.dim() || space.dim() != measure.dim() {
        return Err(Error::DimensionMismatch {
            expected: measure.dim(),
            found: if points.dim() != measure.dim() { points.dim() } else { space.dim() },
        });
    }
    if f_values.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: f_values.len(),
        });
    }
    check_unisolvency(points, space)?;

    let counting = CountingKernel::new(k);
    let factor = SpdFactor::new(kernel_matrix(points, &counting), "kernel matrix K_X")?;
    let phi = vandermonde(points, space);
    let kernel_means = kernel_mean_vector(points, k, measure)?;
    let phi_integrals = space_integrals(space, measure)?;
    let initial_error = k.initial_error(measure)?;

    let k_inv_phi = factor.solve_mat(&phi);
    let schur = SpdFactor::new(phi.transpose() * &k_inv_phi, "Schur complement P^T K^-1 P")?;
    let k_inv_kmean = factor.solve_vec(&kernel_means);
    let residual = phi.transpose() * &k_inv_kmean - &phi_integrals;
    let poly_weights = schur.solve_vec(&residual);
    let kernel_weights = &k_inv_kmean - &k_inv_phi * &poly_weights;

    let posterior_mean = kernel_weights.dot(&DVector::from_column_slice(f_values));
    let raw_variance = initial_error - kernel_means.dot(&k_inv_kmean) + poly_weights.dot(&residual);
    Ok(BscResult {
        posterior_mean,
        posterior_variance: clamp_variance(raw_variance, initial_error),
        kernel_weights: Weights::PerPoint(kernel_weights.iter().copied().collect()),
        polynomial_weights: poly_weights.iter().copied().collect(),
        diagnostics: Diagnostics {
            system_dimension: points.len() + space.len(),
            condition_estimate: factor.condition_estimate.max(schur.condition_estimate),
            jitter_used: 0.0,
            kernel_evaluations: counting.count(),
            raw_variance,
        },
    })
}

/// Fully symmetric fast path.
pub fn bsc_fss(
    design: &SymmetricPointSet,
    k: &dyn Kernel,
    measure: &Measure,
    space: &PolynomialSpace,
    f_values: &[f64],
) -> Result<BscResult> {
    if space.dim() != design.dim() {
        return Err(Error::DimensionMismatch {
            expected: design.dim(),
            found: space.dim(),
        });
    }
    if f_values.len() != design.len() {
        return Err(Error::DimensionMismatch {
            expected: design.len(),
            found: f_values.len(),
        });
    }
    let even = space.even_part().ok_or_else(|| {
        Error::Precondition("polynomial space has no even monomials".into())
    })?;
    check_unisolvency(design.points(), &even)?;

    // Also checks kernel and measure symmetry.
    let reduced = ReducedSystem::new(design, k, measure)?;
    let jn = design.num_blocks();
    let ln = even.num_blocks();
    let generators: Vec<&[f64]> = (0..jn).map(|j| design.generator(j)).collect();

    // a[i][l] = sum_{beta in [alpha_l]+} lambda_i^beta
    let a = DMatrix::from_fn(jn, ln, |i, l| {
        even.blocks()[l]
            .indices
            .iter()
            .map(|beta| monomial(generators[i], beta))
            .sum::<f64>()
    });
    // b[l][j] = sum_{x in [lambda_j]} x^{alpha_l}
    let b = DMatrix::from_fn(ln, jn, |l, j| {
        let alpha = &even.blocks()[l].generator;
        design.block_points(j).map(|x| monomial(x, alpha)).sum::<f64>()
    });
    let block_integrals: Vec<f64> = even
        .blocks()
        .iter()
        .map(|blk| measure.polynomial_integral(&blk.generator))
        .collect::<Result<_>>()?;

    let n = jn + ln;
    let mut system = DMatrix::zeros(n, n);
    system.view_mut((0, 0), (jn, jn)).copy_from(&reduced.s);
    system.view_mut((0, jn), (jn, ln)).copy_from(&a);
    system.view_mut((jn, 0), (ln, jn)).copy_from(&b);
    let mut rhs = DVector::zeros(n);
    rhs.rows_mut(0, jn).copy_from(&reduced.kernel_means);
    for (l, v) in block_integrals.iter().enumerate() {
        rhs[jn + l] = *v;
    }
    let lu = LuFactor::new(system, "fully symmetric saddle system")?;
    let solution = lu.solve_vec(&rhs);
    let kernel_weights: Vec<f64> = solution.rows(0, jn).iter().copied().collect();
    let block_poly_weights: Vec<f64> = solution.rows(jn, ln).iter().copied().collect();

    let sums = design.block_sums(f_values)?;
    let posterior_mean: f64 = kernel_weights.iter().zip(&sums).map(|(w, s)| w * s).sum();

    // Variance through the standard weights: the flat residual
    // P^T K^{-1} k_nu - I(P) is constant on each index block.
    let standard = &reduced.weights;
    let mut correction = 0.0;
    for l in 0..ln {
        let projected: f64 = (0..jn).map(|i| standard[i] * b[(l, i)]).sum();
        correction +=
            block_poly_weights[l] * even.blocks()[l].len() as f64 * (projected - block_integrals[l]);
    }
    let raw_variance = reduced.initial_error - reduced.explained_variance(design) + correction;

    let mut polynomial_weights = Vec::with_capacity(space.len());
    let mut next_even = 0;
    for blk in space.blocks() {
        let w = if blk.is_even() {
            next_even += 1;
            block_poly_weights[next_even - 1]
        } else {
            0.0
        };
        polynomial_weights.extend(std::iter::repeat_n(w, blk.len()));
    }

    Ok(BscResult {
        posterior_mean,
        posterior_variance: clamp_variance(raw_variance, reduced.initial_error),
        kernel_weights: Weights::PerBlock(kernel_weights),
        polynomial_weights,
        diagnostics: Diagnostics {
            system_dimension: n,
            condition_estimate: lu.condition_estimate,
            jitter_used: 0.0,
            kernel_evaluations: reduced.kernel_evaluations,
            raw_variance,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fss::{build_point_set, GeneratorVector};
    use crate::kernel::GaussianKernel;

    fn design(gens: &[&[f64]]) -> SymmetricPointSet {
        let g: Vec<GeneratorVector> = gens
            .iter()
            .map(|v| GeneratorVector::new(v.to_vec()).unwrap())
            .collect();
        build_point_set(&g).unwrap()
    }

    #[test]
    fn total_degree_sizes() {
        for m in 1..5 {
            for r in 0..5 {
                let s = PolynomialSpace::total_degree(m, r).unwrap();
                assert_eq!(s.len() as u128, binomial((m + r as usize) as u64, r as u64));
            }
        }
        let s = PolynomialSpace::total_degree(2, 2).unwrap();
        let gens: Vec<_> = s.blocks().iter().map(|b| b.generator.clone()).collect();
        assert_eq!(gens, vec![vec![0, 0], vec![1, 0], vec![2, 0], vec![1, 1]]);
    }

    #[test]
    fn even_part_of_quadratics() {
        let s = PolynomialSpace::total_degree(2, 2).unwrap();
        let e = s.even_part().unwrap();
        assert_eq!(e.len(), 3);
        assert!(PolynomialSpace::from_generators(2, &[vec![1, 0]]).unwrap().even_part().is_none());
    }

    #[test]
    fn duplicate_index_orbits_rejected() {
        assert!(PolynomialSpace::from_generators(2, &[vec![2, 0], vec![0, 2]]).is_err());
    }

    #[test]
    fn infeasible_and_degenerate_spaces() {
        let pts = Points::from_rows(1, &[vec![1.0]]).unwrap();
        let space = PolynomialSpace::total_degree(1, 2).unwrap();
        assert!(matches!(check_unisolvency(&pts, &space), Err(Error::InfeasibleSpace { q: 3, n: 1 })));
        // x and x^3 agree on {-1, 1}.
        let d = design(&[&[1.0]]);
        let space = PolynomialSpace::from_generators(1, &[vec![1], vec![3]]).unwrap();
        let err = check_unisolvency(d.points(), &space).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn constants_are_integrated_exactly() {
        let d = design(&[&[1.0, 0.0], &[0.8, 0.8]]);
        let k = GaussianKernel::new(1.0).unwrap();
        let measure = Measure::standard_gaussian(2);
        let space = PolynomialSpace::total_degree(2, 0).unwrap();
        let f = vec![2.0; d.len()];
        let naive = bsc_naive(d.points(), &k, &measure, &space, &f).unwrap();
        let fast = bsc_fss(&d, &k, &measure, &space, &f).unwrap();
        assert!((naive.posterior_mean - 2.0).abs() < 1e-12);
        assert!((fast.posterior_mean - 2.0).abs() < 1e-12);
    }

    #[test]
    fn odd_polynomial_weights_vanish() {
        let d = design(&[&[0.0, 0.0], &[1.0, 0.0], &[1.2, 0.6], &[1.5, 1.5]]);
        let k = GaussianKernel::new(1.0).unwrap();
        let measure = Measure::standard_gaussian(2);
        let space = PolynomialSpace::total_degree(2, 2).unwrap();
        let f: Vec<f64> = d.points().iter().map(|x| (x[0] - x[1]).cos()).collect();
        let naive = bsc_naive(d.points(), &k, &measure, &space, &f).unwrap();
        let fast = bsc_fss(&d, &k, &measure, &space, &f).unwrap();
        let odd_block = 1;
        let offset = space.blocks()[0].len();
        for q in offset..offset + space.blocks()[odd_block].len() {
            assert!(naive.polynomial_weights[q].abs() < 1e-10);
            assert_eq!(fast.polynomial_weights[q], 0.0);
        }
        for (a, b) in naive.polynomial_weights.iter().zip(&fast.polynomial_weights) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
        assert!((naive.posterior_mean - fast.posterior_mean).abs() < 1e-10);
        assert!((naive.posterior_variance - fast.posterior_variance).abs() < 1e-10);
    }

    #[test]
    fn quadratics_integrated_exactly() {
        let d = design(&[&[0.0, 0.0], &[1.0, 0.0], &[1.1, 1.1]]);
        let k = GaussianKernel::new(1.0).unwrap();
        let measure = Measure::standard_gaussian(2);
        let space = PolynomialSpace::total_degree(2, 2).unwrap();
        let f: Vec<f64> = d.points().iter().map(|x| 1.0 + 3.0 * x[0] * x[0] - x[0] * x[1] + x[1]).collect();
        let fast = bsc_fss(&d, &k, &measure, &space, &f).unwrap();
        assert!((fast.posterior_mean - 4.0).abs() < 1e-12);
    }
}
