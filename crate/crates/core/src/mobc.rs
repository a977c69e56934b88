//! Multi-output Bayesian cubature with a separable kernel `B c(x, x')`.
//!
//! `D` integrands `f_1..f_D` are modelled jointly. Output `d` is observed on
//! its own point set `X_d`. The naive path assembles the `DN x DN` matrix with
//! blocks `B[d][q] C(X_d, X_q)`. The fast path needs every `X_d` to be a union
//! of `J` fully symmetric sets with block sizes shared across outputs, and
//! solves a `DJ x DJ` system instead.
//!
//! Index conventions used by both paths (rows are `(output, point)` pairs,
//! columns are outputs):
//!
//! * `k_nu,X[(d, i)][e] = B[d][e] c_nu(x_di)`
//! * `W_X = K_X^{-1} k_nu,X`, `mu_e = sum_{d, i} W_X[(d, i)][e] f_d(x_di)`
//! * `Sigma[a][b] = B[a][b] c_nu,nu - sum_{d, i} B[d][a] c_nu(x_di) W_X[(d, i)][b]`
//!
//! In block form the covariance correction pairs the weight of block `(d, j)`
//! with `c_nu` at that same block's generator, `lambda^{dj}`. Pairing it with
//! the generator of the column output instead only agrees when `c_nu` is
//! constant (as on the sphere), and is wrong for the Gaussian kernel.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::bc::{require_symmetric, VARIANCE_TOLERANCE};
use crate::error::{Error, Result};
use crate::fss::{build_point_set, canonicalize, GeneratorVector, Points, SymmetricPointSet};
use crate::kernel::{CountingKernel, Kernel, SeparableMatrixKernel};
use crate::measure::{sample_unit_sphere, Measure};
use crate::numeric::{LuFactor, SpdFactor};

/// One fully symmetric design per output, all with the same block sizes.
#[derive(Debug, Clone)]
pub struct MultiDesign {
    designs: Vec<SymmetricPointSet>,
}

impl MultiDesign {
    pub fn new(designs: Vec<SymmetricPointSet>) -> Result<Self> {
        let first = designs
            .first()
            .ok_or_else(|| Error::InvalidInput("multi-output design has no outputs".into()))?;
        let sizes = first.block_sizes();
        for d in &designs[1..] {
            if d.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    found: d.dim(),
                });
            }
            if d.num_blocks() != first.num_blocks() {
                return Err(Error::DimensionMismatch {
                    expected: first.num_blocks(),
                    found: d.num_blocks(),
                });
            }
            if d.block_sizes() != sizes {
                return Err(Error::Precondition(format!(
                    "block sizes {:?} differ from those of the first output {:?}",
                    d.block_sizes(),
                    sizes
                )));
            }
        }
        Ok(MultiDesign { designs })
    }

    pub fn outputs(&self) -> usize {
        self.designs.len()
    }

    pub fn dim(&self) -> usize {
        self.designs[0].dim()
    }

    pub fn num_blocks(&self) -> usize {
        self.designs[0].num_blocks()
    }

    /// Points per output.
    pub fn points_per_output(&self) -> usize {
        self.designs[0].len()
    }

    pub fn designs(&self) -> &[SymmetricPointSet] {
        &self.designs
    }

    pub fn design(&self, d: usize) -> &SymmetricPointSet {
        &self.designs[d]
    }

    pub fn point_sets(&self) -> Vec<Points> {
        self.designs.iter().map(|d| d.points().clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MultiWeights {
    /// `W_Lambda`, `DJ x D`, rows `(d, j)` output-major.
    Block(DMatrix<f64>),
    /// `W_X`, `DN x D`, rows `(d, i)` output-major.
    Flat(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiDiagnostics {
    pub system_dimension: usize,
    pub condition_estimate: f64,
    pub kernel_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiOutputResult {
    pub posterior_mean: DVector<f64>,
    pub posterior_covariance: DMatrix<f64>,
    pub weights: MultiWeights,
    pub diagnostics: MultiDiagnostics,
}

impl MultiOutputResult {
    pub fn posterior_sd(&self, d: usize) -> f64 {
        self.posterior_covariance[(d, d)].max(0.0).sqrt()
    }

    /// `W_X`, expanding block weights over `design` when needed.
    pub fn flat_weights(&self, design: &MultiDesign) -> DMatrix<f64> {
        match &self.weights {
            MultiWeights::Flat(w) => w.clone(),
            MultiWeights::Block(w) => {
                let n = design.points_per_output();
                let jn = design.num_blocks();
                let outputs = design.outputs();
                DMatrix::from_fn(outputs * n, outputs, |row, e| {
                    let (d, i) = (row / n, row % n);
                    w[(d * jn + design.design(d).block_of(i), e)]
                })
            }
        }
    }
}

fn check_kernel(kernel: &SeparableMatrixKernel, outputs: usize) -> Result<()> {
    if kernel.outputs() != outputs {
        return Err(Error::DimensionMismatch {
            expected: kernel.outputs(),
            found: outputs,
        });
    }
    Ok(())
}

fn check_values(sizes: &[usize], f_values: &[Vec<f64>]) -> Result<()> {
    if f_values.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: sizes.len(),
            found: f_values.len(),
        });
    }
    for (n, f) in sizes.iter().zip(f_values) {
        if f.len() != *n {
            return Err(Error::DimensionMismatch {
                expected: *n,
                found: f.len(),
            });
        }
    }
    Ok(())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

fn finish_covariance(mut cov: DMatrix<f64>, b: &DMatrix<f64>, initial: f64) -> DMatrix<f64> {
    symmetrize(&mut cov);
    for d in 0..cov.nrows() {
        if cov[(d, d)] < -VARIANCE_TOLERANCE * (b[(d, d)] * initial).abs().max(1.0) {
            log::warn!("posterior variance of output {d} is {:e}", cov[(d, d)]);
        }
    }
    cov
}

/// Reference implementation: assembles and factorizes the full `DN x DN` system.
/// Each output may have its own point count.
pub fn mobc_naive(
    designs: &[Points],
    kernel: &SeparableMatrixKernel,
    measure: &Measure,
    f_values: &[Vec<f64>],
) -> Result<MultiOutputResult> {
    let outputs = designs.len();
    check_kernel(kernel, outputs)?;
    let sizes: Vec<usize> = designs.iter().map(|p| p.len()).collect();
    check_values(&sizes, f_values)?;
    for p in designs {
        if p.dim() != measure.dim() {
            return Err(Error::DimensionMismatch {
                expected: measure.dim(),
                found: p.dim(),
            });
        }
    }
    let offsets: Vec<usize> = std::iter::once(0)
        .chain(sizes.iter().scan(0, |acc, n| {
            *acc += n;
            Some(*acc)
        }))
        .collect();
    let total = offsets[outputs];
    let owner = |row: usize| offsets.partition_point(|&o| o <= row) - 1;
    let b = kernel.b();
    let c = kernel.scalar();
    let counting = CountingKernel::new(c);

    let columns: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|col| {
            let q = owner(col);
            let y = designs[q].get(col - offsets[q]);
            (0..total)
                .map(|row| {
                    let d = owner(row);
                    b[(d, q)] * counting.eval(designs[d].get(row - offsets[d]), y)
                })
                .collect()
        })
        .collect();
    let gram = DMatrix::from_iterator(total, total, columns.into_iter().flatten());
    let factor = SpdFactor::new(gram, "multi-output kernel matrix K_X")?;

    let mut kernel_means = DMatrix::zeros(total, outputs);
    for d in 0..outputs {
        for (i, x) in designs[d].iter().enumerate() {
            let cm = c.kernel_mean(measure, x)?;
            for e in 0..outputs {
                kernel_means[(offsets[d] + i, e)] = b[(d, e)] * cm;
            }
        }
    }
    let initial = c.initial_error(measure)?;
    let weights = factor.solve_mat(&kernel_means);

    let f_flat = DVector::from_iterator(total, f_values.iter().flatten().copied());
    let posterior_mean = weights.transpose() * f_flat;
    let cov = b * initial - kernel_means.transpose() * &weights;

    Ok(MultiOutputResult {
        posterior_mean,
        posterior_covariance: finish_covariance(cov, b, initial),
        weights: MultiWeights::Flat(weights),
        diagnostics: MultiDiagnostics {
            system_dimension: total,
            condition_estimate: factor.condition_estimate,
            kernel_evaluations: counting.count(),
        },
    })
}

/// `mu_e = sum_{d, j} W_Lambda[(d, j)][e] * sum_{x in [lambda^{dj}]} f_d(x)`.
/// Lets one weight solve serve several sets of integrand values.
pub fn apply_block_weights(
    design: &MultiDesign,
    weights: &DMatrix<f64>,
    f_values: &[Vec<f64>],
) -> Result<DVector<f64>> {
    let outputs = design.outputs();
    let jn = design.num_blocks();
    check_values(&vec![design.points_per_output(); outputs], f_values)?;
    if weights.nrows() != outputs * jn {
        return Err(Error::DimensionMismatch {
            expected: outputs * jn,
            found: weights.nrows(),
        });
    }
    let mut block_sums = Vec::with_capacity(outputs * jn);
    for d in 0..outputs {
        block_sums.extend(design.design(d).block_sums(&f_values[d])?);
    }
    Ok(DVector::from_fn(weights.ncols(), |e, _| {
        (0..block_sums.len()).map(|row| weights[(row, e)] * block_sums[row]).sum()
    }))
}

/// Fully symmetric fast path. Performs `D^2 J N` scalar kernel evaluations.
pub fn mobc_fss(
    design: &MultiDesign,
    kernel: &SeparableMatrixKernel,
    measure: &Measure,
    f_values: &[Vec<f64>],
) -> Result<MultiOutputResult> {
    let outputs = design.outputs();
    check_kernel(kernel, outputs)?;
    check_values(&vec![design.points_per_output(); outputs], f_values)?;
    let c = kernel.scalar();
    require_symmetric(c, measure)?;
    if design.dim() != measure.dim() {
        return Err(Error::DimensionMismatch {
            expected: measure.dim(),
            found: design.dim(),
        });
    }
    let b = kernel.b();
    let jn = design.num_blocks();
    let size = outputs * jn;
    let counting = CountingKernel::new(c);

    // Row (d, i): B[d][q] * sum_{x in [lambda^{qj}]} c(lambda^{di}, x) at column (q, j).
    let rows: Vec<Vec<f64>> = (0..size)
        .into_par_iter()
        .map(|row| {
            let (d, i) = (row / jn, row % jn);
            let rep = design.design(d).generator(i);
            let mut out = Vec::with_capacity(size);
            for q in 0..outputs {
                let xq = design.design(q);
                for j in 0..jn {
                    let mut acc = 0.0;
                    for x in xq.block_points(j) {
                        acc += counting.eval(rep, x);
                    }
                    out.push(b[(d, q)] * acc);
                }
            }
            out
        })
        .collect();
    let s = DMatrix::from_row_iterator(size, size, rows.into_iter().flatten());
    let lu = LuFactor::new(s, "multi-output fully symmetric system S")?;

    let mut generator_means = vec![0.0; size];
    for d in 0..outputs {
        for j in 0..jn {
            generator_means[d * jn + j] = c.kernel_mean(measure, design.design(d).generator(j))?;
        }
    }
    let rhs = DMatrix::from_fn(size, outputs, |row, e| b[(row / jn, e)] * generator_means[row]);
    let weights = lu.solve_mat(&rhs);
    let initial = c.initial_error(measure)?;

    let posterior_mean = apply_block_weights(design, &weights, f_values)?;

    let sizes = design.design(0).block_sizes();
    let mut cov = b * initial;
    for a in 0..outputs {
        for bb in 0..outputs {
            let mut acc = 0.0;
            for row in 0..size {
                let (d, j) = (row / jn, row % jn);
                acc += sizes[j] as f64 * b[(d, a)] * generator_means[row] * weights[(row, bb)];
            }
            cov[(a, bb)] -= acc;
        }
    }

    Ok(MultiOutputResult {
        posterior_mean,
        posterior_covariance: finish_covariance(cov, b, initial),
        weights: MultiWeights::Block(weights),
        diagnostics: MultiDiagnostics {
            system_dimension: size,
            condition_estimate: lu.condition_estimate,
            kernel_evaluations: counting.count(),
        },
    })
}

/// Whether the canonical form of `g` has three distinct non-zero entries, so
/// its fully symmetric set on `S^2` has 48 points.
fn is_generic(g: &GeneratorVector) -> bool {
    let v = g.values();
    v[2] > 1e-6 && v[0] - v[1] > 1e-6 && v[1] - v[2] > 1e-6
}

/// `D` designs on the unit sphere, each the union of `J` fully symmetric sets
/// of uniformly drawn unit vectors (48 points per block).
pub fn make_sphere_design(outputs: usize, blocks: usize, seed: u64) -> Result<MultiDesign> {
    if outputs == 0 || blocks == 0 {
        return Err(Error::InvalidInput("need at least one output and one block".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut designs = Vec::with_capacity(outputs);
    for _ in 0..outputs {
        let mut gens: Vec<GeneratorVector> = Vec::with_capacity(blocks);
        while gens.len() < blocks {
            let g = canonicalize(&sample_unit_sphere(&mut rng))?;
            if is_generic(&g) && !gens.iter().any(|h| h.same_orbit(&g)) {
                gens.push(g);
            }
        }
        designs.push(build_point_set(&gens)?);
    }
    MultiDesign::new(designs)
}

/// `B[d][q] = exp(w_d . w_q - 1)` for unit directions `w_d`.
pub fn direction_similarity_matrix(directions: &[[f64; 3]]) -> DMatrix<f64> {
    let n = directions.len();
    DMatrix::from_fn(n, n, |d, q| {
        let dot: f64 = directions[d].iter().zip(&directions[q]).map(|(a, b)| a * b).sum();
        (dot - 1.0).exp()
    })
}

/// Convenience constructor for `B c`.
pub fn separable(b: DMatrix<f64>, c: Arc<dyn Kernel>) -> Result<SeparableMatrixKernel> {
    SeparableMatrixKernel::new(b, c)
}
