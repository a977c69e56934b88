//! Seeded random configurations comparing every fast path with its naive
//! reference.
//!
//! Random Gaussian-kernel designs are redrawn until every pair of points is at
//! least `MIN_SEPARATION * l` apart. Without this, nearly coincident points
//! make the full kernel matrix so ill-conditioned that the two paths differ by
//! rounding alone.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::bayes_sard::{bsc_fss, bsc_naive, PolynomialSpace};
use crate::bc::{bc_fss, bc_naive, BcOptions, PriorMean};
use crate::error::{Error, Result};
use crate::fss::{build_point_set, GeneratorVector, Points, SymmetricPointSet};
use crate::kernel::{GaussianKernel, Kernel, SphereChordKernel};
use crate::measure::Measure;
use crate::mobc::{make_sphere_design, mobc_fss, mobc_naive, separable, MultiDesign};

pub const MIN_SEPARATION: f64 = 0.4;
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-8;
pub const ODD_WEIGHT_TOLERANCE: f64 = 1e-10;

/// One compared quantity. `error` is already normalized as the suite defines.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub case: usize,
    pub description: String,
    pub quantity: &'static str,
    pub naive: f64,
    pub fast: f64,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

pub fn test_integrand(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let s: f64 = x.iter().enumerate().map(|(i, v)| (0.7 - 0.2 * i as f64) * v).sum();
    0.5 + (-r2 / 8.0).exp() * (s + 0.3).cos()
}

fn min_separation(points: &Points) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            let d: f64 = points
                .get(i)
                .iter()
                .zip(points.get(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d.sqrt());
        }
    }
    best
}

/// `blocks` random generators in `dim` dimensions; each entry is zero with
/// probability 1/4, otherwise uniform on `[0.2 l, 1.6 l]`.
pub fn random_design<R: Rng>(rng: &mut R, dim: usize, blocks: usize, length_scale: f64) -> SymmetricPointSet {
    loop {
        let gens: Vec<GeneratorVector> = (0..blocks)
            .map(|_| {
                let v: Vec<f64> = (0..dim)
                    .map(|_| {
                        if rng.random::<f64>() < 0.25 {
                            0.0
                        } else {
                            length_scale * rng.random_range(0.2..1.6)
                        }
                    })
                    .collect();
                GeneratorVector::new(v).expect("finite")
            })
            .collect();
        if let Ok(design) = build_point_set(&gens) {
            if design.len() == 1 || min_separation(design.points()) >= MIN_SEPARATION * length_scale {
                return design;
            }
        }
    }
}

/// Like [`random_design`], with every generator having exactly `nonzero`
/// distinct non-zero entries, so all blocks have the same size.
pub fn random_equal_block_design<R: Rng>(rng: &mut R, dim: usize, blocks: usize, nonzero: usize, length_scale: f64) -> SymmetricPointSet {
    loop {
        let gens: Vec<GeneratorVector> = (0..blocks)
            .map(|_| {
                let mut v: Vec<f64> = (0..nonzero).map(|_| length_scale * rng.random_range(0.2..1.6)).collect();
                v.resize(dim, 0.0);
                GeneratorVector::new(v).expect("finite")
            })
            .collect();
        if let Ok(design) = build_point_set(&gens) {
            let sizes = design.block_sizes();
            if sizes.iter().all(|&s| s == sizes[0])
                && (design.len() == 1 || min_separation(design.points()) >= MIN_SEPARATION * length_scale)
            {
                return design;
            }
        }
    }
}

fn relative(naive: f64, fast: f64) -> f64 {
    (naive - fast).abs() / (1.0 + naive.abs())
}

fn gaussian_case<R: Rng>(rng: &mut R) -> (usize, usize, f64) {
    (rng.random_range(2..=3), rng.random_range(1..=4), rng.random_range(0.5..3.0))
}

pub fn bc_equivalence(cases: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for case in 0..cases {
        let (m, jn, l) = gaussian_case(&mut rng);
        let design = random_design(&mut rng, m, jn, l);
        let kernel = GaussianKernel::new(l)?;
        let measure = Measure::standard_gaussian(m);
        let f: Vec<f64> = design.points().iter().map(test_integrand).collect();
        let naive = bc_naive(design.points(), &kernel, &measure, &f, PriorMean::Zero, BcOptions::default())?;
        let fast = bc_fss(&design, &kernel, &measure, &f)?;
        let description = format!("m={m} J={jn} N={} l={l:.4}", design.len());
        for (quantity, a, b) in [
            ("mean", naive.posterior_mean, fast.posterior_mean),
            ("variance", naive.diagnostics.raw_variance, fast.diagnostics.raw_variance),
        ] {
            checks.push(Check {
                suite: "bc",
                case,
                description: description.clone(),
                quantity,
                naive: a,
                fast: b,
                error: relative(a, b),
                tolerance: EQUIVALENCE_TOLERANCE,
            });
        }
    }
    Ok(checks)
}

pub fn bsc_equivalence(cases: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut case = 0;
    while case < cases {
        let (m, jn, l) = gaussian_case(&mut rng);
        let jn = jn.max(2);
        let degree = rng.random_range(0..=2u32);
        let design = random_design(&mut rng, m, jn, l);
        let space = PolynomialSpace::total_degree(m, degree)?;
        let kernel = GaussianKernel::new(l)?;
        let measure = Measure::standard_gaussian(m);
        let f: Vec<f64> = design.points().iter().map(test_integrand).collect();
        let naive = match bsc_naive(design.points(), &kernel, &measure, &space, &f) {
            Ok(r) => r,
            Err(Error::InfeasibleSpace { .. } | Error::NotUnisolvent { .. }) => continue,
            Err(e) => return Err(e),
        };
        let fast = bsc_fss(&design, &kernel, &measure, &space, &f)?;
        let description = format!("m={m} J={jn} N={} l={l:.4} r={degree}", design.len());
        let wn = naive.kernel_weights.expanded(None);
        let wf = fast.kernel_weights.expanded(Some(&design));
        let scale = wn.iter().fold(0.0f64, |a, w| a.max(w.abs()));
        let weight_error = wn.iter().zip(&wf).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / scale.max(f64::MIN_POSITIVE);
        let mut odd_max = 0.0f64;
        let mut q = 0;
        for block in space.blocks() {
            for _ in 0..block.len() {
                if !block.is_even() {
                    odd_max = odd_max.max(naive.polynomial_weights[q].abs());
                }
                q += 1;
            }
        }
        let mut push = |quantity, naive_v: f64, fast_v: f64, error: f64, tolerance: f64| {
            checks.push(Check {
                suite: "bsc",
                case,
                description: description.clone(),
                quantity,
                naive: naive_v,
                fast: fast_v,
                error,
                tolerance,
            })
        };
        push("mean", naive.posterior_mean, fast.posterior_mean, relative(naive.posterior_mean, fast.posterior_mean), EQUIVALENCE_TOLERANCE);
        push(
            "variance",
            naive.diagnostics.raw_variance,
            fast.diagnostics.raw_variance,
            relative(naive.diagnostics.raw_variance, fast.diagnostics.raw_variance),
            EQUIVALENCE_TOLERANCE,
        );
        push("kernel_weights", scale, scale, weight_error, EQUIVALENCE_TOLERANCE);
        push("odd_polynomial_weights", odd_max, 0.0, odd_max, ODD_WEIGHT_TOLERANCE);
        case += 1;
    }
    Ok(checks)
}

/// A random symmetric positive-definite `D x D` output covariance.
pub fn random_output_covariance<R: Rng>(rng: &mut R, outputs: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(outputs, outputs, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&a * a.transpose()) / outputs as f64 + DMatrix::identity(outputs, outputs) * 0.5
}

/// Per-output Gaussian-kernel designs with block `j` of every output having
/// the same number of distinct non-zero entries.
pub fn random_multi_design<R: Rng>(rng: &mut R, outputs: usize, dim: usize, blocks: usize, length_scale: f64) -> MultiDesign {
    let nonzero: Vec<usize> = (0..blocks).map(|_| rng.random_range(1..=dim)).collect();
    loop {
        let mut designs = Vec::with_capacity(outputs);
        for _ in 0..outputs {
            let design = loop {
                let gens: Vec<GeneratorVector> = nonzero
                    .iter()
                    .map(|&k| {
                        let mut v: Vec<f64> = (0..k).map(|_| length_scale * rng.random_range(0.2..1.6)).collect();
                        v.resize(dim, 0.0);
                        GeneratorVector::new(v).expect("finite")
                    })
                    .collect();
                if let Ok(d) = build_point_set(&gens) {
                    if min_separation(d.points()) >= MIN_SEPARATION * length_scale {
                        break d;
                    }
                }
            };
            designs.push(design);
        }
        // Near-ties inside a generator can still merge entries and change a block size.
        if let Ok(multi) = MultiDesign::new(designs) {
            return multi;
        }
    }
}

pub fn mobc_equivalence(cases: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    const OUTPUTS: [usize; 4] = [1, 2, 3, 5];
    for case in 0..cases {
        let outputs = OUTPUTS[case % OUTPUTS.len()];
        let blocks = rng.random_range(1..=3);
        let b = random_output_covariance(&mut rng, outputs);
        let (design, kernel, measure, description): (MultiDesign, Arc<dyn Kernel>, Measure, String) = if case % 2 == 0 {
            let design = make_sphere_design(outputs, blocks, rng.random())?;
            (design, Arc::new(SphereChordKernel), Measure::UniformSphere, format!("sphere D={outputs} J={blocks}"))
        } else {
            let m = rng.random_range(2..=3);
            let l = rng.random_range(0.5..3.0);
            let design = random_multi_design(&mut rng, outputs, m, blocks, l);
            (
                design,
                Arc::new(GaussianKernel::new(l)?),
                Measure::standard_gaussian(m),
                format!("gaussian m={m} D={outputs} J={blocks} l={l:.4}"),
            )
        };
        let kernel = separable(b, kernel)?;
        let f: Vec<Vec<f64>> = (0..outputs)
            .map(|d| {
                design
                    .design(d)
                    .points()
                    .iter()
                    .map(|x| test_integrand(x) * (1.0 + 0.1 * d as f64))
                    .collect()
            })
            .collect();
        let naive = mobc_naive(&design.point_sets(), &kernel, &measure, &f)?;
        let fast = mobc_fss(&design, &kernel, &measure, &f)?;
        for d in 0..outputs {
            let (a, b) = (naive.posterior_mean[d], fast.posterior_mean[d]);
            checks.push(Check {
                suite: "mobc",
                case,
                description: description.clone(),
                quantity: "mean",
                naive: a,
                fast: b,
                error: relative(a, b),
                tolerance: EQUIVALENCE_TOLERANCE,
            });
        }
        let norm = naive.posterior_covariance.norm();
        checks.push(Check {
            suite: "mobc",
            case,
            description,
            quantity: "covariance",
            naive: norm,
            fast: fast.posterior_covariance.norm(),
            error: (&naive.posterior_covariance - &fast.posterior_covariance).norm() / norm.max(f64::MIN_POSITIVE),
            tolerance: EQUIVALENCE_TOLERANCE,
        });
    }
    Ok(checks)
}

/// All three suites with seeds derived from `seed`.
pub fn run_selftest(cases: usize, seed: u64) -> Result<Vec<Check>> {
    let mut checks = bc_equivalence(cases, seed)?;
    checks.extend(bsc_equivalence(cases, seed.wrapping_add(1))?);
    checks.extend(mobc_equivalence(cases, seed.wrapping_add(2))?);
    Ok(checks)
}
