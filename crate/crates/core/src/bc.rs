//! Standard Bayesian cubature.
//!
//! [`bc_naive`] solves the full `N x N` kernel system. [`bc_fss`] works on a
//! union of `J` fully symmetric sets: points of one block share a weight, and
//! the weights solve the `J x J` system `S w = k_nu(Lambda)` with
//! `S[i][j] = sum_{x in block j} k(lambda_i, x)`. For a fully symmetric kernel
//! and measure the two agree exactly.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fss::{Points, SymmetricPointSet};
use crate::kernel::{CountingKernel, Kernel};
use crate::measure::Measure;
use crate::numeric::{LuFactor, SpdFactor};

/// Relative tolerance below which a negative posterior variance is treated as
/// rounding noise.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// Size of the linear system actually solved.
    pub system_dimension: usize,
    pub condition_estimate: f64,
    pub jitter_used: f64,
    pub kernel_evaluations: u64,
    /// Variance before clamping at zero.
    pub raw_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    PerPoint(Vec<f64>),
    PerBlock(Vec<f64>),
}

impl Weights {
    /// One weight per point, expanding block weights over `design` if needed.
    pub fn expanded(&self, design: Option<&SymmetricPointSet>) -> Vec<f64> {
        match self {
            Weights::PerPoint(w) => w.clone(),
            Weights::PerBlock(w) => design
                .expect("block weights need the design to expand")
                .expand_block_values(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubatureResult {
    pub posterior_mean: f64,
    pub posterior_variance: f64,
    pub weights: Weights,
    pub diagnostics: Diagnostics,
}

impl CubatureResult {
    pub fn posterior_sd(&self) -> f64 {
        self.posterior_variance.sqrt()
    }
}

pub(crate) fn clamp_variance(raw: f64, scale: f64) -> f64 {
    if raw >= 0.0 {
        return raw;
    }
    if raw < -VARIANCE_TOLERANCE * scale.max(1.0) {
        log::warn!("posterior variance {raw:e} is negative beyond tolerance; clamped to 0");
    }
    0.0
}

/// A deterministic integrand that counts its evaluations.
pub struct Integrand {
    f: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    count: AtomicU64,
}

impl Integrand {
    pub fn new<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Integrand {
            f: Box::new(f),
            count: AtomicU64::new(0),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        (self.f)(x)
    }

    /// Values at every point, in point order.
    pub fn evaluate(&self, points: &Points) -> Vec<f64> {
        let flat = points.as_flat();
        flat.par_chunks_exact(points.dim())
            .map(|x| self.eval(x))
            .collect()
    }

    pub fn evaluations(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

/// Prior mean function of the integrand with its integral `I(m)`.
#[derive(Clone, Copy)]
pub enum PriorMean<'a> {
    Zero,
    /// Constant function; `I(c) = c` for probability measures.
    Constant(f64),
    Function {
        f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
        integral: f64,
    },
}

impl PriorMean<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Constant(c) => *c,
            PriorMean::Function { f, .. } => f(x),
        }
    }

    fn integral(&self) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Constant(c) => *c,
            PriorMean::Function { integral, .. } => *integral,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BcOptions {
    /// Diagonal jitter added to the full kernel matrix. Never applied to `S`.
    pub jitter: f64,
}

/// Full kernel matrix, assembled column by column in parallel.
pub fn kernel_matrix(points: &Points, k: &dyn Kernel) -> DMatrix<f64> {
    let n = points.len();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let xj = points.get(j);
            points.iter().map(|xi| k.eval(xi, xj)).collect()
        })
        .collect();
    DMatrix::from_iterator(n, n, columns.into_iter().flatten())
}

pub fn kernel_mean_vector(points: &Points, k: &dyn Kernel, measure: &Measure) -> Result<DVector<f64>> {
    let values: Result<Vec<f64>> = points.iter().map(|x| k.kernel_mean(measure, x)).collect();
    Ok(DVector::from_vec(values?))
}

fn check_values(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_dims(points_dim: usize, measure: &Measure) -> Result<()> {
    if points_dim != measure.dim() {
        return Err(Error::DimensionMismatch {
            expected: measure.dim(),
            found: points_dim,
        });
    }
    Ok(())
}

/// Reference implementation on an arbitrary set of distinct points.
pub fn bc_naive(
    points: &Points,
    k: &dyn Kernel,
    measure: &Measure,
    f_values: &[f64],
    prior_mean: PriorMean<'_>,
    options: BcOptions,
) -> Result<CubatureResult> {
    check_dims(points.dim(), measure)?;
    check_values(points.len(), f_values.len())?;
    if points.is_empty() {
        return Err(Error::InvalidInput("point set is empty".into()));
    }
    let counting = CountingKernel::new(k);
    let mut gram = kernel_matrix(points, &counting);
    if options.jitter != 0.0 {
        for i in 0..gram.nrows() {
            gram[(i, i)] += options.jitter;
        }
    }
    let factor = SpdFactor::new(gram, "kernel matrix K_X")?;
    let kernel_means = kernel_mean_vector(points, k, measure)?;
    let initial_error = k.initial_error(measure)?;
    let weights = factor.solve_vec(&kernel_means);

    let residual = DVector::from_iterator(
        points.len(),
        points.iter().zip(f_values).map(|(x, &f)| f - prior_mean.eval(x)),
    );
    let posterior_mean = prior_mean.integral() + weights.dot(&residual);
    let raw_variance = initial_error - weights.dot(&kernel_means);

    Ok(CubatureResult {
        posterior_mean,
        posterior_variance: clamp_variance(raw_variance, initial_error),
        weights: Weights::PerPoint(weights.iter().copied().collect()),
        diagnostics: Diagnostics {
            system_dimension: points.len(),
            condition_estimate: factor.condition_estimate,
            jitter_used: options.jitter,
            kernel_evaluations: counting.count(),
            raw_variance,
        },
    })
}

/// `S[i][j] = sum_{x in block j} k(lambda_i, x)`, summed in block order.
/// Uses `J N` kernel evaluations.
pub fn build_s(design: &SymmetricPointSet, k: &dyn Kernel) -> DMatrix<f64> {
    let jn = design.num_blocks();
    let rows: Vec<Vec<f64>> = (0..jn)
        .into_par_iter()
        .map(|i| {
            let rep = design.generator(i);
            (0..jn)
                .map(|j| {
                    let mut acc = 0.0;
                    for x in design.block_points(j) {
                        acc += k.eval(rep, x);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    DMatrix::from_row_iterator(jn, jn, rows.into_iter().flatten())
}

pub(crate) fn require_symmetric(k: &dyn Kernel, measure: &Measure) -> Result<()> {
    if !k.is_fully_symmetric() {
        return Err(Error::Precondition(format!(
            "kernel {} is not fully symmetric",
            k.name()
        )));
    }
    if !measure.is_fully_symmetric() {
        return Err(Error::Precondition(format!(
            "measure {} is not fully symmetric; apply a symmetric change of measure first",
            measure.name()
        )));
    }
    Ok(())
}

/// The factorized reduced system shared by the standard and Bayes-Sard fast paths.
pub(crate) struct ReducedSystem {
    pub s: DMatrix<f64>,
    pub lu: LuFactor,
    /// `k_nu(lambda_j)`.
    pub kernel_means: DVector<f64>,
    pub weights: DVector<f64>,
    pub initial_error: f64,
    pub kernel_evaluations: u64,
}

impl ReducedSystem {
    pub fn new(design: &SymmetricPointSet, k: &dyn Kernel, measure: &Measure) -> Result<Self> {
        require_symmetric(k, measure)?;
        check_dims(design.dim(), measure)?;
        let counting = CountingKernel::new(k);
        let s = build_s(design, &counting);
        let kernel_evaluations = counting.count();
        let kernel_means = DVector::from_vec(
            design
                .generators()
                .iter()
                .map(|g| k.kernel_mean(measure, g.values()))
                .collect::<Result<Vec<f64>>>()?,
        );
        let initial_error = k.initial_error(measure)?;
        let lu = LuFactor::new(s.clone(), "fully symmetric system S")?;
        let weights = lu.solve_vec(&kernel_means);
        Ok(ReducedSystem {
            s,
            lu,
            kernel_means,
            weights,
            initial_error,
            kernel_evaluations,
        })
    }

    /// `sum_j w_j k_nu(lambda_j) #[lambda_j]`, i.e. `k_nu^T K^{-1} k_nu`.
    pub fn explained_variance(&self, design: &SymmetricPointSet) -> f64 {
        (0..design.num_blocks())
            .map(|j| self.weights[j] * self.kernel_means[j] * design.block_size(j) as f64)
            .sum()
    }
}

/// Fully symmetric fast path with zero prior mean.
pub fn bc_fss(
    design: &SymmetricPointSet,
    k: &dyn Kernel,
    measure: &Measure,
    f_values: &[f64],
) -> Result<CubatureResult> {
    check_values(design.len(), f_values.len())?;
    let system = ReducedSystem::new(design, k, measure)?;
    let sums = design.block_sums(f_values)?;
    let posterior_mean: f64 = system.weights.iter().zip(&sums).map(|(w, s)| w * s).sum();
    let raw_variance = system.initial_error - system.explained_variance(design);
    Ok(CubatureResult {
        posterior_mean,
        posterior_variance: clamp_variance(raw_variance, system.initial_error),
        weights: Weights::PerBlock(system.weights.iter().copied().collect()),
        diagnostics: Diagnostics {
            system_dimension: design.num_blocks(),
            condition_estimate: system.lu.condition_estimate,
            jitter_used: 0.0,
            kernel_evaluations: system.kernel_evaluations,
            raw_variance,
        },
    })
}
