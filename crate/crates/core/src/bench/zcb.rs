//! Zero coupon bond price under an Euler-Maruyama discretized Vasicek short rate.
//!
//! `r_i = a r_{i-1} + b + s eps_i` with `a = 1 - kappa dt`, `b = kappa theta dt`,
//! `s = sigma sqrt(dt)`, `eps_i ~ N(0, 1)` independent, `i = 1..T-1`. The
//! price `P(0, T) = E[exp(-dt sum_{i=0}^{T-1} r_i)]` is an integral over
//! `R^{T-1}` against the standard Gaussian once the rates are written as
//! `mean + L z`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::bayes_sard::{bsc_fss, PolynomialSpace};
use crate::bc::bc_fss;
use crate::bench::sparse_grid::sparse_grid_design;
use crate::error::{Error, Result};
use crate::kernel::GaussianKernel;
use crate::measure::Measure;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VasicekParameters {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub r0: f64,
    pub dt: f64,
}

impl Default for VasicekParameters {
    fn default() -> Self {
        VasicekParameters {
            kappa: 0.1817303,
            theta: 0.0825398957,
            sigma: 0.0125901,
            r0: 0.021673,
            dt: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZcbProblem {
    horizon: usize,
    params: VasicekParameters,
}

impl ZcbProblem {
    pub fn new(horizon: usize, params: VasicekParameters) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidInput(format!("horizon {horizon} must be at least 2")));
        }
        if !(params.dt > 0.0) || !(params.sigma >= 0.0) {
            return Err(Error::InvalidInput("need dt > 0 and sigma >= 0".into()));
        }
        Ok(ZcbProblem { horizon, params })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.horizon - 1
    }

    pub fn params(&self) -> &VasicekParameters {
        &self.params
    }

    /// Mean of `(r_1, ..., r_{T-1})` and the lower-triangular factor `L`
    /// with `L[i][k] = s a^(i-k)`.
    pub fn mean_and_factor(&self) -> (DVector<f64>, DMatrix<f64>) {
        let p = &self.params;
        let a = 1.0 - p.kappa * p.dt;
        let b = p.kappa * p.theta * p.dt;
        let s = p.sigma * p.dt.sqrt();
        let m = self.dim();
        let mut mean = DVector::zeros(m);
        let mut prev = p.r0;
        for i in 0..m {
            prev = a * prev + b;
            mean[i] = prev;
        }
        let factor = DMatrix::from_fn(m, m, |i, k| if k <= i { s * a.powi((i - k) as i32) } else { 0.0 });
        (mean, factor)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let (_, l) = self.mean_and_factor();
        &l * l.transpose()
    }

    /// `exp(-dt r0) exp(-dt 1'mu + dt^2 1'Sigma 1 / 2)`.
    pub fn reference(&self) -> f64 {
        let dt = self.params.dt;
        let (mean, _) = self.mean_and_factor();
        let cov = self.covariance();
        let total_var: f64 = cov.iter().sum();
        (-dt * self.params.r0 - dt * mean.sum() + 0.5 * dt * dt * total_var).exp()
    }

    /// The price integrand over `N(0, I_{T-1})`.
    pub fn integrand(&self) -> impl Fn(&[f64]) -> f64 + Send + Sync + Clone + 'static {
        let dt = self.params.dt;
        let (mean, l) = self.mean_and_factor();
        let offset = -dt * self.params.r0 - dt * mean.sum();
        // sum_i (L z)_i = sum_k z_k sum_i L[i][k]
        let loadings: Arc<Vec<f64>> = Arc::new(l.column_iter().map(|c| c.sum()).collect());
        move |z: &[f64]| {
            let mut acc = 0.0;
            for (zk, ck) in z.iter().zip(loadings.iter()) {
                acc += zk * ck;
            }
            (offset - dt * acc).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthScaleRule {
    /// `l = m`
    Dimension,
    /// `l = sqrt(m)`
    SqrtDimension,
}

impl LengthScaleRule {
    pub fn name(&self) -> &'static str {
        match self {
            LengthScaleRule::Dimension => "m",
            LengthScaleRule::SqrtDimension => "sqrt_m",
        }
    }

    pub fn value(&self, m: usize) -> f64 {
        match self {
            LengthScaleRule::Dimension => m as f64,
            LengthScaleRule::SqrtDimension => (m as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZcbMethod {
    Bc,
    /// Bayes-Sard with total degree `r`.
    Bsc(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZcbRow {
    pub horizon: usize,
    pub dim: usize,
    pub method: ZcbMethod,
    pub rule: LengthScaleRule,
    pub length_scale: f64,
    pub level: usize,
    pub n: usize,
    pub j: usize,
    pub estimate: f64,
    pub reference: f64,
    pub relative_error: f64,
    /// Sum of the expanded kernel weights.
    pub weight_sum: f64,
    pub status: String,
}

/// One row per `(T, length-scale rule, method)`, in that nesting order.
pub fn run_zcb(horizons: &[usize], level: usize, params: VasicekParameters, methods: &[ZcbMethod]) -> Result<Vec<ZcbRow>> {
    let rules = [LengthScaleRule::Dimension, LengthScaleRule::SqrtDimension];
    let mut rows = Vec::new();
    for &horizon in horizons {
        let problem = ZcbProblem::new(horizon, params)?;
        let m = problem.dim();
        let design = sparse_grid_design(m, level, false)?;
        let f = problem.integrand();
        let values: Vec<f64> = design.points().iter().map(&f).collect();
        let reference = problem.reference();
        let measure = Measure::standard_gaussian(m);
        for rule in rules {
            let length_scale = rule.value(m);
            let kernel = GaussianKernel::new(length_scale)?;
            for &method in methods {
                let outcome = match method {
                    ZcbMethod::Bc => bc_fss(&design, &kernel, &measure, &values)
                        .map(|r| (r.posterior_mean, r.weights.expanded(Some(&design)))),
                    ZcbMethod::Bsc(r) => PolynomialSpace::total_degree(m, r).and_then(|space| {
                        bsc_fss(&design, &kernel, &measure, &space, &values)
                            .map(|res| (res.posterior_mean, res.kernel_weights.expanded(Some(&design))))
                    }),
                };
                let (estimate, weight_sum, status) = match outcome {
                    Ok((mu, w)) => (mu, w.iter().sum::<f64>(), "ok".to_string()),
                    Err(e @ (Error::Factorization { .. } | Error::NotUnisolvent { .. })) => {
                        log::warn!("T = {horizon}, {method:?}: {e}");
                        (f64::NAN, f64::NAN, "numerical_failure".to_string())
                    }
                    Err(e) => return Err(e),
                };
                rows.push(ZcbRow {
                    horizon,
                    dim: m,
                    method,
                    rule,
                    length_scale,
                    level,
                    n: design.len(),
                    j: design.num_blocks(),
                    estimate,
                    reference,
                    relative_error: ((estimate - reference) / reference).abs(),
                    weight_sum,
                    status,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rate_is_lognormal() {
        let p = VasicekParameters::default();
        let problem = ZcbProblem::new(2, p).unwrap();
        let a = (1.0 - p.kappa * p.dt) * p.r0 + p.kappa * p.theta * p.dt;
        let b2 = p.sigma * p.sigma * p.dt;
        let expected = (-p.dt * p.r0).exp() * (-p.dt * a + p.dt * p.dt * b2 / 2.0).exp();
        assert!((problem.reference() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_volatility_is_deterministic_discounting() {
        let p = VasicekParameters { sigma: 0.0, ..Default::default() };
        let problem = ZcbProblem::new(6, p).unwrap();
        let (mean, _) = problem.mean_and_factor();
        let expected = (-p.dt * (p.r0 + mean.sum())).exp();
        assert!((problem.reference() - expected).abs() < 1e-15);
    }

    #[test]
    fn integrand_at_origin_follows_the_mean_path() {
        let p = VasicekParameters::default();
        let problem = ZcbProblem::new(5, p).unwrap();
        let (mean, _) = problem.mean_and_factor();
        let f = problem.integrand();
        let expected = (-p.dt * p.r0).exp() * (-p.dt * mean.sum()).exp();
        assert!((f(&[0.0; 4]) - expected).abs() < 1e-15);
        assert!(f(&[40.0, -40.0, 40.0, 40.0]) > 0.0);
    }

    #[test]
    fn bsc_with_constants_has_unit_weight_sum() {
        let rows = run_zcb(&[5], 2, VasicekParameters::default(), &[ZcbMethod::Bsc(1)]).unwrap();
        for r in rows {
            assert!((r.weight_sum - 1.0).abs() < 1e-10, "{}", r.weight_sum);
        }
    }
}
