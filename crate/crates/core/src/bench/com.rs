//! Symmetric change of measure on an 8-dimensional Gaussian example.
//!
//! The integrand `f(x) = exp(-(x - mu_f)' Sigma_f^{-1} (x - mu_f) / 2)` is
//! integrated against the non-symmetric `N(mu_nu, Sigma_nu)`. The rule works
//! against `N(0, I)` on `f(x) p_nu(x) / p_ref(x)`. The exact value is
//! `(2 pi)^(m/2) |Sigma_f|^(1/2) N(mu_f; mu_nu, Sigma_f + Sigma_nu)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::bc::bc_fss;
use crate::bench::sparse_grid::sparse_grid_design;
use crate::error::{Error, Result};
use crate::kernel::GaussianKernel;
use crate::measure::{change_of_measure, GaussianMeasure, Measure};

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeOfMeasureProblem {
    pub mu_f: DVector<f64>,
    pub sigma_f: DMatrix<f64>,
    pub mu_nu: DVector<f64>,
    pub sigma_nu: DMatrix<f64>,
}

impl ChangeOfMeasureProblem {
    /// The standard 8-dimensional configuration.
    pub fn standard() -> Self {
        let mu_f = DVector::from_fn(8, |i, _| 0.2 + 3.0 * i as f64 / 70.0);
        let mu_nu = DVector::from_fn(8, |i, _| 0.1 + 9.0 * i as f64 / 70.0);
        let sigma_f = DMatrix::from_fn(8, 8, |i, j| {
            if i != j {
                0.0
            } else if i < 4 {
                0.8 * 0.8
            } else {
                1.1 * 1.1
            }
        });
        let mut sigma_nu = DMatrix::from_fn(8, 8, |i, j| {
            if i != j {
                0.0
            } else if i < 4 {
                0.5
            } else {
                0.75
            }
        });
        sigma_nu[(0, 3)] = 0.15;
        sigma_nu[(3, 0)] = 0.15;
        sigma_nu[(1, 6)] = 0.25;
        sigma_nu[(6, 1)] = 0.25;
        ChangeOfMeasureProblem {
            mu_f,
            sigma_f,
            mu_nu,
            sigma_nu,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu_f.len()
    }

    pub fn target(&self) -> Result<Measure> {
        Ok(Measure::Gaussian(GaussianMeasure::new(
            self.mu_nu.clone(),
            self.sigma_nu.clone(),
        )?))
    }

    pub fn integrand(&self) -> Result<impl Fn(&[f64]) -> f64 + Send + Sync + Clone + 'static> {
        let chol = self
            .sigma_f
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("Sigma_f is not positive definite".into()))?;
        let l = chol.l();
        let mu = self.mu_f.clone();
        Ok(move |x: &[f64]| {
            let r = DVector::from_fn(mu.len(), |i, _| x[i] - mu[i]);
            let z = l.solve_lower_triangular(&r).expect("non-singular factor");
            (-0.5 * z.norm_squared()).exp()
        })
    }

    /// Closed form through the Gaussian product identity.
    pub fn reference(&self) -> Result<f64> {
        let m = self.dim() as f64;
        let det_f = self.sigma_f.determinant();
        let joint = GaussianMeasure::new(self.mu_nu.clone(), &self.sigma_f + &self.sigma_nu)?;
        let log_density = joint.log_density(self.mu_f.as_slice())?;
        Ok((0.5 * m * (2.0 * PI).ln() + 0.5 * det_f.ln() + log_density).exp())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComRow {
    pub level: usize,
    pub n: usize,
    pub j: usize,
    pub estimate: f64,
    pub reference: f64,
    pub relative_error: f64,
    pub max_density_ratio: f64,
}

pub fn run_change_of_measure(problem: &ChangeOfMeasureProblem, levels: &[usize], length_scale: f64) -> Result<Vec<ComRow>> {
    let m = problem.dim();
    let reference_measure = Measure::standard_gaussian(m);
    let transformed = change_of_measure(problem.integrand()?, problem.target()?, reference_measure.clone())?;
    let kernel = GaussianKernel::new(length_scale)?;
    let reference = problem.reference()?;
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let design = sparse_grid_design(m, level, false)?;
        let values = transformed.evaluate(design.points())?;
        let mut max_ratio: f64 = 0.0;
        for x in design.points().iter() {
            let ratio = transformed.density_ratio(x)?;
            if !ratio.is_finite() {
                return Err(Error::AbsoluteContinuity { target_density: ratio });
            }
            max_ratio = max_ratio.max(ratio);
        }
        let result = bc_fss(&design, &kernel, &reference_measure, &values)?;
        rows.push(ComRow {
            level,
            n: design.len(),
            j: design.num_blocks(),
            estimate: result.posterior_mean,
            reference,
            relative_error: ((result.posterior_mean - reference) / reference).abs(),
            max_density_ratio: max_ratio,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_valid() {
        let p = ChangeOfMeasureProblem::standard();
        assert!((p.mu_f[7] - 0.5).abs() < 1e-15);
        assert!((p.mu_nu[7] - 1.0).abs() < 1e-15);
        assert!(p.target().is_ok());
    }

    #[test]
    fn integrand_peaks_at_its_centre() {
        let p = ChangeOfMeasureProblem::standard();
        let f = p.integrand().unwrap();
        assert!((f(p.mu_f.as_slice()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reference_in_one_dimension() {
        // f = exp(-x^2 / 2) against N(0, 1) integrates to 1 / sqrt(2).
        let p = ChangeOfMeasureProblem {
            mu_f: DVector::from_element(1, 0.0),
            sigma_f: DMatrix::identity(1, 1),
            mu_nu: DVector::from_element(1, 0.0),
            sigma_nu: DMatrix::identity(1, 1),
        };
        assert!((p.reference().unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
