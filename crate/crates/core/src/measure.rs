//! Integration measures and the symmetric change of measure.
//!
//! A non-symmetric target `nu` is handled by integrating
//! `f(x) * p_nu(x) / p_ref(x)` against a fully symmetric reference measure
//! `p_ref`. The density ratio is formed in log space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fss::Points;
use crate::numeric::gaussian_moment;

const SPHERE_TOLERANCE: f64 = 1e-9;

/// A Gaussian measure `N(mean, cov)` on `R^m`.
#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    log_normalizer: f64,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if m == 0 {
            return Err(Error::InvalidInput("Gaussian measure has dimension 0".into()));
        }
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: cov.nrows(),
            });
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(Error::InvalidInput("covariance matrix is not symmetric".into()));
        }
        let chol = cov.clone().cholesky().ok_or_else(|| {
            Error::InvalidInput("covariance matrix is not positive definite".into())
        })?;
        let chol_lower = chol.l();
        let log_det: f64 = chol_lower.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let log_normalizer = -0.5 * (m as f64 * (2.0 * PI).ln() + log_det);
        Ok(GaussianMeasure {
            mean,
            cov,
            chol_lower,
            log_normalizer,
        })
    }

    pub fn standard(m: usize) -> Self {
        Self::isotropic(m, 1.0).expect("unit variance is valid")
    }

    /// `N(0, variance * I_m)`.
    pub fn isotropic(m: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidInput(format!("variance {variance} must be positive")));
        }
        Self::new(DVector::zeros(m), DMatrix::identity(m, m) * variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.chol_lower
    }

    /// `Some(s2)` iff the measure is exactly `N(0, s2 I)`.
    pub fn isotropic_variance(&self) -> Option<f64> {
        let m = self.dim();
        if self.mean.iter().any(|&v| v != 0.0) {
            return None;
        }
        let s2 = self.cov[(0, 0)];
        for i in 0..m {
            for j in 0..m {
                let expected = if i == j { s2 } else { 0.0 };
                if self.cov[(i, j)] != expected {
                    return None;
                }
            }
        }
        Some(s2)
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let diff = DVector::from_column_slice(x) - &self.mean;
        let z = self
            .chol_lower
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        Ok(self.log_normalizer - 0.5 * z.norm_squared())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample(StandardNormal)));
        (&self.mean + &self.chol_lower * z).iter().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub enum Measure {
    Gaussian(GaussianMeasure),
    /// Normalized Lebesgue measure on `[-half_width, half_width]^dim`.
    UniformCube { dim: usize, half_width: f64 },
    /// Normalized surface measure on the unit sphere in `R^3`.
    UniformSphere,
}

impl Measure {
    pub fn standard_gaussian(m: usize) -> Self {
        Measure::Gaussian(GaussianMeasure::standard(m))
    }

    pub fn uniform_cube(dim: usize, half_width: f64) -> Result<Self> {
        if dim == 0 || !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "invalid hypercube: dim {dim}, half width {half_width}"
            )));
        }
        Ok(Measure::UniformCube { dim, half_width })
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Gaussian(g) => g.dim(),
            Measure::UniformCube { dim, .. } => *dim,
            Measure::UniformSphere => 3,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Measure::Gaussian(g) => match g.isotropic_variance() {
                Some(s2) => format!("gaussian N(0, {s2} I_{})", g.dim()),
                None => format!("gaussian (general, dim {})", g.dim()),
            },
            Measure::UniformCube { dim, half_width } => {
                format!("uniform_cube [-{half_width}, {half_width}]^{dim}")
            }
            Measure::UniformSphere => "uniform_sphere S^2".to_string(),
        }
    }

    /// Density invariant under signed permutations of the coordinates.
    pub fn is_fully_symmetric(&self) -> bool {
        match self {
            Measure::Gaussian(g) => g.isotropic_variance().is_some(),
            Measure::UniformCube { .. } | Measure::UniformSphere => true,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Log density, `-inf` off the support. Sphere densities are with respect
    /// to surface area.
    fn log_density_or_neg_inf(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            Measure::Gaussian(g) => g.log_density(x)?,
            Measure::UniformCube { dim, half_width } => {
                if x.iter().all(|v| v.abs() <= *half_width) {
                    -(*dim as f64) * (2.0 * half_width).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Measure::UniformSphere => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (r - 1.0).abs() <= SPHERE_TOLERANCE {
                    -(4.0 * PI).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        })
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let v = self.log_density_or_neg_inf(x)?;
        if v == f64::NEG_INFINITY {
            return Err(Error::OutsideDomain(self.name()));
        }
        Ok(v)
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        Ok(self.log_density(x)?.exp())
    }

    /// `I(x^alpha)`; supported for `N(0, s2 I)` and the symmetric hypercube.
    pub fn polynomial_integral(&self, alpha: &[u32]) -> Result<f64> {
        if alpha.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: alpha.len(),
            });
        }
        if alpha.iter().any(|a| a % 2 == 1) {
            if let Measure::Gaussian(g) = self {
                if g.isotropic_variance().is_none() {
                    return Err(self.unsupported_moments());
                }
            }
            return Ok(0.0);
        }
        // sorted so the product does not depend on coordinate order
        let mut sorted = alpha.to_vec();
        sorted.sort_unstable();
        match self {
            Measure::Gaussian(g) => {
                let s2 = g.isotropic_variance().ok_or_else(|| self.unsupported_moments())?;
                let s = s2.sqrt();
                Ok(sorted
                    .iter()
                    .map(|&a| s.powi(a as i32) * gaussian_moment(a))
                    .product())
            }
            Measure::UniformCube { half_width, .. } => Ok(sorted
                .iter()
                .map(|&a| half_width.powi(a as i32) / (a as f64 + 1.0))
                .product()),
            // prod (a_i - 1)!! / (|a| + 1)!! on S^2
            Measure::UniformSphere => {
                let total: u32 = sorted.iter().sum();
                let numerator: f64 = sorted.iter().map(|&a| gaussian_moment(a)).product();
                Ok(numerator / gaussian_moment(total + 2))
            }
        }
    }

    fn unsupported_moments(&self) -> Error {
        Error::NotImplemented {
            kernel: "monomial".into(),
            measure: self.name(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Measure::Gaussian(g) => g.sample(rng),
            Measure::UniformCube { dim, half_width } => (0..*dim)
                .map(|_| rng.random_range(-*half_width..=*half_width))
                .collect(),
            Measure::UniformSphere => sample_unit_sphere(rng),
        }
    }

    /// Whether every point of positive density under `self` also has positive
    /// density under `other`, judged from the domain types alone.
    fn support_within(&self, other: &Measure) -> bool {
        match (self, other) {
            (Measure::Gaussian(_), Measure::Gaussian(_)) => true,
            (Measure::UniformCube { .. }, Measure::Gaussian(_)) => true,
            (
                Measure::UniformCube { half_width: a, .. },
                Measure::UniformCube { half_width: b, .. },
            ) => a <= b,
            (Measure::UniformSphere, Measure::UniformSphere) => true,
            _ => false,
        }
    }
}

/// A uniformly distributed unit vector in `R^3` (normalized Gaussian triple).
pub fn sample_unit_sphere<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

/// `f*(x) = f(x) p_nu(x) / p_ref(x)`, to be integrated against the fully
/// symmetric `reference` measure.
pub struct TransformedIntegrand<F> {
    base: F,
    target: Measure,
    reference: Measure,
}

pub fn change_of_measure<F>(base: F, target: Measure, reference: Measure) -> Result<TransformedIntegrand<F>>
where
    F: Fn(&[f64]) -> f64,
{
    if !reference.is_fully_symmetric() {
        return Err(Error::Precondition(format!(
            "reference measure {} is not fully symmetric",
            reference.name()
        )));
    }
    if target.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            found: target.dim(),
        });
    }
    if !target.support_within(&reference) {
        return Err(Error::Precondition(format!(
            "{} is not absolutely continuous with respect to {}",
            target.name(),
            reference.name()
        )));
    }
    Ok(TransformedIntegrand {
        base,
        target,
        reference,
    })
}

impl<F: Fn(&[f64]) -> f64> TransformedIntegrand<F> {
    pub fn target(&self) -> &Measure {
        &self.target
    }

    pub fn reference(&self) -> &Measure {
        &self.reference
    }

    /// Radon-Nikodym derivative `p_nu(x) / p_ref(x)`.
    pub fn density_ratio(&self, x: &[f64]) -> Result<f64> {
        let log_target = self.target.log_density_or_neg_inf(x)?;
        if log_target == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let log_reference = self.reference.log_density_or_neg_inf(x)?;
        if log_reference == f64::NEG_INFINITY {
            return Err(Error::AbsoluteContinuity {
                target_density: log_target.exp(),
            });
        }
        Ok((log_target - log_reference).exp())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let ratio = self.density_ratio(x)?;
        if ratio == 0.0 {
            return Ok(0.0);
        }
        Ok((self.base)(x) * ratio)
    }

    pub fn evaluate(&self, points: &Points) -> Result<Vec<f64>> {
        points.iter().map(|x| self.eval(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn gaussian_density_examples() {
        let g2 = Measure::standard_gaussian(2);
        assert!((g2.density(&[0.0, 0.0]).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let g1 = Measure::standard_gaussian(1);
        let expected = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!((g1.density(&[1.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn sphere_density_is_constant() {
        let s = Measure::UniformSphere;
        assert!((s.density(&[0.0, 0.0, 1.0]).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        let r = 1.0 / 3f64.sqrt();
        assert!((s.density(&[r, -r, r]).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!(matches!(s.density(&[0.0, 0.0, 2.0]), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn cube_density() {
        let c = Measure::uniform_cube(2, 0.5).unwrap();
        assert_eq!(c.density(&[0.1, -0.5]).unwrap(), 1.0);
        assert!(c.density(&[0.6, 0.0]).is_err());
        assert!(Measure::uniform_cube(2, -1.0).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let g = Measure::standard_gaussian(2);
        assert_eq!(g.polynomial_integral(&[2, 0]).unwrap(), 1.0);
        assert_eq!(g.polynomial_integral(&[1, 1]).unwrap(), 0.0);
        assert_eq!(g.polynomial_integral(&[4, 2]).unwrap(), 3.0);
        let g = Measure::Gaussian(GaussianMeasure::isotropic(1, 4.0).unwrap());
        assert_eq!(g.polynomial_integral(&[2]).unwrap(), 4.0);
        assert_eq!(g.polynomial_integral(&[4]).unwrap(), 48.0);
    }

    #[test]
    fn cube_moments() {
        let c = Measure::uniform_cube(2, 2.0).unwrap();
        assert_eq!(c.polynomial_integral(&[0, 0]).unwrap(), 1.0);
        assert!((c.polynomial_integral(&[2, 0]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.polynomial_integral(&[3, 0]).unwrap(), 0.0);
    }

    #[test]
    fn unsupported_moments() {
        assert_eq!(Measure::UniformSphere.polynomial_integral(&[1, 2, 0]).unwrap(), 0.0);
        let g = GaussianMeasure::new(DVector::from_vec(vec![1.0]), DMatrix::identity(1, 1)).unwrap();
        assert!(matches!(
            Measure::Gaussian(g).polynomial_integral(&[2]),
            Err(Error::NotImplemented { .. })
        ));
    }

    #[test]
    fn full_symmetry_flags() {
        assert!(Measure::standard_gaussian(3).is_fully_symmetric());
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let g = GaussianMeasure::new(DVector::zeros(2), cov).unwrap();
        assert!(!Measure::Gaussian(g).is_fully_symmetric());
        let g = GaussianMeasure::new(DVector::from_vec(vec![0.0, 0.1]), DMatrix::identity(2, 2)).unwrap();
        assert!(!Measure::Gaussian(g).is_fully_symmetric());
    }

    #[test]
    fn rejects_bad_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianMeasure::new(DVector::zeros(2), cov).is_err());
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(GaussianMeasure::new(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn identity_change_of_measure() {
        let f = |x: &[f64]| x[0].sin() + 2.0;
        let t = change_of_measure(f, Measure::standard_gaussian(2), Measure::standard_gaussian(2)).unwrap();
        for x in [[0.3, -1.2], [2.0, 0.0], [-4.0, 5.0]] {
            assert!((t.density_ratio(&x).unwrap() - 1.0).abs() < 1e-14);
            assert!((t.eval(&x).unwrap() - f(&x)).abs() < 1e-14);
        }
    }

    #[test]
    fn change_of_measure_preconditions() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let skew = Measure::Gaussian(GaussianMeasure::new(DVector::zeros(2), cov).unwrap());
        let f = |_: &[f64]| 1.0;
        assert!(matches!(
            change_of_measure(f, Measure::standard_gaussian(2), skew.clone()),
            Err(Error::Precondition(_))
        ));
        assert!(change_of_measure(f, Measure::standard_gaussian(2), Measure::uniform_cube(2, 1.0).unwrap()).is_err());
        assert!(change_of_measure(f, Measure::standard_gaussian(3), Measure::standard_gaussian(2)).is_err());
        assert!(change_of_measure(f, skew, Measure::standard_gaussian(2)).is_ok());
    }

    #[test]
    fn absolute_continuity_checked_at_evaluation() {
        let f = |_: &[f64]| 1.0;
        let narrow = Measure::uniform_cube(1, 1.0).unwrap();
        let wide = Measure::uniform_cube(1, 2.0).unwrap();
        let t = change_of_measure(f, narrow, wide).unwrap();
        assert_eq!(t.eval(&[0.5]).unwrap(), 2.0);
        assert_eq!(t.eval(&[1.5]).unwrap(), 0.0);
        // Outside both supports the target density is zero as well.
        assert_eq!(t.eval(&[3.0]).unwrap(), 0.0);
    }

    #[test]
    fn sampled_sphere_points_are_unit() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = sample_unit_sphere(&mut rng);
            let r: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-14);
        }
    }
}
