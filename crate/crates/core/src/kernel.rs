//! Scalar kernels with closed-form kernel means, and separable matrix-valued
//! kernels `B c(x, x')`.
//!
//! Supported closed-form pairs:
//!
//! | kernel                 | measure             | `k_nu(x)`                                      | `k_nu,nu`                 |
//! |------------------------|---------------------|------------------------------------------------|---------------------------|
//! | Gaussian, scale `l`    | `N(0, s2 I_m)`      | `(l2/(l2+s2))^(m/2) exp(-|x|^2 / (2(l2+s2)))`  | `(l2/(l2+2 s2))^(m/2)`    |
//! | `8/3 - |x - x'|`       | uniform on `S^2`    | `4/3`                                          | `4/3`                     |
//!
//! Every other pair is rejected with [`Error::NotImplemented`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fss::SignedPermutation;
use crate::measure::Measure;

pub trait Kernel: Send + Sync {
    fn name(&self) -> String;

    /// `k(x, y)`; the caller guarantees equal dimensions.
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    fn try_eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(self.eval(x, y))
    }

    /// `k_nu(x) = int k(x, y) dnu(y)`.
    fn kernel_mean(&self, measure: &Measure, x: &[f64]) -> Result<f64>;

    /// `k_nu,nu = int int k dnu dnu`.
    fn initial_error(&self, measure: &Measure) -> Result<f64>;

    /// Whether `k(Px, Px') = k(x, x')` holds for all signed permutations `P`.
    fn is_fully_symmetric(&self) -> bool;
}

fn unsupported(k: &dyn Kernel, measure: &Measure) -> Error {
    Error::NotImplemented {
        kernel: k.name(),
        measure: measure.name(),
    }
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        acc += d * d;
    }
    acc
}

/// `exp(-|x - x'|^2 / (2 l^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    length_scale: f64,
}

impl GaussianKernel {
    pub fn new(length_scale: f64) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "length scale {length_scale} must be positive and finite"
            )));
        }
        Ok(GaussianKernel { length_scale })
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }
}

impl Kernel for GaussianKernel {
    fn name(&self) -> String {
        format!("gaussian(l={})", self.length_scale)
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let l2 = self.length_scale * self.length_scale;
        (-squared_distance(x, y) / (2.0 * l2)).exp()
    }

    fn kernel_mean(&self, measure: &Measure, x: &[f64]) -> Result<f64> {
        let s2 = match measure {
            Measure::Gaussian(g) => g.isotropic_variance(),
            _ => None,
        }
        .ok_or_else(|| unsupported(self, measure))?;
        if x.len() != measure.dim() {
            return Err(Error::DimensionMismatch {
                expected: measure.dim(),
                found: x.len(),
            });
        }
        let l2 = self.length_scale * self.length_scale;
        let m = x.len() as f64;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Ok((l2 / (l2 + s2)).powf(m / 2.0) * (-r2 / (2.0 * (l2 + s2))).exp())
    }

    fn initial_error(&self, measure: &Measure) -> Result<f64> {
        let s2 = match measure {
            Measure::Gaussian(g) => g.isotropic_variance(),
            _ => None,
        }
        .ok_or_else(|| unsupported(self, measure))?;
        let l2 = self.length_scale * self.length_scale;
        Ok((l2 / (l2 + 2.0 * s2)).powf(measure.dim() as f64 / 2.0))
    }

    fn is_fully_symmetric(&self) -> bool {
        true
    }
}

/// `8/3 - |x - x'|` on the unit sphere in `R^3`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SphereChordKernel;

impl SphereChordKernel {
    pub const MEAN: f64 = 4.0 / 3.0;
    pub const INITIAL_ERROR: f64 = 4.0 / 3.0;
}

impl Kernel for SphereChordKernel {
    fn name(&self) -> String {
        "sphere_chord".to_string()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        8.0 / 3.0 - squared_distance(x, y).sqrt()
    }

    fn kernel_mean(&self, measure: &Measure, x: &[f64]) -> Result<f64> {
        match measure {
            Measure::UniformSphere if x.len() == 3 => Ok(Self::MEAN),
            Measure::UniformSphere => Err(Error::DimensionMismatch {
                expected: 3,
                found: x.len(),
            }),
            _ => Err(unsupported(self, measure)),
        }
    }

    fn initial_error(&self, measure: &Measure) -> Result<f64> {
        match measure {
            Measure::UniformSphere => Ok(Self::INITIAL_ERROR),
            _ => Err(unsupported(self, measure)),
        }
    }

    fn is_fully_symmetric(&self) -> bool {
        true
    }
}

/// Counts evaluations of the wrapped kernel.
pub struct CountingKernel<'a> {
    inner: &'a dyn Kernel,
    count: AtomicU64,
}

impl<'a> CountingKernel<'a> {
    pub fn new(inner: &'a dyn Kernel) -> Self {
        CountingKernel {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl Kernel for CountingKernel<'_> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.eval(x, y)
    }

    fn kernel_mean(&self, measure: &Measure, x: &[f64]) -> Result<f64> {
        self.inner.kernel_mean(measure, x)
    }

    fn initial_error(&self, measure: &Measure) -> Result<f64> {
        self.inner.initial_error(measure)
    }

    fn is_fully_symmetric(&self) -> bool {
        self.inner.is_fully_symmetric()
    }
}

/// Empirical check of `|k(Px, Px') - k(x, x')| <= 1e-12` over random standard
/// normal points and random signed permutations.
pub fn verify_full_symmetry(k: &dyn Kernel, dim: usize, trials: usize, seed: u64) -> bool {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = SignedPermutation::random(dim, &mut rng);
        if (k.eval(&p.apply(&x), &p.apply(&y)) - k.eval(&x, &y)).abs() > 1e-12 {
            return false;
        }
    }
    true
}

/// Matrix-valued kernel `B c(x, x')` with `B` symmetric positive definite.
#[derive(Clone)]
pub struct SeparableMatrixKernel {
    b: DMatrix<f64>,
    c: Arc<dyn Kernel>,
}

impl SeparableMatrixKernel {
    pub fn new(b: DMatrix<f64>, c: Arc<dyn Kernel>) -> Result<Self> {
        if b.nrows() == 0 || b.nrows() != b.ncols() {
            return Err(Error::InvalidInput(format!(
                "output covariance must be square and non-empty, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if (&b - b.transpose()).amax() > 1e-12 * b.amax().max(1.0) {
            return Err(Error::InvalidInput("output covariance is not symmetric".into()));
        }
        if b.clone().cholesky().is_none() {
            return Err(Error::InvalidInput(
                "output covariance is not positive definite".into(),
            ));
        }
        Ok(SeparableMatrixKernel { b, c })
    }

    pub fn outputs(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn scalar(&self) -> &dyn Kernel {
        self.c.as_ref()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        &self.b * self.c.eval(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Anisotropic;

    impl Kernel for Anisotropic {
        fn name(&self) -> String {
            "anisotropic".into()
        }
        fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
            (-(x[0] - y[0]).powi(2)).exp()
        }
        fn kernel_mean(&self, m: &Measure, _: &[f64]) -> Result<f64> {
            Err(unsupported(self, m))
        }
        fn initial_error(&self, m: &Measure) -> Result<f64> {
            Err(unsupported(self, m))
        }
        fn is_fully_symmetric(&self) -> bool {
            false
        }
    }

    #[test]
    fn gaussian_eval_examples() {
        let k = GaussianKernel::new(1.0).unwrap();
        assert_eq!(k.eval(&[0.3, 0.4], &[0.3, 0.4]), 1.0);
        assert!((k.eval(&[1.0, 0.0], &[0.0, 1.0]) - (-1.0f64).exp()).abs() < 1e-16);
        assert!(k.try_eval(&[1.0], &[1.0, 2.0]).is_err());
        assert!(GaussianKernel::new(0.0).is_err());
        assert!(GaussianKernel::new(f64::NAN).is_err());
    }

    #[test]
    fn chord_eval_antipodal() {
        let k = SphereChordKernel;
        assert!((k.eval(&[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(k.eval(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]), 8.0 / 3.0);
    }

    #[test]
    fn gaussian_mean_at_origin() {
        for m in 1..5 {
            for l in [0.5, 1.0, 3.0] {
                let k = GaussianKernel::new(l).unwrap();
                let measure = Measure::standard_gaussian(m);
                let l2 = l * l;
                let expected = (l2 / (l2 + 1.0)).powf(m as f64 / 2.0);
                let got = k.kernel_mean(&measure, &vec![0.0; m]).unwrap();
                assert!((got - expected).abs() < 1e-15);
                let e = k.initial_error(&measure).unwrap();
                assert!((e - (l2 / (l2 + 2.0)).powf(m as f64 / 2.0)).abs() < 1e-15);
                assert!(e >= 0.0);
            }
        }
    }

    #[test]
    fn gaussian_mean_tends_to_one_for_long_scales() {
        let k = GaussianKernel::new(1e6).unwrap();
        let v = k.kernel_mean(&Measure::standard_gaussian(3), &[0.5, -1.0, 2.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn chord_constants() {
        let k = SphereChordKernel;
        assert_eq!(k.kernel_mean(&Measure::UniformSphere, &[0.0, 1.0, 0.0]).unwrap(), 4.0 / 3.0);
        assert_eq!(k.initial_error(&Measure::UniformSphere).unwrap(), 4.0 / 3.0);
    }

    #[test]
    fn unsupported_pairs_are_named() {
        let k = GaussianKernel::new(1.0).unwrap();
        let err = k.kernel_mean(&Measure::UniformSphere, &[1.0, 0.0, 0.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gaussian") && msg.contains("sphere"), "{msg}");
        assert!(SphereChordKernel.initial_error(&Measure::standard_gaussian(3)).is_err());
        let cube = Measure::uniform_cube(2, 1.0).unwrap();
        assert!(k.initial_error(&cube).is_err());
    }

    #[test]
    fn full_symmetry_verification() {
        assert!(verify_full_symmetry(&GaussianKernel::new(0.7).unwrap(), 4, 200, 1));
        assert!(verify_full_symmetry(&SphereChordKernel, 3, 200, 2));
        assert!(!verify_full_symmetry(&Anisotropic, 2, 200, 3));
    }

    #[test]
    fn counting_kernel_counts() {
        let k = GaussianKernel::new(1.0).unwrap();
        let c = CountingKernel::new(&k);
        for _ in 0..7 {
            c.eval(&[0.0], &[1.0]);
        }
        assert_eq!(c.count(), 7);
    }

    #[test]
    fn separable_kernel_validation() {
        let c: Arc<dyn Kernel> = Arc::new(SphereChordKernel);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let k = SeparableMatrixKernel::new(b, c.clone()).unwrap();
        let v = k.eval(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]);
        assert!((v[(0, 1)] - 0.5 * 8.0 / 3.0).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(SeparableMatrixKernel::new(bad, c.clone()).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(SeparableMatrixKernel::new(asym, c).is_err());
    }
}
