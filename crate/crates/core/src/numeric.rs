//! Small numerical helpers shared by the cubature solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Condition estimates above this value are logged as warnings.
pub const CONDITION_WARN_THRESHOLD: f64 = 1e12;

/// Pairwise (cascade) summation with a fixed split point, so the result depends
/// only on the order of `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 16;
    if values.len() <= BASE {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// `base^exp` by repeated squaring.
pub fn int_pow(base: f64, mut exp: u32) -> f64 {
    let mut result = 1.0;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            result *= b;
        }
        b *= b;
        exp >>= 1;
    }
    result
}

/// Monomial `x^alpha`, coordinates multiplied left to right.
pub fn monomial(x: &[f64], alpha: &[u32]) -> f64 {
    debug_assert_eq!(x.len(), alpha.len());
    let mut acc = 1.0;
    for (&xi, &a) in x.iter().zip(alpha) {
        if a > 0 {
            acc *= int_pow(xi, a);
        }
    }
    acc
}

/// `(n - 1)!!` for even `n`, i.e. the `n`th moment of a standard normal variable.
pub fn gaussian_moment(n: u32) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut k = n as i64 - 1;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

pub fn matrix_norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Hager's estimate of `||A^{-1}||_1` for a symmetric matrix given a solver for `A`.
fn hager_inverse_norm1<F: Fn(&DVector<f64>) -> DVector<f64>>(n: usize, solve: F) -> f64 {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let y = solve(&x);
        estimate = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        // A is symmetric, so A^{-T} = A^{-1}.
        let z = solve(&xi);
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| {
                if v.abs() > acc.1 {
                    (j, v.abs())
                } else {
                    acc
                }
            });
        if zmax <= z.dot(&x) {
            break;
        }
        x.fill(0.0);
        x[jmax] = 1.0;
    }
    estimate
}

/// A symmetric positive-definite matrix together with its Cholesky factor.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    pub condition_estimate: f64,
}

impl SpdFactor {
    /// Factorize `a`; `what` names the matrix in error messages.
    pub fn new(a: DMatrix<f64>, what: &str) -> Result<Self> {
        let n = a.nrows();
        let norm = matrix_norm1(&a);
        match Cholesky::new(a.clone()) {
            Some(chol) => {
                let inv_norm = hager_inverse_norm1(n, |b| chol.solve(b));
                let condition_estimate = norm * inv_norm;
                if condition_estimate > CONDITION_WARN_THRESHOLD {
                    log::warn!("{what} is ill-conditioned (1-norm estimate {condition_estimate:e})");
                }
                Ok(SpdFactor {
                    chol,
                    condition_estimate,
                })
            }
            None => {
                let condition_estimate = lu_condition(&a).unwrap_or(f64::INFINITY);
                Err(Error::Factorization {
                    what: what.to_string(),
                    condition_estimate,
                    hint: "matrix is not numerically positive definite; add diagonal jitter \
                           or remove nearly coincident generators"
                        .to_string(),
                })
            }
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

fn lu_condition(a: &DMatrix<f64>) -> Option<f64> {
    let inv = a.clone().lu().try_inverse()?;
    Some(matrix_norm1(a) * matrix_norm1(&inv))
}

/// A general square matrix factorized by LU with partial pivoting.
pub struct LuFactor {
    lu: LU<f64, Dyn, Dyn>,
    pub condition_estimate: f64,
}

impl LuFactor {
    pub fn new(a: DMatrix<f64>, what: &str) -> Result<Self> {
        let norm = matrix_norm1(&a);
        let lu = a.lu();
        let singular = || Error::Factorization {
            what: what.to_string(),
            condition_estimate: f64::INFINITY,
            hint: "reduced system is singular; check for degenerate generators".to_string(),
        };
        let inv = lu.try_inverse().ok_or_else(singular)?;
        let condition_estimate = norm * matrix_norm1(&inv);
        if !condition_estimate.is_finite() {
            return Err(singular());
        }
        if condition_estimate > CONDITION_WARN_THRESHOLD {
            log::warn!("{what} is ill-conditioned (1-norm estimate {condition_estimate:e})");
        }
        Ok(LuFactor {
            lu,
            condition_estimate,
        })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(b).expect("LU factor checked non-singular")
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.lu.solve(b).expect("LU factor checked non-singular")
    }
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 55.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn pairwise_is_accurate_on_long_input() {
        let v = vec![0.1; 1 << 20];
        let exact = 0.1 * (1 << 20) as f64;
        assert!((pairwise_sum(&v) - exact).abs() < 1e-9);
    }

    #[test]
    fn int_pow_matches_powi() {
        for e in 0..12 {
            assert!((int_pow(1.3, e) - 1.3f64.powi(e as i32)).abs() < 1e-12);
        }
        assert_eq!(int_pow(-2.0, 3), -8.0);
        assert_eq!(int_pow(0.0, 0), 1.0);
    }

    #[test]
    fn gaussian_moments() {
        assert_eq!(gaussian_moment(0), 1.0);
        assert_eq!(gaussian_moment(2), 1.0);
        assert_eq!(gaussian_moment(4), 3.0);
        assert_eq!(gaussian_moment(6), 15.0);
        assert_eq!(gaussian_moment(3), 0.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(3, 0), 1);
        assert_eq!(binomial(10, 10), 1);
    }

    #[test]
    fn spd_condition_estimate_is_exact_for_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 10.0, 100.0]));
        let f = SpdFactor::new(a, "test").unwrap();
        assert!((f.condition_estimate - 100.0).abs() < 1e-9);
    }

    #[test]
    fn spd_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let err = SpdFactor::new(a, "K_X").err().unwrap();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(LuFactor::new(a, "S").is_err());
    }
}
