use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use symcub::fss::{expand_full, GeneratorVector, SignedPermutation};
use symcub::kernel::{GaussianKernel, Kernel, SphereChordKernel};
use symcub::measure::{change_of_measure, sample_unit_sphere, GaussianMeasure, Measure};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

fn normal_pdf(y: f64, var: f64) -> f64 {
    (-y * y / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[test]
fn gaussian_kernel_mean_matches_quadrature() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..20 {
        let m = rng.random_range(1..=4);
        let l: f64 = rng.random_range(0.3..3.0);
        let var: f64 = rng.random_range(0.2..2.0);
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let k = GaussianKernel::new(l).unwrap();
        let measure = Measure::Gaussian(GaussianMeasure::isotropic(m, var).unwrap());
        let half = 14.0 * var.sqrt();
        // the kernel and the density both factor over coordinates
        let oracle: f64 = x
            .iter()
            .map(|&xi| {
                simpson(
                    |y| (-(xi - y) * (xi - y) / (2.0 * l * l)).exp() * normal_pdf(y, var),
                    -half,
                    half,
                    6000,
                )
            })
            .product();
        let got = k.kernel_mean(&measure, &x).unwrap();
        assert!((got - oracle).abs() <= 1e-10 * oracle.max(1e-300), "{got} vs {oracle}");

        let one_dim = simpson(
            |u| {
                normal_pdf(u, var)
                    * simpson(
                        |y| (-(u - y) * (u - y) / (2.0 * l * l)).exp() * normal_pdf(y, var),
                        -half,
                        half,
                        800,
                    )
            },
            -half,
            half,
            800,
        );
        let got = k.initial_error(&measure).unwrap();
        assert!((got - one_dim.powi(m as i32)).abs() <= 1e-8 * got);
    }
}

#[test]
fn sphere_chord_constants_by_monte_carlo() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let k = SphereChordKernel;
    let x = [0.0, 0.6, 0.8];
    let n = 200_000;
    let (mut mean, mut initial) = (0.0, 0.0);
    for _ in 0..n {
        let y = sample_unit_sphere(&mut rng);
        let z = sample_unit_sphere(&mut rng);
        mean += k.eval(&x, &y);
        initial += k.eval(&z, &y);
    }
    mean /= n as f64;
    initial /= n as f64;
    let sphere = Measure::UniformSphere;
    assert!((mean / k.kernel_mean(&sphere, &x).unwrap() - 1.0).abs() < 1e-2);
    assert!((initial / k.initial_error(&sphere).unwrap() - 1.0).abs() < 1e-2);
    assert!(k.kernel_mean(&Measure::standard_gaussian(3), &x).is_err());
}

#[test]
fn kernel_mean_is_constant_on_orbits() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for _ in 0..100 {
        let m = rng.random_range(1..=4);
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let k = GaussianKernel::new(rng.random_range(0.5..2.0)).unwrap();
        let measure = Measure::Gaussian(GaussianMeasure::isotropic(m, rng.random_range(0.3..2.0)).unwrap());
        let set = expand_full(&GeneratorVector::new(v.clone()).unwrap());
        let reference = k.kernel_mean(&measure, &v).unwrap();
        for x in set.points.iter() {
            assert!((k.kernel_mean(&measure, x).unwrap() - reference).abs() <= 1e-12);
        }
    }
}

#[test]
fn gaussian_moments_match_quadrature() {
    for var in [0.5, 1.0, 2.5] {
        let measure = Measure::Gaussian(GaussianMeasure::isotropic(2, var).unwrap());
        for a in 0..=6u32 {
            for b in 0..=4u32 {
                let half = 16.0 * var.sqrt();
                let one = |p: u32| simpson(|y| y.powi(p as i32) * normal_pdf(y, var), -half, half, 4000);
                let oracle = one(a) * one(b);
                let got = measure.polynomial_integral(&[a, b]).unwrap();
                assert!((got - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "{a} {b}: {got} vs {oracle}");
            }
        }
    }
}

#[test]
fn cube_and_sphere_moments() {
    let cube = Measure::uniform_cube(3, 2.0).unwrap();
    // int_{-2}^{2} x^2 dx / 4 = 4/3
    assert!((cube.polynomial_integral(&[2, 0, 0]).unwrap() - 4.0 / 3.0).abs() < 1e-14);
    assert_eq!(cube.polynomial_integral(&[1, 2, 0]).unwrap(), 0.0);
    let sphere = Measure::UniformSphere;
    assert!((sphere.polynomial_integral(&[2, 0, 0]).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    assert!((sphere.polynomial_integral(&[4, 0, 0]).unwrap() - 1.0 / 5.0).abs() < 1e-14);
    assert!((sphere.polynomial_integral(&[2, 2, 0]).unwrap() - 1.0 / 15.0).abs() < 1e-14);
    assert_eq!(sphere.polynomial_integral(&[0, 0, 0]).unwrap(), 1.0);
}

#[test]
fn even_moments_are_permutation_invariant() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    for _ in 0..100 {
        let m = rng.random_range(1..=5);
        let alpha: Vec<u32> = (0..m).map(|_| 2 * rng.random_range(0..3u32)).collect();
        let measures = [
            Measure::Gaussian(GaussianMeasure::isotropic(m, rng.random_range(0.2..3.0)).unwrap()),
            Measure::uniform_cube(m, rng.random_range(0.5..2.0)).unwrap(),
        ];
        let p = SignedPermutation::random(m, &mut rng);
        for measure in &measures {
            assert_eq!(
                measure.polynomial_integral(&alpha).unwrap(),
                measure.polynomial_integral(&p.permute_index(&alpha)).unwrap()
            );
        }
    }
}

#[test]
fn change_of_measure_matches_gaussian_product() {
    // f(x) = exp(-(x-a)' C^{-1} (x-a) / 2), nu = N(mu, S), reference N(0, I)
    let a = [0.3, -0.2];
    let c = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.8]);
    let mu = DVector::from_vec(vec![0.4, 0.6]);
    let s = DMatrix::from_row_slice(2, 2, &[0.7, -0.2, -0.2, 0.4]);
    let c_inv = c.clone().try_inverse().unwrap();
    let f = move |x: &[f64]| {
        let d = DVector::from_vec(vec![x[0] - a[0], x[1] - a[1]]);
        (-0.5 * (d.transpose() * &c_inv * &d)[(0, 0)]).exp()
    };
    let target = Measure::Gaussian(GaussianMeasure::new(mu.clone(), s.clone()).unwrap());
    let t = change_of_measure(f, target, Measure::standard_gaussian(2)).unwrap();

    let h = 9.0;
    let numeric = simpson(
        |x| {
            simpson(
                |y| t.eval(&[x, y]).unwrap() * normal_pdf(x, 1.0) * normal_pdf(y, 1.0),
                -h,
                h,
                600,
            )
        },
        -h,
        h,
        600,
    );
    let sum = &c + &s;
    let d = DVector::from_vec(vec![a[0] - mu[0], a[1] - mu[1]]);
    let quad = (d.transpose() * sum.clone().try_inverse().unwrap() * &d)[(0, 0)];
    let closed = c.determinant().sqrt() / sum.determinant().sqrt() * (-0.5 * quad).exp();
    assert!((numeric - closed).abs() <= 1e-8 * closed, "{numeric} vs {closed}");

    // identity change and constant integrand
    let same = change_of_measure(|_: &[f64]| 1.0, Measure::standard_gaussian(2), Measure::standard_gaussian(2)).unwrap();
    assert!((same.density_ratio(&[0.7, -1.1]).unwrap() - 1.0).abs() < 1e-15);
}
