use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use symcub::bench::com::{run_change_of_measure, ChangeOfMeasureProblem};
use symcub::bench::illumination::{run_illumination, IlluminationConfig, IlluminationProblem, Radiance};
use symcub::bench::sparse_grid::{make_gauss_hermite_generators, sparse_grid_design};
use symcub::bench::zcb::{run_zcb, VasicekParameters, ZcbMethod, ZcbProblem};
use symcub::fss::build_point_set;
use symcub::mobc::make_sphere_design;

#[test]
fn zcb_two_steps_by_hand() {
    let p = VasicekParameters::default();
    let problem = ZcbProblem::new(2, p).unwrap();
    // a single Gaussian rate r1 ~ N(mean, s^2)
    let mean = (1.0 - p.kappa * p.dt) * p.r0 + p.kappa * p.theta * p.dt;
    let s2 = p.sigma * p.sigma * p.dt;
    let hand = (-p.dt * p.r0).exp() * (-p.dt * mean + p.dt * p.dt * s2 / 2.0).exp();
    assert!((problem.reference() - hand).abs() < 1e-15);
}

#[test]
fn zcb_without_volatility_is_deterministic_discounting() {
    let p = VasicekParameters { sigma: 0.0, ..Default::default() };
    let problem = ZcbProblem::new(12, p).unwrap();
    let mut r = p.r0;
    let mut total = r;
    for _ in 1..12 {
        r = (1.0 - p.kappa * p.dt) * r + p.kappa * p.theta * p.dt;
        total += r;
    }
    let expected = (-p.dt * total).exp();
    assert!((problem.reference() - expected).abs() < 1e-14);
    assert!((problem.integrand()(&[0.3; 11]) - expected).abs() < 1e-14);
}

#[test]
fn zcb_integrand_at_origin_and_positivity() {
    let problem = ZcbProblem::new(6, VasicekParameters::default()).unwrap();
    let (mean, _) = problem.mean_and_factor();
    let p = problem.params();
    let f = problem.integrand();
    assert!((f(&[0.0; 5]) - (-p.dt * p.r0 - p.dt * mean.sum()).exp()).abs() < 1e-15);
    assert!(f(&[40.0; 5]) > 0.0 && f(&[-40.0; 5]) > 0.0);
}

#[test]
fn zcb_matches_simulated_short_rate() {
    let p = VasicekParameters::default();
    let problem = ZcbProblem::new(5, p).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let n = 200_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let mut r = p.r0;
        let mut total = r;
        for _ in 1..5 {
            let eps: f64 = StandardNormal.sample(&mut rng);
            r = (1.0 - p.kappa * p.dt) * r + p.kappa * p.theta * p.dt + p.sigma * p.dt.sqrt() * eps;
            total += r;
        }
        let v = (-p.dt * total).exp();
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - problem.reference()).abs() <= 4.0 * se);
}

#[test]
fn zcb_runs_for_moderate_horizons() {
    let rows = run_zcb(&[5, 10, 30], 2, VasicekParameters::default(), &[ZcbMethod::Bc, ZcbMethod::Bsc(1), ZcbMethod::Bsc(2)]).unwrap();
    assert_eq!(rows.len(), 3 * 3 * 2);
    for row in &rows {
        assert_eq!(row.status, "ok", "{row:?}");
        assert!(row.relative_error.is_finite());
        if let ZcbMethod::Bsc(_) = row.method {
            assert!((row.weight_sum - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn zcb_error_falls_with_level() {
    let err = |level| run_zcb(&[5], level, VasicekParameters::default(), &[ZcbMethod::Bc]).unwrap()[0].relative_error;
    assert!(err(3) < err(1));
}

#[test]
fn sparse_grid_shapes() {
    for m in 1..=6 {
        let g = make_gauss_hermite_generators(m, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0].values()[0] - 3f64.sqrt()).abs() < 1e-14);
        assert!(g[0].values()[1..].iter().all(|&v| v == 0.0));
        assert_eq!(sparse_grid_design(m, 1, false).unwrap().len(), 2 * m);
    }
    let sizes: Vec<usize> = (1..=3).map(|l| sparse_grid_design(8, l, false).unwrap().len()).collect();
    assert_eq!(sizes, vec![16, 160, 1104]);
    for level in 1..=5 {
        let gens = make_gauss_hermite_generators(2, level).unwrap();
        let design = build_point_set(&gens).unwrap();
        log::info!("m = 2, level {level}: {} points", design.len());
        assert!(design.points().iter().all(|x| x.iter().any(|&v| v != 0.0)));
        assert_eq!(sparse_grid_design(2, level, true).unwrap().len(), design.len() + 1);
    }
}

#[test]
fn change_of_measure_reference_matches_sampling() {
    let problem = ChangeOfMeasureProblem::standard();
    let target = problem.target().unwrap();
    let f = problem.integrand().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(23);
    let n = 400_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let v = f(&target.sample(&mut rng));
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - problem.reference().unwrap()).abs() <= 4.0 * se);
}

#[test]
fn change_of_measure_improves_with_level() {
    let rows = run_change_of_measure(&ChangeOfMeasureProblem::standard(), &[1, 2, 3], 0.8).unwrap();
    assert!(rows.windows(2).all(|w| w[1].relative_error < w[0].relative_error));
    assert!(rows.iter().all(|r| r.max_density_ratio.is_finite()));
}

#[test]
fn illumination_point_counts_and_rows() {
    assert_eq!(make_sphere_design(2, 3, 0).unwrap().points_per_output(), 144);
    assert_eq!(make_sphere_design(2, 6, 0).unwrap().points_per_output(), 288);

    let problem = IlluminationProblem::new(3, Radiance::Synthetic).unwrap();
    let config = IlluminationConfig { d_max: 3, blocks: 2, realizations: 2, mc_samples: 20_000, seed: 4 };
    let rows = run_illumination(&problem, &config).unwrap();
    // 3 channels, 3 output counts, 2 methods
    assert_eq!(rows.len(), 18);
    for row in rows.iter().filter(|r| r.outputs == 1) {
        let twin = rows
            .iter()
            .find(|o| o.outputs == 1 && o.channel == row.channel && o.method != row.method)
            .unwrap();
        assert!((row.mean_relative_error - twin.mean_relative_error).abs() <= 1e-10);
    }
    assert!(rows.iter().all(|r| r.max_relative_error >= r.mean_relative_error));
    assert_eq!(rows, run_illumination(&problem, &config).unwrap());
}
