//! Outgoing radiance of a glossy surface for `D` observation angles.
//!
//! `f_d(w) = L(w) rho(w, o_d) max(0, w . n)` integrated against the uniform
//! measure on `S^2`, with `rho(w, o) = exp(w . o - 1) / (2 pi)` and normal
//! `n = (0, 0, 1)`. Observation `d` (1-based, out of `D_max`) has azimuth 0
//! and elevation `pi/4 - (pi/24) (1 - 2 (d - 1) / (D_max - 1))`, i.e. direction
//! `(cos e, 0, sin e)`.
//!
//! The default radiance is synthetic, per channel
//! `L_c(w) = a_c + b_c exp(k_c (w . u_c - 1))`:
//!
//! | channel | a    | b   | k   | u                      |
//! |---------|------|-----|-----|------------------------|
//! | red     | 0.35 | 1.2 | 4.0 | (1, 0, 1) / sqrt 2     |
//! | green   | 0.45 | 0.8 | 2.5 | (0.3, 1, 1.5) / norm   |
//! | blue    | 0.60 | 0.5 | 1.5 | (0, 0, 1)              |
//!
//! An equirectangular map may be used instead: a text file whose first two
//! numbers are `width height`, followed by `width * height` RGB triples, row
//! by row from the north pole (`z = 1`) down, columns by azimuth from 0 to
//! `2 pi`. Lookups interpolate bilinearly between pixel centres, wrapping in
//! azimuth and clamping at the poles.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::bc::bc_fss;
use crate::error::{Error, Result};
use crate::io::read_text;
use crate::kernel::{Kernel, SphereChordKernel};
use crate::measure::{sample_unit_sphere, Measure};
use crate::mobc::{apply_block_weights, direction_similarity_matrix, make_sphere_design, mobc_fss, separable, MultiDesign};
use crate::numeric::pairwise_sum;

pub const CHANNELS: [&str; 3] = ["red", "green", "blue"];

#[derive(Debug, Clone, PartialEq)]
pub struct EnvMap {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl EnvMap {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let tokens: Vec<&str> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace())
            .collect();
        let bad = |message: String| Error::Parse {
            location: source.to_string(),
            message,
        };
        if tokens.len() < 2 {
            return Err(bad("missing `width height` header".into()));
        }
        let width: usize = tokens[0].parse().map_err(|_| bad(format!("bad width `{}`", tokens[0])))?;
        let height: usize = tokens[1].parse().map_err(|_| bad(format!("bad height `{}`", tokens[1])))?;
        if width == 0 || height == 0 {
            return Err(bad("empty map".into()));
        }
        let values: Vec<f64> = tokens[2..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("cannot parse `{t}`"))))
            .collect::<Result<_>>()?;
        if values.len() != 3 * width * height {
            return Err(bad(format!(
                "expected {} values for a {width}x{height} map, found {}",
                3 * width * height,
                values.len()
            )));
        }
        let pixels = values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(EnvMap { width, height, pixels })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    fn pixel(&self, col: usize, row: usize) -> [f64; 3] {
        self.pixels[row * self.width + col]
    }

    pub fn lookup(&self, w: &[f64]) -> [f64; 3] {
        let theta = w[2].clamp(-1.0, 1.0).acos();
        let phi = w[1].atan2(w[0]).rem_euclid(2.0 * PI);
        let u = phi / (2.0 * PI) * self.width as f64 - 0.5;
        let v = (theta / PI * self.height as f64 - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (u0, v0) = (u.floor(), v.floor());
        let (fu, fv) = (u - u0, v - v0);
        let c0 = (u0 as i64).rem_euclid(self.width as i64) as usize;
        let c1 = (c0 + 1) % self.width;
        let r0 = v0 as usize;
        let r1 = (r0 + 1).min(self.height - 1);
        let mut out = [0.0; 3];
        for (ch, o) in out.iter_mut().enumerate() {
            let top = (1.0 - fu) * self.pixel(c0, r0)[ch] + fu * self.pixel(c1, r0)[ch];
            let bottom = (1.0 - fu) * self.pixel(c0, r1)[ch] + fu * self.pixel(c1, r1)[ch];
            *o = (1.0 - fv) * top + fv * bottom;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Radiance {
    Synthetic,
    Map(Arc<EnvMap>),
}

fn normalized(v: [f64; 3]) -> [f64; 3] {
    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / r, v[1] / r, v[2] / r]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Radiance {
    pub fn eval(&self, w: &[f64]) -> [f64; 3] {
        match self {
            Radiance::Synthetic => {
                let lobes = [
                    (0.35, 1.2, 4.0, normalized([1.0, 0.0, 1.0])),
                    (0.45, 0.8, 2.5, normalized([0.3, 1.0, 1.5])),
                    (0.60, 0.5, 1.5, [0.0, 0.0, 1.0]),
                ];
                lobes.map(|(a, b, k, u)| a + b * (k * (dot(w, &u) - 1.0)).exp())
            }
            Radiance::Map(map) => map.lookup(w),
        }
    }
}

pub fn observation_directions(d_max: usize) -> Vec<[f64; 3]> {
    (0..d_max)
        .map(|d| {
            let t = if d_max > 1 { d as f64 / (d_max - 1) as f64 } else { 0.0 };
            let elevation = PI / 4.0 - PI / 24.0 * (1.0 - 2.0 * t);
            [elevation.cos(), 0.0, elevation.sin()]
        })
        .collect()
}

pub fn brdf(incoming: &[f64], outgoing: &[f64]) -> f64 {
    (dot(incoming, outgoing) - 1.0).exp() / (2.0 * PI)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationProblem {
    pub directions: Vec<[f64; 3]>,
    pub normal: [f64; 3],
    pub radiance: Radiance,
}

impl IlluminationProblem {
    pub fn new(d_max: usize, radiance: Radiance) -> Result<Self> {
        if d_max == 0 {
            return Err(Error::InvalidInput("need at least one observation angle".into()));
        }
        Ok(IlluminationProblem {
            directions: observation_directions(d_max),
            normal: [0.0, 0.0, 1.0],
            radiance,
        })
    }

    pub fn d_max(&self) -> usize {
        self.directions.len()
    }

    /// `f_d(w)` for every channel.
    pub fn integrand(&self, d: usize, w: &[f64]) -> [f64; 3] {
        let cosine = dot(w, &self.normal).max(0.0);
        if cosine == 0.0 {
            return [0.0; 3];
        }
        let scale = brdf(w, &self.directions[d]) * cosine;
        self.radiance.eval(w).map(|l| l * scale)
    }

    /// `values[channel][d][i]` over the points of each output's design.
    pub fn values(&self, design: &MultiDesign) -> Vec<Vec<Vec<f64>>> {
        let mut out = vec![vec![Vec::new(); design.outputs()]; 3];
        for d in 0..design.outputs() {
            for w in design.design(d).points().iter() {
                let v = self.integrand(d, w);
                for c in 0..3 {
                    out[c][d].push(v[c]);
                }
            }
        }
        out
    }

    pub fn output_covariance(&self) -> DMatrix<f64> {
        direction_similarity_matrix(&self.directions)
    }

    /// Monte Carlo references `[d][channel]` from `samples` uniform directions.
    pub fn monte_carlo_references(&self, samples: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let dirs: Vec<Vec<f64>> = (0..samples).map(|_| sample_unit_sphere(&mut rng)).collect();
        (0..self.d_max())
            .into_par_iter()
            .map(|d| {
                let mut per_channel = [0.0; 3];
                for (c, slot) in per_channel.iter_mut().enumerate() {
                    let vals: Vec<f64> = dirs.iter().map(|w| self.integrand(d, w)[c]).collect();
                    *slot = pairwise_sum(&vals) / samples as f64;
                }
                per_channel
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlluminationConfig {
    pub d_max: usize,
    pub blocks: usize,
    pub realizations: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for IlluminationConfig {
    fn default() -> Self {
        IlluminationConfig {
            d_max: 10,
            blocks: 3,
            realizations: 10,
            mc_samples: 1_000_000,
            seed: 0,
        }
    }
}

impl IlluminationConfig {
    /// Seed of the `r`th point-set realization. Seed `seed` itself drives the
    /// Monte Carlo references.
    pub fn realization_seed(&self, r: usize) -> u64 {
        self.seed.wrapping_add(1 + r as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationRow {
    pub channel: &'static str,
    pub outputs: usize,
    pub blocks: usize,
    pub n: usize,
    pub method: &'static str,
    pub mean_relative_error: f64,
    pub max_relative_error: f64,
}

/// Relative errors `[channel][D - 1][d]` for one realization.
struct RealizationErrors {
    mobc: Vec<Vec<Vec<f64>>>,
    bc: Vec<Vec<f64>>,
}

fn realization(problem: &IlluminationProblem, references: &[[f64; 3]], blocks: usize, seed: u64) -> Result<RealizationErrors> {
    let d_max = problem.d_max();
    let full = make_sphere_design(d_max, blocks, seed)?;
    let values = problem.values(&full);
    let b = problem.output_covariance();
    let chord: Arc<dyn Kernel> = Arc::new(SphereChordKernel);
    let sphere = Measure::UniformSphere;
    let rel = |estimate: f64, d: usize, c: usize| ((references[d][c] - estimate) / references[d][c]).abs();

    let mut bc = vec![vec![0.0; d_max]; 3];
    for d in 0..d_max {
        let first = bc_fss(full.design(d), &SphereChordKernel, &sphere, &values[0][d])?;
        let w = first.weights.expanded(Some(full.design(d)));
        for c in 0..3 {
            let estimate: f64 = w.iter().zip(&values[c][d]).map(|(a, b)| a * b).sum();
            bc[c][d] = rel(estimate, d, c);
        }
    }

    let mut mobc: Vec<Vec<Vec<f64>>> = (0..3).map(|_| Vec::with_capacity(d_max)).collect();
    for outputs in 1..=d_max {
        let design = MultiDesign::new(full.designs()[..outputs].to_vec())?;
        let kernel = separable(b.view((0, 0), (outputs, outputs)).into_owned(), chord.clone())?;
        let result = mobc_fss(&design, &kernel, &sphere, &values[0][..outputs])?;
        let weights = match &result.weights {
            crate::mobc::MultiWeights::Block(w) => w.clone(),
            crate::mobc::MultiWeights::Flat(_) => unreachable!("fast path returns block weights"),
        };
        for c in 0..3 {
            let means = apply_block_weights(&design, &weights, &values[c][..outputs])?;
            mobc[c].push((0..outputs).map(|d| rel(means[d], d, c)).collect());
        }
    }
    Ok(RealizationErrors { mobc, bc })
}

/// Mean and max relative errors for every `D` in `1..=d_max`, for MOBC and
/// for independent standard BC, averaged over the realizations.
pub fn run_illumination(problem: &IlluminationProblem, config: &IlluminationConfig) -> Result<Vec<IlluminationRow>> {
    if config.realizations == 0 || config.mc_samples == 0 {
        return Err(Error::InvalidInput("need at least one realization and one Monte Carlo sample".into()));
    }
    let references = problem.monte_carlo_references(config.mc_samples, config.seed);
    let runs: Vec<RealizationErrors> = (0..config.realizations)
        .into_par_iter()
        .map(|r| realization(problem, &references, config.blocks, config.realization_seed(r)))
        .collect::<Result<_>>()?;
    let n = 48 * config.blocks;
    let reps = config.realizations as f64;
    let mut rows = Vec::new();
    for (c, channel) in CHANNELS.iter().enumerate() {
        for outputs in 1..=problem.d_max() {
            let stats = |errors: &dyn Fn(&RealizationErrors) -> Vec<f64>| {
                let (mut mean, mut max) = (0.0, 0.0);
                for run in &runs {
                    let e = errors(run);
                    mean += e.iter().sum::<f64>() / e.len() as f64;
                    max += e.iter().copied().fold(0.0, f64::max);
                }
                (mean / reps, max / reps)
            };
            let (mean, max) = stats(&|run| run.mobc[c][outputs - 1].clone());
            rows.push(IlluminationRow {
                channel,
                outputs,
                blocks: config.blocks,
                n,
                method: "mobc",
                mean_relative_error: mean,
                max_relative_error: max,
            });
            let (mean, max) = stats(&|run| run.bc[c][..outputs].to_vec());
            rows.push(IlluminationRow {
                channel,
                outputs,
                blocks: config.blocks,
                n,
                method: "bc",
                mean_relative_error: mean,
                max_relative_error: max,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_angles_span_the_interval() {
        let dirs = observation_directions(5);
        let elevation = |w: &[f64; 3]| w[2].asin();
        assert!((elevation(&dirs[0]) - (PI / 4.0 - PI / 24.0)).abs() < 1e-14);
        assert!((elevation(&dirs[4]) - (PI / 4.0 + PI / 24.0)).abs() < 1e-14);
        for w in &dirs {
            assert!((dot(w, w) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn integrand_vanishes_below_the_horizon() {
        let p = IlluminationProblem::new(3, Radiance::Synthetic).unwrap();
        assert_eq!(p.integrand(0, &[0.0, 0.6, -0.8]), [0.0; 3]);
        assert!(p.integrand(0, &[0.0, 0.6, 0.8]).iter().all(|v| *v > 0.0));
    }

    #[test]
    fn constant_env_map() {
        let map = EnvMap::parse("2 2\n1 2 3  1 2 3\n1 2 3  1 2 3\n", "t").unwrap();
        let v = map.lookup(&[0.3, -0.4, 0.866]);
        for (a, b) in v.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(EnvMap::parse("2 2\n1 2 3\n", "t").is_err());
    }

    #[test]
    fn env_map_interpolates_in_azimuth() {
        // Column 0 covers azimuth [0, pi), column 1 [pi, 2 pi); the seam at 0 averages.
        let map = EnvMap::parse("2 1\n0 0 0  2 2 2\n", "t").unwrap();
        assert!((map.lookup(&[1.0, 0.0, 0.0])[0] - 1.0).abs() < 1e-12);
        assert!((map.lookup(&[0.0, 1.0, 0.0])[0] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn single_output_mobc_equals_bc() {
        let p = IlluminationProblem::new(1, Radiance::Synthetic).unwrap();
        let refs = p.monte_carlo_references(2000, 3);
        let r = realization(&p, &refs, 3, 9).unwrap();
        for c in 0..3 {
            assert!((r.mobc[c][0][0] - r.bc[c][0]).abs() < 1e-10);
        }
    }
}
