use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use symcub::bayes_sard::{bsc_fss, bsc_naive, PolynomialSpace};
use symcub::bc::{bc_fss, bc_naive, BcOptions, PriorMean};
use symcub::bench::com::{run_change_of_measure, ChangeOfMeasureProblem};
use symcub::bench::csv::{com_csv, fmt_f64, illumination_csv, selftest_csv, to_csv, zcb_csv};
use symcub::bench::illumination::{run_illumination, EnvMap, IlluminationConfig, IlluminationProblem, Radiance, CHANNELS};
use symcub::bench::selftest::run_selftest;
use symcub::bench::zcb::{run_zcb, VasicekParameters, ZcbMethod};
use symcub::fss::build_point_set;
use symcub::io::{read_generators, read_multi_indices, read_square_matrix};
use symcub::kernel::{GaussianKernel, Kernel, SphereChordKernel};
use symcub::measure::{GaussianMeasure, Measure};
use symcub::mobc::{make_sphere_design, mobc_fss, mobc_naive, separable};
use symcub::{Error, Result};

/// Bayesian cubature on fully symmetric point sets.
#[derive(Parser)]
#[command(name = "symcub", version)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write CSV here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the full reference solver instead of the fully symmetric one.
    #[arg(long, global = true)]
    naive: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file with the same keys as the flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Standard Bayesian cubature.
    Bc {
        #[command(subcommand)]
        action: BcAction,
    },
    /// Bayes-Sard cubature.
    Bsc {
        #[command(subcommand)]
        action: BscAction,
    },
    /// Multi-output Bayesian cubature on the sphere.
    Mobc {
        #[command(subcommand)]
        action: MobcAction,
    },
    /// Zero coupon bond benchmark.
    Zcb(ZcbArgs),
    /// Global illumination benchmark.
    Illumination(IlluminationArgs),
    /// Symmetric change of measure benchmark.
    Com(ComArgs),
    /// Compare every fast solver with its naive reference on random configurations.
    Selftest(SelftestArgs),
}

#[derive(Subcommand)]
enum BcAction {
    Run(BcArgs),
}

#[derive(Subcommand)]
enum BscAction {
    Run(BscArgs),
}

#[derive(Subcommand)]
enum MobcAction {
    Run(MobcArgs),
}

#[derive(Args)]
struct BcArgs {
    /// Generator file: one generator per line.
    #[arg(long)]
    generators: Option<PathBuf>,
    /// gaussian or sphere_chord.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    length_scale: Option<f64>,
    /// gaussian, gaussian:<variance> or sphere.
    #[arg(long)]
    measure: Option<String>,
    /// one, gauss, cos or quadratic.
    #[arg(long)]
    integrand: Option<String>,
    /// Diagonal jitter for the naive solver.
    #[arg(long)]
    jitter: Option<f64>,
}

#[derive(Args)]
struct BscArgs {
    #[command(flatten)]
    bc: BcArgs,
    /// Total degree of the polynomial space.
    #[arg(long, conflicts_with = "alpha_generators")]
    poly_degree: Option<u32>,
    /// File of multi-index generators spanning the polynomial space.
    #[arg(long)]
    alpha_generators: Option<PathBuf>,
}

#[derive(Args)]
struct MobcArgs {
    #[arg(long)]
    outputs: Option<usize>,
    #[arg(long)]
    gen_per_output: Option<usize>,
    /// Only sphere_chord is supported.
    #[arg(long)]
    kernel: Option<String>,
    /// Output covariance file, or `brdf`.
    #[arg(long)]
    b_matrix: Option<String>,
    /// red, green or blue.
    #[arg(long)]
    channel: Option<String>,
    /// Monte Carlo samples for reference values (0 skips them).
    #[arg(long)]
    reference_samples: Option<usize>,
    #[arg(long)]
    env_map: Option<PathBuf>,
}

#[derive(Args)]
struct ZcbArgs {
    /// Comma-separated horizons T.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    #[arg(long)]
    level: Option<usize>,
    /// Comma-separated from bc, bsc1, bsc2.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct IlluminationArgs {
    #[arg(long)]
    d_max: Option<usize>,
    #[arg(long)]
    gen_per_output: Option<usize>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    env_map: Option<PathBuf>,
}

#[derive(Args)]
struct ComArgs {
    /// Comma-separated sparse-grid levels.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    length_scale: Option<f64>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Random configurations per suite.
    #[arg(long)]
    cases: Option<usize>,
}

/// Key lookup in the optional TOML config. Keys may use `-` or `_`.
struct Config(toml::Table);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Config(toml::Table::new()));
        };
        let text = symcub::io::read_text(path)?;
        let table = text.parse::<toml::Table>().map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Config(table))
    }

    fn raw(&self, key: &str) -> Option<String> {
        let value = self.0.get(key).or_else(|| self.0.get(&key.replace('-', "_")))?;
        Some(match value {
            toml::Value::String(s) => s.clone(),
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        })
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s.parse().map(Some).map_err(|_| Error::Parse {
                location: format!("config key `{key}`"),
                message: format!("cannot parse `{s}`"),
            }),
        }
    }

    /// Flag value if given, else the config value, else `default`.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(match flag {
            Some(v) => v,
            None => self.parse(key)?.unwrap_or(default),
        })
    }

    fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.parse(key),
        }
    }

    fn pick_list<T: FromStr>(&self, flag: Option<Vec<T>>, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s
                .split(',')
                .map(|t| {
                    t.trim().parse().map_err(|_| Error::Parse {
                        location: format!("config key `{key}`"),
                        message: format!("cannot parse `{t}`"),
                    })
                })
                .collect(),
        }
    }
}

struct Global {
    seed: u64,
    out: Option<PathBuf>,
    naive: bool,
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_measure(spec: &str, dim: usize) -> Result<Measure> {
    match spec {
        "gaussian" => Ok(Measure::standard_gaussian(dim)),
        "sphere" => Ok(Measure::UniformSphere),
        s if s.starts_with("gaussian:") => {
            let v: f64 = s["gaussian:".len()..]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad variance in measure `{s}`")))?;
            Ok(Measure::Gaussian(GaussianMeasure::isotropic(dim, v)?))
        }
        other => Err(Error::InvalidInput(format!(
            "unknown measure `{other}` (expected gaussian, gaussian:<variance> or sphere)"
        ))),
    }
}

fn parse_kernel(name: &str, length_scale: f64) -> Result<Arc<dyn Kernel>> {
    match name {
        "gaussian" => Ok(Arc::new(GaussianKernel::new(length_scale)?)),
        "sphere_chord" => Ok(Arc::new(SphereChordKernel)),
        other => Err(Error::InvalidInput(format!(
            "unknown kernel `{other}` (expected gaussian or sphere_chord)"
        ))),
    }
}

type BuiltinIntegrand = fn(&[f64]) -> f64;

fn builtin_integrand(name: &str) -> Result<BuiltinIntegrand> {
    fn one(_: &[f64]) -> f64 {
        1.0
    }
    fn gauss(x: &[f64]) -> f64 {
        (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp()
    }
    fn cos(x: &[f64]) -> f64 {
        x.iter().sum::<f64>().cos()
    }
    fn quadratic(x: &[f64]) -> f64 {
        1.0 + x.iter().map(|v| v * v).sum::<f64>()
    }
    match name {
        "one" => Ok(one),
        "gauss" => Ok(gauss),
        "cos" => Ok(cos),
        "quadratic" => Ok(quadratic),
        other => Err(Error::InvalidInput(format!(
            "unknown integrand `{other}` (expected one, gauss, cos or quadratic)"
        ))),
    }
}

struct Problem {
    design: symcub::fss::SymmetricPointSet,
    kernel: Arc<dyn Kernel>,
    measure: Measure,
    values: Vec<f64>,
    jitter: f64,
}

fn load_problem(args: &BcArgs, cfg: &Config) -> Result<Problem> {
    let path: PathBuf = cfg
        .pick_opt(args.generators.clone(), "generators")?
        .ok_or_else(|| Error::InvalidInput("--generators is required".into()))?;
    let design = build_point_set(&read_generators(&path)?)?;
    let kernel_name: String = cfg.pick(args.kernel.clone(), "kernel", "gaussian".into())?;
    let default_measure = if kernel_name == "sphere_chord" { "sphere" } else { "gaussian" };
    let measure_name: String = cfg.pick(args.measure.clone(), "measure", default_measure.into())?;
    let length_scale = cfg.pick(args.length_scale, "length-scale", 1.0)?;
    let integrand_name: String = cfg.pick(args.integrand.clone(), "integrand", "gauss".into())?;
    let f = builtin_integrand(&integrand_name)?;
    Ok(Problem {
        values: design.points().iter().map(f).collect(),
        measure: parse_measure(&measure_name, design.dim())?,
        kernel: parse_kernel(&kernel_name, length_scale)?,
        jitter: cfg.pick(args.jitter, "jitter", 0.0)?,
        design,
    })
}

fn run_bc(args: &BcArgs, cfg: &Config, g: &Global) -> Result<()> {
    let p = load_problem(args, cfg)?;
    let start = Instant::now();
    let result = if g.naive {
        bc_naive(
            p.design.points(),
            p.kernel.as_ref(),
            &p.measure,
            &p.values,
            PriorMean::Zero,
            BcOptions { jitter: p.jitter },
        )?
    } else {
        bc_fss(&p.design, p.kernel.as_ref(), &p.measure, &p.values)?
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let csv = to_csv(
        &["N", "J", "posterior_mean", "posterior_sd", "cond_estimate", "wall_ms"],
        [vec![
            p.design.len().to_string(),
            p.design.num_blocks().to_string(),
            fmt_f64(result.posterior_mean),
            fmt_f64(result.posterior_sd()),
            fmt_f64(result.diagnostics.condition_estimate),
            format!("{wall_ms:.3}"),
        ]],
    )?;
    emit(&g.out, &csv)
}

fn run_bsc(args: &BscArgs, cfg: &Config, g: &Global) -> Result<()> {
    let p = load_problem(&args.bc, cfg)?;
    let m = p.design.dim();
    let space = match cfg.pick_opt(args.alpha_generators.clone(), "alpha-generators")? {
        Some(path) => PolynomialSpace::from_generators(m, &read_multi_indices(&path)?)?,
        None => PolynomialSpace::total_degree(m, cfg.pick(args.poly_degree, "poly-degree", 2)?)?,
    };
    let start = Instant::now();
    let result = if g.naive {
        bsc_naive(p.design.points(), p.kernel.as_ref(), &p.measure, &space, &p.values)?
    } else {
        bsc_fss(&p.design, p.kernel.as_ref(), &p.measure, &space, &p.values)?
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let csv = to_csv(
        &["N", "J", "Q", "posterior_mean", "posterior_sd", "cond_estimate", "wall_ms"],
        [vec![
            p.design.len().to_string(),
            p.design.num_blocks().to_string(),
            space.len().to_string(),
            fmt_f64(result.posterior_mean),
            fmt_f64(result.posterior_sd()),
            fmt_f64(result.diagnostics.condition_estimate),
            format!("{wall_ms:.3}"),
        ]],
    )?;
    emit(&g.out, &csv)
}

fn load_radiance(flag: Option<PathBuf>, cfg: &Config) -> Result<Radiance> {
    Ok(match cfg.pick_opt(flag, "env-map")? {
        Some(path) => Radiance::Map(Arc::new(EnvMap::read(&path)?)),
        None => Radiance::Synthetic,
    })
}

fn run_mobc(args: &MobcArgs, cfg: &Config, g: &Global) -> Result<()> {
    let outputs = cfg.pick(args.outputs, "outputs", 5)?;
    let blocks = cfg.pick(args.gen_per_output, "gen-per-output", 3)?;
    let kernel_name: String = cfg.pick(args.kernel.clone(), "kernel", "sphere_chord".into())?;
    if kernel_name != "sphere_chord" {
        return Err(Error::InvalidInput(format!(
            "mobc run supports only the sphere_chord kernel, got `{kernel_name}`"
        )));
    }
    let channel_name: String = cfg.pick(args.channel.clone(), "channel", "red".into())?;
    let channel = CHANNELS
        .iter()
        .position(|c| *c == channel_name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown channel `{channel_name}`")))?;
    let samples = cfg.pick(args.reference_samples, "reference-samples", 0)?;
    let problem = IlluminationProblem::new(outputs, load_radiance(args.env_map.clone(), cfg)?)?;
    let b_spec: String = cfg.pick(args.b_matrix.clone(), "b-matrix", "brdf".into())?;
    let b = if b_spec == "brdf" {
        problem.output_covariance()
    } else {
        read_square_matrix(Path::new(&b_spec))?
    };
    let kernel = separable(b, Arc::new(SphereChordKernel))?;
    let design = make_sphere_design(outputs, blocks, g.seed)?;
    let values = problem.values(&design).swap_remove(channel);
    let measure = Measure::UniformSphere;
    let result = if g.naive {
        mobc_naive(&design.point_sets(), &kernel, &measure, &values)?
    } else {
        mobc_fss(&design, &kernel, &measure, &values)?
    };
    let references = (samples > 0).then(|| problem.monte_carlo_references(samples, g.seed.wrapping_add(1)));
    let rows = (0..outputs).map(|d| {
        let mean = result.posterior_mean[d];
        vec![
            (d + 1).to_string(),
            design.points_per_output().to_string(),
            blocks.to_string(),
            fmt_f64(mean),
            fmt_f64(result.posterior_sd(d)),
            references
                .as_ref()
                .map(|r| fmt_f64(((r[d][channel] - mean) / r[d][channel]).abs()))
                .unwrap_or_default(),
        ]
    });
    let csv = to_csv(&["d", "N", "J", "posterior_mean", "posterior_sd", "relative_error"], rows)?;
    emit(&g.out, &csv)
}

fn run_zcb_cmd(args: &ZcbArgs, cfg: &Config, g: &Global) -> Result<()> {
    let defaults = VasicekParameters::default();
    let params = VasicekParameters {
        kappa: cfg.pick(args.kappa, "kappa", defaults.kappa)?,
        theta: cfg.pick(args.theta, "theta", defaults.theta)?,
        sigma: cfg.pick(args.sigma, "sigma", defaults.sigma)?,
        r0: cfg.pick(args.r0, "r0", defaults.r0)?,
        dt: cfg.pick(args.dt, "dt", defaults.dt)?,
    };
    let horizons = cfg.pick_list(args.horizons.clone(), "horizons", vec![5, 10, 20, 30])?;
    let level = cfg.pick(args.level, "level", 2)?;
    let names = cfg.pick_list(
        args.methods.clone(),
        "methods",
        vec!["bc".to_string(), "bsc1".to_string(), "bsc2".to_string()],
    )?;
    let methods = names
        .iter()
        .map(|n| match n.as_str() {
            "bc" => Ok(ZcbMethod::Bc),
            s if s.starts_with("bsc") => s[3..]
                .parse()
                .map(ZcbMethod::Bsc)
                .map_err(|_| Error::InvalidInput(format!("bad method `{s}`"))),
            s => Err(Error::InvalidInput(format!("unknown method `{s}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = run_zcb(&horizons, level, params, &methods)?;
    emit(&g.out, &zcb_csv(&rows)?)
}

fn run_illumination_cmd(args: &IlluminationArgs, cfg: &Config, g: &Global) -> Result<()> {
    let defaults = IlluminationConfig::default();
    let config = IlluminationConfig {
        d_max: cfg.pick(args.d_max, "d-max", defaults.d_max)?,
        blocks: cfg.pick(args.gen_per_output, "gen-per-output", defaults.blocks)?,
        realizations: cfg.pick(args.realizations, "realizations", defaults.realizations)?,
        mc_samples: cfg.pick(args.mc_samples, "mc-samples", defaults.mc_samples)?,
        seed: g.seed,
    };
    let problem = IlluminationProblem::new(config.d_max, load_radiance(args.env_map.clone(), cfg)?)?;
    let rows = run_illumination(&problem, &config)?;
    emit(&g.out, &illumination_csv(&rows, &config)?)
}

fn run_com_cmd(args: &ComArgs, cfg: &Config, g: &Global) -> Result<()> {
    let levels = cfg.pick_list(args.levels.clone(), "levels", vec![1, 2, 3, 4])?;
    let length_scale = cfg.pick(args.length_scale, "length-scale", 0.8)?;
    let rows = run_change_of_measure(&ChangeOfMeasureProblem::standard(), &levels, length_scale)?;
    emit(&g.out, &com_csv(&rows)?)
}

/// Returns whether every check passed.
fn run_selftest_cmd(args: &SelftestArgs, cfg: &Config, g: &Global) -> Result<bool> {
    let cases = cfg.pick(args.cases, "cases", 20)?;
    let checks = run_selftest(cases, g.seed)?;
    emit(&g.out, &selftest_csv(&checks)?)?;
    let failed = checks.iter().filter(|c| !c.passed()).count();
    eprintln!("selftest: {} checks, {failed} failed", checks.len());
    Ok(failed == 0)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = Config::load(cli.config.as_deref())?;
    let threads = cfg.pick_opt(cli.threads, "threads")?;
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let g = Global {
        seed: cfg.pick(cli.seed, "seed", 0)?,
        out: cfg.pick_opt(cli.out, "out")?,
        naive: cli.naive || cfg.parse("naive")?.unwrap_or(false),
    };
    match &cli.command {
        Command::Bc { action: BcAction::Run(a) } => run_bc(a, &cfg, &g)?,
        Command::Bsc { action: BscAction::Run(a) } => run_bsc(a, &cfg, &g)?,
        Command::Mobc { action: MobcAction::Run(a) } => run_mobc(a, &cfg, &g)?,
        Command::Zcb(a) => run_zcb_cmd(a, &cfg, &g)?,
        Command::Illumination(a) => run_illumination_cmd(a, &cfg, &g)?,
        Command::Com(a) => run_com_cmd(a, &cfg, &g)?,
        Command::Selftest(a) => return run_selftest_cmd(a, &cfg, &g),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
