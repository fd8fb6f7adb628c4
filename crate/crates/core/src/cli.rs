//! Command-line front end. Every command reads an optional configuration
//! file, writes CSV (or a tree artifact) headed by the hash of the resolved
//! configuration, and maps failures to exit codes: 2 configuration,
//! 3 numerical, 4 I/O.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analytic::{gbm_survival_f, implied_vol};
use crate::config::{ConfigError, ExperimentConfig, SurvivalSource};
use crate::credit::{black_quote, par_spread, pricing_grid, time_zero_curve, CdsContract, CreditCurve, PsoEngine, QUAD_STEPS};
use crate::error::Error;
use crate::filter::{filter_forward, survival_curve, survival_surface, ObservationPath};
use crate::model::{simulate_observation, GbmSpec, TimeGrid};
use crate::oracle::{
    brute_force_quantized, mc_first_passage, mc_first_passage_on, particle_filter_estimate, ParticleOptions,
    PassageOptions, PassageScheme,
};
use crate::quantizer::{build_tree, uniform_sizes, QuantizationTree};

#[derive(Debug, Parser)]
#[command(name = "quantcredit", version, about = "Quantized filtering, default probabilities and CDS option prices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (`key = value` lines, `#` comments).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel parts.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file (stdout when absent, except for `quantize`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build a quantization tree and save it.
    Quantize,
    /// Quantized against closed-form survival from the observation date.
    FbarConvergence,
    /// Filtered survival probabilities for one observation path.
    DefaultProb,
    /// Time-0 par spread of the forward CDS over an (lgd, rate) sweep.
    CdsPar,
    /// Payer CDS option prices and Black volatilities.
    CdsoTable,
    /// Cross-checks against the independent oracles.
    Diagnostics,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Quantize => "quantize",
            Self::FbarConvergence => "fbar-convergence",
            Self::DefaultProb => "default-prob",
            Self::CdsPar => "cds-par",
            Self::CdsoTable => "cdso-table",
            Self::Diagnostics => "diagnostics",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Numerical(Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io { .. } => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Extinct { .. }
            | Error::OutOfBand { .. }
            | Error::NumericalOverflow { .. }
            | Error::Quantization { .. }
            | Error::WeightCollapse { .. } => Self::Numerical(e),
            other => Self::Config(ConfigError {
                line: 0,
                message: other.to_string(),
            }),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Text produced by a command. `failure` carries a numerical problem that
/// did not prevent the output from being written.
#[derive(Debug, Default)]
pub struct Report {
    pub body: String,
    pub extra_files: Vec<(PathBuf, String)>,
    pub failure: Option<Error>,
}

fn header(cmd: Command, cfg: &ExperimentConfig) -> String {
    format!("# quantcredit {}\n# config-sha256 {}\n", cmd.name(), cfg.hash())
}

fn analytic_f(spec: &GbmSpec) -> impl Fn(f64, f64, f64) -> f64 + Sync + use<> {
    let (mu, sigma, a) = (spec.mu, spec.sigma, spec.barrier);
    move |s, u, x| gbm_survival_f(mu, sigma, a, x, u - s)
}

fn first_size(cfg: &ExperimentConfig) -> usize {
    cfg.sizes[0]
}

/// Build the tree of `cmd_quantize`.
pub fn quantize(cfg: &ExperimentConfig) -> Result<QuantizationTree, CliError> {
    let grid = cfg.time_grid()?;
    let steps = grid.steps();
    Ok(build_tree(cfg.spec().into_arc(), grid, &uniform_sizes(steps, first_size(cfg)))?)
}

pub fn cmd_quantize(cfg: &ExperimentConfig) -> Result<(QuantizationTree, Report), CliError> {
    let tree = quantize(cfg)?;
    let mut body = header(Command::Quantize, cfg);
    let mut buf = Vec::new();
    tree.write_to(&mut buf).map_err(io_err("serializing tree"))?;
    body.push_str(&String::from_utf8(buf).expect("tree format is ASCII"));
    Ok((
        tree,
        Report {
            body,
            ..Report::default()
        },
    ))
}

/// Per-step distortion summary printed by `quantize`.
pub fn distortion_summary(tree: &QuantizationTree) -> String {
    let mut s = String::from("step,time,points,distortion,iterations,converged\n");
    for (k, r) in tree.reports().iter().enumerate() {
        let _ = writeln!(
            s,
            "{k},{},{},{:.6e},{},{}",
            tree.time_grid().time(k),
            tree.grid(k).len(),
            r.distortion,
            r.iterations,
            r.converged
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbarRow {
    pub size: usize,
    pub t_n: f64,
    pub x: f64,
    pub f_exact: f64,
    pub f_hat: f64,
}

/// Quantized and closed-form survival from the grid point nearest `fbar_x`
/// at the observation date, for every grid size and every horizon.
pub fn fbar_convergence(cfg: &ExperimentConfig) -> Result<Vec<FbarRow>, CliError> {
    let grid = cfg.time_grid()?;
    let spec = cfg.spec();
    let f = analytic_f(&spec);
    let m = grid.obs_index();
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        let tree = build_tree(spec.into_arc(), grid.clone(), &uniform_sizes(grid.steps(), size))?;
        let i = tree.grid(m).nearest(cfg.fbar_x);
        let x = tree.grid(m).points()[i];
        let surface = survival_surface(&tree, m, grid.steps())?;
        for n in m + 1..=grid.steps() {
            let t_n = grid.time(n);
            if t_n < cfg.horizon_start - 1e-12 {
                continue;
            }
            rows.push(FbarRow {
                size,
                t_n,
                x,
                f_exact: f(grid.time(m), t_n, x),
                f_hat: surface[i][n - m],
            });
        }
    }
    Ok(rows)
}

/// Largest absolute error per grid size, in the order of `sizes`.
pub fn sup_errors(rows: &[FbarRow], sizes: &[usize]) -> Vec<f64> {
    sizes
        .iter()
        .map(|&n| {
            rows.iter()
                .filter(|r| r.size == n)
                .map(|r| (r.f_hat - r.f_exact).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

pub fn cmd_fbar_convergence(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let rows = fbar_convergence(cfg)?;
    let mut body = header(Command::FbarConvergence, cfg);
    body.push_str("size,t_n,x,f_exact,f_hat,abs_error\n");
    for r in &rows {
        let _ = writeln!(
            body,
            "{},{:.6},{:.6},{:.10},{:.10},{:.3e}",
            r.size,
            r.t_n,
            r.x,
            r.f_exact,
            r.f_hat,
            (r.f_hat - r.f_exact).abs()
        );
    }
    for (n, e) in cfg.sizes.iter().zip(sup_errors(&rows, &cfg.sizes)) {
        let _ = writeln!(body, "# sup_abs_error size={n} {e:.6e}");
    }
    Ok(Report {
        body,
        ..Report::default()
    })
}

fn observation(cfg: &ExperimentConfig, grid: &TimeGrid, spec: &GbmSpec) -> Result<ObservationPath, CliError> {
    match &cfg.obs_path {
        Some(path) => {
            let file = File::open(path).map_err(io_err(format!("opening {}", path.display())))?;
            let obs = ObservationPath::read_csv(BufReader::new(file))?;
            obs.check_against(grid)?;
            Ok(obs)
        }
        None => Ok(ObservationPath::on_grid(grid, simulate_observation(spec, grid, cfg.seed, 0)?)?),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefaultProbResult {
    pub observation: ObservationPath,
    pub times: Vec<f64>,
    pub p_full: Vec<f64>,
    pub p_y_only: Vec<f64>,
    pub azema: f64,
}

/// Survival probabilities after the observation date with and without the
/// knowledge of survival so far. Defaults: horizon 11, quantized survival.
pub fn default_prob(cfg: &ExperimentConfig) -> Result<DefaultProbResult, CliError> {
    let grid = cfg.time_grid()?;
    let spec = cfg.spec();
    let tree = build_tree(spec.into_arc(), grid.clone(), &uniform_sizes(grid.steps(), first_size(cfg)))?;
    let obs = observation(cfg, &grid, &spec)?;
    let horizons: Vec<usize> = (grid.obs_index()..=grid.steps())
        .filter(|&n| grid.time(n) >= cfg.horizon_start - 1e-12)
        .collect();
    let f = analytic_f(&spec);
    let analytic: Option<&(dyn Fn(f64, f64, f64) -> f64 + Sync)> = match cfg.survival {
        SurvivalSource::Analytic => Some(&f),
        SurvivalSource::Quantized => None,
    };
    let curve = survival_curve(&tree, &obs, &horizons, analytic)?;
    if curve.extinct {
        return Err(CliError::Numerical(Error::Extinct { step: grid.obs_index() }));
    }
    Ok(DefaultProbResult {
        observation: obs,
        times: horizons.iter().map(|&n| grid.time(n)).collect(),
        p_full: curve.p_full,
        p_y_only: curve.p_y_only,
        azema: curve.azema,
    })
}

pub fn cmd_default_prob(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let r = default_prob(cfg)?;
    let mut body = header(Command::DefaultProb, cfg);
    let _ = writeln!(body, "# azema {:.12}", r.azema);
    body.push_str("t_n,p_full,p_y_only\n");
    for ((t, pf), py) in r.times.iter().zip(&r.p_full).zip(&r.p_y_only) {
        let _ = writeln!(body, "{t:.6},{pf:.12},{py:.12}");
    }
    let mut obs = header(Command::DefaultProb, cfg);
    let mut buf = Vec::new();
    r.observation.write_csv(&mut buf).map_err(io_err("formatting observation path"))?;
    obs.push_str(&String::from_utf8(buf).expect("CSV is ASCII"));
    let extra = match &cfg.out {
        Some(p) => vec![(sibling(p, "obs"), obs)],
        None => {
            body.push('\n');
            body.push_str(&obs);
            Vec::new()
        }
    };
    Ok(Report {
        body,
        extra_files: extra,
        failure: None,
    })
}

/// `dir/name.csv` -> `dir/name.tag.csv`
fn sibling(p: &Path, tag: &str) -> PathBuf {
    let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match p.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    p.with_file_name(name)
}

fn contract(cfg: &ExperimentConfig, lgd: f64, rate: f64) -> Result<CdsContract, CliError> {
    Ok(CdsContract::standard(cfg.ta, cfg.tb, cfg.spread_bps * 1e-4, lgd, rate, cfg.alpha)?)
}

/// Time-0 survival curve on the dates of `grid` up to `tb`.
fn curve_zero(
    cfg: &ExperimentConfig,
    spec: &GbmSpec,
    grid: &TimeGrid,
    tree: Option<&QuantizationTree>,
) -> Result<CreditCurve, CliError> {
    let last = grid
        .index_of(cfg.tb, 1e-9)
        .ok_or_else(|| Error::InvalidInput(format!("maturity {} is not a grid date", cfg.tb)))?;
    Ok(match (cfg.survival, tree) {
        (SurvivalSource::Quantized, Some(tree)) => time_zero_curve(tree, last)?,
        _ => {
            let f = analytic_f(spec);
            CreditCurve::from_fn(grid.times()[..=last].to_vec(), |t| f(0.0, t, spec.x0))?
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParRow {
    pub lgd: f64,
    pub rate: f64,
    pub par_spread: f64,
    pub protection: f64,
    pub duration: f64,
}

/// Par spread seen at time 0 for every `(lgd, rate)` pair. Default volatility
/// 5%.
pub fn cds_par(cfg: &ExperimentConfig) -> Result<Vec<ParRow>, CliError> {
    let spec = cfg.spec();
    let base = contract(cfg, cfg.lgd, cfg.rate)?;
    let grid = pricing_grid(&base, cfg.obs_steps)?;
    let tree = match cfg.survival {
        SurvivalSource::Quantized => Some(build_tree(
            spec.into_arc(),
            grid.clone(),
            &uniform_sizes(grid.steps(), first_size(cfg)),
        )?),
        SurvivalSource::Analytic => None,
    };
    let curve = curve_zero(cfg, &spec, &grid, tree.as_ref())?;
    let mut rows = Vec::new();
    for &lgd in &cfg.lgd_list {
        for &rate in &cfg.rate_list {
            let c = contract(cfg, lgd, rate)?;
            let legs = crate::credit::legs(&curve, &c, QUAD_STEPS)?;
            rows.push(ParRow {
                lgd,
                rate,
                par_spread: par_spread(&curve, &c)?,
                protection: legs.protection,
                duration: legs.duration,
            });
        }
    }
    Ok(rows)
}

pub fn cmd_cds_par(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let rows = cds_par(cfg)?;
    let mut body = header(Command::CdsPar, cfg);
    body.push_str("lgd,rate,par_spread_bps,protection,duration\n");
    for r in &rows {
        let _ = writeln!(
            body,
            "{},{},{:.4},{:.10},{:.10}",
            r.lgd,
            r.rate,
            r.par_spread * 1e4,
            r.protection,
            r.duration
        );
    }
    Ok(Report {
        body,
        ..Report::default()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdsoCell {
    pub delta: f64,
    pub strike_rel: f64,
    pub strike: f64,
    pub forward: f64,
    pub price: f64,
    pub std_error: f64,
    /// `None` when the price lies outside the Black no-arbitrage band.
    pub implied_vol: Option<f64>,
    pub extinct_paths: usize,
}

/// Payer option prices at strikes `strikes · k*` for every `delta`, with
/// the forward spread `k*` implied by the time-0 curve. Default volatility 5%.
pub fn cdso_table(cfg: &ExperimentConfig) -> Result<Vec<CdsoCell>, CliError> {
    let base = contract(cfg, cfg.lgd, cfg.rate)?;
    let grid = pricing_grid(&base, cfg.obs_steps)?;
    let sizes = uniform_sizes(grid.steps(), first_size(cfg));
    let mut cells = Vec::new();
    for &delta in &cfg.deltas {
        let spec = cfg.spec().with_delta(delta);
        let tree = build_tree(spec.into_arc(), grid.clone(), &sizes)?;
        let curve0 = curve_zero(cfg, &spec, &grid, Some(&tree))?;
        let forward = par_spread(&curve0, &base)?;
        if !(forward > 0.0) {
            return Err(CliError::Numerical(Error::DegenerateContract(format!(
                "zero forward spread at delta {delta}"
            ))));
        }
        let strikes: Vec<f64> = cfg.strikes.iter().map(|r| r * forward).collect();
        let f = analytic_f(&spec);
        let engine = match cfg.survival {
            SurvivalSource::Analytic => PsoEngine::with_survival(&tree, &base, Some(&f))?,
            SurvivalSource::Quantized => PsoEngine::new(&tree, &base)?,
        };
        let estimates = engine.price(&strikes, cfg.paths, cfg.seed)?;
        for (&rel, est) in cfg.strikes.iter().zip(estimates) {
            let quote = black_quote(&base.with_spread(est.strike), &curve0)?;
            cells.push(CdsoCell {
                delta,
                strike_rel: rel,
                strike: est.strike,
                forward,
                price: est.price,
                std_error: est.std_error,
                implied_vol: implied_vol(est.price, &quote).ok(),
                extinct_paths: est.extinct_paths,
            });
        }
    }
    Ok(cells)
}

pub fn cmd_cdso_table(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let cells = cdso_table(cfg)?;
    let mut body = header(Command::CdsoTable, cfg);
    body.push_str("delta,strike_rel,strike_bps,forward_bps,price,std_error,implied_vol,extinct_paths\n");
    let mut failure = None;
    for c in &cells {
        let vol = match c.implied_vol {
            Some(v) => format!("{v:.6}"),
            None => {
                failure.get_or_insert(Error::OutOfBand {
                    price: c.price,
                    lower: f64::NAN,
                    upper: f64::NAN,
                    bound: "outside the Black band at strike",
                });
                "NaN".into()
            }
        };
        let _ = writeln!(
            body,
            "{},{},{:.4},{:.4},{:.8},{:.8},{vol},{}",
            c.delta,
            c.strike_rel,
            c.strike * 1e4,
            c.forward * 1e4,
            c.price,
            c.std_error,
            c.extinct_paths
        );
    }
    Ok(Report {
        body,
        extra_files: Vec::new(),
        failure,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub check: String,
    pub estimate: f64,
    pub oracle: f64,
    pub std_error: f64,
}

/// Quantized estimates next to their oracle counterparts: filtered survival
/// against a particle filter, tree survival against Monte Carlo, closed form
/// against Monte Carlo, and the tree filter against path enumeration.
pub fn diagnostics(cfg: &ExperimentConfig) -> Result<Vec<DiagnosticRow>, CliError> {
    let grid = cfg.time_grid()?;
    let spec = cfg.spec();
    let tree = build_tree(spec.into_arc(), grid.clone(), &uniform_sizes(grid.steps(), first_size(cfg)))?;
    let obs = observation(cfg, &grid, &spec)?;
    let f = analytic_f(&spec);
    let (m, last) = (grid.obs_index(), grid.steps());
    let (tm, tn) = (grid.time(m), grid.time(last));
    let mut rows = Vec::new();

    let curve = survival_curve(&tree, &obs, &[last], Some(&f))?;
    let pf = particle_filter_estimate(
        &spec,
        &grid,
        &obs,
        &|x| f(tm, tn, x),
        &ParticleOptions {
            particles: cfg.paths,
            replicates: 20,
            seed: cfg.seed,
            uninformative: false,
        },
    )?;
    rows.push(DiagnosticRow {
        check: format!("p_full t={tn}"),
        estimate: curve.p_full[0],
        oracle: pf.p_full,
        std_error: pf.p_full_se,
    });
    rows.push(DiagnosticRow {
        check: format!("azema t={tm}"),
        estimate: curve.azema,
        oracle: pf.azema,
        std_error: pf.azema_se,
    });

    let surface = survival_surface(&tree, m, last)?;
    let points = tree.grid(m).points();
    let dates = &grid.times()[m..=last];
    let alive: Vec<usize> = (0..points.len()).filter(|&i| points[i] > spec.barrier).collect();
    let mut picks: Vec<usize> = [0.1, 0.3, 0.5, 0.7, 0.9]
        .iter()
        .filter_map(|q| alive.get(((alive.len().max(1) - 1) as f64 * q).round() as usize).copied())
        .collect();
    picks.dedup();
    for i in picks {
        let (p, se) = mc_first_passage_on(
            &spec,
            points[i],
            dates,
            &PassageOptions {
                steps: last - m,
                paths: cfg.paths,
                bridge_corrected: true,
                seed: cfg.seed,
                scheme: PassageScheme::Euler,
            },
        )?;
        rows.push(DiagnosticRow {
            check: format!("F_hat x={:.4}", points[i]),
            estimate: surface[i][last - m],
            oracle: p,
            std_error: se,
        });
    }

    let (p, se) = mc_first_passage(
        &spec,
        spec.x0,
        0.0,
        tn,
        &PassageOptions {
            steps: 16,
            paths: cfg.paths,
            bridge_corrected: true,
            seed: cfg.seed,
            scheme: PassageScheme::ExactGbm {
                mu: spec.mu,
                sigma: spec.sigma,
            },
        },
    )?;
    rows.push(DiagnosticRow {
        check: format!("F_exact x0 t={tn}"),
        estimate: f(0.0, tn, spec.x0),
        oracle: p,
        std_error: se,
    });

    let tiny_grid = TimeGrid::uniform(3.0 * grid.dt(0), 3)?;
    let tiny = build_tree(spec.into_arc(), tiny_grid.clone(), &[1, 3, 3, 3])?;
    let tiny_obs = ObservationPath::on_grid(&tiny_grid, simulate_observation(&spec, &tiny_grid, cfg.seed, 1)?)?;
    let brute: f64 = brute_force_quantized(&tiny, &tiny_obs, true)?.iter().sum();
    let fwd: f64 = filter_forward(&tiny, &tiny_obs, true)?.raw().iter().sum();
    rows.push(DiagnosticRow {
        check: "filter mass m=3 N=3".into(),
        estimate: fwd,
        oracle: brute,
        std_error: 0.0,
    });
    Ok(rows)
}

pub fn cmd_diagnostics(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let rows = diagnostics(cfg)?;
    let mut body = header(Command::Diagnostics, cfg);
    body.push_str("check,estimate,oracle,std_error,z\n");
    for r in &rows {
        let z = if r.std_error > 0.0 {
            (r.estimate - r.oracle) / r.std_error
        } else {
            0.0
        };
        let _ = writeln!(
            body,
            "{},{:.10},{:.10},{:.3e},{:.2}",
            r.check, r.estimate, r.oracle, r.std_error, z
        );
    }
    Ok(Report {
        body,
        ..Report::default()
    })
}

/// Resolve the configuration of `cli`: file, command defaults, then flags.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    match cli.command {
        Command::DefaultProb => {
            cfg.default_t_end(11.0);
            cfg.default_survival(SurvivalSource::Quantized);
        }
        Command::CdsPar | Command::CdsoTable => cfg.default_sigma(0.05),
        _ => {}
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    let file = File::create(path).map_err(io_err(format!("creating {}", path.display())))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(format!("writing {}", path.display())))
}

pub const DEFAULT_TREE_FILE: &str = "quantcredit-tree.txt";

/// Run `cli`, writing results and progress to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cfg = resolve_config(cli)?;
    let report = match cli.command {
        Command::Quantize => {
            let (tree, mut report) = cmd_quantize(&cfg)?;
            let path = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_TREE_FILE));
            write_file(&path, &report.body)?;
            report.body = header(Command::Quantize, &cfg) + &distortion_summary(&tree);
            stdout.write_all(report.body.as_bytes()).map_err(io_err("writing stdout"))?;
            return Ok(());
        }
        Command::FbarConvergence => cmd_fbar_convergence(&cfg)?,
        Command::DefaultProb => cmd_default_prob(&cfg)?,
        Command::CdsPar => cmd_cds_par(&cfg)?,
        Command::CdsoTable => cmd_cdso_table(&cfg)?,
        Command::Diagnostics => cmd_diagnostics(&cfg)?,
    };
    match &cfg.out {
        Some(path) => write_file(path, &report.body)?,
        None => stdout.write_all(report.body.as_bytes()).map_err(io_err("writing stdout"))?,
    }
    for (path, text) in &report.extra_files {
        write_file(path, text)?;
    }
    match report.failure {
        Some(e) => Err(CliError::Numerical(e)),
        None => Ok(()),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
