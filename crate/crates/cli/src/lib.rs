//! Command-line driver: parses a [`RunConfig`], runs one subcommand and maps
//! failures onto exit codes.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 fixed-point
//! non-convergence, 4 internal consistency failure.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use tubeinv::analysis::{
    ambiguity_pair, curve_gap, perturb_sinusoidal, run_monte_carlo, series_gap_estimate,
    stability_experiment, McConfig, McOutcome,
};
use tubeinv::forward::{build_curve, sample_profile};
use tubeinv::inverse::{recover, RecoveryConfig, RecoveryResult};
use tubeinv::tubes::{simulate, uniform_times, PumpHistory, Tube, TubeSystem};
use tubeinv::{DisplacementCurve, Measure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] tubeinv::Error),
    #[error("{0}")]
    Input(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(tubeinv::Error::Convergence(_)) => EXIT_CONVERGENCE,
            CliError::Core(tubeinv::Error::InternalConsistency(_)) => EXIT_INTERNAL,
            _ => EXIT_INVALID,
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Core(e) => e.kind(),
            CliError::Input(_) => "invalid_input",
            CliError::Io { .. } => "io",
        };
        let mut v = json!({ "error": kind, "message": self.to_string() });
        if let CliError::Core(tubeinv::Error::Convergence(f)) = self {
            v["iterations"] = json!(f.iterations);
            v["last_change"] = json!(f.last_change);
            v["tolerance"] = json!(f.tolerance);
        }
        v
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "tubeinv", version, about = "Parallel-tube displacement: forward curves, inversion and experiments")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Displacement curve of a measure given as JSON.
    Forward(ForwardArgs),
    /// Recover V_w, the harmonic cumulative and the density from a curve CSV.
    Invert(InvertArgs),
    /// Time-domain simulation of a finite tube system.
    Tubes(TubesArgs),
    /// Inversion of a curve and of a perturbed copy, against the stability bound.
    Stability(StabilityArgs),
    /// Monte Carlo sensitivity constant over seeded random atom pairs.
    Mc(McArgs),
    /// Gap between the curves of a partially matching pair of measures.
    Ambiguity(AmbiguityArgs),
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    /// Measure JSON: {"atoms":[{"L":..,"S":..}], "pieces":[{"a":..,"b":..,"rho":..}]}
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long)]
    pub kappa: f64,
    /// Defaults to the top of the support.
    #[arg(long)]
    pub alpha_max: Option<f64>,
    /// Number of equally spaced alpha samples.
    #[arg(long, default_value_t = 5001)]
    pub n_grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1001)]
    pub n_grid: usize,
    /// Sup-change stopping threshold; defaults to 1e-10 * v_max.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    /// Lower edge of the density window; defaults to two grid steps.
    #[arg(long)]
    pub alpha_min: Option<f64>,
    #[arg(long, default_value_t = 4)]
    pub quad_order: usize,
    /// Unscaled slope read-off and (1+κ)/κ density prefactor, for comparison runs.
    #[arg(long)]
    pub paper_literal: bool,
}

impl SolverArgs {
    pub fn recovery_config(&self) -> RecoveryConfig {
        RecoveryConfig {
            n_grid: self.n_grid,
            tol: self.tol,
            max_iter: self.max_iter,
            alpha_min: self.alpha_min,
            quad_order: self.quad_order,
            initial_value: 0.0,
            paper_literal: self.paper_literal,
        }
    }
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// CSV with columns "total" and "water" (or "Vw").
    #[arg(long)]
    pub curve: PathBuf,
    /// JSON {"kappa":..,"alpha_max":..}; flags take precedence.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output CSV: alpha,V,Phi,f.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Diagnostics JSON; printed to stderr when omitted.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TubesArgs {
    /// JSON {"tubes":[{"L":..,"S":..}], "pump":{"breakpoints":[..],"c":[..]}}; pump defaults to c = 1.
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub t_max: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Output CSV: t,F,Vw,Vo,l_1..l_n.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Breakthrough times as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Base measure JSON; its curve is perturbed by delta0 * sin(pi x / v_max).
    #[arg(long, conflicts_with_all = ["curve", "curve2"])]
    pub measure: Option<PathBuf>,
    /// First curve CSV (use with --curve2 instead of --measure).
    #[arg(long, requires = "curve2")]
    pub curve: Option<PathBuf>,
    #[arg(long, requires = "curve")]
    pub curve2: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, default_value_t = 10.0)]
    pub alpha_max: f64,
    /// Perturbation amplitude relative to v_max.
    #[arg(long, default_value_t = 1e-3)]
    pub delta_rel: f64,
    /// Curve samples when building from --measure.
    #[arg(long, default_value_t = 5001)]
    pub samples: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Accepted pairs to collect.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    #[arg(long, default_value_t = 10.0)]
    pub alpha_max: f64,
    #[arg(long, default_value_t = 2001)]
    pub n_grid: usize,
    #[arg(long, default_value_t = 200_000)]
    pub max_attempts: usize,
    /// CSV: seed,n1,n2,v1max,v2max,accepted,c
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON; printed to stderr when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AmbiguityArgs {
    #[arg(long, default_value_t = 2.0)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 1.2)]
    pub k: f64,
    #[arg(long, default_value_t = 0.5)]
    pub kappa: f64,
    /// Defaults to alpha0.
    #[arg(long)]
    pub probe: Option<f64>,
    #[arg(long, default_value_t = 2001)]
    pub n_grid: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs one parsed command.
pub fn run(config: &RunConfig) -> CliResult<()> {
    match &config.command {
        Command::Forward(a) => cmd_forward(a),
        Command::Invert(a) => cmd_invert(a),
        Command::Tubes(a) => cmd_tubes(a),
        Command::Stability(a) => cmd_stability(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Ambiguity(a) => cmd_ambiguity(a),
    }
}

/// Full process behaviour behind `main`: run, report errors as JSON on
/// stderr, return the exit code.
pub fn exit_code(config: &RunConfig) -> i32 {
    match run(config) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(s)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    let io_err = |source| CliError::Io {
        path: path.map_or("<stdout>".into(), |p| p.display().to_string()),
        source,
    };
    match path {
        Some(p) => fs::write(p, bytes).map_err(io_err),
        None => io::stdout().lock().write_all(bytes).map_err(io_err),
    }
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::input(e.to_string()))?;
    s.push('\n');
    write_output(path, s.as_bytes())
}

/// Diagnostics go to the file if given, else to stderr.
fn write_side_json(path: Option<&Path>, value: &impl Serialize) -> CliResult<()> {
    match path {
        Some(_) => write_json(path, value),
        None => {
            eprintln!("{}", serde_json::to_string(value).map_err(|e| CliError::input(e.to_string()))?);
            Ok(())
        }
    }
}

/// Builds CSV text from a header and rows of already formatted fields.
fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::input(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::input(e.to_string()))
}

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x}")
}

fn strs(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// CSV rows `alpha,Vw,Vo,total,water_cut` for a measure.
pub fn forward_csv(mu: &Measure, kappa: f64, alpha_max: f64, n_samples: usize) -> CliResult<Vec<u8>> {
    let rows = sample_profile(mu, kappa, alpha_max, n_samples)?;
    csv_bytes(
        &strs(&["alpha", "Vw", "Vo", "total", "water_cut"]),
        rows.iter()
            .map(|[a, w, o, wc]| vec![num(*a), num(*w), num(*o), num(w + o), num(*wc)]),
    )
}

/// Reads `(total, water)` samples; the water column may be named `water` or `Vw`.
pub fn parse_curve_csv(text: &str, kappa: f64, alpha_max: f64) -> CliResult<DisplacementCurve> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| CliError::input(format!("curve CSV: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let xi = col("total").ok_or_else(|| CliError::input("curve CSV has no 'total' column"))?;
    let gi = col("water")
        .or_else(|| col("Vw"))
        .ok_or_else(|| CliError::input("curve CSV has no 'water' (or 'Vw') column"))?;
    let (mut x, mut g) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(format!("curve CSV: {e}")))?;
        let field = |i: usize| -> CliResult<f64> {
            let s = rec.get(i).unwrap_or("").trim();
            s.parse()
                .map_err(|_| CliError::input(format!("curve CSV row {}: bad number '{s}'", line + 2)))
        };
        x.push(field(xi)?);
        g.push(field(gi)?);
    }
    Ok(DisplacementCurve::new(x, g, alpha_max, kappa)?)
}

/// CSV rows `alpha,V,Phi,f`; `f` is empty outside the density window.
pub fn recovery_csv(res: &RecoveryResult) -> CliResult<Vec<u8>> {
    let d = &res.density;
    let mut k = 0;
    let rows = res
        .alpha()
        .iter()
        .zip(res.v())
        .zip(&res.phi.phi)
        .map(|((&a, &v), &p)| {
            let f = if k < d.alpha.len() && d.alpha[k] == a {
                k += 1;
                num(d.f[k - 1])
            } else {
                String::new()
            };
            vec![num(a), num(v), num(p), f]
        })
        .collect::<Vec<_>>();
    csv_bytes(&strs(&["alpha", "V", "Phi", "f"]), rows)
}

#[derive(Debug, Serialize)]
pub struct InvertDiagnostics {
    pub iterations: usize,
    pub observed_ratio: f64,
    pub contraction_bound: f64,
    pub error_bound: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub phi_clip_count: usize,
    pub density_clip_count: usize,
    pub clip_count: usize,
}

pub fn diagnostics(res: &RecoveryResult) -> InvertDiagnostics {
    let s = &res.solution;
    InvertDiagnostics {
        iterations: s.iterations,
        observed_ratio: s.observed_ratio,
        contraction_bound: s.contraction_bound,
        error_bound: s.error_bound,
        residual: s.residual,
        tolerance: s.tol,
        phi_clip_count: res.phi.clip_count,
        density_clip_count: res.density.clip_count,
        clip_count: res.phi.clip_count + res.density.clip_count,
    }
}

/// Forward curve written as CSV, read back and inverted.
pub fn pipeline_roundtrip(
    mu: &Measure,
    kappa: f64,
    alpha_max: f64,
    n_samples: usize,
    config: &RecoveryConfig,
) -> CliResult<RecoveryResult> {
    let bytes = forward_csv(mu, kappa, alpha_max, n_samples)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::input(e.to_string()))?;
    let curve = parse_curve_csv(&text, kappa, alpha_max)?;
    Ok(recover(&curve, config)?)
}

fn cmd_forward(a: &ForwardArgs) -> CliResult<()> {
    let mu: Measure = read_json(&a.measure)?;
    let alpha_max = a.alpha_max.unwrap_or_else(|| mu.support_sup());
    write_output(a.out.as_deref(), &forward_csv(&mu, a.kappa, alpha_max, a.n_grid)?)
}

#[derive(Debug, Default, Deserialize)]
struct CurveParams {
    kappa: Option<f64>,
    alpha_max: Option<f64>,
}

fn cmd_invert(a: &InvertArgs) -> CliResult<()> {
    let file: CurveParams = match &a.params {
        Some(p) => read_json(p)?,
        None => CurveParams::default(),
    };
    let kappa = a
        .kappa
        .or(file.kappa)
        .ok_or_else(|| CliError::input("kappa missing (use --kappa or --params)"))?;
    let alpha_max = a
        .alpha_max
        .or(file.alpha_max)
        .ok_or_else(|| CliError::input("alpha_max missing (use --alpha-max or --params)"))?;
    let curve = parse_curve_csv(&read_text(&a.curve)?, kappa, alpha_max)?;
    let res = recover(&curve, &a.solver.recovery_config())?;
    write_output(a.out.as_deref(), &recovery_csv(&res)?)?;
    write_side_json(a.diagnostics.as_deref(), &diagnostics(&res))
}

#[derive(Debug, Deserialize)]
struct SystemFile {
    tubes: Vec<Tube>,
    pump: Option<PumpHistory>,
}

fn cmd_tubes(a: &TubesArgs) -> CliResult<()> {
    let file: SystemFile = read_json(&a.system)?;
    let sys = TubeSystem::new(file.tubes)?;
    let pump = match file.pump {
        Some(p) => p,
        None => PumpHistory::constant(1.0)?,
    };
    let times = uniform_times(a.t_max, a.steps)?;
    let sim = simulate(&sys, a.kappa, &pump, &times)?;
    let mut header = strs(&["t", "F", "Vw", "Vo"]);
    header.extend((1..=sys.len()).map(|j| format!("l_{j}")));
    let rows = (0..sim.times.len()).map(|i| {
        let mut r = vec![num(sim.times[i]), num(sim.pumped[i]), num(sim.water[i]), num(sim.oil[i])];
        r.extend(sim.positions.iter().map(|p| num(p[i])));
        r
    });
    write_output(a.out.as_deref(), &csv_bytes(&header, rows)?)?;
    if let Some(path) = &a.summary {
        let lengths: Vec<f64> = sys.tubes().iter().map(|t| t.length).collect();
        write_json(
            Some(path),
            &json!({ "lengths": lengths, "breakthrough": sim.breakthrough }),
        )?;
    }
    Ok(())
}

fn cmd_stability(a: &StabilityArgs) -> CliResult<()> {
    let (c1, c2) = match (&a.measure, &a.curve, &a.curve2) {
        (Some(m), _, _) => {
            let mu: Measure = read_json(m)?;
            let c = build_curve(&mu, a.kappa, a.alpha_max, a.samples)?;
            let p = perturb_sinusoidal(&c, a.delta_rel * c.v_max())?;
            (c, p)
        }
        (None, Some(p1), Some(p2)) => (
            parse_curve_csv(&read_text(p1)?, a.kappa, a.alpha_max)?,
            parse_curve_csv(&read_text(p2)?, a.kappa, a.alpha_max)?,
        ),
        _ => return Err(CliError::input("give --measure, or both --curve and --curve2")),
    };
    let report = stability_experiment(&c1, &c2, &a.solver.recovery_config())?;
    write_json(a.out.as_deref(), &report)
}

/// CSV rows `seed,n1,n2,v1max,v2max,accepted,c`; `c` empty for rejected pairs.
pub fn mc_csv(out: &McOutcome) -> CliResult<Vec<u8>> {
    csv_bytes(
        &strs(&["seed", "n1", "n2", "v1max", "v2max", "accepted", "c"]),
        out.records.iter().map(|r| {
            vec![
                r.seed.to_string(),
                r.n1.to_string(),
                r.n2.to_string(),
                num(r.v1_max),
                num(r.v2_max),
                r.accepted.to_string(),
                r.c_value.map(num).unwrap_or_default(),
            ]
        }),
    )
}

fn cmd_mc(a: &McArgs) -> CliResult<()> {
    let config = McConfig {
        pairs: a.pairs,
        kappa: a.kappa,
        alpha_max: a.alpha_max,
        n_grid: a.n_grid,
        seed: a.seed,
        max_attempts: a.max_attempts,
        jobs: a.jobs,
        ..McConfig::default()
    };
    let out = run_monte_carlo(&config)?;
    write_output(a.out.as_deref(), &mc_csv(&out)?)?;
    let s = &out.summary;
    write_side_json(
        a.summary.as_deref(),
        &json!({
            "count": s.accepted,
            "attempted": s.attempted,
            "min_c": s.min_c,
            "median_c": s.median_c,
            "max_c": s.max_c,
            "reaches_five": s.reaches_five,
            "config": config,
        }),
    )
}

fn cmd_ambiguity(a: &AmbiguityArgs) -> CliResult<()> {
    let pair = ambiguity_pair(a.alpha0, a.k)?;
    let probe = a.probe.unwrap_or(a.alpha0);
    let gap = curve_gap(&pair, a.kappa, probe, a.n_grid)?;
    let estimate = series_gap_estimate(&pair, a.kappa, probe)?;
    write_json(
        a.out.as_deref(),
        &json!({
            "alpha0": a.alpha0,
            "k": a.k,
            "kappa": a.kappa,
            "probe": probe,
            "gap": gap,
            "series_estimate": estimate,
            "ratio": if estimate > 0.0 { Some(gap / estimate) } else { None },
        }),
    )
}
