//! The `hierspin` command-line front end.
//!
//! Every subcommand resolves its parameters as flag, then `--config` JSON,
//! then default, writes CSV to `--output` (or stdout), and writes the
//! resolved parameters as a JSON manifest that can be fed back as `--config`.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::Error;
use crate::fmt::FloatFormat;
use crate::hierarchy::LatticeShape;
use crate::mc::{self, McConfig, Proposal};
use crate::rgflow::{self, Components, CriticalSearch, FlowKind, FlowState, InitialFamily, Trajectory};
use crate::spectral::{self, SpectralModel};
use crate::spherical::{self, Phase};

#[derive(Debug, Parser)]
#[command(name = "hierspin", version, about = "Hierarchical spin models: spectra, spherical-model thermodynamics, RG flows and Monte Carlo")]
pub struct Cli {
    /// Write CSV here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// JSON config (a previous manifest works); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Manifest path (default: <output>.manifest.json, or stderr without --output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Float format for CSV output.
    #[arg(long, global = true, value_enum)]
    pub float_format: Option<FloatFormat>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form spectrum of the hierarchical Laplacian.
    #[command(after_help = "Example:\n  hierspin spectrum --L 2 --d 1 --K 2 --dense-check")]
    Spectrum(SpectrumArgs),
    /// Spherical-model sweep over inverse temperatures.
    #[command(after_help = "Example:\n  hierspin spherical --model continuum --d 4 --beta-grid 0.5:3.5:7 --d4-closed-form")]
    Spherical(SphericalArgs),
    /// RG trajectory of the potential's Taylor coefficients.
    #[command(after_help = "Example:\n  hierspin rg --mode lpa --N inf --d 4 --c1 -1 --M 6 --t-final 5 --steps 10")]
    Rg(RgArgs),
    /// Metropolis estimates of the block-spin moment generating function.
    #[command(after_help = "Example:\n  hierspin mc --L 2 --d 1 --K 2 --N 1 --beta 0.7 --z-grid 0,0.5,1 --moves 200000 --seed 1 --exact-check")]
    Mc(McArgs),
    /// Bisection for the critical initial condition of an RG flow.
    #[command(after_help = "Example:\n  hierspin critical-search --mode lpa --family linear --d 3 --lo 0.5 --hi 1.6 --width 1e-6")]
    CriticalSearch(CriticalArgs),
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Block side L.
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of hierarchy levels K.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Compare with a dense eigensolver (n <= 1024).
    #[arg(long)]
    pub dense_check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ModelKind {
    #[value(name = "finite")]
    #[serde(rename = "finite")]
    Finite,
    #[value(name = "infiniteK")]
    #[serde(rename = "infiniteK")]
    InfiniteK,
    #[value(name = "continuum")]
    #[serde(rename = "continuum")]
    Continuum,
}

#[derive(Debug, Args)]
pub struct SphericalArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long = "L")]
    pub l: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Continuum cutoff C = K ln L ("inf" allowed).
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Comma-separated list or start:stop:count.
    #[arg(long)]
    pub beta_grid: Option<String>,
    /// Add a column comparing with the d = 4 closed-form solver.
    #[arg(long)]
    pub d4_closed_form: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RgMode {
    Discrete,
    Lpa,
}

#[derive(Debug, Args)]
pub struct RgArgs {
    #[arg(long, value_enum)]
    pub mode: Option<RgMode>,
    /// Spin components: an integer or "inf".
    #[arg(long = "N")]
    pub n: Option<String>,
    /// Inverse temperature of the sphere-measure initial potential.
    #[arg(long, conflicts_with = "c1")]
    pub beta: Option<f64>,
    /// Start from the linear potential u = c1 x instead.
    #[arg(long, allow_hyphen_values = true)]
    pub c1: Option<f64>,
    /// Truncation order.
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long = "L")]
    pub l: Option<f64>,
    /// Defaults to d + 2.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// LPA flow time.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// LPA sample count, or number of discrete RG steps.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalKind {
    Mixed,
    Resphere,
    Rotation,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Comma-separated list or start:stop:count.
    #[arg(long, allow_hyphen_values = true)]
    pub z_grid: Option<String>,
    /// Measurement sweeps per chain (each sweep is n single-site moves).
    #[arg(long, alias = "sweeps")]
    pub moves: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long, value_enum)]
    pub proposal: Option<ProposalKind>,
    /// Initial rotation step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Compare with exact enumeration (N = 1, n <= 20).
    #[arg(long)]
    pub exact_check: bool,
    /// Also write a block-spin histogram CSV here.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    /// Block-spin exponent gamma for the histogram (default d).
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Bessel,
    Linear,
}

#[derive(Debug, Args)]
pub struct CriticalArgs {
    #[arg(long, value_enum)]
    pub mode: Option<RgMode>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyKind>,
    #[arg(long = "N")]
    pub n: Option<String>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long = "L")]
    pub l: Option<f64>,
    #[arg(long)]
    pub lo: Option<f64>,
    #[arg(long)]
    pub hi: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    /// LPA time budget per trajectory.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Discrete-step budget per trajectory.
    #[arg(long)]
    pub max_steps: Option<usize>,
}

/// Failure categories mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(m) => CliError::Usage(m),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numeric(format!("I/O error: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parameters from a `--config` file.
struct ConfigFile {
    params: Map<String, Value>,
}

impl ConfigFile {
    fn load(path: Option<&PathBuf>, command: &str) -> CliResult<(Self, Map<String, Value>)> {
        let Some(path) = path else {
            return Ok((Self { params: Map::new() }, Map::new()));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(mut top) = value else {
            return Err(CliError::Usage("config must be a JSON object".into()));
        };
        if let Some(cmd) = top.get("command").and_then(Value::as_str) {
            if cmd != command {
                return Err(CliError::Usage(format!("config is for '{cmd}', not '{command}'")));
            }
        }
        let params = match top.remove("params") {
            Some(Value::Object(p)) => p,
            Some(_) => return Err(CliError::Usage("config 'params' must be an object".into())),
            None => Map::new(),
        };
        Ok((Self { params }, top))
    }

    fn get<T: DeserializeOwned>(&self, key: &str) -> CliResult<Option<T>> {
        match self.params.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config field '{key}': {e}"))),
        }
    }

    fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> CliResult<T> {
        self.pick(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("missing required parameter --{key}")))
    }

    fn flag(&self, flag: bool, key: &str) -> CliResult<bool> {
        Ok(flag || self.get::<bool>(key)?.unwrap_or(false))
    }
}

/// Parses `a,b,c` or `start:stop:count`.
pub fn parse_grid(text: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("invalid grid '{text}'"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        if n == 1 {
            return Ok(vec![a]);
        }
        return Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect());
    }
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

struct Output {
    csv: String,
    params: Value,
    extra_files: Vec<(PathBuf, String)>,
}

struct Csv {
    fmt: FloatFormat,
    text: String,
}

impl Csv {
    fn new(fmt: FloatFormat, header: &[&str]) -> Self {
        Self { fmt, text: format!("{}\n", header.join(",")) }
    }

    fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    fn f(&self, x: f64) -> String {
        self.fmt.format(x)
    }
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Spectrum(_) => "spectrum",
        Command::Spherical(_) => "spherical",
        Command::Rg(_) => "rg",
        Command::Mc(_) => "mc",
        Command::CriticalSearch(_) => "critical-search",
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let name = command_name(&cli.command);
    let (cfg, top) = ConfigFile::load(cli.config.as_ref(), name)?;
    let from_top = |key: &str| top.get(key).cloned().filter(|v| !v.is_null());
    let seed = match cli.seed {
        Some(s) => s,
        None => match from_top("seed") {
            Some(v) => serde_json::from_value(v).map_err(|e| CliError::Usage(format!("config seed: {e}")))?,
            None => 0,
        },
    };
    let float_format = match cli.float_format {
        Some(f) => f,
        None => match from_top("float_format") {
            Some(v) => serde_json::from_value(v)
                .map_err(|e| CliError::Usage(format!("config float_format: {e}")))?,
            None => FloatFormat::default(),
        },
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        // A second initialization in the same process is harmless to ignore.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }

    let out = match &cli.command {
        Command::Spectrum(a) => cmd_spectrum(a, &cfg, float_format)?,
        Command::Spherical(a) => cmd_spherical(a, &cfg, float_format)?,
        Command::Rg(a) => cmd_rg(a, &cfg, float_format)?,
        Command::Mc(a) => cmd_mc(a, &cfg, float_format, seed)?,
        Command::CriticalSearch(a) => cmd_critical(a, &cfg, float_format)?,
    };

    let manifest = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "float_format": float_format,
        "params": out.params,
    });
    let manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";

    match &cli.output {
        Some(path) => std::fs::write(path, &out.csv)?,
        None => std::io::stdout().write_all(out.csv.as_bytes())?,
    }
    for (path, text) in &out.extra_files {
        std::fs::write(path, text)?;
    }
    let manifest_path = cli.manifest.clone().or_else(|| {
        cli.output.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    });
    match manifest_path {
        Some(p) => std::fs::write(p, manifest_text)?,
        None => std::io::stderr().write_all(manifest_text.as_bytes())?,
    }
    Ok(())
}

fn cmd_spectrum(a: &SpectrumArgs, cfg: &ConfigFile, fmt: FloatFormat) -> CliResult<Output> {
    let l: usize = cfg.require(a.l, "L")?;
    let d: usize = cfg.require(a.d, "d")?;
    let k: usize = cfg.require(a.k, "K")?;
    let dense_check = cfg.flag(a.dense_check, "dense_check")?;
    let shape = LatticeShape::new(l, d, k)?;
    if dense_check && shape.sites() > 1024 {
        return Err(CliError::Numeric(format!(
            "capacity error: --dense-check needs n <= 1024, got n = {}",
            shape.sites()
        )));
    }
    let table = spectral::spectral_table(&shape)?;
    let mut header = vec!["k", "lambda", "multiplicity", "weight"];
    if dense_check {
        header.push("dense_deviation");
    }
    let mut csv = Csv::new(fmt, &header);
    let dense = if dense_check { Some(spectral::dense_spectrum(&shape)?) } else { None };
    // Ascending order of the dense spectrum: k = K first.
    let mut offset = 0usize;
    let mut offsets = vec![0usize; table.len()];
    for row in table.iter().rev() {
        offsets[row.k] = offset;
        offset += row.multiplicity;
    }
    for row in &table {
        let mut fields = vec![row.k.to_string(), csv.f(row.lambda), row.multiplicity.to_string(), csv.f(row.weight)];
        if let Some(ev) = &dense {
            let slice = &ev[offsets[row.k]..offsets[row.k] + row.multiplicity];
            let dev = slice.iter().map(|e| (e - row.lambda).abs()).fold(0.0, f64::max);
            fields.push(csv.f(dev));
        }
        csv.row(&fields);
    }
    Ok(Output {
        csv: csv.text,
        params: json!({"L": l, "d": d, "K": k, "dense_check": dense_check}),
        extra_files: vec![],
    })
}

fn cutoff_value(v: Option<Value>) -> CliResult<Option<f64>> {
    match v {
        None => Ok(None),
        Some(Value::String(s)) if s == "inf" => Ok(Some(f64::INFINITY)),
        Some(Value::Number(n)) => Ok(n.as_f64()),
        Some(other) => Err(CliError::Usage(format!("invalid cutoff {other}"))),
    }
}

fn cmd_spherical(a: &SphericalArgs, cfg: &ConfigFile, fmt: FloatFormat) -> CliResult<Output> {
    let kind: ModelKind = cfg.require(a.model, "model")?;
    let d: f64 = cfg.require(a.d, "d")?;
    let grid_text: String = cfg.require(a.beta_grid.clone(), "beta_grid")?;
    let d4 = cfg.flag(a.d4_closed_form, "d4_closed_form")?;
    let mut params = Map::new();
    params.insert("model".into(), json!(kind));
    params.insert("d".into(), json!(d));
    let model = match kind {
        ModelKind::Finite => {
            let l: f64 = cfg.require(a.l, "L")?;
            let k: usize = cfg.require(a.k, "K")?;
            if l.fract() != 0.0 || d.fract() != 0.0 || l < 2.0 || d < 1.0 {
                return Err(CliError::Usage("finite model needs integer L >= 2 and d >= 1".into()));
            }
            params.insert("L".into(), json!(l));
            params.insert("K".into(), json!(k));
            SpectralModel::finite(LatticeShape::new(l as usize, d as usize, k)?)
        }
        ModelKind::InfiniteK => {
            let l: f64 = cfg.require(a.l, "L")?;
            params.insert("L".into(), json!(l));
            SpectralModel::infinite_k(l, d)?
        }
        ModelKind::Continuum => {
            let c = match a.cutoff {
                Some(c) => c,
                None => cutoff_value(cfg.params.get("cutoff").cloned())?.unwrap_or(f64::INFINITY),
            };
            params.insert("cutoff".into(), if c.is_infinite() { json!("inf") } else { json!(c) });
            SpectralModel::continuum(d, c)?
        }
    };
    let is_d4 = matches!(model, SpectralModel::Continuum { d, cutoff } if d == 4.0 && cutoff.is_infinite());
    if d4 && !is_d4 {
        return Err(CliError::Usage("--d4-closed-form needs --model continuum --d 4 with infinite cutoff".into()));
    }
    params.insert("beta_grid".into(), json!(grid_text));
    params.insert("d4_closed_form".into(), json!(d4));
    let mut grid = parse_grid(&grid_text)?;
    if grid.iter().any(|&b| !(b > 0.0)) {
        return Err(CliError::Usage("beta grid must lie in (0, inf)".into()));
    }
    grid.sort_by(f64::total_cmp);

    let beta_c_divergent = matches!(spherical::beta_c(&model), Err(Error::Divergence(_)));
    let rows: Vec<Vec<String>> = grid
        .par_iter()
        .map(|&beta| spherical_row(beta, &model, beta_c_divergent, d4, fmt))
        .collect();
    let mut header = vec!["beta", "mu", "rho0", "free_energy", "clt_variance", "status"];
    if d4 {
        header.push("mu_d4_diff");
    }
    let mut csv = Csv::new(fmt, &header);
    for r in rows {
        csv.row(&r);
    }
    Ok(Output { csv: csv.text, params: Value::Object(params), extra_files: vec![] })
}

fn spherical_row(beta: f64, model: &SpectralModel, divergent: bool, d4: bool, fmt: FloatFormat) -> Vec<String> {
    let f = |x: f64| fmt.format(x);
    let mut out = match spherical::solve_mu(beta, model) {
        Ok(sol) => {
            let fe = spherical::free_energy_at(&sol, model);
            let var = sol.clt_variance().unwrap_or(f64::NAN);
            let status = match (&fe, sol.phase) {
                (Err(e), _) => error_status(e),
                (Ok(_), Phase::Condensed) => "condensed".to_string(),
                (Ok(_), Phase::Uncondensed) if divergent => "divergent_beta_c".to_string(),
                (Ok(_), Phase::Uncondensed) => "ok".to_string(),
            };
            vec![f(beta), f(sol.mu), f(sol.rho0), f(fe.unwrap_or(f64::NAN)), f(var), status]
        }
        Err(e) => vec![f(beta), f(f64::NAN), f(f64::NAN), f(f64::NAN), f(f64::NAN), error_status(&e)],
    };
    if d4 {
        let diff = match (spherical::solve_mu(beta, model), spherical::solve_mu_d4(beta)) {
            (Ok(sol), Ok(mu4)) if sol.phase == Phase::Uncondensed => sol.mu - mu4,
            _ => f64::NAN,
        };
        out.push(f(diff));
    }
    out
}

fn error_status(e: &Error) -> String {
    let kind = match e {
        Error::Domain(_) => "domain",
        Error::Capacity { .. } => "capacity",
        Error::Divergence(_) => "divergence",
        Error::Bracket { .. } => "bracket",
        Error::Critical { .. } => "critical",
        Error::BlowUp { .. } => "blowup",
        Error::Classification(_) => "classification",
        Error::Integrity(_) => "integrity",
        Error::Numeric(_) => "numeric",
    };
    format!("error:{kind}")
}

fn components_value(flag: Option<String>, cfg: &ConfigFile) -> CliResult<Components> {
    let n: Components = match flag {
        Some(s) => s.parse()?,
        None => cfg
            .get::<Components>("N")?
            .ok_or_else(|| CliError::Usage("missing required parameter --N".into()))?,
    };
    Ok(n)
}

fn cmd_rg(a: &RgArgs, cfg: &ConfigFile, fmt: FloatFormat) -> CliResult<Output> {
    let mode: RgMode = cfg.require(a.mode, "mode")?;
    let n = components_value(a.n.clone(), cfg)?;
    let order: usize = cfg.pick(a.m, "M")?.unwrap_or(6);
    let d: f64 = cfg.pick(a.d, "d")?.unwrap_or(4.0);
    let gamma: f64 = cfg.pick(a.gamma, "gamma")?.unwrap_or(d + 2.0);
    let c1: Option<f64> = cfg.pick(a.c1, "c1")?;
    let beta: Option<f64> = if a.c1.is_some() { a.beta } else { cfg.pick(a.beta, "beta")? };
    let coeffs = match (beta, c1) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --beta or --c1, not both".into())),
        (None, None) => return Err(CliError::Usage("missing required parameter --beta (or --c1)".into())),
        (None, Some(c)) => {
            let mut v = vec![0.0; order.max(1)];
            v[0] = c;
            v
        }
        (Some(b), None) => match n {
            Components::Finite(nn) => rgflow::initial_u0(b, nn, order)?,
            Components::Infinite => rgflow::initial_u0_infinite(b, order)?,
        },
    };
    let state = FlowState::with_gamma(coeffs, n, d, gamma)?;
    let mut params = json!({
        "mode": mode, "N": n, "M": order, "d": d, "gamma": gamma, "beta": beta, "c1": c1,
    });
    let traj: Trajectory = match mode {
        RgMode::Lpa => {
            let t_final: f64 = cfg.pick(a.t_final, "t_final")?.unwrap_or(1.0);
            let steps: usize = cfg.pick(a.steps, "steps")?.unwrap_or(10);
            params["t_final"] = json!(t_final);
            params["steps"] = json!(steps);
            rgflow::lpa_flow(&state, t_final, steps)?
        }
        RgMode::Discrete => {
            let l: f64 = cfg.pick(a.l, "L")?.unwrap_or(2.0);
            let steps: usize = cfg.pick(a.steps, "steps")?.unwrap_or(10);
            params["L"] = json!(l);
            params["steps"] = json!(steps);
            rgflow::rg_iterate(&state, l, steps)?
        }
    };
    let names: Vec<String> = (1..=order).map(|m| format!("c{m}")).collect();
    let mut header = vec!["t_or_k"];
    header.extend(names.iter().map(String::as_str));
    let mut csv = Csv::new(fmt, &header);
    for s in &traj.samples {
        let mut fields = vec![csv.f(s.clock)];
        fields.extend(s.coeffs.iter().map(|&c| csv.f(c)));
        csv.row(&fields);
    }
    if let Some(t) = traj.blowup {
        let mut fields = vec!["blowup".to_string(), csv.f(t)];
        fields.extend(std::iter::repeat_n(String::new(), order.saturating_sub(1)));
        csv.row(&fields);
    }
    Ok(Output { csv: csv.text, params, extra_files: vec![] })
}

fn cmd_critical(a: &CriticalArgs, cfg: &ConfigFile, fmt: FloatFormat) -> CliResult<Output> {
    let mode: RgMode = cfg.require(a.mode, "mode")?;
    let family_kind: FamilyKind = cfg.pick(a.family, "family")?.unwrap_or(FamilyKind::Bessel);
    let d: f64 = cfg.pick(a.d, "d")?.unwrap_or(4.0);
    let lo: f64 = cfg.require(a.lo, "lo")?;
    let hi: f64 = cfg.require(a.hi, "hi")?;
    let width: f64 = cfg.pick(a.width, "width")?.unwrap_or(1e-6);
    let mut params = json!({"mode": mode, "family": family_kind, "d": d, "lo": lo, "hi": hi, "width": width});
    let family = match family_kind {
        FamilyKind::Linear => InitialFamily::Linear,
        FamilyKind::Bessel => {
            let n = components_value(a.n.clone(), cfg)?;
            let order: usize = cfg.pick(a.m, "M")?.unwrap_or(6);
            params["N"] = json!(n);
            params["M"] = json!(order);
            InitialFamily::Bessel { n, order }
        }
    };
    let flow = match mode {
        RgMode::Lpa => {
            let t_max: f64 = cfg.pick(a.t_max, "t_max")?.unwrap_or(50.0);
            params["t_max"] = json!(t_max);
            FlowKind::Lpa { t_max }
        }
        RgMode::Discrete => {
            let l: f64 = cfg.pick(a.l, "L")?.unwrap_or(2.0);
            let max_steps: usize = cfg.pick(a.max_steps, "max_steps")?.unwrap_or(200);
            params["L"] = json!(l);
            params["max_steps"] = json!(max_steps);
            FlowKind::Discrete { l, max_steps }
        }
    };
    let res = CriticalSearch::new(d, family, flow).run(lo, hi, width)?;
    let mut csv = Csv::new(fmt, &["estimate", "lo", "hi", "iterations"]);
    csv.row(&[csv.f(res.estimate), csv.f(res.lo), csv.f(res.hi), res.widths.len().to_string()]);
    Ok(Output { csv: csv.text, params, extra_files: vec![] })
}

fn cmd_mc(a: &McArgs, cfg: &ConfigFile, fmt: FloatFormat, seed: u64) -> CliResult<Output> {
    let l: usize = cfg.require(a.l, "L")?;
    let d: usize = cfg.require(a.d, "d")?;
    let k: usize = cfg.require(a.k, "K")?;
    let n: usize = cfg.require(a.n, "N")?;
    let beta: f64 = cfg.require(a.beta, "beta")?;
    let z_text: String = cfg.pick(a.z_grid.clone(), "z_grid")?.unwrap_or_else(|| "0,0.25,0.5,1".into());
    let sweeps: usize = cfg.pick(a.moves, "moves")?.unwrap_or(100_000);
    let chains: usize = cfg.pick(a.chains, "chains")?.unwrap_or(1);
    let proposal_kind: ProposalKind = cfg.pick(a.proposal, "proposal")?.unwrap_or(ProposalKind::Mixed);
    let step: f64 = cfg.pick(a.step, "step")?.unwrap_or(0.5);
    let exact_check = cfg.flag(a.exact_check, "exact_check")?;
    let histogram: Option<PathBuf> = cfg.pick(a.histogram.clone(), "histogram")?;
    let bins: usize = cfg.pick(a.bins, "bins")?.unwrap_or(41);
    let shape = LatticeShape::new(l, d, k)?;
    let gamma: f64 = cfg.pick(a.gamma, "gamma")?.unwrap_or(d as f64);
    if exact_check && (n != 1 || shape.sites() > 20) {
        return Err(CliError::Usage("--exact-check needs N = 1 and n <= 20".into()));
    }
    let proposal = match proposal_kind {
        ProposalKind::Mixed => Proposal::Mixed { step },
        ProposalKind::Resphere => Proposal::Resphere,
        ProposalKind::Rotation => Proposal::Rotation { step },
    };
    let mut mc_cfg = McConfig::new(shape, n, beta, sweeps, seed);
    mc_cfg.burn_in = cfg.pick(a.burn_in, "burn_in")?.unwrap_or(mc_cfg.burn_in);
    mc_cfg.chains = chains;
    mc_cfg.proposal = proposal;
    let z_grid = {
        let mut g = parse_grid(&z_text)?;
        g.sort_by(f64::total_cmp);
        g
    };
    let run = mc::mcmc_run(&mc_cfg)?;
    let estimates = mc::estimate_mgf(&run, &z_grid);
    let mut header = vec!["z", "theta_hat", "std_error", "tau_int", "status"];
    if exact_check {
        header.extend(["exact", "deviation_in_se"]);
    }
    let mut csv = Csv::new(fmt, &header);
    for (&z, est) in z_grid.iter().zip(&estimates) {
        let status = if est.precision_warning { "precision_warning" } else { "ok" };
        let mut fields = vec![csv.f(z), csv.f(est.mean), csv.f(est.std_error), csv.f(est.tau_int), status.into()];
        if exact_check {
            let exact = mc::exact_partition_n1(&shape, beta, z)?.theta;
            let dev = if est.std_error > 0.0 { (est.mean - exact) / est.std_error } else { 0.0 };
            fields.push(csv.f(exact));
            fields.push(csv.f(dev));
        }
        csv.row(&fields);
    }
    let mut extra_files = Vec::new();
    if let Some(path) = &histogram {
        let stats = mc::block_spin_histogram(&run, gamma, bins)?;
        let mut h = Csv::new(fmt, &["bin_center", "count"]);
        for (c, count) in &stats.histogram {
            h.row(&[h.f(*c), count.to_string()]);
        }
        extra_files.push((path.clone(), h.text));
    }
    let params = json!({
        "L": l, "d": d, "K": k, "N": n, "beta": beta, "z_grid": z_text, "moves": sweeps,
        "burn_in": mc_cfg.burn_in, "chains": chains, "proposal": proposal_kind, "step": step,
        "exact_check": exact_check, "histogram": histogram, "gamma": gamma, "bins": bins,
        "acceptance": run.acceptance(),
        "measured_moves": sweeps * shape.sites() * chains,
    });
    Ok(Output { csv: csv.text, params, extra_files })
}
