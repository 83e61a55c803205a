//! Command-line front end: `gen-design`, `path`, `covtest`, `select-k0` and
//! `study <kind>`.
//!
//! Every command resolves a [`StudyConfig`] from the study defaults, an
//! optional JSON config file (a bare config object or a run manifest) and
//! flag overrides, in that order. Exit codes: 0 on success, 1 on parameter,
//! usage or I/O errors, 2 on numerical failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::covtest::{cov_series_general, cov_series_orthogonal, CovSeries};
use crate::design::{make_design, simulate_response, DesignMatrix, Family, ResponseSpec};
use crate::error::{Error, Result};
use crate::harness::{format_number, run_study, StatisticKind, StudyConfig, StudyKind, TextTable};
use crate::model_size::{select_k0, SelectorConfig};
use crate::path::{orthogonal_knots, trace_path, Event, PathLimit};
use crate::penalty::PenaltySpec;

/// Everything needed to rerun a command and locate its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: StudyConfig,
    pub version: String,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
    /// Input files read (`path`, `covtest`, `select-k0`).
    #[serde(default)]
    pub inputs: Vec<String>,
    /// Command options outside the study configuration.
    #[serde(default)]
    pub options: Value,
    pub started_at: String,
    pub finished_at: String,
    pub seed: u64,
}

#[derive(Parser, Debug)]
#[command(name = "pathsig", version, about = "Covariance tests along penalized regression paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a design matrix and response and store them as x.csv and y.csv.
    GenDesign {
        #[command(flatten)]
        settings: Settings,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the lasso path knots as CSV.
    Path {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        settings: Settings,
        /// Maximum number of knots.
        #[arg(long, default_value_t = 20)]
        steps: usize,
    },
    /// Print covariance statistics T_1..T_m and their null p-values as CSV.
    Covtest {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        settings: Settings,
        /// Number of statistics.
        #[arg(long, default_value_t = 10)]
        m: usize,
    },
    /// Print Q_k over the search range and the selected model size.
    SelectK0 {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run a Monte Carlo study.
    Study {
        #[arg(value_enum)]
        kind: StudyArg,
        #[command(flatten)]
        settings: Settings,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StudyArg {
    NullQq,
    Independence,
    Screening,
    Table1,
    Power,
}

impl From<StudyArg> for StudyKind {
    fn from(s: StudyArg) -> Self {
        match s {
            StudyArg::NullQq => StudyKind::NullQq,
            StudyArg::Independence => StudyKind::Independence,
            StudyArg::Screening => StudyKind::Screening,
            StudyArg::Table1 => StudyKind::Table1,
            StudyArg::Power => StudyKind::Power,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum PenaltyArg {
    Lasso,
    Scad,
    Mcp,
}

/// Stored design/response pair. Without it the data are simulated from the
/// settings.
#[derive(Args, Debug)]
struct DataArgs {
    /// Design matrix CSV (one row per observation).
    #[arg(long, requires = "y")]
    x: Option<PathBuf>,
    /// Response CSV (single column).
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    /// Also write the printed table and a manifest to this directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct Settings {
    /// JSON config file or run manifest; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, visible_alias = "design")]
    family: Option<Family>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    /// Leading coefficients, e.g. `5,5,0.5` or `5*6`.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Penalties of the covariance statistics (comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    penalty: Vec<PenaltyArg>,
    /// SCAD concavity parameter.
    #[arg(long)]
    a: Option<f64>,
    /// MCP concavity parameter.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    level: Option<f64>,
    /// Signal strengths of the power study, e.g. `0,2,4,6,8`.
    #[arg(long)]
    theta_grid: Option<String>,
    /// Draw one design and reuse it in every replication.
    #[arg(long)]
    fixed_design: bool,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "PATHSIG_THREADS")]
    threads: Option<usize>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 2 for numerical failures, 1 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenDesign { settings, out } => {
            let cfg = resolve(&settings, None)?;
            with_threads(settings.threads, || gen_design(&cfg, &out))
        }
        Command::Path { data, settings, steps } => {
            let cfg = resolve(&settings, None)?;
            with_threads(settings.threads, || path_cmd(&cfg, &data, steps))
        }
        Command::Covtest { data, settings, m } => {
            let cfg = resolve(&settings, None)?;
            with_threads(settings.threads, || covtest_cmd(&cfg, &data, m))
        }
        Command::SelectK0 { data, settings } => {
            let cfg = resolve(&settings, None)?;
            with_threads(settings.threads, || select_cmd(&cfg, &data))
        }
        Command::Study { kind, settings, out } => {
            let cfg = resolve(&settings, Some(kind.into()))?;
            with_threads(settings.threads, || study_cmd(&cfg, &out))
        }
    }
}

fn with_threads<F>(threads: Option<usize>, f: F) -> Result<()>
where
    F: FnOnce() -> Result<()> + Send,
{
    match threads {
        None => f(),
        Some(0) => Err(Error::param("--threads must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::param(format!("cannot start {t} worker threads: {e}")))?
            .install(f),
    }
}

/// Defaults of `kind` (null-calibration defaults when `None`), then the
/// config file, then the flags.
fn resolve(settings: &Settings, kind: Option<StudyKind>) -> Result<StudyConfig> {
    let mut cfg = match &settings.config {
        Some(path) => load_config(path, kind)?,
        None => StudyConfig::defaults(kind.unwrap_or(StudyKind::NullQq)),
    };
    apply_flags(&mut cfg, settings)?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_config(path: &Path, kind: Option<StudyKind>) -> Result<StudyConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::param(format!("cannot read config {}: {e}", path.display())))?;
    StudyConfig::from_json(&text, kind)
        .map_err(|e| Error::param(format!("{}: {e}", path.display())))
}

fn apply_flags(cfg: &mut StudyConfig, s: &Settings) -> Result<()> {
    macro_rules! set {
        ($flag:ident => $($field:tt)+) => {
            if let Some(v) = s.$flag.clone() {
                cfg.$($field)+ = v;
            }
        };
    }
    set!(family => family);
    set!(n => n);
    set!(p => p);
    set!(rho => design.rho);
    set!(block_size => design.block_size);
    set!(s => design.s);
    set!(sigma => sigma);
    set!(k0 => k0);
    set!(d => d);
    set!(k_min => k_min);
    set!(k_max => k_max);
    set!(reps => n_reps);
    set!(seed => seed);
    set!(level => level);
    if let Some(b) = &s.beta {
        cfg.beta = parse_list(b, "--beta")?;
    }
    if let Some(t) = &s.theta_grid {
        cfg.theta_grid = parse_list(t, "--theta-grid")?;
    }
    if s.fixed_design {
        cfg.fixed_design = true;
    }

    let a = s.a.unwrap_or(3.7);
    let gamma = s.gamma.unwrap_or(3.0);
    if !s.penalty.is_empty() {
        if cfg.study == StudyKind::Power {
            return Err(Error::param("--penalty does not apply to the power study"));
        }
        cfg.statistics = s
            .penalty
            .iter()
            .map(|p| {
                StatisticKind::Cov(match p {
                    PenaltyArg::Lasso => PenaltySpec::Lasso,
                    PenaltyArg::Scad => PenaltySpec::Scad { a },
                    PenaltyArg::Mcp => PenaltySpec::Mcp { gamma },
                })
            })
            .collect();
    }
    for stat in &mut cfg.statistics {
        match stat {
            StatisticKind::Cov(PenaltySpec::Scad { a: v }) if s.a.is_some() => *v = a,
            StatisticKind::Cov(PenaltySpec::Mcp { gamma: v }) if s.gamma.is_some() => *v = gamma,
            _ => {}
        }
    }
    Ok(())
}

/// Comma-separated numbers; `v*c` repeats `v` `c` times.
fn parse_list(text: &str, flag: &str) -> Result<Vec<f64>> {
    let bad = |tok: &str| Error::param(format!("{flag}: cannot parse `{tok}`"));
    let mut out = Vec::new();
    for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.split_once('*') {
            Some((v, c)) => {
                let v: f64 = v.trim().parse().map_err(|_| bad(tok))?;
                let c: usize = c.trim().parse().map_err(|_| bad(tok))?;
                out.extend(std::iter::repeat_n(v, c));
            }
            None => out.push(tok.parse().map_err(|_| bad(tok))?),
        }
    }
    Ok(out)
}

/// The first covariance penalty of the configuration.
fn penalty_of(cfg: &StudyConfig) -> PenaltySpec {
    cfg.statistics
        .iter()
        .find_map(|s| match s {
            StatisticKind::Cov(p) => Some(*p),
            _ => None,
        })
        .unwrap_or(PenaltySpec::Lasso)
}

struct Data {
    x: DesignMatrix,
    y: DVector<f64>,
    inputs: Vec<String>,
}

fn load_data(cfg: &StudyConfig, args: &DataArgs) -> Result<Data> {
    match (&args.x, &args.y) {
        (Some(xp), Some(yp)) => {
            let values = read_matrix(xp)?;
            let y = read_matrix(yp)?;
            if y.ncols() != 1 {
                return Err(Error::param(format!(
                    "{} must have a single column, found {}",
                    yp.display(),
                    y.ncols()
                )));
            }
            let x = DesignMatrix::from_values(values, cfg.family)?;
            if y.nrows() != x.n() {
                return Err(Error::param(format!(
                    "response has {} rows but the design has {}",
                    y.nrows(),
                    x.n()
                )));
            }
            Ok(Data {
                x,
                y: y.column(0).into_owned(),
                inputs: vec![xp.display().to_string(), yp.display().to_string()],
            })
        }
        _ => {
            let (x, y) = simulate(cfg)?;
            Ok(Data { x, y, inputs: Vec::new() })
        }
    }
}

fn simulate(cfg: &StudyConfig) -> Result<(DesignMatrix, DVector<f64>)> {
    let x = make_design(cfg.family, cfg.n, cfg.p, cfg.design, cfg.seed)?;
    let spec = ResponseSpec {
        beta: cfg.full_beta(1.0),
        sigma: cfg.sigma,
        seed: cfg.seed,
    };
    let y = simulate_response(&x, &spec)?;
    Ok((x, y))
}

/// Numeric CSV; a first row that does not parse is taken as a header.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::param(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::param(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|c| c.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(Error::param(format!("{} line {}: {e}", path.display(), i + 1)));
            }
        }
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::param(format!("{} holds no numeric rows", path.display())));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::param(format!("{} has rows of unequal length", path.display())));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_table(m: &DMatrix<f64>, prefix: &str) -> TextTable {
    let names: Vec<String> = (1..=m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut t = TextTable::new(&refs);
    for row in m.row_iter() {
        t.rows.push(row.iter().map(|v| format_number(*v)).collect());
    }
    t
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::param(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| Error::param(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, mut manifest: RunManifest) -> Result<()> {
        self.written.push("manifest.json".into());
        manifest.outputs = self.written.clone();
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.write("manifest.json", &(json + "\n"))
    }
}

fn manifest(command: &str, cfg: &StudyConfig, started_at: String) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: Vec::new(),
        inputs: Vec::new(),
        options: Value::Null,
        started_at,
        finished_at: now(),
        seed: cfg.seed,
    }
}

fn gen_design(cfg: &StudyConfig, out: &Path) -> Result<()> {
    let started = now();
    let (x, y) = simulate(cfg)?;
    let mut w = Writer::new(out)?;
    w.write("x.csv", &matrix_table(&x.values, "x").to_csv())?;
    let y = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    w.write("y.csv", &matrix_table(&y, "y").to_csv())?;
    w.finish(manifest("gen-design", cfg, started))
}

/// Prints `table` and, with `--out`, stores it with a manifest.
fn emit(
    command: &str,
    file: &str,
    table: &TextTable,
    cfg: &StudyConfig,
    data: &Data,
    args: &DataArgs,
    options: Value,
    started: String,
) -> Result<()> {
    let csv = table.to_csv();
    print!("{csv}");
    if let Some(dir) = &args.out {
        let mut w = Writer::new(dir)?;
        w.write(file, &csv)?;
        let mut m = manifest(command, cfg, started);
        m.inputs = data.inputs.clone();
        m.options = options;
        w.finish(m)?;
    }
    Ok(())
}

fn path_cmd(cfg: &StudyConfig, args: &DataArgs, steps: usize) -> Result<()> {
    let started = now();
    let data = load_data(cfg, args)?;
    let path = trace_path(&data.x.values, &data.y, PathLimit::steps(steps))?;
    let mut t = TextTable::new(&["step", "lambda", "event", "column", "active_size"]);
    for (i, knot) in path.knots.iter().enumerate() {
        let (event, column) = match knot.event {
            Event::Enter(j) => ("enter", j),
            Event::Leave(j) => ("leave", j),
        };
        t.rows.push(vec![
            (i + 1).to_string(),
            format_number(knot.lambda),
            event.to_string(),
            column.to_string(),
            knot.active.len().to_string(),
        ]);
    }
    let options = serde_json::json!({ "steps": steps });
    emit("path", "path.csv", &t, cfg, &data, args, options, started)
}

/// `T_1..T_m`: the general path for the lasso, the orthogonal closed form
/// for SCAD and MCP.
fn series(cfg: &StudyConfig, data: &Data, m: usize) -> Result<CovSeries> {
    let penalty = penalty_of(cfg);
    let sigma2 = cfg.sigma * cfg.sigma;
    if !penalty.is_lasso() {
        let v = orthogonal_knots(&data.x, &data.y)?;
        cov_series_orthogonal(&v, m, sigma2, penalty)
    } else {
        let path = trace_path(&data.x.values, &data.y, PathLimit::entries(m + 1))?;
        cov_series_general(&data.x.values, &data.y, &path, m, sigma2)
    }
}

fn covtest_cmd(cfg: &StudyConfig, args: &DataArgs, m: usize) -> Result<()> {
    let started = now();
    let data = load_data(cfg, args)?;
    let s = series(cfg, &data, m)?;
    let scale = s.penalty.null_scale();
    let mut t = TextTable::new(&["k", "T", "p_value"]);
    for (i, &v) in s.values.iter().enumerate() {
        let k = i + 1;
        // Under a true model of size k0, T_{k0+j} is close to Exp(1)/j.
        let p = if k > cfg.k0 {
            (-((k - cfg.k0) as f64) * v / scale).exp()
        } else {
            f64::NAN
        };
        t.rows.push(vec![k.to_string(), format_number(v), format_number(p)]);
    }
    let options = serde_json::json!({ "m": m });
    emit("covtest", "covtest.csv", &t, cfg, &data, args, options, started)
}

fn select_cmd(cfg: &StudyConfig, args: &DataArgs) -> Result<()> {
    let started = now();
    let data = load_data(cfg, args)?;
    let selector = SelectorConfig {
        d: cfg.d,
        k_min: cfg.k_min,
        k_max: cfg.k_max,
    };
    let s = series(cfg, &data, selector.required_len())?;
    let sel = select_k0(&s, &selector)?;
    if sel.penalty_warning {
        eprintln!("warning: the selector assumes the lasso null law");
    }
    let mut t = TextTable::new(&["k", "Q", "selected"]);
    for (i, q) in sel.q.iter().enumerate() {
        let k = cfg.k_min + i;
        t.rows.push(vec![
            k.to_string(),
            format_number(*q),
            u8::from(k == sel.k0).to_string(),
        ]);
    }
    emit("select-k0", "select_k0.csv", &t, cfg, &data, args, Value::Null, started)
}

fn study_cmd(cfg: &StudyConfig, out: &Path) -> Result<()> {
    let started = now();
    let mut w = Writer::new(out)?;
    let result = run_study(cfg)?;
    w.write("per_rep.csv", &result.per_rep.to_csv())?;
    w.write("summary.csv", &result.summary_csv())?;
    for (name, table) in &result.artifacts {
        w.write(&format!("{name}.csv"), &table.to_csv())?;
    }
    w.finish(manifest(&format!("study {}", cfg.study), cfg, started))
}
