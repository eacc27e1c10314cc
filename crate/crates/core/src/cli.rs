//! `steerdepth` command-line front end.
//!
//! Every command renders its whole output in memory first and then writes it
//! to stdout or atomically to `--output`, so failures never leave partial files.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::bounds::{build_table, load_or_build, BoundSettings, BoundTable, SpinGrid};
use crate::closed_form::crosscheck_times;
use crate::depth::{infer_depth, DepthKind, DepthOutcome};
use crate::error::{Error, Result};
use crate::fock::{prepare, ModelParams};
use crate::moments::moments_from_state;
use crate::sweep::{
    default_horizon, hybrid_grid, optimize_over_t, scan_time, table_one, uniform_grid,
    write_scan_csv, write_table_one_csv, Objective, SearchSettings,
};

#[derive(Parser, Debug)]
#[command(
    name = "steerdepth",
    version,
    about = "Two-mode BEC interferometer: squeezing, EPR steering and steering depth"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    format: Format,

    /// Write to this file instead of stdout
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Entanglement,
    Steering,
    SteeringPqs,
}

impl From<KindArg> for DepthKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Entanglement => DepthKind::Entanglement,
            KindArg::Steering => DepthKind::Steering,
            KindArg::SteeringPqs => DepthKind::SteeringPqs,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ObjectiveArg {
    Xi2Bar,
    EHzTheta,
    EHz,
    EHzT,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Xi2Bar => Objective::Xi2Bar,
            ObjectiveArg::EHzTheta => Objective::EHzTheta,
            ObjectiveArg::EHz => Objective::EHz,
            ObjectiveArg::EHzT => Objective::EHzT,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GridArg {
    Hybrid,
    Uniform,
}

#[derive(Args, Debug, Clone, Copy)]
struct Model {
    /// Total boson number N
    #[arg(long = "n")]
    n_total: u32,
    #[arg(long, default_value_t = 1.0)]
    chi: f64,
    #[arg(long = "k", default_value_t = -1.0, allow_hyphen_values = true)]
    k_const: f64,
}

impl Model {
    fn params(&self, t: f64) -> Result<ModelParams> {
        ModelParams::new(self.n_total, self.chi, self.k_const, t)
    }
}

#[derive(Args, Debug, Clone)]
struct TableSource {
    /// Bound table (CSV or JSON) to use instead of solving
    #[arg(long)]
    bounds_table: Option<PathBuf>,
    /// Directory where solved tables are cached
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fock amplitudes after the beam splitter and nonlinear evolution
    Evolve {
        #[command(flatten)]
        model: Model,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
    },
    /// Criteria on a time grid, θ optimal at each t
    Scan {
        #[command(flatten)]
        model: Model,
        /// Upper end of the grid; defaults to π/(2(1−K)χ)
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        points: usize,
        #[arg(long, value_enum, default_value_t = GridArg::Hybrid)]
        grid: GridArg,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::EHzTheta)]
        objective: ObjectiveArg,
    },
    /// Minimize an objective over t
    Optimize {
        #[command(flatten)]
        model: Model,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::EHzTheta)]
        objective: ObjectiveArg,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        points: usize,
        #[arg(long, default_value_t = 1e-8)]
        t_tol: f64,
    },
    /// Solve the planar variance bounds C_S and ζ_S² on a spin grid
    Bounds {
        #[arg(long, default_value_t = 1000)]
        max_two_s: u32,
        /// Also solve the planar squeezing bound ζ²
        #[arg(long)]
        zeta: bool,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Certified depth from a measured E_HZ and Bloch length
    Depth {
        #[arg(long)]
        ehz: f64,
        /// r, or r_parallel for steering-pqs
        #[arg(long)]
        r: f64,
        #[arg(long, value_enum, default_value_t = KindArg::Steering)]
        kind: KindArg,
        #[command(flatten)]
        source: TableSource,
        /// Grid size when solving the table instead of reading one
        #[arg(long, default_value_t = 1000)]
        max_two_s: u32,
    },
    /// Optimal E_HZ^θ/r and certified depth for a list of N
    Table1 {
        #[arg(long = "n", value_delimiter = ',', required = true)]
        n_list: Vec<u32>,
        #[arg(long, default_value_t = 1.0)]
        chi: f64,
        #[arg(long = "k", default_value_t = -1.0, allow_hyphen_values = true)]
        k_const: f64,
        #[command(flatten)]
        source: TableSource,
        #[arg(long, default_value_t = 2000)]
        points: usize,
    },
    /// Closed-form moments against the Fock sums on a time grid
    Crosscheck {
        #[command(flatten)]
        model: Model,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

struct Rendered {
    text: String,
    /// Non-zero when the output is valid but reports a failed check.
    status: i32,
}

fn provenance_line(args: &[String]) -> String {
    format!(
        "steerdepth {} {}",
        env!("CARGO_PKG_VERSION"),
        args.join(" ")
    )
    .trim_end()
    .to_string()
}

fn render_json<T: Serialize>(args: &[String], result: &T) -> Result<String> {
    let doc = json!({
        "provenance": {
            "tool": "steerdepth",
            "version": env!("CARGO_PKG_VERSION"),
            "args": args,
        },
        "result": result,
    });
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

fn csv_text(comments: &[String], write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    for line in comments {
        writeln!(buf, "# {line}")?;
    }
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Consistency(format!("non-UTF-8 output: {e}")))
}

fn csv_records<T: Serialize>(comments: &[String], rows: &[T]) -> Result<String> {
    csv_text(comments, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    })
}

fn load_table(source: &TableSource, max_two_s: u32, with_zeta: bool) -> Result<BoundTable> {
    if let Some(path) = &source.bounds_table {
        return BoundTable::read(path);
    }
    let grid = SpinGrid::new(max_two_s);
    let settings = BoundSettings::default();
    match &source.cache_dir {
        Some(dir) => load_or_build(dir, &grid, &settings, with_zeta),
        None => build_table(&grid, &settings, with_zeta),
    }
}

#[derive(Serialize)]
struct AmplitudeRow {
    r: u32,
    m: f64,
    re: f64,
    im: f64,
    prob: f64,
}

#[derive(Serialize)]
struct DepthRow {
    kind: DepthKind,
    certified: bool,
    s0: Option<f64>,
    n_lower_bound: Option<u32>,
    margin: Option<f64>,
    ratio: f64,
    bound_at_s0: Option<f64>,
    head_of_table: bool,
    table_limited: bool,
    reason: Option<String>,
}

impl DepthRow {
    fn new(kind: DepthKind, e_hz: f64, r: f64, out: &DepthOutcome) -> Self {
        match out {
            DepthOutcome::Certified(d) => Self {
                kind,
                certified: true,
                s0: Some(d.s0),
                n_lower_bound: Some(d.n_lower_bound),
                margin: Some(d.margin),
                ratio: d.ratio,
                bound_at_s0: Some(d.bound_at_s0),
                head_of_table: d.head_of_table,
                table_limited: d.table_limited,
                reason: None,
            },
            DepthOutcome::NotCertified { reason, .. } => Self {
                kind,
                certified: false,
                s0: None,
                n_lower_bound: None,
                margin: None,
                ratio: e_hz / r,
                bound_at_s0: None,
                head_of_table: false,
                table_limited: false,
                reason: Some(reason.clone()),
            },
        }
    }
}

#[derive(Serialize)]
struct OptimumRow {
    objective: Objective,
    t: f64,
    theta: f64,
    value: f64,
    r: f64,
    r_parallel: f64,
    e_hz: f64,
    e_hz_t: f64,
    e_hz_theta: f64,
    xi2: f64,
    xi2_bar: f64,
}

fn execute(cli: &Cli, args: &[String]) -> Result<Rendered> {
    let comments = vec![provenance_line(args)];
    let json = matches!(cli.format, Format::Json);
    let ok = |text| Ok(Rendered { text, status: 0 });

    match &cli.command {
        Command::Evolve { model, t } => {
            let state = prepare(&model.params(*t)?)?;
            let half = f64::from(model.n_total) / 2.0;
            let rows: Vec<AmplitudeRow> = state
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(r, c)| AmplitudeRow {
                    r: r as u32,
                    m: half - r as f64,
                    re: c.re,
                    im: c.im,
                    prob: c.norm_sqr(),
                })
                .collect();
            if json {
                let moments = moments_from_state(&state);
                ok(render_json(
                    args,
                    &json!({ "params": model.params(*t)?, "amplitudes": rows, "moments": moments }),
                )?)
            } else {
                ok(csv_records(&comments, &rows)?)
            }
        }
        Command::Scan {
            model,
            t_max,
            points,
            grid,
            objective,
        } => {
            let params = model.params(0.0)?;
            let horizon = match t_max {
                Some(t) => *t,
                None => default_horizon(&params)?,
            };
            let times = match grid {
                GridArg::Hybrid => hybrid_grid(horizon, *points)?,
                GridArg::Uniform => uniform_grid(0.0, horizon, *points)?,
            };
            let result = scan_time(&params, &times, (*objective).into())?;
            if json {
                ok(render_json(args, &result)?)
            } else {
                ok(csv_text(&[], |buf| {
                    write_scan_csv(&result.rows, &comments, buf)
                })?)
            }
        }
        Command::Optimize {
            model,
            objective,
            t_max,
            points,
            t_tol,
        } => {
            let settings = SearchSettings {
                coarse_points: *points,
                t_tol: *t_tol,
                horizon: *t_max,
            };
            let opt = optimize_over_t(&model.params(0.0)?, (*objective).into(), &settings)?;
            if json {
                ok(render_json(args, &opt)?)
            } else {
                let c = &opt.report;
                let row = OptimumRow {
                    objective: opt.objective,
                    t: opt.t,
                    theta: opt.theta,
                    value: opt.value,
                    r: opt.r,
                    r_parallel: opt.r_parallel,
                    e_hz: c.e_hz,
                    e_hz_t: c.e_hz_t,
                    e_hz_theta: c.e_hz_theta,
                    xi2: c.xi2,
                    xi2_bar: c.xi2_bar,
                };
                ok(csv_records(&comments, &[row])?)
            }
        }
        Command::Bounds {
            max_two_s,
            zeta,
            cache_dir,
        } => {
            let source = TableSource {
                bounds_table: None,
                cache_dir: cache_dir.clone(),
            };
            let table = load_table(&source, *max_two_s, *zeta)?;
            if json {
                ok(render_json(args, &table)?)
            } else {
                ok(table.to_csv_string(&comments)?)
            }
        }
        Command::Depth {
            ehz,
            r,
            kind,
            source,
            max_two_s,
        } => {
            let kind: DepthKind = (*kind).into();
            let table = load_table(source, *max_two_s, kind == DepthKind::SteeringPqs)?;
            let outcome = infer_depth(kind, *ehz, *r, &table)?;
            if json {
                ok(render_json(args, &outcome)?)
            } else {
                ok(csv_records(
                    &comments,
                    &[DepthRow::new(kind, *ehz, *r, &outcome)],
                )?)
            }
        }
        Command::Table1 {
            n_list,
            chi,
            k_const,
            source,
            points,
        } => {
            // certified depth never exceeds N
            let max_two_s = n_list.iter().copied().max().unwrap_or(1).max(2);
            let table = load_table(source, max_two_s, false)?;
            let settings = SearchSettings {
                coarse_points: *points,
                ..Default::default()
            };
            let rows = table_one(n_list, *chi, *k_const, &settings, &table);
            let status = if rows.iter().any(|r| r.error.is_some()) {
                3
            } else {
                0
            };
            let text = if json {
                render_json(args, &rows)?
            } else {
                csv_text(&[], |buf| write_table_one_csv(&rows, &comments, buf))?
            };
            Ok(Rendered { text, status })
        }
        Command::Crosscheck {
            model,
            points,
            t_max,
            tol,
        } => {
            let params = model.params(0.0)?;
            let horizon = match t_max {
                Some(t) => *t,
                None => default_horizon(&params)?,
            };
            if *points == 0 {
                return Err(Error::invalid("points must be positive"));
            }
            let times: Vec<f64> = (1..=*points)
                .map(|i| horizon * i as f64 / *points as f64)
                .collect();
            let report = crosscheck_times(&params, &times, *tol)?;
            let status = if report.passed { 0 } else { 4 };
            let text = if json {
                render_json(args, &report)?
            } else {
                #[derive(Serialize)]
                struct Row<'a> {
                    points: usize,
                    worst_deviation: f64,
                    worst_field: &'a str,
                    worst_time: f64,
                    tolerance: f64,
                    passed: bool,
                    warnings: usize,
                }
                csv_records(
                    &comments,
                    &[Row {
                        points: report.points,
                        worst_deviation: report.worst_deviation,
                        worst_field: &report.worst_field,
                        worst_time: report.worst_time,
                        tolerance: report.tolerance,
                        passed: report.passed,
                        warnings: report.warnings.len(),
                    }],
                )?
            };
            Ok(Rendered { text, status })
        }
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn run_parsed(cli: &Cli, args: &[String]) -> Result<i32> {
    let rendered = match cli.workers {
        Some(0) => return Err(Error::invalid("--workers must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| execute(cli, args))?
        }
        None => execute(cli, args)?,
    };
    match &cli.output {
        Some(path) => write_atomic(path, &rendered.text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(rendered.text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(rendered.status)
}

/// Parses `argv` (program name first) and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match run_parsed(&cli, &args) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("steerdepth: {e}");
            e.exit_code()
        }
    }
}
