//! Time scans and optimization of the interferometer criteria.
//!
//! θ is never gridded: at each t it comes from the analytic optimal angle.
//! Grid points are evaluated in parallel on the current rayon pool and
//! collected in grid order, so output does not depend on the worker count.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::BoundTable;
use crate::criteria::{evaluate_criteria, CriteriaReport, ThetaChoice};
use crate::depth::infer_depth_steering;
use crate::error::{Error, Result};
use crate::fock::{prepare, ModelParams};
use crate::moments::moments_from_state;

pub const SCAN_HEADER: [&str; 14] = [
    "t",
    "theta",
    "var_sx",
    "var_sy",
    "var_sz",
    "var_stheta",
    "mean_sx",
    "e_hz",
    "e_hz_t",
    "e_hz_theta",
    "xi2",
    "xi2_bar",
    "r",
    "r_parallel",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Xi2Bar,
    EHzTheta,
    EHz,
    EHzT,
}

impl Objective {
    pub fn value(self, report: &CriteriaReport) -> f64 {
        match self {
            Objective::Xi2Bar => report.xi2_bar,
            Objective::EHzTheta => report.e_hz_theta,
            Objective::EHz => report.e_hz,
            Objective::EHzT => report.e_hz_t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub t: f64,
    pub theta: f64,
    pub var_sx: f64,
    pub var_sy: f64,
    pub var_sz: f64,
    pub var_stheta: f64,
    pub mean_sx: f64,
    pub e_hz: f64,
    pub e_hz_t: f64,
    pub e_hz_theta: f64,
    pub xi2: f64,
    pub xi2_bar: f64,
    pub r: f64,
    pub r_parallel: f64,
}

impl ScanRow {
    fn new(t: f64, c: &CriteriaReport) -> Self {
        Self {
            t,
            theta: c.theta,
            var_sx: c.var_sx,
            var_sy: c.var_sy,
            var_sz: c.var_sz,
            var_stheta: c.var_theta,
            mean_sx: c.mean_sx,
            e_hz: c.e_hz,
            e_hz_t: c.e_hz_t,
            e_hz_theta: c.e_hz_theta,
            xi2: c.xi2,
            xi2_bar: c.xi2_bar,
            r: c.bloch_r,
            r_parallel: c.r_parallel,
        }
    }

    pub fn objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Xi2Bar => self.xi2_bar,
            Objective::EHzTheta => self.e_hz_theta,
            Objective::EHz => self.e_hz,
            Objective::EHzT => self.e_hz_t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub objective: Objective,
    pub t: f64,
    pub theta: f64,
    pub value: f64,
    pub r: f64,
    pub r_parallel: f64,
    pub report: CriteriaReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub n_total: u32,
    pub chi: f64,
    pub k_const: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param_grid: ParamGrid,
    pub rows: Vec<ScanRow>,
    /// Best grid row for the objective; the first one on ties.
    pub optimum: Optimum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub coarse_points: usize,
    pub t_tol: f64,
    /// Upper end of the scanned interval; defaults to a quarter of the revival period.
    pub horizon: Option<f64>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            coarse_points: 2000,
            t_tol: 1e-8,
            horizon: None,
        }
    }
}

const GOLDEN_CAP: usize = 500;
const FALLBACK_POINTS: usize = 256;

/// `π / (2(1−K)χ)`, i.e. twist angle π: a quarter of the revival period of
/// the spin state.
pub fn default_horizon(params: &ModelParams) -> Result<f64> {
    let rate = params.twist_rate();
    if rate == 0.0 {
        return Err(Error::invalid(
            "K = 1 or chi = 0 gives no twisting; pass an explicit horizon",
        ));
    }
    Ok(PI / rate.abs())
}

/// `points` equally spaced times on `[start, end]`, both ends included.
pub fn uniform_grid(start: f64, end: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(end > start) || !start.is_finite() || !end.is_finite() {
        return Err(Error::invalid(format!(
            "uniform grid needs >= 2 points and start < end, got {points} on [{start}, {end}]"
        )));
    }
    let step = (end - start) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            if i + 1 == points {
                end
            } else {
                start + step * i as f64
            }
        })
        .collect())
}

/// Half log-spaced on `[T·1e-6, T)`, half uniform on `(0, T]`, merged and
/// sorted. The log half resolves optima at `t ~ N^{-2/3}` for large N.
pub fn hybrid_grid(horizon: f64, points: usize) -> Result<Vec<f64>> {
    if points < 4 || !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!(
            "hybrid grid needs >= 4 points and a positive horizon, got {points}, {horizon}"
        )));
    }
    let n_log = points / 2;
    let n_lin = points - n_log;
    let lo = (horizon * 1e-6).ln();
    let hi = horizon.ln();
    // the log half stops short of T, which the uniform half already holds
    let mut grid: Vec<f64> = (0..n_log)
        .map(|i| (lo + (hi - lo) * i as f64 / n_log as f64).exp())
        .chain((1..=n_lin).map(|i| horizon * i as f64 / n_lin as f64))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// Criteria at time `t` with θ at its optimum.
pub fn evaluate_at(params: &ModelParams, t: f64) -> Result<CriteriaReport> {
    let state = prepare(&params.at_time(t))?;
    evaluate_criteria(&moments_from_state(&state), ThetaChoice::Optimal)
}

fn check_params(params: &ModelParams) -> Result<()> {
    params.validate()?;
    if params.n_total < 2 {
        return Err(Error::invalid("sweeps need N >= 2"));
    }
    Ok(())
}

fn first_min(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best
}

fn optimum_from(objective: Objective, t: f64, report: CriteriaReport) -> Optimum {
    Optimum {
        objective,
        t,
        theta: report.theta,
        value: objective.value(&report),
        r: report.bloch_r,
        r_parallel: report.r_parallel,
        report,
    }
}

/// Evaluates every grid time; `params.time` is ignored.
pub fn scan_time(params: &ModelParams, times: &[f64], objective: Objective) -> Result<SweepResult> {
    check_params(params)?;
    if times.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::invalid(format!("non-finite time {t} in grid")));
    }
    let reports: Vec<CriteriaReport> = times
        .par_iter()
        .map(|&t| evaluate_at(params, t))
        .collect::<Result<_>>()?;
    let (i, _) = first_min(reports.iter().map(|r| objective.value(r)))
        .ok_or_else(|| Error::Consistency("objective is NaN at every grid point".into()))?;
    let rows = times
        .iter()
        .zip(&reports)
        .map(|(&t, c)| ScanRow::new(t, c))
        .collect();
    Ok(SweepResult {
        param_grid: ParamGrid {
            n_total: params.n_total,
            chi: params.chi,
            k_const: params.k_const,
            t_min: times.iter().copied().fold(f64::INFINITY, f64::min),
            t_max: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            points: times.len(),
        },
        rows,
        optimum: optimum_from(objective, times[i], reports[i]),
    })
}

fn golden_section(
    f: &dyn Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..GOLDEN_CAP {
        if b - a <= tol {
            break;
        }
        // `<=` keeps the left point on ties, matching the grid's first-minimum rule
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Coarse scan followed by golden-section refinement of the best bracket.
///
/// A grid minimum at either end of the scan means the optimum was not
/// bracketed and is reported as non-convergence.
pub fn optimize_over_t(
    params: &ModelParams,
    objective: Objective,
    settings: &SearchSettings,
) -> Result<Optimum> {
    check_params(params)?;
    if !(settings.t_tol > 0.0) {
        return Err(Error::invalid("t_tol must be positive"));
    }
    let horizon = match settings.horizon {
        Some(h) => h,
        None => default_horizon(params)?,
    };
    let times = hybrid_grid(horizon, settings.coarse_points)?;
    let scan = scan_time(params, &times, objective)?;
    let values: Vec<f64> = scan.rows.iter().map(|r| r.objective(objective)).collect();
    let (i, grid_best) = first_min(values.iter().copied()).expect("scan_time checked for NaN");
    if i == 0 || i + 1 == times.len() {
        return Err(Error::NonConvergence {
            what: "time optimization (minimum at the scan boundary)",
            iterations: times.len(),
            best: grid_best,
        });
    }

    let f = |t: f64| evaluate_at(params, t).map(|r| objective.value(&r));
    let (lo, hi) = (times[i - 1], times[i + 1]);
    // relative floor so tiny optimal times at large N are still resolved
    let tol = settings.t_tol.min(1e-7 * times[i]);
    let (mut t_best, mut v_best) = golden_section(&f, lo, hi, tol)?;

    // golden section assumes unimodality inside the bracket; if it did worse
    // than the grid, fall back to a fine sub-grid
    if !(v_best <= grid_best) {
        let sub = uniform_grid(lo, hi, FALLBACK_POINTS)?;
        let vals = sub.par_iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        let (j, v) = first_min(vals.into_iter()).expect("finite values");
        if v <= grid_best {
            t_best = sub[j];
            v_best = v;
        } else {
            t_best = times[i];
            v_best = grid_best;
        }
    }
    let report = evaluate_at(params, t_best)?;
    debug_assert_eq!(objective.value(&report), v_best);
    Ok(optimum_from(objective, t_best, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableOneRow {
    pub n_total: u32,
    pub t_opt: Option<f64>,
    pub theta_opt: Option<f64>,
    pub e_hz_theta: Option<f64>,
    pub r: Option<f64>,
    pub ratio: Option<f64>,
    pub two_s: Option<u32>,
    pub c_tilde: Option<f64>,
    pub table_limited: bool,
    /// Set when this row failed; other rows are unaffected.
    pub error: Option<String>,
}

impl TableOneRow {
    fn failed(n_total: u32, e: &Error) -> Self {
        Self {
            n_total,
            t_opt: None,
            theta_opt: None,
            e_hz_theta: None,
            r: None,
            ratio: None,
            two_s: None,
            c_tilde: None,
            table_limited: false,
            error: Some(e.to_string()),
        }
    }
}

fn table_one_row(
    n: u32,
    chi: f64,
    k_const: f64,
    settings: &SearchSettings,
    table: &BoundTable,
) -> Result<TableOneRow> {
    let params = ModelParams::new(n, chi, k_const, 0.0)?;
    let opt = optimize_over_t(&params, Objective::EHzTheta, settings)?;
    let ratio = opt.value / opt.r;
    let depth = infer_depth_steering(opt.value, opt.r.min(1.0), table)?;
    let cert = depth.certified();
    Ok(TableOneRow {
        n_total: n,
        t_opt: Some(opt.t),
        theta_opt: Some(opt.theta),
        e_hz_theta: Some(opt.value),
        r: Some(opt.r),
        ratio: Some(ratio),
        two_s: cert.map(|c| c.n_lower_bound),
        c_tilde: cert.map(|c| c.bound_at_s0),
        table_limited: cert.is_some_and(|c| c.table_limited),
        error: None,
    })
}

/// Minimizes E_HZ^θ over t for each N, divides by r at that optimum and
/// infers the certified steering depth from `table`.
pub fn table_one(
    n_list: &[u32],
    chi: f64,
    k_const: f64,
    settings: &SearchSettings,
    table: &BoundTable,
) -> Vec<TableOneRow> {
    n_list
        .iter()
        .map(|&n| {
            table_one_row(n, chi, k_const, settings, table)
                .unwrap_or_else(|e| TableOneRow::failed(n, &e))
        })
        .collect()
}

/// Writes `# `-prefixed comment lines, the fixed header and one record per row.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], comments: &[String], mut out: W) -> Result<()> {
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(SCAN_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_one_csv<W: Write>(
    rows: &[TableOneRow],
    comments: &[String],
    mut out: W,
) -> Result<()> {
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "n_total",
            "t_opt",
            "theta_opt",
            "e_hz_theta",
            "r",
            "ratio",
            "two_s",
            "c_tilde",
            "table_limited",
            "error",
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{build_table, BoundSettings, SpinGrid};

    fn params(n: u32) -> ModelParams {
        ModelParams::new(n, 1.0, -1.0, 0.0).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn grids() {
        let g = uniform_grid(0.0, 1.0, 5).unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let h = hybrid_grid(PI / 4.0, 2000).unwrap();
        assert!(h.windows(2).all(|w| w[0] < w[1]));
        assert!((h[0] - PI / 4.0 * 1e-6).abs() < 1e-18);
        assert_eq!(*h.last().unwrap(), PI / 4.0);
        assert_eq!(h.len(), 2000);
        assert!(uniform_grid(1.0, 1.0, 3).is_err());
        assert!(hybrid_grid(0.0, 100).is_err());
        assert!((default_horizon(&params(10)).unwrap() - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(scan_time(&params(10), &[], Objective::EHz).is_err());
        assert!(scan_time(&params(1), &[0.1], Objective::EHz).is_err());
    }

    #[test]
    fn small_t_behaviour() {
        let times = uniform_grid(0.0, 0.02, 201).unwrap();
        let s = scan_time(&params(100), &times, Objective::EHz).unwrap();
        let first = s.rows[0];
        assert!(first.var_sx.abs() < 1e-9);
        assert!((first.e_hz - 0.5).abs() < 1e-12);
        assert!(s.rows[1].var_sx < 1e-3);
        // entangled early, then the variances wash the signature out
        assert!(s.rows[1..20].iter().all(|r| r.e_hz < 1.0));
        assert!(s.rows.iter().any(|r| r.e_hz > 1.0));
        for r in &s.rows {
            assert!((r.var_sz - 25.0).abs() < 1e-9);
        }
    }

    #[test]
    fn revival_rows_repeat() {
        let period = 2.0 * PI;
        let base = uniform_grid(0.0, period, 41).unwrap();
        let shifted: Vec<f64> = base.iter().map(|t| t + period).collect();
        let a = scan_time(&params(12), &base, Objective::EHzTheta).unwrap();
        let b = scan_time(&params(12), &shifted, Objective::EHzTheta).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert!((x.e_hz_theta - y.e_hz_theta).abs() < 1e-8);
            assert!((x.xi2_bar - y.xi2_bar).abs() < 1e-6 * x.xi2_bar.max(1.0));
        }
    }

    #[test]
    fn optimum_not_above_rows() {
        let times = hybrid_grid(PI / 4.0, 400).unwrap();
        let s = scan_time(&params(40), &times, Objective::Xi2Bar).unwrap();
        assert!(s.rows.iter().all(|r| s.optimum.value <= r.xi2_bar));
        let opt =
            optimize_over_t(&params(40), Objective::Xi2Bar, &SearchSettings::default()).unwrap();
        assert!(opt.value <= s.optimum.value);
    }

    #[test]
    fn boundary_minimum_is_an_error() {
        // a horizon far inside the descent keeps the minimum at the right end
        let settings = SearchSettings {
            coarse_points: 200,
            horizon: Some(1e-4),
            ..Default::default()
        };
        let err = optimize_over_t(&params(100), Objective::EHzTheta, &settings).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn small_n_ratios() {
        for (n, reference) in [(50, 0.1951), (100, 0.1572)] {
            let opt = optimize_over_t(&params(n), Objective::EHzTheta, &SearchSettings::default())
                .unwrap();
            let ratio = opt.value / opt.r;
            assert!(rel(ratio, reference) < 1e-3, "N={n}: {ratio}");
            assert!(opt.value < 0.5);
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let times = hybrid_grid(PI / 4.0, 300).unwrap();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let s = scan_time(&params(64), &times, Objective::EHzTheta).unwrap();
                let mut buf = Vec::new();
                write_scan_csv(&s.rows, &["x".into()], &mut buf).unwrap();
                buf
            })
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn table_one_rows() {
        let table = build_table(&SpinGrid::new(60), &BoundSettings::default(), false).unwrap();
        assert!(table_one(&[], 1.0, -1.0, &SearchSettings::default(), &table).is_empty());
        let rows = table_one(&[50, 1], 1.0, -1.0, &SearchSettings::default(), &table);
        assert_eq!(rows.len(), 2);
        let r = &rows[0];
        assert!(r.error.is_none());
        // the ratio sits above the tight bound for the full N/2 spin
        let c_full = table
            .entries
            .iter()
            .find(|e| e.two_s == 50)
            .unwrap()
            .c_tilde;
        assert!(r.ratio.unwrap() > c_full);
        assert!(r.two_s.unwrap() < 50);
        assert!(rows[1].error.is_some());
        let mut buf = Vec::new();
        write_table_one_csv(&rows, &[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "n_total,t_opt,theta_opt,e_hz_theta,r,ratio,two_s,c_tilde,table_limited,error\n"
        ));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn scan_header_matches_row_fields() {
        let times = [0.01, 0.02];
        let s = scan_time(&params(10), &times, Objective::EHz).unwrap();
        let mut buf = Vec::new();
        write_scan_csv(&s.rows, &[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SCAN_HEADER.join(","));
        assert_eq!(lines.count(), 2);
    }
}
