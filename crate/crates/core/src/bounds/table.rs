use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::solver::{solve_both, BoundSettings};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub two_s: u32,
    pub c_s: f64,
    pub c_tilde: f64,
    pub zeta2: Option<f64>,
}

impl BoundEntry {
    pub fn spin(&self) -> f64 {
        f64::from(self.two_s) / 2.0
    }
}

/// Every `2S` up to `dense_limit`, then a geometric progression with the
/// given ratio (rounded to integers, strictly increasing) up to `max_two_s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinGrid {
    pub max_two_s: u32,
    pub dense_limit: u32,
    pub ratio: f64,
}

impl SpinGrid {
    pub fn new(max_two_s: u32) -> Self {
        Self {
            max_two_s,
            dense_limit: 100,
            ratio: 1.01,
        }
    }

    pub fn two_s_values(&self) -> Result<Vec<u32>> {
        if self.max_two_s == 0 {
            return Err(Error::invalid("grid must reach at least 2S = 1"));
        }
        if !(self.ratio > 1.0) || !self.ratio.is_finite() {
            return Err(Error::invalid("geometric ratio must exceed 1"));
        }
        let dense_top = self.dense_limit.clamp(1, self.max_two_s);
        let mut out: Vec<u32> = (1..=dense_top).collect();
        let mut cur = f64::from(dense_top);
        while *out.last().unwrap() < self.max_two_s {
            cur *= self.ratio;
            let last = *out.last().unwrap();
            let next = (cur.round() as u32).max(last + 1).min(self.max_two_s);
            out.push(next);
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableProvenance {
    /// `solver` or the file the table was read from.
    pub source: String,
    pub grid: Option<SpinGrid>,
    pub settings: Option<BoundSettings>,
    pub with_zeta: bool,
    pub max_solver_iterations: usize,
    pub max_eigen_residual: f64,
    pub max_self_consistency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub provenance: TableProvenance,
    pub entries: Vec<BoundEntry>,
}

/// Tolerance for `c_tilde = c_s / S` on tables read from disk.
const RATIO_TOL: f64 = 1e-9;

impl BoundTable {
    /// Validates ordering, `c_tilde = c_s/S`, monotonicity and `ζ² ≤ 0.5`.
    pub fn new(entries: Vec<BoundEntry>, provenance: TableProvenance) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InsufficientData("bound table is empty".into()));
        }
        for w in entries.windows(2) {
            if w[1].two_s <= w[0].two_s {
                return Err(Error::invalid(format!(
                    "table rows must have increasing 2S ({} after {})",
                    w[1].two_s, w[0].two_s
                )));
            }
            if w[1].c_tilde > w[0].c_tilde {
                return Err(Error::invalid(format!(
                    "C~ increases from 2S = {} to {}",
                    w[0].two_s, w[1].two_s
                )));
            }
        }
        let mut prev_zeta = f64::INFINITY;
        for e in &entries {
            if e.two_s == 0 || !(e.c_s > 0.0) || !e.c_tilde.is_finite() {
                return Err(Error::invalid(format!("bad table row at 2S = {}", e.two_s)));
            }
            if (e.c_tilde - e.c_s / e.spin()).abs() > RATIO_TOL * e.c_tilde {
                return Err(Error::invalid(format!(
                    "c_tilde != c_s / S at 2S = {}",
                    e.two_s
                )));
            }
            if let Some(z) = e.zeta2 {
                if !(z > 0.0) || z > 0.5 + 1e-12 || z > prev_zeta {
                    return Err(Error::invalid(format!(
                        "zeta2 must be positive, at most 0.5 and non-increasing (2S = {})",
                        e.two_s
                    )));
                }
                prev_zeta = z;
            }
        }
        Ok(Self {
            provenance,
            entries,
        })
    }

    /// Builds a table with an explicit calibration (2S, C̃) list.
    pub fn from_c_tilde(rows: &[(u32, f64)], source: &str) -> Result<Self> {
        let entries = rows
            .iter()
            .map(|&(two_s, c_tilde)| BoundEntry {
                two_s,
                c_s: c_tilde * f64::from(two_s) / 2.0,
                c_tilde,
                zeta2: None,
            })
            .collect();
        Self::new(entries, TableProvenance::external(source))
    }

    pub fn has_zeta(&self) -> bool {
        self.entries.iter().any(|e| e.zeta2.is_some())
    }

    pub fn max_two_s(&self) -> u32 {
        self.entries.last().map_or(0, |e| e.two_s)
    }

    pub fn min_two_s(&self) -> u32 {
        self.entries.first().map_or(0, |e| e.two_s)
    }

    pub fn to_csv_string(&self, header_lines: &[String]) -> Result<String> {
        let mut out = String::new();
        for line in header_lines {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["two_s", "c_s", "c_tilde", "zeta2"])?;
        for e in &self.entries {
            w.write_record([
                e.two_s.to_string(),
                format!("{:.17e}", e.c_s),
                format!("{:.17e}", e.c_tilde),
                e.zeta2.map(|z| format!("{z:.17e}")).unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, source: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            two_s: u32,
            c_s: f64,
            c_tilde: f64,
            zeta2: Option<f64>,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            entries.push(BoundEntry {
                two_s: row.two_s,
                c_s: row.c_s,
                c_tilde: row.c_tilde,
                zeta2: row.zeta2,
            });
        }
        Self::new(entries, TableProvenance::external(source))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let table: BoundTable = serde_json::from_str(&text)?;
        Self::new(table.entries, table.provenance)
    }

    /// Reads `.json` as JSON and anything else as CSV.
    pub fn read(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::read_json(path),
            _ => Self::read_csv(path),
        }
    }
}

impl TableProvenance {
    fn external(source: &str) -> Self {
        Self {
            source: source.to_string(),
            grid: None,
            settings: None,
            with_zeta: false,
            max_solver_iterations: 0,
            max_eigen_residual: 0.0,
            max_self_consistency: 0.0,
        }
    }
}

/// Solves every grid point in parallel; rows come back in grid order.
pub fn build_table(
    grid: &SpinGrid,
    settings: &BoundSettings,
    with_zeta: bool,
) -> Result<BoundTable> {
    settings.validate()?;
    let spins = grid.two_s_values()?;
    // largest spins first so the expensive solves start early
    let mut solved: Vec<_> = spins
        .par_iter()
        .rev()
        .map(|&two_s| solve_both(two_s, settings, with_zeta))
        .collect::<Result<Vec<_>>>()?;
    solved.reverse();

    let mut provenance = TableProvenance {
        source: "solver".into(),
        grid: Some(*grid),
        settings: Some(*settings),
        with_zeta,
        max_solver_iterations: 0,
        max_eigen_residual: 0.0,
        max_self_consistency: 0.0,
    };
    let mut entries = Vec::with_capacity(solved.len());
    for (c, z) in solved {
        provenance.max_solver_iterations = provenance.max_solver_iterations.max(c.iterations);
        provenance.max_eigen_residual = provenance.max_eigen_residual.max(c.eigen_residual);
        provenance.max_self_consistency = provenance.max_self_consistency.max(c.self_consistency);
        entries.push(BoundEntry {
            two_s: c.two_s,
            c_s: c.c_s,
            c_tilde: c.c_tilde(),
            zeta2: z.map(|z| z.zeta2),
        });
    }
    BoundTable::new(entries, provenance).map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::Consistency(format!("solver table: {msg}")),
        other => other,
    })
}

/// Cache file name for a grid and settings: a hash of their JSON encoding.
pub fn cache_key(grid: &SpinGrid, settings: &BoundSettings, with_zeta: bool) -> String {
    let payload =
        serde_json::to_string(&(grid, settings, with_zeta)).expect("plain data serializes");
    let digest = Sha256::digest(payload.as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("bounds-{hex}.csv")
}

/// Loads the cached table for these settings, building and caching it if absent.
pub fn load_or_build(
    cache_dir: &Path,
    grid: &SpinGrid,
    settings: &BoundSettings,
    with_zeta: bool,
) -> Result<BoundTable> {
    let path: PathBuf = cache_dir.join(cache_key(grid, settings, with_zeta));
    if path.exists() {
        let mut table = BoundTable::read_csv(&path)?;
        table.provenance.grid = Some(*grid);
        table.provenance.settings = Some(*settings);
        table.provenance.with_zeta = with_zeta;
        return Ok(table);
    }
    let table = build_table(grid, settings, with_zeta)?;
    fs::create_dir_all(cache_dir)?;
    let header = vec![format!(
        "bound cache grid={} settings={} zeta={with_zeta}",
        serde_json::to_string(grid)?,
        serde_json::to_string(settings)?
    )];
    let mut tmp = tempfile::NamedTempFile::new_in(cache_dir)?;
    tmp.write_all(table.to_csv_string(&header)?.as_bytes())?;
    tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
    Ok(table)
}

/// Log-log linear interpolation through `(two_s, value)` nodes.
fn loglog(nodes: &[(u32, f64)], spin_s: f64) -> Result<f64> {
    let (first, last) = match (nodes.first(), nodes.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::InsufficientData("no interpolation nodes".into())),
    };
    let lo = f64::from(first.0) / 2.0;
    let hi = f64::from(last.0) / 2.0;
    if !(spin_s >= lo && spin_s <= hi) {
        return Err(Error::OutOfRange {
            query: spin_s,
            lo,
            hi,
        });
    }
    let two_s = 2.0 * spin_s;
    let idx = nodes.partition_point(|(t, _)| f64::from(*t) <= two_s);
    let (t1, v1) = nodes[idx - 1];
    if f64::from(t1) == two_s || idx == nodes.len() {
        return Ok(v1);
    }
    let (t2, v2) = nodes[idx];
    let w = (two_s.ln() - f64::from(t1).ln()) / (f64::from(t2).ln() - f64::from(t1).ln());
    Ok((v1.ln() + w * (v2.ln() - v1.ln())).exp().min(v1).max(v2))
}

/// C̃ at any spin within the table range.
pub fn interpolate_c_tilde(table: &BoundTable, spin_s: f64) -> Result<f64> {
    let nodes: Vec<(u32, f64)> = table.entries.iter().map(|e| (e.two_s, e.c_tilde)).collect();
    loglog(&nodes, spin_s)
}

/// ζ² at any spin within the range of rows that carry it.
pub fn interpolate_zeta2(table: &BoundTable, spin_s: f64) -> Result<f64> {
    let nodes: Vec<(u32, f64)> = table
        .entries
        .iter()
        .filter_map(|e| e.zeta2.map(|z| (e.two_s, z)))
        .collect();
    if nodes.is_empty() {
        return Err(Error::InsufficientData("table has no zeta2 column".into()));
    }
    loglog(&nodes, spin_s)
}

/// Least-squares slope of `ln C_S` against `ln S` over the top decade of the
/// table. Needs at least two decades of S, reaching S ≥ 100.
pub fn asymptotic_check(table: &BoundTable) -> Result<f64> {
    let s_max = f64::from(table.max_two_s()) / 2.0;
    let s_min = f64::from(table.min_two_s()) / 2.0;
    if s_max / s_min < 100.0 {
        return Err(Error::InsufficientData(format!(
            "table spans S in [{s_min}, {s_max}], less than two decades"
        )));
    }
    if s_max < 100.0 {
        return Err(Error::InsufficientData(format!(
            "largest S = {s_max} is below the asymptotic regime (S >= 100)"
        )));
    }
    let pts: Vec<(f64, f64)> = table
        .entries
        .iter()
        .filter(|e| e.spin() >= s_max / 10.0)
        .map(|e| (e.spin().ln(), e.c_s.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "only {} rows in the top decade",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
