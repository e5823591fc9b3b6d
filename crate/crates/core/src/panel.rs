//! Firm-period panels: storage, validation, CSV persistence.
//!
//! A firm contributes one covariate row per period from its entry `s_i` to its
//! last observed period `τ_i`. The exit flag of a firm (default or censoring
//! in `(τ_i, τ_i + 1]`) is stored on the row at `τ_i`, so the covariate seen
//! just before an exit is the row carrying the flag.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What happened to a firm in the period following a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    None,
    Default,
    Censor,
}

/// Dense design matrix of firm-period rows with outcomes.
///
/// This is what the estimators consume. A `Panel` owns one; experiments derive
/// modified copies (deleted rows, noisy covariates) without re-validating panel
/// invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Rows {
    dim: usize,
    x: Vec<f64>,
    outcome: Vec<Outcome>,
    class: Vec<u32>,
    period: Vec<u32>,
    // firm f owns rows firm_start[f]..firm_start[f+1]
    firm_start: Vec<usize>,
}

/// Rows are reduced in chunks of about this many rows, cut at firm
/// boundaries. The layout depends only on the data, never on thread count.
const CHUNK_ROWS: usize = 16_384;

impl Rows {
    pub fn empty(dim: usize) -> Self {
        Rows {
            dim,
            x: Vec::new(),
            outcome: Vec::new(),
            class: Vec::new(),
            period: Vec::new(),
            firm_start: vec![0],
        }
    }

    pub fn with_capacity(dim: usize, rows: usize, firms: usize) -> Self {
        let mut r = Rows::empty(dim);
        r.x.reserve(rows * dim);
        r.outcome.reserve(rows);
        r.class.reserve(rows);
        r.period.reserve(rows);
        r.firm_start.reserve(firms);
        r
    }

    /// Append one row to the firm currently being built.
    pub fn push(&mut self, v: &[f64], outcome: Outcome, class: u32, period: u32) {
        debug_assert_eq!(v.len(), self.dim);
        self.x.extend_from_slice(v);
        self.outcome.push(outcome);
        self.class.push(class);
        self.period.push(period);
    }

    /// Close the current firm. Empty firms are skipped.
    pub fn end_firm(&mut self) {
        let n = self.len();
        if *self.firm_start.last().unwrap() != n {
            self.firm_start.push(n);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn firm_count(&self) -> usize {
        self.firm_start.len() - 1
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.dim..(r + 1) * self.dim]
    }

    #[inline]
    pub fn outcome(&self, r: usize) -> Outcome {
        self.outcome[r]
    }

    #[inline]
    pub fn class(&self, r: usize) -> usize {
        self.class[r] as usize
    }

    #[inline]
    pub fn period(&self, r: usize) -> usize {
        self.period[r] as usize
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcome
    }

    pub fn data(&self) -> &[f64] {
        &self.x
    }

    pub fn firm_range(&self, f: usize) -> std::ops::Range<usize> {
        self.firm_start[f]..self.firm_start[f + 1]
    }

    pub fn class_count(&self) -> usize {
        self.class.iter().map(|&c| c as usize + 1).max().unwrap_or(1)
    }

    pub fn count(&self, which: Outcome) -> usize {
        self.outcome.iter().filter(|&&o| o == which).count()
    }

    /// Row ranges for parallel reduction, aligned to firm boundaries.
    pub fn chunks(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for &b in &self.firm_start[1..] {
            if b - start >= CHUNK_ROWS {
                out.push(start..b);
                start = b;
            }
        }
        if start < self.len() {
            out.push(start..self.len());
        }
        out
    }

    /// Keep only rows with `keep[r]`; firm grouping is preserved.
    pub fn filter(&self, keep: &[bool]) -> Rows {
        assert_eq!(keep.len(), self.len());
        let mut out = Rows::with_capacity(self.dim, self.len(), self.firm_count());
        for f in 0..self.firm_count() {
            for r in self.firm_range(f) {
                if keep[r] {
                    out.push(self.row(r), self.outcome[r], self.class[r], self.period[r]);
                }
            }
            out.end_firm();
        }
        out
    }

    /// Replace outcome codes, e.g. to move an exit flag to an earlier row.
    pub fn with_outcomes(&self, outcome: Vec<Outcome>) -> Rows {
        assert_eq!(outcome.len(), self.len());
        Rows {
            outcome,
            ..self.clone()
        }
    }

    /// Apply `f(row_index, row)` to every covariate row in place.
    pub fn map_rows(&mut self, mut f: impl FnMut(usize, &mut [f64])) {
        let d = self.dim;
        for (r, row) in self.x.chunks_exact_mut(d).enumerate() {
            f(r, row);
        }
    }

    /// Keep only the covariate coordinates listed in `cols`.
    pub fn select_columns(&self, cols: &[usize]) -> Rows {
        let mut x = Vec::with_capacity(self.len() * cols.len());
        for r in 0..self.len() {
            let row = self.row(r);
            x.extend(cols.iter().map(|&c| row[c]));
        }
        Rows {
            dim: cols.len(),
            x,
            ..self.clone()
        }
    }

    /// Swap default and censor codes.
    pub fn swap_exit_kinds(&self) -> Rows {
        let outcome = self
            .outcome
            .iter()
            .map(|o| match o {
                Outcome::Default => Outcome::Censor,
                Outcome::Censor => Outcome::Default,
                Outcome::None => Outcome::None,
            })
            .collect();
        self.with_outcomes(outcome)
    }
}

/// Per-firm bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Firm {
    pub id: u64,
    pub class: u32,
    pub entry: usize,
    pub exit: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    period_count: usize,
    common_dim: usize,
    firms: Vec<Firm>,
    rows: Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub firm_periods: usize,
    pub default_count: usize,
    pub censor_count: usize,
    pub empirical_default_rate: f64,
}

impl Panel {
    /// Assemble a panel from parts and check every invariant.
    pub fn new(period_count: usize, common_dim: usize, firms: Vec<Firm>, rows: Rows) -> Result<Self> {
        let p = Panel::new_unchecked(period_count, common_dim, firms, rows);
        p.validate()?;
        Ok(p)
    }

    /// Assemble without validation; for generators that build valid panels by
    /// construction.
    pub fn new_unchecked(period_count: usize, common_dim: usize, firms: Vec<Firm>, rows: Rows) -> Self {
        Panel {
            period_count,
            common_dim,
            firms,
            rows,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvariantViolation(msg));
        if self.rows.is_empty() {
            return Err(Error::EmptyPanel);
        }
        if self.firms.len() != self.rows.firm_count() {
            return bad(format!(
                "{} firm records but {} row groups",
                self.firms.len(),
                self.rows.firm_count()
            ));
        }
        if self.common_dim > self.rows.dim() {
            return bad(format!(
                "common_dim {} exceeds covariate dimension {}",
                self.common_dim,
                self.rows.dim()
            ));
        }
        let mut common: Vec<Option<usize>> = vec![None; self.period_count];
        for (f, firm) in self.firms.iter().enumerate() {
            let range = self.rows.firm_range(f);
            if firm.entry > firm.exit || firm.exit >= self.period_count {
                return bad(format!(
                    "firm {}: entry {} / exit {} outside 0..{}",
                    firm.id, firm.entry, firm.exit, self.period_count
                ));
            }
            if range.len() != firm.exit - firm.entry + 1 {
                return bad(format!("firm {}: rows do not cover entry..exit", firm.id));
            }
            for (k, r) in range.clone().enumerate() {
                let t = self.rows.period(r);
                if t != firm.entry + k {
                    return bad(format!("firm {}: period {} out of sequence", firm.id, t));
                }
                if self.rows.class(r) != firm.class as usize {
                    return bad(format!("firm {}: class changes over time", firm.id));
                }
                let last = r + 1 == range.end;
                let o = self.rows.outcome(r);
                if !last && o != Outcome::None {
                    return bad(format!("firm {}: exit flag at t={} before last row", firm.id, t));
                }
                if last && o != firm.outcome {
                    return bad(format!("firm {}: exit flag disagrees with firm record", firm.id));
                }
                if self.rows.row(r).iter().any(|v| !v.is_finite()) {
                    return bad(format!("firm {}: non-finite covariate at t={}", firm.id, t));
                }
                if self.common_dim > 0 {
                    match common[t] {
                        None => common[t] = Some(r),
                        Some(r0) => {
                            let a = &self.rows.row(r0)[..self.common_dim];
                            let b = &self.rows.row(r)[..self.common_dim];
                            if a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-12 * (1.0 + x.abs())) {
                                return bad(format!("common covariates differ across firms at t={}", t));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn firm_count(&self) -> usize {
        self.firms.len()
    }

    pub fn period_count(&self) -> usize {
        self.period_count
    }

    pub fn covariate_dim(&self) -> usize {
        self.rows.dim()
    }

    pub fn common_dim(&self) -> usize {
        self.common_dim
    }

    pub fn class_count(&self) -> usize {
        self.firms.iter().map(|f| f.class as usize + 1).max().unwrap_or(1)
    }

    pub fn firms(&self) -> &[Firm] {
        &self.firms
    }

    pub fn rows(&self) -> &Rows {
        &self.rows
    }

    pub fn into_rows(self) -> Rows {
        self.rows
    }

    /// Covariate row of firm index `f` at period `t`, if alive.
    pub fn covariate(&self, f: usize, t: usize) -> Option<&[f64]> {
        let firm = &self.firms[f];
        if t < firm.entry || t > firm.exit {
            return None;
        }
        Some(self.rows.row(self.rows.firm_range(f).start + t - firm.entry))
    }

    /// Restrict to periods `lo..hi`, re-basing period indices to start at 0.
    /// Firms exiting at or after `hi` become survivors of the window.
    pub fn window(&self, lo: usize, hi: usize) -> Panel {
        let hi = hi.min(self.period_count);
        let mut rows = Rows::with_capacity(self.rows.dim(), self.rows.len(), self.firms.len());
        let mut firms = Vec::new();
        for (f, firm) in self.firms.iter().enumerate() {
            let a = firm.entry.max(lo);
            let b = firm.exit.min(hi.saturating_sub(1));
            if a > b || hi <= lo {
                continue;
            }
            let outcome = if b == firm.exit { firm.outcome } else { Outcome::None };
            let base = self.rows.firm_range(f).start;
            for t in a..=b {
                let r = base + t - firm.entry;
                let o = if t == b { outcome } else { Outcome::None };
                rows.push(self.rows.row(r), o, firm.class, (t - lo) as u32);
            }
            rows.end_firm();
            firms.push(Firm {
                id: firm.id,
                class: firm.class,
                entry: a - lo,
                exit: b - lo,
                outcome,
            });
        }
        Panel::new_unchecked(hi.saturating_sub(lo), self.common_dim, firms, rows)
    }
}

pub fn summarize(panel: &Panel) -> PanelSummary {
    let firm_periods: usize = panel.firms.iter().map(|f| f.exit - f.entry).sum();
    let default_count = panel.firms.iter().filter(|f| f.outcome == Outcome::Default).count();
    let censor_count = panel.firms.iter().filter(|f| f.outcome == Outcome::Censor).count();
    let empirical_default_rate = if firm_periods == 0 {
        0.0
    } else {
        (default_count as f64 / firm_periods as f64).min(1.0)
    };
    PanelSummary {
        firm_periods,
        default_count,
        censor_count,
        empirical_default_rate,
    }
}

// ---------------------------------------------------------------------------
// CSV persistence

/// Sidecar descriptor stored next to the CSV as `<stem>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDescriptor {
    pub common_dim: usize,
    pub period_count: usize,
    pub columns: Vec<String>,
    /// Declared entry periods for firms that enter after their first row
    /// would suggest. Firms not listed enter at their first row.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub entry_times: BTreeMap<u64, usize>,
}

pub const FIXED_COLUMNS: [&str; 5] = ["firm_id", "period", "class_id", "default_next", "censor_next"];

pub fn descriptor_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Options for [`load_panel_with`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Use this descriptor instead of looking for a sidecar file.
    pub descriptor: Option<PanelDescriptor>,
}

pub fn load_panel(path: &Path) -> Result<Panel> {
    load_panel_with(path, &LoadOptions::default())
}

pub fn load_panel_with(path: &Path, opts: &LoadOptions) -> Result<Panel> {
    let descriptor = match &opts.descriptor {
        Some(d) => Some(d.clone()),
        None => {
            let side = descriptor_path(path);
            if side.exists() {
                let text = std::fs::read_to_string(&side)?;
                Some(serde_json::from_str::<PanelDescriptor>(&text)?)
            } else {
                None
            }
        }
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::IoFailure(io),
            other => Error::MalformedRow {
                line: 0,
                message: format!("{:?}", other),
            },
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::MalformedRow {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < FIXED_COLUMNS.len() + 1 || header[..5] != FIXED_COLUMNS {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("header must start with {} followed by x1..xd", FIXED_COLUMNS.join(",")),
        });
    }
    let dim = header.len() - 5;
    for (k, name) in header[5..].iter().enumerate() {
        if *name != format!("x{}", k + 1) {
            return Err(Error::MalformedRow {
                line: 1,
                message: format!("expected column x{}, found `{}`", k + 1, name),
            });
        }
    }

    // group rows by firm id, preserving the order of periods as given
    struct Raw {
        period: usize,
        class: u32,
        flag: Outcome,
        line: usize,
        x: Vec<f64>,
    }
    let mut by_firm: BTreeMap<u64, Vec<Raw>> = BTreeMap::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            line,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let int = |i: usize| -> Result<u64> {
            rec[i].parse::<u64>().map_err(|_| Error::MalformedRow {
                line,
                message: format!("field `{}` is not a non-negative integer: `{}`", header[i], &rec[i]),
            })
        };
        let firm = int(0)?;
        let period = int(1)? as usize;
        let class = int(2)? as u32;
        let dflag = int(3)?;
        let cflag = int(4)?;
        if dflag > 1 || cflag > 1 {
            return Err(Error::MalformedRow {
                line,
                message: "flags must be 0 or 1".into(),
            });
        }
        let flag = match (dflag, cflag) {
            (0, 0) => Outcome::None,
            (1, 0) => Outcome::Default,
            (0, 1) => Outcome::Censor,
            _ => {
                return Err(Error::InvariantViolation(format!(
                    "line {}: default and censor flags both set",
                    line
                )))
            }
        };
        let mut x = Vec::with_capacity(dim);
        for i in 5..rec.len() {
            let v = rec[i].parse::<f64>().map_err(|_| Error::MalformedRow {
                line,
                message: format!("field `{}` is not a real number: `{}`", header[i], &rec[i]),
            })?;
            x.push(v);
        }
        by_firm.entry(firm).or_default().push(Raw {
            period,
            class,
            flag,
            line,
            x,
        });
    }
    if by_firm.is_empty() {
        return Err(Error::EmptyPanel);
    }

    let max_period = by_firm
        .values()
        .flat_map(|v| v.iter().map(|r| r.period))
        .max()
        .unwrap_or(0);
    let (common_dim, period_count, entry_times) = match descriptor {
        Some(d) => {
            if d.columns.len() != header.len() || d.columns != header {
                return Err(Error::MalformedRow {
                    line: 1,
                    message: "header does not match the descriptor's column list".into(),
                });
            }
            (d.common_dim, d.period_count, d.entry_times)
        }
        None => (0, max_period + 1, BTreeMap::new()),
    };
    if max_period >= period_count {
        return Err(Error::InvariantViolation(format!(
            "period {} outside declared range 0..{}",
            max_period, period_count
        )));
    }

    let nrows: usize = by_firm.values().map(Vec::len).sum();
    let mut rows = Rows::with_capacity(dim, nrows, by_firm.len());
    let mut firms = Vec::with_capacity(by_firm.len());
    for (id, mut raws) in by_firm {
        raws.sort_by_key(|r| r.period);
        for w in raws.windows(2) {
            if w[1].period == w[0].period {
                return Err(Error::InvariantViolation(format!(
                    "firm {}: duplicate period {} (line {})",
                    id, w[1].period, w[1].line
                )));
            }
            if w[1].period != w[0].period + 1 {
                return Err(Error::InvariantViolation(format!(
                    "firm {}: gap between periods {} and {}",
                    id, w[0].period, w[1].period
                )));
            }
        }
        let first = raws[0].period;
        if let Some(&s) = entry_times.get(&id) {
            if first < s {
                return Err(Error::InvariantViolation(format!(
                    "firm {}: covariate row at t={} before entry time {} (line {})",
                    id, first, s, raws[0].line
                )));
            }
        }
        let last = raws.len() - 1;
        for (k, r) in raws.iter().enumerate() {
            if k != last && r.flag != Outcome::None {
                return Err(Error::InvariantViolation(format!(
                    "firm {}: exit flag at t={} but rows continue (line {})",
                    id, r.period, r.line
                )));
            }
            if r.class != raws[0].class {
                return Err(Error::InvariantViolation(format!(
                    "firm {}: class changes at line {}",
                    id, r.line
                )));
            }
            rows.push(&r.x, r.flag, r.class, r.period as u32);
        }
        rows.end_firm();
        firms.push(Firm {
            id,
            class: raws[0].class,
            entry: first,
            exit: raws[last].period,
            outcome: raws[last].flag,
        });
    }
    Panel::new(period_count, common_dim, firms, rows)
}

/// Write the panel as CSV plus its sidecar descriptor.
pub fn write_panel(panel: &Panel, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let dim = panel.covariate_dim();
    let mut columns: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    columns.extend((1..=dim).map(|k| format!("x{}", k)));
    writeln!(w, "{}", columns.join(","))?;
    let rows = panel.rows();
    for (f, firm) in panel.firms.iter().enumerate() {
        for r in rows.firm_range(f) {
            let (dflag, cflag) = match rows.outcome(r) {
                Outcome::None => (0, 0),
                Outcome::Default => (1, 0),
                Outcome::Censor => (0, 1),
            };
            write!(w, "{},{},{},{},{}", firm.id, rows.period(r), firm.class, dflag, cflag)?;
            for v in rows.row(r) {
                // Display prints the shortest string that parses back to the same f64.
                write!(w, ",{}", v)?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    let desc = PanelDescriptor {
        common_dim: panel.common_dim,
        period_count: panel.period_count,
        columns,
        entry_times: BTreeMap::new(),
    };
    let side = File::create(descriptor_path(path))?;
    serde_json::to_writer_pretty(BufWriter::new(side), &desc)?;
    Ok(())
}
