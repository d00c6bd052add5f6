//! Comparison of benchmark records against published reference tables.
//!
//! Reference files are plain text with the header
//! `dataset sigma frames method psnr_db`, one cell per line (the cell key
//! is dataset/sigma/frames/method). The report carries per-cell deltas, a
//! per-row ranking agreement summary and a pass/fail verdict against a
//! tolerance in dB.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;
use crate::experiment::ExperimentRecord;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub dataset: String,
    /// Sigma scaled by 1000 and rounded, so the key stays integral and
    /// totally ordered.
    pub sigma_milli: i64,
    pub frames: usize,
    pub method: String,
}

impl CellKey {
    pub fn new(dataset: &str, sigma: f64, frames: usize, method: &str) -> Self {
        CellKey {
            dataset: dataset.to_ascii_lowercase(),
            sigma_milli: (sigma * 1000.0).round() as i64,
            frames,
            method: method.to_ascii_lowercase(),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_milli as f64 / 1000.0
    }
}

pub type ReferenceTable = BTreeMap<CellKey, f64>;

/// Parses a reference table file (whitespace-separated columns, `#`
/// comments allowed).
pub fn read_reference(path: &Path) -> Result<ReferenceTable, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut table = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || lineno == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(CliError::format(
                path,
                format!("line {}: expected 5 columns, got {}", lineno + 1, fields.len()),
            ));
        }
        let bad = |what: &str| CliError::format(path, format!("line {}: bad {what}", lineno + 1));
        let sigma: f64 = fields[1].parse().map_err(|_| bad("sigma"))?;
        let frames: usize = fields[2].parse().map_err(|_| bad("frames"))?;
        let value: f64 = fields[4].parse().map_err(|_| bad("psnr"))?;
        table.insert(CellKey::new(fields[0], sigma, frames, fields[3]), value);
    }
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct CellDelta {
    pub key: CellKey,
    pub ours: f64,
    pub reference: f64,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct RowAgreement {
    pub dataset: String,
    pub sigma: f64,
    pub frames: usize,
    /// Methods ranked identically by our records and the reference.
    pub exact_rank_match: bool,
    /// Fraction of method pairs ordered the same way.
    pub pairwise_concordance: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub cells: Vec<CellDelta>,
    /// Record keys with no reference value.
    pub unmatched: Vec<CellKey>,
    pub rows: Vec<RowAgreement>,
    pub tolerance: f64,
}

impl CompareReport {
    pub fn within_tolerance(&self) -> usize {
        self.cells.iter().filter(|c| c.delta.abs() <= self.tolerance).count()
    }

    pub fn pass(&self) -> bool {
        !self.cells.is_empty() && self.within_tolerance() == self.cells.len()
    }

    pub fn mean_abs_delta(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().map(|c| c.delta.abs()).sum::<f64>() / self.cells.len() as f64
    }
}

/// Per-cell deltas plus per-row ordering agreement for every record that
/// has a reference cell. Unknown record keys are reported, unknown
/// reference cells ignored (the tables carry methods we do not run, such
/// as the combined-filtering columns).
pub fn compare_to_reference(
    records: &[ExperimentRecord],
    reference: &ReferenceTable,
    tolerance: f64,
) -> CompareReport {
    let mut cells = Vec::new();
    let mut unmatched = Vec::new();
    for r in records {
        let key = CellKey::new(&r.dataset, r.sigma, r.frames, &r.method);
        match reference.get(&key) {
            Some(&reference_value) => cells.push(CellDelta {
                ours: r.psnr_db,
                reference: reference_value,
                delta: r.psnr_db - reference_value,
                key,
            }),
            None => unmatched.push(key),
        }
    }

    // Rank agreement per (dataset, sigma, frames) row over shared methods.
    let mut by_row: BTreeMap<(String, i64, usize), Vec<&CellDelta>> = BTreeMap::new();
    for c in &cells {
        by_row
            .entry((c.key.dataset.clone(), c.key.sigma_milli, c.key.frames))
            .or_default()
            .push(c);
    }
    let mut rows = Vec::new();
    for ((dataset, sigma_milli, frames), row) in by_row {
        if row.len() < 2 {
            continue;
        }
        fn rank(mut v: Vec<(&str, f64)>) -> Vec<&str> {
            v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
            v.into_iter().map(|(m, _)| m).collect()
        }
        let ours = rank(row.iter().map(|c| (c.key.method.as_str(), c.ours)).collect());
        let theirs = rank(row.iter().map(|c| (c.key.method.as_str(), c.reference)).collect());

        let mut pairs = 0usize;
        let mut agree = 0usize;
        for i in 0..row.len() {
            for j in i + 1..row.len() {
                pairs += 1;
                let ours_order = (row[i].ours - row[j].ours).signum();
                let ref_order = (row[i].reference - row[j].reference).signum();
                if ours_order == ref_order {
                    agree += 1;
                }
            }
        }
        rows.push(RowAgreement {
            dataset,
            sigma: sigma_milli as f64 / 1000.0,
            frames,
            exact_rank_match: ours == theirs,
            pairwise_concordance: agree as f64 / pairs as f64,
        });
    }

    CompareReport {
        cells,
        unmatched,
        rows,
        tolerance,
    }
}

pub fn render_report(report: &CompareReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24}{:>10}{:>10}{:>8}  within",
        "cell", "ours", "reference", "delta"
    );
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{:<24}{:>10.2}{:>10.2}{:>+8.2}  {}",
            format!(
                "{}/{}/{}f/{}",
                c.key.dataset,
                c.key.sigma(),
                c.key.frames,
                c.key.method
            ),
            c.ours,
            c.reference,
            c.delta,
            if c.delta.abs() <= report.tolerance { "yes" } else { "NO" },
        );
    }
    if !report.unmatched.is_empty() {
        let _ = writeln!(out, "unmatched records (no reference cell):");
        for k in &report.unmatched {
            let _ = writeln!(out, "  {}/{}/{}f/{}", k.dataset, k.sigma(), k.frames, k.method);
        }
    }
    if !report.rows.is_empty() {
        let exact = report.rows.iter().filter(|r| r.exact_rank_match).count();
        let mean_conc = report.rows.iter().map(|r| r.pairwise_concordance).sum::<f64>()
            / report.rows.len() as f64;
        let _ = writeln!(
            out,
            "ordering agreement: {exact}/{} rows rank-identical, mean pairwise concordance {:.2}",
            report.rows.len(),
            mean_conc
        );
    }
    let _ = writeln!(
        out,
        "cells within +-{:.2} dB: {}/{} (mean |delta| {:.3} dB) -> {}",
        report.tolerance,
        report.within_tolerance(),
        report.cells.len(),
        report.mean_abs_delta(),
        if report.pass() { "PASS" } else { "FAIL" }
    );
    out
}
