//! Fixed-schema CSV writers and readers for run artifacts.
//!
//! Floats are written with the shortest round-trip formatting, which is
//! deterministic for a given binary, so identical runs produce identical
//! bytes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use blacknoise::blackstat::{DiagnosticRow, H1Report};
use blacknoise::inference::ChainRecord;

/// `h1.csv`: one row per (block, level).
pub fn write_h1(path: &Path, reports: &[H1Report]) -> Result<()> {
    let mut out = String::from("k,n_intervals,estimate,std_error,n_samples\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.level,
            r.partition.n_cells(),
            r.estimate,
            r.std_error,
            r.n_samples
        );
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct H1Row {
    pub k: u32,
    pub n_intervals: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

pub fn read_h1(path: &Path) -> Result<Vec<H1Row>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            anyhow::bail!("{}: bad row {}: {line:?}", path.display(), i + 1);
        }
        rows.push(H1Row {
            k: fields[0].parse().context("k")?,
            n_intervals: fields[1].parse().context("n_intervals")?,
            estimate: fields[2].parse().context("estimate")?,
            std_error: fields[3].parse().context("std_error")?,
            n_samples: fields[4].parse().context("n_samples")?,
        });
    }
    Ok(rows)
}

/// `diagnostics.csv`: empirical values against analytic targets.
pub fn write_diagnostics(path: &Path, rows: &[DiagnosticRow]) -> Result<()> {
    let mut out = String::from("kind,abscissa,empirical,target\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.kind, r.abscissa, r.empirical, r.target);
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            anyhow::bail!("{}: bad row {}: {line:?}", path.display(), i + 1);
        }
        rows.push(DiagnosticRow {
            kind: fields[0].to_string(),
            abscissa: fields[1].parse().context("abscissa")?,
            empirical: fields[2].parse().context("empirical")?,
            target: fields[3].parse().context("target")?,
        });
    }
    Ok(rows)
}

/// `chains.csv`: per-iteration chain diagnostics for every observation.
pub fn write_chains(path: &Path, records: &[ChainRecord]) -> Result<()> {
    let mut out = String::from("w_id,iter,log_lhd,accepted,beta\n");
    for record in records {
        for row in &record.trace {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                record.w_id,
                row.iter,
                row.log_lhd,
                u8::from(row.accepted),
                row.beta
            );
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
