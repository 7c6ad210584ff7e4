//! Table output for design results.

use std::io::Write;

use crate::error::Result;
use crate::harness::{DesignResult, Estimator};

pub const CSV_HEADER: [&str; 15] = [
    "design",
    "EHWCov",
    "LZGCov",
    "LZHCov",
    "CGMCov",
    "CGM2Cov",
    "EHWVar",
    "LZGVar",
    "LZHVar",
    "CGMVar",
    "CGM2Var",
    "degenerate",
    "clamped",
    "nsim",
    "seed",
];

fn coverage(x: f64) -> String {
    format!("{x:.4}")
}

fn variance(x: f64) -> String {
    format!("{x:.3e}")
}

fn row(r: &DesignResult) -> Vec<String> {
    let mut cells = vec![r.design.clone()];
    cells.extend(Estimator::ALL.iter().map(|&e| coverage(r.coverage_of(e))));
    cells.extend(
        Estimator::ALL
            .iter()
            .map(|&e| variance(r.mean_variance_of(e))),
    );
    cells.extend([r.degenerate, r.clamped, r.nsim].map(|c| c.to_string()));
    cells.push(r.seed.to_string());
    cells
}

pub fn write_csv<W: Write>(results: &[DesignResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in results {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_markdown<W: Write>(results: &[DesignResult], mut out: W) -> Result<()> {
    writeln!(out, "| {} |", CSV_HEADER.join(" | "))?;
    let align: Vec<&str> = CSV_HEADER
        .iter()
        .enumerate()
        .map(|(i, _)| if i == 0 { ":--" } else { "--:" })
        .collect();
    writeln!(out, "|{}|", align.join("|"))?;
    for r in results {
        writeln!(out, "| {} |", row(r).join(" | "))?;
    }
    Ok(())
}
