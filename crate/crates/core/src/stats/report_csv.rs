//! CSV serialization of replicate reports and sweep summaries.
//!
//! Floats are written with 17 significant digits in scientific notation,
//! records end with LF, and no field depends on the execution order, so
//! identical inputs give byte-identical files.

use std::io::Write;

use crate::stats::replicates::ReplicateReport;
use crate::stats::sweep::{SweepGrid, SweepResult};

pub const REPORT_HEADER: [&str; 14] = [
    "scheme",
    "model",
    "l",
    "n",
    "N",
    "replicate",
    "seed",
    "pred_diff",
    "filt_diff",
    "mean_sq_dist",
    "decouple_frac",
    "ess_f",
    "ess_c",
    "wall_ms",
];

pub const SUMMARY_HEADER: [&str; 16] = [
    "row",
    "scheme",
    "model",
    "grid",
    "l",
    "n",
    "N",
    "R",
    "x",
    "scaled_variance",
    "mean_pred_diff",
    "mean_sq_dist",
    "decouple_frac",
    "failures",
    "slope",
    "slope_se",
];

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub fn report_record(r: &ReplicateReport) -> Vec<String> {
    let mut row = vec![
        r.scheme.to_string(),
        r.model.clone(),
        r.level.to_string(),
        r.n.to_string(),
        r.particles.to_string(),
        r.replicate.to_string(),
        r.seed.to_string(),
    ];
    match r.metrics() {
        Some(m) => row.extend(
            [
                m.pred_diff,
                m.filt_diff,
                m.mean_sq_dist,
                m.decouple_frac,
                m.ess_f,
                m.ess_c,
            ]
            .iter()
            .map(|v| fmt_float(*v)),
        ),
        None => row.extend(std::iter::repeat_n(String::new(), 6)),
    }
    row.push(r.wall_ms.map(fmt_float).unwrap_or_default());
    row
}

/// Header plus one row per report.
pub fn write_reports<W: Write>(out: W, reports: &[ReplicateReport]) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record(report_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// One `point` row per grid point and one `slope` row.
pub fn write_sweep_summary<W: Write>(out: W, sweep: &SweepResult) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(SUMMARY_HEADER)?;
    let grid = match sweep.grid {
        SweepGrid::Level => "level",
        SweepGrid::Horizon => "horizon",
    };
    for p in &sweep.points {
        w.write_record([
            "point".to_string(),
            sweep.scheme.to_string(),
            sweep.model.clone(),
            grid.to_string(),
            p.level.to_string(),
            p.n.to_string(),
            sweep.particles.to_string(),
            sweep.replicates.to_string(),
            fmt_float(p.x),
            fmt_float(p.scaled_variance),
            fmt_float(p.mean_pred_diff),
            fmt_float(p.mean_sq_dist),
            fmt_float(p.decouple_frac),
            p.failures.to_string(),
            String::new(),
            String::new(),
        ])?;
    }
    let (slope, se) = sweep
        .slope
        .map(|s| (fmt_float(s.slope), fmt_float(s.std_error)))
        .unwrap_or_default();
    let mut row = vec![
        "slope".to_string(),
        sweep.scheme.to_string(),
        sweep.model.clone(),
        grid.to_string(),
    ];
    row.extend(std::iter::repeat_n(String::new(), 10));
    row.push(slope);
    row.push(se);
    w.write_record(row)?;
    w.flush()?;
    Ok(())
}
