//! CSV schemas and plain-text records for the experiment runners. Every row
//! carries the run identifier (a hash of the resolved configuration) so that
//! output files are traceable to the exact settings that produced them.

use std::fmt::Write as _;

use crate::bridge::GrowthRow;
use crate::pseudo::{CellSummary, ExponentEstimate, TrialRow};

pub const SHADOW_CSV_HEADER: &str = "map,d,n,trial,epsilon,solver,status,config";
pub const GROWTH_CSV_HEADER: &str = "map,orbit_id,N,Q_hat,gamma_hat,config";
pub const CELLS_CSV_HEADER: &str = "d,n,worst_eps,ok_trials,failed_trials,config";

pub fn shadow_csv(rows: &[TrialRow], run_id: &str) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(SHADOW_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.9e},{},{},{:.9e},{},{},{}",
            r.map, r.d, r.n, r.trial, r.epsilon, r.solver, r.status, run_id
        );
    }
    out
}

pub fn cells_csv(cells: &[CellSummary], run_id: &str) -> String {
    let mut out = String::new();
    out.push_str(CELLS_CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{:.9e},{},{:.9e},{},{},{}",
            c.d, c.n, c.worst_eps, c.ok_trials, c.failed_trials, run_id
        );
    }
    out
}

pub fn growth_csv(rows: &[GrowthRow], run_id: &str) -> String {
    let mut out = String::new();
    out.push_str(GROWTH_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.9e},{:.6},{}",
            r.map, r.orbit_id, r.window, r.gain, r.exponent, run_id
        );
    }
    out
}

/// The structured one-line exponent record.
pub fn exponent_summary(est: &ExponentEstimate) -> String {
    format!(
        "theta_hat={:.6} stderr={:.6} n_cells={} failed_cells={}",
        est.theta,
        est.stderr,
        est.cells.len(),
        est.failed_cells
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_carry_the_run_id() {
        let rows = vec![TrialRow {
            map: "cat".into(),
            d: 1e-6,
            n: 100,
            trial: 3,
            epsilon: 2.5e-6,
            solver: "newton",
            status: "ok",
        }];
        let csv = shadow_csv(&rows, "abc123");
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SHADOW_CSV_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("cat,"));
        assert!(row.ends_with(",abc123"));
    }
}
