//! Per-iteration log rows, written one JSON object per line.

use serde::Serialize;

use crate::conic::SolveStatus;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "stage", rename_all = "lowercase")]
pub enum TraceRow {
    Phase {
        outer: usize,
        r: usize,
        /// Optimal value of the convexified subproblem.
        epsilon: f64,
        /// Exact `min_k h_k` at the accepted iterate.
        min_harvest: f64,
        accepted: bool,
        solver_status: SolveStatus,
        kkt_gap: f64,
    },
    Trajectory {
        outer: usize,
        n: usize,
        #[serde(rename = "E_V")]
        e_v: f64,
        step: f64,
        solver_status: SolveStatus,
        exact_audit_max_violation: f64,
    },
    Outer {
        x: usize,
        total_energy: f64,
        min_harvest: f64,
        phi_accepted: bool,
        /// Relative increase of the total energy over the previous outer
        /// iteration (0 when it decreased).
        fluctuation: f64,
    },
}

impl TraceRow {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace row serializes")
    }

    pub fn set_outer(&mut self, x: usize) {
        match self {
            TraceRow::Phase { outer, .. } | TraceRow::Trajectory { outer, .. } => *outer = x,
            TraceRow::Outer { .. } => {}
        }
    }
}

pub fn to_jsonl(rows: &[TraceRow]) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&r.to_json());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tagged_rows() {
        let r = TraceRow::Trajectory {
            outer: 1,
            n: 2,
            e_v: 10.0,
            step: 1.0,
            solver_status: SolveStatus::Optimal,
            exact_audit_max_violation: 0.0,
        };
        let s = r.to_json();
        assert!(s.contains("\"stage\":\"trajectory\""), "{s}");
        assert!(s.contains("\"E_V\":10.0"));
        assert!(s.contains("\"solver_status\":\"optimal\""));
    }
}
