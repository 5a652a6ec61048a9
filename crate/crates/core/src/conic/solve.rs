use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};

use super::{Cone, ConicProgram, ConicSolution, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

/// Solves `p` with an interior-point method.
///
/// Infeasibility and unboundedness are statuses, not errors. Numerical
/// breakdown reports `MaxIter` with the last iterate.
pub fn solve(p: &ConicProgram, settings: SolverSettings) -> Result<ConicSolution> {
    p.validate()?;
    let n = p.n_vars;
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut row = 0usize;

    let mut emit = |terms: &[(usize, f64)], scale: f64, constant: f64, b: &mut Vec<f64>, row: &mut usize| {
        for &(j, a) in terms {
            ii.push(*row);
            jj.push(j);
            vv.push(-a * scale);
        }
        b.push(constant * scale);
        *row += 1;
    };

    for c in &p.constraints {
        match c.cone {
            Cone::Zero | Cone::Nonnegative | Cone::SecondOrder => {
                for r in &c.rows {
                    emit(&r.terms, 1.0, r.constant, &mut b, &mut row);
                }
                let d = c.rows.len();
                cones.push(match c.cone {
                    Cone::Zero => ZeroConeT(d),
                    Cone::Nonnegative => NonnegativeConeT(d),
                    _ => SecondOrderConeT(d),
                });
            }
            Cone::RotatedSecondOrder => {
                // (x1 + x2, x1 - x2, sqrt(2) v) in the standard cone.
                let (x1, x2) = (&c.rows[0], &c.rows[1]);
                let mut sum: Vec<(usize, f64)> = x1.terms.clone();
                sum.extend(x2.terms.iter().copied());
                emit(&sum, 1.0, x1.constant + x2.constant, &mut b, &mut row);
                let mut diff: Vec<(usize, f64)> = x1.terms.clone();
                diff.extend(x2.terms.iter().map(|&(j, a)| (j, -a)));
                emit(&diff, 1.0, x1.constant - x2.constant, &mut b, &mut row);
                for r in &c.rows[2..] {
                    emit(&r.terms, 2f64.sqrt(), r.constant, &mut b, &mut row);
                }
                cones.push(SecondOrderConeT(c.rows.len()));
            }
        }
    }

    let a = CscMatrix::new_from_triplets(row, n, ii, jj, vv);
    let pm = CscMatrix::zeros((n, n));
    let s = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(settings.max_iter)
        .tol_gap_abs(settings.tol)
        .tol_gap_rel(settings.tol)
        .tol_feas(settings.tol)
        .max_threads(1)
        .build()
        .map_err(|e| Error::InvalidProgram(format!("solver settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&pm, &p.objective, &a, &b, &cones, s)
        .map_err(|e| Error::InvalidProgram(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::MaxIter,
    };
    let (pobj, dobj) = (sol.obj_val, sol.obj_val_dual);
    let gap = if pobj.is_finite() && dobj.is_finite() {
        (pobj - dobj) / 1f64.max(pobj.abs().min(dobj.abs()))
    } else {
        f64::INFINITY
    };
    Ok(ConicSolution {
        status,
        x: sol.x.clone(),
        objective: p.objective_value(&sol.x),
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
        duality_gap: gap,
        iterations: sol.iterations,
    })
}
