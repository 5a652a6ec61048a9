//! Second-order cone programs.
//!
//! A `ConicProgram` minimizes `c^T x` subject to a list of cone memberships.
//! Each constraint is a block of affine rows `r_i(x) = sum_j a_ij x_j + b_i`
//! whose values must lie in the constraint's cone:
//!
//! | cone                 | membership                                           |
//! |----------------------|------------------------------------------------------|
//! | `Zero`               | `r = 0`                                              |
//! | `Nonnegative`        | `r >= 0`                                             |
//! | `SecondOrder`        | `r_0 >= ||(r_1, .., r_n)||`                          |
//! | `RotatedSecondOrder` | `2 r_0 r_1 >= ||(r_2, .., r_n)||^2`, `r_0, r_1 >= 0` |
//!
//! The rotated cone uses the factor-2 convention throughout the crate.

mod embed;
mod solve;

pub use embed::complex_embed;
pub use solve::solve;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse affine expression `sum terms + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(j: usize) -> Self {
        Self::term(j, 1.0)
    }

    pub fn term(j: usize, a: f64) -> Self {
        Self { terms: vec![(j, a)], constant: 0.0 }
    }

    pub fn add_term(&mut self, j: usize, a: f64) -> &mut Self {
        if a != 0.0 {
            self.terms.push((j, a));
        }
        self
    }

    pub fn with_term(mut self, j: usize, a: f64) -> Self {
        self.add_term(j, a);
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self.constant *= s;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + self.constant
    }

    /// Largest absolute coefficient, including the constant.
    pub fn max_abs(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.1.abs())
            .fold(self.constant.abs(), f64::max)
    }

    /// Rescales so that the largest coefficient is 1; zero rows are left alone.
    pub fn normalized(self) -> Self {
        let s = self.max_abs();
        if s > 0.0 && s.is_finite() {
            self.scaled(1.0 / s)
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Zero,
    Nonnegative,
    SecondOrder,
    RotatedSecondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeConstraint {
    pub cone: Cone,
    pub rows: Vec<AffineExpr>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub n_vars: usize,
    /// Cost vector `c`, length `n_vars`.
    pub objective: Vec<f64>,
    pub constraints: Vec<ConeConstraint>,
}

impl ConicProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    /// Adds a fresh variable and returns its index.
    pub fn add_var(&mut self) -> usize {
        self.n_vars += 1;
        self.objective.push(0.0);
        self.n_vars - 1
    }

    pub fn add_vars(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.add_var()).collect()
    }

    pub fn push(&mut self, cone: Cone, rows: Vec<AffineExpr>) {
        self.constraints.push(ConeConstraint { cone, rows });
    }

    /// `e >= 0`.
    pub fn nonneg(&mut self, e: AffineExpr) {
        self.push(Cone::Nonnegative, vec![e]);
    }

    /// `e = 0`.
    pub fn equal(&mut self, e: AffineExpr) {
        self.push(Cone::Zero, vec![e]);
    }

    /// `t >= ||v||`.
    pub fn soc(&mut self, t: AffineExpr, v: Vec<AffineExpr>) {
        let mut rows = Vec::with_capacity(v.len() + 1);
        rows.push(t);
        rows.extend(v);
        self.push(Cone::SecondOrder, rows);
    }

    /// `2 x1 x2 >= ||v||^2`, `x1, x2 >= 0`.
    pub fn rotated(&mut self, x1: AffineExpr, x2: AffineExpr, v: Vec<AffineExpr>) {
        let mut rows = Vec::with_capacity(v.len() + 2);
        rows.push(x1);
        rows.push(x2);
        rows.extend(v);
        self.push(Cone::RotatedSecondOrder, rows);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProgram(m));
        if self.objective.len() != self.n_vars {
            return bad(format!("objective has {} entries for {} variables", self.objective.len(), self.n_vars));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return bad("non-finite objective coefficient".into());
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let min_dim = match c.cone {
                Cone::Zero | Cone::Nonnegative => 1,
                Cone::SecondOrder => 2,
                Cone::RotatedSecondOrder => 3,
            };
            if c.rows.len() < min_dim {
                return bad(format!("constraint {i}: {:?} block of dimension {} (minimum {min_dim})", c.cone, c.rows.len()));
            }
            for r in &c.rows {
                if !r.constant.is_finite() {
                    return bad(format!("constraint {i}: non-finite constant"));
                }
                for &(j, a) in &r.terms {
                    if j >= self.n_vars {
                        return bad(format!("constraint {i}: variable {j} out of range"));
                    }
                    if !a.is_finite() {
                        return bad(format!("constraint {i}: non-finite coefficient"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest cone violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let r: Vec<f64> = c.rows.iter().map(|e| e.eval(x)).collect();
                match c.cone {
                    Cone::Zero => r.iter().fold(0f64, |m, v| m.max(v.abs())),
                    Cone::Nonnegative => r.iter().fold(0f64, |m, v| m.max(-v)),
                    Cone::SecondOrder => {
                        let n = r[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                        (n - r[0]).max(0.0)
                    }
                    Cone::RotatedSecondOrder => {
                        let (u, w) = ((r[0] + r[1]) / 2f64.sqrt(), (r[0] - r[1]) / 2f64.sqrt());
                        let n = (w * w + r[2..].iter().map(|v| v * v).sum::<f64>()).sqrt();
                        (n - u).max(0.0)
                    }
                }
            })
            .fold(0.0, f64::max)
    }

    /// JSON dump for cross-checking with external tools.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIter => "max_iter",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `(p - d) / max(1, min(|p|, |d|))`.
    pub duality_gap: f64,
    pub iterations: u32,
}

impl ConicSolution {
    /// Optimal, or stopped early with a finite point that can still serve as
    /// a search direction for a caller that verifies it independently.
    pub fn usable(&self) -> bool {
        match self.status {
            SolveStatus::Optimal => true,
            SolveStatus::MaxIter => self.x.iter().all(|v| v.is_finite()),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200 }
    }
}
