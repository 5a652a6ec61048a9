//! Reflection-vector subproblem: maximize the minimum normalized harvested
//! energy over `phi` with the flight plan fixed.
//!
//! Both the harvest functions `h_k` and the SINR quadratic forms are convex in
//! `phi`, and the constraints ask them to be *large*, so each SCA step replaces
//! them by their tangent planes at the incumbent. The SINR matrix `F` may be
//! indefinite (it subtracts the amplified RIS noise); in that case it is split
//! as `F = F+ - mu I` with `F+` PSD and the `-mu ||phi||^2` part is kept exactly
//! through a rotated cone, so the linearization is a global lower bound.
//!
//! Decision variables are scaled per hover point, `phi_l = s_l x_l`, so that a
//! full-budget reflection vector has entries of order one.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{norm_sqr, ris_output_power, sinr, ChannelStats, LinkStats};
use crate::conic::{self, AffineExpr, ConicProgram, SolverSettings};
use crate::error::{Error, Result};
use crate::scenario::{FlightPlan, ReflectionPlan, RisMode, Scenario};
use crate::trace::TraceRow;

/// Harvest data for one user: `h_k(phi) = sum_l w_l D_l(phi_l)` with
/// `w_l = (1 - eta) p_k t_l / E_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserAggregate {
    pub k: usize,
    pub weights: Vec<f64>,
    pub zeta1: f64,
}

impl UserAggregate {
    pub fn value(&self, stats: &ChannelStats, phi: &ReflectionPlan) -> f64 {
        let quad: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| {
                let s = stats.link(self.k, l);
                w * (s.second_moment(&phi.phi[l]) - s.beta_d)
            })
            .sum();
        quad + self.zeta1
    }

    /// Dense block-diagonal `A_hat` and stacked `a_hat`.
    pub fn dense(&self, stats: &ChannelStats) -> (DMatrix<Complex64>, DVector<Complex64>) {
        let m = stats.link(self.k, 0).psi.len();
        let n = m * self.weights.len();
        let mut a = DMatrix::zeros(n, n);
        let mut v = DVector::zeros(n);
        for (l, w) in self.weights.iter().enumerate() {
            let s = stats.link(self.k, l);
            a.view_mut((l * m, l * m), (m, m)).copy_from(&(s.dense_a() * Complex64::from(*w)));
            for (i, c) in s.a_vector().into_iter().enumerate() {
                v[l * m + i] = c * *w;
            }
        }
        (a, v)
    }

    /// Tangent plane at `phi_n`: `f_k(phi) = 2 Re{b^H phi} + zeta2`, returned as
    /// per-hover blocks of `b` and `zeta2`.
    pub fn linearize(&self, stats: &ChannelStats, phi_n: &ReflectionPlan) -> (Vec<Vec<Complex64>>, f64) {
        let mut zeta2 = self.zeta1;
        let b = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| {
                let s = stats.link(self.k, l);
                let p = &phi_n.phi[l];
                let ap = s.apply_a(p);
                zeta2 -= w * ap.iter().zip(p).map(|(x, y)| (y.conj() * x).re).sum::<f64>();
                ap.iter().zip(s.a_vector()).map(|(x, a)| (x + a) * *w).collect()
            })
            .collect();
        (b, zeta2)
    }
}

/// Aggregates for every user; `None` for users without an energy requirement.
pub fn harvest_aggregates(sc: &Scenario, stats: &ChannelStats, plan: &FlightPlan) -> Vec<Option<UserAggregate>> {
    (0..sc.num_users())
        .map(|k| {
            let c = sc.harvest_weight(k)?;
            let weights: Vec<f64> = plan.hover_times.iter().map(|t| c * t).collect();
            let zeta1 = weights.iter().enumerate().map(|(l, w)| w * stats.link(k, l).beta_d).sum();
            Some(UserAggregate { k, weights, zeta1 })
        })
        .collect()
}

/// Exact `min_k h_k`; `+inf` when no user has a requirement.
pub fn min_harvest(sc: &Scenario, stats: &ChannelStats, plan: &FlightPlan, phi: &ReflectionPlan) -> f64 {
    harvest_aggregates(sc, stats, plan)
        .iter()
        .flatten()
        .map(|u| u.value(stats, phi))
        .fold(f64::INFINITY, f64::min)
}

/// `phi^H F phi + 2 Re{f^H phi} >= Gamma`, equivalent to `SINR >= gamma_k`.
///
/// `F = rank_one psi psi^H + identity I`, `f = cross psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrQuadratic {
    pub margin: f64,
    pub rank_one: f64,
    pub identity: f64,
    pub cross: f64,
    pub gamma: f64,
    pub psi: Vec<Complex64>,
    /// Set when `p_k - gamma_k sum_{j != k} p_j <= 0`: the constraint cannot hold.
    pub hopeless: bool,
}

impl SinrQuadratic {
    pub fn value(&self, phi: &[Complex64]) -> f64 {
        let s: Complex64 = self.psi.iter().zip(phi).map(|(p, f)| p.conj() * f).sum();
        self.rank_one * s.norm_sqr() + self.identity * norm_sqr(phi) + 2.0 * self.cross * s.re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let spike = self.rank_one * self.psi.len() as f64;
        if self.psi.len() > 1 {
            self.identity + spike.min(0.0)
        } else {
            self.identity + spike
        }
    }

    /// `mu = max(0, -lambda_min(F))`.
    pub fn psd_shift(&self) -> f64 {
        (-self.min_eigenvalue()).max(0.0)
    }

    pub fn dense_f(&self) -> DMatrix<Complex64> {
        let psi = DVector::from_column_slice(&self.psi);
        let mut f = &psi * psi.adjoint() * Complex64::from(self.rank_one);
        for i in 0..self.psi.len() {
            f[(i, i)] += self.identity;
        }
        f
    }

    /// Gradient direction of the linear part: `F+ phi_n + f` and the constant
    /// `-phi_n^H F+ phi_n`, so that the lower bound reads
    /// `2 Re{g^H phi} + c - mu ||phi||^2`.
    pub fn tangent(&self, phi_n: &[Complex64]) -> (Vec<Complex64>, f64) {
        let mu = self.psd_shift();
        let s: Complex64 = self.psi.iter().zip(phi_n).map(|(p, f)| p.conj() * f).sum();
        let g: Vec<Complex64> = self
            .psi
            .iter()
            .zip(phi_n)
            .map(|(p, f)| p * (s * self.rank_one) + f * (self.identity + mu) + p * self.cross)
            .collect();
        let quad = self.rank_one * s.norm_sqr() + (self.identity + mu) * norm_sqr(phi_n);
        (g, -quad)
    }

    /// Value of the convex minorant of `value` expanded at `phi_n`.
    pub fn linearized(&self, phi_n: &[Complex64], phi: &[Complex64]) -> f64 {
        let (g, c) = self.tangent(phi_n);
        let lin: f64 = g.iter().zip(phi).map(|(a, b)| (a.conj() * b).re).sum();
        2.0 * lin + c - self.psd_shift() * norm_sqr(phi)
    }
}

pub fn sinr_quadratic(sc: &Scenario, stats: &ChannelStats, k: usize, l: usize) -> SinrQuadratic {
    let s: &LinkStats = stats.link(k, l);
    let m = sc.sinr_margin(k);
    let g = sc.sinr_thresholds[k];
    SinrQuadratic {
        margin: m,
        rank_one: m * s.coef.rank_one,
        identity: m * s.coef.identity - g * s.beta_r * sc.effective_ris_noise(),
        cross: m * s.coef.cross,
        gamma: g * sc.noise_user - m * s.beta_d,
        psi: s.psi.clone(),
        hopeless: m <= 0.0,
    }
}

/// Per-hover scale `s_l` with `phi_l = s_l x_l`.
fn hover_scales(sc: &Scenario, stats: &ChannelStats, plan: &FlightPlan) -> Vec<f64> {
    (0..plan.num_hover())
        .map(|l| match sc.ris_mode {
            RisMode::Passive => 1.0,
            RisMode::Active => (ris_energy_cap(sc, stats, plan, l) / sc.num_elements as f64).sqrt(),
        })
        .collect()
}

/// Largest `||phi_l||^2` allowed by the RIS energy budget at hover `l`. Hover
/// times below the floor are replaced by the floor.
pub fn ris_energy_cap(sc: &Scenario, stats: &ChannelStats, plan: &FlightPlan, l: usize) -> f64 {
    let t = plan.hover_times[l].max(sc.algorithm.min_hover_time);
    sc.ris_energy_budget / (t * (sc.total_tx_power() * stats.beta_t(l) + sc.effective_ris_noise()))
}

/// The convexified subproblem and the map back to reflection vectors.
#[derive(Debug, Clone)]
pub struct PhaseProgram {
    pub program: ConicProgram,
    pub epsilon: usize,
    /// `x[offsets[l] + m]` is `Re phi_{l,m} / s_l`, `x[offsets[l] + M + m]` the imaginary part.
    pub offsets: Vec<usize>,
    pub scales: Vec<f64>,
    pub num_elements: usize,
}

impl PhaseProgram {
    pub fn extract(&self, x: &[f64]) -> ReflectionPlan {
        let m = self.num_elements;
        ReflectionPlan {
            phi: self
                .offsets
                .iter()
                .zip(&self.scales)
                .map(|(&o, &s)| (0..m).map(|i| Complex64::new(x[o + i], x[o + m + i]) * s).collect())
                .collect(),
        }
    }

    /// Inverse of `extract`, with `epsilon` appended.
    pub fn embed(&self, phi: &ReflectionPlan, epsilon: f64) -> Vec<f64> {
        let m = self.num_elements;
        let mut x = vec![0.0; self.program.n_vars];
        for ((&o, &s), p) in self.offsets.iter().zip(&self.scales).zip(&phi.phi) {
            for i in 0..m {
                x[o + i] = p[i].re / s;
                x[o + m + i] = p[i].im / s;
            }
        }
        x[self.epsilon] = epsilon;
        x
    }
}

/// Row `2 Re{g^H phi_l} + c` in scaled variables.
fn linear_row(g: &[Complex64], offset: usize, scale: f64, c: f64) -> AffineExpr {
    let m = g.len();
    let mut e = AffineExpr::constant(c);
    for (i, gi) in g.iter().enumerate() {
        e.add_term(offset + i, 2.0 * scale * gi.re);
        e.add_term(offset + m + i, 2.0 * scale * gi.im);
    }
    e
}

/// Builds the convex subproblem expanded at `phi_n`.
pub fn linearize_and_build(
    sc: &Scenario,
    stats: &ChannelStats,
    plan: &FlightPlan,
    phi_n: &ReflectionPlan,
) -> Result<PhaseProgram> {
    let m = sc.num_elements;
    let nh = plan.num_hover();
    if phi_n.phi.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Validation("expansion point must be finite".into()));
    }
    let mut p = ConicProgram::new(0);
    let offsets: Vec<usize> = (0..nh).map(|_| p.add_vars(2 * m)[0]).collect();
    let epsilon = p.add_var();
    p.objective[epsilon] = -1.0;
    let scales = hover_scales(sc, stats, plan);

    let aggs: Vec<UserAggregate> = harvest_aggregates(sc, stats, plan).into_iter().flatten().collect();
    if aggs.is_empty() {
        p.equal(AffineExpr::var(epsilon));
    }
    for u in &aggs {
        let (b, zeta2) = u.linearize(stats, phi_n);
        let mut row = AffineExpr::constant(zeta2).with_term(epsilon, -1.0);
        for l in 0..nh {
            let r = linear_row(&b[l], offsets[l], scales[l], 0.0);
            row.terms.extend(r.terms);
        }
        p.nonneg(row.normalized());
    }

    for l in 0..nh {
        for k in 0..sc.num_users() {
            let q = sinr_quadratic(sc, stats, k, l);
            if q.hopeless {
                return Err(Error::Infeasible(format!(
                    "user {}: p_k - gamma_k * sum_(j != k) p_j must be positive",
                    k + 1
                )));
            }
            let (g, c) = q.tangent(&phi_n.phi[l]);
            let row = linear_row(&g, offsets[l], scales[l], c - q.gamma);
            let mu = q.psd_shift();
            if mu == 0.0 {
                p.nonneg(row.normalized());
            } else {
                let s2 = scales[l] * scales[l];
                let v = (0..2 * m).map(|i| AffineExpr::var(offsets[l] + i)).collect();
                p.rotated(row.scaled(1.0 / (mu * s2)), AffineExpr::constant(0.5), v);
            }
        }
        match sc.ris_mode {
            RisMode::Active => {
                let v = (0..2 * m).map(|i| AffineExpr::var(offsets[l] + i)).collect();
                p.soc(AffineExpr::constant((m as f64).sqrt()), v);
            }
            RisMode::Passive => {
                for i in 0..m {
                    let o = offsets[l];
                    p.soc(
                        AffineExpr::constant(1.0),
                        vec![AffineExpr::var(o + i), AffineExpr::var(o + m + i)],
                    );
                }
            }
        }
    }
    Ok(PhaseProgram {
        program: p,
        epsilon,
        offsets,
        scales,
        num_elements: m,
    })
}

/// Pulls `phi` back inside the exact amplitude/energy limits (solver tolerance
/// can leave it marginally outside).
pub fn project_feasible(sc: &Scenario, stats: &ChannelStats, plan: &FlightPlan, phi: &mut ReflectionPlan) {
    for (l, p) in phi.phi.iter_mut().enumerate() {
        match sc.ris_mode {
            RisMode::Passive => {
                for c in p.iter_mut() {
                    let n = c.norm();
                    if n > 1.0 {
                        *c /= n;
                    }
                }
            }
            RisMode::Active => {
                let cap = ris_energy_cap(sc, stats, plan, l);
                let n = norm_sqr(p);
                if n > cap {
                    let s = (cap / n).sqrt();
                    p.iter_mut().for_each(|c| *c *= s);
                }
            }
        }
    }
}

/// Smallest `SINR_{k,l} / gamma_k - 1` over all users and hover points.
pub fn sinr_slack(sc: &Scenario, stats: &ChannelStats, phi: &ReflectionPlan) -> f64 {
    let mut worst = f64::INFINITY;
    for l in 0..stats.num_hover() {
        for k in 0..sc.num_users() {
            let v = sinr(sc, stats.link(k, l), &phi.phi[l], k) / sc.sinr_thresholds[k] - 1.0;
            worst = worst.min(v);
        }
    }
    worst
}

/// Whether `phi` satisfies the exact SINR and RIS limits at `plan`.
pub fn exactly_feasible(sc: &Scenario, stats: &ChannelStats, plan: &FlightPlan, phi: &ReflectionPlan) -> bool {
    if sinr_slack(sc, stats, phi) < -1e-9 {
        return false;
    }
    match sc.ris_mode {
        RisMode::Passive => phi.phi.iter().flatten().all(|c| c.norm() <= 1.0 + 1e-12),
        RisMode::Active => (0..plan.num_hover()).all(|l| {
            ris_output_power(sc, stats.beta_t(l), &phi.phi[l]) * plan.hover_times[l]
                <= sc.ris_energy_budget * (1.0 + 1e-9)
        }),
    }
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub phi: ReflectionPlan,
    pub min_harvest: f64,
    pub solves: usize,
    pub trace: Vec<TraceRow>,
    /// Set when a solve failed before convergence.
    pub diagnostic: Option<String>,
}

/// SCA over the reflection vectors with the plan fixed. `phi_init` must satisfy
/// the exact constraints; every accepted iterate does too, and the exact
/// `min_k h_k` never decreases.
pub fn solve_phase_sca(
    sc: &Scenario,
    stats: &ChannelStats,
    plan: &FlightPlan,
    phi_init: &ReflectionPlan,
) -> Result<PhaseOutcome> {
    let settings = SolverSettings {
        tol: sc.algorithm.solver_tol,
        max_iter: sc.algorithm.solver_max_iter,
    };
    let sigma = sc.algorithm.tolerance;
    let mut phi = phi_init.clone();
    let mut f = min_harvest(sc, stats, plan, &phi);
    let mut trace = Vec::new();
    let mut diagnostic = None;
    let mut solves = 0;

    for r in 1..=sc.algorithm.max_phase_iters {
        let prog = linearize_and_build(sc, stats, plan, &phi)?;
        let sol = conic::solve(&prog.program, settings)?;
        solves += 1;
        let kkt = sol.primal_residual.max(sol.dual_residual).max(sol.duality_gap.abs());
        if !sol.usable() {
            trace.push(TraceRow::Phase {
                outer: 0,
                r,
                epsilon: f64::NAN,
                min_harvest: f,
                accepted: false,
                solver_status: sol.status,
                kkt_gap: kkt,
            });
            diagnostic = Some(format!("phase subproblem {r}: solver status {}", sol.status));
            break;
        }
        let mut cand = prog.extract(&sol.x);
        project_feasible(sc, stats, plan, &mut cand);
        let f_new = min_harvest(sc, stats, plan, &cand);
        let ok = exactly_feasible(sc, stats, plan, &cand) && (f_new >= f || !f.is_finite());
        trace.push(TraceRow::Phase {
            outer: 0,
            r,
            epsilon: sol.x[prog.epsilon],
            min_harvest: if ok { f_new } else { f },
            accepted: ok,
            solver_status: sol.status,
            kkt_gap: kkt,
        });
        if !ok {
            break;
        }
        let done = (f_new - f).abs() <= sigma * f.abs() || !f_new.is_finite();
        phi = cand;
        f = f_new;
        if done {
            break;
        }
    }
    Ok(PhaseOutcome {
        phi,
        min_harvest: f,
        solves,
        trace,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::harvested_power;
    use crate::scenario::Point;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_phi(rng: &mut ChaCha8Rng, l: usize, m: usize, amp: f64) -> ReflectionPlan {
        ReflectionPlan {
            phi: (0..l)
                .map(|_| {
                    (0..m)
                        .map(|_| Complex64::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp)))
                        .collect()
                })
                .collect(),
        }
    }

    fn setup(m: usize, t: f64) -> (Scenario, FlightPlan, ChannelStats) {
        let sc = Scenario::reference().with_elements(m);
        let plan = FlightPlan::uniform(&sc, t);
        let stats = ChannelStats::at_points(&sc, plan.hover_points());
        (sc, plan, stats)
    }

    #[test]
    fn zero_hover_time_gives_zero_harvest() {
        let (sc, plan, stats) = setup(4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_phi(&mut rng, 4, 4, 10.0);
        for u in harvest_aggregates(&sc, &stats, &plan).into_iter().flatten() {
            assert_eq!(u.zeta1, 0.0);
            assert_eq!(u.value(&stats, &phi), 0.0);
        }
    }

    #[test]
    fn constructed_unit_requirement() {
        let mut sc = Scenario::reference().with_elements(2);
        sc.num_segments = 2;
        let plan = FlightPlan::uniform(&sc, 1.0);
        let stats = ChannelStats::at_points(&sc, plan.hover_points());
        sc.energy_requirements[0] = harvested_power(&sc, stats.link(0, 0).beta_d, 0);
        let u = harvest_aggregates(&sc, &stats, &plan)[0].clone().unwrap();
        assert!((u.zeta1 - 1.0).abs() < 1e-12);
        let zero = ReflectionPlan::zeros(1, 2);
        assert!((u.value(&stats, &zero) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregates_match_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (sc, mut plan, _) = setup(5, 1.0);
            for t in plan.hover_times.iter_mut() {
                *t = rng.random_range(0.0..300.0);
            }
            for q in plan.waypoints[1..5].iter_mut() {
                *q = Point::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0));
            }
            let stats = ChannelStats::at_points(&sc, plan.hover_points());
            let phi = random_phi(&mut rng, 4, 5, 30.0);
            let aggs = harvest_aggregates(&sc, &stats, &plan);
            for k in 0..5 {
                let direct: f64 = (0..4)
                    .map(|l| plan.hover_times[l] * harvested_power(&sc, stats.link(k, l).second_moment(&phi.phi[l]), k))
                    .sum::<f64>()
                    / sc.energy_requirements[k];
                let u = aggs[k].as_ref().unwrap();
                assert!((u.value(&stats, &phi) - direct).abs() <= 1e-10 * direct.abs().max(1.0));
                // Dense form agrees too.
                let (a, av) = u.dense(&stats);
                let x = DVector::from_iterator(20, phi.phi.iter().flatten().copied());
                let dense = (x.adjoint() * &a * &x)[(0, 0)].re + 2.0 * (av.adjoint() * &x)[(0, 0)].re + u.zeta1;
                assert!((dense - direct).abs() <= 1e-10 * direct.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_requirement_is_skipped() {
        let (mut sc, plan, stats) = setup(2, 1.0);
        sc.energy_requirements[3] = 0.0;
        let aggs = harvest_aggregates(&sc, &stats, &plan);
        assert!(aggs[3].is_none());
        assert!(aggs[0].is_some());
    }

    #[test]
    fn single_user_sinr_quadratic() {
        let mut sc = Scenario::reference().with_elements(3);
        sc.users.truncate(1);
        sc.tx_power = vec![0.2];
        sc.sinr_thresholds = vec![0.1];
        sc.energy_requirements = vec![4e-5];
        let plan = FlightPlan::uniform(&sc, 1.0);
        let stats = ChannelStats::at_points(&sc, plan.hover_points());
        let q = sinr_quadratic(&sc, &stats, 0, 0);
        let s = stats.link(0, 0);
        assert!((q.margin - 0.5 * 0.2).abs() < 1e-15);
        assert!((q.gamma - (0.1 * 1e-11 - 0.1 * s.beta_d)).abs() < 1e-20);
        let want = s.dense_a() * Complex64::from(0.1) - DMatrix::identity(3, 3) * Complex64::from(0.1 * s.beta_r * 1e-11);
        assert!((q.dense_f() - want).norm() < 1e-25);
    }

    #[test]
    fn reference_sinr_margin() {
        let (sc, _, stats) = setup(4, 1.0);
        let q = sinr_quadratic(&sc, &stats, 2, 1);
        assert!((q.margin - 0.06).abs() < 1e-15);
        assert!(!q.hopeless);
    }

    #[test]
    fn quadratic_form_matches_sinr() {
        let (sc, _, stats) = setup(6, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agree = 0;
        for i in 0..50 {
            let (k, l) = (i % 5, i % 4);
            let amp = 10f64.powf(rng.random_range(-1.0..4.0));
            let phi = random_phi(&mut rng, 1, 6, amp);
            let q = sinr_quadratic(&sc, &stats, k, l);
            let lhs = q.value(&phi.phi[0]) >= q.gamma;
            let rhs = sinr(&sc, stats.link(k, l), &phi.phi[0], k) >= sc.sinr_thresholds[k];
            if lhs == rhs {
                agree += 1;
            }
        }
        assert_eq!(agree, 50);
    }

    #[test]
    fn min_eigenvalue_matches_dense() {
        let (mut sc, _, _) = setup(5, 1.0);
        sc.noise_ris = 1e-3;
        let plan = FlightPlan::uniform(&sc, 1.0);
        let stats = ChannelStats::at_points(&sc, plan.hover_points());
        let q = sinr_quadratic(&sc, &stats, 0, 0);
        let (re, _) = crate::conic::complex_embed(&q.dense_f(), &DVector::zeros(5)).unwrap();
        let ev = re.symmetric_eigenvalues().min();
        assert!((ev - q.min_eigenvalue()).abs() <= 1e-9 * ev.abs());
        assert!(q.psd_shift() > 0.0);
    }

    fn check_minorant(sc: &Scenario, stats: &ChannelStats, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (k, l) in [(0, 0), (3, 2), (4, 3)] {
            let q = sinr_quadratic(sc, stats, k, l);
            let phi_n = random_phi(&mut rng, 1, sc.num_elements, 20.0);
            let at = q.linearized(&phi_n.phi[0], &phi_n.phi[0]);
            let exact = q.value(&phi_n.phi[0]);
            assert!((at - exact).abs() <= 1e-10 * exact.abs().max(1e-30), "tangency {at} {exact}");
            for _ in 0..1000 {
                let phi = random_phi(&mut rng, 1, sc.num_elements, 40.0);
                let lo = q.linearized(&phi_n.phi[0], &phi.phi[0]);
                let hi = q.value(&phi.phi[0]);
                assert!(lo <= hi + 1e-12 * hi.abs().max(lo.abs()), "{lo} > {hi}");
            }
        }
    }

    #[test]
    fn sinr_minorant_psd_case() {
        let (sc, _, stats) = setup(4, 1.0);
        check_minorant(&sc, &stats, 4);
    }

    #[test]
    fn sinr_minorant_with_psd_repair() {
        let (mut sc, _, _) = setup(4, 1.0);
        sc.noise_ris = 1e-3;
        let plan = FlightPlan::uniform(&sc, 1.0);
        let stats = ChannelStats::at_points(&sc, plan.hover_points());
        assert!(sinr_quadratic(&sc, &stats, 0, 0).psd_shift() > 0.0);
        check_minorant(&sc, &stats, 5);
    }

    #[test]
    fn harvest_tangent_and_minorant() {
        let (sc, plan, stats) = setup(4, 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let phi_n = random_phi(&mut rng, 4, 4, 20.0);
        for u in harvest_aggregates(&sc, &stats, &plan).into_iter().flatten() {
            let (b, z2) = u.linearize(&stats, &phi_n);
            let f = |phi: &ReflectionPlan| {
                2.0 * b
                    .iter()
                    .zip(&phi.phi)
                    .map(|(bl, pl)| bl.iter().zip(pl).map(|(x, y)| (x.conj() * y).re).sum::<f64>())
                    .sum::<f64>()
                    + z2
            };
            let h = u.value(&stats, &phi_n);
            assert!((f(&phi_n) - h).abs() <= 1e-10 * h.abs());
            for _ in 0..1000 {
                let phi = random_phi(&mut rng, 4, 4, 40.0);
                let (lo, hi) = (f(&phi), u.value(&stats, &phi));
                assert!(lo <= hi + 1e-12 * hi.abs());
            }
        }
    }

    #[test]
    fn built_rows_are_tight_at_expansion_point() {
        let (sc, plan, stats) = setup(4, 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut phi_n = random_phi(&mut rng, 4, 4, 5.0);
        project_feasible(&sc, &stats, &plan, &mut phi_n);
        let prog = linearize_and_build(&sc, &stats, &plan, &phi_n).unwrap();
        let eps = min_harvest(&sc, &stats, &plan, &phi_n);
        let x = prog.embed(&phi_n, eps);
        // Incumbent is feasible for the convexified problem.
        assert!(prog.program.max_violation(&x) < 1e-9);
        let back = prog.extract(&x);
        for (a, b) in back.phi.iter().flatten().zip(phi_n.phi.iter().flatten()) {
            assert!((a - b).norm() < 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn convex_feasible_points_are_exactly_feasible() {
        let (sc, plan, stats) = setup(4, 50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut phi_n = random_phi(&mut rng, 4, 4, 5.0);
        project_feasible(&sc, &stats, &plan, &mut phi_n);
        let prog = linearize_and_build(&sc, &stats, &plan, &phi_n).unwrap();
        let mut hits = 0;
        for _ in 0..1000 {
            let mut phi = random_phi(&mut rng, 4, 4, 200.0);
            project_feasible(&sc, &stats, &plan, &mut phi);
            let x = prog.embed(&phi, -1e9);
            if prog.program.max_violation(&x) <= 0.0 {
                hits += 1;
                assert!(exactly_feasible(&sc, &stats, &plan, &phi));
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn infinite_tolerance_means_one_solve() {
        let (mut sc, plan, stats) = setup(4, 50.0);
        sc.algorithm.tolerance = f64::INFINITY;
        let phi = ReflectionPlan::zeros(4, 4);
        let out = solve_phase_sca(&sc, &stats, &plan, &phi).unwrap();
        assert_eq!(out.solves, 1);
    }

    #[test]
    fn passive_zero_phi_matches_direct_links() {
        let (sc, plan, stats) = setup(4, 50.0);
        let sc = sc.with_mode(RisMode::Passive);
        let zero = ReflectionPlan::zeros(4, 4);
        let h0 = min_harvest(&sc, &stats, &plan, &zero);
        let want = (0..5)
            .map(|k| (0..4).map(|l| 50.0 * harvested_power(&sc, stats.link(k, l).beta_d, k)).sum::<f64>() / 4e-5)
            .fold(f64::INFINITY, f64::min);
        assert!((h0 - want).abs() < 1e-12 * want);
        let out = solve_phase_sca(&sc, &stats, &plan, &zero).unwrap();
        assert!(out.min_harvest >= h0);
        assert!(out.phi.phi.iter().flatten().all(|c| c.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn epsilon_nondecreasing() {
        for seed in 0..10 {
            let (sc, plan, stats) = setup(8, 40.0);
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut phi = random_phi(&mut rng, 4, 8, 50.0);
            project_feasible(&sc, &stats, &plan, &mut phi);
            let out = solve_phase_sca(&sc, &stats, &plan, &phi).unwrap();
            let mut last = min_harvest(&sc, &stats, &plan, &phi);
            for row in &out.trace {
                if let TraceRow::Phase { min_harvest, accepted: true, .. } = row {
                    assert!(*min_harvest >= last - 10.0 * sc.algorithm.solver_tol * last.abs());
                    last = *min_harvest;
                }
            }
            assert!(exactly_feasible(&sc, &stats, &plan, &out.phi));
        }
    }
}
