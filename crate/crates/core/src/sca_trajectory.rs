//! Trajectory and hover-time subproblem with the reflection vectors fixed.
//!
//! Each SCA iteration freezes the cascade phase profile at the incumbent,
//! replaces the path losses by their tangent minorants in the squared
//! horizontal distance, and linearizes the remaining reverse-convex pieces.
//! Variables are normalized by their incumbent values so the conic solver sees
//! order-one data.
//!
//! Variable scaling used in the program:
//!
//! ```text
//! tau_l   = t_l / T_ref
//! z1'_l   = z1_l / beta_t^n           z2'_kl = z2_kl / beta_d^n
//! z3'_kl  = z3_kl / sqrt(beta_t^n beta_d^n)
//! y'_kl   = y_kl / kappa_kl,          kappa_kl^2 = T_ref c_k D^n_kl
//! ```

use num_complex::Complex64;

use crate::channel::{norm_sqr, ris_output_power, sinr, ChannelStats, LinkStats};
use crate::conic::{self, AffineExpr, ConicProgram, SolverSettings};
use crate::energy::{flight_power_per_meter, hover_cost_rate, uav_total_energy};
use crate::error::{Error, Result};
use crate::scenario::{FlightPlan, Point, ReflectionPlan, RisMode, Scenario};
use crate::sca_phase::min_harvest;
use crate::trace::TraceRow;

/// Coefficients of the frozen-profile harvest model
/// `D ~ (U1 + U3) beta_t + U2 sqrt(beta_d beta_t) + beta_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UCoefficients {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

impl UCoefficients {
    pub fn reconstruct(&self, beta_d: f64, beta_t: f64) -> f64 {
        (self.u1 + self.u3) * beta_t + self.u2 * (beta_d * beta_t).sqrt() + beta_d
    }
}

/// U-coefficients for the link `link` (whose `psi` is the frozen profile).
pub fn harvest_u_coefficients(sc: &Scenario, link: &LinkStats, phi: &[Complex64]) -> UCoefficients {
    let (ud, ut, ur) = (sc.rician.direct, sc.rician.uav_ris, sc.rician.ris_user);
    let br = link.beta_r;
    let den = (ur + 1.0) * (ut + 1.0);
    let s = link.psi_inner(phi);
    UCoefficients {
        u1: ur * ut * br / den * s.norm_sqr(),
        u2: 2.0 * (ud * ur * ut * br / ((ud + 1.0) * den)).sqrt() * s.re,
        u3: (ur + ut + 1.0) * br / den * norm_sqr(phi),
    }
}

/// Tangent minorant of `beta_0 (|q - c|^2 + h^2)^(-tau/2)` in `u = |q - c|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossTangent {
    pub center: Point,
    pub height_sq: f64,
    pub tau: f64,
    /// `u^n`.
    pub u_n: f64,
    /// Exact path loss at the expansion point.
    pub value: f64,
    /// `d beta / d u` at the expansion point (negative).
    pub slope: f64,
}

impl PathlossTangent {
    pub fn new(beta0: f64, center: Point, height: f64, tau: f64, q_n: Point) -> Self {
        let u_n = (q_n - center).norm_sqr();
        let r = u_n + height * height;
        let value = beta0 * r.powf(-tau / 2.0);
        Self {
            center,
            height_sq: height * height,
            tau,
            u_n,
            value,
            slope: -tau / 2.0 * value / r,
        }
    }

    pub fn eval(&self, q: Point) -> f64 {
        self.value + self.slope * ((q - self.center).norm_sqr() - self.u_n)
    }

    /// Rotated-cone form of `z / beta^n <= beta_bar(q) / beta^n` for a
    /// normalized variable `z'`.
    fn cone(&self, qx: usize, qy: usize, z: usize) -> (AffineExpr, AffineExpr, Vec<AffineExpr>) {
        let rho = (self.u_n + self.height_sq).sqrt();
        let c = self.tau / 2.0 / (self.u_n + self.height_sq);
        let x1 = AffineExpr::constant((1.0 + c * self.u_n) / self.tau).with_term(z, -1.0 / self.tau);
        let v = vec![
            AffineExpr::term(qx, 1.0 / rho).plus(-self.center.re / rho),
            AffineExpr::term(qy, 1.0 / rho).plus(-self.center.im / rho),
        ];
        (x1, AffineExpr::constant(1.0), v)
    }
}

/// `(beta_bar_d[k], beta_bar_t)` at hover position `q_n`.
pub fn pathloss_tangents(sc: &Scenario, q_n: Point) -> (Vec<PathlossTangent>, PathlossTangent) {
    let b0 = sc.reference_gain;
    let d = sc
        .users
        .iter()
        .map(|&u| PathlossTangent::new(b0, u, sc.uav_height, sc.pathloss.direct, q_n))
        .collect();
    let t = PathlossTangent::new(b0, sc.ris_position, sc.uav_height - sc.ris_height, sc.pathloss.uav_ris, q_n);
    (d, t)
}

/// Tangent of `Q(q) = |q - q_R|^2` at `q_n`: a global affine minorant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceTangent {
    pub q_n: Point,
    pub center: Point,
}

impl DistanceTangent {
    pub fn eval(&self, q: Point) -> f64 {
        let d = self.q_n - self.center;
        d.norm_sqr() + 2.0 * (d.re * (q.re - self.q_n.re) + d.im * (q.im - self.q_n.im))
    }

    fn expr(&self, qx: usize, qy: usize) -> AffineExpr {
        let d = self.q_n - self.center;
        AffineExpr::constant(d.norm_sqr() - 2.0 * (d.re * self.q_n.re + d.im * self.q_n.im))
            .with_term(qx, 2.0 * d.re)
            .with_term(qy, 2.0 * d.im)
    }
}

pub fn horizontal_distance_tangent(q_n: Point, q_r: Point) -> DistanceTangent {
    DistanceTangent { q_n, center: q_r }
}

/// Upper bound of `(u / u_n)^(-p)` used for the RIS energy row, written in
/// terms of `w >= u_n / u` and `v >= w^2`. Exact at `u = u_n`.
pub fn power_majorant(p: f64, w: f64, v: f64) -> f64 {
    if p <= 1.0 {
        (1.0 - p) + p * w
    } else {
        (2.0 - p) * w + (p - 1.0) * v
    }
}

/// `E (1/t_n - (t - t_n) / t_n^2)`, the tangent minorant of `E / t`.
pub fn inverse_time_tangent(budget: f64, t_n: f64, t: f64) -> f64 {
    budget * (1.0 / t_n - (t - t_n) / (t_n * t_n))
}

/// Everything needed to expand the subproblem at an incumbent.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub plan: FlightPlan,
    pub stats: ChannelStats,
    /// `y^n_kl = sqrt(c_k D_kl t_l)`; empty rows for users without requirement.
    pub y_n: Vec<Vec<f64>>,
    pub t_ref: f64,
    pub t_cap: f64,
}

impl Expansion {
    pub fn new(sc: &Scenario, phi: &ReflectionPlan, plan: &FlightPlan) -> Self {
        let stats = ChannelStats::at_points(sc, plan.hover_points());
        let y_n = (0..sc.num_users())
            .map(|k| match sc.harvest_weight(k) {
                Some(c) => (0..plan.num_hover())
                    .map(|l| (c * stats.link(k, l).second_moment(&phi.phi[l]) * plan.hover_times[l]).sqrt())
                    .collect(),
                None => Vec::new(),
            })
            .collect();
        let t_max = plan.hover_times.iter().cloned().fold(0.0, f64::max);
        Self {
            plan: plan.clone(),
            stats,
            y_n,
            t_ref: t_max.max(1.0),
            t_cap: effective_cap(sc, plan),
        }
    }
}

/// Hover-time cap, raised to twice the incumbent maximum when needed.
pub fn effective_cap(sc: &Scenario, plan: &FlightPlan) -> f64 {
    let t_max = plan.hover_times.iter().cloned().fold(0.0, f64::max);
    if t_max > sc.algorithm.hover_time_cap {
        2.0 * t_max
    } else {
        sc.algorithm.hover_time_cap
    }
}

/// The convexified program and its variable map.
#[derive(Debug, Clone)]
pub struct TrajectoryProgram {
    pub program: ConicProgram,
    pub qx: Vec<usize>,
    pub qy: Vec<usize>,
    pub tau: Vec<usize>,
    pub t_ref: f64,
    /// Normalizer of the objective (incumbent UAV energy, at least 1 J).
    pub energy_scale: f64,
}

impl TrajectoryProgram {
    pub fn extract(&self, sc: &Scenario, x: &[f64]) -> FlightPlan {
        let mut waypoints = vec![sc.uav_start];
        for l in 0..self.qx.len() {
            waypoints.push(Point::new(x[self.qx[l]], x[self.qy[l]]));
        }
        waypoints.push(sc.uav_end);
        FlightPlan {
            waypoints,
            hover_times: self.tau.iter().map(|&i| (x[i] * self.t_ref).max(0.0)).collect(),
        }
    }
}

/// Builds the convex trajectory subproblem expanded at `ex`.
pub fn build_trajectory_subproblem(sc: &Scenario, phi: &ReflectionPlan, ex: &Expansion) -> Result<TrajectoryProgram> {
    let nh = ex.plan.num_hover();
    let nk = sc.num_users();
    let t_ref = ex.t_ref;
    let mut p = ConicProgram::new(0);
    let qx: Vec<usize> = (0..nh).map(|_| p.add_var()).collect();
    let qy: Vec<usize> = (0..nh).map(|_| p.add_var()).collect();
    let tau: Vec<usize> = (0..nh).map(|_| p.add_var()).collect();
    let seg: Vec<usize> = (0..=nh).map(|_| p.add_var()).collect();

    let e_n = uav_total_energy(sc, &ex.plan).total.max(1.0);
    let fly = flight_power_per_meter(sc) / e_n;
    let hov = hover_cost_rate(sc) * t_ref / e_n;
    for &s in &seg {
        p.objective[s] = fly;
    }
    for &t in &tau {
        p.objective[t] = hov;
    }

    // Segment epigraphs with fixed endpoints.
    let pos = |l: usize, axis: usize| -> AffineExpr {
        if l == 0 {
            AffineExpr::constant(if axis == 0 { sc.uav_start.re } else { sc.uav_start.im })
        } else if l == nh + 1 {
            AffineExpr::constant(if axis == 0 { sc.uav_end.re } else { sc.uav_end.im })
        } else {
            AffineExpr::var(if axis == 0 { qx[l - 1] } else { qy[l - 1] })
        }
    };
    let diff = |a: AffineExpr, b: AffineExpr| {
        let mut d = a;
        for (j, c) in b.terms {
            d.add_term(j, -c);
        }
        d.plus(-b.constant)
    };
    for (i, &s) in seg.iter().enumerate() {
        let dx = diff(pos(i + 1, 0), pos(i, 0));
        let dy = diff(pos(i + 1, 1), pos(i, 1));
        p.soc(AffineExpr::var(s), vec![dx, dy]);
    }

    let t_hi = ex.t_cap / t_ref;
    for &t in &tau {
        p.nonneg(AffineExpr::var(t));
        p.nonneg(AffineExpr::constant(t_hi).with_term(t, -1.0));
    }

    let noise = sc.effective_ris_noise();
    let mut ys: Vec<(usize, usize, usize)> = Vec::new();
    for l in 0..nh {
        let q_n = ex.plan.hover(l);
        let (bd, bt) = pathloss_tangents(sc, q_n);
        let z1 = p.add_var();
        p.nonneg(AffineExpr::var(z1));
        let (a, b, v) = bt.cone(qx[l], qy[l], z1);
        p.rotated(a, b, v);
        let phi_l = &phi.phi[l];
        let phi_sq = norm_sqr(phi_l);

        // RIS output energy at this hover point.
        if sc.ris_mode == RisMode::Active && phi_sq > 0.0 {
            let t_n = ex.plan.hover_times[l].max(sc.algorithm.min_hover_time);
            let pw = sc.pathloss.uav_ris / 2.0;
            let h2 = (sc.uav_height - sc.ris_height).powi(2);
            let u_n = bt.u_n + h2;
            let qbar = horizontal_distance_tangent(q_n, sc.ris_position).expr(qx[l], qy[l]);
            let u_rel = qbar.plus(h2).scaled(1.0 / u_n);
            let w = p.add_var();
            p.rotated(AffineExpr::var(w), u_rel.scaled(0.5), vec![AffineExpr::constant(1.0)]);
            let k0 = phi_sq * t_n / sc.ris_energy_budget;
            let gain = sc.total_tx_power() * bt.value;
            // k0 (gain * majorant + noise) <= 2 - t / t_n
            let mut row = AffineExpr::constant(2.0 - k0 * noise).with_term(tau[l], -t_ref / t_n);
            if pw <= 1.0 {
                row.constant -= k0 * gain * (1.0 - pw);
                row.add_term(w, -k0 * gain * pw);
            } else {
                let v2 = p.add_var();
                p.rotated(AffineExpr::var(v2), AffineExpr::constant(0.5), vec![AffineExpr::var(w)]);
                row.add_term(w, -k0 * gain * (2.0 - pw));
                row.add_term(v2, -k0 * gain * (pw - 1.0));
            }
            p.nonneg(row.normalized());
        }

        for k in 0..nk {
            let link = ex.stats.link(k, l);
            let u = harvest_u_coefficients(sc, link, phi_l);
            let z2 = p.add_var();
            p.nonneg(AffineExpr::var(z2));
            let (a, b, v) = bd[k].cone(qx[l], qy[l], z2);
            p.rotated(a, b, v);
            // W as an affine expression.
            let btn = bt.value;
            let bdn = bd[k].value;
            let mut w = AffineExpr::term(z1, (u.u1 + u.u3) * btn).with_term(z2, bdn);
            if u.u2 >= 0.0 {
                let z3 = p.add_var();
                p.rotated(
                    AffineExpr::var(z1),
                    AffineExpr::var(z2),
                    vec![AffineExpr::term(z3, 2f64.sqrt())],
                );
                w.add_term(z3, u.u2 * (btn * bdn).sqrt());
            } else {
                w.constant += u.u2 * (btn * bdn).sqrt();
            }
            let d_n = u.reconstruct(bdn, btn);

            // SINR: margin * W >= gamma (beta_r delta^2 ||phi||^2 + noise).
            let g = sc.sinr_thresholds[k];
            let m = sc.sinr_margin(k);
            if m <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "user {}: p_k - gamma_k * sum_(j != k) p_j must be positive",
                    k + 1
                )));
            }
            let rhs = g * (link.beta_r * noise * phi_sq + sc.noise_user);
            p.nonneg(w.clone().scaled(m / d_n).plus(-rhs / d_n).normalized());

            // Harvest: c_k W t >= y^2.
            if sc.harvest_weight(k).is_some() {
                let y = p.add_var();
                // x2 = T_ref c W / (2 kappa^2) = W / (2 D^n)
                p.rotated(AffineExpr::var(tau[l]), w.scaled(0.5 / d_n), vec![AffineExpr::var(y)]);
                ys.push((k, l, y));
            }
        }
    }

    // Linearized sum of squares per user.
    for k in 0..nk {
        let Some(c) = sc.harvest_weight(k) else { continue };
        let mut row = AffineExpr::constant(-1.0);
        for l in 0..nh {
            let yn = ex.y_n[k][l];
            let d_n = ex.stats.link(k, l).second_moment(&phi.phi[l]);
            let kappa = (t_ref * c * d_n).sqrt();
            row.constant -= yn * yn;
            if let Some(&(_, _, y)) = ys.iter().find(|e| e.0 == k && e.1 == l) {
                row.add_term(y, 2.0 * yn * kappa);
            }
        }
        p.nonneg(row.normalized());
    }

    Ok(TrajectoryProgram {
        program: p,
        qx,
        qy,
        tau,
        t_ref,
        energy_scale: e_n,
    })
}

/// Exact constraint check of a plan with `phi` fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub min_harvest: f64,
    /// Worst `(gamma - SINR) / gamma`, floored at 0.
    pub sinr_violation: f64,
    /// Worst `E_out / E_budget - 1`, floored at 0.
    pub ris_violation: f64,
    pub cap_violation: f64,
    pub first_violation: Option<String>,
}

impl Audit {
    pub fn max_violation(&self) -> f64 {
        let h = if self.min_harvest.is_finite() { (1.0 - self.min_harvest).max(0.0) } else { 0.0 };
        h.max(self.sinr_violation).max(self.ris_violation).max(self.cap_violation)
    }
}

pub fn exact_audit(sc: &Scenario, plan: &FlightPlan, phi: &ReflectionPlan, t_cap: f64) -> Audit {
    let stats = ChannelStats::at_points(sc, plan.hover_points());
    let mut first = None;
    let mut sinr_v: f64 = 0.0;
    let mut ris_v: f64 = 0.0;
    let mut cap_v: f64 = 0.0;
    for l in 0..plan.num_hover() {
        for k in 0..sc.num_users() {
            let g = sc.sinr_thresholds[k];
            let v = (g - sinr(sc, stats.link(k, l), &phi.phi[l], k)) / g;
            if v > 1e-9 && first.is_none() {
                first = Some(format!("SINR of user {} at hover point {}", k + 1, l + 1));
            }
            sinr_v = sinr_v.max(v);
        }
        if sc.ris_mode == RisMode::Active && sc.ris_energy_budget > 0.0 {
            let e = ris_output_power(sc, stats.beta_t(l), &phi.phi[l]) * plan.hover_times[l];
            let v = e / sc.ris_energy_budget - 1.0;
            if v > 1e-9 && first.is_none() {
                first = Some(format!("RIS energy budget at hover point {}", l + 1));
            }
            ris_v = ris_v.max(v);
        }
        let v = plan.hover_times[l] / t_cap - 1.0;
        if v > 1e-12 && first.is_none() {
            first = Some(format!("hover time cap at hover point {}", l + 1));
        }
        cap_v = cap_v.max(v);
    }
    let h = min_harvest(sc, &stats, plan, phi);
    if h < 1.0 - 1e-9 && first.is_none() {
        first = Some("harvested energy requirement".into());
    }
    Audit {
        min_harvest: h,
        sinr_violation: sinr_v.max(0.0),
        ris_violation: ris_v.max(0.0),
        cap_violation: cap_v.max(0.0),
        first_violation: first,
    }
}

fn feasible_apart_from_harvest(a: &Audit) -> bool {
    a.sinr_violation <= 1e-9 && a.ris_violation <= 1e-9 && a.cap_violation <= 1e-12
}

/// Scales all hover times by `1 / min_k h_k`; the harvested energy is linear
/// in the hover times, so the result meets the tightest requirement exactly.
pub fn rescale_hover_times(sc: &Scenario, plan: &mut FlightPlan, phi: &ReflectionPlan) {
    let stats = ChannelStats::at_points(sc, plan.hover_points());
    let h = min_harvest(sc, &stats, plan, phi);
    if h.is_finite() && h > 0.0 {
        plan.hover_times.iter_mut().for_each(|t| *t /= h);
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    pub plan: FlightPlan,
    pub energy: f64,
    pub solves: usize,
    pub trace: Vec<TraceRow>,
    pub diagnostic: Option<String>,
}

const MAX_HALVINGS: usize = 12;

/// SCA over positions and hover times. `plan_init` must pass the exact audit;
/// every accepted iterate does too and the UAV energy never increases.
pub fn solve_trajectory_sca(sc: &Scenario, phi: &ReflectionPlan, plan_init: &FlightPlan) -> Result<TrajectoryOutcome> {
    let settings = SolverSettings {
        tol: sc.algorithm.solver_tol,
        max_iter: sc.algorithm.solver_max_iter,
    };
    let audit = exact_audit(sc, plan_init, phi, effective_cap(sc, plan_init));
    if audit.max_violation() > 1e-6 {
        let what = audit.first_violation.unwrap_or_default();
        return Err(Error::Infeasible(format!("initial trajectory violates {what}")));
    }
    let mut plan = plan_init.clone();
    let mut energy = uav_total_energy(sc, &plan).total;
    let mut trace = Vec::new();
    let mut diagnostic = None;
    let mut solves = 0;

    for n in 1..=sc.algorithm.max_trajectory_iters {
        let ex = Expansion::new(sc, phi, &plan);
        let prog = build_trajectory_subproblem(sc, phi, &ex)?;
        let sol = conic::solve(&prog.program, settings)?;
        solves += 1;
        if !sol.usable() {
            trace.push(TraceRow::Trajectory {
                outer: 0,
                n,
                e_v: energy,
                step: 0.0,
                solver_status: sol.status,
                exact_audit_max_violation: f64::NAN,
            });
            diagnostic = Some(format!("trajectory subproblem {n}: solver status {}", sol.status));
            break;
        }
        let cand = prog.extract(sc, &sol.x);
        let raw = exact_audit(sc, &cand, phi, ex.t_cap).max_violation();

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = blend(&plan, &cand, alpha);
            rescale_hover_times(sc, &mut trial, phi);
            let a = exact_audit(sc, &trial, phi, ex.t_cap);
            let e = uav_total_energy(sc, &trial).total;
            if feasible_apart_from_harvest(&a) && e <= energy && a.max_violation() <= 1e-9 {
                accepted = Some((trial, e));
                break;
            }
            alpha *= 0.5;
        }
        let Some((next, e_next)) = accepted else {
            trace.push(TraceRow::Trajectory {
                outer: 0,
                n,
                e_v: energy,
                step: 0.0,
                solver_status: sol.status,
                exact_audit_max_violation: raw,
            });
            break;
        };
        trace.push(TraceRow::Trajectory {
            outer: 0,
            n,
            e_v: e_next,
            step: alpha,
            solver_status: sol.status,
            exact_audit_max_violation: raw,
        });
        let done = (energy - e_next).abs() <= sc.algorithm.tolerance * energy;
        plan = next;
        energy = e_next;
        if done {
            break;
        }
    }
    Ok(TrajectoryOutcome {
        plan,
        energy,
        solves,
        trace,
        diagnostic,
    })
}

fn blend(a: &FlightPlan, b: &FlightPlan, alpha: f64) -> FlightPlan {
    FlightPlan {
        waypoints: a.waypoints.iter().zip(&b.waypoints).map(|(x, y)| x + (y - x) * alpha).collect(),
        hover_times: a
            .hover_times
            .iter()
            .zip(&b.hover_times)
            .map(|(x, y)| (x + (y - x) * alpha).max(0.0))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::pathloss;
    use crate::energy::propulsion_power;
    use crate::optimizer::initialize_seeded;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, r: f64) -> Point {
        Point::new(rng.random_range(-r..r), rng.random_range(-r..r))
    }

    #[test]
    fn zero_phi_gives_zero_u() {
        let sc = Scenario::reference().with_elements(4);
        let link = LinkStats::new(&sc, Point::new(3.0, 4.0), 1);
        let u = harvest_u_coefficients(&sc, &link, &[Complex64::new(0.0, 0.0); 4]);
        assert_eq!((u.u1, u.u2, u.u3), (0.0, 0.0, 0.0));
        assert_eq!(u.reconstruct(link.beta_d, link.beta_t), link.beta_d);
    }

    #[test]
    fn cophased_u_coefficients() {
        let sc = Scenario::reference().with_elements(8);
        let link = LinkStats::new(&sc, Point::new(-10.0, 5.0), 2);
        let c = 3.0;
        let phi: Vec<Complex64> = link.psi.iter().map(|p| p * c).collect();
        let u = harvest_u_coefficients(&sc, &link, &phi);
        let br = link.beta_r;
        assert!((u.u1 - 100.0 * br / 121.0 * c * c * 64.0).abs() <= 1e-12 * u.u1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let other: Vec<Complex64> = (0..8).map(|_| Complex64::from_polar(c, rng.random_range(-3.2..3.2))).collect();
            assert!(harvest_u_coefficients(&sc, &link, &other).u2 <= u.u2 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn u_reconstruction_matches_second_moment() {
        let sc = Scenario::reference().with_elements(6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let link = LinkStats::new(&sc, random_point(&mut rng, 40.0), rng.random_range(0..5));
            let phi: Vec<Complex64> =
                (0..6).map(|_| Complex64::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0))).collect();
            let d = link.second_moment(&phi);
            let r = harvest_u_coefficients(&sc, &link, &phi).reconstruct(link.beta_d, link.beta_t);
            assert!((d - r).abs() <= 1e-10 * d);
        }
    }

    #[test]
    fn pathloss_tangents_minorize() {
        let sc = Scenario::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q_n = Point::new(-12.0, 7.0);
        let (bd, bt) = pathloss_tangents(&sc, q_n);
        for (k, t) in bd.iter().enumerate() {
            let exact = LinkStats::new(&sc, q_n, k).beta_d;
            assert!((t.eval(q_n) - exact).abs() <= 1e-12 * exact);
        }
        assert!((bt.eval(q_n) - LinkStats::new(&sc, q_n, 0).beta_t).abs() <= 1e-12 * bt.value);
        for _ in 0..1000 {
            let q = random_point(&mut rng, 80.0);
            for (k, t) in bd.iter().enumerate() {
                let exact = LinkStats::new(&sc, q, k).beta_d;
                assert!(t.eval(q) <= exact * (1.0 + 1e-12));
            }
            assert!(bt.eval(q) <= LinkStats::new(&sc, q, 0).beta_t * (1.0 + 1e-12));
        }
    }

    #[test]
    fn pathloss_tangent_flattens_far_away() {
        let near = PathlossTangent::new(1e-3, Point::new(0.0, 0.0), 20.0, 2.4, Point::new(5.0, 0.0));
        let far = PathlossTangent::new(1e-3, Point::new(0.0, 0.0), 1e4, 2.4, Point::new(5.0, 0.0));
        assert!(far.slope.abs() < 1e-9 * near.slope.abs());
        assert!((near.value - pathloss(1e-3, (25.0f64 + 400.0).sqrt(), 2.4)).abs() < 1e-18);
    }

    #[test]
    fn distance_tangent() {
        let r = Point::new(1.0, -2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q_n = Point::new(8.0, 3.0);
        let t = horizontal_distance_tangent(q_n, r);
        assert!((t.eval(q_n) - (q_n - r).norm_sqr()).abs() < 1e-12);
        let at_center = horizontal_distance_tangent(r, r);
        for _ in 0..1000 {
            let q = random_point(&mut rng, 100.0);
            assert!(t.eval(q) <= (q - r).norm_sqr() + 1e-12);
            assert_eq!(at_center.eval(q), 0.0);
        }
    }

    #[test]
    fn power_majorant_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in [0.5, 1.0, 1.15, 1.5, 2.0] {
            assert!((power_majorant(p, 1.0, 1.0) - 1.0).abs() < 1e-15);
            for _ in 0..1000 {
                let r: f64 = rng.random_range(0.01..20.0);
                let w = 1.0 / r;
                assert!(r.powf(-p) <= power_majorant(p, w, w * w) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn inverse_time_and_square_tangents() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (e, t_n) = (20.0, 3.0);
        assert!((inverse_time_tangent(e, t_n, t_n) - e / t_n).abs() < 1e-12);
        for _ in 0..1000 {
            let t: f64 = rng.random_range(1e-3..100.0);
            assert!(inverse_time_tangent(e, t_n, t) <= e / t + 1e-12);
            let (a, b): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            assert!(2.0 * a * b - a * a <= b * b + 1e-12);
        }
    }

    fn feasible_start(sc: &Scenario, seed: u64) -> (ReflectionPlan, FlightPlan) {
        initialize_seeded(sc, seed).unwrap()
    }

    #[test]
    fn subproblem_is_no_worse_than_incumbent() {
        for mode in [RisMode::Active, RisMode::Passive] {
            let sc = Scenario::reference().with_elements(8).with_mode(mode);
            let (phi, plan) = feasible_start(&sc, 7);
            let ex = Expansion::new(&sc, &phi, &plan);
            let prog = build_trajectory_subproblem(&sc, &phi, &ex).unwrap();
            let sol = conic::solve(&prog.program, SolverSettings::default()).unwrap();
            assert!(sol.usable());
            let incumbent = uav_total_energy(&sc, &plan).total / prog.energy_scale;
            assert!(sol.objective <= incumbent * (1.0 + 1e-6), "{} > {incumbent}", sol.objective);
        }
    }

    #[test]
    fn single_iteration_cap() {
        let mut sc = Scenario::reference().with_elements(8);
        sc.algorithm.max_trajectory_iters = 1;
        let (phi, plan) = feasible_start(&sc, 8);
        let out = solve_trajectory_sca(&sc, &phi, &plan).unwrap();
        assert_eq!(out.solves, 1);
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn energy_nonincreasing_and_exactly_feasible() {
        for seed in 0..10 {
            let sc = Scenario::reference().with_elements(8);
            let (phi, plan) = feasible_start(&sc, seed);
            let out = solve_trajectory_sca(&sc, &phi, &plan).unwrap();
            let mut last = uav_total_energy(&sc, &plan).total;
            for row in &out.trace {
                if let TraceRow::Trajectory { e_v, .. } = row {
                    assert!(*e_v <= last * (1.0 + 10.0 * sc.algorithm.solver_tol));
                    last = *e_v;
                }
            }
            let a = exact_audit(&sc, &out.plan, &phi, effective_cap(&sc, &out.plan));
            assert!(a.max_violation() <= 1e-9, "{a:?}");
            assert!(out.energy <= uav_total_energy(&sc, &plan).total);
        }
    }

    #[test]
    fn unconstrained_limit_is_straight_line() {
        let mut sc = Scenario::reference().with_elements(4).with_mode(RisMode::Passive);
        sc.energy_requirements = vec![0.0; 5];
        sc.sinr_thresholds = vec![1e-9; 5];
        let plan = FlightPlan::uniform(&sc, 2.0);
        let phi = ReflectionPlan::zeros(4, 4);
        let out = solve_trajectory_sca(&sc, &phi, &plan).unwrap();
        let straight = propulsion_power(&sc.propulsion, sc.cruise_speed) * 70.0 / sc.cruise_speed;
        assert!(out.plan.hover_times.iter().all(|t| *t < 1e-6), "{:?}", out.plan.hover_times);
        assert!((out.energy - straight).abs() <= 1e-4 * straight, "{} vs {straight}", out.energy);
    }

    #[test]
    fn hover_point_approaches_demanding_user() {
        let mut sc = Scenario::reference().with_elements(1).with_mode(RisMode::Passive);
        sc.num_segments = 2;
        sc.users = vec![Point::new(0.0, 25.0)];
        sc.tx_power = vec![0.2];
        sc.radiated_power = 0.2;
        sc.sinr_thresholds = vec![0.1];
        sc.algorithm.max_trajectory_iters = 200;
        let phi = ReflectionPlan::zeros(1, 1);
        let mut last = f64::INFINITY;
        for req in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
            sc.energy_requirements = vec![req];
            let mut plan = FlightPlan::uniform(&sc, 1.0);
            rescale_hover_times(&sc, &mut plan, &phi);
            let out = solve_trajectory_sca(&sc, &phi, &plan).unwrap();
            let d = (out.plan.hover(0) - sc.users[0]).norm();
            assert!(d <= last + 1e-6, "req {req}: {d} > {last}");
            last = d;
        }
        assert!(last < 10.0);
    }

    #[test]
    fn audit_names_violations() {
        let sc = Scenario::reference().with_elements(4);
        let plan = FlightPlan::uniform(&sc, 1e-3);
        let phi = ReflectionPlan::zeros(4, 4);
        let a = exact_audit(&sc, &plan, &phi, 1e3);
        assert_eq!(a.first_violation.as_deref(), Some("harvested energy requirement"));
        assert!(matches!(solve_trajectory_sca(&sc, &phi, &plan), Err(Error::Infeasible(_))));
        let mut big = ReflectionPlan::zeros(4, 4);
        big.phi[1][0] = Complex64::new(1e4, 0.0);
        let a = exact_audit(&sc, &FlightPlan::uniform(&sc, 10.0), &big, 1e3);
        assert!(a.ris_violation > 0.0);
        assert!(a.first_violation.unwrap().contains("hover point 2"));
    }
}
