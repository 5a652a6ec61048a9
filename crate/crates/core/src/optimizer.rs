//! Alternating optimization: trajectory SCA, then reflection SCA, repeated.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelStats;
use crate::energy::{system_energy, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::scenario::{FlightPlan, Point, ReflectionPlan, RisMode, Scenario};
use crate::sca_phase::{harvest_aggregates, min_harvest, ris_energy_cap, sinr_slack, solve_phase_sca};
use crate::sca_trajectory::{rescale_hover_times, solve_trajectory_sca};
use crate::trace::TraceRow;

/// Fraction of the RIS energy budget used by the initial reflection vectors.
const INITIAL_BUDGET_FRACTION: f64 = 0.8;
const MAX_DOUBLINGS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    MaxOuterIterations,
    Converged,
    StageFailure(String),
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::MaxOuterIterations => f.write_str("max outer iterations"),
            Termination::Converged => f.write_str("converged"),
            Termination::StageFailure(m) => write!(f, "stage failure: {m}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub phi: ReflectionPlan,
    pub plan: FlightPlan,
    pub energy: EnergyBreakdown,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    pub outer_iterations: usize,
}

impl RunResult {
    pub fn min_harvest(&self, sc: &Scenario) -> f64 {
        let stats = ChannelStats::at_points(sc, self.plan.hover_points());
        min_harvest(sc, &stats, &self.plan, &self.phi)
    }

    /// Mean horizontal distance from the hover points to the RIS.
    pub fn mean_ris_distance(&self, sc: &Scenario) -> f64 {
        let pts = self.plan.hover_points();
        pts.iter().map(|q| (q - sc.ris_position).norm()).sum::<f64>() / pts.len() as f64
    }
}

/// Reflection vectors co-phased to the user nearest each hover point, with
/// the given per-element phase offsets.
fn cophased(sc: &Scenario, plan: &FlightPlan, offsets: &[Vec<f64>]) -> ReflectionPlan {
    let stats = ChannelStats::at_points(sc, plan.hover_points());
    let m = sc.num_elements;
    let phi = plan
        .hover_points()
        .iter()
        .enumerate()
        .map(|(l, q)| {
            let k = (0..sc.num_users())
                .min_by(|&a, &b| (q - sc.users[a]).norm().total_cmp(&(q - sc.users[b]).norm()))
                .unwrap_or(0);
            let amp = match sc.ris_mode {
                RisMode::Passive => 1.0,
                RisMode::Active => (INITIAL_BUDGET_FRACTION * ris_energy_cap(sc, &stats, plan, l) / m as f64).sqrt(),
            };
            stats
                .link(k, l)
                .psi
                .iter()
                .zip(&offsets[l])
                .map(|(p, o)| p * Complex64::from_polar(amp, *o))
                .collect()
        })
        .collect();
    ReflectionPlan { phi }
}

/// Shrinks reflection amplitudes until every SINR constraint holds.
fn restore_sinr(sc: &Scenario, plan: &FlightPlan, phi: &mut ReflectionPlan) -> Result<()> {
    let stats = ChannelStats::at_points(sc, plan.hover_points());
    for _ in 0..60 {
        if sinr_slack(sc, &stats, phi) >= 0.0 {
            return Ok(());
        }
        phi.phi.iter_mut().flatten().for_each(|c| *c *= 0.5);
    }
    let zero = ReflectionPlan::zeros(plan.num_hover(), sc.num_elements);
    if sinr_slack(sc, &stats, &zero) >= 0.0 {
        *phi = zero;
        return Ok(());
    }
    Err(Error::Initialization("SINR requirement cannot be met at the initial hover points".into()))
}

fn initialize_from(sc: &Scenario, mut plan: FlightPlan, offsets: &[Vec<f64>]) -> Result<(ReflectionPlan, FlightPlan)> {
    sc.validate()?;
    for _ in 0..=MAX_DOUBLINGS {
        let mut phi = cophased(sc, &plan, offsets);
        restore_sinr(sc, &plan, &mut phi)?;
        let stats = ChannelStats::at_points(sc, plan.hover_points());
        if min_harvest(sc, &stats, &plan, &phi) >= 1.0 {
            rescale_hover_times(sc, &mut plan, &phi);
            return Ok((phi, plan));
        }
        plan.hover_times.iter_mut().for_each(|t| *t *= 2.0);
    }
    let phi = cophased(sc, &plan, offsets);
    let stats = ChannelStats::at_points(sc, plan.hover_points());
    let worst = harvest_aggregates(sc, &stats, &plan)
        .into_iter()
        .flatten()
        .min_by(|a, b| a.value(&stats, &phi).total_cmp(&b.value(&stats, &phi)))
        .map(|u| u.k + 1)
        .unwrap_or(0);
    Err(Error::Initialization(format!(
        "harvested energy requirement of user {worst} not met after {MAX_DOUBLINGS} hover-time doublings"
    )))
}

/// Uniform hover points with the configured hover time, co-phased reflection
/// vectors, and hover times doubled until every energy requirement holds.
pub fn initialize(sc: &Scenario) -> Result<(ReflectionPlan, FlightPlan)> {
    let plan = FlightPlan::uniform(sc, sc.algorithm.initial_hover_time);
    let offsets = vec![vec![0.0; sc.num_elements]; sc.num_hover()];
    initialize_from(sc, plan, &offsets)
}

/// As `initialize`, with hover points jittered by up to 5 m and random phase
/// offsets on the reflection vectors.
pub fn initialize_seeded(sc: &Scenario, seed: u64) -> Result<(ReflectionPlan, FlightPlan)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = FlightPlan::uniform(sc, sc.algorithm.initial_hover_time);
    let n = plan.waypoints.len();
    for q in plan.waypoints[1..n - 1].iter_mut() {
        *q += Point::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    }
    let offsets: Vec<Vec<f64>> = (0..sc.num_hover())
        .map(|_| (0..sc.num_elements).map(|_| rng.random_range(-PI..PI)).collect())
        .collect();
    initialize_from(sc, plan, &offsets)
}

/// Runs the alternating scheme from the deterministic initializer.
pub fn run_algorithm1(sc: &Scenario) -> Result<RunResult> {
    let (phi, plan) = initialize(sc)?;
    run_from(sc, phi, plan)
}

/// Runs the alternating scheme from a feasible starting point.
pub fn run_from(sc: &Scenario, phi: ReflectionPlan, plan: FlightPlan) -> Result<RunResult> {
    sc.validate()?;
    plan.validate(sc)?;
    phi.validate(sc)?;
    let mut phi = phi;
    let mut plan = plan;
    let mut trace = Vec::new();
    let mut prev = system_energy(sc, &plan).total;
    let mut small_steps = 0;
    let mut termination = Termination::MaxOuterIterations;
    let mut outer = 0;

    for x in 1..=sc.algorithm.max_outer_iters {
        outer = x;
        let traj = match solve_trajectory_sca(sc, &phi, &plan) {
            Ok(t) => t,
            Err(e) => {
                termination = Termination::StageFailure(e.to_string());
                break;
            }
        };
        trace.extend(traj.trace.into_iter().map(|mut r| {
            r.set_outer(x);
            r
        }));
        plan = traj.plan;

        let stats = ChannelStats::at_points(sc, plan.hover_points());
        let f_old = min_harvest(sc, &stats, &plan, &phi);
        let phase = match solve_phase_sca(sc, &stats, &plan, &phi) {
            Ok(p) => p,
            Err(e) => {
                termination = Termination::StageFailure(e.to_string());
                break;
            }
        };
        trace.extend(phase.trace.into_iter().map(|mut r| {
            r.set_outer(x);
            r
        }));
        let accepted = phase.min_harvest > f_old;
        if accepted {
            phi = phase.phi;
        }
        let f = if accepted { phase.min_harvest } else { f_old };

        let total = system_energy(sc, &plan).total;
        trace.push(TraceRow::Outer {
            x,
            total_energy: total,
            min_harvest: f,
            phi_accepted: accepted,
            fluctuation: ((total - prev) / prev).max(0.0),
        });
        let diagnostic = traj.diagnostic.or(phase.diagnostic);
        if let Some(d) = diagnostic {
            termination = Termination::StageFailure(d);
            break;
        }
        if (prev - total).abs() <= sc.algorithm.tolerance * prev {
            small_steps += 1;
            if small_steps >= 2 {
                termination = Termination::Converged;
                break;
            }
        } else {
            small_steps = 0;
        }
        prev = total;
    }

    Ok(RunResult {
        energy: system_energy(sc, &plan),
        phi,
        plan,
        trace,
        termination,
        outer_iterations: outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sca_trajectory::{effective_cap, exact_audit};

    fn small(mode: RisMode) -> Scenario {
        Scenario::reference().with_elements(8).with_mode(mode)
    }

    #[test]
    fn zero_requirement_keeps_initial_hover_time() {
        let mut sc = small(RisMode::Active);
        sc.energy_requirements = vec![0.0; 5];
        let (_, plan) = initialize(&sc).unwrap();
        assert!(plan.hover_times.iter().all(|t| *t == 2.0));
    }

    #[test]
    fn mild_requirement_needs_no_doubling() {
        let mut sc = small(RisMode::Passive);
        sc.energy_requirements = vec![1e-9; 5];
        let (_, plan) = initialize(&sc).unwrap();
        assert!(plan.hover_times.iter().all(|t| *t <= 2.0));
    }

    #[test]
    fn reference_initialization_passes_audit() {
        let sc = Scenario::reference();
        let (phi, plan) = initialize(&sc).unwrap();
        let a = exact_audit(&sc, &plan, &phi, effective_cap(&sc, &plan));
        assert!(a.max_violation() <= 1e-9, "{a:?}");
        assert!((a.min_harvest - 1.0).abs() < 1e-9);
    }

    #[test]
    fn impossible_requirement_reports_user() {
        let mut sc = small(RisMode::Passive);
        sc.energy_requirements[2] = 1e6;
        match initialize(&sc) {
            Err(Error::Initialization(m)) => assert!(m.contains("user 3"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seeded_initialization_is_deterministic() {
        let sc = small(RisMode::Active);
        let a = initialize_seeded(&sc, 11).unwrap();
        let b = initialize_seeded(&sc, 11).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_ne!(a.1, initialize_seeded(&sc, 12).unwrap().1);
    }

    #[test]
    fn single_outer_iteration() {
        let mut sc = small(RisMode::Active);
        sc.algorithm.max_outer_iters = 1;
        let r = run_algorithm1(&sc).unwrap();
        let outer = r.trace.iter().filter(|t| matches!(t, TraceRow::Outer { .. })).count();
        assert_eq!(outer, 1);
        assert!(r.trace.iter().any(|t| matches!(t, TraceRow::Trajectory { outer: 1, .. })));
        assert!(r.trace.iter().any(|t| matches!(t, TraceRow::Phase { outer: 1, .. })));
        assert_eq!(r.termination, Termination::MaxOuterIterations);
    }

    #[test]
    fn reported_energy_matches_recomputation() {
        for mode in [RisMode::Active, RisMode::Passive] {
            let sc = small(mode);
            let r = run_algorithm1(&sc).unwrap();
            let again = system_energy(&sc, &r.plan).total;
            assert!((r.energy.total - again).abs() <= 1e-9 * again);
            assert!(r.min_harvest(&sc) >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn accepted_phi_never_lowers_min_harvest() {
        let sc = small(RisMode::Active);
        let r = run_algorithm1(&sc).unwrap();
        let mut prev_e = f64::INFINITY;
        for row in &r.trace {
            if let TraceRow::Outer { min_harvest, total_energy, fluctuation, .. } = row {
                assert!(*min_harvest >= 1.0 - 1e-9);
                assert!(*total_energy <= prev_e);
                assert_eq!(*fluctuation, 0.0);
                prev_e = *total_energy;
            }
        }
    }
}
