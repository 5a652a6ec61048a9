//! Rotary-wing propulsion power and mission energy accounting.

use serde::Serialize;

use crate::scenario::{FlightPlan, Propulsion, RisMode, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub flight_energy: f64,
    pub hover_energy: f64,
    pub radiated_energy: f64,
    pub ris_energy: f64,
    pub total: f64,
}

/// Propulsion power at speed `v` (W). The induced term is evaluated as
/// `1 / sqrt(sqrt(1 + x^2) + x)` with `x = v^2 / (2 v0^2)`, which is the same
/// quantity without the cancellation at high speed.
pub fn propulsion_power(p: &Propulsion, v: f64) -> f64 {
    let blade = p.blade_profile_power * (1.0 + 3.0 * v * v / (p.tip_speed * p.tip_speed));
    let x = v * v / (2.0 * p.mean_induced_velocity * p.mean_induced_velocity);
    let induced = p.induced_power / ((1.0 + x * x).sqrt() + x).sqrt();
    let parasite = 0.5 * p.fuselage_drag_ratio * p.air_density * p.rotor_solidity * p.rotor_disc_area * v.powi(3);
    blade + induced + parasite
}

/// Hover power `P_p(0) = P_0 + P_i`.
pub fn hover_power(p: &Propulsion) -> f64 {
    p.blade_profile_power + p.induced_power
}

/// Flight cost per meter of path at the cruise speed.
pub fn flight_power_per_meter(sc: &Scenario) -> f64 {
    propulsion_power(&sc.propulsion, sc.cruise_speed) / sc.cruise_speed
}

/// Energy spent per second of hovering (propulsion plus radiated power).
pub fn hover_cost_rate(sc: &Scenario) -> f64 {
    hover_power(&sc.propulsion) + sc.radiated_power
}

/// UAV energy of a plan; `ris_energy` is left at zero.
pub fn uav_total_energy(sc: &Scenario, plan: &FlightPlan) -> EnergyBreakdown {
    let flight_energy = flight_power_per_meter(sc) * plan.path_length();
    let t: f64 = plan.hover_times.iter().sum();
    let hover_energy = hover_power(&sc.propulsion) * t;
    let radiated_energy = sc.radiated_power * t;
    EnergyBreakdown {
        flight_energy,
        hover_energy,
        radiated_energy,
        ris_energy: 0.0,
        total: flight_energy + hover_energy + radiated_energy,
    }
}

/// System accounting: the active surface is charged its full budget at every
/// hover point.
pub fn system_energy(sc: &Scenario, plan: &FlightPlan) -> EnergyBreakdown {
    let mut e = uav_total_energy(sc, plan);
    if sc.ris_mode == RisMode::Active {
        e.ris_energy = sc.num_hover() as f64 * sc.ris_energy_budget;
        e.total += e.ris_energy;
    }
    e
}
