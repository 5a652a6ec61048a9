//! Problem instance, flight/reflection plans and link geometry.
//!
//! Horizontal coordinates are complex numbers `x + jy` in meters. The UAV
//! flies at a fixed altitude, users sit on the ground, and the RIS is a
//! uniform linear array mounted at `ris_height`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizontal coordinate `x + jy` (meters).
pub type Point = Complex64;

/// Whether the RIS amplifies (active) or only reflects (passive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RisMode {
    Active,
    Passive,
}

impl std::fmt::Display for RisMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RisMode::Active => f.write_str("active"),
            RisMode::Passive => f.write_str("passive"),
        }
    }
}

impl std::str::FromStr for RisMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "active" => Ok(RisMode::Active),
            "passive" => Ok(RisMode::Passive),
            other => Err(Error::Parse(format!("unknown ris mode `{other}`"))),
        }
    }
}

/// Rician K-factors of the three links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicianFactors {
    /// UAV to user.
    pub direct: f64,
    /// UAV to RIS.
    pub uav_ris: f64,
    /// RIS to user.
    pub ris_user: f64,
}

/// Path-loss exponents of the three links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathlossExponents {
    pub direct: f64,
    pub uav_ris: f64,
    pub ris_user: f64,
}

/// Rotary-wing propulsion constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propulsion {
    /// Blade profile power in hover, W.
    pub blade_profile_power: f64,
    /// Induced power in hover, W.
    pub induced_power: f64,
    /// Rotor blade tip speed, m/s.
    pub tip_speed: f64,
    /// Mean rotor induced velocity in hover, m/s.
    pub mean_induced_velocity: f64,
    /// Fuselage drag ratio.
    pub fuselage_drag_ratio: f64,
    /// Air density, kg/m^3.
    pub air_density: f64,
    /// Rotor solidity.
    pub rotor_solidity: f64,
    /// Rotor disc area, m^2.
    pub rotor_disc_area: f64,
}

impl Default for Propulsion {
    fn default() -> Self {
        Self {
            blade_profile_power: 79.8563,
            induced_power: 88.6279,
            tip_speed: 120.0,
            mean_induced_velocity: 4.03,
            fuselage_drag_ratio: 0.6,
            air_density: 1.225,
            rotor_solidity: 0.05,
            rotor_disc_area: 0.503,
        }
    }
}

/// Iteration caps and tolerances of the alternating SCA scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmConfig {
    /// Relative stopping tolerance shared by all loops.
    pub tolerance: f64,
    /// Outer alternations.
    pub max_outer_iters: usize,
    /// Trajectory SCA iterations per alternation.
    pub max_trajectory_iters: usize,
    /// Reflection SCA iterations per alternation.
    pub max_phase_iters: usize,
    /// Conic solver tolerance.
    pub solver_tol: f64,
    /// Conic solver iteration cap.
    pub solver_max_iter: u32,
    /// Upper bound on a single hover time, s.
    pub hover_time_cap: f64,
    /// Floor substituted for zero hover times where `1/t` is linearized, s.
    pub min_hover_time: f64,
    /// Hover time used by the initializer, s.
    pub initial_hover_time: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_outer_iters: 400,
            max_trajectory_iters: 30,
            max_phase_iters: 20,
            solver_tol: 1e-8,
            solver_max_iter: 200,
            hover_time_cap: 1e3,
            min_hover_time: 1e-3,
            initial_hover_time: 2.0,
        }
    }
}

/// Immutable problem instance. All quantities are SI and linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub ris_position: Point,
    pub ris_height: f64,
    pub users: Vec<Point>,
    pub uav_height: f64,
    pub uav_start: Point,
    pub uav_end: Point,
    /// Number of straight flight segments `L`; there are `L - 1` hover points.
    pub num_segments: usize,
    pub num_elements: usize,
    pub wavelength: f64,
    pub element_spacing: f64,
    pub rician: RicianFactors,
    pub pathloss: PathlossExponents,
    /// Channel gain at 1 m (linear).
    pub reference_gain: f64,
    /// Per-user transmit power, W.
    pub tx_power: Vec<f64>,
    /// Fraction of received power routed to the information decoder.
    pub split_ratio: f64,
    /// Receiver noise variance, W.
    pub noise_user: f64,
    /// RIS amplifier noise variance, W.
    pub noise_ris: f64,
    /// Linear SINR thresholds.
    pub sinr_thresholds: Vec<f64>,
    /// Harvested-energy requirements, J.
    pub energy_requirements: Vec<f64>,
    /// RIS energy budget per hover point, J.
    pub ris_energy_budget: f64,
    pub cruise_speed: f64,
    /// Radiated power while hovering, W.
    pub radiated_power: f64,
    pub propulsion: Propulsion,
    pub algorithm: AlgorithmConfig,
    pub ris_mode: RisMode,
}

impl Scenario {
    /// The five-user semicircle layout with an active 32-element RIS.
    pub fn reference() -> Self {
        let r = 15.0 * 2f64.sqrt();
        let users = vec![
            Point::new(-30.0, 0.0),
            Point::new(-r, r),
            Point::new(0.0, 30.0),
            Point::new(30.0, 0.0),
            Point::new(r / 2.0, r / 2.0),
        ];
        let k = users.len();
        Self {
            ris_position: Point::new(0.0, 0.0),
            ris_height: 10.0,
            users,
            uav_height: 20.0,
            uav_start: Point::new(-35.0, 0.0),
            uav_end: Point::new(35.0, 0.0),
            num_segments: 5,
            num_elements: 32,
            wavelength: 1.0,
            element_spacing: 0.5,
            rician: RicianFactors {
                direct: 10.0,
                uav_ris: 10.0,
                ris_user: 10.0,
            },
            pathloss: PathlossExponents {
                direct: 2.4,
                uav_ris: 2.3,
                ris_user: 2.3,
            },
            reference_gain: 1e-3,
            tx_power: vec![0.2; k],
            split_ratio: 0.5,
            noise_user: 1e-11,
            noise_ris: 1e-11,
            sinr_thresholds: vec![0.1; k],
            energy_requirements: vec![0.04e-3; k],
            ris_energy_budget: 20.0,
            cruise_speed: 18.3,
            radiated_power: 0.2 * k as f64,
            propulsion: Propulsion::default(),
            algorithm: AlgorithmConfig::default(),
            ris_mode: RisMode::Active,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Number of hover points, `L - 1`.
    pub fn num_hover(&self) -> usize {
        self.num_segments - 1
    }

    pub fn total_tx_power(&self) -> f64 {
        self.tx_power.iter().sum()
    }

    /// Transmit power of every user other than `k`.
    pub fn interference_power(&self, k: usize) -> f64 {
        self.total_tx_power() - self.tx_power[k]
    }

    /// RIS noise variance seen by the model; a passive surface adds none.
    pub fn effective_ris_noise(&self) -> f64 {
        match self.ris_mode {
            RisMode::Active => self.noise_ris,
            RisMode::Passive => 0.0,
        }
    }

    /// `(1 - eta) p_k / E_k^req`; `None` when user `k` has no requirement.
    pub fn harvest_weight(&self, k: usize) -> Option<f64> {
        let req = self.energy_requirements[k];
        (req > 0.0).then(|| (1.0 - self.split_ratio) * self.tx_power[k] / req)
    }

    /// `eta (p_k - gamma_k sum_{j != k} p_j)`, the SINR margin coefficient.
    pub fn sinr_margin(&self, k: usize) -> f64 {
        self.split_ratio * (self.tx_power[k] - self.sinr_thresholds[k] * self.interference_power(k))
    }

    pub fn with_mode(mut self, mode: RisMode) -> Self {
        self.ris_mode = mode;
        self
    }

    pub fn with_elements(mut self, m: usize) -> Self {
        self.num_elements = m;
        self
    }

    /// Checks every invariant and reports the first violation.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        let k = self.users.len();
        if k == 0 {
            return fail("at least one user is required".into());
        }
        if self.num_elements == 0 {
            return fail("num_elements must be at least 1".into());
        }
        if self.num_segments < 2 {
            return fail("num_segments must be at least 2".into());
        }
        for (name, h) in [("ris_height", self.ris_height), ("uav_height", self.uav_height)] {
            if !(h > 0.0) {
                return fail(format!("{name} must be positive"));
            }
        }
        if !(self.uav_height > self.ris_height) {
            return fail("uav_height must exceed ris_height".into());
        }
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return fail("split_ratio out of [0,1]".into());
        }
        if !(self.wavelength > 0.0) {
            return fail("wavelength must be positive".into());
        }
        if !(self.element_spacing > 0.0 && self.element_spacing <= self.wavelength) {
            return fail("element_spacing must lie in (0, wavelength]".into());
        }
        for (name, len) in [
            ("tx_power", self.tx_power.len()),
            ("sinr_thresholds", self.sinr_thresholds.len()),
            ("energy_requirements", self.energy_requirements.len()),
        ] {
            if len != k {
                return fail(format!("{name} has {len} entries for {k} users"));
            }
        }
        if self.tx_power.iter().any(|p| !(*p > 0.0)) {
            return fail("tx_power must be positive".into());
        }
        if self.sinr_thresholds.iter().any(|g| !(*g > 0.0)) {
            return fail("sinr thresholds must be positive".into());
        }
        if self.energy_requirements.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return fail("energy requirements must be finite and non-negative".into());
        }
        for (name, v) in [
            ("noise_user", self.noise_user),
            ("noise_ris", self.noise_ris),
            ("reference_gain", self.reference_gain),
            ("cruise_speed", self.cruise_speed),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.ris_mode == RisMode::Active && !(self.ris_energy_budget > 0.0) {
            return fail("ris_energy_budget must be positive for an active RIS".into());
        }
        if !(self.radiated_power >= 0.0) {
            return fail("radiated_power must be non-negative".into());
        }
        let mu = self.rician;
        if [mu.direct, mu.uav_ris, mu.ris_user].iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return fail("rician factors must be finite and non-negative".into());
        }
        let tau = self.pathloss;
        if [tau.direct, tau.uav_ris, tau.ris_user].iter().any(|t| !(*t > 0.0)) {
            return fail("pathloss exponents must be positive".into());
        }
        if tau.uav_ris > 4.0 {
            return fail("pathloss exponent uav_ris must not exceed 4".into());
        }
        let p = self.propulsion;
        if [
            p.blade_profile_power,
            p.induced_power,
            p.tip_speed,
            p.mean_induced_velocity,
            p.air_density,
            p.rotor_disc_area,
        ]
        .iter()
        .any(|v| !(*v > 0.0))
            || p.fuselage_drag_ratio < 0.0
            || p.rotor_solidity < 0.0
        {
            return fail("propulsion constants must be positive".into());
        }
        for kk in 0..k {
            if !(self.sinr_margin(kk) > 0.0) {
                return fail(format!(
                    "user {}: p_k - gamma_k * sum_(j != k) p_j must be positive",
                    kk + 1
                ));
            }
        }
        let a = self.algorithm;
        if !(a.tolerance >= 0.0) || !(a.solver_tol > 0.0) {
            return fail("algorithm tolerances must be positive".into());
        }
        if a.max_outer_iters == 0 || a.max_trajectory_iters == 0 || a.max_phase_iters == 0 {
            return fail("iteration caps must be at least 1".into());
        }
        if !(a.min_hover_time > 0.0) || !(a.initial_hover_time > 0.0) || !(a.hover_time_cap > 0.0) {
            return fail("hover time settings must be positive".into());
        }
        let pts = [self.ris_position, self.uav_start, self.uav_end];
        if pts.iter().chain(self.users.iter()).any(|q| !q.re.is_finite() || !q.im.is_finite()) {
            return fail("coordinates must be finite".into());
        }
        Ok(())
    }
}

/// UAV trajectory: `q_0 .. q_L` (endpoints fixed) and hover times `t_1 .. t_{L-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightPlan {
    pub waypoints: Vec<Point>,
    pub hover_times: Vec<f64>,
}

impl FlightPlan {
    /// Hover points evenly spaced on the start-end segment.
    pub fn uniform(sc: &Scenario, hover_time: f64) -> Self {
        let l = sc.num_segments;
        let waypoints = (0..=l)
            .map(|i| sc.uav_start + (sc.uav_end - sc.uav_start) * (i as f64 / l as f64))
            .collect();
        Self {
            waypoints,
            hover_times: vec![hover_time; l - 1],
        }
    }

    /// Hover position of hover index `i` (0-based, `i < L - 1`).
    pub fn hover(&self, i: usize) -> Point {
        self.waypoints[i + 1]
    }

    pub fn hover_points(&self) -> &[Point] {
        &self.waypoints[1..self.waypoints.len() - 1]
    }

    pub fn num_hover(&self) -> usize {
        self.hover_times.len()
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    pub fn validate(&self, sc: &Scenario) -> Result<()> {
        if self.waypoints.len() != sc.num_segments + 1 || self.hover_times.len() != sc.num_hover() {
            return Err(Error::Validation("flight plan shape does not match scenario".into()));
        }
        if self.waypoints[0] != sc.uav_start || *self.waypoints.last().unwrap() != sc.uav_end {
            return Err(Error::Validation("flight plan endpoints must match scenario".into()));
        }
        if self.hover_times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::Validation("hover times must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Per-hover complex reflection vectors `phi_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionPlan {
    pub phi: Vec<Vec<Complex64>>,
}

impl ReflectionPlan {
    pub fn zeros(num_hover: usize, m: usize) -> Self {
        Self {
            phi: vec![vec![Complex64::new(0.0, 0.0); m]; num_hover],
        }
    }

    pub fn validate(&self, sc: &Scenario) -> Result<()> {
        if self.phi.len() != sc.num_hover() || self.phi.iter().any(|p| p.len() != sc.num_elements) {
            return Err(Error::Validation("reflection plan shape does not match scenario".into()));
        }
        if self.phi.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Validation("reflection coefficients must be finite".into()));
        }
        if sc.ris_mode == RisMode::Passive && self.phi.iter().flatten().any(|c| c.norm() > 1.0 + 1e-9) {
            return Err(Error::Validation("passive reflection amplitude exceeds 1".into()));
        }
        Ok(())
    }
}

/// Distances and array-direction cosines of the three links for one user and
/// one UAV position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    /// UAV to user.
    pub d_direct: f64,
    /// UAV to RIS.
    pub d_uav_ris: f64,
    /// RIS to user.
    pub d_ris_user: f64,
    /// Cosine of the angle of arrival at the RIS.
    pub cos_arrival: f64,
    /// Cosine of the angle of departure from the RIS.
    pub cos_departure: f64,
}

pub fn link_distances(sc: &Scenario, q: Point, k: usize) -> LinkGeometry {
    let user = sc.users[k];
    let d_direct = ((q - user).norm_sqr() + sc.uav_height.powi(2)).sqrt();
    let d_uav_ris = ((q - sc.ris_position).norm_sqr() + (sc.uav_height - sc.ris_height).powi(2)).sqrt();
    let d_ris_user = ((user - sc.ris_position).norm_sqr() + sc.ris_height.powi(2)).sqrt();
    LinkGeometry {
        d_direct,
        d_uav_ris,
        d_ris_user,
        cos_arrival: (sc.ris_position.re - q.re) / d_uav_ris,
        cos_departure: (user.re - sc.ris_position.re) / d_ris_user,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_origin() -> Scenario {
        let mut sc = Scenario::reference();
        sc.users[0] = Point::new(0.0, 0.0);
        sc
    }

    #[test]
    fn vertical_uav_ris_link() {
        let sc = at_origin();
        let g = link_distances(&sc, Point::new(0.0, 0.0), 0);
        assert_eq!(g.d_uav_ris, 10.0);
        assert_eq!(g.cos_arrival, 0.0);
    }

    #[test]
    fn user_under_ris() {
        let sc = at_origin();
        let g = link_distances(&sc, Point::new(3.0, 4.0), 0);
        assert_eq!(g.d_ris_user, 10.0);
        assert_eq!(g.cos_departure, 0.0);
    }

    #[test]
    fn direct_distance_first_user() {
        let sc = Scenario::reference();
        let g = link_distances(&sc, Point::new(-35.0, 0.0), 0);
        assert!((g.d_direct - 425f64.sqrt()).abs() < 1e-12);
        assert!((g.d_direct - 20.6155).abs() < 1e-4);
    }

    #[test]
    fn reference_validates() {
        Scenario::reference().validate().unwrap();
    }

    #[test]
    fn rejects_low_uav() {
        let mut sc = Scenario::reference();
        sc.uav_height = 5.0;
        assert!(matches!(sc.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_hopeless_sinr_margin() {
        let mut sc = Scenario::reference();
        sc.sinr_thresholds = vec![0.3; 5];
        let err = sc.validate().unwrap_err().to_string();
        assert!(err.contains("user 1"), "{err}");
    }

    #[test]
    fn uniform_plan_shape() {
        let sc = Scenario::reference();
        let plan = FlightPlan::uniform(&sc, 2.0);
        plan.validate(&sc).unwrap();
        assert_eq!(plan.hover_points().len(), 4);
        assert!((plan.path_length() - 70.0).abs() < 1e-12);
        assert!((plan.hover(0) - Point::new(-21.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn passive_amplitude_checked() {
        let sc = Scenario::reference().with_mode(RisMode::Passive);
        let mut phi = ReflectionPlan::zeros(4, 32);
        phi.phi[0][0] = Complex64::new(1.5, 0.0);
        assert!(phi.validate(&sc).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn distances_dominate_heights(x in -200.0f64..200.0, y in -200.0f64..200.0, k in 0usize..5) {
                let sc = Scenario::reference();
                let g = link_distances(&sc, Point::new(x, y), k);
                prop_assert!(g.d_direct >= sc.uav_height);
                prop_assert!(g.d_uav_ris >= sc.uav_height - sc.ris_height);
                prop_assert!(g.d_ris_user >= sc.ris_height);
                prop_assert!(g.cos_arrival.abs() <= 1.0 && g.cos_departure.abs() <= 1.0);
            }
        }
    }
}
