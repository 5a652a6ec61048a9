//! TOML scenario files.
//!
//! ```toml
//! [geometry]
//! ris_position = [0.0, 0.0]
//! ris_height_m = 10.0
//! users = [[-30.0, 0.0], [30.0, 0.0]]
//! uav_height_m = 20.0
//! uav_start = [-35.0, 0.0]
//! uav_end = [35.0, 0.0]
//! num_segments = 5                  # default 5
//!
//! [rf]                              # every key optional
//! num_elements = 32
//! wavelength_m = 1.0
//! element_spacing_m = 0.5           # default wavelength / 2
//! rician_direct = 10.0              # also rician_uav_ris, rician_ris_user
//! pathloss_direct = 2.4             # pathloss_uav_ris = 2.3, pathloss_ris_user = 2.3
//! reference_gain_db = -30.0         # or reference_gain (linear)
//! noise_user_dbm = -80.0            # or noise_user_w
//! noise_ris_dbm = -80.0             # or noise_ris_w
//! ris_mode = "active"
//!
//! [power]                           # every key optional
//! tx_power_w = 0.2                  # scalar or one entry per user
//! split_ratio = 0.5
//! gamma_db = -10.0                  # or gamma (linear); scalar or per user
//! e_req_mj = 0.04                   # or e_req_j; scalar or per user
//! ris_energy_budget_j = 20.0
//! cruise_speed_mps = 18.3
//! radiated_power_w = 1.0            # default: sum of tx_power_w
//!
//! [propulsion]                      # optional, rotary-wing defaults
//! [algorithm]                       # optional
//! ```
//!
//! Keys ending in `_db`/`_dbm`/`_mj` are converted at load time; the
//! serializer writes linear keys only so that a load/serialize round trip is
//! exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{
    AlgorithmConfig, PathlossExponents, Point, Propulsion, RicianFactors, RisMode, Scenario,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn expand(&self, k: usize, key: &str) -> Result<Vec<f64>> {
        match self {
            OneOrMany::One(v) => Ok(vec![*v; k]),
            OneOrMany::Many(v) if v.len() == k => Ok(v.clone()),
            OneOrMany::Many(v) => Err(Error::Validation(format!(
                "{key} has {} entries for {k} users",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    geometry: GeometryBlock,
    #[serde(default)]
    rf: RfBlock,
    #[serde(default)]
    power: PowerBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    propulsion: Option<PropulsionBlock>,
    #[serde(default)]
    algorithm: AlgorithmBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryBlock {
    ris_position: [f64; 2],
    ris_height_m: f64,
    users: Vec<[f64; 2]>,
    uav_height_m: f64,
    uav_start: [f64; 2],
    uav_end: [f64; 2],
    #[serde(default = "defaults::num_segments")]
    num_segments: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RfBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    num_elements: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wavelength_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    element_spacing_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rician_direct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rician_uav_ris: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rician_ris_user: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pathloss_direct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pathloss_uav_ris: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pathloss_ris_user: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_gain_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_user_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_user_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_ris_dbm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_ris_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ris_mode: Option<RisMode>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    tx_power_w: Option<OneOrMany>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_db: Option<OneOrMany>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<OneOrMany>,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_req_mj: Option<OneOrMany>,
    #[serde(skip_serializing_if = "Option::is_none")]
    e_req_j: Option<OneOrMany>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ris_energy_budget_j: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cruise_speed_mps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    radiated_power_w: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PropulsionBlock {
    blade_profile_power_w: f64,
    induced_power_w: f64,
    tip_speed_mps: f64,
    mean_induced_velocity_mps: f64,
    fuselage_drag_ratio: f64,
    air_density_kg_m3: f64,
    rotor_solidity: f64,
    rotor_disc_area_m2: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgorithmBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_outer_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_trajectory_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_phase_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_max_iter: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hover_time_cap_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_hover_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_hover_time_s: Option<f64>,
}

mod defaults {
    pub fn num_segments() -> usize {
        5
    }
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn pick<T>(key: &str, log_form: Option<T>, lin_form: Option<T>) -> Result<Option<(T, bool)>> {
    match (log_form, lin_form) {
        (Some(_), Some(_)) => Err(Error::Parse(format!("both logarithmic and linear forms of `{key}` given"))),
        (Some(v), None) => Ok(Some((v, true))),
        (None, Some(v)) => Ok(Some((v, false))),
        (None, None) => Ok(None),
    }
}

fn point(p: [f64; 2]) -> Point {
    Point::new(p[0], p[1])
}

/// Parses and validates a scenario from TOML text.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let sc = from_config(cfg)?;
    sc.validate()?;
    Ok(sc)
}

pub fn load_scenario_file(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}

fn from_config(cfg: ConfigFile) -> Result<Scenario> {
    let g = cfg.geometry;
    let k = g.users.len();
    let rf = cfg.rf;
    let pw = cfg.power;
    let base = Scenario::reference();

    let wavelength = rf.wavelength_m.unwrap_or(base.wavelength);
    let reference_gain = match pick("reference_gain", rf.reference_gain_db, rf.reference_gain)? {
        Some((v, true)) => db_to_linear(v),
        Some((v, false)) => v,
        None => base.reference_gain,
    };
    let noise = |key: &str, dbm: Option<f64>, w: Option<f64>, default: f64| -> Result<f64> {
        Ok(match pick(key, dbm, w)? {
            Some((v, true)) => dbm_to_watts(v),
            Some((v, false)) => v,
            None => default,
        })
    };
    let noise_user = noise("noise_user", rf.noise_user_dbm, rf.noise_user_w, base.noise_user)?;
    let noise_ris = noise("noise_ris", rf.noise_ris_dbm, rf.noise_ris_w, base.noise_ris)?;

    let tx_power = match &pw.tx_power_w {
        Some(v) => v.expand(k, "tx_power_w")?,
        None => vec![0.2; k],
    };
    let sinr_thresholds = match pick("gamma", pw.gamma_db.as_ref(), pw.gamma.as_ref())? {
        Some((v, true)) => v.expand(k, "gamma_db")?.into_iter().map(db_to_linear).collect(),
        Some((v, false)) => v.expand(k, "gamma")?,
        None => vec![0.1; k],
    };
    let energy_requirements = match pick("e_req", pw.e_req_mj.as_ref(), pw.e_req_j.as_ref())? {
        Some((v, true)) => v.expand(k, "e_req_mj")?.into_iter().map(|e| e * 1e-3).collect(),
        Some((v, false)) => v.expand(k, "e_req_j")?,
        None => vec![0.04e-3; k],
    };
    let radiated_power = pw.radiated_power_w.unwrap_or_else(|| tx_power.iter().sum());

    let propulsion = cfg
        .propulsion
        .map(|p| Propulsion {
            blade_profile_power: p.blade_profile_power_w,
            induced_power: p.induced_power_w,
            tip_speed: p.tip_speed_mps,
            mean_induced_velocity: p.mean_induced_velocity_mps,
            fuselage_drag_ratio: p.fuselage_drag_ratio,
            air_density: p.air_density_kg_m3,
            rotor_solidity: p.rotor_solidity,
            rotor_disc_area: p.rotor_disc_area_m2,
        })
        .unwrap_or_default();

    let a = cfg.algorithm;
    let d = AlgorithmConfig::default();
    let algorithm = AlgorithmConfig {
        tolerance: a.tolerance.unwrap_or(d.tolerance),
        max_outer_iters: a.max_outer_iters.unwrap_or(d.max_outer_iters),
        max_trajectory_iters: a.max_trajectory_iters.unwrap_or(d.max_trajectory_iters),
        max_phase_iters: a.max_phase_iters.unwrap_or(d.max_phase_iters),
        solver_tol: a.solver_tol.unwrap_or(d.solver_tol),
        solver_max_iter: a.solver_max_iter.unwrap_or(d.solver_max_iter),
        hover_time_cap: a.hover_time_cap_s.unwrap_or(d.hover_time_cap),
        min_hover_time: a.min_hover_time_s.unwrap_or(d.min_hover_time),
        initial_hover_time: a.initial_hover_time_s.unwrap_or(d.initial_hover_time),
    };

    Ok(Scenario {
        ris_position: point(g.ris_position),
        ris_height: g.ris_height_m,
        users: g.users.into_iter().map(point).collect(),
        uav_height: g.uav_height_m,
        uav_start: point(g.uav_start),
        uav_end: point(g.uav_end),
        num_segments: g.num_segments,
        num_elements: rf.num_elements.unwrap_or(base.num_elements),
        wavelength,
        element_spacing: rf.element_spacing_m.unwrap_or(wavelength / 2.0),
        rician: RicianFactors {
            direct: rf.rician_direct.unwrap_or(base.rician.direct),
            uav_ris: rf.rician_uav_ris.unwrap_or(base.rician.uav_ris),
            ris_user: rf.rician_ris_user.unwrap_or(base.rician.ris_user),
        },
        pathloss: PathlossExponents {
            direct: rf.pathloss_direct.unwrap_or(base.pathloss.direct),
            uav_ris: rf.pathloss_uav_ris.unwrap_or(base.pathloss.uav_ris),
            ris_user: rf.pathloss_ris_user.unwrap_or(base.pathloss.ris_user),
        },
        reference_gain,
        tx_power,
        split_ratio: pw.split_ratio.unwrap_or(base.split_ratio),
        noise_user,
        noise_ris,
        sinr_thresholds,
        energy_requirements,
        ris_energy_budget: pw.ris_energy_budget_j.unwrap_or(base.ris_energy_budget),
        cruise_speed: pw.cruise_speed_mps.unwrap_or(base.cruise_speed),
        radiated_power,
        propulsion,
        algorithm,
        ris_mode: rf.ris_mode.unwrap_or(base.ris_mode),
    })
}

/// Serializes a scenario to TOML using linear-unit keys.
pub fn to_config_text(sc: &Scenario) -> String {
    let xy = |p: Point| [p.re, p.im];
    let p = sc.propulsion;
    let a = sc.algorithm;
    let cfg = ConfigFile {
        geometry: GeometryBlock {
            ris_position: xy(sc.ris_position),
            ris_height_m: sc.ris_height,
            users: sc.users.iter().copied().map(xy).collect(),
            uav_height_m: sc.uav_height,
            uav_start: xy(sc.uav_start),
            uav_end: xy(sc.uav_end),
            num_segments: sc.num_segments,
        },
        rf: RfBlock {
            num_elements: Some(sc.num_elements),
            wavelength_m: Some(sc.wavelength),
            element_spacing_m: Some(sc.element_spacing),
            rician_direct: Some(sc.rician.direct),
            rician_uav_ris: Some(sc.rician.uav_ris),
            rician_ris_user: Some(sc.rician.ris_user),
            pathloss_direct: Some(sc.pathloss.direct),
            pathloss_uav_ris: Some(sc.pathloss.uav_ris),
            pathloss_ris_user: Some(sc.pathloss.ris_user),
            reference_gain: Some(sc.reference_gain),
            noise_user_w: Some(sc.noise_user),
            noise_ris_w: Some(sc.noise_ris),
            ris_mode: Some(sc.ris_mode),
            ..Default::default()
        },
        power: PowerBlock {
            tx_power_w: Some(OneOrMany::Many(sc.tx_power.clone())),
            split_ratio: Some(sc.split_ratio),
            gamma: Some(OneOrMany::Many(sc.sinr_thresholds.clone())),
            e_req_j: Some(OneOrMany::Many(sc.energy_requirements.clone())),
            ris_energy_budget_j: Some(sc.ris_energy_budget),
            cruise_speed_mps: Some(sc.cruise_speed),
            radiated_power_w: Some(sc.radiated_power),
            ..Default::default()
        },
        propulsion: Some(PropulsionBlock {
            blade_profile_power_w: p.blade_profile_power,
            induced_power_w: p.induced_power,
            tip_speed_mps: p.tip_speed,
            mean_induced_velocity_mps: p.mean_induced_velocity,
            fuselage_drag_ratio: p.fuselage_drag_ratio,
            air_density_kg_m3: p.air_density,
            rotor_solidity: p.rotor_solidity,
            rotor_disc_area_m2: p.rotor_disc_area,
        }),
        algorithm: AlgorithmBlock {
            tolerance: Some(a.tolerance),
            max_outer_iters: Some(a.max_outer_iters),
            max_trajectory_iters: Some(a.max_trajectory_iters),
            max_phase_iters: Some(a.max_phase_iters),
            solver_tol: Some(a.solver_tol),
            solver_max_iter: Some(a.solver_max_iter),
            hover_time_cap_s: Some(a.hover_time_cap),
            min_hover_time_s: Some(a.min_hover_time),
            initial_hover_time_s: Some(a.initial_hover_time),
        },
    };
    toml::to_string(&cfg).expect("scenario serializes to TOML")
}

/// The reference five-user layout as a config file.
pub const REFERENCE_CONFIG: &str = r#"# Five users on a 30 m semicircle, RIS at the origin.
[geometry]
ris_position = [0.0, 0.0]
ris_height_m = 10.0
users = [
    [-30.0, 0.0],
    [-21.213203435596427, 21.213203435596427],
    [0.0, 30.0],
    [30.0, 0.0],
    [10.606601717798213, 10.606601717798213],
]
uav_height_m = 20.0
uav_start = [-35.0, 0.0]
uav_end = [35.0, 0.0]
num_segments = 5

[rf]
num_elements = 32
wavelength_m = 1.0
element_spacing_m = 0.5
rician_direct = 10.0
rician_uav_ris = 10.0
rician_ris_user = 10.0
pathloss_direct = 2.4
pathloss_uav_ris = 2.3
pathloss_ris_user = 2.3
reference_gain_db = -30.0
noise_user_dbm = -80.0
noise_ris_dbm = -80.0
ris_mode = "active"

[power]
tx_power_w = 0.2
split_ratio = 0.5
gamma_db = -10.0
e_req_mj = 0.04
ris_energy_budget_j = 20.0
cruise_speed_mps = 18.3
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_loads() {
        let sc = load_scenario(REFERENCE_CONFIG).unwrap();
        assert_eq!(sc.num_users(), 5);
        assert_eq!(sc.num_elements, 32);
        for g in &sc.sinr_thresholds {
            assert!((g - 0.1).abs() < 1e-15);
        }
        for e in &sc.energy_requirements {
            assert!((e - 4e-5).abs() < 1e-18);
        }
        assert!((sc.reference_gain - 1e-3).abs() < 1e-18);
        assert!((sc.noise_user - 1e-11).abs() < 1e-24);
        assert!((sc.radiated_power - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_config_matches_builtin() {
        let sc = load_scenario(REFERENCE_CONFIG).unwrap();
        let r = Scenario::reference();
        for (a, b) in sc.users.iter().zip(&r.users) {
            assert!((a - b).norm() < 1e-12);
        }
        assert_eq!(sc.propulsion, r.propulsion);
    }

    #[test]
    fn split_ratio_bound() {
        let text = REFERENCE_CONFIG.replace("split_ratio = 0.5", "split_ratio = 1.3");
        let err = load_scenario(&text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("split_ratio out of [0,1]"));
    }

    #[test]
    fn propulsion_defaults_when_block_absent() {
        let sc = load_scenario(REFERENCE_CONFIG).unwrap();
        let p = sc.propulsion;
        assert_eq!(p.blade_profile_power, 79.8563);
        assert_eq!(p.induced_power, 88.6279);
        assert_eq!(p.tip_speed, 120.0);
        assert_eq!(p.mean_induced_velocity, 4.03);
        assert_eq!(p.fuselage_drag_ratio, 0.6);
        assert_eq!(p.air_density, 1.225);
        assert_eq!(p.rotor_solidity, 0.05);
        assert_eq!(p.rotor_disc_area, 0.503);
    }

    #[test]
    fn malformed_text_is_parse_error() {
        assert!(matches!(load_scenario("[geometry\nfoo"), Err(Error::Parse(_))));
        assert!(matches!(load_scenario("[rf]\nnum_elements = 4\n"), Err(Error::Parse(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = REFERENCE_CONFIG.replace("[power]", "[power]\nsplit = 0.5");
        assert!(matches!(load_scenario(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn conflicting_units_rejected() {
        let text = REFERENCE_CONFIG.replace("gamma_db = -10.0", "gamma_db = -10.0\ngamma = 0.1");
        assert!(matches!(load_scenario(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn per_user_lists_checked() {
        let text = REFERENCE_CONFIG.replace("tx_power_w = 0.2", "tx_power_w = [0.2, 0.2]");
        assert!(matches!(load_scenario(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn round_trip_is_identity() {
        let sc = load_scenario(REFERENCE_CONFIG).unwrap();
        let again = load_scenario(&to_config_text(&sc)).unwrap();
        assert_eq!(sc, again);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn round_trip_random(
                m in 1usize..80,
                eta in 0.0f64..1.0,
                gamma in 0.001f64..0.2,
                ereq in 0.0f64..1e-3,
                budget in 0.1f64..100.0,
                ux in -50.0f64..50.0,
                uy in -50.0f64..50.0,
                passive in proptest::bool::ANY,
            ) {
                let mut sc = Scenario::reference();
                sc.num_elements = m;
                sc.split_ratio = eta;
                sc.sinr_thresholds = vec![gamma; 5];
                sc.energy_requirements[2] = ereq;
                sc.ris_energy_budget = budget;
                sc.users[1] = Point::new(ux, uy);
                if passive { sc.ris_mode = RisMode::Passive; }
                let again = load_scenario(&to_config_text(&sc)).unwrap();
                prop_assert_eq!(sc, again);
            }
        }
    }
}
