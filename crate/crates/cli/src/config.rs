//! TOML scenario files.
//!
//! Every physical quantity carries its unit in the key name. Unknown keys
//! are rejected, and every error names the offending key.

use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use serde::Deserialize;

use quadsafe_core::barrier::{BarrierDomain, BarrierSpec, EcbfGains};
use quadsafe_core::dynamics::rotation_from_euler;
use quadsafe_core::filter::{FallbackPolicy, ScheduledBarrier};
use quadsafe_core::sim::{FilterEnable, Scenario, SinusoidReference, YawMode};
use quadsafe_core::{ControllerGains, QuadParams, QuadState};

use crate::presets;

/// A configuration problem, tied to the key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted key path, e.g. `barrier[1].p_z_m`.
    pub key: String,
    /// What is wrong with it.
    pub reason: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { key: key.into(), reason: reason.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.reason)
        } else {
            write!(f, "{}: {}", self.key, self.reason)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Root of a scenario file.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Timing and fallback.
    #[serde(default)]
    pub simulation: SimulationSection,
    /// State at t = 0.
    #[serde(default)]
    pub initial: InitialSection,
    /// Sinusoidal reference.
    #[serde(default)]
    pub reference: ReferenceSection,
    /// QP enables.
    #[serde(default)]
    pub filters: FiltersSection,
    /// Nominal controller gains.
    #[serde(default)]
    pub controller: ControllerSection,
    /// Vehicle parameters.
    #[serde(default)]
    pub vehicle: VehicleSection,
    /// Barrier schedule.
    #[serde(default, rename = "barrier")]
    pub barriers: Vec<BarrierSection>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
#[allow(missing_docs)]
pub enum FallbackName {
    #[default]
    LeastViolation,
    HoldLast,
    NominalClamped,
}

/// `[simulation]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    /// Simulated time.
    pub duration_s: f64,
    /// Step.
    pub dt_s: f64,
    /// Infeasibility fallback.
    pub fallback: FallbackName,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { duration_s: 40.0, dt_s: 1e-3, fallback: FallbackName::default() }
    }
}

/// `[initial]`.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// `[x, y, z]`.
    pub position_m: [f64; 3],
    /// `[ẋ, ẏ, ż]`.
    pub velocity_mps: [f64; 3],
    /// ZYX `[roll, pitch, yaw]`.
    pub euler_rad: [f64; 3],
    /// `[p, q, r]`.
    pub body_rates_radps: [f64; 3],
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
#[allow(missing_docs)]
pub enum YawModeName {
    #[default]
    Atan2,
    Constant,
}

/// `[reference]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    /// Sinusoid amplitudes.
    pub amplitude_m: [f64; 3],
    /// Sinusoid angular frequencies.
    pub frequency_radps: [f64; 3],
    /// `atan2` or `constant`.
    pub yaw_mode: YawModeName,
    /// Heading for `yaw_mode = "constant"`.
    pub yaw_rad: Option<f64>,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        let r = SinusoidReference::default();
        Self {
            amplitude_m: r.amplitude.into(),
            frequency_radps: r.frequency.into(),
            yaw_mode: YawModeName::Atan2,
            yaw_rad: None,
        }
    }
}

/// `[filters]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiltersSection {
    /// Thrust QP.
    pub high: bool,
    /// Moment QP.
    pub low: bool,
}

impl Default for FiltersSection {
    fn default() -> Self {
        Self { high: true, low: true }
    }
}

/// `[controller]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerSection {
    /// Position proportional gains.
    pub kp_per_s2: [f64; 3],
    /// Position derivative gains.
    pub kd_per_s: [f64; 3],
    /// Attitude-entry regulator gain.
    pub k_r_per_s: f64,
    /// Yaw proportional gain.
    pub k_psi_per_s: f64,
    /// Body-rate gains.
    pub k_omega_per_s: [f64; 3],
}

impl Default for ControllerSection {
    fn default() -> Self {
        let g = ControllerGains::default();
        Self {
            kp_per_s2: g.kp.into(),
            kd_per_s: g.kd.into(),
            k_r_per_s: g.k_r,
            k_psi_per_s: g.k_psi,
            k_omega_per_s: g.k_omega.into(),
        }
    }
}

/// `[vehicle]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSection {
    /// Gravity.
    pub gravity_mps2: f64,
    /// Mass.
    pub mass_kg: f64,
    /// Diagonal inertia.
    pub inertia_kgm2: [f64; 3],
    /// Maximum thrust.
    pub f_max_n: f64,
    /// Roll and pitch moment bounds.
    pub tau_max_nm: [f64; 2],
    /// Rotor separation (unused by the model).
    pub arm_length_m: f64,
    /// Motor thrust constant as tabulated (unused by the model).
    pub k_f: f64,
    /// Motor torque constant as tabulated (unused by the model).
    pub k_w: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        let p = QuadParams::default();
        Self {
            gravity_mps2: p.gravity,
            mass_kg: p.mass,
            inertia_kgm2: p.inertia.into(),
            f_max_n: p.f_max,
            tau_max_nm: p.tau_max,
            arm_length_m: p.arm_length,
            k_f: p.k_f,
            k_w: p.k_w,
        }
    }
}

/// One `[[barrier]]` entry. Which keys are required depends on `domain`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(missing_docs)]
pub struct BarrierSection {
    pub domain: DomainName,
    pub c_z_m: Option<f64>,
    pub p_z_m: Option<f64>,
    pub c_vz_mps: Option<f64>,
    pub v_z_mps: Option<f64>,
    pub c_x_m: Option<f64>,
    pub c_y_m: Option<f64>,
    pub p_x_m: Option<f64>,
    pub p_y_m: Option<f64>,
    pub c_vx_mps: Option<f64>,
    pub c_vy_mps: Option<f64>,
    pub v_x_mps: Option<f64>,
    pub v_y_mps: Option<f64>,
    pub exponent: Option<u32>,
    pub active_from_s: Option<f64>,
    pub active_until_s: Option<f64>,
    pub poles: Option<Vec<f64>>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
#[allow(missing_docs)]
pub enum DomainName {
    AltitudePosition,
    AltitudePosvel,
    LateralPosition,
    LateralVelocity,
}

impl DomainName {
    fn domain(self) -> BarrierDomain {
        match self {
            DomainName::AltitudePosition => BarrierDomain::AltitudePosition,
            DomainName::AltitudePosvel => BarrierDomain::AltitudePosVel,
            DomainName::LateralPosition => BarrierDomain::LateralPosition,
            DomainName::LateralVelocity => BarrierDomain::LateralVelocity,
        }
    }
}

fn finite(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, "must be finite"))
    }
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be a finite number > 0, got {v}")))
    }
}

fn vec3(key: &str, v: [f64; 3]) -> Result<Vector3<f64>, ConfigError> {
    for x in v {
        finite(key, x)?;
    }
    Ok(Vector3::from(v))
}

fn positive3(key: &str, v: [f64; 3]) -> Result<Vector3<f64>, ConfigError> {
    for x in v {
        positive(key, x)?;
    }
    Ok(Vector3::from(v))
}

impl BarrierSection {
    fn slots(&self) -> [(&'static str, Option<f64>); 12] {
        [
            ("c_z_m", self.c_z_m),
            ("p_z_m", self.p_z_m),
            ("c_vz_mps", self.c_vz_mps),
            ("v_z_mps", self.v_z_mps),
            ("c_x_m", self.c_x_m),
            ("c_y_m", self.c_y_m),
            ("p_x_m", self.p_x_m),
            ("p_y_m", self.p_y_m),
            ("c_vx_mps", self.c_vx_mps),
            ("c_vy_mps", self.c_vy_mps),
            ("v_x_mps", self.v_x_mps),
            ("v_y_mps", self.v_y_mps),
        ]
    }

    fn to_scheduled(&self, index: usize) -> Result<ScheduledBarrier, ConfigError> {
        let key = |k: &str| format!("barrier[{index}].{k}");
        let domain = self.domain.domain();
        // (center keys, half-width keys) in state order.
        let (centers, widths): (&[&str], &[&str]) = match domain {
            BarrierDomain::AltitudePosition => (&["c_z_m"], &["p_z_m"]),
            BarrierDomain::AltitudePosVel => (&["c_z_m", "c_vz_mps"], &["p_z_m", "v_z_mps"]),
            BarrierDomain::LateralPosition => (&["c_x_m", "c_y_m"], &["p_x_m", "p_y_m"]),
            BarrierDomain::LateralVelocity => (&["c_vx_mps", "c_vy_mps"], &["v_x_mps", "v_y_mps"]),
        };
        let slots = self.slots();
        let get = |name: &str| slots.iter().find(|(n, _)| *n == name).and_then(|(_, v)| *v);
        for (name, value) in &slots {
            if value.is_some() && !centers.contains(name) && !widths.contains(name) {
                return Err(ConfigError::new(key(name), format!("not used by {} barriers", domain.name())));
            }
        }
        let mut center = [0.0; 2];
        let mut half_width = [1.0; 2];
        for (j, name) in centers.iter().enumerate() {
            center[j] = finite(&key(name), get(name).unwrap_or(0.0))?;
        }
        for (j, name) in widths.iter().enumerate() {
            let v = get(name)
                .ok_or_else(|| ConfigError::new(key(name), format!("required for {} barriers", domain.name())))?;
            half_width[j] = positive(&key(name), v)?;
        }
        let exponent = self.exponent.unwrap_or(4);
        if exponent < 2 || exponent % 2 != 0 {
            return Err(ConfigError::new(key("exponent"), format!("must be an even integer >= 2, got {exponent}")));
        }
        let from = self.active_from_s.unwrap_or(0.0);
        if !(from.is_finite() && from >= 0.0) {
            return Err(ConfigError::new(key("active_from_s"), "must be finite and >= 0"));
        }
        let until = self.active_until_s.unwrap_or(f64::INFINITY);
        if until.is_nan() || until <= from {
            return Err(ConfigError::new(key("active_until_s"), "must be greater than active_from_s"));
        }
        let spec = BarrierSpec { domain, center, half_width, exponent, active_from: from, active_until: until };

        let delta = domain.relative_degree();
        let gains = match (&self.poles, self.alpha) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(key("alpha"), "give either poles or alpha, not both"));
            }
            (None, Some(alpha)) if delta == 1 => EcbfGains::linear_kappa(alpha)
                .map_err(|_| ConfigError::new(key("alpha"), format!("must be > 0, got {alpha}")))?,
            (None, Some(_)) => {
                return Err(ConfigError::new(
                    key("alpha"),
                    format!("only relative-degree-one barriers take alpha; {} needs {delta} poles", domain.name()),
                ));
            }
            (Some(poles), None) => {
                if poles.len() != delta {
                    return Err(ConfigError::new(
                        key("poles"),
                        format!("{} barriers need exactly {delta} poles, got {}", domain.name(), poles.len()),
                    ));
                }
                EcbfGains::from_poles(poles).map_err(|e| ConfigError::new(key("poles"), e.to_string()))?
            }
            (None, None) => EcbfGains::default_for(domain),
        };
        Ok(ScheduledBarrier { spec, gains })
    }
}

impl ScenarioFile {
    /// Parses TOML text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = e
                .span()
                .and_then(|s| text.get(s))
                .map(|s| s.trim().trim_matches(['[', ']']).to_string())
                .unwrap_or_default();
            ConfigError::new(key, msg)
        })
    }

    /// Builds and validates the core scenario.
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let sim = &self.simulation;
        let duration = positive("simulation.duration_s", sim.duration_s)?;
        let dt = positive("simulation.dt_s", sim.dt_s)?;
        if dt > duration {
            return Err(ConfigError::new("simulation.dt_s", "must not exceed simulation.duration_s"));
        }

        let init = &self.initial;
        let euler = vec3("initial.euler_rad", init.euler_rad)?;
        let initial_state = QuadState {
            position: vec3("initial.position_m", init.position_m)?,
            rotation: rotation_from_euler(euler.x, euler.y, euler.z),
            velocity: vec3("initial.velocity_mps", init.velocity_mps)?,
            body_rates: vec3("initial.body_rates_radps", init.body_rates_radps)?,
        };

        let r = &self.reference;
        let yaw = match (r.yaw_mode, r.yaw_rad) {
            (YawModeName::Atan2, None) => YawMode::Atan2,
            (YawModeName::Atan2, Some(_)) => {
                return Err(ConfigError::new("reference.yaw_rad", "only used with yaw_mode = \"constant\""));
            }
            (YawModeName::Constant, Some(psi)) => YawMode::Constant(finite("reference.yaw_rad", psi)?),
            (YawModeName::Constant, None) => {
                return Err(ConfigError::new("reference.yaw_rad", "required with yaw_mode = \"constant\""));
            }
        };
        let reference = SinusoidReference {
            amplitude: vec3("reference.amplitude_m", r.amplitude_m)?,
            frequency: vec3("reference.frequency_radps", r.frequency_radps)?,
            yaw,
        };

        let c = &self.controller;
        let gains = ControllerGains {
            kp: positive3("controller.kp_per_s2", c.kp_per_s2)?,
            kd: positive3("controller.kd_per_s", c.kd_per_s)?,
            k_r: positive("controller.k_r_per_s", c.k_r_per_s)?,
            k_psi: positive("controller.k_psi_per_s", c.k_psi_per_s)?,
            k_omega: positive3("controller.k_omega_per_s", c.k_omega_per_s)?,
        };

        let v = &self.vehicle;
        let params = QuadParams {
            gravity: positive("vehicle.gravity_mps2", v.gravity_mps2)?,
            mass: positive("vehicle.mass_kg", v.mass_kg)?,
            inertia: positive3("vehicle.inertia_kgm2", v.inertia_kgm2)?,
            f_max: positive("vehicle.f_max_n", v.f_max_n)?,
            tau_max: [
                positive("vehicle.tau_max_nm", v.tau_max_nm[0])?,
                positive("vehicle.tau_max_nm", v.tau_max_nm[1])?,
            ],
            arm_length: finite("vehicle.arm_length_m", v.arm_length_m)?,
            k_f: finite("vehicle.k_f", v.k_f)?,
            k_w: finite("vehicle.k_w", v.k_w)?,
        };

        let barriers = self
            .barriers
            .iter()
            .enumerate()
            .map(|(i, b)| b.to_scheduled(i))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, b) in barriers.iter().enumerate() {
            for (j, a) in barriers[..i].iter().enumerate() {
                let (s, t) = (&a.spec, &b.spec);
                if s.domain == t.domain && s.active_from < t.active_until && t.active_from < s.active_until {
                    return Err(ConfigError::new(
                        format!("barrier[{i}].active_from_s"),
                        format!(
                            "{} interval {} overlaps barrier[{j}] interval {}",
                            t.domain.name(),
                            interval(t.active_from, t.active_until),
                            interval(s.active_from, s.active_until)
                        ),
                    ));
                }
            }
        }

        let scenario = Scenario {
            duration,
            dt,
            initial_state,
            reference,
            barriers,
            gains,
            params,
            filters: FilterEnable { high: self.filters.high, low: self.filters.low },
            fallback: match sim.fallback {
                FallbackName::LeastViolation => FallbackPolicy::LeastViolation,
                FallbackName::HoldLast => FallbackPolicy::HoldLast,
                FallbackName::NominalClamped => FallbackPolicy::NominalClamped,
            },
        };
        scenario.validate().map_err(|e| ConfigError::new("", e.to_string()))?;
        Ok(scenario)
    }
}

fn interval(from: f64, until: f64) -> String {
    format!("[{from}, {until})")
}

/// Loads `presets:NAME` or a file path.
pub fn load(source: &str) -> Result<ScenarioFile, ConfigError> {
    let text = match source.strip_prefix("presets:") {
        Some(name) => presets::get(name)
            .ok_or_else(|| ConfigError::new("", format!("unknown preset `{name}`; try `quadsafe presets`")))?
            .text
            .to_string(),
        None => std::fs::read_to_string(Path::new(source))
            .map_err(|e| ConfigError::new("", format!("cannot read {source}: {e}")))?,
    };
    ScenarioFile::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Result<Scenario, ConfigError> {
        ScenarioFile::parse(text)?.to_scenario()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let sc = scenario("").unwrap();
        assert_eq!(sc.duration, 40.0);
        assert_eq!(sc.dt, 1e-3);
        assert!(sc.barriers.is_empty());
        assert_eq!(sc.params, QuadParams::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = scenario("[simulation]\nduraton_s = 3.0\n").unwrap_err();
        assert!(err.to_string().contains("duraton_s"), "{err}");
    }

    #[test]
    fn missing_half_width_is_named() {
        let err = scenario("[[barrier]]\ndomain = \"altitude-position\"\n").unwrap_err();
        assert_eq!(err.key, "barrier[0].p_z_m");
    }

    #[test]
    fn foreign_key_is_rejected() {
        let err = scenario("[[barrier]]\ndomain = \"altitude-position\"\np_z_m = 2.0\nv_x_mps = 1.0\n").unwrap_err();
        assert_eq!(err.key, "barrier[0].v_x_mps");
    }

    #[test]
    fn wrong_pole_count() {
        let err =
            scenario("[[barrier]]\ndomain = \"lateral-velocity\"\nv_x_mps = 1.0\nv_y_mps = 1.0\npoles = [-1.0]\n")
                .unwrap_err();
        assert_eq!(err.key, "barrier[0].poles");
    }

    #[test]
    fn overlap_cites_both_intervals() {
        let text = "[[barrier]]\ndomain = \"altitude-position\"\np_z_m = 2.0\nactive_until_s = 10.0\n\
                    [[barrier]]\ndomain = \"altitude-position\"\np_z_m = 1.0\nactive_from_s = 5.0\n";
        let err = scenario(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[5, inf)") && msg.contains("[0, 10)"), "{msg}");
    }

    #[test]
    fn adjacent_intervals_are_fine() {
        let text = "[[barrier]]\ndomain = \"lateral-velocity\"\nv_x_mps = 4.0\nv_y_mps = 2.0\nactive_until_s = 20.0\n\
                    [[barrier]]\ndomain = \"lateral-velocity\"\nv_x_mps = 1.25\nv_y_mps = 0.9\nactive_from_s = 20.0\n";
        assert_eq!(scenario(text).unwrap().barriers.len(), 2);
    }

    #[test]
    fn constant_yaw_needs_angle() {
        let err = scenario("[reference]\nyaw_mode = \"constant\"\n").unwrap_err();
        assert_eq!(err.key, "reference.yaw_rad");
        let sc = scenario("[reference]\nyaw_mode = \"constant\"\nyaw_rad = 0.5\n").unwrap();
        assert_eq!(sc.reference.yaw, YawMode::Constant(0.5));
    }

    #[test]
    fn alpha_for_posvel_only() {
        let ok = "[[barrier]]\ndomain = \"altitude-posvel\"\np_z_m = 2.0\nv_z_mps = 0.75\nalpha = 2.0\n";
        assert_eq!(scenario(ok).unwrap().barriers[0].gains.k[0], 2.0);
        let bad = "[[barrier]]\ndomain = \"altitude-position\"\np_z_m = 2.0\nalpha = 2.0\n";
        assert_eq!(scenario(bad).unwrap_err().key, "barrier[0].alpha");
    }

    #[test]
    fn every_preset_parses() {
        for p in presets::ALL {
            let sc = ScenarioFile::parse(p.text).and_then(|f| f.to_scenario());
            assert!(sc.is_ok(), "{}: {:?}", p.name, sc.err());
        }
    }
}
