//! TOML run configuration: parsing, defaults, and load-time validation.
//!
//! Every downstream precondition is checked here and reported against the
//! dotted field path it came from, e.g. `inverter[3].s_rated_kva`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{
    DynamicsOptions, FaultScenario, InverterConfig, PllTuning, StepSolver, DEFAULT_DT, DEFAULT_TRIP_HOLDOFF,
    NOMINAL_VOLTAGE, SYSTEM_FREQUENCY_HZ,
};
use crate::network::{FaultOverride, GridModel, TheveninEquivalent};
use crate::pcc::SolverOptions;
use crate::phasor::{line_impedance, Impedance, Phasor};
use crate::stability::{CctSearch, StabilityCriteria, StudyOptions};

/// The reference five-inverter configuration shipped with the crate.
pub const TABLE1_TOML: &str = include_str!("../configs/table1.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid<T>(field: impl Into<String>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid { field: field.into(), message: message.into() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarSpec {
    pub magnitude: f64,
    #[serde(default)]
    pub angle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceSpec {
    pub r: f64,
    pub x: f64,
}

impl From<ImpedanceSpec> for Impedance {
    fn from(z: ImpedanceSpec) -> Self {
        Impedance::new(z.r, z.x)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultedSpec {
    pub v_th: Option<PolarSpec>,
    pub z_th: Option<ImpedanceSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_v_nominal")]
    pub v_nominal: f64,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    pub v_th: PolarSpec,
    pub z_th: ImpedanceSpec,
    pub z_load: ImpedanceSpec,
    pub faulted: Option<FaultedSpec>,
}

fn default_v_nominal() -> f64 {
    NOMINAL_VOLTAGE
}

fn default_frequency() -> f64 {
    SYSTEM_FREQUENCY_HZ
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverterSpec {
    pub name: String,
    pub s_rated_kva: f64,
    pub r_line: f64,
    /// Line inductance in µH. Give this or `x_line`, not both.
    pub l_line_uh: Option<f64>,
    /// Line reactance in ohms at the grid frequency.
    pub x_line: Option<f64>,
    #[serde(default)]
    pub r_virtual: f64,
    pub kp: f64,
    pub ki: f64,
    pub i_max: Option<f64>,
    #[serde(default)]
    pub pf_angle: f64,
    pub trip_holdoff: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PllSpec {
    pub kp_scale: f64,
    pub ki_scale: f64,
}

impl Default for PllSpec {
    fn default() -> Self {
        Self { kp_scale: 1.0, ki_scale: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectionSpec {
    pub trip_holdoff: f64,
    pub divergence_bound: f64,
}

impl Default for ProtectionSpec {
    fn default() -> Self {
        Self { trip_holdoff: DEFAULT_TRIP_HOLDOFF, divergence_bound: std::f64::consts::PI }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub t_fault: f64,
    pub t_clear: Option<f64>,
    pub fault_depth: f64,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    /// Convergence tolerance relative to the source magnitude.
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub lag_mode: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: SolverOptions::DEFAULT_REL_TOL,
            max_iter: SolverOptions::DEFAULT_MAX_ITER,
            damping: SolverOptions::DEFAULT_DAMPING,
            lag_mode: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySpec {
    pub settle_tol: f64,
    pub settle_window: f64,
    pub cct_t_min: f64,
    pub cct_t_max: f64,
    pub cct_resolution: f64,
    pub post_clear_time: f64,
    pub audit_points: usize,
}

impl Default for StabilitySpec {
    fn default() -> Self {
        let c = StabilityCriteria::default();
        let s = CctSearch::default();
        Self {
            settle_tol: c.settle_tol,
            settle_window: c.settle_window,
            cct_t_min: s.t_min,
            cct_t_max: s.t_max,
            cct_resolution: s.resolution,
            post_clear_time: s.post_clear_time,
            audit_points: s.audit_points,
        }
    }
}

/// File layout, before defaults and validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridSpec,
    #[serde(default)]
    pub pll: PllSpec,
    #[serde(default)]
    pub protection: ProtectionSpec,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub stability: StabilitySpec,
    pub inverter: Vec<InverterSpec>,
}

/// Validated configuration with every default resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridModel,
    pub v_nominal: f64,
    pub fleet: Vec<InverterConfig>,
    pub scenario: FaultScenario,
    pub study: StudyOptions,
    pub search: CctSearch,
}

impl RunConfig {
    /// SHA-256 over the canonical JSON of the resolved configuration.
    /// Formatting, comments and spelled-out defaults do not change it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self, ConfigError> {
        self.scenario.dt = dt;
        check_scenario(&self.scenario, &self.study.criteria)?;
        Ok(self)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config(&text).map_err(|e| match e {
        ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn table1_config() -> RunConfig {
    parse_config(TABLE1_TOML).expect("bundled config is valid")
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
    resolve(&file)
}

fn finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        invalid(field, format!("must be finite, got {v}"))
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(field, format!("must be positive, got {v}"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(field, format!("must be non-negative, got {v}"))
    }
}

fn impedance(field: &str, z: ImpedanceSpec) -> Result<Impedance, ConfigError> {
    non_negative(&format!("{field}.r"), z.r)?;
    finite(&format!("{field}.x"), z.x)?;
    Ok(z.into())
}

fn phasor(field: &str, p: PolarSpec) -> Result<Phasor, ConfigError> {
    finite(&format!("{field}.angle"), p.angle)?;
    non_negative(&format!("{field}.magnitude"), p.magnitude)?;
    Ok(Phasor::from_polar(p.magnitude, p.angle).expect("checked non-negative"))
}

fn check_scenario(s: &FaultScenario, c: &StabilityCriteria) -> Result<(), ConfigError> {
    positive("scenario.dt", s.dt)?;
    positive("scenario.t_end", s.t_end)?;
    non_negative("scenario.t_fault", s.t_fault)?;
    if s.t_fault >= s.t_end {
        return invalid("scenario.t_fault", format!("must be before t_end ({}), got {}", s.t_end, s.t_fault));
    }
    if !(0.0..=1.0).contains(&s.fault_depth) {
        return invalid("scenario.fault_depth", format!("must lie in [0, 1], got {}", s.fault_depth));
    }
    if let Some(tc) = s.t_clear {
        if !(tc > s.t_fault && tc <= s.t_end) {
            return invalid(
                "scenario.t_clear",
                format!("must satisfy t_fault < t_clear <= t_end ({} < t_clear <= {}), got {tc}", s.t_fault, s.t_end),
            );
        }
        if s.t_end < tc + c.settle_window - 1e-12 {
            return invalid(
                "scenario.t_end",
                format!("must leave stability.settle_window ({} s) after t_clear, got {}", c.settle_window, s.t_end),
            );
        }
    }
    if s.dt > s.t_end {
        return invalid("scenario.dt", format!("must not exceed t_end ({}), got {}", s.t_end, s.dt));
    }
    Ok(())
}

fn resolve_inverter(
    k: usize,
    spec: &InverterSpec,
    frequency: f64,
    v_nominal: f64,
    holdoff: f64,
) -> Result<InverterConfig, ConfigError> {
    let f = |name: &str| format!("inverter[{k}].{name}");
    if spec.name.trim().is_empty() {
        return invalid(f("name"), "must not be empty");
    }
    positive(&f("s_rated_kva"), spec.s_rated_kva)?;
    non_negative(&f("r_line"), spec.r_line)?;
    let z_line = match (spec.l_line_uh, spec.x_line) {
        (Some(l), None) => {
            non_negative(&f("l_line_uh"), l)?;
            line_impedance(spec.r_line, l * 1e-6, frequency).expect("checked non-negative")
        }
        (None, Some(x)) => {
            finite(&f("x_line"), x)?;
            Impedance::new(spec.r_line, x)
        }
        (Some(_), Some(_)) => return invalid(f("x_line"), "give either l_line_uh or x_line, not both"),
        (None, None) => return invalid(f("l_line_uh"), "one of l_line_uh or x_line is required"),
    };
    if z_line.magnitude() + spec.r_virtual == 0.0 {
        return invalid(f("r_line"), "line and virtual impedance cannot both be zero");
    }
    non_negative(&f("r_virtual"), spec.r_virtual)?;
    non_negative(&f("kp"), spec.kp)?;
    non_negative(&f("ki"), spec.ki)?;
    finite(&f("pf_angle"), spec.pf_angle)?;
    let s = spec.s_rated_kva * 1e3;
    let i_max = match spec.i_max {
        Some(i) => {
            positive(&f("i_max"), i)?;
            i
        }
        None => InverterConfig::default_i_max(s, v_nominal),
    };
    let trip_holdoff = spec.trip_holdoff.unwrap_or(holdoff);
    non_negative(&f("trip_holdoff"), trip_holdoff)?;
    Ok(InverterConfig {
        name: spec.name.clone(),
        s_rated: s,
        z_line,
        r_virtual: spec.r_virtual,
        kp: spec.kp,
        ki: spec.ki,
        i_max,
        pf_angle: spec.pf_angle,
        trip_holdoff,
    })
}

/// Applies defaults and validates a parsed file.
pub fn resolve(file: &ConfigFile) -> Result<RunConfig, ConfigError> {
    let g = &file.grid;
    positive("grid.v_nominal", g.v_nominal)?;
    positive("grid.frequency", g.frequency)?;
    let v_th = phasor("grid.v_th", g.v_th)?;
    positive("grid.v_th.magnitude", g.v_th.magnitude)?;
    let z_th = impedance("grid.z_th", g.z_th)?;
    let z_load = impedance("grid.z_load", g.z_load)?;
    if (z_th + z_load).magnitude() == 0.0 {
        return invalid("grid.z_th", "grid and load impedance cannot both be zero");
    }
    let mut grid = GridModel::new(TheveninEquivalent { v_th, z_th }, z_load);
    if let Some(faulted) = g.faulted {
        let v = faulted.v_th.map(|p| phasor("grid.faulted.v_th", p)).transpose()?;
        if let Some(v) = v {
            if v.magnitude() > v_th.magnitude() {
                return invalid(
                    "grid.faulted.v_th.magnitude",
                    format!("must not exceed the pre-fault magnitude {}, got {}", v_th.magnitude(), v.magnitude()),
                );
            }
        }
        let z = faulted.z_th.map(|z| impedance("grid.faulted.z_th", z)).transpose()?;
        grid = grid
            .with_fault_override(FaultOverride { v_th: v, z_th: z })
            .map_err(|e| ConfigError::Invalid { field: "grid.faulted".into(), message: e.to_string() })?;
    }

    positive("pll.kp_scale", file.pll.kp_scale)?;
    positive("pll.ki_scale", file.pll.ki_scale)?;
    non_negative("protection.trip_holdoff", file.protection.trip_holdoff)?;
    positive("protection.divergence_bound", file.protection.divergence_bound)?;

    if file.inverter.is_empty() {
        return invalid("inverter", "at least one inverter is required");
    }
    let fleet = file
        .inverter
        .iter()
        .enumerate()
        .map(|(k, spec)| resolve_inverter(k, spec, g.frequency, g.v_nominal, file.protection.trip_holdoff))
        .collect::<Result<Vec<_>, _>>()?;
    for (k, inv) in fleet.iter().enumerate() {
        if fleet[..k].iter().any(|o| o.name == inv.name) {
            return invalid(format!("inverter[{k}].name"), format!("duplicate name {:?}", inv.name));
        }
    }

    let sv = &file.solver;
    positive("solver.tol", sv.tol)?;
    if sv.max_iter == 0 {
        return invalid("solver.max_iter", "must be at least 1");
    }
    if !(sv.damping > 0.0 && sv.damping <= 1.0) {
        return invalid("solver.damping", format!("must lie in (0, 1], got {}", sv.damping));
    }

    let st = &file.stability;
    positive("stability.settle_tol", st.settle_tol)?;
    positive("stability.settle_window", st.settle_window)?;
    positive("stability.cct_t_min", st.cct_t_min)?;
    positive("stability.cct_t_max", st.cct_t_max)?;
    if st.cct_t_min >= st.cct_t_max {
        return invalid(
            "stability.cct_t_min",
            format!("must be below cct_t_max ({}), got {}", st.cct_t_max, st.cct_t_min),
        );
    }
    positive("stability.cct_resolution", st.cct_resolution)?;
    if st.post_clear_time < st.settle_window {
        return invalid(
            "stability.post_clear_time",
            format!("must be at least settle_window ({}), got {}", st.settle_window, st.post_clear_time),
        );
    }
    if st.audit_points == 1 {
        return invalid("stability.audit_points", "must be 0 (off) or at least 2");
    }

    let criteria = StabilityCriteria {
        settle_tol: st.settle_tol,
        settle_window: st.settle_window,
        divergence_bound: file.protection.divergence_bound,
    };
    let sc = &file.scenario;
    let scenario =
        FaultScenario { t_fault: sc.t_fault, t_clear: sc.t_clear, fault_depth: sc.fault_depth, t_end: sc.t_end, dt: sc.dt };
    check_scenario(&scenario, &criteria)?;

    let dynamics = DynamicsOptions {
        pll: PllTuning { kp_scale: file.pll.kp_scale, ki_scale: file.pll.ki_scale },
        solver: StepSolver { rel_tol: sv.tol, max_iter: sv.max_iter, damping: sv.damping, lag_mode: sv.lag_mode },
        divergence_bound: file.protection.divergence_bound,
        stop_on_instability: false,
    };
    Ok(RunConfig {
        grid,
        v_nominal: g.v_nominal,
        fleet,
        scenario,
        study: StudyOptions { dynamics, criteria },
        search: CctSearch {
            t_min: st.cct_t_min,
            t_max: st.cct_t_max,
            resolution: st.cct_resolution,
            post_clear_time: st.post_clear_time,
            audit_points: st.audit_points,
        },
    })
}
