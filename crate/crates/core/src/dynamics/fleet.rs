use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::phasor::{line_impedance, Impedance};

/// System frequency that reproduces every X/R entry of the reference fleet.
pub const SYSTEM_FREQUENCY_HZ: f64 = 60.0;
/// Single-phase-equivalent RMS voltage base.
pub const NOMINAL_VOLTAGE: f64 = 230.0;
/// Peak current as a multiple of rated current.
pub const I_MAX_HEADROOM: f64 = 1.2;
pub const DEFAULT_TRIP_HOLDOFF: f64 = 0.5e-3;

/// Static ratings and controller gains of one inverter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverterConfig {
    pub name: String,
    /// Rated apparent power, VA.
    pub s_rated: f64,
    /// Line impedance `Z_g`, ohms.
    pub z_line: Impedance,
    /// Virtual resistance `Z_v`, ohms.
    pub r_virtual: f64,
    /// PLL proportional gain, rad/s per volt of q error.
    pub kp: f64,
    /// PLL integral gain, rad/s² per volt of q error.
    pub ki: f64,
    /// Peak current limit, amperes.
    pub i_max: f64,
    /// Power-factor angle added to the PLL angle, radians.
    pub pf_angle: f64,
    /// Time the limiter may stay engaged before the inverter trips, seconds.
    pub trip_holdoff: f64,
}

impl InverterConfig {
    pub fn new(
        name: impl Into<String>,
        s_rated: f64,
        z_line: Impedance,
        r_virtual: f64,
        kp: f64,
        ki: f64,
        i_max: f64,
    ) -> Self {
        Self {
            name: name.into(),
            s_rated,
            z_line,
            r_virtual,
            kp,
            ki,
            i_max,
            pf_angle: 0.0,
            trip_holdoff: DEFAULT_TRIP_HOLDOFF,
        }
    }

    pub fn default_i_max(s_rated: f64, v_nominal: f64) -> f64 {
        I_MAX_HEADROOM * s_rated / v_nominal
    }

    /// `Z_g + Z_v`.
    pub fn series_impedance(&self) -> Impedance {
        self.z_line + Impedance::resistive(self.r_virtual)
    }

    pub fn validate(&self, index: usize) -> Result<(), DynamicsError> {
        let bad = |reason: String| Err(DynamicsError::InvalidInverter { index, reason });
        if !(self.s_rated > 0.0) {
            return bad(format!("s_rated must be positive, got {}", self.s_rated));
        }
        if !(self.i_max > 0.0) {
            return bad(format!("i_max must be positive, got {}", self.i_max));
        }
        if !(self.kp >= 0.0) || !(self.ki >= 0.0) {
            return bad(format!("PLL gains must be non-negative, got kp={} ki={}", self.kp, self.ki));
        }
        if !(self.trip_holdoff >= 0.0) {
            return bad(format!("trip_holdoff must be non-negative, got {}", self.trip_holdoff));
        }
        if !(self.z_line.r >= 0.0) || !(self.r_virtual >= 0.0) {
            return bad("line and virtual resistance must be non-negative".into());
        }
        if !self.pf_angle.is_finite() || !self.z_line.x.is_finite() {
            return bad("pf_angle and line reactance must be finite".into());
        }
        Ok(())
    }
}

/// The five-inverter reference fleet: (name, kVA, R Ω, L µH, R_v Ω, Kp, Ki).
const REFERENCE_ROWS: [(&str, f64, f64, f64, f64, f64, f64); 5] = [
    ("Inv 1", 6.0, 0.15, 40.0, 0.16, 4.31e-3, 260.0),
    ("Inv 2", 9.0, 0.30, 45.0, 0.12, 4.45e-3, 259.0),
    ("Inv 3", 8.0, 0.25, 50.0, 0.06, 4.67e-3, 255.0),
    ("Inv 4", 12.0, 0.35, 60.0, 0.00, 4.76e-3, 265.0),
    ("Inv 5", 10.0, 0.30, 65.0, 0.04, 4.57e-3, 255.0),
];

/// Reference fleet at the given voltage base, with default current limits.
pub fn reference_fleet(v_nominal: f64) -> Vec<InverterConfig> {
    REFERENCE_ROWS
        .iter()
        .map(|&(name, kva, r, l_uh, rv, kp, ki)| {
            let s = kva * 1e3;
            let z = line_impedance(r, l_uh * 1e-6, SYSTEM_FREQUENCY_HZ).expect("reference rows are valid");
            InverterConfig::new(name, s, z, rv, kp, ki, InverterConfig::default_i_max(s, v_nominal))
        })
        .collect()
}

fn mean(fleet: &[InverterConfig], f: impl Fn(&InverterConfig) -> f64) -> f64 {
    fleet.iter().map(f).sum::<f64>() / fleet.len() as f64
}

/// Every field replaced by its fleet mean, preserving count and total rating.
pub fn uniform_fleet(fleet: &[InverterConfig]) -> Vec<InverterConfig> {
    if fleet.is_empty() {
        return Vec::new();
    }
    let template = InverterConfig {
        name: String::new(),
        s_rated: mean(fleet, |c| c.s_rated),
        z_line: Impedance::new(mean(fleet, |c| c.z_line.r), mean(fleet, |c| c.z_line.x)),
        r_virtual: mean(fleet, |c| c.r_virtual),
        kp: mean(fleet, |c| c.kp),
        ki: mean(fleet, |c| c.ki),
        i_max: mean(fleet, |c| c.i_max),
        pf_angle: mean(fleet, |c| c.pf_angle),
        trip_holdoff: mean(fleet, |c| c.trip_holdoff),
    };
    fleet
        .iter()
        .map(|c| InverterConfig { name: c.name.clone(), ..template.clone() })
        .collect()
}

/// Same line resistances, reactance reset so every line has X/R = `ratio`.
pub fn with_xr_ratio(fleet: &[InverterConfig], ratio: f64) -> Vec<InverterConfig> {
    fleet
        .iter()
        .map(|c| InverterConfig { z_line: Impedance::new(c.z_line.r, ratio * c.z_line.r), ..c.clone() })
        .collect()
}

/// Scales the rating of inverter `index` (all when `None`). The current
/// limit scales with it so the per-unit headroom is unchanged.
pub fn scale_s_rated(fleet: &[InverterConfig], index: Option<usize>, factor: f64) -> Vec<InverterConfig> {
    fleet
        .iter()
        .enumerate()
        .map(|(p, c)| {
            if index.is_none_or(|i| i == p) {
                InverterConfig { s_rated: c.s_rated * factor, i_max: c.i_max * factor, ..c.clone() }
            } else {
                c.clone()
            }
        })
        .collect()
}

/// Scales the line reactance (and so X/R) of inverter `index` (all when `None`).
pub fn scale_xr(fleet: &[InverterConfig], index: Option<usize>, factor: f64) -> Vec<InverterConfig> {
    fleet
        .iter()
        .enumerate()
        .map(|(p, c)| {
            if index.is_none_or(|i| i == p) {
                InverterConfig { z_line: Impedance::new(c.z_line.r, c.z_line.x * factor), ..c.clone() }
            } else {
                c.clone()
            }
        })
        .collect()
}
