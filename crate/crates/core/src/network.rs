//! Thevenin equivalent of the feeder seen by the inverter fleet, and the
//! per-inverter equivalent impedances `Z_eq,p = (Z_g,p + Z_v,p) || (Z_th + Z_L)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::InverterConfig;
use crate::phasor::{parallel, Impedance, Phasor, PhasorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("at least one source branch is required")]
    NoBranches,
    #[error("branch {index} has zero impedance")]
    ZeroImpedance { index: usize },
    #[error("inverter fleet is empty")]
    EmptyFleet,
    #[error("fault depth must lie in [0, 1], got {0}")]
    FaultDepth(f64),
    #[error("faulted source voltage {faulted} V exceeds pre-fault {prefault} V")]
    FaultRaisesVoltage { prefault: f64, faulted: f64 },
    #[error("Thevenin resistance must be non-negative, got {0}")]
    NegativeResistance(f64),
    #[error("inverter {index}: {source}")]
    Impedance {
        index: usize,
        #[source]
        source: PhasorError,
    },
}

/// Ideal source `v_th` behind series impedance `z_th`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheveninEquivalent {
    pub v_th: Phasor,
    pub z_th: Impedance,
}

impl TheveninEquivalent {
    pub fn new(v_th: Phasor, z_th: Impedance) -> Result<Self, NetworkError> {
        if !(z_th.r >= 0.0) {
            return Err(NetworkError::NegativeResistance(z_th.r));
        }
        Ok(Self { v_th, z_th })
    }
}

/// Optional explicit fault-on equivalent. Any field left `None` falls back
/// to the depth-scaled pre-fault value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultOverride {
    pub v_th: Option<Phasor>,
    pub z_th: Option<Impedance>,
}

/// Feeder model for the three simulation intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub prefault: TheveninEquivalent,
    pub z_load: Impedance,
    #[serde(default)]
    pub fault_override: FaultOverride,
}

impl GridModel {
    pub fn new(prefault: TheveninEquivalent, z_load: Impedance) -> Self {
        Self { prefault, z_load, fault_override: FaultOverride::default() }
    }

    pub fn with_fault_override(mut self, fault_override: FaultOverride) -> Result<Self, NetworkError> {
        if let Some(v) = fault_override.v_th {
            if v.magnitude() > self.prefault.v_th.magnitude() {
                return Err(NetworkError::FaultRaisesVoltage {
                    prefault: self.prefault.v_th.magnitude(),
                    faulted: v.magnitude(),
                });
            }
        }
        if let Some(z) = fault_override.z_th {
            if !(z.r >= 0.0) {
                return Err(NetworkError::NegativeResistance(z.r));
            }
        }
        self.fault_override = fault_override;
        Ok(self)
    }
}

/// `Z_eq` per inverter together with its angle `γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalentImpedanceSet {
    pub z_eq: Vec<Impedance>,
    pub gamma: Vec<f64>,
}

impl EquivalentImpedanceSet {
    pub fn from_impedances(z_eq: Vec<Impedance>) -> Self {
        let gamma = z_eq.iter().map(|z| z.angle()).collect();
        Self { z_eq, gamma }
    }

    pub fn len(&self) -> usize {
        self.z_eq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_eq.is_empty()
    }
}

/// Millman reduction of parallel voltage-source branches to one equivalent.
pub fn thevenin_reduce(sources: &[(Phasor, Impedance)]) -> Result<TheveninEquivalent, NetworkError> {
    if sources.is_empty() {
        return Err(NetworkError::NoBranches);
    }
    let mut y_sum = Complex64::new(0.0, 0.0);
    let mut i_sum = Complex64::new(0.0, 0.0);
    for (index, (v, z)) in sources.iter().enumerate() {
        if !(z.magnitude() > 0.0) {
            return Err(NetworkError::ZeroImpedance { index });
        }
        let y = z.to_complex().inv();
        y_sum += y;
        i_sum += v.to_complex() * y;
    }
    let z_th = y_sum.inv();
    Ok(TheveninEquivalent { v_th: (z_th * i_sum).into(), z_th: z_th.into() })
}

/// Equivalent impedances for every inverter against the given source.
pub fn equivalent_impedance(
    fleet: &[InverterConfig],
    grid: &TheveninEquivalent,
    z_load: Impedance,
) -> Result<EquivalentImpedanceSet, NetworkError> {
    if fleet.is_empty() {
        return Err(NetworkError::EmptyFleet);
    }
    let feeder = grid.z_th + z_load;
    let z_eq = fleet
        .iter()
        .enumerate()
        .map(|(index, inv)| {
            parallel(inv.series_impedance(), feeder).map_err(|source| NetworkError::Impedance { index, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EquivalentImpedanceSet::from_impedances(z_eq))
}

/// Fault-on equivalent: the source magnitude drops to `(1 − depth)` of its
/// pre-fault value at the same angle, unless overridden.
pub fn faulted_grid(grid: &GridModel, fault_depth: f64) -> Result<TheveninEquivalent, NetworkError> {
    if !(0.0..=1.0).contains(&fault_depth) {
        return Err(NetworkError::FaultDepth(fault_depth));
    }
    let v_th = grid
        .fault_override
        .v_th
        .unwrap_or_else(|| grid.prefault.v_th.scale(1.0 - fault_depth));
    let z_th = grid.fault_override.z_th.unwrap_or(grid.prefault.z_th);
    Ok(TheveninEquivalent { v_th, z_th })
}
