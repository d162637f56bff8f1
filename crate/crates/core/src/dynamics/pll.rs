use serde::{Deserialize, Serialize};

/// Synchronous-reference-frame PLL state. `theta` is the estimated voltage
/// angle in the synchronous frame, unwrapped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PllState {
    pub theta: f64,
    pub omega_dev: f64,
    /// Accumulated q error, volt-seconds.
    pub integral: f64,
}

impl PllState {
    pub fn locked_at(theta: f64) -> Self {
        Self { theta, omega_dev: 0.0, integral: 0.0 }
    }
}

/// Fleet-wide multipliers applied to the per-inverter PLL gains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PllTuning {
    pub kp_scale: f64,
    pub ki_scale: f64,
}

impl Default for PllTuning {
    fn default() -> Self {
        Self { kp_scale: 1.0, ki_scale: 1.0 }
    }
}

/// One explicit PI update on the q-axis voltage error:
/// `∫ += v_q·dt`, `Δω = kp·v_q + ki·∫`, `θ += Δω·dt`.
pub fn pll_step(state: PllState, v_q: f64, kp: f64, ki: f64, dt: f64) -> PllState {
    let integral = state.integral + v_q * dt;
    let omega_dev = kp * v_q + ki * integral;
    PllState { theta: state.theta + omega_dev * dt, omega_dev, integral }
}
