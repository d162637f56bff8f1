//! Point-of-common-coupling voltage.
//!
//! The PCC voltage satisfies the implicit superposition
//!
//! ```text
//! v = v_th + Σ_i z_eq,i · I_i(|v|) · e^{jθ_cg,i},   I_i(|v|) = min(S_i / |v|, I_max,i)
//! ```
//!
//! where the sampling lag between the measured and applied voltage has been
//! collapsed, so `v` is a fixed point. The right-hand side depends on `v`
//! only through `|v|`, which keeps the Jacobian rank one and cheap.
//!
//! The injection is taken literally as a current magnitude `|S/v|` along a
//! unit phasor at the injection angle, not as a conjugate complex power.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{EquivalentImpedanceSet, TheveninEquivalent};
use crate::phasor::{dq_components, Impedance, Phasor};

/// Ratio of `|v|` to `|v_th|` below which the solve is declared collapsed.
pub const ZERO_VOLTAGE_RATIO: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PccError {
    #[error("fixed point not reached: residual {residual:e} V after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("PCC voltage collapsed to {magnitude:e} V")]
    ZeroVoltage { magnitude: f64 },
    #[error("PCC voltage magnitude must be positive, got {0}")]
    NonPositiveVoltage(f64),
    #[error("inverter index {index} out of range for {len} inverters")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("apparent power of inverter {index} must be non-negative, got {value}")]
    NegativePower { index: usize, value: f64 },
    #[error("invalid solver option: {0}")]
    InvalidOption(&'static str),
}

/// Apparent power and injection angle per inverter, with optional current caps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionState {
    pub s: Vec<f64>,
    pub theta_cg: Vec<f64>,
    /// Peak current per inverter; `None` means unlimited.
    pub i_max: Option<Vec<f64>>,
}

impl InjectionState {
    pub fn new(s: Vec<f64>, theta_cg: Vec<f64>) -> Result<Self, PccError> {
        if s.len() != theta_cg.len() {
            return Err(PccError::LengthMismatch { what: "theta_cg", got: theta_cg.len(), expected: s.len() });
        }
        if let Some((index, &value)) = s.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(PccError::NegativePower { index, value });
        }
        Ok(Self { s, theta_cg, i_max: None })
    }

    pub fn with_current_limits(mut self, i_max: Vec<f64>) -> Result<Self, PccError> {
        if i_max.len() != self.s.len() {
            return Err(PccError::LengthMismatch { what: "i_max", got: i_max.len(), expected: self.s.len() });
        }
        self.i_max = Some(i_max);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    fn cap(&self, p: usize) -> f64 {
        self.i_max.as_ref().map_or(f64::INFINITY, |m| m[p])
    }

    /// Injected current magnitude of inverter `p` at PCC magnitude `v_mag`.
    pub fn current(&self, p: usize, v_mag: f64) -> f64 {
        if self.s[p] == 0.0 {
            return 0.0;
        }
        (self.s[p] / v_mag).min(self.cap(p))
    }

    pub fn is_limited(&self, p: usize, v_mag: f64) -> bool {
        self.s[p] / v_mag > self.cap(p)
    }

    /// `d I_p / d|v|`, zero on the limited branch.
    fn current_slope(&self, p: usize, v_mag: f64) -> f64 {
        if self.s[p] == 0.0 || self.is_limited(p, v_mag) {
            0.0
        } else {
            -self.s[p] / (v_mag * v_mag)
        }
    }
}

/// Solver knobs. `tol` is absolute, in volts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation weight on the new iterate, in (0, 1].
    pub damping: f64,
    /// Starting point; `v_th` when absent.
    pub seed: Option<Phasor>,
}

impl SolverOptions {
    pub const DEFAULT_REL_TOL: f64 = 1e-9;
    pub const DEFAULT_MAX_ITER: usize = 100;
    pub const DEFAULT_DAMPING: f64 = 0.7;

    /// Defaults scaled to the source magnitude.
    pub fn for_grid(grid: &TheveninEquivalent) -> Self {
        Self {
            tol: Self::DEFAULT_REL_TOL * grid.v_th.magnitude().max(1.0),
            max_iter: Self::DEFAULT_MAX_ITER,
            damping: Self::DEFAULT_DAMPING,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: Phasor) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PccSolution {
    pub v_pcc: Phasor,
    pub residual: f64,
    pub iterations: usize,
    /// Whether the Newton fallback was needed.
    pub newton: bool,
}

/// Per-inverter voltages and current at a solved PCC voltage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverterOperatingPoint {
    pub v_g: Phasor,
    pub v_gq: f64,
    pub i_mag: f64,
}

/// q-axis projections of the PCC and generation voltages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QComponents {
    pub v_pcc_q: f64,
    pub v_gq: Vec<f64>,
}

fn check_lengths(zeq: &EquivalentImpedanceSet, inj: &InjectionState) -> Result<(), PccError> {
    if zeq.len() != inj.len() {
        return Err(PccError::LengthMismatch { what: "injections", got: inj.len(), expected: zeq.len() });
    }
    Ok(())
}

fn unit(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

/// Right-hand side of the implicit PCC equation, evaluated at `|v| = v_mag`.
fn rhs_at(grid: &TheveninEquivalent, zeq: &EquivalentImpedanceSet, inj: &InjectionState, v_mag: f64) -> Complex64 {
    let mut acc = grid.v_th.to_complex();
    for p in 0..inj.len() {
        let i = inj.current(p, v_mag);
        if i != 0.0 {
            acc += zeq.z_eq[p].to_complex() * unit(inj.theta_cg[p]) * i;
        }
    }
    acc
}

/// `d rhs / d|v|`.
fn rhs_slope(zeq: &EquivalentImpedanceSet, inj: &InjectionState, v_mag: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..inj.len() {
        let k = inj.current_slope(p, v_mag);
        if k != 0.0 {
            acc += zeq.z_eq[p].to_complex() * unit(inj.theta_cg[p]) * k;
        }
    }
    acc
}

/// Right-hand side of the PCC equation for a trial voltage `v`.
pub fn pcc_rhs(
    grid: &TheveninEquivalent,
    zeq: &EquivalentImpedanceSet,
    inj: &InjectionState,
    v: Phasor,
) -> Result<Phasor, PccError> {
    check_lengths(zeq, inj)?;
    let m = v.magnitude();
    if !(m > 0.0) {
        return Err(PccError::NonPositiveVoltage(m));
    }
    Ok(rhs_at(grid, zeq, inj, m).into())
}

/// One explicit evaluation using the previous step's magnitude in the
/// current denominator (the non-collapsed sampling-lag form).
pub fn evaluate_lagged(
    grid: &TheveninEquivalent,
    zeq: &EquivalentImpedanceSet,
    inj: &InjectionState,
    v_prev: Phasor,
) -> Result<PccSolution, PccError> {
    let v = pcc_rhs(grid, zeq, inj, v_prev)?;
    let m = v.magnitude();
    if !(m > ZERO_VOLTAGE_RATIO * grid.v_th.magnitude()) || m == 0.0 {
        return Err(PccError::ZeroVoltage { magnitude: m });
    }
    let residual = (rhs_at(grid, zeq, inj, m) - v.to_complex()).norm();
    Ok(PccSolution { v_pcc: v, residual, iterations: 1, newton: false })
}

fn seed_point(grid: &TheveninEquivalent, zeq: &EquivalentImpedanceSet, inj: &InjectionState) -> Complex64 {
    let v_th = grid.v_th.to_complex();
    if v_th.norm() > 0.0 {
        return v_th;
    }
    // Dead source: v = A/|v| has the closed form A/√|A| when nothing limits.
    let a: Complex64 = (0..inj.len()).map(|p| zeq.z_eq[p].to_complex() * unit(inj.theta_cg[p]) * inj.s[p]).sum();
    if a.norm() > 0.0 {
        a / a.norm().sqrt()
    } else {
        v_th
    }
}

/// Solves the implicit PCC equation by damped fixed-point iteration, falling
/// back to a two-dimensional Newton iteration if the relaxation stalls.
pub fn solve_vpcc(
    grid: &TheveninEquivalent,
    zeq: &EquivalentImpedanceSet,
    inj: &InjectionState,
    opts: &SolverOptions,
) -> Result<PccSolution, PccError> {
    check_lengths(zeq, inj)?;
    if !(opts.tol > 0.0) {
        return Err(PccError::InvalidOption("tol must be positive"));
    }
    if opts.max_iter == 0 {
        return Err(PccError::InvalidOption("max_iter must be at least 1"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(PccError::InvalidOption("damping must lie in (0, 1]"));
    }

    let floor = ZERO_VOLTAGE_RATIO * grid.v_th.magnitude();
    let collapsed = |m: f64| m == 0.0 || m < floor || !m.is_finite();

    let mut v = match opts.seed {
        Some(s) if s.magnitude() > 0.0 => s.to_complex(),
        _ => seed_point(grid, zeq, inj),
    };
    if v.norm() == 0.0 {
        // Dead source and no injection.
        return Err(PccError::ZeroVoltage { magnitude: 0.0 });
    }

    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    let mut iterations = 0usize;
    let relax_budget = (opts.max_iter / 2).max(1);

    while iterations < opts.max_iter {
        iterations += 1;
        let m = v.norm();
        if collapsed(m) {
            return Err(PccError::ZeroVoltage { magnitude: m });
        }
        let rhs = rhs_at(grid, zeq, inj, m);
        let residual = (rhs - v).norm();
        if residual <= opts.tol {
            return Ok(PccSolution { v_pcc: v.into(), residual, iterations, newton: false });
        }
        if residual < 0.9 * best {
            best = residual;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if stalled >= 5 || iterations >= relax_budget {
            break;
        }
        v += (rhs - v) * opts.damping;
    }

    newton(grid, zeq, inj, opts, v, iterations, collapsed)
}

fn newton(
    grid: &TheveninEquivalent,
    zeq: &EquivalentImpedanceSet,
    inj: &InjectionState,
    opts: &SolverOptions,
    mut v: Complex64,
    mut iterations: usize,
    collapsed: impl Fn(f64) -> bool,
) -> Result<PccSolution, PccError> {
    let residual_at = |v: Complex64| v - rhs_at(grid, zeq, inj, v.norm());
    let mut f = residual_at(v);
    while iterations < opts.max_iter {
        iterations += 1;
        let m = v.norm();
        if collapsed(m) {
            return Err(PccError::ZeroVoltage { magnitude: m });
        }
        if f.norm() <= opts.tol {
            return Ok(PccSolution { v_pcc: v.into(), residual: f.norm(), iterations, newton: true });
        }
        // J = I − D·[x/m, y/m]
        let d = rhs_slope(zeq, inj, m);
        let (ux, uy) = (v.re / m, v.im / m);
        let (j11, j12) = (1.0 - d.re * ux, -d.re * uy);
        let (j21, j22) = (-d.im * ux, 1.0 - d.im * uy);
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            break;
        }
        let dx = (j22 * f.re - j12 * f.im) / det;
        let dy = (-j21 * f.re + j11 * f.im) / det;
        let step = Complex64::new(-dx, -dy);

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = v + step * t;
            if !collapsed(trial.norm()) {
                let ft = residual_at(trial);
                if ft.norm() < f.norm() {
                    v = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if f.norm() <= opts.tol {
        return Ok(PccSolution { v_pcc: v.into(), residual: f.norm(), iterations, newton: true });
    }
    Err(PccError::NonConvergence { residual: f.norm(), iterations })
}

/// Generation voltage behind line and virtual impedance of inverter `p`.
pub fn inverter_terminal_voltage(
    p: usize,
    v_pcc: Phasor,
    series: Impedance,
    inj: &InjectionState,
) -> Result<Phasor, PccError> {
    if p >= inj.len() {
        return Err(PccError::IndexOutOfRange { index: p, len: inj.len() });
    }
    let m = v_pcc.magnitude();
    if !(m > 0.0) {
        return Err(PccError::NonPositiveVoltage(m));
    }
    let i = inj.current(p, m);
    Ok((v_pcc.to_complex() + series.to_complex() * unit(inj.theta_cg[p]) * i).into())
}

/// q-axis components against a frame at `ref_angle`, evaluated termwise:
///
/// ```text
/// V_pcc,q = V_th,q + Σ |z_eq,i|·I_i·sin(θ_cg,i − ref + γ_i)
/// V_g,p,q = V_pcc,q + |Z_g,p + Z_v,p|·I_p·sin(θ_cg,p − ref + ψ_p)
/// ```
pub fn q_components(
    grid: &TheveninEquivalent,
    zeq: &EquivalentImpedanceSet,
    series: &[Impedance],
    inj: &InjectionState,
    v_pcc: Phasor,
    ref_angle: f64,
) -> Result<QComponents, PccError> {
    check_lengths(zeq, inj)?;
    if series.len() != inj.len() {
        return Err(PccError::LengthMismatch { what: "series impedances", got: series.len(), expected: inj.len() });
    }
    let m = v_pcc.magnitude();
    if !(m > 0.0) {
        return Err(PccError::NonPositiveVoltage(m));
    }
    let currents: Vec<f64> = (0..inj.len()).map(|p| inj.current(p, m)).collect();
    let mut v_pcc_q = dq_components(grid.v_th, ref_angle).q;
    for (p, &i) in currents.iter().enumerate() {
        v_pcc_q += zeq.z_eq[p].magnitude() * i * (inj.theta_cg[p] - ref_angle + zeq.gamma[p]).sin();
    }
    let v_gq = currents
        .iter()
        .enumerate()
        .map(|(p, &i)| v_pcc_q + series[p].magnitude() * i * (inj.theta_cg[p] - ref_angle + series[p].angle()).sin())
        .collect();
    Ok(QComponents { v_pcc_q, v_gq })
}

/// Generation voltage, its q projection on the inverter's own injection
/// frame, and the current for every inverter.
pub fn operating_points(
    v_pcc: Phasor,
    series: &[Impedance],
    inj: &InjectionState,
) -> Result<Vec<InverterOperatingPoint>, PccError> {
    (0..inj.len())
        .map(|p| {
            let v_g = inverter_terminal_voltage(p, v_pcc, series[p], inj)?;
            Ok(InverterOperatingPoint {
                v_g,
                v_gq: dq_components(v_g, inj.theta_cg[p]).q,
                i_mag: inj.current(p, v_pcc.magnitude()),
            })
        })
        .collect()
}

/// Aggregate short-circuit current `Σ|S_i| / |v_pcc|`.
pub fn total_injected_current(inj: &InjectionState, v_pcc_mag: f64) -> Result<f64, PccError> {
    if !(v_pcc_mag > 0.0) {
        return Err(PccError::NonPositiveVoltage(v_pcc_mag));
    }
    Ok(inj.s.iter().map(|s| s.abs()).sum::<f64>() / v_pcc_mag)
}
