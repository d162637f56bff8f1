//! Fixed-step time-domain simulation of the fleet across the pre-fault,
//! fault-on and post-fault intervals.
//!
//! Each step advances every active PLL on the q component of its own
//! generation voltage, re-solves the PCC voltage with current limiting, and
//! evaluates the trip rules. A tripped inverter injects nothing for the rest
//! of the run.

mod fleet;
mod pll;

pub use fleet::{
    reference_fleet, scale_s_rated, scale_xr, uniform_fleet, with_xr_ratio, InverterConfig, DEFAULT_TRIP_HOLDOFF,
    I_MAX_HEADROOM, NOMINAL_VOLTAGE, SYSTEM_FREQUENCY_HZ,
};
pub use pll::{pll_step, PllState, PllTuning};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{equivalent_impedance, faulted_grid, EquivalentImpedanceSet, GridModel, NetworkError, TheveninEquivalent};
use crate::pcc::{evaluate_lagged, q_components, solve_vpcc, InjectionState, PccError, SolverOptions};
use crate::phasor::{dq_components, Impedance, Phasor};

pub const DEFAULT_DT: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("inverter fleet is empty")]
    EmptyFleet,
    #[error("inverter {index}: {reason}")]
    InvalidInverter { index: usize, reason: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no pre-fault equilibrium: {0}")]
    InitializationFailure(String),
    #[error("v_pcc magnitude must be positive, got {0}")]
    NonPositiveVoltage(f64),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Pcc(#[from] PccError),
}

/// Current command after the peak-current clamp.
pub fn limited_current(s_ref: f64, v_pcc_mag: f64, i_max: f64) -> Result<(f64, bool), DynamicsError> {
    if !(v_pcc_mag > 0.0) {
        return Err(DynamicsError::NonPositiveVoltage(v_pcc_mag));
    }
    let i = s_ref / v_pcc_mag;
    Ok(if i > i_max { (i_max, true) } else { (i, false) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripCause {
    /// Limiter engaged for at least the hold-off time.
    Overcurrent,
    /// Injection angle drifted past the divergence bound.
    Divergence,
    /// The PCC equation had no solution.
    Collapse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripEvent {
    pub index: usize,
    pub name: String,
    pub t: f64,
    pub cause: TripCause,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverterState {
    pub pll: PllState,
    pub theta_cg: f64,
    pub i_cmd: f64,
    /// q component of the generation voltage in the PLL frame, as last solved.
    pub v_gq: f64,
    pub limited: bool,
    pub limited_since: Option<f64>,
    pub tripped: bool,
    pub trip_time: Option<f64>,
}

/// Fault timing. `t_clear = None` leaves the fault on until `t_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub t_fault: f64,
    pub t_clear: Option<f64>,
    pub fault_depth: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl FaultScenario {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: String| Err(DynamicsError::InvalidScenario(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_fault >= 0.0 && self.t_fault < self.t_end) {
            return bad(format!("need 0 <= t_fault < t_end, got t_fault={} t_end={}", self.t_fault, self.t_end));
        }
        if let Some(tc) = self.t_clear {
            if !(tc > self.t_fault && tc <= self.t_end) {
                return bad(format!("need t_fault < t_clear <= t_end, got t_clear={tc}"));
            }
        }
        if !(0.0..=1.0).contains(&self.fault_depth) {
            return bad(format!("fault_depth must lie in [0, 1], got {}", self.fault_depth));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn fault_step(&self) -> usize {
        (self.t_fault / self.dt).round() as usize
    }

    fn clear_step(&self) -> Option<usize> {
        self.t_clear.map(|t| (t / self.dt).round() as usize)
    }

    /// Whether step `k` falls inside the fault-on interval.
    pub fn is_faulted(&self, k: usize) -> bool {
        k >= self.fault_step() && self.clear_step().is_none_or(|c| k < c)
    }

    /// Clearing interval length, if cleared.
    pub fn clearing_time(&self) -> Option<f64> {
        self.t_clear.map(|tc| tc - self.t_fault)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverterSample {
    pub theta_cg: f64,
    pub i_mag: f64,
    /// Current component in quadrature with the pre-fault source, positive
    /// when leading it.
    pub i_q: f64,
    pub v_gq: f64,
    pub limited: bool,
    pub tripped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub v_pcc_mag: f64,
    pub v_pcc_angle: f64,
    pub inverters: Vec<InverterSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub scenario: FaultScenario,
    pub fleet: Vec<InverterConfig>,
    pub events: Vec<TripEvent>,
    /// Time at which the PCC solve failed, if it did.
    pub collapse: Option<f64>,
    /// Whether the run was cut short at the first instability.
    pub truncated: bool,
}

impl Trajectory {
    pub fn prefault_angles(&self) -> Vec<f64> {
        self.records[0].inverters.iter().map(|s| s.theta_cg).collect()
    }

    pub fn t_last(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }
}

/// Solver settings used inside the time loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSolver {
    /// Tolerance relative to the pre-fault source magnitude.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Use the previous step's |v_pcc| in the current denominator instead
    /// of solving the implicit equation.
    pub lag_mode: bool,
}

impl Default for StepSolver {
    fn default() -> Self {
        Self {
            rel_tol: SolverOptions::DEFAULT_REL_TOL,
            max_iter: SolverOptions::DEFAULT_MAX_ITER,
            damping: SolverOptions::DEFAULT_DAMPING,
            lag_mode: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsOptions {
    pub pll: PllTuning,
    pub solver: StepSolver,
    /// Unwrapped angle deviation from pre-fault that counts as divergence.
    pub divergence_bound: f64,
    /// Stop at the first trip; the verdict is already known.
    pub stop_on_instability: bool,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self { pll: PllTuning::default(), solver: StepSolver::default(), divergence_bound: PI, stop_on_instability: false }
    }
}

/// Outcome of one [`Simulator::step`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub tripped: Vec<usize>,
    pub collapsed: bool,
}

/// Stepping state for one run.
#[derive(Clone, Debug)]
pub struct Simulator {
    fleet: Vec<InverterConfig>,
    series: Vec<Impedance>,
    z_load: Impedance,
    opts: DynamicsOptions,
    tol: f64,
    grid_reference: f64,
    theta_cg0: Vec<f64>,
    zeq_cache: Option<(Impedance, EquivalentImpedanceSet)>,
    pub t: f64,
    pub v_pcc: Phasor,
    pub inverters: Vec<InverterState>,
    pub events: Vec<TripEvent>,
    pub collapse: Option<f64>,
}

impl Simulator {
    /// Locks every PLL at the pre-fault equilibrium.
    pub fn new(fleet: &[InverterConfig], grid: &GridModel, opts: DynamicsOptions) -> Result<Self, DynamicsError> {
        if fleet.is_empty() {
            return Err(DynamicsError::EmptyFleet);
        }
        for (i, c) in fleet.iter().enumerate() {
            c.validate(i)?;
        }
        let series: Vec<Impedance> = fleet.iter().map(InverterConfig::series_impedance).collect();
        let mut sim = Self {
            fleet: fleet.to_vec(),
            series,
            z_load: grid.z_load,
            opts,
            tol: opts.solver.rel_tol * grid.prefault.v_th.magnitude().max(1.0),
            grid_reference: grid.prefault.v_th.angle(),
            theta_cg0: Vec::new(),
            zeq_cache: None,
            t: 0.0,
            v_pcc: grid.prefault.v_th,
            inverters: Vec::new(),
            events: Vec::new(),
            collapse: None,
        };
        sim.initialize(&grid.prefault)?;
        Ok(sim)
    }

    fn zeq(&mut self, grid: &TheveninEquivalent) -> Result<EquivalentImpedanceSet, DynamicsError> {
        if let Some((z, set)) = &self.zeq_cache {
            if *z == grid.z_th {
                return Ok(set.clone());
            }
        }
        let set = equivalent_impedance(&self.fleet, grid, self.z_load)?;
        self.zeq_cache = Some((grid.z_th, set.clone()));
        Ok(set)
    }

    fn injections(&self, theta_cg: &[f64]) -> InjectionState {
        let s = self
            .fleet
            .iter()
            .zip(&self.inverters)
            .map(|(c, st)| if st.tripped { 0.0 } else { c.s_rated })
            .collect::<Vec<_>>();
        let i_max = self.fleet.iter().map(|c| c.i_max).collect();
        InjectionState { s, theta_cg: theta_cg.to_vec(), i_max: Some(i_max) }
    }

    /// Fixed-point iteration on the PLL angles: each locks onto the angle
    /// of its own generation voltage.
    fn initialize(&mut self, grid: &TheveninEquivalent) -> Result<(), DynamicsError> {
        let n = self.fleet.len();
        let fail = |m: String| DynamicsError::InitializationFailure(m);
        let zeq = self.zeq(grid)?;
        let mut theta = vec![grid.v_th.angle(); n];
        self.inverters = vec![
            InverterState {
                pll: PllState::default(),
                theta_cg: 0.0,
                i_cmd: 0.0,
                v_gq: 0.0,
                limited: false,
                limited_since: None,
                tripped: false,
                trip_time: None,
            };
            n
        ];
        let opts = SolverOptions {
            tol: 1e-13 * grid.v_th.magnitude().max(1.0),
            max_iter: 500,
            damping: self.opts.solver.damping,
            seed: None,
        };
        let mut v = grid.v_th;
        let mut converged = false;
        for _ in 0..1000 {
            let theta_cg: Vec<f64> = theta.iter().zip(&self.fleet).map(|(t, c)| t + c.pf_angle).collect();
            let inj = self.injections(&theta_cg);
            let sol = solve_vpcc(grid, &zeq, &inj, &opts.with_seed(v)).map_err(|e| fail(e.to_string()))?;
            v = sol.v_pcc;
            let m = v.magnitude();
            let mut delta: f64 = 0.0;
            for p in 0..n {
                let i = inj.current(p, m);
                let v_g = v + self.series[p] * Phasor::from_polar(i, theta_cg[p]).expect("non-negative current");
                let dq = dq_components(v_g, theta[p]);
                let step = dq.q.atan2(dq.d);
                theta[p] += step;
                delta = delta.max(step.abs());
            }
            if delta < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(fail("PLL angles did not settle".into()));
        }
        for (p, st) in self.inverters.iter_mut().enumerate() {
            st.pll = PllState::locked_at(theta[p]);
            st.theta_cg = theta[p] + self.fleet[p].pf_angle;
        }
        self.theta_cg0 = self.inverters.iter().map(|s| s.theta_cg).collect();
        self.v_pcc = v;
        self.t = 0.0;
        self.resolve_network(grid)?;
        Ok(())
    }

    pub fn fleet(&self) -> &[InverterConfig] {
        &self.fleet
    }

    pub fn prefault_angles(&self) -> &[f64] {
        &self.theta_cg0
    }

    /// Removes inverter `p` from the network from now on.
    pub fn force_trip(&mut self, p: usize, cause: TripCause) {
        let st = &mut self.inverters[p];
        if st.tripped {
            return;
        }
        st.tripped = true;
        st.trip_time = Some(self.t);
        st.limited = false;
        st.limited_since = None;
        self.events.push(TripEvent { index: p, name: self.fleet[p].name.clone(), t: self.t, cause });
    }

    fn current_angles(&self) -> Vec<f64> {
        self.inverters.iter().map(|s| s.theta_cg).collect()
    }

    /// Solves the network at the present angles without advancing any PLL,
    /// refreshing `v_pcc`, currents, limiter flags and PLL errors.
    pub fn resolve_network(&mut self, grid: &TheveninEquivalent) -> Result<(), DynamicsError> {
        let zeq = self.zeq(grid)?;
        let theta_cg = self.current_angles();
        let inj = self.injections(&theta_cg);
        let sol = if self.opts.solver.lag_mode {
            evaluate_lagged(grid, &zeq, &inj, self.v_pcc)?
        } else {
            let opts = SolverOptions {
                tol: self.tol,
                max_iter: self.opts.solver.max_iter,
                damping: self.opts.solver.damping,
                seed: Some(self.v_pcc),
            };
            solve_vpcc(grid, &zeq, &inj, &opts)?
        };
        self.v_pcc = sol.v_pcc;
        let m = sol.v_pcc.magnitude();
        for p in 0..self.fleet.len() {
            if self.inverters[p].tripped {
                self.inverters[p].i_cmd = 0.0;
                continue;
            }
            let q = q_components(grid, &zeq, &self.series, &inj, sol.v_pcc, self.inverters[p].pll.theta)?;
            let st = &mut self.inverters[p];
            st.v_gq = q.v_gq[p];
            st.i_cmd = inj.current(p, m);
            st.limited = inj.is_limited(p, m);
        }
        Ok(())
    }

    /// Advances one step of length `dt` against the source `grid_now`.
    pub fn step(&mut self, grid_now: &TheveninEquivalent, dt: f64) -> Result<StepReport, DynamicsError> {
        let mut report = StepReport::default();
        if self.collapse.is_some() {
            self.t += dt;
            return Ok(report);
        }
        let tuning = self.opts.pll;
        for (c, st) in self.fleet.iter().zip(self.inverters.iter_mut()) {
            if st.tripped {
                continue;
            }
            st.pll = pll_step(st.pll, st.v_gq, c.kp * tuning.kp_scale, c.ki * tuning.ki_scale, dt);
            st.theta_cg = st.pll.theta + c.pf_angle;
        }
        self.t += dt;

        match self.resolve_network(grid_now) {
            Ok(()) => {}
            Err(DynamicsError::Pcc(e)) => {
                log::debug!("PCC solve failed at t = {:.6e} s: {e}", self.t);
                self.collapse = Some(self.t);
                report.collapsed = true;
                for p in 0..self.fleet.len() {
                    if !self.inverters[p].tripped {
                        self.force_trip(p, TripCause::Collapse);
                        report.tripped.push(p);
                    }
                }
                return Ok(report);
            }
            Err(e) => return Err(e),
        }

        let t = self.t;
        for p in 0..self.fleet.len() {
            let st = &mut self.inverters[p];
            if st.tripped {
                continue;
            }
            let cause = if st.limited {
                let since = *st.limited_since.get_or_insert(t);
                // Round-off guard so a hold-off that is a whole number of
                // steps trips on that step.
                (t - since >= self.fleet[p].trip_holdoff - 1e-12 * dt).then_some(TripCause::Overcurrent)
            } else {
                st.limited_since = None;
                None
            };
            let cause = cause.or_else(|| {
                ((st.theta_cg - self.theta_cg0[p]).abs() > self.opts.divergence_bound).then_some(TripCause::Divergence)
            });
            if let Some(cause) = cause {
                self.force_trip(p, cause);
                report.tripped.push(p);
            }
        }
        Ok(report)
    }

    pub fn record(&self) -> TrajectoryRecord {
        let inverters = self
            .inverters
            .iter()
            .map(|st| InverterSample {
                theta_cg: st.theta_cg,
                i_mag: st.i_cmd,
                i_q: st.i_cmd * (st.theta_cg - self.grid_reference).sin(),
                v_gq: st.v_gq,
                limited: st.limited,
                tripped: st.tripped,
            })
            .collect();
        TrajectoryRecord { t: self.t, v_pcc_mag: self.v_pcc.magnitude(), v_pcc_angle: self.v_pcc.angle(), inverters }
    }
}

/// Runs one scenario from the pre-fault equilibrium, recording every step.
pub fn simulate(
    fleet: &[InverterConfig],
    grid: &GridModel,
    scenario: &FaultScenario,
    opts: &DynamicsOptions,
) -> Result<Trajectory, DynamicsError> {
    scenario.validate()?;
    let faulted = faulted_grid(grid, scenario.fault_depth)?;
    let grid_at = |k: usize| if scenario.is_faulted(k) { &faulted } else { &grid.prefault };

    let mut sim = Simulator::new(fleet, grid, *opts)?;
    let n = scenario.steps();
    let mut records = Vec::with_capacity(n + 1);
    if scenario.is_faulted(0) {
        sim.resolve_network(grid_at(0))?;
    }
    records.push(sim.record());

    let mut truncated = false;
    for k in 1..=n {
        sim.step(grid_at(k), scenario.dt)?;
        // Recompute from the index so the time base never drifts.
        sim.t = k as f64 * scenario.dt;
        records.push(sim.record());
        if sim.collapse.is_some() {
            truncated = k < n;
            break;
        }
        if opts.stop_on_instability && !sim.events.is_empty() {
            truncated = k < n;
            break;
        }
    }
    Ok(Trajectory {
        records,
        scenario: *scenario,
        fleet: fleet.to_vec(),
        events: sim.events,
        collapse: sim.collapse,
        truncated,
    })
}
