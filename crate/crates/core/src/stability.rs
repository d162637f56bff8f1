//! Stability verdicts, loss-of-synchronism ordering, critical clearing time
//! search and the uniform-fleet comparison.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{simulate, uniform_fleet, DynamicsError, DynamicsOptions, FaultScenario, InverterConfig, Trajectory};
use crate::network::GridModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory ends at {got} s but the verdict needs data up to {needed} s")]
    TrajectoryTooShort { needed: f64, got: f64 },
    #[error("no inverter lost synchronism")]
    EmptyOrder,
    #[error("invalid CCT search: {0}")]
    InvalidSearch(String),
    #[error(
        "clearing-time bracket is invalid: at t_min {} the run is {}, at t_max {} it is {}",
        .t_min, verdict_word(.lo), .t_max, verdict_word(.hi)
    )]
    BracketInvalid { t_min: f64, t_max: f64, lo: Box<StabilityVerdict>, hi: Box<StabilityVerdict> },
    #[error("stability is not monotone in clearing time ({} verdict changes over {} samples)", .0.transitions, .0.samples.len())]
    MonotonicityViolation(MonotonicityAudit),
    #[error("comparison needs at least two inverters, got {0}")]
    FleetTooSmall(usize),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

fn verdict_word(v: &StabilityVerdict) -> &'static str {
    if v.stable {
        "stable"
    } else {
        "unstable"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub first_unstable: Option<String>,
    pub first_unstable_index: Option<usize>,
    pub t_unstable: Option<f64>,
    /// Time after which every angle stayed inside the settle tolerance.
    pub t_settled: Option<f64>,
    /// Largest |θ_cg − θ_cg(0)| over the whole run.
    pub max_angle_excursion: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCriteria {
    pub settle_tol: f64,
    pub settle_window: f64,
    pub divergence_bound: f64,
}

impl Default for StabilityCriteria {
    fn default() -> Self {
        Self { settle_tol: 0.02, settle_window: 1e-3, divergence_bound: PI }
    }
}

/// First time each inverter tripped or drifted past `bound`.
fn loss_times(traj: &Trajectory, bound: f64) -> Vec<Option<f64>> {
    let n = traj.fleet.len();
    let mut out = vec![None; n];
    let Some(first) = traj.records.first() else { return out };
    for r in &traj.records {
        for (p, s) in r.inverters.iter().enumerate() {
            if out[p].is_none() && (s.tripped || (s.theta_cg - first.inverters[p].theta_cg).abs() > bound) {
                out[p] = Some(r.t);
            }
        }
    }
    out
}

/// Indices sorted by loss time, ties toward the larger rating.
fn ordered_losses(traj: &Trajectory, bound: f64) -> Vec<(usize, f64)> {
    let mut lost: Vec<(usize, f64)> =
        loss_times(traj, bound).into_iter().enumerate().filter_map(|(p, t)| t.map(|t| (p, t))).collect();
    lost.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(traj.fleet[b.0].s_rated.total_cmp(&traj.fleet[a.0].s_rated))
            .then(a.0.cmp(&b.0))
    });
    lost
}

/// Verdict with the default divergence bound of π.
pub fn classify(traj: &Trajectory, settle_tol: f64, settle_window: f64) -> Result<StabilityVerdict, StabilityError> {
    classify_with(traj, &StabilityCriteria { settle_tol, settle_window, ..Default::default() })
}

/// Stable iff nothing tripped or diverged and every angle sits inside the
/// tolerance for the final window. A run that neither diverges nor settles
/// is unstable, blamed on the inverter furthest out at the end.
pub fn classify_with(traj: &Trajectory, c: &StabilityCriteria) -> Result<StabilityVerdict, StabilityError> {
    let first = traj.records.first().ok_or(StabilityError::EmptyTrajectory)?;
    let theta0: Vec<f64> = first.inverters.iter().map(|s| s.theta_cg).collect();
    let excursion = |r: &crate::dynamics::TrajectoryRecord| {
        r.inverters
            .iter()
            .zip(&theta0)
            .map(|(s, t0)| (s.theta_cg - t0).abs())
            .fold(0.0f64, f64::max)
    };
    let max_angle_excursion = traj.records.iter().map(excursion).fold(0.0, f64::max);
    let name = |p: usize| traj.fleet.get(p).map_or_else(|| format!("#{p}"), |c| c.name.clone());

    if let Some(&(p, t)) = ordered_losses(traj, c.divergence_bound).first() {
        return Ok(StabilityVerdict {
            stable: false,
            first_unstable: Some(name(p)),
            first_unstable_index: Some(p),
            t_unstable: Some(t),
            t_settled: None,
            max_angle_excursion,
        });
    }

    let t_last = traj.t_last();
    let needed = traj.scenario.t_clear.unwrap_or(0.0) + c.settle_window;
    if t_last + 1e-12 < needed {
        return Err(StabilityError::TrajectoryTooShort { needed, got: t_last });
    }

    let window_start = t_last - c.settle_window;
    let settled_from = traj
        .records
        .iter()
        .rposition(|r| excursion(r) > c.settle_tol)
        .map_or(Some(first.t), |i| traj.records.get(i + 1).map(|r| r.t));
    if settled_from.is_some_and(|t| t <= window_start + 1e-12) {
        return Ok(StabilityVerdict {
            stable: true,
            first_unstable: None,
            first_unstable_index: None,
            t_unstable: None,
            t_settled: settled_from,
            max_angle_excursion,
        });
    }

    let last = traj.records.last().expect("non-empty");
    let worst = last
        .inverters
        .iter()
        .zip(&theta0)
        .map(|(s, t0)| (s.theta_cg - t0).abs())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(0, |(p, _)| p);
    Ok(StabilityVerdict {
        stable: false,
        first_unstable: Some(name(worst)),
        first_unstable_index: Some(worst),
        t_unstable: Some(t_last),
        t_settled: None,
        max_angle_excursion,
    })
}

/// Inverters that lost synchronism, by ascending loss time. Equal times
/// put the larger rating first.
pub fn sync_loss_order(traj: &Trajectory) -> Result<Vec<(String, f64)>, StabilityError> {
    let order: Vec<(String, f64)> =
        ordered_losses(traj, PI).into_iter().map(|(p, t)| (traj.fleet[p].name.clone(), t)).collect();
    if order.is_empty() {
        return Err(StabilityError::EmptyOrder);
    }
    Ok(order)
}

/// Spread between the first and last loss of synchronism.
pub fn loss_time_spread(traj: &Trajectory) -> Result<f64, StabilityError> {
    let order = sync_loss_order(traj)?;
    Ok(order.last().expect("non-empty").1 - order[0].1)
}

/// Clearing-interval bracket and resolution for the CCT search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CctSearch {
    /// Shortest clearing interval, expected stable, seconds.
    pub t_min: f64,
    /// Longest clearing interval, expected unstable, seconds.
    pub t_max: f64,
    pub resolution: f64,
    /// Simulated time after clearing, seconds.
    pub post_clear_time: f64,
    /// Evenly spaced monotonicity samples; 0 skips the audit.
    pub audit_points: usize,
}

impl Default for CctSearch {
    fn default() -> Self {
        Self { t_min: 0.05e-3, t_max: 8e-3, resolution: 0.01e-3, post_clear_time: 20e-3, audit_points: 5 }
    }
}

impl CctSearch {
    pub fn validate(&self) -> Result<(), StabilityError> {
        let bad = |m: String| Err(StabilityError::InvalidSearch(m));
        if !(self.resolution > 0.0) {
            return bad(format!("resolution must be positive, got {}", self.resolution));
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max) {
            return bad(format!("need 0 < t_min < t_max, got t_min={} t_max={}", self.t_min, self.t_max));
        }
        if !(self.post_clear_time >= 0.0) {
            return bad(format!("post_clear_time must be non-negative, got {}", self.post_clear_time));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub dynamics: DynamicsOptions,
    pub criteria: StabilityCriteria,
}

impl StudyOptions {
    fn dynamics_for_search(&self, stop_early: bool) -> DynamicsOptions {
        DynamicsOptions {
            divergence_bound: self.criteria.divergence_bound,
            stop_on_instability: stop_early,
            ..self.dynamics
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CctEvaluation {
    pub clearing_time: f64,
    pub stable: bool,
    pub first_unstable: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityAudit {
    pub samples: Vec<CctEvaluation>,
    /// Number of verdict changes between consecutive samples.
    pub transitions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CctResult {
    pub cct: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub evaluations: usize,
    pub loss_order: Vec<String>,
    pub log: Vec<CctEvaluation>,
    pub audit: Option<MonotonicityAudit>,
}

/// Scenario with the fault cleared `clearing_time` after inception.
pub fn scenario_with_clearing(base: &FaultScenario, clearing_time: f64, post_clear_time: f64) -> FaultScenario {
    let t_clear = base.t_fault + clearing_time;
    FaultScenario { t_clear: Some(t_clear), t_end: base.t_end.max(t_clear + post_clear_time), ..*base }
}

/// Simulates one clearing interval and classifies it.
pub fn evaluate_clearing(
    fleet: &[InverterConfig],
    grid: &GridModel,
    base: &FaultScenario,
    clearing_time: f64,
    post_clear_time: f64,
    opts: &StudyOptions,
    stop_early: bool,
) -> Result<(StabilityVerdict, Trajectory), StabilityError> {
    let scenario = scenario_with_clearing(base, clearing_time, post_clear_time);
    let traj = simulate(fleet, grid, &scenario, &opts.dynamics_for_search(stop_early))?;
    let verdict = classify_with(&traj, &opts.criteria)?;
    Ok((verdict, traj))
}

fn count_transitions(samples: &[CctEvaluation]) -> usize {
    samples.windows(2).filter(|w| w[0].stable != w[1].stable).count()
}

/// Verdicts at `points` evenly spaced clearing times across the bracket,
/// run in parallel.
pub fn audit_monotonicity(
    fleet: &[InverterConfig],
    grid: &GridModel,
    base: &FaultScenario,
    search: &CctSearch,
    points: usize,
    opts: &StudyOptions,
) -> Result<MonotonicityAudit, StabilityError> {
    let points = points.max(2);
    let times: Vec<f64> = (0..points)
        .map(|k| search.t_min + (search.t_max - search.t_min) * k as f64 / (points - 1) as f64)
        .collect();
    let samples = times
        .par_iter()
        .map(|&tau| {
            let (v, _) = evaluate_clearing(fleet, grid, base, tau, search.post_clear_time, opts, true)?;
            Ok(CctEvaluation { clearing_time: tau, stable: v.stable, first_unstable: v.first_unstable })
        })
        .collect::<Result<Vec<_>, StabilityError>>()?;
    let transitions = count_transitions(&samples);
    Ok(MonotonicityAudit { samples, transitions })
}

/// Bisection on the clearing interval. The endpoints of the final bracket
/// are re-simulated to confirm stable/unstable, and the unstable one supplies
/// the loss order.
pub fn find_cct(
    fleet: &[InverterConfig],
    grid: &GridModel,
    base: &FaultScenario,
    search: &CctSearch,
    opts: &StudyOptions,
) -> Result<CctResult, StabilityError> {
    search.validate()?;
    let mut log = Vec::new();
    let eval = |tau: f64, log: &mut Vec<CctEvaluation>| -> Result<StabilityVerdict, StabilityError> {
        let (v, _) = evaluate_clearing(fleet, grid, base, tau, search.post_clear_time, opts, true)?;
        log::debug!("clearing {:.4} ms -> {}", tau * 1e3, verdict_word(&v));
        log.push(CctEvaluation { clearing_time: tau, stable: v.stable, first_unstable: v.first_unstable.clone() });
        Ok(v)
    };

    let lo_v = eval(search.t_min, &mut log)?;
    let hi_v = eval(search.t_max, &mut log)?;
    if !lo_v.stable || hi_v.stable {
        return Err(StabilityError::BracketInvalid {
            t_min: search.t_min,
            t_max: search.t_max,
            lo: Box::new(lo_v),
            hi: Box::new(hi_v),
        });
    }

    let (mut lo, mut hi) = (search.t_min, search.t_max);
    while hi - lo > search.resolution {
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut log)?.stable {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let (confirm_lo, _) = evaluate_clearing(fleet, grid, base, lo, search.post_clear_time, opts, false)?;
    let (confirm_hi, hi_traj) = evaluate_clearing(fleet, grid, base, hi, search.post_clear_time, opts, false)?;
    if !confirm_lo.stable || confirm_hi.stable {
        // Early stopping and full runs share every step up to the first
        // trip, so this only fires on a genuinely non-deterministic model.
        return Err(StabilityError::BracketInvalid {
            t_min: lo,
            t_max: hi,
            lo: Box::new(confirm_lo),
            hi: Box::new(confirm_hi),
        });
    }
    let loss_order = ordered_losses(&hi_traj, opts.criteria.divergence_bound)
        .into_iter()
        .map(|(p, _)| fleet[p].name.clone())
        .collect();

    let audit = if search.audit_points > 0 {
        let audit = audit_monotonicity(fleet, grid, base, search, search.audit_points, opts)?;
        if audit.transitions > 1 {
            return Err(StabilityError::MonotonicityViolation(audit));
        }
        Some(audit)
    } else {
        None
    };

    Ok(CctResult {
        cct: 0.5 * (lo + hi),
        bracket_lo: lo,
        bracket_hi: hi,
        evaluations: log.len() + 2,
        loss_order,
        log,
        audit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetComparison {
    pub cct_nonuniform: f64,
    pub cct_uniform: f64,
    /// `cct_uniform − cct_nonuniform`.
    pub delta: f64,
    pub uniform_fleet: Vec<InverterConfig>,
    pub nonuniform_result: CctResult,
    pub uniform_result: CctResult,
}

/// CCT of the fleet against the CCT of its mean-parameter counterpart.
pub fn compare_uniform(
    fleet: &[InverterConfig],
    grid: &GridModel,
    base: &FaultScenario,
    search: &CctSearch,
    opts: &StudyOptions,
) -> Result<FleetComparison, StabilityError> {
    if fleet.len() < 2 {
        return Err(StabilityError::FleetTooSmall(fleet.len()));
    }
    let uniform = uniform_fleet(fleet);
    let (a, b) = rayon::join(
        || find_cct(fleet, grid, base, search, opts),
        || find_cct(&uniform, grid, base, search, opts),
    );
    let (nonuniform_result, uniform_result) = (a?, b?);
    Ok(FleetComparison {
        cct_nonuniform: nonuniform_result.cct,
        cct_uniform: uniform_result.cct,
        delta: uniform_result.cct - nonuniform_result.cct,
        uniform_fleet: uniform,
        nonuniform_result,
        uniform_result,
    })
}
