//! Cartesian parameter sweeps.
//!
//! Cells with a clearing time are simulated and classified; cells without
//! one run a CCT search. A failing cell records its error and the sweep
//! carries on.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};
use crate::dynamics::{scale_s_rated, scale_xr, simulate, FaultScenario};
use crate::report::{csv_field, fmt_float};
use crate::stability::{classify_with, find_cct, scenario_with_clearing, StabilityError};

/// Axes of the sweep. An empty axis keeps the base configuration's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub fault_depth: Vec<f64>,
    /// Clearing interval after fault inception, seconds.
    #[serde(default)]
    pub clearing_time: Vec<f64>,
    #[serde(default)]
    pub s_rated_scale: Vec<f64>,
    #[serde(default)]
    pub xr_scale: Vec<f64>,
    /// Inverter the scale axes apply to; all when absent.
    pub target: Option<String>,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let spec: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let check = |axis: &str, values: &[f64], ok: fn(f64) -> bool, what: &str| {
            for (i, &v) in values.iter().enumerate() {
                if !ok(v) {
                    return Err(ConfigError::Invalid {
                        field: format!("{axis}[{i}]"),
                        message: format!("{what}, got {v}"),
                    });
                }
            }
            Ok(())
        };
        check("fault_depth", &self.fault_depth, |v| (0.0..=1.0).contains(&v), "must lie in [0, 1]")?;
        check("clearing_time", &self.clearing_time, |v| v > 0.0 && v.is_finite(), "must be positive")?;
        check("s_rated_scale", &self.s_rated_scale, |v| v > 0.0 && v.is_finite(), "must be positive")?;
        check("xr_scale", &self.xr_scale, |v| v >= 0.0 && v.is_finite(), "must be non-negative")?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub fault_depth: f64,
    pub clearing_time: Option<f64>,
    pub s_rated_scale: f64,
    pub xr_scale: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub stable: Option<bool>,
    pub first_unstable: Option<String>,
    pub t_unstable: Option<f64>,
    pub cct: Option<f64>,
    pub bracket_lo: Option<f64>,
    pub bracket_hi: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub outcome: CellOutcome,
}

fn axis(values: &[f64], fallback: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

/// Cells in row-major order: fault depth outermost, X/R scale innermost.
pub fn cells(spec: &SweepSpec, base: &FaultScenario) -> Vec<SweepCell> {
    let clearing: Vec<Option<f64>> =
        if spec.clearing_time.is_empty() { vec![None] } else { spec.clearing_time.iter().copied().map(Some).collect() };
    let mut out = Vec::new();
    for &fault_depth in &axis(&spec.fault_depth, base.fault_depth) {
        for &clearing_time in &clearing {
            for &s_rated_scale in &axis(&spec.s_rated_scale, 1.0) {
                for &xr_scale in &axis(&spec.xr_scale, 1.0) {
                    out.push(SweepCell { fault_depth, clearing_time, s_rated_scale, xr_scale });
                }
            }
        }
    }
    out
}

fn run_cell(cfg: &RunConfig, target: Option<usize>, cell: &SweepCell) -> Result<CellOutcome, StabilityError> {
    let fleet = scale_xr(&scale_s_rated(&cfg.fleet, target, cell.s_rated_scale), target, cell.xr_scale);
    let base = FaultScenario { fault_depth: cell.fault_depth, ..cfg.scenario };
    match cell.clearing_time {
        Some(tau) => {
            let scenario = scenario_with_clearing(&base, tau, cfg.search.post_clear_time);
            let traj = simulate(&fleet, &cfg.grid, &scenario, &cfg.study.dynamics)?;
            let v = classify_with(&traj, &cfg.study.criteria)?;
            Ok(CellOutcome {
                stable: Some(v.stable),
                first_unstable: v.first_unstable,
                t_unstable: v.t_unstable,
                ..Default::default()
            })
        }
        None => {
            let base = FaultScenario { t_clear: None, ..base };
            let r = find_cct(&fleet, &cfg.grid, &base, &cfg.search, &cfg.study)?;
            Ok(CellOutcome {
                cct: Some(r.cct),
                bracket_lo: Some(r.bracket_lo),
                bracket_hi: Some(r.bracket_hi),
                first_unstable: r.loss_order.first().cloned(),
                ..Default::default()
            })
        }
    }
}

/// Runs every cell on the current rayon pool. Row order matches [`cells`].
pub fn run_sweep(cfg: &RunConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>, ConfigError> {
    let target = match &spec.target {
        None => None,
        Some(name) => Some(cfg.fleet.iter().position(|c| &c.name == name).ok_or_else(|| ConfigError::Invalid {
            field: "target".into(),
            message: format!("no inverter named {name:?}"),
        })?),
    };
    Ok(cells(spec, &cfg.scenario)
        .into_par_iter()
        .map(|cell| {
            let outcome = run_cell(cfg, target, &cell)
                .unwrap_or_else(|e| CellOutcome { error: Some(e.to_string()), ..Default::default() });
            SweepRow { cell, outcome }
        })
        .collect())
}

pub const SWEEP_HEADER: &str = "cell,fault_depth,clearing_time_s,s_rated_scale,xr_scale,stable,first_unstable,\
t_unstable_s,cct_s,bracket_lo_s,bracket_hi_s,error";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let opt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        let c = &r.cell;
        let o = &r.outcome;
        let fields = [
            i.to_string(),
            fmt_float(c.fault_depth),
            opt(c.clearing_time),
            fmt_float(c.s_rated_scale),
            fmt_float(c.xr_scale),
            o.stable.map(|s| if s { "1" } else { "0" }.to_string()).unwrap_or_default(),
            csv_field(o.first_unstable.as_deref().unwrap_or("")),
            opt(o.t_unstable),
            opt(o.cct),
            opt(o.bracket_lo),
            opt(o.bracket_hi),
            csv_field(o.error.as_deref().unwrap_or("")),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
