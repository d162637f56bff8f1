#![allow(dead_code)]

pub mod oracle;

use gflswing::config::{table1_config, RunConfig};
use gflswing::dynamics::{simulate, FaultScenario, InverterConfig, Trajectory};
use gflswing::stability::{evaluate_clearing, CctSearch};

pub fn reference() -> RunConfig {
    table1_config()
}

pub fn uncleared(cfg: &RunConfig, depth: f64, t_end: f64) -> FaultScenario {
    FaultScenario { t_clear: None, fault_depth: depth, t_end, ..cfg.scenario }
}

pub fn run(cfg: &RunConfig, fleet: &[InverterConfig], scenario: &FaultScenario) -> Trajectory {
    simulate(fleet, &cfg.grid, scenario, &cfg.study.dynamics).expect("simulation runs")
}

/// Search settings for tests: no audit, the bundled bracket.
pub fn search(cfg: &RunConfig) -> CctSearch {
    CctSearch { audit_points: 0, ..cfg.search }
}

/// Verdicts on a uniform grid of clearing intervals.
pub fn linear_scan(cfg: &RunConfig, fleet: &[InverterConfig], base: &FaultScenario, from: f64, to: f64, step: f64) -> Vec<(f64, bool)> {
    let n = ((to - from) / step).round() as usize;
    (0..=n)
        .map(|k| {
            let tau = from + k as f64 * step;
            let (v, _) = evaluate_clearing(fleet, &cfg.grid, base, tau, cfg.search.post_clear_time, &cfg.study, true)
                .expect("evaluation runs");
            (tau, v.stable)
        })
        .collect()
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}
