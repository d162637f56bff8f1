//! Acceptance run: one PASS/FAIL line per criterion, each with its time
//! budget. Exits non-zero if any criterion fails.

mod common;

use std::cell::Cell;
use std::time::{Duration, Instant};

use common::oracle::{case, Case};
use common::{linear_scan, reference, run, search, uncleared};
use gflswing::config::RunConfig;
use gflswing::dynamics::{reference_fleet, with_xr_ratio, Simulator, TripCause, NOMINAL_VOLTAGE, SYSTEM_FREQUENCY_HZ};
use gflswing::network::{faulted_grid, EquivalentImpedanceSet, TheveninEquivalent};
use gflswing::pcc::{q_components, solve_vpcc, InjectionState, SolverOptions};
use gflswing::phasor::{dq_components, Impedance, Phasor};
use gflswing::stability::{
    classify_with, compare_uniform, evaluate_clearing, find_cct, scenario_with_clearing, sync_loss_order,
};
use gflswing::sweep::{run_sweep, SweepSpec};
use num_complex::Complex64;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn c1_table_consistency() -> Check {
    let want = [0.1005, 0.0565, 0.0754, 0.0646, 0.0817];
    let fleet = reference_fleet(NOMINAL_VOLTAGE);
    let mut worst: f64 = 0.0;
    for (c, w) in fleet.iter().zip(want) {
        let xr = c.z_line.xr_ratio().ok_or("zero resistance")?;
        worst = worst.max((xr - w).abs() / w);
    }
    ensure(worst < 5e-3, format!("worst X/R deviation {:.3}%", worst * 100.0))?;
    Ok(format!("X/R at {SYSTEM_FREQUENCY_HZ} Hz within {:.3}%", worst * 100.0))
}

fn c2_fixed_point() -> Check {
    let worst = Cell::new(0.0f64);
    runner(100)
        .run(&case(), |c: Case| {
            let want = c.newton();
            let (grid, zeq, inj) = c.crate_inputs();
            let got = solve_vpcc(&grid, &zeq, &inj, &SolverOptions::for_grid(&grid).with_tol(1e-12 * 230.0))
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let rel = (got.v_pcc.to_complex() - want).norm() / want.norm();
            worst.set(worst.get().max(rel));
            if rel < 1e-6 {
                Ok(())
            } else {
                Err(TestCaseError::fail(format!("relative error {rel}")))
            }
        })
        .map_err(|e| e.to_string())?;

    let v_th = Phasor::from_polar(230.0, 0.2).unwrap();
    let grid = TheveninEquivalent::new(v_th, Impedance::new(0.05, 0.5)).unwrap();
    let zeq = EquivalentImpedanceSet::from_impedances(vec![Impedance::new(0.2, 0.05); 3]);
    let inj = InjectionState::new(vec![0.0; 3], vec![0.1, 0.2, 0.3]).unwrap();
    let sol = solve_vpcc(&grid, &zeq, &inj, &SolverOptions::for_grid(&grid)).map_err(|e| e.to_string())?;
    let dev = (sol.v_pcc - v_th).magnitude() / 230.0;
    ensure(dev <= 1e-12, format!("zero injection moved v by {dev:e} relative"))?;
    Ok(format!("100 fleets, worst rel error {:.1e}; zero injection {dev:.1e}", worst.get()))
}

fn c3_termwise_q() -> Check {
    let worst = Cell::new(0.0f64);
    let strategy = (case(), 150.0f64..260.0, -60.0f64..60.0, -1.0f64..1.0);
    runner(1000)
        .run(&strategy, |(c, v_re, v_im, r)| {
            let (grid, zeq, inj) = c.crate_inputs();
            let series: Vec<Impedance> = c.z_eq.iter().map(|z| Impedance::new(z.re * 1.3, z.im * 0.7 + 0.01)).collect();
            let v = Phasor::new(v_re, v_im);
            let q = q_components(&grid, &zeq, &series, &inj, v, r).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let m = v.magnitude();
            let currents: Vec<Complex64> =
                (0..c.s.len()).map(|p| Complex64::from_polar(inj.current(p, m), c.theta[p])).collect();
            let v_pcc = c.v_th + c.z_eq.iter().zip(&currents).map(|(z, i)| z * i).sum::<Complex64>();
            let scale = v_pcc.norm();
            let mut err = (q.v_pcc_q - dq_components(v_pcc.into(), r).q).abs() / scale;
            for p in 0..c.s.len() {
                let v_g = v_pcc + series[p].to_complex() * currents[p];
                err = err.max((q.v_gq[p] - dq_components(v_g.into(), r).q).abs() / scale);
            }
            worst.set(worst.get().max(err));
            if err <= 1e-9 {
                Ok(())
            } else {
                Err(TestCaseError::fail(format!("relative gap {err:e}")))
            }
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("1000 inputs, worst relative gap {:.1e}", worst.get()))
}

fn c4_stationarity(cfg: &RunConfig) -> Check {
    let traj = run(cfg, &cfg.fleet, &uncleared(cfg, 0.0, 20e-3));
    let th0 = traj.prefault_angles();
    let worst = traj
        .records
        .iter()
        .flat_map(|r| r.inverters.iter().zip(&th0).map(|(s, t0)| (s.theta_cg - t0).abs()))
        .fold(0.0, f64::max);
    ensure(traj.records.len() == 2001, format!("{} records", traj.records.len()))?;
    ensure(worst < 1e-6, format!("max drift {worst:e} rad"))?;
    Ok(format!("max drift {worst:.1e} rad over 20 ms"))
}

fn c5_ordering(cfg: &RunConfig) -> Check {
    let sc = uncleared(cfg, 0.9, 30e-3);
    let names = |order: Vec<(String, f64)>| order.into_iter().map(|(n, _)| n).collect::<Vec<_>>();
    let equal = names(sync_loss_order(&run(cfg, &with_xr_ratio(&cfg.fleet, 1.0), &sc)).map_err(|e| e.to_string())?);
    ensure(equal == ["Inv 4", "Inv 5", "Inv 2", "Inv 3", "Inv 1"], format!("equal X/R order {equal:?}"))?;
    let full = names(sync_loss_order(&run(cfg, &cfg.fleet, &sc)).map_err(|e| e.to_string())?);
    ensure(full.first().map(String::as_str) == Some("Inv 4"), format!("full fleet order {full:?}"))?;
    Ok(format!("equal X/R: {}; full fleet first: {}", equal.join(" > "), full[0]))
}

fn c6_plateau(cfg: &RunConfig) -> Check {
    let sc = uncleared(cfg, 0.38, 10e-3);
    let traj = run(cfg, &cfg.fleet, &sc);
    let k0 = (sc.t_fault / sc.dt).round() as usize;
    let mut engaged_at = Vec::new();
    for (p, inv) in cfg.fleet.iter().enumerate() {
        let samples: Vec<_> = traj.records[k0..].iter().map(|r| r.inverters[p]).collect();
        let engaged = samples.iter().position(|s| s.limited).ok_or(format!("{} never limits", inv.name))?;
        ensure(
            samples[..=engaged].windows(2).all(|w| w[1].i_q >= w[0].i_q),
            format!("{}: i_q falls before the limit", inv.name),
        )?;
        ensure(
            samples.iter().filter(|s| s.limited).all(|s| s.i_mag == inv.i_max),
            format!("{}: limited current differs from i_max", inv.name),
        )?;
        engaged_at.push(engaged);
    }
    let t = *engaged_at.iter().min().unwrap() as f64 * sc.dt * 1e3;
    Ok(format!("i_q rises for {t:.2} ms, then i_mag = i_max exactly"))
}

fn c7_bisection(cfg: &RunConfig) -> Check {
    let mut notes = Vec::new();
    for depth in [0.9, 0.95, 1.0] {
        let base = uncleared(cfg, depth, cfg.scenario.t_end);
        let r = find_cct(&cfg.fleet, &cfg.grid, &base, &cfg.search, &cfg.study).map_err(|e| e.to_string())?;
        let post = cfg.search.post_clear_time;
        let lo = evaluate_clearing(&cfg.fleet, &cfg.grid, &base, r.bracket_lo, post, &cfg.study, false)
            .map_err(|e| e.to_string())?
            .0;
        let hi = evaluate_clearing(&cfg.fleet, &cfg.grid, &base, r.bracket_hi, post, &cfg.study, false)
            .map_err(|e| e.to_string())?
            .0;
        ensure(lo.stable && !hi.stable, format!("depth {depth}: endpoints do not re-verify"))?;
        let audit = r.audit.as_ref().ok_or("no audit")?;
        ensure(audit.samples.len() >= 5 && audit.transitions == 1, format!("depth {depth}: audit {audit:?}"))?;

        let scan = linear_scan(cfg, &cfg.fleet, &base, 0.05e-3, 6e-3, 0.05e-3);
        let k = scan.iter().position(|&(_, s)| !s).ok_or("scan never unstable")?;
        ensure(k > 0, "scan unstable at its first point")?;
        let (a, b) = (scan[k - 1].0, scan[k].0);
        ensure(a <= r.cct && r.cct <= b, format!("depth {depth}: cct {} outside scan [{a}, {b}]", r.cct))?;
        notes.push(format!("{depth}: {:.3} ms", r.cct * 1e3));
    }
    Ok(format!("CCT {}", notes.join(", ")))
}

fn c8_uniform_penalty(cfg: &RunConfig) -> Check {
    let mut notes = Vec::new();
    for depth in [0.9, 0.95, 1.0] {
        let base = uncleared(cfg, depth, cfg.scenario.t_end);
        let c = compare_uniform(&cfg.fleet, &cfg.grid, &base, &search(cfg), &cfg.study).map_err(|e| e.to_string())?;
        ensure(c.delta > 0.0, format!("depth {depth}: delta {:e}", c.delta))?;
        notes.push(format!("{depth}: +{:.3} ms", c.delta * 1e3));
    }
    let r = find_cct(&cfg.fleet, &cfg.grid, &cfg.scenario, &search(cfg), &cfg.study).map_err(|e| e.to_string())?;
    ensure(
        (1.1e-3..=4.25e-3).contains(&r.cct),
        format!("CCT {:.3} ms at depth {} is outside 1.1-4.25 ms", r.cct * 1e3, cfg.scenario.fault_depth),
    )?;
    Ok(format!(
        "delta {}; CCT {:.3} ms at depth {}",
        notes.join(", "),
        r.cct * 1e3,
        cfg.scenario.fault_depth
    ))
}

fn c9_dichotomy(cfg: &RunConfig) -> Check {
    let r = find_cct(&cfg.fleet, &cfg.grid, &cfg.scenario, &search(cfg), &cfg.study).map_err(|e| e.to_string())?;
    let res = cfg.search.resolution;
    let crit = cfg.study.criteria;
    let go = |tau: f64| {
        let sc = scenario_with_clearing(&cfg.scenario, tau, cfg.search.post_clear_time);
        let traj = run(cfg, &cfg.fleet, &sc);
        let v = classify_with(&traj, &crit).map_err(|e| e.to_string())?;
        Ok::<_, String>((v, traj))
    };
    let (v, traj) = go(r.cct - 2.0 * res)?;
    ensure(v.stable, "stable side classified unstable")?;
    let th0 = traj.prefault_angles();
    let end = traj.records.last().unwrap();
    ensure(
        end.inverters.iter().zip(&th0).all(|(s, t0)| (s.theta_cg - t0).abs() < crit.settle_tol),
        "stable side does not return",
    )?;
    let (v, traj) = go(r.cct + 2.0 * res)?;
    ensure(!v.stable, "unstable side classified stable")?;
    let t_clear = traj.scenario.t_clear.unwrap();
    let returns = traj
        .records
        .iter()
        .filter(|r| r.t > t_clear + crit.settle_window)
        .any(|r| r.inverters.iter().zip(&th0).all(|(s, t0)| (s.theta_cg - t0).abs() < crit.settle_tol));
    ensure(!returns, "unstable side returns to pre-fault angles")?;
    Ok(format!("stable at CCT - {:.2} ms, unstable at CCT + {:.2} ms", 2e3 * res, 2e3 * res))
}

fn c10_cascade(cfg: &RunConfig) -> Check {
    let fault = faulted_grid(&cfg.grid, 0.25).map_err(|e| e.to_string())?;
    let mut sim = Simulator::new(&cfg.fleet, &cfg.grid, cfg.study.dynamics).map_err(|e| e.to_string())?;
    sim.step(&fault, cfg.scenario.dt).map_err(|e| e.to_string())?;
    let mut untouched = sim.clone();
    sim.force_trip(0, TripCause::Overcurrent);
    sim.step(&fault, cfg.scenario.dt).map_err(|e| e.to_string())?;
    untouched.step(&fault, cfg.scenario.dt).map_err(|e| e.to_string())?;
    let (a, b) = (sim.v_pcc.magnitude(), untouched.v_pcc.magnitude());
    ensure(a < b, format!("|v_pcc| {a} not below {b}"))?;
    for p in 1..cfg.fleet.len() {
        ensure(
            sim.inverters[p].i_cmd > untouched.inverters[p].i_cmd,
            format!("{} current did not rise", cfg.fleet[p].name),
        )?;
    }
    Ok(format!("|v_pcc| {b:.3} -> {a:.3} V, all remaining currents up"))
}

fn c11_performance(cfg: &RunConfig) -> Check {
    let sc = uncleared(cfg, 0.9, 20e-3);
    let sc = scenario_with_clearing(&sc, 1e-3, 0.0);
    let t = Instant::now();
    let traj = run(cfg, &cfg.fleet, &sc);
    let single = t.elapsed();
    ensure(traj.records.len() == 2001, "run was cut short")?;
    ensure(single < Duration::from_secs(1), format!("single run {single:?}"))?;

    let spec = SweepSpec {
        fault_depth: vec![0.85, 0.9, 0.95, 1.0],
        s_rated_scale: vec![0.8, 0.9, 1.0, 1.1, 1.2],
        xr_scale: vec![0.5, 0.75, 1.0, 1.5, 2.0],
        ..Default::default()
    };
    let t = Instant::now();
    let rows = run_sweep(cfg, &spec).map_err(|e| e.to_string())?;
    let sweep = t.elapsed();
    ensure(rows.len() == 100, format!("{} cells", rows.len()))?;
    ensure(sweep < Duration::from_secs(60), format!("sweep {sweep:?}"))?;
    let failed = rows.iter().filter(|r| r.outcome.error.is_some()).count();
    Ok(format!(
        "single run {:.1} ms; 100 CCT cells in {:.1} s on {} threads ({failed} cells without a valid bracket)",
        single.as_secs_f64() * 1e3,
        sweep.as_secs_f64(),
        rayon::current_num_threads()
    ))
}

type Criterion<'a> = (&'a str, u64, Box<dyn Fn() -> Check + 'a>);

fn main() {
    let cfg = reference();
    let criteria: Vec<Criterion<'_>> = vec![
        ("1 table consistency", 1, Box::new(c1_table_consistency)),
        ("2 fixed-point correctness", 10, Box::new(c2_fixed_point)),
        ("3 termwise q agreement", 5, Box::new(c3_termwise_q)),
        ("4 equilibrium stationarity", 2, Box::new(|| c4_stationarity(&cfg))),
        ("5 loss-of-synchronism ordering", 5, Box::new(|| c5_ordering(&cfg))),
        ("6 current plateau", 5, Box::new(|| c6_plateau(&cfg))),
        ("7 CCT bisection soundness", 60, Box::new(|| c7_bisection(&cfg))),
        ("8 non-uniformity penalty", 120, Box::new(|| c8_uniform_penalty(&cfg))),
        ("9 stable/unstable dichotomy", 30, Box::new(|| c9_dichotomy(&cfg))),
        ("10 trip cascade", 1, Box::new(|| c10_cascade(&cfg))),
        ("11 performance", 120, Box::new(|| c11_performance(&cfg))),
    ];
    let mut failures = 0;
    for (name, budget, check) in &criteria {
        let t = Instant::now();
        let result = check();
        let took = t.elapsed();
        let over = took > Duration::from_secs(*budget);
        match (result, over) {
            (Ok(detail), false) => println!("PASS [{name}] {detail} ({:.2} s)", took.as_secs_f64()),
            (Ok(detail), true) => {
                failures += 1;
                println!("FAIL [{name}] {detail}; took {:.2} s, budget {budget} s", took.as_secs_f64());
            }
            (Err(why), _) => {
                failures += 1;
                println!("FAIL [{name}] {why} ({:.2} s)", took.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
