//! The PCC solver against an independent Newton iteration on the real 2-D
//! residual with a finite-difference Jacobian.

mod common;

use common::oracle::case;
use gflswing::network::{EquivalentImpedanceSet, TheveninEquivalent};
use gflswing::pcc::{q_components, solve_vpcc, InjectionState, SolverOptions};
use gflswing::phasor::{dq_components, Impedance, Phasor};
use num_complex::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn solver_matches_newton_oracle(c in case()) {
        let want = c.newton();
        let (grid, zeq, inj) = c.crate_inputs();
        let got = solve_vpcc(&grid, &zeq, &inj, &SolverOptions::for_grid(&grid).with_tol(1e-12 * 230.0)).unwrap();
        let rel = (got.v_pcc.to_complex() - want).norm() / want.norm();
        prop_assert!(rel < 1e-6, "relative error {rel}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn termwise_q_matches_complex_projection(c in case(), v_re in 150.0f64..260.0, v_im in -60.0f64..60.0, r in -1.0f64..1.0) {
        let (grid, zeq, inj) = c.crate_inputs();
        let series: Vec<Impedance> = c.z_eq.iter().map(|z| Impedance::new(z.re * 1.3, z.im * 0.7 + 0.01)).collect();
        let v = Phasor::new(v_re, v_im);
        let q = q_components(&grid, &zeq, &series, &inj, v, r).unwrap();
        // Complex form: rhs of the PCC equation at |v|, then add the series drop.
        let m = v.magnitude();
        let mut v_pcc = c.v_th;
        let currents: Vec<Complex64> = (0..c.s.len()).map(|p| Complex64::from_polar(inj.current(p, m), c.theta[p])).collect();
        for (z, i) in c.z_eq.iter().zip(&currents) {
            v_pcc += z * i;
        }
        let scale = v_pcc.norm();
        let want = dq_components(v_pcc.into(), r).q;
        prop_assert!((q.v_pcc_q - want).abs() <= 1e-9 * scale);
        for p in 0..c.s.len() {
            let v_g = v_pcc + series[p].to_complex() * currents[p];
            let want = dq_components(v_g.into(), r).q;
            prop_assert!((q.v_gq[p] - want).abs() <= 1e-9 * scale);
        }
    }
}

#[test]
fn zero_injection_returns_the_source() {
    let v_th = Phasor::from_polar(230.0, 0.2).unwrap();
    let grid = TheveninEquivalent::new(v_th, Impedance::new(0.05, 0.5)).unwrap();
    let zeq = EquivalentImpedanceSet::from_impedances(vec![Impedance::new(0.2, 0.05); 3]);
    let inj = InjectionState::new(vec![0.0; 3], vec![0.1, 0.2, 0.3]).unwrap();
    let sol = solve_vpcc(&grid, &zeq, &inj, &SolverOptions::for_grid(&grid)).unwrap();
    assert!((sol.v_pcc - v_th).magnitude() <= 1e-12 * 230.0);
}
