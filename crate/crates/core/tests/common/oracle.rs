//! Independent PCC oracle: Newton on the real 2-D residual with a
//! finite-difference Jacobian, and random small-fleet cases.

use gflswing::network::{EquivalentImpedanceSet, TheveninEquivalent};
use gflswing::pcc::InjectionState;
use gflswing::phasor::Impedance;
use num_complex::Complex64;
use proptest::prelude::*;

#[derive(Debug)]
pub struct Case {
    pub v_th: Complex64,
    pub z_eq: Vec<Complex64>,
    pub s: Vec<f64>,
    pub theta: Vec<f64>,
    pub i_max: Option<Vec<f64>>,
}

impl Case {
    fn residual(&self, x: f64, y: f64) -> (f64, f64) {
        let m = x.hypot(y);
        let mut rhs = self.v_th;
        for p in 0..self.s.len() {
            let mut i = self.s[p] / m;
            if let Some(lim) = &self.i_max {
                i = i.min(lim[p]);
            }
            rhs += self.z_eq[p] * Complex64::from_polar(i, self.theta[p]);
        }
        (x - rhs.re, y - rhs.im)
    }

    pub fn newton(&self) -> Complex64 {
        let (mut x, mut y) = (self.v_th.re, self.v_th.im);
        for _ in 0..100 {
            let (f1, f2) = self.residual(x, y);
            if f1.hypot(f2) < 1e-12 * self.v_th.norm() {
                break;
            }
            let h = 1e-7 * self.v_th.norm();
            let (a1, a2) = self.residual(x + h, y);
            let (b1, b2) = self.residual(x, y + h);
            let (j11, j21) = ((a1 - f1) / h, (a2 - f2) / h);
            let (j12, j22) = ((b1 - f1) / h, (b2 - f2) / h);
            let det = j11 * j22 - j12 * j21;
            x -= (j22 * f1 - j12 * f2) / det;
            y -= (-j21 * f1 + j11 * f2) / det;
        }
        Complex64::new(x, y)
    }

    pub fn crate_inputs(&self) -> (TheveninEquivalent, EquivalentImpedanceSet, InjectionState) {
        let grid = TheveninEquivalent::new(self.v_th.into(), Impedance::new(0.05, 0.5)).unwrap();
        let zeq = EquivalentImpedanceSet::from_impedances(self.z_eq.iter().map(|&z| z.into()).collect());
        let mut inj = InjectionState::new(self.s.clone(), self.theta.clone()).unwrap();
        if let Some(lim) = &self.i_max {
            inj = inj.with_current_limits(lim.clone()).unwrap();
        }
        (grid, zeq, inj)
    }
}

pub fn case() -> impl Strategy<Value = Case> {
    (1usize..=3, any::<bool>()).prop_flat_map(|(n, limited)| {
        (
            200.0f64..260.0,
            -0.3f64..0.3,
            prop::collection::vec((0.01f64..0.3, -0.05f64..0.3), n),
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(-0.6f64..0.6, n),
            prop::collection::vec(0.6f64..1.5, n),
        )
            .prop_map(move |(vm, va, z, share, theta, head)| {
                let v_th = Complex64::from_polar(vm, va);
                let z_eq: Vec<Complex64> = z.iter().map(|&(r, x)| Complex64::new(r, x)).collect();
                // Keep Σ|z_eq|·S/|v_th| under 15 % of |v_th|.
                let budget = 0.15 * vm * vm;
                let zsum: f64 = z_eq.iter().map(|z| z.norm()).sum();
                let s: Vec<f64> = share.iter().map(|f| f * budget / zsum).collect();
                let i_max = limited.then(|| s.iter().zip(&head).map(|(s, h)| h * s / vm).collect());
                Case { v_th, z_eq, s, theta, i_max }
            })
    })
}

