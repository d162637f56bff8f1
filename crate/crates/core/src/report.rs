//! Deterministic CSV and JSON output.
//!
//! Floats are written with 9 significant digits so identical inputs give
//! byte-identical files. JSON object keys are sorted.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::dynamics::Trajectory;
use crate::stability::{CctResult, FleetComparison, StabilityVerdict};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `x` in scientific notation with 9 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_float(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if !(n.is_i64() || n.is_u64()) {
                if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with sorted keys and 9-significant-digit floats.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn of(config: &RunConfig) -> Self {
        Self { config_hash: config.hash(), tool_version: TOOL_VERSION.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub verdict: StabilityVerdict,
    pub cct: Option<CctResult>,
    pub comparison: Option<FleetComparison>,
    pub provenance: Provenance,
    /// The configuration as resolved, defaults included.
    pub config: RunConfig,
}

fn header(n_inv: usize) -> String {
    let mut cols: Vec<String> = vec!["t_s".into(), "vpcc_mag_V".into(), "vpcc_angle_rad".into()];
    for k in 1..=n_inv {
        for suffix in ["theta_cg_rad", "i_mag_A", "i_q_A", "v_gq_V", "limited", "tripped"] {
            cols.push(format!("inv{k}_{suffix}"));
        }
    }
    cols.push("vpcc_angle_deg".into());
    for k in 1..=n_inv {
        cols.push(format!("inv{k}_theta_cg_deg"));
    }
    cols.join(",")
}

/// One row per record. Degree columns for the angles follow the SI block.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> io::Result<()> {
    let n = traj.fleet.len();
    writeln!(w, "{}", header(n))?;
    let mut row = String::new();
    for r in &traj.records {
        row.clear();
        row.push_str(&fmt_float(r.t));
        for x in [r.v_pcc_mag, r.v_pcc_angle] {
            row.push(',');
            row.push_str(&fmt_float(x));
        }
        for s in &r.inverters {
            for x in [s.theta_cg, s.i_mag, s.i_q, s.v_gq] {
                row.push(',');
                row.push_str(&fmt_float(x));
            }
            row.push_str(if s.limited { ",1" } else { ",0" });
            row.push_str(if s.tripped { ",1" } else { ",0" });
        }
        row.push(',');
        row.push_str(&fmt_float(r.v_pcc_angle.to_degrees()));
        for s in &r.inverters {
            row.push(',');
            row.push_str(&fmt_float(s.theta_cg.to_degrees()));
        }
        writeln!(w, "{row}")?;
    }
    w.flush()
}

/// Quotes a CSV field when it contains a separator, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_fixed_width_mantissa() {
        assert_eq!(fmt_float(230.0), "2.30000000e2");
        assert_eq!(fmt_float(-1.5e-5), "-1.50000000e-5");
        assert_eq!(fmt_float(0.0), "0.00000000e0");
    }

    #[test]
    fn json_rounds_and_sorts() {
        #[derive(Serialize)]
        struct S {
            zeta: f64,
            alpha: u32,
        }
        let s = to_json(&S { zeta: 1.0 / 3.0, alpha: 7 }).unwrap();
        assert_eq!(s, "{\n  \"alpha\": 7,\n  \"zeta\": 0.333333333\n}\n");
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("Inv 1"), "Inv 1");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn header_layout() {
        let h = header(2);
        assert!(h.starts_with("t_s,vpcc_mag_V,vpcc_angle_rad,inv1_theta_cg_rad,inv1_i_mag_A,inv1_i_q_A,inv1_v_gq_V,"));
        assert!(h.ends_with("vpcc_angle_deg,inv1_theta_cg_deg,inv2_theta_cg_deg"));
        assert_eq!(h.split(',').count(), 3 + 12 + 3);
    }
}
