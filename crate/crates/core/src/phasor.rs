//! Complex phasor and impedance algebra.
//!
//! Everything is SI (volts, amperes, ohms) and double precision. Angles are
//! radians and are never wrapped here; wrapping is an output concern.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this magnitude (ohms) a sum of two impedances is treated as an
/// antiresonant short and rejected by [`parallel`].
pub const DEGENERATE_SUM_OHMS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhasorError {
    #[error("phasor magnitude must be non-negative, got {0}")]
    NegativeMagnitude(f64),
    #[error("frequency must be positive, got {0} Hz")]
    NonPositiveFrequency(f64),
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("degenerate parallel combination: |a + b| = {0:e} ohm")]
    DegenerateParallel(f64),
}

/// Complex voltage or current phasor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Phasor {
    pub re: f64,
    pub im: f64,
}

impl Phasor {
    pub const ZERO: Phasor = Phasor { re: 0.0, im: 0.0 };

    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// Builds a phasor from magnitude and angle.
    pub fn from_polar(magnitude: f64, angle: f64) -> Result<Self, PhasorError> {
        if !(magnitude >= 0.0) {
            return Err(PhasorError::NegativeMagnitude(magnitude));
        }
        Ok(Self::new(magnitude * angle.cos(), magnitude * angle.sin()))
    }

    pub fn magnitude(self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn angle(self) -> f64 {
        self.im.atan2(self.re)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.re * k, self.im * k)
    }
}

impl From<Complex64> for Phasor {
    fn from(c: Complex64) -> Self {
        Self::new(c.re, c.im)
    }
}

impl From<Phasor> for Complex64 {
    fn from(p: Phasor) -> Self {
        p.to_complex()
    }
}

impl Add for Phasor {
    type Output = Phasor;
    fn add(self, rhs: Phasor) -> Phasor {
        Phasor::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl Sub for Phasor {
    type Output = Phasor;
    fn sub(self, rhs: Phasor) -> Phasor {
        Phasor::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl Neg for Phasor {
    type Output = Phasor;
    fn neg(self) -> Phasor {
        Phasor::new(-self.re, -self.im)
    }
}

impl fmt::Display for Phasor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}∠{:.6} rad", self.magnitude(), self.angle())
    }
}

/// Series impedance `r + jx` in ohms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Impedance {
    pub r: f64,
    pub x: f64,
}

impl Impedance {
    pub const ZERO: Impedance = Impedance { r: 0.0, x: 0.0 };

    pub const fn new(r: f64, x: f64) -> Self {
        Self { r, x }
    }

    pub const fn resistive(r: f64) -> Self {
        Self { r, x: 0.0 }
    }

    pub fn magnitude(self) -> f64 {
        self.r.hypot(self.x)
    }

    /// Angle in (−π, π]. `atan2` already yields that range except for the
    /// signed-zero corner, which is folded onto +π.
    pub fn angle(self) -> f64 {
        let a = self.x.atan2(self.r);
        if a <= -PI {
            PI
        } else {
            a
        }
    }

    /// `x / r`, or `None` for a purely reactive (or zero) impedance.
    pub fn xr_ratio(self) -> Option<f64> {
        (self.r != 0.0).then(|| self.x / self.r)
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.r, self.x)
    }
}

impl From<Complex64> for Impedance {
    fn from(c: Complex64) -> Self {
        Self::new(c.re, c.im)
    }
}

impl Add for Impedance {
    type Output = Impedance;
    fn add(self, rhs: Impedance) -> Impedance {
        Impedance::new(self.r + rhs.r, self.x + rhs.x)
    }
}

/// Ohm's law: impedance times current phasor gives a voltage phasor.
impl Mul<Phasor> for Impedance {
    type Output = Phasor;
    fn mul(self, rhs: Phasor) -> Phasor {
        (self.to_complex() * rhs.to_complex()).into()
    }
}

impl fmt::Display for Impedance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.x < 0.0 {
            write!(f, "{:.6} - j{:.6} Ω", self.r, -self.x)
        } else {
            write!(f, "{:.6} + j{:.6} Ω", self.r, self.x)
        }
    }
}

/// Direct/quadrature projection of a phasor onto a rotating reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DqPair {
    pub d: f64,
    pub q: f64,
}

/// Series line impedance from resistance, inductance and system frequency.
pub fn line_impedance(r: f64, l: f64, f: f64) -> Result<Impedance, PhasorError> {
    if !(f > 0.0) {
        return Err(PhasorError::NonPositiveFrequency(f));
    }
    if !(r >= 0.0) {
        return Err(PhasorError::Negative { what: "resistance", value: r });
    }
    if !(l >= 0.0) {
        return Err(PhasorError::Negative { what: "inductance", value: l });
    }
    Ok(Impedance::new(r, 2.0 * PI * f * l))
}

/// Parallel combination `a·b / (a + b)`.
pub fn parallel(a: Impedance, b: Impedance) -> Result<Impedance, PhasorError> {
    let sum = a.to_complex() + b.to_complex();
    let mag = sum.norm();
    if !(mag >= DEGENERATE_SUM_OHMS) {
        return Err(PhasorError::DegenerateParallel(mag));
    }
    Ok((a.to_complex() * b.to_complex() / sum).into())
}

/// Projects `v` onto a dq frame whose d axis sits at `ref_angle`.
pub fn dq_components(v: Phasor, ref_angle: f64) -> DqPair {
    // Rotating by e^{-j·ref} keeps full precision for near-aligned phasors.
    let rotated = v.to_complex() * Complex64::from_polar(1.0, -ref_angle);
    DqPair { d: rotated.re, q: rotated.im }
}
