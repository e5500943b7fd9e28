//! The ground-state profile and the universal constants built from it.
//!
//! With `a = N(N-2)` and `D = (N-2)/2` the profile is
//! `W(r) = (1 + r^2/a)^(-D)`. The interaction constants are ratios of
//! radial integrals of `W`:
//!
//! * `kappa0 = D * int W^p / int (Lambda W)^2`
//! * `kappa1 = (N-2) * int W^p / int (d_1 W)^2`
//! * `kappaInf = lim r^(N-2) W(r) = a^D`
//!
//! where `p = (N+2)/(N-2)` and `Lambda = x.grad + (N-2)/2`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_half_line, QuadOptions};

/// Ambient dimension `N >= 7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Dimension(u32);

impl Dimension {
    pub const MIN: u32 = 7;

    pub fn new(n: u32) -> Result<Self> {
        if n < Self::MIN {
            return Err(Error::InvalidDimension(n));
        }
        Ok(Dimension(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// `D = (N - 2) / 2`.
    pub fn half_gap(self) -> f64 {
        (self.0 as f64 - 2.0) / 2.0
    }

    /// Critical exponent `p = (N + 2) / (N - 2)`.
    pub fn critical_exponent(self) -> f64 {
        (self.0 as f64 + 2.0) / (self.0 as f64 - 2.0)
    }

    fn bubble_scale(self) -> f64 {
        let n = self.0 as f64;
        n * (n - 2.0)
    }
}

impl TryFrom<u32> for Dimension {
    type Error = Error;
    fn try_from(n: u32) -> Result<Self> {
        Dimension::new(n)
    }
}

impl From<Dimension> for u32 {
    fn from(d: Dimension) -> u32 {
        d.0
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Radial integrands entering the constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileIntegrand {
    /// `W^p`
    WPow,
    /// `(Lambda W)^2`
    LambdaWSquared,
    /// `(d_1 W)^2`, evaluated as `|grad W|^2 / N`
    PartialWSquared,
    /// `|grad W|^2`
    GradWSquared,
    /// `W^(p+1)`
    WPowPlusOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileIntegrals {
    pub int_w_p: f64,
    pub int_lambda_w_sq: f64,
    pub int_d1_w_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalConstants {
    pub dim: Dimension,
    pub d: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub kappa_inf: f64,
    pub integrals: ProfileIntegrals,
}

impl UniversalConstants {
    /// `2 kappa0 / kappa1`, the weight of the centers in the conserved
    /// quadratic quantity.
    pub fn center_weight(&self) -> f64 {
        2.0 * self.kappa0 / self.kappa1
    }
}

/// `W(r) = (1 + r^2 / (N(N-2)))^(-(N-2)/2)`.
pub fn profile_w(dim: Dimension, r: f64) -> f64 {
    (1.0 + r * r / dim.bubble_scale()).powf(-dim.half_gap())
}

/// `W'(r)`.
pub fn profile_w_prime(dim: Dimension, r: f64) -> f64 {
    let a = dim.bubble_scale();
    let d = dim.half_gap();
    -2.0 * d * r / a * (1.0 + r * r / a).powf(-d - 1.0)
}

/// `(Lambda W)(r) = r W'(r) + D W(r)`.
pub fn lambda_w(dim: Dimension, r: f64) -> f64 {
    r * profile_w_prime(dim, r) + dim.half_gap() * profile_w(dim, r)
}

/// `kappaInf = (N(N-2))^((N-2)/2)`.
pub fn kappa_infinity(dim: Dimension) -> f64 {
    let a = dim.bubble_scale();
    let n = dim.get();
    if n.is_multiple_of(2) {
        // integer power, exact while it fits the mantissa
        a.powi(((n - 2) / 2) as i32)
    } else {
        a.powi(((n - 3) / 2) as i32) * a.sqrt()
    }
}

/// `Gamma(k / 2)` for a positive integer `k`, by the half-integer recursion.
pub(crate) fn gamma_half(k: u32) -> f64 {
    assert!(k > 0);
    let (mut value, mut x) = if k.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (PI.sqrt(), 0.5)
    };
    let target = k as f64 / 2.0;
    while x < target {
        value *= x;
        x += 1.0;
    }
    value
}

/// `|S^(N-1)| = 2 pi^(N/2) / Gamma(N/2)`.
pub fn sphere_area(dim: Dimension) -> f64 {
    2.0 * PI.powf(dim.as_f64() / 2.0) / gamma_half(dim.get())
}

fn integrand_value(dim: Dimension, which: ProfileIntegrand, r: f64) -> f64 {
    let w = profile_w(dim, r);
    match which {
        ProfileIntegrand::WPow => w.powf(dim.critical_exponent()),
        ProfileIntegrand::LambdaWSquared => lambda_w(dim, r).powi(2),
        ProfileIntegrand::PartialWSquared => profile_w_prime(dim, r).powi(2) / dim.as_f64(),
        ProfileIntegrand::GradWSquared => profile_w_prime(dim, r).powi(2),
        ProfileIntegrand::WPowPlusOne => w.powf(dim.critical_exponent() + 1.0),
    }
}

/// `int_{R^N} f dx = |S^(N-1)| int_0^inf f(r) r^(N-1) dr`.
pub fn radial_integral(dim: Dimension, which: ProfileIntegrand) -> Result<f64> {
    let n1 = dim.get() as i32 - 1;
    let split = dim.bubble_scale().sqrt() * 4.0;
    let opts = QuadOptions {
        rel_tol: 1e-13,
        abs_tol: 0.0,
        max_panels: 4000,
    };
    let radial = integrate_half_line(|r| integrand_value(dim, which, r) * r.powi(n1), split, opts)?;
    Ok(sphere_area(dim) * radial.value)
}

fn compute_constants(dim: Dimension) -> Result<UniversalConstants> {
    let int_w_p = radial_integral(dim, ProfileIntegrand::WPow)?;
    let int_lambda_w_sq = radial_integral(dim, ProfileIntegrand::LambdaWSquared)?;
    let int_d1_w_sq = radial_integral(dim, ProfileIntegrand::PartialWSquared)?;
    let d = dim.half_gap();
    Ok(UniversalConstants {
        dim,
        d,
        kappa0: d * int_w_p / int_lambda_w_sq,
        kappa1: (dim.as_f64() - 2.0) * int_w_p / int_d1_w_sq,
        kappa_inf: kappa_infinity(dim),
        integrals: ProfileIntegrals {
            int_w_p,
            int_lambda_w_sq,
            int_d1_w_sq,
        },
    })
}

const CACHED_MAX: u32 = 64;
static CACHE: [OnceLock<UniversalConstants>; (CACHED_MAX - Dimension::MIN + 1) as usize] =
    [const { OnceLock::new() }; (CACHED_MAX - Dimension::MIN + 1) as usize];

/// Constants for dimension `N`; cached for `N <= 64`.
pub fn universal_constants(dim: Dimension) -> Result<UniversalConstants> {
    if dim.get() > CACHED_MAX {
        return compute_constants(dim);
    }
    let slot = &CACHE[(dim.get() - Dimension::MIN) as usize];
    if let Some(c) = slot.get() {
        return Ok(*c);
    }
    let c = compute_constants(dim)?;
    Ok(*slot.get_or_init(|| c))
}
