//! Closed-form reference values.
//!
//! Everything is evaluated in log space so that exponents in the hundreds do
//! not overflow.

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::tolerances::POLE_MATCH;

fn require_p_above(p: f64, n: usize) -> Result<()> {
    if !p.is_finite() || p <= n as f64 {
        return Err(Error::OutOfDomain(format!(
            "p must exceed N = {n}, got p = {p}"
        )));
    }
    Ok(())
}

/// `ln Gamma(n/2 + 1)` from the half-integer recurrence.
fn ln_gamma_half_plus_one(n: usize) -> f64 {
    // Gamma(1) = 1, Gamma(3/2) = sqrt(pi)/2, Gamma(z+1) = z Gamma(z).
    let mut acc = if n.is_multiple_of(2) {
        0.0
    } else {
        0.5 * std::f64::consts::PI.ln() - 2f64.ln()
    };
    let mut z = if n.is_multiple_of(2) { 1.0 } else { 1.5 };
    let target = n as f64 / 2.0 + 1.0;
    while z + 0.5 < target {
        acc += z.ln();
        z += 1.0;
    }
    acc
}

/// Volume of the unit ball in R^N: `pi^(N/2) / Gamma(N/2 + 1)`.
pub fn unit_ball_volume(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::OutOfDomain("dimension must be at least 1".into()));
    }
    Ok((0.5 * n as f64 * std::f64::consts::PI.ln() - ln_gamma_half_plus_one(n)).exp())
}

/// The Hölder constant `2 p N / (p - N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorreyConstant {
    pub p: f64,
    pub n: usize,
    pub value: f64,
}

impl MorreyConstant {
    pub fn new(p: f64, n: usize) -> Result<Self> {
        Ok(MorreyConstant {
            p,
            n,
            value: morrey_constant(p, n)?,
        })
    }
}

pub fn morrey_constant(p: f64, n: usize) -> Result<f64> {
    require_p_above(p, n)?;
    let n = n as f64;
    Ok(2.0 * p * n / (p - n))
}

/// `((x-a)^(1-p) + (b-x)^(1-p))^(-1/p)`.
pub fn sp_interval(a: f64, b: f64, x: f64, p: f64) -> Result<f64> {
    if !(a < x && x < b) {
        return Err(Error::OutOfDomain(format!(
            "pole {x} not inside ({a}, {b})"
        )));
    }
    require_p_above(p, 1)?;
    let t1 = (1.0 - p) * (x - a).ln();
    let t2 = (1.0 - p) * (b - x).ln();
    let hi = t1.max(t2);
    let lse = hi + ((t1 - hi).exp() + (t2 - hi).exp()).ln();
    Ok((-lse / p).exp())
}

/// The one-dimensional extremal: linear from each endpoint up to 1 at `x`.
pub fn up_interval(a: f64, b: f64, x: f64, _p: f64, y: f64) -> Result<f64> {
    if !(a < x && x < b) {
        return Err(Error::OutOfDomain(format!(
            "pole {x} not inside ({a}, {b})"
        )));
    }
    if !(a <= y && y <= b) {
        return Err(Error::OutOfDomain(format!("point {y} not in [{a}, {b}]")));
    }
    Ok(if y <= x {
        (y - a) / (x - a)
    } else {
        (b - y) / (b - x)
    })
}

/// `s_p` at the center of a ball of radius `R` in R^N.
pub fn sp_ball_center(n: usize, r: f64, p: f64) -> Result<f64> {
    require_p_above(p, n)?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::OutOfDomain(format!(
            "radius must be positive, got {r}"
        )));
    }
    let nf = n as f64;
    let sphere = nf * unit_ball_volume(n)?;
    let ln_s =
        (1.0 - nf / p) * r.ln() - sphere.ln() / p + (p - 1.0) / p * ((p - 1.0) / (p - nf)).ln();
    Ok(ln_s.exp())
}

/// Radial extremal `1 - (r/R)^((p-N)/(p-1))` for a pole at the ball center.
pub fn up_ball_center(n: usize, big_r: f64, p: f64, r: f64) -> Result<f64> {
    require_p_above(p, n)?;
    if !(0.0..=big_r).contains(&r) {
        return Err(Error::OutOfDomain(format!(
            "radius {r} not in [0, {big_r}]"
        )));
    }
    Ok(1.0 - (r / big_r).powf(pole_exponent(p, n)))
}

/// Exponent `(p-N)/(p-1)` of `1 - u_p` near the pole.
pub fn pole_exponent(p: f64, n: usize) -> f64 {
    (p - n as f64) / (p - 1.0)
}

/// Prefactor `((p-1)/(p-N)) (mu / (N omega_N))^(1/(p-1))` of `1 - u_p` near the pole.
pub fn pole_prefactor(p: f64, n: usize, mu: f64) -> Result<f64> {
    require_p_above(p, n)?;
    let nf = n as f64;
    let sphere = nf * unit_ball_volume(n)?;
    Ok((p - 1.0) / (p - nf) * (mu / sphere).powf(1.0 / (p - 1.0)))
}

/// `C_{p,N} d^(1-N/p)`.
pub fn pointwise_upper_bound(p: f64, n: usize, d: f64) -> Result<f64> {
    let c = morrey_constant(p, n)?;
    if d <= 0.0 {
        return Ok(0.0);
    }
    Ok(c * ((1.0 - n as f64 / p) * d.ln()).exp())
}

/// `d |Omega|^(-1/p)`.
pub fn pointwise_lower_bound(p: f64, d: f64, vol: f64) -> Result<f64> {
    if !(vol > 0.0) {
        return Err(Error::OutOfDomain(format!(
            "measure must be positive, got {vol}"
        )));
    }
    Ok(d.max(0.0) * (-vol.ln() / p).exp())
}

/// Closed form for `s_p(pole)` when one is known: any interior point of an
/// interval, or the exact center of a disk.
pub fn closed_form_sp(domain: &Domain, pole: &Point, p: f64) -> Option<f64> {
    match *domain {
        Domain::Interval { a, b } => sp_interval(a, b, pole.x, p).ok(),
        Domain::Disk { center, radius } if pole.dist(&center) <= POLE_MATCH => {
            sp_ball_center(2, radius, p).ok()
        }
        _ => None,
    }
}

/// Closed form for `u_p(y)` matching [`closed_form_sp`].
pub fn closed_form_up(domain: &Domain, pole: &Point, p: f64, y: &Point) -> Option<f64> {
    match *domain {
        Domain::Interval { a, b } => up_interval(a, b, pole.x, p, y.x).ok(),
        Domain::Disk { center, radius } if pole.dist(&center) <= POLE_MATCH => {
            up_ball_center(2, radius, p, y.dist(&center).min(radius)).ok()
        }
        _ => None,
    }
}
