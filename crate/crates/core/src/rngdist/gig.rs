//! Generalized inverse Gaussian variates.
//!
//! `giG(κ, ρ, χ)` has density `∝ y^{κ-1} exp(-(ρy + χ/y)/2)` on `y > 0`.
//! With `ω = √(ρχ)` and `η = √(χ/ρ)`, `y = η·x` where `x` has the
//! two-parameter density `∝ x^{λ-1} exp(-ω(x + 1/x)/2)`, and negative orders
//! follow from `giG(-λ) = 1/giG(λ)` on the standardized scale. The
//! standardized draw uses the three rejection schemes of Hörmann & Leydold
//! (2014), chosen by `(λ, ω)`:
//!
//! * ratio-of-uniforms shifted to the mode, for `λ > 2` or `ω > 3`;
//! * ratio-of-uniforms without shift, for `λ ≥ 1 - 2.25ω²` or `ω > 0.2`;
//! * a piecewise constant/power/exponential hat otherwise.

use std::f64::consts::PI;

use rand::Rng;

use super::{open_unit, sample_gamma};
use crate::error::{Result, ScfmError};

/// One draw from `giG(kappa, rho, chi)`.
///
/// `chi = 0` reduces to `Gamma(kappa, rate rho/2)` and then needs
/// `kappa > 0`.
pub fn sample_gig<R: Rng + ?Sized>(kappa: f64, rho: f64, chi: f64, rng: &mut R) -> Result<f64> {
    if !kappa.is_finite() || !(rho > 0.0 && rho.is_finite()) || !(chi >= 0.0 && chi.is_finite())
    {
        return Err(ScfmError::arg(format!(
            "giG parameters out of range: ({kappa}, {rho}, {chi})"
        )));
    }
    if chi == 0.0 {
        if kappa <= 0.0 {
            return Err(ScfmError::arg(format!(
                "giG({kappa}, {rho}, 0) is improper"
            )));
        }
        return sample_gamma(kappa, 0.5 * rho, rng);
    }
    let lambda = kappa.abs();
    let omega = (rho * chi).sqrt();
    let eta = (chi / rho).sqrt();
    if omega == 0.0 {
        return Err(ScfmError::arg(format!(
            "giG({kappa}, {rho}, {chi}): rho*chi underflows"
        )));
    }
    let x = if lambda > 2.0 || omega > 3.0 {
        rou_shifted(lambda, omega, rng)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_unshifted(lambda, omega, rng)
    } else {
        piecewise_hat(lambda, omega, rng)
    };
    Ok(if kappa < 0.0 { eta / x } else { eta * x })
}

/// Mode of the standardized density.
fn mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0) * (lambda - 1.0) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda) * (1.0 - lambda) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

// log of the square root of the unnormalized standardized density
#[inline]
fn half_log_density(x: f64, t: f64, s: f64) -> f64 {
    t * x.ln() - s * (x + 1.0 / x)
}

fn rou_unshifted<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = half_log_density(xm, t, s);
    let ym = ((lambda + 1.0) + ((lambda + 1.0) * (lambda + 1.0) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v = open_unit(rng);
        let x = u / v;
        if x > 0.0 && v.ln() <= half_log_density(x, t, s) - nc {
            return x;
        }
    }
}

fn rou_shifted<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = mode(lambda, omega);
    let nc = half_log_density(xm, t, s);

    // Extremes of (x - xm)·√f(x) solve y³ + a y² + b y + c = 0; reduce to the
    // depressed cubic and apply the trigonometric form of Cardano's rule.
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * PI).cos() - a / 3.0;

    let uplus = (y1 - xm) * (half_log_density(y1, t, s) - nc).exp();
    let uminus = (y2 - xm) * (half_log_density(y2, t, s) - nc).exp();
    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v = open_unit(rng);
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= half_log_density(x, t, s) - nc {
            return x;
        }
    }
}

// 0 ≤ λ < 1 and small ω: constant hat below x0, power hat up to 2/ω,
// exponential hat beyond.
fn piecewise_hat<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let xm = mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a1 = k0 * x0;

    let (k1, a2, k2, a3);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a2 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a3 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a2 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a3 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a1 + a2 + a3;
    let tail_start = x0.max(2.0 / omega);

    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx) = if v <= a1 {
            (x0 * v / a1, k0)
        } else {
            v -= a1;
            if v <= a2 {
                if lambda == 0.0 {
                    let x = omega * (omega.exp() * v).exp();
                    (x, k1 / x)
                } else {
                    let x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    (x, k1 * x.powf(lambda - 1.0))
                }
            } else {
                v -= a2;
                let x = -2.0 / omega
                    * ((-omega / 2.0 * tail_start).exp() - omega / (2.0 * k2) * v).ln();
                (x, k2 * (-omega / 2.0 * x).exp())
            }
        };
        if !(x > 0.0 && x.is_finite()) {
            continue;
        }
        let u = rng.random::<f64>() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}
