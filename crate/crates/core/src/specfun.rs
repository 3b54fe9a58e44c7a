//! Parabolic cylinder function D_ν(z) for ν < 0 and complex z.
//!
//! Values are computed from the integral representation
//!
//! ```text
//! D_ν(z) = e^{-z²/4} / Γ(-ν) ∫₀^∞ s^{-ν-1} e^{-s²/2 - z s} ds
//! ```
//!
//! The integral itself, `W_ν(z) = e^{z²/4} D_ν(z)`, is what the wavepacket
//! closed form needs, and it is returned in scaled form (`log_scale`,
//! `mantissa`) so that neither factor has to be materialized separately.
//!
//! The path of integration is deformed away from the real axis. For
//! `Re z ≥ 0` a ray `s = r e^{iα}` with `α ≈ -arg z` removes most of the
//! oscillation of `e^{-zs}`. For `Re z < 0` the path runs straight to the
//! saddle `s* = -z` and then parallel to the real axis, where the integrand
//! reduces to a real Gaussian times `(s* + r)^{-ν-1}`.

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadConfig};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Largest |Im z| accepted by the quadrature path.
pub const IM_Z_MAX: f64 = 600.0;

/// |z| beyond which [`parabolic_cylinder_d_auto`] may use the asymptotic series.
pub const ASYMPTOTIC_RADIUS: f64 = 30.0;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

// Magnitude drop (in e-folds) at which an integrand tail is discarded.
const TAIL_EFOLDS: f64 = 50.0;
// Upper bound on resolved oscillations before reporting loss of precision.
const MAX_OSCILLATIONS: f64 = 4000.0;

/// Gamma function for real arguments (Lanczos, g = 7).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// A complex number represented as `exp(log_scale) * mantissa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub log_scale: f64,
    pub mantissa: Complex64,
}

impl Scaled {
    pub fn value(&self) -> Complex64 {
        self.mantissa * self.log_scale.exp()
    }

    /// `exp(log_scale + shift) * mantissa`, with the exponent folded first.
    pub fn value_shifted(&self, shift: f64) -> Complex64 {
        self.mantissa * (self.log_scale + shift).exp()
    }
}

fn check_args(nu: f64, z: Complex64) -> Result<()> {
    if !nu.is_finite() || nu >= 0.0 {
        return Err(Error::invalid(format!("order must be negative, got {nu}")));
    }
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::invalid("argument must be finite"));
    }
    Ok(())
}

fn default_config() -> QuadConfig {
    QuadConfig {
        rel_tol: 1e-13,
        abs_tol: 0.0,
        max_intervals: 40_000,
        initial_panels: 1,
    }
}

/// Solves `a r² + b r = target` for the positive root.
fn tail_radius(a: f64, b: f64, p: f64) -> f64 {
    let solve = |target: f64| (-b + (b * b + 4.0 * a * target).sqrt()) / (2.0 * a);
    let mut r = solve(TAIL_EFOLDS);
    for _ in 0..3 {
        r = solve(TAIL_EFOLDS + p.max(0.0) * r.max(1.0).ln());
    }
    r
}

fn panels_for_phase(phase: f64) -> Result<usize> {
    if phase / (2.0 * PI) > MAX_OSCILLATIONS {
        return Err(Error::LossOfPrecision(format!(
            "integrand carries {:.0} oscillations",
            phase / (2.0 * PI)
        )));
    }
    Ok(4 + (phase / 1.5).ceil() as usize)
}

/// Ray path `s = r e^{iα}`, used for `Re z ≥ 0` and for small |z|.
fn ray_integral(p: f64, z: Complex64, cfg: &QuadConfig) -> Result<Complex64> {
    let alpha = if z.re >= 0.0 && z.norm() > 0.0 {
        (-z.arg()).clamp(-0.707, 0.707)
    } else {
        0.0
    };
    let rot = Complex64::from_polar(1.0, alpha);
    let rot2 = rot * rot;
    let c = z * rot;
    let a = 0.5 * rot2.re;
    let r_max = tail_radius(a, c.re, p);
    let phase = c.im.abs() * r_max + 0.5 * rot2.im.abs() * r_max * r_max;
    let cfg = QuadConfig {
        initial_panels: cfg.initial_panels.max(panels_for_phase(phase)?),
        ..*cfg
    };
    // r = u², dr = 2u du, r^p dr = 2 u^{2p+1} du
    let f = |u: f64| {
        if u == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let r = u * u;
        let expo = -0.5 * rot2 * r * r - c * r;
        2.0 * u.powf(2.0 * p + 1.0) * expo.exp()
    };
    let res = integrate(f, 0.0, r_max.sqrt(), &cfg)?;
    Ok(res.value * Complex64::from_polar(1.0, alpha * (p + 1.0)))
}

/// Saddle path for `Re z < 0`: segment `0 → s*` then `s* + r`, `r ≥ 0`.
fn saddle_integral(p: f64, z: Complex64, cfg: &QuadConfig) -> Result<Scaled> {
    let s_star = -z;
    let q = s_star * s_star;
    let log_scale = (0.5 * q.re).max(0.0);

    // Segment s = τ s*: integrand s*^{p+1} τ^p exp(q(τ - τ²/2)).
    let tau_max = if q.re < 0.0 {
        // |Re q| (τ - τ²/2) reaches the tail threshold before τ = 1?
        let target = (TAIL_EFOLDS + 10.0) / (-q.re);
        if target < 0.5 {
            1.0 - (1.0 - 2.0 * target).sqrt()
        } else {
            1.0
        }
    } else {
        1.0
    };
    let phase = q.im.abs() * (tau_max - 0.5 * tau_max * tau_max);
    let seg_cfg = QuadConfig {
        initial_panels: cfg.initial_panels.max(panels_for_phase(phase)?),
        ..*cfg
    };
    let seg = |u: f64| {
        if u == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let tau = u * u;
        let expo = q * (tau - 0.5 * tau * tau) - log_scale;
        2.0 * u.powf(2.0 * p + 1.0) * expo.exp()
    };
    let segment = integrate(seg, 0.0, tau_max.sqrt(), &seg_cfg)?.value * s_star.powf(p + 1.0);

    // Horizontal line: exp(q/2) ∫ (s* + r)^p e^{-r²/2} dr.
    let horiz_log = 0.5 * q.re - log_scale;
    let horizontal = if horiz_log < -70.0 {
        Complex64::new(0.0, 0.0)
    } else {
        let h = |r: f64| (s_star + r).powf(p) * (-0.5 * r * r).exp();
        let h_cfg = QuadConfig {
            initial_panels: cfg.initial_panels.max(8),
            ..*cfg
        };
        let val = integrate(h, 0.0, 12.0, &h_cfg)?.value;
        val * Complex64::new(horiz_log, 0.5 * q.im).exp()
    };
    Ok(Scaled {
        log_scale,
        mantissa: segment + horizontal,
    })
}

/// Scaled `W_ν(z) = e^{z²/4} D_ν(z)` with an explicit quadrature configuration.
pub fn scaled_w_with(nu: f64, z: Complex64, cfg: &QuadConfig) -> Result<Scaled> {
    check_args(nu, z)?;
    if z.im.abs() > IM_Z_MAX {
        return Err(Error::LossOfPrecision(format!(
            "|Im z| = {} exceeds the validity window {IM_Z_MAX}",
            z.im.abs()
        )));
    }
    let p = -nu - 1.0;
    let norm = 1.0 / gamma(-nu);
    let raw = if z.re >= 0.0 || z.norm() <= 2.0 {
        Scaled {
            log_scale: 0.0,
            mantissa: ray_integral(p, z, cfg)?,
        }
    } else {
        saddle_integral(p, z, cfg)?
    };
    Ok(Scaled {
        log_scale: raw.log_scale,
        mantissa: raw.mantissa * norm,
    })
}

/// Scaled `W_ν(z) = e^{z²/4} D_ν(z)` by quadrature.
pub fn scaled_w(nu: f64, z: Complex64) -> Result<Scaled> {
    scaled_w_with(nu, z, &default_config())
}

/// `D_ν(z)` by quadrature; errors outside the validity window.
pub fn parabolic_cylinder_d(nu: f64, z: Complex64) -> Result<Complex64> {
    parabolic_cylinder_d_with(nu, z, &default_config())
}

pub fn parabolic_cylinder_d_with(nu: f64, z: Complex64, cfg: &QuadConfig) -> Result<Complex64> {
    let w = scaled_w_with(nu, z, cfg)?;
    let expo = -0.25 * z * z + w.log_scale;
    Ok(w.mantissa * expo.exp())
}

/// Two-correction asymptotic series for `W_ν(z)`, valid for large |z| with |arg z| < 3π/4.
pub fn scaled_w_asymptotic(nu: f64, z: Complex64) -> Complex64 {
    let z2 = z * z;
    let c1 = nu * (nu - 1.0) / 2.0;
    let c2 = nu * (nu - 1.0) * (nu - 2.0) * (nu - 3.0) / 8.0;
    z.powf(nu) * (1.0 - c1 / z2 + c2 / (z2 * z2))
}

pub fn parabolic_cylinder_d_asymptotic(nu: f64, z: Complex64) -> Complex64 {
    (-0.25 * z * z).exp() * scaled_w_asymptotic(nu, z)
}

fn asymptotic_applies(z: Complex64) -> bool {
    z.norm() > ASYMPTOTIC_RADIUS && z.arg().abs() < 0.75 * PI
}

/// Scaled `W_ν(z)`, falling back to the asymptotic series when quadrature
/// reports loss of precision and the series is applicable.
pub fn scaled_w_auto(nu: f64, z: Complex64) -> Result<Scaled> {
    match scaled_w(nu, z) {
        Err(Error::LossOfPrecision(msg)) => {
            if asymptotic_applies(z) {
                log::debug!("asymptotic branch for z = {z}: {msg}");
                Ok(Scaled {
                    log_scale: 0.0,
                    mantissa: scaled_w_asymptotic(nu, z),
                })
            } else {
                Err(Error::LossOfPrecision(msg))
            }
        }
        other => other,
    }
}

pub fn parabolic_cylinder_d_auto(nu: f64, z: Complex64) -> Result<Complex64> {
    let w = scaled_w_auto(nu, z)?;
    Ok(w.mantissa * (-0.25 * z * z + w.log_scale).exp())
}
