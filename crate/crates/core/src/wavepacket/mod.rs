//! One-particle wavefunctions `ψ(ξ) = ⟨0|φ̂(ξ)|1⟩`, the signal strength
//! `S(X, Y) = -Im(ψ(X)* ψ(Y))`, and the large-time fall-off of the 3+1d
//! Gaussian packet.
//!
//! Conventions: mostly-plus metric, `k_μ ξ^μ = -ω t + k·x` with `ω = |k|`.

mod oracle;

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadConfig};
use crate::spacetime::{classify_interval, CausalClass, SpacetimePoint};
use crate::specfun::{scaled_w_auto, Scaled};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Momentum-space cutoff above the packet center, in units of σ.
pub const TAIL_SIGMAS: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleMomentum {
    pub k: Vec<f64>,
    /// Box side length.
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub k0: Vec<f64>,
    pub sigma: f64,
    /// Infrared cutoff, used only for d = 1.
    #[serde(default)]
    pub epsilon: f64,
}

/// Amplitude `ψ̃(k)` on a uniform one-dimensional momentum grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPacket {
    pub k: Vec<f64>,
    pub amplitude: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WavePacket {
    SingleMomentum(SingleMomentum),
    Gaussian(GaussianPacket),
    Tabulated(TabulatedPacket),
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl GaussianPacket {
    pub fn new(k0: Vec<f64>, sigma: f64) -> Result<Self> {
        let k = norm(&k0);
        let p = Self {
            epsilon: 1e-3 * k,
            k0,
            sigma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Packet along +z in `d` dimensions.
    pub fn along_axis(k0: f64, sigma: f64, d: usize) -> Result<Self> {
        let mut v = vec![0.0; d];
        if d > 0 {
            v[d - 1] = k0;
        }
        Self::new(v, sigma)
    }

    pub fn d(&self) -> usize {
        self.k0.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k0.is_empty() || self.k0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("k0 must be a finite vector"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::invalid("epsilon must be non-negative"));
        }
        if norm(&self.k0) < 3.0 * self.sigma {
            log::warn!(
                "|k0| = {} is below 3 sigma = {}; the packet is not narrow",
                norm(&self.k0),
                3.0 * self.sigma
            );
        }
        Ok(())
    }

    /// `ψ̃(k) = (πσ²)^{-d/4} exp(-|k - k0|²/2σ²)`.
    pub fn amplitude(&self, k: &[f64]) -> f64 {
        let d = self.d() as f64;
        let r2: f64 = k.iter().zip(&self.k0).map(|(a, b)| (a - b) * (a - b)).sum();
        (PI * self.sigma * self.sigma).powf(-0.25 * d) * (-0.5 * r2 / (self.sigma * self.sigma)).exp()
    }

    /// `∫ |ψ̃|² d^dk` by quadrature, restricted to `k > ε` in d = 1.
    pub fn normalization(&self) -> Result<f64> {
        let cfg = QuadConfig::default().with_rel_tol(1e-12).with_panels(8);
        let s = self.sigma;
        let axis = |c: f64, lower: f64| -> Result<f64> {
            let lo = lower.max(c - TAIL_SIGMAS * s);
            let f = |k: f64| {
                let a = (PI * s * s).powf(-0.25) * (-0.5 * (k - c) * (k - c) / (s * s)).exp();
                Complex64::new(a * a, 0.0)
            };
            Ok(integrate(f, lo, c + TAIL_SIGMAS * s, &cfg)?.value.re)
        };
        if self.d() == 1 {
            axis(self.k0[0], self.epsilon)
        } else {
            // The Gaussian factorizes over Cartesian axes.
            self.k0
                .iter()
                .try_fold(1.0, |acc, &c| Ok(acc * axis(c, f64::NEG_INFINITY)?))
        }
    }
}

impl SingleMomentum {
    pub fn omega(&self) -> f64 {
        norm(&self.k)
    }
}

impl TabulatedPacket {
    /// Samples a 1d Gaussian on `n` uniform points covering `k0 ± half_width·σ`.
    pub fn gaussian(k0: f64, sigma: f64, half_width: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("tabulation needs at least two points"));
        }
        let g = GaussianPacket {
            k0: vec![k0],
            sigma,
            epsilon: 0.0,
        };
        let (lo, hi) = (k0 - half_width * sigma, k0 + half_width * sigma);
        let k: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let amplitude = k.iter().map(|&q| Complex64::new(g.amplitude(&[q]), 0.0)).collect();
        Ok(Self { k, amplitude })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.len() < 2 || self.k.len() != self.amplitude.len() {
            return Err(Error::invalid(
                "tabulated packet needs matching grids of at least two points",
            ));
        }
        let dk = self.k[1] - self.k[0];
        if !(dk > 0.0) {
            return Err(Error::invalid("momentum grid must be increasing"));
        }
        for w in self.k.windows(2) {
            if ((w[1] - w[0]) - dk).abs() > 1e-9 * dk.max(1.0) {
                return Err(Error::invalid("momentum grid must be uniform"));
            }
        }
        if self
            .amplitude
            .iter()
            .any(|a| !(a.re.is_finite() && a.im.is_finite()))
        {
            return Err(Error::invalid("amplitudes must be finite"));
        }
        Ok(())
    }

    /// Trapezoid weights on the tabulation grid.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.k.len();
        let dk = self.k[1] - self.k[0];
        (0..n)
            .map(|i| if i == 0 || i + 1 == n { 0.5 * dk } else { dk })
            .collect()
    }

    /// `∫ |ψ̃|² dk` by the trapezoid rule.
    pub fn normalization(&self) -> f64 {
        self.weights()
            .iter()
            .zip(&self.amplitude)
            .map(|(w, a)| w * a.norm_sqr())
            .sum()
    }
}

/// `L^{-d/2} (2ω)^{-1/2} e^{i k_μ ξ^μ}`.
pub fn psi_single_momentum(packet: &SingleMomentum, xi: &SpacetimePoint) -> Result<Complex64> {
    if xi.d() != packet.k.len() {
        return Err(Error::DimensionMismatch {
            expected: packet.k.len(),
            found: xi.d(),
        });
    }
    let omega = packet.omega();
    if omega == 0.0 {
        return Err(Error::invalid("zero momentum mode is excluded"));
    }
    if !(packet.l > 0.0) {
        return Err(Error::invalid("box length must be positive"));
    }
    let d = packet.k.len() as f64;
    let amp = packet.l.powf(-0.5 * d) / (2.0 * omega).sqrt();
    let phase = -omega * xi.t + dot(&packet.k, &xi.x);
    Ok(Complex64::from_polar(amp, phase))
}

/// 1+1d Gaussian packet of right-movers with infrared cutoff ε:
/// `(πσ²)^{-1/4} ∫_ε^∞ dk/(4πk) e^{-(k-k0)²/2σ²} e^{ik(z - t)}`.
pub fn psi_1d(packet: &GaussianPacket, y: &SpacetimePoint) -> Result<Complex64> {
    if packet.d() != 1 || y.d() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: if packet.d() != 1 { packet.d() } else { y.d() },
        });
    }
    if !(packet.epsilon > 0.0) {
        return Err(Error::invalid("infrared cutoff epsilon must be positive"));
    }
    let (k0, s) = (packet.k0[0], packet.sigma);
    // Only the null combination z - t enters for right-moving momenta.
    let w = y.x[0] - y.t;
    let lo = packet.epsilon.max(k0 - TAIL_SIGMAS * s);
    let hi = k0 + TAIL_SIGMAS * s;
    if lo >= hi {
        return Ok(Complex64::new(0.0, 0.0));
    }
    // k = e^u, dk/k = du
    let f = |u: f64| {
        let k = u.exp();
        let g = (-0.5 * (k - k0) * (k - k0) / (s * s)).exp();
        Complex64::from_polar(g, k * w)
    };
    let panels = 8 + (w.abs() * (hi - lo) / 1.5).ceil() as usize;
    let cfg = QuadConfig::default().with_rel_tol(1e-12).with_panels(panels);
    let res = integrate(f, lo.ln(), hi.ln(), &cfg)?;
    Ok(res.value * (PI * s * s).powf(-0.25) / (4.0 * PI))
}

/// Intermediate quantities of the 3+1d closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormTerms {
    pub v_plus: Complex64,
    pub v_minus: Complex64,
    /// `D_{-3/2}(v_±)`; may under- or overflow for large arguments.
    pub d_plus: Complex64,
    pub d_minus: Complex64,
    /// `e^{v²/4} D_{-3/2}(v)` in scaled form.
    pub w_plus: Scaled,
    pub w_minus: Scaled,
}

fn on_axis_k0(packet: &GaussianPacket) -> Result<f64> {
    if packet.d() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: packet.d(),
        });
    }
    let k0 = packet.k0[2];
    if packet.k0[0] != 0.0 || packet.k0[1] != 0.0 || !(k0 > 0.0) {
        return Err(Error::invalid("closed form requires k0 = (0, 0, k0) with k0 > 0"));
    }
    Ok(k0)
}

/// `v_± = iσ[t ± (z - i k0/σ²)]`.
pub fn closed_form_arguments(k0: f64, sigma: f64, t: f64, z: f64) -> (Complex64, Complex64) {
    let i_s = Complex64::new(0.0, sigma);
    let shifted = Complex64::new(z, -k0 / (sigma * sigma));
    (i_s * (t + shifted), i_s * (t - shifted))
}

/// Closed-form 3+1d Gaussian wavefunction at `(t, 0, 0, z)`.
pub fn psi_3d_closed_form(
    packet: &GaussianPacket,
    t: f64,
    z: f64,
) -> Result<(Complex64, ClosedFormTerms)> {
    let k0 = on_axis_k0(packet)?;
    let s = packet.sigma;
    let (v_plus, v_minus) = closed_form_arguments(k0, s, t, z);
    let w_plus = scaled_w_auto(-1.5, v_plus)?;
    let w_minus = scaled_w_auto(-1.5, v_minus)?;
    // e^{-k0²/2σ²} is folded into each scaled term before materializing.
    let shift = -0.5 * k0 * k0 / (s * s);
    let bracket = w_minus.value_shifted(shift) - w_plus.value_shifted(shift);
    let psi = bracket / (4.0 * PI.powf(0.75)) / Complex64::new(k0 / (s * s), z);
    let d_of = |v: Complex64, w: &Scaled| w.mantissa * (-0.25 * v * v + w.log_scale).exp();
    let terms = ClosedFormTerms {
        v_plus,
        v_minus,
        d_plus: d_of(v_plus, &w_plus),
        d_minus: d_of(v_minus, &w_minus),
        w_plus,
        w_minus,
    };
    Ok((psi, terms))
}

/// Independent radial-quadrature evaluation of the on-axis 3+1d wavefunction,
/// summed in 192-bit arithmetic.
pub fn psi_3d_quadrature(packet: &GaussianPacket, t: f64, z: f64) -> Result<Complex64> {
    let k0 = on_axis_k0(packet)?;
    if !(t.is_finite() && z.is_finite()) {
        return Err(Error::invalid("evaluation point must be finite"));
    }
    oracle::psi_3d_radial(k0, packet.sigma, t, z)
}

/// General 3+1d cubature in spherical coordinates about `k0`, for any point
/// and any `k0`. Nested adaptive quadrature in double precision; slow and
/// meant for spot checks where `|ψ|` is not tiny.
pub fn psi_3d_cubature(packet: &GaussianPacket, xi: &SpacetimePoint) -> Result<Complex64> {
    if packet.d() != 3 || xi.d() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: if packet.d() != 3 { packet.d() } else { xi.d() },
        });
    }
    let s = packet.sigma;
    let k0 = &packet.k0;
    let cfg = QuadConfig::default().with_rel_tol(1e-10).with_abs_tol(1e-14);
    // Momentum q = k - k0 in spherical coordinates (ρ, μ, φ); the Gaussian
    // only depends on ρ.
    let r_max = TAIL_SIGMAS * s;
    let phase_scale = xi.t.abs() + norm(&xi.x);
    let panels = (4 + (phase_scale * r_max / 6.0).ceil() as usize).min(16);
    let radial = |rho: f64| -> Complex64 {
        let inner_cfg = cfg.with_panels(panels);
        let polar = |mu: f64| -> Complex64 {
            let sin_t = (1.0 - mu * mu).max(0.0).sqrt();
            let azim = |phi: f64| -> Complex64 {
                let q = [rho * sin_t * phi.cos(), rho * sin_t * phi.sin(), rho * mu];
                let k = [k0[0] + q[0], k0[1] + q[1], k0[2] + q[2]];
                let omega = norm(&k);
                if omega == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let phase = -omega * xi.t + dot(&k, &xi.x);
                Complex64::from_polar(omega.powf(-0.5), phase)
            };
            integrate(azim, 0.0, 2.0 * PI, &inner_cfg)
                .map(|r| r.value)
                .unwrap_or(Complex64::new(f64::NAN, f64::NAN))
        };
        let ang = integrate(polar, -1.0, 1.0, &inner_cfg)
            .map(|r| r.value)
            .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        ang * rho * rho * (-0.5 * rho * rho / (s * s)).exp()
    };
    let res = integrate(radial, 0.0, r_max, &cfg.with_panels(panels))?;
    if !(res.value.re.is_finite() && res.value.im.is_finite()) {
        return Err(Error::QuadratureBudget {
            intervals: res.intervals,
            error: f64::NAN,
        });
    }
    let pref = (PI * s * s).powf(-0.75) * (2.0 * PI).powf(-1.5) * 2f64.powf(-0.5);
    Ok(res.value * pref)
}

/// `∫ dk (2π)^{-1/2} (2ω)^{-1/2} ψ̃(k) e^{i(-ωt + kx)}` on the tabulation grid
/// (trapezoid rule; the `k = 0` node is skipped).
pub fn psi_tabulated(packet: &TabulatedPacket, xi: &SpacetimePoint) -> Result<Complex64> {
    packet.validate()?;
    if xi.d() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: xi.d(),
        });
    }
    let norm = (2.0 * PI).powf(-0.5);
    let mut acc = Complex64::new(0.0, 0.0);
    for ((k, a), w) in packet.k.iter().zip(&packet.amplitude).zip(packet.weights()) {
        let omega = k.abs();
        if omega == 0.0 {
            continue;
        }
        let phase = -omega * xi.t + k * xi.x[0];
        acc += w * norm * (2.0 * omega).powf(-0.5) * a * Complex64::from_polar(1.0, phase);
    }
    Ok(acc)
}

/// Wavefunction of any packet kind at `xi`.
pub fn psi(packet: &WavePacket, xi: &SpacetimePoint) -> Result<Complex64> {
    match packet {
        WavePacket::SingleMomentum(p) => psi_single_momentum(p, xi),
        WavePacket::Gaussian(g) => match g.d() {
            1 => psi_1d(g, xi),
            3 => {
                let on_axis = xi.d() == 3 && xi.x[0] == 0.0 && xi.x[1] == 0.0;
                if on_axis && on_axis_k0(g).is_ok() {
                    psi_3d_closed_form(g, xi.t, xi.x[2]).map(|r| r.0)
                } else {
                    psi_3d_cubature(g, xi)
                }
            }
            d => Err(Error::invalid(format!("Gaussian packets in d = {d} are not supported"))),
        },
        WavePacket::Tabulated(p) => psi_tabulated(p, xi),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSample {
    pub x: SpacetimePoint,
    pub y: SpacetimePoint,
    pub psi_x: Complex64,
    pub psi_y: Complex64,
    pub s: f64,
    pub spacelike: bool,
}

/// `-Im(a* b)` written out so that swapping the arguments negates the result
/// exactly.
pub fn minus_im_conj_product(a: Complex64, b: Complex64) -> f64 {
    -(a.re * b.im - a.im * b.re)
}

pub fn signal_strength(
    x: &SpacetimePoint,
    y: &SpacetimePoint,
    packet: &WavePacket,
) -> Result<SignalSample> {
    let class = classify_interval(x, y)?;
    let psi_x = psi(packet, x)?;
    let psi_y = psi(packet, y)?;
    Ok(SignalSample {
        x: x.clone(),
        y: y.clone(),
        psi_x,
        psi_y,
        s: minus_im_conj_product(psi_x, psi_y),
        spacelike: class.class == CausalClass::Spacelike,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalloffSample {
    pub t: f64,
    pub psi: Complex64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalloffFit {
    /// Least-squares slope of log(envelope) against log(t).
    pub exponent: f64,
    /// Estimate of γ in `Im ψ ≈ γ √(k0/σ) cos(k0 δ) / t`.
    pub gamma_hat: f64,
    pub samples: Vec<FalloffSample>,
}

/// Samples `ψ(t, t + δ)` on a log-spaced grid and fits the envelope
/// `|ψ| |cos(k0 δ)|`, which is the amplitude of `Im ψ` once the carrier phase
/// is factored out.
pub fn falloff_fit(
    packet: &GaussianPacket,
    delta: f64,
    t_range: (f64, f64),
    n_samples: usize,
) -> Result<FalloffFit> {
    let k0 = on_axis_k0(packet)?;
    let s = packet.sigma;
    if !(delta > 0.0 && delta < 1.0 / s) {
        return Err(Error::invalid("delta must lie in (0, 1/sigma)"));
    }
    let (t_min, t_max) = t_range;
    if !(t_min >= 5.0 * k0 / (s * s)) {
        return Err(Error::invalid(format!(
            "t_min must be at least 5 k0/sigma^2 = {}",
            5.0 * k0 / (s * s)
        )));
    }
    if !(t_max > t_min) || n_samples < 4 {
        return Err(Error::IllConditioned(
            "fall-off fit needs t_max > t_min and at least 4 samples".into(),
        ));
    }
    let carrier = (k0 * delta).cos().abs();
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let frac = i as f64 / (n_samples - 1) as f64;
        let t = (t_min.ln() + frac * (t_max.ln() - t_min.ln())).exp();
        let (psi, _) = psi_3d_closed_form(packet, t, t + delta)?;
        samples.push(FalloffSample {
            t,
            psi,
            envelope: psi.norm() * carrier,
        });
    }
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.envelope > 0.0 && s.envelope.is_finite())
        .map(|s| (s.t.ln(), s.envelope.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::IllConditioned(format!(
            "only {} samples with a positive envelope",
            pts.len()
        )));
    }
    let (slope, _) = linear_fit(&pts);
    let log_gamma: f64 = samples
        .iter()
        .map(|s| (s.psi.norm() * s.t).ln())
        .sum::<f64>()
        / samples.len() as f64;
    Ok(FalloffFit {
        exponent: slope,
        gamma_hat: log_gamma.exp() / (k0 / s).sqrt(),
        samples,
    })
}

/// Ordinary least squares `y = a x + b`; returns (a, b).
pub(crate) fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}
