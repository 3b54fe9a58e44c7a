//! Extended-precision radial quadrature for the on-axis 3+1d Gaussian packet.
//!
//! After the angular integration the wavefunction reduces to
//!
//! ```text
//! ψ(t, z) = P / (k0/σ² + iz) · [J(k0, z - t) - J(-k0, -(z + t))]
//! J(m, w) = ∫₀^K √k exp(-(k - m)²/2σ² + ikw) dk
//! ```
//!
//! with `P = (πσ²)^{-3/4} (2π)^{-3/2} 2^{-1/2} 2π`. Far from the packet `J`
//! is many orders of magnitude below its integrand, so it is summed in
//! 192-bit arithmetic by composite 20-point Gauss-Legendre on the real
//! axis. Inside a panel the exponential is advanced by exact
//! multiplicative recurrences, so only a fixed number of transcendental
//! evaluations is needed per integral.

use crate::error::{Error, Result};
use astro_float::{BigFloat, Consts, RoundingMode, Sign};
use num_complex::Complex64;

const PREC: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;
const GL_POINTS: usize = 20;

#[derive(Clone, Debug)]
struct Bc {
    re: BigFloat,
    im: BigFloat,
}

fn bf(x: f64) -> BigFloat {
    BigFloat::from_f64(x, PREC)
}

impl Bc {
    fn zero() -> Self {
        Self {
            re: bf(0.0),
            im: bf(0.0),
        }
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            re: self.re.add(&o.re, PREC, RM),
            im: self.im.add(&o.im, PREC, RM),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let rr = self.re.mul(&o.re, PREC, RM);
        let ii = self.im.mul(&o.im, PREC, RM);
        let ri = self.re.mul(&o.im, PREC, RM);
        let ir = self.im.mul(&o.re, PREC, RM);
        Self {
            re: rr.sub(&ii, PREC, RM),
            im: ri.add(&ir, PREC, RM),
        }
    }

    fn scale(&self, s: &BigFloat) -> Self {
        Self {
            re: self.re.mul(s, PREC, RM),
            im: self.im.mul(s, PREC, RM),
        }
    }

    /// `exp(re + i im)`.
    fn exp(re: &BigFloat, im: &BigFloat, cc: &mut Consts) -> Self {
        let mag = re.exp(PREC, RM, cc);
        Self {
            re: mag.mul(&im.cos(PREC, RM, cc), PREC, RM),
            im: mag.mul(&im.sin(PREC, RM, cc), PREC, RM),
        }
    }

    fn to_c64(&self) -> Complex64 {
        Complex64::new(to_f64(&self.re), to_f64(&self.im))
    }
}

fn to_f64(x: &BigFloat) -> f64 {
    let Some((words, _, sign, exponent, _)) = x.as_raw_parts() else {
        return if x.is_inf_pos() {
            f64::INFINITY
        } else if x.is_inf_neg() {
            f64::NEG_INFINITY
        } else {
            f64::NAN
        };
    };
    if x.is_zero() {
        return 0.0;
    }
    // Mantissa is normalized to [1/2, 1) with the most significant word last.
    let n = words.len();
    let hi = words[n - 1] as f64;
    let lo = if n > 1 { words[n - 2] as f64 } else { 0.0 };
    let word = 2f64.powi(64);
    let frac = hi / word + lo / (word * word);
    let mut v = frac;
    let mut e = exponent;
    // Apply 2^e in steps that stay inside the f64 exponent range.
    while e > 0 {
        let step = e.min(1000);
        v *= 2f64.powi(step);
        e -= step;
    }
    while e < 0 {
        let step = (-e).min(1000);
        v /= 2f64.powi(step);
        e += step;
    }
    if sign == Sign::Neg {
        -v
    } else {
        v
    }
}

struct GaussLegendre {
    nodes: Vec<BigFloat>,
    weights: Vec<BigFloat>,
}

impl GaussLegendre {
    /// Nodes and weights on [-1, 1] by Newton iteration on P_n.
    fn new(n: usize) -> Self {
        let one = bf(1.0);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut x = bf(guess);
            let mut dp = bf(0.0);
            for _ in 0..8 {
                let (p, d) = legendre(n, &x);
                dp = d;
                let dx = p.div(&dp, PREC, RM);
                x = x.sub(&dx, PREC, RM);
            }
            let (_, d) = legendre(n, &x);
            if !d.is_zero() {
                dp = d;
            }
            let x2 = x.mul(&x, PREC, RM);
            let denom = one.sub(&x2, PREC, RM).mul(&dp.mul(&dp, PREC, RM), PREC, RM);
            weights.push(bf(2.0).div(&denom, PREC, RM));
            nodes.push(x);
        }
        Self { nodes, weights }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: &BigFloat) -> (BigFloat, BigFloat) {
    let mut p0 = bf(1.0);
    let mut p1 = x.clone();
    for j in 2..=n {
        let jf = j as f64;
        let a = x
            .mul(&p1, PREC, RM)
            .mul(&bf(2.0 * jf - 1.0), PREC, RM);
        let b = p0.mul(&bf(jf - 1.0), PREC, RM);
        let p2 = a.sub(&b, PREC, RM).div(&bf(jf), PREC, RM);
        p0 = p1;
        p1 = p2;
    }
    let nf = bf(n as f64);
    let num = x.mul(&p1, PREC, RM).sub(&p0, PREC, RM).mul(&nf, PREC, RM);
    let den = x.mul(x, PREC, RM).sub(&bf(1.0), PREC, RM);
    (p1, num.div(&den, PREC, RM))
}

/// `∫₀^K √k exp(-(k - m)²/2σ² + ikw) dk` with `n` equal panels.
fn sqrt_gauss_fourier(
    m: f64,
    sigma: f64,
    w: f64,
    k_max: f64,
    n: usize,
    gl: &GaussLegendre,
    cc: &mut Consts,
) -> Bc {
    let s2 = bf(sigma * sigma);
    let inv_2s2 = bf(0.5).div(&s2, PREC, RM);
    let big_h = bf(k_max).div(&bf(n as f64), PREC, RM);
    let h = big_h.mul(&bf(0.5), PREC, RM);
    let m_b = bf(m);
    let w_b = bf(w);

    // exponent Q(k) = -(k - m)²/2σ² + ikw
    let q = |k: &BigFloat, cc: &mut Consts| {
        let d = k.sub(&m_b, PREC, RM);
        let re = d.mul(&d, PREC, RM).mul(&inv_2s2, PREC, RM).neg();
        let im = k.mul(&w_b, PREC, RM);
        Bc::exp(&re, &im, cc)
    };

    let mut total = Bc::zero();

    // First panel: k = u², dk = 2u du, √k dk = 2u² du.
    let u_max = big_h.sqrt(PREC, RM);
    let u_half = u_max.mul(&bf(0.5), PREC, RM);
    for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
        let u = u_half.add(&u_half.mul(x, PREC, RM), PREC, RM);
        let k = u.mul(&u, PREC, RM);
        let jac = u.mul(&u, PREC, RM).mul(&bf(2.0), PREC, RM);
        let f = q(&k, cc).scale(&jac.mul(wt, PREC, RM));
        total = total.add(&f.scale(&u_half));
    }

    if n == 1 {
        return total;
    }

    // Remaining panels, centers c_j = (j + 1/2) H for j = 1..n-1.
    // Q(c + h x) = Q(c) + Q'(c) h x + Q'' h² x² / 2 with Q'' = -1/σ².
    let c1 = big_h.mul(&bf(1.5), PREC, RM);
    let dq1_re = c1.sub(&m_b, PREC, RM).div(&s2, PREC, RM).neg();
    let mut a = q(&c1, cc); // e^{Q(c_j)}
    // e^{Q(c_{j+1}) - Q(c_j)} = e^{H Q'(c_j) - H²/2σ²}
    let h2_over_s2 = big_h.mul(&big_h, PREC, RM).div(&s2, PREC, RM);
    let step_re = big_h
        .mul(&dq1_re, PREC, RM)
        .sub(&h2_over_s2.mul(&bf(0.5), PREC, RM), PREC, RM);
    let step_im = big_h.mul(&w_b, PREC, RM);
    let mut step = Bc::exp(&step_re, &step_im, cc);
    let step_ratio = Bc::exp(&h2_over_s2.neg(), &bf(0.0), cc);

    // Per-node factors: B_i = e^{Q'(c_j) h x_i}, advanced by R_i = e^{-H h x_i / σ²};
    // C_i = w_i e^{-h² x_i²/2σ²}.
    let mut b = Vec::with_capacity(GL_POINTS);
    let mut r = Vec::with_capacity(GL_POINTS);
    let mut cw = Vec::with_capacity(GL_POINTS);
    let hh_over_s2 = big_h.mul(&h, PREC, RM).div(&s2, PREC, RM);
    for (x, wt) in gl.nodes.iter().zip(&gl.weights) {
        let hx = h.mul(x, PREC, RM);
        b.push(Bc::exp(
            &dq1_re.mul(&hx, PREC, RM),
            &w_b.mul(&hx, PREC, RM),
            cc,
        ));
        r.push(hh_over_s2.mul(x, PREC, RM).neg().exp(PREC, RM, cc));
        let g = hx.mul(&hx, PREC, RM).mul(&inv_2s2, PREC, RM).neg();
        cw.push(g.exp(PREC, RM, cc).mul(wt, PREC, RM));
    }

    for j in 1..n {
        let c = big_h.mul(&bf(j as f64 + 0.5), PREC, RM);
        let mut panel = Bc::zero();
        for i in 0..GL_POINTS {
            let k = c.add(&h.mul(&gl.nodes[i], PREC, RM), PREC, RM);
            let amp = k.sqrt(PREC, RM).mul(&cw[i], PREC, RM);
            panel = panel.add(&b[i].scale(&amp));
            b[i] = b[i].scale(&r[i]);
        }
        total = total.add(&a.mul(&panel).scale(&h));
        a = a.mul(&step);
        step = step.mul(&step_ratio);
    }
    total
}

/// Radial-quadrature value of the on-axis 3+1d Gaussian wavefunction.
pub(super) fn psi_3d_radial(k0: f64, sigma: f64, t: f64, z: f64) -> Result<Complex64> {
    let k_max = k0 + 12.0 * sigma;
    let mut cc = Consts::new().map_err(|e| Error::LossOfPrecision(format!("{e:?}")))?;
    let gl = GaussLegendre::new(GL_POINTS);
    let w1 = z - t;
    let w2 = -(z + t);
    // At most ~2 radians of phase and 0.4σ of Gaussian per panel.
    let phase = w1.abs().max(w2.abs()) * k_max;
    let mut n = ((phase / 2.0).ceil() as usize)
        .max((k_max / (0.4 * sigma)).ceil() as usize)
        .max(16);
    let eval = |n: usize, cc: &mut Consts| {
        let j1 = sqrt_gauss_fourier(k0, sigma, w1, k_max, n, &gl, cc);
        let j2 = sqrt_gauss_fourier(-k0, sigma, w2, k_max, n, &gl, cc);
        let diff = Bc {
            re: j1.re.sub(&j2.re, PREC, RM),
            im: j1.im.sub(&j2.im, PREC, RM),
        };
        diff.to_c64()
    };
    let mut prev = eval(n, &mut cc);
    for _ in 0..6 {
        n *= 2;
        let cur = eval(n, &mut cc);
        if (cur - prev).norm() <= 1e-13 * cur.norm() {
            let pi = std::f64::consts::PI;
            let pref = (pi * sigma * sigma).powf(-0.75) * (2.0 * pi).powf(-1.5) * 2f64.powf(-0.5)
                * 2.0
                * pi;
            return Ok(cur * pref / Complex64::new(k0 / (sigma * sigma), z));
        }
        prev = cur;
    }
    Err(Error::QuadratureBudget {
        intervals: n,
        error: f64::NAN,
    })
}
