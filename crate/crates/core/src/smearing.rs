//! Spatial smearing functions of single-mode and wave-packet observables,
//! localisation diagnostics, and the bipartite no-signalling check.

use crate::error::{Error, Result};
use crate::fockbox::{exp_i_hermitian, OperatorMatrix, TOL_OP};
use crate::spacetime::SpacetimePoint;
use crate::wavepacket::{linear_fit, psi_tabulated, TabulatedPacket};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Tail metric at or below which a profile counts as having bounded support.
pub const BOUNDED_TAIL: f64 = 1e-14;

/// Relative level below which tail samples are treated as rounding noise.
pub const TAIL_FLOOR: f64 = 1e-12;

/// Minimum coefficient of determination for an exponential-tail verdict.
pub const MIN_R_SQUARED: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmearingProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Tail metric for [`SmearingProfile::central_window`].
    pub tail_metric: f64,
}

impl SmearingProfile {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if grid.len() < 4 {
            return Err(Error::invalid("profile needs at least four grid points"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("grid must be finite and strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("profile values must be finite"));
        }
        let mut p = Self {
            grid,
            values,
            tail_metric: 0.0,
        };
        p.tail_metric = p.tail_metric_for(p.central_window())?;
        Ok(p)
    }

    /// Middle half of the grid.
    pub fn central_window(&self) -> (f64, f64) {
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        let q = 0.25 * (hi - lo);
        (lo + q, hi - q)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn split(&self, window: (f64, f64)) -> Result<(f64, f64)> {
        let (a, b) = window;
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if !(a < b && a >= lo && b <= hi) {
            return Err(Error::invalid(format!(
                "window [{a}, {b}] must lie inside the grid [{lo}, {hi}]"
            )));
        }
        let (mut inside, mut outside, mut n_out) = (0.0f64, 0.0f64, 0usize);
        for (x, v) in self.grid.iter().zip(&self.values) {
            if *x >= a && *x <= b {
                inside = inside.max(v.abs());
            } else {
                outside = outside.max(v.abs());
                n_out += 1;
            }
        }
        if n_out == 0 {
            return Err(Error::invalid("no grid points outside the window"));
        }
        Ok((inside, outside))
    }

    /// `max |value|` outside `window` over `max |value|` inside it.
    pub fn tail_metric_for(&self, window: (f64, f64)) -> Result<f64> {
        let (inside, outside) = self.split(window)?;
        Ok(if outside == 0.0 {
            0.0
        } else if inside == 0.0 {
            f64::INFINITY
        } else {
            outside / inside
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decay {
    Bounded,
    ExponentialTail,
    NonDecaying,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub window: (f64, f64),
    pub tail_metric: f64,
    pub decay: Decay,
    /// Slope of `ln|value|` at the tail's local maxima against distance from
    /// the window.
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
}

/// Classifies how a profile behaves outside `window`.
///
/// Bounded when the tail metric is at most [`BOUNDED_TAIL`]. Otherwise the
/// local maxima of `|value|` outside the window that lie above
/// [`TAIL_FLOOR`] times the in-window maximum are fitted as `ln|v| = a + s·dist`;
/// a negative slope with `R² > 0.9` that spans at least one e-fold over the
/// tail gives an exponential tail, anything else is non-decaying.
pub fn localization_report(profile: &SmearingProfile, window: (f64, f64)) -> Result<LocalizationReport> {
    let (inside, _) = profile.split(window)?;
    let tail_metric = profile.tail_metric_for(window)?;
    let mut report = LocalizationReport {
        window,
        tail_metric,
        decay: Decay::NonDecaying,
        slope: None,
        r_squared: None,
    };
    if tail_metric <= BOUNDED_TAIL {
        report.decay = Decay::Bounded;
        return Ok(report);
    }
    let (a, b) = window;
    let g = &profile.grid;
    let v: Vec<f64> = profile.values.iter().map(|x| x.abs()).collect();
    let floor = TAIL_FLOOR * inside;
    let mut pts = Vec::new();
    for i in 1..g.len() - 1 {
        let outside = g[i] < a || g[i] > b;
        if outside && v[i] > floor && v[i] >= v[i - 1] && v[i] >= v[i + 1] {
            let dist = if g[i] < a { a - g[i] } else { g[i] - b };
            pts.push((dist, v[i].ln()));
        }
    }
    if pts.len() < 3 {
        if tail_metric <= TAIL_FLOOR {
            report.decay = Decay::Bounded;
        }
        return Ok(report);
    }
    let (slope, intercept) = linear_fit(&pts);
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sst: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 0.0 };
    let span = pts.iter().map(|p| p.0).fold(0.0, f64::max) - pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    report.slope = Some(slope);
    report.r_squared = Some(r2);
    if slope < 0.0 && r2 > MIN_R_SQUARED && slope * span <= -1.0 {
        report.decay = Decay::ExponentialTail;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// `(2π)^{-d/2}`.
    Continuum,
    /// `L^{-d/2}` for a box of side `l`.
    Box { l: f64 },
}

/// `F(x) = (2ω)^{1/2} N cos(k·x)`, `G(x) = (2/ω)^{1/2} N sin(k·x)` with
/// `N = (2π)^{-d/2}` or `L^{-d/2}`, sampled at `x = (s, 0, …, 0)` for each
/// grid value `s`.
pub fn smearing_fg(k: &[f64], x_grid: &[f64], norm: Normalization) -> Result<(SmearingProfile, SmearingProfile)> {
    let w = k.iter().map(|c| c * c).sum::<f64>().sqrt();
    if k.is_empty() || !(w > 0.0 && w.is_finite()) {
        return Err(Error::invalid("momentum must be nonzero and finite"));
    }
    let d = k.len() as f64;
    let n = match norm {
        Normalization::Continuum => (2.0 * PI).powf(-0.5 * d),
        Normalization::Box { l } if l > 0.0 && l.is_finite() => l.powf(-0.5 * d),
        Normalization::Box { .. } => return Err(Error::invalid("box length must be positive")),
    };
    let f = x_grid.iter().map(|s| (2.0 * w).sqrt() * n * (k[0] * s).cos()).collect();
    let g = x_grid.iter().map(|s| (2.0 / w).sqrt() * n * (k[0] * s).sin()).collect();
    Ok((
        SmearingProfile::new(x_grid.to_vec(), f)?,
        SmearingProfile::new(x_grid.to_vec(), g)?,
    ))
}

/// `J(x) = ∫dk (2π)^{-1/2}(ω/2)^{1/2}[e^{ikx}ψ̃ + c.c.]` and
/// `K(x) = -i∫dk (2π)^{-1/2}(2ω)^{-1/2}[e^{ikx}ψ̃ - c.c.]` for a 1d
/// tabulated amplitude, by the trapezoid rule on its grid (`k = 0` skipped).
pub fn smearing_jk(psi: &TabulatedPacket, x_grid: &[f64]) -> Result<(SmearingProfile, SmearingProfile)> {
    psi.validate()?;
    let n = psi.normalization();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("momentum amplitude norm {n} differs from 1")));
    }
    let c = (2.0 * PI).powf(-0.5);
    let weights = psi.weights();
    let mut j = Vec::with_capacity(x_grid.len());
    let mut kk = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let (mut js, mut ks) = (0.0, 0.0);
        for ((k, a), w) in psi.k.iter().zip(&psi.amplitude).zip(&weights) {
            let omega = k.abs();
            if omega == 0.0 {
                continue;
            }
            let z = Complex64::from_polar(1.0, k * x) * a;
            js += w * c * (0.5 * omega).sqrt() * 2.0 * z.re;
            ks += w * c * (2.0 * omega).powf(-0.5) * 2.0 * z.im;
        }
        j.push(js);
        kk.push(ks);
    }
    Ok((
        SmearingProfile::new(x_grid.to_vec(), j)?,
        SmearingProfile::new(x_grid.to_vec(), kk)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JkComparison {
    /// `max |K(x) - 2 Im ψ(0, x)|`.
    pub k_vs_imaginary_part: f64,
    /// `max |J(x) - 2 Re ψ(0, x)|`; not expected to vanish.
    pub j_vs_real_part: f64,
    /// Rows `(x, J, K, 2 Im ψ(0, x))`.
    pub rows: Vec<[f64; 4]>,
}

/// Compares `J`, `K` with the one-particle wavefunction at `t = 0`.
pub fn compare_jk(psi: &TabulatedPacket, x_grid: &[f64]) -> Result<JkComparison> {
    let (j, k) = smearing_jk(psi, x_grid)?;
    let mut out = JkComparison {
        k_vs_imaginary_part: 0.0,
        j_vs_real_part: 0.0,
        rows: Vec::with_capacity(x_grid.len()),
    };
    for (i, &x) in x_grid.iter().enumerate() {
        let p = psi_tabulated(psi, &SpacetimePoint { t: 0.0, x: vec![x] })?;
        out.k_vs_imaginary_part = out.k_vs_imaginary_part.max((k.values[i] - 2.0 * p.im).abs());
        out.j_vs_real_part = out.j_vs_real_part.max((j.values[i] - 2.0 * p.re).abs());
        out.rows.push([x, j.values[i], k.values[i], 2.0 * p.im]);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Bipartite no-signalling

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteSystem {
    pub dim_a: usize,
    pub dim_b: usize,
    pub a: OperatorMatrix,
    pub b: OperatorMatrix,
    /// Density matrix on `H_A ⊗ H_B`.
    pub rho0: OperatorMatrix,
}

impl BipartiteSystem {
    pub fn validate(&self) -> Result<()> {
        if self.dim_a == 0 || self.dim_b == 0 {
            return Err(Error::invalid("subsystem dimensions must be positive"));
        }
        check_dim(self.dim_a, self.a.dim())?;
        check_dim(self.dim_b, self.b.dim())?;
        check_dim(self.dim_a * self.dim_b, self.rho0.dim())?;
        if !self.a.is_hermitian() || !self.b.is_hermitian() {
            return Err(Error::invalid("local observables must be Hermitian"));
        }
        if !self.rho0.is_hermitian() {
            return Err(Error::invalid("density matrix must be Hermitian"));
        }
        let tr = self.rho0.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TOL_OP {
            return Err(Error::invalid(format!("density matrix trace {tr} differs from 1")));
        }
        let eig = SymmetricEigen::new(self.rho0.entries.clone());
        if eig.eigenvalues.iter().any(|&e| e < -TOL_OP) {
            return Err(Error::invalid("density matrix must be positive semidefinite"));
        }
        Ok(())
    }

    /// Random Hermitian `A`, `B` and a random full-rank density matrix.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim_a: usize, dim_b: usize) -> Self {
        Self {
            dim_a,
            dim_b,
            a: random_hermitian(rng, dim_a),
            b: random_hermitian(rng, dim_b),
            rho0: random_density(rng, dim_a * dim_b),
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Hermitian matrix with entries uniform in the unit square.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> OperatorMatrix {
    let m = random_matrix(rng, n);
    OperatorMatrix {
        entries: (&m + m.adjoint()) * Complex64::new(0.5, 0.0),
    }
}

/// `G G† / Tr(G G†)` for a random complex `G`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> OperatorMatrix {
    let g = random_matrix(rng, n);
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    let mut rho = rho / tr;
    // Exact Hermitian symmetry keeps the validation checks tight.
    rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    OperatorMatrix { entries: rho }
}

/// `e^{iH}` for a random Hermitian `H` scaled to spread phases over `[-π, π]`.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> OperatorMatrix {
    exp_i_hermitian(&random_hermitian(rng, n), PI).expect("random Hermitian generator")
}

/// `Tr_A ρ` for `ρ` on `H_A ⊗ H_B`.
pub fn partial_trace_a(rho: &DMatrix<Complex64>, dim_a: usize, dim_b: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim_b, dim_b, |j, l| {
        (0..dim_a).map(|i| rho[(i * dim_b + j, i * dim_b + l)]).sum()
    })
}

/// `Σ|eigenvalues|` of a Hermitian matrix.
pub fn trace_norm(m: &DMatrix<Complex64>) -> f64 {
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(sym).eigenvalues.iter().map(|e| e.abs()).sum()
}

fn reduced_state_deviation(
    system: &BipartiteSystem,
    u1: &OperatorMatrix,
    generator_a: &OperatorMatrix,
    lambdas: &[f64],
) -> Result<f64> {
    system.validate()?;
    check_dim(system.dim_a, u1.dim())?;
    if !u1.is_unitary() {
        return Err(Error::invalid(format!(
            "U1 is not unitary (defect {:e})",
            u1.unitary_defect()
        )));
    }
    let (da, db) = (system.dim_a, system.dim_b);
    let id_a = OperatorMatrix::identity(da);
    let id_b = OperatorMatrix::identity(db);
    let one_b = id_a.kron(&system.b);
    let reduced = |u: &OperatorMatrix, lambda: f64| -> Result<DMatrix<Complex64>> {
        let u_full = u.kron(&id_b).entries;
        let w = exp_i_hermitian(generator_a, lambda)?.entries * exp_i_hermitian(&one_b, lambda)?.entries;
        let total = &w * &u_full;
        let rho = &total * &system.rho0.entries * total.adjoint();
        Ok(partial_trace_a(&rho, da, db))
    };
    let mut worst = 0.0f64;
    for &lambda in lambdas {
        if !lambda.is_finite() {
            return Err(Error::invalid("λ samples must be finite"));
        }
        let reference = reduced(&id_a, lambda)?;
        for u in [&id_a, u1] {
            worst = worst.max(trace_norm(&(reduced(u, lambda)? - &reference)));
        }
    }
    Ok(worst)
}

/// Largest trace-norm change of the reduced state on `B` caused by applying
/// `U1 ⊗ 1` before the measurement unitaries `e^{iλ(A⊗1)} e^{iλ(1⊗B)}`, over
/// the λ samples and over `U ∈ {1, U1}`.
pub fn bipartite_no_signalling(system: &BipartiteSystem, u1: &OperatorMatrix, lambda_samples: &[f64]) -> Result<f64> {
    let a_full = system.a.kron(&OperatorMatrix::identity(system.dim_b));
    reduced_state_deviation(system, u1, &a_full, lambda_samples)
}

/// As [`bipartite_no_signalling`] with `A ⊗ 1` replaced by an operator
/// `A'` acting on both factors.
pub fn nonlocal_signalling(
    system: &BipartiteSystem,
    u1: &OperatorMatrix,
    a_prime: &OperatorMatrix,
    lambda_samples: &[f64],
) -> Result<f64> {
    check_dim(system.dim_a * system.dim_b, a_prime.dim())?;
    reduced_state_deviation(system, u1, a_prime, lambda_samples)
}
