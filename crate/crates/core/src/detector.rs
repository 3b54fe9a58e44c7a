//! Two harmonic-oscillator detectors coupled to one field mode.
//!
//! In the interaction picture
//! `H_i(t) = λ_i(t)(d_i e^{-iw_i t} + d_i† e^{iw_i t})(f e^{iΩ(x_i - t)} + f† e^{-iΩ(x_i - t)})`,
//! with couplings switched on as step functions on `(0, T]`. In the Schrödinger
//! picture the total Hamiltonian is then constant on `(0, T]`:
//!
//! `H = Σ_i w_i d_i†d_i + Ω f†f + Σ_i λ_i (d_i + d_i†)(g_i f + g_i* f†)`, `g_i = e^{iΩx_i}`.
//!
//! `d_1†d_1` commutes with the free evolution of detector 1, so its expectation
//! is the same in both pictures and `E_1(T) = w_1(⟨d_1†d_1⟩_T + 1/2)`.
//!
//! Two backends compute it. [`Backend::LinearHeisenberg`] integrates the linear
//! Heisenberg equations for `v = (d_1, d_1†, d_2, d_2†, f, f†)`, `dv/dt = M v`,
//! exactly: `v(T) = e^{MT} v(0)`. Writing the evolved `d_1(T) = Σ_j E_{0j} v_j(0)`,
//! the vacuum expectation `⟨d_1†d_1⟩_T` is the sum of `|E_{0j}|²` over the
//! creation-operator columns `j ∈ {1, 3, 5}`. [`Backend::TruncatedFock`]
//! propagates the state vector on a truncated triple tensor product instead.

use crate::error::{Error, Result};
use crate::fockbox::OperatorMatrix;
use crate::smearing::{localization_report, LocalizationReport, SmearingProfile};
use nalgebra::{DMatrix, DVector, Matrix6};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Tolerance on `E Ω_c Eᵀ = Ω_c` for the evolved mode vector.
pub const TOL_SYMPLECTIC: f64 = 1e-10;

/// Change in `E_1` tolerated when both truncations grow by two.
pub const TOL_TRUNCATION: f64 = 1e-4;

/// Default coupling grid for [`signal_coefficient`].
pub const DEFAULT_LAMBDA2_GRID: [f64; 7] = [0.0, 0.01, -0.01, 0.02, -0.02, 0.03, -0.03];

/// Truncation used for commutator norms when the model itself is linear.
const COMMUTATOR_LEVELS: (usize, usize) = (3, 3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    LinearHeisenberg,
    /// Number of retained levels per detector and for the field mode.
    TruncatedFock { n_det: usize, n_field: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorTriadModel {
    pub w1: f64,
    pub w2: f64,
    pub omega: f64,
    pub x1: f64,
    pub x2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Evolution time `T`.
    pub duration: f64,
    pub backend: Backend,
}

impl DetectorTriadModel {
    /// `w1 = w2 = Ω = 1`, `λ1 = 1/2`, `x1 = 0`, `x2 = 2π`, `λ2 = 0`, `T = √2 π`.
    pub fn reference() -> Self {
        Self {
            w1: 1.0,
            w2: 1.0,
            omega: 1.0,
            x1: 0.0,
            x2: std::f64::consts::TAU,
            lambda1: 0.5,
            lambda2: 0.0,
            duration: std::f64::consts::SQRT_2 * std::f64::consts::PI,
            backend: Backend::LinearHeisenberg,
        }
    }

    pub fn with_lambda2(&self, lambda2: f64) -> Self {
        Self {
            lambda2,
            ..self.clone()
        }
    }

    pub fn with_backend(&self, backend: Backend) -> Self {
        Self {
            backend,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w1,
            self.w2,
            self.omega,
            self.x1,
            self.x2,
            self.lambda1,
            self.lambda2,
            self.duration,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("detector parameters must be finite"));
        }
        if !(self.w1 > 0.0 && self.w2 > 0.0 && self.omega > 0.0) {
            return Err(Error::invalid("frequencies must be positive"));
        }
        if !(self.duration > 0.0) {
            return Err(Error::invalid("evolution time must be positive"));
        }
        if let Backend::TruncatedFock { n_det, n_field } = self.backend {
            if n_det < 2 || n_field < 2 {
                return Err(Error::invalid("truncations must keep at least two levels"));
            }
        }
        Ok(())
    }

    /// True when detector 1 stays outside the causal future of detector 2's
    /// coupling region for the whole run, `T < |x2 - x1|`.
    pub fn spacelike(&self) -> bool {
        self.duration < (self.x2 - self.x1).abs()
    }

    fn coupling_phase(&self, i: usize) -> Complex64 {
        let x = if i == 1 { self.x1 } else { self.x2 };
        Complex64::from_polar(1.0, self.omega * x)
    }

    fn lambda(&self, i: usize) -> f64 {
        if i == 1 {
            self.lambda1
        } else {
            self.lambda2
        }
    }

    fn w(&self, i: usize) -> f64 {
        if i == 1 {
            self.w1
        } else {
            self.w2
        }
    }
}

/// Linear Heisenberg evolution `v(T) = E v(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVector {
    pub coefficients: Matrix6<Complex64>,
}

impl ModeVector {
    pub const LABELS: [&'static str; 6] = ["d1", "d1†", "d2", "d2†", "f", "f†"];

    /// `‖E Ω_c Eᵀ - Ω_c‖`, `Ω_c` the canonical commutator pairing of `v`.
    pub fn symplectic_defect(&self) -> f64 {
        let omega_c = canonical_form();
        (self.coefficients * omega_c * self.coefficients.transpose() - omega_c).norm()
    }

    /// `⟨0|d_1†(T) d_1(T)|0⟩`.
    pub fn d1_occupation(&self) -> f64 {
        [1, 3, 5]
            .iter()
            .map(|&j| self.coefficients[(0, j)].norm_sqr())
            .sum()
    }
}

fn canonical_form() -> Matrix6<Complex64> {
    let mut c = Matrix6::zeros();
    for p in 0..3 {
        c[(2 * p, 2 * p + 1)] = Complex64::new(1.0, 0.0);
        c[(2 * p + 1, 2 * p)] = Complex64::new(-1.0, 0.0);
    }
    c
}

/// Generator `M` of `dv/dt = M v`.
pub fn heisenberg_generator(model: &DetectorTriadModel) -> Matrix6<Complex64> {
    let mut m = Matrix6::zeros();
    let om = model.omega;
    m[(4, 4)] = -I * om;
    m[(5, 5)] = I * om;
    for i in 1..=2 {
        let (a, ad) = (2 * (i - 1), 2 * (i - 1) + 1);
        let (w, lam, g) = (model.w(i), model.lambda(i), model.coupling_phase(i));
        // d' = -iw d - iλ(g f + g* f†)
        m[(a, a)] = -I * w;
        m[(a, 4)] = -I * lam * g;
        m[(a, 5)] = -I * lam * g.conj();
        // (d†)' = iw d† + iλ(g* f† + g f)
        m[(ad, ad)] = I * w;
        m[(ad, 4)] = I * lam * g;
        m[(ad, 5)] = I * lam * g.conj();
        // f' = -iΩ f - iλ g*(d + d†),  (f†)' = iΩ f† + iλ g(d + d†)
        m[(4, a)] = -I * lam * g.conj();
        m[(4, ad)] = -I * lam * g.conj();
        m[(5, a)] = I * lam * g;
        m[(5, ad)] = I * lam * g;
    }
    m
}

/// `e^{MT}` by Padé scaling and squaring, with the symplectic check.
pub fn evolve_linear(model: &DetectorTriadModel) -> Result<ModeVector> {
    model.validate()?;
    if model.backend != Backend::LinearHeisenberg {
        return Err(Error::invalid("evolve_linear needs the linear Heisenberg backend"));
    }
    let mt = heisenberg_generator(model) * Complex64::new(model.duration, 0.0);
    let mv = ModeVector {
        coefficients: mt.exp(),
    };
    let defect = mv.symplectic_defect();
    if !(defect <= TOL_SYMPLECTIC) {
        return Err(Error::SymplecticViolation(defect));
    }
    Ok(mv)
}

// ---------------------------------------------------------------------------
// Truncated Fock backend

/// Row-compressed sparse complex matrix, just enough for propagation.
#[derive(Debug, Clone)]
struct SparseMatrix {
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseMatrix {
    fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (yi, row) in y.iter_mut().zip(&self.rows) {
            *yi = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    fn inf_norm(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct TripleBasis {
    n_det: usize,
    n_field: usize,
}

impl TripleBasis {
    fn dim(&self) -> usize {
        self.n_det * self.n_det * self.n_field
    }

    fn index(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.n_det + b) * self.n_field + c
    }

    fn levels(&self, j: usize) -> (usize, usize, usize) {
        let c = j % self.n_field;
        let ab = j / self.n_field;
        (ab / self.n_det, ab % self.n_det, c)
    }
}

/// Schrödinger-picture Hamiltonian on the truncated basis.
fn sparse_hamiltonian(model: &DetectorTriadModel, basis: TripleBasis) -> SparseMatrix {
    let mut rows = vec![Vec::new(); basis.dim()];
    let (nd, nf) = (basis.n_det, basis.n_field);
    for j in 0..basis.dim() {
        let (a, b, c) = basis.levels(j);
        let free = model.w1 * a as f64 + model.w2 * b as f64 + model.omega * c as f64;
        rows[j].push((j, Complex64::new(free, 0.0)));
        for det in 1..=2 {
            let lam = model.lambda(det);
            if lam == 0.0 {
                continue;
            }
            let g = model.coupling_phase(det);
            let n = if det == 1 { a } else { b };
            // (d + d†) on the detector level
            let mut det_moves = Vec::with_capacity(2);
            if n > 0 {
                det_moves.push((n - 1, (n as f64).sqrt()));
            }
            if n + 1 < nd {
                det_moves.push((n + 1, ((n + 1) as f64).sqrt()));
            }
            // (g f + g* f†) on the field level
            let mut field_moves = Vec::with_capacity(2);
            if c > 0 {
                field_moves.push((c - 1, g * (c as f64).sqrt()));
            }
            if c + 1 < nf {
                field_moves.push((c + 1, g.conj() * ((c + 1) as f64).sqrt()));
            }
            for &(n2, da) in &det_moves {
                for &(c2, fa) in &field_moves {
                    let i = if det == 1 {
                        basis.index(n2, b, c2)
                    } else {
                        basis.index(a, n2, c2)
                    };
                    rows[i].push((j, fa * (lam * da)));
                }
            }
        }
    }
    SparseMatrix { rows }
}

/// `e^{-iHT}ψ` by a Taylor series on substeps with `‖H‖ dt ≤ 1`.
fn propagate(h: &SparseMatrix, psi: &mut Vec<Complex64>, duration: f64) {
    let steps = (h.inf_norm() * duration).ceil().max(1.0) as usize;
    let dt = duration / steps as f64;
    let n = psi.len();
    let mut term = vec![ZERO; n];
    let mut next = vec![ZERO; n];
    for _ in 0..steps {
        term.copy_from_slice(psi);
        for k in 1..60 {
            h.matvec(&term, &mut next);
            let scale = -I * (dt / k as f64);
            let mut size = 0.0f64;
            for (t, v) in term.iter_mut().zip(&next) {
                *t = v * scale;
                size = size.max(t.norm());
            }
            for (p, t) in psi.iter_mut().zip(&term) {
                *p += t;
            }
            if size < 1e-17 {
                break;
            }
        }
    }
}

fn fock_occupation(model: &DetectorTriadModel, n_det: usize, n_field: usize) -> f64 {
    let basis = TripleBasis { n_det, n_field };
    let h = sparse_hamiltonian(model, basis);
    let mut psi = vec![ZERO; basis.dim()];
    psi[0] = Complex64::new(1.0, 0.0);
    propagate(&h, &mut psi, model.duration);
    psi.iter()
        .enumerate()
        .map(|(j, z)| basis.levels(j).0 as f64 * z.norm_sqr())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorEnergy {
    pub e1: f64,
    /// `⟨d_1†d_1⟩_T`.
    pub occupation: f64,
    /// `|E_1(n + 2) - E_1(n)|` for the truncated backend.
    pub truncation_delta: Option<f64>,
    pub converged: bool,
}

/// `E_1(T) = w_1(⟨d_1†d_1⟩_T + 1/2)` from the free ground state.
pub fn detector_energy(model: &DetectorTriadModel) -> Result<DetectorEnergy> {
    model.validate()?;
    match model.backend {
        Backend::LinearHeisenberg => {
            let n = evolve_linear(model)?.d1_occupation();
            Ok(DetectorEnergy {
                e1: model.w1 * (n + 0.5),
                occupation: n,
                truncation_delta: None,
                converged: true,
            })
        }
        Backend::TruncatedFock { n_det, n_field } => {
            let n = fock_occupation(model, n_det, n_field);
            let n_up = fock_occupation(model, n_det + 2, n_field + 2);
            let delta = model.w1 * (n_up - n).abs();
            let converged = delta <= TOL_TRUNCATION;
            if !converged {
                log::warn!(
                    "truncated Fock E1 not converged at n_det={n_det}, n_field={n_field}: change {delta:e} on n+2"
                );
            }
            Ok(DetectorEnergy {
                e1: model.w1 * (n + 0.5),
                occupation: n,
                truncation_delta: Some(delta),
                converged,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFit {
    pub c0: f64,
    pub c2: f64,
    pub c4: f64,
    /// `max |E_1(λ2) - E_1(-λ2)|` over the grid.
    pub parity_defect: f64,
    /// `T < |x2 - x1|`.
    pub spacelike: bool,
    /// `(λ2, E_1)` for every grid point.
    pub samples: Vec<(f64, f64)>,
}

/// Least-squares fit `E_1(λ2) = c0 + c2 λ2² + c4 λ2⁴` over the grid.
pub fn signal_coefficient(model: &DetectorTriadModel, lambda2_grid: &[f64]) -> Result<SignalFit> {
    model.validate()?;
    if !lambda2_grid.contains(&0.0) {
        return Err(Error::invalid("coupling grid must contain 0"));
    }
    if lambda2_grid.iter().any(|l| !l.is_finite() || l.abs() > 0.05) {
        return Err(Error::invalid("coupling grid values must satisfy |λ2| ≤ 0.05"));
    }
    let mut squares: Vec<f64> = lambda2_grid.iter().map(|l| l * l).collect();
    squares.sort_by(f64::total_cmp);
    squares.dedup();
    if squares.len() < 3 {
        return Err(Error::IllConditioned(
            "need at least two distinct nonzero |λ2| values".into(),
        ));
    }
    let energy = |l: f64| detector_energy(&model.with_lambda2(l)).map(|e| e.e1);
    let mut samples = Vec::with_capacity(lambda2_grid.len());
    let mut parity_defect = 0.0f64;
    for &l in lambda2_grid {
        let e = energy(l)?;
        if l != 0.0 {
            parity_defect = parity_defect.max((e - energy(-l)?).abs());
        }
        samples.push((l, e));
    }
    if parity_defect > 1e-10 {
        return Err(Error::IllConditioned(format!(
            "E1 is not even in λ2 (defect {parity_defect:e})"
        )));
    }
    // Fit in u = λ2²/max λ2² to keep the columns comparable.
    let scale = squares[squares.len() - 1];
    let a = DMatrix::from_fn(samples.len(), 3, |r, c| (samples[r].0.powi(2) / scale).powi(c as i32));
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let svd = a.svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::IllConditioned(format!("singular values {smax:e}, {smin:e}")));
    }
    let c = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    Ok(SignalFit {
        c0: c[0],
        c2: c[1] / scale,
        c4: c[2] / (scale * scale),
        parity_defect,
        spacelike: model.spacelike(),
        samples,
    })
}

// ---------------------------------------------------------------------------
// Interaction picture operators

fn ladder(n: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |i, j| {
        if j == i + 1 {
            Complex64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

/// `d1`, `d2`, `f` on the triple tensor basis `|a, b, c⟩`.
fn triple_ladders(n_det: usize, n_field: usize) -> [OperatorMatrix; 3] {
    let id = |n| OperatorMatrix::identity(n);
    let op = |m| OperatorMatrix { entries: m };
    [
        op(ladder(n_det)).kron(&id(n_det)).kron(&id(n_field)),
        id(n_det).kron(&op(ladder(n_det))).kron(&id(n_field)),
        id(n_det).kron(&id(n_det)).kron(&op(ladder(n_field))),
    ]
}

/// Coupling-free factor `(d e^{-iwt} + d† e^{iwt})(f e^{iΩ(x - t)} + f† e^{-iΩ(x - t)})`.
fn interaction_shape(model: &DetectorTriadModel, i: usize, t: f64, levels: (usize, usize)) -> OperatorMatrix {
    let [d1, d2, f] = triple_ladders(levels.0, levels.1);
    let d = if i == 1 { d1 } else { d2 };
    let x = if i == 1 { model.x1 } else { model.x2 };
    let e_d = Complex64::from_polar(1.0, -model.w(i) * t);
    let e_f = Complex64::from_polar(1.0, model.omega * (x - t));
    let det = &d.entries * e_d + d.entries.adjoint() * e_d.conj();
    let field = &f.entries * e_f + f.entries.adjoint() * e_f.conj();
    OperatorMatrix { entries: det * field }
}

fn truncation(model: &DetectorTriadModel) -> (usize, usize) {
    match model.backend {
        Backend::TruncatedFock { n_det, n_field } => (n_det, n_field),
        Backend::LinearHeisenberg => COMMUTATOR_LEVELS,
    }
}

/// `H_i(t)` on the truncated triple basis; zero outside `(0, T]`.
pub fn interaction_hamiltonian(model: &DetectorTriadModel, i: usize, t: f64) -> Result<OperatorMatrix> {
    model.validate()?;
    let levels = match model.backend {
        Backend::TruncatedFock { n_det, n_field } => (n_det, n_field),
        Backend::LinearHeisenberg => {
            return Err(Error::invalid("interaction_hamiltonian needs the truncated Fock backend"))
        }
    };
    if i != 1 && i != 2 {
        return Err(Error::invalid("detector index must be 1 or 2"));
    }
    let dim = levels.0 * levels.0 * levels.1;
    if !(t > 0.0 && t <= model.duration) {
        return Ok(OperatorMatrix::zeros(dim));
    }
    let mut h = interaction_shape(model, i, t, levels);
    h.entries *= Complex64::new(model.lambda(i), 0.0);
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    /// `sin(Ω_μ(X_1 - X_2)^μ)` with `Ω_μΔX^μ = -Ω(t1 - t2) + Ω(x1 - x2)`.
    pub factor: f64,
    /// Frobenius norm of `[h_1(t1), h_2(t2)]`, where `h_i = H_i/λ_i` is the
    /// coupling-free interaction, on the truncated space.
    pub norm: f64,
}

/// The couplings and switching window only rescale `[H_1, H_2]`, so the norm
/// is taken for unit couplings. With the truncated `[f, f†] = C`,
/// `[h_1, h_2] = 2i sin(Ω_μΔX^μ) D_1 D_2 C`, so the norm vanishes exactly
/// with the factor.
pub fn commutator_factor(model: &DetectorTriadModel, t1: f64, t2: f64) -> Result<CommutatorReport> {
    model.validate()?;
    if !(t1.is_finite() && t2.is_finite()) {
        return Err(Error::invalid("times must be finite"));
    }
    let om = model.omega;
    let factor = (-om * (t1 - t2) + om * (model.x1 - model.x2)).sin();
    let levels = truncation(model);
    let h1 = interaction_shape(model, 1, t1, levels);
    let h2 = interaction_shape(model, 2, t2, levels);
    Ok(CommutatorReport {
        factor,
        norm: h1.commutator(&h2)?.norm(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSmearing {
    pub f: SmearingProfile,
    pub g: SmearingProfile,
    pub report: LocalizationReport,
}

/// `F_i(x) = (2Ω)^{1/2} L^{-1/2} cos[Ω(x - x_i)]`,
/// `G_i(x) = (2/Ω)^{1/2} L^{-1/2} sin[Ω(x - x_i)]`, with a localisation
/// report for `F_i` on the central half of the grid.
pub fn effective_smearing(model: &DetectorTriadModel, i: usize, x_grid: &[f64], l: f64) -> Result<EffectiveSmearing> {
    model.validate()?;
    if i != 1 && i != 2 {
        return Err(Error::invalid("detector index must be 1 or 2"));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid("box length must be positive"));
    }
    let om = model.omega;
    let xi = if i == 1 { model.x1 } else { model.x2 };
    let f = SmearingProfile::new(
        x_grid.to_vec(),
        x_grid
            .iter()
            .map(|x| (2.0 * om / l).sqrt() * (om * (x - xi)).cos())
            .collect(),
    )?;
    let g = SmearingProfile::new(
        x_grid.to_vec(),
        x_grid
            .iter()
            .map(|x| (2.0 / (om * l)).sqrt() * (om * (x - xi)).sin())
            .collect(),
    )?;
    let report = localization_report(&f, f.central_window())?;
    Ok(EffectiveSmearing { f, g, report })
}
