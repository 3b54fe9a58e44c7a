//! Truncated Fock space of a scalar field in a periodic box.
//!
//! The field is expanded over a finite list of momentum modes,
//! `φ̂(X) = L^{-d/2} Σ_k (2ω_k)^{-1/2} [a_k u_k(X) + a_k† u_k*(X)]` with
//! `u_k(X) = e^{i k_μ X^μ} = e^{i(-ω_k t + k·x)}`, and the Fock space is cut at a
//! total occupation `n_max`. Ladder operators are truncated, so `[a, a†] = 1`
//! fails on the top sector; every quantity that the protocol engine derives at
//! first order in a kick strength is nevertheless exact because the states
//! involved never reach that sector.

mod protocol;

pub use protocol::{
    analytic_box_signal, antiparallel_box_signal, antiparallel_sin_cos_form, kick_rotate_signal,
    measure_nonselective, protocol_report, run_protocol, run_protocol_scaled, signal_derivative, Branch,
    ModelSpec, Protocol, ProtocolDocument, ProtocolOutcome, ProtocolReport, RotationDocument,
    StateSpec, StateTerm, Step, StepDocument,
};

use crate::error::{Error, Result};
use crate::spacetime::SpacetimePoint;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use std::collections::HashMap;

/// Tolerance for Hermiticity, unitarity, normalisation and projector checks.
pub const TOL_OP: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedFockModel {
    l: f64,
    d: usize,
    modes: Vec<Vec<f64>>,
    omegas: Vec<f64>,
    n_max: usize,
    basis: Vec<Vec<usize>>,
    basis_index: HashMap<Vec<usize>, usize>,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn enumerate(m: usize, budget: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() == m {
        out.push(prefix.clone());
        return;
    }
    for n in 0..=budget {
        prefix.push(n);
        enumerate(m, budget - n, prefix, out);
        prefix.pop();
    }
}

impl TruncatedFockModel {
    pub fn new(l: f64, modes: Vec<Vec<f64>>, n_max: usize) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::invalid("box length must be positive and finite"));
        }
        let d = modes
            .first()
            .map(|k| k.len())
            .ok_or_else(|| Error::invalid("at least one mode is required"))?;
        if d == 0 {
            return Err(Error::invalid("modes need at least one spatial component"));
        }
        let mut omegas = Vec::with_capacity(modes.len());
        for (i, k) in modes.iter().enumerate() {
            if k.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: k.len(),
                });
            }
            if k.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid("mode components must be finite"));
            }
            let w = k.iter().map(|c| c * c).sum::<f64>().sqrt();
            if w == 0.0 {
                return Err(Error::invalid("the zero mode is excluded"));
            }
            if modes[..i].contains(k) {
                return Err(Error::invalid(format!("mode {k:?} listed twice")));
            }
            omegas.push(w);
        }
        let m = modes.len();
        let mut basis = Vec::new();
        enumerate(m, n_max, &mut Vec::with_capacity(m), &mut basis);
        basis.sort_by(|a, b| {
            let (sa, sb) = (a.iter().sum::<usize>(), b.iter().sum::<usize>());
            sa.cmp(&sb).then_with(|| b.cmp(a))
        });
        let expected = binomial(n_max + m, m);
        if basis.len() as u128 != expected {
            return Err(Error::DimensionMismatch {
                expected: expected as usize,
                found: basis.len(),
            });
        }
        let basis_index = basis.iter().cloned().zip(0..).collect();
        Ok(Self {
            l,
            d,
            modes,
            omegas,
            n_max,
            basis,
            basis_index,
        })
    }

    /// `d = 1`, `L = 2π`, modes `{1, -1}`, `n_max = 3`.
    pub fn default_box() -> Self {
        Self::new(std::f64::consts::TAU, vec![vec![1.0], vec![-1.0]], 3)
            .expect("default model is well formed")
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    pub fn omega(&self, mode: usize) -> f64 {
        self.omegas[mode]
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn occupation(&self, index: usize) -> &[usize] {
        &self.basis[index]
    }

    pub fn index_of(&self, occupation: &[usize]) -> Option<usize> {
        self.basis_index.get(occupation).copied()
    }

    pub fn mode_index(&self, k: &[f64]) -> Option<usize> {
        self.modes.iter().position(|m| m.as_slice() == k)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.modes.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "mode index {mode} out of range ({} modes)",
                self.modes.len()
            )))
        }
    }

    /// Truncated `a_k`: `a|…n…⟩ = √n |…n-1…⟩`.
    pub fn annihilation(&self, mode: usize) -> Result<OperatorMatrix> {
        self.check_mode(mode)?;
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (j, occ) in self.basis.iter().enumerate() {
            if occ[mode] == 0 {
                continue;
            }
            let mut lower = occ.clone();
            lower[mode] -= 1;
            let i = self.basis_index[&lower];
            a[(i, j)] = Complex64::new((occ[mode] as f64).sqrt(), 0.0);
        }
        Ok(OperatorMatrix { entries: a })
    }

    /// Truncated `a_k†`; states at the cutoff are mapped to zero.
    pub fn creation(&self, mode: usize) -> Result<OperatorMatrix> {
        Ok(self.annihilation(mode)?.adjoint())
    }

    pub fn number(&self, mode: usize) -> Result<OperatorMatrix> {
        self.check_mode(mode)?;
        let mut n = DMatrix::zeros(self.dim(), self.dim());
        for (j, occ) in self.basis.iter().enumerate() {
            n[(j, j)] = Complex64::new(occ[mode] as f64, 0.0);
        }
        Ok(OperatorMatrix { entries: n })
    }

    pub fn basis_state(&self, occupation: &[usize]) -> Result<FockState> {
        if occupation.len() != self.modes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                found: occupation.len(),
            });
        }
        let i = self.index_of(occupation).ok_or_else(|| {
            Error::invalid(format!("occupation {occupation:?} exceeds n_max = {}", self.n_max))
        })?;
        let mut v = DVector::zeros(self.dim());
        v[i] = ONE;
        Ok(FockState { amplitudes: v })
    }

    pub fn vacuum(&self) -> FockState {
        self.basis_state(&vec![0; self.modes.len()])
            .expect("vacuum is always in the basis")
    }

    /// `a_k†|0⟩`.
    pub fn one_particle(&self, mode: usize) -> Result<FockState> {
        self.check_mode(mode)?;
        if self.n_max == 0 {
            return Err(Error::invalid("n_max = 0 has no one-particle sector"));
        }
        let mut occ = vec![0; self.modes.len()];
        occ[mode] = 1;
        self.basis_state(&occ)
    }

    /// `u_k(X) = e^{i(-ω t + k·x)}`.
    pub fn mode_function(&self, mode: usize, x: &SpacetimePoint) -> Complex64 {
        let k = &self.modes[mode];
        let kx: f64 = k.iter().zip(&x.x).map(|(a, b)| a * b).sum();
        Complex64::from_polar(1.0, -self.omegas[mode] * x.t + kx)
    }

    fn check_point(&self, x: &SpacetimePoint) -> Result<()> {
        x.validate()?;
        if x.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: x.d(),
            });
        }
        Ok(())
    }
}

/// Dense complex square matrix acting on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub entries: DMatrix<Complex64>,
}

impl OperatorMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("operator entries must be finite"));
        }
        Ok(Self { entries })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    /// `Σ_j |s_j⟩⟨s_j|`; the states must be orthonormal.
    pub fn projector(states: &[FockState]) -> Result<Self> {
        let dim = states
            .first()
            .map(FockState::dim)
            .ok_or_else(|| Error::invalid("projector needs at least one state"))?;
        for (i, s) in states.iter().enumerate() {
            check_dim(dim, s.dim())?;
            for (j, t) in states.iter().enumerate().take(i + 1) {
                let want = if i == j { ONE } else { ZERO };
                if (t.inner(s) - want).norm() > TOL_OP {
                    return Err(Error::invalid("projector states must be orthonormal"));
                }
            }
        }
        let mut p = DMatrix::zeros(dim, dim);
        for s in states {
            p += &s.amplitudes * s.amplitudes.adjoint();
        }
        Ok(Self { entries: p })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
        }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn hermitian_defect(&self) -> f64 {
        (&self.entries - self.entries.adjoint()).norm()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_defect() <= TOL_OP
    }

    /// `‖U†U - 1‖`.
    pub fn unitary_defect(&self) -> f64 {
        let n = self.dim();
        (self.entries.adjoint() * &self.entries - DMatrix::<Complex64>::identity(n, n)).norm()
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary_defect() <= TOL_OP
    }

    /// `‖P² - P‖ + ‖P - P†‖`.
    pub fn projector_defect(&self) -> f64 {
        (&self.entries * &self.entries - &self.entries).norm() + self.hermitian_defect()
    }

    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        check_dim(self.dim(), rhs.dim())?;
        Ok(Self {
            entries: &self.entries * &rhs.entries,
        })
    }

    /// `[A, B] = AB - BA`.
    pub fn commutator(&self, rhs: &Self) -> Result<Self> {
        check_dim(self.dim(), rhs.dim())?;
        Ok(Self {
            entries: &self.entries * &rhs.entries - &rhs.entries * &self.entries,
        })
    }

    pub fn apply(&self, state: &FockState) -> Result<FockState> {
        check_dim(self.dim(), state.dim())?;
        Ok(FockState {
            amplitudes: &self.entries * &state.amplitudes,
        })
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, state: &FockState) -> Result<Complex64> {
        Ok(state.inner(&self.apply(state)?))
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// Kronecker product `A ⊗ B`.
    pub fn kron(&self, rhs: &Self) -> Self {
        Self {
            entries: self.entries.kronecker(&rhs.entries),
        }
    }
}

/// Pure state in a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub amplitudes: DVector<Complex64>,
}

impl FockState {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::invalid("state vector must be non-empty"));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("state amplitudes must be finite"));
        }
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::invalid("cannot normalise the zero vector"));
        }
        Ok(Self {
            amplitudes: &self.amplitudes / Complex64::new(n, 0.0),
        })
    }

    /// Errors unless the norm is 1 within [`TOL_OP`].
    pub fn check_normalized(&self) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > TOL_OP {
            return Err(Error::invalid(format!("state norm {n} differs from 1")));
        }
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn density(&self) -> OperatorMatrix {
        OperatorMatrix {
            entries: &self.amplitudes * self.amplitudes.adjoint(),
        }
    }
}

/// Input to [`sequential_probability`].
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState {
    Pure(FockState),
    Density(OperatorMatrix),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(s) => s.dim(),
            QuantumState::Density(r) => r.dim(),
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

/// `L^{-d/2} Σ_k (2ω_k)^{-1/2} [a_k u_k(X) + a_k† u_k*(X)]`.
pub fn field_operator(model: &TruncatedFockModel, x: &SpacetimePoint) -> Result<OperatorMatrix> {
    model.check_point(x)?;
    let norm = model.l.powf(-0.5 * model.d as f64);
    let mut phi = DMatrix::zeros(model.dim(), model.dim());
    for mode in 0..model.modes.len() {
        let a = model.annihilation(mode)?.entries;
        let c = norm / (2.0 * model.omegas[mode]).sqrt() * model.mode_function(mode, x);
        phi += &a * c + a.adjoint() * c.conj();
    }
    Ok(OperatorMatrix { entries: phi })
}

/// `e^{i s H}` for Hermitian `H`, by eigendecomposition.
pub fn exp_i_hermitian(h: &OperatorMatrix, s: f64) -> Result<OperatorMatrix> {
    let defect = h.hermitian_defect();
    if defect > 1e-10 * h.norm().max(1.0) {
        return Err(Error::invalid(format!(
            "generator is not Hermitian (defect {defect:e})"
        )));
    }
    // Symmetrise so rounding in the input cannot break unitarity.
    let sym = (&h.entries + h.entries.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let v = &eig.eigenvectors;
    let phases = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| Complex64::from_polar(1.0, s * e)),
    );
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    Ok(OperatorMatrix {
        entries: scaled * v.adjoint(),
    })
}

/// `e^{iλφ̂(X)}`.
pub fn unitary_kick(model: &TruncatedFockModel, x: &SpacetimePoint, lambda: f64) -> Result<OperatorMatrix> {
    if !lambda.is_finite() {
        return Err(Error::invalid("kick strength must be finite"));
    }
    exp_i_hermitian(&field_operator(model, x)?, lambda)
}

/// Rotation between two orthonormal states `|1⟩`, `|1'⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationSpec {
    pub one_particle_a: FockState,
    pub one_particle_b: FockState,
    pub c: Complex64,
    pub d: Complex64,
    /// Global phase on the rotated two-dimensional subspace.
    pub theta: f64,
}

impl RotationSpec {
    /// `|1⟩ ↦ |1'⟩`, i.e. `C = 0`, `D = -1`, `θ = 0`.
    pub fn swap(a: FockState, b: FockState) -> Self {
        Self {
            one_particle_a: a,
            one_particle_b: b,
            c: ZERO,
            d: -ONE,
            theta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (&self.one_particle_a, &self.one_particle_b);
        check_dim(a.dim(), b.dim())?;
        a.check_normalized()?;
        b.check_normalized()?;
        if a.inner(b).norm() > TOL_OP {
            return Err(Error::invalid("rotation states must be orthogonal"));
        }
        let s = self.c.norm_sqr() + self.d.norm_sqr();
        if (s - 1.0).abs() > TOL_OP {
            return Err(Error::invalid(format!("|C|² + |D|² = {s}, expected 1")));
        }
        if !self.theta.is_finite() {
            return Err(Error::invalid("theta must be finite"));
        }
        Ok(())
    }
}

/// `e^{iθ}(C|1⟩⟨1| + D|1⟩⟨1'| - D*|1'⟩⟨1| + C*|1'⟩⟨1'|) + 1⊥`.
pub fn rotation_unitary(model: &TruncatedFockModel, spec: &RotationSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    check_dim(model.dim(), spec.one_particle_a.dim())?;
    let a = &spec.one_particle_a.amplitudes;
    let b = &spec.one_particle_b.amplitudes;
    let (aa, ab, ba, bb) = (a * a.adjoint(), a * b.adjoint(), b * a.adjoint(), b * b.adjoint());
    let phase = Complex64::from_polar(1.0, spec.theta);
    let n = model.dim();
    let block = (&aa * spec.c + &ab * spec.d - &ba * spec.d.conj() + &bb * spec.c.conj()) * phase;
    Ok(OperatorMatrix {
        entries: block + DMatrix::identity(n, n) - aa - bb,
    })
}

fn check_projector(p: &OperatorMatrix) -> Result<()> {
    let defect = p.projector_defect();
    if defect > 1e-10 {
        return Err(Error::invalid(format!(
            "operator is not an orthogonal projector (defect {defect:e})"
        )));
    }
    Ok(())
}

/// `‖P_n…P_1|ψ⟩‖²`, or `Tr(P_n…P_1 ρ P_1…P_n)` for a density matrix.
pub fn sequential_probability(state: &QuantumState, projectors: &[OperatorMatrix]) -> Result<f64> {
    for p in projectors {
        check_dim(state.dim(), p.dim())?;
        check_projector(p)?;
    }
    match state {
        QuantumState::Pure(psi) => {
            let mut v = psi.amplitudes.clone();
            for p in projectors {
                v = &p.entries * v;
            }
            Ok(v.norm_squared())
        }
        QuantumState::Density(rho) => {
            let mut r = rho.entries.clone();
            for p in projectors {
                r = &p.entries * r * &p.entries;
            }
            Ok(r.trace().re)
        }
    }
}

/// `ψ(X) = ⟨0|φ̂(X)|state⟩` in the truncated model.
pub fn one_particle_wavefunction(
    model: &TruncatedFockModel,
    state: &FockState,
    x: &SpacetimePoint,
) -> Result<Complex64> {
    let phi = field_operator(model, x)?;
    Ok(model.vacuum().inner(&phi.apply(state)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pt(t: f64, x: f64) -> SpacetimePoint {
        SpacetimePoint::new(t, vec![x]).unwrap()
    }

    #[test]
    fn basis_dimension_is_stars_and_bars() {
        let m = TruncatedFockModel::default_box();
        assert_eq!(m.dim(), 10);
        assert_eq!(m.occupation(0), &[0, 0]);
        let m3 = TruncatedFockModel::new(1.0, vec![vec![1.0], vec![2.0], vec![-1.0]], 4).unwrap();
        assert_eq!(m3.dim(), 35);
        for i in 0..m3.dim() {
            assert_eq!(m3.index_of(m3.occupation(i)), Some(i));
        }
    }

    #[test]
    fn rejects_bad_models() {
        assert!(TruncatedFockModel::new(1.0, vec![vec![1.0], vec![1.0]], 2).is_err());
        assert!(TruncatedFockModel::new(1.0, vec![vec![0.0]], 2).is_err());
        assert!(TruncatedFockModel::new(-1.0, vec![vec![1.0]], 2).is_err());
        assert!(TruncatedFockModel::new(1.0, vec![vec![1.0], vec![1.0, 0.0]], 2).is_err());
    }

    #[test]
    fn single_mode_field_matrix() {
        let l = 3.0;
        let m = TruncatedFockModel::new(l, vec![vec![2.0]], 1).unwrap();
        let x = pt(0.4, 1.1);
        let phi = field_operator(&m, &x).unwrap();
        let u = Complex64::from_polar(1.0, -2.0 * 0.4 + 2.0 * 1.1);
        let amp = 1.0 / (2.0 * 2.0 * l).sqrt();
        assert!(phi.entries[(0, 0)].norm() < 1e-15 && phi.entries[(1, 1)].norm() < 1e-15);
        assert!((phi.entries[(0, 1)] - u * amp).norm() < 1e-15);
        assert!((phi.entries[(1, 0)] - u.conj() * amp).norm() < 1e-15);
        assert!(phi.is_hermitian());
    }

    #[test]
    fn vacuum_to_one_particle_matches_single_momentum() {
        use crate::wavepacket::{psi_single_momentum, SingleMomentum};
        let m = TruncatedFockModel::default_box();
        let x = pt(0.7, -2.3);
        let one = m.one_particle(1).unwrap();
        let got = one_particle_wavefunction(&m, &one, &x).unwrap();
        let want = psi_single_momentum(&SingleMomentum { k: vec![-1.0], l: m.l() }, &x).unwrap();
        assert!((got - want).norm() < 1e-15);
    }

    #[test]
    fn kick_identity_unitarity_and_group_law() {
        let m = TruncatedFockModel::default_box();
        let x = pt(-0.3, 0.8);
        let u0 = unitary_kick(&m, &x, 0.0).unwrap();
        assert!((u0.entries - DMatrix::<Complex64>::identity(10, 10)).norm() < 1e-14);
        assert!(unitary_kick(&m, &x, 3.7).unwrap().is_unitary());
        let u1 = unitary_kick(&m, &x, 0.6).unwrap();
        let u2 = unitary_kick(&m, &x, -1.9).unwrap();
        let u12 = unitary_kick(&m, &x, 0.6 - 1.9).unwrap();
        assert!((u1.compose(&u2).unwrap().entries - u12.entries).norm() < 1e-11);
    }

    #[test]
    fn small_kick_leakage_is_bounded() {
        // Probability of leaving the sectors below the cutoff after a kick on |0⟩.
        let m = TruncatedFockModel::default_box();
        let psi = unitary_kick(&m, &pt(0.0, 0.0), 0.5)
            .unwrap()
            .apply(&m.vacuum())
            .unwrap();
        let top: f64 = (0..m.dim())
            .filter(|&i| m.occupation(i).iter().sum::<usize>() == m.n_max())
            .map(|i| psi.amplitudes[i].norm_sqr())
            .sum();
        assert!(top <= 1e-3, "leakage {top}");
    }

    #[test]
    fn rotation_identity_swap_and_unitarity() {
        let m = TruncatedFockModel::default_box();
        let (a, b) = (m.one_particle(0).unwrap(), m.one_particle(1).unwrap());
        let id = rotation_unitary(
            &m,
            &RotationSpec {
                one_particle_a: a.clone(),
                one_particle_b: b.clone(),
                c: ONE,
                d: ZERO,
                theta: 0.0,
            },
        )
        .unwrap();
        assert!((id.entries - DMatrix::<Complex64>::identity(10, 10)).norm() < 1e-15);
        let swap = rotation_unitary(&m, &RotationSpec::swap(a.clone(), b.clone())).unwrap();
        assert!((swap.apply(&a).unwrap().amplitudes - &b.amplitudes).norm() < 1e-15);
        assert!((swap.apply(&b).unwrap().amplitudes + &a.amplitudes).norm() < 1e-15);
        let vac = m.vacuum();
        assert!((swap.apply(&vac).unwrap().amplitudes - &vac.amplitudes).norm() < 1e-15);
        let general = RotationSpec {
            one_particle_a: a,
            one_particle_b: b,
            c: Complex64::new(0.6, 0.0),
            d: Complex64::new(0.0, 0.8),
            theta: 1.1,
        };
        assert!(rotation_unitary(&m, &general).unwrap().is_unitary());
    }

    #[test]
    fn rotation_rejects_bad_specs() {
        let m = TruncatedFockModel::default_box();
        let a = m.one_particle(0).unwrap();
        let mut spec = RotationSpec::swap(a.clone(), a.clone());
        assert!(rotation_unitary(&m, &spec).is_err());
        spec.one_particle_b = m.one_particle(1).unwrap();
        spec.d = Complex64::new(-0.9, 0.0);
        assert!(rotation_unitary(&m, &spec).is_err());
    }

    #[test]
    fn sequential_probabilities() {
        let m = TruncatedFockModel::default_box();
        let one = m.one_particle(0).unwrap();
        let b = OperatorMatrix::projector(&[one.clone()]).unwrap();
        let state = QuantumState::Pure(one.clone());
        assert!((sequential_probability(&state, &[b.clone()]).unwrap() - 1.0).abs() < 1e-15);

        // Complete pair on a generic superposition.
        let psi = FockState::new(DVector::from_fn(10, |i, _| Complex64::new(1.0 + i as f64, 0.5 * i as f64)))
            .unwrap()
            .normalized()
            .unwrap();
        let comp = OperatorMatrix {
            entries: DMatrix::identity(10, 10) - &b.entries,
        };
        let pure = QuantumState::Pure(psi.clone());
        let mixed = QuantumState::Density(psi.density());
        for s in [&pure, &mixed] {
            let total = sequential_probability(s, &[b.clone()]).unwrap()
                + sequential_probability(s, &[comp.clone()]).unwrap();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_probability_hand_checked() {
        // |ψ⟩ = (|0⟩+|1⟩+|2⟩+|3⟩)/2, P1 = diag(1,1,0,0), P2 = |v⟩⟨v| with
        // |v⟩ = (|1⟩+|2⟩)/√2. P1ψ = (|0⟩+|1⟩)/2 and ⟨v|P1ψ⟩ = 1/(2√2).
        let c = |x: f64| Complex64::new(x, 0.0);
        let psi = FockState::new(DVector::from_element(4, c(0.5))).unwrap();
        let p1 = OperatorMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(1.0), c(0.0), c(0.0)])))
            .unwrap();
        let s = 1.0 / 2f64.sqrt();
        let v = FockState::new(DVector::from_vec(vec![c(0.0), c(s), c(s), c(0.0)])).unwrap();
        let p2 = OperatorMatrix::projector(&[v]).unwrap();
        let pr = sequential_probability(&QuantumState::Pure(psi.clone()), &[p1.clone(), p2.clone()]).unwrap();
        assert!((pr - 0.125).abs() < 1e-15);
        let rev = sequential_probability(&QuantumState::Density(psi.density()), &[p2, p1]).unwrap();
        // P2ψ = (|1⟩+|2⟩)/2, P1 of that = |1⟩/2.
        assert!((rev - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sequential_probability_rejects_non_projectors() {
        let m = TruncatedFockModel::default_box();
        let phi = field_operator(&m, &pt(0.0, 0.0)).unwrap();
        assert!(sequential_probability(&QuantumState::Pure(m.vacuum()), &[phi]).is_err());
        let small = OperatorMatrix::identity(3);
        assert!(matches!(
            sequential_probability(&QuantumState::Pure(m.vacuum()), &[small]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn truncated_field_is_not_microcausal() {
        let m = TruncatedFockModel::default_box();
        let x = pt(0.0, 0.0);
        let y = pt(0.5, 2.0);
        let c = field_operator(&m, &x)
            .unwrap()
            .commutator(&field_operator(&m, &y).unwrap())
            .unwrap();
        assert!(c.norm() > 1e-3);
        // Null separation along a mode does not rescue it either.
        let z = pt(PI / 3.0, 1.0);
        let c2 = field_operator(&m, &x)
            .unwrap()
            .commutator(&field_operator(&m, &z).unwrap())
            .unwrap();
        assert!(c2.norm() > 1e-3);
    }
}
