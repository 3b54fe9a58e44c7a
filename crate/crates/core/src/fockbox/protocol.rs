//! Protocol engine: kicks, ideal measurements and rotations followed by a
//! readout of `⟨φ̂(Y)⟩`, plus the closed-form box-mode signals.

use super::{
    check_dim, field_operator, rotation_unitary, unitary_kick, FockState, OperatorMatrix, RotationSpec,
    TruncatedFockModel, TOL_OP,
};
use crate::error::{Error, Result};
use crate::spacetime::SpacetimePoint;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Step sizes of the two central differences combined by Richardson
/// extrapolation in [`signal_derivative`].
pub const DERIVATIVE_STEPS: (f64, f64) = (1e-4, 5e-5);

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Kick { x: SpacetimePoint, lambda: f64 },
    IdealMeasure { projectors: Vec<OperatorMatrix> },
    Rotate(RotationSpec),
    MeasureField { y: SpacetimePoint },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub model: TruncatedFockModel,
    pub initial_state: FockState,
    pub steps: Vec<Step>,
}

fn check_family(dim: usize, projectors: &[OperatorMatrix]) -> Result<()> {
    if projectors.is_empty() {
        return Err(Error::invalid("measurement needs at least one projector"));
    }
    let mut sum = DMatrix::<Complex64>::zeros(dim, dim);
    for (a, pa) in projectors.iter().enumerate() {
        check_dim(dim, pa.dim())?;
        sum += &pa.entries;
        for (b, pb) in projectors.iter().enumerate() {
            let prod = &pa.entries * &pb.entries;
            let defect = if a == b {
                (prod - &pa.entries).norm()
            } else {
                prod.norm()
            };
            if defect > TOL_OP {
                return Err(Error::invalid(format!(
                    "projectors {a} and {b} violate P_a P_b = δ_ab P_a (defect {defect:e})"
                )));
            }
        }
    }
    let defect = (sum - DMatrix::identity(dim, dim)).norm();
    if defect > TOL_OP {
        return Err(Error::invalid(format!(
            "projector family is incomplete (‖ΣP - 1‖ = {defect:e})"
        )));
    }
    Ok(())
}

impl Protocol {
    pub fn new(model: TruncatedFockModel, initial_state: FockState, steps: Vec<Step>) -> Result<Self> {
        let p = Self {
            model,
            initial_state,
            steps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.model.dim();
        check_dim(dim, self.initial_state.dim())?;
        self.initial_state.check_normalized()?;
        match self.steps.last() {
            Some(Step::MeasureField { .. }) => {}
            _ => return Err(Error::invalid("the final step must be a field measurement")),
        }
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                Step::Kick { x, lambda } => {
                    self.model.check_point(x)?;
                    if !lambda.is_finite() {
                        return Err(Error::invalid("kick strength must be finite"));
                    }
                }
                Step::IdealMeasure { projectors } => check_family(dim, projectors)?,
                Step::Rotate(spec) => {
                    spec.validate()?;
                    check_dim(dim, spec.one_particle_a.dim())?;
                }
                Step::MeasureField { y } => {
                    self.model.check_point(y)?;
                    if i + 1 != self.steps.len() {
                        return Err(Error::invalid("field measurement must be the last step"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Kick at `x`, ideal measurement of `{B, 1-B}` with `B = |1⟩⟨1|`, field
    /// readout at `y`.
    pub fn kick_measure_field(
        model: &TruncatedFockModel,
        initial_state: FockState,
        x: SpacetimePoint,
        lambda: f64,
        measured: &FockState,
        y: SpacetimePoint,
    ) -> Result<Self> {
        let b = OperatorMatrix::projector(std::slice::from_ref(measured))?;
        let not_b = OperatorMatrix {
            entries: DMatrix::identity(b.dim(), b.dim()) - &b.entries,
        };
        Self::new(
            model.clone(),
            initial_state,
            vec![
                Step::Kick { x, lambda },
                Step::IdealMeasure {
                    projectors: vec![b, not_b],
                },
                Step::MeasureField { y },
            ],
        )
    }

    /// Kick at `x`, rotation, field readout at `y`.
    pub fn kick_rotate_field(
        model: &TruncatedFockModel,
        initial_state: FockState,
        x: SpacetimePoint,
        lambda: f64,
        rotation: RotationSpec,
        y: SpacetimePoint,
    ) -> Result<Self> {
        Self::new(
            model.clone(),
            initial_state,
            vec![
                Step::Kick { x, lambda },
                Step::Rotate(rotation),
                Step::MeasureField { y },
            ],
        )
    }
}

/// One selective history: the outcome index of every ideal measurement and
/// its joint probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub outcomes: Vec<usize>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOutcome {
    /// `Tr(φ̂(Y) ρ_final)` with non-selective measurement updates.
    pub expectation: f64,
    pub branches: Vec<Branch>,
}

/// Runs the protocol with the kick strengths as given.
pub fn run_protocol(protocol: &Protocol) -> Result<ProtocolOutcome> {
    run_protocol_scaled(protocol, 1.0)
}

/// Runs the protocol with every kick strength multiplied by `scale`.
///
/// The initial state is pure, so the non-selective state is carried as the
/// set of unnormalised branch vectors `P_b … U|ψ⟩`; their squared norms are
/// the sequential probabilities and `ρ = Σ_b |ψ_b⟩⟨ψ_b|`.
pub fn run_protocol_scaled(protocol: &Protocol, scale: f64) -> Result<ProtocolOutcome> {
    protocol.validate()?;
    let model = &protocol.model;
    let mut branches: Vec<(Vec<usize>, DVector<Complex64>)> =
        vec![(Vec::new(), protocol.initial_state.amplitudes.clone())];
    let mut expectation = 0.0;
    for step in &protocol.steps {
        match step {
            Step::Kick { x, lambda } => {
                let u = unitary_kick(model, x, scale * lambda)?;
                for (_, v) in &mut branches {
                    *v = &u.entries * &*v;
                }
            }
            Step::Rotate(spec) => {
                let u = rotation_unitary(model, spec)?;
                for (_, v) in &mut branches {
                    *v = &u.entries * &*v;
                }
            }
            Step::IdealMeasure { projectors } => {
                branches = branches
                    .into_iter()
                    .flat_map(|(hist, v)| {
                        projectors.iter().enumerate().map(move |(b, p)| {
                            let mut h = hist.clone();
                            h.push(b);
                            (h, &p.entries * &v)
                        })
                    })
                    .collect();
            }
            Step::MeasureField { y } => {
                let phi = field_operator(model, y)?;
                expectation = branches
                    .iter()
                    .map(|(_, v)| v.dotc(&(&phi.entries * v)).re)
                    .sum();
            }
        }
    }
    Ok(ProtocolOutcome {
        expectation,
        branches: branches
            .into_iter()
            .map(|(outcomes, v)| Branch {
                outcomes,
                probability: v.norm_squared(),
            })
            .collect(),
    })
}

/// `dE/dλ` at `λ = 0`, where every kick strength is scaled by `λ`.
///
/// Richardson extrapolation of central differences at the two
/// [`DERIVATIVE_STEPS`] cancels the `O(h²)` term.
pub fn signal_derivative(protocol: &Protocol) -> Result<f64> {
    let central = |h: f64| -> Result<f64> {
        let plus = run_protocol_scaled(protocol, h)?.expectation;
        let minus = run_protocol_scaled(protocol, -h)?.expectation;
        Ok((plus - minus) / (2.0 * h))
    };
    let (h1, h2) = DERIVATIVE_STEPS;
    let (d1, d2) = (central(h1)?, central(h2)?);
    let r = (h1 / h2).powi(2);
    Ok((r * d2 - d1) / (r - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub expectation: f64,
    pub branches: Vec<Branch>,
    pub signal_derivative: f64,
}

pub fn protocol_report(protocol: &Protocol) -> Result<ProtocolReport> {
    let outcome = run_protocol(protocol)?;
    Ok(ProtocolReport {
        expectation: outcome.expectation,
        branches: outcome.branches,
        signal_derivative: signal_derivative(protocol)?,
    })
}

/// `ρ ↦ Σ_b P_b ρ P_b`.
pub fn measure_nonselective(rho: &OperatorMatrix, projectors: &[OperatorMatrix]) -> Result<OperatorMatrix> {
    check_family(rho.dim(), projectors)?;
    let mut out = DMatrix::zeros(rho.dim(), rho.dim());
    for p in projectors {
        out += &p.entries * &rho.entries * &p.entries;
    }
    Ok(OperatorMatrix { entries: out })
}

/// `2 Im⟨ψ|φ̂(X) U† φ̂(Y) U|ψ⟩`, the first-order signal of a kick at `X`
/// followed by the unitary `U` and a field readout at `Y`.
pub fn kick_rotate_signal(
    model: &TruncatedFockModel,
    state: &FockState,
    u: &OperatorMatrix,
    x: &SpacetimePoint,
    y: &SpacetimePoint,
) -> Result<f64> {
    check_dim(model.dim(), state.dim())?;
    check_dim(model.dim(), u.dim())?;
    let phi_x = field_operator(model, x)?.entries;
    let phi_y = field_operator(model, y)?.entries;
    let op = phi_x * u.entries.adjoint() * phi_y * &u.entries;
    Ok(2.0 * state.amplitudes.dotc(&(op * &state.amplitudes)).im)
}

fn k_dot(k: &[f64], omega: f64, p: &SpacetimePoint) -> f64 {
    -omega * p.t + k.iter().zip(&p.x).map(|(a, b)| a * b).sum::<f64>()
}

/// `L^{-d}(ω_k ω_k')^{-1/2} [sin(k'_μY^μ - k_μX^μ) - sin(k_μY^μ - k'_μX^μ)]`:
/// the kick-swap-readout signal for `|1⟩ = a_k†|0⟩`, `|1'⟩ = a_k'†|0⟩`.
pub fn analytic_box_signal(
    model: &TruncatedFockModel,
    k: &[f64],
    k_prime: &[f64],
    x: &SpacetimePoint,
    y: &SpacetimePoint,
) -> Result<f64> {
    let lookup = |q: &[f64]| {
        model
            .mode_index(q)
            .ok_or_else(|| Error::invalid(format!("mode {q:?} is not in the model")))
    };
    let (i, j) = (lookup(k)?, lookup(k_prime)?);
    model.check_point(x)?;
    model.check_point(y)?;
    let (w, wp) = (model.omega(i), model.omega(j));
    let pref = model.l().powf(-(model.d() as f64)) / (w * wp).sqrt();
    Ok(pref * ((k_dot(k_prime, wp, y) - k_dot(k, w, x)).sin() - (k_dot(k, w, y) - k_dot(k_prime, wp, x)).sin()))
}

fn antiparallel_parts(l: f64, k: &[f64], x: &SpacetimePoint, y: &SpacetimePoint) -> Result<(f64, f64, f64)> {
    if x.d() != k.len() || y.d() != k.len() {
        return Err(Error::DimensionMismatch {
            expected: k.len(),
            found: if x.d() != k.len() { x.d() } else { y.d() },
        });
    }
    let w = k.iter().map(|c| c * c).sum::<f64>().sqrt();
    if w == 0.0 || !(l > 0.0) {
        return Err(Error::invalid("need a nonzero mode and positive box length"));
    }
    let pref = -2.0 * l.powf(-(k.len() as f64)) / w;
    let sum: f64 = k.iter().zip(x.x.iter().zip(&y.x)).map(|(k, (a, b))| k * (a + b)).sum();
    Ok((pref, w * (y.t - x.t), sum))
}

/// [`analytic_box_signal`] at `k' = -k`:
/// `-(2L^{-d}/ω) cos[ω(Y⁰-X⁰)] sin[k·(Y+X)]`.
pub fn antiparallel_box_signal(l: f64, k: &[f64], x: &SpacetimePoint, y: &SpacetimePoint) -> Result<f64> {
    let (pref, wt, ks) = antiparallel_parts(l, k, x, y)?;
    Ok(pref * wt.cos() * ks.sin())
}

/// The factorisation `-(2L^{-d}/ω) sin[ω(Y⁰-X⁰)] cos[k·(Y+X)]`, with the time
/// and space factors exchanged relative to [`antiparallel_box_signal`]. It does
/// not follow from [`analytic_box_signal`]; it is kept so the discrepancy can
/// be measured.
pub fn antiparallel_sin_cos_form(l: f64, k: &[f64], x: &SpacetimePoint, y: &SpacetimePoint) -> Result<f64> {
    let (pref, wt, ks) = antiparallel_parts(l, k, x, y)?;
    Ok(pref * wt.sin() * ks.cos())
}

// ---------------------------------------------------------------------------
// JSON documents

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub l: f64,
    pub modes: Vec<Vec<f64>>,
    pub n_max: usize,
}

impl ModelSpec {
    pub fn build(&self) -> Result<TruncatedFockModel> {
        TruncatedFockModel::new(self.l, self.modes.clone(), self.n_max)
    }
}

impl From<&TruncatedFockModel> for ModelSpec {
    fn from(m: &TruncatedFockModel) -> Self {
        Self {
            l: m.l(),
            modes: m.modes().to_vec(),
            n_max: m.n_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTerm {
    pub occupation: Vec<usize>,
    /// `[re, im]`.
    pub amplitude: Complex64,
}

/// Superposition of occupation-number basis states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub terms: Vec<StateTerm>,
    /// Rescale to unit norm instead of requiring it.
    #[serde(default)]
    pub normalize: bool,
}

impl StateSpec {
    pub fn basis(occupation: Vec<usize>) -> Self {
        Self {
            terms: vec![StateTerm {
                occupation,
                amplitude: Complex64::new(1.0, 0.0),
            }],
            normalize: false,
        }
    }

    pub fn build(&self, model: &TruncatedFockModel) -> Result<FockState> {
        let mut v = DVector::zeros(model.dim());
        for term in &self.terms {
            let s = model.basis_state(&term.occupation)?;
            v += s.amplitudes * term.amplitude;
        }
        let s = FockState::new(v)?;
        if self.normalize {
            s.normalized()
        } else {
            s.check_normalized()?;
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationDocument {
    pub a: StateSpec,
    pub b: StateSpec,
    pub c: Complex64,
    pub d: Complex64,
    #[serde(default)]
    pub theta: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepDocument {
    Kick {
        x: SpacetimePoint,
        lambda: f64,
    },
    /// Each projector is the span of its listed orthonormal states. With
    /// `complement` the remainder `1 - ΣP` is appended as a final outcome.
    Measure {
        projectors: Vec<Vec<StateSpec>>,
        #[serde(default = "yes")]
        complement: bool,
    },
    Rotate(RotationDocument),
    Field {
        y: SpacetimePoint,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolDocument {
    pub model: ModelSpec,
    pub initial_state: StateSpec,
    pub steps: Vec<StepDocument>,
}

impl ProtocolDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<Protocol> {
        let model = self.model.build()?;
        let initial_state = self.initial_state.build(&model)?;
        let mut steps = Vec::with_capacity(self.steps.len());
        for doc in &self.steps {
            steps.push(match doc {
                StepDocument::Kick { x, lambda } => Step::Kick {
                    x: x.clone(),
                    lambda: *lambda,
                },
                StepDocument::Measure {
                    projectors,
                    complement,
                } => {
                    let mut ps = Vec::with_capacity(projectors.len() + 1);
                    for span in projectors {
                        let states = span
                            .iter()
                            .map(|s| s.build(&model))
                            .collect::<Result<Vec<_>>>()?;
                        ps.push(OperatorMatrix::projector(&states)?);
                    }
                    if *complement {
                        let dim = model.dim();
                        let mut rest = DMatrix::identity(dim, dim);
                        for p in &ps {
                            rest -= &p.entries;
                        }
                        if rest.norm() > TOL_OP {
                            ps.push(OperatorMatrix { entries: rest });
                        }
                    }
                    Step::IdealMeasure { projectors: ps }
                }
                StepDocument::Rotate(r) => Step::Rotate(RotationSpec {
                    one_particle_a: r.a.build(&model)?,
                    one_particle_b: r.b.build(&model)?,
                    c: r.c,
                    d: r.d,
                    theta: r.theta,
                }),
                StepDocument::Field { y } => Step::MeasureField { y: y.clone() },
            });
        }
        Protocol::new(model, initial_state, steps)
    }
}
