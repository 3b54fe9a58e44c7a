//! Per-subcommand parameters, defaults and execution.
//!
//! Columns per subcommand:
//!
//! | subcommand | CSV columns |
//! |---|---|
//! | causal-order | `position,index,label` |
//! | wavepacket | `t,z,re_psi,im_psi,method` |
//! | falloff | `t,envelope,fit_exponent` |
//! | protocol | `quantity,value` |
//! | detector | `lambda2,E1` |
//! | smearing (fg) | `x,F,G` |
//! | smearing (jk) | `x,J,K,2ImPsi` |
//! | smearing (no_signalling) | `draw,deviation,nonlocal_deviation` |
//! | specfun-probe | `re_z,im_z,re_d,im_d,log_scale,re_w,im_w,ok` |
//!
//! The wavepacket `method` cell is `closed_form`, or `failed` for points whose
//! evaluation hit a numerical limit (values then read `NaN`).
//!
//! For specfun-probe, `W_ν(z) = e^{z²/4} D_ν(z) = e^{log_scale} (re_w + i im_w)`.

use crate::{CliError, Command, RunConfig};
use qfc_core::detector::{signal_coefficient, Backend, DetectorTriadModel, DEFAULT_LAMBDA2_GRID};
use qfc_core::fockbox::{
    protocol_report, ModelSpec, OperatorMatrix, ProtocolDocument, RotationDocument, StateSpec,
    StepDocument, TruncatedFockModel,
};
use qfc_core::quad::QuadConfig;
use qfc_core::smearing::{
    bipartite_no_signalling, compare_jk, localization_report, nonlocal_signalling,
    random_hermitian, random_unitary, smearing_fg, smearing_jk, BipartiteSystem, Normalization,
};
use qfc_core::spacetime::{
    causal_order, validate_restriction, Region, RegionDocument, RestrictionRule, SpacetimePoint,
};
use qfc_core::specfun::{scaled_w_asymptotic, scaled_w_auto, scaled_w_with, Scaled};
use qfc_core::wavepacket::{falloff_fit, psi_3d_closed_form, GaussianPacket, TabulatedPacket};
use qfc_core::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;

/// One CSV cell. Floats are written with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
    S(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:.16e}"),
            Cell::I(v) => v.to_string(),
            Cell::B(v) => v.to_string(),
            Cell::S(v) => v.clone(),
        }
    }
}

/// Result of one run, independent of the output format.
#[derive(Debug, Clone, Default)]
pub struct Output {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Body of the JSON artifact's `result` field.
    pub summary: Value,
    /// Set when a numerical failure left some rows without values.
    pub partial: bool,
    pub failure: Option<String>,
}

// ---------------------------------------------------------------------------
// Parameters

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WavepacketParams {
    pub k0: f64,
    pub sigma: f64,
    pub times: Vec<f64>,
    pub z_min: f64,
    pub z_max: f64,
    pub points: usize,
}

impl Default for WavepacketParams {
    fn default() -> Self {
        Self {
            k0: 10.0,
            sigma: 1.0,
            times: vec![0.0, 10.0, 20.0],
            z_min: -5.0,
            z_max: 30.0,
            points: 700,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FalloffParams {
    pub k0: f64,
    pub sigma: f64,
    pub delta: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
}

impl Default for FalloffParams {
    fn default() -> Self {
        Self {
            k0: 10.0,
            sigma: 1.0,
            delta: 0.05,
            t_min: 50.0,
            t_max: 200.0,
            samples: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    pub w1: f64,
    pub w2: f64,
    pub omega: f64,
    pub x1: f64,
    pub x2: f64,
    pub lambda1: f64,
    pub duration: f64,
    pub backend: Backend,
    pub lambda2_grid: Vec<f64>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        let m = DetectorTriadModel::reference();
        Self {
            w1: m.w1,
            w2: m.w2,
            omega: m.omega,
            x1: m.x1,
            x2: m.x2,
            lambda1: m.lambda1,
            duration: m.duration,
            backend: m.backend,
            lambda2_grid: DEFAULT_LAMBDA2_GRID.to_vec(),
        }
    }
}

impl DetectorParams {
    fn model(&self) -> DetectorTriadModel {
        DetectorTriadModel {
            w1: self.w1,
            w2: self.w2,
            omega: self.omega,
            x1: self.x1,
            x2: self.x2,
            lambda1: self.lambda1,
            lambda2: 0.0,
            duration: self.duration,
            backend: self.backend,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FgParams {
    pub k: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub normalization: Normalization,
}

impl Default for FgParams {
    fn default() -> Self {
        Self {
            k: vec![1.0],
            x_min: -10.0,
            x_max: 10.0,
            points: 401,
            normalization: Normalization::Continuum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JkParams {
    pub k0: f64,
    pub sigma: f64,
    pub half_width: f64,
    pub n_k: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub window: (f64, f64),
}

impl Default for JkParams {
    fn default() -> Self {
        Self {
            k0: 10.0,
            sigma: 1.0,
            half_width: 8.0,
            n_k: 1024,
            x_min: -12.0,
            x_max: 12.0,
            points: 2401,
            window: (-6.0, 6.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoSignallingParams {
    pub draws: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    pub lambdas: Vec<f64>,
    /// Deviation above which a nonlocal draw counts as signalling.
    pub threshold: f64,
}

impl Default for NoSignallingParams {
    fn default() -> Self {
        Self {
            draws: 100,
            dim_a: 3,
            dim_b: 4,
            lambdas: vec![0.3, 1.0, 2.5],
            threshold: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmearingParams {
    Fg(FgParams),
    Jk(JkParams),
    NoSignalling(NoSignallingParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMethod {
    #[default]
    Auto,
    Integral,
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecfunParams {
    pub nu: f64,
    /// `[re, im]` pairs.
    pub points: Vec<[f64; 2]>,
    pub method: ProbeMethod,
}

impl Default for SpecfunParams {
    fn default() -> Self {
        Self {
            nu: -1.5,
            points: vec![
                [0.0, 0.0],
                [1.0, 0.0],
                [-2.0, 0.0],
                [1.0, 1.0],
                [-3.0, 2.0],
                [0.0, 10.0],
                [10.0, -10.0],
                [40.0, 5.0],
            ],
            method: ProbeMethod::Auto,
        }
    }
}

/// Regions of the three-intervention example: a kick region X, a
/// measurement slab and a readout region Y spacelike to X.
pub fn default_regions() -> RegionDocument {
    let p = |t: f64, x: f64| SpacetimePoint { t, x: vec![x] };
    RegionDocument {
        d: 1,
        regions: vec![
            Region::ball("X", p(-1.0, 0.0), 0.1),
            Region::slab("B", 0.0, 2.0),
            Region::ball("Y", p(3.0, 10.0), 0.1),
        ],
    }
}

/// Kick at X, swap of the two one-particle states, field at Y, in the
/// default two-mode box starting from the vacuum.
pub fn default_protocol() -> ProtocolDocument {
    let model = TruncatedFockModel::default_box();
    let m = model.modes().len();
    let one = |i: usize| {
        let mut occ = vec![0; m];
        occ[i] = 1;
        StateSpec::basis(occ)
    };
    ProtocolDocument {
        model: ModelSpec::from(&model),
        initial_state: StateSpec::basis(vec![0; m]),
        steps: vec![
            StepDocument::Kick {
                x: SpacetimePoint { t: 0.0, x: vec![0.0] },
                lambda: 1.0,
            },
            StepDocument::Rotate(RotationDocument {
                a: one(0),
                b: one(1),
                c: Complex64::new(0.0, 0.0),
                d: Complex64::new(1.0, 0.0),
                theta: 0.0,
            }),
            StepDocument::Field {
                y: SpacetimePoint { t: 1.0, x: vec![0.5] },
            },
        ],
    }
}

fn typed<T: DeserializeOwned>(raw: Value) -> Result<T, CliError> {
    serde_json::from_value(raw).map_err(|e| CliError::Validation(format!("invalid parameters: {e}")))
}

fn is_empty_object(v: &Value) -> bool {
    v.as_object().is_some_and(|o| o.is_empty())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{name} must be positive and finite")))
    }
}

fn grid_params(lo: f64, hi: f64, n: usize) -> Result<(), CliError> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) || n < 2 {
        return Err(CliError::Validation(
            "grid needs finite bounds with max > min and at least 2 points".into(),
        ));
    }
    Ok(())
}

fn validate_typed(command: Command, params: &Value) -> Result<(), CliError> {
    match command {
        Command::CausalOrder => {
            let doc: RegionDocument = typed(params.clone())?;
            doc.validate()?;
        }
        Command::Wavepacket => {
            let p: WavepacketParams = typed(params.clone())?;
            GaussianPacket::along_axis(p.k0, p.sigma, 3)?;
            grid_params(p.z_min, p.z_max, p.points)?;
            if p.times.iter().any(|t| !t.is_finite()) || p.times.is_empty() {
                return Err(CliError::Validation("times must be finite and non-empty".into()));
            }
        }
        Command::Falloff => {
            let p: FalloffParams = typed(params.clone())?;
            GaussianPacket::along_axis(p.k0, p.sigma, 3)?;
            if p.samples < 4 || !(p.t_max > p.t_min) {
                return Err(CliError::Validation(
                    "falloff needs t_max > t_min and at least 4 samples".into(),
                ));
            }
        }
        Command::Protocol => {
            let doc: ProtocolDocument = typed(params.clone())?;
            doc.build()?;
        }
        Command::Detector => {
            let p: DetectorParams = typed(params.clone())?;
            p.model().validate()?;
        }
        Command::Smearing => match typed::<SmearingParams>(params.clone())? {
            SmearingParams::Fg(p) => grid_params(p.x_min, p.x_max, p.points)?,
            SmearingParams::Jk(p) => {
                grid_params(p.x_min, p.x_max, p.points)?;
                positive("half_width", p.half_width)?;
                if p.n_k < 2 {
                    return Err(CliError::Validation("n_k must be at least 2".into()));
                }
                if !(p.window.0 < p.window.1) {
                    return Err(CliError::Validation("window must satisfy lo < hi".into()));
                }
            }
            SmearingParams::NoSignalling(p) => {
                if p.dim_a < 2 || p.dim_b < 2 || p.dim_a > 4 || p.dim_b > 4 {
                    return Err(CliError::Validation("dimensions must lie in 2..=4".into()));
                }
                if p.draws == 0 || p.lambdas.is_empty() {
                    return Err(CliError::Validation("need at least one draw and one λ".into()));
                }
                positive("threshold", p.threshold)?;
            }
        },
        Command::SpecfunProbe => {
            let p: SpecfunParams = typed(params.clone())?;
            if !(p.nu.is_finite() && p.nu < 0.0) {
                return Err(CliError::Validation("nu must be negative".into()));
            }
            if p.points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(CliError::Validation("points must be finite".into()));
            }
        }
    }
    Ok(())
}

fn fill<T: Serialize + DeserializeOwned>(raw: Value) -> Result<Value, CliError> {
    let p: T = typed(raw)?;
    Ok(serde_json::to_value(p)?)
}

/// Fills defaults into `raw` and validates the result.
pub fn resolve_params(command: Command, raw: Value) -> Result<Value, CliError> {
    if !raw.is_object() {
        return Err(CliError::Validation("parameters must be a JSON object".into()));
    }
    let params = match command {
        Command::CausalOrder if is_empty_object(&raw) => serde_json::to_value(default_regions())?,
        Command::CausalOrder => fill::<RegionDocument>(raw)?,
        Command::Protocol if is_empty_object(&raw) => serde_json::to_value(default_protocol())?,
        Command::Protocol => fill::<ProtocolDocument>(raw)?,
        Command::Wavepacket => fill::<WavepacketParams>(raw)?,
        Command::Falloff => fill::<FalloffParams>(raw)?,
        Command::Detector => fill::<DetectorParams>(raw)?,
        Command::Smearing => {
            let mut raw = raw;
            if let Some(obj) = raw.as_object_mut() {
                obj.entry("kind").or_insert_with(|| json!("jk"));
            }
            fill::<SmearingParams>(raw)?
        }
        Command::SpecfunProbe => fill::<SpecfunParams>(raw)?,
    };
    validate_typed(command, &params)?;
    Ok(params)
}

/// Tolerance keys accepted by each subcommand.
pub fn tolerance_keys(command: Command) -> &'static [&'static str] {
    match command {
        Command::SpecfunProbe => &["quad.rel_tol", "quad.max_intervals"],
        _ => &[],
    }
}

pub fn check_tolerances(command: Command, tol: &BTreeMap<String, f64>) -> Result<(), CliError> {
    let keys = tolerance_keys(command);
    for (k, v) in tol {
        if !keys.contains(&k.as_str()) {
            return Err(CliError::Validation(format!(
                "unknown tolerance `{k}` for this subcommand (accepted: {keys:?})"
            )));
        }
        if !(v.is_finite() && *v > 0.0) {
            return Err(CliError::Validation(format!("tolerance `{k}` must be positive")));
        }
        if k == "quad.max_intervals" && v.fract() != 0.0 {
            return Err(CliError::Validation("quad.max_intervals must be an integer".into()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Execution

/// Order-preserving parallel map over contiguous chunks.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

pub fn execute(cfg: &RunConfig) -> Result<Output, CliError> {
    let p = cfg.params.clone();
    match cfg.subcommand {
        Command::CausalOrder => run_causal_order(typed(p)?),
        Command::Wavepacket => run_wavepacket(typed(p)?, cfg.threads),
        Command::Falloff => run_falloff(typed(p)?),
        Command::Protocol => run_protocol_doc(typed(p)?),
        Command::Detector => run_detector(typed(p)?),
        Command::Smearing => match typed(p)? {
            SmearingParams::Fg(p) => run_fg(p),
            SmearingParams::Jk(p) => run_jk(p),
            SmearingParams::NoSignalling(p) => run_no_signalling(p, cfg.seed, cfg.threads),
        },
        Command::SpecfunProbe => run_specfun(typed(p)?, &cfg.tolerances, cfg.threads),
    }
}

fn run_causal_order(doc: RegionDocument) -> Result<Output, CliError> {
    let order = causal_order(&doc.regions)?;
    let verdicts = [
        validate_restriction(&doc.regions, RestrictionRule::PartialOrderBeforeClosure)?,
        validate_restriction(&doc.regions, RestrictionRule::PairwiseSpacelikeOrFullyOrdered)?,
    ];
    let extension: Option<Vec<usize>> = order
        .linear_extension
        .as_ref()
        .map(|v| v.iter().map(|i| i + 1).collect());
    let rows = extension
        .iter()
        .flatten()
        .enumerate()
        .map(|(pos, &idx)| {
            vec![
                Cell::I(pos as i64 + 1),
                Cell::I(idx as i64),
                Cell::S(doc.regions[idx - 1].label.clone()),
            ]
        })
        .collect();
    Ok(Output {
        columns: vec!["position", "index", "label"],
        rows,
        summary: json!({
            "labels": doc.regions.iter().map(|r| r.label.clone()).collect::<Vec<_>>(),
            "linear_extension": extension,
            "relation": order.relation,
            "acyclic": order.acyclic,
            "restrictions": verdicts,
        }),
        ..Output::default()
    })
}

fn run_wavepacket(p: WavepacketParams, threads: usize) -> Result<Output, CliError> {
    let packet = GaussianPacket::along_axis(p.k0, p.sigma, 3)?;
    let zs = linspace(p.z_min, p.z_max, p.points);
    let grid: Vec<(f64, f64)> = p
        .times
        .iter()
        .flat_map(|&t| zs.iter().map(move |&z| (t, z)))
        .collect();
    let values = par_map(&grid, threads, |&(t, z)| psi_3d_closed_form(&packet, t, z).map(|r| r.0));
    let mut out = Output {
        columns: vec!["t", "z", "re_psi", "im_psi", "method"],
        ..Output::default()
    };
    let mut samples = Vec::with_capacity(grid.len());
    for (&(t, z), v) in grid.iter().zip(values) {
        match v {
            Ok(psi) => {
                out.rows.push(vec![
                    Cell::F(t),
                    Cell::F(z),
                    Cell::F(psi.re),
                    Cell::F(psi.im),
                    Cell::S("closed_form".into()),
                ]);
                samples.push(json!({"t": t, "z": z, "psi": [psi.re, psi.im], "ok": true}));
            }
            Err(e) => {
                if !e.is_numerical() {
                    return Err(e.into());
                }
                log::warn!("ψ({t}, {z}) failed: {e}");
                out.partial = true;
                out.failure.get_or_insert_with(|| format!("ψ({t}, {z}): {e}"));
                let nan = Cell::F(f64::NAN);
                out.rows.push(vec![Cell::F(t), Cell::F(z), nan.clone(), nan, Cell::S("failed".into())]);
                samples.push(json!({"t": t, "z": z, "psi": null, "ok": false}));
            }
        }
    }
    out.summary = json!({ "samples": samples });
    Ok(out)
}

fn run_falloff(p: FalloffParams) -> Result<Output, CliError> {
    let packet = GaussianPacket::along_axis(p.k0, p.sigma, 3)?;
    let fit = falloff_fit(&packet, p.delta, (p.t_min, p.t_max), p.samples)?;
    let rows = fit
        .samples
        .iter()
        .map(|s| vec![Cell::F(s.t), Cell::F(s.envelope), Cell::F(fit.exponent)])
        .collect();
    Ok(Output {
        columns: vec!["t", "envelope", "fit_exponent"],
        rows,
        summary: serde_json::to_value(&fit)?,
        ..Output::default()
    })
}

fn run_protocol_doc(doc: ProtocolDocument) -> Result<Output, CliError> {
    let protocol = doc.build()?;
    let report = protocol_report(&protocol)?;
    let mut rows = vec![
        vec![Cell::S("expectation".into()), Cell::F(report.expectation)],
        vec![Cell::S("signal_derivative".into()), Cell::F(report.signal_derivative)],
    ];
    for b in &report.branches {
        let tag: Vec<String> = b.outcomes.iter().map(|o| o.to_string()).collect();
        rows.push(vec![
            Cell::S(format!("probability[{}]", tag.join(" "))),
            Cell::F(b.probability),
        ]);
    }
    Ok(Output {
        columns: vec!["quantity", "value"],
        rows,
        summary: serde_json::to_value(&report)?,
        ..Output::default()
    })
}

/// `c2` for the reference detector parameters, `π⁴/3` to four decimals.
pub const C2_REFERENCE: f64 = 32.4697;

fn run_detector(p: DetectorParams) -> Result<Output, CliError> {
    let fit = signal_coefficient(&p.model(), &p.lambda2_grid)?;
    let rows = fit
        .samples
        .iter()
        .map(|&(l, e)| vec![Cell::F(l), Cell::F(e)])
        .collect();
    Ok(Output {
        columns: vec!["lambda2", "E1"],
        rows,
        summary: json!({
            "c0": fit.c0,
            "c2": fit.c2,
            "c4": fit.c4,
            "c2_reference": C2_REFERENCE,
            "rel_err": (fit.c2 - C2_REFERENCE).abs() / C2_REFERENCE,
            "parity_defect": fit.parity_defect,
            "spacelike": fit.spacelike,
            "samples": fit.samples,
        }),
        ..Output::default()
    })
}

fn run_fg(p: FgParams) -> Result<Output, CliError> {
    let xs = linspace(p.x_min, p.x_max, p.points);
    let (f, g) = smearing_fg(&p.k, &xs, p.normalization)?;
    let rows = xs
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(&x, (&fv, &gv))| vec![Cell::F(x), Cell::F(fv), Cell::F(gv)])
        .collect();
    let window = f.central_window();
    Ok(Output {
        columns: vec!["x", "F", "G"],
        rows,
        summary: json!({
            "F": localization_report(&f, window)?,
            "G": localization_report(&g, window)?,
        }),
        ..Output::default()
    })
}

fn run_jk(p: JkParams) -> Result<Output, CliError> {
    let packet = TabulatedPacket::gaussian(p.k0, p.sigma, p.half_width, p.n_k)?;
    let xs = linspace(p.x_min, p.x_max, p.points);
    let cmp = compare_jk(&packet, &xs)?;
    let (j, k) = smearing_jk(&packet, &xs)?;
    let rows = cmp
        .rows
        .iter()
        .map(|r| r.iter().map(|&v| Cell::F(v)).collect())
        .collect();
    Ok(Output {
        columns: vec!["x", "J", "K", "2ImPsi"],
        rows,
        summary: json!({
            "k_vs_imaginary_part": cmp.k_vs_imaginary_part,
            "j_vs_real_part": cmp.j_vs_real_part,
            "J": localization_report(&j, p.window)?,
            "K": localization_report(&k, p.window)?,
        }),
        ..Output::default()
    })
}

/// Random Hermitian `A'` on both factors that is not of the form `A ⊗ 1`.
fn nonlocal_operator(rng: &mut ChaCha8Rng, dim: usize) -> OperatorMatrix {
    random_hermitian(rng, dim)
}

fn run_no_signalling(p: NoSignallingParams, seed: u64, threads: usize) -> Result<Output, CliError> {
    let draws: Vec<u64> = (0..p.draws as u64).collect();
    let results = par_map(&draws, threads, |&i| -> Result<(f64, f64), CliError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        let system = BipartiteSystem::random(&mut rng, p.dim_a, p.dim_b);
        let u1 = random_unitary(&mut rng, p.dim_a);
        let a_prime = nonlocal_operator(&mut rng, p.dim_a * p.dim_b);
        let local = bipartite_no_signalling(&system, &u1, &p.lambdas)?;
        let nonlocal = nonlocal_signalling(&system, &u1, &a_prime, &p.lambdas)?;
        Ok((local, nonlocal))
    });
    let mut rows = Vec::with_capacity(draws.len());
    let (mut worst, mut signalling) = (0.0f64, 0usize);
    for (i, r) in results.into_iter().enumerate() {
        let (local, nonlocal) = r?;
        worst = worst.max(local);
        if nonlocal > p.threshold {
            signalling += 1;
        }
        rows.push(vec![Cell::I(i as i64), Cell::F(local), Cell::F(nonlocal)]);
    }
    Ok(Output {
        columns: vec!["draw", "deviation", "nonlocal_deviation"],
        rows,
        summary: json!({
            "draws": p.draws,
            "max_deviation": worst,
            "nonlocal_above_threshold": signalling,
            "threshold": p.threshold,
        }),
        ..Output::default()
    })
}

fn quad_config(tol: &BTreeMap<String, f64>) -> QuadConfig {
    let mut cfg = QuadConfig::default();
    if let Some(&r) = tol.get("quad.rel_tol") {
        cfg = cfg.with_rel_tol(r);
    }
    if let Some(&m) = tol.get("quad.max_intervals") {
        cfg.max_intervals = m as usize;
    }
    cfg
}

fn run_specfun(
    p: SpecfunParams,
    tol: &BTreeMap<String, f64>,
    threads: usize,
) -> Result<Output, CliError> {
    let qc = quad_config(tol);
    let eval = |z: Complex64| -> qfc_core::Result<Scaled> {
        match p.method {
            ProbeMethod::Auto if tol.is_empty() => scaled_w_auto(p.nu, z),
            ProbeMethod::Auto | ProbeMethod::Integral => scaled_w_with(p.nu, z, &qc),
            ProbeMethod::Asymptotic => Ok(Scaled {
                log_scale: 0.0,
                mantissa: scaled_w_asymptotic(p.nu, z),
            }),
        }
    };
    let values = par_map(&p.points, threads, |&[re, im]| eval(Complex64::new(re, im)));
    let mut out = Output {
        columns: vec!["re_z", "im_z", "re_d", "im_d", "log_scale", "re_w", "im_w", "ok"],
        ..Output::default()
    };
    let mut samples = Vec::new();
    for (&[re, im], v) in p.points.iter().zip(values) {
        let z = Complex64::new(re, im);
        match v {
            Ok(w) => {
                let d = w.mantissa * (w.log_scale - 0.25 * z * z).exp();
                out.rows.push(vec![
                    Cell::F(re),
                    Cell::F(im),
                    Cell::F(d.re),
                    Cell::F(d.im),
                    Cell::F(w.log_scale),
                    Cell::F(w.mantissa.re),
                    Cell::F(w.mantissa.im),
                    Cell::B(true),
                ]);
                let finite = |c: Complex64| (c.re.is_finite() && c.im.is_finite()).then_some([c.re, c.im]);
                samples.push(json!({
                    "z": [re, im],
                    "d": finite(d),
                    "log_scale": w.log_scale,
                    "w": [w.mantissa.re, w.mantissa.im],
                    "ok": true,
                }));
            }
            Err(e) => {
                if !e.is_numerical() {
                    return Err(e.into());
                }
                log::warn!("D_ν({z}) failed: {e}");
                out.partial = true;
                out.failure.get_or_insert_with(|| format!("D_ν({z}): {e}"));
                let nan = Cell::F(f64::NAN);
                let mut row = vec![Cell::F(re), Cell::F(im)];
                row.extend(std::iter::repeat_n(nan, 5));
                row.push(Cell::B(false));
                out.rows.push(row);
                samples.push(json!({"z": [re, im], "ok": false, "error": e.to_string()}));
            }
        }
    }
    out.summary = json!({ "nu": p.nu, "samples": samples });
    Ok(out)
}
