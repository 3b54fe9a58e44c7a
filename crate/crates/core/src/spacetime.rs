//! Minkowski geometry in d+1 dimensions (mostly-plus signature), intervention
//! regions and the causal ordering of region collections.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative tolerance for the null boundary and region contact tests.
pub const TOL_GEOM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub t: f64,
    pub x: Vec<f64>,
}

impl SpacetimePoint {
    pub fn new(t: f64, x: Vec<f64>) -> Result<Self> {
        let p = Self { t, x };
        p.validate()?;
        Ok(p)
    }

    /// Point `(t, 0, …, 0, z)` in `d` spatial dimensions.
    pub fn on_axis(t: f64, z: f64, d: usize) -> Self {
        let mut x = vec![0.0; d.max(1)];
        x[d.max(1) - 1] = z;
        Self { t, x }
    }

    pub fn origin(d: usize) -> Self {
        Self {
            t: 0.0,
            x: vec![0.0; d],
        }
    }

    pub fn d(&self) -> usize {
        self.x.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::invalid("spatial dimension must be at least 1"));
        }
        if !self.t.is_finite() || self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coordinates must be finite"));
        }
        Ok(())
    }

    pub fn translate(&self, dt: f64, dx: &[f64]) -> Self {
        Self {
            t: self.t + dt,
            x: self.x.iter().zip(dx).map(|(a, b)| a + b).collect(),
        }
    }

    /// Displacement `other - self` as (Δt, |Δx|).
    fn separation(&self, other: &Self) -> Result<(f64, f64)> {
        check_dim(self.d(), other.d())?;
        let dist = self
            .x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        Ok((other.t - self.t, dist))
    }

    /// Minkowski square `-(Δt)² + |Δx|²` of `other - self`.
    pub fn interval_sq(&self, other: &Self) -> Result<f64> {
        let (dt, dx) = self.separation(other)?;
        Ok(-dt * dt + dx * dx)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CausalClass {
    Timelike,
    Null,
    Spacelike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDirection {
    Future,
    Past,
    Simultaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalClass {
    pub class: CausalClass,
    pub direction: TimeDirection,
}

/// Classifies `Y - X` by the sign of `-(ΔT)² + |Δx|²`.
pub fn classify_interval(x: &SpacetimePoint, y: &SpacetimePoint) -> Result<IntervalClass> {
    let (dt, dx) = x.separation(y)?;
    let (t2, x2) = (dt * dt, dx * dx);
    let class = if (t2 - x2).abs() <= TOL_GEOM * (t2 + x2).max(1.0) {
        CausalClass::Null
    } else if t2 > x2 {
        CausalClass::Timelike
    } else {
        CausalClass::Spacelike
    };
    let direction = if dt > 0.0 {
        TimeDirection::Future
    } else if dt < 0.0 {
        TimeDirection::Past
    } else {
        TimeDirection::Simultaneous
    };
    Ok(IntervalClass { class, direction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RegionKind {
    Ball { center: SpacetimePoint, radius: f64 },
    Slab { t0: f64, t1: f64 },
    Point { center: SpacetimePoint },
}

/// Closed intervention region. Balls are Euclidean balls in (t, x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    #[serde(default)]
    pub label: String,
    #[serde(flatten)]
    pub kind: RegionKind,
}

impl Region {
    pub fn ball(label: &str, center: SpacetimePoint, radius: f64) -> Self {
        Self {
            label: label.into(),
            kind: RegionKind::Ball { center, radius },
        }
    }

    pub fn slab(label: &str, t0: f64, t1: f64) -> Self {
        Self {
            label: label.into(),
            kind: RegionKind::Slab { t0, t1 },
        }
    }

    pub fn point(label: &str, center: SpacetimePoint) -> Self {
        Self {
            label: label.into(),
            kind: RegionKind::Point { center },
        }
    }

    /// Spatial dimension, if the region carries a center.
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            RegionKind::Ball { center, .. } | RegionKind::Point { center } => Some(center.d()),
            RegionKind::Slab { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            RegionKind::Ball { center, radius } => {
                center.validate()?;
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::invalid(format!(
                        "region '{}': ball radius must be positive",
                        self.label
                    )));
                }
            }
            RegionKind::Slab { t0, t1 } => {
                if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
                    return Err(Error::invalid(format!(
                        "region '{}': slab requires finite t0 < t1",
                        self.label
                    )));
                }
            }
            RegionKind::Point { center } => center.validate()?,
        }
        Ok(())
    }

    fn time_range(&self) -> (f64, f64) {
        match &self.kind {
            RegionKind::Ball { center, radius } => (center.t - radius, center.t + radius),
            RegionKind::Slab { t0, t1 } => (*t0, *t1),
            RegionKind::Point { center } => (center.t, center.t),
        }
    }

    fn compact(&self) -> Option<(&SpacetimePoint, f64)> {
        match &self.kind {
            RegionKind::Ball { center, radius } => Some((center, *radius)),
            RegionKind::Point { center } => Some((center, 0.0)),
            RegionKind::Slab { .. } => None,
        }
    }
}

fn check_pair(a: &Region, b: &Region) -> Result<()> {
    if let (Some(da), Some(db)) = (a.dim(), b.dim()) {
        check_dim(da, db)?;
    }
    Ok(())
}

fn scale(dt: f64, s: f64, r: f64) -> f64 {
    TOL_GEOM * (dt.abs() + s + r).max(1.0)
}

/// Euclidean distance in the (τ, ρ) half plane from (dt, s) to the closed
/// future cone `τ ≥ ρ`.
fn distance_to_future_cone(dt: f64, s: f64) -> f64 {
    if dt >= s {
        0.0
    } else if dt >= -s {
        (s - dt) / std::f64::consts::SQRT_2
    } else {
        dt.hypot(s)
    }
}

/// True iff some point of `a` lies in the causal past of some point of `b`.
pub fn region_precedes(a: &Region, b: &Region) -> Result<bool> {
    check_pair(a, b)?;
    Ok(match (a.compact(), b.compact()) {
        (Some((ca, ra)), Some((cb, rb))) => {
            // b - a ranges over the ball of radius ra + rb around cb - ca;
            // it must meet the closed future cone.
            let (dt, s) = ca.separation(cb)?;
            let r = ra + rb;
            distance_to_future_cone(dt, s) <= r + scale(dt, s, r)
        }
        (None, _) => {
            // Slab points reach any event at or after the slab's start.
            let (t0, _) = a.time_range();
            let (_, sup_b) = b.time_range();
            sup_b >= t0 - TOL_GEOM * t0.abs().max(1.0)
        }
        (Some(_), None) => {
            let (inf_a, _) = a.time_range();
            let (_, t1) = b.time_range();
            inf_a <= t1 + TOL_GEOM * t1.abs().max(1.0)
        }
    })
}

/// True iff every point of `a` is in the causal past of every point of `b`.
pub fn region_fully_precedes(a: &Region, b: &Region) -> Result<bool> {
    check_pair(a, b)?;
    Ok(match (a.compact(), b.compact()) {
        (Some((ca, ra)), Some((cb, rb))) => {
            let (dt, s) = ca.separation(cb)?;
            let r = ra + rb;
            dt - s - r * std::f64::consts::SQRT_2 >= -scale(dt, s, r)
        }
        // A slab is spatially unbounded, so it contains points spacelike to
        // any bounded region and to other slabs.
        _ => false,
    })
}

/// True iff no point of `a` is causally related to any point of `b`.
pub fn regions_spacelike(a: &Region, b: &Region) -> Result<bool> {
    Ok(!region_precedes(a, b)? && !region_precedes(b, a)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalOrderResult {
    /// `relation[j][k]` is true iff region j ≼ region k after closure.
    pub relation: Vec<Vec<bool>>,
    pub acyclic: bool,
    pub linear_extension: Option<Vec<usize>>,
}

pub fn raw_relation(regions: &[Region]) -> Result<Vec<Vec<bool>>> {
    validate_collection(regions)?;
    let n = regions.len();
    let mut rel = vec![vec![false; n]; n];
    for j in 0..n {
        for k in 0..n {
            rel[j][k] = j == k || region_precedes(&regions[j], &regions[k])?;
        }
    }
    Ok(rel)
}

/// Warshall transitive closure.
pub fn transitive_closure(rel: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let mut c = rel.to_vec();
    let n = c.len();
    for m in 0..n {
        for j in 0..n {
            if c[j][m] {
                for k in 0..n {
                    if c[m][k] {
                        c[j][k] = true;
                    }
                }
            }
        }
    }
    c
}

fn is_antisymmetric(rel: &[Vec<bool>]) -> Option<(usize, usize)> {
    let n = rel.len();
    for j in 0..n {
        for k in (j + 1)..n {
            if rel[j][k] && rel[k][j] {
                return Some((j, k));
            }
        }
    }
    None
}

fn is_transitive(rel: &[Vec<bool>]) -> Option<(usize, usize)> {
    let closed = transitive_closure(rel);
    let n = rel.len();
    for j in 0..n {
        for k in 0..n {
            if closed[j][k] && !rel[j][k] {
                return Some((j, k));
            }
        }
    }
    None
}

/// Kahn's algorithm, always taking the lowest-index available region.
fn stable_topological_sort(rel: &[Vec<bool>]) -> Option<Vec<usize>> {
    let n = rel.len();
    let mut indegree: Vec<usize> = (0..n)
        .map(|k| (0..n).filter(|&j| j != k && rel[j][k]).count())
        .collect();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n).find(|&k| !placed[k] && indegree[k] == 0)?;
        placed[next] = true;
        order.push(next);
        for k in 0..n {
            if k != next && rel[next][k] {
                indegree[k] -= 1;
            }
        }
    }
    Some(order)
}

fn validate_collection(regions: &[Region]) -> Result<()> {
    if regions.is_empty() {
        return Err(Error::invalid("region list is empty"));
    }
    let mut dim = None;
    for r in regions {
        r.validate()?;
        if let Some(d) = r.dim() {
            match dim {
                None => dim = Some(d),
                Some(d0) => check_dim(d0, d)?,
            }
        }
    }
    Ok(())
}

pub fn causal_order(regions: &[Region]) -> Result<CausalOrderResult> {
    let raw = raw_relation(regions)?;
    let relation = transitive_closure(&raw);
    let acyclic = is_antisymmetric(&relation).is_none();
    let linear_extension = if acyclic {
        stable_topological_sort(&relation)
    } else {
        None
    };
    Ok(CausalOrderResult {
        relation,
        acyclic,
        linear_extension,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionRule {
    /// The raw precedence relation must already be a partial order.
    PartialOrderBeforeClosure,
    /// Every labelled pair is entirely spacelike or fully ordered.
    PairwiseSpacelikeOrFullyOrdered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionVerdict {
    pub rule: RestrictionRule,
    pub pass: bool,
    /// Raw relation antisymmetric (rule 1 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antisymmetric: Option<bool>,
    /// Raw relation transitive (rule 1 only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transitive: Option<bool>,
    /// Offending pair of input indices, if any.
    pub offending_pair: Option<(usize, usize)>,
    pub reason: Option<String>,
}

/// Checks a restriction rule. Rule 1 requires the raw relation to be a
/// partial order, so both antisymmetry and transitivity must hold; both are
/// reported. Rule 2 is checked on the pairs of the stable linear extension.
pub fn validate_restriction(regions: &[Region], rule: RestrictionRule) -> Result<RestrictionVerdict> {
    match rule {
        RestrictionRule::PartialOrderBeforeClosure => {
            let raw = raw_relation(regions)?;
            let anti = is_antisymmetric(&raw);
            let trans = is_transitive(&raw);
            let (offending_pair, reason) = match (anti, trans) {
                (Some(p), _) => (Some(p), Some("mutual precedence before closure".to_string())),
                (None, Some(p)) => (
                    Some(p),
                    Some("pair ordered only through the transitive closure".to_string()),
                ),
                (None, None) => (None, None),
            };
            Ok(RestrictionVerdict {
                rule,
                pass: offending_pair.is_none(),
                antisymmetric: Some(anti.is_none()),
                transitive: Some(trans.is_none()),
                offending_pair,
                reason,
            })
        }
        RestrictionRule::PairwiseSpacelikeOrFullyOrdered => {
            let order = causal_order(regions)?;
            let labels = match &order.linear_extension {
                Some(l) => l.clone(),
                None => {
                    return Ok(RestrictionVerdict {
                        rule,
                        pass: false,
                        antisymmetric: None,
                        transitive: None,
                        offending_pair: None,
                        reason: Some("no compatible labelling exists".into()),
                    })
                }
            };
            for (pos, &j) in labels.iter().enumerate() {
                for &k in &labels[pos + 1..] {
                    let (a, b) = (&regions[j], &regions[k]);
                    if !(regions_spacelike(a, b)? || region_fully_precedes(a, b)?) {
                        return Ok(RestrictionVerdict {
                            rule,
                            pass: false,
                            antisymmetric: None,
                            transitive: None,
                            offending_pair: Some((j, k)),
                            reason: Some("neither entirely spacelike nor fully ordered".into()),
                        });
                    }
                }
            }
            Ok(RestrictionVerdict {
                rule,
                pass: true,
                antisymmetric: None,
                transitive: None,
                offending_pair: None,
                reason: None,
            })
        }
    }
}

/// JSON document `{"d": int, "regions": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDocument {
    pub d: usize,
    pub regions: Vec<Region>,
}

impl RegionDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d must be at least 1"));
        }
        validate_collection(&self.regions)?;
        for r in &self.regions {
            if let Some(d) = r.dim() {
                check_dim(self.d, d)?;
            }
        }
        Ok(())
    }
}
