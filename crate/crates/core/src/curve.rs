//! Causal curves as polylines: causality verification, the canonical
//! h-arclength and proportional parametrizations, Lorentzian/Riemannian
//! length functionals, and the two curve-space metrics ρ (sup) and d
//! (Hausdorff on images).

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{CausalityError, Result};
use crate::geom::{BoxRegion, ChartDomain, MetricField};

/// 8-point Gauss–Legendre nodes/weights on [-1, 1].
const GL8_NODES: [f64; 8] = [
    -0.9602898564975363,
    -0.7966664774136267,
    -0.525532409916329,
    -0.1834346424956498,
    0.1834346424956498,
    0.525532409916329,
    0.7966664774136267,
    0.9602898564975363,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.1012285362903763,
    0.2223810344533745,
    0.3137066458778873,
    0.3626837833783620,
    0.3626837833783620,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Arbitrary strictly increasing parameter values.
    Generic,
    /// h-arclength on [0, L^h]: unit h-speed on every segment.
    ArcLength,
    /// Proportional to h-arclength on [0, 1]: constant h-speed L^h.
    Proportional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Future,
    Past,
}

/// A polyline curve in chart coordinates. On periodic charts the vertices
/// live in covering (unwrapped) coordinates; the chart wraps on membership
/// queries.
#[derive(Clone, Debug)]
pub struct CausalCurve {
    pub domain: Arc<ChartDomain>,
    pub vertices: Vec<Vec<f64>>,
    /// Strictly increasing parameter value per vertex.
    pub params: Vec<f64>,
    pub kind: ParamKind,
    pub orientation: Orientation,
    h_length: f64,
    lipschitz: f64,
}

impl CausalCurve {
    /// Build a curve with explicit parameter values.
    pub fn new(
        domain: Arc<ChartDomain>,
        vertices: Vec<Vec<f64>>,
        params: Vec<f64>,
        kind: ParamKind,
        orientation: Orientation,
    ) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(CausalityError::InvalidArgument("curve needs at least 2 vertices".into()));
        }
        if vertices.len() != params.len() {
            return Err(CausalityError::ParamMismatch(format!(
                "{} vertices but {} parameter values",
                vertices.len(),
                params.len()
            )));
        }
        for v in &vertices {
            if v.len() != domain.dim {
                return Err(CausalityError::InvalidArgument("vertex dimension mismatch".into()));
            }
            if !domain.contains(v) {
                return Err(CausalityError::OutsideDomain {
                    point: v.clone(),
                    detail: "curve vertex outside chart".into(),
                });
            }
        }
        for w in params.windows(2) {
            if !(w[1] > w[0]) {
                return Err(CausalityError::ParamMismatch("parameters not strictly increasing".into()));
            }
        }
        for pair in vertices.windows(2) {
            if pair[0] == pair[1] {
                return Err(CausalityError::InvalidArgument("consecutive vertices coincide".into()));
            }
        }
        let mut c = CausalCurve {
            domain,
            vertices,
            params,
            kind,
            orientation,
            h_length: 0.0,
            lipschitz: 0.0,
        };
        c.recache();
        Ok(c)
    }

    /// Curve from vertices alone, parametrized by vertex index.
    pub fn from_vertices(
        domain: Arc<ChartDomain>,
        vertices: Vec<Vec<f64>>,
        orientation: Orientation,
    ) -> Result<Self> {
        let params: Vec<f64> = (0..vertices.len()).map(|i| i as f64).collect();
        Self::new(domain, vertices, params, ParamKind::Generic, orientation)
    }

    /// Straight segment between two points.
    pub fn segment(domain: Arc<ChartDomain>, a: Vec<f64>, b: Vec<f64>, orientation: Orientation) -> Result<Self> {
        Self::from_vertices(domain, vec![a, b], orientation)
    }

    fn recache(&mut self) {
        let mut total = 0.0;
        let mut lip: f64 = 0.0;
        for i in 0..self.vertices.len() - 1 {
            let len = self.segment_h_length(i);
            total += len;
            lip = lip.max(len / (self.params[i + 1] - self.params[i]));
        }
        self.h_length = total;
        self.lipschitz = lip;
    }

    /// h-length of segment `i` in covering coordinates (raw displacement,
    /// not the minimal periodic image: the stored vertices are unwrapped).
    fn segment_h_length(&self, i: usize) -> f64 {
        let a = &self.vertices[i];
        let b = &self.vertices[i + 1];
        let d: Vec<f64> = b.iter().zip(a.iter()).map(|(x, y)| x - y).collect();
        let mid: Vec<f64> = a.iter().zip(d.iter()).map(|(x, v)| x + 0.5 * v).collect();
        self.domain.h_norm(&mid, &d)
    }

    pub fn h_length(&self) -> f64 {
        self.h_length
    }

    /// Empirical Lipschitz constant: max segment h-speed.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn start(&self) -> &[f64] {
        &self.vertices[0]
    }

    pub fn end(&self) -> &[f64] {
        self.vertices.last().unwrap()
    }

    pub fn param_range(&self) -> (f64, f64) {
        (self.params[0], *self.params.last().unwrap())
    }

    /// Point at parameter `t` (clamped to the parameter range).
    pub fn point_at(&self, t: f64) -> Vec<f64> {
        let n = self.params.len();
        if t <= self.params[0] {
            return self.vertices[0].clone();
        }
        if t >= self.params[n - 1] {
            return self.vertices[n - 1].clone();
        }
        let mut i = match self.params.binary_search_by(|p| p.partial_cmp(&t).unwrap()) {
            Ok(k) => return self.vertices[k].clone(),
            Err(k) => k - 1,
        };
        i = i.min(n - 2);
        let u = (t - self.params[i]) / (self.params[i + 1] - self.params[i]);
        self.vertices[i]
            .iter()
            .zip(self.vertices[i + 1].iter())
            .map(|(a, b)| a + u * (b - a))
            .collect()
    }

    /// Velocity on segment `i` with respect to the stored parametrization.
    pub fn segment_velocity(&self, i: usize) -> Vec<f64> {
        let dt = self.params[i + 1] - self.params[i];
        self.vertices[i + 1]
            .iter()
            .zip(self.vertices[i].iter())
            .map(|(b, a)| (b - a) / dt)
            .collect()
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Reverse the vertex order (and orientation tag), reindexing parameters.
    pub fn reversed(&self) -> CausalCurve {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        let (a, b) = self.param_range();
        let mut params: Vec<f64> = self.params.iter().map(|t| a + b - t).collect();
        params.reverse();
        let orientation = match self.orientation {
            Orientation::Future => Orientation::Past,
            Orientation::Past => Orientation::Future,
        };
        CausalCurve::new(self.domain.clone(), vertices, params, ParamKind::Generic, orientation)
            .expect("reversal preserves validity")
    }
}

// ---------------------------------------------------------------------------
// Reparametrization
// ---------------------------------------------------------------------------

/// Reparametrize by h-arclength on `[0, L^h]`; image preserved vertex for
/// vertex; idempotent.
pub fn h_arclength_reparam(curve: &CausalCurve) -> Result<CausalCurve> {
    if curve.h_length() <= 0.0 {
        return Err(CausalityError::ZeroLengthCurve);
    }
    let mut params = Vec::with_capacity(curve.vertices.len());
    let mut acc = 0.0;
    params.push(0.0);
    for i in 0..curve.segment_count() {
        acc += curve.segment_h_length(i);
        params.push(acc);
    }
    CausalCurve::new(curve.domain.clone(), curve.vertices.clone(), params, ParamKind::ArcLength, curve.orientation)
}

/// Canonical representative: constant h-speed `L^h` on `[0, 1]`. The output's
/// Lipschitz constant equals its h-length.
pub fn canonicalize(curve: &CausalCurve) -> Result<CausalCurve> {
    let arc = h_arclength_reparam(curve)?;
    let total = arc.h_length();
    let params: Vec<f64> = arc.params.iter().map(|t| t / total).collect();
    CausalCurve::new(arc.domain.clone(), arc.vertices, params, ParamKind::Proportional, arc.orientation)
}

// ---------------------------------------------------------------------------
// Causality verification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum CausalVerdict {
    CausalFuture,
    CausalPast,
    Violation {
        /// Worst sample point.
        point: Vec<f64>,
        /// `g(λ̇,λ̇)` at the worst sample.
        value: f64,
        /// Fraction of samples violating the cone condition.
        fraction: f64,
    },
}

impl CausalVerdict {
    pub fn is_causal(&self) -> bool {
        matches!(self, CausalVerdict::CausalFuture | CausalVerdict::CausalPast)
    }
}

/// Sampled causality check: `g(λ̇,λ̇) ≤ tol·scale` and a consistent time
/// orientation at `checks_per_segment` interior samples of every segment.
/// The tolerance is scaled by `max(1, g(λ̇,T)²)` so null curves pass exactly
/// in constant metrics.
pub fn is_causal(curve: &CausalCurve, g: &MetricField, tol: f64, checks_per_segment: usize) -> Result<CausalVerdict> {
    let checks = checks_per_segment.max(1);
    let mut worst_value = f64::NEG_INFINITY;
    let mut worst_point = Vec::new();
    let mut violations = 0usize;
    let mut future_votes = 0usize;
    let mut past_votes = 0usize;
    let mut total = 0usize;
    for i in 0..curve.segment_count() {
        let v = curve.segment_velocity(i);
        let t0 = curve.params[i];
        let t1 = curve.params[i + 1];
        for k in 0..checks {
            let t = t0 + (t1 - t0) * (k as f64 + 0.5) / checks as f64;
            let p = curve.point_at(t);
            let wp = curve.domain.wrap(&p);
            if !curve.domain.contains(&wp) {
                return Err(CausalityError::OutsideDomain { point: p, detail: "curve sample exits chart".into() });
            }
            let form = g.form_at(&wp);
            let q = form.quad(&v);
            let tdot = form.eval(&v, &g.time_at(&wp));
            let scale = tdot * tdot;
            total += 1;
            if q > tol * scale.max(1.0) {
                violations += 1;
                if q > worst_value {
                    worst_value = q;
                    worst_point = p;
                }
            } else if tdot < 0.0 {
                future_votes += 1;
            } else {
                past_votes += 1;
            }
        }
    }
    if violations > 0 {
        return Ok(CausalVerdict::Violation {
            point: worst_point,
            value: worst_value,
            fraction: violations as f64 / total as f64,
        });
    }
    // Mixed orientation along the curve is itself a violation.
    if future_votes > 0 && past_votes > 0 {
        return Ok(CausalVerdict::Violation {
            point: curve.vertices[0].clone(),
            value: 0.0,
            fraction: future_votes.min(past_votes) as f64 / total as f64,
        });
    }
    Ok(if past_votes > future_votes { CausalVerdict::CausalPast } else { CausalVerdict::CausalFuture })
}

// ---------------------------------------------------------------------------
// Length functionals
// ---------------------------------------------------------------------------

/// Lorentzian length: composite Gauss–Legendre quadrature of
/// `√(max(0, −g(λ̇,λ̇)))`, with `checks_per_segment` panels per segment.
/// Exact for straight segments in constant metrics.
pub fn lorentz_length(curve: &CausalCurve, g: &MetricField, checks_per_segment: usize) -> f64 {
    let panels = checks_per_segment.max(1);
    let mut total = 0.0;
    for i in 0..curve.segment_count() {
        let v = curve.segment_velocity(i);
        let t0 = curve.params[i];
        let t1 = curve.params[i + 1];
        let panel_w = (t1 - t0) / panels as f64;
        for p in 0..panels {
            let a = t0 + p as f64 * panel_w;
            let mut acc = 0.0;
            for (node, weight) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
                let t = a + 0.5 * panel_w * (node + 1.0);
                let x = curve.domain.wrap(&curve.point_at(t));
                let q = g.form_at(&x).quad(&v);
                acc += weight * (-q).max(0.0).sqrt();
            }
            total += 0.5 * panel_w * acc;
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Curve-space metrics
// ---------------------------------------------------------------------------

/// Common parameter sample set for the curve metrics: breakpoints of both
/// curves, their midpoints, and a uniform refinement.
fn shared_params(a: &CausalCurve, b: &CausalCurve, uniform: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = a.params.iter().chain(b.params.iter()).copied().collect();
    for k in 0..=uniform {
        ts.push(k as f64 / uniform as f64);
    }
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    let mut out = Vec::with_capacity(ts.len() * 2);
    for w in ts.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*ts.last().unwrap());
    out
}

/// Sup metric `ρ(a,b) = sup_t d^h(a(t), b(t))` for curves in proportional
/// parametrization; exact for polylines (the sup over each linear piece is
/// attained at a breakpoint of the common refinement).
pub fn sup_distance(a: &CausalCurve, b: &CausalCurve) -> Result<f64> {
    if a.kind != ParamKind::Proportional || b.kind != ParamKind::Proportional {
        return Err(CausalityError::ParamMismatch(
            "sup distance requires proportional parametrization on [0,1]".into(),
        ));
    }
    let mut sup: f64 = 0.0;
    for t in shared_params(a, b, 64) {
        sup = sup.max(a.domain.dist_h(&a.point_at(t), &b.point_at(t)));
    }
    Ok(sup)
}

/// Exact Euclidean distance from a point to a segment.
fn point_segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = b.iter().zip(a.iter()).map(|(x, y)| x - y).collect();
    let len2: f64 = d.iter().map(|v| v * v).sum();
    let mut t = 0.0;
    if len2 > 0.0 {
        t = p
            .iter()
            .zip(a.iter())
            .zip(d.iter())
            .map(|((pi, ai), di)| (pi - ai) * di)
            .sum::<f64>()
            / len2;
        t = t.clamp(0.0, 1.0);
    }
    p.iter()
        .zip(a.iter().zip(d.iter()))
        .map(|(pi, (ai, di))| {
            let q = ai + t * di;
            (pi - q) * (pi - q)
        })
        .sum::<f64>()
        .sqrt()
}

fn distance_to_image(p: &[f64], c: &CausalCurve) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..c.segment_count() {
        best = best.min(point_segment_distance(p, &c.vertices[i], &c.vertices[i + 1]));
    }
    best
}

/// Hausdorff distance between curve images: max of the two directed
/// distances, sampling each image at the shared parameter refinement and
/// measuring against the other polyline exactly (point-to-segment).
/// Invariant under reparametrization.
pub fn hausdorff_distance(a: &CausalCurve, b: &CausalCurve) -> f64 {
    let directed = |from: &CausalCurve, to: &CausalCurve| -> f64 {
        let mut sup: f64 = 0.0;
        for i in 0..from.segment_count() {
            let t0 = from.params[i];
            let t1 = from.params[i + 1];
            for k in 0..=16 {
                let t = t0 + (t1 - t0) * k as f64 / 16.0;
                sup = sup.max(distance_to_image(&from.point_at(t), to));
            }
        }
        sup
    };
    directed(a, b).max(directed(b, a))
}

// ---------------------------------------------------------------------------
// Regions and image membership
// ---------------------------------------------------------------------------

/// A region given as a union of boxes minus excluded boxes.
#[derive(Clone, Debug)]
pub struct Region {
    pub include: Vec<BoxRegion>,
    pub exclude: Vec<BoxRegion>,
}

impl Region {
    pub fn boxes(include: Vec<BoxRegion>) -> Self {
        Region { include, exclude: Vec::new() }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.include.iter().any(|b| b.contains(p)) && !self.exclude.iter().any(|b| b.contains(p))
    }
}

/// Image membership: every sampled image point lies in the region, and no
/// segment meets an excluded box (exact slab tests).
pub fn image_in_region(curve: &CausalCurve, region: &Region) -> bool {
    for i in 0..curve.segment_count() {
        let a = &curve.vertices[i];
        let b = &curve.vertices[i + 1];
        for ex in &region.exclude {
            if ex.intersects_segment(a, b) {
                return false;
            }
        }
        for k in 0..=16 {
            let t = k as f64 / 16.0;
            let p: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x + t * (y - x)).collect();
            if !region.contains(&p) {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// A family of causal curves sharing endpoints, stored canonically.
#[derive(Clone, Debug)]
pub struct CurveEnsemble {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub members: Vec<CausalCurve>,
}

impl CurveEnsemble {
    pub fn new(g: &MetricField, members: Vec<CausalCurve>, tol: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(CausalityError::EmptySamples("ensemble has no members".into()));
        }
        let p = members[0].start().to_vec();
        let q = members[0].end().to_vec();
        let mut canonical = Vec::with_capacity(members.len());
        for m in members {
            if m.start() != p.as_slice() || m.end() != q.as_slice() {
                return Err(CausalityError::InvalidArgument("ensemble member endpoints differ".into()));
            }
            let c = canonicalize(&m)?;
            if !is_causal(&c, g, tol, 4)?.is_causal() {
                return Err(CausalityError::InvalidArgument("ensemble member fails causality".into()));
            }
            canonical.push(c);
        }
        Ok(CurveEnsemble { p, q, members: canonical })
    }
}

// ---------------------------------------------------------------------------
// Curve file format
// ---------------------------------------------------------------------------

/// Serialize to the text format:
/// `curve n=<N> param=<generic|arclength|proportional> orient=<future|past>`
/// followed by `N` lines `s x0 x1 … x_{n-1}`.
pub fn curve_to_string(curve: &CausalCurve) -> String {
    let param = match curve.kind {
        ParamKind::Generic => "generic",
        ParamKind::ArcLength => "arclength",
        ParamKind::Proportional => "proportional",
    };
    let orient = match curve.orientation {
        Orientation::Future => "future",
        Orientation::Past => "past",
    };
    let mut s = format!("curve n={} param={} orient={}\n", curve.vertices.len(), param, orient);
    for (t, v) in curve.params.iter().zip(curve.vertices.iter()) {
        let _ = write!(s, "{t:.17e}");
        for x in v {
            let _ = write!(s, " {x:.17e}");
        }
        s.push('\n');
    }
    s
}

pub fn curve_from_str(domain: Arc<ChartDomain>, text: &str) -> Result<CausalCurve> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| CausalityError::Parse("empty curve file".into()))?;
    let mut n = None;
    let mut kind = None;
    let mut orient = None;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("curve") {
        return Err(CausalityError::Parse("curve header must start with 'curve'".into()));
    }
    for f in fields {
        let (key, val) = f
            .split_once('=')
            .ok_or_else(|| CausalityError::Parse(format!("malformed header field '{f}'")))?;
        match key {
            "n" => n = Some(val.parse::<usize>().map_err(|e| CausalityError::Parse(e.to_string()))?),
            "param" => {
                kind = Some(match val {
                    "generic" => ParamKind::Generic,
                    "arclength" => ParamKind::ArcLength,
                    "proportional" => ParamKind::Proportional,
                    other => return Err(CausalityError::Parse(format!("unknown param kind '{other}'"))),
                })
            }
            "orient" => {
                orient = Some(match val {
                    "future" => Orientation::Future,
                    "past" => Orientation::Past,
                    other => return Err(CausalityError::Parse(format!("unknown orientation '{other}'"))),
                })
            }
            other => return Err(CausalityError::Parse(format!("unknown header key '{other}'"))),
        }
    }
    let n = n.ok_or_else(|| CausalityError::Parse("missing n=".into()))?;
    let kind = kind.ok_or_else(|| CausalityError::Parse("missing param=".into()))?;
    let orient = orient.ok_or_else(|| CausalityError::Parse("missing orient=".into()))?;
    let mut params = Vec::with_capacity(n);
    let mut vertices = Vec::with_capacity(n);
    for line in lines {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| CausalityError::Parse(format!("bad number '{t}': {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != domain.dim + 1 {
            return Err(CausalityError::Parse(format!(
                "expected {} values per line, got {}",
                domain.dim + 1,
                vals.len()
            )));
        }
        params.push(vals[0]);
        vertices.push(vals[1..].to_vec());
    }
    if vertices.len() != n {
        return Err(CausalityError::Parse(format!("header says n={n} but {} rows found", vertices.len())));
    }
    CausalCurve::new(domain, vertices, params, kind, orient)
}

pub fn write_curve_file(curve: &CausalCurve, path: &Path) -> Result<()> {
    crate::scenario::atomic_write(path, curve_to_string(curve).as_bytes())
}

pub fn read_curve_file(domain: Arc<ChartDomain>, path: &Path) -> Result<CausalCurve> {
    let text = std::fs::read_to_string(path)?;
    curve_from_str(domain, &text)
}
