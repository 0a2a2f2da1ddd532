//! Limit-curve extraction (Arzelà–Ascoli at desk scale) and the upper
//! semi-continuity harness for the Lorentzian length functional.
//!
//! Extraction samples every family member on a dyadic parameter grid and
//! estimates the limit pointwise. When the tail gaps decay monotonically the
//! limit is extrapolated from the last three members under a power-law decay
//! model (exact for families of the form `base + k^{-s}·pattern`); otherwise
//! the last member stands in. The reported subsequence is the lowest-index
//! chain with non-increasing gaps.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::curve::{canonicalize, is_causal, lorentz_length, sup_distance, CausalCurve, CausalVerdict, Orientation, ParamKind};
use crate::error::{CausalityError, Result};
use crate::geom::{ChartDomain, MetricField};

/// Dyadic sampling depth for extraction (2^depth + 1 parameter nodes).
const DYADIC_DEPTH: u32 = 8;

/// Widening ladder used to certify the limit causal.
pub const LIMIT_EPS_LADDER: [f64; 3] = [0.1, 0.01, 0.001];

/// Cone-boundary tolerance for the direct causality verdict of an extracted
/// limit: pointwise extrapolation leaves roughly this much slope noise.
pub const EXTRACTION_NOISE_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtractMode {
    /// All members canonical on [0,1] with a shared Lipschitz bound.
    FixedInterval,
    /// Members reach the chart horizon; start points must accumulate.
    Inextendible,
}

#[derive(Clone, Debug)]
pub struct LimitResult {
    /// Indices into the input family, lowest-index non-increasing-gap chain.
    pub subsequence: Vec<usize>,
    pub limit: CausalCurve,
    /// ρ-distance of each subsequence member to the limit.
    pub sup_gaps: Vec<f64>,
    /// Causality of the limit under `widen(g, ε)` for the ε ladder.
    pub ladder_verdicts: Vec<(f64, bool)>,
    pub causality: CausalVerdict,
}

/// Extract a limit curve from a family of causal curves.
pub fn extract_limit_curve(
    g: &MetricField,
    family: &[CausalCurve],
    mode: ExtractMode,
    lip_bound: f64,
    tol: f64,
) -> Result<LimitResult> {
    if family.len() < 2 {
        return Err(CausalityError::EmptySamples("limit extraction needs >= 2 curves".into()));
    }
    let mut members: Vec<CausalCurve> = Vec::with_capacity(family.len());
    match mode {
        ExtractMode::FixedInterval => {
            for c in family {
                let k = if c.kind == ParamKind::Proportional { c.clone() } else { canonicalize(c)? };
                if k.lipschitz() > lip_bound * (1.0 + 1e-9) {
                    return Err(CausalityError::LipschitzUnbounded { found: k.lipschitz(), bound: lip_bound });
                }
                members.push(k);
            }
        }
        ExtractMode::Inextendible => {
            let start = family[0].start().to_vec();
            for c in family {
                let d = c.domain.dist_h(c.start(), &start);
                if d > tol {
                    return Err(CausalityError::NoAccumulation(format!(
                        "start point {:?} is {d} from {:?} (tol {tol})",
                        c.start(),
                        start
                    )));
                }
            }
            // Compare on the common h-arclength interval, proportionally.
            let min_len = family.iter().map(|c| c.h_length()).fold(f64::INFINITY, f64::min);
            for c in family {
                let truncated = truncate_to_arclength(c, min_len)?;
                let k = canonicalize(&truncated)?;
                if k.lipschitz() > lip_bound * (1.0 + 1e-9) {
                    return Err(CausalityError::LipschitzUnbounded { found: k.lipschitz(), bound: lip_bound });
                }
                members.push(k);
            }
        }
    }

    let n = members.len();
    let samples = (1usize << DYADIC_DEPTH) + 1;
    let params: Vec<f64> = (0..samples).map(|i| i as f64 / (samples - 1) as f64).collect();

    // Tail gaps between consecutive members decide whether extrapolation is
    // justified.
    let mut consecutive = Vec::with_capacity(n - 1);
    for w in members.windows(2) {
        consecutive.push(sup_distance(&w[0], &w[1])?);
    }
    let tail = consecutive.len().min(4);
    let tail_gaps = &consecutive[consecutive.len() - tail..];
    let monotone = tail_gaps.windows(2).all(|w| w[1] <= w[0] + 1e-15) && tail_gaps[tail - 1] > 1e-14;

    let limit = if monotone && n >= 3 {
        let idx = [n - 3, n - 2, n - 1];
        let curves: Vec<&CausalCurve> = idx.iter().map(|&i| &members[i]).collect();
        let ks: Vec<f64> = idx.iter().map(|&i| (i + 1) as f64).collect();
        let mut vertices = Vec::with_capacity(samples);
        for &t in &params {
            let xs: Vec<Vec<f64>> = curves.iter().map(|c| c.point_at(t)).collect();
            let mut p = Vec::with_capacity(g.dim());
            for d in 0..g.dim() {
                p.push(power_law_extrapolate(
                    [xs[0][d], xs[1][d], xs[2][d]],
                    [ks[0], ks[1], ks[2]],
                ));
            }
            vertices.push(p);
        }
        polyline_from_samples(g.domain.clone(), vertices, members[n - 1].orientation)?
    } else {
        members[n - 1].clone()
    };
    let limit = canonicalize(&limit)?;

    // Lowest-index chain with non-increasing gaps.
    let mut subsequence = Vec::new();
    let mut sup_gaps = Vec::new();
    let mut last = f64::INFINITY;
    for (i, m) in members.iter().enumerate() {
        let gap = sup_distance(m, &limit)?;
        if gap <= last + 1e-15 {
            subsequence.push(i);
            sup_gaps.push(gap);
            last = gap;
        }
    }

    let mut ladder_verdicts = Vec::new();
    for &eps in &LIMIT_EPS_LADDER {
        let wider = g.widen(eps);
        ladder_verdicts.push((eps, is_causal(&limit, &wider, tol.max(1e-9), 4)?.is_causal()));
    }
    // Null limits sit exactly on the cone boundary; the direct verdict gets
    // an extraction-noise floor, while the widening ladder above carries the
    // sharp certification.
    let causality = is_causal(&limit, g, tol.max(EXTRACTION_NOISE_TOL), 4)?;

    Ok(LimitResult { subsequence, limit, sup_gaps, ladder_verdicts, causality })
}

/// Pointwise limit under the decay model `x_k = L + c·k^{-s}`, solved from
/// the last three samples; falls back to the newest sample when the
/// differences do not contract.
fn power_law_extrapolate(x: [f64; 3], k: [f64; 3]) -> f64 {
    let d1 = x[1] - x[0];
    let d2 = x[2] - x[1];
    if d1.abs() < 1e-14 || d2.abs() < 1e-14 || d1.signum() != d2.signum() || d2.abs() >= d1.abs() {
        return x[2];
    }
    let target = d2 / d1;
    let ratio = |s: f64| (k[2].powf(-s) - k[1].powf(-s)) / (k[1].powf(-s) - k[0].powf(-s));
    // ratio(s) is monotone in s on [0.05, 12] for increasing k; bisect.
    let (mut lo, mut hi) = (0.05f64, 12.0f64);
    let (rlo, rhi) = (ratio(lo), ratio(hi));
    if (target - rlo) * (target - rhi) > 0.0 {
        return x[2];
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ((ratio(mid) - target) * (rlo - target)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    let c = d1 / (k[1].powf(-s) - k[0].powf(-s));
    x[2] - c * k[2].powf(-s)
}

/// Rebuild a polyline from dense samples, dropping coincident consecutive
/// points.
fn polyline_from_samples(
    domain: Arc<ChartDomain>,
    samples: Vec<Vec<f64>>,
    orientation: Orientation,
) -> Result<CausalCurve> {
    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    for p in samples {
        if vertices.last().map(|q| domain.dist_h(q, &p) > 1e-13).unwrap_or(true) {
            vertices.push(p);
        }
    }
    if vertices.len() < 2 {
        return Err(CausalityError::ZeroLengthCurve);
    }
    CausalCurve::from_vertices(domain, vertices, orientation)
}

/// Initial sub-curve of the given h-arclength.
pub fn truncate_to_arclength(curve: &CausalCurve, target: f64) -> Result<CausalCurve> {
    if target <= 0.0 {
        return Err(CausalityError::ZeroLengthCurve);
    }
    let arc = crate::curve::h_arclength_reparam(curve)?;
    if target >= arc.h_length() - 1e-12 {
        return Ok(arc);
    }
    let mut vertices = Vec::new();
    let mut params = Vec::new();
    for (v, &t) in arc.vertices.iter().zip(arc.params.iter()) {
        if t < target - 1e-12 {
            vertices.push(v.clone());
            params.push(t);
        } else {
            break;
        }
    }
    let endpoint = arc.point_at(target);
    vertices.push(endpoint);
    params.push(target);
    CausalCurve::new(arc.domain.clone(), vertices, params, ParamKind::ArcLength, arc.orientation)
}

// ---------------------------------------------------------------------------
// Upper semi-continuity harness
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum UscOutcome {
    Holds {
        /// `L(limit) + tol − limsup L(γ_k)`.
        margin: f64,
        /// Per-δ widening chain values `L_{widen(g,δ)}(limit) + Lip·√δ`.
        chain: Vec<(f64, f64)>,
    },
    Fails {
        /// Index of the family member exceeding the bound.
        witness: usize,
        excess: f64,
    },
}

impl UscOutcome {
    pub fn holds(&self) -> bool {
        matches!(self, UscOutcome::Holds { .. })
    }
}

/// Check `limsup_k L(γ_k) ≤ L(limit) + tol`, with the limsup estimated from
/// the tail max, and report the widening-chain upper bounds on `L(limit)`.
pub fn verify_usc(
    g: &MetricField,
    family: &[CausalCurve],
    limit: &CausalCurve,
    tol: f64,
) -> Result<UscOutcome> {
    if family.is_empty() {
        return Err(CausalityError::EmptySamples("u.s.c. family is empty".into()));
    }
    let limit_c = if limit.kind == ParamKind::Proportional { limit.clone() } else { canonicalize(limit)? };
    // Convergence in ρ: tail gap must have shrunk below the head gap scale.
    let mut gaps = Vec::with_capacity(family.len());
    for c in family {
        let k = if c.kind == ParamKind::Proportional { c.clone() } else { canonicalize(c)? };
        gaps.push(sup_distance(&k, &limit_c)?);
    }
    let first = gaps[0];
    let last = *gaps.last().unwrap();
    if last > (0.5 * first).max(1e-6) {
        return Err(CausalityError::NotConvergent(format!(
            "tail sup-gap {last} has not shrunk from head gap {first}"
        )));
    }

    let l_limit = lorentz_length(&limit_c, g, 8);
    let tail = family.len().min(((family.len() + 3) / 4).max(3));
    let mut limsup = f64::NEG_INFINITY;
    let mut witness = 0;
    for (i, c) in family.iter().enumerate().skip(family.len() - tail) {
        let l = lorentz_length(c, g, 8);
        if l > limsup {
            limsup = l;
            witness = i;
        }
    }

    // Widening chain: each entry must dominate L(limit).
    let mut chain = Vec::new();
    for &delta in &LIMIT_EPS_LADDER {
        let wider = g.widen(delta);
        let bound = lorentz_length(&limit_c, &wider, 8) + limit_c.lipschitz() * delta.sqrt();
        chain.push((delta, bound));
    }

    if limsup <= l_limit + tol {
        Ok(UscOutcome::Holds { margin: l_limit + tol - limsup, chain })
    } else {
        Ok(UscOutcome::Fails { witness, excess: limsup - (l_limit + tol) })
    }
}

// ---------------------------------------------------------------------------
// Family generators (test corpus)
// ---------------------------------------------------------------------------

/// Null-staircase zigzag around the null diagonal from the origin: in null
/// coordinates (u,v) = (t−x, t+x) the curve runs along v with `legs` small
/// forward u-jumps of total size `amplitude`, so it is causal, stays within
/// `amplitude` of the diagonal, and depends linearly on `amplitude`.
pub fn null_staircase_zigzag(
    domain: Arc<ChartDomain>,
    v_run: f64,
    amplitude: f64,
    legs: usize,
) -> Result<CausalCurve> {
    let legs = legs.max(1);
    let mut vertices = vec![vec![0.0, 0.0]];
    let mut u = 0.0;
    let mut v = 0.0;
    for j in 0..legs {
        v += v_run / legs as f64;
        vertices.push(vec![0.5 * (u + v), 0.5 * (v - u)]);
        if j + 1 < legs {
            u += amplitude / (legs - 1).max(1) as f64;
            vertices.push(vec![0.5 * (u + v), 0.5 * (v - u)]);
        }
    }
    CausalCurve::from_vertices(domain, vertices, Orientation::Future)
}

/// Amplitude-1/k zigzag family around the diagonal, k = 1..=k_max.
pub fn zigzag_family(domain: Arc<ChartDomain>, v_run: f64, k_max: usize, legs: usize) -> Result<Vec<CausalCurve>> {
    (1..=k_max)
        .map(|k| null_staircase_zigzag(domain.clone(), v_run, 1.0 / k as f64, legs))
        .collect()
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GapLine {
    index: usize,
    sup_gap: f64,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    causal: bool,
    verdict: &'a str,
    vertices: usize,
    ladder: Vec<(f64, bool)>,
}

/// JSON-lines rendering: one `{index, sup_gap}` object per subsequence
/// member, then a summary line.
pub fn limit_result_to_jsonl(r: &LimitResult) -> String {
    let mut s = String::new();
    for (&i, &gap) in r.subsequence.iter().zip(r.sup_gaps.iter()) {
        let line = serde_json::to_string(&GapLine { index: i, sup_gap: gap }).unwrap();
        let _ = writeln!(s, "{line}");
    }
    let verdict = match &r.causality {
        CausalVerdict::CausalFuture => "causal-future",
        CausalVerdict::CausalPast => "causal-past",
        CausalVerdict::Violation { .. } => "violation",
    };
    let summary = serde_json::to_string(&SummaryLine {
        causal: r.causality.is_causal(),
        verdict,
        vertices: r.limit.vertices.len(),
        ladder: r.ladder_verdicts.clone(),
    })
    .unwrap();
    let _ = writeln!(s, "{summary}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::hausdorff_distance;

    fn chart2() -> Arc<ChartDomain> {
        Arc::new(ChartDomain::new_box(vec![(-2.0, 2.0), (-2.0, 2.0)]).unwrap())
    }

    fn eta2() -> MetricField {
        MetricField::minkowski(chart2())
    }

    fn diagonal() -> CausalCurve {
        canonicalize(
            &CausalCurve::segment(chart2(), vec![0.0, 0.0], vec![1.0, 1.0], Orientation::Future).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zigzags_are_causal_and_close_to_diagonal() {
        let g = eta2();
        let family = zigzag_family(chart2(), 2.0, 16, 8).unwrap();
        for (k, c) in family.iter().enumerate() {
            assert!(is_causal(c, &g, 1e-9, 4).unwrap().is_causal());
            let d = hausdorff_distance(c, &diagonal());
            assert!(d <= 1.0 / (k + 1) as f64 + 1e-12, "k={} d={}", k + 1, d);
        }
    }

    #[test]
    fn zigzag_family_limit_is_diagonal() {
        let g = eta2();
        let family = zigzag_family(chart2(), 2.0, 64, 8).unwrap();
        let result = extract_limit_curve(&g, &family, ExtractMode::FixedInterval, 10.0, 1e-9).unwrap();
        let rho = sup_distance(&result.limit, &diagonal()).unwrap();
        assert!(rho <= 1e-3, "limit is {rho} from the diagonal");
        assert!(result.causality.is_causal());
        for (eps, ok) in &result.ladder_verdicts {
            assert!(ok, "limit not causal under widening {eps}");
        }
        // Gaps along the subsequence are non-increasing and bounded by 1/k.
        for (i, (&idx, &gap)) in result.subsequence.iter().zip(result.sup_gaps.iter()).enumerate() {
            assert!(gap <= 1.0 / (idx + 1) as f64 + 1e-9);
            if i > 0 {
                assert!(gap <= result.sup_gaps[i - 1] + 1e-15);
            }
        }
    }

    #[test]
    fn constant_family_limit_is_member() {
        let g = eta2();
        let gamma = diagonal();
        let family = vec![gamma.clone(), gamma.clone(), gamma.clone(), gamma.clone()];
        let result = extract_limit_curve(&g, &family, ExtractMode::FixedInterval, 10.0, 1e-9).unwrap();
        assert_eq!(result.subsequence, vec![0, 1, 2, 3]);
        assert!(sup_distance(&result.limit, &gamma).unwrap() < 1e-12);
    }

    #[test]
    fn lipschitz_bound_enforced() {
        let g = eta2();
        let family = zigzag_family(chart2(), 2.0, 8, 8).unwrap();
        match extract_limit_curve(&g, &family, ExtractMode::FixedInterval, 0.1, 1e-9) {
            Err(CausalityError::LipschitzUnbounded { .. }) => {}
            other => panic!("expected Lipschitz error, got {other:?}"),
        }
    }

    #[test]
    fn no_accumulation_rejected() {
        let g = eta2();
        let c1 = CausalCurve::segment(chart2(), vec![0.0, 0.0], vec![1.0, 0.0], Orientation::Future).unwrap();
        let c2 = CausalCurve::segment(chart2(), vec![0.5, 0.5], vec![1.5, 0.5], Orientation::Future).unwrap();
        match extract_limit_curve(&g, &[c1, c2], ExtractMode::Inextendible, 10.0, 1e-6) {
            Err(CausalityError::NoAccumulation(_)) => {}
            other => panic!("expected accumulation error, got {other:?}"),
        }
    }

    #[test]
    fn usc_null_zigzags_to_null_diagonal() {
        // All lengths zero; equality holds.
        let g = eta2();
        let family = zigzag_family(chart2(), 2.0, 32, 8).unwrap();
        let out = verify_usc(&g, &family, &diagonal(), 1e-6).unwrap();
        assert!(out.holds());
    }

    #[test]
    fn usc_zigzags_to_timelike_chord_holds_with_margin() {
        // Null zigzags converging to the timelike chord (0,0)->(2,1): tail
        // lengths 0 <= sqrt(3); u.s.c. holds (and lower semicontinuity
        // visibly fails).
        let g = eta2();
        let chord = canonicalize(
            &CausalCurve::segment(chart2(), vec![0.0, 0.0], vec![2.0, 1.0], Orientation::Future).unwrap(),
        )
        .unwrap();
        // Null zigzags around the chord: per pair, a slope +1 leg of
        // t-extent 1.5/k then a slope -1 leg of t-extent 0.5/k, so the
        // average slope is 1/2 and every leg is null.
        let mut family = Vec::new();
        for k in 1..=24usize {
            let mut vertices = vec![vec![0.0, 0.0]];
            let (mut t, mut x) = (0.0, 0.0);
            for _ in 0..k {
                t += 1.5 / k as f64;
                x += 1.5 / k as f64;
                vertices.push(vec![t, x]);
                t += 0.5 / k as f64;
                x -= 0.5 / k as f64;
                vertices.push(vec![t, x]);
            }
            let c = CausalCurve::from_vertices(chart2(), vertices, Orientation::Future).unwrap();
            assert!(is_causal(&c, &g, 1e-9, 4).unwrap().is_causal(), "k={k}");
            assert!(lorentz_length(&c, &g, 4) < 1e-6);
            family.push(canonicalize(&c).unwrap());
        }
        match verify_usc(&g, &family, &chord, 1e-6).unwrap() {
            UscOutcome::Holds { margin, chain } => {
                assert!(margin > 1.0, "expected large margin, got {margin}");
                let l_limit = lorentz_length(&chord, &g, 8);
                for (_, bound) in chain {
                    assert!(bound >= l_limit - 1e-9);
                }
            }
            other => panic!("expected holds, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_output_shape() {
        let g = eta2();
        let family = zigzag_family(chart2(), 2.0, 8, 8).unwrap();
        let result = extract_limit_curve(&g, &family, ExtractMode::FixedInterval, 10.0, 1e-9).unwrap();
        let text = limit_result_to_jsonl(&result);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), result.subsequence.len() + 1);
        for l in &lines {
            let _: serde_json::Value = serde_json::from_str(l).unwrap();
        }
    }
}
