//! Time separation and maximal causal curves by the direct method:
//! multistart projected coordinate ascent over polylines with nested
//! refinement, ρ-ball maximality certificates, and the widened-metric
//! inequality chain for limits of maximizers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::curve::{canonicalize, is_causal, lorentz_length, sup_distance, CausalCurve, Orientation};
use crate::error::{CausalityError, Result};
use crate::geom::MetricField;
use crate::limit::{extract_limit_curve, ExtractMode};
use crate::reach::{future_reach, default_horizon, Grid, ReachMode};

/// Relative convergence threshold for refinement and ascent passes.
const GAIN_TOL: f64 = 1e-4;

/// Quadrature panels per segment inside the optimizer.
const PANELS: usize = 4;

// ---------------------------------------------------------------------------
// Causal projection
// ---------------------------------------------------------------------------

/// Scale the displacement `d` toward the future cone axis at `base + d/2`
/// until it is causal: bisection between `d` and its g-orthogonal projection
/// onto the time orientation. None if `d` has no future component.
pub(crate) fn project_displacement(g: &MetricField, base: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let mid: Vec<f64> = base.iter().zip(d.iter()).map(|(a, b)| a + 0.5 * b).collect();
    let wmid = g.domain.wrap(&mid);
    if !g.domain.contains(&wmid) {
        return None;
    }
    let form = g.form_at(&wmid);
    let tvec = g.time_at(&wmid);
    let tdot = form.eval(d, &tvec);
    if tdot >= 0.0 {
        return None; // not future directed
    }
    if form.quad(d) <= 0.0 {
        return Some(d.to_vec());
    }
    // Cone axis: g-orthogonal projection of d onto T (future timelike).
    let coeff = tdot / form.quad(&tvec);
    let axis: Vec<f64> = tvec.iter().map(|t| coeff * t).collect();
    let blend = |lam: f64| -> Vec<f64> {
        d.iter().zip(axis.iter()).map(|(di, ai)| (1.0 - lam) * di + lam * ai).collect()
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if form.quad(&blend(1.0)) > 0.0 {
        return None;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if form.quad(&blend(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(blend(hi))
}

/// Move an interior vertex so both adjacent segments are future causal,
/// alternating the two segment projections. None if projection fails.
fn project_vertex(g: &MetricField, a: &[f64], v: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let mut v = v.to_vec();
    for _ in 0..4 {
        let d1: Vec<f64> = v.iter().zip(a.iter()).map(|(x, y)| x - y).collect();
        let d1 = project_displacement(g, a, &d1)?;
        v = a.iter().zip(d1.iter()).map(|(x, y)| x + y).collect();
        let d2: Vec<f64> = b.iter().zip(v.iter()).map(|(x, y)| x - y).collect();
        let d2 = project_displacement(g, &v, &d2)?;
        v = b.iter().zip(d2.iter()).map(|(x, y)| x - y).collect();
    }
    // Final verification of both segments.
    let d1: Vec<f64> = v.iter().zip(a.iter()).map(|(x, y)| x - y).collect();
    let d2: Vec<f64> = b.iter().zip(v.iter()).map(|(x, y)| x - y).collect();
    let m1: Vec<f64> = a.iter().zip(d1.iter()).map(|(x, y)| x + 0.5 * y).collect();
    let m2: Vec<f64> = v.iter().zip(d2.iter()).map(|(x, y)| x + 0.5 * y).collect();
    let ok = |m: &[f64], d: &[f64]| -> bool {
        let w = g.domain.wrap(m);
        if !g.domain.contains(&w) {
            return false;
        }
        let f = g.form_at(&w);
        let n2: f64 = d.iter().map(|x| x * x).sum();
        f.quad(d) <= 1e-9 * n2 && f.eval(d, &g.time_at(&w)) < 0.0
    };
    if ok(&m1, &d1) && ok(&m2, &d2) {
        Some(v)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Polyline ascent
// ---------------------------------------------------------------------------

fn segment_length(g: &MetricField, a: &[f64], b: &[f64]) -> f64 {
    // Straight segment, unit parameter; GL panels over position dependence.
    const NODES: [f64; 4] = [0.069431844202973714, 0.33000947820757187, 0.66999052179242813, 0.93056815579702623];
    const WEIGHTS: [f64; 4] = [0.17392742256872692, 0.32607257743127305, 0.32607257743127305, 0.17392742256872692];
    let d: Vec<f64> = b.iter().zip(a.iter()).map(|(x, y)| x - y).collect();
    let mut acc = 0.0;
    for panel in 0..PANELS {
        for (t, w) in NODES.iter().zip(WEIGHTS.iter()) {
            let s = (panel as f64 + t) / PANELS as f64;
            let p: Vec<f64> = a.iter().zip(d.iter()).map(|(x, y)| x + s * y).collect();
            let q = g.form_at(&g.domain.wrap(&p)).quad(&d);
            acc += w * (-q).max(0.0).sqrt();
        }
    }
    acc / PANELS as f64
}

fn polyline_length(g: &MetricField, vertices: &[Vec<f64>]) -> f64 {
    vertices.windows(2).map(|w| segment_length(g, &w[0], &w[1])).sum()
}

fn vertices_blocked(g: &MetricField, a: &[f64], b: &[f64]) -> bool {
    g.domain.segment_hits_obstacle(a, b, 0.0)
}

/// One ascent pass over interior vertices: finite-difference gradient,
/// backtracking line search, causal projection. Returns the new length.
fn ascent_pass(g: &MetricField, vertices: &mut [Vec<f64>], step0: f64) -> f64 {
    let dim = g.dim();
    let n = vertices.len();
    for i in 1..n - 1 {
        let a = vertices[i - 1].clone();
        let b = vertices[i + 1].clone();
        let f = |v: &[f64]| segment_length(g, &a, v) + segment_length(g, v, &b);
        let v0 = vertices[i].clone();
        let f0 = f(&v0);
        // Central-difference gradient.
        let h = 1e-6 * (1.0 + step0);
        let mut grad = vec![0.0; dim];
        for d in 0..dim {
            let mut vp = v0.clone();
            vp[d] += h;
            let mut vm = v0.clone();
            vm[d] -= h;
            grad[d] = (f(&vp) - f(&vm)) / (2.0 * h);
        }
        let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm < 1e-14 {
            continue;
        }
        let mut step = step0;
        for _ in 0..8 {
            let cand: Vec<f64> = v0.iter().zip(grad.iter()).map(|(x, gr)| x + step * gr / gnorm).collect();
            if let Some(proj) = project_vertex(g, &a, &cand, &b) {
                let distinct = proj != a && proj != b;
                if distinct
                    && !vertices_blocked(g, &a, &proj)
                    && !vertices_blocked(g, &proj, &b)
                    && f(&proj) > f0 + 1e-15
                {
                    vertices[i] = proj;
                    break;
                }
            }
            step *= 0.5;
        }
    }
    polyline_length(g, vertices)
}

fn subdivide(vertices: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(vertices.len() * 2 - 1);
    for w in vertices.windows(2) {
        out.push(w[0].clone());
        out.push(w[0].iter().zip(w[1].iter()).map(|(a, b)| 0.5 * (a + b)).collect());
    }
    out.push(vertices.last().unwrap().clone());
    out
}

fn optimize_polyline(g: &MetricField, mut vertices: Vec<Vec<f64>>, segments: usize) -> (f64, Vec<Vec<f64>>) {
    let mut len = polyline_length(g, &vertices);
    loop {
        // Ascent passes at this refinement level.
        let scale = {
            let total: f64 = vertices
                .windows(2)
                .map(|w| g.domain.dist_h(&w[0], &w[1]))
                .sum();
            0.25 * total / (vertices.len() - 1) as f64
        };
        for _ in 0..40 {
            let new_len = ascent_pass(g, &mut vertices, scale);
            let gain = new_len - len;
            len = new_len;
            if gain < GAIN_TOL * len.max(1e-9) {
                break;
            }
        }
        if vertices.len() - 1 >= segments {
            break;
        }
        let refined = subdivide(&vertices);
        let refined_len = polyline_length(g, &refined);
        vertices = refined;
        let gain = refined_len - len;
        len = refined_len;
        if gain.abs() < GAIN_TOL * len.max(1e-9) && vertices.len() - 1 >= segments {
            break;
        }
    }
    (len, vertices)
}

// ---------------------------------------------------------------------------
// Time separation
// ---------------------------------------------------------------------------

/// Reach grid resolution used to pre-check causal relatedness of endpoints.
const RELATEDNESS_GRID: usize = 64;

/// True if `q` lies in the reach set up to a 2-cell inflation, so that
/// points exactly on the cone boundary are not rejected by the sampled
/// over-mode check.
fn reach_near(reach: &crate::reach::ReachSet, q: &[f64]) -> bool {
    if reach.contains_point(q) {
        return true;
    }
    let Some(idx) = reach.grid.locate(q) else { return false };
    let dim = idx.len();
    let mut off = vec![-2isize; dim];
    loop {
        if let Some(n) = reach.grid.offset_index(&idx, &off) {
            if reach.cells[reach.grid.flat(&n)] {
                return true;
            }
        }
        let mut d = 0;
        loop {
            if d == dim {
                return false;
            }
            off[d] += 1;
            if off[d] <= 2 {
                break;
            }
            off[d] = -2;
            d += 1;
        }
    }
}

/// Maximize Lorentzian length over causal polylines from `p` to `q`.
/// Restart 0 starts from the unjittered straight chord; later restarts
/// jitter the initial interior vertices with a seeded generator. Returns
/// `(tau, maximizer)` with the maximizer canonical on [0,1].
pub fn time_separation(
    p: &[f64],
    q: &[f64],
    g: &MetricField,
    segments: usize,
    restarts: usize,
    seed: u64,
) -> Result<(f64, CausalCurve)> {
    if segments < 2 {
        return Err(CausalityError::InvalidArgument("need at least 2 segments".into()));
    }
    let grid = Grid::over_domain(&g.domain, RELATEDNESS_GRID, 3)?;
    let reach = future_reach(p, g, &grid, ReachMode::Over, default_horizon(g))?;
    if !reach_near(&reach, q) {
        return Err(CausalityError::NotCausallyRelated(format!("{q:?} not in the sampled future of {p:?}")));
    }

    let initial_n = 4.min(segments);
    let chord = |jit: Option<&mut ChaCha8Rng>| -> Vec<Vec<f64>> {
        let mut vs: Vec<Vec<f64>> = (0..=initial_n)
            .map(|i| {
                let t = i as f64 / initial_n as f64;
                p.iter().zip(q.iter()).map(|(a, b)| a + t * (b - a)).collect()
            })
            .collect();
        if let Some(rng) = jit {
            let scale = 0.05 * g.domain.dist_h(p, q);
            for v in vs.iter_mut().take(initial_n).skip(1) {
                for x in v.iter_mut() {
                    *x += rng.gen_range(-scale..scale);
                }
            }
        }
        vs
    };

    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for r in 0..restarts.max(1) {
        let vertices = if r == 0 {
            chord(None)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let raw = chord(Some(&mut rng));
            // Project jittered vertices back into the cone.
            let mut vs = raw.clone();
            let mut feasible = true;
            for i in 1..vs.len() - 1 {
                let (head, tail) = vs.split_at_mut(i);
                let a = head[i - 1].clone();
                let b = tail[1].clone();
                match project_vertex(g, &a, &tail[0], &b) {
                    Some(pv) => tail[0] = pv,
                    None => {
                        feasible = false;
                        break;
                    }
                }
            }
            if !feasible {
                chord(None)
            } else {
                vs
            }
        };
        let (len, vs) = optimize_polyline(g, vertices, segments);
        let better = match &best {
            None => true,
            Some((bl, _)) => len > *bl + 1e-15,
        };
        if better {
            best = Some((len, vs));
        }
    }
    let (tau, vertices) = best.unwrap();
    // Deduplicate any coincident vertices the ascent produced.
    let mut dedup: Vec<Vec<f64>> = Vec::with_capacity(vertices.len());
    for v in vertices {
        if dedup.last().map(|u| u != &v).unwrap_or(true) {
            dedup.push(v);
        }
    }
    let curve = CausalCurve::from_vertices(g.domain.clone(), dedup, Orientation::Future)?;
    let curve = canonicalize(&curve)?;
    Ok((tau, curve))
}

// ---------------------------------------------------------------------------
// Maximality certificates
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MaximalityCertificate {
    pub curve: CausalCurve,
    pub radius: f64,
    /// Number of causal rivals actually generated.
    pub perturbations: usize,
    pub best_rival_length: f64,
    /// `L(curve) − best_rival_length`; ≥ −tol certifies local maximality.
    pub margin: f64,
    /// No causal perturbation was found (null-rigid curve).
    pub degenerate: bool,
}

/// Sample causal perturbations in the ρ-ball of the given radius (vertex
/// jitter, causal projection, pinned endpoints) and compare lengths.
pub fn maximality_certificate(
    curve: &CausalCurve,
    g: &MetricField,
    radius: f64,
    perturbations: usize,
    seed: u64,
) -> Result<MaximalityCertificate> {
    if radius <= 0.0 {
        return Err(CausalityError::InvalidArgument("radius must be positive".into()));
    }
    let base = canonicalize(curve)?;
    if !is_causal(&base, g, 1e-9, 4)?.is_causal() {
        return Err(CausalityError::InvalidArgument("certificate input must be causal".into()));
    }
    let l_base = lorentz_length(&base, g, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = 0usize;
    let mut best_rival = f64::NEG_INFINITY;
    for _ in 0..perturbations {
        let mut vs = base.vertices.clone();
        let n = vs.len();
        for i in 1..n - 1 {
            for x in vs[i].iter_mut() {
                *x += rng.gen_range(-radius..radius);
            }
        }
        let mut ok = true;
        for i in 1..n - 1 {
            let (head, tail) = vs.split_at_mut(i);
            let a = head[i - 1].clone();
            let b = tail[1].clone();
            match project_vertex(g, &a, &tail[0], &b) {
                Some(pv) => tail[0] = pv,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        let mut dedup: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
        for v in vs {
            if dedup.last().map(|u| u != &v).unwrap_or(true) {
                dedup.push(v);
            }
        }
        if dedup.len() < 2 {
            continue;
        }
        let Ok(rival) = CausalCurve::from_vertices(g.domain.clone(), dedup, Orientation::Future) else {
            continue;
        };
        let Ok(rival) = canonicalize(&rival) else { continue };
        if !is_causal(&rival, g, 1e-9, 4)?.is_causal() {
            continue;
        }
        if sup_distance(&rival, &base)? > radius {
            continue;
        }
        found += 1;
        best_rival = best_rival.max(lorentz_length(&rival, g, 8));
    }
    let degenerate = found == 0;
    let best_rival_length = if degenerate { 0.0 } else { best_rival };
    Ok(MaximalityCertificate {
        curve: base,
        radius,
        perturbations: found,
        best_rival_length,
        margin: l_base - best_rival_length,
        degenerate,
    })
}

// ---------------------------------------------------------------------------
// Limit-maximizer inequality chain
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LadderEntry {
    pub delta: f64,
    /// `L_{widen(g,δ)}(α)`.
    pub l_alpha_widened: f64,
    /// `L_{widen(g,δ)}(γ_δ)` for the widened-metric maximizer `γ_δ`.
    pub l_maximizer_widened: f64,
    /// `L_g(α) ≤ L_{widen(g,δ)}(α) + √δ·Lip(α)` held.
    pub alpha_chain_ok: bool,
    /// `L_{widen(g,δ)}(α) ≤ L_{widen(g,δ)}(γ_δ)` held.
    pub maximizer_chain_ok: bool,
}

#[derive(Clone, Debug)]
pub struct LimitMaximizerReport {
    pub l_alpha: f64,
    pub entries: Vec<LadderEntry>,
    /// Length of the extracted limit of the widened maximizers, under `g`.
    pub limit_length: f64,
    /// Direct `time_separation` value under `g`.
    pub direct_tau: f64,
    pub limit: CausalCurve,
}

/// Verify the widened-metric inequality chain for a causal curve `α` from
/// `p` to `q` along a decreasing δ-ladder, extract the limit of the widened
/// maximizers and compare its length against the direct maximizer.
pub fn limit_maximizer_check(
    g: &MetricField,
    delta_ladder: &[f64],
    p: &[f64],
    q: &[f64],
    alpha: &CausalCurve,
    segments: usize,
    seed: u64,
) -> Result<LimitMaximizerReport> {
    if delta_ladder.is_empty() || delta_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CausalityError::InvalidArgument("delta ladder must be strictly decreasing".into()));
    }
    let alpha_c = canonicalize(alpha)?;
    if !is_causal(&alpha_c, g, 1e-9, 4)?.is_causal() {
        return Err(CausalityError::InvalidArgument("alpha must be causal".into()));
    }
    let l_alpha = lorentz_length(&alpha_c, g, 8);
    let lip = alpha_c.lipschitz();
    let tol = 1e-9;

    let mut entries = Vec::new();
    let mut maximizers = Vec::new();
    for &delta in delta_ladder {
        let wider = g.widen(delta);
        let l_alpha_widened = lorentz_length(&alpha_c, &wider, 8);
        let (_, gamma) = time_separation(p, q, &wider, segments, 4, seed)?;
        let l_maximizer_widened = lorentz_length(&gamma, &wider, 8);
        entries.push(LadderEntry {
            delta,
            l_alpha_widened,
            l_maximizer_widened,
            alpha_chain_ok: l_alpha <= l_alpha_widened + delta.sqrt() * lip + tol,
            maximizer_chain_ok: l_alpha_widened <= l_maximizer_widened + tol,
        });
        maximizers.push(gamma);
    }

    let (limit, limit_length) = if maximizers.len() >= 2 {
        let lip_bound = maximizers.iter().map(|c| c.lipschitz()).fold(0.0f64, f64::max) * 1.01 + 1e-9;
        let res = extract_limit_curve(g, &maximizers, ExtractMode::FixedInterval, lip_bound, 1e-9)?;
        let l = lorentz_length(&res.limit, g, 8);
        (res.limit, l)
    } else {
        let c = maximizers.pop().unwrap();
        let l = lorentz_length(&c, g, 8);
        (c, l)
    };
    let (direct_tau, _) = time_separation(p, q, g, segments, 4, seed)?;
    Ok(LimitMaximizerReport { l_alpha, entries, limit_length, direct_tau, limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ChartDomain;
    use std::sync::Arc;

    fn chart2() -> Arc<ChartDomain> {
        Arc::new(ChartDomain::new_box(vec![(-2.0, 3.0), (-2.0, 2.0)]).unwrap())
    }

    fn eta2() -> MetricField {
        MetricField::minkowski(chart2())
    }

    #[test]
    fn minkowski_tau_is_sqrt3() {
        let g = eta2();
        let (tau, curve) = time_separation(&[0.0, 0.0], &[2.0, 1.0], &g, 16, 4, 7).unwrap();
        let exact = 3.0f64.sqrt();
        assert!((tau - exact).abs() / exact < 0.01, "tau = {tau}");
        let chord = canonicalize(
            &CausalCurve::segment(chart2(), vec![0.0, 0.0], vec![2.0, 1.0], Orientation::Future).unwrap(),
        )
        .unwrap();
        assert!(sup_distance(&curve, &chord).unwrap() <= 0.02);
    }

    #[test]
    fn null_related_endpoints_give_zero() {
        let g = eta2();
        let (tau, curve) = time_separation(&[0.0, 0.0], &[1.0, 1.0], &g, 8, 2, 3).unwrap();
        // Projection bisection leaves segments up to ~1e-12 inside the cone,
        // which shows up as ~1e-6 of spurious length.
        assert!(tau.abs() < 1e-5, "tau = {tau}");
        assert!(is_causal(&curve, &g, 1e-6, 4).unwrap().is_causal());
    }

    #[test]
    fn spacelike_endpoints_rejected() {
        let g = eta2();
        match time_separation(&[0.0, 0.0], &[0.3, 1.5], &g, 8, 2, 3) {
            Err(CausalityError::NotCausallyRelated(_)) => {}
            other => panic!("expected not-causally-related, got {other:?}"),
        }
    }

    #[test]
    fn tau_dominates_chord() {
        let g = eta2().widen(0.17);
        let chord = CausalCurve::segment(chart2(), vec![0.0, 0.0], vec![2.0, 1.0], Orientation::Future).unwrap();
        let l_chord = lorentz_length(&chord, &g, 8);
        let (tau, _) = time_separation(&[0.0, 0.0], &[2.0, 1.0], &g, 16, 2, 5).unwrap();
        assert!(tau >= l_chord - 1e-9);
    }

    #[test]
    fn chord_certificate_nonnegative_margin() {
        let g = eta2();
        let chord = CausalCurve::segment(chart2(), vec![0.0, 0.0], vec![2.0, 1.0], Orientation::Future).unwrap();
        let cert = maximality_certificate(&chord, &g, 0.1, 200, 11).unwrap();
        assert!(!cert.degenerate);
        assert!(cert.margin >= -1e-9, "margin = {}", cert.margin);
    }

    #[test]
    fn null_zigzag_not_maximal() {
        let g = eta2();
        let zig = CausalCurve::from_vertices(
            chart2(),
            vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 0.0]],
            Orientation::Future,
        )
        .unwrap();
        let cert = maximality_certificate(&zig, &g, 0.2, 300, 13).unwrap();
        assert!(cert.margin < 0.0, "zigzag should lose to a timelike rival, margin = {}", cert.margin);
    }

    #[test]
    fn widened_length_monotone() {
        let g = eta2();
        let chord = CausalCurve::segment(chart2(), vec![0.0, 0.0], vec![2.0, 1.0], Orientation::Future).unwrap();
        let l0 = lorentz_length(&chord, &g, 8);
        for delta in [0.001, 0.01, 0.1, 0.5] {
            assert!(lorentz_length(&chord, &g.widen(delta), 8) >= l0);
        }
    }

    #[test]
    fn minkowski_chain_matches_closed_form() {
        let g = eta2();
        let chord = CausalCurve::segment(chart2(), vec![0.0, 0.0], vec![2.0, 1.0], Orientation::Future).unwrap();
        let report =
            limit_maximizer_check(&g, &[0.1, 0.01], &[0.0, 0.0], &[2.0, 1.0], &chord, 16, 17).unwrap();
        assert!((report.l_alpha - 3.0f64.sqrt()).abs() < 1e-9);
        for e in &report.entries {
            // diag(-1-d, 1-d) on (2,1): length sqrt(3 + 5d).
            let exact = (3.0 + 5.0 * e.delta).sqrt();
            assert!((e.l_alpha_widened - exact).abs() < 1e-9, "delta {}", e.delta);
            assert!(e.alpha_chain_ok && e.maximizer_chain_ok);
        }
        assert!((report.direct_tau - 3.0f64.sqrt()).abs() < 0.02);
        assert!((report.limit_length - 3.0f64.sqrt()).abs() < 0.05);
    }

    #[test]
    fn null_alpha_chain_trivially_holds() {
        let g = eta2();
        let zig = CausalCurve::from_vertices(
            chart2(),
            vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 0.0]],
            Orientation::Future,
        )
        .unwrap();
        let report = limit_maximizer_check(&g, &[0.1, 0.01], &[0.0, 0.0], &[1.0, 0.0], &zig, 8, 19).unwrap();
        assert!(report.l_alpha < 1e-9);
        for e in &report.entries {
            assert!(e.alpha_chain_ok);
        }
    }
}
