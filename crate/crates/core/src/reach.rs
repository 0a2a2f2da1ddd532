//! Grid reachability: causal futures/pasts by cone-step frontier
//! propagation, causal diamonds with closure-defect detection, open
//! pasts/futures via narrowed metrics, Cauchy developments and the
//! imprisonment h-length bound.
//!
//! Over/under duality: discretization error is converted into cone-order
//! error by propagating with `widen(g, ε)` (over) or `narrow(g, ε)` (under),
//! `ε = modulus(2·step)`. For fields with zero modulus (flat metrics) both
//! modes use `g` itself, so exact null lattice steps stay admissible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::path::Path;

use crate::curve::{is_causal, CausalCurve, Orientation};
use crate::error::{CausalityError, Result};
use crate::geom::{BoxRegion, MetricField, SymForm};

/// Relative tolerance on `g(v,v) ≤ 0` for step admission.
const STEP_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReachMode {
    Over,
    Under,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeDirection {
    Future,
    Past,
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Uniform cell grid over a coordinate box. Axes marked periodic wrap their
/// cell indices (the grid must span the full period).
#[derive(Clone, Debug)]
pub struct Grid {
    pub bounds: Vec<(f64, f64)>,
    pub res: Vec<usize>,
    pub periodic: Vec<bool>,
    /// Cone-step stencil radius in cells.
    pub stencil: usize,
    cell: Vec<f64>,
}

impl Grid {
    pub fn new(bounds: Vec<(f64, f64)>, res: Vec<usize>, periodic: Vec<bool>, stencil: usize) -> Result<Self> {
        if bounds.len() != res.len() || bounds.len() != periodic.len() {
            return Err(CausalityError::InvalidArgument("grid axis count mismatch".into()));
        }
        if res.iter().any(|&r| r < 2) {
            return Err(CausalityError::InvalidArgument("grid needs >= 2 cells per axis".into()));
        }
        let cell = bounds.iter().zip(res.iter()).map(|((lo, hi), &r)| (hi - lo) / r as f64).collect();
        Ok(Grid { bounds, res, periodic, stencil: stencil.max(1), cell })
    }

    /// Square grid over the chart bounds, inheriting its periodic axes.
    pub fn over_domain(domain: &crate::geom::ChartDomain, res: usize, stencil: usize) -> Result<Self> {
        Grid::new(domain.bounds.clone(), vec![res; domain.dim], domain.periodic.clone(), stencil)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn cell_size(&self) -> &[f64] {
        &self.cell
    }

    pub fn min_cell(&self) -> f64 {
        self.cell.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for (i, &k) in idx.iter().enumerate() {
            f = f * self.res[i] + k;
        }
        f
    }

    pub fn unflat(&self, mut f: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dim()];
        for i in (0..self.dim()).rev() {
            idx[i] = f % self.res[i];
            f /= self.res[i];
        }
        idx
    }

    pub fn center(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(i, &k)| self.bounds[i].0 + (k as f64 + 0.5) * self.cell[i])
            .collect()
    }

    /// Cell index containing a point (periodic axes wrap; others clamp-check).
    pub fn locate(&self, x: &[f64]) -> Option<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let len = self.bounds[i].1 - self.bounds[i].0;
            let mut t = x[i] - self.bounds[i].0;
            if self.periodic[i] {
                t = t.rem_euclid(len);
            } else if t < -1e-12 || t > len + 1e-12 {
                return None;
            }
            let k = ((t / self.cell[i]).floor() as isize).clamp(0, self.res[i] as isize - 1);
            idx.push(k as usize);
        }
        Some(idx)
    }

    /// Apply an integer offset to an index, wrapping periodic axes; None if a
    /// non-periodic axis leaves the grid.
    pub fn offset_index(&self, idx: &[usize], off: &[isize]) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let k = idx[i] as isize + off[i];
            if self.periodic[i] {
                out.push(k.rem_euclid(self.res[i] as isize) as usize);
            } else if k < 0 || k >= self.res[i] as isize {
                return None;
            } else {
                out.push(k as usize);
            }
        }
        Some(out)
    }

    /// Physical displacement of an integer offset.
    pub fn offset_vector(&self, off: &[isize]) -> Vec<f64> {
        off.iter().zip(self.cell.iter()).map(|(&o, &c)| o as f64 * c).collect()
    }

    /// Primitive stencil offsets (gcd of components 1, max-norm <= stencil).
    pub fn stencil_offsets(&self) -> Vec<Vec<isize>> {
        fn gcd(a: isize, b: isize) -> isize {
            let (mut a, mut b) = (a.abs(), b.abs());
            while b != 0 {
                let t = a % b;
                a = b;
                b = t;
            }
            a
        }
        let r = self.stencil as isize;
        let dim = self.dim();
        let mut offsets = Vec::new();
        let total = (2 * r + 1).pow(dim as u32);
        for code in 0..total {
            let mut rem = code;
            let mut off = Vec::with_capacity(dim);
            for _ in 0..dim {
                off.push(rem % (2 * r + 1) - r);
                rem /= 2 * r + 1;
            }
            if off.iter().all(|&o| o == 0) {
                continue;
            }
            let g = off.iter().fold(0isize, |acc, &o| gcd(acc, o));
            if g == 1 {
                offsets.push(off);
            }
        }
        offsets
    }
}

// ---------------------------------------------------------------------------
// Reach sets
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ReachSet {
    pub grid: Grid,
    pub cells: Vec<bool>,
    pub mode: ReachMode,
    pub direction: TimeDirection,
    pub metric_name: String,
}

impl ReachSet {
    pub fn empty(grid: Grid, mode: ReachMode, direction: TimeDirection, metric_name: &str) -> Self {
        let n = grid.len();
        ReachSet { grid, cells: vec![false; n], mode, direction, metric_name: metric_name.to_string() }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        match self.grid.locate(x) {
            Some(idx) => self.cells[self.grid.flat(&idx)],
            None => false,
        }
    }

    pub fn is_subset_of(&self, other: &ReachSet) -> bool {
        self.cells.iter().zip(other.cells.iter()).all(|(a, b)| !*a || *b)
    }

    pub fn intersect(&self, other: &ReachSet) -> ReachSet {
        let mut out = self.clone();
        for (a, b) in out.cells.iter_mut().zip(other.cells.iter()) {
            *a = *a && *b;
        }
        out
    }

    pub fn union_with(&mut self, other: &ReachSet) {
        for (a, b) in self.cells.iter_mut().zip(other.cells.iter()) {
            *a = *a || *b;
        }
    }

    /// Member cells adjacent (1-stencil) to a non-member or grid boundary.
    pub fn boundary_cells(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for f in 0..self.cells.len() {
            if !self.cells[f] {
                continue;
            }
            let idx = self.grid.unflat(f);
            let mut boundary = false;
            'outer: for axis in 0..self.grid.dim() {
                for delta in [-1isize, 1] {
                    let mut off = vec![0isize; self.grid.dim()];
                    off[axis] = delta;
                    match self.grid.offset_index(&idx, &off) {
                        Some(n) => {
                            if !self.cells[self.grid.flat(&n)] {
                                boundary = true;
                                break 'outer;
                            }
                        }
                        None => {
                            boundary = true;
                            break 'outer;
                        }
                    }
                }
            }
            if boundary {
                out.push(f);
            }
        }
        out
    }

    /// Erode by one cell: keep members all of whose in-grid axis neighbors
    /// are members (missing neighbors at the grid edge do not erode).
    pub fn eroded(&self) -> ReachSet {
        let mut out = self.clone();
        for f in 0..self.cells.len() {
            if !self.cells[f] {
                continue;
            }
            let idx = self.grid.unflat(f);
            'outer: for axis in 0..self.grid.dim() {
                for delta in [-1isize, 1] {
                    let mut off = vec![0isize; self.grid.dim()];
                    off[axis] = delta;
                    if let Some(n) = self.grid.offset_index(&idx, &off) {
                        if !self.cells[self.grid.flat(&n)] {
                            out.cells[f] = false;
                            break 'outer;
                        }
                    }
                }
            }
        }
        out
    }

    /// Does any member cell touch the grid boundary ring (non-periodic axes)?
    pub fn touches_grid_boundary(&self) -> bool {
        for f in 0..self.cells.len() {
            if !self.cells[f] {
                continue;
            }
            let idx = self.grid.unflat(f);
            for i in 0..self.grid.dim() {
                if !self.grid.periodic[i] && (idx[i] == 0 || idx[i] == self.grid.res[i] - 1) {
                    return true;
                }
            }
        }
        false
    }
}

// ---------------------------------------------------------------------------
// Core propagation
// ---------------------------------------------------------------------------

/// Metric used for step admission in the given mode: widened (over) or
/// narrowed (under) by the modulus of `g` at twice the longest stencil step.
/// Zero-modulus fields are used as-is, keeping exact null steps admissible.
pub fn mode_metric(g: &MetricField, grid: &Grid, mode: ReachMode) -> Result<MetricField> {
    let max_step = grid
        .stencil_offsets()
        .iter()
        .map(|off| {
            let v = grid.offset_vector(off);
            v.iter().map(|a| a * a).sum::<f64>().sqrt()
        })
        .fold(0.0f64, f64::max);
    let eps = g.modulus.eval(2.0 * max_step);
    if eps <= 0.0 {
        return Ok(g.clone());
    }
    match mode {
        ReachMode::Over => Ok(g.widen(eps)),
        ReachMode::Under => g.narrow(eps),
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    cell: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap by distance, lowest cell index breaking ties.
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap()
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-cell cached metric data for step admission.
struct CellData {
    form: Vec<Option<SymForm>>,
    time: Vec<Option<Vec<f64>>>,
    blocked: Vec<bool>,
}

fn cell_data(g: &MetricField, grid: &Grid, obstacle_inflate: f64) -> CellData {
    let n = grid.len();
    let mut form = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut blocked = Vec::with_capacity(n);
    for f in 0..n {
        let idx = grid.unflat(f);
        let c = grid.center(&idx);
        let in_chart = g.domain.in_bounds(&c)
            && !g
                .domain
                .obstacles
                .iter()
                .any(|ob| ob.inflate(obstacle_inflate).contains(&g.domain.wrap(&c)));
        if in_chart {
            form.push(Some(g.form_at(&g.domain.wrap(&c))));
            time.push(Some(g.time_at(&g.domain.wrap(&c))));
            blocked.push(false);
        } else {
            form.push(None);
            time.push(None);
            blocked.push(true);
        }
    }
    CellData { form, time, blocked }
}

/// Is the step with displacement `v` admissible from a cell with the given
/// form/time data in the given time direction?
fn step_admissible(form: &SymForm, tvec: &[f64], v: &[f64], direction: TimeDirection) -> bool {
    let q = form.quad(v);
    let norm2: f64 = v.iter().map(|a| a * a).sum();
    if q > STEP_TOL * norm2 {
        return false;
    }
    let tdot = form.eval(v, tvec);
    match direction {
        TimeDirection::Future => tdot < 0.0,
        TimeDirection::Past => tdot > 0.0,
    }
}

fn segment_blocked(g: &MetricField, a: &[f64], b: &[f64], inflate: f64) -> bool {
    g.domain.segment_hits_obstacle(a, b, inflate)
}

/// Dijkstra by h-length from seed cells, admitting cone steps of the mode
/// metric, capped at `horizon`.
pub fn reach_from_cells(
    seeds: &[usize],
    g: &MetricField,
    grid: &Grid,
    mode: ReachMode,
    direction: TimeDirection,
    horizon: f64,
    extra_obstacle_inflate: f64,
) -> Result<ReachSet> {
    if horizon <= 0.0 {
        return Err(CausalityError::InvalidArgument("horizon must be positive".into()));
    }
    let gm = mode_metric(g, grid, mode)?;
    let inflate = 0.5 * grid.min_cell() + extra_obstacle_inflate;
    let data = cell_data(&gm, grid, extra_obstacle_inflate);
    let offsets = grid.stencil_offsets();
    let offset_vecs: Vec<Vec<f64>> = offsets.iter().map(|o| grid.offset_vector(o)).collect();
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    let mut set = ReachSet::empty(grid.clone(), mode, direction, &g.name);
    for &s in seeds {
        if data.blocked[s] {
            return Err(CausalityError::InvalidArgument("seed cell blocked by obstacle or boundary".into()));
        }
        if dist[s] > 0.0 {
            dist[s] = 0.0;
            heap.push(HeapEntry { dist: 0.0, cell: s });
        }
    }
    if heap.is_empty() {
        return Err(CausalityError::EmptySamples("no seed cells".into()));
    }
    while let Some(HeapEntry { dist: d, cell }) = heap.pop() {
        if d > dist[cell] {
            continue;
        }
        set.cells[cell] = true;
        let idx = grid.unflat(cell);
        let center = grid.center(&idx);
        let form = data.form[cell].as_ref().unwrap();
        let tvec = data.time[cell].as_ref().unwrap();
        for (k, off) in offsets.iter().enumerate() {
            let v = &offset_vecs[k];
            if !step_admissible(form, tvec, v, direction) {
                continue;
            }
            let Some(nidx) = grid.offset_index(&idx, off) else { continue };
            let nf = grid.flat(&nidx);
            if data.blocked[nf] {
                continue;
            }
            let step_len = g.domain.h_norm(&center, v);
            let nd = d + step_len;
            if nd > horizon || nd >= dist[nf] {
                continue;
            }
            let target: Vec<f64> = center.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
            if segment_blocked(g, &center, &target, inflate) {
                continue;
            }
            dist[nf] = nd;
            heap.push(HeapEntry { dist: nd, cell: nf });
        }
    }
    Ok(set)
}

pub fn default_horizon(g: &MetricField) -> f64 {
    10.0 * g.domain.diameter()
}

/// Cells whose cell box intersects any of the given boxes.
pub fn cells_meeting_boxes(grid: &Grid, boxes: &[BoxRegion]) -> Vec<usize> {
    let mut out = Vec::new();
    for f in 0..grid.len() {
        let idx = grid.unflat(f);
        let c = grid.center(&idx);
        let hit = boxes.iter().any(|b| {
            (0..grid.dim()).all(|i| {
                c[i] + 0.5 * grid.cell_size()[i] >= b.min[i] && c[i] - 0.5 * grid.cell_size()[i] <= b.max[i]
            })
        });
        if hit {
            out.push(f);
        }
    }
    out
}

/// Causal future of a point.
pub fn future_reach(p: &[f64], g: &MetricField, grid: &Grid, mode: ReachMode, horizon: f64) -> Result<ReachSet> {
    if !g.domain.contains(p) {
        return Err(CausalityError::OutsideDomain { point: p.to_vec(), detail: "reach seed outside chart".into() });
    }
    let idx = grid
        .locate(p)
        .ok_or_else(|| CausalityError::OutsideDomain { point: p.to_vec(), detail: "seed outside grid".into() })?;
    reach_from_cells(&[grid.flat(&idx)], g, grid, mode, TimeDirection::Future, horizon, 0.0)
}

/// Causal past of a point.
pub fn past_reach(p: &[f64], g: &MetricField, grid: &Grid, mode: ReachMode, horizon: f64) -> Result<ReachSet> {
    if !g.domain.contains(p) {
        return Err(CausalityError::OutsideDomain { point: p.to_vec(), detail: "reach seed outside chart".into() });
    }
    let idx = grid
        .locate(p)
        .ok_or_else(|| CausalityError::OutsideDomain { point: p.to_vec(), detail: "seed outside grid".into() })?;
    reach_from_cells(&[grid.flat(&idx)], g, grid, mode, TimeDirection::Past, horizon, 0.0)
}

// ---------------------------------------------------------------------------
// Causal diamonds
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundedVerdict {
    Bounded,
    /// The diamond touches the grid boundary; boundedness undecidable here.
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiamondVerdict {
    CompactAtScale,
    Noncompact,
}

#[derive(Clone, Debug)]
pub struct DiamondReport {
    pub over: ReachSet,
    pub under: ReachSet,
    pub bounded: BoundedVerdict,
    /// Flat cell indices of over-diamond cells judged unattained limit
    /// points (obstacle-shadow boundaries).
    pub closure_defect: Vec<usize>,
    pub verdict: DiamondVerdict,
}

/// Intersect future(p) with past(q) in both modes and hunt for closure
/// defects. Defects are detected by obstacle-inflation sensitivity: over-
/// diamond cells that vanish when obstacles are inflated by two cells, yet
/// lie well clear of the obstacles themselves, sit on an unattained shadow
/// boundary.
pub fn causal_diamond(p: &[f64], q: &[f64], g: &MetricField, grid: &Grid) -> Result<DiamondReport> {
    let horizon = default_horizon(g);
    let fut_over = future_reach(p, g, grid, ReachMode::Over, horizon)?;
    let past_over = past_reach(q, g, grid, ReachMode::Over, horizon)?;
    let fut_under = future_reach(p, g, grid, ReachMode::Under, horizon)?;
    let past_under = past_reach(q, g, grid, ReachMode::Under, horizon)?;
    let over = fut_over.intersect(&past_over);
    let under = fut_under.intersect(&past_under);
    let bounded = if over.touches_grid_boundary() { BoundedVerdict::Inconclusive } else { BoundedVerdict::Bounded };

    let mut closure_defect = Vec::new();
    if !g.domain.obstacles.is_empty() && over.count() > 0 {
        let r = 2.0 * grid.min_cell();
        let pidx = grid.locate(p).unwrap();
        let qidx = grid.locate(q).unwrap();
        let fut_infl = reach_from_cells(&[grid.flat(&pidx)], g, grid, ReachMode::Over, TimeDirection::Future, horizon, r)?;
        let past_infl = reach_from_cells(&[grid.flat(&qidx)], g, grid, ReachMode::Over, TimeDirection::Past, horizon, r)?;
        let over_infl = fut_infl.intersect(&past_infl);
        let exclusion = r + grid.min_cell();
        for f in 0..over.cells.len() {
            if over.cells[f] && !over_infl.cells[f] {
                let c = g.domain.wrap(&grid.center(&grid.unflat(f)));
                let near = g.domain.obstacles.iter().any(|ob| ob.distance(&c) <= exclusion);
                if !near {
                    closure_defect.push(f);
                }
            }
        }
    }
    let verdict = if closure_defect.is_empty() { DiamondVerdict::CompactAtScale } else { DiamondVerdict::Noncompact };
    Ok(DiamondReport { over, under, bounded, closure_defect, verdict })
}

// ---------------------------------------------------------------------------
// Open pasts/futures
// ---------------------------------------------------------------------------

/// `Ǐ±(A)`: union over the ladder of under-mode reach sets of narrowed
/// metrics, then eroded by one cell so only interior cells remain.
pub fn open_past_future(
    seeds: &[BoxRegion],
    g: &MetricField,
    eps_ladder: &[f64],
    grid: &Grid,
    direction: TimeDirection,
) -> Result<ReachSet> {
    if eps_ladder.is_empty() || eps_ladder.windows(2).any(|w| w[1] >= w[0]) || eps_ladder.iter().any(|&e| e <= 0.0) {
        return Err(CausalityError::InvalidArgument(
            "epsilon ladder must be strictly decreasing and positive".into(),
        ));
    }
    let seed_cells = cells_meeting_boxes(grid, seeds);
    if seed_cells.is_empty() {
        return Err(CausalityError::EmptySamples("seed region meets no grid cells".into()));
    }
    let horizon = default_horizon(g);
    let mut acc = ReachSet::empty(grid.clone(), ReachMode::Under, direction, &g.name);
    for &eps in eps_ladder {
        let narrowed = g.narrow(eps)?;
        let r = reach_from_cells(&seed_cells, &narrowed, grid, ReachMode::Under, direction, horizon, 0.0)?;
        acc.union_with(&r);
    }
    // Drop the seed slab itself and boundary cells: open at scale.
    let mut open = acc.eroded();
    for &s in &seed_cells {
        open.cells[s] = false;
    }
    open.metric_name = g.name.clone();
    Ok(open)
}

// ---------------------------------------------------------------------------
// Imprisonment bound
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum ImprisonmentVerdict {
    /// All causal polylines confined to K have h-length <= C.
    Bounded(f64),
    /// A closed causal grid loop inside K, verified causal.
    EvidenceUnbounded(CausalCurve),
    Inconclusive(String),
}

/// Longest-h-length causal polyline confined to a subbox, by longest-path
/// search on the cone-step graph. A cycle in the under-mode graph yields an
/// unboundedness witness; an acyclic over-mode graph yields a certified
/// bound.
pub fn imprisonment_bound(k: &BoxRegion, g: &MetricField, grid: &Grid) -> Result<ImprisonmentVerdict> {
    let in_k: Vec<bool> = (0..grid.len()).map(|f| k.contains(&grid.center(&grid.unflat(f)))).collect();
    let over = cone_step_graph(g, grid, ReachMode::Over, Some(&in_k))?;
    match topo_order(&over) {
        Some(order) => {
            // DAG: longest path by h-length.
            let mut best = vec![0.0f64; over.len()];
            let mut c = 0.0f64;
            for &u in order.iter().rev() {
                for &(v, w) in &over[u] {
                    if best[v] + w > best[u] {
                        best[u] = best[v] + w;
                    }
                }
                c = c.max(best[u]);
            }
            Ok(ImprisonmentVerdict::Bounded(c))
        }
        None => {
            // Cycle in the over graph; hunt for one in the under graph so
            // the witness survives the conservative check.
            let under = cone_step_graph(g, grid, ReachMode::Under, Some(&in_k))?;
            match find_cycle(&under) {
                Some(cycle) => {
                    let witness = cycle_to_curve(&cycle, g, grid)?;
                    if is_causal(&witness, g, STEP_TOL, 4)?.is_causal() {
                        Ok(ImprisonmentVerdict::EvidenceUnbounded(witness))
                    } else {
                        Ok(ImprisonmentVerdict::Inconclusive(
                            "under-mode cycle failed independent causality check".into(),
                        ))
                    }
                }
                None => Ok(ImprisonmentVerdict::Inconclusive(
                    "over-mode cone graph has cycles but under-mode graph is acyclic".into(),
                )),
            }
        }
    }
}

/// Future-directed cone-step graph over grid cells in the given mode,
/// optionally restricted to a cell subset; edge weights are h-lengths.
pub(crate) fn cone_step_graph(
    g: &MetricField,
    grid: &Grid,
    mode: ReachMode,
    in_set: Option<&[bool]>,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let gm = mode_metric(g, grid, mode)?;
    let data = cell_data(&gm, grid, 0.0);
    let offsets = grid.stencil_offsets();
    let offset_vecs: Vec<Vec<f64>> = offsets.iter().map(|o| grid.offset_vector(o)).collect();
    let inflate = 0.5 * grid.min_cell();
    let keep = |f: usize| in_set.map(|s| s[f]).unwrap_or(true);
    let mut adj = vec![Vec::new(); grid.len()];
    for f in 0..grid.len() {
        if data.blocked[f] || !keep(f) {
            continue;
        }
        let idx = grid.unflat(f);
        let center = grid.center(&idx);
        let form = data.form[f].as_ref().unwrap();
        let tvec = data.time[f].as_ref().unwrap();
        for (kk, off) in offsets.iter().enumerate() {
            let v = &offset_vecs[kk];
            if !step_admissible(form, tvec, v, TimeDirection::Future) {
                continue;
            }
            let Some(nidx) = grid.offset_index(&idx, off) else { continue };
            let nf = grid.flat(&nidx);
            if data.blocked[nf] || !keep(nf) {
                continue;
            }
            let target: Vec<f64> = center.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
            if segment_blocked(g, &center, &target, inflate) {
                continue;
            }
            adj[f].push((nf, g.domain.h_norm(&center, v)));
        }
    }
    Ok(adj)
}

/// Kahn topological order; None if the graph has a cycle.
pub(crate) fn topo_order(adj: &[Vec<(usize, f64)>]) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut indeg = vec![0usize; n];
    for edges in adj {
        for &(v, _) in edges {
            indeg[v] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&u| indeg[u] == 0).collect();
    let mut order = Vec::with_capacity(n);
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        order.push(u);
        for &(v, _) in &adj[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push(v);
            }
        }
    }
    if order.len() == n {
        Some(order)
    } else {
        None
    }
}

/// Iterative DFS cycle finder returning the cycle's cell sequence (closed:
/// first == last).
pub(crate) fn find_cycle(adj: &[Vec<(usize, f64)>]) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut color = vec![0u8; n]; // 0 white, 1 gray, 2 black
    let mut parent = vec![usize::MAX; n];
    for start in 0..n {
        if color[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start] = 1;
        while let Some(top) = stack.last_mut() {
            let u = top.0;
            if top.1 < adj[u].len() {
                let (v, _) = adj[u][top.1];
                top.1 += 1;
                match color[v] {
                    0 => {
                        color[v] = 1;
                        parent[v] = u;
                        stack.push((v, 0));
                    }
                    1 => {
                        // Back edge u -> v closes a cycle.
                        let mut cyc = vec![v];
                        let mut cur = u;
                        while cur != v {
                            cyc.push(cur);
                            cur = parent[cur];
                        }
                        cyc[1..].reverse();
                        cyc.push(v);
                        return Some(cyc);
                    }
                    _ => {}
                }
            } else {
                color[u] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Turn a closed cell cycle into a polyline in covering coordinates
/// (periodic axes unwrapped so consecutive displacements are minimal).
pub(crate) fn cycle_to_curve(cycle: &[usize], g: &MetricField, grid: &Grid) -> Result<CausalCurve> {
    let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(cycle.len());
    let mut cur = grid.center(&grid.unflat(cycle[0]));
    vertices.push(cur.clone());
    for &f in &cycle[1..] {
        let raw = grid.center(&grid.unflat(f));
        let d = g.domain.displacement(&cur, &raw);
        cur = cur.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
        vertices.push(cur.clone());
    }
    CausalCurve::from_vertices(g.domain.clone(), vertices, Orientation::Future)
}

// ---------------------------------------------------------------------------
// Cauchy development
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DevelopmentSide {
    Future,
    Past,
    Both,
}

/// Under-approximate Cauchy development: a cell belongs to D⁺ iff it is on S
/// or every over-mode past step from it lands in a D⁺ cell or crosses the S
/// slab; steps escaping the domain, an obstacle, or the grid make the cell
/// permanently bad. Computed as a least fixed point (Kahn-style counting),
/// so cells on cone-graph cycles never qualify.
pub fn cauchy_development(
    s: &[BoxRegion],
    g: &MetricField,
    grid: &Grid,
    side: DevelopmentSide,
) -> Result<ReachSet> {
    if s.is_empty() {
        return Err(CausalityError::InvalidArgument("surface region is empty".into()));
    }
    match side {
        DevelopmentSide::Future => one_sided_development(s, g, grid, TimeDirection::Past),
        DevelopmentSide::Past => one_sided_development(s, g, grid, TimeDirection::Future),
        DevelopmentSide::Both => {
            let mut fut = one_sided_development(s, g, grid, TimeDirection::Past)?;
            let past = one_sided_development(s, g, grid, TimeDirection::Future)?;
            fut.union_with(&past);
            Ok(fut)
        }
    }
}

/// `step_dir` is the direction of the escaping curves (Past for D⁺).
fn one_sided_development(
    s: &[BoxRegion],
    g: &MetricField,
    grid: &Grid,
    step_dir: TimeDirection,
) -> Result<ReachSet> {
    let gm = mode_metric(g, grid, ReachMode::Over)?;
    let data = cell_data(&gm, grid, 0.0);
    let offsets = grid.stencil_offsets();
    let offset_vecs: Vec<Vec<f64>> = offsets.iter().map(|o| grid.offset_vector(o)).collect();
    let inflate = 0.5 * grid.min_cell();
    let n = grid.len();

    let mut on_s = vec![false; n];
    for f in cells_meeting_boxes(grid, s) {
        on_s[f] = true;
    }

    // For each cell, enumerate its escape steps; classify each as
    // crossing-S (immediately safe), landing at a cell (dependency), or
    // escaping (cell is bad).
    let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n]; // dependency targets
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n]; // reverse edges
    let mut bad = vec![false; n];
    let mut has_step = vec![false; n];
    for f in 0..n {
        if data.blocked[f] || on_s[f] {
            continue;
        }
        let idx = grid.unflat(f);
        let center = grid.center(&idx);
        let form = data.form[f].as_ref().unwrap();
        let tvec = data.time[f].as_ref().unwrap();
        for (k, off) in offsets.iter().enumerate() {
            let v = &offset_vecs[k];
            if !step_admissible(form, tvec, v, step_dir) {
                continue;
            }
            has_step[f] = true;
            let target: Vec<f64> = center.iter().zip(v.iter()).map(|(a, b)| a + b).collect();
            // A step whose segment crosses the S slab is resolved by S.
            let crosses_s = s.iter().any(|b| b.inflate(0.5 * grid.min_cell()).intersects_segment(&center, &target));
            if crosses_s {
                continue;
            }
            if segment_blocked(g, &center, &target, inflate) {
                bad[f] = true; // escapes into an obstacle
                break;
            }
            match grid.offset_index(&idx, off) {
                Some(nidx) => {
                    let nf = grid.flat(&nidx);
                    if data.blocked[nf] {
                        bad[f] = true;
                        break;
                    }
                    deps[f].push(nf);
                }
                None => {
                    bad[f] = true; // escapes through the grid boundary
                    break;
                }
            }
        }
        if !has_step[f] {
            bad[f] = true; // no admissible escape step: inconclusive cell, stay conservative
        }
    }
    for f in 0..n {
        for &d in &deps[f] {
            rev[d].push(f);
        }
    }

    let mut good = vec![false; n];
    let mut remaining: Vec<usize> = deps.iter().map(|d| d.len()).collect();
    let mut queue: Vec<usize> = Vec::new();
    for f in 0..n {
        if on_s[f] && !data.blocked[f] {
            good[f] = true;
            queue.push(f);
        } else if !data.blocked[f] && !bad[f] && remaining[f] == 0 && has_step[f] {
            // All steps cross S directly.
            good[f] = true;
            queue.push(f);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let u = queue[head];
        head += 1;
        for &w in &rev[u] {
            if good[w] || bad[w] || data.blocked[w] {
                continue;
            }
            remaining[w] -= 1;
            if remaining[w] == 0 {
                good[w] = true;
                queue.push(w);
            }
        }
    }

    let mut out = ReachSet::empty(grid.clone(), ReachMode::Under, TimeDirection::Future, &g.name);
    out.cells = good;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Reach file format
// ---------------------------------------------------------------------------

/// Serialize: `reach dims=<r0,r1,…> bounds=<lo:hi,…> mode=<over|under>` then
/// run-length-encoded row-major flags as `<count>x<0|1>` tokens.
pub fn reach_to_string(set: &ReachSet) -> String {
    let dims: Vec<String> = set.grid.res.iter().map(|r| r.to_string()).collect();
    let bounds: Vec<String> = set.grid.bounds.iter().map(|(lo, hi)| format!("{lo:.17e}:{hi:.17e}")).collect();
    let mode = match set.mode {
        ReachMode::Over => "over",
        ReachMode::Under => "under",
    };
    let mut s = format!("reach dims={} bounds={} mode={}\n", dims.join(","), bounds.join(","), mode);
    let mut i = 0;
    let cells = &set.cells;
    let mut first = true;
    while i < cells.len() {
        let v = cells[i];
        let mut j = i;
        while j < cells.len() && cells[j] == v {
            j += 1;
        }
        if !first {
            s.push(' ');
        }
        first = false;
        let _ = write!(s, "{}x{}", j - i, if v { 1 } else { 0 });
        i = j;
    }
    s.push('\n');
    s
}

pub fn reach_from_str(text: &str) -> Result<ReachSet> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| CausalityError::Parse("empty reach file".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("reach") {
        return Err(CausalityError::Parse("reach header must start with 'reach'".into()));
    }
    let mut res = None;
    let mut bounds = None;
    let mut mode = None;
    for f in fields {
        let (key, val) = f
            .split_once('=')
            .ok_or_else(|| CausalityError::Parse(format!("malformed header field '{f}'")))?;
        match key {
            "dims" => {
                res = Some(
                    val.split(',')
                        .map(|t| t.parse::<usize>().map_err(|e| CausalityError::Parse(e.to_string())))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "bounds" => {
                bounds = Some(
                    val.split(',')
                        .map(|pair| {
                            let (a, b) = pair
                                .split_once(':')
                                .ok_or_else(|| CausalityError::Parse(format!("bad bounds pair '{pair}'")))?;
                            Ok((
                                a.parse::<f64>().map_err(|e| CausalityError::Parse(e.to_string()))?,
                                b.parse::<f64>().map_err(|e| CausalityError::Parse(e.to_string()))?,
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "mode" => {
                mode = Some(match val {
                    "over" => ReachMode::Over,
                    "under" => ReachMode::Under,
                    other => return Err(CausalityError::Parse(format!("unknown mode '{other}'"))),
                })
            }
            other => return Err(CausalityError::Parse(format!("unknown header key '{other}'"))),
        }
    }
    let res = res.ok_or_else(|| CausalityError::Parse("missing dims=".into()))?;
    let bounds = bounds.ok_or_else(|| CausalityError::Parse("missing bounds=".into()))?;
    let mode = mode.ok_or_else(|| CausalityError::Parse("missing mode=".into()))?;
    // Periodicity is not stored in the file; rebuild as non-periodic.
    let periodic = vec![false; res.len()];
    let grid = Grid::new(bounds, res, periodic, 3)
        .map_err(|_| CausalityError::Parse("inconsistent grid header".into()))?;
    let body = lines.next().ok_or_else(|| CausalityError::Parse("missing cell data".into()))?;
    let mut cells = Vec::with_capacity(grid.len());
    for tok in body.split_whitespace() {
        let (count, val) = tok
            .split_once('x')
            .ok_or_else(|| CausalityError::Parse(format!("bad run token '{tok}'")))?;
        let count: usize = count.parse().map_err(|e: std::num::ParseIntError| CausalityError::Parse(e.to_string()))?;
        let val = match val {
            "0" => false,
            "1" => true,
            other => return Err(CausalityError::Parse(format!("bad run value '{other}'"))),
        };
        cells.extend(std::iter::repeat(val).take(count));
    }
    if cells.len() != grid.len() {
        return Err(CausalityError::Parse(format!(
            "cell count {} does not match grid size {}",
            cells.len(),
            grid.len()
        )));
    }
    Ok(ReachSet { grid, cells, mode, direction: TimeDirection::Future, metric_name: String::new() })
}

pub fn write_reach_file(set: &ReachSet, path: &Path) -> Result<()> {
    crate::scenario::atomic_write(path, reach_to_string(set).as_bytes())
}

pub fn read_reach_file(path: &Path) -> Result<ReachSet> {
    reach_from_str(&std::fs::read_to_string(path)?)
}

/// Boundary cells as CSV rows `i0,i1,…,x0,x1,…` for plotting.
pub fn boundary_csv(set: &ReachSet) -> String {
    let mut s = String::new();
    for f in set.boundary_cells() {
        let idx = set.grid.unflat(f);
        let c = set.grid.center(&idx);
        let cols: Vec<String> = idx
            .iter()
            .map(|k| k.to_string())
            .chain(c.iter().map(|x| format!("{x:.17e}")))
            .collect();
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ChartDomain;
    use std::sync::Arc;

    fn chart2() -> Arc<ChartDomain> {
        Arc::new(ChartDomain::new_box(vec![(-2.0, 2.0), (-2.0, 2.0)]).unwrap())
    }

    fn eta2() -> MetricField {
        MetricField::minkowski(chart2())
    }

    #[test]
    fn minkowski_reach_sandwich_small_grid() {
        let g = eta2();
        let grid = Grid::over_domain(&g.domain, 64, 3).unwrap();
        let over = future_reach(&[0.0, 0.0], &g, &grid, ReachMode::Over, default_horizon(&g)).unwrap();
        let under = future_reach(&[0.0, 0.0], &g, &grid, ReachMode::Under, default_horizon(&g)).unwrap();
        assert!(under.is_subset_of(&over));
        let cell = grid.min_cell();
        for f in 0..grid.len() {
            let c = grid.center(&grid.unflat(f));
            let inside = c[0] >= c[1].abs();
            // Under-mode members stay within the analytic cone (2 cells).
            if under.cells[f] {
                assert!(c[0] >= c[1].abs() - 2.0 * cell, "under leak at {c:?}");
            }
            // Analytic-cone cells are covered by over-mode (2 cells).
            if inside && c[0] >= c[1].abs() + 2.0 * cell {
                assert!(over.cells[f], "over misses {c:?}");
            }
        }
    }

    #[test]
    fn over_reach_monotone_under_widening() {
        let g = eta2();
        let wider = g.widen(0.1);
        let grid = Grid::over_domain(&g.domain, 48, 3).unwrap();
        let base = future_reach(&[0.0, 0.0], &g, &grid, ReachMode::Over, default_horizon(&g)).unwrap();
        let wide = future_reach(&[0.0, 0.0], &wider, &grid, ReachMode::Over, default_horizon(&g)).unwrap();
        assert!(base.is_subset_of(&wide));
    }

    #[test]
    fn minkowski_diamond_compact_at_scale() {
        let g = eta2();
        let grid = Grid::over_domain(&g.domain, 64, 3).unwrap();
        let report = causal_diamond(&[0.0, 0.0], &[1.5, 0.0], &g, &grid).unwrap();
        assert_eq!(report.verdict, DiamondVerdict::CompactAtScale);
        assert_eq!(report.bounded, BoundedVerdict::Bounded);
        assert!(report.under.is_subset_of(&report.over));
        // Diamond shape: |x| <= min(t, 1.5 - t) within 2 cells.
        let cell = grid.min_cell();
        for f in 0..grid.len() {
            if report.over.cells[f] {
                let c = grid.center(&grid.unflat(f));
                assert!(c[1].abs() <= c[0].min(1.5 - c[0]) + 2.0 * cell, "stray cell {c:?}");
            }
        }
    }

    #[test]
    fn spacelike_diamond_is_empty() {
        let g = eta2();
        let grid = Grid::over_domain(&g.domain, 48, 3).unwrap();
        let report = causal_diamond(&[0.0, 0.0], &[0.3, 1.5], &g, &grid).unwrap();
        assert_eq!(report.over.count(), 0);
        assert_eq!(report.verdict, DiamondVerdict::CompactAtScale);
    }

    #[test]
    fn open_future_of_slice_is_upper_half() {
        let g = eta2();
        let grid = Grid::over_domain(&g.domain, 64, 3).unwrap();
        let slab = BoxRegion::new(vec![0.0, -2.0], vec![0.0, 2.0]);
        let open = open_past_future(&[slab], &g, &[0.1, 0.01], &grid, TimeDirection::Future).unwrap();
        let cell = grid.min_cell();
        for f in 0..grid.len() {
            let c = grid.center(&grid.unflat(f));
            if open.cells[f] {
                assert!(c[0] > 0.0, "open future dips below the slice at {c:?}");
            }
            // Interior of {t>0} minus a margin is covered, away from the
            // side boundaries where erosion bites.
            if c[0] > 3.0 * cell && c[1].abs() < 2.0 - 3.0 * cell {
                assert!(open.cells[f], "open future misses {c:?}");
            }
        }
    }

    #[test]
    fn open_future_ladder_nesting() {
        let g = eta2();
        let grid = Grid::over_domain(&g.domain, 32, 3).unwrap();
        let slab = BoxRegion::new(vec![0.0, -2.0], vec![0.0, 2.0]);
        let coarse = open_past_future(&[slab.clone()], &g, &[0.1], &grid, TimeDirection::Future).unwrap();
        let fine = open_past_future(&[slab], &g, &[0.1, 0.01], &grid, TimeDirection::Future).unwrap();
        assert!(coarse.is_subset_of(&fine));
    }

    #[test]
    fn minkowski_imprisonment_bound_sqrt2() {
        let g = eta2();
        let grid = Grid::new(vec![(0.0, 1.0), (-1.0, 1.0)], vec![64, 128], vec![false, false], 3).unwrap();
        let k = BoxRegion::new(vec![0.0, -1.0], vec![1.0, 1.0]);
        match imprisonment_bound(&k, &g, &grid).unwrap() {
            ImprisonmentVerdict::Bounded(c) => {
                let lo = std::f64::consts::SQRT_2 * (1.0 - 2.0 / 64.0);
                let hi = std::f64::consts::SQRT_2 * (1.0 + 2.0 / 64.0);
                assert!(c >= lo && c <= hi, "C = {c} outside [{lo}, {hi}]");
            }
            other => panic!("expected bounded, got {other:?}"),
        }
    }

    #[test]
    fn ctc_cylinder_unbounded_with_witness() {
        // Periodic time axis: closed timelike coordinate circles.
        let domain = Arc::new(
            ChartDomain::new_box(vec![(0.0, 1.0), (-1.0, 1.0)])
                .unwrap()
                .with_periodic(vec![true, false]),
        );
        let g = MetricField::minkowski(domain);
        let grid = Grid::over_domain(&g.domain, 32, 3).unwrap();
        let k = BoxRegion::new(vec![0.0, -1.0], vec![1.0, 1.0]);
        match imprisonment_bound(&k, &g, &grid).unwrap() {
            ImprisonmentVerdict::EvidenceUnbounded(w) => {
                assert!(is_causal(&w, &g, 1e-9, 4).unwrap().is_causal());
            }
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn cauchy_development_is_flat_triangle() {
        let domain = Arc::new(ChartDomain::new_box(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap());
        let g = MetricField::minkowski(domain);
        let grid = Grid::over_domain(&g.domain, 64, 3).unwrap();
        let s = BoxRegion::new(vec![0.0, -1.0], vec![0.0, 1.0]);
        let dev = cauchy_development(&[s], &g, &grid, DevelopmentSide::Future).unwrap();
        let cell = grid.min_cell();
        for f in 0..grid.len() {
            let c = grid.center(&grid.unflat(f));
            let analytic = c[0] >= 0.0 && c[1].abs() + c[0] <= 1.0;
            if dev.cells[f] && c[0] > 0.5 * cell {
                assert!(c[1].abs() + c[0] <= 1.0 + cell, "D+ overshoot at {c:?}");
                assert!(c[0] >= -cell);
            }
            if analytic && c[1].abs() + c[0] <= 1.0 - cell && c[0] >= cell {
                assert!(dev.cells[f], "D+ misses {c:?}");
            }
        }
    }

    #[test]
    fn punctured_development_excludes_shadow() {
        let domain = Arc::new(
            ChartDomain::new_box(vec![(-1.0, 2.0), (-2.0, 2.0)])
                .unwrap()
                .with_obstacles(vec![BoxRegion::point(vec![1.0, 0.0])])
                .unwrap(),
        );
        let g = MetricField::minkowski(domain);
        let grid = Grid::over_domain(&g.domain, 64, 3).unwrap();
        let s = BoxRegion::new(vec![0.0, -2.0], vec![0.0, 2.0]);
        let dev = cauchy_development(&[s], &g, &grid, DevelopmentSide::Future).unwrap();
        // Cells just above the puncture: their past steps emanate from the
        // deleted point without crossing S.
        assert!(!dev.contains_point(&[1.05, 0.0]), "shadow cell above puncture wrongly in D+");
        // Far from the puncture, development is intact.
        assert!(dev.contains_point(&[0.3, -1.0]));
    }

    #[test]
    fn reach_file_round_trip() {
        let g = eta2();
        let grid = Grid::over_domain(&g.domain, 24, 3).unwrap();
        let set = future_reach(&[0.0, 0.0], &g, &grid, ReachMode::Over, default_horizon(&g)).unwrap();
        let text = reach_to_string(&set);
        let back = reach_from_str(&text).unwrap();
        assert_eq!(back.cells, set.cells);
        assert_eq!(back.grid.res, set.grid.res);
        assert_eq!(reach_to_string(&back), text);
    }
}
