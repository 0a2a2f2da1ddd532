//! Chart geometry: the coordinate chart, the background Riemannian metric,
//! continuous Lorentzian metric fields, the `Δ` distance between fields and
//! the cone-order operations (widening, narrowing, comparison, mollification).
//!
//! A widened field `g − ε·h` has strictly larger lightcones than `g`, a
//! narrowed field `g + ε·h` strictly smaller ones; both stay Lorentzian for
//! small `ε`, which makes the cone order computable in closed form against
//! the background metric.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{CausalityError, Result};

/// Absolute tolerance for cone classification: `|g(v,v)| <= TOL_CONE` counts
/// as null-within-tol.
pub const TOL_CONE: f64 = 1e-9;

/// Tolerance below which an eigenvalue no longer counts as negative when
/// checking Lorentzian signature.
pub const TOL_SIGNATURE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Symmetric bilinear forms
// ---------------------------------------------------------------------------

/// A symmetric bilinear form on an `n`-dimensional chart, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymForm {
    n: usize,
    entries: Vec<f64>,
}

impl SymForm {
    pub fn zero(n: usize) -> Self {
        SymForm { n, entries: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut f = Self::zero(n);
        for i in 0..n {
            f.entries[i * n + i] = 1.0;
        }
        f
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut f = Self::zero(diag.len());
        for (i, d) in diag.iter().enumerate() {
            f.entries[i * diag.len() + i] = *d;
        }
        f
    }

    /// Minkowski form `diag(-1, 1, …, 1)`.
    pub fn minkowski(n: usize) -> Self {
        let mut d = vec![1.0; n];
        d[0] = -1.0;
        Self::from_diag(&d)
    }

    pub fn from_rows(n: usize, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), n * n);
        SymForm { n, entries }
    }

    /// Build from the `n(n+1)/2` upper-triangle entries in row-major order.
    pub fn from_upper_triangle(n: usize, tri: &[f64]) -> Self {
        assert_eq!(tri.len(), n * (n + 1) / 2);
        let mut f = Self::zero(n);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                f.entries[i * n + j] = tri[k];
                f.entries[j * n + i] = tri[k];
                k += 1;
            }
        }
        f
    }

    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut tri = Vec::with_capacity(self.n * (self.n + 1) / 2);
        for i in 0..self.n {
            for j in i..self.n {
                tri.push(self.entries[i * self.n + j]);
            }
        }
        tri
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n + j] = v;
        self.entries[j * self.n + i] = v;
    }

    /// Evaluate the form on a pair of vectors.
    pub fn eval(&self, v: &[f64], w: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.entries[i * n + j] * w[j];
            }
            acc += v[i] * row;
        }
        acc
    }

    pub fn quad(&self, v: &[f64]) -> f64 {
        self.eval(v, v)
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &SymForm) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.entries.iter_mut().zip(other.entries.iter()) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.entries.iter_mut() {
            *a *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.is_finite())
    }

    /// Largest absolute entry difference against another form.
    pub fn max_abs_diff(&self, other: &SymForm) -> f64 {
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }

    /// Eigenvalues of the form, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.to_dmatrix().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    /// Eigenvalues relative to a positive definite form `h`, ascending
    /// (eigenvalues of `L⁻¹ G L⁻ᵀ` for `h = L Lᵀ`).
    pub fn eigenvalues_rel(&self, h: &SymForm) -> Result<Vec<f64>> {
        let chol = h
            .to_dmatrix()
            .cholesky()
            .ok_or_else(|| CausalityError::InvalidArgument("background form not positive definite".into()))?;
        let l_inv = chol.l().try_inverse().ok_or_else(|| {
            CausalityError::InvalidArgument("background form numerically singular".into())
        })?;
        let m = &l_inv * self.to_dmatrix() * l_inv.transpose();
        // Symmetrize against rounding before the eigensolver.
        let m = (&m + m.transpose()) * 0.5;
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(ev)
    }

    /// Eigen-decomposition relative to `h`: returns `(eigenvalues, frame)`
    /// where the frame columns are `h`-orthonormal eigenvectors.
    pub fn eigen_frame_rel(&self, h: &SymForm) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let chol = h
            .to_dmatrix()
            .cholesky()
            .ok_or_else(|| CausalityError::InvalidArgument("background form not positive definite".into()))?;
        let l_inv = chol.l().try_inverse().ok_or_else(|| {
            CausalityError::InvalidArgument("background form numerically singular".into())
        })?;
        let m = &l_inv * self.to_dmatrix() * l_inv.transpose();
        let m = (&m + m.transpose()) * 0.5;
        let se = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
        let back = l_inv.transpose();
        let mut vals = Vec::with_capacity(self.n);
        let mut vecs = Vec::with_capacity(self.n);
        for &k in &order {
            vals.push(se.eigenvalues[k]);
            let col = se.eigenvectors.column(k);
            let v = &back * col;
            vecs.push(v.iter().copied().collect());
        }
        Ok((vals, vecs))
    }

    /// True iff the form has Lorentzian signature `(−,+,…,+)` relative to `h`.
    pub fn is_lorentzian_rel(&self, h: &SymForm, tol: f64) -> Result<bool> {
        let ev = self.eigenvalues_rel(h)?;
        let neg = ev.iter().filter(|&&e| e < -tol).count();
        let pos = ev.iter().filter(|&&e| e > tol).count();
        Ok(neg == 1 && pos == self.n - 1)
    }
}

impl fmt::Display for SymForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{:.6}", self.get(i, j))?;
            }
            if i + 1 < self.n {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Boxes and obstacles
// ---------------------------------------------------------------------------

/// A closed coordinate box; degenerate axes (min == max) model deleted points
/// and slits.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoxRegion {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Self {
        assert_eq!(min.len(), max.len());
        BoxRegion { min, max }
    }

    pub fn point(p: Vec<f64>) -> Self {
        BoxRegion { min: p.clone(), max: p }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.min.iter().zip(self.max.iter()))
            .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.min.iter().zip(self.max.iter()).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn inflate(&self, r: f64) -> Self {
        BoxRegion {
            min: self.min.iter().map(|v| v - r).collect(),
            max: self.max.iter().map(|v| v + r).collect(),
        }
    }

    /// Slab test: does the segment `a + t(b-a)`, `t ∈ [0,1]`, meet the box?
    pub fn intersects_segment(&self, a: &[f64], b: &[f64]) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for i in 0..self.dim() {
            let d = b[i] - a[i];
            if d.abs() < 1e-300 {
                if a[i] < self.min[i] || a[i] > self.max[i] {
                    return false;
                }
            } else {
                let mut ta = (self.min[i] - a[i]) / d;
                let mut tb = (self.max[i] - a[i]) / d;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    /// Euclidean distance from a point to the box.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim() {
            let d = if x[i] < self.min[i] {
                self.min[i] - x[i]
            } else if x[i] > self.max[i] {
                x[i] - self.max[i]
            } else {
                0.0
            };
            s += d * d;
        }
        s.sqrt()
    }
}

// ---------------------------------------------------------------------------
// Chart domain
// ---------------------------------------------------------------------------

type FormField = Arc<dyn Fn(&[f64]) -> SymForm + Send + Sync>;
type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A coordinate box in `n ≥ 2` dimensions with optional periodic axes,
/// excluded closed obstacle boxes and the background Riemannian metric `h`.
#[derive(Clone)]
pub struct ChartDomain {
    pub dim: usize,
    pub bounds: Vec<(f64, f64)>,
    pub periodic: Vec<bool>,
    pub obstacles: Vec<BoxRegion>,
    h: FormField,
    /// Fast path: `h` is the identity form everywhere.
    pub h_is_identity: bool,
}

impl fmt::Debug for ChartDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartDomain")
            .field("dim", &self.dim)
            .field("bounds", &self.bounds)
            .field("periodic", &self.periodic)
            .field("obstacles", &self.obstacles.len())
            .finish()
    }
}

impl ChartDomain {
    /// Box chart with identity background metric and no periodic axes.
    pub fn new_box(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let dim = bounds.len();
        if dim < 2 {
            return Err(CausalityError::InvalidArgument(format!(
                "chart dimension must be >= 2, got {dim}"
            )));
        }
        for (lo, hi) in &bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(CausalityError::InvalidArgument(format!(
                    "invalid axis interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(ChartDomain {
            dim,
            bounds,
            periodic: vec![false; dim],
            obstacles: Vec::new(),
            h: Arc::new(|x: &[f64]| SymForm::identity(x.len())),
            h_is_identity: true,
        })
    }

    pub fn with_periodic(mut self, periodic: Vec<bool>) -> Self {
        assert_eq!(periodic.len(), self.dim);
        self.periodic = periodic;
        self
    }

    pub fn with_obstacles(mut self, obstacles: Vec<BoxRegion>) -> Result<Self> {
        for ob in &obstacles {
            for i in 0..self.dim {
                if ob.min[i] < self.bounds[i].0 - 1e-12 || ob.max[i] > self.bounds[i].1 + 1e-12 {
                    return Err(CausalityError::InvalidArgument(
                        "obstacle not contained in chart bounds".into(),
                    ));
                }
            }
        }
        self.obstacles = obstacles;
        Ok(self)
    }

    pub fn with_background_h<F>(mut self, h: F) -> Self
    where
        F: Fn(&[f64]) -> SymForm + Send + Sync + 'static,
    {
        self.h = Arc::new(h);
        self.h_is_identity = false;
        self
    }

    pub fn h_at(&self, x: &[f64]) -> SymForm {
        (self.h)(x)
    }

    pub fn axis_length(&self, i: usize) -> f64 {
        self.bounds[i].1 - self.bounds[i].0
    }

    /// Wrap periodic coordinates into the fundamental interval.
    pub fn wrap(&self, x: &[f64]) -> Vec<f64> {
        let mut w = x.to_vec();
        for i in 0..self.dim {
            if self.periodic[i] {
                let len = self.axis_length(i);
                let mut v = (w[i] - self.bounds[i].0).rem_euclid(len);
                if v < 0.0 {
                    v += len;
                }
                w[i] = self.bounds[i].0 + v;
            }
        }
        w
    }

    pub fn in_bounds(&self, x: &[f64]) -> bool {
        let w = self.wrap(x);
        (0..self.dim).all(|i| {
            self.periodic[i] || (w[i] >= self.bounds[i].0 - 1e-12 && w[i] <= self.bounds[i].1 + 1e-12)
        })
    }

    pub fn in_obstacle(&self, x: &[f64]) -> bool {
        let w = self.wrap(x);
        self.obstacles.iter().any(|ob| ob.contains(&w))
    }

    /// Point lies in the chart: inside bounds and outside every obstacle.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.in_bounds(x) && !self.in_obstacle(x)
    }

    /// Minimal-image displacement `b - a`, shortening across periodic seams.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = b.iter().zip(a.iter()).map(|(x, y)| x - y).collect();
        for i in 0..self.dim {
            if self.periodic[i] {
                let len = self.axis_length(i);
                d[i] -= (d[i] / len).round() * len;
            }
        }
        d
    }

    /// Background distance `d^h` between two chart points. Exact for identity
    /// `h`; chordal midpoint approximation otherwise (adequate for nearby
    /// points, which is how the curve metrics use it).
    pub fn dist_h(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.displacement(a, b);
        if self.h_is_identity {
            d.iter().map(|v| v * v).sum::<f64>().sqrt()
        } else {
            let mid: Vec<f64> = a.iter().zip(d.iter()).map(|(x, v)| x + 0.5 * v).collect();
            self.h_at(&mid).quad(&d).max(0.0).sqrt()
        }
    }

    /// `h`-norm of a tangent vector at `x`.
    pub fn h_norm(&self, x: &[f64], v: &[f64]) -> f64 {
        if self.h_is_identity {
            v.iter().map(|a| a * a).sum::<f64>().sqrt()
        } else {
            self.h_at(x).quad(v).max(0.0).sqrt()
        }
    }

    /// Chart diameter in the background metric (identity-h box diagonal).
    pub fn diameter(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt()
    }

    /// Does the segment `a → b` (covering coordinates) hit an obstacle
    /// inflated by `inflate`? Periodic axes are handled by testing the
    /// shifted obstacle copies one period away.
    pub fn segment_hits_obstacle(&self, a: &[f64], b: &[f64], inflate: f64) -> bool {
        if self.obstacles.is_empty() {
            return false;
        }
        let wa = self.wrap(a);
        let d = self.displacement(a, b);
        let wb: Vec<f64> = wa.iter().zip(d.iter()).map(|(x, v)| x + v).collect();
        let shifts = self.periodic_shifts();
        for ob in &self.obstacles {
            let inflated = ob.inflate(inflate);
            for shift in &shifts {
                let shifted = BoxRegion {
                    min: inflated.min.iter().zip(shift.iter()).map(|(v, s)| v + s).collect(),
                    max: inflated.max.iter().zip(shift.iter()).map(|(v, s)| v + s).collect(),
                };
                if shifted.intersects_segment(&wa, &wb) {
                    return true;
                }
            }
        }
        false
    }

    fn periodic_shifts(&self) -> Vec<Vec<f64>> {
        let mut shifts = vec![vec![0.0; self.dim]];
        for i in 0..self.dim {
            if self.periodic[i] {
                let len = self.axis_length(i);
                let mut next = Vec::new();
                for s in &shifts {
                    for k in [-1.0, 0.0, 1.0] {
                        let mut t = s.clone();
                        t[i] += k * len;
                        next.push(t);
                    }
                }
                shifts = next;
            }
        }
        shifts
    }

    /// Regular grid of sample points over a subbox (bounds by default).
    pub fn sample_grid(&self, subbox: Option<&BoxRegion>, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(2);
        let (mins, maxs): (Vec<f64>, Vec<f64>) = match subbox {
            Some(b) => (b.min.clone(), b.max.clone()),
            None => (
                self.bounds.iter().map(|b| b.0).collect(),
                self.bounds.iter().map(|b| b.1).collect(),
            ),
        };
        let mut points = Vec::new();
        let total = per_axis.pow(self.dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut p = Vec::with_capacity(self.dim);
            for i in 0..self.dim {
                let k = rem % per_axis;
                rem /= per_axis;
                let t = k as f64 / (per_axis - 1) as f64;
                p.push(mins[i] + t * (maxs[i] - mins[i]));
            }
            if !self.in_obstacle(&p) {
                points.push(p);
            }
        }
        points
    }
}

// ---------------------------------------------------------------------------
// Modulus of continuity
// ---------------------------------------------------------------------------

/// Declared modulus of continuity for a metric field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Modulus {
    /// `|g(x) - g(y)| <= c * d^h(x,y)`.
    Lipschitz { c: f64 },
    /// `|g(x) - g(y)| <= c * d^h(x,y)^alpha`.
    Hoelder { c: f64, alpha: f64 },
}

impl Modulus {
    pub fn constant() -> Self {
        Modulus::Lipschitz { c: 0.0 }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Modulus::Lipschitz { c } => c * r,
            Modulus::Hoelder { c, alpha } => c * r.abs().powf(alpha),
        }
    }
}

// ---------------------------------------------------------------------------
// Metric fields
// ---------------------------------------------------------------------------

/// A continuous Lorentzian metric field over a chart, together with a
/// time-orientation vector field and a modulus-of-continuity descriptor.
#[derive(Clone)]
pub struct MetricField {
    pub domain: Arc<ChartDomain>,
    eval: FormField,
    time: VectorField,
    pub modulus: Modulus,
    pub name: String,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("name", &self.name)
            .field("dim", &self.domain.dim)
            .field("modulus", &self.modulus)
            .finish()
    }
}

impl MetricField {
    pub fn new<F, T>(domain: Arc<ChartDomain>, eval: F, time: T, modulus: Modulus, name: &str) -> Self
    where
        F: Fn(&[f64]) -> SymForm + Send + Sync + 'static,
        T: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        MetricField {
            domain,
            eval: Arc::new(eval),
            time: Arc::new(time),
            modulus,
            name: name.to_string(),
        }
    }

    /// Constant field with time orientation along the first axis.
    pub fn constant(domain: Arc<ChartDomain>, form: SymForm, name: &str) -> Self {
        let dim = domain.dim;
        let mut t = vec![0.0; dim];
        t[0] = 1.0;
        Self::new(domain, move |_| form.clone(), move |_| t.clone(), Modulus::constant(), name)
    }

    /// Flat Minkowski field on the given chart.
    pub fn minkowski(domain: Arc<ChartDomain>) -> Self {
        let n = domain.dim;
        Self::constant(domain, SymForm::minkowski(n), "minkowski")
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn form_at(&self, x: &[f64]) -> SymForm {
        (self.eval)(x)
    }

    pub fn time_at(&self, x: &[f64]) -> Vec<f64> {
        (self.time)(x)
    }

    /// Is a tangent vector future directed at `x` (negative product against
    /// the time orientation)?
    pub fn is_future(&self, x: &[f64], v: &[f64]) -> bool {
        self.form_at(x).eval(v, &self.time_at(x)) < 0.0
    }

    /// Widen the lightcones: `g − ε·h`. Never destroys Lorentzian signature.
    pub fn widen(&self, eps: f64) -> MetricField {
        assert!(eps > 0.0, "widening epsilon must be positive");
        let base = self.clone();
        let domain = self.domain.clone();
        let dmn = domain.clone();
        MetricField {
            domain,
            eval: Arc::new(move |x: &[f64]| {
                let mut f = base.form_at(x);
                f.axpy(-eps, &dmn.h_at(x));
                f
            }),
            time: self.time.clone(),
            modulus: self.modulus,
            name: format!("widen({}, {eps})", self.name),
        }
    }

    /// Narrow the lightcones: `g + ε·h`, verifying Lorentzian signature on a
    /// default sampling grid over the chart.
    pub fn narrow(&self, eps: f64) -> Result<MetricField> {
        if eps <= 0.0 {
            return Err(CausalityError::InvalidArgument("narrowing epsilon must be positive".into()));
        }
        let base = self.clone();
        let domain = self.domain.clone();
        let dmn = domain.clone();
        let out = MetricField {
            domain: domain.clone(),
            eval: Arc::new(move |x: &[f64]| {
                let mut f = base.form_at(x);
                f.axpy(eps, &dmn.h_at(x));
                f
            }),
            time: self.time.clone(),
            modulus: self.modulus,
            name: format!("narrow({}, {eps})", self.name),
        };
        let per_axis = default_signature_nodes(domain.dim);
        for p in domain.sample_grid(None, per_axis) {
            let f = out.form_at(&p);
            if !f.is_lorentzian_rel(&domain.h_at(&p), TOL_SIGNATURE)? {
                return Err(CausalityError::SignatureCollapse {
                    point: p,
                    detail: format!("narrowing by {eps} loses the negative eigenvalue"),
                });
            }
        }
        Ok(out)
    }

    /// Sampled consistency checks of the declared invariants: Lorentzian
    /// signature, timelike time-orientation, modulus bound on sampled pairs.
    pub fn validate(&self, per_axis: usize, tol: f64) -> Result<()> {
        let grid = self.domain.sample_grid(None, per_axis);
        for p in &grid {
            let f = self.form_at(p);
            if !f.is_finite() {
                return Err(CausalityError::InvalidArgument(format!("non-finite entries at {p:?}")));
            }
            if !f.is_lorentzian_rel(&self.domain.h_at(p), TOL_SIGNATURE)? {
                return Err(CausalityError::SignatureCollapse {
                    point: p.clone(),
                    detail: "field is not Lorentzian at sampled point".into(),
                });
            }
            let t = self.time_at(p);
            if f.quad(&t) >= 0.0 {
                return Err(CausalityError::InvalidArgument(format!(
                    "time orientation not timelike at {p:?}"
                )));
            }
        }
        // Modulus check on consecutive sampled pairs.
        for pair in grid.windows(2) {
            let d = self.domain.dist_h(&pair[0], &pair[1]);
            let diff = self.form_at(&pair[0]).max_abs_diff(&self.form_at(&pair[1]));
            if diff > self.modulus.eval(d) + tol {
                return Err(CausalityError::InvalidArgument(format!(
                    "modulus violated between {:?} and {:?}: diff {diff} > bound {}",
                    pair[0],
                    pair[1],
                    self.modulus.eval(d)
                )));
            }
        }
        Ok(())
    }
}

fn default_signature_nodes(dim: usize) -> usize {
    match dim {
        2 => 17,
        3 => 9,
        _ => 5,
    }
}

// ---------------------------------------------------------------------------
// Direction sampling and cone sample sets
// ---------------------------------------------------------------------------

/// Deterministic unit-sphere directions (Euclidean frame). In 2D these are
/// equally spaced angles including the axes; in higher dimensions a golden-
/// ratio lattice seeded with the coordinate axes.
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(count);
    if dim == 2 {
        for k in 0..count {
            let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            dirs.push(vec![a.cos(), a.sin()]);
        }
    } else {
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; dim];
                v[i] = s;
                dirs.push(v);
            }
        }
        // Kronecker lattice on the sphere via normalized low-discrepancy
        // points in the cube.
        let alphas: Vec<f64> = (0..dim).map(|i| (2.0 + i as f64).sqrt().fract()).collect();
        let mut k = 0usize;
        while dirs.len() < count {
            k += 1;
            let mut v: Vec<f64> = (0..dim).map(|i| (k as f64 * alphas[i]).fract() * 2.0 - 1.0).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            for a in v.iter_mut() {
                *a /= norm;
            }
            dirs.push(v);
        }
        dirs.truncate(count.max(2 * dim));
    }
    dirs
}

/// Unit directions with respect to `h` at a point: Euclidean directions are
/// pushed through `L⁻ᵀ` for `h = L Lᵀ` and renormalized.
pub fn unit_h_directions(domain: &ChartDomain, x: &[f64], count: usize) -> Vec<Vec<f64>> {
    let dirs = unit_directions(domain.dim, count);
    if domain.h_is_identity {
        return dirs;
    }
    let h = domain.h_at(x);
    let chol = h.to_dmatrix().cholesky().expect("background form must be positive definite");
    let l_inv_t = chol.l().try_inverse().expect("singular background form").transpose();
    dirs.into_iter()
        .map(|u| {
            let v = &l_inv_t * DMatrix::from_column_slice(domain.dim, 1, &u);
            let mut v: Vec<f64> = v.iter().copied().collect();
            let norm = h.quad(&v).sqrt();
            for a in v.iter_mut() {
                *a /= norm;
            }
            v
        })
        .collect()
}

/// Classification of a sampled direction against a metric's lightcone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeClass {
    Timelike,
    NullWithinTol,
    Spacelike,
}

/// A finite discretization of the lightcone of `g` at a base point.
#[derive(Clone, Debug)]
pub struct ConeSample {
    pub direction: Vec<f64>,
    pub class: ConeClass,
    pub future: bool,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct ConeSampleSet {
    pub base: Vec<f64>,
    pub samples: Vec<ConeSample>,
}

impl ConeSampleSet {
    /// Sample the cone of `g` at `x`: `count` generic unit-`h` directions
    /// plus the exact null directions over each sampled spatial direction
    /// (so the cone boundary is represented to rounding accuracy).
    pub fn sample(g: &MetricField, x: &[f64], count: usize) -> Result<ConeSampleSet> {
        let domain = &g.domain;
        let form = g.form_at(x);
        let h = domain.h_at(x);
        let mut dirs = unit_h_directions(domain, x, count);
        dirs.extend(exact_null_directions(&form, &h, count / 2)?);
        let tvec = g.time_at(x);
        let mut samples = Vec::with_capacity(dirs.len());
        for d in dirs {
            let v = form.quad(&d);
            let class = if v < -TOL_CONE {
                ConeClass::Timelike
            } else if v <= TOL_CONE {
                ConeClass::NullWithinTol
            } else {
                ConeClass::Spacelike
            };
            let future = form.eval(&d, &tvec) < 0.0;
            samples.push(ConeSample { direction: d, class, future, value: v });
        }
        Ok(ConeSampleSet { base: x.to_vec(), samples })
    }
}

/// Exact null directions of a form relative to `h`, normalized to unit
/// `h`-norm: for each sampled direction in the positive eigenspace, the two
/// null combinations with the timelike eigenvector.
pub fn exact_null_directions(form: &SymForm, h: &SymForm, spatial_count: usize) -> Result<Vec<Vec<f64>>> {
    let n = form.dim();
    let (vals, vecs) = form.eigen_frame_rel(h)?;
    if !(vals[0] < 0.0 && vals[1] > 0.0) {
        // Not Lorentzian here; no null cone to sample.
        return Ok(Vec::new());
    }
    let a = -vals[0];
    let u = &vecs[0];
    let spatial_dirs: Vec<Vec<f64>> = if n == 2 {
        vec![vec![1.0]]
    } else {
        unit_directions(n - 1, spatial_count.max(2))
    };
    let mut out = Vec::new();
    for sd in spatial_dirs {
        // Spatial combination w = sum sd_i * e_{i+1}; sigma = form(w,w).
        let mut w = vec![0.0; n];
        for (i, c) in sd.iter().enumerate() {
            for k in 0..n {
                w[k] += c * vecs[i + 1][k];
            }
        }
        let sigma = form.quad(&w);
        if sigma <= 0.0 {
            continue;
        }
        let beta = (a / sigma).sqrt();
        for s in [1.0, -1.0] {
            let mut v: Vec<f64> = (0..n).map(|k| u[k] + s * beta * w[k]).collect();
            let norm = h.quad(&v).sqrt();
            if norm > 0.0 {
                for c in v.iter_mut() {
                    *c /= norm;
                }
                out.push(v);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Δ distance between metric fields
// ---------------------------------------------------------------------------

/// How a region and direction budget are sampled by the pointwise operations.
#[derive(Clone, Debug)]
pub struct SamplingSpec {
    /// Grid nodes per axis for base points.
    pub points_per_axis: usize,
    /// Unit-sphere directions per base point.
    pub directions: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        SamplingSpec { points_per_axis: 5, directions: 128 }
    }
}

/// Result of a sampled `Δ` evaluation: the sampled supremum is a lower
/// estimate of the true distance; `upper` inflates it by the declared moduli
/// over one sample-grid cell.
#[derive(Clone, Copy, Debug)]
pub struct DeltaEstimate {
    pub sampled: f64,
    pub upper: f64,
}

/// Sampled supremum of `|g1(X,Y) − g2(X,Y)|` over unit-`h` pairs on a region.
///
/// The difference form is symmetric, so the supremum over pairs is attained
/// on the diagonal `(X, X)`; a strided subset of cross pairs is evaluated as
/// well.
pub fn metric_delta(
    g1: &MetricField,
    g2: &MetricField,
    region: Option<&BoxRegion>,
    samples: &SamplingSpec,
) -> Result<DeltaEstimate> {
    let domain = &g1.domain;
    if let Some(r) = region {
        let c = r.center();
        if !domain.in_bounds(&c) {
            return Err(CausalityError::OutsideDomain { point: c, detail: "delta region outside chart".into() });
        }
    }
    let points = domain.sample_grid(region, samples.points_per_axis);
    if points.is_empty() {
        return Err(CausalityError::EmptySamples("no sample points in region".into()));
    }
    let mut sup: f64 = 0.0;
    let mut max_cell = 0.0f64;
    for (pi, p) in points.iter().enumerate() {
        let f1 = g1.form_at(p);
        let f2 = g2.form_at(p);
        if !f1.is_finite() || !f2.is_finite() {
            return Err(CausalityError::InvalidArgument(format!("non-finite metric entries at {p:?}")));
        }
        let mut diff = f1;
        diff.axpy(-1.0, &f2);
        let dirs = unit_h_directions(domain, p, samples.directions);
        for (i, x) in dirs.iter().enumerate() {
            sup = sup.max(diff.quad(x).abs());
            // Strided cross pairs.
            let j = (i * 7 + 3) % dirs.len();
            sup = sup.max(diff.eval(x, &dirs[j]).abs());
        }
        if pi + 1 < points.len() {
            max_cell = max_cell.max(domain.dist_h(p, &points[pi + 1]));
        }
    }
    let inflation = g1.modulus.eval(max_cell) + g2.modulus.eval(max_cell);
    Ok(DeltaEstimate { sampled: sup, upper: sup + inflation })
}

// ---------------------------------------------------------------------------
// Cone order comparison
// ---------------------------------------------------------------------------

/// Outcome of a sampled cone-order comparison.
#[derive(Clone, Debug, PartialEq)]
pub enum ConeOrder {
    /// Every sampled `g1`-causal direction is `g2`-timelike with margin.
    StrictlyPrecedes,
    /// Every sampled `g1`-causal direction is `g2`-causal within tolerance,
    /// but some only barely (zero margin on null directions).
    WeaklyPrecedes,
    /// A sampled `g1`-causal direction is `g2`-spacelike.
    Fails { point: Vec<f64>, direction: Vec<f64>, value: f64 },
}

/// Minimum direction budget per base point.
pub const MIN_CONE_DIRECTIONS: usize = 64;

/// Compare the lightcones of two fields over a compact subbox by sampling:
/// generic unit directions plus the exact null directions of `g1`.
pub fn cone_precedes(
    g1: &MetricField,
    g2: &MetricField,
    region: Option<&BoxRegion>,
    directions: usize,
) -> Result<ConeOrder> {
    let directions = directions.max(MIN_CONE_DIRECTIONS);
    let domain = &g1.domain;
    let points = domain.sample_grid(region, 5);
    if points.is_empty() {
        return Err(CausalityError::EmptySamples("cone comparison region has no sample points".into()));
    }
    let mut all_strict = true;
    for p in &points {
        let f1 = g1.form_at(p);
        let f2 = g2.form_at(p);
        let h = domain.h_at(p);
        let mut dirs = unit_h_directions(domain, p, directions);
        dirs.extend(exact_null_directions(&f1, &h, directions / 2)?);
        for v in dirs {
            let v1 = f1.quad(&v);
            if v1 > TOL_CONE {
                continue; // not g1-causal
            }
            let v2 = f2.quad(&v);
            if v2 < -TOL_CONE {
                continue; // strictly timelike for g2
            }
            if v2 <= TOL_CONE {
                all_strict = false; // causal within tolerance, no margin
            } else {
                return Ok(ConeOrder::Fails { point: p.clone(), direction: v, value: v2 });
            }
        }
    }
    if all_strict {
        Ok(ConeOrder::StrictlyPrecedes)
    } else {
        Ok(ConeOrder::WeaklyPrecedes)
    }
}

// ---------------------------------------------------------------------------
// Grid-sampled fields and mollification
// ---------------------------------------------------------------------------

/// A metric field stored on a regular node grid and interpolated
/// multilinearly between nodes.
#[derive(Clone, Debug)]
pub struct GridMetric {
    pub bounds: Vec<(f64, f64)>,
    pub nodes_per_axis: Vec<usize>,
    /// Row-major over the last axis fastest, `n(n+1)/2` upper-triangle
    /// entries per node.
    pub values: Vec<Vec<f64>>,
    pub dim: usize,
}

impl GridMetric {
    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.iter().product()
    }

    pub fn node_point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(i, &k)| {
                let (lo, hi) = self.bounds[i];
                lo + (hi - lo) * k as f64 / (self.nodes_per_axis[i] - 1) as f64
            })
            .collect()
    }

    fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for (i, &k) in idx.iter().enumerate() {
            f = f * self.nodes_per_axis[i] + k;
        }
        f
    }

    /// Multilinear interpolation of the stored forms.
    pub fn interpolate(&self, x: &[f64]) -> SymForm {
        let dim = self.dim;
        let mut base = vec![0usize; dim];
        let mut frac = vec![0.0f64; dim];
        for i in 0..dim {
            let (lo, hi) = self.bounds[i];
            let m = self.nodes_per_axis[i] - 1;
            let t = ((x[i] - lo) / (hi - lo) * m as f64).clamp(0.0, m as f64);
            let k = (t.floor() as usize).min(m.saturating_sub(1));
            base[i] = k;
            frac[i] = t - k as f64;
        }
        let tri_len = dim * (dim + 1) / 2;
        let mut acc = vec![0.0f64; tri_len];
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for i in 0..dim {
                if corner & (1 << i) != 0 {
                    idx[i] = (base[i] + 1).min(self.nodes_per_axis[i] - 1);
                    w *= frac[i];
                } else {
                    w *= 1.0 - frac[i];
                }
            }
            if w == 0.0 {
                continue;
            }
            let vals = &self.values[self.flat(&idx)];
            for (a, v) in acc.iter_mut().zip(vals.iter()) {
                *a += w * v;
            }
        }
        SymForm::from_upper_triangle(dim, &acc)
    }
}

/// Grid-kernel mollification of a metric field: the compactly supported
/// kernel `(1 − (d/r)²)²` averaged over grid nodes, componentwise on the
/// form entries, re-verified for Lorentzian signature on all nodes.
pub fn mollify(g: &MetricField, radius: f64, nodes_per_axis: usize) -> Result<MetricField> {
    let domain = g.domain.clone();
    let dim = domain.dim;
    let nodes_per_axis = nodes_per_axis.max(3);
    let cell = domain
        .bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (nodes_per_axis - 1) as f64)
        .fold(0.0f64, f64::max);
    if radius < cell {
        return Err(CausalityError::InvalidArgument(format!(
            "mollification radius {radius} below grid cell {cell}"
        )));
    }
    let bounds = domain.bounds.clone();
    let npa = vec![nodes_per_axis; dim];
    let mut grid = GridMetric {
        bounds: bounds.clone(),
        nodes_per_axis: npa.clone(),
        values: Vec::new(),
        dim,
    };
    // Collect source node forms once.
    let mut node_points = Vec::with_capacity(grid.node_count());
    let mut idx = vec![0usize; dim];
    loop {
        node_points.push(grid.node_point(&idx));
        let mut i = dim;
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < npa[i] {
                break;
            }
            idx[i] = 0;
            if i == 0 {
                break;
            }
        }
        if idx.iter().all(|&k| k == 0) {
            break;
        }
    }
    let source: Vec<SymForm> = node_points.iter().map(|p| g.form_at(p)).collect();
    let tri_len = dim * (dim + 1) / 2;
    let mut values = Vec::with_capacity(node_points.len());
    for (i, p) in node_points.iter().enumerate() {
        let mut acc = vec![0.0f64; tri_len];
        let mut wsum = 0.0;
        for (j, q) in node_points.iter().enumerate() {
            let d = domain.dist_h(p, q);
            if d >= radius {
                continue;
            }
            let u = 1.0 - (d / radius) * (d / radius);
            let w = u * u;
            wsum += w;
            let tri = source[j].upper_triangle();
            for (a, v) in acc.iter_mut().zip(tri.iter()) {
                *a += w * v;
            }
        }
        if wsum == 0.0 {
            acc = source[i].upper_triangle();
        } else {
            for a in acc.iter_mut() {
                *a /= wsum;
            }
        }
        values.push(acc);
    }
    grid.values = values;
    // Signature re-verification on all nodes.
    for (i, p) in node_points.iter().enumerate() {
        let f = SymForm::from_upper_triangle(dim, &grid.values[i]);
        if !f.is_lorentzian_rel(&domain.h_at(p), TOL_SIGNATURE)? {
            return Err(CausalityError::SignatureCollapse {
                point: p.clone(),
                detail: format!("mollification with radius {radius} destroyed the signature"),
            });
        }
    }
    let grid = Arc::new(grid);
    let time = g.time_at(&domain.bounds.iter().map(|b| 0.5 * (b.0 + b.1)).collect::<Vec<_>>());
    Ok(MetricField {
        domain,
        eval: Arc::new(move |x: &[f64]| grid.interpolate(x)),
        time: Arc::new(move |_| time.clone()),
        modulus: g.modulus,
        name: format!("mollify({}, {radius})", g.name),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart2() -> Arc<ChartDomain> {
        Arc::new(ChartDomain::new_box(vec![(-2.0, 2.0), (-2.0, 2.0)]).unwrap())
    }

    fn eta2() -> MetricField {
        MetricField::minkowski(chart2())
    }

    #[test]
    fn delta_identical_fields_is_zero() {
        let g = eta2();
        let d = metric_delta(&g, &g, None, &SamplingSpec::default()).unwrap();
        assert_eq!(d.sampled, 0.0);
    }

    #[test]
    fn delta_pure_h_shift_equals_eps() {
        let g = eta2();
        let shifted = g.widen(0.1); // eta - 0.1 h
        let d = metric_delta(&g, &shifted, None, &SamplingSpec::default()).unwrap();
        assert!((d.sampled - 0.1).abs() < 1e-12, "got {}", d.sampled);
    }

    #[test]
    fn delta_doubled_minkowski_is_one() {
        let g = eta2();
        let doubled = MetricField::constant(chart2(), SymForm::from_diag(&[-2.0, 2.0]), "2eta");
        let d = metric_delta(&g, &doubled, None, &SamplingSpec { points_per_axis: 3, directions: 256 }).unwrap();
        assert!((d.sampled - 1.0).abs() < 1e-9, "got {}", d.sampled);
    }

    #[test]
    fn widen_is_componentwise_subtraction() {
        let g = eta2();
        let w = g.widen(0.2);
        let f = w.form_at(&[0.3, -0.7]);
        assert!((f.get(0, 0) - (-1.2)).abs() < 1e-15);
        assert!((f.get(1, 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn widen_strictly_precedes() {
        let g = eta2();
        let w = g.widen(0.01);
        let order = cone_precedes(&g, &w, None, 256).unwrap();
        assert_eq!(order, ConeOrder::StrictlyPrecedes);
    }

    #[test]
    fn cone_precedes_is_reflexively_weak() {
        let g = eta2();
        let order = cone_precedes(&g, &g, None, 256).unwrap();
        assert_eq!(order, ConeOrder::WeaklyPrecedes);
    }

    #[test]
    fn cone_precedes_fails_backwards() {
        let g = eta2();
        let w = g.widen(0.1);
        match cone_precedes(&w, &g, None, 256).unwrap() {
            ConeOrder::Fails { direction, value, .. } => {
                // Witness is timelike for the widened field but spacelike for eta.
                let f = g.form_at(&[0.0, 0.0]);
                assert!(f.quad(&direction) > 0.0);
                assert!(value > 0.0);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn narrow_keeps_signature_then_collapses() {
        let g = eta2();
        let n = g.narrow(0.5).unwrap();
        let f = n.form_at(&[0.0, 0.0]);
        assert!((f.get(0, 0) - (-0.5)).abs() < 1e-15);
        assert!((f.get(1, 1) - 1.5).abs() < 1e-15);
        match g.narrow(1.0) {
            Err(CausalityError::SignatureCollapse { .. }) => {}
            other => panic!("expected signature collapse, got {other:?}"),
        }
    }

    #[test]
    fn narrow_inverts_widen() {
        let g = eta2();
        let round = g.widen(0.3).narrow(0.3).unwrap();
        for p in g.domain.sample_grid(None, 9) {
            assert!(round.form_at(&p).max_abs_diff(&g.form_at(&p)) < 1e-12);
        }
    }

    #[test]
    fn mollify_constant_field_is_identity() {
        let g = eta2();
        let m = mollify(&g, 0.5, 17).unwrap();
        for p in g.domain.sample_grid(None, 9) {
            assert!(m.form_at(&p).max_abs_diff(&g.form_at(&p)) < 1e-12);
        }
    }

    #[test]
    fn widen_monotone_in_eps() {
        let g = eta2();
        let w1 = g.widen(0.05);
        let w2 = g.widen(0.2);
        assert_eq!(cone_precedes(&w1, &w2, None, 128).unwrap(), ConeOrder::StrictlyPrecedes);
    }

    #[test]
    fn decreasing_widen_family_eventually_precedes() {
        // For g_n = widen(g, 1/n) and g' strictly wider than g, some tail of
        // the family precedes g' on the chart.
        let g = eta2();
        let gp = g.widen(0.15);
        assert_eq!(cone_precedes(&g, &gp, None, 128).unwrap(), ConeOrder::StrictlyPrecedes);
        let mut n0 = None;
        for n in 1..=32 {
            let gn = g.widen(1.0 / n as f64);
            if cone_precedes(&gn, &gp, None, 128).unwrap() == ConeOrder::StrictlyPrecedes {
                n0 = Some(n);
                break;
            }
        }
        let n0 = n0.expect("no index found");
        for n in n0..n0 + 4 {
            let gn = g.widen(1.0 / n as f64);
            assert_eq!(cone_precedes(&gn, &gp, None, 128).unwrap(), ConeOrder::StrictlyPrecedes);
        }
    }

    #[test]
    fn exact_null_directions_are_null() {
        let g = eta2();
        let f = g.form_at(&[0.0, 0.0]);
        let h = SymForm::identity(2);
        for v in exact_null_directions(&f, &h, 8).unwrap() {
            assert!(f.quad(&v).abs() < 1e-12);
            assert!((h.quad(&v).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cone_sample_set_classification() {
        let g = eta2();
        let set = ConeSampleSet::sample(&g, &[0.0, 0.0], 64).unwrap();
        let h = SymForm::identity(2);
        for s in &set.samples {
            assert!((h.quad(&s.direction).sqrt() - 1.0).abs() < 1e-12);
            match s.class {
                ConeClass::Timelike => assert!(s.value < -TOL_CONE),
                ConeClass::NullWithinTol => assert!(s.value.abs() <= TOL_CONE),
                ConeClass::Spacelike => assert!(s.value > TOL_CONE),
            }
        }
        assert!(set.samples.iter().any(|s| s.class == ConeClass::NullWithinTol));
    }
}
