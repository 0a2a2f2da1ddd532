//! The example-spacetime catalog: flat charts, cylinders with closed or
//! causal identifications, punctured and slit charts, a Hölder bubble
//! field, a conformal rescaling, and widened families — each with
//! machine-checkable analytic facts usable as test oracles.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{CausalityError, Result};
use crate::geom::{cone_precedes, BoxRegion, ChartDomain, ConeOrder, MetricField, Modulus, SymForm};

/// Where an analytic fact comes from: an elementary closed-form argument,
/// or a fine-grid numerical cross-check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactProvenance {
    ClosedForm,
    FineGridOracle,
}

/// Machine-checkable content of a fact (None = prose only).
#[derive(Clone, Debug)]
pub enum FactCheck {
    TimeSeparation { p: Vec<f64>, q: Vec<f64>, value: f64, rel_tol: f64 },
    CausalityPasses,
    CausalityFails,
    SimplicityFails,
    /// Cones agree with another catalog entry built on the same chart.
    ConesMatch { reference: &'static str },
    None,
}

#[derive(Clone, Debug)]
pub struct AnalyticFact {
    pub statement: String,
    pub provenance: FactProvenance,
    pub check: FactCheck,
}

#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub summary: &'static str,
    /// Adjustable parameters with their defaults.
    pub parameters: Vec<(&'static str, f64)>,
    pub facts: Vec<AnalyticFact>,
}

fn fact(statement: &str, provenance: FactProvenance, check: FactCheck) -> AnalyticFact {
    AnalyticFact { statement: statement.to_string(), provenance, check }
}

/// All catalog entries with their declared facts.
pub fn catalog_list() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            id: "minkowski2d",
            summary: "flat 2D chart on [-2,3] x [-2,3]",
            parameters: vec![],
            facts: vec![
                fact(
                    "time separation from (0,0) to (2,1) is sqrt(3)",
                    FactProvenance::ClosedForm,
                    FactCheck::TimeSeparation { p: vec![0.0, 0.0], q: vec![2.0, 1.0], value: 3.0f64.sqrt(), rel_tol: 0.01 },
                ),
                fact(
                    "the causal future of the origin is { t >= |x| }",
                    FactProvenance::ClosedForm,
                    FactCheck::None,
                ),
                fact("all causal-ladder rungs pass", FactProvenance::ClosedForm, FactCheck::CausalityPasses),
            ],
        },
        CatalogEntry {
            id: "minkowski3d",
            summary: "flat 3D chart on [-1,1]^3",
            parameters: vec![],
            facts: vec![fact("all causal-ladder rungs pass", FactProvenance::ClosedForm, FactCheck::CausalityPasses)],
        },
        CatalogEntry {
            id: "ctc_cylinder",
            summary: "flat metric with the time axis compactified: every t-circle is a closed causal curve",
            parameters: vec![],
            facts: vec![fact(
                "causality fails with a closed causal curve wrapping the time circle",
                FactProvenance::ClosedForm,
                FactCheck::CausalityFails,
            )],
        },
        CatalogEntry {
            id: "causal_cylinder",
            summary: "flat metric with the space axis compactified; causality survives",
            parameters: vec![],
            facts: vec![fact(
                "time increases along every causal curve, so causality holds",
                FactProvenance::ClosedForm,
                FactCheck::CausalityPasses,
            )],
        },
        CatalogEntry {
            id: "punctured_minkowski",
            summary: "flat chart with a point-like region removed at (1,0)",
            parameters: vec![],
            facts: vec![
                fact(
                    "the surface { t = 0 } is not met by curves emanating from the removed point",
                    FactProvenance::ClosedForm,
                    FactCheck::None,
                ),
                fact("causality still passes", FactProvenance::ClosedForm, FactCheck::CausalityPasses),
            ],
        },
        CatalogEntry {
            id: "slit_minkowski",
            summary: "flat chart with a closed spatial slit {t=1} x [-1/2,1/2] removed",
            parameters: vec![],
            facts: vec![
                fact(
                    "the reach relation is not closed across the slit shadow boundary",
                    FactProvenance::FineGridOracle,
                    FactCheck::SimplicityFails,
                ),
                fact("causality still passes", FactProvenance::ClosedForm, FactCheck::CausalityPasses),
            ],
        },
        CatalogEntry {
            id: "bubble_metric",
            summary: "Hoelder-continuous cone field -(1 + a*sqrt(|x|))^2 dt^2 + dx^2",
            parameters: vec![("a", 0.5), ("alpha", 0.5)],
            facts: vec![
                fact(
                    "cones narrow away from x = 0; the field is Hoelder but not Lipschitz there",
                    FactProvenance::ClosedForm,
                    FactCheck::None,
                ),
                fact("all causal-ladder rungs pass on the slab", FactProvenance::FineGridOracle, FactCheck::CausalityPasses),
            ],
        },
        CatalogEntry {
            id: "conformal_scaled",
            summary: "conformally rescaled flat metric Omega^2 * eta: identical cones",
            parameters: vec![("amplitude", 0.25)],
            facts: vec![fact(
                "cone order agrees with the flat metric in both directions",
                FactProvenance::ClosedForm,
                FactCheck::ConesMatch { reference: "minkowski2d_like" },
            )],
        },
        CatalogEntry {
            id: "widened_minkowski2d",
            summary: "flat metric with cones widened by eps against the background",
            parameters: vec![("eps", 0.1)],
            facts: vec![fact(
                "strictly wider cones than the flat metric",
                FactProvenance::ClosedForm,
                FactCheck::None,
            )],
        },
    ]
}

fn param(params: &BTreeMap<String, f64>, name: &str, default: f64) -> f64 {
    params.get(name).copied().unwrap_or(default)
}

fn minkowski2d_domain() -> Result<Arc<ChartDomain>> {
    Ok(Arc::new(ChartDomain::new_box(vec![(-2.0, 3.0), (-2.0, 3.0)])?))
}

/// Construct a catalog spacetime by id, applying parameter overrides.
pub fn build_spacetime(id: &str, params: &BTreeMap<String, f64>) -> Result<MetricField> {
    match id {
        "minkowski2d" => Ok(MetricField::minkowski(minkowski2d_domain()?)),
        "minkowski3d" => {
            let domain = Arc::new(ChartDomain::new_box(vec![(-1.0, 1.0); 3])?);
            Ok(MetricField::minkowski(domain))
        }
        "ctc_cylinder" => {
            let domain = Arc::new(
                ChartDomain::new_box(vec![(0.0, 1.0), (-1.0, 1.0)])?.with_periodic(vec![true, false]),
            );
            Ok(MetricField::minkowski(domain))
        }
        "causal_cylinder" => {
            let domain = Arc::new(
                ChartDomain::new_box(vec![(-1.0, 1.0), (-1.0, 1.0)])?.with_periodic(vec![false, true]),
            );
            Ok(MetricField::minkowski(domain))
        }
        "punctured_minkowski" => {
            let domain = Arc::new(
                ChartDomain::new_box(vec![(-1.0, 3.0), (-2.0, 2.0)])?
                    .with_obstacles(vec![BoxRegion::new(vec![0.98, -0.02], vec![1.02, 0.02])])?,
            );
            Ok(MetricField::minkowski(domain))
        }
        "slit_minkowski" => {
            let domain = Arc::new(
                ChartDomain::new_box(vec![(0.0, 3.0), (-2.0, 2.0)])?
                    .with_obstacles(vec![BoxRegion::new(vec![1.0, -0.5], vec![1.0, 0.5])])?,
            );
            Ok(MetricField::minkowski(domain))
        }
        "bubble_metric" => {
            let a = param(params, "a", 0.5);
            let alpha = param(params, "alpha", 0.5);
            if !(a > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
                return Err(CausalityError::InvalidArgument(
                    "bubble metric needs a > 0 and 0 < alpha < 1".into(),
                ));
            }
            let domain = Arc::new(ChartDomain::new_box(vec![(-1.0, 1.0), (-2.0, 2.0)])?);
            let dim = domain.dim;
            let eval = move |x: &[f64]| -> SymForm {
                let lapse = 1.0 + a * x[1].abs().powf(alpha);
                let mut d = vec![1.0; dim];
                d[0] = -lapse * lapse;
                SymForm::from_diag(&d)
            };
            let time = move |_: &[f64]| {
                let mut t = vec![0.0; dim];
                t[0] = 1.0;
                t
            };
            // (1+a r^alpha)^2 - (1+a s^alpha)^2 = (2 + a(r^alpha + s^alpha)) * a (r^alpha - s^alpha)
            // and |r^alpha - s^alpha| <= |r-s|^alpha, with r, s <= 2 on this chart.
            let rmax: f64 = 2.0;
            let c = a * (2.0 + 2.0 * a * rmax.powf(alpha));
            Ok(MetricField::new(domain, eval, time, Modulus::Hoelder { c, alpha }, "bubble_metric"))
        }
        "conformal_scaled" => {
            let amp = param(params, "amplitude", 0.25);
            if !(amp.abs() < 0.9) {
                return Err(CausalityError::InvalidArgument("conformal amplitude must satisfy |a| < 0.9".into()));
            }
            let domain = minkowski2d_domain()?;
            let dim = domain.dim;
            let eval = move |x: &[f64]| -> SymForm {
                let omega2 = 1.0 + amp * x[0].sin() * x[1].cos();
                let mut d = vec![omega2; dim];
                d[0] = -omega2;
                SymForm::from_diag(&d)
            };
            let time = move |_: &[f64]| {
                let mut t = vec![0.0; dim];
                t[0] = 1.0;
                t
            };
            let c = 2.0 * amp.abs() * 1.5; // |grad Omega^2| <= amp*sqrt(2), times form scale
            Ok(MetricField::new(domain, eval, time, Modulus::Lipschitz { c }, "conformal_scaled"))
        }
        "widened_minkowski2d" => {
            let eps = param(params, "eps", 0.1);
            if eps <= 0.0 {
                return Err(CausalityError::InvalidArgument("eps must be positive".into()));
            }
            Ok(MetricField::minkowski(minkowski2d_domain()?).widen(eps))
        }
        other => Err(CausalityError::InvalidArgument(format!("unknown spacetime id '{other}'"))),
    }
}

/// Flat metric on the same chart as the given field, for cone comparisons.
pub fn flat_on_same_chart(g: &MetricField) -> MetricField {
    MetricField::minkowski(g.domain.clone())
}

/// Grid with square cells at the given linear density (cells per unit
/// length). Grid-based diagnostics need square cells so exact null steps
/// exist in the stencil.
pub fn square_cell_grid(g: &MetricField, cells_per_unit: f64, stencil: usize) -> Result<crate::reach::Grid> {
    let res: Vec<usize> = g
        .domain
        .bounds
        .iter()
        .map(|(lo, hi)| (((hi - lo) * cells_per_unit).round() as usize).max(2))
        .collect();
    crate::reach::Grid::new(g.domain.bounds.clone(), res, g.domain.periodic.clone(), stencil)
}

/// Verify one machine-checkable fact at modest resolution. Returns false on
/// a definite mismatch; errors propagate from construction.
pub fn verify_fact(id: &str, check: &FactCheck, seed: u64) -> Result<bool> {
    let params = BTreeMap::new();
    let g = build_spacetime(id, &params)?;
    match check {
        FactCheck::TimeSeparation { p, q, value, rel_tol } => {
            let (tau, _) = crate::solver::time_separation(p, q, &g, 16, 4, seed)?;
            Ok((tau - value).abs() <= rel_tol * value.abs().max(1e-12))
        }
        FactCheck::CausalityPasses => {
            let grid = square_cell_grid(&g, if g.domain.dim > 2 { 12.0 } else { 48.0 }, 2)?;
            Ok(crate::ladder::check_causality(&g, &grid)?.passed())
        }
        FactCheck::CausalityFails => {
            let grid = square_cell_grid(&g, 48.0, 2)?;
            Ok(crate::ladder::check_causality(&g, &grid)?.failed())
        }
        FactCheck::SimplicityFails => {
            let grid = square_cell_grid(&g, 12.0, 3)?;
            Ok(crate::ladder::check_causal_simplicity(&g, &grid, 40, seed)?.failed())
        }
        FactCheck::ConesMatch { .. } => {
            let flat = flat_on_same_chart(&g);
            let ab = cone_precedes(&g, &flat, None, 96)?;
            let ba = cone_precedes(&flat, &g, None, 96)?;
            Ok(!matches!(ab, ConeOrder::Fails { .. }) && !matches!(ba, ConeOrder::Fails { .. }))
        }
        FactCheck::None => Ok(true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_entries_build_and_validate() {
        let params = BTreeMap::new();
        for entry in catalog_list() {
            let g = build_spacetime(entry.id, &params).unwrap();
            g.validate(7, 1e-9).unwrap_or_else(|e| panic!("{} failed validation: {e}", entry.id));
        }
    }

    #[test]
    fn unknown_id_rejected() {
        assert!(build_spacetime("nope", &BTreeMap::new()).is_err());
    }

    #[test]
    fn parameter_overrides_apply() {
        let mut params = BTreeMap::new();
        params.insert("eps".to_string(), 0.5);
        let g = build_spacetime("widened_minkowski2d", &params).unwrap();
        let flat = flat_on_same_chart(&g);
        // widen(eta, 0.5) differs from eta by 0.5 on the diagonal.
        let p = vec![0.0, 0.0];
        assert!((g.form_at(&p).max_abs_diff(&flat.form_at(&p)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bubble_rejects_bad_parameters() {
        let mut params = BTreeMap::new();
        params.insert("alpha".to_string(), 1.5);
        assert!(build_spacetime("bubble_metric", &params).is_err());
    }

    #[test]
    fn quick_facts_verify() {
        for entry in catalog_list() {
            for f in &entry.facts {
                match f.check {
                    FactCheck::TimeSeparation { .. } | FactCheck::ConesMatch { .. } | FactCheck::None => {
                        assert!(verify_fact(entry.id, &f.check, 7).unwrap(), "{}: {}", entry.id, f.statement);
                    }
                    _ => {} // grid-heavy checks exercised in integration tests
                }
            }
        }
    }

    #[test]
    fn causality_facts_verify() {
        for entry in catalog_list() {
            for f in &entry.facts {
                if matches!(f.check, FactCheck::CausalityPasses | FactCheck::CausalityFails) {
                    assert!(verify_fact(entry.id, &f.check, 7).unwrap(), "{}: {}", entry.id, f.statement);
                }
            }
        }
    }
}
