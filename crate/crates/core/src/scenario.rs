//! Scenario configuration and dispatch for the CLI: TOML configs naming a
//! catalog spacetime (or a grid-sampled metric file), an operation and its
//! parameters; outputs written atomically with 17-significant-digit ASCII
//! numerics and byte-identical reruns for a fixed seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::catalog;
use crate::curve::write_curve_file;
use crate::error::{CausalityError, Result};
use crate::geom::{BoxRegion, ChartDomain, GridMetric, MetricField, Modulus, SymForm};
use crate::ladder::{self, RungVerdict, RungWitness};
use crate::limit::{extract_limit_curve, limit_result_to_jsonl, zigzag_family, ExtractMode};
use crate::reach::{
    self, boundary_csv, causal_diamond, write_reach_file, BoundedVerdict, DevelopmentSide,
    DiamondVerdict, ReachMode, TimeDirection,
};
use crate::solver;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CAUSALCONE_OUT_DIR";

/// Format a number in ASCII decimal with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Deserialize)]
pub struct SpacetimeSpec {
    #[serde(default)]
    pub id: Option<String>,
    /// Path to a grid-sampled metric file, as an alternative to a catalog id.
    #[serde(default)]
    pub grid_file: Option<String>,
    #[serde(flatten, default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SurfaceBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct OperationSpec {
    pub id: String,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub q: Vec<f64>,
    #[serde(default)]
    pub direction: Option<String>,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub segments: Option<usize>,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub perturbations: Option<usize>,
    #[serde(default)]
    pub pair_samples: Option<usize>,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub legs: Option<usize>,
    #[serde(default)]
    pub shells: Option<usize>,
    #[serde(default)]
    pub delta_ladder: Option<Vec<f64>>,
    #[serde(default)]
    pub surface: Vec<SurfaceBox>,
    #[serde(default)]
    pub side: Option<String>,
}

fn default_cells_per_unit() -> f64 {
    24.0
}
fn default_stencil() -> usize {
    3
}

#[derive(Clone, Debug, Deserialize)]
pub struct GridSpec {
    #[serde(default = "default_cells_per_unit")]
    pub cells_per_unit: f64,
    #[serde(default = "default_stencil")]
    pub stencil: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { cells_per_unit: default_cells_per_unit(), stencil: default_stencil() }
    }
}

fn default_seed() -> u64 {
    7
}
fn default_tolerance() -> f64 {
    1e-9
}

#[derive(Clone, Debug, Deserialize)]
pub struct RunSpec {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec { seed: default_seed(), tolerance: default_tolerance() }
    }
}

fn default_prefix() -> String {
    "run".to_string()
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub spacetime: Option<SpacetimeSpec>,
    pub operation: OperationSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Parse a scenario config from TOML text (parse errors keep the reported
/// line/column from the parser).
pub fn scenario_from_str(text: &str) -> Result<Scenario> {
    toml::from_str(text).map_err(|e| CausalityError::Parse(e.to_string()))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    scenario_from_str(&text)
}

// ---------------------------------------------------------------------------
// Grid-sampled metric files
// ---------------------------------------------------------------------------

/// Read a grid-sampled metric: a CSV body of `n(n+1)/2` upper-triangle form
/// entries per node (row-major, last axis fastest) under a `#`-prefixed
/// header declaring dim, bounds, and nodes per axis.
pub fn read_grid_metric(path: &Path) -> Result<GridMetric> {
    let text = std::fs::read_to_string(path)?;
    let mut dim = 0usize;
    let mut bounds: Vec<(f64, f64)> = Vec::new();
    let mut nodes: Vec<usize> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut toks = rest.split_whitespace();
            match toks.next() {
                Some("dim") => {
                    dim = toks
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| CausalityError::Parse(format!("line {}: bad dim", lineno + 1)))?;
                }
                Some("bounds") => {
                    let vals: Vec<f64> = toks.map(|t| t.parse().unwrap_or(f64::NAN)).collect();
                    if vals.len() != 2 * dim || vals.iter().any(|v| !v.is_finite()) {
                        return Err(CausalityError::Parse(format!("line {}: bad bounds", lineno + 1)));
                    }
                    bounds = vals.chunks(2).map(|c| (c[0], c[1])).collect();
                }
                Some("nodes") => {
                    nodes = toks
                        .map(|t| t.parse().map_err(|_| CausalityError::Parse(format!("line {}: bad nodes", lineno + 1))))
                        .collect::<Result<_>>()?;
                }
                _ => {}
            }
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| CausalityError::Parse(format!("line {}: bad entry '{}'", lineno + 1, t)))
            })
            .collect::<Result<_>>()?;
        if dim > 0 && row.len() != dim * (dim + 1) / 2 {
            return Err(CausalityError::Parse(format!("line {}: expected {} entries", lineno + 1, dim * (dim + 1) / 2)));
        }
        values.push(row);
    }
    if dim == 0 || bounds.len() != dim || nodes.len() != dim {
        return Err(CausalityError::Parse("grid metric header incomplete (dim/bounds/nodes)".into()));
    }
    let expect: usize = nodes.iter().product();
    if values.len() != expect {
        return Err(CausalityError::Parse(format!("expected {expect} node rows, found {}", values.len())));
    }
    Ok(GridMetric { bounds, nodes_per_axis: nodes, values, dim })
}

pub fn write_grid_metric(gm: &GridMetric, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# dim {}\n", gm.dim));
    out.push_str("# bounds");
    for (lo, hi) in &gm.bounds {
        out.push_str(&format!(" {} {}", fmt17(*lo), fmt17(*hi)));
    }
    out.push('\n');
    out.push_str("# nodes");
    for n in &gm.nodes_per_axis {
        out.push_str(&format!(" {n}"));
    }
    out.push('\n');
    for row in &gm.values {
        let cells: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Wrap a node grid as a multilinearly interpolated field, with a Lipschitz
/// modulus estimated from adjacent node differences and time orientation
/// along the first axis.
pub fn grid_metric_field(gm: GridMetric, name: &str) -> Result<MetricField> {
    let domain = Arc::new(ChartDomain::new_box(gm.bounds.clone())?);
    let dim = gm.dim;
    // Empirical Lipschitz constant from axis-adjacent nodes.
    let mut c = 0.0f64;
    let mut idx = vec![0usize; dim];
    let total: usize = gm.nodes_per_axis.iter().product();
    for flat in 0..total {
        let mut f = flat;
        for i in (0..dim).rev() {
            idx[i] = f % gm.nodes_per_axis[i];
            f /= gm.nodes_per_axis[i];
        }
        let here = SymForm::from_upper_triangle(dim, &gm.values[flat]);
        let p = gm.node_point(&idx);
        for i in 0..dim {
            if idx[i] + 1 < gm.nodes_per_axis[i] {
                let mut jdx = idx.clone();
                jdx[i] += 1;
                let mut jflat = 0usize;
                for (k, &v) in jdx.iter().enumerate() {
                    jflat = jflat * gm.nodes_per_axis[k] + v;
                }
                let there = SymForm::from_upper_triangle(dim, &gm.values[jflat]);
                let step = (gm.bounds[i].1 - gm.bounds[i].0) / (gm.nodes_per_axis[i] - 1) as f64;
                if step > 0.0 {
                    c = c.max(here.max_abs_diff(&there) / step);
                }
            }
        }
        let _ = p;
    }
    let eval = move |x: &[f64]| gm.interpolate(x);
    let time = move |_: &[f64]| {
        let mut t = vec![0.0; dim];
        t[0] = 1.0;
        t
    };
    let field = MetricField::new(domain, eval, time, Modulus::Lipschitz { c }, name);
    field.validate(5, 1e-12)?;
    Ok(field)
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Pass,
    FailWithWitness,
    Inconclusive,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Pass => 0,
            ExitStatus::FailWithWitness => 2,
            ExitStatus::Inconclusive => 3,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

fn build_field(spec: &Option<SpacetimeSpec>) -> Result<MetricField> {
    let spec = spec
        .as_ref()
        .ok_or_else(|| CausalityError::InvalidArgument("scenario needs a [spacetime] section".into()))?;
    match (&spec.id, &spec.grid_file) {
        (Some(id), None) => catalog::build_spacetime(id, &spec.params),
        (None, Some(path)) => grid_metric_field(read_grid_metric(Path::new(path))?, "grid_file"),
        (Some(_), Some(_)) => Err(CausalityError::InvalidArgument(
            "give either a catalog id or a grid_file, not both".into(),
        )),
        (None, None) => Err(CausalityError::InvalidArgument("spacetime needs an id or a grid_file".into())),
    }
}

fn out_dir(output: &OutputSpec) -> PathBuf {
    match &output.dir {
        Some(d) => PathBuf::from(d),
        None => std::env::var(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|_| PathBuf::from(".")),
    }
}

fn parse_direction(s: &Option<String>) -> Result<TimeDirection> {
    match s.as_deref() {
        None | Some("future") => Ok(TimeDirection::Future),
        Some("past") => Ok(TimeDirection::Past),
        Some(other) => Err(CausalityError::InvalidArgument(format!("unknown direction '{other}'"))),
    }
}

fn parse_mode(s: &Option<String>) -> Result<ReachMode> {
    match s.as_deref() {
        None | Some("over") => Ok(ReachMode::Over),
        Some("under") => Ok(ReachMode::Under),
        Some(other) => Err(CausalityError::InvalidArgument(format!("unknown mode '{other}'"))),
    }
}

fn point_arg(v: &[f64], dim: usize, name: &str) -> Result<Vec<f64>> {
    if v.len() != dim {
        return Err(CausalityError::InvalidArgument(format!("{name} must have {dim} coordinates")));
    }
    Ok(v.to_vec())
}

fn surface_boxes(spec: &OperationSpec, dim: usize) -> Result<Vec<BoxRegion>> {
    if spec.surface.is_empty() {
        return Err(CausalityError::InvalidArgument("operation needs at least one surface box".into()));
    }
    spec.surface
        .iter()
        .map(|b| {
            if b.min.len() != dim || b.max.len() != dim {
                return Err(CausalityError::InvalidArgument(format!("surface boxes must have {dim} coordinates")));
            }
            Ok(BoxRegion::new(b.min.clone(), b.max.clone()))
        })
        .collect()
}

fn witness_json(w: &RungWitness, dir: &Path, prefix: &str, rung: &str, artifacts: &mut Vec<PathBuf>) -> Result<serde_json::Value> {
    Ok(match w {
        RungWitness::ClosedCurve(c) | RungWitness::Curve(c) => {
            let path = dir.join(format!("{prefix}_{rung}_witness.curve"));
            write_curve_file(c, &path)?;
            artifacts.push(path.clone());
            serde_json::json!({ "kind": "curve", "file": path.to_string_lossy() })
        }
        RungWitness::Triple { p, approaching, q } => serde_json::json!({
            "kind": "triple", "p": p, "approaching": approaching, "q": q
        }),
        RungWitness::Cells(cells) => serde_json::json!({ "kind": "cells", "cells": cells }),
        RungWitness::Point(p) => serde_json::json!({ "kind": "point", "point": p }),
    })
}

fn rung_json(name: &str, v: &RungVerdict, dir: &Path, prefix: &str, artifacts: &mut Vec<PathBuf>) -> Result<serde_json::Value> {
    Ok(match v {
        RungVerdict::PassAtScale => serde_json::json!({ "rung": name, "verdict": "pass" }),
        RungVerdict::Fail(w) => serde_json::json!({
            "rung": name, "verdict": "fail", "witness": witness_json(w, dir, prefix, name, artifacts)?
        }),
        RungVerdict::Inconclusive(note) => serde_json::json!({ "rung": name, "verdict": "inconclusive", "note": note }),
    })
}

/// Run one scenario: dispatch to the named operation, write artifacts
/// atomically, return the exit status and a human summary.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutcome> {
    let dir = out_dir(&sc.output);
    std::fs::create_dir_all(&dir)?;
    let prefix = sc.output.prefix.clone();
    let mut artifacts: Vec<PathBuf> = Vec::new();

    match sc.operation.id.as_str() {
        "catalog" => {
            let mut lines = Vec::new();
            for e in catalog::catalog_list() {
                let params: Vec<String> =
                    e.parameters.iter().map(|(n, d)| format!("{n}={}", fmt17(*d))).collect();
                lines.push(format!("{}: {} [{}]", e.id, e.summary, params.join(", ")));
                for f in &e.facts {
                    let tag = match f.provenance {
                        catalog::FactProvenance::ClosedForm => "closed-form",
                        catalog::FactProvenance::FineGridOracle => "fine-grid-oracle",
                    };
                    lines.push(format!("  - ({tag}) {}", f.statement));
                }
            }
            let text = lines.join("\n") + "\n";
            let path = dir.join(format!("{prefix}_catalog.txt"));
            atomic_write(&path, text.as_bytes())?;
            artifacts.push(path);
            return Ok(RunOutcome { status: ExitStatus::Pass, artifacts, summary: text });
        }
        _ => {}
    }

    let g = build_field(&sc.spacetime)?;
    let dim = g.dim();
    let grid = catalog::square_cell_grid(&g, sc.grid.cells_per_unit, sc.grid.stencil)?;
    let seed = sc.run.seed;

    match sc.operation.id.as_str() {
        "reach" => {
            let p = point_arg(&sc.operation.p, dim, "p")?;
            let mode = parse_mode(&sc.operation.mode)?;
            let direction = parse_direction(&sc.operation.direction)?;
            let horizon = reach::default_horizon(&g);
            let set = match direction {
                TimeDirection::Future => reach::future_reach(&p, &g, &grid, mode, horizon)?,
                TimeDirection::Past => reach::past_reach(&p, &g, &grid, mode, horizon)?,
            };
            let rpath = dir.join(format!("{prefix}_reach.txt"));
            write_reach_file(&set, &rpath)?;
            let cpath = dir.join(format!("{prefix}_reach_boundary.csv"));
            atomic_write(&cpath, boundary_csv(&set).as_bytes())?;
            artifacts.extend([rpath, cpath]);
            let summary = format!("reach: {} cells reached\n", set.count());
            Ok(RunOutcome { status: ExitStatus::Pass, artifacts, summary })
        }
        "diamond" => {
            let p = point_arg(&sc.operation.p, dim, "p")?;
            let q = point_arg(&sc.operation.q, dim, "q")?;
            let report = causal_diamond(&p, &q, &g, &grid)?;
            let over_path = dir.join(format!("{prefix}_diamond_over.txt"));
            let under_path = dir.join(format!("{prefix}_diamond_under.txt"));
            write_reach_file(&report.over, &over_path)?;
            write_reach_file(&report.under, &under_path)?;
            let verdict = serde_json::json!({
                "verdict": match report.verdict { DiamondVerdict::CompactAtScale => "compact_at_scale", DiamondVerdict::Noncompact => "noncompact" },
                "bounded": matches!(report.bounded, BoundedVerdict::Bounded),
                "closure_defect_cells": report.closure_defect,
            });
            let jpath = dir.join(format!("{prefix}_diamond.json"));
            atomic_write(&jpath, (verdict.to_string() + "\n").as_bytes())?;
            artifacts.extend([over_path, under_path, jpath]);
            let status = match (report.verdict, report.bounded) {
                (DiamondVerdict::Noncompact, _) => ExitStatus::FailWithWitness,
                (DiamondVerdict::CompactAtScale, BoundedVerdict::Bounded) => ExitStatus::Pass,
                (DiamondVerdict::CompactAtScale, BoundedVerdict::Inconclusive) => ExitStatus::Inconclusive,
            };
            let summary = format!(
                "diamond: over {} cells, under {} cells, {} closure defects\n",
                report.over.count(),
                report.under.count(),
                report.closure_defect.len()
            );
            Ok(RunOutcome { status, artifacts, summary })
        }
        "tau" => {
            let p = point_arg(&sc.operation.p, dim, "p")?;
            let q = point_arg(&sc.operation.q, dim, "q")?;
            let segments = sc.operation.segments.unwrap_or(64);
            let restarts = sc.operation.restarts.unwrap_or(8);
            match solver::time_separation(&p, &q, &g, segments, restarts, seed) {
                Ok((tau, curve)) => {
                    let tpath = dir.join(format!("{prefix}_tau.txt"));
                    atomic_write(&tpath, (fmt17(tau) + "\n").as_bytes())?;
                    let cpath = dir.join(format!("{prefix}_tau.curve"));
                    write_curve_file(&curve, &cpath)?;
                    let radius = sc.operation.radius.unwrap_or(0.05);
                    let perturbations = sc.operation.perturbations.unwrap_or(500);
                    let cert = solver::maximality_certificate(&curve, &g, radius, perturbations, seed)?;
                    let cert_json = serde_json::json!({
                        "tau": fmt17(tau),
                        "radius": fmt17(cert.radius),
                        "perturbations": cert.perturbations,
                        "best_rival_length": fmt17(cert.best_rival_length),
                        "margin": fmt17(cert.margin),
                        "degenerate": cert.degenerate,
                    });
                    let jpath = dir.join(format!("{prefix}_tau_certificate.json"));
                    atomic_write(&jpath, (cert_json.to_string() + "\n").as_bytes())?;
                    artifacts.extend([tpath, cpath, jpath]);
                    let summary = format!("tau = {}\n", fmt17(tau));
                    Ok(RunOutcome { status: ExitStatus::Pass, artifacts, summary })
                }
                Err(CausalityError::NotCausallyRelated(note)) => {
                    let tpath = dir.join(format!("{prefix}_tau.txt"));
                    atomic_write(&tpath, format!("not causally related: {note}\n").as_bytes())?;
                    artifacts.push(tpath);
                    Ok(RunOutcome {
                        status: ExitStatus::FailWithWitness,
                        artifacts,
                        summary: format!("tau: endpoints not causally related ({note})\n"),
                    })
                }
                Err(e) => Err(e),
            }
        }
        "diagnose" => {
            let pair_samples = sc.operation.pair_samples.unwrap_or(12);
            let report = ladder::check_global_hyperbolicity(&g, &grid, pair_samples, seed)?;
            let rungs: [(&str, &RungVerdict); 4] = [
                ("causal", &report.causal),
                ("non_imprisoning", &report.non_imprisoning),
                ("globally_hyperbolic", &report.globally_hyperbolic),
                ("causally_simple", &report.causally_simple),
            ];
            let mut jsonl = String::new();
            let mut human = String::new();
            let mut any_fail = false;
            let mut any_inconclusive = false;
            for (name, v) in rungs {
                jsonl.push_str(&rung_json(name, v, &dir, &prefix, &mut artifacts)?.to_string());
                jsonl.push('\n');
                let word = match v {
                    RungVerdict::PassAtScale => "pass",
                    RungVerdict::Fail(_) => {
                        any_fail = true;
                        "FAIL"
                    }
                    RungVerdict::Inconclusive(_) => {
                        any_inconclusive = true;
                        "inconclusive"
                    }
                };
                human.push_str(&format!("{name:<22} {word}\n"));
            }
            let jpath = dir.join(format!("{prefix}_ladder.jsonl"));
            atomic_write(&jpath, jsonl.as_bytes())?;
            let hpath = dir.join(format!("{prefix}_ladder.txt"));
            atomic_write(&hpath, human.as_bytes())?;
            artifacts.extend([jpath, hpath]);
            let status = if any_fail {
                ExitStatus::FailWithWitness
            } else if any_inconclusive {
                ExitStatus::Inconclusive
            } else {
                ExitStatus::Pass
            };
            Ok(RunOutcome { status, artifacts, summary: human })
        }
        "limit" => {
            let k_max = sc.operation.k_max.unwrap_or(64);
            let legs = sc.operation.legs.unwrap_or(6);
            let v_run = 1.0;
            let family = zigzag_family(g.domain.clone(), v_run, k_max, legs)?;
            let lip = family.iter().map(|c| c.lipschitz()).fold(0.0f64, f64::max);
            let result = extract_limit_curve(&g, &family, ExtractMode::FixedInterval, lip * 1.01, sc.run.tolerance)?;
            let jpath = dir.join(format!("{prefix}_limit.jsonl"));
            atomic_write(&jpath, limit_result_to_jsonl(&result).as_bytes())?;
            let cpath = dir.join(format!("{prefix}_limit.curve"));
            write_curve_file(&result.limit, &cpath)?;
            artifacts.extend([jpath, cpath]);
            let causal = result.causality.is_causal();
            let summary = format!(
                "limit: subsequence of {} members, limit {}\n",
                result.subsequence.len(),
                if causal { "causal" } else { "NOT causal" }
            );
            let status = if causal { ExitStatus::Pass } else { ExitStatus::FailWithWitness };
            Ok(RunOutcome { status, artifacts, summary })
        }
        "widen" => {
            let shells = sc.operation.shells.unwrap_or(4);
            let default_ladder: Vec<f64> = (0..shells).map(|n| 0.4 * 0.5f64.powi(n as i32)).collect();
            let ladder_vals = sc.operation.delta_ladder.clone().unwrap_or(default_ladder);
            let sw = ladder::build_stable_widening(&g, shells, &ladder_vals)?;
            let checks: Vec<serde_json::Value> = sw
                .shell_checks
                .iter()
                .map(|c| {
                    serde_json::json!({
                        "shell": c.shell, "delta": fmt17(c.delta),
                        "weak_ok": c.weak_ok, "strict_ok": c.strict_ok
                    })
                })
                .collect();
            let j = serde_json::json!({ "strictly_wider": sw.strictly_wider, "shells": checks });
            let jpath = dir.join(format!("{prefix}_widen.json"));
            atomic_write(&jpath, (j.to_string() + "\n").as_bytes())?;
            artifacts.push(jpath);
            let ok = sw.strictly_wider && sw.shell_checks.iter().all(|c| c.weak_ok && c.strict_ok);
            let summary = format!("widen: {} shells, strictly wider: {}\n", shells, sw.strictly_wider);
            let status = if ok { ExitStatus::Pass } else { ExitStatus::Inconclusive };
            Ok(RunOutcome { status, artifacts, summary })
        }
        "develop" => {
            let boxes = surface_boxes(&sc.operation, dim)?;
            let side = match sc.operation.side.as_deref() {
                None | Some("future") => DevelopmentSide::Future,
                Some("past") => DevelopmentSide::Past,
                Some("both") => DevelopmentSide::Both,
                Some(other) => {
                    return Err(CausalityError::InvalidArgument(format!("unknown side '{other}'")));
                }
            };
            let set = reach::cauchy_development(&boxes, &g, &grid, side)?;
            let rpath = dir.join(format!("{prefix}_development.txt"));
            write_reach_file(&set, &rpath)?;
            let cpath = dir.join(format!("{prefix}_development_boundary.csv"));
            atomic_write(&cpath, boundary_csv(&set).as_bytes())?;
            artifacts.extend([rpath, cpath]);
            let summary = format!("develop: {} cells in the development\n", set.count());
            Ok(RunOutcome { status: ExitStatus::Pass, artifacts, summary })
        }
        other => Err(CausalityError::InvalidArgument(format!("unknown operation '{other}'"))),
    }
}

/// Write a file atomically: temp file in the target directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into()),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_scenario() {
        let sc = scenario_from_str(
            r#"
            [spacetime]
            id = "minkowski2d"

            [operation]
            id = "tau"
            p = [0.0, 0.0]
            q = [2.0, 1.0]
            segments = 16
            restarts = 2
            "#,
        )
        .unwrap();
        assert_eq!(sc.operation.id, "tau");
        assert_eq!(sc.run.seed, 7);
        assert_eq!(sc.grid.cells_per_unit, 24.0);
    }

    #[test]
    fn parse_error_reports_location() {
        let err = scenario_from_str("[operation\nid = 3").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "parse error should locate the problem: {msg}");
    }

    #[test]
    fn spacetime_params_flatten() {
        let sc = scenario_from_str(
            r#"
            [spacetime]
            id = "widened_minkowski2d"
            eps = 0.25

            [operation]
            id = "reach"
            p = [0.0, 0.0]
            "#,
        )
        .unwrap();
        let st = sc.spacetime.unwrap();
        assert_eq!(st.params.get("eps"), Some(&0.25));
    }

    #[test]
    fn tau_scenario_runs_and_passes() {
        let tmp = tempfile::tempdir().unwrap();
        let sc = scenario_from_str(&format!(
            r#"
            [spacetime]
            id = "minkowski2d"

            [operation]
            id = "tau"
            p = [0.0, 0.0]
            q = [2.0, 1.0]
            segments = 16
            restarts = 2
            perturbations = 50

            [output]
            dir = "{}"
            "#,
            tmp.path().display()
        ))
        .unwrap();
        let out = run_scenario(&sc).unwrap();
        assert_eq!(out.status, ExitStatus::Pass);
        assert_eq!(out.artifacts.len(), 3);
        let tau_text = std::fs::read_to_string(&out.artifacts[0]).unwrap();
        let tau: f64 = tau_text.trim().parse().unwrap();
        assert!((tau - 3.0f64.sqrt()).abs() < 0.02);
    }

    #[test]
    fn grid_metric_round_trips_and_builds() {
        let gm = GridMetric {
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            nodes_per_axis: vec![3, 3],
            values: vec![vec![-1.0, 0.0, 1.0]; 9],
            dim: 2,
        };
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("m.grid");
        write_grid_metric(&gm, &path).unwrap();
        let back = read_grid_metric(&path).unwrap();
        assert_eq!(back.values, gm.values);
        assert_eq!(back.nodes_per_axis, gm.nodes_per_axis);
        let field = grid_metric_field(back, "test").unwrap();
        assert_eq!(field.dim(), 2);
    }

    #[test]
    fn unknown_operation_rejected() {
        let sc = scenario_from_str(
            r#"
            [spacetime]
            id = "minkowski2d"
            [operation]
            id = "frobnicate"
            "#,
        )
        .unwrap();
        assert!(run_scenario(&sc).is_err());
    }
}
