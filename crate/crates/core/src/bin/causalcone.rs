//! Command-line front end: each subcommand assembles a scenario and runs it.
//! Exit codes: 0 pass, 2 fail with witness, 3 inconclusive, 1 error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use causalcone::scenario::{
    load_scenario, run_scenario, GridSpec, OperationSpec, OutputSpec, RunSpec, Scenario,
    SpacetimeSpec,
};

#[derive(Parser)]
#[command(name = "causalcone", about = "Computable causality diagnostics for continuous Lorentzian metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Catalog spacetime id (see `causalcone catalog`).
    #[arg(long, short = 's')]
    spacetime: Option<String>,
    /// Grid-sampled metric file instead of a catalog id.
    #[arg(long)]
    grid_file: Option<String>,
    /// Spacetime parameter overrides, `name=value`.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    /// Grid cells per unit coordinate length (square cells).
    #[arg(long, default_value_t = 24.0)]
    cells_per_unit: f64,
    /// Cone-step stencil radius in cells.
    #[arg(long, default_value_t = 3)]
    stencil: usize,
    /// Random seed; identical seeds give byte-identical outputs.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output directory (default: $CAUSALCONE_OUT_DIR or the working directory).
    #[arg(long, short = 'o')]
    out_dir: Option<String>,
    /// Output filename prefix.
    #[arg(long, default_value = "run")]
    prefix: String,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=value")?;
    Ok((k.to_string(), v.parse().map_err(|e| format!("{e}"))?))
}

#[derive(Clone)]
struct Point(Vec<f64>);

fn parse_point(s: &str) -> Result<Point, String> {
    s.trim_matches(|c| c == '(' || c == ')')
        .split(',')
        .map(|t| t.trim().parse().map_err(|e| format!("{e}")))
        .collect::<Result<Vec<f64>, String>>()
        .map(Point)
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario from a TOML config file.
    Run { path: PathBuf },
    /// Over- or under-approximate reach set from a point.
    Reach {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = parse_point)]
        p: Point,
        /// over | under
        #[arg(long, default_value = "over")]
        mode: String,
        /// future | past
        #[arg(long, default_value = "future")]
        direction: String,
    },
    /// Causal diamond between two points with closure-defect hunting.
    Diamond {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = parse_point)]
        p: Point,
        #[arg(long, value_parser = parse_point)]
        q: Point,
    },
    /// Time separation between two points with a maximality certificate.
    Tau {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = parse_point)]
        p: Point,
        #[arg(long, value_parser = parse_point)]
        q: Point,
        #[arg(long, default_value_t = 64)]
        segments: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0.05)]
        radius: f64,
        #[arg(long, default_value_t = 500)]
        perturbations: usize,
    },
    /// Full causal-ladder diagnosis with witness artifacts.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 12)]
        pair_samples: usize,
    },
    /// Limit-curve extraction from a null-zigzag family.
    Limit {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 64)]
        k_max: usize,
        #[arg(long, default_value_t = 6)]
        legs: usize,
    },
    /// Shell-wise stable cone widening with order checks.
    Widen {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 4)]
        shells: usize,
        /// Strictly decreasing widening ladder, one value per shell.
        #[arg(long, value_delimiter = ',')]
        delta_ladder: Vec<f64>,
    },
    /// Cauchy development of a surface given as coordinate boxes.
    Develop {
        #[command(flatten)]
        common: CommonArgs,
        /// Surface boxes as `min..max` per axis: "t0,x0..t1,x1"; repeatable.
        #[arg(long = "surface", value_parser = parse_surface_box)]
        surface: Vec<(Point, Point)>,
        /// future | past | both
        #[arg(long, default_value = "future")]
        side: String,
    },
    /// List catalog spacetimes and their declared facts.
    Catalog {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn parse_surface_box(s: &str) -> Result<(Point, Point), String> {
    let (lo, hi) = s.split_once("..").ok_or("expected min..max")?;
    Ok((parse_point(lo)?, parse_point(hi)?))
}

fn scenario_from(common: &CommonArgs, op: OperationSpec) -> Scenario {
    let spacetime = if common.spacetime.is_some() || common.grid_file.is_some() {
        Some(SpacetimeSpec {
            id: common.spacetime.clone(),
            grid_file: common.grid_file.clone(),
            params: common.params.iter().cloned().collect::<BTreeMap<_, _>>(),
        })
    } else {
        None
    };
    Scenario {
        spacetime,
        operation: op,
        grid: GridSpec { cells_per_unit: common.cells_per_unit, stencil: common.stencil },
        run: RunSpec { seed: common.seed, ..Default::default() },
        output: OutputSpec { dir: common.out_dir.clone(), prefix: common.prefix.clone() },
    }
}

fn blank_op(id: &str) -> OperationSpec {
    OperationSpec {
        id: id.to_string(),
        p: Vec::new(),
        q: Vec::new(),
        direction: None,
        mode: None,
        segments: None,
        restarts: None,
        radius: None,
        perturbations: None,
        pair_samples: None,
        k_max: None,
        legs: None,
        shells: None,
        delta_ladder: None,
        surface: Vec::new(),
        side: None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let scenario = match &cli.command {
        Command::Run { path } => match load_scenario(path) {
            Ok(sc) => sc,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        Command::Reach { common, p, mode, direction } => {
            let mut op = blank_op("reach");
            op.p = p.0.clone();
            op.mode = Some(mode.clone());
            op.direction = Some(direction.clone());
            scenario_from(common, op)
        }
        Command::Diamond { common, p, q } => {
            let mut op = blank_op("diamond");
            op.p = p.0.clone();
            op.q = q.0.clone();
            scenario_from(common, op)
        }
        Command::Tau { common, p, q, segments, restarts, radius, perturbations } => {
            let mut op = blank_op("tau");
            op.p = p.0.clone();
            op.q = q.0.clone();
            op.segments = Some(*segments);
            op.restarts = Some(*restarts);
            op.radius = Some(*radius);
            op.perturbations = Some(*perturbations);
            scenario_from(common, op)
        }
        Command::Diagnose { common, pair_samples } => {
            let mut op = blank_op("diagnose");
            op.pair_samples = Some(*pair_samples);
            scenario_from(common, op)
        }
        Command::Limit { common, k_max, legs } => {
            let mut op = blank_op("limit");
            op.k_max = Some(*k_max);
            op.legs = Some(*legs);
            scenario_from(common, op)
        }
        Command::Widen { common, shells, delta_ladder } => {
            let mut op = blank_op("widen");
            op.shells = Some(*shells);
            if !delta_ladder.is_empty() {
                op.delta_ladder = Some(delta_ladder.clone());
            }
            scenario_from(common, op)
        }
        Command::Develop { common, surface, side } => {
            let mut op = blank_op("develop");
            op.surface = surface
                .iter()
                .map(|(min, max)| causalcone::scenario::SurfaceBox { min: min.0.clone(), max: max.0.clone() })
                .collect();
            op.side = Some(side.clone());
            scenario_from(common, op)
        }
        Command::Catalog { common } => scenario_from(common, blank_op("catalog")),
    };
    match run_scenario(&scenario) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for a in &outcome.artifacts {
                eprintln!("wrote {}", a.display());
            }
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
