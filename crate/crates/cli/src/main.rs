mod bench;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use occplan::harness::{plot_svg, save_scenario};
use occplan::metrics::prediction_metrics;
use occplan::{
    generate_synthetic, load_scenario, planning_metrics, run_pipeline, Archetype, CostTerm,
    FocalParams, GeneratorParams, PlanRecord, PlanningMetrics, PredictionMetrics, ReferenceRoute,
    Scenario, Trajectory,
};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "occplan",
    version,
    about = "Refine ego plans against predicted occupancy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Refine the top candidate of one scenario and write the plan record
    Plan {
        scenario: PathBuf,
        /// Output directory
        #[arg(long, env = "OCCPLAN_OUT_DIR", default_value = ".")]
        out: PathBuf,
        /// Override cost weights, e.g. `--weights safety=10 progress=0.2`
        #[arg(short, long = "weights", visible_alias = "weight", num_args = 1.., value_parser = parse_weight)]
        weights: Vec<(CostTerm, f64)>,
        /// Also write an SVG of the plan in the route frame
        #[arg(long)]
        plot: bool,
    },
    /// Write seeded synthetic scenarios
    Gen {
        /// One of empty, lead-braking, crossing-pedestrian, red-light, occluded
        archetype: Archetype,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds to generate
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Speed of the top candidate relative to the ego speed
        #[arg(long, default_value_t = 1.0)]
        speed_factor: f64,
        #[arg(long, env = "OCCPLAN_OUT_DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Recompute the metrics of a plan record against its scenario
    Eval { scenario: PathBuf, record: PathBuf },
    /// Plan every scenario in a directory, or a synthetic batch, in parallel
    Bench {
        /// Directory of scenario files; ignored with --synthetic
        dir: Option<PathBuf>,
        /// Generate this many seeds per archetype instead of reading files
        #[arg(long)]
        synthetic: Option<u64>,
        #[arg(long, env = "OCCPLAN_OUT_DIR", default_value = ".")]
        out: PathBuf,
        /// Worker threads; defaults to one per core
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn parse_weight(arg: &str) -> Result<(CostTerm, f64), String> {
    let (name, value) = arg
        .split_once('=')
        .ok_or_else(|| format!("expected TERM=VALUE, got `{arg}`"))?;
    let term = CostTerm::ALL
        .into_iter()
        .find(|t| t.name() == name.trim())
        .ok_or_else(|| {
            let names: Vec<_> = CostTerm::ALL.iter().map(|t| t.name()).collect();
            format!(
                "unknown cost term `{name}`; expected one of {}",
                names.join(", ")
            )
        })?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|e| format!("bad weight `{value}`: {e}"))?;
    if !(value.is_finite() && value >= 0.0) {
        return Err(format!(
            "weight must be finite and nonnegative, got {value}"
        ));
    }
    Ok((term, value))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load(path: &Path) -> Result<Scenario> {
    load_scenario(path).context("load stage")
}

fn plan(scenario: &Path, out: &Path, weights: &[(CostTerm, f64)], plot: bool) -> Result<()> {
    let mut sc = load(scenario)?;
    for &(term, value) in weights {
        sc.doc.cost.weights.set(term, value);
    }
    let record = run_pipeline(&sc).with_context(|| format!("planning {}", sc.doc.name))?;
    create_dir(out)?;
    let path = out.join(format!("{}.plan.json", sc.doc.name));
    write_json(&path, &record)?;
    if plot {
        let svg = plot_svg(&record, &sc).context("plot stage")?;
        let svg_path = out.join(format!("{}.plan.svg", sc.doc.name));
        fs::write(&svg_path, svg).with_context(|| format!("writing {}", svg_path.display()))?;
    }
    println!(
        "{}: cost {:.4} -> {:.4} in {} iterations ({:?}), collision {} -> {}",
        sc.doc.name,
        record.report.initial_cost,
        record.report.final_cost,
        record.report.iterations,
        record.report.termination,
        fmt_rate(record.initial_metrics.collision_rate),
        fmt_rate(record.metrics.collision_rate),
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn fmt_rate(rate: Option<f64>) -> String {
    rate.map_or_else(|| "n/a".to_string(), |r| format!("{r:.0}%"))
}

fn gen(archetype: Archetype, seed: u64, count: u64, speed_factor: f64, out: &Path) -> Result<()> {
    if count == 0 {
        bail!("--count must be at least 1");
    }
    let params = GeneratorParams {
        plan_speed_factor: speed_factor,
        ..GeneratorParams::new(archetype)
    };
    create_dir(out)?;
    for seed in seed..seed + count {
        let sc = generate_synthetic(&params, seed).context("generate stage")?;
        let path = out.join(format!("{}.json", sc.doc.name));
        save_scenario(&sc, &path).context("write stage")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    scenario: String,
    initial: PlanningMetrics,
    refined: PlanningMetrics,
    prediction: Option<PredictionMetrics>,
}

fn eval(scenario: &Path, record: &Path) -> Result<()> {
    let sc = load(scenario)?;
    let text =
        fs::read_to_string(record).with_context(|| format!("reading {}", record.display()))?;
    let record: PlanRecord =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", record.display()))?;
    if record.scenario != sc.doc.name {
        bail!(
            "record belongs to scenario `{}`, not `{}`",
            record.scenario,
            sc.doc.name
        );
    }
    let doc = &sc.doc;
    let route = ReferenceRoute::build(&doc.route, doc.route_spacing).context("route stage")?;
    let initial = doc.ego.to_initial_state(&route)?;
    let score = |points: &[occplan::FrenetPoint]| -> Result<PlanningMetrics> {
        let traj = Trajectory::from_points(points, doc.dt, initial)?;
        planning_metrics(
            &traj,
            doc.truth.as_deref(),
            sc.ground_truth.as_ref(),
            &route,
            &doc.cost,
            &doc.planning,
        )
        .context("metrics stage")
    };
    let prediction = sc
        .ground_truth
        .as_ref()
        .map(|gt| prediction_metrics(&sc.occupancy, gt, FocalParams::default()))
        .transpose()
        .context("metrics stage")?;
    let evaluation = Evaluation {
        scenario: doc.name.clone(),
        initial: score(&record.initial.frenet)?,
        refined: score(&record.refined.frenet)?,
        prediction,
    };
    println!("{}", serde_json::to_string_pretty(&evaluation)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan {
            scenario,
            out,
            weights,
            plot,
        } => plan(&scenario, &out, &weights, plot),
        Command::Gen {
            archetype,
            seed,
            count,
            speed_factor,
            out,
        } => gen(archetype, seed, count, speed_factor, &out),
        Command::Eval { scenario, record } => eval(&scenario, &record),
        Command::Bench {
            dir,
            synthetic,
            out,
            jobs,
        } => {
            let source = match (synthetic, dir) {
                (Some(n), _) => bench::Source::Synthetic(n),
                (None, Some(dir)) => bench::Source::Dir(dir),
                (None, None) => bail!("pass a scenario directory or --synthetic N"),
            };
            bench::run(source, &out, jobs)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
