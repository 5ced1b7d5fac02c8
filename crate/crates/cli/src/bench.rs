use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use occplan::metrics::aggregate_planning;
use occplan::{
    generate_synthetic, load_scenario, run_pipeline, Archetype, GeneratorParams, PlanRecord,
    PlanningMetrics, Scenario,
};
use rayon::prelude::*;
use serde::Serialize;

pub enum Source {
    Dir(PathBuf),
    /// Seeds `0..n` of every archetype.
    Synthetic(u64),
}

/// One CSV row per scenario.
#[derive(Debug, Serialize)]
struct Row {
    scenario: String,
    archetype: String,
    selected: usize,
    iterations: usize,
    termination: String,
    cost_before: f64,
    cost_after: f64,
    collision_before: Option<f64>,
    collision_after: Option<f64>,
    off_route: f64,
    red_light: f64,
    mean_jerk: f64,
    mean_acc: f64,
    mean_lat_acc: f64,
    l2_1s: Option<f64>,
    l2_3s: Option<f64>,
    l2_5s: Option<f64>,
    auc: Option<f64>,
    soft_iou: Option<f64>,
    focal_loss: Option<f64>,
}

impl Row {
    fn new(sc: &Scenario, r: &PlanRecord) -> Self {
        let m = &r.metrics;
        Self {
            scenario: r.scenario.clone(),
            archetype: sc.doc.archetype.clone().unwrap_or_default(),
            selected: r.selected,
            iterations: r.report.iterations,
            termination: format!("{:?}", r.report.termination),
            cost_before: r.report.initial_cost,
            cost_after: r.report.final_cost,
            collision_before: r.initial_metrics.collision_rate,
            collision_after: m.collision_rate,
            off_route: m.off_route_rate,
            red_light: m.red_light_rate,
            mean_jerk: m.mean_jerk,
            mean_acc: m.mean_acc,
            mean_lat_acc: m.mean_lat_acc,
            l2_1s: m.displacement_error[0],
            l2_3s: m.displacement_error[1],
            l2_5s: m.displacement_error[2],
            auc: r.prediction.and_then(|p| p.auc),
            soft_iou: r.prediction.map(|p| p.soft_iou),
            focal_loss: r.prediction.map(|p| p.focal_loss),
        }
    }
}

enum Job {
    File(PathBuf),
    Synthetic(Archetype, u64),
}

impl Job {
    fn label(&self) -> String {
        match self {
            Job::File(p) => p.display().to_string(),
            Job::Synthetic(a, seed) => format!("{a} seed {seed}"),
        }
    }

    fn run(&self) -> Result<(Scenario, PlanRecord)> {
        let sc = match self {
            Job::File(p) => load_scenario(p).context("load stage")?,
            Job::Synthetic(a, seed) => {
                generate_synthetic(&GeneratorParams::new(*a), *seed).context("generate stage")?
            }
        };
        let record = run_pipeline(&sc)?;
        Ok((sc, record))
    }
}

fn jobs_for(source: Source) -> Result<Vec<Job>> {
    match source {
        Source::Synthetic(0) => bail!("--synthetic needs at least one seed"),
        Source::Synthetic(n) => Ok(Archetype::ALL
            .into_iter()
            .flat_map(|a| (0..n).map(move |seed| Job::Synthetic(a, seed)))
            .collect()),
        Source::Dir(dir) => {
            let entries =
                fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))?;
            let mut paths = Vec::new();
            for entry in entries {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json")
                    && !path.to_string_lossy().ends_with(".plan.json")
                {
                    paths.push(path);
                }
            }
            if paths.is_empty() {
                bail!("no scenario files in {}", dir.display());
            }
            paths.sort();
            Ok(paths.into_iter().map(Job::File).collect())
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

fn summary_line(label: &str, m: &PlanningMetrics) -> String {
    format!(
        "{label:<8} collision {:>7}%  off-route {:>7.3}%  red-light {:>7.3}%  jerk {:.3}  acc {:.3}  lat-acc {:.3}  L2@1/3/5s {} / {} / {}",
        fmt_opt(m.collision_rate),
        m.off_route_rate,
        m.red_light_rate,
        m.mean_jerk,
        m.mean_acc,
        m.mean_lat_acc,
        fmt_opt(m.displacement_error[0]),
        fmt_opt(m.displacement_error[1]),
        fmt_opt(m.displacement_error[2]),
    )
}

/// Plan every job in parallel, keeping input order in the outputs.
pub fn run(source: Source, out: &Path, threads: Option<usize>) -> Result<()> {
    let jobs = jobs_for(source)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("starting worker pool")?;
    let started = Instant::now();
    let results: Vec<Result<(Scenario, PlanRecord)>> =
        pool.install(|| jobs.par_iter().map(Job::run).collect());
    let elapsed = started.elapsed();

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join("bench.csv");
    let mut writer = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    let mut before = Vec::new();
    let mut after = Vec::new();
    let mut by_archetype: BTreeMap<String, (Vec<PlanningMetrics>, Vec<PlanningMetrics>)> =
        BTreeMap::new();
    let mut failures = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok((sc, record)) => {
                writer.serialize(Row::new(&sc, &record))?;
                before.push(record.initial_metrics);
                after.push(record.metrics);
                let entry = by_archetype
                    .entry(sc.doc.archetype.clone().unwrap_or_else(|| "other".into()))
                    .or_default();
                entry.0.push(record.initial_metrics);
                entry.1.push(record.metrics);
            }
            Err(err) => failures.push(format!("{}: {err:#}", job.label())),
        }
    }
    writer.flush()?;

    let mut report = vec![format!(
        "planned {} of {} scenarios in {:.2} s",
        after.len(),
        jobs.len(),
        elapsed.as_secs_f64()
    )];
    if let (Some(b), Some(a)) = (aggregate_planning(&before), aggregate_planning(&after)) {
        report.push(summary_line("initial", &b));
        report.push(summary_line("refined", &a));
    }
    for (name, (b, a)) in &by_archetype {
        let rate = |m: &[PlanningMetrics]| aggregate_planning(m).and_then(|m| m.collision_rate);
        report.push(format!(
            "  {name:<20} n={:<4} collision {}% -> {}%",
            a.len(),
            fmt_opt(rate(b)),
            fmt_opt(rate(a))
        ));
    }
    report.extend(failures.iter().map(|f| format!("failed: {f}")));
    let text_path = out.join("bench.txt");
    fs::write(&text_path, report.join("\n") + "\n")
        .with_context(|| format!("writing {}", text_path.display()))?;
    for line in report.iter().filter(|l| !l.starts_with("failed: ")) {
        println!("{line}");
    }
    println!("wrote {} and {}", csv_path.display(), text_path.display());
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("failed: {f}");
        }
        bail!("{} of {} scenarios failed", failures.len(), jobs.len());
    }
    Ok(())
}
