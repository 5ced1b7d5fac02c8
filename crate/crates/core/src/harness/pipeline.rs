use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::HarnessError;
use crate::costs::{assemble_residuals, CostBreakdown, CostContext, Trajectory};
use crate::frenet::{CartesianPoint, FrenetPoint, ReferenceRoute};
use crate::metrics::{
    planning_metrics, prediction_metrics, FocalParams, PlanningMetrics, PredictionMetrics,
};
use crate::occupancy::{transform_occupancy, FrenetOccupancy};
use crate::optimizer::{select_initial, solve, SolveReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub frenet: Vec<FrenetPoint>,
    pub cartesian: Vec<CartesianPoint>,
}

impl TrajectoryRecord {
    fn of(traj: &Trajectory, route: &ReferenceRoute) -> Result<Self, HarnessError> {
        let frenet = traj.points();
        let cartesian = frenet
            .iter()
            .map(|p| route.to_cartesian(*p))
            .collect::<Result<_, _>>()
            .map_err(|e| HarnessError::stage("transform", e))?;
        Ok(Self { frenet, cartesian })
    }
}

/// Everything produced by one planning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub scenario: String,
    /// Index of the candidate that seeded refinement.
    pub selected: usize,
    pub initial: TrajectoryRecord,
    pub refined: TrajectoryRecord,
    pub report: SolveReport,
    pub cost_before: CostBreakdown,
    pub cost_after: CostBreakdown,
    /// Safety distance per occupancy frame, meters; `None` when no column crosses the threshold.
    pub s_safe: Vec<Option<f64>>,
    pub initial_metrics: PlanningMetrics,
    pub metrics: PlanningMetrics,
    /// Present when the scenario carries ground-truth occupancy.
    pub prediction: Option<PredictionMetrics>,
}

/// Intermediate products shared by the pipeline and the plot.
pub(crate) struct Prepared {
    pub route: ReferenceRoute,
    pub focc: FrenetOccupancy,
    pub ctx: CostContext,
}

pub(crate) fn prepare(scenario: &Scenario) -> Result<Prepared, HarnessError> {
    let doc = &scenario.doc;
    let route = ReferenceRoute::build(&doc.route, doc.route_spacing)
        .map_err(|e| HarnessError::stage("route", e))?;
    let focc = transform_occupancy(&scenario.occupancy, &route, doc.frenet_grid)
        .map_err(|e| HarnessError::stage("transform", e))?;
    let ctx = CostContext::new(&focc, &doc.cost).map_err(|e| HarnessError::stage("cost", e))?;
    Ok(Prepared { route, focc, ctx })
}

/// Select the top candidate, refine it against the predicted occupancy and score both.
pub fn run_pipeline(scenario: &Scenario) -> Result<PlanRecord, HarnessError> {
    scenario.validate()?;
    let doc = &scenario.doc;
    let Prepared { route, ctx, .. } = prepare(scenario)?;

    let initial_state = doc
        .ego
        .to_initial_state(&route)
        .map_err(|e| HarnessError::stage("select", e))?;
    let (selected, initial) = select_initial(&doc.candidates, &route, doc.dt, initial_state)
        .map_err(|e| HarnessError::stage("select", e))?;

    let (refined, report) = solve(&initial, &ctx, &doc.solver, Some((0.0, route.length())))
        .map_err(|e| HarnessError::stage("solve", e))?;

    let score = |traj: &Trajectory| {
        planning_metrics(
            traj,
            doc.truth.as_deref(),
            scenario.ground_truth.as_ref(),
            &route,
            &doc.cost,
            &doc.planning,
        )
        .map_err(|e| HarnessError::stage("metrics", e))
    };
    let prediction = scenario
        .ground_truth
        .as_ref()
        .map(|gt| prediction_metrics(&scenario.occupancy, gt, FocalParams::default()))
        .transpose()
        .map_err(|e| HarnessError::stage("metrics", e))?;

    Ok(PlanRecord {
        scenario: doc.name.clone(),
        selected,
        initial: TrajectoryRecord::of(&initial, &route)?,
        refined: TrajectoryRecord::of(&refined, &route)?,
        cost_before: assemble_residuals(&initial, &ctx).breakdown(),
        cost_after: assemble_residuals(&refined, &ctx).breakdown(),
        s_safe: (0..ctx.safe.frames())
            .map(|k| ctx.safe.row(k).map(|_| ctx.safe.meters(k)))
            .collect(),
        initial_metrics: score(&initial)?,
        metrics: score(&refined)?,
        prediction,
        report,
    })
}
