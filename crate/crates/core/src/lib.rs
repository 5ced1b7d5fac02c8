//! Occupancy-guided trajectory refinement.
//!
//! An initial ego plan and a stack of predicted occupancy grids are both moved
//! into the Frenet frame of a reference route. The plan is then refined by a
//! damped Gauss-Newton solve over a weighted sum of squared residuals covering
//! progress, comfort, route adherence, traffic lights and occupancy-based
//! safety.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costs;
pub mod frenet;
pub mod harness;
pub mod metrics;
pub mod occupancy;
pub mod optimizer;
mod spline;

pub use costs::{
    assemble_residuals, CostBreakdown, CostContext, CostError, CostModel, CostTerm, CostWeights,
    InitialState, Trajectory,
};
pub use frenet::{CartesianPoint, FrenetError, FrenetPoint, ReferenceRoute};
pub use harness::{
    generate_synthetic, load_scenario, render_plot, run_pipeline, save_scenario, Archetype,
    GeneratorParams, HarnessError, PlanRecord, Scenario,
};
pub use metrics::{
    auc_soft_iou, focal_loss, imitation_loss, planning_metrics, FocalParams, MetricsError,
    PlanningConfig, PlanningMetrics, PredictionMetrics,
};
pub use occupancy::{
    transform_occupancy, ActorType, FrenetGridSpec, FrenetOccupancy, GridShape, OccupancyError,
    OccupancyGrid,
};
pub use optimizer::{
    gauss_newton_step, jacobian, select_initial, solve, Candidate, SolveError, SolveReport,
    SolverConfig, Termination,
};
