//! Residual terms for trajectory refinement.
//!
//! The total cost is `C = sum_i || w_i * c_i ||^2` over the blocks listed in
//! [`CostTerm`]. Each block is a per-step residual sequence; the weights are
//! folded into the residuals so that the plain squared norm of
//! [`ResidualVector`] equals `C`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frenet::FrenetPoint;
use crate::occupancy::{bilinear, frame_for_time, FrenetGridSpec, FrenetOccupancy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("invalid cost input: {0}")]
    InvalidInput(String),
}

/// Ego state at plan time zero, expressed in the route frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialState {
    pub s: f64,
    pub d: f64,
    pub vs: f64,
    pub vd: f64,
    /// Longitudinal acceleration used to seed the jerk difference.
    #[serde(default)]
    pub acc_s: f64,
    /// Lateral acceleration used to seed the lateral second difference.
    #[serde(default)]
    pub acc_d: f64,
}

/// Frenet states `tau_1..tau_T` sampled every `dt` seconds after the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    s: Vec<f64>,
    d: Vec<f64>,
    dt: f64,
    initial: InitialState,
}

impl Trajectory {
    pub fn new(
        s: Vec<f64>,
        d: Vec<f64>,
        dt: f64,
        initial: InitialState,
    ) -> Result<Self, CostError> {
        if s.len() != d.len() {
            return Err(CostError::InvalidInput(format!(
                "s has {} states but d has {}",
                s.len(),
                d.len()
            )));
        }
        if s.len() < 2 {
            return Err(CostError::InvalidInput(
                "a trajectory needs at least two states".into(),
            ));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CostError::InvalidInput(format!(
                "dt must be positive, got {dt}"
            )));
        }
        Ok(Self { s, d, dt, initial })
    }

    pub fn from_points(
        points: &[FrenetPoint],
        dt: f64,
        initial: InitialState,
    ) -> Result<Self, CostError> {
        Self::new(
            points.iter().map(|p| p.s).collect(),
            points.iter().map(|p| p.d).collect(),
            dt,
            initial,
        )
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn initial(&self) -> &InitialState {
        &self.initial
    }

    /// Time of step `k` (zero-based), i.e. `(k + 1) * dt`.
    pub fn time_of(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.dt
    }

    pub fn points(&self) -> Vec<FrenetPoint> {
        self.s
            .iter()
            .zip(&self.d)
            .map(|(&s, &d)| FrenetPoint::new(s, d))
            .collect()
    }

    /// Decision vector `[s_1..s_T, d_1..d_T]`.
    pub fn to_vector(&self) -> Vec<f64> {
        self.s.iter().chain(&self.d).copied().collect()
    }

    /// Same timing and initial state, new decision vector.
    pub fn with_vector(&self, x: &[f64]) -> Self {
        let n = self.len();
        debug_assert_eq!(x.len(), 2 * n);
        Self {
            s: x[..n].to_vec(),
            d: x[n..].to_vec(),
            dt: self.dt,
            initial: self.initial,
        }
    }
}

/// Finite-difference kinematics of a trajectory, one entry per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub vel_s: Vec<f64>,
    pub acc_s: Vec<f64>,
    pub jerk_s: Vec<f64>,
    pub vel_d: Vec<f64>,
    pub acc_d: Vec<f64>,
}

fn backward_difference(values: &[f64], before: f64, dt: f64) -> Vec<f64> {
    let mut prev = before;
    values
        .iter()
        .map(|&v| {
            let out = (v - prev) / dt;
            prev = v;
            out
        })
        .collect()
}

/// Backward differences seeded with the initial state.
pub fn derivatives(traj: &Trajectory) -> Derivatives {
    let init = traj.initial;
    let dt = traj.dt;
    let vel_s = backward_difference(&traj.s, init.s, dt);
    let acc_s = backward_difference(&vel_s, init.vs, dt);
    let jerk_s = backward_difference(&acc_s, init.acc_s, dt);
    let vel_d = backward_difference(&traj.d, init.d, dt);
    let acc_d = backward_difference(&vel_d, init.vd, dt);
    Derivatives {
        vel_s,
        acc_s,
        jerk_s,
        vel_d,
        acc_d,
    }
}

/// Residual blocks, in the order they are stacked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostTerm {
    Progress,
    ComfortSAcc,
    ComfortDAcc,
    ComfortSJerk,
    Route,
    TrafficLight,
    Safety,
}

impl CostTerm {
    pub const ALL: [CostTerm; 7] = [
        CostTerm::Progress,
        CostTerm::ComfortSAcc,
        CostTerm::ComfortDAcc,
        CostTerm::ComfortSJerk,
        CostTerm::Route,
        CostTerm::TrafficLight,
        CostTerm::Safety,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostTerm::Progress => "progress",
            CostTerm::ComfortSAcc => "comfort_s_acc",
            CostTerm::ComfortDAcc => "comfort_d_acc",
            CostTerm::ComfortSJerk => "comfort_s_jerk",
            CostTerm::Route => "route",
            CostTerm::TrafficLight => "traffic_light",
            CostTerm::Safety => "safety",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Per-term weights `w_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub progress: f64,
    pub comfort_s_acc: f64,
    pub comfort_d_acc: f64,
    pub comfort_s_jerk: f64,
    pub route: f64,
    pub traffic_light: f64,
    pub safety: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            progress: 0.1,
            comfort_s_acc: 0.5,
            comfort_d_acc: 0.5,
            comfort_s_jerk: 0.3,
            route: 1.0,
            traffic_light: 10.0,
            safety: 5.0,
        }
    }
}

impl CostWeights {
    pub fn get(&self, term: CostTerm) -> f64 {
        match term {
            CostTerm::Progress => self.progress,
            CostTerm::ComfortSAcc => self.comfort_s_acc,
            CostTerm::ComfortDAcc => self.comfort_d_acc,
            CostTerm::ComfortSJerk => self.comfort_s_jerk,
            CostTerm::Route => self.route,
            CostTerm::TrafficLight => self.traffic_light,
            CostTerm::Safety => self.safety,
        }
    }

    pub fn set(&mut self, term: CostTerm, value: f64) {
        let slot = match term {
            CostTerm::Progress => &mut self.progress,
            CostTerm::ComfortSAcc => &mut self.comfort_s_acc,
            CostTerm::ComfortDAcc => &mut self.comfort_d_acc,
            CostTerm::ComfortSJerk => &mut self.comfort_s_jerk,
            CostTerm::Route => &mut self.route,
            CostTerm::TrafficLight => &mut self.traffic_light,
            CostTerm::Safety => &mut self.safety,
        };
        *slot = value;
    }

    /// Every weight zero except `term`, which is set to `value`.
    pub fn only(term: CostTerm, value: f64) -> Self {
        let mut w = Self {
            progress: 0.0,
            comfort_s_acc: 0.0,
            comfort_d_acc: 0.0,
            comfort_s_jerk: 0.0,
            route: 0.0,
            traffic_light: 0.0,
            safety: 0.0,
        };
        w.set(term, value);
        w
    }
}

fn default_true() -> bool {
    true
}

/// Weights and scene parameters of the refinement cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub weights: CostWeights,
    /// Per-channel weights `lambda_u` (vehicle, pedestrian, cyclist, occlusion).
    pub type_weights: Vec<f64>,
    /// Lateral occupancy mass a column must exceed to set the safety distance.
    pub epsilon: f64,
    /// Longitudinal speed limit, m/s.
    pub v_limit: f64,
    /// Stop line arc length for a red light; `None` when there is no light.
    pub s_red: Option<f64>,
    #[serde(default = "default_true")]
    pub red_light_active: bool,
    /// Divide each safety residual by the number of occupied cells past the safety distance.
    pub normalize_safety: bool,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            type_weights: vec![1.0, 2.0, 2.0, 0.5],
            epsilon: 0.5,
            v_limit: 13.89,
            s_red: None,
            red_light_active: true,
            normalize_safety: false,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<(), CostError> {
        for term in CostTerm::ALL {
            let w = self.weights.get(term);
            if !(w.is_finite() && w >= 0.0) {
                return Err(CostError::InvalidInput(format!(
                    "weight {} must be a nonnegative number, got {w}",
                    term.name()
                )));
            }
        }
        if let Some(bad) = self
            .type_weights
            .iter()
            .find(|l| !(l.is_finite() && **l >= 0.0))
        {
            return Err(CostError::InvalidInput(format!(
                "type weights must be nonnegative, got {bad}"
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(CostError::InvalidInput(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !self.v_limit.is_finite() {
            return Err(CostError::InvalidInput("v_limit must be finite".into()));
        }
        if self.s_red.is_some_and(|s| !s.is_finite()) {
            return Err(CostError::InvalidInput("s_red must be finite".into()));
        }
        Ok(())
    }

    /// Stop line when a red light is currently in force.
    pub fn active_red(&self) -> Option<f64> {
        self.s_red.filter(|_| self.red_light_active)
    }
}

/// `c_t = vel_s_t - v_limit`.
pub fn cost_progress(traj: &Trajectory, model: &CostModel) -> Vec<f64> {
    derivatives(traj)
        .vel_s
        .into_iter()
        .map(|v| v - model.v_limit)
        .collect()
}

/// Longitudinal acceleration, lateral acceleration and longitudinal jerk,
/// kept as separate streams so each is squared on its own.
pub fn cost_comfort(traj: &Trajectory) -> [Vec<f64>; 3] {
    let der = derivatives(traj);
    [der.acc_s, der.acc_d, der.jerk_s]
}

/// `c_t = d_t`.
pub fn cost_route(traj: &Trajectory) -> Vec<f64> {
    traj.d.clone()
}

/// `c_t = s_t - s_red` past an active red stop line, else 0.
pub fn cost_traffic_light(traj: &Trajectory, model: &CostModel) -> Vec<f64> {
    match model.active_red() {
        Some(s_red) => traj
            .s
            .iter()
            .map(|&s| if s > s_red { s - s_red } else { 0.0 })
            .collect(),
        None => vec![0.0; traj.len()],
    }
}

/// Type-weighted occupancy `sum_u lambda_u * O_t^u(s, d)` for every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionField {
    spec: FrenetGridSpec,
    horizon_dt: f64,
    /// `[frame][i * D + j]`
    values: Vec<Vec<f64>>,
    /// `[frame][i]`, the lateral sum of `values`.
    column_mass: Vec<Vec<f64>>,
    /// `[frame][i]`, count of nonzero cells in column `i`.
    column_occupied: Vec<Vec<usize>>,
}

impl CollisionField {
    pub fn spec(&self) -> &FrenetGridSpec {
        &self.spec
    }

    pub fn frames(&self) -> usize {
        self.values.len()
    }

    pub fn frame_for_time(&self, time: f64) -> usize {
        frame_for_time(time, self.horizon_dt, self.frames())
    }

    pub fn value(&self, frame: usize, i: usize, j: usize) -> f64 {
        self.values[frame][i * self.spec.d_cells + j]
    }

    pub fn column_mass(&self, frame: usize) -> &[f64] {
        &self.column_mass[frame]
    }

    /// Continuous field value at `(s, d)` by bilinear interpolation.
    pub fn sample(&self, frame: usize, s: f64, d: f64) -> f64 {
        let (fi, fj) = self.spec.fractional_index(s, d);
        let (rows, cols) = (self.spec.s_cells as i64, self.spec.d_cells as i64);
        bilinear(fi, fj, |i, j| {
            if i < 0 || j < 0 || i >= rows || j >= cols {
                0.0
            } else {
                self.value(frame, i as usize, j as usize)
            }
        })
    }
}

pub fn collision_field(
    focc: &FrenetOccupancy,
    model: &CostModel,
) -> Result<CollisionField, CostError> {
    if model.type_weights.len() < focc.types() {
        return Err(CostError::InvalidInput(format!(
            "{} type weights given for {} occupancy channels",
            model.type_weights.len(),
            focc.types()
        )));
    }
    let spec = *focc.spec();
    let plane = spec.s_cells * spec.d_cells;
    let mut values = Vec::with_capacity(focc.frames());
    let mut column_mass = Vec::with_capacity(focc.frames());
    let mut column_occupied = Vec::with_capacity(focc.frames());
    for t in 0..focc.frames() {
        let mut field = vec![0.0; plane];
        for (u, &lambda) in model.type_weights.iter().enumerate().take(focc.types()) {
            for i in 0..spec.s_cells {
                for j in 0..spec.d_cells {
                    field[i * spec.d_cells + j] += lambda * f64::from(focc.get(t, u, i, j));
                }
            }
        }
        let mass = field.chunks(spec.d_cells).map(|c| c.iter().sum()).collect();
        let occupied = field
            .chunks(spec.d_cells)
            .map(|c| c.iter().filter(|&&v| v > 0.0).count())
            .collect();
        values.push(field);
        column_mass.push(mass);
        column_occupied.push(occupied);
    }
    Ok(CollisionField {
        spec,
        horizon_dt: focc.horizon_dt(),
        values,
        column_mass,
        column_occupied,
    })
}

/// Per-frame safety distance: the first row whose lateral mass exceeds epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyDistances {
    rows: Vec<Option<usize>>,
    s_res: f64,
}

impl SafetyDistances {
    pub fn row(&self, frame: usize) -> Option<usize> {
        self.rows[frame]
    }

    /// Distance in meters, `+inf` when no row exceeds the threshold.
    pub fn meters(&self, frame: usize) -> f64 {
        self.rows[frame].map_or(f64::INFINITY, |i| i as f64 * self.s_res)
    }

    pub fn all_meters(&self) -> Vec<f64> {
        (0..self.rows.len()).map(|k| self.meters(k)).collect()
    }

    pub fn frames(&self) -> usize {
        self.rows.len()
    }
}

pub fn safety_distance(field: &CollisionField, model: &CostModel) -> SafetyDistances {
    let rows = field
        .column_mass
        .iter()
        .map(|mass| mass.iter().position(|&m| m > model.epsilon))
        .collect();
    SafetyDistances {
        rows,
        s_res: field.spec.s_res,
    }
}

fn safety_normalizer(field: &CollisionField, frame: usize, first: usize, model: &CostModel) -> f64 {
    if !model.normalize_safety {
        return 1.0;
    }
    let count: usize = field.column_occupied[frame][first..].iter().sum();
    if count == 0 {
        1.0
    } else {
        1.0 / count as f64
    }
}

/// `(c_t, dc_t/ds_t)` for the safety residual of one step.
pub(crate) fn safety_term(
    s_t: f64,
    frame: usize,
    field: &CollisionField,
    safe: &SafetyDistances,
    model: &CostModel,
) -> (f64, f64) {
    let Some(row) = safe.row(frame) else {
        return (0.0, 0.0);
    };
    let first = row + 1;
    let mass = &field.column_mass[frame];
    let mut value = 0.0;
    let mut slope = 0.0;
    for (i, &m) in mass.iter().enumerate().skip(first) {
        let s_cell = field.spec.s_of(i);
        if s_t <= s_cell {
            break;
        }
        value += (s_t - s_cell) * m;
        slope += m;
    }
    let scale = safety_normalizer(field, frame, first.min(mass.len()), model);
    (value * scale, slope * scale)
}

/// `c_t = sum_{s > s_safe} sum_d sgnd(s_t) * c_ogm_t(s, d)` with
/// `sgnd(s_t) = (s_t - s) * 1(s_t > s)`. Depends on `s_t` only.
pub fn cost_safety(
    traj: &Trajectory,
    field: &CollisionField,
    safe: &SafetyDistances,
    model: &CostModel,
) -> Vec<f64> {
    traj.s
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let frame = field.frame_for_time(traj.time_of(k));
            safety_term(s, frame, field, safe, model).0
        })
        .collect()
}

/// Weighted residual blocks; `total_cost` is the refinement objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    blocks: Vec<(CostTerm, Vec<f64>)>,
}

impl ResidualVector {
    pub fn blocks(&self) -> &[(CostTerm, Vec<f64>)] {
        &self.blocks
    }

    pub fn block(&self, term: CostTerm) -> &[f64] {
        &self.blocks[term.index()].1
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|(_, r)| r.iter().copied())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|(_, r)| r.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn term_cost(&self, term: CostTerm) -> f64 {
        self.block(term).iter().map(|r| r * r).sum()
    }

    pub fn breakdown(&self) -> CostBreakdown {
        CostBreakdown {
            terms: CostTerm::ALL
                .iter()
                .map(|&t| (t, self.term_cost(t)))
                .collect(),
        }
    }

    pub fn total_cost(&self) -> f64 {
        CostTerm::ALL.iter().map(|&t| self.term_cost(t)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks
            .iter()
            .all(|(_, r)| r.iter().all(|v| v.is_finite()))
    }
}

/// Squared, weighted contribution of each term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub terms: Vec<(CostTerm, f64)>,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c).sum()
    }

    pub fn get(&self, term: CostTerm) -> f64 {
        self.terms
            .iter()
            .find(|(t, _)| *t == term)
            .map_or(0.0, |(_, c)| *c)
    }
}

/// Everything the residuals need besides the trajectory, computed once per problem.
#[derive(Debug, Clone)]
pub struct CostContext {
    pub model: CostModel,
    pub field: CollisionField,
    pub safe: SafetyDistances,
}

impl CostContext {
    pub fn new(focc: &FrenetOccupancy, model: &CostModel) -> Result<Self, CostError> {
        model.validate()?;
        let field = collision_field(focc, model)?;
        let safe = safety_distance(&field, model);
        Ok(Self {
            model: model.clone(),
            field,
            safe,
        })
    }

    /// Safety distance (meters) governing step `k` of `traj`.
    pub fn s_safe_for_step(&self, traj: &Trajectory, k: usize) -> f64 {
        self.safe.meters(self.field.frame_for_time(traj.time_of(k)))
    }
}

pub fn assemble_residuals(traj: &Trajectory, ctx: &CostContext) -> ResidualVector {
    let w = &ctx.model.weights;
    let [acc_s, acc_d, jerk_s] = cost_comfort(traj);
    let raw = [
        (CostTerm::Progress, cost_progress(traj, &ctx.model)),
        (CostTerm::ComfortSAcc, acc_s),
        (CostTerm::ComfortDAcc, acc_d),
        (CostTerm::ComfortSJerk, jerk_s),
        (CostTerm::Route, cost_route(traj)),
        (CostTerm::TrafficLight, cost_traffic_light(traj, &ctx.model)),
        (
            CostTerm::Safety,
            cost_safety(traj, &ctx.field, &ctx.safe, &ctx.model),
        ),
    ];
    ResidualVector {
        blocks: raw
            .into_iter()
            .map(|(term, r)| {
                let wi = w.get(term);
                (term, r.into_iter().map(|v| wi * v).collect())
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(s: Vec<f64>, d: Vec<f64>, initial: InitialState) -> Trajectory {
        Trajectory::new(s, d, 0.1, initial).unwrap()
    }

    fn spec(s_cells: usize, d_cells: usize) -> FrenetGridSpec {
        FrenetGridSpec {
            s_cells,
            d_cells,
            s_res: 0.1,
            d_res: 0.5,
        }
    }

    #[test]
    fn constant_position_has_zero_derivatives() {
        let t = traj(
            vec![5.0; 10],
            vec![0.0; 10],
            InitialState {
                s: 5.0,
                ..Default::default()
            },
        );
        let der = derivatives(&t);
        for v in [der.vel_s, der.acc_s, der.jerk_s] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn constant_velocity() {
        let v = 7.5;
        let s: Vec<f64> = (1..=20).map(|k| v * k as f64 * 0.1).collect();
        let t = traj(
            s,
            vec![0.0; 20],
            InitialState {
                vs: v,
                ..Default::default()
            },
        );
        let der = derivatives(&t);
        assert!(der.vel_s.iter().all(|&x| (x - v).abs() < 1e-9));
        assert!(der.acc_s.iter().all(|&x| x.abs() < 1e-7));
        let [a, b, c] = cost_comfort(&t);
        assert!(a.iter().chain(&b).chain(&c).all(|x| x.abs() < 1e-5));
    }

    #[test]
    fn constant_acceleration_matches_kinematics() {
        let a = 2.0;
        let dt = 0.1;
        let s: Vec<f64> = (1..=30)
            .map(|k| 0.5 * a * (k as f64 * dt).powi(2))
            .collect();
        let t = traj(s, vec![0.0; 30], InitialState::default());
        let der = derivatives(&t);
        // The first step sees v_0 = 0 against a mid-interval velocity a*dt/2.
        assert!((der.acc_s[0] - a / 2.0).abs() < 1e-9);
        for &x in &der.acc_s[1..] {
            assert!((x - a).abs() < 1e-9, "{x}");
        }
        for &j in &der.jerk_s[2..] {
            assert!(j.abs() < 1e-6);
        }
    }

    #[test]
    fn lateral_sinusoid_only_moves_lateral_streams() {
        let s: Vec<f64> = (1..=40).map(|k| 10.0 * k as f64 * 0.1).collect();
        let d: Vec<f64> = (1..=40).map(|k| (k as f64 * 0.3).sin()).collect();
        let t = traj(
            s,
            d,
            InitialState {
                vs: 10.0,
                vd: 3.0,
                ..Default::default()
            },
        );
        let [acc_s, acc_d, jerk_s] = cost_comfort(&t);
        assert!(acc_s.iter().chain(&jerk_s).all(|x| x.abs() < 1e-6));
        assert!(acc_d.iter().any(|x| x.abs() > 1.0));
    }

    #[test]
    fn progress_residuals() {
        let model = CostModel {
            v_limit: 13.89,
            ..Default::default()
        };
        let s: Vec<f64> = (1..=5).map(|k| k as f64).collect();
        let t = traj(s, vec![0.0; 5], InitialState::default());
        for r in cost_progress(&t, &model) {
            assert!((r - (10.0 - 13.89)).abs() < 1e-9, "{r}");
        }
        let still = traj(vec![0.0; 3], vec![0.0; 3], InitialState::default());
        assert!(cost_progress(&still, &model).iter().all(|&r| r == -13.89));
    }

    #[test]
    fn route_and_traffic_light() {
        let t = traj(
            vec![29.0, 31.0, 32.0],
            vec![0.0, 1.5, -2.0],
            InitialState::default(),
        );
        assert_eq!(cost_route(&t), vec![0.0, 1.5, -2.0]);

        let green = CostModel::default();
        assert_eq!(cost_traffic_light(&t, &green), vec![0.0; 3]);
        let red = CostModel {
            s_red: Some(30.0),
            ..Default::default()
        };
        assert_eq!(cost_traffic_light(&t, &red), vec![0.0, 1.0, 2.0]);
        let inactive = CostModel {
            s_red: Some(30.0),
            red_light_active: false,
            ..Default::default()
        };
        assert_eq!(cost_traffic_light(&t, &inactive), vec![0.0; 3]);
    }

    #[test]
    fn collision_field_weights_types() {
        let mut focc = FrenetOccupancy::empty(spec(10, 4), 1, 4, 1.0);
        let model = CostModel::default();
        let f = collision_field(&focc, &model).unwrap();
        assert!((0..10).all(|i| (0..4).all(|j| f.value(0, i, j) == 0.0)));

        focc.set(0, 1, 3, 2, 0.5);
        let f = collision_field(&focc, &model).unwrap();
        assert_eq!(f.value(0, 3, 2), 1.0);
        assert_eq!(f.column_mass(0)[3], 1.0);
    }

    #[test]
    fn safety_distance_scan() {
        let model = CostModel::default();
        let empty = FrenetOccupancy::empty(spec(400, 4), 1, 1, 1.0);
        let f = collision_field(&empty, &model).unwrap();
        assert_eq!(safety_distance(&f, &model).meters(0), f64::INFINITY);

        let mut focc = FrenetOccupancy::empty(spec(400, 4), 1, 1, 1.0);
        // Column mass 2 * epsilon = 1.0 split over two lateral cells.
        focc.set(0, 0, 200, 1, 0.5);
        focc.set(0, 0, 200, 2, 0.5);
        let f = collision_field(&focc, &model).unwrap();
        assert!((safety_distance(&f, &model).meters(0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn safety_single_cell_hand_value() {
        let model = CostModel::default();
        let mut focc = FrenetOccupancy::empty(spec(400, 4), 1, 1, 1.0);
        // s_safe at 15 m (mass 0.6 > 0.5); one cell of value 1 at 20 m.
        focc.set(0, 0, 150, 1, 0.6);
        focc.set(0, 0, 200, 2, 1.0);
        let f = collision_field(&focc, &model).unwrap();
        let safe = safety_distance(&f, &model);
        assert!((safe.meters(0) - 15.0).abs() < 1e-12);
        let t = traj(vec![23.0, 14.0], vec![0.0, 0.0], InitialState::default());
        let c = cost_safety(&t, &f, &safe, &model);
        assert!((c[0] - 3.0).abs() < 1e-12, "{}", c[0]);
        assert_eq!(c[1], 0.0);
    }

    #[test]
    fn safety_ignores_lateral_position() {
        let model = CostModel::default();
        let mut focc = FrenetOccupancy::empty(spec(400, 4), 1, 1, 1.0);
        for i in 100..120 {
            focc.set(0, 0, i, 1, 1.0);
        }
        let ctx = CostContext::new(&focc, &model).unwrap();
        let a = traj(vec![11.5, 11.7], vec![0.0, 0.0], InitialState::default());
        let b = traj(vec![11.5, 11.7], vec![3.0, -4.0], InitialState::default());
        assert_eq!(
            assemble_residuals(&a, &ctx).block(CostTerm::Safety),
            assemble_residuals(&b, &ctx).block(CostTerm::Safety)
        );
    }

    #[test]
    fn zero_weights_give_zero_residuals() {
        let model = CostModel {
            weights: CostWeights::only(CostTerm::Route, 0.0),
            s_red: Some(1.0),
            ..Default::default()
        };
        let focc = FrenetOccupancy::empty(spec(50, 4), 1, 4, 1.0);
        let ctx = CostContext::new(&focc, &model).unwrap();
        let t = traj(
            vec![3.0, 4.0, 9.0],
            vec![1.0, -1.0, 2.0],
            InitialState::default(),
        );
        let r = assemble_residuals(&t, &ctx);
        assert!(r.flatten().iter().all(|&v| v == 0.0));
        assert_eq!(r.len(), 21);
    }

    #[test]
    fn single_term_block_is_scaled() {
        let model = CostModel {
            weights: CostWeights::only(CostTerm::Route, 3.0),
            ..Default::default()
        };
        let focc = FrenetOccupancy::empty(spec(50, 4), 1, 4, 1.0);
        let ctx = CostContext::new(&focc, &model).unwrap();
        let t = traj(vec![3.0, 4.0], vec![1.0, -2.0], InitialState::default());
        let r = assemble_residuals(&t, &ctx);
        assert_eq!(r.block(CostTerm::Route), &[3.0, -6.0]);
        assert_eq!(r.total_cost(), 45.0);
    }

    #[test]
    fn zero_cost_at_nominal_driving() {
        let v = 12.0;
        let model = CostModel {
            v_limit: v,
            ..Default::default()
        };
        let focc = FrenetOccupancy::empty(spec(50, 4), 5, 4, 1.0);
        let ctx = CostContext::new(&focc, &model).unwrap();
        let s: Vec<f64> = (1..=50).map(|k| 2.0 + v * k as f64 * 0.1).collect();
        // Powers of two keep the finite differences exact.
        let t = Trajectory::new(
            (1..=8).map(|k| 2.0 + 8.0 * k as f64 * 0.125).collect(),
            vec![0.0; 8],
            0.125,
            InitialState {
                s: 2.0,
                vs: 8.0,
                ..Default::default()
            },
        )
        .unwrap();
        let ctx8 = CostContext::new(
            &focc,
            &CostModel {
                v_limit: 8.0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(assemble_residuals(&t, &ctx8).total_cost(), 0.0);
        let t = traj(
            s,
            vec![0.0; 50],
            InitialState {
                s: 2.0,
                vs: v,
                ..Default::default()
            },
        );
        assert!(assemble_residuals(&t, &ctx).total_cost() < 1e-12);
    }

    #[test]
    fn rejects_bad_models() {
        let mut m = CostModel::default();
        m.weights.safety = -1.0;
        assert!(m.validate().is_err());
        let m = CostModel {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(m.validate().is_err());
        let focc = FrenetOccupancy::empty(spec(10, 2), 1, 5, 1.0);
        assert!(collision_field(&focc, &CostModel::default()).is_err());
        assert!(Trajectory::new(vec![1.0], vec![0.0], 0.1, InitialState::default()).is_err());
    }
}
