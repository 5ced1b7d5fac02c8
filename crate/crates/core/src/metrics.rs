//! Prediction losses and metrics for occupancy grids, plus open-loop planning metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{derivatives, CostModel, Trajectory};
use crate::frenet::{CartesianPoint, FrenetError, FrenetPoint, ReferenceRoute};
use crate::occupancy::{ActorType, OccupancyGrid};
use crate::optimizer::Candidate;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
const EPS: f64 = 1e-7;
/// Number of linearly spaced PR-curve thresholds.
pub const AUC_THRESHOLDS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("invalid metric input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Frenet(#[from] FrenetError),
}

fn check_pair(pred: &OccupancyGrid, truth: &OccupancyGrid) -> Result<(), MetricsError> {
    if pred.shape() != truth.shape() {
        return Err(MetricsError::InvalidInput(format!(
            "prediction shape {:?} differs from truth shape {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    Ok(())
}

fn check_lengths(pred: usize, truth: usize) -> Result<(), MetricsError> {
    if pred != truth {
        return Err(MetricsError::InvalidInput(format!(
            "{pred} predictions against {truth} labels"
        )));
    }
    if pred == 0 {
        return Err(MetricsError::InvalidInput("no cells to evaluate".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FocalParams {
    pub gamma: f64,
    /// Uniform scale on every cell; `alpha = 1, gamma = 0` is plain cross-entropy.
    pub alpha: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: 0.25,
        }
    }
}

/// Mean of `-alpha * (1 - p_t)^gamma * ln(p_t)` over all cells, where `p_t` is
/// the predicted probability of the true label. Labels must be 0 or 1.
pub fn focal_loss_values(
    pred: &[f64],
    truth: &[f64],
    params: FocalParams,
) -> Result<f64, MetricsError> {
    check_lengths(pred.len(), truth.len())?;
    if let Some(bad) = truth.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(MetricsError::InvalidInput(format!(
            "focal loss needs binary labels, found {bad}"
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(&p, &y)| {
            let p = p.clamp(EPS, 1.0 - EPS);
            let pt = if y == 1.0 { p } else { 1.0 - p };
            -params.alpha * (1.0 - pt).powf(params.gamma) * pt.ln()
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Focal loss averaged over every `(t, u, h, w)` cell.
pub fn focal_loss(
    pred: &OccupancyGrid,
    truth: &OccupancyGrid,
    params: FocalParams,
) -> Result<f64, MetricsError> {
    check_pair(pred, truth)?;
    focal_loss_values(&widen(pred.data()), &widen(truth.data()), params)
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImitationLoss {
    /// Index of the candidate closest to the truth.
    pub closest: usize,
    /// Smooth-L1 of the closest candidate, averaged over steps and coordinates.
    pub regression: f64,
    /// `-ln p_hat` of the closest candidate, with probabilities normalized to sum to one.
    pub classification: f64,
}

impl ImitationLoss {
    pub fn total(&self) -> f64 {
        self.regression + self.classification
    }
}

/// Smooth-L1 regression of the closest mode plus cross-entropy against a
/// one-hot target on that mode. Closeness is mean Euclidean displacement.
pub fn imitation_loss(
    candidates: &[Candidate],
    truth: &[CartesianPoint],
) -> Result<ImitationLoss, MetricsError> {
    if candidates.is_empty() || truth.is_empty() {
        return Err(MetricsError::InvalidInput(
            "imitation loss needs candidates and a truth trajectory".into(),
        ));
    }
    if let Some(k) = candidates
        .iter()
        .position(|c| c.points.len() != truth.len())
    {
        return Err(MetricsError::InvalidInput(format!(
            "candidate {k} has {} points, truth has {}",
            candidates[k].points.len(),
            truth.len()
        )));
    }
    let total_prob: f64 = candidates.iter().map(|c| c.probability).sum();
    if candidates.iter().any(|c| !(c.probability >= 0.0)) || !(total_prob > 0.0) {
        return Err(MetricsError::InvalidInput(
            "candidate probabilities must be nonnegative with a positive sum".into(),
        ));
    }

    let mean_distance = |c: &Candidate| {
        c.points
            .iter()
            .zip(truth)
            .map(|(a, b)| a.distance(b))
            .sum::<f64>()
            / truth.len() as f64
    };
    let mut closest = 0;
    let mut best = mean_distance(&candidates[0]);
    for (k, c) in candidates.iter().enumerate().skip(1) {
        let dist = mean_distance(c);
        if dist < best {
            best = dist;
            closest = k;
        }
    }

    let chosen = &candidates[closest];
    let regression = chosen
        .points
        .iter()
        .zip(truth)
        .map(|(a, b)| smooth_l1(a.x - b.x) + smooth_l1(a.y - b.y))
        .sum::<f64>()
        / (2 * truth.len()) as f64;
    let p_hat = (chosen.probability / total_prob).clamp(EPS, 1.0);
    Ok(ImitationLoss {
        closest,
        regression,
        classification: -p_hat.ln(),
    })
}

/// Trapezoidal area under the precision-recall curve traced by `thresholds`.
///
/// A cell is predicted positive when its score is at least the threshold.
/// Precision is taken as 1 when nothing is predicted positive, and the curve
/// starts at `(recall 0, precision 1)`. `None` when no label is positive.
pub fn pr_auc_with_thresholds(pred: &[f64], truth: &[bool], thresholds: &[f64]) -> Option<f64> {
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return None;
    }
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));

    let mut area = 0.0;
    let (mut prev_r, mut prev_p) = (0.0, 1.0);
    for tau in sorted {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&p, &t) in pred.iter().zip(truth) {
            if p >= tau {
                if t {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = tp as f64 / positives as f64;
        area += (recall - prev_r) * (precision + prev_p) / 2.0;
        prev_r = recall;
        prev_p = precision;
    }
    Some(area)
}

/// PR-AUC over thresholds `i / 99`, `i = 0..=99`.
pub fn pr_auc(pred: &[f64], truth: &[bool]) -> Option<f64> {
    let thresholds: Vec<f64> = (0..AUC_THRESHOLDS)
        .map(|i| i as f64 / (AUC_THRESHOLDS - 1) as f64)
        .collect();
    pr_auc_with_thresholds(pred, truth, &thresholds)
}

/// PR-AUC with a threshold at every distinct score. Depends only on the score
/// ordering, so it is unchanged by strictly increasing transforms of `pred`.
pub fn pr_auc_exact(pred: &[f64], truth: &[bool]) -> Option<f64> {
    let mut thresholds = pred.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    pr_auc_with_thresholds(pred, truth, &thresholds)
}

/// `sum(p * o) / (sum p + sum o - sum(p * o))`; 1 when both grids are empty.
pub fn soft_iou(pred: &[f64], truth: &[f64]) -> f64 {
    let mut inter = 0.0;
    let mut sum_p = 0.0;
    let mut sum_o = 0.0;
    for (&p, &o) in pred.iter().zip(truth) {
        inter += p * o;
        sum_p += p;
        sum_o += o;
    }
    let union = sum_p + sum_o - inter;
    if union <= 0.0 {
        1.0
    } else {
        inter / union
    }
}

/// `(PR-AUC, soft-IoU)` over every cell; truth cells count as positive above 0.5.
pub fn auc_soft_iou(
    pred: &OccupancyGrid,
    truth: &OccupancyGrid,
) -> Result<(Option<f64>, f64), MetricsError> {
    check_pair(pred, truth)?;
    let p = widen(pred.data());
    let o = widen(truth.data());
    let labels: Vec<bool> = o.iter().map(|&v| v > 0.5).collect();
    Ok((pr_auc(&p, &labels), soft_iou(&p, &o)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    /// `None` when the truth has no occupied cell.
    pub auc: Option<f64>,
    pub soft_iou: f64,
    pub focal_loss: f64,
    /// Restricted to the vehicle, pedestrian and cyclist channels.
    pub vec_auc: Option<f64>,
    pub vec_soft_iou: Option<f64>,
    /// Restricted to the occlusion channel.
    pub occ_auc: Option<f64>,
    pub occ_soft_iou: Option<f64>,
}

fn channel_values(grid: &OccupancyGrid, keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let shape = grid.shape();
    let plane = shape.height * shape.width;
    grid.data()
        .chunks(plane)
        .enumerate()
        .filter(|(idx, _)| keep(idx % shape.types))
        .flat_map(|(_, chunk)| chunk.iter().map(|&v| f64::from(v)))
        .collect()
}

pub fn prediction_metrics(
    pred: &OccupancyGrid,
    truth: &OccupancyGrid,
    params: FocalParams,
) -> Result<PredictionMetrics, MetricsError> {
    let (auc, iou) = auc_soft_iou(pred, truth)?;
    let focal = focal_loss_values(
        &widen(pred.data()),
        &widen(truth.data())
            .iter()
            .map(|&v| if v > 0.5 { 1.0 } else { 0.0 })
            .collect::<Vec<_>>(),
        params,
    )?;
    let occ = ActorType::Occlusion.channel();
    let split = |keep: &dyn Fn(usize) -> bool| {
        let p = channel_values(pred, keep);
        if p.is_empty() {
            return (None, None);
        }
        let o = channel_values(truth, keep);
        let labels: Vec<bool> = o.iter().map(|&v| v > 0.5).collect();
        (pr_auc(&p, &labels), Some(soft_iou(&p, &o)))
    };
    let (vec_auc, vec_soft_iou) = split(&|u| u != occ);
    let (occ_auc, occ_soft_iou) = split(&|u| u == occ);
    Ok(PredictionMetrics {
        auc,
        soft_iou: iou,
        focal_loss: focal,
        vec_auc,
        vec_soft_iou,
        occ_auc,
        occ_soft_iou,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanningConfig {
    pub ego_length: f64,
    pub ego_width: f64,
    /// Ground-truth cells above this value count as occupied.
    pub occupied_threshold: f64,
    pub lane_half_width: f64,
    /// Times (seconds) at which displacement error is reported.
    pub error_times: [f64; 3],
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            ego_length: 4.8,
            ego_width: 2.0,
            occupied_threshold: 0.5,
            lane_half_width: 2.0,
            error_times: [1.0, 3.0, 5.0],
        }
    }
}

/// Per-scenario planning metrics. Rates are 0 or 100 for a single scenario and
/// averages after [`aggregate_planning`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningMetrics {
    /// `None` without ground-truth occupancy.
    pub collision_rate: Option<f64>,
    pub off_route_rate: f64,
    pub red_light_rate: f64,
    pub mean_jerk: f64,
    pub mean_acc: f64,
    pub mean_lat_acc: f64,
    /// Euclidean error at each of [`PlanningConfig::error_times`]; `None`
    /// without a truth trajectory long enough to reach that time.
    pub displacement_error: [Option<f64>; 3],
}

/// Corners of a `length x width` rectangle centered at `center` facing `heading`.
fn footprint(center: CartesianPoint, heading: f64, length: f64, width: f64) -> [(f64, f64); 4] {
    let (sin, cos) = heading.sin_cos();
    let (hl, hw) = (length / 2.0, width / 2.0);
    [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
        .map(|(a, b)| (center.x + a * cos - b * sin, center.y + a * sin + b * cos))
}

fn project(points: &[(f64, f64)], axis: (f64, f64)) -> (f64, f64) {
    points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let v = p.0 * axis.0 + p.1 * axis.1;
            (lo.min(v), hi.max(v))
        })
}

/// Separating-axis overlap test of two convex quadrilaterals.
fn quads_overlap(a: &[(f64, f64); 4], b: &[(f64, f64); 4]) -> bool {
    for poly in [a, b] {
        for i in 0..2 {
            let (p, q) = (poly[i], poly[i + 1]);
            let axis = (-(q.1 - p.1), q.0 - p.0);
            let (a_lo, a_hi) = project(a, axis);
            let (b_lo, b_hi) = project(b, axis);
            if a_hi < b_lo || b_hi < a_lo {
                return false;
            }
        }
    }
    true
}

/// Does the ego footprint at `pose` touch an occupied cell of frame `t`?
fn footprint_hits(
    grid: &OccupancyGrid,
    t: usize,
    corners: &[(f64, f64); 4],
    threshold: f64,
) -> bool {
    let shape = grid.shape();
    let mpp = grid.meters_per_pixel();
    let origin = grid.origin();
    let (x_lo, x_hi) = project(corners, (1.0, 0.0));
    let (y_lo, y_hi) = project(corners, (0.0, 1.0));
    let to_range = |lo: f64, hi: f64, base: f64, n: usize| {
        let a = ((lo - base) / mpp).floor().max(0.0) as usize;
        let b = ((hi - base) / mpp).floor();
        if b < 0.0 {
            return (1, 0);
        }
        (a, (b as usize).min(n.saturating_sub(1)))
    };
    let (w0, w1) = to_range(x_lo, x_hi, origin.x, shape.width);
    let (h0, h1) = to_range(y_lo, y_hi, origin.y, shape.height);
    for h in h0..=h1 {
        for w in w0..=w1 {
            let occupied = (0..shape.types).any(|u| f64::from(grid.get(t, u, h, w)) > threshold);
            if !occupied {
                continue;
            }
            let x = origin.x + w as f64 * mpp;
            let y = origin.y + h as f64 * mpp;
            let cell = [(x, y), (x + mpp, y), (x + mpp, y + mpp), (x, y + mpp)];
            if quads_overlap(corners, &cell) {
                return true;
            }
        }
    }
    false
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

fn percent(flag: bool) -> f64 {
    if flag {
        100.0
    } else {
        0.0
    }
}

/// Open-loop metrics of a planned trajectory.
pub fn planning_metrics(
    traj: &Trajectory,
    truth: Option<&[CartesianPoint]>,
    ground_truth: Option<&OccupancyGrid>,
    route: &ReferenceRoute,
    model: &CostModel,
    config: &PlanningConfig,
) -> Result<PlanningMetrics, MetricsError> {
    let world: Vec<CartesianPoint> = traj
        .points()
        .into_iter()
        .map(|p| route.to_cartesian(p))
        .collect::<Result<_, _>>()?;

    let collision_rate = match ground_truth {
        None => None,
        Some(grid) => {
            let mut hit = false;
            for (k, p) in world.iter().enumerate() {
                let heading = pose_heading(traj, route, &world, k)?;
                let corners = footprint(*p, heading, config.ego_length, config.ego_width);
                let frame = grid.frame_for_time(traj.time_of(k));
                if footprint_hits(grid, frame, &corners, config.occupied_threshold) {
                    hit = true;
                    break;
                }
            }
            Some(percent(hit))
        }
    };

    let off_route = traj.d().iter().any(|d| d.abs() > config.lane_half_width);
    let red_light = model
        .active_red()
        .is_some_and(|s_red| traj.s().iter().any(|&s| s > s_red));
    let der = derivatives(traj);

    let displacement_error = config.error_times.map(|time| {
        let truth = truth?;
        let step = (time / traj.dt()).round() as usize;
        if step == 0 || step > world.len() || step > truth.len() {
            return None;
        }
        Some(world[step - 1].distance(&truth[step - 1]))
    });

    Ok(PlanningMetrics {
        collision_rate,
        off_route_rate: percent(off_route),
        red_light_rate: percent(red_light),
        mean_jerk: mean_abs(&der.jerk_s),
        mean_acc: mean_abs(&der.acc_s),
        mean_lat_acc: mean_abs(&der.acc_d),
        displacement_error,
    })
}

/// Heading of the ego at step `k`: direction of travel, or the route tangent when stationary.
fn pose_heading(
    traj: &Trajectory,
    route: &ReferenceRoute,
    world: &[CartesianPoint],
    k: usize,
) -> Result<f64, MetricsError> {
    let prev = if k == 0 {
        let init = traj.initial();
        route.to_cartesian(FrenetPoint::new(init.s, init.d))?
    } else {
        world[k - 1]
    };
    let (dx, dy) = (world[k].x - prev.x, world[k].y - prev.y);
    if dx.hypot(dy) > 1e-6 {
        Ok(dy.atan2(dx))
    } else {
        Ok(route.heading_at(traj.s()[k])?)
    }
}

/// Mean of every field over a batch; optional fields average over the records that have them.
pub fn aggregate_planning(records: &[PlanningMetrics]) -> Option<PlanningMetrics> {
    if records.is_empty() {
        return None;
    }
    let n = records.len() as f64;
    let mean = |f: &dyn Fn(&PlanningMetrics) -> f64| records.iter().map(f).sum::<f64>() / n;
    let mean_opt = |f: &dyn Fn(&PlanningMetrics) -> Option<f64>| {
        let present: Vec<f64> = records.iter().filter_map(f).collect();
        if present.is_empty() {
            None
        } else {
            Some(present.iter().sum::<f64>() / present.len() as f64)
        }
    };
    Some(PlanningMetrics {
        collision_rate: mean_opt(&|m| m.collision_rate),
        off_route_rate: mean(&|m| m.off_route_rate),
        red_light_rate: mean(&|m| m.red_light_rate),
        mean_jerk: mean(&|m| m.mean_jerk),
        mean_acc: mean(&|m| m.mean_acc),
        mean_lat_acc: mean(&|m| m.mean_lat_acc),
        displacement_error: [0, 1, 2].map(|i| mean_opt(&|m| m.displacement_error[i])),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::InitialState;
    use crate::occupancy::GridShape;

    fn grid(values: Vec<f32>, types: usize) -> OccupancyGrid {
        let shape = GridShape {
            frames: 1,
            types,
            height: 2,
            width: values.len() / (2 * types),
        };
        OccupancyGrid::new(shape, values, CartesianPoint::new(0.0, 0.0), 1.0, 1.0).unwrap()
    }

    #[test]
    fn focal_loss_trivial_cases() {
        let zeros = grid(vec![0.0; 8], 1);
        assert!(focal_loss(&zeros, &zeros, FocalParams::default()).unwrap() < 1e-6);
        let truth = grid(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0], 1);
        assert!(focal_loss(&truth, &truth, FocalParams::default()).unwrap() < 1e-6);
    }

    #[test]
    fn focal_loss_half_prediction() {
        let pred = grid(vec![0.5; 8], 1);
        let truth = grid(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0], 1);
        let got = focal_loss(&pred, &truth, FocalParams::default()).unwrap();
        // Every cell has p_t = 0.5.
        let expected = 0.25 * 0.25 * std::f64::consts::LN_2;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn focal_loss_rejects_soft_labels_and_shape_mismatch() {
        let pred = grid(vec![0.5; 8], 1);
        let soft = grid(vec![0.3; 8], 1);
        assert!(focal_loss(&pred, &soft, FocalParams::default()).is_err());
        let other = grid(vec![0.0; 16], 2);
        assert!(focal_loss(&pred, &other, FocalParams::default()).is_err());
    }

    fn line(n: usize, dx: f64, dy: f64) -> Vec<CartesianPoint> {
        (0..n)
            .map(|k| CartesianPoint::new(k as f64 + dx, dy))
            .collect()
    }

    #[test]
    fn imitation_loss_cases() {
        let truth = line(10, 0.0, 0.0);
        let exact = Candidate {
            probability: 1.0,
            points: truth.clone(),
        };
        let far = Candidate {
            probability: 0.0,
            points: line(10, 5.0, 5.0),
        };
        let loss = imitation_loss(&[far.clone(), exact], &truth).unwrap();
        assert_eq!(loss.closest, 1);
        assert_eq!(loss.total(), 0.0);

        let offset = Candidate {
            probability: 1.0,
            points: line(10, 0.1, 0.1),
        };
        let loss = imitation_loss(&[offset], &truth).unwrap();
        assert!((loss.regression - 0.005).abs() < 1e-12);

        assert!(imitation_loss(std::slice::from_ref(&far), &truth).is_err());
        // Linear regime past one meter: 5 - 0.5 per coordinate.
        let far = Candidate {
            probability: 0.5,
            ..far
        };
        let loss = imitation_loss(&[far], &truth).unwrap();
        assert!((loss.regression - 4.5).abs() < 1e-12);
        assert_eq!(loss.classification, 0.0);
    }

    #[test]
    fn auc_and_iou_trivial() {
        let truth = vec![1.0, 0.0, 0.0, 1.0];
        let labels = vec![true, false, false, true];
        assert_eq!(pr_auc(&truth, &labels), Some(1.0));
        assert_eq!(soft_iou(&truth, &truth), 1.0);
        assert_eq!(soft_iou(&[0.0; 4], &truth), 0.0);
        assert_eq!(soft_iou(&[0.0; 4], &[0.0; 4]), 1.0);
        assert_eq!(pr_auc(&truth, &[false; 4]), None);
    }

    #[test]
    fn auc_of_uninformative_scores_is_base_rate() {
        // One threshold level holding all cells: curve goes (0,1) -> (1, 0.25).
        let labels = vec![true, false, false, false];
        let auc = pr_auc_exact(&[0.3; 4], &labels).unwrap();
        assert!((auc - 0.625).abs() < 1e-12);
    }

    #[test]
    fn vec_occ_split() {
        let mut values = vec![0.0f32; 16];
        // Channel 3 (occlusion) of a 1x4x2x2 grid.
        values[12] = 1.0;
        let truth = grid(values.clone(), 4);
        let pred = grid(values, 4);
        let m = prediction_metrics(&pred, &truth, FocalParams::default()).unwrap();
        assert_eq!(m.occ_auc, Some(1.0));
        assert_eq!(m.vec_auc, None);
        assert_eq!(m.vec_soft_iou, Some(1.0));
        assert_eq!(m.soft_iou, 1.0);
    }

    #[test]
    fn sat_overlap() {
        let a = footprint(CartesianPoint::new(0.0, 0.0), 0.0, 4.0, 2.0);
        let cell = |x: f64, y: f64| [(x, y), (x + 1.0, y), (x + 1.0, y + 1.0), (x, y + 1.0)];
        assert!(quads_overlap(&a, &cell(1.5, 0.5)));
        assert!(!quads_overlap(&a, &cell(2.1, 0.0)));
        // Rotated 45 degrees, the corner region of the axis-aligned box is free.
        let b = footprint(
            CartesianPoint::new(0.0, 0.0),
            std::f64::consts::FRAC_PI_4,
            4.0,
            2.0,
        );
        assert!(!quads_overlap(&b, &cell(1.2, -1.9)));
        assert!(quads_overlap(&b, &cell(1.0, 1.0)));
    }

    fn straight_route() -> ReferenceRoute {
        ReferenceRoute::build(
            &[
                CartesianPoint::new(0.0, 0.0),
                CartesianPoint::new(100.0, 0.0),
            ],
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn stationary_ego_on_empty_scene() {
        let route = straight_route();
        let t = Trajectory::new(
            vec![10.0; 50],
            vec![0.0; 50],
            0.1,
            InitialState {
                s: 10.0,
                ..Default::default()
            },
        )
        .unwrap();
        let gt = OccupancyGrid::zeros(
            GridShape::default(),
            CartesianPoint::new(-16.0, -40.0),
            0.625,
            1.0,
        )
        .unwrap();
        let world: Vec<CartesianPoint> = t
            .points()
            .iter()
            .map(|p| route.to_cartesian(*p).unwrap())
            .collect();
        let m = planning_metrics(
            &t,
            Some(&world),
            Some(&gt),
            &route,
            &CostModel::default(),
            &PlanningConfig::default(),
        )
        .unwrap();
        assert_eq!(m.collision_rate, Some(0.0));
        assert_eq!(m.off_route_rate, 0.0);
        assert_eq!(m.red_light_rate, 0.0);
        assert_eq!(m.mean_jerk, 0.0);
        assert_eq!(m.displacement_error, [Some(0.0); 3]);

        let none = planning_metrics(
            &t,
            None,
            None,
            &route,
            &CostModel::default(),
            &PlanningConfig::default(),
        )
        .unwrap();
        assert_eq!(none.collision_rate, None);
        assert_eq!(none.displacement_error, [None; 3]);
    }

    #[test]
    fn collision_off_route_and_red_light_flags() {
        let route = straight_route();
        let t = Trajectory::new(
            (1..=50).map(|k| 10.0 + 0.5 * k as f64).collect(),
            vec![2.5; 50],
            0.1,
            InitialState {
                s: 10.0,
                d: 2.5,
                vs: 5.0,
                ..Default::default()
            },
        )
        .unwrap();
        // One occupied pixel at x in [30, 31), y in [2, 3) in every frame.
        let gt = OccupancyGrid::from_fn(
            GridShape::default(),
            CartesianPoint::new(0.0, 0.0),
            1.0,
            1.0,
            |_, u, h, w| {
                if u == 0 && h == 2 && w == 30 {
                    1.0
                } else {
                    0.0
                }
            },
        )
        .unwrap();
        let model = CostModel {
            s_red: Some(30.0),
            ..Default::default()
        };
        let m = planning_metrics(
            &t,
            None,
            Some(&gt),
            &route,
            &model,
            &PlanningConfig::default(),
        )
        .unwrap();
        assert_eq!(m.collision_rate, Some(100.0));
        assert_eq!(m.off_route_rate, 100.0);
        assert_eq!(m.red_light_rate, 100.0);
    }

    #[test]
    fn aggregate_averages_present_fields() {
        let a = PlanningMetrics {
            collision_rate: Some(100.0),
            off_route_rate: 0.0,
            red_light_rate: 100.0,
            mean_jerk: 1.0,
            mean_acc: 2.0,
            mean_lat_acc: 3.0,
            displacement_error: [Some(1.0), None, None],
        };
        let b = PlanningMetrics {
            collision_rate: None,
            displacement_error: [Some(3.0), Some(1.0), None],
            ..a
        };
        let m = aggregate_planning(&[a, b]).unwrap();
        assert_eq!(m.collision_rate, Some(100.0));
        assert_eq!(m.red_light_rate, 100.0);
        assert_eq!(m.displacement_error, [Some(2.0), Some(1.0), None]);
        assert!(aggregate_planning(&[]).is_none());
    }
}
