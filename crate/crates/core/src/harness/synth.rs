//! Seeded synthetic scenes standing in for logged driving data.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{EgoState, RasterDescriptor, Scenario, ScenarioDoc};
use super::HarnessError;
use crate::costs::CostModel;
use crate::frenet::{CartesianPoint, FrenetPoint, ReferenceRoute, DEFAULT_SPACING};
use crate::metrics::PlanningConfig;
use crate::occupancy::{
    ActorType, FrenetGridSpec, GridShape, OccupancyGrid, DEFAULT_METERS_PER_PIXEL,
};
use crate::optimizer::{Candidate, SolverConfig};

/// Lower-left corner of the generated rasters; the ego sits at the world origin.
pub(crate) const RASTER_ORIGIN: CartesianPoint = CartesianPoint::new(-8.0, -40.0);
const PLAN_STEPS: usize = 50;
const PLAN_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Archetype {
    Empty,
    LeadBraking,
    CrossingPedestrian,
    RedLight,
    Occluded,
}

impl Archetype {
    pub const ALL: [Archetype; 5] = [
        Archetype::Empty,
        Archetype::LeadBraking,
        Archetype::CrossingPedestrian,
        Archetype::RedLight,
        Archetype::Occluded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::Empty => "empty",
            Archetype::LeadBraking => "lead-braking",
            Archetype::CrossingPedestrian => "crossing-pedestrian",
            Archetype::RedLight => "red-light",
            Archetype::Occluded => "occluded",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Archetype {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "empty" | "empty-road" => Ok(Archetype::Empty),
            "lead-braking" => Ok(Archetype::LeadBraking),
            "crossing-pedestrian" | "pedestrian-ahead" => Ok(Archetype::CrossingPedestrian),
            "red-light" => Ok(Archetype::RedLight),
            "occluded" => Ok(Archetype::Occluded),
            other => Err(HarnessError::UnknownArchetype(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub archetype: Archetype,
    /// Speed of the top candidate relative to the ego's current speed.
    pub plan_speed_factor: f64,
    /// How far predicted blobs extend past the true actor outline, meters.
    pub blob_margin: f64,
    /// Gaussian blur of predicted blobs, meters.
    pub blur_sigma: f64,
}

impl GeneratorParams {
    pub fn new(archetype: Archetype) -> Self {
        Self {
            archetype,
            plan_speed_factor: 1.0,
            blob_margin: 3.0,
            blur_sigma: 0.8,
        }
    }
}

/// Actor moving along the route frame, braking to a stop when `decel > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub kind: ActorType,
    pub s0: f64,
    pub d0: f64,
    pub vs: f64,
    pub vd: f64,
    pub decel: f64,
    pub length: f64,
    pub width: f64,
    /// Peak predicted probability; the ground truth is binary.
    pub peak: f64,
    /// Hidden actors appear only in the ground truth.
    pub visible: bool,
}

impl ActorSpec {
    /// Route-frame center `(s, d)` after `t` seconds.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let ds = if self.decel > 0.0 {
            let stop = self.vs / self.decel;
            let t = t.min(stop);
            self.vs * t - 0.5 * self.decel * t * t
        } else {
            self.vs * t
        };
        (self.s0 + ds, self.d0 + self.vd * t)
    }
}

/// Box of half-width `a` convolved with a unit Gaussian of width `sigma`.
fn blurred_box(x: f64, a: f64, sigma: f64) -> f64 {
    let k = 1.0 / (std::f64::consts::SQRT_2 * sigma);
    0.5 * (libm::erf((x + a) * k) - libm::erf((x - a) * k))
}

struct Rasters {
    predicted: Vec<f32>,
    truth: Vec<f32>,
}

fn render(
    actors: &[ActorSpec],
    route: &ReferenceRoute,
    shape: GridShape,
    params: &GeneratorParams,
) -> Result<Rasters, HarnessError> {
    let mpp = DEFAULT_METERS_PER_PIXEL;
    let mut predicted = vec![0.0f32; shape.cells()];
    let mut truth = vec![0.0f32; shape.cells()];
    let reach = params.blob_margin + 4.0 * params.blur_sigma;
    for t in 0..shape.frames {
        let time = (t + 1) as f64;
        for actor in actors {
            let (s, d) = actor.at(time);
            let center = route
                .to_cartesian(FrenetPoint::new(s, d))
                .map_err(|e| HarnessError::stage("generate", e))?;
            let heading = route
                .heading_at(s)
                .map_err(|e| HarnessError::stage("generate", e))?;
            let (sin, cos) = heading.sin_cos();
            let (hl, hw) = (actor.length / 2.0, actor.width / 2.0);
            let radius = hl.hypot(hw) + reach;
            let base = (t * shape.types + actor.kind.channel()) * shape.height * shape.width;
            let px_lo = |c: f64, o: f64| (((c - radius - o) / mpp).floor().max(0.0)) as usize;
            let px_hi = |c: f64, o: f64, n: usize| {
                ((((c + radius - o) / mpp).ceil()).max(0.0) as usize).min(n)
            };
            for h in
                px_lo(center.y, RASTER_ORIGIN.y)..px_hi(center.y, RASTER_ORIGIN.y, shape.height)
            {
                for w in
                    px_lo(center.x, RASTER_ORIGIN.x)..px_hi(center.x, RASTER_ORIGIN.x, shape.width)
                {
                    let x = RASTER_ORIGIN.x + (w as f64 + 0.5) * mpp - center.x;
                    let y = RASTER_ORIGIN.y + (h as f64 + 0.5) * mpp - center.y;
                    let lx = x * cos + y * sin;
                    let ly = -x * sin + y * cos;
                    let k = base + h * shape.width + w;
                    if lx.abs() <= hl && ly.abs() <= hw {
                        truth[k] = 1.0;
                    }
                    if actor.visible {
                        let m = params.blob_margin;
                        let p = actor.peak
                            * blurred_box(lx, hl + m, params.blur_sigma)
                            * blurred_box(ly, hw + m, params.blur_sigma);
                        predicted[k] = predicted[k].max(p as f32);
                    }
                }
            }
        }
    }
    Ok(Rasters { predicted, truth })
}

/// Arc length after `t` seconds of braking from `v0` to a stop at `stop`.
fn stopping_profile(s0: f64, v0: f64, stop: Option<f64>, t: f64) -> f64 {
    match stop {
        Some(stop) if stop > s0 && v0 > 0.0 => {
            let a = v0 * v0 / (2.0 * (stop - s0));
            let t = t.min(v0 / a);
            s0 + v0 * t - 0.5 * a * t * t
        }
        Some(_) => s0,
        None => s0 + v0 * t,
    }
}

fn cartesian_plan(
    route: &ReferenceRoute,
    mut at: impl FnMut(f64) -> (f64, f64),
) -> Result<Vec<CartesianPoint>, HarnessError> {
    (1..=PLAN_STEPS)
        .map(|k| {
            let (s, d) = at(k as f64 * PLAN_DT);
            route
                .to_cartesian(FrenetPoint::new(s, d))
                .map_err(|e| HarnessError::stage("generate", e))
        })
        .collect()
}

/// Build a deterministic scenario of the requested archetype.
///
/// The top candidate drives on at constant speed, ignoring every hazard, so
/// refinement has something to fix.
pub fn generate_synthetic(params: &GeneratorParams, seed: u64) -> Result<Scenario, HarnessError> {
    if !(params.plan_speed_factor.is_finite() && params.plan_speed_factor >= 0.0) {
        return Err(HarnessError::invalid(
            "plan_speed_factor",
            "must be nonnegative",
        ));
    }
    if !(params.blur_sigma > 0.0 && params.blob_margin >= 0.0) {
        return Err(HarnessError::invalid(
            "blur_sigma",
            "blur must be positive and margin nonnegative",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let archetype = params.archetype;
    let mut cost = CostModel::default();

    let curvature = rng.random_range(-0.0015..0.0015);
    let route_points: Vec<CartesianPoint> = (0..=56)
        .map(|i| {
            let x = -10.0 + 2.5 * i as f64;
            CartesianPoint::new(x, curvature * x * x)
        })
        .collect();
    let route = ReferenceRoute::build(&route_points, DEFAULT_SPACING)
        .map_err(|e| HarnessError::stage("generate", e))?;
    let ego_s = route
        .to_frenet(CartesianPoint::new(0.0, 0.0))
        .map_err(|e| HarnessError::stage("generate", e))?
        .s;

    let v0 = match archetype {
        Archetype::Empty => cost.v_limit,
        _ => rng.random_range(8.0..12.0),
    };

    let mut actors = Vec::new();
    let mut expert_stop = None;
    match archetype {
        Archetype::Empty => {}
        Archetype::LeadBraking => {
            let gap = rng.random_range(18.0..25.0);
            let decel = rng.random_range(2.5..4.0);
            let lead = ActorSpec {
                kind: ActorType::Vehicle,
                s0: ego_s + gap,
                d0: 0.0,
                vs: v0,
                vd: 0.0,
                decel,
                length: 4.5,
                width: 2.0,
                peak: 0.9,
                visible: true,
            };
            expert_stop = Some(lead.at(10.0).0 - 10.0);
            actors.push(lead);
        }
        Archetype::CrossingPedestrian => {
            let ahead = rng.random_range(28.0..36.0);
            let speed = rng.random_range(0.5..0.8);
            let ped = ActorSpec {
                kind: ActorType::Pedestrian,
                s0: ego_s + ahead,
                d0: -1.6,
                vs: 0.0,
                vd: speed,
                decel: 0.0,
                length: 0.8,
                width: 0.8,
                peak: 0.9,
                visible: true,
            };
            expert_stop = Some(ped.s0 - 6.0);
            actors.push(ped);
        }
        Archetype::RedLight => {
            let s_red = ego_s + rng.random_range(20.0..30.0);
            cost.s_red = Some(s_red);
            expert_stop = Some(s_red - 1.0);
        }
        Archetype::Occluded => {
            let start = ego_s + rng.random_range(25.0..32.0);
            let depth = 15.0;
            actors.push(ActorSpec {
                kind: ActorType::Occlusion,
                s0: start + depth / 2.0,
                d0: 6.25,
                vs: 0.0,
                vd: 0.0,
                decel: 0.0,
                length: depth,
                width: 5.5,
                peak: 0.7,
                visible: true,
            });
            // Steps out from behind the occluder; never predicted.
            actors.push(ActorSpec {
                kind: ActorType::Pedestrian,
                s0: start + rng.random_range(3.0..6.0),
                d0: 3.6,
                vs: 0.0,
                vd: -rng.random_range(0.9..1.3),
                decel: 0.0,
                length: 0.8,
                width: 0.8,
                peak: 0.9,
                visible: false,
            });
            expert_stop = Some(start - 4.0);
        }
    }

    let shape = GridShape::default();
    let rasters = render(&actors, &route, shape, params)?;
    let raster_err = |field: &'static str| move |source| HarnessError::Raster { field, source };
    let occupancy = OccupancyGrid::new(
        shape,
        rasters.predicted,
        RASTER_ORIGIN,
        DEFAULT_METERS_PER_PIXEL,
        1.0,
    )
    .map_err(raster_err("occupancy"))?;
    let ground_truth = OccupancyGrid::new(
        shape,
        rasters.truth,
        RASTER_ORIGIN,
        DEFAULT_METERS_PER_PIXEL,
        1.0,
    )
    .map_err(raster_err("ground_truth"))?;

    let plan_v = v0 * params.plan_speed_factor;
    let brake = 1.5;
    let candidates = vec![
        Candidate {
            probability: 0.6,
            points: cartesian_plan(&route, |t| (ego_s + plan_v * t, 0.0))?,
        },
        Candidate {
            probability: 0.25,
            points: cartesian_plan(&route, |t| {
                let t = t.min(v0 / brake);
                (ego_s + v0 * t - 0.5 * brake * t * t, 0.0)
            })?,
        },
        Candidate {
            probability: 0.15,
            points: cartesian_plan(&route, |t| (ego_s + plan_v * t, (t / 5.0).min(1.0)))?,
        },
    ];
    let truth = cartesian_plan(&route, |t| {
        (stopping_profile(ego_s, v0, expert_stop, t), 0.0)
    })?;

    let name = format!("{}-{seed:04}", archetype.name());
    let doc = ScenarioDoc {
        occupancy: RasterDescriptor::describe(format!("{name}.occupancy.bin"), &occupancy),
        ground_truth: Some(RasterDescriptor::describe(
            format!("{name}.truth.bin"),
            &ground_truth,
        )),
        name,
        archetype: Some(archetype.name().to_string()),
        seed: Some(seed),
        route: route_points,
        route_spacing: DEFAULT_SPACING,
        dt: PLAN_DT,
        ego: EgoState {
            x: 0.0,
            y: 0.0,
            vx: v0,
            vy: 0.0,
            theta: 0.0,
        },
        candidates,
        frenet_grid: FrenetGridSpec::default(),
        cost,
        solver: SolverConfig::default(),
        planning: PlanningConfig::default(),
        truth: Some(truth),
        actors,
    };
    let scenario = Scenario {
        doc,
        occupancy,
        ground_truth: Some(ground_truth),
    };
    scenario.validate()?;
    Ok(scenario)
}
