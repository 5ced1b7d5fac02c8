use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::synth::ActorSpec;
use super::HarnessError;
use crate::costs::{CostModel, InitialState};
use crate::frenet::{CartesianPoint, ReferenceRoute, DEFAULT_SPACING};
use crate::metrics::PlanningConfig;
use crate::occupancy::{FrenetGridSpec, GridShape, OccupancyGrid, DEFAULT_METERS_PER_PIXEL};
use crate::optimizer::{Candidate, SolverConfig};

/// Ego pose and velocity in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    /// Heading, radians.
    pub theta: f64,
}

impl EgoState {
    /// Position and velocity resolved along the route tangent and normal.
    pub fn to_initial_state(&self, route: &ReferenceRoute) -> Result<InitialState, HarnessError> {
        let p = route
            .to_frenet(CartesianPoint::new(self.x, self.y))
            .map_err(|e| HarnessError::invalid("ego", e.to_string()))?;
        let (tx, ty) = route
            .tangent_at(p.s)
            .map_err(|e| HarnessError::invalid("ego", e.to_string()))?;
        Ok(InitialState {
            s: p.s,
            d: p.d,
            vs: self.vx * tx + self.vy * ty,
            vd: -self.vx * ty + self.vy * tx,
            acc_s: 0.0,
            acc_d: 0.0,
        })
    }
}

fn default_origin() -> CartesianPoint {
    super::synth::RASTER_ORIGIN
}

fn default_mpp() -> f64 {
    DEFAULT_METERS_PER_PIXEL
}

fn default_horizon_dt() -> f64 {
    1.0
}

fn default_spacing() -> f64 {
    DEFAULT_SPACING
}

fn default_dt() -> f64 {
    0.1
}

/// Where a raster lives and how to interpret it. `path` is relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterDescriptor {
    pub path: PathBuf,
    #[serde(default)]
    pub shape: GridShape,
    #[serde(default = "default_origin")]
    pub origin: CartesianPoint,
    #[serde(default = "default_mpp")]
    pub meters_per_pixel: f64,
    #[serde(default = "default_horizon_dt")]
    pub horizon_dt: f64,
}

impl RasterDescriptor {
    pub fn describe(path: impl Into<PathBuf>, grid: &OccupancyGrid) -> Self {
        Self {
            path: path.into(),
            shape: grid.shape(),
            origin: grid.origin(),
            meters_per_pixel: grid.meters_per_pixel(),
            horizon_dt: grid.horizon_dt(),
        }
    }

    fn matches(&self, grid: &OccupancyGrid) -> bool {
        self.shape == grid.shape()
            && self.origin == grid.origin()
            && self.meters_per_pixel == grid.meters_per_pixel()
            && self.horizon_dt == grid.horizon_dt()
    }
}

/// The JSON document of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDoc {
    pub name: String,
    #[serde(default)]
    pub archetype: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub route: Vec<CartesianPoint>,
    #[serde(default = "default_spacing")]
    pub route_spacing: f64,
    /// Plan step, seconds.
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub ego: EgoState,
    pub candidates: Vec<Candidate>,
    pub occupancy: RasterDescriptor,
    #[serde(default)]
    pub ground_truth: Option<RasterDescriptor>,
    #[serde(default)]
    pub frenet_grid: FrenetGridSpec,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub planning: PlanningConfig,
    /// Logged ego trajectory at the plan rate, used for displacement errors.
    #[serde(default)]
    pub truth: Option<Vec<CartesianPoint>>,
    /// Actors a generator placed in the scene; informational only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actors: Vec<ActorSpec>,
}

/// A scenario document with its rasters loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub doc: ScenarioDoc,
    pub occupancy: OccupancyGrid,
    pub ground_truth: Option<OccupancyGrid>,
}

impl Scenario {
    /// Check every cross-field invariant.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let doc = &self.doc;
        if doc.route.len() < 2 {
            return Err(HarnessError::invalid(
                "route",
                "needs at least two waypoints",
            ));
        }
        if !(doc.dt.is_finite() && doc.dt > 0.0) {
            return Err(HarnessError::invalid(
                "dt",
                format!("must be positive, got {}", doc.dt),
            ));
        }
        if doc.candidates.is_empty() {
            return Err(HarnessError::invalid(
                "candidates",
                "at least one plan is required",
            ));
        }
        let steps = doc.candidates[0].points.len();
        for (k, c) in doc.candidates.iter().enumerate() {
            let field = format!("candidates[{k}]");
            if !c.probability.is_finite() {
                return Err(HarnessError::invalid(&field, "probability is not finite"));
            }
            if c.points.len() != steps {
                return Err(HarnessError::invalid(
                    &field,
                    format!("has {} points, candidate 0 has {steps}", c.points.len()),
                ));
            }
            if c.points
                .iter()
                .any(|p| !(p.x.is_finite() && p.y.is_finite()))
            {
                return Err(HarnessError::invalid(&field, "non-finite point"));
            }
        }
        if steps < 2 {
            return Err(HarnessError::invalid(
                "candidates",
                "plans need at least two points",
            ));
        }
        let horizon = self.occupancy.shape().frames as f64 * self.occupancy.horizon_dt();
        if steps as f64 * doc.dt > horizon + 1e-9 {
            return Err(HarnessError::invalid(
                "candidates",
                format!(
                    "{steps} steps of {} s exceed the {horizon} s occupancy horizon",
                    doc.dt
                ),
            ));
        }
        if !doc.occupancy.matches(&self.occupancy) {
            return Err(HarnessError::invalid(
                "occupancy",
                "descriptor does not match the raster",
            ));
        }
        match (&doc.ground_truth, &self.ground_truth) {
            (Some(desc), Some(grid)) if desc.matches(grid) => {}
            (None, None) => {}
            _ => {
                return Err(HarnessError::invalid(
                    "ground_truth",
                    "descriptor does not match the raster",
                ))
            }
        }
        doc.cost
            .validate()
            .map_err(|e| HarnessError::invalid("cost", e.to_string()))?;
        doc.solver
            .validate()
            .map_err(|e| HarnessError::invalid("solver", e.to_string()))?;
        Ok(())
    }
}

fn read_grid(
    base: &Path,
    desc: &RasterDescriptor,
    field: &'static str,
) -> Result<OccupancyGrid, HarnessError> {
    let path = base.join(&desc.path);
    if !path.is_file() {
        return Err(HarnessError::invalid(
            field,
            format!("raster file {} does not exist", path.display()),
        ));
    }
    OccupancyGrid::read_raster(
        &path,
        desc.shape,
        desc.origin,
        desc.meters_per_pixel,
        desc.horizon_dt,
    )
    .map_err(|source| HarnessError::Raster { field, source })
}

fn base_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

/// Parse a scenario file, read its rasters and validate the result.
pub fn load_scenario(path: &Path) -> Result<Scenario, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: ScenarioDoc = serde_json::from_str(&text).map_err(|source| HarnessError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let base = base_dir(path);
    let occupancy = read_grid(base, &doc.occupancy, "occupancy")?;
    let ground_truth = doc
        .ground_truth
        .as_ref()
        .map(|d| read_grid(base, d, "ground_truth"))
        .transpose()?;
    let scenario = Scenario {
        doc,
        occupancy,
        ground_truth,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Write the document to `path` and each raster to its declared path.
pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<(), HarnessError> {
    scenario.validate()?;
    let base = base_dir(path);
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |source| HarnessError::Io { path: p, source }
    };
    fs::create_dir_all(base).map_err(io_err(base))?;
    let mut rasters = vec![(&scenario.doc.occupancy, &scenario.occupancy, "occupancy")];
    if let (Some(d), Some(g)) = (&scenario.doc.ground_truth, &scenario.ground_truth) {
        rasters.push((d, g, "ground_truth"));
    }
    for (desc, grid, field) in rasters {
        grid.write_raster(&base.join(&desc.path))
            .map_err(|source| HarnessError::Raster { field, source })?;
    }
    let text =
        serde_json::to_string_pretty(&scenario.doc).map_err(|source| HarnessError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ego_velocity_resolves_along_route() {
        let route = ReferenceRoute::build(
            &[
                CartesianPoint::new(0.0, 0.0),
                CartesianPoint::new(0.0, 50.0),
            ],
            0.1,
        )
        .unwrap();
        let ego = EgoState {
            x: 1.0,
            y: 10.0,
            vx: -2.0,
            vy: 5.0,
            theta: 0.0,
        };
        let init = ego.to_initial_state(&route).unwrap();
        assert!((init.s - 10.0).abs() < 1e-9);
        // Heading +y, so the left normal points to -x.
        assert!((init.d + 1.0).abs() < 1e-9);
        assert!((init.vs - 5.0).abs() < 1e-12);
        assert!((init.vd - 2.0).abs() < 1e-12);
    }
}
