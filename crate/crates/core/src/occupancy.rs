//! Cartesian occupancy rasters and their resampling onto the route-aligned grid.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frenet::{CartesianPoint, FrenetPoint, ReferenceRoute};

/// Default raster scale: 1.6 pixels per meter.
pub const DEFAULT_METERS_PER_PIXEL: f64 = 1.0 / 1.6;

#[derive(Debug, Error)]
pub enum OccupancyError {
    #[error("invalid occupancy input: {0}")]
    InvalidInput(String),
    #[error("raster holds {actual} cells but its shape declares {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("route length {length:.3} m is shorter than the Frenet grid extent {required:.3} m")]
    RouteTooShort { length: f64, required: f64 },
    #[error("raster io")]
    Io(#[from] io::Error),
}

/// Occupancy channels, in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorType {
    Vehicle,
    Pedestrian,
    Cyclist,
    Occlusion,
}

impl ActorType {
    pub const ALL: [ActorType; 4] = [
        ActorType::Vehicle,
        ActorType::Pedestrian,
        ActorType::Cyclist,
        ActorType::Occlusion,
    ];

    pub fn channel(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ActorType::Vehicle => "vehicle",
            ActorType::Pedestrian => "pedestrian",
            ActorType::Cyclist => "cyclist",
            ActorType::Occlusion => "occlusion",
        }
    }
}

/// Dimensions of a `[T][U][H][W]` raster stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub frames: usize,
    pub types: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for GridShape {
    fn default() -> Self {
        Self {
            frames: 5,
            types: 4,
            height: 128,
            width: 128,
        }
    }
}

impl GridShape {
    pub fn cells(&self) -> usize {
        self.frames * self.types * self.height * self.width
    }

    fn validate(&self) -> Result<(), OccupancyError> {
        if self.frames == 0 || self.types == 0 || self.height == 0 || self.width == 0 {
            return Err(OccupancyError::InvalidInput(format!(
                "all grid dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Pixel coordinates from [`OccupancyGrid::pixel_of`]. `w` follows x, `h` follows y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pixel {
    pub w: i64,
    pub h: i64,
    pub in_raster: bool,
}

/// Stack of per-type occupancy probabilities on an ego-anchored raster.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    shape: GridShape,
    data: Vec<f32>,
    origin: CartesianPoint,
    meters_per_pixel: f64,
    horizon_dt: f64,
}

impl OccupancyGrid {
    pub fn new(
        shape: GridShape,
        data: Vec<f32>,
        origin: CartesianPoint,
        meters_per_pixel: f64,
        horizon_dt: f64,
    ) -> Result<Self, OccupancyError> {
        shape.validate()?;
        if data.len() != shape.cells() {
            return Err(OccupancyError::ShapeMismatch {
                expected: shape.cells(),
                actual: data.len(),
            });
        }
        if !(meters_per_pixel.is_finite() && meters_per_pixel > 0.0) {
            return Err(OccupancyError::InvalidInput(format!(
                "meters_per_pixel must be positive, got {meters_per_pixel}"
            )));
        }
        if !(horizon_dt.is_finite() && horizon_dt > 0.0) {
            return Err(OccupancyError::InvalidInput(format!(
                "horizon_dt must be positive, got {horizon_dt}"
            )));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(OccupancyError::InvalidInput("non-finite origin".into()));
        }
        if let Some(bad) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(OccupancyError::InvalidInput(format!(
                "cell {bad} holds {} outside [0, 1]",
                data[bad]
            )));
        }
        Ok(Self {
            shape,
            data,
            origin,
            meters_per_pixel,
            horizon_dt,
        })
    }

    pub fn zeros(
        shape: GridShape,
        origin: CartesianPoint,
        meters_per_pixel: f64,
        horizon_dt: f64,
    ) -> Result<Self, OccupancyError> {
        Self::new(
            shape,
            vec![0.0; shape.cells()],
            origin,
            meters_per_pixel,
            horizon_dt,
        )
    }

    /// Build a grid cell by cell; `f(t, u, h, w)` is clamped into [0, 1].
    pub fn from_fn(
        shape: GridShape,
        origin: CartesianPoint,
        meters_per_pixel: f64,
        horizon_dt: f64,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self, OccupancyError> {
        let mut data = Vec::with_capacity(shape.cells());
        for t in 0..shape.frames {
            for u in 0..shape.types {
                for h in 0..shape.height {
                    for w in 0..shape.width {
                        data.push(f(t, u, h, w).clamp(0.0, 1.0));
                    }
                }
            }
        }
        Self::new(shape, data, origin, meters_per_pixel, horizon_dt)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn origin(&self) -> CartesianPoint {
        self.origin
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.meters_per_pixel
    }

    pub fn horizon_dt(&self) -> f64 {
        self.horizon_dt
    }

    fn index(&self, t: usize, u: usize, h: usize, w: usize) -> usize {
        ((t * self.shape.types + u) * self.shape.height + h) * self.shape.width + w
    }

    pub fn get(&self, t: usize, u: usize, h: usize, w: usize) -> f32 {
        self.data[self.index(t, u, h, w)]
    }

    /// Floor of the metric offset from the origin divided by the pixel size.
    pub fn pixel_of(&self, p: CartesianPoint) -> Pixel {
        let w = ((p.x - self.origin.x) / self.meters_per_pixel).floor() as i64;
        let h = ((p.y - self.origin.y) / self.meters_per_pixel).floor() as i64;
        let in_raster =
            (0..self.shape.width as i64).contains(&w) && (0..self.shape.height as i64).contains(&h);
        Pixel { w, h, in_raster }
    }

    /// World position of the center of pixel `(h, w)`.
    pub fn pixel_center(&self, h: usize, w: usize) -> CartesianPoint {
        CartesianPoint::new(
            self.origin.x + (w as f64 + 0.5) * self.meters_per_pixel,
            self.origin.y + (h as f64 + 0.5) * self.meters_per_pixel,
        )
    }

    /// Occupancy frame that covers plan time `time` (seconds after now).
    ///
    /// Frame `k` holds the prediction at `(k + 1) * horizon_dt`; a plan step
    /// uses the first frame at or after its own time.
    pub fn frame_for_time(&self, time: f64) -> usize {
        frame_for_time(time, self.horizon_dt, self.shape.frames)
    }

    /// Little-endian `f32`, row-major `[T][U][H][W]`.
    pub fn write_raster(&self, path: &Path) -> Result<(), OccupancyError> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn read_raster(
        path: &Path,
        shape: GridShape,
        origin: CartesianPoint,
        meters_per_pixel: f64,
        horizon_dt: f64,
    ) -> Result<Self, OccupancyError> {
        shape.validate()?;
        let bytes = fs::read(path)?;
        if bytes.len() % 4 != 0 || bytes.len() / 4 != shape.cells() {
            return Err(OccupancyError::ShapeMismatch {
                expected: shape.cells(),
                actual: bytes.len() / 4,
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(shape, data, origin, meters_per_pixel, horizon_dt)
    }
}

pub(crate) fn frame_for_time(time: f64, horizon_dt: f64, frames: usize) -> usize {
    let k = (time / horizon_dt - 1e-9).ceil() as i64 - 1;
    k.clamp(0, frames as i64 - 1) as usize
}

/// Size and resolution of the route-aligned `(s, d)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrenetGridSpec {
    pub s_cells: usize,
    pub d_cells: usize,
    pub s_res: f64,
    pub d_res: f64,
}

impl Default for FrenetGridSpec {
    fn default() -> Self {
        Self {
            s_cells: 1000,
            d_cells: 20,
            s_res: 0.1,
            d_res: 0.5,
        }
    }
}

impl FrenetGridSpec {
    /// Arc length of row `i`.
    pub fn s_of(&self, i: usize) -> f64 {
        i as f64 * self.s_res
    }

    /// Lateral offset of column `j`; columns are centered on the route.
    pub fn d_of(&self, j: usize) -> f64 {
        (j as f64 + 0.5 - 0.5 * self.d_cells as f64) * self.d_res
    }

    /// Continuous `(row, column)` coordinates of `(s, d)`.
    pub fn fractional_index(&self, s: f64, d: f64) -> (f64, f64) {
        (
            s / self.s_res,
            d / self.d_res + 0.5 * self.d_cells as f64 - 0.5,
        )
    }

    pub fn extent(&self) -> f64 {
        self.s_cells as f64 * self.s_res
    }

    fn validate(&self) -> Result<(), OccupancyError> {
        if self.s_cells == 0 || self.d_cells == 0 {
            return Err(OccupancyError::InvalidInput(
                "Frenet grid needs positive S and D".into(),
            ));
        }
        if !(self.s_res > 0.0 && self.d_res > 0.0) {
            return Err(OccupancyError::InvalidInput(
                "Frenet grid resolutions must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Occupancy resampled onto the `[T][U][S][D]` route grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrenetOccupancy {
    spec: FrenetGridSpec,
    frames: usize,
    types: usize,
    horizon_dt: f64,
    data: Vec<f32>,
}

impl FrenetOccupancy {
    /// Build directly from `[T][U][S][D]` values.
    pub fn from_data(
        spec: FrenetGridSpec,
        frames: usize,
        types: usize,
        horizon_dt: f64,
        data: Vec<f32>,
    ) -> Result<Self, OccupancyError> {
        spec.validate()?;
        let expected = frames * types * spec.s_cells * spec.d_cells;
        if frames == 0 || types == 0 {
            return Err(OccupancyError::InvalidInput(
                "Frenet occupancy needs at least one frame and type".into(),
            ));
        }
        if data.len() != expected {
            return Err(OccupancyError::ShapeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(OccupancyError::InvalidInput(
                "Frenet occupancy values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            spec,
            frames,
            types,
            horizon_dt,
            data,
        })
    }

    pub fn empty(spec: FrenetGridSpec, frames: usize, types: usize, horizon_dt: f64) -> Self {
        let n = frames * types * spec.s_cells * spec.d_cells;
        Self {
            spec,
            frames,
            types,
            horizon_dt,
            data: vec![0.0; n],
        }
    }

    pub fn spec(&self) -> &FrenetGridSpec {
        &self.spec
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn horizon_dt(&self) -> f64 {
        self.horizon_dt
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn index(&self, t: usize, u: usize, i: usize, j: usize) -> usize {
        ((t * self.types + u) * self.spec.s_cells + i) * self.spec.d_cells + j
    }

    pub fn get(&self, t: usize, u: usize, i: usize, j: usize) -> f32 {
        self.data[self.index(t, u, i, j)]
    }

    pub fn set(&mut self, t: usize, u: usize, i: usize, j: usize, value: f32) {
        let k = self.index(t, u, i, j);
        self.data[k] = value.clamp(0.0, 1.0);
    }

    pub fn frame_for_time(&self, time: f64) -> usize {
        frame_for_time(time, self.horizon_dt, self.frames)
    }

    /// Bilinear interpolation between cell centers. Cells beyond the grid
    /// count as zero, so the result is continuous everywhere and decays to 0
    /// one cell outside the extent.
    pub fn sample_bilinear(&self, t: usize, u: usize, s: f64, d: f64) -> f64 {
        let (fi, fj) = self.spec.fractional_index(s, d);
        bilinear(fi, fj, |i, j| {
            if i < 0 || j < 0 || i >= self.spec.s_cells as i64 || j >= self.spec.d_cells as i64 {
                0.0
            } else {
                f64::from(self.get(t, u, i as usize, j as usize))
            }
        })
    }
}

/// Bilinear blend of `cell(i, j)` at fractional index `(fi, fj)`.
pub(crate) fn bilinear(fi: f64, fj: f64, cell: impl Fn(i64, i64) -> f64) -> f64 {
    if !(fi.is_finite() && fj.is_finite()) {
        return 0.0;
    }
    let i0 = fi.floor();
    let j0 = fj.floor();
    let a = fi - i0;
    let b = fj - j0;
    let (i0, j0) = (i0 as i64, j0 as i64);
    let mut v = 0.0;
    for (di, wi) in [(0, 1.0 - a), (1, a)] {
        if wi == 0.0 {
            continue;
        }
        for (dj, wj) in [(0, 1.0 - b), (1, b)] {
            if wj == 0.0 {
                continue;
            }
            v += wi * wj * cell(i0 + di, j0 + dj);
        }
    }
    v
}

/// Resample `grid` onto the route-aligned grid by nearest-pixel gather.
///
/// Each `(s, d)` cell center is mapped to the world frame through the route,
/// then to a raster pixel; cells that land outside the raster read as 0.
pub fn transform_occupancy(
    grid: &OccupancyGrid,
    route: &ReferenceRoute,
    spec: FrenetGridSpec,
) -> Result<FrenetOccupancy, OccupancyError> {
    spec.validate()?;
    let required = spec.extent();
    if route.length() + 1e-9 < required {
        return Err(OccupancyError::RouteTooShort {
            length: route.length(),
            required,
        });
    }

    let mut lookup: Vec<Option<(usize, usize)>> = Vec::with_capacity(spec.s_cells * spec.d_cells);
    for i in 0..spec.s_cells {
        for j in 0..spec.d_cells {
            let world = route
                .to_cartesian(FrenetPoint::new(spec.s_of(i), spec.d_of(j)))
                .map_err(|e| OccupancyError::InvalidInput(e.to_string()))?;
            let px = grid.pixel_of(world);
            lookup.push(px.in_raster.then_some((px.h as usize, px.w as usize)));
        }
    }

    let shape = grid.shape();
    let plane = spec.s_cells * spec.d_cells;
    let mut data = vec![0.0f32; shape.frames * shape.types * plane];
    for t in 0..shape.frames {
        for u in 0..shape.types {
            let base = (t * shape.types + u) * plane;
            for (k, hit) in lookup.iter().enumerate() {
                if let Some((h, w)) = *hit {
                    data[base + k] = grid.get(t, u, h, w);
                }
            }
        }
    }
    Ok(FrenetOccupancy {
        spec,
        frames: shape.frames,
        types: shape.types,
        horizon_dt: grid.horizon_dt(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_with(
        shape: GridShape,
        mpp: f64,
        cells: &[(usize, usize, usize, usize, f32)],
    ) -> OccupancyGrid {
        let mut g = OccupancyGrid::zeros(shape, CartesianPoint::new(0.0, 0.0), mpp, 1.0).unwrap();
        for &(t, u, h, w, v) in cells {
            let k = g.index(t, u, h, w);
            g.data[k] = v;
        }
        g
    }

    #[test]
    fn pixel_mapping() {
        let shape = GridShape::default();
        let g = OccupancyGrid::zeros(shape, CartesianPoint::new(-3.0, 2.0), 1.6, 1.0).unwrap();
        let px = g.pixel_of(CartesianPoint::new(13.0, 10.0));
        assert_eq!((px.w, px.h, px.in_raster), (10, 5, true));
        let px = g.pixel_of(CartesianPoint::new(-3.0, 2.0));
        assert_eq!((px.w, px.h, px.in_raster), (0, 0, true));
        let px = g.pixel_of(CartesianPoint::new(-3.1, 2.0));
        assert_eq!((px.w, px.h, px.in_raster), (-1, 0, false));
    }

    #[test]
    fn frame_alignment() {
        assert_eq!(frame_for_time(0.1, 1.0, 5), 0);
        assert_eq!(frame_for_time(1.0, 1.0, 5), 0);
        assert_eq!(frame_for_time(30.0 * 0.1, 1.0, 5), 2);
        assert_eq!(frame_for_time(3.1, 1.0, 5), 3);
        assert_eq!(frame_for_time(5.0, 1.0, 5), 4);
        assert_eq!(frame_for_time(9.0, 1.0, 5), 4);
    }

    #[test]
    fn zero_grid_maps_to_zero() {
        let shape = GridShape {
            frames: 2,
            types: 4,
            height: 32,
            width: 32,
        };
        let g = OccupancyGrid::zeros(shape, CartesianPoint::new(-5.0, -10.0), 0.5, 1.0).unwrap();
        let route = ReferenceRoute::build(
            &[
                CartesianPoint::new(0.0, 0.0),
                CartesianPoint::new(30.0, 0.0),
            ],
            0.1,
        )
        .unwrap();
        let spec = FrenetGridSpec {
            s_cells: 200,
            d_cells: 20,
            s_res: 0.1,
            d_res: 0.5,
        };
        let f = transform_occupancy(&g, &route, spec).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn axis_aligned_single_pixel() {
        // Route along y = 0.25 so d cell centers sit inside pixels, not on their edges.
        let shape = GridShape {
            frames: 1,
            types: 1,
            height: 20,
            width: 40,
        };
        let g = grid_with(shape, 0.5, &[(0, 0, 12, 7, 0.8)]);
        let route = ReferenceRoute::build(
            &[
                CartesianPoint::new(0.25, 5.0),
                CartesianPoint::new(30.0, 5.0),
            ],
            0.1,
        )
        .unwrap();
        let spec = FrenetGridSpec {
            s_cells: 40,
            d_cells: 10,
            s_res: 0.5,
            d_res: 0.5,
        };
        let f = transform_occupancy(&g, &route, spec).unwrap();
        let hits: Vec<_> = (0..40)
            .flat_map(|i| (0..10).map(move |j| (i, j)))
            .filter(|&(i, j)| f.get(0, 0, i, j) > 0.0)
            .collect();
        // pixel w=7 spans x in [3.5, 4), s = x - 0.25; h=12 spans y in [6, 6.5), d = y - 5.
        assert_eq!(hits.len(), 1, "{hits:?}");
        let (i, j) = hits[0];
        let s = spec.s_of(i);
        let d = spec.d_of(j);
        assert!((3.5..4.0).contains(&(s + 0.25)), "s {s}");
        assert!((6.0..6.5).contains(&(d + 5.0)), "d {d}");
        assert_eq!(f.get(0, 0, i, j), 0.8);
    }

    #[test]
    fn route_too_short() {
        let g = OccupancyGrid::zeros(GridShape::default(), CartesianPoint::default(), 0.625, 1.0)
            .unwrap();
        let route = ReferenceRoute::build(
            &[
                CartesianPoint::new(0.0, 0.0),
                CartesianPoint::new(50.0, 0.0),
            ],
            0.1,
        )
        .unwrap();
        assert!(matches!(
            transform_occupancy(&g, &route, FrenetGridSpec::default()),
            Err(OccupancyError::RouteTooShort { .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_cells() {
        let shape = GridShape {
            frames: 1,
            types: 1,
            height: 2,
            width: 2,
        };
        let err = OccupancyGrid::new(
            shape,
            vec![0.0, 0.5, 1.5, 0.0],
            CartesianPoint::default(),
            1.0,
            1.0,
        );
        assert!(matches!(err, Err(OccupancyError::InvalidInput(_))));
        let err = OccupancyGrid::new(shape, vec![0.0; 3], CartesianPoint::default(), 1.0, 1.0);
        assert!(matches!(err, Err(OccupancyError::ShapeMismatch { .. })));
    }

    fn small_focc() -> FrenetOccupancy {
        let spec = FrenetGridSpec {
            s_cells: 4,
            d_cells: 4,
            s_res: 1.0,
            d_res: 1.0,
        };
        let mut f = FrenetOccupancy::empty(spec, 1, 1, 1.0);
        f.set(0, 0, 1, 1, 0.0);
        f.set(0, 0, 2, 1, 1.0);
        f.set(0, 0, 2, 2, 0.25);
        f
    }

    #[test]
    fn bilinear_cell_centers_and_midpoints() {
        let f = small_focc();
        let spec = *f.spec();
        assert_eq!(f.sample_bilinear(0, 0, spec.s_of(2), spec.d_of(2)), 0.25);
        assert_eq!(f.sample_bilinear(0, 0, spec.s_of(2), spec.d_of(1)), 1.0);
        let mid = 0.5 * (spec.s_of(1) + spec.s_of(2));
        assert!((f.sample_bilinear(0, 0, mid, spec.d_of(1)) - 0.5).abs() < 1e-15);
        // Beyond the extent everything is zero.
        assert_eq!(f.sample_bilinear(0, 0, -5.0, 0.0), 0.0);
        assert_eq!(f.sample_bilinear(0, 0, 1.0, 10.0), 0.0);
    }

    #[test]
    fn raster_round_trip() {
        let shape = GridShape {
            frames: 2,
            types: 3,
            height: 4,
            width: 5,
        };
        let g = OccupancyGrid::from_fn(
            shape,
            CartesianPoint::new(1.0, -2.0),
            0.5,
            1.0,
            |t, u, h, w| ((t * 7 + u * 5 + h * 3 + w) % 11) as f32 / 10.0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        g.write_raster(&path).unwrap();
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            (shape.cells() * 4) as u64
        );
        let back = OccupancyGrid::read_raster(&path, shape, g.origin(), 0.5, 1.0).unwrap();
        assert_eq!(back, g);
        let wrong = GridShape { height: 8, ..shape };
        assert!(matches!(
            OccupancyGrid::read_raster(&path, wrong, g.origin(), 0.5, 1.0),
            Err(OccupancyError::ShapeMismatch { .. })
        ));
    }
}
