//! Natural cubic splines through planar waypoints, parameterized by chord length.

/// Five-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Sub-intervals per spline segment used to tabulate arc length.
const ARC_SUBDIVISIONS: usize = 16;

#[derive(Debug, Clone)]
struct Cubic1d {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl Cubic1d {
    /// Natural boundary conditions (zero second derivative at both ends).
    fn natural(knots: &[f64], values: &[f64]) -> Self {
        let n = knots.len();
        debug_assert!(n >= 2 && values.len() == n);
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();

        // Tridiagonal system for the second-derivative coefficients c_i.
        let mut c = vec![0.0; n];
        if n > 2 {
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 0..m {
                let k = i + 1;
                diag[i] = 2.0 * (h[k - 1] + h[k]);
                upper[i] = h[k];
                rhs[i] = 3.0
                    * ((values[k + 1] - values[k]) / h[k] - (values[k] - values[k - 1]) / h[k - 1]);
            }
            // Thomas algorithm; the lower band equals h[k-1].
            for i in 1..m {
                let lower = h[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            c[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                c[i + 1] = (rhs[i] - upper[i] * c[i + 2]) / diag[i];
            }
        }

        let mut b = vec![0.0; n - 1];
        let mut d = vec![0.0; n - 1];
        for i in 0..n - 1 {
            b[i] = (values[i + 1] - values[i]) / h[i] - h[i] * (c[i + 1] + 2.0 * c[i]) / 3.0;
            d[i] = (c[i + 1] - c[i]) / (3.0 * h[i]);
        }
        Self {
            a: values[..n - 1].to_vec(),
            b,
            c: c[..n - 1].to_vec(),
            d,
        }
    }

    fn value(&self, seg: usize, u: f64) -> f64 {
        self.a[seg] + u * (self.b[seg] + u * (self.c[seg] + u * self.d[seg]))
    }

    fn derivative(&self, seg: usize, u: f64) -> f64 {
        self.b[seg] + u * (2.0 * self.c[seg] + 3.0 * u * self.d[seg])
    }
}

/// Planar natural cubic spline `(x(t), y(t))` with arc-length lookup.
#[derive(Debug, Clone)]
pub(crate) struct Spline2d {
    knots: Vec<f64>,
    x: Cubic1d,
    y: Cubic1d,
    /// `(segment, local parameter, cumulative arc length)` at every sub-interval boundary.
    arc_table: Vec<(usize, f64, f64)>,
}

impl Spline2d {
    /// Caller guarantees at least two waypoints with distinct consecutive entries.
    pub(crate) fn through(points: &[(f64, f64)]) -> Self {
        let mut knots = Vec::with_capacity(points.len());
        knots.push(0.0);
        for w in points.windows(2) {
            let step = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            knots.push(knots.last().unwrap() + step);
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let mut spline = Self {
            x: Cubic1d::natural(&knots, &xs),
            y: Cubic1d::natural(&knots, &ys),
            knots,
            arc_table: Vec::new(),
        };
        spline.tabulate_arc_length();
        spline
    }

    fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    fn speed(&self, seg: usize, u: f64) -> f64 {
        self.x.derivative(seg, u).hypot(self.y.derivative(seg, u))
    }

    fn arc_between(&self, seg: usize, u0: f64, u1: f64) -> f64 {
        let half = 0.5 * (u1 - u0);
        let mid = 0.5 * (u1 + u0);
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS.iter())
            .map(|(x, w)| w * self.speed(seg, mid + half * x))
            .sum::<f64>()
            * half
    }

    fn tabulate_arc_length(&mut self) {
        let mut table = Vec::with_capacity(self.segments() * ARC_SUBDIVISIONS + 1);
        let mut acc = 0.0;
        table.push((0, 0.0, 0.0));
        for seg in 0..self.segments() {
            let h = self.knots[seg + 1] - self.knots[seg];
            for k in 0..ARC_SUBDIVISIONS {
                let u0 = h * k as f64 / ARC_SUBDIVISIONS as f64;
                let u1 = h * (k + 1) as f64 / ARC_SUBDIVISIONS as f64;
                acc += self.arc_between(seg, u0, u1);
                table.push((seg, u1, acc));
            }
        }
        self.arc_table = table;
    }

    pub(crate) fn length(&self) -> f64 {
        self.arc_table.last().map_or(0.0, |e| e.2)
    }

    /// Locate `(segment, local parameter)` at arc length `s`.
    pub(crate) fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length());
        let idx = self
            .arc_table
            .partition_point(|e| e.2 <= s)
            .clamp(1, self.arc_table.len() - 1);
        let (_, _, s_lo) = self.arc_table[idx - 1];
        let (seg, u_hi, s_hi) = self.arc_table[idx];
        // The entry before a segment's first sub-interval belongs to the previous segment.
        let u_lo = if self.arc_table[idx - 1].0 == seg {
            self.arc_table[idx - 1].1
        } else {
            0.0
        };

        let mut lo = u_lo;
        let mut hi = u_hi;
        let mut u = if s_hi > s_lo {
            u_lo + (u_hi - u_lo) * (s - s_lo) / (s_hi - s_lo)
        } else {
            u_lo
        };
        for _ in 0..50 {
            let f = s_lo + self.arc_between(seg, u_lo, u) - s;
            if f.abs() < 1e-13 {
                break;
            }
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let speed = self.speed(seg, u);
            let newton = u - f / speed;
            u = if speed > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        (seg, u)
    }

    pub(crate) fn position(&self, seg: usize, u: f64) -> (f64, f64) {
        (self.x.value(seg, u), self.y.value(seg, u))
    }

    pub(crate) fn derivative(&self, seg: usize, u: f64) -> (f64, f64) {
        (self.x.derivative(seg, u), self.y.derivative(seg, u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots() {
        let pts = [(0.0, 0.0), (3.0, 1.0), (6.0, -1.0), (9.0, 0.5)];
        let sp = Spline2d::through(&pts);
        for (i, p) in pts.iter().enumerate().take(pts.len() - 1) {
            let (x, y) = sp.position(i, 0.0);
            assert!((x - p.0).abs() < 1e-12 && (y - p.1).abs() < 1e-12);
        }
        let last = sp.segments() - 1;
        let h = sp.knots[last + 1] - sp.knots[last];
        let (x, y) = sp.position(last, h);
        assert!((x - 9.0).abs() < 1e-12 && (y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn straight_line_arc_length_is_exact() {
        let sp = Spline2d::through(&[(0.0, 0.0), (4.0, 3.0), (8.0, 6.0)]);
        assert!((sp.length() - 10.0).abs() < 1e-12);
        let (seg, u) = sp.locate(7.5);
        let (x, y) = sp.position(seg, u);
        assert!((x - 6.0).abs() < 1e-10 && (y - 4.5).abs() < 1e-10);
    }
}
