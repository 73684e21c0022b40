//! Lasso polygons and even-odd point containment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed polygon drawn around points in the scatter plot. The last vertex
/// connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct LassoPolygon {
    vertices: Vec<[f64; 2]>,
}

impl TryFrom<Vec<[f64; 2]>> for LassoPolygon {
    type Error = Error;

    fn try_from(vertices: Vec<[f64; 2]>) -> Result<Self> {
        LassoPolygon::new(vertices)
    }
}

impl From<LassoPolygon> for Vec<[f64; 2]> {
    fn from(p: LassoPolygon) -> Self {
        p.vertices
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    // |dx| + |dy| bounds the length from above, so this reject is conservative.
    let loose = 1e-12 * ((b[0] - a[0]).abs() + (b[1] - a[1]).abs()).max(1.0);
    if p[0] < a[0].min(b[0]) - loose
        || p[0] > a[0].max(b[0]) + loose
        || p[1] < a[1].min(b[1]) - loose
        || p[1] > a[1].max(b[1]) + loose
    {
        return false;
    }
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let tol = 1e-12 * len.max(1.0) * len.max(1.0);
    if cross(a, b, p).abs() > tol {
        return false;
    }
    let slack = 1e-12 * len.max(1.0);
    p[0] >= a[0].min(b[0]) - slack
        && p[0] <= a[0].max(b[0]) + slack
        && p[1] >= a[1].min(b[1]) - slack
        && p[1] <= a[1].max(b[1]) + slack
}

impl LassoPolygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Validation(format!(
                "lasso polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("lasso polygon has non-finite coordinates".into()));
        }
        Ok(LassoPolygon { vertices })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// True when every vertex lies on one line, so the polygon encloses nothing.
    pub fn is_degenerate(&self) -> bool {
        let origin = self.vertices[0];
        let Some(&far) = self.vertices.iter().find(|&&v| v != origin) else {
            return true;
        };
        let scale = (far[0] - origin[0]).hypot(far[1] - origin[1]);
        self.vertices
            .iter()
            .all(|&v| cross(origin, far, v).abs() <= 1e-12 * scale * scale.max(1.0))
    }

    /// Even-odd containment; points on an edge count as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[j]);
            if on_segment(p, a, b) {
                return true;
            }
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x_cross = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
                if p[0] < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Bounding box `(min, max)`.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for a in 0..2 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }
}
