use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Axis-aligned box given by its two corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            min: [f64::NEG_INFINITY; 2],
            max: [f64::INFINITY; 2],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene2D {
    #[serde(default)]
    pub circles: Vec<Circle>,
    #[serde(default)]
    pub boxes: Vec<AxisBox>,
    #[serde(default)]
    pub bounds: Bounds,
}

impl Circle {
    fn sdf(&self, p: Vector2<f64>) -> (f64, Vector2<f64>) {
        let rel = p - Vector2::from(self.center);
        let r = rel.norm();
        let grad = if r > 0.0 { rel / r } else { Vector2::new(1.0, 0.0) };
        (r - self.radius, grad)
    }
}

impl AxisBox {
    fn sdf(&self, p: Vector2<f64>) -> (f64, Vector2<f64>) {
        let c = Vector2::new(0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1]));
        let half = Vector2::new(0.5 * (self.max[0] - self.min[0]), 0.5 * (self.max[1] - self.min[1]));
        let rel = p - c;
        let sign = rel.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
        let q = rel.abs() - half;
        let outside = q.map(|v| v.max(0.0));
        let out_norm = outside.norm();
        if out_norm > 0.0 {
            let g = outside.component_mul(&sign) / out_norm;
            (out_norm, g)
        } else {
            // inside or on the boundary: nearest face
            let axis = if q[0] >= q[1] { 0 } else { 1 };
            let mut g = Vector2::zeros();
            g[axis] = sign[axis];
            (q[axis], g)
        }
    }
}

impl Scene2D {
    pub fn new(circles: Vec<Circle>, boxes: Vec<AxisBox>) -> Self {
        Self {
            circles,
            boxes,
            bounds: Bounds::default(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.circles.is_empty() && self.boxes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (i, c) in self.circles.iter().enumerate() {
            if !(c.radius > 0.0) || !c.center.iter().all(|v| v.is_finite()) {
                problems.push(format!("circle {i}: radius must be > 0 and center finite"));
            }
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(b.max[0] > b.min[0] && b.max[1] > b.min[1]) {
                problems.push(format!("box {i} is degenerate"));
            }
        }
        if !(self.bounds.max[0] > self.bounds.min[0] && self.bounds.max[1] > self.bounds.min[1]) {
            problems.push("workspace bounds are empty".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Signed distance to the nearest obstacle (negative inside) and its
    /// gradient. An empty scene gives `+∞` with a zero gradient.
    pub fn signed_distance_grad(&self, p: [f64; 2]) -> (f64, [f64; 2]) {
        let p = Vector2::from(p);
        let mut best = (f64::INFINITY, Vector2::zeros());
        let candidates = self
            .circles
            .iter()
            .map(|c| c.sdf(p))
            .chain(self.boxes.iter().map(|b| b.sdf(p)));
        for (d, g) in candidates {
            if d < best.0 {
                best = (d, g);
            }
        }
        (best.0, [best.1[0], best.1[1]])
    }
}

pub fn signed_distance(scene: &Scene2D, point: [f64; 2]) -> f64 {
    scene.signed_distance_grad(point).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_scene() -> Scene2D {
        Scene2D::new(vec![Circle { center: [1.0, 2.0], radius: 0.5 }], vec![])
    }

    #[test]
    fn circle_distances() {
        let s = circle_scene();
        assert_close!(signed_distance(&s, [1.0, 3.5]), 1.0, 1e-15);
        assert_close!(signed_distance(&s, [1.0, 2.0]), -0.5, 1e-15);
    }

    #[test]
    fn box_distances() {
        let s = Scene2D::new(vec![], vec![AxisBox { min: [0.0, 0.0], max: [2.0, 1.0] }]);
        assert_close!(signed_distance(&s, [3.0, 0.5]), 1.0, 1e-15);
        assert_close!(signed_distance(&s, [5.0, 5.0]), 5.0, 1e-15);
        assert_close!(signed_distance(&s, [1.0, 0.5]), -0.5, 1e-15);
        assert_close!(signed_distance(&s, [0.2, 0.5]), -0.2, 1e-15);
        let (_, g) = s.signed_distance_grad([-1.0, -1.0]);
        assert_close!(g[0], -std::f64::consts::FRAC_1_SQRT_2, 1e-15);
        assert_close!(g[1], -std::f64::consts::FRAC_1_SQRT_2, 1e-15);
    }

    #[test]
    fn empty_scene_is_infinitely_far() {
        let (d, g) = Scene2D::default().signed_distance_grad([0.0, 0.0]);
        assert_eq!(d, f64::INFINITY);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn validation() {
        let bad = Scene2D::new(
            vec![Circle { center: [0.0, 0.0], radius: 0.0 }],
            vec![AxisBox { min: [0.0, 0.0], max: [0.0, 1.0] }],
        );
        match bad.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(circle_scene().validate().is_ok());
    }
}
