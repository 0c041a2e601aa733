//! Axis-aligned rectangles and segment clipping. Rectangles are closed:
//! boundary contact counts as containment, which is what the collision
//! checker wants for solid obstacles.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let r = Rect { x_min, x_max, y_min, y_max };
        if !(x_min <= x_max && y_min <= y_max)
            || [x_min, x_max, y_min, y_max].iter().any(|v| !v.is_finite())
        {
            return Err(invalid!("degenerate rectangle {r:?}"));
        }
        Ok(r)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Liang-Barsky clip of the segment `a + t (b - a)`, `t` in [0, 1],
    /// against the closed rectangle. Returns the parameter interval inside
    /// the rectangle, or `None` if the segment misses it entirely.
    pub fn clip_segment(&self, a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        let checks = [
            (b.0 - a.0, self.x_min - a.0, self.x_max - a.0),
            (b.1 - a.1, self.y_min - a.1, self.y_max - a.1),
        ];
        for (d, q_lo, q_hi) in checks {
            if d == 0.0 {
                // Parallel to this slab: inside it or not at all.
                if q_lo > 0.0 || q_hi < 0.0 {
                    return None;
                }
            } else {
                let (ta, tb) = (q_lo / d, q_hi / d);
                let (enter, exit) = if ta <= tb { (ta, tb) } else { (tb, ta) };
                t0 = t0.max(enter);
                t1 = t1.min(exit);
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some((t0, t1))
    }

    pub fn intersects_segment(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        self.clip_segment(a, b).is_some()
    }

    /// Parameter at which the segment first touches the rectangle.
    pub fn segment_entry(&self, a: (f64, f64), b: (f64, f64)) -> Option<f64> {
        self.clip_segment(a, b).map(|(t0, _)| t0)
    }
}
