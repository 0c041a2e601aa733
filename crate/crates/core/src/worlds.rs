//! The kinematic car, planar maze environments, and corridor bookkeeping.
//!
//! The car state is `(x, y, theta)` with one steering channel:
//!
//! ```text
//! dx = v cos(theta) dt
//! dy = v sin(theta) dt
//! dtheta = (1/r) (w dt + a dw)
//! ```
//!
//! Forward speed `v` is constant; only the heading is actuated and only the
//! heading channel is noisy. The heading is left unwrapped during
//! integration (the planner metric wraps differences instead).
//!
//! Environments are a rectangular workspace, closed rectangular obstacles,
//! a goal disc with a time window, and a set of labeled corridor bands used
//! to classify where a trajectory crossed the obstacle line. Leaving the
//! workspace counts as a collision.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::geometry::Rect;
use crate::sde::{DynamicsModel, StateTimePoint, Trajectory};

pub const DEFAULT_SPEED: f64 = 2.0;
pub const DEFAULT_TURN_SCALE: f64 = 1.0;

/// Constant-speed kinematic car with actuated, noisy heading.
pub fn car_dynamics(speed: f64, turn_scale: f64, noise_scale: f64) -> Result<DynamicsModel> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(invalid!("speed must be finite and positive, got {speed}"));
    }
    if !(turn_scale.is_finite() && turn_scale > 0.0) {
        return Err(invalid!("turn scale must be finite and positive, got {turn_scale}"));
    }
    let inv_r = 1.0 / turn_scale;
    DynamicsModel::new(
        3,
        1,
        noise_scale,
        Arc::new(move |x: &[f64], out: &mut [f64]| {
            out[0] = speed * x[2].cos();
            out[1] = speed * x[2].sin();
            out[2] = 0.0;
        }),
        Arc::new(move |_x: &[f64], out: &mut [f64]| {
            out[0] = 0.0;
            out[1] = 0.0;
            out[2] = inv_r;
        }),
    )
}

/// Goal disc in the plane plus the time window in which arrival counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub center: [f64; 2],
    pub radius: f64,
    pub time_window: [f64; 2],
}

const TIME_EPS: f64 = 1e-9;

impl GoalSet {
    pub fn new(center: [f64; 2], radius: f64, time_window: [f64; 2]) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid!("goal radius must be positive"));
        }
        if !(time_window[0] <= time_window[1]) {
            return Err(invalid!("goal time window is inverted"));
        }
        Ok(GoalSet { center, radius, time_window })
    }

    pub fn position_within(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        (dx * dx + dy * dy).sqrt() <= self.radius
    }

    /// Membership check; the time comparison tolerates grid rounding.
    pub fn contains(&self, point: &StateTimePoint) -> bool {
        self.position_within(point.state[0], point.state[1])
            && point.time >= self.time_window[0] - TIME_EPS
            && point.time <= self.time_window[1] + TIME_EPS
    }
}

/// Passage labels across the obstacle line, ordered bottom to top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corridor {
    BottomCorner,
    BottomSlit,
    TopSlit,
    TopCorner,
}

impl Corridor {
    pub const ALL: [Corridor; 4] =
        [Corridor::BottomCorner, Corridor::BottomSlit, Corridor::TopSlit, Corridor::TopCorner];

    pub fn label(&self) -> &'static str {
        match self {
            Corridor::BottomCorner => "bottom_corner",
            Corridor::BottomSlit => "bottom_slit",
            Corridor::TopSlit => "top_slit",
            Corridor::TopCorner => "top_corner",
        }
    }

    pub fn is_slit(&self) -> bool {
        matches!(self, Corridor::BottomSlit | Corridor::TopSlit)
    }
}

impl std::fmt::Display for Corridor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Half-open vertical band `[y_min, y_max)` owned by one corridor label.
/// A preset's bands partition the workspace height, extending each free
/// passage to the midline of its neighboring obstacle segments so every
/// crossing ordinate gets exactly one label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorBand {
    pub label: Corridor,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub workspace: Rect,
    pub obstacles: Vec<Rect>,
    pub goal: GoalSet,
    #[serde(default)]
    pub corridors: Vec<CorridorBand>,
    /// x-ordinate of the obstacle line's midline; `None` when the world has
    /// no crossing structure to classify.
    #[serde(default)]
    pub crossing_x: Option<f64>,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.obstacles.iter().enumerate() {
            Rect::new(o.x_min, o.x_max, o.y_min, o.y_max)
                .map_err(|_| invalid!("obstacle {i} is degenerate"))?;
        }
        Rect::new(
            self.workspace.x_min,
            self.workspace.x_max,
            self.workspace.y_min,
            self.workspace.y_max,
        )?;
        if !self.corridors.is_empty() {
            let mut bands = self.corridors.clone();
            bands.sort_by(|a, b| a.y_min.total_cmp(&b.y_min));
            if (bands[0].y_min - self.workspace.y_min).abs() > 1e-9
                || (bands.last().unwrap().y_max - self.workspace.y_max).abs() > 1e-9
            {
                return Err(invalid!("corridor bands must span the workspace height"));
            }
            for w in bands.windows(2) {
                if (w[0].y_max - w[1].y_min).abs() > 1e-9 {
                    return Err(invalid!("corridor bands must tile without gaps or overlap"));
                }
            }
        }
        Ok(())
    }

    /// Free means inside the workspace and outside every closed obstacle.
    pub fn point_free(&self, x: f64, y: f64) -> bool {
        self.workspace.contains(x, y) && !self.obstacles.iter().any(|o| o.contains(x, y))
    }

    /// Both endpoints free and no obstacle crossed in between. With both
    /// endpoints inside the (convex) workspace the segment cannot leave it.
    pub fn segment_free(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        self.point_free(a.0, a.1)
            && self.point_free(b.0, b.1)
            && !self.obstacles.iter().any(|o| o.intersects_segment(a, b))
    }

    pub fn trajectory_free(&self, traj: &Trajectory) -> bool {
        let pts = traj.points();
        if pts.is_empty() {
            return true;
        }
        if !self.point_free(pts[0].state[0], pts[0].state[1]) {
            return false;
        }
        pts.windows(2).all(|w| {
            self.segment_free(
                (w[0].state[0], w[0].state[1]),
                (w[1].state[0], w[1].state[1]),
            )
        })
    }

    /// Earliest parameter in [0, 1] at which the segment touches an
    /// obstacle, for placing a collision witness on the obstacle boundary.
    pub fn first_obstacle_entry(&self, a: (f64, f64), b: (f64, f64)) -> Option<f64> {
        self.obstacles
            .iter()
            .filter_map(|o| o.segment_entry(a, b))
            .min_by(|s, t| s.total_cmp(t))
    }

    pub fn band_for(&self, y: f64) -> Option<Corridor> {
        let mut best: Option<&CorridorBand> = None;
        for band in &self.corridors {
            if y >= band.y_min && y < band.y_max {
                return Some(band.label);
            }
            // Top edge of the highest band is inclusive.
            if y == band.y_max
                && self.corridors.iter().all(|b| b.y_max <= band.y_max)
            {
                best = Some(band);
            }
        }
        best.map(|b| b.label)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let env: Environment = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        env.validate()?;
        Ok(env)
    }

    /// Content hash of the canonical serialized geometry, recorded in every
    /// output file so results can be traced to the exact world they used.
    pub fn content_hash(&self) -> Result<String> {
        let canon = self.to_toml_string()?;
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    pub fn preset(name: &str) -> Result<Environment> {
        match name {
            "single_slit" => Ok(single_slit_world(&SlitGeometry::default())),
            "double_slit" => Ok(double_slit_world(&DoubleSlitGeometry::default())),
            "open" => Ok(open_world()),
            other => Err(Error::Config(format!(
                "unknown environment preset '{other}' (have: single_slit, double_slit, open)"
            ))),
        }
    }
}

fn default_workspace() -> Rect {
    Rect { x_min: -10.0, x_max: 10.0, y_min: -10.0, y_max: 10.0 }
}

fn default_goal() -> GoalSet {
    GoalSet { center: [9.0, 0.0], radius: 1.0, time_window: [9.5, 10.0] }
}

/// Geometry of the single-slit wall: a vertical block with one central gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitGeometry {
    pub block_half_thickness: f64,
    pub block_half_height: f64,
    pub slit_half_width: f64,
}

impl Default for SlitGeometry {
    fn default() -> Self {
        SlitGeometry { block_half_thickness: 0.5, block_half_height: 3.0, slit_half_width: 0.5 }
    }
}

pub fn single_slit_world(g: &SlitGeometry) -> Environment {
    let ws = default_workspace();
    let (w, h, s) = (g.block_half_thickness, g.block_half_height, g.slit_half_width);
    // Free passages: below the block, the slit, above the block. Band edges
    // sit at the midlines of the two obstacle segments.
    let lower_mid = (-h + -s) / 2.0;
    let upper_mid = (s + h) / 2.0;
    Environment {
        name: "single_slit".to_string(),
        workspace: ws,
        obstacles: vec![
            Rect { x_min: -w, x_max: w, y_min: -h, y_max: -s },
            Rect { x_min: -w, x_max: w, y_min: s, y_max: h },
        ],
        goal: default_goal(),
        corridors: vec![
            CorridorBand { label: Corridor::BottomCorner, y_min: ws.y_min, y_max: lower_mid },
            CorridorBand { label: Corridor::BottomSlit, y_min: lower_mid, y_max: upper_mid },
            CorridorBand { label: Corridor::TopCorner, y_min: upper_mid, y_max: ws.y_max },
        ],
        crossing_x: Some(0.0),
    }
}

/// Geometry of the double-slit wall: a thicker block with two gaps placed
/// symmetrically about the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleSlitGeometry {
    pub block_half_thickness: f64,
    pub block_half_height: f64,
    pub slit_inner: f64,
    pub slit_outer: f64,
}

impl Default for DoubleSlitGeometry {
    fn default() -> Self {
        DoubleSlitGeometry {
            block_half_thickness: 1.5,
            block_half_height: 3.0,
            slit_inner: 1.5,
            slit_outer: 2.5,
        }
    }
}

pub fn double_slit_world(g: &DoubleSlitGeometry) -> Environment {
    let ws = default_workspace();
    let (w, h) = (g.block_half_thickness, g.block_half_height);
    let (si, so) = (g.slit_inner, g.slit_outer);
    let lower_mid = (-h + -so) / 2.0;
    let upper_mid = (so + h) / 2.0;
    Environment {
        name: "double_slit".to_string(),
        workspace: ws,
        obstacles: vec![
            Rect { x_min: -w, x_max: w, y_min: -h, y_max: -so },
            Rect { x_min: -w, x_max: w, y_min: -si, y_max: si },
            Rect { x_min: -w, x_max: w, y_min: so, y_max: h },
        ],
        goal: default_goal(),
        corridors: vec![
            CorridorBand { label: Corridor::BottomCorner, y_min: ws.y_min, y_max: lower_mid },
            CorridorBand { label: Corridor::BottomSlit, y_min: lower_mid, y_max: 0.0 },
            CorridorBand { label: Corridor::TopSlit, y_min: 0.0, y_max: upper_mid },
            CorridorBand { label: Corridor::TopCorner, y_min: upper_mid, y_max: ws.y_max },
        ],
        crossing_x: Some(0.0),
    }
}

/// Obstacle-free workspace with the standard goal, for baselines and tests.
pub fn open_world() -> Environment {
    Environment {
        name: "open".to_string(),
        workspace: default_workspace(),
        obstacles: Vec::new(),
        goal: default_goal(),
        corridors: Vec::new(),
        crossing_x: None,
    }
}

/// Where the trajectory first crossed the obstacle midline, interpolated
/// between the bracketing points, mapped to its corridor band. `None` when
/// the trajectory never reaches the midline or the world defines no bands.
pub fn classify_crossing(traj: &Trajectory, env: &Environment) -> Option<Corridor> {
    let xm = env.crossing_x?;
    let pts = traj.points();
    for w in pts.windows(2) {
        let (a, b) = (&w[0].state, &w[1].state);
        let (da, db) = (a[0] - xm, b[0] - xm);
        if da == 0.0 {
            return env.band_for(a[1]);
        }
        if da * db <= 0.0 && da != db {
            let t = da / (da - db);
            return env.band_for(a[1] + t * (b[1] - a[1]));
        }
    }
    None
}
