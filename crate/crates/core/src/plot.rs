//! Static SVG figures of worlds, trees, bundles, and executed paths.
//!
//! Rendering is deliberately dependency-free and deterministic: fixed
//! two-decimal pixel coordinates, fixed palette order, no timestamps, so a
//! figure byte-matches across reruns of the same inputs. World y points up
//! and is flipped into screen coordinates here.

use crate::controller::MissionResult;
use crate::rrt::TreeGraph;
use crate::sde::{StateTimePoint, Trajectory};
use crate::worlds::Environment;

/// Rotating palette for bundle polylines.
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

const TREE_EDGE: &str = "#4878cf";
const TREE_VERTEX: &str = "#2ca02c";
const BASELINE: &str = "#e6b800";
const EXECUTED: &str = "#cc00cc";
const COLLIDED: &str = "#d62728";
const GOAL_FILL: &str = "#9ecbff";
const GOAL_EDGE: &str = "#cc00cc";
const OBSTACLE: &str = "#555555";

/// An SVG drawing of one world with layers painted on top in call order.
pub struct SvgScene {
    buf: String,
    scale: f64,
    x_min: f64,
    y_max: f64,
    margin: f64,
}

impl SvgScene {
    /// Opens a scene sized `pixels` across the workspace width and paints
    /// the workspace frame, obstacles, and goal disc.
    pub fn new(env: &Environment, pixels: f64) -> SvgScene {
        let ws = &env.workspace;
        let margin = 10.0;
        let scale = (pixels - 2.0 * margin) / (ws.x_max - ws.x_min);
        let height = (ws.y_max - ws.y_min) * scale + 2.0 * margin;
        let mut scene = SvgScene { buf: String::new(), scale, x_min: ws.x_min, y_max: ws.y_max, margin };
        scene.buf.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{pixels:.0}\" height=\"{height:.0}\" \
             viewBox=\"0 0 {pixels:.0} {height:.0}\">\n"
        ));
        scene.buf.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{pixels:.0}\" height=\"{height:.0}\" fill=\"white\"/>\n"
        ));
        let (fx, fy) = scene.map(ws.x_min, ws.y_max);
        scene.buf.push_str(&format!(
            "<rect x=\"{fx:.2}\" y=\"{fy:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
             stroke=\"black\" stroke-width=\"1\"/>\n",
            (ws.x_max - ws.x_min) * scale,
            (ws.y_max - ws.y_min) * scale
        ));
        for rect in &env.obstacles {
            let (ox, oy) = scene.map(rect.x_min, rect.y_max);
            scene.buf.push_str(&format!(
                "<rect x=\"{ox:.2}\" y=\"{oy:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                 fill=\"{OBSTACLE}\"/>\n",
                (rect.x_max - rect.x_min) * scale,
                (rect.y_max - rect.y_min) * scale
            ));
        }
        let (gx, gy) = scene.map(env.goal.center[0], env.goal.center[1]);
        scene.buf.push_str(&format!(
            "<circle cx=\"{gx:.2}\" cy=\"{gy:.2}\" r=\"{:.2}\" fill=\"{GOAL_FILL}\" \
             fill-opacity=\"0.7\" stroke=\"{GOAL_EDGE}\" stroke-width=\"1.5\"/>\n",
            env.goal.radius * scale
        ));
        scene
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.x_min) * self.scale + self.margin,
            (self.y_max - y) * self.scale + self.margin,
        )
    }

    /// Polyline through world points.
    pub fn polyline<'a, I>(&mut self, points: I, color: &str, width: f64, opacity: f64)
    where
        I: IntoIterator<Item = &'a StateTimePoint>,
    {
        let coords: Vec<String> = points
            .into_iter()
            .map(|p| {
                let (x, y) = self.map(p.state[0], p.state[1]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        if coords.len() < 2 {
            return;
        }
        self.buf.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" \
             stroke-opacity=\"{opacity}\"/>\n",
            coords.join(" ")
        ));
    }

    pub fn trajectory(&mut self, traj: &Trajectory, color: &str, width: f64) {
        self.polyline(traj.points(), color, width, 1.0);
    }

    /// Tree edges as thin polylines and vertices as dots.
    pub fn tree(&mut self, tree: &TreeGraph) {
        for index in 0..tree.len() {
            if let Some(edge) = tree.edge(index) {
                self.polyline(edge.points(), TREE_EDGE, 0.6, 0.8);
            }
        }
        for index in 0..tree.len() {
            let v = tree.vertex(index);
            let (x, y) = self.map(v.state[0], v.state[1]);
            self.buf.push_str(&format!(
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.2\" fill=\"{TREE_VERTEX}\"/>\n"
            ));
        }
    }

    /// Bundle members in rotating palette colors, one polyline each.
    pub fn bundle(&mut self, members: &[Trajectory]) {
        for (k, member) in members.iter().enumerate() {
            self.polyline(member.points(), PALETTE[k % PALETTE.len()], 0.7, 0.5);
        }
    }

    /// Square marker, e.g. for the start state.
    pub fn marker(&mut self, x: f64, y: f64, color: &str) {
        let (mx, my) = self.map(x, y);
        self.buf.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"8\" height=\"8\" fill=\"{color}\" \
             stroke=\"black\" stroke-width=\"0.5\"/>\n",
            mx - 4.0,
            my - 4.0
        ));
    }

    pub fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

/// One mission: tree (when given), per-cycle baselines and recorded
/// bundles, and the executed path on top.
pub fn mission_figure(
    env: &Environment,
    mission: &MissionResult,
    tree: Option<&TreeGraph>,
) -> String {
    let mut scene = SvgScene::new(env, 800.0);
    if let Some(tree) = tree {
        scene.tree(tree);
    }
    for cycle in &mission.cycles {
        if let Some(bundle) = &cycle.bundle {
            scene.bundle(bundle);
        }
    }
    for cycle in &mission.cycles {
        scene.trajectory(&cycle.baseline, BASELINE, 1.2);
    }
    let color = if mission.outcome.is_success() { EXECUTED } else { COLLIDED };
    scene.trajectory(&mission.executed, color, 2.0);
    let start = mission.executed.start();
    scene.marker(start.state[0], start.state[1], BASELINE);
    scene.finish()
}

/// Many missions overlaid, successes in the executed color and failures in
/// the collision color, as a batch summary.
pub fn outcomes_figure(env: &Environment, missions: &[MissionResult]) -> String {
    let mut scene = SvgScene::new(env, 800.0);
    for mission in missions.iter().filter(|m| !m.outcome.is_success()) {
        scene.polyline(mission.executed.points(), COLLIDED, 1.0, 0.6);
    }
    for mission in missions.iter().filter(|m| m.outcome.is_success()) {
        scene.polyline(mission.executed.points(), EXECUTED, 1.0, 0.6);
    }
    if let Some(first) = missions.first() {
        let start = first.executed.start();
        scene.marker(start.state[0], start.state[1], BASELINE);
    }
    scene.finish()
}
