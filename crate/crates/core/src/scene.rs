//! Peg-transfer world: a board with posts, three pegs and one gripper tool.
//!
//! Kinematics are ideal: the tool jumps to each commanded pose. Grasping is
//! decided by proximity of the tooltip to a peg's countersink when the jaw
//! closes; a held peg rides rigidly at a fixed offset below the tooltip.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ToolCommand, DEFAULT_JAW_MAX};
use crate::geometry::{Pose, Rotation, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("scenes do not share the same board")]
    BoardMismatch,
    #[error("invalid scene layout: {0}")]
    InvalidLayout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: usize,
    /// Base of the post, where a seated peg's base sits.
    pub position: Vec3,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Board {
    pub posts: Vec<Post>,
    /// Planar release radius around a post for snapping a peg onto it.
    pub capture_radius: f64,
    pub plane_height: f64,
    /// Height of a peg; its countersink (grasp point) is at the top.
    pub peg_height: f64,
    pub peg_radius: f64,
}

impl Board {
    pub fn post(&self, id: usize) -> Option<&Post> {
        self.posts.iter().find(|p| p.id == id)
    }

    pub fn posts_on(&self, side: Side) -> impl Iterator<Item = &Post> {
        self.posts.iter().filter(move |p| p.side == side)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PegState {
    OnPost { post: usize },
    Held,
    Dropped { position: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peg {
    pub id: usize,
    pub state: PegState,
    /// Peg base pose relative to the tooltip while held.
    pub grasp_offset: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub pose: Pose,
    pub jaw: f64,
    /// Jaw latch for hysteresis: set when the jaw closed past the close threshold.
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskPhase {
    LeftToRight,
    RightToLeft,
    Done,
}

impl TaskPhase {
    /// Side the pegs must end up on in this phase.
    pub fn target_side(&self) -> Option<Side> {
        match self {
            TaskPhase::LeftToRight => Some(Side::Right),
            TaskPhase::RightToLeft => Some(Side::Left),
            TaskPhase::Done => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspParams {
    pub grasp_radius: f64,
    pub jaw_close_threshold: f64,
    pub jaw_open_threshold: f64,
}

impl Default for GraspParams {
    fn default() -> Self {
        Self { grasp_radius: 0.003, jaw_close_threshold: 0.2, jaw_open_threshold: 0.5 }
    }
}

impl GraspParams {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.grasp_radius > 0.0) {
            return Err(SceneError::InvalidLayout("grasp_radius must be positive".into()));
        }
        if !(self.jaw_open_threshold > self.jaw_close_threshold) {
            return Err(SceneError::InvalidLayout(
                "jaw_open_threshold must exceed jaw_close_threshold".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneEvent {
    Grasped { peg: usize },
    PlacedOnPost { peg: usize, post: usize },
    Dropped { peg: usize, position: Vec3 },
    PhaseAdvanced { phase: TaskPhase },
}

/// Post layout and peg geometry, loadable from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneLayout {
    pub posts: Vec<Post>,
    /// Post id each peg starts on; must all be on the left side.
    pub peg_start_posts: Vec<usize>,
    pub capture_radius: f64,
    pub plane_height: f64,
    pub peg_height: f64,
    pub peg_radius: f64,
    pub grasp: GraspParams,
    pub jaw_max: f64,
    pub tool_start: Vec3,
}

impl Default for SceneLayout {
    /// Three posts per side, 3 cm apart in y, 10 cm between sides.
    fn default() -> Self {
        let mut posts = Vec::new();
        for (i, y) in [-0.03, 0.0, 0.03].into_iter().enumerate() {
            posts.push(Post { id: i, position: Vec3::new(-0.05, y, 0.0), side: Side::Left });
        }
        for (i, y) in [-0.03, 0.0, 0.03].into_iter().enumerate() {
            posts.push(Post { id: 3 + i, position: Vec3::new(0.05, y, 0.0), side: Side::Right });
        }
        Self {
            posts,
            peg_start_posts: vec![0, 1, 2],
            capture_radius: 0.02,
            plane_height: 0.0,
            peg_height: 0.015,
            peg_radius: 0.004,
            grasp: GraspParams::default(),
            jaw_max: DEFAULT_JAW_MAX,
            tool_start: Vec3::new(0.0, 0.0, 0.05),
        }
    }
}

impl SceneLayout {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidLayout(m.to_string()));
        self.grasp.validate()?;
        for (i, a) in self.posts.iter().enumerate() {
            if !a.position.is_finite() {
                return bad("post position not finite");
            }
            for b in &self.posts[i + 1..] {
                if a.id == b.id {
                    return bad("duplicate post id");
                }
                if a.position == b.position {
                    return bad("post positions must be distinct");
                }
            }
        }
        let left = self.posts.iter().filter(|p| p.side == Side::Left).count();
        let right = self.posts.len() - left;
        if left != right {
            return bad("equal number of posts required on each side");
        }
        if self.peg_start_posts.len() > left {
            return bad("more pegs than posts per side");
        }
        let mut seen = Vec::new();
        for id in &self.peg_start_posts {
            match self.posts.iter().find(|p| p.id == *id) {
                Some(p) if p.side == Side::Left => {}
                Some(_) => return bad("pegs must start on left posts"),
                None => return bad("peg start post does not exist"),
            }
            if seen.contains(id) {
                return bad("two pegs on one post");
            }
            seen.push(*id);
        }
        if !(self.capture_radius > 0.0 && self.peg_height > 0.0 && self.peg_radius > 0.0) {
            return bad("capture_radius, peg_height and peg_radius must be positive");
        }
        if !(self.jaw_max > self.grasp.jaw_open_threshold) {
            return bad("jaw_max must exceed jaw_open_threshold");
        }
        Ok(())
    }

    pub fn board(&self) -> Board {
        Board {
            posts: self.posts.clone(),
            capture_radius: self.capture_radius,
            plane_height: self.plane_height,
            peg_height: self.peg_height,
            peg_radius: self.peg_radius,
        }
    }
}

/// Full world state. One instance models the remote site, another the twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub board: Board,
    pub pegs: Vec<Peg>,
    pub tool: Tool,
    pub phase: TaskPhase,
}

impl SceneState {
    pub fn new(layout: &SceneLayout) -> Result<Self, SceneError> {
        layout.validate()?;
        let board = layout.board();
        let grasp_offset = Pose::from_position(Vec3::new(0.0, 0.0, -board.peg_height));
        let pegs = layout
            .peg_start_posts
            .iter()
            .enumerate()
            .map(|(id, &post)| Peg { id, state: PegState::OnPost { post }, grasp_offset })
            .collect();
        Ok(Self {
            board,
            pegs,
            tool: Tool {
                pose: Pose::new(layout.tool_start, Rotation::IDENTITY),
                jaw: layout.jaw_max,
                closed: false,
            },
            phase: TaskPhase::LeftToRight,
        })
    }

    pub fn tool_tip(&self) -> Vec3 {
        self.tool.pose.position
    }

    /// Pose of a peg's base frame.
    pub fn peg_pose(&self, peg: &Peg) -> Pose {
        match peg.state {
            PegState::OnPost { post } => {
                let p = self.board.post(post).expect("peg references existing post");
                Pose::from_position(p.position)
            }
            PegState::Held => self.tool.pose.compose(&peg.grasp_offset),
            PegState::Dropped { position } => Pose::from_position(position),
        }
    }

    /// Reference point of a peg (its base).
    pub fn peg_position(&self, peg: &Peg) -> Vec3 {
        self.peg_pose(peg).position
    }

    /// Countersink point on top of the peg, where the gripper takes it.
    pub fn grasp_point(&self, peg: &Peg) -> Vec3 {
        self.peg_pose(peg).transform_point(Vec3::new(0.0, 0.0, self.board.peg_height))
    }

    pub fn held_peg(&self) -> Option<&Peg> {
        self.pegs.iter().find(|p| p.state == PegState::Held)
    }

    pub fn post_occupied(&self, post: usize) -> bool {
        self.pegs.iter().any(|p| p.state == PegState::OnPost { post })
    }

    /// Ideal servo: the tool takes the commanded pose and jaw; a held peg follows.
    pub fn apply_command(&mut self, cmd: &ToolCommand) {
        self.tool.pose = cmd.pose;
        self.tool.jaw = cmd.jaw;
    }

    /// Evaluates the grasp/release heuristic once.
    pub fn update_grasp(&mut self, params: &GraspParams) -> Vec<SceneEvent> {
        let mut events = Vec::new();
        let tip = self.tool_tip();
        if !self.tool.closed && self.tool.jaw < params.jaw_close_threshold {
            self.tool.closed = true;
            if self.held_peg().is_none() {
                let candidate = self
                    .pegs
                    .iter()
                    .filter(|p| p.state != PegState::Held)
                    .map(|p| (p.id, self.grasp_point(p).distance(tip)))
                    .filter(|(_, d)| *d <= params.grasp_radius)
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((id, _)) = candidate {
                    let peg = self.pegs.iter_mut().find(|p| p.id == id).expect("peg exists");
                    peg.state = PegState::Held;
                    events.push(SceneEvent::Grasped { peg: id });
                }
            }
        } else if self.tool.closed && self.tool.jaw > params.jaw_open_threshold {
            self.tool.closed = false;
            if let Some(peg) = self.held_peg().copied() {
                let base = self.peg_position(&peg);
                let post = self
                    .board
                    .posts
                    .iter()
                    .filter(|p| !self.post_occupied(p.id))
                    .map(|p| (p.id, p.position.planar_distance(tip)))
                    .filter(|(_, d)| *d <= self.board.capture_radius)
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(id, _)| id);
                let peg_mut = self.pegs.iter_mut().find(|p| p.id == peg.id).expect("peg exists");
                match post {
                    Some(post) => {
                        peg_mut.state = PegState::OnPost { post };
                        events.push(SceneEvent::PlacedOnPost { peg: peg.id, post });
                    }
                    None => {
                        peg_mut.state = PegState::Dropped { position: base };
                        events.push(SceneEvent::Dropped { peg: peg.id, position: base });
                    }
                }
            }
        }
        events
    }

    fn all_pegs_on(&self, side: Side) -> bool {
        self.pegs.iter().all(|p| match p.state {
            PegState::OnPost { post } => self.board.post(post).map(|q| q.side) == Some(side),
            _ => false,
        })
    }

    /// Advances the phase when its goal is met; true once the task is done.
    pub fn task_complete(&mut self) -> bool {
        if self.phase == TaskPhase::LeftToRight && self.all_pegs_on(Side::Right) {
            self.phase = TaskPhase::RightToLeft;
        } else if self.phase == TaskPhase::RightToLeft && self.all_pegs_on(Side::Left) {
            self.phase = TaskPhase::Done;
        }
        self.phase == TaskPhase::Done
    }

    /// Applies one command, then grasp logic, then phase bookkeeping.
    pub fn step(&mut self, cmd: &ToolCommand, params: &GraspParams) -> Vec<SceneEvent> {
        self.apply_command(cmd);
        let mut events = self.update_grasp(params);
        let before = self.phase;
        self.task_complete();
        if self.phase != before {
            events.push(SceneEvent::PhaseAdvanced { phase: self.phase });
        }
        events
    }
}

/// Largest positional gap between two scenes over the tooltip and every peg.
pub fn scene_divergence(remote: &SceneState, twin: &SceneState) -> Result<f64, SceneError> {
    if remote.board != twin.board || remote.pegs.len() != twin.pegs.len() {
        return Err(SceneError::BoardMismatch);
    }
    let mut d = remote.tool_tip().distance(twin.tool_tip());
    for (a, b) in remote.pegs.iter().zip(&twin.pegs) {
        d = d.max(remote.peg_position(a).distance(twin.peg_position(b)));
    }
    Ok(d)
}
