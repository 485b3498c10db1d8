//! Synthetic operator: plans a peg transfer from what it sees and streams
//! constant-speed servo commands toward each waypoint.

use serde::{Deserialize, Serialize};

use crate::controller::ToolCommand;
use crate::geometry::{interpolate_pose, Pose, Vec3};
use crate::scene::{PegState, SceneState, Side, TaskPhase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorParams {
    /// Tooltip speed, m/s.
    pub max_speed: f64,
    pub waypoint_tolerance: f64,
    /// Idle time after an input lock is released before moving again, s.
    pub reacquisition_delay: f64,
    /// Time spent holding still while the jaw opens or closes, s.
    pub jaw_action_time: f64,
    /// Clearance above a grasp or place point for approach and lift, m.
    pub hover_height: f64,
    pub jaw_open: f64,
    pub jaw_closed: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        Self {
            max_speed: 0.02,
            waypoint_tolerance: 1e-4,
            reacquisition_delay: 0.5,
            jaw_action_time: 0.3,
            hover_height: 0.02,
            jaw_open: 0.8,
            jaw_closed: 0.0,
        }
    }
}

impl OperatorParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_speed > 0.0) {
            return Err("max_speed must be positive".into());
        }
        if !(self.reacquisition_delay >= 0.0) || !(self.jaw_action_time >= 0.0) {
            return Err("reacquisition_delay and jaw_action_time must be >= 0".into());
        }
        if !(self.waypoint_tolerance >= 0.0) || !(self.hover_height >= 0.0) {
            return Err("waypoint_tolerance and hover_height must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JawAction {
    Close,
    Open,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub pose: Pose,
    pub jaw: JawAction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorPlan {
    pub waypoints: Vec<Waypoint>,
}

impl OperatorPlan {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

/// Where a peg is, as far as the planner is concerned.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Post(usize),
    Held,
    Loose(Vec3),
}

/// Plans the remaining transfers for the observed scene, covering every phase
/// still to do. Held pegs are placed first, then dropped pegs are regrasped.
pub fn plan_peg_transfer(scene: &SceneState, params: &OperatorParams) -> OperatorPlan {
    let mut slots: Vec<(usize, Slot)> = scene
        .pegs
        .iter()
        .map(|p| {
            let slot = match p.state {
                PegState::OnPost { post } => Slot::Post(post),
                PegState::Held => Slot::Held,
                PegState::Dropped { position } => Slot::Loose(position),
            };
            (p.id, slot)
        })
        .collect();
    let board = &scene.board;
    let lift = Vec3::new(0.0, 0.0, params.hover_height);
    let tip_over = |base: Vec3| base + Vec3::new(0.0, 0.0, board.peg_height);
    let side_of = |slot: &Slot| match slot {
        Slot::Post(id) => board.post(*id).map(|p| p.side),
        _ => None,
    };
    let orientation = scene.tool.pose.orientation;
    let wp = |position: Vec3, jaw: JawAction| Waypoint { pose: Pose::new(position, orientation), jaw };

    let mut waypoints = Vec::new();
    let phases: &[TaskPhase] = match scene.phase {
        TaskPhase::LeftToRight => &[TaskPhase::LeftToRight, TaskPhase::RightToLeft],
        TaskPhase::RightToLeft => &[TaskPhase::RightToLeft],
        TaskPhase::Done => &[],
    };
    for phase in phases {
        let target = phase.target_side().expect("phase with a target");
        // Held first, then loose, then pegs on the wrong side, by id.
        let mut order: Vec<usize> = (0..slots.len()).collect();
        order.sort_by_key(|&i| match slots[i].1 {
            Slot::Held => (0, slots[i].0),
            Slot::Loose(_) => (1, slots[i].0),
            Slot::Post(_) => (2, slots[i].0),
        });
        for i in order {
            let (_, slot) = slots[i];
            if side_of(&slot) == Some(target) {
                continue;
            }
            let free_post = |slots: &[(usize, Slot)], want: Side, row_hint: Option<f64>| {
                let mut candidates: Vec<_> = board
                    .posts_on(want)
                    .filter(|p| !slots.iter().any(|(_, s)| *s == Slot::Post(p.id)))
                    .collect();
                // Prefer the post in the same row, then the lowest id.
                candidates.sort_by(|a, b| {
                    let da = row_hint.map_or(0.0, |y| (a.position.y - y).abs());
                    let db = row_hint.map_or(0.0, |y| (b.position.y - y).abs());
                    da.total_cmp(&db).then(a.id.cmp(&b.id))
                });
                candidates.first().map(|p| p.id)
            };
            if slot != Slot::Held {
                let base = match slot {
                    Slot::Post(id) => board.post(id).expect("post exists").position,
                    Slot::Loose(p) => p,
                    Slot::Held => unreachable!(),
                };
                let g = tip_over(base);
                waypoints.push(wp(g + lift, JawAction::None));
                waypoints.push(wp(g, JawAction::None));
                waypoints.push(wp(g, JawAction::Close));
                waypoints.push(wp(g + lift, JawAction::None));
            }
            let row = match slot {
                Slot::Post(id) => board.post(id).map(|p| p.position.y),
                Slot::Loose(p) => Some(p.y),
                Slot::Held => Some(scene.tool_tip().y),
            };
            let Some(dest) = free_post(&slots, target, row) else {
                continue;
            };
            let d = tip_over(board.post(dest).expect("post exists").position);
            waypoints.push(wp(d + lift, JawAction::None));
            waypoints.push(wp(d, JawAction::None));
            waypoints.push(wp(d, JawAction::Open));
            waypoints.push(wp(d + lift, JawAction::None));
            slots[i].1 = Slot::Post(dest);
        }
    }
    OperatorPlan { waypoints }
}

/// Stateful operator model advanced once per tick.
#[derive(Debug, Clone)]
pub struct Operator {
    params: OperatorParams,
    dt: f64,
    plan: OperatorPlan,
    next: usize,
    pose: Option<Pose>,
    jaw: f64,
    action_ticks: u64,
    was_locked: bool,
    idle_until: Option<f64>,
    emitted: u64,
}

impl Operator {
    pub fn new(params: OperatorParams, tick_rate: f64) -> Self {
        Self {
            params,
            dt: 1.0 / tick_rate,
            plan: OperatorPlan::default(),
            next: 0,
            pose: None,
            jaw: params.jaw_open,
            action_ticks: 0,
            was_locked: false,
            idle_until: None,
            emitted: 0,
        }
    }

    pub fn params(&self) -> &OperatorParams {
        &self.params
    }

    /// Commands emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Position step per tick at full speed.
    pub fn command_quantum(&self) -> f64 {
        self.params.max_speed * self.dt
    }

    pub fn step(&mut self, observed: &SceneState, locked: bool, now: f64) -> Option<ToolCommand> {
        if locked {
            self.was_locked = true;
            return None;
        }
        if self.was_locked {
            self.was_locked = false;
            self.idle_until = Some(now + self.params.reacquisition_delay);
        }
        if let Some(until) = self.idle_until {
            // Tick times are k*dt; tolerate rounding in the sum.
            if now < until - 1e-9 {
                return None;
            }
            self.idle_until = None;
        }
        let mut pose = *self.pose.get_or_insert_with(|| {
            self.jaw = observed.tool.jaw;
            observed.tool.pose
        });
        if self.next >= self.plan.len() {
            if observed.phase == TaskPhase::Done {
                return None;
            }
            self.plan = plan_peg_transfer(observed, &self.params);
            self.next = 0;
            self.action_ticks = 0;
            if self.plan.is_empty() {
                return None;
            }
        }
        let wp = self.plan.waypoints[self.next];
        match wp.jaw {
            JawAction::Close | JawAction::Open => {
                self.jaw = if wp.jaw == JawAction::Close { self.params.jaw_closed } else { self.params.jaw_open };
                self.action_ticks += 1;
                if self.action_ticks as f64 * self.dt >= self.params.jaw_action_time - 1e-9 {
                    self.action_ticks = 0;
                    self.next += 1;
                }
            }
            JawAction::None => {
                let step = self.params.max_speed * self.dt;
                let dist = pose.position.distance(wp.pose.position);
                pose = if dist <= step {
                    wp.pose
                } else {
                    interpolate_pose(&pose, &wp.pose, step / dist).expect("fraction in range")
                };
                if pose.position.distance(wp.pose.position) <= self.params.waypoint_tolerance {
                    self.next += 1;
                }
            }
        }
        self.pose = Some(pose);
        self.emitted += 1;
        Some(ToolCommand::new(now, pose, self.jaw))
    }
}

/// Free-function form of [`Operator::step`].
pub fn operator_step(
    operator: &mut Operator,
    observed: &SceneState,
    locked: bool,
    now: f64,
) -> Option<ToolCommand> {
    operator.step(observed, locked, now)
}
