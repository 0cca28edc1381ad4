//! Time-phased actuation: lock/unlock joints through the six-motor pack,
//! drive the free joints, and keep a replayable history.
//!
//! Joint numbers in scripts, traces and other serialized boundary types are
//! 1-based (joint 1 is proximal); the Rust API on [`Session`] is 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    constant_curvature_solve, forward_kinematics, GroupTargets, LockPattern, LockState, Posture,
    RobotConfig,
};
use crate::statics::{
    solve_statics, solve_with_payload, ExternalLoad, FrictionModel, JointStiffness, LoadDirection,
    StaticsOptions, TendonTensions,
};

pub const DRIVING_MOTORS: usize = 4;
pub const MOTOR_COUNT: usize = DRIVING_MOTORS + 2;
pub const DEFAULT_SWITCH_THRESHOLD_N: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motor {
    /// Driving-tendon channel 1..=4.
    Driving(u8),
    Selector,
    Winder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroswitchSensor {
    pub threshold_n: f64,
    pub closed: bool,
}

impl MicroswitchSensor {
    pub fn new(threshold_n: f64) -> Self {
        Self {
            threshold_n,
            closed: false,
        }
    }

    /// Updates the contact for a lock-tendon tension; returns true on a change.
    pub fn sense(&mut self, tension_n: f64) -> bool {
        let closed = tension_n >= self.threshold_n;
        let changed = closed != self.closed;
        self.closed = closed;
        changed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulleyState {
    pub wound_mm: f64,
    pub switch: MicroswitchSensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuationPack {
    /// Last commanded driving-tendon quantities: group lengths (mm) or tensions (N).
    pub driving: [f64; DRIVING_MOTORS],
    /// Joint (0-based) the selector slider is aligned with.
    pub selector: Option<usize>,
    pub winder_engaged: bool,
    pub pulleys: Vec<PulleyState>,
    /// Lock-tendon travel before it becomes taut (mm).
    pub slack_mm: f64,
    /// Lock-tendon stiffness once taut (N/mm).
    pub tendon_stiffness_n_per_mm: f64,
}

impl ActuationPack {
    pub fn new(n_joints: usize, switch_threshold_n: f64) -> Self {
        Self {
            driving: [0.0; DRIVING_MOTORS],
            selector: None,
            winder_engaged: false,
            pulleys: vec![
                PulleyState {
                    wound_mm: 0.0,
                    switch: MicroswitchSensor::new(switch_threshold_n),
                };
                n_joints
            ],
            slack_mm: 2.0,
            tendon_stiffness_n_per_mm: 1.0,
        }
    }

    pub fn motor_count(&self) -> usize {
        MOTOR_COUNT
    }

    /// No pulley engaged and every switch open.
    pub fn is_idle(&self) -> bool {
        !self.winder_engaged && self.pulleys.iter().all(|p| !p.switch.closed && p.wound_mm == 0.0)
    }

    fn lock_tension(&self, wound_mm: f64) -> f64 {
        self.tendon_stiffness_n_per_mm * (wound_mm - self.slack_mm).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockAction {
    Lock,
    Unlock,
}

/// One device event; joint numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DeviceEvent {
    Select { joint: usize },
    Engage { joint: usize },
    Wind { joint: usize, wound_mm: f64, tension_n: f64 },
    SwitchClosed { joint: usize, tension_n: f64 },
    StateChange { joint: usize, action: LockAction, angle_deg: f64 },
    /// Lock tendon unwound to slack: the switch reopens and the winder disengages.
    Release { joint: usize, switch_open: bool },
    Drive { channels: Vec<u8>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    /// History entry the event belongs to.
    pub entry: usize,
    #[serde(flatten)]
    pub event: DeviceEvent,
    /// 1-based joint whose pulley is engaged after the event.
    pub engaged: Option<usize>,
    pub motors: Vec<Motor>,
}

/// Driving-tendon command for one step. Ideal physics uses the group lengths,
/// static physics the tensions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TendonCommand {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_x_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_y_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensions: Option<TendonTensions>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockRequest {
    /// 1-based joint number.
    pub joint: usize,
}

/// Unlock, actuate, lock. Joint numbers are 1-based.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionStep {
    #[serde(default)]
    pub unlock: Vec<usize>,
    #[serde(default)]
    pub tendon: TendonCommand,
    #[serde(default)]
    pub lock: Vec<LockRequest>,
    /// Overrides the session physics for this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physics: Option<PhysicsMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepScript {
    pub steps: Vec<MotionStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PhysicsMode {
    /// Constant-curvature distribution of commanded group lengths.
    Ideal,
    /// Static equilibrium under commanded tensions.
    Static {
        #[serde(default)]
        friction: FrictionModel,
        #[serde(default)]
        stiffness: JointStiffness,
        #[serde(default)]
        payload: Option<ExternalLoad>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum HistoryAction {
    /// 1-based joint.
    Toggle { joint: usize, action: LockAction },
    Step { step: MotionStep },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub action: HistoryAction,
    /// Joint angles after the action (rad).
    pub angles: Vec<f64>,
    pub lock: LockPattern,
}

/// Everything needed to re-execute a session from its start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub config: RobotConfig,
    pub physics: PhysicsMode,
    pub switch_threshold_n: f64,
    /// Lock-angle quantum (rad); locks capture the exact angle when unset.
    #[serde(default)]
    pub lock_quantum_rad: Option<f64>,
    pub initial_angles: Vec<f64>,
    pub initial_lock: LockPattern,
    pub entries: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    pub physics: PhysicsMode,
    pub switch_threshold_n: f64,
    pub lock_quantum_rad: Option<f64>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            physics: PhysicsMode::Ideal,
            switch_threshold_n: DEFAULT_SWITCH_THRESHOLD_N,
            lock_quantum_rad: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub config: RobotConfig,
    pub lock: LockPattern,
    pub posture: Posture,
    pub pack: ActuationPack,
    pub history: History,
    pub trace: Vec<TraceRecord>,
    /// Solver report of the last successful step.
    pub last_diagnostics: Option<StepDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub solver: String,
    pub iterations: Option<usize>,
    pub max_residual: Option<f64>,
    pub payload_error_rad: Option<f64>,
    pub warnings: Vec<String>,
}

/// Serialized session: history plus the device trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub history: History,
    pub trace: Vec<TraceRecord>,
}

impl Session {
    /// New session, straight and all joints free unless `initial_lock` says otherwise.
    pub fn new(config: RobotConfig, initial_lock: Option<LockPattern>, options: SessionOptions) -> Result<Self> {
        config.validate()?;
        let lock = initial_lock.unwrap_or_else(|| LockPattern::all_free(config.n_joints));
        lock.validate(&config)?;
        if !(options.switch_threshold_n > 0.0) {
            return Err(Error::InvalidInput("switch threshold must be positive".into()));
        }
        if let Some(q) = options.lock_quantum_rad {
            if !(q > 0.0) {
                return Err(Error::InvalidInput("lock quantum must be positive".into()));
            }
        }
        let angles = lock.apply(&vec![0.0; config.n_joints]);
        let posture = forward_kinematics(&angles, &config)?;
        Ok(Self {
            pack: ActuationPack::new(config.n_joints, options.switch_threshold_n),
            history: History {
                config: config.clone(),
                physics: options.physics,
                switch_threshold_n: options.switch_threshold_n,
                lock_quantum_rad: options.lock_quantum_rad,
                initial_angles: angles,
                initial_lock: lock.clone(),
                entries: Vec::new(),
            },
            config,
            lock,
            posture,
            trace: Vec::new(),
            last_diagnostics: None,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.posture.angles
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            history: self.history.clone(),
            trace: self.trace.clone(),
        }
    }

    /// Rebuilds a session by replaying a snapshot's history.
    pub fn from_snapshot(snapshot: &SessionSnapshot) -> Result<Self> {
        let mut s = replay_session(&snapshot.history, &snapshot.history.config, None)?;
        s.trace = snapshot.trace.clone();
        Ok(s)
    }

    fn record(&mut self, event: DeviceEvent, motors: Vec<Motor>) {
        let seq = self.trace.len() as u64;
        let engaged = if self.pack.winder_engaged {
            self.pack.selector.map(|j| j + 1)
        } else {
            None
        };
        self.trace.push(TraceRecord {
            seq,
            entry: self.history.entries.len(),
            event,
            engaged,
            motors,
        });
    }

    /// Locks or unlocks one joint (0-based) through the pack. Returns the
    /// device events; an already satisfied request is a no-op with no events.
    pub fn toggle_lock(&mut self, joint: usize, action: LockAction) -> Result<Vec<TraceRecord>> {
        let start = self.trace.len();
        if self.apply_toggle(joint, action)? {
            self.history.entries.push(HistoryEntry {
                action: HistoryAction::Toggle { joint: joint + 1, action },
                angles: self.posture.angles.clone(),
                lock: self.lock.clone(),
            });
        }
        Ok(self.trace[start..].to_vec())
    }

    fn apply_toggle(&mut self, joint: usize, action: LockAction) -> Result<bool> {
        if joint >= self.config.n_joints {
            return Err(Error::InvalidInput(format!(
                "joint {} does not exist (robot has {})",
                joint + 1,
                self.config.n_joints
            )));
        }
        if self.pack.winder_engaged {
            return Err(Error::SelectorBusy(format!(
                "pulley {} is engaged",
                self.pack.selector.map_or(0, |j| j + 1)
            )));
        }
        let locked = self.lock.is_locked(joint);
        if (action == LockAction::Lock) == locked {
            return Ok(false);
        }
        let n = joint + 1;
        self.pack.selector = Some(joint);
        self.record(DeviceEvent::Select { joint: n }, vec![Motor::Selector]);
        self.pack.winder_engaged = true;
        self.record(DeviceEvent::Engage { joint: n }, vec![Motor::Selector]);

        // wind until the switch trips
        let threshold = self.pack.pulleys[joint].switch.threshold_n;
        let wound = self.pack.slack_mm + threshold / self.pack.tendon_stiffness_n_per_mm;
        let tension = self.pack.lock_tension(wound);
        self.pack.pulleys[joint].wound_mm = wound;
        self.record(
            DeviceEvent::Wind {
                joint: n,
                wound_mm: wound,
                tension_n: tension,
            },
            vec![Motor::Winder],
        );
        if self.pack.pulleys[joint].switch.sense(tension) {
            self.record(DeviceEvent::SwitchClosed { joint: n, tension_n: tension }, vec![]);
        }

        let angle = match action {
            LockAction::Lock => {
                let a = self.quantize(self.posture.angles[joint]);
                self.config.limits.check(Some(joint), a)?;
                self.lock.states[joint] = LockState::Locked(a);
                if a != self.posture.angles[joint] {
                    let mut angles = self.posture.angles.clone();
                    angles[joint] = a;
                    self.posture = forward_kinematics(&angles, &self.config)?;
                }
                a
            }
            LockAction::Unlock => {
                self.lock.states[joint] = LockState::Free;
                self.posture.angles[joint]
            }
        };
        self.record(
            DeviceEvent::StateChange {
                joint: n,
                action,
                angle_deg: angle.to_degrees(),
            },
            vec![],
        );

        // slack release so the lock tendon does not load later motion
        self.pack.pulleys[joint].wound_mm = 0.0;
        self.pack.pulleys[joint].switch.sense(0.0);
        self.pack.winder_engaged = false;
        self.record(
            DeviceEvent::Release {
                joint: n,
                switch_open: !self.pack.pulleys[joint].switch.closed,
            },
            vec![Motor::Winder],
        );
        Ok(true)
    }

    fn quantize(&self, a: f64) -> f64 {
        match self.history.lock_quantum_rad {
            Some(q) => (a / q).round() * q,
            None => a,
        }
    }

    fn validate_step(&self, step: &MotionStep) -> Result<(Vec<usize>, Vec<usize>)> {
        let n = self.config.n_joints;
        let to_index = |j: usize| -> Result<usize> {
            if j == 0 || j > n {
                Err(Error::InvalidStep(format!("joint {j} outside 1..={n}")))
            } else {
                Ok(j - 1)
            }
        };
        let mut unlock = step.unlock.iter().map(|&j| to_index(j)).collect::<Result<Vec<_>>>()?;
        let mut lock = step.lock.iter().map(|r| to_index(r.joint)).collect::<Result<Vec<_>>>()?;
        unlock.sort_unstable();
        lock.sort_unstable();
        if unlock.windows(2).any(|w| w[0] == w[1]) || lock.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidStep("duplicate joint in unlock or lock set".into()));
        }
        if let Some(j) = unlock.iter().find(|&&j| !self.lock.is_locked(j)) {
            return Err(Error::InvalidStep(format!("joint {} is not locked", j + 1)));
        }
        if let Some(j) = lock.iter().find(|&&j| self.lock.is_locked(j) && !unlock.contains(&j)) {
            return Err(Error::InvalidStep(format!("joint {} is already locked", j + 1)));
        }
        match (self.physics_for(step), &step.tendon) {
            (PhysicsMode::Ideal, t) if t.tensions.is_some() => Err(Error::InvalidStep(
                "ideal physics takes group lengths, not tensions".into(),
            )),
            (PhysicsMode::Static { .. }, t) if t.group_x_mm.is_some() || t.group_y_mm.is_some() => {
                Err(Error::InvalidStep("static physics takes tensions, not group lengths".into()))
            }
            _ => Ok((unlock, lock)),
        }
    }

    fn physics_for<'a>(&'a self, step: &'a MotionStep) -> &'a PhysicsMode {
        step.physics.as_ref().unwrap_or(&self.history.physics)
    }

    fn solve(&self, step: &MotionStep) -> Result<(Posture, StepDiagnostics)> {
        let current = &self.posture.angles;
        let command = &step.tendon;
        match self.physics_for(step) {
            PhysicsMode::Ideal => {
                let targets = GroupTargets {
                    group_x_mm: command.group_x_mm,
                    group_y_mm: command.group_y_mm,
                };
                let sol = constant_curvature_solve(&targets, &self.config, &self.lock, current)?;
                let diag = StepDiagnostics {
                    solver: "constant_curvature".into(),
                    iterations: None,
                    max_residual: None,
                    payload_error_rad: None,
                    warnings: sol.warnings.clone(),
                };
                Ok((sol.posture, diag))
            }
            PhysicsMode::Static {
                friction,
                stiffness,
                payload,
            } => {
                let tensions = command.tensions.unwrap_or_default();
                let options = StaticsOptions {
                    stiffness: *stiffness,
                    initial_angles: Some(current.clone()),
                    ..StaticsOptions::default()
                };
                let load = payload.unwrap_or_else(ExternalLoad::none);
                let result = if matches!(load.direction, LoadDirection::PulleyCable { .. }) {
                    solve_with_payload(&self.config, &tensions, &load, &self.lock, friction, &options)?
                } else {
                    solve_statics(&self.config, &tensions, &load, &self.lock, friction, &options)?
                };
                let diag = StepDiagnostics {
                    solver: "statics".into(),
                    iterations: Some(result.iterations),
                    max_residual: Some(result.max_residual()),
                    payload_error_rad: result.payload_error,
                    warnings: Vec::new(),
                };
                Ok((result.posture, diag))
            }
        }
    }

    /// Runs one step atomically: on any failure the lock pattern, posture,
    /// pack, trace and history are left as they were.
    pub fn execute_step(&mut self, step: &MotionStep) -> Result<&Posture> {
        let (unlock, lock) = self.validate_step(step)?;
        let saved = (
            self.lock.clone(),
            self.posture.clone(),
            self.pack.clone(),
            self.trace.len(),
            self.last_diagnostics.clone(),
        );
        match self.run_step(step, &unlock, &lock) {
            Ok(()) => {
                self.history.entries.push(HistoryEntry {
                    action: HistoryAction::Step { step: step.clone() },
                    angles: self.posture.angles.clone(),
                    lock: self.lock.clone(),
                });
                Ok(&self.posture)
            }
            Err(e) => {
                self.lock = saved.0;
                self.posture = saved.1;
                self.pack = saved.2;
                self.trace.truncate(saved.3);
                self.last_diagnostics = saved.4;
                Err(e)
            }
        }
    }

    fn run_step(&mut self, step: &MotionStep, unlock: &[usize], lock: &[usize]) -> Result<()> {
        for &j in unlock {
            self.apply_toggle(j, LockAction::Unlock)?;
        }
        let (posture, diag) = self.solve(step)?;
        let t = &step.tendon;
        let (channels, values): (Vec<u8>, Vec<f64>) = match t.tensions {
            Some(f) => ((1..=4).collect(), f.as_array().to_vec()),
            None => {
                let mut c = Vec::new();
                let mut v = Vec::new();
                if let Some(x) = t.group_x_mm {
                    c.extend([1, 2]);
                    v.extend([x, x]);
                    self.pack.driving[0] = x;
                    self.pack.driving[1] = x;
                }
                if let Some(y) = t.group_y_mm {
                    c.extend([3, 4]);
                    v.extend([y, y]);
                    self.pack.driving[2] = y;
                    self.pack.driving[3] = y;
                }
                (c, v)
            }
        };
        if let Some(f) = t.tensions {
            self.pack.driving = f.as_array();
        }
        let motors = channels.iter().map(|&c| Motor::Driving(c)).collect();
        self.record(DeviceEvent::Drive { channels, values }, motors);
        self.posture = posture;
        self.last_diagnostics = Some(diag);
        for &j in lock.iter().rev() {
            self.apply_toggle(j, LockAction::Lock)?;
        }
        Ok(())
    }

    /// Executes every step in order, stopping at the first failure.
    pub fn run_script(&mut self, script: &StepScript) -> std::result::Result<(), (usize, Error)> {
        for (i, step) in script.steps.iter().enumerate() {
            self.execute_step(step).map_err(|e| (i, e))?;
        }
        Ok(())
    }

    /// Device trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace records serialize") + "\n")
            .collect()
    }
}

/// Re-executes a history against `config`, returning the initial posture and
/// the posture after every entry. Fails with `ConfigMismatch` if the history
/// was recorded for another robot.
pub fn replay(history: &History, config: &RobotConfig) -> Result<Vec<Posture>> {
    let mut postures = Vec::with_capacity(history.entries.len() + 1);
    replay_session(history, config, Some(&mut postures))?;
    Ok(postures)
}

/// Session state after the first `prefix` history entries.
pub fn replay_prefix(history: &History, prefix: usize) -> Result<Session> {
    if prefix > history.entries.len() {
        return Err(Error::InvalidInput(format!(
            "prefix {prefix} exceeds history length {}",
            history.entries.len()
        )));
    }
    let mut h = history.clone();
    h.entries.truncate(prefix);
    replay_session(&h, &history.config, None)
}

/// Configs are the same robot when their serialized forms agree; limits
/// pass through degrees on the wire and may differ in the last bit.
fn same_config(a: &RobotConfig, b: &RobotConfig) -> bool {
    a == b || serde_json::to_value(a).ok() == serde_json::to_value(b).ok()
}

fn replay_session(
    history: &History,
    config: &RobotConfig,
    mut postures: Option<&mut Vec<Posture>>,
) -> Result<Session> {
    if !same_config(config, &history.config) {
        return Err(Error::ConfigMismatch);
    }
    let mut s = Session::new(
        config.clone(),
        Some(history.initial_lock.clone()),
        SessionOptions {
            physics: history.physics.clone(),
            switch_threshold_n: history.switch_threshold_n,
            lock_quantum_rad: history.lock_quantum_rad,
        },
    )?;
    if s.posture.angles != history.initial_angles {
        return Err(Error::InvalidInput("history initial angles do not match its lock pattern".into()));
    }
    if let Some(p) = postures.as_deref_mut() {
        p.push(s.posture.clone());
    }
    for entry in &history.entries {
        match &entry.action {
            HistoryAction::Toggle { joint, action } => {
                if *joint == 0 {
                    return Err(Error::InvalidInput("history joints are numbered from 1".into()));
                }
                s.toggle_lock(joint - 1, *action)?;
            }
            HistoryAction::Step { step } => {
                s.execute_step(step)?;
            }
        }
        if let Some(p) = postures.as_deref_mut() {
            p.push(s.posture.clone());
        }
    }
    Ok(s)
}

/// Ready-made scripts for the default 7-joint spatial robot.
pub mod presets {
    use super::*;
    use crate::kinematics::{group_tendon_length, TendonGroup};

    pub const NAMES: [&str; 3] = ["table2-case1", "table2-case2", "contract-swing-extend"];

    /// Free-joint angle commanded in the second step of both Table II cases (deg).
    pub const TABLE_TWO_FREE_DEG: f64 = -19.43;

    /// Circular obstacle in the X bending plane, given in plane coordinates
    /// `(u, v) = (z, -y)`.
    #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
    pub struct ObstacleDisc {
        pub center_mm: [f64; 2],
        pub radius_mm: f64,
    }

    impl ObstacleDisc {
        /// Smallest distance from the robot backbone to the disc boundary;
        /// negative when the backbone passes through it.
        pub fn clearance(&self, posture: &Posture) -> f64 {
            let pts: Vec<[f64; 2]> = posture.joint_positions().iter().map(|p| [p.z, -p.y]).collect();
            let c = self.center_mm;
            let mut best = f64::INFINITY;
            for w in pts.windows(2) {
                let (a, b) = (w[0], w[1]);
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let t = if len2 > 0.0 {
                    (((c[0] - a[0]) * d[0] + (c[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let q = [a[0] + t * d[0] - c[0], a[1] + t * d[1] - c[1]];
                best = best.min(q[0].hypot(q[1]));
            }
            best - self.radius_mm
        }
    }

    pub fn robot() -> RobotConfig {
        RobotConfig::spatial(7).expect("default spatial robot is valid")
    }

    /// Group-X command putting every joint of `free` (0-based) at `deg`, the
    /// rest at `angles`.
    fn x_command(config: &RobotConfig, angles: &mut [f64], free: &[usize], deg: f64) -> TendonCommand {
        for &j in free {
            angles[j] = deg.to_radians();
        }
        TendonCommand {
            group_x_mm: Some(group_tendon_length(config, angles, TendonGroup::X)),
            ..Default::default()
        }
    }

    fn locks(joints: &[usize]) -> Vec<LockRequest> {
        joints.iter().map(|&joint| LockRequest { joint }).collect()
    }

    /// Table II: bend the X group to 16 deg, lock the listed joints, then
    /// drive the remaining free joints.
    pub fn table_two(case: u8) -> Result<StepScript> {
        let lock_first: &[usize] = match case {
            1 => &[2, 3, 4, 6],
            2 => &[2, 3, 4, 5, 6],
            _ => return Err(Error::InvalidInput(format!("Table II has cases 1 and 2, not {case}"))),
        };
        let cfg = robot();
        let mut angles = vec![0.0; 7];
        let first = x_command(&cfg, &mut angles, &[0, 2, 4, 6], 16.0);
        // Y joints stay at zero; X joints not in the lock set are freed again below
        for j in [1, 3, 5] {
            angles[j] = 0.0;
        }
        let free_x: Vec<usize> = [0, 2, 4, 6].into_iter().filter(|j| !lock_first.contains(&(j + 1))).collect();
        let second = x_command(&cfg, &mut angles, &free_x, TABLE_TWO_FREE_DEG);
        Ok(StepScript {
            steps: vec![
                MotionStep {
                    unlock: vec![],
                    tendon: first,
                    lock: locks(lock_first),
                    physics: None,
                },
                MotionStep {
                    unlock: vec![],
                    tendon: second,
                    lock: vec![],
                    physics: None,
                },
            ],
        })
    }

    /// Obstacle crossed by the straight robot swinging from upright to the target.
    pub fn obstacle() -> ObstacleDisc {
        let a = 22f64.to_radians();
        ObstacleDisc {
            center_mm: [60.0 * a.cos(), 60.0 * a.sin()],
            radius_mm: 6.0,
        }
    }

    /// Lean away from the obstacle, curl the distal X joints, swing the base
    /// joint across with the body contracted, then straighten at the target heading.
    pub fn contract_swing_extend() -> StepScript {
        let cfg = robot();
        let mut angles = vec![0.0; 7];
        let distal = [2, 4, 6];
        let mut steps = vec![MotionStep {
            unlock: vec![],
            tendon: x_command(&cfg, &mut angles, &[], 0.0),
            lock: locks(&[2, 3, 4, 5, 6, 7]),
            physics: None,
        }];
        for deg in [-15.0, -30.0, -45.0] {
            steps.push(MotionStep {
                unlock: vec![],
                tendon: x_command(&cfg, &mut angles, &[0], deg),
                lock: if deg == -45.0 { locks(&[1]) } else { vec![] },
                physics: None,
            });
        }
        for deg in [15.0, 30.0, 45.0] {
            steps.push(MotionStep {
                unlock: if deg == 15.0 { vec![3, 5, 7] } else { vec![] },
                tendon: x_command(&cfg, &mut angles, &distal, deg),
                lock: if deg == 45.0 { locks(&[3, 5, 7]) } else { vec![] },
                physics: None,
            });
        }
        for deg in [-30.0, -15.0, 0.0, 15.0, 30.0, 45.0] {
            steps.push(MotionStep {
                unlock: if deg == -30.0 { vec![1] } else { vec![] },
                tendon: x_command(&cfg, &mut angles, &[0], deg),
                lock: if deg == 45.0 { locks(&[1]) } else { vec![] },
                physics: None,
            });
        }
        for deg in [37.5, 30.0, 22.5, 15.0, 7.5, 0.0] {
            steps.push(MotionStep {
                unlock: if deg == 37.5 { vec![3, 5, 7] } else { vec![] },
                tendon: x_command(&cfg, &mut angles, &distal, deg),
                lock: vec![],
                physics: None,
            });
        }
        StepScript { steps }
    }

    pub fn by_name(name: &str) -> Result<StepScript> {
        match name {
            "table2-case1" => table_two(1),
            "table2-case2" => table_two(2),
            "contract-swing-extend" => Ok(contract_swing_extend()),
            _ => Err(Error::InvalidInput(format!(
                "unknown preset {name:?}; expected one of {}",
                NAMES.join(", ")
            ))),
        }
    }
}
