//! Sequential distal-to-proximal static equilibrium.
//!
//! Every link is treated as a rigid body loaded by the driving tendons at its
//! hole plane, by the wrench transmitted from the link above it and (for the
//! distal link) by the external payload. A free joint settles where the moment
//! about its axis equals the backbone spring moment `K * theta`; a locked joint
//! keeps its angle and absorbs whatever moment arrives.
//!
//! Wrenches are expressed in the frame of the link they act on, with the
//! moment taken about that link's proximal pivot.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    forward_kinematics, JointAxis, JointGeometry, JointLimits, LockPattern, LockState, Posture,
    RobotConfig,
};
use crate::roots::{brent, golden_section, wrap_angle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointStiffness {
    /// Torsional constant of a free joint (N*mm/rad).
    pub k_free: f64,
}

impl Default for JointStiffness {
    fn default() -> Self {
        Self { k_free: 50.0 }
    }
}

/// Tensions (N) at the distal terminations of the four driving tendons.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TendonTensions {
    #[serde(rename = "f1_n", default)]
    pub f1: f64,
    #[serde(rename = "f2_n", default)]
    pub f2: f64,
    #[serde(rename = "f3_n", default)]
    pub f3: f64,
    #[serde(rename = "f4_n", default)]
    pub f4: f64,
}

impl TendonTensions {
    pub fn new(f1: f64, f2: f64, f3: f64, f4: f64) -> Self {
        Self { f1, f2, f3, f4 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.f1, self.f2, self.f3, self.f4]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.f1 * s, self.f2 * s, self.f3 * s, self.f4 * s)
    }

    fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidInput(format!(
                "tendon tensions must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadDirection {
    /// Unit vector in the distal link frame.
    FixedInLocalFrame(Vector3<f64>),
    /// Unit vector in the base frame.
    FixedInBaseFrame(Vector3<f64>),
    /// Cable over a fixed pulley; the force points from the attach point to `anchor`
    /// (base frame, mm). Solved with [`solve_with_payload`].
    PulleyCable { anchor: Vector3<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalLoad {
    /// Force magnitude (N).
    pub magnitude: f64,
    /// Attach point in the distal link frame (mm); defaults to the tip.
    #[serde(default)]
    pub attach_point: Option<Vector3<f64>>,
    pub direction: LoadDirection,
}

impl ExternalLoad {
    pub fn none() -> Self {
        Self {
            magnitude: 0.0,
            attach_point: None,
            direction: LoadDirection::FixedInLocalFrame(Vector3::z()),
        }
    }

    pub fn in_base_frame(magnitude: f64, direction: Vector3<f64>) -> Self {
        Self {
            magnitude,
            attach_point: None,
            direction: LoadDirection::FixedInBaseFrame(direction),
        }
    }

    pub fn in_local_frame(magnitude: f64, direction: Vector3<f64>) -> Self {
        Self {
            magnitude,
            attach_point: None,
            direction: LoadDirection::FixedInLocalFrame(direction),
        }
    }

    pub fn pulley(magnitude: f64, anchor: Vector3<f64>) -> Self {
        Self {
            magnitude,
            attach_point: None,
            direction: LoadDirection::PulleyCable { anchor },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "load magnitude must be non-negative, got {}",
                self.magnitude
            )));
        }
        let unit = match self.direction {
            LoadDirection::FixedInLocalFrame(u) | LoadDirection::FixedInBaseFrame(u) => Some(u),
            LoadDirection::PulleyCable { .. } => None,
        };
        if let Some(u) = unit {
            if (u.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "load direction must be a unit vector (|u| = {})",
                    u.norm()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionPolicy {
    /// Wrap angle taken as `|theta|`.
    #[default]
    Magnitude,
    /// Wrap angle taken with its sign.
    Signed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrictionModel {
    pub mu: f64,
    #[serde(default)]
    pub policy: FrictionPolicy,
}

impl FrictionModel {
    pub fn frictionless() -> Self {
        Self::default()
    }

    pub fn new(mu: f64) -> Self {
        Self {
            mu,
            policy: FrictionPolicy::Magnitude,
        }
    }

    fn wrap(&self, theta: f64) -> f64 {
        match self.policy {
            FrictionPolicy::Magnitude => theta.abs(),
            FrictionPolicy::Signed => theta,
        }
    }
}

/// Capstan law: tension one joint further from the termination.
pub fn apply_friction(tension_downstream: f64, theta: f64, model: &FrictionModel) -> f64 {
    tension_downstream * (model.mu * model.wrap(theta)).exp()
}

/// Force and moment acting on a link, in that link's frame, moment about its proximal pivot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointWrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl JointWrench {
    pub fn zero() -> Self {
        Self {
            force: Vector3::zeros(),
            moment: Vector3::zeros(),
        }
    }

    /// The same wrench seen from the parent link, i.e. rotated by the joint.
    pub fn to_parent(&self, axis: JointAxis, theta: f64) -> Self {
        let r = axis.rotation(theta);
        Self {
            force: r * self.force,
            moment: r * self.moment,
        }
    }
}

/// A point force in a link frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLoad {
    pub point: Vector3<f64>,
    pub force: Vector3<f64>,
}

/// Per-joint quantities shared by the distal and intermediate balances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointContext {
    pub index: usize,
    pub geometry: JointGeometry,
    pub axis: JointAxis,
    pub limits: JointLimits,
    pub stiffness: JointStiffness,
    pub lock: LockState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistalJoint {
    pub ctx: JointContext,
    /// Tendon tensions in the segment crossing this joint (N).
    pub tensions: [f64; 4],
    pub load: Option<PointLoad>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntermediateJoint {
    pub ctx: JointContext,
    /// Tensions in the segment crossing this joint.
    pub tensions_below: [f64; 4],
    /// Tensions in the segment crossing the next joint up.
    pub tensions_above: [f64; 4],
    pub above_axis: JointAxis,
    pub above_theta: f64,
    /// Wrench from the links above, already expressed in this link's frame
    /// with the moment about the next pivot up.
    pub downstream: JointWrench,
    pub load: Option<PointLoad>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointBalance {
    pub theta: f64,
    /// Total wrench on the link at `theta`.
    pub wrench: JointWrench,
    /// `m_axis - K * theta` (N*mm); zero by construction for a solved free joint
    /// up to the root tolerance, the lock reaction for a locked joint.
    pub residual: f64,
}

struct LinkLoads<'a> {
    geometry: &'a JointGeometry,
    axis: JointAxis,
    tensions_below: [f64; 4],
    above: Option<([f64; 4], JointAxis, f64, JointWrench)>,
    load: Option<PointLoad>,
}

impl LinkLoads<'_> {
    fn wrench(&self, theta: f64) -> JointWrench {
        let g = self.geometry;
        let pitch = g.pitch();
        let back = self.axis.rotation(theta).inverse();
        let above_rot = self.above.map(|(_, ax, th, _)| ax.rotation(th));
        let mut force = Vector3::zeros();
        let mut moment = Vector3::zeros();
        for i in 0..4 {
            let (hx, hy) = g.hole_offset(i);
            let hole = Vector3::new(hx, hy, g.d1);
            let below = back * Vector3::new(hx, hy, -g.d3);
            let mut f = pull(self.tensions_below[i], &hole, &below);
            if let (Some((t_above, ..)), Some(rot)) = (self.above, above_rot) {
                let up = Vector3::new(0.0, 0.0, pitch) + rot * hole;
                f += pull(t_above[i], &hole, &up);
            }
            force += f;
            moment += hole.cross(&f);
        }
        if let Some((_, _, _, down)) = self.above {
            let e = Vector3::new(0.0, 0.0, pitch);
            force += down.force;
            moment += down.moment + e.cross(&down.force);
        }
        if let Some(l) = self.load {
            force += l.force;
            moment += l.point.cross(&l.force);
        }
        JointWrench { force, moment }
    }
}

fn pull(tension: f64, from: &Vector3<f64>, to: &Vector3<f64>) -> Vector3<f64> {
    if tension == 0.0 {
        return Vector3::zeros();
    }
    let d = to - from;
    let n = d.norm();
    if n == 0.0 {
        Vector3::zeros()
    } else {
        d * (tension / n)
    }
}

const ROOT_XTOL: f64 = 1e-15;
const ROOT_FTOL: f64 = 1e-13;

fn balance(ctx: &JointContext, loads: &LinkLoads<'_>) -> Result<JointBalance> {
    let axis = ctx.axis.unit();
    let k = ctx.stiffness.k_free;
    let theta = match ctx.lock {
        LockState::Locked(a) => a,
        LockState::Free => {
            let g = |t: f64| loads.wrench(t).moment.dot(&axis) - k * t;
            let JointLimits { min, max } = ctx.limits;
            let (g_lo, g_hi) = (g(min), g(max));
            if g_lo >= 0.0 && g_hi <= 0.0 {
                brent(g, min, max, ROOT_XTOL, ROOT_FTOL, 300)?
            } else {
                // the root lies outside the limits; report where it is if it can be bracketed
                let wide = 0.49 * std::f64::consts::PI;
                let guess = if g_lo < 0.0 {
                    brent(g, -wide, min, ROOT_XTOL, ROOT_FTOL, 300).unwrap_or(min)
                } else {
                    brent(g, max, wide, ROOT_XTOL, ROOT_FTOL, 300).unwrap_or(max)
                };
                return Err(Error::LimitViolation {
                    joint: ctx.index,
                    angle_rad: guess,
                });
            }
        }
    };
    let wrench = loads.wrench(theta);
    Ok(JointBalance {
        theta,
        wrench,
        residual: wrench.moment.dot(&axis) - k * theta,
    })
}

/// Balance of the distal link: tendon terminations plus the payload.
pub fn distal_joint_balance(joint: &DistalJoint) -> Result<JointBalance> {
    let loads = LinkLoads {
        geometry: &joint.ctx.geometry,
        axis: joint.ctx.axis,
        tensions_below: joint.tensions,
        above: None,
        load: joint.load,
    };
    balance(&joint.ctx, &loads)
}

/// Balance of an intermediate link: hole contact forces from both adjacent
/// tendon segments plus the wrench handed down from above.
pub fn intermediate_joint_balance(joint: &IntermediateJoint) -> Result<JointBalance> {
    let loads = LinkLoads {
        geometry: &joint.ctx.geometry,
        axis: joint.ctx.axis,
        tensions_below: joint.tensions_below,
        above: Some((
            joint.tensions_above,
            joint.above_axis,
            joint.above_theta,
            joint.downstream,
        )),
        load: joint.load,
    };
    balance(&joint.ctx, &loads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticsOptions {
    pub stiffness: JointStiffness,
    /// Relaxation factor applied to each outer angle update.
    pub damping: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the largest angle update (rad).
    pub angle_tol: f64,
    /// Convergence threshold on the per-joint torque residual (N*mm).
    pub residual_tol: f64,
    /// Warm start; locked joints are overridden by the lock pattern.
    #[serde(default)]
    pub initial_angles: Option<Vec<f64>>,
}

impl Default for StaticsOptions {
    fn default() -> Self {
        Self {
            stiffness: JointStiffness::default(),
            damping: 0.5,
            max_iterations: 10_000,
            angle_tol: 1e-9,
            residual_tol: 1e-8,
            initial_angles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub posture: Posture,
    /// Wrench on each link in its own frame.
    pub wrenches: Vec<JointWrench>,
    /// Torque-balance residual per joint; locked joints report zero.
    pub residuals: Vec<f64>,
    /// Moment carried by each lock (N*mm), zero for free joints.
    pub lock_moments: Vec<f64>,
    pub iterations: usize,
    /// Steady payload direction in the X-group bending plane (rad), pulley mode only.
    pub payload_direction: Option<f64>,
    /// Final direction mismatch E (rad), pulley mode only.
    pub payload_error: Option<f64>,
}

impl EquilibriumResult {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

struct Problem<'a> {
    config: &'a RobotConfig,
    tensions: [f64; 4],
    load: &'a ExternalLoad,
    lock: &'a LockPattern,
    friction: &'a FrictionModel,
    stiffness: JointStiffness,
}

struct Sweep {
    angles: Vec<f64>,
    wrenches: Vec<JointWrench>,
    residuals: Vec<f64>,
}

impl Problem<'_> {
    fn ctx(&self, j: usize) -> JointContext {
        JointContext {
            index: j,
            geometry: self.config.geometry,
            axis: self.config.axes[j],
            limits: self.config.limits,
            stiffness: self.stiffness,
            lock: self.lock.states[j],
        }
    }

    /// Payload in the distal link frame given the posture `angles`.
    fn distal_load(&self, angles: &[f64]) -> Option<PointLoad> {
        if self.load.magnitude == 0.0 {
            return None;
        }
        let point = self
            .load
            .attach_point
            .unwrap_or_else(|| Vector3::new(0.0, 0.0, self.config.geometry.pitch()));
        let force = match self.load.direction {
            LoadDirection::FixedInLocalFrame(u) => u * self.load.magnitude,
            LoadDirection::FixedInBaseFrame(u) => {
                let orientation = angles
                    .iter()
                    .zip(&self.config.axes)
                    .fold(UnitQuaternion::identity(), |q, (&a, ax)| q * ax.rotation(a));
                orientation.inverse() * (u * self.load.magnitude)
            }
            LoadDirection::PulleyCable { .. } => unreachable!("pulley loads are resolved by the caller"),
        };
        Some(PointLoad { point, force })
    }

    /// One distal-to-proximal pass. With `solve` every free joint is placed at
    /// its local balance given the already-processed joints above it; otherwise
    /// `iterate` is evaluated as is.
    fn sweep(&self, iterate: &[f64], solve: bool) -> Result<Sweep> {
        let n = self.config.n_joints;
        let mut angles = iterate.to_vec();
        let mut wrenches = vec![JointWrench::zero(); n];
        let mut residuals = vec![0.0; n];
        let load = self.distal_load(iterate);
        let mut tension = self.tensions;
        let mut above: Option<([f64; 4], JointAxis, f64, JointWrench)> = None;

        for j in (0..n).rev() {
            let mut ctx = self.ctx(j);
            if !solve {
                ctx.lock = LockState::Locked(iterate[j]);
            }
            if j + 1 < n {
                for t in tension.iter_mut() {
                    *t = apply_friction(*t, angles[j + 1], self.friction);
                }
            }
            let out = match above {
                None => distal_joint_balance(&DistalJoint {
                    ctx,
                    tensions: tension,
                    load,
                })?,
                Some((t_above, ax, th, down)) => intermediate_joint_balance(&IntermediateJoint {
                    ctx,
                    tensions_below: tension,
                    tensions_above: t_above,
                    above_axis: ax,
                    above_theta: th,
                    downstream: down,
                    load: None,
                })?,
            };
            angles[j] = out.theta;
            wrenches[j] = out.wrench;
            residuals[j] = out.residual;
            above = Some((
                tension,
                ctx.axis,
                out.theta,
                out.wrench.to_parent(ctx.axis, out.theta),
            ));
        }
        Ok(Sweep {
            angles,
            wrenches,
            residuals,
        })
    }
}

fn validate_common(
    config: &RobotConfig,
    tensions: &TendonTensions,
    load: &ExternalLoad,
    lock: &LockPattern,
    friction: &FrictionModel,
    options: &StaticsOptions,
) -> Result<()> {
    config.validate()?;
    if let Some(l) = config.link_length {
        if (l - config.geometry.pitch()).abs() > 1e-12 {
            return Err(Error::InvalidConfig(
                "statics needs the link pitch to equal d1 + d3".into(),
            ));
        }
    }
    lock.validate(config)?;
    tensions.validate()?;
    load.validate()?;
    if !(friction.mu.is_finite() && friction.mu >= 0.0) {
        return Err(Error::InvalidInput(format!("friction coefficient {} < 0", friction.mu)));
    }
    if !(options.stiffness.k_free > 0.0) {
        return Err(Error::InvalidInput("k_free must be positive".into()));
    }
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::InvalidInput("damping must lie in (0, 1]".into()));
    }
    Ok(())
}

/// Static equilibrium for tendon tensions and a payload with a fixed direction.
pub fn solve_statics(
    config: &RobotConfig,
    tensions: &TendonTensions,
    load: &ExternalLoad,
    lock: &LockPattern,
    friction: &FrictionModel,
    options: &StaticsOptions,
) -> Result<EquilibriumResult> {
    validate_common(config, tensions, load, lock, friction, options)?;
    if matches!(load.direction, LoadDirection::PulleyCable { .. }) && load.magnitude > 0.0 {
        return Err(Error::InvalidInput(
            "pulley-cable payloads are solved with solve_with_payload".into(),
        ));
    }
    let problem = Problem {
        config,
        tensions: tensions.as_array(),
        load,
        lock,
        friction,
        stiffness: options.stiffness,
    };
    let n = config.n_joints;
    let start = match &options.initial_angles {
        Some(a) if a.len() == n => a.clone(),
        Some(a) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: a.len(),
            })
        }
        None => vec![0.0; n],
    };
    let mut angles = lock.apply(&start);
    let mut last_delta = f64::INFINITY;

    for iteration in 0..=options.max_iterations {
        let eval = problem.sweep(&angles, false)?;
        let residuals: Vec<f64> = (0..n)
            .map(|j| if lock.is_locked(j) { 0.0 } else { eval.residuals[j] })
            .collect();
        let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if last_delta <= options.angle_tol && max_residual <= options.residual_tol {
            let lock_moments = (0..n)
                .map(|j| if lock.is_locked(j) { eval.residuals[j] } else { 0.0 })
                .collect();
            return Ok(EquilibriumResult {
                posture: forward_kinematics(&angles, config)?,
                wrenches: eval.wrenches,
                residuals,
                lock_moments,
                iterations: iteration,
                payload_direction: None,
                payload_error: None,
            });
        }
        if iteration == options.max_iterations {
            return Err(Error::MaxIterationsExceeded {
                iterations: iteration,
                max_residual,
                residuals,
            });
        }
        let target = problem.sweep(&angles, true)?.angles;
        last_delta = 0.0;
        for j in lock.free_joints() {
            let step = target[j] - angles[j];
            last_delta = last_delta.max(step.abs());
            angles[j] += options.damping * step;
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Base-frame unit vector in the X-group bending plane at angle `alpha`
/// measured from the base axis toward `-y`.
pub fn bending_plane_direction(alpha: f64) -> Vector3<f64> {
    Vector3::new(0.0, -alpha.sin(), alpha.cos())
}

/// Angle of `v` in the X-group bending plane (inverse of [`bending_plane_direction`]).
pub fn bending_plane_angle(v: &Vector3<f64>) -> f64 {
    (-v.y).atan2(v.z)
}

/// Convergence threshold on the payload direction mismatch (rad).
pub const PAYLOAD_DIRECTION_TOL: f64 = 1e-6;

/// Equilibrium under a payload hanging from a cable over a fixed pulley.
///
/// The force direction is unknown a priori: an assumed direction is applied as a
/// fixed base-frame load, the posture is solved, and the mismatch
/// `E = |assumed - (anchor - attach point)|` is minimised over the direction by
/// golden-section search.
pub fn solve_with_payload(
    config: &RobotConfig,
    tensions: &TendonTensions,
    payload: &ExternalLoad,
    lock: &LockPattern,
    friction: &FrictionModel,
    options: &StaticsOptions,
) -> Result<EquilibriumResult> {
    let LoadDirection::PulleyCable { anchor } = payload.direction else {
        return solve_statics(config, tensions, payload, lock, friction, options);
    };
    validate_common(config, tensions, payload, lock, friction, options)?;
    if payload.magnitude == 0.0 {
        return solve_statics(config, tensions, &ExternalLoad::none(), lock, friction, options);
    }

    let attach = payload
        .attach_point
        .unwrap_or_else(|| Vector3::new(0.0, 0.0, config.geometry.pitch()));
    let implied = |res: &EquilibriumResult| -> Result<f64> {
        let pitch_frame = res.posture.transforms.last().expect("n_joints >= 1");
        // transforms sit at the distal pivot; the attach point is given from the proximal one
        let tip_frame_origin = pitch_frame.translation.vector
            - pitch_frame.rotation * Vector3::new(0.0, 0.0, config.geometry.pitch());
        let p = tip_frame_origin + pitch_frame.rotation * attach;
        let d = anchor - p;
        if Vector3::new(0.0, d.y, d.z).norm() < 1e-9 {
            return Err(Error::Degenerate("attach point coincides with the pulley anchor".into()));
        }
        Ok(bending_plane_angle(&d))
    };

    let unloaded = solve_statics(config, tensions, &ExternalLoad::none(), lock, friction, options)?;
    let centre = implied(&unloaded)?;

    let mut warm = unloaded.posture.angles.clone();
    let mut failure: Option<Error> = None;
    let mut evaluate = |alpha: f64| -> f64 {
        let load = ExternalLoad {
            magnitude: payload.magnitude,
            attach_point: payload.attach_point,
            direction: LoadDirection::FixedInBaseFrame(bending_plane_direction(alpha)),
        };
        let opts = StaticsOptions {
            initial_angles: Some(warm.clone()),
            ..options.clone()
        };
        match solve_statics(config, tensions, &load, lock, friction, &opts)
            .and_then(|r| implied(&r).map(|a| (r, a)))
        {
            Ok((r, a)) => {
                warm = r.posture.angles;
                wrap_angle(alpha - a).abs()
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let pi = std::f64::consts::PI;
    let (best, best_err) = golden_section(&mut evaluate, centre - pi, centre + pi, 1e-12, 200);
    if let Some(e) = failure.filter(|_| !best_err.is_finite()) {
        return Err(e);
    }

    let load = ExternalLoad {
        magnitude: payload.magnitude,
        attach_point: payload.attach_point,
        direction: LoadDirection::FixedInBaseFrame(bending_plane_direction(best)),
    };
    let mut result = solve_statics(config, tensions, &load, lock, friction, options)?;
    let err = wrap_angle(best - implied(&result)?).abs();
    if err > PAYLOAD_DIRECTION_TOL {
        return Err(Error::NoConvergence {
            best_direction: wrap_angle(best),
            best_error: err,
        });
    }
    result.payload_direction = Some(wrap_angle(best));
    result.payload_error = Some(err);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctx(lock: LockState) -> JointContext {
        JointContext {
            index: 0,
            geometry: JointGeometry::default(),
            axis: JointAxis::X,
            limits: JointLimits::default(),
            stiffness: JointStiffness::default(),
            lock,
        }
    }

    #[test]
    fn unloaded_distal_joint_stays_straight() {
        let b = distal_joint_balance(&DistalJoint {
            ctx: ctx(LockState::Free),
            tensions: [0.0; 4],
            load: None,
        })
        .unwrap();
        assert_eq!(b.theta, 0.0);
        assert_eq!(b.wrench, JointWrench::zero());
    }

    #[test]
    fn antagonistic_pair_cancels() {
        let b = distal_joint_balance(&DistalJoint {
            ctx: ctx(LockState::Free),
            tensions: [1.3, 1.3, 0.0, 0.0],
            load: None,
        })
        .unwrap();
        assert!(b.theta.abs() < 1e-14, "{}", b.theta);
    }

    #[test]
    fn locked_distal_joint_keeps_angle() {
        let a = 16f64.to_radians();
        let b = distal_joint_balance(&DistalJoint {
            ctx: ctx(LockState::Locked(a)),
            tensions: [0.0, 2.0, 0.0, 0.0],
            load: None,
        })
        .unwrap();
        assert_eq!(b.theta, a);
        assert!(b.wrench.moment.x != 0.0);
    }

    #[test]
    fn straight_intermediate_has_no_contact_force() {
        let down = JointWrench {
            force: Vector3::new(0.1, -0.2, -3.0),
            moment: Vector3::new(0.0, 0.0, 0.0),
        };
        let t = [0.5, 1.0, 0.25, 0.75];
        let b = intermediate_joint_balance(&IntermediateJoint {
            ctx: ctx(LockState::Locked(0.0)),
            tensions_below: t,
            tensions_above: t,
            above_axis: JointAxis::Y,
            above_theta: 0.0,
            downstream: down,
            load: None,
        })
        .unwrap();
        assert_relative_eq!(b.wrench.force, down.force, epsilon = 1e-14);
    }

    #[test]
    fn friction_identity_and_composition() {
        assert_eq!(apply_friction(2.0, 0.4, &FrictionModel::frictionless()), 2.0);
        let m = FrictionModel::new(0.085);
        let chained = [0.1, -0.2, 0.3]
            .iter()
            .fold(1.0, |t, &th| apply_friction(t, th, &m));
        assert_relative_eq!(chained, (0.085f64 * 0.6).exp(), epsilon = 1e-15);
        let signed = FrictionModel {
            mu: 0.085,
            policy: FrictionPolicy::Signed,
        };
        assert_relative_eq!(apply_friction(1.0, -0.2, &signed), (-0.017f64).exp());
    }

    #[test]
    fn pulley_load_rejected_by_plain_solver() {
        let cfg = RobotConfig::planar(2).unwrap();
        let r = solve_statics(
            &cfg,
            &TendonTensions::default(),
            &ExternalLoad::pulley(0.1, Vector3::new(0.0, -50.0, 20.0)),
            &LockPattern::all_free(2),
            &FrictionModel::default(),
            &StaticsOptions::default(),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn excessive_tension_is_limit_violation() {
        let cfg = RobotConfig::planar(2).unwrap();
        let r = solve_statics(
            &cfg,
            &TendonTensions::new(0.0, 40.0, 0.0, 0.0),
            &ExternalLoad::none(),
            &LockPattern::all_free(2),
            &FrictionModel::default(),
            &StaticsOptions::default(),
        );
        assert!(matches!(r, Err(Error::LimitViolation { .. })), "{r:?}");
    }

    #[test]
    fn iteration_cap_reports_residuals() {
        let cfg = RobotConfig::planar(3).unwrap();
        let opts = StaticsOptions {
            max_iterations: 2,
            ..Default::default()
        };
        let r = solve_statics(
            &cfg,
            &TendonTensions::new(0.0, 1.0, 0.0, 0.0),
            &ExternalLoad::in_base_frame(0.05, Vector3::new(0.0, 1.0, 0.0)),
            &LockPattern::all_free(3),
            &FrictionModel::new(0.085),
            &opts,
        );
        match r {
            Err(Error::MaxIterationsExceeded { residuals, .. }) => assert_eq!(residuals.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_tension_rejected() {
        let cfg = RobotConfig::planar(1).unwrap();
        let r = solve_statics(
            &cfg,
            &TendonTensions::new(-1.0, 0.0, 0.0, 0.0),
            &ExternalLoad::none(),
            &LockPattern::all_free(1),
            &FrictionModel::default(),
            &StaticsOptions::default(),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
