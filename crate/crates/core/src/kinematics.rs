//! Lockable-joint geometry, tendon-length maps and forward kinematics.
//!
//! Conventions used throughout the crate:
//!
//! * Joint `n` (0-based) connects link `n - 1` (link `-1` is the base) to link `n`.
//!   Every link carries one plane of tendon holes located `d1` above its proximal
//!   pivot and `d3` below its distal pivot, so the pivot-to-pivot pitch is `d1 + d3`.
//! * Holes in a link's own frame: tendon 1 at `(0, +r)`, tendon 2 at `(0, -r)`,
//!   tendon 3 at `(-r, 0)`, tendon 4 at `(+r, 0)`. A positive rotation about the
//!   joint axis shortens tendon 2 on X-axis joints and tendon 4 on Y-axis joints.
//! * Angles are radians everywhere inside the crate.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::brent;

/// Joint limit used by the reference robots (degrees).
pub const DEFAULT_LIMIT_DEG: f64 = 54.0;

/// Slack allowed when checking an angle against its limits.
pub const LIMIT_TOLERANCE: f64 = 1e-12;

/// Clamp tolerance on the arcsin argument of the inverse tendon map.
pub const ARCSIN_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGeometry {
    /// Pivot to the tendon-hole plane of the upper link (mm).
    #[serde(rename = "d1_mm")]
    pub d1: f64,
    /// Pivot to the tendon-hole plane of the lower link (mm).
    #[serde(rename = "d3_mm")]
    pub d3: f64,
    /// Radial offset of the tendon holes from the central axis (mm).
    #[serde(rename = "r_mm")]
    pub r: f64,
}

impl Default for JointGeometry {
    fn default() -> Self {
        Self {
            d1: 5.0,
            d3: 5.0,
            r: 4.0,
        }
    }
}

impl JointGeometry {
    pub fn new(d1: f64, d3: f64, r: f64) -> Result<Self> {
        let g = Self { d1, d3, r };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { d1, d3, r } = *self;
        if !(d1.is_finite() && d3.is_finite() && r.is_finite()) {
            return Err(Error::InvalidConfig("geometry must be finite".into()));
        }
        if d1 <= 0.0 || d3 <= 0.0 || r <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "geometry lengths must be positive (d1={d1}, d3={d3}, r={r})"
            )));
        }
        if r >= d1.min(d3) {
            return Err(Error::InvalidConfig(format!(
                "tendon hole offset r={r} must be smaller than min(d1, d3)={}",
                d1.min(d3)
            )));
        }
        Ok(())
    }

    /// Pivot-to-pivot distance of one link in the straight configuration.
    pub fn pitch(&self) -> f64 {
        self.d1 + self.d3
    }

    /// Path length of the tendon on the side that lengthens for positive angles.
    pub fn lengthening_side(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let Self { d1, d3, r } = *self;
        ((d3 + d1 * c + r * s).powi(2) + (d1 * s - r * c + r).powi(2)).sqrt()
    }

    /// Path length of the tendon on the side that shortens for positive angles.
    pub fn shortening_side(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let Self { d1, d3, r } = *self;
        ((d3 + d1 * c - r * s).powi(2) + (d1 * s + r * c - r).powi(2)).sqrt()
    }

    /// Path length of a tendon lying in the plane of the rotation axis.
    pub fn on_axis(&self, theta: f64) -> f64 {
        let Self { d1, d3, .. } = *self;
        (d1 * d1 + d3 * d3 + 2.0 * d1 * d3 * theta.cos()).sqrt()
    }

    /// Constants `(phi, m, a)` of the closed-form inverse of [`Self::shortening_side`].
    pub fn inverse_constants(&self) -> InverseConstants {
        let Self { d1, d3, r } = *self;
        let a = (4.0 * d1 * d1 * d3 * d3
            + 4.0 * r.powi(4)
            + 4.0 * r * r * d3 * d3
            + 4.0 * r * r * d1 * d1)
            .sqrt();
        let phi = ((2.0 * d1 * d3 - 2.0 * r * r) / a).asin();
        let m = d1 * d1 + d3 * d3 + 2.0 * r * r;
        InverseConstants { phi, m, a }
    }

    /// Hole position of `tendon` (0-based) in a link's hole plane.
    pub fn hole_offset(&self, tendon: usize) -> (f64, f64) {
        match tendon {
            0 => (0.0, self.r),
            1 => (0.0, -self.r),
            2 => (-self.r, 0.0),
            3 => (self.r, 0.0),
            _ => panic!("tendon index {tendon} out of range"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseConstants {
    pub phi: f64,
    pub m: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JointAxis {
    X,
    Y,
}

impl JointAxis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            JointAxis::X => Vector3::x(),
            JointAxis::Y => Vector3::y(),
        }
    }

    pub fn rotation(self, theta: f64) -> UnitQuaternion<f64> {
        match self {
            JointAxis::X => UnitQuaternion::from_axis_angle(&Vector3::x_axis(), theta),
            JointAxis::Y => UnitQuaternion::from_axis_angle(&Vector3::y_axis(), theta),
        }
    }

    /// The tendon group that bends joints about this axis.
    pub fn group(self) -> TendonGroup {
        match self {
            JointAxis::X => TendonGroup::X,
            JointAxis::Y => TendonGroup::Y,
        }
    }
}

/// Alternating X, Y, X, ... schedule from proximal to distal.
pub fn alternating_axes(n: usize) -> Vec<JointAxis> {
    (0..n)
        .map(|i| if i % 2 == 0 { JointAxis::X } else { JointAxis::Y })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub min: f64,
    pub max: f64,
}

impl JointLimits {
    pub fn symmetric_deg(limit_deg: f64) -> Self {
        Self {
            min: -limit_deg.to_radians(),
            max: limit_deg.to_radians(),
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.min - LIMIT_TOLERANCE && theta <= self.max + LIMIT_TOLERANCE
    }

    pub fn check(&self, joint: Option<usize>, theta: f64) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::Domain {
                joint,
                angle_rad: theta,
                min_rad: self.min,
                max_rad: self.max,
            })
        }
    }
}

impl Default for JointLimits {
    fn default() -> Self {
        Self::symmetric_deg(DEFAULT_LIMIT_DEG)
    }
}

/// Robot description. Serialized with the wire schema
/// `{"n_joints", "geometry": {"d1_mm", "d3_mm", "r_mm"}, "axes", "limits_deg", "link_length_mm"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RobotConfigWire", into = "RobotConfigWire")]
pub struct RobotConfig {
    pub n_joints: usize,
    pub geometry: JointGeometry,
    pub axes: Vec<JointAxis>,
    pub limits: JointLimits,
    /// Overrides the pivot-to-pivot pitch `d1 + d3` when set (mm).
    pub link_length: Option<f64>,
}

impl RobotConfig {
    pub fn new(
        n_joints: usize,
        geometry: JointGeometry,
        axes: Vec<JointAxis>,
        limits: JointLimits,
    ) -> Result<Self> {
        let cfg = Self {
            n_joints,
            geometry,
            axes,
            limits,
            link_length: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default spatial robot: alternating axes, default geometry, +-54 deg.
    pub fn spatial(n_joints: usize) -> Result<Self> {
        Self::new(
            n_joints,
            JointGeometry::default(),
            alternating_axes(n_joints),
            JointLimits::default(),
        )
    }

    /// Planar robot: every joint rotates about X.
    pub fn planar(n_joints: usize) -> Result<Self> {
        Self::new(
            n_joints,
            JointGeometry::default(),
            vec![JointAxis::X; n_joints],
            JointLimits::default(),
        )
    }

    pub fn with_link_length(mut self, link_length_mm: f64) -> Result<Self> {
        self.link_length = Some(link_length_mm);
        self.validate()?;
        Ok(self)
    }

    pub fn with_limits(mut self, limits: JointLimits) -> Result<Self> {
        self.limits = limits;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_joints == 0 {
            return Err(Error::InvalidConfig("n_joints must be at least 1".into()));
        }
        if self.axes.len() != self.n_joints {
            return Err(Error::InvalidConfig(format!(
                "axis schedule has {} entries for {} joints",
                self.axes.len(),
                self.n_joints
            )));
        }
        self.geometry.validate()?;
        let JointLimits { min, max } = self.limits;
        if !(min < 0.0 && 0.0 < max) {
            return Err(Error::InvalidConfig(format!(
                "joint limits must satisfy min < 0 < max (got [{min}, {max}] rad)"
            )));
        }
        let inv = self.geometry.inverse_constants();
        // the inverse tendon map is single-valued only while phi - theta stays in (-pi/2, pi/2)
        if max >= inv.phi + std::f64::consts::FRAC_PI_2 || min <= inv.phi - std::f64::consts::FRAC_PI_2
        {
            return Err(Error::InvalidConfig(
                "joint limits exceed the monotone range of the tendon-length map".into(),
            ));
        }
        if let Some(l) = self.link_length {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidConfig(format!("link length must be positive, got {l}")));
            }
        }
        Ok(())
    }

    pub fn pitch(&self) -> f64 {
        self.link_length.unwrap_or_else(|| self.geometry.pitch())
    }

    pub fn total_length(&self) -> f64 {
        self.pitch() * self.n_joints as f64
    }

    /// All joints share one axis.
    pub fn is_planar(&self) -> bool {
        self.axes.windows(2).all(|w| w[0] == w[1])
    }

    pub fn check_angles(&self, angles: &[f64]) -> Result<()> {
        if angles.len() != self.n_joints {
            return Err(Error::DimensionMismatch {
                expected: self.n_joints,
                actual: angles.len(),
            });
        }
        for (i, &a) in angles.iter().enumerate() {
            self.limits.check(Some(i), a)?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RobotConfigWire {
    n_joints: usize,
    #[serde(default)]
    geometry: Option<JointGeometry>,
    #[serde(default)]
    axes: Option<Vec<JointAxis>>,
    #[serde(default)]
    limits_deg: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    link_length_mm: Option<f64>,
}

impl TryFrom<RobotConfigWire> for RobotConfig {
    type Error = Error;

    fn try_from(w: RobotConfigWire) -> Result<Self> {
        let limits = match w.limits_deg {
            Some([lo, hi]) => JointLimits {
                min: lo.to_radians(),
                max: hi.to_radians(),
            },
            None => JointLimits::default(),
        };
        let cfg = RobotConfig {
            n_joints: w.n_joints,
            geometry: w.geometry.unwrap_or_default(),
            axes: w.axes.unwrap_or_else(|| alternating_axes(w.n_joints)),
            limits,
            link_length: w.link_length_mm,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<RobotConfig> for RobotConfigWire {
    fn from(c: RobotConfig) -> Self {
        Self {
            n_joints: c.n_joints,
            geometry: Some(c.geometry),
            axes: Some(c.axes),
            limits_deg: Some([c.limits.min.to_degrees(), c.limits.max.to_degrees()]),
            link_length_mm: c.link_length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LockState {
    Free,
    /// Locked at the given angle (rad).
    Locked(f64),
}

impl LockState {
    pub fn is_locked(&self) -> bool {
        matches!(self, LockState::Locked(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockPattern {
    pub states: Vec<LockState>,
}

impl LockPattern {
    pub fn all_free(n: usize) -> Self {
        Self {
            states: vec![LockState::Free; n],
        }
    }

    /// Builds a pattern from `(joint index, locked angle in rad)` pairs.
    pub fn with_locked(n: usize, locked: &[(usize, f64)]) -> Result<Self> {
        let mut p = Self::all_free(n);
        for &(j, a) in locked {
            if j >= n {
                return Err(Error::InvalidInput(format!("joint index {j} out of range for {n} joints")));
            }
            p.states[j] = LockState::Locked(a);
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_locked(&self, joint: usize) -> bool {
        self.states[joint].is_locked()
    }

    pub fn locked_angle(&self, joint: usize) -> Option<f64> {
        match self.states[joint] {
            LockState::Locked(a) => Some(a),
            LockState::Free => None,
        }
    }

    pub fn free_joints(&self) -> impl Iterator<Item = usize> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_locked())
            .map(|(i, _)| i)
    }

    pub fn locked_joints(&self) -> impl Iterator<Item = usize> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_locked())
            .map(|(i, _)| i)
    }

    pub fn validate(&self, config: &RobotConfig) -> Result<()> {
        if self.states.len() != config.n_joints {
            return Err(Error::DimensionMismatch {
                expected: config.n_joints,
                actual: self.states.len(),
            });
        }
        for (i, s) in self.states.iter().enumerate() {
            if let LockState::Locked(a) = *s {
                config.limits.check(Some(i), a)?;
            }
        }
        Ok(())
    }

    /// Locked joints at their locked angle, free joints taken from `free_angles`.
    pub fn apply(&self, free_angles: &[f64]) -> Vec<f64> {
        self.states
            .iter()
            .zip(free_angles)
            .map(|(s, &a)| match *s {
                LockState::Locked(l) => l,
                LockState::Free => a,
            })
            .collect()
    }
}

/// Joint angles plus the cumulative frame of every link.
///
/// `transforms[n]` maps link-`n` coordinates to the base frame and sits at the
/// distal pivot of link `n`; the last one is the tip.
#[derive(Debug, Clone, PartialEq)]
pub struct Posture {
    pub angles: Vec<f64>,
    pub transforms: Vec<Isometry3<f64>>,
}

impl Posture {
    pub fn tip(&self) -> Vector3<f64> {
        self.transforms
            .last()
            .map(|t| t.translation.vector)
            .unwrap_or_else(Vector3::zeros)
    }

    /// Unit tangent of the distal link in the base frame.
    pub fn tip_direction(&self) -> Vector3<f64> {
        self.transforms
            .last()
            .map(|t| t.rotation * Vector3::z())
            .unwrap_or_else(Vector3::z)
    }

    pub fn joint_positions(&self) -> Vec<Point3<f64>> {
        let mut pts = vec![Point3::origin()];
        pts.extend(self.transforms.iter().map(|t| Point3::from(t.translation.vector)));
        pts
    }
}

/// Cumulative product of per-joint transforms.
pub fn forward_kinematics(angles: &[f64], config: &RobotConfig) -> Result<Posture> {
    config.check_angles(angles)?;
    Ok(forward_kinematics_unchecked(angles, config))
}

pub(crate) fn forward_kinematics_unchecked(angles: &[f64], config: &RobotConfig) -> Posture {
    let step = Translation3::new(0.0, 0.0, config.pitch());
    let mut current = Isometry3::identity();
    let transforms = angles
        .iter()
        .zip(&config.axes)
        .map(|(&theta, axis)| {
            current = current * Isometry3::from_parts(Translation3::identity(), axis.rotation(theta)) * step;
            current
        })
        .collect();
    Posture {
        angles: angles.to_vec(),
        transforms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TendonLengths {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
}

impl TendonLengths {
    pub fn as_array(&self) -> [f64; 4] {
        [self.l1, self.l2, self.l3, self.l4]
    }
}

impl std::ops::Add for TendonLengths {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            l1: self.l1 + o.l1,
            l2: self.l2 + o.l2,
            l3: self.l3 + o.l3,
            l4: self.l4 + o.l4,
        }
    }
}

/// Lengths of the four driving tendons through one joint.
pub fn tendon_lengths(
    theta: f64,
    geom: &JointGeometry,
    axis: JointAxis,
    limits: &JointLimits,
) -> Result<TendonLengths> {
    limits.check(None, theta)?;
    Ok(tendon_lengths_unchecked(theta, geom, axis))
}

pub fn tendon_lengths_unchecked(theta: f64, geom: &JointGeometry, axis: JointAxis) -> TendonLengths {
    let bend_pos = geom.lengthening_side(theta);
    let bend_neg = geom.shortening_side(theta);
    let side = geom.on_axis(theta);
    match axis {
        JointAxis::X => TendonLengths {
            l1: bend_pos,
            l2: bend_neg,
            l3: side,
            l4: side,
        },
        JointAxis::Y => TendonLengths {
            l1: side,
            l2: side,
            l3: bend_pos,
            l4: bend_neg,
        },
    }
}

/// Whole-robot tendon lengths for a joint-angle vector.
pub fn total_tendon_lengths(angles: &[f64], config: &RobotConfig) -> TendonLengths {
    angles
        .iter()
        .zip(&config.axes)
        .map(|(&a, &axis)| tendon_lengths_unchecked(a, &config.geometry, axis))
        .fold(
            TendonLengths {
                l1: 0.0,
                l2: 0.0,
                l3: 0.0,
                l4: 0.0,
            },
            |acc, l| acc + l,
        )
}

/// Inverse of the shortening-side length on the principal branch.
///
/// Serves tendon 2 of an X-axis joint and tendon 4 of a Y-axis joint; the
/// lengthening side follows from `theta -> -theta`.
pub fn joint_angle_from_tendon(length: f64, geom: &JointGeometry) -> Result<f64> {
    let InverseConstants { phi, m, a } = geom.inverse_constants();
    let arg = (length * length - m) / a;
    if !arg.is_finite() || arg.abs() > 1.0 + ARCSIN_CLAMP {
        return Err(Error::OutOfRange {
            length_mm: length,
            argument: arg,
        });
    }
    Ok(phi - arg.clamp(-1.0, 1.0).asin())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TendonGroup {
    /// Tendons 1 and 2, bending X-axis joints.
    X,
    /// Tendons 3 and 4, bending Y-axis joints.
    Y,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreeGroups {
    pub x: Vec<usize>,
    pub y: Vec<usize>,
}

impl FreeGroups {
    pub fn get(&self, group: TendonGroup) -> &[usize] {
        match group {
            TendonGroup::X => &self.x,
            TendonGroup::Y => &self.y,
        }
    }
}

/// Partitions the free joints (0-based indices) by rotation axis.
pub fn group_free_joints(config: &RobotConfig, lock: &LockPattern) -> FreeGroups {
    let mut g = FreeGroups::default();
    for j in lock.free_joints() {
        match config.axes[j] {
            JointAxis::X => g.x.push(j),
            JointAxis::Y => g.y.push(j),
        }
    }
    g
}

/// Total path length of the shortening tendon of `group` (tendon 2 for X, tendon 4 for Y).
pub fn group_tendon_length(config: &RobotConfig, angles: &[f64], group: TendonGroup) -> f64 {
    angles
        .iter()
        .zip(&config.axes)
        .map(|(&a, &axis)| {
            if axis.group() == group {
                config.geometry.shortening_side(a)
            } else {
                config.geometry.on_axis(a)
            }
        })
        .sum()
}

/// Commanded total lengths per tendon group; `None` holds the group where it is.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupTargets {
    pub group_x_mm: Option<f64>,
    pub group_y_mm: Option<f64>,
}

impl GroupTargets {
    pub fn get(&self, group: TendonGroup) -> Option<f64> {
        match group {
            TendonGroup::X => self.group_x_mm,
            TendonGroup::Y => self.group_y_mm,
        }
    }

    /// Targets that reproduce the current tendon lengths.
    pub fn neutral(config: &RobotConfig, angles: &[f64]) -> Self {
        Self {
            group_x_mm: Some(group_tendon_length(config, angles, TendonGroup::X)),
            group_y_mm: Some(group_tendon_length(config, angles, TendonGroup::Y)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantCurvatureSolution {
    pub posture: Posture,
    /// Shared angle of each solved group.
    pub group_x_angle: Option<f64>,
    pub group_y_angle: Option<f64>,
    pub warnings: Vec<String>,
}

const CC_LENGTH_TOL: f64 = 1e-12;
const CC_PAIR_TOL: f64 = 1e-11;
const CC_EMPTY_GROUP_TOL: f64 = 1e-9;
const CC_SCAN_POINTS: usize = 721;

/// d/dθ of [`JointGeometry::shortening_side`].
fn shortening_slope(geom: &JointGeometry, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let JointGeometry { d1, d3, r } = *geom;
    let (a, b) = (d3 + d1 * c - r * s, d1 * s + r * c - r);
    (a * (-d1 * s - r * c) + b * (d1 * c - r * s)) / geom.shortening_side(theta)
}

fn on_axis_slope(geom: &JointGeometry, theta: f64) -> f64 {
    -geom.d1 * geom.d3 * theta.sin() / geom.on_axis(theta)
}

/// One group's length as `k * s(own) + m * o(other) + fixed`.
#[derive(Debug, Clone, Copy)]
struct GroupEquation {
    k: f64,
    m: f64,
    fixed: f64,
    target: f64,
}

impl GroupEquation {
    fn residual(&self, geom: &JointGeometry, own: f64, other: f64) -> f64 {
        self.k * geom.shortening_side(own) + self.m * geom.on_axis(other) + self.fixed - self.target
    }

    /// Own angle for a given other angle, or the reachable length range.
    fn solve_own(&self, geom: &JointGeometry, other: f64, min: f64, max: f64) -> std::result::Result<f64, (f64, f64)> {
        let f = |t: f64| self.residual(geom, t, other);
        // shortening_side decreases with theta, so f(min) is the largest value
        let (hi, lo) = (f(min), f(max));
        if hi.abs() <= CC_LENGTH_TOL {
            Ok(min)
        } else if lo.abs() <= CC_LENGTH_TOL {
            Ok(max)
        } else if hi < 0.0 || lo > 0.0 {
            Err((lo + self.target, hi + self.target))
        } else {
            brent(f, min, max, 1e-15, CC_LENGTH_TOL * 0.1, 200).map_err(|_| (lo + self.target, hi + self.target))
        }
    }
}

/// Damped Newton on both shared angles from `start`; stays on the branch
/// nearest the current posture when several postures give the same lengths.
fn newton_pair(
    geom: &JointGeometry,
    eq: [GroupEquation; 2],
    start: [f64; 2],
    min: f64,
    max: f64,
) -> Option<[f64; 2]> {
    let f = |t: [f64; 2]| [eq[0].residual(geom, t[0], t[1]), eq[1].residual(geom, t[1], t[0])];
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let mut t = start;
    let mut r = f(t);
    for _ in 0..100 {
        if norm(r) <= CC_PAIR_TOL {
            return Some(t);
        }
        let j = [
            [eq[0].k * shortening_slope(geom, t[0]), eq[0].m * on_axis_slope(geom, t[1])],
            [eq[1].m * on_axis_slope(geom, t[0]), eq[1].k * shortening_slope(geom, t[1])],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-14 {
            return None;
        }
        let d = [
            (r[0] * j[1][1] - r[1] * j[0][1]) / det,
            (r[1] * j[0][0] - r[0] * j[1][0]) / det,
        ];
        let mut lambda = 1.0;
        loop {
            let next = [(t[0] - lambda * d[0]).clamp(min, max), (t[1] - lambda * d[1]).clamp(min, max)];
            let rn = f(next);
            if norm(rn) < norm(r) {
                t = next;
                r = rn;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return None;
            }
        }
    }
    (norm(r) <= CC_PAIR_TOL).then_some(t)
}

/// Scans the second angle, solving the first exactly, and returns the root
/// nearest `start`.
fn scan_pair(geom: &JointGeometry, eq: [GroupEquation; 2], start: [f64; 2], min: f64, max: f64) -> Option<[f64; 2]> {
    let inner = |ty: f64| eq[0].solve_own(geom, ty, min, max).ok();
    let g = |ty: f64| inner(ty).map(|tx| eq[1].residual(geom, ty, tx));
    let step = (max - min) / (CC_SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..CC_SCAN_POINTS).map(|i| min + step * i as f64).collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&ty| g(ty)).collect();
    let mut best: Option<[f64; 2]> = None;
    for i in 0..grid.len() - 1 {
        let (Some(a), Some(b)) = (vals[i], vals[i + 1]) else {
            continue;
        };
        if a.signum() == b.signum() && a != 0.0 {
            continue;
        }
        let Ok(ty) = brent(|y| g(y).unwrap_or(f64::NAN), grid[i], grid[i + 1], 1e-15, CC_LENGTH_TOL * 0.1, 200) else {
            continue;
        };
        let Some(tx) = inner(ty) else {
            continue;
        };
        let dist = |t: [f64; 2]| (t[0] - start[0]).hypot(t[1] - start[1]);
        if best.is_none_or(|b| dist([tx, ty]) < dist(b)) {
            best = Some([tx, ty]);
        }
    }
    best
}

/// Distributes each commanded group length over the group's free joints with one
/// shared angle; locked joints keep their angles and contribute fixed lengths.
///
/// `current` supplies the angles of free joints whose group has no target, and
/// picks the branch when both groups move and the lengths admit several postures.
pub fn constant_curvature_solve(
    targets: &GroupTargets,
    config: &RobotConfig,
    lock: &LockPattern,
    current: &[f64],
) -> Result<ConstantCurvatureSolution> {
    lock.validate(config)?;
    if current.len() != config.n_joints {
        return Err(Error::DimensionMismatch {
            expected: config.n_joints,
            actual: current.len(),
        });
    }
    let groups = group_free_joints(config, lock);
    let mut angles = lock.apply(current);
    let mut warnings = Vec::new();
    let geom = config.geometry;
    let JointLimits { min, max } = config.limits;
    let kinds = [TendonGroup::X, TendonGroup::Y];

    for group in kinds {
        if let Some(target) = targets.get(group) {
            if !target.is_finite() || target <= 0.0 {
                return Err(Error::Unreachable(format!("group {group:?} length {target} mm")));
            }
        }
    }
    let active: [bool; 2] = kinds.map(|g| targets.get(g).is_some() && !groups.get(g).is_empty());
    let equation = |gi: usize| {
        let (group, other) = (kinds[gi], kinds[1 - gi]);
        let own = groups.get(group);
        let moving = if active[1 - gi] { groups.get(other) } else { &[] };
        let fixed = (0..config.n_joints)
            .filter(|j| !own.contains(j) && !moving.contains(j))
            .map(|j| {
                if config.axes[j].group() == group {
                    geom.shortening_side(angles[j])
                } else {
                    geom.on_axis(angles[j])
                }
            })
            .sum();
        GroupEquation {
            k: own.len() as f64,
            m: moving.len() as f64,
            fixed,
            target: targets.get(group).unwrap_or(0.0),
        }
    };
    let range_error = |gi: usize, (lo, hi): (f64, f64)| {
        let target = targets.get(kinds[gi]).unwrap_or(0.0);
        Error::Unreachable(format!("group {:?}: {target} mm outside [{lo}, {hi}] mm", kinds[gi]))
    };

    let mut shared: [Option<f64>; 2] = [None, None];
    match active {
        [true, true] => {
            let eq = [equation(0), equation(1)];
            let start = [0, 1].map(|gi| angles[groups.get(kinds[gi])[0]]);
            let solved = newton_pair(&geom, eq, start, min, max).or_else(|| scan_pair(&geom, eq, start, min, max));
            let Some(t) = solved else {
                // name the group that cannot be met even with the other held where it is
                for gi in 0..2 {
                    if let Err(range) = eq[gi].solve_own(&geom, start[1 - gi], min, max) {
                        return Err(range_error(gi, range));
                    }
                }
                return Err(Error::Unreachable(format!(
                    "groups X and Y: {} mm and {} mm cannot be met together",
                    eq[0].target, eq[1].target
                )));
            };
            shared = [Some(t[0]), Some(t[1])];
        }
        [x, y] if x || y => {
            let gi = if x { 0 } else { 1 };
            let theta = equation(gi).solve_own(&geom, 0.0, min, max).map_err(|r| range_error(gi, r))?;
            shared[gi] = Some(theta);
        }
        _ => {}
    }
    for gi in 0..2 {
        if let Some(theta) = shared[gi] {
            for &j in groups.get(kinds[gi]) {
                angles[j] = theta;
            }
        }
    }
    for group in kinds {
        if let Some(target) = targets.get(group) {
            if groups.get(group).is_empty() {
                let fixed = group_tendon_length(config, &angles, group);
                if (fixed - target).abs() > CC_EMPTY_GROUP_TOL {
                    warnings.push(format!(
                        "group {group:?} has no free joints; commanded {target} mm ignored (fixed length {fixed} mm)"
                    ));
                }
            }
        }
    }

    Ok(ConstantCurvatureSolution {
        posture: forward_kinematics(&angles, config)?,
        group_x_angle: shared[0],
        group_y_angle: shared[1],
        warnings,
    })
}
