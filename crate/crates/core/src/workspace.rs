//! Reachable-workspace sampling for RTR (independent joints) and classic
//! multi-segment TDR (shared segment angles), with occupancy grids.
//!
//! Planar robots produce points in the bending plane: `x` along the base
//! axis and `y` toward the bending side, so a single joint traces
//! `(L cos t, L sin t)`. Spatial robots produce base-frame points.

use std::collections::HashSet;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics_unchecked, JointAxis, LockPattern, RobotConfig};

pub const DEFAULT_CELL_MM: f64 = 0.5;
pub const DEFAULT_BUDGET: u64 = 60_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SamplingMode {
    /// Every combination of an evenly spaced per-parameter grid.
    Exhaustive,
    /// Uniform random parameters.
    Random { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    pub resolution_rad: f64,
    pub mode: SamplingMode,
    /// Largest exhaustive grid; bigger requests fall back to random sampling
    /// with this many samples.
    pub budget: u64,
    pub cell_mm: f64,
    /// Seed used when an exhaustive request falls back to random.
    pub fallback_seed: u64,
}

impl SamplingOptions {
    pub fn exhaustive(resolution_rad: f64) -> Self {
        Self {
            resolution_rad,
            mode: SamplingMode::Exhaustive,
            budget: DEFAULT_BUDGET,
            cell_mm: DEFAULT_CELL_MM,
            fallback_seed: 0,
        }
    }

    pub fn random(samples: u64, seed: u64) -> Self {
        Self {
            resolution_rad: 1f64.to_radians(),
            mode: SamplingMode::Random { samples, seed },
            budget: DEFAULT_BUDGET,
            cell_mm: DEFAULT_CELL_MM,
            fallback_seed: seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.resolution_rad > 0.0 && self.resolution_rad.is_finite()) {
            return Err(Error::InvalidInput("angle resolution must be positive".into()));
        }
        if !(self.cell_mm > 0.0 && self.cell_mm.is_finite()) {
            return Err(Error::InvalidInput("cell size must be positive".into()));
        }
        Ok(())
    }
}

/// Occupied cells of a regular grid anchored at the origin; cell `i` covers
/// `[i * cell, (i + 1) * cell)` on each axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub cell_mm: f64,
    pub dims: usize,
    /// Sorted cell indices; the third index is 0 for planar grids.
    pub cells: Vec<[i64; 3]>,
}

impl OccupancyGrid {
    /// Grid of the cells hit by `points`.
    pub fn from_points(points: &[[f64; 3]], dims: usize, cell_mm: f64) -> Result<Self> {
        if dims != 2 && dims != 3 {
            return Err(Error::InvalidInput(format!("grid dimension must be 2 or 3, got {dims}")));
        }
        if !(cell_mm > 0.0 && cell_mm.is_finite()) {
            return Err(Error::InvalidInput(format!("cell size must be positive, got {cell_mm}")));
        }
        let mut cells: Vec<[i64; 3]> = points.iter().map(|p| cell_index(p, cell_mm, dims)).collect();
        cells.sort_unstable();
        cells.dedup();
        Ok(Self { cell_mm, dims, cells })
    }

    /// Fraction of this grid's cells also occupied in `outer`.
    pub fn fraction_within(&self, outer: &OccupancyGrid) -> Result<f64> {
        let (a, b) = (self, outer);
        if a.dims != b.dims || a.cell_mm != b.cell_mm {
            return Err(Error::MismatchedGrids(format!(
                "{}D/{} mm vs {}D/{} mm",
                a.dims, a.cell_mm, b.dims, b.cell_mm
            )));
        }
        if a.is_empty() {
            return Ok(1.0);
        }
        let hit = a.cells.iter().filter(|c| b.contains(c)).count();
        Ok(hit as f64 / a.len() as f64)
    }

    pub fn cell_of(&self, p: &[f64; 3]) -> [i64; 3] {
        cell_index(p, self.cell_mm, self.dims)
    }

    pub fn contains(&self, cell: &[i64; 3]) -> bool {
        self.cells.binary_search(cell).is_ok()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Occupied area (mm^2, planar) or volume (mm^3, spatial).
    pub fn measure(&self) -> f64 {
        self.cells.len() as f64 * self.cell_mm.powi(self.dims as i32)
    }
}

fn cell_index(p: &[f64; 3], cell: f64, dims: usize) -> [i64; 3] {
    let f = |v: f64| (v / cell).floor() as i64;
    if dims == 2 {
        [f(p[0]), f(p[1]), 0]
    } else {
        [f(p[0]), f(p[1]), f(p[2])]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingInfo {
    /// "rtr", "tdr" or "conditional".
    pub kind: String,
    pub mode: SamplingMode,
    pub resolution_rad: f64,
    pub values_per_parameter: Vec<usize>,
    /// Number of configurations evaluated.
    pub configurations: u64,
    /// Joint counts per segment for TDR clouds.
    pub segments: Option<Vec<usize>>,
    /// Set when an exhaustive request exceeded the budget.
    pub fell_back_to_random: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceCloud {
    pub dims: usize,
    /// One representative tip position per occupied cell, in first-visit order.
    pub points: Vec<[f64; 3]>,
    pub grid: OccupancyGrid,
    pub info: SamplingInfo,
}

impl WorkspaceCloud {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(if self.dims == 2 { "x_mm,y_mm\n" } else { "x_mm,y_mm,z_mm\n" });
        for p in &self.points {
            if self.dims == 2 {
                out.push_str(&format!("{},{}\n", p[0], p[1]));
            } else {
                out.push_str(&format!("{},{},{}\n", p[0], p[1], p[2]));
            }
        }
        out
    }

    /// Occupancy grid plus provenance as JSON.
    pub fn occupancy_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dims": self.dims,
            "cell_mm": self.grid.cell_mm,
            "cells": self.grid.cells.iter()
                .map(|c| if self.dims == 2 { vec![c[0], c[1]] } else { c.to_vec() })
                .collect::<Vec<_>>(),
            "occupied": self.grid.len(),
            "measure": self.grid.measure(),
            "sampling": self.info,
        })
    }

    /// Keeps at most `max_points` representative points, evenly strided.
    pub fn downsampled(&self, max_points: usize) -> Vec<[f64; 3]> {
        if self.points.len() <= max_points || max_points == 0 {
            return self.points.clone();
        }
        let n = self.points.len();
        (0..max_points).map(|i| self.points[i * n / max_points]).collect()
    }
}

/// Fraction of `inner`'s occupied cells that are also occupied in `outer`.
pub fn containment_fraction(inner: &WorkspaceCloud, outer: &WorkspaceCloud) -> Result<f64> {
    inner.grid.fraction_within(&outer.grid)
}

/// Evenly spaced values covering `[min, max]` at roughly `resolution`.
pub fn angle_grid(min: f64, max: f64, resolution: f64) -> Vec<f64> {
    let n = ((max - min) / resolution).round().max(1.0) as usize + 1;
    (0..n)
        .map(|i| min + (max - min) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Default contiguous division of `n_joints` into `n_segments` runs: the
/// largest run is halved repeatedly (ties go to the proximal run, the odd
/// joint to the proximal half). Each division refines the previous one, so
/// shared-angle workspaces nest.
pub fn nested_division(n_joints: usize, n_segments: usize) -> Result<Vec<usize>> {
    if n_segments == 0 || n_segments > n_joints {
        return Err(Error::InvalidInput(format!(
            "cannot split {n_joints} joints into {n_segments} segments"
        )));
    }
    let mut runs = vec![n_joints];
    while runs.len() < n_segments {
        let (idx, &big) = runs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty");
        let lo = big.div_ceil(2);
        runs[idx] = lo;
        runs.insert(idx + 1, big - lo);
    }
    Ok(runs)
}

/// Parameter -> joints map plus per-parameter value lists.
struct Parameterization {
    joints: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    /// Angles of joints not driven by any parameter.
    base: Vec<f64>,
}

impl Parameterization {
    fn configurations(&self) -> u64 {
        self.values
            .iter()
            .fold(1u64, |acc, v| acc.saturating_mul(v.len() as u64))
    }
}

fn plane_point(config: &RobotConfig, tip: &Vector3<f64>) -> [f64; 3] {
    match config.axes[0] {
        JointAxis::X => [tip.z, -tip.y, 0.0],
        JointAxis::Y => [tip.z, tip.x, 0.0],
    }
}

struct Collector {
    dims: usize,
    cell: f64,
    points: Vec<[f64; 3]>,
    dense: Option<(i64, usize, Vec<u64>)>,
    sparse: HashSet<[i64; 3]>,
}

impl Collector {
    fn new(dims: usize, cell: f64, reach: f64) -> Self {
        let dense = (dims == 2).then(|| {
            let half = (reach / cell).ceil() as i64 + 2;
            let side = (2 * half + 1) as usize;
            (half, side, vec![0u64; (side * side).div_ceil(64)])
        });
        Self {
            dims,
            cell,
            points: Vec::new(),
            dense,
            sparse: HashSet::new(),
        }
    }

    #[inline]
    fn add(&mut self, p: [f64; 3]) {
        let c = cell_index(&p, self.cell, self.dims);
        let fresh = match &mut self.dense {
            Some((half, side, bits)) => {
                let i = ((c[0] + *half) as usize) * *side + (c[1] + *half) as usize;
                let (w, b) = (i / 64, 1u64 << (i % 64));
                let fresh = bits[w] & b == 0;
                bits[w] |= b;
                fresh
            }
            None => self.sparse.insert(c),
        };
        if fresh {
            self.points.push(p);
        }
    }

    fn finish(self, info: SamplingInfo) -> WorkspaceCloud {
        let mut cells: Vec<[i64; 3]> = self
            .points
            .iter()
            .map(|p| cell_index(p, self.cell, self.dims))
            .collect();
        cells.sort_unstable();
        WorkspaceCloud {
            dims: self.dims,
            points: self.points,
            grid: OccupancyGrid {
                cell_mm: self.cell,
                dims: self.dims,
                cells,
            },
            info,
        }
    }
}

fn point_of(config: &RobotConfig, angles: &[f64], dims: usize) -> [f64; 3] {
    let tip = forward_kinematics_unchecked(angles, config).tip();
    if dims == 2 {
        plane_point(config, &tip)
    } else {
        [tip.x, tip.y, tip.z]
    }
}

/// Odometer over all value combinations through the generic FK path.
fn enumerate_generic(config: &RobotConfig, p: &Parameterization, out: &mut Collector) {
    let mut idx = vec![0usize; p.values.len()];
    let mut angles = p.base.clone();
    loop {
        for (k, joints) in p.joints.iter().enumerate() {
            for &j in joints {
                angles[j] = p.values[k][idx[k]];
            }
        }
        out.add(point_of(config, &angles, out.dims));
        let mut k = p.values.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < p.values[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Planar exhaustive enumeration with every parameter on the same grid.
///
/// The heading after joint `j` is `(j + 1) * min + step * S_j`, with `S_j` the
/// running sum of grid indices, so link directions come from a table indexed by
/// `(j, S_j)`. Clouds that share a grid therefore produce bitwise identical
/// points for identical joint angles.
#[allow(clippy::too_many_arguments)]
fn enumerate_planar(
    link: f64,
    n_joints: usize,
    joint_param: &[usize],
    min: f64,
    max: f64,
    n_values: usize,
    n_params: usize,
    out: &mut Collector,
) {
    let span = n_values - 1;
    let table: Vec<Vec<(f64, f64)>> = (0..n_joints)
        .map(|j| {
            (0..=(j + 1) * span)
                .map(|s| {
                    let phi = (j + 1) as f64 * min + (max - min) * s as f64 / span as f64;
                    let (sn, cs) = phi.sin_cos();
                    (link * cs, link * sn)
                })
                .collect()
        })
        .collect();
    let first_joint: Vec<usize> = (0..n_params)
        .map(|k| joint_param.iter().position(|&p| p == k).expect("every parameter drives a joint"))
        .collect();
    let mut idx = vec![0usize; n_params];
    let mut sums = vec![0usize; n_joints];
    let mut xs = vec![0.0f64; n_joints];
    let mut ys = vec![0.0f64; n_joints];
    let mut from = 0;
    loop {
        for j in from..n_joints {
            let prev_s = if j == 0 { 0 } else { sums[j - 1] };
            sums[j] = prev_s + idx[joint_param[j]];
            let (dx, dy) = table[j][sums[j]];
            let (px, py) = if j == 0 { (0.0, 0.0) } else { (xs[j - 1], ys[j - 1]) };
            xs[j] = px + dx;
            ys[j] = py + dy;
        }
        out.add([xs[n_joints - 1], ys[n_joints - 1], 0.0]);
        let mut k = n_params;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < n_values {
                break;
            }
            idx[k] = 0;
        }
        from = first_joint[k];
    }
}

fn sample(
    config: &RobotConfig,
    joints_per_param: Vec<Vec<usize>>,
    options: &SamplingOptions,
    kind: &str,
    segments: Option<Vec<usize>>,
) -> Result<WorkspaceCloud> {
    config.validate()?;
    options.validate()?;
    let dims = if config.is_planar() { 2 } else { 3 };
    let reach = config.total_length();
    let lim = config.limits;
    let grid = angle_grid(lim.min, lim.max, options.resolution_rad);
    let p = Parameterization {
        values: vec![grid.clone(); joints_per_param.len()],
        joints: joints_per_param,
        base: vec![0.0; config.n_joints],
    };
    let mut out = Collector::new(dims, options.cell_mm, reach);

    let exhaustive_count = p.configurations();
    let (mode, fell_back) = match options.mode {
        SamplingMode::Exhaustive if exhaustive_count <= options.budget => (SamplingMode::Exhaustive, false),
        SamplingMode::Exhaustive => (
            SamplingMode::Random {
                samples: options.budget,
                seed: options.fallback_seed,
            },
            true,
        ),
        m => (m, false),
    };
    let configurations = match mode {
        SamplingMode::Exhaustive => {
            if dims == 2 {
                let mut joint_param = vec![0; config.n_joints];
                for (k, js) in p.joints.iter().enumerate() {
                    for &j in js {
                        joint_param[j] = k;
                    }
                }
                enumerate_planar(
                    config.pitch(),
                    config.n_joints,
                    &joint_param,
                    lim.min,
                    lim.max,
                    grid.len(),
                    p.joints.len(),
                    &mut out,
                );
            } else {
                enumerate_generic(config, &p, &mut out);
            }
            exhaustive_count
        }
        SamplingMode::Random { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut angles = p.base.clone();
            for _ in 0..samples {
                for joints in &p.joints {
                    let a = rng.random_range(lim.min..=lim.max);
                    for &j in joints {
                        angles[j] = a;
                    }
                }
                out.add(point_of(config, &angles, dims));
            }
            samples
        }
    };
    Ok(out.finish(SamplingInfo {
        kind: kind.into(),
        mode,
        resolution_rad: options.resolution_rad,
        values_per_parameter: vec![grid.len(); p.joints.len()],
        configurations,
        segments,
        fell_back_to_random: fell_back,
    }))
}

/// Workspace of the RTR: every joint varies independently over its limits.
pub fn sample_workspace_rtr(config: &RobotConfig, options: &SamplingOptions) -> Result<WorkspaceCloud> {
    let params = (0..config.n_joints).map(|j| vec![j]).collect();
    sample(config, params, options, "rtr", None)
}

/// Workspace of a TDR with `n_segments` shared-angle segments using the
/// default [`nested_division`].
pub fn sample_workspace_tdr(
    config: &RobotConfig,
    n_segments: usize,
    options: &SamplingOptions,
) -> Result<WorkspaceCloud> {
    let runs = nested_division(config.n_joints, n_segments)?;
    sample_workspace_segments(config, &runs, options)
}

/// Workspace of a TDR with explicit contiguous segment lengths (joint counts,
/// proximal first). Within a segment, joints about the same axis share one angle.
pub fn sample_workspace_segments(
    config: &RobotConfig,
    runs: &[usize],
    options: &SamplingOptions,
) -> Result<WorkspaceCloud> {
    if runs.iter().sum::<usize>() != config.n_joints || runs.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "segment lengths {runs:?} do not partition {} joints",
            config.n_joints
        )));
    }
    let mut params = Vec::new();
    let mut start = 0;
    for &len in runs {
        for axis in [JointAxis::X, JointAxis::Y] {
            let js: Vec<usize> = (start..start + len).filter(|&j| config.axes[j] == axis).collect();
            if !js.is_empty() {
                params.push(js);
            }
        }
        start += len;
    }
    sample(config, params, options, "tdr", Some(runs.to_vec()))
}

/// Workspace reachable from the current posture when only the free joints of
/// `lock` move. Each free joint takes the grid values plus its current angle.
pub fn sample_conditional(
    config: &RobotConfig,
    current: &[f64],
    lock: &LockPattern,
    resolution_rad: f64,
    budget: u64,
    cell_mm: f64,
) -> Result<WorkspaceCloud> {
    config.check_angles(current)?;
    lock.validate(config)?;
    let options = SamplingOptions {
        cell_mm,
        ..SamplingOptions::exhaustive(resolution_rad)
    };
    options.validate()?;
    let lim = config.limits;
    let free: Vec<usize> = lock.free_joints().collect();
    let values: Vec<Vec<f64>> = free
        .iter()
        .map(|&j| {
            let mut v = angle_grid(lim.min, lim.max, resolution_rad);
            v.push(current[j]);
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let p = Parameterization {
        joints: free.iter().map(|&j| vec![j]).collect(),
        values,
        base: lock.apply(current),
    };
    let requested = p.configurations();
    if requested > budget {
        return Err(Error::BudgetExceeded { requested, budget });
    }
    let dims = if config.is_planar() { 2 } else { 3 };
    let mut out = Collector::new(dims, cell_mm, config.total_length());
    enumerate_generic(config, &p, &mut out);
    Ok(out.finish(SamplingInfo {
        kind: "conditional".into(),
        mode: SamplingMode::Exhaustive,
        resolution_rad,
        values_per_parameter: p.values.iter().map(Vec::len).collect(),
        configurations: requested,
        segments: None,
        fell_back_to_random: false,
    }))
}
