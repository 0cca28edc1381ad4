//! Service-arc (planar) and service-region (spatial) dexterity of an RTR
//! reconfigured into contiguous shared-angle segments.
//!
//! A configuration reaches a target when its tip lies within `reach_eps` of
//! it; the tip tangent of every reaching configuration marks a direction cell.
//! Configurations are enumerated by splitting the segments into a proximal and
//! a distal half: the distal half's displacements are bucketed once, and every
//! proximal pose looks up the distal poses that close the gap to the target.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointAxis, RobotConfig};
use crate::workspace::angle_grid;

/// Plane coordinates (mm) of the documented reference target for the
/// reference robot [`reference_robot`]; see [`calibrate_reference_target`].
pub const REFERENCE_TARGET: [f64; 2] = [30.0, 20.0];
pub const REFERENCE_SEED: u64 = 2024;
pub const DEFAULT_MAP_SAMPLES: usize = 2000;

/// Six planar joints, 10 mm links, +-54 deg.
pub fn reference_robot() -> RobotConfig {
    RobotConfig::planar(6)
        .and_then(|c| c.with_link_length(10.0))
        .expect("reference robot is valid")
}

/// Length fractions of contiguous segments, proximal first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentDivision {
    pub fractions: Vec<f64>,
}

impl SegmentDivision {
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() || fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidInput(format!("invalid division fractions {fractions:?}")));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("division fractions sum to {sum}, not 1")));
        }
        Ok(Self { fractions })
    }

    pub fn equal(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n]).or_else(|_| {
            let mut f = vec![1.0 / n as f64; n];
            let rest: f64 = f[1..].iter().sum();
            f[0] = 1.0 - rest;
            Self::new(f)
        })
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let n: usize = counts.iter().sum();
        if n == 0 || counts.contains(&0) {
            return Err(Error::InvalidInput(format!("invalid joint counts {counts:?}")));
        }
        let mut f: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let rest: f64 = f[1..].iter().sum();
        f[0] = 1.0 - rest;
        Self::new(f)
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    /// Integer joint counts by largest remainder, every segment keeping at
    /// least one joint; ties go to the proximal segment.
    pub fn joint_counts(&self, n_joints: usize) -> Result<Vec<usize>> {
        let k = self.fractions.len();
        if k > n_joints {
            return Err(Error::InvalidInput(format!(
                "{k} segments need at least {k} joints, robot has {n_joints}"
            )));
        }
        let quotas: Vec<f64> = self.fractions.iter().map(|f| f * n_joints as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| (q.floor() as usize).max(1)).collect();
        let rem = |i: usize, c: &[usize]| quotas[i] - c[i] as f64;
        while counts.iter().sum::<usize>() < n_joints {
            let i = (0..k)
                .max_by(|&a, &b| rem(a, &counts).total_cmp(&rem(b, &counts)).then(b.cmp(&a)))
                .expect("k >= 1");
            counts[i] += 1;
        }
        while counts.iter().sum::<usize>() > n_joints {
            let i = (0..k)
                .filter(|&i| counts[i] > 1)
                .min_by(|&a, &b| rem(a, &counts).total_cmp(&rem(b, &counts)).then(b.cmp(&a)))
                .expect("k <= n_joints");
            counts[i] -= 1;
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DexterityOptions {
    /// Reach tolerance (mm); defaults to 0.5% of the robot length.
    pub reach_eps_mm: Option<f64>,
    /// Planar direction bin width (rad); must divide 2 pi.
    pub bin_width_rad: f64,
    /// Grid values per shared segment angle; derived from the segment count when unset.
    pub values_per_angle: Option<usize>,
    /// Icosphere subdivision level (20 * 4^level cells).
    pub sphere_level: u32,
}

impl Default for DexterityOptions {
    fn default() -> Self {
        Self {
            reach_eps_mm: None,
            bin_width_rad: 1f64.to_radians(),
            values_per_angle: None,
            sphere_level: 3,
        }
    }
}

impl DexterityOptions {
    pub fn reach_eps(&self, config: &RobotConfig) -> f64 {
        self.reach_eps_mm.unwrap_or(0.005 * config.total_length())
    }
}

/// Default grid size for `n_params` shared angles split `proximal`/`distal`.
pub fn default_values_per_angle(proximal: usize, distal: usize) -> usize {
    let mut m = 10_801.0f64;
    if proximal > 0 {
        m = m.min(5.0e6f64.powf(1.0 / proximal as f64));
    }
    if distal > 0 {
        m = m.min(1.5e6f64.powf(1.0 / distal as f64));
    }
    (m.floor() as usize).max(3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DexterityResult {
    pub target: [f64; 3],
    /// Planar dexterity (percent).
    pub d_p: Option<f64>,
    /// Spatial dexterity (percent).
    pub d_s: Option<f64>,
    /// Service-arc angle (rad), planar only.
    pub theta_r_rad: Option<f64>,
    /// Service region and ball areas on the unit sphere, spatial only.
    pub region_area: Option<f64>,
    pub ball_area: Option<f64>,
    pub reach_eps_mm: f64,
    pub cells_hit: usize,
    pub cells_total: usize,
    /// Indices of the hit direction bins or sphere cells.
    pub hit_cells: Vec<usize>,
    pub reaching_configurations: u64,
    pub reachable: bool,
    pub joint_counts: Vec<usize>,
    pub values_per_angle: usize,
}

impl DexterityResult {
    pub fn percent(&self) -> f64 {
        self.d_p.or(self.d_s).unwrap_or(0.0)
    }
}

fn bin_count(width: f64) -> Result<usize> {
    let n = (TAU / width).round();
    if !(width > 0.0) || n < 1.0 || (n * width - TAU).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("bin width {width} rad does not divide 2 pi")));
    }
    Ok(n as usize)
}

/// Points bucketed on a uniform grid of `cell`-sized boxes, stored contiguously per box.
struct Buckets<const D: usize> {
    cell: f64,
    half: i64,
    side: usize,
    start: Vec<u32>,
    order: Vec<u32>,
}

impl<const D: usize> Buckets<D> {
    fn build(points: &[[f64; D]], cell: f64, extent: f64) -> Self {
        let half = (extent / cell).ceil() as i64 + 1;
        let side = (2 * half + 1) as usize;
        let n_cells = side.pow(D as u32);
        let key = |p: &[f64; D]| -> usize {
            let mut k = 0usize;
            for v in p {
                let i = ((v / cell).floor() as i64).clamp(-half, half) + half;
                k = k * side + i as usize;
            }
            k
        };
        let mut start = vec![0u32; n_cells + 1];
        for p in points {
            start[key(p) + 1] += 1;
        }
        for i in 0..n_cells {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut order = vec![0u32; points.len()];
        for (idx, p) in points.iter().enumerate() {
            let k = key(p);
            order[fill[k] as usize] = idx as u32;
            fill[k] += 1;
        }
        Self {
            cell,
            half,
            side,
            start,
            order,
        }
    }

    /// Calls `f` with every stored index in the boxes around `q`.
    fn around(&self, q: &[f64; D], mut f: impl FnMut(usize)) {
        let mut lo = [0i64; D];
        for (d, v) in q.iter().enumerate() {
            lo[d] = (v / self.cell).floor() as i64 - 1;
            if lo[d] + 2 < -self.half || lo[d] > self.half {
                return;
            }
        }
        let mut offs = [0i64; D];
        loop {
            let mut k = 0usize;
            let mut inside = true;
            for d in 0..D {
                let i = lo[d] + offs[d];
                if i < -self.half || i > self.half {
                    inside = false;
                    break;
                }
                k = k * self.side + (i + self.half) as usize;
            }
            if inside {
                for &idx in &self.order[self.start[k] as usize..self.start[k + 1] as usize] {
                    f(idx as usize);
                }
            }
            let mut d = D;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                offs[d] += 1;
                if offs[d] < 3 {
                    break;
                }
                offs[d] = 0;
            }
        }
    }
}

fn validate_target(config: &RobotConfig, eps: f64) -> Result<()> {
    config.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput("reach tolerance must be positive".into()));
    }
    Ok(())
}

/// Planar shape of one shared-angle segment: displacement and heading change.
fn planar_segment(link: f64, joints: usize, angle: f64) -> ([f64; 2], f64) {
    let (mut x, mut y) = (0.0, 0.0);
    for j in 1..=joints {
        let (s, c) = (j as f64 * angle).sin_cos();
        x += link * c;
        y += link * s;
    }
    ([x, y], joints as f64 * angle)
}

/// Odometer over `dims` indices each in `0..m`.
fn for_each_index(dims: usize, m: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; dims];
    loop {
        f(&idx);
        let mut d = dims;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// Planar dexterity D_p of `target` (plane coordinates, mm).
pub fn service_arc(
    target: [f64; 2],
    config: &RobotConfig,
    division: &SegmentDivision,
    options: &DexterityOptions,
) -> Result<DexterityResult> {
    if !config.is_planar() {
        return Err(Error::InvalidConfig("service_arc needs a planar robot".into()));
    }
    let counts = division.joint_counts(config.n_joints)?;
    service_arc_counts(target, config, &counts, options)
}

pub(crate) fn service_arc_counts(
    target: [f64; 2],
    config: &RobotConfig,
    counts: &[usize],
    options: &DexterityOptions,
) -> Result<DexterityResult> {
    let eps = options.reach_eps(config);
    validate_target(config, eps)?;
    let n_bins = bin_count(options.bin_width_rad)?;
    let k = counts.len();
    let k_b = k / 2;
    let k_a = k - k_b;
    let m = options
        .values_per_angle
        .unwrap_or_else(|| default_values_per_angle(k_a, k_b));
    let link = config.pitch();
    let lim = config.limits;
    let values = angle_grid(lim.min, lim.max, (lim.max - lim.min) / (m - 1) as f64);
    let m = values.len();
    let q = Vector2::new(target[0], target[1]);

    let mut result = DexterityResult {
        target: [target[0], target[1], 0.0],
        d_p: Some(0.0),
        d_s: None,
        theta_r_rad: Some(0.0),
        region_area: None,
        ball_area: None,
        reach_eps_mm: eps,
        cells_hit: 0,
        cells_total: n_bins,
        hit_cells: Vec::new(),
        reaching_configurations: 0,
        reachable: false,
        joint_counts: counts.to_vec(),
        values_per_angle: m,
    };
    if q.norm() > config.total_length() + eps {
        return Ok(result);
    }

    let tables: Vec<Vec<([f64; 2], f64)>> = counts
        .iter()
        .map(|&c| values.iter().map(|&a| planar_segment(link, c, a)).collect())
        .collect();
    let len_b = counts[k_a..].iter().sum::<usize>() as f64 * link;

    // distal half in its own start frame
    let mut b_pts: Vec<[f64; 2]> = Vec::new();
    let mut b_head: Vec<f64> = Vec::new();
    for_each_index(k_b, m, |idx| {
        let (mut p, mut h) = (Vector2::<f64>::zeros(), 0.0f64);
        for (s, &i) in idx.iter().enumerate() {
            let (d, dh) = tables[k_a + s][i];
            let (sn, cs) = h.sin_cos();
            p += Vector2::new(cs * d[0] - sn * d[1], sn * d[0] + cs * d[1]);
            h += dh;
        }
        b_pts.push([p.x, p.y]);
        b_head.push(h);
    });
    let cell = eps.max(2.0 * (len_b + eps) / 512.0);
    let buckets = Buckets::<2>::build(&b_pts, cell, len_b + eps);

    let mut hit = vec![false; n_bins];
    let mut reaching = 0u64;
    let eps2 = eps * eps;
    for_each_index(k_a, m, |idx| {
        let (mut p, mut h) = (Vector2::<f64>::zeros(), 0.0f64);
        for (s, &i) in idx.iter().enumerate() {
            let (d, dh) = tables[s][i];
            let (sn, cs) = h.sin_cos();
            p += Vector2::new(cs * d[0] - sn * d[1], sn * d[0] + cs * d[1]);
            h += dh;
        }
        let gap = q - p;
        if gap.norm() > len_b + eps {
            return;
        }
        let (sn, cs) = h.sin_cos();
        let local = [cs * gap.x + sn * gap.y, -sn * gap.x + cs * gap.y];
        buckets.around(&local, |j| {
            let d = b_pts[j];
            let (dx, dy) = (d[0] - local[0], d[1] - local[1]);
            if dx * dx + dy * dy <= eps2 {
                reaching += 1;
                let heading = (h + b_head[j]).rem_euclid(TAU);
                let bin = ((heading / options.bin_width_rad) as usize).min(n_bins - 1);
                hit[bin] = true;
            }
        });
    });

    let bins = hit.iter().filter(|&&b| b).count();
    let theta_r = bins as f64 * options.bin_width_rad;
    result.cells_hit = bins;
    result.hit_cells = (0..n_bins).filter(|&i| hit[i]).collect();
    result.reaching_configurations = reaching;
    result.reachable = reaching > 0;
    result.theta_r_rad = Some(theta_r);
    result.d_p = Some(100.0 * theta_r / TAU);
    Ok(result)
}

/// Geodesic sphere with a face hierarchy for point location.
#[derive(Debug, Clone)]
pub struct Icosphere {
    vertices: Vec<Vector3<f64>>,
    /// Faces per level; level 0 is the icosahedron.
    levels: Vec<Vec<[usize; 3]>>,
}

impl Icosphere {
    pub fn new(level: u32) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vector3<f64>> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
        let base = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        let mut levels = vec![base];
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        for _ in 0..level {
            let mut next = Vec::new();
            let prev = levels.last().expect("non-empty");
            for f in prev {
                let mut mid = |a: usize, b: usize| {
                    let key = (a.min(b), a.max(b));
                    *midpoints.entry(key).or_insert_with(|| {
                        vertices.push((vertices[a] + vertices[b]).normalize());
                        vertices.len() - 1
                    })
                };
                let (ab, bc, ca) = (mid(f[0], f[1]), mid(f[1], f[2]), mid(f[2], f[0]));
                // children in a fixed order so face 4i+c descends from face i
                next.push([f[0], ab, ca]);
                next.push([ab, f[1], bc]);
                next.push([ca, bc, f[2]]);
                next.push([ab, bc, ca]);
            }
            levels.push(next);
        }
        Self { vertices, levels }
    }

    pub fn level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn cell_count(&self) -> usize {
        self.levels.last().map_or(0, Vec::len)
    }

    /// Spherical area of a finest-level cell (spherical excess).
    pub fn cell_area(&self, cell: usize) -> f64 {
        let f = self.levels.last().expect("non-empty")[cell];
        let (a, b, c) = (&self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]]);
        let num = a.dot(&b.cross(c)).abs();
        let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
        2.0 * num.atan2(den)
    }

    fn inside_score(&self, face: [usize; 3], d: &Vector3<f64>) -> f64 {
        let v = |i: usize| &self.vertices[face[i]];
        d.dot(&v(0).cross(v(1)))
            .min(d.dot(&v(1).cross(v(2))))
            .min(d.dot(&v(2).cross(v(0))))
    }

    /// Finest-level cell containing direction `d`.
    pub fn locate(&self, d: &Vector3<f64>) -> usize {
        let pick = |faces: &[[usize; 3]], range: std::ops::Range<usize>| -> usize {
            let mut best = (f64::NEG_INFINITY, range.start);
            for i in range {
                let s = self.inside_score(faces[i], d);
                if s >= 0.0 {
                    return i;
                }
                if s > best.0 {
                    best = (s, i);
                }
            }
            best.1
        };
        let mut idx = pick(&self.levels[0], 0..20);
        for faces in &self.levels[1..] {
            idx = pick(faces, 4 * idx..4 * idx + 4);
        }
        idx
    }

    /// Index of the ancestor of a finest cell `levels_up` levels higher.
    pub fn ancestor(cell: usize, levels_up: u32) -> usize {
        cell >> (2 * levels_up)
    }
}

/// Shared-angle parameters of a segment: (axis, joints) per group present.
fn segment_groups(config: &RobotConfig, start: usize, len: usize) -> Vec<Vec<usize>> {
    [JointAxis::X, JointAxis::Y]
        .iter()
        .map(|&ax| (start..start + len).filter(|&j| config.axes[j] == ax).collect::<Vec<_>>())
        .filter(|g: &Vec<usize>| !g.is_empty())
        .collect()
}

/// Rigid transform of a segment given its group angles.
fn spatial_segment(
    config: &RobotConfig,
    start: usize,
    len: usize,
    angle_of: impl Fn(JointAxis) -> f64,
) -> (Vector3<f64>, Matrix3<f64>) {
    let mut p = Vector3::zeros();
    let mut r = Matrix3::identity();
    let step = Vector3::new(0.0, 0.0, config.pitch());
    for j in start..start + len {
        let ax = config.axes[j];
        r *= ax.rotation(angle_of(ax)).to_rotation_matrix().into_inner();
        p += r * step;
    }
    (p, r)
}

/// Spatial dexterity D_s of `target` (base frame, mm).
pub fn service_region_3d(
    target: Vector3<f64>,
    config: &RobotConfig,
    division: &SegmentDivision,
    options: &DexterityOptions,
) -> Result<DexterityResult> {
    let counts = division.joint_counts(config.n_joints)?;
    let eps = options.reach_eps(config);
    validate_target(config, eps)?;
    let sphere = Icosphere::new(options.sphere_level);

    // segment tables over all combinations of that segment's group angles
    let mut starts = Vec::new();
    let mut s = 0;
    for &c in &counts {
        starts.push(s);
        s += c;
    }
    let groups: Vec<usize> = counts
        .iter()
        .zip(&starts)
        .map(|(&c, &st)| segment_groups(config, st, c).len())
        .collect();
    let total_params: usize = groups.iter().sum();
    // split where the distal half holds at most half of the parameters
    let mut k_a = counts.len();
    let mut distal_params = 0;
    while k_a > 0 && distal_params + groups[k_a - 1] <= total_params / 2 {
        k_a -= 1;
        distal_params += groups[k_a];
    }
    let proximal_params = total_params - distal_params;
    let m = options
        .values_per_angle
        .unwrap_or_else(|| default_values_per_angle(proximal_params, distal_params));
    let lim = config.limits;
    let values = angle_grid(lim.min, lim.max, (lim.max - lim.min) / (m - 1) as f64);
    let m = values.len();

    let mut result = DexterityResult {
        target: [target.x, target.y, target.z],
        d_p: None,
        d_s: Some(0.0),
        theta_r_rad: None,
        region_area: Some(0.0),
        ball_area: Some(4.0 * PI),
        reach_eps_mm: eps,
        cells_hit: 0,
        cells_total: sphere.cell_count(),
        hit_cells: Vec::new(),
        reaching_configurations: 0,
        reachable: false,
        joint_counts: counts.clone(),
        values_per_angle: m,
    };
    if target.norm() > config.total_length() + eps {
        return Ok(result);
    }

    let tables: Vec<Vec<(Vector3<f64>, Matrix3<f64>)>> = counts
        .iter()
        .zip(&starts)
        .zip(&groups)
        .map(|((&c, &st), &g)| {
            let axes: Vec<JointAxis> = [JointAxis::X, JointAxis::Y]
                .into_iter()
                .filter(|ax| (st..st + c).any(|j| config.axes[j] == *ax))
                .collect();
            let mut out = Vec::with_capacity(m.pow(g as u32));
            for_each_index(g, m, |idx| {
                let angle_of = |ax: JointAxis| {
                    axes.iter().position(|a| *a == ax).map_or(0.0, |p| values[idx[p]])
                };
                out.push(spatial_segment(config, st, c, angle_of));
            });
            out
        })
        .collect();
    let sizes: Vec<usize> = tables.iter().map(Vec::len).collect();
    let len_b = counts[k_a..].iter().sum::<usize>() as f64 * config.pitch();

    let mut b_pts: Vec<[f64; 3]> = Vec::new();
    let mut b_dir: Vec<Vector3<f64>> = Vec::new();
    let walk = |segs: std::ops::Range<usize>, f: &mut dyn FnMut(Vector3<f64>, Matrix3<f64>)| {
        let segs: Vec<usize> = segs.collect();
        let mut idx = vec![0usize; segs.len()];
        loop {
            let (mut p, mut r) = (Vector3::zeros(), Matrix3::identity());
            for (slot, &sg) in segs.iter().enumerate() {
                let (dp, dr) = &tables[sg][idx[slot]];
                p += r * dp;
                r *= dr;
            }
            f(p, r);
            let mut d = segs.len();
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < sizes[segs[d]] {
                    break;
                }
                idx[d] = 0;
            }
        }
    };
    walk(k_a..counts.len(), &mut |p, r| {
        b_pts.push([p.x, p.y, p.z]);
        b_dir.push(r.column(2).into_owned());
    });
    let cell = eps.max(2.0 * (len_b + eps) / 128.0);
    let buckets = Buckets::<3>::build(&b_pts, cell, len_b + eps);

    let mut hit = vec![false; sphere.cell_count()];
    let mut reaching = 0u64;
    let eps2 = eps * eps;
    walk(0..k_a, &mut |p, r| {
        let gap = target - p;
        if gap.norm() > len_b + eps {
            return;
        }
        let local = r.transpose() * gap;
        buckets.around(&[local.x, local.y, local.z], |j| {
            let d = b_pts[j];
            let diff = Vector3::new(d[0], d[1], d[2]) - local;
            if diff.norm_squared() <= eps2 {
                reaching += 1;
                hit[sphere.locate(&(r * b_dir[j]))] = true;
            }
        });
    });

    let area: f64 = hit
        .iter()
        .enumerate()
        .filter(|(_, &h)| h)
        .map(|(i, _)| sphere.cell_area(i))
        .sum();
    result.hit_cells = (0..hit.len()).filter(|&i| hit[i]).collect();
    result.cells_hit = result.hit_cells.len();
    result.reaching_configurations = reaching;
    result.reachable = reaching > 0;
    result.region_area = Some(area);
    result.d_s = Some(100.0 * area / (4.0 * PI));
    Ok(result)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut out = 0.0;
    let mut scale = inv;
    while i > 0 {
        out += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    out
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Low-discrepancy points on the `k`-segment fraction simplex: shifted Halton
/// points in `k - 1` dimensions turned into sorted spacings.
pub fn simplex_samples(k: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 || k > PRIMES.len() + 1 {
        return Err(Error::InvalidInput(format!("unsupported segment count {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>()).collect();
    Ok((1..=n as u64)
        .map(|i| {
            let mut u: Vec<f64> = (0..k - 1)
                .map(|d| (radical_inverse(i, PRIMES[d]) + shift[d]).fract())
                .collect();
            u.sort_by(f64::total_cmp);
            let mut f = Vec::with_capacity(k);
            let mut prev = 0.0;
            for v in u.iter().chain(std::iter::once(&1.0)) {
                f.push((v - prev).max(1e-12));
                prev = *v;
            }
            let sum: f64 = f.iter().sum();
            f.iter_mut().for_each(|x| *x /= sum);
            f
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSample {
    pub fractions: Vec<f64>,
    pub joint_counts: Vec<usize>,
    pub d_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DexterityMap {
    pub target: [f64; 2],
    pub seed: u64,
    pub samples: Vec<MapSample>,
    pub argmax: usize,
}

impl DexterityMap {
    pub fn max(&self) -> f64 {
        self.samples[self.argmax].d_p
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().map(|s| s.d_p).fold(f64::INFINITY, f64::min)
    }

    /// Smallest non-zero D_p, if any sample reaches the target.
    pub fn min_positive(&self) -> Option<f64> {
        self.samples
            .iter()
            .map(|s| s.d_p)
            .filter(|&d| d > 0.0)
            .min_by(f64::total_cmp)
    }

    pub fn to_csv(&self) -> String {
        let k = self.samples.first().map_or(0, |s| s.fractions.len());
        let mut out: Vec<String> = (1..=k).map(|i| format!("f{i}")).collect();
        out.push("dp_percent".into());
        let mut csv = out.join(",") + "\n";
        for s in &self.samples {
            let mut row: Vec<String> = s.fractions.iter().map(|f| format!("{f}")).collect();
            row.push(format!("{}", s.d_p));
            csv.push_str(&(row.join(",") + "\n"));
        }
        csv
    }
}

/// Caches D_p per joint-count composition; every sample with the same
/// realised division shares one evaluation.
pub struct DivisionEvaluator<'a> {
    pub target: [f64; 2],
    pub config: &'a RobotConfig,
    pub options: DexterityOptions,
    cache: HashMap<Vec<usize>, f64>,
}

impl<'a> DivisionEvaluator<'a> {
    pub fn new(target: [f64; 2], config: &'a RobotConfig, options: DexterityOptions) -> Result<Self> {
        if !config.is_planar() {
            return Err(Error::InvalidConfig("division dexterity needs a planar robot".into()));
        }
        Ok(Self {
            target,
            config,
            options,
            cache: HashMap::new(),
        })
    }

    pub fn d_p(&mut self, counts: &[usize]) -> Result<f64> {
        if let Some(v) = self.cache.get(counts) {
            return Ok(*v);
        }
        let r = service_arc_counts(self.target, self.config, counts, &self.options)?;
        let v = r.d_p.unwrap_or(0.0);
        self.cache.insert(counts.to_vec(), v);
        Ok(v)
    }

    pub fn evaluations(&self) -> usize {
        self.cache.len()
    }
}

/// D_p over `n_samples` low-discrepancy division fractions.
pub fn dexterity_map(
    target: [f64; 2],
    config: &RobotConfig,
    n_divisions: usize,
    n_samples: usize,
    seed: u64,
    options: &DexterityOptions,
) -> Result<DexterityMap> {
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be at least 1".into()));
    }
    let mut eval = DivisionEvaluator::new(target, config, options.clone())?;
    let fractions = if n_samples == 1 {
        vec![SegmentDivision::equal(n_divisions)?.fractions]
    } else {
        simplex_samples(n_divisions, n_samples, seed)?
    };
    let mut samples = Vec::with_capacity(n_samples);
    for f in fractions {
        let counts = SegmentDivision::new(f.clone())?.joint_counts(config.n_joints)?;
        let d_p = eval.d_p(&counts)?;
        samples.push(MapSample {
            fractions: f,
            joint_counts: counts,
            d_p,
        });
    }
    let argmax = samples
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if s.d_p > samples[best].d_p { i } else { best });
    Ok(DexterityMap {
        target,
        seed,
        samples,
        argmax,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivisionMax {
    pub n_divisions: usize,
    pub d_p: f64,
    pub joint_counts: Vec<usize>,
    pub fractions: Vec<f64>,
}

/// Best division per segment count: hill-climbing over joint-count
/// compositions (moving one joint across a boundary) from every distinct
/// composition hit by `n_samples` simplex samples.
pub fn max_dexterity_over_divisions(
    target: [f64; 2],
    config: &RobotConfig,
    division_counts: &[usize],
    n_samples: usize,
    seed: u64,
    options: &DexterityOptions,
) -> Result<Vec<DivisionMax>> {
    let mut eval = DivisionEvaluator::new(target, config, options.clone())?;
    let mut table = Vec::new();
    for &k in division_counts {
        if k == 0 || k > config.n_joints {
            return Err(Error::InvalidInput(format!(
                "cannot divide {} joints into {k} segments",
                config.n_joints
            )));
        }
        let mut starts: Vec<Vec<usize>> = Vec::new();
        for f in simplex_samples(k, n_samples.max(1), seed)? {
            let c = SegmentDivision::new(f)?.joint_counts(config.n_joints)?;
            if !starts.contains(&c) {
                starts.push(c);
            }
        }
        let mut best: Option<(f64, Vec<usize>)> = None;
        for start in starts {
            let mut cur = start;
            let mut cur_v = eval.d_p(&cur)?;
            loop {
                let mut improved = false;
                for i in 0..k.saturating_sub(1) {
                    for (from, to) in [(i, i + 1), (i + 1, i)] {
                        if cur[from] <= 1 {
                            continue;
                        }
                        let mut next = cur.clone();
                        next[from] -= 1;
                        next[to] += 1;
                        let v = eval.d_p(&next)?;
                        if v > cur_v {
                            cur = next;
                            cur_v = v;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            let better = match &best {
                None => true,
                Some((v, c)) => cur_v > *v || (cur_v == *v && cur < *c),
            };
            if better {
                best = Some((cur_v, cur));
            }
        }
        let (d_p, joint_counts) = best.expect("at least one start");
        table.push(DivisionMax {
            n_divisions: k,
            d_p,
            fractions: SegmentDivision::from_counts(&joint_counts)?.fractions,
            joint_counts,
        });
    }
    Ok(table)
}

/// CSV mirroring the "number of divisions / maximum D_p" table.
pub fn division_table_csv(rows: &[DivisionMax]) -> String {
    let mut out = String::from("divisions,max_dp_percent,joint_counts\n");
    for r in rows {
        let counts: Vec<String> = r.joint_counts.iter().map(usize::to_string).collect();
        out.push_str(&format!("{},{},{}\n", r.n_divisions, r.d_p, counts.join(" ")));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCandidate {
    pub target: [f64; 2],
    pub table: Vec<DivisionMax>,
    pub map_ratio: Option<f64>,
    pub score: f64,
}

/// Scores candidate targets for the reference robot. `goals` holds the wanted
/// maxima for 3, 4, ... divisions and the score is the summed absolute gap.
/// Maxima must not decrease with more divisions and the 3-division map should
/// spread by more than a factor 5. Returns candidates best first; infeasible
/// ones score infinity.
pub fn calibrate_reference_target(
    config: &RobotConfig,
    candidates: &[[f64; 2]],
    goals: &[f64],
    n_samples: usize,
    options: &DexterityOptions,
) -> Result<Vec<CalibrationCandidate>> {
    let divisions: Vec<usize> = (3..3 + goals.len()).collect();
    let mut out = Vec::new();
    for &target in candidates {
        let table = max_dexterity_over_divisions(target, config, &divisions, n_samples, REFERENCE_SEED, options)?;
        let map = dexterity_map(target, config, 3, n_samples, REFERENCE_SEED, options)?;
        let ratio = map.min_positive().map(|m| map.max() / m);
        let monotone = table.windows(2).all(|w| w[1].d_p >= w[0].d_p);
        let spread_ok = ratio.is_some_and(|r| r > 5.0);
        let score = if monotone && spread_ok {
            table.iter().zip(goals).map(|(r, g)| (r.d_p - g).abs()).sum()
        } else {
            f64::INFINITY
        };
        out.push(CalibrationCandidate {
            target,
            table,
            map_ratio: ratio,
            score,
        });
    }
    out.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(out)
}
