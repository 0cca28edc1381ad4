//! Independent statics oracles shared by the integration tests.
#![allow(dead_code)]

pub mod device;

use nalgebra::Vector3;
use rtr_core::kinematics::{LockPattern, RobotConfig};
use rtr_core::statics::{solve_statics, ExternalLoad, FrictionModel, StaticsOptions, TendonTensions};

pub const D1: f64 = 5.0;
pub const D3: f64 = 5.0;
pub const R: f64 = 4.0;
pub const K: f64 = 50.0;

/// Hole-to-hole chord across one X joint for a tendon at lateral offset `s`.
pub fn chord(s: f64, theta: f64) -> f64 {
    let (sn, cs) = theta.sin_cos();
    let dy = s * cs - D1 * sn - s;
    let dz = s * sn + D1 * cs + D3;
    (dy * dy + dz * dz).sqrt()
}

/// Planar tip (y, z) with every joint about X and pitch d1 + d3.
pub fn planar_tip(angles: &[f64]) -> (f64, f64) {
    let mut phi = 0.0;
    let (mut y, mut z) = (0.0, 0.0);
    for a in angles {
        phi += a;
        y -= (D1 + D3) * phi.sin();
        z += (D1 + D3) * phi.cos();
    }
    (y, z)
}

pub struct Case {
    pub f: [f64; 4],
    pub load: f64,
    pub load_angle: f64,
}

pub fn energy(case: &Case, angles: &[f64]) -> f64 {
    let offsets = [R, -R, 0.0, 0.0];
    let mut v = 0.0;
    for a in angles {
        v += 0.5 * K * a * a;
        for (f, s) in case.f.iter().zip(offsets) {
            v += f * chord(s, *a);
        }
    }
    let (y, z) = planar_tip(angles);
    let (fy, fz) = (
        case.load * case.load_angle.sin(),
        case.load * case.load_angle.cos(),
    );
    v - (fy * y + fz * z)
}

/// Coarse-to-fine exhaustive search ending on a 0.01 deg lattice.
pub fn minimise(case: &Case, n: usize) -> Vec<f64> {
    let mut centre = vec![0.0f64; n];
    let stages = [(1.0f64, 54.0f64), (0.1, 2.0), (0.01, 0.2)];
    for (step_deg, half_deg) in stages {
        let steps = (half_deg / step_deg).round() as i64;
        let mut best = (f64::INFINITY, centre.clone());
        let mut idx = vec![-steps; n];
        loop {
            let angles: Vec<f64> = centre
                .iter()
                .zip(&idx)
                .map(|(c, &i)| {
                    let deg = (c.to_degrees() / step_deg).round() * step_deg + i as f64 * step_deg;
                    deg.clamp(-54.0, 54.0).to_radians()
                })
                .collect();
            let e = energy(case, &angles);
            if e < best.0 {
                best = (e, angles);
            }
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] <= steps {
                    break;
                }
                idx[k] = -steps;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        centre = best.1;
    }
    centre
}

pub fn solve(case: &Case, n: usize, mu: f64) -> Vec<f64> {
    let cfg = RobotConfig::planar(n).unwrap();
    let dir = Vector3::new(0.0, case.load_angle.sin(), case.load_angle.cos());
    let load = ExternalLoad::in_base_frame(case.load, dir);
    let t = TendonTensions::new(case.f[0], case.f[1], case.f[2], case.f[3]);
    solve_statics(
        &cfg,
        &t,
        &load,
        &LockPattern::all_free(n),
        &FrictionModel::new(mu),
        &StaticsOptions::default(),
    )
    .unwrap()
    .posture
    .angles
}

/// Root of `-T dl/dtheta - K theta` located on a uniform grid.
pub fn grid_root(tension: f64, step: f64) -> f64 {
    let moment = |t: f64| {
        let h = 1e-6;
        -tension * (chord(-R, t + h) - chord(-R, t - h)) / (2.0 * h) - K * t
    };
    let n = (1.0 / step) as i64;
    let mut best = (f64::INFINITY, 0.0);
    for i in -n..=n {
        let t = i as f64 * step;
        let m = moment(t).abs();
        if m < best.0 {
            best = (m, t);
        }
    }
    best.1
}
