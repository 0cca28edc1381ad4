//! One pass/fail line per acceptance criterion of the core library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtr_core::dexterity::{
    dexterity_map, max_dexterity_over_divisions, reference_robot, DexterityOptions, REFERENCE_SEED,
    REFERENCE_TARGET,
};
use rtr_core::kinematics::{
    joint_angle_from_tendon, tendon_lengths, JointAxis, JointGeometry, JointLimits, LockPattern,
    RobotConfig,
};
use rtr_core::sequencer::{presets, MotionStep, Session, SessionOptions, TendonCommand};
use rtr_core::statics::{
    apply_friction, solve_with_payload, ExternalLoad, FrictionModel, FrictionPolicy, StaticsOptions,
    TendonTensions, PAYLOAD_DIRECTION_TOL,
};
use rtr_core::workspace::{containment_fraction, sample_workspace_rtr, sample_workspace_tdr, SamplingOptions};

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn kinematic_round_trip() -> Outcome {
    let geom = JointGeometry::new(5.0, 5.0, 4.0).unwrap();
    let limits = JointLimits::symmetric_deg(54.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let theta = rng.random_range(-54.0f64..=54.0).to_radians();
        let l = tendon_lengths(theta, &geom, JointAxis::X, &limits).map_err(|e| e.to_string())?;
        let back = joint_angle_from_tendon(l.l2, &geom).map_err(|e| e.to_string())?;
        let mirrored = -joint_angle_from_tendon(l.l1, &geom).map_err(|e| e.to_string())?;
        worst = worst.max((back - theta).abs()).max((mirrored - theta).abs());
    }
    let took = start.elapsed();
    check!(worst <= 1e-9, "worst error {worst:e} rad");
    check!(took < Duration::from_secs(1), "took {took:?}");
    Ok(format!("max error {worst:.1e} rad in {took:.1?}"))
}

fn constant_curvature_table_two() -> Outcome {
    let cfg = presets::robot();
    let mut worst = 0.0f64;
    for (case, locked) in [
        (1, vec![(5, 0.0), (3, 0.0), (2, 16.0), (1, 0.0)]),
        (2, vec![(5, 0.0), (4, 16.0), (3, 0.0), (2, 16.0), (1, 0.0)]),
    ] {
        let pairs: Vec<(usize, f64)> = locked.iter().map(|&(j, d)| (j, f64::to_radians(d))).collect();
        let lock = LockPattern::with_locked(7, &pairs).unwrap();
        let free: Vec<usize> = lock.free_joints().collect();
        let mut s = Session::new(cfg.clone(), Some(lock), SessionOptions::default()).unwrap();
        for len in [59.0, 63.0, 67.0, 72.0] {
            let step = MotionStep {
                tendon: TendonCommand {
                    group_x_mm: Some(len),
                    ..Default::default()
                },
                ..Default::default()
            };
            s.execute_step(&step).map_err(|e| format!("case {case}: {e}"))?;
            let a = s.angles();
            let spread = free.iter().map(|&j| a[j]).fold(f64::NEG_INFINITY, f64::max)
                - free.iter().map(|&j| a[j]).fold(f64::INFINITY, f64::min);
            worst = worst.max(spread);
            for &(j, rad) in &pairs {
                check!(a[j].to_bits() == rad.to_bits(), "case {case}: joint {} moved", j + 1);
            }
        }
    }
    for case in [1u8, 2] {
        let mut s = Session::new(cfg.clone(), None, SessionOptions::default()).unwrap();
        s.run_script(&presets::table_two(case).unwrap())
            .map_err(|(i, e)| format!("preset case {case} step {i}: {e}"))?;
        let free: Vec<usize> = s.lock.free_joints().collect();
        let a = s.angles();
        for &j in &free {
            worst = worst.max((a[j] - a[free[0]]).abs());
        }
        let got = a[free[0]].to_degrees();
        check!((got - presets::TABLE_TWO_FREE_DEG).abs() < 1e-6, "preset case {case}: free angle {got}");
    }
    check!(worst <= 1e-9, "free-joint spread {worst:e} rad");
    Ok(format!(
        "free spread {worst:.1e} rad, locked joints exact, presets reach {} deg",
        presets::TABLE_TWO_FREE_DEG
    ))
}

fn statics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tol = 0.011f64.to_radians();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case_no in 0..20 {
        let n = 1 + case_no % 3;
        let case = common::Case {
            f: [
                rng.random_range(0.0..1.5),
                rng.random_range(0.0..1.5),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ],
            load: rng.random_range(0.0..0.1),
            load_angle: rng.random_range(-3.1..3.1),
        };
        let solved = common::solve(&case, n, 0.0);
        let oracle = common::minimise(&case, n);
        for (s, o) in solved.iter().zip(&oracle) {
            worst = worst.max((s - o).abs());
        }
    }
    let took = start.elapsed();
    check!(worst <= tol, "worst gap {:.4} deg", worst.to_degrees());
    check!(took < Duration::from_secs(120), "took {took:?}");
    Ok(format!("worst gap {:.4} deg over 20 cases in {took:.1?}", worst.to_degrees()))
}

fn table_four_residuals() -> Outcome {
    let cfg = RobotConfig::spatial(7).unwrap();
    let friction = FrictionModel::new(0.085);
    let anchor = [0.0, -150.0, 70.0].into();
    let rows: [(bool, f64, f64, f64); 6] = [
        (false, 0.0, 0.98, 0.0),
        (false, 0.0, 1.96, 0.0),
        (false, 0.0, 0.0, 0.0196),
        (false, 0.98, 0.0, 0.0196),
        (true, 0.98, 0.0, 0.0196),
        (true, 0.0, 0.98, 0.0196),
    ];
    let mut worst_res = 0.0f64;
    let mut worst_e = 0.0f64;
    for (i, (locked, f1, f2, fe)) in rows.into_iter().enumerate() {
        let lock = if locked {
            LockPattern::with_locked(7, &[(0, 0.0), (1, 0.0), (2, 0.0), (3, 0.0)]).unwrap()
        } else {
            LockPattern::all_free(7)
        };
        let load = if fe > 0.0 { ExternalLoad::pulley(fe, anchor) } else { ExternalLoad::none() };
        let t = TendonTensions::new(f1, f2, 0.0, 0.0);
        let r = solve_with_payload(&cfg, &t, &load, &lock, &friction, &StaticsOptions::default())
            .map_err(|e| format!("row {}: {e}", i + 1))?;
        worst_res = worst_res.max(r.max_residual());
        if fe > 0.0 {
            let e = r.payload_error.ok_or("payload error missing")?;
            worst_e = worst_e.max(e);
        }
    }
    check!(worst_res <= 1e-8, "residual {worst_res:e} N*mm");
    check!(worst_e <= PAYLOAD_DIRECTION_TOL, "direction error {worst_e:e} rad");
    Ok(format!("6 rows, max residual {worst_res:.1e} N*mm, max E {worst_e:.1e} rad"))
}

fn workspace_containment() -> Outcome {
    let cfg = RobotConfig::planar(6).unwrap().with_link_length(10.0).unwrap();
    let opts = SamplingOptions::exhaustive(6f64.to_radians());
    let start = Instant::now();
    let tdr2 = sample_workspace_tdr(&cfg, 2, &opts).map_err(|e| e.to_string())?;
    let tdr3 = sample_workspace_tdr(&cfg, 3, &opts).map_err(|e| e.to_string())?;
    let rtr = sample_workspace_rtr(&cfg, &opts).map_err(|e| e.to_string())?;
    let a = containment_fraction(&tdr2, &tdr3).unwrap();
    let b = containment_fraction(&tdr3, &rtr).unwrap();
    let took = start.elapsed();
    check!(a == 1.0 && b == 1.0, "fractions {a} and {b}");
    check!(took < Duration::from_secs(300), "took {took:?}");
    Ok(format!(
        "TDR2 in TDR3 {a}, TDR3 in RTR {b}; cells {} / {} / {} at 6 deg in {took:.1?}",
        tdr2.grid.len(),
        tdr3.grid.len(),
        rtr.grid.len()
    ))
}

fn dexterity_trend() -> Outcome {
    let cfg = reference_robot();
    let t = max_dexterity_over_divisions(
        REFERENCE_TARGET,
        &cfg,
        &[3, 4, 5, 6],
        2000,
        REFERENCE_SEED,
        &DexterityOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let dp: Vec<f64> = t.iter().map(|r| r.d_p).collect();
    check!(dp.windows(2).all(|w| w[0] <= w[1]), "not monotone: {dp:?}");
    check!((dp[0] - 21.85).abs() <= 5.0, "3-division max {:.2}% outside 21.85 +- 5", dp[0]);
    Ok(format!(
        "max D_p 3..6 = {}",
        dp.iter().map(|d| format!("{d:.2}%")).collect::<Vec<_>>().join(", ")
    ))
}

fn dexterity_map_protocol() -> Outcome {
    let cfg = reference_robot();
    let opts = DexterityOptions::default();
    let start = Instant::now();
    let a = dexterity_map(REFERENCE_TARGET, &cfg, 3, 2000, REFERENCE_SEED, &opts).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let b = dexterity_map(REFERENCE_TARGET, &cfg, 3, 2000, REFERENCE_SEED, &opts).map_err(|e| e.to_string())?;
    check!(a.to_csv() == b.to_csv(), "map output differs between runs");
    check!(took < Duration::from_secs(120), "took {took:?}");
    let lo = a.min_positive().ok_or("no positive sample")?;
    let ratio = a.max() / lo;
    check!(ratio > 5.0, "max/min ratio {ratio:.2}");
    Ok(format!("2000 samples in {took:.1?}, span {lo:.2}%..{:.2}% (ratio {ratio:.2})", a.max()))
}

fn friction_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mu: f64 = rng.random_range(0.0..0.5);
        let theta: f64 = rng.random_range(-1.0..1.0);
        let signed = FrictionModel {
            mu,
            policy: FrictionPolicy::Signed,
        };
        let got = apply_friction(1.0, theta, &signed);
        worst = worst.max((got - (mu * theta).exp()).abs());
        let mag = apply_friction(1.0, theta, &FrictionModel::new(mu));
        worst = worst.max((mag - (mu * theta.abs()).exp()).abs());

        let thetas: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let chained = thetas.iter().fold(1.0, |t, &th| apply_friction(t, th, &signed));
        let total: f64 = thetas.iter().sum();
        worst = worst.max((chained - (mu * total).exp()).abs());
    }
    check!(worst <= 1e-12, "worst error {worst:e}");
    Ok(format!("100 cases, worst error {worst:.1e}"))
}

fn sequencer_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut accepted, mut rejected) = (0, 0);
    for script in 0..50 {
        let actions = common::device::random_actions(&mut rng, 20);
        let stats = common::device::run_actions(&actions).map_err(|e| format!("script {script}: {e}"))?;
        accepted += stats.accepted;
        rejected += stats.rejected;
    }
    check!(rejected > 0 && accepted > 0, "scripts never exercised both paths");
    Ok(format!("50 scripts x 20 actions: {accepted} accepted, {rejected} rolled back"))
}

#[test]
fn acceptance() {
    let criteria: [(&str, Criterion); 9] = [
        ("kinematic round trip", kinematic_round_trip),
        ("constant curvature (Table II)", constant_curvature_table_two),
        ("statics oracle equivalence", statics_oracle),
        ("equilibrium residuals (Table IV inputs)", table_four_residuals),
        ("workspace containment", workspace_containment),
        ("dexterity trend (Table III)", dexterity_trend),
        ("dexterity map protocol", dexterity_map_protocol),
        ("friction law", friction_law),
        ("sequencer invariants", sequencer_invariants),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let line = match &outcome {
            Ok(detail) => format!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => format!("FAIL [{}] {name}: {why}", i + 1),
        };
        // bypasses the harness capture so the lines land in the test log
        let _ = writeln!(err, "{line}");
        if outcome.is_err() {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
