//! Tendon lengths of one joint, forward kinematics of the 7-joint robot, and a
//! constant-curvature bend with two joints locked.
//!
//!     cargo run -p rtr-core --example kinematics

use rtr_core::kinematics::{
    constant_curvature_solve, forward_kinematics, joint_angle_from_tendon, tendon_lengths, GroupTargets, JointAxis,
    LockPattern, RobotConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/spatial7.json");
    let cfg: RobotConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let geom = cfg.geometry;

    println!("theta_deg,l1,l2,l3,l4,recovered_deg");
    for deg in [-54.0, -30.0, 0.0, 15.0, 54.0] {
        let l = tendon_lengths(f64::to_radians(deg), &geom, JointAxis::X, &cfg.limits)?;
        let back = joint_angle_from_tendon(l.l2, &geom)?.to_degrees();
        println!("{deg},{:.4},{:.4},{:.4},{:.4},{back:.9}", l.l1, l.l2, l.l3, l.l4);
    }

    let angles: Vec<f64> = [10.0, -5.0, 20.0, 0.0, -15.0, 5.0, 30.0].map(f64::to_radians).to_vec();
    let p = forward_kinematics(&angles, &cfg)?;
    println!("\ntip {:.3?} mm, direction {:.4?}", p.tip().as_slice(), p.tip_direction().as_slice());

    // joints 3 and 5 held at 16 deg, the other X joints share what is left
    let lock = LockPattern::with_locked(7, &[(2, 16f64.to_radians()), (4, 16f64.to_radians())])?;
    let targets = GroupTargets {
        group_x_mm: Some(64.0),
        group_y_mm: None,
    };
    let sol = constant_curvature_solve(&targets, &cfg, &lock, &[0.0; 7])?;
    let deg: Vec<String> = sol.posture.angles.iter().map(|a| format!("{:.3}", a.to_degrees())).collect();
    println!("\nX group at 64 mm with joints 3,5 locked: [{}] deg", deg.join(", "));
    for w in &sol.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
