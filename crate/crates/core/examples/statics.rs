//! Static equilibrium of the 7-joint robot under tendon tensions and a payload
//! hung over a fixed pulley, with and without the first four joints locked.
//!
//!     cargo run -p rtr-core --release --example statics

use rtr_core::kinematics::{LockPattern, RobotConfig};
use rtr_core::statics::{solve_with_payload, ExternalLoad, FrictionModel, StaticsOptions, TendonTensions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RobotConfig::spatial(7)?;
    let friction = FrictionModel::new(0.085);
    let anchor = [0.0, -150.0, 70.0].into();
    let rows = [
        (false, 0.0, 0.98, 0.0),
        (false, 0.0, 1.96, 0.0),
        (false, 0.0, 0.0, 0.0196),
        (false, 0.98, 0.0, 0.0196),
        (true, 0.98, 0.0, 0.0196),
        (true, 0.0, 0.98, 0.0196),
    ];
    println!("locked,f1_n,f2_n,payload_n,angles_deg,max_residual_nmm,iterations,payload_error_rad");
    for (locked, f1, f2, fe) in rows {
        let lock = if locked {
            LockPattern::with_locked(7, &[(0, 0.0), (1, 0.0), (2, 0.0), (3, 0.0)])?
        } else {
            LockPattern::all_free(7)
        };
        let load = if fe > 0.0 { ExternalLoad::pulley(fe, anchor) } else { ExternalLoad::none() };
        let r = solve_with_payload(
            &cfg,
            &TendonTensions::new(f1, f2, 0.0, 0.0),
            &load,
            &lock,
            &friction,
            &StaticsOptions::default(),
        )?;
        let angles: Vec<String> = r.posture.angles.iter().map(|a| format!("{:.3}", a.to_degrees())).collect();
        println!(
            "{},{f1},{f2},{fe},[{}],{:.2e},{},{}",
            if locked { "1-4" } else { "none" },
            angles.join(" "),
            r.max_residual(),
            r.iterations,
            r.payload_error.map_or("-".into(), |e| format!("{e:.2e}")),
        );
    }
    Ok(())
}
