//! Reproduces the choice of the reference dexterity target. A coarse scan keeps
//! targets whose 3-division maximum lands within 5 points of the goal, then each
//! survivor is scored against the whole goal table for 3 to 6 divisions
//! (monotone maxima and map spread > 5 are required).
//!
//!     cargo run -p rtr-core --release --example calibrate_reference_target

use rtr_core::dexterity::{
    calibrate_reference_target, max_dexterity_over_divisions, reference_robot, DexterityOptions, REFERENCE_SEED,
};

const GOALS: [f64; 4] = [21.85, 55.72, 61.50, 66.75];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = reference_robot();
    let opts = DexterityOptions::default();

    let mut screened = Vec::new();
    for x in (10..=58).step_by(4) {
        for y in (0..=50).step_by(4) {
            let t = [x as f64, y as f64];
            if t[0].hypot(t[1]) >= cfg.total_length() {
                continue;
            }
            let d3 = max_dexterity_over_divisions(t, &cfg, &[3], 200, REFERENCE_SEED, &opts)?[0].d_p;
            if (d3 - GOALS[0]).abs() <= 5.0 {
                screened.push(t);
            }
        }
    }
    println!("{} targets pass the screen", screened.len());

    let ranked = calibrate_reference_target(&cfg, &screened, &GOALS, 2000, &opts)?;
    println!("x_mm,y_mm,score,map_ratio,dp_3,dp_4,dp_5,dp_6");
    for c in ranked.iter().take(10) {
        let dp: Vec<String> = c.table.iter().map(|r| format!("{:.2}", r.d_p)).collect();
        println!(
            "{},{},{:.3},{},{}",
            c.target[0],
            c.target[1],
            c.score,
            c.map_ratio.map_or("-".into(), |r| format!("{r:.2}")),
            dp.join(",")
        );
    }
    Ok(())
}
