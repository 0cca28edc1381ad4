//! Planar dexterity at the reference target: best division per segment count,
//! then the 2000-sample map over three-segment divisions.
//!
//!     cargo run -p rtr-core --release --example dexterity [map.csv]

use rtr_core::dexterity::{
    dexterity_map, division_table_csv, max_dexterity_over_divisions, reference_robot, DexterityOptions,
    DEFAULT_MAP_SAMPLES, REFERENCE_SEED, REFERENCE_TARGET,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = reference_robot();
    let opts = DexterityOptions::default();
    println!("target {REFERENCE_TARGET:?} mm, seed {REFERENCE_SEED}");

    let table = max_dexterity_over_divisions(REFERENCE_TARGET, &cfg, &[3, 4, 5, 6], DEFAULT_MAP_SAMPLES, REFERENCE_SEED, &opts)?;
    print!("{}", division_table_csv(&table));

    let map = dexterity_map(REFERENCE_TARGET, &cfg, 3, DEFAULT_MAP_SAMPLES, REFERENCE_SEED, &opts)?;
    let best = &map.samples[map.argmax];
    println!(
        "\nmap: {} samples, D_p {:.2}%..{:.2}%, best joint counts {:?}",
        map.samples.len(),
        map.min_positive().unwrap_or(0.0),
        map.max(),
        best.joint_counts
    );
    if let Some(out) = std::env::args().nth(1) {
        std::fs::write(&out, map.to_csv())?;
        println!("map written to {out}");
    }
    Ok(())
}
