//! Reachable workspaces of the 6-joint planar robot: two- and three-segment
//! TDRs against the fully reconfigurable robot on a shared occupancy grid.
//! Pass a directory to also write the three point clouds as CSV.
//!
//!     cargo run -p rtr-core --release --example workspace_containment [out_dir]

use std::path::PathBuf;

use rtr_core::kinematics::RobotConfig;
use rtr_core::workspace::{containment_fraction, sample_workspace_rtr, sample_workspace_tdr, SamplingOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/fig5_planar6.json");
    let cfg: RobotConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let opts = SamplingOptions::exhaustive(6f64.to_radians());

    let clouds = [
        ("tdr2", sample_workspace_tdr(&cfg, 2, &opts)?),
        ("tdr3", sample_workspace_tdr(&cfg, 3, &opts)?),
        ("rtr", sample_workspace_rtr(&cfg, &opts)?),
    ];
    for (name, c) in &clouds {
        println!(
            "{name}: {} configurations, {} cells, area {:.1} mm^2",
            c.info.configurations,
            c.grid.len(),
            c.grid.measure()
        );
    }
    println!("tdr2 in tdr3: {}", containment_fraction(&clouds[0].1, &clouds[1].1)?);
    println!("tdr3 in rtr:  {}", containment_fraction(&clouds[1].1, &clouds[2].1)?);

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        std::fs::create_dir_all(&dir)?;
        for (name, c) in &clouds {
            std::fs::write(dir.join(format!("{name}.csv")), c.to_csv())?;
        }
        println!("clouds written to {}", dir.display());
    }
    Ok(())
}
