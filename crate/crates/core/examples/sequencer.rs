//! Runs a shipped motion script through a lock/actuate session, prints the
//! joint trajectory, summarises the device trace and replays the history.
//!
//!     cargo run -p rtr-core --example sequencer [preset-name | script.json]

use rtr_core::sequencer::{presets, replay, DeviceEvent, Session, SessionOptions, StepScript};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "contract-swing-extend".into());
    let script: StepScript = if arg.ends_with(".json") {
        serde_json::from_str(&std::fs::read_to_string(&arg)?)?
    } else {
        presets::by_name(&arg)?
    };

    let cfg = presets::robot();
    let mut s = Session::new(cfg.clone(), None, SessionOptions::default())?;
    println!("step,locked,angles_deg");
    for (i, step) in script.steps.iter().enumerate() {
        s.execute_step(step)?;
        let locked: Vec<String> = s.lock.locked_joints().map(|j| (j + 1).to_string()).collect();
        let deg: Vec<String> = s.angles().iter().map(|a| format!("{:.2}", a.to_degrees())).collect();
        println!("{},{},[{}]", i + 1, locked.join(" "), deg.join(" "));
    }

    let toggles = s.trace.iter().filter(|r| matches!(r.event, DeviceEvent::StateChange { .. })).count();
    let drives = s.trace.iter().filter(|r| matches!(r.event, DeviceEvent::Drive { .. })).count();
    println!("\ntrace: {} records, {toggles} lock changes, {drives} drive commands", s.trace.len());
    println!("obstacle clearance at the end: {:.2} mm", presets::obstacle().clearance(&s.posture));

    let replayed = replay(&s.history, &cfg)?;
    println!("replay matches: {}", replayed.last().map(|p| p.angles == s.posture.angles).unwrap_or(false));
    Ok(())
}
