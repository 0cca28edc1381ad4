//! Random lock/step scripts and the device-contract checks run over them.

use std::collections::BTreeSet;

use rand::Rng;
use rtr_core::kinematics::{group_tendon_length, RobotConfig, TendonGroup};
use rtr_core::sequencer::{
    replay, DeviceEvent, LockAction, LockRequest, Motor, MotionStep, Session, SessionOptions, TendonCommand,
    TraceRecord,
};

#[derive(Debug, Clone)]
pub enum Action {
    Toggle { joint: usize, lock: bool },
    Step { unlock_mask: u8, lock_mask: u8, dx: Option<f64>, dy: Option<f64> },
}

pub fn random_actions<R: Rng>(rng: &mut R, n: usize) -> Vec<Action> {
    let delta = |rng: &mut R| rng.random_bool(0.7).then(|| rng.random_range(-14.0..14.0));
    (0..n)
        .map(|_| {
            if rng.random_range(0..5) == 0 {
                Action::Toggle {
                    joint: rng.random_range(0..7),
                    lock: rng.random(),
                }
            } else {
                Action::Step {
                    unlock_mask: rng.random(),
                    lock_mask: rng.random(),
                    dx: delta(rng),
                    dy: delta(rng),
                }
            }
        })
        .collect()
}

/// Turns a random step into one that is valid against the current lock pattern.
pub fn concrete_step(s: &Session, unlock_mask: u8, lock_mask: u8, dx: Option<f64>, dy: Option<f64>) -> MotionStep {
    let n = s.config.n_joints;
    let unlock: Vec<usize> = (0..n).filter(|&j| unlock_mask >> j & 1 == 1 && s.lock.is_locked(j)).collect();
    let lock = (0..n)
        .filter(|&j| lock_mask >> j & 1 == 1 && (!s.lock.is_locked(j) || unlock.contains(&j)))
        .map(|j| LockRequest { joint: j + 1 })
        .collect();
    let a = s.angles();
    MotionStep {
        unlock: unlock.iter().map(|j| j + 1).collect(),
        tendon: TendonCommand {
            group_x_mm: dx.map(|d| group_tendon_length(&s.config, a, TendonGroup::X) + d),
            group_y_mm: dy.map(|d| group_tendon_length(&s.config, a, TendonGroup::Y) + d),
            tensions: None,
        },
        lock,
        physics: None,
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Checks motor budget, single engagement and the per-toggle switch sequence.
pub fn check_trace(trace: &[TraceRecord]) -> Result<(), String> {
    let allowed: BTreeSet<Motor> = (1..=4).map(Motor::Driving).chain([Motor::Selector, Motor::Winder]).collect();
    let mut used = BTreeSet::new();
    let mut engaged: Option<usize> = None;
    let mut toggle: Vec<&DeviceEvent> = Vec::new();
    for (i, r) in trace.iter().enumerate() {
        ensure!(r.seq == i as u64, "sequence gap at {i}");
        for m in &r.motors {
            ensure!(allowed.contains(m), "unknown motor {m:?}");
            used.insert(*m);
        }
        match &r.event {
            DeviceEvent::Select { .. } => {
                ensure!(engaged.is_none(), "selector moved while a pulley is engaged");
                ensure!(toggle.is_empty(), "select inside another toggle");
                toggle.push(&r.event);
            }
            DeviceEvent::Engage { joint } => {
                ensure!(engaged.is_none(), "two pulleys engaged at record {i}");
                engaged = Some(*joint);
                toggle.push(&r.event);
            }
            DeviceEvent::Release { joint, switch_open } => {
                ensure!(engaged == Some(*joint), "release of a pulley that is not engaged");
                ensure!(*switch_open, "switch still closed after slack release");
                engaged = None;
                toggle.push(&r.event);
                let pos = |f: fn(&DeviceEvent) -> bool| toggle.iter().position(|e| f(e));
                let count = |f: fn(&DeviceEvent) -> bool| toggle.iter().filter(|e| f(e)).count();
                let is_close = |e: &DeviceEvent| matches!(e, DeviceEvent::SwitchClosed { .. });
                let is_change = |e: &DeviceEvent| matches!(e, DeviceEvent::StateChange { .. });
                ensure!(count(is_close) == 1, "toggle without exactly one switch close");
                ensure!(count(is_change) == 1, "toggle without exactly one state change");
                ensure!(pos(is_close) < pos(is_change), "state changed before the switch closed");
                toggle.clear();
            }
            DeviceEvent::Drive { channels, .. } => {
                ensure!(engaged.is_none(), "driving while a pulley is engaged");
                ensure!(channels.iter().all(|c| (1..=4).contains(c)), "bad drive channel");
            }
            _ => {
                ensure!(engaged.is_some(), "{:?} without an engaged pulley", r.event);
                toggle.push(&r.event);
            }
        }
        ensure!(r.engaged == engaged, "engaged field disagrees at record {i}");
    }
    ensure!(engaged.is_none(), "trace ends engaged");
    ensure!(used.len() <= 6, "{} motors used", used.len());
    Ok(())
}

#[derive(Debug, Default)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Runs the actions on a fresh 7-joint session and checks every invariant.
pub fn run_actions(actions: &[Action]) -> Result<RunStats, String> {
    let cfg = RobotConfig::spatial(7).unwrap();
    let mut s = Session::new(cfg.clone(), None, SessionOptions::default()).unwrap();
    let mut postures = vec![s.posture.clone()];
    let mut locks = vec![s.lock.clone()];
    let mut stats = RunStats::default();
    let mut expected_entries = 0;
    for a in actions {
        let before = s.clone();
        let ok = match *a {
            Action::Toggle { joint, lock } => {
                let action = if lock { LockAction::Lock } else { LockAction::Unlock };
                s.toggle_lock(joint, action).is_ok()
            }
            Action::Step { unlock_mask, lock_mask, dx, dy } => {
                let step = concrete_step(&s, unlock_mask, lock_mask, dx, dy);
                s.execute_step(&step).is_ok()
            }
        };
        if ok {
            stats.accepted += 1;
            if matches!(a, Action::Step { .. }) || s.trace.len() > before.trace.len() {
                expected_entries += 1;
            }
        } else {
            stats.rejected += 1;
            ensure!(s == before, "failed action {a:?} changed the session");
        }
        ensure!(s.history.entries.len() == expected_entries, "history length off after {a:?}");
        ensure!(s.pack.is_idle(), "pack not idle between actions");
        ensure!(s.pack.motor_count() == 6, "motor count");
        postures.push(s.posture.clone());
        locks.push(s.lock.clone());
    }
    for w in 0..postures.len() - 1 {
        for j in 0..7 {
            if let (Some(a), Some(b)) = (locks[w].locked_angle(j), locks[w + 1].locked_angle(j)) {
                if a.to_bits() == b.to_bits() {
                    ensure!(
                        postures[w].angles[j].to_bits() == a.to_bits() && postures[w + 1].angles[j].to_bits() == a.to_bits(),
                        "locked joint {} drifted",
                        j + 1
                    );
                }
            }
        }
    }
    check_trace(&s.trace)?;
    let replayed = replay(&s.history, &cfg).map_err(|e| e.to_string())?;
    ensure!(replayed.len() == s.history.entries.len() + 1, "replay length");
    for (p, e) in replayed.iter().skip(1).zip(&s.history.entries) {
        ensure!(p.angles == e.angles, "replay diverged");
    }
    ensure!(replayed.last().unwrap().angles == s.posture.angles, "replay end differs");
    Ok(stats)
}
