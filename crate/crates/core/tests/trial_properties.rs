//! End-to-end properties of simulated trials.

use twin_teleop::channel::{ChannelParams, ChannelStatus};
use twin_teleop::controller::{StrategyKind, TeleopMode};
use twin_teleop::harness::{run_trial, run_trial_traced, ChannelModel, SeedStream, TrialConfig, TrialTrace};
use twin_teleop::operator::OperatorParams;
use twin_teleop::scene::{SceneEvent, TaskPhase};

const DT: f64 = 0.01;

/// Index of the tick on which the twin finished the task.
fn twin_done_tick(trace: &TrialTrace) -> usize {
    trace
        .ticks
        .iter()
        .position(|t| t.twin_events.contains(&SceneEvent::PhaseAdvanced { phase: TaskPhase::Done }))
        .expect("twin finished")
}

fn cfg(strategy: StrategyKind, seed: u64, delay: f64) -> TrialConfig {
    TrialConfig {
        strategy,
        seed,
        channel: ChannelModel::Stochastic(ChannelParams::default()),
        operator: OperatorParams { reacquisition_delay: delay, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn lock_time_accounting_oracle() {
    // With no reacquisition delay the baseline loses exactly the outage time
    // that falls inside its own run; replay loses only a short catch-up tail.
    for seed in SeedStream::new(3).seeds(6) {
        let base_cfg = cfg(StrategyKind::Baseline, seed, 0.0);
        let base = run_trial(&base_cfg).unwrap();
        let replay = run_trial(&cfg(StrategyKind::Replay, seed, 0.0)).unwrap();
        let schedule = base_cfg.channel.schedule(base_cfg.max_duration, seed).unwrap();
        let overlapping = schedule.down_time_within(0.0, base.completion_time);
        let diff = base.completion_time - replay.completion_time;
        let rel = (diff - overlapping).abs() / base.completion_time;
        assert!(rel <= 0.03, "seed {seed}: diff {diff} vs outage {overlapping} (rel {rel})");
        // The baseline's outage time is the overlapping down time, to a tick per outage.
        let slack = f64::from(base.outage_count) * DT + 1e-9;
        assert!((base.time_outage - overlapping).abs() <= slack, "{} vs {overlapping}", base.time_outage);
    }
}

#[test]
fn replay_never_slower_than_baseline() {
    for seed in SeedStream::new(8).seeds(8) {
        for delay in [0.0, 0.5] {
            let b = run_trial(&cfg(StrategyKind::Baseline, seed, delay)).unwrap();
            let r = run_trial(&cfg(StrategyKind::Replay, seed, delay)).unwrap();
            assert!(r.completion_time <= b.completion_time + 0.01, "seed {seed} delay {delay}: {r:?} vs {b:?}");
        }
    }
}

#[test]
fn baseline_time_nondecreasing_in_delay() {
    let seed = SeedStream::new(21).seeds(1)[0];
    let mut last = 0.0;
    for delay in [0.0, 0.25, 0.5, 1.0, 2.0] {
        let t = run_trial(&cfg(StrategyKind::Baseline, seed, delay)).unwrap().completion_time;
        assert!(t >= last, "delay {delay}: {t} < {last}");
        last = t;
    }
}

#[test]
fn replay_operator_effort_independent_of_schedule() {
    // Commands the operator needed to finish the task on the twin.
    let effort = |trace: &TrialTrace| {
        let done = twin_done_tick(trace);
        trace.ticks[..=done].iter().filter(|t| t.output.twin_command.is_some()).count()
    };
    let counts: Vec<usize> = SeedStream::new(5)
        .seeds(4)
        .into_iter()
        .map(|seed| effort(&run_trial_traced(&cfg(StrategyKind::Replay, seed, 0.5)).unwrap().1))
        .collect();
    let (_, no_outage) = run_trial_traced(&TrialConfig {
        channel: ChannelModel::AlwaysUp,
        ..cfg(StrategyKind::Replay, 0, 0.5)
    })
    .unwrap();
    let reference = effort(&no_outage);
    assert!(counts.iter().all(|&c| c == reference), "{counts:?} vs {reference}");
}

#[test]
fn baseline_command_wall_time_exceeds_replay_by_outages() {
    let seed = SeedStream::new(13).seeds(1)[0];
    let (b, bt) = run_trial_traced(&cfg(StrategyKind::Baseline, seed, 0.0)).unwrap();
    let (_, rt) = run_trial_traced(&cfg(StrategyKind::Replay, seed, 0.0)).unwrap();
    let done_at = |t: &TrialTrace| t.ticks[twin_done_tick(t)].now;
    let schedule = cfg(StrategyKind::Baseline, seed, 0.0).channel.schedule(600.0, seed).unwrap();
    let overlap = schedule.down_time_within(0.0, b.completion_time);
    let slack = f64::from(b.outage_count) * DT;
    assert!(done_at(&bt) - done_at(&rt) >= overlap - slack, "{} - {} vs {overlap}", done_at(&bt), done_at(&rt));
}

#[test]
fn completed_replay_trials_end_converged() {
    for seed in SeedStream::new(34).seeds(5) {
        let (m, trace) = run_trial_traced(&cfg(StrategyKind::Replay, seed, 0.5)).unwrap();
        assert!(m.completed);
        let last = trace.ticks.last().unwrap();
        if last.output.mode == TeleopMode::Normal {
            assert!(last.divergence <= trace.command_quantum + 1e-12, "seed {seed}: {}", last.divergence);
        }
        for w in trace.ticks.windows(2) {
            if w[0].output.mode == TeleopMode::Recovery && w[1].output.mode == TeleopMode::Normal {
                assert!(w[1].divergence <= trace.command_quantum + 1e-12);
            }
        }
        assert!(m.max_divergence > 0.0);
        let sum = m.time_normal + m.time_outage + m.time_recovery;
        assert!((sum - m.completion_time).abs() <= 0.01 + 1e-9);
        // Modes agree with link: never Recovery while down, never Outage while up.
        for t in &trace.ticks {
            match t.link {
                ChannelStatus::Down => assert_eq!(t.output.mode, TeleopMode::Outage),
                ChannelStatus::Up => assert_ne!(t.output.mode, TeleopMode::Outage),
            }
        }
    }
}
