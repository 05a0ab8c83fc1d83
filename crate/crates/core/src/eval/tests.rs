use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;

use super::*;
use crate::env::oracle::plan_floor;
use crate::env::{DifficultyConfig, Heading};
use crate::model::ModelConfig;

fn env_cfg() -> EnvConfig {
    EnvConfig { frame_height: 16, frame_width: 16, time_budget: 30, floor_time_bonus: 10, ..EnvConfig::default() }
}

fn model() -> AgentModel<f64> {
    AgentModel::new(&ModelConfig { hidden_size: 16, ..ModelConfig::reduced() }, &mut stream(0, "init", 0)).unwrap()
}

fn small_protocol() -> EvalProtocol {
    EvalProtocol { seeds: vec![100, 101], repetitions: 2, themes: vec![Theme::Ancient, Theme::Future], ..EvalProtocol::default() }
}

fn episode(theme: Theme, floor: u32, length: u32) -> EvalEpisode {
    EvalEpisode { theme, seed: 0, repetition: 0, floor, length, episode_return: f64::from(floor), termination: None }
}

#[test]
fn default_protocol_runs_75_episodes_on_held_out_seeds() {
    let p = EvalProtocol::default();
    assert_eq!(p.episode_count(), 75);
    assert!(!p.deterministic);
    p.validate(&(0..100).collect::<Vec<_>>()).unwrap();
}

#[test]
fn overlapping_or_empty_protocols_are_refused() {
    let p = EvalProtocol::default();
    assert!(matches!(p.validate(&[3, 104]), Err(Error::Config(_))));
    for bad in [
        EvalProtocol { seeds: vec![], ..EvalProtocol::default() },
        EvalProtocol { repetitions: 0, ..EvalProtocol::default() },
        EvalProtocol { themes: vec![], ..EvalProtocol::default() },
    ] {
        assert!(bad.validate(&[]).is_err());
    }
    let mut m = model();
    assert!(matches!(evaluate(&mut m, &env_cfg(), &p, &[101]), Err(Error::Config(_))));
}

#[test]
fn evaluation_covers_the_protocol_in_order_and_is_deterministic() {
    let p = small_protocol();
    let mut m = model();
    let report = evaluate(&mut m, &env_cfg(), &p, &[0, 1]).unwrap();
    assert_eq!(report.episodes.len(), p.episode_count());
    assert_eq!(report.records.len(), 8);
    let keys: Vec<_> = report.episodes.iter().map(|e| (e.theme, e.seed, e.repetition)).collect();
    assert_eq!(keys[0], (Theme::Ancient, 100, 0));
    assert_eq!(keys[3], (Theme::Ancient, 101, 1));
    assert_eq!(keys[4], (Theme::Future, 100, 0));
    assert_eq!(evaluate(&mut model(), &env_cfg(), &p, &[]).unwrap(), report);

    for (e, r) in report.episodes.iter().zip(&report.records) {
        assert_eq!(e.length as usize, r.steps.len());
        assert_eq!(e.floor, r.final_floor());
        assert!(e.termination.is_some());
        r.verify(&env_cfg()).unwrap();
        let trace = PathTrace::from_record(r, &env_cfg()).unwrap();
        assert!(trace.is_physically_valid());
        assert_eq!(trace.points.len(), r.steps.len() + 1);
    }
}

#[test]
fn single_episode_protocol() {
    let p = EvalProtocol { seeds: vec![7], repetitions: 1, themes: vec![Theme::Modern], deterministic: true, rng_seed: 3 };
    let report = evaluate(&mut model(), &env_cfg(), &p, &[0]).unwrap();
    assert_eq!(report.episodes.len(), 1);
    assert_eq!(report.aggregates().len(), 1);
    assert_eq!(report.aggregates()[0].episodes, 1);
    assert_eq!(report.aggregates()[0].floor_variance, 0.0);
}

#[test]
fn mismatched_model_is_a_config_error() {
    let big = EnvConfig { time_budget: 30, ..EnvConfig::default() };
    assert!(matches!(evaluate(&mut model(), &big, &small_protocol(), &[]), Err(Error::Config(_))));
}

#[test]
fn aggregates_recompute_from_episode_rows() {
    let report = evaluate(&mut model(), &env_cfg(), &small_protocol(), &[]).unwrap();
    for a in report.aggregates() {
        let rows: Vec<&EvalEpisode> = report.episodes.iter().filter(|e| e.theme == a.theme).collect();
        let n = rows.len() as f64;
        let mf = rows.iter().map(|e| f64::from(e.floor)).sum::<f64>() / n;
        let ml = rows.iter().map(|e| f64::from(e.length)).sum::<f64>() / n;
        let vl = rows.iter().map(|e| (f64::from(e.length) - ml).powi(2)).sum::<f64>() / n;
        assert!((a.mean_floor - mf).abs() < 1e-12);
        assert!((a.mean_length - ml).abs() < 1e-12);
        assert!((a.length_std - vl.sqrt()).abs() < 1e-12);
        assert_eq!(a.episodes, 4);
    }
}

#[test]
fn asymmetric_deviation_examples() {
    assert_eq!(asymmetric_deviation(&[2.0, 2.0, 2.0]), (0.0, 0.0));
    // mean 1: one sample 3 above, three samples 1 below.
    let (up, down) = asymmetric_deviation(&[0.0, 0.0, 0.0, 4.0]);
    assert!((up - 3.0).abs() < 1e-12 && (down - 1.0).abs() < 1e-12);
    let (up, down) = asymmetric_deviation(&[1.0, 3.0]);
    assert!((up - 1.0).abs() < 1e-12 && (down - 1.0).abs() < 1e-12);
    assert_eq!(variance(&[1.0, 3.0]), 1.0);
    assert_eq!(mean(&[]), 0.0);
}

proptest! {
    #[test]
    fn deviation_bands_bracket_the_spread(xs in prop::collection::vec(0.0f64..10.0, 1..30)) {
        let (up, down) = asymmetric_deviation(&xs);
        let m = mean(&xs);
        let max = xs.iter().cloned().fold(f64::MIN, f64::max);
        let min = xs.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!(up >= 0.0 && down >= 0.0);
        prop_assert!(up <= max - m + 1e-9 && down <= m - min + 1e-9);
    }

    #[test]
    fn histogram_conserves_episodes(floors in prop::collection::vec((0u32..11, 0usize..5), 1..60)) {
        let eps: Vec<EvalEpisode> = floors.iter().map(|&(f, t)| episode(Theme::ALL[t], f, 1)).collect();
        let h = termination_histogram(&eps, &Theme::TRAINING, 10);
        let train = eps.iter().filter(|e| Theme::TRAINING.contains(&e.theme)).count();
        prop_assert_eq!(h.bins(), 11);
        prop_assert_eq!(h.training.iter().sum::<usize>(), train);
        prop_assert_eq!(h.held_out.iter().sum::<usize>(), eps.len() - train);
    }
}

#[test]
fn floor_zero_episodes_fill_a_single_bin() {
    let eps: Vec<_> = Theme::ALL.iter().map(|&t| episode(t, 0, 5)).collect();
    let h = termination_histogram(&eps, &Theme::TRAINING, 10);
    assert_eq!(h.training[0], 3);
    assert_eq!(h.held_out[0], 2);
    assert!(h.training[1..].iter().chain(&h.held_out[1..]).all(|&c| c == 0));
}

#[test]
fn curve_rows_per_interval_and_theme() {
    let a: Vec<_> = Theme::ALL.iter().flat_map(|&t| [episode(t, 2, 10), episode(t, 2, 10)]).collect();
    let b: Vec<_> = Theme::ALL.iter().flat_map(|&t| [episode(t, 1, 4), episode(t, 3, 8)]).collect();
    let pts = curve_points(&[(200, &a), (400, &b)]);
    assert_eq!(pts.len(), 2 * 5);
    for p in &pts[..5] {
        assert_eq!((p.update, p.mean_floor, p.floor_dev_up, p.floor_dev_down, p.length_std), (200, 2.0, 0.0, 0.0, 0.0));
    }
    for p in &pts[5..] {
        assert_eq!((p.update, p.mean_floor, p.floor_dev_up, p.floor_dev_down, p.mean_length, p.length_std), (400, 2.0, 1.0, 1.0, 6.0, 2.0));
    }
}

fn record_plan(seed: u64, cfg: &EnvConfig, floors: u32) -> EpisodeRecord {
    let (mut env, _) = MiniTower::reset(seed, Theme::Ancient, cfg).unwrap();
    let mut rec = EpisodeRecord::new(seed, Theme::Ancient, cfg);
    'outer: for _ in 0..floors {
        for a in plan_floor(env.state(), cfg).unwrap() {
            let r = env.step(a).unwrap();
            let s = env.state();
            rec.steps.push(RecordedStep {
                action: a.indices(),
                reward: r.reward,
                done: r.done,
                floor: s.floor,
                position: s.position,
                heading: s.heading,
            });
            if r.done {
                break 'outer;
            }
        }
    }
    rec
}

#[test]
fn traces_follow_floors_and_carry_landmarks() {
    let cfg = EnvConfig { frame_height: 16, frame_width: 16, ..EnvConfig::default() };
    let rec = record_plan(5, &cfg, 3);
    rec.verify(&cfg).unwrap();
    assert_eq!(rec.final_floor(), 3);
    let trace = PathTrace::from_record(&rec, &cfg).unwrap();
    assert!(trace.is_physically_valid());
    assert_eq!(trace.floors.iter().map(|f| f.floor).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    let f2 = &trace.floors[2];
    assert!(f2.key.is_some() && f2.door.is_some());
    // The last point on each completed floor precedes a jump to the next start.
    for f in 0..3 {
        let next_first = trace.floor_points(f + 1).next().unwrap();
        assert_eq!(next_first.position, trace.floors[f as usize + 1].start);
    }
    let steps: Vec<u32> = trace.points.iter().map(|p| p.step).collect();
    assert!(steps.windows(2).all(|w| w[1] == w[0] + 1));
}

#[test]
fn finishing_the_tower_keeps_the_trace_on_the_last_floor() {
    let cfg = EnvConfig {
        frame_height: 16,
        frame_width: 16,
        difficulty: DifficultyConfig { floor_cap: 2, ..DifficultyConfig::default() },
        ..EnvConfig::default()
    };
    let rec = record_plan(9, &cfg, 2);
    assert_eq!(rec.final_floor(), 2);
    assert!(rec.steps.last().unwrap().done);
    let trace = PathTrace::from_record(&rec, &cfg).unwrap();
    assert_eq!(trace.floors.len(), 2);
    assert_eq!(trace.points.last().unwrap().floor, 1);
    assert_eq!(trace.points.last().unwrap().position, trace.floors[1].exit);
}

#[test]
fn stationary_agent_traces_a_single_cell() {
    let cfg = env_cfg();
    let (env, _) = MiniTower::reset(3, Theme::Modern, &cfg).unwrap();
    let start = env.state().position;
    let mut rec = EpisodeRecord::new(3, Theme::Modern, &cfg);
    rec.steps = (0..4)
        .map(|_| RecordedStep { action: [0, 0, 0], reward: 0.0, done: false, floor: 0, position: start, heading: Heading::North })
        .collect();
    rec.verify(&cfg).unwrap();
    let trace = PathTrace::from_record(&rec, &cfg).unwrap();
    assert!(trace.points.iter().all(|p| p.position == start));
}

#[test]
fn tampered_or_foreign_recordings_are_rejected() {
    let cfg = EnvConfig { frame_height: 16, frame_width: 16, ..EnvConfig::default() };
    let mut rec = record_plan(5, &cfg, 1);
    let other = EnvConfig { frame_skip: 3, ..cfg.clone() };
    assert!(matches!(PathTrace::from_record(&rec, &other), Err(Error::Config(_))));
    rec.steps[1].position = rec.steps[1].position.offset(1, 0);
    assert!(matches!(rec.verify(&cfg), Err(Error::Usage(_))));
}
