use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::RngExt;

use super::oracle::plan_floor;
use super::*;
use crate::rng::stream;

fn config() -> EnvConfig {
    EnvConfig::default()
}

fn random_action(rng: &mut crate::rng::StreamRng) -> MultiDiscreteAction {
    MultiDiscreteAction::from_indices(&[rng.random_range(0..2), rng.random_range(0..2), rng.random_range(0..3)]).unwrap()
}

fn act(movement: bool, jump: bool, rotation: Rotation) -> MultiDiscreteAction {
    MultiDiscreteAction::new(
        if movement { Movement::Forward } else { Movement::None },
        if jump { Jump::Jump } else { Jump::None },
        rotation,
    )
}

/// Drives `env` along oracle plans until `floors` floors are completed.
fn climb(env: &mut MiniTower, floors: u32) -> Vec<StepResult> {
    let mut results = Vec::new();
    for _ in 0..floors {
        let plan = plan_floor(env.state(), env.config()).expect("floor solvable");
        for a in plan {
            let r = env.step(a).unwrap();
            let done = r.done;
            results.push(r);
            if done {
                return results;
            }
        }
    }
    results
}

#[test]
fn reset_is_deterministic_with_full_time_and_no_key() {
    let (a, oa) = MiniTower::reset(17, Theme::Ancient, &config()).unwrap();
    let (b, ob) = MiniTower::reset(17, Theme::Ancient, &config()).unwrap();
    assert_eq!(oa, ob);
    assert_eq!(a, b);
    assert_eq!(oa.game_state, vec![0.0, 1.0]);
    assert_eq!(oa.frames.len(), 3 * 64 * 64 * 3);
}

#[test]
fn themes_share_layout_but_not_pixels() {
    let (a, oa) = MiniTower::reset(5, Theme::Industrial, &config()).unwrap();
    let (b, ob) = MiniTower::reset(5, Theme::Future, &config()).unwrap();
    assert_eq!(a.state(), b.state());
    assert_ne!(oa.frames, ob.frames);
}

#[test]
fn reset_pads_stack_with_first_frame() {
    let (env, obs) = MiniTower::reset(3, Theme::Modern, &config()).unwrap();
    let frames: Vec<&[u8]> = env.frame_stack().frames().collect();
    assert_eq!(frames.len(), 3);
    assert!(frames.iter().all(|f| *f == frames[0]));
    let n = 64 * 64 * 3;
    assert_eq!(obs.frames[..n], obs.frames[n..2 * n]);
    assert_eq!(obs.frames[..n], obs.frames[2 * n..]);
}

#[test]
fn pixel_normalization_quirk() {
    assert!((normalize_pixel(255, true) - 0.003_921_569).abs() < 1e-9);
    assert_eq!(normalize_pixel(255, false), 1.0);
    assert_eq!(normalize_pixel(0, true), 0.0);
    let (_, obs) = MiniTower::reset(3, Theme::Modern, &config()).unwrap();
    assert!(obs.frames.iter().all(|&x| (0.0..=1.0 / 255.0).contains(&x)));
    let plain = EnvConfig { double_normalization: false, ..config() };
    let (_, obs) = MiniTower::reset(3, Theme::Modern, &plain).unwrap();
    assert!(obs.frames.iter().any(|&x| x > 0.5));
}

#[test]
fn frames_are_ordered_oldest_first() {
    let (mut env, _) = MiniTower::reset(9, Theme::Modern, &config()).unwrap();
    let mut rendered = vec![env.frame_stack().newest().to_vec()];
    let mut obs = None;
    for _ in 0..3 {
        obs = Some(env.step(act(false, false, Rotation::Left)).unwrap().observation);
        rendered.push(env.frame_stack().newest().to_vec());
    }
    let expect: Vec<f32> = rendered[1..].iter().flat_map(|f| f.iter().map(|&b| normalize_pixel(b, true))).collect();
    assert_eq!(obs.unwrap().frames, expect);
    assert_ne!(rendered[1], rendered[2]);
}

#[test]
fn noop_only_spends_time() {
    let (mut env, _) = MiniTower::reset(11, Theme::Ancient, &config()).unwrap();
    let before = env.state().clone();
    let r = env.step(MultiDiscreteAction::NOOP).unwrap();
    let mut expected = before;
    expected.remaining_time -= 2;
    assert_eq!(env.state(), &expected);
    assert_eq!(r.reward, 0.0);
    assert!(!r.done);
}

#[test]
fn step_after_done_is_usage_error() {
    let cfg = EnvConfig { time_budget: 2, ..config() };
    let (mut env, _) = MiniTower::reset(1, Theme::Ancient, &cfg).unwrap();
    let r = env.step(MultiDiscreteAction::NOOP).unwrap();
    assert!(r.done);
    assert_eq!(r.info.termination, Some(Termination::Timeout));
    assert!(matches!(env.step(MultiDiscreteAction::NOOP), Err(Error::Usage(_))));
}

#[test]
fn key_pickup_rewards_and_sets_game_state() {
    let cfg = config();
    let (mut env, _) = MiniTower::reset(21, Theme::Modern, &cfg).unwrap();
    climb(&mut env, cfg.difficulty.key_intro_floor);
    assert_eq!(env.state().floor, cfg.difficulty.key_intro_floor);
    let plan = plan_floor(env.state(), env.config()).unwrap();
    let mut saw_key = false;
    for a in plan {
        let had = env.state().has_key;
        let r = env.step(a).unwrap();
        if !had && env.state().has_key {
            assert!((r.reward - KEY_REWARD).abs() < 1e-12);
            assert_eq!(r.observation.game_state[0], 1.0);
            saw_key = true;
        }
    }
    assert!(saw_key);
    assert_eq!(env.counters().keys_collected, 1);
    assert_eq!(env.counters().doors_opened, 1);
}

#[test]
fn completing_the_capped_floor_ends_the_episode() {
    let cfg = config();
    let (mut env, _) = MiniTower::reset(4, Theme::Future, &cfg).unwrap();
    let results = climb(&mut env, cfg.difficulty.floor_cap);
    let last = results.last().unwrap();
    assert!(last.done);
    assert_eq!(last.info.termination, Some(Termination::FloorCap));
    assert_eq!(last.info.floor, cfg.difficulty.floor_cap);
    let c = last.info.counters;
    let expected = c.floors_completed as f64 * FLOOR_REWARD
        + c.keys_collected as f64 * KEY_REWARD
        + c.doors_opened as f64 * DOOR_REWARD;
    assert!((c.episode_return - expected).abs() < 1e-9);
    let summed: f64 = results.iter().map(|r| r.reward).sum();
    assert!((summed - c.episode_return).abs() < 1e-9);
}

/// Follows the oracle plan up to the step that would enter a gap cell.
/// Returns that step's action.
fn approach_gap(env: &mut MiniTower) -> MultiDiscreteAction {
    let plan = plan_floor(env.state(), env.config()).unwrap();
    for a in plan {
        let mut probe = env.clone();
        probe.step(a).unwrap();
        if probe.state().layout.cell(probe.state().position) == CellKind::Gap {
            return a;
        }
        env.step(a).unwrap();
    }
    panic!("plan never entered a gap");
}

#[test]
fn walking_into_a_gap_without_jumping_is_fatal() {
    let cfg = config();
    let (mut env, _) = MiniTower::reset(6, Theme::Ancient, &cfg).unwrap();
    climb(&mut env, cfg.difficulty.gap_intro_floor);
    let a = approach_gap(&mut env);
    assert!(a.jumping() && a.forward());
    let r = env.step(MultiDiscreteAction { jump: Jump::None, ..a }).unwrap();
    assert!(r.done);
    assert_eq!(r.info.termination, Some(Termination::Fell));
}

#[test]
fn double_gap_needs_jumps_on_consecutive_steps() {
    let cfg = config();
    let (mut env, _) = MiniTower::reset(12, Theme::Ancient, &cfg).unwrap();
    climb(&mut env, cfg.difficulty.double_gap_floor);
    assert_eq!(env.state().layout.gaps.len(), 2);
    let a = approach_gap(&mut env);
    env.step(a).unwrap();
    let first = env.state().position;
    assert!(env.state().layout.gaps.contains(&first));
    let r = env.clone().step(act(true, false, Rotation::None)).unwrap();
    assert_eq!(r.info.termination, Some(Termination::Fell));
    let r = env.step(act(true, true, Rotation::None)).unwrap();
    assert!(!r.done);
    let second = env.state().position;
    assert!(env.state().layout.gaps.contains(&second) && second != first);
    let r = env.step(act(true, true, Rotation::None)).unwrap();
    assert!(!r.done);
    assert!(env.state().layout.cell(env.state().position).is_floor());
}

#[test]
fn floor_transition_resets_key_and_extends_time() {
    let cfg = config();
    let (mut env, _) = MiniTower::reset(30, Theme::Modern, &cfg).unwrap();
    let results = climb(&mut env, 1);
    let last = results.last().unwrap();
    assert_eq!(env.state().floor, 1);
    assert!((last.reward - FLOOR_REWARD).abs() < 1e-12);
    assert!(!env.state().has_key);
    assert_eq!(env.state().position, env.state().layout.start);
    let spent: u32 = results.iter().map(|r| r.info.ticks.len() as u32).sum();
    assert_eq!(env.state().remaining_time, cfg.time_budget - spent + cfg.floor_time_bonus);
}

#[test]
fn ticks_move_at_most_one_cell() {
    let cfg = config();
    let mut rng = stream(0, "ticks", 0);
    for seed in 0..30 {
        let (mut env, _) = MiniTower::reset(seed, Theme::Ancient, &cfg).unwrap();
        let mut prev = TickRecord { floor: 0, position: env.state().position, heading: env.state().heading };
        while !env.is_done() {
            let r = env.step(random_action(&mut rng)).unwrap();
            for t in r.info.ticks {
                if t.floor == prev.floor {
                    assert!(t.position.chebyshev(prev.position) <= 1);
                }
                prev = t;
            }
        }
    }
}

#[test]
fn fingerprint_tracks_config() {
    let a = config();
    let mut b = config();
    assert_eq!(a.fingerprint(), b.fingerprint());
    b.difficulty.key_intro_floor = 3;
    assert_ne!(a.fingerprint(), b.fingerprint());
}

fn rollout(seed: u64, theme: Theme, actions: &[MultiDiscreteAction]) -> Vec<(f64, bool, u32, Option<Termination>, Vec<u8>)> {
    let (mut env, _) = MiniTower::reset(seed, theme, &config()).unwrap();
    let mut out = Vec::new();
    for &a in actions {
        if env.is_done() {
            break;
        }
        let r = env.step(a).unwrap();
        out.push((r.reward, r.done, r.info.floor, r.info.termination, env.frame_stack().newest().to_vec()));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dynamics_are_theme_independent(seed in 0u64..1000, action_seed in any::<u64>()) {
        let mut rng = stream(action_seed, "actions", 0);
        let actions: Vec<_> = (0..150).map(|_| random_action(&mut rng)).collect();
        let base = rollout(seed, Theme::Ancient, &actions);
        for theme in &Theme::ALL[1..] {
            let other = rollout(seed, *theme, &actions);
            prop_assert_eq!(base.len(), other.len());
            for (a, b) in base.iter().zip(&other) {
                prop_assert_eq!((a.0, a.1, a.2, a.3), (b.0, b.1, b.2, b.3));
                prop_assert_ne!(&a.4, &b.4);
            }
        }
    }

    #[test]
    fn trajectories_are_pure_functions_of_inputs(seed in 0u64..1000, action_seed in any::<u64>()) {
        let mut rng = stream(action_seed, "actions", 0);
        let actions: Vec<_> = (0..120).map(|_| random_action(&mut rng)).collect();
        prop_assert_eq!(rollout(seed, Theme::Moorish, &actions), rollout(seed, Theme::Moorish, &actions));
    }

    #[test]
    fn time_falls_by_ticks_except_at_bonuses(seed in 0u64..1000, action_seed in any::<u64>()) {
        let cfg = config();
        let mut rng = stream(action_seed, "actions", 0);
        let (mut env, _) = MiniTower::reset(seed, Theme::Ancient, &cfg).unwrap();
        while !env.is_done() {
            let before = env.state().remaining_time;
            let orbs_before = env.state().layout.count(CellKind::Orb);
            let floor_before = env.state().floor;
            let r = env.step(random_action(&mut rng)).unwrap();
            let after = env.state().remaining_time;
            let orb = env.state().floor == floor_before && env.state().layout.count(CellKind::Orb) < orbs_before;
            if env.state().floor != floor_before || orb {
                prop_assert!(after + r.info.ticks.len() as u32 >= before);
            } else {
                prop_assert_eq!(after + r.info.ticks.len() as u32, before);
            }
            let c = r.info.counters;
            let expected = c.floors_completed as f64 + 0.1 * (c.keys_collected + c.doors_opened) as f64;
            prop_assert!((c.episode_return - expected).abs() < 1e-9);
        }
    }
}

