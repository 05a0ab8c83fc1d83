//! Exact shortest-action planning over the tick dynamics.
//!
//! Used as a scripted agent in tests and as an upper bound when sizing the
//! difficulty schedule. Plans ignore time orbs and the time limit.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use super::{advance_tick, CellKind, EnvConfig, EnvState, MultiDiscreteAction, Termination};

type Key = (i32, i32, u8, bool, bool, bool);

fn key(s: &EnvState) -> Key {
    let door_open = s.layout.locked_door.is_some_and(|d| s.layout.cell(d) == CellKind::Door);
    let key_taken = s.layout.key.is_some_and(|k| s.layout.cell(k) != CellKind::Key);
    (s.position.x, s.position.y, s.heading as u8, s.has_key, door_open, key_taken)
}

/// Applies one agent step (`frame_skip` ticks) without rendering.
/// Returns whether the floor was completed.
pub fn advance_step(state: &mut EnvState, config: &EnvConfig, action: MultiDiscreteAction) -> (bool, Option<Termination>) {
    let mut termination = None;
    for tick in 0..config.frame_skip {
        let out = advance_tick(state, config, action, tick);
        termination = termination.or(out.termination);
        if out.floor_completed {
            return (true, termination);
        }
        if state.done {
            break;
        }
    }
    (false, termination)
}

/// Shortest action sequence that completes the current floor, if any.
pub fn plan_floor(state: &EnvState, config: &EnvConfig) -> Option<Vec<MultiDiscreteAction>> {
    let mut start = state.clone();
    start.remaining_time = u32::MAX / 2;
    let actions: Vec<MultiDiscreteAction> = MultiDiscreteAction::all().collect();
    let mut parent: BTreeMap<Key, (Key, usize)> = BTreeMap::new();
    let root = key(&start);
    let mut queue = VecDeque::new();
    parent.insert(root, (root, usize::MAX));
    queue.push_back(start);
    while let Some(s) = queue.pop_front() {
        let here = key(&s);
        for (ai, &a) in actions.iter().enumerate() {
            let mut next = s.clone();
            let (completed, termination) = advance_step(&mut next, config, a);
            if completed {
                let mut plan = alloc::vec![a];
                let mut k = here;
                while k != root {
                    let (prev, pa) = parent[&k];
                    plan.push(actions[pa]);
                    k = prev;
                }
                plan.reverse();
                return Some(plan);
            }
            if termination.is_some() || next.done {
                continue;
            }
            let nk = key(&next);
            if let alloc::collections::btree_map::Entry::Vacant(e) = parent.entry(nk) {
                e.insert((here, ai));
                queue.push_back(next);
            }
        }
    }
    None
}
