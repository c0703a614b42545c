//! Scripted demonstrator: shortest safe plans with occasional detours.
//!
//! Plans are found by breadth-first search over the full game state (cell,
//! key flag, enemy position), so they respect ordering constraints and never
//! walk into the patrol. With probability `noise` a step is replaced by a
//! random passable move other than the planned one, from which the goal is
//! still reachable. The plan is recomputed after every step.

use std::collections::{HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gridworld::{Action, Cell, Enemy, Game, GameState, Status};
use crate::trajio::{Source, Trajectory};

type Key = (Cell, bool, Option<Enemy>);

fn key(s: &GameState) -> Key {
    (s.agent, s.has_key, s.enemy)
}

/// Shortest action sequence from `state` to the goal, ignoring the step
/// budget. `None` when every continuation is captured.
pub fn plan(game: &Game, state: &GameState) -> Result<Option<Vec<Action>>> {
    if state.status == Status::GoalReached {
        return Ok(Some(Vec::new()));
    }
    if state.status.is_terminal() {
        return Ok(None);
    }
    // Steps are reset so the horizon never cuts the search short.
    let root = GameState {
        steps_taken: 0,
        ..*state
    };
    let unbounded = game.with_horizon(usize::MAX);
    let mut parent: HashMap<Key, (Key, Action)> = HashMap::new();
    let mut queue = VecDeque::from([root]);
    let mut seen = std::collections::HashSet::from([key(&root)]);
    while let Some(s) = queue.pop_front() {
        for a in Action::ALL {
            let out = unbounded.step(&s, a)?;
            let k = key(&out.next_state);
            if !seen.insert(k) {
                continue;
            }
            parent.insert(k, (key(&s), a));
            match out.next_state.status {
                Status::GoalReached => {
                    let mut actions = Vec::new();
                    let mut cur = k;
                    while cur != key(&root) {
                        let (prev, a) = parent[&cur];
                        actions.push(a);
                        cur = prev;
                    }
                    actions.reverse();
                    return Ok(Some(actions));
                }
                Status::Active => queue.push_back(GameState {
                    steps_taken: 0,
                    ..out.next_state
                }),
                _ => {}
            }
        }
    }
    Ok(None)
}

pub fn scripted_demo<R: Rng + ?Sized>(game: &Game, noise: f64, rng: &mut R) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::Precondition(format!("noise {noise} outside [0, 1]")));
    }
    let map = game.map();
    let mut traj = Trajectory::new(map, Source::Scripted);
    let mut state = game.initial_state();
    while !state.status.is_terminal() {
        let planned = plan(game, &state)?
            .and_then(|p| p.first().copied())
            .ok_or_else(|| Error::Precondition("no capture-free route to the goal".into()))?;
        let mut action = planned;
        if noise > 0.0 && rng.gen::<f64>() < noise {
            let mut options = Vec::new();
            for a in Action::ALL {
                if a == planned || map.neighbor(state.agent, a).is_none() {
                    continue;
                }
                let out = game.step(&state, a)?;
                if out.next_state.status == Status::GoalReached
                    || (out.next_state.status == Status::Active && plan(game, &out.next_state)?.is_some())
                {
                    options.push(a);
                }
            }
            if let Some(&a) = options.choose(rng) {
                action = a;
            }
        }
        let out = game.step(&state, action)?;
        traj.push(map, &state, action, out.base_reward, None);
        state = out.next_state;
    }
    traj.outcome = state.status;
    Ok(traj)
}

/// `n` demonstrations from one seeded stream.
pub fn scripted_demos(game: &Game, n: usize, noise: f64, seed: u64) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| scripted_demo(game, noise, &mut rng)).collect()
}
