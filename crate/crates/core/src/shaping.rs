//! Demonstration-guided reward shaping.
//!
//! ```text
//! F(s, a, s') = delta(s)                 if (s, a) was demonstrated
//!             = 0                        if s was demonstrated with another action
//!             = gamma * phi(s') - phi(s) otherwise
//! ```
//!
//! States are matched by obs_id (cell and key flag). Shaping is applied once
//! per collected transition and never written back into the environment.

use std::collections::BTreeSet;

use crate::distgraph::PotentialContext;
use crate::error::{Error, Result};
use crate::gridworld::{Action, Game, GameState, Observation};
use crate::trajio::Trajectory;

#[derive(Debug, Clone)]
pub struct DemoSet {
    trajectories: Vec<Trajectory>,
    pair_index: BTreeSet<(usize, usize)>,
    state_index: BTreeSet<usize>,
}

impl DemoSet {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.iter().all(Trajectory::is_empty) {
            return Err(Error::Precondition("demonstration set is empty".into()));
        }
        let mut pair_index = BTreeSet::new();
        let mut state_index = BTreeSet::new();
        for step in trajectories.iter().flat_map(|t| &t.steps) {
            pair_index.insert((step.obs_id, step.action_id));
            state_index.insert(step.obs_id);
        }
        Ok(DemoSet {
            trajectories,
            pair_index,
            state_index,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn contains_pair(&self, obs: Observation, action: Action) -> bool {
        self.pair_index.contains(&(obs.0, action.id()))
    }

    pub fn contains_state(&self, obs: Observation) -> bool {
        self.state_index.contains(&obs.0)
    }

    pub fn pair_index(&self) -> &BTreeSet<(usize, usize)> {
        &self.pair_index
    }

    pub fn state_index(&self) -> &BTreeSet<usize> {
        &self.state_index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapingCase {
    DemonstratedPair,
    DemonstratedState,
    Potential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: GameState,
    pub action: Action,
    pub base_reward: f64,
    pub next_state: GameState,
}

#[derive(Debug, Clone)]
pub struct ShapingContext {
    demos: DemoSet,
    potentials: PotentialContext,
}

impl ShapingContext {
    pub fn new(game: &Game, demos: DemoSet, gamma: f64) -> Result<Self> {
        let map = game.map();
        if let Some(t) = demos.trajectories.iter().find(|t| t.map_id != map.map_id) {
            return Err(Error::MapMismatch {
                expected: map.map_id.clone(),
                found: t.map_id.clone(),
            });
        }
        let obs = demos.state_index.iter().map(|&o| Observation(o));
        let potentials = PotentialContext::new(map, game.dist_arc(), obs, gamma)?;
        Ok(ShapingContext { demos, potentials })
    }

    pub fn demos(&self) -> &DemoSet {
        &self.demos
    }

    pub fn potentials(&self) -> &PotentialContext {
        &self.potentials
    }

    pub fn case(&self, s: &GameState, a: Action) -> ShapingCase {
        let obs = Observation::encode(self.potentials.width(), s.agent, s.has_key);
        if self.demos.contains_pair(obs, a) {
            ShapingCase::DemonstratedPair
        } else if self.demos.contains_state(obs) {
            ShapingCase::DemonstratedState
        } else {
            ShapingCase::Potential
        }
    }

    pub fn f_value(&self, s: &GameState, a: Action, s_next: &GameState) -> Result<f64> {
        let p = &self.potentials;
        match self.case(s, a) {
            ShapingCase::DemonstratedPair => p.delta(s.agent, s.has_key),
            ShapingCase::DemonstratedState => Ok(0.0),
            ShapingCase::Potential => Ok(p.gamma() * p.phi(s_next.agent, s_next.has_key)?
                - p.phi(s.agent, s.has_key)?),
        }
    }

    pub fn shape(&self, t: &Transition) -> Result<f64> {
        Ok(t.base_reward + self.f_value(&t.state, t.action, &t.next_state)?)
    }

    pub fn shape_rewards(&self, transitions: &[Transition]) -> Result<Vec<f64>> {
        transitions.iter().map(|t| self.shape(t)).collect()
    }
}
