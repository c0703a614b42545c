//! Live game sessions. The server owns every game state; clients only send
//! action ids.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;
use trajsynth::gridworld::{Event, StepOutcome};
use trajsynth::{Action, Cell, Game, GameKind, GameState, Source, Status, Trajectory};

use crate::catalog::MapEntry;
use crate::ServiceError;

/// Score shown to the player: +100 for the key, +1000 for the goal and
/// nothing when captured.
pub fn human_score(score: u32, event: Event) -> u32 {
    match event {
        Event::KeyCollected => score + 100,
        Event::GoalReached => score + 1000,
        Event::Captured => 0,
        _ => score,
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RenderState {
    pub session_id: String,
    pub map: String,
    pub map_id: String,
    pub game: GameKind,
    pub agent: Cell,
    pub has_key: bool,
    pub enemy: Option<Cell>,
    pub score: u32,
    pub steps: usize,
    pub horizon: usize,
    pub status: Status,
    pub terminal: bool,
    pub event: Option<Event>,
    pub saved_as: Option<String>,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub map: MapEntry,
    pub game: Arc<Game>,
    pub state: GameState,
    pub log: Trajectory,
    pub score: u32,
    pub last_event: Option<Event>,
    pub created_at: String,
    pub saved_as: Option<String>,
    last_seen: Instant,
}

impl Session {
    pub fn new(id: String, map: MapEntry, game: Arc<Game>, created_at: String) -> Self {
        let state = game.initial_state();
        let mut log = Trajectory::new(game.map(), Source::Human);
        log.session_id = Some(id.clone());
        Session {
            id,
            map,
            game,
            state,
            log,
            score: 0,
            last_event: None,
            created_at,
            saved_as: None,
            last_seen: Instant::now(),
        }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, ServiceError> {
        if self.state.status.is_terminal() {
            return Err(ServiceError::Terminal);
        }
        let out = self.game.step(&self.state, action)?;
        self.log.push(self.game.map(), &self.state, action, out.base_reward, None);
        self.state = out.next_state;
        self.log.outcome = self.state.status;
        self.score = human_score(self.score, out.event);
        self.last_event = Some(out.event);
        Ok(out)
    }

    pub fn render(&self) -> RenderState {
        let map = self.game.map();
        RenderState {
            session_id: self.id.clone(),
            map: self.map.name.clone(),
            map_id: map.map_id.clone(),
            game: map.kind,
            agent: self.state.agent,
            has_key: self.state.has_key,
            enemy: self.state.enemy.and_then(|e| map.enemy_cell(&e)),
            score: self.score,
            steps: self.state.steps_taken,
            horizon: map.horizon,
            status: self.state.status,
            terminal: self.state.status.is_terminal(),
            event: self.last_event,
            saved_as: self.saved_as.clone(),
        }
    }
}

enum Slot {
    Live(Arc<Mutex<Session>>),
    Expired(Instant),
}

/// Session table with idle-time expiry. Expired ids are remembered for a
/// while so that late requests get 410 rather than 404.
pub struct Sessions {
    ttl: Duration,
    slots: Mutex<HashMap<String, Slot>>,
}

impl Sessions {
    pub fn new(ttl: Duration) -> Self {
        Sessions {
            ttl,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn insert(&self, session: Session) -> Arc<Mutex<Session>> {
        let id = session.id.clone();
        let handle = Arc::new(Mutex::new(session));
        self.slots.lock().unwrap().insert(id, Slot::Live(handle.clone()));
        handle
    }

    /// Looks up a live session and refreshes its idle timer.
    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let mut slots = self.slots.lock().unwrap();
        let handle = match slots.get(id) {
            None => return Err(ServiceError::SessionNotFound),
            Some(Slot::Expired(_)) => return Err(ServiceError::Expired),
            Some(Slot::Live(h)) => h.clone(),
        };
        let mut s = handle.lock().unwrap();
        if s.last_seen.elapsed() >= self.ttl {
            drop(s);
            slots.insert(id.to_string(), Slot::Expired(Instant::now()));
            return Err(ServiceError::Expired);
        }
        s.last_seen = Instant::now();
        drop(s);
        Ok(handle)
    }

    /// Marks idle sessions expired and forgets expiry markers older than a
    /// day. Returns the number of sessions expired by this call.
    pub fn sweep(&self) -> usize {
        let mut slots = self.slots.lock().unwrap();
        let mut expired = 0;
        let day = Duration::from_secs(24 * 3600);
        slots.retain(|_, slot| match slot {
            Slot::Expired(at) => at.elapsed() < day,
            Slot::Live(_) => true,
        });
        for slot in slots.values_mut() {
            if let Slot::Live(h) = slot {
                let idle = h.lock().map(|s| s.last_seen.elapsed() >= self.ttl).unwrap_or(true);
                if idle {
                    *slot = Slot::Expired(Instant::now());
                    expired += 1;
                }
            }
        }
        expired
    }

    pub fn live(&self) -> usize {
        self.slots
            .lock()
            .unwrap()
            .values()
            .filter(|s| matches!(s, Slot::Live(_)))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;

    fn session(id: &str) -> Session {
        let m = Catalog::bundled().get("ctf_8x8").unwrap().clone();
        Session::new(id.into(), m.entry, m.game, trajsynth::trajio::EPOCH.into())
    }

    #[test]
    fn score_follows_events() {
        assert_eq!(human_score(0, Event::Moved), 0);
        assert_eq!(human_score(0, Event::KeyCollected), 100);
        assert_eq!(human_score(100, Event::GoalReached), 1100);
        assert_eq!(human_score(100, Event::Captured), 0);
    }

    #[test]
    fn blocked_move_keeps_cell() {
        let mut s = session("a");
        let start = s.state.agent;
        // start is the bottom-right corner
        let out = s.step(Action::Right).unwrap();
        assert_eq!(out.event, Event::Blocked);
        assert_eq!(s.render().agent, start);
        assert_eq!(s.render().steps, 1);
        assert_eq!(s.log.len(), 1);
    }

    #[test]
    fn expiry_and_sweep() {
        let sessions = Sessions::new(Duration::ZERO);
        sessions.insert(session("a"));
        assert!(matches!(sessions.get("a"), Err(ServiceError::Expired)));
        assert!(matches!(sessions.get("b"), Err(ServiceError::SessionNotFound)));
        sessions.insert(session("c"));
        assert_eq!(sessions.sweep(), 1);
        assert_eq!(sessions.live(), 0);

        let sessions = Sessions::new(Duration::from_secs(60));
        sessions.insert(session("a"));
        assert!(sessions.get("a").is_ok());
        assert_eq!(sessions.sweep(), 0);
        assert_eq!(sessions.live(), 1);
    }
}
