//! Grid games: map format, deterministic dynamics and agent rewards.
//!
//! Three kinds of game share one map format. `Maze` is pure navigation to the
//! goal. `Ctf` requires collecting a key before the goal counts. `Ctfe` adds
//! an enemy that patrols a horizontal segment back and forth, one cell per
//! agent action, and captures the agent at Manhattan distance one or less.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distgraph::{self, DistanceTable};
use crate::error::{Error, MapError, Result};

pub const DEFAULT_HORIZON: usize = 300;

pub const GOAL_REWARD_MAZE: f64 = 100.0;
pub const GOAL_REWARD_FLAG: f64 = 1000.0;
pub const KEY_REWARD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    Maze,
    Ctf,
    Ctfe,
}

impl GameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GameKind::Maze => "maze",
            GameKind::Ctf => "ctf",
            GameKind::Ctfe => "ctfe",
        }
    }

    pub fn has_key(self) -> bool {
        !matches!(self, GameKind::Maze)
    }
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GameKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "maze" => Ok(GameKind::Maze),
            "ctf" => Ok(GameKind::Ctf),
            "ctfe" => Ok(GameKind::Ctfe),
            other => Err(format!("unknown game kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up = 0,
    Right = 1,
    Down = 2,
    Left = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Right, Action::Down, Action::Left];
    pub const COUNT: usize = 4;

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Action> {
        Action::ALL.get(id).copied()
    }

    pub fn reverse(self) -> Action {
        match self {
            Action::Up => Action::Down,
            Action::Right => Action::Left,
            Action::Down => Action::Up,
            Action::Left => Action::Right,
        }
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Right => (0, 1),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnemyDir {
    Fwd,
    Back,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Enemy {
    pub index: usize,
    pub dir: EnemyDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    GoalReached,
    Captured,
    TimedOut,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Moved,
    Blocked,
    KeyCollected,
    GoalReached,
    Captured,
    TimedOut,
}

impl Event {
    pub fn is_terminal(self) -> bool {
        matches!(self, Event::GoalReached | Event::Captured | Event::TimedOut)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GameState {
    pub agent: Cell,
    pub has_key: bool,
    pub enemy: Option<Enemy>,
    pub steps_taken: usize,
    pub status: Status,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: GameState,
    pub base_reward: f64,
    pub terminal: bool,
    pub event: Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation(pub usize);

impl Observation {
    pub fn encode(width: usize, cell: Cell, has_key: bool) -> Self {
        Observation((cell.row * width + cell.col) * 2 + usize::from(has_key))
    }

    pub fn decode(self, width: usize) -> (Cell, bool) {
        let has_key = self.0 % 2 == 1;
        let idx = self.0 / 2;
        (Cell::new(idx / width, idx % width), has_key)
    }
}

/// Static map topology. Construct through [`load_map`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    passable: Vec<bool>,
    pub start: Cell,
    pub goal: Cell,
    pub key: Option<Cell>,
    pub patrol: Option<Vec<Cell>>,
    pub kind: GameKind,
    pub horizon: usize,
    pub map_id: String,
}

impl GridMap {
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.width, index % self.width)
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn is_passable(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && self.passable[self.index(cell)]
    }

    pub fn passable_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count())
            .filter(|&i| self.passable[i])
            .map(|i| self.cell_at(i))
    }

    /// The in-bounds passable neighbour in direction `action`, if any.
    pub fn neighbor(&self, cell: Cell, action: Action) -> Option<Cell> {
        let (dr, dc) = action.delta();
        let row = cell.row.checked_add_signed(dr)?;
        let col = cell.col.checked_add_signed(dc)?;
        let next = Cell::new(row, col);
        self.is_passable(next).then_some(next)
    }

    pub fn enemy_cell(&self, enemy: &Enemy) -> Option<Cell> {
        self.patrol.as_ref().map(|p| p[enemy.index])
    }

    pub fn initial_state(&self) -> GameState {
        GameState {
            agent: self.start,
            has_key: false,
            enemy: (self.kind == GameKind::Ctfe).then_some(Enemy {
                index: 0,
                dir: EnemyDir::Fwd,
            }),
            steps_taken: 0,
            status: Status::Active,
        }
    }

    /// Cell the agent is currently working towards: the key until it is
    /// held, the goal afterwards.
    pub fn objective(&self, has_key: bool) -> Cell {
        match self.key {
            Some(key) if !has_key => key,
            _ => self.goal,
        }
    }

    pub fn obs_id(&self, state: &GameState) -> Observation {
        Observation::encode(self.width, state.agent, state.has_key)
    }

    /// Renders the map back into its text format (without normalization
    /// side effects, so `load_map(render())` yields the same digest).
    pub fn render(&self) -> String {
        let mut out = format!("kind={} horizon={}\n", self.kind, self.horizon);
        for row in 0..self.height {
            for col in 0..self.width {
                let cell = Cell::new(row, col);
                let glyph = if cell == self.start {
                    'S'
                } else if cell == self.goal {
                    'G'
                } else if Some(cell) == self.key {
                    'K'
                } else if self.patrol.as_ref().is_some_and(|p| p.contains(&cell)) {
                    'E'
                } else if self.is_passable(cell) {
                    '.'
                } else {
                    '#'
                };
                out.push(glyph);
            }
            out.push('\n');
        }
        out
    }
}

/// Canonical form used for the map digest: trailing whitespace removed from
/// every line, trailing blank lines dropped, LF line endings.
pub fn normalize_map_text(text: &str) -> String {
    let mut lines: Vec<&str> = text.lines().map(|l| l.trim_end()).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

pub fn map_digest(text: &str) -> String {
    hex::encode(Sha256::digest(normalize_map_text(text).as_bytes()))
}

pub fn load_map(text: &str) -> Result<GridMap, MapError> {
    let normalized = normalize_map_text(text);
    let mut lines = normalized.lines();
    let header = lines
        .next()
        .ok_or_else(|| MapError::MalformedHeader("empty file".into()))?;

    let mut kind = None;
    let mut horizon = DEFAULT_HORIZON;
    for token in header.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| MapError::MalformedHeader(format!("token {token:?}")))?;
        match k {
            "kind" => kind = Some(v.parse::<GameKind>().map_err(MapError::MalformedHeader)?),
            "horizon" => {
                horizon = v
                    .parse::<usize>()
                    .ok()
                    .filter(|&h| h > 0)
                    .ok_or_else(|| MapError::MalformedHeader(format!("horizon {v:?}")))?
            }
            other => return Err(MapError::MalformedHeader(format!("unknown key {other:?}"))),
        }
    }
    let kind = kind.ok_or_else(|| MapError::MalformedHeader("missing kind=".into()))?;

    let rows: Vec<&str> = lines.collect();
    if rows.is_empty() {
        return Err(MapError::Empty);
    }
    let width = rows[0].chars().count();
    if width == 0 {
        return Err(MapError::Empty);
    }
    let height = rows.len();

    let mut passable = vec![false; width * height];
    let (mut start, mut goal, mut key) = (None, None, None);
    let mut patrol = Vec::new();
    for (row, line) in rows.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(MapError::RaggedRows { row, expected: width, found });
        }
        for (col, glyph) in line.chars().enumerate() {
            let cell = Cell::new(row, col);
            let slot = match glyph {
                '#' => continue,
                '.' => None,
                'S' => Some((&mut start, 'S')),
                'G' => Some((&mut goal, 'G')),
                'K' => Some((&mut key, 'K')),
                'E' => {
                    patrol.push(cell);
                    None
                }
                _ => return Err(MapError::UnknownGlyph { glyph, row, col }),
            };
            if let Some((slot, marker)) = slot {
                if slot.replace(cell).is_some() {
                    return Err(MapError::DuplicateMarker(marker));
                }
            }
            passable[row * width + col] = true;
        }
    }
    let start = start.ok_or(MapError::MissingStart)?;
    let goal = goal.ok_or(MapError::MissingGoal)?;

    match kind {
        GameKind::Maze if key.is_some() => {
            return Err(MapError::InconsistentKind("key marker in a maze map".into()))
        }
        GameKind::Maze | GameKind::Ctf if !patrol.is_empty() => {
            return Err(MapError::InconsistentKind(format!("patrol cells in a {kind} map")))
        }
        GameKind::Ctf | GameKind::Ctfe if key.is_none() => {
            return Err(MapError::InconsistentKind(format!("{kind} map without a key")))
        }
        GameKind::Ctfe if patrol.is_empty() => {
            return Err(MapError::InconsistentKind("ctfe map without patrol cells".into()))
        }
        _ => {}
    }

    // Row-major scan already orders the segment left to right.
    if let Some(first) = patrol.first() {
        let contiguous = patrol
            .iter()
            .enumerate()
            .all(|(i, c)| c.row == first.row && c.col == first.col + i);
        if !contiguous {
            return Err(MapError::MalformedPatrol);
        }
    }

    let reach = reachable_from(&passable, width, height, start);
    let is_reached = |c: Cell| reach[c.row * width + c.col];
    if !is_reached(goal) || key.is_some_and(|k| !is_reached(k)) {
        return Err(MapError::UnreachableGoal);
    }

    Ok(GridMap {
        width,
        height,
        passable,
        start,
        goal,
        key,
        patrol: (!patrol.is_empty()).then_some(patrol),
        kind,
        horizon,
        map_id: hex::encode(Sha256::digest(normalized.as_bytes())),
    })
}

fn reachable_from(passable: &[bool], width: usize, height: usize, from: Cell) -> Vec<bool> {
    let mut seen = vec![false; passable.len()];
    let mut queue = VecDeque::from([from]);
    seen[from.row * width + from.col] = true;
    while let Some(cell) = queue.pop_front() {
        let mut push = |r: usize, c: usize| {
            let i = r * width + c;
            if passable[i] && !seen[i] {
                seen[i] = true;
                queue.push_back(Cell::new(r, c));
            }
        };
        if cell.row > 0 {
            push(cell.row - 1, cell.col);
        }
        if cell.row + 1 < height {
            push(cell.row + 1, cell.col);
        }
        if cell.col > 0 {
            push(cell.row, cell.col - 1);
        }
        if cell.col + 1 < width {
            push(cell.row, cell.col + 1);
        }
    }
    seen
}

/// One patrol step. Reflects at either end; a single-cell patrol stays put.
pub fn enemy_next(patrol_len: usize, index: usize, dir: EnemyDir) -> (usize, EnemyDir) {
    if patrol_len <= 1 {
        return (0, dir);
    }
    match dir {
        EnemyDir::Fwd if index + 1 < patrol_len => (index + 1, EnemyDir::Fwd),
        EnemyDir::Fwd => (index - 1, EnemyDir::Back),
        EnemyDir::Back if index > 0 => (index - 1, EnemyDir::Back),
        EnemyDir::Back => (1, EnemyDir::Fwd),
    }
}

pub fn base_reward(map: &GridMap, event: Event, state: &GameState, dist: &DistanceTable) -> f64 {
    match event {
        Event::Captured => 0.0,
        Event::GoalReached if map.kind == GameKind::Maze => GOAL_REWARD_MAZE,
        Event::GoalReached => GOAL_REWARD_FLAG,
        Event::KeyCollected => KEY_REWARD,
        Event::Moved | Event::Blocked | Event::TimedOut => {
            let target = map.objective(state.has_key);
            distgraph::closeness(dist, state.agent, target).unwrap_or(0.0)
        }
    }
}

/// A map bundled with its distance table: everything needed to step.
#[derive(Debug, Clone)]
pub struct Game {
    map: Arc<GridMap>,
    dist: Arc<DistanceTable>,
}

impl Game {
    pub fn new(map: GridMap) -> Self {
        let dist = distgraph::apsp(&distgraph::build_graph(&map));
        Game::with_table(map, dist)
    }

    pub fn with_table(map: GridMap, dist: DistanceTable) -> Self {
        Game {
            map: Arc::new(map),
            dist: Arc::new(dist),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Ok(Game::new(load_map(text)?))
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    /// Same map and distance table with a different episode horizon.
    pub fn with_horizon(&self, horizon: usize) -> Game {
        let mut map = (*self.map).clone();
        map.horizon = horizon;
        Game {
            map: Arc::new(map),
            dist: Arc::clone(&self.dist),
        }
    }

    pub fn dist(&self) -> &DistanceTable {
        &self.dist
    }

    pub fn dist_arc(&self) -> Arc<DistanceTable> {
        Arc::clone(&self.dist)
    }

    pub fn initial_state(&self) -> GameState {
        self.map.initial_state()
    }

    pub fn step(&self, state: &GameState, action: Action) -> Result<StepOutcome> {
        if state.status.is_terminal() {
            return Err(Error::SteppedTerminalState);
        }
        let map = &*self.map;
        let mut next = *state;
        let mut event = match map.neighbor(state.agent, action) {
            Some(cell) => {
                next.agent = cell;
                Event::Moved
            }
            None => Event::Blocked,
        };

        if event == Event::Moved {
            if map.key == Some(next.agent) && !next.has_key {
                next.has_key = true;
                event = Event::KeyCollected;
            } else if next.agent == map.goal && (map.kind == GameKind::Maze || next.has_key) {
                next.status = Status::GoalReached;
                event = Event::GoalReached;
            }
        }

        if let (Some(enemy), Some(patrol)) = (next.enemy.as_mut(), map.patrol.as_ref()) {
            if next.status == Status::Active {
                let (index, dir) = enemy_next(patrol.len(), enemy.index, enemy.dir);
                *enemy = Enemy { index, dir };
                if patrol[index].manhattan(next.agent) <= 1 {
                    next.status = Status::Captured;
                    event = Event::Captured;
                }
            }
        }

        next.steps_taken += 1;
        if next.status == Status::Active && next.steps_taken >= map.horizon {
            next.status = Status::TimedOut;
            event = Event::TimedOut;
        }

        Ok(StepOutcome {
            base_reward: base_reward(map, event, &next, &self.dist),
            next_state: next,
            terminal: event.is_terminal(),
            event,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPEN_3X3: &str = "kind=maze horizon=300\nS..\n...\n..G\n";

    fn open3() -> Game {
        Game::from_text(OPEN_3X3).unwrap()
    }

    #[test]
    fn minimal_map_loads() {
        let map = load_map(OPEN_3X3).unwrap();
        assert_eq!((map.width, map.height), (3, 3));
        assert_eq!(map.kind, GameKind::Maze);
        assert_eq!(map.start, Cell::new(0, 0));
        assert_eq!(map.goal, Cell::new(2, 2));
        assert_eq!(map.map_id.len(), 64);
    }

    #[test]
    fn digest_ignores_trailing_whitespace_and_crlf() {
        let messy = "kind=maze horizon=300  \r\nS..\t\r\n...\r\n..G\r\n\r\n";
        assert_eq!(load_map(messy).unwrap().map_id, load_map(OPEN_3X3).unwrap().map_id);
    }

    #[test]
    fn map_errors() {
        let cases = [
            ("kind=maze\n...\n..G\n", MapError::MissingStart),
            ("kind=maze\nS..\n...\n", MapError::MissingGoal),
            ("kind=maze\nSS.\n..G\n", MapError::DuplicateMarker('S')),
            ("kind=maze\nS.#\n.#G\n", MapError::UnreachableGoal),
            ("kind=ctfe\nS.K\nE.E\n..G\n", MapError::MalformedPatrol),
            ("kind=ctfe\nSEK\n.E.\n..G\n", MapError::MalformedPatrol),
        ];
        for (text, expected) in cases {
            assert_eq!(load_map(text).unwrap_err(), expected, "{text:?}");
        }
        assert!(matches!(
            load_map("kind=maze\nS.K\n..G\n").unwrap_err(),
            MapError::InconsistentKind(_)
        ));
        assert!(matches!(
            load_map("kind=ctf\nS..\n..G\n").unwrap_err(),
            MapError::InconsistentKind(_)
        ));
        assert!(matches!(load_map("S..\n..G\n").unwrap_err(), MapError::MalformedHeader(_)));
        assert!(matches!(
            load_map("kind=maze\nS..\n.G\n").unwrap_err(),
            MapError::RaggedRows { row: 1, .. }
        ));
    }

    #[test]
    fn render_round_trips_digest() {
        let text = "kind=ctfe horizon=50\nS.#K.\n.EEE.\n#...G\n";
        let map = load_map(text).unwrap();
        assert_eq!(map.render(), normalize_map_text(text));
        assert_eq!(load_map(&map.render()).unwrap(), map);
        assert_eq!(map.horizon, 50);
        assert_eq!(
            map.patrol.as_deref(),
            Some(&[Cell::new(1, 1), Cell::new(1, 2), Cell::new(1, 3)][..])
        );
    }

    #[test]
    fn blocked_move_keeps_cell() {
        let game = Game::from_text("kind=maze\nS#.\n...\n..G\n").unwrap();
        let out = game.step(&game.initial_state(), Action::Right).unwrap();
        assert_eq!(out.event, Event::Blocked);
        assert_eq!(out.next_state.agent, Cell::new(0, 0));
        // d((0,0), goal) = 4 = ecc(goal)
        assert_eq!(out.base_reward, 0.0);
        let up = game.step(&game.initial_state(), Action::Up).unwrap();
        assert_eq!(up.event, Event::Blocked);
    }

    #[test]
    fn maze_goal_reward() {
        let game = Game::from_text("kind=maze\nSG\n").unwrap();
        let out = game.step(&game.initial_state(), Action::Right).unwrap();
        assert_eq!(out.event, Event::GoalReached);
        assert!(out.terminal);
        assert_eq!(out.base_reward, 100.0);
        assert!(matches!(
            game.step(&out.next_state, Action::Left),
            Err(Error::SteppedTerminalState)
        ));
    }

    #[test]
    fn ctf_key_then_goal() {
        let game = Game::from_text("kind=ctf\nSKG\n").unwrap();
        let s0 = game.initial_state();
        let k = game.step(&s0, Action::Right).unwrap();
        assert_eq!(k.event, Event::KeyCollected);
        assert_eq!(k.base_reward, 100.0);
        assert!(k.next_state.has_key && !k.terminal);
        let g = game.step(&k.next_state, Action::Right).unwrap();
        assert_eq!(g.event, Event::GoalReached);
        assert_eq!(g.base_reward, 1000.0);
    }

    #[test]
    fn ctf_goal_without_key_is_not_terminal() {
        let game = Game::from_text("kind=ctf\nGS.K\n").unwrap();
        let out = game.step(&game.initial_state(), Action::Left).unwrap();
        assert_eq!(out.event, Event::Moved);
        assert!(!out.terminal);
        // distance reward towards the key: d=3, ecc(key)=3
        assert_eq!(out.base_reward, 0.0);
    }

    #[test]
    fn ctfe_capture() {
        // enemy patrols row 1 cols 0..=2 starting at col 0 and moving right
        let game = Game::from_text("kind=ctfe\n...K\nEEE.\n....\nS..G\n").unwrap();
        let s0 = game.initial_state();
        let s1 = game.step(&s0, Action::Up).unwrap();
        // agent (2,0), enemy now (1,1): distance 2
        assert_eq!(s1.event, Event::Moved);
        let s2 = game.step(&s1.next_state, Action::Right).unwrap();
        // agent (2,1), enemy (1,2): distance 2
        assert_eq!(s2.event, Event::Moved);
        let s3 = game.step(&s2.next_state, Action::Right).unwrap();
        // agent (2,2), enemy reflects to (1,1): distance 2
        assert_eq!(s3.event, Event::Moved);
        let s4 = game.step(&s3.next_state, Action::Left).unwrap();
        // agent (2,1), enemy (1,0): distance 2
        assert_eq!(s4.event, Event::Moved);
        let s5 = game.step(&s4.next_state, Action::Up).unwrap();
        // agent (1,1), enemy (1,1) -> reflection to index 1
        assert_eq!(s5.event, Event::Captured);
        assert_eq!(s5.base_reward, 0.0);
        assert_eq!(s5.next_state.status, Status::Captured);
    }

    #[test]
    fn diagonal_enemy_does_not_capture() {
        let game = Game::from_text("kind=ctfe\n..K\nE..\n.S.\n..G\n").unwrap();
        // single patrol cell at (1,0); agent at (2,1) is diagonal
        let out = game.step(&game.initial_state(), Action::Right).unwrap();
        assert_eq!(out.next_state.agent, Cell::new(2, 2));
        let back = game.step(&out.next_state, Action::Left).unwrap();
        assert_eq!(back.event, Event::Moved);
        let down = game.step(&game.initial_state(), Action::Left).unwrap();
        assert_eq!(down.event, Event::Captured);
    }

    #[test]
    fn timeout_at_horizon() {
        let game = Game::from_text("kind=maze horizon=3\nS#\n.#\n.G\n").unwrap();
        let mut s = game.initial_state();
        for i in 0..3 {
            let out = game.step(&s, Action::Right).unwrap();
            assert_eq!(out.terminal, i == 2);
            s = out.next_state;
        }
        assert_eq!(s.status, Status::TimedOut);
    }

    #[test]
    fn goal_on_last_step_beats_timeout() {
        let game = Game::from_text("kind=maze horizon=1\nSG\n").unwrap();
        let out = game.step(&game.initial_state(), Action::Right).unwrap();
        assert_eq!(out.event, Event::GoalReached);
    }

    #[test]
    fn enemy_patrol_steps() {
        assert_eq!(enemy_next(5, 0, EnemyDir::Fwd), (1, EnemyDir::Fwd));
        assert_eq!(enemy_next(5, 4, EnemyDir::Fwd), (3, EnemyDir::Back));
        assert_eq!(enemy_next(5, 0, EnemyDir::Back), (1, EnemyDir::Fwd));
        for dir in [EnemyDir::Fwd, EnemyDir::Back] {
            assert_eq!(enemy_next(1, 0, dir).0, 0);
        }
    }

    #[test]
    fn enemy_period() {
        for len in 2..8 {
            let mut seq = vec![];
            let (mut i, mut d) = (0, EnemyDir::Fwd);
            for _ in 0..(6 * len) {
                seq.push(i);
                (i, d) = enemy_next(len, i, d);
            }
            let period = 2 * (len - 1);
            for t in 0..seq.len() - period {
                assert_eq!(seq[t], seq[t + period]);
            }
            // and no shorter period
            for p in 1..period {
                assert!((0..seq.len() - p).any(|t| seq[t] != seq[t + p]));
            }
        }
    }

    #[test]
    fn obs_ids() {
        let game = open3();
        let map = game.map();
        let mut s = game.initial_state();
        assert_eq!(map.obs_id(&s), Observation(0));
        s.agent = Cell::new(2, 2);
        s.has_key = true;
        assert_eq!(map.obs_id(&s), Observation(17));
        s.has_key = false;
        assert_eq!(map.obs_id(&s), Observation(16));
        for cell in map.passable_cells() {
            for key in [false, true] {
                let obs = Observation::encode(map.width, cell, key);
                assert_eq!(obs.decode(map.width), (cell, key));
            }
        }
    }

    #[test]
    fn action_ids_are_bijective() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.id(), i);
            assert_eq!(Action::from_id(i), Some(*a));
            assert_eq!(a.reverse().reverse(), *a);
        }
        assert_eq!(Action::from_id(4), None);
    }
}
