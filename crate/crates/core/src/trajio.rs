//! Trajectory records: one JSON object per line, keys sorted, floats with
//! 17 significant digits, LF endings. Equal trajectories serialize to equal
//! bytes.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gridworld::{Action, Cell, Game, GameKind, GameState, GridMap, Status};

pub const SCHEMA_VERSION: &str = "traj/1";
/// `created_at` for machine-generated records, so reruns are byte-identical.
pub const EPOCH: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    Dqn,
    DaggerE,
    DaggerPlusE,
    Scripted,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Human => "human",
            Source::Dqn => "dqn",
            Source::DaggerE => "dagger_e",
            Source::DaggerPlusE => "dagger_plus_e",
            Source::Scripted => "scripted",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "human" => Ok(Source::Human),
            "dqn" => Ok(Source::Dqn),
            "dagger_e" => Ok(Source::DaggerE),
            "dagger_plus_e" => Ok(Source::DaggerPlusE),
            "scripted" => Ok(Source::Scripted),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub obs_id: usize,
    pub row: usize,
    pub col: usize,
    pub has_key: bool,
    pub action_id: usize,
    pub base_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shaped_reward: Option<f64>,
}

impl Step {
    pub fn cell(&self) -> Cell {
        Cell::new(self.row, self.col)
    }

    pub fn action(&self) -> Option<Action> {
        Action::from_id(self.action_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub map_id: String,
    pub game_kind: GameKind,
    pub source: Source,
    pub steps: Vec<Step>,
    pub outcome: Status,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Trajectory {
    pub fn new(map: &GridMap, source: Source) -> Self {
        Trajectory {
            map_id: map.map_id.clone(),
            game_kind: map.kind,
            source,
            steps: Vec::new(),
            outcome: Status::Active,
            created_at: EPOCH.to_string(),
            session_id: None,
            label: None,
        }
    }

    pub fn push(
        &mut self,
        map: &GridMap,
        state: &GameState,
        action: Action,
        base_reward: f64,
        shaped_reward: Option<f64>,
    ) {
        self.steps.push(Step {
            obs_id: map.obs_id(state).0,
            row: state.agent.row,
            col: state.agent.col,
            has_key: state.has_key,
            action_id: action.id(),
            base_reward,
            shaped_reward,
        });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn base_return(&self) -> f64 {
        self.steps.iter().map(|s| s.base_reward).sum()
    }

    /// Re-simulates the recorded actions and returns the full state before
    /// every step (enemy phase included, which the record itself omits).
    pub fn replay_states(&self, game: &Game) -> Result<Vec<GameState>> {
        let mut state = game.initial_state();
        let mut states = Vec::with_capacity(self.steps.len());
        for (i, step) in self.steps.iter().enumerate() {
            let action = step.action().ok_or_else(|| ReplayMismatch {
                step: i,
                detail: format!("invalid action_id {}", step.action_id),
            })?;
            states.push(state);
            state = game.step(&state, action)?.next_state;
        }
        Ok(states)
    }

    pub fn to_line(&self) -> String {
        let value = serde_json::to_value(self).expect("trajectory serializes");
        let mut obj = match value {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        obj.insert("schema_version".into(), Value::String(SCHEMA_VERSION.into()));
        to_canonical_json(&Value::Object(obj))
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(line)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Format("trajectory record is not an object".into()))?;
        match obj.remove("schema_version") {
            Some(Value::String(v)) if v == SCHEMA_VERSION => {}
            Some(Value::String(v)) => return Err(Error::SchemaVersionMismatch(v)),
            Some(other) => return Err(Error::SchemaVersionMismatch(other.to_string())),
            None => return Err(Error::SchemaVersionMismatch(String::new())),
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Parses a record and checks it against `game` when one is supplied.
    pub fn load(line: &str, game: Option<&Game>) -> Result<Self> {
        let traj = Trajectory::from_line(line)?;
        if let Some(game) = game {
            if traj.map_id != game.map().map_id {
                return Err(Error::DigestMismatch {
                    path: "<record>".into(),
                    expected: game.map().map_id.clone(),
                    found: traj.map_id,
                });
            }
            validate_replay(&traj, game)?;
        }
        Ok(traj)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayMismatch {
    pub step: usize,
    pub detail: String,
}

impl fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.step, self.detail)
    }
}

impl std::error::Error for ReplayMismatch {}

/// Simulates the recorded actions from the start state; every recorded
/// position, key flag and base reward must match, and the final status must
/// equal the recorded outcome.
pub fn validate_replay(traj: &Trajectory, game: &Game) -> std::result::Result<(), ReplayMismatch> {
    let map = game.map();
    if traj.map_id != map.map_id {
        return Err(ReplayMismatch {
            step: 0,
            detail: format!("map_id {} differs from {}", traj.map_id, map.map_id),
        });
    }
    let mut state = game.initial_state();
    for (i, step) in traj.steps.iter().enumerate() {
        let mismatch = |detail: String| ReplayMismatch { step: i, detail };
        if state.status.is_terminal() {
            return Err(mismatch("record continues after a terminal state".into()));
        }
        if step.cell() != state.agent {
            return Err(mismatch(format!(
                "recorded cell {} but simulation is at {}",
                step.cell(),
                state.agent
            )));
        }
        if step.has_key != state.has_key {
            return Err(mismatch(format!("recorded has_key={} differs", step.has_key)));
        }
        if step.obs_id != map.obs_id(&state).0 {
            return Err(mismatch(format!("obs_id {} inconsistent with cell", step.obs_id)));
        }
        let action = step
            .action()
            .ok_or_else(|| mismatch(format!("invalid action_id {}", step.action_id)))?;
        let out = game
            .step(&state, action)
            .map_err(|e| mismatch(e.to_string()))?;
        if (out.base_reward - step.base_reward).abs() > 1e-9 {
            return Err(mismatch(format!(
                "base_reward {} but simulation gives {}",
                step.base_reward, out.base_reward
            )));
        }
        state = out.next_state;
    }
    if state.status != traj.outcome {
        return Err(ReplayMismatch {
            step: traj.steps.len(),
            detail: format!("outcome {:?} but simulation ends {:?}", traj.outcome, state.status),
        });
    }
    Ok(())
}

struct CanonicalFloats;

impl Formatter for CanonicalFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Compact JSON with sorted keys and every float printed with 17
/// significant digits.
pub fn to_canonical_json(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFloats);
    value.serialize(&mut ser).expect("in-memory write");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn to_jsonl(trajs: &[Trajectory]) -> String {
    let mut out = String::new();
    for t in trajs {
        out.push_str(&t.to_line());
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str, game: Option<&Game>) -> Result<Vec<Trajectory>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Trajectory::load(l, game))
        .collect()
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_jsonl(path: &Path, trajs: &[Trajectory]) -> Result<()> {
    write_atomic(path, to_jsonl(trajs).as_bytes())
}

pub fn read_jsonl(path: &Path, game: Option<&Game>) -> Result<Vec<Trajectory>> {
    parse_jsonl(&fs::read_to_string(path)?, game)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<root>/<game>/<source>/`
pub fn dataset_dir(root: &Path, kind: GameKind, source: Source) -> PathBuf {
    root.join(kind.as_str()).join(source.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRef {
    pub path: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub source: Source,
    pub count: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub map: MapRef,
    pub files: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Indexes every `<root>/<game>/<source>/*.jsonl` for the map's game kind.
    /// Paths in the manifest are relative to `root`.
    pub fn scan(root: &Path, map_path: &str, map: &GridMap) -> Result<Self> {
        let mut files = Vec::new();
        let game_dir = root.join(map.kind.as_str());
        if game_dir.is_dir() {
            let mut source_dirs: Vec<_> = fs::read_dir(&game_dir)?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().is_dir())
                .collect();
            source_dirs.sort_by_key(|e| e.file_name());
            for dir in source_dirs {
                let Some(source) = dir.file_name().to_str().and_then(|s| s.parse().ok()) else {
                    continue;
                };
                let mut entries: Vec<_> = fs::read_dir(dir.path())?
                    .filter_map(|e| e.ok())
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                    .collect();
                entries.sort();
                for path in entries {
                    let bytes = fs::read(&path)?;
                    let text = String::from_utf8_lossy(&bytes);
                    let trajs = parse_jsonl(&text, None)?;
                    if trajs.iter().any(|t| t.map_id != map.map_id) {
                        continue;
                    }
                    let rel = path.strip_prefix(root).unwrap_or(&path);
                    files.push(ManifestEntry {
                        path: rel.to_string_lossy().replace('\\', "/"),
                        source,
                        count: trajs.len(),
                        sha256: sha256_hex(&bytes),
                    });
                }
            }
        }
        Ok(DatasetManifest {
            map: MapRef {
                path: map_path.to_string(),
                digest: map.map_id.clone(),
            },
            files,
        })
    }

    pub fn verify(&self, root: &Path) -> Result<()> {
        for entry in &self.files {
            let bytes = fs::read(root.join(&entry.path))?;
            let found = sha256_hex(&bytes);
            if found != entry.sha256 {
                return Err(Error::DigestMismatch {
                    path: entry.path.clone(),
                    expected: entry.sha256.clone(),
                    found,
                });
            }
        }
        Ok(())
    }

    pub fn verify_map(&self, map_text: &str) -> Result<()> {
        let found = crate::gridworld::map_digest(map_text);
        if found != self.map.digest {
            return Err(Error::DigestMismatch {
                path: self.map.path.clone(),
                expected: self.map.digest.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
