//! Trajectory files under `<root>/<game>/<source>/*.jsonl`.
//!
//! A stored trajectory is addressed as `<game>:<source>:<file stem>:<line>`.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use trajsynth::trajio::{dataset_dir, read_jsonl, validate_replay, write_atomic, write_jsonl, DatasetManifest};
use trajsynth::{Game, GameKind, Source, Status, Trajectory};

use crate::ServiceError;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TrajSummary {
    pub id: String,
    pub game: GameKind,
    pub source: Source,
    pub map_id: String,
    pub steps: usize,
    pub outcome: Status,
    pub session_id: Option<String>,
    pub label: Option<String>,
    pub created_at: String,
}

#[derive(Debug, Default, Clone)]
pub struct Filter {
    pub game: Option<GameKind>,
    pub source: Option<Source>,
    pub map_id: Option<String>,
}

pub struct Store {
    root: PathBuf,
    writes: Mutex<()>,
}

fn traj_id(game: GameKind, source: Source, stem: &str, line: usize) -> String {
    format!("{game}:{source}:{stem}:{line}")
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store {
            root: root.into(),
            writes: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Checks the record against `game`, writes it atomically as a human
    /// trajectory and refreshes the manifest for its map.
    pub fn save_human(&self, traj: &Trajectory, game: &Game, map_name: &str) -> Result<String, ServiceError> {
        validate_replay(traj, game).map_err(trajsynth::Error::from)?;
        let stem = traj
            .session_id
            .clone()
            .ok_or_else(|| ServiceError::Config("human trajectory without session id".into()))?;
        let kind = game.map().kind;
        let _guard = self.writes.lock().unwrap();
        let dir = dataset_dir(&self.root, kind, Source::Human);
        write_jsonl(&dir.join(format!("{stem}.jsonl")), std::slice::from_ref(traj))?;
        let manifest = DatasetManifest::scan(&self.root, map_name, game.map())?;
        write_atomic(
            &self.root.join(kind.as_str()).join(format!("{map_name}.manifest.json")),
            manifest.to_json().as_bytes(),
        )?;
        Ok(traj_id(kind, Source::Human, &stem, 0))
    }

    fn files(&self) -> Vec<(GameKind, Source, String, PathBuf)> {
        let mut out = Vec::new();
        for kind in [GameKind::Maze, GameKind::Ctf, GameKind::Ctfe] {
            for source in [Source::Human, Source::Scripted, Source::Dqn, Source::DaggerE, Source::DaggerPlusE] {
                let dir = dataset_dir(&self.root, kind, source);
                let Ok(rd) = std::fs::read_dir(&dir) else { continue };
                let mut paths: Vec<_> = rd
                    .filter_map(|e| e.ok())
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                    .collect();
                paths.sort();
                for p in paths {
                    let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    out.push((kind, source, stem, p));
                }
            }
        }
        out
    }

    pub fn list(&self, filter: &Filter) -> Result<Vec<TrajSummary>, ServiceError> {
        let mut out = Vec::new();
        for (kind, source, stem, path) in self.files() {
            if filter.game.is_some_and(|g| g != kind) || filter.source.is_some_and(|s| s != source) {
                continue;
            }
            for (i, t) in read_jsonl(&path, None)?.into_iter().enumerate() {
                if filter.map_id.as_ref().is_some_and(|m| *m != t.map_id) {
                    continue;
                }
                out.push(TrajSummary {
                    id: traj_id(kind, source, &stem, i),
                    game: t.game_kind,
                    source: t.source,
                    map_id: t.map_id.clone(),
                    steps: t.len(),
                    outcome: t.outcome,
                    session_id: t.session_id,
                    label: t.label,
                    created_at: t.created_at,
                });
            }
        }
        Ok(out)
    }

    pub fn get(&self, id: &str) -> Result<Trajectory, ServiceError> {
        let parts: Vec<&str> = id.split(':').collect();
        let [game, source, stem, line] = parts[..] else {
            return Err(ServiceError::TrajectoryNotFound);
        };
        let (Ok(kind), Ok(source), Ok(line)) = (game.parse::<GameKind>(), source.parse::<Source>(), line.parse::<usize>())
        else {
            return Err(ServiceError::TrajectoryNotFound);
        };
        if stem.is_empty() || stem.contains(['/', '\\']) || stem.starts_with('.') {
            return Err(ServiceError::TrajectoryNotFound);
        }
        let path = dataset_dir(&self.root, kind, source).join(format!("{stem}.jsonl"));
        if !path.is_file() {
            return Err(ServiceError::TrajectoryNotFound);
        }
        read_jsonl(&path, None)?
            .into_iter()
            .nth(line)
            .ok_or(ServiceError::TrajectoryNotFound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajsynth::{maps, Action};

    fn finished(game: &Game, id: &str) -> Trajectory {
        let mut t = Trajectory::new(game.map(), Source::Human);
        t.session_id = Some(id.into());
        let mut s = game.initial_state();
        for a in [Action::Right, Action::Right, Action::Right, Action::Right, Action::Down, Action::Down, Action::Down, Action::Down] {
            let out = game.step(&s, a).unwrap();
            t.push(game.map(), &s, a, out.base_reward, None);
            s = out.next_state;
        }
        t.outcome = s.status;
        t
    }

    #[test]
    fn save_list_get() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let game = Game::new(maps::bundled("open_5x5").unwrap().load().unwrap());
        let t = finished(&game, "abc");
        let id = store.save_human(&t, &game, "open_5x5").unwrap();
        assert_eq!(id, "maze:human:abc:0");
        assert_eq!(store.get(&id).unwrap(), t);
        let all = store.list(&Filter::default()).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].steps, 8);
        assert!(store.list(&Filter { game: Some(GameKind::Ctf), ..Filter::default() }).unwrap().is_empty());
        let manifest = std::fs::read_to_string(dir.path().join("maze/open_5x5.manifest.json")).unwrap();
        assert!(manifest.contains("maze/human/abc.jsonl"));
    }

    #[test]
    fn tampered_record_is_not_saved() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path());
        let game = Game::new(maps::bundled("open_5x5").unwrap().load().unwrap());
        let mut t = finished(&game, "x");
        t.steps[3].col = 0;
        assert!(store.save_human(&t, &game, "open_5x5").is_err());
        assert!(store.list(&Filter::default()).unwrap().is_empty());
    }

    #[test]
    fn bad_ids_are_not_found() {
        let store = Store::new("/nonexistent");
        for id in ["", "maze:human:a", "maze:human:../x:0", "nope:human:a:0", "maze:human:a:zz"] {
            assert!(matches!(store.get(id), Err(ServiceError::TrajectoryNotFound)), "{id}");
        }
    }
}
