//! Maps the service can start sessions on.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use trajsynth::{maps, Cell, Game, GameKind, GridMap};

use crate::ServiceError;

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct MapEntry {
    pub name: String,
    pub game: GameKind,
    pub map_id: String,
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    /// One string per row using the map file glyphs (`#`, `.`, `S`, `G`,
    /// `K`, `E`).
    pub rows: Vec<String>,
    pub patrol: Vec<Cell>,
}

impl MapEntry {
    fn new(name: &str, map: &GridMap) -> Self {
        MapEntry {
            name: name.to_string(),
            game: map.kind,
            map_id: map.map_id.clone(),
            width: map.width,
            height: map.height,
            horizon: map.horizon,
            rows: map.render().lines().skip(1).map(str::to_string).collect(),
            patrol: map.patrol.clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CatalogMap {
    pub entry: MapEntry,
    pub game: Arc<Game>,
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    maps: BTreeMap<String, CatalogMap>,
}

impl Catalog {
    pub fn bundled() -> Self {
        let mut c = Catalog::default();
        for m in maps::BUNDLED {
            let map = m.load().expect("bundled maps are valid");
            c.insert(m.name, map);
        }
        c
    }

    /// Bundled maps plus every `*.txt` map in `dir`; a file overrides a
    /// bundled map of the same name.
    pub fn with_dir(dir: &Path) -> Result<Self, ServiceError> {
        let mut c = Catalog::bundled();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let map = trajsynth::gridworld::load_map(&text)
                .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
            let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            c.insert(&name, map);
        }
        Ok(c)
    }

    fn insert(&mut self, name: &str, map: GridMap) {
        let entry = MapEntry::new(name, &map);
        self.maps.insert(
            name.to_string(),
            CatalogMap {
                entry,
                game: Arc::new(Game::new(map)),
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&CatalogMap> {
        self.maps.get(name)
    }

    pub fn by_map_id(&self, map_id: &str) -> Option<&CatalogMap> {
        self.maps.values().find(|m| m.entry.map_id == map_id)
    }

    /// Map used when a session names only the game.
    pub fn default_for(&self, kind: GameKind) -> Option<&CatalogMap> {
        self.get(maps::default_map(kind).name)
    }

    pub fn entries(&self) -> impl Iterator<Item = &MapEntry> {
        self.maps.values().map(|m| &m.entry)
    }
}
