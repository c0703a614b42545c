//! Maps shipped with the crate.

use crate::error::MapError;
use crate::gridworld::{load_map, GameKind, GridMap};

#[derive(Debug, Clone, Copy)]
pub struct BundledMap {
    pub name: &'static str,
    pub text: &'static str,
}

impl BundledMap {
    pub fn load(&self) -> Result<GridMap, MapError> {
        load_map(self.text)
    }
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(BundledMap { name: $name, text: include_str!(concat!("../maps/", $name, ".txt")) }),*]
    };
}

pub const BUNDLED: &[BundledMap] = bundled![
    "maze_20x13",
    "ctf_20x20",
    "ctfe_20x20",
    "maze_10x13",
    "maze_8x8",
    "ctf_8x8",
    "ctfe_8x8",
    "open_5x5",
];

pub fn bundled(name: &str) -> Option<&'static BundledMap> {
    BUNDLED.iter().find(|m| m.name == name)
}

/// Full-size map for each game.
pub fn default_map(kind: GameKind) -> &'static BundledMap {
    let name = match kind {
        GameKind::Maze => "maze_20x13",
        GameKind::Ctf => "ctf_20x20",
        GameKind::Ctfe => "ctfe_20x20",
    };
    bundled(name).expect("bundled map present")
}

/// Small map for quick runs.
pub fn desk_map(kind: GameKind) -> &'static BundledMap {
    let name = match kind {
        GameKind::Maze => "maze_10x13",
        GameKind::Ctf => "ctf_8x8",
        GameKind::Ctfe => "ctfe_8x8",
    };
    bundled(name).expect("bundled map present")
}
