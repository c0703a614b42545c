//! Synthetic human-like trajectories for small grid games.
//!
//! An expert Q-network is trained from a handful of demonstrations with
//! potential-based reward shaping ([`train`], [`shaping`]), then imitated
//! with dataset aggregation ([`dagger`]) to mass-produce trajectories. The
//! result is compared against the demonstrations with a unigram METEOR
//! score ([`simeval`]) and one-way ANOVA ([`stats`]).

pub mod dagger;
pub mod distgraph;
pub mod error;
pub mod gridworld;
pub mod maps;
pub mod qpolicy;
pub mod scripted;
pub mod shaping;
pub mod simeval;
pub mod stats;
pub mod train;
pub mod trajio;

pub use error::{Error, MapError, Result};
pub use gridworld::{Action, Cell, Game, GameKind, GameState, GridMap, Status};
pub use trajio::{Source, Trajectory};
