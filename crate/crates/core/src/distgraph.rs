//! Passability graph, all-pairs shortest paths and the two distance
//! potentials used by rewards and shaping.
//!
//! `D_max(., t)` is read as the eccentricity of `t`: the largest shortest-path
//! distance from any cell that can reach `t`. Normalizing by it keeps
//! `1 - d/ecc` inside `[0, 1]`.

use std::collections::VecDeque;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gridworld::{Action, Cell, GridMap, Observation};

pub const UNREACHABLE: u16 = u16::MAX;
const CACHE_MAGIC: &[u8; 5] = b"DTBL1";

#[derive(Debug, Clone)]
pub struct PassabilityGraph {
    width: usize,
    height: usize,
    adjacency: Vec<Vec<usize>>,
    passable: Vec<bool>,
}

impl PassabilityGraph {
    pub fn node_count(&self) -> usize {
        self.passable.iter().filter(|&&p| p).count()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, cell: Cell) -> usize {
        self.adjacency[cell.row * self.width + cell.col].len()
    }

    pub fn neighbors(&self, index: usize) -> &[usize] {
        &self.adjacency[index]
    }
}

pub fn build_graph(map: &GridMap) -> PassabilityGraph {
    let n = map.cell_count();
    let mut adjacency = vec![Vec::new(); n];
    let mut passable = vec![false; n];
    for cell in map.passable_cells() {
        let i = map.index(cell);
        passable[i] = true;
        for action in Action::ALL {
            if let Some(next) = map.neighbor(cell, action) {
                adjacency[i].push(map.index(next));
            }
        }
    }
    PassabilityGraph {
        width: map.width,
        height: map.height,
        adjacency,
        passable,
    }
}

/// Dense cell-by-cell distance matrix plus per-target eccentricities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    width: usize,
    height: usize,
    d: Vec<u16>,
    ecc: Vec<Option<u32>>,
}

impl DistanceTable {
    fn from_matrix(width: usize, height: usize, d: Vec<u16>) -> Self {
        let n = width * height;
        let ecc = (0..n)
            .map(|t| {
                let row = &d[t * n..(t + 1) * n];
                if row[t] == UNREACHABLE {
                    return None;
                }
                row.iter()
                    .filter(|&&x| x != UNREACHABLE)
                    .map(|&x| u32::from(x))
                    .max()
            })
            .collect();
        DistanceTable { width, height, d, ecc }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn idx(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    /// Shortest-path length, `None` when either cell is blocked or the two
    /// lie in different components.
    pub fn d(&self, from: Cell, to: Cell) -> Option<u32> {
        let n = self.width * self.height;
        let raw = self.d[self.idx(from) * n + self.idx(to)];
        (raw != UNREACHABLE).then_some(u32::from(raw))
    }

    pub fn ecc(&self, target: Cell) -> Option<u32> {
        self.ecc[self.idx(target)]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.d.len() * 2);
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.d {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("distance table: {m}"));
        let mut r = bytes;
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CACHE_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let width = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let height = u32::from_le_bytes(word) as usize;
        let n = width * height;
        if r.len() != n * n * 2 {
            return Err(bad("matrix size does not match dimensions"));
        }
        let d = r
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        Ok(DistanceTable::from_matrix(width, height, d))
    }
}

/// Breadth-first search from every node; edges have unit weight so this is
/// exactly Dijkstra's result.
pub fn apsp(graph: &PassabilityGraph) -> DistanceTable {
    let n = graph.width * graph.height;
    let mut d = vec![UNREACHABLE; n * n];
    let mut queue = VecDeque::new();
    for src in (0..n).filter(|&i| graph.passable[i]) {
        let row = &mut d[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let next = row[u] + 1;
            for &v in &graph.adjacency[u] {
                if row[v] == UNREACHABLE {
                    row[v] = next;
                    queue.push_back(v);
                }
            }
        }
    }
    DistanceTable::from_matrix(graph.width, graph.height, d)
}

pub fn cache_path(dir: &Path, map: &GridMap) -> PathBuf {
    dir.join(format!("{}.dtbl", map.map_id))
}

/// Loads the table for `map` from `dir`, computing and storing it on a miss.
pub fn load_or_build(dir: &Path, map: &GridMap) -> Result<DistanceTable> {
    let path = cache_path(dir, map);
    match fs::read(&path) {
        Ok(bytes) => {
            let table = DistanceTable::from_bytes(&bytes)?;
            if table.width != map.width || table.height != map.height {
                return Err(Error::Format(format!(
                    "cached table {} has wrong dimensions",
                    path.display()
                )));
            }
            Ok(table)
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let table = apsp(&build_graph(map));
            fs::create_dir_all(dir)?;
            let tmp = path.with_extension("dtbl.tmp");
            fs::write(&tmp, table.to_bytes())?;
            fs::rename(&tmp, &path)?;
            Ok(table)
        }
        Err(e) => Err(e.into()),
    }
}

/// `1 - d(s, t) / ecc(t)`, or `None` if `s` cannot reach `t`.
pub fn closeness(dist: &DistanceTable, s: Cell, target: Cell) -> Option<f64> {
    let d = dist.d(s, target)?;
    let ecc = dist.ecc(target)?;
    if ecc == 0 {
        return Some(1.0);
    }
    Some(1.0 - f64::from(d) / f64::from(ecc))
}

/// Distance table, demonstrated cells split by key phase, and the per-phase
/// objective cells.
#[derive(Debug, Clone)]
pub struct PotentialContext {
    dist: Arc<DistanceTable>,
    width: usize,
    // Indexed by has_key; each list sorted by obs_id.
    demo_states: [Vec<Cell>; 2],
    objective: [Cell; 2],
    gamma: f64,
}

impl PotentialContext {
    /// A phase with no demonstrated states falls back to the states of the
    /// other phase.
    pub fn new(
        map: &GridMap,
        dist: Arc<DistanceTable>,
        demo_obs: impl IntoIterator<Item = Observation>,
        gamma: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Precondition(format!("gamma {gamma} outside [0, 1]")));
        }
        let mut obs: Vec<Observation> = demo_obs.into_iter().collect();
        obs.sort();
        obs.dedup();
        if obs.is_empty() {
            return Err(Error::Precondition("no demonstrated states".into()));
        }
        let mut phases = [Vec::new(), Vec::new()];
        for o in &obs {
            let (cell, key) = o.decode(map.width);
            phases[usize::from(key)].push(cell);
        }
        for phase in 0..2 {
            if phases[phase].is_empty() {
                phases[phase] = phases[1 - phase].clone();
            }
        }
        Ok(PotentialContext {
            dist,
            width: map.width,
            demo_states: phases,
            objective: [map.objective(false), map.objective(true)],
            gamma,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dist(&self) -> &DistanceTable {
        &self.dist
    }

    pub fn demo_states(&self, has_key: bool) -> &[Cell] {
        &self.demo_states[usize::from(has_key)]
    }

    /// Closeness of `s` to the current objective (goal, or key while the key
    /// is not yet held).
    pub fn delta(&self, s: Cell, has_key: bool) -> Result<f64> {
        let target = self.objective[usize::from(has_key)];
        closeness(&self.dist, s, target).ok_or(Error::UnreachableState(s))
    }

    /// Nearest demonstrated state of the same key phase. Ties go to the
    /// smallest obs_id.
    pub fn nearest_demo(&self, s: Cell, has_key: bool) -> Result<Cell> {
        let mut best: Option<(u32, Cell)> = None;
        for &c in self.demo_states(has_key) {
            if let Some(d) = self.dist.d(s, c) {
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
        best.map(|(_, c)| c).ok_or(Error::UnreachableState(s))
    }

    pub fn phi(&self, s: Cell, has_key: bool) -> Result<f64> {
        let target = self.nearest_demo(s, has_key)?;
        closeness(&self.dist, s, target).ok_or(Error::UnreachableState(s))
    }

    pub fn width(&self) -> usize {
        self.width
    }
}
