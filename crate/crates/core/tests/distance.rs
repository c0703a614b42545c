mod common;

use proptest::prelude::*;
use trajsynth::distgraph::{apsp, build_graph, load_or_build, DistanceTable};
use trajsynth::gridworld::load_map;
use trajsynth::maps::BUNDLED;
use trajsynth::GridMap;

fn assert_matches_bfs(map: &GridMap, table: &DistanceTable) {
    let cells: Vec<_> = map.passable_cells().collect();
    for &s in &cells {
        let oracle = common::bfs(map, s);
        for &t in &cells {
            assert_eq!(table.d(s, t), oracle[t.row * map.width + t.col], "{s} -> {t}");
        }
    }
    for &t in &cells {
        let oracle = common::bfs(map, t);
        let ecc = cells.iter().filter_map(|c| oracle[c.row * map.width + c.col]).max();
        assert_eq!(table.ecc(t), ecc);
    }
}

#[test]
fn bundled_maps_match_bfs() {
    for m in BUNDLED {
        let map = m.load().unwrap();
        assert_matches_bfs(&map, &apsp(&build_graph(&map)));
    }
}

#[test]
fn cache_survives_reload() {
    let dir = tempfile::tempdir().unwrap();
    let map = trajsynth::maps::bundled("maze_10x13").unwrap().load().unwrap();
    let built = load_or_build(dir.path(), &map).unwrap();
    let cached = load_or_build(dir.path(), &map).unwrap();
    assert_eq!(built, cached);
    assert_matches_bfs(&map, &cached);
}

proptest! {
    #[test]
    fn random_maps_match_bfs(text in common::arb_maze_text()) {
        let Ok(map) = load_map(&text) else { return Ok(()) };
        let table = apsp(&build_graph(&map));
        assert_matches_bfs(&map, &table);
        // undirected grid: distances are symmetric
        for s in map.passable_cells() {
            for t in map.passable_cells() {
                prop_assert_eq!(table.d(s, t), table.d(t, s));
            }
        }
    }
}
