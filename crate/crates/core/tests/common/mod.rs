#![allow(dead_code)]

use std::collections::VecDeque;

use proptest::prelude::*;
use trajsynth::{Action, Cell, Game, GameState, GridMap, Source, Trajectory};

const STEPS: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

/// Plain BFS from one cell over the passability grid.
pub fn bfs(map: &GridMap, from: Cell) -> Vec<Option<u32>> {
    let mut d = vec![None; map.width * map.height];
    let mut q = VecDeque::new();
    d[from.row * map.width + from.col] = Some(0);
    q.push_back(from);
    while let Some(c) = q.pop_front() {
        let here = d[c.row * map.width + c.col].unwrap();
        for (dr, dc) in STEPS {
            let (r, k) = (c.row as isize + dr, c.col as isize + dc);
            if r < 0 || k < 0 || r >= map.height as isize || k >= map.width as isize {
                continue;
            }
            let n = Cell::new(r as usize, k as usize);
            if !map.is_passable(n) || d[n.row * map.width + n.col].is_some() {
                continue;
            }
            d[n.row * map.width + n.col] = Some(here + 1);
            q.push_back(n);
        }
    }
    d
}

pub fn walk(game: &Game, actions: &[Action], source: Source) -> Trajectory {
    let map = game.map();
    let mut t = Trajectory::new(map, source);
    let mut s = game.initial_state();
    for &a in actions {
        if s.status.is_terminal() {
            break;
        }
        let out = game.step(&s, a).unwrap();
        t.push(map, &s, a, out.base_reward, None);
        s = out.next_state;
    }
    t.outcome = s.status;
    t
}

pub fn at(game: &Game, cell: Cell, has_key: bool) -> GameState {
    GameState {
        agent: cell,
        has_key,
        ..game.initial_state()
    }
}

/// Random rectangular maze text with `S` in the top-left and `G` in the
/// bottom-right corner. Some draws are unsolvable and fail to load.
pub fn arb_maze_text() -> impl Strategy<Value = String> {
    (2usize..=8, 2usize..=8).prop_flat_map(|(w, h)| {
        proptest::collection::vec(proptest::bool::weighted(0.25), w * h).prop_map(move |walls| {
            let mut text = String::from("kind=maze\n");
            for r in 0..h {
                for c in 0..w {
                    let glyph = if (r, c) == (0, 0) {
                        'S'
                    } else if (r, c) == (h - 1, w - 1) {
                        'G'
                    } else if walls[r * w + c] {
                        '#'
                    } else {
                        '.'
                    };
                    text.push(glyph);
                }
                text.push('\n');
            }
            text
        })
    })
}
