mod common;

use proptest::prelude::*;
use trajsynth::maps::{self, BUNDLED};
use trajsynth::trajio::{dataset_dir, read_jsonl, validate_replay, write_jsonl, DatasetManifest};
use trajsynth::{Action, Game, GameKind, Source, Status, Trajectory};

#[test]
fn human_length_record_round_trips() {
    let game = open_game();
    // one bump against the top wall, thirteen down-up detours, then the shortest route
    let mut actions = vec![Action::Up];
    for _ in 0..13 {
        actions.extend([Action::Down, Action::Up]);
    }
    actions.extend([Action::Right; 4]);
    actions.extend([Action::Down; 4]);
    let mut t = common::walk(&game, &actions, Source::Human);
    t.session_id = Some("s-1".into());
    assert_eq!(t.outcome, Status::GoalReached);

    let root = tempfile::tempdir().unwrap();
    let dir = dataset_dir(root.path(), GameKind::Maze, Source::Human);
    write_jsonl(&dir.join("s-1.jsonl"), std::slice::from_ref(&t)).unwrap();
    let back = read_jsonl(&dir.join("s-1.jsonl"), Some(&game)).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].len(), 35);
    assert_eq!(back[0], t);
}

fn open_game() -> Game {
    Game::new(maps::bundled("open_5x5").unwrap().load().unwrap())
}

#[test]
fn manifest_tracks_files() {
    let game = open_game();
    let root = tempfile::tempdir().unwrap();
    let demos = trajsynth::scripted::scripted_demos(&game, 3, 0.2, 0).unwrap();
    let dir = dataset_dir(root.path(), GameKind::Maze, Source::Scripted);
    write_jsonl(&dir.join("demos.jsonl"), &demos).unwrap();
    let text = maps::bundled("open_5x5").unwrap().text;
    let m = DatasetManifest::scan(root.path(), "open_5x5.txt", game.map()).unwrap();
    m.verify(root.path()).unwrap();
    m.verify_map(text).unwrap();
    std::fs::write(dir.join("demos.jsonl"), "tampered\n").unwrap();
    assert!(m.verify(root.path()).is_err());
}

fn arb_walk() -> impl Strategy<Value = (usize, Vec<usize>)> {
    (0..BUNDLED.len(), proptest::collection::vec(0usize..4, 0..120))
}

proptest! {
    #[test]
    fn random_walks_replay_and_serialize((m, ids) in arb_walk()) {
        let game = Game::new(BUNDLED[m].load().unwrap());
        let actions: Vec<Action> = ids.iter().map(|&i| Action::ALL[i]).collect();
        let t = common::walk(&game, &actions, Source::Scripted);
        prop_assert!(validate_replay(&t, &game).is_ok());
        let line = t.to_line();
        let back = Trajectory::load(&line, Some(&game)).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_line(), line);
    }

    #[test]
    fn any_tampered_cell_is_caught((m, ids) in arb_walk(), pick in 0usize..120, delta in 1usize..3) {
        let game = Game::new(BUNDLED[m].load().unwrap());
        let actions: Vec<Action> = ids.iter().map(|&i| Action::ALL[i]).collect();
        let mut t = common::walk(&game, &actions, Source::Scripted);
        prop_assume!(!t.is_empty());
        let i = pick % t.len();
        t.steps[i].row = (t.steps[i].row + delta) % game.map().height.max(2);
        prop_assume!(t.steps[i].row != common::walk(&game, &actions, Source::Scripted).steps[i].row);
        let err = validate_replay(&t, &game).unwrap_err();
        prop_assert_eq!(err.step, i);
    }
}
