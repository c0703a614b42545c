use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use trajsynth::dagger::{generate_synthetic, run_dagger, DaggerConfig, DaggerMode, Selection};
use trajsynth::qpolicy::{ActMode, PolicyClassifier, PolicyFile, PolicyFormat, QNetwork};
use trajsynth::scripted::scripted_demos;
use trajsynth::shaping::DemoSet;
use trajsynth::simeval::{score_matrix, ScoreMatrix};
use trajsynth::stats::{anova_report, freq_table, DemoScores};
use trajsynth::train::{evaluate, status_str, train_expert, Policy, StoppingRule, TrainConfig, TrainLog};
use trajsynth::trajio::{read_jsonl, to_jsonl};
use trajsynth::{maps, Game, Source, Trajectory};

use crate::summary::{beside, Recorder};
use crate::{
    CliError, CliResult, DaggerArgs, DemoScriptArgs, GenerateArgs, ModeArg, Preset, ScoreArgs, SelectionArg,
    ServeArgs, StatsArgs, StoppingArg, TrainArgs,
};

/// Episodes used for the greedy check reported in run summaries.
const SUMMARY_EVAL_EPISODES: usize = 100;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// A map given as a file path or as the name of a bundled map.
struct LoadedMap {
    game: Game,
    path: Option<PathBuf>,
    name: String,
}

fn load_map(arg: &str) -> CliResult<LoadedMap> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading map {arg}"))?;
        let game = Game::from_text(&text).with_context(|| format!("loading map {arg}"))?;
        let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        return Ok(LoadedMap {
            game,
            path: Some(path.to_path_buf()),
            name,
        });
    }
    match maps::bundled(arg) {
        Some(m) => Ok(LoadedMap {
            game: Game::new(m.load().context("loading bundled map")?),
            path: None,
            name: m.name.to_string(),
        }),
        None => Err(usage(format!("--map {arg:?} is neither a file nor a bundled map"))),
    }
}

impl LoadedMap {
    fn record_input(&self, rec: &mut Recorder) {
        if let Some(p) = &self.path {
            rec.input(p);
        }
    }

    fn describe(&self) -> serde_json::Value {
        json!({ "name": self.name, "map_id": self.game.map().map_id, "game": self.game.map().kind })
    }
}

fn read_trajectories(path: &Path, game: Option<&Game>) -> anyhow::Result<Vec<Trajectory>> {
    read_jsonl(path, game).with_context(|| format!("reading trajectories from {}", path.display()))
}

fn read_policy(path: &Path) -> anyhow::Result<PolicyFile> {
    let bytes = std::fs::read(path).with_context(|| format!("reading policy {}", path.display()))?;
    PolicyFile::from_bytes(&bytes).with_context(|| format!("parsing policy {}", path.display()))
}

fn check_policy_map(file: &PolicyFile, game: &Game) -> anyhow::Result<()> {
    if file.map_id != game.map().map_id {
        bail!("policy was trained on map {} but --map is {}", file.map_id, game.map().map_id);
    }
    Ok(())
}

pub fn train_config(args: &TrainArgs, game: &Game) -> TrainConfig {
    let kind = game.map().kind;
    let base = match args.preset {
        Preset::Full => TrainConfig::full(kind),
        Preset::Desk => TrainConfig::desk(kind),
    };
    let mut cfg = TrainConfig { seed: args.seed, ..base };
    if let Some(v) = args.timesteps {
        cfg.total_timesteps = v;
    }
    if let Some(v) = args.n_thresh {
        cfg.n_thresh = v;
    }
    if let Some(v) = args.window {
        cfg.window = v;
    }
    if let Some(v) = args.learning_starts {
        cfg.learning_starts = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = &args.hidden {
        cfg.hidden = v.clone();
    }
    if args.horizon.is_some() {
        cfg.horizon = args.horizon;
    }
    if let Some(s) = args.stopping {
        cfg.stopping = match s {
            StoppingArg::SuccessWindow => StoppingRule::SuccessWindow,
            StoppingArg::Literal => StoppingRule::Literal,
        };
    }
    cfg
}

fn evals_csv(log: &TrainLog) -> String {
    let mut out = String::from("step,episodes,successes,mean_length,mean_return\n");
    for e in &log.evals {
        let s = &e.summary;
        out.push_str(&format!(
            "{},{},{},{:.16e},{:.16e}\n",
            e.step, s.episodes, s.successes, s.mean_length, s.mean_return
        ));
    }
    out
}

/// Writes `expert.qnet`, `train_log.csv`, `evals.csv` and `run_summary.json`
/// into `--out`.
pub fn cmd_train(args: &TrainArgs) -> CliResult<PathBuf> {
    let map = load_map(&args.map)?;
    let game = &map.game;
    let cfg = train_config(args, game);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let mut rec = Recorder::start("train", Some(args.seed));
    map.record_input(&mut rec);
    rec.input(&args.demos);
    let demos = DemoSet::new(read_trajectories(&args.demos, Some(game))?)?;

    let (net, log) = train_expert(game, &demos, &cfg)?;
    let file = PolicyFile {
        format: PolicyFormat::Qnet,
        map_id: game.map().map_id.clone(),
        game: game.map().kind,
        source: Some(Source::Dqn),
        net: net.mlp().clone(),
    };
    let policy_path = args.out.join("expert.qnet");
    rec.write(&policy_path, &file.to_bytes())?;
    rec.write(&args.out.join("train_log.csv"), log.to_csv().as_bytes())?;
    rec.write(&args.out.join("evals.csv"), evals_csv(&log).as_bytes())?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let greedy = evaluate(game, &Policy::Q { net: &net, eps: 0.0 }, SUMMARY_EVAL_EPISODES, &mut rng)?;
    let details = json!({
        "map": map.describe(),
        "config": format!("{cfg:?}"),
        "stop_step": log.stop_step,
        "stop_reason": format!("{:?}", log.stop_reason),
        "best_eval_step": log.best_eval_step,
        "success_window_met_at": log.success_window_met_at,
        "literal_met_at": log.literal_met_at,
        "episodes": log.episodes.len(),
        "training_seconds": log.wall_clock.as_secs_f64(),
        "greedy_eval": {
            "episodes": greedy.episodes,
            "successes": greedy.successes,
            "mean_length": greedy.mean_length,
            "mean_return": greedy.mean_return,
        },
    });
    rec.finish(&args.out.join("run_summary.json"), details)?;
    Ok(policy_path)
}

pub fn dagger_config(args: &DaggerArgs) -> DaggerConfig {
    let mode = match args.mode {
        ModeArg::WithDemos => DaggerMode::WithDemos,
        ModeArg::ExpertSeeded => DaggerMode::ExpertSeeded,
    };
    let mut cfg = DaggerConfig {
        n_train: args.iters,
        seed: args.seed,
        horizon: args.horizon,
        selection: match args.selection {
            SelectionArg::GoalRate => Selection::GoalRateThenReturn,
            SelectionArg::MeanReturn => Selection::MeanReturn,
        },
        ..DaggerConfig::new(mode)
    };
    if let Some(v) = args.rollouts {
        cfg.rollouts_per_iter = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = &args.hidden {
        cfg.hidden = v.clone();
    }
    cfg
}

/// Writes `policy.clf`, `dagger_log.csv` and `run_summary.json` into `--out`.
pub fn cmd_dagger(args: &DaggerArgs) -> CliResult<PathBuf> {
    if args.mode == ModeArg::WithDemos && args.demos.is_none() {
        return Err(usage("--mode with-demos needs --demos"));
    }
    let cfg = dagger_config(args);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let map = load_map(&args.map)?;
    let game = &map.game;
    let mut rec = Recorder::start("dagger", Some(args.seed));
    map.record_input(&mut rec);
    rec.input(&args.expert);
    let expert_file = read_policy(&args.expert)?;
    if expert_file.format != PolicyFormat::Qnet {
        return Err(CliError::Runtime(anyhow::anyhow!("--expert must be a Q-network policy file")));
    }
    check_policy_map(&expert_file, game)?;
    let expert = QNetwork::from_mlp(expert_file.net);
    let demos = match &args.demos {
        Some(p) => {
            rec.input(p);
            Some(DemoSet::new(read_trajectories(p, Some(game))?)?)
        }
        None => None,
    };

    let (clf, log) = run_dagger(game, &expert, demos.as_ref(), &cfg)?;
    let file = PolicyFile {
        format: PolicyFormat::Clf,
        map_id: game.map().map_id.clone(),
        game: game.map().kind,
        source: Some(cfg.mode.source()),
        net: clf.mlp().clone(),
    };
    let policy_path = args.out.join("policy.clf");
    rec.write(&policy_path, &file.to_bytes())?;
    rec.write(&args.out.join("dagger_log.csv"), log.to_csv().as_bytes())?;
    let chosen = &log.iterations[log.selected - 1].validation;
    let details = json!({
        "map": map.describe(),
        "config": format!("{cfg:?}"),
        "source": cfg.mode.source(),
        "initial_dataset": log.initial_size,
        "final_dataset": log.iterations.last().map(|i| i.dataset_size),
        "selected_iteration": log.selected,
        "selected_validation": {
            "episodes": chosen.episodes,
            "successes": chosen.successes,
            "mean_length": chosen.mean_length,
            "mean_return": chosen.mean_return,
        },
    });
    rec.finish(&args.out.join("run_summary.json"), details)?;
    Ok(policy_path)
}

/// Writes the trajectories to `--out` and a summary to `<out>.summary.json`.
pub fn cmd_generate(args: &GenerateArgs) -> CliResult<Vec<Trajectory>> {
    if args.n == 0 {
        return Err(usage("-n must be at least 1"));
    }
    if args.horizon == Some(0) {
        return Err(usage("--horizon must be positive"));
    }
    if args.eps.is_some_and(|e| !(0.0..=1.0).contains(&e)) {
        return Err(usage("--eps must lie in [0, 1]"));
    }
    let map = load_map(&args.map)?;
    let game = &map.game;
    let mut rec = Recorder::start("generate", Some(args.seed));
    map.record_input(&mut rec);
    rec.input(&args.policy);
    let file = read_policy(&args.policy)?;
    check_policy_map(&file, game)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    let (trajs, mode_desc) = match file.format {
        PolicyFormat::Qnet => {
            let eps = args.eps.unwrap_or(TrainConfig::full(game.map().kind).eps_final);
            let net = QNetwork::from_mlp(file.net);
            let source = file.source.unwrap_or(Source::Dqn);
            let policy = Policy::Q { net: &net, eps };
            (generate_synthetic(game, &policy, args.n, args.horizon, source, &mut rng)?, format!("epsilon-greedy {eps}"))
        }
        PolicyFormat::Clf => {
            let clf = PolicyClassifier::from_mlp(file.net);
            let mode = if args.sample { ActMode::Sample } else { ActMode::Greedy };
            let source = file.source.unwrap_or(Source::DaggerE);
            let policy = Policy::Classifier { clf: &clf, mode };
            (generate_synthetic(game, &policy, args.n, args.horizon, source, &mut rng)?, format!("{mode:?}"))
        }
    };
    rec.write(&args.out, to_jsonl(&trajs).as_bytes())?;
    let mut outcomes = std::collections::BTreeMap::<&str, usize>::new();
    for t in &trajs {
        *outcomes.entry(status_str(t.outcome)).or_default() += 1;
    }
    let details = json!({
        "map": map.describe(),
        "count": trajs.len(),
        "action_mode": mode_desc,
        "source": trajs[0].source,
        "outcomes": outcomes,
        "mean_length": trajs.iter().map(Trajectory::len).sum::<usize>() as f64 / trajs.len() as f64,
    });
    rec.finish(&beside(&args.out), details)?;
    Ok(trajs)
}

/// Writes the score matrix to `--out-csv`.
pub fn cmd_score(args: &ScoreArgs) -> CliResult<ScoreMatrix> {
    let mut rec = Recorder::start("score", None);
    rec.input(&args.generated);
    rec.input(&args.demos);
    let demos = read_trajectories(&args.demos, None)?;
    let Some(first) = demos.first() else {
        return Err(CliError::Runtime(anyhow::anyhow!("{} holds no trajectories", args.demos.display())));
    };
    let map = match &args.map {
        Some(m) => load_map(m)?,
        None => {
            let found = maps::BUNDLED
                .iter()
                .find(|b| b.load().is_ok_and(|m| m.map_id == first.map_id))
                .ok_or_else(|| usage("demonstrations are not on a bundled map; pass --map"))?;
            load_map(found.name)?
        }
    };
    map.record_input(&mut rec);
    let game = &map.game;
    for t in &demos {
        trajsynth::trajio::validate_replay(t, game).map_err(trajsynth::Error::from)?;
    }
    let generated = read_trajectories(&args.generated, Some(game))?;
    let matrix = score_matrix(&generated, &demos, game.map())?;
    rec.write(&args.out_csv, matrix.to_csv().as_bytes())?;
    let details = json!({
        "map": map.describe(),
        "rows": matrix.rows(),
        "demo_ids": matrix.demo_ids,
        "demo_means": matrix.demo_means,
        "overall_mean": matrix.overall_mean(),
    });
    rec.finish(&beside(&args.out_csv), details)?;
    Ok(matrix)
}

fn read_scores(path: &Path) -> anyhow::Result<ScoreMatrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ScoreMatrix::from_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes `anova.csv`, `freq.csv`, `report.txt` and `run_summary.json` into
/// `--out` and returns the report text.
pub fn cmd_stats(args: &StatsArgs) -> CliResult<String> {
    let mut rec = Recorder::start("stats", None);
    for p in [&args.scores_dqn, &args.scores_dagger_e, &args.scores_dagger_plus_e] {
        rec.input(p);
    }
    let dqn = read_scores(&args.scores_dqn)?;
    let de = read_scores(&args.scores_dagger_e)?;
    let dpe = read_scores(&args.scores_dagger_plus_e)?;
    if dqn.demo_ids != de.demo_ids || dqn.demo_ids != dpe.demo_ids {
        return Err(CliError::Runtime(anyhow::anyhow!("score files do not share the same demonstration columns")));
    }
    let columns: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> =
        (0..dqn.demo_ids.len()).map(|j| (dqn.column(j), de.column(j), dpe.column(j))).collect();
    let per_demo: Vec<DemoScores<'_>> = dqn
        .demo_ids
        .iter()
        .zip(&columns)
        .map(|(id, (a, b, c))| DemoScores {
            demo_id: id.clone(),
            dqn: a,
            dagger_e: b,
            dagger_plus_e: c,
        })
        .collect();
    let anova = anova_report(&per_demo)?;
    let freq = freq_table(&per_demo)?;

    let mut means = String::from("Mean METEOR\n");
    means.push_str(&format!("{:<12}{:>12}{:>12}{:>12}\n", "Expert", "DQN", "DAgger-E", "DAgger+E"));
    for (j, id) in dqn.demo_ids.iter().enumerate() {
        means.push_str(&format!(
            "{id:<12}{:>12.4}{:>12.4}{:>12.4}\n",
            dqn.demo_means[j], de.demo_means[j], dpe.demo_means[j]
        ));
    }
    let report = format!(
        "{means}\nOne-way ANOVA across generators\n{}\nScores above average ({} generated)\n{}",
        anova.to_text(),
        dpe.rows(),
        freq.to_text()
    );
    rec.write(&args.out.join("anova.csv"), anova.to_csv().as_bytes())?;
    rec.write(&args.out.join("freq.csv"), freq.to_csv().as_bytes())?;
    rec.write(&args.out.join("report.txt"), report.as_bytes())?;
    let details = json!({
        "rows": [dqn.rows(), de.rows(), dpe.rows()],
        "demo_ids": dqn.demo_ids,
        "degenerate": anova.results.iter().map(|r| r.degenerate).collect::<Vec<_>>(),
    });
    rec.finish(&args.out.join("run_summary.json"), details)?;
    Ok(report)
}

/// Writes scripted demonstrations to `--out`.
pub fn cmd_demo_script(args: &DemoScriptArgs) -> CliResult<Vec<Trajectory>> {
    if args.n == 0 {
        return Err(usage("-n must be at least 1"));
    }
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(usage("--noise must lie in [0, 1]"));
    }
    let map = load_map(&args.map)?;
    let mut rec = Recorder::start("demo-script", Some(args.seed));
    map.record_input(&mut rec);
    let demos = scripted_demos(&map.game, args.n, args.noise, args.seed)?;
    rec.write(&args.out, to_jsonl(&demos).as_bytes())?;
    let details = json!({
        "map": map.describe(),
        "count": demos.len(),
        "noise": args.noise,
        "lengths": demos.iter().map(Trajectory::len).collect::<Vec<_>>(),
    });
    rec.finish(&beside(&args.out), details)?;
    Ok(demos)
}

pub fn cmd_serve(args: &ServeArgs) -> CliResult<()> {
    let addr: std::net::SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| usage(format!("bad --host/--port: {e}")))?;
    if let Some(dir) = &args.maps_dir {
        if !dir.is_dir() {
            return Err(usage(format!("--maps-dir {} is not a directory", dir.display())));
        }
    }
    let cfg = trajsynth_service::Config {
        maps_dir: args.maps_dir.clone(),
        datasets_dir: args.datasets_dir.clone(),
        static_dir: args.static_dir.clone(),
        ttl: std::time::Duration::from_secs(args.ttl_minutes * 60),
        cors_origin: args.cors_origin.clone(),
    };
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .context("starting runtime")?;
    runtime.block_on(trajsynth_service::serve(cfg, addr))?;
    Ok(())
}
