//! Expert training: DQN with demonstration-shaped rewards.
//!
//! Every collected transition is shaped once (`base + F`) before it enters
//! the replay buffer. Training stops when the last `window` episodes all
//! reach the goal with mean length at most `n_thresh`, or at
//! `total_timesteps`. The returned network is the best greedy evaluation
//! checkpoint, not necessarily the last one.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gridworld::{Action, Game, GameKind, GameState, Status};
use crate::qpolicy::{
    act, featurize, sync_target, ActMode, EpsilonSchedule, FeatureVector, PolicyClassifier,
    QNetwork, ReplayBuffer, ReplayTransition, DEFAULT_HIDDEN,
};
use crate::shaping::{DemoSet, ShapingContext};
use crate::trajio::{Source, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingRule {
    /// Last `window` episodes all reach the goal and their mean length is at
    /// most `n_thresh`.
    SuccessWindow,
    /// Loop condition taken literally: stop once the windowed mean length
    /// is at least `n_thresh`.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub total_timesteps: usize,
    pub learning_starts: usize,
    pub eps_initial: f64,
    pub eps_final: f64,
    pub exploration_fraction: f64,
    pub n_thresh: f64,
    pub window: usize,
    /// Overrides the map's horizon when set.
    pub horizon: Option<usize>,
    pub seed: u64,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub batch_size: usize,
    pub target_sync: usize,
    /// Global gradient-norm cap per TD update; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
    pub stopping: StoppingRule,
}

impl TrainConfig {
    /// Per-game hyper-parameters for the full-size maps.
    pub fn full(kind: GameKind) -> Self {
        let (fraction, eps_final, learning_starts, total, n_thresh) = match kind {
            GameKind::Maze => (0.8, 0.1, 100_000, 2_000_000, 55.0),
            GameKind::Ctf => (0.8, 0.1, 300_000, 2_000_000, 40.0),
            GameKind::Ctfe => (0.99, 0.001, 300_000, 1_800_000, 42.0),
        };
        TrainConfig {
            gamma: 0.999,
            lr: 1e-4,
            total_timesteps: total,
            learning_starts,
            eps_initial: 0.9,
            eps_final,
            exploration_fraction: fraction,
            n_thresh,
            window: 10,
            horizon: None,
            seed: 0,
            eval_interval: 10_000,
            eval_episodes: 10,
            batch_size: 32,
            target_sync: 1_000,
            max_grad_norm: Some(10.0),
            buffer_capacity: 100_000,
            hidden: DEFAULT_HIDDEN.to_vec(),
            stopping: StoppingRule::SuccessWindow,
        }
    }

    /// Settings for laptop-scale runs on the small bundled maps
    /// ([`crate::maps::desk_map`]).
    ///
    /// The discount is lowered because with per-step distance rewards close
    /// to one, `1 / (1 - gamma)` must stay well below the terminal reward
    /// of 100 or loitering next to the goal outvalues entering it.
    /// `n_thresh` sits two steps above the shortest solution: the window is
    /// judged on exploring episodes, and a looser bound lets it pass while
    /// the greedy policy still stalls against a wall somewhere.
    pub fn desk(kind: GameKind) -> Self {
        let n_thresh = match kind {
            GameKind::Maze => 38.0,
            GameKind::Ctf => 22.0,
            GameKind::Ctfe => 21.0,
        };
        TrainConfig {
            gamma: 0.95,
            lr: 1e-2,
            total_timesteps: 300_000,
            learning_starts: 5_000,
            exploration_fraction: 0.3,
            n_thresh,
            eval_interval: 5_000,
            eval_episodes: 5,
            ..TrainConfig::full(kind)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(format!("TrainConfig: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma outside [0, 1]");
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return bad("lr must be positive");
        }
        if self.total_timesteps == 0 || self.window == 0 || self.n_thresh < 1.0 {
            return bad("total_timesteps, window and n_thresh must be positive");
        }
        if !(self.exploration_fraction > 0.0 && self.exploration_fraction <= 1.0) {
            return bad("exploration_fraction outside (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.eval_episodes == 0 {
            return bad("batch_size, buffer_capacity and eval_episodes must be positive");
        }
        if self.eval_interval == 0 || self.target_sync == 0 {
            return bad("eval_interval and target_sync must be positive");
        }
        if self.horizon == Some(0) {
            return bad("horizon must be positive");
        }
        if self.max_grad_norm.is_some_and(|m| m.is_nan() || m <= 0.0) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            initial: self.eps_initial,
            final_eps: self.eps_final,
            fraction: self.exploration_fraction,
            total_timesteps: self.total_timesteps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Environment step at which the episode ended.
    pub step: usize,
    pub episode: usize,
    pub length: usize,
    pub base_return: f64,
    pub outcome: Status,
    /// Mean TD loss over the updates made during the episode.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub successes: usize,
    pub mean_length: f64,
    pub mean_return: f64,
}

impl EvalSummary {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }

    /// Higher success first, then shorter episodes.
    pub fn better_than(&self, other: &EvalSummary) -> bool {
        let (a, b) = (self.success_rate(), other.success_rate());
        a > b || (a == b && self.mean_length < other.mean_length)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub summary: EvalSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Rule,
    Cap,
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeRecord>,
    pub loss_samples: Vec<(usize, f64)>,
    pub evals: Vec<EvalRecord>,
    pub stop_step: usize,
    pub stop_reason: StopReason,
    pub best_eval_step: usize,
    /// First episode end at which each rule was satisfied.
    pub success_window_met_at: Option<usize>,
    pub literal_met_at: Option<usize>,
    pub wall_clock: Duration,
}

// Wall-clock time is excluded: two runs with the same seed compare equal.
impl PartialEq for TrainLog {
    fn eq(&self, other: &Self) -> bool {
        self.episodes == other.episodes
            && self.loss_samples == other.loss_samples
            && self.evals == other.evals
            && self.stop_step == other.stop_step
            && self.stop_reason == other.stop_reason
            && self.best_eval_step == other.best_eval_step
            && self.success_window_met_at == other.success_window_met_at
            && self.literal_met_at == other.literal_met_at
    }
}

impl TrainLog {
    /// `step,episode,length,return,outcome,loss`, one row per episode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,episode,length,return,outcome,loss\n");
        for e in &self.episodes {
            let loss = e.loss.map(|l| format!("{l:.16e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{:.16e},{},{}",
                e.step,
                e.episode,
                e.length,
                e.base_return,
                status_str(e.outcome),
                loss
            );
        }
        out
    }
}

pub fn status_str(status: Status) -> &'static str {
    match status {
        Status::Active => "active",
        Status::GoalReached => "goal_reached",
        Status::Captured => "captured",
        Status::TimedOut => "timed_out",
    }
}

/// Both stopping rules over the most recent `window` episodes. `None` while
/// fewer than `window` episodes exist.
fn window_stats(episodes: &[EpisodeRecord], window: usize) -> Option<(f64, bool)> {
    if episodes.len() < window {
        return None;
    }
    let recent = &episodes[episodes.len() - window..];
    let mean = recent.iter().map(|e| e.length as f64).sum::<f64>() / window as f64;
    let all_goal = recent.iter().all(|e| e.outcome == Status::GoalReached);
    Some((mean, all_goal))
}

pub fn stopping_met(episodes: &[EpisodeRecord], cfg: &TrainConfig) -> bool {
    match window_stats(episodes, cfg.window) {
        None => false,
        Some((mean, all_goal)) => match cfg.stopping {
            StoppingRule::SuccessWindow => all_goal && mean <= cfg.n_thresh,
            StoppingRule::Literal => mean >= cfg.n_thresh,
        },
    }
}

/// Where actions come from during a rollout.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Q { net: &'a QNetwork, eps: f64 },
    Classifier { clf: &'a PolicyClassifier, mode: ActMode },
}

impl Policy<'_> {
    pub fn choose<R: Rng + ?Sized>(&self, x: &FeatureVector, rng: &mut R) -> Action {
        match *self {
            Policy::Q { net, eps } => act(net, x, eps, rng),
            Policy::Classifier { clf, mode } => clf.act(x, mode, rng),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: Trajectory,
    /// State before each recorded step.
    pub states: Vec<GameState>,
}

/// Steps from the start state until a terminal event; the horizon check in
/// the environment bounds the length.
pub fn rollout_with<R, F>(
    game: &Game,
    shaping: Option<&ShapingContext>,
    source: Source,
    rng: &mut R,
    mut choose: F,
) -> Result<Rollout>
where
    R: Rng + ?Sized,
    F: FnMut(&GameState, &FeatureVector, &mut R) -> Action,
{
    let map = game.map();
    let mut traj = Trajectory::new(map, source);
    let mut states = Vec::new();
    let mut state = game.initial_state();
    loop {
        let x = featurize(map, &state);
        let action = choose(&state, &x, rng);
        let out = game.step(&state, action)?;
        let shaped = match shaping {
            Some(ctx) => Some(out.base_reward + ctx.f_value(&state, action, &out.next_state)?),
            None => None,
        };
        traj.push(map, &state, action, out.base_reward, shaped);
        states.push(state);
        state = out.next_state;
        if out.terminal {
            break;
        }
    }
    traj.outcome = state.status;
    Ok(Rollout { trajectory: traj, states })
}

pub fn rollout<R: Rng + ?Sized>(
    game: &Game,
    policy: &Policy<'_>,
    shaping: Option<&ShapingContext>,
    source: Source,
    rng: &mut R,
) -> Result<Trajectory> {
    Ok(rollout_with(game, shaping, source, rng, |_, x, rng| policy.choose(x, rng))?.trajectory)
}

pub fn evaluate<R: Rng + ?Sized>(
    game: &Game,
    policy: &Policy<'_>,
    episodes: usize,
    rng: &mut R,
) -> Result<EvalSummary> {
    let mut successes = 0;
    let mut total_len = 0usize;
    let mut total_ret = 0.0;
    for _ in 0..episodes {
        let t = rollout(game, policy, None, Source::Dqn, rng)?;
        successes += usize::from(t.outcome == Status::GoalReached);
        total_len += t.len();
        total_ret += t.base_return();
    }
    Ok(EvalSummary {
        episodes,
        successes,
        mean_length: total_len as f64 / episodes as f64,
        mean_return: total_ret / episodes as f64,
    })
}

pub fn train_expert(game: &Game, demos: &DemoSet, cfg: &TrainConfig) -> Result<(QNetwork, TrainLog)> {
    let (expert, log) = train_expert_logged(game, demos, cfg)?;
    Ok((expert.ok_or(Error::NoSuccessfulCheckpoint)?, log))
}

/// As [`train_expert`], but the log is returned even when no checkpoint
/// reached the goal.
pub fn train_expert_logged(
    game: &Game,
    demos: &DemoSet,
    cfg: &TrainConfig,
) -> Result<(Option<QNetwork>, TrainLog)> {
    cfg.validate()?;
    if demos.is_empty() {
        return Err(Error::Precondition("no demonstrations".into()));
    }
    let started = Instant::now();
    let game = match cfg.horizon {
        Some(h) => game.with_horizon(h),
        None => game.clone(),
    };
    let map = game.map();
    let shaping = ShapingContext::new(&game, demos.clone(), cfg.gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_e7a1);

    let mut net = QNetwork::new(&cfg.hidden, &mut rng);
    let mut target = net.clone();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let schedule = cfg.schedule();

    let mut episodes: Vec<EpisodeRecord> = Vec::new();
    let mut loss_samples = Vec::new();
    let mut evals: Vec<EvalRecord> = Vec::new();
    let mut best: Option<(QNetwork, usize, EvalSummary)> = None;
    let mut success_window_met_at = None;
    let mut literal_met_at = None;

    let mut state = game.initial_state();
    let (mut ep_len, mut ep_ret, mut ep_loss, mut ep_updates) = (0usize, 0.0, 0.0, 0usize);
    let mut updates = 0usize;
    let mut stop_reason = StopReason::Cap;
    let mut stop_step = cfg.total_timesteps;

    let mut run_eval = |net: &QNetwork, step: usize, evals: &mut Vec<EvalRecord>, rng: &mut ChaCha8Rng| -> Result<()> {
        let summary = evaluate(&game, &Policy::Q { net, eps: 0.0 }, cfg.eval_episodes, rng)?;
        evals.push(EvalRecord { step, summary });
        if best.as_ref().is_none_or(|(_, _, b)| summary.better_than(b)) {
            best = Some((net.clone(), step, summary));
        }
        Ok(())
    };

    for step in 1..=cfg.total_timesteps {
        let x = featurize(map, &state);
        let action = act(&net, &x, schedule.value(step - 1), &mut rng);
        let out = game.step(&state, action)?;
        let shaped = out.base_reward + shaping.f_value(&state, action, &out.next_state)?;
        buffer.push(ReplayTransition {
            features: x,
            action: action.id(),
            reward: shaped,
            next_features: featurize(map, &out.next_state),
            terminal: out.terminal,
        });
        ep_len += 1;
        ep_ret += out.base_reward;

        if step > cfg.learning_starts && buffer.len() >= cfg.batch_size {
            let batch = buffer.sample(cfg.batch_size, &mut rng);
            let loss = net.td_update_clipped(&target, &batch, cfg.gamma, cfg.lr, cfg.max_grad_norm, updates)?;
            updates += 1;
            ep_loss += loss;
            ep_updates += 1;
            if updates % 100 == 1 {
                loss_samples.push((step, loss));
            }
        }
        sync_target(&net, &mut target, step, cfg.target_sync);

        let mut stop = false;
        if out.terminal {
            episodes.push(EpisodeRecord {
                step,
                episode: episodes.len(),
                length: ep_len,
                base_return: ep_ret,
                outcome: out.next_state.status,
                loss: (ep_updates > 0).then(|| ep_loss / ep_updates as f64),
            });
            if let Some((mean, all_goal)) = window_stats(&episodes, cfg.window) {
                if success_window_met_at.is_none() && all_goal && mean <= cfg.n_thresh {
                    success_window_met_at = Some(step);
                }
                if literal_met_at.is_none() && mean >= cfg.n_thresh {
                    literal_met_at = Some(step);
                }
            }
            stop = stopping_met(&episodes, cfg);
            state = game.initial_state();
            (ep_len, ep_ret, ep_loss, ep_updates) = (0, 0.0, 0.0, 0);
        } else {
            state = out.next_state;
        }

        if stop {
            run_eval(&net, step, &mut evals, &mut eval_rng)?;
            stop_reason = StopReason::Rule;
            stop_step = step;
            break;
        }
        if step % cfg.eval_interval == 0 || step == cfg.total_timesteps {
            run_eval(&net, step, &mut evals, &mut eval_rng)?;
        }
    }

    let (expert, best_eval_step) = match best {
        Some((net, step, summary)) if summary.successes > 0 => (Some(net), step),
        Some((_, step, _)) => (None, step),
        None => (None, 0),
    };
    let log = TrainLog {
        episodes,
        loss_samples,
        evals,
        stop_step,
        stop_reason,
        best_eval_step,
        success_window_met_at,
        literal_met_at,
        wall_clock: started.elapsed(),
    };
    Ok((expert, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qpolicy::{Dense, Mlp};

    fn record(length: usize, outcome: Status) -> EpisodeRecord {
        EpisodeRecord {
            step: 0,
            episode: 0,
            length,
            base_return: 0.0,
            outcome,
            loss: None,
        }
    }

    #[test]
    fn stopping_rule_examples() {
        let cfg = TrainConfig::full(GameKind::Maze);
        let good: Vec<_> = (0..10).map(|_| record(30, Status::GoalReached)).collect();
        assert!(stopping_met(&good, &cfg));
        let mut one_timeout = good.clone();
        one_timeout[4] = record(30, Status::TimedOut);
        assert!(!stopping_met(&one_timeout, &cfg));
        assert!(!stopping_met(&good[..9], &cfg));
        let long: Vec<_> = (0..10).map(|_| record(56, Status::GoalReached)).collect();
        assert!(!stopping_met(&long, &cfg));

        let literal = TrainConfig {
            stopping: StoppingRule::Literal,
            ..cfg
        };
        assert!(!stopping_met(&good, &literal));
        let timeouts: Vec<_> = (0..10).map(|_| record(300, Status::TimedOut)).collect();
        assert!(stopping_met(&timeouts, &literal));
    }

    #[test]
    fn full_defaults() {
        let m = TrainConfig::full(GameKind::Maze);
        assert_eq!((m.gamma, m.lr, m.window), (0.999, 1e-4, 10));
        assert_eq!((m.total_timesteps, m.learning_starts), (2_000_000, 100_000));
        assert_eq!((m.exploration_fraction, m.eps_initial, m.eps_final), (0.8, 0.9, 0.1));
        assert_eq!(m.n_thresh, 55.0);
        let c = TrainConfig::full(GameKind::Ctf);
        assert_eq!((c.learning_starts, c.n_thresh), (300_000, 40.0));
        let e = TrainConfig::full(GameKind::Ctfe);
        assert_eq!((e.exploration_fraction, e.eps_final), (0.99, 0.001));
        assert_eq!((e.total_timesteps, e.n_thresh), (1_800_000, 42.0));
        for k in [GameKind::Maze, GameKind::Ctf, GameKind::Ctfe] {
            TrainConfig::full(k).validate().unwrap();
            TrainConfig::desk(k).validate().unwrap();
        }
        let bad = TrainConfig { window: 0, ..m };
        assert!(bad.validate().is_err());
    }

    /// Fixed-action Q network: output biases favour `action`.
    fn constant_policy(action: Action) -> QNetwork {
        let mut b = vec![0.0; 4];
        b[action.id()] = 1.0;
        QNetwork::from_mlp(Mlp::from_layers(vec![Dense::new(5, 4, vec![0.0; 20], b)]))
    }

    #[test]
    fn rollout_forced_corridor() {
        let game = Game::from_text("kind=maze\nS.G\n").unwrap();
        let net = constant_policy(Action::Right);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = rollout(&game, &Policy::Q { net: &net, eps: 0.0 }, None, Source::Dqn, &mut rng).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.outcome, Status::GoalReached);
        assert!(t.steps.iter().all(|s| s.shaped_reward.is_none()));
    }

    #[test]
    fn rollout_times_out() {
        let game = Game::from_text("kind=maze horizon=5\nS.G\n").unwrap();
        let net = constant_policy(Action::Up);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = rollout(&game, &Policy::Q { net: &net, eps: 0.0 }, None, Source::Dqn, &mut rng).unwrap();
        assert_eq!(t.len(), 5);
        assert_eq!(t.outcome, Status::TimedOut);
    }

    #[test]
    fn empty_demos_precondition() {
        let game = Game::from_text("kind=maze\nS.G\n").unwrap();
        assert!(DemoSet::new(vec![Trajectory::new(game.map(), Source::Human)]).is_err());
    }
}
