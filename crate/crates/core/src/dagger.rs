//! Synthetic trajectory generation by dataset aggregation.
//!
//! The aggregated dataset starts from the demonstrations (`WithDemos`) or
//! from greedy expert rollouts (`ExpertSeeded`). Each iteration rolls out
//! the mixture `beta_i * expert + (1 - beta_i) * classifier`, labels every
//! visited state with the expert's greedy action, and retrains the
//! classifier on everything collected so far. Training continues from the
//! previous iteration's weights.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gridworld::{Action, Game, Status};
use crate::qpolicy::{featurize, ActMode, FeatureVector, PolicyClassifier, QNetwork, DEFAULT_HIDDEN};
use crate::shaping::DemoSet;
use crate::train::{evaluate, rollout, rollout_with, EvalSummary, Policy};
use crate::trajio::{Source, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DaggerMode {
    /// Seeded with the demonstrations (DAgger+E).
    WithDemos,
    /// Seeded with expert rollouts (DAgger-E).
    ExpertSeeded,
}

impl DaggerMode {
    pub fn source(self) -> Source {
        match self {
            DaggerMode::WithDemos => Source::DaggerPlusE,
            DaggerMode::ExpertSeeded => Source::DaggerE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Highest validation mean return, ties to the earliest iteration.
    MeanReturn,
    /// Highest validation goal rate, then mean return, then earliest.
    GoalRateThenReturn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaggerConfig {
    pub n_train: usize,
    pub beta0: f64,
    pub beta_decay: f64,
    pub rollouts_per_iter: usize,
    pub epochs: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub validation_rollouts: usize,
    pub validation_mode: ActMode,
    pub selection: Selection,
    pub mode: DaggerMode,
    pub horizon: Option<usize>,
    pub seed: u64,
}

impl DaggerConfig {
    pub fn new(mode: DaggerMode) -> Self {
        DaggerConfig {
            n_train: 10,
            beta0: 1.0,
            beta_decay: 0.5,
            rollouts_per_iter: 5,
            epochs: 50,
            lr: 0.05,
            hidden: DEFAULT_HIDDEN.to_vec(),
            validation_rollouts: 20,
            validation_mode: ActMode::Greedy,
            selection: Selection::GoalRateThenReturn,
            mode,
            horizon: None,
            seed: 0,
        }
    }

    /// Mixing weight for 1-based iteration `i`.
    pub fn beta(&self, i: usize) -> f64 {
        self.beta0 * self.beta_decay.powi(i as i32 - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(format!("DaggerConfig: {m}")));
        if self.n_train == 0 {
            return bad("n_train must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.beta0) || !(0.0..=1.0).contains(&self.beta_decay) {
            return bad("beta0 and beta_decay must lie in [0, 1]");
        }
        if self.rollouts_per_iter == 0 || self.validation_rollouts == 0 || self.epochs == 0 {
            return bad("rollouts, validation rollouts and epochs must be positive");
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return bad("lr must be positive");
        }
        if self.horizon == Some(0) {
            return bad("horizon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    SeedDemo,
    ExpertRollout,
    Relabeled,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggDataset {
    pairs: Vec<(FeatureVector, usize)>,
    provenance: Vec<Provenance>,
}

impl AggDataset {
    pub fn push(&mut self, x: FeatureVector, action: Action, tag: Provenance) {
        self.pairs.push((x, action.id()));
        self.provenance.push(tag);
    }

    pub fn pairs(&self) -> &[(FeatureVector, usize)] {
        &self.pairs
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Per-step coin flip between the expert's greedy action and a sampled
/// classifier action.
pub fn mixed_action<R: Rng + ?Sized>(
    beta: f64,
    expert: &QNetwork,
    clf: &PolicyClassifier,
    x: &FeatureVector,
    rng: &mut R,
) -> Action {
    if beta >= 1.0 || (beta > 0.0 && rng.gen::<f64>() < beta) {
        expert.greedy(x)
    } else {
        clf.act(x, ActMode::Sample, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaggerIteration {
    pub iteration: usize,
    pub beta: f64,
    pub classifier_loss: f64,
    pub validation: EvalSummary,
    pub dataset_size: usize,
    pub relabeled: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaggerLog {
    pub initial_size: usize,
    pub iterations: Vec<DaggerIteration>,
    /// 1-based iteration whose classifier was returned.
    pub selected: usize,
}

impl DaggerLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,beta,classifier_loss,validation_mean_return,validation_goal_rate,validation_mean_length,dataset_size\n",
        );
        for it in &self.iterations {
            let v = &it.validation;
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                it.iteration,
                it.beta,
                it.classifier_loss,
                v.mean_return,
                v.success_rate(),
                v.mean_length,
                it.dataset_size
            );
        }
        out
    }
}

fn better(selection: Selection, a: &EvalSummary, b: &EvalSummary) -> bool {
    match selection {
        Selection::MeanReturn => a.mean_return > b.mean_return,
        Selection::GoalRateThenReturn => {
            let (ra, rb) = (a.success_rate(), b.success_rate());
            ra > rb || (ra == rb && a.mean_return > b.mean_return)
        }
    }
}

pub fn expert_is_competent(game: &Game, expert: &QNetwork) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = rollout(game, &Policy::Q { net: expert, eps: 0.0 }, None, Source::Dqn, &mut rng)?;
    Ok(t.outcome == Status::GoalReached)
}

pub fn run_dagger(
    game: &Game,
    expert: &QNetwork,
    demos: Option<&DemoSet>,
    cfg: &DaggerConfig,
) -> Result<(PolicyClassifier, DaggerLog)> {
    cfg.validate()?;
    let game = match cfg.horizon {
        Some(h) => game.with_horizon(h),
        None => game.clone(),
    };
    if !expert_is_competent(&game, expert)? {
        return Err(Error::ExpertNotCompetent);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let map = game.map();

    let mut data = AggDataset::default();
    match cfg.mode {
        DaggerMode::WithDemos => {
            let demos = demos
                .filter(|d| !d.is_empty())
                .ok_or_else(|| Error::Precondition("WithDemos mode needs demonstrations".into()))?;
            for t in demos.trajectories() {
                if t.map_id != map.map_id {
                    return Err(Error::MapMismatch {
                        expected: map.map_id.clone(),
                        found: t.map_id.clone(),
                    });
                }
                let states = t.replay_states(&game)?;
                for (s, step) in states.iter().zip(&t.steps) {
                    let a = step.action().ok_or_else(|| Error::Format("bad action id".into()))?;
                    data.push(featurize(map, s), a, Provenance::SeedDemo);
                }
            }
        }
        DaggerMode::ExpertSeeded => {
            for _ in 0..cfg.rollouts_per_iter {
                let r = rollout_with(&game, None, Source::Dqn, &mut rng, |_, x, _| expert.greedy(x))?;
                for s in &r.states {
                    let x = featurize(map, s);
                    data.push(x, expert.greedy(&x), Provenance::ExpertRollout);
                }
            }
        }
    }
    if data.is_empty() {
        return Err(Error::Precondition("aggregated dataset is empty".into()));
    }
    let initial_size = data.len();

    let mut clf = PolicyClassifier::new(&cfg.hidden, &mut rng);
    clf.train(data.pairs(), cfg.epochs, cfg.lr, &mut rng)?;

    let mut iterations = Vec::with_capacity(cfg.n_train);
    let mut best: Option<(PolicyClassifier, usize, EvalSummary)> = None;
    for i in 1..=cfg.n_train {
        let beta = cfg.beta(i);
        let mut relabeled = 0;
        for _ in 0..cfg.rollouts_per_iter {
            let r = rollout_with(&game, None, Source::Dqn, &mut rng, |_, x, rng| {
                mixed_action(beta, expert, &clf, x, rng)
            })?;
            for s in &r.states {
                let x = featurize(map, s);
                data.push(x, expert.greedy(&x), Provenance::Relabeled);
                relabeled += 1;
            }
        }
        let loss = clf.train(data.pairs(), cfg.epochs, cfg.lr, &mut rng)?;
        let validation = evaluate(
            &game,
            &Policy::Classifier {
                clf: &clf,
                mode: cfg.validation_mode,
            },
            cfg.validation_rollouts,
            &mut rng,
        )?;
        if best.as_ref().is_none_or(|(_, _, b)| better(cfg.selection, &validation, b)) {
            best = Some((clf.clone(), i, validation));
        }
        iterations.push(DaggerIteration {
            iteration: i,
            beta,
            classifier_loss: loss,
            validation,
            dataset_size: data.len(),
            relabeled,
        });
    }
    let (best, selected, _) = best.expect("n_train >= 1");
    Ok((
        best,
        DaggerLog {
            initial_size,
            iterations,
            selected,
        },
    ))
}

/// `n` rollouts of `policy`, tagged with `source`.
pub fn generate_synthetic<R: Rng + ?Sized>(
    game: &Game,
    policy: &Policy<'_>,
    n: usize,
    horizon: Option<usize>,
    source: Source,
    rng: &mut R,
) -> Result<Vec<Trajectory>> {
    if n == 0 {
        return Err(Error::Precondition("asked for zero trajectories".into()));
    }
    let game = match horizon {
        Some(h) => game.with_horizon(h),
        None => game.clone(),
    };
    (0..n).map(|_| rollout(&game, policy, None, source, rng)).collect()
}
