//! Small fully connected networks trained by plain gradient descent: a
//! Q-value regressor for the expert and a softmax action classifier for
//! imitation. Also the replay buffer, the exploration schedule and the
//! policy file format.
//!
//! Policy file layout (all integers decimal ASCII, header lines end in LF):
//!
//! ```text
//! format=QNET1            (or CLF1)
//! layers=5,64,64,4
//! map_id=<64 hex chars>
//! game=maze               (maze | ctf | ctfe)
//! source=dagger_e         (optional, classifier provenance)
//! end
//! <f64 little-endian blocks: for each layer, weights row-major
//!  [outputs x inputs], then biases [outputs]>
//! ```

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gridworld::{Action, GameKind, GameState, GridMap};
use crate::trajio::Source;

pub const FEATURES: usize = 5;
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
pub const CLASSIFIER_BATCH: usize = 64;

/// `[row/height, col/width, has_key, enemy_row/height, enemy_col/width]`,
/// enemy slots zero outside CTFE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn featurize(map: &GridMap, state: &GameState) -> FeatureVector {
    let h = map.height as f64;
    let w = map.width as f64;
    let (er, ec) = state
        .enemy
        .and_then(|e| map.enemy_cell(&e))
        .map_or((0.0, 0.0), |c| (c.row as f64 / h, c.col as f64 / w));
    FeatureVector([
        state.agent.row as f64 / h,
        state.agent.col as f64 / w,
        if state.has_key { 1.0 } else { 0.0 },
        er,
        ec,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    // row-major [outputs x inputs]
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, biases: Vec<f64>) -> Self {
        assert_eq!(weights.len(), inputs * outputs);
        assert_eq!(biases.len(), outputs);
        Dense { inputs, outputs, weights, biases }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.biases.iter().zip(self.weights.chunks_exact(self.inputs)).map(
            |(b, row)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>(),
        ));
    }
}

/// Rectifier hidden layers, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales in place so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let norm = self.norm();
        if norm > max_norm {
            let k = max_norm / norm;
            for (w, b) in &mut self.layers {
                w.iter_mut().chain(b.iter_mut()).for_each(|g| *g *= k);
            }
        }
    }
}

impl Mlp {
    /// He-style uniform fan-in initialization, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / inputs as f64).sqrt();
                let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..limit)).collect();
                Dense::new(inputs, outputs, weights, vec![0.0; outputs])
            })
            .collect();
        Mlp { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Self {
        assert!(!layers.is_empty());
        for pair in layers.windows(2) {
            assert_eq!(pair[0].outputs, pair[1].inputs, "layer shapes do not chain");
        }
        Mlp { layers }
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *v = it.next().expect("parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Input followed by the activation of every layer.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward_into(trace.last().unwrap(), &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            trace.push(out);
        }
        trace
    }

    /// Accumulates d(loss)/d(params) given d(loss)/d(output).
    fn backward(&self, trace: &[Vec<f64>], d_out: &[f64], grads: &mut Gradients) {
        let mut delta = d_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace[l];
            let (gw, gb) = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, &a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // rectifier derivative, read off the post-activation value
            for (p, &a) in prev.iter_mut().zip(input) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        self.params().iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTransition {
    pub features: FeatureVector,
    pub action: usize,
    pub reward: f64,
    pub next_features: FeatureVector,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork(Mlp);

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![FEATURES];
        sizes.extend_from_slice(hidden);
        sizes.push(Action::COUNT);
        QNetwork(Mlp::new(&sizes, rng))
    }

    pub fn from_mlp(mlp: Mlp) -> Self {
        assert_eq!(mlp.output_size(), Action::COUNT);
        QNetwork(mlp)
    }

    pub fn mlp(&self) -> &Mlp {
        &self.0
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.0
    }

    pub fn q_values(&self, x: &FeatureVector) -> [f64; Action::COUNT] {
        let out = self.0.forward(x.as_slice());
        [out[0], out[1], out[2], out[3]]
    }

    pub fn q_forward(&self, x: &FeatureVector) -> Result<[f64; Action::COUNT]> {
        if !self.0.is_finite() {
            return Err(Error::NonFiniteWeights);
        }
        Ok(self.q_values(x))
    }

    pub fn greedy(&self, x: &FeatureVector) -> Action {
        Action::ALL[argmax_lowest(&self.q_values(x))]
    }

    /// Mean squared TD error and its gradient with respect to this network.
    /// Targets come from `target` and are held constant.
    pub fn td_loss_and_grad(
        &self,
        target: &QNetwork,
        batch: &[&ReplayTransition],
        gamma: f64,
    ) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(&self.0);
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for t in batch {
            let y = if t.terminal {
                t.reward
            } else {
                let next = target.q_values(&t.next_features);
                t.reward + gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let trace = self.0.forward_trace(t.features.as_slice());
            let q = trace.last().unwrap()[t.action];
            let err = q - y;
            loss += err * err / n;
            let mut d_out = [0.0; Action::COUNT];
            d_out[t.action] = 2.0 * err / n;
            self.0.backward(&trace, &d_out, &mut grads);
        }
        (loss, grads)
    }

    /// One gradient step; returns the loss before the step.
    pub fn td_update(
        &mut self,
        target: &QNetwork,
        batch: &[&ReplayTransition],
        gamma: f64,
        lr: f64,
        update: usize,
    ) -> Result<f64> {
        self.td_update_clipped(target, batch, gamma, lr, None, update)
    }

    /// As [`QNetwork::td_update`], with the gradient norm optionally capped.
    pub fn td_update_clipped(
        &mut self,
        target: &QNetwork,
        batch: &[&ReplayTransition],
        gamma: f64,
        lr: f64,
        max_grad_norm: Option<f64>,
        update: usize,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Precondition("empty TD batch".into()));
        }
        let (loss, mut grads) = self.td_loss_and_grad(target, batch, gamma);
        if let Some(max) = max_grad_norm {
            grads.clip_norm(max);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { update });
        }
        self.0.apply(&grads, lr);
        if !self.0.is_finite() {
            return Err(Error::NonFiniteLoss { update });
        }
        Ok(loss)
    }
}

/// Hard copy every `interval` environment steps. Returns whether a copy
/// happened.
pub fn sync_target(net: &QNetwork, target: &mut QNetwork, step: usize, interval: usize) -> bool {
    if interval > 0 && step.is_multiple_of(interval) {
        target.clone_from(net);
        true
    } else {
        false
    }
}

/// Epsilon-greedy; greedy ties go to the lowest action id.
pub fn act<R: Rng + ?Sized>(net: &QNetwork, x: &FeatureVector, eps: f64, rng: &mut R) -> Action {
    if eps > 0.0 && rng.gen::<f64>() < eps {
        Action::ALL[rng.gen_range(0..Action::COUNT)]
    } else {
        net.greedy(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyClassifier(Mlp);

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl PolicyClassifier {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![FEATURES];
        sizes.extend_from_slice(hidden);
        sizes.push(Action::COUNT);
        PolicyClassifier(Mlp::new(&sizes, rng))
    }

    pub fn from_mlp(mlp: Mlp) -> Self {
        assert_eq!(mlp.output_size(), Action::COUNT);
        PolicyClassifier(mlp)
    }

    pub fn mlp(&self) -> &Mlp {
        &self.0
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.0
    }

    pub fn probabilities(&self, x: &FeatureVector) -> [f64; Action::COUNT] {
        let p = softmax(&self.0.forward(x.as_slice()));
        [p[0], p[1], p[2], p[3]]
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn xent_loss_and_grad(&self, batch: &[(FeatureVector, usize)]) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(&self.0);
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for (x, label) in batch {
            let trace = self.0.forward_trace(x.as_slice());
            let logits = trace.last().unwrap();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
            loss += (lse - logits[*label]) / n;
            let mut d_out: Vec<f64> = logits.iter().map(|l| (l - lse).exp() / n).collect();
            d_out[*label] -= 1.0 / n;
            self.0.backward(&trace, &d_out, &mut grads);
        }
        (loss, grads)
    }

    /// Shuffled mini-batch gradient descent. Returns the mean loss of the
    /// final epoch.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        dataset: &[(FeatureVector, usize)],
        epochs: usize,
        lr: f64,
        rng: &mut R,
    ) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Precondition("empty classifier dataset".into()));
        }
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let mut epoch_loss = f64::NAN;
        let mut batch = Vec::with_capacity(CLASSIFIER_BATCH);
        for epoch in 0..epochs {
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), rng);
            let mut total = 0.0;
            for chunk in order.chunks(CLASSIFIER_BATCH) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| dataset[i]));
                let (loss, grads) = self.xent_loss_and_grad(&batch);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { update: epoch });
                }
                total += loss * chunk.len() as f64;
                self.0.apply(&grads, lr);
            }
            epoch_loss = total / dataset.len() as f64;
        }
        Ok(epoch_loss)
    }

    pub fn act<R: Rng + ?Sized>(&self, x: &FeatureVector, mode: ActMode, rng: &mut R) -> Action {
        let p = self.probabilities(x);
        match mode {
            ActMode::Greedy => Action::ALL[argmax_lowest(&p)],
            ActMode::Sample => Action::ALL[sample_index(&p, rng)],
        }
    }
}

pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum; take the last non-zero slot
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<ReplayTransition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: ReplayTransition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayTransition> {
        self.entries.iter()
    }

    /// Uniform sample without replacement within the batch.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&ReplayTransition> {
        let k = batch.min(self.entries.len());
        index::sample(rng, self.entries.len(), k)
            .into_iter()
            .map(|i| &self.entries[i])
            .collect()
    }
}

/// Linear decay from `initial` to `final_eps` over the first
/// `fraction * total_timesteps` steps, then constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub final_eps: f64,
    pub fraction: f64,
    pub total_timesteps: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize) -> f64 {
        let span = self.fraction * self.total_timesteps as f64;
        if span <= 0.0 {
            return self.final_eps;
        }
        let progress = (step as f64 / span).min(1.0);
        self.initial + progress * (self.final_eps - self.initial)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyFormat {
    Qnet,
    Clf,
}

impl PolicyFormat {
    fn tag(self) -> &'static str {
        match self {
            PolicyFormat::Qnet => "QNET1",
            PolicyFormat::Clf => "CLF1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub format: PolicyFormat,
    pub map_id: String,
    pub game: GameKind,
    pub source: Option<Source>,
    pub net: Mlp,
}

impl PolicyFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes: Vec<String> = self.net.sizes().iter().map(|s| s.to_string()).collect();
        let mut header = format!(
            "format={}\nlayers={}\nmap_id={}\ngame={}\n",
            self.format.tag(),
            sizes.join(","),
            self.map_id,
            self.game
        );
        if let Some(source) = self.source {
            header.push_str(&format!("source={source}\n"));
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        out.extend(self.net.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Format(format!("policy file: {m}"));
        let marker = b"\nend\n";
        let end = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or_else(|| bad("missing end of header".into()))?;
        let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header not utf-8".into()))?;
        let body = &bytes[end + marker.len()..];

        let (mut format, mut sizes, mut map_id, mut game, mut source) = (None, None, None, None, None);
        for line in header.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line {line:?}")))?;
            match k {
                "format" => {
                    format = Some(match v {
                        "QNET1" => PolicyFormat::Qnet,
                        "CLF1" => PolicyFormat::Clf,
                        other => return Err(Error::SchemaVersionMismatch(other.into())),
                    })
                }
                "layers" => {
                    let parsed: std::result::Result<Vec<usize>, _> =
                        v.split(',').map(str::parse).collect();
                    sizes = Some(parsed.map_err(|_| bad(format!("layers {v:?}")))?);
                }
                "map_id" => map_id = Some(v.to_string()),
                "game" => game = Some(v.parse::<GameKind>().map_err(bad)?),
                "source" => source = Some(v.parse::<Source>().map_err(bad)?),
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        let format = format.ok_or_else(|| bad("missing format".into()))?;
        let sizes = sizes.ok_or_else(|| bad("missing layers".into()))?;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(bad("bad layer sizes".into()));
        }
        let n_params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if body.len() != n_params * 8 {
            return Err(bad(format!("expected {} weight bytes, found {}", n_params * 8, body.len())));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let layers = sizes
            .windows(2)
            .map(|w| {
                let weights = values.by_ref().take(w[0] * w[1]).collect();
                let biases = values.by_ref().take(w[1]).collect();
                Dense::new(w[0], w[1], weights, biases)
            })
            .collect();
        Ok(PolicyFile {
            format,
            map_id: map_id.ok_or_else(|| bad("missing map_id".into()))?,
            game: game.ok_or_else(|| bad("missing game".into()))?,
            source,
            net: Mlp { layers },
        })
    }
}
