//! Deep Q-learning for supply-temperature control: an MLP Q-function over
//! observation windows, uniform experience replay, linear epsilon annealing
//! and a periodically synced target network.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::control::WaterCurve;
use crate::error::{Error, Result};
use crate::mdp::{
    ActionKind, Decision, DecisionContext, EpisodeSetup, Env, ObservationWindow, Policy, TargetSchedule,
    ThermalModel, FRAME_FIXED, GAMMA, N_ACTIONS, WARMUP_HOURS,
};
use crate::nn::{Adam, Mlp};
use crate::rng::{self, LabRng};
use crate::weather::WeatherSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub lr: f64,
    pub buffer_capacity: usize,
    pub batch: usize,
    pub episodes: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_fraction: f64,
    pub target_update_every: usize,
    pub gamma: f64,
    pub hidden: Vec<usize>,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            lr: 1e-3,
            buffer_capacity: 100_000,
            batch: 32,
            episodes: 300,
            eps_start: 1.0,
            eps_end: 0.1,
            eps_fraction: 0.8,
            target_update_every: 200,
            gamma: GAMMA,
            hidden: vec![64, 64],
            clip_norm: Some(10.0),
            seed: 0,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.eps_end && self.eps_end <= self.eps_start && self.eps_start <= 1.0) {
            return Err(Error::Config("need 0 <= eps_end <= eps_start <= 1".into()));
        }
        if !(self.eps_fraction > 0.0 && self.eps_fraction <= 1.0) {
            return Err(Error::Config("eps_fraction must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1)".into()));
        }
        if self.batch == 0 || self.buffer_capacity < self.batch || self.target_update_every == 0 {
            return Err(Error::Config(
                "need batch > 0, buffer_capacity >= batch and target_update_every > 0".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("lr must be > 0".into()));
        }
        Ok(())
    }
}

/// Linear from `eps_start` at step 0 to `eps_end` at
/// `eps_fraction * total_steps`, flat afterwards.
pub fn epsilon_at(step: usize, total_steps: usize, config: &DqnConfig) -> f64 {
    debug_assert!(total_steps > 0);
    let span = config.eps_fraction * total_steps as f64;
    let frac = step as f64 / span;
    if frac >= 1.0 {
        return config.eps_end;
    }
    config.eps_start + frac * (config.eps_end - config.eps_start)
}

/// Fixed-capacity ring; once full each push overwrites the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be > 0");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Storage slot `i` (not chronological).
    pub fn get(&self, i: usize) -> &T {
        &self.items[i]
    }

    pub fn sample_index(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(0..self.items.len())
    }

    /// `n` entries drawn uniformly with replacement.
    pub fn sample<'a>(&'a self, rng: &mut impl Rng, n: usize) -> Vec<&'a T> {
        (0..n).map(|_| &self.items[self.sample_index(rng)]).collect()
    }

    /// Contents oldest first.
    pub fn chronological(&self) -> impl Iterator<Item = &T> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }
}

/// A transition in replay: raw observation windows shared with neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Arc<[f32]>,
    pub action: u8,
    pub reward: f64,
    pub next_state: Arc<[f32]>,
    pub done: bool,
}

/// Temperatures enter as (degC - 18) / 10, the hour encoding unchanged.
pub fn features(window: &[f32], n_apartments: usize, out: &mut Vec<f64>) {
    let frame = FRAME_FIXED + n_apartments;
    out.clear();
    for (i, &v) in window.iter().enumerate() {
        let k = i % frame;
        let v = f64::from(v);
        out.push(if k == 2 || k == 3 { v } else { (v - 18.0) / 10.0 });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub mlp: Mlp,
    pub n_apartments: usize,
}

pub const CHECKPOINT_KIND: &str = "q-network";

impl QNetwork {
    pub fn new(n_apartments: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut sizes = vec![ObservationWindow::dim(n_apartments)];
        sizes.extend_from_slice(hidden);
        sizes.push(N_ACTIONS);
        QNetwork {
            mlp: Mlp::new(&sizes, rng),
            n_apartments,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn q_values(&self, x: &[f64]) -> Vec<f64> {
        self.mlp.forward(x)
    }

    pub fn q_window(&self, window: &[f32]) -> Vec<f64> {
        let mut x = Vec::with_capacity(window.len());
        features(window, self.n_apartments, &mut x);
        self.q_values(&x)
    }

    /// Argmax over actions, lowest index on ties.
    pub fn greedy(&self, window: &[f32]) -> usize {
        argmax(&self.q_window(window))
    }

    pub fn to_checkpoint(&self, kind: ActionKind) -> Checkpoint {
        let mut c = Checkpoint::new(
            CHECKPOINT_KIND,
            serde_json::json!({ "sizes": self.mlp.sizes(), "n_apartments": self.n_apartments }),
            self.mlp.params.clone(),
        );
        c.meta = serde_json::json!({ "action_kind": kind });
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<(Self, ActionKind)> {
        c.expect_kind(CHECKPOINT_KIND)?;
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let sizes: Vec<usize> =
            serde_json::from_value(c.dims["sizes"].clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n_apartments = c.dims["n_apartments"].as_u64().ok_or_else(|| bad("missing n_apartments"))? as usize;
        let kind: ActionKind =
            serde_json::from_value(c.meta["action_kind"].clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if sizes.first() != Some(&ObservationWindow::dim(n_apartments)) || sizes.last() != Some(&N_ACTIONS) {
            return Err(bad("network sizes do not match the observation and action spaces"));
        }
        let mlp = Mlp::from_params(&sizes, c.params.clone()).ok_or_else(|| bad("parameter count mismatch"))?;
        Ok((QNetwork { mlp, n_apartments }, kind))
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Mean squared TD error over `batch` and its gradient w.r.t. the online
/// parameters, accumulated into `grad`.
pub fn td_loss_and_grad(net: &QNetwork, target: &QNetwork, batch: &[&Experience], gamma: f64, grad: &mut [f64]) -> f64 {
    let n = net.n_apartments;
    let scale = 1.0 / batch.len() as f64;
    let mut x = Vec::new();
    let mut loss = 0.0;
    let mut g_out = vec![0.0; N_ACTIONS];
    for e in batch {
        let y = if e.done {
            e.reward
        } else {
            features(&e.next_state, n, &mut x);
            let q_next = target.q_values(&x);
            e.reward + gamma * q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        features(&e.state, n, &mut x);
        let tape = net.mlp.forward_tape(&x);
        let a = e.action as usize;
        let err = tape.output()[a] - y;
        loss += err * err * scale;
        g_out.iter_mut().for_each(|g| *g = 0.0);
        g_out[a] = 2.0 * err * scale;
        net.mlp.backward(&tape, &g_out, grad);
    }
    loss
}

/// One optimiser step on the TD loss; returns the loss before the step.
pub fn td_update(net: &mut QNetwork, target: &QNetwork, batch: &[&Experience], gamma: f64, adam: &mut Adam) -> Result<f64> {
    let mut grad = vec![0.0; net.mlp.n_params()];
    let loss = td_loss_and_grad(net, target, batch, gamma, &mut grad);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            epoch: 0,
            message: format!("TD loss became {loss}"),
        });
    }
    adam.step(&mut net.mlp.params, &mut grad);
    Ok(loss)
}

/// The frozen greedy policy of a trained network.
#[derive(Debug, Clone)]
pub struct DqnPolicy {
    pub net: Arc<QNetwork>,
    pub kind: ActionKind,
    pub name: String,
}

impl DqnPolicy {
    pub fn new(net: Arc<QNetwork>, kind: ActionKind) -> Self {
        let name = match kind {
            ActionKind::Increment => "agent1",
            ActionKind::BaselineDelta => "agent2",
        };
        DqnPolicy {
            net,
            kind,
            name: name.into(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (net, kind) = QNetwork::from_checkpoint(&Checkpoint::load(path)?)?;
        Ok(Self::new(Arc::new(net), kind))
    }
}

impl Policy for DqnPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        Decision::Action {
            kind: self.kind,
            index: self.net.greedy(&ctx.obs.data),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub city: String,
    pub total_reward: f64,
    pub epsilon: f64,
    pub loss_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub net: QNetwork,
    pub kind: ActionKind,
    pub history: Vec<EpisodeLog>,
    pub replay_len: usize,
    pub steps: usize,
}

impl TrainedAgent {
    pub fn reward_history(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.total_reward).collect()
    }

    pub fn policy(&self) -> DqnPolicy {
        DqnPolicy::new(Arc::new(self.net.clone()), self.kind)
    }

    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        write_training_log(&self.history, path)
    }
}

/// Per-episode training log as CSV with header
/// `episode,city,total_reward,epsilon,loss_mean`.
pub fn training_log_csv(history: &[EpisodeLog]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for h in history {
        w.serialize(h).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("UTF-8 CSV")
}

pub fn write_training_log(history: &[EpisodeLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, training_log_csv(history)).map_err(|e| Error::io(path, e))
}

pub fn read_training_log(path: impl AsRef<Path>) -> Result<Vec<EpisodeLog>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse { line: 0, message: format!("{}: {e}", path.display()) })?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::Parse { line: i as u64 + 2, message: e.to_string() }))
        .collect()
}

/// Window of episodes for the divergence check.
pub const DIVERGENCE_WINDOW: usize = 20;

fn check_divergence(history: &[EpisodeLog]) -> Result<()> {
    let n = history.len();
    if n < 2 * DIVERGENCE_WINDOW {
        return Ok(());
    }
    let avg = |s: &[EpisodeLog]| s.iter().map(|h| h.total_reward).sum::<f64>() / s.len() as f64;
    let now = avg(&history[n - DIVERGENCE_WINDOW..]);
    let before = avg(&history[n - 2 * DIVERGENCE_WINDOW..n - DIVERGENCE_WINDOW]);
    if before < 0.0 && now < 10.0 * before {
        return Err(Error::Divergence {
            epoch: n - 1,
            message: format!("moving-average reward fell from {before:.1} to {now:.1}"),
        });
    }
    Ok(())
}

/// Online/target network pair with its optimiser and replay memory.
pub struct Learner {
    pub online: QNetwork,
    pub target: QNetwork,
    pub buffer: ReplayBuffer<Experience>,
    /// Transitions observed so far.
    pub steps: usize,
    adam: Adam,
    replay_rng: LabRng,
    gamma: f64,
    batch: usize,
    target_update_every: usize,
}

impl Learner {
    pub fn new(n_apartments: usize, config: &DqnConfig) -> Result<Self> {
        config.validate()?;
        let mut init_rng = rng::rng_from(rng::derive_seed(config.seed, "dqn-init"));
        let online = QNetwork::new(n_apartments, &config.hidden, &mut init_rng);
        let mut adam = Adam::new(online.mlp.n_params(), config.lr);
        if let Some(c) = config.clip_norm {
            adam = adam.with_clip_norm(c);
        }
        Ok(Learner {
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            steps: 0,
            adam,
            replay_rng: rng::rng_from(rng::derive_seed(config.seed, "dqn-replay")),
            gamma: config.gamma,
            batch: config.batch,
            target_update_every: config.target_update_every,
        })
    }

    /// Epsilon-greedy action from `explore`.
    pub fn act(&self, window: &[f32], epsilon: f64, explore: &mut impl Rng) -> usize {
        if explore.random::<f64>() < epsilon {
            explore.random_range(0..N_ACTIONS)
        } else {
            self.online.greedy(window)
        }
    }

    /// Store `exp`, take one TD step once the buffer holds a batch, and sync
    /// the target every `target_update_every` transitions. Returns the TD
    /// loss when an update happened.
    pub fn observe(&mut self, exp: Experience) -> Result<Option<f64>> {
        self.buffer.push(exp);
        let mut loss = None;
        if self.buffer.len() >= self.batch {
            let batch = self.buffer.sample(&mut self.replay_rng, self.batch);
            loss = Some(td_update(&mut self.online, &self.target, &batch, self.gamma, &mut self.adam)?);
        }
        self.steps += 1;
        if self.steps.is_multiple_of(self.target_update_every) {
            self.target.mlp.params.clone_from(&self.online.mlp.params);
        }
        Ok(loss)
    }
}

/// Train one agent. Each episode draws a season from `weather_pool`,
/// cloning `env_model` fresh. Sequential by design: replay contents depend on
/// insertion order.
pub fn train_agent<M>(
    kind: ActionKind,
    env_model: &M,
    baseline: WaterCurve,
    weather_pool: &[WeatherSeries],
    schedule: &TargetSchedule,
    config: &DqnConfig,
) -> Result<TrainedAgent>
where
    M: ThermalModel + Clone,
{
    schedule.validate()?;
    if weather_pool.is_empty() {
        return Err(Error::InvalidInput("empty weather pool".into()));
    }
    let mut learner = Learner::new(env_model.n_occupied(), config)?;
    let mut explore: LabRng = rng::rng_from(rng::derive_seed(config.seed, "dqn-explore"));
    let mut weather_rng: LabRng = rng::rng_from(rng::derive_seed(config.seed, "dqn-weather"));

    let per_episode = weather_pool[0].len().saturating_sub(WARMUP_HOURS).max(1);
    let total_steps = (config.episodes * per_episode).max(1);
    let setup = EpisodeSetup::new(*schedule, baseline);
    let mut history = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let w = &weather_pool[weather_rng.random_range(0..weather_pool.len())];
        let mut model = env_model.clone();
        let mut env = Env::start(&mut model, w, &setup)?;
        let (mut total, mut loss_sum, mut updates) = (0.0, 0.0, 0usize);
        let mut eps = epsilon_at(learner.steps, total_steps, config);
        while !env.is_done() {
            let ctx = env.context();
            eps = epsilon_at(learner.steps, total_steps, config);
            let action = learner.act(&ctx.obs.data, eps, &mut explore);
            let out = env.step(Decision::Action { kind, index: action })?;
            total += out.reward;
            let loss = learner
                .observe(Experience {
                    state: ctx.obs.data,
                    action: action as u8,
                    reward: out.reward,
                    next_state: out.next_obs.data,
                    done: out.done,
                })
                .map_err(|e| match e {
                    Error::Divergence { message, .. } => Error::Divergence { epoch: episode, message },
                    other => other,
                })?;
            if let Some(l) = loss {
                loss_sum += l;
                updates += 1;
            }
        }
        history.push(EpisodeLog {
            episode,
            city: w.city.clone(),
            total_reward: total,
            epsilon: eps,
            loss_mean: if updates > 0 { loss_sum / updates as f64 } else { 0.0 },
        });
        check_divergence(&history)?;
    }
    Ok(TrainedAgent {
        replay_len: learner.buffer.len(),
        steps: learner.steps,
        net: learner.online,
        kind,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_examples() {
        let c = DqnConfig::default();
        assert_eq!(epsilon_at(0, 1000, &c), 1.0);
        assert!((epsilon_at(1000, 1000, &c) - 0.1).abs() < 1e-12);
        assert!((epsilon_at(400, 1000, &c) - 0.55).abs() < 1e-12);
        assert!((epsilon_at(900, 1000, &c) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..7 {
            b.push(i);
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.chronological().copied().collect::<Vec<_>>(), vec![4, 5, 6]);
        let mut b = ReplayBuffer::new(5);
        b.push(1);
        b.push(2);
        assert_eq!(b.chronological().copied().collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0; 13]), 0);
    }

    #[test]
    fn features_scale_temperatures_only() {
        let w = [28.0f32, 38.0, 0.5, -0.5, 18.0];
        let mut x = Vec::new();
        features(&w, 1, &mut x);
        assert_eq!(x, vec![1.0, 2.0, 0.5, -0.5, 0.0]);
    }

    #[test]
    fn divergence_trips_on_collapse() {
        let mk = |r: f64| EpisodeLog {
            episode: 0,
            city: String::new(),
            total_reward: r,
            epsilon: 0.0,
            loss_mean: 0.0,
        };
        let mut h: Vec<EpisodeLog> = (0..20).map(|_| mk(-10.0)).collect();
        h.extend((0..20).map(|_| mk(-50.0)));
        assert!(check_divergence(&h).is_ok());
        h.extend((0..20).map(|_| mk(-600.0)));
        assert!(check_divergence(&h).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        let c = DqnConfig {
            eps_end: 0.5,
            eps_start: 0.2,
            ..DqnConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(DqnConfig { eps_fraction: 0.0, ..DqnConfig::default() }.validate().is_err());
    }
}
