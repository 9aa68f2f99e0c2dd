//! Batch double-DQN over vector-valued actions.
//!
//! Each candidate is an action described by [`ActionFeatures`]; the Q-network
//! scores `concat(state, features)` and the agent labels the `N` best-scoring
//! candidates per step. Bootstrapping follows the double-DQN split: the online
//! network picks the top-`N` next actions, the target network values them, and
//! the `N` values are averaged (or summed, see [`TargetAggregate`]).

mod replay;
mod weights;

pub use replay::ReplayBuffer;
pub use weights::{decode_weights, encode_weights, load_weights, save_weights};

use std::cmp::Ordering;
use std::path::Path;
use std::time::Instant;

use crate::alenv::{ActionFeatures, AlEnv, StateVec};
use crate::numkit::{Loss, Matrix, Mlp, OutputHead, Rng, Sgd, SgdConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetAggregate {
    Mean,
    Sum,
}

/// Linear decay from `start` to `end` over `decay_steps` training env steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Stop when the `window`-episode moving average of training returns fails to
/// beat its best by `min_delta` for `patience` consecutive episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub window: usize,
    pub patience: usize,
    pub min_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Q-network hidden widths.
    pub hidden: Vec<usize>,
    pub warm_start_episodes: usize,
    pub epsilon: EpsilonSchedule,
    pub replay_capacity: usize,
    pub minibatch: usize,
    /// Gradient steps between hard target syncs.
    pub target_sync: usize,
    pub early_stop: EarlyStop,
    /// Cap on total episodes, warm start included.
    pub max_episodes: usize,
    pub target_aggregate: TargetAggregate,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 1e-4,
            momentum: 0.0,
            hidden: vec![128, 128, 128],
            warm_start_episodes: 16,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                decay_steps: 500,
            },
            replay_capacity: 10_000,
            minibatch: 64,
            target_sync: 100,
            early_stop: EarlyStop {
                window: 20,
                patience: 10,
                min_delta: 1e-3,
            },
            max_episodes: 200,
            target_aggregate: TargetAggregate::Mean,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        let eps = self.epsilon;
        if !(0.0..=1.0).contains(&eps.start) || !(0.0..=1.0).contains(&eps.end) {
            return bad("epsilon must be in [0, 1]");
        }
        if eps.decay_steps == 0
            || self.replay_capacity == 0
            || self.minibatch == 0
            || self.target_sync == 0
            || self.early_stop.window == 0
            || self.early_stop.patience == 0
            || self.max_episodes == 0
        {
            return bad("agent counts must be >= 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be >= 1");
        }
        self.sgd().validate()
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            minibatch_size: self.minibatch,
            momentum: self.momentum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Online,
    Target,
}

/// Online network and its periodically synced target copy.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub online: Mlp,
    pub target: Mlp,
}

impl QNetwork {
    /// `[state_dim + 3, hidden.., 1]` with a linear head; target starts as a copy.
    pub fn new(state_dim: usize, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![state_dim + 3];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let online = Mlp::new(&sizes, OutputHead::Linear, rng)?;
        Ok(Self {
            target: online.clone(),
            online,
        })
    }

    pub fn from_online(online: Mlp) -> Result<Self> {
        if online.output_dim() != 1 || online.head() != OutputHead::Linear || online.input_dim() < 3
        {
            return Err(Error::InvalidConfig(
                "Q-network needs >= 3 inputs and one linear output".into(),
            ));
        }
        Ok(Self {
            target: online.clone(),
            online,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.online.input_dim() - 3
    }

    fn net(&self, which: Which) -> &Mlp {
        match which {
            Which::Online => &self.online,
            Which::Target => &self.target,
        }
    }

    pub fn q_value(&self, state: &StateVec, action: &ActionFeatures, which: Which) -> Result<f64> {
        Ok(self.q_values(state, std::slice::from_ref(action), which)?[0])
    }

    /// One forward pass over all `actions` at `state`.
    pub fn q_values(
        &self,
        state: &StateVec,
        actions: &[ActionFeatures],
        which: Which,
    ) -> Result<Vec<f64>> {
        let x = q_inputs(state, actions.iter(), self.state_dim())?;
        Ok(self.net(which).forward(&x)?.into_data())
    }

    /// `target <- online`.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }
}

fn q_inputs<'a>(
    state: &StateVec,
    actions: impl Iterator<Item = &'a ActionFeatures>,
    state_dim: usize,
) -> Result<Matrix> {
    if state.len() != state_dim {
        return Err(Error::DimensionMismatch {
            context: "Q-network state",
            expected: state_dim,
            found: state.len(),
        });
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for a in actions {
        data.extend_from_slice(state.values());
        data.extend_from_slice(&a.to_array());
        rows += 1;
    }
    Matrix::new(rows, state_dim + 3, data)
}

/// Positions of the `n` highest values, ties to the lower `candidate_index`.
fn top_n_positions(values: &[f64], candidates: &[ActionFeatures], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(Ordering::Equal)
            .then(
                candidates[a]
                    .candidate_index
                    .cmp(&candidates[b].candidate_index),
            )
    });
    order.truncate(n);
    order
}

/// Epsilon-greedy batch selection; returns positions into `candidates`.
///
/// One uniform draw decides explore vs exploit; exploring picks `n` uniform
/// distinct candidates, exploiting takes the `n` best online Q-values.
pub fn select_top_n(
    qnet: &QNetwork,
    state: &StateVec,
    candidates: &[ActionFeatures],
    n: usize,
    epsilon: f64,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if n > candidates.len() {
        return Err(Error::TooManyRequested {
            requested: n,
            available: candidates.len(),
        });
    }
    if rng.next_f64() < epsilon {
        return Ok(rng.sample_indices(candidates.len(), n));
    }
    let q = qnet.q_values(state, candidates, Which::Online)?;
    Ok(top_n_positions(&q, candidates, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVec,
    pub chosen: Vec<ActionFeatures>,
    pub reward: f64,
    pub next_state: StateVec,
    pub next_candidates: Vec<ActionFeatures>,
    pub terminal: bool,
}

/// `r` if terminal, else `r + gamma * agg(Q_target(s', top-N by Q_online(s', .)))`.
pub fn td_target(
    qnet: &QNetwork,
    tr: &Transition,
    n: usize,
    gamma: f64,
    aggregate: TargetAggregate,
) -> Result<f64> {
    Ok(td_targets(qnet, &[tr], n, gamma, aggregate)?[0])
}

/// Batched [`td_target`]: one online and one target forward pass in total.
pub fn td_targets(
    qnet: &QNetwork,
    batch: &[&Transition],
    n: usize,
    gamma: f64,
    aggregate: TargetAggregate,
) -> Result<Vec<f64>> {
    let sd = qnet.state_dim();
    let live: Vec<&Transition> = batch
        .iter()
        .copied()
        .filter(|t| !t.terminal && !t.next_candidates.is_empty())
        .collect();

    let online_in = {
        let mut rows = Vec::new();
        for t in &live {
            rows.push(q_inputs(&t.next_state, t.next_candidates.iter(), sd)?);
        }
        stack(&rows, sd + 3)
    };
    let online_q = qnet.online.forward(&online_in)?.into_data();

    let mut picked: Vec<(StateVec, ActionFeatures)> = Vec::new();
    let mut counts = Vec::with_capacity(live.len());
    let mut offset = 0;
    for t in &live {
        let k = t.next_candidates.len();
        let m = n.min(k);
        for p in top_n_positions(&online_q[offset..offset + k], &t.next_candidates, m) {
            picked.push((t.next_state.clone(), t.next_candidates[p]));
        }
        counts.push(m);
        offset += k;
    }
    let target_in = {
        let mut data = Vec::with_capacity(picked.len() * (sd + 3));
        for (s, a) in &picked {
            data.extend_from_slice(s.values());
            data.extend_from_slice(&a.to_array());
        }
        Matrix::new(picked.len(), sd + 3, data)?
    };
    let target_q = qnet.target.forward(&target_in)?.into_data();

    let mut bootstrap = Vec::with_capacity(live.len());
    let mut off = 0;
    for &m in &counts {
        let s: f64 = target_q[off..off + m].iter().sum();
        bootstrap.push(match aggregate {
            TargetAggregate::Mean => s / m as f64,
            TargetAggregate::Sum => s,
        });
        off += m;
    }

    let mut it = bootstrap.into_iter();
    Ok(batch
        .iter()
        .map(|t| {
            if t.terminal || t.next_candidates.is_empty() {
                t.reward
            } else {
                t.reward + gamma * it.next().expect("one bootstrap per live transition")
            }
        })
        .collect())
}

fn stack(parts: &[Matrix], cols: usize) -> Matrix {
    let rows = parts.iter().map(Matrix::rows).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Matrix::new(rows, cols, data).expect("stacked rows are finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeMode {
    /// Uniform random actions, transitions stored, no learning.
    WarmStart,
    /// Epsilon-greedy actions, store and learn after every step.
    Train,
    /// Greedy, nothing stored or learned.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub rewards: Vec<f64>,
    /// Reward-set accuracy before the first step and after the last.
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
    pub initial_test_accuracy: f64,
    /// Test accuracy after each step.
    pub test_accuracies: Vec<f64>,
    /// `|L_t|` after each step.
    pub labeled_counts: Vec<usize>,
    pub step_ms: Vec<f64>,
    pub gradient_steps: usize,
}

impl EpisodeStats {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards
            .iter()
            .rev()
            .fold(0.0, |acc, r| r + gamma * acc)
    }

    pub fn final_test_accuracy(&self) -> f64 {
        self.test_accuracies
            .last()
            .copied()
            .unwrap_or(self.initial_test_accuracy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Total reward of every episode, warm start first.
    pub curve: Vec<f64>,
    pub warm_start_episodes: usize,
    pub train_episodes: usize,
    pub stopped_early: bool,
    pub cap_reached: bool,
    pub gradient_steps: usize,
}

#[derive(Debug, Clone)]
pub struct Agent {
    qnet: QNetwork,
    cfg: AgentConfig,
    replay: ReplayBuffer,
    opt: Sgd,
    per_step: usize,
    env_steps: usize,
    grad_steps: usize,
}

impl Agent {
    pub fn new(state_dim: usize, per_step: usize, cfg: AgentConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let qnet = QNetwork::new(state_dim, &cfg.hidden, rng)?;
        Ok(Self::with_qnet(qnet, per_step, cfg, rng))
    }

    /// Agent sized for `env`.
    pub fn for_env(env: &AlEnv, cfg: AgentConfig, rng: &mut Rng) -> Result<Self> {
        Self::new(env.state_dim(), env.config().per_step, cfg, rng)
    }

    fn with_qnet(qnet: QNetwork, per_step: usize, cfg: AgentConfig, rng: &mut Rng) -> Self {
        Self {
            replay: ReplayBuffer::new(cfg.replay_capacity, rng.split()),
            opt: Sgd::new(cfg.sgd()),
            qnet,
            cfg,
            per_step,
            env_steps: 0,
            grad_steps: 0,
        }
    }

    pub fn qnet(&self) -> &QNetwork {
        &self.qnet
    }

    pub fn qnet_mut(&mut self) -> &mut QNetwork {
        &mut self.qnet
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn gradient_steps(&self) -> usize {
        self.grad_steps
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon.value(self.env_steps)
    }

    pub fn sync_target(&mut self) {
        self.qnet.sync_target();
    }

    /// One SGD step on the mean squared TD error; returns the pre-step loss.
    ///
    /// Every chosen action of a transition regresses onto that transition's
    /// single target.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<f64> {
        let targets = td_targets(
            &self.qnet,
            batch,
            self.per_step,
            self.cfg.gamma,
            self.cfg.target_aggregate,
        )?;
        let (x, y) = td_regression_batch(&self.qnet, batch, &targets)?;
        let trace = self.qnet.online.forward_trace(&x)?;
        let loss = trace.loss(&y, Loss::SquaredError)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch: None });
        }
        let grads = self.qnet.online.backward(&trace, &y, Loss::SquaredError)?;
        self.opt.step(&mut self.qnet.online, &grads)?;
        self.grad_steps += 1;
        Ok(loss)
    }

    /// Samples a minibatch, trains, and syncs the target every `target_sync` steps.
    fn learn(&mut self) -> Result<Option<f64>> {
        let Some(batch) = self.replay.sample(self.cfg.minibatch) else {
            return Ok(None);
        };
        let batch: Vec<Transition> = batch.into_iter().cloned().collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let loss = self.train_step(&refs)?;
        if self.grad_steps.is_multiple_of(self.cfg.target_sync) {
            self.qnet.sync_target();
        }
        Ok(Some(loss))
    }

    pub fn run_episode(
        &mut self,
        env: &mut AlEnv,
        mode: EpisodeMode,
        rng: &mut Rng,
    ) -> Result<EpisodeStats> {
        let mut env_rng = rng.split();
        let mut act_rng = rng.split();
        let (mut state, mut candidates) = env.reset(&mut env_rng)?;
        let initial_accuracy = env.reward_accuracy()?;
        let mut stats = EpisodeStats {
            rewards: Vec::new(),
            initial_accuracy,
            final_accuracy: initial_accuracy,
            initial_test_accuracy: env.test_accuracy()?,
            test_accuracies: Vec::new(),
            labeled_counts: Vec::new(),
            step_ms: Vec::new(),
            gradient_steps: 0,
        };
        let grad_before = self.grad_steps;
        while !env.is_terminal() {
            let started = Instant::now();
            let n = env.labels_this_step();
            let positions = match mode {
                EpisodeMode::WarmStart => act_rng.sample_indices(candidates.len(), n),
                EpisodeMode::Train => select_top_n(
                    &self.qnet,
                    &state,
                    &candidates,
                    n,
                    self.epsilon(),
                    &mut act_rng,
                )?,
                EpisodeMode::Eval => {
                    select_top_n(&self.qnet, &state, &candidates, n, 0.0, &mut act_rng)?
                }
            };
            let chosen: Vec<ActionFeatures> = positions.iter().map(|&p| candidates[p]).collect();
            let indices: Vec<usize> = chosen.iter().map(|a| a.candidate_index).collect();
            let out = env.step(&indices)?;

            stats.rewards.push(out.reward);
            stats.test_accuracies.push(env.test_accuracy()?);
            stats.labeled_counts.push(env.partition()?.labeled().len());
            if mode != EpisodeMode::Eval {
                self.replay.push(Transition {
                    state,
                    chosen,
                    reward: out.reward,
                    next_state: out.next_state.clone(),
                    next_candidates: out.next_candidates.clone(),
                    terminal: out.terminal,
                });
            }
            if mode == EpisodeMode::Train {
                self.env_steps += 1;
                self.learn()?;
            }
            state = out.next_state;
            candidates = out.next_candidates;
            stats.step_ms.push(started.elapsed().as_secs_f64() * 1e3);
        }
        stats.final_accuracy = env.reward_accuracy()?;
        stats.gradient_steps = self.grad_steps - grad_before;
        Ok(stats)
    }

    /// Warm start, then train until the moving-average return stalls or the cap.
    pub fn fit(&mut self, env: &mut AlEnv, rng: &mut Rng) -> Result<FitReport> {
        let warm = self.cfg.warm_start_episodes.min(self.cfg.max_episodes);
        let mut curve = Vec::new();
        for _ in 0..warm {
            let s = self.run_episode(env, EpisodeMode::WarmStart, rng)?;
            curve.push(s.total_reward());
        }
        let es = self.cfg.early_stop;
        let mut returns: Vec<f64> = Vec::new();
        let mut best = f64::NEG_INFINITY;
        let mut stale = 0;
        let mut stopped_early = false;
        while curve.len() < self.cfg.max_episodes {
            let s = self.run_episode(env, EpisodeMode::Train, rng)?;
            curve.push(s.total_reward());
            returns.push(s.total_reward());
            if returns.len() < es.window {
                continue;
            }
            let avg = returns[returns.len() - es.window..].iter().sum::<f64>() / es.window as f64;
            if avg > best + es.min_delta {
                best = avg;
                stale = 0;
            } else {
                stale += 1;
                if stale >= es.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
        Ok(FitReport {
            warm_start_episodes: warm,
            train_episodes: returns.len(),
            cap_reached: !stopped_early && curve.len() >= self.cfg.max_episodes,
            stopped_early,
            gradient_steps: self.grad_steps,
            curve,
        })
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        save_weights(&self.qnet.online, path)
    }

    /// Loads online weights and syncs the target to them.
    pub fn load_weights(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let net = load_weights(path, OutputHead::Linear)?;
        if net.sizes() != self.qnet.online.sizes() {
            return Err(Error::BadWeights(format!(
                "architecture {:?} does not match {:?}",
                net.sizes(),
                self.qnet.online.sizes()
            )));
        }
        self.qnet = QNetwork::from_online(net)?;
        Ok(())
    }
}

/// Inputs and targets for the TD regression: one row per chosen action.
pub fn td_regression_batch(
    qnet: &QNetwork,
    batch: &[&Transition],
    targets: &[f64],
) -> Result<(Matrix, Matrix)> {
    let sd = qnet.state_dim();
    let mut xs = Vec::with_capacity(batch.len());
    let mut ys = Vec::new();
    for (t, &y) in batch.iter().zip(targets) {
        xs.push(q_inputs(&t.state, t.chosen.iter(), sd)?);
        ys.extend(std::iter::repeat_n(y, t.chosen.len()));
    }
    let x = stack(&xs, sd + 3);
    if x.rows() == 0 {
        return Err(Error::Empty("TD minibatch"));
    }
    Ok((x, Matrix::new(ys.len(), 1, ys)?))
}

#[cfg(test)]
mod tests;
