//! Pool-based active learning as an episodic MDP.
//!
//! One episode: sample a small labelled set `L_0` and train the classifier on
//! it, then repeatedly label `N` chosen candidates, train one increment, and
//! pay out the change in hold-out accuracy, until the label budget `B` is spent.
//! The final step labels `B mod N` points when `N` does not divide `B`.

use crate::classifier::{Classifier, ClassifierConfig};
use crate::datasets::{Dataset, Splits};
use crate::numkit::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidatePool {
    All,
    Sample(usize),
}

impl CandidatePool {
    fn size(self, available: usize) -> usize {
        match self {
            CandidatePool::All => available,
            CandidatePool::Sample(k) => k.min(available),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Labels granted per episode (`B`).
    pub budget: usize,
    /// Labels per step (`N`).
    pub per_step: usize,
    /// Size of `L_0`.
    pub initial_labeled: usize,
    pub candidates: CandidatePool,
    pub classifier: ClassifierConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            budget: 50,
            per_step: 5,
            initial_labeled: 8,
            candidates: CandidatePool::Sample(32),
            classifier: ClassifierConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.per_step == 0 || self.budget < self.per_step {
            return bad(format!(
                "need budget >= per_step >= 1 (budget {}, per_step {})",
                self.budget, self.per_step
            ));
        }
        if self.initial_labeled == 0 {
            return bad("initial labelled set must be non-empty".into());
        }
        if let CandidatePool::Sample(k) = self.candidates {
            if k < self.per_step {
                return bad(format!(
                    "candidate pool {k} smaller than per_step {}",
                    self.per_step
                ));
            }
        }
        self.classifier.train.validate()
    }

    /// Steps in a full episode: `ceil(B / N)`.
    pub fn episode_len(&self) -> usize {
        self.budget.div_ceil(self.per_step)
    }
}

/// Disjoint labelled / unlabelled index sets over the pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolPartition {
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
}

impl PoolPartition {
    pub fn new(pool_size: usize, labeled: Vec<usize>) -> Result<Self> {
        let mut mask = vec![false; pool_size];
        for &i in &labeled {
            if i >= pool_size || mask[i] {
                return Err(Error::InvalidAction(format!("bad initial label index {i}")));
            }
            mask[i] = true;
        }
        let unlabeled = (0..pool_size).filter(|&i| !mask[i]).collect();
        Ok(Self { labeled, unlabeled })
    }

    /// Labelled indices in labelling order.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    /// Unlabelled indices, ascending.
    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn pool_size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    fn is_unlabeled(&self, idx: usize) -> bool {
        self.unlabeled.binary_search(&idx).is_ok()
    }

    /// Moves `indices` from U to L.
    pub fn label(&mut self, indices: &[usize]) -> Result<()> {
        for (pos, &i) in indices.iter().enumerate() {
            if indices[..pos].contains(&i) {
                return Err(Error::InvalidAction(format!("duplicate index {i}")));
            }
            if !self.is_unlabeled(i) {
                return Err(Error::InvalidAction(format!("index {i} is not unlabelled")));
            }
        }
        self.unlabeled.retain(|i| !indices.contains(i));
        self.labeled.extend_from_slice(indices);
        Ok(())
    }

    /// Disjoint and covering `0..pool_size`.
    pub fn is_valid(&self, pool_size: usize) -> bool {
        let mut seen = vec![false; pool_size];
        for &i in self.labeled.iter().chain(&self.unlabeled) {
            if i >= pool_size || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Max-class probability of every state-set row, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec(Vec<f64>);

impl StateVec {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionFeatures {
    /// Max-class probability of the candidate.
    pub confidence: f64,
    /// Latent distance to the nearest labelled point.
    pub dist_labeled: f64,
    /// Mean latent distance to the other unlabelled points.
    pub dist_unlabeled: f64,
    /// Row of the candidate in the pool.
    pub candidate_index: usize,
}

impl ActionFeatures {
    pub fn to_array(&self) -> [f64; 3] {
        [self.confidence, self.dist_labeled, self.dist_unlabeled]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: StateVec,
    /// Empty on terminal steps.
    pub next_candidates: Vec<ActionFeatures>,
    pub terminal: bool,
}

pub fn compute_state(classifier: &Classifier, state_set: &Matrix) -> Result<StateVec> {
    if state_set.rows() == 0 {
        return Err(Error::Empty("state set"));
    }
    let probs = classifier.predict_proba(state_set)?;
    let mut values: Vec<f64> = probs
        .iter_rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(StateVec(values))
}

/// Features of one candidate; `pool` holds the pool's feature rows.
pub fn compute_action_features(
    classifier: &Classifier,
    pool: &Matrix,
    candidate: usize,
    partition: &PoolPartition,
) -> Result<ActionFeatures> {
    Ok(action_features_batch(classifier, pool, &[candidate], partition)?[0])
}

fn action_features_batch(
    classifier: &Classifier,
    pool: &Matrix,
    candidates: &[usize],
    partition: &PoolPartition,
) -> Result<Vec<ActionFeatures>> {
    if partition.labeled().is_empty() {
        return Err(Error::Empty("labelled set"));
    }
    let probs = classifier.predict_proba(&pool.select_rows(candidates))?;
    let latents = classifier.latent(pool)?;
    let scale = 1.0 / (latents.cols() as f64).sqrt();
    let dist = |a: usize, b: usize| -> f64 {
        latents
            .row(a)
            .iter()
            .zip(latents.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
            * scale
    };
    let mut out = Vec::with_capacity(candidates.len());
    for (r, &c) in candidates.iter().enumerate() {
        let dist_labeled = partition
            .labeled()
            .iter()
            .map(|&l| dist(c, l))
            .fold(f64::INFINITY, f64::min);
        let (sum, count) = partition
            .unlabeled()
            .iter()
            .filter(|&&u| u != c)
            .fold((0.0, 0usize), |(s, n), &u| (s + dist(c, u), n + 1));
        let dist_unlabeled = if count == 0 { 0.0 } else { sum / count as f64 };
        out.push(ActionFeatures {
            confidence: probs
                .row(r)
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
            dist_labeled,
            dist_unlabeled,
            candidate_index: c,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Episode {
    partition: PoolPartition,
    classifier: Classifier,
    state: StateVec,
    candidates: Vec<ActionFeatures>,
    initial_reward_accuracy: f64,
    reward_accuracy: f64,
    labels_used: usize,
    steps: usize,
    terminal: bool,
    train_rng: Rng,
    candidate_rng: Rng,
}

/// The environment: pool `D`, state set `D_s`, reward set `D_R` and test set.
#[derive(Debug, Clone)]
pub struct AlEnv {
    pool: Dataset,
    state_set: Dataset,
    reward_set: Dataset,
    test_set: Dataset,
    cfg: EnvConfig,
    episode: Option<Episode>,
}

impl AlEnv {
    pub fn new(
        pool: Dataset,
        state_set: Dataset,
        reward_set: Dataset,
        test_set: Dataset,
        cfg: EnvConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        for part in [&state_set, &reward_set, &test_set] {
            if part.dim() != pool.dim() || part.num_classes() != pool.num_classes() {
                return Err(Error::InvalidDataset(
                    "splits disagree on dimension or class count".into(),
                ));
            }
        }
        for (name, part) in [
            ("pool", &pool),
            ("state set", &state_set),
            ("reward set", &reward_set),
            ("test set", &test_set),
        ] {
            if part.is_empty() {
                return Err(Error::InvalidDataset(format!("{name} is empty")));
            }
        }
        Ok(Self {
            pool,
            state_set,
            reward_set,
            test_set,
            cfg,
            episode: None,
        })
    }

    pub fn from_splits(ds: &Dataset, splits: &Splits, cfg: EnvConfig) -> Result<Self> {
        Self::new(
            ds.subset(&splits.pool),
            ds.subset(&splits.state_set),
            ds.subset(&splits.reward_set),
            ds.subset(&splits.test_set),
            cfg,
        )
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn pool(&self) -> &Dataset {
        &self.pool
    }

    /// Dimension of the state vector, `|D_s|`.
    pub fn state_dim(&self) -> usize {
        self.state_set.len()
    }

    /// Starts a new episode: fresh `L_0`, fresh classifier trained on it.
    pub fn reset(&mut self, rng: &mut Rng) -> Result<(StateVec, Vec<ActionFeatures>)> {
        let n = self.pool.len();
        let l0 = self.cfg.initial_labeled;
        if l0 >= n {
            return Err(Error::DegenerateConfig(format!(
                "initial labelled set ({l0}) leaves no unlabelled pool ({n} rows)"
            )));
        }
        if self.cfg.budget > n - l0 {
            return Err(Error::DegenerateConfig(format!(
                "budget {} exceeds the {} unlabelled rows",
                self.cfg.budget,
                n - l0
            )));
        }
        let episode_rng = rng.split();
        let mut label_rng = episode_rng.derive(1);
        let mut train_rng = episode_rng.derive(2);
        let candidate_rng = episode_rng.derive(3);

        let initial = stratified_initial(&self.pool, l0, &mut label_rng);
        let partition = PoolPartition::new(n, initial)?;
        let mut classifier = Classifier::zeroed(
            self.pool.dim(),
            self.pool.num_classes(),
            self.cfg.classifier.clone(),
        )?;
        classifier.fit_initial(
            &self.pool.subset(partition.labeled()),
            self.cfg.classifier.initial_epochs,
            &mut train_rng,
        )?;
        let acc = classifier.accuracy(&self.reward_set)?;
        let state = compute_state(&classifier, self.state_set.features())?;
        let mut ep = Episode {
            partition,
            classifier,
            state,
            candidates: Vec::new(),
            initial_reward_accuracy: acc,
            reward_accuracy: acc,
            labels_used: 0,
            steps: 0,
            terminal: false,
            train_rng,
            candidate_rng,
        };
        ep.candidates = self.sample_candidates_for(&mut ep)?;
        let out = (ep.state.clone(), ep.candidates.clone());
        self.episode = Some(ep);
        Ok(out)
    }

    fn sample_candidates_for(&self, ep: &mut Episode) -> Result<Vec<ActionFeatures>> {
        let unlabeled = ep.partition.unlabeled();
        if unlabeled.is_empty() {
            return Err(Error::Empty("unlabelled pool"));
        }
        let k = self.cfg.candidates.size(unlabeled.len());
        let picked = if k == unlabeled.len() {
            unlabeled.to_vec()
        } else {
            ep.candidate_rng.choose_multiple(unlabeled, k)
        };
        action_features_batch(&ep.classifier, self.pool.features(), &picked, &ep.partition)
    }

    /// Redraws the candidate set of the current step from `rng`.
    pub fn sample_candidates(&mut self, rng: &mut Rng) -> Result<Vec<ActionFeatures>> {
        let mut ep = self.episode.take().ok_or(Error::NotReset)?;
        ep.candidate_rng = rng.split();
        let result = self.sample_candidates_for(&mut ep);
        if let Ok(c) = &result {
            ep.candidates = c.clone();
        }
        self.episode = Some(ep);
        result
    }

    /// Labels the chosen pool indices, trains one increment, and pays the
    /// change in reward-set accuracy.
    pub fn step(&mut self, chosen: &[usize]) -> Result<StepOutcome> {
        let mut ep = self.episode.take().ok_or(Error::NotReset)?;
        let result = self.step_inner(&mut ep, chosen);
        self.episode = Some(ep);
        result
    }

    fn step_inner(&self, ep: &mut Episode, chosen: &[usize]) -> Result<StepOutcome> {
        if ep.terminal {
            return Err(Error::EpisodeTerminal);
        }
        let expected = self.cfg.per_step.min(self.cfg.budget - ep.labels_used);
        if chosen.len() != expected {
            return Err(Error::InvalidAction(format!(
                "expected {expected} labels this step, got {}",
                chosen.len()
            )));
        }
        for (pos, &c) in chosen.iter().enumerate() {
            if chosen[..pos].contains(&c) {
                return Err(Error::InvalidAction(format!("duplicate candidate {c}")));
            }
            if !ep.candidates.iter().any(|a| a.candidate_index == c) {
                return Err(Error::InvalidAction(format!(
                    "index {c} is not in the current candidate set"
                )));
            }
        }

        ep.partition.label(chosen)?;
        ep.labels_used += chosen.len();
        ep.steps += 1;
        let labeled = self.pool.subset(ep.partition.labeled());
        ep.classifier.fit_increment(&labeled, &mut ep.train_rng)?;

        let acc = ep.classifier.accuracy(&self.reward_set)?;
        let reward = acc - ep.reward_accuracy;
        ep.reward_accuracy = acc;
        ep.state = compute_state(&ep.classifier, self.state_set.features())?;
        ep.terminal = ep.labels_used >= self.cfg.budget;
        ep.candidates = if ep.terminal {
            Vec::new()
        } else {
            self.sample_candidates_for(ep)?
        };
        Ok(StepOutcome {
            reward,
            next_state: ep.state.clone(),
            next_candidates: ep.candidates.clone(),
            terminal: ep.terminal,
        })
    }

    fn ep(&self) -> Result<&Episode> {
        self.episode.as_ref().ok_or(Error::NotReset)
    }

    pub fn state(&self) -> Result<&StateVec> {
        Ok(&self.ep()?.state)
    }

    pub fn candidates(&self) -> Result<&[ActionFeatures]> {
        Ok(&self.ep()?.candidates)
    }

    /// Classifier probabilities for the current candidates, row per candidate.
    pub fn candidate_probabilities(&self) -> Result<Matrix> {
        let ep = self.ep()?;
        let rows: Vec<usize> = ep.candidates.iter().map(|a| a.candidate_index).collect();
        ep.classifier
            .predict_proba(&self.pool.features().select_rows(&rows))
    }

    pub fn partition(&self) -> Result<&PoolPartition> {
        Ok(&self.ep()?.partition)
    }

    pub fn classifier(&self) -> Result<&Classifier> {
        Ok(&self.ep()?.classifier)
    }

    pub fn is_terminal(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.terminal)
    }

    pub fn steps_taken(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.steps)
    }

    pub fn labels_used(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.labels_used)
    }

    /// Labels the next step must take: `min(N, remaining budget)`.
    pub fn labels_this_step(&self) -> usize {
        self.cfg
            .per_step
            .min(self.cfg.budget.saturating_sub(self.labels_used()))
    }

    pub fn initial_reward_accuracy(&self) -> Result<f64> {
        Ok(self.ep()?.initial_reward_accuracy)
    }

    pub fn reward_accuracy(&self) -> Result<f64> {
        Ok(self.ep()?.reward_accuracy)
    }

    pub fn test_accuracy(&self) -> Result<f64> {
        self.ep()?.classifier.accuracy(&self.test_set)
    }
}

/// One row per class (random order of classes) while slots remain, the rest uniform.
fn stratified_initial(pool: &Dataset, count: usize, rng: &mut Rng) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); pool.num_classes()];
    for (i, &y) in pool.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut classes: Vec<usize> = (0..by_class.len())
        .filter(|&c| !by_class[c].is_empty())
        .collect();
    rng.shuffle(&mut classes);
    let mut chosen: Vec<usize> = classes
        .into_iter()
        .take(count)
        .map(|c| by_class[c][rng.below(by_class[c].len())])
        .collect();
    let rest: Vec<usize> = (0..pool.len()).filter(|i| !chosen.contains(i)).collect();
    chosen.extend(rng.choose_multiple(&rest, count - chosen.len()));
    chosen
}
