use super::*;
use crate::alenv::{CandidatePool, EnvConfig};
use crate::classifier::ClassifierConfig;
use crate::datasets::{make_blobs, split, SplitSpec};
use crate::numkit::gradient_check;

fn feat(confidence: f64, dist_labeled: f64, idx: usize) -> ActionFeatures {
    ActionFeatures {
        confidence,
        dist_labeled,
        dist_unlabeled: 0.0,
        candidate_index: idx,
    }
}

/// Linear Q over one state entry plus the three action features:
/// `q = scale * (w . input) + bias`.
fn linear_q(w: [f64; 4], scale: f64, bias: f64) -> Mlp {
    let rows: Vec<[f64; 1]> = w.iter().map(|&v| [v * scale]).collect();
    Mlp::from_parts(
        vec![Matrix::from_rows(&rows).unwrap()],
        vec![vec![bias]],
        OutputHead::Linear,
    )
    .unwrap()
}

fn q_on_confidence() -> QNetwork {
    QNetwork::from_online(linear_q([0.0, 1.0, 0.0, 0.0], 1.0, 0.0)).unwrap()
}

fn s1() -> StateVec {
    StateVec::new(vec![0.5])
}

#[test]
fn zero_network_scores_zero() {
    let q = QNetwork::from_online(Mlp::zeroed(&[4, 8, 1], OutputHead::Linear).unwrap()).unwrap();
    let v = q
        .q_values(
            &s1(),
            &[feat(0.3, 1.0, 0), feat(0.9, 2.0, 1)],
            Which::Online,
        )
        .unwrap();
    assert_eq!(v, vec![0.0, 0.0]);
}

#[test]
fn q_value_is_pure() {
    let q = QNetwork::new(1, &[16, 16], &mut Rng::new(3)).unwrap();
    let a = feat(0.4, 0.2, 3);
    assert_eq!(
        q.q_value(&s1(), &a, Which::Online).unwrap(),
        q.q_value(&s1(), &a, Which::Online).unwrap()
    );
    assert!(q
        .q_value(&StateVec::new(vec![0.1, 0.2]), &a, Which::Online)
        .is_err());
}

#[test]
fn q_value_hand_evaluated() {
    // input = [s, conf, dl, du] = [0.5, 0.8, 2.0, 1.0]
    // h = relu(0.5*1 + 0.8*-2 + 2.0*0.5 + 1.0*0.25 + 0.1) = relu(0.25) = 0.25
    // q = 0.25 * 3 - 0.5 = 0.25
    let w1 = Matrix::from_rows(&[[1.0], [-2.0], [0.5], [0.25]]).unwrap();
    let w2 = Matrix::from_rows(&[[3.0]]).unwrap();
    let net = Mlp::from_parts(
        vec![w1, w2],
        vec![vec![0.1], vec![-0.5]],
        OutputHead::Linear,
    )
    .unwrap();
    let q = QNetwork::from_online(net).unwrap();
    let a = ActionFeatures {
        confidence: 0.8,
        dist_labeled: 2.0,
        dist_unlabeled: 1.0,
        candidate_index: 0,
    };
    let v = q.q_value(&s1(), &a, Which::Online).unwrap();
    assert!((v - 0.25).abs() < 1e-15, "{v}");
}

#[test]
fn top_n_example() {
    let q = q_on_confidence();
    let c = [feat(0.1, 0.0, 10), feat(0.9, 0.0, 11), feat(0.5, 0.0, 12)];
    let got = select_top_n(&q, &s1(), &c, 2, 0.0, &mut Rng::new(0)).unwrap();
    assert_eq!(got, vec![1, 2]);
    let mut all = select_top_n(&q, &s1(), &c, 3, 0.0, &mut Rng::new(0)).unwrap();
    all.sort_unstable();
    assert_eq!(all, vec![0, 1, 2]);
    assert!(select_top_n(&q, &s1(), &c, 4, 0.0, &mut Rng::new(0)).is_err());
}

#[test]
fn ties_go_to_lower_candidate_index() {
    let q = q_on_confidence();
    let c = [feat(0.5, 0.0, 9), feat(0.5, 0.0, 4), feat(0.5, 0.0, 7)];
    assert_eq!(
        select_top_n(&q, &s1(), &c, 2, 0.0, &mut Rng::new(0)).unwrap(),
        vec![1, 2]
    );
}

#[test]
fn full_exploration_is_uniform_random() {
    let q = q_on_confidence();
    let c: Vec<ActionFeatures> = (0..10).map(|i| feat(i as f64 / 10.0, 0.0, i)).collect();
    let mut hits = [0usize; 10];
    let mut rng = Rng::new(4);
    for _ in 0..5000 {
        for p in select_top_n(&q, &s1(), &c, 2, 1.0, &mut rng).unwrap() {
            hits[p] += 1;
        }
    }
    assert!(hits.iter().all(|&h| (800..1200).contains(&h)), "{hits:?}");
}

fn best_subset_sum(q: &[f64], n: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << q.len()) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let s: f64 = (0..q.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| q[i])
            .sum();
        best = best.max(s);
    }
    best
}

#[test]
fn greedy_matches_exhaustive_subsets() {
    let q = q_on_confidence();
    let mut rng = Rng::new(17);
    for _ in 0..200 {
        let k = 1 + rng.below(12);
        let n = 1 + rng.below(k.min(5));
        let c: Vec<ActionFeatures> = (0..k).map(|i| feat(rng.normal(), 0.0, i)).collect();
        let vals: Vec<f64> = c.iter().map(|a| a.confidence).collect();
        let got = select_top_n(&q, &s1(), &c, n, 0.0, &mut rng).unwrap();
        let sum: f64 = got.iter().map(|&p| vals[p]).sum();
        assert!((sum - best_subset_sum(&vals, n)).abs() < 1e-12);
    }
}

#[test]
fn selection_invariant_under_positive_affine_maps() {
    let mut rng = Rng::new(23);
    for _ in 0..100 {
        let scale = rng.uniform(0.1, 10.0);
        let bias = rng.uniform(-5.0, 5.0);
        let a = QNetwork::from_online(linear_q([0.3, 1.0, -0.5, 0.2], 1.0, 0.0)).unwrap();
        let b = QNetwork::from_online(linear_q([0.3, 1.0, -0.5, 0.2], scale, bias)).unwrap();
        let c: Vec<ActionFeatures> = (0..8)
            .map(|i| feat(rng.normal(), rng.normal(), i))
            .collect();
        assert_eq!(
            select_top_n(&a, &s1(), &c, 3, 0.0, &mut Rng::new(0)).unwrap(),
            select_top_n(&b, &s1(), &c, 3, 0.0, &mut Rng::new(0)).unwrap()
        );
    }
}

fn transition(reward: f64, terminal: bool, next: Vec<ActionFeatures>) -> Transition {
    Transition {
        state: s1(),
        chosen: vec![feat(0.5, 0.5, 0)],
        reward,
        next_state: s1(),
        next_candidates: next,
        terminal,
    }
}

#[test]
fn td_target_terminal() {
    let q = q_on_confidence();
    let t = transition(0.1, true, vec![]);
    assert_eq!(
        td_target(&q, &t, 2, 0.99, TargetAggregate::Mean).unwrap(),
        0.1
    );
}

#[test]
fn td_target_selects_online_evaluates_target() {
    // Online ranks by confidence, target values by dist_labeled.
    let q = QNetwork {
        online: linear_q([0.0, 1.0, 0.0, 0.0], 1.0, 0.0),
        target: linear_q([0.0, 0.0, 1.0, 0.0], 1.0, 0.0),
    };
    let next = vec![feat(0.9, 0.6, 1), feat(0.8, 0.4, 2), feat(0.1, 5.0, 3)];
    let t = transition(0.1, false, next);
    let y = td_target(&q, &t, 2, 0.99, TargetAggregate::Mean).unwrap();
    assert!((y - 0.595).abs() < 1e-15, "{y}");
    let y_sum = td_target(&q, &t, 2, 0.99, TargetAggregate::Sum).unwrap();
    assert!((y_sum - (0.1 + 0.99 * 1.0)).abs() < 1e-15);
    assert_eq!(
        td_target(&q, &t, 2, 0.0, TargetAggregate::Mean).unwrap(),
        0.1
    );
}

#[test]
fn td_target_n1_is_scalar_ddqn() {
    let mut rng = Rng::new(41);
    let mut q = QNetwork::new(1, &[8, 8], &mut rng).unwrap();
    q.target = Mlp::new(&[4, 8, 8, 1], OutputHead::Linear, &mut rng).unwrap();
    for _ in 0..50 {
        let next: Vec<ActionFeatures> = (0..6)
            .map(|i| feat(rng.normal(), rng.normal(), i))
            .collect();
        let t = transition(rng.normal(), false, next.clone());
        let online: Vec<f64> = next
            .iter()
            .map(|a| q.q_value(&s1(), a, Which::Online).unwrap())
            .collect();
        let mut best = 0;
        for i in 1..online.len() {
            if online[i] > online[best] {
                best = i;
            }
        }
        let expected = t.reward + 0.99 * q.q_value(&s1(), &next[best], Which::Target).unwrap();
        assert_eq!(
            td_target(&q, &t, 1, 0.99, TargetAggregate::Mean).unwrap(),
            expected
        );
    }
}

#[test]
fn batched_targets_match_single() {
    let mut rng = Rng::new(43);
    let q = QNetwork::new(1, &[8], &mut rng).unwrap();
    let ts: Vec<Transition> = (0..10)
        .map(|i| {
            let next: Vec<ActionFeatures> = (0..1 + i % 4)
                .map(|j| feat(rng.normal(), rng.normal(), j))
                .collect();
            transition(rng.normal(), i % 3 == 0, next)
        })
        .collect();
    let refs: Vec<&Transition> = ts.iter().collect();
    let batched = td_targets(&q, &refs, 2, 0.9, TargetAggregate::Mean).unwrap();
    for (t, b) in ts.iter().zip(batched) {
        assert_eq!(td_target(&q, t, 2, 0.9, TargetAggregate::Mean).unwrap(), b);
    }
}

fn test_env(budget: usize, per_step: usize) -> AlEnv {
    let ds = make_blobs(160, 4, 4, 3.0, &mut Rng::new(2)).unwrap();
    let splits = split(&ds, &SplitSpec::default()).unwrap();
    AlEnv::from_splits(
        &ds,
        &splits,
        EnvConfig {
            budget,
            per_step,
            initial_labeled: 4,
            candidates: CandidatePool::Sample(10),
            classifier: ClassifierConfig {
                hidden: vec![16],
                initial_epochs: 30,
                ..ClassifierConfig::default()
            },
        },
    )
    .unwrap()
}

fn small_agent_cfg() -> AgentConfig {
    AgentConfig {
        hidden: vec![16, 16],
        minibatch: 8,
        warm_start_episodes: 2,
        max_episodes: 4,
        ..AgentConfig::default()
    }
}

#[test]
fn perfect_predictions_give_zero_loss_and_no_update() {
    let env = test_env(6, 2);
    let mut agent = Agent::for_env(&env, small_agent_cfg(), &mut Rng::new(0)).unwrap();
    let zero = Mlp::zeroed(agent.qnet().online.sizes(), OutputHead::Linear).unwrap();
    agent.qnet = QNetwork::from_online(zero).unwrap();
    let sd = env.state_dim();
    let t = Transition {
        state: StateVec::new(vec![0.5; sd]),
        chosen: vec![feat(0.4, 1.0, 0), feat(0.7, 0.2, 1)],
        reward: 0.0,
        next_state: StateVec::new(vec![0.5; sd]),
        next_candidates: vec![],
        terminal: true,
    };
    let before = agent.qnet().online.clone();
    assert_eq!(agent.train_step(&[&t, &t]).unwrap(), 0.0);
    assert_eq!(agent.qnet().online, before);
}

fn frozen_replay(agent: &mut Agent, env: &mut AlEnv) -> Vec<Transition> {
    let mut rng = Rng::new(5);
    for _ in 0..3 {
        agent
            .run_episode(env, EpisodeMode::WarmStart, &mut rng)
            .unwrap();
    }
    agent.replay().iter().cloned().collect()
}

#[test]
fn td_loss_decreases_with_frozen_targets() {
    let mut env = test_env(8, 2);
    let cfg = AgentConfig {
        learning_rate: 1e-3,
        ..small_agent_cfg()
    };
    let mut agent = Agent::for_env(&env, cfg, &mut Rng::new(1)).unwrap();
    let mut ts = frozen_replay(&mut agent, &mut env);
    // Terminal-only transitions keep the regression targets fixed.
    for t in &mut ts {
        t.terminal = true;
    }
    let refs: Vec<&Transition> = ts.iter().collect();
    let first = agent.train_step(&refs).unwrap();
    let mut last = first;
    for _ in 0..99 {
        last = agent.train_step(&refs).unwrap();
    }
    assert!(last < first, "{last} >= {first}");
}

#[test]
fn td_loss_gradient_matches_finite_differences() {
    let mut env = test_env(8, 2);
    let mut agent = Agent::for_env(&env, small_agent_cfg(), &mut Rng::new(2)).unwrap();
    let ts = frozen_replay(&mut agent, &mut env);
    let refs: Vec<&Transition> = ts.iter().take(6).collect();
    let q = agent.qnet();
    let y = td_targets(q, &refs, 2, 0.99, TargetAggregate::Mean).unwrap();
    let (x, t) = td_regression_batch(q, &refs, &y).unwrap();
    let err = gradient_check(&q.online, &x, &t, Loss::SquaredError).unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn target_sync_semantics() {
    let mut env = test_env(8, 2);
    let mut agent = Agent::for_env(&env, small_agent_cfg(), &mut Rng::new(3)).unwrap();
    let init = agent.qnet().target.clone();
    let ts = frozen_replay(&mut agent, &mut env);
    let refs: Vec<&Transition> = ts.iter().collect();
    agent.train_step(&refs).unwrap();
    assert_eq!(agent.qnet().target, init);
    assert_ne!(agent.qnet().online, init);
    agent.sync_target();
    assert_eq!(agent.qnet().target, agent.qnet().online);
    let a = feat(0.3, 0.1, 0);
    let s = &ts[0].state;
    assert_eq!(
        agent.qnet().q_value(s, &a, Which::Online).unwrap(),
        agent.qnet().q_value(s, &a, Which::Target).unwrap()
    );
    let synced = agent.qnet().clone();
    agent.sync_target();
    assert_eq!(agent.qnet(), &synced);
}

#[test]
fn warm_start_episode_does_not_learn() {
    let mut env = test_env(7, 2);
    let mut agent = Agent::for_env(&env, small_agent_cfg(), &mut Rng::new(4)).unwrap();
    let before = agent.qnet().clone();
    let stats = agent
        .run_episode(&mut env, EpisodeMode::WarmStart, &mut Rng::new(1))
        .unwrap();
    assert_eq!(stats.gradient_steps, 0);
    assert_eq!(agent.qnet(), &before);
    // ceil(7 / 2) = 4 transitions.
    assert_eq!(agent.replay().len(), 4);
    assert_eq!(stats.rewards.len(), 4);
    assert_eq!(stats.labeled_counts, vec![6, 8, 10, 11]);
    assert!((stats.total_reward() - (stats.final_accuracy - stats.initial_accuracy)).abs() <= 1e-9);
}

#[test]
fn train_episode_learns_and_eval_is_deterministic() {
    let mut env = test_env(8, 2);
    let mut agent = Agent::for_env(&env, small_agent_cfg(), &mut Rng::new(5)).unwrap();
    let mut rng = Rng::new(6);
    agent
        .run_episode(&mut env, EpisodeMode::WarmStart, &mut rng)
        .unwrap();
    agent
        .run_episode(&mut env, EpisodeMode::WarmStart, &mut rng)
        .unwrap();
    let stats = agent
        .run_episode(&mut env, EpisodeMode::Train, &mut rng)
        .unwrap();
    assert_eq!(stats.gradient_steps, 4);
    assert_eq!(agent.replay().len(), 12);

    let a = agent
        .run_episode(&mut env, EpisodeMode::Eval, &mut Rng::new(9))
        .unwrap();
    let b = agent
        .run_episode(&mut env, EpisodeMode::Eval, &mut Rng::new(9))
        .unwrap();
    assert_eq!(a.rewards, b.rewards);
    assert_eq!(a.test_accuracies, b.test_accuracies);
    assert_eq!(agent.replay().len(), 12);
}

#[test]
fn fit_warm_start_prefix_and_caps() {
    let mut env = test_env(6, 2);
    let cfg = AgentConfig {
        warm_start_episodes: 3,
        max_episodes: 3,
        ..small_agent_cfg()
    };
    let mut agent = Agent::for_env(&env, cfg, &mut Rng::new(7)).unwrap();
    let r = agent.fit(&mut env, &mut Rng::new(8)).unwrap();
    assert_eq!(r.curve.len(), 3);
    assert_eq!(r.train_episodes, 0);
    assert_eq!(r.gradient_steps, 0);
    assert!(r.cap_reached);

    // The warm-start prefix is the same random-policy sequence regardless of what follows.
    let cfg = AgentConfig {
        warm_start_episodes: 3,
        max_episodes: 5,
        ..small_agent_cfg()
    };
    let mut agent2 = Agent::for_env(&env, cfg, &mut Rng::new(7)).unwrap();
    let r2 = agent2.fit(&mut env, &mut Rng::new(8)).unwrap();
    assert_eq!(&r2.curve[..3], &r.curve[..]);
    assert_eq!(r2.train_episodes, 2);
}

#[test]
fn fit_stops_early_on_flat_returns() {
    let mut env = test_env(4, 2);
    let cfg = AgentConfig {
        warm_start_episodes: 1,
        max_episodes: 60,
        early_stop: EarlyStop {
            window: 2,
            patience: 2,
            min_delta: 10.0,
        },
        ..small_agent_cfg()
    };
    let mut agent = Agent::for_env(&env, cfg, &mut Rng::new(1)).unwrap();
    let r = agent.fit(&mut env, &mut Rng::new(2)).unwrap();
    // First full window sets the best; two stale windows follow.
    assert!(r.stopped_early);
    assert!(!r.cap_reached);
    assert_eq!(r.train_episodes, 4);
}

#[test]
fn epsilon_schedule_is_linear() {
    let e = EpsilonSchedule {
        start: 1.0,
        end: 0.05,
        decay_steps: 100,
    };
    assert_eq!(e.value(0), 1.0);
    assert!((e.value(50) - 0.525).abs() < 1e-12);
    assert_eq!(e.value(100), 0.05);
    assert_eq!(e.value(1000), 0.05);
}

#[test]
fn discounted_return() {
    let s = EpisodeStats {
        rewards: vec![1.0, 2.0, 4.0],
        initial_accuracy: 0.0,
        final_accuracy: 0.0,
        initial_test_accuracy: 0.0,
        test_accuracies: vec![],
        labeled_counts: vec![],
        step_ms: vec![],
        gradient_steps: 0,
    };
    assert!((s.discounted_return(0.5) - (1.0 + 1.0 + 1.0)).abs() < 1e-15);
    assert_eq!(s.total_reward(), 7.0);
}

#[test]
fn config_defaults_and_validation() {
    let c = AgentConfig::default();
    assert_eq!(c.gamma, 0.99);
    assert_eq!(c.learning_rate, 1e-4);
    assert_eq!(c.warm_start_episodes, 16);
    assert_eq!(c.hidden, vec![128, 128, 128]);
    assert!(c.validate().is_ok());
    assert!(AgentConfig {
        gamma: 0.0,
        ..c.clone()
    }
    .validate()
    .is_err());
    assert!(AgentConfig {
        minibatch: 0,
        ..c.clone()
    }
    .validate()
    .is_err());
    assert!(AgentConfig {
        epsilon: EpsilonSchedule {
            start: 1.5,
            ..c.epsilon
        },
        ..c
    }
    .validate()
    .is_err());
}

#[test]
fn weights_round_trip_through_agent() {
    let env = test_env(6, 2);
    let agent = Agent::for_env(&env, small_agent_cfg(), &mut Rng::new(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.real");
    agent.save_weights(&path).unwrap();
    let mut other = Agent::for_env(&env, small_agent_cfg(), &mut Rng::new(2)).unwrap();
    assert_ne!(other.qnet().online, agent.qnet().online);
    other.load_weights(&path).unwrap();
    assert_eq!(other.qnet().online, agent.qnet().online);
    assert_eq!(other.qnet().target, agent.qnet().online);
}
