//! Fixtures shared by the benchmarks.

use real_core::agent::Transition;
use real_core::datasets::{make_blobs, split};
use real_core::{ActionFeatures, AlEnv, EnvConfig, Matrix, Rng, SplitSpec, StateVec};

/// Standard-normal matrix.
pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

/// Transitions with `state_dim`-long states, `per_step` chosen actions and
/// `candidates` next candidates each.
pub fn transitions(
    count: usize,
    state_dim: usize,
    per_step: usize,
    candidates: usize,
    rng: &mut Rng,
) -> Vec<Transition> {
    let mut feat = |i| ActionFeatures {
        confidence: rng.uniform(0.1, 1.0),
        dist_labeled: rng.uniform(0.0, 2.0),
        dist_unlabeled: rng.uniform(0.0, 2.0),
        candidate_index: i,
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(Transition {
            state: StateVec::new(vec![0.5; state_dim]),
            chosen: (0..per_step).map(&mut feat).collect(),
            reward: 0.01,
            next_state: StateVec::new(vec![0.5; state_dim]),
            next_candidates: (0..candidates).map(&mut feat).collect(),
            terminal: false,
        });
    }
    out
}

/// Environment on 8-class, 16-dimensional blobs.
pub fn blobs_env(n: usize, cfg: EnvConfig) -> AlEnv {
    let ds = make_blobs(n, 16, 8, 3.0, &mut Rng::new(0)).unwrap();
    let splits = split(&ds, &SplitSpec::default()).unwrap();
    AlEnv::from_splits(&ds, &splits, cfg).unwrap()
}
