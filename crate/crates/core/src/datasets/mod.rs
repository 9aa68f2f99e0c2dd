//! Labelled feature matrices, synthetic generation and the four-way split.

mod csv;
mod noise;

pub use self::csv::{load_csv, write_csv};
pub use noise::{apply_noise, NoiseSpec};

use crate::numkit::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    image_shape: Option<(usize, usize)>,
}

impl Dataset {
    /// A complete dataset: labels in range, every class present, at least four rows.
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ds = Self::view(features, labels, num_classes)?;
        if ds.len() < 4 {
            return Err(Error::InvalidDataset(format!(
                "need at least 4 rows, found {}",
                ds.len()
            )));
        }
        let counts = ds.class_counts();
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::InvalidDataset(format!("class {c} has no rows")));
        }
        Ok(ds)
    }

    /// Relaxed constructor for subsets, which may miss classes or be tiny.
    fn view(features: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "labels per row",
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            image_shape: None,
        })
    }

    /// Marks rows as flattened `height x width` images (row-major pixels).
    pub fn with_image_shape(mut self, height: usize, width: usize) -> Result<Self> {
        if height * width != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "image shape",
                expected: self.dim(),
                found: height * width,
            });
        }
        self.image_shape = Some((height, width));
        Ok(self)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows `indices` in order; keeps class count and image shape.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            image_shape: self.image_shape,
        }
    }

    pub(crate) fn with_features(&self, features: Matrix) -> Dataset {
        debug_assert_eq!(features.rows(), self.len());
        Dataset {
            features,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            image_shape: self.image_shape,
        }
    }
}

/// `k` unit-variance Gaussian clusters in `d` dimensions, classes cycling `0, 1, .., k-1`.
///
/// Center `c` lies on axis `c mod d` at distance `separation * (c / d + 1/sqrt 2)`
/// from the origin, so every pair of centers is at least `separation` apart and
/// the first `min(k, d)` centers are exactly `separation` apart.
pub fn make_blobs(n: usize, d: usize, k: usize, separation: f64, rng: &mut Rng) -> Result<Dataset> {
    if k < 2 || d == 0 {
        return Err(Error::InvalidConfig(format!(
            "blobs need k >= 2 and d >= 1 (k={k}, d={d})"
        )));
    }
    if n < k {
        return Err(Error::InvalidConfig(format!(
            "cannot balance {k} classes over {n} rows"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "separation must be finite and non-negative, got {separation}"
        )));
    }
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let radius = separation * ((c / d) as f64 + std::f64::consts::FRAC_1_SQRT_2);
        for j in 0..d {
            let center = if j == c % d { radius } else { 0.0 };
            data.push(center + rng.normal());
        }
        labels.push(c);
    }
    Dataset::new(Matrix::new(n, d, data)?, labels, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub pool_fraction: f64,
    pub state_fraction: f64,
    pub reward_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            pool_fraction: 0.5,
            state_fraction: 0.2,
            reward_fraction: 0.15,
            test_fraction: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    fn fractions(&self) -> [f64; 4] {
        [
            self.pool_fraction,
            self.state_fraction,
            self.reward_fraction,
            self.test_fraction,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "split fractions must be positive, got {f:?}"
            )));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` rows; ties go to the earlier split.
    pub fn sizes(&self, n: usize) -> [usize; 4] {
        let quotas = self.fractions().map(|f| f * n as f64);
        let mut sizes = quotas.map(|q| q.floor() as usize);
        let assigned: usize = sizes.iter().sum();
        let mut order = [0usize, 1, 2, 3];
        // Stable sort keeps index order among equal remainders.
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.partial_cmp(&ra).unwrap()
        });
        for &s in order.iter().take(n.saturating_sub(assigned)) {
            sizes[s] += 1;
        }
        sizes
    }
}

const SPLIT_NAMES: [&str; 4] = ["pool", "state", "reward", "test"];

/// Index lists into the parent dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub pool: Vec<usize>,
    pub state_set: Vec<usize>,
    pub reward_set: Vec<usize>,
    pub test_set: Vec<usize>,
}

impl Splits {
    pub fn parts(&self) -> [&[usize]; 4] {
        [
            &self.pool,
            &self.state_set,
            &self.reward_set,
            &self.test_set,
        ]
    }
}

/// Stratified, seeded partition into pool / state / reward / test.
///
/// Rows are grouped by class (shuffled within each class) and then dealt to
/// splits by a max-deficit schedule over the exact split sizes, so each class
/// is spread across the splits in proportion to the fractions.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let n = ds.len();
    let sizes = spec.sizes(n);
    if let Some(s) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptySplit(SPLIT_NAMES[s]));
    }

    let mut rng = Rng::new(spec.seed);
    let mut order = Vec::with_capacity(n);
    for class in 0..ds.num_classes() {
        let mut rows: Vec<usize> = (0..n).filter(|&i| ds.labels()[i] == class).collect();
        rng.shuffle(&mut rows);
        order.extend(rows);
    }

    let mut parts: [Vec<usize>; 4] = Default::default();
    for (p, &row) in order.iter().enumerate() {
        let s = (0..4)
            .map(|s| {
                let ideal = (p + 1) as f64 * sizes[s] as f64 / n as f64;
                (s, ideal - parts[s].len() as f64)
            })
            .filter(|&(s, _)| parts[s].len() < sizes[s])
            .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            })
            .0;
        parts[s].push(row);
    }
    let [pool, state_set, reward_set, test_set] = parts;
    Ok(Splits {
        pool,
        state_set,
        reward_set,
        test_set,
    })
}
