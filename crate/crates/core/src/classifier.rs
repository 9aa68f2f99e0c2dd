//! The task classifier: a softmax MLP whose last hidden layer is the latent space.

use crate::datasets::Dataset;
use crate::numkit::{Loss, Matrix, Mlp, OutputHead, Rng, Sgd, SgdConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    /// Hidden layer widths; the last one is the latent dimension.
    pub hidden: Vec<usize>,
    pub train: SgdConfig,
    pub initial_epochs: usize,
    pub epochs_per_step: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            train: SgdConfig::new(0.05, 16),
            initial_epochs: 200,
            epochs_per_step: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    net: Mlp,
    cfg: ClassifierConfig,
}

impl Classifier {
    /// Freshly initialised `[d, hidden.., k]` network.
    pub fn new(
        input_dim: usize,
        num_classes: usize,
        cfg: ClassifierConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.train.validate()?;
        let net = Mlp::new(
            &layer_sizes(input_dim, num_classes, &cfg),
            OutputHead::Softmax,
            rng,
        )?;
        Ok(Self { net, cfg })
    }

    /// Same architecture with every weight and bias zero (uniform predictions).
    pub fn zeroed(input_dim: usize, num_classes: usize, cfg: ClassifierConfig) -> Result<Self> {
        let net = Mlp::zeroed(
            &layer_sizes(input_dim, num_classes, &cfg),
            OutputHead::Softmax,
        )?;
        Ok(Self { net, cfg })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.cfg
    }

    pub fn num_classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        let sizes = self.net.sizes();
        sizes[sizes.len() - 2]
    }

    /// Fresh weights, same architecture.
    pub fn reinit(&mut self, rng: &mut Rng) {
        self.net = Mlp::new(self.net.sizes(), OutputHead::Softmax, rng)
            .expect("architecture already validated");
    }

    /// Reinitialises, then trains `epochs` passes over `labeled`.
    pub fn fit_initial(&mut self, labeled: &Dataset, epochs: usize, rng: &mut Rng) -> Result<()> {
        self.reinit(rng);
        self.train_epochs(labeled, epochs, rng)
    }

    /// Warm-started training for `epochs_per_step` passes.
    pub fn fit_increment(&mut self, labeled: &Dataset, rng: &mut Rng) -> Result<()> {
        self.train_epochs(labeled, self.cfg.epochs_per_step, rng)
    }

    fn train_epochs(&mut self, labeled: &Dataset, epochs: usize, rng: &mut Rng) -> Result<()> {
        if labeled.is_empty() {
            return Err(Error::Empty("labeled set"));
        }
        self.check_dim(labeled.features())?;
        let targets = one_hot(labeled.labels(), self.num_classes());
        let mut opt = Sgd::new(self.cfg.train);
        let mut order: Vec<usize> = (0..labeled.len()).collect();
        let bs = self.cfg.train.minibatch_size;
        for epoch in 0..epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(bs) {
                let x = labeled.features().select_rows(chunk);
                let t = targets.select_rows(chunk);
                let diverged = || Error::Divergence { epoch: Some(epoch) };
                let trace = self.net.forward_trace(&x)?;
                let grads = self.net.backward(&trace, &t, Loss::CrossEntropy)?;
                opt.step(&mut self.net, &grads).map_err(|_| diverged())?;
            }
        }
        Ok(())
    }

    /// Mean cross-entropy on `ds`.
    pub fn loss(&self, ds: &Dataset) -> Result<f64> {
        self.net.loss(
            ds.features(),
            &one_hot(ds.labels(), self.num_classes()),
            Loss::CrossEntropy,
        )
    }

    pub fn predict_proba(&self, xs: &Matrix) -> Result<Matrix> {
        self.check_dim(xs)?;
        self.net.forward(xs)
    }

    /// Penultimate-layer post-activation codes.
    pub fn latent(&self, xs: &Matrix) -> Result<Matrix> {
        self.check_dim(xs)?;
        self.net.activations(xs, self.net.num_layers() - 1)
    }

    /// Fraction of rows whose argmax (lowest index on ties) equals the label.
    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        if ds.is_empty() {
            return Err(Error::Empty("accuracy dataset"));
        }
        let probs = self.predict_proba(ds.features())?;
        let correct = probs
            .iter_rows()
            .zip(ds.labels())
            .filter(|(row, &y)| argmax(row) == y)
            .count();
        Ok(correct as f64 / ds.len() as f64)
    }

    fn check_dim(&self, xs: &Matrix) -> Result<()> {
        if xs.cols() != self.net.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "classifier input",
                expected: self.net.input_dim(),
                found: xs.cols(),
            });
        }
        Ok(())
    }
}

fn layer_sizes(input_dim: usize, num_classes: usize, cfg: &ClassifierConfig) -> Vec<usize> {
    let mut sizes = vec![input_dim];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(num_classes);
    sizes
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn one_hot(labels: &[usize], k: usize) -> Matrix {
    let mut t = Matrix::zeros(labels.len(), k);
    for (r, &y) in labels.iter().enumerate() {
        t.set(r, y, 1.0);
    }
    t
}
