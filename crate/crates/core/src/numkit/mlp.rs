//! Fully connected network with ReLU hidden layers.
//!
//! Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs as
//! `z = a W + b`, with `W` stored `(in, out)` row-major so that `W[i][j]`
//! connects input `i` to output `j`.

use super::matrix::{axpy, dot, Matrix};
use super::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    Softmax,
    Linear,
}

impl OutputHead {
    fn name(self) -> &'static str {
        match self {
            OutputHead::Softmax => "softmax",
            OutputHead::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean over rows of `-sum_j t_j ln p_j`.
    CrossEntropy,
    /// Mean over rows of `sum_j (y_j - t_j)^2`.
    SquaredError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    head: OutputHead,
}

/// Post-activation values of every layer for one batch; `layers[0]` is the input.
#[derive(Debug, Clone)]
pub struct Trace {
    layers: Vec<Matrix>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.layers.last().expect("trace always holds the input")
    }

    pub fn layer(&self, idx: usize) -> &Matrix {
        &self.layers[idx]
    }

    /// Loss of the traced output against `targets`.
    pub fn loss(&self, targets: &Matrix, loss: Loss) -> Result<f64> {
        check_targets(self.output(), targets)?;
        Ok(loss_value(self.output(), targets, loss))
    }

    pub fn into_output(mut self) -> Matrix {
        self.layers.pop().expect("trace always holds the input")
    }
}

/// Parameter-shaped gradients (or any parameter-shaped update).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.data().iter().chain(b.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.data_mut().iter_mut().chain(b.iter_mut()))
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Elementwise `self + other`; shapes must match.
    pub fn add(&self, other: &Gradients) -> Gradients {
        let mut out = self.clone();
        for (a, b) in out.values_mut().zip(other.values()) {
            *a += b;
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }
}

impl Mlp {
    /// He-initialised network: weights `N(0, 2 / fan_in)`, biases zero.
    pub fn new(sizes: &[usize], head: OutputHead, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeroed(sizes, head)?;
        for w in &mut net.weights {
            let scale = (2.0 / w.rows() as f64).sqrt();
            for v in w.data_mut() {
                *v = scale * rng.normal();
            }
        }
        Ok(net)
    }

    /// All weights and biases zero.
    pub fn zeroed(sizes: &[usize], head: OutputHead) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidLayers(sizes.to_vec()));
        }
        let weights = sizes
            .windows(2)
            .map(|p| Matrix::zeros(p[0], p[1]))
            .collect();
        let biases = sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            head,
        })
    }

    /// Assembles a network from explicit parameters.
    pub fn from_parts(
        weights: Vec<Matrix>,
        biases: Vec<Vec<f64>>,
        head: OutputHead,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidLayers(vec![]));
        }
        let mut sizes = vec![weights[0].rows()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.rows() != sizes[l] || w.cols() != b.len() {
                return Err(Error::DimensionMismatch {
                    context: "layer shapes",
                    expected: sizes[l],
                    found: w.rows(),
                });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("bias"));
            }
            sizes.push(w.cols());
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidLayers(sizes));
        }
        Ok(Self {
            sizes,
            weights,
            biases,
            head,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.data().len() + b.len())
            .sum()
    }

    /// Parameters in serialisation order: per layer, weights then biases.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.data().iter().chain(b.iter()).copied())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.data_mut().iter_mut().chain(b.iter_mut()))
    }

    /// Mutable access to parameter `idx` in [`Mlp::params`] order.
    pub(crate) fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let nw = w.data().len();
            if idx < nw {
                return &mut w.data_mut()[idx];
            }
            idx -= nw;
            if idx < b.len() {
                return &mut b[idx];
            }
            idx -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward_trace(batch)?.into_output())
    }

    /// Forward pass keeping every layer's activations for [`Mlp::backward`].
    pub fn forward_trace(&self, batch: &Matrix) -> Result<Trace> {
        self.check_input(batch)?;
        let mut layers = Vec::with_capacity(self.weights.len() + 1);
        layers.push(batch.clone());
        for l in 0..self.weights.len() {
            let mut z = self.affine(l, &layers[l]);
            if l + 1 < self.weights.len() {
                relu_in_place(&mut z);
            } else if self.head == OutputHead::Softmax {
                softmax_rows(&mut z);
            }
            layers.push(z);
        }
        Ok(Trace { layers })
    }

    /// Post-activation output of hidden layer `layer` (1-based; `0` is the input).
    pub fn activations(&self, batch: &Matrix, layer: usize) -> Result<Matrix> {
        self.check_input(batch)?;
        if layer >= self.sizes.len() {
            return Err(Error::DimensionMismatch {
                context: "layer index",
                expected: self.sizes.len() - 1,
                found: layer,
            });
        }
        let mut a = batch.clone();
        for l in 0..layer {
            let mut z = self.affine(l, &a);
            if l + 1 < self.weights.len() {
                relu_in_place(&mut z);
            } else if self.head == OutputHead::Softmax {
                softmax_rows(&mut z);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn loss(&self, batch: &Matrix, targets: &Matrix, loss: Loss) -> Result<f64> {
        self.check_loss(loss)?;
        let out = self.forward(batch)?;
        check_targets(&out, targets)?;
        Ok(loss_value(&out, targets, loss))
    }

    /// Gradients of the mean `loss` over the traced batch.
    pub fn backward(&self, trace: &Trace, targets: &Matrix, loss: Loss) -> Result<Gradients> {
        self.check_loss(loss)?;
        let out = trace.output();
        check_targets(out, targets)?;
        let n = out.rows() as f64;

        // dL/dz at the output layer.
        let mut delta = Matrix::zeros(out.rows(), out.cols());
        match loss {
            Loss::CrossEntropy => {
                for r in 0..out.rows() {
                    let t = targets.row(r);
                    let mass: f64 = t.iter().sum();
                    for ((d, &p), &tj) in delta.row_mut(r).iter_mut().zip(out.row(r)).zip(t) {
                        *d = (p * mass - tj) / n;
                    }
                }
            }
            Loss::SquaredError => {
                for ((d, &y), &t) in delta
                    .data_mut()
                    .iter_mut()
                    .zip(out.data())
                    .zip(targets.data())
                {
                    *d = 2.0 * (y - t) / n;
                }
            }
        }

        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.weights.len()).rev() {
            let input = &trace.layers[l];
            let dw = &mut grads.weights[l];
            let db = &mut grads.biases[l];
            for r in 0..input.rows() {
                let d = delta.row(r);
                axpy(1.0, d, db);
                for (k, &a) in input.row(r).iter().enumerate() {
                    if a != 0.0 {
                        axpy(a, d, dw.row_mut(k));
                    }
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through W^T and the ReLU of the layer below.
            let w = &self.weights[l];
            let mut prev = Matrix::zeros(input.rows(), input.cols());
            for r in 0..input.rows() {
                let d = delta.row(r);
                let a = input.row(r);
                for (k, p) in prev.row_mut(r).iter_mut().enumerate() {
                    if a[k] > 0.0 {
                        *p = dot(d, w.row(k));
                    }
                }
            }
            delta = prev;
        }
        Ok(grads)
    }

    /// Applies `param -= factor * update` to every parameter.
    pub(crate) fn apply_update(&mut self, update: &Gradients, factor: f64) {
        for (p, u) in self.params_mut().zip(update.values()) {
            *p -= factor * u;
        }
    }

    fn affine(&self, l: usize, input: &Matrix) -> Matrix {
        let w = &self.weights[l];
        let b = &self.biases[l];
        let mut out = Vec::with_capacity(input.rows() * w.cols());
        for r in 0..input.rows() {
            let start = out.len();
            out.extend_from_slice(b);
            let row = &mut out[start..];
            for (k, &a) in input.row(r).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, w.row(k), row);
                }
            }
        }
        Matrix::from_raw(input.rows(), w.cols(), out)
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                found: batch.cols(),
            });
        }
        Ok(())
    }

    fn check_loss(&self, loss: Loss) -> Result<()> {
        let required = match loss {
            Loss::CrossEntropy => OutputHead::Softmax,
            Loss::SquaredError => OutputHead::Linear,
        };
        if self.head != required {
            return Err(Error::HeadMismatch {
                loss: match loss {
                    Loss::CrossEntropy => "cross-entropy",
                    Loss::SquaredError => "squared-error",
                },
                head: required.name(),
            });
        }
        Ok(())
    }
}

fn check_targets(out: &Matrix, targets: &Matrix) -> Result<()> {
    if targets.rows() != out.rows() || targets.cols() != out.cols() {
        return Err(Error::DimensionMismatch {
            context: "targets",
            expected: out.rows() * out.cols(),
            found: targets.rows() * targets.cols(),
        });
    }
    if out.rows() == 0 {
        return Err(Error::Empty("batch"));
    }
    Ok(())
}

pub(crate) fn loss_value(out: &Matrix, targets: &Matrix, loss: Loss) -> f64 {
    let n = out.rows() as f64;
    let total: f64 = match loss {
        Loss::CrossEntropy => out
            .data()
            .iter()
            .zip(targets.data())
            .filter(|(_, &t)| t != 0.0)
            .map(|(&p, &t)| -t * p.max(f64::MIN_POSITIVE).ln())
            .sum(),
        Loss::SquaredError => out
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&y, &t)| (y - t) * (y - t))
            .sum(),
    };
    total / n
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn softmax_rows(m: &mut Matrix) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}
