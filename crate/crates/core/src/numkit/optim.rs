use super::{Gradients, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub minibatch_size: usize,
    /// Heavy-ball momentum coefficient; `0.0` is plain SGD.
    pub momentum: f64,
}

impl SgdConfig {
    pub fn new(learning_rate: f64, minibatch_size: usize) -> Self {
        Self {
            learning_rate,
            minibatch_size,
            momentum: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.minibatch_size == 0 {
            return Err(Error::InvalidConfig("minibatch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// `w <- w - lr * g`. Non-finite gradients leave `net` untouched.
pub fn sgd_step(net: &mut Mlp, grads: &Gradients, learning_rate: f64) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Divergence { epoch: None });
    }
    net.apply_update(grads, learning_rate);
    if !net.is_finite() {
        net.apply_update(grads, -learning_rate);
        return Err(Error::Divergence { epoch: None });
    }
    Ok(())
}

/// Stateful optimiser; carries a velocity buffer when momentum is enabled.
#[derive(Debug, Clone)]
pub struct Sgd {
    cfg: SgdConfig,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(cfg: SgdConfig) -> Self {
        Self {
            cfg,
            velocity: None,
        }
    }

    pub fn config(&self) -> &SgdConfig {
        &self.cfg
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if self.cfg.momentum == 0.0 {
            return sgd_step(net, grads, self.cfg.learning_rate);
        }
        if !grads.is_finite() {
            return Err(Error::Divergence { epoch: None });
        }
        let v = self
            .velocity
            .get_or_insert_with(|| Gradients::zeros_like(net));
        for (vi, g) in v.values_mut().zip(grads.values()) {
            *vi = self.cfg.momentum * *vi + g;
        }
        sgd_step(net, v, self.cfg.learning_rate)
    }
}
