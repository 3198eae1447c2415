//! Classical momentum SGD with weight decay folded into the gradient:
//!
//! - `v <- momentum * v + grad + weight_decay * param`
//! - `param <- param - lr * v`
//!
//! The learning rate decays multiplicatively by `decay_factor` every
//! `decay_every` epochs.

use crate::error::{Error, Result};
use crate::nn::{Net, NetGrads};
use crate::num::{real, Real};

#[derive(Debug, Clone, Copy)]
pub struct SgdConfig<R: Real> {
    pub learning_rate: R,
    pub momentum: R,
    pub weight_decay: R,
    pub decay_factor: R,
    pub decay_every: usize,
}

impl<R: Real> Default for SgdConfig<R> {
    fn default() -> Self {
        Self {
            learning_rate: real(0.01),
            momentum: real(0.9),
            weight_decay: real(1e-4),
            decay_factor: real(5.0),
            decay_every: 10,
        }
    }
}

impl<R: Real> SgdConfig<R> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate > R::zero()
            && self.momentum.is_finite()
            && self.momentum >= R::zero()
            && self.momentum < R::one()
            && self.weight_decay.is_finite()
            && self.weight_decay >= R::zero()
            && self.decay_factor.is_finite()
            && self.decay_factor > R::zero()
            && self.decay_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid SGD config: lr={} momentum={} wd={} decay={}/{}",
                self.learning_rate,
                self.momentum,
                self.weight_decay,
                self.decay_factor,
                self.decay_every
            )))
        }
    }

    /// `lr0 / decay_factor^floor(epoch / decay_every)`.
    pub fn lr_at_epoch(&self, epoch: usize) -> R {
        let steps = (epoch / self.decay_every) as i32;
        self.learning_rate / self.decay_factor.powi(steps)
    }
}

/// Optimizer state: one velocity value per parameter.
#[derive(Debug, Clone)]
pub struct SgdState<R: Real> {
    pub velocity: NetGrads<R>,
}

impl<R: Real> SgdState<R> {
    pub fn for_net(net: &Net<R>) -> Self {
        Self {
            velocity: net.zero_grads(),
        }
    }
}

/// One momentum-SGD update over a flat parameter slice.
pub fn sgd_step<R: Real>(
    params: &mut [R],
    grads: &[R],
    velocity: &mut [R],
    cfg: &SgdConfig<R>,
) -> Result<()> {
    sgd_step_with_lr(params, grads, velocity, cfg, cfg.learning_rate)
}

pub(crate) fn sgd_step_with_lr<R: Real>(
    params: &mut [R],
    grads: &[R],
    velocity: &mut [R],
    cfg: &SgdConfig<R>,
    lr: R,
) -> Result<()> {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), velocity.len());
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::TrainingFailed(
            "non-finite gradient encountered".into(),
        ));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = cfg.momentum * *v + *g + cfg.weight_decay * *p;
        *p = *p - lr * *v;
    }
    Ok(())
}
