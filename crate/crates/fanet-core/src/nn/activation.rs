use crate::num::{real, Real};

/// Elementwise activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply<R: Real>(self, x: R) -> R {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > R::zero() {
                    x
                } else {
                    R::zero()
                }
            }
            Activation::Sigmoid => real::<R>(1.0) / (real::<R>(1.0) + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation output `y = apply(x)`.
    ///
    /// All three activations admit this form, which lets backward passes run
    /// from stored outputs without keeping pre-activations around.
    #[inline]
    pub fn grad_from_output<R: Real>(self, y: R) -> R {
        match self {
            Activation::Identity => R::one(),
            Activation::Relu => {
                if y > R::zero() {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Activation::Sigmoid => y * (R::one() - y),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }
}
