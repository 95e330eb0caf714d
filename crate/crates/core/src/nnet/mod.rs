//! A small differentiable compute core: dense `f64` matrices, a tape of
//! the operations the motion models need, reverse-mode gradients, two
//! optimisers and a finite-difference gradient checker.

pub mod check;
mod graph;
mod optim;
mod params;
mod tensor;

pub use check::{grad_check, numeric_grad, relative_error, GradCheckReport};
pub use graph::{sigmoid, Axis, Graph, Var, BCE_EPS};
pub use optim::{Adam, Sgd};
pub use params::{Params, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use tensor::Tensor;

/// How a sequence of feature rows is pooled into one vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pool {
    #[default]
    Mean,
    Max,
}

impl Pool {
    pub fn apply(self, g: &mut Graph, x: Var) -> crate::error::Result<Var> {
        match self {
            Pool::Mean => g.mean_rows(x),
            Pool::Max => g.max_rows(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pool::Mean => "mean",
            Pool::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean" => Some(Pool::Mean),
            "max" => Some(Pool::Max),
            _ => None,
        }
    }
}
