//! Optimal block designs for generalized linear mixed models with a random
//! block intercept.

pub mod asymptotic;
pub mod closed_form;
pub mod criteria;
pub mod enumeration;
pub mod error;
pub mod info;
pub mod model;
pub mod optim;
pub mod quadrature;
pub mod sampling;
pub mod special;
pub mod surrogate;

pub use error::{DesignError, Result};
pub use info::{InfoMatrix, InfoMeta, Method};
pub use model::{Block, Design, Link, ModelSpec, ParameterPoint, Term};
