//! Reverse-mode automatic differentiation over dense matrices.

mod gradcheck;
mod graph;
mod params;
mod tape;

pub use gradcheck::{gradient_check, GradCheckOptions, GradCheckReport, ParamCheck};
pub use graph::Graph;
pub use params::{ParamId, ParamKind, Parameter, ParameterStore};
pub use tape::{argmax_first, sigmoid, Axis, Node, Tape, Var};
