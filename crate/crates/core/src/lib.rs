pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod grid;
pub mod hjb;
pub mod linalg;
pub mod mirror;
pub mod pde;
pub mod problem;

pub use error::{Error, Result};
pub use flow::{FlowConfig, FlowRecord, FlowState, FlowTarget, FlowTrace, Probe};
pub use grid::{build_grid, spatial_gradient, Field, Grid, GridSpec, Node, ValueField};
pub use hjb::{optimal_dual, solve_hjb, HjbConfig, HjbSolution};
pub use linalg::Matrix;
pub use mirror::MirrorMap;
pub use pde::{evaluate_policy, feynman_kac, SchemeConfig, TimeStepping};
pub use problem::{ControlProblem, CustomProblem, FiniteAction, LqBall, Minimizer};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
