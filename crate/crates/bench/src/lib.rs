//! Benchmark fixtures shared by the criterion benches.

use mirrorflow::problem::QuadraticCost;
use mirrorflow::{FiniteAction, Grid, GridSpec, LqBall, Matrix};

pub fn lq(tau: f64) -> LqBall {
    LqBall::scalar(-0.5, 0.5, 0.5, 0.25, 1.0, tau).expect("valid problem")
}

pub fn finite_action() -> FiniteAction {
    FiniteAction::new(
        vec![vec![-1.0], vec![0.0], vec![1.0]],
        vec![0.3, 0.0, 0.3],
        vec![1.0 / 3.0; 3],
        0.5,
        Matrix::diag(&[0.5]),
        QuadraticCost::pure(Matrix::diag(&[1.0])),
    )
    .expect("valid problem")
}

pub fn grid(nx: usize, nt: usize) -> Grid {
    Grid::new(GridSpec::interval(-1.0, 1.0, nx, nt, 1.0)).expect("valid grid")
}

pub fn grid_2d(nx: usize, nt: usize) -> Grid {
    Grid::new(GridSpec::new(
        vec![-1.0, -1.0],
        vec![1.0, 1.0],
        vec![nx, nx],
        nt,
        1.0,
    ))
    .expect("valid grid")
}

pub fn lq_2d(tau: f64) -> LqBall {
    LqBall::new(
        Matrix::from_rows(&[vec![-0.5, 0.2], vec![0.0, -0.5]]).expect("square"),
        Matrix::diag(&[0.5, 0.5]),
        Matrix::diag(&[0.5, 0.5]),
        Matrix::diag(&[0.25, 0.25]),
        1.0,
        tau,
        0.25,
    )
    .expect("valid problem")
}
