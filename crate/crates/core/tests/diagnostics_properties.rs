use mirrorflow::diagnostics::performance_difference_residual;
use mirrorflow::{CustomProblem, Field, Grid, GridSpec, LqBall, MirrorMap, SchemeConfig};

fn pair(grid: &Grid) -> (Field, Field) {
    (
        Field::from_fn(grid, 1, |t, x, o| o[0] = 0.8 * (3.0 * x[0] + t).sin()),
        Field::from_fn(grid, 1, |t, x, o| o[0] = 0.6 * (2.0 * x[0] - t).cos() - 0.2),
    )
}

#[test]
fn identical_controls_give_zero_residual() {
    let grid = Grid::new(GridSpec::interval(-1.0, 1.0, 31, 30, 1.0)).unwrap();
    let p = LqBall::scalar(-0.5, 0.5, 0.5, 0.25, 1.0, 0.5).unwrap();
    let (u, _) = pair(&grid);
    let pd = performance_difference_residual(&p, &grid, &SchemeConfig::default(), &u, &u).unwrap();
    assert!(pd.residual.max_abs() <= 1e-12);
}

#[test]
fn control_free_problem_gives_zero_residual() {
    let grid = Grid::new(GridSpec::interval(-1.0, 1.0, 31, 30, 1.0)).unwrap();
    let p = CustomProblem::builder(1, MirrorMap::ball(1.0, 1).unwrap())
        .drift(|_, x, _, out| out[0] = -x[0])
        .sigma(1, |_, _, out| out[0] = 0.5)
        .ellipticity(0.25)
        .running_cost(|_, x, _| x[0] * x[0])
        .terminal_cost(|x| x[0])
        .build()
        .unwrap();
    let (u, v) = pair(&grid);
    let pd = performance_difference_residual(&p, &grid, &SchemeConfig::default(), &u, &v).unwrap();
    assert!(pd.residual.max_abs() <= 1e-10);
    assert!(pd.rhs.max_abs() == 0.0);
}

#[test]
fn both_orderings_agree_under_refinement() {
    let p = LqBall::scalar(-0.5, 0.5, 0.5, 0.25, 1.0, 0.0).unwrap();
    let scheme = SchemeConfig::default();
    let mut sums = Vec::new();
    for nx in [31, 63, 127] {
        let grid = Grid::new(GridSpec::interval(-1.0, 1.0, nx, 40, 1.0)).unwrap();
        let (u, v) = pair(&grid);
        let forward = performance_difference_residual(&p, &grid, &scheme, &u, &v).unwrap();
        let backward = performance_difference_residual(&p, &grid, &scheme, &v, &u).unwrap();
        sums.push(
            forward
                .residual
                .axpy(1.0, &backward.residual)
                .max_abs_before_terminal(),
        );
    }
    assert!(sums[1] < sums[0] && sums[2] < sums[1], "{sums:?}");
}
