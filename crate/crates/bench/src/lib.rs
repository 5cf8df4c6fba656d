//! Fixtures shared by the benchmarks in `benches/`.

use micromag_core::{build_kernel, rng, DemagKernel, Grid, ShapeSpec, SimParams, VectorField};

pub struct Fixture {
    pub grid: Grid,
    pub kernel: DemagKernel,
    pub m: VectorField,
    pub params: SimParams,
}

/// Prolate spheroid with a random unit field, `eta = 0.1`, `alpha = 1`.
pub fn fixture(n: [usize; 3]) -> Fixture {
    let grid = Grid::build(ShapeSpec::prolate_spheroid(), n).expect("valid grid");
    let kernel = build_kernel(&grid);
    let m = rng::unit_field(&grid, &mut rng::stream(0, 0));
    Fixture {
        grid,
        kernel,
        m,
        params: SimParams::autonomous(0.1, 1.0).with_lambda(1e-3),
    }
}
