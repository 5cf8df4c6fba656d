//! End-to-end runs through the public API on a coarse prolate spheroid.

use micromag_core::periodic::{return_defect, ClearanceCheck};
use micromag_core::snapshot::{load_field, write_snapshot};
use micromag_core::{
    build_kernel, continuation, demag_tensor, el_residual, energy, evolve, minimize, shape_condition,
    spectrum, Error, Grid, LlgMode, MinimizeOptions, Sampling, ShapeSpec, ShootOptions, SimParams,
};

const ETA: f64 = 0.1;

fn setup() -> (Grid, micromag_core::DemagKernel, SimParams) {
    let g = Grid::build(ShapeSpec::prolate_spheroid(), [12, 6, 6]).unwrap();
    let k = build_kernel(&g);
    let p = SimParams::autonomous(ETA, 1.0).with_period(2.0);
    (g, k, p)
}

#[test]
fn minimize_snapshot_spectrum_and_evolve() {
    let (g, k, p) = setup();
    let d = demag_tensor(&g, &k).unwrap();
    assert!(d.trace_defect() < 1e-10);
    assert!(shape_condition(&d, 1e-3).satisfied);

    let r = minimize(&p, &g, &k, None, &MinimizeOptions::default()).unwrap();
    assert!(r.el_residual_norm <= 1e-8);
    assert!(r.m.unit_defect() < 1e-12);
    assert!(r.energy_history.windows(2).all(|w| w[1] <= w[0] + 1e-14));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mag");
    write_snapshot(&path, &g, &r.m).unwrap();
    let m = load_field(&path, &g).unwrap();
    assert_eq!(m.values(), r.m.values());
    assert_eq!(el_residual(&m, &g, &p, &k).unwrap().1, el_residual(&r.m, &g, &p, &k).unwrap().1);

    let other = Grid::build(ShapeSpec::prolate_spheroid(), [10, 6, 6]).unwrap();
    assert!(matches!(load_field(&path, &other), Err(Error::Snapshot(_))));

    let s = spectrum(&m, &g, &p, &k).unwrap();
    assert!(s.clear());
    assert!(s.conjugation_defect() < 1e-8);

    // the minimizer is an equilibrium of the autonomous flow
    let dt = micromag_core::llg::default_dt(&g, &p, LlgMode::Full);
    let tr = evolve(&m, &g, 0.0, 0.5, &p, &k, dt, &Sampling::endpoints(), LlgMode::Full).unwrap();
    assert!(tr.final_state.sub(&m).max_abs() < 1e-9);
    let e0 = energy(&m, &g, &p, 0.0, &k).unwrap();
    let e1 = energy(&tr.final_state, &g, &p, 0.5, &k).unwrap();
    assert!((e1 - e0).abs() < 1e-12);
}

#[test]
fn continuation_tracks_small_forcing() {
    let (g, k, p) = setup();
    let r = minimize(&p, &g, &k, None, &MinimizeOptions::default()).unwrap();
    let opts = ShootOptions {
        clearance: ClearanceCheck::Verify,
        ..ShootOptions::default()
    };
    let c = continuation(&[0.0, 5e-4, 1e-3], &r.m, &g, &p, &k, &opts).unwrap();
    assert!(c.failure.is_none());
    assert_eq!(c.orbits.len(), 3);
    let mut prev = 0.0;
    for o in &c.orbits {
        assert!(o.residual <= 1e-8);
        assert!(o.motion >= prev);
        prev = o.motion;
        assert!(return_defect(o, &g, &p, &k, 2).unwrap() <= 1e-7);
    }

    assert!(matches!(
        continuation(&[1e-3], &r.m, &g, &p, &k, &opts),
        Err(Error::Usage(_))
    ));
}
