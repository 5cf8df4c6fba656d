use micromag_core::demag::stray_field;
use micromag_core::grid::inner_l2;
use micromag_core::llg::divisor_step;
use micromag_core::snapshot::Snapshot;
use micromag_core::vec3;
use micromag_core::{
    build_kernel, tangent_project, ExternalFieldSpec, Grid, ShapeKind, ShapeSpec, VectorField,
};
use proptest::prelude::*;

fn aspect() -> impl Strategy<Value = [f64; 3]> {
    [0.1f64..10.0, 0.1f64..10.0, 0.1f64..10.0]
}

fn unit() -> impl Strategy<Value = [f64; 3]> {
    [-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0]
        .prop_filter("nonzero", |v| vec3::norm(*v) > 1e-3)
        .prop_map(|v| vec3::scale(1.0 / vec3::norm(v), v))
}

proptest! {
    #[test]
    fn shape_text_round_trips(a in aspect(), cuboid in any::<bool>()) {
        let kind = if cuboid { ShapeKind::Cuboid } else { ShapeKind::Ellipsoid };
        let s = ShapeSpec::new(kind, a).unwrap();
        prop_assert_eq!(s.to_string().parse::<ShapeSpec>().unwrap(), s);
    }

    #[test]
    fn normalized_box_has_unit_volume(a in aspect()) {
        let b = ShapeSpec::new(ShapeKind::Cuboid, a).unwrap().normalized_box();
        prop_assert!((b.iter().product::<f64>() - 1.0).abs() < 1e-12);
        let e = ShapeSpec::new(ShapeKind::Ellipsoid, a).unwrap().normalized_box();
        let vol = std::f64::consts::PI / 6.0 * e.iter().product::<f64>();
        prop_assert!((vol - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oscillating_field_round_trips_and_repeats(u in unit(), amp in -5.0f64..5.0, ticks in 0u32..50_000) {
        let f = ExternalFieldSpec::oscillating(u, amp, 1.0).unwrap();
        let back: ExternalFieldSpec = f.to_string().parse().unwrap();
        prop_assert_eq!(back, f);
        // dyadic times keep t + 1 exact
        let t = ticks as f64 / 1024.0;
        prop_assert_eq!(f.at(t + 1.0), f.at(t));
        prop_assert!(vec3::norm(f.at(t)) <= amp.abs() + 1e-15);
    }

    #[test]
    fn divisor_step_covers_span(span in 1e-3f64..100.0, dt in 1e-4f64..1.0) {
        let (n, h) = divisor_step(span, dt);
        prop_assert!(n >= 1);
        prop_assert!(h <= dt * (1.0 + 1e-9));
        prop_assert!((n as f64 * h - span).abs() <= 1e-12 * span);
        // one fewer step would exceed the cap
        if n > 1 {
            prop_assert!(span / (n - 1) as f64 > dt * (1.0 - 1e-9));
        }
    }

    #[test]
    fn snapshot_bytes_round_trip(
        n in [1usize..5, 1usize..5, 1usize..5],
        bits in proptest::collection::vec(any::<bool>(), 64),
        scale in -2.0f64..2.0,
    ) {
        let total = n[0] * n[1] * n[2];
        let mask: Vec<bool> = bits[..total].to_vec();
        let values = (0..mask.iter().filter(|&&b| b).count())
            .map(|i| [scale * i as f64, -scale, 1.0 / (i + 1) as f64])
            .collect();
        let s = Snapshot { n, mask, values };
        let bytes = s.to_bytes();
        prop_assert_eq!(Snapshot::from_bytes(&bytes).unwrap(), s.clone());
        if !s.values.is_empty() {
            prop_assert!(Snapshot::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
    }
}

fn small_grid() -> Grid {
    Grid::build(ShapeSpec::new(ShapeKind::Ellipsoid, [1.5, 1.0, 0.8]).unwrap(), [6, 5, 4]).unwrap()
}

fn field_from(g: &Grid, seed: &[f64]) -> VectorField {
    VectorField::from_fn(g, |x| {
        [
            (seed[0] * x[0] + seed[1]).sin(),
            (seed[2] * x[1] - seed[3] * x[2]).cos(),
            seed[4] + x[0] * x[1],
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stray_operator_is_symmetric_and_dissipative(
        a in proptest::collection::vec(-3.0f64..3.0, 5),
        b in proptest::collection::vec(-3.0f64..3.0, 5),
    ) {
        let g = small_grid();
        let k = build_kernel(&g);
        let u = field_from(&g, &a);
        let v = field_from(&g, &b);
        let hu = stray_field(&u, &k).unwrap();
        let hv = stray_field(&v, &k).unwrap();
        let (uv, vu) = (inner_l2(&hu, &v, &g).unwrap(), inner_l2(&u, &hv, &g).unwrap());
        prop_assert!((uv - vu).abs() <= 1e-12 * (1.0 + uv.abs()));
        prop_assert!(inner_l2(&hu, &u, &g).unwrap() <= 1e-14);
    }

    #[test]
    fn tangent_projection_is_orthogonal_and_idempotent(a in proptest::collection::vec(-3.0f64..3.0, 5)) {
        let g = small_grid();
        let m = field_from(&g, &[1.0, 0.3, -0.7, 0.2, 0.5]).normalized();
        let v = field_from(&g, &a);
        let p = tangent_project(&v, &m).unwrap();
        for (pv, mv) in p.values().iter().zip(m.values()) {
            prop_assert!(vec3::dot(*pv, *mv).abs() < 1e-13 * (1.0 + vec3::norm(*pv)));
        }
        let pp = tangent_project(&p, &m).unwrap();
        prop_assert!(pp.sub(&p).max_abs() < 1e-13 * (1.0 + p.max_abs()));
    }
}
