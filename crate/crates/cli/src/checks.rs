//! Invariant battery run by `micromag check`.

use std::fmt;

use micromag_core::demag::{shape_condition, stray_energy, stray_field};
use micromag_core::energy::{effective_field, energy};
use micromag_core::grid::{grad_norm_sq, inner_l2, norm_l2};
use micromag_core::linop::{apply_linearization, tangent_check, test_function_w};
use micromag_core::llg::{default_dt, evolve, norm_drift, LlgMode, Sampling};
use micromag_core::minimize::{minimize, MinimizeOptions};
use micromag_core::vec3;
use micromag_core::{
    build_kernel, demag_tensor, el_residual, llg_rhs, rng, DemagKernel, Grid, Result,
    VectorField,
};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// A violation the configuration is known to produce, e.g. the shape
    /// condition on a sphere.
    ExpectedFail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::ExpectedFail => "expected-fail",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: &'static str,
    pub status: Status,
    /// Measured quantity; NaN when the check could not run.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckItem {
    fn at_most(name: &'static str, value: f64, threshold: f64) -> Self {
        CheckItem {
            name,
            status: if value <= threshold { Status::Pass } else { Status::Fail },
            value,
            threshold,
            detail: String::new(),
        }
    }

    fn at_least(name: &'static str, value: f64, threshold: f64) -> Self {
        CheckItem {
            name,
            status: if value >= threshold { Status::Pass } else { Status::Fail },
            value,
            threshold,
            detail: String::new(),
        }
    }

    fn errored(name: &'static str, e: impl fmt::Display) -> Self {
        CheckItem {
            name,
            status: Status::Fail,
            value: f64::NAN,
            threshold: f64::NAN,
            detail: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.status != Status::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

// stream labels, one per randomized check
const SYMMETRY: u64 = 1;
const ENERGY_DECAY: u64 = 2;
const GRADIENT: u64 = 3;
const TANGENCY: u64 = 4;
const JACOBIAN: u64 = 5;
const LIN_TANGENT: u64 = 6;
const W_IDENT: u64 = 7;

struct Ctx<'a> {
    cfg: &'a RunConfig,
    g: &'a Grid,
    k: &'a DemagKernel,
}

fn run(name: &'static str, f: impl FnOnce() -> Result<CheckItem>) -> CheckItem {
    f().unwrap_or_else(|e| CheckItem::errored(name, e))
}

fn stray_symmetry(c: &Ctx) -> Result<CheckItem> {
    let mut rng = rng::stream(c.cfg.seed, SYMMETRY);
    let mut worst: f64 = 0.0;
    let mut min_energy = f64::INFINITY;
    for _ in 0..c.cfg.samples {
        let u = rng::uniform_field(c.g, &mut rng);
        let v = rng::uniform_field(c.g, &mut rng);
        let a = inner_l2(&stray_field(&u, c.k)?, &v, c.g)?;
        let b = inner_l2(&u, &stray_field(&v, c.k)?, c.g)?;
        let scale = norm_l2(&u, c.g)? * norm_l2(&v, c.g)?;
        worst = worst.max((a - b).abs() / scale);
        min_energy = min_energy.min(stray_energy(&u, c.k)?);
    }
    let mut item = CheckItem::at_most("stray_symmetry", worst, 1e-12);
    item.detail = format!("min stray energy {min_energy:e}");
    if min_energy < -1e-12 {
        item.status = Status::Fail;
    }
    Ok(item)
}

fn trace_rule(c: &Ctx) -> Result<CheckItem> {
    let d = demag_tensor(c.g, c.k)?;
    Ok(CheckItem::at_most("demag_trace", d.trace_defect(), 1e-10))
}

fn shape(c: &Ctx) -> Result<CheckItem> {
    let d = demag_tensor(c.g, c.k)?;
    let v = shape_condition(&d, c.cfg.tolerances.gap);
    let a = c.cfg.shape.aspect;
    // equal aspects make the two smallest factors coincide by symmetry
    let degenerate = a[0] == a[1] && a[1] == a[2];
    let status = match (v.satisfied, degenerate) {
        (true, _) => Status::Pass,
        (false, true) => Status::ExpectedFail,
        (false, false) => Status::Fail,
    };
    Ok(CheckItem {
        name: "shape_condition",
        status,
        value: v.margin,
        threshold: c.cfg.tolerances.gap,
        detail: if v.satisfied { "satisfied" } else { "violated" }.into(),
    })
}

fn energy_decay(c: &Ctx) -> Result<(CheckItem, CheckItem)> {
    let p = c.cfg.params.with_lambda(0.0);
    let dt = default_dt(c.g, &p, LlgMode::Full);
    let mut rng = rng::stream(c.cfg.seed, ENERGY_DECAY);
    let (mut rise, mut post): (f64, f64) = (f64::NEG_INFINITY, 0.0);
    for _ in 0..c.cfg.samples {
        let m0 = rng::unit_field(c.g, &mut rng);
        let traj = evolve(&m0, c.g, 0.0, 20.0 * dt, &p, c.k, dt, &Sampling::default(), LlgMode::Full)?;
        for w in traj.energy_series.windows(2) {
            rise = rise.max(w[1] - w[0]);
        }
        post = post.max(norm_drift(&traj).post);
    }
    Ok((
        CheckItem::at_most("energy_decay", rise, 1e-10),
        CheckItem::at_most("constraint_preserved", post, 1e-12),
    ))
}

/// `d/ds E(normalize(m + s v))` against `-2 <H_eff, v>` along tangent `v`.
fn gradient(c: &Ctx) -> Result<CheckItem> {
    let p = &c.cfg.params;
    let mut rng = rng::stream(c.cfg.seed, GRADIENT);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..c.cfg.samples.min(5) {
        let m = rng::unit_field(c.g, &mut rng);
        let v = rng::tangent_field(&m, c.g, &mut rng);
        let h = effective_field(&m, c.g, p, 0.0, c.k)?;
        let e = |s: f64| energy(&m.axpy(s, &v).normalized(), c.g, p, 0.0, c.k);
        let fd = (e(eps)? - e(-eps)?) / (2.0 * eps);
        let want = -2.0 * inner_l2(&h, &v, c.g)?;
        worst = worst.max((fd - want).abs() / want.abs().max(1.0));
    }
    Ok(CheckItem::at_most("gradient_consistency", worst, 1e-6))
}

fn rhs_tangency(c: &Ctx) -> Result<CheckItem> {
    let p = &c.cfg.params;
    let mut rng = rng::stream(c.cfg.seed, TANGENCY);
    let mut worst: f64 = 0.0;
    for _ in 0..c.cfg.samples {
        let m = rng::unit_field(c.g, &mut rng);
        let r = llg_rhs(&m, c.g, 0.25 * p.period, p, c.k)?;
        let normal = r
            .values()
            .iter()
            .zip(m.values())
            .map(|(a, b)| vec3::dot(*a, *b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(normal / r.max_abs().max(1.0));
    }
    Ok(CheckItem::at_most("rhs_tangency", worst, 1e-12))
}

/// Central differences of the rhs along the retraction `normalize(m + s u)`
/// agree with the linearization to second order.
fn jacobian(c: &Ctx) -> Result<CheckItem> {
    let p = c.cfg.params.with_lambda(0.0);
    let mut rng = rng::stream(c.cfg.seed, JACOBIAN);
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..c.cfg.samples.min(5) {
        let m = rng::unit_field(c.g, &mut rng);
        let u = rng::tangent_field(&m, c.g, &mut rng);
        let lu = apply_linearization(&u, &m, c.g, &p, c.k)?;
        let plus = llg_rhs(&m.axpy(eps, &u).normalized(), c.g, 0.0, &p, c.k)?;
        let minus = llg_rhs(&m.axpy(-eps, &u).normalized(), c.g, 0.0, &p, c.k)?;
        let fd = plus.sub(&minus).scaled(0.5 / eps);
        worst = worst.max(norm_l2(&fd.sub(&lu), c.g)? / norm_l2(&lu, c.g)?);
    }
    Ok(CheckItem::at_most("linearization_fd", worst, 1e-5))
}

fn lin_tangent(c: &Ctx, m: &VectorField) -> Result<CheckItem> {
    let p = c.cfg.params.with_lambda(0.0);
    let mut rng = rng::stream(c.cfg.seed, LIN_TANGENT);
    let mut worst: f64 = 0.0;
    for _ in 0..c.cfg.samples {
        let u = rng::tangent_field(m, c.g, &mut rng);
        worst = worst.max(tangent_check(&u, m, c.g, &p, c.k)?);
    }
    Ok(CheckItem::at_most("linearization_tangent", worst, 1e-6))
}

/// `u . w[u] = 0` pointwise and `<grad u, grad w[u]> = 0`.
fn w_identities(c: &Ctx) -> Result<CheckItem> {
    let mut rng = rng::stream(c.cfg.seed, W_IDENT);
    let mut worst: f64 = 0.0;
    for _ in 0..c.cfg.samples {
        let u = rng::smooth_field(c.g, &mut rng, 3);
        let w = test_function_w(&u);
        let pointwise = u
            .values()
            .iter()
            .zip(w.values())
            .map(|(a, b)| vec3::dot(*a, *b).abs())
            .fold(0.0, f64::max);
        let cross = 0.25 * (grad_norm_sq(&u.add(&w), c.g)? - grad_norm_sq(&u.sub(&w), c.g)?);
        let scale = grad_norm_sq(&u, c.g)?.max(1.0);
        worst = worst.max(pointwise).max(cross.abs() / scale);
    }
    Ok(CheckItem::at_most("w_identities", worst, 1e-12))
}

/// Runs the whole battery. Problems are reported as failed items, never as
/// errors.
pub fn run_check_suite(cfg: &RunConfig) -> CheckReport {
    let g = match Grid::build(cfg.shape, cfg.resolution) {
        Ok(g) => g,
        Err(e) => {
            return CheckReport {
                items: vec![CheckItem::errored("grid", e)],
            }
        }
    };
    let k = build_kernel(&g);
    let c = Ctx { cfg, g: &g, k: &k };
    let mut items = vec![
        run("stray_symmetry", || stray_symmetry(&c)),
        run("demag_trace", || trace_rule(&c)),
        run("shape_condition", || shape(&c)),
    ];
    match energy_decay(&c) {
        Ok((a, b)) => items.extend([a, b]),
        Err(e) => items.extend([
            CheckItem::errored("energy_decay", &e),
            CheckItem::errored("constraint_preserved", &e),
        ]),
    }
    items.push(run("gradient_consistency", || gradient(&c)));
    items.push(run("rhs_tangency", || rhs_tangency(&c)));
    items.push(run("linearization_fd", || jacobian(&c)));
    items.push(run("w_identities", || w_identities(&c)));

    let p = cfg.params.with_lambda(0.0);
    let opts = MinimizeOptions {
        tol: cfg.tolerances.minimize,
        ..Default::default()
    };
    match minimize(&p, &g, &k, None, &opts) {
        Ok(r) => {
            items.push(run("minimizer_residual", || {
                let (_, res) = el_residual(&r.m, &g, &p, &k)?;
                Ok(CheckItem::at_most("minimizer_residual", res, cfg.tolerances.minimize))
            }));
            items.push(run("linearization_tangent", || lin_tangent(&c, &r.m)));
            items.push(run("minimizer_unit", || {
                Ok(CheckItem::at_least("minimizer_unit", -r.m.unit_defect(), -1e-12))
            }));
        }
        Err(e) => items.extend([
            CheckItem::errored("minimizer_residual", &e),
            CheckItem::errored("linearization_tangent", &e),
            CheckItem::errored("minimizer_unit", &e),
        ]),
    }
    CheckReport { items }
}
