//! Explicit integration of the rescaled LLG equation in its cross-product-free
//! form
//!
//! ```text
//! m_t = lap m + alpha m x lap m + |grad m|^2 m
//!       + alpha eta^2 m x (H[m] + lambda h) - eta^2 m x (m x (H[m] + lambda h))
//! ```
//!
//! with classical RK4 and a renormalization after every step.

use nalgebra::Complex;

use crate::demag::{stray_field_into, DemagKernel};
use crate::energy::{energy_with_stray, ExternalFieldSpec, SimParams};
use crate::error::{Error, Result};
use crate::grid::{grad_dot_into, laplacian_into, mean, Grid, VectorField};
use crate::vec3::{self, Vec3};

/// Which parts of the right-hand side are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LlgMode {
    #[default]
    Full,
    /// Only the precession `alpha m x H_eff`; conserves the energy exactly in
    /// continuous time. Diagnostic use.
    PrecessionOnly,
}

impl LlgMode {
    fn heat_weight(self) -> f64 {
        match self {
            LlgMode::Full => 1.0,
            LlgMode::PrecessionOnly => 0.0,
        }
    }
}

/// `h(t)` of a field specification.
pub fn external_field(t: f64, spec: &ExternalFieldSpec) -> Vec3 {
    spec.at(t)
}

/// Right-hand side evaluator with reusable buffers.
pub(crate) struct Rhs<'a> {
    g: &'a Grid,
    k: &'a DemagKernel,
    p: SimParams,
    mode: LlgMode,
    lap: Vec<Vec3>,
    gsq: Vec<f64>,
    pub(crate) stray: Vec<Vec3>,
}

impl<'a> Rhs<'a> {
    pub(crate) fn new(g: &'a Grid, k: &'a DemagKernel, p: &SimParams, mode: LlgMode) -> Self {
        let n = g.interior_count();
        Rhs {
            g,
            k,
            p: *p,
            mode,
            lap: vec![[0.0; 3]; n],
            gsq: vec![0.0; n],
            stray: vec![[0.0; 3]; n],
        }
    }

    pub(crate) fn eval(&mut self, m: &[Vec3], t: f64, out: &mut [Vec3]) {
        laplacian_into(self.g, m, &mut self.lap);
        stray_field_into(self.k, m, &mut self.stray);
        let eta2 = self.p.eta * self.p.eta;
        let alpha = self.p.alpha;
        let ext = self.p.applied(t);
        match self.mode {
            LlgMode::Full => {
                grad_dot_into(self.g, m, m, &mut self.gsq);
                for c in 0..m.len() {
                    let (mc, l) = (m[c], self.lap[c]);
                    let f = vec3::add(self.stray[c], ext);
                    let mxf = vec3::cross(mc, f);
                    let mut r = vec3::axpy(alpha, vec3::cross(mc, l), l);
                    r = vec3::axpy(self.gsq[c], mc, r);
                    r = vec3::axpy(alpha * eta2, mxf, r);
                    r = vec3::axpy(-eta2, vec3::cross(mc, mxf), r);
                    out[c] = r;
                }
            }
            LlgMode::PrecessionOnly => {
                for c in 0..m.len() {
                    let mc = m[c];
                    let heff = vec3::axpy(eta2, vec3::add(self.stray[c], ext), self.lap[c]);
                    out[c] = vec3::scale(alpha, vec3::cross(mc, heff));
                }
            }
        }
    }
}

/// LLG right-hand side at `m`, time `t`.
pub fn llg_rhs(
    m: &VectorField,
    g: &Grid,
    t: f64,
    p: &SimParams,
    k: &DemagKernel,
) -> Result<VectorField> {
    llg_rhs_mode(m, g, t, p, k, LlgMode::Full)
}

pub fn llg_rhs_mode(
    m: &VectorField,
    g: &Grid,
    t: f64,
    p: &SimParams,
    k: &DemagKernel,
    mode: LlgMode,
) -> Result<VectorField> {
    g.check(m)?;
    m.require_unit()?;
    Ok(m.with_values(rhs_raw(m.values(), g, t, p, k, mode)))
}

/// Right-hand side without the unit-field precondition; used by
/// finite-difference checks that probe off the sphere.
pub(crate) fn rhs_raw(
    m: &[Vec3],
    g: &Grid,
    t: f64,
    p: &SimParams,
    k: &DemagKernel,
    mode: LlgMode,
) -> Vec<Vec3> {
    let mut out = vec![[0.0; 3]; m.len()];
    Rhs::new(g, k, p, mode).eval(m, t, &mut out);
    out
}

fn rk4_amplification(z: Complex<f64>) -> f64 {
    let one = Complex::new(1.0, 0.0);
    (one + z * (one + z * (one / 2.0 + z * (one / 6.0 + z / 24.0)))).norm()
}

/// Distance from the origin to the RK4 stability boundary along the ray at
/// angle `theta` in the left half plane.
pub fn rk4_stability_radius(theta: f64) -> f64 {
    let dir = Complex::from_polar(1.0, theta);
    let unstable = |r: f64| rk4_amplification(dir * r) > 1.0 + 1e-13;
    let mut lo = 0.0;
    let mut r = 1e-3;
    while r < 4.0 && !unstable(r) {
        lo = r;
        r += 1e-3;
    }
    let mut hi = r;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if unstable(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Largest stable time step: the RK4 stability radius along the direction of
/// the stiff eigenvalues `-mu (heat +- i alpha)` of the Laplacian part,
/// divided by their largest modulus.
pub fn stability_limit(g: &Grid, p: &SimParams, mode: LlgMode) -> f64 {
    let heat = mode.heat_weight();
    let a = p.alpha.abs();
    let rho = g.laplacian_radius() * heat.hypot(a)
        + p.eta * p.eta * (heat + a) * (1.0 + p.lambda.abs() * p.field.amplitude.abs());
    if rho == 0.0 {
        return f64::INFINITY;
    }
    let theta = std::f64::consts::PI - a.atan2(heat);
    rk4_stability_radius(theta) / rho
}

/// Default time step: three quarters of the stability limit.
pub fn default_dt(g: &Grid, p: &SimParams, mode: LlgMode) -> f64 {
    0.75 * stability_limit(g, p, mode)
}

/// Largest step `<= dt_max` dividing `span` into an integer number of steps.
pub fn divisor_step(span: f64, dt_max: f64) -> (usize, f64) {
    if span <= 0.0 {
        return (0, 0.0);
    }
    let n = (span / dt_max - 1e-9).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

/// RK4 + renormalization stepper with reusable stage buffers.
pub(crate) struct Stepper<'a> {
    rhs: Rhs<'a>,
    k: [Vec<Vec3>; 4],
    tmp: Vec<Vec3>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(g: &'a Grid, k: &'a DemagKernel, p: &SimParams, mode: LlgMode) -> Self {
        let n = g.interior_count();
        Stepper {
            rhs: Rhs::new(g, k, p, mode),
            k: std::array::from_fn(|_| vec![[0.0; 3]; n]),
            tmp: vec![[0.0; 3]; n],
        }
    }

    /// Advances `m` by one step; returns the raw drift `max ||m| - 1|` before
    /// renormalization.
    pub(crate) fn step(&mut self, m: &mut [Vec3], t: f64, dt: f64) -> f64 {
        let [k1, k2, k3, k4] = &mut self.k;
        self.rhs.eval(m, t, k1);
        for c in 0..m.len() {
            self.tmp[c] = vec3::axpy(0.5 * dt, k1[c], m[c]);
        }
        self.rhs.eval(&self.tmp, t + 0.5 * dt, k2);
        for c in 0..m.len() {
            self.tmp[c] = vec3::axpy(0.5 * dt, k2[c], m[c]);
        }
        self.rhs.eval(&self.tmp, t + 0.5 * dt, k3);
        for c in 0..m.len() {
            self.tmp[c] = vec3::axpy(dt, k3[c], m[c]);
        }
        self.rhs.eval(&self.tmp, t + dt, k4);
        let w = dt / 6.0;
        let mut drift: f64 = 0.0;
        for c in 0..m.len() {
            let incr = vec3::add(
                vec3::add(k1[c], k4[c]),
                vec3::scale(2.0, vec3::add(k2[c], k3[c])),
            );
            let raw = vec3::axpy(w, incr, m[c]);
            let n = vec3::norm(raw);
            drift = drift.max((n - 1.0).abs());
            m[c] = vec3::scale(1.0 / n, raw);
        }
        // NaN compares false in max; surface it explicitly
        if drift.is_nan() || m.iter().any(|v| !v[0].is_finite()) {
            return f64::NAN;
        }
        drift
    }
}

/// Which samples to retain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    /// Record a sample every `every` steps (and always at the final time).
    pub every: usize,
    pub keep_snapshots: bool,
    pub record_energy: bool,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            every: 1,
            keep_snapshots: false,
            record_energy: true,
        }
    }
}

impl Sampling {
    pub fn endpoints() -> Self {
        Sampling {
            every: usize::MAX,
            keep_snapshots: false,
            record_energy: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<VectorField>,
    /// Energy at each sample time (empty when not recorded).
    pub energy_series: Vec<f64>,
    pub mean_series: Vec<Vec3>,
    /// Max raw drift over the steps since the previous sample.
    pub norm_drift_series: Vec<f64>,
    /// `max ||m| - 1|` of the stored state after renormalization.
    pub post_drift_series: Vec<f64>,
    /// Sum of the per-step raw drifts: the norm defect an unprojected scheme
    /// would accumulate over the interval, to leading order.
    pub raw_drift_accumulated: f64,
    pub dt: f64,
    pub steps: usize,
    pub final_state: VectorField,
}

/// Raw and post-renormalization norm drift of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormDrift {
    /// Worst single-step defect before renormalization.
    pub raw: f64,
    /// Accumulated raw defect over the whole run.
    pub accumulated: f64,
    pub post: f64,
}

pub fn norm_drift(traj: &Trajectory) -> NormDrift {
    let fold = |s: &[f64]| s.iter().cloned().fold(0.0, f64::max);
    NormDrift {
        raw: fold(&traj.norm_drift_series),
        accumulated: traj.raw_drift_accumulated,
        post: fold(&traj.post_drift_series),
    }
}

/// Integrates from `t0` to `t1`. `dt` is shrunk to the nearest divisor of the
/// interval; a requested step above the stability limit is rejected.
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    m0: &VectorField,
    g: &Grid,
    t0: f64,
    t1: f64,
    p: &SimParams,
    k: &DemagKernel,
    dt: f64,
    sampling: &Sampling,
    mode: LlgMode,
) -> Result<Trajectory> {
    g.check(m0)?;
    m0.require_unit()?;
    if !(t1 >= t0) {
        return Err(Error::Usage(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    let limit = stability_limit(g, p, mode);
    if !(dt > 0.0) || dt > limit {
        return Err(Error::Unstable { dt, limit });
    }
    let (steps, dt) = divisor_step(t1 - t0, dt);
    let every = sampling.every.max(1);

    let mut m = m0.values().to_vec();
    let mut traj = Trajectory {
        times: Vec::new(),
        snapshots: Vec::new(),
        energy_series: Vec::new(),
        mean_series: Vec::new(),
        norm_drift_series: Vec::new(),
        post_drift_series: Vec::new(),
        raw_drift_accumulated: 0.0,
        dt,
        steps,
        final_state: m0.clone(),
    };
    let mut stray = vec![[0.0; 3]; m.len()];
    let mut record = |traj: &mut Trajectory, m: &[Vec3], t: f64, raw: f64| {
        let f = m0.with_values(m.to_vec()).normalized_flag_only();
        if sampling.record_energy {
            stray_field_into(k, m, &mut stray);
            traj.energy_series
                .push(energy_with_stray(&f, g, p, t, &stray).total);
        }
        traj.times.push(t);
        traj.mean_series.push(mean(&f));
        traj.norm_drift_series.push(raw);
        traj.post_drift_series.push(f.unit_defect());
        if sampling.keep_snapshots {
            traj.snapshots.push(f);
        }
    };

    record(&mut traj, &m, t0, 0.0);
    let mut stepper = Stepper::new(g, k, p, mode);
    let mut raw_since = 0.0f64;
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        let drift = stepper.step(&mut m, t, dt);
        if drift.is_nan() {
            return Err(Error::BlowUp { last_good_time: t });
        }
        raw_since = raw_since.max(drift);
        traj.raw_drift_accumulated += drift;
        if (i + 1) % every == 0 || i + 1 == steps {
            let t_next = if i + 1 == steps { t1 } else { t0 + (i + 1) as f64 * dt };
            record(&mut traj, &m, t_next, raw_since);
            raw_since = 0.0;
        }
    }
    let mut fin = m0.with_values(m);
    fin.assert_unit()?;
    traj.final_state = fin;
    Ok(traj)
}

/// State after `steps` RK4 steps of size `dt` from `t0`, with the worst raw
/// drift. No sampling overhead.
#[allow(clippy::too_many_arguments)]
pub(crate) fn flow(
    m0: &[Vec3],
    g: &Grid,
    t0: f64,
    steps: usize,
    dt: f64,
    p: &SimParams,
    k: &DemagKernel,
    mode: LlgMode,
) -> Result<(Vec<Vec3>, f64)> {
    let mut m = m0.to_vec();
    let mut stepper = Stepper::new(g, k, p, mode);
    let mut worst = 0.0f64;
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        let d = stepper.step(&mut m, t, dt);
        if d.is_nan() {
            return Err(Error::BlowUp { last_good_time: t });
        }
        worst = worst.max(d);
    }
    Ok((m, worst))
}

impl VectorField {
    /// Sets the unit flag when the data passes the unit check; otherwise leaves it clear.
    pub(crate) fn normalized_flag_only(mut self) -> Self {
        let _ = self.assert_unit();
        self
    }
}
