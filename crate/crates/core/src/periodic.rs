//! Periodic orbits of the forced LLG flow: the period map, its differential
//! at a stationary state, Newton-Krylov shooting on the unit-sphere manifold
//! and natural continuation in the field amplitude.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::demag::{demag_tensor, shape_condition, DemagKernel, DEFAULT_GAP_TOL};
use crate::energy::SimParams;
use crate::error::{Error, Result};
use crate::grid::{norm_l2, Grid, VectorField};
use crate::krylov::{gmres, GmresOptions};
use crate::linop::{spectrum_with_tol, TangentFrame, CLEARANCE_TOL, DENSE_CAP};
use crate::llg::{default_dt, divisor_step, evolve, flow, llg_rhs, LlgMode, Sampling};
use crate::vec3::{self, Vec3};

/// Time stepping of one period: `steps * dt == period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodGrid {
    pub steps: usize,
    pub dt: f64,
}

impl PeriodGrid {
    /// Largest step not above `dt_max` that divides the period.
    pub fn new(period: f64, dt_max: f64) -> Self {
        let (steps, dt) = divisor_step(period, dt_max);
        PeriodGrid { steps, dt }
    }

    /// Default stepping for `p` on `g`.
    pub fn default_for(g: &Grid, p: &SimParams) -> Self {
        Self::new(p.period, default_dt(g, p, LlgMode::Full))
    }
}

/// `u -> m(T, u, lambda)`.
pub fn poincare_map(
    u: &VectorField,
    g: &Grid,
    lambda: f64,
    p: &SimParams,
    k: &DemagKernel,
    pg: &PeriodGrid,
) -> Result<VectorField> {
    g.check(u)?;
    u.require_unit()?;
    let p = p.with_lambda(lambda);
    let (m, _) = flow(u.values(), g, 0.0, pg.steps, pg.dt, &p, k, LlgMode::Full)?;
    let mut out = u.with_values(m);
    if pg.steps == 0 {
        out = u.clone();
    }
    out.assert_unit()?;
    Ok(out)
}

fn retract(base: &[Vec3], dir: &[Vec3], s: f64) -> Vec<Vec3> {
    base.iter()
        .zip(dir)
        .map(|(&b, &d)| vec3::normalize(vec3::axpy(s, d, b)))
        .collect()
}

/// Finite-difference step of the monodromy and Jacobian-vector products.
pub const FD_EPS: f64 = 1e-6;

/// Frame-coordinate matrix of `D_u m(T, u, lambda)` at `m` by one-sided
/// differences of the period map along each frame direction.
pub fn monodromy(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
    frame: &TangentFrame,
    pg: &PeriodGrid,
) -> Result<DMatrix<f64>> {
    let dim = frame.dim();
    if dim > DENSE_CAP {
        return Err(Error::TooLarge {
            size: dim,
            cap: DENSE_CAP,
        });
    }
    g.check(m)?;
    m.require_unit()?;
    let base = flow(m.values(), g, 0.0, pg.steps, pg.dt, p, k, LlgMode::Full)?.0;
    let columns: Vec<Result<Vec<f64>>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let (c, b) = frame.basis(j);
            let mut start = m.values().to_vec();
            start[c] = vec3::normalize(vec3::axpy(FD_EPS, b, start[c]));
            let (end, _) = flow(&start, g, 0.0, pg.steps, pg.dt, p, k, LlgMode::Full)?;
            let diff: Vec<Vec3> = end
                .iter()
                .zip(&base)
                .map(|(a, b)| vec3::scale(1.0 / FD_EPS, vec3::sub(*a, *b)))
                .collect();
            Ok(frame.coords(&diff))
        })
        .collect();
    let columns = columns.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(dim, dim, |i, j| columns[j][i]))
}

/// Whether `shoot` checks the imaginary-axis clearance of the linearization at
/// its starting point before iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClearanceCheck {
    Verify,
    Waive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    /// Target `||m(T) - m(0)||_{L2}`.
    pub tol: f64,
    pub max_newton: usize,
    /// Iterations without residual reduction before giving up.
    pub stagnation: usize,
    pub gmres: GmresOptions,
    pub gap_tol: f64,
    pub clearance: ClearanceCheck,
    pub clearance_tol: f64,
    /// Overrides the default step; rounded down to a divisor of the period.
    pub dt: Option<f64>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            tol: 1e-8,
            max_newton: 20,
            stagnation: 5,
            gmres: GmresOptions::default(),
            gap_tol: DEFAULT_GAP_TOL,
            clearance: ClearanceCheck::Verify,
            clearance_tol: CLEARANCE_TOL,
            dt: None,
        }
    }
}

impl ShootOptions {
    pub fn period_grid(&self, g: &Grid, p: &SimParams) -> PeriodGrid {
        match self.dt {
            Some(dt) => PeriodGrid::new(p.period, dt),
            None => PeriodGrid::default_for(g, p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub initial: VectorField,
    pub lambda: f64,
    pub period: f64,
    /// `||m(T) - m(0)||_{L2}`
    pub residual: f64,
    pub newton_iters: usize,
    /// Total period-map evaluations inside the Krylov solves.
    pub krylov_iters: usize,
    /// `max_t ||m_t||_{L2}` over the sampled period.
    pub motion: f64,
    /// Minimum and maximum energy over the sampled period.
    pub energy_range: (f64, f64),
    pub steps: PeriodGrid,
}

/// Refuses shapes whose demag tensor lacks a simple smallest eigenvalue.
pub fn require_shape_condition(g: &Grid, k: &DemagKernel, gap_tol: f64) -> Result<()> {
    let d = demag_tensor(g, k)?;
    let verdict = shape_condition(&d, gap_tol);
    if !verdict.satisfied {
        return Err(Error::ShapeCondition {
            gap: verdict.margin,
            gap_tol,
            eigvals: d.eigvals,
        });
    }
    Ok(())
}

/// Newton shooting for `m(T, u, lambda) = u` started from `init`.
pub fn shoot(
    lambda: f64,
    init: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
    opts: &ShootOptions,
) -> Result<PeriodicOrbit> {
    require_shape_condition(g, k, opts.gap_tol)?;
    g.check(init)?;
    init.require_unit()?;
    let p = p.with_lambda(lambda);
    if opts.clearance == ClearanceCheck::Verify {
        let rep = spectrum_with_tol(init, g, &p.with_lambda(0.0), k, opts.clearance_tol)?;
        if !rep.clear() {
            return Err(Error::Clearance {
                min_abs_re: rep.min_abs_real,
            });
        }
    }
    let pg = opts.period_grid(g, &p);
    let vol = g.cell_volume();
    let map = |u: &[Vec3]| flow(u, g, 0.0, pg.steps, pg.dt, &p, k, LlgMode::Full).map(|r| r.0);
    let defect = |u: &[Vec3], mu: &[Vec3]| -> (Vec<Vec3>, f64) {
        let f: Vec<Vec3> = mu.iter().zip(u).map(|(a, b)| vec3::sub(*a, *b)).collect();
        let r = (f.iter().map(|v| vec3::dot(*v, *v)).sum::<f64>() * vol).sqrt();
        (f, r)
    };

    let mut u = init.clone().normalized().into_values();
    let (mut f, mut res) = defect(&u, &map(&u)?);
    let mut best = (res, u.clone());
    let mut since_best = 0;
    let mut newton_iters = 0;
    let mut krylov_iters = 0;

    while res > opts.tol {
        if newton_iters >= opts.max_newton || since_best >= opts.stagnation {
            return Err(Error::not_converged(
                "periodic shooting",
                newton_iters,
                best.0,
                Some(init.with_values(best.1).normalized()),
            ));
        }
        newton_iters += 1;

        let frame = TangentFrame::build(&init.with_values(u.clone()).normalized())?;
        let rhs: Vec<f64> = frame.coords(&f).iter().map(|v| -v).collect();
        let g0 = frame.coords(&f);
        let mut map_err = None;
        let sol = gmres(
            |x| {
                let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if xn == 0.0 {
                    return vec![0.0; x.len()];
                }
                let s = FD_EPS / xn;
                let up = retract(&u, &frame.field(x), s);
                match map(&up) {
                    Ok(mu) => {
                        let (fp, _) = defect(&up, &mu);
                        frame
                            .coords(&fp)
                            .iter()
                            .zip(&g0)
                            .map(|(a, b)| (a - b) / s)
                            .collect()
                    }
                    Err(e) => {
                        map_err.get_or_insert(e);
                        vec![0.0; x.len()]
                    }
                }
            },
            &rhs,
            &opts.gmres,
        );
        if let Some(e) = map_err {
            return Err(e);
        }
        krylov_iters += sol.iterations;
        let dir = frame.field(&sol.x);

        // damped update: halve until the residual drops
        let mut s = 1.0;
        let mut accepted = None;
        while s >= 1.0 / 64.0 {
            let trial = retract(&u, &dir, s);
            if let Ok(mt) = map(&trial) {
                let (ft, rt) = defect(&trial, &mt);
                if rt < res {
                    accepted = Some((trial, ft, rt));
                    break;
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some((trial, ft, rt)) => {
                u = trial;
                f = ft;
                res = rt;
            }
            None => {
                since_best = opts.stagnation;
                continue;
            }
        }
        if res < best.0 {
            best = (res, u.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
    }

    let mut initial = init.with_values(u);
    initial.assert_unit()?;
    let (motion, energy_range) = orbit_diagnostics(&initial, g, &p, k, &pg)?;
    Ok(PeriodicOrbit {
        initial,
        lambda,
        period: p.period,
        residual: res,
        newton_iters,
        krylov_iters,
        motion,
        energy_range,
        steps: pg,
    })
}

/// `max_t ||m_t||_{L2}` and the energy range over one period, sampled on
/// roughly 64 points.
fn orbit_diagnostics(
    u: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
    pg: &PeriodGrid,
) -> Result<(f64, (f64, f64))> {
    let every = (pg.steps / 64).max(1);
    let traj = evolve(
        u,
        g,
        0.0,
        p.period,
        p,
        k,
        pg.dt,
        &Sampling {
            every,
            keep_snapshots: true,
            record_energy: true,
        },
        LlgMode::Full,
    )?;
    let mut motion: f64 = 0.0;
    for (m, &t) in traj.snapshots.iter().zip(&traj.times) {
        motion = motion.max(norm_l2(&llg_rhs(m, g, t, p, k)?, g)?);
    }
    let lo = traj.energy_series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = traj.energy_series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((motion, (lo, hi)))
}

/// Integrates an orbit over `periods` periods with its own stepping and
/// returns `||m(periods T) - m(0)||_{L2}`.
pub fn return_defect(
    orbit: &PeriodicOrbit,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
    periods: usize,
) -> Result<f64> {
    let p = p.with_lambda(orbit.lambda);
    let (end, _) = flow(
        orbit.initial.values(),
        g,
        0.0,
        periods * orbit.steps.steps,
        orbit.steps.dt,
        &p,
        k,
        LlgMode::Full,
    )?;
    norm_l2(&orbit.initial.with_values(end).sub(&orbit.initial), g)
}

#[derive(Debug)]
pub struct Continuation {
    pub orbits: Vec<PeriodicOrbit>,
    /// First amplitude at which shooting failed, with the reason.
    pub failure: Option<(f64, Error)>,
}

/// Natural continuation from the stationary state `m_eta` at `lambda = 0`;
/// each converged orbit seeds the next amplitude.
pub fn continuation(
    lambdas: &[f64],
    m_eta: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
    opts: &ShootOptions,
) -> Result<Continuation> {
    if lambdas.first() != Some(&0.0) {
        return Err(Error::Usage("continuation must start at lambda = 0".into()));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Usage("lambdas must be strictly increasing".into()));
    }
    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        let seed = orbits.last().map(|o| &o.initial).unwrap_or(m_eta);
        let mut o = *opts;
        if i > 0 {
            o.clearance = ClearanceCheck::Waive;
        }
        match shoot(lambda, seed, g, p, k, &o) {
            Ok(orbit) => orbits.push(orbit),
            Err(e) if i == 0 => return Err(e),
            Err(e) => {
                return Ok(Continuation {
                    orbits,
                    failure: Some((lambda, e)),
                })
            }
        }
    }
    Ok(Continuation {
        orbits,
        failure: None,
    })
}
