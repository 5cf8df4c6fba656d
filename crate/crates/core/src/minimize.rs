//! Minimizers of the rescaled energy on sphere-valued fields and the
//! eta-scaling report.
//!
//! Descent is projected gradient flow with a Barzilai-Borwein step, an Armijo
//! backtracking safeguard (so accepted steps never raise the energy) and a
//! cellwise renormalization retraction.

use crate::demag::{demag_tensor, stray_field_into, DemagKernel};
use crate::energy::{effective_from_stray, energy_with_stray, project_slices, SimParams};
use crate::error::{Error, Result};
use crate::grid::{dot_slices, grad_norm_max, grad_norm_sq, mean, Grid, VectorField};
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Target L2 norm of the tangential effective field.
    pub tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Absolute round-off allowance in the energy comparison.
    pub energy_slack: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol: 1e-8,
            max_iter: 200_000,
            armijo: 1e-4,
            energy_slack: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizerResult {
    pub m: VectorField,
    pub energy: f64,
    pub el_residual_norm: f64,
    pub iterations: usize,
    pub eta: f64,
    /// `+1` if the raw iterate already had `mean(m) . axis >= 0`, `-1` if it was flipped.
    pub aligned_sign: f64,
    /// Demag long axis used for initialization and sign alignment.
    pub axis: Vec3,
    /// Energy after every accepted step, starting with the initial field.
    pub energy_history: Vec<f64>,
}

struct Point {
    m: VectorField,
    energy: f64,
    /// Tangential effective field, the steepest-descent direction.
    dir: Vec<Vec3>,
    res: f64,
}

fn evaluate(m: VectorField, g: &Grid, p: &SimParams, k: &DemagKernel) -> Point {
    let mut stray = vec![[0.0; 3]; m.len()];
    stray_field_into(k, m.values(), &mut stray);
    let energy = energy_with_stray(&m, g, p, 0.0, &stray).total;
    let heff = effective_from_stray(&m, g, p, 0.0, &stray);
    let dir = project_slices(&heff, m.values());
    let res = (dot_slices(&dir, &dir) * g.cell_volume()).sqrt();
    Point {
        m,
        energy,
        dir,
        res,
    }
}

fn step(m: &VectorField, tau: f64, dir: &[Vec3]) -> VectorField {
    m.with_values(
        m.values()
            .iter()
            .zip(dir)
            .map(|(&x, &d)| vec3::axpy(tau, d, x))
            .collect(),
    )
    .normalized()
}

/// Minimizes the autonomous energy (`lambda` is ignored). Starts from `init`
/// or, by default, from the constant field along the demag long axis.
pub fn minimize(
    p: &SimParams,
    g: &Grid,
    k: &DemagKernel,
    init: Option<&VectorField>,
    opts: &MinimizeOptions,
) -> Result<MinimizerResult> {
    if !(p.eta > 0.0 && p.eta <= 0.5) {
        return Err(Error::Usage(format!(
            "minimize expects 0 < eta <= 0.5, got {}",
            p.eta
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Usage("tolerance must be positive".into()));
    }
    let p = p.with_lambda(0.0);
    let axis = demag_tensor(g, k)?.long_axis();
    let m0 = match init {
        Some(m) => {
            g.check(m)?;
            m.require_unit()?;
            m.clone().normalized()
        }
        None => VectorField::constant(g, axis).normalized(),
    };

    let tau0 = 1.0 / g.laplacian_radius();
    let mut cur = evaluate(m0, g, &p, k);
    let mut history = vec![cur.energy];
    let mut tau = tau0;
    let mut iterations = 0;

    while cur.res > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::not_converged(
                "energy minimization",
                iterations,
                cur.res,
                Some(cur.m),
            ));
        }
        iterations += 1;

        let slope = 2.0 * cur.res * cur.res;
        let mut trial_tau = tau;
        let next = loop {
            let cand = evaluate(step(&cur.m, trial_tau, &cur.dir), g, &p, k);
            let target = cur.energy - opts.armijo * trial_tau * slope + opts.energy_slack;
            if cand.energy <= target && cand.energy <= cur.energy + opts.energy_slack {
                break Some(cand);
            }
            trial_tau *= 0.5;
            if trial_tau < 1e-12 * tau0 {
                break None;
            }
        };
        let Some(next) = next else {
            return Err(Error::not_converged(
                "energy minimization (line search stalled)",
                iterations,
                cur.res,
                Some(cur.m),
            ));
        };

        // Barzilai-Borwein: s = x_{k+1} - x_k, y = grad_{k+1} - grad_k = dir_k - dir_{k+1}.
        let mut ss = 0.0;
        let mut sy = 0.0;
        for c in 0..next.m.len() {
            let s = vec3::sub(next.m.values()[c], cur.m.values()[c]);
            let y = vec3::sub(cur.dir[c], next.dir[c]);
            ss += vec3::dot(s, s);
            sy += vec3::dot(s, y);
        }
        tau = if sy > 0.0 {
            (ss / sy).clamp(1e-3 * tau0, 1e8 * tau0)
        } else {
            2.0 * trial_tau
        };
        history.push(next.energy);
        cur = next;
    }

    let mut m = cur.m;
    let aligned_sign = if vec3::dot(mean(&m), axis) < 0.0 {
        m = m.neg();
        -1.0
    } else {
        1.0
    };
    Ok(MinimizerResult {
        m,
        energy: cur.energy,
        el_residual_norm: cur.res,
        iterations,
        eta: p.eta,
        aligned_sign,
        axis,
        energy_history: history,
    })
}

/// One row of the scaling study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSample {
    pub eta: f64,
    pub grad_l2: f64,
    pub grad_linf: f64,
    pub dev_linf: f64,
    pub energy: f64,
    pub el_residual: f64,
}

/// Least-squares fit `y = prefactor * eta^slope`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFit {
    pub slope: f64,
    pub prefactor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub samples: Vec<ScalingSample>,
    /// `||grad m||_{L2}` against eta.
    pub grad_l2: PowerFit,
    /// `||grad m||_{Linf}` against eta.
    pub grad_linf: PowerFit,
    /// `||m - e1||_{Linf}` against eta.
    pub dev_linf: PowerFit,
}

pub fn power_fit(x: &[f64], y: &[f64]) -> PowerFit {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    PowerFit {
        slope,
        prefactor: (my - slope * mx).exp(),
    }
}

pub fn scaling_sample(r: &MinimizerResult, g: &Grid) -> Result<ScalingSample> {
    let dev_linf = r
        .m
        .values()
        .iter()
        .map(|&v| vec3::norm(vec3::sub(v, r.axis)))
        .fold(0.0, f64::max);
    Ok(ScalingSample {
        eta: r.eta,
        grad_l2: grad_norm_sq(&r.m, g)?.sqrt(),
        grad_linf: grad_norm_max(&r.m, g)?,
        dev_linf,
        energy: r.energy,
        el_residual: r.el_residual_norm,
    })
}

/// Log-log slopes of the minimizer norms over an eta ladder.
pub fn regularity_report(runs: &[MinimizerResult], g: &Grid) -> Result<ScalingReport> {
    let mut etas: Vec<f64> = runs.iter().map(|r| r.eta).collect();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    if etas.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: etas.len(),
        });
    }
    let samples = runs
        .iter()
        .map(|r| scaling_sample(r, g))
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = samples.iter().map(|s| s.eta).collect();
    let fit = |f: fn(&ScalingSample) -> f64| {
        let y: Vec<f64> = samples.iter().map(f).collect();
        power_fit(&x, &y)
    };
    Ok(ScalingReport {
        grad_l2: fit(|s| s.grad_l2),
        grad_linf: fit(|s| s.grad_linf),
        dev_linf: fit(|s| s.dev_linf),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demag::build_kernel;
    use crate::energy::{el_residual, energy};
    use crate::grid::ShapeSpec;
    use crate::rng;

    fn spheroid(n: usize) -> (Grid, DemagKernel) {
        let g = Grid::build(ShapeSpec::prolate_spheroid(), [n; 3]).unwrap();
        let k = build_kernel(&g);
        (g, k)
    }

    #[test]
    fn converges_near_long_axis() {
        let (g, k) = spheroid(8);
        let p = SimParams::autonomous(0.1, 0.0);
        let r = minimize(&p, &g, &k, None, &MinimizeOptions::default()).unwrap();
        assert!(r.el_residual_norm <= 1e-8);
        let (_, res) = el_residual(&r.m, &g, &p, &k).unwrap();
        assert!(res <= 1e-8);
        assert!(r.m.unit_defect() <= 1e-12);
        let dev = scaling_sample(&r, &g).unwrap().dev_linf;
        assert!(dev <= 0.2, "{dev}");
        for w in r.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // never worse than the best constant state
        let d = demag_tensor(&g, &k).unwrap();
        assert!(r.energy <= 0.01 * d.eigvals[0] + 1e-15);
    }

    #[test]
    fn tiny_eta_is_nearly_constant() {
        let (g, k) = spheroid(8);
        let eta: f64 = 1e-3;
        let p = SimParams::autonomous(eta, 0.0);
        let opts = MinimizeOptions {
            tol: 1e-12,
            ..Default::default()
        };
        let r = minimize(&p, &g, &k, None, &opts).unwrap();
        let s = scaling_sample(&r, &g).unwrap();
        assert!(s.dev_linf <= 1e-3);
        let l1 = demag_tensor(&g, &k).unwrap().eigvals[0];
        assert!((r.energy - eta * eta * l1).abs() <= 0.01 * eta * eta * l1);
    }

    #[test]
    fn sign_flipped_start_aligns_to_same_minimizer() {
        let (g, k) = spheroid(8);
        let p = SimParams::autonomous(0.2, 0.0);
        let opts = MinimizeOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let plus = minimize(&p, &g, &k, None, &opts).unwrap();
        let minus_init = VectorField::constant(&g, vec3::scale(-1.0, plus.axis)).normalized();
        let minus = minimize(&p, &g, &k, Some(&minus_init), &opts).unwrap();
        assert_eq!(plus.aligned_sign, 1.0);
        assert_eq!(minus.aligned_sign, -1.0);
        assert!(plus.m.sub(&minus.m).max_abs() <= 1e-6);
    }

    #[test]
    fn random_start_descends_monotonically() {
        let (g, k) = spheroid(6);
        let p = SimParams::autonomous(0.3, 0.0);
        let m0 = rng::unit_field(&g, &mut rng::stream(11, 0));
        let e0 = energy(&m0, &g, &p, 0.0, &k).unwrap();
        let opts = MinimizeOptions {
            tol: 1e-6,
            ..Default::default()
        };
        let r = minimize(&p, &g, &k, Some(&m0), &opts).unwrap();
        assert_eq!(r.energy_history[0], e0);
        assert!(r.energy < e0);
        for w in r.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let (g, k) = spheroid(6);
        let p = SimParams::autonomous(0.3, 0.0);
        let m0 = rng::unit_field(&g, &mut rng::stream(2, 0));
        let opts = MinimizeOptions {
            max_iter: 3,
            ..Default::default()
        };
        match minimize(&p, &g, &k, Some(&m0), &opts) {
            Err(Error::NotConverged(nc)) => {
                assert_eq!(nc.iterations, 3);
                assert!(nc.best.is_some());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_large_eta_and_nonunit_init() {
        let (g, k) = spheroid(4);
        let opts = MinimizeOptions::default();
        assert!(minimize(&SimParams::autonomous(0.6, 0.0), &g, &k, None, &opts).is_err());
        let bad = VectorField::constant(&g, [2.0, 0.0, 0.0]);
        assert!(minimize(&SimParams::autonomous(0.1, 0.0), &g, &k, Some(&bad), &opts).is_err());
    }

    #[test]
    fn power_fit_recovers_exponent() {
        let x = [0.05, 0.1, 0.2, 0.4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        let f = power_fit(&x, &y);
        assert!((f.slope - 1.5).abs() < 1e-12 && (f.prefactor - 3.0).abs() < 1e-12);
    }

    #[test]
    fn report_needs_three_etas() {
        let (g, k) = spheroid(4);
        let r = minimize(
            &SimParams::autonomous(0.1, 0.0),
            &g,
            &k,
            None,
            &MinimizeOptions::default(),
        )
        .unwrap();
        let runs = vec![r.clone(), r];
        assert!(matches!(
            regularity_report(&runs, &g),
            Err(Error::TooFewSamples { needed: 3, got: 1 })
        ));
    }
}
