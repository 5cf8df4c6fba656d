//! One function per subcommand. Each writes its CSV and snapshot outputs plus
//! a manifest into the configured output directory.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use micromag_core::energy::energy_parts;
use micromag_core::linop::{eig2, mean_mode_block, spectrum_with_tol};
use micromag_core::llg::{default_dt, norm_drift};
use micromag_core::minimize::{regularity_report, MinimizeOptions};
use micromag_core::periodic::ClearanceCheck;
use micromag_core::snapshot::{load_field, write_snapshot};
use micromag_core::{
    build_kernel, continuation, demag_tensor, el_residual, evolve, minimize, rng,
    shape_condition, DemagKernel, Grid, LlgMode, MinimizerResult, Sampling, ShootOptions,
    VectorField,
};

use crate::checks::run_check_suite;
use crate::config::{InitialState, RunConfig};
use crate::output::{num, Manifest, Table};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    DemagTensor,
    Minimize,
    Scaling,
    Energy,
    Evolve,
    Spectrum,
    Periodic,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::DemagTensor => "demag-tensor",
            Command::Minimize => "minimize",
            Command::Scaling => "scaling",
            Command::Energy => "energy",
            Command::Evolve => "evolve",
            Command::Spectrum => "spectrum",
            Command::Periodic => "periodic",
            Command::Check => "check",
        }
    }
}

/// How a run ended when it produced its artifacts.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Success,
    /// The computation ran but did not meet its goal (a failed check, a
    /// broken continuation). Artifacts are still written.
    Failure(String),
}

#[derive(Debug)]
pub struct RunReport {
    pub outcome: Outcome,
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

/// Label of the random stream used for `initial = random`.
const INITIAL_STREAM: u64 = 100;

struct Setup {
    g: Grid,
    k: DemagKernel,
}

fn setup(cfg: &RunConfig, man: &mut Manifest) -> Result<Setup, CliError> {
    let t = Instant::now();
    let g = Grid::build(cfg.shape, cfg.resolution)?;
    let k = build_kernel(&g);
    man.timing("setup", t.elapsed());
    man.result("interior_cells", g.interior_count());
    Ok(Setup { g, k })
}

fn minimizer(cfg: &RunConfig, s: &Setup, init: Option<&VectorField>) -> Result<MinimizerResult, CliError> {
    let opts = MinimizeOptions {
        tol: cfg.tolerances.minimize,
        ..Default::default()
    };
    Ok(minimize(&cfg.params.with_lambda(0.0), &s.g, &s.k, init, &opts)?)
}

fn initial_field(cfg: &RunConfig, s: &Setup, man: &mut Manifest) -> Result<VectorField, CliError> {
    Ok(match &cfg.initial {
        InitialState::Minimizer => {
            let t = Instant::now();
            let r = minimizer(cfg, s, None)?;
            man.timing("minimize", t.elapsed());
            r.m
        }
        InitialState::Uniform => VectorField::constant(&s.g, [1.0, 0.0, 0.0]).normalized(),
        InitialState::Random => rng::unit_field(&s.g, &mut rng::stream(cfg.seed, INITIAL_STREAM)),
        InitialState::File(p) => load_field(p, &s.g)?,
    })
}

fn table(man: &mut Manifest, cfg: &RunConfig, name: &str, t: &Table) -> Result<(), CliError> {
    let path = cfg.output.join(name);
    t.write(&path)?;
    man.output(&path);
    Ok(())
}

fn snapshot(man: &mut Manifest, cfg: &RunConfig, name: &str, s: &Setup, m: &VectorField) -> Result<(), CliError> {
    let path = cfg.output.join(name);
    write_snapshot(&path, &s.g, m)?;
    man.output(&path);
    Ok(())
}

fn demag(cfg: &RunConfig, man: &mut Manifest) -> Result<Outcome, CliError> {
    let s = setup(cfg, man)?;
    let d = demag_tensor(&s.g, &s.k)?;
    let v = shape_condition(&d, cfg.tolerances.gap);
    let mut t = Table::new(&["row", "d0", "d1", "d2", "eigenvalue", "vx", "vy", "vz"]);
    for i in 0..3 {
        let mut r = vec![i.to_string()];
        r.extend(d.tensor[i].iter().map(|&x| num(x)));
        r.push(num(d.eigvals[i]));
        r.extend(d.eigvecs[i].iter().map(|&x| num(x)));
        t.row(r);
    }
    table(man, cfg, "demag_tensor.csv", &t)?;
    man.result("trace", d.trace());
    man.result("shape_condition", if v.satisfied { "satisfied" } else { "violated" });
    man.result("shape_margin", v.margin);
    Ok(Outcome::Success)
}

fn run_minimize(cfg: &RunConfig, man: &mut Manifest) -> Result<Outcome, CliError> {
    let s = setup(cfg, man)?;
    let init = match cfg.initial {
        InitialState::Minimizer => None,
        _ => Some(initial_field(cfg, &s, man)?),
    };
    let t = Instant::now();
    let r = minimizer(cfg, &s, init.as_ref())?;
    man.timing("minimize", t.elapsed());
    let mut hist = Table::new(&["iteration", "energy"]);
    for (i, e) in r.energy_history.iter().enumerate() {
        hist.row(vec![i.to_string(), num(*e)]);
    }
    table(man, cfg, "minimize.csv", &hist)?;
    snapshot(man, cfg, "minimizer.mag", &s, &r.m)?;
    man.result("energy", r.energy);
    man.result("el_residual", r.el_residual_norm);
    man.result("iterations", r.iterations);
    Ok(Outcome::Success)
}

fn scaling(cfg: &RunConfig, man: &mut Manifest) -> Result<Outcome, CliError> {
    let s = setup(cfg, man)?;
    let t = Instant::now();
    let mut runs = Vec::new();
    for &eta in &cfg.etas {
        let mut c = cfg.clone();
        c.params.eta = eta;
        runs.push(minimizer(&c, &s, None)?);
    }
    man.timing("minimize", t.elapsed());
    let rep = regularity_report(&runs, &s.g)?;
    let mut samples = Table::new(&["eta", "grad_l2", "grad_linf", "dev_linf", "energy", "el_residual", "iterations"]);
    for (x, r) in rep.samples.iter().zip(&runs) {
        samples.row(vec![
            num(x.eta),
            num(x.grad_l2),
            num(x.grad_linf),
            num(x.dev_linf),
            num(x.energy),
            num(x.el_residual),
            r.iterations.to_string(),
        ]);
    }
    table(man, cfg, "scaling.csv", &samples)?;
    let mut fits = Table::new(&["quantity", "slope", "prefactor"]);
    for (name, f) in [
        ("grad_l2", rep.grad_l2),
        ("grad_linf", rep.grad_linf),
        ("dev_linf", rep.dev_linf),
    ] {
        fits.row(vec![name.into(), num(f.slope), num(f.prefactor)]);
        man.result(&format!("slope_{name}"), f.slope);
    }
    table(man, cfg, "scaling_fit.csv", &fits)?;
    Ok(Outcome::Success)
}

fn run_energy(cfg: &RunConfig, man: &mut Manifest) -> Result<Outcome, CliError> {
    let s = setup(cfg, man)?;
    let m = initial_field(cfg, &s, man)?;
    let parts = energy_parts(&m, &s.g, &cfg.params, 0.0, &s.k)?;
    let (_, res) = el_residual(&m, &s.g, &cfg.params, &s.k)?;
    let mut t = Table::new(&["exchange", "stray", "zeeman", "total", "el_residual"]);
    t.row(vec![
        num(parts.exchange),
        num(parts.stray),
        num(parts.zeeman),
        num(parts.total),
        num(res),
    ]);
    table(man, cfg, "energy.csv", &t)?;
    man.result("total", parts.total);
    Ok(Outcome::Success)
}

fn run_evolve(cfg: &RunConfig, man: &mut Manifest) -> Result<Outcome, CliError> {
    let s = setup(cfg, man)?;
    let m0 = initial_field(cfg, &s, man)?;
    let dt = cfg.dt.unwrap_or_else(|| default_dt(&s.g, &cfg.params, LlgMode::Full));
    let sampling = Sampling {
        every: cfg.sample_every,
        keep_snapshots: false,
        record_energy: true,
    };
    let t = Instant::now();
    let traj = evolve(&m0, &s.g, 0.0, cfg.span(), &cfg.params, &s.k, dt, &sampling, LlgMode::Full)?;
    man.timing("evolve", t.elapsed());
    let mut tab = Table::new(&["t", "energy", "mean_x", "mean_y", "mean_z", "raw_drift", "post_drift"]);
    for i in 0..traj.times.len() {
        let m = traj.mean_series[i];
        tab.row(vec![
            num(traj.times[i]),
            num(traj.energy_series[i]),
            num(m[0]),
            num(m[1]),
            num(m[2]),
            num(traj.norm_drift_series[i]),
            num(traj.post_drift_series[i]),
        ]);
    }
    table(man, cfg, "trajectory.csv", &tab)?;
    snapshot(man, cfg, "final.mag", &s, &traj.final_state)?;
    let d = norm_drift(&traj);
    man.result("steps", traj.steps);
    man.result("dt", traj.dt);
    man.result("raw_drift_accumulated", d.accumulated);
    Ok(Outcome::Success)
}

fn run_spectrum(cfg: &RunConfig, man: &mut Manifest) -> Result<Outcome, CliError> {
    let s = setup(cfg, man)?;
    let m = initial_field(cfg, &s, man)?;
    let p = cfg.params.with_lambda(0.0);
    let t = Instant::now();
    let rep = spectrum_with_tol(&m, &s.g, &p, &s.k, cfg.tolerances.clearance)?;
    man.timing("spectrum", t.elapsed());
    let mut tab = Table::new(&["index", "re", "im"]);
    for (i, z) in rep.eigenvalues.iter().enumerate() {
        tab.row(vec![i.to_string(), num(z.re), num(z.im)]);
    }
    table(man, cfg, "spectrum.csv", &tab)?;
    let d = demag_tensor(&s.g, &s.k)?;
    let predicted = eig2(mean_mode_block(d.eigvals, p.eta, p.alpha));
    let low = rep.smallest(2);
    man.result("dimension", rep.dimension);
    man.result("min_abs_real", rep.min_abs_real);
    man.result("clear", rep.clear());
    man.result(
        "low_pair",
        low.iter().map(|z| vec![z.re, z.im]).collect::<Vec<_>>(),
    );
    man.result(
        "mean_mode_prediction",
        predicted.iter().map(|z| vec![z.re, z.im]).collect::<Vec<_>>(),
    );
    Ok(Outcome::Success)
}

fn run_periodic(cfg: &RunConfig, man: &mut Manifest) -> Result<Outcome, CliError> {
    let s = setup(cfg, man)?;
    let m = initial_field(cfg, &s, man)?;
    let mut opts = ShootOptions {
        tol: cfg.tolerances.shoot,
        gap_tol: cfg.tolerances.gap,
        clearance: ClearanceCheck::Verify,
        clearance_tol: cfg.tolerances.clearance,
        dt: cfg.dt,
        ..Default::default()
    };
    opts.gmres.rtol = cfg.tolerances.gmres;
    let t = Instant::now();
    let c = continuation(&cfg.lambdas, &m, &s.g, &cfg.params, &s.k, &opts)?;
    man.timing("continuation", t.elapsed());
    let mut tab = Table::new(&[
        "lambda",
        "residual",
        "newton_iters",
        "krylov_iters",
        "motion",
        "energy_min",
        "energy_max",
        "steps",
        "dt",
    ]);
    for (i, o) in c.orbits.iter().enumerate() {
        tab.row(vec![
            num(o.lambda),
            num(o.residual),
            o.newton_iters.to_string(),
            o.krylov_iters.to_string(),
            num(o.motion),
            num(o.energy_range.0),
            num(o.energy_range.1),
            o.steps.steps.to_string(),
            num(o.steps.dt),
        ]);
        snapshot(man, cfg, &format!("orbit_{i:03}.mag"), &s, &o.initial)?;
    }
    table(man, cfg, "orbits.csv", &tab)?;
    man.result("converged", c.orbits.len());
    Ok(match c.failure {
        None => Outcome::Success,
        Some((lambda, e)) => {
            man.result("failed_lambda", lambda);
            Outcome::Failure(format!("continuation stopped at lambda = {lambda}: {e}"))
        }
    })
}

fn run_check(cfg: &RunConfig, man: &mut Manifest) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let rep = run_check_suite(cfg);
    man.timing("checks", t.elapsed());
    let mut tab = Table::new(&["item", "status", "value", "threshold", "detail"]);
    for i in &rep.items {
        tab.row(vec![
            i.name.into(),
            i.status.to_string(),
            num(i.value),
            num(i.threshold),
            i.detail.clone(),
        ]);
        man.result(i.name, i.status.to_string());
    }
    table(man, cfg, "checks.csv", &tab)?;
    Ok(if rep.passed() {
        Outcome::Success
    } else {
        let failed: Vec<_> = rep
            .items
            .iter()
            .filter(|i| i.status == crate::checks::Status::Fail)
            .map(|i| i.name)
            .collect();
        Outcome::Failure(format!("failed checks: {}", failed.join(", ")))
    })
}

/// Runs `cmd` on a dedicated pool of `cfg.threads` workers.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<RunReport, CliError> {
    fs::create_dir_all(&cfg.output)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut man = Manifest::new(cmd.name());
    let start = Instant::now();
    let outcome = pool.install(|| match cmd {
        Command::DemagTensor => demag(cfg, &mut man),
        Command::Minimize => run_minimize(cfg, &mut man),
        Command::Scaling => scaling(cfg, &mut man),
        Command::Energy => run_energy(cfg, &mut man),
        Command::Evolve => run_evolve(cfg, &mut man),
        Command::Spectrum => run_spectrum(cfg, &mut man),
        Command::Periodic => run_periodic(cfg, &mut man),
        Command::Check => run_check(cfg, &mut man),
    })?;
    man.timing("total", start.elapsed());
    let status = match &outcome {
        Outcome::Success => "success".to_string(),
        Outcome::Failure(msg) => format!("failure: {msg}"),
    };
    let manifest_path = man.write(cfg, &status)?;
    Ok(RunReport {
        outcome,
        manifest: man,
        manifest_path,
    })
}
