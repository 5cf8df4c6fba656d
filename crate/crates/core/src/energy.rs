//! Rescaled micromagnetic energy (exchange length set to one), effective
//! field, tangent projection and the Euler-Lagrange residual.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::demag::{stray_field_into, DemagKernel};
use crate::error::{Error, Result};
use crate::grid::{dot_slices, grad_norm_sq, laplacian_into, norm_l2, Grid, VectorField};
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// `amplitude * cos(2 pi t / T) * u`
    UniformOscillating,
    /// `amplitude * (cos(2 pi t / T) * u + sin(2 pi t / T) * v)`
    UniformRotating,
}

/// Spatially uniform, exactly `period`-periodic applied field `h(t)`. The
/// physical field is `lambda * h(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalFieldSpec {
    pub kind: FieldKind,
    pub amplitude: f64,
    pub u: Vec3,
    pub v: Vec3,
    pub period: f64,
}

const FRAME_TOL: f64 = 1e-12;

impl ExternalFieldSpec {
    pub fn oscillating(direction: Vec3, amplitude: f64, period: f64) -> Result<Self> {
        let s = ExternalFieldSpec {
            kind: FieldKind::UniformOscillating,
            amplitude,
            u: direction,
            v: [0.0; 3],
            period,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn rotating(u: Vec3, v: Vec3, amplitude: f64, period: f64) -> Result<Self> {
        let s = ExternalFieldSpec {
            kind: FieldKind::UniformRotating,
            amplitude,
            u,
            v,
            period,
        };
        s.validate()?;
        Ok(s)
    }

    /// Field rotating in the plane transverse to the x axis.
    pub fn transverse_rotating(period: f64) -> Self {
        ExternalFieldSpec {
            kind: FieldKind::UniformRotating,
            amplitude: 1.0,
            u: [0.0, 1.0, 0.0],
            v: [0.0, 0.0, 1.0],
            period,
        }
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::Config(format!(
                "field period {} must be positive",
                self.period
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Config("field amplitude must be finite".into()));
        }
        if (vec3::norm(self.u) - 1.0).abs() > FRAME_TOL {
            return Err(Error::Config(format!(
                "field direction u = {:?} is not a unit vector",
                self.u
            )));
        }
        if self.kind == FieldKind::UniformRotating {
            if (vec3::norm(self.v) - 1.0).abs() > FRAME_TOL {
                return Err(Error::Config(format!(
                    "rotating frame v = {:?} is not a unit vector",
                    self.v
                )));
            }
            if vec3::dot(self.u, self.v).abs() > FRAME_TOL {
                return Err(Error::Config(format!(
                    "rotating frame u = {:?}, v = {:?} is not orthogonal",
                    self.u, self.v
                )));
            }
        }
        Ok(())
    }

    /// `h(t)`. The phase is reduced with an exact floating-point remainder so
    /// that `at(t + T) == at(t)` bit for bit whenever `t + T` is representable.
    pub fn at(&self, t: f64) -> Vec3 {
        let phase = 2.0 * PI * (t.rem_euclid(self.period) / self.period);
        let (s, c) = phase.sin_cos();
        match self.kind {
            FieldKind::UniformOscillating => vec3::scale(self.amplitude * c, self.u),
            FieldKind::UniformRotating => vec3::scale(
                self.amplitude,
                vec3::add(vec3::scale(c, self.u), vec3::scale(s, self.v)),
            ),
        }
    }
}

fn fmt_vec(v: Vec3) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

/// `oscillating:ux,uy,uz` or `rotating:ux,uy,uz;vx,vy,vz`, with an optional
/// `*amplitude` suffix. The period is carried separately.
impl fmt::Display for ExternalFieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FieldKind::UniformOscillating => write!(f, "oscillating:{}", fmt_vec(self.u))?,
            FieldKind::UniformRotating => {
                write!(f, "rotating:{};{}", fmt_vec(self.u), fmt_vec(self.v))?
            }
        }
        if self.amplitude != 1.0 {
            write!(f, "*{}", self.amplitude)?;
        }
        Ok(())
    }
}

impl FromStr for ExternalFieldSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (body, amplitude) = match s.split_once('*') {
            Some((b, a)) => (
                b,
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad field amplitude `{a}`")))?,
            ),
            None => (s, 1.0),
        };
        let (kind, rest) = body
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("expected `kind:...` field spec, got `{s}`")))?;
        let triple = |t: &str| crate::grid::parse_triple::<f64>(t).map_err(Error::Config);
        match kind.trim() {
            "oscillating" => Self::oscillating(triple(rest)?, amplitude, 1.0),
            "rotating" => {
                let (u, v) = rest.split_once(';').ok_or_else(|| {
                    Error::Config("rotating field needs `u;v` direction pair".into())
                })?;
                Self::rotating(triple(u)?, triple(v)?, amplitude, 1.0)
            }
            other => Err(Error::Config(format!("unknown field kind `{other}`"))),
        }
    }
}

/// Model parameters: particle size `eta`, gyromagnetic ratio `alpha`, field
/// amplitude `lambda`, period `T` and the applied field shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub eta: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub period: f64,
    pub field: ExternalFieldSpec,
}

impl SimParams {
    pub fn new(
        eta: f64,
        alpha: f64,
        lambda: f64,
        period: f64,
        field: ExternalFieldSpec,
    ) -> Result<Self> {
        let p = SimParams {
            eta,
            alpha,
            lambda,
            period,
            field,
        };
        p.validate()?;
        Ok(p)
    }

    /// Autonomous problem (`lambda = 0`) with a transverse rotating field
    /// template of period one.
    pub fn autonomous(eta: f64, alpha: f64) -> Self {
        SimParams {
            eta,
            alpha,
            lambda: 0.0,
            period: 1.0,
            field: ExternalFieldSpec::transverse_rotating(1.0),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = period;
        self.field.period = period;
        self
    }

    pub fn with_field(mut self, field: ExternalFieldSpec) -> Self {
        self.field = field.with_period(self.period);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta = {} must be positive", self.eta)));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::Config(format!(
                "period = {} must be positive",
                self.period
            )));
        }
        if !self.alpha.is_finite() || !self.lambda.is_finite() {
            return Err(Error::Config("alpha and lambda must be finite".into()));
        }
        self.field.validate()?;
        if self.field.period != self.period {
            return Err(Error::Config(format!(
                "field period {} differs from period {}",
                self.field.period, self.period
            )));
        }
        Ok(())
    }

    /// `lambda * h(t)`
    pub fn applied(&self, t: f64) -> Vec3 {
        if self.lambda == 0.0 {
            return [0.0; 3];
        }
        vec3::scale(self.lambda, self.field.at(t))
    }
}

/// Energy split into its contributions; `total = exchange + eta^2 * stray + zeeman`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub exchange: f64,
    pub stray: f64,
    pub zeeman: f64,
    pub total: f64,
}

fn check_pair(g: &Grid, m: &VectorField, k: &DemagKernel) -> Result<()> {
    g.check(m)?;
    if k.grid_id() != g.id() {
        return Err(Error::GridMismatch {
            expected: g.id(),
            found: k.grid_id(),
        });
    }
    Ok(())
}

pub fn energy_parts(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    t: f64,
    k: &DemagKernel,
) -> Result<EnergyParts> {
    check_pair(g, m, k)?;
    m.require_unit()?;
    Ok(energy_parts_unchecked(m, g, p, t, k))
}

pub(crate) fn energy_parts_unchecked(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    t: f64,
    k: &DemagKernel,
) -> EnergyParts {
    let mut h = vec![[0.0; 3]; m.len()];
    stray_field_into(k, m.values(), &mut h);
    energy_with_stray(m, g, p, t, &h)
}

/// Energy when the stray field of `m` is already known.
pub(crate) fn energy_with_stray(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    t: f64,
    stray: &[Vec3],
) -> EnergyParts {
    let vol = g.cell_volume();
    let exchange = grad_norm_sq(m, g).expect("grid checked");
    let stray_e = -dot_slices(stray, m.values()) * vol;
    let eta2 = p.eta * p.eta;
    let zeeman = if p.lambda == 0.0 {
        0.0
    } else {
        let h = p.applied(t);
        let mean_dot: f64 = m.values().iter().map(|&v| vec3::dot(h, v)).sum();
        -2.0 * eta2 * mean_dot * vol
    };
    EnergyParts {
        exchange,
        stray: stray_e,
        zeeman,
        total: exchange + eta2 * stray_e + zeeman,
    }
}

/// `||grad m||^2 + eta^2 ||H[m]||^2 - 2 eta^2 lambda <h(t), m>`.
pub fn energy(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    t: f64,
    k: &DemagKernel,
) -> Result<f64> {
    Ok(energy_parts(m, g, p, t, k)?.total)
}

/// `lap(m) + eta^2 H[m] + eta^2 lambda h(t)`; the unconstrained L2 gradient of
/// the energy is `-2` times this field.
pub fn effective_field(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    t: f64,
    k: &DemagKernel,
) -> Result<VectorField> {
    check_pair(g, m, k)?;
    let mut h = vec![[0.0; 3]; m.len()];
    stray_field_into(k, m.values(), &mut h);
    Ok(m.with_values(effective_from_stray(m, g, p, t, &h)))
}

pub(crate) fn effective_from_stray(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    t: f64,
    stray: &[Vec3],
) -> Vec<Vec3> {
    let mut out = vec![[0.0; 3]; m.len()];
    laplacian_into(g, m.values(), &mut out);
    let eta2 = p.eta * p.eta;
    let ext = vec3::scale(eta2, p.applied(t));
    for (o, &h) in out.iter_mut().zip(stray) {
        *o = vec3::add(vec3::axpy(eta2, h, *o), ext);
    }
    out
}

/// `v - (m.v) m = -m x (m x v)` cellwise.
pub fn tangent_project(v: &VectorField, m: &VectorField) -> Result<VectorField> {
    v.same_grid(m)?;
    m.require_unit()?;
    Ok(v.with_values(project_slices(v.values(), m.values())))
}

pub(crate) fn project_slices(v: &[Vec3], m: &[Vec3]) -> Vec<Vec3> {
    v.iter()
        .zip(m)
        .map(|(&v, &m)| vec3::axpy(-vec3::dot(m, v), m, v))
        .collect()
}

/// Tangential part of `lap(m) + eta^2 H[m]` (autonomous, `lambda` ignored)
/// and its L2 norm. Zero exactly when `m` is parallel to the effective field.
pub fn el_residual(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
) -> Result<(VectorField, f64)> {
    check_pair(g, m, k)?;
    m.require_unit()?;
    let auto = p.with_lambda(0.0);
    let heff = effective_field(m, g, &auto, 0.0, k)?;
    let r = tangent_project(&heff, m)?;
    let n = norm_l2(&r, g)?;
    Ok((r, n))
}
