//! Linearization of the LLG right-hand side about a stationary state `m`,
//! its restriction to the tangent space, dense assembly in a per-cell
//! tangent frame, spectra and the quadratic-form probes.
//!
//! With `F = H[m]`, the ten terms at `lambda = 0` are
//!
//! ```text
//! L u = lap u + a m x lap u + 2 (grad u : grad m) m + |grad m|^2 u + a u x lap m
//!     + a e^2 m x H[u] + a e^2 u x F - e^2 m x (m x H[u]) - e^2 m x (u x F)
//!     - e^2 u x (m x F)
//! ```
//!
//! with `a = alpha`, `e = eta`. Each term is the exact derivative of the
//! corresponding discrete term in `llg::llg_rhs`.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::demag::{stray_field_into, DemagKernel};
use crate::energy::SimParams;
use crate::error::{Error, Result};
use crate::grid::{dot_slices, grad_dot_into, grad_norm_sq, laplacian_into, mean, Grid, VectorField};
use crate::vec3::{self, Vec3};

/// Largest dense matrix dimension accepted by assembly and eigensolves.
pub const DENSE_CAP: usize = 4096;

/// Default threshold on `|Re mu|` for the imaginary-axis clearance check.
pub const CLEARANCE_TOL: f64 = 1e-8;

/// Bound on `|u . m|` accepted as tangent.
pub const TANGENT_TOL: f64 = 1e-10;

/// Base-point data of the linearization: `m`, `lap m`, `H[m]`, `|grad m|^2`.
pub struct Linearization<'a> {
    g: &'a Grid,
    k: &'a DemagKernel,
    alpha: f64,
    eta2: f64,
    m: Vec<Vec3>,
    lap_m: Vec<Vec3>,
    h_m: Vec<Vec3>,
    gsq_m: Vec<f64>,
}

impl<'a> Linearization<'a> {
    pub fn new(m: &VectorField, g: &'a Grid, p: &SimParams, k: &'a DemagKernel) -> Result<Self> {
        g.check(m)?;
        m.require_unit()?;
        if k.grid_id() != g.id() {
            return Err(Error::GridMismatch {
                expected: g.id(),
                found: k.grid_id(),
            });
        }
        let n = m.len();
        let mv = m.values().to_vec();
        let mut lap_m = vec![[0.0; 3]; n];
        let mut h_m = vec![[0.0; 3]; n];
        let mut gsq_m = vec![0.0; n];
        laplacian_into(g, &mv, &mut lap_m);
        stray_field_into(k, &mv, &mut h_m);
        grad_dot_into(g, &mv, &mv, &mut gsq_m);
        Ok(Linearization {
            g,
            k,
            alpha: p.alpha,
            eta2: p.eta * p.eta,
            m: mv,
            lap_m,
            h_m,
            gsq_m,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn base(&self) -> &[Vec3] {
        &self.m
    }

    /// `L u` with the stray field of `u` recomputed.
    pub fn apply(&self, u: &[Vec3]) -> Vec<Vec3> {
        let mut hu = vec![[0.0; 3]; u.len()];
        stray_field_into(self.k, u, &mut hu);
        self.apply_with_stray(u, &hu)
    }

    /// `L u` given `H[u]`.
    pub fn apply_with_stray(&self, u: &[Vec3], hu: &[Vec3]) -> Vec<Vec3> {
        let n = u.len();
        let mut lap_u = vec![[0.0; 3]; n];
        let mut gdot = vec![0.0; n];
        laplacian_into(self.g, u, &mut lap_u);
        grad_dot_into(self.g, u, &self.m, &mut gdot);
        let (a, e2) = (self.alpha, self.eta2);
        (0..n)
            .map(|c| {
                let (uc, mc, lu, lm, h, f) =
                    (u[c], self.m[c], lap_u[c], self.lap_m[c], hu[c], self.h_m[c]);
                let mxh = vec3::cross(mc, h);
                let mut r = lu;
                r = vec3::axpy(a, vec3::cross(mc, lu), r);
                r = vec3::axpy(2.0 * gdot[c], mc, r);
                r = vec3::axpy(self.gsq_m[c], uc, r);
                r = vec3::axpy(a, vec3::cross(uc, lm), r);
                r = vec3::axpy(a * e2, mxh, r);
                r = vec3::axpy(a * e2, vec3::cross(uc, f), r);
                r = vec3::axpy(-e2, vec3::cross(mc, mxh), r);
                r = vec3::axpy(-e2, vec3::cross(mc, vec3::cross(uc, f)), r);
                r = vec3::axpy(-e2, vec3::cross(uc, vec3::cross(mc, f)), r);
                r
            })
            .collect()
    }
}

/// `L u` at the base point `m`.
pub fn apply_linearization(
    u: &VectorField,
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
) -> Result<VectorField> {
    u.same_grid(m)?;
    let lin = Linearization::new(m, g, p, k)?;
    Ok(u.with_values(lin.apply(u.values())))
}

/// Per-cell orthonormal basis `(e_theta, e_phi)` of the plane orthogonal to `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    grid_id: u64,
    pub e_theta: Vec<Vec3>,
    pub e_phi: Vec<Vec3>,
}

impl TangentFrame {
    /// Gram-Schmidt of the coordinate axis least aligned with `m` (lowest
    /// index on ties); `e_phi = m x e_theta`.
    pub fn build(m: &VectorField) -> Result<Self> {
        m.require_unit()?;
        let (e_theta, e_phi) = m
            .values()
            .iter()
            .map(|&mc| {
                let mut axis = 0;
                for a in 1..3 {
                    if mc[a].abs() < mc[axis].abs() {
                        axis = a;
                    }
                }
                let mut e = [0.0; 3];
                e[axis] = 1.0;
                let t = vec3::normalize(vec3::axpy(-mc[axis], mc, e));
                (t, vec3::cross(mc, t))
            })
            .unzip();
        Ok(TangentFrame {
            grid_id: m.grid_id(),
            e_theta,
            e_phi,
        })
    }

    pub fn len(&self) -> usize {
        self.e_theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_theta.is_empty()
    }

    /// Coordinate count, two per cell.
    pub fn dim(&self) -> usize {
        2 * self.len()
    }

    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    /// Worst violation of the per-cell orthonormality relations against `m`.
    pub fn defect(&self, m: &VectorField) -> f64 {
        let mut worst: f64 = 0.0;
        for c in 0..self.len() {
            let (t, f, mc) = (self.e_theta[c], self.e_phi[c], m.values()[c]);
            for v in [
                vec3::dot(t, mc),
                vec3::dot(f, mc),
                vec3::dot(t, f),
                vec3::norm(t) - 1.0,
                vec3::norm(f) - 1.0,
            ] {
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    /// `[u.e_theta_0, u.e_phi_0, u.e_theta_1, ...]`
    pub fn coords(&self, u: &[Vec3]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for (c, &uc) in u.iter().enumerate() {
            x.push(vec3::dot(uc, self.e_theta[c]));
            x.push(vec3::dot(uc, self.e_phi[c]));
        }
        x
    }

    pub fn field(&self, x: &[f64]) -> Vec<Vec3> {
        assert_eq!(x.len(), self.dim());
        (0..self.len())
            .map(|c| {
                vec3::add(
                    vec3::scale(x[2 * c], self.e_theta[c]),
                    vec3::scale(x[2 * c + 1], self.e_phi[c]),
                )
            })
            .collect()
    }

    /// Basis field of coordinate `j`, as a single nonzero cell value.
    pub fn basis(&self, j: usize) -> (usize, Vec3) {
        let c = j / 2;
        (c, if j % 2 == 0 { self.e_theta[c] } else { self.e_phi[c] })
    }
}

fn max_normal(u: &[Vec3], m: &[Vec3]) -> f64 {
    u.iter()
        .zip(m)
        .map(|(&a, &b)| vec3::dot(a, b).abs())
        .fold(0.0, f64::max)
}

fn require_tangent(u: &VectorField, m: &VectorField) -> Result<()> {
    u.same_grid(m)?;
    let worst = max_normal(u.values(), m.values());
    if worst > TANGENT_TOL {
        return Err(Error::Usage(format!(
            "field is not tangent: max |u.m| = {worst:e}"
        )));
    }
    Ok(())
}

/// `||(L u) . m||_{L2}` for a tangent `u`.
pub fn tangent_check(
    u: &VectorField,
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
) -> Result<f64> {
    require_tangent(u, m)?;
    let lu = Linearization::new(m, g, p, k)?.apply(u.values());
    let s: f64 = lu
        .iter()
        .zip(m.values())
        .map(|(&a, &b)| vec3::dot(a, b).powi(2))
        .sum();
    Ok((s * g.cell_volume()).sqrt())
}

/// Dense frame-coordinate matrix of the tangent-projected linearization.
pub fn assemble_matrix(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
    frame: &TangentFrame,
) -> Result<DMatrix<f64>> {
    let dim = frame.dim();
    if dim > DENSE_CAP {
        return Err(Error::TooLarge {
            size: dim,
            cap: DENSE_CAP,
        });
    }
    if frame.grid_id() != m.grid_id() || frame.len() != m.len() {
        return Err(Error::GridMismatch {
            expected: m.grid_id(),
            found: frame.grid_id(),
        });
    }
    let lin = Linearization::new(m, g, p, k)?;
    let cells = g.cells();
    let n = m.len();
    let columns: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let (cj, b) = frame.basis(j);
            let mut u = vec![[0.0; 3]; n];
            u[cj] = b;
            // H[e_j] straight from the interaction blocks
            let pj = cells[cj];
            let hu: Vec<Vec3> = cells
                .iter()
                .map(|pi| {
                    let off = std::array::from_fn(|a| pi[a] as isize - pj[a] as isize);
                    let nb = k.block(off);
                    std::array::from_fn(|r| -(nb[r][0] * b[0] + nb[r][1] * b[1] + nb[r][2] * b[2]))
                })
                .collect();
            frame.coords(&lin.apply_with_stray(&u, &hu))
        })
        .collect();
    Ok(DMatrix::from_fn(dim, dim, |i, j| columns[j][i]))
}

/// Eigenvalues of a dense real matrix, sorted by real then imaginary part.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let dim = a.nrows();
    if dim > DENSE_CAP {
        return Err(Error::TooLarge {
            size: dim,
            cap: DENSE_CAP,
        });
    }
    let max_entry = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !max_entry.is_finite() {
        return Err(Error::Eigen { dim, max_entry });
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 1000 * dim.max(1))
        .ok_or(Error::Eigen { dim, max_entry })?;
    let mut ev: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().cloned().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(ev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub min_abs_real: f64,
    /// `min |Re mu|` over eigenvalues with `|Im mu| >= 1e-6`.
    pub min_abs_real_nonzero_im: f64,
    pub dimension: usize,
    pub eta: f64,
    pub alpha: f64,
    pub clearance_tol: f64,
}

impl SpectrumReport {
    pub fn from_eigenvalues(ev: Vec<Complex<f64>>, p: &SimParams, clearance_tol: f64) -> Self {
        let min_abs_real = ev.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
        let min_abs_real_nonzero_im = ev
            .iter()
            .filter(|z| z.im.abs() >= 1e-6)
            .map(|z| z.re.abs())
            .fold(f64::INFINITY, f64::min);
        SpectrumReport {
            dimension: ev.len(),
            eigenvalues: ev,
            min_abs_real,
            min_abs_real_nonzero_im,
            eta: p.eta,
            alpha: p.alpha,
            clearance_tol,
        }
    }

    /// No eigenvalue within `clearance_tol` of the imaginary axis.
    pub fn clear(&self) -> bool {
        self.min_abs_real > self.clearance_tol
    }

    /// The `count` eigenvalues of smallest modulus, ascending.
    pub fn smallest(&self, count: usize) -> Vec<Complex<f64>> {
        let mut v = self.eigenvalues.clone();
        v.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        v.truncate(count);
        v
    }

    pub fn min_modulus(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
    }

    /// `max_mu min_nu |mu - conj(nu)|`: zero for an exactly conjugation-closed set.
    pub fn conjugation_defect(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| {
                self.eigenvalues
                    .iter()
                    .map(|w| (z - w.conj()).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }
}

/// Full spectrum of the frame-projected linearization at `m`.
pub fn spectrum(m: &VectorField, g: &Grid, p: &SimParams, k: &DemagKernel) -> Result<SpectrumReport> {
    spectrum_with_tol(m, g, p, k, CLEARANCE_TOL)
}

pub fn spectrum_with_tol(
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
    clearance_tol: f64,
) -> Result<SpectrumReport> {
    let frame = TangentFrame::build(m)?;
    let a = assemble_matrix(m, g, p, k, &frame)?;
    Ok(SpectrumReport::from_eigenvalues(eigenvalues(&a)?, p, clearance_tol))
}

/// Closed-form 2x2 block of the mean mode about a constant state along the
/// long axis: `eta^2 [[l1 - l2, a (l3 - l1)], [a (l1 - l2), l1 - l3]]`.
pub fn mean_mode_block(eigvals: [f64; 3], eta: f64, alpha: f64) -> [[f64; 2]; 2] {
    let [l1, l2, l3] = eigvals;
    let e2 = eta * eta;
    [
        [e2 * (l1 - l2), e2 * alpha * (l3 - l1)],
        [e2 * alpha * (l1 - l2), e2 * (l1 - l3)],
    ]
}

pub fn eig2(b: [[f64; 2]; 2]) -> [Complex<f64>; 2] {
    let tr = b[0][0] + b[1][1];
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let disc = Complex::new(tr * tr / 4.0 - det, 0.0).sqrt();
    let half = Complex::new(tr / 2.0, 0.0);
    [half - disc, half + disc]
}

/// `w[u] = (0, -u_3, u_2)` cellwise, i.e. `e_1 x u`.
pub fn test_function_w(u: &VectorField) -> VectorField {
    u.with_values(u.values().iter().map(|v| [0.0, -v[2], v[1]]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityProbe {
    /// `<-L u, u>`
    pub q1: f64,
    /// `<-L u, alpha w[u]>`
    pub q2: f64,
    /// `||grad u||^2`
    pub grad_sq: f64,
    pub mean: Vec3,
}

pub fn coercivity_probe(
    u: &VectorField,
    m: &VectorField,
    g: &Grid,
    p: &SimParams,
    k: &DemagKernel,
) -> Result<CoercivityProbe> {
    require_tangent(u, m)?;
    let lu = Linearization::new(m, g, p, k)?.apply(u.values());
    let w = test_function_w(u);
    let vol = g.cell_volume();
    Ok(CoercivityProbe {
        q1: -dot_slices(&lu, u.values()) * vol,
        q2: -p.alpha * dot_slices(&lu, w.values()) * vol,
        grad_sq: grad_norm_sq(u, g)?,
        mean: mean(u),
    })
}

/// `A x` for a dense matrix and a frame-coordinate vector.
pub fn matvec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}
