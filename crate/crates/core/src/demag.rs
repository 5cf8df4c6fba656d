//! Stray field of a magnetization on the masked grid.
//!
//! The field is the discrete convolution `H_i = -sum_j N(i - j) m_j` with the
//! cell-averaged cuboid interaction tensors of Newell, Williams and Dunlop.
//! The fast path convolves in Fourier space on a zero-padded box; the direct
//! double sum is kept as an exact reference.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{dot_slices, Grid, VectorField};
use crate::vec3::Vec3;

/// Default gap tolerance for [`shape_condition`].
pub const DEFAULT_GAP_TOL: f64 = 1e-3;

// Component order of packed symmetric blocks.
const XX: usize = 0;
const YY: usize = 1;
const ZZ: usize = 2;
const XY: usize = 3;
const XZ: usize = 4;
const YZ: usize = 5;

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

#[inline]
fn asinh_ratio(num: f64, den_sq: f64) -> f64 {
    if den_sq <= 0.0 {
        0.0
    } else {
        (num / den_sq.sqrt()).asinh()
    }
}

#[inline]
fn atan_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        (num / den).atan()
    }
}

/// Newell's `f`, generating the diagonal components.
fn newell_f(x: f64, y: f64, z: f64) -> f64 {
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let r = (x2 + y2 + z2).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    let mut t = [0.0; 4];
    if y > 0.0 {
        t[0] = 0.5 * y * (z2 - x2) * asinh_ratio(y, x2 + z2);
    }
    if z > 0.0 {
        t[1] = 0.5 * z * (y2 - x2) * asinh_ratio(z, x2 + y2);
    }
    if x > 0.0 && y > 0.0 && z > 0.0 {
        t[2] = -x * y * z * atan_ratio(y * z, x * r);
    }
    t[3] = (2.0 * x2 - y2 - z2) * r / 6.0;
    compensated_sum(t)
}

/// Newell's `g`, generating the off-diagonal components. Odd in `x` and `y`,
/// even in `z`.
fn newell_g(x: f64, y: f64, z: f64) -> f64 {
    let sign = x.signum() * y.signum();
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    let (x2, y2, z2) = (x * x, y * y, z * z);
    let r = (x2 + y2 + z2).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    let mut t = [0.0; 7];
    if z > 0.0 {
        t[0] = x * y * z * asinh_ratio(z, x2 + y2);
    }
    if x > 0.0 {
        t[1] = y / 6.0 * (3.0 * z2 - y2) * asinh_ratio(x, y2 + z2);
    }
    if y > 0.0 {
        t[2] = x / 6.0 * (3.0 * z2 - x2) * asinh_ratio(y, x2 + z2);
    }
    if z > 0.0 {
        t[3] = -z * z2 / 6.0 * atan_ratio(x * y, z * r);
    }
    if y > 0.0 {
        t[4] = -0.5 * z * y2 * atan_ratio(x * z, y * r);
    }
    if x > 0.0 {
        t[5] = -0.5 * z * x2 * atan_ratio(y * z, x * r);
    }
    t[6] = -x * y * r / 3.0;
    sign * compensated_sum(t)
}

/// Applies the `(-1, 2, -1)^3` second-difference stencil to `func` around
/// `(x, y, z)` with cell sizes `(dx, dy, dz)` and normalizes.
fn newell_stencil(func: fn(f64, f64, f64) -> f64, p: [f64; 3], d: [f64; 3]) -> f64 {
    const W: [(f64, f64); 3] = [(-1.0, -1.0), (0.0, 2.0), (1.0, -1.0)];
    let mut terms = Vec::with_capacity(27);
    for &(sa, wa) in &W {
        for &(sb, wb) in &W {
            for &(sc, wc) in &W {
                let w = wa * wb * wc;
                terms.push(w * func(p[0] + sa * d[0], p[1] + sb * d[1], p[2] + sc * d[2]));
            }
        }
    }
    compensated_sum(terms) / (4.0 * PI * d[0] * d[1] * d[2])
}

/// Cell-pair demag block for offset `r` (physical units) between two cuboid
/// cells of size `d`, packed as `[xx, yy, zz, xy, xz, yz]`.
pub fn newell_block(r: Vec3, d: [f64; 3]) -> [f64; 6] {
    let [x, y, z] = r;
    let [dx, dy, dz] = d;
    [
        newell_stencil(newell_f, [x, y, z], [dx, dy, dz]),
        newell_stencil(newell_f, [y, x, z], [dy, dx, dz]),
        newell_stencil(newell_f, [z, y, x], [dz, dy, dx]),
        newell_stencil(newell_g, [x, y, z], [dx, dy, dz]),
        newell_stencil(newell_g, [x, z, y], [dx, dz, dy]),
        newell_stencil(newell_g, [y, z, x], [dy, dz, dx]),
    ]
}

pub fn unpack_block(b: [f64; 6]) -> [[f64; 3]; 3] {
    [
        [b[XX], b[XY], b[XZ]],
        [b[XY], b[YY], b[YZ]],
        [b[XZ], b[YZ], b[ZZ]],
    ]
}

/// Parity of each packed component under negation of one offset axis.
const ODD_IN: [[bool; 3]; 6] = [
    [false, false, false],
    [false, false, false],
    [false, false, false],
    [true, true, false],
    [true, false, true],
    [false, true, true],
];

/// Interaction tensors over the index-difference lattice of one grid, plus
/// their spectra on the zero-padded box. Immutable; safe to share.
pub struct DemagKernel {
    grid_id: u64,
    n: [usize; 3],
    padded: [usize; 3],
    cell_volume: f64,
    box_index: Vec<usize>,
    cells: Vec<[usize; 3]>,
    /// Blocks for non-negative offsets, indexed `i + n0 * (j + n1 * k)`.
    quadrant: Vec<[f64; 6]>,
    spectrum: [Vec<Complex<f64>>; 6],
    plans: Plans,
}

struct Plans {
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for DemagKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DemagKernel")
            .field("grid_id", &self.grid_id)
            .field("n", &self.n)
            .field("padded", &self.padded)
            .finish_non_exhaustive()
    }
}

impl DemagKernel {
    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Block for a signed index offset.
    pub fn block(&self, k: [isize; 3]) -> [[f64; 3]; 3] {
        unpack_block(self.packed_block(k))
    }

    fn packed_block(&self, k: [isize; 3]) -> [f64; 6] {
        let a = k.map(|v| v.unsigned_abs());
        assert!(
            a[0] < self.n[0] && a[1] < self.n[1] && a[2] < self.n[2],
            "offset {k:?} outside kernel range"
        );
        let mut b = self.quadrant[a[0] + self.n[0] * (a[1] + self.n[1] * a[2])];
        for (c, odd) in ODD_IN.iter().enumerate() {
            let mut s = 1.0;
            for axis in 0..3 {
                if odd[axis] && k[axis] < 0 {
                    s = -s;
                }
            }
            b[c] *= s;
        }
        b
    }

    fn check(&self, m: &VectorField) -> Result<()> {
        if m.grid_id() != self.grid_id || m.len() != self.box_index.len() {
            return Err(Error::GridMismatch {
                expected: self.grid_id,
                found: m.grid_id(),
            });
        }
        Ok(())
    }
}

/// Builds the kernel for `g` from the closed-form cell-pair integrals.
pub fn build_kernel(g: &Grid) -> DemagKernel {
    let n = g.n();
    let h = g.h();
    let padded = n.map(|v| 2 * v);
    let quadrant: Vec<[f64; 6]> = (0..n[0] * n[1] * n[2])
        .into_par_iter()
        .map(|idx| {
            let i = idx % n[0];
            let j = (idx / n[0]) % n[1];
            let k = idx / (n[0] * n[1]);
            newell_block([i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]], h)
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let plans = Plans {
        forward: padded.map(|p| planner.plan_fft_forward(p)),
        inverse: padded.map(|p| planner.plan_fft_inverse(p)),
    };

    let total = padded[0] * padded[1] * padded[2];
    let mut kernel = DemagKernel {
        grid_id: g.id(),
        n,
        padded,
        cell_volume: g.cell_volume(),
        box_index: g.cells().iter().map(|&ijk| g.box_index(ijk)).collect(),
        cells: g.cells().to_vec(),
        quadrant,
        spectrum: std::array::from_fn(|_| Vec::new()),
        plans,
    };

    // Wrap offsets onto the padded box; the Nyquist plane (offset n) is
    // never reached by a pair of cells and stays zero.
    let wrap = |p: usize, axis: usize| -> Option<isize> {
        let nn = n[axis] as isize;
        let p = p as isize;
        if p < nn {
            Some(p)
        } else if p > nn {
            Some(p - 2 * nn)
        } else {
            None
        }
    };
    let mut comps: [Vec<Complex<f64>>; 6] = std::array::from_fn(|_| vec![Complex::default(); total]);
    for pk in 0..padded[2] {
        for pj in 0..padded[1] {
            for pi in 0..padded[0] {
                let (Some(a), Some(b), Some(c)) = (wrap(pi, 0), wrap(pj, 1), wrap(pk, 2)) else {
                    continue;
                };
                let blk = kernel.packed_block([a, b, c]);
                let idx = pi + padded[0] * (pj + padded[1] * pk);
                for comp in 0..6 {
                    comps[comp][idx] = Complex::new(blk[comp], 0.0);
                }
            }
        }
    }
    for c in comps.iter_mut() {
        fft3(c, padded, &kernel.plans.forward);
    }
    kernel.spectrum = comps;
    kernel
}

/// In-place 3D transform, one axis at a time.
fn fft3(data: &mut [Complex<f64>], dims: [usize; 3], plans: &[Arc<dyn Fft<f64>>; 3]) {
    let [p0, p1, _] = dims;
    // x lines are contiguous
    data.par_chunks_mut(p0).for_each(|line| plans[0].process(line));
    // y and z lines: gather, transform, scatter
    for axis in 1..3 {
        let len = dims[axis];
        let stride = if axis == 1 { p0 } else { p0 * p1 };
        let count = data.len() / len;
        let mut lines = vec![Complex::default(); data.len()];
        for l in 0..count {
            let base = if axis == 1 {
                let i = l % p0;
                let k = l / p0;
                i + p0 * p1 * k
            } else {
                l
            };
            for t in 0..len {
                lines[l * len + t] = data[base + t * stride];
            }
        }
        lines
            .par_chunks_mut(len)
            .for_each(|line| plans[axis].process(line));
        for l in 0..count {
            let base = if axis == 1 {
                let i = l % p0;
                let k = l / p0;
                i + p0 * p1 * k
            } else {
                l
            };
            for t in 0..len {
                data[base + t * stride] = lines[l * len + t];
            }
        }
    }
}

pub(crate) fn stray_field_into(k: &DemagKernel, m: &[Vec3], out: &mut [Vec3]) {
    let [p0, p1, p2] = k.padded;
    let total = p0 * p1 * p2;
    let pad_index = |ijk: [usize; 3]| ijk[0] + p0 * (ijk[1] + p1 * ijk[2]);

    let mut mf: [Vec<Complex<f64>>; 3] = std::array::from_fn(|_| vec![Complex::default(); total]);
    for (c, &ijk) in k.cells.iter().enumerate() {
        let idx = pad_index(ijk);
        for a in 0..3 {
            mf[a][idx] = Complex::new(m[c][a], 0.0);
        }
    }
    mf.par_iter_mut()
        .for_each(|buf| fft3(buf, k.padded, &k.plans.forward));

    let s = &k.spectrum;
    let mut hf: [Vec<Complex<f64>>; 3] = std::array::from_fn(|_| vec![Complex::default(); total]);
    {
        let [hx, hy, hz] = &mut hf;
        hx.par_iter_mut()
            .zip(hy.par_iter_mut())
            .zip(hz.par_iter_mut())
            .enumerate()
            .for_each(|(i, ((hx, hy), hz))| {
                let (mx, my, mz) = (mf[0][i], mf[1][i], mf[2][i]);
                *hx = -(s[XX][i] * mx + s[XY][i] * my + s[XZ][i] * mz);
                *hy = -(s[XY][i] * mx + s[YY][i] * my + s[YZ][i] * mz);
                *hz = -(s[XZ][i] * mx + s[YZ][i] * my + s[ZZ][i] * mz);
            });
    }
    hf.par_iter_mut()
        .for_each(|buf| fft3(buf, k.padded, &k.plans.inverse));

    let norm = 1.0 / total as f64;
    for (c, &ijk) in k.cells.iter().enumerate() {
        let idx = pad_index(ijk);
        out[c] = [hf[0][idx].re * norm, hf[1][idx].re * norm, hf[2][idx].re * norm];
    }
}

/// Stray field `H[m]` restricted to the particle (spectral convolution).
pub fn stray_field(m: &VectorField, k: &DemagKernel) -> Result<VectorField> {
    k.check(m)?;
    let mut out = vec![[0.0; 3]; m.len()];
    stray_field_into(k, m.values(), &mut out);
    Ok(m.with_values(out))
}

/// Stray field by the direct `O(N^2)` double sum over cell pairs.
pub fn stray_field_direct(m: &VectorField, k: &DemagKernel) -> Result<VectorField> {
    k.check(m)?;
    let cells = &k.cells;
    let mv = m.values();
    let out: Vec<Vec3> = cells
        .par_iter()
        .map(|&ci| {
            let mut acc = [0.0; 3];
            for (j, &cj) in cells.iter().enumerate() {
                let off = [
                    ci[0] as isize - cj[0] as isize,
                    ci[1] as isize - cj[1] as isize,
                    ci[2] as isize - cj[2] as isize,
                ];
                let b = k.block(off);
                for a in 0..3 {
                    acc[a] -= b[a][0] * mv[j][0] + b[a][1] * mv[j][1] + b[a][2] * mv[j][2];
                }
            }
            acc
        })
        .collect();
    Ok(m.with_values(out))
}

/// `-<H[m], m>`, the discrete `int_{R^3} |H[m]|^2`.
pub fn stray_energy(m: &VectorField, k: &DemagKernel) -> Result<f64> {
    let h = stray_field(m, k)?;
    Ok(-dot_slices(h.values(), m.values()) * k.cell_volume)
}

/// The symmetric demagnetizing tensor with eigenpairs sorted ascending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemagTensor {
    pub tensor: [[f64; 3]; 3],
    pub eigvals: [f64; 3],
    /// Columns are unit eigenvectors, `eigvecs[a]` belongs to `eigvals[a]`.
    pub eigvecs: [Vec3; 3],
}

impl DemagTensor {
    pub fn from_matrix(t: [[f64; 3]; 3]) -> DemagTensor {
        let mut sym = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                sym[a][b] = 0.5 * (t[a][b] + t[b][a]);
            }
        }
        let m = Matrix3::from_fn(|a, b| sym[a][b]);
        let eig = SymmetricEigen::new(m);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigvals = order.map(|i| eig.eigenvalues[i]);
        let eigvecs = order.map(|i| {
            let v = eig.eigenvectors.column(i);
            let mut v = [v[0], v[1], v[2]];
            // sign convention: largest-magnitude component positive
            let big = (0..3)
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
                .unwrap();
            if v[big] < 0.0 {
                v = v.map(|x| -x);
            }
            v
        });
        DemagTensor {
            tensor: sym,
            eigvals,
            eigvecs,
        }
    }

    pub fn trace(&self) -> f64 {
        self.tensor[0][0] + self.tensor[1][1] + self.tensor[2][2]
    }

    /// `|trace - 1|`
    pub fn trace_defect(&self) -> f64 {
        (self.trace() - 1.0).abs()
    }

    /// Eigenvector of the smallest eigenvalue.
    pub fn long_axis(&self) -> Vec3 {
        self.eigvecs[0]
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let t = &self.tensor;
        [
            t[0][0] * v[0] + t[0][1] * v[1] + t[0][2] * v[2],
            t[1][0] * v[0] + t[1][1] * v[1] + t[1][2] * v[2],
            t[2][0] * v[0] + t[2][1] * v[1] + t[2][2] * v[2],
        ]
    }
}

/// `D u = -(1/|Omega|) int_Omega H[u]` assembled from the three constant unit
/// fields.
pub fn demag_tensor(g: &Grid, k: &DemagKernel) -> Result<DemagTensor> {
    if g.id() != k.grid_id {
        return Err(Error::GridMismatch {
            expected: k.grid_id,
            found: g.id(),
        });
    }
    let mut t = [[0.0; 3]; 3];
    for b in 0..3 {
        let mut e = [0.0; 3];
        e[b] = 1.0;
        let h = stray_field(&VectorField::constant(g, e), k)?;
        let avg = crate::grid::mean(&h);
        for a in 0..3 {
            t[a][b] = -avg[a];
        }
    }
    Ok(DemagTensor::from_matrix(t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeVerdict {
    pub satisfied: bool,
    /// `lambda2 - lambda1`
    pub margin: f64,
    pub long_axis: Vec3,
}

/// Strict long axis test: the smallest eigenvalue must be simple by more than
/// `gap_tol`.
pub fn shape_condition(d: &DemagTensor, gap_tol: f64) -> ShapeVerdict {
    let margin = d.eigvals[1] - d.eigvals[0];
    ShapeVerdict {
        satisfied: margin > gap_tol,
        margin,
        long_axis: d.long_axis(),
    }
}
