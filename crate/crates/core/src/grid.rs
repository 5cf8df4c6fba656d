//! Masked uniform Cartesian discretization of the particle, packed vector
//! fields over interior cells, and the discrete calculus used everywhere
//! else: the mirror-ghost Neumann Laplacian, discrete gradient densities and
//! volume-weighted inner products.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Sentinel for "no interior neighbour" in the neighbour table.
pub const NO_CELL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Cuboid,
    Ellipsoid,
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeKind::Cuboid => f.write_str("cuboid"),
            ShapeKind::Ellipsoid => f.write_str("ellipsoid"),
        }
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cuboid" | "box" => Ok(ShapeKind::Cuboid),
            "ellipsoid" => Ok(ShapeKind::Ellipsoid),
            "sphere" => Ok(ShapeKind::Ellipsoid),
            other => Err(Error::Shape(format!("unknown shape kind `{other}`"))),
        }
    }
}

/// Particle geometry before volume normalization. `aspect` holds relative
/// side lengths (cuboid) or relative semi-axes (ellipsoid).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub aspect: [f64; 3],
}

impl ShapeSpec {
    pub fn new(kind: ShapeKind, aspect: [f64; 3]) -> Result<Self> {
        let spec = ShapeSpec { kind, aspect };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sphere() -> Self {
        ShapeSpec {
            kind: ShapeKind::Ellipsoid,
            aspect: [1.0, 1.0, 1.0],
        }
    }

    pub fn prolate_spheroid() -> Self {
        ShapeSpec {
            kind: ShapeKind::Ellipsoid,
            aspect: [2.0, 1.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, &a) in self.aspect.iter().enumerate() {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Shape(format!(
                    "aspect[{axis}] = {a} must be finite and strictly positive"
                )));
            }
        }
        Ok(())
    }

    /// Extent of the bounding box after scaling the continuous shape to unit
    /// volume.
    pub fn normalized_box(&self) -> [f64; 3] {
        let prod: f64 = self.aspect.iter().product();
        match self.kind {
            ShapeKind::Cuboid => {
                let s = prod.powf(-1.0 / 3.0);
                self.aspect.map(|a| a * s)
            }
            ShapeKind::Ellipsoid => {
                let s = (3.0 / (4.0 * std::f64::consts::PI * prod)).cbrt();
                self.aspect.map(|a| 2.0 * a * s)
            }
        }
    }
}

impl fmt::Display for ShapeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{},{},{}",
            self.kind, self.aspect[0], self.aspect[1], self.aspect[2]
        )
    }
}

/// Parses `kind:a,b,c` (e.g. `ellipsoid:2,1,1`), or the bare words `sphere`
/// and `cube`.
impl FromStr for ShapeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "sphere" => return Ok(ShapeSpec::sphere()),
            "cube" => return ShapeSpec::new(ShapeKind::Cuboid, [1.0; 3]),
            _ => {}
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Shape(format!("expected `kind:a,b,c`, got `{s}`")))?;
        let kind: ShapeKind = kind.parse()?;
        let aspect = parse_triple::<f64>(rest).map_err(Error::Shape)?;
        ShapeSpec::new(kind, aspect)
    }
}

pub(crate) fn parse_triple<T: FromStr>(s: &str) -> std::result::Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got `{s}`"));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| format!("cannot parse `{p}`"))?);
    }
    let mut it = out.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

/// Uniform Cartesian grid over the bounding box of the particle with a
/// cell-center mask. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Grid {
    shape: ShapeSpec,
    n: [usize; 3],
    h: [f64; 3],
    mask: Vec<bool>,
    cells: Vec<[usize; 3]>,
    box_to_cell: Vec<u32>,
    neighbors: Vec<[u32; 6]>,
    id: u64,
}

impl Grid {
    /// Builds the masked grid. Spacings are rescaled (uniformly, never the
    /// mask) so that `interior_count * cell_volume == 1`.
    pub fn build(shape: ShapeSpec, resolution: [usize; 3]) -> Result<Grid> {
        shape.validate()?;
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::Shape(format!(
                "resolution {resolution:?} must be at least 2 along every axis"
            )));
        }
        let extent = shape.normalized_box();
        let mut h = [0.0; 3];
        for a in 0..3 {
            h[a] = extent[a] / resolution[a] as f64;
        }
        let [n0, n1, n2] = resolution;
        let total = n0 * n1 * n2;
        let mut mask = vec![false; total];
        for k in 0..n2 {
            for j in 0..n1 {
                for i in 0..n0 {
                    let inside = match shape.kind {
                        ShapeKind::Cuboid => true,
                        ShapeKind::Ellipsoid => {
                            // normalized coordinates in [-1, 1]
                            let q = [
                                (2.0 * i as f64 + 1.0) / n0 as f64 - 1.0,
                                (2.0 * j as f64 + 1.0) / n1 as f64 - 1.0,
                                (2.0 * k as f64 + 1.0) / n2 as f64 - 1.0,
                            ];
                            vec3::dot(q, q) <= 1.0
                        }
                    };
                    mask[i + n0 * (j + n1 * k)] = inside;
                }
            }
        }
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(Error::Shape(format!(
                "no cell center of {shape} falls inside the particle at resolution {resolution:?}"
            )));
        }
        let raw_volume = count as f64 * h[0] * h[1] * h[2];
        let rescale = (1.0 / raw_volume).cbrt();
        for hv in &mut h {
            *hv *= rescale;
        }
        Ok(Self::from_parts(shape, resolution, h, mask))
    }

    fn from_parts(shape: ShapeSpec, n: [usize; 3], h: [f64; 3], mask: Vec<bool>) -> Grid {
        let [n0, n1, n2] = n;
        let mut cells = Vec::new();
        let mut box_to_cell = vec![NO_CELL; mask.len()];
        for k in 0..n2 {
            for j in 0..n1 {
                for i in 0..n0 {
                    let b = i + n0 * (j + n1 * k);
                    if mask[b] {
                        box_to_cell[b] = cells.len() as u32;
                        cells.push([i, j, k]);
                    }
                }
            }
        }
        let lookup = |i: isize, j: isize, k: isize| -> u32 {
            if i < 0 || j < 0 || k < 0 || i >= n0 as isize || j >= n1 as isize || k >= n2 as isize
            {
                NO_CELL
            } else {
                box_to_cell[i as usize + n0 * (j as usize + n1 * k as usize)]
            }
        };
        let neighbors = cells
            .iter()
            .map(|&[i, j, k]| {
                let (i, j, k) = (i as isize, j as isize, k as isize);
                [
                    lookup(i - 1, j, k),
                    lookup(i + 1, j, k),
                    lookup(i, j - 1, k),
                    lookup(i, j + 1, k),
                    lookup(i, j, k - 1),
                    lookup(i, j, k + 1),
                ]
            })
            .collect();

        let mut hasher = DefaultHasher::new();
        n.hash(&mut hasher);
        for v in h {
            v.to_bits().hash(&mut hasher);
        }
        mask.hash(&mut hasher);
        let id = hasher.finish();

        Grid {
            shape,
            n,
            h,
            mask,
            cells,
            box_to_cell,
            neighbors,
            id,
        }
    }

    pub fn shape(&self) -> ShapeSpec {
        self.shape
    }
    pub fn n(&self) -> [usize; 3] {
        self.n
    }
    pub fn h(&self) -> [f64; 3] {
        self.h
    }
    pub fn h_min(&self) -> f64 {
        self.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    pub fn cell_volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }
    pub fn interior_count(&self) -> usize {
        self.cells.len()
    }
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
    pub fn id(&self) -> u64 {
        self.id
    }
    /// Box indices of the interior cells, in packing order.
    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }
    pub fn box_index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.n[0] * (ijk[1] + self.n[1] * ijk[2])
    }
    /// Packed index of the cell at box position `ijk`, if interior.
    pub fn cell_at(&self, ijk: [usize; 3]) -> Option<usize> {
        match self.box_to_cell[self.box_index(ijk)] {
            NO_CELL => None,
            c => Some(c as usize),
        }
    }
    /// Neighbour table `[x-, x+, y-, y+, z-, z+]`; [`NO_CELL`] marks a face
    /// on the particle boundary.
    pub fn neighbors(&self) -> &[[u32; 6]] {
        &self.neighbors
    }
    pub fn inv_h2(&self) -> [f64; 3] {
        self.h.map(|v| 1.0 / (v * v))
    }
    /// Physical cell-center position, with the bounding box centered at the
    /// origin.
    pub fn center(&self, cell: usize) -> Vec3 {
        let ijk = self.cells[cell];
        let mut x = [0.0; 3];
        for a in 0..3 {
            x[a] = (ijk[a] as f64 + 0.5 - 0.5 * self.n[a] as f64) * self.h[a];
        }
        x
    }
    /// Spectral radius of the discrete Laplacian stencil, `4 * sum 1/h_a^2`.
    pub fn laplacian_radius(&self) -> f64 {
        4.0 * self.inv_h2().iter().sum::<f64>()
    }

    pub fn check(&self, f: &VectorField) -> Result<()> {
        if f.grid_id != self.id || f.values.len() != self.cells.len() {
            return Err(Error::GridMismatch {
                expected: self.id,
                found: f.grid_id,
            });
        }
        Ok(())
    }
}

/// One 3-vector per interior cell, packed in mask order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    values: Vec<Vec3>,
    grid_id: u64,
    unit: bool,
}

/// Tolerance behind the sphere-valued flag.
pub const UNIT_TOL: f64 = 1e-12;

impl VectorField {
    pub fn zeros(g: &Grid) -> Self {
        Self::constant(g, [0.0; 3])
    }

    pub fn constant(g: &Grid, v: Vec3) -> Self {
        VectorField {
            values: vec![v; g.interior_count()],
            grid_id: g.id,
            unit: false,
        }
    }

    pub fn from_values(g: &Grid, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != g.interior_count() {
            return Err(Error::Usage(format!(
                "{} values for a grid with {} interior cells",
                values.len(),
                g.interior_count()
            )));
        }
        Ok(VectorField {
            values,
            grid_id: g.id,
            unit: false,
        })
    }

    pub fn from_fn(g: &Grid, mut f: impl FnMut(Vec3) -> Vec3) -> Self {
        let values = (0..g.interior_count()).map(|c| f(g.center(c))).collect();
        VectorField {
            values,
            grid_id: g.id,
            unit: false,
        }
    }

    /// Same grid, new values; the unit flag is cleared.
    pub fn with_values(&self, values: Vec<Vec3>) -> Self {
        assert_eq!(values.len(), self.values.len());
        VectorField {
            values,
            grid_id: self.grid_id,
            unit: false,
        }
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }
    /// Mutable access clears the unit flag.
    pub fn values_mut(&mut self) -> &mut [Vec3] {
        self.unit = false;
        &mut self.values
    }
    pub fn into_values(self) -> Vec<Vec3> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn grid_id(&self) -> u64 {
        self.grid_id
    }
    pub fn is_unit(&self) -> bool {
        self.unit
    }

    pub fn same_grid(&self, other: &VectorField) -> Result<()> {
        if self.grid_id != other.grid_id || self.values.len() != other.values.len() {
            return Err(Error::GridMismatch {
                expected: self.grid_id,
                found: other.grid_id,
            });
        }
        Ok(())
    }

    /// Projects every cell onto the unit sphere and sets the unit flag.
    pub fn normalize(&mut self) {
        for v in &mut self.values {
            *v = vec3::normalize(*v);
        }
        self.unit = true;
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// `max_cells ||v| - 1|`.
    pub fn unit_defect(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (vec3::norm(v) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Sets the unit flag after verifying it.
    pub fn assert_unit(&mut self) -> Result<()> {
        let defect = self.unit_defect();
        if defect > UNIT_TOL {
            return Err(Error::Constraint { defect });
        }
        self.unit = true;
        Ok(())
    }

    /// Errors unless the field is unit-flagged (or verifiably unit).
    pub fn require_unit(&self) -> Result<()> {
        if self.unit {
            return Ok(());
        }
        let defect = self.unit_defect();
        if defect > UNIT_TOL {
            return Err(Error::Constraint { defect });
        }
        Ok(())
    }

    pub fn neg(&self) -> Self {
        VectorField {
            values: self.values.iter().map(|&v| vec3::scale(-1.0, v)).collect(),
            grid_id: self.grid_id,
            unit: self.unit,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_values(self.values.iter().map(|&v| vec3::scale(s, v)).collect())
    }

    /// `self + s * x`
    pub fn axpy(&self, s: f64, x: &VectorField) -> Self {
        debug_assert_eq!(self.grid_id, x.grid_id);
        self.with_values(
            self.values
                .iter()
                .zip(&x.values)
                .map(|(&y, &xv)| vec3::axpy(s, xv, y))
                .collect(),
        )
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &VectorField) -> Self {
        self.axpy(1.0, other)
    }

    /// `max_cells |v|`
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| vec3::norm(v))
            .fold(0.0, f64::max)
    }

    /// Flat `[x0, y0, z0, x1, ...]` copy.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }
}

pub(crate) fn laplacian_into(g: &Grid, m: &[Vec3], out: &mut [Vec3]) {
    let inv = g.inv_h2();
    for (c, nb) in g.neighbors.iter().enumerate() {
        let mc = m[c];
        let mut acc = [0.0; 3];
        for (face, &j) in nb.iter().enumerate() {
            // Mirror ghost: a missing neighbour copies the cell value, so its
            // difference (and the face flux) vanishes.
            if j != NO_CELL {
                let w = inv[face / 2];
                let mj = m[j as usize];
                acc[0] += w * (mj[0] - mc[0]);
                acc[1] += w * (mj[1] - mc[1]);
                acc[2] += w * (mj[2] - mc[2]);
            }
        }
        out[c] = acc;
    }
}

/// Second-order 7-point Laplacian with homogeneous Neumann conditions via
/// mirror ghost cells.
pub fn laplacian_neumann(m: &VectorField, g: &Grid) -> Result<VectorField> {
    g.check(m)?;
    let mut out = vec![[0.0; 3]; m.len()];
    laplacian_into(g, &m.values, &mut out);
    Ok(m.with_values(out))
}

/// Pointwise discrete `grad u : grad m`, i.e. `1/2 sum_faces (u_j - u_i).(m_j - m_i) / h^2`.
///
/// With `u == m` this is the discrete `|grad m|^2`, which equals `-m . lap(m)`
/// exactly when `m` is sphere-valued.
pub(crate) fn grad_dot_into(g: &Grid, u: &[Vec3], m: &[Vec3], out: &mut [f64]) {
    let inv = g.inv_h2();
    for (c, nb) in g.neighbors.iter().enumerate() {
        let (uc, mc) = (u[c], m[c]);
        let mut acc = 0.0;
        for (face, &j) in nb.iter().enumerate() {
            if j != NO_CELL {
                let j = j as usize;
                acc += inv[face / 2] * vec3::dot(vec3::sub(u[j], uc), vec3::sub(m[j], mc));
            }
        }
        out[c] = 0.5 * acc;
    }
}

/// Pointwise discrete `|grad m|^2`.
pub fn grad_sq(m: &VectorField, g: &Grid) -> Result<Vec<f64>> {
    g.check(m)?;
    let mut out = vec![0.0; m.len()];
    grad_dot_into(g, &m.values, &m.values, &mut out);
    Ok(out)
}

/// `||grad u||_{L2}^2 = sum over interior faces |u_j - u_i|^2 / h^2 * cell_volume`.
pub fn grad_norm_sq(u: &VectorField, g: &Grid) -> Result<f64> {
    let dens = grad_sq(u, g)?;
    Ok(dens.iter().sum::<f64>() * g.cell_volume())
}

/// `max_cells |grad u|` from the pointwise density.
pub fn grad_norm_max(u: &VectorField, g: &Grid) -> Result<f64> {
    let dens = grad_sq(u, g)?;
    Ok(dens.iter().cloned().fold(0.0, f64::max).sqrt())
}

/// `sum_cells u . v * cell_volume`; sequential sum for reproducibility.
pub fn inner_l2(u: &VectorField, v: &VectorField, g: &Grid) -> Result<f64> {
    g.check(u)?;
    g.check(v)?;
    Ok(dot_slices(&u.values, &v.values) * g.cell_volume())
}

pub(crate) fn dot_slices(u: &[Vec3], v: &[Vec3]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| vec3::dot(a, b)).sum()
}

pub fn norm_l2(u: &VectorField, g: &Grid) -> Result<f64> {
    Ok(inner_l2(u, u, g)?.sqrt())
}

/// Splits `u` into its volume average and the zero-mean fluctuation.
pub fn mean_fluct_split(u: &VectorField, g: &Grid) -> Result<(Vec3, VectorField)> {
    g.check(u)?;
    let mean = mean(u);
    let fluct = u.with_values(u.values.iter().map(|&v| vec3::sub(v, mean)).collect());
    Ok((mean, fluct))
}

/// Volume average over the interior cells (cells have equal volume).
pub fn mean(u: &VectorField) -> Vec3 {
    let mut acc = [0.0; 3];
    for v in &u.values {
        acc = vec3::add(acc, *v);
    }
    vec3::scale(1.0 / u.values.len() as f64, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cube(n: usize) -> Grid {
        Grid::build(ShapeSpec::new(ShapeKind::Cuboid, [1.0; 3]).unwrap(), [n; 3]).unwrap()
    }

    #[test]
    fn unit_cube_grid() {
        let g = cube(8);
        assert!(g.mask().iter().all(|&b| b));
        assert_eq!(g.interior_count(), 512);
        assert!((g.cell_volume() - 1.0 / 512.0).abs() < 1e-15);
    }

    #[test]
    fn ellipsoid_count_matches_analytic_volume() {
        // Oracle: count cell centers inside the normalized ellipsoid directly.
        let shape = ShapeSpec::prolate_spheroid();
        let g = Grid::build(shape, [16; 3]).unwrap();
        let extent = shape.normalized_box();
        let semi = extent.map(|e| e / 2.0);
        let hraw = extent.map(|e| e / 16.0);
        let mut count = 0usize;
        for k in 0..16 {
            for j in 0..16 {
                for i in 0..16 {
                    let x = (i as f64 + 0.5) * hraw[0] - semi[0];
                    let y = (j as f64 + 0.5) * hraw[1] - semi[1];
                    let z = (k as f64 + 0.5) * hraw[2] - semi[2];
                    if (x / semi[0]).powi(2) + (y / semi[1]).powi(2) + (z / semi[2]).powi(2)
                        <= 1.0
                    {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, g.interior_count());
        let raw = count as f64 * hraw[0] * hraw[1] * hraw[2];
        assert!((0.98..=1.02).contains(&raw), "raw discrete volume {raw}");
        let disc = g.interior_count() as f64 * g.cell_volume();
        assert!((disc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aspect_proportional_resolution_gives_cubic_cells() {
        let g = Grid::build(
            ShapeSpec::new(ShapeKind::Cuboid, [2.0, 1.0, 0.5]).unwrap(),
            [16, 8, 4],
        )
        .unwrap();
        let h = g.h();
        assert!((h[0] - h[1]).abs() < 1e-14 && (h[1] - h[2]).abs() < 1e-14);
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(ShapeSpec::new(ShapeKind::Cuboid, [1.0, 0.0, 1.0]).is_err());
        assert!(ShapeSpec::new(ShapeKind::Ellipsoid, [1.0, -2.0, 1.0]).is_err());
        assert!(ShapeSpec::new(ShapeKind::Ellipsoid, [f64::NAN, 1.0, 1.0]).is_err());
        let bad = ShapeSpec {
            kind: ShapeKind::Cuboid,
            aspect: [1.0, 1.0, 0.0],
        };
        assert!(matches!(Grid::build(bad, [4; 3]), Err(Error::Shape(_))));
        assert!(Grid::build(ShapeSpec::sphere(), [1, 4, 4]).is_err());
    }

    #[test]
    fn shape_spec_parses() {
        let s: ShapeSpec = "ellipsoid:2,1,1".parse().unwrap();
        assert_eq!(s, ShapeSpec::prolate_spheroid());
        assert_eq!(s.to_string().parse::<ShapeSpec>().unwrap(), s);
        assert!("ellipsoid:2,1".parse::<ShapeSpec>().is_err());
        assert!("blob:1,1,1".parse::<ShapeSpec>().is_err());
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let g = Grid::build(ShapeSpec::prolate_spheroid(), [8; 3]).unwrap();
        let m = VectorField::constant(&g, [0.3, -0.1, 0.9]);
        let l = laplacian_neumann(&m, &g).unwrap();
        assert!(l.values().iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn laplacian_converges_on_neumann_eigenfunction() {
        // First component of m = (cos(pi x), sin(pi x), 0) on the unit cube;
        // the second one is checked away from the walls below.
        let err = |n: usize| {
            let g = cube(n);
            let f = VectorField::from_fn(&g, |x| {
                let s = x[0] + 0.5;
                [(PI * s).cos(), 0.0, 0.0]
            });
            let l = laplacian_neumann(&f, &g).unwrap();
            let mut worst: f64 = 0.0;
            for (c, v) in l.values().iter().enumerate() {
                let s = g.center(c)[0] + 0.5;
                worst = worst.max((v[0] + PI * PI * (PI * s).cos()).abs());
            }
            worst
        };
        let (e1, e2, e3) = (err(8), err(16), err(32));
        let p1 = (e1 / e2).log2();
        let p2 = (e2 / e3).log2();
        assert!(e3 < 0.1, "error {e3}");
        // cos(pi x) is even about both walls, so the mirror ghost is exact
        // and the rate is second order up to the boundary.
        assert!((p1 - 2.0).abs() < 0.1 && (p2 - 2.0).abs() < 0.1, "rates {p1} {p2}");
    }

    #[test]
    fn laplacian_interior_second_order() {
        let err = |n: usize| {
            let g = cube(n);
            let f = VectorField::from_fn(&g, |x| {
                let s = x[0] + 0.5;
                [(PI * s).cos(), (PI * s).sin(), 0.0]
            });
            let l = laplacian_neumann(&f, &g).unwrap();
            let mut worst: f64 = 0.0;
            for (c, v) in l.values().iter().enumerate() {
                let i = g.cells()[c][0];
                if i == 0 || i == n - 1 {
                    continue;
                }
                let s = g.center(c)[0] + 0.5;
                worst = worst
                    .max((v[0] + PI * PI * (PI * s).cos()).abs())
                    .max((v[1] + PI * PI * (PI * s).sin()).abs());
            }
            worst
        };
        let rate = (err(16) / err(32)).log2();
        assert!((rate - 2.0).abs() < 0.1, "interior rate {rate}");
    }

    #[test]
    fn mirror_ghost_has_zero_boundary_flux() {
        let g = Grid::build(
            ShapeSpec::new(ShapeKind::Cuboid, [1.0, 1.0, 1.0]).unwrap(),
            [2, 3, 3],
        )
        .unwrap();
        let f = VectorField::from_fn(&g, |x| [x[0].signum(), 0.0, 0.0]);
        let l = laplacian_neumann(&f, &g).unwrap();
        let inv = g.inv_h2()[0];
        for (c, v) in l.values().iter().enumerate() {
            // only the interior x-face contributes: (other - self) / h^2
            let expected = inv * (-2.0 * f.values()[c][0]);
            assert!((v[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_product_basics() {
        let g = Grid::build(ShapeSpec::prolate_spheroid(), [8; 3]).unwrap();
        let e1 = VectorField::constant(&g, [1.0, 0.0, 0.0]);
        let e2 = VectorField::constant(&g, [0.0, 1.0, 0.0]);
        assert!((inner_l2(&e1, &e1, &g).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(inner_l2(&e1, &e2, &g).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let g1 = cube(4);
        let g2 = cube(5);
        let f = VectorField::zeros(&g1);
        assert!(matches!(
            laplacian_neumann(&f, &g2),
            Err(Error::GridMismatch { .. })
        ));
        assert!(inner_l2(&f, &f, &g2).is_err());
    }

    #[test]
    fn mean_fluct_of_constant() {
        let g = cube(4);
        let c = [0.2, -0.4, 1.5];
        let (m, f) = mean_fluct_split(&VectorField::constant(&g, c), &g).unwrap();
        for a in 0..3 {
            assert!((m[a] - c[a]).abs() < 1e-15);
        }
        assert!(f.max_abs() < 1e-15);
    }

    #[test]
    fn neumann_kernel_is_constants_only() {
        // Dense eigensolve of the scalar Laplacian on small connected masks.
        for (shape, n) in [
            (ShapeSpec::new(ShapeKind::Cuboid, [1.0; 3]).unwrap(), 4),
            (ShapeSpec::prolate_spheroid(), 6),
        ] {
            let g = Grid::build(shape, [n; 3]).unwrap();
            let nc = g.interior_count();
            let mut a = nalgebra::DMatrix::<f64>::zeros(nc, nc);
            for j in 0..nc {
                let mut e = vec![[0.0; 3]; nc];
                e[j][0] = 1.0;
                let mut out = vec![[0.0; 3]; nc];
                laplacian_into(&g, &e, &mut out);
                for i in 0..nc {
                    a[(i, j)] = out[i][0];
                }
            }
            let eig = a.symmetric_eigen();
            let scale = g.laplacian_radius();
            let zeros = eig
                .eigenvalues
                .iter()
                .filter(|&&l| l.abs() < 1e-10 * scale)
                .count();
            assert_eq!(zeros, 1, "kernel dimension for {shape}");
            assert!(eig.eigenvalues.iter().all(|&l| l < 1e-10 * scale));
        }
    }
}
