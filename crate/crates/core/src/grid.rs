//! Structured-grid volumes of tensors and scalars.
//!
//! Points are stored x-fastest: `index = i + nx * (j + ny * k)`.

use crate::error::{Error, Result};
use crate::tensor::SymTensor3;

pub type Vec3 = [f64; 3];

/// Local cell coordinates closer than this to an integer snap onto the grid
/// plane, so stored values are reproduced exactly at grid points.
const GRID_SNAP: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub dims: [usize; 3],
    pub origin: Vec3,
    pub spacing: Vec3,
}

impl GridGeometry {
    pub fn new(dims: [usize; 3], origin: Vec3, spacing: Vec3) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::Geometry(format!(
                "every dimension must be at least 2, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Geometry(format!(
                "spacing must be positive and finite, got {spacing:?}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Geometry(format!("origin must be finite, got {origin:?}")));
        }
        dims[0]
            .checked_mul(dims[1])
            .and_then(|n| n.checked_mul(dims[2]))
            .ok_or_else(|| Error::Geometry(format!("point count overflows for {dims:?}")))?;
        Ok(GridGeometry {
            dims,
            origin,
            spacing,
        })
    }

    /// Grid spanning the unit cube `[0,1]³` with `n` points per axis.
    pub fn unit_cube(n: usize) -> Result<Self> {
        let h = 1.0 / (n.max(2) - 1) as f64;
        GridGeometry::new([n, n, n], [0.0; 3], [h; 3])
    }

    pub fn point_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn cell_count(&self) -> usize {
        (self.dims[0] - 1) * (self.dims[1] - 1) * (self.dims[2] - 1)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn ijk(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let rest = index / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    pub fn upper_corner(&self) -> Vec3 {
        self.point(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn extent(&self) -> Vec3 {
        std::array::from_fn(|a| (self.dims[a] - 1) as f64 * self.spacing[a])
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Locate `x` as (cell index, fractional offset) per axis. `None` outside
    /// the bounding box.
    pub fn locate(&self, x: Vec3) -> Option<([usize; 3], Vec3)> {
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let mut u = (x[a] - self.origin[a]) / self.spacing[a];
            if !u.is_finite() {
                return None;
            }
            let upper = (n - 1) as f64;
            if (u - u.round()).abs() < GRID_SNAP * upper.max(1.0) {
                u = u.round();
            }
            if u < 0.0 || u > upper {
                return None;
            }
            let c = (u.floor() as usize).min(n - 2);
            cell[a] = c;
            frac[a] = u - c as f64;
        }
        Some((cell, frac))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub geometry: GridGeometry,
    pub values: Vec<SymTensor3>,
}

impl TensorField {
    pub fn new(geometry: GridGeometry, values: Vec<SymTensor3>) -> Result<Self> {
        if values.len() != geometry.point_count() {
            return Err(Error::Geometry(format!(
                "{} tensors for {} grid points",
                values.len(),
                geometry.point_count()
            )));
        }
        Ok(TensorField { geometry, values })
    }

    pub fn constant(geometry: GridGeometry, value: SymTensor3) -> Self {
        TensorField {
            geometry,
            values: vec![value; geometry.point_count()],
        }
    }

    pub fn from_fn(geometry: GridGeometry, f: impl Fn(Vec3) -> SymTensor3) -> Self {
        let values = (0..geometry.point_count())
            .map(|n| {
                let [i, j, k] = geometry.ijk(n);
                f(geometry.point(i, j, k))
            })
            .collect();
        TensorField { geometry, values }
    }

    /// Componentwise trilinear interpolation.
    pub fn sample(&self, x: Vec3) -> Option<SymTensor3> {
        let (cell, frac) = self.geometry.locate(x)?;
        trilinear(&self.geometry, cell, frac, |n| Some(self.values[n]), lerp_tensor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ScalarField {
    pub fn new(geometry: GridGeometry, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = geometry.point_count();
        if values.len() != n || valid.len() != n {
            return Err(Error::Geometry(format!(
                "{} values / {} mask entries for {n} grid points",
                values.len(),
                valid.len()
            )));
        }
        Ok(ScalarField {
            geometry,
            values,
            valid,
        })
    }

    /// All points valid.
    pub fn from_values(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        ScalarField::new(geometry, values, valid)
    }

    pub fn constant(geometry: GridGeometry, value: f64) -> Self {
        let n = geometry.point_count();
        ScalarField {
            geometry,
            values: vec![value; n],
            valid: vec![true; n],
        }
    }

    pub fn from_fn(geometry: GridGeometry, f: impl Fn(Vec3) -> f64) -> Self {
        let values: Vec<f64> = (0..geometry.point_count())
            .map(|n| {
                let [i, j, k] = geometry.ijk(n);
                f(geometry.point(i, j, k))
            })
            .collect();
        let valid = vec![true; values.len()];
        ScalarField {
            geometry,
            values,
            valid,
        }
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// `(min, max)` over valid points; `None` when nothing is valid.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        self.valid[index].then(|| self.values[index])
    }

    /// Trilinear interpolation; `None` outside the box or next to an invalid
    /// corner.
    pub fn sample(&self, x: Vec3) -> Option<f64> {
        let (cell, frac) = self.geometry.locate(x)?;
        trilinear(&self.geometry, cell, frac, |n| self.get(n), lerp)
    }

    /// Central-difference gradient of the trilinear interpolant with step
    /// half a cell per axis, one-sided where the stencil leaves the grid.
    pub fn gradient(&self, x: Vec3) -> Option<Vec3> {
        let center = self.sample(x)?;
        let mut grad = [0.0; 3];
        for a in 0..3 {
            let h = 0.5 * self.geometry.spacing[a];
            let mut fwd = x;
            fwd[a] += h;
            let mut bwd = x;
            bwd[a] -= h;
            let up = self.geometry.locate(fwd).map(|_| self.sample(fwd));
            let down = self.geometry.locate(bwd).map(|_| self.sample(bwd));
            grad[a] = match (up, down) {
                (Some(u), Some(d)) => (u? - d?) / (2.0 * h),
                (Some(u), None) => (u? - center) / h,
                (None, Some(d)) => (center - d?) / h,
                (None, None) => return None,
            };
        }
        Some(grad)
    }
}

/// Nested linear interpolation over the 8 corners of `cell`; `get` returns
/// `None` for invalid corners, which poisons the result.
#[inline]
fn trilinear<T: Copy>(
    g: &GridGeometry,
    cell: [usize; 3],
    frac: Vec3,
    get: impl Fn(usize) -> Option<T>,
    lerp: impl Fn(T, T, f64) -> T,
) -> Option<T> {
    let [i, j, k] = cell;
    let mut c = [[[None; 2]; 2]; 2];
    for (dz, plane) in c.iter_mut().enumerate() {
        for (dy, row) in plane.iter_mut().enumerate() {
            for (dx, v) in row.iter_mut().enumerate() {
                *v = Some(get(g.index(i + dx, j + dy, k + dz))?);
            }
        }
    }
    let c = c.map(|plane| plane.map(|row| row.map(|v| v.unwrap())));
    let x = |row: [T; 2]| lerp(row[0], row[1], frac[0]);
    let y = |plane: [[T; 2]; 2]| lerp(x(plane[0]), x(plane[1]), frac[1]);
    Some(lerp(y(c[0]), y(c[1]), frac[2]))
}

/// `a + t(b - a)`, returning `b` itself at `t = 1` so grid values are
/// reproduced exactly at both ends of a cell.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 1.0 {
        b
    } else {
        a + t * (b - a)
    }
}

fn lerp_tensor(a: SymTensor3, b: SymTensor3, t: f64) -> SymTensor3 {
    let (a, b) = (a.to_array(), b.to_array());
    SymTensor3::from_array(std::array::from_fn(|n| lerp(a[n], b[n], t)))
}

/// Corners with zero weight still count for the validity check.
pub fn sample_trilinear_scalar(f: &ScalarField, x: Vec3) -> Option<f64> {
    f.sample(x)
}

pub fn sample_trilinear_tensor(f: &TensorField, x: Vec3) -> Option<SymTensor3> {
    f.sample(x)
}

pub fn gradient_central(f: &ScalarField, x: Vec3) -> Option<Vec3> {
    f.gradient(x)
}
