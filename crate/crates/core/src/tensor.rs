//! Symmetric 3×3 tensor algebra and the mode invariant.
//!
//! The mode of a tensor `T` with deviator `A = T - tr(T)/3 I` is
//! `3√6 det(A) / ‖A‖³`, where `‖·‖` is the full-matrix Frobenius norm.
//! It lies in `[-1, 1]`: `+1` for linear degenerate tensors (two equal minor
//! eigenvalues), `-1` for planar degenerate ones and `0` for neutral tensors.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Overshoot beyond ±1 that is attributed to rounding and clamped away.
pub const MODE_CLAMP_TOLERANCE: f64 = 1e-9;

/// Relative size of the deviator below which a tensor counts as isotropic.
pub const ISOTROPIC_RELATIVE_CUTOFF: f64 = 1e-12;

const ISOTROPIC_ABSOLUTE_FLOOR: f64 = 1e-300;

/// `1 - r²` below which the trigonometric eigen-solver hands over to Jacobi.
const DISCRIMINANT_CUTOFF: f64 = 1e-14;

/// A symmetric 3×3 tensor stored by its six unique components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub xz: f64,
    pub yz: f64,
}

/// Mode of a tensor, or `Undefined` for (numerically) isotropic input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeValue {
    Defined(f64),
    Undefined,
}

impl ModeValue {
    pub fn value(self) -> Option<f64> {
        match self {
            ModeValue::Defined(v) => Some(v),
            ModeValue::Undefined => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, ModeValue::Defined(_))
    }

    fn from_unclamped(raw: f64) -> Result<Self> {
        if !(raw.abs() <= 1.0 + MODE_CLAMP_TOLERANCE) {
            return Err(Error::NumericalRange(raw));
        }
        Ok(ModeValue::Defined(raw.clamp(-1.0, 1.0)))
    }
}

impl SymTensor3 {
    pub const ZERO: SymTensor3 = SymTensor3 {
        xx: 0.0,
        yy: 0.0,
        zz: 0.0,
        xy: 0.0,
        xz: 0.0,
        yz: 0.0,
    };

    pub const IDENTITY: SymTensor3 = SymTensor3 {
        xx: 1.0,
        yy: 1.0,
        zz: 1.0,
        xy: 0.0,
        xz: 0.0,
        yz: 0.0,
    };

    pub const fn new(xx: f64, yy: f64, zz: f64, xy: f64, xz: f64, yz: f64) -> Self {
        SymTensor3 {
            xx,
            yy,
            zz,
            xy,
            xz,
            yz,
        }
    }

    pub const fn diag(a: f64, b: f64, c: f64) -> Self {
        SymTensor3::new(a, b, c, 0.0, 0.0, 0.0)
    }

    /// Components in storage order `xx, yy, zz, xy, xz, yz`.
    pub fn to_array(&self) -> [f64; 6] {
        [self.xx, self.yy, self.zz, self.xy, self.xz, self.yz]
    }

    pub fn from_array(c: [f64; 6]) -> Self {
        SymTensor3::new(c[0], c[1], c[2], c[3], c[4], c[5])
    }

    /// Symmetric part `(M + Mᵀ)/2` of an arbitrary 3×3 matrix.
    pub fn from_matrix_symmetrized(m: &[[f64; 3]; 3]) -> Self {
        SymTensor3::new(
            m[0][0],
            m[1][1],
            m[2][2],
            0.5 * (m[0][1] + m[1][0]),
            0.5 * (m[0][2] + m[2][0]),
            0.5 * (m[1][2] + m[2][1]),
        )
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.xx, self.xy, self.xz],
            [self.xy, self.yy, self.yz],
            [self.xz, self.yz, self.zz],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    /// Traceless part `T - tr(T)/3 · I`.
    pub fn deviatoric(&self) -> SymTensor3 {
        let mean = self.trace() / 3.0;
        SymTensor3 {
            xx: self.xx - mean,
            yy: self.yy - mean,
            zz: self.zz - mean,
            ..*self
        }
    }

    /// Full-matrix Frobenius norm; off-diagonal entries count twice.
    pub fn frob_norm(&self) -> f64 {
        let d = self.xx * self.xx + self.yy * self.yy + self.zz * self.zz;
        let o = self.xy * self.xy + self.xz * self.xz + self.yz * self.yz;
        (d + 2.0 * o).sqrt()
    }

    pub fn determinant(&self) -> f64 {
        let SymTensor3 {
            xx,
            yy,
            zz,
            xy,
            xz,
            yz,
        } = *self;
        xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz)
    }

    /// `R T Rᵀ` for a rotation (or any) matrix `R`.
    pub fn rotated(&self, r: &[[f64; 3]; 3]) -> SymTensor3 {
        let t = self.to_matrix();
        let mut rt = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rt[i][j] = (0..3).map(|k| r[i][k] * t[k][j]).sum();
            }
        }
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| rt[i][k] * r[j][k]).sum();
            }
        }
        SymTensor3::from_matrix_symmetrized(&out)
    }

    /// The mode invariant `3√6 det(A)/‖A‖³` of the deviator `A`.
    ///
    /// The deviator is normalised before taking the determinant, so huge
    /// tensors do not overflow `‖A‖³`.
    pub fn mode(&self) -> Result<ModeValue> {
        let dev = self.deviatoric();
        let norm = dev.frob_norm();
        if norm < isotropic_cutoff(self.frob_norm()) {
            return Ok(ModeValue::Undefined);
        }
        let unit = dev * norm.recip();
        ModeValue::from_unclamped(3.0 * 6f64.sqrt() * unit.determinant())
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        eigenvalues_sym3(self)
    }
}

fn isotropic_cutoff(magnitude: f64) -> f64 {
    (ISOTROPIC_RELATIVE_CUTOFF * magnitude).max(ISOTROPIC_ABSOLUTE_FLOOR)
}

impl Add for SymTensor3 {
    type Output = SymTensor3;
    fn add(self, o: SymTensor3) -> SymTensor3 {
        SymTensor3::new(
            self.xx + o.xx,
            self.yy + o.yy,
            self.zz + o.zz,
            self.xy + o.xy,
            self.xz + o.xz,
            self.yz + o.yz,
        )
    }
}

impl Sub for SymTensor3 {
    type Output = SymTensor3;
    fn sub(self, o: SymTensor3) -> SymTensor3 {
        self + (-o)
    }
}

impl Neg for SymTensor3 {
    type Output = SymTensor3;
    fn neg(self) -> SymTensor3 {
        self * -1.0
    }
}

impl Mul<f64> for SymTensor3 {
    type Output = SymTensor3;
    fn mul(self, s: f64) -> SymTensor3 {
        SymTensor3::new(
            self.xx * s,
            self.yy * s,
            self.zz * s,
            self.xy * s,
            self.xz * s,
            self.yz * s,
        )
    }
}

/// Mode computed from eigenvalues instead of the determinant of the deviator.
///
/// Independent of [`SymTensor3::mode`]: it only uses the fact that the
/// determinant is the product of the eigenvalues.
pub fn mode_from_eigenvalues(l1: f64, l2: f64, l3: f64) -> Result<ModeValue> {
    let mean = (l1 + l2 + l3) / 3.0;
    let (e1, e2, e3) = (l1 - mean, l2 - mean, l3 - mean);
    let norm = (e1 * e1 + e2 * e2 + e3 * e3).sqrt();
    let magnitude = (l1 * l1 + l2 * l2 + l3 * l3).sqrt();
    if norm < isotropic_cutoff(magnitude) {
        return Ok(ModeValue::Undefined);
    }
    let (u1, u2, u3) = (e1 / norm, e2 / norm, e3 / norm);
    ModeValue::from_unclamped(3.0 * 6f64.sqrt() * u1 * u2 * u3)
}

/// Eigenvalues of a symmetric 3×3 tensor, sorted descending.
///
/// Trigonometric closed form; near repeated roots (where `acos` loses
/// accuracy) the cyclic Jacobi method takes over.
pub fn eigenvalues_sym3(t: &SymTensor3) -> [f64; 3] {
    let q = t.trace() / 3.0;
    let b = SymTensor3 {
        xx: t.xx - q,
        yy: t.yy - q,
        zz: t.zz - q,
        ..*t
    };
    let p = (b.frob_norm().powi(2) / 6.0).sqrt();
    if p < ISOTROPIC_ABSOLUTE_FLOOR {
        return [q, q, q];
    }
    let r = ((b * p.recip()).determinant() / 2.0).clamp(-1.0, 1.0);
    if 1.0 - r * r < DISCRIMINANT_CUTOFF {
        return jacobi_eigenvalues(t);
    }
    let phi = r.acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let l2 = 3.0 * q - l1 - l3;
    sort_desc([l1, l2, l3])
}

fn sort_desc(mut v: [f64; 3]) -> [f64; 3] {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Cyclic Jacobi rotations until the off-diagonal part vanishes.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigenvalues(t: &SymTensor3) -> [f64; 3] {
    let mut a = t.to_matrix();
    let scale = t.frob_norm();
    for _sweep in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off.sqrt() <= 1e-17 * scale {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let tan = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let tan = if theta == 0.0 { 1.0 } else { tan };
            let c = (tan * tan + 1.0).sqrt().recip();
            let s = tan * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
        }
    }
    sort_desc([a[0][0], a[1][1], a[2][2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn trace_examples() {
        assert_eq!(SymTensor3::IDENTITY.trace(), 3.0);
        assert_eq!(SymTensor3::diag(1.0, 0.0, -1.0).trace(), 0.0);
        assert_eq!(SymTensor3::diag(2.0, -1.0, -1.0).trace(), 0.0);
    }

    #[test]
    fn deviatoric_examples() {
        assert_eq!(SymTensor3::diag(3.0, 3.0, 3.0).deviatoric(), SymTensor3::ZERO);
        assert_eq!(
            SymTensor3::diag(2.0, -1.0, -1.0).deviatoric(),
            SymTensor3::diag(2.0, -1.0, -1.0)
        );
        assert_eq!(
            SymTensor3::diag(4.0, 1.0, 1.0).deviatoric(),
            SymTensor3::diag(2.0, -1.0, -1.0)
        );
    }

    #[test]
    fn norm_and_determinant_examples() {
        assert!(close(
            SymTensor3::diag(2.0, -1.0, -1.0).frob_norm(),
            6f64.sqrt(),
            1e-15
        ));
        assert_eq!(SymTensor3::ZERO.frob_norm(), 0.0);
        let xy = SymTensor3::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        assert!(close(xy.frob_norm(), 2f64.sqrt(), 1e-15));

        assert_eq!(SymTensor3::diag(2.0, -1.0, -1.0).determinant(), 2.0);
        assert_eq!(SymTensor3::IDENTITY.determinant(), 1.0);
        assert_eq!(SymTensor3::diag(1.0, 0.0, -1.0).determinant(), 0.0);
    }

    #[test]
    fn mode_of_canonical_tensors() {
        let linear = SymTensor3::diag(2.0, -1.0, -1.0).mode().unwrap();
        let planar = SymTensor3::diag(1.0, 1.0, -2.0).mode().unwrap();
        let neutral = SymTensor3::diag(1.0, 0.0, -1.0).mode().unwrap();
        assert!(close(linear.value().unwrap(), 1.0, 1e-15));
        assert!(close(planar.value().unwrap(), -1.0, 1e-15));
        assert!(close(neutral.value().unwrap(), 0.0, 1e-15));
        assert_eq!(
            SymTensor3::diag(5.0, 5.0, 5.0).mode().unwrap(),
            ModeValue::Undefined
        );
    }

    #[test]
    fn isotropic_cutoff_is_scale_free() {
        let t = SymTensor3::diag(1.0, 1.0, 1.0 + 1e-13);
        for s in [1e-100, 1e-3, 1.0, 1e5, 1e100] {
            assert_eq!((t * s).mode().unwrap(), ModeValue::Undefined, "scale {s}");
        }
        let u = SymTensor3::diag(1.0, 1.0, 1.0 + 1e-9);
        for s in [1e-100, 1.0, 1e100] {
            assert!((u * s).mode().unwrap().is_defined(), "scale {s}");
        }
    }

    #[test]
    fn non_finite_input_is_a_range_error() {
        let t = SymTensor3::new(f64::NAN, 0.0, 1.0, 0.0, 0.0, 0.0);
        assert!(matches!(t.mode(), Err(Error::NumericalRange(_))));
        let inf = SymTensor3::diag(f64::INFINITY, 0.0, 0.0);
        assert!(matches!(inf.mode(), Err(Error::NumericalRange(_))));
    }

    #[test]
    fn mode_from_eigenvalues_examples() {
        let m = mode_from_eigenvalues(2.0, -1.0, -1.0).unwrap().value().unwrap();
        assert!(close(m, 1.0, 1e-15));
        assert_eq!(
            mode_from_eigenvalues(4.2, 4.2, 4.2).unwrap(),
            ModeValue::Undefined
        );
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(SymTensor3::diag(1.0, 2.0, 3.0).eigenvalues(), [3.0, 2.0, 1.0]);
        assert_eq!(SymTensor3::IDENTITY.eigenvalues(), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn eigenvalues_of_rotated_diagonal() {
        // rotation about (1,2,2)/3 by 0.7 rad
        let (ux, uy, uz) = (1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0);
        let (s, c) = 0.7f64.sin_cos();
        let r = [
            [
                c + ux * ux * (1.0 - c),
                ux * uy * (1.0 - c) - uz * s,
                ux * uz * (1.0 - c) + uy * s,
            ],
            [
                uy * ux * (1.0 - c) + uz * s,
                c + uy * uy * (1.0 - c),
                uy * uz * (1.0 - c) - ux * s,
            ],
            [
                uz * ux * (1.0 - c) - uy * s,
                uz * uy * (1.0 - c) + ux * s,
                c + uz * uz * (1.0 - c),
            ],
        ];
        let t = SymTensor3::diag(3.0, 2.0, 1.0).rotated(&r);
        assert!(t.xy.abs() > 0.1);
        let ev = t.eigenvalues();
        for (got, want) in ev.iter().zip([3.0, 2.0, 1.0]) {
            assert!(close(*got, want, 1e-9), "{ev:?}");
        }
    }

    #[test]
    fn repeated_roots_use_jacobi_path() {
        let (s, c) = 0.3f64.sin_cos();
        let r = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let t = SymTensor3::diag(2.0, -1.0, -1.0).rotated(&r);
        let ev = t.eigenvalues();
        for (got, want) in ev.iter().zip([2.0, -1.0, -1.0]) {
            assert!(close(*got, want, 1e-12), "{ev:?}");
        }
        let j = jacobi_eigenvalues(&SymTensor3::new(1.0, 2.0, 3.0, 0.5, -0.25, 0.125));
        let k = eigenvalues_sym3(&SymTensor3::new(1.0, 2.0, 3.0, 0.5, -0.25, 0.125));
        for (a, b) in j.iter().zip(k) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn deviator_is_idempotent() {
        let t = SymTensor3::new(3.0, -7.5, 2.25, 1.0, -4.0, 0.5);
        let d = t.deviatoric();
        assert!(d.trace().abs() <= 1e-12 * t.trace().abs().max(1.0));
        let dd = d.deviatoric();
        for (a, b) in d.to_array().iter().zip(dd.to_array()) {
            assert!(close(*a, b, 1e-14));
        }
    }
}
