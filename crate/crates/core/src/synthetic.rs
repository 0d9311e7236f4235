//! Analytic ground-truth tensor fields and ensembles.
//!
//! Tensors are built from a prescribed mode through the Lode angle
//! `θ = acos(μ)/3`: deviator eigenvalues `√(2/3)·a·cos(θ - 2πk/3)` have
//! Frobenius norm `a` and mode `cos 3θ = μ`.
//!
//! All transcendental calls go through `libm` so generated bytes do not
//! depend on the host's math library.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, ScalarField, TensorField};
use crate::stats::{mode_field, Ensemble, ModeStats};
use crate::tensor::SymTensor3;

pub type Rotation = [[f64; 3]; 3];

pub const IDENTITY_ROTATION: Rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// 32-bit words of keystream reserved per grid point (room for six normals).
const WORDS_PER_POINT: u128 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    /// `μ = 2z̃ - 1` with `z̃` the normalised z coordinate.
    LinearMode,
    /// `μ = clamp(2|x - c|/r_max - 1, -1, 1)`, `r_max` the distance from the
    /// box centre to its nearest face.
    RadialMode,
    /// `μ = value` on the slab `|z̃ - center| ≤ width/2`, slope-2 ramps outside.
    Plateau { value: f64, center: f64, width: f64 },
    /// `μ = s·(0.6 + 0.4x̃)` with `s = 2z̃ - 1`; odd under `z̃ ↦ 1 - z̃`.
    Antisymmetric,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::LinearMode => "linear-mode",
            Preset::RadialMode => "radial-mode",
            Preset::Plateau { .. } => "plateau",
            Preset::Antisymmetric => "antisymmetric",
        }
    }
}

/// How ensemble members are perturbed around the preset field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Gaussian noise on the target mode, clamped to `[-1, 1]`.
    #[default]
    Mode,
    /// Gaussian noise on each tensor component, scaled by the amplitude.
    Component,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub preset: Preset,
    pub geometry: GridGeometry,
    /// Intrinsic Z-Y-X Euler angles in radians.
    pub orientation: [f64; 3],
    pub amplitude: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(preset: Preset, geometry: GridGeometry) -> Self {
        SyntheticSpec {
            preset,
            geometry,
            orientation: [0.3, -0.2, 0.5],
            amplitude: 1.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        if let Preset::Plateau { value, center, width } = self.preset {
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::param(format!("plateau value {value} outside [-1, 1]")));
            }
            if !(width >= 0.0 && width.is_finite() && center.is_finite()) {
                return Err(Error::param("plateau width must be >= 0 and center finite"));
            }
        }
        Ok(())
    }

    pub fn rotation(&self) -> Rotation {
        rotation_from_euler(self.orientation)
    }
}

/// `Rz(a)·Ry(b)·Rx(c)`.
pub fn rotation_from_euler([a, b, c]: [f64; 3]) -> Rotation {
    let (sa, ca) = (libm::sin(a), libm::cos(a));
    let (sb, cb) = (libm::sin(b), libm::cos(b));
    let (sc, cc) = (libm::sin(c), libm::cos(c));
    [
        [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
        [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
        [-sb, cb * sc, cb * cc],
    ]
}

/// Traceless tensor with mode `mu`, deviator norm `amplitude` and
/// eigenvectors along the columns of `rotation`.
pub fn tensor_with_mode(mu: f64, rotation: &Rotation, amplitude: f64) -> Result<SymTensor3> {
    if !(-1.0..=1.0).contains(&mu) {
        return Err(Error::param(format!("mode {mu} outside [-1, 1]")));
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::param(format!(
            "amplitude must be positive, got {amplitude}"
        )));
    }
    let theta = libm::acos(mu) / 3.0;
    let scale = libm::sqrt(2.0 / 3.0) * amplitude;
    let e: [f64; 3] = std::array::from_fn(|k| scale * libm::cos(theta - 2.0 * PI * k as f64 / 3.0));
    let diag = SymTensor3::diag(e[0], e[1], e[2]);
    Ok(diag.rotated(rotation))
}

/// `(2k - (n-1)) / (n-1)`: maps grid index `k` onto `[-1, 1]` so that
/// `k ↦ n-1-k` flips the sign exactly.
fn signed_coordinate(k: usize, n: usize) -> f64 {
    let span = (n - 1) as i64;
    (2 * k as i64 - span) as f64 / span as f64
}

/// Preset mode at grid point `(i, j, k)`.
pub fn preset_mode(preset: &Preset, g: &GridGeometry, [i, j, k]: [usize; 3]) -> f64 {
    let [nx, _, nz] = g.dims;
    match *preset {
        Preset::LinearMode => signed_coordinate(k, nz),
        Preset::RadialMode => {
            let p = g.point(i, j, k);
            let ext = g.extent();
            let r_max = 0.5 * ext.iter().copied().fold(f64::INFINITY, f64::min);
            let r2: f64 = (0..3)
                .map(|a| {
                    let c = g.origin[a] + 0.5 * ext[a];
                    (p[a] - c) * (p[a] - c)
                })
                .sum();
            (2.0 * libm::sqrt(r2) / r_max - 1.0).clamp(-1.0, 1.0)
        }
        Preset::Plateau { value, center, width } => {
            let z = k as f64 / (nz - 1) as f64;
            let lo = center - 0.5 * width;
            let hi = center + 0.5 * width;
            if (lo..=hi).contains(&z) {
                value
            } else {
                (value + 2.0 * (z - z.clamp(lo, hi))).clamp(-1.0, 1.0)
            }
        }
        Preset::Antisymmetric => {
            let x = i as f64 / (nx - 1) as f64;
            signed_coordinate(k, nz) * (0.6 + 0.4 * x)
        }
    }
}

/// The preset's mode as a scalar field (analytic, no tensor round-trip).
pub fn preset_mode_field(spec: &SyntheticSpec) -> ScalarField {
    let g = spec.geometry;
    let values = (0..g.point_count())
        .map(|n| preset_mode(&spec.preset, &g, g.ijk(n)))
        .collect();
    ScalarField {
        geometry: g,
        values,
        valid: vec![true; g.point_count()],
    }
}

pub fn gen_field(spec: &SyntheticSpec) -> Result<TensorField> {
    gen_member(spec, None)
}

pub fn gen_ensemble(spec: &SyntheticSpec, members: usize, noise_sigma: f64) -> Result<Ensemble> {
    gen_ensemble_with(spec, members, noise_sigma, NoiseModel::Mode)
}

pub fn gen_ensemble_with(
    spec: &SyntheticSpec,
    members: usize,
    noise_sigma: f64,
    noise: NoiseModel,
) -> Result<Ensemble> {
    if members == 0 {
        return Err(Error::param("member count must be at least 1"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::param(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let fields = (0..members)
        .map(|m| {
            if noise_sigma == 0.0 {
                gen_member(spec, None)
            } else {
                gen_member(spec, Some((m as u64, noise_sigma, noise)))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(fields)
}

fn gen_member(spec: &SyntheticSpec, noise: Option<(u64, f64, NoiseModel)>) -> Result<TensorField> {
    spec.validate()?;
    let g = spec.geometry;
    let rot = spec.rotation();
    let base = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = (0..g.point_count())
        .into_par_iter()
        .map(|n| {
            let target = preset_mode(&spec.preset, &g, g.ijk(n));
            match noise {
                None => tensor_with_mode(target, &rot, spec.amplitude),
                Some((member, sigma, model)) => {
                    let mut draws = PointNoise::new(&base, member, n as u64);
                    match model {
                        NoiseModel::Mode => {
                            let mu = (target + sigma * draws.normal()).clamp(-1.0, 1.0);
                            tensor_with_mode(mu, &rot, spec.amplitude)
                        }
                        NoiseModel::Component => {
                            let t = tensor_with_mode(target, &rot, spec.amplitude)?;
                            let mut c = t.to_array();
                            for v in &mut c {
                                *v += sigma * spec.amplitude * draws.normal();
                            }
                            Ok(SymTensor3::from_array(c))
                        }
                    }
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    TensorField::new(g, values)
}

/// Standard normals for one (member, point) pair, read from a fixed window
/// of the ChaCha keystream so the result does not depend on evaluation order.
struct PointNoise {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl PointNoise {
    fn new(base: &ChaCha8Rng, member: u64, point: u64) -> Self {
        let mut rng = base.clone();
        rng.set_stream(member);
        rng.set_word_pos(point as u128 * WORDS_PER_POINT);
        PointNoise { rng, spare: None }
    }

    /// Box–Muller.
    fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - unit_interval(self.rng.next_u64());
        let u2 = unit_interval(self.rng.next_u64());
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let phi = 2.0 * PI * u2;
        self.spare = Some(r * libm::sin(phi));
        r * libm::cos(phi)
    }
}

/// Uniform in `[0, 1)` from the top 53 bits.
fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stats with the preset's tensor field as mean, its exact mode as mean
/// mode, and a constant standard deviation: `f` is then known in closed form.
pub fn analytic_stats(spec: &SyntheticSpec, sigma: f64) -> Result<ModeStats> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("sigma must be >= 0, got {sigma}")));
    }
    let mean_tensor = gen_field(spec)?;
    let mean_mode = mode_field(&mean_tensor);
    let mut stddev = ScalarField::constant(spec.geometry, sigma);
    stddev.valid.clone_from(&mean_mode.valid);
    Ok(ModeStats {
        mean_tensor,
        mean_mode,
        stddev,
    })
}
