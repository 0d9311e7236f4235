//! Uncertain mode-surface features: the (enhanced) mean surface, the mode
//! shell and the probability band.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, Vec3};
use crate::isosurface::marching_cubes;
use crate::mesh::{add, cross, dot, scaled, sub, TriMesh};
use crate::stats::{check_eps, check_target, mode_field, probability_field, ModeStats};

pub const ATTR_MODE_STDDEV: &str = "mode_stddev";
pub const ATTR_SHELL_D: &str = "shell_d";
pub const ATTR_PROBABILITY: &str = "probability";
pub const ATTR_MEAN_MODE: &str = "mean_mode";

/// Steepness of the shell sigmoid.
const SHELL_STEEPNESS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSurfaceParams {
    pub t: f64,
    /// World units of halfwidth per unit of mode standard deviation.
    pub thickness_scale: f64,
    pub thickness_min: f64,
    pub thickness_max: f64,
}

impl MeanSurfaceParams {
    pub fn new(t: f64) -> Self {
        MeanSurfaceParams {
            t,
            thickness_scale: 1.0,
            thickness_min: 0.0,
            thickness_max: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_target(self.t)?;
        for (name, v) in [
            ("thickness_scale", self.thickness_scale),
            ("thickness_min", self.thickness_min),
        ] {
            check_eps(name, v)?;
        }
        if !(self.thickness_max >= self.thickness_min) {
            return Err(Error::param(format!(
                "thickness_max {} below thickness_min {}",
                self.thickness_max, self.thickness_min
            )));
        }
        Ok(())
    }

    /// Halfwidth for a local standard deviation; undefined samples get the
    /// minimum.
    pub fn halfwidth(&self, sigma: f64) -> f64 {
        if sigma.is_nan() {
            return self.thickness_min;
        }
        (self.thickness_scale * sigma).clamp(self.thickness_min, self.thickness_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellParams {
    pub t: f64,
    /// Offset step along the normal, world units.
    pub delta: f64,
    /// Multiplier on the sigmoid factor; offsets range over
    /// `(0, 2·offset_scale·delta)`.
    pub offset_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandParams {
    pub t: f64,
    pub eps_l: f64,
    pub eps_u: f64,
    pub p: f64,
}

impl BandParams {
    pub fn validate(&self) -> Result<()> {
        check_target(self.t)?;
        check_eps("eps_l", self.eps_l)?;
        check_eps("eps_u", self.eps_u)?;
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::param(format!("probability {} outside (0, 1)", self.p)));
        }
        if self.t - self.eps_l > 1.0 || self.t + self.eps_u < -1.0 {
            return Err(Error::param("mode interval does not meet [-1, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degeneracy {
    /// Mode near +1.
    Linear,
    /// Mode near -1.
    Planar,
}

impl Degeneracy {
    /// Band parameters covering `[1 - margin, 1]` or `[-1, -1 + margin]`.
    pub fn band(self, margin: f64, p: f64) -> Result<BandParams> {
        if !(margin > 0.0 && margin <= 1.0) {
            return Err(Error::param(format!("margin {margin} outside (0, 1]")));
        }
        Ok(match self {
            Degeneracy::Linear => BandParams {
                t: 1.0 - margin,
                eps_l: 0.0,
                eps_u: margin,
                p,
            },
            Degeneracy::Planar => BandParams {
                t: -1.0 + margin,
                eps_l: margin,
                eps_u: 0.0,
                p,
            },
        })
    }
}

fn sample_or_nan(f: &ScalarField, positions: &[Vec3]) -> Vec<f64> {
    positions
        .par_iter()
        .map(|&p| f.sample(p).unwrap_or(f64::NAN))
        .collect()
}

/// The `t`-mode level set of the mean tensor field, carrying the local mode
/// standard deviation as `mode_stddev` (NaN where it is undefined).
pub fn mean_surface(s: &ModeStats, params: &MeanSurfaceParams) -> Result<TriMesh> {
    check_target(params.t)?;
    let modes = mode_field(&s.mean_tensor);
    let mut mesh = marching_cubes(&modes, params.t);
    let sd = sample_or_nan(&s.stddev, &mesh.positions);
    mesh.set_attribute(ATTR_MODE_STDDEV, sd)?;
    Ok(mesh)
}

/// Result of [`thicken`]: the band mesh plus the vertices whose halfwidth was
/// reduced by the fold-over guard.
#[derive(Debug, Clone)]
pub struct Thickened {
    pub mesh: TriMesh,
    pub clamped: Vec<u32>,
}

/// Offset every vertex by `±h·n`, flip the inner copy and stitch boundary
/// loops with a rim. Output vertices: outer copy first, then inner copy.
pub fn thicken(m: &TriMesh, halfwidth: &[f64]) -> Result<Thickened> {
    let n = m.vertex_count();
    if halfwidth.len() != n {
        return Err(Error::param(format!(
            "{} halfwidths for {n} vertices",
            halfwidth.len()
        )));
    }
    if let Some(h) = halfwidth.iter().find(|h| !(**h >= 0.0 && h.is_finite())) {
        return Err(Error::param(format!("halfwidth {h} is not a finite value >= 0")));
    }

    let (h, clamped) = fold_guard(m, halfwidth);
    if !clamped.is_empty() {
        log::info!(
            "halfwidth reduced at {} vertices to keep offset faces from folding over",
            clamped.len()
        );
    }

    let mut positions = Vec::with_capacity(2 * n);
    let mut normals = Vec::with_capacity(2 * n);
    for (i, (&p, &nrm)) in m.positions.iter().zip(&m.normals).enumerate() {
        positions.push(add(p, scaled(nrm, h[i])));
        normals.push(nrm);
    }
    for (i, (&p, &nrm)) in m.positions.iter().zip(&m.normals).enumerate() {
        positions.push(add(p, scaled(nrm, -h[i])));
        normals.push(scaled(nrm, -1.0));
    }
    let off = n as u32;
    let mut triangles = Vec::with_capacity(2 * m.triangle_count());
    triangles.extend_from_slice(&m.triangles);
    triangles.extend(m.triangles.iter().map(|&[a, b, c]| [a + off, c + off, b + off]));
    for (a, b) in m.boundary_edges() {
        if h[a as usize] == 0.0 && h[b as usize] == 0.0 {
            continue;
        }
        // outer edge a→b is matched by b→a here, inner b'→a' by a'→b'
        triangles.push([b, a, a + off]);
        triangles.push([b, a + off, b + off]);
    }

    let attributes = m
        .attributes
        .iter()
        .map(|(k, v)| {
            let mut both = v.clone();
            both.extend_from_slice(v);
            (k.clone(), both)
        })
        .collect();
    Ok(Thickened {
        mesh: TriMesh {
            positions,
            normals,
            triangles,
            attributes,
        },
        clamped,
    })
}

/// Mean surface thickened by `clamp(scale·σ, min, max)` at each vertex.
pub fn enhanced_mean_surface(s: &ModeStats, params: &MeanSurfaceParams) -> Result<Thickened> {
    params.validate()?;
    let base = mean_surface(s, params)?;
    let h: Vec<f64> = base
        .attribute(ATTR_MODE_STDDEV)
        .unwrap_or_default()
        .iter()
        .map(|&sd| params.halfwidth(sd))
        .collect();
    thicken(&base, &h)
}

/// True if offsetting triangle `tri` by `sign·h` along the vertex normals
/// flips its orientation. Zero-area input faces never count.
fn folds(m: &TriMesh, tri: [u32; 3], h: &[f64], sign: f64) -> bool {
    let [a, b, c] = tri.map(|i| i as usize);
    let before = m.face_normal_of(a, b, c);
    if dot(before, before) == 0.0 {
        return false;
    }
    let moved = |i: usize| add(m.positions[i], scaled(m.normals[i], sign * h[i]));
    let (pa, pb, pc) = (moved(a), moved(b), moved(c));
    dot(before, cross(sub(pb, pa), sub(pc, pa))) <= 0.0
}

/// Halve the halfwidth at the corners of every offset face that would fold
/// over until none does; returns the guarded halfwidths and the vertices
/// that were reduced.
fn fold_guard(m: &TriMesh, halfwidth: &[f64]) -> (Vec<f64>, Vec<u32>) {
    const MAX_ROUNDS: usize = 64;
    let mut h = halfwidth.to_vec();
    let mut reduced = vec![false; h.len()];
    for round in 0..=MAX_ROUNDS {
        let mut changed = false;
        for &tri in &m.triangles {
            if folds(m, tri, &h, 1.0) || folds(m, tri, &h, -1.0) {
                for i in tri.map(|i| i as usize) {
                    if h[i] > 0.0 {
                        h[i] = if round == MAX_ROUNDS { 0.0 } else { 0.5 * h[i] };
                        reduced[i] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let clamped = (0..h.len() as u32).filter(|&i| reduced[i as usize]).collect();
    (h, clamped)
}

/// `2 / (1 + e^(-10 d))`: 1 at `d = 0`, in `(0, 2)`, increasing in `d`.
pub fn shell_factor(d: f64) -> f64 {
    2.0 / (1.0 + (-SHELL_STEEPNESS * d).exp())
}

#[derive(Debug, Clone)]
pub struct ModeShell {
    pub base: TriMesh,
    pub forward: TriMesh,
    pub backward: TriMesh,
    /// Vertices left on the base surface because an offset sample was
    /// undefined, per direction.
    pub frozen_forward: usize,
    pub frozen_backward: usize,
}

impl ModeShell {
    pub fn frozen(&self) -> usize {
        self.frozen_forward + self.frozen_backward
    }
}

fn validate_shell(s: &ModeStats, params: &ShellParams) -> Result<()> {
    check_target(params.t)?;
    let ext = s.mean_mode.geometry.extent();
    let shortest = ext.iter().copied().fold(f64::INFINITY, f64::min);
    if !(params.delta > 0.0 && params.delta <= 0.5 * shortest) {
        return Err(Error::param(format!(
            "delta {} must lie in (0, {}] (half the shortest grid extent)",
            params.delta,
            0.5 * shortest
        )));
    }
    if !(params.offset_scale > 0.0 && params.offset_scale.is_finite()) {
        return Err(Error::param(format!(
            "offset_scale must be positive, got {}",
            params.offset_scale
        )));
    }
    Ok(())
}

/// Mean surface plus two offset surfaces. For each vertex `p0` with normal
/// `n` and each direction `pc = p0 ± δn`, the mean mode decides how far the
/// offset moves: `d = |μ̄(p0) - t| - |μ̄(pc) - t|` and
/// `p̃ = p0 + offset_scale · factor(d) · (pc - p0)`.
pub fn mode_shell(s: &ModeStats, params: &ShellParams) -> Result<ModeShell> {
    validate_shell(s, params)?;
    let base = mean_surface(s, &MeanSurfaceParams::new(params.t))?;
    let offset = |sign: f64| -> Result<(TriMesh, usize)> {
        let moved: Vec<(Vec3, f64, bool)> = base
            .positions
            .par_iter()
            .zip(&base.normals)
            .map(|(&p0, &n)| {
                let pc = add(p0, scaled(n, sign * params.delta));
                match (s.mean_mode.sample(p0), s.mean_mode.sample(pc)) {
                    (Some(m0), Some(mc)) => {
                        let d = (m0 - params.t).abs() - (mc - params.t).abs();
                        let k = params.offset_scale * shell_factor(d);
                        (add(p0, scaled(sub(pc, p0), k)), d, false)
                    }
                    _ => (p0, 0.0, true),
                }
            })
            .collect();
        let frozen = moved.iter().filter(|m| m.2).count();
        let mut mesh = TriMesh {
            positions: moved.iter().map(|m| m.0).collect(),
            normals: base.normals.clone(),
            triangles: base.triangles.clone(),
            attributes: base.attributes.clone(),
        };
        mesh.set_attribute(ATTR_SHELL_D, moved.iter().map(|m| m.1).collect())?;
        Ok((mesh, frozen))
    };
    let (forward, frozen_forward) = offset(1.0)?;
    let (backward, frozen_backward) = offset(-1.0)?;
    Ok(ModeShell {
        base,
        forward,
        backward,
        frozen_forward,
        frozen_backward,
    })
}

/// Level set `f = p` of the probability field, with normals toward
/// increasing probability.
pub fn probability_band(s: &ModeStats, params: &BandParams) -> Result<TriMesh> {
    params.validate()?;
    let f = probability_field(s, params.t, params.eps_l, params.eps_u)?;
    probability_band_of(&f, s, params.p)
}

/// As [`probability_band`] on a precomputed probability field.
pub fn probability_band_of(f: &ScalarField, s: &ModeStats, p: f64) -> Result<TriMesh> {
    let mut mesh = marching_cubes(f, p);
    let n = mesh.vertex_count();
    mesh.set_attribute(ATTR_PROBABILITY, vec![p; n])?;
    let mm = sample_or_nan(&s.mean_mode, &mesh.positions);
    mesh.set_attribute(ATTR_MEAN_MODE, mm)?;
    Ok(mesh)
}

pub fn degenerate_band(s: &ModeStats, which: Degeneracy, margin: f64, p: f64) -> Result<TriMesh> {
    probability_band(s, &which.band(margin, p)?)
}
