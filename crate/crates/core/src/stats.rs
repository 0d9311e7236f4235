//! Ensemble container and per-point mode statistics.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TensorField};
use crate::tensor::ModeValue;

/// Standard deviations below this are treated as a point mass.
pub const POINT_MASS_SIGMA: f64 = 1e-12;

/// `m ≥ 1` tensor fields on one shared grid.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<TensorField>,
}

impl Ensemble {
    pub fn new(members: Vec<TensorField>) -> Result<Self> {
        let e = Ensemble { members };
        e.check_geometry()?;
        Ok(e)
    }

    fn check_geometry(&self) -> Result<()> {
        let first = self
            .members
            .first()
            .ok_or_else(|| Error::param("an ensemble needs at least one member"))?;
        for (i, m) in self.members.iter().enumerate().skip(1) {
            if m.geometry != first.geometry {
                return Err(Error::GeometryMismatch(format!(
                    "member {i} has {:?}, member 0 has {:?}",
                    m.geometry, first.geometry
                )));
            }
        }
        for (i, m) in self.members.iter().enumerate() {
            if m.values.len() != m.geometry.point_count() {
                return Err(Error::GeometryMismatch(format!(
                    "member {i} stores {} tensors for {} points",
                    m.values.len(),
                    m.geometry.point_count()
                )));
            }
        }
        Ok(())
    }

    pub fn members(&self) -> &[TensorField] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn geometry(&self) -> crate::grid::GridGeometry {
        self.members[0].geometry
    }

    pub fn into_members(self) -> Vec<TensorField> {
        self.members
    }
}

/// Mean tensor field plus the per-point mean and population standard
/// deviation of member modes.
#[derive(Debug, Clone)]
pub struct ModeStats {
    pub mean_tensor: TensorField,
    pub mean_mode: ScalarField,
    pub stddev: ScalarField,
}

pub fn mean_tensor_field(e: &Ensemble) -> Result<TensorField> {
    e.check_geometry()?;
    let members = e.members();
    let inv_m = 1.0 / members.len() as f64;
    let values = (0..e.geometry().point_count())
        .into_par_iter()
        .map(|n| {
            let sum = members[1..]
                .iter()
                .fold(members[0].values[n], |acc, f| acc + f.values[n]);
            sum * inv_m
        })
        .collect();
    Ok(TensorField {
        geometry: e.geometry(),
        values,
    })
}

/// Per-point mode; isotropic (and numerically broken) points are masked.
pub fn mode_field(f: &TensorField) -> ScalarField {
    let (values, valid): (Vec<f64>, Vec<bool>) = f
        .values
        .par_iter()
        .map(|t| match t.mode() {
            Ok(ModeValue::Defined(m)) => (m, true),
            _ => (f64::NAN, false),
        })
        .unzip();
    ScalarField {
        geometry: f.geometry,
        values,
        valid,
    }
}

pub fn mode_stats(e: &Ensemble) -> Result<ModeStats> {
    let mean_tensor = mean_tensor_field(e)?;
    let members = e.members();
    let m = members.len() as f64;
    let per_point: Vec<Option<(f64, f64)>> = (0..e.geometry().point_count())
        .into_par_iter()
        .map(|n| {
            let mut modes = Vec::with_capacity(members.len());
            for f in members {
                match f.values[n].mode() {
                    Ok(ModeValue::Defined(v)) => modes.push(v),
                    _ => return None,
                }
            }
            let mean = modes.iter().sum::<f64>() / m;
            let var = modes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            Some((mean, var.sqrt()))
        })
        .collect();

    let geometry = e.geometry();
    let valid: Vec<bool> = per_point.iter().map(Option::is_some).collect();
    let (mean, sd): (Vec<f64>, Vec<f64>) = per_point
        .iter()
        .map(|p| p.unwrap_or((f64::NAN, f64::NAN)))
        .unzip();
    Ok(ModeStats {
        mean_tensor,
        mean_mode: ScalarField::new(geometry, mean, valid.clone())?,
        stddev: ScalarField::new(geometry, sd, valid)?,
    })
}

pub(crate) fn check_target(t: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::param(format!("target mode {t} outside [-1, 1]")));
    }
    Ok(())
}

pub(crate) fn check_eps(name: &str, eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::param(format!(
            "{name} must be a finite value >= 0, got {eps}"
        )));
    }
    Ok(())
}

/// Gaussian probability that the mode lies in `[t - eps_l, t + eps_u]`.
#[inline]
pub fn interval_probability(mean: f64, sd: f64, t: f64, eps_l: f64, eps_u: f64) -> f64 {
    let lo = t - eps_l;
    let hi = t + eps_u;
    if sd < POINT_MASS_SIGMA {
        return if lo <= mean && mean <= hi { 1.0 } else { 0.0 };
    }
    let z_l = (lo - mean) / sd;
    let z_u = (hi - mean) / sd;
    let f = 0.5
        * (libm::erf(z_u * std::f64::consts::FRAC_1_SQRT_2)
            - libm::erf(z_l * std::f64::consts::FRAC_1_SQRT_2));
    f.clamp(0.0, 1.0)
}

/// Per-point probability field `f(x)`, masked where the stats are.
pub fn probability_field(s: &ModeStats, t: f64, eps_l: f64, eps_u: f64) -> Result<ScalarField> {
    check_target(t)?;
    check_eps("eps_l", eps_l)?;
    check_eps("eps_u", eps_u)?;
    let mean = &s.mean_mode;
    let sd = &s.stddev;
    let (values, valid): (Vec<f64>, Vec<bool>) = (0..mean.values.len())
        .into_par_iter()
        .map(|n| {
            if mean.valid[n] && sd.valid[n] {
                (
                    interval_probability(mean.values[n], sd.values[n], t, eps_l, eps_u),
                    true,
                )
            } else {
                (f64::NAN, false)
            }
        })
        .unzip();
    ScalarField::new(mean.geometry, values, valid)
}
