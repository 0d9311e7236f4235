//! Indexed triangle mesh with per-vertex normals and named scalar channels.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Vec3;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Channel name to one value per vertex. Sorted by name so writers emit
    /// properties in a stable order.
    pub attributes: BTreeMap<String, Vec<f64>>,
}

impl TriMesh {
    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn set_attribute(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.positions.len() {
            return Err(Error::param(format!(
                "attribute {name:?} has {} values for {} vertices",
                values.len(),
                self.positions.len()
            )));
        }
        self.attributes.insert(name.to_string(), values);
        Ok(())
    }

    pub fn attribute(&self, name: &str) -> Option<&[f64]> {
        self.attributes.get(name).map(Vec::as_slice)
    }

    /// Check the structural invariants; returns a description of the first
    /// violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.positions.len();
        if self.normals.len() != n {
            return Err(format!("{} normals for {n} vertices", self.normals.len()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= n) {
                return Err(format!("triangle {t} {tri:?} indexes past {n} vertices"));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(format!("triangle {t} {tri:?} repeats a vertex"));
            }
        }
        for (i, p) in self.positions.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(format!("vertex {i} has non-finite position {p:?}"));
            }
        }
        for (i, nrm) in self.normals.iter().enumerate() {
            let len = norm(*nrm);
            if (len - 1.0).abs() > 1e-6 {
                return Err(format!("vertex {i} normal {nrm:?} has length {len}"));
            }
        }
        for (name, values) in &self.attributes {
            if values.len() != n {
                return Err(format!("attribute {name:?} has {} values", values.len()));
            }
        }
        Ok(())
    }

    /// Geometric (unnormalised) normal of triangle `t`; length is twice its area.
    pub fn face_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t].map(|i| i as usize);
        self.face_normal_of(a, b, c)
    }

    /// Geometric normal of the triangle through vertices `a`, `b`, `c`.
    pub fn face_normal_of(&self, a: usize, b: usize, c: usize) -> Vec3 {
        let (pa, pb, pc) = (self.positions[a], self.positions[b], self.positions[c]);
        cross(sub(pb, pa), sub(pc, pa))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| 0.5 * norm(self.face_normal(t)))
            .sum()
    }

    /// Area-weighted average of incident face normals, one per vertex.
    /// Isolated or zero-area neighbourhoods give the zero vector.
    pub fn area_weighted_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![[0.0; 3]; self.positions.len()];
        for t in 0..self.triangles.len() {
            let n = self.face_normal(t);
            for &i in &self.triangles[t] {
                let a = &mut acc[i as usize];
                for k in 0..3 {
                    a[k] += n[k];
                }
            }
        }
        acc
    }

    /// Directed boundary edges `(a, b)` as they appear in their only triangle.
    pub fn boundary_edges(&self) -> Vec<(u32, u32)> {
        let counts = self.edge_counts();
        let mut out = Vec::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                if counts[&undirected(a, b)] == 1 {
                    out.push((a, b));
                }
            }
        }
        out
    }

    fn edge_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut counts = HashMap::with_capacity(self.triangles.len() * 3 / 2 + 1);
        for tri in &self.triangles {
            for e in 0..3 {
                *counts.entry(undirected(tri[e], tri[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Append `other`, offsetting its indices. Attribute channels must match.
    pub fn append(&mut self, other: &TriMesh) -> Result<()> {
        if !self.positions.is_empty() || !self.attributes.is_empty() {
            let mine: Vec<_> = self.attributes.keys().collect();
            let theirs: Vec<_> = other.attributes.keys().collect();
            if mine != theirs {
                return Err(Error::param(format!(
                    "cannot merge meshes with channels {mine:?} and {theirs:?}"
                )));
            }
        }
        let offset = self.positions.len() as u32;
        self.positions.extend_from_slice(&other.positions);
        self.normals.extend_from_slice(&other.normals);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
        for (name, values) in &other.attributes {
            self.attributes
                .entry(name.clone())
                .or_default()
                .extend_from_slice(values);
        }
        Ok(())
    }
}

fn undirected(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshReport {
    pub vertex_count: usize,
    pub triangle_count: usize,
    pub edge_count: usize,
    pub boundary_edges: usize,
    pub non_manifold_edges: usize,
    pub euler_characteristic: i64,
    pub area: f64,
}

impl MeshReport {
    pub fn is_watertight(&self) -> bool {
        self.boundary_edges == 0 && self.non_manifold_edges == 0
    }
}

pub fn mesh_diagnostics(m: &TriMesh) -> MeshReport {
    let counts = m.edge_counts();
    let boundary_edges = counts.values().filter(|&&c| c == 1).count();
    let non_manifold_edges = counts.values().filter(|&&c| c > 2).count();
    MeshReport {
        vertex_count: m.vertex_count(),
        triangle_count: m.triangle_count(),
        edge_count: counts.len(),
        boundary_edges,
        non_manifold_edges,
        euler_characteristic: m.vertex_count() as i64 - counts.len() as i64 + m.triangle_count() as i64,
        area: m.area(),
    }
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn scaled(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
