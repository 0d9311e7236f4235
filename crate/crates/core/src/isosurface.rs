//! Marching-cubes extraction of level sets from scalar fields.
//!
//! Output order depends only on the cell scan order (x fastest): vertices are
//! numbered by first use while walking triangles cell by cell, and each vertex
//! is a pure function of the grid edge it lies on. Cells are classified in
//! parallel by z-slab and merged in slab order, so the result is the same for
//! any thread count.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::grid::{GridGeometry, ScalarField, Vec3};
use crate::mc_tables::{CORNERS, EDGES, TRIANGLES};
use crate::mesh::{add, norm, scaled, TriMesh};

/// Relative (to the field's value range) shift applied to corners sitting
/// exactly on the iso value.
pub const ISO_SHIFT: f64 = 1e-12;

/// Gradients shorter than this fall back to face normals.
pub const MIN_GRADIENT: f64 = 1e-12;

/// Identifies the grid edge from point `index` to its neighbour along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey(u64);

impl EdgeKey {
    fn new(point: usize, axis: usize) -> Self {
        EdgeKey(point as u64 * 3 + axis as u64)
    }

    pub fn point(self) -> usize {
        (self.0 / 3) as usize
    }

    pub fn axis(self) -> usize {
        (self.0 % 3) as usize
    }
}

/// Marching-cubes mesh of `{f = iso}` with gradient normals; faces are wound
/// so their geometric normal points toward increasing `f`.
pub fn marching_cubes(f: &ScalarField, iso: f64) -> TriMesh {
    let (mesh, _) = marching_cubes_with_keys(f, iso);
    mesh
}

/// As [`marching_cubes`], also returning the grid edge each vertex lies on.
pub fn marching_cubes_with_keys(f: &ScalarField, iso: f64) -> (TriMesh, Vec<EdgeKey>) {
    let g = f.geometry;
    let Some((lo, hi)) = f.valid_range() else {
        return (TriMesh::default(), Vec::new());
    };
    if !iso.is_finite() {
        return (TriMesh::default(), Vec::new());
    }
    let range = hi - lo;
    let shift = if range > 0.0 {
        ISO_SHIFT * range
    } else {
        ISO_SHIFT * iso.abs().max(1.0)
    };
    let value = |n: usize| {
        let v = f.values[n];
        if v == iso {
            iso + shift
        } else {
            v
        }
    };

    let [nx, ny, nz] = g.dims;
    let slabs: Vec<Vec<[EdgeKey; 3]>> = (0..nz - 1)
        .into_par_iter()
        .map(|k| {
            let mut tris = Vec::new();
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    contour_cell(&g, f, &value, iso, [i, j, k], &mut tris);
                }
            }
            tris
        })
        .collect();

    let mut index_of: HashMap<EdgeKey, u32> = HashMap::new();
    let mut keys: Vec<EdgeKey> = Vec::new();
    let mut triangles = Vec::with_capacity(slabs.iter().map(Vec::len).sum());
    for tri in slabs.iter().flatten() {
        let ids = tri.map(|key| {
            *index_of.entry(key).or_insert_with(|| {
                keys.push(key);
                (keys.len() - 1) as u32
            })
        });
        triangles.push(ids);
    }

    let positions: Vec<Vec3> = keys
        .par_iter()
        .map(|&key| edge_crossing(&g, &value, iso, key))
        .collect();
    let mut mesh = TriMesh {
        positions,
        normals: Vec::new(),
        triangles,
        attributes: Default::default(),
    };
    mesh.normals = field_normals_vec(&mesh, f);
    (mesh, keys)
}

fn contour_cell(
    g: &GridGeometry,
    f: &ScalarField,
    value: &impl Fn(usize) -> f64,
    iso: f64,
    [i, j, k]: [usize; 3],
    out: &mut Vec<[EdgeKey; 3]>,
) {
    let mut case = 0usize;
    let mut corner_index = [0usize; 8];
    for (c, off) in CORNERS.iter().enumerate() {
        let n = g.index(i + off[0], j + off[1], k + off[2]);
        if !f.valid[n] {
            return;
        }
        corner_index[c] = n;
        if value(n) < iso {
            case |= 1 << c;
        }
    }
    if case == 0 || case == 255 {
        return;
    }
    let key_of = |edge: i8| {
        let [a, b] = EDGES[edge as usize];
        let (pa, pb) = (CORNERS[a], CORNERS[b]);
        let axis = (0..3).find(|&ax| pa[ax] != pb[ax]).unwrap_or(0);
        let low = if pa[axis] < pb[axis] {
            corner_index[a]
        } else {
            corner_index[b]
        };
        EdgeKey::new(low, axis)
    };
    for tri in TRIANGLES[case].chunks_exact(3) {
        if tri[0] < 0 {
            break;
        }
        // table winding has normals toward decreasing values; swap to flip
        out.push([key_of(tri[0]), key_of(tri[2]), key_of(tri[1])]);
    }
}

/// Inverse linear interpolation along a grid edge. Exact for the trilinear
/// interpolant, which is linear along cell edges.
fn edge_crossing(g: &GridGeometry, value: &impl Fn(usize) -> f64, iso: f64, key: EdgeKey) -> Vec3 {
    let a = key.point();
    let axis = key.axis();
    let [i, j, k] = g.ijk(a);
    let mut step = [0usize; 3];
    step[axis] = 1;
    let b = g.index(i + step[0], j + step[1], k + step[2]);
    let (va, vb) = (value(a), value(b));
    let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
    let mut p = g.point(i, j, k);
    p[axis] += t * g.spacing[axis];
    p
}

/// Replace the normals of `m` by normalised gradients of `f`, falling back to
/// area-weighted face normals where the gradient is undefined or vanishing.
pub fn field_normals(m: &TriMesh, f: &ScalarField) -> TriMesh {
    TriMesh {
        normals: field_normals_vec(m, f),
        ..m.clone()
    }
}

fn field_normals_vec(m: &TriMesh, f: &ScalarField) -> Vec<Vec3> {
    let mut normals: Vec<Option<Vec3>> = m
        .positions
        .par_iter()
        .map(|&p| {
            let grad = f.gradient(p)?;
            let len = norm(grad);
            (len >= MIN_GRADIENT && len.is_finite()).then(|| scaled(grad, 1.0 / len))
        })
        .collect();
    if normals.iter().any(Option::is_none) {
        let face = m.area_weighted_normals();
        for (n, fallback) in normals.iter_mut().zip(face) {
            if n.is_none() {
                let len = norm(fallback);
                *n = Some(if len > 0.0 && len.is_finite() {
                    scaled(fallback, 1.0 / len)
                } else {
                    [0.0, 0.0, 1.0]
                });
            }
        }
    }
    normals
        .into_iter()
        .map(|n| n.unwrap_or([0.0, 0.0, 1.0]))
        .collect()
}

/// Centroid of triangle `t`.
pub fn centroid(m: &TriMesh, t: usize) -> Vec3 {
    let [a, b, c] = m.triangles[t].map(|i| m.positions[i as usize]);
    scaled(add(add(a, b), c), 1.0 / 3.0)
}

/// Unit geometric normal of triangle `t`, or zero for degenerate faces.
pub fn unit_face_normal(m: &TriMesh, t: usize) -> Vec3 {
    let n = m.face_normal(t);
    let len = norm(n);
    if len > 0.0 {
        scaled(n, 1.0 / len)
    } else {
        [0.0; 3]
    }
}
