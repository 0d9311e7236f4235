#![allow(dead_code)]

use rand::Rng;

/// Binary little-endian PLY as read back by a parser that shares nothing with
/// the writer.
#[derive(Debug)]
pub struct Ply {
    pub vertex_props: Vec<(String, String)>,
    /// One row per vertex; uchar properties are widened to f32.
    pub vertices: Vec<Vec<f32>>,
    pub faces: Vec<Vec<u32>>,
}

impl Ply {
    pub fn column(&self, name: &str) -> Option<Vec<f32>> {
        let k = self.vertex_props.iter().position(|(_, n)| n == name)?;
        Some(self.vertices.iter().map(|row| row[k]).collect())
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<Ply, String> {
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or("no end_header")?
        + marker.len();
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| e.to_string())?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err("missing magic".into());
    }
    if lines.next() != Some("format binary_little_endian 1.0") {
        return Err("not binary little endian".into());
    }
    let mut n_vertex = None;
    let mut n_face = None;
    let mut props = Vec::new();
    let mut current = "";
    let mut face_list = None;
    for line in lines {
        let w: Vec<&str> = line.split(' ').collect();
        match w.as_slice() {
            ["element", "vertex", n] => {
                n_vertex = Some(n.parse::<usize>().map_err(|e| e.to_string())?);
                current = "vertex";
            }
            ["element", "face", n] => {
                n_face = Some(n.parse::<usize>().map_err(|e| e.to_string())?);
                current = "face";
            }
            ["property", "list", count, index, name] if current == "face" => {
                face_list = Some((count.to_string(), index.to_string(), name.to_string()));
            }
            ["property", ty, name] if current == "vertex" => {
                props.push((ty.to_string(), name.to_string()));
            }
            ["end_header"] => {}
            _ => return Err(format!("unexpected header line {line:?}")),
        }
    }
    let (count_ty, index_ty, _) = face_list.ok_or("no face list")?;
    if count_ty != "uchar" || index_ty != "uint" {
        return Err("unexpected face list types".into());
    }
    let mut pos = end;
    let mut take = |n: usize| -> Result<&[u8], String> {
        let s = bytes.get(pos..pos + n).ok_or("truncated body")?;
        pos += n;
        Ok(s)
    };
    let mut vertices = Vec::new();
    for _ in 0..n_vertex.ok_or("no vertex element")? {
        let mut row = Vec::with_capacity(props.len());
        for (ty, _) in &props {
            row.push(match ty.as_str() {
                "float" => f32::from_le_bytes(take(4)?.try_into().unwrap()),
                "uchar" => take(1)?[0] as f32,
                other => return Err(format!("unsupported type {other}")),
            });
        }
        vertices.push(row);
    }
    let mut faces = Vec::new();
    for _ in 0..n_face.ok_or("no face element")? {
        let k = take(1)?[0] as usize;
        let mut f = Vec::with_capacity(k);
        for _ in 0..k {
            f.push(u32::from_le_bytes(take(4)?.try_into().unwrap()));
        }
        faces.push(f);
    }
    if pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - pos));
    }
    Ok(Ply {
        vertex_props: props,
        vertices,
        faces,
    })
}

/// Uniformly random rotation from a normalised Gaussian quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    use rand_distr::{Distribution, StandardNormal};
    let q: Vec<f64> = (0..4).map(|_| StandardNormal.sample(rng)).collect();
    quaternion_rotation([q[0], q[1], q[2], q[3]])
}

pub fn quaternion_rotation(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// `R A Rᵀ` computed on full matrices, independently of the library.
pub fn rotate_matrix(a: &[[f64; 3]; 3], r: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut ra = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            ra[i][j] = (0..3).map(|k| r[i][k] * a[k][j]).sum();
        }
    }
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| ra[i][k] * r[j][k]).sum();
        }
    }
    out
}

pub fn random_sym(rng: &mut impl Rng, range: f64) -> tmuq::SymTensor3 {
    let mut c = [0.0; 6];
    for v in &mut c {
        *v = rng.random_range(-range..=range);
    }
    tmuq::SymTensor3::from_array(c)
}

/// Run `f` on a dedicated pool with `n` threads.
pub fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
        .install(f)
}

pub fn sphere_field(n: usize, r: f64) -> tmuq::ScalarField {
    let g = tmuq::GridGeometry::unit_cube(n).unwrap();
    tmuq::ScalarField::from_fn(g, |p| {
        ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) + (p[2] - 0.5).powi(2)).sqrt() - r
    })
}

/// Eigenvalues by cyclic Jacobi rotations, sorted descending.
pub fn jacobi_eigenvalues(t: &tmuq::SymTensor3) -> [f64; 3] {
    let mut a = t.to_matrix();
    for _ in 0..64 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let diag = a[0][0].powi(2) + a[1][1].powi(2) + a[2][2].powi(2);
        if off <= 1e-34 * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut j = [[0.0; 3]; 3];
            for (i, row) in j.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            j[p][p] = c;
            j[q][q] = c;
            j[p][q] = s;
            j[q][p] = -s;
            // a <- jᵀ a j
            let mut aj = [[0.0; 3]; 3];
            for r in 0..3 {
                for k in 0..3 {
                    aj[r][k] = (0..3).map(|m| a[r][m] * j[m][k]).sum();
                }
            }
            for r in 0..3 {
                for k in 0..3 {
                    a[r][k] = (0..3).map(|m| j[m][r] * aj[m][k]).sum();
                }
            }
        }
    }
    let mut ev = [a[0][0], a[1][1], a[2][2]];
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Standard normal CDF from an erfc that shares no code with the library.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * puruspe::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}
