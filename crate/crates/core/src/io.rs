//! On-disk formats: JSON manifest plus raw little-endian volumes for input,
//! raw scalar volumes and PLY/OBJ meshes for output, and a reader for legacy
//! VTK structured-points tensor files.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! failed run never leaves a truncated artifact behind.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, ScalarField, TensorField};
use crate::mesh::TriMesh;
use crate::stats::Ensemble;
use crate::tensor::SymTensor3;

pub const FORMAT_VERSION: u32 = 1;
pub const COMPONENT_ORDER: &str = "xx,yy,zz,xy,xz,yz";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarType {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

impl ScalarType {
    pub fn size(self) -> usize {
        match self {
            ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn encode(self, values: impl Iterator<Item = f64>, out: &mut Vec<u8>) {
        match self {
            // `as f32` rounds to nearest, ties to even
            ScalarType::F32 => values.for_each(|v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            ScalarType::F64 => values.for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }

    fn decode(self, bytes: &[u8]) -> Vec<f64> {
        match self {
            ScalarType::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            ScalarType::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        }
    }
}

impl FromStr for ScalarType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(ScalarType::F32),
            "f64" => Ok(ScalarType::F64),
            _ => Err(Error::param(format!("scalar type must be f32 or f64, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub format_version: u32,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub component_order: String,
    pub scalar_type: ScalarType,
    /// Paths relative to the manifest's directory.
    pub members: Vec<PathBuf>,
}

impl EnsembleManifest {
    pub fn geometry(&self) -> Result<GridGeometry> {
        GridGeometry::new(self.dims, self.origin, self.spacing)
    }

    pub fn member_bytes(&self) -> u64 {
        (self.dims.iter().product::<usize>() * 6 * self.scalar_type.size()) as u64
    }
}

/// Sidecar for a raw scalar volume; `data` is relative to the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeManifest {
    pub format_version: u32,
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub scalar_type: ScalarType,
    pub data: PathBuf,
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::ManifestParse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn check_version(path: &Path, v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::ManifestParse {
            path: path.to_path_buf(),
            reason: format!("unsupported format_version {v}"),
        });
    }
    Ok(())
}

fn base_dir(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or(Path::new(""))
}

fn read_raw(path: &Path, expected: u64) -> Result<Vec<u8>> {
    let actual = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    if actual != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

pub fn read_manifest(path: &Path) -> Result<EnsembleManifest> {
    let m: EnsembleManifest = parse_json(path)?;
    check_version(path, m.format_version)?;
    if m.component_order != COMPONENT_ORDER {
        return Err(Error::ManifestParse {
            path: path.to_path_buf(),
            reason: format!(
                "component_order must be {COMPONENT_ORDER:?}, got {:?}",
                m.component_order
            ),
        });
    }
    if m.members.is_empty() {
        return Err(Error::ManifestParse {
            path: path.to_path_buf(),
            reason: "no members listed".into(),
        });
    }
    Ok(m)
}

pub fn read_ensemble(manifest_path: &Path) -> Result<Ensemble> {
    let m = read_manifest(manifest_path)?;
    let geometry = m.geometry()?;
    let dir = base_dir(manifest_path);
    let members = m
        .members
        .iter()
        .map(|rel| {
            let bytes = read_raw(&dir.join(rel), m.member_bytes())?;
            let values = m
                .scalar_type
                .decode(&bytes)
                .chunks_exact(6)
                .map(|c| SymTensor3::from_array([c[0], c[1], c[2], c[3], c[4], c[5]]))
                .collect();
            TensorField::new(geometry, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(members)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_tensor_raw(f: &TensorField, path: &Path, ty: ScalarType) -> Result<()> {
    let mut bytes = Vec::with_capacity(f.values.len() * 6 * ty.size());
    ty.encode(f.values.iter().flat_map(|t| t.to_array()), &mut bytes);
    write_atomic(path, &bytes)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("manifest serialises");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Write `members` as `<stem>_NNN.raw` plus the manifest `manifest_name`
/// inside `dir`; returns the manifest path.
pub fn write_tensor_fields(
    members: &[TensorField],
    dir: &Path,
    stem: &str,
    manifest_name: &str,
    ty: ScalarType,
) -> Result<PathBuf> {
    let g = members
        .first()
        .ok_or_else(|| Error::param("nothing to write"))?
        .geometry;
    create_dir(dir)?;
    let mut names = Vec::with_capacity(members.len());
    for (i, f) in members.iter().enumerate() {
        let name = PathBuf::from(format!("{stem}_{i:03}.raw"));
        write_tensor_raw(f, &dir.join(&name), ty)?;
        names.push(name);
    }
    let manifest = EnsembleManifest {
        format_version: FORMAT_VERSION,
        dims: g.dims,
        origin: g.origin,
        spacing: g.spacing,
        component_order: COMPONENT_ORDER.to_string(),
        scalar_type: ty,
        members: names,
    };
    let path = dir.join(manifest_name);
    write_json(&manifest, &path)?;
    Ok(path)
}

/// Write `e` as `member_NNN.raw` files plus `ensemble.json` inside `dir`.
pub fn write_ensemble(e: &Ensemble, dir: &Path, ty: ScalarType) -> Result<PathBuf> {
    write_tensor_fields(e.members(), dir, "member", "ensemble.json", ty)
}

fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

/// Raw scalar volume at `path` (invalid points as quiet NaN) and a JSON
/// sidecar with the same stem; returns the sidecar path.
pub fn write_scalar_volume(f: &ScalarField, path: &Path, ty: ScalarType) -> Result<PathBuf> {
    let mut bytes = Vec::with_capacity(f.values.len() * ty.size());
    ty.encode(
        f.values
            .iter()
            .zip(&f.valid)
            .map(|(&v, &ok)| if ok { v } else { f64::NAN }),
        &mut bytes,
    );
    write_atomic(path, &bytes)?;
    let g = f.geometry;
    let side = sidecar_path(path);
    let manifest = VolumeManifest {
        format_version: FORMAT_VERSION,
        dims: g.dims,
        origin: g.origin,
        spacing: g.spacing,
        scalar_type: ty,
        data: PathBuf::from(path.file_name().expect("volume path names a file")),
    };
    write_json(&manifest, &side)?;
    Ok(side)
}

/// Read a scalar volume through its sidecar; NaN samples become invalid.
pub fn read_scalar_volume(sidecar: &Path) -> Result<ScalarField> {
    let m: VolumeManifest = parse_json(sidecar)?;
    check_version(sidecar, m.format_version)?;
    let g = GridGeometry::new(m.dims, m.origin, m.spacing)?;
    let expected = (g.point_count() * m.scalar_type.size()) as u64;
    let bytes = read_raw(&base_dir(sidecar).join(&m.data), expected)?;
    let values = m.scalar_type.decode(&bytes);
    let valid = values.iter().map(|v| !v.is_nan()).collect();
    ScalarField::new(g, values, valid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Ply,
    Obj,
}

impl MeshFormat {
    /// Format implied by the file extension (`.obj`, otherwise PLY).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("obj") => MeshFormat::Obj,
            _ => MeshFormat::Ply,
        }
    }
}

/// Vertex colouring by one attribute channel over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Colormap {
    pub attribute: String,
    pub lo: f64,
    pub hi: f64,
}

impl Colormap {
    /// Linear blue → white → red. NaN samples are grey.
    pub fn color(&self, v: f64) -> [u8; 3] {
        if v.is_nan() {
            return [128, 128, 128];
        }
        let s = ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        let ramp = |x: f64| (255.0 * x).round() as u8;
        if s <= 0.5 {
            let w = ramp(2.0 * s);
            [w, w, 255]
        } else {
            let w = ramp(2.0 - 2.0 * s);
            [255, w, w]
        }
    }
}

const RESERVED: [&str; 9] = ["x", "y", "z", "nx", "ny", "nz", "red", "green", "blue"];

pub fn is_valid_attribute_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !RESERVED.contains(&name)
}

fn check_mesh(m: &TriMesh) -> Result<()> {
    m.validate().map_err(Error::param)?;
    if let Some(bad) = m.attributes.keys().find(|k| !is_valid_attribute_name(k)) {
        return Err(Error::UnsupportedAttribute(bad.clone()));
    }
    Ok(())
}

pub fn ply_bytes(m: &TriMesh, colormap: Option<&Colormap>) -> Result<Vec<u8>> {
    check_mesh(m)?;
    let colors = match colormap {
        None => None,
        Some(c) => {
            if !(c.lo < c.hi) {
                return Err(Error::param(format!(
                    "colormap range [{}, {}] is empty",
                    c.lo, c.hi
                )));
            }
            let values = m
                .attribute(&c.attribute)
                .ok_or_else(|| Error::param(format!("no attribute {:?} to colour by", c.attribute)))?;
            Some(values.iter().map(|&v| c.color(v)).collect::<Vec<_>>())
        }
    };

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    writeln!(header, "element vertex {}", m.vertex_count()).unwrap();
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        writeln!(header, "property float {p}").unwrap();
    }
    for name in m.attributes.keys() {
        writeln!(header, "property float {name}").unwrap();
    }
    if colors.is_some() {
        for p in ["red", "green", "blue"] {
            writeln!(header, "property uchar {p}").unwrap();
        }
    }
    writeln!(header, "element face {}", m.triangle_count()).unwrap();
    header.push_str("property list uchar uint vertex_indices\nend_header\n");

    let stride = 4 * (6 + m.attributes.len()) + if colors.is_some() { 3 } else { 0 };
    let mut out = Vec::with_capacity(header.len() + stride * m.vertex_count() + 13 * m.triangle_count());
    out.extend_from_slice(header.as_bytes());
    let channels: Vec<&Vec<f64>> = m.attributes.values().collect();
    for i in 0..m.vertex_count() {
        let fixed = m.positions[i].iter().chain(&m.normals[i]);
        for v in fixed.copied().chain(channels.iter().map(|c| c[i])) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(c) = &colors {
            out.extend_from_slice(&c[i]);
        }
    }
    for t in &m.triangles {
        out.push(3);
        for i in t {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn obj_bytes(m: &TriMesh) -> Result<Vec<u8>> {
    m.validate().map_err(Error::param)?;
    if !m.attributes.is_empty() {
        log::warn!(
            "OBJ output drops attribute channels {:?}",
            m.attributes.keys().collect::<Vec<_>>()
        );
    }
    let mut s = String::new();
    for p in &m.positions {
        writeln!(s, "v {} {} {}", p[0], p[1], p[2]).unwrap();
    }
    for n in &m.normals {
        writeln!(s, "vn {} {} {}", n[0], n[1], n[2]).unwrap();
    }
    for t in &m.triangles {
        let [a, b, c] = t.map(|i| i + 1);
        writeln!(s, "f {a}//{a} {b}//{b} {c}//{c}").unwrap();
    }
    Ok(s.into_bytes())
}

pub fn write_mesh(m: &TriMesh, path: &Path, format: MeshFormat, colormap: Option<&Colormap>) -> Result<()> {
    let bytes = match format {
        MeshFormat::Ply => ply_bytes(m, colormap)?,
        MeshFormat::Obj => {
            if colormap.is_some() {
                log::warn!("OBJ output ignores the colormap");
            }
            obj_bytes(m)?
        }
    };
    write_atomic(path, &bytes)
}

/// Tensor data from a legacy VTK `STRUCTURED_POINTS` file (ASCII or
/// big-endian BINARY), symmetrised.
pub fn read_vtk_structured_points(path: &Path) -> Result<TensorField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_vtk(&bytes).map_err(|reason| Error::ManifestParse {
        path: path.to_path_buf(),
        reason,
    })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Option<&'a str> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        self.pos += (end + 1).min(rest.len());
        std::str::from_utf8(&rest[..end]).ok().map(str::trim)
    }

    fn content_line(&mut self) -> Option<&'a str> {
        loop {
            let l = self.line()?;
            if !l.is_empty() {
                return Some(l);
            }
        }
    }

    fn token(&mut self) -> Option<&'a str> {
        let rest = &self.bytes[self.pos..];
        let start = rest.iter().position(|b| !b.is_ascii_whitespace())?;
        let len = rest[start..]
            .iter()
            .position(|b| b.is_ascii_whitespace())
            .unwrap_or(rest.len() - start);
        self.pos += start + len;
        std::str::from_utf8(&rest[start..start + len]).ok()
    }
}

fn parse_vtk(bytes: &[u8]) -> std::result::Result<TensorField, String> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.line().ok_or("empty file")?;
    if !magic.starts_with("# vtk DataFile") {
        return Err("missing '# vtk DataFile' header".into());
    }
    c.line().ok_or("missing title line")?;
    let encoding = c
        .content_line()
        .ok_or("missing encoding line")?
        .to_ascii_uppercase();
    let binary = match encoding.as_str() {
        "ASCII" => false,
        "BINARY" => true,
        other => return Err(format!("unknown encoding {other:?}")),
    };
    let mut dims = None;
    let mut origin = [0.0; 3];
    let mut spacing = [1.0; 3];
    let three = |words: &[&str]| -> std::result::Result<[f64; 3], String> {
        if words.len() != 4 {
            return Err(format!("expected three values in {:?}", words.join(" ")));
        }
        let mut v = [0.0; 3];
        for (k, w) in words[1..].iter().enumerate() {
            v[k] = w.parse().map_err(|_| format!("bad number {w:?}"))?;
        }
        Ok(v)
    };
    loop {
        let line = c.content_line().ok_or("no TENSORS section found")?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words[0].to_ascii_uppercase().as_str() {
            "DATASET" => {
                if words.get(1).map(|w| w.to_ascii_uppercase()) != Some("STRUCTURED_POINTS".into()) {
                    return Err(format!("unsupported dataset {line:?}"));
                }
            }
            "DIMENSIONS" => {
                let d = three(&words)?;
                dims = Some([d[0] as usize, d[1] as usize, d[2] as usize]);
            }
            "ORIGIN" => origin = three(&words)?,
            "SPACING" | "ASPECT_RATIO" => spacing = three(&words)?,
            "POINT_DATA" | "FIELD" => {}
            "TENSORS" | "TENSORS6" => {
                let six = words[0].eq_ignore_ascii_case("TENSORS6");
                let ty = words.get(2).copied().unwrap_or("float").to_ascii_lowercase();
                let dims = dims.ok_or("TENSORS before DIMENSIONS")?;
                let g = GridGeometry::new(dims, origin, spacing).map_err(|e| e.to_string())?;
                let per = if six { 6 } else { 9 };
                let count = g.point_count() * per;
                let raw: Vec<f64> = if binary {
                    let size = match ty.as_str() {
                        "float" => 4,
                        "double" => 8,
                        other => return Err(format!("unsupported binary type {other:?}")),
                    };
                    let body = bytes
                        .get(c.pos..c.pos + count * size)
                        .ok_or("binary tensor payload is truncated")?;
                    if size == 4 {
                        body.chunks_exact(4)
                            .map(|b| f32::from_be_bytes(b.try_into().unwrap()) as f64)
                            .collect()
                    } else {
                        body.chunks_exact(8)
                            .map(|b| f64::from_be_bytes(b.try_into().unwrap()))
                            .collect()
                    }
                } else {
                    (0..count)
                        .map(|_| {
                            let w = c.token().ok_or("ASCII tensor payload is truncated")?;
                            w.parse::<f64>().map_err(|_| format!("bad number {w:?}"))
                        })
                        .collect::<std::result::Result<_, _>>()?
                };
                let values = raw
                    .chunks_exact(per)
                    .map(|v| {
                        if six {
                            // VTK order: xx, yy, zz, xy, yz, xz
                            SymTensor3::new(v[0], v[1], v[2], v[3], v[5], v[4])
                        } else {
                            SymTensor3::from_matrix_symmetrized(&[
                                [v[0], v[1], v[2]],
                                [v[3], v[4], v[5]],
                                [v[6], v[7], v[8]],
                            ])
                        }
                    })
                    .collect();
                return TensorField::new(g, values).map_err(|e| e.to_string());
            }
            // attribute sections we do not need
            "SCALARS" | "VECTORS" | "NORMALS" | "LOOKUP_TABLE" | "COLOR_SCALARS" => {
                return Err(format!(
                    "section {:?} precedes the tensors; only a leading TENSORS section is supported",
                    words[0]
                ));
            }
            other => return Err(format!("unexpected keyword {other:?}")),
        }
    }
}
