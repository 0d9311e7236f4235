//! Acceptance gate. Runs without the libtest harness and prints one line
//! per criterion; the process exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use tmuq::features::{
    mean_surface, mode_shell, probability_band, shell_factor, BandParams, MeanSurfaceParams, ShellParams,
    ATTR_SHELL_D,
};
use tmuq::isosurface::marching_cubes;
use tmuq::stats::{mode_stats, probability_field, ModeStats, POINT_MASS_SIGMA};
use tmuq::synthetic::{
    analytic_stats, gen_ensemble, gen_field, preset_mode_field, tensor_with_mode, Preset, SyntheticSpec,
};
use tmuq::tensor::mode_from_eigenvalues;
use tmuq::{mesh_diagnostics, GridGeometry, ScalarField, SymTensor3, TriMesh};

type Check = Result<String, String>;
/// Name, time limit in seconds, check.
type Criterion = (&'static str, f64, fn() -> Check);

fn mode_of(t: &SymTensor3) -> Result<f64, String> {
    t.mode()
        .map_err(|e| e.to_string())?
        .value()
        .ok_or_else(|| format!("mode undefined for {t:?}"))
}

fn worst<I: IntoIterator<Item = Result<f64, String>>>(errs: I) -> Result<f64, String> {
    let mut w: f64 = 0.0;
    for e in errs {
        w = w.max(e?);
    }
    Ok(w)
}

fn within(what: &str, err: f64, tol: f64) -> Result<(), String> {
    if err <= tol {
        Ok(())
    } else {
        Err(format!("{what}: max error {err:.3e} exceeds {tol:.0e}"))
    }
}

fn c1_mode_oracle() -> Check {
    let mut rng = StdRng::seed_from_u64(1);
    let tensors: Vec<SymTensor3> = (0..10_000).map(|_| common::random_sym(&mut rng, 10.0)).collect();
    let err = worst(tensors.iter().map(|t| {
        let [a, b, c] = common::jacobi_eigenvalues(t);
        let oracle = mode_from_eigenvalues(a, b, c)
            .map_err(|e| e.to_string())?
            .value()
            .ok_or("oracle undefined")?;
        Ok((mode_of(t)? - oracle).abs())
    }))?;
    within("mode vs eigenvalue oracle", err, 1e-9)?;
    Ok(format!("10000 tensors, max |Δ| = {err:.2e}"))
}

fn c2_invariance() -> Check {
    let mut rng = StdRng::seed_from_u64(2);
    let mut rot = 0.0f64;
    let mut affine = 0.0f64;
    let mut odd = 0.0f64;
    for _ in 0..1000 {
        let t = common::random_sym(&mut rng, 10.0);
        let mu = mode_of(&t)?;
        let r = common::random_rotation(&mut rng);
        let rotated = SymTensor3::from_matrix_symmetrized(&common::rotate_matrix(&t.to_matrix(), &r));
        rot = rot.max((mode_of(&rotated)? - mu).abs());

        let s = 10f64.powf(rng.random_range(-2.0..2.0));
        let c = rng.random_range(-100.0..100.0);
        let mut a = t.to_array().map(|v| s * v);
        for v in &mut a[..3] {
            *v += c;
        }
        affine = affine.max((mode_of(&SymTensor3::from_array(a))? - mu).abs());

        let neg = SymTensor3::from_array(t.to_array().map(|v| -v));
        odd = odd.max((mode_of(&neg)? + mu).abs());
    }
    within("rotation", rot, 1e-9)?;
    within("scale and shift", affine, 1e-9)?;
    within("sign", odd, 1e-12)?;
    Ok(format!(
        "1000 cases each; rotation {rot:.1e}, sT+cI {affine:.1e}, sign {odd:.1e}"
    ))
}

fn c3_lode_round_trip() -> Check {
    let mut rng = StdRng::seed_from_u64(3);
    let mut err = 0.0f64;
    for _ in 0..100 {
        let r = common::random_rotation(&mut rng);
        for i in 0..=200 {
            let mu = -1.0 + 0.01 * i as f64;
            let t = tensor_with_mode(mu, &r, 1.0).map_err(|e| e.to_string())?;
            err = err.max((mode_of(&t)? - mu).abs());
        }
    }
    within("round trip", err, 1e-12)?;
    Ok(format!("201 modes x 100 rotations, max |Δ| = {err:.2e}"))
}

fn c4_mesh() -> Result<TriMesh, String> {
    let spec = SyntheticSpec::new(Preset::LinearMode, GridGeometry::unit_cube(33).unwrap());
    let e = gen_ensemble(&spec, 1, 0.0).map_err(|e| e.to_string())?;
    let st = mode_stats(&e).map_err(|e| e.to_string())?;
    mean_surface(&st, &MeanSurfaceParams::new(-0.3)).map_err(|e| e.to_string())
}

fn c4_placement() -> Check {
    let m = c4_mesh()?;
    if m.is_empty() {
        return Err("empty mesh".into());
    }
    let d = mesh_diagnostics(&m);
    let dev = |z0: f64| m.positions.iter().map(|p| (p[2] - z0).abs()).fold(0.0, f64::max);
    let (stated, relation) = (dev(0.675), dev(0.35));
    let note = format!(
        "{} vertices; max |z - 0.675| = {stated:.3e}, max |z - 0.35| = {relation:.3e} (0.35 solves 2z-1 = -0.3); {} non-manifold edges",
        m.vertex_count(),
        d.non_manifold_edges
    );
    if d.non_manifold_edges != 0 || stated > 1e-9 {
        return Err(note);
    }
    Ok(note)
}

fn c5_mesh() -> TriMesh {
    marching_cubes(&common::sphere_field(129, SPHERE_R), 0.0)
}

const SPHERE_R: f64 = 0.35;

fn c5_marching_cubes() -> Check {
    let m = c5_mesh();
    let d = mesh_diagnostics(&m);
    let exact = 4.0 * std::f64::consts::PI * SPHERE_R * SPHERE_R;
    let rel = (d.area - exact).abs() / exact;
    let note = format!(
        "{} triangles, boundary edges {}, χ = {}, area off by {:.3}%",
        d.triangle_count,
        d.boundary_edges,
        d.euler_characteristic,
        100.0 * rel
    );
    if d.boundary_edges != 0 || d.non_manifold_edges != 0 || d.euler_characteristic != 2 || rel > 0.02 {
        return Err(note);
    }
    Ok(note)
}

fn c6_monte_carlo() -> Check {
    let (sigma, t, eps) = (0.1, -0.3, 0.2);
    let spec = SyntheticSpec::new(Preset::LinearMode, GridGeometry::unit_cube(33).unwrap());
    let st = analytic_stats(&spec, sigma).map_err(|e| e.to_string())?;
    let f = probability_field(&st, t, eps, eps).map_err(|e| e.to_string())?;

    let mut rng = StdRng::seed_from_u64(6);
    let candidates: Vec<usize> = (0..f.values.len())
        .filter(|&n| f.valid[n] && f.values[n] > 1e-3)
        .collect();
    let picks: Vec<(usize, u64)> = (0..100)
        .map(|_| (candidates[rng.random_range(0..candidates.len())], rng.random()))
        .collect();
    const DRAWS: usize = 1_000_000;
    let errs: Vec<f64> = picks
        .par_iter()
        .map(|&(n, seed)| {
            // member modes as the generator draws them; the tensor round
            // trip they then go through is criterion 3
            let mean = st.mean_mode.values[n];
            let noise = Normal::new(mean, sigma).unwrap();
            let mut rng = StdRng::seed_from_u64(seed);
            let hits = (0..DRAWS)
                .filter(|_| {
                    let m = noise.sample(&mut rng).clamp(-1.0, 1.0);
                    t - eps <= m && m <= t + eps
                })
                .count();
            (f.values[n] - hits as f64 / DRAWS as f64).abs()
        })
        .collect();
    let err = errs.into_iter().fold(0.0, f64::max);
    within("f vs Monte Carlo", err, 3e-3)?;

    let sharp = analytic_stats(&spec, 0.0).map_err(|e| e.to_string())?;
    let f0 = probability_field(&sharp, t, eps, eps).map_err(|e| e.to_string())?;
    let valid: Vec<f64> = (0..f0.values.len())
        .filter(|&n| f0.valid[n])
        .map(|n| f0.values[n])
        .collect();
    if let Some(v) = valid.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(format!("point-mass limit produced {v}"));
    }
    let ones = valid.iter().filter(|&&v| v == 1.0).count();
    Ok(format!(
        "100 points x 10^6 draws, max |f - freq| = {err:.2e}; σ = 0: {ones} ones, {} zeros",
        valid.len() - ones
    ))
}

fn c7_degenerate_identity() -> Check {
    let t = 0.5;
    let spec = SyntheticSpec {
        seed: 7,
        ..SyntheticSpec::new(Preset::RadialMode, GridGeometry::unit_cube(33).unwrap())
    };
    let st =
        mode_stats(&gen_ensemble(&spec, 8, 0.1).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let f = probability_field(&st, t, 0.0, 1.0 - t).map_err(|e| e.to_string())?;
    let mut err = 0.0f64;
    let mut checked = 0;
    let mut point_mass = 0;
    for n in 0..f.values.len() {
        if !f.valid[n] {
            continue;
        }
        let (m, s) = (st.mean_mode.values[n], st.stddev.values[n]);
        let want = if s < POINT_MASS_SIGMA {
            point_mass += 1;
            ((t..=1.0).contains(&m) as u8) as f64
        } else {
            common::normal_cdf((1.0 - m) / s) - common::normal_cdf((t - m) / s)
        };
        err = err.max((f.values[n] - want).abs());
        checked += 1;
    }
    within("degenerate identity", err, 1e-12)?;
    Ok(format!(
        "{checked} points ({point_mass} with σ = 0), max |Δ| = {err:.2e}"
    ))
}

fn c8_mode_shell() -> Check {
    let g = GridGeometry::unit_cube(33).unwrap();
    let (t, delta) = (-0.3, 2.0 * g.min_spacing());
    let linear = SyntheticSpec::new(Preset::LinearMode, g);
    // the mean tensor puts the surface at z = 0.35; the mean mode is flat
    // at t across a slab around it
    let plateau = SyntheticSpec::new(
        Preset::Plateau {
            value: t,
            center: 0.35,
            width: 0.3,
        },
        g,
    );
    let width = 0.3;
    if width <= 2.0 * delta {
        return Err("slab is not wider than 2δ".into());
    }
    let flat = ModeStats {
        mean_tensor: gen_field(&linear).map_err(|e| e.to_string())?,
        mean_mode: preset_mode_field(&plateau),
        stddev: ScalarField::constant(g, 0.05),
    };
    let mut flat_err = 0.0f64;
    let mut flat_count = 0;
    for scale in [1.0, 0.5] {
        let shell = mode_shell(
            &flat,
            &ShellParams {
                t,
                delta,
                offset_scale: scale,
            },
        )
        .map_err(|e| e.to_string())?;
        for mesh in [&shell.forward, &shell.backward] {
            for (p, q) in shell.base.positions.iter().zip(&mesh.positions) {
                if (p[2] - 0.35).abs() + delta >= 0.5 * width {
                    continue;
                }
                flat_err = flat_err.max((dist(*p, *q) - scale * delta).abs());
                flat_count += 1;
            }
        }
    }
    if flat_count == 0 {
        return Err("no slab-interior vertices".into());
    }
    within("plateau offsets", flat_err, 1e-6)?;

    let st = analytic_stats(&linear, 0.05).map_err(|e| e.to_string())?;
    let shell = mode_shell(
        &st,
        &ShellParams {
            t,
            delta,
            offset_scale: 1.0,
        },
    )
    .map_err(|e| e.to_string())?;
    let mut longest = 0.0f64;
    let mut largest_d = f64::NEG_INFINITY;
    for mesh in [&shell.forward, &shell.backward] {
        let d = mesh.attribute(ATTR_SHELL_D).ok_or("missing shell_d")?;
        for (i, (p, q)) in shell.base.positions.iter().zip(&mesh.positions).enumerate() {
            longest = longest.max(dist(*p, *q));
            largest_d = largest_d.max(d[i]);
        }
    }
    if !(longest < delta && largest_d < 0.0) {
        return Err(format!(
            "linear preset: longest offset {longest} vs δ = {delta}, max d = {largest_d}"
        ));
    }
    let k = shell_factor(0.3);
    within("factor at d = 0.3", (k - 1.9051).abs(), 1e-4)?;
    Ok(format!(
        "plateau: {flat_count} offsets, max |len - scale·δ| = {flat_err:.1e}; linear: longest {:.3}δ, max d = {largest_d:.4}; factor(0.3) = {k:.6}",
        longest / delta
    ))
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn c9_band_nesting() -> Check {
    let spec = SyntheticSpec::new(Preset::RadialMode, GridGeometry::unit_cube(65).unwrap());
    let st = analytic_stats(&spec, 0.1).map_err(|e| e.to_string())?;
    let (t, eps) = (0.0, 0.2);
    let f = probability_field(&st, t, eps, eps).map_err(|e| e.to_string())?;
    let above = |p: f64| -> Vec<usize> {
        (0..f.values.len())
            .filter(|&n| f.valid[n] && f.values[n] >= p)
            .collect()
    };
    let (strong, weak) = (above(0.5), above(0.3));
    let weak_set: std::collections::HashSet<usize> = weak.iter().copied().collect();
    if let Some(n) = strong.iter().find(|n| !weak_set.contains(n)) {
        return Err(format!("grid point {n} has f ≥ 0.5 but not f ≥ 0.3"));
    }
    let mut notes = vec![format!(
        "{} grid points with f ≥ 0.5 all among the {} with f ≥ 0.3",
        strong.len(),
        weak.len()
    )];
    let mut bands = Vec::new();
    for p in [0.5, 0.3] {
        let m = probability_band(
            &st,
            &BandParams {
                t,
                eps_l: eps,
                eps_u: eps,
                p,
            },
        )
        .map_err(|e| e.to_string())?;
        let d = mesh_diagnostics(&m);
        if m.is_empty() || !d.is_watertight() {
            return Err(format!(
                "p = {p}: {} triangles, {} boundary, {} non-manifold",
                d.triangle_count, d.boundary_edges, d.non_manifold_edges
            ));
        }
        notes.push(format!("p = {p}: {} triangles watertight", d.triangle_count));
        bands.push(m);
    }
    // the extracted 0.5 band lies inside the solid bounded by the 0.3 band
    let (inner, outer) = (&bands[0], &bands[1]);
    let step = (inner.vertex_count() / 200).max(1);
    let probes: Vec<[f64; 3]> = inner.positions.iter().step_by(step).copied().collect();
    if crossings(outer, [0.5; 3]) % 2 == 1 {
        return Err("parity test calls the box centre (f ≈ 0) enclosed".into());
    }
    let outside = probes
        .par_iter()
        .filter(|p| crossings(outer, **p).is_multiple_of(2))
        .count();
    if outside > 0 {
        return Err(format!(
            "{outside} of {} p = 0.5 vertices fall outside the p = 0.3 band",
            probes.len()
        ));
    }
    notes.push(format!(
        "{} sampled p = 0.5 vertices enclosed by the p = 0.3 band",
        probes.len()
    ));
    Ok(notes.join("; "))
}

/// Ray-triangle crossings along a fixed direction chosen to miss mesh edges.
fn crossings(m: &TriMesh, origin: [f64; 3]) -> usize {
    let dir = [0.5773, 0.6123, 0.5402];
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    m.triangles
        .iter()
        .filter(|tri| {
            let [a, b, c] = tri.map(|i| m.positions[i as usize]);
            let (e1, e2) = (sub(b, a), sub(c, a));
            let h = cross(dir, e2);
            let det = dot(e1, h);
            if det.abs() < 1e-14 {
                return false;
            }
            let s = sub(origin, a);
            let u = dot(s, h) / det;
            let q = cross(s, e1);
            let v = dot(dir, q) / det;
            let along = dot(e2, q) / det;
            (0.0..=1.0).contains(&u) && v >= 0.0 && u + v <= 1.0 && along > 1e-12
        })
        .count()
}

const BIN: &str = env!("CARGO_BIN_EXE_tmuq");

fn tmuq(dir: &Path, args: &[&str], threads: Option<&str>) -> Result<(), String> {
    let mut c = Command::new(BIN);
    c.current_dir(dir).args(args).env_remove("TMUQ_THREADS");
    if let Some(n) = threads {
        c.args(["--threads", n]);
    }
    let out = c.output().map_err(|e| e.to_string())?;
    let lines = String::from_utf8_lossy(&out.stdout).lines().count();
    if !out.status.success() || lines != 1 {
        return Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(())
}

fn pipeline(dir: &Path, threads: Option<&str>) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let steps: [&[&str]; 4] = [
        &[
            "gen",
            "--preset",
            "radial-mode",
            "--dims",
            "64",
            "--members",
            "4",
            "--noise-sigma",
            "0.1",
            "--seed",
            "5",
            "--out-dir",
            "ens",
        ],
        &["stats", "ens/ensemble.json", "--out-dir", "stats"],
        &[
            "mean-surface",
            "ens/ensemble.json",
            "--t",
            "-0.3",
            "--out",
            "mean.ply",
        ],
        &[
            "prob-band",
            "ens/ensemble.json",
            "--t",
            "-0.3",
            "--eps-lower",
            "0.2",
            "--eps-upper",
            "0.2",
            "--p",
            "0.33",
            "--out",
            "band.ply",
        ],
    ];
    for s in steps {
        tmuq(dir, s, threads)?;
    }
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = fs::read(&p).map_err(|e| e.to_string())?;
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn same_files(a: &[(PathBuf, Vec<u8>)], b: &[(PathBuf, Vec<u8>)]) -> Result<(), String> {
    if a.len() != b.len() {
        return Err(format!("{} files vs {}", a.len(), b.len()));
    }
    for (x, y) in a.iter().zip(b) {
        if x.0 != y.0 || x.1 != y.1 {
            return Err(format!("{} differs", x.0.display()));
        }
    }
    Ok(())
}

fn c10_pipeline() -> Check {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let a = pipeline(first.path(), None)?;
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("pipeline took {secs:.2} s"));
    }
    let mut notes = Vec::new();
    for name in ["mean.ply", "band.ply"] {
        let bytes = &a
            .iter()
            .find(|(p, _)| p == Path::new(name))
            .ok_or(format!("{name} missing"))?
            .1;
        let ply = common::parse_ply(bytes).map_err(|e| format!("{name}: {e}"))?;
        if ply.faces.is_empty() {
            return Err(format!("{name} has no faces"));
        }
        notes.push(format!("{name} {} faces", ply.faces.len()));
    }
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    same_files(&a, &pipeline(second.path(), None)?)?;
    Ok(format!(
        "pipeline {secs:.2} s; {}; rerun bit-identical over {} files",
        notes.join(", "),
        a.len()
    ))
}

fn mesh_bits(m: &TriMesh) -> Vec<u64> {
    let mut v: Vec<u64> = m
        .positions
        .iter()
        .chain(&m.normals)
        .flatten()
        .map(|x| x.to_bits())
        .collect();
    v.extend(m.triangles.iter().flatten().map(|&i| i as u64));
    for (name, vals) in &m.attributes {
        v.extend(name.bytes().map(u64::from));
        v.extend(vals.iter().map(|x| x.to_bits()));
    }
    v
}

fn c11_thread_determinism() -> Check {
    let n = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2);
    let ns = n.to_string();
    let one4 = common::with_threads(1, c4_mesh)?;
    let many4 = common::with_threads(n, c4_mesh)?;
    if mesh_bits(&one4) != mesh_bits(&many4) {
        return Err("criterion 4 mesh depends on thread count".into());
    }
    if mesh_bits(&common::with_threads(1, c5_mesh)) != mesh_bits(&common::with_threads(n, c5_mesh)) {
        return Err("criterion 5 mesh depends on thread count".into());
    }
    let d1 = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dn = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = pipeline(d1.path(), Some("1"))?;
    let b = pipeline(dn.path(), Some(&ns))?;
    same_files(&a, &b)?;
    Ok(format!(
        "1 vs {n} threads: criteria 4, 5 meshes and {} pipeline files identical",
        a.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("mode oracle equivalence", 1.0, c1_mode_oracle),
        ("invariance suite", 1.0, c2_invariance),
        ("Lode round trip", 1.0, c3_lode_round_trip),
        ("mean surface placement", 1.0, c4_placement),
        ("marching cubes geometry", 5.0, c5_marching_cubes),
        ("probability vs Monte Carlo", 30.0, c6_monte_carlo),
        ("degenerate recovery identity", 1.0, c7_degenerate_identity),
        ("mode shell contract", 2.0, c8_mode_shell),
        ("band nesting", 5.0, c9_band_nesting),
        ("end-to-end pipeline", 10.0, c10_pipeline),
        (
            "determinism under parallelism",
            f64::INFINITY,
            c11_thread_determinism,
        ),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (pass, mut detail) = match outcome {
            Ok(d) => (secs < *limit, d),
            Err(d) => (false, d),
        };
        if secs >= *limit {
            detail = format!("over time limit; {detail}");
        }
        let limit = if limit.is_finite() {
            format!(" / {limit} s")
        } else {
            String::new()
        };
        println!(
            "criterion {:>2} {:<30} {}  [{secs:.3} s{limit}]  {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" }
        );
        failed += (!pass) as usize;
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
