use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use tmuq::features::{self, BandParams, Degeneracy, MeanSurfaceParams, ShellParams, ATTR_MODE_STDDEV};
use tmuq::io::{self, Colormap, MeshFormat, ScalarType};
use tmuq::stats::{mode_field, mode_stats, probability_field};
use tmuq::synthetic::{gen_ensemble_with, NoiseModel, Preset, SyntheticSpec};
use tmuq::{Error, GridGeometry, ScalarField, TriMesh};

#[derive(Parser)]
#[command(name = "tmuq", version, about = "Uncertain mode surfaces of tensor ensembles")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "TMUQ_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ensemble.
    Gen(GenArgs),
    /// Describe an ensemble.
    Info { manifest: PathBuf },
    /// Write the mean tensor, mean mode and mode standard deviation volumes.
    Stats {
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "f64")]
        scalar_type: ScalarArg,
    },
    /// Mean surface of the mean tensor, thickened by the mode deviation.
    MeanSurface(MeanSurfaceArgs),
    /// Mean surface plus forward and backward offset surfaces.
    ModeShell(ModeShellArgs),
    /// Level set of the probability that the mode lies near a target.
    ProbBand(ProbBandArgs),
    /// Probability band for modes near +1 (linear) or -1 (planar).
    DegenerateBand(DegenerateArgs),
    /// Convert legacy VTK structured-points tensor files into an ensemble.
    ConvertVtk {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = "f64")]
        scalar_type: ScalarArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalarArg {
    F32,
    F64,
}

impl From<ScalarArg> for ScalarType {
    fn from(s: ScalarArg) -> Self {
        match s {
            ScalarArg::F32 => ScalarType::F32,
            ScalarArg::F64 => ScalarType::F64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    LinearMode,
    RadialMode,
    Plateau,
    Antisymmetric,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Mode,
    Component,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    Linear,
    Planar,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    preset: PresetArg,
    /// Points per axis: `N` or `NX,NY,NZ`. The grid spans the unit cube.
    #[arg(long, default_value = "33")]
    dims: String,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, value_enum, default_value = "mode")]
    noise_model: NoiseArg,
    #[arg(long, default_value_t = 1)]
    members: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = -0.3, allow_hyphen_values = true)]
    plateau_value: f64,
    #[arg(long, default_value_t = 0.5)]
    plateau_center: f64,
    #[arg(long, default_value_t = 0.4)]
    plateau_width: f64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "f64")]
    scalar_type: ScalarArg,
}

#[derive(Args)]
struct MeshOut {
    /// Output mesh; `.obj` selects OBJ, anything else binary PLY.
    #[arg(long)]
    out: PathBuf,
    /// Colour vertices by `ATTR,LO,HI`.
    #[arg(long, allow_hyphen_values = true)]
    colormap: Option<String>,
}

#[derive(Args)]
struct MeanSurfaceArgs {
    manifest: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    t: f64,
    #[arg(long, default_value_t = 1.0)]
    thickness_scale: f64,
    #[arg(long, default_value_t = 0.0)]
    thickness_min: f64,
    #[arg(long, default_value_t = f64::INFINITY)]
    thickness_max: f64,
    /// Write the bare mean surface without thickening.
    #[arg(long)]
    no_thicken: bool,
    #[command(flatten)]
    mesh: MeshOut,
}

#[derive(Args)]
struct ModeShellArgs {
    manifest: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    t: f64,
    /// Offset step in world units (default: twice the smallest spacing).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    offset_scale: f64,
    /// Writes PREFIX_base.ply, PREFIX_fwd.ply and PREFIX_bwd.ply.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args)]
struct ProbBandArgs {
    manifest: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    t: f64,
    #[arg(long)]
    eps_lower: f64,
    #[arg(long)]
    eps_upper: f64,
    #[arg(long)]
    p: f64,
    #[command(flatten)]
    mesh: MeshOut,
}

#[derive(Args)]
struct DegenerateArgs {
    manifest: PathBuf,
    #[arg(long, value_enum)]
    which: WhichArg,
    #[arg(long, default_value_t = 0.2)]
    margin: f64,
    #[arg(long)]
    p: f64,
    #[command(flatten)]
    mesh: MeshOut,
}

#[derive(Serialize)]
struct RunSummary {
    command: &'static str,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    parameters: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    vertex_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    triangle_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    invalid_point_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mode_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    f_range: Option<[f64; 2]>,
    #[serde(flatten)]
    extra: Map<String, Value>,
    wall_time_seconds: f64,
}

impl RunSummary {
    fn new(command: &'static str, inputs: Vec<PathBuf>, parameters: Value) -> Self {
        RunSummary {
            command,
            inputs,
            outputs: Vec::new(),
            parameters,
            vertex_count: None,
            triangle_count: None,
            invalid_point_count: None,
            mode_range: None,
            f_range: None,
            extra: Map::new(),
            wall_time_seconds: 0.0,
        }
    }

    fn mesh(&mut self, m: &TriMesh) {
        self.vertex_count = Some(m.vertex_count());
        self.triangle_count = Some(m.triangle_count());
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CmdResult = Result<RunSummary, Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) => 2,
        Error::Io { .. } => 3,
        _ => 4,
    }
}

fn parse_dims(s: &str) -> Result<[usize; 3], Failure> {
    let parts: Result<Vec<usize>, _> = s.split(',').map(|p| p.trim().parse()).collect();
    match parts.as_deref() {
        Ok([n]) if *n >= 2 => Ok([*n; 3]),
        Ok([a, b, c]) if [a, b, c].iter().all(|&&v| v >= 2) => Ok([*a, *b, *c]),
        _ => Err(Failure::Usage(format!(
            "--dims must be N or NX,NY,NZ with every count at least 2, got {s:?}"
        ))),
    }
}

fn parse_colormap(s: Option<&str>) -> Result<Option<Colormap>, Failure> {
    let Some(s) = s else { return Ok(None) };
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || Failure::Usage(format!("--colormap must be ATTR,LO,HI, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok(Some(Colormap {
        attribute: parts[0].to_string(),
        lo: parts[1].trim().parse().map_err(|_| bad())?,
        hi: parts[2].trim().parse().map_err(|_| bad())?,
    }))
}

fn write_mesh_out(m: &TriMesh, out: &Path, colormap: Option<&Colormap>) -> Result<(), Failure> {
    io::write_mesh(m, out, MeshFormat::from_path(out), colormap)?;
    Ok(())
}

/// Range of `f` over the vertices of `m`, ignoring undefined samples.
fn sampled_range(f: &ScalarField, m: &TriMesh) -> Option<[f64; 2]> {
    let mut range: Option<[f64; 2]> = None;
    for v in m.positions.iter().filter_map(|p| f.sample(*p)) {
        let r = range.get_or_insert([v, v]);
        r[0] = r[0].min(v);
        r[1] = r[1].max(v);
    }
    range
}

fn cmd_gen(a: &GenArgs) -> CmdResult {
    let dims = parse_dims(&a.dims)?;
    let spacing = dims.map(|n| 1.0 / (n.max(2) - 1) as f64);
    let geometry = GridGeometry::new(dims, [0.0; 3], spacing)?;
    let preset = match a.preset {
        PresetArg::LinearMode => Preset::LinearMode,
        PresetArg::RadialMode => Preset::RadialMode,
        PresetArg::Antisymmetric => Preset::Antisymmetric,
        PresetArg::Plateau => Preset::Plateau {
            value: a.plateau_value,
            center: a.plateau_center,
            width: a.plateau_width,
        },
    };
    let spec = SyntheticSpec {
        amplitude: a.amplitude,
        seed: a.seed,
        ..SyntheticSpec::new(preset, geometry)
    };
    let model = match a.noise_model {
        NoiseArg::Mode => NoiseModel::Mode,
        NoiseArg::Component => NoiseModel::Component,
    };
    let e = gen_ensemble_with(&spec, a.members, a.noise_sigma, model)?;
    let manifest = io::write_ensemble(&e, &a.out_dir, a.scalar_type.into())?;
    let mut s = RunSummary::new(
        "gen",
        Vec::new(),
        json!({
            "preset": preset.name(),
            "dims": dims,
            "noise_sigma": a.noise_sigma,
            "noise_model": match model { NoiseModel::Mode => "mode", NoiseModel::Component => "component" },
            "members": a.members,
            "seed": a.seed,
            "amplitude": a.amplitude,
        }),
    );
    s.outputs.push(manifest);
    Ok(s)
}

fn cmd_info(manifest: &Path) -> CmdResult {
    let e = io::read_ensemble(manifest)?;
    let g = e.geometry();
    let mut s = RunSummary::new("info", vec![manifest.to_path_buf()], json!({}));
    let per_member: Vec<Value> = e
        .members()
        .iter()
        .map(|m| {
            let f = mode_field(m);
            json!({
                "mode_range": f.valid_range().map(|(lo, hi)| [lo, hi]),
                "invalid_point_count": f.invalid_count(),
            })
        })
        .collect();
    let invalid: usize = e.members().iter().map(|m| mode_field(m).invalid_count()).sum();
    s.invalid_point_count = Some(invalid);
    s.extra.insert("members".into(), json!(e.len()));
    s.extra.insert(
        "geometry".into(),
        json!({"dims": g.dims, "origin": g.origin, "spacing": g.spacing}),
    );
    s.extra.insert("member_modes".into(), Value::Array(per_member));
    Ok(s)
}

fn cmd_stats(manifest: &Path, out_dir: &Path, ty: ScalarType) -> CmdResult {
    let e = io::read_ensemble(manifest)?;
    let st = mode_stats(&e)?;
    let mut s = RunSummary::new(
        "stats",
        vec![manifest.to_path_buf()],
        json!({ "scalar_type": ty }),
    );
    s.outputs.push(io::write_tensor_fields(
        std::slice::from_ref(&st.mean_tensor),
        out_dir,
        "mean_tensor",
        "mean_tensor.json",
        ty,
    )?);
    s.outputs.push(io::write_scalar_volume(
        &st.mean_mode,
        &out_dir.join("mean_mode.raw"),
        ty,
    )?);
    s.outputs.push(io::write_scalar_volume(
        &st.stddev,
        &out_dir.join("mode_stddev.raw"),
        ty,
    )?);
    s.invalid_point_count = Some(st.mean_mode.invalid_count());
    s.mode_range = st.mean_mode.valid_range().map(|(lo, hi)| [lo, hi]);
    s.extra.insert(
        "stddev_range".into(),
        json!(st.stddev.valid_range().map(|(lo, hi)| [lo, hi])),
    );
    Ok(s)
}

fn cmd_mean_surface(a: &MeanSurfaceArgs) -> CmdResult {
    let params = MeanSurfaceParams {
        t: a.t,
        thickness_scale: a.thickness_scale,
        thickness_min: a.thickness_min,
        thickness_max: a.thickness_max,
    };
    params.validate()?;
    let colormap = parse_colormap(a.mesh.colormap.as_deref())?;
    let e = io::read_ensemble(&a.manifest)?;
    let st = mode_stats(&e)?;
    let base = features::mean_surface(&st, &params)?;
    let mut s = RunSummary::new(
        "mean-surface",
        vec![a.manifest.clone()],
        json!({
            "t": a.t,
            "thickness_scale": a.thickness_scale,
            "thickness_min": a.thickness_min,
            "thickness_max": if a.thickness_max.is_finite() { json!(a.thickness_max) } else { json!("inf") },
            "thicken": !a.no_thicken,
        }),
    );
    s.mode_range = sampled_range(&mode_field(&st.mean_tensor), &base);
    s.invalid_point_count = Some(st.mean_mode.invalid_count());
    let sd = base.attribute(ATTR_MODE_STDDEV).unwrap_or_default();
    s.extra.insert(
        "stddev_range".into(),
        json!(sd
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(None, |r: Option<[f64; 2]>, v| {
                Some(r.map_or([v, v], |[lo, hi]| [lo.min(v), hi.max(v)]))
            })),
    );
    let out = if a.no_thicken {
        base
    } else {
        let th = features::enhanced_mean_surface(&st, &params)?;
        s.extra.insert("clamped_vertices".into(), json!(th.clamped.len()));
        th.mesh
    };
    write_mesh_out(&out, &a.mesh.out, colormap.as_ref())?;
    s.mesh(&out);
    s.outputs.push(a.mesh.out.clone());
    Ok(s)
}

fn cmd_mode_shell(a: &ModeShellArgs) -> CmdResult {
    MeanSurfaceParams::new(a.t).validate()?;
    let e = io::read_ensemble(&a.manifest)?;
    let delta = a.delta.unwrap_or(2.0 * e.geometry().min_spacing());
    let params = ShellParams {
        t: a.t,
        delta,
        offset_scale: a.offset_scale,
    };
    let st = mode_stats(&e)?;
    let shell = features::mode_shell(&st, &params)?;
    let mut s = RunSummary::new(
        "mode-shell",
        vec![a.manifest.clone()],
        json!({"t": a.t, "delta": delta, "offset_scale": a.offset_scale}),
    );
    let prefix = a.out_prefix.to_string_lossy();
    for (suffix, m) in [
        ("base", &shell.base),
        ("fwd", &shell.forward),
        ("bwd", &shell.backward),
    ] {
        let path = PathBuf::from(format!("{prefix}_{suffix}.ply"));
        write_mesh_out(m, &path, None)?;
        s.outputs.push(path);
    }
    s.mesh(&shell.base);
    s.mode_range = sampled_range(&mode_field(&st.mean_tensor), &shell.base);
    s.invalid_point_count = Some(st.mean_mode.invalid_count());
    s.extra.insert(
        "frozen_vertices".into(),
        json!({"forward": shell.frozen_forward, "backward": shell.frozen_backward}),
    );
    Ok(s)
}

fn run_band(
    command: &'static str,
    manifest: &Path,
    params: BandParams,
    out: &MeshOut,
    echo: Value,
) -> CmdResult {
    params.validate()?;
    let colormap = parse_colormap(out.colormap.as_deref())?;
    let e = io::read_ensemble(manifest)?;
    let st = mode_stats(&e)?;
    let f = probability_field(&st, params.t, params.eps_l, params.eps_u)?;
    let mesh = features::probability_band_of(&f, &st, params.p)?;
    write_mesh_out(&mesh, &out.out, colormap.as_ref())?;
    let mut s = RunSummary::new(command, vec![manifest.to_path_buf()], echo);
    s.mesh(&mesh);
    s.outputs.push(out.out.clone());
    s.invalid_point_count = Some(f.invalid_count());
    s.f_range = sampled_range(&f, &mesh);
    s.extra.insert(
        "field_f_range".into(),
        json!(f.valid_range().map(|(lo, hi)| [lo, hi])),
    );
    Ok(s)
}

fn cmd_prob_band(a: &ProbBandArgs) -> CmdResult {
    let params = BandParams {
        t: a.t,
        eps_l: a.eps_lower,
        eps_u: a.eps_upper,
        p: a.p,
    };
    let echo = json!({"t": a.t, "eps_lower": a.eps_lower, "eps_upper": a.eps_upper, "p": a.p});
    run_band("prob-band", &a.manifest, params, &a.mesh, echo)
}

fn cmd_degenerate_band(a: &DegenerateArgs) -> CmdResult {
    let which = match a.which {
        WhichArg::Linear => Degeneracy::Linear,
        WhichArg::Planar => Degeneracy::Planar,
    };
    let params = which.band(a.margin, a.p)?;
    let echo = json!({
        "which": match which { Degeneracy::Linear => "linear", Degeneracy::Planar => "planar" },
        "margin": a.margin,
        "p": a.p,
        "t": params.t,
        "eps_lower": params.eps_l,
        "eps_upper": params.eps_u,
    });
    run_band("degenerate-band", &a.manifest, params, &a.mesh, echo)
}

fn cmd_convert_vtk(inputs: &[PathBuf], out_dir: &Path, ty: ScalarType) -> CmdResult {
    let fields = inputs
        .iter()
        .map(|p| io::read_vtk_structured_points(p))
        .collect::<Result<Vec<_>, _>>()?;
    let e = tmuq::Ensemble::new(fields)?;
    let manifest = io::write_ensemble(&e, out_dir, ty)?;
    let mut s = RunSummary::new("convert-vtk", inputs.to_vec(), json!({ "scalar_type": ty }));
    s.outputs.push(manifest);
    s.extra.insert("members".into(), json!(e.len()));
    Ok(s)
}

fn dispatch(cmd: &Command) -> CmdResult {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Info { manifest } => cmd_info(manifest),
        Command::Stats {
            manifest,
            out_dir,
            scalar_type,
        } => cmd_stats(manifest, out_dir, (*scalar_type).into()),
        Command::MeanSurface(a) => cmd_mean_surface(a),
        Command::ModeShell(a) => cmd_mode_shell(a),
        Command::ProbBand(a) => cmd_prob_band(a),
        Command::DegenerateBand(a) => cmd_degenerate_band(a),
        Command::ConvertVtk {
            inputs,
            out_dir,
            scalar_type,
        } => cmd_convert_vtk(inputs, out_dir, (*scalar_type).into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let start = Instant::now();

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("tmuq: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(mut summary) => {
            summary.wall_time_seconds = start.elapsed().as_secs_f64();
            println!("{}", serde_json::to_string(&summary).expect("summary serialises"));
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("tmuq: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("tmuq: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
