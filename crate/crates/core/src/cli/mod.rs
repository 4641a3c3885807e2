//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for bad input (files, flags, config), 2 when
//! the solver fails.

pub mod config;
pub mod json;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::energies::analysis::check_matrix_symmetry;
use crate::energies::{classify_energy, sample_level_sets, Energy, EnergyProperties, LevelSetKind};
use crate::mapping::{
    init_from_landmarks, init_from_surface_map, read_barycentric_map, read_surface_map, read_vertex_image, write_barycentric_map,
    write_vertex_image, MapPair,
};
use crate::mesh::geometry::Vec3;
use crate::mesh::{load_mesh, load_raw, read_landmarks, write_raw, MeshFormat, TetMesh};
use crate::metrics::{map_metrics, per_tet_distortion, write_distortion_csv, MapMetrics};
use crate::objective::{EnergyBreakdown, Objective};
use crate::solver::{solve, SolverConfig};
use crate::transfer::{push_forward, read_field_csv, read_obj, write_field_csv, write_obj, EmbeddedGeometry, GeometryKind};

pub use config::{apply_config, read_config_file};

#[derive(Debug, Parser)]
#[command(name = "volmap", version, about = "Symmetric volumetric maps between tetrahedral meshes")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomized analysis.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// `key = value` file with solver settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a map between two tet meshes.
    Map(MapArgs),
    /// Classify the distortion energies and export level-set grids.
    AnalyzeEnergies(AnalyzeArgs),
    /// Quality metrics of a computed map.
    Metrics(MetricsArgs),
    /// Push points, curves or meshes through a computed map.
    PushForward(PushArgs),
    /// Pull a per-vertex scalar field back through a barycentric map.
    PullBack(PullArgs),
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, conflicts_with = "surface_map", required_unless_present = "surface_map")]
    pub landmarks: Option<PathBuf>,
    #[arg(long)]
    pub surface_map: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
    #[arg(long)]
    pub beta_ramp: Option<usize>,
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    /// Distortion function, e.g. `arap`, `sdirichlet`, `symmetric-dirichlet`.
    #[arg(long)]
    pub energy: Option<String>,
    #[arg(long)]
    pub hard_boundary: bool,
    /// Skip both inversion repair stages.
    #[arg(long)]
    pub no_repair: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// JSON report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for level-set CSV grids; skipped when absent.
    #[arg(long)]
    pub levelset_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.1)]
    pub range_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub range_max: f64,
    #[arg(long, default_value_t = 10_000)]
    pub symmetry_trials: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Output directory of a `map` run.
    #[arg(long)]
    pub map_dir: PathBuf,
    #[arg(long)]
    pub energy: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-tet distortion CSVs.
    #[arg(long)]
    pub distortion_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PushArgs {
    /// Source tet mesh the geometry is embedded in.
    #[arg(long)]
    pub source: PathBuf,
    /// Vertex image of the source mesh (`x12.txt` of a `map` run).
    #[arg(long)]
    pub image: PathBuf,
    /// OBJ points, polylines or surface; or a TetGen/Medit tet mesh.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// JSON listing points found outside the source mesh.
    #[arg(long)]
    pub skip_report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PullArgs {
    /// Barycentric map from source to target (`p12.txt`).
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Per-vertex values on the target mesh.
    #[arg(long)]
    pub field: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
        }
    }
}

fn input<E: std::fmt::Display>(flag: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{flag}: {e}"))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(input(&dir.display().to_string()))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_energy(name: &str, flag: &str) -> Result<Energy, CliError> {
    Energy::from_name(name).ok_or_else(|| CliError::Input(format!("{flag}: unknown energy '{name}'")))
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(input("--threads"))?;
    pool.install(|| match &cli.command {
        Command::Map(a) => run_map(&cli, a),
        Command::AnalyzeEnergies(a) => run_analyze(cli.seed, a),
        Command::Metrics(a) => run_metrics(&cli, a),
        Command::PushForward(a) => run_push(a),
        Command::PullBack(a) => run_pull(a),
    })
}

/// Solver settings and energy from the config file, then flags.
pub fn resolve_config(cli: &Cli, a: &MapArgs) -> Result<(SolverConfig, Energy), CliError> {
    let mut cfg = SolverConfig::default();
    let mut energy = Energy::Arap;
    if let Some(path) = &cli.config {
        let entries = read_config_file(path).map_err(input("--config"))?;
        energy = apply_config(&mut cfg, &entries).map_err(input("--config"))?.unwrap_or(energy);
    }
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.alpha, a.alpha);
    set(&mut cfg.gamma, a.gamma);
    set(&mut cfg.beta_start, a.beta_start);
    set(&mut cfg.beta_end, a.beta_end);
    if let Some(r) = a.beta_ramp {
        cfg.beta_ramp = r;
    }
    if let Some(n) = a.max_outer_iters {
        cfg.max_outer_iters = n;
    }
    if a.hard_boundary {
        cfg.hard_boundary = true;
    }
    if a.no_repair {
        cfg.stages.repair = false;
        cfg.stages.post_repair = false;
    }
    if let Some(name) = &a.energy {
        energy = parse_energy(name, "--energy")?;
    }
    cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
    Ok((cfg, energy))
}

fn scale_points(x: &[Vec3], f: f64) -> Vec<Vec3> {
    x.iter().map(|v| v * f).collect()
}

#[derive(Serialize)]
struct Timing {
    wall_time_secs: f64,
}

fn run_map(cli: &Cli, a: &MapArgs) -> Result<(), CliError> {
    let (cfg, energy) = resolve_config(cli, a)?;
    let m1 = load_mesh(&a.source, None).map_err(input("--source"))?;
    let m2 = load_mesh(&a.target, None).map_err(input("--target"))?;
    let init = match (&a.landmarks, &a.surface_map) {
        (Some(path), _) => {
            let lm = read_landmarks(path).map_err(input("--landmarks"))?;
            init_from_landmarks(&m1, &m2, &lm).map_err(input("--landmarks"))?
        }
        (None, Some(path)) => {
            let sm = read_surface_map(path).map_err(input("--surface-map"))?;
            init_from_surface_map(&m1, &m2, &sm).map_err(input("--surface-map"))?
        }
        (None, None) => return Err(CliError::Input("--landmarks or --surface-map is required".into())),
    };
    let (n1, s1) = m1.normalize_volume();
    let (n2, s2) = m2.normalize_volume();
    let init = MapPair {
        x12: scale_points(&init.x12, s2),
        x21: scale_points(&init.x21, s1),
        ..init
    };
    let (pair, report) = solve(&n1, &n2, init, &cfg, energy).map_err(|e| CliError::Solver(e.to_string()))?;

    let out = &a.out_dir;
    std::fs::create_dir_all(out).map_err(input("--out-dir"))?;
    let io = input("--out-dir");
    write_barycentric_map(&pair.p12, &out.join("p12.txt")).map_err(&io)?;
    write_barycentric_map(&pair.p21, &out.join("p21.txt")).map_err(&io)?;
    write_vertex_image(&scale_points(&pair.x12, 1.0 / s2), &out.join("x12.txt")).map_err(&io)?;
    write_vertex_image(&scale_points(&pair.x21, 1.0 / s1), &out.join("x21.txt")).map_err(&io)?;
    write_file(&out.join("report.json"), &json::to_string(&report))?;
    write_file(
        &out.join("timing.json"),
        &json::to_string(&Timing { wall_time_secs: report.wall_time.as_secs_f64() }),
    )?;
    write_distortion_csv(&per_tet_distortion(&n1, &pair.x12, energy), &out.join("distortion12.csv")).map_err(|e| CliError::Input(e.to_string()))?;
    write_distortion_csv(&per_tet_distortion(&n2, &pair.x21, energy), &out.join("distortion21.csv")).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(())
}

#[derive(Serialize)]
struct EnergyEntry {
    name: &'static str,
    #[serde(flatten)]
    properties: EnergyProperties,
    symmetry_violation: f64,
}

#[derive(Serialize)]
struct EnergyReport {
    seed: u64,
    symmetry_trials: usize,
    energies: Vec<EnergyEntry>,
}

/// Classification of every catalog energy.
pub fn analyze_energies(seed: u64, symmetry_trials: usize) -> Vec<(Energy, EnergyProperties, f64)> {
    use rayon::prelude::*;
    Energy::ALL
        .par_iter()
        .map(|&e| (e, classify_energy(e, seed), check_matrix_symmetry(e, symmetry_trials, seed)))
        .collect()
}

fn grid_csv(values: &[Vec<f64>], range: (f64, f64)) -> String {
    let n = values.len();
    let coord = |i: usize| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64;
    let mut s = String::from("sigma2\\sigma1");
    for i in 0..n {
        write!(s, ",{:.16e}", coord(i)).unwrap();
    }
    s.push('\n');
    for (r, row) in values.iter().enumerate() {
        write!(s, "{:.16e}", coord(r)).unwrap();
        for v in row {
            write!(s, ",{v:.16e}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn run_analyze(seed: u64, a: &AnalyzeArgs) -> Result<(), CliError> {
    if a.grid < 2 {
        return Err(CliError::Input("--grid: needs at least 2 samples".into()));
    }
    if !(a.range_min > 0.0 && a.range_max > a.range_min) {
        return Err(CliError::Input("--range-min/--range-max: need 0 < min < max".into()));
    }
    if a.symmetry_trials == 0 {
        return Err(CliError::Input("--symmetry-trials: must be positive".into()));
    }
    let energies = analyze_energies(seed, a.symmetry_trials)
        .into_iter()
        .map(|(e, properties, symmetry_violation)| EnergyEntry { name: e.name(), properties, symmetry_violation })
        .collect();
    let report = EnergyReport { seed, symmetry_trials: a.symmetry_trials, energies };
    write_file(&a.out, &json::to_string(&report))?;
    if let Some(dir) = &a.levelset_dir {
        let range = (a.range_min, a.range_max);
        for e in Energy::ALL {
            for (kind, tag) in [(LevelSetKind::F, "f"), (LevelSetKind::FSym, "fsym")] {
                let grid = sample_level_sets(e, kind, a.grid, range);
                write_file(&dir.join(format!("{}_{tag}.csv", e.name())), &grid_csv(&grid, range))?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsReport {
    energy: &'static str,
    breakdown: EnergyBreakdown,
    metrics: [MapMetrics; 2],
}

fn run_metrics(cli: &Cli, a: &MetricsArgs) -> Result<(), CliError> {
    let mut cfg = SolverConfig::default();
    let mut energy = Energy::Arap;
    if let Some(path) = &cli.config {
        let entries = read_config_file(path).map_err(input("--config"))?;
        energy = apply_config(&mut cfg, &entries).map_err(input("--config"))?.unwrap_or(energy);
    }
    if let Some(name) = &a.energy {
        energy = parse_energy(name, "--energy")?;
    }
    let m1 = load_mesh(&a.source, None).map_err(input("--source"))?;
    let m2 = load_mesh(&a.target, None).map_err(input("--target"))?;
    let io = input("--map-dir");
    let d = &a.map_dir;
    let p12 = read_barycentric_map(&d.join("p12.txt")).map_err(&io)?;
    let p21 = read_barycentric_map(&d.join("p21.txt")).map_err(&io)?;
    let x12 = read_vertex_image(&d.join("x12.txt")).map_err(&io)?;
    let x21 = read_vertex_image(&d.join("x21.txt")).map_err(&io)?;
    let sizes_ok = p12.len() == m1.num_vertices()
        && x12.len() == m1.num_vertices()
        && p21.len() == m2.num_vertices()
        && x21.len() == m2.num_vertices()
        && p12.is_valid_for(&m2)
        && p21.is_valid_for(&m1);
    if !sizes_ok {
        return Err(CliError::Input("--map-dir: map sizes do not match the meshes".into()));
    }
    let (n1, s1) = m1.normalize_volume();
    let (n2, s2) = m2.normalize_volume();
    let (x12, x21) = (scale_points(&x12, s2), scale_points(&x21, s1));
    let w = cfg.weights(cfg.beta_end);
    let breakdown = Objective::new(&n1, &n2, energy)
        .energy([&p12, &p21], [&x12, &x21], &w)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    let metric = |src: &TetMesh, dst: &TetMesh, x: &[Vec3]| {
        map_metrics(src, dst, x, breakdown.e_arap, breakdown.e_r).map_err(|e| CliError::Input(e.to_string()))
    };
    let metrics = [metric(&n1, &n2, &x12)?, metric(&n2, &n1, &x21)?];
    write_file(&a.out, &json::to_string(&MetricsReport { energy: energy.name(), breakdown, metrics }))?;
    if let Some(dir) = &a.distortion_dir {
        std::fs::create_dir_all(dir).map_err(input("--distortion-dir"))?;
        write_distortion_csv(&per_tet_distortion(&n1, &x12, energy), &dir.join("distortion12.csv")).map_err(|e| CliError::Input(e.to_string()))?;
        write_distortion_csv(&per_tet_distortion(&n2, &x21, energy), &dir.join("distortion21.csv")).map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(())
}

fn run_push(a: &PushArgs) -> Result<(), CliError> {
    let src = load_mesh(&a.source, None).map_err(input("--source"))?;
    let x = read_vertex_image(&a.image).map_err(input("--image"))?;
    if x.len() != src.num_vertices() {
        return Err(CliError::Input(format!(
            "--image: {} rows for a mesh with {} vertices",
            x.len(),
            src.num_vertices()
        )));
    }
    let volumetric = MeshFormat::from_path(&a.input);
    let geometry = match volumetric {
        Some(fmt) => {
            let (points, tets) = load_raw(&a.input, Some(fmt)).map_err(input("--input"))?;
            EmbeddedGeometry { kind: GeometryKind::IndexedMesh, points, cells: tets.iter().map(|t| t.to_vec()).collect() }
        }
        None => read_obj(&a.input).map_err(input("--input"))?,
    };
    let (mapped, skips) = push_forward(&geometry, &src, &x).map_err(input("--input"))?;
    match volumetric {
        Some(fmt) => {
            let tets: Vec<[usize; 4]> = mapped.cells.iter().map(|c| [c[0], c[1], c[2], c[3]]).collect();
            write_raw(&mapped.points, &tets, &a.output, fmt).map_err(input("--output"))?;
        }
        None => write_obj(&mapped, &a.output).map_err(input("--output"))?,
    }
    if let Some(path) = &a.skip_report {
        write_file(path, &json::to_string(&skips))?;
    }
    if !skips.skipped.is_empty() {
        eprintln!(
            "warning: {} point(s) lie outside the source mesh (max distance {:.3e}); they were clamped",
            skips.skipped.len(),
            skips.max_distance
        );
    }
    Ok(())
}

fn run_pull(a: &PullArgs) -> Result<(), CliError> {
    let target = load_mesh(&a.target, None).map_err(input("--target"))?;
    let p = read_barycentric_map(&a.map).map_err(input("--map"))?;
    if !p.is_valid_for(&target) {
        return Err(CliError::Input("--map: rows do not fit the target mesh".into()));
    }
    let field = read_field_csv(&a.field).map_err(input("--field"))?;
    let out = crate::transfer::pull_back_field(&field, &p, &target).map_err(input("--field"))?;
    write_field_csv(&out, &a.output).map_err(input("--output"))
}
