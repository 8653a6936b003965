//! Workspace-file ingestion, planning commands and result export.
//!
//! Commands: `enumerate | plan | classify | field`. Exit codes: 0 success,
//! 1 parse error, 2 invalid workspace, 3 no solution. The `NAV_SEED`
//! environment variable overrides the workspace file's seed.

use navfield::{
    planner, topology, transform, ForestWorld, IntegrationConfig, OptimizerConfig, PathPolyline,
    PlannerConfig, RegionKind, RegionPreference, Squircle, Vec2, WeightVector, WorldTag,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid workspace: {0}")]
    Invalid(String),
    #[error("no solution")]
    NoSolution,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::NoSolution => 3,
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Parse(format!("io: {e}"))
}

// ---------------------------------------------------------------------------
// Workspace file schema (version 1).

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquircleRecord {
    pub center: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub theta: f64,
    pub kappa: f64,
}

impl SquircleRecord {
    pub fn to_squircle(&self) -> Result<Squircle, CliError> {
        Squircle::new(
            Vec2::new(self.center[0], self.center[1]),
            self.width,
            self.height,
            self.theta,
            self.kappa,
        )
        .map_err(|e| CliError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionRecord {
    pub center: [f64; 2],
    pub width: f64,
    pub height: f64,
    pub theta: f64,
    pub kappa: f64,
    pub kind: RegionKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkspaceFile {
    pub schema_version: u32,
    pub boundary: SquircleRecord,
    pub obstacles: Vec<SquircleRecord>,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    #[serde(default)]
    pub regions: Vec<RegionRecord>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub struct LoadedWorkspace {
    pub world: ForestWorld,
    pub regions: Vec<RegionPreference>,
    pub seed: u64,
}

pub fn load_workspace(path: &Path) -> Result<LoadedWorkspace, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let file: WorkspaceFile =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(e.to_string()))?;
    if file.schema_version != 1 {
        return Err(CliError::Parse(format!(
            "unsupported schema_version {}",
            file.schema_version
        )));
    }
    let boundary = file.boundary.to_squircle()?;
    let obstacles: Vec<Squircle> = file
        .obstacles
        .iter()
        .map(|r| r.to_squircle())
        .collect::<Result<_, _>>()?;
    let world = ForestWorld::new(
        boundary,
        &obstacles,
        Vec2::new(file.start[0], file.start[1]),
        Vec2::new(file.goal[0], file.goal[1]),
    )
    .map_err(|e| CliError::Invalid(e.to_string()))?;
    let regions = file
        .regions
        .iter()
        .map(|r| {
            Ok(RegionPreference {
                region: Squircle::new(
                    Vec2::new(r.center[0], r.center[1]),
                    r.width,
                    r.height,
                    r.theta,
                    r.kappa,
                )
                .map_err(|e| CliError::Invalid(e.to_string()))?,
                kind: r.kind,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let seed = match std::env::var("NAV_SEED") {
        Ok(s) => s
            .parse()
            .map_err(|_| CliError::Parse("NAV_SEED must be an integer".into()))?,
        Err(_) => file.seed.unwrap_or(0),
    };
    Ok(LoadedWorkspace {
        world,
        regions,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Shared run configuration assembled from CLI flags.

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunConfig {
    pub planner: PlannerConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(planner: PlannerConfig, seed: u64) -> Self {
        let mut planner = planner;
        planner.integration.seed = seed;
        Self { planner, seed }
    }
}

// ---------------------------------------------------------------------------
// Numeric formatting: all floating-point output at 9 significant digits.

pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn json_f64(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(sig9(x))
    } else {
        serde_json::Value::Null
    }
}

fn json_vec(v: &[f64]) -> serde_json::Value {
    serde_json::Value::Array(v.iter().map(|&x| json_f64(x)).collect())
}

fn path_csv(path: &PathPolyline) -> String {
    let mut out = String::from("t,x,y\n");
    for (t, p) in path.times.iter().zip(&path.samples) {
        let _ = writeln!(out, "{:.8e},{:.8e},{:.8e}", t, p.x, p.y);
    }
    out
}

fn solution_json(sol: &planner::Solution, index: usize) -> serde_json::Value {
    json!({
        "index": index,
        "signs": sol.signature.signs,
        "distances": json_vec(&sol.signature.distances),
        "signed": json_vec(&sol.signature.signed),
        "weights": {
            "goal_weight": json_f64(sol.weights.goal_weight),
            "obstacle_weights": json_vec(&sol.weights.obstacle_weights),
        },
        "roots": sol.forest.roots(),
        "fisher": json_f64(sol.fisher),
        "forest_csv": format!("solution_{index:02}_forest.csv"),
        "point_csv": format!("solution_{index:02}_point.csv"),
    })
}

fn write_solution_set(
    out_dir: &Path,
    solutions: &[planner::Solution],
    failures: &[planner::ClassFailure],
    cfg: &RunConfig,
    integrations: usize,
    elapsed_s: f64,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(io_err)?;
    let records: Vec<serde_json::Value> = solutions
        .iter()
        .enumerate()
        .map(|(i, s)| solution_json(s, i))
        .collect();
    let solutions_text =
        serde_json::to_string_pretty(&serde_json::Value::Array(records)).unwrap() + "\n";
    std::fs::write(out_dir.join("solutions.json"), solutions_text).map_err(io_err)?;
    for (i, sol) in solutions.iter().enumerate() {
        std::fs::write(
            out_dir.join(format!("solution_{i:02}_forest.csv")),
            path_csv(&sol.forest_path),
        )
        .map_err(io_err)?;
        std::fs::write(
            out_dir.join(format!("solution_{i:02}_point.csv")),
            path_csv(&sol.point_path),
        )
        .map_err(io_err)?;
    }
    let failures_json: Vec<serde_json::Value> = failures
        .iter()
        .map(|f| {
            json!({
                "signs": f.target.signs,
                "reason": f.reason,
            })
        })
        .collect();
    let report = json!({
        "config": serde_json::to_value(cfg).unwrap(),
        "failed_classes": failures_json,
        "solution_count": solutions.len(),
        "integrations": integrations,
        "timings": { "total_s": elapsed_s },
    });
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report).unwrap() + "\n",
    )
    .map_err(io_err)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands.

pub fn cmd_enumerate(workspace: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let ws = load_workspace(workspace)?;
    let cfg = RunConfig::new(cfg.planner, ws.seed);
    let t0 = Instant::now();
    let report = planner::enumerate_classes(&ws.world, &cfg.planner)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let elapsed = t0.elapsed().as_secs_f64();
    write_solution_set(
        out_dir,
        &report.solutions,
        &report.failures,
        &cfg,
        report.integrations,
        elapsed,
    )?;
    if report.solutions.is_empty() {
        return Err(CliError::NoSolution);
    }
    Ok(())
}

pub fn cmd_plan(
    workspace: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    signature: Option<&str>,
    use_regions: bool,
) -> Result<(), CliError> {
    let ws = load_workspace(workspace)?;
    let cfg = RunConfig::new(cfg.planner, ws.seed);
    let t0 = Instant::now();
    if let Some(sig_text) = signature {
        let signs = parse_signs(sig_text)?;
        let chain = transform::build_chain(&ws.world, cfg.planner.switch_sharpness)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        let candidates = topology::candidate_signatures(&chain.point_world());
        let target = candidates
            .into_iter()
            .find(|c| c.signs == signs)
            .ok_or_else(|| CliError::Invalid(format!("signature must have {} entries", chain.points().len())))?;
        match planner::plan_for_class(&ws.world, &target, &cfg.planner) {
            Ok(sol) => {
                let elapsed = t0.elapsed().as_secs_f64();
                write_solution_set(out_dir, &[sol], &[], &cfg, 0, elapsed)?;
                Ok(())
            }
            Err(navfield::planner::PlannerError::NotRealizable { reason }) => {
                let elapsed = t0.elapsed().as_secs_f64();
                let failure = planner::ClassFailure {
                    target,
                    reason,
                };
                write_solution_set(out_dir, &[], &[failure], &cfg, 0, elapsed)?;
                Err(CliError::NoSolution)
            }
            Err(e) => Err(CliError::Invalid(e.to_string())),
        }
    } else if use_regions {
        let report = planner::enumerate_classes(&ws.world, &cfg.planner)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        let kept = planner::filter_by_regions(&report.solutions, &ws.regions);
        let elapsed = t0.elapsed().as_secs_f64();
        write_solution_set(
            out_dir,
            &kept,
            &report.failures,
            &cfg,
            report.integrations,
            elapsed,
        )?;
        if kept.is_empty() {
            return Err(CliError::NoSolution);
        }
        Ok(())
    } else {
        Err(CliError::Parse(
            "plan requires --signature or --regions".into(),
        ))
    }
}

fn parse_signs(text: &str) -> Result<Vec<i8>, CliError> {
    text.split(',')
        .map(|t| match t.trim() {
            "1" | "+1" => Ok(1),
            "-1" => Ok(-1),
            other => Err(CliError::Parse(format!("bad sign entry {other:?}"))),
        })
        .collect()
}

pub fn parse_roots(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| CliError::Parse(format!("bad root index {t:?}")))
        })
        .collect()
}

fn reroot_world(world: &ForestWorld, roots: &[usize]) -> Result<ForestWorld, CliError> {
    if roots.len() != world.trees().len() {
        return Err(CliError::Invalid(format!(
            "expected {} root indices, got {}",
            world.trees().len(),
            roots.len()
        )));
    }
    let mut w = world.clone();
    for (i, &r) in roots.iter().enumerate() {
        w = w
            .rerooted(i, r)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    Ok(w)
}

pub fn read_path_csv(path: &Path) -> Result<PathPolyline, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    let mut samples = Vec::new();
    let mut times = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 && line.starts_with('t') {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(CliError::Parse(format!("csv line {} malformed", i + 1)));
        }
        let vals: Vec<f64> = cols
            .iter()
            .map(|c| {
                c.trim()
                    .parse()
                    .map_err(|_| CliError::Parse(format!("csv line {} malformed", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        times.push(vals[0]);
        samples.push(Vec2::new(vals[1], vals[2]));
    }
    if samples.len() < 2 {
        return Err(CliError::Parse("path csv needs at least 2 samples".into()));
    }
    Ok(PathPolyline {
        samples,
        times,
        converged: true,
        world_tag: WorldTag::Forest,
    })
}

/// Classify an externally supplied forest-frame path: print its D-signature
/// and H-signature as JSON on stdout.
pub fn cmd_classify(
    workspace: &Path,
    path_csv_file: &Path,
    roots: Option<&[usize]>,
    switch_sharpness: f64,
) -> Result<String, CliError> {
    let ws = load_workspace(workspace)?;
    let world = match roots {
        Some(r) => reroot_world(&ws.world, r)?,
        None => ws.world,
    };
    let chain = transform::build_chain(&world, switch_sharpness)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let forest_path = read_path_csv(path_csv_file)?;
    let point_path = chain
        .map_path(&forest_path)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let pw = chain.point_world();
    let d = topology::d_signature(&pw, &point_path)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let h = topology::h_signature(&pw, &point_path)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let out = json!({
        "signs": d.signs,
        "distances": json_vec(&d.distances),
        "signed": json_vec(&d.signed),
        "h_signature": h
            .components
            .iter()
            .map(|c| json!([json_f64(c.re), json_f64(c.im)]))
            .collect::<Vec<_>>(),
    });
    Ok(serde_json::to_string_pretty(&out).unwrap() + "\n")
}

/// Sample the forest potential on a regular grid and write x,y,value CSV.
/// Cells outside the free space get the value `nan`.
pub fn cmd_field(
    workspace: &Path,
    weights: &[f64],
    grid: (usize, usize),
    out_file: &Path,
    roots: Option<&[usize]>,
    switch_sharpness: f64,
) -> Result<(), CliError> {
    let ws = load_workspace(workspace)?;
    let world = match roots {
        Some(r) => reroot_world(&ws.world, r)?,
        None => ws.world,
    };
    if weights.is_empty() {
        return Err(CliError::Parse("--weights must be non-empty".into()));
    }
    let w = WeightVector::from_flat(weights);
    let m: usize = world.trees().len();
    if w.obstacle_weights.len() != m {
        return Err(CliError::Invalid(format!(
            "expected 1+{m} weights (goal then one per tree), got {}",
            weights.len()
        )));
    }
    let chain = transform::build_chain(&world, switch_sharpness)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let b = world.boundary();
    let (nx, ny) = grid;
    let mut out = String::from("x,y,value\n");
    for j in 0..ny {
        for i in 0..nx {
            let x = b.center().x - b.width() / 2.0 + b.width() * (i as f64 + 0.5) / nx as f64;
            let y = b.center().y - b.height() / 2.0 + b.height() * (j as f64 + 0.5) / ny as f64;
            let p = Vec2::new(x, y);
            let v = if world.in_free_space(p) {
                navfield::potential::forest_potential(&chain, &w, p)
                    .map(sig9)
                    .unwrap_or(f64::NAN)
            } else {
                f64::NAN
            };
            let _ = writeln!(out, "{:.8e},{:.8e},{}", x, y, if v.is_nan() { "nan".to_string() } else { format!("{v:.8e}") });
        }
    }
    if let Some(dir) = out_file.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
    }
    std::fs::write(out_file, out).map_err(io_err)?;
    Ok(())
}

// ---------------------------------------------------------------------------

/// Build a PlannerConfig from optional flag overrides.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub step: Option<f64>,
    pub goal_tol: Option<f64>,
    pub max_steps: Option<usize>,
    pub step_size: Option<f64>,
    pub margin: Option<f64>,
    pub fd_step: Option<f64>,
    pub grad_threshold: Option<f64>,
    pub max_iters: Option<usize>,
    pub switch_sharpness: Option<f64>,
}

pub fn planner_config(ov: &Overrides) -> PlannerConfig {
    let mut integration = IntegrationConfig::default();
    let mut optimizer = OptimizerConfig::default();
    if let Some(v) = ov.step {
        integration.step = v;
    }
    if let Some(v) = ov.goal_tol {
        integration.goal_tol = v;
    }
    if let Some(v) = ov.max_steps {
        integration.max_steps = v;
    }
    if let Some(v) = ov.step_size {
        optimizer.step_size = v;
    }
    if let Some(v) = ov.margin {
        optimizer.margin = v;
    }
    if let Some(v) = ov.fd_step {
        optimizer.fd_step = v;
    }
    if let Some(v) = ov.grad_threshold {
        optimizer.grad_threshold = v;
    }
    if let Some(v) = ov.max_iters {
        optimizer.max_iters = v;
    }
    PlannerConfig {
        optimizer,
        integration,
        switch_sharpness: ov.switch_sharpness.unwrap_or(1.0),
    }
}
