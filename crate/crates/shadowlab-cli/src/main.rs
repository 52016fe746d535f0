//! Batch experiment runner: pseudotrajectory shadowing, Hölder-exponent
//! sweeps, circle-map bound sweeps, cocycle solvers, dichotomy reports, and
//! the lift/residual/growth experiments.
//!
//! Exit codes: 0 pass, 1 assertion failure, 2 inconclusive, 3 bad
//! configuration (unknown names, missing seed), 4 invalid grid, 5 unwritable
//! output.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

use shadowlab::bridge;
use shadowlab::cocycle::{
    brute_force_oracle, estimate_gain, fit_growth, solve_min_sup, Cocycle, MinSupProblem,
};
use shadowlab::dichotomy::{
    bounded_response_check, detect_half, orbit_hyperbolicity_check, transversality_check,
    trichotomy_1d, DetectParams, Half, OrbitVerdict, Span, TrichotomyCase,
};
use shadowlab::maps::{map_by_name, SmoothMap};
use shadowlab::pseudo::{
    estimate_holder_exponent, generate, shadow_newton, shadow_optimal, validate, ExponentConfig,
    NoiseKind, NoiseModel, SolverChoice, WindowRule,
};
use shadowlab::report;
use shadowlab::space::Pt;
use shadowlab::stats::geometric_grid;

const EXIT_FAIL: u8 = 1;
const EXIT_INCONCLUSIVE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_GRID: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(
    name = "shadowlab",
    about = "Shadowing and dichotomy experiments on low-dimensional maps",
    version
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one pseudotrajectory and shadow it.
    Shadow(ShadowArgs),
    /// Hölder-exponent sweep over a geometric defect grid.
    Exponent(ExponentArgs),
    /// Randomized sweeps of the circle-map tracking bounds.
    CircleVerify(CircleVerifyArgs),
    /// Cocycle file import/export and min-sup solvers.
    Cocycle(CocycleArgs),
    /// Dichotomy detection, transversality, trichotomy, orbit probes.
    Dichotomy(DichotomyArgs),
    /// Lift, residual, and growth experiments.
    Bridge(BridgeArgs),
}

#[derive(Args)]
struct ShadowArgs {
    #[arg(long)]
    map: Option<String>,
    /// Circle-map neighborhood half-width.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// none | uniform | adversarial
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Start point, comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
    /// auto | optimal | newton
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExponentArgs {
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    d_start: Option<f64>,
    #[arg(long)]
    d_stop: Option<f64>,
    #[arg(long)]
    d_points: Option<usize>,
    /// Fixed window length (overrides the scaled rule).
    #[arg(long)]
    fixed_n: Option<usize>,
    /// Scaled windows n = window_c · d^(−omega).
    #[arg(long)]
    window_c: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    max_window: Option<usize>,
    /// Per-trial CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-cell summary CSV output path.
    #[arg(long)]
    cells_out: Option<PathBuf>,
}

#[derive(Args)]
struct CircleVerifyArgs {
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// all | backward-tracking | hover | accumulation
    #[arg(long)]
    check: Option<String>,
}

#[derive(Args)]
struct CocycleArgs {
    /// Cocycle text file to load.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Built-in cocycle name (identity_1d, identity_2d, scalar_two,
    /// scalar_half, diag_half_two, cat, expand_contract, contract_expand).
    #[arg(long)]
    builtin: Option<String>,
    /// Length for built-in cocycles.
    #[arg(long)]
    len: Option<usize>,
    /// info | solve | oracle | gain | fit | export
    #[arg(long)]
    op: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    i: Option<i64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Destination for --op export.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DichotomyArgs {
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    /// Orbit base point for map-based checks.
    #[arg(long, allow_hyphen_values = true)]
    p0: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long)]
    len: Option<usize>,
    /// detect | transversality | trichotomy | response | orbit
    #[arg(long)]
    check: Option<String>,
    #[arg(long)]
    probe: Option<usize>,
    /// Window length for the trichotomy scan.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BridgeArgs {
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    /// lift | residual | growth
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors carrying the process exit code.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }

    fn grid(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_GRID,
            message: msg.into(),
        }
    }

    fn io(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: msg.into(),
        }
    }
}

impl From<shadowlab::Error> for CliError {
    fn from(e: shadowlab::Error) -> Self {
        let code = match &e {
            shadowlab::Error::InvalidParams(_) | shadowlab::Error::Unsupported(_) => EXIT_CONFIG,
            shadowlab::Error::WindowTooShort { .. } => EXIT_GRID,
            shadowlab::Error::Io(_) | shadowlab::Error::Parse(_) => EXIT_IO,
            _ => EXIT_FAIL,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Values from the TOML config file, consulted when a flag is absent.
struct FileConfig {
    table: Option<toml::Table>,
}

impl FileConfig {
    fn load(path: &Option<PathBuf>) -> CliResult<Self> {
        let table = match path {
            None => None,
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::io(format!("cannot read config {:?}: {}", p, e)))?;
                Some(
                    text.parse::<toml::Table>()
                        .map_err(|e| CliError::config(format!("bad config: {}", e)))?,
                )
            }
        };
        Ok(FileConfig { table })
    }

    fn value(&self, section: &str, key: &str) -> Option<&toml::Value> {
        self.table
            .as_ref()?
            .get(section)
            .and_then(|s| s.as_table())
            .and_then(|t| t.get(key))
    }

    fn f64(&self, section: &str, key: &str) -> Option<f64> {
        self.value(section, key).and_then(|v| {
            v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
        })
    }

    fn usize(&self, section: &str, key: &str) -> Option<usize> {
        self.value(section, key)
            .and_then(|v| v.as_integer())
            .map(|i| i as usize)
    }

    fn u64(&self, section: &str, key: &str) -> Option<u64> {
        self.value(section, key)
            .and_then(|v| v.as_integer())
            .map(|i| i as u64)
    }

    fn string(&self, section: &str, key: &str) -> Option<String> {
        self.value(section, key)
            .and_then(|v| v.as_str())
            .map(|s| s.to_string())
    }
}

fn run_id(resolved: &[(&str, String)]) -> String {
    let mut canon: Vec<String> = resolved
        .iter()
        .map(|(k, v)| format!("{}={}", k, v))
        .collect();
    canon.sort();
    let mut hasher = Sha256::new();
    hasher.update(canon.join("\n").as_bytes());
    let digest = hasher.finalize();
    digest[..6].iter().map(|b| format!("{:02x}", b)).collect()
}

fn parse_point(s: &str, dim: usize) -> CliResult<Pt> {
    let coords: Vec<f64> = s
        .split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("bad coordinate '{}'", c)))
        })
        .collect::<CliResult<_>>()?;
    if coords.len() != dim {
        return Err(CliError::config(format!(
            "expected {} coordinates, got {}",
            dim,
            coords.len()
        )));
    }
    Ok(Pt::new(&coords))
}

fn write_out(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {:?}: {}", path, e)))
}

fn load_map(name: &Option<String>, delta: Option<f64>) -> CliResult<Box<dyn SmoothMap>> {
    let name = name
        .as_deref()
        .ok_or_else(|| CliError::config("--map is required"))?;
    Ok(map_by_name(name, delta)?)
}

fn builtin_cocycle(name: &str, len: usize) -> CliResult<Cocycle> {
    use nalgebra::DMatrix;
    let half = (len / 2) as i64;
    let c = match name {
        "identity_1d" => Cocycle::scalar(&vec![1.0; len], -half),
        "identity_2d" => Cocycle::constant(DMatrix::identity(2, 2), -half, len),
        "scalar_two" => Cocycle::scalar(&vec![2.0; len], -half),
        "scalar_half" => Cocycle::scalar(&vec![0.5; len], -half),
        "diag_half_two" => Cocycle::constant(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
            -half,
            len,
        ),
        "cat" => Cocycle::constant(shadowlab::maps::CatMap::matrix(), -half, len),
        "expand_contract" => {
            let f: Vec<f64> = (0..len).map(|i| if i < len / 2 { 2.0 } else { 0.5 }).collect();
            Cocycle::scalar(&f, -half)
        }
        "contract_expand" => {
            let f: Vec<f64> = (0..len).map(|i| if i < len / 2 { 0.5 } else { 2.0 }).collect();
            Cocycle::scalar(&f, -half)
        }
        other => return Err(CliError::config(format!("unknown builtin cocycle '{}'", other))),
    };
    Ok(c?)
}

fn load_cocycle(
    file: &Option<PathBuf>,
    builtin: &Option<String>,
    len: Option<usize>,
) -> CliResult<Cocycle> {
    match (file, builtin) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("cannot read {:?}: {}", path, e)))?;
            Ok(Cocycle::from_text(&text)?)
        }
        (None, Some(name)) => builtin_cocycle(name, len.unwrap_or(128)),
        _ => Err(CliError::config(
            "provide exactly one of --file and --builtin",
        )),
    }
}

fn cmd_shadow(args: &ShadowArgs, cfg: &FileConfig) -> CliResult<u8> {
    let sec = "shadow";
    let map_name = args.map.clone().or_else(|| cfg.string(sec, "map"));
    let map = load_map(&map_name, args.delta.or_else(|| cfg.f64(sec, "delta")))?;
    let d = args
        .d
        .or_else(|| cfg.f64(sec, "d"))
        .ok_or_else(|| CliError::config("--d is required"))?;
    if !(d > 0.0 && d < 1.0) {
        return Err(CliError::grid(format!("defect {} outside (0, 1)", d)));
    }
    let n = args.n.or_else(|| cfg.usize(sec, "n")).unwrap_or(100);
    let noise_name = args
        .noise
        .clone()
        .or_else(|| cfg.string(sec, "noise"))
        .unwrap_or_else(|| "uniform".into());
    let noise_kind = NoiseKind::parse(&noise_name)?;
    let seed = args.seed.or_else(|| cfg.u64(sec, "seed"));
    if noise_kind != NoiseKind::None && seed.is_none() {
        return Err(CliError::config("--seed is required for randomized runs"));
    }
    let seed = seed.unwrap_or(0);
    let solver = SolverChoice::parse(
        &args
            .solver
            .clone()
            .or_else(|| cfg.string(sec, "solver"))
            .unwrap_or_else(|| "auto".into()),
    )?;
    let start = match &args.start {
        Some(s) => parse_point(s, map.space().dim())?,
        None => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            map.typical_point(&mut rng)
        }
    };

    let id = run_id(&[
        ("cmd", "shadow".into()),
        ("map", map.name().into()),
        ("d", format!("{:e}", d)),
        ("n", n.to_string()),
        ("noise", noise_name.clone()),
        ("seed", seed.to_string()),
    ]);

    let model = NoiseModel {
        kind: noise_kind,
        seed,
    };
    let traj = generate(map.as_ref(), &start, n, d, &model)?;
    let v = validate(map.as_ref(), &traj, d);
    let res = match solver {
        SolverChoice::Optimal => shadow_optimal(map.as_ref(), &traj)?,
        SolverChoice::Newton => shadow_newton(map.as_ref(), &traj)?,
        SolverChoice::Auto => {
            if map.space().dim() == 1 {
                shadow_optimal(map.as_ref(), &traj)?
            } else if map.inverse(&traj.points[0]).is_some() {
                shadow_newton(map.as_ref(), &traj)?
            } else {
                shadow_optimal(map.as_ref(), &traj)?
            }
        }
    };
    println!(
        "map={} d={:e} n={} max_defect={:e} epsilon={:e} solver={} x0={:?} config={}",
        map.name(),
        d,
        n,
        v.max_defect,
        res.epsilon,
        res.solver.label(),
        res.x0.coords(),
        id
    );
    if let Some(path) = &args.out {
        let row = shadowlab::pseudo::TrialRow {
            map: map.name().to_string(),
            d,
            n,
            trial: 0,
            epsilon: res.epsilon,
            solver: res.solver.label(),
            status: "ok",
        };
        write_out(path, &report::shadow_csv(&[row], &id))?;
    }
    Ok(0)
}

fn cmd_exponent(args: &ExponentArgs, cfg: &FileConfig) -> CliResult<u8> {
    let sec = "exponent";
    let map_name = args.map.clone().or_else(|| cfg.string(sec, "map"));
    let map = load_map(&map_name, args.delta.or_else(|| cfg.f64(sec, "delta")))?;
    let d_start = args
        .d_start
        .or_else(|| cfg.f64(sec, "d_start"))
        .unwrap_or(1e-6);
    let d_stop = args
        .d_stop
        .or_else(|| cfg.f64(sec, "d_stop"))
        .unwrap_or(1e-3);
    let d_points = args
        .d_points
        .or_else(|| cfg.usize(sec, "d_points"))
        .unwrap_or(8);
    if !(d_start > 0.0 && d_stop > d_start && d_stop < 1.0) || d_points < 4 {
        return Err(CliError::grid(format!(
            "bad defect grid: [{:e}, {:e}] with {} points",
            d_start, d_stop, d_points
        )));
    }
    let window = match args.fixed_n.or_else(|| cfg.usize(sec, "fixed_n")) {
        Some(n) => WindowRule::Fixed(n),
        None => WindowRule::Scaled {
            c: args.window_c.or_else(|| cfg.f64(sec, "window_c")).unwrap_or(1.0),
            omega: args.omega.or_else(|| cfg.f64(sec, "omega")).unwrap_or(0.5),
        },
    };
    let trials = args.trials.or_else(|| cfg.usize(sec, "trials")).unwrap_or(32);
    let noise_name = args
        .noise
        .clone()
        .or_else(|| cfg.string(sec, "noise"))
        .unwrap_or_else(|| "adversarial".into());
    let noise = NoiseKind::parse(&noise_name).map_err(CliError::from)?;
    let seed = args
        .seed
        .or_else(|| cfg.u64(sec, "seed"))
        .ok_or_else(|| CliError::config("--seed is required for randomized runs"))?;
    let solver = SolverChoice::parse(
        &args
            .solver
            .clone()
            .or_else(|| cfg.string(sec, "solver"))
            .unwrap_or_else(|| "auto".into()),
    )?;
    let config = ExponentConfig {
        d_grid: geometric_grid(d_start, d_stop, d_points),
        window,
        trials,
        noise,
        seed,
        solver,
        max_window: args
            .max_window
            .or_else(|| cfg.usize(sec, "max_window"))
            .unwrap_or(200_000),
    };
    let id = run_id(&[
        ("cmd", "exponent".into()),
        ("map", map.name().into()),
        ("d_start", format!("{:e}", d_start)),
        ("d_stop", format!("{:e}", d_stop)),
        ("d_points", d_points.to_string()),
        ("window", format!("{:?}", window)),
        ("trials", trials.to_string()),
        ("noise", noise_name.clone()),
        ("seed", seed.to_string()),
    ]);
    let est = estimate_holder_exponent(map.as_ref(), &config)?;
    println!("{} config={}", report::exponent_summary(&est), id);
    for c in &est.cells {
        println!(
            "  d={:.6e} n={} worst_eps={:.6e} ok={} failed={}",
            c.d, c.n, c.worst_eps, c.ok_trials, c.failed_trials
        );
    }
    if let Some(path) = &args.out {
        write_out(path, &report::shadow_csv(&est.rows, &id))?;
    }
    if let Some(path) = &args.cells_out {
        write_out(path, &report::cells_csv(&est.cells, &id))?;
    }
    if est.failed_cells > 0 {
        return Ok(EXIT_INCONCLUSIVE);
    }
    Ok(0)
}

fn cmd_circle_verify(args: &CircleVerifyArgs, cfg: &FileConfig) -> CliResult<u8> {
    let sec = "circle-verify";
    let delta = args.delta.or_else(|| cfg.f64(sec, "delta")).unwrap_or(0.1);
    let map = shadowlab::maps::build_circle_cubic(shadowlab::maps::CircleCubicParams { delta })?;
    let samples = args
        .samples
        .or_else(|| cfg.usize(sec, "samples"))
        .unwrap_or(1000);
    let seed = args
        .seed
        .or_else(|| cfg.u64(sec, "seed"))
        .ok_or_else(|| CliError::config("--seed is required for randomized runs"))?;
    let which = args
        .check
        .clone()
        .or_else(|| cfg.string(sec, "check"))
        .unwrap_or_else(|| "all".into());
    let mut failures = 0usize;
    let mut run = |name: &str, rep: shadowlab::pseudo::SweepReport| {
        let status = if rep.violations == 0 { "pass" } else { "FAIL" };
        println!(
            "{}: {} (samples={} violations={} worst_ratio={:.4})",
            name, status, rep.samples, rep.violations, rep.worst_ratio
        );
        if rep.violations > 0 {
            failures += 1;
        }
    };
    if which == "all" || which == "backward-tracking" {
        run(
            "backward-tracking",
            shadowlab::pseudo::check_backward_tracking(&map, samples, seed)?,
        );
    }
    if which == "all" || which == "hover" {
        run(
            "hover",
            shadowlab::pseudo::check_hover_radius(&map, samples, seed ^ 1)?,
        );
    }
    if which == "all" || which == "accumulation" {
        run(
            "accumulation",
            shadowlab::pseudo::check_backward_accumulation(&map, samples, seed ^ 2)?,
        );
    }
    Ok(if failures == 0 { 0 } else { EXIT_FAIL })
}

fn cmd_cocycle(args: &CocycleArgs, cfg: &FileConfig) -> CliResult<u8> {
    let sec = "cocycle";
    let cocycle = load_cocycle(
        &args.file,
        &args.builtin.clone().or_else(|| cfg.string(sec, "builtin")),
        args.len.or_else(|| cfg.usize(sec, "len")),
    )?;
    let op = args
        .op
        .clone()
        .or_else(|| cfg.string(sec, "op"))
        .unwrap_or_else(|| "info".into());
    let start = args.i.unwrap_or(cocycle.k_min());
    let n = args.n.unwrap_or(cocycle.len().min(10));
    match op.as_str() {
        "info" => {
            println!(
                "dim={} window=[{}, {}] bound={:.6}",
                cocycle.dim(),
                cocycle.k_min(),
                cocycle.k_max(),
                cocycle.bound()
            );
        }
        "export" => {
            let path = args
                .out
                .as_ref()
                .ok_or_else(|| CliError::config("--out is required for export"))?;
            write_out(path, &cocycle.to_text())?;
            println!("wrote {:?}", path);
        }
        "solve" | "oracle" => {
            // Unit forcing along the first axis.
            let m = cocycle.dim();
            let mut w = nalgebra::DVector::zeros(m);
            w[0] = 1.0;
            let problem = MinSupProblem::new(&cocycle, start, n, vec![w; n])?;
            if op == "solve" {
                let sol = solve_min_sup(&problem)?;
                println!(
                    "min_sup={:.9e} method={:?} residual={:.3e}",
                    sol.sup, sol.method, sol.residual_sup
                );
            } else {
                let f = brute_force_oracle(&problem, 1e-9)?;
                println!("oracle_min_sup={:.9e}", f);
            }
        }
        "gain" => {
            let samples = args.samples.or_else(|| cfg.usize(sec, "samples")).unwrap_or(32);
            let seed = args
                .seed
                .or_else(|| cfg.u64(sec, "seed"))
                .ok_or_else(|| CliError::config("--seed is required for randomized runs"))?;
            let g = estimate_gain(&cocycle, start, n, samples, seed)?;
            println!("gain={:.9e} samples={} argmax_draw={}", g.gain, g.samples, g.argmax_draw);
        }
        "fit" => {
            let samples = args.samples.or_else(|| cfg.usize(sec, "samples")).unwrap_or(24);
            let seed = args
                .seed
                .or_else(|| cfg.u64(sec, "seed"))
                .ok_or_else(|| CliError::config("--seed is required for randomized runs"))?;
            let mut grid = Vec::new();
            let mut w = 8usize;
            while w <= cocycle.len() {
                grid.push(w);
                w *= 2;
            }
            if grid.len() < 4 {
                return Err(CliError::grid("cocycle too short for a growth fit"));
            }
            let fit = fit_growth(&cocycle, cocycle.k_min(), &grid, samples, seed)?;
            println!(
                "exponent={:.4} scale={:.4} class={:?} pairs={:?}",
                fit.exponent, fit.scale, fit.class, fit.pairs
            );
        }
        other => return Err(CliError::config(format!("unknown op '{}'", other))),
    }
    Ok(0)
}

fn cmd_dichotomy(args: &DichotomyArgs, cfg: &FileConfig) -> CliResult<u8> {
    let sec = "dichotomy";
    let check = args
        .check
        .clone()
        .or_else(|| cfg.string(sec, "check"))
        .unwrap_or_else(|| "detect".into());
    let params = DetectParams {
        probe_horizon: args.probe.or_else(|| cfg.usize(sec, "probe")).unwrap_or(30),
        ..DetectParams::default()
    };
    if check.as_str() == "orbit" {
        let map = load_map(
            &args.map.clone().or_else(|| cfg.string(sec, "map")),
            args.delta.or_else(|| cfg.f64(sec, "delta")),
        )?;
        let horizon = args
            .horizon
            .or_else(|| cfg.usize(sec, "horizon"))
            .unwrap_or(64);
        let p0 = match &args.p0 {
            Some(s) => parse_point(s, map.space().dim())?,
            None => Pt::zero(map.space().dim()),
        };
        let report = orbit_hyperbolicity_check(map.as_ref(), &p0, horizon, &params)?;
        let a1f = report.forward.is_some();
        let a1b = report.backward.is_some();
        let a2 = report.transversality.as_ref().map(|t| t.pass).unwrap_or(false);
        println!(
            "map={} p0={:?} horizon={} dichotomy_fwd={} dichotomy_bwd={} transversal={} verdict={:?} (numerical evidence)",
            map.name(),
            p0.coords(),
            horizon,
            a1f,
            a1b,
            a2,
            report.verdict
        );
        return Ok(match report.verdict {
            OrbitVerdict::HyperbolicLike => 0,
            OrbitVerdict::NotTransversal => EXIT_FAIL,
            OrbitVerdict::NoDichotomy => EXIT_FAIL,
        });
    }
    let cocycle = load_cocycle(
        &args.file,
        &args.builtin.clone().or_else(|| cfg.string(sec, "builtin")),
        args.len.or_else(|| cfg.usize(sec, "len")),
    )?;
    match check.as_str() {
        "detect" => {
            let fwd = detect_half(&cocycle, Half::Forward, &params)?;
            match &fwd {
                Some(s) => println!(
                    "dichotomy: rate={:.6} prefactor={:.4} stable_dim={} unstable_dim={} projection_bound={:.4}",
                    s.rate,
                    s.prefactor,
                    s.stable_dim(),
                    s.unstable_dim(),
                    s.projection_bound
                ),
                None => println!("dichotomy: none"),
            }
            Ok(if fwd.is_some() { 0 } else { EXIT_FAIL })
        }
        "transversality" => {
            let fwd = detect_half(&cocycle, Half::Forward, &params)?;
            let bwd = detect_half(&cocycle, Half::Backward, &params)?;
            match (fwd, bwd) {
                (Some(f), Some(b)) => {
                    let t = transversality_check(&f, &b)?;
                    println!(
                        "transversality: pass={} angle={:.6} min_singular={:.3e} defect_dim={}",
                        t.pass, t.angle, t.min_singular, t.defect_dim
                    );
                    Ok(if t.pass { 0 } else { EXIT_FAIL })
                }
                _ => {
                    println!("transversality: a dichotomy is missing on one half");
                    Ok(EXIT_INCONCLUSIVE)
                }
            }
        }
        "trichotomy" => {
            let n = args
                .window
                .or_else(|| cfg.usize(sec, "window"))
                .unwrap_or(6);
            let case = trichotomy_1d(&cocycle, n)?;
            println!("trichotomy at window {}: {:?}", n, case);
            Ok(match case {
                TrichotomyCase::NoTrichotomy { .. } => EXIT_INCONCLUSIVE,
                _ => 0,
            })
        }
        "response" => {
            let trials = args.trials.or_else(|| cfg.usize(sec, "trials")).unwrap_or(8);
            let seed = args
                .seed
                .or_else(|| cfg.u64(sec, "seed"))
                .ok_or_else(|| CliError::config("--seed is required for randomized runs"))?;
            let growth = bounded_response_check(&cocycle, Span::Centered, trials, seed)?;
            println!(
                "response growth: l_hat={:.6} slope={:.4} per_window={:?}",
                growth.l_hat, growth.slope, growth.per_window
            );
            Ok(if growth.slope < 0.1 { 0 } else { EXIT_FAIL })
        }
        other => Err(CliError::config(format!("unknown check '{}'", other))),
    }
}

fn cmd_bridge(args: &BridgeArgs, cfg: &FileConfig) -> CliResult<u8> {
    let sec = "bridge";
    let map = load_map(
        &args.map.clone().or_else(|| cfg.string(sec, "map")),
        args.delta.or_else(|| cfg.f64(sec, "delta")),
    )?;
    let experiment = args
        .experiment
        .clone()
        .or_else(|| cfg.string(sec, "experiment"))
        .unwrap_or_else(|| "growth".into());
    let seed = args
        .seed
        .or_else(|| cfg.u64(sec, "seed"))
        .ok_or_else(|| CliError::config("--seed is required for randomized runs"))?;
    let samples = args.samples.or_else(|| cfg.usize(sec, "samples")).unwrap_or(50);
    let len = args.len.or_else(|| cfg.usize(sec, "len")).unwrap_or(40);
    let d = args.d.or_else(|| cfg.f64(sec, "d")).unwrap_or(1e-6);
    let id = run_id(&[
        ("cmd", "bridge".into()),
        ("map", map.name().into()),
        ("experiment", experiment.clone()),
        ("seed", seed.to_string()),
        ("samples", samples.to_string()),
        ("len", len.to_string()),
        ("d", format!("{:e}", d)),
    ]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    match experiment.as_str() {
        "lift" => {
            let mut worst = 0.0f64;
            for s in 0..samples {
                let p0 = map.typical_point(&mut rng);
                let vs = bridge::random_lift_displacement(map.as_ref(), &p0, len, seed ^ s as u64)?;
                let lift = bridge::lift_solution_to_pseudo(map.as_ref(), &p0, &vs, d)?;
                worst = worst.max(lift.measured_defect / lift.defect_bound);
            }
            println!(
                "lift: samples={} worst_defect_ratio={:.4} config={}",
                samples, worst, id
            );
            Ok(if worst <= 1.0 { 0 } else { EXIT_FAIL })
        }
        "residual" => {
            let space = map.space();
            let mut worst = 0.0f64;
            let mut checked = 0usize;
            for _ in 0..samples {
                let p0 = map.typical_point(&mut rng);
                let off = space.random_ball_vector(&mut rng, 1e-5);
                let x0 = space.exp(&p0, &off);
                let mut base = vec![p0];
                let mut orbit = vec![x0];
                for _ in 0..len {
                    let nb = map.eval(base.last().unwrap());
                    let no = map.eval(orbit.last().unwrap());
                    if space.dist(&nb, &no) > 0.4 * space.injectivity_radius().min(1.0) {
                        break;
                    }
                    base.push(nb);
                    orbit.push(no);
                }
                if base.len() < 3 {
                    continue;
                }
                let trace = bridge::orbit_residual_trace(map.as_ref(), &base, &orbit)?;
                if trace.worst_ratio.is_finite() {
                    worst = worst.max(trace.worst_ratio);
                }
                checked += 1;
            }
            println!(
                "residual: samples={} worst_bound_ratio={:.4} config={}",
                checked, worst, id
            );
            Ok(if worst <= 1.0 { 0 } else { EXIT_FAIL })
        }
        "growth" => {
            let starts: Vec<Pt> = (0..samples.min(16))
                .map(|_| map.typical_point(&mut rng))
                .collect();
            let grid = [10usize, 20, 40, 80];
            let rows = bridge::orbit_growth_survey(map.as_ref(), &starts, &grid, 12, seed)?;
            println!("growth survey: {} rows config={}", rows.len(), id);
            for r in rows.iter().take(8) {
                println!(
                    "  orbit={} N={} gain={:.4} exponent={:.4}",
                    r.orbit_id, r.window, r.gain, r.exponent
                );
            }
            if let Some(path) = &args.out {
                write_out(path, &report::growth_csv(&rows, &id))?;
            }
            Ok(0)
        }
        other => Err(CliError::config(format!("unknown experiment '{}'", other))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let cfg = match FileConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return ExitCode::from(e.code);
        }
    };
    let outcome = match &cli.command {
        Command::Shadow(a) => cmd_shadow(a, &cfg),
        Command::Exponent(a) => cmd_exponent(a, &cfg),
        Command::CircleVerify(a) => cmd_circle_verify(a, &cfg),
        Command::Cocycle(a) => cmd_cocycle(a, &cfg),
        Command::Dichotomy(a) => cmd_dichotomy(a, &cfg),
        Command::Bridge(a) => cmd_bridge(a, &cfg),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
