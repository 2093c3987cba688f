use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use unveil::evaluation::RunMeta;
use unveil::io;
use unveil::pipeline::{run_pipeline, set_path, text_value, RunConfig};
use unveil::rng::stage_seed;
use unveil::{
    corrupt_neighborhoods, generate_synthetic, geometric_accuracy, obfuscate, oracle_neighborhoods,
    recover_cloud_with_threads, PointCloud64, RecoveryConfig, SyntheticParams,
};

/// Exit code for bad invocations: missing inputs, invalid flags or config.
const USAGE: u8 = 2;
/// Exit code for failures while running a stage.
const RUNTIME: u8 = 1;

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<unveil::Error> for Failure {
    fn from(e: unveil::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(
    name = "unveil",
    version,
    about = "Recover point positions from obfuscated point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene or import a COLMAP points3D.txt.
    Generate(GenerateArgs),
    /// Obfuscate a points file.
    Obfuscate(ObfuscateArgs),
    /// Build oracle neighborhoods, optionally corrupted to an inlier ratio.
    Neighbors(NeighborsArgs),
    /// Recover points from an obfuscation and its neighborhoods.
    Recover(RecoverArgs),
    /// Score recovered points against the original cloud.
    Evaluate(EvaluateArgs),
    /// Run every stage over a grid of schemes, inlier ratios and seeds.
    Pipeline(PipelineArgs),
}

/// Flags shared by every stage; they override the config file.
#[derive(Args)]
struct Common {
    /// Config file, JSON or `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    threads: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// uniform_box, gaussian_blobs, planar_rooms or grid.
    #[arg(long, default_value = "uniform_box")]
    kind: String,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    descriptor_dim: Option<String>,
    /// Import this COLMAP points3D.txt instead of generating.
    #[arg(long)]
    colmap: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ObfuscateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    scheme: String,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth output, kept apart from the obfuscation.
    #[arg(long)]
    sidecar: PathBuf,
}

#[derive(Args)]
struct NeighborsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    obfuscation: PathBuf,
    #[arg(long)]
    sidecar: PathBuf,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    inlier_ratio: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    obfuscation: PathBuf,
    #[arg(long)]
    neighbors: PathBuf,
    /// Inlier threshold, in scene units.
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    objective: Option<String>,
    /// Initialization anchor `x,y,z`.
    #[arg(long)]
    anchor: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write run diagnostics as JSON.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    recovered: PathBuf,
    #[arg(long)]
    points: PathBuf,
    /// Required for PPL and CP.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Comma-separated; `1%` is relative to the scene diameter.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated scheme list.
    #[arg(long)]
    scheme: Option<String>,
    /// Comma-separated scene kinds.
    #[arg(long)]
    scene: Option<String>,
    #[arg(long)]
    points: Option<PathBuf>,
    #[arg(long)]
    colmap: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated inlier ratios.
    #[arg(long)]
    inlier_ratio: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only write the sweep tables.
    #[arg(long)]
    no_artifacts: bool,
}

fn require(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(anyhow!("{what} file '{}' not found", path.display())))
    }
}

/// Merges the config file with the given `(key, raw value)` flags.
fn config(common: &Common, flags: &[(&str, Option<&str>)]) -> CliResult<RunConfig> {
    let text = match &common.config {
        Some(p) => {
            require(p, "config")?;
            Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    let mut over = Map::new();
    let shared = [
        ("seeds", common.seed.as_deref()),
        ("threads", common.threads.as_deref()),
    ];
    for (key, raw) in shared.iter().chain(flags) {
        if let Some(raw) = raw {
            set_path(&mut over, key, text_value(key, raw)).map_err(|e| Failure::Usage(e.into()))?;
        }
    }
    RunConfig::from_sources(text.as_deref(), over).map_err(|e| Failure::Usage(anyhow!("invalid configuration: {e}")))
}

/// The single seed of a stage run.
fn one_seed(cfg: &RunConfig) -> CliResult<u64> {
    match cfg.seeds.as_slice() {
        [s] => Ok(*s),
        _ => Err(Failure::Usage(anyhow!("expected a single --seed for this stage"))),
    }
}

fn run_generate(a: GenerateArgs) -> CliResult {
    let cfg = config(
        &a.common,
        &[
            ("n", a.n.as_deref()),
            ("dim", a.dim.as_deref()),
            ("descriptor_dim", a.descriptor_dim.as_deref()),
        ],
    )?;
    let cloud: PointCloud64 = match &a.colmap {
        Some(p) => {
            require(p, "COLMAP")?;
            io::read_colmap_points3d(p)?
        }
        None => {
            let kind = a.kind.parse().map_err(|e: unveil::Error| Failure::Usage(e.into()))?;
            let params = SyntheticParams {
                descriptor_dim: cfg.descriptor_dim,
                ..SyntheticParams::new(kind, cfg.n, cfg.dim, stage_seed(one_seed(&cfg)?, "scene"))
            };
            generate_synthetic(&params)?.cloud
        }
    };
    io::write_points(&a.out, &cloud)?;
    eprintln!("wrote {} points to {}", cloud.len(), a.out.display());
    Ok(())
}

fn run_obfuscate(a: ObfuscateArgs) -> CliResult {
    require(&a.points, "points")?;
    let cfg = config(&a.common, &[("schemes", Some(&a.scheme))])?;
    let [scheme] = cfg.schemes[..] else {
        return Err(Failure::Usage(anyhow!("expected a single --scheme")));
    };
    let cloud: PointCloud64 = io::read_points(&a.points)?;
    let obf = obfuscate(
        &cloud,
        scheme,
        stage_seed(one_seed(&cfg)?, "obfuscate"),
        &cfg.obfuscation,
    )?;
    io::write_obfuscation(&a.out, &obf.cloud)?;
    io::write_sidecar(&a.sidecar, &obf.sidecar)?;
    eprintln!("wrote {} {scheme} items to {}", obf.cloud.len(), a.out.display());
    Ok(())
}

fn run_neighbors(a: NeighborsArgs) -> CliResult {
    require(&a.points, "points")?;
    require(&a.obfuscation, "obfuscation")?;
    require(&a.sidecar, "sidecar")?;
    let ratio = a.inlier_ratio.map(|r| r.to_string());
    let cfg = config(&a.common, &[("k", a.k.as_deref()), ("inlier_ratios", ratio.as_deref())])?;
    let [inlier_ratio] = cfg.inlier_ratios[..] else {
        return Err(Failure::Usage(anyhow!("expected a single --inlier-ratio")));
    };
    let cloud: PointCloud64 = io::read_points(&a.points)?;
    let obf = io::read_obfuscation::<f64>(&a.obfuscation)?;
    let sidecar = io::read_sidecar::<f64>(&a.sidecar)?;
    let k = cfg.k_for(cloud.dim);
    let mut set = oracle_neighborhoods(&cloud, &obf, Some(&sidecar), k)?;
    if inlier_ratio < 1.0 {
        let seed = stage_seed(one_seed(&cfg)?, "corrupt");
        set = corrupt_neighborhoods(&set, &obf.item_ids(), inlier_ratio, seed)?;
    }
    io::write_neighborhoods(&a.out, &set)?;
    eprintln!("wrote {} neighborhoods (K = {k}) to {}", set.len(), a.out.display());
    Ok(())
}

fn run_recover(a: RecoverArgs) -> CliResult {
    require(&a.obfuscation, "obfuscation")?;
    require(&a.neighbors, "neighbors")?;
    let cfg = config(
        &a.common,
        &[
            ("delta", a.delta.as_deref()),
            ("ransac_max_iters", a.max_iters.as_deref()),
            ("objective", a.objective.as_deref()),
            ("anchor", a.anchor.as_deref()),
        ],
    )?;
    if cfg.delta.is_none() {
        return Err(Failure::Usage(anyhow!(
            "--delta is required: the inlier threshold cannot be derived from attacker-side files"
        )));
    }
    let obf = io::read_obfuscation::<f64>(&a.obfuscation)?;
    let nbrs = io::read_neighborhoods(&a.neighbors)?;
    let rcfg = RecoveryConfig {
        k_neighbors: nbrs.k,
        ..cfg.recovery_config(obf.dim, 1.0, stage_seed(one_seed(&cfg)?, "recover"))
    };
    let threads = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rec = recover_cloud_with_threads(&obf, &nbrs, &rcfg, threads)?;
    io::write_recovered(&a.out, &rec)?;
    let diag = rec.diagnostics();
    if let Some(p) = &a.diagnostics {
        std::fs::write(p, serde_json::to_string_pretty(&diag).context("diagnostics")? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
    }
    eprintln!(
        "recovered {} subjects ({} ok, {} degenerate, {} failed) in {:.2}s",
        rec.len(),
        diag["ok"],
        diag["degenerate"],
        diag["failed"],
        rec.wall_time_secs
    );
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> CliResult {
    require(&a.recovered, "recovered")?;
    require(&a.points, "points")?;
    if let Some(s) = &a.sidecar {
        require(s, "sidecar")?;
    }
    let cfg = config(&a.common, &[("thresholds", a.thresholds.as_deref())])?;
    let rec = io::read_recovered::<f64>(&a.recovered)?;
    let truth: PointCloud64 = io::read_points(&a.points)?;
    let sidecar = a.sidecar.as_deref().map(io::read_sidecar::<f64>).transpose()?;
    let meta = RunMeta {
        scene: a
            .points
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        scheme: Some(rec.scheme),
        inlier_ratio: None,
        k: rec.config.k_neighbors,
        seed: rec.config.seed,
    };
    let report = geometric_accuracy(&rec, &truth, sidecar.as_ref(), &cfg.thresholds_for(truth.dim), meta)?;
    io::write_report(&a.out, &report)?;
    for (label, f) in report.labels.iter().zip(&report.fraction_within) {
        println!("{label}\t{f}");
    }
    Ok(())
}

fn run_pipe(a: PipelineArgs) -> CliResult {
    if let Some(p) = a.points.as_deref() {
        require(p, "points")?;
    }
    if let Some(p) = a.colmap.as_deref() {
        require(p, "COLMAP")?;
    }
    let points = a
        .points
        .as_deref()
        .map(|p| Value::String(p.display().to_string()).to_string());
    let colmap = a
        .colmap
        .as_deref()
        .map(|p| Value::String(p.display().to_string()).to_string());
    let out = a
        .out
        .as_deref()
        .map(|p| Value::String(p.display().to_string()).to_string());
    let cfg = config(
        &a.common,
        &[
            ("schemes", a.scheme.as_deref()),
            ("scenes", a.scene.as_deref()),
            ("points", points.as_deref()),
            ("colmap", colmap.as_deref()),
            ("n", a.n.as_deref()),
            ("dim", a.dim.as_deref()),
            ("k", a.k.as_deref()),
            ("inlier_ratios", a.inlier_ratio.as_deref()),
            ("delta", a.delta.as_deref()),
            ("thresholds", a.thresholds.as_deref()),
            ("output_dir", out.as_deref()),
            ("write_artifacts", a.no_artifacts.then_some("false")),
        ],
    )?;
    if cfg.points.is_none() && cfg.colmap.is_none() {
        if let Some(s) = cfg.schemes.iter().find(|s| !s.supports(cfg.dim)) {
            return Err(Failure::Usage(anyhow!(
                "scheme {s} does not support {}D scenes",
                cfg.dim.count()
            )));
        }
    }
    let table = run_pipeline::<f64>(&cfg)?;
    print!("{}", table.to_csv());
    let failed: Vec<String> = table
        .cells
        .iter()
        .flat_map(|c| {
            c.runs
                .iter()
                .filter_map(move |r| r.error.as_ref().map(|e| (c, r.seed, e)))
        })
        .map(|(c, seed, e)| {
            format!(
                "{} {} In={} seed={seed}: {e}",
                c.key.scene, c.key.scheme, c.key.inlier_ratio
            )
        })
        .collect();
    for f in &failed {
        eprintln!("cell failed: {f}");
    }
    eprintln!("wrote {}", cfg.output_dir.join("sweep.csv").display());
    if !failed.is_empty() {
        let total: usize = table.cells.iter().map(|c| c.runs.len()).sum();
        return Err(anyhow!("{} of {total} runs failed", failed.len()).into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => run_generate(a),
        Command::Obfuscate(a) => run_obfuscate(a),
        Command::Neighbors(a) => run_neighbors(a),
        Command::Recover(a) => run_recover(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Pipeline(a) => run_pipe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("usage error: {e:#}");
            ExitCode::from(USAGE)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUNTIME)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use unveil::Dim;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn dims_parse_from_flags() {
        let cfg = config(
            &Common {
                config: None,
                seed: Some("4".into()),
                threads: None,
            },
            &[("dim", Some("2")), ("k", Some("5"))],
        )
        .unwrap_or_else(|_| panic!("flags rejected"));
        assert_eq!((cfg.dim, cfg.k, cfg.seeds.clone()), (Dim::Two, Some(5), vec![4]));
    }
}
