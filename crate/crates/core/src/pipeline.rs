//! End-to-end runs: generate or load a scene, obfuscate it, build oracle
//! neighborhoods, corrupt them, recover and score, for every cell of a
//! scene x scheme x inlier ratio grid and every seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evaluation::{
    default_thresholds, geometric_accuracy, sweep, AccuracyReport, CellKey, RunMeta, SweepTable, ThresholdPreset,
    ThresholdSpec,
};
use crate::geometry::{Dim, PointCloud};
use crate::io;
use crate::neighborhood::{corrupt_neighborhoods, oracle_neighborhoods, NeighborhoodSet};
use crate::obfuscation::{obfuscate, Obfuscation, ObfuscationOptions, Scheme};
use crate::recovery::{recover_cloud, Objective, RecoveredCloud, RecoveryConfig};
use crate::rng::stage_seed;
use crate::scalar::Real;
use crate::synthetic::{generate_synthetic, SceneKind, SyntheticParams};

/// Settings of a pipeline run. Loaded from JSON or `key = value` text;
/// command-line flags are merged on top before deserialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenes: Vec<SceneKind>,
    /// Loads this points file instead of generating scenes.
    pub points: Option<PathBuf>,
    /// Loads a COLMAP `points3D.txt` instead of generating scenes.
    pub colmap: Option<PathBuf>,
    pub n: usize,
    pub dim: Dim,
    pub descriptor_dim: usize,
    pub schemes: Vec<Scheme>,
    /// Neighborhood size; 20 in 2D and 50 in 3D when unset.
    pub k: Option<usize>,
    pub inlier_ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Empty means `1%` plus the unit preset of the dimension.
    pub thresholds: Vec<ThresholdSpec>,
    pub threshold_preset: Option<ThresholdPreset>,
    /// Absolute inlier threshold; overrides `delta_fraction`.
    pub delta: Option<f64>,
    /// Inlier threshold as a fraction of the scene diameter.
    pub delta_fraction: f64,
    pub ransac_max_iters: usize,
    pub ransac_sample_size: Option<usize>,
    pub assumed_inlier_ratio: Option<f64>,
    pub confidence: f64,
    pub objective: Objective,
    pub exhaustive: bool,
    pub anchor: Option<[f64; 3]>,
    pub obfuscation: ObfuscationOptions,
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
    /// Write every intermediate file of every cell.
    pub write_artifacts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenes: vec![SceneKind::UniformBox],
            points: None,
            colmap: None,
            n: 1000,
            dim: Dim::Three,
            descriptor_dim: 0,
            schemes: vec![Scheme::Line3d],
            k: None,
            inlier_ratios: vec![1.0],
            seeds: vec![0],
            thresholds: Vec::new(),
            threshold_preset: None,
            delta: None,
            delta_fraction: RecoveryConfig::DELTA_FRACTION,
            ransac_max_iters: 10_000,
            ransac_sample_size: None,
            assumed_inlier_ratio: None,
            confidence: 0.99,
            objective: Objective::SumOfSquares,
            exhaustive: false,
            anchor: None,
            obfuscation: ObfuscationOptions::default(),
            threads: None,
            output_dir: PathBuf::from("out"),
            write_artifacts: true,
        }
    }
}

const LIST_KEYS: &[&str] = &["scenes", "schemes", "inlier_ratios", "seeds", "thresholds", "anchor"];

fn scalar_value(s: &str) -> Value {
    let s = s.trim();
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

/// Value of `key` given as text: JSON when it parses, a plain string
/// otherwise, and comma-separated lists for list-valued keys.
pub fn text_value(key: &str, raw: &str) -> Value {
    let raw = raw.trim();
    if LIST_KEYS.contains(&key) && !raw.starts_with('[') {
        return Value::Array(
            raw.split(',')
                .filter(|s| !s.trim().is_empty())
                .map(scalar_value)
                .collect(),
        );
    }
    if key == "thresholds" {
        // keep "1%" and friends as strings
        return serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    }
    scalar_value(raw)
}

/// Parses `key = value` lines; `#` starts a comment. Dotted keys address
/// nested tables (`obfuscation.ppl.max_retries = 5`).
pub fn parse_key_values(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("line {}: expected 'key = value'", i + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::invalid(format!("line {}: empty key", i + 1)));
        }
        set_path(&mut map, key, text_value(key, value))?;
    }
    Ok(map)
}

/// Sets `value` at a dotted `key`, creating intermediate tables.
pub fn set_path(map: &mut Map<String, Value>, key: &str, value: Value) -> Result<()> {
    match key.split_once('.') {
        None => {
            map.insert(key.to_string(), value);
            Ok(())
        }
        Some((head, rest)) => {
            let entry = map.entry(head.to_string()).or_insert_with(|| Value::Object(Map::new()));
            match entry {
                Value::Object(inner) => set_path(inner, rest, value),
                _ => Err(Error::invalid(format!("'{head}' is not a table"))),
            }
        }
    }
}

fn merge(base: &mut Map<String, Value>, over: Map<String, Value>) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Object(b)), Value::Object(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Parses a config file: JSON when it starts with `{`, `key = value`
    /// lines otherwise.
    pub fn parse_text(text: &str) -> Result<Map<String, Value>> {
        if text.trim_start().starts_with('{') {
            match serde_json::from_str(text)? {
                Value::Object(m) => Ok(m),
                _ => Err(Error::invalid("config must be a JSON object")),
            }
        } else {
            parse_key_values(text)
        }
    }

    /// Builds a config from an optional file text and overrides that win
    /// over it.
    pub fn from_sources(file: Option<&str>, overrides: Map<String, Value>) -> Result<Self> {
        let mut map = match file {
            Some(text) => Self::parse_text(text)?,
            None => Map::new(),
        };
        merge(&mut map, overrides);
        let cfg: RunConfig = serde_json::from_value(Value::Object(map))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::invalid("no schemes given"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("no seeds given"));
        }
        if self.inlier_ratios.is_empty() {
            return Err(Error::invalid("no inlier ratios given"));
        }
        if let Some(r) = self.inlier_ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::invalid(format!("inlier ratio must lie in (0, 1], got {r}")));
        }
        if self.points.is_some() && self.colmap.is_some() {
            return Err(Error::invalid("give either a points file or a COLMAP file, not both"));
        }
        if self.points.is_none() && self.colmap.is_none() && (self.scenes.is_empty() || self.n == 0) {
            return Err(Error::invalid("no scenes to generate"));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid(format!("delta must be positive, got {d}")));
            }
        }
        if !(self.delta_fraction > 0.0 && self.delta_fraction.is_finite()) {
            return Err(Error::invalid(format!(
                "delta fraction must be positive, got {}",
                self.delta_fraction
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads must be at least 1"));
        }
        if self.k == Some(0) {
            return Err(Error::invalid("k must be at least 1"));
        }
        self.recovery_config(self.dim, 1.0, 0).validate()
    }

    pub fn k_for(&self, dim: Dim) -> usize {
        self.k.unwrap_or(RecoveryConfig::for_scene(dim, 1.0).k_neighbors)
    }

    pub fn thresholds_for(&self, dim: Dim) -> Vec<ThresholdSpec> {
        if !self.thresholds.is_empty() {
            return self.thresholds.clone();
        }
        let preset = self.threshold_preset.unwrap_or(match dim {
            Dim::Two => ThresholdPreset::Pixels,
            Dim::Three => ThresholdPreset::Indoor,
        });
        let mut t = vec![ThresholdSpec::DiameterPercent(1.0)];
        t.extend(default_thresholds(preset));
        t
    }

    pub fn recovery_config(&self, dim: Dim, diameter: f64, seed: u64) -> RecoveryConfig {
        let base = RecoveryConfig::for_scene(dim, diameter);
        RecoveryConfig {
            ransac_max_iters: self.ransac_max_iters,
            ransac_sample_size: self.ransac_sample_size.unwrap_or(base.ransac_sample_size),
            inlier_threshold: self.delta.unwrap_or(self.delta_fraction * diameter),
            assumed_inlier_ratio: self.assumed_inlier_ratio,
            confidence: self.confidence,
            seed,
            k_neighbors: self.k_for(dim),
            objective: self.objective,
            exhaustive: self.exhaustive,
            anchor: self.anchor,
        }
    }

    /// Names of the scenes in the run.
    pub fn scene_names(&self) -> Vec<String> {
        match (&self.points, &self.colmap) {
            (Some(p), _) | (None, Some(p)) => vec![file_scene_name(p)],
            (None, None) => self.scenes.iter().map(|s| s.name().to_string()).collect(),
        }
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for scene in self.scene_names() {
            for &scheme in &self.schemes {
                for &inlier_ratio in &self.inlier_ratios {
                    out.push(CellKey {
                        scene: scene.clone(),
                        scheme,
                        inlier_ratio,
                        k: self.k_for(self.dim),
                    });
                }
            }
        }
        out
    }
}

fn file_scene_name(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".to_string())
}

/// Synthetic plane label per point id, `None` for clutter.
pub type PlaneLabels = BTreeMap<u64, Option<u32>>;

/// Every intermediate product of one cell run.
#[derive(Clone, Debug)]
pub struct CellArtifacts<T> {
    pub cloud: PointCloud<T>,
    pub obfuscation: Obfuscation<T>,
    pub exact: NeighborhoodSet,
    pub neighborhoods: NeighborhoodSet,
    pub recovered: RecoveredCloud<T>,
    pub report: AccuracyReport,
}

/// The scene of a cell: a generated scene seeded from the run seed, or the
/// configured input file.
pub fn load_scene<T: Real>(cfg: &RunConfig, scene: &str, seed: u64) -> Result<(PointCloud<T>, Option<PlaneLabels>)> {
    if let Some(p) = &cfg.points {
        return Ok((io::read_points(p)?, None));
    }
    if let Some(p) = &cfg.colmap {
        return Ok((io::read_colmap_points3d(p)?, None));
    }
    let kind: SceneKind = scene.parse()?;
    let params = SyntheticParams {
        descriptor_dim: cfg.descriptor_dim,
        ..SyntheticParams::new(kind, cfg.n, cfg.dim, stage_seed(seed, "scene"))
    };
    let s = generate_synthetic(&params)?;
    Ok((s.cloud, s.plane_labels))
}

/// Runs every stage of one cell on `cloud`.
pub fn run_stages<T: Real>(
    cfg: &RunConfig,
    key: &CellKey,
    seed: u64,
    cloud: PointCloud<T>,
    plane_labels: Option<PlaneLabels>,
) -> Result<CellArtifacts<T>> {
    let mut obfuscation = obfuscate(&cloud, key.scheme, stage_seed(seed, "obfuscate"), &cfg.obfuscation)?;
    if obfuscation.sidecar.plane_labels.is_none() {
        obfuscation.sidecar.plane_labels = plane_labels;
    }
    let exact = oracle_neighborhoods(&cloud, &obfuscation.cloud, Some(&obfuscation.sidecar), key.k)?;
    let neighborhoods = if key.inlier_ratio < 1.0 {
        corrupt_neighborhoods(
            &exact,
            &obfuscation.cloud.item_ids(),
            key.inlier_ratio,
            stage_seed(seed, "corrupt"),
        )?
    } else {
        exact.clone()
    };
    let diameter = cloud.diameter().as_f64();
    let rcfg = RecoveryConfig {
        k_neighbors: key.k,
        ..cfg.recovery_config(cloud.dim, diameter, stage_seed(seed, "recover"))
    };
    let recovered = recover_cloud(&obfuscation.cloud, &neighborhoods, &rcfg)?;
    let meta = RunMeta {
        scene: key.scene.clone(),
        scheme: Some(key.scheme),
        inlier_ratio: Some(key.inlier_ratio),
        k: key.k,
        seed,
    };
    let report = geometric_accuracy(
        &recovered,
        &cloud,
        Some(&obfuscation.sidecar),
        &cfg.thresholds_for(cloud.dim),
        meta,
    )?;
    Ok(CellArtifacts {
        cloud,
        obfuscation,
        exact,
        neighborhoods,
        recovered,
        report,
    })
}

/// Directory holding the files of one cell run.
pub fn cell_dir(root: &Path, key: &CellKey, seed: u64) -> PathBuf {
    root.join(&key.scene)
        .join(key.scheme.name())
        .join(format!("in{}_k{}", key.inlier_ratio, key.k))
        .join(format!("seed{seed}"))
}

pub fn write_artifacts<T: Real>(dir: &Path, a: &CellArtifacts<T>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_points(&dir.join("points.txt"), &a.cloud)?;
    io::write_obfuscation(&dir.join("obfuscation.txt"), &a.obfuscation.cloud)?;
    io::write_sidecar(&dir.join("sidecar.txt"), &a.obfuscation.sidecar)?;
    io::write_neighborhoods(&dir.join("neighbors.txt"), &a.neighborhoods)?;
    io::write_recovered(&dir.join("recovered.txt"), &a.recovered)?;
    io::write_report(&dir.join("report.txt"), &a.report)?;
    Ok(())
}

/// Runs one cell for one seed, writing its files when configured.
pub fn run_cell<T: Real>(cfg: &RunConfig, key: &CellKey, seed: u64) -> Result<CellArtifacts<T>> {
    if !key.scheme.supports(cfg.dim) && cfg.points.is_none() && cfg.colmap.is_none() {
        return Err(Error::invalid(format!(
            "scheme {} does not support {}D scenes",
            key.scheme,
            cfg.dim.count()
        )));
    }
    let (cloud, labels) = load_scene::<T>(cfg, &key.scene, seed)?;
    let a = run_stages(cfg, key, seed, cloud, labels)?;
    if cfg.write_artifacts {
        write_artifacts(&cell_dir(&cfg.output_dir, key, seed), &a)?;
    }
    Ok(a)
}

/// Runs the full grid and writes `sweep.csv`, `sweep.json` and the resolved
/// `config.json` to the output directory.
pub fn run_pipeline<T: Real>(cfg: &RunConfig) -> Result<SweepTable> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let body = || {
        sweep(&cfg.cells(), &cfg.seeds, |key, seed| {
            run_cell::<T>(cfg, key, seed).map(|a| a.report)
        })
    };
    let table = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    };
    let mut config = serde_json::to_string_pretty(cfg)?;
    config.push('\n');
    std::fs::write(cfg.output_dir.join("config.json"), config)?;
    std::fs::write(cfg.output_dir.join("sweep.csv"), table.to_csv())?;
    std::fs::write(cfg.output_dir.join("sweep.json"), table.to_json()?)?;
    Ok(table)
}
