//! Scene simulation, single runs and sensor-density sweeps with persisted
//! artifacts.
//!
//! Directory layouts:
//!
//! ```text
//! <scene dir>/   ground_truth.emgrid  buildings.emgrid  scene.cfg
//! <run dir>/     sensors.csv  predicted.emgrid  error.emgrid  metrics.csv
//!                manifest  [loss.csv]
//! <sweep dir>/   sweep.cfg  results.csv  scene/  runs/<run id>/
//! ```

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::grid::{BuildingMap, ExposureGrid, GridDims, SensorSet};
use crate::metrics::{self, held_out_mask, ErrorReport, DEFAULT_IDW_POWER};
use crate::net::PriorMode;
use crate::recon::{self, suppress_buildings, ReconstructionConfig, ReconstructionResult};
use crate::sim::{self, PropagationConfig, Scene, SceneSpec};

/// Distance clamp used by generated scenes. One cell (the simulator
/// default) puts a 7.7 V/m spike on each transmitter cell of a 128x128
/// square-kilometre grid; four cells keep the peak under 2 V/m.
pub const SCENE_MIN_DISTANCE_CELLS: f64 = 4.0;
pub const SCENE_AREA_M: f64 = 1000.0;

pub const TRUTH_FILE: &str = "ground_truth.emgrid";
pub const BUILDINGS_FILE: &str = "buildings.emgrid";
pub const SCENE_FILE: &str = "scene.cfg";
pub const SENSORS_FILE: &str = "sensors.csv";
pub const ERROR_FILE: &str = "error.emgrid";
pub const METRICS_FILE: &str = "metrics.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const SWEEP_MANIFEST_FILE: &str = "sweep.cfg";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Scene generator settings (`scene.*`) plus propagation (`sim.*`).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSetup {
    pub spec: SceneSpec,
    pub propagation: PropagationConfig,
}

impl Default for SceneSetup {
    fn default() -> Self {
        Self::square(128, 0)
    }
}

impl SceneSetup {
    /// `cells x cells` over one square kilometre.
    pub fn square(cells: usize, seed: u64) -> Self {
        let dims = GridDims {
            rows: cells,
            cols: cells,
            cell_size_m: SCENE_AREA_M / cells as f64,
        };
        Self {
            spec: SceneSpec::new(dims, seed),
            propagation: PropagationConfig {
                min_distance_cells: SCENE_MIN_DISTANCE_CELLS,
                ..PropagationConfig::default()
            },
        }
    }

    pub const KEYS: &'static [&'static str] = &[
        "scene.rows",
        "scene.cols",
        "scene.cell_size_m",
        "scene.seed",
        "scene.transmitters",
        "scene.power_w",
        "scene.frequency_hz",
        "scene.buildings",
        "sim.wall_loss_db",
        "sim.min_distance_cells",
    ];

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let rows = kv.get_or("scene.rows", 128usize)?;
        let cols = kv.get_or("scene.cols", rows)?;
        let cell = kv.get_or("scene.cell_size_m", SCENE_AREA_M / cols as f64)?;
        let dims = GridDims::new(rows, cols, cell).map_err(|e| Error::Config {
            key: "scene.rows".into(),
            msg: e.to_string(),
        })?;
        let mut setup = Self::square(rows, kv.get_or("scene.seed", 0u64)?);
        setup.spec.dims = dims;
        let s = &mut setup.spec;
        s.transmitters = kv.get_or("scene.transmitters", s.transmitters)?;
        s.power_w = kv.get_or("scene.power_w", s.power_w)?;
        s.frequency_hz = kv.get_or("scene.frequency_hz", s.frequency_hz)?;
        s.buildings = kv.get_or("scene.buildings", s.buildings)?;
        let p = &mut setup.propagation;
        p.wall_loss_db = kv.get_or("sim.wall_loss_db", p.wall_loss_db)?;
        p.min_distance_cells = kv.get_or("sim.min_distance_cells", p.min_distance_cells)?;
        p.validate().map_err(|e| Error::Config {
            key: "sim".into(),
            msg: e.to_string(),
        })?;
        Ok(setup)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        let s = &self.spec;
        kv.set("scene.rows", s.dims.rows);
        kv.set("scene.cols", s.dims.cols);
        kv.set("scene.cell_size_m", s.dims.cell_size_m);
        kv.set("scene.seed", s.seed);
        kv.set("scene.transmitters", s.transmitters);
        kv.set("scene.power_w", s.power_w);
        kv.set("scene.frequency_hz", s.frequency_hz);
        kv.set("scene.buildings", s.buildings);
        kv.set("sim.wall_loss_db", self.propagation.wall_loss_db);
        kv.set("sim.min_distance_cells", self.propagation.min_distance_cells);
        kv
    }
}

/// A scene with its ground-truth field.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScene {
    pub scene: Scene,
    pub propagation: PropagationConfig,
    pub truth: ExposureGrid,
}

impl SimulatedScene {
    pub fn generate(setup: &SceneSetup) -> Result<Self> {
        let scene = setup.spec.generate()?;
        let truth = sim::generate_ground_truth(&scene, &setup.propagation)?;
        Ok(Self {
            scene,
            propagation: setup.propagation,
            truth,
        })
    }

    pub fn buildings(&self) -> &BuildingMap {
        self.scene.buildings()
    }

    pub fn dims(&self) -> GridDims {
        self.scene.dims()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        self.truth.write(dir.join(TRUTH_FILE))?;
        self.scene.buildings().write(dir.join(BUILDINGS_FILE))?;
        let mut cfg = self.scene.to_config(BUILDINGS_FILE);
        cfg.set("sim.wall_loss_db", self.propagation.wall_loss_db);
        cfg.set("sim.min_distance_cells", self.propagation.min_distance_cells);
        cfg.set("scene.truth_file", TRUTH_FILE);
        cfg.write(dir.join(SCENE_FILE))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let cfg = KvConfig::read(dir.join(SCENE_FILE))?;
        let scene = Scene::from_config(&cfg, dir)?;
        let defaults = PropagationConfig::default();
        let propagation = PropagationConfig {
            wall_loss_db: cfg.get_or("sim.wall_loss_db", defaults.wall_loss_db)?,
            min_distance_cells: cfg.get_or("sim.min_distance_cells", defaults.min_distance_cells)?,
        };
        let truth_file: String = cfg.get_or("scene.truth_file", TRUTH_FILE.to_string())?;
        let truth = ExposureGrid::read(dir.join(truth_file))?;
        if !truth.dims().same_shape(&scene.dims()) {
            return Err(Error::shape("scene", "ground truth and building raster differ in shape"));
        }
        Ok(Self {
            scene,
            propagation,
            truth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Glip,
    Grip,
    Idw,
    Nearest,
}

impl Method {
    pub fn prior(self) -> Option<PriorMode> {
        match self {
            Method::Glip => Some(PriorMode::Glip),
            Method::Grip => Some(PriorMode::Grip),
            _ => None,
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "glip" => Ok(Method::Glip),
            "grip" => Ok(Method::Grip),
            "idw" => Ok(Method::Idw),
            "nearest" => Ok(Method::Nearest),
            _ => Err(Error::validation(format!(
                "unknown method `{s}` (glip|grip|idw|nearest)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Glip => "glip",
            Method::Grip => "grip",
            Method::Idw => "idw",
            Method::Nearest => "nearest",
        })
    }
}

/// Prediction of one method on one sensor set.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub predicted: ExposureGrid,
    /// Largest sensor reading; the unit for normalized metrics.
    pub scale: f64,
    pub fit: Option<ReconstructionResult>,
}

/// Runs one method. Network methods take their prior from `method`, not from
/// `cfg.prior_mode`. Building cells are zeroed when `cfg.suppress_buildings`.
pub fn run_method(
    method: Method,
    sensors: &SensorSet,
    buildings: &BuildingMap,
    cfg: &ReconstructionConfig,
    idw_power: f64,
) -> Result<MethodOutput> {
    if sensors.is_empty() {
        return Err(Error::validation("cannot reconstruct from an empty sensor set"));
    }
    let dims = sensors.dims();
    let scale = sensors.readings().iter().map(|r| r.value_vm).fold(0.0, f64::max);
    match method.prior() {
        Some(prior_mode) => {
            let cfg = ReconstructionConfig {
                prior_mode,
                ..cfg.clone()
            };
            let fit = recon::fit(sensors, buildings, &cfg)?;
            Ok(MethodOutput {
                predicted: fit.predicted.clone(),
                scale: fit.scale,
                fit: Some(fit),
            })
        }
        None => {
            let mut predicted = match method {
                Method::Idw => metrics::idw_interpolate(sensors, dims, idw_power)?,
                _ => metrics::nearest_interpolate(sensors, dims)?,
            };
            if cfg.suppress_buildings {
                predicted = suppress_buildings(&predicted, buildings)?;
            }
            Ok(MethodOutput {
                predicted,
                scale,
                fit: None,
            })
        }
    }
}

/// One line of the result table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub method: Method,
    pub sensors: usize,
    pub seed: u64,
    pub mse_vm: f64,
    pub mae_vm: f64,
    pub mse_norm: f64,
    pub mae_norm: f64,
    pub n_evaluated: usize,
}

pub const CSV_HEADER: &str = "run_id,method,sensors,seed,mse_vm,mae_vm,mse_norm,mae_norm,n_evaluated,status,mse_vm_std,mae_vm_std,mse_norm_std,mae_norm_std";

impl MetricsRow {
    pub fn from_report(
        run_id: impl Into<String>,
        method: Method,
        sensors: usize,
        seed: u64,
        report: &ErrorReport,
        scale: f64,
    ) -> Self {
        Self {
            run_id: run_id.into(),
            method,
            sensors,
            seed,
            mse_vm: report.mse,
            mae_vm: report.mae,
            mse_norm: report.mse / (scale * scale),
            mae_norm: report.mae / scale,
            n_evaluated: report.n_evaluated,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},ok,,,,",
            self.run_id,
            self.method,
            self.sensors,
            self.seed,
            self.mse_vm,
            self.mae_vm,
            self.mse_norm,
            self.mae_norm,
            self.n_evaluated
        )
    }
}

/// Metric exclusions and baseline settings shared by runs and sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub exclude_sensors: bool,
    pub exclude_buildings: bool,
    pub idw_power: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            exclude_sensors: true,
            exclude_buildings: true,
            idw_power: DEFAULT_IDW_POWER,
        }
    }
}

impl EvalOptions {
    pub const KEYS: &'static [&'static str] =
        &["eval.exclude_sensors", "eval.exclude_buildings", "baseline.idw_power"];

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            exclude_sensors: kv.get_bool("eval.exclude_sensors")?.unwrap_or(d.exclude_sensors),
            exclude_buildings: kv.get_bool("eval.exclude_buildings")?.unwrap_or(d.exclude_buildings),
            idw_power: kv.get_or("baseline.idw_power", d.idw_power)?,
        })
    }

    pub fn write_kv(&self, kv: &mut KvConfig) {
        kv.set("eval.exclude_sensors", self.exclude_sensors);
        kv.set("eval.exclude_buildings", self.exclude_buildings);
        kv.set("baseline.idw_power", self.idw_power);
    }
}

/// Everything needed to execute (or re-execute) one run.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub run_id: String,
    pub method: Method,
    pub sensors_path: PathBuf,
    pub buildings_path: PathBuf,
    pub truth_path: Option<PathBuf>,
    pub recon: ReconstructionConfig,
    pub eval: EvalOptions,
}

impl RunRequest {
    pub fn manifest(&self) -> KvConfig {
        let mut kv = self.recon.to_kv();
        kv.set("run.id", &self.run_id);
        kv.set("run.method", self.method);
        kv.set("run.seed", self.recon.seed);
        kv.set("run.version", env!("CARGO_PKG_VERSION"));
        kv.set("input.sensors", absolute(&self.sensors_path).display());
        kv.set("input.buildings", absolute(&self.buildings_path).display());
        if let Some(t) = &self.truth_path {
            kv.set("input.truth", absolute(t).display());
        }
        self.eval.write_kv(&mut kv);
        kv
    }

    pub fn from_manifest(kv: &KvConfig) -> Result<Self> {
        let need = |key: &str| -> Result<String> {
            kv.get::<String>(key)?.ok_or_else(|| Error::Config {
                key: key.into(),
                msg: "required".into(),
            })
        };
        Ok(Self {
            run_id: kv.get_or("run.id", "run".to_string())?,
            method: need("run.method")?.parse()?,
            sensors_path: need("input.sensors")?.into(),
            buildings_path: need("input.buildings")?.into(),
            truth_path: kv.get::<String>("input.truth")?.map(PathBuf::from),
            recon: ReconstructionConfig::default().apply_kv(kv)?,
            eval: EvalOptions::from_kv(kv)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output: MethodOutput,
    pub metrics: Option<MetricsRow>,
}

/// Loads the inputs named by `req`, runs the method and writes the run
/// directory. Metrics are computed when a ground truth is available.
pub fn execute_run(req: &RunRequest, out_dir: &Path) -> Result<RunOutcome> {
    let buildings = BuildingMap::read(&req.buildings_path)?;
    let sensors = SensorSet::read(&req.sensors_path, buildings.dims())?;
    let truth = req.truth_path.as_ref().map(ExposureGrid::read).transpose()?;
    create_dir(out_dir)?;
    let output = run_method(req.method, &sensors, &buildings, &req.recon, req.eval.idw_power)?;

    sensors.write(out_dir.join(SENSORS_FILE))?;
    output.predicted.write(out_dir.join(recon::PREDICTED_FILE))?;
    let mut manifest = RunRequest {
        sensors_path: out_dir.join(SENSORS_FILE),
        ..req.clone()
    }
    .manifest();
    manifest.set("run.scale", format!("{:.16e}", output.scale));
    if let Some(fit) = &output.fit {
        let path = out_dir.join(recon::LOSS_FILE);
        fs::write(&path, fit.loss_csv()).map_err(|e| Error::io(&path, e))?;
        // Record the network that actually ran (depth may have been reduced).
        let resolved = ReconstructionConfig {
            net: fit.net.clone(),
            ..req.recon.clone()
        };
        manifest.merge(&resolved.to_kv());
        manifest.set("prior.mode", req.method.prior().expect("network method"));
        manifest.set("run.initial_loss", format!("{:.16e}", fit.initial_loss()));
        manifest.set("run.final_loss", format!("{:.16e}", fit.final_loss));
    }
    manifest.write(out_dir.join(recon::MANIFEST_FILE))?;

    let metrics = match truth {
        Some(truth) => {
            let row = compute_metrics(req, &sensors, &buildings, &truth, &output.predicted, output.scale)?;
            let report = metrics::error_map(&truth, &output.predicted)?;
            report.write(out_dir.join(ERROR_FILE))?;
            let path = out_dir.join(METRICS_FILE);
            fs::write(&path, format!("{CSV_HEADER}\n{}\n", row.csv_line()))
                .map_err(|e| Error::io(&path, e))?;
            Some(row)
        }
        None => None,
    };
    Ok(RunOutcome { output, metrics })
}

fn compute_metrics(
    req: &RunRequest,
    sensors: &SensorSet,
    buildings: &BuildingMap,
    truth: &ExposureGrid,
    predicted: &ExposureGrid,
    scale: f64,
) -> Result<MetricsRow> {
    let mask = held_out_mask(sensors, buildings, req.eval.exclude_sensors, req.eval.exclude_buildings);
    let report = ErrorReport::compute(truth, predicted, &mask)?;
    Ok(MetricsRow::from_report(
        req.run_id.clone(),
        req.method,
        sensors.len(),
        req.recon.seed,
        &report,
        scale,
    ))
}

/// Recomputes the metrics row of a finished run from its persisted files.
pub fn metrics_from_run_dir(dir: &Path) -> Result<MetricsRow> {
    let manifest = KvConfig::read(dir.join(recon::MANIFEST_FILE))?;
    let req = RunRequest::from_manifest(&manifest)?;
    let truth_path = req.truth_path.clone().ok_or_else(|| Error::Config {
        key: "input.truth".into(),
        msg: "run has no ground truth to compare against".into(),
    })?;
    let buildings = BuildingMap::read(&req.buildings_path)?;
    let sensors = SensorSet::read(dir.join(SENSORS_FILE), buildings.dims())?;
    let truth = ExposureGrid::read(truth_path)?;
    let predicted = ExposureGrid::read(dir.join(recon::PREDICTED_FILE))?;
    let scale: f64 = manifest.get("run.scale")?.ok_or_else(|| Error::Config {
        key: "run.scale".into(),
        msg: "required".into(),
    })?;
    compute_metrics(&req, &sensors, &buildings, &truth, &predicted, scale)
}

/// A sensor-density sweep: every method on every (count, seed) sensor set of
/// one generated scene.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub scene: SceneSetup,
    pub sensor_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub recon: ReconstructionConfig,
    pub eval: EvalOptions,
    pub jobs: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            scene: SceneSetup::default(),
            sensor_counts: vec![20, 40, 60, 100],
            seeds: (0..10).collect(),
            methods: vec![Method::Glip, Method::Grip],
            recon: ReconstructionConfig::default(),
            eval: EvalOptions::default(),
            jobs: 1,
        }
    }
}

impl SweepSpec {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut known: Vec<&str> = vec!["sweep.sensor_counts", "sweep.seeds", "sweep.methods", "sweep.jobs"];
        known.extend(SceneSetup::KEYS);
        known.extend(ReconstructionConfig::KEYS);
        known.extend(EvalOptions::KEYS);
        kv.reject_unknown(&known, &["run."])?;
        let d = Self::default();
        let methods = match kv.get_list::<String>("sweep.methods")? {
            Some(list) => list.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?,
            None => d.methods,
        };
        let spec = Self {
            scene: SceneSetup::from_kv(kv)?,
            sensor_counts: kv.get_list("sweep.sensor_counts")?.unwrap_or(d.sensor_counts),
            seeds: kv.get_list("sweep.seeds")?.unwrap_or(d.seeds),
            methods,
            recon: ReconstructionConfig::default().apply_kv(kv)?,
            eval: EvalOptions::from_kv(kv)?,
            jobs: kv.get_or("sweep.jobs", d.jobs)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Resolved spec as config text; feeding it back reproduces the sweep.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = self.scene.to_kv();
        kv.merge(&self.recon.to_kv());
        self.eval.write_kv(&mut kv);
        kv.set_list("sweep.sensor_counts", &self.sensor_counts);
        kv.set_list("sweep.seeds", &self.seeds);
        kv.set_list("sweep.methods", &self.methods);
        kv.set("run.version", env!("CARGO_PKG_VERSION"));
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Error::Config {
            key: format!("sweep.{what}"),
            msg: "must not be empty".into(),
        };
        if self.sensor_counts.is_empty() {
            return Err(empty("sensor_counts"));
        }
        if self.seeds.is_empty() {
            return Err(empty("seeds"));
        }
        if self.methods.is_empty() {
            return Err(empty("methods"));
        }
        if self.sensor_counts.contains(&0) {
            return Err(Error::Config {
                key: "sweep.sensor_counts".into(),
                msg: "counts must be positive".into(),
            });
        }
        self.recon.validate()
    }

    /// Runs in table order: method, then sensor count, then seed.
    pub fn run_ids(&self) -> Vec<(Method, usize, u64)> {
        let mut ids = Vec::new();
        for &m in &self.methods {
            for &n in &self.sensor_counts {
                for &s in &self.seeds {
                    ids.push((m, n, s));
                }
            }
        }
        ids
    }
}

pub fn run_id(method: Method, count: usize, seed: u64) -> String {
    format!("{method}-n{count}-s{seed}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub run_id: String,
    pub method: Method,
    pub sensors: usize,
    pub seed: u64,
    pub outcome: std::result::Result<MetricsRow, String>,
    /// Masked training loss before the first and after the last update.
    pub losses: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub sensors: usize,
    pub runs: usize,
    pub mean: [f64; 4],
    pub std: [f64; 4],
    pub n_evaluated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResultTable {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<AggregateRow>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl SweepResultTable {
    fn from_rows(rows: Vec<SweepRow>, spec: &SweepSpec) -> Self {
        let mut aggregates = Vec::new();
        for &method in &spec.methods {
            for &sensors in &spec.sensor_counts {
                let ok: Vec<&MetricsRow> = rows
                    .iter()
                    .filter(|r| r.method == method && r.sensors == sensors)
                    .filter_map(|r| r.outcome.as_ref().ok())
                    .collect();
                if ok.is_empty() {
                    continue;
                }
                let mut mean = [0.0; 4];
                let mut std = [0.0; 4];
                let cols: [fn(&MetricsRow) -> f64; 4] =
                    [|r| r.mse_vm, |r| r.mae_vm, |r| r.mse_norm, |r| r.mae_norm];
                for (k, col) in cols.iter().enumerate() {
                    let xs: Vec<f64> = ok.iter().map(|r| col(r)).collect();
                    (mean[k], std[k]) = mean_std(&xs);
                }
                aggregates.push(AggregateRow {
                    method,
                    sensors,
                    runs: ok.len(),
                    mean,
                    std,
                    n_evaluated: ok.iter().map(|r| r.n_evaluated).sum(),
                });
            }
        }
        Self { rows, aggregates }
    }

    pub fn row(&self, method: Method, sensors: usize, seed: u64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.sensors == sensors && r.seed == seed)
    }

    pub fn aggregate(&self, method: Method, sensors: usize) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.sensors == sensors)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            match &r.outcome {
                Ok(m) => out.push_str(&m.csv_line()),
                Err(e) => {
                    let msg = e.replace([',', '\n'], ";");
                    let _ = write!(
                        out,
                        "{},{},{},{},,,,,,error: {msg},,,,",
                        r.run_id, r.method, r.sensors, r.seed
                    );
                }
            }
            out.push('\n');
        }
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "mean:{}-n{},{},{},all,{:.16e},{:.16e},{:.16e},{:.16e},{},aggregate of {} runs,{:.16e},{:.16e},{:.16e},{:.16e}",
                a.method,
                a.sensors,
                a.method,
                a.sensors,
                a.mean[0],
                a.mean[1],
                a.mean[2],
                a.mean[3],
                a.n_evaluated,
                a.runs,
                a.std[0],
                a.std[1],
                a.std[2],
                a.std[3]
            );
        }
        out
    }
}

fn sweep_job(
    spec: &SweepSpec,
    scene_dir: &Path,
    runs_dir: &Path,
    scene: &SimulatedScene,
    (method, count, seed): (Method, usize, u64),
) -> SweepRow {
    let id = run_id(method, count, seed);
    let result = (|| -> Result<(MetricsRow, Option<(f64, f64)>)> {
        // Same sensor draw for every method at a given (count, seed).
        let sensors = sim::place_sensors(&scene.scene, &scene.truth, count, seed)?;
        let run_dir = runs_dir.join(&id);
        create_dir(&run_dir)?;
        let sensors_path = run_dir.join(SENSORS_FILE);
        sensors.write(&sensors_path)?;
        let req = RunRequest {
            run_id: id.clone(),
            method,
            sensors_path,
            buildings_path: scene_dir.join(BUILDINGS_FILE),
            truth_path: Some(scene_dir.join(TRUTH_FILE)),
            recon: ReconstructionConfig {
                seed,
                ..spec.recon.clone()
            },
            eval: spec.eval,
        };
        let outcome = execute_run(&req, &run_dir)?;
        let losses = outcome
            .output
            .fit
            .as_ref()
            .map(|f| (f.initial_loss(), f.final_loss));
        Ok((outcome.metrics.expect("sweep runs have ground truth"), losses))
    })();
    let (outcome, losses) = match result {
        Ok((m, l)) => (Ok(m), l),
        Err(e) => (Err(e.to_string()), None),
    };
    SweepRow {
        run_id: id,
        method,
        sensors: count,
        seed,
        outcome,
        losses,
    }
}

/// Generates the scene, runs every job (concurrently when `spec.jobs > 1`)
/// and writes `results.csv` and `sweep.cfg`. Row order follows the spec, so
/// the table does not depend on the job count. Failed runs become error rows.
pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<SweepResultTable> {
    spec.validate()?;
    create_dir(out_dir)?;
    spec.to_kv().write(out_dir.join(SWEEP_MANIFEST_FILE))?;
    let scene = SimulatedScene::generate(&spec.scene)?;
    let scene_dir = out_dir.join("scene");
    scene.write(&scene_dir)?;
    let runs_dir = out_dir.join("runs");
    create_dir(&runs_dir)?;

    let ids = spec.run_ids();
    let rows: Vec<SweepRow> = if spec.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
        pool.install(|| {
            ids.par_iter()
                .map(|&id| sweep_job(spec, &scene_dir, &runs_dir, &scene, id))
                .collect()
        })
    } else {
        ids.iter()
            .map(|&id| sweep_job(spec, &scene_dir, &runs_dir, &scene, id))
            .collect()
    };
    let table = SweepResultTable::from_rows(rows, spec);
    let path = out_dir.join(RESULTS_FILE);
    fs::write(&path, table.to_csv()).map_err(|e| Error::io(&path, e))?;
    Ok(table)
}
