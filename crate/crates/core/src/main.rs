use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emf_glip::config::KvConfig;
use emf_glip::harness::{
    self, Method, RunRequest, SceneSetup, SimulatedScene, SweepSpec, CSV_HEADER, SENSORS_FILE,
};
use emf_glip::recon::ReconstructionConfig;
use emf_glip::{render, sim, Error, ExposureGrid, Result};

#[derive(Parser)]
#[command(name = "glip", version, about = "Sparse EMF exposure map reconstruction")]
struct Cli {
    /// Flat key=value config file (a run manifest or sweep.cfg also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (or file, for `render`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random urban scene and its ground-truth field.
    Simulate {
        /// Grid side in cells (square kilometre scene).
        #[arg(long)]
        size: Option<usize>,
    },
    /// Reconstruct one map from sparse sensors.
    Reconstruct {
        /// Scene directory written by `simulate`.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Building raster, when no scene directory is given.
        #[arg(long)]
        buildings: Option<PathBuf>,
        /// Ground truth for metrics, when no scene directory is given.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Sensor CSV; otherwise `--count` sensors are drawn from the scene.
        #[arg(long)]
        sensors: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Sensor-density sweep over methods, counts and seeds.
    Sweep {
        /// Grid side in cells, overriding the config.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Recompute metrics of a finished run directory.
    Metrics {
        #[arg(long)]
        run: PathBuf,
    },
    /// Render an exposure grid as a greyscale PGM.
    Render {
        #[arg(long)]
        input: PathBuf,
        /// Fixed white level in V/m; defaults to the map maximum.
        #[arg(long)]
        scale: Option<f64>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<KvConfig> {
    match path {
        Some(p) => KvConfig::read(p),
        None => Ok(KvConfig::new()),
    }
}

fn need_out(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref().ok_or_else(|| Error::Config {
        key: "--out".into(),
        msg: "an output path is required".into(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let kv = load_config(&cli.config)?;
    match cli.cmd {
        Cmd::Simulate { size } => {
            let out = need_out(&cli.out)?;
            let mut kv = kv;
            if let Some(n) = size {
                kv.set("scene.rows", n);
                kv.set("scene.cols", n);
                kv.set("scene.cell_size_m", harness::SCENE_AREA_M / n as f64);
            }
            if let Some(s) = cli.seed {
                kv.set("scene.seed", s);
            }
            let setup = SceneSetup::from_kv(&kv)?;
            let scene = SimulatedScene::generate(&setup)?;
            scene.write(out)?;
            println!(
                "wrote {} ({}x{}, max {:.4} V/m)",
                out.display(),
                scene.dims().rows,
                scene.dims().cols,
                scene.truth.max()
            );
            Ok(())
        }
        Cmd::Reconstruct {
            scene,
            buildings,
            truth,
            sensors,
            count,
            method,
            epochs,
        } => {
            let out = need_out(&cli.out)?;
            let mut req = if kv.contains("run.method") {
                RunRequest::from_manifest(&kv)?
            } else {
                let (buildings_path, truth_path) = match (&scene, &buildings) {
                    (Some(dir), _) => (dir.join(harness::BUILDINGS_FILE), Some(dir.join(harness::TRUTH_FILE))),
                    (None, Some(b)) => (b.clone(), truth.clone()),
                    (None, None) => {
                        return Err(Error::Config {
                            key: "--scene".into(),
                            msg: "give --scene, --buildings or a run manifest".into(),
                        })
                    }
                };
                RunRequest {
                    run_id: "run".into(),
                    method: Method::Glip,
                    sensors_path: sensors.clone().unwrap_or_default(),
                    buildings_path,
                    truth_path,
                    recon: ReconstructionConfig::default().apply_kv(&kv)?,
                    eval: harness::EvalOptions::from_kv(&kv)?,
                }
            };
            if let Some(m) = method {
                req.method = m;
            }
            if let Some(e) = epochs {
                req.recon.epochs = e;
            }
            if let Some(s) = cli.seed {
                req.recon.seed = s;
            }
            if let Some(p) = sensors {
                req.sensors_path = p;
            } else if let Some(n) = count {
                let dir = scene.as_ref().ok_or_else(|| Error::Config {
                    key: "--count".into(),
                    msg: "drawing sensors needs --scene".into(),
                })?;
                let s = SimulatedScene::read(dir)?;
                let set = sim::place_sensors(&s.scene, &s.truth, n, req.recon.seed)?;
                std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
                req.sensors_path = out.join(SENSORS_FILE);
                set.write(&req.sensors_path)?;
            } else if req.sensors_path.as_os_str().is_empty() {
                return Err(Error::Config {
                    key: "--sensors".into(),
                    msg: "give --sensors or --count".into(),
                });
            }
            req.recon.validate()?;
            let outcome = harness::execute_run(&req, out)?;
            if let Some(fit) = &outcome.output.fit {
                println!("loss {:.6e} -> {:.6e} over {} epochs", fit.initial_loss(), fit.final_loss, fit.epochs_run);
            }
            if let Some(m) = outcome.metrics {
                println!("{CSV_HEADER}\n{}", m.csv_line());
            }
            Ok(())
        }
        Cmd::Sweep { size } => {
            let out = need_out(&cli.out)?;
            let mut kv = kv;
            if let Some(n) = size {
                kv.set("scene.rows", n);
                kv.set("scene.cols", n);
                kv.set("scene.cell_size_m", harness::SCENE_AREA_M / n as f64);
            }
            if let Some(s) = cli.seed {
                kv.set("scene.seed", s);
            }
            let mut spec = SweepSpec::from_kv(&kv)?;
            if let Some(j) = cli.jobs {
                spec.jobs = j.max(1);
            }
            let table = harness::run_sweep(&spec, out)?;
            let failed = table.rows.iter().filter(|r| r.outcome.is_err()).count();
            println!(
                "{} runs ({failed} failed), results in {}",
                table.rows.len(),
                out.join(harness::RESULTS_FILE).display()
            );
            Ok(())
        }
        Cmd::Metrics { run } => {
            let row = harness::metrics_from_run_dir(&run)?;
            println!("{CSV_HEADER}\n{}", row.csv_line());
            Ok(())
        }
        Cmd::Render { input, scale } => {
            let out = need_out(&cli.out)?;
            let grid = ExposureGrid::read(&input)?;
            render::write_pgm(&grid, scale, out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
