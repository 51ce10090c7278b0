use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use arcpinn::checkpoint::{checkpoint_scalar, Checkpoint};
use arcpinn::config::{load_config, RunConfig};
use arcpinn::grid::{GridSpec, TemperatureGrid};
use arcpinn::metrics::{ComparisonReport, PathLine, PinnModel, TemperatureSource};
use arcpinn::oracle::{fdm_solve, slice_times};
use arcpinn::physics::GoldakSource;
use arcpinn::sampling::build_collocation_set;
use arcpinn::train::{train, EpochRecord, TrainOptions};
use arcpinn::Real;

#[derive(Parser)]
#[command(name = "arcpinn", version, about = "PINN thermal simulator for a moving Goldak heat source")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Preset {
    Cc,
    Fc,
    Ff,
    Custom,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FieldFormat {
    Csv,
    Vtk,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network; writes model.ckpt, train.log and config.toml into --out.
    Train {
        #[arg(long, value_enum, default_value = "f32")]
        precision: Precision,
        /// Use the desk-scale defaults (10% collocation, 3000 + 30 epochs) when no --config is given.
        #[arg(long)]
        desk: bool,
        /// Checkpoint path; defaults to `model.ckpt` in --out.
        #[arg(long)]
        checkpoint_out: Option<PathBuf>,
        /// Training log path; defaults to `train.log` in --out.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Override `[training] adam_epochs`.
        #[arg(long)]
        adam_epochs: Option<usize>,
        /// Override `[training] lbfgs_epochs`.
        #[arg(long)]
        lbfgs_epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on a lattice or on listed points.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reuse the nodes and times of this grid file.
        #[arg(long, conflicts_with = "points")]
        lattice: Option<PathBuf>,
        /// CSV with header `x,y,z,t`.
        #[arg(long)]
        points: Option<PathBuf>,
        /// Lattice spacing when neither --lattice nor --points is given.
        #[arg(long, default_value_t = 0.5)]
        spacing: f64,
        /// Slice interval when neither --lattice nor --points is given.
        #[arg(long, default_value_t = 0.1)]
        interval: f64,
        #[arg(long, value_enum, default_value = "csv")]
        format: FieldFormat,
    },
    /// Run the finite-difference reference solver.
    Oracle {
        #[arg(long, value_enum, default_value = "cc")]
        preset: Preset,
        /// Spacing for `--preset custom`.
        #[arg(long)]
        spacing: Option<f64>,
        /// Time step for `--preset custom`.
        #[arg(long)]
        dt: Option<f64>,
        /// Interval between stored slices.
        #[arg(long, default_value_t = 0.1)]
        interval: f64,
        #[arg(long, value_enum, default_value = "csv")]
        format: FieldFormat,
    },
    /// Compare a checkpoint (or a second grid) against a reference grid.
    Compare {
        #[arg(long, required_unless_present = "pred")]
        checkpoint: Option<PathBuf>,
        /// Predicted grid file instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        pred: Option<PathBuf>,
        /// Reference grid file.
        #[arg(long)]
        reference: PathBuf,
        /// Exit status 0 iff the relative L2 error is below this value.
        #[arg(long, default_value_t = 0.15)]
        threshold: f64,
        /// Path-profile times.
        #[arg(long, value_delimiter = ',', default_value = "0.6,1.6,2.6")]
        profile_times: Vec<f64>,
        #[arg(long, default_value_t = 161)]
        profile_samples: usize,
    },
    /// Write the collocation set as CSV.
    Sample,
    /// Print the source energy bookkeeping; optionally dump the density on a
    /// horizontal slice as CSV (`x,y,z,t,q`) to --out.
    Flux {
        /// `x,y,z,t` in mm and s.
        #[arg(long, value_delimiter = ',')]
        point: Option<Vec<f64>>,
        /// Time for the plate energy report and the slice.
        #[arg(long, default_value_t = 1.5)]
        time: f64,
        /// Height of the slice to dump, mm.
        #[arg(long)]
        slice_z: Option<f64>,
        /// Node spacing of the slice, mm.
        #[arg(long, default_value_t = 0.25)]
        spacing: f64,
    },
}

fn load_cfg(common: &Common, fallback: RunConfig) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => fallback,
    };
    cfg.apply_env_seed()?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn out_path(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

fn write_grid(grid: &TemperatureGrid, path: &Path, format: FieldFormat) -> Result<()> {
    match format {
        FieldFormat::Csv => grid.save_csv(path)?,
        FieldFormat::Vtk => {
            let stem = path.file_name().and_then(|s| s.to_str()).unwrap_or("field").to_string();
            let paths = grid.save_vtk_series(path, &stem)?;
            log::info!("wrote {} VTK files into {}", paths.len(), path.display());
        }
    }
    Ok(())
}

struct TrainPaths {
    checkpoint: Option<PathBuf>,
    log: Option<PathBuf>,
}

fn cmd_train<S: Real>(common: &Common, cfg: &RunConfig, paths: TrainPaths) -> Result<()> {
    let dir = out_path(common, "run");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let checkpoint = paths.checkpoint.unwrap_or_else(|| dir.join("model.ckpt"));
    let log_path = paths.log.unwrap_or_else(|| dir.join("train.log"));
    let set = build_collocation_set(cfg)?;
    log::info!(
        "collocation: {} boundary, {} pde ({} source-following), {} initial",
        set.n_bc(),
        set.n_pde(),
        set.source.len(),
        set.n_initial()
    );
    let mut log_file = std::io::BufWriter::new(
        std::fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let start = Instant::now();
    let mut progress = |r: &EpochRecord| {
        if r.epoch.is_multiple_of(100) || r.epoch == 1 {
            eprintln!("{:?} {} {:.3e} ({:.0} s)", r.phase, r.epoch, r.l_total, start.elapsed().as_secs_f64());
        }
    };
    let opts = TrainOptions {
        threads: common.threads,
        log: Some(&mut log_file),
        checkpoint: Some(checkpoint.clone()),
        progress: Some(&mut progress),
    };
    let (_, report) = train::<S>(cfg, &set, opts)?;
    log_file.flush()?;
    let last = report.history.last();
    println!(
        "trained in {:.1} s (Adam {:.1} s, L-BFGS {:.1} s); final loss {:.4e}; checkpoint {}",
        report.adam_seconds + report.lbfgs_seconds,
        report.adam_seconds,
        report.lbfgs_seconds,
        last.map_or(f64::NAN, |r| r.l_total),
        checkpoint.display()
    );
    Ok(())
}

/// A checkpoint of either precision.
enum Model {
    F32(PinnModel<f32>),
    F64(PinnModel<f64>),
}

impl Model {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(match checkpoint_scalar(&text)? {
            "f32" => Model::F32(PinnModel::new(Checkpoint::from_text(&text)?)),
            "f64" => Model::F64(PinnModel::new(Checkpoint::from_text(&text)?)),
            other => bail!("unsupported scalar `{other}` in {}", path.display()),
        })
    }

    fn source(&self) -> &dyn TemperatureSource {
        match self {
            Model::F32(m) => m,
            Model::F64(m) => m,
        }
    }

    fn on_lattice(&self, like: &TemperatureGrid) -> arcpinn::Result<TemperatureGrid> {
        match self {
            Model::F32(m) => m.on_lattice(like),
            Model::F64(m) => m.on_lattice(like),
        }
    }

    fn domain(&self) -> arcpinn::DomainSpec {
        match self {
            Model::F32(m) => m.domain(),
            Model::F64(m) => m.domain(),
        }
    }
}

fn read_points(path: &Path) -> Result<Vec<[f64; 4]>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for (i, row) in reader.deserialize::<(f64, f64, f64, f64)>().enumerate() {
        let (x, y, z, t) = row.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        points.push([x, y, z, t]);
    }
    Ok(points)
}

fn empty_lattice(domain: &arcpinn::DomainSpec, spacing: f64, interval: f64) -> Result<TemperatureGrid> {
    let spec = GridSpec::new(spacing, interval, domain)?;
    let times = slice_times(domain.t_end, interval);
    let slices = vec![vec![0.0; spec.node_count()]; times.len()];
    Ok(TemperatureGrid::new(spec, times, slices)?)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let common = cli.common;
    match cli.command {
        Command::Train {
            precision,
            desk,
            checkpoint_out,
            log,
            adam_epochs,
            lbfgs_epochs,
        } => {
            let mut cfg = load_cfg(&common, if desk { RunConfig::desk_scale() } else { RunConfig::standard() })?;
            if let Some(n) = adam_epochs {
                cfg.training.adam_epochs = n;
            }
            if let Some(n) = lbfgs_epochs {
                cfg.training.lbfgs_epochs = n;
            }
            cfg.validate()?;
            let paths = TrainPaths {
                checkpoint: checkpoint_out,
                log,
            };
            match precision {
                Precision::F32 => cmd_train::<f32>(&common, &cfg, paths)?,
                Precision::F64 => cmd_train::<f64>(&common, &cfg, paths)?,
            }
        }
        Command::Predict {
            checkpoint,
            lattice,
            points,
            spacing,
            interval,
            format,
        } => {
            let model = Model::load(&checkpoint)?;
            if let Some(points) = points {
                let pts = read_points(&points)?;
                let values = pool(common.threads, || model.source().temperatures(&pts))??;
                let mut out = std::io::BufWriter::new(std::fs::File::create(out_path(&common, "prediction.csv"))?);
                writeln!(out, "x,y,z,t,T")?;
                for (p, v) in pts.iter().zip(values) {
                    writeln!(out, "{},{},{},{},{v}", p[0], p[1], p[2], p[3])?;
                }
                out.flush()?;
            } else {
                let like = match lattice {
                    Some(path) => TemperatureGrid::load_csv(&path)?,
                    None => empty_lattice(&model.domain(), spacing, interval)?,
                };
                let grid = pool(common.threads, || model.on_lattice(&like))??;
                write_grid(&grid, &out_path(&common, "prediction.csv"), format)?;
            }
        }
        Command::Oracle {
            preset,
            spacing,
            dt,
            interval,
            format,
        } => {
            let cfg = load_cfg(&common, RunConfig::standard())?;
            let spec = match preset {
                Preset::Custom => {
                    let (Some(h), Some(dt)) = (spacing, dt) else {
                        bail!("--preset custom needs --spacing and --dt");
                    };
                    GridSpec::new(h, dt, &cfg.domain)?
                }
                Preset::Cc => GridSpec::preset("cc", &cfg.domain)?,
                Preset::Fc => GridSpec::preset("fc", &cfg.domain)?,
                Preset::Ff => GridSpec::preset("ff", &cfg.domain)?,
            };
            let times = slice_times(cfg.domain.t_end, interval);
            let start = Instant::now();
            let grid = pool(common.threads, || fdm_solve(&cfg, &spec, &times))??;
            let out = out_path(&common, "oracle.csv");
            write_grid(&grid, &out, format)?;
            println!(
                "oracle {:?} nodes, {} steps, peak {:.1} degC, {:.1} s -> {}",
                spec.dims(),
                spec.steps(),
                grid.max(),
                start.elapsed().as_secs_f64(),
                out.display()
            );
        }
        Command::Compare {
            checkpoint,
            pred,
            reference,
            threshold,
            profile_times,
            profile_samples,
        } => {
            let cfg = load_cfg(&common, RunConfig::standard())?;
            let reference = TemperatureGrid::load_csv(&reference)?;
            let line = PathLine::deposition(&cfg, profile_samples);
            let report = pool(common.threads, || -> Result<ComparisonReport> {
                match (&checkpoint, &pred) {
                    (Some(ck), _) => {
                        let model = Model::load(ck)?;
                        let field = model.on_lattice(&reference)?;
                        Ok(ComparisonReport::build(model.source(), &field, &reference, &cfg.probes.points, &profile_times, &line)?)
                    }
                    (None, Some(path)) => {
                        let field = TemperatureGrid::load_csv(path)?;
                        Ok(ComparisonReport::build(&field, &field, &reference, &cfg.probes.points, &profile_times, &line)?)
                    }
                    (None, None) => bail!("either --checkpoint or --pred is required"),
                }
            })??;
            let dir = out_path(&common, "comparison");
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("report.txt"), report.summary())?;
            std::fs::write(dir.join("report.json"), report.to_json())?;
            std::fs::write(dir.join("probes_pred.csv"), report.probes_pred.to_csv())?;
            std::fs::write(dir.join("probes_ref.csv"), report.probes_ref.to_csv())?;
            for (p, r) in report.profiles_pred.iter().zip(&report.profiles_ref) {
                std::fs::write(dir.join(format!("path_pred_t{:.2}.csv", p.t)), p.to_csv())?;
                std::fs::write(dir.join(format!("path_ref_t{:.2}.csv", r.t)), r.to_csv())?;
            }
            print!("{}", report.summary());
            let pass = report.relative_l2 < threshold;
            println!(
                "{}: relative L2 {:.4e} {} threshold {threshold}",
                if pass { "PASS" } else { "FAIL" },
                report.relative_l2,
                if pass { "<" } else { ">=" }
            );
            if !pass {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Sample => {
            let cfg = load_cfg(&common, RunConfig::standard())?;
            let set = build_collocation_set(&cfg)?;
            let path = out_path(&common, "collocation.csv");
            let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
            set.write_csv(&mut out)?;
            out.flush()?;
            println!(
                "{} points ({} boundary, {} pde, {} initial) -> {}",
                set.len(),
                set.n_bc(),
                set.n_pde(),
                set.n_initial(),
                path.display()
            );
        }
        Command::Flux {
            point,
            time,
            slice_z,
            spacing,
        } => {
            let cfg = load_cfg(&common, RunConfig::standard())?;
            let src = GoldakSource::new(&cfg.goldak, &cfg.domain);
            if let Some(p) = point {
                if p.len() != 4 {
                    bail!("--point takes four comma-separated values x,y,z,t");
                }
                println!("q({}, {}, {}, {}) = {:e}", p[0], p[1], p[2], p[3], src.flux([p[0], p[1], p[2], p[3]]));
            }
            let input = cfg.goldak.efficiency * cfg.goldak.power;
            println!("peak density            {:e}", src.peak());
            println!("eta * P                 {input:e}");
            println!("half-space integral     {:e}", src.energy_half_space());
            println!("plate integral at t={time}  {:e}", src.energy_in_plate(&cfg.domain, time));
            println!("lobe continuity gap     {:.3e}", cfg.goldak.continuity_gap());
            if let Some(z) = slice_z {
                if !(0.0..=cfg.domain.lz).contains(&z) {
                    bail!("--slice-z {z} is outside the plate (0..{})", cfg.domain.lz);
                }
                let nx = (cfg.domain.lx / spacing).round() as usize;
                let ny = (cfg.domain.ly / spacing).round() as usize;
                if spacing <= 0.0 || nx == 0 || ny == 0 {
                    bail!("--spacing must be positive and below the plate size");
                }
                let path = out_path(&common, "flux.csv");
                let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
                writeln!(out, "x,y,z,t,q")?;
                for j in 0..=ny {
                    let y = cfg.domain.ly * j as f64 / ny as f64;
                    for i in 0..=nx {
                        let x = cfg.domain.lx * i as f64 / nx as f64;
                        writeln!(out, "{x},{y},{z},{time},{:e}", src.flux([x, y, z, time]))?;
                    }
                }
                out.flush()?;
                println!("slice z = {z}: {} nodes -> {}", (nx + 1) * (ny + 1), path.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
