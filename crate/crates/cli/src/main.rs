mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use wxlidar::augment::{augment, ReturnModel};
use wxlidar::container::{export_png, read_stack, write_stack, ImageContainer, PHYSICS_CHANNEL};
use wxlidar::io::{load_material_table, read_pointcloud, write_pointcloud};
use wxlidar::loss::{cycle_loss_masked, physics_loss, total_loss};
use wxlidar::metrics::{evaluate_frames, EvalMode};
use wxlidar::modalities::compute_modalities;
use wxlidar::physics::physics_target_image;
use wxlidar::projection::{back_project, project};
use wxlidar::scene::generate_scene;
use wxlidar::{Condition, MaterialTable, PointFormat};

use config::{frame_hash, write_manifest, RunConfig, RunInfo};

/// Usage-level failure (bad flag combination, empty batch, unreadable config).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "wxlidar", version, about = "Weather-aware LiDAR intensity pipeline")]
struct Cli {
    /// Base RNG seed. Batch frames use seed XOR hash(file name).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML config; flags take precedence. A previous run's manifest works here.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Point cloud to range-image stack (.wxri).
    Project {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        cloud: CloudArgs,
        #[command(flatten)]
        projection: ProjectionArgs,
        /// Also write intensity and range PNGs.
        #[arg(long)]
        png: bool,
        /// Also write the per-point modalities as CSV.
        #[arg(long)]
        modalities_csv: bool,
    },
    /// Rain or snow degradation of a clear-weather cloud.
    Augment {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        cloud: CloudArgs,
        #[command(flatten)]
        weather: WeatherArgs,
        #[command(flatten)]
        scatter: ScatterArgs,
    },
    /// Add the attenuated physics intensity channel to a stack.
    Intensity {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        weather: WeatherArgs,
    },
    /// Compare generated frames against reference frames.
    Evaluate {
        generated: PathBuf,
        reference: PathBuf,
        #[arg(long, conflicts_with = "unpaired")]
        paired: bool,
        #[arg(long)]
        unpaired: bool,
        /// Comma-separated subset of mse, ssim, kl, wasserstein.
        #[arg(long, value_delimiter = ',')]
        metrics: Option<Vec<String>>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        error_bins: Option<usize>,
    },
    /// Physics and cycle losses between stored stacks, as JSON.
    Loss {
        /// Generated intensity container.
        #[arg(long)]
        generated: PathBuf,
        /// Stack holding the physics channel; its mask selects the pixels.
        #[arg(long)]
        target: PathBuf,
        #[arg(long, requires_all = ["x_rec", "y", "y_rec"])]
        x: Option<PathBuf>,
        #[arg(long)]
        x_rec: Option<PathBuf>,
        #[arg(long)]
        y: Option<PathBuf>,
        #[arg(long)]
        y_rec: Option<PathBuf>,
        #[arg(long, requires = "adv_r2s")]
        adv_s2r: Option<f64>,
        #[arg(long)]
        adv_r2s: Option<f64>,
        #[arg(long)]
        lambda_cycle: Option<f64>,
        #[arg(long)]
        lambda_physics: Option<f64>,
    },
    /// Write labeled synthetic street scenes.
    Synth {
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
    /// Map a generated intensity image back onto the cloud behind a stack.
    Backproject {
        stack: PathBuf,
        generated: PathBuf,
        cloud: PathBuf,
        #[arg(long)]
        format: Option<PointFormat>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct InputArgs {
    input: Option<PathBuf>,
    /// Glob pattern; frames run in parallel.
    #[arg(long)]
    batch: Option<String>,
}

#[derive(Args)]
struct CloudArgs {
    #[arg(long)]
    format: Option<PointFormat>,
    /// Material table CSV (label,name,reflectance). Defaults to the built-in table.
    #[arg(long)]
    materials: Option<PathBuf>,
    #[arg(long)]
    neighbors: Option<usize>,
}

#[derive(Args)]
struct ProjectionArgs {
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Degrees.
    #[arg(long, allow_hyphen_values = true)]
    fov_up: Option<f64>,
    /// Degrees.
    #[arg(long, allow_hyphen_values = true)]
    fov_down: Option<f64>,
}

#[derive(Args)]
struct WeatherArgs {
    #[arg(long)]
    condition: Option<Condition>,
    /// mm/hr.
    #[arg(long)]
    rate: Option<f64>,
    /// Extinction override, 1/km.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    noise_threshold: Option<f64>,
    #[arg(long)]
    range_unit_scale: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReturnArg {
    PointIntensity,
    Lambertian,
}

#[derive(Args)]
struct ScatterArgs {
    #[arg(long)]
    beam_divergence: Option<f64>,
    #[arg(long)]
    particle_reflectivity: Option<f64>,
    #[arg(long)]
    reference_diameter: Option<f64>,
    #[arg(long)]
    max_particles: Option<usize>,
    #[arg(long)]
    min_range: Option<f64>,
    #[arg(long, value_enum)]
    return_model: Option<ReturnArg>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl CloudArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.format, self.format);
        set_opt(&mut cfg.materials, self.materials.clone());
        set(&mut cfg.neighbors, self.neighbors);
    }
}

impl ProjectionArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let p = &mut cfg.projection;
        set(&mut p.width, self.width);
        set(&mut p.height, self.height);
        set(&mut p.fov_up, self.fov_up);
        set(&mut p.fov_down, self.fov_down);
    }
}

impl WeatherArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let w = &mut cfg.weather;
        set(&mut w.condition, self.condition);
        set(&mut w.rate, self.rate);
        set_opt(&mut w.alpha, self.alpha);
        set(&mut w.noise_threshold, self.noise_threshold);
        set(&mut w.range_unit_scale, self.range_unit_scale);
    }
}

impl ScatterArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let s = &mut cfg.scatter;
        set_opt(&mut s.beam_divergence, self.beam_divergence);
        set_opt(&mut s.particle_reflectivity, self.particle_reflectivity);
        set_opt(&mut s.reference_diameter, self.reference_diameter);
        set_opt(&mut s.max_particles_per_beam, self.max_particles);
        set_opt(&mut s.min_range, self.min_range);
        set_opt(
            &mut s.return_model,
            self.return_model.map(|r| match r {
                ReturnArg::PointIntensity => ReturnModel::PointIntensity,
                ReturnArg::Lambertian => ReturnModel::Lambertian,
            }),
        );
    }
}

/// One unit of work: an input file and the seed it runs with.
struct Job {
    path: PathBuf,
    seed: u64,
}

fn jobs(input: &InputArgs, seed: u64) -> anyhow::Result<Vec<Job>> {
    if let Some(path) = &input.input {
        return Ok(vec![Job { path: path.clone(), seed }]);
    }
    let pattern = input.batch.as_deref().unwrap_or_default();
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| Usage(format!("bad glob `{pattern}`: {e}")))?
        .collect::<Result<_, _>>()
        .context("listing batch inputs")?;
    paths.sort();
    if paths.is_empty() {
        bail!(Usage(format!("`{pattern}` matched no files")));
    }
    Ok(paths
        .into_iter()
        .map(|path| {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Job { seed: seed ^ frame_hash(&name), path }
        })
        .collect())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "frame".into())
}

fn materials(cfg: &RunConfig) -> anyhow::Result<MaterialTable> {
    Ok(match &cfg.materials {
        Some(p) => load_material_table(p)?,
        None => MaterialTable::builtin(),
    })
}

fn run_jobs<F>(jobs: &[Job], f: F) -> anyhow::Result<Vec<PathBuf>>
where
    F: Fn(&Job) -> anyhow::Result<Vec<PathBuf>> + Sync,
{
    let results: Vec<_> = jobs
        .par_iter()
        .map(|job| f(job).with_context(|| format!("frame {}", job.path.display())))
        .collect();
    let mut outputs = Vec::new();
    for r in results {
        outputs.extend(r?);
    }
    Ok(outputs)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    cfg.weather.seed = cfg.seed;
    set_opt(&mut cfg.threads, cli.threads);
    if let Some(n) = cfg.threads {
        if n == 0 {
            bail!(Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting thread pool")?;
    }
    let out = cli.out_dir.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let (name, inputs, outputs) = match &cli.command {
        Command::Project {
            input,
            cloud,
            projection,
            png,
            modalities_csv,
        } => {
            cloud.apply(&mut cfg);
            projection.apply(&mut cfg);
            cfg.projection.validate()?;
            let table = materials(&cfg)?;
            let jobs = jobs(input, cfg.seed)?;
            let outputs = run_jobs(&jobs, |job| {
                let (pc, _) = read_pointcloud(&job.path, cfg.format)?;
                let mods = compute_modalities(&pc, &table, cfg.neighbors)?;
                let stack = project(&pc, &mods, &cfg.projection)?;
                let s = stem(&job.path);
                let mut written = vec![out.join(format!("{s}.wxri"))];
                write_stack(&stack, &written[0])?;
                if *png {
                    for (ch, img) in [("intensity", &stack.intensity), ("range", &stack.range)] {
                        let p = out.join(format!("{s}_{ch}.png"));
                        export_png(img, &p)?;
                        written.push(p);
                    }
                }
                if *modalities_csv {
                    let p = out.join(format!("{s}_modalities.csv"));
                    mods.write_csv(&p)?;
                    written.push(p);
                }
                println!(
                    "{}",
                    json!({
                        "frame": s,
                        "n_points": pc.len(),
                        "n_valid": stack.n_valid(),
                        "n_shadowed": stack.shadows.len(),
                    })
                );
                Ok(written)
            })?;
            ("project", paths(&jobs), outputs)
        }
        Command::Augment {
            input,
            cloud,
            weather,
            scatter,
        } => {
            cloud.apply(&mut cfg);
            weather.apply(&mut cfg);
            scatter.apply(&mut cfg);
            if cfg.weather.condition == Condition::Clear {
                bail!(Usage("augment needs --condition rain or snow".into()));
            }
            cfg.weather.validate()?;
            cfg.scatter.resolve(&cfg.weather)?;
            let table = materials(&cfg)?;
            let jobs = jobs(input, cfg.seed)?;
            let outputs = run_jobs(&jobs, |job| {
                let weather = cfg.weather.with_seed(job.seed);
                let model = cfg.scatter.resolve(&weather)?;
                let (pc, _) = read_pointcloud(&job.path, cfg.format)?;
                let mods = compute_modalities(&pc, &table, cfg.neighbors)?;
                let (degraded, report) = augment(&pc, &mods, &weather, &model)?;
                let base = format!("{}_{}", stem(&job.path), weather.condition);
                let cloud_path = out.join(format!("{base}.bin"));
                let report_path = out.join(format!("{base}.json"));
                write_pointcloud(&degraded, &cloud_path, cfg.format)?;
                let line = report.to_json_line();
                std::fs::write(&report_path, format!("{line}\n"))
                    .with_context(|| format!("writing {}", report_path.display()))?;
                println!("{line}");
                Ok(vec![cloud_path, report_path])
            })?;
            ("augment", paths(&jobs), outputs)
        }
        Command::Intensity { input, weather } => {
            weather.apply(&mut cfg);
            cfg.weather.validate()?;
            let alpha = cfg.weather.extinction()?;
            let jobs = jobs(input, cfg.seed)?;
            let outputs = run_jobs(&jobs, |job| {
                let mut stack = read_stack(&job.path)?;
                let (img, max) = physics_target_image(&stack, &cfg.weather)?;
                stack.extra.insert(PHYSICS_CHANNEL.to_string(), img);
                let p = out.join(format!("{}.wxri", stem(&job.path)));
                write_stack(&stack, &p)?;
                println!("{}", json!({ "frame": stem(&job.path), "alpha": alpha, "max_raw": max }));
                Ok(vec![p])
            })?;
            ("intensity", paths(&jobs), outputs)
        }
        Command::Evaluate {
            generated,
            reference,
            paired: _,
            unpaired,
            metrics,
            bins,
            epsilon,
            error_bins,
        } => {
            if *unpaired {
                cfg.eval.mode = EvalMode::Unpaired;
            }
            set(&mut cfg.eval.metrics, metrics.clone());
            set(&mut cfg.eval.n_bins, *bins);
            set(&mut cfg.eval.epsilon, *epsilon);
            set(&mut cfg.eval.error_bins, *error_bins);
            let report = evaluate_frames(generated, reference, &cfg.eval)?;
            report.check_invariants()?;
            let mut written = vec![out.join("report.json"), out.join("report.txt")];
            write_text(&written[0], &report.to_json())?;
            write_text(&written[1], &report.to_text())?;
            let (pg, pr) = (out.join("pdf_generated.csv"), out.join("pdf_reference.csv"));
            report.write_pdf_csv(&pg, &pr)?;
            written.extend([pg, pr]);
            if let Some(h) = &report.error_histogram {
                let p = out.join("error_hist.csv");
                h.write_csv(&p)?;
                written.push(p);
            }
            print!("{}", report.to_text());
            ("evaluate", vec![generated.clone(), reference.clone()], written)
        }
        Command::Loss {
            generated,
            target,
            x,
            x_rec,
            y,
            y_rec,
            adv_s2r,
            adv_r2s,
            lambda_cycle,
            lambda_physics,
        } => {
            set(&mut cfg.loss.cycle, *lambda_cycle);
            set(&mut cfg.loss.physics, *lambda_physics);
            cfg.loss.validate()?;
            let gen = ImageContainer::read(generated)?.intensity()?;
            let tgt = ImageContainer::read(target)?;
            let phys_target = match tgt.channel(PHYSICS_CHANNEL) {
                Some(img) => img,
                None => {
                    log::warn!("{} has no {PHYSICS_CHANNEL} channel; using intensity", target.display());
                    tgt.intensity()?
                }
            };
            let mask = tgt.mask();
            let physics = physics_loss(&gen, &phys_target, mask.as_deref())?;
            let mut inputs = vec![generated.clone(), target.clone()];
            let cycle = match (x, x_rec, y, y_rec) {
                (Some(x), Some(xr), Some(y), Some(yr)) => {
                    let read = |p: &PathBuf| -> anyhow::Result<(wxlidar::Image, Option<Vec<bool>>)> {
                        let c = ImageContainer::read(p)?;
                        Ok((c.intensity()?, c.mask()))
                    };
                    let ((xi, xm), (xri, _), (yi, ym), (yri, _)) = (read(x)?, read(xr)?, read(y)?, read(yr)?);
                    inputs.extend([x.clone(), xr.clone(), y.clone(), yr.clone()]);
                    Some(cycle_loss_masked(&xi, &xri, xm.as_deref(), &yi, &yri, ym.as_deref())?)
                }
                _ => None,
            };
            let total = match (adv_s2r, adv_r2s) {
                (Some(a), Some(b)) => Some(total_loss(*a, *b, cycle.unwrap_or(0.0), physics, &cfg.loss)?),
                _ => None,
            };
            let body = json!({
                "physics": physics,
                "cycle": cycle,
                "total": total,
                "n_valid": mask.as_ref().map_or(gen.len(), |m| m.iter().filter(|&&v| v).count()),
            })
            .to_string();
            let p = out.join("loss.json");
            write_text(&p, &format!("{body}\n"))?;
            println!("{body}");
            ("loss", inputs, vec![p])
        }
        Command::Synth { count } => {
            let table = materials(&cfg)?;
            let seeds: Vec<u64> = (0..*count).map(|i| cfg.seed.wrapping_add(i)).collect();
            cfg.format = PointFormat::LabeledBin;
            let outputs = seeds
                .par_iter()
                .map(|&seed| {
                    let pc = generate_scene(&cfg.scene, &table, seed);
                    let p = out.join(format!("{}.bin", pc.frame_id));
                    write_pointcloud(&pc, &p, PointFormat::LabeledBin)?;
                    Ok(p)
                })
                .collect::<wxlidar::Result<Vec<_>>>()?;
            for p in &outputs {
                println!("{}", p.display());
            }
            ("synth", vec![], outputs)
        }
        Command::Backproject {
            stack,
            generated,
            cloud,
            format,
        } => {
            set(&mut cfg.format, *format);
            let st = read_stack(stack)?;
            let gen = ImageContainer::read(generated)?.intensity()?;
            let (pc, _) = read_pointcloud(cloud, cfg.format)?;
            let mapped = back_project(&st, &gen, &pc)?;
            let p = out.join(format!("{}_bp.bin", stem(cloud)));
            write_pointcloud(&mapped, &p, cfg.format)?;
            ("backproject", vec![stack.clone(), generated.clone(), cloud.clone()], vec![p])
        }
    };

    let info = RunInfo {
        subcommand: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        inputs,
        outputs,
    };
    write_manifest(out, &cfg, &info)?;
    Ok(())
}

fn paths(jobs: &[Job]) -> Vec<PathBuf> {
    jobs.iter().map(|j| j.path.clone()).collect()
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<wxlidar::Error>() {
            return if e.is_input_error() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
