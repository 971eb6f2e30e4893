use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sphere_stereo::error::Error;
use sphere_stereo::eval::{ablate_step_size, ablation_csv, compute_metrics, DEFAULT_ABLATION_STEPS};
use sphere_stereo::geom::{depth_to_pointcloud, polar_angle_map, EquirectGrid, INVALID};
use sphere_stereo::imageio::{
    load_config, read_floatmap, read_image, write_floatmap, write_image, write_ply, RunConfig,
};
use sphere_stereo::pipeline::{match_pair, MatchOptions};
use sphere_stereo::render::{builtin_scene, load_scene, render_pair, Scene};

#[derive(Parser)]
#[command(
    name = "sphere-stereo",
    about = "Stereo depth estimation for top-bottom 360° equirectangular pairs",
    version
)]
struct Cli {
    /// Worker thread cap (or env SPHERE_STEREO_THREADS); results are identical
    /// for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic stereo pair with ground truth into a directory.
    Render {
        /// Scene file (or a built-in scene name such as "room").
        #[arg(long)]
        scene: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Match a top/bottom pair and write the predicted disparity.
    Match {
        #[arg(long)]
        top: PathBuf,
        #[arg(long)]
        bottom: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        no_sgm: bool,
        #[arg(long)]
        no_subpixel: bool,
        #[arg(long)]
        dump_costvol: Option<PathBuf>,
    },
    /// Compare a predicted disparity map against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Validity mask (PGM, nonzero = valid); defaults to the gt map's mask.
        #[arg(long)]
        gt_valid: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report as a flat key-value file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Export a depth map (optionally colored) as a PLY point cloud.
    Pcl {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        rgb: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        binary: bool,
    },
    /// Step-size sweep over a directory of scene files; emits CSV.
    Ablate {
        #[arg(long)]
        scenes: PathBuf,
        /// Comma-separated step sizes in degrees; fractions like 1/3 allowed.
        #[arg(long)]
        steps: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the per-row polar angles (degrees) for a given height.
    Angles {
        #[arg(long)]
        height: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("SPHERE_STEREO_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Config { .. } => 3,
        Error::Io { .. } => 4,
        Error::Domain(_) | Error::Eval(_) => 5,
    }
}

fn load_cfg(path: &Option<PathBuf>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

fn resolve_scene(spec: &str) -> Result<Scene, Error> {
    if Path::new(spec).exists() {
        load_scene(spec)
    } else if let Some(scene) = builtin_scene(spec) {
        Ok(scene)
    } else {
        Err(Error::io(
            spec,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such scene file or built-in"),
        ))
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Render { scene, out, config } => {
            let cfg = load_cfg(&config)?;
            cfg.validate()?;
            let scene = resolve_scene(&scene)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let pair = render_pair(&scene, &cfg.rig(), cfg.grid())?;
            write_image(&pair.top_rgb, out.join("top.ppm"))?;
            write_image(&pair.bottom_rgb, out.join("bottom.ppm"))?;
            write_floatmap(&pair.top_depth, out.join("depth_gt.pfm"))?;
            // occluded correspondences are invalid in the disparity file
            let mut disp = pair.gt_disparity.clone();
            for (v, &ok) in disp.values.iter_mut().zip(&pair.gt_valid) {
                if !ok {
                    *v = INVALID;
                }
            }
            write_floatmap(&disp, out.join("disp_gt.pfm"))?;
            eprintln!("rendered {}x{} pair into {}", cfg.width, cfg.height, out.display());
            Ok(())
        }
        Command::Match {
            top,
            bottom,
            out,
            config,
            no_sgm,
            no_subpixel,
            dump_costvol,
        } => {
            let cfg = load_cfg(&config)?;
            cfg.validate()?;
            let top_img = read_image(&top)?;
            let bottom_img = read_image(&bottom)?;
            let opts = MatchOptions {
                use_sgm: !no_sgm,
                subpixel: !no_subpixel,
            };
            let start = std::time::Instant::now();
            let (disp, raw_vol) = match_pair(&top_img, &bottom_img, &cfg, opts)?;
            let elapsed = start.elapsed().as_secs_f64();
            write_floatmap(&disp, &out)?;
            if let Some(dump) = dump_costvol {
                std::fs::write(&dump, raw_vol.encode()).map_err(|e| Error::io(&dump, e))?;
            }
            println!("time_s = {elapsed:.3}");
            Ok(())
        }
        Command::Eval {
            pred,
            gt,
            gt_valid,
            config,
            report,
        } => {
            let cfg = load_cfg(&config)?;
            cfg.validate()?;
            let pred_map = read_floatmap(&pred)?;
            let gt_map = read_floatmap(&gt)?;
            let valid: Vec<bool> = match gt_valid {
                Some(path) => {
                    let mask = read_image(&path)?;
                    if mask.grid != gt_map.grid {
                        return Err(Error::domain("validity mask grid mismatch"));
                    }
                    mask.samples.iter().map(|&s| s > 0.0).collect()
                }
                None => gt_map.values.iter().map(|v| v.is_finite()).collect(),
            };
            let rep = compute_metrics(&pred_map, &gt_map, &valid, &cfg.rig(), cfg.crop_fraction)?;
            print!("{}", rep.text_table());
            if let Some(path) = report {
                std::fs::write(&path, rep.key_value()).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Pcl {
            depth,
            rgb,
            out,
            binary,
        } => {
            let depth_map = read_floatmap(&depth)?;
            let color = rgb.map(read_image).transpose()?;
            let points = depth_to_pointcloud(depth_map.grid, &depth_map, color.as_ref())?;
            write_ply(&points, &out, binary)?;
            eprintln!("wrote {} points to {}", points.len(), out.display());
            Ok(())
        }
        Command::Ablate {
            scenes,
            steps,
            config,
            out,
        } => {
            let cfg = load_cfg(&config)?;
            cfg.validate()?;
            let steps = match steps {
                Some(s) => parse_steps(&s)?,
                None => DEFAULT_ABLATION_STEPS.to_vec(),
            };
            let mut scene_list = Vec::new();
            let entries = std::fs::read_dir(&scenes).map_err(|e| Error::io(&scenes, e))?;
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e == "scene"))
                .collect();
            paths.sort();
            for p in paths {
                let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                scene_list.push((name, load_scene(&p)?));
            }
            if scene_list.is_empty() {
                return Err(Error::domain(format!(
                    "no .scene files found in {}",
                    scenes.display()
                )));
            }
            let rows = ablate_step_size(&scene_list, &steps, &cfg)?;
            let csv = ablation_csv(&rows);
            print!("{csv}");
            if let Some(path) = out {
                std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Angles { height } => {
            let grid = EquirectGrid::new(2, height)
                .map_err(|_| Error::domain(format!("height {height} must be at least 2")))?;
            for polar in polar_angle_map(grid) {
                println!("{:.3}", polar.to_degrees());
            }
            Ok(())
        }
    }
}

fn parse_steps(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|tok| {
            let tok = tok.trim();
            let v = if let Some((num, den)) = tok.split_once('/') {
                let n: f64 = num.trim().parse().map_err(|_| bad_step(tok))?;
                let d: f64 = den.trim().parse().map_err(|_| bad_step(tok))?;
                n / d
            } else {
                tok.parse().map_err(|_| bad_step(tok))?
            };
            if !(v.is_finite() && v > 0.0) {
                return Err(bad_step(tok));
            }
            Ok(v)
        })
        .collect()
}

fn bad_step(tok: &str) -> Error {
    Error::config("steps", format!("bad step '{tok}'"))
}
