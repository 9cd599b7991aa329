use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vessel_fusion::commands::{cmd_dtw, cmd_evaluate, cmd_fuse, cmd_simulate, timing_path};
use vessel_fusion::config::EngineConfig;
use vessel_fusion::metrics::{EvalParams, Scores};
use vessel_fusion::simulator::{scenes, Scenario};
use vessel_fusion::{Error, Result};

#[derive(Parser)]
#[command(name = "vfuse", version, about = "AIS and video vessel trajectory fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: AIS CSV, detection JSON lines, ground-truth CSV and an engine config.
    Simulate {
        /// Scenario TOML file.
        #[arg(required_unless_present = "preset", conflicts_with = "preset")]
        scenario: Option<PathBuf>,
        /// Built-in scenario instead of a file.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(scenes::NAMES))]
        preset: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Replay AIS and detections one second at a time and write fused annotations.
    Fuse {
        ais: PathBuf,
        detections: PathBuf,
        /// Engine TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Annotation JSON-lines output; per-tick timings go to `<stem>.timing.csv` beside it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
        /// Disable occlusion handling (plain tracking-by-detection).
        #[arg(long)]
        no_anti_occlusion: bool,
    },
    /// Score annotation files against ground truth.
    Evaluate {
        /// Alternating annotation and ground-truth files: ANN GT [ANN GT ...].
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        /// Report path; `.json` and `.csv` are written.
        #[arg(long)]
        out: PathBuf,
        /// Engine TOML, used for the image size that normalises MOFP.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        #[arg(long)]
        force: bool,
    },
    /// Direction-weighted FastDTW between two point lists (CSV `x,y` or `t,x,y`).
    Dtw {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1)]
        radius: usize,
        /// Divide the path cost by the path length.
        #[arg(long)]
        normalize: bool,
        /// Also run exact DTW and validate the warp path.
        #[arg(long)]
        oracle_check: bool,
        /// Write the warp path as CSV `i,j`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p),
        None => Ok(EngineConfig::default()),
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{:.2}", 100.0 * x))
}

fn print_scores(name: &str, s: &Scores) {
    println!(
        "{name}: MOFA {} IDP {} IDR {} IDF1 {} MOFP {}",
        pct(s.mofa),
        pct(s.idp),
        pct(s.idr),
        pct(s.idf1),
        s.mofp.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
    );
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            preset,
            out,
            seed,
            force,
        } => {
            let scenario = match (scenario, preset) {
                (Some(path), _) => Scenario::load(&path)?,
                (None, Some(name)) => scenes::by_name(&name).ok_or(Error::InvalidArgument(name))?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            let paths = cmd_simulate(&scenario, &out, seed, force)?;
            for p in [&paths.ais, &paths.detections, &paths.ground_truth, &paths.config] {
                println!("wrote {}", p.display());
            }
        }
        Command::Fuse {
            ais,
            detections,
            config,
            out,
            seed,
            force,
            no_anti_occlusion,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if no_anti_occlusion {
                cfg.anti_occlusion = false;
            }
            let run = cmd_fuse(&ais, &detections, &cfg, &out, force)?;
            let (mean, std) = run.timing();
            println!("wrote {} ({} annotations)", out.display(), run.annotations.len());
            println!("wrote {}", timing_path(&out).display());
            println!(
                "ticks {}  time per tick {:.3} ± {:.3} ms",
                run.tick_times.len(),
                mean * 1e3,
                std * 1e3
            );
        }
        Command::Evaluate {
            files,
            out,
            config,
            iou_threshold,
            force,
        } => {
            if files.len() % 2 != 0 {
                return Err(Error::InvalidArgument(
                    "evaluate takes annotation and ground-truth files in pairs".into(),
                ));
            }
            let cfg = load_config(config.as_deref())?;
            let params = EvalParams {
                iou_threshold,
                normalizer: cfg.camera_model()?.diagonal(),
            };
            let clips: Vec<(PathBuf, PathBuf)> = files.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect();
            let report = cmd_evaluate(&clips, params, &out, force)?;
            for c in &report.clips {
                print_scores(&c.clip, &c.scores);
            }
            if report.clips.len() > 1 {
                print_scores("aggregate", &report.aggregate.scores);
            }
        }
        Command::Dtw {
            a,
            b,
            radius,
            normalize,
            oracle_check,
            out,
            force,
        } => {
            let r = cmd_dtw(&a, &b, radius, normalize, oracle_check)?;
            println!("distance {}", r.distance);
            println!("phi {}", r.phi);
            println!("score {}", r.score);
            println!("path_len {}", r.path.len());
            if let Some(exact) = r.exact {
                println!("exact {exact}");
            }
            if let Some(path) = out {
                if path.exists() && !force {
                    return Err(Error::Exists(path.display().to_string()));
                }
                let mut text = String::from("i,j\n");
                for (i, j) in &r.path.pairs {
                    text += &format!("{i},{j}\n");
                }
                std::fs::write(&path, text)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
