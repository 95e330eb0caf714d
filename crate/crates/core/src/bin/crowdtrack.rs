use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crowdtrack::datagen::{scenario, simulate, SCENARIOS};
use crowdtrack::evalio::config::{load_tracker_config, set_tracker_param};
use crowdtrack::evalio::{crowd_mota, evaluate, parse_mot, tracker_config_string, write_mot, CrowdMota, MetricsReport};
use crowdtrack::interaction::{InteractionConfig, InteractionModel};
use crowdtrack::pipeline::{
    corr_split, default_interaction_training, default_refind_training, intr_split, track_rows_to_mot, LoadedModels,
};
use crowdtrack::refind::{RefindConfig, RefindModel};
use crowdtrack::tracker::{run_sequence, Mode, TrackerConfig};
use crowdtrack::training::{train_interaction, train_refind, trajectories_from_rows, CorrSampling, TrainOutcome};
use crowdtrack::{Detection, Error, Result};

#[derive(Parser)]
#[command(name = "crowdtrack", version, about = "Multi-object tracking in crowds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a MOT detection file.
    Track {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Model checkpoint; repeat for the interaction and refind models.
        #[arg(long)]
        weights: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one learned module on MOT ground-truth files.
    Train {
        #[arg(long, value_enum)]
        module: Module,
        /// Ground-truth file; repeat to train on several sequences.
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        /// Supplies the frame size (`frame_width`, `frame_height`) and the refind threshold.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        /// Positive correlation pairs drawn per sequence (refind only).
        #[arg(long, default_value_t = 400)]
        positives: usize,
        #[arg(long, default_value_t = 0.2)]
        held_out: f64,
        #[arg(long)]
        out: PathBuf,
        /// Loss curve destination; defaults to `<out>.curve.tsv`.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Write a synthetic scenario as gt.txt, det.txt and config.txt.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a hypothesis file against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        /// Also report MOTA on ids hidden (visibility < 0.25) for at least this many frames.
        #[arg(long)]
        crowd_min: Option<u32>,
        #[arg(long, default_value = "all")]
        name: String,
    },
    /// Track and evaluate once per value of one tracker setting.
    Sweep {
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        weights: Vec<PathBuf>,
        /// Detections and ground truth of one sequence.
        #[arg(long, requires = "gt", conflicts_with = "scenario")]
        dets: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Or a synthetic scenario, summed over `--seeds`.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Module {
    Interaction,
    Refind,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn tracker_config(path: Option<&Path>) -> Result<TrackerConfig> {
    match path {
        Some(p) => load_tracker_config(p),
        None => Ok(TrackerConfig::default()),
    }
}

fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    Ok(parse_mot(path)?.iter().map(|r| r.detection()).collect())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Track {
            dets,
            config,
            weights,
            out,
        } => {
            let cfg = tracker_config(config.as_deref())?;
            let models = LoadedModels::load(&weights)?;
            let rows = run_sequence(&read_detections(&dets)?, &cfg, models.models())?;
            write_mot(&out, &track_rows_to_mot(&rows))?;
            println!("{} rows written to {}", rows.len(), out.display());
            Ok(())
        }
        Command::Train {
            module,
            gt,
            config,
            seed,
            epochs,
            positives,
            held_out,
            out,
            curve,
        } => {
            let cfg = tracker_config(config.as_deref())?;
            let gts = gt
                .iter()
                .map(|p| trajectories_from_rows(&parse_mot(p)?))
                .collect::<Result<Vec<_>>>()?;
            let outcome: TrainOutcome = match module {
                Module::Interaction => {
                    let mut tc = default_interaction_training(seed);
                    tc.epochs = epochs.unwrap_or(tc.epochs);
                    tc.rescue_path = Some(out.with_extension("rescue"));
                    let (train, val) = intr_split(&gts, held_out, seed);
                    let model = InteractionModel::new(InteractionConfig::default(), seed)?;
                    train_interaction(&model, cfg.dims, &train, &val, &tc)?
                }
                Module::Refind => {
                    let mut tc = default_refind_training(seed);
                    tc.epochs = epochs.unwrap_or(tc.epochs);
                    tc.rescue_path = Some(out.with_extension("rescue"));
                    let sampling = CorrSampling {
                        positives,
                        seed,
                        ..CorrSampling::default()
                    };
                    let (train, val) = corr_split(&gts, &sampling, held_out, seed)?;
                    let model = RefindModel::new(RefindConfig::default(), seed)?;
                    train_refind(&model, cfg.dims, &train, &val, cfg.refind_thresh, &tc)?
                }
            };
            outcome.params.save(&out)?;
            let curve = curve.unwrap_or_else(|| PathBuf::from(format!("{}.curve.tsv", out.display())));
            write_text(&curve, &outcome.curve_tsv())?;
            match outcome.best_epoch.checked_sub(1).and_then(|i| outcome.curve.get(i)) {
                Some(best) => println!(
                    "best epoch {}: val_loss {:.6} val_metric {:.6}",
                    best.epoch, best.val_loss, best.val_metric
                ),
                None => println!("no epoch improved on the initial parameters"),
            }
            println!("weights: {}\ncurve: {}", out.display(), curve.display());
            Ok(())
        }
        Command::Simulate {
            scenario: name,
            seed,
            out,
        } => {
            if !SCENARIOS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "unknown scenario `{name}` (known: {})",
                    SCENARIOS.join(", ")
                )));
            }
            let sim = simulate(&scenario(&name, seed)?)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_mot(out.join("gt.txt"), &sim.gt_rows())?;
            write_mot(out.join("det.txt"), &sim.det_rows())?;
            // the learned modes need checkpoints, so the written config starts from the baseline
            let cfg = TrackerConfig {
                dims: sim.dims,
                mode: Mode::BaselineKf,
                ..TrackerConfig::default()
            };
            write_text(
                &out.join("config.txt"),
                &format!(
                    "# scenario {name}, seed {seed}; set mode and pass --weights for the learned modes\n{}",
                    tracker_config_string(&cfg)
                ),
            )?;
            println!(
                "{name}: {} frames, {} gt rows, {} detections -> {}",
                sim.frames,
                sim.gt.len(),
                sim.dets.len(),
                out.display()
            );
            Ok(())
        }
        Command::Evaluate {
            gt,
            hyp,
            crowd_min,
            name,
        } => {
            let gt = parse_mot(&gt)?;
            let hyp = parse_mot(&hyp)?;
            println!("{}", MetricsReport::TSV_HEADER);
            println!("{}", evaluate(&gt, &hyp).tsv_row(&name));
            if let Some(k) = crowd_min {
                match crowd_mota(&gt, &hyp, k)? {
                    CrowdMota::EmptyStratum => println!("crowd_mota\tempty"),
                    CrowdMota::Stratum { ids, report } => {
                        println!("crowd_mota\t{:.6}\tids={}", report.mota(), ids.len())
                    }
                }
            }
            Ok(())
        }
        Command::Sweep {
            param,
            values,
            config,
            weights,
            dets,
            gt,
            scenario: scen,
            seeds,
        } => {
            let base = tracker_config(config.as_deref())?;
            let models = LoadedModels::load(&weights)?;
            let sequences = match (dets, gt, scen) {
                (Some(d), Some(g), None) => vec![(read_detections(&d)?, parse_mot(&g)?, base.dims)],
                (None, None, Some(name)) => seeds
                    .iter()
                    .map(|&s| {
                        let sim = simulate(&scenario(&name, s)?)?;
                        Ok((sim.detections(), sim.gt_rows(), sim.dims))
                    })
                    .collect::<Result<Vec<_>>>()?,
                _ => {
                    return Err(Error::Config(
                        "sweep needs either --dets with --gt, or --scenario".into(),
                    ))
                }
            };
            println!("{}", MetricsReport::TSV_HEADER);
            for v in &values {
                let mut cfg = base.clone();
                set_tracker_param(&mut cfg, &param, v)?;
                cfg.validate()?;
                let mut total: Option<MetricsReport> = None;
                for (dets, gt, dims) in &sequences {
                    let c = TrackerConfig {
                        dims: *dims,
                        ..cfg.clone()
                    };
                    let rows = run_sequence(dets, &c, models.models())?;
                    let r = evaluate(gt, &track_rows_to_mot(&rows));
                    total = Some(match total {
                        Some(t) => t.merge(&r),
                        None => r,
                    });
                }
                if let Some(t) = total {
                    println!("{}", t.tsv_row(&format!("{param}={v}")));
                }
            }
            Ok(())
        }
    }
}
