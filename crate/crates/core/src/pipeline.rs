//! End-to-end helpers: synthetic training corpora, default model training,
//! and scoring a tracker on simulated scenes.

use crate::datagen::{scenario, simulate, SimOutput};
use crate::error::{Error, Result};
use crate::evalio::{evaluate, MetricsReport, MotRow};
use crate::interaction::{FrameDims, InteractionConfig, InteractionModel};
use crate::nnet::Params;
use crate::refind::{RefindConfig, RefindModel};
use crate::tracker::{run_sequence, Mode, Models, TrackRow, TrackerConfig};
use crate::training::{
    build_corr_samples, build_intr_samples, split, train_interaction, train_refind, CorrSample, CorrSampling,
    IntrSample, OptimizerKind, TrainConfig, TrainOutcome, Trajectories,
};

/// Training scenes use seeds from here upward so they never coincide with
/// the evaluation seeds `1..=5`.
pub const TRAIN_SEED_BASE: u64 = 1000;
/// Validation scenes use seeds from here upward.
pub const VAL_SEED_BASE: u64 = 5000;

/// Scenarios whose ground truth feeds the interaction corpus.
pub const INTR_SCENARIOS: &[&str] = &["dense_crowd_20", "occlusion_30", "crowd_vis025", "crossing_pair"];
/// Scenarios whose ground truth feeds the correlation corpus.
pub const CORR_SCENARIOS: &[&str] = &["occlusion_30", "occlusion_120", "crossing_pair", "clean"];

#[derive(Clone, Debug)]
pub struct Corpus {
    pub dims: FrameDims,
    pub intr_train: Vec<IntrSample>,
    pub intr_val: Vec<IntrSample>,
    pub corr_train: Vec<CorrSample>,
    pub corr_val: Vec<CorrSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusConfig {
    /// Scenes per scenario on the training side; validation gets half, at least one.
    pub scenes_per_scenario: usize,
    pub sampling: CorrSampling,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            scenes_per_scenario: 6,
            sampling: CorrSampling {
                positives: 400,
                ..CorrSampling::default()
            },
            seed: 0,
        }
    }
}

/// Simulates `count` scenes of each training scenario starting at `base + seed * 100`.
pub fn simulate_scenes(names: &[&str], count: usize, base: u64, seed: u64) -> Result<Vec<SimOutput>> {
    let mut out = Vec::new();
    for name in names {
        for k in 0..count as u64 {
            out.push(simulate(&scenario(name, base + seed * 100 + k)?)?);
        }
    }
    Ok(out)
}

fn intr_samples(scenes: &[SimOutput]) -> Vec<IntrSample> {
    scenes
        .iter()
        .flat_map(|s| build_intr_samples(&s.trajectories()))
        .collect()
}

fn corr_samples(scenes: &[SimOutput], sampling: &CorrSampling, salt: u64) -> Result<Vec<CorrSample>> {
    let mut out = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        let cfg = CorrSampling {
            seed: sampling.seed ^ salt.wrapping_mul(0x9E37_79B9) ^ i as u64,
            ..sampling.clone()
        };
        out.extend(build_corr_samples(&s.trajectories(), &cfg)?);
    }
    Ok(out)
}

fn common_dims(scenes: &[&[SimOutput]]) -> Result<FrameDims> {
    let mut all = scenes.iter().flat_map(|s| s.iter());
    let dims = all
        .next()
        .map(|s| s.dims)
        .ok_or_else(|| Error::Data("no training scenes".into()))?;
    if all.any(|s| s.dims != dims) {
        return Err(Error::Data("training scenes disagree on frame size".into()));
    }
    Ok(dims)
}

/// Builds training and validation samples from disjoint simulated scenes.
pub fn build_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    let n = cfg.scenes_per_scenario;
    let val_n = (n / 2).max(1);
    let intr_train = simulate_scenes(INTR_SCENARIOS, n, TRAIN_SEED_BASE, cfg.seed)?;
    let intr_val = simulate_scenes(INTR_SCENARIOS, val_n, VAL_SEED_BASE, cfg.seed)?;
    let corr_train = simulate_scenes(CORR_SCENARIOS, n, TRAIN_SEED_BASE, cfg.seed)?;
    let corr_val = simulate_scenes(CORR_SCENARIOS, val_n, VAL_SEED_BASE, cfg.seed)?;
    Ok(Corpus {
        dims: common_dims(&[&intr_train, &intr_val, &corr_train, &corr_val])?,
        intr_train: intr_samples(&intr_train),
        intr_val: intr_samples(&intr_val),
        corr_train: corr_samples(&corr_train, &cfg.sampling, 1)?,
        corr_val: corr_samples(&corr_val, &cfg.sampling, 2)?,
    })
}

#[derive(Clone, Debug)]
pub struct TrainedModels {
    pub interaction: InteractionModel,
    pub refind: RefindModel,
    pub interaction_run: TrainOutcome,
    pub refind_run: TrainOutcome,
}

impl TrainedModels {
    pub fn models(&self) -> Models<'_> {
        Models {
            interaction: Some(&self.interaction),
            refind: Some(&self.refind),
        }
    }
}

pub fn default_interaction_training(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 40,
        batch_size: 8,
        patience: 6,
        seed,
        ..TrainConfig::default()
    }
}

pub fn default_refind_training(seed: u64) -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Adam,
        lr: 3e-3,
        epochs: 36,
        batch_size: 32,
        patience: 10,
        decay_every: 12,
        lr_decay: 0.3,
        seed,
        ..TrainConfig::default()
    }
}

/// Trains both modules on `corpus` with the default settings.
pub fn train_models(corpus: &Corpus, refind_thresh: f64, seed: u64) -> Result<TrainedModels> {
    let intr0 = InteractionModel::new(InteractionConfig::default(), seed)?;
    let interaction_run = train_interaction(
        &intr0,
        corpus.dims,
        &corpus.intr_train,
        &corpus.intr_val,
        &default_interaction_training(seed),
    )?;
    let interaction = InteractionModel::from_params(interaction_run.params.clone())?;
    let ref0 = RefindModel::new(RefindConfig::default(), seed)?;
    let refind_run = train_refind(
        &ref0,
        corpus.dims,
        &corpus.corr_train,
        &corpus.corr_val,
        refind_thresh,
        &default_refind_training(seed),
    )?;
    let refind = RefindModel::from_params(refind_run.params.clone())?;
    Ok(TrainedModels {
        interaction,
        refind,
        interaction_run,
        refind_run,
    })
}

/// Tracker settings for a simulated scene.
pub fn scene_config(sim: &SimOutput, mode: Mode) -> TrackerConfig {
    TrackerConfig {
        mode,
        dims: sim.dims,
        ..TrackerConfig::default()
    }
}

pub fn track_rows_to_mot(rows: &[TrackRow]) -> Vec<MotRow> {
    rows.iter().map(MotRow::from_track).collect()
}

/// Runs the tracker over the scene's detections and scores it against its ground truth.
pub fn run_scene(sim: &SimOutput, cfg: &TrackerConfig, models: Models<'_>) -> Result<MetricsReport> {
    let rows = run_sequence(&sim.detections(), cfg, models)?;
    Ok(evaluate(&sim.gt_rows(), &track_rows_to_mot(&rows)))
}

/// Sums reports over `scenarios x seeds` for one tracker configuration.
pub fn run_suite(scenarios: &[&str], seeds: &[u64], cfg: &TrackerConfig, models: Models<'_>) -> Result<MetricsReport> {
    let mut total: Option<MetricsReport> = None;
    for name in scenarios {
        for &seed in seeds {
            let sim = simulate(&scenario(name, seed)?)?;
            let c = TrackerConfig {
                dims: sim.dims,
                ..cfg.clone()
            };
            let r = run_scene(&sim, &c, models)?;
            total = Some(match total {
                Some(t) => t.merge(&r),
                None => r,
            });
        }
    }
    total.ok_or_else(|| Error::Data("empty suite".into()))
}

/// Interaction samples from several ground-truth sequences, split into
/// (train, held-out) with a seeded shuffle.
pub fn intr_split(gts: &[Trajectories], held_out: f64, seed: u64) -> (Vec<IntrSample>, Vec<IntrSample>) {
    let all: Vec<IntrSample> = gts.iter().flat_map(build_intr_samples).collect();
    split(&all, held_out, seed)
}

/// Correlation samples from several ground-truth sequences, split like [`intr_split`].
pub fn corr_split(
    gts: &[Trajectories],
    sampling: &CorrSampling,
    held_out: f64,
    seed: u64,
) -> Result<(Vec<CorrSample>, Vec<CorrSample>)> {
    let mut all = Vec::new();
    for (i, gt) in gts.iter().enumerate() {
        let cfg = CorrSampling {
            seed: sampling.seed ^ i as u64,
            ..sampling.clone()
        };
        all.extend(build_corr_samples(gt, &cfg)?);
    }
    Ok(split(&all, held_out, seed))
}

/// Models read from checkpoint files, sorted by their `module` tag.
#[derive(Clone, Debug, Default)]
pub struct LoadedModels {
    pub interaction: Option<InteractionModel>,
    pub refind: Option<RefindModel>,
}

impl LoadedModels {
    pub fn load<P: AsRef<std::path::Path>>(paths: &[P]) -> Result<Self> {
        let mut out = LoadedModels::default();
        for p in paths {
            let params = Params::load(p)?;
            match params.meta_value("module") {
                Some("interaction") => out.interaction = Some(InteractionModel::from_params(params)?),
                Some("refind") => out.refind = Some(RefindModel::from_params(params)?),
                other => {
                    return Err(Error::Config(format!(
                        "{}: unknown module {:?}",
                        p.as_ref().display(),
                        other.unwrap_or("<none>")
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn models(&self) -> Models<'_> {
        Models {
            interaction: self.interaction.as_ref(),
            refind: self.refind.as_ref(),
        }
    }
}
