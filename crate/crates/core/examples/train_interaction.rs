//! Train the interaction module on simulated crowds and compare its
//! one-step predictions with a Kalman filter on unseen scenes.
//!
//! Run with `--release`; training takes a few seconds there.

use crowdtrack::datagen::{scenario, simulate};
use crowdtrack::interaction::{InteractionConfig, InteractionModel};
use crowdtrack::pipeline::{build_corpus, default_interaction_training, CorpusConfig};
use crowdtrack::training::{build_intr_samples, intr_mean_iou, kf_one_step_iou, train_interaction};

fn main() -> crowdtrack::Result<()> {
    let corpus = build_corpus(&CorpusConfig::default())?;
    println!(
        "{} training frames, {} validation frames",
        corpus.intr_train.len(),
        corpus.intr_val.len()
    );
    let init = InteractionModel::new(InteractionConfig::default(), 0)?;
    let run = train_interaction(
        &init,
        corpus.dims,
        &corpus.intr_train,
        &corpus.intr_val,
        &default_interaction_training(0),
    )?;
    if let Some(gc) = &run.grad_check {
        println!(
            "gradient check: max relative error {:.2e} over {} entries",
            gc.max_rel_error, gc.checked
        );
    }
    print!("{}", run.curve_tsv());
    let model = InteractionModel::from_params(run.params)?;

    println!("seed\tinteraction\tkalman");
    for seed in 1..=5 {
        let sim = simulate(&scenario("dense_crowd_20", seed)?)?;
        let gt = sim.trajectories();
        let ours = intr_mean_iou(&model, &build_intr_samples(&gt), sim.dims)?;
        println!("{seed}\t{ours:.4}\t{:.4}", kf_one_step_iou(&gt)?);
    }
    Ok(())
}
