//! Train the refind correlation model and report held-out accuracy at
//! the tracker's acceptance threshold, split by occlusion length.

use std::collections::BTreeMap;

use crowdtrack::pipeline::{build_corpus, default_refind_training, CorpusConfig};
use crowdtrack::refind::{RefindConfig, RefindModel};
use crowdtrack::training::{corr_accuracy, corr_scores, train_refind};

const THRESHOLD: f64 = 0.9;

fn main() -> crowdtrack::Result<()> {
    let corpus = build_corpus(&CorpusConfig::default())?;
    let init = RefindModel::new(RefindConfig::default(), 0)?;
    let run = train_refind(
        &init,
        corpus.dims,
        &corpus.corr_train,
        &corpus.corr_val,
        THRESHOLD,
        &default_refind_training(0),
    )?;
    print!("{}", run.curve_tsv());
    let model = RefindModel::from_params(run.params)?;
    let acc = corr_accuracy(&model, &corpus.corr_val, corpus.dims, THRESHOLD)?;
    println!("held-out accuracy at {THRESHOLD}: {acc:.4}");

    let scores = corr_scores(&model, &corpus.corr_val, corpus.dims)?;
    let mut by_gap: BTreeMap<(u32, bool), (usize, usize)> = BTreeMap::new();
    for (s, score) in corpus.corr_val.iter().zip(scores) {
        let gap = s.det_frame - s.window.last().map_or(s.det_frame, |w| w.0);
        let positive = s.label > 0.5;
        let e = by_gap.entry((gap / 30 * 30, positive)).or_default();
        e.0 += 1;
        e.1 += usize::from((score >= THRESHOLD) == positive);
    }
    println!("gap\tlabel\tcorrect");
    for ((gap, positive), (n, ok)) in by_gap {
        println!(
            "{gap}-{}\t{}\t{ok}/{n}",
            gap + 29,
            if positive { "same" } else { "other" }
        );
    }
    Ok(())
}
