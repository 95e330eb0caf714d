//! The three tracker modes side by side on crowded and occluded scenes.
//!
//! Trains both modules first, so run with `--release`.

use crowdtrack::evalio::MetricsReport;
use crowdtrack::pipeline::{build_corpus, run_suite, train_models, CorpusConfig};
use crowdtrack::tracker::{Mode, TrackerConfig};

fn main() -> crowdtrack::Result<()> {
    let corpus = build_corpus(&CorpusConfig::default())?;
    let trained = train_models(&corpus, TrackerConfig::default().refind_thresh, 0)?;
    let seeds = [1, 2, 3, 4, 5];
    println!("{}", MetricsReport::TSV_HEADER);
    for scenes in [
        &["dense_crowd_20"][..],
        &["occlusion_30"],
        &["dense_crowd_20", "occlusion_30"],
    ] {
        for mode in [Mode::BaselineKf, Mode::Interaction, Mode::InteractionRefind] {
            let cfg = TrackerConfig {
                mode,
                ..TrackerConfig::default()
            };
            let r = run_suite(scenes, &seeds, &cfg, trained.models())?;
            println!("{}", r.tsv_row(&format!("{}/{mode}", scenes.join("+"))));
        }
    }
    Ok(())
}
