//! How long to keep lost tracklets: the IoU-only baseline against
//! learned re-identification on a scene with ~100-frame disappearances.

use crowdtrack::evalio::MetricsReport;
use crowdtrack::pipeline::{build_corpus, run_suite, train_models, CorpusConfig};
use crowdtrack::tracker::{Mode, TrackerConfig};

fn main() -> crowdtrack::Result<()> {
    let corpus = build_corpus(&CorpusConfig::default())?;
    let trained = train_models(&corpus, TrackerConfig::default().refind_thresh, 0)?;
    println!("{}", MetricsReport::TSV_HEADER);
    for mode in [Mode::BaselineKf, Mode::InteractionRefind] {
        for age in [30, 60, 120] {
            let cfg = TrackerConfig {
                mode,
                max_lost_age: age,
                ..TrackerConfig::default()
            };
            let r = run_suite(&["occlusion_120"], &[1, 2, 3, 4, 5], &cfg, trained.models())?;
            println!("{}", r.tsv_row(&format!("{mode}/age={age}")));
        }
    }
    Ok(())
}
