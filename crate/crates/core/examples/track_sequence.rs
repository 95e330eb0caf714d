//! Track a simulated crowd with the Kalman baseline and score the result.

use crowdtrack::datagen::{scenario, simulate};
use crowdtrack::evalio::{evaluate, MetricsReport};
use crowdtrack::pipeline::{scene_config, track_rows_to_mot};
use crowdtrack::tracker::{Mode, Models, Tracker};

fn main() -> crowdtrack::Result<()> {
    let sim = simulate(&scenario("dense_crowd_20", 1)?)?;
    let cfg = scene_config(&sim, Mode::BaselineKf);
    let mut tracker = Tracker::new(cfg, Models::default())?;

    let dets = sim.detections();
    let mut rows = Vec::new();
    let mut stage_totals = [0usize; 4];
    for frame in 1..=sim.frames {
        let now: Vec<_> = dets.iter().filter(|d| d.frame == frame).copied().collect();
        let out = tracker.step(frame, &now)?;
        stage_totals[0] += out.counts.first;
        stage_totals[1] += out.counts.second;
        stage_totals[2] += out.counts.spawned;
        stage_totals[3] += out.counts.reaped;
        rows.extend(out.rows);
    }
    println!(
        "matches: {} high-score, {} low-score; {} tracks started, {} dropped",
        stage_totals[0], stage_totals[1], stage_totals[2], stage_totals[3]
    );

    let report = evaluate(&sim.gt_rows(), &track_rows_to_mot(&rows));
    println!("{}\n{}", MetricsReport::TSV_HEADER, report.tsv_row("dense_crowd_20"));
    Ok(())
}
