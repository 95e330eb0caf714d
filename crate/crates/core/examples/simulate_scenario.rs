//! Simulate a named scenario and write it as MOTChallenge files.
//!
//! `cargo run --example simulate_scenario -- occlusion_120 3`

use crowdtrack::datagen::{scenario, simulate, SCENARIOS};
use crowdtrack::evalio::write_mot;

fn main() -> crowdtrack::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "dense_crowd_20".to_string());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    if !SCENARIOS.contains(&name.as_str()) {
        eprintln!("known scenarios: {}", SCENARIOS.join(", "));
        std::process::exit(2);
    }
    let sim = simulate(&scenario(&name, seed)?)?;

    let visible: usize = sim.counts.iter().map(|c| c.visible).sum();
    let missed: usize = sim.counts.iter().map(|c| c.fn_draws).sum();
    let fps: usize = sim.counts.iter().map(|c| c.fp_draws).sum();
    println!(
        "{name} (seed {seed}): {} frames, {} identities",
        sim.frames,
        sim.trajectories().len()
    );
    println!(
        "  gt boxes {}, detectable {visible}, dropped {missed}, false positives {fps}",
        sim.gt.len()
    );
    println!("  close encounters: {}", sim.repulsion_events);
    let mut hidden: Vec<_> = sim.longest_suppression().into_iter().filter(|(_, n)| *n > 0).collect();
    hidden.sort_by_key(|(_, n)| std::cmp::Reverse(*n));
    for (id, n) in hidden.iter().take(5) {
        println!("  id {id} hidden for {n} consecutive frames");
    }

    let dir = std::env::temp_dir().join(format!("crowdtrack-{name}-{seed}"));
    std::fs::create_dir_all(&dir).map_err(|e| crowdtrack::Error::io(&dir, e))?;
    write_mot(dir.join("gt.txt"), &sim.gt_rows())?;
    write_mot(dir.join("det.txt"), &sim.det_rows())?;
    println!("wrote {}", dir.display());
    Ok(())
}
