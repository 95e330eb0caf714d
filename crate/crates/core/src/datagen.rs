//! Seeded crowd simulator.
//!
//! Agents walk toward goal points with a social-force update (goal
//! attraction plus exponential repulsion from neighbours), one explicit
//! Euler step per frame. Boxes hidden behind occluder rectangles or, when
//! enabled, behind agents closer to the camera lose visibility; boxes below
//! a quarter visible produce no detection. Visible boxes are detected with
//! Gaussian noise, random misses and random false positives.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::evalio::mot::MotRow;
use crate::geometry::{BBox, Detection, MIN_EXTENT};
use crate::interaction::FrameDims;

/// Boxes less visible than this are never detected.
pub const MIN_DETECTABLE_VISIBILITY: f64 = 0.25;
const VIS_GRID: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct Occluder {
    pub rect: BBox,
    /// Active for `start..=end`.
    pub start: u32,
    pub end: u32,
}

impl Occluder {
    pub fn active(&self, frame: u32) -> bool {
        (self.start..=self.end).contains(&frame)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    /// Frames to stand still after arriving.
    pub dwell: u32,
}

/// A hand-placed agent. It holds its last waypoint when the list runs out.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedAgent {
    pub start: (f64, f64),
    pub waypoints: Vec<Waypoint>,
    pub speed: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub name: String,
    pub dims: FrameDims,
    pub frames: u32,
    /// Randomly placed agents that wander between random goals.
    pub agents: usize,
    pub scripted: Vec<ScriptedAgent>,
    pub speed_range: (f64, f64),
    pub height_range: (f64, f64),
    /// Box width over height.
    pub aspect: f64,
    /// Random agents start and pick goals inside this region (`None`: the whole frame).
    pub region: Option<BBox>,
    /// Random agents rest this many frames (uniform) at each goal.
    pub dwell_range: (u32, u32),
    /// Relaxation time toward the desired velocity, in frames.
    pub tau: f64,
    pub repulsion_strength: f64,
    pub repulsion_radius: f64,
    pub occluders: Vec<Occluder>,
    /// Agents hide agents behind them (larger bottom edge is in front).
    pub agent_occlusion: bool,
    /// Standard deviation of centre noise in pixels.
    pub pos_noise: f64,
    /// Standard deviation of relative size noise.
    pub size_noise: f64,
    /// Frame-to-frame correlation of each agent's detection error (AR(1)
    /// coefficient in `[0, 1)`); `0` draws independent noise every frame.
    pub noise_corr: f64,
    pub fn_rate: f64,
    /// Probability of one false positive per frame.
    pub fp_rate: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            dims: FrameDims::new(1280.0, 720.0),
            frames: 200,
            agents: 0,
            scripted: Vec::new(),
            speed_range: (1.5, 3.5),
            height_range: (70.0, 110.0),
            aspect: 0.4,
            region: None,
            dwell_range: (0, 0),
            tau: 8.0,
            repulsion_strength: 1.0,
            repulsion_radius: 30.0,
            occluders: Vec::new(),
            agent_occlusion: false,
            pos_noise: 0.0,
            size_noise: 0.0,
            noise_corr: 0.0,
            fn_rate: 0.0,
            fp_rate: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("fn_rate", self.fn_rate), ("fp_rate", self.fp_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{k} = {v} is outside [0, 1]")));
            }
        }
        if !(self.dims.width > 0.0 && self.dims.height > 0.0) {
            return Err(Error::Config("frame dims must be positive".into()));
        }
        if self.speed_range.0 > self.speed_range.1 || self.height_range.0 > self.height_range.1 {
            return Err(Error::Config("empty speed or height range".into()));
        }
        if self.height_range.1 >= self.dims.height || self.height_range.1 * self.aspect >= self.dims.width {
            return Err(Error::Config("agents do not fit in the frame".into()));
        }
        if !(self.tau > 0.0 && self.aspect > 0.0 && self.pos_noise >= 0.0 && self.size_noise >= 0.0)
            || !(0.0..1.0).contains(&self.noise_corr)
        {
            return Err(Error::Config(
                "tau and aspect must be positive, noise nonnegative, noise_corr in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtBox {
    pub frame: u32,
    pub id: u64,
    pub bbox: BBox,
    pub visibility: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimDetection {
    pub det: Detection,
    /// Ground-truth id, `None` for false positives.
    pub source: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrameCounts {
    pub visible: usize,
    pub fn_draws: usize,
    pub fp_draws: usize,
    pub detections: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub name: String,
    pub dims: FrameDims,
    pub frames: u32,
    /// Sorted by `(frame, id)`.
    pub gt: Vec<GtBox>,
    /// Sorted by frame.
    pub dets: Vec<SimDetection>,
    /// Indexed by `frame - 1`.
    pub counts: Vec<FrameCounts>,
    /// Agent pairs closer than the repulsion radius, summed over frames.
    pub repulsion_events: usize,
}

impl SimOutput {
    pub fn detections(&self) -> Vec<Detection> {
        self.dets.iter().map(|d| d.det).collect()
    }

    /// Per-id boxes keyed by frame.
    pub fn trajectories(&self) -> BTreeMap<u64, BTreeMap<u32, BBox>> {
        let mut out: BTreeMap<u64, BTreeMap<u32, BBox>> = BTreeMap::new();
        for g in &self.gt {
            out.entry(g.id).or_default().insert(g.frame, g.bbox);
        }
        out
    }

    /// Detection boxes per true identity, false positives dropped.
    pub fn observed_trajectories(&self) -> BTreeMap<u64, BTreeMap<u32, BBox>> {
        let mut out: BTreeMap<u64, BTreeMap<u32, BBox>> = BTreeMap::new();
        for d in &self.dets {
            if let Some(id) = d.source {
                out.entry(id).or_default().insert(d.det.frame, d.det.bbox);
            }
        }
        out
    }

    pub fn gt_rows(&self) -> Vec<MotRow> {
        self.gt
            .iter()
            .map(|g| MotRow::gt(g.frame, g.id as i64, &g.bbox, g.visibility))
            .collect()
    }

    pub fn det_rows(&self) -> Vec<MotRow> {
        self.dets.iter().map(|d| MotRow::from_detection(&d.det)).collect()
    }

    /// Longest run of consecutive frames with visibility below `MIN_DETECTABLE_VISIBILITY`, per id.
    pub fn longest_suppression(&self) -> BTreeMap<u64, u32> {
        let mut best: BTreeMap<u64, u32> = BTreeMap::new();
        let mut run: BTreeMap<u64, u32> = BTreeMap::new();
        for g in &self.gt {
            let r = run.entry(g.id).or_insert(0);
            *r = if g.visibility < MIN_DETECTABLE_VISIBILITY {
                *r + 1
            } else {
                0
            };
            let b = best.entry(g.id).or_insert(0);
            *b = (*b).max(*r);
        }
        best
    }
}

struct Agent {
    pos: (f64, f64),
    vel: (f64, f64),
    speed: f64,
    w: f64,
    h: f64,
    waypoints: Vec<Waypoint>,
    next: usize,
    dwell_left: u32,
    wander: bool,
}

impl Agent {
    fn goal(&self) -> Option<Waypoint> {
        self.waypoints.get(self.next).copied()
    }

    fn desired_velocity(&self) -> (f64, f64) {
        if self.dwell_left > 0 {
            return (0.0, 0.0);
        }
        match self.goal() {
            None => (0.0, 0.0),
            Some(g) => {
                let (dx, dy) = (g.x - self.pos.0, g.y - self.pos.1);
                let d = dx.hypot(dy);
                if d < 1e-9 {
                    (0.0, 0.0)
                } else {
                    (self.speed * dx / d, self.speed * dy / d)
                }
            }
        }
    }

    fn bbox(&self) -> BBox {
        BBox::new(self.pos.0, self.pos.1, self.w, self.h)
    }
}

fn random_goal(cfg: &SimConfig, rng: &mut ChaCha8Rng, w: f64, h: f64) -> Waypoint {
    let (x0, x1, y0, y1) = region_bounds(cfg, w, h);
    let dwell = if cfg.dwell_range.1 > cfg.dwell_range.0 {
        rng.random_range(cfg.dwell_range.0..=cfg.dwell_range.1)
    } else {
        cfg.dwell_range.0
    };
    Waypoint {
        x: rng.random_range(x0..=x1),
        y: rng.random_range(y0..=y1),
        dwell,
    }
}

/// Allowed centre range for a `w x h` box inside the region and the frame.
fn region_bounds(cfg: &SimConfig, w: f64, h: f64) -> (f64, f64, f64, f64) {
    let region = cfg
        .region
        .unwrap_or(BBox::from_tlwh(0.0, 0.0, cfg.dims.width, cfg.dims.height));
    let x0 = region.left().max(w / 2.0);
    let x1 = region.right().min(cfg.dims.width - w / 2.0).max(x0);
    let y0 = region.top().max(h / 2.0);
    let y1 = region.bottom().min(cfg.dims.height - h / 2.0).max(y0);
    (x0, x1, y0, y1)
}

fn uniform(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.random_range(r.0..=r.1)
    } else {
        r.0
    }
}

fn visibility(target: usize, boxes: &[BBox], occluders: &[&BBox], agent_occlusion: bool) -> f64 {
    let b = boxes[target];
    let mut visible = 0;
    for i in 0..VIS_GRID {
        for j in 0..VIS_GRID {
            let px = b.left() + (i as f64 + 0.5) * b.w / VIS_GRID as f64;
            let py = b.top() + (j as f64 + 0.5) * b.h / VIS_GRID as f64;
            let hidden = occluders.iter().any(|o| o.contains_point(px, py))
                || (agent_occlusion
                    && boxes.iter().enumerate().any(|(k, o)| {
                        k != target
                            && (o.bottom() > b.bottom() || (o.bottom() == b.bottom() && k < target))
                            && o.contains_point(px, py)
                    }));
            if !hidden {
                visible += 1;
            }
        }
    }
    visible as f64 / (VIS_GRID * VIS_GRID) as f64
}

pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let mut world = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sensor = ChaCha8Rng::seed_from_u64(cfg.seed);
    sensor.set_stream(1);
    let (width, height) = (cfg.dims.width, cfg.dims.height);

    let mut agents: Vec<Agent> = Vec::new();
    for s in &cfg.scripted {
        let h = s.height;
        agents.push(Agent {
            pos: s.start,
            vel: (0.0, 0.0),
            speed: s.speed,
            w: h * cfg.aspect,
            h,
            waypoints: s.waypoints.clone(),
            next: 0,
            dwell_left: 0,
            wander: false,
        });
    }
    for _ in 0..cfg.agents {
        let h = uniform(&mut world, cfg.height_range);
        let w = h * cfg.aspect;
        let (x0, x1, y0, y1) = region_bounds(cfg, w, h);
        let pos = (world.random_range(x0..=x1), world.random_range(y0..=y1));
        let speed = uniform(&mut world, cfg.speed_range);
        let first = random_goal(cfg, &mut world, w, h);
        agents.push(Agent {
            pos,
            vel: (0.0, 0.0),
            speed,
            w,
            h,
            waypoints: vec![first],
            next: 0,
            dwell_left: 0,
            wander: true,
        });
    }
    for a in &mut agents {
        a.vel = a.desired_velocity();
    }

    let noisy_sensor = cfg.pos_noise > 0.0 || cfg.size_noise > 0.0;
    let innovation = (1.0 - cfg.noise_corr * cfg.noise_corr).sqrt();
    // unit-variance error state per agent: (x, y, w, h)
    let mut errors: Vec<[f64; 4]> = Vec::new();

    let mut out = SimOutput {
        name: cfg.name.clone(),
        dims: cfg.dims,
        frames: cfg.frames,
        gt: Vec::new(),
        dets: Vec::new(),
        counts: Vec::new(),
        repulsion_events: 0,
    };

    for frame in 1..=cfg.frames {
        if frame > 1 {
            step_agents(cfg, &mut agents, &mut world, &mut out.repulsion_events);
        }
        let boxes: Vec<BBox> = agents.iter().map(Agent::bbox).collect();
        let occ: Vec<&BBox> = cfg
            .occluders
            .iter()
            .filter(|o| o.active(frame))
            .map(|o| &o.rect)
            .collect();
        let mut counts = FrameCounts::default();
        if noisy_sensor {
            for (i, _) in boxes.iter().enumerate() {
                let fresh: [f64; 4] = std::array::from_fn(|_| sensor.sample(StandardNormal));
                match errors.get_mut(i) {
                    Some(e) => {
                        for (v, z) in e.iter_mut().zip(fresh) {
                            *v = cfg.noise_corr * *v + innovation * z;
                        }
                    }
                    None => errors.push(fresh),
                }
            }
        }
        for (i, b) in boxes.iter().enumerate() {
            let id = i as u64 + 1;
            let vis = visibility(i, &boxes, &occ, cfg.agent_occlusion);
            out.gt.push(GtBox {
                frame,
                id,
                bbox: *b,
                visibility: vis,
            });
            if vis < MIN_DETECTABLE_VISIBILITY {
                continue;
            }
            counts.visible += 1;
            if sensor.random_bool(cfg.fn_rate) {
                counts.fn_draws += 1;
                continue;
            }
            let noisy = if noisy_sensor {
                let e = errors[i];
                BBox::new(
                    b.x + cfg.pos_noise * e[0],
                    b.y + cfg.pos_noise * e[1],
                    (b.w * (1.0 + cfg.size_noise * e[2])).max(MIN_EXTENT),
                    (b.h * (1.0 + cfg.size_noise * e[3])).max(MIN_EXTENT),
                )
            } else {
                *b
            };
            let score = sensor.random_range(0.7..=1.0) * vis;
            out.dets.push(SimDetection {
                det: Detection::new(frame, noisy, score),
                source: Some(id),
            });
        }
        if sensor.random_bool(cfg.fp_rate) {
            counts.fp_draws += 1;
            let h = uniform(&mut sensor, cfg.height_range);
            let w = h * cfg.aspect;
            let b = BBox::new(
                sensor.random_range(w / 2.0..=width - w / 2.0),
                sensor.random_range(h / 2.0..=height - h / 2.0),
                w,
                h,
            );
            out.dets.push(SimDetection {
                det: Detection::new(frame, b, sensor.random_range(0.1..=0.75)),
                source: None,
            });
        }
        counts.detections = counts.visible - counts.fn_draws + counts.fp_draws;
        out.counts.push(counts);
    }
    Ok(out)
}

fn step_agents(cfg: &SimConfig, agents: &mut [Agent], rng: &mut ChaCha8Rng, events: &mut usize) {
    let n = agents.len();
    let positions: Vec<(f64, f64)> = agents.iter().map(|a| a.pos).collect();
    for i in 0..n {
        for j in i + 1..n {
            let d = (positions[i].0 - positions[j].0).hypot(positions[i].1 - positions[j].1);
            if d < cfg.repulsion_radius {
                *events += 1;
            }
        }
    }
    let mut acc = vec![(0.0, 0.0); n];
    for i in 0..n {
        let a = &agents[i];
        let v0 = a.desired_velocity();
        let mut f = ((v0.0 - a.vel.0) / cfg.tau, (v0.1 - a.vel.1) / cfg.tau);
        if cfg.repulsion_strength > 0.0 {
            for (j, p) in positions.iter().enumerate() {
                if j == i {
                    continue;
                }
                let (dx, dy) = (a.pos.0 - p.0, a.pos.1 - p.1);
                let d = dx.hypot(dy);
                if d > 4.0 * cfg.repulsion_radius || d < 1e-9 {
                    continue;
                }
                let mag = cfg.repulsion_strength * (-d / cfg.repulsion_radius).exp();
                f.0 += mag * dx / d;
                f.1 += mag * dy / d;
            }
        }
        acc[i] = f;
    }
    let (width, height) = (cfg.dims.width, cfg.dims.height);
    for (a, f) in agents.iter_mut().zip(acc) {
        a.vel.0 += f.0;
        a.vel.1 += f.1;
        let vmax = 1.5 * a.speed.max(0.5);
        let v = a.vel.0.hypot(a.vel.1);
        if v > vmax {
            a.vel = (a.vel.0 * vmax / v, a.vel.1 * vmax / v);
        }
        a.pos.0 += a.vel.0;
        a.pos.1 += a.vel.1;
        reflect(&mut a.pos.0, &mut a.vel.0, a.w / 2.0, width - a.w / 2.0);
        reflect(&mut a.pos.1, &mut a.vel.1, a.h / 2.0, height - a.h / 2.0);

        if a.dwell_left > 0 {
            a.dwell_left -= 1;
            if a.dwell_left == 0 {
                a.next += 1;
            }
        } else if let Some(g) = a.goal() {
            let d = (g.x - a.pos.0).hypot(g.y - a.pos.1);
            if d <= a.speed {
                a.pos = (g.x, g.y);
                a.vel = (0.0, 0.0);
                if g.dwell > 0 {
                    a.dwell_left = g.dwell;
                } else {
                    a.next += 1;
                }
            }
        }
        if a.wander && a.goal().is_none() {
            let (w, h) = (a.w, a.h);
            a.waypoints.push(random_goal(cfg, rng, w, h));
        }
        // leaving a dwell: head off at walking pace right away
        if a.dwell_left == 0 && a.vel == (0.0, 0.0) {
            a.vel = a.desired_velocity();
        }
    }
}

fn reflect(p: &mut f64, v: &mut f64, lo: f64, hi: f64) {
    if *p < lo {
        *p = (2.0 * lo - *p).min(hi);
        *v = -*v;
    } else if *p > hi {
        *p = (2.0 * hi - *p).max(lo);
        *v = -*v;
    }
}

fn lane(y: f64, x0: f64, x1: f64, speed: f64, height: f64) -> ScriptedAgent {
    ScriptedAgent {
        start: (x0, y),
        waypoints: vec![Waypoint { x: x1, y, dwell: 0 }],
        speed,
        height,
    }
}

pub const SCENARIOS: [&str; 6] = [
    "clean",
    "crossing_pair",
    "dense_crowd_20",
    "occlusion_30",
    "occlusion_120",
    "crowd_vis025",
];

/// The fixed scenario set. `seed` varies the random parts only.
pub fn scenario(name: &str, seed: u64) -> Result<SimConfig> {
    let base = SimConfig {
        name: name.to_string(),
        seed,
        ..SimConfig::default()
    };
    let cfg = match name {
        "clean" => SimConfig {
            frames: 150,
            scripted: vec![
                lane(120.0, 100.0, 1180.0, 3.0, 90.0),
                lane(300.0, 1180.0, 100.0, 2.5, 100.0),
                lane(480.0, 150.0, 1150.0, 2.0, 80.0),
                lane(640.0, 1100.0, 200.0, 3.5, 70.0),
            ],
            repulsion_strength: 0.0,
            ..base
        },
        "crossing_pair" => SimConfig {
            frames: 160,
            scripted: vec![
                lane(330.0, 200.0, 1080.0, 3.0, 90.0),
                lane(390.0, 1080.0, 200.0, 3.0, 90.0),
            ],
            repulsion_radius: 25.0,
            ..base
        },
        "dense_crowd_20" => SimConfig {
            frames: 200,
            agents: 24,
            region: Some(BBox::from_tlwh(260.0, 150.0, 760.0, 420.0)),
            speed_range: (3.0, 6.0),
            height_range: (50.0, 80.0),
            repulsion_strength: 1.5,
            repulsion_radius: 25.0,
            dwell_range: (0, 20),
            agent_occlusion: true,
            pos_noise: 0.5,
            size_noise: 0.01,
            noise_corr: 0.9,
            fn_rate: 0.02,
            fp_rate: 0.1,
            ..base
        },
        "occlusion_30" => {
            // each occluder is up for 30 frames; one walker reaches its centre
            // as it appears, waits there until it drops, then turns away
            let mut occluders = Vec::new();
            let mut scripted = Vec::new();
            for k in 0..4u32 {
                let (cx, cy) = (240.0 + 260.0 * k as f64, 200.0 + 240.0 * (k % 2) as f64);
                let start = 40 + 30 * k;
                occluders.push(Occluder {
                    rect: BBox::new(cx, cy, 220.0, 260.0),
                    start,
                    end: start + 29,
                });
                let speed = 2.0;
                let turn = if k % 2 == 0 { 1.0 } else { -1.0 };
                scripted.push(ScriptedAgent {
                    start: (cx - speed * (start - 1) as f64, cy),
                    waypoints: vec![
                        Waypoint {
                            x: cx,
                            y: cy,
                            dwell: 30,
                        },
                        Waypoint {
                            x: cx + 120.0,
                            y: cy + turn * 240.0,
                            dwell: 0,
                        },
                    ],
                    speed,
                    height: 75.0,
                });
            }
            SimConfig {
                frames: 220,
                scripted,
                agents: 6,
                dwell_range: (0, 10),
                occluders,
                pos_noise: 0.5,
                size_noise: 0.01,
                noise_corr: 0.9,
                fn_rate: 0.02,
                fp_rate: 0.05,
                ..base
            }
        }
        "occlusion_120" => {
            // two walkers step behind the pillar, stop, and turn away once it
            // drops about 105 frames later; everyone else stays clear of it
            let walker = |x0: f64, stop: f64, y: f64, exit: (f64, f64)| ScriptedAgent {
                start: (x0, y),
                waypoints: vec![
                    Waypoint { x: stop, y, dwell: 72 },
                    Waypoint {
                        x: exit.0,
                        y: exit.1,
                        dwell: 0,
                    },
                ],
                speed: 3.0,
                height: 90.0,
            };
            SimConfig {
                frames: 260,
                scripted: vec![
                    walker(300.0, 560.0, 300.0, (200.0, 620.0)),
                    walker(980.0, 720.0, 420.0, (1100.0, 620.0)),
                    lane(120.0, 80.0, 1200.0, 2.0, 80.0),
                    lane(640.0, 1200.0, 80.0, 2.2, 75.0),
                ],
                agents: 4,
                region: Some(BBox::from_tlwh(0.0, 560.0, 1280.0, 160.0)),
                occluders: vec![Occluder {
                    rect: BBox::new(640.0, 360.0, 360.0, 320.0),
                    start: 40,
                    end: 160,
                }],
                pos_noise: 0.5,
                size_noise: 0.01,
                noise_corr: 0.9,
                fn_rate: 0.01,
                fp_rate: 0.02,
                ..base
            }
        }
        "crowd_vis025" => SimConfig {
            frames: 200,
            agents: 16,
            region: Some(BBox::from_tlwh(0.0, 290.0, 1280.0, 140.0)),
            height_range: (70.0, 100.0),
            dwell_range: (0, 30),
            repulsion_strength: 0.8,
            repulsion_radius: 20.0,
            agent_occlusion: true,
            pos_noise: 0.5,
            size_noise: 0.01,
            noise_corr: 0.9,
            fn_rate: 0.02,
            fp_rate: 0.05,
            ..base
        },
        other => return Err(Error::Config(format!("unknown scenario `{other}`"))),
    };
    Ok(cfg)
}

/// All named scenarios at one seed.
pub fn scenario_library(seed: u64) -> Vec<SimConfig> {
    SCENARIOS
        .iter()
        .map(|n| scenario(n, seed).expect("library names are valid"))
        .collect()
}
