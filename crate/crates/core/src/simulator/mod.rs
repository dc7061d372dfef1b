//! Deterministic synthetic scenes: fish with body parts, occlusion-driven
//! detection loss, box jitter, and ground truth for every component.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Endpoint, EndpointTrack, GtBox};
use crate::geometry::iou;
use crate::model::{BBox, ComponentClass, Detection};

mod fish;
mod render;
mod rng;

pub use fish::{Absence, FishFrame, FishParams, Maneuver, ManeuverKind, Pose, SimFish};
pub use render::{covered_area, occlusion_fraction, quantize, render_frame, FrameRender, NoiseConfig, SceneConfig};
pub use rng::{SimRng, SCENARIO_STREAM};

pub const CATEGORY_STRAIGHT: &str = "Straight";
pub const CATEGORY_TURNING: &str = "Turning";
pub const CATEGORY_OCCLUDED: &str = "Occluded";

const WIDTH: f64 = 1920.0;
const HEIGHT: f64 = 1080.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FishMeta {
    pub params: FishParams,
    pub category: String,
    /// First and last frame in view.
    pub frames: Option<(u32, u32)>,
    /// Tail-state extrema over the frames in view, `true` for maxima.
    pub tail_extrema: Vec<(u32, bool)>,
}

/// Everything about a scene that is not per-frame output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub config: SceneConfig,
    pub fish: Vec<FishMeta>,
    pub endpoints: Vec<EndpointTrack>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneOutput {
    pub gt: Vec<GtBox>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SceneConfig,
    pub fish: Vec<SimFish>,
    pub categories: BTreeMap<u64, String>,
    pub endpoints: Vec<EndpointTrack>,
}

impl Scenario {
    pub fn render_frame(&self, frame: u32) -> FrameRender {
        render_frame(&self.config, &self.fish, frame)
    }

    pub fn render(&self) -> SceneOutput {
        let mut out = SceneOutput::default();
        for f in 0..self.config.n_frames {
            let r = self.render_frame(f);
            out.gt.extend(r.gt);
            out.detections.extend(r.detections);
        }
        out
    }

    /// The fish box as it appears in the ground truth, if in view.
    pub fn gt_salmon(&self, fish_idx: usize, frame: u32) -> Option<BBox> {
        let f = &self.fish[fish_idx];
        let full = f.frame_boxes(frame).salmon;
        let clipped = full.clip(self.config.width, self.config.height)?;
        (clipped.area() >= self.config.min_visible_fraction * full.area()).then(|| {
            BBox::from_corners(
                quantize(clipped.x_min()),
                quantize(clipped.y_min()),
                quantize(clipped.x_max()),
                quantize(clipped.y_max()),
            )
        })
    }

    pub fn frames_in_view(&self, fish_idx: usize) -> Option<(u32, u32)> {
        let seen: Vec<u32> = (0..self.config.n_frames)
            .filter(|&f| self.gt_salmon(fish_idx, f).is_some())
            .collect();
        Some((*seen.first()?, *seen.last()?))
    }

    pub fn meta(&self) -> ScenarioMeta {
        let fish = self
            .fish
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let frames = self.frames_in_view(i);
                FishMeta {
                    params: f.params.clone(),
                    category: self.categories.get(&f.id()).cloned().unwrap_or_default(),
                    frames,
                    tail_extrema: frames.map_or_else(Vec::new, |(a, b)| f.tail_extrema(a, b)),
                }
            })
            .collect();
        ScenarioMeta {
            config: self.config.clone(),
            fish,
            endpoints: self.endpoints.clone(),
        }
    }
}

/// Fraction of frames where some pair of fish boxes overlaps with IoU
/// above `min_iou`.
pub fn crowding_fraction(gt: &[GtBox], n_frames: u32, min_iou: f64) -> f64 {
    let mut by_frame: BTreeMap<u32, Vec<BBox>> = BTreeMap::new();
    for g in gt.iter().filter(|g| g.cls == ComponentClass::Salmon) {
        by_frame.entry(g.frame).or_default().push(g.bbox);
    }
    let crowded = by_frame
        .values()
        .filter(|bs| {
            bs.iter()
                .enumerate()
                .any(|(i, a)| bs[i + 1..].iter().any(|b| iou(a, b) > min_iou))
        })
        .count();
    crowded as f64 / n_frames.max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrowdedParams {
    pub n_fish: usize,
    pub n_frames: u32,
    pub noise: NoiseConfig,
    /// Up to this many out-of-sight spells per fish.
    pub max_absences: u32,
    /// Inclusive range of spell lengths in frames.
    pub absence_frames: (u32, u32),
    /// Largest vertical move made while out of sight.
    pub absence_shift: f64,
}

impl Default for CrowdedParams {
    fn default() -> Self {
        Self {
            n_fish: 24,
            n_frames: 300,
            noise: NoiseConfig {
                jitter_std: 2.0,
                miss_base: 0.03,
                miss_slope: 0.3,
            },
            max_absences: 6,
            absence_frames: (8, 28),
            absence_shift: 80.0,
        }
    }
}

/// A dense school crossing in both directions, without turns.
pub fn scenario_crowded(seed: u64) -> Result<Scenario> {
    scenario_crowded_with(&CrowdedParams::default(), seed)
}

pub fn scenario_crowded_with(p: &CrowdedParams, seed: u64) -> Result<Scenario> {
    if p.n_fish < 2 {
        return Err(Error::Config(format!("a crowded scene needs at least 2 fish, got {}", p.n_fish)));
    }
    let mut rng = SimRng::new(seed, SCENARIO_STREAM);
    let mut fish = Vec::with_capacity(p.n_fish);
    for i in 0..p.n_fish {
        let facing_right = rng.coin(0.5);
        let dir = if facing_right { 1.0 } else { -1.0 };
        let speed = rng.range(1.5, 3.5);
        let mid_x = rng.range(300.0, WIDTH - 300.0);
        let y = rng.range(80.0, HEIGHT - 80.0);
        let params = FishParams {
            fish_id: i as u64 + 1,
            start: (mid_x - dir * speed * p.n_frames as f64 / 2.0, y),
            facing_right,
            speed,
            drift_amplitude: rng.range(10.0, 50.0),
            drift_period: rng.range(80.0, 200.0),
            body_length: rng.range(160.0, 260.0),
            tail_period: rng.range(18.0, 30.0),
            tail_amplitude: 0.1,
            tail_phase: rng.range(0.0, TAU),
            depth: rng.uniform(),
            maneuvers: Vec::new(),
            absences: Vec::new(),
        };
        fish.push(params);
    }
    for params in &mut fish {
        let spells = (rng.uniform() * (p.max_absences + 1) as f64) as u32;
        for _ in 0..spells.min(p.max_absences) {
            let len = p.absence_frames.0 + (rng.uniform() * (p.absence_frames.1 - p.absence_frames.0 + 1) as f64) as u32;
            let start = (rng.uniform() * p.n_frames as f64) as u32;
            let shift_y = rng.range(-p.absence_shift, p.absence_shift);
            params.absences.push(Absence {
                start,
                end: start + len - 1,
                shift_y,
            });
        }
    }
    let fish = fish
        .into_iter()
        .map(|params| SimFish::new(params, p.n_frames))
        .collect::<Result<Vec<_>>>()?;
    let categories = fish.iter().map(|f| (f.id(), CATEGORY_STRAIGHT.to_string())).collect();
    Ok(Scenario {
        config: SceneConfig {
            name: "crowded".into(),
            n_fish: p.n_fish,
            n_frames: p.n_frames,
            width: WIDTH,
            height: HEIGHT,
            seed,
            noise: p.noise.clone(),
            min_visible_fraction: 0.3,
        },
        fish,
        categories,
        endpoints: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningParams {
    pub n_frames: u32,
    /// Frames spent rotating through a half turn.
    pub turn_frames: u32,
    /// Frames held head-on in the middle of the turn.
    pub turn_hold: u32,
    pub noise: NoiseConfig,
}

impl Default for TurningParams {
    fn default() -> Self {
        Self {
            n_frames: 150,
            turn_frames: 22,
            turn_hold: 4,
            noise: NoiseConfig {
                jitter_std: 1.5,
                miss_base: 0.01,
                miss_slope: 0.9,
            },
        }
    }
}

/// Fish in separate lanes: eight make a U-turn, four swim straight, and
/// one passes behind another fish. Every fish gets an early and a late
/// endpoint annotation.
pub fn scenario_turning(seed: u64) -> Result<Scenario> {
    scenario_turning_with(&TurningParams::default(), seed)
}

pub fn scenario_turning_with(p: &TurningParams, seed: u64) -> Result<Scenario> {
    let mut rng = SimRng::new(seed, SCENARIO_STREAM);
    let lane_y = |k: usize| 100.0 + 140.0 * k as f64;
    let halves = [(60.0, WIDTH / 2.0 - 60.0), (WIDTH / 2.0 + 60.0, WIDTH - 60.0)];
    let mut specs: Vec<(FishParams, &str)> = Vec::new();

    let base = |rng: &mut SimRng, id: u64, x: f64, y: f64, facing_right: bool, speed: f64| FishParams {
        fish_id: id,
        start: (x, y),
        facing_right,
        speed,
        drift_amplitude: rng.range(0.0, 5.0),
        drift_period: rng.range(80.0, 160.0),
        body_length: rng.range(180.0, 220.0),
        tail_period: rng.range(18.0, 30.0),
        tail_amplitude: 0.1,
        tail_phase: rng.range(0.0, TAU),
        depth: 1.0 + id as f64,
        maneuvers: Vec::new(),
        absences: Vec::new(),
    };

    let mut id = 0;
    for lane in 0..4 {
        for (lo, hi) in halves {
            id += 1;
            let facing_right = rng.coin(0.5);
            let dir = if facing_right { 1.0 } else { -1.0 };
            let speed = rng.range(2.0, 3.0);
            let x = 0.5 * (lo + hi) - dir * 80.0 + rng.range(-30.0, 30.0);
            let mut fp = base(&mut rng, id, x, lane_y(lane), facing_right, speed);
            let start = rng.range(50.0, 80.0) as u32;
            fp.maneuvers.push(Maneuver::turn(start, p.turn_frames, p.turn_hold));
            specs.push((fp, CATEGORY_TURNING));
        }
    }
    for lane in 4..6 {
        for (lo, hi) in halves {
            id += 1;
            let facing_right = rng.coin(0.5);
            let dir = if facing_right { 1.0 } else { -1.0 };
            let speed = rng.range(2.0, 3.0);
            let x = 0.5 * (lo + hi) - dir * 200.0 + rng.range(-30.0, 30.0);
            let fp = base(&mut rng, id, x, lane_y(lane), facing_right, speed);
            specs.push((fp, CATEGORY_STRAIGHT));
        }
    }
    // the second fish of the last lane swims in front of the first
    let speed = rng.range(2.8, 3.2);
    id += 1;
    let x = 700.0 + rng.range(-20.0, 20.0);
    let behind = base(&mut rng, id, x, lane_y(6), true, speed);
    id += 1;
    let x = 1200.0 + rng.range(-20.0, 20.0);
    let mut front = base(&mut rng, id, x, lane_y(6) + 15.0, false, speed);
    front.depth = 0.0;
    specs.push((behind, CATEGORY_OCCLUDED));
    specs.push((front, CATEGORY_STRAIGHT));

    let mut fish = Vec::new();
    let mut categories = BTreeMap::new();
    for (fp, cat) in specs {
        categories.insert(fp.fish_id, cat.to_string());
        fish.push(SimFish::new(fp, p.n_frames)?);
    }
    let mut scenario = Scenario {
        config: SceneConfig {
            name: "turning".into(),
            n_fish: fish.len(),
            n_frames: p.n_frames,
            width: WIDTH,
            height: HEIGHT,
            seed,
            noise: p.noise.clone(),
            min_visible_fraction: 0.3,
        },
        fish,
        categories,
        endpoints: Vec::new(),
    };
    let (early, late) = (5, p.n_frames.saturating_sub(6));
    let mut endpoints = Vec::new();
    for (i, f) in scenario.fish.iter().enumerate() {
        let (Some(a), Some(b)) = (scenario.gt_salmon(i, early), scenario.gt_salmon(i, late)) else {
            continue;
        };
        endpoints.push(EndpointTrack {
            object_id: f.id(),
            early: Endpoint { frame: early, bbox: a },
            late: Endpoint { frame: late, bbox: b },
            category: scenario.categories[&f.id()].clone(),
        });
    }
    scenario.endpoints = endpoints;
    Ok(scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailbeatParams {
    pub n_fish: usize,
    pub n_frames: u32,
    pub tail_period: f64,
    pub noise: NoiseConfig,
}

impl Default for TailbeatParams {
    fn default() -> Self {
        Self {
            n_fish: 3,
            n_frames: 300,
            tail_period: 24.0,
            noise: NoiseConfig {
                jitter_std: 2.0,
                miss_base: 0.0,
                miss_slope: 0.0,
            },
        }
    }
}

/// A few large, slow fish in separate lanes with a fixed tail period.
pub fn scenario_tailbeat(seed: u64) -> Result<Scenario> {
    scenario_tailbeat_with(&TailbeatParams::default(), seed)
}

pub fn scenario_tailbeat_with(p: &TailbeatParams, seed: u64) -> Result<Scenario> {
    if p.n_fish == 0 || p.n_fish > 3 {
        return Err(Error::Config(format!("tail-beat scenes hold 1 to 3 fish, got {}", p.n_fish)));
    }
    let mut rng = SimRng::new(seed, SCENARIO_STREAM);
    let mut fish = Vec::new();
    for i in 0..p.n_fish {
        let params = FishParams {
            fish_id: i as u64 + 1,
            start: (rng.range(500.0, 700.0), 250.0 + 290.0 * i as f64),
            facing_right: true,
            speed: rng.range(0.5, 1.0),
            drift_amplitude: rng.range(0.0, 10.0),
            drift_period: rng.range(120.0, 200.0),
            body_length: rng.range(280.0, 320.0),
            tail_period: p.tail_period,
            tail_amplitude: 0.1,
            tail_phase: rng.range(0.0, TAU),
            depth: i as f64,
            maneuvers: Vec::new(),
            absences: Vec::new(),
        };
        fish.push(SimFish::new(params, p.n_frames)?);
    }
    let categories = fish.iter().map(|f| (f.id(), CATEGORY_STRAIGHT.to_string())).collect();
    Ok(Scenario {
        config: SceneConfig {
            name: "tailbeat".into(),
            n_fish: p.n_fish,
            n_frames: p.n_frames,
            width: WIDTH,
            height: HEIGHT,
            seed,
            noise: p.noise.clone(),
            min_visible_fraction: 0.3,
        },
        fish,
        categories,
        endpoints: Vec::new(),
    })
}
