use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, ComponentClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    Straight,
    /// Half rotation about the vertical axis, through a frontal view.
    Turn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maneuver {
    pub start: u32,
    /// Frames spent rotating.
    pub frames: u32,
    /// Extra frames paused at the frontal view, mid-rotation.
    pub hold: u32,
    pub kind: ManeuverKind,
}

impl Maneuver {
    pub fn turn(start: u32, frames: u32, hold: u32) -> Self {
        Self {
            start,
            frames,
            hold,
            kind: ManeuverKind::Turn,
        }
    }

    pub fn end(&self) -> u32 {
        self.start + self.frames + self.hold
    }

    /// Rotation completed `t` frames after the start, in `[0, pi]`.
    fn rotation(&self, t: f64) -> f64 {
        if self.kind != ManeuverKind::Turn {
            return 0.0;
        }
        let half = self.frames as f64 / 2.0;
        let hold = self.hold as f64;
        if t <= 0.0 {
            0.0
        } else if t < half {
            FRAC_PI_2 * t / half
        } else if t < half + hold {
            FRAC_PI_2
        } else if t < 2.0 * half + hold {
            FRAC_PI_2 + FRAC_PI_2 * (t - half - hold) / half
        } else {
            PI
        }
    }
}

/// Position and heading in one frame. `heading` 0 is a side view facing
/// right, `pi` facing left, `pi / 2` a frontal view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
}

/// Motion and body parameters of one simulated fish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FishParams {
    pub fish_id: u64,
    pub start: (f64, f64),
    pub facing_right: bool,
    /// Pixels per frame along the heading.
    pub speed: f64,
    pub drift_amplitude: f64,
    pub drift_period: f64,
    pub body_length: f64,
    pub tail_period: f64,
    /// Vertical tail-fin excursion as a fraction of the body length.
    pub tail_amplitude: f64,
    pub tail_phase: f64,
    /// Smaller is closer to the camera.
    pub depth: f64,
    pub maneuvers: Vec<Maneuver>,
    #[serde(default)]
    pub absences: Vec<Absence>,
}

/// A spell out of sight (inclusive frames), during which the fish also
/// moves `shift_y` pixels vertically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Absence {
    pub start: u32,
    pub end: u32,
    pub shift_y: f64,
}

impl Absence {
    fn shift_at(&self, frame: u32) -> f64 {
        let span = (self.end - self.start + 1) as f64;
        self.shift_y * ((frame as f64 - self.start as f64) / span).clamp(0.0, 1.0)
    }
}

/// Part placement in body-length units: centre `(u, v)` with `u` towards
/// the head and `v` downwards, side-view size `(w, h)`, and the apparent
/// width `thickness` seen head-on.
struct PartShape {
    cls: ComponentClass,
    u: f64,
    v: f64,
    w: f64,
    h: f64,
    thickness: f64,
    /// Hidden in near-frontal views.
    lateral: bool,
}

const SHAPES: [PartShape; 8] = [
    PartShape { cls: ComponentClass::Head, u: 0.38, v: 0.0, w: 0.22, h: 0.22, thickness: 0.18, lateral: false },
    PartShape { cls: ComponentClass::Body, u: 0.0, v: 0.0, w: 0.55, h: 0.26, thickness: 0.2, lateral: false },
    PartShape { cls: ComponentClass::DorsalFin, u: 0.08, v: -0.15, w: 0.14, h: 0.08, thickness: 0.03, lateral: false },
    PartShape { cls: ComponentClass::AdiposeFin, u: -0.22, v: -0.10, w: 0.05, h: 0.04, thickness: 0.02, lateral: true },
    PartShape { cls: ComponentClass::TailFin, u: -0.45, v: 0.0, w: 0.12, h: 0.22, thickness: 0.03, lateral: false },
    PartShape { cls: ComponentClass::AnalFin, u: -0.18, v: 0.10, w: 0.08, h: 0.05, thickness: 0.03, lateral: true },
    PartShape { cls: ComponentClass::PelvicFin, u: 0.02, v: 0.13, w: 0.07, h: 0.05, thickness: 0.1, lateral: false },
    PartShape { cls: ComponentClass::PectoralFin, u: 0.25, v: 0.10, w: 0.08, h: 0.05, thickness: 0.1, lateral: true },
];

/// Tail-fin width swing relative to its rest width.
const TAIL_WIDTH_SWING: f64 = 0.35;

/// Lateral parts disappear once the view is this close to head-on.
const FRONTAL_COS: f64 = 0.5;

/// Noise-free component boxes of one fish in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FishFrame {
    pub salmon: BBox,
    pub parts: BTreeMap<ComponentClass, BBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimFish {
    pub params: FishParams,
    /// One pose per frame.
    pub trajectory: Vec<Pose>,
}

impl SimFish {
    pub fn new(params: FishParams, n_frames: u32) -> Result<Self> {
        if params.tail_period < 6.0 {
            return Err(Error::Config(format!("tail period {} below 6 frames", params.tail_period)));
        }
        if !(params.body_length > 0.0) {
            return Err(Error::Config("body length must be positive".into()));
        }
        let mut trajectory = Vec::with_capacity(n_frames as usize);
        let base = if params.facing_right { 0.0 } else { PI };
        let mut x = params.start.0;
        for f in 0..n_frames {
            let turned: f64 = params
                .maneuvers
                .iter()
                .map(|m| m.rotation(f as f64 - m.start as f64))
                .sum();
            let heading = (base + turned).rem_euclid(TAU);
            let cy = params.start.1
                + params.drift_amplitude * (TAU * f as f64 / params.drift_period.max(1.0)).sin()
                + params.absences.iter().map(|a| a.shift_at(f)).sum::<f64>();
            trajectory.push(Pose { cx: x, cy, heading });
            x += params.speed * heading.cos();
        }
        Ok(Self { params, trajectory })
    }

    pub fn id(&self) -> u64 {
        self.params.fish_id
    }

    pub fn absent(&self, frame: u32) -> bool {
        self.params.absences.iter().any(|a| (a.start..=a.end).contains(&frame))
    }

    pub fn tail_phase_at(&self, frame: u32) -> f64 {
        TAU * frame as f64 / self.params.tail_period + self.params.tail_phase
    }

    /// Component boxes for `frame`; lateral parts are absent in near-frontal
    /// views.
    pub fn frame_boxes(&self, frame: u32) -> FishFrame {
        let pose = self.trajectory[frame as usize];
        let l = self.params.body_length;
        let (c, s) = (pose.heading.cos(), pose.heading.sin());
        let swing = self.tail_phase_at(frame).sin();
        let frontal = c.abs() < FRONTAL_COS;

        let mut all = Vec::with_capacity(SHAPES.len());
        let mut parts = BTreeMap::new();
        for p in &SHAPES {
            let (mut v, mut w) = (p.v, p.w);
            if p.cls == ComponentClass::TailFin {
                v += self.params.tail_amplitude * swing;
                w *= 1.0 + TAIL_WIDTH_SWING * swing;
            }
            let bx = BBox::from_center(
                pose.cx + c * p.u * l,
                pose.cy + v * l,
                l * (w * c.abs() + p.thickness * s.abs()),
                l * p.h,
            );
            all.push(bx);
            if !(frontal && p.lateral) {
                parts.insert(p.cls, bx);
            }
        }
        let salmon = all[1..].iter().fold(all[0], |acc, b| acc.union_hull(b));
        FishFrame { salmon, parts }
    }

    /// Frames of tail-state extrema (`true` for maxima) in `[from, to]`:
    /// the swing peaks at phase `pi / 2 + k pi`.
    pub fn tail_extrema(&self, from: u32, to: u32) -> Vec<(u32, bool)> {
        let t = self.params.tail_period;
        let phi0 = self.params.tail_phase;
        let k_lo = ((TAU * from as f64 / t + phi0 - FRAC_PI_2) / PI).floor() as i64 - 1;
        let k_hi = ((TAU * to as f64 / t + phi0 - FRAC_PI_2) / PI).ceil() as i64 + 1;
        (k_lo..=k_hi)
            .filter_map(|k| {
                let f = ((FRAC_PI_2 + k as f64 * PI - phi0) * t / TAU).round();
                (f >= from as f64 && f <= to as f64).then_some((f as u32, k.rem_euclid(2) == 0))
            })
            .collect()
    }
}
