//! Tracker variants behind one trait, selectable by name.
//!
//! * `bt`: one independent SORT-style tracker per component class.
//! * `bct`: one unit per fish holding a subtracker per class, associated
//!   through the fish box and corrected by the turning and crowding rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::BoxFilterState;
use crate::model::{BBox, ComponentClass, Detection, TrackerConfig};

mod component;
mod modules;
mod per_class;

pub use component::{ClassSuggestion, ComponentTracker, FrameAssociation, TrackUnit};
pub use modules::{
    at_image_boundary, crowded_bpdis, crowded_bpiou, crowded_nobp, turn_accept,
    turn_counter_update, turn_increment_condition, CrowdedDecision,
};
pub use per_class::PerClassTracker;

/// One emitted track observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame: u32,
    /// Subtrack id for `bt`, unit id for `bct`.
    pub id: u64,
    pub cls: ComponentClass,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleEventKind {
    TurnAccept,
    Bpdis,
    Nobp,
    Bpiou,
}

impl ModuleEventKind {
    pub fn name(self) -> &'static str {
        match self {
            ModuleEventKind::TurnAccept => "turn_accept",
            ModuleEventKind::Bpdis => "bpdis",
            ModuleEventKind::Nobp => "nobp",
            ModuleEventKind::Bpiou => "bpiou",
        }
    }
}

/// Diagnostic record of a correction module firing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleEvent {
    pub frame: u32,
    pub unit_id: u64,
    pub kind: ModuleEventKind,
    /// The suppressed part class for `bpiou`.
    pub cls: Option<ComponentClass>,
}

/// Per-class Kalman state plus lifecycle counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SubTrack {
    pub track_id: u64,
    pub cls: ComponentClass,
    pub filter: BoxFilterState,
    pub frames_since_match: u32,
    pub hit_count: u32,
    pub last_similarity: f64,
    predicted: BBox,
}

impl SubTrack {
    pub fn spawn(track_id: u64, det: &Detection, cfg: &TrackerConfig) -> Result<Self> {
        let filter = BoxFilterState::init(&cfg.kalman, &det.bbox)?;
        Ok(Self {
            track_id,
            cls: det.cls,
            predicted: filter.bbox(),
            filter,
            frames_since_match: 0,
            hit_count: 1,
            last_similarity: 1.0,
        })
    }

    pub fn predict(&mut self, cfg: &TrackerConfig) {
        self.filter = self.filter.predict(&cfg.kalman);
        self.predicted = self.filter.bbox();
    }

    /// Box predicted for the current frame.
    pub fn predicted(&self) -> BBox {
        self.predicted
    }

    pub fn update(&mut self, det: &Detection, similarity: f64, cfg: &TrackerConfig) -> Result<()> {
        self.filter = self.filter.update(&cfg.kalman, &det.bbox)?;
        self.frames_since_match = 0;
        self.hit_count += 1;
        self.last_similarity = similarity;
        Ok(())
    }

    pub fn mark_missed(&mut self) {
        self.frames_since_match += 1;
    }

    pub fn record(&self, frame: u32, id: u64, confidence: f64) -> TrackRecord {
        TrackRecord {
            frame,
            id,
            cls: self.cls,
            bbox: self.filter.bbox(),
            confidence,
        }
    }
}

pub trait Tracker: Send {
    fn name(&self) -> &'static str;

    fn config(&self) -> &TrackerConfig;

    /// Consumes one frame of detections and returns the records emitted for it.
    fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackRecord>>;

    /// Module firings since the last call.
    fn drain_events(&mut self) -> Vec<ModuleEvent> {
        Vec::new()
    }
}

pub type TrackerFactory = fn(&TrackerConfig) -> Result<Box<dyn Tracker>>;

/// Name-keyed tracker constructors.
#[derive(Clone)]
pub struct TrackerRegistry {
    factories: BTreeMap<&'static str, TrackerFactory>,
}

impl TrackerRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: TrackerFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn create(&self, name: &str, cfg: &TrackerConfig) -> Result<Box<dyn Tracker>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown tracker '{name}' (available: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(cfg)
    }
}

impl Default for TrackerRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("bt", |cfg| Ok(Box::new(PerClassTracker::new(cfg.clone())?)));
        r.register("bct", |cfg| Ok(Box::new(ComponentTracker::new(cfg.clone())?)));
        r
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackRun {
    pub records: Vec<TrackRecord>,
    pub events: Vec<ModuleEvent>,
}

/// Steps `tracker` over every frame from the first to the last detection
/// frame (or the explicit `frames` range), including empty frames.
/// Records are ordered by frame, then class, then id.
pub fn run_tracker(
    tracker: &mut dyn Tracker,
    detections: &[Detection],
    frames: Option<std::ops::RangeInclusive<u32>>,
) -> Result<TrackRun> {
    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame).or_default().push(d.clone());
    }
    let range = match frames {
        Some(r) => r,
        None => match (by_frame.keys().next(), by_frame.keys().next_back()) {
            (Some(&a), Some(&b)) => a..=b,
            _ => return Ok(TrackRun::default()),
        },
    };
    let empty = Vec::new();
    let mut run = TrackRun::default();
    for frame in range {
        let dets = by_frame.get(&frame).unwrap_or(&empty);
        let mut records = tracker.step(frame, dets)?;
        records.sort_by(|a, b| (a.cls, a.id).cmp(&(b.cls, b.id)));
        run.records.extend(records);
        run.events.extend(tracker.drain_events());
    }
    Ok(run)
}

pub(crate) fn check_single_frame(frame: u32, detections: &[Detection]) -> Result<()> {
    match detections.iter().find(|d| d.frame != frame) {
        Some(d) => Err(Error::Usage(format!(
            "detection from frame {} passed to step for frame {frame}",
            d.frame
        ))),
        None => Ok(()),
    }
}
