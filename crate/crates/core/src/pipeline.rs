//! Glue used by the command line and the experiments: tracker variants,
//! sweep cells, and tail-beat analysis of track records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{count_events, greedy_extrema_match, majority_objects, EventReport, ExtremaScore, GtBox};
use crate::model::{ComponentClass, Detection, ModuleSet, TrackerConfig};
use crate::tailbeat::{
    analyze_series, component_tracks, extract_state, filter_quality_tracks, ProminenceChoice, QualityFilter,
    TailStateExtractor, TailStateSeries, DEFAULT_POLYORDER, DEFAULT_WINDOW,
};
use crate::tracker::{run_tracker, TrackRecord, TrackRun, TrackerRegistry};

/// A tracker name plus the modules it runs with, written `bt`, `bct`,
/// `bct:turn`, `bct:turn+bpdis` or `bct:all`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub tracker: String,
    pub modules: ModuleSet,
}

impl Variant {
    pub fn new(tracker: &str, modules: ModuleSet) -> Self {
        Self {
            tracker: tracker.to_string(),
            modules,
        }
    }

    /// The rows of the ablation table.
    pub fn ablation_set() -> Vec<Variant> {
        let one = |f: fn(&mut ModuleSet)| {
            let mut m = ModuleSet::NONE;
            f(&mut m);
            Variant::new("bct", m)
        };
        vec![
            Variant::new("bt", ModuleSet::NONE),
            Variant::new("bct", ModuleSet::NONE),
            one(|m| m.turn = true),
            one(|m| m.bpdis = true),
            one(|m| m.nobp = true),
            one(|m| m.bpiou = true),
            Variant::new("bct", ModuleSet::ALL),
        ]
    }

    pub fn config(&self, base: &TrackerConfig, iou_threshold: f64, hidden_length: u32) -> TrackerConfig {
        TrackerConfig {
            iou_threshold,
            hidden_length,
            modules: self.modules,
            ..base.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.modules == ModuleSet::NONE {
            f.write_str(&self.tracker)
        } else {
            write!(f, "{}:{}", self.tracker, self.modules.label())
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, mods) = s.split_once(':').unwrap_or((s, ""));
        if name.is_empty() {
            return Err(Error::Config(format!("bad variant '{s}'")));
        }
        Ok(Variant::new(name, ModuleSet::parse(&mods.replace('+', ","))?))
    }
}

pub fn track(
    registry: &TrackerRegistry,
    name: &str,
    cfg: &TrackerConfig,
    detections: &[Detection],
) -> Result<TrackRun> {
    let mut tracker = registry.create(name, cfg)?;
    run_tracker(tracker.as_mut(), detections, None)
}

/// One point of the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub variant: Variant,
    pub iou_threshold: f64,
    pub hidden_length: u32,
}

impl SweepCell {
    pub fn grid(variants: &[Variant], thresholds: &[f64], hidden_lengths: &[u32]) -> Vec<SweepCell> {
        let mut out = Vec::new();
        for v in variants {
            for &hl in hidden_lengths {
                for &t in thresholds {
                    out.push(SweepCell {
                        variant: v.clone(),
                        iou_threshold: t,
                        hidden_length: hl,
                    });
                }
            }
        }
        out
    }

    pub fn run(
        &self,
        registry: &TrackerRegistry,
        base: &TrackerConfig,
        detections: &[Detection],
        gt: &[GtBox],
        match_iou: f64,
    ) -> Result<EventReport> {
        let cfg = self.variant.config(base, self.iou_threshold, self.hidden_length);
        let run = track(registry, &self.variant.tracker, &cfg, detections)?;
        count_events(gt, &run.records, match_iou)
    }
}

/// Tail analysis settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TailConfig {
    pub window: usize,
    pub polyorder: usize,
    pub filter: QualityFilter,
    /// Fixed prominence, or `None` to tune each series to its target count.
    pub prominence: Option<f64>,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            polyorder: DEFAULT_POLYORDER,
            filter: QualityFilter::default(),
            prominence: None,
        }
    }
}

/// Series for every quality track in `records`. `target` gives the extrema
/// count to tune for when no fixed prominence is configured; series without
/// a target fall back to prominence 0.
pub fn tail_series(
    records: &[TrackRecord],
    extractor: &dyn TailStateExtractor,
    cfg: &TailConfig,
    target: impl Fn(&TailStateSeries) -> Option<usize>,
) -> Result<Vec<TailStateSeries>> {
    let filter = QualityFilter {
        required_parts: QualityFilter::for_extractor(extractor).required_parts,
        ..cfg.filter.clone()
    };
    let mut out = Vec::new();
    for t in filter_quality_tracks(&component_tracks(records), &filter) {
        for mut s in extract_state(&t, extractor)? {
            let choice = match (cfg.prominence, target(&s)) {
                (Some(p), _) => ProminenceChoice::Fixed(p),
                (None, Some(n)) if n > 0 => ProminenceChoice::TargetCount(n),
                (None, _) => ProminenceChoice::Fixed(0.0),
            };
            analyze_series(&mut s, cfg.window, cfg.polyorder, choice)?;
            out.push(s);
        }
    }
    Ok(out)
}

/// Ground-truth extrema frames per fish, as carried by the simulator metadata.
pub type TruthExtrema = BTreeMap<u64, Vec<u32>>;

/// Ground-truth extrema of the fish matched to each hypothesis unit that
/// fall inside the frame span of `series`.
pub fn series_truth<'a>(
    gt: &[GtBox],
    records: &[TrackRecord],
    truth: &'a TruthExtrema,
) -> impl Fn(&TailStateSeries) -> Option<Vec<u32>> + 'a {
    let owner = majority_objects(gt, records, ComponentClass::Salmon, 0.5);
    move |s: &TailStateSeries| {
        let fish = owner.get(&s.unit_id)?;
        let (a, b) = (*s.frames.first()?, *s.frames.last()?);
        Some(
            truth
                .get(fish)?
                .iter()
                .copied()
                .filter(|f| (a..=b).contains(f))
                .collect(),
        )
    }
}

/// Extrema scores pooled over all series, one per frame threshold.
pub fn score_series(
    series: &[TailStateSeries],
    truth_of: impl Fn(&TailStateSeries) -> Option<Vec<u32>>,
    thresholds: &[u32],
) -> Vec<ExtremaScore> {
    thresholds
        .iter()
        .map(|&th| {
            let mut total = ExtremaScore {
                tp: 0,
                fp: 0,
                fn_: 0,
                threshold: th,
            };
            for s in series {
                let Some(truth) = truth_of(s) else { continue };
                let sc = greedy_extrema_match(&truth, &s.extrema_frames(), th);
                total.tp += sc.tp;
                total.fp += sc.fp;
                total.fn_ += sc.fn_;
            }
            total
        })
        .collect()
}
