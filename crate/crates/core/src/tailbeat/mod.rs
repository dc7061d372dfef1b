//! Tail-beat state series from component tracks: extraction, smoothing,
//! extrema, prominence tuning and wavelengths.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{BBox, ComponentClass};
use crate::tracker::TrackRecord;

mod extrema;
mod representation;
mod savgol;

pub use extrema::{extrema_count, find_extrema, tune_prominence};
pub use representation::{
    ExtractorFactory, Representation, RepresentationRegistry, TailStateExtractor, TipExtractor,
    WidthExtractor,
};
pub use savgol::{savgol_smooth, Smoothed, DEFAULT_POLYORDER, DEFAULT_WINDOW};

/// Gaps up to this many missing frames are bridged linearly.
pub const MAX_INTERPOLATED_GAP: u32 = 3;

/// Per-frame component boxes of one tracked unit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComponentTrack {
    pub unit_id: u64,
    pub frames: BTreeMap<u32, BTreeMap<ComponentClass, BBox>>,
}

impl ComponentTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Groups track records by id. Meaningful for unit-level output, where
/// every component of a fish shares the id.
pub fn component_tracks(records: &[TrackRecord]) -> Vec<ComponentTrack> {
    let mut by_id: BTreeMap<u64, ComponentTrack> = BTreeMap::new();
    for r in records {
        let t = by_id.entry(r.id).or_insert_with(|| ComponentTrack {
            unit_id: r.id,
            ..Default::default()
        });
        t.frames.entry(r.frame).or_default().insert(r.cls, r.bbox);
    }
    by_id.into_values().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailStateSeries {
    pub unit_id: u64,
    pub representation: Representation,
    /// Strictly increasing, contiguous after gap interpolation.
    pub frames: Vec<u32>,
    pub values: Vec<f64>,
    pub smoothed: Vec<f64>,
    /// Indices into the series.
    pub maxima: Vec<usize>,
    pub minima: Vec<usize>,
    pub smoothing_applied: bool,
}

impl TailStateSeries {
    fn new(unit_id: u64, representation: Representation, frames: Vec<u32>, values: Vec<f64>) -> Self {
        Self {
            unit_id,
            representation,
            smoothed: values.clone(),
            frames,
            values,
            maxima: Vec::new(),
            minima: Vec::new(),
            smoothing_applied: false,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn smooth(&mut self, window: usize, polyorder: usize) -> Result<()> {
        let s = savgol_smooth(&self.values, window, polyorder)?;
        self.smoothed = s.values;
        self.smoothing_applied = s.applied;
        Ok(())
    }

    pub fn mark_extrema(&mut self, prominence: f64) {
        let (maxima, minima) = find_extrema(&self.smoothed, prominence);
        self.maxima = maxima;
        self.minima = minima;
    }

    /// Frames of all extrema, maxima and minima merged in order.
    pub fn extrema_frames(&self) -> Vec<u32> {
        let mut f: Vec<u32> = self
            .maxima
            .iter()
            .chain(&self.minima)
            .map(|&i| self.frames[i])
            .collect();
        f.sort_unstable();
        f
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        wavelengths(&self.maxima, &self.minima, &self.frames)
    }
}

/// Computes the tail state per frame. Gaps of at most
/// [`MAX_INTERPOLATED_GAP`] frames are interpolated; longer gaps start a
/// new segment.
pub fn extract_state(track: &ComponentTrack, extractor: &dyn TailStateExtractor) -> Result<Vec<TailStateSeries>> {
    let rep = extractor.representation();
    let required = extractor.required();
    let points: Vec<(u32, f64)> = track
        .frames
        .iter()
        .filter(|(_, boxes)| required.iter().all(|c| boxes.contains_key(c)))
        .filter_map(|(&f, boxes)| extractor.value(boxes).map(|v| (f, v)))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptySeries(format!(
            "unit {} has no frame with a computable {rep} value",
            track.unit_id
        )));
    }

    let mut segments = Vec::new();
    let mut frames = vec![points[0].0];
    let mut values = vec![points[0].1];
    for w in points.windows(2) {
        let ((f0, v0), (f1, v1)) = (w[0], w[1]);
        let missing = f1 - f0 - 1;
        if missing > MAX_INTERPOLATED_GAP {
            segments.push(TailStateSeries::new(track.unit_id, rep, std::mem::take(&mut frames), std::mem::take(&mut values)));
        } else {
            for k in 1..=missing {
                let t = k as f64 / (missing + 1) as f64;
                frames.push(f0 + k);
                values.push(v0 + t * (v1 - v0));
            }
        }
        frames.push(f1);
        values.push(v1);
    }
    segments.push(TailStateSeries::new(track.unit_id, rep, frames, values));
    Ok(segments)
}

/// Frame distances between consecutive maxima, then between consecutive minima.
pub fn wavelengths(maxima: &[usize], minima: &[usize], frames: &[u32]) -> Vec<f64> {
    let diffs = |idx: &[usize]| -> Vec<f64> {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        sorted
            .windows(2)
            .map(|w| frames[w[1]] as f64 - frames[w[0]] as f64)
            .collect()
    };
    let mut out = diffs(maxima);
    out.extend(diffs(minima));
    out
}

/// Frame-level and track-level quality requirements for tail analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityFilter {
    pub min_diagonal: f64,
    pub min_length: usize,
    /// Parts that must be visible in a frame for it to count.
    pub required_parts: Vec<ComponentClass>,
}

impl Default for QualityFilter {
    fn default() -> Self {
        Self {
            min_diagonal: 200.0,
            min_length: 50,
            required_parts: ComponentClass::PARTS.to_vec(),
        }
    }
}

impl QualityFilter {
    /// Only the parts a representation needs.
    pub fn for_extractor(extractor: &dyn TailStateExtractor) -> Self {
        Self {
            required_parts: extractor
                .required()
                .iter()
                .copied()
                .filter(|c| !c.is_salmon())
                .collect(),
            ..Self::default()
        }
    }

    fn frame_ok(&self, boxes: &BTreeMap<ComponentClass, BBox>) -> bool {
        boxes
            .get(&ComponentClass::Salmon)
            .is_some_and(|b| b.diagonal() >= self.min_diagonal)
            && self.required_parts.iter().all(|c| boxes.contains_key(c))
    }
}

/// Drops bad frames, then keeps only the longest run of consecutive good
/// frames per unit (earliest on ties) if it reaches `min_length`.
pub fn filter_quality_tracks(tracks: &[ComponentTrack], filter: &QualityFilter) -> Vec<ComponentTrack> {
    let mut out = Vec::new();
    for track in tracks {
        let good: Vec<u32> = track
            .frames
            .iter()
            .filter(|(_, b)| filter.frame_ok(b))
            .map(|(&f, _)| f)
            .collect();
        let mut best: Option<(usize, usize)> = None;
        let mut start = 0;
        for i in 1..=good.len() {
            if i == good.len() || good[i] != good[i - 1] + 1 {
                let len = i - start;
                if len > best.map_or(0, |b| b.1) {
                    best = Some((start, len));
                }
                start = i;
            }
        }
        if let Some((s, len)) = best.filter(|b| b.1 >= filter.min_length) {
            let keep = &good[s..s + len];
            out.push(ComponentTrack {
                unit_id: track.unit_id,
                frames: keep
                    .iter()
                    .map(|f| (*f, track.frames[f].clone()))
                    .collect(),
            });
        }
    }
    out
}

/// How the extrema prominence is chosen for a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProminenceChoice {
    Fixed(f64),
    /// Tune so the extrema count approaches this target.
    TargetCount(usize),
}

/// Smooths the series and marks its extrema; returns the prominence used.
pub fn analyze_series(
    series: &mut TailStateSeries,
    window: usize,
    polyorder: usize,
    choice: ProminenceChoice,
) -> Result<f64> {
    series.smooth(window, polyorder)?;
    let prominence = match choice {
        ProminenceChoice::Fixed(p) => p,
        ProminenceChoice::TargetCount(n) => tune_prominence(&series.smoothed, n.max(1)),
    };
    series.mark_extrema(prominence);
    Ok(prominence)
}
