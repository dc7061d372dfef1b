use std::collections::BTreeMap;

use crate::association::{similarity_matrix, solve_assignment};
use crate::error::Result;
use crate::model::{ComponentClass, Detection, TrackerConfig};

use super::{check_single_frame, SubTrack, TrackRecord, Tracker};

/// Baseline: an independent tracker per component class. Classes never
/// exchange detections; track ids are unique across classes.
#[derive(Debug, Clone)]
pub struct PerClassTracker {
    cfg: TrackerConfig,
    tracks: BTreeMap<ComponentClass, Vec<SubTrack>>,
    next_id: u64,
}

impl PerClassTracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: BTreeMap::new(),
            next_id: 1,
        })
    }

    pub fn tracks(&self, cls: ComponentClass) -> &[SubTrack] {
        self.tracks.get(&cls).map_or(&[], Vec::as_slice)
    }

    fn step_class(&mut self, cls: ComponentClass, frame: u32, dets: &[&Detection]) -> Result<Vec<TrackRecord>> {
        let cfg = &self.cfg;
        let tracks = self.tracks.entry(cls).or_default();
        for t in tracks.iter_mut() {
            t.predict(cfg);
        }
        let predicted: Vec<_> = tracks.iter().map(SubTrack::predicted).collect();
        let sim = similarity_matrix(&predicted, dets.iter().copied(), cfg.boost_weight);
        let assignment = solve_assignment(&sim, cfg.iou_threshold);

        let mut out = Vec::new();
        for &(ti, di, s) in &assignment.matches {
            let t = &mut tracks[ti];
            t.update(dets[di], s, cfg)?;
            if t.hit_count >= cfg.min_hits {
                out.push(t.record(frame, t.track_id, dets[di].confidence));
            }
        }
        for &ti in &assignment.unmatched_trackers {
            tracks[ti].mark_missed();
        }
        tracks.retain(|t| t.frames_since_match <= cfg.hidden_length);

        for &di in &assignment.unmatched_detections {
            let t = SubTrack::spawn(self.next_id, dets[di], cfg)?;
            self.next_id += 1;
            if t.hit_count >= cfg.min_hits {
                out.push(t.record(frame, t.track_id, dets[di].confidence));
            }
            tracks.push(t);
        }
        Ok(out)
    }
}

impl Tracker for PerClassTracker {
    fn name(&self) -> &'static str {
        "bt"
    }

    fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackRecord>> {
        check_single_frame(frame, detections)?;
        let classes: Vec<ComponentClass> = self.cfg.taxonomy.classes().collect();
        let mut out = Vec::new();
        for cls in classes {
            let dets: Vec<&Detection> = detections
                .iter()
                .filter(|d| d.cls == cls && d.is_present())
                .collect();
            out.extend(self.step_class(cls, frame, &dets)?);
        }
        Ok(out)
    }
}
