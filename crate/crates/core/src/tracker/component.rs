use std::collections::BTreeMap;

use crate::association::{similarity_matrix, solve_assignment, AssignmentResult};
use crate::error::Result;
use crate::model::{group_detections, BBox, ComponentClass, Detection, GroupedDetection, TrackerConfig};

use super::modules::{
    at_image_boundary, crowded_bpdis, crowded_bpiou, crowded_nobp, turn_accept,
    turn_counter_update, CrowdedDecision,
};
use super::{check_single_frame, ModuleEvent, ModuleEventKind, SubTrack, TrackRecord, Tracker};

/// One tracked fish: a subtracker per component class.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackUnit {
    pub unit_id: u64,
    /// Always holds a SALMON entry while the unit is alive.
    pub subtracks: BTreeMap<ComponentClass, SubTrack>,
    pub turn_counter: u32,
    pub frames_since_salmon_match: u32,
    pub hit_count: u32,
}

impl TrackUnit {
    pub fn salmon(&self) -> &SubTrack {
        &self.subtracks[&ComponentClass::Salmon]
    }

    pub fn predicted_salmon(&self) -> BBox {
        self.salmon().predicted()
    }

    pub fn is_turning(&self) -> bool {
        self.turn_counter > 0
    }
}

/// Per-class assignment of subtrackers to the grouped detections' boxes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassSuggestion {
    pub result: AssignmentResult,
    /// Unit id owning each tracker row.
    pub trackers: Vec<u64>,
    /// Group index owning each detection column.
    pub detections: Vec<usize>,
}

impl ClassSuggestion {
    pub fn group_for(&self, unit_id: u64) -> Option<usize> {
        let row = self.trackers.iter().position(|&u| u == unit_id)?;
        self.result.detection_for(row).map(|col| self.detections[col])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameAssociation {
    pub suggested: BTreeMap<ComponentClass, ClassSuggestion>,
    /// Fish-box association of each unit, before any correction.
    pub salmon_primary: BTreeMap<u64, Option<usize>>,
}

impl FrameAssociation {
    pub fn group_for(&self, cls: ComponentClass, unit_id: u64) -> Option<usize> {
        self.suggested.get(&cls).and_then(|s| s.group_for(unit_id))
    }
}

/// The fused tracker: association is decided on the fish box and corrected
/// by the enabled modules; body parts inherit the fish's match.
#[derive(Debug, Clone)]
pub struct ComponentTracker {
    cfg: TrackerConfig,
    units: Vec<TrackUnit>,
    next_unit_id: u64,
    next_subtrack_id: u64,
    events: Vec<ModuleEvent>,
}

impl ComponentTracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            units: Vec::new(),
            next_unit_id: 1,
            next_subtrack_id: 1,
            events: Vec::new(),
        })
    }

    pub fn units(&self) -> &[TrackUnit] {
        &self.units
    }

    fn suggest(&self, groups: &[GroupedDetection]) -> FrameAssociation {
        let mut assoc = FrameAssociation::default();
        for cls in self.cfg.taxonomy.classes() {
            let mut trackers = Vec::new();
            let mut predicted = Vec::new();
            for u in &self.units {
                if let Some(st) = u.subtracks.get(&cls) {
                    trackers.push(u.unit_id);
                    predicted.push(st.predicted());
                }
            }
            let mut detections = Vec::new();
            let mut dets = Vec::new();
            for (gi, g) in groups.iter().enumerate() {
                let d = if cls.is_salmon() { Some(&g.salmon) } else { g.part(cls) };
                if let Some(d) = d {
                    detections.push(gi);
                    dets.push(d);
                }
            }
            let sim = similarity_matrix(&predicted, dets.iter().copied(), self.cfg.boost_weight);
            let result = solve_assignment(&sim, self.cfg.iou_threshold);
            assoc.suggested.insert(
                cls,
                ClassSuggestion {
                    result,
                    trackers,
                    detections,
                },
            );
        }
        for u in &self.units {
            let g = assoc.group_for(ComponentClass::Salmon, u.unit_id);
            assoc.salmon_primary.insert(u.unit_id, g);
        }
        assoc
    }

    fn event(&mut self, frame: u32, unit_id: u64, kind: ModuleEventKind, cls: Option<ComponentClass>) {
        self.events.push(ModuleEvent {
            frame,
            unit_id,
            kind,
            cls,
        });
    }

    fn new_subtrack(&mut self, det: &Detection) -> Result<SubTrack> {
        let st = SubTrack::spawn(self.next_subtrack_id, det, &self.cfg)?;
        self.next_subtrack_id += 1;
        Ok(st)
    }

    fn spawn_unit(&mut self, group: &GroupedDetection) -> Result<TrackUnit> {
        let mut subtracks = BTreeMap::new();
        subtracks.insert(ComponentClass::Salmon, self.new_subtrack(&group.salmon)?);
        for cls in self.cfg.taxonomy.parts().to_vec() {
            if let Some(d) = group.part(cls) {
                let st = self.new_subtrack(d)?;
                subtracks.insert(cls, st);
            }
        }
        let unit = TrackUnit {
            unit_id: self.next_unit_id,
            subtracks,
            turn_counter: 0,
            frames_since_salmon_match: 0,
            hit_count: 1,
        };
        self.next_unit_id += 1;
        Ok(unit)
    }

    fn emit(&self, unit: &TrackUnit, group: &GroupedDetection, frame: u32, out: &mut Vec<TrackRecord>) {
        if unit.hit_count < self.cfg.min_hits {
            return;
        }
        for (cls, st) in &unit.subtracks {
            let conf = if cls.is_salmon() {
                Some(group.salmon.confidence)
            } else {
                group.part(*cls).map(|d| d.confidence)
            };
            if let Some(conf) = conf.filter(|_| st.frames_since_match == 0) {
                out.push(st.record(frame, unit.unit_id, conf));
            }
        }
    }

    /// Folds a matched detection into the unit: every present part updates
    /// (or creates) its subtracker, absent parts age without deletion.
    fn absorb(&mut self, ui: usize, group: &GroupedDetection) -> Result<()> {
        let parts = self.cfg.taxonomy.parts().to_vec();
        let mut fresh = Vec::new();
        for cls in parts {
            if let Some(d) = group.part(cls) {
                if !self.units[ui].subtracks.contains_key(&cls) {
                    fresh.push(self.new_subtrack(d)?);
                }
            }
        }
        let cfg = &self.cfg;
        let unit = &mut self.units[ui];
        for (cls, st) in unit.subtracks.iter_mut() {
            let det = if cls.is_salmon() { Some(&group.salmon) } else { group.part(*cls) };
            match det {
                Some(d) => st.update(d, st.last_similarity, cfg)?,
                None => st.mark_missed(),
            }
        }
        for st in fresh {
            unit.subtracks.insert(st.cls, st);
        }
        unit.frames_since_salmon_match = 0;
        unit.hit_count += 1;
        Ok(())
    }
}

impl Tracker for ComponentTracker {
    fn name(&self) -> &'static str {
        "bct"
    }

    fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<TrackRecord>> {
        check_single_frame(frame, detections)?;
        let mut groups: Vec<GroupedDetection> = group_detections(detections, frame)?
            .groups
            .into_iter()
            .filter(|g| g.salmon.is_present())
            .collect();
        let modules = self.cfg.modules;

        for u in self.units.iter_mut() {
            for st in u.subtracks.values_mut() {
                st.predict(&self.cfg);
            }
        }
        let assoc = self.suggest(&groups);

        let n_units = self.units.len();
        let mut matched: Vec<Option<usize>> = self
            .units
            .iter()
            .map(|u| assoc.salmon_primary[&u.unit_id])
            .collect();
        let mut terminated = vec![false; n_units];
        let mut discarded = vec![false; groups.len()];

        // Crowding checks for non-turning units, evaluated against the
        // detections as they arrived.
        let snapshot = groups.clone();
        for ui in 0..n_units {
            let Some(gi) = matched[ui] else { continue };
            let unit = &self.units[ui];
            if modules.turn && unit.is_turning() {
                continue;
            }
            let uid = unit.unit_id;
            let verdict = if modules.bpdis
                && crowded_bpdis(unit, &assoc, gi) == CrowdedDecision::TerminateAndDiscard
            {
                Some(ModuleEventKind::Bpdis)
            } else if modules.nobp
                && crowded_nobp(unit, &snapshot[gi]) == CrowdedDecision::TerminateAndDiscard
            {
                Some(ModuleEventKind::Nobp)
            } else {
                None
            };
            if let Some(kind) = verdict {
                terminated[ui] = true;
                discarded[gi] = true;
                matched[ui] = None;
                self.event(frame, uid, kind, None);
                continue;
            }
            if modules.bpiou {
                for cls in crowded_bpiou(&self.units[ui], gi, &snapshot) {
                    if let Some(p) = groups[gi].parts.get_mut(&cls) {
                        p.confidence = 0.0;
                    }
                    self.event(frame, uid, ModuleEventKind::Bpiou, Some(cls));
                }
            }
        }

        // Relaxed matching for turning units left without a fish match.
        let mut claimed = vec![false; groups.len()];
        for gi in matched.iter().flatten() {
            claimed[*gi] = true;
        }
        if modules.turn {
            for ui in 0..n_units {
                if terminated[ui] || matched[ui].is_some() || !self.units[ui].is_turning() {
                    continue;
                }
                if let Some(gi) = turn_accept(&self.units[ui], &groups, &claimed, &self.cfg) {
                    claimed[gi] = true;
                    matched[ui] = Some(gi);
                    let uid = self.units[ui].unit_id;
                    self.event(frame, uid, ModuleEventKind::TurnAccept, None);
                }
            }
            for ui in 0..n_units {
                if terminated[ui] {
                    continue;
                }
                let det = matched[ui].map(|gi| &groups[gi]);
                let boundary = det.is_some_and(|g| at_image_boundary(&g.salmon.bbox, &self.cfg));
                let next = turn_counter_update(&self.units[ui], det, boundary, &self.cfg);
                self.units[ui].turn_counter = next;
            }
        }

        let mut out = Vec::new();
        for ui in 0..n_units {
            if terminated[ui] {
                continue;
            }
            match matched[ui] {
                Some(gi) => {
                    self.absorb(ui, &groups[gi])?;
                    self.emit(&self.units[ui], &groups[gi], frame, &mut out);
                }
                None => {
                    let u = &mut self.units[ui];
                    for st in u.subtracks.values_mut() {
                        st.mark_missed();
                    }
                    u.frames_since_salmon_match += 1;
                }
            }
        }

        let hidden = self.cfg.hidden_length;
        let mut idx = 0;
        self.units.retain(|u| {
            let keep = !terminated[idx] && u.frames_since_salmon_match <= hidden;
            idx += 1;
            keep
        });

        for gi in 0..groups.len() {
            if claimed[gi] || discarded[gi] {
                continue;
            }
            let unit = self.spawn_unit(&groups[gi])?;
            self.emit(&unit, &groups[gi], frame, &mut out);
            self.units.push(unit);
        }
        Ok(out)
    }

    fn drain_events(&mut self) -> Vec<ModuleEvent> {
        std::mem::take(&mut self.events)
    }
}
