//! Turning and crowding rules applied on top of the fish-box association.

use crate::geometry::{iou, Point2};
use crate::model::{BBox, ComponentClass, GroupedDetection, TrackerConfig};

use super::component::{FrameAssociation, TrackUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrowdedDecision {
    Keep,
    TerminateAndDiscard,
}

/// True when the box lies within `cfg.boundary_margin` of any image border.
pub fn at_image_boundary(b: &BBox, cfg: &TrackerConfig) -> bool {
    let Some((w, h)) = cfg.image_size else {
        return false;
    };
    let (mx, my) = (cfg.boundary_margin * w, cfg.boundary_margin * h);
    b.x_min() <= mx || b.y_min() <= my || b.x_max() >= w - mx || b.y_max() >= h - my
}

/// Frontal or posterior view: a tall fish box, or a head-to-tail distance
/// under twice the dorsal-to-pelvic distance. The second test needs all
/// four parts.
pub fn turn_increment_condition(det: &GroupedDetection) -> bool {
    let b = det.salmon.bbox;
    if b.height() > b.width() {
        return true;
    }
    let center = |c| det.part(c).map(|d| Point2::center_of(&d.bbox));
    match (
        center(ComponentClass::Head),
        center(ComponentClass::TailFin),
        center(ComponentClass::DorsalFin),
        center(ComponentClass::PelvicFin),
    ) {
        (Some(head), Some(tail), Some(dorsal), Some(pelvic)) => {
            head.distance(&tail) < 2.0 * dorsal.distance(&pelvic)
        }
        _ => false,
    }
}

/// Next value of the unit's turning counter given this frame's detection.
pub fn turn_counter_update(
    unit: &TrackUnit,
    det: Option<&GroupedDetection>,
    at_boundary: bool,
    cfg: &TrackerConfig,
) -> u32 {
    let c = unit.turn_counter;
    let Some(det) = det else {
        return c.min(cfg.turn_counter_max);
    };
    let next = if !at_boundary && turn_increment_condition(det) {
        c + 1
    } else if det.visible_part_count() >= cfg.turn_visibility_count {
        c.saturating_sub(1)
    } else {
        c
    };
    next.min(cfg.turn_counter_max)
}

/// Relaxed match for a turning unit without a fish match: its best
/// overlapping fish detection is taken if no other unit holds it and the
/// overlap exceeds `cfg.turn_iou_floor`.
pub fn turn_accept(
    unit: &TrackUnit,
    groups: &[GroupedDetection],
    claimed: &[bool],
    cfg: &TrackerConfig,
) -> Option<usize> {
    let pred = unit.predicted_salmon();
    let mut best: Option<(usize, f64)> = None;
    for (gi, g) in groups.iter().enumerate() {
        let v = iou(&pred, &g.salmon.bbox);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((gi, v));
        }
    }
    let (gi, v) = best?;
    (!claimed[gi] && v > cfg.turn_iou_floor).then_some(gi)
}

/// Body-part disagreement: terminate when more small parts were suggested
/// to a different fish than to the matched one, and at least two disagree.
pub fn crowded_bpdis(
    unit: &TrackUnit,
    suggested: &FrameAssociation,
    matched_group: usize,
) -> CrowdedDecision {
    let (mut agree, mut disagree) = (0usize, 0usize);
    for cls in unit.subtracks.keys().filter(|c| c.is_small()) {
        match suggested.group_for(*cls, unit.unit_id) {
            Some(g) if g == matched_group => agree += 1,
            Some(_) => disagree += 1,
            None => {}
        }
    }
    if disagree > agree && disagree >= 2 {
        CrowdedDecision::TerminateAndDiscard
    } else {
        CrowdedDecision::Keep
    }
}

/// No body parts: terminate when none of the unit's small-part predictions
/// overlaps the corresponding part of the matched detection. Units without
/// any small-part subtracker are kept.
pub fn crowded_nobp(unit: &TrackUnit, matched: &GroupedDetection) -> CrowdedDecision {
    let mut live = 0;
    let mut overlapping = 0;
    for (cls, st) in unit.subtracks.iter().filter(|(c, _)| c.is_small()) {
        live += 1;
        if let Some(part) = matched.part(*cls) {
            if iou(&st.predicted(), &part.bbox) > 0.0 {
                overlapping += 1;
            }
        }
    }
    if live > 0 && overlapping == 0 {
        CrowdedDecision::TerminateAndDiscard
    } else {
        CrowdedDecision::Keep
    }
}

/// Low body-part IoU: the matched detection's small parts that overlap
/// another detection's same-class part more than this unit's prediction.
/// Parts without a subtracker in the unit are never suppressed.
pub fn crowded_bpiou(
    unit: &TrackUnit,
    matched_group: usize,
    groups: &[GroupedDetection],
) -> Vec<ComponentClass> {
    let mine = &groups[matched_group];
    let mut suppressed = Vec::new();
    for (cls, part) in mine.parts.iter().filter(|(c, d)| c.is_small() && d.is_present()) {
        let Some(st) = unit.subtracks.get(cls) else {
            continue;
        };
        let own = iou(&st.predicted(), &part.bbox);
        let other = groups
            .iter()
            .enumerate()
            .filter(|(gi, _)| *gi != matched_group)
            .filter_map(|(_, g)| g.part(*cls))
            .map(|d| iou(&part.bbox, &d.bbox))
            .fold(0.0, f64::max);
        if other > own {
            suppressed.push(*cls);
        }
    }
    suppressed
}
