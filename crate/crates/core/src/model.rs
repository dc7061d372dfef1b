//! Domain types shared by every stage: boxes, the component taxonomy,
//! detections and their per-fish grouping, and tracker configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::KalmanConfig;

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("box coordinates must be finite".into()));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::Domain(format!(
                "inverted box ({x_min}, {y_min}, {x_max}, {y_max})"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from two arbitrary corners, ordering the coordinates.
    pub fn from_corners(ax: f64, ay: f64, bx: f64, by: f64) -> Self {
        Self {
            x_min: ax.min(bx),
            y_min: ay.min(by),
            x_max: ax.max(bx),
            y_max: ay.max(by),
        }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        let (hw, hh) = (width.abs() / 2.0, height.abs() / 2.0);
        Self {
            x_min: cx - hw,
            y_min: cy - hh,
            x_max: cx + hw,
            y_max: cy + hh,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_min <= x_max && y_min <= y_max).then_some(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn union_hull(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    pub fn scale(&self, factor: f64) -> BBox {
        BBox::from_corners(
            self.x_min * factor,
            self.y_min * factor,
            self.x_max * factor,
            self.y_max * factor,
        )
    }

    /// Grows the box by `frac` of its width/height on every side.
    pub fn inflate(&self, frac: f64) -> BBox {
        let (dx, dy) = (self.width() * frac, self.height() * frac);
        BBox {
            x_min: self.x_min - dx,
            y_min: self.y_min - dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    /// Clips the box to `[0, width] x [0, height]`; `None` when nothing remains.
    pub fn clip(&self, width: f64, height: f64) -> Option<BBox> {
        self.intersection(&BBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: width,
            y_max: height,
        })
        .filter(|b| b.area() > 0.0)
    }
}

/// Component taxonomy: the whole fish plus its body parts.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ComponentClass {
    Salmon,
    Head,
    Body,
    DorsalFin,
    AdiposeFin,
    TailFin,
    AnalFin,
    PelvicFin,
    PectoralFin,
}

impl ComponentClass {
    pub const ALL: [ComponentClass; 9] = [
        ComponentClass::Salmon,
        ComponentClass::Head,
        ComponentClass::Body,
        ComponentClass::DorsalFin,
        ComponentClass::AdiposeFin,
        ComponentClass::TailFin,
        ComponentClass::AnalFin,
        ComponentClass::PelvicFin,
        ComponentClass::PectoralFin,
    ];

    pub const PARTS: [ComponentClass; 8] = [
        ComponentClass::Head,
        ComponentClass::Body,
        ComponentClass::DorsalFin,
        ComponentClass::AdiposeFin,
        ComponentClass::TailFin,
        ComponentClass::AnalFin,
        ComponentClass::PelvicFin,
        ComponentClass::PectoralFin,
    ];

    pub fn is_salmon(self) -> bool {
        self == ComponentClass::Salmon
    }

    /// The head and all fins.
    pub fn is_small(self) -> bool {
        !matches!(self, ComponentClass::Salmon | ComponentClass::Body)
    }

    pub fn tag(self) -> &'static str {
        match self {
            ComponentClass::Salmon => "SALMON",
            ComponentClass::Head => "HEAD",
            ComponentClass::Body => "BODY",
            ComponentClass::DorsalFin => "DORSAL_FIN",
            ComponentClass::AdiposeFin => "ADIPOSE_FIN",
            ComponentClass::TailFin => "TAIL_FIN",
            ComponentClass::AnalFin => "ANAL_FIN",
            ComponentClass::PelvicFin => "PELVIC_FIN",
            ComponentClass::PectoralFin => "PECTORAL_FIN",
        }
    }
}

impl fmt::Display for ComponentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ComponentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ComponentClass::ALL
            .into_iter()
            .find(|c| c.tag() == s)
            .ok_or_else(|| Error::Domain(format!("unknown class tag '{s}'")))
    }
}

/// The set of body-part classes tracked under each fish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    parts: Vec<ComponentClass>,
}

impl Taxonomy {
    pub fn new(parts: Vec<ComponentClass>) -> Result<Self> {
        if parts.iter().any(|c| c.is_salmon()) {
            return Err(Error::Config("taxonomy parts must not contain SALMON".into()));
        }
        let mut sorted = parts;
        sorted.sort();
        sorted.dedup();
        Ok(Self { parts: sorted })
    }

    pub fn parts(&self) -> &[ComponentClass] {
        &self.parts
    }

    /// SALMON followed by the part classes; one subtracker per entry.
    pub fn classes(&self) -> impl Iterator<Item = ComponentClass> + '_ {
        std::iter::once(ComponentClass::Salmon).chain(self.parts.iter().copied())
    }

    pub fn contains(&self, class: ComponentClass) -> bool {
        class.is_salmon() || self.parts.contains(&class)
    }
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self {
            parts: ComponentClass::PARTS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub cls: ComponentClass,
    pub bbox: BBox,
    pub confidence: f64,
    /// Links body parts to their parent fish within one frame.
    pub group_id: Option<u32>,
}

impl Detection {
    pub fn new(frame: u32, cls: ComponentClass, bbox: BBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Domain(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            frame,
            cls,
            bbox,
            confidence,
            group_id: None,
        })
    }

    pub fn with_group(mut self, group_id: u32) -> Self {
        self.group_id = Some(group_id);
        self
    }

    /// Zero-confidence detections are treated as absent downstream.
    pub fn is_present(&self) -> bool {
        self.confidence > 0.0
    }
}

/// One fish box plus the part boxes linked to it in a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDetection {
    pub salmon: Detection,
    pub parts: BTreeMap<ComponentClass, Detection>,
}

impl GroupedDetection {
    pub fn new(salmon: Detection) -> Self {
        Self {
            salmon,
            parts: BTreeMap::new(),
        }
    }

    /// A part with confidence zero counts as absent.
    pub fn part(&self, cls: ComponentClass) -> Option<&Detection> {
        self.parts.get(&cls).filter(|d| d.is_present())
    }

    pub fn visible_part_count(&self) -> usize {
        self.parts.values().filter(|d| d.is_present()).count()
    }

    pub fn frame(&self) -> u32 {
        self.salmon.frame
    }
}

/// Result of [`group_detections`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grouping {
    pub groups: Vec<GroupedDetection>,
    /// Body parts without a parent fish, plus duplicated part classes.
    pub dropped_parts: usize,
}

/// Fused confidence of a body-part keybox: mean of its two corner
/// confidences scaled by the parent fish confidence.
pub fn keybox_confidence(corner_conf_a: f64, corner_conf_b: f64, salmon_conf: f64) -> Result<f64> {
    for (name, v) in [
        ("corner_conf_a", corner_conf_a),
        ("corner_conf_b", corner_conf_b),
        ("salmon_conf", salmon_conf),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} = {v} outside [0, 1]")));
        }
    }
    Ok((corner_conf_a + corner_conf_b) / 2.0 * salmon_conf)
}

/// Rebuilds per-fish groups from a flat list of one frame's detections.
///
/// Groups come out in the order their SALMON detection appears. A SALMON
/// detection without a group id forms a group of its own. Parts whose
/// group has no SALMON member, parts without a group id and repeated part
/// classes within one group are dropped and counted.
pub fn group_detections(flat: &[Detection], frame: u32) -> Result<Grouping> {
    if let Some(d) = flat.iter().find(|d| d.frame != frame) {
        return Err(Error::Usage(format!(
            "detection from frame {} passed while grouping frame {frame}",
            d.frame
        )));
    }

    let mut groups: Vec<GroupedDetection> = Vec::new();
    let mut by_id: BTreeMap<u32, usize> = BTreeMap::new();
    for det in flat.iter().filter(|d| d.cls.is_salmon()) {
        match det.group_id {
            Some(gid) => {
                if by_id.insert(gid, groups.len()).is_some() {
                    return Err(Error::format(
                        0,
                        format!("frame {frame}: two SALMON detections share group_id {gid}"),
                    ));
                }
                groups.push(GroupedDetection::new(det.clone()));
            }
            None => groups.push(GroupedDetection::new(det.clone())),
        }
    }

    let mut dropped = 0;
    for det in flat.iter().filter(|d| !d.cls.is_salmon()) {
        let slot = det.group_id.and_then(|gid| by_id.get(&gid)).copied();
        match slot {
            Some(idx) if !groups[idx].parts.contains_key(&det.cls) => {
                groups[idx].parts.insert(det.cls, det.clone());
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("frame {frame}: dropped {dropped} ungrouped body-part detections");
    }
    Ok(Grouping {
        groups,
        dropped_parts: dropped,
    })
}

/// Which correction modules of the fused tracker are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModuleSet {
    pub turn: bool,
    pub bpdis: bool,
    pub nobp: bool,
    pub bpiou: bool,
}

impl ModuleSet {
    pub const NONE: ModuleSet = ModuleSet {
        turn: false,
        bpdis: false,
        nobp: false,
        bpiou: false,
    };
    pub const ALL: ModuleSet = ModuleSet {
        turn: true,
        bpdis: true,
        nobp: true,
        bpiou: true,
    };

    /// Parses a comma list such as `turn,bpdis`; `all` and `none` are accepted.
    pub fn parse(list: &str) -> Result<Self> {
        let mut set = ModuleSet::NONE;
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "turn" => set.turn = true,
                "bpdis" => set.bpdis = true,
                "nobp" => set.nobp = true,
                "bpiou" => set.bpiou = true,
                "all" => set = ModuleSet::ALL,
                "none" => {}
                other => return Err(Error::Config(format!("unknown module '{other}'"))),
            }
        }
        Ok(set)
    }

    /// Short label used in tables: `all`, `none`, or the enabled names.
    pub fn label(&self) -> String {
        if *self == ModuleSet::ALL {
            return "all".into();
        }
        let names: Vec<&str> = [
            (self.turn, "turn"),
            (self.bpdis, "bpdis"),
            (self.nobp, "nobp"),
            (self.bpiou, "bpiou"),
        ]
        .into_iter()
        .filter_map(|(on, n)| on.then_some(n))
        .collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub iou_threshold: f64,
    /// Frames a tracker may stay unmatched before deletion.
    pub hidden_length: u32,
    pub min_hits: u32,
    pub modules: ModuleSet,
    pub turn_iou_floor: f64,
    pub turn_counter_max: u32,
    /// Visible body parts needed to decrement the turning counter.
    pub turn_visibility_count: usize,
    /// Fraction of the image size that counts as touching the border.
    pub boundary_margin: f64,
    /// Image width and height; without it no box is treated as touching the border.
    pub image_size: Option<(f64, f64)>,
    /// Multiplicative confidence boost on the IoU similarity; 0 gives plain IoU.
    pub boost_weight: f64,
    pub kalman: KalmanConfig,
    pub taxonomy: Taxonomy,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.35,
            hidden_length: 30,
            min_hits: 0,
            modules: ModuleSet::NONE,
            turn_iou_floor: 0.05,
            turn_counter_max: 10,
            turn_visibility_count: 7,
            boundary_margin: 0.02,
            image_size: None,
            boost_weight: 0.0,
            kalman: KalmanConfig::default(),
            taxonomy: Taxonomy::default(),
        }
    }
}

impl TrackerConfig {
    /// IoU thresholds of the evaluation grid.
    pub const IOU_GRID: [f64; 5] = [0.05, 0.2, 0.35, 0.5, 0.65];
    pub const HIDDEN_LENGTH_GRID: [u32; 2] = [3, 30];

    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "iou_threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        if self.hidden_length == 0 {
            return Err(Error::Config("hidden_length must be positive".into()));
        }
        if self.boost_weight < 0.0 {
            return Err(Error::Config("boost_weight must be non-negative".into()));
        }
        self.kalman.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(cls: ComponentClass, group: Option<u32>) -> Detection {
        let mut d = Detection::new(4, cls, BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), 0.9).unwrap();
        d.group_id = group;
        d
    }

    #[test]
    fn keybox_confidence_examples() {
        assert_eq!(keybox_confidence(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(keybox_confidence(0.0, 0.0, 0.9).unwrap(), 0.0);
        assert!((keybox_confidence(0.6, 0.8, 0.5).unwrap() - 0.35).abs() < 1e-12);
        assert!(matches!(keybox_confidence(1.2, 0.5, 0.5), Err(Error::Domain(_))));
        assert!(matches!(keybox_confidence(0.5, 0.5, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn keybox_confidence_is_monotone() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        for &a in &grid {
            for &b in &grid {
                for w in grid.windows(2) {
                    let lo = keybox_confidence(a, b, w[0]).unwrap();
                    let hi = keybox_confidence(a, b, w[1]).unwrap();
                    assert!(hi >= lo);
                    assert!(keybox_confidence(w[1], b, a).unwrap() >= keybox_confidence(w[0], b, a).unwrap());
                }
            }
        }
    }

    #[test]
    fn taxonomy_defaults() {
        let t = Taxonomy::default();
        assert_eq!(t.classes().count(), 9);
        let small: Vec<_> = ComponentClass::ALL.iter().filter(|c| c.is_small()).collect();
        assert_eq!(small.len(), 7);
        assert!(!ComponentClass::Body.is_small());
        assert!(!ComponentClass::Salmon.is_small());
        assert!(Taxonomy::new(vec![ComponentClass::Salmon]).is_err());
    }

    #[test]
    fn class_tags_round_trip() {
        for c in ComponentClass::ALL {
            assert_eq!(c.tag().parse::<ComponentClass>().unwrap(), c);
        }
        assert!("FIN".parse::<ComponentClass>().is_err());
    }

    #[test]
    fn bbox_invariants() {
        assert!(BBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        let b = BBox::new(0.0, 0.0, 3.0, 4.0).unwrap();
        assert_eq!(b.diagonal(), 5.0);
        assert_eq!(BBox::from_corners(3.0, 4.0, 0.0, 0.0), b);
    }

    #[test]
    fn grouping_single_fish() {
        let flat = vec![
            det(ComponentClass::Salmon, Some(1)),
            det(ComponentClass::Head, Some(1)),
            det(ComponentClass::TailFin, Some(1)),
            det(ComponentClass::DorsalFin, Some(1)),
        ];
        let g = group_detections(&flat, 4).unwrap();
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].visible_part_count(), 3);
        assert_eq!(g.dropped_parts, 0);
        assert!(group_detections(&[], 4).unwrap().groups.is_empty());
    }

    #[test]
    fn grouping_two_fish_fixture() {
        // Hand enumeration: group 7 = {salmon, head, tail}, group 3 = {salmon}
        // plus one orphan part pointing at missing group 9.
        let flat = vec![
            det(ComponentClass::Head, Some(7)),
            det(ComponentClass::Salmon, Some(7)),
            det(ComponentClass::Salmon, Some(3)),
            det(ComponentClass::TailFin, Some(7)),
            det(ComponentClass::AnalFin, Some(9)),
        ];
        let g = group_detections(&flat, 4).unwrap();
        assert_eq!(g.groups.len(), 2);
        assert_eq!(g.groups[0].salmon.group_id, Some(7));
        assert_eq!(
            g.groups[0].parts.keys().copied().collect::<Vec<_>>(),
            vec![ComponentClass::Head, ComponentClass::TailFin]
        );
        assert!(g.groups[1].parts.is_empty());
        assert_eq!(g.dropped_parts, 1);
    }

    #[test]
    fn grouping_rejects_duplicate_salmon() {
        let flat = vec![det(ComponentClass::Salmon, Some(1)), det(ComponentClass::Salmon, Some(1))];
        assert!(matches!(group_detections(&flat, 4), Err(Error::Format { .. })));
        let mut other = det(ComponentClass::Head, Some(1));
        other.frame = 5;
        assert!(matches!(group_detections(&[other], 4), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_confidence_part_is_absent() {
        let mut g = GroupedDetection::new(det(ComponentClass::Salmon, Some(1)));
        let mut p = det(ComponentClass::Head, Some(1));
        p.confidence = 0.0;
        g.parts.insert(ComponentClass::Head, p);
        assert_eq!(g.visible_part_count(), 0);
        assert!(g.part(ComponentClass::Head).is_none());
    }

    #[test]
    fn module_set_parsing() {
        let m = ModuleSet::parse("turn,bpiou").unwrap();
        assert!(m.turn && m.bpiou && !m.bpdis && !m.nobp);
        assert_eq!(m.label(), "turn+bpiou");
        assert_eq!(ModuleSet::parse("all").unwrap(), ModuleSet::ALL);
        assert!(ModuleSet::parse("warp").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn grouping_is_a_partition(assign in proptest::collection::vec((0usize..9, proptest::option::of(0u32..4)), 0..30)) {
                let flat: Vec<Detection> = assign
                    .iter()
                    .map(|&(c, g)| det(ComponentClass::ALL[c], g))
                    .collect();
                if let Ok(g) = group_detections(&flat, 4) {
                    let parts_in = flat.iter().filter(|d| !d.cls.is_salmon()).count();
                    let parts_out: usize = g.groups.iter().map(|x| x.parts.len()).sum();
                    prop_assert_eq!(parts_out + g.dropped_parts, parts_in);
                    for grp in &g.groups {
                        prop_assert!(!grp.parts.contains_key(&ComponentClass::Salmon));
                        for p in grp.parts.values() {
                            prop_assert_eq!(p.group_id, grp.salmon.group_id);
                        }
                    }
                }
            }
        }
    }
}
