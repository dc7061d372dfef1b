use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{tip_ratio, Point2};
use crate::model::{BBox, ComponentClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Tip,
    TailfinWidth,
    SalmonWidth,
}

impl Representation {
    pub const ALL: [Representation; 3] = [
        Representation::Tip,
        Representation::TailfinWidth,
        Representation::SalmonWidth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Representation::Tip => "tip",
            Representation::TailfinWidth => "tailfin",
            Representation::SalmonWidth => "salmon",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Representation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown representation '{s}'")))
    }
}

/// Maps one frame's component boxes to a scalar tail state.
pub trait TailStateExtractor: Send + Sync {
    fn representation(&self) -> Representation;

    /// Components that must be present for [`value`](Self::value) to succeed.
    fn required(&self) -> &'static [ComponentClass];

    fn value(&self, boxes: &BTreeMap<ComponentClass, BBox>) -> Option<f64>;
}

/// Where the tail-fin-to-body line crosses the anal-to-adipose-fin line.
pub struct TipExtractor;

impl TailStateExtractor for TipExtractor {
    fn representation(&self) -> Representation {
        Representation::Tip
    }

    fn required(&self) -> &'static [ComponentClass] {
        &[
            ComponentClass::AnalFin,
            ComponentClass::AdiposeFin,
            ComponentClass::TailFin,
            ComponentClass::Body,
        ]
    }

    fn value(&self, boxes: &BTreeMap<ComponentClass, BBox>) -> Option<f64> {
        let c = |cls| boxes.get(&cls).map(Point2::center_of);
        let (anf, apf, tf, body) = (
            c(ComponentClass::AnalFin)?,
            c(ComponentClass::AdiposeFin)?,
            c(ComponentClass::TailFin)?,
            c(ComponentClass::Body)?,
        );
        tip_ratio(anf, apf, tf, body).ok().flatten()
    }
}

/// Width of a single component's box.
pub struct WidthExtractor {
    rep: Representation,
    cls: &'static [ComponentClass],
}

impl WidthExtractor {
    pub fn tail_fin() -> Self {
        Self {
            rep: Representation::TailfinWidth,
            cls: &[ComponentClass::TailFin],
        }
    }

    pub fn salmon() -> Self {
        Self {
            rep: Representation::SalmonWidth,
            cls: &[ComponentClass::Salmon],
        }
    }
}

impl TailStateExtractor for WidthExtractor {
    fn representation(&self) -> Representation {
        self.rep
    }

    fn required(&self) -> &'static [ComponentClass] {
        self.cls
    }

    fn value(&self, boxes: &BTreeMap<ComponentClass, BBox>) -> Option<f64> {
        boxes.get(&self.cls[0]).map(BBox::width)
    }
}

pub type ExtractorFactory = fn() -> Box<dyn TailStateExtractor>;

/// Representations selectable by name (`tip`, `tailfin`, `salmon`).
#[derive(Clone)]
pub struct RepresentationRegistry {
    factories: BTreeMap<&'static str, ExtractorFactory>,
}

impl RepresentationRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: ExtractorFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn TailStateExtractor>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::Config(format!("unknown representation '{name}'")))
    }

    pub fn get(&self, rep: Representation) -> Result<Box<dyn TailStateExtractor>> {
        self.create(rep.name())
    }
}

impl Default for RepresentationRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("tip", || Box::new(TipExtractor));
        r.register("tailfin", || Box::new(WidthExtractor::tail_fin()));
        r.register("salmon", || Box::new(WidthExtractor::salmon()));
        r
    }
}
