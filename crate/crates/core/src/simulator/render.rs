use serde::{Deserialize, Serialize};

use crate::eval::GtBox;
use crate::model::{BBox, ComponentClass, Detection};

use super::fish::SimFish;
use super::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Standard deviation of the Gaussian added to each box coordinate.
    pub jitter_std: f64,
    pub miss_base: f64,
    /// Added miss probability per unit of occluded area fraction.
    pub miss_slope: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig {
        jitter_std: 0.0,
        miss_base: 0.0,
        miss_slope: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub name: String,
    pub n_fish: usize,
    pub n_frames: u32,
    pub width: f64,
    pub height: f64,
    pub seed: u64,
    pub noise: NoiseConfig,
    /// A fish is out of view when less than this fraction of its box lies
    /// inside the image.
    pub min_visible_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameRender {
    pub gt: Vec<GtBox>,
    pub detections: Vec<Detection>,
}

/// Rounds to the 1e-3 grid used by the file formats.
pub fn quantize(v: f64) -> f64 {
    let q = (v * 1000.0).round() / 1000.0;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

fn quantize_box(b: &BBox) -> BBox {
    BBox::from_corners(quantize(b.x_min()), quantize(b.y_min()), quantize(b.x_max()), quantize(b.y_max()))
}

/// Exact area of `target` covered by the union of `occluders`, by
/// coordinate compression.
pub fn covered_area(target: &BBox, occluders: &[BBox]) -> f64 {
    let clipped: Vec<BBox> = occluders.iter().filter_map(|o| target.intersection(o)).collect();
    if clipped.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = clipped.iter().flat_map(|b| [b.x_min(), b.x_max()]).collect();
    let mut ys: Vec<f64> = clipped.iter().flat_map(|b| [b.y_min(), b.y_max()]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut area = 0.0;
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let (mx, my) = (0.5 * (xw[0] + xw[1]), 0.5 * (yw[0] + yw[1]));
            let hit = clipped
                .iter()
                .any(|b| b.x_min() <= mx && mx <= b.x_max() && b.y_min() <= my && my <= b.y_max());
            if hit {
                area += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    area
}

/// Fraction of `target` hidden behind `occluders`, in `[0, 1]`.
pub fn occlusion_fraction(target: &BBox, occluders: &[BBox]) -> f64 {
    let a = target.area();
    if a <= 0.0 {
        return 0.0;
    }
    (covered_area(target, occluders) / a).clamp(0.0, 1.0)
}

struct InView {
    idx: usize,
    salmon: BBox,
    parts: Vec<(ComponentClass, BBox)>,
}

/// Ground truth and detections for one frame. Each fish box is occluded
/// by the boxes of fish with smaller depth; detections are the truth plus
/// coordinate jitter, missed with probability `base + slope * occlusion`,
/// with confidence `1 - occlusion`. Parts are only reported with their
/// fish. The random stream depends on `(seed, frame)` alone, and every
/// fish draws 5 values for its box and 5 per part whether or not they are
/// used.
pub fn render_frame(scene: &SceneConfig, fish: &[SimFish], frame: u32) -> FrameRender {
    let (w, h) = (scene.width, scene.height);
    let mut visible = Vec::new();
    for (idx, f) in fish.iter().enumerate() {
        if frame as usize >= f.trajectory.len() || f.absent(frame) {
            continue;
        }
        let boxes = f.frame_boxes(frame);
        let Some(salmon) = boxes.salmon.clip(w, h) else { continue };
        if salmon.area() < scene.min_visible_fraction * boxes.salmon.area() {
            continue;
        }
        let parts = boxes
            .parts
            .iter()
            .filter_map(|(c, b)| b.clip(w, h).map(|b| (*c, quantize_box(&b))))
            .collect();
        visible.push(InView {
            idx,
            salmon: quantize_box(&salmon),
            parts,
        });
    }

    let mut out = FrameRender::default();
    let mut rng = SimRng::new(scene.seed, frame as u64);
    let noise = &scene.noise;
    for v in &visible {
        let me = &fish[v.idx];
        let id = me.id();
        let depth = me.params.depth;
        let occluders: Vec<BBox> = visible
            .iter()
            .filter(|o| {
                let d = fish[o.idx].params.depth;
                d < depth || (d == depth && fish[o.idx].id() < id)
            })
            .map(|o| o.salmon)
            .collect();

        out.gt.push(GtBox {
            frame,
            object_id: id,
            cls: ComponentClass::Salmon,
            bbox: v.salmon,
        });
        for (cls, b) in &v.parts {
            out.gt.push(GtBox {
                frame,
                object_id: id,
                cls: *cls,
                bbox: *b,
            });
        }

        let draw = |rng: &mut SimRng, b: &BBox, occ: f64| -> Option<(BBox, f64)> {
            let j: [f64; 4] = std::array::from_fn(|_| rng.normal() * noise.jitter_std);
            let miss = rng.coin(noise.miss_base + noise.miss_slope * occ);
            let conf = quantize((1.0 - occ).clamp(0.0, 1.0));
            if miss || conf <= 0.0 {
                return None;
            }
            let jittered = BBox::from_corners(
                b.x_min() + j[0],
                b.y_min() + j[1],
                b.x_max() + j[2],
                b.y_max() + j[3],
            )
            .clip(w, h)?;
            let q = quantize_box(&jittered);
            (q.area() > 0.0).then_some((q, conf))
        };

        let salmon_det = draw(&mut rng, &v.salmon, occlusion_fraction(&v.salmon, &occluders));
        let mut part_dets = Vec::new();
        for cls in ComponentClass::PARTS {
            let gt = v.parts.iter().find(|(c, _)| *c == cls).map(|(_, b)| *b);
            // keep the stream aligned for absent parts
            let probe = gt.unwrap_or(v.salmon);
            let d = draw(&mut rng, &probe, gt.map_or(0.0, |b| occlusion_fraction(&b, &occluders)));
            if let (Some(_), Some(d)) = (gt, d) {
                part_dets.push((cls, d));
            }
        }
        let Some((sb, sc)) = salmon_det else { continue };
        let gid = id as u32;
        out.detections.push(
            Detection::new(frame, ComponentClass::Salmon, sb, sc)
                .expect("confidence within [0, 1]")
                .with_group(gid),
        );
        for (cls, (b, c)) in part_dets {
            out.detections.push(Detection::new(frame, cls, b, c).expect("confidence within [0, 1]").with_group(gid));
        }
    }
    out
}
