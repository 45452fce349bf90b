//! Axis-aligned image-plane boxes, IoU and greedy non-maximum suppression.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::Detection;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box extent must be positive and finite (w = {w}, h = {h})")]
    NonPositiveExtent { w: f64, h: f64 },
    #[error("box origin must be finite (x = {x}, y = {y})")]
    NonFiniteOrigin { x: f64, y: f64 },
}

/// A box in MOT convention: left edge, top edge, width, height (pixels).
///
/// Width and height are strictly positive for every constructed value, so
/// `area()` is never zero and IoU is always well defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(GeometryError::NonFiniteOrigin { x, y });
        }
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(GeometryError::NonPositiveExtent { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box from its center and extent.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn height(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.as_array()
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy NMS returning the indices of kept detections, in descending
/// confidence order. Equal confidences keep input order.
pub fn nms_indices(detections: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .partial_cmp(&detections[a].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut kept: Vec<usize> = Vec::with_capacity(order.len());
    for idx in order {
        let candidate = &detections[idx].bbox;
        if kept
            .iter()
            .all(|&k| iou(&detections[k].bbox, candidate) <= iou_threshold)
        {
            kept.push(idx);
        }
    }
    kept
}

/// Greedy NMS: keeps a detection iff its IoU with every higher-ranked kept
/// detection is at most `iou_threshold`. Output is in descending confidence.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    nms_indices(detections, iou_threshold)
        .into_iter()
        .map(|i| detections[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    fn det(b: BoundingBox, conf: f64) -> Detection {
        Detection::new(1, b, conf)
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 1.0, -2.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn iou_identity_disjoint_and_partial() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(10.0, 10.0, 2.0, 2.0)), 0.0);
        // intersection 2, union 6
        let v = iou(&a, &bb(1.0, 0.0, 2.0, 2.0));
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        assert_eq!(iou(&bb(0.0, 0.0, 2.0, 2.0), &bb(2.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn nms_examples() {
        assert!(nms(&[], 0.5).is_empty());

        let single = vec![det(bb(0.0, 0.0, 5.0, 5.0), 0.3)];
        assert_eq!(nms(&single, 0.5), single);

        let same = bb(0.0, 0.0, 10.0, 10.0);
        let out = nms(&[det(same, 0.4), det(same, 0.9)], 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.9);

        let out = nms(
            &[
                det(bb(0.0, 0.0, 2.0, 2.0), 0.1),
                det(bb(9.0, 9.0, 2.0, 2.0), 0.8),
            ],
            0.5,
        );
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn nms_ties_keep_input_order() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let mut first = det(b, 0.5);
        first.frame = 1;
        let mut second = det(bb(0.5, 0.0, 10.0, 10.0), 0.5);
        second.frame = 1;
        let kept = nms_indices(&[first, second], 0.5);
        assert_eq!(kept, vec![0]);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..100.0f64, 0.0..100.0f64, 0.5..60.0f64, 0.5..60.0f64)
            .prop_map(|(x, y, w, h)| bb(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if a != b {
                prop_assert!(ab < 1.0);
            }
        }

        #[test]
        fn nms_is_idempotent_subset(
            boxes in proptest::collection::vec((arb_box(), 0.0..1.0f64), 0..12),
            thr in 0.1..0.9f64,
        ) {
            let dets: Vec<Detection> = boxes.into_iter().map(|(b, c)| det(b, c)).collect();
            let once = nms(&dets, thr);
            prop_assert_eq!(nms(&once, thr), once.clone());
            for (i, a) in once.iter().enumerate() {
                prop_assert!(dets.contains(a));
                for b in &once[..i] {
                    prop_assert!(iou(&a.bbox, &b.bbox) <= thr);
                }
            }
        }
    }
}
