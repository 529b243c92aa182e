//! Patch-aligned annotation records: one image's caption plus per-object
//! tag, bounding box, and RLE segmentation mask.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask_geom::{bbox_to_mask, rle_decode, BinaryMask};

/// One object annotation: a tag, a pixel bounding box, and optionally a
/// compressed RLE mask at `mask_h x mask_w`. Annotations without a mask are
/// treated as filled rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskAnnotation {
    pub tag: String,
    /// (x1, y1, x2, y2), clamped into the image bounds at construction.
    pub bbox: [f64; 4],
    pub rle: Option<String>,
    pub mask_h: usize,
    pub mask_w: usize,
}

impl MaskAnnotation {
    /// Clamps the bbox into `[0, mask_w] x [0, mask_h]` and validates that
    /// it is not inverted and that the RLE (when present) decodes to exactly
    /// `mask_h * mask_w` pixels.
    pub fn new(
        tag: String,
        bbox: [f64; 4],
        rle: Option<String>,
        mask_h: usize,
        mask_w: usize,
    ) -> Result<Self> {
        let w = mask_w as f64;
        let h = mask_h as f64;
        let clamped = [
            bbox[0].clamp(0.0, w),
            bbox[1].clamp(0.0, h),
            bbox[2].clamp(0.0, w),
            bbox[3].clamp(0.0, h),
        ];
        if clamped[0] > clamped[2] || clamped[1] > clamped[3] {
            return Err(Error::InvalidBBox {
                x1: clamped[0],
                y1: clamped[1],
                x2: clamped[2],
                y2: clamped[3],
            });
        }
        if let Some(s) = &rle {
            rle_decode(s, mask_h, mask_w)?;
        }
        Ok(Self {
            tag,
            bbox: clamped,
            rle,
            mask_h,
            mask_w,
        })
    }

    /// The binary mask: the decoded RLE, or the filled bbox rectangle for
    /// box-only annotations.
    pub fn decode_mask(&self) -> Result<BinaryMask> {
        match &self.rle {
            Some(s) => rle_decode(s, self.mask_h, self.mask_w),
            None => Ok(bbox_to_mask(self.bbox, self.mask_h, self.mask_w)),
        }
    }
}

/// One image's record: identity, size, caption, and object annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct PadRecord {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub caption: String,
    pub labels: Vec<MaskAnnotation>,
}

impl PadRecord {
    pub fn new(
        image_id: String,
        width: usize,
        height: usize,
        caption: String,
        labels: Vec<MaskAnnotation>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig {
                what: "record size must be positive",
            });
        }
        for l in &labels {
            if l.mask_h != height || l.mask_w != width {
                return Err(Error::MaskSizeMismatch {
                    expected: (height, width),
                    got: (l.mask_h, l.mask_w),
                });
            }
        }
        Ok(Self {
            image_id,
            width,
            height,
            caption,
            labels,
        })
    }
}
