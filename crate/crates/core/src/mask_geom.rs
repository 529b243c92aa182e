//! Pixel-level geometry: RLE mask codec, IoU, greedy NMS, and the mapping
//! between masks and patch-grid index sets.
//!
//! The RLE string format is the COCO compressed encoding: column-major runs,
//! first run counting zeros (possibly zero-length), counts delta-encoded
//! against the count two positions back starting at index 3, and each value
//! written little-endian in 5-bit groups with continuation flag 0x20, one
//! ASCII char per group at `value + 48`. Strings produced here decode with
//! existing COCO tooling and vice versa.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// A binary mask stored row-major, one byte per pixel (0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::DataLengthMismatch {
                rows: height,
                cols: width,
                len: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![0; height * width],
        }
    }

    pub fn filled(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![1; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.bits[y * self.width + x] = if v != 0 { 1 } else { 0 };
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }
}

/// Mapping between the patch indices of a ViT-style encoder and pixel
/// rectangles of its square-patch input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub grid_h: usize,
    pub grid_w: usize,
    pub patch_px: usize,
}

impl PatchGrid {
    pub fn new(grid_h: usize, grid_w: usize, patch_px: usize) -> Result<Self> {
        if grid_h == 0 || grid_w == 0 || patch_px == 0 {
            return Err(Error::InvalidConfig {
                what: "patch grid dimensions must be positive",
            });
        }
        Ok(Self {
            grid_h,
            grid_w,
            patch_px,
        })
    }

    /// Number of patches S.
    pub fn patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn input_h(&self) -> usize {
        self.grid_h * self.patch_px
    }

    pub fn input_w(&self) -> usize {
        self.grid_w * self.patch_px
    }

    /// Pixel rectangle of patch `i` as (y0, x0, y1, x1), end-exclusive.
    /// Indices run row-major, left to right then top to bottom.
    pub fn patch_rect(&self, i: usize) -> (usize, usize, usize, usize) {
        let r = i / self.grid_w;
        let c = i % self.grid_w;
        (
            r * self.patch_px,
            c * self.patch_px,
            (r + 1) * self.patch_px,
            (c + 1) * self.patch_px,
        )
    }
}

impl Default for PatchGrid {
    /// 24x24 grid of 14px patches (a 336px square encoder input).
    fn default() -> Self {
        Self {
            grid_h: 24,
            grid_w: 24,
            patch_px: 14,
        }
    }
}

/// A scored box (x1, y1, x2, y2) in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBoxScored {
    pub bbox: [f64; 4],
    pub score: f64,
}

const RLE_CHAR_BASE: u8 = 48;
const RLE_CHAR_MAX: u8 = 111;

/// Decodes a compressed RLE string into a mask of exactly `h * w` pixels.
/// Runs are column-major and alternate zero/one starting with zeros.
pub fn rle_decode(rle: &str, h: usize, w: usize) -> Result<BinaryMask> {
    let counts = rle_string_to_counts(rle)?;
    let total: i64 = counts.iter().sum();
    let expected = h * w;
    if counts.iter().any(|&c| c < 0) || total != expected as i64 {
        return Err(Error::RleLengthMismatch {
            expected,
            got: total,
        });
    }
    let mut column_major = vec![0u8; expected];
    let mut pos = 0usize;
    let mut value = 0u8;
    for &c in &counts {
        let c = c as usize;
        if value == 1 {
            for b in &mut column_major[pos..pos + c] {
                *b = 1;
            }
        }
        pos += c;
        value ^= 1;
    }
    // Transpose column-major pixel order into the row-major mask.
    let mut bits = vec![0u8; expected];
    for x in 0..w {
        for y in 0..h {
            bits[y * w + x] = column_major[x * h + y];
        }
    }
    BinaryMask::new(h, w, bits)
}

/// Encodes a mask into the canonical compressed RLE string.
pub fn rle_encode(mask: &BinaryMask) -> String {
    let h = mask.height;
    let w = mask.width;
    let mut counts: Vec<i64> = Vec::new();
    let mut prev = 0u8;
    let mut run = 0i64;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(y, x);
            if v != prev {
                counts.push(run);
                run = 0;
                prev = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    counts_to_rle_string(&counts)
}

fn rle_string_to_counts(rle: &str) -> Result<Vec<i64>> {
    let bytes = rle.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0usize;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut shift = 0u32;
        loop {
            if p >= bytes.len() {
                return Err(Error::RleMalformedChar {
                    byte: 0,
                    position: p,
                });
            }
            let b = bytes[p];
            if !(RLE_CHAR_BASE..=RLE_CHAR_MAX).contains(&b) {
                return Err(Error::RleMalformedChar {
                    byte: b,
                    position: p,
                });
            }
            let c = (b - RLE_CHAR_BASE) as i64;
            x |= (c & 0x1f) << shift;
            p += 1;
            shift += 5;
            if c & 0x20 == 0 {
                // Sign-extend when the top data bit of the last group is set.
                if c & 0x10 != 0 {
                    x |= -1i64 << shift;
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    Ok(counts)
}

fn counts_to_rle_string(counts: &[i64]) -> String {
    let mut s = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = if i > 2 { c - counts[i - 2] } else { c };
        loop {
            let mut group = (x & 0x1f) as u8;
            x >>= 5;
            let more = if group & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                group |= 0x20;
            }
            s.push((group + RLE_CHAR_BASE) as char);
            if !more {
                break;
            }
        }
    }
    s
}

/// Intersection over union of two same-sized masks; 0 when both are empty.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::MaskSizeMismatch {
            expected: (a.height, a.width),
            got: (b.height, b.width),
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.bits.iter().zip(&b.bits) {
        let x = *x != 0;
        let y = *y != 0;
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// IoU of two (x1, y1, x2, y2) boxes; 0 when the union has zero area.
pub fn bbox_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let area = |r: [f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Greedy non-maximum suppression. Boxes are visited in descending score
/// order (ties by ascending index); a box is suppressed iff its IoU with an
/// already-kept box exceeds `iou_thresh`. Returns kept indices in visit
/// order, so scores along the output are non-increasing.
pub fn nms(boxes: &[BBoxScored], iou_thresh: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        boxes[b]
            .score
            .partial_cmp(&boxes[a].score)
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept
            .iter()
            .any(|&k| bbox_iou(boxes[i].bbox, boxes[k].bbox) > iou_thresh);
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

/// Patch indices whose pixel rectangle is covered by the mask for at least
/// `min_frac` of its area (ties included). The mask must already be at the
/// grid's input resolution. Output is sorted ascending (row-major order).
pub fn patches_covered(mask: &BinaryMask, grid: &PatchGrid, min_frac: f64) -> Result<Vec<usize>> {
    if mask.height != grid.input_h() || mask.width != grid.input_w() {
        return Err(Error::MaskSizeMismatch {
            expected: (grid.input_h(), grid.input_w()),
            got: (mask.height, mask.width),
        });
    }
    let patch_area = (grid.patch_px * grid.patch_px) as f64;
    let mut out = Vec::new();
    for i in 0..grid.patches() {
        let (y0, x0, y1, x1) = grid.patch_rect(i);
        let mut covered = 0usize;
        for y in y0..y1 {
            for x in x0..x1 {
                covered += mask.get(y, x) as usize;
            }
        }
        if covered as f64 >= min_frac * patch_area {
            out.push(i);
        }
    }
    Ok(out)
}

/// Resamples a mask by bilinear interpolation of the {0,1} field, then
/// thresholds at 0.5 (ties become 1). Pixel centers follow the usual
/// half-pixel convention with edge clamping. The interpolation weights are
/// rational in the mask sizes, so the whole computation runs in exact
/// integer arithmetic; results are identical on every platform, including
/// at exact-tie pixels.
pub fn resample_mask(mask: &BinaryMask, out_h: usize, out_w: usize) -> Result<BinaryMask> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidConfig {
            what: "resample target must be positive",
        });
    }
    if out_h == mask.height && out_w == mask.width {
        return Ok(mask.clone());
    }
    // Source center for output pixel o along an axis of input length n,
    // output length m: (2o+1)n/(2m) - 1/2 = ((2o+1)n - m) / (2m).
    let axis = |o: usize, n: usize, m: usize| -> (usize, usize, i64) {
        let t = (2 * o as i64 + 1) * n as i64 - m as i64;
        let den = 2 * m as i64;
        let i0 = t.div_euclid(den);
        let frac = t.rem_euclid(den); // weight of i0+1, over den
        let lo = i0.clamp(0, n as i64 - 1) as usize;
        let hi = (i0 + 1).clamp(0, n as i64 - 1) as usize;
        (lo, hi, frac)
    };
    let den_y = 2 * out_h as i64;
    let den_x = 2 * out_w as i64;
    let mut out = BinaryMask::zeros(out_h, out_w);
    for oy in 0..out_h {
        let (y0, y1, fy) = axis(oy, mask.height, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = axis(ox, mask.width, out_w);
            let v00 = mask.get(y0, x0) as i64;
            let v01 = mask.get(y0, x1) as i64;
            let v10 = mask.get(y1, x0) as i64;
            let v11 = mask.get(y1, x1) as i64;
            let top = v00 * (den_x - fx) + v01 * fx;
            let bot = v10 * (den_x - fx) + v11 * fx;
            let num = top * (den_y - fy) + bot * fy;
            // num / (den_y * den_x) >= 1/2
            if 2 * num >= den_y * den_x {
                out.set(oy, ox, 1);
            }
        }
    }
    Ok(out)
}

/// Rasterizes a set of patch indices to the union of their pixel rectangles.
pub fn patch_set_to_mask(idx: &[usize], grid: &PatchGrid) -> Result<BinaryMask> {
    let patches = grid.patches();
    let mut mask = BinaryMask::zeros(grid.input_h(), grid.input_w());
    for &i in idx {
        if i >= patches {
            return Err(Error::PatchIndexOutOfRange { index: i, patches });
        }
        let (y0, x0, y1, x1) = grid.patch_rect(i);
        for y in y0..y1 {
            for x in x0..x1 {
                mask.set(y, x, 1);
            }
        }
    }
    Ok(mask)
}

/// Rasterizes a (x1, y1, x2, y2) box to a filled-rectangle mask. Fractional
/// coordinates cover every pixel whose area the box touches.
pub fn bbox_to_mask(bbox: [f64; 4], h: usize, w: usize) -> BinaryMask {
    let mut mask = BinaryMask::zeros(h, w);
    let x0 = math::floor(bbox[0].max(0.0)) as usize;
    let y0 = math::floor(bbox[1].max(0.0)) as usize;
    let x1 = (math::ceil(bbox[2]).max(0.0) as usize).min(w);
    let y1 = (math::ceil(bbox[3]).max(0.0) as usize).min(h);
    for y in y0..y1 {
        for x in x0..x1 {
            mask.set(y, x, 1);
        }
    }
    mask
}

/// IoU between a predicted mask and a ground-truth mask after resampling
/// the ground truth to the prediction's resolution.
pub fn resampled_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let gt = resample_mask(gt, pred.height, pred.width)?;
    mask_iou(pred, &gt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_is_column_major() {
        // runs: 2 zeros then 2 ones on a 2x2 mask: column 0 empty, column 1 full.
        let s = counts_to_rle_string(&[2, 2]);
        let m = rle_decode(&s, 2, 2).unwrap();
        assert_eq!(m.get(0, 0), 0);
        assert_eq!(m.get(1, 0), 0);
        assert_eq!(m.get(0, 1), 1);
        assert_eq!(m.get(1, 1), 1);
    }

    #[test]
    fn encode_all_zero_and_all_one() {
        let z = BinaryMask::zeros(3, 3);
        assert_eq!(rle_encode(&z), counts_to_rle_string(&[9]));
        let o = BinaryMask::filled(3, 3);
        assert_eq!(rle_encode(&o), counts_to_rle_string(&[0, 9]));
    }

    #[test]
    fn decode_rejects_short_runs() {
        let s = counts_to_rle_string(&[3, 5]); // 8 pixels, mask has 9
        let err = rle_decode(&s, 3, 3).unwrap_err();
        assert_eq!(
            err,
            Error::RleLengthMismatch {
                expected: 9,
                got: 8
            }
        );
    }

    #[test]
    fn decode_rejects_bad_alphabet() {
        let err = rle_decode("0\u{7f}", 1, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::RleMalformedChar {
                byte: 0x7f,
                position: 1
            }
        ));
    }

    #[test]
    fn delta_encoding_roundtrips_many_runs() {
        let counts = vec![10, 20, 30, 40, 50, 60, 9790];
        let s = counts_to_rle_string(&counts);
        assert_eq!(rle_string_to_counts(&s).unwrap(), counts);
    }

    #[test]
    fn mask_iou_examples() {
        let a = BinaryMask::filled(2, 4);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);

        let mut left = BinaryMask::zeros(2, 4);
        for y in 0..2 {
            for x in 0..2 {
                left.set(y, x, 1);
            }
        }
        assert_eq!(mask_iou(&left, &a).unwrap(), 0.5);

        let mut right = BinaryMask::zeros(2, 4);
        right.set(0, 3, 1);
        assert_eq!(mask_iou(&left, &right).unwrap(), 0.0);

        let z = BinaryMask::zeros(2, 4);
        assert_eq!(mask_iou(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn mask_iou_rejects_size_mismatch() {
        let a = BinaryMask::zeros(2, 2);
        let b = BinaryMask::zeros(2, 3);
        assert!(mask_iou(&a, &b).is_err());
    }

    #[test]
    fn nms_identical_and_disjoint() {
        let b1 = BBoxScored {
            bbox: [0.0, 0.0, 10.0, 10.0],
            score: 0.9,
        };
        let b2 = BBoxScored {
            bbox: [0.0, 0.0, 10.0, 10.0],
            score: 0.8,
        };
        assert_eq!(nms(&[b1, b2], 0.5), vec![0]);

        let b3 = BBoxScored {
            bbox: [20.0, 20.0, 30.0, 30.0],
            score: 0.8,
        };
        assert_eq!(nms(&[b1, b3], 0.5), vec![0, 1]);

        assert_eq!(nms(&[], 0.5), Vec::<usize>::new());
    }

    #[test]
    fn patches_covered_examples() {
        let grid = PatchGrid::new(2, 2, 4).unwrap();
        let full = BinaryMask::filled(8, 8);
        assert_eq!(
            patches_covered(&full, &grid, 0.5).unwrap(),
            vec![0, 1, 2, 3]
        );

        let mut top_left = BinaryMask::zeros(8, 8);
        for y in 0..4 {
            for x in 0..4 {
                top_left.set(y, x, 1);
            }
        }
        assert_eq!(patches_covered(&top_left, &grid, 0.5).unwrap(), vec![0]);
    }

    #[test]
    fn exactly_half_counts_as_covered() {
        let grid = PatchGrid::new(1, 1, 2).unwrap();
        let mut m = BinaryMask::zeros(2, 2);
        m.set(0, 0, 1);
        m.set(0, 1, 1);
        assert_eq!(patches_covered(&m, &grid, 0.5).unwrap(), vec![0]);
    }

    #[test]
    fn resample_identity_and_all_one() {
        let m = BinaryMask::filled(5, 7);
        assert_eq!(resample_mask(&m, 5, 7).unwrap(), m);
        let up = resample_mask(&m, 11, 3).unwrap();
        assert_eq!(up.count_ones(), 33);
    }

    #[test]
    fn resample_checkerboard_up_then_down() {
        let mut cb = BinaryMask::zeros(2, 2);
        cb.set(0, 0, 1);
        cb.set(1, 1, 1);
        let up = resample_mask(&cb, 4, 4).unwrap();
        let down = resample_mask(&up, 2, 2).unwrap();
        assert_eq!(down, cb);
    }

    #[test]
    fn patch_set_corners() {
        let grid = PatchGrid::new(3, 3, 2).unwrap();
        let m = patch_set_to_mask(&[0, 8], &grid).unwrap();
        assert_eq!(m.count_ones(), 8);
        assert_eq!(m.get(0, 0), 1);
        assert_eq!(m.get(1, 1), 1);
        assert_eq!(m.get(5, 5), 1);
        assert_eq!(m.get(4, 4), 1);
        assert_eq!(m.get(0, 5), 0);

        assert_eq!(
            patch_set_to_mask(&[], &grid).unwrap(),
            BinaryMask::zeros(6, 6)
        );
        let all: Vec<usize> = (0..9).collect();
        assert_eq!(
            patch_set_to_mask(&all, &grid).unwrap(),
            BinaryMask::filled(6, 6)
        );
        assert!(patch_set_to_mask(&[9], &grid).is_err());
    }

    #[test]
    fn bbox_fill_clamps_to_image() {
        let m = bbox_to_mask([-1.0, -2.0, 2.0, 1.5], 3, 3);
        // covers x in [0,2), y in [0,2)
        assert_eq!(m.count_ones(), 4);
    }
}
