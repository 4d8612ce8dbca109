//! Location and segmentation token codecs.
//!
//! A box becomes four `<locNNNN>` tokens in `(y_min, x_min, y_max, x_max)`
//! order, each coordinate quantized into 1000 bins of the image extent. A mask
//! additionally becomes sixteen `<segNNN>` tokens: the mask is cropped to the
//! box, resampled to a 64x64 grid, cut into a 4x4 grid of 16x16 patches, and
//! every patch is replaced by the nearest entry of a fixed 128-pattern
//! codebook.
//!
//! When the crop is narrower than 64 pixels on an axis, only the grid cells the
//! decoder samples back are compared during quantization. For crops of 64
//! pixels or more every cell is compared. This keeps `encode(decode(t)) == t`
//! for every token sequence `t` produced by the encoder.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::{label_is_renderable, BBox, BinaryMask, ImageInfo};

pub const LOC_BINS: u16 = 1000;
pub const CODEBOOK_SIZE: usize = 128;
pub const SEG_TOKENS: usize = 16;
pub const GRID: u32 = 64;
pub const PATCH: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocToken(u16);

impl LocToken {
    pub fn new(index: u16) -> Result<Self> {
        if index >= LOC_BINS {
            return Err(Error::TokenOutOfRange {
                kind: "loc",
                index: u32::from(index),
            });
        }
        Ok(Self(index))
    }

    /// Clamps into `[0, 999]`.
    pub fn saturating(index: i64) -> Self {
        Self(index.clamp(0, i64::from(LOC_BINS) - 1) as u16)
    }

    pub fn index(self) -> u16 {
        self.0
    }
}

impl fmt::Display for LocToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<loc{:04}>", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegToken(u8);

impl SegToken {
    pub fn new(index: u16) -> Result<Self> {
        if usize::from(index) >= CODEBOOK_SIZE {
            return Err(Error::TokenOutOfRange {
                kind: "seg",
                index: u32::from(index),
            });
        }
        Ok(Self(index as u8))
    }

    pub fn index(self) -> u8 {
        self.0
    }
}

impl fmt::Display for SegToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<seg{:03}>", self.0)
    }
}

/// Four location tokens: `y_min, x_min, y_max, x_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BoxTokens(pub [LocToken; 4]);

impl BoxTokens {
    pub fn indices(&self) -> [u16; 4] {
        self.0.map(LocToken::index)
    }
}

impl fmt::Display for BoxTokens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|t| write!(f, "{t}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MaskTokens {
    pub loc: BoxTokens,
    pub seg: [SegToken; SEG_TOKENS],
}

impl fmt::Display for MaskTokens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.loc)?;
        self.seg.iter().try_for_each(|t| write!(f, "{t}"))
    }
}

/// A 16x16 binary patch, bit `row * 16 + col`.
pub type Patch = [u64; 4];

#[inline]
fn patch_get(p: &Patch, row: u32, col: u32) -> bool {
    let bit = (row * PATCH + col) as usize;
    p[bit / 64] >> (bit % 64) & 1 == 1
}

#[inline]
fn patch_set(p: &mut Patch, row: u32, col: u32) {
    let bit = (row * PATCH + col) as usize;
    p[bit / 64] |= 1 << (bit % 64);
}

/// Fixed mask-patch vocabulary.
///
/// Entry 0 is all zeros, entry 1 all ones. Entries `2 + 9a + o` are half-planes
/// `x cos(theta_a) + y sin(theta_a) < d_o` over cell centers measured from the
/// patch center, with `theta_a = 2 pi a / 14` and `d_o = 1.4 (o - 4)`.
#[derive(Debug)]
pub struct Codebook {
    entries: [Patch; CODEBOOK_SIZE],
}

const ANGLES: usize = 14;
const OFFSETS: usize = 9;
const OFFSET_STEP: f64 = 1.4;

impl Codebook {
    fn build() -> Self {
        let mut entries = [[0u64; 4]; CODEBOOK_SIZE];
        entries[1] = [u64::MAX; 4];
        for a in 0..ANGLES {
            let theta = 2.0 * PI * a as f64 / ANGLES as f64;
            let (sin, cos) = theta.sin_cos();
            for o in 0..OFFSETS {
                let d = OFFSET_STEP * (o as f64 - 4.0);
                let p = &mut entries[2 + a * OFFSETS + o];
                for r in 0..PATCH {
                    for c in 0..PATCH {
                        let y = f64::from(r) + 0.5 - 8.0;
                        let x = f64::from(c) + 0.5 - 8.0;
                        if x * cos + y * sin < d {
                            patch_set(p, r, c);
                        }
                    }
                }
            }
        }
        Self { entries }
    }

    /// Shared instance, built on first use.
    pub fn get() -> &'static Codebook {
        static BOOK: OnceLock<Codebook> = OnceLock::new();
        BOOK.get_or_init(Codebook::build)
    }

    pub fn entry(&self, index: usize) -> &Patch {
        &self.entries[index]
    }

    pub fn entries(&self) -> &[Patch] {
        &self.entries
    }

    pub fn cell(&self, index: usize, row: u32, col: u32) -> bool {
        patch_get(&self.entries[index], row, col)
    }

    /// Index of the entry closest to `patch` in Hamming distance over the cells
    /// selected by `care`. Ties go to the lowest index.
    pub fn nearest(&self, patch: &Patch, care: &Patch) -> usize {
        let mut best = (u32::MAX, 0usize);
        for (i, e) in self.entries.iter().enumerate() {
            let d: u32 = (0..4)
                .map(|w| ((patch[w] ^ e[w]) & care[w]).count_ones())
                .sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

/// Bin index of one coordinate: `floor(coord * 1000 / dim)` clamped to `[0, 999]`.
pub fn bin_index(coord: f64, dim: u32) -> u16 {
    let v = (coord * f64::from(LOC_BINS) / f64::from(dim)).floor();
    v.clamp(0.0, f64::from(LOC_BINS - 1)) as u16
}

/// Bin center of an index in pixel units.
pub fn bin_center(index: u16, dim: u32) -> f64 {
    (f64::from(index) + 0.5) * f64::from(dim) / f64::from(LOC_BINS)
}

pub fn encode_box(b: &BBox, image: &ImageInfo) -> BoxTokens {
    BoxTokens([
        LocToken(bin_index(b.y_min, image.height)),
        LocToken(bin_index(b.x_min, image.width)),
        LocToken(bin_index(b.y_max, image.height)),
        LocToken(bin_index(b.x_max, image.width)),
    ])
}

pub fn decode_box(tokens: &BoxTokens, image: &ImageInfo) -> Result<BBox> {
    let [y0, x0, y1, x1] = tokens.indices();
    if y0 >= y1 || x0 >= x1 {
        return Err(Error::DegenerateBox);
    }
    BBox::new(
        bin_center(y0, image.height),
        bin_center(x0, image.width),
        bin_center(y1, image.height),
        bin_center(x1, image.width),
    )
    .map_err(|_| Error::DegenerateBox)
}

/// Pixels whose bin index lies in `[lo, hi)`.
pub fn pixel_span(lo: u16, hi: u16, dim: u32) -> Range<u32> {
    let first = |i: u16| -> u32 {
        let num = u64::from(i) * u64::from(dim);
        num.div_ceil(u64::from(LOC_BINS)) as u32
    };
    let start = first(lo);
    let end = first(hi).max(start);
    start..end
}

/// Crop row/col sampled by grid cell `k` when resampling `n` pixels to 64.
#[inline]
pub(crate) fn grid_to_pixel(k: u32, n: u32) -> u32 {
    ((2 * k + 1) * n) / (2 * GRID)
}

/// Grid cell sampled by crop pixel `t` when resampling 64 cells to `n` pixels.
#[inline]
pub(crate) fn pixel_to_grid(t: u32, n: u32) -> u32 {
    ((2 * t + 1) * GRID) / (2 * n)
}

fn spans(tokens: &BoxTokens, image: &ImageInfo) -> (Range<u32>, Range<u32>) {
    let [y0, x0, y1, x1] = tokens.indices();
    (
        pixel_span(y0, y1, image.height),
        pixel_span(x0, x1, image.width),
    )
}

/// Encode `mask` (full image canvas) within `b` as box plus segmentation tokens.
pub fn encode_mask(mask: &BinaryMask, b: &BBox, image: &ImageInfo) -> Result<MaskTokens> {
    if mask.width() != image.width || mask.height() != image.height {
        return Err(Error::DimensionMismatch(
            mask.width(),
            mask.height(),
            image.width,
            image.height,
        ));
    }
    let loc = encode_box(b, image);
    let (rows, cols) = spans(&loc, image);
    let any = rows.clone().any(|r| cols.clone().any(|c| mask.get(r, c)));
    if !any {
        return Err(Error::EmptyCrop);
    }
    let (nr, nc) = (rows.len() as u32, cols.len() as u32);

    let mut sampled_rows = [false; GRID as usize];
    for t in 0..nr {
        sampled_rows[pixel_to_grid(t, nr) as usize] = true;
    }
    let mut sampled_cols = [false; GRID as usize];
    for t in 0..nc {
        sampled_cols[pixel_to_grid(t, nc) as usize] = true;
    }

    let book = Codebook::get();
    let mut seg = [SegToken(0); SEG_TOKENS];
    for (p, slot) in seg.iter_mut().enumerate() {
        let (pr, pc) = (p as u32 / 4, p as u32 % 4);
        let mut patch = [0u64; 4];
        let mut care = [0u64; 4];
        for r in 0..PATCH {
            let gr = pr * PATCH + r;
            let src_r = rows.start + grid_to_pixel(gr, nr);
            for c in 0..PATCH {
                let gc = pc * PATCH + c;
                if mask.get(src_r, cols.start + grid_to_pixel(gc, nc)) {
                    patch_set(&mut patch, r, c);
                }
                if sampled_rows[gr as usize] && sampled_cols[gc as usize] {
                    patch_set(&mut care, r, c);
                }
            }
        }
        *slot = SegToken(book.nearest(&patch, &care) as u8);
    }
    Ok(MaskTokens { loc, seg })
}

/// Decode tokens into the box they describe and a full-canvas mask.
pub fn decode_mask(tokens: &MaskTokens, image: &ImageInfo) -> Result<(BBox, BinaryMask)> {
    let b = decode_box(&tokens.loc, image)?;
    let (rows, cols) = spans(&tokens.loc, image);
    let (nr, nc) = (rows.len() as u32, cols.len() as u32);
    let book = Codebook::get();
    let mut canvas = BinaryMask::new(image.width, image.height);
    for (t, r) in rows.enumerate() {
        let gr = pixel_to_grid(t as u32, nr);
        for (u, c) in cols.clone().enumerate() {
            let gc = pixel_to_grid(u as u32, nc);
            let entry = tokens.seg[((gr / PATCH) * 4 + gc / PATCH) as usize].index();
            if book.cell(entry as usize, gr % PATCH, gc % PATCH) {
                canvas.set(r, c, true);
            }
        }
    }
    Ok((b, canvas))
}

/// Fails when `mask`/`b` cannot survive an encode/decode cycle: the box falls
/// inside a single location bin or the decoded mask comes back empty.
pub fn check_encodable(mask: &BinaryMask, b: &BBox, image: &ImageInfo) -> Result<()> {
    let tokens = encode_mask(mask, b, image)?;
    let (_, decoded) = decode_mask(&tokens, image)?;
    if decoded.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// An instance that renders as `<tokens> <label>`.
pub trait RenderInstance {
    fn write_tokens(&self, out: &mut String);
    fn label(&self) -> &str;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Detection {
    pub loc: BoxTokens,
    pub label: String,
}

impl Detection {
    pub fn from_box(label: impl Into<String>, b: &BBox, image: &ImageInfo) -> Self {
        Self {
            loc: encode_box(b, image),
            label: label.into(),
        }
    }
}

impl RenderInstance for Detection {
    fn write_tokens(&self, out: &mut String) {
        use fmt::Write;
        let _ = write!(out, "{}", self.loc);
    }

    fn label(&self) -> &str {
        &self.label
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationInstance {
    pub tokens: MaskTokens,
    pub label: String,
}

impl RenderInstance for SegmentationInstance {
    fn write_tokens(&self, out: &mut String) {
        use fmt::Write;
        let _ = write!(out, "{}", self.tokens);
    }

    fn label(&self) -> &str {
        &self.label
    }
}

pub const INSTANCE_SEPARATOR: &str = " ; ";

/// Canonical target text: `tokens label` per instance, joined by `" ; "`.
pub fn render_suffix<I: RenderInstance>(instances: &[I]) -> Result<String> {
    if instances.is_empty() {
        return Err(Error::EmptyInstances);
    }
    let mut out = String::new();
    for (i, inst) in instances.iter().enumerate() {
        if !label_is_renderable(inst.label()) {
            return Err(Error::InvalidLabel(inst.label().to_string()));
        }
        if i > 0 {
            out.push_str(INSTANCE_SEPARATOR);
        }
        inst.write_tokens(&mut out);
        out.push(' ');
        out.push_str(inst.label());
    }
    Ok(out)
}
