//! Color (HSV bin membership) and texture (Gabor response) feature vectors.

pub mod color;
pub mod gabor;
pub mod hsv;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use color::{color_feature, ColorBin};
pub use gabor::{gabor_kernel, gabor_responses, scales, texture_feature, GaborKernel, GaborParams, Orientation};
pub use hsv::{hsv_to_rgb, pixel_to_hsv, rgb_to_hsv, Hsv, HsvImage};

use crate::error::{Error, Result};
use crate::image::ImageRgb;

/// Pooling grid: `gw` columns by `gh` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub gw: usize,
    pub gh: usize,
}

impl Grid {
    pub fn new(gw: usize, gh: usize) -> Self {
        Grid { gw, gh }
    }

    pub fn cells(&self) -> usize {
        self.gw * self.gh
    }
}

/// Cell `i` of `cells` over `n` pixels covers `[i*n/cells, max((i+1)*n/cells, i*n/cells + 1))`.
fn cell_span(i: usize, cells: usize, n: usize) -> (usize, usize) {
    let lo = i * n / cells;
    let hi = ((i + 1) * n / cells).max(lo + 1).min(n);
    (lo, hi)
}

/// Average-pools a row-major `w x h` map onto `grid`, cells in row-major order.
/// Edge cells absorb the remainder when the grid does not divide the image.
pub fn pool_grid(map: &[f64], w: usize, h: usize, grid: Grid) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.cells());
    for cy in 0..grid.gh {
        let (y0, y1) = cell_span(cy, grid.gh, h);
        for cx in 0..grid.gw {
            let (x0, x1) = cell_span(cx, grid.gw, w);
            let mut sum = 0.0;
            for y in y0..y1 {
                sum += map[y * w + x0..y * w + x1].iter().sum::<f64>();
            }
            out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

/// One of the twelve feature families. Ordering (colors first, then
/// orientations) is the documented tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureKind {
    Color(ColorBin),
    Texture(Orientation),
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 12] = [
        FeatureKind::Color(ColorBin::Red),
        FeatureKind::Color(ColorBin::Yellow),
        FeatureKind::Color(ColorBin::Green),
        FeatureKind::Color(ColorBin::Cyan),
        FeatureKind::Color(ColorBin::Blue),
        FeatureKind::Color(ColorBin::Magenta),
        FeatureKind::Color(ColorBin::White),
        FeatureKind::Color(ColorBin::Black),
        FeatureKind::Texture(Orientation::Deg0),
        FeatureKind::Texture(Orientation::Deg45),
        FeatureKind::Texture(Orientation::Deg90),
        FeatureKind::Texture(Orientation::Deg135),
    ];

    pub fn index(self) -> usize {
        FeatureKind::ALL.iter().position(|&k| k == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        FeatureKind::ALL.get(i).copied()
    }

    pub fn is_texture(self) -> bool {
        matches!(self, FeatureKind::Texture(_))
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Color(bin) => f.write_str(bin.name()),
            FeatureKind::Texture(o) => write!(f, "tex{}", o.degrees() as u32),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(deg) = s.strip_prefix("tex") {
            return deg
                .parse::<u32>()
                .ok()
                .and_then(Orientation::from_degrees)
                .map(FeatureKind::Texture)
                .ok_or_else(|| Error::argument(format!("unknown texture orientation '{s}'")));
        }
        ColorBin::ALL
            .iter()
            .find(|b| b.name() == s)
            .map(|&b| FeatureKind::Color(b))
            .ok_or_else(|| Error::argument(format!("unknown feature kind '{s}'")))
    }
}

impl Serialize for FeatureKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
    pub grid: Grid,
}

impl FeatureVector {
    /// `tag:u8 | gw:u32 | gh:u32 | len:u32 | len x f64`, little-endian;
    /// `tag` is the kind's position in [`FeatureKind::ALL`].
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 8 * self.values.len());
        out.push(self.kind.index() as u8);
        out.extend_from_slice(&(self.grid.gw as u32).to_le_bytes());
        out.extend_from_slice(&(self.grid.gh as u32).to_le_bytes());
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses one record from the front of `bytes`; returns it and the bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let fail = |off: usize, msg: &str| Error::format("feature vector", off as u64, msg);
        if bytes.len() < 13 {
            return Err(fail(0, "truncated header"));
        }
        let kind = FeatureKind::from_index(bytes[0] as usize).ok_or_else(|| fail(0, "unknown kind tag"))?;
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (gw, gh, len) = (word(1), word(5), word(9));
        let end = 13 + len * 8;
        if bytes.len() < end {
            return Err(fail(13, "truncated values"));
        }
        let values = bytes[13..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((FeatureVector { kind, values, grid: Grid::new(gw, gh) }, end))
    }
}

/// Everything needed to turn an image into any feature vector, plus the
/// per-pixel constants used when charging feature extraction as operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct FeatureParams {
    pub color_grid: Grid,
    pub texture_grid: Grid,
    pub gabor: GaborParams,
    /// Operations per pixel for the RGB -> HSV conversion.
    pub hsv_ops_per_pixel: u64,
    /// Operations per pixel for the bin membership test.
    pub bin_ops_per_pixel: u64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            color_grid: Grid::new(8, 8),
            texture_grid: Grid::new(4, 4),
            gabor: GaborParams::default(),
            hsv_ops_per_pixel: 8,
            bin_ops_per_pixel: 4,
        }
    }
}

impl FeatureParams {
    pub fn grid_for(&self, kind: FeatureKind) -> Grid {
        match kind {
            FeatureKind::Color(_) => self.color_grid,
            FeatureKind::Texture(_) => self.texture_grid,
        }
    }

    /// Length of the vector `extract` produces for `kind`.
    pub fn feature_len(&self, kind: FeatureKind) -> usize {
        match kind {
            FeatureKind::Color(_) => self.color_grid.cells(),
            FeatureKind::Texture(_) => 4 * self.texture_grid.cells(),
        }
    }

    pub fn extract(&self, image: &ImageRgb, kind: FeatureKind) -> Result<FeatureVector> {
        extract_feature(image, kind, self.grid_for(kind), &self.gabor)
    }

    /// MAC-equivalent cost of computing `kind` on a `w x h` image.
    ///
    /// Color: `w*h*(hsv + bin)` plus `w*h` pooling adds.
    /// Texture: `w*h*side^2` MACs per scale plus `w*h` pooling adds per scale.
    pub fn extraction_ops(&self, kind: FeatureKind, (w, h): (usize, usize)) -> u64 {
        let pixels = (w * h) as u64;
        match kind {
            FeatureKind::Color(_) => pixels * (self.hsv_ops_per_pixel + self.bin_ops_per_pixel) + pixels,
            FeatureKind::Texture(_) => {
                self.gabor.kernel_sides().iter().map(|&k| pixels * (k * k) as u64).sum::<u64>() + pixels * 4
            }
        }
    }
}

pub fn extract_feature(image: &ImageRgb, kind: FeatureKind, grid: Grid, gabor: &GaborParams) -> Result<FeatureVector> {
    match kind {
        FeatureKind::Color(bin) => Ok(color_feature(image, bin, grid)),
        FeatureKind::Texture(o) => texture_feature(image, o, grid, gabor),
    }
}

pub fn feature_extraction_ops(kind: FeatureKind, image_dims: (usize, usize), params: &FeatureParams) -> u64 {
    params.extraction_ops(kind, image_dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_distinct_kinds_round_trip_names() {
        let names: std::collections::BTreeSet<String> = FeatureKind::ALL.iter().map(|k| k.to_string()).collect();
        assert_eq!(names.len(), 12);
        for k in FeatureKind::ALL {
            assert_eq!(k.to_string().parse::<FeatureKind>().unwrap(), k);
        }
        assert!("purple".parse::<FeatureKind>().is_err());
        assert!("tex30".parse::<FeatureKind>().is_err());
    }

    #[test]
    fn tie_break_order_colors_first() {
        let mut sorted = FeatureKind::ALL.to_vec();
        sorted.sort();
        assert_eq!(sorted, FeatureKind::ALL.to_vec());
    }

    #[test]
    fn color_cost_closed_form() {
        let p = FeatureParams::default();
        let red = FeatureKind::Color(ColorBin::Red);
        assert_eq!(p.extraction_ops(red, (32, 32)), 13_312);
        assert_eq!(p.extraction_ops(red, (64, 32)), 2 * 13_312);
    }

    #[test]
    fn texture_cost_exceeds_color() {
        let p = FeatureParams::default();
        let tex = FeatureKind::Texture(Orientation::Deg0);
        let expected: u64 = [17u64, 33, 63, 63].iter().map(|k| 1024 * k * k).sum::<u64>() + 4096;
        assert_eq!(p.extraction_ops(tex, (32, 32)), expected);
        assert!(expected > p.extraction_ops(FeatureKind::Color(ColorBin::Red), (32, 32)));
    }

    #[test]
    fn texture_kind_with_8x8_grid_has_256_values() {
        let img = ImageRgb::from_fn(32, 32, |x, y| [(x * 8) as u8, (y * 8) as u8, 0]);
        let f =
            extract_feature(&img, FeatureKind::Texture(Orientation::Deg90), Grid::new(8, 8), &GaborParams::default())
                .unwrap();
        assert_eq!(f.values.len(), 256);
        let again =
            extract_feature(&img, FeatureKind::Texture(Orientation::Deg90), Grid::new(8, 8), &GaborParams::default())
                .unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn pooling_uneven_grid_covers_every_pixel() {
        let map: Vec<f64> = (0..35).map(|i| i as f64).collect();
        let pooled = pool_grid(&map, 7, 5, Grid::new(3, 2));
        assert_eq!(pooled.len(), 6);
        // more cells than pixels still yields non-empty cells
        let wide = pool_grid(&[1.0, 3.0], 2, 1, Grid::new(4, 1));
        assert_eq!(wide, vec![1.0, 1.0, 3.0, 3.0]);
    }

    proptest::proptest! {
        #[test]
        fn feature_vector_bytes_round_trip(kind in 0usize..12, values in proptest::collection::vec(-1e3f64..1e3, 0..40), gw in 1usize..9, gh in 1usize..9) {
            let v = FeatureVector { kind: FeatureKind::from_index(kind).unwrap(), values, grid: Grid::new(gw, gh) };
            let bytes = v.to_bytes();
            let (back, used) = FeatureVector::from_bytes(&bytes).unwrap();
            proptest::prop_assert_eq!(used, bytes.len());
            proptest::prop_assert_eq!(back, v);
        }
    }
}
