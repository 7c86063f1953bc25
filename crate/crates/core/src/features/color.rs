use serde::{Deserialize, Serialize};

use super::hsv::{pixel_to_hsv, Hsv};
use super::{pool_grid, FeatureKind, FeatureVector, Grid};
use crate::image::ImageRgb;

/// Value below which a pixel is black regardless of hue.
pub const BLACK_MAX_VALUE: f64 = 0.2;
/// Saturation below which a non-black pixel is white (light and mid grays included).
pub const WHITE_MAX_SATURATION: f64 = 0.2;

/// The eight color components. Declaration order is the tie-break order
/// used by feature selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorBin {
    Red,
    Yellow,
    Green,
    Cyan,
    Blue,
    Magenta,
    White,
    Black,
}

impl ColorBin {
    pub const ALL: [ColorBin; 8] = [
        ColorBin::Red,
        ColorBin::Yellow,
        ColorBin::Green,
        ColorBin::Cyan,
        ColorBin::Blue,
        ColorBin::Magenta,
        ColorBin::White,
        ColorBin::Black,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ColorBin::Red => "red",
            ColorBin::Yellow => "yellow",
            ColorBin::Green => "green",
            ColorBin::Cyan => "cyan",
            ColorBin::Blue => "blue",
            ColorBin::Magenta => "magenta",
            ColorBin::White => "white",
            ColorBin::Black => "black",
        }
    }

    /// The bin containing `hsv`. Every HSV triple lands in exactly one bin.
    pub fn of(hsv: Hsv) -> ColorBin {
        if hsv.v < BLACK_MAX_VALUE {
            return ColorBin::Black;
        }
        if hsv.s < WHITE_MAX_SATURATION {
            return ColorBin::White;
        }
        // 60° sectors centred on 0, 60, ..., 300
        match ((hsv.h + 30.0) / 60.0) as usize % 6 {
            0 => ColorBin::Red,
            1 => ColorBin::Yellow,
            2 => ColorBin::Green,
            3 => ColorBin::Cyan,
            4 => ColorBin::Blue,
            _ => ColorBin::Magenta,
        }
    }

    /// Representative RGB for the bin: hue centre at full saturation and value.
    pub fn canonical_rgb(self) -> [u8; 3] {
        match self {
            ColorBin::Red => [255, 0, 0],
            ColorBin::Yellow => [255, 255, 0],
            ColorBin::Green => [0, 255, 0],
            ColorBin::Cyan => [0, 255, 255],
            ColorBin::Blue => [0, 0, 255],
            ColorBin::Magenta => [255, 0, 255],
            ColorBin::White => [255, 255, 255],
            ColorBin::Black => [0, 0, 0],
        }
    }
}

/// Binary membership map of `bin`, average-pooled onto `grid`.
pub fn color_feature(image: &ImageRgb, bin: ColorBin, grid: Grid) -> FeatureVector {
    let membership: Vec<f64> =
        image.pixels().map(|p| if ColorBin::of(pixel_to_hsv(p)) == bin { 1.0 } else { 0.0 }).collect();
    FeatureVector {
        kind: FeatureKind::Color(bin),
        values: pool_grid(&membership, image.width(), image.height(), grid),
        grid,
    }
}
