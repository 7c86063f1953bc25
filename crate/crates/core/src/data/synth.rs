//! Deterministic synthetic image sets.
//!
//! Every image is a shape on a neutral gray background whose luminance is
//! perturbed by uniform noise. Colour classes fill the shape with their bin's
//! hue (jittered in hue, saturation and value, always inside the bin); texture
//! classes fill it with a gray sinusoidal grating of wavelength `4 * sqrt(2)`
//! varying along the class orientation. Image `i` of class `c` draws from its
//! own ChaCha8 stream seeded with `derive(seed, c << 32 | i)`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledImage, SplitFractions};
use crate::error::{Error, Result};
use crate::features::{hsv_to_rgb, ColorBin, FeatureKind, Hsv, Orientation};
use crate::image::ImageRgb;
use crate::rng;

pub const GRATING_WAVELENGTH: f64 = 4.0 * SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disk,
    Bar,
    Grating,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Disk => "disk",
            Shape::Bar => "bar",
            Shape::Grating => "grating",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub pattern: FeatureKind,
    pub shape: Shape,
}

impl SyntheticClass {
    pub fn name(&self) -> String {
        format!("{}-{}", self.pattern, self.shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<SyntheticClass>,
    /// Amplitude of the uniform luminance noise, in [0, 1].
    pub noise_level: f64,
    pub per_class_count: usize,
    pub seed: u64,
    pub splits: SplitFractions,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            width: 32,
            height: 32,
            classes: shapes_of(&[ColorBin::Red.into(), ColorBin::Yellow.into()]),
            noise_level: 0.2,
            per_class_count: 200,
            seed: 7,
            splits: SplitFractions::default(),
        }
    }
}

fn shapes_of(patterns: &[FeatureKind]) -> Vec<SyntheticClass> {
    patterns
        .iter()
        .flat_map(|&pattern| [Shape::Disk, Shape::Bar].map(|shape| SyntheticClass { pattern, shape }))
        .collect()
}

impl SyntheticSpec {
    /// Disk and bar classes for each of `bins`.
    pub fn colors(bins: &[ColorBin]) -> Self {
        let patterns: Vec<FeatureKind> = bins.iter().map(|&b| b.into()).collect();
        SyntheticSpec { classes: shapes_of(&patterns), ..Default::default() }
    }

    /// Disk and bar classes filled with gratings at each of `orientations`.
    pub fn textures(orientations: &[Orientation]) -> Self {
        let patterns: Vec<FeatureKind> = orientations.iter().map(|&o| o.into()).collect();
        SyntheticSpec { classes: shapes_of(&patterns), ..Default::default() }
    }

    /// Red and yellow, disk and bar.
    pub fn color4() -> Self {
        Self::colors(&[ColorBin::Red, ColorBin::Yellow])
    }

    /// Red, yellow, green and blue, disk and bar.
    pub fn color8() -> Self {
        Self::colors(&[ColorBin::Red, ColorBin::Yellow, ColorBin::Green, ColorBin::Blue])
    }

    /// 0 and 90 degree gratings, disk and bar.
    pub fn texture4() -> Self {
        Self::textures(&[Orientation::Deg0, Orientation::Deg90])
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(SyntheticClass::name).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::argument("a synthetic spec needs at least two classes"));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::argument(format!(
                "synthetic images must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(Error::argument(format!("noise level {} outside [0, 1]", self.noise_level)));
        }
        if self.per_class_count == 0 {
            return Err(Error::argument("per-class count must be at least 1"));
        }
        let names = self.class_names();
        if let Some(dup) = names.iter().enumerate().find(|(i, n)| names[..*i].contains(n)) {
            return Err(Error::argument(format!("class '{}' listed twice", dup.1)));
        }
        self.splits.validate()
    }
}

impl From<ColorBin> for FeatureKind {
    fn from(bin: ColorBin) -> Self {
        FeatureKind::Color(bin)
    }
}

impl From<Orientation> for FeatureKind {
    fn from(o: Orientation) -> Self {
        FeatureKind::Texture(o)
    }
}

/// Point-membership test for one drawn shape instance.
enum Region {
    Disk { cx: f64, cy: f64, r: f64 },
    Bar { x0: f64, y0: f64, x1: f64, y1: f64 },
    Frame,
}

impl Region {
    fn draw(shape: Shape, w: usize, h: usize, rng: &mut impl Rng) -> Region {
        let (wf, hf) = (w as f64, h as f64);
        let m = wf.min(hf);
        match shape {
            Shape::Disk => {
                let r = rng.gen_range(0.28..0.34) * m;
                Region::Disk { cx: rng.gen_range(r..wf - r), cy: rng.gen_range(r..hf - r), r }
            }
            Shape::Bar => {
                let horizontal = rng.gen_bool(0.5);
                let (long_dim, short_dim) = if horizontal { (wf, hf) } else { (hf, wf) };
                let len = rng.gen_range(0.7..0.9) * long_dim;
                let thick = rng.gen_range(0.1..0.14) * m;
                let a = rng.gen_range(0.0..long_dim - len);
                let b = rng.gen_range(0.0..short_dim - thick);
                if horizontal {
                    Region::Bar { x0: a, y0: b, x1: a + len, y1: b + thick }
                } else {
                    Region::Bar { x0: b, y0: a, x1: b + thick, y1: a + len }
                }
            }
            Shape::Grating => Region::Frame,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Region::Bar { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Region::Frame => true,
        }
    }
}

fn hue_center(bin: ColorBin) -> Option<f64> {
    Some(match bin {
        ColorBin::Red => 0.0,
        ColorBin::Yellow => 60.0,
        ColorBin::Green => 120.0,
        ColorBin::Cyan => 180.0,
        ColorBin::Blue => 240.0,
        ColorBin::Magenta => 300.0,
        ColorBin::White | ColorBin::Black => return None,
    })
}

#[derive(Clone, Copy)]
struct Fill {
    hsv: Hsv,
    value_jitter: bool,
}

fn gray(v: f64) -> [u8; 3] {
    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [g, g, g]
}

/// Renders one image of `class`.
pub fn render(class: &SyntheticClass, w: usize, h: usize, noise: f64, rng: &mut impl Rng) -> ImageRgb {
    let region = Region::draw(class.shape, w, h, rng);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let (theta, fill) = match class.pattern {
        FeatureKind::Texture(o) => (o.degrees().to_radians(), None),
        FeatureKind::Color(bin) => {
            let fill = match hue_center(bin) {
                Some(c) => Fill {
                    hsv: Hsv {
                        h: (c + rng.gen_range(-12.0..12.0)).rem_euclid(360.0),
                        s: rng.gen_range(0.7..1.0),
                        v: rng.gen_range(0.7..1.0),
                    },
                    value_jitter: true,
                },
                None if bin == ColorBin::White => Fill {
                    hsv: Hsv { h: 0.0, s: rng.gen_range(0.0..0.1), v: rng.gen_range(0.85..1.0) },
                    value_jitter: false,
                },
                None => Fill { hsv: Hsv { h: 0.0, s: 0.0, v: rng.gen_range(0.0..0.1) }, value_jitter: false },
            };
            (0.0, Some(fill))
        }
    };
    let (sin, cos) = theta.sin_cos();
    ImageRgb::from_fn(w, h, |x, y| {
        let jitter = noise * (rng.gen::<f64>() - 0.5);
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let carrier = (2.0 * PI * (x as f64 * cos + y as f64 * sin) / GRATING_WAVELENGTH + phase).cos();
        let inside = region.contains(xf, yf);
        match fill {
            None if inside => gray(0.5 + 0.45 * carrier + 0.25 * jitter),
            Some(Fill { hsv, value_jitter }) if inside && (class.shape != Shape::Grating || carrier > 0.0) => {
                let v = if value_jitter { (hsv.v + 0.25 * jitter).clamp(0.6, 1.0) } else { hsv.v };
                hsv_to_rgb(Hsv { v, ..hsv })
            }
            _ => gray(0.5 + jitter),
        }
    })
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut items = Vec::with_capacity(spec.classes.len() * spec.per_class_count);
    for (c, class) in spec.classes.iter().enumerate() {
        for i in 0..spec.per_class_count {
            let mut r = rng::seeded(rng::derive(spec.seed, ((c as u64) << 32) | i as u64));
            items.push(LabeledImage {
                image: render(class, spec.width, spec.height, spec.noise_level, &mut r),
                class: c,
            });
        }
    }
    Dataset::stratified(items, spec.class_names(), spec.splits, rng::derive(spec.seed, u64::MAX))
}
