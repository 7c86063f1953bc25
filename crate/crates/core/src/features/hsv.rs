use crate::image::ImageRgb;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsv {
    /// Degrees in [0, 360); 0 when saturation is 0.
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Hexcone HSV of one 8-bit pixel.
pub fn pixel_to_hsv([r, g, b]: [u8; 3]) -> Hsv {
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = (max - min) as f64;
    let v = max as f64 / 255.0;
    if max == min {
        return Hsv { h: 0.0, s: 0.0, v };
    }
    let s = d / max as f64;
    let mut h = if max == r {
        60.0 * (gf - bf) / d
    } else if max == g {
        60.0 * ((bf - rf) / d + 2.0)
    } else {
        60.0 * ((rf - gf) / d + 4.0)
    };
    if h < 0.0 {
        h += 360.0;
    }
    if h >= 360.0 {
        h -= 360.0;
    }
    Hsv { h, s, v }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HsvImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Hsv>,
}

pub fn rgb_to_hsv(image: &ImageRgb) -> HsvImage {
    HsvImage { width: image.width(), height: image.height(), pixels: image.pixels().map(pixel_to_hsv).collect() }
}

/// Inverse hexcone conversion, rounded to the nearest 8-bit value.
pub fn hsv_to_rgb(hsv: Hsv) -> [u8; 3] {
    let h = hsv.h.rem_euclid(360.0) / 60.0;
    let c = hsv.v * hsv.s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = hsv.v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}
