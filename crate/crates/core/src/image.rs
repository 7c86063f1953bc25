use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::argument(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::argument(format!(
                "{width}x{height} image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(ImageRgb { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        ImageRgb::new(width, height, data).expect("positive dimensions")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        ImageRgb::new(width, height, data).expect("positive dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Interleaved channels scaled by 1/255; the raw-pixel network input.
    /// A zero byte stays exactly 0.0.
    pub fn normalized(&self) -> Vec<f64> {
        self.data.iter().map(|&b| b as f64 / 255.0).collect()
    }

    /// Rec. 601 luma in [0, 1].
    pub fn luma(&self) -> Vec<f64> {
        self.pixels().map(|[r, g, b]| (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0).collect()
    }
}

/// Nearest-neighbour resampling. Output pixel `(x, y)` samples source pixel
/// `(floor(x * w / tw), floor(y * h / th))`, so shrinking picks the top-left
/// sample of each block.
pub fn resize_nearest(image: &ImageRgb, target_w: usize, target_h: usize) -> Result<ImageRgb> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::argument("resize target must be at least 1x1"));
    }
    let (w, h) = image.dims();
    Ok(ImageRgb::from_fn(target_w, target_h, |x, y| image.pixel(x * w / target_w, y * h / target_h)))
}
