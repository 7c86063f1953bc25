//! Even-symmetric Gabor filter bank and texture responses.
//!
//! Responses are computed on the mirror-extended image (`...c b a | a b c ... | c b a...`),
//! which keeps a zero-mean kernel's response to a constant image at zero
//! everywhere, borders included. The mirror extension of a `w x h` image is
//! periodic with period `2w x 2h`, so the filtering is carried out as a circular
//! convolution on that grid with the kernel folded onto it, via 2-D FFTs.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{pool_grid, FeatureKind, FeatureVector, Grid};
use crate::error::{Error, Result};
use crate::image::ImageRgb;

/// Filter orientations in degrees. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "0")]
    Deg0,
    #[serde(rename = "45")]
    Deg45,
    #[serde(rename = "90")]
    Deg90,
    #[serde(rename = "135")]
    Deg135,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [Orientation::Deg0, Orientation::Deg45, Orientation::Deg90, Orientation::Deg135];

    pub fn degrees(self) -> f64 {
        match self {
            Orientation::Deg0 => 0.0,
            Orientation::Deg45 => 45.0,
            Orientation::Deg90 => 90.0,
            Orientation::Deg135 => 135.0,
        }
    }

    pub fn from_degrees(deg: u32) -> Option<Self> {
        match deg {
            0 => Some(Orientation::Deg0),
            45 => Some(Orientation::Deg45),
            90 => Some(Orientation::Deg90),
            135 => Some(Orientation::Deg135),
            _ => None,
        }
    }
}

/// Wavelengths of the four scales, `4 * sqrt(2) * i` for `i` in {1, 2, 4, 8}.
pub fn scales() -> [f64; 4] {
    [1.0, 2.0, 4.0, 8.0].map(|i| 4.0 * SQRT_2 * i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct GaborParams {
    /// Spatial aspect ratio.
    pub gamma: f64,
    /// sigma = sigma_per_wavelength * wavelength.
    pub sigma_per_wavelength: f64,
    /// Kernel half-width = ceil(truncation_sigmas * sigma) ...
    pub truncation_sigmas: f64,
    /// ... capped here, so the largest kernel is at most (2 * cap + 1)^2.
    pub max_half_width: usize,
}

impl Default for GaborParams {
    fn default() -> Self {
        GaborParams { gamma: 0.5, sigma_per_wavelength: 0.56, truncation_sigmas: 2.5, max_half_width: 31 }
    }
}

impl GaborParams {
    pub fn half_width(&self, wavelength: f64) -> usize {
        let sigma = self.sigma_per_wavelength * wavelength;
        ((self.truncation_sigmas * sigma).ceil() as usize).min(self.max_half_width)
    }

    /// Kernel side length for each scale, ascending.
    pub fn kernel_sides(&self) -> [usize; 4] {
        scales().map(|l| 2 * self.half_width(l) + 1)
    }

    fn key(&self) -> [u64; 4] {
        [
            self.gamma.to_bits(),
            self.sigma_per_wavelength.to_bits(),
            self.truncation_sigmas.to_bits(),
            self.max_half_width as u64,
        ]
    }
}

/// Square kernel, row-major, offsets `-half..=half` on both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborKernel {
    pub half: usize,
    pub values: Vec<f64>,
}

impl GaborKernel {
    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    /// Value at offset `(dx, dy)` from the centre.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let h = self.half as isize;
        self.values[((dy + h) * (2 * h + 1) + dx + h) as usize]
    }

    pub fn center(&self) -> f64 {
        self.at(0, 0)
    }
}

/// `exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / wavelength)` with the
/// mean subtracted, where `x', y'` are rotated by `theta_deg`.
pub fn gabor_kernel(wavelength: f64, theta_deg: f64, params: &GaborParams) -> Result<GaborKernel> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::argument(format!("wavelength must be positive, got {wavelength}")));
    }
    let sigma = params.sigma_per_wavelength * wavelength;
    let half = params.half_width(wavelength);
    // even kernel: theta and theta + 180 give the same filter
    let theta = theta_deg.rem_euclid(180.0).to_radians();
    let (sin, cos) = theta.sin_cos();
    let h = half as isize;
    let mut values = Vec::with_capacity((2 * half + 1).pow(2));
    for y in -h..=h {
        for x in -h..=h {
            let (x, y) = (x as f64, y as f64);
            let xr = x * cos + y * sin;
            let yr = -x * sin + y * cos;
            let envelope = (-(xr * xr + params.gamma * params.gamma * yr * yr) / (2.0 * sigma * sigma)).exp();
            values.push(envelope * (2.0 * PI * xr / wavelength).cos());
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= mean);
    Ok(GaborKernel { half, values })
}

/// Kernel spectra on the `2w x 2h` mirror period, one per (scale, orientation).
struct Spectra {
    pw: usize,
    ph: usize,
    kernels: Vec<Vec<Complex<f64>>>,
    forward_w: Arc<dyn rustfft::Fft<f64>>,
    forward_h: Arc<dyn rustfft::Fft<f64>>,
    inverse_w: Arc<dyn rustfft::Fft<f64>>,
    inverse_h: Arc<dyn rustfft::Fft<f64>>,
}

type SpectraKey = (usize, usize, [u64; 4]);

fn spectra_cache() -> &'static Mutex<HashMap<SpectraKey, Arc<Spectra>>> {
    static CACHE: OnceLock<Mutex<HashMap<SpectraKey, Arc<Spectra>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn spectra(width: usize, height: usize, params: &GaborParams) -> Result<Arc<Spectra>> {
    let key = (width, height, params.key());
    if let Some(s) = spectra_cache().lock().unwrap().get(&key) {
        return Ok(Arc::clone(s));
    }
    let (pw, ph) = (2 * width, 2 * height);
    let mut planner = FftPlanner::new();
    let mut s = Spectra {
        pw,
        ph,
        kernels: Vec::with_capacity(16),
        forward_w: planner.plan_fft_forward(pw),
        forward_h: planner.plan_fft_forward(ph),
        inverse_w: planner.plan_fft_inverse(pw),
        inverse_h: planner.plan_fft_inverse(ph),
    };
    for wavelength in scales() {
        for o in Orientation::ALL {
            let k = gabor_kernel(wavelength, o.degrees(), params)?;
            let mut folded = vec![Complex::new(0.0, 0.0); pw * ph];
            let h = k.half as isize;
            for dy in -h..=h {
                for dx in -h..=h {
                    let fx = dx.rem_euclid(pw as isize) as usize;
                    let fy = dy.rem_euclid(ph as isize) as usize;
                    folded[fy * pw + fx].re += k.at(dx, dy);
                }
            }
            fft2(&mut folded, &s, false);
            s.kernels.push(folded);
        }
    }
    let s = Arc::new(s);
    spectra_cache().lock().unwrap().insert(key, Arc::clone(&s));
    Ok(s)
}

fn fft2(data: &mut [Complex<f64>], s: &Spectra, inverse: bool) {
    let (pw, ph) = (s.pw, s.ph);
    let (fw, fh) = if inverse { (&s.inverse_w, &s.inverse_h) } else { (&s.forward_w, &s.forward_h) };
    fw.process(data);
    let mut t = vec![Complex::new(0.0, 0.0); pw * ph];
    for y in 0..ph {
        for x in 0..pw {
            t[x * ph + y] = data[y * pw + x];
        }
    }
    fh.process(&mut t);
    for y in 0..ph {
        for x in 0..pw {
            data[y * pw + x] = t[x * ph + y];
        }
    }
}

fn mirror(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * n - 1 - i
    }
}

/// Check shared by every texture entry point.
fn check_size(image: &ImageRgb, params: &GaborParams) -> Result<()> {
    let smallest = params.kernel_sides()[0];
    if image.width() < smallest || image.height() < smallest {
        return Err(Error::argument(format!(
            "{}x{} image is smaller than the {smallest}x{smallest} finest Gabor kernel",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Filtered luma for each scale at one orientation (signed, row-major, image size).
pub fn gabor_responses(image: &ImageRgb, orientation: Orientation, params: &GaborParams) -> Result<[Vec<f64>; 4]> {
    check_size(image, params)?;
    let (w, h) = image.dims();
    let s = spectra(w, h, params)?;
    let luma = image.luma();
    let mut extended = vec![Complex::new(0.0, 0.0); s.pw * s.ph];
    for y in 0..s.ph {
        for x in 0..s.pw {
            extended[y * s.pw + x].re = luma[mirror(y, h) * w + mirror(x, w)];
        }
    }
    fft2(&mut extended, &s, false);

    let oi = Orientation::ALL.iter().position(|&o| o == orientation).unwrap();
    let norm = (s.pw * s.ph) as f64;
    let mut out: [Vec<f64>; 4] = Default::default();
    for (si, slot) in out.iter_mut().enumerate() {
        let kernel = &s.kernels[si * 4 + oi];
        // the kernel is point-symmetric, so correlation equals convolution
        let mut prod: Vec<Complex<f64>> = extended.iter().zip(kernel).map(|(a, b)| a * b).collect();
        fft2(&mut prod, &s, true);
        let mut resp = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                resp.push(prod[y * s.pw + x].re / norm);
            }
        }
        *slot = resp;
    }
    Ok(out)
}

/// Absolute Gabor responses at `orientation`, pooled onto `grid` per scale and
/// concatenated finest scale first. Length `4 * gw * gh`.
pub fn texture_feature(
    image: &ImageRgb,
    orientation: Orientation,
    grid: Grid,
    params: &GaborParams,
) -> Result<FeatureVector> {
    let responses = gabor_responses(image, orientation, params)?;
    let mut values = Vec::with_capacity(4 * grid.cells());
    for r in responses {
        let abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
        values.extend(pool_grid(&abs, image.width(), image.height(), grid));
    }
    Ok(FeatureVector { kind: FeatureKind::Texture(orientation), values, grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force filtering on the mirror-extended image.
    fn direct(image: &ImageRgb, k: &GaborKernel) -> Vec<f64> {
        let (w, h) = image.dims();
        let luma = image.luma();
        let fold = |i: isize, n: usize| {
            let m = i.rem_euclid(2 * n as isize) as usize;
            mirror(m, n)
        };
        let hw = k.half as isize;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for dy in -hw..=hw {
                    for dx in -hw..=hw {
                        acc += k.at(dx, dy) * luma[fold(y + dy, h) * w + fold(x + dx, w)];
                    }
                }
                out.push(acc);
            }
        }
        out
    }

    fn grating(w: usize, h: usize, wavelength: f64) -> ImageRgb {
        ImageRgb::from_fn(w, h, |x, _| {
            let v = 0.5 + 0.5 * (2.0 * PI * x as f64 / wavelength).sin();
            let b = (v * 255.0).round() as u8;
            [b, b, b]
        })
    }

    #[test]
    fn kernel_sides_odd_and_capped() {
        let p = GaborParams::default();
        assert_eq!(p.kernel_sides(), [17, 33, 63, 63]);
        for l in scales() {
            for o in Orientation::ALL {
                assert_eq!(gabor_kernel(l, o.degrees(), &p).unwrap().side() % 2, 1);
            }
        }
    }

    #[test]
    fn opposite_orientations_match() {
        let p = GaborParams::default();
        for theta in [0.0, 45.0, 90.0, 135.0] {
            let a = gabor_kernel(4.0 * SQRT_2, theta, &p).unwrap();
            let b = gabor_kernel(4.0 * SQRT_2, theta + 180.0, &p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn kernel_center_is_one_minus_mean() {
        let p = GaborParams::default();
        let l = 4.0 * SQRT_2;
        let k = gabor_kernel(l, 0.0, &p).unwrap();
        let sigma = 0.56 * l;
        let half = (2.5 * sigma).ceil() as i32;
        let mut sum = 0.0;
        for y in -half..=half {
            for x in -half..=half {
                let (x, y) = (x as f64, y as f64);
                sum += (-(x * x + 0.25 * y * y) / (2.0 * sigma * sigma)).exp() * (2.0 * PI * x / l).cos();
            }
        }
        let mean = sum / ((2 * half + 1) * (2 * half + 1)) as f64;
        assert!((k.center() - (1.0 - mean)).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_wavelength() {
        assert!(gabor_kernel(0.0, 0.0, &GaborParams::default()).is_err());
    }

    #[test]
    fn fft_path_matches_direct_filtering() {
        let p = GaborParams::default();
        let img = ImageRgb::from_fn(20, 18, |x, y| [(x * 13 % 256) as u8, (y * 29 % 256) as u8, ((x * y) % 256) as u8]);
        for o in [Orientation::Deg0, Orientation::Deg135] {
            let fast = gabor_responses(&img, o, &p).unwrap();
            for (si, l) in scales().iter().enumerate() {
                let k = gabor_kernel(*l, o.degrees(), &p).unwrap();
                let slow = direct(&img, &k);
                for (a, b) in fast[si].iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-9, "scale {si}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn constant_image_has_zero_response() {
        let p = GaborParams::default();
        let img = ImageRgb::filled(32, 32, [90, 140, 200]);
        for o in Orientation::ALL {
            for r in gabor_responses(&img, o, &p).unwrap() {
                assert!(r.iter().all(|v| v.abs() < 1e-9));
            }
            let f = texture_feature(&img, o, Grid::new(4, 4), &p).unwrap();
            assert!(f.values.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn orientation_selectivity() {
        let p = GaborParams::default();
        let img = grating(32, 32, 4.0 * SQRT_2);
        let mean = |o| {
            let f = texture_feature(&img, o, Grid::new(8, 8), &p).unwrap();
            f.values.iter().sum::<f64>() / f.values.len() as f64
        };
        let matched = mean(Orientation::Deg0);
        let orthogonal = mean(Orientation::Deg90);
        assert!(matched > 2.0 * orthogonal, "{matched} vs {orthogonal}");
    }

    #[test]
    fn output_length() {
        let img = grating(32, 24, 7.0);
        let f = texture_feature(&img, Orientation::Deg45, Grid::new(3, 5), &GaborParams::default()).unwrap();
        assert_eq!(f.values.len(), 60);
        assert!(f.values.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn tiny_image_rejected() {
        let img = ImageRgb::filled(8, 8, [1, 2, 3]);
        assert!(matches!(
            texture_feature(&img, Orientation::Deg0, Grid::new(2, 2), &GaborParams::default()),
            Err(Error::Argument(_))
        ));
    }
}
