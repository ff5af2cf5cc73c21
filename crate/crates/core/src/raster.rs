//! Raster primitives: alpha masks, premultiplied bilinear warping and PNG IO.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage, RgbaImage};

use crate::error::{Error, Result};

/// Per-pixel opacity in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMask {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl AlphaMask {
    pub fn new(width: u32, height: u32, fill: f32) -> Self {
        AlphaMask {
            width,
            height,
            data: vec![fill; (width as usize) * (height as usize)],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), (width as usize) * (height as usize));
        AlphaMask { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[(y as usize) * (self.width as usize) + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        let w = self.width as usize;
        self.data[(y as usize) * w + x as usize] = v;
    }

    pub fn any_positive(&self) -> bool {
        self.data.iter().any(|&a| a > 0.0)
    }

    /// Inclusive-exclusive bounds `(x0, y0, x1, y1)` of pixels with alpha > 0.
    pub fn support_bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) > 0.0 {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x + 1);
                    y1 = y1.max(y + 1);
                }
            }
        }
        (x0 != u32::MAX).then_some((x0, y0, x1, y1))
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> AlphaMask {
        let mut out = AlphaMask::new(w, h, 0.0);
        for j in 0..h {
            for i in 0..w {
                out.set(i, j, self.get(x + i, y + j));
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> AlphaMask {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }
}

/// Four bilinear taps for a sample at continuous position `(u, v)`, where
/// pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`. Taps outside the
/// raster get index `None`.
#[inline]
fn bilinear_taps(width: u32, height: u32, u: f32, v: f32) -> [(Option<usize>, f32); 4] {
    let fx = u - 0.5;
    let fy = v - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let idx = |x: i64, y: i64| -> Option<usize> {
        (x >= 0 && y >= 0 && x < width as i64 && y < height as i64)
            .then(|| (y as usize) * (width as usize) + x as usize)
    };
    [
        (idx(x0, y0), (1.0 - tx) * (1.0 - ty)),
        (idx(x0 + 1, y0), tx * (1.0 - ty)),
        (idx(x0, y0 + 1), (1.0 - tx) * ty),
        (idx(x0 + 1, y0 + 1), tx * ty),
    ]
}

/// Bilinear alpha sample; out-of-raster taps count as transparent.
#[inline]
pub fn sample_alpha(mask: &AlphaMask, u: f32, v: f32) -> f32 {
    let mut a = 0.0f32;
    for (i, w) in bilinear_taps(mask.width, mask.height, u, v) {
        if let Some(i) = i {
            a += w * mask.data[i];
        }
    }
    a
}

/// Bilinear sample in premultiplied space. Returns straight (unpremultiplied)
/// color and alpha, so transparent neighbours never darken edges.
#[inline]
pub fn sample_premultiplied(pixels: &RgbImage, mask: &AlphaMask, u: f32, v: f32) -> ([f32; 3], f32) {
    let taps = bilinear_taps(mask.width, mask.height, u, v);
    let raw = pixels.as_raw();
    let mut c = [0.0f32; 3];
    let mut a = 0.0f32;
    for (i, w) in taps {
        if let Some(i) = i {
            let wa = w * mask.data[i];
            a += wa;
            if wa > 0.0 {
                for k in 0..3 {
                    c[k] += wa * f32::from(raw[i * 3 + k]);
                }
            }
        }
    }
    if a > 0.0 {
        for ch in &mut c {
            *ch /= a;
        }
    }
    (c, a)
}

/// Bilinear sample of an opaque raster with edge clamping.
#[inline]
pub fn sample_opaque(pixels: &RgbImage, u: f32, v: f32) -> [f32; 3] {
    let (w, h) = pixels.dimensions();
    let fx = (u - 0.5).clamp(0.0, (w - 1) as f32);
    let fy = (v - 0.5).clamp(0.0, (h - 1) as f32);
    let x0 = fx.floor() as u32;
    let y0 = fy.floor() as u32;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let tx = fx - x0 as f32;
    let ty = fy - y0 as f32;
    let raw = pixels.as_raw();
    let stride = w as usize * 3;
    let (a, b) = (y0 as usize * stride + x0 as usize * 3, y0 as usize * stride + x1 as usize * 3);
    let (c, d) = (y1 as usize * stride + x0 as usize * 3, y1 as usize * stride + x1 as usize * 3);
    let mut out = [0.0f32; 3];
    for k in 0..3 {
        let top = f32::from(raw[a + k]) * (1.0 - tx) + f32::from(raw[b + k]) * tx;
        let bot = f32::from(raw[c + k]) * (1.0 - tx) + f32::from(raw[d + k]) * tx;
        out[k] = top * (1.0 - ty) + bot * ty;
    }
    out
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Inverse-mapped warp of a color raster with its alpha mask. `map` takes a
/// destination pixel center and returns the source position to sample.
/// `supersample` > 1 averages an `n x n` grid of sub-samples per pixel.
pub fn warp_layer<F>(pixels: &RgbImage, alpha: &AlphaMask, out_w: u32, out_h: u32, supersample: u32, map: F) -> (RgbImage, AlphaMask)
where
    F: Fn(f32, f32) -> (f32, f32),
{
    let n = supersample.max(1);
    let inv = 1.0 / n as f32;
    let mut out_px = RgbImage::new(out_w, out_h);
    let mut out_a = AlphaMask::new(out_w, out_h, 0.0);
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = [0.0f32; 3];
            let mut acc_a = 0.0f32;
            for sj in 0..n {
                for si in 0..n {
                    let dx = x as f32 + (si as f32 + 0.5) * inv;
                    let dy = y as f32 + (sj as f32 + 0.5) * inv;
                    let (u, v) = map(dx, dy);
                    let (c, a) = sample_premultiplied(pixels, alpha, u, v);
                    for k in 0..3 {
                        acc[k] += c[k] * a;
                    }
                    acc_a += a;
                }
            }
            if acc_a > 0.0 {
                let c = [to_u8(acc[0] / acc_a), to_u8(acc[1] / acc_a), to_u8(acc[2] / acc_a)];
                out_px.put_pixel(x, y, Rgb(c));
            }
            out_a.set(x, y, (acc_a * inv * inv).clamp(0.0, 1.0));
        }
    }
    (out_px, out_a)
}

/// Alpha-only counterpart of [`warp_layer`]; produces the identical mask.
pub fn warp_mask<F>(alpha: &AlphaMask, out_w: u32, out_h: u32, supersample: u32, map: F) -> AlphaMask
where
    F: Fn(f32, f32) -> (f32, f32),
{
    let n = supersample.max(1);
    let inv = 1.0 / n as f32;
    let mut out_a = AlphaMask::new(out_w, out_h, 0.0);
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc_a = 0.0f32;
            for sj in 0..n {
                for si in 0..n {
                    let dx = x as f32 + (si as f32 + 0.5) * inv;
                    let dy = y as f32 + (sj as f32 + 0.5) * inv;
                    let (u, v) = map(dx, dy);
                    acc_a += sample_alpha(alpha, u, v);
                }
            }
            out_a.set(x, y, (acc_a * inv * inv).clamp(0.0, 1.0));
        }
    }
    out_a
}

/// Resize a layer; exact copy when the size is unchanged.
pub fn resize_layer(pixels: &RgbImage, alpha: &AlphaMask, out_w: u32, out_h: u32) -> (RgbImage, AlphaMask) {
    let (w, h) = pixels.dimensions();
    if (w, h) == (out_w, out_h) {
        return (pixels.clone(), alpha.clone());
    }
    let sx = w as f32 / out_w as f32;
    let sy = h as f32 / out_h as f32;
    let ss = sx.max(sy).ceil().max(1.0) as u32;
    warp_layer(pixels, alpha, out_w, out_h, ss, |x, y| (x * sx, y * sy))
}

/// Resize an opaque raster; exact copy when the size is unchanged.
pub fn resize_opaque(pixels: &RgbImage, out_w: u32, out_h: u32) -> RgbImage {
    let (w, h) = pixels.dimensions();
    if (w, h) == (out_w, out_h) {
        return pixels.clone();
    }
    let sx = w as f32 / out_w as f32;
    let sy = h as f32 / out_h as f32;
    let n = sx.max(sy).ceil().max(1.0) as u32;
    let inv = 1.0 / n as f32;
    let norm = 1.0 / (n * n) as f32;
    let mut out = RgbImage::new(out_w, out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = [0.0f32; 3];
            for sj in 0..n {
                for si in 0..n {
                    let u = (x as f32 + (si as f32 + 0.5) * inv) * sx;
                    let v = (y as f32 + (sj as f32 + 0.5) * inv) * sy;
                    let c = sample_opaque(pixels, u, v);
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            out.put_pixel(x, y, Rgb([to_u8(acc[0] * norm), to_u8(acc[1] * norm), to_u8(acc[2] * norm)]));
        }
    }
    out
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    use image::codecs::png::{CompressionType, FilterType, PngEncoder};
    use image::ImageEncoder;
    let mut buf = Vec::new();
    PngEncoder::new_with_quality(&mut buf, CompressionType::Fast, FilterType::Adaptive).write_image(
        img.as_raw(),
        img.width(),
        img.height(),
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(buf)
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load(Cursor::new(bytes), ImageFormat::Png)?;
    Ok(img.to_rgb8())
}

/// Decoded image file: RGB pixels plus the embedded alpha channel when the
/// file carries one that is not fully opaque.
pub fn load_image(path: &Path) -> Result<(RgbImage, Option<AlphaMask>)> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    if img.color().has_alpha() {
        let rgba: RgbaImage = img.to_rgba8();
        let (w, h) = rgba.dimensions();
        let data: Vec<f32> = rgba.pixels().map(|p| f32::from(p.0[3]) / 255.0).collect();
        let rgb = image::DynamicImage::ImageRgba8(rgba).to_rgb8();
        if data.iter().any(|&a| a < 1.0) {
            return Ok((rgb, Some(AlphaMask::from_vec(w, h, data))));
        }
        return Ok((rgb, None));
    }
    Ok((img.to_rgb8(), None))
}
