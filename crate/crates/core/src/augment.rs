//! Seeded geometric and photometric face augmentations, plus the random
//! rotate/flip/scale/crop transform applied to training frames.
//!
//! An [`AugmentSpec`] records every sampled parameter, so replaying a spec
//! from a manifest reproduces the augmented face exactly.

use image::{Rgb, RgbImage};
use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FaceAsset;
use crate::raster::{self, AlphaMask};
use crate::seed::Seed;

/// One recorded augmentation step.
///
/// Translation and perspective offsets are fractions of the current canvas
/// size; brightness is a fraction of the 0..255 range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugmentOp {
    HorizontalFlip,
    Rotate { degrees: f32 },
    Scale { factor: f32 },
    Translate { dx: f32, dy: f32 },
    Shear { kx: f32, ky: f32 },
    /// Corner offsets in order top-left, top-right, bottom-right, bottom-left.
    Perspective { corners: [[f32; 2]; 4] },
    Elastic { alpha: f32, sigma: f32, field_seed: u64 },
    Brightness { delta: f32 },
    Contrast { factor: f32 },
}

impl AugmentOp {
    pub fn is_geometric(&self) -> bool {
        !matches!(self, AugmentOp::Brightness { .. } | AugmentOp::Contrast { .. })
    }

    /// True when the parameters make the op a no-op.
    pub fn is_identity(&self) -> bool {
        match *self {
            AugmentOp::HorizontalFlip => false,
            AugmentOp::Rotate { degrees } => degrees == 0.0,
            AugmentOp::Scale { factor } => factor == 1.0,
            AugmentOp::Translate { dx, dy } => dx == 0.0 && dy == 0.0,
            AugmentOp::Shear { kx, ky } => kx == 0.0 && ky == 0.0,
            AugmentOp::Perspective { corners } => corners.iter().flatten().all(|&c| c == 0.0),
            AugmentOp::Elastic { alpha, .. } => alpha == 0.0,
            AugmentOp::Brightness { delta } => brightness_offset(delta) == 0,
            AugmentOp::Contrast { factor } => factor == 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub ops: Vec<AugmentOp>,
}

impl AugmentSpec {
    pub fn identity() -> Self {
        AugmentSpec::default()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// The same augmentation for a face resampled by `factor`; only the
    /// pixel-valued elastic parameters change.
    pub fn rescaled(&self, factor: f32) -> AugmentSpec {
        let ops = self
            .ops
            .iter()
            .map(|op| match *op {
                AugmentOp::Elastic { alpha, sigma, field_seed } => AugmentOp::Elastic {
                    alpha: alpha * factor,
                    sigma: (sigma * factor).max(0.5),
                    field_seed,
                },
                ref other => other.clone(),
            })
            .collect();
        AugmentSpec { ops }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpRange {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "half")]
    pub probability: f64,
    pub min: f32,
    pub max: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipRange {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "half")]
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticRange {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "half")]
    pub probability: f64,
    pub alpha_min: f32,
    pub alpha_max: f32,
    pub sigma: f32,
}

fn yes() -> bool {
    true
}

fn half() -> f64 {
    0.5
}

impl OpRange {
    fn new(min: f32, max: f32) -> Self {
        OpRange {
            enabled: true,
            probability: 0.5,
            min,
            max,
        }
    }
}

/// Sampling ranges and probabilities for each face augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentRanges {
    pub horizontal_flip: FlipRange,
    /// Degrees.
    pub rotate: OpRange,
    pub scale: OpRange,
    /// Fraction of face width/height, drawn independently per axis.
    pub translate: OpRange,
    pub shear: OpRange,
    /// Per-coordinate corner offset as a fraction of face size.
    pub perspective: OpRange,
    pub elastic: ElasticRange,
    /// Fraction of the 0..255 range.
    pub brightness: OpRange,
    pub contrast: OpRange,
    /// Smallest allowed width/height in pixels of the augmented face support.
    pub min_face_side: u32,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        AugmentRanges {
            horizontal_flip: FlipRange {
                enabled: true,
                probability: 0.5,
            },
            rotate: OpRange::new(-15.0, 15.0),
            scale: OpRange::new(0.8, 1.2),
            translate: OpRange::new(-0.1, 0.1),
            shear: OpRange::new(-0.1, 0.1),
            perspective: OpRange::new(-0.05, 0.05),
            elastic: ElasticRange {
                enabled: true,
                probability: 0.5,
                alpha_min: 0.0,
                alpha_max: 2.0,
                sigma: 8.0,
            },
            brightness: OpRange::new(-0.2, 0.2),
            contrast: OpRange::new(0.8, 1.25),
            min_face_side: 16,
        }
    }
}

impl AugmentRanges {
    /// Every op disabled.
    pub fn none() -> Self {
        let mut r = AugmentRanges::default();
        r.set_probability(0.0);
        r
    }

    pub fn set_probability(&mut self, p: f64) {
        self.horizontal_flip.probability = p;
        for op in self.ranges_mut() {
            op.probability = p;
        }
        self.elastic.probability = p;
    }

    fn ranges_mut(&mut self) -> [&mut OpRange; 7] {
        [
            &mut self.rotate,
            &mut self.scale,
            &mut self.translate,
            &mut self.shear,
            &mut self.perspective,
            &mut self.brightness,
            &mut self.contrast,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        let named = [
            ("rotate", &self.rotate),
            ("scale", &self.scale),
            ("translate", &self.translate),
            ("shear", &self.shear),
            ("perspective", &self.perspective),
            ("brightness", &self.brightness),
            ("contrast", &self.contrast),
        ];
        for (name, r) in named {
            if !(r.min <= r.max) || !r.min.is_finite() || !r.max.is_finite() {
                return Err(Error::Config(format!("augment.{name}: min must not exceed max")));
            }
            if !prob_ok(r.probability) {
                return Err(Error::Config(format!("augment.{name}: probability must lie in [0, 1]")));
            }
        }
        if !prob_ok(self.horizontal_flip.probability) || !prob_ok(self.elastic.probability) {
            return Err(Error::Config("augment.horizontal_flip: probability must lie in [0, 1]".into()));
        }
        if self.scale.min <= 0.0 {
            return Err(Error::Config("augment.scale: factors must be positive".into()));
        }
        if self.contrast.min < 0.0 {
            return Err(Error::Config("augment.contrast: factors must be non-negative".into()));
        }
        if self.shear.min.abs().max(self.shear.max.abs()) >= 1.0 {
            return Err(Error::Config("augment.shear: magnitude must stay below 1".into()));
        }
        if self.perspective.min.abs().max(self.perspective.max.abs()) >= 0.25 {
            return Err(Error::Config("augment.perspective: corner offsets must stay below 0.25".into()));
        }
        let e = &self.elastic;
        if !(0.0 <= e.alpha_min && e.alpha_min <= e.alpha_max) || !(e.sigma > 0.0) {
            return Err(Error::Config("augment.elastic: need 0 <= alpha_min <= alpha_max and sigma > 0".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, min: f32, max: f32) -> f32 {
    let t: f32 = rng.random();
    min + (max - min) * t
}

/// Draws an augmentation recipe. Every op's coin and parameters are drawn
/// whether or not the op is enabled, so toggling one op never shifts the
/// parameters of another.
pub fn sample_augment_spec(ranges: &AugmentRanges, seed: &Seed) -> AugmentSpec {
    let mut rng = seed.rng();
    let mut ops = Vec::new();
    let coin = |rng: &mut ChaCha8Rng, enabled: bool, p: f64| -> bool {
        let u: f64 = rng.random();
        enabled && u < p
    };

    let flip = coin(&mut rng, ranges.horizontal_flip.enabled, ranges.horizontal_flip.probability);
    if flip {
        ops.push(AugmentOp::HorizontalFlip);
    }

    let r = &ranges.rotate;
    let on = coin(&mut rng, r.enabled, r.probability);
    let degrees = uniform(&mut rng, r.min, r.max);
    if on {
        ops.push(AugmentOp::Rotate { degrees });
    }

    let r = &ranges.scale;
    let on = coin(&mut rng, r.enabled, r.probability);
    let factor = uniform(&mut rng, r.min, r.max);
    if on {
        ops.push(AugmentOp::Scale { factor });
    }

    let r = &ranges.translate;
    let on = coin(&mut rng, r.enabled, r.probability);
    let dx = uniform(&mut rng, r.min, r.max);
    let dy = uniform(&mut rng, r.min, r.max);
    if on {
        ops.push(AugmentOp::Translate { dx, dy });
    }

    let r = &ranges.shear;
    let on = coin(&mut rng, r.enabled, r.probability);
    let kx = uniform(&mut rng, r.min, r.max);
    let ky = uniform(&mut rng, r.min, r.max);
    if on {
        ops.push(AugmentOp::Shear { kx, ky });
    }

    let r = &ranges.perspective;
    let on = coin(&mut rng, r.enabled, r.probability);
    let mut corners = [[0.0f32; 2]; 4];
    for c in corners.iter_mut().flatten() {
        *c = uniform(&mut rng, r.min, r.max);
    }
    if on {
        ops.push(AugmentOp::Perspective { corners });
    }

    let e = &ranges.elastic;
    let on = coin(&mut rng, e.enabled, e.probability);
    let alpha = uniform(&mut rng, e.alpha_min, e.alpha_max);
    let field_seed: u64 = rng.random();
    if on {
        ops.push(AugmentOp::Elastic {
            alpha,
            sigma: e.sigma,
            field_seed,
        });
    }

    let r = &ranges.brightness;
    let on = coin(&mut rng, r.enabled, r.probability);
    let delta = uniform(&mut rng, r.min, r.max);
    if on {
        ops.push(AugmentOp::Brightness { delta });
    }

    let r = &ranges.contrast;
    let on = coin(&mut rng, r.enabled, r.probability);
    let factor = uniform(&mut rng, r.min, r.max);
    if on {
        ops.push(AugmentOp::Contrast { factor });
    }

    AugmentSpec { ops }
}

/// Inverse mapping from destination pixel coordinates to the source raster.
enum Warp {
    Flip,
    /// `src = m * (dst + origin) + t` as `[m00, m01, m10, m11, t0, t1]`.
    Affine([f32; 6]),
    /// Row-major 3x3 homography from destination (with origin) to source.
    Homography([f32; 9], [f32; 2]),
    Elastic { pad: u32, alpha: f32, sigma: f32, field_seed: u64 },
}

struct WarpPlan {
    warp: Warp,
    out: (u32, u32),
}

fn bbox(points: &[[f32; 2]]) -> (f32, f32, f32, f32) {
    let mut b = (f32::INFINITY, f32::INFINITY, f32::NEG_INFINITY, f32::NEG_INFINITY);
    for p in points {
        b.0 = b.0.min(p[0]);
        b.1 = b.1.min(p[1]);
        b.2 = b.2.max(p[0]);
        b.3 = b.3.max(p[1]);
    }
    b
}

fn canvas(b: (f32, f32, f32, f32)) -> ([f32; 2], (u32, u32)) {
    // The epsilon keeps float noise on exact corners from adding a pixel.
    let x0 = (b.0 + 1e-3).floor();
    let y0 = (b.1 + 1e-3).floor();
    let x1 = (b.2 - 1e-3).ceil();
    let y1 = (b.3 - 1e-3).ceil();
    ([x0, y0], (((x1 - x0) as u32).max(1), ((y1 - y0) as u32).max(1)))
}

/// Forward linear map about the canvas center.
fn centered_affine(a: [f32; 4], w: u32, h: u32) -> Result<WarpPlan> {
    let (cx, cy) = (w as f32 * 0.5, h as f32 * 0.5);
    let fwd = |x: f32, y: f32| {
        let (dx, dy) = (x - cx, y - cy);
        [a[0] * dx + a[1] * dy + cx, a[2] * dx + a[3] * dy + cy]
    };
    let corners = [fwd(0.0, 0.0), fwd(w as f32, 0.0), fwd(w as f32, h as f32), fwd(0.0, h as f32)];
    let (origin, out) = canvas(bbox(&corners));
    let det = a[0] * a[3] - a[1] * a[2];
    if det.abs() < 1e-4 {
        return Err(Error::DegenerateAugmentation {
            width: 0,
            height: 0,
            min: 0,
        });
    }
    let inv = [a[3] / det, -a[1] / det, -a[2] / det, a[0] / det];
    // src = inv * (dst + origin - c) + c
    let ox = origin[0] - cx;
    let oy = origin[1] - cy;
    let t0 = inv[0] * ox + inv[1] * oy + cx;
    let t1 = inv[2] * ox + inv[3] * oy + cy;
    Ok(WarpPlan {
        warp: Warp::Affine([inv[0], inv[1], inv[2], inv[3], t0, t1]),
        out,
    })
}

fn solve_homography(from: [[f32; 2]; 4], to: [[f32; 2]; 4]) -> Option<[f32; 9]> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y) = (f64::from(from[i][0]), f64::from(from[i][1]));
        let (u, v) = (f64::from(to[i][0]), f64::from(to[i][1]));
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    let mut out = [0.0f32; 9];
    for i in 0..8 {
        out[i] = h[i] as f32;
    }
    out[8] = 1.0;
    Some(out)
}

fn plan_warp(op: &AugmentOp, w: u32, h: u32) -> Result<Option<WarpPlan>> {
    if !op.is_geometric() || op.is_identity() {
        return Ok(None);
    }
    let (wf, hf) = (w as f32, h as f32);
    let plan = match *op {
        AugmentOp::HorizontalFlip => WarpPlan {
            warp: Warp::Flip,
            out: (w, h),
        },
        AugmentOp::Rotate { degrees } => {
            let (s, c) = degrees.to_radians().sin_cos();
            centered_affine([c, -s, s, c], w, h)?
        }
        AugmentOp::Scale { factor } => centered_affine([factor, 0.0, 0.0, factor], w, h)?,
        AugmentOp::Shear { kx, ky } => centered_affine([1.0, kx, ky, 1.0], w, h)?,
        AugmentOp::Translate { dx, dy } => {
            let (tx, ty) = (dx * wf, dy * hf);
            let (origin, out) = canvas((tx.min(0.0), ty.min(0.0), wf.max(wf + tx), hf.max(hf + ty)));
            WarpPlan {
                warp: Warp::Affine([1.0, 0.0, 0.0, 1.0, origin[0] - tx, origin[1] - ty]),
                out,
            }
        }
        AugmentOp::Perspective { corners } => {
            let src = [[0.0, 0.0], [wf, 0.0], [wf, hf], [0.0, hf]];
            let mut dst = src;
            for (d, j) in dst.iter_mut().zip(corners) {
                d[0] += j[0] * wf;
                d[1] += j[1] * hf;
            }
            let (origin, out) = canvas(bbox(&dst));
            let hm = solve_homography(dst, src).ok_or(Error::DegenerateAugmentation {
                width: 0,
                height: 0,
                min: 0,
            })?;
            WarpPlan {
                warp: Warp::Homography(hm, origin),
                out,
            }
        }
        AugmentOp::Elastic { alpha, sigma, field_seed } => {
            let pad = alpha.abs().ceil() as u32;
            WarpPlan {
                warp: Warp::Elastic {
                    pad,
                    alpha,
                    sigma,
                    field_seed,
                },
                out: (w + 2 * pad, h + 2 * pad),
            }
        }
        AugmentOp::Brightness { .. } | AugmentOp::Contrast { .. } => unreachable!(),
    };
    Ok(Some(plan))
}

/// Canvas size produced by the geometric part of `spec` on a `w x h` face,
/// without rendering it.
pub fn augmented_extent(w: u32, h: u32, spec: &AugmentSpec) -> Result<(u32, u32)> {
    let mut dims = (w, h);
    for op in &spec.ops {
        if let Some(plan) = plan_warp(op, dims.0, dims.1)? {
            dims = plan.out;
        }
    }
    Ok(dims)
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i32;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn blur(field: &[f32], w: usize, h: usize, kernel: &[f32]) -> Vec<f32> {
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0f32; field.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let xx = (x as i64 + k as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * field[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; field.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let yy = (y as i64 + k as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Smoothed random displacement field scaled so its largest component has
/// magnitude `alpha` pixels. Noise is drawn on a grid with spacing about
/// `sigma / 2`, smoothed there and bilinearly upsampled.
fn displacement_field(w: u32, h: u32, alpha: f32, sigma: f32, field_seed: u64) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (w as usize, h as usize);
    let step = ((sigma * 0.5).floor() as usize).max(1);
    let (cw, ch) = ((w - 1) / step + 2, (h - 1) / step + 2);
    let mut rng = ChaCha8Rng::seed_from_u64(field_seed);
    let mut noise = || -> Vec<f32> { (0..cw * ch).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect() };
    let (nx, ny) = (noise(), noise());
    let kernel = gaussian_kernel(sigma / step as f32);
    let mut cx = blur(&nx, cw, ch, &kernel);
    let mut cy = blur(&ny, cw, ch, &kernel);
    let peak = cx.iter().chain(cy.iter()).fold(0.0f32, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let k = alpha / peak;
        cx.iter_mut().for_each(|v| *v *= k);
        cy.iter_mut().for_each(|v| *v *= k);
    }
    let upsample = |c: &[f32]| -> Vec<f32> {
        let mut out = Vec::with_capacity(w * h);
        let inv = 1.0 / step as f32;
        for y in 0..h {
            let (j, ty) = (y / step, (y % step) as f32 * inv);
            for x in 0..w {
                let (i, tx) = (x / step, (x % step) as f32 * inv);
                let r0 = j * cw + i;
                let r1 = r0 + cw;
                let top = c[r0] + tx * (c[r0 + 1] - c[r0]);
                let bot = c[r1] + tx * (c[r1 + 1] - c[r1]);
                out.push(top + ty * (bot - top));
            }
        }
        out
    };
    (upsample(&cx), upsample(&cy))
}

/// Shared by the layer and the mask-only path so both produce identical alpha.
fn run_warp(plan: &WarpPlan, pixels: Option<&RgbImage>, alpha: &AlphaMask) -> (Option<RgbImage>, AlphaMask) {
    let (ow, oh) = plan.out;
    match &plan.warp {
        Warp::Flip => (
            pixels.map(|p| image::imageops::flip_horizontal(p)),
            alpha.flip_horizontal(),
        ),
        Warp::Affine(m) => {
            let m = *m;
            let map = move |x: f32, y: f32| (m[0] * x + m[1] * y + m[4], m[2] * x + m[3] * y + m[5]);
            warp_either(pixels, alpha, ow, oh, map)
        }
        Warp::Homography(hm, origin) => {
            let (hm, o) = (*hm, *origin);
            let map = move |x: f32, y: f32| {
                let (x, y) = (x + o[0], y + o[1]);
                let d = hm[6] * x + hm[7] * y + hm[8];
                ((hm[0] * x + hm[1] * y + hm[2]) / d, (hm[3] * x + hm[4] * y + hm[5]) / d)
            };
            warp_either(pixels, alpha, ow, oh, map)
        }
        Warp::Elastic {
            pad,
            alpha: amp,
            sigma,
            field_seed,
        } => {
            let (fx, fy) = displacement_field(ow, oh, *amp, *sigma, *field_seed);
            let pad = *pad as f32;
            let stride = ow as usize;
            let map = move |x: f32, y: f32| {
                let i = (y as usize) * stride + x as usize;
                (x - pad + fx[i], y - pad + fy[i])
            };
            warp_either(pixels, alpha, ow, oh, map)
        }
    }
}

fn warp_either<F>(pixels: Option<&RgbImage>, alpha: &AlphaMask, ow: u32, oh: u32, map: F) -> (Option<RgbImage>, AlphaMask)
where
    F: Fn(f32, f32) -> (f32, f32),
{
    match pixels {
        Some(p) => {
            let (px, a) = raster::warp_layer(p, alpha, ow, oh, 1, map);
            (Some(px), a)
        }
        None => (None, raster::warp_mask(alpha, ow, oh, 1, map)),
    }
}

fn brightness_offset(delta: f32) -> i32 {
    (delta * 255.0).round() as i32
}

fn apply_brightness(px: &mut RgbImage, delta: f32) {
    let off = brightness_offset(delta);
    for p in px.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = (i32::from(*c) + off).clamp(0, 255) as u8;
        }
    }
}

fn apply_contrast(px: &mut RgbImage, alpha: &AlphaMask, factor: f32) {
    let mut sum = 0.0f64;
    let mut weight = 0.0f64;
    for (p, &a) in px.pixels().zip(alpha.data()) {
        let l = 0.299 * f64::from(p.0[0]) + 0.587 * f64::from(p.0[1]) + 0.114 * f64::from(p.0[2]);
        sum += l * f64::from(a);
        weight += f64::from(a);
    }
    let mean = if weight > 0.0 { (sum / weight) as f32 } else { 127.5 };
    for p in px.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = raster::to_u8(mean + (f32::from(*c) - mean) * factor);
        }
    }
}

/// Applies a recorded spec to a face.
///
/// Geometric ops move pixels and alpha together; photometric ops touch only
/// pixels. Fails if the resulting alpha support is narrower or shorter than
/// `min_side` pixels.
pub fn apply_augment(asset: &FaceAsset, spec: &AugmentSpec, min_side: u32) -> Result<FaceAsset> {
    let mut pixels = asset.pixels.clone();
    let mut alpha = asset.alpha.clone();
    for op in spec.ops.iter().filter(|o| o.is_geometric()) {
        if let Some(plan) = plan_warp(op, pixels.width(), pixels.height())? {
            let (p, a) = run_warp(&plan, Some(&pixels), &alpha);
            pixels = p.expect("layer warp yields pixels");
            alpha = a;
        }
    }
    let (sw, sh) = alpha
        .support_bounds()
        .map(|(x0, y0, x1, y1)| (x1 - x0, y1 - y0))
        .unwrap_or((0, 0));
    if sw < min_side || sh < min_side {
        return Err(Error::DegenerateAugmentation {
            width: sw,
            height: sh,
            min: min_side,
        });
    }
    for op in spec.ops.iter().filter(|o| !o.is_geometric()) {
        match *op {
            AugmentOp::Brightness { delta } if !op.is_identity() => apply_brightness(&mut pixels, delta),
            AugmentOp::Contrast { factor } if !op.is_identity() => apply_contrast(&mut pixels, &alpha, factor),
            _ => {}
        }
    }
    Ok(FaceAsset {
        id: asset.id.clone(),
        pixels,
        alpha,
        emotion: asset.emotion,
        source: asset.source,
    })
}

/// The geometric part of `spec` applied to a standalone mask.
pub fn transform_mask(alpha: &AlphaMask, spec: &AugmentSpec) -> Result<AlphaMask> {
    let mut alpha = alpha.clone();
    for op in &spec.ops {
        if let Some(plan) = plan_warp(op, alpha.width(), alpha.height())? {
            alpha = run_warp(&plan, None, &alpha).1;
        }
    }
    Ok(alpha)
}

/// Random rotate, flip, scale and crop for training frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameTransformConfig {
    /// Rotation is uniform in `[-max_rotation_deg, +max_rotation_deg]`.
    pub max_rotation_deg: f32,
    pub flip_probability: f64,
    pub scale_min: f32,
    pub scale_max: f32,
    /// If set, frames are first resized so their shorter side has this length.
    pub short_side: Option<u32>,
    pub crop: u32,
}

impl Default for FrameTransformConfig {
    fn default() -> Self {
        FrameTransformConfig {
            max_rotation_deg: 10.0,
            flip_probability: 0.5,
            scale_min: 1.0,
            scale_max: 1.2,
            short_side: None,
            crop: 224,
        }
    }
}

impl FrameTransformConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_rotation_deg >= 0.0) || !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config("frame_transform.max_rotation_deg: invalid rotation or flip probability".into()));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return Err(Error::Config("frame_transform.scale_min: need 0 < scale_min <= scale_max".into()));
        }
        if self.crop == 0 || self.short_side == Some(0) {
            return Err(Error::Config("frame_transform.crop: crop and short_side must be positive".into()));
        }
        Ok(())
    }
}

/// Randomly rotated, flipped and scaled `crop x crop` region of `frame`.
pub fn apply_frame_transform(frame: &RgbImage, seed: &Seed, cfg: &FrameTransformConfig) -> Result<RgbImage> {
    let mut rng = seed.rng();
    let degrees = uniform(&mut rng, -cfg.max_rotation_deg, cfg.max_rotation_deg);
    let flip = rng.random::<f64>() < cfg.flip_probability;
    let scale = uniform(&mut rng, cfg.scale_min, cfg.scale_max);

    let (w, h) = frame.dimensions();
    let base = cfg.short_side.map_or(1.0, |s| s as f32 / w.min(h) as f32);
    let sw = (w as f32 * base * scale).round() as u32;
    let sh = (h as f32 * base * scale).round() as u32;
    let crop = cfg.crop;
    if sw < crop || sh < crop {
        return Err(Error::FrameTooSmall {
            width: sw,
            height: sh,
            crop,
        });
    }
    let ox = rng.random_range(0..=sw - crop);
    let oy = rng.random_range(0..=sh - crop);

    if degrees == 0.0 && !flip && (sw, sh) == (w, h) {
        return Ok(image::imageops::crop_imm(frame, ox, oy, crop, crop).to_image());
    }

    let (s, c) = (-degrees).to_radians().sin_cos();
    let (cx, cy) = (sw as f32 * 0.5, sh as f32 * 0.5);
    let (kx, ky) = (w as f32 / sw as f32, h as f32 / sh as f32);
    let mut out = RgbImage::new(crop, crop);
    for y in 0..crop {
        for x in 0..crop {
            let mut qx = (x + ox) as f32 + 0.5;
            let qy = (y + oy) as f32 + 0.5;
            if flip {
                qx = sw as f32 - qx;
            }
            let (dx, dy) = (qx - cx, qy - cy);
            let rx = c * dx - s * dy + cx;
            let ry = s * dx + c * dy + cy;
            let (u, v) = (rx * kx, ry * ky);
            if u < 0.0 || v < 0.0 || u > w as f32 || v > h as f32 {
                continue;
            }
            let p = raster::sample_opaque(frame, u, v);
            out.put_pixel(x, y, Rgb([raster::to_u8(p[0]), raster::to_u8(p[1]), raster::to_u8(p[2])]));
        }
    }
    Ok(out)
}
