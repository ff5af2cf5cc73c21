#![allow(dead_code)]

use std::fs;
use std::path::Path;

use groupmood::ingest::{AssetCatalog, BackgroundAsset, FaceAsset, FaceSource};
use groupmood::raster::AlphaMask;
use groupmood::{Emotion, Seed};
use image::{Rgb, RgbImage};
use rand::Rng;

pub const BACKDROP: [u8; 3] = [20, 200, 40];

/// Textured RGB block with an elliptical alpha support.
pub fn face(id: &str, emotion: Emotion, w: u32, h: u32, seed: u64, source: FaceSource) -> FaceAsset {
    let mut rng = Seed::new(seed).rng();
    let base: [u8; 3] = [rng.random_range(120..240), rng.random_range(60..160), rng.random_range(40..140)];
    let pixels = RgbImage::from_fn(w, h, |x, y| {
        let n: i32 = rng.random_range(-20..=20);
        let g = ((x + y) % 32) as i32;
        Rgb(base.map(|c| (i32::from(c) + n + g).clamp(0, 255) as u8))
    });
    let mut alpha = AlphaMask::new(w, h, 0.0);
    let (cx, cy) = (w as f32 / 2.0, h as f32 / 2.0);
    for y in 0..h {
        for x in 0..w {
            let dx = (x as f32 + 0.5 - cx) / cx;
            let dy = (y as f32 + 0.5 - cy) / cy;
            if dx * dx + dy * dy <= 1.0 {
                alpha.set(x, y, 1.0);
            }
        }
    }
    FaceAsset::new(id, pixels, alpha, emotion, source).unwrap()
}

pub fn background(id: &str, w: u32, h: u32, seed: u64) -> BackgroundAsset {
    let mut rng = Seed::new(seed).rng();
    let tint: [u8; 3] = [rng.random(), rng.random(), rng.random()];
    let pixels = RgbImage::from_fn(w, h, |x, y| {
        Rgb([
            tint[0].wrapping_add((x / 4) as u8),
            tint[1].wrapping_add((y / 4) as u8),
            tint[2].wrapping_add(((x + y) / 8) as u8),
        ])
    });
    BackgroundAsset {
        id: id.into(),
        pixels,
        category: "fixture".into(),
    }
}

/// Two faces per emotion (one of each source) and two backgrounds.
pub fn catalog() -> AssetCatalog {
    let mut faces = Vec::new();
    for (i, e) in Emotion::ALL.into_iter().enumerate() {
        let i = i as u64;
        faces.push(face(&format!("{}/full", e.name()), e, 72 + 4 * i as u32, 96, 100 + i, FaceSource::FullHead));
        faces.push(face(&format!("{}/crop", e.name()), e, 56, 64 + 2 * i as u32, 200 + i, FaceSource::FaceCrop));
    }
    let backgrounds = vec![background("bg/a", 640, 560, 1), background("bg/b", 600, 600, 2)];
    AssetCatalog::from_assets(faces, backgrounds).unwrap()
}

/// Face photo on a uniform backdrop: a filled ellipse of a skin-like color.
pub fn backdrop_face_image(w: u32, h: u32, tone: [u8; 3]) -> RgbImage {
    let (cx, cy) = (w as f32 / 2.0, h as f32 / 2.0);
    RgbImage::from_fn(w, h, |x, y| {
        let dx = (x as f32 + 0.5 - cx) / (cx * 0.7);
        let dy = (y as f32 + 0.5 - cy) / (cy * 0.8);
        if dx * dx + dy * dy <= 1.0 {
            Rgb(tone)
        } else {
            Rgb(BACKDROP)
        }
    })
}

/// On-disk asset tree in the default layout: `faces/<emotion>/*.png` and
/// `backgrounds/<category>/*.png`.
pub fn write_asset_tree(root: &Path, emotions: &[Emotion]) {
    for (i, e) in emotions.iter().enumerate() {
        let dir = root.join("faces").join(e.name());
        fs::create_dir_all(&dir).unwrap();
        for j in 0..2u32 {
            let tone = [180 + (i as u8) * 5, 120 + (j as u8) * 30, 90 + (i as u8) * 10];
            backdrop_face_image(60 + 8 * j, 80, tone).save(dir.join(format!("{j}.png"))).unwrap();
        }
    }
    let bg = root.join("backgrounds").join("indoor");
    fs::create_dir_all(&bg).unwrap();
    background("x", 560, 540, 9).pixels.save(bg.join("room.png")).unwrap();
}

/// Exact group-label distribution when the face count is uniform on
/// `min..=max` and each face's class is drawn iid from `p`.
pub fn analytic_label_distribution(min: u32, max: u32, p: [f64; 3]) -> [f64; 3] {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let mut out = [0.0; 3];
    let span = f64::from(max - min + 1);
    for n in min..=max {
        for a in 0..=n {
            for b in 0..=n - a {
                let c = n - a - b;
                let prob = fact(n) / (fact(a) * fact(b) * fact(c))
                    * p[0].powi(a as i32)
                    * p[1].powi(b as i32)
                    * p[2].powi(c as i32);
                let counts = [a, b, c];
                let top = *counts.iter().max().unwrap();
                let winners: Vec<usize> = (0..3).filter(|&k| counts[k] == top).collect();
                let label = if winners.len() == 1 { winners[0] } else { 1 };
                out[label] += prob / span;
            }
        }
    }
    out
}

/// 50 videos per class whose row-normalized confusion diagonal is
/// Neutral 0.62, Positive 0.62, Negative 0.50. Off-diagonal mass is split
/// between the two other classes.
pub fn diagonal_confusion() -> [[u64; 3]; 3] {
    // Rows and columns in encoding order: Negative, Neutral, Positive.
    [[25, 13, 12], [10, 31, 9], [8, 11, 31]]
}

pub fn pairs_from_confusion(m: [[u64; 3]; 3]) -> Vec<(groupmood::GroupClass, groupmood::GroupClass)> {
    use groupmood::GroupClass;
    let mut out = Vec::new();
    for t in 0..3 {
        for p in 0..3 {
            for _ in 0..m[t][p] {
                out.push((GroupClass::from_index(t).unwrap(), GroupClass::from_index(p).unwrap()));
            }
        }
    }
    out
}
