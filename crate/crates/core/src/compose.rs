//! Scene planning, rendering and dataset generation.
//!
//! A scene is planned from three independent seed streams: selection
//! (face count, emotions, assets, background), placement (sizes, positions,
//! background crop) and one augmentation stream per face. Planning only uses
//! geometry; pixels are touched when the plan is rendered.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use image::RgbImage;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{self, AugmentRanges, AugmentSpec};
use crate::error::{Error, Result};
use crate::ingest::{AssetCatalog, BackgroundAsset, FaceAsset, FaceSource};
use crate::label::{Emotion, GroupClass, LabelRule, SurprisePolicy};
use crate::raster;
use crate::seed::Seed;

const SELECT_STREAM: u32 = 0;
const PLACE_STREAM: u32 = 1;
const AUGMENT_STREAM: u32 = 2;

/// Scene generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub render_width: u32,
    pub render_height: u32,
    /// Face count is uniform on `[min_faces, max_faces]` unless weights are given.
    pub min_faces: usize,
    pub max_faces: usize,
    /// Optional weights for each count in `min_faces..=max_faces`.
    pub face_count_weights: Option<Vec<f64>>,
    /// Rendered face height as a fraction of scene height.
    pub face_height_min: f32,
    pub face_height_max: f32,
    pub max_placement_attempts: u32,
    /// Occupancy grid cell size in pixels.
    pub occupancy_cell: u32,
    /// Extra clearance in pixels kept around each placed face.
    pub face_margin: u32,
    /// Sampling weight per emotion. Empty means uniform over every permitted
    /// emotion present in the catalog.
    pub emotion_weights: BTreeMap<Emotion, f64>,
    pub surprise: SurprisePolicy,
    /// Probability of drawing a full-head asset when both sources exist for an emotion.
    pub full_head_fraction: f64,
    /// Fixes the scene's face emotions (and therefore its face count).
    pub forced_emotions: Option<Vec<Emotion>>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            render_width: 512,
            render_height: 512,
            min_faces: 1,
            max_faces: 9,
            face_count_weights: None,
            face_height_min: 0.08,
            face_height_max: 0.30,
            max_placement_attempts: 100,
            occupancy_cell: 4,
            face_margin: 2,
            emotion_weights: BTreeMap::new(),
            surprise: SurprisePolicy::Neutral,
            full_head_fraction: 0.5,
            forced_emotions: None,
        }
    }
}

impl GenConfig {
    pub fn render_size(&self) -> (u32, u32) {
        (self.render_width, self.render_height)
    }

    pub fn label_rule(&self) -> LabelRule {
        LabelRule::new(self.surprise)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generation.{m}")));
        if self.render_width == 0 || self.render_height == 0 {
            return bad("render_width: render size must be positive");
        }
        if self.min_faces == 0 || self.min_faces > self.max_faces {
            return bad("min_faces: need 1 <= min_faces <= max_faces");
        }
        if let Some(w) = &self.face_count_weights {
            if w.len() != self.max_faces - self.min_faces + 1 {
                return bad("face_count_weights: need one weight per face count");
            }
            if w.iter().any(|v| !(*v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad("face_count_weights: weights must be non-negative with a positive sum");
            }
        }
        if !(self.face_height_min > 0.0 && self.face_height_min <= self.face_height_max && self.face_height_max <= 1.0) {
            return bad("face_height_min: need 0 < face_height_min <= face_height_max <= 1");
        }
        if self.max_placement_attempts == 0 || self.occupancy_cell == 0 {
            return bad("max_placement_attempts: max_placement_attempts and occupancy_cell must be positive");
        }
        if self.emotion_weights.values().any(|v| !(*v >= 0.0)) {
            return bad("emotion_weights: weights must be non-negative");
        }
        if !self.emotion_weights.is_empty() && self.emotion_weights.values().sum::<f64>() <= 0.0 {
            return bad("emotion_weights: weights need a positive sum");
        }
        if !(0.0..=1.0).contains(&self.full_head_fraction) {
            return bad("full_head_fraction: must lie in [0, 1]");
        }
        let rule = self.label_rule();
        if let Some(forced) = &self.forced_emotions {
            if forced.is_empty() {
                return bad("forced_emotions: must not be empty");
            }
            if forced.iter().any(|e| !rule.permits(*e)) {
                return bad("forced_emotions: includes an excluded emotion");
            }
        }
        Ok(())
    }

    /// Emotions that can be drawn, with their weights.
    fn emotion_pool(&self, catalog: &AssetCatalog) -> Result<Vec<(Emotion, f64)>> {
        let rule = self.label_rule();
        let pool: Vec<(Emotion, f64)> = if self.emotion_weights.is_empty() {
            Emotion::ALL
                .into_iter()
                .filter(|e| rule.permits(*e) && catalog.bucket_len(*e) > 0)
                .map(|e| (e, 1.0))
                .collect()
        } else {
            self.emotion_weights
                .iter()
                .filter(|(e, w)| **w > 0.0 && rule.permits(**e))
                .map(|(e, w)| (*e, *w))
                .collect()
        };
        if pool.is_empty() {
            return Err(Error::Catalog("no permitted emotion has face assets".into()));
        }
        Ok(pool)
    }

    /// Emotions the catalog must hold for this config.
    pub fn required_emotions(&self, catalog: &AssetCatalog) -> Result<Vec<Emotion>> {
        let mut req: Vec<Emotion> = match &self.forced_emotions {
            Some(f) => f.clone(),
            None => self.emotion_pool(catalog)?.into_iter().map(|(e, _)| e).collect(),
        };
        req.sort();
        req.dedup();
        Ok(req)
    }
}

/// Generation parameters together with the face augmentation ranges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComposeConfig {
    pub generation: GenConfig,
    pub augment: AugmentRanges,
}

impl ComposeConfig {
    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.augment.validate()
    }

    /// Checks that `catalog` can serve this config.
    pub fn check_catalog(&self, catalog: &AssetCatalog) -> Result<()> {
        let req = self.generation.required_emotions(catalog)?;
        catalog.require(&req, self.generation.render_size())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedFace {
    pub asset_id: String,
    pub augment: AugmentSpec,
    /// Top-left corner in scene pixels.
    pub position: [u32; 2],
    pub rendered_size: [u32; 2],
    pub emotion: Emotion,
}

impl PlacedFace {
    pub fn rect(&self) -> Rect {
        Rect {
            x: self.position[0],
            y: self.position[1],
            w: self.rendered_size[0],
            h: self.rendered_size[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.x < o.right() && o.x < self.right() && self.y < o.bottom() && o.y < self.bottom()
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.right() <= width && self.bottom() <= height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub seed: Seed,
    pub background_id: String,
    /// Normalized position of the crop window inside the background.
    pub background_crop: [f32; 2],
    pub faces: Vec<PlacedFace>,
    pub label: GroupClass,
    pub render_size: [u32; 2],
    /// Number of times the face count was reduced to make the scene fit.
    pub placement_retries: u32,
}

impl SceneSpec {
    /// Label recomputed from the face emotions.
    pub fn derived_label(&self, rule: &LabelRule) -> Result<GroupClass> {
        rule.histogram(self.faces.iter().map(|f| f.emotion)).group_label()
    }

    /// Faces are in bounds and pairwise disjoint.
    pub fn is_occlusion_free(&self) -> bool {
        let [w, h] = self.render_size;
        let rects: Vec<Rect> = self.faces.iter().map(PlacedFace::rect).collect();
        rects.iter().all(|r| r.w > 0 && r.h > 0 && r.within(w, h))
            && rects
                .iter()
                .enumerate()
                .all(|(i, a)| rects[i + 1..].iter().all(|b| !a.intersects(b)))
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub scene_id: String,
    pub label: u8,
    pub label_name: GroupClass,
    pub seed: Seed,
    pub background_id: String,
    pub background_crop: [f32; 2],
    pub render_size: [u32; 2],
    pub placement_retries: u32,
    pub faces: Vec<PlacedFace>,
}

impl From<&SceneSpec> for ManifestRecord {
    fn from(s: &SceneSpec) -> Self {
        ManifestRecord {
            scene_id: s.scene_id.clone(),
            label: s.label.index() as u8,
            label_name: s.label,
            seed: s.seed.clone(),
            background_id: s.background_id.clone(),
            background_crop: s.background_crop,
            render_size: s.render_size,
            placement_retries: s.placement_retries,
            faces: s.faces.clone(),
        }
    }
}

impl TryFrom<ManifestRecord> for SceneSpec {
    type Error = Error;

    fn try_from(r: ManifestRecord) -> Result<Self> {
        if usize::from(r.label) != r.label_name.index() {
            return Err(Error::Catalog(format!(
                "scene {}: label {} disagrees with label_name {}",
                r.scene_id, r.label, r.label_name
            )));
        }
        Ok(SceneSpec {
            scene_id: r.scene_id,
            seed: r.seed,
            background_id: r.background_id,
            background_crop: r.background_crop,
            faces: r.faces,
            label: r.label_name,
            render_size: r.render_size,
            placement_retries: r.placement_retries,
        })
    }
}

/// Binary occupancy grid over the scene at `cell`-pixel resolution.
#[derive(Debug, Clone)]
pub struct OccupancyMask {
    cell: u32,
    cols: u32,
    rows: u32,
    bits: Vec<bool>,
}

impl OccupancyMask {
    pub fn new(width: u32, height: u32, cell: u32) -> Self {
        let cols = width.div_ceil(cell);
        let rows = height.div_ceil(cell);
        OccupancyMask {
            cell,
            cols,
            rows,
            bits: vec![false; (cols * rows) as usize],
        }
    }

    /// Cells touched by `r` grown by `margin`, clipped to the grid.
    fn cells(&self, r: &Rect, margin: u32) -> (u32, u32, u32, u32) {
        let x0 = r.x.saturating_sub(margin) / self.cell;
        let y0 = r.y.saturating_sub(margin) / self.cell;
        let x1 = ((r.right() + margin).saturating_sub(1) / self.cell).min(self.cols - 1);
        let y1 = ((r.bottom() + margin).saturating_sub(1) / self.cell).min(self.rows - 1);
        (x0, y0, x1, y1)
    }

    pub fn is_free(&self, r: &Rect, margin: u32) -> bool {
        let (x0, y0, x1, y1) = self.cells(r, margin);
        (y0..=y1).all(|y| (x0..=x1).all(|x| !self.bits[(y * self.cols + x) as usize]))
    }

    pub fn mark(&mut self, r: &Rect, margin: u32) {
        let (x0, y0, x1, y1) = self.cells(r, margin);
        for y in y0..=y1 {
            for x in x0..=x1 {
                self.bits[(y * self.cols + x) as usize] = true;
            }
        }
    }

    pub fn is_set(&self, col: u32, row: u32) -> bool {
        self.bits[(row * self.cols + col) as usize]
    }
}

fn weighted_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

struct Selection {
    asset_id: String,
    emotion: Emotion,
    extent: (u32, u32),
    augment: AugmentSpec,
}

/// Plans one scene. Deterministic in `(catalog, cfg, seed)`.
pub fn plan_scene(catalog: &AssetCatalog, cfg: &ComposeConfig, seed: &Seed) -> Result<SceneSpec> {
    plan_scene_with_id(catalog, cfg, seed, "scene".to_string())
}

fn plan_scene_with_id(catalog: &AssetCatalog, cfg: &ComposeConfig, seed: &Seed, scene_id: String) -> Result<SceneSpec> {
    let g = &cfg.generation;
    let mut sel = seed.child(SELECT_STREAM).rng();

    let emotions: Vec<Emotion> = match &g.forced_emotions {
        Some(forced) => forced.clone(),
        None => {
            let n = match &g.face_count_weights {
                Some(w) => g.min_faces + weighted_index(&mut sel, w),
                None => sel.random_range(g.min_faces..=g.max_faces),
            };
            let pool = g.emotion_pool(catalog)?;
            let weights: Vec<f64> = pool.iter().map(|p| p.1).collect();
            (0..n).map(|_| pool[weighted_index(&mut sel, &weights)].0).collect()
        }
    };

    let mut chosen = Vec::with_capacity(emotions.len());
    for (i, &emotion) in emotions.iter().enumerate() {
        let full: Vec<_> = catalog.faces_with(emotion).filter(|f| f.source == FaceSource::FullHead).collect();
        let crop: Vec<_> = catalog.faces_with(emotion).filter(|f| f.source == FaceSource::FaceCrop).collect();
        let want_full = sel.random::<f64>() < g.full_head_fraction;
        let bucket = match (full.is_empty(), crop.is_empty()) {
            (true, true) => return Err(Error::Catalog(format!("no face assets for emotion {emotion}"))),
            (false, true) => &full,
            (true, false) => &crop,
            (false, false) => {
                if want_full {
                    &full
                } else {
                    &crop
                }
            }
        };
        let asset = bucket[sel.random_range(0..bucket.len())];
        let (aw, ah) = asset.dimensions();
        let aug_seed = seed.child(AUGMENT_STREAM).child(i as u32);
        let mut augment = augment::sample_augment_spec(&cfg.augment, &aug_seed);
        let mut extent = augment::augmented_extent(aw, ah, &augment)?;
        let min = cfg.augment.min_face_side;
        let mut redraw = 0;
        while extent.0 < min.min(aw) || extent.1 < min.min(ah) {
            redraw += 1;
            augment = if redraw > 8 {
                AugmentSpec::identity()
            } else {
                augment::sample_augment_spec(&cfg.augment, &aug_seed.child(redraw))
            };
            extent = augment::augmented_extent(aw, ah, &augment)?;
        }
        chosen.push(Selection {
            asset_id: asset.id.clone(),
            emotion,
            extent,
            augment,
        });
    }
    if catalog.backgrounds().is_empty() {
        return Err(Error::Catalog("no background assets".into()));
    }
    let background = &catalog.backgrounds()[sel.random_range(0..catalog.backgrounds().len())];

    let (w, h) = g.render_size();
    let mut place_root = seed.child(PLACE_STREAM).rng();
    let background_crop = [place_root.random::<f32>(), place_root.random::<f32>()];

    let floor = g.min_faces.min(chosen.len());
    let mut n = chosen.len();
    let mut round = 0u32;
    let faces = loop {
        let mut rng = seed.child(PLACE_STREAM).child(round).rng();
        match place_faces(&chosen[..n], g, &mut rng) {
            Some(faces) => break faces,
            None if n > floor => {
                n -= 1;
                round += 1;
            }
            None => return Err(Error::Overcrowded { faces: n }),
        }
    };

    let label = g.label_rule().histogram(faces.iter().map(|f| f.emotion)).group_label()?;
    let spec = SceneSpec {
        scene_id,
        seed: seed.clone(),
        background_id: background.id.clone(),
        background_crop,
        faces,
        label,
        render_size: [w, h],
        placement_retries: round,
    };
    if !spec.is_occlusion_free() {
        return Err(Error::Overcrowded { faces: spec.faces.len() });
    }
    Ok(spec)
}

/// Rejection-samples positions for every selected face, or `None` if one
/// of them cannot be placed.
fn place_faces(chosen: &[Selection], g: &GenConfig, rng: &mut ChaCha8Rng) -> Option<Vec<PlacedFace>> {
    let (w, h) = g.render_size();
    let mut mask = OccupancyMask::new(w, h, g.occupancy_cell);
    let mut placed: Vec<PlacedFace> = Vec::with_capacity(chosen.len());
    for s in chosen {
        let frac = g.face_height_min + (g.face_height_max - g.face_height_min) * rng.random::<f32>();
        let (ew, eh) = (s.extent.0 as f32, s.extent.1 as f32);
        let k = (frac * h as f32 / eh).min(w as f32 / ew).min(h as f32 / eh);
        let rw = ((ew * k).round() as u32).clamp(1, w);
        let rh = ((eh * k).round() as u32).clamp(1, h);
        let mut found = None;
        for _ in 0..g.max_placement_attempts {
            let x = rng.random_range(0..=w - rw);
            let y = rng.random_range(0..=h - rh);
            let r = Rect { x, y, w: rw, h: rh };
            // The grid test is conservative; the exact check is the final gate.
            if mask.is_free(&r, g.face_margin) && placed.iter().all(|p| !p.rect().intersects(&r)) {
                found = Some(r);
                break;
            }
        }
        let r = found?;
        mask.mark(&r, g.face_margin);
        placed.push(PlacedFace {
            asset_id: s.asset_id.clone(),
            augment: s.augment.clone(),
            position: [r.x, r.y],
            rendered_size: [r.w, r.h],
            emotion: s.emotion,
        });
    }
    Some(placed)
}

/// Background resampled so it just covers `width x height`.
pub fn cover_background(bg: &RgbImage, width: u32, height: u32) -> RgbImage {
    let (bw, bh) = bg.dimensions();
    let s = (width as f64 / bw as f64).max(height as f64 / bh as f64);
    if s == 1.0 {
        return bg.clone();
    }
    let sw = ((bw as f64 * s).round() as u32).max(width);
    let sh = ((bh as f64 * s).round() as u32).max(height);
    raster::resize_opaque(bg, sw, sh)
}

fn crop_cover(cover: &RgbImage, width: u32, height: u32, crop: [f32; 2]) -> RgbImage {
    let (cw, ch) = cover.dimensions();
    let ox = (crop[0].clamp(0.0, 1.0) * (cw - width) as f32).floor() as u32;
    let oy = (crop[1].clamp(0.0, 1.0) * (ch - height) as f32).floor() as u32;
    image::imageops::crop_imm(cover, ox, oy, width, height).to_image()
}

/// Background scaled to cover the scene (never more than needed) and cropped
/// at the normalized offset `crop`.
pub fn prepare_background(bg: &RgbImage, width: u32, height: u32, crop: [f32; 2]) -> RgbImage {
    crop_cover(&cover_background(bg, width, height), width, height, crop)
}

/// Resampled assets shared by the scenes of one rendering run.
#[derive(Default)]
struct RenderCache {
    covers: Mutex<HashMap<(String, u32, u32), Arc<RgbImage>>>,
    levels: Mutex<HashMap<(String, u32), Arc<FaceAsset>>>,
}

impl RenderCache {
    fn cover(&self, bg: &BackgroundAsset, width: u32, height: u32) -> Arc<RgbImage> {
        let key = (bg.id.clone(), width, height);
        if let Some(c) = self.covers.lock().expect("cache lock").get(&key) {
            return Arc::clone(c);
        }
        let c = Arc::new(cover_background(&bg.pixels, width, height));
        Arc::clone(self.covers.lock().expect("cache lock").entry(key).or_insert(c))
    }

    /// The asset halved `level` times.
    fn level(&self, asset: &FaceAsset, level: u32) -> Result<Arc<FaceAsset>> {
        let key = (asset.id.clone(), level);
        if let Some(f) = self.levels.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(f));
        }
        let (aw, ah) = asset.dimensions();
        let (sw, sh) = ((aw >> level).max(1), (ah >> level).max(1));
        let (px, alpha) = raster::resize_layer(&asset.pixels, &asset.alpha, sw, sh);
        let f = Arc::new(FaceAsset::new(asset.id.clone(), px, alpha, asset.emotion, asset.source)?);
        Ok(Arc::clone(self.levels.lock().expect("cache lock").entry(key).or_insert(f)))
    }
}

/// Renders a planned scene. Deterministic in `(spec, catalog)`.
pub fn render_scene(spec: &SceneSpec, catalog: &AssetCatalog) -> Result<RgbImage> {
    render_cached(spec, catalog, &RenderCache::default())
}

fn render_cached(spec: &SceneSpec, catalog: &AssetCatalog, cache: &RenderCache) -> Result<RgbImage> {
    let bg = catalog
        .background(&spec.background_id)
        .ok_or_else(|| Error::MissingAsset(spec.background_id.clone()))?;
    let [w, h] = spec.render_size;
    let mut out = crop_cover(&cache.cover(bg, w, h), w, h, spec.background_crop);
    for face in &spec.faces {
        let asset = catalog.face(&face.asset_id).ok_or_else(|| Error::MissingAsset(face.asset_id.clone()))?;
        let [rw, rh] = face.rendered_size;
        let (aw, ah) = asset.dimensions();
        let (ew, eh) = augment::augmented_extent(aw, ah, &face.augment)?;
        let k = (rw as f32 / ew as f32).max(rh as f32 / eh as f32);
        // Augment at the smallest halving that keeps at least twice the rendered resolution.
        let mut level = 0u32;
        while k * (1u32 << (level + 1)) as f32 <= 0.5 && (aw.min(ah) >> (level + 1)) >= 8 {
            level += 1;
        }
        let aug = if level == 0 {
            augment::apply_augment(asset, &face.augment, 0)?
        } else {
            let small = cache.level(asset, level)?;
            let s = small.dimensions().0 as f32 / aw as f32;
            augment::apply_augment(&small, &face.augment.rescaled(s), 0)?
        };
        let (px, alpha) = raster::resize_layer(&aug.pixels, &aug.alpha, rw, rh);
        let [fx, fy] = face.position;
        for y in 0..rh.min(h.saturating_sub(fy)) {
            for x in 0..rw.min(w.saturating_sub(fx)) {
                let a = alpha.get(x, y);
                if a <= 0.0 {
                    continue;
                }
                let f = px.get_pixel(x, y).0;
                let dst = out.get_pixel_mut(fx + x, fy + y);
                for k in 0..3 {
                    let b = f32::from(dst.0[k]);
                    dst.0[k] = raster::to_u8(b + a * (f32::from(f[k]) - b));
                }
            }
        }
    }
    Ok(out)
}

/// Receives generated scenes in index order.
pub trait DatasetSink {
    fn write(&mut self, index: u64, spec: &SceneSpec, png: &[u8]) -> io::Result<()>;
    fn finish(&mut self) -> io::Result<()>;
}

/// Writes `images/<scene_id>.png` and an index-ordered `manifest.jsonl`.
pub struct DirectorySink {
    root: PathBuf,
    records: BTreeMap<u64, String>,
}

impl DirectorySink {
    pub fn new(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("images"))?;
        Ok(DirectorySink {
            root,
            records: BTreeMap::new(),
        })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }
}

impl DatasetSink for DirectorySink {
    fn write(&mut self, index: u64, spec: &SceneSpec, png: &[u8]) -> io::Result<()> {
        fs::write(self.root.join("images").join(format!("{}.png", spec.scene_id)), png)?;
        let line = serde_json::to_string(&ManifestRecord::from(spec))?;
        self.records.insert(index, line);
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        let mut f = io::BufWriter::new(fs::File::create(self.manifest_path())?);
        for line in self.records.values() {
            f.write_all(line.as_bytes())?;
            f.write_all(b"\n")?;
        }
        f.flush()
    }
}

/// Length-prefixed records: `u32` big-endian JSON length, the manifest JSON,
/// `u32` big-endian PNG length, the PNG bytes.
pub struct StreamSink<W: Write> {
    out: W,
}

impl<W: Write> StreamSink<W> {
    pub fn new(out: W) -> Self {
        StreamSink { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn frame_len(n: usize) -> io::Result<[u8; 4]> {
    u32::try_from(n)
        .map(u32::to_be_bytes)
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "record exceeds 4 GiB"))
}

impl<W: Write> DatasetSink for StreamSink<W> {
    fn write(&mut self, _index: u64, spec: &SceneSpec, png: &[u8]) -> io::Result<()> {
        let json = serde_json::to_vec(&ManifestRecord::from(spec))?;
        self.out.write_all(&frame_len(json.len())?)?;
        self.out.write_all(&json)?;
        self.out.write_all(&frame_len(png.len())?)?;
        self.out.write_all(png)?;
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Reads one stream record; `Ok(None)` at a clean end of stream.
pub fn read_stream_record<R: Read>(input: &mut R) -> io::Result<Option<(ManifestRecord, Vec<u8>)>> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let mut json = vec![0u8; u32::from_be_bytes(len) as usize];
    input.read_exact(&mut json)?;
    input.read_exact(&mut len)?;
    let mut png = vec![0u8; u32::from_be_bytes(len) as usize];
    input.read_exact(&mut png)?;
    let record = serde_json::from_slice(&json)?;
    Ok(Some((record, png)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub count: u64,
    pub class_counts: [u64; 3],
    pub class_fractions: [f64; 3],
    pub faces_placed: u64,
    /// Scenes whose face count had to be reduced.
    pub retried_scenes: u64,
    /// Total face-count reductions over all scenes.
    pub placement_retries: u64,
    pub elapsed_secs: f64,
    pub images_per_sec: f64,
}

impl GenerationSummary {
    fn from_specs<'a>(specs: impl Iterator<Item = &'a SceneSpec>) -> Self {
        let mut s = GenerationSummary {
            count: 0,
            class_counts: [0; 3],
            class_fractions: [0.0; 3],
            faces_placed: 0,
            retried_scenes: 0,
            placement_retries: 0,
            elapsed_secs: 0.0,
            images_per_sec: 0.0,
        };
        for spec in specs {
            s.add(spec);
        }
        s.finalize(0.0);
        s
    }

    fn add(&mut self, spec: &SceneSpec) {
        self.count += 1;
        self.class_counts[spec.label.index()] += 1;
        self.faces_placed += spec.faces.len() as u64;
        if spec.placement_retries > 0 {
            self.retried_scenes += 1;
        }
        self.placement_retries += u64::from(spec.placement_retries);
    }

    fn finalize(&mut self, elapsed: f64) {
        if self.count > 0 {
            for k in 0..3 {
                self.class_fractions[k] = self.class_counts[k] as f64 / self.count as f64;
            }
        }
        self.elapsed_secs = elapsed;
        self.images_per_sec = if elapsed > 0.0 { self.count as f64 / elapsed } else { 0.0 };
    }
}

pub fn scene_id(index: u64) -> String {
    format!("scene_{index:06}")
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Plans `count` scenes without rendering; scene `i` uses `root.child(i)`.
pub fn plan_dataset(catalog: &AssetCatalog, cfg: &ComposeConfig, root: &Seed, count: u64, workers: usize) -> Result<Vec<SceneSpec>> {
    cfg.validate()?;
    pool(workers)?.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| plan_scene_with_id(catalog, cfg, &root.child(i as u32), scene_id(i)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    })
}

pub fn summarize(specs: &[SceneSpec]) -> GenerationSummary {
    GenerationSummary::from_specs(specs.iter())
}

/// Plans, renders and writes `count` scenes using `workers` threads.
///
/// Scene `i` depends only on `root.child(i)`; scenes reach the sink in index
/// order, so output is identical for any worker count.
pub fn generate_dataset(
    catalog: &AssetCatalog,
    cfg: &ComposeConfig,
    root: &Seed,
    count: u64,
    workers: usize,
    sink: &mut dyn DatasetSink,
) -> Result<GenerationSummary> {
    if count == 0 {
        return Err(Error::Config("count must be at least 1".into()));
    }
    if count > u64::from(u32::MAX) {
        return Err(Error::Config("count exceeds the seed index range".into()));
    }
    cfg.validate()?;
    cfg.check_catalog(catalog)?;
    let pool = pool(workers)?;
    let start = Instant::now();
    let cache = RenderCache::default();
    let mut summary = GenerationSummary::from_specs(std::iter::empty());
    let batch = (workers.max(1) as u64 * 8).max(32);
    let mut written = 0usize;
    let mut next = 0u64;
    while next < count {
        let end = (next + batch).min(count);
        let rendered: Vec<Result<(SceneSpec, Vec<u8>)>> = pool.install(|| {
            (next..end)
                .into_par_iter()
                .map(|i| {
                    let spec = plan_scene_with_id(catalog, cfg, &root.child(i as u32), scene_id(i))?;
                    let img = render_cached(&spec, catalog, &cache)?;
                    Ok((spec, raster::encode_png(&img)?))
                })
                .collect()
        });
        for (offset, item) in rendered.into_iter().enumerate() {
            let (spec, png) = item?;
            sink.write(next + offset as u64, &spec, &png).map_err(|e| Error::Sink {
                written,
                reason: e.to_string(),
            })?;
            written += 1;
            summary.add(&spec);
        }
        next = end;
    }
    sink.finish().map_err(|e| Error::Sink {
        written,
        reason: e.to_string(),
    })?;
    summary.finalize(start.elapsed().as_secs_f64());
    Ok(summary)
}

/// Reads a `manifest.jsonl` back into scene specs.
pub fn read_manifest(path: &Path) -> Result<Vec<SceneSpec>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| SceneSpec::try_from(serde_json::from_str::<ManifestRecord>(l)?))
        .collect()
}
