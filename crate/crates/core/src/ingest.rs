//! Face and background asset catalogs, and color-filter background removal
//! for studio face photographs.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Emotion;
use crate::raster::{self, AlphaMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaceSource {
    /// Whole head with neck and shoulders.
    FullHead,
    /// Tight chin-to-forehead crop.
    FaceCrop,
}

#[derive(Debug, Clone)]
pub struct FaceAsset {
    pub id: String,
    pub pixels: RgbImage,
    pub alpha: AlphaMask,
    pub emotion: Emotion,
    pub source: FaceSource,
}

impl FaceAsset {
    pub fn new(id: impl Into<String>, pixels: RgbImage, alpha: AlphaMask, emotion: Emotion, source: FaceSource) -> Result<Self> {
        let id = id.into();
        if pixels.dimensions() != alpha.dimensions() {
            return Err(Error::Catalog(format!(
                "face {id}: alpha {:?} does not match pixels {:?}",
                alpha.dimensions(),
                pixels.dimensions()
            )));
        }
        if !alpha.any_positive() {
            return Err(Error::Catalog(format!("face {id} is fully transparent")));
        }
        Ok(FaceAsset {
            id,
            pixels,
            alpha,
            emotion,
            source,
        })
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.pixels.dimensions()
    }
}

#[derive(Debug, Clone)]
pub struct BackgroundAsset {
    pub id: String,
    pub pixels: RgbImage,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Emotion token is the name of the image's parent directory.
    Subdir,
    /// Emotion token is extracted from the file stem.
    FilenameToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceSourceLayout {
    /// Directory relative to the catalog root.
    pub dir: PathBuf,
    #[serde(default = "default_source")]
    pub source: FaceSource,
    #[serde(default = "default_label_mode")]
    pub label_mode: LabelMode,
    /// Dataset token to emotion. Tokens not listed here must be emotion names.
    #[serde(default)]
    pub token_map: BTreeMap<String, Emotion>,
    /// Regex applied to the file stem in `filename_token` mode; the first
    /// capture group is the token.
    #[serde(default = "default_token_pattern")]
    pub token_pattern: String,
}

fn default_source() -> FaceSource {
    FaceSource::FullHead
}

fn default_label_mode() -> LabelMode {
    LabelMode::Subdir
}

fn default_token_pattern() -> String {
    r"([^_\-]+)$".to_string()
}

impl FaceSourceLayout {
    pub fn new(dir: impl Into<PathBuf>, source: FaceSource, label_mode: LabelMode) -> Self {
        FaceSourceLayout {
            dir: dir.into(),
            source,
            label_mode,
            token_map: BTreeMap::new(),
            token_pattern: default_token_pattern(),
        }
    }

    fn resolve_token(&self, token: &str) -> Option<Emotion> {
        if let Some(e) = self.token_map.get(token) {
            return Some(*e);
        }
        if let Some((_, e)) = self.token_map.iter().find(|(k, _)| k.eq_ignore_ascii_case(token)) {
            return Some(*e);
        }
        token.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogLayout {
    #[serde(default = "default_faces")]
    pub faces: Vec<FaceSourceLayout>,
    /// Images directly inside are category "uncategorized"; images in a
    /// subdirectory take its name as category.
    #[serde(default = "default_backgrounds_dir")]
    pub backgrounds_dir: PathBuf,
    /// Faces are cropped to their alpha support and then downscaled so the
    /// longer side does not exceed this.
    #[serde(default = "default_max_face_side")]
    pub max_face_side: u32,
}

fn default_faces() -> Vec<FaceSourceLayout> {
    vec![FaceSourceLayout::new("faces", FaceSource::FullHead, LabelMode::Subdir)]
}

fn default_backgrounds_dir() -> PathBuf {
    PathBuf::from("backgrounds")
}

fn default_max_face_side() -> u32 {
    256
}

impl Default for CatalogLayout {
    fn default() -> Self {
        CatalogLayout {
            faces: default_faces(),
            backgrounds_dir: default_backgrounds_dir(),
            max_face_side: default_max_face_side(),
        }
    }
}

/// Color-filter parameters for [`remove_background`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChromaParams {
    /// Maximum weighted color distance to the backdrop color still counted as background.
    pub tolerance: f32,
    /// Width in pixels of the border ring used to estimate the backdrop color.
    pub border_width: u32,
    /// Maximum mean distance of border pixels to their median color.
    pub max_border_spread: f32,
    /// If false, an image with no foreground yields an all-zero mask instead of an error.
    pub empty_is_error: bool,
}

impl Default for ChromaParams {
    fn default() -> Self {
        ChromaParams {
            tolerance: 40.0,
            border_width: 3,
            max_border_spread: 30.0,
            empty_is_error: true,
        }
    }
}

impl ChromaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0) || !(self.max_border_spread >= 0.0) {
            return Err(Error::Config("chroma.tolerance: tolerances must be non-negative".into()));
        }
        if self.border_width == 0 {
            return Err(Error::Config("chroma.border_width: must be at least 1".into()));
        }
        Ok(())
    }
}

/// "Redmean" weighted RGB distance, a cheap perceptual approximation that
/// weights channel differences by the mean red level.
pub fn color_distance(a: [u8; 3], b: [u8; 3]) -> f32 {
    let rmean = (f32::from(a[0]) + f32::from(b[0])) * 0.5;
    let dr = f32::from(a[0]) - f32::from(b[0]);
    let dg = f32::from(a[1]) - f32::from(b[1]);
    let db = f32::from(a[2]) - f32::from(b[2]);
    ((2.0 + rmean / 256.0) * dr * dr + 4.0 * dg * dg + (2.0 + (255.0 - rmean) / 256.0) * db * db).sqrt()
}

fn median(values: &mut [u8]) -> u8 {
    values.sort_unstable();
    values[values.len() / 2]
}

/// Alpha mask separating a face from a near-uniform studio backdrop.
///
/// The backdrop color is the per-channel median of a border ring. Pixels
/// within `tolerance` of it are background. Only the largest 8-connected
/// foreground component is kept, followed by a 3x3 morphological closing.
pub fn remove_background(img: &RgbImage, params: &ChromaParams) -> Result<AlphaMask> {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Catalog("empty image".into()));
    }
    let bw = params.border_width.min(w.div_ceil(2)).min(h.div_ceil(2));
    let mut border = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x < bw || y < bw || x >= w - bw || y >= h - bw {
                border.push(img.get_pixel(x, y).0);
            }
        }
    }
    let mut chan: Vec<u8> = Vec::with_capacity(border.len());
    let mut backdrop = [0u8; 3];
    for (k, slot) in backdrop.iter_mut().enumerate() {
        chan.clear();
        chan.extend(border.iter().map(|p| p[k]));
        *slot = median(&mut chan);
    }
    let spread = border.iter().map(|p| color_distance(*p, backdrop)).sum::<f32>() / border.len() as f32;
    if spread > params.max_border_spread {
        return Err(Error::NoUniformBackground);
    }

    let fg: Vec<bool> = img.pixels().map(|p| color_distance(p.0, backdrop) > params.tolerance).collect();
    let kept = largest_component(&fg, w, h);
    let closed = close3x3(&kept, w, h);
    if !closed.iter().any(|&b| b) {
        if params.empty_is_error {
            return Err(Error::EmptyForeground);
        }
        return Ok(AlphaMask::new(w, h, 0.0));
    }
    Ok(AlphaMask::from_vec(w, h, closed.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect()))
}

/// Keeps the largest 8-connected `true` region; ties go to the region whose
/// first pixel comes first in raster order.
pub(crate) fn largest_component(fg: &[bool], w: u32, h: u32) -> Vec<bool> {
    let (w, h) = (w as usize, h as usize);
    let mut label = vec![0u32; fg.len()];
    let mut best = (0usize, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if fg[j] && label[j] == 0 {
                        label[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        if size > best.0 {
            best = (size, next);
        }
    }
    label.iter().map(|&l| l != 0 && l == best.1).collect()
}

/// Dilation then erosion with a 3x3 square. Outside pixels count as unset
/// while dilating and as set while eroding, so shapes touching the edge keep
/// their extent.
pub(crate) fn close3x3(m: &[bool], w: u32, h: u32) -> Vec<bool> {
    let (w, h) = (w as i64, h as i64);
    let at = |v: &[bool], x: i64, y: i64, outside: bool| -> bool {
        if x < 0 || y < 0 || x >= w || y >= h {
            outside
        } else {
            v[(y * w + x) as usize]
        }
    };
    let mut dilated = vec![false; m.len()];
    for y in 0..h {
        for x in 0..w {
            dilated[(y * w + x) as usize] = (-1..=1).any(|dy| (-1..=1).any(|dx| at(m, x + dx, y + dy, false)));
        }
    }
    let mut eroded = vec![false; m.len()];
    for y in 0..h {
        for x in 0..w {
            eroded[(y * w + x) as usize] = (-1..=1).all(|dy| (-1..=1).all(|dx| at(&dilated, x + dx, y + dy, true)));
        }
    }
    eroded
}

/// Immutable set of face and background assets, ordered by id.
#[derive(Debug, Clone, Default)]
pub struct AssetCatalog {
    faces: Vec<FaceAsset>,
    backgrounds: Vec<BackgroundAsset>,
    face_index: BTreeMap<String, usize>,
    background_index: BTreeMap<String, usize>,
    by_emotion: BTreeMap<Emotion, Vec<usize>>,
}

impl AssetCatalog {
    /// Builds a catalog from in-memory assets, sorting both lists by id.
    pub fn from_assets(mut faces: Vec<FaceAsset>, mut backgrounds: Vec<BackgroundAsset>) -> Result<Self> {
        faces.sort_by(|a, b| a.id.cmp(&b.id));
        backgrounds.sort_by(|a, b| a.id.cmp(&b.id));
        let mut face_index = BTreeMap::new();
        let mut by_emotion: BTreeMap<Emotion, Vec<usize>> = BTreeMap::new();
        for (i, f) in faces.iter().enumerate() {
            if face_index.insert(f.id.clone(), i).is_some() {
                return Err(Error::Catalog(format!("duplicate face id {}", f.id)));
            }
            by_emotion.entry(f.emotion).or_default().push(i);
        }
        let mut background_index = BTreeMap::new();
        for (i, b) in backgrounds.iter().enumerate() {
            if background_index.insert(b.id.clone(), i).is_some() {
                return Err(Error::Catalog(format!("duplicate background id {}", b.id)));
            }
        }
        Ok(AssetCatalog {
            faces,
            backgrounds,
            face_index,
            background_index,
            by_emotion,
        })
    }

    pub fn faces(&self) -> &[FaceAsset] {
        &self.faces
    }

    pub fn backgrounds(&self) -> &[BackgroundAsset] {
        &self.backgrounds
    }

    pub fn face(&self, id: &str) -> Option<&FaceAsset> {
        self.face_index.get(id).map(|&i| &self.faces[i])
    }

    pub fn background(&self, id: &str) -> Option<&BackgroundAsset> {
        self.background_index.get(id).map(|&i| &self.backgrounds[i])
    }

    /// Ids of faces carrying `emotion`, in catalog order.
    pub fn face_ids(&self, emotion: Emotion) -> Vec<&str> {
        self.faces_with(emotion).map(|f| f.id.as_str()).collect()
    }

    pub fn faces_with(&self, emotion: Emotion) -> impl Iterator<Item = &FaceAsset> {
        self.by_emotion
            .get(&emotion)
            .into_iter()
            .flatten()
            .map(move |&i| &self.faces[i])
    }

    pub fn bucket_len(&self, emotion: Emotion) -> usize {
        self.by_emotion.get(&emotion).map_or(0, Vec::len)
    }

    /// Errors if any of `emotions` has no face, or if there is no background
    /// of at least `min_size`.
    pub fn require(&self, emotions: &[Emotion], min_size: (u32, u32)) -> Result<()> {
        for &e in emotions {
            if self.bucket_len(e) == 0 {
                return Err(Error::Catalog(format!("no face assets for required emotion {e}")));
            }
        }
        if self.backgrounds.is_empty() {
            return Err(Error::Catalog("no background assets".into()));
        }
        for b in &self.backgrounds {
            let (w, h) = b.pixels.dimensions();
            if w < min_size.0 || h < min_size.1 {
                return Err(Error::Catalog(format!(
                    "background {} is {w}x{h}, smaller than render size {}x{}",
                    b.id, min_size.0, min_size.1
                )));
            }
        }
        Ok(())
    }
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_images(&p, out)?;
        } else if is_image(&p) {
            out.push(p);
        }
    }
    Ok(())
}

fn asset_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path).with_extension("");
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn prepare_face(
    root: &Path,
    path: &Path,
    layout: &FaceSourceLayout,
    pattern: Option<&Regex>,
    max_side: u32,
    chroma: &ChromaParams,
) -> Result<FaceAsset> {
    let token = match layout.label_mode {
        LabelMode::Subdir => path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        LabelMode::FilenameToken => {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            pattern
                .and_then(|re| re.captures(&stem))
                .and_then(|c| c.get(1))
                .map(|m| m.as_str().to_string())
                .unwrap_or(stem)
        }
    };
    let emotion = layout.resolve_token(&token).ok_or_else(|| Error::UnknownEmotionIn {
        path: path.to_path_buf(),
        token: token.clone(),
    })?;
    let (pixels, alpha) = raster::load_image(path)?;
    let alpha = match alpha {
        Some(a) => a,
        None => remove_background(&pixels, chroma).map_err(|e| Error::Catalog(format!("{}: {e}", path.display())))?,
    };
    let Some((x0, y0, x1, y1)) = alpha.support_bounds() else {
        return Err(Error::Catalog(format!("{}: face is fully transparent", path.display())));
    };
    let (cw, ch) = (x1 - x0, y1 - y0);
    let mut pixels = image::imageops::crop_imm(&pixels, x0, y0, cw, ch).to_image();
    let mut alpha = alpha.crop(x0, y0, cw, ch);
    let longest = cw.max(ch);
    if longest > max_side {
        let k = max_side as f32 / longest as f32;
        let nw = ((cw as f32 * k).round() as u32).max(1);
        let nh = ((ch as f32 * k).round() as u32).max(1);
        (pixels, alpha) = raster::resize_layer(&pixels, &alpha, nw, nh);
    }
    FaceAsset::new(asset_id(root, path), pixels, alpha, emotion, layout.source)
}

/// Loads and validates every face source and the background directory.
///
/// Images are decoded in parallel; the returned catalog is sorted by id and
/// does not depend on the decoding order.
pub fn load_catalog(root: &Path, layout: &CatalogLayout, chroma: &ChromaParams) -> Result<AssetCatalog> {
    if !root.is_dir() {
        return Err(Error::io(root, std::io::Error::new(std::io::ErrorKind::NotFound, "catalog root is not a directory")));
    }
    chroma.validate()?;
    if layout.max_face_side < 16 {
        return Err(Error::Config("catalog.max_face_side: must be at least 16".into()));
    }
    let mut faces = Vec::new();
    for src in &layout.faces {
        let pattern = match src.label_mode {
            LabelMode::FilenameToken => Some(
                Regex::new(&src.token_pattern)
                    .map_err(|e| Error::Config(format!("invalid token_pattern {:?}: {e}", src.token_pattern)))?,
            ),
            LabelMode::Subdir => None,
        };
        let dir = root.join(&src.dir);
        let mut paths = Vec::new();
        collect_images(&dir, &mut paths)?;
        if paths.is_empty() {
            return Err(Error::Catalog(format!("face directory {} holds no images", dir.display())));
        }
        let loaded: Vec<Result<FaceAsset>> = paths
            .par_iter()
            .map(|p| prepare_face(root, p, src, pattern.as_ref(), layout.max_face_side, chroma))
            .collect();
        faces.extend(first_error(loaded)?);
    }

    let bg_dir = root.join(&layout.backgrounds_dir);
    let mut bg_paths = Vec::new();
    collect_images(&bg_dir, &mut bg_paths)?;
    let backgrounds: Vec<Result<BackgroundAsset>> = bg_paths
        .par_iter()
        .map(|p| {
            let (pixels, _) = raster::load_image(p)?;
            let rel = p.strip_prefix(&bg_dir).unwrap_or(p);
            let category = if rel.components().count() > 1 {
                rel.components().next().unwrap().as_os_str().to_string_lossy().into_owned()
            } else {
                "uncategorized".to_string()
            };
            Ok(BackgroundAsset {
                id: asset_id(root, p),
                pixels,
                category,
            })
        })
        .collect();
    let backgrounds = first_error(backgrounds)?;
    if backgrounds.is_empty() {
        return Err(Error::Catalog(format!("background directory {} holds no images", bg_dir.display())));
    }
    AssetCatalog::from_assets(faces, backgrounds)
}
