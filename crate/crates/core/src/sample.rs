//! Real-video frame sampling and mixed synthetic/real epoch schedules.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::GroupClass;
use crate::raster;
use crate::seed::Seed;

/// Environment variable naming the frame decoder executable.
pub const DECODER_ENV: &str = "GROUPMOOD_DECODER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub path: PathBuf,
    pub frame_count: u64,
    pub label: GroupClass,
    pub split: Split,
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    video_id: String,
    path: PathBuf,
    frame_count: u64,
    label: String,
    split: Split,
}

/// Parses a video index CSV with header `video_id,path,frame_count,label,split`.
/// Labels may be class names or their integer encoding; relative paths are
/// resolved against `base_dir`.
pub fn parse_video_index(text: &str, base_dir: &Path) -> Result<Vec<VideoRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::VideoIndex(e.to_string()))?.clone();
    let expected = ["video_id", "path", "frame_count", "label", "split"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::VideoIndex(format!("expected header {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::VideoIndex(e.to_string()))?;
        let mut byte = record.position().map_or(0, |p| p.byte() as usize).min(text.len());
        while matches!(text.as_bytes().get(byte), Some(b'\n' | b'\r')) {
            byte += 1;
        }
        let line = text.as_bytes()[..byte].iter().filter(|&&b| b == b'\n').count() + 1;
        let row: IndexRow = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::VideoIndex(format!("line {line}: {e}")))?;
        if !seen.insert(row.video_id.clone()) {
            return Err(Error::VideoIndex(format!("line {line}: duplicate video_id {}", row.video_id)));
        }
        if row.frame_count == 0 {
            return Err(Error::VideoIndex(format!("line {line}: video {} has no frames", row.video_id)));
        }
        let label = row
            .label
            .parse()
            .map_err(|e| Error::VideoIndex(format!("line {line}: {e}")))?;
        let path = if row.path.is_absolute() {
            row.path
        } else {
            base_dir.join(row.path)
        };
        out.push(VideoRecord {
            video_id: row.video_id,
            path,
            frame_count: row.frame_count,
            label,
            split: row.split,
        });
    }
    Ok(out)
}

pub fn load_video_index(path: &Path) -> Result<Vec<VideoRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_video_index(&text, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameRef {
    pub video_id: String,
    pub frame_index: u64,
}

/// `k` draws with replacement, uniform over the pooled frames of all videos.
pub fn sample_frames(videos: &[VideoRecord], k: usize, seed: &Seed) -> Result<Vec<FrameRef>> {
    if videos.is_empty() {
        return Err(Error::VideoIndex("no videos to sample from".into()));
    }
    let mut cumulative = Vec::with_capacity(videos.len());
    let mut total = 0u64;
    for v in videos {
        total = total
            .checked_add(v.frame_count)
            .ok_or_else(|| Error::VideoIndex("frame pool overflows".into()))?;
        cumulative.push(total);
    }
    if total == 0 {
        return Err(Error::VideoIndex("frame pool is empty".into()));
    }
    let mut rng = seed.rng();
    Ok((0..k)
        .map(|_| {
            let g = rng.random_range(0..total);
            let vi = cumulative.partition_point(|&c| c <= g);
            let start = if vi == 0 { 0 } else { cumulative[vi - 1] };
            FrameRef {
                video_id: videos[vi].video_id.clone(),
                frame_index: g - start,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Mixed,
    RealOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    /// 1-based.
    pub epoch_index: u32,
    pub phase: Phase,
    pub synthetic_count: u64,
    /// Root seed for this epoch's synthetic scenes.
    pub synthetic_seed: Seed,
    pub real_frame_refs: Vec<FrameRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub mixed_epochs: u32,
    pub mixed_synthetic: u64,
    pub mixed_real: u64,
    pub real_only_epochs: u32,
    pub real_only_frames: u64,
    /// Split whose videos feed the real frames.
    pub split: Split,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            mixed_epochs: 10,
            mixed_synthetic: 10_000,
            mixed_real: 10_000,
            real_only_epochs: 10,
            real_only_frames: 20_000,
            split: Split::Train,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mixed_epochs + self.real_only_epochs == 0 {
            return Err(Error::Config("schedule.mixed_epochs: at least one epoch is required".into()));
        }
        if self.mixed_epochs > 0 && self.mixed_synthetic == 0 {
            return Err(Error::Config("schedule.mixed_synthetic: mixed epochs need mixed_synthetic > 0".into()));
        }
        if self.real_only_epochs > 0 && self.real_only_frames == 0 {
            return Err(Error::Config("schedule.real_only_frames: real-only epochs need real_only_frames > 0".into()));
        }
        Ok(())
    }
}

/// Epoch plans: `mixed_epochs` mixed epochs, then `real_only_epochs`
/// real-only epochs. Epoch `e` draws from `seed.child(e)`.
pub fn build_schedule(cfg: &ScheduleConfig, videos: &[VideoRecord], seed: &Seed) -> Result<Vec<EpochPlan>> {
    cfg.validate()?;
    let pool: Vec<VideoRecord> = videos.iter().filter(|v| v.split == cfg.split).cloned().collect();
    let total = cfg.mixed_epochs + cfg.real_only_epochs;
    let mut plans = Vec::with_capacity(total as usize);
    for epoch in 1..=total {
        let (phase, synthetic, real) = if epoch <= cfg.mixed_epochs {
            (Phase::Mixed, cfg.mixed_synthetic, cfg.mixed_real)
        } else {
            (Phase::RealOnly, 0, cfg.real_only_frames)
        };
        let epoch_seed = seed.child(epoch);
        let refs = if real > 0 {
            sample_frames(&pool, real as usize, &epoch_seed.child(0))?
        } else {
            Vec::new()
        };
        plans.push(EpochPlan {
            epoch_index: epoch,
            phase,
            synthetic_count: synthetic,
            synthetic_seed: epoch_seed.child(1),
            real_frame_refs: refs,
        });
    }
    Ok(plans)
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// How frames are decoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameDecoder {
    /// `<program> <video path> <frame index>` must print the frame as PNG on
    /// standard output and exit 0.
    Command(PathBuf),
    /// No external decoder; only image-sequence directories can be read.
    None,
}

impl FrameDecoder {
    /// Decoder named by `GROUPMOOD_DECODER`, if set.
    pub fn from_env() -> Self {
        match std::env::var_os(DECODER_ENV) {
            Some(p) if !p.is_empty() => FrameDecoder::Command(PathBuf::from(p)),
            _ => FrameDecoder::None,
        }
    }
}

/// Decodes frame `frame_index` of `video`.
///
/// A video whose path is a directory is read as an image sequence: frame `i`
/// is the `i`-th image file in name order. Other paths go through the
/// external decoder.
pub fn extract_frame(video: &VideoRecord, frame_index: u64, decoder: &FrameDecoder) -> Result<RgbImage> {
    if frame_index >= video.frame_count {
        return Err(Error::FrameOutOfRange {
            video: video.video_id.clone(),
            index: frame_index,
            frame_count: video.frame_count,
        });
    }
    let fail = |reason: String| Error::FrameDecode {
        video: video.video_id.clone(),
        index: frame_index,
        reason,
    };
    if video.path.is_dir() {
        let files = image_files(&video.path)?;
        if files.len() as u64 != video.frame_count {
            return Err(fail(format!(
                "index lists {} frames but {} holds {}",
                video.frame_count,
                video.path.display(),
                files.len()
            )));
        }
        let (img, _) = raster::load_image(&files[frame_index as usize]).map_err(|e| fail(e.to_string()))?;
        return Ok(img);
    }
    let FrameDecoder::Command(program) = decoder else {
        return Err(fail(format!(
            "{} is not an image-sequence directory and {DECODER_ENV} is not set",
            video.path.display()
        )));
    };
    let output = Command::new(program)
        .arg(&video.path)
        .arg(frame_index.to_string())
        .output()
        .map_err(|e| fail(format!("cannot run decoder {}: {e}", program.display())))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(fail(format!("decoder exited with {}: {}", output.status, stderr.trim())));
    }
    raster::decode_png(&output.stdout).map_err(|e| fail(e.to_string()))
}
