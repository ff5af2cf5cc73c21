//! C ABI for the groupmood toolkit.
//!
//! Every fallible function returns a [`GmStatus`]; on failure the message is
//! available from [`gm_last_error`] on the same thread. Objects are handed out
//! as opaque pointers and released with the matching `*_free` function.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use groupmood::compose::{self, generate_dataset, DirectorySink, ManifestRecord};
use groupmood::evalmetrics::{compute_report, format_report, Aggregation, EvalReport, ReportStyle, ScoreSeries};
use groupmood::ingest::{load_catalog, AssetCatalog};
use groupmood::{Config, Emotion, Error, GroupClass, LabelHistogram, Seed};
use image::RgbImage;

/// Result codes. `GM_STATUS_OK` is zero; everything else is an error.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmStatus {
    Ok = 0,
    InvalidArgument = 1,
    Io = 2,
    Config = 3,
    Catalog = 4,
    EmptyHistogram = 5,
    Generation = 6,
    Video = 7,
    Data = 8,
    Panic = 9,
}

/// Output of [`gm_aggregate`] and the `class` arguments: 0 negative, 1 neutral, 2 positive.
pub const GM_CLASS_NEGATIVE: u8 = 0;
pub const GM_CLASS_NEUTRAL: u8 = 1;
pub const GM_CLASS_POSITIVE: u8 = 2;

pub const GM_AGG_AVERAGE: u32 = 0;
pub const GM_AGG_VOTE: u32 = 1;

pub const GM_FORMAT_TABLE: u32 = 0;
pub const GM_FORMAT_JSON: u32 = 1;

/// Parsed experiment configuration.
pub struct GmConfig(Config);

/// Loaded face and background assets.
pub struct GmCatalog(AssetCatalog);

/// An 8-bit RGB raster, row-major, 3 bytes per pixel.
pub struct GmImage(RgbImage);

/// Metrics computed from (truth, prediction) pairs.
pub struct GmReport(EvalReport);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GmSummary {
    pub count: u64,
    pub class_counts: [u64; 3],
    pub faces_placed: u64,
    pub retried_scenes: u64,
    pub elapsed_secs: f64,
    pub images_per_sec: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GmMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub precision: [f64; 3],
    pub recall: [f64; 3],
    pub f1: [f64; 3],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> GmStatus {
    match e {
        Error::Io { .. } | Error::Decode { .. } | Error::Encode(_) => GmStatus::Io,
        Error::Config(_) => GmStatus::Config,
        Error::Catalog(_)
        | Error::UnknownEmotion(_)
        | Error::UnknownEmotionIn { .. }
        | Error::NoUniformBackground
        | Error::EmptyForeground
        | Error::MissingAsset(_) => GmStatus::Catalog,
        Error::EmptyHistogram => GmStatus::EmptyHistogram,
        Error::DegenerateAugmentation { .. } | Error::Overcrowded { .. } | Error::Sink { .. } => GmStatus::Generation,
        Error::VideoIndex(_) | Error::FrameOutOfRange { .. } | Error::FrameDecode { .. } | Error::FrameTooSmall { .. } => {
            GmStatus::Video
        }
        Error::UnknownGroupClass(_) | Error::Predictions(_) | Error::ScoreSeries(_) | Error::Json(_) => GmStatus::Data,
    }
}

enum Failure {
    Arg(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard<F>(f: F) -> GmStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GmStatus::Ok
        }
        Ok(Err(Failure::Arg(m))) => {
            set_error(m);
            GmStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| (*s).to_owned())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            GmStatus::Panic
        }
    }
}

fn arg(msg: &str) -> Failure {
    Failure::Arg(msg.to_owned())
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Arg(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{name} is not valid UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::Arg(format!("{name} is null")))
}

unsafe fn obj<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::Arg(format!("{name} is null")))
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn class(c: u8) -> Result<GroupClass, Failure> {
    GroupClass::from_index(usize::from(c)).ok_or_else(|| Failure::Arg(format!("class {c} is not 0, 1 or 2")))
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library and valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn gm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Maps an emotion name (case-insensitive) to its group class using the
/// default rule, where surprise counts as neutral.
#[no_mangle]
pub unsafe extern "C" fn gm_emotion_to_class(emotion: *const c_char, out_class: *mut u8) -> GmStatus {
    guard(|| {
        let e: Emotion = text(emotion, "emotion")?.parse()?;
        *out(out_class, "out_class")? = groupmood::label::map_emotion_to_class(e).index() as u8;
        Ok(())
    })
}

/// Group label of a class histogram: the strict maximum, neutral on any tie.
#[no_mangle]
pub unsafe extern "C" fn gm_group_label(negative: u32, neutral: u32, positive: u32, out_class: *mut u8) -> GmStatus {
    guard(|| {
        let c = LabelHistogram::new(negative, neutral, positive).group_label()?;
        *out(out_class, "out_class")? = c.index() as u8;
        Ok(())
    })
}

/// Key of the seed used for item `index` under `root`.
#[no_mangle]
pub extern "C" fn gm_derive_seed(root: u64, index: u32) -> u64 {
    Seed::new(root).child(index).key()
}

/// Default configuration.
#[no_mangle]
pub unsafe extern "C" fn gm_config_default(out_config: *mut *mut GmConfig) -> GmStatus {
    guard(|| {
        *out(out_config, "out_config")? = Box::into_raw(Box::new(GmConfig(Config::default())));
        Ok(())
    })
}

/// Parses a TOML configuration from a string.
#[no_mangle]
pub unsafe extern "C" fn gm_config_parse(toml: *const c_char, out_config: *mut *mut GmConfig) -> GmStatus {
    guard(|| {
        let slot = out(out_config, "out_config")?;
        let cfg = Config::parse(text(toml, "toml")?)?;
        *slot = Box::into_raw(Box::new(GmConfig(cfg)));
        Ok(())
    })
}

/// Loads a TOML configuration file.
#[no_mangle]
pub unsafe extern "C" fn gm_config_load(path: *const c_char, out_config: *mut *mut GmConfig) -> GmStatus {
    guard(|| {
        let slot = out(out_config, "out_config")?;
        let cfg = Config::load(Path::new(text(path, "path")?))?;
        *slot = Box::into_raw(Box::new(GmConfig(cfg)));
        Ok(())
    })
}

/// Serializes a configuration back to TOML. Free with [`gm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn gm_config_to_toml(config: *const GmConfig, out_toml: *mut *mut c_char) -> GmStatus {
    guard(|| {
        let cfg = obj(config, "config")?;
        *out(out_toml, "out_toml")? = c_string(cfg.0.to_toml());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gm_config_free(config: *mut GmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Loads the asset tree under `root` using the config's catalog layout.
#[no_mangle]
pub unsafe extern "C" fn gm_catalog_load(
    root: *const c_char,
    config: *const GmConfig,
    out_catalog: *mut *mut GmCatalog,
) -> GmStatus {
    guard(|| {
        let slot = out(out_catalog, "out_catalog")?;
        let cfg = &obj(config, "config")?.0;
        let cat = load_catalog(Path::new(text(root, "root")?), &cfg.catalog, &cfg.chroma)?;
        *slot = Box::into_raw(Box::new(GmCatalog(cat)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gm_catalog_face_count(catalog: *const GmCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.0.faces().len())
}

#[no_mangle]
pub unsafe extern "C" fn gm_catalog_background_count(catalog: *const GmCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.0.backgrounds().len())
}

#[no_mangle]
pub unsafe extern "C" fn gm_catalog_free(catalog: *mut GmCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Generates `count` scenes into `out_dir` (images/ and manifest.jsonl).
/// `out_summary` may be null.
#[no_mangle]
pub unsafe extern "C" fn gm_generate(
    catalog: *const GmCatalog,
    config: *const GmConfig,
    seed: u64,
    count: u64,
    workers: u32,
    out_dir: *const c_char,
    out_summary: *mut GmSummary,
) -> GmStatus {
    guard(|| {
        let cat = &obj(catalog, "catalog")?.0;
        let cfg = obj(config, "config")?.0.compose();
        let dir = Path::new(text(out_dir, "out_dir")?);
        let mut sink = DirectorySink::new(dir).map_err(|e| Error::io(dir, e))?;
        let s = generate_dataset(cat, &cfg, &Seed::new(seed), count, workers.max(1) as usize, &mut sink)?;
        if let Some(o) = out_summary.as_mut() {
            *o = GmSummary {
                count: s.count,
                class_counts: s.class_counts,
                faces_placed: s.faces_placed,
                retried_scenes: s.retried_scenes,
                elapsed_secs: s.elapsed_secs,
                images_per_sec: s.images_per_sec,
            };
        }
        Ok(())
    })
}

fn plan(cat: &AssetCatalog, cfg: &Config, seed: u64, index: u32) -> Result<compose::SceneSpec, Error> {
    let mut spec = compose::plan_scene(cat, &cfg.compose(), &Seed::new(seed).child(index))?;
    spec.scene_id = compose::scene_id(u64::from(index));
    Ok(spec)
}

/// Manifest record (JSON) of scene `index` of the dataset generated with
/// `seed`. Free with [`gm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn gm_plan_scene(
    catalog: *const GmCatalog,
    config: *const GmConfig,
    seed: u64,
    index: u32,
    out_json: *mut *mut c_char,
) -> GmStatus {
    guard(|| {
        let slot = out(out_json, "out_json")?;
        let spec = plan(&obj(catalog, "catalog")?.0, &obj(config, "config")?.0, seed, index)?;
        *slot = c_string(serde_json::to_string(&ManifestRecord::from(&spec)).map_err(Error::from)?);
        Ok(())
    })
}

/// Renders scene `index` of the dataset generated with `seed`.
#[no_mangle]
pub unsafe extern "C" fn gm_render_scene(
    catalog: *const GmCatalog,
    config: *const GmConfig,
    seed: u64,
    index: u32,
    out_image: *mut *mut GmImage,
) -> GmStatus {
    guard(|| {
        let slot = out(out_image, "out_image")?;
        let cat = &obj(catalog, "catalog")?.0;
        let spec = plan(cat, &obj(config, "config")?.0, seed, index)?;
        *slot = Box::into_raw(Box::new(GmImage(compose::render_scene(&spec, cat)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gm_image_width(image: *const GmImage) -> u32 {
    image.as_ref().map_or(0, |i| i.0.width())
}

#[no_mangle]
pub unsafe extern "C" fn gm_image_height(image: *const GmImage) -> u32 {
    image.as_ref().map_or(0, |i| i.0.height())
}

/// Pointer to `width * height * 3` bytes owned by the image.
#[no_mangle]
pub unsafe extern "C" fn gm_image_data(image: *const GmImage) -> *const u8 {
    image.as_ref().map_or(ptr::null(), |i| i.0.as_raw().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn gm_image_free(image: *mut GmImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Aggregates `frames` rows of three class scores (row-major) into one
/// video label. `method` is `GM_AGG_AVERAGE` or `GM_AGG_VOTE`.
#[no_mangle]
pub unsafe extern "C" fn gm_aggregate(scores: *const f64, frames: usize, method: u32, out_class: *mut u8) -> GmStatus {
    guard(|| {
        let slot = out(out_class, "out_class")?;
        if scores.is_null() || frames == 0 {
            return Err(arg("scores must hold at least one frame"));
        }
        let agg = match method {
            GM_AGG_AVERAGE => Aggregation::Average,
            GM_AGG_VOTE => Aggregation::Vote,
            m => return Err(Failure::Arg(format!("unknown aggregation method {m}"))),
        };
        let flat = std::slice::from_raw_parts(scores, frames * 3);
        let rows: Vec<[f64; 3]> = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let series = ScoreSeries::new("ffi", rows)?;
        *slot = agg.apply(&series).index() as u8;
        Ok(())
    })
}

/// Builds a report from `n` (truth, prediction) class pairs.
#[no_mangle]
pub unsafe extern "C" fn gm_report_from_pairs(
    truth: *const u8,
    predicted: *const u8,
    n: usize,
    out_report: *mut *mut GmReport,
) -> GmStatus {
    guard(|| {
        let slot = out(out_report, "out_report")?;
        if n > 0 && (truth.is_null() || predicted.is_null()) {
            return Err(arg("truth and predicted must not be null"));
        }
        let (t, p) = if n == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(truth, n), std::slice::from_raw_parts(predicted, n))
        };
        let pairs = t
            .iter()
            .zip(p)
            .map(|(&a, &b)| Ok((class(a)?, class(b)?)))
            .collect::<Result<Vec<_>, Failure>>()?;
        *slot = Box::into_raw(Box::new(GmReport(compute_report(&pairs)?)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gm_report_metrics(report: *const GmReport, out_metrics: *mut GmMetrics) -> GmStatus {
    guard(|| {
        let r = &obj(report, "report")?.0;
        *out(out_metrics, "out_metrics")? = GmMetrics {
            accuracy: r.accuracy,
            macro_precision: r.macro_precision,
            macro_recall: r.macro_recall,
            macro_f1: r.macro_f1,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        };
        Ok(())
    })
}

/// Confusion counts, row = truth, column = prediction, in class order.
#[no_mangle]
pub unsafe extern "C" fn gm_report_confusion(report: *const GmReport, out_counts: *mut [u64; 9]) -> GmStatus {
    guard(|| {
        let r = &obj(report, "report")?.0;
        let slot = out(out_counts, "out_counts")?;
        for (i, v) in r.confusion.counts.iter().flatten().enumerate() {
            slot[i] = *v;
        }
        Ok(())
    })
}

/// Renders a report as a text table or JSON. Free with [`gm_string_free`].
#[no_mangle]
pub unsafe extern "C" fn gm_report_format(report: *const GmReport, format: u32, out_text: *mut *mut c_char) -> GmStatus {
    guard(|| {
        let slot = out(out_text, "out_text")?;
        let style = match format {
            GM_FORMAT_TABLE => ReportStyle::Table,
            GM_FORMAT_JSON => ReportStyle::Json,
            f => return Err(Failure::Arg(format!("unknown report format {f}"))),
        };
        *slot = c_string(format_report(&obj(report, "report")?.0, style)?);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn gm_report_free(report: *mut GmReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
