use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::ptr;

use groupmood_ffi::*;
use image::{Rgb, RgbImage};

fn last_error() -> String {
    let p = gm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { gm_string_free(p) };
    s
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn labels_and_seeds() {
    let mut class = 9u8;
    for (name, want) in [("anger", GM_CLASS_NEGATIVE), ("Happiness", GM_CLASS_POSITIVE), ("surprise", GM_CLASS_NEUTRAL)] {
        assert_eq!(unsafe { gm_emotion_to_class(c(name).as_ptr(), &mut class) }, GmStatus::Ok);
        assert_eq!(class, want, "{name}");
    }
    assert_eq!(unsafe { gm_emotion_to_class(c("boredom").as_ptr(), &mut class) }, GmStatus::Catalog);
    assert!(last_error().contains("boredom"));

    assert_eq!(unsafe { gm_group_label(3, 1, 2, &mut class) }, GmStatus::Ok);
    assert_eq!(class, GM_CLASS_NEGATIVE);
    assert_eq!(unsafe { gm_group_label(2, 0, 2, &mut class) }, GmStatus::Ok);
    assert_eq!(class, GM_CLASS_NEUTRAL);
    assert_eq!(unsafe { gm_group_label(0, 0, 0, &mut class) }, GmStatus::EmptyHistogram);

    assert_eq!(gm_derive_seed(1, 2), gm_derive_seed(1, 2));
    assert_ne!(gm_derive_seed(1, 2), gm_derive_seed(1, 3));
    assert_ne!(gm_derive_seed(1, 2), gm_derive_seed(2, 2));
    assert_eq!(gm_derive_seed(7, 4), groupmood::Seed::new(7).child(4).key());
}

#[test]
fn null_arguments_are_rejected() {
    assert_eq!(unsafe { gm_group_label(1, 0, 0, ptr::null_mut()) }, GmStatus::InvalidArgument);
    assert!(last_error().contains("out_class"));
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { gm_config_parse(ptr::null(), &mut cfg) }, GmStatus::InvalidArgument);
    assert!(cfg.is_null());
    assert_eq!(unsafe { gm_catalog_face_count(ptr::null()) }, 0);
    assert!(unsafe { gm_image_data(ptr::null()) }.is_null());
    unsafe {
        gm_config_free(ptr::null_mut());
        gm_catalog_free(ptr::null_mut());
        gm_image_free(ptr::null_mut());
        gm_report_free(ptr::null_mut());
        gm_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_the_last_error() {
    let mut class = 0u8;
    assert_ne!(unsafe { gm_group_label(0, 0, 0, &mut class) }, GmStatus::Ok);
    assert!(!gm_last_error().is_null());
    assert_eq!(unsafe { gm_group_label(0, 1, 0, &mut class) }, GmStatus::Ok);
    assert!(gm_last_error().is_null());
}

#[test]
fn config_round_trip_and_errors() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { gm_config_default(&mut cfg) }, GmStatus::Ok);
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { gm_config_to_toml(cfg, &mut text) }, GmStatus::Ok);
    let toml = take_string(text);
    assert!(toml.contains("schema_version = 1"));
    unsafe { gm_config_free(cfg) };

    let mut parsed = ptr::null_mut();
    assert_eq!(unsafe { gm_config_parse(c(&toml).as_ptr(), &mut parsed) }, GmStatus::Ok);
    unsafe { gm_config_free(parsed) };

    let bad = c("schema_version = 1\n[generation]\nmin_faces = 0\n");
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gm_config_parse(bad.as_ptr(), &mut out) }, GmStatus::Config);
    assert!(out.is_null());
    assert!(last_error().contains("line 3"), "{}", last_error());

    let missing = c("/nonexistent/groupmood.toml");
    assert_eq!(unsafe { gm_config_load(missing.as_ptr(), &mut out) }, GmStatus::Io);
}

#[test]
fn aggregation() {
    let scores = [0.6, 0.3, 0.1, 0.1, 0.2, 0.7, 0.1, 0.2, 0.7];
    let mut class = 9u8;
    assert_eq!(unsafe { gm_aggregate(scores.as_ptr(), 3, GM_AGG_AVERAGE, &mut class) }, GmStatus::Ok);
    assert_eq!(class, GM_CLASS_POSITIVE);
    assert_eq!(unsafe { gm_aggregate(scores.as_ptr(), 3, GM_AGG_VOTE, &mut class) }, GmStatus::Ok);
    assert_eq!(class, GM_CLASS_POSITIVE);
    assert_eq!(unsafe { gm_aggregate(scores.as_ptr(), 3, 7, &mut class) }, GmStatus::InvalidArgument);
    assert_eq!(unsafe { gm_aggregate(scores.as_ptr(), 0, GM_AGG_VOTE, &mut class) }, GmStatus::InvalidArgument);
    let bad = [0.5, f64::NAN, 0.1];
    assert_eq!(unsafe { gm_aggregate(bad.as_ptr(), 1, GM_AGG_AVERAGE, &mut class) }, GmStatus::Data);
}

#[test]
fn reports() {
    let truth = [0u8, 0, 1, 1, 2, 2];
    let pred = [0u8, 1, 1, 1, 2, 0];
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { gm_report_from_pairs(truth.as_ptr(), pred.as_ptr(), 6, &mut report) }, GmStatus::Ok);
    let mut m = GmMetrics::default();
    assert_eq!(unsafe { gm_report_metrics(report, &mut m) }, GmStatus::Ok);
    assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
    assert_eq!(m.recall, [0.5, 1.0, 0.5]);
    assert!((m.precision[1] - 2.0 / 3.0).abs() < 1e-12);
    let mut counts = [0u64; 9];
    assert_eq!(unsafe { gm_report_confusion(report, &mut counts) }, GmStatus::Ok);
    assert_eq!(counts, [1, 1, 0, 0, 2, 0, 1, 0, 1]);

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { gm_report_format(report, GM_FORMAT_JSON, &mut text) }, GmStatus::Ok);
    let json: serde_json::Value = serde_json::from_str(&take_string(text)).unwrap();
    assert!((json["accuracy"].as_f64().unwrap() - m.accuracy).abs() < 1e-12);
    assert_eq!(unsafe { gm_report_format(report, GM_FORMAT_TABLE, &mut text) }, GmStatus::Ok);
    assert!(take_string(text).contains("Mean value"));
    assert_eq!(unsafe { gm_report_format(report, 5, &mut text) }, GmStatus::InvalidArgument);
    unsafe { gm_report_free(report) };

    let bad = [3u8];
    assert_eq!(unsafe { gm_report_from_pairs(bad.as_ptr(), bad.as_ptr(), 1, &mut report) }, GmStatus::InvalidArgument);
}

fn write_assets(root: &Path) {
    for (i, e) in ["anger", "fear", "disgust", "sadness", "happiness", "surprise", "neutral"].iter().enumerate() {
        let dir = root.join("faces").join(e);
        fs::create_dir_all(&dir).unwrap();
        let tone = Rgb([180 + 5 * i as u8, 130, 90 + 10 * i as u8]);
        let img = RgbImage::from_fn(60, 80, |x, y| {
            let dx = (x as f32 + 0.5 - 30.0) / 21.0;
            let dy = (y as f32 + 0.5 - 40.0) / 32.0;
            if dx * dx + dy * dy <= 1.0 {
                tone
            } else {
                Rgb([20, 200, 40])
            }
        });
        img.save(dir.join("0.png")).unwrap();
    }
    let bg = root.join("backgrounds").join("indoor");
    fs::create_dir_all(&bg).unwrap();
    RgbImage::from_fn(300, 260, |x, y| Rgb([(x / 2) as u8, (y / 2) as u8, 90]))
        .save(bg.join("room.png"))
        .unwrap();
}

#[test]
fn catalog_plan_render_and_generate() {
    let dir = tempfile::tempdir().unwrap();
    write_assets(dir.path());
    let toml = c("schema_version = 1\n[generation]\nrender_width = 128\nrender_height = 128\n");
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { gm_config_parse(toml.as_ptr(), &mut cfg) }, GmStatus::Ok);
    let mut cat = ptr::null_mut();
    let root = c(dir.path().to_str().unwrap());
    assert_eq!(unsafe { gm_catalog_load(root.as_ptr(), cfg, &mut cat) }, GmStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { gm_catalog_face_count(cat) }, 7);
    assert_eq!(unsafe { gm_catalog_background_count(cat) }, 1);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { gm_plan_scene(cat, cfg, 9, 2, &mut json) }, GmStatus::Ok);
    let rec: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    assert_eq!(rec["scene_id"], "scene_000002");

    let mut img = ptr::null_mut();
    assert_eq!(unsafe { gm_render_scene(cat, cfg, 9, 2, &mut img) }, GmStatus::Ok);
    let (w, h) = unsafe { (gm_image_width(img), gm_image_height(img)) };
    assert_eq!((w, h), (128, 128));
    let data = unsafe { std::slice::from_raw_parts(gm_image_data(img), (w * h * 3) as usize) }.to_vec();
    unsafe { gm_image_free(img) };

    let out = dir.path().join("out");
    let out_c = c(out.to_str().unwrap());
    let mut summary = GmSummary::default();
    assert_eq!(unsafe { gm_generate(cat, cfg, 9, 4, 2, out_c.as_ptr(), &mut summary) }, GmStatus::Ok);
    assert_eq!(summary.count, 4);
    assert_eq!(summary.class_counts.iter().sum::<u64>(), 4);
    let written = image::open(out.join("images").join("scene_000002.png")).unwrap().to_rgb8();
    assert_eq!(written.into_raw(), data);
    let manifest = fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    let line: serde_json::Value = serde_json::from_str(manifest.lines().nth(2).unwrap()).unwrap();
    assert_eq!(line, rec);

    assert_eq!(unsafe { gm_generate(cat, cfg, 9, 0, 1, out_c.as_ptr(), ptr::null_mut()) }, GmStatus::Config);
    unsafe {
        gm_catalog_free(cat);
        gm_config_free(cfg);
    }

    let empty = tempfile::tempdir().unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { gm_config_default(&mut cfg) }, GmStatus::Ok);
    let root = c(empty.path().to_str().unwrap());
    let mut cat = ptr::null_mut();
    assert_ne!(unsafe { gm_catalog_load(root.as_ptr(), cfg, &mut cat) }, GmStatus::Ok);
    assert!(cat.is_null());
    unsafe { gm_config_free(cfg) };
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("groupmood.h");
    let text = fs::read_to_string(&header).unwrap();
    for name in [
        "gm_last_error",
        "gm_group_label",
        "gm_config_load",
        "gm_catalog_load",
        "gm_generate",
        "gm_render_scene",
        "gm_report_from_pairs",
        "gm_aggregate",
        "gm_string_free",
        "typedef struct GmCatalog GmCatalog",
        "GM_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "{name}");
    }
    let probe = tempfile::tempdir().unwrap();
    let src = probe.path().join("probe.c");
    fs::write(
        &src,
        "#include \"groupmood.h\"\nint main(void) { uint8_t c; return gm_group_label(1, 0, 0, &c) == GM_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    if let Ok(o) = Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
}
