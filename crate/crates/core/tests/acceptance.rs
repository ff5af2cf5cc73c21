mod common;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use groupmood::augment::{apply_augment, sample_augment_spec, AugmentOp, AugmentRanges, AugmentSpec};
use groupmood::compose::{generate_dataset, ComposeConfig, DatasetSink, DirectorySink, SceneSpec};
use groupmood::evalmetrics::{compute_report, macro_from_precision_recall};
use groupmood::ingest::{AssetCatalog, FaceSource};
use groupmood::label::compute_group_label;
use groupmood::sample::{build_schedule, sample_frames, Phase, ScheduleConfig, Split, VideoRecord};
use groupmood::{raster, Emotion, Error, GroupClass, LabelHistogram, Seed};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn label_oracle() -> Outcome {
    let mut cases = 0;
    let mut wrong = 0;
    for n in 0..=9u32 {
        for u in 0..=9 - n {
            for p in 0..=9 - n - u {
                if n + u + p == 0 {
                    continue;
                }
                let counts = [n, u, p];
                let top = *counts.iter().max().unwrap();
                let winners: Vec<usize> = (0..3).filter(|&k| counts[k] == top).collect();
                let expect = if winners.len() == 1 { winners[0] } else { GroupClass::Neutral.index() };
                let got = compute_group_label(&LabelHistogram::new(n, u, p)).map(|c| c.index());
                cases += 1;
                if got.ok() != Some(expect) {
                    wrong += 1;
                }
            }
        }
    }
    check(wrong == 0, format!("{cases} histograms with total <= 9, {wrong} disagreements"))
}

#[derive(Default)]
struct Collect {
    specs: Vec<SceneSpec>,
    bad_png: usize,
}

impl DatasetSink for Collect {
    fn write(&mut self, _index: u64, spec: &SceneSpec, png: &[u8]) -> io::Result<()> {
        let [w, h] = spec.render_size;
        match raster::decode_png(png) {
            Ok(img) if img.dimensions() == (w, h) => {}
            _ => self.bad_png += 1,
        }
        self.specs.push(spec.clone());
        Ok(())
    }

    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn occlusion_free() -> Outcome {
    let cat = common::catalog();
    let cfg = ComposeConfig::default();
    let mut sink = Collect::default();
    let start = Instant::now();
    generate_dataset(&cat, &cfg, &Seed::new(2024), 1000, workers(), &mut sink).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (mut overlaps, mut outside) = (0usize, 0usize);
    for s in &sink.specs {
        let [w, h] = s.render_size;
        let boxes: Vec<[u64; 4]> = s
            .faces
            .iter()
            .map(|f| {
                let [x, y] = f.position.map(u64::from);
                let [rw, rh] = f.rendered_size.map(u64::from);
                [x, y, x + rw, y + rh]
            })
            .collect();
        outside += boxes.iter().filter(|b| b[2] > u64::from(w) || b[3] > u64::from(h)).count();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let (a, b) = (boxes[i], boxes[j]);
                if a[0] < b[2] && b[0] < a[2] && a[1] < b[3] && b[1] < a[3] {
                    overlaps += 1;
                }
            }
        }
    }
    check(
        sink.specs.len() == 1000 && overlaps == 0 && outside == 0 && sink.bad_png == 0 && secs < 60.0,
        format!(
            "{} scenes, {overlaps} overlaps, {outside} out of bounds, {} bad images, {secs:.1} s",
            sink.specs.len(),
            sink.bad_png
        ),
    )
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::write_asset_tree(dir.path(), &Emotion::ALL);
    let cfg = dir.path().join("config.toml");
    fs::write(&cfg, "schema_version = 1\n").map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for (out, workers) in [("a", "1"), ("b", "1"), ("c", "8")] {
        let out = dir.path().join(out);
        let o = Command::new(env!("CARGO_BIN_EXE_groupmood"))
            .args(["generate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .args(["--count", "40", "--seed", "17", "--workers", workers])
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
        trees.push(tree_bytes(&out));
    }
    check(
        trees[0].len() == 41 && trees[0] == trees[1] && trees[0] == trees[2],
        format!("{} files per run; runs 1, 1 and 8 workers compared byte for byte", trees[0].len()),
    )
}

fn published_macros() -> Outcome {
    let m = macro_from_precision_recall([0.80, 0.40, 0.60], [0.50, 0.62, 0.62]);
    let got = [m.macro_precision, m.macro_recall, m.macro_f1].map(|v| format!("{v:.2}"));
    check(got == ["0.60", "0.58", "0.57"], format!("macro precision/recall/F1 = {}", got.join("/")))
}

fn confusion_recall() -> Outcome {
    let r = compute_report(&common::pairs_from_confusion(common::diagonal_confusion())).map_err(|e| e.to_string())?;
    let target = [(GroupClass::Neutral, 0.62), (GroupClass::Positive, 0.62), (GroupClass::Negative, 0.50)];
    let worst = target
        .iter()
        .map(|&(c, d)| (r.recall[c.index()] - d).abs())
        .fold(0.0f64, f64::max);
    check(worst <= 0.005, format!("largest recall deviation {worst:.4}"))
}

fn schedule_fixture() -> Outcome {
    let videos: Vec<VideoRecord> = (0..3)
        .map(|i| VideoRecord {
            video_id: format!("v{i}"),
            path: PathBuf::from(format!("v{i}.mp4")),
            frame_count: 100 + i,
            label: GroupClass::Neutral,
            split: Split::Train,
        })
        .collect();
    let plans = build_schedule(&ScheduleConfig::default(), &videos, &Seed::new(1)).map_err(|e| e.to_string())?;
    let mixed = plans.iter().take_while(|p| p.phase == Phase::Mixed).count();
    let ok_mixed = plans[..mixed]
        .iter()
        .all(|p| p.synthetic_count == 10_000 && p.real_frame_refs.len() == 10_000);
    let rest = &plans[mixed..];
    let ok_rest = !rest.is_empty()
        && rest
            .iter()
            .all(|p| p.phase == Phase::RealOnly && p.synthetic_count == 0 && p.real_frame_refs.len() == 20_000);
    check(
        mixed == 10 && ok_mixed && ok_rest,
        format!("{mixed} mixed epochs of 10000+10000, {} real-only epochs of 20000", rest.len()),
    )
}

fn sampling_chi_square() -> Outcome {
    let sizes = [5u64, 10, 15];
    let videos: Vec<VideoRecord> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| VideoRecord {
            video_id: format!("v{i}"),
            path: PathBuf::from(format!("v{i}.mp4")),
            frame_count: n,
            label: GroupClass::Positive,
            split: Split::Train,
        })
        .collect();
    let draws = 100_000usize;
    let refs = sample_frames(&videos, draws, &Seed::new(31)).map_err(|e| e.to_string())?;
    let total: u64 = sizes.iter().sum();
    let mut counts = vec![0u64; total as usize];
    for r in &refs {
        let v: usize = r.video_id[1..].parse().unwrap();
        let offset: u64 = sizes[..v].iter().sum();
        counts[(offset + r.frame_index) as usize] += 1;
    }
    let expected = draws as f64 / total as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new((total - 1) as f64).unwrap().cdf(stat);
    check(p > 0.001, format!("chi-square {stat:.2} over {total} frames, p = {p:.4}"))
}

fn augmentation_identities() -> Outcome {
    let a = common::face("f", Emotion::Happiness, 48, 64, 7, FaceSource::FullHead);
    let identities = vec![
        AugmentOp::Rotate { degrees: 0.0 },
        AugmentOp::Scale { factor: 1.0 },
        AugmentOp::Translate { dx: 0.0, dy: 0.0 },
        AugmentOp::Shear { kx: 0.0, ky: 0.0 },
        AugmentOp::Perspective { corners: [[0.0; 2]; 4] },
        AugmentOp::Elastic {
            alpha: 0.0,
            sigma: 8.0,
            field_seed: 3,
        },
        AugmentOp::Brightness { delta: 0.0 },
        AugmentOp::Contrast { factor: 1.0 },
    ];
    let mut failures = Vec::new();
    for op in &identities {
        let out = apply_augment(&a, &AugmentSpec { ops: vec![op.clone()] }, 1).map_err(|e| e.to_string())?;
        if out.pixels != a.pixels || out.alpha != a.alpha {
            failures.push(format!("{op:?} not a no-op"));
        }
    }
    let flip = AugmentSpec {
        ops: vec![AugmentOp::HorizontalFlip, AugmentOp::HorizontalFlip],
    };
    let twice = apply_augment(&a, &flip, 1).map_err(|e| e.to_string())?;
    if twice.pixels != a.pixels || twice.alpha != a.alpha {
        failures.push("flip twice differs".into());
    }
    let mut ranges = AugmentRanges::default();
    ranges.set_probability(0.7);
    let mut degenerate = 0;
    for i in 0..1000u32 {
        let s = sample_augment_spec(&ranges, &Seed::new(12).child(i));
        match apply_augment(&a, &s, 1) {
            Ok(out) => {
                if !out.alpha.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
                    failures.push(format!("spec {i}: alpha out of range"));
                }
            }
            Err(Error::DegenerateAugmentation { .. }) => degenerate += 1,
            Err(e) => failures.push(format!("spec {i}: {e}")),
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} identity ops bit-exact, flip involution, 1000 random specs in range ({degenerate} degenerate)", identities.len())
        } else {
            failures.join("; ")
        },
    )
}

fn throughput_catalog() -> AssetCatalog {
    let mut faces = Vec::new();
    for (i, e) in Emotion::ALL.into_iter().enumerate() {
        for j in 0..3u32 {
            let seed = 1000 + 10 * i as u64 + u64::from(j);
            let (w, h, source) = if j == 2 {
                (180, 200, FaceSource::FaceCrop)
            } else {
                (200 + 20 * j, 256, FaceSource::FullHead)
            };
            faces.push(common::face(&format!("{}/{j}", e.name()), e, w, h, seed, source));
        }
    }
    let backgrounds = (0..3u32)
        .map(|i| common::background(&format!("bg/{i}"), 800 + 64 * i, 700, u64::from(i)))
        .collect();
    AssetCatalog::from_assets(faces, backgrounds).unwrap()
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn throughput() -> Outcome {
    let cat = throughput_catalog();
    let cfg = ComposeConfig::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut sink = DirectorySink::new(dir.path()).map_err(|e| e.to_string())?;
    let summary = generate_dataset(&cat, &cfg, &Seed::new(5), 1000, 4, &mut sink).map_err(|e| e.to_string())?;
    let [w, h] = [cfg.generation.render_width, cfg.generation.render_height];
    check(
        summary.count == 1000 && summary.elapsed_secs <= 60.0 && (w, h) == (512, 512),
        format!(
            "1000 images of {w}x{h} in {:.1} s ({:.1} images/s) with 4 workers on {} available cores",
            summary.elapsed_secs,
            summary.images_per_sec,
            workers()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("label rule oracle", label_oracle),
        ("occlusion-free generation", occlusion_free),
        ("generate determinism", cli_determinism),
        ("published macro means", published_macros),
        ("confusion recall consistency", confusion_recall),
        ("default schedule", schedule_fixture),
        ("frame sampling chi-square", sampling_chi_square),
        ("augmentation identities", augmentation_identities),
        ("generation throughput", throughput),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
