//! Frame-to-video score aggregation and three-class evaluation metrics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::GroupClass;
use crate::sample::VideoRecord;

/// Per-frame class scores for one video, indexed by the class encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub video_id: String,
    pub scores: Vec<[f64; 3]>,
}

impl ScoreSeries {
    pub fn new(video_id: impl Into<String>, scores: Vec<[f64; 3]>) -> Result<Self> {
        let video_id = video_id.into();
        if scores.is_empty() {
            return Err(Error::ScoreSeries(format!("video {video_id} has no frames")));
        }
        if scores.iter().flatten().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::ScoreSeries(format!("video {video_id} has a negative or non-finite score")));
        }
        Ok(ScoreSeries { video_id, scores })
    }
}

/// Index of the maximum; any tie for the maximum resolves to Neutral.
pub fn argmax_neutral_first(v: &[f64; 3]) -> GroupClass {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let leaders: Vec<GroupClass> = GroupClass::ALL.into_iter().filter(|c| v[c.index()] == max).collect();
    if leaders.len() > 1 {
        GroupClass::Neutral
    } else {
        leaders[0]
    }
}

/// Mean score vector and its arg-max class.
pub fn aggregate_average(s: &ScoreSeries) -> (GroupClass, [f64; 3]) {
    let n = s.scores.len() as f64;
    let mut mean = [0.0f64; 3];
    for v in &s.scores {
        for k in 0..3 {
            mean[k] += v[k];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    (argmax_neutral_first(&mean), mean)
}

/// Majority vote over per-frame arg-max classes.
pub fn aggregate_vote(s: &ScoreSeries) -> GroupClass {
    let mut votes = [0.0f64; 3];
    for v in &s.scores {
        votes[argmax_neutral_first(v).index()] += 1.0;
    }
    argmax_neutral_first(&votes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Average,
    Vote,
}

impl Aggregation {
    pub fn apply(self, s: &ScoreSeries) -> GroupClass {
        match self {
            Aggregation::Average => aggregate_average(s).0,
            Aggregation::Vote => aggregate_vote(s),
        }
    }
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: &[(GroupClass, GroupClass)]) -> Self {
        let mut m = ConfusionMatrix::default();
        for &(t, p) in pairs {
            m.counts[t.index()][p.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_normalized(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in self.counts.iter().enumerate() {
            let s: u64 = row.iter().sum();
            if s > 0 {
                for j in 0..3 {
                    out[i][j] = row[j] as f64 / s as f64;
                }
            }
        }
        out
    }
}

/// Marks metric cells whose defining ratio was 0/0 (reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UndefinedCells {
    pub precision: [bool; 3],
    pub recall: [bool; 3],
    pub f1: [bool; 3],
}

impl UndefinedCells {
    pub fn any(&self) -> bool {
        [self.precision, self.recall, self.f1].iter().flatten().any(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub precision: [f64; 3],
    pub recall: [f64; 3],
    pub f1: [f64; 3],
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Mean of the per-class F1 scores.
    pub macro_f1: f64,
    pub class_accuracy: [f64; 3],
    pub accuracy: f64,
    pub undefined: UndefinedCells,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

fn f1_of(p: f64, r: f64) -> (f64, bool) {
    ratio(2.0 * p * r, p + r)
}

fn mean3(v: &[f64; 3]) -> f64 {
    (v[0] + v[1] + v[2]) / 3.0
}

/// Per-class F1 and the three macro means from per-class precision and recall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroSummary {
    pub f1: [f64; 3],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

pub fn macro_from_precision_recall(precision: [f64; 3], recall: [f64; 3]) -> MacroSummary {
    let mut f1 = [0.0; 3];
    for k in 0..3 {
        f1[k] = f1_of(precision[k], recall[k]).0;
    }
    MacroSummary {
        f1,
        macro_precision: mean3(&precision),
        macro_recall: mean3(&recall),
        macro_f1: mean3(&f1),
    }
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let c = &confusion.counts;
        let mut precision = [0.0; 3];
        let mut recall = [0.0; 3];
        let mut f1 = [0.0; 3];
        let mut undefined = UndefinedCells::default();
        for k in 0..3 {
            let tp = c[k][k] as f64;
            let predicted: u64 = (0..3).map(|i| c[i][k]).sum();
            let actual: u64 = c[k].iter().sum();
            (precision[k], undefined.precision[k]) = ratio(tp, predicted as f64);
            (recall[k], undefined.recall[k]) = ratio(tp, actual as f64);
            (f1[k], undefined.f1[k]) = f1_of(precision[k], recall[k]);
        }
        let total = confusion.total() as f64;
        let trace: u64 = (0..3).map(|k| c[k][k]).sum();
        EvalReport {
            confusion,
            precision,
            recall,
            f1,
            macro_precision: mean3(&precision),
            macro_recall: mean3(&recall),
            macro_f1: mean3(&f1),
            class_accuracy: recall,
            accuracy: ratio(trace as f64, total).0,
            undefined,
        }
    }
}

/// Report over `(true, predicted)` pairs.
pub fn compute_report(pairs: &[(GroupClass, GroupClass)]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Predictions("no prediction pairs".into()));
    }
    Ok(EvalReport::from_confusion(ConfusionMatrix::from_pairs(pairs)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportStyle {
    Table,
    Json,
}

const TABLE_ORDER: [GroupClass; 3] = [GroupClass::Neutral, GroupClass::Positive, GroupClass::Negative];

fn cell(v: f64, flagged: bool) -> String {
    if flagged {
        format!("{v:.2}*")
    } else {
        format!("{v:.2}")
    }
}

fn title(c: GroupClass) -> &'static str {
    match c {
        GroupClass::Negative => "Negative",
        GroupClass::Neutral => "Neutral",
        GroupClass::Positive => "Positive",
    }
}

pub fn format_report(r: &EvalReport, style: ReportStyle) -> Result<String> {
    match style {
        ReportStyle::Json => Ok(serde_json::to_string_pretty(r)?),
        ReportStyle::Table => Ok(format_table(r)),
    }
}

fn format_table(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<12} {:>10} {:>10} {:>10} {:>10}", "Class", "Precision", "Recall", "F1-score", "Accuracy");
    for c in TABLE_ORDER {
        let k = c.index();
        let _ = writeln!(
            s,
            "{:<12} {:>10} {:>10} {:>10} {:>10}",
            title(c),
            cell(r.precision[k], r.undefined.precision[k]),
            cell(r.recall[k], r.undefined.recall[k]),
            cell(r.f1[k], r.undefined.f1[k]),
            cell(r.class_accuracy[k], r.undefined.recall[k]),
        );
    }
    let _ = writeln!(
        s,
        "{:<12} {:>10} {:>10} {:>10} {:>10}",
        "Mean value",
        format!("{:.2}", r.macro_precision),
        format!("{:.2}", r.macro_recall),
        format!("{:.2}", r.macro_f1),
        format!("{:.2}", r.accuracy),
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "Overall accuracy: {:.4} ({} videos)", r.accuracy, r.confusion.total());
    let _ = writeln!(s);
    let _ = writeln!(s, "Confusion (rows true, columns predicted; row-normalized)");
    let norm = r.confusion.row_normalized();
    let _ = writeln!(s, "{:<12} {:>10} {:>10} {:>10}", "", "Neutral", "Positive", "Negative");
    for t in TABLE_ORDER {
        let _ = write!(s, "{:<12}", title(t));
        for p in TABLE_ORDER {
            let _ = write!(s, " {:>10}", format!("{:.2} ({})", norm[t.index()][p.index()], r.confusion.counts[t.index()][p.index()]));
        }
        let _ = writeln!(s);
    }
    if r.undefined.any() {
        let _ = writeln!(s);
        let _ = writeln!(s, "* undefined (0/0), reported as 0");
    }
    s
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    video_id: String,
    frame_index: u64,
    scores: Vec<f64>,
}

/// Parses frame predictions (one JSON object per line) into per-video
/// series ordered by frame index.
pub fn parse_predictions(text: &str) -> Result<Vec<ScoreSeries>> {
    let mut by_video: BTreeMap<String, BTreeMap<u64, [f64; 3]>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(line).map_err(|e| Error::Predictions(format!("line {n}: {e}")))?;
        let scores: [f64; 3] = p
            .scores
            .as_slice()
            .try_into()
            .map_err(|_| Error::Predictions(format!("line {n}: expected 3 scores, found {}", p.scores.len())))?;
        if scores.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Predictions(format!("line {n}: scores must be finite and non-negative")));
        }
        if by_video.entry(p.video_id.clone()).or_default().insert(p.frame_index, scores).is_some() {
            return Err(Error::Predictions(format!(
                "line {n}: duplicate frame {} for video {}",
                p.frame_index, p.video_id
            )));
        }
    }
    by_video
        .into_iter()
        .map(|(id, frames)| ScoreSeries::new(id, frames.into_values().collect()))
        .collect()
}

/// Aggregates each series and scores it against the index labels.
pub fn evaluate(series: &[ScoreSeries], videos: &[VideoRecord], agg: Aggregation) -> Result<EvalReport> {
    let truth: HashMap<&str, GroupClass> = videos.iter().map(|v| (v.video_id.as_str(), v.label)).collect();
    let pairs = series
        .iter()
        .map(|s| {
            let t = truth
                .get(s.video_id.as_str())
                .ok_or_else(|| Error::Predictions(format!("video {} is not in the index", s.video_id)))?;
            Ok((*t, agg.apply(s)))
        })
        .collect::<Result<Vec<_>>>()?;
    compute_report(&pairs)
}
