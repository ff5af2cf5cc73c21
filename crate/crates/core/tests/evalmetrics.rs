mod common;

use std::path::Path;

use groupmood::evalmetrics::{
    aggregate_average, aggregate_vote, compute_report, evaluate, format_report, macro_from_precision_recall,
    parse_predictions, Aggregation, ConfusionMatrix, EvalReport, ReportStyle, ScoreSeries,
};
use groupmood::sample::parse_video_index;
use groupmood::GroupClass::{self, *};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn hand_computed_matrix() {
    let m = [[2, 1, 0], [0, 3, 1], [1, 0, 2]];
    let r = compute_report(&common::pairs_from_confusion(m)).unwrap();
    assert_eq!(r.confusion.counts, m);
    let expect_p = [2.0 / 3.0, 3.0 / 4.0, 2.0 / 3.0];
    let expect_r = [2.0 / 3.0, 3.0 / 4.0, 2.0 / 3.0];
    for k in 0..3 {
        assert!(close(r.precision[k], expect_p[k], 1e-12));
        assert!(close(r.recall[k], expect_r[k], 1e-12));
        let f = 2.0 * expect_p[k] * expect_r[k] / (expect_p[k] + expect_r[k]);
        assert!(close(r.f1[k], f, 1e-12));
        assert_eq!(r.class_accuracy[k], r.recall[k]);
    }
    assert!(close(r.accuracy, 0.7, 1e-12));
    assert!(close(r.macro_precision, (2.0 / 3.0 + 0.75 + 2.0 / 3.0) / 3.0, 1e-12));
    assert!(!r.undefined.any());
}

#[test]
fn published_macro_means() {
    // Encoding order: Negative, Neutral, Positive.
    let precision = [0.80, 0.40, 0.60];
    let recall = [0.50, 0.62, 0.62];
    let m = macro_from_precision_recall(precision, recall);
    assert_eq!(format!("{:.2}", m.macro_precision), "0.60");
    assert_eq!(format!("{:.2}", m.macro_recall), "0.58");
    assert_eq!(format!("{:.2}", m.macro_f1), "0.57");
    // Printed per-class F1: Negative 0.61, Neutral 0.48, Positive 0.61.
    for (f, printed) in m.f1.iter().zip([0.61, 0.48, 0.61]) {
        assert!(close(*f, printed, 0.01), "{f} vs {printed}");
    }
}

#[test]
fn confusion_diagonal_fixture() {
    let r = compute_report(&common::pairs_from_confusion(common::diagonal_confusion())).unwrap();
    let norm = r.confusion.row_normalized();
    for (c, d) in [(Neutral, 0.62), (Positive, 0.62), (Negative, 0.50)] {
        assert!(close(r.recall[c.index()], d, 0.005));
        assert!(close(norm[c.index()][c.index()], d, 1e-12));
    }
}

#[test]
fn undefined_cells_are_flagged() {
    let r = compute_report(&[(Positive, Positive), (Neutral, Positive)]).unwrap();
    assert!(r.undefined.recall[Negative.index()]);
    assert!(r.undefined.precision[Neutral.index()]);
    assert_eq!(r.precision[Neutral.index()], 0.0);
    let table = format_report(&r, ReportStyle::Table).unwrap();
    assert!(table.contains('*'));
    assert!(table.contains("undefined"));
}

#[test]
fn perfect_predictions() {
    let pairs: Vec<_> = GroupClass::ALL.iter().flat_map(|&c| [(c, c), (c, c)]).collect();
    let r = compute_report(&pairs).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.macro_f1, 1.0);
}

#[test]
fn table_layout() {
    let r = compute_report(&common::pairs_from_confusion(common::diagonal_confusion())).unwrap();
    let t = format_report(&r, ReportStyle::Table).unwrap();
    let rows: Vec<&str> = t.lines().collect();
    assert!(rows[1].starts_with("Neutral"));
    assert!(rows[2].starts_with("Positive"));
    assert!(rows[3].starts_with("Negative"));
    assert!(rows[4].starts_with("Mean value"));
    assert!(rows[1].contains("0.62"));
}

#[test]
fn json_report_round_trips() {
    let r = compute_report(&common::pairs_from_confusion([[3, 1, 0], [2, 2, 2], [0, 0, 5]])).unwrap();
    let text = format_report(&r, ReportStyle::Json).unwrap();
    let back: EvalReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
}

#[test]
fn vote_and_average_diverge() {
    // Two frames strongly Negative, three mildly Positive.
    let s = ScoreSeries::new(
        "v",
        vec![[0.9, 0.05, 0.05], [0.9, 0.05, 0.05], [0.3, 0.3, 0.4], [0.3, 0.3, 0.4], [0.3, 0.3, 0.4]],
    )
    .unwrap();
    assert_eq!(aggregate_average(&s).0, Negative);
    assert_eq!(aggregate_vote(&s), Positive);
}

#[test]
fn tie_examples() {
    let s = ScoreSeries::new("v", vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
    assert_eq!(aggregate_vote(&s), Neutral);
    assert_eq!(aggregate_average(&s).0, Neutral);
}

fn one_hot(k: usize) -> [f64; 3] {
    let mut v = [0.0; 3];
    v[k] = 1.0;
    v
}

#[test]
fn vote_equals_average_on_one_hot_series() {
    let mut checked = 0;
    for len in 1..=5u32 {
        for code in 0..3usize.pow(len) {
            let mut c = code;
            let frames: Vec<[f64; 3]> = (0..len)
                .map(|_| {
                    let k = c % 3;
                    c /= 3;
                    one_hot(k)
                })
                .collect();
            let s = ScoreSeries::new("v", frames).unwrap();
            assert_eq!(aggregate_vote(&s), aggregate_average(&s).0, "{:?}", s.scores);
            checked += 1;
        }
    }
    assert_eq!(checked, 3 + 9 + 27 + 81 + 243);
}

#[test]
fn predictions_and_index_evaluate() {
    let index = "video_id,path,frame_count,label,split\na,a.mp4,2,positive,val\nb,b.mp4,1,negative,val\n";
    let videos = parse_video_index(index, Path::new(".")).unwrap();
    let preds = "{\"video_id\":\"a\",\"frame_index\":1,\"scores\":[0.1,0.2,0.7]}\n\
                 {\"video_id\":\"a\",\"frame_index\":0,\"scores\":[0.1,0.6,0.3]}\n\
                 {\"video_id\":\"b\",\"frame_index\":0,\"scores\":[0.5,0.2,0.3]}\n";
    let series = parse_predictions(preds).unwrap();
    assert_eq!(series[0].scores[0], [0.1, 0.6, 0.3]);
    let r = evaluate(&series, &videos, Aggregation::Average).unwrap();
    assert_eq!(r.accuracy, 1.0);
}

#[test]
fn malformed_predictions_name_the_line() {
    let preds = "{\"video_id\":\"a\",\"frame_index\":0,\"scores\":[0.1,0.2,0.7]}\n{not json}\n";
    let e = parse_predictions(preds).unwrap_err().to_string();
    assert!(e.contains("line 2"), "{e}");
    let preds = "{\"video_id\":\"a\",\"frame_index\":0,\"scores\":[0.1,0.2]}\n";
    assert!(parse_predictions(preds).unwrap_err().to_string().contains("line 1"));
    let dup = "{\"video_id\":\"a\",\"frame_index\":0,\"scores\":[1,0,0]}\n{\"video_id\":\"a\",\"frame_index\":0,\"scores\":[1,0,0]}\n";
    assert!(parse_predictions(dup).unwrap_err().to_string().contains("line 2"));
}

#[test]
fn unknown_video_is_an_error() {
    let videos = parse_video_index("video_id,path,frame_count,label,split\na,a,1,0,val\n", Path::new(".")).unwrap();
    let series = vec![ScoreSeries::new("zzz", vec![[1.0, 0.0, 0.0]]).unwrap()];
    assert!(evaluate(&series, &videos, Aggregation::Vote).is_err());
}

fn score() -> impl Strategy<Value = [f64; 3]> {
    [0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0]
}

proptest! {
    #[test]
    fn aggregation_is_rescaling_invariant(frames in prop::collection::vec(score(), 1..12), k in 0.01f64..100.0) {
        let s = ScoreSeries::new("v", frames.clone()).unwrap();
        let scaled = ScoreSeries::new("v", frames.iter().map(|v| v.map(|x| x * k)).collect()).unwrap();
        prop_assert_eq!(aggregate_vote(&s), aggregate_vote(&scaled));
        let (a, ma) = aggregate_average(&s);
        let (b, mb) = aggregate_average(&scaled);
        // Exact ties can be broken by rounding after scaling; only compare clear winners.
        let mut sorted = ma;
        sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
        if sorted[0] - sorted[1] > 1e-9 {
            prop_assert_eq!(a, b);
        }
        prop_assert!(mb.iter().zip(ma).all(|(x, y)| (x - y * k).abs() <= 1e-9 * k.max(1.0)));
    }

    #[test]
    fn report_is_bounded(counts in prop::array::uniform3(prop::array::uniform3(0u64..20))) {
        let m = ConfusionMatrix { counts };
        prop_assume!(m.total() > 0);
        let r = EvalReport::from_confusion(m);
        for k in 0..3 {
            prop_assert!((0.0..=1.0).contains(&r.precision[k]));
            prop_assert!((0.0..=1.0).contains(&r.recall[k]));
            prop_assert!((0.0..=1.0).contains(&r.f1[k]));
            prop_assert!(r.f1[k] <= r.precision[k].max(r.recall[k]) + 1e-12);
        }
        prop_assert!((0.0..=1.0).contains(&r.accuracy));
    }

    #[test]
    fn pair_order_does_not_matter(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60)) {
        let p: Vec<_> = pairs.iter().map(|&(a, b)| (GroupClass::from_index(a).unwrap(), GroupClass::from_index(b).unwrap())).collect();
        let mut q = p.clone();
        q.reverse();
        prop_assert_eq!(compute_report(&p).unwrap(), compute_report(&q).unwrap());
    }
}
