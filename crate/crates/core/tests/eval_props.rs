use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spillscope::detection::{DetectionScore, Metric, PoolingStrategy};
use spillscope::eval::{
    aggregate, auroc, bootstrap_std, build_report, histogram, read_cells_csv, roc_points, trapezoid_area,
    write_cells_csv, write_table, DatasetInput, Label, LabeledExample, MetricError, RangePolicy, ReportConfig,
};
use spillscope::ExclusionReason;

/// Scores drawn from a small grid so ties are common, with both classes.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..120)
        .prop_flat_map(|n| (prop::collection::vec(-5i32..5, n), prop::collection::vec(any::<bool>(), n)))
        .prop_map(|(s, mut l)| {
            l[0] = true;
            l[1] = false;
            (s.into_iter().map(|x| f64::from(x) * 0.5).collect(), l)
        })
}

fn pairwise(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (&p, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        for (&q, _) in scores.iter().zip(labels).filter(|(_, &l)| !l) {
            pairs += 1.0;
            wins += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
        }
    }
    wins / pairs
}

/// Resampler written from the description: `n` index draws per resample from
/// a seeded ChaCha8 stream, redraw if a class is missing, n − 1 denominator.
fn reference_bootstrap(scores: &[f64], labels: &[bool], resamples: usize, seed: u64) -> f64 {
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::new();
    while stats.len() < resamples {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        if l.contains(&true) && l.contains(&false) {
            stats.push(pairwise(&s, &l));
        }
    }
    let mean = stats.iter().sum::<f64>() / resamples as f64;
    (stats.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

proptest! {
    #[test]
    fn auroc_matches_pairwise_counting((s, l) in instance()) {
        prop_assert_eq!(auroc(&s, &l).unwrap(), pairwise(&s, &l));
    }

    #[test]
    fn negation_flips_auroc((s, l) in instance()) {
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        prop_assert!((auroc(&neg, &l).unwrap() - (1.0 - auroc(&s, &l).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn strictly_increasing_transforms_keep_auroc((s, l) in instance()) {
        let t: Vec<f64> = s.iter().map(|x| (x * 0.7).exp() * 3.0 - 11.0).collect();
        prop_assert_eq!(auroc(&t, &l).unwrap(), auroc(&s, &l).unwrap());
    }

    #[test]
    fn trapezoid_equals_rank_auroc((s, l) in instance()) {
        let pts = roc_points(&s, &l).unwrap();
        prop_assert_eq!(pts[0], (0.0, 0.0));
        prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        prop_assert!(pts.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        prop_assert!((trapezoid_area(&pts) - auroc(&s, &l).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn histogram_conserves_counts(
        pos in prop::collection::vec(-50.0f64..50.0, 0..80),
        neg in prop::collection::vec(-50.0f64..50.0, 1..80),
        bins in 1usize..30,
        fixed in any::<bool>(),
    ) {
        let range = if fixed { RangePolicy::Fixed(-20.0, 20.0) } else { RangePolicy::Pooled };
        let h = histogram(&pos, &neg, bins, range).unwrap();
        prop_assert_eq!(h.edges.len(), bins + 1);
        prop_assert_eq!(h.positive.iter().sum::<usize>() + h.underflow[0] + h.overflow[0], pos.len());
        prop_assert_eq!(h.negative.iter().sum::<usize>() + h.underflow[1] + h.overflow[1], neg.len());
        if !fixed {
            prop_assert_eq!(h.underflow, [0, 0]);
            prop_assert_eq!(h.overflow, [0, 0]);
        }
        // independent counting pass: linear scan over the shared edges
        let (lo, hi) = (h.edges[0], h.edges[bins]);
        let count = |vals: &[f64]| {
            let mut c = vec![0usize; bins];
            for &v in vals.iter().filter(|&&v| v >= lo && v <= hi) {
                let k = if lo == hi { 0 } else {
                    (0..bins).find(|&k| v >= h.edges[k] && (v < h.edges[k + 1] || k == bins - 1)).unwrap()
                };
                c[k] += 1;
            }
            c
        };
        prop_assert_eq!(&h.positive, &count(&pos));
        prop_assert_eq!(&h.negative, &count(&neg));
    }
}

#[test]
fn single_class_is_undefined() {
    assert_eq!(auroc(&[1.0, 2.0], &[true, true]), Err(MetricError::SingleClass));
    assert_eq!(auroc(&[1.0, 2.0], &[false, false]), Err(MetricError::SingleClass));
}

#[test]
fn bootstrap_matches_reference_resampler() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let scores: Vec<f64> = (0..50).map(|_| f64::from(rng.gen_range(0..20u8))).collect();
    let labels: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
    for seed in [0, 1, 12345] {
        let got = bootstrap_std(&scores, &labels, 1000, seed).unwrap();
        let want = reference_bootstrap(&scores, &labels, 1000, seed);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    assert_eq!(bootstrap_std(&scores, &labels, 99, 0), Err(MetricError::TooFewResamples(99)));
}

fn example(id: &str, label: Label) -> LabeledExample {
    LabeledExample { example_id: id.into(), dataset: None, gold_answers: vec![], generation: None, label }
}

fn score(id: &str, v: Result<f64, ExclusionReason>) -> DetectionScore {
    DetectionScore { example_id: id.into(), metric: Metric::SpilledDe, pooling: PoolingStrategy::Min, value: v }
}

/// Hand-worked dataset: positives {3, 1}, negatives {2, 0} → 3 of 4 pairs
/// ordered correctly.
fn hand_dataset(name: &str) -> DatasetInput {
    DatasetInput {
        name: name.into(),
        examples: vec![
            example("a", Label::Incorrect),
            example("b", Label::Incorrect),
            example("c", Label::Correct),
            example("d", Label::Correct),
            example("e", Label::Unlabeled),
            example("f", Label::Correct),
            example("g", Label::Incorrect),
        ],
        scores: vec![
            score("a", Ok(3.0)),
            score("b", Ok(1.0)),
            score("c", Ok(2.0)),
            score("d", Ok(0.0)),
            score("e", Ok(9.0)),
            score("f", Err(ExclusionReason::UndefinedEnergy)),
        ],
    }
}

#[test]
fn hand_computed_report() {
    let cfg = ReportConfig { resamples: None, ..ReportConfig::default() };
    let report = build_report(&[hand_dataset("toy")], &[Metric::SpilledDe], &[PoolingStrategy::Min], &cfg);
    let cell = &report.cells[0];
    assert_eq!(cell.auroc, Ok(0.75));
    assert_eq!(cell.n_used, 4);
    let want: BTreeMap<_, _> = [
        (ExclusionReason::UndefinedEnergy, 1),
        (ExclusionReason::Unlabeled, 1),
        (ExclusionReason::MissingScore, 1),
    ]
    .into();
    assert_eq!(cell.excluded, want);
    assert_eq!(cell.n_used + cell.n_excluded(), 7);
    let hist = cell.histogram.as_ref().unwrap();
    assert_eq!((hist.edges[0], *hist.edges.last().unwrap()), (0.0, 3.0));
    assert_eq!(report.aggregates[0].mean, Some(0.75));
    assert_eq!(report.aggregates[0].std, Some(0.0));
}

#[test]
fn report_is_invariant_to_input_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let make = |rng: &mut ChaCha8Rng, name: &str| DatasetInput {
        name: name.into(),
        examples: (0..60)
            .map(|i| example(&format!("{name}-{i}"), if i % 2 == 0 { Label::Correct } else { Label::Incorrect }))
            .collect(),
        scores: (0..60).map(|i| score(&format!("{name}-{i}"), Ok(rng.gen_range(-3.0..3.0)))).collect(),
    };
    let mut datasets = vec![make(&mut rng, "b"), make(&mut rng, "a"), make(&mut rng, "c")];
    let cfg = ReportConfig { resamples: Some(200), seed: 11, histogram_bins: 8 };
    let baseline = build_report(&datasets, &[Metric::SpilledDe], &[PoolingStrategy::Min], &cfg);
    for _ in 0..5 {
        datasets.shuffle(&mut rng);
        for d in &mut datasets {
            d.examples.shuffle(&mut rng);
            d.scores.shuffle(&mut rng);
        }
        assert_eq!(build_report(&datasets, &[Metric::SpilledDe], &[PoolingStrategy::Min], &cfg), baseline);
    }
}

#[test]
fn cells_round_trip_and_aggregate_uses_population_std() {
    let cfg = ReportConfig { resamples: None, ..ReportConfig::default() };
    let mut single = hand_dataset("one");
    single.examples.retain(|e| e.label != Label::Correct);
    let report = build_report(&[hand_dataset("toy"), single], &[Metric::SpilledDe], &[PoolingStrategy::Min], &cfg);
    assert_eq!(report.undefined_cells().count(), 1);

    let mut buf = Vec::new();
    write_cells_csv(&report.cells, &mut buf).unwrap();
    let back = read_cells_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(aggregate(&back), report.aggregates);

    // population std across the published per-dataset values
    let values = [85.98, 93.00, 47.66, 65.58, 73.95, 89.34, 87.07, 60.72, 55.11];
    let cells: Vec<_> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = report.cells[0].clone();
            c.dataset = format!("d{i}");
            c.auroc = Ok(v / 100.0);
            c
        })
        .collect();
    let row = &aggregate(&cells)[0];
    assert!((row.mean.unwrap() * 100.0 - 73.16).abs() < 5e-3);
    assert!((row.std.unwrap() * 100.0 - 15.64).abs() < 5e-3);

    let mut table = Vec::new();
    write_table(&report.cells, &report.aggregates, &mut table).unwrap();
    let table = String::from_utf8(table).unwrap();
    assert!(table.contains("n/a"), "{table}");
}
