use hiermod::clustering::{ess, is_refinement, ward_cluster};
use hiermod::data::{self, AffineNormalizer, TimeSeriesTable};
use hiermod::features::{align_signs, pearson};
use hiermod::lnn::{Network, OrderPolicy, TrainConfig};
use hiermod::nnmf::{nnmf_best_of, restart_seeds};
use hiermod::{Dataset, Dendrogram, FeatureMatrix};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(-1.0..1.0f64, c), r))
}

fn varied(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len).prop_filter("needs spread", |v| {
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        hi - lo > 1e-3
    })
}

fn sorted_heights(d: &Dendrogram) -> Vec<f64> {
    let mut h: Vec<f64> = d.heights().collect();
    h.sort_by(f64::total_cmp);
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pearson_symmetric_and_affine_invariant(
        a in varied(12),
        b in varied(12),
        scale in 0.1..10.0f64,
        shift in -5.0..5.0f64,
    ) {
        let r = pearson(&a, &b).unwrap();
        prop_assert!((r - pearson(&b, &a).unwrap()).abs() < 1e-12);
        let moved: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
        prop_assert!((r - pearson(&moved, &b).unwrap()).abs() < 1e-9);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        prop_assert!((r + pearson(&neg, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn alignment_keeps_magnitudes(rows in matrix(12, 5), seed in any::<u64>()) {
        let fm = FeatureMatrix::from_rows(rows, 0).unwrap();
        let (aligned, trace) = align_signs(&fm, 300, seed);
        for (a, b) in fm.rows().iter().zip(aligned.rows()) {
            prop_assert!(a.iter().zip(b).all(|(x, y)| x.abs() == y.abs()));
        }
        prop_assert!(trace.final_sum() >= trace.initial);
    }

    #[test]
    fn ward_heights_independent_of_row_order(rows in matrix(10, 4), rot in 0usize..10) {
        let n = rows.len();
        let mut moved = rows.clone();
        moved.rotate_left(rot % n);
        let d1 = ward_cluster(&FeatureMatrix::from_rows(rows, 0).unwrap()).unwrap();
        let d2 = ward_cluster(&FeatureMatrix::from_rows(moved, 0).unwrap()).unwrap();
        for (x, y) in sorted_heights(&d1).iter().zip(sorted_heights(&d2)) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn total_ess_is_sum_of_heights(rows in matrix(15, 6)) {
        let d = ward_cluster(&FeatureMatrix::from_rows(rows.clone(), 0).unwrap()).unwrap();
        let all: Vec<usize> = (0..rows.len()).collect();
        let total = ess(&[all], &rows).unwrap();
        let sum: f64 = d.heights().sum();
        prop_assert!((total - sum).abs() < 1e-9 * (1.0 + total));
        prop_assert!(d.heights_non_decreasing());
    }

    #[test]
    fn cuts_are_nested(rows in matrix(15, 3)) {
        let d = ward_cluster(&FeatureMatrix::from_rows(rows.clone(), 0).unwrap()).unwrap();
        let parts: Vec<Vec<usize>> = (1..=rows.len()).map(|c| d.partition(c).unwrap()).collect();
        for pair in parts.windows(2) {
            prop_assert!(is_refinement(&pair[1], &pair[0]));
        }
    }

    #[test]
    fn normalizer_round_trips(rows in matrix(10, 4)) {
        let norm = AffineNormalizer::fit(&rows, (-1.0, 1.0));
        for row in &rows {
            let mapped = norm.apply(row);
            prop_assert!(mapped.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
            for ((orig, back), degenerate) in row.iter().zip(norm.invert(&mapped)).zip(norm.degenerate()) {
                if !degenerate {
                    prop_assert!((orig - back).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn windows_overlap_by_one_month(len in 10usize..40, window in 1usize..6, horizon in 1usize..4) {
        let cols = vec![(0..len).map(|t| t as f64).collect(), (0..len).map(|t| 100.0 + t as f64).collect()];
        let table = TimeSeriesTable::new((0..len as i64).collect(), vec!["a".into(), "b".into()], cols).unwrap();
        let ds = data::window_raw(&table, window, horizon).unwrap();
        prop_assert_eq!(ds.len(), len - window - horizon + 1);
        for n in 0..ds.len() {
            let (x, y) = ds.sample(n);
            prop_assert_eq!(x[0], n as f64);
            prop_assert_eq!(x[window], 100.0 + n as f64);
            prop_assert_eq!(y[0], (n + window + horizon - 1) as f64);
            if n + 1 < ds.len() {
                let next = ds.sample(n + 1).0;
                prop_assert_eq!(&x[1..window], &next[..window - 1]);
            }
        }
    }
}

#[test]
fn more_restarts_never_worse() {
    let v: Vec<Vec<f64>> = (0..8)
        .map(|i| (0..7).map(|j| ((i * 7 + j) as f64 * 0.37).sin().abs()).collect())
        .collect();
    let seeds = restart_seeds(9, 6);
    assert_eq!(seeds[0], 9);
    let mut prev = f64::INFINITY;
    for r in 1..=6 {
        let res = nnmf_best_of(&v, 3, 200, r, 9).unwrap();
        assert!(res.residual <= prev);
        assert_eq!(res.seed, seeds[res.restart_index]);
        prev = res.residual;
    }
}

fn small_digits() -> Dataset {
    data::preprocess_images(&data::synth_digits(3, 10)).unwrap()
}

#[test]
fn training_is_reproducible() {
    let ds = small_digits();
    let cfg = TrainConfig {
        a1: 3.0,
        order: OrderPolicy::CyclicByClass,
        seed: 4,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = Network::init(&[196, 8, 10], 2).unwrap();
        let trace = net.train(&ds, &cfg).unwrap();
        (serde_json::to_string(&net.to_document(None)).unwrap(), trace)
    };
    assert_eq!(run(), run());
}

fn median_abs_weight(net: &Network) -> f64 {
    let mut w: Vec<f64> = (0..net.depth() - 1).flat_map(|l| net.weights(l).iter().map(|v| v.abs())).collect();
    w.sort_by(f64::total_cmp);
    w[w.len() / 2]
}

#[test]
fn l1_penalty_shrinks_weights() {
    let ds = small_digits();
    let train = |lambda| {
        let mut net = Network::init(&[196, 16, 10], 5).unwrap();
        let cfg = TrainConfig {
            lambda,
            a1: 20.0,
            seed: 6,
            ..TrainConfig::default()
        };
        net.train(&ds, &cfg).unwrap();
        net
    };
    let (plain, sparse) = (train(0.0), train(1e-3));
    assert!(median_abs_weight(&sparse) < 0.5 * median_abs_weight(&plain));
    assert!(sparse.prune_view(0.1).len() < plain.prune_view(0.1).len());
}

fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    // detrend by first differences
    let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    pearson(&d[lag..], &d[..d.len() - lag]).unwrap()
}

#[test]
fn synthetic_prices_are_seasonal() {
    let table = data::synth_cpi(21, 306, 3).unwrap();
    for col in table.columns() {
        assert!(autocorrelation(col, 12) > autocorrelation(col, 7));
        assert!(autocorrelation(col, 12) > 0.3);
    }
}

#[test]
fn dendrogram_json_round_trip() {
    let fm = FeatureMatrix::from_rows(vec![vec![0.1, 0.2], vec![0.3, -0.2], vec![0.9, 0.9], vec![1.0, 0.7]], 1).unwrap();
    let d = ward_cluster(&fm).unwrap();
    let back: Dendrogram = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
    assert_eq!(back, d);
    let newick = d.to_newick();
    assert_eq!(newick.matches('(').count(), 3);
    assert!(newick.ends_with(";\n"));
}

#[test]
fn idx_round_trip_through_files() {
    let set = data::synth_digits(1, 2);
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    data::save_idx(&set, &img, &lab).unwrap();
    assert_eq!(data::load_idx(&img, &lab).unwrap(), set);
}
