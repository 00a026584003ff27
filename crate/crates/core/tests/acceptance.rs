//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion before asserting, so `--nocapture` gives a full scorecard.

use std::time::{Duration, Instant};

use hiermod::clustering::{delta_ess, ess, is_refinement, ward_cluster, ward_linkage};
use hiermod::features::{align_signs, pearson};
use hiermod::lnn::{Network, OrderPolicy, TrainConfig};
use hiermod::nnmf::nnmf_factorize;
use hiermod::report::{run_pipeline, Manifest, RunConfig, RunStatus, MANIFEST_FILE};
use hiermod::{Dataset, Dendrogram, FeatureMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    println!("criterion {id:>2} {name}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// ESS of one cluster computed directly from the centroid.
fn oracle_ess(members: &[usize], rows: &[Vec<f64>]) -> f64 {
    let dim = rows[0].len();
    let mut mean = vec![0.0; dim];
    for &k in members {
        for (m, v) in mean.iter_mut().zip(&rows[k]) {
            *m += v / members.len() as f64;
        }
    }
    members
        .iter()
        .map(|&k| rows[k].iter().zip(&mean).map(|(v, m)| (v - m) * (v - m)).sum::<f64>())
        .sum()
}

/// Greedy Ward by exhaustive ESS recomputation: (lower id, higher id, ΔESS)
/// per merge. Values within `1e-12` of the minimum count as ties and go to
/// the lexicographically smallest id pair.
fn brute_force_ward(rows: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let n = rows.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|k| (k, vec![k])).collect();
    let mut out = Vec::new();
    for m in 0..n - 1 {
        let mut cands = Vec::new();
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let union: Vec<usize> = clusters[a].1.iter().chain(&clusters[b].1).copied().collect();
                let d = oracle_ess(&union, rows) - oracle_ess(&clusters[a].1, rows) - oracle_ess(&clusters[b].1, rows);
                let (ia, ib) = (clusters[a].0, clusters[b].0);
                cands.push((d, ia.min(ib), ia.max(ib), a, b));
            }
        }
        let min = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let &(d, lo, hi, a, b) = cands
            .iter()
            .filter(|c| c.0 <= min + 1e-12)
            .min_by_key(|c| (c.1, c.2))
            .unwrap();
        out.push((lo, hi, d));
        let mut union = clusters[a].1.clone();
        union.extend(&clusters[b].1);
        clusters.remove(b);
        clusters.remove(a);
        clusters.push((n + m, union));
    }
    out
}

#[test]
fn criterion_01_ward_matches_brute_force_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=10);
        let dim = rng.random_range(1..=6);
        let rows = random_rows(&mut rng, n, dim);
        let merges = ward_linkage(&rows).unwrap();
        let oracle = brute_force_ward(&rows);
        for (m, (lo, hi, d)) in merges.iter().zip(&oracle) {
            if (m.left, m.right) != (*lo, *hi) {
                mismatches += 1;
            }
            worst = worst.max((m.height - d).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches == 0 && worst < 1e-9 && elapsed < Duration::from_secs(10);
    report(
        1,
        "Ward merge sequence equals brute-force oracle",
        ok,
        &format!("{mismatches} mismatched merges, max height diff {worst:.2e}, {elapsed:.2?}"),
    );
    assert!(ok);
}

#[test]
fn criterion_02_delta_ess_is_ess_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=30);
        let dim = rng.random_range(1..=8);
        let rows = random_rows(&mut rng, n, dim);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let split = rng.random_range(1..n);
        let take = rng.random_range(split + 1..=n);
        let (a, b) = (idx[..split].to_vec(), idx[split..take].to_vec());
        let union: Vec<usize> = a.iter().chain(&b).copied().collect();
        let lhs = delta_ess(&a, &b, &rows).unwrap();
        let rhs = ess(&[union], &rows).unwrap() - ess(&[a], &rows).unwrap() - ess(&[b], &rows).unwrap();
        worst = worst.max((lhs - rhs).abs());
    }
    let ok = worst <= 1e-9;
    report(2, "delta_ess equals ESS difference", ok, &format!("max error {worst:.2e}"));
    assert!(ok);
}

fn all_non_decreasing(ds: &[Dendrogram]) -> bool {
    ds.iter().all(Dendrogram::heights_non_decreasing)
}

#[test]
fn criterion_03_heights_non_decreasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut dendrograms = Vec::new();
    for _ in 0..200 {
        let n = rng.random_range(2..=60);
        let dim = rng.random_range(1..=20);
        let fm = FeatureMatrix::from_rows(random_rows(&mut rng, n, dim), dim).unwrap();
        dendrograms.push(ward_cluster(&fm).unwrap());
        let (aligned, _) = align_signs(&fm, 500, rng.random());
        dendrograms.push(ward_cluster(&aligned).unwrap());
    }
    let ok = all_non_decreasing(&dendrograms);
    report(
        3,
        "dendrogram heights non-decreasing",
        ok,
        &format!("{} random clusterings; pipeline runs checked in 9, 10, 12", dendrograms.len()),
    );
    assert!(ok);
}

fn half_squared_error(net: &Network, x: &[f64], y: &[f64]) -> f64 {
    let o = net.predict(x).unwrap();
    0.5 * o.iter().zip(y).map(|(o, y)| (o - y) * (o - y)).sum::<f64>()
}

#[test]
fn criterion_04_backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut nets = 0;
    while nets < 50 {
        let depth = rng.random_range(3..=4);
        let sizes: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=5)).collect();
        let net = Network::init(&sizes, rng.random()).unwrap();
        if net.n_weights() + net.n_biases() > 50 {
            continue;
        }
        nets += 1;
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..sizes[depth - 1]).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut stepped = net.clone();
        stepped.backprop_step(&x, &y, 1.0, 0.0, 0.0).unwrap();
        for l in 0..depth - 1 {
            for i in 0..sizes[l] {
                for j in 0..sizes[l + 1] {
                    let w = net.weight(l, i, j);
                    let delta = stepped.weight(l, i, j) - w;
                    let (mut plus, mut minus) = (net.clone(), net.clone());
                    plus.set_weight(l, i, j, w + h);
                    minus.set_weight(l, i, j, w - h);
                    let fd = (half_squared_error(&plus, &x, &y) - half_squared_error(&minus, &x, &y)) / (2.0 * h);
                    let expected = -fd;
                    let scale = delta.abs().max(expected.abs());
                    let rel = if scale == 0.0 { 0.0 } else { (delta - expected).abs() / scale };
                    worst = worst.max(rel);
                }
            }
        }
    }
    let ok = worst <= 1e-5;
    report(4, "backprop weight deltas match finite differences", ok, &format!("max relative error {worst:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_05_alignment_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut failures = 0;
    let mut total_flips = 0;
    for _ in 0..100 {
        let fm = FeatureMatrix::from_rows(random_rows(&mut rng, 50, 20), 20).unwrap();
        let (_, trace) = align_signs(&fm, 2000, rng.random());
        let mut prev = trace.initial;
        let mut monotone = true;
        for &s in &trace.cosine_sum_series {
            monotone &= s >= prev;
            prev = s;
        }
        let flips = trace.flip_count();
        total_flips += flips;
        let endpoint = if flips > 0 {
            trace.final_sum() > trace.initial
        } else {
            trace.final_sum() == trace.initial
        };
        if !(monotone && endpoint) {
            failures += 1;
        }
    }
    let ok = failures == 0;
    report(5, "cosine sum non-decreasing under alignment", ok, &format!("{failures} failing matrices, {total_flips} flips"));
    assert!(ok);
}

#[test]
fn criterion_06_alignment_preserves_magnitudes() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut bad_rows = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let dim = rng.random_range(1..=20);
        let fm = FeatureMatrix::from_rows(random_rows(&mut rng, n, dim), dim).unwrap();
        let (aligned, _) = align_signs(&fm, 1000, rng.random());
        for (a, b) in fm.rows().iter().zip(aligned.rows()) {
            let same = a.iter().zip(b).all(|(x, y)| x.abs() == y.abs());
            let uniform = b == a || b.iter().zip(a).all(|(x, y)| *x == -*y);
            if !(same && uniform) {
                bad_rows += 1;
            }
        }
    }
    let ok = bad_rows == 0;
    report(6, "alignment preserves absolute values", ok, &format!("{bad_rows} altered rows"));
    assert!(ok);
}

#[test]
fn criterion_07_correlation_bounds_and_hand_cases() {
    let hand = [
        (pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), 1.0),
        (pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0),
        (pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]), 0.8),
    ];
    let hand_err = hand
        .iter()
        .map(|(r, want)| (r.unwrap() - want).abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut out_of_range = 0;
    let mut checked = 0;
    for _ in 0..20 {
        let sizes = [rng.random_range(2..=6), rng.random_range(2..=8), rng.random_range(1..=3)];
        let net = Network::init(&sizes, rng.random()).unwrap();
        let n = rng.random_range(3..=40);
        let mut inputs = random_rows(&mut rng, n, sizes[0]);
        // a constant input column gets flagged
        inputs.iter_mut().for_each(|r| r[0] = 0.25);
        let outputs = random_rows(&mut rng, n, sizes[2]);
        let ds = Dataset::new(inputs, outputs).unwrap();
        let fm = hiermod::features::feature_vectors(&net, &ds).unwrap();
        for (row, flags) in fm.rows().iter().zip(fm.zero_variance()) {
            for (&v, &f) in row.iter().zip(flags) {
                if !f {
                    checked += 1;
                    if !(-1.0..=1.0).contains(&v) {
                        out_of_range += 1;
                    }
                } else if v != 0.0 {
                    out_of_range += 1;
                }
            }
        }
    }
    let ok = hand_err <= 1e-12 && out_of_range == 0;
    report(
        7,
        "correlations bounded and hand cases exact",
        ok,
        &format!("hand error {hand_err:.2e}, {out_of_range} bad of {checked} entries"),
    );
    assert!(ok);
}

#[test]
fn criterion_08_xor_training_smoke() {
    let start = Instant::now();
    let inputs = vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]];
    let outputs = vec![vec![0.0], vec![1.0], vec![1.0], vec![0.0]];
    let ds = Dataset::new(inputs, outputs).unwrap();
    let mut errors = Vec::new();
    for seed in 0..5u64 {
        let mut net = Network::init(&[2, 8, 1], seed).unwrap();
        let cfg = TrainConfig {
            lambda: 0.0,
            seed: seed + 100,
            // a1 * n1 = 20000 steps
            a1: 5000.0,
            order: OrderPolicy::UniformRandom,
            ..TrainConfig::default()
        };
        net.train(&ds, &cfg).unwrap();
        errors.push(net.training_error(&ds).unwrap());
    }
    let elapsed = start.elapsed();
    let converged = errors.iter().filter(|&&e| e < 0.05).count();
    let ok = converged >= 4 && elapsed < Duration::from_secs(5);
    report(
        8,
        "XOR reaches E < 0.05 for at least 4 of 5 seeds",
        ok,
        &format!("{converged}/5 converged, errors {errors:.4?}, {elapsed:.2?}"),
    );
    assert!(ok);
}

/// Runs a pipeline and checks completion, resolutions, nesting and heights.
fn pipeline_check(id: u32, cfg: RunConfig, expected: &[usize], limit: Duration) {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let result = run_pipeline(&cfg, dir.path());
    let elapsed = start.elapsed();
    let (ok, detail) = match result {
        Ok(manifest) => {
            let summary = manifest.summary.clone().unwrap();
            let mut labels = Vec::new();
            for &c in expected {
                let text = std::fs::read_to_string(dir.path().join(format!("c{c:02}/assignment.csv"))).unwrap();
                let column: Vec<usize> = text
                    .lines()
                    .skip(1)
                    .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
                    .collect();
                let distinct: std::collections::BTreeSet<usize> = column.iter().copied().collect();
                labels.push((c, distinct.len(), column));
            }
            let counts_ok = labels.iter().all(|(c, d, _)| c == d);
            let nested = labels.windows(2).all(|p| is_refinement(&p[1].2, &p[0].2));
            let d: Dendrogram =
                serde_json::from_str(&std::fs::read_to_string(dir.path().join("dendrogram.json")).unwrap()).unwrap();
            let du: Dendrogram = serde_json::from_str(
                &std::fs::read_to_string(dir.path().join("dendrogram_unaligned.json")).unwrap(),
            )
            .unwrap();
            let heights = all_non_decreasing(&[d, du]);
            let ok = manifest.status == RunStatus::Complete
                && summary.resolutions == expected
                && counts_ok
                && nested
                && summary.nested
                && heights
                && elapsed < limit;
            (
                ok,
                format!(
                    "{} samples, E = {:.4}, cuts {:?}, nested {nested}, heights ok {heights}, {} files, {elapsed:.1?}",
                    summary.samples,
                    summary.final_error,
                    labels.iter().map(|l| l.1).collect::<Vec<_>>(),
                    manifest.files.len()
                ),
            )
        }
        Err(e) => (false, format!("pipeline failed: {e}")),
    };
    report(id, &format!("{} pipeline with nested cuts", cfg.name), ok, &detail);
    assert!(ok);
}

#[test]
fn criterion_09_desk_digit_pipeline() {
    let cfg = RunConfig::e1_desk();
    assert_eq!(cfg.hidden, vec![64]);
    pipeline_check(9, cfg, &[4, 8, 16], Duration::from_secs(300));
}

#[test]
fn criterion_10_desk_price_pipeline() {
    let cfg = RunConfig::e2_desk();
    assert_eq!(cfg.hidden, vec![40]);
    pipeline_check(10, cfg, &[3, 6, 12], Duration::from_secs(120));
}

#[test]
fn criterion_11_nnmf_monotone_and_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut violations = 0;
    let mut worst_rise = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=20);
        let m = rng.random_range(2..=20);
        let v: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let rank = rng.random_range(1..=n.min(m));
        let r = nnmf_factorize(&v, rank, 1000, rng.random()).unwrap();
        for w in r.residual_trace.windows(2) {
            let rise = w[1] - w[0];
            worst_rise = worst_rise.max(rise);
            if rise > 1e-12 {
                violations += 1;
            }
        }
    }
    let u: Vec<f64> = (0..8).map(|_| rng.random_range(0.1..2.0)).collect();
    let z: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..2.0)).collect();
    let outer: Vec<Vec<f64>> = u.iter().map(|a| z.iter().map(|b| a * b).collect()).collect();
    let rank1 = nnmf_factorize(&outer, 1, 1000, 5).unwrap().residual;
    let ok = violations == 0 && rank1 < 1e-6;
    report(
        11,
        "NNMF residual non-increasing, rank-1 recovery",
        ok,
        &format!("{violations} rises (max {worst_rise:.2e}), rank-1 residual {rank1:.2e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_12_pipeline_is_deterministic() {
    let cfg = RunConfig::e2_desk();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_pipeline(&cfg, a.path()).unwrap();
    let mb = run_pipeline(&cfg, b.path()).unwrap();
    let on_disk = |d: &std::path::Path| std::fs::read(d.join(MANIFEST_FILE)).unwrap();
    let mut identical = 0;
    for f in &ma.files {
        if std::fs::read(a.path().join(&f.path)).unwrap() == std::fs::read(b.path().join(&f.path)).unwrap() {
            identical += 1;
        }
    }
    let d = |dir: &std::path::Path| -> Dendrogram {
        serde_json::from_str(&std::fs::read_to_string(dir.join("dendrogram.json")).unwrap()).unwrap()
    };
    let heights = all_non_decreasing(&[d(a.path()), d(b.path())]);
    let reloaded = Manifest::load(&a.path().join(MANIFEST_FILE)).unwrap();
    let ok = ma.digest() == mb.digest()
        && on_disk(a.path()) == on_disk(b.path())
        && identical == ma.files.len()
        && reloaded == ma
        && heights;
    report(
        12,
        "repeated runs are byte-identical",
        ok,
        &format!("digest {}, {identical}/{} files identical", &ma.digest()[..16], ma.files.len()),
    );
    assert!(ok);
}
