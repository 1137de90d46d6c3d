//! Brute-force oracles for the evaluation metrics: prefix-enumerated average
//! precision, NDCG normalized by the best of all orderings, a CDF-integral
//! Wasserstein distance, a planted recall gap, and raw-definition statistics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use latefit_core::metrics::{
    calibration_metrics, ranking_metrics, relevancy_metrics, sliced_evaluate, NdcgGains,
    ScoredPair,
};
use latefit_core::stats::describe;

fn pair(project: &str, profile: &str, teacher: f64, student: f64) -> ScoredPair {
    ScoredPair {
        project_id: project.into(),
        profile_id: profile.into(),
        teacher,
        student,
        metadata: BTreeMap::new(),
    }
}

/// Average precision by explicit prefix enumeration: for every prefix ending
/// at a relevant item, precision of that prefix, averaged over relevant items.
fn brute_force_ap(ranked_relevance: &[bool]) -> f64 {
    let total_relevant = ranked_relevance.iter().filter(|&&r| r).count();
    if total_relevant == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for end in 0..ranked_relevance.len() {
        if ranked_relevance[end] {
            let prefix = &ranked_relevance[..=end];
            let hits = prefix.iter().filter(|&&r| r).count();
            acc += hits as f64 / prefix.len() as f64;
        }
    }
    acc / total_relevant as f64
}

fn dcg(gains: &[f64]) -> f64 {
    gains.iter().enumerate().map(|(i, g)| g / ((i + 2) as f64).log2()).sum()
}

/// All permutations of 0..n (n ≤ 4 in these fixtures).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..n {
            let mut q: Vec<usize> = p.iter().map(|&x| if x >= slot { x + 1 } else { x }).collect();
            q.insert(0, slot);
            // re-map: positions after insertion shift
            out.push(q);
        }
    }
    out.sort();
    out.dedup();
    out
}

#[test]
fn ap_matches_prefix_enumeration_oracle() {
    // 5-candidate fixture, ranked by student descending (ids break no ties)
    let teachers = [0.8, 0.2, 0.6, 0.0, 1.0];
    let students = [0.9, 0.7, 0.5, 0.3, 0.1];
    let pairs: Vec<ScoredPair> = (0..5)
        .map(|i| pair("p", &format!("f{i}"), teachers[i], students[i]))
        .collect();
    let (.., map) = relevancy_metrics(&pairs).unwrap();
    let ranked_relevance: Vec<bool> = teachers.iter().map(|&t| t > 0.5).collect();
    let expect = brute_force_ap(&ranked_relevance);
    assert!((map - expect).abs() < 1e-12, "map {map} vs oracle {expect}");
}

#[test]
fn ap_oracle_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let n = rng.gen_range(1..=5);
        let mut pairs = Vec::new();
        let mut students: Vec<f64> = Vec::new();
        for i in 0..n {
            // distinct student scores keep the ranking unambiguous
            let mut s;
            loop {
                s = rng.gen_range(-0.2..1.2);
                if students.iter().all(|&x: &f64| (x - s).abs() > 1e-9) {
                    break;
                }
            }
            students.push(s);
            let t = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0][rng.gen_range(0..6)];
            pairs.push(pair("p", &format!("f{i}"), t, s));
        }
        if !pairs.iter().any(|p| p.teacher > 0.5) {
            continue;
        }
        let (.., map) = relevancy_metrics(&pairs).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| students[b].partial_cmp(&students[a]).unwrap());
        let ranked_relevance: Vec<bool> = order.iter().map(|&i| pairs[i].teacher > 0.5).collect();
        let expect = brute_force_ap(&ranked_relevance);
        assert!((map - expect).abs() < 1e-12, "trial {trial}");
    }
}

#[test]
fn ndcg_matches_all_orderings_oracle() {
    // graded 4-candidate fixture; the ideal is the max DCG over all 4! orders
    let teachers = [0.6, 1.0, 0.2, 0.8];
    let students = [0.9, 0.6, 0.4, 0.2];
    let pairs: Vec<ScoredPair> = (0..4)
        .map(|i| pair("p", &format!("f{i}"), teachers[i], students[i]))
        .collect();
    let (_, ndcg) = ranking_metrics(&pairs, NdcgGains::Graded).unwrap();

    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| students[b].partial_cmp(&students[a]).unwrap());
    let realized: Vec<f64> = order.iter().map(|&i| teachers[i]).collect();
    let best = permutations(4)
        .into_iter()
        .map(|p| dcg(&p.iter().map(|&i| teachers[i]).collect::<Vec<f64>>()))
        .fold(f64::NEG_INFINITY, f64::max);
    let expect = dcg(&realized) / best;
    assert!((ndcg - expect).abs() < 1e-12, "ndcg {ndcg} vs oracle {expect}");
}

#[test]
fn binary_gain_ndcg_matches_oracle() {
    let teachers = [0.6, 1.0, 0.2, 0.0];
    let students = [0.1, 0.9, 0.5, 0.7];
    let pairs: Vec<ScoredPair> = (0..4)
        .map(|i| pair("p", &format!("f{i}"), teachers[i], students[i]))
        .collect();
    let (_, ndcg) = ranking_metrics(&pairs, NdcgGains::Binary).unwrap();
    let gains: Vec<f64> = teachers.iter().map(|&t| if t > 0.5 { 1.0 } else { 0.0 }).collect();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| students[b].partial_cmp(&students[a]).unwrap());
    let realized: Vec<f64> = order.iter().map(|&i| gains[i]).collect();
    let best = permutations(4)
        .into_iter()
        .map(|p| dcg(&p.iter().map(|&i| gains[i]).collect::<Vec<f64>>()))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((ndcg - dcg(&realized) / best).abs() < 1e-12);
}

/// W₁ as the integral of |CDF_s - CDF_t| over the merged sample grid.
fn wasserstein_cdf_integral(a: &[f64], b: &[f64]) -> f64 {
    let mut grid: Vec<f64> = a.iter().chain(b).cloned().collect();
    grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
    grid.dedup();
    let cdf = |sample: &[f64], x: f64| -> f64 {
        sample.iter().filter(|&&v| v <= x).count() as f64 / sample.len() as f64
    };
    let mut acc = 0.0;
    for w in grid.windows(2) {
        acc += (cdf(a, w[0]) - cdf(b, w[0])).abs() * (w[1] - w[0]);
    }
    acc
}

#[test]
fn wasserstein_matches_cdf_integral_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..100 {
        let n = rng.gen_range(2..40);
        let pairs: Vec<ScoredPair> = (0..n)
            .map(|i| {
                pair(
                    "p",
                    &format!("f{i}"),
                    [0.0, 0.2, 0.4, 0.6, 0.8, 1.0][rng.gen_range(0..6)],
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        let (.., w1) = calibration_metrics(&pairs).unwrap();
        let students: Vec<f64> = pairs.iter().map(|p| p.student).collect();
        let teachers: Vec<f64> = pairs.iter().map(|p| p.teacher).collect();
        let expect = wasserstein_cdf_integral(&students, &teachers);
        assert!((w1 - expect).abs() < 1e-9, "trial {trial}: {w1} vs {expect}");
    }
}

#[test]
fn planted_recall_gap_is_recovered_exactly() {
    // group A: recall 1.0 (5/5 relevant found); group B: recall 0.8 (4/5)
    let mut pairs = Vec::new();
    for i in 0..5 {
        let mut p = pair("pa", &format!("a{i}"), 0.8, 0.9);
        p.metadata.insert("group".into(), "A".into());
        pairs.push(p);
    }
    for i in 0..5 {
        let student = if i == 0 { 0.1 } else { 0.9 };
        let mut p = pair("pb", &format!("b{i}"), 0.8, student);
        p.metadata.insert("group".into(), "B".into());
        pairs.push(p);
    }
    // pad both groups with a non-relevant candidate so every metric is defined
    for (proj, g) in [("pa", "A"), ("pb", "B")] {
        let mut p = pair(proj, &format!("x{g}"), 0.0, 0.0);
        p.metadata.insert("group".into(), g.into());
        pairs.push(p);
    }
    let sliced = sliced_evaluate(&pairs, "group", NdcgGains::Graded).unwrap();
    assert!((sliced.groups["A"].recall - 1.0).abs() < 1e-12);
    assert!((sliced.groups["B"].recall - 0.8).abs() < 1e-12);
    assert!((sliced.max_recall_gap - 0.2).abs() < 1e-12);
}

#[test]
fn describe_matches_raw_moment_oracle_on_1000_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let n = rng.gen_range(1..30);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = describe(&values).unwrap().as_array();

        // raw-definition route: explicit central-moment sums
        let nf = n as f64;
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / nf;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        let std = m2.sqrt();
        let (skew, kurt) = if std < 1e-12 {
            (0.0, 0.0)
        } else {
            let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
            let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
            (m3 / std.powi(3), m4 / std.powi(4))
        };
        let expect = [min, max, mean, std, skew, kurt];
        for (field, (g, e)) in got.iter().zip(&expect).enumerate() {
            assert!(
                (g - e).abs() < 1e-9,
                "trial {trial} field {field}: {g} vs {e}"
            );
        }
    }
}

#[test]
fn describe_sigma_zero_convention_in_oracle_setting() {
    let got = describe(&[0.3f64, 0.3, 0.3]).unwrap().as_array();
    assert_eq!(got, [0.3, 0.3, 0.3, 0.0, 0.0, 0.0]);
}
