//! Multi-seed statistics.

use crate::run::RunSummary;
use crate::spec::PolicyId;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStats {
    pub mean: f64,
    /// Sample standard deviation; `None` with fewer than two runs.
    pub std: Option<f64>,
    /// Normal-approximation 95% interval; `None` with fewer than two runs.
    pub ci: Option<(f64, f64)>,
}

impl MetricStats {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self {
                mean,
                std: None,
                ci: None,
            };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        let half = Z_95 * std / n.sqrt();
        Self {
            mean,
            std: Some(std),
            ci: Some((mean - half, mean + half)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub policy: PolicyId,
    pub beta: f64,
    pub disturbance: f64,
    pub runs: usize,
    pub cost: MetricStats,
    pub deviation: MetricStats,
}

/// Group by (policy, beta, disturbance) in order of first appearance.
pub fn summarize(summaries: &[RunSummary]) -> Vec<StatsRow> {
    let mut keys: Vec<(PolicyId, f64, f64)> = Vec::new();
    for s in summaries {
        let k = (s.policy, s.beta, s.disturbance);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(policy, beta, disturbance)| {
            let group: Vec<&RunSummary> = summaries
                .iter()
                .filter(|s| s.policy == policy && s.beta == beta && s.disturbance == disturbance)
                .collect();
            let costs: Vec<f64> = group.iter().map(|s| s.total_energy_cost).collect();
            let devs: Vec<f64> = group.iter().map(|s| s.total_temp_deviation).collect();
            StatsRow {
                policy,
                beta,
                disturbance,
                runs: group.len(),
                cost: MetricStats::of(&costs),
                deviation: MetricStats::of(&devs),
            }
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va * vb).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(policy: PolicyId, seed: u64, cost: f64, dev: f64) -> RunSummary {
        RunSummary {
            policy,
            seed,
            beta: 0.6,
            disturbance: 0.0,
            total_energy_cost: cost,
            total_temp_deviation: dev,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn single_seed_has_no_ci() {
        let rows = summarize(&[run(PolicyId::Baseline1, 1, 5.0, 1.0)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].cost.mean, 5.0);
        assert_eq!(rows[0].cost.std, None);
        assert_eq!(rows[0].cost.ci, None);
    }

    #[test]
    fn identical_values_give_zero_width_ci() {
        let rows = summarize(&[
            run(PolicyId::Proposed, 1, 4.0, 0.0),
            run(PolicyId::Proposed, 2, 4.0, 0.0),
        ]);
        assert_eq!(rows[0].cost.ci, Some((4.0, 4.0)));
        assert_eq!(rows[0].deviation.std, Some(0.0));
    }

    #[test]
    fn hand_computed_one_two_three() {
        // mean 2, sample variance ((1 + 0 + 1) / 2) = 1, half-width 1.959964 / sqrt(3)
        let rows = summarize(&[
            run(PolicyId::Proposed, 1, 1.0, 0.0),
            run(PolicyId::Proposed, 2, 2.0, 0.0),
            run(PolicyId::Proposed, 3, 3.0, 0.0),
        ]);
        let c = rows[0].cost;
        assert_eq!(c.mean, 2.0);
        assert_eq!(c.std, Some(1.0));
        let half = 1.959963984540054 / 3f64.sqrt();
        let (lo, hi) = c.ci.unwrap();
        assert!((lo - (2.0 - half)).abs() < 1e-12 && (hi - (2.0 + half)).abs() < 1e-12);
        assert!((half - 1.131585).abs() < 1e-6);
    }

    #[test]
    fn groups_keep_first_appearance_order() {
        let rows = summarize(&[
            run(PolicyId::Baseline1, 1, 1.0, 0.0),
            run(PolicyId::Proposed, 1, 1.0, 0.0),
            run(PolicyId::Baseline1, 2, 3.0, 0.0),
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].policy, PolicyId::Baseline1);
        assert_eq!(rows[0].runs, 2);
        assert_eq!(rows[0].cost.mean, 2.0);
    }

    #[test]
    fn empty_input_gives_empty_table() {
        assert!(summarize(&[]).is_empty());
    }

    #[test]
    fn spearman_known_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        // ranks (1,2,3) vs (3,1,2): 1 - 6*6/(3*8) = -0.5
        let r = spearman(&[0.2, 0.6, 1.0], &[80.0, 70.0, 76.0]).unwrap();
        assert!((r + 0.5).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]), None);
    }

    proptest::proptest! {
        #[test]
        fn spearman_is_bounded_and_rank_invariant(
            pairs in proptest::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 2..12),
        ) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            if let Some(r) = spearman(&xs, &ys) {
                proptest::prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
                // a monotone transform of one side leaves the ranks alone
                let cubed: Vec<f64> = ys.iter().map(|y| y.powi(3)).collect();
                let r3 = spearman(&xs, &cubed).unwrap();
                proptest::prop_assert!((r - r3).abs() < 1e-12);
                let flipped: Vec<f64> = ys.iter().map(|y| -y).collect();
                proptest::prop_assert!((r + spearman(&xs, &flipped).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn interval_contains_mean(xs in proptest::collection::vec(-1e3..1e3f64, 1..20)) {
            let m = MetricStats::of(&xs);
            if let Some((lo, hi)) = m.ci {
                proptest::prop_assert!(lo <= m.mean && m.mean <= hi);
            }
            proptest::prop_assert_eq!(m.std.is_some(), xs.len() > 1);
        }
    }
}
