//! Minimum-redundancy maximum-relevance input ranking.
//!
//! Features and target are discretized by equal-frequency binning, mutual
//! information is estimated with the plug-in histogram estimator (nats),
//! and features are ranked by greedy forward selection maximizing
//! relevance-minus-mean-redundancy.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::exec::{self, Jobs};
use crate::{Error, Result};

/// Greedy selection criterion: relevance minus mean redundancy (difference)
/// or relevance over mean redundancy (quotient).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MrmrCriterion {
    #[default]
    Mid,
    Miq,
}

impl MrmrCriterion {
    pub fn name(&self) -> &'static str {
        match self {
            MrmrCriterion::Mid => "mid",
            MrmrCriterion::Miq => "miq",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mid" => Ok(MrmrCriterion::Mid),
            "miq" => Ok(MrmrCriterion::Miq),
            other => Err(Error::invalid(format!(
                "unknown mrmr criterion `{other}` (expected mid or miq)"
            ))),
        }
    }
}

/// Ranking result: a permutation of feature indices with the score each
/// feature had when it was selected, plus normalized relevance weights for
/// reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct MrmrRanking {
    /// Feature indices, best first.
    pub order: Vec<usize>,
    /// Selection-time criterion value, parallel to `order`.
    pub scores: Vec<f64>,
    /// MI(feature, target) normalized to sum 1, parallel to `order`.
    pub weights: Vec<f64>,
}

/// Default bin count for N samples.
pub fn default_bins(n: usize) -> usize {
    n.isqrt().max(2)
}

/// Equal-frequency discretization with quantile edges; values equal to an
/// edge fall into the lower bin, so a constant column gets a single label.
pub fn discretize(column: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::invalid(format!("bins must be >= 2, got {bins}")));
    }
    let n = column.len();
    if n == 0 {
        return Err(Error::invalid("discretize: empty column"));
    }
    if bins > n {
        return Err(Error::invalid(format!(
            "bins {bins} exceed sample count {n}"
        )));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("discretize: non-finite value"));
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins)
        .map(|k| sorted[(k * n).div_ceil(bins) - 1])
        .collect();
    Ok(column
        .iter()
        .map(|&v| edges.iter().filter(|&&e| e < v).count())
        .collect())
}

/// Plug-in mutual information between two labelings, in nats.
pub fn mutual_information(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "mutual_information: {} vs {} labels",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("mutual_information: empty input"));
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut pa: BTreeMap<usize, f64> = BTreeMap::new();
    let mut pb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *pa.entry(x).or_default() += 1.0;
        *pb.entry(y).or_default() += 1.0;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let pxy = c / n;
            pxy * (pxy / (pa[&x] / n * pb[&y] / n)).ln()
        })
        .sum();
    // The plug-in estimate is a KL divergence, nonnegative up to rounding.
    Ok(mi.max(0.0))
}

/// Shannon entropy of a labeling, in nats.
pub fn entropy(a: &[usize]) -> Result<f64> {
    mutual_information(a, a)
}

/// Symmetric pairwise MI matrix over labeled columns; pairs are computed
/// independently, in parallel when requested.
pub fn mi_matrix(jobs: Jobs, labels: &[Vec<usize>]) -> Result<DMatrix<f64>> {
    let d = labels.len();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (i..d).map(move |j| (i, j)))
        .collect();
    let values = exec::map(jobs, &pairs, |&(i, j)| {
        mutual_information(&labels[i], &labels[j])
    });
    let mut m = DMatrix::zeros(d, d);
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    Ok(m)
}

/// Rank every feature column of `x` against the target by greedy forward
/// selection; see [`rank_features_with`] for the knobs.
pub fn rank_features(x: &DMatrix<f64>, y: &[f64], bins: usize) -> Result<MrmrRanking> {
    rank_features_with(Jobs::Serial, x, y, bins, MrmrCriterion::Mid)
}

/// Greedy forward selection: the first pick maximizes MI(feature, target);
/// each later pick maximizes the criterion over the already-selected set.
/// Ties go to the lower feature index.
pub fn rank_features_with(
    jobs: Jobs,
    x: &DMatrix<f64>,
    y: &[f64],
    bins: usize,
    criterion: MrmrCriterion,
) -> Result<MrmrRanking> {
    let d = x.ncols();
    if d == 0 {
        return Err(Error::invalid("rank_features: no feature columns"));
    }
    if x.nrows() != y.len() {
        return Err(Error::shape(format!(
            "rank_features: {} rows vs {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid(
            "rank_features: missing feature cells; fill them first",
        ));
    }
    let y_labels = discretize(y, bins)?;
    if y_labels.iter().all(|&l| l == y_labels[0]) {
        return Err(Error::invalid("degenerate target: a single label"));
    }
    let columns: Vec<Vec<f64>> = (0..d).map(|j| x.column(j).iter().copied().collect()).collect();
    let labels: Vec<Vec<usize>> = exec::map(jobs, &columns, |c| discretize(c, bins))
        .into_iter()
        .collect::<Result<_>>()?;
    let relevance: Vec<f64> = labels
        .iter()
        .map(|l| mutual_information(l, &y_labels))
        .collect::<Result<_>>()?;
    let pairwise = mi_matrix(jobs, &labels)?;

    let relevance_sum: f64 = relevance.iter().sum();
    let mut remaining: Vec<usize> = (0..d).collect();
    let mut order = Vec::with_capacity(d);
    let mut scores = Vec::with_capacity(d);
    while !remaining.is_empty() {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (slot, &f) in remaining.iter().enumerate() {
            let score = if order.is_empty() {
                relevance[f]
            } else {
                let redundancy: f64 =
                    order.iter().map(|&s| pairwise[(f, s)]).sum::<f64>() / order.len() as f64;
                match criterion {
                    MrmrCriterion::Mid => relevance[f] - redundancy,
                    MrmrCriterion::Miq => relevance[f] / redundancy.max(1e-300),
                }
            };
            if score > best_score {
                best_score = score;
                best = slot;
            }
        }
        order.push(remaining.remove(best));
        scores.push(best_score);
    }
    let weights = order
        .iter()
        .map(|&f| {
            if relevance_sum > 0.0 {
                relevance[f] / relevance_sum
            } else {
                0.0
            }
        })
        .collect();
    Ok(MrmrRanking {
        order,
        scores,
        weights,
    })
}

/// Header of the ranking CSV.
pub const RANKING_HEADER: &str = "rank,feature,score,weight";

/// Render a ranking as CSV over the given feature names.
pub fn ranking_csv(ranking: &MrmrRanking, feature_names: &[String]) -> Result<String> {
    if let Some(&bad) = ranking.order.iter().find(|&&f| f >= feature_names.len()) {
        return Err(Error::shape(format!(
            "ranking references feature {bad}, only {} names",
            feature_names.len()
        )));
    }
    let mut out = String::from(RANKING_HEADER);
    out.push('\n');
    for (i, &f) in ranking.order.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            i + 1,
            feature_names[f],
            ranking.scores[i],
            ranking.weights[i]
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent MI oracle: H(a) + H(b) − H(a,b) from explicit histograms.
    fn brute_force_mi(a: &[usize], b: &[usize]) -> f64 {
        fn h(counts: &BTreeMap<Vec<usize>, usize>, n: f64) -> f64 {
            counts
                .values()
                .map(|&c| {
                    let p = c as f64 / n;
                    -p * p.ln()
                })
                .sum()
        }
        let n = a.len() as f64;
        let mut ha = BTreeMap::new();
        let mut hb = BTreeMap::new();
        let mut hab = BTreeMap::new();
        for (&x, &y) in a.iter().zip(b) {
            *ha.entry(vec![x]).or_insert(0) += 1;
            *hb.entry(vec![y]).or_insert(0) += 1;
            *hab.entry(vec![x, y]).or_insert(0) += 1;
        }
        h(&ha, n) + h(&hb, n) - h(&hab, n)
    }

    #[test]
    fn discretize_hand_checks() {
        assert_eq!(discretize(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(
            discretize(&[5.0, 1.0, 3.0, 2.0, 4.0], 5).unwrap(),
            vec![4, 0, 2, 1, 3]
        );
        assert_eq!(discretize(&[7.0; 4], 2).unwrap(), vec![0; 4]);
        // Ties land in the lower bin.
        assert_eq!(discretize(&[1.0, 1.0, 1.0, 2.0], 2).unwrap(), vec![0, 0, 0, 1]);
    }

    #[test]
    fn discretize_input_validation() {
        assert!(discretize(&[1.0, 2.0], 3).is_err());
        assert!(discretize(&[1.0, 2.0], 1).is_err());
        assert!(discretize(&[], 2).is_err());
        assert!(discretize(&[f64::NAN, 0.0], 2).is_err());
    }

    #[test]
    fn discretize_labels_bounded_by_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.random_range(4..60);
            let bins = rng.random_range(2..=n.min(8));
            let col: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let labels = discretize(&col, bins).unwrap();
            assert!(labels.iter().all(|&l| l < bins));
        }
    }

    #[test]
    fn mi_of_fair_binary_with_itself_is_ln2() {
        let a = vec![0, 0, 1, 1];
        assert!((mutual_information(&a, &a).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mi_with_constant_is_zero() {
        let a = vec![0, 1, 0, 1, 1];
        let b = vec![3; 5];
        assert_eq!(mutual_information(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn mi_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for _ in 0..200 {
            let n = rng.random_range(2..30);
            let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let mi = mutual_information(&a, &b).unwrap();
            let oracle = brute_force_mi(&a, &b);
            assert!((mi - oracle).abs() < 1e-12, "{mi} vs oracle {oracle}");
            assert!(mi >= 0.0);
            let sym = mutual_information(&b, &a).unwrap();
            assert!((mi - sym).abs() < 1e-12);
            let self_mi = mutual_information(&a, &a).unwrap();
            assert!((self_mi - brute_force_mi(&a, &a)).abs() < 1e-12);
        }
    }

    #[test]
    fn mi_matrix_is_symmetric_and_jobs_agnostic() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let labels: Vec<Vec<usize>> = (0..5)
            .map(|_| (0..40).map(|_| rng.random_range(0..3)).collect())
            .collect();
        let serial = mi_matrix(Jobs::Serial, &labels).unwrap();
        let parallel = mi_matrix(Jobs::Parallel(4), &labels).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial, serial.transpose());
    }

    fn redundant_fixture(seed: u64, n: usize) -> (DMatrix<f64>, Vec<f64>) {
        // f0 tracks the target, f1 duplicates f0, f2 is independent noise.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let f0: Vec<f64> = y.iter().map(|v| v + rng.random_range(-0.01..0.01)).collect();
        let f2: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut x = DMatrix::zeros(n, 3);
        for i in 0..n {
            x[(i, 0)] = f0[i];
            x[(i, 1)] = f0[i];
            x[(i, 2)] = f2[i];
        }
        (x, y)
    }

    #[test]
    fn redundant_feature_ranks_behind_its_original() {
        let (x, y) = redundant_fixture(20, 120);
        let ranking = rank_features(&x, &y, default_bins(120)).unwrap();
        assert_eq!(ranking.order[0], 0, "order {:?}", ranking.order);
        // The duplicate's selection-time score is dragged down by redundancy.
        let pos1 = ranking.order.iter().position(|&f| f == 1).unwrap();
        assert!(ranking.scores[pos1] < ranking.scores[0]);
        // Weights are normalized relevance: duplicate ties its original.
        assert!((ranking.weights[0] - ranking.weights[pos1]).abs() < 1e-12);
        let sum: f64 = ranking.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_never_outranks_original_across_seeds() {
        for seed in 0..20 {
            let (x, y) = redundant_fixture(seed, 60);
            for criterion in [MrmrCriterion::Mid, MrmrCriterion::Miq] {
                let ranking =
                    rank_features_with(Jobs::Serial, &x, &y, 6, criterion).unwrap();
                let p0 = ranking.order.iter().position(|&f| f == 0).unwrap();
                let p1 = ranking.order.iter().position(|&f| f == 1).unwrap();
                assert!(p0 < p1, "seed {seed} {criterion:?}: {:?}", ranking.order);
            }
        }
    }

    #[test]
    fn single_feature_and_degenerate_target() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = vec![0.1, 0.5, 0.2, 0.9];
        let ranking = rank_features(&x, &y, 2).unwrap();
        assert_eq!(ranking.order, vec![0]);
        let constant = vec![0.5; 4];
        let err = rank_features(&x, &constant, 2).unwrap_err();
        assert!(err.to_string().contains("degenerate target"), "{err}");
    }

    #[test]
    fn ranking_is_a_permutation_and_deterministic() {
        let (x, y) = redundant_fixture(21, 80);
        let a = rank_features(&x, &y, 5).unwrap();
        let b = rank_features(&x, &y, 5).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
        assert!(a.scores.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn column_permutation_permutes_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 100;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let x = DMatrix::from_fn(n, 4, |i, j| {
            y[i] * (j as f64 + 1.0) / 4.0 + rng.random_range(-0.5..0.5)
        });
        let base = rank_features(&x, &y, 8).unwrap();
        // New column j holds old column perm[j].
        let perm = [2usize, 0, 3, 1];
        let xp = DMatrix::from_fn(n, 4, |i, j| x[(i, perm[j])]);
        let permuted = rank_features(&xp, &y, 8).unwrap();
        let mut inverse = [0usize; 4];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mapped: Vec<usize> = base.order.iter().map(|&f| inverse[f]).collect();
        assert_eq!(permuted.order, mapped);
    }

    #[test]
    fn missing_cells_are_rejected() {
        let mut x = DMatrix::from_element(4, 2, 1.0);
        x[(0, 0)] = f64::NAN;
        let err = rank_features(&x, &[0.1, 0.2, 0.3, 0.4], 2).unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }

    #[test]
    fn csv_layout() {
        let ranking = MrmrRanking {
            order: vec![1, 0],
            scores: vec![0.5, 0.25],
            weights: vec![0.6, 0.4],
        };
        let names = vec!["a".to_string(), "b".to_string()];
        let csv = ranking_csv(&ranking, &names).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("rank,feature,score,weight"));
        assert_eq!(lines.next(), Some("1,b,0.5,0.6"));
        assert_eq!(lines.next(), Some("2,a,0.25,0.4"));
    }

    #[test]
    fn default_bins_floor_sqrt() {
        assert_eq!(default_bins(1), 2);
        assert_eq!(default_bins(9), 3);
        assert_eq!(default_bins(99), 9);
        assert_eq!(default_bins(100), 10);
    }
}
