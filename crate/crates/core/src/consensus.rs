//! Non-consensus detection: per-group deviation ranking with mean-band
//! pooling for small groups, arbitration flagging, and reviewer radicalness.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{StudentId, TaskId};
use crate::scoring::ReviewGroup;

/// Detector thresholds. Defaults: flag at z >= 30, pool groups of at most 4
/// reviewers in 5-point mean bands, warn below z_r 50 after 10 reviews.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConfig {
    pub arbitration_threshold: f64,
    pub band_width: f64,
    pub pooling_size: usize,
    pub warn_threshold: f64,
    pub min_reviews: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            arbitration_threshold: 30.0,
            band_width: 5.0,
            pooling_size: 4,
            warn_threshold: 50.0,
            min_reviews: 10,
        }
    }
}

impl ConsensusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_width > 0.0) {
            return Err(Error::InvalidParams("band_width must be positive".into()));
        }
        if !(self.arbitration_threshold >= 0.0) {
            return Err(Error::InvalidParams(
                "arbitration_threshold must be non-negative".into(),
            ));
        }
        if self.min_reviews < 1 {
            return Err(Error::InvalidParams("min_reviews must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDeviation {
    pub task_id: TaskId,
    pub author_id: StudentId,
    /// Deviation used for ranking and flagging (pooled when `pooled`).
    pub z: f64,
    /// The group's own population standard deviation.
    pub raw_z: f64,
    pub group_size: usize,
    pub pooled: bool,
}

/// Sum of squared deviations from the group mean, computed exactly from
/// integer moments.
fn sum_sq_dev(scores: impl Iterator<Item = u32>) -> (f64, usize) {
    let (mut n, mut s, mut s2) = (0u64, 0u64, 0u64);
    for x in scores {
        let x = u64::from(x);
        n += 1;
        s += x;
        s2 += x * x;
    }
    if n == 0 {
        return (0.0, 0);
    }
    // n * sum(x^2) - (sum x)^2 is a non-negative integer.
    let num = n * s2 - s * s;
    (num as f64 / n as f64, n as usize)
}

/// Population standard deviation of one group's scores.
pub fn group_sd(group: &ReviewGroup) -> Result<GroupDeviation> {
    if group.is_empty() {
        return Err(Error::EmptyGroup {
            author: group.author_id.to_string(),
        });
    }
    let (ss, m) = sum_sq_dev(group.scores());
    let z = (ss / m as f64).sqrt();
    Ok(GroupDeviation {
        task_id: group.task_id,
        author_id: group.author_id.clone(),
        z,
        raw_z: z,
        group_size: m,
        pooled: false,
    })
}

/// A mean-score interval whose small groups share one pooled deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationBand {
    pub lower: f64,
    pub upper: f64,
    pub members: Vec<(TaskId, StudentId)>,
}

/// Band index for a mean: `[0, w]` is band 0, then `(w, 2w]`, `(2w, 3w]`, ...
fn band_index(mean: f64, band_width: f64) -> u64 {
    let q = (mean / band_width).ceil();
    if q <= 1.0 {
        0
    } else {
        q as u64 - 1
    }
}

/// Partitions the groups of size `<= pooling_size` into mean bands.
pub fn estimation_bands(
    groups: &[ReviewGroup],
    band_width: f64,
    pooling_size: usize,
) -> Result<Vec<EstimationBand>> {
    if !(band_width > 0.0) {
        return Err(Error::InvalidParams("band_width must be positive".into()));
    }
    let mut bands: BTreeMap<u64, EstimationBand> = BTreeMap::new();
    for g in groups.iter().filter(|g| g.len() <= pooling_size) {
        let mean = g.mean().ok_or_else(|| Error::EmptyGroup {
            author: g.author_id.to_string(),
        })?;
        let idx = band_index(mean, band_width);
        bands
            .entry(idx)
            .or_insert_with(|| EstimationBand {
                lower: idx as f64 * band_width,
                upper: (idx + 1) as f64 * band_width,
                members: Vec::new(),
            })
            .members
            .push((g.task_id, g.author_id.clone()));
    }
    Ok(bands.into_values().collect())
}

/// Deviation of every group; groups with at most `pooling_size` reviewers
/// get the pooled deviation of their mean band instead of their own.
///
/// Output order follows `groups`.
pub fn pooled_group_sd(
    groups: &[ReviewGroup],
    band_width: f64,
    pooling_size: usize,
) -> Result<Vec<GroupDeviation>> {
    if !(band_width > 0.0) {
        return Err(Error::InvalidParams("band_width must be positive".into()));
    }
    // band -> (sum of squared deviations, total reviewers)
    let mut pools: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    let mut band_of = Vec::with_capacity(groups.len());
    for g in groups {
        if g.is_empty() {
            return Err(Error::EmptyGroup {
                author: g.author_id.to_string(),
            });
        }
        if g.len() <= pooling_size {
            let idx = band_index(g.mean().expect("non-empty"), band_width);
            let (ss, m) = sum_sq_dev(g.scores());
            let pool = pools.entry(idx).or_insert((0.0, 0));
            pool.0 += ss;
            pool.1 += m;
            band_of.push(Some(idx));
        } else {
            band_of.push(None);
        }
    }

    groups
        .iter()
        .zip(band_of)
        .map(|(g, band)| {
            let mut dev = group_sd(g)?;
            if let Some(idx) = band {
                let (ss, m) = pools[&idx];
                dev.z = (ss / m as f64).sqrt();
                dev.pooled = true;
            }
            Ok(dev)
        })
        .collect()
}

/// Review groups of one task ranked by deviation, most divergent first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub task_id: TaskId,
    /// Snapshot version the report was computed from.
    #[serde(default)]
    pub version: u64,
    pub entries: Vec<GroupDeviation>,
    pub flagged: Vec<GroupDeviation>,
}

impl ConsensusReport {
    /// Recomputes `flagged` for a new threshold.
    pub fn flag(&mut self, threshold: f64) {
        self.flagged = flag_arbitration(self, threshold);
    }
}

fn by_z_desc(a: &GroupDeviation, b: &GroupDeviation) -> Ordering {
    b.z.total_cmp(&a.z).then_with(|| a.author_id.cmp(&b.author_id))
}

/// Sorts deviations descending by z, ties by author id ascending.
pub fn rank_groups(task_id: TaskId, mut deviations: Vec<GroupDeviation>) -> ConsensusReport {
    deviations.sort_by(by_z_desc);
    ConsensusReport {
        task_id,
        version: 0,
        entries: deviations,
        flagged: Vec::new(),
    }
}

/// Entries whose deviation reaches `threshold`.
pub fn flag_arbitration(report: &ConsensusReport, threshold: f64) -> Vec<GroupDeviation> {
    report
        .entries
        .iter()
        .filter(|e| e.z >= threshold)
        .cloned()
        .collect()
}

/// Every code score one reviewer has given, grouped by task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewerHistory {
    pub reviewer_id: StudentId,
    pub tasks: BTreeMap<TaskId, Vec<u32>>,
}

impl ReviewerHistory {
    pub fn new(reviewer_id: StudentId) -> Self {
        ReviewerHistory {
            reviewer_id,
            tasks: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, task_id: TaskId, score: u32) {
        self.tasks.entry(task_id).or_default().push(score);
    }

    pub fn review_count(&self) -> usize {
        self.tasks.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMean {
    pub task_id: TaskId,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewerRadicalness {
    pub reviewer_id: StudentId,
    pub z_r: f64,
    pub review_count: usize,
    pub task_means: Vec<TaskMean>,
}

/// Accumulated within-task variance of a reviewer's scores.
///
/// Low values mean the reviewer hands out near-identical scores regardless
/// of the work. This is a variance, not a standard deviation.
pub fn reviewer_radicalness(history: &ReviewerHistory) -> Result<ReviewerRadicalness> {
    let mut total_ss = 0.0;
    let mut total_m = 0usize;
    let mut task_means = Vec::new();
    for (&task_id, scores) in &history.tasks {
        if scores.is_empty() {
            continue;
        }
        let (ss, m) = sum_sq_dev(scores.iter().copied());
        total_ss += ss;
        total_m += m;
        let sum: u64 = scores.iter().map(|&s| u64::from(s)).sum();
        task_means.push(TaskMean {
            task_id,
            mean: sum as f64 / m as f64,
        });
    }
    if total_m == 0 {
        return Err(Error::EmptyHistory(history.reviewer_id.to_string()));
    }
    Ok(ReviewerRadicalness {
        reviewer_id: history.reviewer_id.clone(),
        z_r: total_ss / total_m as f64,
        review_count: total_m,
        task_means,
    })
}

/// Reviewers ordered most radical (smallest z_r) first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadicalnessReport {
    #[serde(default)]
    pub version: u64,
    pub entries: Vec<ReviewerRadicalness>,
    pub warn_candidates: Vec<StudentId>,
}

impl RadicalnessReport {
    pub fn from_entries(
        mut entries: Vec<ReviewerRadicalness>,
        warn_threshold: f64,
        min_reviews: usize,
    ) -> Self {
        entries.sort_by(|a, b| {
            a.z_r
                .total_cmp(&b.z_r)
                .then_with(|| a.reviewer_id.cmp(&b.reviewer_id))
        });
        let warn_candidates = entries
            .iter()
            .filter(|e| e.z_r < warn_threshold && e.review_count >= min_reviews)
            .map(|e| e.reviewer_id.clone())
            .collect();
        RadicalnessReport {
            version: 0,
            entries,
            warn_candidates,
        }
    }

    pub fn get(&self, reviewer: &StudentId) -> Option<&ReviewerRadicalness> {
        self.entries.iter().find(|e| &e.reviewer_id == reviewer)
    }

    pub fn rank_of(&self, reviewer: &StudentId) -> Option<usize> {
        self.entries.iter().position(|e| &e.reviewer_id == reviewer)
    }
}

/// Ranks every reviewer with at least one review; reviewers without reviews
/// are left out.
pub fn rank_radicalness(
    histories: &[ReviewerHistory],
    warn_threshold: f64,
    min_reviews: usize,
) -> Result<RadicalnessReport> {
    if min_reviews < 1 {
        return Err(Error::InvalidParams("min_reviews must be at least 1".into()));
    }
    let entries = histories
        .iter()
        .filter(|h| h.review_count() > 0)
        .map(reviewer_radicalness)
        .collect::<Result<Vec<_>>>()?;
    Ok(RadicalnessReport::from_entries(
        entries,
        warn_threshold,
        min_reviews,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn group(author: &str, scores: &[u32]) -> ReviewGroup {
        ReviewGroup::from_scores(TaskId(1), author, scores)
    }

    fn two_pass_sd(xs: &[u32]) -> f64 {
        let n = xs.len() as f64;
        let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
        (xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    #[test]
    fn sd_of_equal_scores_is_zero() {
        assert_eq!(group_sd(&group("a", &[90, 90, 90])).unwrap().z, 0.0);
    }

    #[test]
    fn sd_hand_computed() {
        let z = group_sd(&group("a", &[80, 90, 100])).unwrap().z;
        assert!((z - (200.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((z - 8.1650).abs() < 1e-4);
    }

    #[test]
    fn sd_of_single_review_is_zero() {
        assert_eq!(group_sd(&group("a", &[37])).unwrap().z, 0.0);
    }

    #[test]
    fn sd_of_empty_group_errors() {
        assert!(group_sd(&ReviewGroup::new(TaskId(1), "a".into())).is_err());
    }

    #[test]
    fn pooled_pair_in_one_band() {
        let gs = [group("a", &[84, 86, 88]), group("b", &[88, 90, 92])];
        let devs = pooled_group_sd(&gs, 5.0, 4).unwrap();
        let expected = (16.0f64 / 6.0).sqrt();
        for d in &devs {
            assert!(d.pooled);
            assert!((d.z - expected).abs() < 1e-12);
            assert!((d.z - 1.633).abs() < 1e-3);
        }
        assert!((devs[0].raw_z - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn large_group_is_not_pooled() {
        let g = group("a", &[70, 75, 80, 95, 60]);
        let devs = pooled_group_sd(std::slice::from_ref(&g), 5.0, 4).unwrap();
        assert_eq!(devs[0], group_sd(&g).unwrap());
        assert!(!devs[0].pooled);
    }

    #[test]
    fn lone_group_in_band_keeps_own_sd() {
        let g = group("a", &[60, 70]);
        let devs = pooled_group_sd(std::slice::from_ref(&g), 5.0, 4).unwrap();
        assert!(devs[0].pooled);
        assert!((devs[0].z - 5.0).abs() < 1e-12);
    }

    #[test]
    fn band_edges() {
        assert_eq!(band_index(0.0, 5.0), 0);
        assert_eq!(band_index(5.0, 5.0), 0);
        assert_eq!(band_index(5.5, 5.0), 1);
        assert_eq!(band_index(86.0, 5.0), 17);
        assert_eq!(band_index(90.0, 5.0), 17);
        assert_eq!(band_index(90.1, 5.0), 18);
        assert_eq!(band_index(100.0, 5.0), 19);
    }

    #[test]
    fn bands_partition_small_groups() {
        let gs = [
            group("a", &[84, 86, 88]),
            group("b", &[88, 90, 92]),
            group("c", &[10, 12]),
            group("d", &[50, 50, 50, 50, 50]),
        ];
        let bands = estimation_bands(&gs, 5.0, 4).unwrap();
        assert_eq!(bands.len(), 2);
        assert_eq!(bands[0].lower, 10.0);
        assert_eq!(bands[1].members.len(), 2);
        assert!(bands.iter().all(|b| b.members.iter().all(|(_, a)| a.as_str() != "d")));
        assert!(estimation_bands(&gs, 0.0, 4).is_err());
    }

    #[test]
    fn table2_order_preserved() {
        let devs: Vec<GroupDeviation> = [("6389", 35.42), ("6394", 35.14), ("6391", 35.06)]
            .iter()
            .rev()
            .map(|&(a, z)| GroupDeviation {
                task_id: TaskId(1),
                author_id: a.into(),
                z,
                raw_z: z,
                group_size: 5,
                pooled: false,
            })
            .collect();
        let report = rank_groups(TaskId(1), devs);
        let order: Vec<&str> = report.entries.iter().map(|e| e.author_id.as_str()).collect();
        assert_eq!(order, ["6389", "6394", "6391"]);
    }

    #[test]
    fn equal_groups_order_by_author() {
        let devs = ["c", "a", "b"]
            .iter()
            .map(|a| group_sd(&group(a, &[70, 70])).unwrap())
            .collect();
        let report = rank_groups(TaskId(1), devs);
        let order: Vec<&str> = report.entries.iter().map(|e| e.author_id.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
    }

    #[test]
    fn flagging() {
        let mk = |z: f64| GroupDeviation {
            task_id: TaskId(1),
            author_id: format!("{z}").into(),
            z,
            raw_z: z,
            group_size: 5,
            pooled: false,
        };
        let mut report = rank_groups(TaskId(1), vec![mk(35.42), mk(0.0), mk(12.0)]);
        assert_eq!(flag_arbitration(&report, 30.0).len(), 1);
        assert_eq!(flag_arbitration(&report, 0.0).len(), 3);
        assert!(flag_arbitration(&report, 0.5).iter().all(|e| e.z > 0.0));
        report.flag(12.0);
        assert_eq!(report.flagged.len(), 2);
    }

    #[test]
    fn constant_scorer_has_zero_radicalness() {
        let mut h = ReviewerHistory::new("r".into());
        for t in 0..4 {
            for _ in 0..5 {
                h.record(TaskId(t), 88);
            }
        }
        assert_eq!(reviewer_radicalness(&h).unwrap().z_r, 0.0);
    }

    #[test]
    fn radicalness_hand_computed() {
        let mut h = ReviewerHistory::new("r".into());
        h.tasks.insert(TaskId(1), vec![80, 90]);
        h.tasks.insert(TaskId(2), vec![70, 90, 80]);
        let r = reviewer_radicalness(&h).unwrap();
        assert!((r.z_r - 50.0).abs() < 1e-12);
        assert_eq!(r.review_count, 5);
        assert_eq!(r.task_means[0].mean, 85.0);
        assert_eq!(r.task_means[1].mean, 80.0);
    }

    #[test]
    fn empty_history_errors() {
        assert!(reviewer_radicalness(&ReviewerHistory::new("r".into())).is_err());
    }

    #[test]
    fn reference_ordering() {
        let reference = [
            ("6369", 9.54),
            ("6373", 31.21),
            ("6389", 53.05),
            ("6375", 53.28),
            ("6390", 77.27),
            ("6378", 112.46),
            ("6370", 119.85),
            ("6371", 126.72),
            ("6384", 128.25),
            ("6379", 137.68),
        ];
        let mut shuffled: Vec<ReviewerRadicalness> = reference
            .iter()
            .map(|&(id, z_r)| ReviewerRadicalness {
                reviewer_id: id.into(),
                z_r,
                review_count: 60,
                task_means: Vec::new(),
            })
            .collect();
        shuffled.reverse();
        shuffled.swap(2, 7);
        let report = RadicalnessReport::from_entries(shuffled, 50.0, 10);
        let ids: Vec<&str> = report.entries.iter().map(|e| e.reviewer_id.as_str()).collect();
        let expected: Vec<&str> = reference.iter().map(|p| p.0).collect();
        assert_eq!(ids, expected);
        assert_eq!(report.warn_candidates, vec![StudentId::from("6369"), "6373".into()]);
    }

    #[test]
    fn few_reviews_are_not_warned() {
        let mut h = ReviewerHistory::new("r".into());
        h.tasks.insert(TaskId(1), vec![90, 90, 90]);
        let report = rank_radicalness(&[h], 50.0, 10).unwrap();
        assert_eq!(report.entries[0].z_r, 0.0);
        assert!(report.warn_candidates.is_empty());
    }

    #[test]
    fn constant_class_all_warned() {
        let hs: Vec<ReviewerHistory> = (0..4)
            .map(|i| {
                let mut h = ReviewerHistory::new(format!("s{i}").into());
                h.tasks.insert(TaskId(1), vec![75; 12]);
                h
            })
            .collect();
        let report = rank_radicalness(&hs, 50.0, 10).unwrap();
        assert!(report.entries.iter().all(|e| e.z_r == 0.0));
        assert_eq!(report.warn_candidates.len(), 4);
    }

    proptest! {
        #[test]
        fn group_sd_matches_two_pass(scores in prop::collection::vec(0u32..=100, 1..=8)) {
            let z = group_sd(&group("a", &scores)).unwrap().z;
            prop_assert!((z - two_pass_sd(&scores)).abs() < 1e-9);
        }

        #[test]
        fn adding_at_task_mean_does_not_grow_numerator(scores in prop::collection::vec(0u32..=100, 1..=6)) {
            let (before, m) = sum_sq_dev(scores.iter().copied());
            let sum: u32 = scores.iter().sum();
            if sum.is_multiple_of(m as u32) {
                let mut more = scores.clone();
                more.push(sum / m as u32);
                let (after, _) = sum_sq_dev(more.iter().copied());
                prop_assert!(after <= before + 1e-9);
            }
        }

        #[test]
        fn report_is_sorted(zs in prop::collection::vec(0.0f64..60.0, 0..20)) {
            let devs = zs.iter().enumerate().map(|(i, &z)| GroupDeviation {
                task_id: TaskId(1), author_id: format!("{i:03}").into(), z, raw_z: z, group_size: 3, pooled: false,
            }).collect();
            let report = rank_groups(TaskId(1), devs);
            let mut reference = zs.clone();
            reference.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let got: Vec<f64> = report.entries.iter().map(|e| e.z).collect();
            prop_assert_eq!(got, reference);
        }
    }
}
