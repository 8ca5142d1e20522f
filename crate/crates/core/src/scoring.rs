//! Motivation function, rubric scoring and weighted score aggregation.
//!
//! Everything here is a pure function of its inputs. Code scores are integers
//! in `[0, 100]`; means, bonus deltas and overall scores are carried as `f64`.

use std::collections::HashSet;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{StudentId, TaskId};

/// Maximum code score and the default score a review starts from.
pub const FULL_SCORE: u32 = 100;

/// Maximum points for one reverse-review criterion.
pub const CRITERION_MAX: u32 = 25;

// Tolerance on threshold comparisons so that ties land in the favorable
// segment even when `frac * max_diff` is not exactly representable.
const TIE_EPS: f64 = 1e-9;

/// Award/penalty constants and the dispersion guard for [`compute_bonus`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotivationParams {
    pub a1: f64,
    pub a2: f64,
    pub p1: f64,
    pub p2: f64,
    pub t1_frac: f64,
    pub t2_frac: f64,
    pub t3_frac: f64,
    /// Groups whose score range is below this get no bonus at all.
    pub max_diff_min: f64,
}

impl Default for MotivationParams {
    fn default() -> Self {
        MotivationParams {
            a1: 2.0,
            a2: 0.0,
            p1: 4.0,
            p2: 8.0,
            t1_frac: 0.10,
            t2_frac: 0.30,
            t3_frac: 0.60,
            max_diff_min: 10.0,
        }
    }
}

impl MotivationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a1 > self.a2 && self.a2 >= 0.0) {
            return Err(Error::InvalidParams("require a1 > a2 >= 0".into()));
        }
        if !(self.p2 > self.p1 && self.p1 >= 0.0) {
            return Err(Error::InvalidParams("require p2 > p1 >= 0".into()));
        }
        if !(0.0 < self.t1_frac
            && self.t1_frac < self.t2_frac
            && self.t2_frac < self.t3_frac
            && self.t3_frac <= 1.0)
        {
            return Err(Error::InvalidParams(
                "require 0 < t1_frac < t2_frac < t3_frac <= 1".into(),
            ));
        }
        if !(self.max_diff_min >= 0.0) {
            return Err(Error::InvalidParams("require max_diff_min >= 0".into()));
        }
        Ok(())
    }
}

/// Point weights of the score components of one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub w_revision: f64,
    pub w_code: f64,
    pub w_review: f64,
    pub w_review_done: f64,
    pub w_reverse_done: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            w_revision: 15.0,
            w_code: 30.0,
            w_review: 30.0,
            w_review_done: 12.5,
            w_reverse_done: 12.5,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w_revision,
            self.w_code,
            self.w_review,
            self.w_review_done,
            self.w_reverse_done,
        ];
        if all.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParams("weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Upper bound on the on-time (process) points of a task.
    pub fn process_total(&self) -> f64 {
        self.w_revision + self.w_review_done + self.w_reverse_done
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deduction {
    pub item: String,
    pub points: u32,
}

impl Deduction {
    pub fn new(item: impl Into<String>, points: u32) -> Self {
        Deduction {
            item: item.into(),
            points,
        }
    }
}

/// A reviewer's code review of one author's source in one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeReview {
    pub task_id: TaskId,
    pub reviewer_id: StudentId,
    pub author_id: StudentId,
    pub code_score: u32,
    pub deductions: Vec<Deduction>,
    pub comments: String,
    pub submitted_at: DateTime<Utc>,
}

impl CodeReview {
    /// Validates the deductions against `rubric` and derives the code score.
    pub fn new(
        task_id: TaskId,
        reviewer_id: StudentId,
        author_id: StudentId,
        deductions: Vec<Deduction>,
        comments: String,
        submitted_at: DateTime<Utc>,
        rubric: &Rubric,
    ) -> Result<Self> {
        let code_score = score_code_review(&deductions, rubric)?;
        Ok(CodeReview {
            task_id,
            reviewer_id,
            author_id,
            code_score,
            deductions,
            comments,
            submitted_at,
        })
    }
}

/// An author's assessment of one reviewer's comments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseReview {
    pub task_id: TaskId,
    pub author_id: StudentId,
    pub reviewer_id: StudentId,
    pub criterion_scores: [u32; 4],
    pub total: u32,
    pub submitted_at: DateTime<Utc>,
}

impl ReverseReview {
    pub fn new(
        task_id: TaskId,
        author_id: StudentId,
        reviewer_id: StudentId,
        criterion_scores: [u32; 4],
        submitted_at: DateTime<Utc>,
    ) -> Result<Self> {
        let total = score_reverse_review(criterion_scores)?;
        Ok(ReverseReview {
            task_id,
            author_id,
            reviewer_id,
            criterion_scores,
            total,
            submitted_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub reviewer_id: StudentId,
    pub code_score: u32,
}

/// All code scores given to one author's source in one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewGroup {
    pub task_id: TaskId,
    pub author_id: StudentId,
    pub entries: Vec<ReviewEntry>,
}

impl ReviewGroup {
    pub fn new(task_id: TaskId, author_id: StudentId) -> Self {
        ReviewGroup {
            task_id,
            author_id,
            entries: Vec::new(),
        }
    }

    /// Convenience constructor used heavily in tests: reviewers are named
    /// `r0`, `r1`, ... in score order.
    pub fn from_scores(task_id: TaskId, author_id: impl Into<StudentId>, scores: &[u32]) -> Self {
        ReviewGroup {
            task_id,
            author_id: author_id.into(),
            entries: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| ReviewEntry {
                    reviewer_id: StudentId(format!("r{i}")),
                    code_score: s,
                })
                .collect(),
        }
    }

    pub fn push(&mut self, reviewer_id: StudentId, code_score: u32) {
        self.entries.push(ReviewEntry {
            reviewer_id,
            code_score,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scores(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.code_score)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        let sum: u64 = self.scores().map(u64::from).sum();
        Some(sum as f64 / self.entries.len() as f64)
    }

    /// Range of the scores (`maxDiff`).
    pub fn max_diff(&self) -> u32 {
        let max = self.scores().max().unwrap_or(0);
        let min = self.scores().min().unwrap_or(0);
        max - min
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::EmptyGroup {
                author: self.author_id.to_string(),
            });
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if e.code_score > FULL_SCORE {
                return Err(Error::ScoreOutOfRange {
                    score: i64::from(e.code_score),
                });
            }
            if e.reviewer_id == self.author_id {
                return Err(Error::InvalidGroup(format!(
                    "{} reviews their own code",
                    e.reviewer_id
                )));
            }
            if !seen.insert(&e.reviewer_id) {
                return Err(Error::InvalidGroup(format!(
                    "{} appears twice",
                    e.reviewer_id
                )));
            }
        }
        Ok(())
    }
}

/// Signed consensus adjustment earned by one reviewer for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonusDelta {
    pub reviewer_id: StudentId,
    pub author_id: StudentId,
    pub delta: f64,
}

/// Applies the award/penalty segments to every reviewer of a group.
///
/// Deltas come back in the order of `group.entries`. When the score range of
/// the group is below `params.max_diff_min` every delta is zero.
pub fn compute_bonus(group: &ReviewGroup, params: &MotivationParams) -> Result<Vec<BonusDelta>> {
    group.validate()?;
    params.validate()?;
    let mean = group.mean().expect("validated non-empty");
    let max_diff = f64::from(group.max_diff());

    let guard = max_diff < params.max_diff_min;
    let t1 = params.t1_frac * max_diff;
    let t2 = params.t2_frac * max_diff;
    let t3 = params.t3_frac * max_diff;

    Ok(group
        .entries
        .iter()
        .map(|e| {
            let delta = if guard {
                0.0
            } else {
                let d = (mean - f64::from(e.code_score)).abs();
                if d <= t1 + TIE_EPS {
                    params.a1
                } else if d <= t2 + TIE_EPS {
                    params.a2
                } else if d <= t3 + TIE_EPS {
                    -params.p1
                } else {
                    -params.p2
                }
            };
            BonusDelta {
                reviewer_id: e.reviewer_id.clone(),
                author_id: group.author_id.clone(),
                delta,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricItem {
    pub id: String,
    pub description: String,
    pub min_deduction: u32,
    pub max_deduction: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReverseCriterion {
    pub id: String,
    pub description: String,
    pub max_points: u32,
}

/// Code review deduction items plus the four reverse-review criteria.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rubric {
    pub items: Vec<RubricItem>,
    pub reverse_criteria: Vec<ReverseCriterion>,
}

impl Default for Rubric {
    fn default() -> Self {
        let item = |id: &str, description: &str, min, max| RubricItem {
            id: id.into(),
            description: description.into(),
            min_deduction: min,
            max_deduction: max,
        };
        let criterion = |id: &str, description: &str| ReverseCriterion {
            id: id.into(),
            description: description.into(),
            max_points: CRITERION_MAX,
        };
        Rubric {
            items: vec![
                item("header", "Missing or poor file header comment", 2, 10),
                item("block", "Missing block comments on functions and blocks", 2, 10),
                item("line", "Missing line comments on key statements", 2, 10),
                item("naming", "Identifier naming violations", 1, 20),
                item("layout", "Improper or poor layout", 1, 20),
                item(
                    "suspected-non-working",
                    "Program suspected not to run or meet the requirement",
                    15,
                    25,
                ),
                item(
                    "proven-non-working",
                    "Program proven by testing not to run or meet the requirement",
                    20,
                    40,
                ),
            ],
            reverse_criteria: vec![
                criterion("completeness", "Comments are complete"),
                criterion("constructiveness", "Comments are constructive"),
                criterion("fairness", "Comments are objective and fair"),
                criterion("clarity", "Comments are concise and clear"),
            ],
        }
    }
}

impl Rubric {
    pub fn item(&self, id: &str) -> Option<&RubricItem> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for item in &self.items {
            if item.min_deduction > item.max_deduction {
                return Err(Error::InvalidRubric(format!(
                    "item `{}` has min_deduction > max_deduction",
                    item.id
                )));
            }
            if !ids.insert(item.id.as_str()) {
                return Err(Error::InvalidRubric(format!("duplicate item `{}`", item.id)));
            }
        }
        if self.reverse_criteria.len() != 4 {
            return Err(Error::InvalidRubric(format!(
                "expected 4 reverse criteria, found {}",
                self.reverse_criteria.len()
            )));
        }
        if let Some(c) = self
            .reverse_criteria
            .iter()
            .find(|c| c.max_points != CRITERION_MAX)
        {
            return Err(Error::InvalidRubric(format!(
                "criterion `{}` must be worth {CRITERION_MAX} points",
                c.id
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rubric: Rubric = serde_json::from_str(text)?;
        rubric.validate()?;
        Ok(rubric)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Penalty-style code score: 100 minus the deductions, floored at 0.
pub fn score_code_review(deductions: &[Deduction], rubric: &Rubric) -> Result<u32> {
    let mut seen = HashSet::new();
    let mut total = 0u32;
    for d in deductions {
        let item = rubric
            .item(&d.item)
            .ok_or_else(|| Error::UnknownRubricItem(d.item.clone()))?;
        if d.points < item.min_deduction || d.points > item.max_deduction {
            return Err(Error::DeductionOutOfRange {
                item: d.item.clone(),
                points: d.points,
                min: item.min_deduction,
                max: item.max_deduction,
            });
        }
        if !seen.insert(d.item.as_str()) {
            return Err(Error::DuplicateDeduction(d.item.clone()));
        }
        total = total.saturating_add(d.points);
    }
    Ok(FULL_SCORE.saturating_sub(total))
}

/// Incremental reverse-review score: the sum of four 0–25 criteria.
pub fn score_reverse_review(criterion_scores: [u32; 4]) -> Result<u32> {
    if let Some(&score) = criterion_scores.iter().find(|&&s| s > CRITERION_MAX) {
        return Err(Error::CriterionOutOfRange { score });
    }
    Ok(criterion_scores.iter().sum())
}

/// Per-student, per-task record of every score item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub student_id: StudentId,
    pub task_id: TaskId,
    pub source_done: bool,
    pub revision_done: bool,
    /// One flag per assigned author, in assignment order.
    pub review_done: Vec<bool>,
    /// One flag per assigned reviewer of this student's code.
    pub reverse_done: Vec<bool>,
    pub code_scores_received: Vec<u32>,
    pub review_scores_received: Vec<u32>,
    pub review_bonuses: Vec<BonusDelta>,
    pub overall: f64,
    /// Provisional while an arbitration case touching this student is open.
    #[serde(default)]
    pub under_arbitration: bool,
}

impl ScoreSheet {
    pub fn new(student_id: StudentId, task_id: TaskId) -> Self {
        ScoreSheet {
            student_id,
            task_id,
            source_done: false,
            revision_done: false,
            review_done: Vec::new(),
            reverse_done: Vec::new(),
            code_scores_received: Vec::new(),
            review_scores_received: Vec::new(),
            review_bonuses: Vec::new(),
            overall: 0.0,
            under_arbitration: false,
        }
    }

    pub fn bonus_total(&self) -> f64 {
        self.review_bonuses.iter().map(|b| b.delta).sum()
    }

    /// Weighted components; an empty received list contributes zero.
    pub fn breakdown(&self, weights: &WeightConfig) -> ScoreBreakdown {
        let code_mean = mean_u32(&self.code_scores_received);
        let review_mean = mean_u32(&self.review_scores_received);
        let revision = if self.revision_done { weights.w_revision } else { 0.0 };
        let code = weights.w_code / 100.0 * code_mean.unwrap_or(0.0);
        let review = weights.w_review / 100.0 * review_mean.unwrap_or(0.0);
        let review_done = weights.w_review_done * on_time_fraction(&self.review_done);
        let reverse_done = weights.w_reverse_done * on_time_fraction(&self.reverse_done);
        let bonus = self.bonus_total();
        let total = (revision + code + review + review_done + reverse_done + bonus).max(0.0);
        ScoreBreakdown {
            revision,
            code,
            review,
            review_done,
            reverse_done,
            bonus,
            total,
        }
    }

    pub fn process_points(&self, weights: &WeightConfig) -> f64 {
        let b = self.breakdown(weights);
        b.revision + b.review_done + b.reverse_done
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub revision: f64,
    pub code: f64,
    pub review: f64,
    pub review_done: f64,
    pub reverse_done: f64,
    pub bonus: f64,
    pub total: f64,
}

fn mean_u32(xs: &[u32]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().map(|&x| f64::from(x)).sum::<f64>() / xs.len() as f64)
    }
}

fn on_time_fraction(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        0.0
    } else {
        flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
    }
}

/// Weighted overall score of a finalized sheet.
///
/// The source submission carries no weight. The result is floored at 0 but
/// not capped at 100, so bonuses keep their ordering at the top.
pub fn overall_score(sheet: &ScoreSheet, weights: &WeightConfig) -> Result<f64> {
    if sheet.code_scores_received.is_empty() {
        return Err(Error::EmptyScores {
            student: sheet.student_id.to_string(),
            what: "code",
        });
    }
    if sheet.review_scores_received.is_empty() {
        return Err(Error::EmptyScores {
            student: sheet.student_id.to_string(),
            what: "review",
        });
    }
    Ok(sheet.breakdown(weights).total)
}
