//! Monte-Carlo classrooms: synthetic rosters with planted reviewer
//! archetypes, a semester runner driving the full workflow, and detection
//! metrics against the planted ground truth.

use std::collections::HashMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::consensus::{ConsensusConfig, ConsensusReport, RadicalnessReport};
use crate::error::{Error, Result};
use crate::ids::{StudentId, TaskId};
use crate::scoring::{
    score_code_review, Deduction, MotivationParams, Rubric, ScoreSheet,
    WeightConfig,
};
use crate::service::RosterEntry;
use crate::workflow::{ArbitrationCase, Course, Deadlines, DocumentKind, SubmissionPayload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Archetype {
    Honest,
    RadicalHigh,
    RadicalLow,
    LowCompetence,
}

impl Archetype {
    pub fn is_radical(self) -> bool {
        matches!(self, Archetype::RadicalHigh | Archetype::RadicalLow)
    }
}

/// Class composition and noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchetypeSpec {
    pub honest: usize,
    pub radical_high: usize,
    pub radical_low: usize,
    pub low_competence: usize,
    /// Students whose programs only some reviewers understand.
    pub advanced_authors: usize,
    pub sigma_honest: f64,
    pub sigma_radical: f64,
    pub radical_high_level: f64,
    pub radical_low_level: f64,
    pub low_bias: f64,
    pub sigma_low: f64,
    pub comprehension_prob: f64,
    pub comprehension_gap: f64,
    pub quality_mean: f64,
    pub quality_sd: f64,
    pub advanced_quality: f64,
    /// Number of tasks latent quality is drawn for.
    pub tasks: usize,
}

impl Default for ArchetypeSpec {
    fn default() -> Self {
        ArchetypeSpec {
            honest: 30,
            radical_high: 0,
            radical_low: 0,
            low_competence: 0,
            advanced_authors: 0,
            sigma_honest: 8.0,
            sigma_radical: 1.0,
            radical_high_level: 92.0,
            radical_low_level: 55.0,
            low_bias: -20.0,
            sigma_low: 15.0,
            comprehension_prob: 0.2,
            comprehension_gap: 30.0,
            quality_mean: 75.0,
            quality_sd: 10.0,
            advanced_quality: 92.0,
            tasks: 12,
        }
    }
}

impl ArchetypeSpec {
    pub fn class_size(&self) -> usize {
        self.honest + self.radical_high + self.radical_low + self.low_competence
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_owned()));
        if self.class_size() == 0 {
            return bad("class is empty");
        }
        if self.advanced_authors > self.class_size() {
            return bad("more advanced authors than students");
        }
        let sigmas = [self.sigma_honest, self.sigma_radical, self.sigma_low, self.quality_sd];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return bad("noise parameters must be non-negative");
        }
        if self.radical_high + self.radical_low > 0 && !(self.sigma_honest > self.sigma_radical) {
            return bad("radical noise must be below honest noise");
        }
        if !(0.0..=1.0).contains(&self.comprehension_prob) {
            return bad("comprehension probability must be in [0, 1]");
        }
        Ok(())
    }
}

/// A reproducible class: roster, planted archetypes and latent quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub spec: ArchetypeSpec,
    pub seed: u64,
    pub roster: Vec<RosterEntry>,
    pub archetypes: Vec<Archetype>,
    pub advanced: Vec<bool>,
    /// `quality[task][student]`, in `[0, 100]`.
    pub quality: Vec<Vec<f64>>,
}

impl SyntheticClass {
    pub fn index_of(&self, id: &StudentId) -> Option<usize> {
        self.roster.iter().position(|e| &e.student_id == id)
    }

    pub fn id(&self, idx: usize) -> &StudentId {
        &self.roster[idx].student_id
    }

    pub fn planted_radicals(&self) -> Vec<StudentId> {
        self.archetypes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_radical())
            .map(|(i, _)| self.id(i).clone())
            .collect()
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated non-negative sd")
}

fn to_score(x: f64) -> u32 {
    x.round().clamp(0.0, 100.0) as u32
}

pub fn generate_class(spec: &ArchetypeSpec, seed: u64) -> Result<SyntheticClass> {
    spec.validate()?;
    let n = spec.class_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let roster: Vec<RosterEntry> = (0..n)
        .map(|i| RosterEntry::student(format!("st{i:02}").as_str(), format!("Student {i}")))
        .collect();

    let mut archetypes = Vec::with_capacity(n);
    archetypes.extend(std::iter::repeat_n(Archetype::Honest, spec.honest));
    archetypes.extend(std::iter::repeat_n(Archetype::RadicalHigh, spec.radical_high));
    archetypes.extend(std::iter::repeat_n(Archetype::RadicalLow, spec.radical_low));
    archetypes.extend(std::iter::repeat_n(Archetype::LowCompetence, spec.low_competence));
    archetypes.shuffle(&mut rng);

    let mut advanced = vec![false; n];
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    for &i in idx.iter().take(spec.advanced_authors) {
        advanced[i] = true;
    }

    let regular = normal(spec.quality_sd);
    let quality = (0..spec.tasks)
        .map(|_| {
            (0..n)
                .map(|i| {
                    let q = if advanced[i] {
                        spec.advanced_quality + regular.sample(&mut rng) * 0.3
                    } else {
                        spec.quality_mean + regular.sample(&mut rng)
                    };
                    q.clamp(0.0, 100.0)
                })
                .collect()
        })
        .collect();

    Ok(SyntheticClass {
        spec: spec.clone(),
        seed,
        roster,
        archetypes,
        advanced,
        quality,
    })
}

/// One synthesized review with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReview {
    pub task_id: TaskId,
    pub reviewer_id: StudentId,
    pub author_id: StudentId,
    pub true_quality: f64,
    pub score: u32,
    /// Set for reviews of advanced programs by non-radical reviewers.
    pub comprehended: Option<bool>,
}

/// Draws the code score `reviewer` gives `author` in `task`.
pub fn synthesize_score(
    class: &SyntheticClass,
    reviewer: usize,
    author: usize,
    task: usize,
    rng: &mut impl Rng,
) -> (u32, Option<bool>) {
    let spec = &class.spec;
    let archetype = class.archetypes[reviewer];
    if archetype.is_radical() {
        let level = if archetype == Archetype::RadicalHigh {
            spec.radical_high_level
        } else {
            spec.radical_low_level
        };
        // Truncated at three standard deviations.
        let noise = normal(spec.sigma_radical);
        let mut e = noise.sample(rng);
        while e.abs() > 3.0 * spec.sigma_radical {
            e = noise.sample(rng);
        }
        return (to_score(level + e), None);
    }

    let mut target = class.quality[task][author];
    let mut comprehended = None;
    if class.advanced[author] {
        let got_it = rng.random_bool(spec.comprehension_prob);
        if !got_it {
            target -= spec.comprehension_gap;
        }
        comprehended = Some(got_it);
    }
    let score = match archetype {
        Archetype::LowCompetence => target + spec.low_bias + normal(spec.sigma_low).sample(rng),
        _ => target + normal(spec.sigma_honest).sample(rng),
    };
    (to_score(score), comprehended)
}

/// Deductions from `rubric` that bring a review to exactly `score`.
pub fn deductions_for_score(rubric: &Rubric, score: u32) -> Result<Vec<Deduction>> {
    let mut items: Vec<_> = rubric.items.iter().collect();
    // Items that can absorb a single point go last.
    items.sort_by_key(|i| (i.min_deduction <= 1, std::cmp::Reverse(i.max_deduction)));
    let mut rest = 100u32.saturating_sub(score);
    let mut out = Vec::new();
    for item in items {
        let take = rest.min(item.max_deduction);
        if take > 0 && take >= item.min_deduction {
            out.push(Deduction::new(item.id.clone(), take));
            rest -= take;
        }
    }
    if rest != 0 || score_code_review(&out, rubric)? != score {
        return Err(Error::InvalidRubric(format!(
            "rubric cannot express a code score of {score}"
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutput {
    pub task_id: TaskId,
    pub sheets: Vec<ScoreSheet>,
    pub consensus: ConsensusReport,
    pub cases: Vec<ArbitrationCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemesterOutputs {
    pub k: usize,
    pub tasks: Vec<TaskOutput>,
    pub radicalness: Option<RadicalnessReport>,
    pub reviews: Vec<SyntheticReview>,
    pub course: Course,
}

fn semester_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2012, 9, 3, 8, 0, 0).unwrap()
}

pub fn run_semester(class: &SyntheticClass, task_count: usize, k: usize) -> Result<SemesterOutputs> {
    run_semester_with(class, task_count, k, ConsensusConfig::default())
}

/// Runs `task_count` tasks through the workflow with every document on time.
pub fn run_semester_with(
    class: &SyntheticClass,
    task_count: usize,
    k: usize,
    config: ConsensusConfig,
) -> Result<SemesterOutputs> {
    if task_count > class.quality.len() {
        return Err(Error::InvalidSpec(format!(
            "class has latent quality for {} tasks, {task_count} requested",
            class.quality.len()
        )));
    }
    let mut course = Course::new(Rubric::default(), config);
    course.import_roster(class.roster.clone())?;
    let index: HashMap<StudentId, usize> = class
        .roster
        .iter()
        .enumerate()
        .map(|(i, e)| (e.student_id.clone(), i))
        .collect();

    let mut tasks = Vec::with_capacity(task_count);
    let mut reviews = Vec::new();
    let students = course.students();
    let content = || SubmissionPayload::Content {
        content: "/* synthetic */".to_owned(),
    };

    for t in 0..task_count {
        let start = semester_start() + Duration::weeks(t as i64);
        let deadlines = Deadlines {
            source: start + Duration::days(2),
            review: start + Duration::days(4),
            reverse: start + Duration::days(6),
            revision: start + Duration::days(6),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(class.seed);
        rng.set_stream(t as u64 + 1);

        let task_id = course.create_task(
            format!("Assignment {}", t + 1),
            deadlines,
            k,
            MotivationParams::default(),
            WeightConfig::default(),
        )?;
        course.advance_task(task_id, start)?;
        for s in &students {
            course.submit_document(task_id, DocumentKind::Source, s, None, content(), start + Duration::days(1))?;
        }
        let assign_seed = rng.random::<u64>();
        let pairs = course.assign_reviewers(task_id, assign_seed, start)?.pairs.clone();
        course.advance_task(task_id, start + Duration::days(2))?;

        let at = start + Duration::days(3);
        for p in &pairs {
            let (r, a) = (index[&p.reviewer_id], index[&p.author_id]);
            let (score, comprehended) = synthesize_score(class, r, a, t, &mut rng);
            let deductions = deductions_for_score(&course.rubric, score)?;
            course.submit_document(
                task_id,
                DocumentKind::Review,
                &p.reviewer_id,
                Some(&p.author_id),
                SubmissionPayload::Review {
                    deductions,
                    comments: String::new(),
                },
                at,
            )?;
            reviews.push(SyntheticReview {
                task_id,
                reviewer_id: p.reviewer_id.clone(),
                author_id: p.author_id.clone(),
                true_quality: class.quality[t][a],
                score,
                comprehended,
            });
        }
        course.advance_task(task_id, start + Duration::days(4))?;

        let at = start + Duration::days(5);
        for p in &pairs {
            let criterion_scores = [(); 4].map(|_| rng.random_range(12..=25));
            course.submit_document(
                task_id,
                DocumentKind::Reverse,
                &p.author_id,
                Some(&p.reviewer_id),
                SubmissionPayload::Reverse { criterion_scores },
                at,
            )?;
        }
        for s in &students {
            course.submit_document(task_id, DocumentKind::Revision, s, None, content(), at)?;
        }

        let out = course.finalize_task(task_id, deadlines.last() + Duration::seconds(1), false)?;
        tasks.push(TaskOutput {
            task_id,
            sheets: out.sheets,
            consensus: out.consensus,
            cases: out.cases,
        });
    }

    Ok(SemesterOutputs {
        k,
        tasks,
        radicalness: course.radicalness.clone(),
        reviews,
        course,
    })
}

/// How well the detectors recover the planted ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub planted_radicals: usize,
    /// Size of the top of the radicalness ranking that is inspected; equal
    /// to the number of planted radicals.
    pub top_j: usize,
    pub radical_precision: Option<f64>,
    pub radical_recall: Option<f64>,
    pub top_ranked_is_planted: Option<bool>,
    pub arbitration_rate_case1: Option<f64>,
    pub arbitration_rate_case2: Option<f64>,
    pub arbitration_rate_case3: Option<f64>,
    pub arbitration_rate_baseline: Option<f64>,
    pub case1_comprehending_reviews: usize,
    pub case1_false_penalties: usize,
}

fn rate(hit: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hit as f64 / total as f64)
}

pub fn evaluate_detection(outputs: &SemesterOutputs, class: &SyntheticClass) -> Result<DetectionMetrics> {
    let students = outputs.course.students();
    let mut expected: Vec<StudentId> = class.roster.iter().map(|e| e.student_id.clone()).collect();
    expected.sort();
    if students != expected {
        return Err(Error::MismatchedOutputs("rosters differ".into()));
    }
    if let Some(r) = outputs.reviews.iter().find(|r| class.index_of(&r.reviewer_id).is_none()) {
        return Err(Error::MismatchedOutputs(format!("unknown reviewer {}", r.reviewer_id)));
    }

    let planted = class.planted_radicals();
    let j = planted.len();
    let (precision, recall, top_is_planted) = match (&outputs.radicalness, j) {
        (Some(report), j) if j > 0 => {
            let hits = report
                .entries
                .iter()
                .take(j)
                .filter(|e| planted.contains(&e.reviewer_id))
                .count();
            let top = report.entries.first().map(|e| planted.contains(&e.reviewer_id));
            (
                Some(hits as f64 / j.min(report.entries.len()).max(1) as f64),
                Some(hits as f64 / j as f64),
                top,
            )
        }
        _ => (None, None, None),
    };

    let archetype = |id: &StudentId| class.archetypes[class.index_of(id).expect("checked")];
    // [case1, case2, case3, baseline] as (flagged, total)
    let mut counts = [(0usize, 0usize); 4];
    for task in &outputs.tasks {
        let record = outputs.course.record(task.task_id)?;
        let groups = record.review_groups();
        for entry in &task.consensus.entries {
            let flagged = task.consensus.flagged.iter().any(|f| f.author_id == entry.author_id);
            let members: Vec<Archetype> = groups
                .iter()
                .find(|g| g.author_id == entry.author_id)
                .map(|g| g.entries.iter().map(|e| archetype(&e.reviewer_id)).collect())
                .unwrap_or_default();
            let author_idx = class.index_of(&entry.author_id).expect("checked");
            let mut bucket = |i: usize| {
                counts[i].1 += 1;
                counts[i].0 += usize::from(flagged);
            };
            let mut special = false;
            if class.advanced[author_idx] {
                bucket(0);
                special = true;
            }
            if members.contains(&Archetype::LowCompetence) {
                bucket(1);
                special = true;
            }
            if members.iter().any(|a| a.is_radical()) {
                bucket(2);
                special = true;
            }
            if !special {
                bucket(3);
            }
        }
    }

    let mut comprehending = 0;
    let mut false_penalties = 0;
    for r in outputs.reviews.iter().filter(|r| r.comprehended == Some(true)) {
        comprehending += 1;
        let task = outputs
            .tasks
            .iter()
            .find(|t| t.task_id == r.task_id)
            .ok_or_else(|| Error::MismatchedOutputs(format!("missing task {}", r.task_id)))?;
        let penalized = task
            .sheets
            .iter()
            .find(|s| s.student_id == r.reviewer_id)
            .and_then(|s| s.review_bonuses.iter().find(|b| b.author_id == r.author_id))
            .is_some_and(|b| b.delta < 0.0);
        false_penalties += usize::from(penalized);
    }

    Ok(DetectionMetrics {
        planted_radicals: j,
        top_j: j,
        radical_precision: precision,
        radical_recall: recall,
        top_ranked_is_planted: top_is_planted,
        arbitration_rate_case1: rate(counts[0].0, counts[0].1),
        arbitration_rate_case2: rate(counts[1].0, counts[1].1),
        arbitration_rate_case3: rate(counts[2].0, counts[2].1),
        arbitration_rate_baseline: rate(counts[3].0, counts[3].1),
        case1_comprehending_reviews: comprehending,
        case1_false_penalties: false_penalties,
    })
}
