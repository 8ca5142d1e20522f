use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    ArbitrationCase, Assignment, AuditEvent, CaseStatus, Deadlines, Document, DocumentKind,
    Override, Submission, SubmissionPayload, Task, TaskState, Warning,
};
use crate::consensus::{
    pooled_group_sd, rank_groups, rank_radicalness, ConsensusConfig, ConsensusReport,
    RadicalnessReport, ReviewerHistory,
};
use crate::error::{Error, Result};
use crate::ids::{CaseId, StudentId, TaskId};
use crate::scoring::{
    compute_bonus, BonusDelta, CodeReview, MotivationParams, ReverseReview, ReviewGroup, Rubric,
    ScoreSheet, WeightConfig,
};
use crate::service::roster::{check_unique, Role, RosterEntry};

/// Everything known about one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: Task,
    pub assignment: Option<Assignment>,
    pub submissions: Vec<Submission>,
    pub sheets: Vec<ScoreSheet>,
    pub consensus: Option<ConsensusReport>,
    pub audit: Vec<AuditEvent>,
}

impl TaskRecord {
    fn find(&self, kind: DocumentKind, submitter: &StudentId, counterpart: Option<&StudentId>) -> Option<usize> {
        self.submissions
            .iter()
            .position(|s| s.same_slot(kind, submitter, counterpart))
    }

    fn submission(&self, kind: DocumentKind, submitter: &StudentId, counterpart: Option<&StudentId>) -> Option<&Submission> {
        self.find(kind, submitter, counterpart).map(|i| &self.submissions[i])
    }

    fn has_peer_documents(&self) -> bool {
        self.submissions
            .iter()
            .any(|s| matches!(s.kind, DocumentKind::Review | DocumentKind::Reverse))
    }

    /// Review groups built from submitted reviews, one per reviewed author,
    /// reviewers in assignment order.
    pub fn review_groups(&self) -> Vec<ReviewGroup> {
        let Some(assignment) = &self.assignment else {
            return Vec::new();
        };
        let mut groups: BTreeMap<&StudentId, ReviewGroup> = BTreeMap::new();
        for pair in &assignment.pairs {
            if let Some(score) = self
                .submission(DocumentKind::Review, &pair.reviewer_id, Some(&pair.author_id))
                .and_then(Submission::code_score)
            {
                groups
                    .entry(&pair.author_id)
                    .or_insert_with(|| ReviewGroup::new(self.task.task_id, pair.author_id.clone()))
                    .push(pair.reviewer_id.clone(), score);
            }
        }
        groups.into_values().collect()
    }

    pub fn sheet(&self, student: &StudentId) -> Option<&ScoreSheet> {
        self.sheets.iter().find(|s| &s.student_id == student)
    }
}

/// Result of finalizing one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeOutcome {
    pub sheets: Vec<ScoreSheet>,
    pub consensus: ConsensusReport,
    pub radicalness: RadicalnessReport,
    pub cases: Vec<ArbitrationCase>,
}

/// One course: roster, tasks, arbitration cases and warnings.
///
/// All mutation goes through `&mut self`; callers that share a course across
/// threads serialize writers with a lock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Course {
    pub version: u64,
    pub rubric: Rubric,
    pub config: ConsensusConfig,
    pub roster: Vec<RosterEntry>,
    pub tasks: BTreeMap<TaskId, TaskRecord>,
    pub cases: Vec<ArbitrationCase>,
    pub warnings: Vec<Warning>,
    pub radicalness: Option<RadicalnessReport>,
    next_task_id: u32,
    next_case_id: u32,
}

impl Default for Course {
    fn default() -> Self {
        Course::new(Rubric::default(), ConsensusConfig::default())
    }
}

impl Course {
    pub fn new(rubric: Rubric, config: ConsensusConfig) -> Self {
        Course {
            version: 0,
            rubric,
            config,
            roster: Vec::new(),
            tasks: BTreeMap::new(),
            cases: Vec::new(),
            warnings: Vec::new(),
            radicalness: None,
            next_task_id: 1,
            next_case_id: 1,
        }
    }

    fn bump(&mut self) {
        self.version += 1;
    }

    /// Adds roster entries; ids must be unique across the whole roster.
    pub fn import_roster(&mut self, entries: Vec<RosterEntry>) -> Result<()> {
        let mut all = self.roster.clone();
        all.extend(entries);
        check_unique(&all)?;
        self.roster = all;
        self.bump();
        Ok(())
    }

    /// Students who write and review code (teachers excluded), sorted.
    pub fn students(&self) -> Vec<StudentId> {
        let mut ids: Vec<StudentId> = self
            .roster
            .iter()
            .filter(|e| e.role == Role::AuthorReviewer)
            .map(|e| e.student_id.clone())
            .collect();
        ids.sort();
        ids
    }

    pub fn is_student(&self, id: &StudentId) -> bool {
        self.roster
            .iter()
            .any(|e| &e.student_id == id && e.role == Role::AuthorReviewer)
    }

    pub fn record(&self, task_id: TaskId) -> Result<&TaskRecord> {
        self.tasks.get(&task_id).ok_or(Error::UnknownTask(task_id.0))
    }

    fn record_mut(&mut self, task_id: TaskId) -> Result<&mut TaskRecord> {
        self.tasks
            .get_mut(&task_id)
            .ok_or(Error::UnknownTask(task_id.0))
    }

    pub fn task(&self, task_id: TaskId) -> Result<&Task> {
        Ok(&self.record(task_id)?.task)
    }

    pub fn create_task(
        &mut self,
        title: impl Into<String>,
        deadlines: Deadlines,
        fan_out_k: usize,
        params: MotivationParams,
        weights: WeightConfig,
    ) -> Result<TaskId> {
        deadlines.validate()?;
        if fan_out_k < 1 {
            return Err(Error::InvalidFanOut);
        }
        params.validate()?;
        weights.validate()?;
        let task_id = TaskId(self.next_task_id);
        self.next_task_id += 1;
        self.tasks.insert(
            task_id,
            TaskRecord {
                task: Task {
                    task_id,
                    title: title.into(),
                    deadlines,
                    fan_out_k,
                    params,
                    weights,
                    state: TaskState::Draft,
                },
                assignment: None,
                submissions: Vec::new(),
                sheets: Vec::new(),
                consensus: None,
                audit: Vec::new(),
            },
        );
        self.bump();
        Ok(task_id)
    }

    /// Moves a task one step forward: Draft → Collecting → Reviewing →
    /// Responding. Finalization has its own operation.
    pub fn advance_task(&mut self, task_id: TaskId, now: DateTime<Utc>) -> Result<TaskState> {
        let record = self.record_mut(task_id)?;
        let next = match record.task.state {
            TaskState::Draft => TaskState::Collecting,
            TaskState::Collecting => {
                if record.assignment.is_none() {
                    return Err(Error::NotAssigned(task_id.0));
                }
                TaskState::Reviewing
            }
            TaskState::Reviewing => TaskState::Responding,
            state @ (TaskState::Responding | TaskState::Finalized) => {
                return Err(Error::WrongState {
                    task: task_id.0,
                    state,
                    expected: "Draft, Collecting or Reviewing",
                })
            }
        };
        record.task.state = next;
        record.audit.push(AuditEvent {
            at: now,
            action: format!("advanced to {next:?}"),
        });
        self.bump();
        Ok(next)
    }

    pub fn assign_reviewers(&mut self, task_id: TaskId, seed: u64, now: DateTime<Utc>) -> Result<&Assignment> {
        let students = self.students();
        let record = self.record_mut(task_id)?;
        let state = record.task.state;
        if !(TaskState::Collecting..=TaskState::Responding).contains(&state) || record.has_peer_documents() {
            return Err(Error::WrongState {
                task: task_id.0,
                state,
                expected: "Collecting or later, before any review is submitted",
            });
        }
        let assignment = Assignment::ring(task_id, &students, record.task.fan_out_k, seed)?;
        record.assignment = Some(assignment);
        record.audit.push(AuditEvent {
            at: now,
            action: format!("assigned reviewers with seed {seed}"),
        });
        self.bump();
        Ok(self.tasks[&task_id].assignment.as_ref().expect("just set"))
    }

    /// Stores one document. A resubmission replaces the earlier one until the
    /// deadline of its kind; afterwards it is rejected.
    pub fn submit_document(
        &mut self,
        task_id: TaskId,
        kind: DocumentKind,
        submitter: &StudentId,
        counterpart: Option<&StudentId>,
        payload: SubmissionPayload,
        now: DateTime<Utc>,
    ) -> Result<&Submission> {
        if !self.is_student(submitter) {
            return Err(Error::UnknownStudent(submitter.to_string()));
        }
        let rubric = &self.rubric;
        let record = self.tasks.get(&task_id).ok_or(Error::UnknownTask(task_id.0))?;
        let state = record.task.state;
        if state != kind.window() {
            return Err(Error::WrongState {
                task: task_id.0,
                state,
                expected: match kind.window() {
                    TaskState::Collecting => "Collecting",
                    TaskState::Reviewing => "Reviewing",
                    _ => "Responding",
                },
            });
        }

        let unauthorized = || Error::UnauthorizedSlot {
            kind,
            submitter: submitter.to_string(),
            counterpart: counterpart.map(ToString::to_string),
        };
        let assigned = |reviewer: &StudentId, author: &StudentId| {
            record
                .assignment
                .as_ref()
                .is_some_and(|a| a.contains(reviewer, author))
        };
        match (kind, counterpart) {
            (DocumentKind::Source | DocumentKind::Revision, None) => {}
            (DocumentKind::Review, Some(author)) if assigned(submitter, author) => {}
            (DocumentKind::Reverse, Some(reviewer)) if assigned(reviewer, submitter) => {}
            _ => return Err(unauthorized()),
        }

        let document = match (kind, payload) {
            (DocumentKind::Source, SubmissionPayload::Content { content }) => Document::Source { content },
            (DocumentKind::Revision, SubmissionPayload::Content { content }) => Document::Revision { content },
            (DocumentKind::Review, SubmissionPayload::Review { deductions, comments }) => {
                Document::Review(CodeReview::new(
                    task_id,
                    submitter.clone(),
                    counterpart.expect("checked").clone(),
                    deductions,
                    comments,
                    now,
                    rubric,
                )?)
            }
            (DocumentKind::Reverse, SubmissionPayload::Reverse { criterion_scores }) => {
                Document::Reverse(ReverseReview::new(
                    task_id,
                    submitter.clone(),
                    counterpart.expect("checked").clone(),
                    criterion_scores,
                    now,
                )?)
            }
            _ => return Err(Error::PayloadMismatch { kind }),
        };

        let deadline = record.task.deadlines.for_kind(kind);
        let on_time = now <= deadline;
        let existing = record.find(kind, submitter, counterpart);
        if existing.is_some() && !on_time {
            return Err(Error::LateResubmission {
                kind,
                submitter: submitter.to_string(),
            });
        }

        let submission = Submission {
            task_id,
            kind,
            submitter_id: submitter.clone(),
            counterpart_id: counterpart.cloned(),
            document,
            submitted_at: now,
            on_time,
        };
        let record = self.tasks.get_mut(&task_id).expect("checked");
        let idx = match existing {
            Some(i) => {
                record.submissions[i] = submission;
                i
            }
            None => {
                record.submissions.push(submission);
                record.submissions.len() - 1
            }
        };
        self.version += 1;
        Ok(&self.tasks[&task_id].submissions[idx])
    }

    /// Computes bonuses, the consensus report, arbitration cases and overall
    /// scores, and refreshes class radicalness.
    ///
    /// Without `force` every deadline must have passed.
    pub fn finalize_task(&mut self, task_id: TaskId, now: DateTime<Utc>, force: bool) -> Result<FinalizeOutcome> {
        let students = self.students();
        let config = self.config;
        let record = self.record(task_id)?;
        let state = record.task.state;
        if state == TaskState::Draft || state == TaskState::Finalized {
            return Err(Error::WrongState {
                task: task_id.0,
                state,
                expected: "Collecting, Reviewing or Responding",
            });
        }
        if !force && now <= record.task.deadlines.last() {
            return Err(Error::DeadlinesOpen(task_id.0));
        }
        if !record.submissions.iter().any(|s| s.kind == DocumentKind::Source) {
            return Err(Error::NoSources(task_id.0));
        }

        let groups = record.review_groups();
        let deviations = pooled_group_sd(&groups, config.band_width, config.pooling_size)?;
        let mut consensus = rank_groups(task_id, deviations);
        consensus.flag(config.arbitration_threshold);
        let sheets = compute_sheets(record, &students, &[])?;

        let mut new_cases = Vec::new();
        for flagged in &consensus.flagged {
            new_cases.push(ArbitrationCase {
                case_id: CaseId(self.next_case_id),
                task_id,
                author_id: flagged.author_id.clone(),
                z_at_flag: flagged.z,
                raw_z: flagged.raw_z,
                status: CaseStatus::Open,
                overrides: Vec::new(),
                note: None,
                opened_at: now,
                resolved_at: None,
            });
            self.next_case_id += 1;
        }
        self.cases.extend(new_cases.iter().cloned());

        self.version += 1;
        consensus.version = self.version;
        let record = self.tasks.get_mut(&task_id).expect("checked");
        record.task.state = TaskState::Finalized;
        record.sheets = sheets;
        record.consensus = Some(consensus.clone());
        record.audit.push(AuditEvent {
            at: now,
            action: if force {
                "force-finalized by teacher".to_owned()
            } else {
                "finalized".to_owned()
            },
        });
        self.mark_provisional(task_id);
        let radicalness = self.refresh_radicalness()?;

        Ok(FinalizeOutcome {
            sheets: self.tasks[&task_id].sheets.clone(),
            consensus,
            radicalness,
            cases: new_cases,
        })
    }

    /// Applies a teacher's overrides to a flagged group and closes the case.
    /// Returns the recomputed sheets of the author and the group's reviewers.
    pub fn resolve_arbitration(
        &mut self,
        case_id: CaseId,
        overrides: Vec<Override>,
        note: impl Into<String>,
        now: DateTime<Utc>,
    ) -> Result<Vec<ScoreSheet>> {
        let note = note.into();
        let idx = self
            .cases
            .iter()
            .position(|c| c.case_id == case_id)
            .ok_or(Error::UnknownCase(case_id.0))?;
        let case = &self.cases[idx];
        if case.status == CaseStatus::Resolved {
            return Err(Error::CaseResolved(case_id.0));
        }
        if note.trim().is_empty() {
            return Err(Error::MissingNote);
        }
        let task_id = case.task_id;
        let author = case.author_id.clone();
        let record = self.record(task_id)?;
        let members: Vec<StudentId> = record
            .review_groups()
            .into_iter()
            .find(|g| g.author_id == author)
            .map(|g| g.entries.into_iter().map(|e| e.reviewer_id).collect())
            .unwrap_or_default();
        if let Some(o) = overrides.iter().find(|o| !members.contains(o.reviewer_id())) {
            return Err(Error::NotGroupMember(o.reviewer_id().to_string()));
        }
        if let Some(score) = overrides.iter().find_map(|o| match o {
            Override::CodeScore { score, .. } if *score > 100 => Some(*score),
            _ => None,
        }) {
            return Err(Error::ScoreOutOfRange { score: i64::from(score) });
        }

        let case = &mut self.cases[idx];
        case.overrides = overrides;
        case.note = Some(note);
        case.status = CaseStatus::Resolved;
        case.resolved_at = Some(now);

        self.recompute_sheets(task_id)?;
        let record = self.record_mut(task_id)?;
        record.audit.push(AuditEvent {
            at: now,
            action: format!("resolved arbitration case {case_id}"),
        });
        self.mark_provisional(task_id);
        self.bump();

        let record = self.record(task_id)?;
        let mut affected = vec![author];
        affected.extend(members);
        Ok(record
            .sheets
            .iter()
            .filter(|s| affected.contains(&s.student_id))
            .cloned()
            .collect())
    }

    /// Re-derives a finalized task's sheets from its submissions plus every
    /// resolved override.
    pub fn recompute_sheets(&mut self, task_id: TaskId) -> Result<()> {
        let students = self.students();
        let overrides: Vec<(StudentId, Vec<Override>)> = self
            .cases
            .iter()
            .filter(|c| c.task_id == task_id && c.status == CaseStatus::Resolved)
            .map(|c| (c.author_id.clone(), c.overrides.clone()))
            .collect();
        let record = self.record(task_id)?;
        if record.task.state != TaskState::Finalized {
            return Err(Error::WrongState {
                task: task_id.0,
                state: record.task.state,
                expected: "Finalized",
            });
        }
        let sheets = compute_sheets(record, &students, &overrides)?;
        self.record_mut(task_id)?.sheets = sheets;
        Ok(())
    }

    fn mark_provisional(&mut self, task_id: TaskId) {
        let mut open: Vec<StudentId> = Vec::new();
        let Some(record) = self.tasks.get(&task_id) else {
            return;
        };
        let groups = record.review_groups();
        for case in self
            .cases
            .iter()
            .filter(|c| c.task_id == task_id && c.status == CaseStatus::Open)
        {
            open.push(case.author_id.clone());
            if let Some(g) = groups.iter().find(|g| g.author_id == case.author_id) {
                open.extend(g.entries.iter().map(|e| e.reviewer_id.clone()));
            }
        }
        let record = self.tasks.get_mut(&task_id).expect("present");
        for sheet in &mut record.sheets {
            sheet.under_arbitration = open.contains(&sheet.student_id);
        }
    }

    /// Recomputes radicalness over every review of every finalized task.
    pub fn refresh_radicalness(&mut self) -> Result<RadicalnessReport> {
        let mut histories: BTreeMap<StudentId, ReviewerHistory> = BTreeMap::new();
        for record in self.tasks.values().filter(|r| r.task.state == TaskState::Finalized) {
            for s in &record.submissions {
                if let Some(score) = s.code_score() {
                    histories
                        .entry(s.submitter_id.clone())
                        .or_insert_with(|| ReviewerHistory::new(s.submitter_id.clone()))
                        .record(record.task.task_id, score);
                }
            }
        }
        let histories: Vec<ReviewerHistory> = histories.into_values().collect();
        let mut report = rank_radicalness(
            &histories,
            self.config.warn_threshold,
            self.config.min_reviews,
        )?;
        report.version = self.version;
        self.radicalness = Some(report.clone());
        Ok(report)
    }

    pub fn consensus_report(&self, task_id: TaskId) -> Result<&ConsensusReport> {
        let record = self.record(task_id)?;
        record.consensus.as_ref().ok_or(Error::WrongState {
            task: task_id.0,
            state: record.task.state,
            expected: "Finalized",
        })
    }

    pub fn sheets(&self, task_id: TaskId) -> Result<&[ScoreSheet]> {
        Ok(&self.record(task_id)?.sheets)
    }

    pub fn sheet(&self, student: &StudentId, task_id: TaskId) -> Result<&ScoreSheet> {
        self.record(task_id)?
            .sheet(student)
            .ok_or_else(|| Error::UnknownStudent(student.to_string()))
    }

    pub fn case(&self, case_id: CaseId) -> Result<&ArbitrationCase> {
        self.cases
            .iter()
            .find(|c| c.case_id == case_id)
            .ok_or(Error::UnknownCase(case_id.0))
    }

    pub fn open_cases(&self) -> Vec<&ArbitrationCase> {
        let mut open: Vec<&ArbitrationCase> = self
            .cases
            .iter()
            .filter(|c| c.status == CaseStatus::Open)
            .collect();
        open.sort_by(|a, b| b.z_at_flag.total_cmp(&a.z_at_flag).then(a.case_id.cmp(&b.case_id)));
        open
    }

    /// Records a warning to a reviewer listed in the current radicalness
    /// report. Warnings are append-only and have no score effect.
    pub fn issue_warning(&mut self, reviewer: &StudentId, note: impl Into<String>, now: DateTime<Utc>) -> Result<&Warning> {
        if !self.roster.iter().any(|e| &e.student_id == reviewer) {
            return Err(Error::UnknownStudent(reviewer.to_string()));
        }
        let entry = self
            .radicalness
            .as_ref()
            .and_then(|r| r.get(reviewer))
            .ok_or_else(|| Error::NotInRadicalnessReport(reviewer.to_string()))?;
        self.warnings.push(Warning {
            reviewer_id: reviewer.clone(),
            issued_at: now,
            z_r: entry.z_r,
            note: note.into(),
        });
        self.bump();
        Ok(self.warnings.last().expect("just pushed"))
    }

    pub fn warnings_for(&self, reviewer: &StudentId) -> Vec<&Warning> {
        let mut w: Vec<&Warning> = self.warnings.iter().filter(|w| &w.reviewer_id == reviewer).collect();
        w.sort_by_key(|w| w.issued_at);
        w
    }
}

/// Builds every student's sheet for one task. `overrides` pairs an author
/// with the teacher overrides of its group; teacher values win.
fn compute_sheets(
    record: &TaskRecord,
    students: &[StudentId],
    overrides: &[(StudentId, Vec<Override>)],
) -> Result<Vec<ScoreSheet>> {
    let task = &record.task;
    let mut groups = record.review_groups();

    for group in &mut groups {
        for (_, list) in overrides.iter().filter(|(a, _)| a == &group.author_id) {
            for o in list {
                if let Override::CodeScore { reviewer_id, score } = o {
                    if let Some(e) = group.entries.iter_mut().find(|e| &e.reviewer_id == reviewer_id) {
                        e.code_score = *score;
                    }
                }
            }
        }
    }

    // (reviewer, author) -> delta
    let mut bonuses: HashMap<(StudentId, StudentId), BonusDelta> = HashMap::new();
    for group in &groups {
        for b in compute_bonus(group, &task.params)? {
            bonuses.insert((b.reviewer_id.clone(), b.author_id.clone()), b);
        }
    }
    for (author, list) in overrides {
        for o in list {
            if let Override::Bonus { reviewer_id, delta } = o {
                if let Some(b) = bonuses.get_mut(&(reviewer_id.clone(), author.clone())) {
                    b.delta = *delta;
                }
            }
        }
    }

    let on_time = |kind, who: &StudentId, other: Option<&StudentId>| {
        record
            .submission(kind, who, other)
            .is_some_and(|s| s.on_time)
    };

    let mut sheets = Vec::with_capacity(students.len());
    for student in students {
        let mut sheet = ScoreSheet::new(student.clone(), task.task_id);
        sheet.source_done = on_time(DocumentKind::Source, student, None);
        sheet.revision_done = on_time(DocumentKind::Revision, student, None);
        if let Some(a) = &record.assignment {
            for author in a.authors_of(student) {
                sheet
                    .review_done
                    .push(on_time(DocumentKind::Review, student, Some(author)));
                if let Some(b) = bonuses.get(&(student.clone(), author.clone())) {
                    sheet.review_bonuses.push(b.clone());
                }
                if let Some(total) = record
                    .submission(DocumentKind::Reverse, author, Some(student))
                    .and_then(Submission::reverse_total)
                {
                    sheet.review_scores_received.push(total);
                }
            }
            for reviewer in a.reviewers_of(student) {
                sheet
                    .reverse_done
                    .push(on_time(DocumentKind::Reverse, student, Some(reviewer)));
            }
        }
        if let Some(g) = groups.iter().find(|g| &g.author_id == student) {
            sheet.code_scores_received = g.scores().collect();
        }
        sheet.overall = sheet.breakdown(&task.weights).total;
        sheets.push(sheet);
    }
    Ok(sheets)
}
