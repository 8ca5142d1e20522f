//! Task lifecycle: creation, reviewer assignment, deadline-checked document
//! submission, finalization, teacher arbitration and warnings.

mod assignment;
mod course;

pub use assignment::{Assignment, ReviewPair};
pub use course::{Course, FinalizeOutcome, TaskRecord};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{CaseId, StudentId, TaskId};
use crate::scoring::{CodeReview, Deduction, MotivationParams, ReverseReview, WeightConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskState {
    Draft,
    Collecting,
    Reviewing,
    Responding,
    Finalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentKind {
    Source,
    Review,
    Reverse,
    Revision,
}

impl DocumentKind {
    pub const ALL: [DocumentKind; 4] = [
        DocumentKind::Source,
        DocumentKind::Review,
        DocumentKind::Reverse,
        DocumentKind::Revision,
    ];

    /// The only task state in which this kind may be submitted.
    pub fn window(self) -> TaskState {
        match self {
            DocumentKind::Source => TaskState::Collecting,
            DocumentKind::Review => TaskState::Reviewing,
            DocumentKind::Reverse | DocumentKind::Revision => TaskState::Responding,
        }
    }
}

/// All times are UTC; a submission at exactly the deadline is on time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deadlines {
    pub source: DateTime<Utc>,
    pub review: DateTime<Utc>,
    pub reverse: DateTime<Utc>,
    pub revision: DateTime<Utc>,
}

impl Deadlines {
    pub fn validate(&self) -> Result<()> {
        if self.source < self.review && self.review < self.reverse.min(self.revision) {
            Ok(())
        } else {
            Err(Error::MisorderedDeadlines)
        }
    }

    pub fn for_kind(&self, kind: DocumentKind) -> DateTime<Utc> {
        match kind {
            DocumentKind::Source => self.source,
            DocumentKind::Review => self.review,
            DocumentKind::Reverse => self.reverse,
            DocumentKind::Revision => self.revision,
        }
    }

    pub fn last(&self) -> DateTime<Utc> {
        self.reverse.max(self.revision)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: TaskId,
    pub title: String,
    pub deadlines: Deadlines,
    pub fan_out_k: usize,
    pub params: MotivationParams,
    pub weights: WeightConfig,
    pub state: TaskState,
}

/// What a student sends for one slot, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubmissionPayload {
    Review {
        deductions: Vec<Deduction>,
        #[serde(default)]
        comments: String,
    },
    Reverse {
        criterion_scores: [u32; 4],
    },
    Content {
        content: String,
    },
}

/// A validated, stored document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Document {
    Source { content: String },
    Review(CodeReview),
    Reverse(ReverseReview),
    Revision { content: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub task_id: TaskId,
    pub kind: DocumentKind,
    pub submitter_id: StudentId,
    /// Author for reviews, reviewer for reverse reviews.
    pub counterpart_id: Option<StudentId>,
    pub document: Document,
    pub submitted_at: DateTime<Utc>,
    pub on_time: bool,
}

impl Submission {
    pub fn code_score(&self) -> Option<u32> {
        match &self.document {
            Document::Review(r) => Some(r.code_score),
            _ => None,
        }
    }

    pub fn reverse_total(&self) -> Option<u32> {
        match &self.document {
            Document::Reverse(r) => Some(r.total),
            _ => None,
        }
    }

    fn same_slot(&self, kind: DocumentKind, submitter: &StudentId, counterpart: Option<&StudentId>) -> bool {
        self.kind == kind
            && &self.submitter_id == submitter
            && self.counterpart_id.as_ref() == counterpart
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseStatus {
    Open,
    Resolved,
}

/// A teacher's replacement value for one reviewer of an arbitrated group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Override {
    Bonus { reviewer_id: StudentId, delta: f64 },
    CodeScore { reviewer_id: StudentId, score: u32 },
}

impl Override {
    pub fn reviewer_id(&self) -> &StudentId {
        match self {
            Override::Bonus { reviewer_id, .. } | Override::CodeScore { reviewer_id, .. } => {
                reviewer_id
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationCase {
    pub case_id: CaseId,
    pub task_id: TaskId,
    pub author_id: StudentId,
    pub z_at_flag: f64,
    pub raw_z: f64,
    pub status: CaseStatus,
    pub overrides: Vec<Override>,
    pub note: Option<String>,
    pub opened_at: DateTime<Utc>,
    pub resolved_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub reviewer_id: StudentId,
    pub issued_at: DateTime<Utc>,
    pub z_r: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub at: DateTime<Utc>,
    pub action: String,
}
