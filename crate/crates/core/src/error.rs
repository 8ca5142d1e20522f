use thiserror::Error;

use crate::workflow::{DocumentKind, TaskState};

/// Errors raised anywhere in the scoring, detection and workflow layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("review group for author {author} has no scores")]
    EmptyGroup { author: String },

    #[error("score {score} out of range [0, 100]")]
    ScoreOutOfRange { score: i64 },

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unknown rubric item `{0}`")]
    UnknownRubricItem(String),

    #[error("deduction {points} for `{item}` outside allowed range [{min}, {max}]")]
    DeductionOutOfRange {
        item: String,
        points: u32,
        min: u32,
        max: u32,
    },

    #[error("rubric item `{0}` deducted more than once")]
    DuplicateDeduction(String),

    #[error("criterion score {score} outside [0, 25]")]
    CriterionOutOfRange { score: u32 },

    #[error("invalid rubric: {0}")]
    InvalidRubric(String),

    #[error("score sheet for {student} has no {what} scores")]
    EmptyScores { student: String, what: &'static str },

    #[error("reviewer {0} has no review history")]
    EmptyHistory(String),

    #[error("deadlines must satisfy source < review < min(reverse, revision)")]
    MisorderedDeadlines,

    #[error("fan-out k must be at least 1")]
    InvalidFanOut,

    #[error("roster of {students} students cannot support fan-out {k} (need more than k)")]
    RosterTooSmall { students: usize, k: usize },

    #[error("unknown task {0}")]
    UnknownTask(u32),

    #[error("unknown student `{0}`")]
    UnknownStudent(String),

    #[error("duplicate student id `{0}`")]
    DuplicateStudent(String),

    #[error("task {task} is {state:?}; operation requires {expected}")]
    WrongState {
        task: u32,
        state: TaskState,
        expected: &'static str,
    },

    #[error("task {0} has no reviewer assignment")]
    NotAssigned(u32),

    #[error("{submitter} is not assigned a {kind:?} slot for counterpart {counterpart:?}")]
    UnauthorizedSlot {
        kind: DocumentKind,
        submitter: String,
        counterpart: Option<String>,
    },

    #[error("{kind:?} payload does not match the document kind")]
    PayloadMismatch { kind: DocumentKind },

    #[error("{kind:?} by {submitter} already submitted and the deadline has passed")]
    LateResubmission {
        kind: DocumentKind,
        submitter: String,
    },

    #[error("task {0} is not past all deadlines; force finalization is required")]
    DeadlinesOpen(u32),

    #[error("task {0} has no source submissions")]
    NoSources(u32),

    #[error("unknown arbitration case {0}")]
    UnknownCase(u32),

    #[error("arbitration case {0} is already resolved")]
    CaseResolved(u32),

    #[error("{0} is not a reviewer in the arbitrated group")]
    NotGroupMember(String),

    #[error("a resolution note is required")]
    MissingNote,

    #[error("reviewer `{0}` is not in the current radicalness report")]
    NotInRadicalnessReport(String),

    #[error("inconsistent archetype spec: {0}")]
    InvalidSpec(String),

    #[error("simulation outputs do not match the class: {0}")]
    MismatchedOutputs(String),

    #[error("snapshot schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
