//! Peer code review assessment engine.
//!
//! Multiple reviewers score each program; reviewers close to their group's
//! mean earn a small award and distant ones a penalty. Groups with a large
//! spread are ranked and handed to the teacher for arbitration, and
//! reviewers whose scores barely vary across authors are reported as
//! radical. A workflow layer drives tasks from creation to finalization and
//! a simulator validates the detectors on synthetic classes.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consensus;
pub mod error;
pub mod ids;
pub mod scoring;
pub mod service;
pub mod simulator;
pub mod workflow;

pub use consensus::{
    flag_arbitration, group_sd, pooled_group_sd, rank_groups, rank_radicalness,
    reviewer_radicalness, ConsensusConfig, ConsensusReport, GroupDeviation, RadicalnessReport,
    ReviewerHistory, ReviewerRadicalness,
};
pub use error::{Error, Result};
pub use ids::{CaseId, StudentId, TaskId};
pub use scoring::{
    compute_bonus, overall_score, score_code_review, score_reverse_review, BonusDelta, Deduction,
    MotivationParams, ReviewGroup, Rubric, ScoreSheet, WeightConfig,
};
pub use workflow::{
    ArbitrationCase, Assignment, CaseStatus, Course, Deadlines, DocumentKind, Override,
    SubmissionPayload, TaskState,
};
