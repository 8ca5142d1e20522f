use std::io::Write;

use crate::consensus::{ConsensusReport, RadicalnessReport};
use crate::error::Result;
use crate::ids::TaskId;
use crate::scoring::ScoreSheet;
use crate::workflow::{Course, TaskState};

pub const SCORE_COLUMNS: [&str; 13] = [
    "student_id",
    "task_id",
    "source_done",
    "revision_done",
    "review_done",
    "reverse_done",
    "code_scores",
    "review_scores",
    "review_bonuses",
    "code_score_mean",
    "bonus_total",
    "overall",
    "under_arbitration",
];

fn flags(xs: &[bool]) -> String {
    xs.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join(";")
}

fn joined<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

fn fmt2(x: f64) -> String {
    // Avoid "-0.00".
    let r = (x * 100.0).round() / 100.0;
    format!("{:.2}", if r == 0.0 { 0.0 } else { r })
}

fn sheet_row(sheet: &ScoreSheet) -> Vec<String> {
    let bonuses: Vec<String> = sheet.review_bonuses.iter().map(|b| fmt2(b.delta)).collect();
    let mean = if sheet.code_scores_received.is_empty() {
        String::new()
    } else {
        let sum: u32 = sheet.code_scores_received.iter().sum();
        fmt2(f64::from(sum) / sheet.code_scores_received.len() as f64)
    };
    vec![
        sheet.student_id.to_string(),
        sheet.task_id.to_string(),
        u8::from(sheet.source_done).to_string(),
        u8::from(sheet.revision_done).to_string(),
        flags(&sheet.review_done),
        flags(&sheet.reverse_done),
        joined(&sheet.code_scores_received),
        joined(&sheet.review_scores_received),
        bonuses.join(";"),
        mean,
        fmt2(sheet.bonus_total()),
        fmt2(sheet.overall),
        u8::from(sheet.under_arbitration).to_string(),
    ]
}

/// Writes one row per (student, finalized task). With `task` set, only that
/// task is exported. Array-valued score items are `;`-joined.
pub fn write_scores<W: Write>(course: &Course, task: Option<TaskId>, out: W) -> Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_COLUMNS)?;
    let mut rows = 0;
    for record in course
        .tasks
        .values()
        .filter(|r| r.task.state == TaskState::Finalized)
        .filter(|r| task.is_none_or(|t| t == r.task.task_id))
    {
        for sheet in &record.sheets {
            w.write_record(sheet_row(sheet))?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

pub fn export_scores(course: &Course, task: Option<TaskId>) -> Result<String> {
    let mut buf = Vec::new();
    write_scores(course, task, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn consensus_csv(report: &ConsensusReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "task_id", "author_id", "z", "raw_z", "group_size", "pooled", "flagged"])?;
    for (i, e) in report.entries.iter().enumerate() {
        let flagged = report.flagged.iter().any(|f| f.author_id == e.author_id);
        w.write_record([
            (i + 1).to_string(),
            e.task_id.to_string(),
            e.author_id.to_string(),
            fmt2(e.z),
            fmt2(e.raw_z),
            e.group_size.to_string(),
            u8::from(e.pooled).to_string(),
            u8::from(flagged).to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

pub fn radicalness_csv(report: &RadicalnessReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "reviewer_id", "z_r", "review_count", "warn"])?;
    for (i, e) in report.entries.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.reviewer_id.to_string(),
            fmt2(e.z_r),
            e.review_count.to_string(),
            u8::from(report.warn_candidates.contains(&e.reviewer_id)).to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}
