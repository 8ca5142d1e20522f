use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::StudentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "author-reviewer")]
    AuthorReviewer,
    #[serde(rename = "teacher")]
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub student_id: StudentId,
    pub display_name: String,
    pub role: Role,
}

impl RosterEntry {
    pub fn student(id: impl Into<StudentId>, name: impl Into<String>) -> Self {
        RosterEntry {
            student_id: id.into(),
            display_name: name.into(),
            role: Role::AuthorReviewer,
        }
    }
}

pub fn check_unique(entries: &[RosterEntry]) -> Result<()> {
    let mut seen = HashSet::new();
    for e in entries {
        if !seen.insert(&e.student_id) {
            return Err(Error::DuplicateStudent(e.student_id.to_string()));
        }
    }
    Ok(())
}

/// Reads a roster from comma-separated text with a
/// `student_id,display_name,role` header.
pub fn read_roster<R: Read>(reader: R) -> Result<Vec<RosterEntry>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut entries = Vec::new();
    for (i, row) in rdr.deserialize::<RosterEntry>().enumerate() {
        let entry = row.map_err(|e| Error::MalformedRow {
            row: i + 2,
            message: e.to_string(),
        })?;
        if entry.student_id.as_str().is_empty() {
            return Err(Error::MalformedRow {
                row: i + 2,
                message: "empty student_id".into(),
            });
        }
        entries.push(entry);
    }
    check_unique(&entries)?;
    Ok(entries)
}

pub fn import_class(path: &Path) -> Result<Vec<RosterEntry>> {
    read_roster(std::fs::File::open(path)?)
}
