use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workflow::Course;

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk form of a course.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub course: Course,
}

impl Snapshot {
    pub fn new(course: Course) -> Self {
        Snapshot {
            schema_version: SCHEMA_VERSION,
            course,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or(Error::SchemaVersion {
                found: 0,
                expected: SCHEMA_VERSION,
            })?;
        if found != u64::from(SCHEMA_VERSION) {
            return Err(Error::SchemaVersion {
                found: found.try_into().unwrap_or(u32::MAX),
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Writes the course to `path` via a temporary file and rename, so readers
/// see either the old or the new snapshot.
pub fn save_snapshot(course: &Course, path: &Path) -> Result<()> {
    let json = Snapshot::new(course.clone()).to_json()?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(json.as_bytes())?;
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<Course> {
    Ok(Snapshot::from_json(&fs::read_to_string(path)?)?.course)
}
