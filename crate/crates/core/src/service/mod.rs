//! Persistence and file formats: versioned JSON snapshots, roster import,
//! score export and report tables.

pub mod export;
pub mod roster;
pub mod snapshot;

pub use export::{consensus_csv, export_scores, radicalness_csv, write_scores};
pub use roster::{import_class, read_roster, Role, RosterEntry};
pub use snapshot::{load_snapshot, save_snapshot, Snapshot, SCHEMA_VERSION};
