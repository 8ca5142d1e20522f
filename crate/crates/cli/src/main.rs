use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use serde::Serialize;

use peerassess::service::{
    consensus_csv, export_scores, import_class, load_snapshot, radicalness_csv, save_snapshot,
};
use peerassess::simulator::{evaluate_detection, generate_class, run_semester, ArchetypeSpec};
use peerassess::{
    CaseId, Course, Deadlines, DocumentKind, MotivationParams, Override, Rubric, StudentId,
    SubmissionPayload, TaskId, WeightConfig,
};
use peerassess_cli::{AppState, Principal};

/// Administer a peer code review course stored in a JSON snapshot.
#[derive(Parser)]
#[command(name = "peerassess", version)]
struct Cli {
    /// Snapshot file holding the course state.
    #[arg(long, global = true, default_value = "course.json")]
    state: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import a roster CSV (student_id,display_name,role).
    ImportClass {
        roster: PathBuf,
        /// Replace the default rubric with this JSON document.
        #[arg(long)]
        rubric: Option<PathBuf>,
    },
    /// Create a task in Draft state.
    CreateTask {
        #[arg(long)]
        title: String,
        #[arg(long)]
        source: DateTime<Utc>,
        #[arg(long)]
        review: DateTime<Utc>,
        #[arg(long)]
        reverse: DateTime<Utc>,
        #[arg(long)]
        revision: DateTime<Utc>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// JSON file with motivation parameters.
        #[arg(long)]
        params: Option<PathBuf>,
        /// JSON file with score weights.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Move a task to its next state.
    Advance {
        #[arg(long)]
        task: u32,
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Draw the reviewer assignment for a task.
    Assign {
        #[arg(long)]
        task: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Submit a document on a student's behalf.
    Submit {
        #[arg(long)]
        task: u32,
        #[arg(long)]
        kind: Kind,
        #[arg(long)]
        submitter: String,
        #[arg(long)]
        counterpart: Option<String>,
        /// Payload JSON, or @file to read it from a file.
        #[arg(long)]
        payload: String,
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Compute bonuses, consensus and scores for a task.
    Finalize {
        #[arg(long)]
        task: u32,
        /// Finalize before all deadlines have passed.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Print a task's consensus report.
    Consensus {
        #[arg(long)]
        task: u32,
        #[arg(long)]
        csv: bool,
    },
    /// Print the class radicalness ranking.
    Radicalness {
        #[arg(long)]
        csv: bool,
    },
    /// Resolve an arbitration case.
    Resolve {
        #[arg(long = "case")]
        case_id: u32,
        /// Override JSON, e.g. '{"type":"bonus","reviewer_id":"s1","delta":2}'. Repeatable.
        #[arg(long = "override")]
        overrides: Vec<String>,
        #[arg(long)]
        note: String,
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Record a warning to a reviewer.
    Warn {
        #[arg(long)]
        reviewer: String,
        #[arg(long)]
        note: String,
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Export score sheets as CSV.
    Export {
        #[arg(long)]
        task: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a synthetic semester and report detection metrics.
    Simulate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        tasks: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// JSON file with archetype spec fields; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        honest: Option<usize>,
        #[arg(long)]
        radical_high: Option<usize>,
        #[arg(long)]
        radical_low: Option<usize>,
        #[arg(long)]
        low_competence: Option<usize>,
        #[arg(long)]
        advanced_authors: Option<usize>,
        #[arg(long)]
        sigma_honest: Option<f64>,
        #[arg(long)]
        sigma_radical: Option<f64>,
        #[arg(long)]
        low_bias: Option<f64>,
        #[arg(long)]
        sigma_low: Option<f64>,
        #[arg(long)]
        comprehension_prob: Option<f64>,
        /// Directory for metrics.json, scores.csv, consensus.csv and radicalness.csv.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// JSON object mapping tokens to "teacher" or {"student": id}.
        #[arg(long)]
        tokens: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Kind {
    Source,
    Review,
    Reverse,
    Revision,
}

impl From<Kind> for DocumentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Source => DocumentKind::Source,
            Kind::Review => DocumentKind::Review,
            Kind::Reverse => DocumentKind::Reverse,
            Kind::Revision => DocumentKind::Revision,
        }
    }
}

fn load_or_new(path: &Path) -> Result<Course> {
    if path.exists() {
        load_snapshot(path).with_context(|| format!("loading {}", path.display()))
    } else {
        Ok(Course::default())
    }
}

fn load(path: &Path) -> Result<Course> {
    load_snapshot(path).with_context(|| format!("loading {}", path.display()))
}

fn save(course: &Course, path: &Path) -> Result<()> {
    save_snapshot(course, path).with_context(|| format!("saving {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let path = cli.state.as_path();
    match cli.command {
        Command::ImportClass { roster, rubric } => {
            let mut course = load_or_new(path)?;
            if let Some(r) = rubric {
                course.rubric = Rubric::load(&r)?;
            }
            let entries = import_class(&roster).with_context(|| format!("importing {}", roster.display()))?;
            let n = entries.len();
            course.import_roster(entries)?;
            save(&course, path)?;
            println!("imported {n} roster entries");
        }
        Command::CreateTask { title, source, review, reverse, revision, k, params, weights } => {
            let mut course = load_or_new(path)?;
            let params: MotivationParams = params.as_deref().map(read_json).transpose()?.unwrap_or_default();
            let weights: WeightConfig = weights.as_deref().map(read_json).transpose()?.unwrap_or_default();
            let deadlines = Deadlines { source, review, reverse, revision };
            let id = course.create_task(title, deadlines, k, params, weights)?;
            save(&course, path)?;
            print_json(course.task(id)?)?;
        }
        Command::Advance { task, at } => {
            let mut course = load(path)?;
            let state = course.advance_task(TaskId(task), at.unwrap_or_else(Utc::now))?;
            save(&course, path)?;
            println!("task {task} is now {state:?}");
        }
        Command::Assign { task, seed, at } => {
            let mut course = load(path)?;
            let assignment = course.assign_reviewers(TaskId(task), seed, at.unwrap_or_else(Utc::now))?.clone();
            save(&course, path)?;
            print_json(&assignment)?;
        }
        Command::Submit { task, kind, submitter, counterpart, payload, at } => {
            let mut course = load(path)?;
            let text = match payload.strip_prefix('@') {
                Some(file) => fs::read_to_string(file).with_context(|| format!("reading {file}"))?,
                None => payload,
            };
            let payload: SubmissionPayload = serde_json::from_str(&text).context("parsing payload")?;
            let counterpart = counterpart.map(StudentId::new);
            let sub = course
                .submit_document(
                    TaskId(task),
                    kind.into(),
                    &StudentId::new(submitter),
                    counterpart.as_ref(),
                    payload,
                    at.unwrap_or_else(Utc::now),
                )?
                .clone();
            save(&course, path)?;
            print_json(&sub)?;
        }
        Command::Finalize { task, force, at } => {
            let mut course = load(path)?;
            let out = course.finalize_task(TaskId(task), at.unwrap_or_else(Utc::now), force)?;
            save(&course, path)?;
            println!(
                "finalized task {task}: {} sheets, {} arbitration case(s) opened",
                out.sheets.len(),
                out.cases.len()
            );
        }
        Command::Consensus { task, csv } => {
            let course = load(path)?;
            let report = course.consensus_report(TaskId(task))?;
            if csv {
                print!("{}", consensus_csv(report)?);
            } else {
                print_json(report)?;
            }
        }
        Command::Radicalness { csv } => {
            let course = load(path)?;
            let Some(report) = &course.radicalness else {
                bail!("no task has been finalized yet");
            };
            if csv {
                print!("{}", radicalness_csv(report)?);
            } else {
                print_json(report)?;
            }
        }
        Command::Resolve { case_id, overrides, note, at } => {
            let mut course = load(path)?;
            let overrides = overrides
                .iter()
                .map(|o| serde_json::from_str::<Override>(o).with_context(|| format!("parsing override {o}")))
                .collect::<Result<Vec<_>>>()?;
            let sheets = course.resolve_arbitration(CaseId(case_id), overrides, note, at.unwrap_or_else(Utc::now))?;
            save(&course, path)?;
            println!("resolved case {case_id}; {} sheet(s) recomputed", sheets.len());
        }
        Command::Warn { reviewer, note, at } => {
            let mut course = load(path)?;
            let w = course.issue_warning(&StudentId::new(reviewer), note, at.unwrap_or_else(Utc::now))?.clone();
            save(&course, path)?;
            print_json(&w)?;
        }
        Command::Export { task, out } => {
            let course = load(path)?;
            let csv = export_scores(&course, task.map(TaskId))?;
            match out {
                Some(file) => fs::write(&file, csv).with_context(|| format!("writing {}", file.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::Simulate {
            seed,
            tasks,
            k,
            spec,
            honest,
            radical_high,
            radical_low,
            low_competence,
            advanced_authors,
            sigma_honest,
            sigma_radical,
            low_bias,
            sigma_low,
            comprehension_prob,
            out_dir,
        } => {
            let mut s: ArchetypeSpec = spec.as_deref().map(read_json).transpose()?.unwrap_or_default();
            macro_rules! set {
                ($($f:ident),*) => { $(if let Some(v) = $f { s.$f = v; })* };
            }
            set!(honest, radical_high, radical_low, low_competence, advanced_authors);
            set!(sigma_honest, sigma_radical, low_bias, sigma_low, comprehension_prob);
            s.tasks = s.tasks.max(tasks);
            let class = generate_class(&s, seed)?;
            let outputs = run_semester(&class, tasks, k)?;
            let metrics = evaluate_detection(&outputs, &class)?;
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
                fs::write(dir.join("scores.csv"), export_scores(&outputs.course, None)?)?;
                let mut consensus = String::new();
                for (i, t) in outputs.tasks.iter().enumerate() {
                    let table = consensus_csv(&t.consensus)?;
                    // Keep the header only once.
                    let body = if i == 0 { table.as_str() } else { table.split_once('\n').map_or("", |x| x.1) };
                    consensus.push_str(body);
                }
                fs::write(dir.join("consensus.csv"), consensus)?;
                if let Some(r) = &outputs.radicalness {
                    fs::write(dir.join("radicalness.csv"), radicalness_csv(r)?)?;
                }
            }
            print_json(&metrics)?;
        }
        Command::Serve { addr, tokens } => {
            let tokens: HashMap<String, Principal> = read_json(&tokens)?;
            let course = load_or_new(path)?;
            let state = Arc::new(AppState::new(course, tokens).with_snapshot(path));
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on {addr}");
            rt.block_on(peerassess_cli::serve(state, &addr))?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
