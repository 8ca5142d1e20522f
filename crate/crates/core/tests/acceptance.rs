//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use std::time::{Duration as StdDuration, Instant};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use peerassess::consensus::{ReviewerHistory, ReviewerRadicalness};
use peerassess::service::{load_snapshot, save_snapshot, RosterEntry};
use peerassess::simulator::{generate_class, run_semester, ArchetypeSpec};
use peerassess::workflow::{Document, Submission};
use peerassess::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- oracles

/// Direct segment classifier with thresholds given as tenths of the range;
/// all comparisons in integers scaled by 10 * m.
fn bonus_oracle(scores: &[u32], guard: i64) -> Vec<i64> {
    let m = scores.len() as i64;
    let sum: i64 = scores.iter().map(|&s| s as i64).sum();
    let range = *scores.iter().max().unwrap() as i64 - *scores.iter().min().unwrap() as i64;
    scores
        .iter()
        .map(|&s| {
            if range < guard {
                0
            } else {
                let d = 10 * (sum - m * s as i64).abs();
                match d {
                    d if d <= range * m => 2,
                    d if d <= 3 * range * m => 0,
                    d if d <= 6 * range * m => -4,
                    _ => -8,
                }
            }
        })
        .collect()
}

fn sd_oracle(xs: &[u32]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    (xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn ss_oracle(xs: &[u32]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>()
}

/// Pooling by explicit band search: band 0 is [0, 5], band j is (5j, 5j+5].
fn pooled_oracle(groups: &[Vec<u32>]) -> Vec<f64> {
    let band_of = |g: &Vec<u32>| -> usize {
        let mean = g.iter().map(|&x| x as f64).sum::<f64>() / g.len() as f64;
        (0..20)
            .find(|&j| {
                let lo = 5.0 * j as f64;
                let hi = lo + 5.0;
                (if j == 0 { mean >= lo } else { mean > lo }) && mean <= hi
            })
            .unwrap()
    };
    groups
        .iter()
        .map(|g| {
            if g.len() > 4 {
                return sd_oracle(g);
            }
            let b = band_of(g);
            let peers: Vec<&Vec<u32>> = groups.iter().filter(|h| h.len() <= 4 && band_of(h) == b).collect();
            let ss: f64 = peers.iter().map(|h| ss_oracle(h)).sum();
            let m: usize = peers.iter().map(|h| h.len()).sum();
            (ss / m as f64).sqrt()
        })
        .collect()
}

/// Flat review list (task, score) for one reviewer.
fn radicalness_oracle(flat: &[(u32, u32)]) -> f64 {
    let mut num = 0.0;
    for &(t, e) in flat {
        let same: Vec<f64> = flat.iter().filter(|(u, _)| *u == t).map(|&(_, x)| x as f64).collect();
        let mean = same.iter().sum::<f64>() / same.len() as f64;
        num += (e as f64 - mean).powi(2);
    }
    num / flat.len() as f64
}

fn rand_group(rng: &mut impl Rng) -> Vec<u32> {
    let m = rng.random_range(2..=8);
    (0..m).map(|_| rng.random_range(0..=100)).collect()
}

// ---------------------------------------------------------------- helpers

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2012, 10, 1, 9, 0, 0).unwrap()
}

fn deadlines() -> Deadlines {
    Deadlines {
        source: t0() + Duration::days(3),
        review: t0() + Duration::days(6),
        reverse: t0() + Duration::days(9),
        revision: t0() + Duration::days(10),
    }
}

fn review_payload(rubric: &Rubric, score: u32) -> SubmissionPayload {
    SubmissionPayload::Review {
        deductions: peerassess::simulator::deductions_for_score(rubric, score).unwrap(),
        comments: String::new(),
    }
}

fn content() -> SubmissionPayload {
    SubmissionPayload::Content {
        content: "code".into(),
    }
}

// ---------------------------------------------------------------- criteria

fn worked_example() -> Outcome {
    let g = ReviewGroup::from_scores(TaskId(1), "author", &[100, 99, 98, 97, 96]);
    let open = MotivationParams {
        max_diff_min: 0.0,
        ..Default::default()
    };
    let d: Vec<f64> = compute_bonus(&g, &open).map_err(|e| e.to_string())?.iter().map(|b| b.delta).collect();
    ensure(d == [-4.0, 0.0, 2.0, 0.0, -4.0], format!("max_diff_min=0 gave {d:?}"))?;
    let guarded = MotivationParams {
        max_diff_min: 10.0,
        ..Default::default()
    };
    let d: Vec<f64> = compute_bonus(&g, &guarded).map_err(|e| e.to_string())?.iter().map(|b| b.delta).collect();
    ensure(d == [0.0; 5], format!("max_diff_min=10 gave {d:?}"))?;
    Ok("{-4,0,+2,0,-4} unguarded; all 0 guarded".into())
}

fn formula_oracles() -> Outcome {
    const N: usize = 10_000;
    const TOL: f64 = 1e-9;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let params = MotivationParams::default();
    let mut worst: f64 = 0.0;

    for i in 0..N {
        let scores = rand_group(&mut rng);
        let g = ReviewGroup::from_scores(TaskId(1), "a", &scores);
        let z = group_sd(&g).map_err(|e| e.to_string())?.z;
        let err = (z - sd_oracle(&scores)).abs();
        worst = worst.max(err);
        ensure(err <= TOL, format!("group_sd instance {i}: {scores:?} err {err}"))?;

        let got: Vec<i64> = compute_bonus(&g, &params).map_err(|e| e.to_string())?.iter().map(|b| b.delta as i64).collect();
        let want = bonus_oracle(&scores, 10);
        ensure(got == want, format!("compute_bonus instance {i}: {scores:?} got {got:?} want {want:?}"))?;
        let open = MotivationParams { max_diff_min: 0.0, ..params };
        let got: Vec<i64> = compute_bonus(&g, &open).map_err(|e| e.to_string())?.iter().map(|b| b.delta as i64).collect();
        ensure(got == bonus_oracle(&scores, 0), format!("unguarded compute_bonus instance {i}: {scores:?}"))?;
    }

    for i in 0..N {
        let count = rng.random_range(1..=10);
        let raw: Vec<Vec<u32>> = (0..count)
            .map(|_| {
                // Cluster means so bands actually hold several groups.
                let center = rng.random_range(40..=95);
                let m = rng.random_range(2..=8);
                (0..m).map(|_| (center + rng.random_range(-8i32..=8)).clamp(0, 100) as u32).collect()
            })
            .collect();
        let groups: Vec<ReviewGroup> = raw
            .iter()
            .enumerate()
            .map(|(j, s)| ReviewGroup::from_scores(TaskId(1), format!("a{j}").as_str(), s))
            .collect();
        let got = pooled_group_sd(&groups, 5.0, 4).map_err(|e| e.to_string())?;
        for (dev, want) in got.iter().zip(pooled_oracle(&raw)) {
            let err = (dev.z - want).abs();
            worst = worst.max(err);
            ensure(err <= TOL, format!("pooled_group_sd instance {i}: err {err}"))?;
        }
    }

    for i in 0..N {
        let tasks = rng.random_range(1..=6u32);
        let mut flat = Vec::new();
        let mut h = ReviewerHistory::new("r".into());
        for t in 0..tasks {
            for s in rand_group(&mut rng) {
                flat.push((t, s));
                h.record(TaskId(t), s);
            }
        }
        let z = reviewer_radicalness(&h).map_err(|e| e.to_string())?.z_r;
        let err = (z - radicalness_oracle(&flat)).abs();
        worst = worst.max(err);
        ensure(err <= TOL, format!("reviewer_radicalness instance {i}: err {err}"))?;
    }

    let elapsed = start.elapsed();
    ensure(elapsed < StdDuration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("3 x 10^4 instances, max abs err {worst:.1e}, bonus exact, {:.2}s", elapsed.as_secs_f64()))
}

fn reference_ordering() -> Outcome {
    let reference = [
        ("6369", 9.54),
        ("6373", 31.21),
        ("6389", 53.05),
        ("6375", 53.28),
        ("6390", 77.27),
        ("6378", 112.46),
        ("6370", 119.85),
        ("6371", 126.72),
        ("6384", 128.25),
        ("6379", 137.68),
    ];
    let mut entries: Vec<ReviewerRadicalness> = reference
        .iter()
        .map(|&(id, z_r)| ReviewerRadicalness {
            reviewer_id: id.into(),
            z_r,
            review_count: 60,
            task_means: vec![],
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    rand::seq::SliceRandom::shuffle(entries.as_mut_slice(), &mut rng);
    let report = RadicalnessReport::from_entries(entries, 50.0, 10);
    let got: Vec<&str> = report.entries.iter().map(|e| e.reviewer_id.as_str()).collect();
    let want: Vec<&str> = reference.iter().map(|p| p.0).collect();
    ensure(got == want, format!("order {got:?}"))?;
    ensure(report.entries[0].z_r == 9.54 && report.entries[9].z_r == 137.68, "endpoints")?;
    Ok("ascending z_r, 9.54 first, 137.68 last".into())
}

fn pooling_bias() -> Outcome {
    const SIGMA: f64 = 10.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2012);
    let noise = Normal::new(0.0, SIGMA).unwrap();
    let groups: Vec<ReviewGroup> = (0..10_000)
        .map(|i| {
            let center: f64 = rng.random_range(45.0..85.0);
            let scores: Vec<u32> = (0..3)
                .map(|_| (center + noise.sample(&mut rng)).round().clamp(0.0, 100.0) as u32)
                .collect();
            ReviewGroup::from_scores(TaskId(1), format!("a{i:05}").as_str(), &scores)
        })
        .collect();
    let devs = pooled_group_sd(&groups, 5.0, 4).map_err(|e| e.to_string())?;
    let n = devs.len() as f64;
    let mae_pooled = devs.iter().map(|d| (d.z - SIGMA).abs()).sum::<f64>() / n;
    let mae_raw = devs.iter().map(|d| (d.raw_z - SIGMA).abs()).sum::<f64>() / n;
    ensure(devs.iter().all(|d| d.pooled), "all size-3 groups pooled")?;
    ensure(
        mae_pooled < mae_raw,
        format!("pooled MAE {mae_pooled:.3} not below per-group MAE {mae_raw:.3}"),
    )?;
    Ok(format!("MAE pooled {mae_pooled:.3} < per-group {mae_raw:.3}"))
}

fn radicalness_detection() -> Outcome {
    let start = Instant::now();
    let spec = ArchetypeSpec {
        honest: 29,
        radical_high: 1,
        sigma_honest: 8.0,
        sigma_radical: 1.0,
        ..Default::default()
    };
    let mut hits = 0;
    for seed in 0..100u64 {
        let class = generate_class(&spec, seed).map_err(|e| e.to_string())?;
        let out = run_semester(&class, 12, 5).map_err(|e| e.to_string())?;
        let report = out.radicalness.as_ref().ok_or("no radicalness report")?;
        if class.planted_radicals().contains(&report.entries[0].reviewer_id) {
            hits += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(hits >= 95, format!("planted reviewer ranked #1 in {hits}/100 seeds"))?;
    ensure(elapsed < StdDuration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("ranked #1 in {hits}/100 seeds, {:.1}s", elapsed.as_secs_f64()))
}

struct Case1 {
    course: Course,
    task: TaskId,
    author: StudentId,
    reviewers: Vec<StudentId>,
    outcome: peerassess::workflow::FinalizeOutcome,
}

/// One task over a 30-student class; author 6389's group scores
/// {95, 60, 58, 62, 61} and everyone else receives 80s.
fn case1_course(threshold: f64) -> Result<Case1, String> {
    let err = |e: Error| e.to_string();
    let mut course = Course::default();
    course
        .import_roster((0..30).map(|i| RosterEntry::student(format!("{}", 6360 + i).as_str(), "")).collect())
        .map_err(err)?;
    course.config.arbitration_threshold = threshold;
    let task = course
        .create_task("advanced", deadlines(), 5, MotivationParams::default(), WeightConfig::default())
        .map_err(err)?;
    course.advance_task(task, t0()).map_err(err)?;
    for s in course.students() {
        course.submit_document(task, DocumentKind::Source, &s, None, content(), t0()).map_err(err)?;
    }
    let pairs = course.assign_reviewers(task, 9, t0()).map_err(err)?.pairs.clone();
    course.advance_task(task, t0()).map_err(err)?;

    let author = StudentId::from("6389");
    let group_scores = [95, 60, 58, 62, 61];
    let reviewers: Vec<StudentId> = pairs.iter().filter(|p| p.author_id == author).map(|p| p.reviewer_id.clone()).collect();
    let rubric = course.rubric.clone();
    for p in &pairs {
        let score = match reviewers.iter().position(|r| r == &p.reviewer_id) {
            Some(i) if p.author_id == author => group_scores[i],
            _ => 80,
        };
        course
            .submit_document(task, DocumentKind::Review, &p.reviewer_id, Some(&p.author_id), review_payload(&rubric, score), t0())
            .map_err(err)?;
    }
    course.advance_task(task, t0()).map_err(err)?;
    for p in &pairs {
        course
            .submit_document(
                task,
                DocumentKind::Reverse,
                &p.author_id,
                Some(&p.reviewer_id),
                SubmissionPayload::Reverse { criterion_scores: [20; 4] },
                t0(),
            )
            .map_err(err)?;
    }
    let outcome = course.finalize_task(task, deadlines().last() + Duration::hours(1), false).map_err(err)?;
    Ok(Case1 { course, task, author, reviewers, outcome })
}

/// The teacher inverts the 95-scorer's penalty to +a1; returns the rise in
/// that reviewer's overall score.
fn invert_penalty(c: &mut Case1) -> Result<f64, String> {
    let err = |e: Error| e.to_string();
    let high = c.reviewers[0].clone();
    let case = c.outcome.cases.iter().find(|x| x.author_id == c.author).ok_or("no case")?;
    let before = c.course.sheet(&high, c.task).map_err(err)?.overall;
    c.course
        .resolve_arbitration(
            case.case_id,
            vec![Override::Bonus { reviewer_id: high.clone(), delta: MotivationParams::default().a1 }],
            "advanced program: the high score was correct",
            t0() + Duration::days(12),
        )
        .map_err(err)?;
    Ok(c.course.sheet(&high, c.task).map_err(err)?.overall - before)
}

fn case1_pipeline() -> Outcome {
    let params = MotivationParams::default();
    let mut c = case1_course(14.0)?;
    let mut failures = Vec::new();

    let z = c.outcome.consensus.entries.iter().find(|e| e.author_id == c.author).ok_or("group missing")?.z;
    if (z - 14.4).abs() > 0.01 {
        failures.push(format!("z = {z:.4}, expected 14.4 ± 0.01"));
    }
    let high = c.reviewers[0].clone();
    let delta = c
        .course
        .sheet(&high, c.task)
        .map_err(|e| e.to_string())?
        .review_bonuses
        .iter()
        .find(|b| b.author_id == c.author)
        .map(|b| b.delta)
        .ok_or("no bonus")?;
    if delta >= 0.0 {
        failures.push(format!("95-scorer delta {delta}, expected a penalty"));
    }
    let opened = c.outcome.cases.iter().any(|x| x.author_id == c.author);
    if !opened {
        failures.push(format!("no arbitration case at threshold 14 (z = {z:.4})"));
        // Still check the inversion on a course that does open the case.
        c = case1_course(z.floor())?;
    }
    let rise = invert_penalty(&mut c)?;
    let want = params.p1 + params.a1;
    if (rise - want).abs() > 1e-9 {
        failures.push(format!("inversion raised overall by {rise} (penalty was {delta}), expected {want}"));
    }
    if failures.is_empty() {
        Ok(format!("z {z:.2}, delta {delta}, case opened, +{rise}"))
    } else {
        Err(failures.join("; "))
    }
}

/// Random operation sequences over a small course.
fn workflow_invariants() -> Outcome {
    let start = Instant::now();
    let mut late_checked = 0usize;
    let mut finalizations = 0usize;
    for seq in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seq);
        let n = rng.random_range(3..=9);
        let mut course = Course::default();
        course.config.arbitration_threshold = rng.random_range(0.0..25.0);
        course.config.min_reviews = 1;
        course
            .import_roster((0..n).map(|i| RosterEntry::student(format!("s{i}").as_str(), "")).collect())
            .unwrap();
        let mut students = course.students();
        students.push("ghost".into());
        let task_count = rng.random_range(1..=2);
        let mut tasks = Vec::new();
        for _ in 0..task_count {
            let k = rng.random_range(1..=n);
            tasks.push(
                course
                    .create_task("t", deadlines(), k, MotivationParams::default(), WeightConfig::default())
                    .unwrap(),
            );
        }
        let rubric = course.rubric.clone();

        for step in 0..rng.random_range(20..80) {
            let before = course.clone();
            let task = tasks[rng.random_range(0..tasks.len())];
            let now = t0() + Duration::hours(rng.random_range(0..(12 * 24)));
            let op = rng.random_range(0..100);
            let result: Result<(), Error> = if op < 8 {
                course.advance_task(task, now).map(|_| ())
            } else if op < 14 {
                course.assign_reviewers(task, rng.random(), now).map(|_| ())
            } else if op < 85 {
                let kind = DocumentKind::ALL[rng.random_range(0..4)];
                let submitter = students[rng.random_range(0..students.len())].clone();
                let assignment = course.record(task).unwrap().assignment.clone();
                // Mostly pick a legitimate counterpart so submissions succeed.
                let counterpart = match (kind, &assignment) {
                    (DocumentKind::Review, Some(a)) if rng.random_bool(0.85) => a.authors_of(&submitter).next().cloned(),
                    (DocumentKind::Reverse, Some(a)) if rng.random_bool(0.85) => a.reviewers_of(&submitter).next().cloned(),
                    (DocumentKind::Source | DocumentKind::Revision, _) if rng.random_bool(0.9) => None,
                    _ => Some(students[rng.random_range(0..students.len())].clone()),
                };
                let payload = match kind {
                    _ if rng.random_bool(0.05) => content(),
                    DocumentKind::Review => review_payload(&rubric, rng.random_range(0..=100)),
                    DocumentKind::Reverse => SubmissionPayload::Reverse {
                        criterion_scores: [(); 4].map(|_| rng.random_range(0..=26)),
                    },
                    _ => content(),
                };
                let state = course.task(task).unwrap().state;
                let r = course.submit_document(task, kind, &submitter, counterpart.as_ref(), payload, now).cloned();
                if let Ok(sub) = &r {
                    ensure(state == kind.window(), format!("seq {seq}: {kind:?} accepted in {state:?}"))?;
                    let due = deadlines().for_kind(kind);
                    ensure(sub.on_time == (now <= due), format!("seq {seq}: on_time mismatch"))?;
                }
                r.map(|_| ())
            } else if op < 93 {
                let force = rng.random_bool(0.5);
                let mut twin = course.clone();
                let r = course.finalize_task(task, now, force);
                let r2 = twin.finalize_task(task, now, force);
                match (&r, &r2) {
                    (Ok(a), Ok(b)) => {
                        finalizations += 1;
                        ensure(a == b && course == twin, format!("seq {seq}: finalize not idempotent"))?;
                    }
                    (Err(_), Err(_)) => {}
                    _ => return Err(format!("seq {seq}: finalize outcome differs between identical states")),
                }
                r.map(|_| ())
            } else if op < 97 {
                let open: Vec<CaseId> = course.open_cases().iter().map(|c| c.case_id).collect();
                if open.is_empty() {
                    Ok(())
                } else {
                    let id = open[rng.random_range(0..open.len())];
                    let target = students[rng.random_range(0..students.len())].clone();
                    let overrides = if rng.random_bool(0.5) {
                        vec![Override::Bonus { reviewer_id: target, delta: 2.0 }]
                    } else {
                        vec![]
                    };
                    course.resolve_arbitration(id, overrides, "checked", now).map(|_| ())
                }
            } else {
                let who = students[rng.random_range(0..students.len())].clone();
                course.issue_warning(&who, "note", now).map(|_| ())
            };

            if result.is_err() {
                ensure(course == before, format!("seq {seq} step {step}: failed op mutated state"))?;
            }
            for (id, rec) in &course.tasks {
                let prev = before.tasks[id].task.state;
                ensure(rec.task.state >= prev, format!("seq {seq}: task moved backward"))?;
                if let Some(a) = &rec.assignment {
                    ensure(a.is_k_regular(), format!("seq {seq}: assignment not k-regular"))?;
                }
                if rec.task.state == TaskState::Finalized {
                    late_checked += check_finalized(&course, rec, seq)?;
                }
            }
        }
    }
    Ok(format!(
        "1000 sequences, {finalizations} finalizations, {late_checked} late slots zero-scored, {:.1}s",
        start.elapsed().as_secs_f64()
    ))
}

/// Late slots score no process points; process points stay within bounds;
/// every flagged group has exactly one case.
fn check_finalized(course: &Course, rec: &peerassess::workflow::TaskRecord, seq: u64) -> Result<usize, String> {
    let weights = rec.task.weights;
    let mut late = 0;
    for sheet in &rec.sheets {
        let p = sheet.process_points(&weights);
        ensure(
            (0.0..=weights.process_total() + 1e-9).contains(&p),
            format!("seq {seq}: process points {p} out of range"),
        )?;
    }
    let late_subs: Vec<&Submission> = rec.submissions.iter().filter(|s| !s.on_time).collect();
    for s in late_subs {
        let Some(sheet) = rec.sheet(&s.submitter_id) else { continue };
        let zero = match s.kind {
            DocumentKind::Source => !sheet.source_done,
            DocumentKind::Revision => !sheet.revision_done,
            DocumentKind::Review => {
                let a = rec.assignment.as_ref().unwrap();
                let idx = a.authors_of(&s.submitter_id).position(|x| Some(x) == s.counterpart_id.as_ref()).unwrap();
                !sheet.review_done[idx]
            }
            DocumentKind::Reverse => {
                let a = rec.assignment.as_ref().unwrap();
                let idx = a.reviewers_of(&s.submitter_id).position(|x| Some(x) == s.counterpart_id.as_ref()).unwrap();
                !sheet.reverse_done[idx]
            }
        };
        ensure(zero, format!("seq {seq}: late {:?} earned process points", s.kind))?;
        late += 1;
    }
    if let Some(report) = &rec.consensus {
        for f in &report.flagged {
            let n = course
                .cases
                .iter()
                .filter(|c| c.task_id == rec.task.task_id && c.author_id == f.author_id)
                .count();
            ensure(n == 1, format!("seq {seq}: flagged group has {n} cases"))?;
        }
    }
    // Teacher overrides survive recomputation.
    let mut again = course.clone();
    again.recompute_sheets(rec.task.task_id).map_err(|e| e.to_string())?;
    let resheets = &again.tasks[&rec.task.task_id].sheets;
    ensure(
        resheets.iter().zip(&rec.sheets).all(|(a, b)| a.overall == b.overall),
        format!("seq {seq}: recomputation changed scores"),
    )?;
    Ok(late)
}

fn aggregation_and_snapshot() -> Outcome {
    let weights = WeightConfig::default();
    let mk = |code: &[u32], review: &[u32], bonus: f64| {
        let mut s = ScoreSheet::new("s".into(), TaskId(1));
        s.revision_done = true;
        s.review_done = vec![true; 5];
        s.reverse_done = vec![true; 5];
        s.code_scores_received = code.to_vec();
        s.review_scores_received = review.to_vec();
        s.review_bonuses = vec![BonusDelta { reviewer_id: "s".into(), author_id: "x".into(), delta: bonus }];
        s
    };
    let derived = overall_score(&mk(&[80; 5], &[90; 5], 2.0), &weights).map_err(|e| e.to_string())?;
    ensure(derived == 93.0, format!("derived example gave {derived}"))?;
    let perfect = overall_score(&mk(&[100; 5], &[100; 5], 0.0), &weights).map_err(|e| e.to_string())?;
    ensure(perfect == 100.0, format!("all-perfect gave {perfect}"))?;

    let spec = ArchetypeSpec {
        honest: 26,
        radical_high: 1,
        radical_low: 1,
        low_competence: 2,
        advanced_authors: 2,
        ..Default::default()
    };
    let class = generate_class(&spec, 77).map_err(|e| e.to_string())?;
    let mut out = run_semester(&class, 12, 5).map_err(|e| e.to_string())?;
    let course = &mut out.course;
    if let Some(id) = course.open_cases().first().map(|c| c.case_id) {
        course.resolve_arbitration(id, vec![], "reviewed", t0()).map_err(|e| e.to_string())?;
    }
    let who = course.radicalness.as_ref().unwrap().entries[0].reviewer_id.clone();
    course.issue_warning(&who, "consistent scores", t0()).map_err(|e| e.to_string())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("semester.json");
    save_snapshot(course, &path).map_err(|e| e.to_string())?;
    let loaded = load_snapshot(&path).map_err(|e| e.to_string())?;
    ensure(&loaded == course, "snapshot round trip differs")?;
    let reviews = loaded
        .tasks
        .values()
        .flat_map(|r| &r.submissions)
        .filter(|s| matches!(s.document, Document::Review(_)))
        .count();
    ensure(loaded.tasks.len() == 12 && reviews == 12 * 150, "semester shape")?;
    Ok(format!("93.0 and 100.0 exact; 30x12 snapshot ({reviews} reviews) round-trips"))
}

fn excluded_outcomes() -> Outcome {
    // Classroom time savings and survey splits need a real class; the
    // property suites above stand in for them. This suite links only the
    // core crate.
    Ok("classroom outcomes excluded; suite runs on the core crate alone".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("worked bonus example", worked_example),
        ("formula oracles", formula_oracles),
        ("radicalness ordering", reference_ordering),
        ("pooling reduces small-sample bias", pooling_bias),
        ("radicalness detection", radicalness_detection),
        ("advanced-program pipeline", case1_pipeline),
        ("workflow invariants", workflow_invariants),
        ("aggregation and snapshot", aggregation_and_snapshot),
        ("excluded classroom outcomes", excluded_outcomes),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS  AC{} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  AC{} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
