use std::fs;
use std::path::Path;

use gait_perturb::controller::{CommandRecord, Direction, PhaseBin};
use gait_perturb::ingest::{self, IngestError, SessionWarning, Task, TaskPolicy};
use gait_perturb::{ImuSample, Leg, Recording};

fn ramp(n: usize, offset: f64) -> Recording {
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 * 0.01;
            ImuSample::from_channels(t, [offset, 1.0, 9.81, t, -t, 0.5 * t])
        })
        .collect();
    Recording::new(samples, Leg::Right).unwrap()
}

fn write_manifest(dir: &Path, json: &str) {
    fs::write(dir.join("manifest.json"), json).unwrap();
}

fn write_tasks(dir: &Path, n_with: usize) {
    ingest::write_recording(&ramp(20, 0.0), dir.join("pre.csv")).unwrap();
    for k in 1..=n_with {
        ingest::write_recording(&ramp(20, k as f64), dir.join(format!("with_{k}.csv"))).unwrap();
    }
    ingest::write_recording(&ramp(20, 9.0), dir.join("post.csv")).unwrap();
}

#[test]
fn full_protocol_session_loads_in_order() {
    let dir = tempfile::tempdir().unwrap();
    write_tasks(dir.path(), 5);
    write_manifest(
        dir.path(),
        r#"{"subject_id": "S07", "leg": "left", "pre": "pre.csv",
            "with": ["with_1.csv", "with_2.csv", "with_3.csv", "with_4.csv", "with_5.csv"],
            "post": "post.csv"}"#,
    );
    let s = ingest::load_session(dir.path().join("manifest.json")).unwrap();
    assert_eq!(s.subject_id, "S07");
    assert_eq!(s.leg, Leg::Left);
    assert_eq!(s.with_intervention.len(), 5);
    for (k, rec) in s.with_intervention.iter().enumerate() {
        assert_eq!(rec.samples()[0].acc[0], (k + 1) as f64);
        assert_eq!(rec.leg, Leg::Left);
    }
    assert!(s.post.is_some());
    assert!(s.warnings.is_empty());
    assert!(s.command_log.is_none());
}

#[test]
fn missing_post_names_the_task() {
    let dir = tempfile::tempdir().unwrap();
    write_tasks(dir.path(), 5);
    fs::remove_file(dir.path().join("post.csv")).unwrap();
    write_manifest(
        dir.path(),
        r#"{"subject_id": "S01", "pre": "pre.csv",
            "with": ["with_1.csv", "with_2.csv", "with_3.csv", "with_4.csv", "with_5.csv"],
            "post": "post.csv"}"#,
    );
    match ingest::load_session(dir.path().join("manifest.json")) {
        Err(IngestError::MissingFile { task, .. }) => assert_eq!(task, "post"),
        other => panic!("expected MissingFile, got {other:?}"),
    }
}

#[test]
fn absent_post_key_is_strict_error_but_allowed_when_relaxed() {
    let dir = tempfile::tempdir().unwrap();
    write_tasks(dir.path(), 1);
    write_manifest(dir.path(), r#"{"subject_id": "S01", "pre": "pre.csv"}"#);
    let path = dir.path().join("manifest.json");
    assert!(matches!(ingest::load_session(&path), Err(IngestError::MissingFile { .. })));
    let s = ingest::load_session_with(&path, TaskPolicy::AllowMissingTasks).unwrap();
    assert!(s.with_intervention.is_empty());
    assert!(s.post.is_none());
}

#[test]
fn three_intervention_files_load_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    write_tasks(dir.path(), 3);
    write_manifest(
        dir.path(),
        r#"{"subject_id": "S02", "pre": "pre.csv",
            "with": ["with_1.csv", "with_2.csv", "with_3.csv"], "post": "post.csv"}"#,
    );
    let s = ingest::load_session(dir.path().join("manifest.json")).unwrap();
    assert_eq!(s.with_intervention.len(), 3);
    assert_eq!(
        s.warnings,
        vec![SessionWarning::TaskCountMismatch {
            task: Task::With,
            expected: 5,
            found: 3
        }]
    );
}

#[test]
fn unknown_manifest_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_tasks(dir.path(), 1);
    write_manifest(
        dir.path(),
        r#"{"subject_id": "S01", "pre": "pre.csv", "with": ["with_1.csv"], "post": "post.csv", "cadence": 3}"#,
    );
    let err = ingest::load_session(dir.path().join("manifest.json")).unwrap_err();
    assert!(err.to_string().contains("cadence"), "{err}");
}

#[test]
fn written_session_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let log = vec![CommandRecord {
        onset_t: 0.05,
        duration: 0.5,
        direction: Direction::Backward,
        bin: PhaseBin::PSwISw,
        cycle_index: 2,
        fraction_at_onset: 0.55,
    }];
    let session = ingest::Session {
        subject_id: "S03".into(),
        leg: Leg::Right,
        pre: ramp(15, 0.0),
        with_intervention: vec![ramp(15, 1.0), ramp(15, 2.0)],
        post: Some(ramp(15, 3.0)),
        command_log: Some(vec![log.clone(), Vec::new()]),
        warnings: Vec::new(),
    };
    let manifest = ingest::write_session(&session, dir.path().join("S03")).unwrap();
    let back = ingest::load_session(manifest).unwrap();
    assert_eq!(back.pre, session.pre);
    assert_eq!(back.with_intervention, session.with_intervention);
    assert_eq!(back.post, session.post);
    assert_eq!(back.commands_for_pass(0), Some(log.as_slice()));
    assert_eq!(back.commands_for_pass(1), Some(&[][..]));
}
