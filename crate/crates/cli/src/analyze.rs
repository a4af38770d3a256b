//! `analyze`: segmentation, reference, DTW and Wilcoxon over a cohort.
//!
//! Per subject, the reference is built from the pre task. Pre steps form
//! the "no disturbance" set (or post steps, see [`Baseline`]) and
//! intervention steps the "disturbance" set. Subjects run in parallel; all
//! tables are written afterwards in discovery order.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gait_perturb::dtw::{self, DtwConfig};
use gait_perturb::ingest::{self, Task, TaskPolicy, MANIFEST_FILE};
use gait_perturb::reference::{self, ReferenceWaveform, TargetLength};
use gait_perturb::segment::{self, SegmentationConfig, StepWaveform};
use gait_perturb::stats::{self, Aggregate, ChannelComparison, Condition, ConditionTable};
use gait_perturb::{Channel, Recording};
use rayon::prelude::*;

use crate::error::CliError;
use crate::svg::{LinePlot, Series, PALETTE};

/// Which steps make up the "no disturbance" condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Baseline {
    /// Pre steps scored against the reference they were averaged into.
    Pre,
    /// Each pre step scored against the reference built from the other pre
    /// steps.
    #[default]
    PreLoo,
    /// Post steps scored against the pre reference.
    Post,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Pre => "pre",
            Baseline::PreLoo => "pre-loo",
            Baseline::Post => "post",
        }
    }
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pre" => Ok(Baseline::Pre),
            "pre-loo" => Ok(Baseline::PreLoo),
            "post" => Ok(Baseline::Post),
            _ => Err(format!("expected pre, pre-loo or post, got `{s}`")),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    /// Empty means all six.
    pub channels: Vec<Channel>,
    pub aggregate: Aggregate,
    pub dtw: DtwConfig,
    pub resample: TargetLength,
    pub segmentation: SegmentationConfig,
    pub baseline: Baseline,
    /// Also write an SVG of each subject's reference per channel.
    pub plots: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            channels: Vec::new(),
            aggregate: Aggregate::Mean,
            dtw: DtwConfig::default(),
            resample: TargetLength::Auto,
            segmentation: SegmentationConfig::default(),
            baseline: Baseline::default(),
            plots: true,
        }
    }
}

impl AnalyzeOptions {
    pub fn selected_channels(&self) -> Vec<Channel> {
        if self.channels.is_empty() {
            return Channel::ALL.to_vec();
        }
        Channel::ALL.into_iter().filter(|c| self.channels.contains(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub subject: String,
    pub task: Task,
    /// 1-based.
    pub pass: usize,
    /// 1-based among the retained steps of the pass.
    pub step: usize,
    pub channel: Channel,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub subject: String,
    /// `session` when the whole subject could not be loaded.
    pub task: String,
    pub pass: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SubjectOutcome {
    pub subject: String,
    pub reference: Option<ReferenceWaveform>,
    pub distances: Vec<DistanceRow>,
    pub errors: Vec<ErrorRow>,
    pub notices: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub subjects: Vec<SubjectOutcome>,
    pub table: ConditionTable,
    /// `None` when no subject had both conditions.
    pub wilcoxon: Option<Vec<ChannelComparison>>,
    pub notices: Vec<String>,
}

impl AnalysisReport {
    pub fn distances(&self) -> impl Iterator<Item = &DistanceRow> {
        self.subjects.iter().flat_map(|s| s.distances.iter())
    }

    pub fn errors(&self) -> impl Iterator<Item = &ErrorRow> {
        self.subjects.iter().flat_map(|s| s.errors.iter())
    }
}

/// Subject directories under the given paths: a path holding a manifest is
/// a subject, otherwise its immediate subdirectories holding one are, in
/// name order.
pub fn discover_subjects(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.join(MANIFEST_FILE).is_file() {
            out.push(p.clone());
            continue;
        }
        if !p.is_dir() {
            return Err(CliError::Usage(format!("{}: no such session directory", p.display())));
        }
        let mut found: Vec<PathBuf> = fs::read_dir(p)
            .map_err(|e| CliError::io(p, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|d| d.join(MANIFEST_FILE).is_file())
            .collect();
        if found.is_empty() {
            return Err(CliError::Usage(format!("{}: no session manifests found", p.display())));
        }
        found.sort();
        out.extend(found);
    }
    Ok(out)
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

struct Scorer<'a> {
    opts: &'a AnalyzeOptions,
    channels: &'a [Channel],
    out: SubjectOutcome,
}

impl Scorer<'_> {
    fn error(&mut self, task: &str, pass: Option<usize>, message: impl fmt::Display) {
        self.out.errors.push(ErrorRow {
            subject: self.out.subject.clone(),
            task: task.to_string(),
            pass,
            message: message.to_string(),
        });
    }

    fn segment(&mut self, rec: &Recording, task: Task, pass: usize) -> Option<Vec<StepWaveform>> {
        match segment::segment_recording(rec, &self.opts.segmentation) {
            Ok(s) => Some(s.steps),
            Err(e) => {
                self.error(task.name(), Some(pass), e);
                None
            }
        }
    }

    /// Scores each step against the references `references_for(step index)`;
    /// with several references the distances are averaged.
    fn score<'r>(
        &mut self,
        steps: &[StepWaveform],
        task: Task,
        pass: usize,
        references_for: impl Fn(usize) -> &'r [ReferenceWaveform],
    ) {
        let mut rows = Vec::with_capacity(steps.len() * self.channels.len());
        for (i, step) in steps.iter().enumerate() {
            let references = references_for(i);
            for &channel in self.channels {
                let mut total = 0.0;
                for reference in references {
                    match dtw::dtw_cost(step.channel(channel), reference.channel(channel), &self.opts.dtw) {
                        Ok(d) => total += d,
                        Err(e) => {
                            self.error(task.name(), Some(pass), format!("step {}: {e}", i + 1));
                            return;
                        }
                    }
                }
                rows.push(DistanceRow {
                    subject: self.out.subject.clone(),
                    task,
                    pass,
                    step: i + 1,
                    channel,
                    distance: total / references.len() as f64,
                });
            }
        }
        self.out.distances.extend(rows);
    }
}

pub fn analyze_subject(dir: &Path, opts: &AnalyzeOptions) -> SubjectOutcome {
    let channels = opts.selected_channels();
    let mut sc = Scorer {
        opts,
        channels: &channels,
        out: SubjectOutcome {
            subject: dir_label(dir),
            reference: None,
            distances: Vec::new(),
            errors: Vec::new(),
            notices: Vec::new(),
        },
    };
    let session = match ingest::load_session_with(dir.join(MANIFEST_FILE), TaskPolicy::AllowMissingTasks) {
        Ok(s) => s,
        Err(e) => {
            sc.error("session", None, e);
            return sc.out;
        }
    };
    sc.out.subject = session.subject_id.clone();
    for w in &session.warnings {
        sc.out.notices.push(format!("{}: {w}", session.subject_id));
    }
    if session.with_intervention.is_empty() {
        sc.out.notices.push(format!("{}: no intervention recordings", session.subject_id));
    }
    if session.post.is_none() {
        sc.out.notices.push(format!("{}: no post recording", session.subject_id));
    }

    let no_reference = |sc: &mut Scorer, why: &str| {
        for pass in 1..=session.with_intervention.len() {
            sc.error(Task::With.name(), Some(pass), why);
        }
        if session.post.is_some() {
            sc.error(Task::Post.name(), Some(1), why);
        }
    };

    let Some(pre_steps) = sc.segment(&session.pre, Task::Pre, 1) else {
        no_reference(&mut sc, "no reference: pre task failed");
        return sc.out;
    };
    let reference = match reference::build_reference(&pre_steps, opts.resample) {
        Ok(r) => r,
        Err(e) => {
            sc.error(Task::Pre.name(), Some(1), e);
            no_reference(&mut sc, "no reference: pre task failed");
            return sc.out;
        }
    };

    // Leave-one-out: pre step i is scored against the reference without it,
    // every other step against all held-out references (mean distance), so
    // both sets are compared with references of the same size.
    let mut held_out = None;
    if opts.baseline == Baseline::PreLoo {
        if pre_steps.len() < 2 {
            sc.error(Task::Pre.name(), Some(1), "leave-one-out scoring needs at least 2 pre steps");
        } else {
            let fixed = TargetLength::Fixed(reference.len());
            let refs: Result<Vec<ReferenceWaveform>, _> = (0..pre_steps.len())
                .map(|i| {
                    let rest: Vec<StepWaveform> = pre_steps
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, s)| s.clone())
                        .collect();
                    reference::build_reference(&rest, fixed)
                })
                .collect();
            match refs {
                Ok(refs) => held_out = Some(refs),
                Err(e) => sc.error(Task::Pre.name(), Some(1), e),
            }
        }
    }
    let full = std::slice::from_ref(&reference);
    match &held_out {
        Some(refs) => sc.score(&pre_steps, Task::Pre, 1, |i| std::slice::from_ref(&refs[i])),
        None if opts.baseline != Baseline::PreLoo => sc.score(&pre_steps, Task::Pre, 1, |_| full),
        None => {}
    }
    let others: &[ReferenceWaveform] = held_out.as_deref().unwrap_or(full);

    for (k, rec) in session.with_intervention.iter().enumerate() {
        if let Some(steps) = sc.segment(rec, Task::With, k + 1) {
            sc.score(&steps, Task::With, k + 1, |_| others);
        }
    }
    if let Some(post) = &session.post {
        if let Some(steps) = sc.segment(post, Task::Post, 1) {
            sc.score(&steps, Task::Post, 1, |_| others);
        }
    }
    sc.out.reference = Some(reference);
    sc.out
}

fn conditions_of(task: Task, baseline: Baseline) -> &'static [Condition] {
    match (task, baseline) {
        (Task::Pre, Baseline::Post) => &[],
        (Task::Pre, _) => &[Condition::NoDisturbance],
        (Task::With, _) => &[Condition::Disturbance],
        (Task::Post, Baseline::Post) => &[Condition::Post, Condition::NoDisturbance],
        (Task::Post, _) => &[Condition::Post],
    }
}

/// Runs the analysis without touching the filesystem beyond reading inputs.
pub fn run_analysis(subject_dirs: &[PathBuf], opts: &AnalyzeOptions) -> AnalysisReport {
    let channels = opts.selected_channels();
    let mut subjects: Vec<SubjectOutcome> = subject_dirs.par_iter().map(|d| analyze_subject(d, opts)).collect();

    let mut notices = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for s in &mut subjects {
        if !seen.insert(s.subject.clone()) {
            s.notices.push(format!("{}: duplicate subject id, results ignored", s.subject));
            s.errors = vec![ErrorRow {
                subject: s.subject.clone(),
                task: "session".into(),
                pass: None,
                message: "duplicate subject id".into(),
            }];
            s.distances.clear();
            s.reference = None;
        }
        notices.extend(s.notices.iter().cloned());
    }

    let rows = subjects.iter().flat_map(|s| s.distances.iter()).flat_map(|r| {
        conditions_of(r.task, opts.baseline)
            .iter()
            .map(move |&c| (r.subject.as_str(), c, r.channel, r.distance))
    });
    let table = ConditionTable::from_distances(rows, opts.aggregate);

    // Only subjects with both conditions on every channel enter the test.
    let mut paired = ConditionTable::new();
    for subject in table.subjects() {
        let complete = channels.iter().all(|&c| {
            table.get(subject, Condition::NoDisturbance, c).is_some() && table.get(subject, Condition::Disturbance, c).is_some()
        });
        if !complete {
            notices.push(format!("{subject}: excluded from the paired test (missing a condition)"));
            continue;
        }
        for &c in &channels {
            for cond in [Condition::NoDisturbance, Condition::Disturbance] {
                paired.insert(subject, cond, c, table.get(subject, cond, c).expect("checked"));
            }
        }
    }
    let wilcoxon = if paired.is_empty() {
        notices.push("wilcoxon skipped: no subject has both no_disturbance and disturbance values".into());
        None
    } else {
        Some(
            stats::compare_conditions(&paired, Condition::Disturbance, Condition::NoDisturbance, &channels)
                .expect("paired table is complete"),
        )
    };

    AnalysisReport {
        subjects,
        table,
        wilcoxon,
        notices,
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes the report tables into `out`.
pub fn write_report(report: &AnalysisReport, opts: &AnalyzeOptions, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let channels = opts.selected_channels();

    let mut w = csv_writer(&out.join("distances.csv"))?;
    w.write_record(["subject", "task", "pass", "step", "channel", "distance"])?;
    for r in report.distances() {
        w.write_record([
            r.subject.clone(),
            r.task.name().to_string(),
            r.pass.to_string(),
            r.step.to_string(),
            r.channel.name().to_string(),
            r.distance.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(out.join("distances.csv"), e))?;

    let mut w = csv_writer(&out.join("subject_means.csv"))?;
    w.write_record(["subject", "condition", "channel", opts.aggregate.name()])?;
    for subject in report.table.subjects() {
        for cond in [Condition::NoDisturbance, Condition::Disturbance, Condition::Post] {
            for &c in &channels {
                if let Some(v) = report.table.get(subject, cond, c) {
                    w.write_record([subject, cond.name(), c.name(), &v.to_string()])?;
                }
            }
        }
    }
    w.flush().map_err(|e| CliError::io(out.join("subject_means.csv"), e))?;

    let wilcoxon_path = out.join("wilcoxon.csv");
    match &report.wilcoxon {
        Some(results) => {
            let mut w = csv_writer(&wilcoxon_path)?;
            w.write_record(["channel", "n", "statistic", "p", "method", "sig05", "sig01"])?;
            for cmp in results {
                match &cmp.result {
                    Ok(r) => w.write_record([
                        cmp.channel.name().to_string(),
                        r.n_effective.to_string(),
                        r.statistic.to_string(),
                        r.p_two_sided.to_string(),
                        r.method.name().to_string(),
                        r.sig_05.to_string(),
                        r.sig_01.to_string(),
                    ])?,
                    // undefined test, e.g. all differences zero
                    Err(_) => w.write_record([cmp.channel.name(), "0", "", "", "undefined", "false", "false"])?,
                }
            }
            w.flush().map_err(|e| CliError::io(&wilcoxon_path, e))?;
        }
        None => {
            if wilcoxon_path.exists() {
                fs::remove_file(&wilcoxon_path).map_err(|e| CliError::io(&wilcoxon_path, e))?;
            }
        }
    }

    let mut w = csv_writer(&out.join("errors.csv"))?;
    w.write_record(["subject", "task", "pass", "error"])?;
    for e in report.errors() {
        w.write_record([
            e.subject.clone(),
            e.task.clone(),
            e.pass.map(|p| p.to_string()).unwrap_or_default(),
            e.message.clone(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(out.join("errors.csv"), e))?;

    let notices_path = out.join("notices.txt");
    let mut text = String::new();
    for n in &report.notices {
        text.push_str(n);
        text.push('\n');
    }
    fs::write(&notices_path, text).map_err(|e| CliError::io(&notices_path, e))?;

    let ref_dir = out.join("references");
    fs::create_dir_all(&ref_dir).map_err(|e| CliError::io(&ref_dir, e))?;
    for s in &report.subjects {
        let Some(reference) = &s.reference else { continue };
        let rec = reference.to_recording().map_err(CliError::runtime)?;
        ingest::write_recording(&rec, ref_dir.join(format!("{}.csv", s.subject))).map_err(CliError::runtime)?;
        if opts.plots {
            for &c in &channels {
                let path = ref_dir.join(format!("{}_{}.svg", s.subject, c.name()));
                let svg = reference_plot(&s.subject, reference, c).render();
                fs::write(&path, svg).map_err(|e| CliError::io(&path, e))?;
            }
        }
    }
    Ok(())
}

/// Reference waveform against % of the gait cycle.
pub fn reference_plot(subject: &str, reference: &ReferenceWaveform, channel: Channel) -> LinePlot {
    let span = (reference.len() - 1) as f64;
    let points = reference
        .channel(channel)
        .iter()
        .enumerate()
        .map(|(i, &v)| (100.0 * i as f64 / span, v))
        .collect();
    LinePlot {
        title: format!("{subject} reference {channel} ({} steps)", reference.source_step_count),
        x_label: "gait cycle [%]".into(),
        y_label: channel.name().into(),
        series: vec![Series {
            label: "reference".into(),
            points,
            color: PALETTE[0],
            dashed: false,
        }],
        markers: Vec::new(),
    }
}

/// Full `analyze` command: discover, analyze, write.
pub fn analyze(paths: &[PathBuf], out: &Path, opts: &AnalyzeOptions) -> Result<AnalysisReport, CliError> {
    opts.segmentation.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dirs = discover_subjects(paths)?;
    let report = run_analysis(&dirs, opts);
    write_report(&report, opts, out)?;
    if report.subjects.iter().all(|s| s.distances.is_empty()) {
        return Err(CliError::Runtime("no subject could be analyzed; see errors.csv".into()));
    }
    Ok(report)
}
