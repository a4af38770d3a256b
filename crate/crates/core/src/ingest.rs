//! IMU data model, recording and command-log files, and session manifests.
//!
//! A recording is a plain CSV file with one row per heel-sensor sample:
//!
//! ```text
//! t,acc_x,acc_y,acc_z,ang_x,ang_y,ang_z,units=si
//! 0,0.12,-0.4,9.79,1.5,-3.25,0.5
//! ```
//!
//! Acceleration is in m/s², angular velocity in deg/s, time in seconds.
//! Values are written with shortest round-trip decimal formatting, so a
//! write/read cycle reproduces every sample bit for bit.
//!
//! A session groups the recordings of one subject into the three walking
//! tasks (before, with and after intervention) and is described by a JSON
//! manifest whose paths are relative to the manifest's directory.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::CommandRecord;

/// Exact header line of a recording CSV file.
pub const RECORDING_HEADER: &str = "t,acc_x,acc_y,acc_z,ang_x,ang_y,ang_z,units=si";

/// Default number of intervention passes per session.
pub const DEFAULT_WITH_PASSES: usize = 5;

/// File name used for session manifests.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("empty file")]
    EmptyFile,
    #[error("unexpected header {found:?} (expected {RECORDING_HEADER:?})")]
    BadHeader { found: String },
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: timestamp {t} is not strictly after the previous one")]
    NonMonotoneTime { row: usize, t: f64 },
    #[error("row {row}: non-finite value")]
    NonFinite { row: usize },
    #[error("a recording needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("task `{task}`: missing file{}", .path.as_ref().map(|p| format!(" {}", p.display())).unwrap_or_default())]
    MissingFile { task: String, path: Option<PathBuf> },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("command log: {0}")]
    CommandLog(String),
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// One of the six sensor axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    AccX,
    AccY,
    AccZ,
    AngX,
    AngY,
    AngZ,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::AccX,
        Channel::AccY,
        Channel::AccZ,
        Channel::AngX,
        Channel::AngY,
        Channel::AngZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::AccX => "AccX",
            Channel::AccY => "AccY",
            Channel::AccZ => "AccZ",
            Channel::AngX => "AngX",
            Channel::AngY => "AngY",
            Channel::AngZ => "AngZ",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = String;

    /// Accepts `AngY`, `angy` and `ang_y` spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_')
            .collect::<String>()
            .to_ascii_lowercase();
        Channel::ALL
            .into_iter()
            .find(|c| c.name().to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown channel `{s}` (expected one of AccX, AccY, AccZ, AngX, AngY, AngZ)"))
    }
}

/// Which leg wears the sensor and the boot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leg {
    Left,
    #[default]
    Right,
}

/// The three walking tasks of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pre,
    With,
    Post,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Pre => "pre",
            Task::With => "with",
            Task::Post => "post",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One timestamped 6-axis reading of the heel sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Seconds.
    pub t: f64,
    /// m/s², sensor frame X/Y/Z.
    pub acc: [f64; 3],
    /// deg/s, sensor frame X/Y/Z.
    pub ang: [f64; 3],
}

impl ImuSample {
    pub fn new(t: f64, acc: [f64; 3], ang: [f64; 3]) -> Self {
        ImuSample { t, acc, ang }
    }

    /// Builds a sample from a channel-ordered array (`AccX..AngZ`).
    pub fn from_channels(t: f64, values: [f64; 6]) -> Self {
        ImuSample {
            t,
            acc: [values[0], values[1], values[2]],
            ang: [values[3], values[4], values[5]],
        }
    }

    pub fn get(&self, channel: Channel) -> f64 {
        let i = channel.index();
        if i < 3 {
            self.acc[i]
        } else {
            self.ang[i - 3]
        }
    }

    pub fn get_mut(&mut self, channel: Channel) -> &mut f64 {
        let i = channel.index();
        if i < 3 {
            &mut self.acc[i]
        } else {
            &mut self.ang[i - 3]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.acc.iter().all(|v| v.is_finite())
            && self.ang.iter().all(|v| v.is_finite())
    }
}

/// A validated, strictly time-ordered sequence of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    samples: Vec<ImuSample>,
    /// Nominal sample rate in Hz. Informational only; timestamps are authoritative.
    pub sample_rate_hint: Option<f64>,
    pub leg: Leg,
}

impl Recording {
    pub fn new(samples: Vec<ImuSample>, leg: Leg) -> Result<Self> {
        validate_samples(&samples)?;
        Ok(Recording {
            samples,
            sample_rate_hint: None,
            leg,
        })
    }

    pub fn with_sample_rate_hint(mut self, hz: f64) -> Self {
        self.sample_rate_hint = Some(hz);
        self
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<ImuSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false for a constructed recording; provided for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_t(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_t(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end_t() - self.start_t()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn channel(&self, channel: Channel) -> Vec<f64> {
        self.samples.iter().map(|s| s.get(channel)).collect()
    }
}

fn validate_samples(samples: &[ImuSample]) -> Result<()> {
    if samples.len() < 2 {
        return Err(IngestError::TooFewSamples(samples.len()));
    }
    for (i, s) in samples.iter().enumerate() {
        if !s.is_finite() {
            return Err(IngestError::NonFinite { row: i + 1 });
        }
        if i > 0 && s.t <= samples[i - 1].t {
            return Err(IngestError::NonMonotoneTime { row: i + 1, t: s.t });
        }
    }
    Ok(())
}

/// Reads a recording CSV file. The leg defaults to [`Leg::Right`]; session
/// manifests override it.
pub fn read_recording(path: impl AsRef<Path>) -> Result<Recording> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    parse_recording(file)
}

/// Parses recording CSV text from any reader. Rows are numbered from 1,
/// excluding the header.
pub fn parse_recording<R: Read>(reader: R) -> Result<Recording> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = csv.records();

    let header = match records.next() {
        None => return Err(IngestError::EmptyFile),
        Some(r) => r.map_err(|e| IngestError::MalformedRow {
            row: 0,
            reason: e.to_string(),
        })?,
    };
    let found = header.iter().collect::<Vec<_>>().join(",");
    if found != RECORDING_HEADER {
        return Err(IngestError::BadHeader { found });
    }

    let mut samples = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IngestError::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != 7 {
            return Err(IngestError::MalformedRow {
                row,
                reason: format!("expected 7 columns, found {}", record.len()),
            });
        }
        let mut values = [0.0; 7];
        for (slot, field) in values.iter_mut().zip(record.iter()) {
            *slot = field.parse::<f64>().map_err(|_| IngestError::MalformedRow {
                row,
                reason: format!("not a number: {field:?}"),
            })?;
        }
        let sample = ImuSample::from_channels(
            values[0],
            [values[1], values[2], values[3], values[4], values[5], values[6]],
        );
        if !sample.is_finite() {
            return Err(IngestError::NonFinite { row });
        }
        if let Some(prev) = samples.last().map(|s: &ImuSample| s.t) {
            if sample.t <= prev {
                return Err(IngestError::NonMonotoneTime { row, t: sample.t });
            }
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Recording::new(samples, Leg::default())
}

/// Writes a recording as CSV (header plus one row per sample).
pub fn write_recording(rec: &Recording, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = BufWriter::new(file);
    render_recording(rec, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| IngestError::io(path, e))
}

/// Renders the CSV text of a recording.
pub fn render_recording<W: Write>(rec: &Recording, out: &mut W) -> io::Result<()> {
    writeln!(out, "{RECORDING_HEADER}")?;
    for s in rec.samples() {
        // `{:?}` is the shortest representation that parses back to the same bits.
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            s.t, s.acc[0], s.acc[1], s.acc[2], s.ang[0], s.ang[1], s.ang[2]
        )?;
    }
    Ok(())
}

/// Reads a command-log CSV (`onset_t,duration,direction,bin,cycle_index,fraction_at_onset`).
pub fn read_command_log(path: impl AsRef<Path>) -> Result<Vec<CommandRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for (i, row) in csv.deserialize::<CommandRecord>().enumerate() {
        let record = row.map_err(|e| IngestError::CommandLog(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        if !(record.duration > 0.0) || !record.onset_t.is_finite() {
            return Err(IngestError::CommandLog(format!(
                "{}: row {}: invalid onset/duration",
                path.display(),
                i + 1
            )));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_command_log(commands: &[CommandRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| IngestError::CommandLog(format!("{}: {e}", path.display()));
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    csv.write_record(CommandRecord::CSV_HEADER).map_err(to_err)?;
    for c in commands {
        csv.serialize(c).map_err(to_err)?;
    }
    csv.flush().map_err(|e| IngestError::io(path, e))
}

/// On-disk description of a session. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub subject_id: String,
    #[serde(default)]
    pub leg: Leg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre: Option<PathBuf>,
    #[serde(rename = "with", default, skip_serializing_if = "Option::is_none")]
    pub with_intervention: Option<Vec<PathBuf>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commands: Option<Vec<PathBuf>>,
}

impl SessionManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| IngestError::Manifest(format!("{}: {e}", path.display())))
    }
}

/// Non-fatal findings while loading a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionWarning {
    /// The number of recordings for a task differs from the standard protocol.
    TaskCountMismatch { task: Task, expected: usize, found: usize },
}

impl fmt::Display for SessionWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionWarning::TaskCountMismatch { task, expected, found } => {
                write!(f, "task `{task}`: {found} recordings (protocol default is {expected})")
            }
        }
    }
}

/// How strictly [`load_session_with`] treats absent tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TaskPolicy {
    /// Every task must be listed: `pre`, at least one `with`, and `post`.
    #[default]
    Strict,
    /// Only `pre` is required. Missing `with`/`post` keys leave those slots
    /// empty. Listed files must still exist.
    AllowMissingTasks,
}

/// All recordings of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub subject_id: String,
    pub leg: Leg,
    pub pre: Recording,
    pub with_intervention: Vec<Recording>,
    /// Always present for sessions loaded with [`TaskPolicy::Strict`].
    pub post: Option<Recording>,
    /// One command log per intervention recording, when the manifest lists them.
    pub command_log: Option<Vec<Vec<CommandRecord>>>,
    pub warnings: Vec<SessionWarning>,
}

impl Session {
    pub fn commands_for_pass(&self, pass: usize) -> Option<&[CommandRecord]> {
        self.command_log
            .as_ref()
            .and_then(|logs| logs.get(pass))
            .map(|v| v.as_slice())
    }
}

/// Loads a session with [`TaskPolicy::Strict`].
pub fn load_session(manifest_path: impl AsRef<Path>) -> Result<Session> {
    load_session_with(manifest_path, TaskPolicy::Strict)
}

pub fn load_session_with(manifest_path: impl AsRef<Path>, policy: TaskPolicy) -> Result<Session> {
    let manifest_path = manifest_path.as_ref();
    let manifest = SessionManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let strict = policy == TaskPolicy::Strict;

    let load = |task: String, rel: &Path| -> Result<Recording> {
        let path = base.join(rel);
        if !path.is_file() {
            return Err(IngestError::MissingFile {
                task,
                path: Some(path),
            });
        }
        let mut rec = read_recording(&path)?;
        rec.leg = manifest.leg;
        Ok(rec)
    };

    let pre = match &manifest.pre {
        Some(p) => load("pre".into(), p)?,
        None => {
            return Err(IngestError::MissingFile {
                task: "pre".into(),
                path: None,
            })
        }
    };

    let with_paths = manifest.with_intervention.clone().unwrap_or_default();
    if with_paths.is_empty() && strict {
        return Err(IngestError::MissingFile {
            task: "with".into(),
            path: None,
        });
    }
    let with_intervention = with_paths
        .iter()
        .enumerate()
        .map(|(i, p)| load(format!("with[{}]", i + 1), p))
        .collect::<Result<Vec<_>>>()?;

    let post = match &manifest.post {
        Some(p) => Some(load("post".into(), p)?),
        None if strict => {
            return Err(IngestError::MissingFile {
                task: "post".into(),
                path: None,
            })
        }
        None => None,
    };

    let command_log = match &manifest.commands {
        None => None,
        Some(paths) => {
            if paths.len() != with_paths.len() {
                return Err(IngestError::Manifest(format!(
                    "`commands` lists {} logs for {} intervention recordings",
                    paths.len(),
                    with_paths.len()
                )));
            }
            let mut logs = Vec::with_capacity(paths.len());
            for (i, rel) in paths.iter().enumerate() {
                let path = base.join(rel);
                if !path.is_file() {
                    return Err(IngestError::MissingFile {
                        task: format!("commands[{}]", i + 1),
                        path: Some(path),
                    });
                }
                logs.push(read_command_log(&path)?);
            }
            Some(logs)
        }
    };

    let mut warnings = Vec::new();
    if !with_intervention.is_empty() && with_intervention.len() != DEFAULT_WITH_PASSES {
        warnings.push(SessionWarning::TaskCountMismatch {
            task: Task::With,
            expected: DEFAULT_WITH_PASSES,
            found: with_intervention.len(),
        });
    }

    Ok(Session {
        subject_id: manifest.subject_id,
        leg: manifest.leg,
        pre,
        with_intervention,
        post,
        command_log,
        warnings,
    })
}

/// Writes a session into `dir` (created if needed) as `manifest.json`,
/// `pre.csv`, `with_N.csv`, `post.csv` and `with_N_commands.csv`.
/// Returns the manifest path.
pub fn write_session(session: &Session, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;

    write_recording(&session.pre, dir.join("pre.csv"))?;
    let mut with_paths = Vec::new();
    for (i, rec) in session.with_intervention.iter().enumerate() {
        let name = PathBuf::from(format!("with_{}.csv", i + 1));
        write_recording(rec, dir.join(&name))?;
        with_paths.push(name);
    }
    let post = match &session.post {
        Some(rec) => {
            write_recording(rec, dir.join("post.csv"))?;
            Some(PathBuf::from("post.csv"))
        }
        None => None,
    };
    let commands = match &session.command_log {
        Some(logs) => {
            let mut paths = Vec::new();
            for (i, log) in logs.iter().enumerate() {
                let name = PathBuf::from(format!("with_{}_commands.csv", i + 1));
                write_command_log(log, dir.join(&name))?;
                paths.push(name);
            }
            Some(paths)
        }
        None => None,
    };

    let manifest = SessionManifest {
        subject_id: session.subject_id.clone(),
        leg: session.leg,
        pre: Some(PathBuf::from("pre.csv")),
        with_intervention: (!with_paths.is_empty()).then_some(with_paths),
        post,
        commands,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| IngestError::Manifest(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| IngestError::io(&path, e))?;
    Ok(path)
}
