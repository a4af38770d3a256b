//! `plot`: reference waveform, or one intervention step overlaid on the
//! reference with command-onset markers.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gait_perturb::ingest::{self, Session, TaskPolicy, MANIFEST_FILE};
use gait_perturb::reference::{self, ReferenceWaveform, TargetLength};
use gait_perturb::segment::{self, SegmentationConfig, StepWaveform};
use gait_perturb::Channel;

use crate::analyze::{self, reference_plot};
use crate::error::CliError;
use crate::svg::{LinePlot, Marker, Series, PALETTE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotPass {
    Reference,
    /// 1-based intervention pass.
    With(usize),
}

impl FromStr for PlotPass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ref" | "reference" => Ok(PlotPass::Reference),
            _ => s
                .parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .map(PlotPass::With)
                .ok_or_else(|| format!("expected `ref` or an intervention pass number >= 1, got `{s}`")),
        }
    }
}

impl fmt::Display for PlotPass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlotPass::Reference => f.write_str("ref"),
            PlotPass::With(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlotRequest {
    pub session_dir: PathBuf,
    pub subject: String,
    pub pass: PlotPass,
    pub channel: Channel,
    /// 1-based retained step; defaults to the first step holding a command
    /// onset, else step 1.
    pub step: Option<usize>,
    pub resample: TargetLength,
    pub segmentation: SegmentationConfig,
}

/// Finds the subject in a subject or cohort directory.
fn find_session(dir: &Path, subject: &str) -> Result<Session, CliError> {
    let load = |d: &Path| {
        ingest::load_session_with(d.join(MANIFEST_FILE), TaskPolicy::AllowMissingTasks).map_err(CliError::runtime)
    };
    if dir.join(MANIFEST_FILE).is_file() {
        let s = load(dir)?;
        if s.subject_id != subject {
            return Err(CliError::Usage(format!(
                "unknown subject `{subject}`: {} holds `{}`",
                dir.display(),
                s.subject_id
            )));
        }
        return Ok(s);
    }
    let named = dir.join(subject);
    if named.join(MANIFEST_FILE).is_file() {
        let s = load(&named)?;
        if s.subject_id == subject {
            return Ok(s);
        }
    }
    for d in analyze::discover_subjects(&[dir.to_path_buf()])? {
        let manifest = ingest::SessionManifest::read(d.join(MANIFEST_FILE)).map_err(CliError::runtime)?;
        if manifest.subject_id == subject {
            return load(&d);
        }
    }
    Err(CliError::Usage(format!("unknown subject `{subject}` under {}", dir.display())))
}

fn build_reference(session: &Session, req: &PlotRequest) -> Result<ReferenceWaveform, CliError> {
    let seg = segment::segment_recording(&session.pre, &req.segmentation)
        .map_err(|e| CliError::Runtime(format!("{} pre: {e}", session.subject_id)))?;
    reference::build_reference(&seg.steps, req.resample).map_err(CliError::runtime)
}

/// Step of intervention pass `pass` with the reference stretched over it.
pub fn step_plot(
    session: &Session,
    reference: &ReferenceWaveform,
    pass: usize,
    step: Option<usize>,
    channel: Channel,
    segmentation: &SegmentationConfig,
) -> Result<LinePlot, CliError> {
    let n_passes = session.with_intervention.len();
    let rec = session.with_intervention.get(pass - 1).ok_or_else(|| {
        CliError::Usage(format!("unknown pass {pass}: {} has {n_passes} intervention pass(es)", session.subject_id))
    })?;
    let steps = segment::segment_recording(rec, segmentation)
        .map_err(|e| CliError::Runtime(format!("{} with[{pass}]: {e}", session.subject_id)))?
        .steps;
    let commands = session.commands_for_pass(pass - 1).unwrap_or(&[]);
    let holds_onset = |s: &StepWaveform| commands.iter().any(|c| s.start_t <= c.onset_t && c.onset_t < s.end_t);
    let index = match step {
        Some(k) if (1..=steps.len()).contains(&k) => k - 1,
        Some(k) => return Err(CliError::Usage(format!("unknown step {k}: pass {pass} has {} steps", steps.len()))),
        None => steps.iter().position(holds_onset).unwrap_or(0),
    };
    let s = &steps[index];

    let measured = s.times.iter().zip(s.channel(channel)).map(|(&t, &v)| (t - s.start_t, v)).collect();
    let span = (reference.len() - 1) as f64;
    let stretched = reference
        .channel(channel)
        .iter()
        .enumerate()
        .map(|(i, &v)| (s.duration() * i as f64 / span, v))
        .collect();
    let markers = commands
        .iter()
        .filter(|c| s.start_t <= c.onset_t && c.onset_t < s.end_t)
        .map(|c| Marker {
            x: c.onset_t - s.start_t,
            label: format!("{} {}", c.direction.name(), c.bin),
        })
        .collect();
    Ok(LinePlot {
        title: format!("{} pass {pass} step {} {channel}", session.subject_id, index + 1),
        x_label: "time since heel strike [s]".into(),
        y_label: channel.name().into(),
        series: vec![
            Series {
                label: "step".into(),
                points: measured,
                color: PALETTE[1],
                dashed: false,
            },
            Series {
                label: "reference".into(),
                points: stretched,
                color: PALETTE[0],
                dashed: true,
            },
        ],
        markers,
    })
}

pub fn render(req: &PlotRequest) -> Result<LinePlot, CliError> {
    req.segmentation.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let session = find_session(&req.session_dir, &req.subject)?;
    let reference = build_reference(&session, req)?;
    match req.pass {
        PlotPass::Reference => Ok(reference_plot(&session.subject_id, &reference, req.channel)),
        PlotPass::With(k) => step_plot(&session, &reference, k, req.step, req.channel, &req.segmentation),
    }
}

pub fn plot(req: &PlotRequest, out: &Path) -> Result<(), CliError> {
    let svg = render(req)?.render();
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(out, svg).map_err(|e| CliError::io(out, e))
}
