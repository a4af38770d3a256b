//! Argument definitions and dispatch.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gait_perturb::dtw::{DtwConfig, LocalCost, Normalize};
use gait_perturb::reference::TargetLength;
use gait_perturb::segment::SegmentationConfig;
use gait_perturb::sim::SessionSimConfig;
use gait_perturb::stats::Aggregate;
use gait_perturb::Channel;

use crate::analyze::{self, AnalyzeOptions, Baseline};
use crate::error::CliError;
use crate::plot::{self, PlotPass, PlotRequest};
use crate::simulate;

#[derive(Debug, Parser)]
#[command(name = "gait-perturb", version, about = "Gait perturbation sessions: simulate, analyze, plot")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a cohort of closed-loop sessions.
    Simulate(SimulateArgs),
    /// Segment, build references, score steps with DTW and test conditions.
    Analyze(AnalyzeArgs),
    /// Draw a reference waveform or an intervention step as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML config; defaults are used for absent keys (or everything, if omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    /// AngY level (deg/s) a swing peak must exceed.
    #[arg(long, default_value_t = 50.0)]
    pub swing_threshold: f64,
    /// Shortest accepted step, seconds.
    #[arg(long, default_value_t = 0.4)]
    pub min_step: f64,
    /// Longest accepted step, seconds.
    #[arg(long, default_value_t = 2.0)]
    pub max_step: f64,
    /// Steps dropped at each end of a recording.
    #[arg(long, default_value_t = 1)]
    pub trim_steps: usize,
    /// Reference length: `auto` or a sample count.
    #[arg(long, default_value = "auto")]
    pub resample_len: TargetLength,
}

impl SegmentArgs {
    fn config(&self) -> SegmentationConfig {
        SegmentationConfig {
            swing_peak_threshold: self.swing_threshold,
            min_step_duration: self.min_step,
            max_step_duration: self.max_step,
            trim_steps: self.trim_steps,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Subject directories (holding manifest.json) or cohort directories.
    #[arg(required = true)]
    pub sessions: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to a channel; repeatable. Default: all six.
    #[arg(long = "channel")]
    pub channels: Vec<Channel>,
    /// Per-subject summary of step distances: mean or median.
    #[arg(long, default_value = "mean")]
    pub aggregate: Aggregate,
    /// DTW local cost: abs or sq.
    #[arg(long, default_value = "abs")]
    pub dtw_cost: LocalCost,
    /// Sakoe-Chiba band half-width in samples.
    #[arg(long)]
    pub dtw_window: Option<usize>,
    /// DTW normalization: none or path-length.
    #[arg(long, default_value = "none")]
    pub dtw_normalize: Normalize,
    /// No-disturbance set: pre, pre-loo or post.
    #[arg(long, default_value_t = Baseline::default())]
    pub baseline: Baseline,
    /// Skip the per-subject reference SVGs.
    #[arg(long)]
    pub no_plots: bool,
    #[command(flatten)]
    pub segment: SegmentArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Subject or cohort directory.
    pub session: PathBuf,
    #[arg(long)]
    pub subject: String,
    /// `ref` for the reference, or an intervention pass number.
    #[arg(long)]
    pub pass: PlotPass,
    #[arg(long)]
    pub channel: Channel,
    #[arg(long)]
    pub out: PathBuf,
    /// Step within the pass (1-based). Default: first step with a command.
    #[arg(long)]
    pub step: Option<usize>,
    #[command(flatten)]
    pub segment: SegmentArgs,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            let mut cfg = match &a.config {
                Some(path) => simulate::load_config(path)?,
                None => SessionSimConfig::default(),
            };
            if let Some(seed) = a.seed {
                cfg.master_seed = seed;
            }
            let subjects = simulate::simulate(&cfg, &a.out)?;
            eprintln!("wrote {} subject(s) to {}", subjects.len(), a.out.display());
            Ok(())
        }
        Command::Analyze(a) => {
            let opts = AnalyzeOptions {
                channels: a.channels,
                aggregate: a.aggregate,
                dtw: DtwConfig {
                    local_cost: a.dtw_cost,
                    window: a.dtw_window,
                    normalize: a.dtw_normalize,
                },
                resample: a.segment.resample_len,
                segmentation: a.segment.config(),
                baseline: a.baseline,
                plots: !a.no_plots,
            };
            let report = analyze::analyze(&a.sessions, &a.out, &opts)?;
            for n in &report.notices {
                eprintln!("note: {n}");
            }
            let failed = report.errors().count();
            if failed > 0 {
                eprintln!("{failed} task(s) failed; see errors.csv");
            }
            Ok(())
        }
        Command::Plot(a) => {
            let req = PlotRequest {
                session_dir: a.session,
                subject: a.subject,
                pass: a.pass,
                channel: a.channel,
                step: a.step,
                resample: a.segment.resample_len,
                segmentation: a.segment.config(),
            };
            plot::plot(&req, &a.out)
        }
    }
}
