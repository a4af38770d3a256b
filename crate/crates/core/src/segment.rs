//! Heel-strike detection and step segmentation.
//!
//! Strikes are found on the sagittal angular velocity (`AngY`): each swing
//! shows a large positive peak, and the heel strike is the first descending
//! zero crossing after it. The detector snaps the strike to whichever of the
//! two samples bracketing the crossing is closer to zero, so detected times
//! are always sample timestamps.

use thiserror::Error;

use crate::ingest::{Channel, Recording};

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("fewer than two heel strikes detected")]
    NoStepsDetected,
    #[error("recording lasts {duration} s, not longer than the minimum step duration {min} s")]
    RecordingTooShort { duration: f64, min: f64 },
    #[error("invalid strike list: {0}")]
    InvalidStrikes(String),
    #[error("{remaining} step(s) left after trimming {trim} from each end of {total}")]
    TooFewSteps { total: usize, trim: usize, remaining: usize },
    #[error("step {index} holds {samples} sample(s); at least 2 are needed")]
    DegenerateStep { index: usize, samples: usize },
    #[error("invalid segmentation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationConfig {
    /// AngY level (deg/s) a swing peak must exceed.
    pub swing_peak_threshold: f64,
    /// Seconds; shorter strike intervals are treated as artifacts.
    pub min_step_duration: f64,
    /// Seconds; longer strike intervals break the step sequence.
    pub max_step_duration: f64,
    /// Steps dropped at each end of a recording (gait initiation/termination).
    pub trim_steps: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            swing_peak_threshold: 50.0,
            min_step_duration: 0.4,
            max_step_duration: 2.0,
            trim_steps: 1,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !self.swing_peak_threshold.is_finite() || self.swing_peak_threshold <= 0.0 {
            return Err(SegmentError::InvalidConfig(
                "swing_peak_threshold must be positive".into(),
            ));
        }
        if !(self.min_step_duration > 0.0 && self.min_step_duration < self.max_step_duration) {
            return Err(SegmentError::InvalidConfig(format!(
                "need 0 < min_step_duration ({}) < max_step_duration ({})",
                self.min_step_duration, self.max_step_duration
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DetectorPhase {
    /// Waiting for AngY to rise above the swing threshold.
    Idle,
    /// In swing; waiting for the descending zero crossing.
    Swing,
}

/// Causal heel-strike detector, one sample at a time. A strike is reported
/// at most one sample after it occurs.
#[derive(Debug, Clone)]
pub struct StrikeDetector {
    threshold: f64,
    refractory: f64,
    phase: DetectorPhase,
    prev: Option<(f64, f64)>,
    last_strike: Option<f64>,
}

impl StrikeDetector {
    /// `refractory` is the minimum spacing between reported strikes; closer
    /// candidates are dropped.
    pub fn new(threshold: f64, refractory: f64) -> Self {
        StrikeDetector {
            threshold,
            refractory,
            phase: DetectorPhase::Idle,
            prev: None,
            last_strike: None,
        }
    }

    pub fn from_config(cfg: &SegmentationConfig) -> Self {
        Self::new(cfg.swing_peak_threshold, cfg.min_step_duration)
    }

    /// Feeds one AngY sample; returns the strike time when one completes.
    pub fn push(&mut self, t: f64, ang_y: f64) -> Option<f64> {
        let mut strike = None;
        match self.phase {
            DetectorPhase::Idle => {
                if ang_y > self.threshold {
                    self.phase = DetectorPhase::Swing;
                }
            }
            DetectorPhase::Swing => {
                if ang_y <= 0.0 {
                    self.phase = DetectorPhase::Idle;
                    let candidate = match self.prev {
                        Some((pt, pv)) if pv.abs() <= ang_y.abs() => pt,
                        _ => t,
                    };
                    let spaced = self
                        .last_strike
                        .is_none_or(|last| candidate - last >= self.refractory);
                    if spaced {
                        self.last_strike = Some(candidate);
                        strike = Some(candidate);
                    }
                }
            }
        }
        self.prev = Some((t, ang_y));
        strike
    }
}

/// Finds heel strikes in a recording. Intervals shorter than the minimum
/// step duration are removed by the detector's refractory period; an
/// interval longer than the maximum splits the strike sequence, and the
/// longest unbroken run (earliest on ties) is returned.
pub fn detect_heel_strikes(rec: &Recording, cfg: &SegmentationConfig) -> Result<Vec<f64>, SegmentError> {
    cfg.validate()?;
    if rec.duration() <= cfg.min_step_duration {
        return Err(SegmentError::RecordingTooShort {
            duration: rec.duration(),
            min: cfg.min_step_duration,
        });
    }
    let mut detector = StrikeDetector::from_config(cfg);
    let candidates: Vec<f64> = rec
        .samples()
        .iter()
        .filter_map(|s| detector.push(s.t, s.get(Channel::AngY)))
        .collect();

    let mut best = 0..0;
    let mut run_start = 0;
    for i in 0..candidates.len() {
        let breaks = i + 1 == candidates.len() || candidates[i + 1] - candidates[i] > cfg.max_step_duration;
        if breaks {
            if i + 1 - run_start > best.len() {
                best = run_start..i + 1;
            }
            run_start = i + 1;
        }
    }
    if best.len() < 2 {
        return Err(SegmentError::NoStepsDetected);
    }
    Ok(candidates[best].to_vec())
}

/// Samples of one gait cycle, from one heel strike up to (not including) the next.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWaveform {
    pub start_t: f64,
    pub end_t: f64,
    pub times: Vec<f64>,
    /// Indexed by [`Channel::index`].
    pub channels: [Vec<f64>; 6],
}

impl StepWaveform {
    pub fn channel(&self, channel: Channel) -> &[f64] {
        &self.channels[channel.index()]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.end_t - self.start_t
    }
}

/// Cuts a recording at the given strikes, then drops `cfg.trim_steps` steps
/// from each end. Samples are kept as recorded.
pub fn split_steps(
    rec: &Recording,
    strikes: &[f64],
    cfg: &SegmentationConfig,
) -> Result<Vec<StepWaveform>, SegmentError> {
    if strikes.len() < 2 {
        return Err(SegmentError::InvalidStrikes(format!(
            "need at least 2 strikes, got {}",
            strikes.len()
        )));
    }
    if strikes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SegmentError::InvalidStrikes("strikes must be strictly increasing".into()));
    }
    if strikes[0] < rec.start_t() || strikes[strikes.len() - 1] > rec.end_t() {
        return Err(SegmentError::InvalidStrikes(format!(
            "strikes span [{}, {}] outside recording [{}, {}]",
            strikes[0],
            strikes[strikes.len() - 1],
            rec.start_t(),
            rec.end_t()
        )));
    }

    let total = strikes.len() - 1;
    let trim = cfg.trim_steps;
    let remaining = total.saturating_sub(2 * trim);
    if remaining < 1 {
        return Err(SegmentError::TooFewSteps { total, trim, remaining });
    }

    let samples = rec.samples();
    let mut steps = Vec::with_capacity(remaining);
    for (index, pair) in strikes.windows(2).enumerate().skip(trim).take(remaining) {
        let (start_t, end_t) = (pair[0], pair[1]);
        let lo = samples.partition_point(|s| s.t < start_t);
        let hi = samples.partition_point(|s| s.t < end_t);
        let slice = &samples[lo..hi];
        if slice.len() < 2 {
            return Err(SegmentError::DegenerateStep {
                index,
                samples: slice.len(),
            });
        }
        let channels = Channel::ALL.map(|c| slice.iter().map(|s| s.get(c)).collect());
        steps.push(StepWaveform {
            start_t,
            end_t,
            times: slice.iter().map(|s| s.t).collect(),
            channels,
        });
    }
    Ok(steps)
}

/// Strikes and retained steps of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub strikes: Vec<f64>,
    pub steps: Vec<StepWaveform>,
}

pub fn segment_recording(rec: &Recording, cfg: &SegmentationConfig) -> Result<Segmentation, SegmentError> {
    let strikes = detect_heel_strikes(rec, cfg)?;
    let steps = split_steps(rec, &strikes, cfg)?;
    Ok(Segmentation { strikes, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ImuSample, Leg};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// AngY = -200 sin(2π t / period): descending zero crossings at multiples
    /// of the period, swing peak at 3/4 period.
    fn sine_walk(period: f64, rate: f64, start: f64, end: f64, offset: f64) -> Recording {
        let n = ((end - start) * rate).round() as usize + 1;
        let samples = (0..n)
            .map(|i| {
                let t = start + i as f64 / rate;
                let v = -200.0 * (2.0 * PI * t / period).sin();
                ImuSample::from_channels(t + offset, [i as f64, 0.0, 9.81, 0.0, v, 0.0])
            })
            .collect();
        Recording::new(samples, Leg::Right).unwrap()
    }

    #[test]
    fn detects_regular_strikes() {
        let rec = sine_walk(1.0, 100.0, -0.5, 5.2, 0.0);
        let strikes = detect_heel_strikes(&rec, &SegmentationConfig::default()).unwrap();
        assert_eq!(strikes.len(), 6);
        for (k, s) in strikes.iter().enumerate() {
            assert!((s - k as f64).abs() <= 0.01, "strike {k} at {s}");
        }
    }

    #[test]
    fn constant_zero_has_no_steps() {
        let samples = (0..500)
            .map(|i| ImuSample::from_channels(i as f64 * 0.01, [0.0; 6]))
            .collect();
        let rec = Recording::new(samples, Leg::Left).unwrap();
        assert_eq!(
            detect_heel_strikes(&rec, &SegmentationConfig::default()),
            Err(SegmentError::NoStepsDetected)
        );
    }

    #[test]
    fn too_short_recording() {
        let rec = sine_walk(1.0, 100.0, 0.0, 0.3, 0.0);
        assert!(matches!(
            detect_heel_strikes(&rec, &SegmentationConfig::default()),
            Err(SegmentError::RecordingTooShort { .. })
        ));
    }

    #[test]
    fn close_candidates_are_dropped() {
        let mut det = StrikeDetector::new(50.0, 0.4);
        let trace = [(0.0, 100.0), (0.01, -5.0), (0.1, 80.0), (0.11, -1.0), (1.0, 90.0), (1.01, -3.0)];
        let got: Vec<f64> = trace.iter().filter_map(|&(t, v)| det.push(t, v)).collect();
        assert_eq!(got, vec![0.01, 1.01]);
    }

    #[test]
    fn long_gap_keeps_longest_run() {
        // Swings every second, except a 3 s pause after the second strike.
        let mut det_input = Vec::new();
        let strikes_true = [0.0, 1.0, 4.0, 5.0, 6.0, 7.0];
        for s in strikes_true {
            det_input.push((s - 0.2, 120.0));
            det_input.push((s, -10.0));
        }
        let samples: Vec<_> = det_input
            .iter()
            .map(|&(t, v)| ImuSample::from_channels(t, [0.0, 0.0, 0.0, 0.0, v, 0.0]))
            .collect();
        let rec = Recording::new(samples, Leg::Right).unwrap();
        let strikes = detect_heel_strikes(&rec, &SegmentationConfig::default()).unwrap();
        assert_eq!(strikes, vec![4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn split_counts() {
        let rec = sine_walk(1.0, 100.0, -0.5, 12.5, 0.0);
        let strikes: Vec<f64> = (0..=12).map(|k| k as f64).collect();
        let cfg = SegmentationConfig::default();
        assert_eq!(split_steps(&rec, &strikes, &cfg).unwrap().len(), 10);

        let cfg0 = SegmentationConfig {
            trim_steps: 0,
            ..Default::default()
        };
        let one = split_steps(&rec, &[1.0, 2.0], &cfg0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].start_t, one[0].end_t), (1.0, 2.0));
        assert!(one[0].times.iter().all(|&t| (1.0..2.0).contains(&t)));

        assert!(matches!(
            split_steps(&rec, &[1.0, 2.0, 3.0], &cfg),
            Err(SegmentError::TooFewSteps { remaining: 0, .. })
        ));
    }

    #[test]
    fn split_rejects_bad_strikes() {
        let rec = sine_walk(1.0, 100.0, 0.0, 3.0, 0.0);
        let cfg = SegmentationConfig {
            trim_steps: 0,
            ..Default::default()
        };
        assert!(split_steps(&rec, &[1.0, 1.0], &cfg).is_err());
        assert!(split_steps(&rec, &[2.0, 1.0], &cfg).is_err());
        assert!(split_steps(&rec, &[1.0, 9.0], &cfg).is_err());
        assert!(matches!(
            split_steps(&rec, &[1.0, 1.005], &cfg),
            Err(SegmentError::DegenerateStep { .. })
        ));
    }

    proptest! {
        #[test]
        fn untrimmed_steps_tile_the_strike_span(
            picks in prop::collection::btree_set(1usize..700, 2..12)
        ) {
            let rec = sine_walk(1.0, 100.0, 0.0, 7.2, 0.0);
            let times = rec.times();
            let mut strikes: Vec<f64> = picks.iter().map(|&i| times[i]).collect();
            strikes.dedup();
            // keep steps at least 2 samples long
            let mut kept = vec![strikes[0]];
            for s in strikes.into_iter().skip(1) {
                if s - kept[kept.len() - 1] > 0.015 {
                    kept.push(s);
                }
            }
            prop_assume!(kept.len() >= 2);
            let cfg = SegmentationConfig { trim_steps: 0, ..Default::default() };
            let steps = split_steps(&rec, &kept, &cfg).unwrap();
            let joined: Vec<f64> = steps.iter().flat_map(|s| s.times.iter().copied()).collect();
            let expected: Vec<f64> = times
                .iter()
                .copied()
                .filter(|&t| t >= kept[0] && t < kept[kept.len() - 1])
                .collect();
            prop_assert_eq!(joined, expected);
        }

        #[test]
        fn detection_is_translation_equivariant(shift in -1000i32..1000, period_ms in 800u32..1300) {
            // Dyadic time grid keeps every shifted timestamp exact.
            let delta = shift as f64 / 8.0;
            let period = period_ms as f64 / 1000.0;
            let rate = 128.0;
            let base = sine_walk(period, rate, -0.5, 6.0, 0.0);
            let moved = sine_walk(period, rate, -0.5, 6.0, delta);
            let cfg = SegmentationConfig::default();
            let a = detect_heel_strikes(&base, &cfg).unwrap();
            let b = detect_heel_strikes(&moved, &cfg).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x + delta, *y);
            }
        }
    }
}
