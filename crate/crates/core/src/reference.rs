//! Per-subject reference ("initial gait") waveform.
//!
//! Every unperturbed step is stretched to a common length by linear
//! interpolation over uniformly spaced fractional indices, and the stretched
//! steps are averaged point by point, separately for each channel.

use thiserror::Error;

use crate::ingest::{Channel, ImuSample, IngestError, Recording};
use crate::segment::StepWaveform;

/// Lower bound on the automatically chosen template length.
pub const MIN_AUTO_LENGTH: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum ReferenceError {
    #[error("cannot resample {from} samples to {to}: both need at least 2")]
    DegenerateInput { from: usize, to: usize },
    #[error("no steps to average")]
    EmptyStepList,
}

/// Resamples `series` to `target_len` points. Output point `i` sits at
/// fractional input index `i·(n−1)/(L−1)`; both endpoints are kept exactly.
pub fn resample_linear(series: &[f64], target_len: usize) -> Result<Vec<f64>, ReferenceError> {
    let n = series.len();
    if n < 2 || target_len < 2 {
        return Err(ReferenceError::DegenerateInput { from: n, to: target_len });
    }
    let span = target_len - 1;
    let mut out = Vec::with_capacity(target_len);
    for i in 0..target_len {
        // Integer split of i·(n−1)/(L−1) keeps the whole part exact.
        let num = i * (n - 1);
        let k = num / span;
        let rem = num % span;
        if rem == 0 {
            out.push(series[k]);
        } else {
            let frac = rem as f64 / span as f64;
            out.push(series[k] + frac * (series[k + 1] - series[k]));
        }
    }
    Ok(out)
}

/// Template length selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetLength {
    /// Rounded median step length, at least [`MIN_AUTO_LENGTH`].
    #[default]
    Auto,
    Fixed(usize),
}

impl std::str::FromStr for TargetLength {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(TargetLength::Auto);
        }
        s.parse::<usize>()
            .ok()
            .filter(|&n| n >= 2)
            .map(TargetLength::Fixed)
            .ok_or_else(|| format!("expected `auto` or an integer >= 2, got `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWaveform {
    /// Indexed by [`Channel::index`], each of the same length.
    pub channels: [Vec<f64>; 6],
    pub source_step_count: usize,
    /// Mean duration of the source steps, seconds.
    pub nominal_cycle_duration: f64,
}

impl ReferenceWaveform {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels[0].is_empty()
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        &self.channels[channel.index()]
    }

    /// Uniform time stamps over `[0, nominal_cycle_duration]`.
    pub fn times(&self) -> Vec<f64> {
        let span = (self.len() - 1) as f64;
        (0..self.len())
            .map(|i| i as f64 * self.nominal_cycle_duration / span)
            .collect()
    }

    /// The template as a recording, for export in the recording CSV format.
    pub fn to_recording(&self) -> Result<Recording, IngestError> {
        let samples = self
            .times()
            .into_iter()
            .enumerate()
            .map(|(i, t)| ImuSample::from_channels(t, Channel::ALL.map(|c| self.channel(c)[i])))
            .collect();
        Recording::new(samples, Default::default())
    }
}

fn auto_length(steps: &[StepWaveform]) -> usize {
    let mut lens: Vec<usize> = steps.iter().map(|s| s.len()).collect();
    lens.sort_unstable();
    let mid = lens.len() / 2;
    let median = if lens.len() % 2 == 1 {
        lens[mid] as f64
    } else {
        (lens[mid - 1] + lens[mid]) as f64 / 2.0
    };
    (median.round() as usize).max(MIN_AUTO_LENGTH)
}

pub fn build_reference(steps: &[StepWaveform], target: TargetLength) -> Result<ReferenceWaveform, ReferenceError> {
    if steps.is_empty() {
        return Err(ReferenceError::EmptyStepList);
    }
    let len = match target {
        TargetLength::Auto => auto_length(steps),
        TargetLength::Fixed(n) => n,
    };
    let count = steps.len() as f64;
    let mut channels: [Vec<f64>; 6] = Default::default();
    for channel in Channel::ALL {
        let mut sum = vec![0.0; len];
        for step in steps {
            let stretched = resample_linear(step.channel(channel), len)?;
            for (acc, v) in sum.iter_mut().zip(stretched) {
                *acc += v;
            }
        }
        channels[channel.index()] = sum.into_iter().map(|s| s / count).collect();
    }
    let nominal_cycle_duration = steps.iter().map(|s| s.duration()).sum::<f64>() / count;
    Ok(ReferenceWaveform {
        channels,
        source_step_count: steps.len(),
        nominal_cycle_duration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step_from(values: &[f64], scale: f64) -> StepWaveform {
        let n = values.len();
        let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        let channels = Channel::ALL.map(|c| values.iter().map(|v| scale * (v + c.index() as f64)).collect());
        StepWaveform {
            start_t: 0.0,
            end_t: n as f64 * 0.01,
            times,
            channels,
        }
    }

    #[test]
    fn ramp_upsamples_exactly() {
        let out = resample_linear(&[0.0, 1.0, 2.0, 3.0], 7).unwrap();
        assert_eq!(out, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn same_length_is_identity() {
        let s = [3.5, -1.25, 7.0, 0.1, 1e-300, 42.0];
        assert_eq!(resample_linear(&s, s.len()).unwrap(), s.to_vec());
    }

    #[test]
    fn degenerate_inputs() {
        assert!(resample_linear(&[1.0], 5).is_err());
        assert!(resample_linear(&[1.0, 2.0], 1).is_err());
        assert_eq!(build_reference(&[], TargetLength::Auto), Err(ReferenceError::EmptyStepList));
    }

    #[test]
    fn single_step_reference_is_resampled_step() {
        let vals: Vec<f64> = (0..80).map(|i| (i as f64 * 0.1).sin()).collect();
        let step = step_from(&vals, 1.0);
        let r = build_reference(std::slice::from_ref(&step), TargetLength::Fixed(64)).unwrap();
        for c in Channel::ALL {
            assert_eq!(r.channel(c), resample_linear(step.channel(c), 64).unwrap().as_slice());
        }
        assert_eq!(r.source_step_count, 1);
    }

    #[test]
    fn identical_steps_average_to_themselves() {
        let vals: Vec<f64> = (0..70).map(|i| (i as f64).sqrt()).collect();
        let step = step_from(&vals, 1.0);
        let r = build_reference(&[step.clone(), step.clone()], TargetLength::Fixed(70)).unwrap();
        for c in Channel::ALL {
            assert_eq!(r.channel(c), step.channel(c));
        }
    }

    #[test]
    fn auto_length_uses_median_with_floor() {
        let short: Vec<StepWaveform> = [10, 12, 30].iter().map(|&n| step_from(&vec![1.0; n], 1.0)).collect();
        assert_eq!(build_reference(&short, TargetLength::Auto).unwrap().len(), MIN_AUTO_LENGTH);
        let long: Vec<StepWaveform> = [90, 101, 120, 99].iter().map(|&n| step_from(&vec![1.0; n], 1.0)).collect();
        // median of 90, 99, 101, 120 is 100
        assert_eq!(build_reference(&long, TargetLength::Auto).unwrap().len(), 100);
    }

    #[test]
    fn export_spans_nominal_cycle() {
        let step = step_from(&[1.0, 2.0, 3.0, 4.0, 5.0], 1.0);
        let r = build_reference(&[step], TargetLength::Fixed(9)).unwrap();
        let rec = r.to_recording().unwrap();
        assert_eq!(rec.len(), 9);
        assert_eq!(rec.start_t(), 0.0);
        assert!((rec.end_t() - r.nominal_cycle_duration).abs() < 1e-15);
    }

    #[test]
    fn target_length_parsing() {
        assert_eq!("auto".parse::<TargetLength>().unwrap(), TargetLength::Auto);
        assert_eq!("128".parse::<TargetLength>().unwrap(), TargetLength::Fixed(128));
        assert!("1".parse::<TargetLength>().is_err());
        assert!("x".parse::<TargetLength>().is_err());
    }

    fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0..100.0f64, len)
    }

    proptest! {
        #[test]
        fn endpoints_preserved(s in series(2..60), l in 2usize..200) {
            let out = resample_linear(&s, l).unwrap();
            prop_assert_eq!(out.len(), l);
            prop_assert_eq!(out[0], s[0]);
            prop_assert_eq!(out[l - 1], s[s.len() - 1]);
        }

        #[test]
        fn ramps_resample_exactly(n in 2usize..300, l in 2usize..300, a in -50.0..50.0f64, b in -5.0..5.0f64) {
            let s: Vec<f64> = (0..n).map(|i| a + b * i as f64).collect();
            let out = resample_linear(&s, l).unwrap();
            for (i, v) in out.iter().enumerate() {
                let x = i as f64 * (n - 1) as f64 / (l - 1) as f64;
                prop_assert!((v - (a + b * x)).abs() < 1e-12 * (1.0 + (a + b * x).abs()));
            }
        }

        #[test]
        fn up_and_down_error_bounded_by_second_difference(s in series(3..40)) {
            let n = s.len();
            let back = resample_linear(&resample_linear(&s, 2 * n).unwrap(), n).unwrap();
            let bound = s.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).fold(0.0, f64::max);
            let err = s.iter().zip(&back).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(err <= bound + 1e-9, "err {} bound {}", err, bound);
        }

        #[test]
        fn reference_is_linear_and_order_free(
            raw in prop::collection::vec(series(5..40), 1..6),
            a in -3.0..3.0f64,
            l in 2usize..60,
        ) {
            let steps: Vec<StepWaveform> = raw.iter().map(|v| step_from(v, 1.0)).collect();
            let scaled: Vec<StepWaveform> = raw.iter().map(|v| step_from(v, a)).collect();
            let mut reversed = steps.clone();
            reversed.reverse();
            let r = build_reference(&steps, TargetLength::Fixed(l)).unwrap();
            let rs = build_reference(&scaled, TargetLength::Fixed(l)).unwrap();
            let rr = build_reference(&reversed, TargetLength::Fixed(l)).unwrap();
            for c in Channel::ALL {
                for i in 0..l {
                    let x = r.channel(c)[i];
                    prop_assert!((rs.channel(c)[i] - a * x).abs() <= 1e-9 * (1.0 + x.abs()));
                    prop_assert!((rr.channel(c)[i] - x).abs() <= 1e-12 * (1.0 + x.abs()));
                }
                let first_mean = steps.iter().map(|s| s.channel(c)[0]).sum::<f64>() / steps.len() as f64;
                let last_mean = steps.iter().map(|s| s.channel(c)[s.len() - 1]).sum::<f64>() / steps.len() as f64;
                prop_assert!((r.channel(c)[0] - first_mean).abs() <= 1e-12 * (1.0 + first_mean.abs()));
                prop_assert!((r.channel(c)[l - 1] - last_mean).abs() <= 1e-12 * (1.0 + last_mean.abs()));
            }
        }
    }
}
