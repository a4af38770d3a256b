//! Synthetic walker and closed-loop session simulator.
//!
//! A pass is a sequence of gait cycles whose per-channel waveform is a sum
//! of harmonics of the cycle phase, with per-cycle duration jitter (each
//! cycle's time base is stretched, so the template stays phase-coherent) and
//! additive Gaussian noise. The `AngY` template must have its descending zero
//! crossing at phase 0, which makes every cycle boundary a heel strike.
//!
//! Intervention passes run the full loop sample by sample: the streaming
//! strike detector feeds the [`Controller`], each command opens a muscle
//! pair of the emulated [`Boot`] and adds a damped-sinusoid response to the
//! signal from `onset + latency` on.
//!
//! Seeds for subjects, passes and controllers are derived from the master
//! seed by folding tags through SplitMix64 (see [`derive_seed`]).

use std::f64::consts::PI;
use std::ops::{Index, IndexMut};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{CommandRecord, Controller, ControllerConfig, ControllerError, PerturbationCommand, PgmPair};
use crate::ingest::{self, Channel, ImuSample, IngestError, Leg, Recording, Session};
use crate::segment::{SegmentationConfig, StrikeDetector};

/// Phase of the virtual cycle at which a pass starts; the swing peak before
/// the first strike is then part of the recording.
const LEAD_IN_PHASE: f64 = 0.5;
/// Fraction of a cycle recorded after the last strike.
const LEAD_OUT_PHASE: f64 = 0.25;
/// Response transients are cut off this many decay constants after they start.
const TRANSIENT_SPAN: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("command at {onset} s lies outside the recording [{start}, {end}]")]
    CommandOutOfRange { onset: f64, start: f64, end: f64 },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// One value per sensor channel.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerChannel<T: Default> {
    pub acc_x: T,
    pub acc_y: T,
    pub acc_z: T,
    pub ang_x: T,
    pub ang_y: T,
    pub ang_z: T,
}

impl<T: Default> PerChannel<T> {
    pub fn from_fn(mut f: impl FnMut(Channel) -> T) -> Self {
        PerChannel {
            acc_x: f(Channel::AccX),
            acc_y: f(Channel::AccY),
            acc_z: f(Channel::AccZ),
            ang_x: f(Channel::AngX),
            ang_y: f(Channel::AngY),
            ang_z: f(Channel::AngZ),
        }
    }
}

impl<T: Default> Index<Channel> for PerChannel<T> {
    type Output = T;

    fn index(&self, c: Channel) -> &T {
        match c {
            Channel::AccX => &self.acc_x,
            Channel::AccY => &self.acc_y,
            Channel::AccZ => &self.acc_z,
            Channel::AngX => &self.ang_x,
            Channel::AngY => &self.ang_y,
            Channel::AngZ => &self.ang_z,
        }
    }
}

impl<T: Default> IndexMut<Channel> for PerChannel<T> {
    fn index_mut(&mut self, c: Channel) -> &mut T {
        match c {
            Channel::AccX => &mut self.acc_x,
            Channel::AccY => &mut self.acc_y,
            Channel::AccZ => &mut self.acc_z,
            Channel::AngX => &mut self.ang_x,
            Channel::AngY => &mut self.ang_y,
            Channel::AngZ => &mut self.ang_z,
        }
    }
}

/// `amplitude · sin(2π · order · phase + phase_offset)`; order 0 gives a
/// constant `amplitude · sin(phase_offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub order: u32,
    pub amplitude: f64,
    pub phase: f64,
}

impl Harmonic {
    pub fn new(order: u32, amplitude: f64, phase: f64) -> Self {
        Harmonic { order, amplitude, phase }
    }

    #[inline]
    pub fn eval(&self, cycle_phase: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.order as f64 * cycle_phase + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitProfile {
    /// Seconds.
    pub cycle_duration_mean: f64,
    /// Standard deviation of the cycle duration, as a fraction of the mean.
    pub cycle_duration_jitter: f64,
    pub harmonics: PerChannel<Vec<Harmonic>>,
    pub noise_sigma: PerChannel<f64>,
}

impl Default for GaitProfile {
    /// A heel-sensor-like walker at about 57 cycles per minute.
    fn default() -> Self {
        let mut harmonics: PerChannel<Vec<Harmonic>> = PerChannel::default();
        harmonics.acc_x = vec![Harmonic::new(1, 4.0, 0.3), Harmonic::new(2, 2.0, 1.1)];
        harmonics.acc_y = vec![Harmonic::new(1, 1.5, 0.7)];
        harmonics.acc_z = vec![
            Harmonic::new(0, 9.81, PI / 2.0),
            Harmonic::new(1, 3.0, 2.0),
            Harmonic::new(3, 1.0, 0.4),
        ];
        harmonics.ang_x = vec![Harmonic::new(1, 20.0, 0.5), Harmonic::new(2, 8.0, 1.5)];
        // -200 sin θ - 60 sin 2θ = -sin θ (200 + 120 cos θ): zero only at θ = 0, π.
        harmonics.ang_y = vec![Harmonic::new(1, 200.0, PI), Harmonic::new(2, 60.0, PI)];
        harmonics.ang_z = vec![Harmonic::new(1, 15.0, 2.5)];
        let noise_sigma = PerChannel::from_fn(|c| if c.index() < 3 { 0.15 } else { 3.0 });
        GaitProfile {
            cycle_duration_mean: 1.05,
            cycle_duration_jitter: 0.02,
            harmonics,
            noise_sigma,
        }
    }
}

impl GaitProfile {
    /// Noise-free template value at cycle phase `phase` (in `[0, 1)`).
    pub fn template(&self, channel: Channel, phase: f64) -> f64 {
        self.harmonics[channel].iter().map(|h| h.eval(phase)).sum()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.cycle_duration_mean > 0.0 && self.cycle_duration_mean.is_finite()) {
            return Err(SimError::InvalidConfig("cycle_duration_mean must be positive".into()));
        }
        if !(self.cycle_duration_jitter >= 0.0 && self.cycle_duration_jitter.is_finite()) {
            return Err(SimError::InvalidConfig("cycle_duration_jitter must be >= 0".into()));
        }
        if !self.harmonics.ang_y.iter().any(|h| h.order > 0 && h.amplitude != 0.0) {
            return Err(SimError::InvalidConfig(
                "ang_y needs a non-zero harmonic for heel strikes to be detectable".into(),
            ));
        }
        for c in Channel::ALL {
            let s = self.noise_sigma[c];
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SimError::InvalidConfig(format!("noise_sigma.{c} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Stand-in for the wearer's reaction to a muscle pulse: a damped sinusoid
/// added to each channel, positive for forward and negative for backward
/// pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseModel {
    /// Seconds from valve opening to the start of the response.
    pub latency: f64,
    pub amplitude: PerChannel<f64>,
    /// Hz.
    pub frequency: f64,
    /// Decay time constant, seconds.
    pub decay: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        let mut amplitude = PerChannel::default();
        amplitude.ang_y = 40.0;
        ResponseModel {
            latency: 0.05,
            amplitude,
            frequency: 3.0,
            decay: 0.15,
        }
    }
}

impl ResponseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(SimError::InvalidConfig("response decay must be positive".into()));
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err(SimError::InvalidConfig("response latency must be >= 0".into()));
        }
        if !(self.frequency >= 0.0 && self.frequency.is_finite()) {
            return Err(SimError::InvalidConfig("response frequency must be >= 0".into()));
        }
        if Channel::ALL.iter().any(|&c| !self.amplitude[c].is_finite()) {
            return Err(SimError::InvalidConfig("response amplitudes must be finite".into()));
        }
        Ok(())
    }

    /// Unsigned response on `channel`, `elapsed` seconds after it started.
    /// Zero before the start and after the cut-off.
    pub fn transient(&self, channel: Channel, elapsed: f64) -> f64 {
        if !(0.0..=TRANSIENT_SPAN * self.decay).contains(&elapsed) {
            return 0.0;
        }
        self.amplitude[channel] * (-elapsed / self.decay).exp() * (2.0 * PI * self.frequency * elapsed).sin()
    }

    /// Adds the responses of `commands` (in order) to one sample.
    fn add_to(&self, sample: &mut ImuSample, commands: &[PerturbationCommand]) {
        for cmd in commands {
            let start = cmd.onset_t + self.latency;
            let elapsed = sample.t - start;
            if !(0.0..=TRANSIENT_SPAN * self.decay).contains(&elapsed) {
                continue;
            }
            for c in Channel::ALL {
                if self.amplitude[c] != 0.0 {
                    *sample.get_mut(c) += cmd.direction.sign() * self.transient(c, elapsed);
                }
            }
        }
    }
}

/// Superimposes the response to each command onto a recording. Samples
/// outside every response window are returned unchanged.
pub fn apply_response(rec: &Recording, commands: &[PerturbationCommand], model: &ResponseModel) -> Result<Recording, SimError> {
    model.validate()?;
    for cmd in commands {
        if !(cmd.onset_t >= rec.start_t() && cmd.onset_t <= rec.end_t()) {
            return Err(SimError::CommandOutOfRange {
                onset: cmd.onset_t,
                start: rec.start_t(),
                end: rec.end_t(),
            });
        }
    }
    let mut samples = rec.samples().to_vec();
    for s in &mut samples {
        model.add_to(s, commands);
    }
    let mut out = Recording::new(samples, rec.leg)?;
    out.sample_rate_hint = rec.sample_rate_hint;
    Ok(out)
}

/// Emulated boot: two front and two rear pneumatic muscles.
#[derive(Debug, Clone, Default)]
pub struct Boot {
    pulses: Vec<(PgmPair, f64, f64)>,
}

impl Boot {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens the valve of the command's pair for its duration.
    pub fn fire(&mut self, cmd: &PerturbationCommand) {
        self.pulses.push((cmd.direction.pgm_pair(), cmd.onset_t, cmd.end_t()));
    }

    /// Pressurization of muscles 0..4 at time `t`.
    pub fn muscles(&self, t: f64) -> [bool; 4] {
        let mut out = [false; 4];
        for &(pair, on, off) in &self.pulses {
            if on <= t && t < off {
                for m in pair.muscles() {
                    out[m] = true;
                }
            }
        }
        out
    }
}

/// Muscle state sampled at every control tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValveTrace {
    pub ticks: Vec<(f64, [bool; 4])>,
}

impl ValveTrace {
    /// Contiguous on-intervals `[first on tick, first off tick)` of a pair.
    /// An interval still open at the last tick ends at that tick.
    pub fn on_intervals(&self, pair: PgmPair) -> Vec<(f64, f64)> {
        let m = pair.muscles()[0];
        let mut out = Vec::new();
        let mut start = None;
        for &(t, state) in &self.ticks {
            match (start, state[m]) {
                (None, true) => start = Some(t),
                (Some(s), false) => {
                    out.push((s, t));
                    start = None;
                }
                _ => {}
            }
        }
        if let (Some(s), Some(&(t, _))) = (start, self.ticks.last()) {
            out.push((s, t));
        }
        out
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from `master` and a path of tags:
/// `s₀ = splitmix(master)`, `sₖ₊₁ = splitmix(sₖ ⊕ tagₖ)`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(master), |s, &t| splitmix64(s ^ t))
}

const TAG_PROFILE: u64 = 1;
const TAG_PASS: u64 = 2;
const TAG_CONTROLLER: u64 = 3;

/// Generates `n_cycles` cycles at `rate` Hz. Returns the recording and the
/// `n_cycles + 1` true heel-strike times.
pub fn generate_pass<R: Rng + ?Sized>(profile: &GaitProfile, n_cycles: usize, rng: &mut R, rate: f64) -> (Recording, Vec<f64>) {
    assert!(n_cycles >= 1, "a pass needs at least one cycle");
    assert!(rate > 0.0, "sample rate must be positive");
    let mean = profile.cycle_duration_mean;
    let jitter = profile.cycle_duration_jitter;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut duration = || {
        let d = mean * (1.0 + jitter * unit.sample(rng));
        d.clamp(0.5 * mean, 1.5 * mean)
    };

    // Virtual lead-in cycle, the walked cycles, and a virtual lead-out cycle.
    let lead_in = duration();
    let cycles: Vec<f64> = (0..n_cycles).map(|_| duration()).collect();
    let lead_out = duration();

    let first = LEAD_IN_PHASE * lead_in;
    let mut strikes = Vec::with_capacity(n_cycles + 1);
    strikes.push(first);
    for d in &cycles {
        strikes.push(strikes[strikes.len() - 1] + d);
    }
    let last = strikes[n_cycles];
    let end = last + LEAD_OUT_PHASE * lead_out;

    let noise: Vec<Option<Normal<f64>>> = Channel::ALL
        .iter()
        .map(|&c| (profile.noise_sigma[c] > 0.0).then(|| Normal::new(0.0, profile.noise_sigma[c]).expect("finite sigma")))
        .collect();

    let n_samples = (end * rate).floor() as usize + 1;
    let mut samples = Vec::with_capacity(n_samples);
    let mut seg = 0; // index of the strike that opened the current cycle
    for i in 0..n_samples {
        let t = i as f64 / rate;
        let phase = if t < first {
            LEAD_IN_PHASE + t / lead_in
        } else {
            while seg < n_cycles && t >= strikes[seg + 1] {
                seg += 1;
            }
            let dur = if seg < n_cycles { cycles[seg] } else { lead_out };
            (t - strikes[seg]) / dur
        };
        let values = Channel::ALL.map(|c| {
            let clean = profile.template(c, phase);
            match &noise[c.index()] {
                Some(dist) => clean + dist.sample(rng),
                None => clean,
            }
        });
        samples.push(ImuSample::from_channels(t, values));
    }
    let rec = Recording::new(samples, Leg::default())
        .expect("generated samples are finite and ordered")
        .with_sample_rate_hint(rate);
    (rec, strikes)
}

/// Everything observed while running one intervention pass.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionPass {
    /// The perturbed recording.
    pub recording: Recording,
    pub true_strikes: Vec<f64>,
    /// Strikes reported online by the streaming detector.
    pub detected_strikes: Vec<f64>,
    pub commands: Vec<CommandRecord>,
    pub valves: ValveTrace,
}

/// Runs one pass through the closed loop: generator → online strike
/// detection → controller → boot → response. The controller ticks once per
/// sample.
pub fn simulate_intervention_pass<R: Rng + ?Sized>(
    profile: &GaitProfile,
    n_cycles: usize,
    rate: f64,
    controller: ControllerConfig,
    response: &ResponseModel,
    detector_cfg: &SegmentationConfig,
    rng: &mut R,
) -> Result<InterventionPass, SimError> {
    response.validate()?;
    let (clean, true_strikes) = generate_pass(profile, n_cycles, rng, rate);
    let mut ctl = Controller::new(controller)?;
    let mut detector = StrikeDetector::from_config(detector_cfg);
    let mut boot = Boot::new();
    let mut commands: Vec<CommandRecord> = Vec::new();
    let mut issued: Vec<PerturbationCommand> = Vec::new();
    let mut detected_strikes = Vec::new();
    let mut valves = ValveTrace::default();

    for sample in clean.samples() {
        let mut seen = *sample;
        response.add_to(&mut seen, &issued);
        let strike = detector.push(seen.t, seen.get(Channel::AngY));
        if let Some(s) = strike {
            detected_strikes.push(s);
        }
        if let Some(cmd) = ctl.tick(strike, seen.t)? {
            boot.fire(&cmd.command());
            issued.push(cmd.command());
            commands.push(cmd);
        }
        valves.ticks.push((seen.t, boot.muscles(seen.t)));
    }

    let recording = apply_response(&clean, &issued, response)?;
    Ok(InterventionPass {
        recording,
        true_strikes,
        detected_strikes,
        commands,
        valves,
    })
}

/// Ranges from which each subject's walker is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileRandomization {
    /// Uniform range of the subject's mean cycle duration, seconds.
    pub cycle_duration_range: [f64; 2],
    /// Uniform range of the per-harmonic amplitude scale.
    pub amplitude_scale_range: [f64; 2],
    /// Half-width (radians) of the uniform offset added to harmonic phases.
    /// `ang_y` phases are never shifted, so heel strikes stay at phase 0.
    pub phase_jitter: f64,
}

impl Default for ProfileRandomization {
    fn default() -> Self {
        ProfileRandomization {
            cycle_duration_range: [0.95, 1.15],
            amplitude_scale_range: [0.85, 1.15],
            phase_jitter: 0.2,
        }
    }
}

impl ProfileRandomization {
    fn validate(&self) -> Result<(), SimError> {
        let [lo, hi] = self.cycle_duration_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(SimError::InvalidConfig("cycle_duration_range must satisfy 0 < lo <= hi".into()));
        }
        let [lo, hi] = self.amplitude_scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(SimError::InvalidConfig("amplitude_scale_range must satisfy 0 < lo <= hi".into()));
        }
        if !(self.phase_jitter >= 0.0 && self.phase_jitter.is_finite()) {
            return Err(SimError::InvalidConfig("phase_jitter must be >= 0".into()));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, base: &GaitProfile, rng: &mut R) -> GaitProfile {
        let uniform = |rng: &mut R, [lo, hi]: [f64; 2]| if lo == hi { lo } else { rng.random_range(lo..hi) };
        let mut profile = base.clone();
        profile.cycle_duration_mean = uniform(rng, self.cycle_duration_range);
        for c in Channel::ALL {
            for h in &mut profile.harmonics[c] {
                h.amplitude *= uniform(rng, self.amplitude_scale_range);
                if c != Channel::AngY && self.phase_jitter > 0.0 {
                    h.phase += rng.random_range(-self.phase_jitter..self.phase_jitter);
                }
            }
        }
        profile
    }
}

/// Cohort simulation settings. Each subject walks one pre pass,
/// `with_passes` intervention passes and one post pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSimConfig {
    pub subjects: usize,
    pub with_passes: usize,
    pub cycles_per_pass: usize,
    /// Hz.
    pub sample_rate: f64,
    pub leg: Leg,
    pub master_seed: u64,
    pub profile: GaitProfile,
    pub randomization: ProfileRandomization,
    /// `rng_seed` is mixed into each pass's derived controller seed.
    pub controller: ControllerConfig,
    pub response: ResponseModel,
}

impl Default for SessionSimConfig {
    fn default() -> Self {
        SessionSimConfig {
            subjects: 10,
            with_passes: ingest::DEFAULT_WITH_PASSES,
            cycles_per_pass: 10,
            sample_rate: 100.0,
            leg: Leg::Right,
            master_seed: 2024,
            profile: GaitProfile::default(),
            randomization: ProfileRandomization::default(),
            controller: ControllerConfig::default(),
            response: ResponseModel::default(),
        }
    }
}

impl SessionSimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.subjects < 1 || self.with_passes < 1 || self.cycles_per_pass < 1 {
            return Err(SimError::InvalidConfig(
                "subjects, with_passes and cycles_per_pass must be >= 1".into(),
            ));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(SimError::InvalidConfig("sample_rate must be positive".into()));
        }
        self.profile.validate()?;
        self.randomization.validate()?;
        self.controller.validate()?;
        self.response.validate()
    }

    pub fn subject_id(&self, index: usize) -> String {
        format!("S{:02}", index + 1)
    }
}

/// Ground truth kept alongside a simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectTruth {
    pub profile: GaitProfile,
    pub pre_strikes: Vec<f64>,
    pub post_strikes: Vec<f64>,
    pub with_passes: Vec<PassTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassTruth {
    pub true_strikes: Vec<f64>,
    pub detected_strikes: Vec<f64>,
    pub valves: ValveTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSubject {
    pub session: Session,
    pub truth: SubjectTruth,
}

/// Simulates one subject. Pure function of `(cfg, index)`.
pub fn simulate_subject(cfg: &SessionSimConfig, index: usize) -> Result<SimulatedSubject, SimError> {
    cfg.validate()?;
    let subject = index as u64;
    let mut profile_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &[subject, TAG_PROFILE]));
    let profile = cfg.randomization.draw(&cfg.profile, &mut profile_rng);
    let pass_rng = |pass: u64| ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, &[subject, TAG_PASS, pass]));
    let with_leg = |mut rec: Recording| {
        rec.leg = cfg.leg;
        rec
    };

    let (pre, pre_strikes) = generate_pass(&profile, cfg.cycles_per_pass, &mut pass_rng(0), cfg.sample_rate);

    let detector_cfg = SegmentationConfig::default();
    let mut with_intervention = Vec::with_capacity(cfg.with_passes);
    let mut logs = Vec::with_capacity(cfg.with_passes);
    let mut with_truth = Vec::with_capacity(cfg.with_passes);
    for k in 0..cfg.with_passes {
        let pass = k as u64 + 1;
        let controller = ControllerConfig {
            rng_seed: derive_seed(cfg.master_seed, &[subject, TAG_CONTROLLER, pass, cfg.controller.rng_seed]),
            ..cfg.controller.clone()
        };
        let run = simulate_intervention_pass(
            &profile,
            cfg.cycles_per_pass,
            cfg.sample_rate,
            controller,
            &cfg.response,
            &detector_cfg,
            &mut pass_rng(pass),
        )?;
        with_intervention.push(with_leg(run.recording));
        logs.push(run.commands);
        with_truth.push(PassTruth {
            true_strikes: run.true_strikes,
            detected_strikes: run.detected_strikes,
            valves: run.valves,
        });
    }

    let post_pass = cfg.with_passes as u64 + 1;
    let (post, post_strikes) = generate_pass(&profile, cfg.cycles_per_pass, &mut pass_rng(post_pass), cfg.sample_rate);

    Ok(SimulatedSubject {
        session: Session {
            subject_id: cfg.subject_id(index),
            leg: cfg.leg,
            pre: with_leg(pre),
            with_intervention,
            post: Some(with_leg(post)),
            command_log: Some(logs),
            warnings: Vec::new(),
        },
        truth: SubjectTruth {
            profile,
            pre_strikes,
            post_strikes,
            with_passes: with_truth,
        },
    })
}

/// Simulates every subject of the cohort in order.
pub fn run_session(cfg: &SessionSimConfig) -> Result<Vec<SimulatedSubject>, SimError> {
    (0..cfg.subjects).map(|i| simulate_subject(cfg, i)).collect()
}

/// Writes each subject's session into `out/<subject_id>/`.
pub fn write_cohort(subjects: &[SimulatedSubject], out: &Path) -> Result<(), SimError> {
    for s in subjects {
        ingest::write_session(&s.session, out.join(&s.session.subject_id))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Direction;

    fn quiet(profile: &mut GaitProfile) {
        profile.noise_sigma = PerChannel::default();
        profile.cycle_duration_jitter = 0.0;
    }

    #[test]
    fn single_harmonic_matches_closed_form() {
        let mut p = GaitProfile::default();
        quiet(&mut p);
        p.harmonics = PerChannel::default();
        p.harmonics.ang_y = vec![Harmonic::new(1, 1.0, PI)];
        p.cycle_duration_mean = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (rec, strikes) = generate_pass(&p, 5, &mut rng, 100.0);
        assert_eq!(strikes.len(), 6);
        let t0 = strikes[0];
        for s in rec.samples() {
            let expect = (2.0 * PI * (s.t - t0) + PI).sin();
            assert!((s.get(Channel::AngY) - expect).abs() < 1e-12, "t = {}", s.t);
            assert_eq!(s.get(Channel::AccX), 0.0);
        }
    }

    #[test]
    fn strike_count_is_cycles_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [1, 4, 12] {
            let (rec, strikes) = generate_pass(&GaitProfile::default(), n, &mut rng, 100.0);
            assert_eq!(strikes.len(), n + 1);
            assert!(strikes[0] > rec.start_t() && strikes[n] < rec.end_t());
        }
    }

    #[test]
    fn response_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (rec, _) = generate_pass(&GaitProfile::default(), 3, &mut rng, 100.0);
        let model = ResponseModel::default();
        assert_eq!(apply_response(&rec, &[], &model).unwrap(), rec);
        let silent = ResponseModel {
            amplitude: PerChannel::default(),
            ..Default::default()
        };
        let cmd = PerturbationCommand {
            direction: Direction::Forward,
            onset_t: 1.0,
            duration: 0.5,
        };
        assert_eq!(apply_response(&rec, &[cmd], &silent).unwrap(), rec);
    }

    #[test]
    fn forward_and_backward_are_negations() {
        let mut p = GaitProfile::default();
        quiet(&mut p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (rec, _) = generate_pass(&p, 3, &mut rng, 100.0);
        let model = ResponseModel::default();
        let cmd = |direction| PerturbationCommand {
            direction,
            onset_t: 1.2,
            duration: 0.5,
        };
        let fwd = apply_response(&rec, &[cmd(Direction::Forward)], &model).unwrap();
        let bwd = apply_response(&rec, &[cmd(Direction::Backward)], &model).unwrap();
        let mut touched = 0;
        for ((base, f), b) in rec.samples().iter().zip(fwd.samples()).zip(bwd.samples()) {
            let elapsed = base.t - 1.25;
            let expect = 40.0 * (-elapsed / 0.15).exp() * (6.0 * PI * elapsed).sin();
            if elapsed < 0.0 {
                assert_eq!(f, base);
                assert_eq!(b, base);
                continue;
            }
            let df = f.get(Channel::AngY) - base.get(Channel::AngY);
            let db = b.get(Channel::AngY) - base.get(Channel::AngY);
            assert!((df - expect).abs() < 1e-9);
            assert!((db + expect).abs() < 1e-9);
            assert_eq!(model.transient(Channel::AngY, elapsed), -(-model.transient(Channel::AngY, elapsed)));
            assert_eq!(f.get(Channel::AccX), base.get(Channel::AccX));
            touched += 1;
        }
        assert!(touched > 0);
    }

    #[test]
    fn responses_superpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (rec, _) = generate_pass(&GaitProfile::default(), 4, &mut rng, 100.0);
        let model = ResponseModel::default();
        let c1 = PerturbationCommand {
            direction: Direction::Forward,
            onset_t: 1.0,
            duration: 0.5,
        };
        let c2 = PerturbationCommand {
            direction: Direction::Backward,
            onset_t: 1.3,
            duration: 0.5,
        };
        let twice = apply_response(&apply_response(&rec, &[c1], &model).unwrap(), &[c2], &model).unwrap();
        let once = apply_response(&rec, &[c1, c2], &model).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn command_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (rec, _) = generate_pass(&GaitProfile::default(), 2, &mut rng, 100.0);
        let cmd = PerturbationCommand {
            direction: Direction::Forward,
            onset_t: rec.end_t() + 1.0,
            duration: 0.5,
        };
        assert!(matches!(
            apply_response(&rec, &[cmd], &ResponseModel::default()),
            Err(SimError::CommandOutOfRange { .. })
        ));
    }

    #[test]
    fn boot_maps_directions_to_pairs() {
        let mut boot = Boot::new();
        boot.fire(&PerturbationCommand {
            direction: Direction::Forward,
            onset_t: 0.0,
            duration: 0.5,
        });
        boot.fire(&PerturbationCommand {
            direction: Direction::Backward,
            onset_t: 1.0,
            duration: 0.5,
        });
        assert_eq!(boot.muscles(0.2), [true, true, false, false]);
        assert_eq!(boot.muscles(0.5), [false; 4]);
        assert_eq!(boot.muscles(1.2), [false, false, true, true]);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
    }

    #[test]
    fn subject_simulation_is_deterministic() {
        let cfg = SessionSimConfig {
            subjects: 2,
            with_passes: 2,
            cycles_per_pass: 5,
            ..Default::default()
        };
        let a = simulate_subject(&cfg, 1).unwrap();
        let b = simulate_subject(&cfg, 1).unwrap();
        assert_eq!(a, b);
        let other = simulate_subject(&cfg, 0).unwrap();
        assert_ne!(a.session.pre, other.session.pre);
        assert_eq!(a.session.subject_id, "S02");
        assert_eq!(a.session.with_intervention.len(), 2);
        assert!(a.session.command_log.as_ref().unwrap().iter().all(|l| !l.is_empty()));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SessionSimConfig {
            subjects: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.subjects = 1;
        cfg.profile.harmonics.ang_y.clear();
        assert!(cfg.validate().is_err());
        let bad_response = SessionSimConfig {
            response: ResponseModel {
                decay: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(bad_response.validate().is_err());
    }
}
