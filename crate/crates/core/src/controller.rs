//! Gait-phase estimation and randomized perturbation scheduling.
//!
//! The gait cycle runs from one heel strike (initial contact) to the next
//! and is divided into eight phases by cycle fraction. Perturbations are
//! scheduled in one of four bins (IC~LR, MSt~TSt, PSw~ISw, MSw~TSw): at each
//! heel strike the [`Controller`] draws a bin and a direction uniformly at
//! random, then opens the front (forward) or rear (backward) muscle pair for
//! one pulse the first time the estimated fraction enters that bin.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest cycle fraction the estimator reports; keeps a late step in the
/// current cycle instead of wrapping into the next one's first bin.
pub const MAX_FRACTION: f64 = 1.0 - f64::EPSILON;

/// Default valve pulse length in seconds.
pub const DEFAULT_PULSE_DURATION: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("cycle fraction {0} outside [0, 1)")]
    OutOfRange(f64),
    #[error("clock went backwards: {now} after {previous}")]
    ClockRegression { previous: f64, now: f64 },
    #[error("heel strike at {strike} is not after the previous one at {previous}")]
    StrikeOutOfOrder { strike: f64, previous: f64 },
    #[error("heel strike at {strike} reported before it happened (now = {now})")]
    StrikeInFuture { strike: f64, now: f64 },
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
}

/// The eight standard gait phases, in cycle order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GaitPhase {
    /// Initial contact, the zero-length instant at fraction 0.
    Ic,
    /// Loading response.
    Lr,
    /// Mid stance.
    MSt,
    /// Terminal stance.
    TSt,
    /// Pre-swing.
    PSw,
    /// Initial swing.
    ISw,
    /// Mid swing.
    MSw,
    /// Terminal swing.
    TSw,
}

/// Upper (exclusive) fraction bound of each phase after IC.
const PHASE_UPPER: [(f64, GaitPhase); 7] = [
    (0.12, GaitPhase::Lr),
    (0.31, GaitPhase::MSt),
    (0.50, GaitPhase::TSt),
    (0.62, GaitPhase::PSw),
    (0.75, GaitPhase::ISw),
    (0.87, GaitPhase::MSw),
    (1.0, GaitPhase::TSw),
];

impl GaitPhase {
    pub const ALL: [GaitPhase; 8] = [
        GaitPhase::Ic,
        GaitPhase::Lr,
        GaitPhase::MSt,
        GaitPhase::TSt,
        GaitPhase::PSw,
        GaitPhase::ISw,
        GaitPhase::MSw,
        GaitPhase::TSw,
    ];

    pub fn abbrev(self) -> &'static str {
        match self {
            GaitPhase::Ic => "IC",
            GaitPhase::Lr => "LR",
            GaitPhase::MSt => "MSt",
            GaitPhase::TSt => "TSt",
            GaitPhase::PSw => "PSw",
            GaitPhase::ISw => "ISw",
            GaitPhase::MSw => "MSw",
            GaitPhase::TSw => "TSw",
        }
    }

    /// The perturbation bin this phase belongs to.
    pub fn bin(self) -> PhaseBin {
        match self {
            GaitPhase::Ic | GaitPhase::Lr => PhaseBin::IcLr,
            GaitPhase::MSt | GaitPhase::TSt => PhaseBin::MStTSt,
            GaitPhase::PSw | GaitPhase::ISw => PhaseBin::PSwISw,
            GaitPhase::MSw | GaitPhase::TSw => PhaseBin::MSwTSw,
        }
    }
}

/// Grouping of phases into the four firing windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhaseBin {
    /// `[0, 0.12)`
    #[serde(rename = "Bin1_IC_LR")]
    IcLr,
    /// `[0.12, 0.50)`
    #[serde(rename = "Bin2_MSt_TSt")]
    MStTSt,
    /// `[0.50, 0.75)`
    #[serde(rename = "Bin3_PSw_ISw")]
    PSwISw,
    /// `[0.75, 1.0)`
    #[serde(rename = "Bin4_MSw_TSw")]
    MSwTSw,
}

impl PhaseBin {
    pub const ALL: [PhaseBin; 4] = [PhaseBin::IcLr, PhaseBin::MStTSt, PhaseBin::PSwISw, PhaseBin::MSwTSw];

    /// Half-open fraction interval `[lo, hi)`.
    pub fn interval(self) -> (f64, f64) {
        match self {
            PhaseBin::IcLr => (0.0, 0.12),
            PhaseBin::MStTSt => (0.12, 0.50),
            PhaseBin::PSwISw => (0.50, 0.75),
            PhaseBin::MSwTSw => (0.75, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseBin::IcLr => "Bin1_IC_LR",
            PhaseBin::MStTSt => "Bin2_MSt_TSt",
            PhaseBin::PSwISw => "Bin3_PSw_ISw",
            PhaseBin::MSwTSw => "Bin4_MSw_TSw",
        }
    }
}

impl fmt::Display for PhaseBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_fraction(fraction: f64) -> Result<(), ControllerError> {
    if (0.0..1.0).contains(&fraction) {
        Ok(())
    } else {
        Err(ControllerError::OutOfRange(fraction))
    }
}

pub fn classify_phase(fraction: f64) -> Result<GaitPhase, ControllerError> {
    check_fraction(fraction)?;
    if fraction == 0.0 {
        return Ok(GaitPhase::Ic);
    }
    Ok(PHASE_UPPER
        .iter()
        .find(|(upper, _)| fraction < *upper)
        .map(|(_, phase)| *phase)
        .unwrap_or(GaitPhase::TSw))
}

pub fn classify_bin(fraction: f64) -> Result<PhaseBin, ControllerError> {
    check_fraction(fraction)?;
    Ok(PhaseBin::ALL
        .into_iter()
        .find(|b| fraction < b.interval().1)
        .unwrap_or(PhaseBin::MSwTSw))
}

/// Perturbation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    /// +1 for forward, -1 for backward.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    /// Muscle pair that has to contract for this direction.
    pub fn pgm_pair(self) -> PgmPair {
        match self {
            Direction::Forward => PgmPair::Front,
            Direction::Backward => PgmPair::Rear,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// The boot carries two muscles in front and two at the rear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PgmPair {
    Front,
    Rear,
}

impl PgmPair {
    /// Indices of the two muscles of this pair (front: 0, 1; rear: 2, 3).
    pub fn muscles(self) -> [usize; 2] {
        match self {
            PgmPair::Front => [0, 1],
            PgmPair::Rear => [2, 3],
        }
    }
}

/// A valve actuation order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationCommand {
    pub direction: Direction,
    pub onset_t: f64,
    pub duration: f64,
}

impl PerturbationCommand {
    pub fn end_t(&self) -> f64 {
        self.onset_t + self.duration
    }
}

/// A command together with the scheduling context it was issued in; one
/// row of a command-log file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub onset_t: f64,
    pub duration: f64,
    pub direction: Direction,
    pub bin: PhaseBin,
    pub cycle_index: usize,
    pub fraction_at_onset: f64,
}

impl CommandRecord {
    pub const CSV_HEADER: [&'static str; 6] =
        ["onset_t", "duration", "direction", "bin", "cycle_index", "fraction_at_onset"];

    pub fn command(&self) -> PerturbationCommand {
        PerturbationCommand {
            direction: self.direction,
            onset_t: self.onset_t,
            duration: self.duration,
        }
    }
}

/// Bin and direction drawn for one gait cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Plan {
    pub bin: PhaseBin,
    pub direction: Direction,
}

/// Draws one of the 4 × 2 (bin, direction) combinations uniformly.
pub fn draw_plan<R: Rng + ?Sized>(rng: &mut R) -> Plan {
    let k = rng.random_range(0..8usize);
    Plan {
        bin: PhaseBin::ALL[k / 2],
        direction: if k % 2 == 0 {
            Direction::Forward
        } else {
            Direction::Backward
        },
    }
}

/// Cycle position estimated from recent heel strikes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CycleEstimate {
    /// Fewer than two strikes seen so far.
    Warmup,
    Cycle { fraction: f64, duration: f64 },
}

/// Estimates the position in the current cycle: the cycle duration is the
/// mean of the last `window` inter-strike intervals (fewer if not yet
/// available) and the fraction is the time since the last strike over that
/// duration, clamped to `[0, MAX_FRACTION]`.
pub fn estimate_cycle(strikes: &[f64], now: f64, window: usize) -> CycleEstimate {
    if strikes.len() < 2 {
        return CycleEstimate::Warmup;
    }
    let k = window.max(1).min(strikes.len() - 1);
    let recent = &strikes[strikes.len() - 1 - k..];
    let duration = recent.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / k as f64;
    let last = strikes[strikes.len() - 1];
    let fraction = ((now - last) / duration).clamp(0.0, MAX_FRACTION);
    CycleEstimate::Cycle { fraction, duration }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Valve-on time per command, seconds.
    pub pulse_duration: f64,
    /// Number of recent strike intervals averaged for the cadence estimate.
    pub cycle_window: usize,
    /// Probability that a cycle gets a perturbation at all.
    pub fire_probability: f64,
    pub rng_seed: u64,
    /// Optional cap on the number of commands over the controller's lifetime
    /// (one controller runs one walking pass).
    pub max_commands: Option<usize>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            pulse_duration: DEFAULT_PULSE_DURATION,
            cycle_window: 3,
            fire_probability: 1.0,
            rng_seed: 0,
            max_commands: None,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.pulse_duration > 0.0 && self.pulse_duration.is_finite()) {
            return Err(ControllerError::InvalidConfig(format!(
                "pulse_duration must be positive, got {}",
                self.pulse_duration
            )));
        }
        if self.cycle_window < 1 {
            return Err(ControllerError::InvalidConfig("cycle_window must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fire_probability) {
            return Err(ControllerError::InvalidConfig(format!(
                "fire_probability must lie in [0, 1], got {}",
                self.fire_probability
            )));
        }
        Ok(())
    }
}

/// Scheduler state for the current gait cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerState {
    /// Fewer than two strikes seen; no cadence estimate yet.
    Warmup,
    /// A bin and direction are drawn for this cycle and the valve has not fired.
    Armed,
    /// The valve is open (until onset + duration).
    Firing,
    /// Nothing more to do until the next strike.
    Done,
}

#[derive(Debug, Clone)]
enum PlanSource {
    Random(ChaCha8Rng),
    /// Pre-set plans, one per cycle; `None` skips a cycle.
    Scripted(VecDeque<Option<Plan>>),
}

/// Single-owner perturbation state machine. Feed it every control tick in
/// time order, with the heel strike detected at that tick if any.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    plans: PlanSource,
    strikes: VecDeque<f64>,
    strike_count: usize,
    state: ControllerState,
    plan: Option<Plan>,
    last_now: Option<f64>,
    valve_off_at: f64,
    issued: usize,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self, ControllerError> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        Ok(Self::with_source(cfg, PlanSource::Random(rng)))
    }

    /// A controller that uses the given plans (one per cycle, in order)
    /// instead of random draws. `fire_probability` is ignored.
    pub fn scripted(cfg: ControllerConfig, plans: impl IntoIterator<Item = Option<Plan>>) -> Result<Self, ControllerError> {
        cfg.validate()?;
        Ok(Self::with_source(cfg, PlanSource::Scripted(plans.into_iter().collect())))
    }

    fn with_source(cfg: ControllerConfig, plans: PlanSource) -> Self {
        Controller {
            cfg,
            plans,
            strikes: VecDeque::new(),
            strike_count: 0,
            state: ControllerState::Warmup,
            plan: None,
            last_now: None,
            valve_off_at: f64::NEG_INFINITY,
            issued: 0,
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn state(&self) -> ControllerState {
        self.state
    }

    /// Plan of the current cycle, if armed or fired.
    pub fn plan(&self) -> Option<Plan> {
        self.plan
    }

    /// Index of the cycle that started at the most recent strike (0-based
    /// strike count minus one).
    pub fn cycle_index(&self) -> Option<usize> {
        self.strike_count.checked_sub(1)
    }

    pub fn commands_issued(&self) -> usize {
        self.issued
    }

    pub fn valve_open(&self, now: f64) -> bool {
        now < self.valve_off_at
    }

    pub fn estimate(&self, now: f64) -> CycleEstimate {
        let strikes: Vec<f64> = self.strikes.iter().copied().collect();
        estimate_cycle(&strikes, now, self.cfg.cycle_window)
    }

    fn next_plan(&mut self) -> Option<Plan> {
        match &mut self.plans {
            PlanSource::Random(rng) => {
                let roll: f64 = rng.random();
                (roll < self.cfg.fire_probability).then(|| draw_plan(rng))
            }
            PlanSource::Scripted(queue) => queue.pop_front().flatten(),
        }
    }

    /// Advances the controller to `now`. Returns the command issued at this
    /// tick, if any.
    pub fn tick(&mut self, strike: Option<f64>, now: f64) -> Result<Option<CommandRecord>, ControllerError> {
        if let Some(previous) = self.last_now {
            if now < previous {
                return Err(ControllerError::ClockRegression { previous, now });
            }
        }
        if let Some(ts) = strike {
            if ts > now {
                return Err(ControllerError::StrikeInFuture { strike: ts, now });
            }
            if let Some(&previous) = self.strikes.back() {
                if ts <= previous {
                    return Err(ControllerError::StrikeOutOfOrder { strike: ts, previous });
                }
            }
        }
        self.last_now = Some(now);

        if let Some(ts) = strike {
            self.strikes.push_back(ts);
            while self.strikes.len() > self.cfg.cycle_window + 1 {
                self.strikes.pop_front();
            }
            self.strike_count += 1;
            self.plan = None;
            self.state = if self.strike_count < 2 {
                ControllerState::Warmup
            } else {
                let capped = self.cfg.max_commands.is_some_and(|cap| self.issued >= cap);
                match self.next_plan() {
                    Some(plan) if !capped => {
                        self.plan = Some(plan);
                        ControllerState::Armed
                    }
                    _ => ControllerState::Done,
                }
            };
        }

        if self.state == ControllerState::Firing && now >= self.valve_off_at {
            self.state = ControllerState::Done;
        }

        if self.state != ControllerState::Armed {
            return Ok(None);
        }
        let plan = self.plan.expect("armed without a plan");
        let CycleEstimate::Cycle { fraction, .. } = self.estimate(now) else {
            return Ok(None);
        };
        let bin = classify_bin(fraction)?;
        if bin > plan.bin {
            // The armed window passed without a chance to fire.
            self.state = ControllerState::Done;
            return Ok(None);
        }
        // A pulse carried over from the previous cycle blocks firing until it ends.
        if bin < plan.bin || self.valve_open(now) {
            return Ok(None);
        }
        self.state = ControllerState::Firing;
        self.valve_off_at = now + self.cfg.pulse_duration;
        self.issued += 1;
        Ok(Some(CommandRecord {
            onset_t: now,
            duration: self.cfg.pulse_duration,
            direction: plan.direction,
            bin: plan.bin,
            cycle_index: self.strike_count - 1,
            fraction_at_onset: fraction,
        }))
    }
}
