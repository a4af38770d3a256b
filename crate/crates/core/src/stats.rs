//! Paired Wilcoxon signed-rank test and per-channel condition comparison.
//!
//! Zero differences are dropped; tied magnitudes share their average rank.
//! The two-sided p-value is exact up to [`EXACT_MAX_N`] non-zero pairs: the
//! null distribution of `W+` is counted over all `2ⁿ` sign assignments of the
//! observed ranks, so ties are handled exactly as well. Larger samples use
//! the normal approximation with tie and continuity corrections.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use statrs::function::erf::erfc;
use thiserror::Error;

use crate::ingest::Channel;

/// Largest effective sample size for which [`PMethod::Auto`] uses exact counting.
pub const EXACT_MAX_N: usize = 20;

/// Largest sample size the exact counter supports.
const EXACT_LIMIT: usize = 120;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("samples differ in length ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("no paired observations")]
    EmptySample,
    #[error("non-finite observation")]
    NonFinite,
    #[error("all paired differences are zero; the test is undefined")]
    AllZeroDifferences,
    #[error("exact p-value requested for n = {0}, above the supported {EXACT_LIMIT}")]
    ExactTooLarge(usize),
    #[error("subject `{subject}` has no {condition} value for {channel}")]
    MissingSubjectValue {
        subject: String,
        condition: Condition,
        channel: Channel,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    Exact,
    NormalApprox,
}

impl PMethod {
    pub fn name(self) -> &'static str {
        match self {
            PMethod::Exact => "exact",
            PMethod::NormalApprox => "normal_approx",
        }
    }
}

/// Which p-value computation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PMethodChoice {
    /// Exact for `n ≤ EXACT_MAX_N`, normal approximation above.
    #[default]
    Auto,
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// Number of non-zero differences.
    pub n_effective: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(w_plus, w_minus)`.
    pub statistic: f64,
    pub p_two_sided: f64,
    pub method: PMethod,
    pub sig_05: bool,
    pub sig_01: bool,
}

/// Signed ranks of the non-zero differences `x − y`. Ranks are stored
/// doubled so tied (half-integer) ranks stay integral.
#[derive(Debug, Clone)]
struct SignedRanks {
    doubled: Vec<u64>,
    positive: Vec<bool>,
    /// Sizes of tie groups with more than one member.
    ties: Vec<usize>,
}

fn signed_ranks(x: &[f64], y: &[f64]) -> Result<SignedRanks, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let n = diffs.len();
    let mut doubled = vec![0u64; n];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && diffs[end].abs() == diffs[start].abs() {
            end += 1;
        }
        // 1-based ranks start+1 ..= end share (start + 1 + end) / 2.
        let shared = (start + 1 + end) as u64;
        doubled[start..end].fill(shared);
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    Ok(SignedRanks {
        doubled,
        positive: diffs.iter().map(|d| *d > 0.0).collect(),
        ties,
    })
}

/// `P(min(W+, W−) ≤ stat)` under the null, counted exactly over all sign
/// assignments. `stat2` is the doubled statistic.
fn exact_p(doubled: &[u64], stat2: u64) -> f64 {
    let total: u64 = doubled.iter().sum();
    // counts[s] = number of sign vectors whose doubled W+ equals s
    let mut counts = vec![0u128; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    let tail: u128 = counts[..=stat2 as usize].iter().sum();
    let all = 2f64.powi(doubled.len() as i32);
    (2.0 * tail as f64 / all).min(1.0)
}

fn normal_p(n: usize, w_plus: f64, ties: &[usize]) -> f64 {
    let n = n as f64;
    let mean = n * (n + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test on the pairs `(x[i], y[i])`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, StatsError> {
    wilcoxon_signed_rank_with(x, y, PMethodChoice::Auto)
}

pub fn wilcoxon_signed_rank_with(x: &[f64], y: &[f64], choice: PMethodChoice) -> Result<WilcoxonResult, StatsError> {
    let ranks = signed_ranks(x, y)?;
    let n = ranks.doubled.len();
    let wp2: u64 = ranks
        .doubled
        .iter()
        .zip(&ranks.positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| r)
        .sum();
    let total2: u64 = ranks.doubled.iter().sum();
    let wm2 = total2 - wp2;
    let stat2 = wp2.min(wm2);

    let method = match choice {
        PMethodChoice::Auto if n <= EXACT_MAX_N => PMethod::Exact,
        PMethodChoice::Auto => PMethod::NormalApprox,
        PMethodChoice::Exact => PMethod::Exact,
        PMethodChoice::NormalApprox => PMethod::NormalApprox,
    };
    let w_plus = wp2 as f64 / 2.0;
    let p = match method {
        PMethod::Exact => {
            if n > EXACT_LIMIT {
                return Err(StatsError::ExactTooLarge(n));
            }
            exact_p(&ranks.doubled, stat2)
        }
        PMethod::NormalApprox => normal_p(n, w_plus, &ranks.ties),
    };
    Ok(WilcoxonResult {
        n_effective: n,
        w_plus,
        w_minus: wm2 as f64 / 2.0,
        statistic: stat2 as f64 / 2.0,
        p_two_sided: p,
        method,
        sig_05: p <= 0.05,
        sig_01: p <= 0.01,
    })
}

/// Experimental condition a DTW distance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    /// Steps of the walk without intervention, scored against the reference.
    NoDisturbance,
    /// Steps of the intervention walks.
    Disturbance,
    /// Steps of the walk after intervention.
    Post,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::NoDisturbance => "no_disturbance",
            Condition::Disturbance => "disturbance",
            Condition::Post => "post",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-subject summary of a condition's step distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregate {
    #[default]
    Mean,
    Median,
}

impl Aggregate {
    pub fn name(self) -> &'static str {
        match self {
            Aggregate::Mean => "mean",
            Aggregate::Median => "median",
        }
    }

    /// `None` for an empty slice.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        Some(match self {
            Aggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregate::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let mid = v.len() / 2;
                if v.len() % 2 == 1 {
                    v[mid]
                } else {
                    (v[mid - 1] + v[mid]) / 2.0
                }
            }
        })
    }
}

impl FromStr for Aggregate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "median" => Ok(Aggregate::Median),
            _ => Err(format!("unknown aggregate `{s}` (expected mean or median)")),
        }
    }
}

/// One value per (subject, condition, channel).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionTable {
    values: BTreeMap<String, BTreeMap<(Condition, Channel), f64>>,
}

impl ConditionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, subject: &str, condition: Condition, channel: Channel, value: f64) {
        self.values
            .entry(subject.to_string())
            .or_default()
            .insert((condition, channel), value);
    }

    pub fn get(&self, subject: &str, condition: Condition, channel: Channel) -> Option<f64> {
        self.values.get(subject)?.get(&(condition, channel)).copied()
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Aggregates raw distances `(subject, condition, channel, distance)`.
    pub fn from_distances<'a, I>(rows: I, aggregate: Aggregate) -> Self
    where
        I: IntoIterator<Item = (&'a str, Condition, Channel, f64)>,
    {
        let mut grouped: BTreeMap<(&str, Condition, Channel), Vec<f64>> = BTreeMap::new();
        for (subject, condition, channel, d) in rows {
            grouped.entry((subject, condition, channel)).or_default().push(d);
        }
        let mut table = ConditionTable::new();
        for ((subject, condition, channel), values) in grouped {
            if let Some(v) = aggregate.apply(&values) {
                table.insert(subject, condition, channel, v);
            }
        }
        table
    }
}

/// Test outcome for one channel; the test itself may be undefined (e.g. all
/// differences zero) without failing the whole comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelComparison {
    pub channel: Channel,
    pub result: Result<WilcoxonResult, StatsError>,
}

/// Paired test of `condition_a` against `condition_b` across subjects, one
/// per channel. Differences are `a − b`.
pub fn compare_conditions(
    table: &ConditionTable,
    condition_a: Condition,
    condition_b: Condition,
    channels: &[Channel],
) -> Result<Vec<ChannelComparison>, StatsError> {
    if table.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut out = Vec::with_capacity(channels.len());
    for &channel in channels {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for subject in table.subjects() {
            let fetch = |condition| {
                table
                    .get(subject, condition, channel)
                    .ok_or_else(|| StatsError::MissingSubjectValue {
                        subject: subject.to_string(),
                        condition,
                        channel,
                    })
            };
            xs.push(fetch(condition_a)?);
            ys.push(fetch(condition_b)?);
        }
        out.push(ChannelComparison {
            channel,
            result: wilcoxon_signed_rank(&xs, &ys),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over every sign vector, with ranks computed by counting.
    fn oracle_p(d: &[f64]) -> f64 {
        let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
        let n = nz.len();
        let rank = |v: f64| {
            let below = nz.iter().filter(|o| o.abs() < v.abs()).count() as f64;
            let equal = nz.iter().filter(|o| o.abs() == v.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        };
        let ranks: Vec<f64> = nz.iter().map(|v| rank(*v)).collect();
        let total: f64 = ranks.iter().sum();
        let wp: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
        let stat = wp.min(total - wp);
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            if w <= stat + 1e-9 {
                hits += 1;
            }
        }
        (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn identical_samples_are_undefined() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(wilcoxon_signed_rank(&x, &x), Err(StatsError::AllZeroDifferences));
    }

    #[test]
    fn length_mismatch_and_empty() {
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch { .. })
        ));
        assert_eq!(wilcoxon_signed_rank(&[], &[]), Err(StatsError::EmptySample));
    }

    #[test]
    fn ten_positive_differences() {
        let x: Vec<f64> = (1..=10).map(|i| i as f64 * 1.5).collect();
        let y = vec![0.0; 10];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.w_plus, 55.0);
        assert_eq!(r.method, PMethod::Exact);
        assert!((r.p_two_sided - 2.0 / 1024.0).abs() < 1e-15);
        assert!(r.sig_01 && r.sig_05);
    }

    #[test]
    fn hand_ranked_example() {
        let d = [1.0, -2.0, 3.0, 4.0, 5.0];
        let r = wilcoxon_signed_rank(&d, &[0.0; 5]).unwrap();
        assert_eq!(r.w_minus, 2.0);
        assert_eq!(r.w_plus, 13.0);
        assert_eq!(r.statistic, 2.0);
        assert!((r.p_two_sided - oracle_p(&d)).abs() < 1e-12);
        // W+ <= 2 for the sign sets {}, {1}, {2}: p = 2 * 3 / 32
        assert!((r.p_two_sided - 6.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn zeros_are_dropped_and_ties_averaged() {
        let x = [1.0, 2.0, 2.0, 5.0, 3.0];
        let y = [1.0, 0.0, 4.0, 0.0, 0.0];
        // diffs: 0, 2, -2, 5, 3 -> |d| ranks: 2,2 share 1.5; 3 -> 3; 5 -> 4
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.n_effective, 4);
        assert_eq!(r.w_plus, 1.5 + 3.0 + 4.0);
        assert_eq!(r.w_minus, 1.5);
        assert!((r.p_two_sided - oracle_p(&[2.0, -2.0, 5.0, 3.0])).abs() < 1e-12);
    }

    #[test]
    fn swapping_samples_swaps_rank_sums() {
        let x = [3.1, 4.7, 1.2, 8.8, 5.5, 2.0];
        let y = [2.0, 5.0, 0.4, 6.1, 5.0, 2.5];
        let a = wilcoxon_signed_rank(&x, &y).unwrap();
        let b = wilcoxon_signed_rank(&y, &x).unwrap();
        assert_eq!(a.w_plus, b.w_minus);
        assert_eq!(a.w_minus, b.w_plus);
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.p_two_sided, b.p_two_sided);
    }

    #[test]
    fn large_samples_use_normal_approximation() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin() + 0.3).collect();
        let y = vec![0.0; 30];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.method, PMethod::NormalApprox);
        assert!((0.0..=1.0).contains(&r.p_two_sided));
    }

    #[test]
    fn aggregates() {
        assert_eq!(Aggregate::Mean.apply(&[1.0, 2.0, 6.0]), Some(3.0));
        assert_eq!(Aggregate::Median.apply(&[6.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(Aggregate::Median.apply(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(Aggregate::Mean.apply(&[]), None);
    }

    #[test]
    fn compare_conditions_per_channel() {
        let mut t = ConditionTable::new();
        for s in 0..10 {
            let id = format!("S{s:02}");
            for c in Channel::ALL {
                t.insert(&id, Condition::NoDisturbance, c, 1.0 + s as f64);
                let bump = if c == Channel::AngY { 10.0 + s as f64 } else { 0.0 };
                t.insert(&id, Condition::Disturbance, c, 1.0 + s as f64 + bump);
            }
        }
        let res = compare_conditions(&t, Condition::Disturbance, Condition::NoDisturbance, &Channel::ALL).unwrap();
        assert_eq!(res.len(), 6);
        for r in &res {
            if r.channel == Channel::AngY {
                assert!(r.result.as_ref().unwrap().sig_01);
            } else {
                assert_eq!(r.result, Err(StatsError::AllZeroDifferences));
            }
        }
    }

    #[test]
    fn missing_subject_value() {
        let mut t = ConditionTable::new();
        t.insert("A", Condition::NoDisturbance, Channel::AngY, 1.0);
        t.insert("A", Condition::Disturbance, Channel::AngY, 2.0);
        t.insert("B", Condition::NoDisturbance, Channel::AngY, 1.0);
        assert!(matches!(
            compare_conditions(&t, Condition::Disturbance, Condition::NoDisturbance, &[Channel::AngY]),
            Err(StatsError::MissingSubjectValue { .. })
        ));
    }

    #[test]
    fn table_from_distances() {
        let rows = [
            ("A", Condition::Disturbance, Channel::AngY, 1.0),
            ("A", Condition::Disturbance, Channel::AngY, 3.0),
            ("A", Condition::Disturbance, Channel::AngY, 8.0),
        ];
        let mean = ConditionTable::from_distances(rows, Aggregate::Mean);
        let median = ConditionTable::from_distances(rows, Aggregate::Median);
        assert_eq!(mean.get("A", Condition::Disturbance, Channel::AngY), Some(4.0));
        assert_eq!(median.get("A", Condition::Disturbance, Channel::AngY), Some(3.0));
    }

    fn diffs(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-50i32..50).prop_map(|v| v as f64 / 4.0), n)
    }

    proptest! {
        #[test]
        fn exact_matches_brute_force_with_ties(d in diffs(1..12)) {
            prop_assume!(d.iter().any(|v| *v != 0.0));
            let r = wilcoxon_signed_rank(&d, &vec![0.0; d.len()]).unwrap();
            prop_assert!((r.p_two_sided - oracle_p(&d)).abs() < 1e-12);
            let n = r.n_effective as f64;
            prop_assert!((r.w_plus + r.w_minus - n * (n + 1.0) / 2.0).abs() < 1e-9);
            prop_assert_eq!(r.sig_05, r.p_two_sided <= 0.05);
            prop_assert_eq!(r.sig_01, r.p_two_sided <= 0.01);
        }

        #[test]
        fn positive_scaling_changes_nothing(d in diffs(1..15), a in 0.01..100.0f64) {
            prop_assume!(d.iter().any(|v| *v != 0.0));
            let zeros = vec![0.0; d.len()];
            let scaled: Vec<f64> = d.iter().map(|v| v * a).collect();
            let r1 = wilcoxon_signed_rank(&d, &zeros).unwrap();
            let r2 = wilcoxon_signed_rank(&scaled, &zeros).unwrap();
            prop_assert_eq!(r1, r2);
        }
    }
}
