//! Dynamic time warping between a step and the reference waveform.
//!
//! Univariate DTW with the symmetric unweighted step set
//! `{(+1, 0), (0, +1), (+1, +1)}`, an optional Sakoe-Chiba band
//! (`|i − j| ≤ w`) and either absolute or squared local cost.

use std::str::FromStr;

use thiserror::Error;

use crate::ingest::Channel;
use crate::reference::ReferenceWaveform;
use crate::segment::StepWaveform;

#[derive(Debug, Error, PartialEq)]
pub enum DtwError {
    #[error("empty series")]
    EmptySeries,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("band half-width {window} is narrower than the length difference {diff}")]
    InfeasibleWindow { window: usize, diff: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalCost {
    #[default]
    AbsDiff,
    SquaredDiff,
}

impl LocalCost {
    #[inline]
    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            LocalCost::AbsDiff => (x - y).abs(),
            LocalCost::SquaredDiff => (x - y) * (x - y),
        }
    }
}

impl FromStr for LocalCost {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abs" | "abs_diff" => Ok(LocalCost::AbsDiff),
            "sq" | "squared" | "squared_diff" => Ok(LocalCost::SquaredDiff),
            _ => Err(format!("unknown local cost `{s}` (expected abs or sq)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalize {
    #[default]
    None,
    /// Divide the accumulated cost by the number of path cells.
    PathLength,
}

impl FromStr for Normalize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Normalize::None),
            "path-length" | "path_length" => Ok(Normalize::PathLength),
            _ => Err(format!("unknown normalization `{s}` (expected none or path-length)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DtwConfig {
    pub local_cost: LocalCost,
    /// Sakoe-Chiba band half-width in samples.
    pub window: Option<usize>,
    pub normalize: Normalize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub distance: f64,
    /// Aligned index pairs from `(0, 0)` to `(n − 1, m − 1)`.
    pub path: Vec<(usize, usize)>,
}

fn check(a: &[f64], b: &[f64], cfg: &DtwConfig) -> Result<(), DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySeries);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(DtwError::NonFinite);
    }
    if let Some(window) = cfg.window {
        let diff = a.len().abs_diff(b.len());
        if window < diff {
            return Err(DtwError::InfeasibleWindow { window, diff });
        }
    }
    Ok(())
}

/// Column range of row `i` inside the band.
#[inline]
fn band(i: usize, m: usize, window: Option<usize>) -> (usize, usize) {
    match window {
        None => (0, m),
        Some(w) => (i.saturating_sub(w), (i + w + 1).min(m)),
    }
}

/// Optimal warping cost and path.
pub fn dtw_distance(a: &[f64], b: &[f64], cfg: &DtwConfig) -> Result<DtwResult, DtwError> {
    check(a, b, cfg)?;
    let (n, m) = (a.len(), b.len());
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;

    for i in 0..n {
        let (lo, hi) = band(i, m, cfg.window);
        for j in lo..hi {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { acc[at(i - 1, j)] } else { f64::INFINITY };
                let left = if j > 0 { acc[at(i, j - 1)] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { acc[at(i - 1, j - 1)] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[at(i, j)] = cfg.local_cost.eval(a[i], b[j]) + best;
        }
    }

    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let (ni, nj) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[at(i - 1, j - 1)];
            let up = acc[at(i - 1, j)];
            let left = acc[at(i, j - 1)];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        i = ni;
        j = nj;
        path.push((i, j));
    }
    path.reverse();

    let total = acc[at(n - 1, m - 1)];
    let distance = match cfg.normalize {
        Normalize::None => total,
        Normalize::PathLength => total / path.len() as f64,
    };
    Ok(DtwResult { distance, path })
}

/// Warping cost only, using two DP rows. Equal to `dtw_distance(..).distance`.
pub fn dtw_cost(a: &[f64], b: &[f64], cfg: &DtwConfig) -> Result<f64, DtwError> {
    if cfg.normalize != Normalize::None {
        return dtw_distance(a, b, cfg).map(|r| r.distance);
    }
    check(a, b, cfg)?;
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for (i, &x) in a.iter().enumerate() {
        cur.fill(f64::INFINITY);
        let (lo, hi) = band(i, m, cfg.window);
        for j in lo..hi {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = prev[j];
                let left = if j > 0 { cur[j - 1] } else { f64::INFINITY };
                let diag = if j > 0 { prev[j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            cur[j] = cfg.local_cost.eval(x, b[j]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// DTW distance of each step's `channel` to the reference, in step order.
/// Steps are compared at their recorded length.
pub fn step_distances(
    steps: &[StepWaveform],
    reference: &ReferenceWaveform,
    channel: Channel,
    cfg: &DtwConfig,
) -> Result<Vec<f64>, DtwError> {
    let template = reference.channel(channel);
    steps
        .iter()
        .map(|s| dtw_cost(s.channel(channel), template, cfg))
        .collect()
}
