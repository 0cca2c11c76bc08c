//! Piecewise-linear càdlàg paths with finitely many jumps.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Path on `[t_0, t_K]` starting at zero, with slope `slopes[k]` on
/// `[t_k, t_{k+1})` and jumps added at their times. Jump sizes may be
/// negative; breadth-first walks only produce positive ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonPath {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    jumps: Vec<(f64, f64)>,
    #[serde(skip)]
    drift_at: Vec<f64>,
    #[serde(skip)]
    jump_cum: Vec<f64>,
}

impl SkeletonPath {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, mut jumps: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.len() < 2 || slopes.len() + 1 != breakpoints.len() {
            return Err(invalid("a path needs K + 1 >= 2 breakpoints and K slopes"));
        }
        if breakpoints.iter().chain(&slopes).any(|v| !v.is_finite()) {
            return Err(invalid("breakpoints and slopes must be finite"));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("breakpoints must be strictly increasing"));
        }
        if jumps.iter().any(|(t, s)| !t.is_finite() || !s.is_finite()) {
            return Err(invalid("jumps must be finite"));
        }
        jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut drift_at = Vec::with_capacity(breakpoints.len());
        let mut acc = 0.0;
        drift_at.push(0.0);
        for (w, s) in breakpoints.windows(2).zip(&slopes) {
            acc += s * (w[1] - w[0]);
            drift_at.push(acc);
        }
        let mut jump_cum = Vec::with_capacity(jumps.len() + 1);
        let mut acc = 0.0;
        jump_cum.push(0.0);
        for (_, size) in &jumps {
            acc += size;
            jump_cum.push(acc);
        }
        Ok(Self { breakpoints, slopes, jumps, drift_at, jump_cum })
    }

    /// Constant-slope path on `[start, end]`.
    pub fn linear(start: f64, end: f64, slope: f64, jumps: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(vec![start, end], vec![slope], jumps)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn jumps(&self) -> &[(f64, f64)] {
        &self.jumps
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    fn drift(&self, s: f64) -> f64 {
        let s = s.clamp(self.start(), self.end());
        // segment k with t_k <= s
        let k = self.breakpoints.partition_point(|&t| t <= s).saturating_sub(1);
        let k = k.min(self.slopes.len() - 1);
        self.drift_at[k] + self.slopes[k] * (s - self.breakpoints[k])
    }

    /// Value at `s`, including any jump at exactly `s`.
    pub fn value(&self, s: f64) -> f64 {
        let j = self.jumps.partition_point(|&(t, _)| t <= s);
        self.drift(s) + self.jump_cum[j]
    }

    /// Left limit at `s`.
    pub fn left_limit(&self, s: f64) -> f64 {
        let j = self.jumps.partition_point(|&(t, _)| t < s);
        self.drift(s) + self.jump_cum[j]
    }

    /// Divides every slope and jump by `sigma2`; the time axis is unchanged.
    pub fn rescale(&self, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(invalid(format!("scale must be finite and positive, got {sigma2}")));
        }
        Self::new(
            self.breakpoints.clone(),
            self.slopes.iter().map(|s| s / sigma2).collect(),
            self.jumps.iter().map(|&(t, s)| (t, s / sigma2)).collect(),
        )
    }

    /// `(time, value)` at every breakpoint, plus the left limit and value at
    /// every jump, in time order.
    pub fn sample_points(&self) -> Vec<(f64, f64)> {
        let mut times: Vec<f64> = self.breakpoints.clone();
        times.extend(self.jumps.iter().map(|j| j.0));
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut out = Vec::with_capacity(times.len() + self.jumps.len());
        for t in times {
            let before = self.left_limit(t);
            let after = self.value(t);
            if before != after {
                out.push((t, before));
            }
            out.push((t, after));
        }
        out
    }
}
