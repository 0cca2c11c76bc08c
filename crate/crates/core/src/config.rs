//! Initial mass configurations for the near-critical regimes and their
//! moment functionals.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default split threshold for [`choose_m`], as a fraction of `σ₂(x)`.
pub const DEFAULT_SPLIT_THRESHOLD: f64 = 0.1;

/// Finite list of positive block masses, sorted non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassConfig {
    masses: Vec<f64>,
}

impl MassConfig {
    /// Validates an already sorted mass vector.
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(invalid("mass configuration must have at least one block"));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(invalid(format!("block masses must be finite and positive, got {m}")));
        }
        if masses.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("block masses must be sorted non-increasing"));
        }
        Ok(Self { masses })
    }

    /// Sorts the masses non-increasing before validating them.
    pub fn from_unsorted(mut masses: Vec<f64>) -> Result<Self> {
        if masses.iter().any(|m| m.is_nan()) {
            return Err(invalid("block masses must not be NaN"));
        }
        masses.sort_by(|a, b| b.total_cmp(a));
        Self::new(masses)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Concatenation of two configurations, re-sorted.
    pub fn concat(&self, other: &MassConfig) -> MassConfig {
        let mut all = self.masses.clone();
        all.extend_from_slice(&other.masses);
        all.sort_by(|a, b| b.total_cmp(a));
        MassConfig { masses: all }
    }
}

/// Limit-process parameters `(κ, t, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub kappa: f64,
    pub t: f64,
    pub c: Vec<f64>,
}

impl RegimeParams {
    /// Zero entries of `c` are dropped: a dust block of size zero never
    /// jumps.
    pub fn new(kappa: f64, t: f64, c: Vec<f64>) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(invalid(format!("kappa must be finite and non-negative, got {kappa}")));
        }
        if !t.is_finite() {
            return Err(invalid(format!("t must be finite, got {t}")));
        }
        if let Some(v) = c.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("dust entries must be finite and non-negative, got {v}")));
        }
        if c.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("dust sequence c must be sorted non-increasing"));
        }
        let c = c.into_iter().filter(|v| *v > 0.0).collect();
        Ok(Self { kappa, t, c })
    }

    pub fn c_cubed_sum(&self, l: usize) -> f64 {
        self.c.iter().take(l).map(|c| c * c * c).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    /// `σ₃ / σ₂³`
    pub ratio3: f64,
    /// `x_j / σ₂` for the leading blocks.
    pub max_scaled: Vec<f64>,
}

/// `σ_r(x) = Σ_i x_i^r` for `r ∈ {1, 2, 3}`.
pub fn sigma(x: &MassConfig, r: u32) -> Result<f64> {
    match r {
        1 => Ok(x.masses.iter().sum()),
        2 => Ok(x.masses.iter().map(|m| m * m).sum()),
        3 => Ok(x.masses.iter().map(|m| m * m * m).sum()),
        _ => Err(invalid(format!("moment order must be 1, 2 or 3, got {r}"))),
    }
}

pub fn sigma2(x: &MassConfig) -> f64 {
    x.masses.iter().map(|m| m * m).sum()
}

/// Builds the standard near-critical configuration for `(κ, c)` at size `n`.
///
/// For `κ > 0`: `l` blocks `c_j κ^{-2/3} n^{-1/3}` plus `n` blocks
/// `κ^{-1/3} n^{-2/3}`. For `κ = 0`: only the `l` blocks `c_j n^{-1/3}`.
pub fn make_standard_config(n: usize, params: &RegimeParams, l: usize) -> Result<MassConfig> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if l > params.c.len() {
        return Err(invalid(format!(
            "l = {l} exceeds the length {} of the dust sequence",
            params.c.len()
        )));
    }
    let nf = n as f64;
    let mut masses = Vec::with_capacity(n + l);
    if params.kappa > 0.0 {
        let lead = params.kappa.powf(-2.0 / 3.0) * nf.powf(-1.0 / 3.0);
        masses.extend(params.c[..l].iter().map(|c| c * lead));
        masses.extend(std::iter::repeat_n(
            params.kappa.powf(-1.0 / 3.0) * nf.powf(-2.0 / 3.0),
            n,
        ));
    } else {
        if params.c.is_empty() {
            return Err(Error::InvalidRegime(
                "kappa = 0 requires a non-empty dust sequence".into(),
            ));
        }
        if l == 0 {
            return Err(Error::InvalidRegime("kappa = 0 requires l >= 1".into()));
        }
        let lead = nf.powf(-1.0 / 3.0);
        masses.extend(params.c[..l].iter().map(|c| c * lead));
    }
    MassConfig::from_unsorted(masses)
}

/// Default number of macroscopic dust blocks at size `n`.
///
/// `⌊n^{1/8}⌋` when `κ > 0`; when `κ = 0`, the smallest `l` with
/// `Σ_{j≤l} c_j² ≥ n^{1/3}`. Always capped at `c.len()`.
pub fn default_l(n: usize, params: &RegimeParams) -> usize {
    let nf = n as f64;
    let len = params.c.len();
    if params.kappa > 0.0 {
        // small epsilon so exact eighth powers are not floored one short
        ((nf.powf(1.0 / 8.0) + 1e-12).floor() as usize).min(len)
    } else {
        let target = nf.powf(1.0 / 3.0);
        let mut acc = 0.0;
        for (j, c) in params.c.iter().enumerate() {
            acc += c * c;
            if acc >= target {
                return j + 1;
            }
        }
        len
    }
}

pub fn moment_report(x: &MassConfig) -> MomentReport {
    let sigma1 = x.masses.iter().sum::<f64>();
    let sigma2 = sigma2(x);
    let sigma3 = x.masses.iter().map(|m| m * m * m).sum::<f64>();
    MomentReport {
        sigma1,
        sigma2,
        sigma3,
        ratio3: sigma3 / (sigma2 * sigma2 * sigma2),
        max_scaled: x.masses.iter().take(16).map(|m| m / sigma2).collect(),
    }
}

/// Number of blocks with `x_i ≥ threshold · σ₂(x)`.
///
/// These leading blocks are tracked individually in the walk
/// decomposition; the rest is treated as dust.
pub fn choose_m(x: &MassConfig, threshold: f64) -> usize {
    let cut = threshold * sigma2(x);
    // masses are sorted, so the qualifying blocks form a prefix
    x.masses.partition_point(|m| *m >= cut)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(v: &[f64]) -> MassConfig {
        MassConfig::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(&cfg(&[1.0, 1.0]), 2).unwrap(), 2.0);
        assert_eq!(sigma(&cfg(&[0.5, 0.25]), 3).unwrap(), 0.140625);
        let x = cfg(&[4f64.powf(-2.0 / 3.0); 4]);
        let direct: f64 = (0..4).map(|_| 4f64.powf(-4.0 / 3.0)).sum();
        let s2 = sigma(&x, 2).unwrap();
        assert!((s2 - direct).abs() < 1e-14);
        assert!((s2 - 4f64.powf(-1.0 / 3.0)).abs() < 1e-12);
        assert!(matches!(sigma(&x, 4), Err(Error::InvalidArgument(_))));
        assert!(matches!(sigma(&x, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rejects_bad_masses() {
        assert!(MassConfig::new(vec![]).is_err());
        assert!(MassConfig::new(vec![1.0, 0.0]).is_err());
        assert!(MassConfig::new(vec![1.0, -1.0]).is_err());
        assert!(MassConfig::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(MassConfig::new(vec![1.0, 2.0]).is_err());
        assert_eq!(MassConfig::from_unsorted(vec![1.0, 2.0]).unwrap().masses(), &[2.0, 1.0]);
    }

    #[test]
    fn regime_params_drop_zero_dust() {
        let p = RegimeParams::new(1.0, 0.0, vec![2.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.c, vec![2.0, 1.0]);
        assert!(RegimeParams::new(-1.0, 0.0, vec![]).is_err());
        assert!(RegimeParams::new(1.0, 0.0, vec![1.0, 2.0]).is_err());
        assert!(RegimeParams::new(1.0, f64::NAN, vec![]).is_err());
    }

    #[test]
    fn standard_config_examples() {
        let p = RegimeParams::new(1.0, 0.0, vec![]).unwrap();
        let x = make_standard_config(4, &p, 0).unwrap();
        assert_eq!(x.len(), 4);
        for m in x.masses() {
            assert!((m - 4f64.powf(-2.0 / 3.0)).abs() < 1e-15);
        }

        let p = RegimeParams::new(1.0, 0.0, vec![1.0]).unwrap();
        let x = make_standard_config(8, &p, 1).unwrap();
        assert_eq!(x.len(), 9);
        assert!((x.masses()[0] - 0.5).abs() < 1e-15);
        for m in &x.masses()[1..] {
            assert!((m - 0.25).abs() < 1e-15);
        }

        let p = RegimeParams::new(0.0, 0.0, vec![2.0, 1.0]).unwrap();
        let x = make_standard_config(8, &p, 2).unwrap();
        assert_eq!(x.len(), 2);
        assert!((x.masses()[0] - 1.0).abs() < 1e-15);
        assert!((x.masses()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn standard_config_errors() {
        let empty = RegimeParams::new(0.0, 0.0, vec![]).unwrap();
        assert!(matches!(make_standard_config(8, &empty, 0), Err(Error::InvalidRegime(_))));
        let p = RegimeParams::new(0.0, 0.0, vec![1.0]).unwrap();
        assert!(matches!(make_standard_config(8, &p, 0), Err(Error::InvalidRegime(_))));
        assert!(matches!(make_standard_config(8, &p, 2), Err(Error::InvalidArgument(_))));
        assert!(make_standard_config(0, &p, 1).is_err());
    }

    #[test]
    fn moment_report_examples() {
        for n in [1usize, 7, 100, 5000] {
            let x = cfg(&vec![(n as f64).powf(-2.0 / 3.0); n]);
            let r = moment_report(&x);
            assert!((r.ratio3 - 1.0).abs() < 1e-10, "n={n} ratio3={}", r.ratio3);
        }
        let r = moment_report(&cfg(&[1.0]));
        assert_eq!(r.ratio3, 1.0);
        assert_eq!(r.max_scaled, vec![1.0]);
    }

    #[test]
    fn moment_report_kappa_one_with_one_dust_block() {
        let p = RegimeParams::new(1.0, 0.0, vec![1.0]).unwrap();
        let x = make_standard_config(1000, &p, 1).unwrap();
        // explicit summation: one block 0.1, 1000 blocks 0.01
        let s2 = 0.1f64.powi(2) + 1000.0 * 0.01f64.powi(2);
        let s3 = 0.1f64.powi(3) + 1000.0 * 0.01f64.powi(3);
        let reference = s3 / s2.powi(3);
        let r = moment_report(&x);
        assert!((r.ratio3 - reference).abs() < 1e-9 * reference);
        assert!((reference - 1.502629601803156).abs() < 1e-12);
        assert_eq!(r.max_scaled.len(), 16);
    }

    #[test]
    fn choose_m_examples() {
        let x = cfg(&[1.0, 0.5, 0.25]);
        assert_eq!(sigma2(&x), 1.3125);
        assert_eq!(choose_m(&x, 0.5), 1);
        assert_eq!(choose_m(&x, 0.3), 2);
        assert_eq!(choose_m(&x, 1.0 / 1.3125 + 1e-9), 0);

        let p = RegimeParams::new(1.0, 0.0, vec![1.0]).unwrap();
        let x = make_standard_config(1000, &p, 1).unwrap();
        let cut = 0.1 * sigma2(&x);
        let scan = x.masses().iter().filter(|m| **m >= cut).count();
        assert_eq!(choose_m(&x, 0.1), scan);
        assert_eq!(scan, 1);
    }

    #[test]
    fn default_l_rules() {
        let p = RegimeParams::new(1.0, 0.0, vec![1.0; 10]).unwrap();
        assert_eq!(default_l(1000, &p), 2);
        assert_eq!(default_l(256, &p), 2);
        assert_eq!(default_l(100_000, &p), 4);
        let p = RegimeParams::new(0.0, 0.0, vec![1.0; 10]).unwrap();
        // n^{1/3} = 4 at n = 64
        assert_eq!(default_l(64, &p), 4);
        assert_eq!(default_l(1_000_000_000, &p), 10);
    }

    #[test]
    fn ratio3_error_shrinks_with_n() {
        let p = RegimeParams::new(1.0, 0.0, vec![1.0, 0.5]).unwrap();
        let errs: Vec<f64> = [1_000usize, 10_000, 100_000]
            .iter()
            .map(|&n| {
                let l = default_l(n, &p);
                let x = make_standard_config(n, &p, l).unwrap();
                (moment_report(&x).ratio3 - (p.kappa + p.c_cubed_sum(l))).abs()
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}
