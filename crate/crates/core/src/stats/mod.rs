//! Goodness-of-fit tests, distances between mass vectors and TV estimates.

mod study;

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::partition::Partition;

pub use study::{graph_batch, limit_batch, convergence_study, ConvergenceRow, StudyOptions, StudyVerdict};

/// Largest index set accepted by [`tv_partition_estimate`].
pub const TV_PARTITION_MAX_N: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub pvalue: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi theta form converges fast for small λ
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let mut sum = 0.0;
        let mut k = 1i32;
        loop {
            let term = y.powi((2 * k - 1) * (2 * k - 1));
            sum += term;
            if term < 1e-18 || k > 50 {
                break;
            }
            k += 1;
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = f64::from(k);
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        2.0 * sum
    };
    p.clamp(0.0, 1.0)
}

fn ks_pvalue(statistic: f64, effective_n: f64) -> f64 {
    let en = effective_n.sqrt();
    kolmogorov_survival((en + 0.12 + 0.11 / en) * statistic)
}

fn sorted_copy(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(invalid("samples must not contain NaN"));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// One-sample KS test of `values` against a continuous `cdf`.
pub fn ks_one_sample(values: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if values.is_empty() {
        return Err(invalid("KS test needs a non-empty sample"));
    }
    let v = sorted_copy(values)?;
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult { statistic: d, pvalue: ks_pvalue(d, n) })
}

/// Classical two-sample Kolmogorov-Smirnov test with asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("KS test needs two non-empty samples"));
    }
    let a = sorted_copy(a)?;
    let b = sorted_copy(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult { statistic: d, pvalue: ks_pvalue(d, na * nb / (na + nb)) })
}

/// First Wasserstein distance between two empirical distributions,
/// `∫ |F_a - F_b|`.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("Wasserstein distance needs two non-empty samples"));
    }
    let a = sorted_copy(a)?;
    let b = sorted_copy(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut dist = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        dist += (i as f64 / na - j as f64 / nb).abs() * (x - prev);
        prev = x;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    Ok(dist)
}

/// `ℓ²` distance between two ordered mass vectors, the shorter padded with
/// zeros.
pub fn sorted_l2_distance(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    (0..len)
        .map(|k| {
            let d = a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Half the `ℓ¹` distance between the empirical laws of two keyed samples.
pub fn tv_distance<K, A, B>(a: A, b: B) -> Result<f64>
where
    K: Hash + Eq,
    A: IntoIterator<Item = K>,
    B: IntoIterator<Item = K>,
{
    let mut counts: HashMap<K, (usize, usize)> = HashMap::new();
    let (mut na, mut nb) = (0usize, 0usize);
    for k in a {
        counts.entry(k).or_default().0 += 1;
        na += 1;
    }
    for k in b {
        counts.entry(k).or_default().1 += 1;
        nb += 1;
    }
    if na == 0 || nb == 0 {
        return Err(invalid("TV estimate needs two non-empty samples"));
    }
    let tv = counts
        .values()
        .map(|&(ca, cb)| (ca as f64 / na as f64 - cb as f64 / nb as f64).abs())
        .sum::<f64>()
        / 2.0;
    Ok(tv)
}

/// TV distance between empirical partition laws, keyed by canonical form.
pub fn tv_partition_estimate(a: &[Partition], b: &[Partition]) -> Result<f64> {
    let n = a.first().or(b.first()).map_or(0, Partition::n);
    if n > TV_PARTITION_MAX_N {
        return Err(Error::UnsupportedSize { n, max: TV_PARTITION_MAX_N });
    }
    if a.iter().chain(b).any(|p| p.n() != n) {
        return Err(invalid("partitions must share one index set"));
    }
    tv_distance(a.iter().map(Partition::key), b.iter().map(Partition::key))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub pvalue: f64,
}

/// Pearson goodness-of-fit test of `counts` against cell probabilities.
pub fn chi_square_gof(counts: &[usize], probs: &[f64]) -> Result<ChiSquareResult> {
    if counts.len() != probs.len() || counts.len() < 2 {
        return Err(invalid("chi-square test needs matching counts and probabilities, at least two cells"));
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(invalid("chi-square test needs observations"));
    }
    let t = total as f64;
    let mut stat = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        if p <= 0.0 {
            return Err(invalid("chi-square cell probabilities must be positive"));
        }
        let e = p * t;
        stat += (c as f64 - e).powi(2) / e;
    }
    let dof = counts.len() - 1;
    let pvalue = ChiSquared::new(dof as f64).map(|d| d.sf(stat)).unwrap_or(f64::NAN);
    Ok(ChiSquareResult { statistic: stat, dof, pvalue })
}

/// Binomial standard score of `hits` successes in `trials` against `p`.
pub fn binomial_z(hits: usize, trials: usize, p: f64) -> f64 {
    let t = trials as f64;
    let sd = (p * (1.0 - p) / t).sqrt();
    let freq = hits as f64 / t;
    if sd == 0.0 {
        return if freq == p { 0.0 } else { f64::INFINITY };
    }
    (freq - p) / sd
}

/// Provenance of a batch of Monte Carlo observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchMeta {
    pub source: String,
    pub n: usize,
    /// Observation time (`q` for graphs, `t` for limit processes).
    pub time: f64,
    pub replica_count: usize,
    pub seed_base: u64,
    pub truncation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BatchValues {
    Scalars(Vec<f64>),
    Lengths(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub values: BatchValues,
    pub meta: BatchMeta,
}

impl SampleBatch {
    pub fn new(values: BatchValues, meta: BatchMeta) -> Result<Self> {
        let len = match &values {
            BatchValues::Scalars(v) => v.len(),
            BatchValues::Lengths(v) => v.len(),
        };
        if meta.replica_count != len {
            return Err(invalid(format!(
                "replica count {} does not match {len} entries",
                meta.replica_count
            )));
        }
        if meta.truncation_count > meta.replica_count {
            return Err(invalid("truncation count exceeds replica count"));
        }
        Ok(Self { values, meta })
    }

    /// Scalar view: the values themselves, or the largest entry of each
    /// ordered vector (0 for an empty vector).
    pub fn leading(&self) -> Vec<f64> {
        match &self.values {
            BatchValues::Scalars(v) => v.clone(),
            BatchValues::Lengths(v) => v.iter().map(|l| l.first().copied().unwrap_or(0.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub wasserstein: f64,
    pub tv_estimate: Option<f64>,
    pub verdict: Verdict,
}

/// KS plus Wasserstein comparison of two scalar samples; passes when the
/// KS p-value exceeds `level`.
pub fn compare(a: &[f64], b: &[f64], level: f64) -> Result<ComparisonReport> {
    let ks = ks_two_sample(a, b)?;
    Ok(ComparisonReport {
        ks_statistic: ks.statistic,
        ks_pvalue: ks.pvalue,
        wasserstein: wasserstein1(a, b)?,
        tv_estimate: None,
        verdict: if ks.pvalue > level { Verdict::Pass } else { Verdict::Fail },
    })
}
