//! Convergence study: largest breadth-first-walk components at
//! `q_n = 1/σ₂ + t` against largest excursions of the reflected limit.

use rayon::prelude::*;
use serde::Serialize;

use crate::bfw::{build_bfw, components};
use crate::config::{default_l, make_standard_config, moment_report, RegimeParams};
use crate::error::{invalid, Result};
use crate::levy::{default_horizon, excursions, reflect, sample_w, DEFAULT_GRID_DIVISIONS, DEFAULT_MIN_STEPS};
use crate::rng::{purpose, stream_rng};

use super::{ks_two_sample, sorted_l2_distance, wasserstein1, BatchMeta, BatchValues, SampleBatch};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyOptions {
    /// Leading components kept per replica.
    pub top_k: usize,
    /// Fixed number of dust blocks; [`default_l`] when `None`.
    pub l: Option<usize>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub min_length: Option<f64>,
    /// KS level for the final non-rejection check.
    pub level: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { top_k: 3, l: None, horizon: None, step: None, min_length: None, level: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub l: usize,
    pub sigma2: f64,
    pub q: f64,
    pub replicas: usize,
    pub mean_largest: f64,
    pub mean_second: f64,
    pub limit_mean_largest: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub wasserstein: f64,
    /// Mean `ℓ²` distance between paired top-K vectors.
    pub mean_sorted_l2: f64,
    pub limit_truncations: usize,
    /// Replicas whose component masses failed to sum to `σ₁`.
    pub mass_violations: usize,
}

impl ConvergenceRow {
    /// Mean largest component within a factor of two of the limit's.
    pub fn scale_guard(&self) -> bool {
        let r = self.mean_largest / self.limit_mean_largest;
        (0.5..=2.0).contains(&r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyVerdict {
    pub ks_decreasing: bool,
    pub final_not_rejected: bool,
    pub scale_guard: bool,
    pub mass_conserved: bool,
}

impl StudyVerdict {
    pub fn evaluate(rows: &[ConvergenceRow], level: f64) -> Self {
        Self {
            ks_decreasing: rows.windows(2).all(|w| w[1].ks_statistic < w[0].ks_statistic),
            final_not_rejected: rows.last().is_some_and(|r| r.ks_pvalue > level),
            scale_guard: rows.iter().all(ConvergenceRow::scale_guard),
            mass_conserved: rows.iter().all(|r| r.mass_violations == 0),
        }
    }

    pub fn passed(&self) -> bool {
        self.ks_decreasing && self.final_not_rejected && self.scale_guard && self.mass_conserved
    }
}

fn master_for(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Top-`k` component masses of `replicas` graphs built from the standard
/// configuration at size `n`, observed at `q = 1/σ₂ + t`.
pub fn graph_batch(
    params: &RegimeParams,
    n: usize,
    l: usize,
    replicas: usize,
    top_k: usize,
    seed: u64,
) -> Result<(SampleBatch, usize)> {
    let x = make_standard_config(n, params, l)?;
    let mom = moment_report(&x);
    let q = 1.0 / mom.sigma2 + params.t;
    if q <= 0.0 {
        return Err(invalid(format!("observation time q = {q} is not positive")));
    }
    let master = master_for(seed, n as u64);
    let runs: Vec<(Vec<f64>, bool)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(master, r as u64, purpose::GRAPH);
            let res = build_bfw(&x, q, &mut rng)?;
            let comps = components(&res);
            let total: f64 = comps.iter().sum();
            let ok = (total - mom.sigma1).abs() <= 1e-9 * mom.sigma1.max(1.0);
            Ok((comps.into_iter().take(top_k).collect(), ok))
        })
        .collect::<Result<_>>()?;
    let violations = runs.iter().filter(|r| !r.1).count();
    let meta = BatchMeta {
        source: "bfw".into(),
        n,
        time: q,
        replica_count: replicas,
        seed_base: master,
        truncation_count: 0,
    };
    let batch = SampleBatch::new(BatchValues::Lengths(runs.into_iter().map(|r| r.0).collect()), meta)?;
    Ok((batch, violations))
}

/// Top-`k` excursion lengths of the reflected limit process. A replica
/// whose open final excursion could be the largest is re-run on a doubled
/// horizon, up to three times.
pub fn limit_batch(
    params: &RegimeParams,
    replicas: usize,
    top_k: usize,
    opts: &StudyOptions,
    seed: u64,
) -> Result<SampleBatch> {
    let horizon = opts.horizon.unwrap_or_else(|| default_horizon(params));
    let master = master_for(seed, u64::MAX);
    let runs: Vec<(Vec<f64>, bool)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut h = horizon;
            let mut flagged = false;
            for _ in 0..4 {
                let step = opts.step.unwrap_or(h / DEFAULT_GRID_DIVISIONS as f64);
                let min_len = opts.min_length.unwrap_or(DEFAULT_MIN_STEPS * step);
                let w = sample_w(params, h, step, master, r as u64)?;
                let set = excursions(&reflect(&w), min_len);
                match set.open {
                    Some(open) if open >= set.largest() => {
                        flagged = true;
                        h *= 2.0;
                    }
                    _ => return Ok((set.lengths.into_iter().take(top_k).collect(), flagged)),
                }
            }
            Ok((Vec::new(), true))
        })
        .collect::<Result<_>>()?;
    let truncations = runs.iter().filter(|r| r.1).count();
    let meta = BatchMeta {
        source: "limit".into(),
        n: 0,
        time: params.t,
        replica_count: replicas,
        seed_base: master,
        truncation_count: truncations,
    };
    SampleBatch::new(BatchValues::Lengths(runs.into_iter().map(|r| r.0).collect()), meta)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One row per `n`: the largest graph component against the largest limit
/// excursion by KS and Wasserstein distance, plus paired top-K `ℓ²` distances.
pub fn convergence_study(
    params: &RegimeParams,
    n_list: &[usize],
    replicas: usize,
    seed: u64,
    opts: &StudyOptions,
) -> Result<Vec<ConvergenceRow>> {
    if replicas == 0 || n_list.is_empty() || opts.top_k == 0 {
        return Err(invalid("convergence study needs replicas, sizes and top_k > 0"));
    }
    let limit = limit_batch(params, replicas, opts.top_k, opts, seed)?;
    let limit_largest = limit.leading();
    let BatchValues::Lengths(limit_vecs) = &limit.values else { unreachable!() };

    n_list
        .iter()
        .map(|&n| {
            let l = opts.l.unwrap_or_else(|| default_l(n, params));
            let (graph, violations) = graph_batch(params, n, l, replicas, opts.top_k, seed)?;
            let BatchValues::Lengths(vecs) = &graph.values else { unreachable!() };
            let largest = graph.leading();
            let second: Vec<f64> = vecs.iter().map(|v| v.get(1).copied().unwrap_or(0.0)).collect();
            let ks = ks_two_sample(&largest, &limit_largest)?;
            let l2: Vec<f64> =
                vecs.iter().zip(limit_vecs).map(|(a, b)| sorted_l2_distance(a, b)).collect();
            Ok(ConvergenceRow {
                n,
                l,
                sigma2: 1.0 / (graph.meta.time - params.t),
                q: graph.meta.time,
                replicas,
                mean_largest: mean(&largest),
                mean_second: mean(&second),
                limit_mean_largest: mean(&limit_largest),
                ks_statistic: ks.statistic,
                ks_pvalue: ks.pvalue,
                wasserstein: wasserstein1(&largest, &limit_largest)?,
                mean_sorted_l2: mean(&l2),
                limit_truncations: limit.meta.truncation_count,
                mass_violations: violations,
            })
        })
        .collect()
}
