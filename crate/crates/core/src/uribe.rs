//! Exponential-mark representation of the multiplicative coalescent.
//!
//! Block `i` receives an independent mark `ξ_i ~ Exp(x_i)`. Listing blocks
//! by increasing mark, position `k` has residual
//! `r_k(s) = ξ_{π_k} - s Σ_{j<k} x_{π_j}` at time `s`. A position opens a
//! new cluster iff its residual is a strict running maximum; otherwise it
//! joins the cluster in progress.
//!
//! The rule reproduces both event identities that pin the construction
//! down: all blocks are separate at `s` iff
//! `ξ_{π_{k+1}} > ξ_{π_k} + s x_{π_k}` for every `k`, and after `a`, `b`
//! fuse the next position stays separate iff its mark exceeds
//! `ξ_a ∧ ξ_b` by more than `s (x_a + x_b)`. Residual lines have slopes
//! that steepen with `k`, so once a position loses its record status it
//! never regains it and the partitions coarsen monotonically.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::config::MassConfig;
use crate::error::{invalid, Error, Result};
use crate::partition::{Partition, Trajectory};
use crate::rng::{purpose, stream_rng};
use crate::stats::{ks_one_sample, KsResult};

/// Marks `ξ` and the permutation `π` that sorts them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpMarks {
    xi: Vec<f64>,
    pi: Vec<usize>,
}

impl ExpMarks {
    /// Wraps explicit marks. They must be finite, positive and distinct.
    pub fn from_marks(x: &MassConfig, xi: Vec<f64>) -> Result<Self> {
        if xi.len() != x.len() {
            return Err(invalid(format!("{} marks for {} blocks", xi.len(), x.len())));
        }
        if xi.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("marks must be finite and positive"));
        }
        let pi = sort_order(&xi);
        if pi.windows(2).any(|w| xi[w[0]] == xi[w[1]]) {
            return Err(invalid("marks must be distinct"));
        }
        Ok(Self { xi, pi })
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// `pi[k]` is the block with the `k`-th smallest mark.
    pub fn pi(&self) -> &[usize] {
        &self.pi
    }

    /// Marks in increasing order.
    pub fn sorted(&self) -> impl Iterator<Item = f64> + '_ {
        self.pi.iter().map(|&i| self.xi[i])
    }
}

fn sort_order(xi: &[f64]) -> Vec<usize> {
    let mut pi: Vec<usize> = (0..xi.len()).collect();
    pi.sort_by(|&a, &b| xi[a].total_cmp(&xi[b]));
    pi
}

/// Independent `ξ_i ~ Exp(x_i)`; exact ties are re-drawn.
pub fn sample_marks<R: Rng + ?Sized>(x: &MassConfig, rng: &mut R) -> ExpMarks {
    let dists: Vec<Exp<f64>> = x.masses().iter().map(|&m| Exp::new(m).unwrap()).collect();
    loop {
        let xi: Vec<f64> = dists.iter().map(|d| d.sample(rng)).collect();
        let pi = sort_order(&xi);
        if pi.windows(2).all(|w| xi[w[0]] < xi[w[1]]) && xi.iter().all(|v| *v > 0.0) {
            return ExpMarks { xi, pi };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualVector {
    /// Residuals by mark-order position.
    pub r: Vec<f64>,
    pub s: f64,
}

impl ResidualVector {
    /// Residual of each block, indexed by block rather than position.
    pub fn by_block(&self, marks: &ExpMarks) -> Vec<f64> {
        let mut out = vec![0.0; self.r.len()];
        for (k, &i) in marks.pi.iter().enumerate() {
            out[i] = self.r[k];
        }
        out
    }
}

pub fn residuals(x: &MassConfig, marks: &ExpMarks, s: f64) -> ResidualVector {
    let m = x.masses();
    let mut before = 0.0;
    let r = marks
        .pi
        .iter()
        .map(|&i| {
            let v = marks.xi[i] - s * before;
            before += m[i];
            v
        })
        .collect();
    ResidualVector { r, s }
}

/// Cluster state at time `s` by the record rule.
pub fn partition_at(x: &MassConfig, marks: &ExpMarks, s: f64) -> Partition {
    let res = residuals(x, marks, s);
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for (k, &i) in marks.pi.iter().enumerate() {
        if res.r[k] > best {
            best = res.r[k];
            blocks.push(vec![i]);
        } else {
            blocks.last_mut().expect("first position always opens").push(i);
        }
    }
    Partition::from_blocks(blocks, x).expect("record clusters cover every block")
}

/// Time at which each position stops being a record:
/// `d_k = min_{i<k} (ξ_{π_k} - ξ_{π_i}) / Σ_{i≤j<k} x_{π_j}`, with
/// `d_0 = ∞`. Costs `O(n²)`.
pub fn record_death_times(x: &MassConfig, marks: &ExpMarks) -> Vec<f64> {
    let m = x.masses();
    let sorted: Vec<f64> = marks.sorted().collect();
    let mass: Vec<f64> = marks.pi.iter().map(|&i| m[i]).collect();
    let mut death = vec![f64::INFINITY; sorted.len()];
    for k in 1..sorted.len() {
        let mut slope_gap = 0.0;
        let mut best = f64::INFINITY;
        for i in (0..k).rev() {
            slope_gap += mass[i];
            best = best.min((sorted[k] - sorted[i]) / slope_gap);
        }
        death[k] = best;
    }
    death
}

/// First merge time `S = min_k d_k`; infinite for a single block.
pub fn first_merge_time(x: &MassConfig, marks: &ExpMarks) -> f64 {
    record_death_times(x, marks).into_iter().fold(f64::INFINITY, f64::min)
}

/// Full merge history: record deaths in increasing order, each fusing the
/// dying position's cluster into the cluster before it.
pub fn merge_trajectory(x: &MassConfig, marks: &ExpMarks) -> Trajectory {
    let death = record_death_times(x, marks);
    let mut order: Vec<usize> = (1..death.len()).collect();
    order.sort_by(|&a, &b| death[a].total_cmp(&death[b]));

    let mut state = Partition::singletons(x);
    let mut times = Vec::with_capacity(order.len());
    let mut states = Vec::with_capacity(order.len() + 1);
    states.push(state.clone());
    for k in order {
        let key = state.key();
        let a = key[marks.pi[k - 1]] as usize;
        let b = key[marks.pi[k]] as usize;
        debug_assert_ne!(a, b, "record death must fuse two distinct clusters");
        state = state.merge(a, b);
        times.push(death[k]);
        states.push(state.clone());
    }
    Trajectory { times, states }
}

/// One row of the diagram export: position `k`, block, mark, and the slope
/// `Σ_{j<k} x_{π_j}` of its residual line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagramRow {
    pub k: usize,
    pub block: usize,
    pub xi: f64,
    pub slope: f64,
}

pub fn diagram_rows(x: &MassConfig, marks: &ExpMarks) -> Vec<DiagramRow> {
    let m = x.masses();
    let mut slope = 0.0;
    marks
        .pi
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let row = DiagramRow { k, block: i, xi: marks.xi[i], slope };
            slope += m[i];
            row
        })
        .collect()
}

pub const RESIDUAL_CHECK_MIN_ACCEPTED: usize = 1000;

#[derive(Debug, Clone, Serialize)]
pub struct ResidualLawReport {
    pub replicas: usize,
    pub accepted: usize,
    /// KS test of `ξ_i(s)` against `Exp(x_i)`, one per block.
    pub ks: Vec<KsResult>,
    /// Accepted replicas in which residuals order the blocks as the marks do.
    pub order_preserved: usize,
}

impl ResidualLawReport {
    pub fn passes(&self, level: f64) -> bool {
        self.ks.iter().all(|k| k.pvalue > level) && self.order_preserved == self.accepted
    }
}

/// Conditions on `{S > s}` by rejection and tests the residual marks
/// against their unconditioned exponential law.
pub fn residual_law_check(
    x: &MassConfig,
    s: f64,
    replicas: usize,
    seed: u64,
) -> Result<ResidualLawReport> {
    let n = x.len();
    let mut per_block: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut accepted = 0;
    let mut order_preserved = 0;
    for r in 0..replicas {
        let mut rng = stream_rng(seed, r as u64, purpose::MARKS);
        let marks = sample_marks(x, &mut rng);
        if first_merge_time(x, &marks) <= s {
            continue;
        }
        accepted += 1;
        let res = residuals(x, &marks, s).by_block(&marks);
        if sort_order(&res) == marks.pi {
            order_preserved += 1;
        }
        for (i, v) in res.into_iter().enumerate() {
            per_block[i].push(v);
        }
    }
    if accepted < RESIDUAL_CHECK_MIN_ACCEPTED {
        return Err(Error::InsufficientSamples {
            accepted,
            required: RESIDUAL_CHECK_MIN_ACCEPTED,
        });
    }
    let m = x.masses();
    let ks = per_block
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let rate = m[i];
            ks_one_sample(v, |t| if t <= 0.0 { 0.0 } else { -(-rate * t).exp_m1() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResidualLawReport { replicas, accepted, ks, order_preserved })
}
