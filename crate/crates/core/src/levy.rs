//! Limit processes: the jump part `V^c`, the Brownian part with parabolic
//! drift, their sum `W^{κ,t,c}`, its reflection `B` above past minima,
//! and ordered excursion lengths of `B`.
//!
//! Brownian increments are exact Gaussians on the grid; jumps are applied
//! at the first grid point at or after their time, so grid values of
//! `V^c` are exact.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::Serialize;

use crate::config::RegimeParams;
use crate::error::{invalid, Error, Result};
use crate::rng::{purpose, stream_rng};

/// Default grid: `2^-12` of the horizon.
pub const DEFAULT_GRID_DIVISIONS: usize = 1 << 12;
/// Excursions shorter than this many grid steps are discarded by default.
pub const DEFAULT_MIN_STEPS: f64 = 4.0;

/// Sampled `V^c`: jumps `(ξ_j, c_j)` up to the horizon and drift `-Σ c_j²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpPath {
    pub jumps: Vec<(f64, f64)>,
    pub drift: f64,
    pub horizon: f64,
}

impl JumpPath {
    pub fn value(&self, s: f64) -> f64 {
        let jumped: f64 = self.jumps.iter().filter(|j| j.0 <= s).map(|j| j.1).sum();
        jumped + self.drift * s
    }
}

/// `V^c(s) = Σ_j (c_j 1{ξ_j ≤ s} - c_j² s)` with `ξ_j ~ Exp(c_j)`.
pub fn sample_vc<R: Rng + ?Sized>(c: &[f64], horizon: f64, rng: &mut R) -> Result<JumpPath> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid(format!("horizon must be finite and positive, got {horizon}")));
    }
    if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(invalid("jump sizes must be finite and positive"));
    }
    let mut jumps = Vec::new();
    for &cj in c {
        let xi = Exp::new(cj).unwrap().sample(rng);
        if xi <= horizon {
            jumps.push((xi, cj));
        }
    }
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(JumpPath { jumps, drift: -c.iter().map(|v| v * v).sum::<f64>(), horizon })
}

/// `Σ_{j≥from} c_j³`, the part of `c` a truncation at `from` leaves out.
pub fn dust_tail_cubed(c: &[f64], from: usize) -> f64 {
    c.iter().skip(from).map(|v| v * v * v).sum()
}

/// Path values on the grid `k · step`, `k = 0..=⌈horizon / step⌉`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPath {
    pub step: f64,
    pub values: Vec<f64>,
    /// Superposed jumps `(time, size)`.
    pub jump_times: Vec<(f64, f64)>,
}

impl GridPath {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    pub fn value_at(&self, s: f64) -> f64 {
        let k = ((s / self.step).round() as usize).min(self.values.len() - 1);
        self.values[k]
    }

    /// Grid index at which a jump at time `t` is applied.
    pub fn jump_index(&self, t: f64) -> usize {
        (t / self.step).ceil() as usize
    }
}

fn grid_len(horizon: f64, step: f64) -> Result<usize> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid(format!("horizon must be finite and positive, got {horizon}")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(invalid(format!("step must be finite and positive, got {step}")));
    }
    let cells = (horizon / step - 1e-9).ceil().max(1.0);
    if cells > 1e9 {
        return Err(invalid("grid too fine for the horizon"));
    }
    Ok(cells as usize + 1)
}

/// Brownian part `W̃(s) = √κ B(s) + t s - κ s² / 2` and `V^c`, from
/// independent streams of replica `replica` under master seed `seed`.
pub fn sample_w_parts(
    params: &RegimeParams,
    horizon: f64,
    step: f64,
    seed: u64,
    replica: u64,
) -> Result<(GridPath, JumpPath)> {
    let len = grid_len(horizon, step)?;
    let mut gauss = stream_rng(seed, replica, purpose::GAUSSIAN);
    let mut jumps = stream_rng(seed, replica, purpose::JUMPS);
    let vol = params.kappa.sqrt() * step.sqrt();
    let mut values = Vec::with_capacity(len);
    let mut bm = 0.0;
    values.push(0.0);
    for k in 1..len {
        if vol > 0.0 {
            let z: f64 = StandardNormal.sample(&mut gauss);
            bm += vol * z;
        }
        let s = k as f64 * step;
        values.push(bm + params.t * s - 0.5 * params.kappa * s * s);
    }
    let grid_horizon = (len - 1) as f64 * step;
    let vc = sample_vc(&params.c, grid_horizon, &mut jumps)?;
    Ok((GridPath { step, values, jump_times: Vec::new() }, vc))
}

/// `W^{κ,t,c} = W̃^{κ,t} + V^c` on the grid.
pub fn sample_w(params: &RegimeParams, horizon: f64, step: f64, seed: u64, replica: u64) -> Result<GridPath> {
    if params.kappa == 0.0 && params.c.is_empty() {
        return Err(Error::DegenerateProcess(
            "kappa = 0 with empty c leaves a pure drift with no excursions".into(),
        ));
    }
    let (mut w, vc) = sample_w_parts(params, horizon, step, seed, replica)?;
    let mut pending = vc.jumps.iter().peekable();
    let mut jumped = 0.0;
    for (k, v) in w.values.iter_mut().enumerate() {
        let s = k as f64 * step;
        while let Some(&&(t, size)) = pending.peek() {
            if t > s {
                break;
            }
            jumped += size;
            pending.next();
        }
        *v += jumped + vc.drift * s;
    }
    w.jump_times = vc.jumps;
    Ok(w)
}

/// `B(s) = W(s) - min_{u≤s} W(u)` in one running-minimum sweep.
pub fn reflect(p: &GridPath) -> GridPath {
    let mut low = f64::INFINITY;
    let values = p
        .values
        .iter()
        .map(|&v| {
            low = low.min(v);
            v - low
        })
        .collect();
    GridPath { step: p.step, values, jump_times: p.jump_times.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcursionSet {
    /// Closed excursions of length at least `min_length`, non-increasing.
    pub lengths: Vec<f64>,
    /// Total length of closed excursions shorter than `min_length`.
    pub discarded: f64,
    /// Length of the excursion still open at the horizon, if any.
    pub open: Option<f64>,
    /// Measure of grid cells with zero at both ends.
    pub zero_measure: f64,
    /// Grid index of the first positive point of each entry of `lengths`.
    #[serde(skip)]
    pub starts: Vec<usize>,
}

impl ExcursionSet {
    pub fn truncated(&self) -> bool {
        self.open.is_some()
    }

    pub fn largest(&self) -> f64 {
        self.lengths.first().copied().unwrap_or(0.0)
    }

    /// Everything the scan accounted for; equals the grid horizon.
    pub fn accounted(&self) -> f64 {
        self.lengths.iter().sum::<f64>() + self.discarded + self.open.unwrap_or(0.0) + self.zero_measure
    }
}

/// Maximal runs where `b > 0`, measured from the zero before the run to
/// the zero that ends it.
pub fn excursions(b: &GridPath, min_length: f64) -> ExcursionSet {
    let step = b.step;
    let mut lengths = Vec::new();
    let mut starts = Vec::new();
    let mut discarded = 0.0;
    let mut zero_cells = 0usize;
    let mut last_zero = 0usize;
    for k in 1..b.values.len() {
        if b.values[k] > 0.0 {
            continue;
        }
        if last_zero + 1 == k {
            zero_cells += 1;
        } else {
            let len = (k - last_zero) as f64 * step;
            if len >= min_length {
                lengths.push(len);
                starts.push(last_zero + 1);
            } else {
                discarded += len;
            }
        }
        last_zero = k;
    }
    let tail = b.values.len() - 1 - last_zero;
    let open = (tail > 0).then_some(tail as f64 * step);
    let mut pairs: Vec<(f64, usize)> = lengths.into_iter().zip(starts).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (lengths, starts) = pairs.into_iter().unzip();
    ExcursionSet { lengths, discarded, open, zero_measure: zero_cells as f64 * step, starts }
}

/// Number of closed excursions whose first positive grid point carries a
/// jump of `V^c`.
pub fn jump_started_excursions(b: &GridPath, set: &ExcursionSet) -> usize {
    let mut jump_idx: Vec<usize> = b.jump_times.iter().map(|j| b.jump_index(j.0)).collect();
    jump_idx.sort_unstable();
    set.starts.iter().filter(|k| jump_idx.binary_search(k).is_ok()).count()
}

/// Heuristic horizon: five times a rough scale of the largest excursion.
pub fn default_horizon(params: &RegimeParams) -> f64 {
    let t_plus = params.t.max(0.0);
    let scale = if params.kappa > 0.0 {
        t_plus / params.kappa + 2.0 * params.kappa.powf(-1.0 / 3.0)
    } else {
        let c2: f64 = params.c.iter().map(|v| v * v).sum();
        let c_min = params.c.last().copied().unwrap_or(1.0);
        1.0 / c_min + t_plus / c2.max(f64::MIN_POSITIVE)
    };
    5.0 * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn grid(values: Vec<f64>, step: f64) -> GridPath {
        GridPath { step, values, jump_times: vec![] }
    }

    #[test]
    fn empty_dust_is_zero_process() {
        let mut rng = stream_rng(0, 0, purpose::JUMPS);
        let v = sample_vc(&[], 5.0, &mut rng).unwrap();
        assert!(v.jumps.is_empty());
        assert_eq!(v.value(3.0), 0.0);
    }

    #[test]
    fn single_jump_path_before_and_after() {
        for r in 0..50 {
            let mut rng = stream_rng(1, r, purpose::JUMPS);
            let v = sample_vc(&[1.0], 1e6, &mut rng).unwrap();
            let xi = v.jumps[0].0;
            assert_eq!(v.value(xi * 0.5), -xi * 0.5);
            assert!((v.value(xi) - (1.0 - xi)).abs() < 1e-12);
        }
    }

    #[test]
    fn vc_mean_at_one() {
        let reps = 100_000u64;
        let mean = (0..reps)
            .map(|r| {
                let mut rng = stream_rng(2, r, purpose::JUMPS);
                sample_vc(&[1.0], 1.0, &mut rng).unwrap().value(1.0)
            })
            .sum::<f64>()
            / reps as f64;
        // E V(1) = (1 - e^{-1}) - 1
        let p = 1.0 - (-1.0f64).exp();
        let sd = (p * (1.0 - p) / reps as f64).sqrt();
        assert!((mean + (-1.0f64).exp()).abs() < 3.0 * sd, "{mean}");
    }

    #[test]
    fn degenerate_regime_is_rejected() {
        let p = RegimeParams::new(0.0, 1.0, vec![]).unwrap();
        assert!(matches!(sample_w(&p, 1.0, 0.1, 0, 0), Err(Error::DegenerateProcess(_))));
        let p = RegimeParams::new(1.0, 0.0, vec![]).unwrap();
        assert!(sample_w(&p, 1.0, 0.0, 0, 0).is_err());
        assert!(sample_w(&p, -1.0, 0.1, 0, 0).is_err());
    }

    #[test]
    fn pure_jump_regime_matches_vc_on_grid() {
        let p = RegimeParams::new(0.0, 0.0, vec![1.0]).unwrap();
        for r in 0..20 {
            let w = sample_w(&p, 3.0, 0.01, 5, r).unwrap();
            let (_, vc) = sample_w_parts(&p, 3.0, 0.01, 5, r).unwrap();
            for (k, v) in w.values.iter().enumerate() {
                assert!((v - vc.value(w.time(k))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_shape() {
        let p = RegimeParams::new(1.0, 0.0, vec![]).unwrap();
        let w = sample_w(&p, 1.0, 0.25, 0, 0).unwrap();
        assert_eq!(w.values.len(), 5);
        assert_eq!(w.values[0], 0.0);
        let w = sample_w(&p, 1.1, 0.25, 0, 0).unwrap();
        assert_eq!(w.values.len(), 6);
    }

    #[test]
    fn reflect_examples() {
        let b = reflect(&grid(vec![0.0, -1.0, -1.5, -3.0], 1.0));
        assert_eq!(b.values, vec![0.0; 4]);
        let b = reflect(&grid(vec![0.0, 1.0, 0.5, -0.2, 0.3], 1.0));
        let want = [0.0, 1.0, 0.5, 0.0, 0.5];
        for (g, w) in b.values.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn excursion_examples() {
        let zero = excursions(&grid(vec![0.0; 10], 0.5), 0.0);
        assert!(zero.lengths.is_empty() && !zero.truncated());
        assert_eq!(zero.zero_measure, 4.5);

        let step = 1e-3;
        let values: Vec<f64> = (0..=4000)
            .map(|k| (1.0 - (k as f64 * step - 2.0).abs()).max(0.0))
            .collect();
        let set = excursions(&grid(values, step), 0.0);
        assert_eq!(set.lengths.len(), 1);
        assert!((set.lengths[0] - 2.0).abs() <= step);
        assert!((set.accounted() - 4.0).abs() < 1e-9);

        let open = excursions(&grid(vec![0.0, 0.0, 1.0, 2.0], 1.0), 0.0);
        assert_eq!(open.open, Some(2.0));
        assert!(open.truncated());
    }

    #[test]
    fn short_excursions_are_discarded_but_accounted() {
        let set = excursions(&grid(vec![0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0], 1.0), 3.0);
        assert_eq!(set.lengths, vec![4.0]);
        assert_eq!(set.discarded, 2.0);
        assert_eq!(set.accounted(), 6.0);
    }

    #[test]
    fn tail_bound() {
        assert_eq!(dust_tail_cubed(&[2.0, 1.0, 0.5], 1), 1.125);
        assert_eq!(dust_tail_cubed(&[2.0], 3), 0.0);
    }

    #[test]
    fn default_horizon_standard_case() {
        let p = RegimeParams::new(1.0, 0.0, vec![]).unwrap();
        assert_eq!(default_horizon(&p), 10.0);
    }

    #[test]
    fn jump_start_counter() {
        let b = GridPath { step: 1.0, values: vec![0.0, 2.0, 1.0, 0.0, 0.0, 1.0, 0.0], jump_times: vec![(0.5, 2.0)] };
        let set = excursions(&b, 0.0);
        assert_eq!(set.lengths.len(), 2);
        assert_eq!(jump_started_excursions(&b, &set), 1);
    }
}
