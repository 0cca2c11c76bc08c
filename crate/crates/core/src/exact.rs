//! Exact Markov-chain simulation of the multiplicative coalescent and
//! closed-form laws for its first merger.
//!
//! Indices and permutations are zero-based throughout: `tau[k]` is the
//! block found at position `k` of the ordering.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::config::MassConfig;
use crate::error::{invalid, Error, Result};
use crate::partition::{Partition, Trajectory};
use crate::rng::SimRng;

/// Largest configuration accepted by [`brute_force_s`].
pub const BRUTE_FORCE_MAX_N: usize = 6;

/// Continuous-time chain in which every pair of current blocks `(A, B)`
/// merges at rate `mass(A) · mass(B)`.
///
/// Stops at `horizon` or at full coalescence. Each step costs `O(k)` in
/// the current number of blocks `k`.
pub fn gillespie<R: Rng + ?Sized>(x: &MassConfig, horizon: f64, rng: &mut R) -> Trajectory {
    let mut state = Partition::singletons(x);
    let mut times = Vec::new();
    let mut states = vec![state.clone()];
    let total_mass = x.total();
    let mut now = 0.0;
    let mut weights = Vec::with_capacity(x.len());

    while state.num_blocks() > 1 {
        let masses = state.block_mass();
        // ordered-pair weights m_a (σ₁ - m_a); their sum is twice the total rate
        weights.clear();
        weights.extend(masses.iter().map(|m| m * (total_mass - m).max(0.0)));
        let twice_rate: f64 = weights.iter().sum();
        if twice_rate <= 0.0 {
            break;
        }
        now += Exp::new(twice_rate / 2.0).expect("positive rate").sample(rng);
        if now > horizon {
            break;
        }
        let a = pick(&weights, rng);
        // partner chosen proportional to mass among the other blocks
        weights.clear();
        weights.extend(masses.iter().enumerate().map(|(k, m)| if k == a { 0.0 } else { *m }));
        let b = pick(&weights, rng);
        state = state.merge(a, b);
        times.push(now);
        states.push(state.clone());
    }
    Trajectory { times, states }
}

/// Inverse-CDF draw from unnormalized non-negative weights.
fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (k, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = k;
            if target < acc {
                return k;
            }
        }
    }
    last
}

/// `Σ_{i<j} x_i x_j`, the total merge rate of the initial state.
pub fn pair_rate_sum(x: &MassConfig) -> f64 {
    let mut before = 0.0;
    let mut sum = 0.0;
    for m in x.masses() {
        sum += m * before;
        before += m;
    }
    sum
}

/// `P(S > s) = exp(-s Σ_{i<j} x_i x_j)`.
pub fn prob_no_merge(x: &MassConfig, s: f64) -> f64 {
    (-s * pair_rate_sum(x)).exp()
}

fn check_permutation(tau: &[usize], n: usize) -> Result<()> {
    if tau.len() != n {
        return Err(invalid(format!("permutation has length {}, expected {n}", tau.len())));
    }
    let mut seen = vec![false; n];
    for &t in tau {
        if t >= n || std::mem::replace(&mut seen[t], true) {
            return Err(invalid(format!("{tau:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// Probability that the size-biased order of `x` equals `tau`:
/// `Π_{i<n} x_{τ_i} / Σ_{j≥i} x_{τ_j}`.
pub fn prob_pi(x: &MassConfig, tau: &[usize]) -> Result<f64> {
    check_permutation(tau, x.len())?;
    let m = x.masses();
    let mut remaining = x.total();
    let mut p = 1.0;
    for &t in &tau[..tau.len() - 1] {
        p *= m[t] / remaining;
        remaining -= m[t];
    }
    Ok(p)
}

/// Probability that exactly one merge, of blocks `a` and `b`, happened by
/// time `s`: `(1 - e^{-s x_a x_b}) · exp(-s Σ_{(j,k)≠(a,b)} x_j x_k)`.
pub fn prob_first_merge_pair(x: &MassConfig, s: f64, pair: (usize, usize)) -> Result<f64> {
    let (a, b) = pair;
    let n = x.len();
    if a == b || a >= n || b >= n {
        return Err(invalid(format!("invalid block pair ({a}, {b}) for {n} blocks")));
    }
    let m = x.masses();
    let own = m[a] * m[b];
    let rest = pair_rate_sum(x) - own;
    Ok(-(-s * own).exp_m1() * (-s * rest).exp())
}

/// Conditional weight `P(π ∈ {τ, τ*} | T(s) = θ_ab)`, where `τ*` swaps
/// `a` and `b`. Requires `a` and `b` to be adjacent in `tau`.
///
/// Equals the size-biased order probability of the reduced configuration
/// in which `a` and `b` are fused into one block of mass `x_a + x_b`.
pub fn i12(x: &MassConfig, tau: &[usize], pair: (usize, usize)) -> Result<f64> {
    let n = x.len();
    check_permutation(tau, n)?;
    let (a, b) = pair;
    if a == b || a >= n || b >= n {
        return Err(invalid(format!("invalid block pair ({a}, {b}) for {n} blocks")));
    }
    let pa = tau.iter().position(|&t| t == a).unwrap();
    let pb = tau.iter().position(|&t| t == b).unwrap();
    if pa.abs_diff(pb) != 1 {
        return Err(invalid(format!("blocks {a} and {b} are not adjacent in {tau:?}")));
    }
    let i = pa.min(pb);
    let m = x.masses();
    // tail[j] = Σ_{k≥j} x_{τ_k}
    let mut tail = vec![0.0; n + 1];
    for j in (0..n).rev() {
        tail[j] = tail[j + 1] + m[tau[j]];
    }
    let mut w = 1.0;
    for j in 0..i {
        w *= m[tau[j]] / tail[j];
    }
    let fused = m[a] + m[b];
    w *= fused / (fused + tail[i + 2]);
    for j in (i + 2)..n.saturating_sub(1) {
        w *= m[tau[j]] / tail[j];
    }
    Ok(w)
}

/// Evaluation route for [`brute_force_s`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    /// Integrate the nested exponential integrals layer by layer in closed
    /// form, innermost first.
    AnalyticCascade,
    /// Plain Monte Carlo estimate of the same nested integrals.
    MonteCarlo { samples: usize, seed: u64 },
}

/// `C · e^{-rate · u}`, the value of the already integrated inner layers as
/// a function of the next outer variable `u`.
#[derive(Debug, Clone, Copy)]
struct ExpTerm {
    coeff: f64,
    rate: f64,
}

impl ExpTerm {
    /// `∫_{v + shift}^∞ w e^{-w u} · self(u) du`, returned as a function of `v`.
    fn integrate_tail(self, w: f64, shift: f64) -> ExpTerm {
        let rate = w + self.rate;
        ExpTerm {
            coeff: self.coeff * w / rate * (-rate * shift).exp(),
            rate,
        }
    }
}

/// `P(S > s)` summed over all `n!` orderings of the nested integral
/// `∫_0^∞ du_1 x_{τ_1} e^{-x_{τ_1} u_1} ∫_{u_1 + s x_{τ_1}}^∞ du_2 … `.
pub fn brute_force_s(x: &MassConfig, s: f64, quadrature: Quadrature) -> Result<f64> {
    let n = x.len();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::UnsupportedSize { n, max: BRUTE_FORCE_MAX_N });
    }
    if !(s.is_finite() && s >= 0.0) {
        return Err(invalid(format!("s must be finite and non-negative, got {s}")));
    }
    match quadrature {
        Quadrature::AnalyticCascade => {
            let m = x.masses();
            let mut total = 0.0;
            for_each_permutation(n, |tau| {
                let mut term = ExpTerm { coeff: 1.0, rate: 0.0 };
                for k in (1..n).rev() {
                    term = term.integrate_tail(m[tau[k]], s * m[tau[k - 1]]);
                }
                // outermost layer has lower limit 0
                total += term.integrate_tail(m[tau[0]], 0.0).coeff;
            });
            Ok(total)
        }
        Quadrature::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(invalid("Monte Carlo quadrature needs at least one sample"));
            }
            let mut rng = crate::rng::stream_rng(seed, 0, crate::rng::purpose::MAIN);
            let dists: Vec<Exp<f64>> =
                x.masses().iter().map(|&m| Exp::new(m).unwrap()).collect();
            let mut hits = 0usize;
            let mut u = vec![(0.0, 0usize); n];
            for _ in 0..samples {
                for (i, d) in dists.iter().enumerate() {
                    u[i] = (d.sample(&mut rng), i);
                }
                u.sort_by(|p, q| p.0.total_cmp(&q.0));
                let m = x.masses();
                if u.windows(2).all(|w| w[1].0 > w[0].0 + s * m[w[0].1]) {
                    hits += 1;
                }
            }
            Ok(hits as f64 / samples as f64)
        }
    }
}

/// Calls `f` on every permutation of `0..n` (Heap's algorithm).
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// One replica of the chain observed at `s`, for Monte Carlo drivers.
pub fn gillespie_state_at(x: &MassConfig, s: f64, rng: &mut SimRng) -> Partition {
    gillespie(x, s, rng).final_state().clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, stream_rng};

    fn cfg(v: &[f64]) -> MassConfig {
        MassConfig::new(v.to_vec()).unwrap()
    }

    /// Composite Simpson rule on `[lo, hi]`.
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
        let h = (hi - lo) / intervals as f64;
        let mut acc = f(lo) + f(hi);
        for k in 1..intervals {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + k as f64 * h);
        }
        acc * h / 3.0
    }

    /// Numerical oracle for n = 3: the innermost layer in closed form, the
    /// two outer layers by nested Simpson quadrature on a truncated domain.
    fn quadrature_three(x: &[f64], s: f64) -> f64 {
        let mut total = 0.0;
        for_each_permutation(3, |tau| {
            let (a, b, c) = (x[tau[0]], x[tau[1]], x[tau[2]]);
            let inner = |u2: f64| (-c * (u2 + s * b)).exp();
            let middle = |u1: f64| {
                let lo = u1 + s * a;
                simpson(|u2| b * (-b * u2).exp() * inner(u2), lo, lo + 40.0 / b, 1200)
            };
            total += simpson(|u1| a * (-a * u1).exp() * middle(u1), 0.0, 40.0 / a, 1200);
        });
        total
    }

    #[test]
    fn prob_no_merge_examples() {
        let x = cfg(&[1.0, 1.0, 1.0]);
        assert!((prob_no_merge(&x, 0.3) - (-0.9f64).exp()).abs() < 1e-15);
        assert_eq!(prob_no_merge(&x, 0.0), 1.0);
        assert!((prob_no_merge(&cfg(&[2.0, 1.0]), 0.5) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn cascade_agrees_with_closed_form() {
        let x = cfg(&[1.0, 1.0, 1.0]);
        let bf = brute_force_s(&x, 0.3, Quadrature::AnalyticCascade).unwrap();
        assert!((bf - prob_no_merge(&x, 0.3)).abs() < 1e-6);
        assert!((bf - 0.40657).abs() < 1e-5);
        for x in [cfg(&[1.0]), cfg(&[3.0, 2.0, 1.0]), cfg(&[0.7, 0.7, 0.2, 0.1])] {
            let bf = brute_force_s(&x, 0.0, Quadrature::AnalyticCascade).unwrap();
            assert!((bf - 1.0).abs() < 1e-9);
        }
        for s in [0.0, 0.1, 0.77, 3.0] {
            let bf = brute_force_s(&cfg(&[2.0, 1.0]), s, Quadrature::AnalyticCascade).unwrap();
            assert!((bf - (-2.0 * s).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn simpson_oracle_agrees_with_cascade() {
        for (x, s) in [([1.0, 1.0, 1.0], 0.3), ([2.0, 1.0, 0.5], 0.5), ([1.5, 0.8, 0.8], 1.0)] {
            let numeric = quadrature_three(&x, s);
            let cascade = brute_force_s(&cfg(&x), s, Quadrature::AnalyticCascade).unwrap();
            assert!((numeric - cascade).abs() < 1e-6, "{x:?} {s}: {numeric} vs {cascade}");
        }
    }

    #[test]
    fn monte_carlo_route_agrees_with_cascade() {
        let x = cfg(&[2.0, 1.0, 1.0]);
        let s = 0.2;
        let samples = 200_000;
        let mc = brute_force_s(&x, s, Quadrature::MonteCarlo { samples, seed: 3 }).unwrap();
        let p = brute_force_s(&x, s, Quadrature::AnalyticCascade).unwrap();
        let sd = (p * (1.0 - p) / samples as f64).sqrt();
        assert!((mc - p).abs() < 4.0 * sd, "{mc} vs {p}");
    }

    #[test]
    fn brute_force_size_limit() {
        let x = cfg(&[1.0; 7]);
        assert_eq!(
            brute_force_s(&x, 0.1, Quadrature::AnalyticCascade),
            Err(Error::UnsupportedSize { n: 7, max: 6 })
        );
    }

    #[test]
    fn prob_pi_examples() {
        assert!((prob_pi(&cfg(&[2.0, 1.0]), &[0, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let flat = cfg(&[1.0, 1.0, 1.0]);
        for_each_permutation(3, |tau| {
            assert!((prob_pi(&flat, tau).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        });
        let x = cfg(&[3.0, 2.0, 1.0]);
        let mut total = 0.0;
        let mut count = 0;
        for_each_permutation(3, |tau| {
            total += prob_pi(&x, tau).unwrap();
            count += 1;
        });
        assert_eq!(count, 6);
        assert!((total - 1.0).abs() < 1e-14);
        assert!(prob_pi(&x, &[0, 0, 1]).is_err());
        assert!(prob_pi(&x, &[0, 1]).is_err());
        assert!(prob_pi(&x, &[0, 1, 3]).is_err());
    }

    #[test]
    fn first_merge_pair_examples() {
        let x = cfg(&[1.0, 1.0, 1.0]);
        let p = prob_first_merge_pair(&x, 0.3, (0, 1)).unwrap();
        let expected = (1.0 - (-0.3f64).exp()) * (-0.6f64).exp();
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.142242).abs() < 1e-6);
        assert_eq!(prob_first_merge_pair(&x, 0.0, (0, 1)).unwrap(), 0.0);
        assert!(prob_first_merge_pair(&x, 0.3, (1, 1)).is_err());
        assert!(prob_first_merge_pair(&x, 0.3, (0, 3)).is_err());

        let x = cfg(&[2.5, 1.0, 0.4, 0.3]);
        for s in [0.05, 0.3, 2.0] {
            let mut total = prob_no_merge(&x, s);
            for a in 0..4 {
                for b in (a + 1)..4 {
                    total += prob_first_merge_pair(&x, s, (a, b)).unwrap();
                }
            }
            assert!(total <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn i12_examples() {
        let flat = cfg(&[1.0, 1.0, 1.0]);
        assert!((i12(&flat, &[0, 1, 2], (0, 1)).unwrap() - 2.0 / 3.0).abs() < 1e-15);

        let x = cfg(&[3.0, 2.0, 1.0]);
        let mut classes = 0.0;
        for_each_permutation(3, |tau| {
            let Ok(w) = i12(&x, tau, (0, 1)) else { return };
            let swapped: Vec<usize> = tau
                .iter()
                .map(|&t| match t {
                    0 => 1,
                    1 => 0,
                    o => o,
                })
                .collect();
            assert!((w - i12(&x, &swapped, (0, 1)).unwrap()).abs() < 1e-15);
            // count each {τ, τ*} class once
            if tau.iter().position(|&t| t == 0) < tau.iter().position(|&t| t == 1) {
                classes += w;
            }
        });
        assert!((classes - 1.0).abs() < 1e-14);
        assert!(i12(&x, &[0, 2, 1], (0, 1)).is_err());
    }

    #[test]
    fn i12_sums_to_one_for_larger_configurations() {
        let x = cfg(&[1.7, 1.1, 0.9, 0.4, 0.2]);
        for pair in [(0, 1), (1, 3), (2, 4)] {
            let mut classes = 0.0;
            for_each_permutation(5, |tau| {
                let pa = tau.iter().position(|&t| t == pair.0).unwrap();
                let pb = tau.iter().position(|&t| t == pair.1).unwrap();
                if pb == pa + 1 {
                    classes += i12(&x, tau, pair).unwrap();
                }
            });
            assert!((classes - 1.0).abs() < 1e-13, "{pair:?}: {classes}");
        }
    }

    #[test]
    fn gillespie_trivial_cases() {
        let mut rng = stream_rng(1, 0, purpose::CHAIN);
        let t = gillespie(&cfg(&[1.0]), 10.0, &mut rng);
        assert_eq!(t.num_merges(), 0);
        let t = gillespie(&cfg(&[1.0, 1.0, 1.0, 0.5]), f64::INFINITY, &mut rng);
        assert_eq!(t.num_merges(), 3);
        assert_eq!(t.final_state().num_blocks(), 1);
    }

    #[test]
    fn gillespie_trajectory_invariants() {
        let x = cfg(&[2.0, 1.5, 1.0, 0.75, 0.5, 0.25, 0.125]);
        for r in 0..200 {
            let mut rng = stream_rng(11, r, purpose::CHAIN);
            let t = gillespie(&x, 1.0, &mut rng);
            assert!(t.times.windows(2).all(|w| w[0] < w[1]));
            assert!(t.times.iter().all(|&s| s > 0.0 && s <= 1.0));
            for w in t.states.windows(2) {
                assert_eq!(w[1].num_blocks() + 1, w[0].num_blocks());
                assert!(w[1].is_coarsening_of(&w[0]));
            }
            for st in &t.states {
                let total: f64 = st.block_mass().iter().sum();
                assert!((total - x.total()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gillespie_two_blocks_merge_probability() {
        let x = cfg(&[1.0, 1.0]);
        let reps = 100_000u64;
        let merged = (0..reps)
            .filter(|&r| {
                let mut rng = stream_rng(5, r, purpose::CHAIN);
                gillespie(&x, 1.0, &mut rng).num_merges() == 1
            })
            .count();
        let p = 1.0 - (-1.0f64).exp();
        let sd = (p * (1.0 - p) / reps as f64).sqrt();
        let freq = merged as f64 / reps as f64;
        assert!((freq - p).abs() < 3.0 * sd, "{freq} vs {p}");
    }
}
