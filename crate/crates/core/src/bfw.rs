//! Breadth-first walk construction of the time-`q` random graph.
//!
//! Vertices are explored breadth first, roots and children both in
//! size-biased order. The edge `v(i) → v` is present iff
//! `U_{v(i),v} ≤ x_{v(i)}` with `U_{v(i),v} ~ Exp(q x_v)`. Instead of
//! materialising `U`, the children of `v(i)` are generated as successive
//! minima of the clocks of still unexplored vertices: the next minimum
//! arrives after an `Exp(q · unexplored mass)` wait and belongs to a
//! size-biased unexplored vertex. Surplus edges towards already queued
//! vertices come from a superposed Poisson stream on `[0, x_{v(i)}]`.
//! Total cost is `O((n + edges) log n)`.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::config::{sigma2, MassConfig};
use crate::error::{invalid, Result};
use crate::partition::Partition;
use crate::path::SkeletonPath;
use crate::sampler::MassTree;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSpan {
    pub start: f64,
    pub end: f64,
    /// Order position of the root.
    pub first: usize,
    /// Block indices, in exploration order.
    pub members: Vec<usize>,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BfwResult {
    pub q: f64,
    /// The walk `z`: drift `-1` plus a jump `x_v` at each birth time.
    pub walk: SkeletonPath,
    /// `order[i]` is the block explored `i`-th.
    pub order: Vec<usize>,
    /// Birth time of the block at each order position.
    pub birth: Vec<f64>,
    /// Order position of the parent, `None` for component roots.
    pub parent: Vec<Option<usize>>,
    pub component_spans: Vec<ComponentSpan>,
    /// Extra edges `(i, j)`, `i < j`, as order positions.
    pub surplus_edges: Vec<(usize, usize)>,
    /// `tau[i] = Σ_{j<i} x_{order[j]}`; `tau.len() == n + 1`.
    pub tau: Vec<f64>,
    /// Inverse of `order`.
    pub position: Vec<usize>,
}

impl BfwResult {
    pub fn is_root(&self, block: usize) -> bool {
        self.parent[self.position[block]].is_none()
    }

    /// The component structure as a partition of block indices.
    pub fn partition(&self, x: &MassConfig) -> Partition {
        Partition::from_blocks(
            self.component_spans.iter().map(|c| c.members.clone()).collect(),
            x,
        )
        .expect("components cover every block")
    }

    pub fn component_of_position(&self, pos: usize) -> usize {
        self.component_spans.partition_point(|c| c.first <= pos) - 1
    }
}

pub fn build_bfw<R: Rng + ?Sized>(x: &MassConfig, q: f64, rng: &mut R) -> Result<BfwResult> {
    if !(q.is_finite() && q > 0.0) {
        return Err(invalid(format!("q must be finite and positive, got {q}")));
    }
    let m = x.masses();
    let n = m.len();
    let mut unexplored = MassTree::new(m);
    let mut order = Vec::with_capacity(n);
    let mut birth = Vec::with_capacity(n);
    let mut parent = Vec::with_capacity(n);
    let mut tau = Vec::with_capacity(n + 1);
    tau.push(0.0);
    let mut jumps = Vec::new();
    let mut spans = Vec::new();
    let mut surplus = Vec::new();

    while let Some(root) = unexplored.sample(rng) {
        unexplored.remove(root);
        let first = order.len();
        order.push(root);
        birth.push(tau[first]);
        parent.push(None);
        tau.push(tau[first] + m[root]);

        let mut i = first;
        while i < order.len() {
            let v = order[i];
            let start = tau[i];
            let reach = m[v];

            // surplus edges towards queued positions i+1 ..= last
            let last = order.len() - 1;
            if last > i {
                let queued = tau[last + 1] - tau[i + 1];
                let wait = Exp::new(q * queued).expect("positive queued mass");
                let mut u = wait.sample(rng);
                let mut hits = Vec::new();
                while u <= reach {
                    let target = tau[i + 1] + rng.random::<f64>() * queued;
                    let j = (tau.partition_point(|&t| t <= target) - 1).clamp(i + 1, last);
                    hits.push(j);
                    u += wait.sample(rng);
                }
                hits.sort_unstable();
                hits.dedup();
                surplus.extend(hits.into_iter().map(|j| (i, j)));
            }

            // children: successive minima of the unexplored clocks
            let mut u = 0.0;
            while unexplored.live() > 0 {
                let rate = q * unexplored.total();
                if rate <= 0.0 {
                    break;
                }
                u += Exp::new(rate).expect("positive rate").sample(rng);
                if u > reach {
                    break;
                }
                let Some(child) = unexplored.sample(rng) else { break };
                unexplored.remove(child);
                let pos = order.len();
                order.push(child);
                birth.push(start + u);
                parent.push(Some(i));
                tau.push(tau[pos] + m[child]);
                jumps.push((start + u, m[child]));
            }
            i += 1;
        }
        let members = order[first..i].to_vec();
        let mass = members.iter().map(|&b| m[b]).sum();
        spans.push(ComponentSpan { start: tau[first], end: tau[i], first, members, mass });
    }

    let walk = SkeletonPath::new(tau.clone(), vec![-1.0; n], jumps)?;
    let mut position = vec![0; n];
    for (p, &b) in order.iter().enumerate() {
        position[b] = p;
    }
    Ok(BfwResult {
        q,
        walk,
        order,
        birth,
        parent,
        component_spans: spans,
        surplus_edges: surplus,
        tau,
        position,
    })
}

/// Component masses, sorted non-increasing.
pub fn components(result: &BfwResult) -> Vec<f64> {
    let mut c: Vec<f64> = result.component_spans.iter().map(|s| s.mass).collect();
    c.sort_by(|a, b| b.total_cmp(a));
    c
}

/// How tracked roots enter the leading-block part of the walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum RootMarking {
    /// A tracked block that roots its component contributes no jump.
    #[default]
    Hat,
    /// Every tracked block jumps at its birth time, roots included. The
    /// matching remainder then carries a negative jump at each tracked root.
    Plain,
}

/// Splits the walk as `Z = Y + R`, where `R` collects the `m` largest
/// blocks: `R(s) = Σ_{i<m} (x̂_i 1{β_i ≤ s} - (x_i² / σ₂) s)`.
pub fn decompose(
    result: &BfwResult,
    x: &MassConfig,
    m: usize,
    marking: RootMarking,
) -> Result<(SkeletonPath, SkeletonPath)> {
    let masses = x.masses();
    if m > masses.len() {
        return Err(invalid(format!("m = {m} exceeds the {} blocks", masses.len())));
    }
    if result.order.len() != masses.len() {
        return Err(invalid("walk was not built from this configuration"));
    }
    let s2 = sigma2(x);
    let drift: f64 = masses[..m].iter().map(|v| v * v / s2).sum();

    let mut r_jumps = Vec::new();
    let mut y_jumps = Vec::new();
    for (pos, &b) in result.order.iter().enumerate() {
        let root = result.parent[pos].is_none();
        let tracked = b < m;
        let at = result.birth[pos];
        match (tracked, root, marking) {
            (false, false, _) => y_jumps.push((at, masses[b])),
            (false, true, _) | (true, true, RootMarking::Hat) => {}
            (true, false, _) => r_jumps.push((at, masses[b])),
            (true, true, RootMarking::Plain) => {
                r_jumps.push((at, masses[b]));
                y_jumps.push((at, -masses[b]));
            }
        }
    }
    let end = result.walk.end();
    let r = SkeletonPath::linear(0.0, end, -drift, r_jumps)?;
    let y = SkeletonPath::new(
        result.walk.breakpoints().to_vec(),
        result.walk.slopes().iter().map(|s| s + drift).collect(),
        y_jumps,
    )?;
    Ok((y, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::gillespie;
    use crate::rng::{purpose, stream_rng};
    use crate::stats::tv_distance;

    fn cfg(v: &[f64]) -> MassConfig {
        MassConfig::new(v.to_vec()).unwrap()
    }

    fn random_config(seed: u64, n: usize) -> MassConfig {
        let mut rng = stream_rng(seed, 0, purpose::MAIN);
        MassConfig::from_unsorted((0..n).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap()
    }

    /// Test-only scan over the walk itself: starting from each component
    /// start, the component ends at the first vertex boundary where the
    /// walk has fallen by the root's mass.
    fn excursion_scan(res: &BfwResult, x: &MassConfig) -> Vec<f64> {
        let m = x.masses();
        let n = res.order.len();
        let mut out = Vec::new();
        let mut k = 0;
        while k < n {
            let start = res.tau[k];
            let level = res.walk.value(start) - m[res.order[k]];
            let mut end = k + 1;
            while res.walk.value(res.tau[end]) > level + 1e-9 {
                end += 1;
            }
            out.push(res.tau[end] - start);
            k = end;
        }
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    #[test]
    fn single_block_is_pure_drift() {
        let x = cfg(&[0.7]);
        let mut rng = stream_rng(0, 0, purpose::GRAPH);
        let res = build_bfw(&x, 2.0, &mut rng).unwrap();
        assert!(res.walk.jumps().is_empty());
        assert_eq!(res.walk.value(0.7), -0.7);
        assert_eq!(components(&res), vec![0.7]);
        assert!(res.is_root(0));
    }

    #[test]
    fn rejects_bad_q() {
        let x = cfg(&[1.0]);
        let mut rng = stream_rng(0, 0, purpose::GRAPH);
        assert!(build_bfw(&x, 0.0, &mut rng).is_err());
        assert!(build_bfw(&x, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn two_blocks_connect_with_edge_probability() {
        let (a, b, q) = (1.3, 0.6, 0.9);
        let x = cfg(&[a, b]);
        let reps = 100_000u64;
        let joined = (0..reps)
            .filter(|&r| {
                let mut rng = stream_rng(21, r, purpose::GRAPH);
                build_bfw(&x, q, &mut rng).unwrap().component_spans.len() == 1
            })
            .count();
        let p = 1.0 - (-a * b * q).exp();
        let z = crate::stats::binomial_z(joined, reps as usize, p);
        assert!(z.abs() < 3.0, "z = {z}");
    }

    #[test]
    fn walk_invariants_hold() {
        for run in 0..1000u64 {
            let x = random_config(run, 1 + (run as usize % 40));
            let mut rng = stream_rng(3, run, purpose::GRAPH);
            let q = 0.5 + (run % 7) as f64;
            let res = build_bfw(&x, q, &mut rng).unwrap();
            let m = x.masses();
            let mut covered = 0.0;
            for span in &res.component_spans {
                assert!((span.start - covered).abs() < 1e-9);
                covered = span.end;
                assert!((span.end - span.start - span.mass).abs() < 1e-9);
                let root_mass = m[res.order[span.first]];
                let z_end = res.walk.value(span.end);
                assert!((z_end - (res.walk.value(span.start) - root_mass)).abs() < 1e-9);
                for &(t, v) in res.walk.sample_points().iter() {
                    if t > span.start && t < span.end {
                        assert!(v >= z_end - 1e-9, "run {run}");
                    }
                }
            }
            assert!((covered - x.total()).abs() < 1e-9);

            for (pos, &b) in res.order.iter().enumerate() {
                match res.parent[pos] {
                    None => assert_eq!(res.birth[pos], res.tau[pos]),
                    Some(p) => {
                        assert!(p < pos);
                        let lo = res.tau[p];
                        assert!(res.birth[pos] > lo && res.birth[pos] <= lo + m[res.order[p]]);
                    }
                }
                assert_eq!(res.position[b], pos);
            }
            for &(i, j) in &res.surplus_edges {
                assert!(i < j);
                assert_eq!(res.component_of_position(i), res.component_of_position(j));
            }
        }
    }

    #[test]
    fn components_match_excursion_scan() {
        for run in 0..100u64 {
            let x = random_config(1000 + run, 60);
            let mut rng = stream_rng(4, run, purpose::GRAPH);
            let res = build_bfw(&x, 1.5, &mut rng).unwrap();
            let comps = components(&res);
            let scan = excursion_scan(&res, &x);
            assert_eq!(comps.len(), scan.len());
            for (a, b) in comps.iter().zip(&scan) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!((comps.iter().sum::<f64>() - x.total()).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_markov_chain_at_matched_time() {
        let x = cfg(&[1.0; 5]);
        let q = 0.3;
        let reps = 100_000u64;
        let graph: Vec<Vec<usize>> = (0..reps)
            .map(|r| {
                let mut rng = stream_rng(8, r, purpose::GRAPH);
                build_bfw(&x, q, &mut rng).unwrap().partition(&x).size_profile()
            })
            .collect();
        let chain: Vec<Vec<usize>> = (0..reps)
            .map(|r| {
                let mut rng = stream_rng(9, r, purpose::CHAIN);
                gillespie(&x, q, &mut rng).final_state().size_profile()
            })
            .collect();
        let tv = tv_distance(graph, chain).unwrap();
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn surplus_edges_appear_in_dense_graphs() {
        let x = cfg(&[1.0; 6]);
        let mut rng = stream_rng(5, 0, purpose::GRAPH);
        let res = build_bfw(&x, 20.0, &mut rng).unwrap();
        assert_eq!(res.component_spans.len(), 1);
        // essentially complete graph: 15 edges, 5 in the tree
        assert_eq!(res.surplus_edges.len(), 10);
    }

    #[test]
    fn decomposition_examples() {
        let x = random_config(77, 100);
        let mut rng = stream_rng(6, 0, purpose::GRAPH);
        let res = build_bfw(&x, 3.0, &mut rng).unwrap();

        let (y, r) = decompose(&res, &x, 0, RootMarking::Hat).unwrap();
        assert!(r.jumps().is_empty() && r.slopes() == [0.0]);
        for k in 0..=500 {
            let s = x.total() * k as f64 / 500.0;
            assert!((y.value(s) - res.walk.value(s)).abs() < 1e-12);
        }

        for marking in [RootMarking::Hat, RootMarking::Plain] {
            let (y, r) = decompose(&res, &x, 5, marking).unwrap();
            let mut grid: Vec<f64> = (0..=2000).map(|k| x.total() * k as f64 / 2000.0).collect();
            grid.extend(res.birth.iter().copied());
            for s in grid {
                assert!((res.walk.value(s) - y.value(s) - r.value(s)).abs() < 1e-9);
                assert!((res.walk.left_limit(s) - y.left_limit(s) - r.left_limit(s)).abs() < 1e-9);
            }
        }
        assert!(decompose(&res, &x, 101, RootMarking::Hat).is_err());
    }

    #[test]
    fn lone_tracked_block_is_a_root() {
        let x = cfg(&[0.8]);
        let mut rng = stream_rng(0, 0, purpose::GRAPH);
        let res = build_bfw(&x, 1.0, &mut rng).unwrap();
        let (_, r) = decompose(&res, &x, 1, RootMarking::Hat).unwrap();
        assert!(r.jumps().is_empty());
        // x₁² / σ₂ = 1 for a single block
        assert!((r.value(0.5) + 0.5).abs() < 1e-15);
        let (_, r) = decompose(&res, &x, 1, RootMarking::Plain).unwrap();
        assert_eq!(r.jumps(), &[(0.0, 0.8)]);
    }
}
