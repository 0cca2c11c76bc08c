//! Size-biased sampling without replacement over a Fenwick tree of masses.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct MassTree {
    tree: Vec<f64>,
    weight: Vec<f64>,
    live: usize,
}

impl MassTree {
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            tree[i + 1] += w;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        Self {
            tree,
            weight: weights.to_vec(),
            live: weights.iter().filter(|w| **w > 0.0).count(),
        }
    }

    /// Number of items with positive weight.
    pub fn live(&self) -> usize {
        self.live
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weight[i]
    }

    pub fn total(&self) -> f64 {
        if self.live == 0 {
            return 0.0;
        }
        self.prefix(self.weight.len()).max(0.0)
    }

    /// Sum of the first `k` weights.
    pub fn prefix(&self, mut k: usize) -> f64 {
        let mut acc = 0.0;
        while k > 0 {
            acc += self.tree[k];
            k &= k - 1;
        }
        acc
    }

    pub fn remove(&mut self, i: usize) {
        let w = std::mem::replace(&mut self.weight[i], 0.0);
        if w <= 0.0 {
            return;
        }
        self.live -= 1;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] -= w;
            k += k & k.wrapping_neg();
        }
    }

    /// Index whose cumulative-weight interval contains `target`.
    fn find(&self, mut target: f64) -> usize {
        let n = self.weight.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }

    /// Draws a live index with probability proportional to its weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        if self.live == 0 {
            return None;
        }
        let total = self.total();
        for _ in 0..8 {
            let i = self.find(rng.random::<f64>() * total);
            if self.weight[i] > 0.0 {
                return Some(i);
            }
        }
        // rounding left the search on a removed slot; fall back to a scan
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for (i, &w) in self.weight.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                last = Some(i);
                if target < acc {
                    return last;
                }
            }
        }
        last
    }
}
