//! Partitions of block indices and coalescent trajectories.

use serde::Serialize;

use crate::config::MassConfig;
use crate::error::{invalid, Result};

/// Grouping of the indices `0..n` into clusters.
///
/// Always kept canonical: members ascending within a block, blocks ordered
/// by their smallest member. Two partitions are equal iff their canonical
/// forms are equal.
#[derive(Debug, Clone, Serialize)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_mass: Vec<f64>,
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }
}

impl Eq for Partition {}

impl Partition {
    pub fn singletons(x: &MassConfig) -> Self {
        Self {
            blocks: (0..x.len()).map(|i| vec![i]).collect(),
            block_mass: x.masses().to_vec(),
        }
    }

    /// Builds a partition from arbitrary blocks, checking that they are
    /// disjoint and cover `0..x.len()`.
    pub fn from_blocks(mut blocks: Vec<Vec<usize>>, x: &MassConfig) -> Result<Self> {
        let n = x.len();
        let mut seen = vec![false; n];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(invalid("partition blocks must be non-empty"));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if i >= n {
                    return Err(invalid(format!("index {i} out of range for {n} blocks")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(invalid(format!("index {i} appears in two blocks")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(invalid("partition blocks do not cover every index"));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        let m = x.masses();
        let block_mass = blocks.iter().map(|b| b.iter().map(|&i| m[i]).sum()).collect();
        Ok(Self { blocks, block_mass })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_mass(&self) -> &[f64] {
        &self.block_mass
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_singletons(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    /// Merges the blocks at positions `a` and `b` (in canonical order).
    pub fn merge(&self, a: usize, b: usize) -> Self {
        assert!(a != b && a < self.blocks.len() && b < self.blocks.len());
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mut blocks = self.blocks.clone();
        let mut block_mass = self.block_mass.clone();
        let moved = blocks.remove(hi);
        let moved_mass = block_mass.remove(hi);
        blocks[lo].extend(moved);
        blocks[lo].sort_unstable();
        block_mass[lo] += moved_mass;
        // `lo` keeps the smaller minimum, so block order stays canonical
        Self { blocks, block_mass }
    }

    /// Restricted-growth encoding: entry `i` is the canonical position of
    /// the block holding index `i`.
    pub fn key(&self) -> Vec<u32> {
        let mut label = vec![0u32; self.n()];
        for (k, b) in self.blocks.iter().enumerate() {
            for &i in b {
                label[i] = k as u32;
            }
        }
        label
    }

    /// True when every block of `finer` lies inside a block of `self`.
    pub fn is_coarsening_of(&self, finer: &Partition) -> bool {
        let label = self.key();
        label.len() == finer.n()
            && finer
                .blocks
                .iter()
                .all(|b| b.iter().all(|&i| label[i] == label[b[0]]))
    }

    /// Block masses sorted non-increasing.
    pub fn sorted_masses(&self) -> Vec<f64> {
        let mut m = self.block_mass.clone();
        m.sort_by(|a, b| b.total_cmp(a));
        m
    }

    /// Block sizes (member counts) sorted non-increasing.
    pub fn size_profile(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.blocks.iter().map(Vec::len).collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }
}

/// Merge times and the partition after each merge; `states[0]` is the
/// all-singletons state at time zero and `states[k + 1]` holds from
/// `times[k]` on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Partition>,
}

impl Trajectory {
    pub fn first_merge_time(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn state_at(&self, s: f64) -> &Partition {
        let k = self.times.partition_point(|&t| t <= s);
        &self.states[k]
    }

    pub fn final_state(&self) -> &Partition {
        self.states.last().expect("trajectory has an initial state")
    }

    pub fn num_merges(&self) -> usize {
        self.times.len()
    }
}
