use std::collections::BTreeMap;

use crate::ingest::Dataset;
use crate::model::{Level, VariableKind};

/// Dyadic max-tree over calendar days for one variable at one region level.
///
/// Each node covering days `[lo, hi]` stores, across all regions at the
/// level, the largest single-day increment inside the node and the largest
/// node-wide total `C[hi] - C[lo-1]`. Leaves hold exact daily increments.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    variable: VariableKind,
    level: Level,
    n_days: usize,
    /// Leaf count, a power of two.
    width: usize,
    max_increment: Vec<u64>,
    max_total: Vec<u64>,
}

impl Pyramid {
    pub fn build(dataset: &Dataset, variable: VariableKind, level: Level) -> Pyramid {
        let n_days = dataset.calendar().n_days as usize;
        let width = n_days.max(1).next_power_of_two();
        let mut max_increment = vec![0u64; 2 * width];
        let mut max_total = vec![0u64; 2 * width];
        let mut node_total = vec![0u64; 2 * width];

        for region in dataset.regions_at(level) {
            let Some(series) = dataset.series(&region.id, variable) else { continue };
            node_total.iter_mut().for_each(|t| *t = 0);
            let mut prev = 0u64;
            for (d, &c) in series.cumulative.iter().enumerate() {
                let inc = c.saturating_sub(prev);
                prev = c;
                node_total[width + d] = inc;
                max_increment[width + d] = max_increment[width + d].max(inc);
            }
            for node in (1..width).rev() {
                node_total[node] = node_total[2 * node] + node_total[2 * node + 1];
            }
            for (m, &t) in max_total.iter_mut().zip(&node_total).skip(1) {
                *m = (*m).max(t);
            }
        }
        for node in (1..width).rev() {
            max_increment[node] = max_increment[2 * node].max(max_increment[2 * node + 1]);
        }
        Pyramid {
            variable,
            level,
            n_days,
            width,
            max_increment,
            max_total,
        }
    }

    pub fn variable(&self) -> VariableKind {
        self.variable
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    /// Largest single-day increment of any region over the whole calendar.
    pub fn root_max_increment(&self) -> u64 {
        self.max_increment[1]
    }

    /// Nodes covering `[lo, hi]` exactly, as heap indices.
    fn cover(&self, lo: usize, hi: usize) -> impl Iterator<Item = usize> {
        let mut nodes = Vec::new();
        let (mut l, mut r) = (lo + self.width, hi + self.width + 1);
        while l < r {
            if l & 1 == 1 {
                nodes.push(l);
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                nodes.push(r);
            }
            l >>= 1;
            r >>= 1;
        }
        nodes.into_iter()
    }

    /// Upper bound on any region's single-day increment within `[lo, hi]`.
    pub fn max_increment(&self, lo: u32, hi: u32) -> u64 {
        self.cover(lo as usize, hi as usize).map(|n| self.max_increment[n]).max().unwrap_or(0)
    }

    /// Upper bound on any region's total over `[lo, hi]`: the sum of the
    /// per-node maxima of the covering nodes.
    pub fn total_bound(&self, lo: u32, hi: u32) -> u64 {
        self.cover(lo as usize, hi as usize).map(|n| self.max_total[n]).sum()
    }

    /// Every stored maximum dominates both of its children.
    pub fn check_invariants(&self) -> bool {
        (1..self.width).all(|n| {
            let kids = [2 * n, 2 * n + 1];
            kids.iter().all(|&k| self.max_increment[n] >= self.max_increment[k] && self.max_total[n] >= self.max_total[k])
        })
    }
}

/// Pyramids keyed by (variable, level).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PyramidSet {
    pyramids: BTreeMap<(VariableKind, Level), Pyramid>,
}

impl PyramidSet {
    /// One pyramid per ingested variable and level present in the dataset.
    pub fn build(dataset: &Dataset) -> PyramidSet {
        let mut set = PyramidSet::default();
        for variable in dataset.variables_present().into_iter().filter(|v| !v.is_derived()) {
            for level in dataset.levels_present() {
                set.insert(Pyramid::build(dataset, variable, level));
            }
        }
        set
    }

    pub fn insert(&mut self, pyramid: Pyramid) {
        self.pyramids.insert((pyramid.variable, pyramid.level), pyramid);
    }

    pub fn get(&self, variable: VariableKind, level: Level) -> Option<&Pyramid> {
        self.pyramids.get(&(variable, level))
    }

    pub fn len(&self) -> usize {
        self.pyramids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pyramids.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::tests::toy;

    #[test]
    fn single_day() {
        let ds = toy(&[("a", VariableKind::Confirmed, &[4]), ("b", VariableKind::Confirmed, &[9])], &[]);
        let p = Pyramid::build(&ds, VariableKind::Confirmed, Level::Country);
        assert_eq!(p.root_max_increment(), 9);
        assert_eq!(p.max_increment(0, 0), 9);
        assert_eq!(p.total_bound(0, 0), 9);
    }

    #[test]
    fn four_days_root_max() {
        // increments a: [1,0,2,5], b: [0,7,1,0] -> per-day maxima [1,7,2,5]
        let ds = toy(
            &[("a", VariableKind::Confirmed, &[1, 1, 3, 8]), ("b", VariableKind::Confirmed, &[0, 7, 8, 8])],
            &[],
        );
        let p = Pyramid::build(&ds, VariableKind::Confirmed, Level::Country);
        let brute = [1u64, 7, 2, 5];
        assert_eq!(p.root_max_increment(), *brute.iter().max().unwrap());
        for lo in 0..4u32 {
            for hi in lo..4u32 {
                let exact = brute[lo as usize..=hi as usize].iter().copied().max().unwrap();
                assert_eq!(p.max_increment(lo, hi), exact);
                // both regions' totals over [lo, hi] must be bounded
                let ta = [1u64, 1, 3, 8];
                let tb = [0u64, 7, 8, 8];
                for t in [ta, tb] {
                    let total = t[hi as usize] - if lo == 0 { 0 } else { t[lo as usize - 1] };
                    assert!(p.total_bound(lo, hi) >= total);
                }
            }
        }
        assert!(p.check_invariants());
    }

    #[test]
    fn empty_variable_is_zeros() {
        let ds = toy(&[("a", VariableKind::Confirmed, &[1, 2, 3])], &[]);
        let p = Pyramid::build(&ds, VariableKind::Deaths, Level::Country);
        assert_eq!(p.root_max_increment(), 0);
        assert_eq!(p.total_bound(0, 2), 0);
        assert!(p.check_invariants());
    }
}
