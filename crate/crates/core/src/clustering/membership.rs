use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of every POI to exactly one cluster, with cluster ids
/// `0..n_clusters` numbered by first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    labels: Vec<usize>,
    n_clusters: usize,
}

impl Membership {
    /// Relabels arbitrary cluster ids to `0..k` in order of first appearance.
    pub fn from_labels<T: Eq + std::hash::Hash + Clone>(labels: &[T]) -> Self {
        let mut ids = std::collections::HashMap::new();
        let labels = labels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(l.clone()).or_insert(next)
            })
            .collect();
        Self {
            labels,
            n_clusters: ids.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            n_clusters: n,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn cluster_of(&self, item: usize) -> usize {
        self.labels[item]
    }

    /// Members of every cluster, in item order.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_clusters];
        for (item, c) in self.labels.iter().enumerate() {
            groups[*c].push(item);
        }
        groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for c in &self.labels {
            sizes[*c] += 1;
        }
        sizes
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.labels.len() != n {
            return Err(Error::Structural(format!(
                "membership covers {} items, expected {n}",
                self.labels.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabels_by_first_appearance() {
        let m = Membership::from_labels(&[7, 3, 7, 9]);
        assert_eq!(m.labels(), &[0, 1, 0, 2]);
        assert_eq!(m.n_clusters(), 3);
        assert_eq!(m.groups(), vec![vec![0, 2], vec![1], vec![3]]);
    }
}
