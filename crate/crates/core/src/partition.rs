//! Set partitions of an instance's domain, stored positionally.
//!
//! The canonical form compacts part indices and orders them by first element
//! occurrence, so equal partitions compare equal and witnesses are
//! deterministic.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<u32>,
    num_parts: u32,
}

impl Partition {
    /// Canonicalizes an arbitrary labeling: part indices are renumbered in
    /// order of first occurrence.
    pub fn from_assignment(raw: &[u32]) -> Self {
        let mut map: Vec<Option<u32>> = Vec::new();
        let mut next = 0u32;
        let assignment = raw
            .iter()
            .map(|&label| {
                let label = label as usize;
                if label >= map.len() {
                    map.resize(label + 1, None);
                }
                *map[label].get_or_insert_with(|| {
                    let v = next;
                    next += 1;
                    v
                })
            })
            .collect();
        Partition {
            assignment,
            num_parts: next,
        }
    }

    /// Builds from explicit parts; every element in `0..n` must appear
    /// exactly once.
    pub fn from_parts(n: usize, parts: &[Vec<usize>]) -> Result<Self> {
        let mut raw = vec![u32::MAX; n];
        for (t, part) in parts.iter().enumerate() {
            for &i in part {
                if i >= n {
                    return Err(Error::PartitionMismatch(format!(
                        "element index {i} out of range for domain size {n}"
                    )));
                }
                if raw[i] != u32::MAX {
                    return Err(Error::PartitionMismatch(format!(
                        "element index {i} assigned twice"
                    )));
                }
                raw[i] = t as u32;
            }
        }
        if let Some(i) = raw.iter().position(|&t| t == u32::MAX) {
            return Err(Error::PartitionMismatch(format!(
                "element index {i} not assigned to any part"
            )));
        }
        Ok(Self::from_assignment(&raw))
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            assignment: (0..n as u32).collect(),
            num_parts: n as u32,
        }
    }

    pub fn single_part(n: usize) -> Self {
        Partition {
            assignment: vec![0; n],
            num_parts: if n == 0 { 0 } else { 1 },
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_parts(&self) -> usize {
        self.num_parts as usize
    }

    pub fn part_of(&self, i: usize) -> usize {
        self.assignment[i] as usize
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Materializes parts as element-index lists, in canonical part order.
    pub fn parts(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.num_parts()];
        for (i, &t) in self.assignment.iter().enumerate() {
            parts[t as usize].push(i);
        }
        parts
    }
}
