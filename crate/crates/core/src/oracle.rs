//! Ground-truth calibration distance by exhaustive minimization of the
//! partition cost over all set partitions of the domain.
//!
//! Partitions are enumerated as restricted growth strings (element 0 in part
//! 0; element i may join any used part or open the next one), so every set
//! partition is visited exactly once and the witness tie-break — first
//! minimum in enumeration order — is deterministic.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::partition::Partition;
use crate::result::{Solver, SolverResult};

/// Default domain cap: Bell(13) is about 2.8e7 leaves, still enumerable.
pub const DEFAULT_MAX_N: usize = 13;

/// Exact minimum partition cost and a witness, by full enumeration.
pub fn oracle_caldist(inst: &Instance, max_n: usize) -> Result<SolverResult> {
    run(inst, max_n, false)
}

/// Same minimum, with a lossless branch-and-bound cut: a subtree is skipped
/// only when the sum of per-part lower bounds (each open part's cost
/// minimized over a free merge point) already exceeds the incumbent
/// strictly, so both the value and the first-encountered witness are
/// unchanged. Kept separate so the plain oracle stays auditable.
pub fn oracle_caldist_pruned(inst: &Instance, max_n: usize) -> Result<SolverResult> {
    run(inst, max_n, true)
}

fn run(inst: &Instance, max_n: usize, prune: bool) -> Result<SolverResult> {
    let n = inst.len();
    if n > max_n {
        return Err(Error::DomainTooLarge { n, max_n });
    }
    let start = Instant::now();

    let mut search = Search {
        masses: inst.elements().iter().map(|e| e.mass).collect(),
        mus: inst.elements().iter().map(|e| e.mu).collect(),
        fs: inst.elements().iter().map(|e| e.f).collect(),
        assign: vec![0; n],
        parts: Vec::with_capacity(n),
        best: f64::INFINITY,
        best_assign: vec![0; n],
        prune,
    };
    search.dfs(0);

    let mut res = SolverResult::new(Solver::Oracle, search.best);
    res.witness = Some(Partition::from_assignment(&search.best_assign));
    res.wall_time = start.elapsed();
    res.params.insert("max_n".into(), max_n as f64);
    res.params
        .insert("pruned".into(), if prune { 1.0 } else { 0.0 });
    Ok(res)
}

struct PartState {
    mass: f64,
    mass_mu: f64,
    /// Members as (f, mass), kept sorted by f; only used when pruning.
    members: Vec<(f64, f64)>,
    /// Cost of the current members minimized over a free merge point; a
    /// valid lower bound on the part's final cost however it grows.
    lower_bound: f64,
}

struct Search {
    masses: Vec<f64>,
    mus: Vec<f64>,
    fs: Vec<f64>,
    assign: Vec<u32>,
    parts: Vec<PartState>,
    best: f64,
    best_assign: Vec<u32>,
    prune: bool,
}

impl Search {
    fn dfs(&mut self, i: usize) {
        if i == self.masses.len() {
            let cost = self.leaf_cost();
            if cost < self.best {
                self.best = cost;
                self.best_assign.copy_from_slice(&self.assign);
            }
            return;
        }
        let used = self.parts.len();
        for p in 0..=used {
            if p == used {
                self.parts.push(PartState {
                    mass: 0.0,
                    mass_mu: 0.0,
                    members: Vec::new(),
                    lower_bound: 0.0,
                });
            }
            self.assign[i] = p as u32;
            let saved_lb = self.push(p, i);
            if !self.prune || self.bound() < self.best {
                self.dfs(i + 1);
            }
            self.pop(p, i, saved_lb);
            if p == used {
                self.parts.pop();
            }
        }
    }

    fn push(&mut self, p: usize, i: usize) -> f64 {
        let (f, m) = (self.fs[i], self.masses[i]);
        let part = &mut self.parts[p];
        part.mass += m;
        part.mass_mu += m * self.mus[i];
        let saved = part.lower_bound;
        if self.prune {
            let pos = part.members.partition_point(|&(pf, _)| pf <= f);
            part.members.insert(pos, (f, m));
            part.lower_bound = min_transport_cost(&part.members);
        }
        saved
    }

    fn pop(&mut self, p: usize, i: usize, saved_lb: f64) {
        let (f, m) = (self.fs[i], self.masses[i]);
        let part = &mut self.parts[p];
        part.mass -= m;
        part.mass_mu -= m * self.mus[i];
        if self.prune {
            // Remove one copy of the exact (f, mass) pair that was inserted;
            // any equal pair is interchangeable.
            let pos = part
                .members
                .iter()
                .position(|&e| e == (f, m))
                .expect("pushed member must be present");
            part.members.remove(pos);
            part.lower_bound = saved_lb;
        }
    }

    fn leaf_cost(&self) -> f64 {
        let mut cost = 0.0;
        for (i, &a) in self.assign.iter().enumerate() {
            let part = &self.parts[a as usize];
            if part.mass > 0.0 {
                cost += self.masses[i] * (self.fs[i] - part.mass_mu / part.mass).abs();
            }
        }
        cost
    }

    fn bound(&self) -> f64 {
        self.parts.iter().map(|p| p.lower_bound).sum()
    }
}

/// Minimum of sum(mass * |f - c|) over a free point c; attained at a member
/// location, so scanning members suffices.
fn min_transport_cost(members: &[(f64, f64)]) -> f64 {
    let mut best = f64::INFINITY;
    for &(c, _) in members {
        let cost: f64 = members.iter().map(|&(f, m)| m * (f - c).abs()).sum();
        if cost < best {
            best = cost;
        }
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Element, Instance, TOL};

    fn inst(rows: &[(f64, f64, f64)]) -> Instance {
        Instance::new(
            rows.iter()
                .enumerate()
                .map(|(i, &(mass, mu, f))| Element::new(format!("e{i}"), mass, mu, f))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn calibrated_instance_has_zero_distance() {
        let a = inst(&[(0.25, 0.1, 0.1), (0.25, 0.4, 0.4), (0.5, 0.9, 0.9)]);
        let res = oracle_caldist(&a, DEFAULT_MAX_N).unwrap();
        assert!(res.value.abs() < TOL);
        // All-singletons witness: three parts.
        assert_eq!(res.witness.unwrap().num_parts(), 3);
    }

    #[test]
    fn two_sided_pair_distance_is_eps() {
        for eps in [0.01, 0.05] {
            let a = inst(&[
                (0.25, 0.0, 0.5 - eps),
                (0.25, 1.0, 0.5 - eps),
                (0.25, 0.0, 0.5 + eps),
                (0.25, 1.0, 0.5 + eps),
            ]);
            let res = oracle_caldist(&a, DEFAULT_MAX_N).unwrap();
            assert!((res.value - eps).abs() < TOL, "eps={eps}: {}", res.value);
            // The witness merges everything into parts of conditional mean 1/2.
            let w = res.witness.unwrap();
            let cost = a.cost_of_partition(&w).unwrap();
            assert!((cost - res.value).abs() < TOL);
        }
    }

    #[test]
    fn four_point_noiseless_minimum() {
        let a = inst(&[
            (0.25, 0.0, 0.1),
            (0.25, 0.0, 0.4),
            (0.25, 1.0, 0.6),
            (0.25, 1.0, 0.9),
        ]);
        let res = oracle_caldist(&a, DEFAULT_MAX_N).unwrap();
        assert!((res.value - 0.1).abs() < TOL);
    }

    #[test]
    fn refuses_large_domains() {
        let n = 6;
        let a = inst(&vec![(1.0 / n as f64, 0.5, 0.5); n]);
        assert_eq!(
            oracle_caldist(&a, 5),
            Err(Error::DomainTooLarge { n: 6, max_n: 5 })
        );
    }

    #[test]
    fn pruned_matches_plain() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(7);
        for _ in 0..40 {
            let n = 2 + (rng.next_u64() % 6) as usize;
            let mut rows: Vec<(f64, f64, f64)> = (0..n)
                .map(|_| (rng.next_f64() + 0.05, rng.next_f64(), rng.next_f64()))
                .collect();
            let total: f64 = rows.iter().map(|r| r.0).sum();
            for r in &mut rows {
                r.0 /= total;
            }
            let a = inst(&rows);
            let plain = oracle_caldist(&a, DEFAULT_MAX_N).unwrap();
            let pruned = oracle_caldist_pruned(&a, DEFAULT_MAX_N).unwrap();
            assert!((plain.value - pruned.value).abs() < TOL);
            assert_eq!(plain.witness, pruned.witness);
        }
    }

    #[test]
    fn value_leq_any_partition_cost() {
        let a = inst(&[
            (0.2, 0.3, 0.8),
            (0.3, 0.9, 0.2),
            (0.1, 0.5, 0.5),
            (0.4, 0.1, 0.6),
        ]);
        let res = oracle_caldist(&a, DEFAULT_MAX_N).unwrap();
        for p in [
            Partition::single_part(4),
            Partition::singletons(4),
            Partition::from_parts(4, &[vec![0, 2], vec![1, 3]]).unwrap(),
        ] {
            assert!(res.value <= a.cost_of_partition(&p).unwrap() + TOL);
        }
    }

    #[test]
    fn invariant_under_reordering_and_relabeling() {
        let rows = [
            (0.2, 0.3, 0.8),
            (0.3, 0.9, 0.2),
            (0.1, 0.5, 0.5),
            (0.4, 0.1, 0.6),
        ];
        let a = inst(&rows);
        let mut shuffled: Vec<_> = rows.to_vec();
        shuffled.rotate_left(2);
        let b = Instance::new(
            shuffled
                .iter()
                .enumerate()
                .map(|(i, &(mass, mu, f))| Element::new(format!("zz{i}"), mass, mu, f))
                .collect(),
        )
        .unwrap();
        let ra = oracle_caldist(&a, DEFAULT_MAX_N).unwrap();
        let rb = oracle_caldist(&b, DEFAULT_MAX_N).unwrap();
        assert!((ra.value - rb.value).abs() < TOL);
    }
}
