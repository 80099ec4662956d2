//! Exact calibration distance for type-sparse instances.
//!
//! Two elements share a *type* when their (mass, mu) pairs agree. Within a
//! type, elements are interchangeable for calibration purposes, and some
//! optimal witness preserves the prediction order inside each type. The
//! minimum can therefore be taken over *contiguous* partitions only: chains
//! of per-type frontiers, where each part takes the next run of f-sorted
//! elements from every type. A dynamic program over frontier vectors finds
//! that minimum exactly.
//!
//! With k types and n elements the table has at most prod(n_i + 1) states
//! and the slice between two frontiers is costed in O(k log n) via per-type
//! prefix sums and a binary search for the index where predictions cross
//! the slice's conditional mean.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::partition::Partition;
use crate::result::{Solver, SolverResult};

/// Tolerance on (mass, mu) when grouping elements into types. Rational-born
/// instances group exactly; near-equal types are intentionally NOT merged.
pub const TYPE_TOL: f64 = 1e-12;

/// Default cap on the frontier table size.
pub const DEFAULT_MAX_STATES: usize = 5_000_000;

/// One group of same-type elements, f-sorted, with prefix sums.
#[derive(Debug, Clone)]
pub struct TypeGroup {
    mass: f64,
    mu: f64,
    /// Element positions sorted by ascending f (ties by position).
    members: Vec<usize>,
    /// prefix_mass[j] = total mass of the first j members.
    prefix_mass: Vec<f64>,
    /// prefix_mass_f[j] = sum of mass * f over the first j members.
    prefix_mass_f: Vec<f64>,
    /// f values in member order, for the crossover search.
    fs: Vec<f64>,
}

impl TypeGroup {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Grouping of an instance's elements into types.
#[derive(Debug, Clone)]
pub struct TypeIndex {
    types: Vec<TypeGroup>,
}

impl TypeIndex {
    /// Deterministic grouping: types appear in order of first occurrence.
    pub fn build(inst: &Instance) -> Self {
        let mut types: Vec<TypeGroup> = Vec::new();
        for (i, e) in inst.elements().iter().enumerate() {
            match types
                .iter_mut()
                .find(|t| (t.mass - e.mass).abs() <= TYPE_TOL && (t.mu - e.mu).abs() <= TYPE_TOL)
            {
                Some(t) => t.members.push(i),
                None => types.push(TypeGroup {
                    mass: e.mass,
                    mu: e.mu,
                    members: vec![i],
                    prefix_mass: Vec::new(),
                    prefix_mass_f: Vec::new(),
                    fs: Vec::new(),
                }),
            }
        }
        for t in &mut types {
            t.members.sort_by(|&a, &b| {
                inst.f(a)
                    .partial_cmp(&inst.f(b))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            t.fs = t.members.iter().map(|&i| inst.f(i)).collect();
            t.prefix_mass = Vec::with_capacity(t.members.len() + 1);
            t.prefix_mass_f = Vec::with_capacity(t.members.len() + 1);
            t.prefix_mass.push(0.0);
            t.prefix_mass_f.push(0.0);
            for &i in &t.members {
                t.prefix_mass
                    .push(t.prefix_mass.last().unwrap() + inst.mass(i));
                t.prefix_mass_f
                    .push(t.prefix_mass_f.last().unwrap() + inst.mass(i) * inst.f(i));
            }
        }
        TypeIndex { types }
    }

    /// Number of distinct types k.
    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn types(&self) -> &[TypeGroup] {
        &self.types
    }

    /// Frontier table size prod(n_i + 1).
    pub fn state_count(&self) -> u128 {
        self.types
            .iter()
            .map(|t| (t.len() + 1) as u128)
            .product()
    }
}

/// Number of distinct (mass, mu) types of an instance.
pub fn count_types(inst: &Instance) -> usize {
    TypeIndex::build(inst).num_types()
}

/// Exact calibration distance via the contiguous-frontier dynamic program.
///
/// Refuses with [`Error::StateSpaceTooLarge`] when the dense frontier table
/// would exceed `max_states`; there is no silent fallback to approximation.
pub fn typesparse_caldist(inst: &Instance, max_states: usize) -> Result<SolverResult> {
    let start = Instant::now();
    let index = TypeIndex::build(inst);
    let states = index.state_count();
    if states > max_states as u128 {
        return Err(Error::StateSpaceTooLarge {
            states,
            max_states: max_states as u128,
        });
    }
    let states = states as usize;
    let k = index.num_types();
    let dims: Vec<usize> = index.types.iter().map(|t| t.len() + 1).collect();
    // Mixed-radix strides; the first type is the most significant digit, so
    // numeric order on state indices is lexicographic order on frontiers.
    let mut strides = vec![1usize; k];
    for i in (0..k.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }

    let mut opt = vec![f64::INFINITY; states];
    let mut parts = vec![u32::MAX; states];
    let mut parent = vec![usize::MAX; states];
    opt[0] = 0.0;
    parts[0] = 0;

    let mut m = vec![0usize; k];
    let mut mp = vec![0usize; k];
    for s in 1..states {
        decode(s, &dims, &mut m);
        // Enumerate predecessors m' <= m (entrywise), m' != m, in decreasing
        // lexicographic order: count down through the sub-box of m.
        let sub_total: usize = m.iter().map(|&v| v + 1).product();
        let mut best = f64::INFINITY;
        let mut best_parts = u32::MAX;
        let mut best_parent = usize::MAX;
        for t in (0..sub_total - 1).rev() {
            decode_in_box(t, &m, &mut mp);
            let ps = encode(&mp, &strides);
            let prev = opt[ps];
            if prev.is_infinite() {
                continue;
            }
            let cand = prev + slice_cost(&index, &mp, &m);
            let cand_parts = parts[ps] + 1;
            if cand < best || (cand == best && cand_parts < best_parts) {
                best = cand;
                best_parts = cand_parts;
                best_parent = ps;
            }
        }
        opt[s] = best;
        parts[s] = best_parts;
        parent[s] = best_parent;
    }

    let full = states - 1;
    let value = if states == 1 { 0.0 } else { opt[full].max(0.0) };
    let witness = reconstruct(inst, &index, &dims, &strides, &parent, full);

    let mut res = SolverResult::new(Solver::TypeSparse, value);
    res.witness = Some(witness);
    res.wall_time = start.elapsed();
    res.params.insert("k".into(), k as f64);
    res.params.insert("states".into(), states as f64);
    Ok(res)
}

fn decode(mut s: usize, dims: &[usize], out: &mut [usize]) {
    for i in (0..dims.len()).rev() {
        out[i] = s % dims[i];
        s /= dims[i];
    }
}

/// Decode t in the box with per-digit bound m[i] (base m[i] + 1).
fn decode_in_box(mut t: usize, m: &[usize], out: &mut [usize]) {
    for i in (0..m.len()).rev() {
        let base = m[i] + 1;
        out[i] = t % base;
        t /= base;
    }
}

fn encode(m: &[usize], strides: &[usize]) -> usize {
    m.iter().zip(strides).map(|(&v, &s)| v * s).sum()
}

/// Cost of the slice taking members (m'_i, m_i] from every type i.
fn slice_cost(index: &TypeIndex, mp: &[usize], m: &[usize]) -> f64 {
    let mut mass = 0.0;
    let mut mass_mu = 0.0;
    for (i, t) in index.types.iter().enumerate() {
        let cnt = (m[i] - mp[i]) as f64;
        mass += cnt * t.mass;
        mass_mu += cnt * t.mass * t.mu;
    }
    if mass <= 0.0 {
        return 0.0;
    }
    let mu = mass_mu / mass;
    let mut cost = 0.0;
    for (i, t) in index.types.iter().enumerate() {
        if mp[i] == m[i] {
            continue;
        }
        // Crossover: members with f < mu pay (mu - f), the rest (f - mu).
        let cut = t.fs.partition_point(|&f| f < mu).clamp(mp[i], m[i]);
        let below_mass = t.prefix_mass[cut] - t.prefix_mass[mp[i]];
        let below_mf = t.prefix_mass_f[cut] - t.prefix_mass_f[mp[i]];
        let above_mass = t.prefix_mass[m[i]] - t.prefix_mass[cut];
        let above_mf = t.prefix_mass_f[m[i]] - t.prefix_mass_f[cut];
        cost += (below_mass * mu - below_mf) + (above_mf - above_mass * mu);
    }
    cost
}

fn reconstruct(
    inst: &Instance,
    index: &TypeIndex,
    dims: &[usize],
    strides: &[usize],
    parent: &[usize],
    full: usize,
) -> Partition {
    let k = index.num_types();
    let mut raw = vec![0u32; inst.len()];
    let mut label = 0u32;
    let mut cur = full;
    let mut m = vec![0usize; k];
    let mut mp = vec![0usize; k];
    while cur != 0 {
        let prev = parent[cur];
        decode(cur, dims, &mut m);
        decode(prev, dims, &mut mp);
        for (i, t) in index.types.iter().enumerate() {
            for &e in &t.members[mp[i]..m[i]] {
                raw[e] = label;
            }
        }
        label += 1;
        cur = prev;
    }
    Partition::from_assignment(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Element, Instance, TOL};
    use crate::oracle::oracle_caldist;
    use crate::rng::SplitMix64;

    fn inst(rows: &[(f64, f64, f64)]) -> Instance {
        Instance::new(
            rows.iter()
                .enumerate()
                .map(|(i, &(mass, mu, f))| Element::new(format!("e{i}"), mass, mu, f))
                .collect(),
        )
        .unwrap()
    }

    fn uniform_noiseless(mus: &[u8], fs: &[f64]) -> Instance {
        let n = mus.len();
        let rows: Vec<(f64, f64, f64)> = mus
            .iter()
            .zip(fs)
            .map(|(&b, &f)| (1.0 / n as f64, b as f64, f))
            .collect();
        inst(&rows)
    }

    #[test]
    fn type_index_counts() {
        let a = uniform_noiseless(&[0, 0, 1, 1], &[0.1, 0.4, 0.6, 0.9]);
        assert_eq!(count_types(&a), 2);

        let b = inst(&[(0.5, 0.3, 0.1), (0.5, 0.3, 0.9)]);
        assert_eq!(count_types(&b), 1);

        let c = inst(&[
            (0.1, 0.1, 0.0),
            (0.2, 0.2, 0.0),
            (0.3, 0.3, 0.0),
            (0.15, 0.4, 0.0),
            (0.25, 0.5, 0.0),
        ]);
        assert_eq!(count_types(&c), 5);
    }

    #[test]
    fn members_sorted_by_prediction() {
        let a = uniform_noiseless(&[0, 1, 0, 1], &[0.9, 0.2, 0.1, 0.8]);
        let index = TypeIndex::build(&a);
        for t in index.types() {
            for w in t.fs.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn four_point_noiseless() {
        let a = uniform_noiseless(&[0, 0, 1, 1], &[0.1, 0.4, 0.6, 0.9]);
        let res = typesparse_caldist(&a, DEFAULT_MAX_STATES).unwrap();
        assert!((res.value - 0.1).abs() < TOL);
        let w = res.witness.unwrap();
        assert!((a.cost_of_partition(&w).unwrap() - res.value).abs() < TOL);
    }

    #[test]
    fn two_sided_pair() {
        let a = inst(&[
            (0.25, 0.0, 0.49),
            (0.25, 1.0, 0.49),
            (0.25, 0.0, 0.51),
            (0.25, 1.0, 0.51),
        ]);
        let res = typesparse_caldist(&a, DEFAULT_MAX_STATES).unwrap();
        assert!((res.value - 0.01).abs() < TOL);
    }

    #[test]
    fn single_type_equals_one_part_cost() {
        // With one type every part has the same conditional mean, so the
        // cost of any partition equals the single-part cost.
        let a = inst(&[
            (0.25, 0.4, 0.1),
            (0.25, 0.4, 0.3),
            (0.25, 0.4, 0.8),
            (0.25, 0.4, 0.95),
        ]);
        let res = typesparse_caldist(&a, DEFAULT_MAX_STATES).unwrap();
        let one = a
            .cost_of_partition(&crate::partition::Partition::single_part(4))
            .unwrap();
        assert!((res.value - one).abs() < TOL);
        let oracle = oracle_caldist(&a, 13).unwrap();
        assert!((res.value - oracle.value).abs() < TOL);
    }

    #[test]
    fn refuses_when_table_too_large() {
        let rows: Vec<(f64, f64, f64)> = (0..12).map(|_| (1.0 / 12.0, 0.5, 0.5)).collect();
        let a = inst(&rows);
        // 13 states needed, cap of 4.
        assert!(matches!(
            typesparse_caldist(&a, 4),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn oracle_equivalence_on_random_sparse_instances() {
        let mut rng = SplitMix64::new(0xCA11);
        for trial in 0..60 {
            let k = 1 + (rng.next_u64() % 3) as usize;
            let n = (k + 1) + (rng.next_u64() % 5) as usize; // up to 9
            // Draw k distinct (mass-weight, mu) type profiles.
            let profiles: Vec<(f64, f64)> = (0..k)
                .map(|_| (0.2 + rng.next_f64(), rng.next_f64()))
                .collect();
            let mut rows = Vec::new();
            for i in 0..n {
                let (w, mu) = profiles[i % k];
                rows.push((w, mu, rng.next_f64()));
            }
            let total: f64 = rows.iter().map(|r| r.0).sum();
            for r in &mut rows {
                r.0 /= total;
            }
            let a = inst(&rows);
            let dp = typesparse_caldist(&a, DEFAULT_MAX_STATES).unwrap();
            let oracle = oracle_caldist(&a, 13).unwrap();
            assert!(
                (dp.value - oracle.value).abs() < TOL,
                "trial {trial}: dp={} oracle={}",
                dp.value,
                oracle.value
            );
        }
    }

    #[test]
    fn witness_is_contiguous_per_type() {
        let a = uniform_noiseless(&[0, 1, 0, 1, 0, 1], &[0.15, 0.3, 0.45, 0.6, 0.75, 0.9]);
        let index = TypeIndex::build(&a);
        let res = typesparse_caldist(&a, DEFAULT_MAX_STATES).unwrap();
        let w = res.witness.unwrap();
        for t in index.types() {
            // Along f-sorted members, the part label may change but never
            // revisit an earlier part.
            let labels: Vec<usize> = t.members().iter().map(|&i| w.part_of(i)).collect();
            let mut seen = Vec::new();
            for &l in &labels {
                match seen.iter().position(|&s| s == l) {
                    Some(pos) => assert_eq!(pos, seen.len() - 1, "type run split: {labels:?}"),
                    None => seen.push(l),
                }
            }
        }
    }

    #[test]
    fn swap_within_type_preserves_calibration() {
        // Swapping the predictions of two same-type elements in a calibrated
        // predictor keeps it calibrated.
        let mut rng = SplitMix64::new(99);
        for _ in 0..30 {
            let n = 4 + (rng.next_u64() % 4) as usize;
            let rows: Vec<(f64, f64, f64)> = (0..n)
                .map(|_| (1.0 / n as f64, if rng.bernoulli(0.5) { 1.0 } else { 0.0 }, rng.next_f64()))
                .collect();
            let a = inst(&rows);
            // Random calibrated predictor: induced by a random partition.
            let raw: Vec<u32> = (0..n).map(|_| (rng.next_u64() % 3) as u32).collect();
            let p = crate::partition::Partition::from_assignment(&raw);
            let mut g = a.induced_predictor(&p).unwrap();
            assert!(a.is_calibrated(&g, TOL).unwrap());
            let index = TypeIndex::build(&a);
            for t in index.types() {
                if t.len() >= 2 {
                    let (x, y) = (t.members()[0], t.members()[1]);
                    g.values.swap(x, y);
                    assert!(a.is_calibrated(&g, TOL).unwrap());
                    g.values.swap(x, y);
                }
            }
        }
    }
}
