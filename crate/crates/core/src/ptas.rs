//! Polynomial-time approximation scheme for the calibration distance.
//!
//! The scheme discretizes the joint distribution to integer multiples of
//! 1/M, splits [0, 1] into k = ceil(3/eps) intervals, and minimizes a proxy
//! cost over partitions into at most k labeled parts where part j is either
//! empty or has conditional mean inside the j-th interval. The proxy charges
//! each element its distance to the j-th interval midpoint plus 1/(2k),
//! which over- and under-shoots the true part cost by at most 1/k in total.
//! The budget split (discretization eps/15, k = ceil(3/eps)) keeps the
//! end-to-end error within eps above and within the certified budget below.
//!
//! States track, for each part, the accumulated 0-label and 1-label joint
//! mass in units of 1/M; elements are folded in one at a time in descending
//! mass order. Two lossless prunes keep the reachable set small at desk
//! scale: states whose cost plus a per-element lower bound already exceeds a
//! known feasible upper bound, and states in which some non-empty part can
//! no longer reach its interval even if it absorbs all remaining mass of one
//! label.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::partition::Partition;
use crate::result::{Solver, SolverResult};
use crate::sparsify::discretize_with_n;

/// Default cap on the total number of states visited across layers.
pub const DEFAULT_MAX_STATES: usize = 4_000_000;

const COST_SLACK: f64 = 1e-12;
const EDGE_SLACK: f64 = 1e-9;

/// Fixed parameters of one approximation run.
#[derive(Debug, Clone, Copy)]
pub struct PtasConfig {
    pub eps: f64,
    /// Interval count k = ceil(3/eps); intervals are [(j-1)/k, j/k), the
    /// last one closed.
    pub k: usize,
    /// Joint masses are integer multiples of 1/m_discrete.
    pub m_discrete: u64,
}

impl PtasConfig {
    pub fn new(eps: f64, m_discrete: u64) -> Self {
        PtasConfig {
            eps,
            k: (3.0 / eps).ceil() as usize,
            m_discrete,
        }
    }

    /// Midpoint of the j-th interval (0-based).
    fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.k as f64
    }
}

/// Approximates the calibration distance within `eps` from above and within
/// the returned `additive_error_budget` from below:
/// `CalDist - budget <= value <= CalDist + eps`.
pub fn ptas_caldist(inst: &Instance, eps: f64, max_states: usize) -> Result<SolverResult> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1]"));
    }
    let start = Instant::now();

    // Discretize with a fifteenth of the budget; the 5x TV continuity factor
    // turns the achieved tv into the certified lower-side budget.
    let grid_target = 4.0 * inst.len() as f64 / (eps / 15.0);
    if grid_target > (1u64 << 62) as f64 {
        return Err(Error::InvalidParameter(format!(
            "discretization grid {grid_target} too fine"
        )));
    }
    let mut n_grid = 1u64;
    while (n_grid as f64) < grid_target {
        n_grid <<= 1;
    }
    let (dinst, tv, m, floors) = discretize_with_n(inst, n_grid)?;
    if m > u32::MAX as u64 {
        return Err(Error::StateSpaceTooLarge {
            states: m as u128,
            max_states: max_states as u128,
        });
    }
    let budget = 5.0 * tv;
    let cfg = PtasConfig::new(eps, m);

    let dp = DpInput::build(&dinst, &floors, &cfg);
    let ub_single = dp.single_part_upper_bound();
    let ub_beam = dp.run(Some(2048), ub_single, usize::MAX)?.best_cost;
    let ub = ub_beam.min(ub_single);
    let run = dp.run(None, ub, max_states)?;

    let witness = dp.reconstruct(&dinst, &run);
    debug_assert!(filter_holds(&dinst, &witness, &cfg));

    let mut res = SolverResult::new(Solver::Ptas, run.best_cost.max(0.0));
    res.witness = Some(witness);
    res.additive_error_budget = budget;
    res.wall_time = start.elapsed();
    res.params.insert("eps".into(), eps);
    res.params.insert("k".into(), cfg.k as f64);
    res.params.insert("m_discrete".into(), m as f64);
    res.params.insert("tv".into(), tv);
    res.params
        .insert("states_visited".into(), run.states_visited as f64);
    Ok(res)
}

struct DpInput {
    cfg: PtasConfig,
    /// DP elements: positions into the discretized instance, descending
    /// mass, zero-mass elements excluded.
    order: Vec<usize>,
    /// Integer joint masses (0-label, 1-label) per DP element.
    q: Vec<(u64, u64)>,
    /// Proxy-cost increment of assigning DP element t to part j.
    incr: Vec<Vec<f64>>,
    /// Remaining label mass after processing elements 0..t (indexed by t,
    /// rem*[t] covers elements t..).
    rem0: Vec<u64>,
    rem1: Vec<u64>,
    /// suffix_lb[t] = sum over s >= t of min_j incr[s][j].
    suffix_lb: Vec<f64>,
    /// Original positions of zero-mass elements (attached to part 0).
    inert: Vec<usize>,
}

struct DpRun {
    best_cost: f64,
    /// (parent, part) per node per layer; layer 0 is the start node.
    walk: Vec<Vec<(u32, u8)>>,
    best_final: usize,
    states_visited: usize,
}

impl DpInput {
    fn build(dinst: &Instance, floors: &[(u64, u64)], cfg: &PtasConfig) -> DpInput {
        let k = cfg.k;
        let m = cfg.m_discrete as f64;
        let mut order: Vec<usize> = (0..dinst.len())
            .filter(|&i| floors[i].0 + floors[i].1 > 0)
            .collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(floors[i].0 + floors[i].1), i));
        let inert: Vec<usize> = (0..dinst.len())
            .filter(|&i| floors[i].0 + floors[i].1 == 0)
            .collect();

        let q: Vec<(u64, u64)> = order.iter().map(|&i| floors[i]).collect();
        let half_k = 1.0 / (2.0 * k as f64);
        let incr: Vec<Vec<f64>> = order
            .iter()
            .map(|&i| {
                let mass = (floors[i].0 + floors[i].1) as f64 / m;
                let f = dinst.f(i);
                (0..k)
                    .map(|j| mass * ((f - cfg.midpoint(j)).abs() + half_k))
                    .collect()
            })
            .collect();

        let n = order.len();
        let mut rem0 = vec![0u64; n + 1];
        let mut rem1 = vec![0u64; n + 1];
        let mut suffix_lb = vec![0.0; n + 1];
        for t in (0..n).rev() {
            rem0[t] = rem0[t + 1] + q[t].0;
            rem1[t] = rem1[t + 1] + q[t].1;
            let min_incr = incr[t].iter().cloned().fold(f64::INFINITY, f64::min);
            suffix_lb[t] = suffix_lb[t + 1] + min_incr;
        }

        DpInput {
            cfg: *cfg,
            order,
            q,
            incr,
            rem0,
            rem1,
            suffix_lb,
            inert,
        }
    }

    /// Cost of the always-feasible single-part solution: everything in the
    /// part whose interval contains the overall conditional mean.
    fn single_part_upper_bound(&self) -> f64 {
        let total1: u64 = self.q.iter().map(|&(_, q1)| q1).sum();
        let total: u64 = self.q.iter().map(|&(q0, q1)| q0 + q1).sum();
        let r = total1 as f64 / total as f64;
        let j = interval_of(r, self.cfg.k);
        (0..self.q.len()).map(|t| self.incr[t][j]).sum()
    }

    fn run(&self, beam: Option<usize>, ub: f64, max_states: usize) -> Result<DpRun> {
        let k = self.cfg.k;
        let width = 2 * k;
        let n = self.order.len();

        let mut nodes: Vec<Node> = vec![Node {
            cost: 0.0,
            parent: u32::MAX,
            part: 0,
        }];
        let mut keys: Vec<u32> = vec![0; width];
        let mut walk: Vec<Vec<(u32, u8)>> = vec![vec![(u32::MAX, 0)]];
        let mut states_visited = 1usize;

        for t in 0..n {
            let (q0, q1) = self.q[t];
            let (r0, r1) = (self.rem0[t + 1], self.rem1[t + 1]);
            let lb_rest = self.suffix_lb[t + 1];
            let mut map: FxMap<Box<[u32]>, u32> = FxMap::default();
            let mut next_nodes: Vec<Node> = Vec::new();
            let mut next_keys: Vec<u32> = Vec::new();
            let mut scratch = vec![0u32; width];

            for (rank, node) in nodes.iter().enumerate() {
                let key = &keys[rank * width..(rank + 1) * width];
                for j in 0..k {
                    let cost = node.cost + self.incr[t][j];
                    if cost + lb_rest > ub + COST_SLACK {
                        continue;
                    }
                    scratch.copy_from_slice(key);
                    scratch[2 * j] += q0 as u32;
                    scratch[2 * j + 1] += q1 as u32;
                    if !self.reachable(&scratch, r0, r1) {
                        continue;
                    }
                    let cand = Node {
                        cost,
                        parent: rank as u32,
                        part: j as u8,
                    };
                    match map.get(scratch.as_slice()) {
                        Some(&idx) => {
                            let cur = &mut next_nodes[idx as usize];
                            if cand.cost < cur.cost
                                || (cand.cost == cur.cost
                                    && (cand.part, cand.parent) < (cur.part, cur.parent))
                            {
                                *cur = cand;
                            }
                        }
                        None => {
                            let idx = next_nodes.len() as u32;
                            next_nodes.push(cand);
                            next_keys.extend_from_slice(&scratch);
                            map.insert(scratch.clone().into_boxed_slice(), idx);
                        }
                    }
                }
            }
            drop(map);

            if let Some(cap) = beam {
                if next_nodes.len() > cap {
                    let mut idx: Vec<usize> = (0..next_nodes.len()).collect();
                    idx.sort_by(|&a, &b| {
                        next_nodes[a]
                            .cost
                            .partial_cmp(&next_nodes[b].cost)
                            .unwrap()
                            .then(a.cmp(&b))
                    });
                    idx.truncate(cap);
                    let mut pruned_nodes = Vec::with_capacity(cap);
                    let mut pruned_keys = Vec::with_capacity(cap * width);
                    for &i in &idx {
                        pruned_nodes.push(next_nodes[i].clone());
                        pruned_keys.extend_from_slice(&next_keys[i * width..(i + 1) * width]);
                    }
                    next_nodes = pruned_nodes;
                    next_keys = pruned_keys;
                }
            }

            states_visited += next_nodes.len();
            if states_visited > max_states {
                return Err(Error::StateSpaceTooLarge {
                    states: states_visited as u128,
                    max_states: max_states as u128,
                });
            }
            if next_nodes.is_empty() {
                // Only possible in beam mode when the cap starved the search.
                return Ok(DpRun {
                    best_cost: f64::INFINITY,
                    walk,
                    best_final: usize::MAX,
                    states_visited,
                });
            }

            #[cfg(debug_assertions)]
            {
                let processed0: u64 = self.q[..=t].iter().map(|&(a, _)| a).sum();
                let processed1: u64 = self.q[..=t].iter().map(|&(_, b)| b).sum();
                for w in 0..next_nodes.len() {
                    let key = &next_keys[w * width..(w + 1) * width];
                    let s0: u64 = (0..k).map(|j| key[2 * j] as u64).sum();
                    let s1: u64 = (0..k).map(|j| key[2 * j + 1] as u64).sum();
                    debug_assert_eq!((s0, s1), (processed0, processed1));
                }
            }

            walk.push(next_nodes.iter().map(|nd| (nd.parent, nd.part)).collect());
            nodes = next_nodes;
            keys = next_keys;
        }

        // Final filter: every part either untouched or with conditional mean
        // inside its interval.
        let mut best_cost = f64::INFINITY;
        let mut best_final = usize::MAX;
        for (rank, node) in nodes.iter().enumerate() {
            let key = &keys[rank * width..(rank + 1) * width];
            if !self.final_filter(key) {
                continue;
            }
            if node.cost < best_cost {
                best_cost = node.cost;
                best_final = rank;
            }
        }
        Ok(DpRun {
            best_cost,
            walk,
            best_final,
            states_visited,
        })
    }

    /// Lossless reachability prune: a non-empty part must still be able to
    /// bring its conditional mean into its interval using the remaining
    /// mass. The bounds assume the part could absorb all remaining 0-label
    /// (resp. 1-label) mass, so no feasible completion is ever discarded.
    fn reachable(&self, key: &[u32], rem0: u64, rem1: u64) -> bool {
        let k = self.cfg.k;
        for j in 0..k {
            let p0 = key[2 * j] as u64;
            let p1 = key[2 * j + 1] as u64;
            if p0 + p1 == 0 {
                continue;
            }
            let lo_reach = p1 as f64 / (p0 + p1 + rem0) as f64;
            let hi_reach = (p1 + rem1) as f64 / (p0 + p1 + rem1) as f64;
            let lo_j = j as f64 / k as f64;
            let hi_j = (j + 1) as f64 / k as f64;
            if hi_reach < lo_j - EDGE_SLACK || lo_reach > hi_j + EDGE_SLACK {
                return false;
            }
        }
        true
    }

    fn final_filter(&self, key: &[u32]) -> bool {
        let k = self.cfg.k;
        for j in 0..k {
            let p0 = key[2 * j] as u64;
            let p1 = key[2 * j + 1] as u64;
            if p0 + p1 == 0 {
                continue;
            }
            let r = p1 as f64 / (p0 + p1) as f64;
            let lo = j as f64 / k as f64;
            let hi = (j + 1) as f64 / k as f64;
            if r < lo - EDGE_SLACK || r > hi + EDGE_SLACK {
                return false;
            }
            // Interior intervals are half-open on the right; the slack keeps
            // exact-boundary means acceptable to exactly one honest side.
        }
        true
    }

    fn reconstruct(&self, dinst: &Instance, run: &DpRun) -> Partition {
        let mut raw = vec![0u32; dinst.len()];
        for &i in &self.inert {
            raw[i] = 0;
        }
        let mut rank = run.best_final;
        for t in (0..self.order.len()).rev() {
            let (parent, part) = run.walk[t + 1][rank];
            raw[self.order[t]] = part as u32;
            rank = parent as usize;
        }
        Partition::from_assignment(&raw)
    }
}

fn interval_of(r: f64, k: usize) -> usize {
    ((r * k as f64).floor() as usize).min(k - 1)
}

/// Recomputes, over the discretized instance, that every positive-mass part
/// of the witness sits inside its interval.
fn filter_holds(dinst: &Instance, p: &Partition, cfg: &PtasConfig) -> bool {
    let parts = p.parts();
    for part in &parts {
        let mass: f64 = part.iter().map(|&i| dinst.mass(i)).sum();
        if mass <= 0.0 {
            continue;
        }
        let mu: f64 = part.iter().map(|&i| dinst.mass(i) * dinst.mu(i)).sum::<f64>() / mass;
        let j = interval_of(mu, cfg.k);
        let lo = j as f64 / cfg.k as f64;
        let hi = (j + 1) as f64 / cfg.k as f64;
        if mu < lo - EDGE_SLACK || mu > hi + EDGE_SLACK {
            return false;
        }
    }
    true
}

#[derive(Clone)]
struct Node {
    cost: f64,
    parent: u32,
    part: u8,
}

/// Multiply-rotate hasher; state keys are short u32 slices and the default
/// hasher dominates the expansion loop otherwise.
#[derive(Default)]
struct FxHasher {
    hash: u64,
}

impl Hasher for FxHasher {
    fn write(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            self.hash = (self.hash.rotate_left(5) ^ u64::from_le_bytes(buf))
                .wrapping_mul(0x517c_c1b7_2722_0a95);
        }
    }

    fn finish(&self) -> u64 {
        self.hash
    }
}

type FxMap<K, V> = HashMap<K, V, BuildHasherDefault<FxHasher>>;

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

    fn random_instance(rng: &mut SplitMix64, n: usize) -> Instance {
        let mut rows: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| (rng.next_f64() + 0.02, rng.next_f64(), rng.next_f64()))
            .collect();
        let total: f64 = rows.iter().map(|r| r.0).sum();
        for r in &mut rows {
            r.0 /= total;
        }
        inst(&rows)
    }

    #[test]
    fn calibrated_instance_stays_below_eps() {
        let a = inst(&[(0.5, 0.3, 0.3), (0.3, 0.8, 0.8), (0.2, 0.1, 0.1)]);
        let res = ptas_caldist(&a, 0.3, DEFAULT_MAX_STATES).unwrap();
        assert!(res.value >= -TOL);
        assert!(res.value <= 0.3 + res.additive_error_budget + TOL);
    }

    #[test]
    fn four_point_noiseless_bracketed() {
        let a = inst(&[
            (0.25, 0.0, 0.1),
            (0.25, 0.0, 0.4),
            (0.25, 1.0, 0.6),
            (0.25, 1.0, 0.9),
        ]);
        let res = ptas_caldist(&a, 0.25, DEFAULT_MAX_STATES).unwrap();
        assert!(res.value >= 0.1 - res.additive_error_budget - TOL);
        assert!(res.value <= 0.1 + 0.25 + TOL);
    }

    #[test]
    fn sandwich_on_random_instances() {
        let mut rng = SplitMix64::new(0x9A5);
        for trial in 0..25 {
            let n = 2 + (rng.next_u64() % 6) as usize;
            let a = random_instance(&mut rng, n);
            let exact = oracle_caldist(&a, 13).unwrap().value;
            for eps in [0.34, 0.5] {
                let res = ptas_caldist(&a, eps, DEFAULT_MAX_STATES).unwrap();
                assert!(
                    res.value >= exact - res.additive_error_budget - TOL,
                    "trial {trial} eps {eps}: value {} under oracle {exact}",
                    res.value
                );
                assert!(
                    res.value <= exact + eps + TOL,
                    "trial {trial} eps {eps}: value {} over oracle {exact} + {eps}",
                    res.value
                );
            }
        }
    }

    #[test]
    fn witness_parts_sit_in_their_intervals() {
        let mut rng = SplitMix64::new(77);
        let a = random_instance(&mut rng, 6);
        let eps = 0.4;
        let res = ptas_caldist(&a, eps, DEFAULT_MAX_STATES).unwrap();
        let w = res.witness.unwrap();
        assert_eq!(w.len(), a.len());
        // The witness cost on the original instance certifies an upper bound
        // within the budget of the reported value.
        let cost = a.cost_of_partition(&w).unwrap();
        assert!(cost <= res.value + res.additive_error_budget + TOL);
    }

    #[test]
    fn refuses_tiny_state_caps() {
        let mut rng = SplitMix64::new(3);
        let a = random_instance(&mut rng, 7);
        assert!(matches!(
            ptas_caldist(&a, 0.5, 3),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn rejects_bad_eps() {
        let a = inst(&[(1.0, 0.5, 0.5)]);
        assert!(matches!(
            ptas_caldist(&a, 0.0, DEFAULT_MAX_STATES),
            Err(Error::EpsOutOfRange(..))
        ));
        assert!(matches!(
            ptas_caldist(&a, 1.5, DEFAULT_MAX_STATES),
            Err(Error::EpsOutOfRange(..))
        ));
    }
}
