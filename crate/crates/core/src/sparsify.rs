//! Distribution transforms that trade a certified amount of total-variation
//! distance for structural sparsity, plus the pipeline solver that chains a
//! transform with the type-sparse dynamic program.
//!
//! Every transform returns the new instance together with the TV distance it
//! actually achieved (always at most the requested budget). Because the
//! calibration distance moves by at most five times the TV distance, a
//! transform with budget eps certifies an additive error of 5*eps.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::instance::{tv_distance, Element, Instance};
use crate::result::{Solver, SolverResult};
use crate::typesparse::{count_types, typesparse_caldist};

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1]"));
    }
    Ok(())
}

/// Floor `v` to the grid {0, step, 2*step, ...} with a 1e-9 guard so values
/// born as exact multiples stay put despite float noise. Never exceeds 1.
fn floor_to_grid(v: f64, step: f64) -> f64 {
    let q = (v / step + 1e-9).floor();
    let r = q * step;
    if (r - v).abs() <= 1e-9 {
        v
    } else {
        r.clamp(0.0, 1.0)
    }
}

/// Round the conditional probabilities of a uniform-marginal instance down
/// to multiples of `eps`, yielding at most ceil(1/eps) + 1 types.
pub fn type_sparsify_uniform(inst: &Instance, eps: f64) -> Result<(Instance, f64)> {
    check_eps(eps)?;
    if !inst.is_uniform(1e-9) {
        return Err(Error::NotUniform);
    }
    let elements = inst
        .elements()
        .iter()
        .map(|e| Element::new(e.id.clone(), e.mass, floor_to_grid(e.mu, eps), e.f))
        .collect();
    let out = Instance::new(elements)?;
    let tv = tv_distance(inst, &out);
    assert!(tv <= eps + 1e-12, "achieved tv {tv} exceeds budget {eps}");
    let max_types = (1.0 / eps).ceil() as usize + 1;
    assert!(
        count_types(&out) <= max_types,
        "sparsity bound violated: {} types > {max_types}",
        count_types(&out)
    );
    Ok((out, tv))
}

/// General type sparsifier: round conditional probabilities to multiples of
/// eps/2, drop marginal masses at or below (eps/4)/|X|, round the survivors
/// down to integer powers of 1 + eps/4, and renormalize by the surviving
/// sum. Yields O(log(|X|/eps)/eps^2) types at TV cost at most eps.
pub fn type_sparsify_general(inst: &Instance, eps: f64) -> Result<(Instance, f64)> {
    check_eps(eps)?;
    let delta = eps / 4.0;
    let cutoff = delta / inst.len() as f64;
    let ln_base = (1.0 + delta).ln();

    let rounded_mass: Vec<f64> = inst
        .elements()
        .iter()
        .map(|e| {
            if e.mass <= cutoff {
                0.0
            } else {
                round_down_to_power(e.mass, 1.0 + delta, ln_base)
            }
        })
        .collect();
    let surviving: f64 = rounded_mass.iter().sum();
    // At least one mass exceeds 1/|X| > cutoff, so the sum is positive.
    assert!(surviving > 0.0);

    let elements = inst
        .elements()
        .iter()
        .zip(&rounded_mass)
        .map(|(e, &a)| {
            Element::new(
                e.id.clone(),
                a / surviving,
                floor_to_grid(e.mu, eps / 2.0),
                e.f,
            )
        })
        .collect();
    let out = Instance::new(elements)?;
    let tv = tv_distance(inst, &out);
    assert!(tv <= eps + 1e-12, "achieved tv {tv} exceeds budget {eps}");

    let distinct_mu = distinct_count(out.elements().iter().map(|e| e.mu));
    let distinct_mass = distinct_count(out.elements().iter().map(|e| e.mass));
    let mu_bound = (2.0 / eps).ceil() as usize + 1;
    assert!(distinct_mu <= mu_bound);
    assert!(count_types(&out) <= mu_bound * distinct_mass);
    Ok((out, tv))
}

/// Largest power base^k (integer k, possibly negative) that is <= v, with a
/// snap for values born as exact powers.
fn round_down_to_power(v: f64, base: f64, ln_base: f64) -> f64 {
    let e = v.ln() / ln_base;
    let k = e.round();
    let snapped = base.powi(k as i32);
    if (snapped - v).abs() <= 1e-12 * v.max(1e-300) {
        return v;
    }
    let mut k = e.floor() as i32;
    let mut a = base.powi(k);
    // Guard against float drift on either side of the true floor.
    while a > v {
        k -= 1;
        a = base.powi(k);
    }
    while a * base <= v {
        k += 1;
        a *= base;
    }
    a
}

fn distinct_count<I: Iterator<Item = f64>>(values: I) -> usize {
    let mut seen: Vec<u64> = values.map(|v| v.to_bits()).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Floor every joint mass to a multiple of 1/N and renormalize, producing an
/// instance whose joint masses are exact multiples of 1/M for
/// M = sum of floor(D(x,y) * N). N is the smallest power of two at least
/// 4|X|/eps, which makes the floors reproducible and bounds the TV cost by
/// 2|X|/N <= eps/2.
pub fn discretize(inst: &Instance, eps: f64) -> Result<(Instance, f64, u64)> {
    check_eps(eps)?;
    let target = 4.0 * inst.len() as f64 / eps;
    if target > (1u64 << 62) as f64 {
        return Err(Error::InvalidParameter(format!(
            "discretization grid 4|X|/eps = {target} too fine"
        )));
    }
    let mut n = 1u64;
    while (n as f64) < target {
        n <<= 1;
    }
    let (out, tv, m, _) = discretize_with_n(inst, n)?;
    assert!(tv <= eps + 1e-12, "achieved tv {tv} exceeds budget {eps}");
    Ok((out, tv, m))
}

/// Discretization against an explicit grid 1/N. Returns the instance, the
/// achieved TV distance, the denominator M, and each element's joint masses
/// in integer units of 1/M as (zero-label, one-label) counts.
pub fn discretize_with_n(
    inst: &Instance,
    n: u64,
) -> Result<(Instance, f64, u64, Vec<(u64, u64)>)> {
    let floors: Vec<(u64, u64)> = inst
        .elements()
        .iter()
        .map(|e| {
            let d1 = e.mass * e.mu;
            let d0 = e.mass - d1;
            (
                (d0 * n as f64 + 1e-9).floor() as u64,
                (d1 * n as f64 + 1e-9).floor() as u64,
            )
        })
        .collect();
    let m: u64 = floors.iter().map(|&(q0, q1)| q0 + q1).sum();
    if m == 0 {
        return Err(Error::DegenerateInstance);
    }
    let elements = inst
        .elements()
        .iter()
        .zip(&floors)
        .map(|(e, &(q0, q1))| {
            let total = q0 + q1;
            let mass = total as f64 / m as f64;
            // Conditional probability recomputed from the discretized joint,
            // never carried over; zero-mass elements get mu = 0.
            let mu = if total > 0 {
                q1 as f64 / total as f64
            } else {
                0.0
            };
            Element::new(e.id.clone(), mass, mu, e.f)
        })
        .collect();
    let out = Instance::new(elements)?;
    let tv = tv_distance(inst, &out);
    Ok((out, tv, m, floors))
}

/// Approximate solver for moderate eps: sparsify with a tenth of the budget
/// (so the 5x continuity factor leaves half the budget as slack), then run
/// the exact type-sparse program on the transformed instance.
///
/// The returned value v satisfies |v - CalDist| <= additive_error_budget,
/// where the budget is five times the achieved TV distance.
pub fn pipeline_caldist(inst: &Instance, eps: f64, max_states: usize) -> Result<SolverResult> {
    check_eps(eps)?;
    let start = Instant::now();
    let transform_eps = eps / 10.0;
    let (sparse, tv) = if inst.is_uniform(1e-9) {
        type_sparsify_uniform(inst, transform_eps)?
    } else {
        type_sparsify_general(inst, transform_eps)?
    };
    let inner = typesparse_caldist(&sparse, max_states)?;
    let mut res = SolverResult::new(Solver::Pipeline, inner.value);
    res.witness = inner.witness;
    res.additive_error_budget = 5.0 * tv;
    res.wall_time = start.elapsed();
    res.params.insert("eps".into(), eps);
    res.params.insert("transform_eps".into(), transform_eps);
    res.params.insert("tv".into(), tv);
    res.params
        .insert("k".into(), inner.params.get("k").copied().unwrap_or(0.0));
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::TOL;
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

    #[test]
    fn uniform_identity_when_on_grid() {
        let a = inst(&[(0.25, 0.0, 0.3), (0.25, 0.5, 0.1), (0.25, 1.0, 0.9), (0.25, 0.1, 0.2)]);
        let (out, tv) = type_sparsify_uniform(&a, 0.1).unwrap();
        assert!(tv.abs() < TOL);
        assert_eq!(out.elements(), a.elements());
    }

    #[test]
    fn uniform_floors_off_grid_values() {
        let a = inst(&[(0.5, 0.37, 0.3), (0.5, 0.81, 0.1)]);
        let (out, tv) = type_sparsify_uniform(&a, 0.1).unwrap();
        assert!((out.mu(0) - 0.3).abs() < TOL);
        assert!((out.mu(1) - 0.8).abs() < TOL);
        assert!((tv - 0.04).abs() < TOL);
    }

    #[test]
    fn uniform_eps_one_floors_everything_to_zero() {
        let a = inst(&[(0.5, 0.4, 0.3), (0.5, 0.9, 0.1)]);
        let (out, tv) = type_sparsify_uniform(&a, 1.0).unwrap();
        assert!(out.mu(0).abs() < TOL && out.mu(1).abs() < TOL);
        assert!(out.is_noiseless(TOL));
        assert!(tv <= 1.0);
    }

    #[test]
    fn uniform_rejects_non_uniform() {
        let a = inst(&[(0.7, 0.4, 0.3), (0.3, 0.9, 0.1)]);
        assert_eq!(type_sparsify_uniform(&a, 0.1), Err(Error::NotUniform));
    }

    #[test]
    fn general_near_identity_on_sparse_input() {
        // Single element: mass 1 is a zeroth power, so the marginal is kept.
        let a = inst(&[(1.0, 0.5, 0.5)]);
        let (out, tv) = type_sparsify_general(&a, 0.2).unwrap();
        assert!((out.mass(0) - 1.0).abs() < TOL);
        assert!(tv <= 0.2 + 1e-12);
    }

    #[test]
    fn general_rounds_and_renormalizes() {
        let a = inst(&[(0.25, 0.1, 0.3), (0.25, 0.33, 0.1), (0.25, 0.67, 0.9), (0.25, 0.9, 0.2)]);
        let eps = 0.2;
        let (out, tv) = type_sparsify_general(&a, eps).unwrap();
        let sum: f64 = out.elements().iter().map(|e| e.mass).sum();
        assert!((sum - 1.0).abs() < TOL);
        assert!(tv <= eps + 1e-12);
        // Masses survive the (eps/4)/4 cutoff and stay close to 1/4.
        for e in out.elements() {
            assert!(e.mass > 0.2 && e.mass <= 0.26);
        }
    }

    #[test]
    fn power_rounding_is_exact_on_powers() {
        let base: f64 = 1.05;
        let ln_base = base.ln();
        for k in [-40i32, -7, -1, 0] {
            let v = base.powi(k);
            let r = round_down_to_power(v, base, ln_base);
            assert_eq!(r.to_bits(), v.to_bits(), "k={k}");
        }
        let r = round_down_to_power(0.9, base, ln_base);
        assert!(r <= 0.9 && r * base > 0.9);
    }

    #[test]
    fn discretize_exact_grid_is_identity() {
        // Joint masses (0.26, 0.24, 0.26, 0.24) are exact multiples of 1/50.
        let a = inst(&[(0.5, 0.48, 0.3), (0.5, 0.48, 0.7)]);
        let (out, tv, m, floors) = discretize_with_n(&a, 50).unwrap();
        assert_eq!(m, 50);
        assert!(tv.abs() < TOL);
        assert_eq!(floors, vec![(13, 12), (13, 12)]);
        assert!((out.mass(0) - 0.5).abs() < TOL);
    }

    #[test]
    fn discretize_thirds_at_n_24() {
        // Joint (1/3, 1/6) and (1/4, 1/4): all exact multiples of 1/24.
        let a = inst(&[(0.5, 1.0 / 3.0, 0.3), (0.5, 0.5, 0.7)]);
        let (_, tv, m, floors) = discretize_with_n(&a, 24).unwrap();
        assert_eq!(m, 24);
        assert_eq!(floors, vec![(8, 4), (6, 6)]);
        assert!(tv.abs() < TOL);
    }

    #[test]
    fn discretize_budget_and_exact_multiples() {
        let mut rng = SplitMix64::new(5150);
        for _ in 0..50 {
            let n = 2 + (rng.next_u64() % 6) as usize;
            let mut rows: Vec<(f64, f64, f64)> = (0..n)
                .map(|_| (rng.next_f64() + 0.01, rng.next_f64(), rng.next_f64()))
                .collect();
            let total: f64 = rows.iter().map(|r| r.0).sum();
            for r in &mut rows {
                r.0 /= total;
            }
            let a = inst(&rows);
            let eps = 0.05 + 0.5 * rng.next_f64();
            let (out, tv, m) = discretize(&a, eps).unwrap();
            assert!(tv <= eps + 1e-12);
            for e in out.elements() {
                // Joint masses reconstruct to integers in units of 1/M.
                for v in [e.mass * e.mu, e.mass * (1.0 - e.mu)] {
                    let scaled = v * m as f64;
                    assert!((scaled - scaled.round()).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn pipeline_tracks_oracle_within_budget() {
        // On-grid uniform instance: the transform is the identity and the
        // value is exact.
        let a = inst(&[(0.25, 0.0, 0.49), (0.25, 1.0, 0.49), (0.25, 0.0, 0.51), (0.25, 1.0, 0.51)]);
        let res = pipeline_caldist(&a, 0.5, 1 << 20).unwrap();
        assert!(res.additive_error_budget.abs() < TOL);
        assert!((res.value - 0.01).abs() < TOL);

        // Perfectly calibrated instance: value stays within the budget.
        let b = inst(&[(0.5, 0.3, 0.3), (0.5, 0.8, 0.8)]);
        let res = pipeline_caldist(&b, 0.2, 1 << 20).unwrap();
        assert!(res.value <= 0.2 + TOL);

        // Non-uniform instance goes through the general sparsifier.
        let c = inst(&[(0.6, 0.37, 0.2), (0.4, 0.81, 0.7)]);
        let res = pipeline_caldist(&c, 0.4, 1 << 20).unwrap();
        let oracle = oracle_caldist(&c, 13).unwrap();
        assert!((res.value - oracle.value).abs() <= res.additive_error_budget + TOL);
    }
}
