//! Constructors for the instance families used by the hardness reductions,
//! the distinguishing experiment, and the statistical lower bounds, plus the
//! tiny brute-force subset-sum deciders the tests use as ground truth.
//!
//! Integer inputs stay integers until the final mass/probability divisions,
//! so thresholds are computed at full float precision from exact ratios.

use crate::error::{Error, Result};
use crate::instance::{Element, Instance};
use crate::rng::SplitMix64;

/// A subset-sum question: does some subset of `a` sum to exactly `theta`?
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SspInstance {
    a: Vec<u64>,
    theta: u64,
}

impl SspInstance {
    /// Requires positive entries and `0 < theta <= sum(a)/2`; targets above
    /// half the total are equivalent to their complement.
    pub fn new(a: Vec<u64>, theta: u64) -> Result<Self> {
        if a.is_empty() || a.iter().any(|&x| x == 0) {
            return Err(Error::InvalidParameter(
                "subset-sum entries must be positive".into(),
            ));
        }
        let sum: u64 = a.iter().sum();
        if theta == 0 || 2 * theta > sum {
            return Err(Error::InvalidParameter(format!(
                "theta = {theta} must satisfy 0 < theta <= sum/2 = {}",
                sum / 2
            )));
        }
        Ok(SspInstance { a, theta })
    }

    pub fn entries(&self) -> &[u64] {
        &self.a
    }

    pub fn theta(&self) -> u64 {
        self.theta
    }

    pub fn sum(&self) -> u64 {
        self.a.iter().sum()
    }
}

/// 2k near-equal positive integers; the question is whether k of them sum
/// to half the total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedSspInstance {
    a: Vec<u64>,
}

impl BalancedSspInstance {
    /// Enforces the balance promise max/min <= 1 + 1/(100k) exactly in
    /// integers: 100k * max <= (100k + 1) * min.
    pub fn new(a: Vec<u64>) -> Result<Self> {
        let inst = Self::new_unchecked(a)?;
        let k = inst.k() as u64;
        let max = *inst.a.iter().max().unwrap();
        let min = *inst.a.iter().min().unwrap();
        if 100 * k * max > (100 * k + 1) * min {
            return Err(Error::InvalidParameter(format!(
                "entries violate the balance promise: {max}/{min} > 1 + 1/(100*{k})"
            )));
        }
        Ok(inst)
    }

    /// Skips the balance check; the reduction construction itself only needs
    /// positive entries, an even count, and conditional probabilities that
    /// stay within [0, 1].
    pub fn new_unchecked(a: Vec<u64>) -> Result<Self> {
        if a.len() < 2 || a.len() % 2 != 0 {
            return Err(Error::InvalidParameter(
                "need an even number (>= 2) of entries".into(),
            ));
        }
        if a.iter().any(|&x| x == 0) {
            return Err(Error::InvalidParameter("entries must be positive".into()));
        }
        Ok(BalancedSspInstance { a })
    }

    pub fn entries(&self) -> &[u64] {
        &self.a
    }

    pub fn k(&self) -> usize {
        self.a.len() / 2
    }

    pub fn sum(&self) -> u64 {
        self.a.iter().sum()
    }
}

/// Four equal-mass points with binary values and predictions straddling 1/2
/// by `eps`; its calibration distance is exactly `eps` for small `eps`.
pub fn gen_bghn(eps: f64) -> Result<Instance> {
    if !(eps > 0.0 && eps < 1.0 / 6.0) {
        return Err(Error::EpsOutOfRange(eps, "(0, 1/6)"));
    }
    Instance::new(vec![
        Element::new("x0m", 0.25, 0.0, 0.5 - eps),
        Element::new("x1m", 0.25, 1.0, 0.5 - eps),
        Element::new("x0p", 0.25, 0.0, 0.5 + eps),
        Element::new("x1p", 0.25, 1.0, 0.5 + eps),
    ])
}

/// Embeds a subset-sum question into a noiseless, non-uniform instance.
///
/// With `p* = theta/(4S)` and `alpha = p*/(1 - 2p*)`, the instance has
/// calibration distance at most `alpha * p*` iff the question is a Yes;
/// the returned threshold is that product, computed from integer ratios.
pub fn gen_noiseless_reduction(ssp: &SspInstance) -> (Instance, f64) {
    let s = ssp.sum();
    let theta = ssp.theta();
    let p_star = theta as f64 / (4 * s) as f64;
    let alpha = theta as f64 / (4 * s - 2 * theta) as f64;
    let threshold =
        (theta as u128 * theta as u128) as f64 / ((4 * s as u128) * (4 * s as u128 - 2 * theta as u128)) as f64;

    let mut elements = vec![
        Element::new("x0", 0.25 - p_star / 2.0, 0.0, 0.5),
        Element::new("x1", 0.25 + p_star / 2.0, 1.0, 0.5),
    ];
    for (i, &ai) in ssp.entries().iter().enumerate() {
        elements.push(Element::new(
            format!("x0p_{}", i + 1),
            ai as f64 / (4 * s) as f64,
            0.0,
            0.5 + alpha,
        ));
    }
    elements.push(Element::new("x1p", 0.25, 1.0, 0.5 + alpha));
    let inst = Instance::new(elements).expect("masses telescope to 1");
    (inst, threshold)
}

/// Embeds a balanced subset-sum question into a uniform-marginal instance
/// over 6k elements; the calibration distance is at most 1/(36k) iff some k
/// entries sum to half the total.
///
/// Errors when a conditional probability 1/2 + a_i/S exceeds 1, which can
/// only happen at k = 1 with unequal entries.
pub fn gen_uniform_reduction(bssp: &BalancedSspInstance) -> Result<(Instance, f64)> {
    let (inst, threshold) = uniform_reduction_with(bssp, UniformMu::Exact)?;
    Ok((inst, threshold))
}

/// The same construction with every x-element's conditional probability
/// replaced by 1/2 + 1/(2k); three element types remain.
pub fn gen_rounded_uniform_reduction(bssp: &BalancedSspInstance) -> Result<Instance> {
    let (inst, _) = uniform_reduction_with(bssp, UniformMu::Rounded)?;
    Ok(inst)
}

enum UniformMu {
    Exact,
    Rounded,
}

fn uniform_reduction_with(bssp: &BalancedSspInstance, mode: UniformMu) -> Result<(Instance, f64)> {
    let k = bssp.k() as u64;
    let n = bssp.entries().len();
    let s = bssp.sum();
    let mass = 1.0 / (6 * k) as f64;
    let delta_mu = (2 * k - 1) as f64 / (4 * k) as f64; // 1/2 - 1/(4k)
    let f_shift = (3 * k + 1) as f64 / (6 * k) as f64; // 1/2 + 1/(6k)

    let mut elements = Vec::with_capacity(3 * n);
    for (i, &ai) in bssp.entries().iter().enumerate() {
        let mu = match mode {
            // 1/2 + a_i/S as the exact ratio (S + 2 a_i) / (2S).
            UniformMu::Exact => (s + 2 * ai) as f64 / (2 * s) as f64,
            // 1/2 + 1/(2k) = (k + 1)/(2k).
            UniformMu::Rounded => (k + 1) as f64 / (2 * k) as f64,
        };
        elements.push(Element::new(format!("x_{}", i + 1), mass, mu, 0.5));
    }
    for i in 0..n {
        elements.push(Element::new(format!("xp_{}", i + 1), mass, delta_mu, 0.5));
    }
    for i in 0..n {
        elements.push(Element::new(format!("xpp_{}", i + 1), mass, 0.5, f_shift));
    }
    let inst = Instance::new(elements)?;
    let threshold = 1.0 / (36 * k) as f64;
    Ok((inst, threshold))
}

/// Reduces an arbitrary partition question (can `a` be split into two
/// equal-sum halves?) to a balanced instance: add `M = 100 n S` to every
/// entry and pad with n copies of `M`.
pub fn partition_to_balanced_ssp(a: &[u64]) -> Result<BalancedSspInstance> {
    if a.is_empty() || a.iter().any(|&x| x == 0) {
        return Err(Error::InvalidParameter(
            "partition entries must be positive".into(),
        ));
    }
    let n = a.len() as u64;
    let s: u64 = a.iter().sum();
    let m = 100u64
        .checked_mul(n)
        .and_then(|v| v.checked_mul(s))
        .ok_or_else(|| Error::InvalidParameter("entries too large".into()))?;
    let mut out: Vec<u64> = a
        .iter()
        .map(|&x| {
            x.checked_add(m)
                .ok_or_else(|| Error::InvalidParameter("entries too large".into()))
        })
        .collect::<Result<_>>()?;
    out.extend(std::iter::repeat(m).take(a.len()));
    BalancedSspInstance::new(out)
}

/// Which clause of the integer-triple trichotomy a signature satisfies
/// first: proportional to (1,2,0) or (1,0,2); more x-elements than half the
/// rest; or a certified unit of leftward movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureClass {
    RegularMultiple,
    Imbalanced,
    Costly,
}

/// Classifies a part signature (counts of x-, x'-, x''-elements) by the
/// first clause it satisfies, in exact integer arithmetic. At least one
/// clause always holds.
pub fn classify_signature(a: u64, b: u64, c: u64) -> Result<SignatureClass> {
    if a == 0 && b == 0 && c == 0 {
        return Err(Error::AllZero);
    }
    if (a > 0 && b == 2 * a && c == 0) || (a > 0 && c == 2 * a && b == 0) {
        return Ok(SignatureClass::RegularMultiple);
    }
    if 2 * a > b + c {
        return Ok(SignatureClass::Imbalanced);
    }
    // mu = (6a - 3b) / (a + b + c); the clause
    //   (a + b) * max(-mu, 0) + c * max(2 - mu, 0) >= 1
    // clears denominators to integers.
    let p = 6 * a as i128 - 3 * b as i128;
    let q = (a + b + c) as i128;
    let lhs = (a + b) as i128 * (-p).max(0) + c as i128 * (2 * q - p).max(0);
    if lhs >= q {
        return Ok(SignatureClass::Costly);
    }
    unreachable!("integer-triple trichotomy has no uncovered case: ({a}, {b}, {c})")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistinguishMode {
    /// All tail elements have conditional probability 1/2.
    Pure,
    /// Tail conditional probabilities drawn i.i.d. from {0, 1} fair coins.
    Mixed,
}

/// The size-(4k+3) family separating a fixed calibration distance from a
/// much smaller one: a heavy neutral element, two side elements predicted at
/// 1/3 and 2/3, and 4k light tail elements predicted at 1/2.
pub fn gen_distinguishing(
    k: usize,
    gamma: f64,
    mode: DistinguishMode,
    seed: u64,
) -> Result<Instance> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::EpsOutOfRange(gamma, "(0, 1)"));
    }
    let mut elements = vec![
        Element::new("bot", 1.0 - gamma, 0.5, 0.5),
        Element::new("x_minus", gamma / 4.0, 0.5, 1.0 / 3.0),
        Element::new("x_plus", gamma / 4.0, 0.5, 2.0 / 3.0),
    ];
    let tail_mass = gamma / (8 * k) as f64;
    let mut rng = SplitMix64::new(seed);
    for i in 1..=4 * k {
        let mu = match mode {
            DistinguishMode::Pure => 0.5,
            DistinguishMode::Mixed => {
                if rng.bernoulli(0.5) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        elements.push(Element::new(format!("x_{i}"), tail_mass, mu, 0.5));
    }
    Instance::new(elements)
}

/// Perfectly calibrated uniform instance with k distinct predictions
/// 1/3 + i/(3k); its calibration distance is 0, yet empirical estimates
/// over moderate samples stay bounded away from 0.
pub fn gen_one_sided_lb(k: usize) -> Result<Instance> {
    if k < 1 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let elements = (1..=k)
        .map(|i| {
            let v = (k + i) as f64 / (3 * k) as f64; // 1/3 + i/(3k)
            Element::new(format!("x_{i}"), 1.0 / k as f64, v, v)
        })
        .collect();
    Instance::new(elements)
}

/// Brute-force subset-sum decision; test oracle for tiny inputs only.
pub fn subset_sum_exists(a: &[u64], theta: u64) -> bool {
    assert!(a.len() <= 25, "brute-force decider is for tiny inputs");
    (0u32..(1u32 << a.len())).any(|mask| {
        let sum: u64 = a
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &x)| x)
            .sum();
        sum == theta
    })
}

/// Brute-force balanced decision: does some size-k subset of the 2k entries
/// sum to half the total?
pub fn balanced_split_exists(b: &BalancedSspInstance) -> bool {
    let a = b.entries();
    assert!(a.len() <= 25, "brute-force decider is for tiny inputs");
    let total: u64 = a.iter().sum();
    if total % 2 != 0 {
        return false;
    }
    let k = b.k() as u32;
    (0u32..(1u32 << a.len())).any(|mask| {
        if mask.count_ones() != k {
            return false;
        }
        let sum: u64 = a
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &x)| x)
            .sum();
        2 * sum == total
    })
}
