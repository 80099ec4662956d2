//! The shared data model: finite domains with per-element mass, conditional
//! label probability, and prediction, plus the cost/distance primitives all
//! solvers build on.
//!
//! An [`Instance`] describes a distribution over `X x {0,1}` through its
//! marginal (`mass`), the conditional probability of label 1 (`mu`), and a
//! predictor `f`. Every quantity here is a pure function of immutable values.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::rng::mix64;

/// Absolute tolerance used for equality comparisons throughout the crate.
pub const TOL: f64 = 1e-9;

/// One domain element.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: String,
    /// Marginal probability of the element; non-negative, sums to 1 over the
    /// instance. Zero-mass elements are permitted and contribute nothing to
    /// any cost.
    pub mass: f64,
    /// Conditional probability of label 1 given the element, in `[0, 1]`.
    pub mu: f64,
    /// Prediction in `[0, 1]`.
    pub f: f64,
}

impl Element {
    pub fn new(id: impl Into<String>, mass: f64, mu: f64, f: f64) -> Self {
        Element {
            id: id.into(),
            mass,
            mu,
            f,
        }
    }
}

/// A finite binary-label distribution together with a predictor.
#[derive(Debug, Clone)]
pub struct Instance {
    elements: Vec<Element>,
    by_id: HashMap<String, usize>,
}

impl Instance {
    /// Validates invariants: unique ids, `mu`/`f` in `[0,1]`, non-negative
    /// masses summing to 1 within [`TOL`].
    pub fn new(elements: Vec<Element>) -> Result<Self> {
        Self::with_mass_tolerance(elements, TOL)
    }

    /// Same as [`Instance::new`] but accepts a looser mass-sum tolerance and
    /// renormalizes, as required when loading external files.
    pub fn new_renormalized(mut elements: Vec<Element>, load_tol: f64) -> Result<Self> {
        let sum: f64 = elements.iter().map(|e| e.mass).sum();
        if (sum - 1.0).abs() > load_tol {
            return Err(Error::InvalidInstance(format!(
                "masses sum to {sum}, expected 1 within {load_tol}"
            )));
        }
        if sum > 0.0 {
            for e in &mut elements {
                e.mass /= sum;
            }
        }
        Self::with_mass_tolerance(elements, TOL)
    }

    fn with_mass_tolerance(mut elements: Vec<Element>, tol: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidInstance("no elements".into()));
        }
        let mut by_id = HashMap::with_capacity(elements.len());
        let mut sum = 0.0;
        for (i, e) in elements.iter_mut().enumerate() {
            if !(e.mass.is_finite() && e.mass >= 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "element `{}` has mass {}",
                    e.id, e.mass
                )));
            }
            for (name, v) in [("mu", &mut e.mu), ("f", &mut e.f)] {
                if !v.is_finite() || *v < -1e-12 || *v > 1.0 + 1e-12 {
                    return Err(Error::InvalidInstance(format!(
                        "element `{}` has {name} = {v} outside [0, 1]"
                    )));
                }
                *v = v.clamp(0.0, 1.0);
            }
            sum += e.mass;
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(Error::InvalidInstance(format!("duplicate id `{}`", e.id)));
            }
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidInstance(format!(
                "masses sum to {sum}, expected 1 within {tol}"
            )));
        }
        Ok(Instance { elements, by_id })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &Element {
        &self.elements[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.elements[i].mass
    }

    pub fn mu(&self, i: usize) -> f64 {
        self.elements[i].mu
    }

    pub fn f(&self, i: usize) -> f64 {
        self.elements[i].f
    }

    /// The instance's own predictor `f`, as a [`Predictor`] value.
    pub fn predictor(&self) -> Predictor {
        Predictor {
            values: self.elements.iter().map(|e| e.f).collect(),
        }
    }

    /// True when all masses equal `1/|X|` within `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let w = 1.0 / self.len() as f64;
        self.elements.iter().all(|e| (e.mass - w).abs() <= tol)
    }

    /// True when every conditional probability is 0 or 1 within `tol`.
    pub fn is_noiseless(&self, tol: f64) -> bool {
        self.elements
            .iter()
            .all(|e| e.mu <= tol || (1.0 - e.mu) <= tol)
    }

    /// Overall positive-label rate `E[y]`.
    pub fn positive_rate(&self) -> f64 {
        self.elements.iter().map(|e| e.mass * e.mu).sum()
    }

    /// Resolve a set of element ids into positions.
    pub fn resolve_ids<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I) -> Result<Vec<usize>> {
        ids.into_iter()
            .map(|id| {
                self.position(id)
                    .ok_or_else(|| Error::UnknownElement(id.to_string()))
            })
            .collect()
    }

    /// Mass-weighted average of `mu` over a subset: the conditional
    /// probability of label 1 given that the element lies in the subset.
    pub fn mu_of_subset(&self, subset: &[usize]) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        let mut mass = 0.0;
        let mut mass_mu = 0.0;
        for &i in subset {
            mass += self.elements[i].mass;
            mass_mu += self.elements[i].mass * self.elements[i].mu;
        }
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Ok(mass_mu / mass)
    }

    /// Transport cost of merging a subset: each member pays its mass times
    /// the distance from its prediction to the subset's conditional mean.
    pub fn cost_of_subset(&self, subset: &[usize]) -> Result<f64> {
        let mu = self.mu_of_subset(subset)?;
        Ok(subset
            .iter()
            .map(|&i| self.elements[i].mass * (self.elements[i].f - mu).abs())
            .sum())
    }

    /// Sum of per-part costs. Equals the L1 distance from `f` to the
    /// partition's induced predictor. Parts of zero total mass contribute
    /// nothing.
    pub fn cost_of_partition(&self, p: &Partition) -> Result<f64> {
        self.check_partition(p)?;
        let k = p.num_parts();
        let mut mass = vec![0.0; k];
        let mut mass_mu = vec![0.0; k];
        for (i, e) in self.elements.iter().enumerate() {
            let t = p.part_of(i);
            mass[t] += e.mass;
            mass_mu[t] += e.mass * e.mu;
        }
        let mut cost = 0.0;
        for (i, e) in self.elements.iter().enumerate() {
            let t = p.part_of(i);
            if mass[t] > 0.0 {
                cost += e.mass * (e.f - mass_mu[t] / mass[t]).abs();
            }
        }
        Ok(cost)
    }

    /// The perfectly calibrated predictor a partition induces: every element
    /// predicts its part's conditional mean. Parts of zero mass predict 0.
    pub fn induced_predictor(&self, p: &Partition) -> Result<Predictor> {
        self.check_partition(p)?;
        let k = p.num_parts();
        let mut mass = vec![0.0; k];
        let mut mass_mu = vec![0.0; k];
        for (i, e) in self.elements.iter().enumerate() {
            let t = p.part_of(i);
            mass[t] += e.mass;
            mass_mu[t] += e.mass * e.mu;
        }
        let mu: Vec<f64> = mass
            .iter()
            .zip(&mass_mu)
            .map(|(&m, &mm)| if m > 0.0 { mm / m } else { 0.0 })
            .collect();
        Ok(Predictor {
            values: (0..self.len()).map(|i| mu[p.part_of(i)]).collect(),
        })
    }

    /// Checks perfect calibration of `g`: grouping elements by exact
    /// predicted value, every group with positive mass must satisfy
    /// `|mu(group) - value| <= tol`.
    pub fn is_calibrated(&self, g: &Predictor, tol: f64) -> Result<bool> {
        self.check_predictor(g)?;
        let mut groups: HashMap<u64, (f64, f64)> = HashMap::new();
        for (i, e) in self.elements.iter().enumerate() {
            let entry = groups.entry(g.values[i].to_bits()).or_insert((0.0, 0.0));
            entry.0 += e.mass;
            entry.1 += e.mass * e.mu;
        }
        Ok(groups.iter().all(|(&bits, &(mass, mass_mu))| {
            mass <= 0.0 || (mass_mu / mass - f64::from_bits(bits)).abs() <= tol
        }))
    }

    /// Mass-weighted L1 distance between two predictors over this marginal.
    pub fn l1_distance(&self, f: &Predictor, g: &Predictor) -> Result<f64> {
        self.check_predictor(f)?;
        self.check_predictor(g)?;
        Ok(self
            .elements
            .iter()
            .enumerate()
            .map(|(i, e)| e.mass * (f.values[i] - g.values[i]).abs())
            .sum())
    }

    fn check_partition(&self, p: &Partition) -> Result<()> {
        if p.len() != self.len() {
            return Err(Error::PartitionMismatch(format!(
                "partition covers {} elements, instance has {}",
                p.len(),
                self.len()
            )));
        }
        Ok(())
    }

    fn check_predictor(&self, g: &Predictor) -> Result<()> {
        if g.values.len() != self.len() {
            return Err(Error::DomainMismatch(format!(
                "predictor has {} values, instance has {} elements",
                g.values.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// Order-sensitive fingerprint of ids and numeric fields; used to tie a
    /// sample back to the instance it was drawn from.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for e in &self.elements {
            for b in e.id.as_bytes() {
                h = mix64(h ^ *b as u64);
            }
            h = mix64(h ^ e.mass.to_bits());
            h = mix64(h ^ e.mu.to_bits());
            h = mix64(h ^ e.f.to_bits());
        }
        h
    }
}

/// A predictor over an instance's domain, stored positionally in the
/// instance's element order.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub values: Vec<f64>,
}

impl Predictor {
    pub fn new(values: Vec<f64>) -> Self {
        Predictor { values }
    }

    pub fn constant(n: usize, v: f64) -> Self {
        Predictor {
            values: vec![v; n],
        }
    }
}

/// Total variation distance between the joint distributions of two
/// instances over `X x {0,1}`, matching elements by id. Elements present on
/// only one side contribute their full joint mass.
pub fn tv_distance(a: &Instance, b: &Instance) -> f64 {
    let mut sum = 0.0;
    for ea in a.elements() {
        let (mb, ub) = match b.position(&ea.id) {
            Some(j) => (b.mass(j), b.mu(j)),
            None => (0.0, 0.0),
        };
        sum += (ea.mass * ea.mu - mb * ub).abs();
        sum += (ea.mass * (1.0 - ea.mu) - mb * (1.0 - ub)).abs();
    }
    for eb in b.elements() {
        if a.position(&eb.id).is_none() {
            sum += eb.mass;
        }
    }
    0.5 * sum
}
