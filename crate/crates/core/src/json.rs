//! Versioned JSON wire formats.
//!
//! Instance: `{"schema":1,"elements":[{"id":"x0","mass":0.25,"mu":0.0,"f":0.49},...]}`.
//! Masses must sum to 1 within 1e-6 at load and are then renormalized.
//! Partition: `{"schema":1,"assignment":{"x0":0,"x1":0,...}}` keyed by id.
//!
//! Serialization goes through serde_json, which emits the shortest decimal
//! form that round-trips every 64-bit float exactly; map keys are ordered,
//! so identical values serialize to identical bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Element, Instance, Predictor};
use crate::partition::Partition;
use crate::result::{Solver, SolverResult};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn check_schema(schema: u32) -> Result<()> {
    if schema != SCHEMA_VERSION {
        return Err(Error::InvalidParameter(format!(
            "unsupported schema version {schema}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ElementWire {
    id: String,
    mass: f64,
    mu: f64,
    f: f64,
}

#[derive(Serialize, Deserialize)]
struct InstanceWire {
    #[serde(default = "default_schema")]
    schema: u32,
    elements: Vec<ElementWire>,
}

pub fn instance_to_json(inst: &Instance) -> String {
    let wire = InstanceWire {
        schema: SCHEMA_VERSION,
        elements: inst
            .elements()
            .iter()
            .map(|e| ElementWire {
                id: e.id.clone(),
                mass: e.mass,
                mu: e.mu,
                f: e.f,
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("instance serialization cannot fail")
}

pub fn instance_from_json(s: &str) -> Result<Instance> {
    let wire: InstanceWire =
        serde_json::from_str(s).map_err(|e| Error::InvalidInstance(e.to_string()))?;
    check_schema(wire.schema)?;
    let elements = wire
        .elements
        .into_iter()
        .map(|e| Element::new(e.id, e.mass, e.mu, e.f))
        .collect();
    Instance::new_renormalized(elements, 1e-6)
}

#[derive(Serialize, Deserialize)]
struct PartitionWire {
    #[serde(default = "default_schema")]
    schema: u32,
    assignment: BTreeMap<String, u32>,
}

pub fn partition_to_json(inst: &Instance, p: &Partition) -> Result<String> {
    let wire = partition_wire(inst, p)?;
    Ok(serde_json::to_string(&wire).expect("partition serialization cannot fail"))
}

fn partition_wire(inst: &Instance, p: &Partition) -> Result<PartitionWire> {
    if p.len() != inst.len() {
        return Err(Error::PartitionMismatch(format!(
            "partition covers {} elements, instance has {}",
            p.len(),
            inst.len()
        )));
    }
    Ok(PartitionWire {
        schema: SCHEMA_VERSION,
        assignment: inst
            .elements()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), p.part_of(i) as u32))
            .collect(),
    })
}

pub fn partition_from_json(inst: &Instance, s: &str) -> Result<Partition> {
    let wire: PartitionWire =
        serde_json::from_str(s).map_err(|e| Error::PartitionMismatch(e.to_string()))?;
    check_schema(wire.schema)?;
    if wire.assignment.len() != inst.len() {
        return Err(Error::PartitionMismatch(format!(
            "assignment covers {} ids, instance has {} elements",
            wire.assignment.len(),
            inst.len()
        )));
    }
    let mut raw = vec![0u32; inst.len()];
    for (id, part) in &wire.assignment {
        let i = inst
            .position(id)
            .ok_or_else(|| Error::UnknownElement(id.clone()))?;
        raw[i] = *part;
    }
    Ok(Partition::from_assignment(&raw))
}

#[derive(Serialize, Deserialize)]
struct PredictorWire {
    #[serde(default = "default_schema")]
    schema: u32,
    values: BTreeMap<String, f64>,
}

pub fn predictor_to_json(inst: &Instance, g: &Predictor) -> Result<String> {
    if g.values.len() != inst.len() {
        return Err(Error::DomainMismatch(format!(
            "predictor has {} values, instance has {}",
            g.values.len(),
            inst.len()
        )));
    }
    let wire = PredictorWire {
        schema: SCHEMA_VERSION,
        values: inst
            .elements()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), g.values[i]))
            .collect(),
    };
    Ok(serde_json::to_string(&wire).expect("predictor serialization cannot fail"))
}

pub fn predictor_from_json(inst: &Instance, s: &str) -> Result<Predictor> {
    let wire: PredictorWire =
        serde_json::from_str(s).map_err(|e| Error::DomainMismatch(e.to_string()))?;
    check_schema(wire.schema)?;
    if wire.values.len() != inst.len() {
        return Err(Error::DomainMismatch(format!(
            "predictor covers {} ids, instance has {} elements",
            wire.values.len(),
            inst.len()
        )));
    }
    let mut values = vec![0.0; inst.len()];
    for (id, v) in &wire.values {
        let i = inst
            .position(id)
            .ok_or_else(|| Error::UnknownElement(id.clone()))?;
        values[i] = *v;
    }
    Ok(Predictor::new(values))
}

#[derive(Serialize, Deserialize)]
struct SolverResultWire {
    #[serde(default = "default_schema")]
    schema: u32,
    solver: Solver,
    value: f64,
    error_budget: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    witness: Option<BTreeMap<String, u32>>,
    /// Omitted by default so that identical inputs produce byte-identical
    /// output; enable explicitly when timings are wanted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<f64>,
}

pub fn solver_result_to_json(
    inst: &Instance,
    res: &SolverResult,
    include_timing: bool,
) -> Result<String> {
    let witness = match &res.witness {
        Some(p) => Some(partition_wire(inst, p)?.assignment),
        None => None,
    };
    let wire = SolverResultWire {
        schema: SCHEMA_VERSION,
        solver: res.solver,
        value: res.value,
        error_budget: res.additive_error_budget,
        params: res.params.clone(),
        witness,
        wall_time_ms: include_timing.then(|| res.wall_time.as_secs_f64() * 1e3),
    };
    Ok(serde_json::to_string(&wire).expect("result serialization cannot fail"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_round_trip() {
        let json = r#"{"elements":[
            {"id":"x0","mass":0.25,"mu":0.0,"f":0.49},
            {"id":"x1","mass":0.25,"mu":1.0,"f":0.49},
            {"id":"x2","mass":0.25,"mu":0.0,"f":0.51},
            {"id":"x3","mass":0.25,"mu":1.0,"f":0.51}]}"#;
        let inst = instance_from_json(json).unwrap();
        assert_eq!(inst.len(), 4);
        let re = instance_from_json(&instance_to_json(&inst)).unwrap();
        assert_eq!(inst.elements(), re.elements());
    }

    #[test]
    fn instance_rejects_bad_mass_sum() {
        let json = r#"{"elements":[{"id":"a","mass":0.9,"mu":0.0,"f":0.0}]}"#;
        assert!(instance_from_json(json).is_err());
    }

    #[test]
    fn partition_round_trip() {
        let inst = instance_from_json(
            r#"{"elements":[
                {"id":"a","mass":0.5,"mu":0.0,"f":0.1},
                {"id":"b","mass":0.5,"mu":1.0,"f":0.9}]}"#,
        )
        .unwrap();
        let p = Partition::from_assignment(&[0, 1]);
        let s = partition_to_json(&inst, &p).unwrap();
        assert_eq!(partition_from_json(&inst, &s).unwrap(), p);
        // Unknown id is rejected.
        assert!(partition_from_json(&inst, r#"{"assignment":{"a":0,"zz":1}}"#).is_err());
    }

    #[test]
    fn serialization_is_value_exact() {
        let third = 1.0f64 / 3.0;
        let json = format!(
            r#"{{"elements":[{{"id":"a","mass":1.0,"mu":{third:?},"f":0.5}}]}}"#
        );
        let inst = instance_from_json(&json).unwrap();
        assert_eq!(inst.mu(0).to_bits(), third.to_bits());
        let re = instance_from_json(&instance_to_json(&inst)).unwrap();
        assert_eq!(re.mu(0).to_bits(), third.to_bits());
    }
}
