//! Seeded synthetic-data generation honoring a dependency set as hard
//! constraints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{
    fc_value, validate_instance, DenialConstraint, DependencySet, Operand, Predicate, TupleSlot,
};
use crate::error::{Error, Result};
use crate::model::{AttrKind, CmpOp, RelationInstance, Schema, Value};

/// A binary DC of the shape ¬(t1.x₁=t2.x₁ ∧ … ∧ t1.y≠t2.y): a functional
/// dependency x₁…xₙ → y the generator can repair rows against.
fn fd_shape(dc: &DenialConstraint) -> Option<(Vec<usize>, usize)> {
    if dc.arity != 2 {
        return None;
    }
    let mut lhs = Vec::new();
    let mut rhs = None;
    for p in &dc.predicates {
        match p {
            Predicate {
                lhs: Operand::TupleAttr { slot: TupleSlot::T1, attr: a },
                op,
                rhs: Operand::TupleAttr { slot: TupleSlot::T2, attr: b },
            } if a == b => match op {
                CmpOp::Eq => lhs.push(*a),
                CmpOp::Ne if rhs.is_none() => rhs = Some(*a),
                _ => return None,
            },
            _ => return None,
        }
    }
    rhs.filter(|_| !lhs.is_empty()).map(|r| (lhs, r))
}

fn sample_value(kind: &AttrKind, rng: &mut ChaCha8Rng) -> Value {
    match kind {
        AttrKind::Discrete(vals) => vals[rng.gen_range(0..vals.len())].clone(),
        AttrKind::Continuous { min, max, .. } => {
            // Two decimals keep emitted CSVs short and comparisons stable.
            let raw: f64 = rng.gen_range(*min..=*max);
            Value::Num((raw * 100.0).round() / 100.0)
        }
    }
}

/// Generate `n` rows satisfying every constraint in `deps`. Functional-
/// dependency-shaped DCs are repaired by copying the determined attribute
/// from a matching earlier row; FC outputs are computed from their inputs;
/// anything else is retried within `attempt_budget` total samples.
pub fn generate_instance(
    schema: &Schema,
    deps: &DependencySet,
    n: usize,
    seed: u64,
    attempt_budget: usize,
) -> Result<RelationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fds: Vec<(Vec<usize>, usize)> = deps.dcs.iter().filter_map(fd_shape).collect();
    let mut rows: Vec<Vec<Value>> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while rows.len() < n {
        attempts += 1;
        if attempts > attempt_budget {
            return Err(Error::GenerationTimeout(attempt_budget));
        }
        let mut row: Vec<Value> = schema
            .attributes
            .iter()
            .map(|a| sample_value(&a.kind, &mut rng))
            .collect();
        // Repair FDs against earlier rows, then recompute FC outputs so the
        // row is internally consistent again.
        for (lhs, rhs) in &fds {
            if let Some(prev) = rows
                .iter()
                .find(|r| lhs.iter().all(|&a| r[a].equals(&row[a])))
            {
                row[*rhs] = prev[*rhs].clone();
            }
        }
        let mut ok = true;
        for fc in &deps.fcs {
            match fc_value(fc, &row, schema.fc_combine) {
                Some(v) if schema.attributes[fc.output_attr].contains(&Value::Num(v)) => {
                    row[fc.output_attr] = Value::Num(v);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        rows.push(row);
        // Rejection fallback for constraints the repair step cannot express.
        let candidate = RelationInstance::new(schema.clone(), rows.clone())?;
        if !validate_instance(&candidate, deps).is_empty() {
            rows.pop();
        }
    }
    RelationInstance::new(schema.clone(), rows)
}
