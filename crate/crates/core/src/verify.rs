//! Ground-truth verification: a brute-force inference oracle, a full
//! deniability checker, simulated adversaries, and dependency-connectivity
//! scoring.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraints::{DependencySet, Operand};
use crate::detect::{
    instantiate, DetectOptions, GroundOperand, GroundPredicate, InstantiatedDependency,
};
use crate::error::{Error, Result};
use crate::model::{base_view, CellRef, QuerierView, RelationInstance, Value};

pub const DEFAULT_ORACLE_BUDGET: u64 = 10_000_000;

/// Per-cell comparison of inferred sets under a view and under the base view.
#[derive(Debug, Clone, Serialize)]
pub struct CellOracle {
    pub cell: (usize, usize),
    pub under_view: Vec<String>,
    pub under_base: Vec<String>,
    pub equal: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub cells: Vec<CellOracle>,
    pub pass: bool,
}

/// Values an adversary cannot rule out for `cell` under `view`: for each
/// instantiation containing the cell, a candidate survives when some
/// assignment of the remaining hidden cells over their full domains makes
/// the instantiation evaluate True; candidates are intersected across
/// instantiations. `budget` caps evaluated assignments.
pub fn oracle_inferred_set(
    cell: CellRef,
    view: &QuerierView<'_>,
    instantiations: &[InstantiatedDependency],
    instance: &RelationInstance,
    budget: &mut u64,
) -> Result<BTreeSet<Value>> {
    let grid = instance.schema.attributes[cell.attr].enumeration_values();
    let mut inferred: BTreeSet<Value> = grid.iter().cloned().collect();
    for inst in instantiations {
        if !inst.cells().contains(&cell) {
            continue;
        }
        let free: Vec<CellRef> = inst
            .cells()
            .into_iter()
            .filter(|&c| c != cell && view.is_hidden(c))
            .collect();
        let free_grids: Vec<Vec<Value>> = free
            .iter()
            .map(|c| instance.schema.attributes[c.attr].enumeration_values())
            .collect();
        let mut survive: BTreeSet<Value> = BTreeSet::new();
        for x in &grid {
            if !inferred.contains(x) {
                continue; // already excluded by another instantiation
            }
            let mut assignment: BTreeMap<CellRef, Value> = BTreeMap::new();
            assignment.insert(cell, x.clone());
            if exists_true_assignment(inst, view, &free, &free_grids, 0, &mut assignment, budget)? {
                survive.insert(x.clone());
            }
        }
        inferred = inferred.intersection(&survive).cloned().collect();
    }
    Ok(inferred)
}

fn exists_true_assignment(
    inst: &InstantiatedDependency,
    view: &QuerierView<'_>,
    free: &[CellRef],
    free_grids: &[Vec<Value>],
    depth: usize,
    assignment: &mut BTreeMap<CellRef, Value>,
    budget: &mut u64,
) -> Result<bool> {
    if depth == free.len() {
        if *budget == 0 {
            return Err(Error::DomainTooLarge(DEFAULT_ORACLE_BUDGET));
        }
        *budget -= 1;
        // The instantiation is the negation of its predicate conjunction.
        let conj = inst.predicates.iter().all(|p| pred_holds(p, view, assignment));
        return Ok(!conj);
    }
    for v in &free_grids[depth] {
        assignment.insert(free[depth], v.clone());
        if exists_true_assignment(inst, view, free, free_grids, depth + 1, assignment, budget)? {
            assignment.remove(&free[depth]);
            return Ok(true);
        }
    }
    assignment.remove(&free[depth]);
    Ok(false)
}

fn pred_holds(
    p: &GroundPredicate,
    view: &QuerierView<'_>,
    assignment: &BTreeMap<CellRef, Value>,
) -> bool {
    let resolve = |o: &GroundOperand| -> Value {
        match o {
            GroundOperand::Const(v) => v.clone(),
            GroundOperand::Cell(c) => assignment
                .get(c)
                .cloned()
                .or_else(|| view.observable(*c).cloned())
                .expect("cell is assigned or visible"),
        }
    };
    resolve(&p.lhs)
        .compare(&resolve(&p.rhs))
        .map(|ord| p.op.apply(ord))
        .unwrap_or(false)
}

/// All instantiations of any dependency that involve `cell`.
fn instantiations_for(
    cell: CellRef,
    deps: &DependencySet,
    instance: &RelationInstance,
) -> Vec<InstantiatedDependency> {
    instantiate(deps, cell, instance, &DetectOptions::default())
}

/// Full deniability check: for each sensitive cell, the oracle inferred set
/// under `view` must equal the set under the all-NULL base view.
pub fn check_full_deniability(
    instance: &RelationInstance,
    deps: &DependencySet,
    sensitive: &BTreeSet<CellRef>,
    view: &QuerierView<'_>,
    budget: u64,
) -> Result<OracleResult> {
    let base = base_view(instance);
    let initial_budget = budget;
    let report_budget = |e| match e {
        Error::DomainTooLarge(_) => Error::DomainTooLarge(initial_budget),
        other => other,
    };
    let mut budget = budget;
    let mut cells = Vec::new();
    let mut pass = true;
    for &cell in sensitive {
        let insts = instantiations_for(cell, deps, instance);
        let under_view =
            oracle_inferred_set(cell, view, &insts, instance, &mut budget).map_err(report_budget)?;
        let under_base =
            oracle_inferred_set(cell, &base, &insts, instance, &mut budget).map_err(report_budget)?;
        let equal = under_view == under_base;
        pass &= equal;
        cells.push(CellOracle {
            cell: (cell.tuple, cell.attr),
            under_view: under_view.iter().map(|v| v.to_string()).collect(),
            under_base: under_base.iter().map(|v| v.to_string()).collect(),
            equal,
        });
    }
    Ok(OracleResult { cells, pass })
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackOutcome {
    pub guesses: Vec<((usize, usize), String)>,
    pub correct: usize,
    pub total: usize,
    pub precision: f64,
}

fn outcome(guesses: Vec<(CellRef, Value)>, instance: &RelationInstance) -> AttackOutcome {
    let correct = guesses
        .iter()
        .filter(|(c, v)| v.equals(instance.value(*c)))
        .count();
    let total = guesses.len();
    AttackOutcome {
        guesses: guesses
            .into_iter()
            .map(|(c, v)| ((c.tuple, c.attr), v.to_string()))
            .collect(),
        correct,
        total,
        precision: if total > 0 {
            correct as f64 / total as f64
        } else {
            0.0
        },
    }
}

/// Attacker that guesses each hidden cell by sampling the empirical
/// distribution of its attribute's visible column (uniform over the domain
/// grid when the column is fully hidden).
pub fn attack_weighted_sampling(view: &QuerierView<'_>, seed: u64) -> AttackOutcome {
    let instance = view.instance;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut guesses = Vec::new();
    for &cell in &view.hidden {
        let visible: Vec<&Value> = (0..instance.tuple_count())
            .filter_map(|t| view.observable(CellRef::new(t, cell.attr)))
            .collect();
        let guess = if visible.is_empty() {
            let grid = instance.schema.attributes[cell.attr].enumeration_values();
            grid[rng.gen_range(0..grid.len())].clone()
        } else {
            visible[rng.gen_range(0..visible.len())].clone()
        };
        guesses.push((cell, guess));
    }
    outcome(guesses, instance)
}

/// Attacker that propagates dependencies to a fixpoint and guesses only the
/// cells whose inferred set collapses to a single value; such guesses are
/// correct by construction.
pub fn attack_constraint_propagation(
    view: &QuerierView<'_>,
    deps: &DependencySet,
    budget: u64,
) -> Result<AttackOutcome> {
    let instance = view.instance;
    let mut working = view.clone();
    let initial_budget = budget;
    let mut budget = budget;
    let mut guesses = Vec::new();
    for _round in 0..view.hidden.len() {
        let mut forced: Vec<(CellRef, Value)> = Vec::new();
        for &cell in &working.hidden {
            let insts = instantiations_for(cell, deps, instance);
            let inferred = oracle_inferred_set(cell, &working, &insts, instance, &mut budget)
                .map_err(|e| match e {
                    Error::DomainTooLarge(_) => Error::DomainTooLarge(initial_budget),
                    other => other,
                })?;
            if inferred.len() == 1 {
                forced.push((cell, inferred.into_iter().next().unwrap()));
            }
        }
        if forced.is_empty() {
            break;
        }
        // Reveal the forced cells (the singleton is necessarily the true
        // value) and propagate again.
        for (c, _) in &forced {
            working.hidden.remove(c);
        }
        guesses.extend(forced);
    }
    Ok(outcome(guesses, instance))
}

/// Connectivity scores over the attribute hypergraph (one hyperedge per
/// constraint): score(a) = degree(a) + Σ degree(b) over the attributes
/// reachable from a via shared constraints, excluding a itself.
#[derive(Debug, Clone, Serialize)]
pub struct ConnectivityReport {
    /// (attribute, score), sorted by descending score then name.
    pub scores: Vec<(String, usize)>,
    pub low: Vec<String>,
    pub medium: Vec<String>,
    pub high: Vec<String>,
}

pub fn dependency_connectivity(
    instance_attrs: &[String],
    deps: &DependencySet,
) -> ConnectivityReport {
    let n = instance_attrs.len();
    let mut edges: Vec<BTreeSet<usize>> = Vec::new();
    for dc in &deps.dcs {
        let mut edge = BTreeSet::new();
        for p in &dc.predicates {
            for o in [&p.lhs, &p.rhs] {
                if let Operand::TupleAttr { attr, .. } = o {
                    edge.insert(*attr);
                }
            }
        }
        edges.push(edge);
    }
    for fc in &deps.fcs {
        let mut edge: BTreeSet<usize> = fc.input_attrs.iter().copied().collect();
        edge.insert(fc.output_attr);
        edges.push(edge);
    }
    let degree: Vec<usize> = (0..n)
        .map(|a| edges.iter().filter(|e| e.contains(&a)).count())
        .collect();
    let mut scores: Vec<(String, usize)> = (0..n)
        .map(|a| {
            // Transitive closure over shared-constraint adjacency.
            let mut seen = BTreeSet::from([a]);
            let mut frontier = vec![a];
            while let Some(x) = frontier.pop() {
                for e in edges.iter().filter(|e| e.contains(&x)) {
                    for &y in e {
                        if seen.insert(y) {
                            frontier.push(y);
                        }
                    }
                }
            }
            let closure_sum: usize = seen.iter().filter(|&&b| b != a).map(|&b| degree[b]).sum();
            let score = if degree[a] == 0 { 0 } else { degree[a] + closure_sum };
            (instance_attrs[a].clone(), score)
        })
        .collect();
    scores.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    // Tertile grouping over the sorted order.
    let third = (n + 2) / 3;
    let high = scores.iter().take(third).map(|(n, _)| n.clone()).collect();
    let medium = scores
        .iter()
        .skip(third)
        .take(third)
        .map(|(n, _)| n.clone())
        .collect();
    let low = scores.iter().skip(2 * third).map(|(n, _)| n.clone()).collect();
    ConnectivityReport {
        scores,
        low,
        medium,
        high,
    }
}
