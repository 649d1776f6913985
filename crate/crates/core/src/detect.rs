//! Inference detection: grounding dependencies to cells, three-valued
//! predicate evaluation, the tell-tale condition, and cueset generation.

use std::collections::BTreeSet;

use crate::constraints::{
    DenialConstraint, DependencySet, FunctionConstraint, Operand, Predicate, TupleSlot,
};
use crate::error::{Error, Result};
use crate::model::{CellRef, CmpOp, QuerierView, RelationInstance, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreeValued {
    True,
    False,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroundOperand {
    Cell(CellRef),
    Const(Value),
}

impl GroundOperand {
    pub fn cell(&self) -> Option<CellRef> {
        match self {
            GroundOperand::Cell(c) => Some(*c),
            GroundOperand::Const(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundPredicate {
    pub lhs: GroundOperand,
    pub op: CmpOp,
    pub rhs: GroundOperand,
}

impl GroundPredicate {
    pub fn cells(&self) -> impl Iterator<Item = CellRef> + '_ {
        [&self.lhs, &self.rhs].into_iter().filter_map(|o| o.cell())
    }

    pub fn involves(&self, cell: CellRef) -> bool {
        self.cells().any(|c| c == cell)
    }
}

/// Function-constraint metadata carried on an instantiation.
#[derive(Debug, Clone, PartialEq)]
pub struct FcInfo {
    pub invertible: bool,
    pub output: CellRef,
    pub inputs: Vec<CellRef>,
}

/// A schema-level constraint grounded to the cells of specific tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantiatedDependency {
    pub id: String,
    pub origin: String,
    pub predicates: Vec<GroundPredicate>,
    pub fc: Option<FcInfo>,
}

impl InstantiatedDependency {
    pub fn cells(&self) -> BTreeSet<CellRef> {
        self.predicates.iter().flat_map(|p| p.cells()).collect()
    }
}

/// Candidate cells whose hiding falsifies one tell-tale condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cueset {
    pub owner: CellRef,
    pub members: BTreeSet<CellRef>,
    pub origin: String,
}

/// Unavoidable disclosure the engine cannot protect against; diagnostic only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualWarning {
    pub cell: CellRef,
    pub origin: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct DetectOptions {
    /// Restrict instantiation partners to these tuples (bin-local detection).
    pub tuple_scope: Option<BTreeSet<usize>>,
}

impl DetectOptions {
    fn in_scope(&self, tuple: usize) -> bool {
        self.tuple_scope.as_ref().map_or(true, |s| s.contains(&tuple))
    }
}

#[derive(Debug, Clone, Default)]
pub struct DetectOutcome {
    pub cuesets: Vec<Cueset>,
    pub warnings: Vec<ResidualWarning>,
}

// ---------------------------------------------------------------------------
// Evaluation

/// Three-valued evaluation: Unknown iff an operand cell is hidden.
pub fn eval_predicate(pred: &GroundPredicate, view: &QuerierView<'_>) -> ThreeValued {
    let lhs = match ground_value(&pred.lhs, view) {
        Some(v) => v,
        None => return ThreeValued::Unknown,
    };
    let rhs = match ground_value(&pred.rhs, view) {
        Some(v) => v,
        None => return ThreeValued::Unknown,
    };
    let holds = lhs
        .compare(rhs)
        .map(|ord| pred.op.apply(ord))
        .unwrap_or(false);
    if holds {
        ThreeValued::True
    } else {
        ThreeValued::False
    }
}

fn ground_value<'a>(o: &'a GroundOperand, view: &'a QuerierView<'_>) -> Option<&'a Value> {
    match o {
        GroundOperand::Cell(c) => view.observable(*c),
        GroundOperand::Const(v) => Some(v),
    }
}

/// The tell-tale condition: True iff every predicate NOT involving `cell`
/// evaluates True under `view`. Panics-free: an empty complement is vacuously
/// True; `detect` routes those through the single-predicate rule instead.
pub fn ttc(inst: &InstantiatedDependency, view: &QuerierView<'_>, cell: CellRef) -> bool {
    inst.predicates
        .iter()
        .filter(|p| !p.involves(cell))
        .all(|p| eval_predicate(p, view) == ThreeValued::True)
}

// ---------------------------------------------------------------------------
// Instantiation

fn ground_operand(op: &Operand, t1: usize, t2: usize) -> GroundOperand {
    match op {
        Operand::TupleAttr { slot: TupleSlot::T1, attr } => GroundOperand::Cell(CellRef::new(t1, *attr)),
        Operand::TupleAttr { slot: TupleSlot::T2, attr } => GroundOperand::Cell(CellRef::new(t2, *attr)),
        Operand::Const(v) => GroundOperand::Const(v.clone()),
    }
}

fn ground_dc(dc: &DenialConstraint, t1: usize, t2: usize) -> InstantiatedDependency {
    let predicates = dc
        .predicates
        .iter()
        .map(|p: &Predicate| GroundPredicate {
            lhs: ground_operand(&p.lhs, t1, t2),
            op: p.op,
            rhs: ground_operand(&p.rhs, t1, t2),
        })
        .collect();
    let id = if dc.arity == 1 {
        format!("{}@t{}", dc.id, t1)
    } else {
        format!("{}@t{},t{}", dc.id, t1, t2)
    };
    InstantiatedDependency {
        id,
        origin: dc.id.clone(),
        predicates,
        fc: None,
    }
}

fn dc_mentions_attr(dc: &DenialConstraint, attr: usize) -> bool {
    dc.predicates.iter().any(|p| {
        [&p.lhs, &p.rhs].into_iter().any(
            |o| matches!(o, Operand::TupleAttr { attr: a, .. } if *a == attr),
        )
    })
}

/// All instantiations of one DC that involve `target`. Binary DCs pair the
/// target tuple with every other in-scope tuple; both slot orders when any
/// predicate op is asymmetric, one canonical order otherwise.
pub fn instantiate_dc(
    dc: &DenialConstraint,
    target: CellRef,
    instance: &RelationInstance,
    options: &DetectOptions,
) -> Vec<InstantiatedDependency> {
    if !dc_mentions_attr(dc, target.attr) {
        return Vec::new();
    }
    let t = target.tuple;
    if dc.arity == 1 {
        let inst = ground_dc(dc, t, t);
        return if inst.cells().contains(&target) {
            vec![inst]
        } else {
            Vec::new()
        };
    }
    let both_orders = !dc.all_symmetric();
    let mut out = Vec::new();
    for other in 0..instance.tuple_count() {
        if other == t || !options.in_scope(other) {
            continue;
        }
        for (t1, t2) in [(t, other), (other, t)] {
            if !both_orders && (t1, t2) != (t, other) {
                continue;
            }
            let inst = ground_dc(dc, t1, t2);
            if inst.cells().contains(&target) {
                out.push(inst);
            }
        }
    }
    out
}

/// Ground an FC on one tuple into its DC form
/// ¬(in₁ = v₁ ∧ … ∧ inₙ = vₙ ∧ out ≠ v_out).
pub fn fc_instantiate(
    fc: &FunctionConstraint,
    tuple: usize,
    instance: &RelationInstance,
) -> InstantiatedDependency {
    let mut predicates: Vec<GroundPredicate> = fc
        .input_attrs
        .iter()
        .map(|&a| {
            let c = CellRef::new(tuple, a);
            GroundPredicate {
                lhs: GroundOperand::Cell(c),
                op: CmpOp::Eq,
                rhs: GroundOperand::Const(instance.value(c).clone()),
            }
        })
        .collect();
    let out_cell = CellRef::new(tuple, fc.output_attr);
    predicates.push(GroundPredicate {
        lhs: GroundOperand::Cell(out_cell),
        op: CmpOp::Ne,
        rhs: GroundOperand::Const(instance.value(out_cell).clone()),
    });
    InstantiatedDependency {
        id: format!("{}@t{tuple}", fc.id),
        origin: fc.id.clone(),
        predicates,
        fc: Some(FcInfo {
            invertible: fc.invertible,
            output: out_cell,
            inputs: fc.input_attrs.iter().map(|&a| CellRef::new(tuple, a)).collect(),
        }),
    }
}

/// All instantiations of any dependency that involve `target`.
pub fn instantiate(
    deps: &DependencySet,
    target: CellRef,
    instance: &RelationInstance,
    options: &DetectOptions,
) -> Vec<InstantiatedDependency> {
    let mut out = Vec::new();
    for dc in &deps.dcs {
        out.extend(instantiate_dc(dc, target, instance, options));
    }
    for fc in &deps.fcs {
        if fc.output_attr == target.attr || fc.input_attrs.contains(&target.attr) {
            out.push(fc_instantiate(fc, target.tuple, instance));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Cueset generation

/// Build the cueset for one instantiation and target, applying the FC rules,
/// the single-predicate rule, and the tell-tale gate. `gate` disables the
/// gate for the oblivious baseline.
fn cueset_for(
    inst: &InstantiatedDependency,
    target: CellRef,
    view: &QuerierView<'_>,
    gate: bool,
    out: &mut DetectOutcome,
) {
    if let Some(fc) = &inst.fc {
        // FC leakage channels depend only on invertibility, not on the view.
        if target == fc.output {
            out.cuesets.push(Cueset {
                owner: target,
                members: fc.inputs.iter().copied().collect(),
                origin: inst.id.clone(),
            });
        } else if fc.invertible {
            out.cuesets.push(Cueset {
                owner: target,
                members: BTreeSet::from([fc.output]),
                origin: inst.id.clone(),
            });
        }
        return;
    }
    let (owner_preds, complement): (Vec<_>, Vec<_>) =
        inst.predicates.iter().partition(|p| p.involves(target));
    if complement.is_empty() {
        // Every predicate involves the target: hiding a companion cell of an
        // owner predicate falsifies that predicate's evaluation. With only
        // constants left, the disclosure is unavoidable.
        let members: BTreeSet<CellRef> = owner_preds
            .iter()
            .flat_map(|p| p.cells())
            .filter(|&c| c != target)
            .collect();
        if members.is_empty() {
            out.warnings.push(ResidualWarning {
                cell: target,
                origin: inst.id.clone(),
                detail: "constant-only predicate on a hidden cell; leakage cannot be prevented"
                    .into(),
            });
        } else {
            out.cuesets.push(Cueset {
                owner: target,
                members,
                origin: inst.id.clone(),
            });
        }
        return;
    }
    if gate && !ttc(inst, view, target) {
        return;
    }
    let members: BTreeSet<CellRef> = complement
        .iter()
        .flat_map(|p| p.cells())
        .filter(|&c| c != target)
        .collect();
    out.cuesets.push(Cueset {
        owner: target,
        members,
        origin: inst.id.clone(),
    });
}

fn operand_cell(o: &Operand, t1: usize, t2: usize) -> Option<CellRef> {
    match o {
        Operand::TupleAttr { slot: TupleSlot::T1, attr } => Some(CellRef::new(t1, *attr)),
        Operand::TupleAttr { slot: TupleSlot::T2, attr } => Some(CellRef::new(t2, *attr)),
        Operand::Const(_) => None,
    }
}

fn operand_value<'a>(
    o: &'a Operand,
    t1: usize,
    t2: usize,
    view: &'a QuerierView<'_>,
) -> Option<&'a Value> {
    match o {
        Operand::Const(v) => Some(v),
        other => operand_cell(other, t1, t2).and_then(|c| view.observable(c)),
    }
}

/// Evaluate a schema-level predicate grounded at `(t1, t2)` without
/// materializing the instantiation.
fn eval_schema_pred(p: &Predicate, t1: usize, t2: usize, view: &QuerierView<'_>) -> ThreeValued {
    let (Some(lhs), Some(rhs)) = (
        operand_value(&p.lhs, t1, t2, view),
        operand_value(&p.rhs, t1, t2, view),
    ) else {
        return ThreeValued::Unknown;
    };
    let holds = lhs
        .compare(rhs)
        .map(|ord| p.op.apply(ord))
        .unwrap_or(false);
    if holds {
        ThreeValued::True
    } else {
        ThreeValued::False
    }
}

/// Gated detection for one DC and target that applies the tell-tale gate
/// before materializing the instantiation, so the (common) gate-rejected
/// partner pairs cost no allocation. Produces exactly the cuesets that
/// materializing every instantiation and gating afterwards would.
fn detect_dc_gated(
    dc: &DenialConstraint,
    target: CellRef,
    view: &QuerierView<'_>,
    options: &DetectOptions,
    out: &mut DetectOutcome,
) {
    if !dc_mentions_attr(dc, target.attr) {
        return;
    }
    if dc.arity == 1 {
        for inst in instantiate_dc(dc, target, view.instance, options) {
            cueset_for(&inst, target, view, true, out);
        }
        return;
    }
    let t = target.tuple;
    let both_orders = !dc.all_symmetric();
    for other in 0..view.instance.tuple_count() {
        if other == t || !options.in_scope(other) {
            continue;
        }
        for (t1, t2) in [(t, other), (other, t)] {
            if !both_orders && (t1, t2) != (t, other) {
                continue;
            }
            let involves = |p: &Predicate| {
                operand_cell(&p.lhs, t1, t2) == Some(target)
                    || operand_cell(&p.rhs, t1, t2) == Some(target)
            };
            // First pass, allocation-free: membership and the tell-tale gate.
            let mut involves_target = false;
            let mut complement_empty = true;
            let mut complement_true = true;
            for p in &dc.predicates {
                if involves(p) {
                    involves_target = true;
                    continue;
                }
                complement_empty = false;
                if complement_true && eval_schema_pred(p, t1, t2, view) != ThreeValued::True {
                    complement_true = false;
                }
            }
            if !involves_target || (!complement_empty && !complement_true) {
                continue;
            }
            // Second pass, survivors only: materialize the cueset. Members
            // come from the complement, or from the owner predicates'
            // companion cells when every predicate involves the target.
            let members: BTreeSet<CellRef> = dc
                .predicates
                .iter()
                .filter(|p| complement_empty || !involves(p))
                .flat_map(|p| {
                    [operand_cell(&p.lhs, t1, t2), operand_cell(&p.rhs, t1, t2)]
                })
                .flatten()
                .filter(|&c| c != target)
                .collect();
            let origin = format!("{}@t{t1},t{t2}", dc.id);
            if members.is_empty() {
                out.warnings.push(ResidualWarning {
                    cell: target,
                    origin,
                    detail:
                        "constant-only predicate on a hidden cell; leakage cannot be prevented"
                            .into(),
                });
            } else {
                out.cuesets.push(Cueset {
                    owner: target,
                    members,
                    origin,
                });
            }
        }
    }
}

/// Inference detection: cuesets of every tell-tale-gated leakage channel
/// from each target cell. Targets must already be hidden in the view.
pub fn detect(
    targets: &BTreeSet<CellRef>,
    deps: &DependencySet,
    view: &QuerierView<'_>,
    options: &DetectOptions,
) -> DetectOutcome {
    let mut out = DetectOutcome::default();
    for &target in targets {
        for dc in &deps.dcs {
            detect_dc_gated(dc, target, view, options, &mut out);
        }
        for fc in &deps.fcs {
            if fc.output_attr == target.attr || fc.input_attrs.contains(&target.attr) {
                let inst = fc_instantiate(fc, target.tuple, view.instance);
                cueset_for(&inst, target, view, true, &mut out);
            }
        }
    }
    out
}

/// Query-based detection: one scan per constraint joining target tuples
/// (hidden cells nulled) against all tuples, keeping pairs where every
/// non-owner predicate holds. Produces the same multiset of cuesets as
/// [`detect`], ordered by constraint rather than by target.
pub fn detect_query_based(
    targets: &BTreeSet<CellRef>,
    deps: &DependencySet,
    instance: &RelationInstance,
    view: &QuerierView<'_>,
) -> DetectOutcome {
    let options = DetectOptions::default();
    let mut out = DetectOutcome::default();
    for dc in &deps.dcs {
        for &target in targets {
            if !dc_mentions_attr(dc, target.attr) {
                continue;
            }
            if dc.arity == 1 {
                for inst in instantiate_dc(dc, target, instance, &options) {
                    cueset_for(&inst, target, view, true, &mut out);
                }
                continue;
            }
            // Join-style scan: target tuple against every partner tuple,
            // keep the pair when each predicate is owner-null or True.
            let both_orders = !dc.all_symmetric();
            for partner in 0..instance.tuple_count() {
                if partner == target.tuple {
                    continue;
                }
                for (t1, t2) in [(target.tuple, partner), (partner, target.tuple)] {
                    if !both_orders && (t1, t2) != (target.tuple, partner) {
                        continue;
                    }
                    let inst = ground_dc(dc, t1, t2);
                    if !inst.cells().contains(&target) {
                        continue;
                    }
                    let keep = inst.predicates.iter().all(|p| {
                        p.involves(target) || eval_predicate(p, view) == ThreeValued::True
                    });
                    let single = inst.predicates.iter().all(|p| p.involves(target));
                    if keep || single {
                        cueset_for(&inst, target, view, true, &mut out);
                    }
                }
            }
        }
    }
    for fc in &deps.fcs {
        for &target in targets {
            if fc.output_attr == target.attr || fc.input_attrs.contains(&target.attr) {
                let inst = fc_instantiate(fc, target.tuple, instance);
                cueset_for(&inst, target, view, true, &mut out);
            }
        }
    }
    out
}

/// Baseline detection that never evaluates the tell-tale condition: every
/// instantiation of every relevant dependency yields a cueset.
pub fn detect_oblivious(
    targets: &BTreeSet<CellRef>,
    deps: &DependencySet,
    instance: &RelationInstance,
) -> DetectOutcome {
    let view = QuerierView::full(instance);
    let options = DetectOptions::default();
    let mut out = DetectOutcome::default();
    for &target in targets {
        for inst in instantiate(deps, target, instance, &options) {
            cueset_for(&inst, target, &view, false, &mut out);
        }
    }
    out
}

/// Ownership filter: drop cueset members owned by the querier. Cuesets whose
/// members all belong to the querier are removed with a warning.
pub fn filter_owner(
    cuesets: Vec<Cueset>,
    querier: &str,
    instance: &RelationInstance,
) -> Result<DetectOutcome> {
    if instance.schema.owner_column.is_none() {
        return Err(Error::MissingOwnership);
    }
    let owners: Vec<String> = (0..instance.tuple_count())
        .map(|t| instance.owner_of(t))
        .collect::<Result<_>>()?;
    let mut out = DetectOutcome::default();
    for mut cs in cuesets {
        cs.members.retain(|c| owners[c.tuple] != querier);
        if cs.members.is_empty() {
            out.warnings.push(ResidualWarning {
                cell: cs.owner,
                origin: cs.origin,
                detail: format!(
                    "all candidate cells belong to querier `{querier}`; channel unprotectable"
                ),
            });
        } else {
            out.cuesets.push(cs);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::parse_constraints;
    use crate::model::{load_relation, AttrKind, AttributeDef, Schema};

    fn schema() -> Schema {
        Schema::new(
            "Emp",
            vec![
                AttributeDef {
                    name: "State".into(),
                    kind: AttrKind::Discrete(vec![Value::Text("CA".into()), Value::Text("NY".into())]),
                },
                AttributeDef {
                    name: "Role".into(),
                    kind: AttrKind::Discrete(vec![
                        Value::Text("Faculty".into()),
                        Value::Text("Staff".into()),
                    ]),
                },
                AttributeDef {
                    name: "SalPerHr".into(),
                    kind: AttrKind::Continuous { min: 0.0, max: 1000.0, bins: 16 },
                },
            ],
        )
        .unwrap()
    }

    fn instance() -> RelationInstance {
        load_relation(
            "State,Role,SalPerHr\n\
             CA,Faculty,200\n\
             CA,Faculty,200\n\
             NY,Staff,300\n\
             NY,Staff,300\n",
            &schema(),
        )
        .unwrap()
    }

    #[test]
    fn eval_three_values() {
        let inst = instance();
        let c_a = CellRef::new(0, 2);
        let c_b = CellRef::new(1, 2);
        let eq = GroundPredicate {
            lhs: GroundOperand::Cell(c_a),
            op: CmpOp::Eq,
            rhs: GroundOperand::Cell(c_b),
        };
        let view = QuerierView::full(&inst);
        assert_eq!(eval_predicate(&eq, &view), ThreeValued::True);
        let gt = GroundPredicate {
            lhs: GroundOperand::Cell(c_a),
            op: CmpOp::Gt,
            rhs: GroundOperand::Const(Value::Num(200.0)),
        };
        assert_eq!(eval_predicate(&gt, &view), ThreeValued::False);
        let hidden = QuerierView::full(&inst).hiding([c_a]);
        assert_eq!(eval_predicate(&gt, &hidden), ThreeValued::Unknown);
    }

    #[test]
    fn ttc_gating() {
        let inst = instance();
        let deps = parse_constraints(
            "dc: !(t1.State == t2.State & t1.Role == t2.Role & t1.SalPerHr != t2.SalPerHr)",
            &schema(),
        )
        .unwrap();
        let target = CellRef::new(0, 2);
        let options = DetectOptions::default();
        let grounded = instantiate(&deps, target, &inst, &options);
        let pair01 = grounded
            .iter()
            .find(|g| g.id.contains("t0,t1"))
            .unwrap();
        // Non-owner predicates True with everything else visible.
        let view = QuerierView::full(&inst).hiding([target]);
        assert!(ttc(pair01, &view, target));
        // Hiding a non-owner cell makes the condition fail.
        let view2 = QuerierView::full(&inst).hiding([target, CellRef::new(1, 0)]);
        assert!(!ttc(pair01, &view2, target));
        // Non-owner predicate False in the data: tuple 2 has a different Role.
        let pair02 = grounded
            .iter()
            .find(|g| g.id.contains("t0,t2"))
            .unwrap();
        assert!(!ttc(pair02, &view, target));
    }

    #[test]
    fn symmetric_instantiation_counts() {
        let inst = instance();
        let deps =
            parse_constraints("dc: !(t1.State == t2.State & t1.Role != t2.Role)", &schema()).unwrap();
        let options = DetectOptions::default();
        // 4 tuples, symmetric ops, one canonical order: 3 partners.
        let g = instantiate(&deps, CellRef::new(2, 0), &inst, &options);
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn asymmetric_instantiation_counts() {
        let s = schema();
        let inst = load_relation(
            "State,Role,SalPerHr\nCA,Faculty,100\nNY,Staff,200\nNY,Faculty,300\n",
            &s,
        )
        .unwrap();
        let deps =
            parse_constraints("dc: !(t1.State == t2.State & t1.SalPerHr > t2.SalPerHr)", &s)
                .unwrap();
        let options = DetectOptions::default();
        // 3 tuples, `>` present: 2 partners x 2 orderings.
        let g = instantiate(&deps, CellRef::new(0, 2), &inst, &options);
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn unary_instantiation_count() {
        let inst = instance();
        let deps = parse_constraints("dc: !(t1.SalPerHr > 0.4)", &schema()).unwrap();
        let options = DetectOptions::default();
        let g = instantiate(&deps, CellRef::new(1, 2), &inst, &options);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn detect_emits_non_owner_cells() {
        // Four-predicate DC analog: hide target, expect the cueset to contain
        // exactly the non-owner predicate cells.
        let s = schema();
        let inst = load_relation(
            "State,Role,SalPerHr\nCA,Faculty,200\nCA,Faculty,200\n",
            &s,
        )
        .unwrap();
        let deps = parse_constraints(
            "dc: !(t1.State == t2.State & t1.Role == t2.Role & t1.SalPerHr != t2.SalPerHr)",
            &s,
        )
        .unwrap();
        let target = CellRef::new(0, 2);
        let view = QuerierView::full(&inst).hiding([target]);
        let targets = BTreeSet::from([target]);
        let out = detect(&targets, &deps, &view, &DetectOptions::default());
        assert_eq!(out.cuesets.len(), 1);
        let cs = &out.cuesets[0];
        assert_eq!(
            cs.members,
            BTreeSet::from([
                CellRef::new(0, 0),
                CellRef::new(0, 1),
                CellRef::new(1, 0),
                CellRef::new(1, 1),
            ])
        );
        assert!(!cs.members.contains(&cs.owner));
    }

    #[test]
    fn single_predicate_rule_and_residual() {
        let s = schema();
        let inst = load_relation("State,Role,SalPerHr\nCA,Faculty,200\nCA,Staff,300\n", &s).unwrap();
        // Cell-partner single predicate: cueset is the other cell.
        let deps = parse_constraints("dc: !(t1.SalPerHr > t2.SalPerHr)", &s).unwrap();
        let target = CellRef::new(0, 2);
        let view = QuerierView::full(&inst).hiding([target]);
        let out = detect(&BTreeSet::from([target]), &deps, &view, &DetectOptions::default());
        assert_eq!(out.cuesets.len(), 2); // both orderings against tuple 1
        for cs in &out.cuesets {
            assert_eq!(cs.members, BTreeSet::from([CellRef::new(1, 2)]));
        }
        // Constant-only single predicate: residual warning, no cueset.
        let deps = parse_constraints("dc: !(t1.SalPerHr > 400)", &s).unwrap();
        let out = detect(&BTreeSet::from([target]), &deps, &view, &DetectOptions::default());
        assert!(out.cuesets.is_empty());
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn fc_cueset_rules() {
        let s = Schema::new(
            "W",
            vec![
                AttributeDef {
                    name: "WorkHrs".into(),
                    kind: AttrKind::Continuous { min: 0.0, max: 100.0, bins: 16 },
                },
                AttributeDef {
                    name: "SalPerHr".into(),
                    kind: AttrKind::Continuous { min: 0.0, max: 100.0, bins: 16 },
                },
                AttributeDef {
                    name: "Salary".into(),
                    kind: AttrKind::Continuous { min: 0.0, max: 10000.0, bins: 16 },
                },
            ],
        )
        .unwrap();
        let inst = load_relation("WorkHrs,SalPerHr,Salary\n20,40,800\n", &s).unwrap();
        let mk = |flag: &str| {
            parse_constraints(
                &format!("fc: t1.Salary = fn(t1.WorkHrs, t1.SalPerHr) {flag}"),
                &s,
            )
            .unwrap()
        };
        let options = DetectOptions::default();
        // Output cell: cueset = all inputs.
        let out_cell = CellRef::new(0, 2);
        let view = QuerierView::full(&inst).hiding([out_cell]);
        let out = detect(&BTreeSet::from([out_cell]), &mk("invertible"), &view, &options);
        assert_eq!(out.cuesets.len(), 1);
        assert_eq!(
            out.cuesets[0].members,
            BTreeSet::from([CellRef::new(0, 0), CellRef::new(0, 1)])
        );
        // Invertible input: cueset = {output}.
        let in_cell = CellRef::new(0, 0);
        let view = QuerierView::full(&inst).hiding([in_cell]);
        let out = detect(&BTreeSet::from([in_cell]), &mk("invertible"), &view, &options);
        assert_eq!(out.cuesets.len(), 1);
        assert_eq!(out.cuesets[0].members, BTreeSet::from([out_cell]));
        // Non-invertible input: nothing.
        let out = detect(&BTreeSet::from([in_cell]), &mk("noninvertible"), &view, &options);
        assert!(out.cuesets.is_empty());
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn oblivious_counts_partners() {
        let s = schema();
        let inst = load_relation(
            "State,Role,SalPerHr\nCA,Faculty,1\nCA,Staff,2\nNY,Faculty,3\nNY,Staff,4\nCA,Faculty,5\n",
            &s,
        )
        .unwrap();
        let deps =
            parse_constraints("dc: !(t1.State == t2.State & t1.Role != t2.Role)", &s).unwrap();
        let target = CellRef::new(0, 0);
        let out = detect_oblivious(&BTreeSet::from([target]), &deps, &inst);
        // 5 tuples, symmetric: 4 partner instantiations, each a cueset.
        assert_eq!(out.cuesets.len(), 4);
        // Superset of the gated output's (owner, origin) pairs.
        let view = QuerierView::full(&inst).hiding([target]);
        let gated = detect(&BTreeSet::from([target]), &deps, &view, &DetectOptions::default());
        for cs in &gated.cuesets {
            assert!(out
                .cuesets
                .iter()
                .any(|o| o.owner == cs.owner && o.origin == cs.origin));
        }
    }

    #[test]
    fn query_based_matches_detect() {
        let s = schema();
        let inst = load_relation(
            "State,Role,SalPerHr\nCA,Faculty,100\nCA,Faculty,100\nNY,Staff,200\nCA,Staff,300\n",
            &s,
        )
        .unwrap();
        let deps = parse_constraints(
            "dc: !(t1.State == t2.State & t1.Role == t2.Role & t1.SalPerHr != t2.SalPerHr)\n\
             dc: !(t1.State == t2.State & t1.SalPerHr > t2.SalPerHr)\n",
            &s,
        )
        .unwrap();
        let targets = BTreeSet::from([CellRef::new(0, 2), CellRef::new(2, 0)]);
        let view = QuerierView::full(&inst).hiding(targets.clone());
        let mut a = detect(&targets, &deps, &view, &DetectOptions::default()).cuesets;
        let mut b = detect_query_based(&targets, &deps, &inst, &view).cuesets;
        let key = |c: &Cueset| (c.owner, c.origin.clone(), c.members.clone());
        a.sort_by_key(key);
        b.sort_by_key(key);
        assert_eq!(a, b);
    }

    #[test]
    fn owner_filter() {
        let s = Schema {
            owner_column: Some("State".into()),
            ..schema()
        };
        let inst = load_relation(
            "State,Role,SalPerHr\nCA,Faculty,100\nNY,Staff,200\n",
            &s,
        )
        .unwrap();
        let cs = |members: Vec<CellRef>| Cueset {
            owner: CellRef::new(0, 2),
            members: members.into_iter().collect(),
            origin: "x".into(),
        };
        // Mixed ownership: CA-owned member dropped.
        let out = filter_owner(
            vec![cs(vec![CellRef::new(0, 1), CellRef::new(1, 1)])],
            "CA",
            &inst,
        )
        .unwrap();
        assert_eq!(out.cuesets.len(), 1);
        assert_eq!(out.cuesets[0].members, BTreeSet::from([CellRef::new(1, 1)]));
        // Entirely querier-owned: removed with a warning.
        let out = filter_owner(vec![cs(vec![CellRef::new(0, 1)])], "CA", &inst).unwrap();
        assert!(out.cuesets.is_empty());
        assert_eq!(out.warnings.len(), 1);
        // Querier owning nothing: identity.
        let out = filter_owner(vec![cs(vec![CellRef::new(0, 1)])], "TX", &inst).unwrap();
        assert_eq!(out.cuesets.len(), 1);
        // Missing owner column is an error.
        let bare = load_relation("State,Role,SalPerHr\nCA,Faculty,100\n", &schema()).unwrap();
        assert!(matches!(
            filter_owner(vec![], "CA", &bare),
            Err(Error::MissingOwnership)
        ));
    }
}
