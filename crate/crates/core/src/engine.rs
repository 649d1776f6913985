//! Protection engine: the detect-protect fixpoint loop, leakage
//! computation with k-percentile deniability, and the binning-then-merging
//! scalability wrapper.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;

use crate::constraints::DependencySet;
use crate::detect::{
    detect, detect_oblivious, detect_query_based, filter_owner, instantiate, ttc, Cueset,
    DetectOptions, InstantiatedDependency, ResidualWarning,
};
use crate::error::{Error, Result};
use crate::model::{
    sensitivity_determination, AttrKind, CellRef, Policy, QuerierView, RelationInstance, Value,
    NUM_EPS,
};
use crate::protect::{protect_cloak, protect_mvc, protect_random, HideSelection};

/// What an adversary can exclude about one hidden cell's value.
#[derive(Debug, Clone, PartialEq)]
pub enum LeakageSet {
    Discrete {
        excluded: BTreeSet<Value>,
        domain_size: usize,
    },
    Continuous {
        /// Remaining possible interval [low, high] within [min, max].
        low: f64,
        high: f64,
        min: f64,
        max: f64,
    },
}

impl LeakageSet {
    fn empty_for(attr_kind: &AttrKind) -> LeakageSet {
        match attr_kind {
            AttrKind::Discrete(vals) => LeakageSet::Discrete {
                excluded: BTreeSet::new(),
                domain_size: vals.len(),
            },
            AttrKind::Continuous { min, max, .. } => LeakageSet::Continuous {
                low: *min,
                high: *max,
                min: *min,
                max: *max,
            },
        }
    }

    /// Size of the remaining possible set (cardinality or interval length).
    pub fn possible_size(&self) -> f64 {
        match self {
            LeakageSet::Discrete { excluded, domain_size } => (domain_size - excluded.len()) as f64,
            LeakageSet::Continuous { low, high, .. } => (high - low).max(0.0),
        }
    }

    /// Size of the excluded set; the numeric leakage score.
    pub fn leaked_size(&self) -> f64 {
        match self {
            LeakageSet::Discrete { excluded, .. } => excluded.len() as f64,
            LeakageSet::Continuous { low, high, min, max } => (max - min) - (high - low).max(0.0),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.leaked_size() <= NUM_EPS
    }

    /// Merge another leakage description for the same cell (both channels leak).
    fn absorb(&mut self, other: &LeakageSet) {
        match (self, other) {
            (
                LeakageSet::Discrete { excluded, .. },
                LeakageSet::Discrete { excluded: o, .. },
            ) => excluded.extend(o.iter().cloned()),
            (
                LeakageSet::Continuous { low, high, .. },
                LeakageSet::Continuous { low: ol, high: oh, .. },
            ) => {
                *low = low.max(*ol);
                *high = high.min(*oh);
            }
            _ => unreachable!("leakage kinds match per cell"),
        }
    }
}

/// Exclusion an adversary derives for `cell` from the given instantiations.
/// Callers pass only instantiations whose tell-tale condition holds for the
/// cell under `view`; each contributes through its lone owner predicate.
pub fn compute_leakage(
    cell: CellRef,
    view: &QuerierView<'_>,
    instantiations: &[&InstantiatedDependency],
    instance: &RelationInstance,
) -> LeakageSet {
    let kind = &instance.schema.attributes[cell.attr].kind;
    let mut leakage = LeakageSet::empty_for(kind);
    for inst in instantiations {
        let owner_preds: Vec<_> = inst.predicates.iter().filter(|p| p.involves(cell)).collect();
        // Multiple owner predicates yield a disjunction of negations; no
        // single-value exclusion follows, so such channels contribute nothing.
        let [pred] = owner_preds[..] else { continue };
        // Normalize so the hidden cell sits on the left.
        let (op, other) = if pred.lhs.cell() == Some(cell) {
            (pred.op, &pred.rhs)
        } else {
            (pred.op.flipped(), &pred.lhs)
        };
        let other_val = match other {
            crate::detect::GroundOperand::Const(v) => v.clone(),
            crate::detect::GroundOperand::Cell(c) => match view.observable(*c) {
                Some(v) => v.clone(),
                None => continue, // comparison cell hidden: nothing derivable
            },
        };
        // All other predicates hold, so this one must be False; values
        // satisfying it are excluded.
        apply_exclusion(&mut leakage, op, &other_val, kind);
    }
    leakage
}

fn apply_exclusion(
    leakage: &mut LeakageSet,
    op: crate::model::CmpOp,
    bound: &Value,
    kind: &AttrKind,
) {
    use crate::model::CmpOp::*;
    match leakage {
        LeakageSet::Discrete { excluded, .. } => {
            let AttrKind::Discrete(domain) = kind else { unreachable!() };
            match op {
                Eq => {
                    excluded.insert(bound.clone());
                }
                Ne => {
                    // cell must equal bound: everything else excluded.
                    excluded.extend(domain.iter().filter(|v| !v.equals(bound)).cloned());
                }
                Lt | Le | Gt | Ge => {
                    excluded.extend(
                        domain
                            .iter()
                            .filter(|v| {
                                v.compare(bound).map(|o| op.apply(o)).unwrap_or(false)
                            })
                            .cloned(),
                    );
                }
            }
        }
        LeakageSet::Continuous { low, high, .. } => {
            let Some(b) = bound.as_num() else { return };
            // Endpoint strictness is not distinguished; intervals stay closed.
            match op {
                Gt | Ge => *high = high.min(b),
                Lt | Le => *low = low.max(b),
                Ne => {
                    *low = low.max(b);
                    *high = high.min(b);
                }
                Eq => {
                    // A single excluded point has measure zero in an interval.
                }
            }
        }
    }
}

/// k-percentile deniability test. k is clamped per cell to its legal
/// interval [1/|Dom|, 1].
pub fn is_deniable(leakage: &LeakageSet, k: f64) -> bool {
    let (possible, dom) = match leakage {
        LeakageSet::Discrete { domain_size, .. } => {
            (leakage.possible_size(), *domain_size as f64)
        }
        LeakageSet::Continuous { min, max, .. } => (leakage.possible_size(), max - min),
    };
    let k = k.clamp(1.0 / dom.max(1.0), 1.0);
    possible + NUM_EPS >= k * dom
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Full,
    Kden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMethod {
    #[default]
    Ttc,
    Query,
    Oblivious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtectionMethod {
    #[default]
    Mvc,
    Random,
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub mode: Mode,
    /// Deniability fraction for kden mode.
    pub k: f64,
    pub detection: DetectionMethod,
    pub protection: ProtectionMethod,
    /// Attributes to cloak alongside every hidden cell's tuple.
    pub cloak_attrs: Vec<String>,
    /// Drop querier-owned cells from cuesets (requires an owner column).
    pub owner_filter: bool,
    pub seed: u64,
    /// Safety cap; defaults to the cell-universe size.
    pub max_iterations: Option<usize>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            mode: Mode::Full,
            k: 1.0,
            detection: DetectionMethod::Ttc,
            protection: ProtectionMethod::Mvc,
            cloak_attrs: Vec::new(),
            owner_filter: false,
            seed: 42,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct ReportWarning {
    pub cell: (usize, usize),
    pub origin: String,
    pub detail: String,
}

impl From<&ResidualWarning> for ReportWarning {
    fn from(w: &ResidualWarning) -> Self {
        ReportWarning {
            cell: (w.cell.tuple, w.cell.attr),
            origin: w.origin.clone(),
            detail: w.detail.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct RunReport {
    pub iterations: usize,
    pub cuesets_per_invocation: Vec<usize>,
    /// Index 0 counts the initially hidden (sensitive) cells; subsequent
    /// entries count cells newly hidden per protection round.
    pub hidden_per_invocation: Vec<usize>,
    pub total_hidden: usize,
    pub residual_warnings: Vec<ReportWarning>,
    pub wall_ms: u128,
}

/// Full protection pipeline for one querier: sensitivity determination, then
/// the detect-protect fixpoint.
pub fn run_full<'a>(
    querier: &str,
    policies: &[Policy],
    deps: &DependencySet,
    instance: &'a RelationInstance,
    options: &EngineOptions,
) -> Result<(QuerierView<'a>, RunReport)> {
    let sensitive = sensitivity_determination(policies, querier, instance)?;
    run_with_sensitive(Some(querier), &sensitive.cells, deps, instance, options, None, true)
}

/// The fixpoint loop over an explicit sensitive set, optionally scoped to a
/// subset of tuples (binning). `count_initial` controls whether the initial
/// hidden cells are charged to this run's report.
pub fn run_with_sensitive<'a>(
    querier: Option<&str>,
    sensitive: &BTreeSet<CellRef>,
    deps: &DependencySet,
    instance: &'a RelationInstance,
    options: &EngineOptions,
    tuple_scope: Option<BTreeSet<usize>>,
    count_initial: bool,
) -> Result<(QuerierView<'a>, RunReport)> {
    let started = Instant::now();
    if options.owner_filter && querier.is_none() {
        return Err(Error::InvalidOptions(
            "ownership filtering requires a querier identity".into(),
        ));
    }
    if options.detection == DetectionMethod::Query && tuple_scope.is_some() {
        return Err(Error::InvalidOptions(
            "query-based detection does not support tuple scoping".into(),
        ));
    }
    let detect_options = DetectOptions {
        tuple_scope,
    };
    let max_iter = options
        .max_iterations
        .unwrap_or_else(|| instance.cell_count().max(1));

    let mut hidden: BTreeSet<CellRef> = sensitive.clone();
    let mut to_detect = sensitive.clone();
    let mut report = RunReport {
        hidden_per_invocation: vec![if count_initial { sensitive.len() } else { 0 }],
        ..RunReport::default()
    };
    let mut iter = 0usize;

    while !to_detect.is_empty() {
        let view = QuerierView::with_hidden(instance, hidden.clone());
        let mut outcome = match options.detection {
            DetectionMethod::Ttc => detect(&to_detect, deps, &view, &detect_options),
            DetectionMethod::Query => detect_query_based(&to_detect, deps, instance, &view),
            DetectionMethod::Oblivious => detect_oblivious(&to_detect, deps, instance),
        };
        if options.owner_filter {
            let filtered = filter_owner(
                std::mem::take(&mut outcome.cuesets),
                querier.unwrap(),
                instance,
            )?;
            outcome.cuesets = filtered.cuesets;
            outcome.warnings.extend(filtered.warnings);
        }
        report
            .residual_warnings
            .extend(outcome.warnings.iter().map(ReportWarning::from));
        report.cuesets_per_invocation.push(outcome.cuesets.len());
        // Channels already blocked by a hidden cell need no further work.
        let mut open: Vec<Cueset> = outcome
            .cuesets
            .into_iter()
            .filter(|cs| cs.members.is_disjoint(&hidden))
            .collect();
        if options.mode == Mode::Kden && iter == 0 && options.k < 1.0 - NUM_EPS {
            open = kprune_level1(open, &view, deps, instance, &detect_options, options.k);
        }
        if open.is_empty() {
            break;
        }
        let selection: HideSelection = match options.protection {
            ProtectionMethod::Mvc => protect_mvc(&open),
            ProtectionMethod::Random => {
                protect_random(&open, options.seed.wrapping_add(iter as u64))
            }
        };
        let selection = if options.cloak_attrs.is_empty() {
            selection
        } else {
            protect_cloak(selection, &options.cloak_attrs, &view)?
        };
        let new: BTreeSet<CellRef> = selection.cells.difference(&hidden).copied().collect();
        report.hidden_per_invocation.push(new.len());
        if new.is_empty() {
            break;
        }
        hidden.extend(&new);
        to_detect = new;
        iter += 1;
        if iter > max_iter {
            return Err(Error::IterationCapExceeded(max_iter));
        }
    }

    report.iterations = iter;
    report.total_hidden = hidden.len();
    report.wall_ms = started.elapsed().as_millis();
    Ok((QuerierView::with_hidden(instance, hidden), report))
}

/// Level-1 early-stop pruning for k-percentile deniability: per sensitive
/// cell, keep only the largest-leakage cuesets until blocking them brings
/// the residual leakage within the k threshold; deeper levels simulate the
/// full algorithm unchanged.
fn kprune_level1(
    open: Vec<Cueset>,
    view: &QuerierView<'_>,
    deps: &DependencySet,
    instance: &RelationInstance,
    detect_options: &DetectOptions,
    k: f64,
) -> Vec<Cueset> {
    // Group open cuesets per owner, score each by the exclusion its origin
    // instantiation alone imposes on the owner.
    let mut per_owner: BTreeMap<CellRef, Vec<(Cueset, LeakageSet)>> = BTreeMap::new();
    for cs in open {
        let owner = cs.owner;
        let insts = instantiate(deps, owner, instance, detect_options);
        let origin = insts.iter().find(|i| i.id == cs.origin);
        let contribution = match origin {
            Some(inst) if inst.fc.is_some() || ttc(inst, view, owner) => {
                compute_leakage(owner, view, &[inst], instance)
            }
            _ => LeakageSet::empty_for(&instance.schema.attributes[owner.attr].kind),
        };
        per_owner.entry(owner).or_default().push((cs, contribution));
    }
    let mut retained = Vec::new();
    for (owner, mut entries) in per_owner {
        let kind = &instance.schema.attributes[owner.attr].kind;
        let total = entries.iter().fold(LeakageSet::empty_for(kind), |mut acc, (_, l)| {
            acc.absorb(l);
            acc
        });
        if is_deniable(&total, k) {
            continue; // already within budget: prune every cueset
        }
        // Block channels largest-leakage first until the rest fit the budget.
        entries.sort_by(|a, b| b.1.leaked_size().total_cmp(&a.1.leaked_size()));
        for i in 0..entries.len() {
            let residual = entries[i + 1..]
                .iter()
                .fold(LeakageSet::empty_for(kind), |mut acc, (_, l)| {
                    acc.absorb(l);
                    acc
                });
            retained.push(entries[i].0.clone());
            if is_deniable(&residual, k) {
                break;
            }
        }
    }
    retained
}

/// Coverage check: re-detect over the final view for every
/// hidden cell; every emitted cueset must already contain a hidden cell.
pub fn check_coverage(
    view: &QuerierView<'_>,
    deps: &DependencySet,
) -> (bool, Vec<Cueset>) {
    let outcome = detect(&view.hidden, deps, view, &DetectOptions::default());
    let uncovered: Vec<Cueset> = outcome
        .cuesets
        .into_iter()
        .filter(|cs| cs.members.is_disjoint(&view.hidden))
        .collect();
    (uncovered.is_empty(), uncovered)
}

/// Binning-then-merging wrapper: protect contiguous bins of `b` tuples
/// independently, then merge `m` protected bins at a time, re-running the
/// loop with previously hidden cells carried forward as sensitive, until one
/// run covers the whole instance.
pub fn run_binning<'a>(
    querier: &str,
    policies: &[Policy],
    deps: &DependencySet,
    instance: &'a RelationInstance,
    b: usize,
    m: usize,
    options: &EngineOptions,
) -> Result<(QuerierView<'a>, RunReport)> {
    if b < 1 || m < 2 {
        return Err(Error::InvalidOptions(
            "binning requires bin size >= 1 and merge size >= 2".into(),
        ));
    }
    let started = Instant::now();
    let sensitive = sensitivity_determination(policies, querier, instance)?;
    let n = instance.tuple_count();
    if n <= b {
        return run_with_sensitive(
            Some(querier),
            &sensitive.cells,
            deps,
            instance,
            options,
            None,
            true,
        );
    }
    let mut report = RunReport::default();
    // Bin queue: (tuple scope, hidden cells after protecting that scope).
    let mut queue: Vec<(BTreeSet<usize>, BTreeSet<CellRef>)> = Vec::new();
    for chunk_start in (0..n).step_by(b) {
        let scope: BTreeSet<usize> = (chunk_start..(chunk_start + b).min(n)).collect();
        let local_sensitive: BTreeSet<CellRef> = sensitive
            .cells
            .iter()
            .filter(|c| scope.contains(&c.tuple))
            .copied()
            .collect();
        let (view, r) = run_with_sensitive(
            Some(querier),
            &local_sensitive,
            deps,
            instance,
            options,
            Some(scope.clone()),
            true,
        )?;
        merge_report(&mut report, r);
        queue.push((scope, view.hidden));
    }
    // Merge queue: combine m protected bins per round until one remains.
    while queue.len() > 1 {
        let mut next = Vec::new();
        for group in queue.chunks(m) {
            if group.len() == 1 {
                next.push(group[0].clone());
                continue;
            }
            let scope: BTreeSet<usize> = group.iter().flat_map(|(s, _)| s.iter().copied()).collect();
            let carried: BTreeSet<CellRef> =
                group.iter().flat_map(|(_, h)| h.iter().copied()).collect();
            let (view, r) = run_with_sensitive(
                Some(querier),
                &carried,
                deps,
                instance,
                options,
                Some(scope.clone()),
                false,
            )?;
            merge_report(&mut report, r);
            next.push((scope, view.hidden));
        }
        queue = next;
    }
    let (_, hidden) = queue.pop().unwrap();
    report.total_hidden = hidden.len();
    report.wall_ms = started.elapsed().as_millis();
    Ok((QuerierView::with_hidden(instance, hidden), report))
}

fn merge_report(acc: &mut RunReport, r: RunReport) {
    acc.iterations += r.iterations;
    acc.cuesets_per_invocation.extend(r.cuesets_per_invocation);
    acc.hidden_per_invocation.extend(r.hidden_per_invocation);
    acc.residual_warnings.extend(r.residual_warnings);
}
