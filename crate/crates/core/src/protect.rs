//! Inference protection: choose cells to hide so that every cueset in a
//! batch contains at least one hidden cell.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detect::Cueset;
use crate::error::Result;
use crate::model::{CellRef, QuerierView, Schema};

/// The cells chosen to be hidden for one protection round, plus which cell
/// covers each input cueset (by cueset index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HideSelection {
    pub cells: BTreeSet<CellRef>,
    pub covered: Vec<Option<CellRef>>,
}

impl HideSelection {
    fn empty(n: usize) -> Self {
        HideSelection {
            cells: BTreeSet::new(),
            covered: vec![None; n],
        }
    }
}

/// Random-hiding baseline: visit cuesets in seeded-random order, skip any
/// already covered by the growing selection, otherwise hide a uniformly
/// random member.
pub fn protect_random(cuesets: &[Cueset], rng_seed: u64) -> HideSelection {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut order: Vec<usize> = (0..cuesets.len()).collect();
    order.shuffle(&mut rng);
    let mut sel = HideSelection::empty(cuesets.len());
    for i in order {
        let members: Vec<CellRef> = cuesets[i].members.iter().copied().collect();
        if let Some(&hit) = members.iter().find(|c| sel.cells.contains(c)) {
            sel.covered[i] = Some(hit);
            continue;
        }
        if members.is_empty() {
            continue;
        }
        let pick = members[rng.gen_range(0..members.len())];
        sel.cells.insert(pick);
        sel.covered[i] = Some(pick);
    }
    // Record covering cells for cuesets visited before their coverer was chosen.
    for (i, cs) in cuesets.iter().enumerate() {
        if sel.covered[i].is_none() {
            sel.covered[i] = cs.members.iter().find(|c| sel.cells.contains(c)).copied();
        }
    }
    sel
}

/// Greedy minimum-vertex-cover heuristic: repeatedly hide the cell appearing
/// in the most uncovered cuesets (duplicates counted), tie-break on the
/// smallest cell reference, until every cueset is covered.
pub fn protect_mvc(cuesets: &[Cueset]) -> HideSelection {
    let mut sel = HideSelection::empty(cuesets.len());
    // Incremental frequency bookkeeping: counts drop as cuesets get covered.
    let mut freq: BTreeMap<CellRef, usize> = BTreeMap::new();
    let mut incident: BTreeMap<CellRef, Vec<usize>> = BTreeMap::new();
    let mut alive = vec![false; cuesets.len()];
    let mut remaining = 0usize;
    for (i, cs) in cuesets.iter().enumerate() {
        if cs.members.is_empty() {
            continue;
        }
        alive[i] = true;
        remaining += 1;
        for &c in &cs.members {
            *freq.entry(c).or_insert(0) += 1;
            incident.entry(c).or_default().push(i);
        }
    }
    while remaining > 0 {
        // Ascending iteration plus strict `>` keeps the smallest cell among
        // equal frequencies.
        let mut best: Option<(CellRef, usize)> = None;
        for (&c, &n) in &freq {
            if n == 0 {
                continue;
            }
            if best.map_or(true, |(_, m)| n > m) {
                best = Some((c, n));
            }
        }
        let (best, _) = best.expect("remaining cuesets have members");
        sel.cells.insert(best);
        for &i in &incident[&best] {
            if !alive[i] {
                continue;
            }
            alive[i] = false;
            remaining -= 1;
            sel.covered[i] = Some(best);
            for &c in &cuesets[i].members {
                *freq.get_mut(&c).unwrap() -= 1;
            }
        }
    }
    sel
}

/// Attribute cloaking: for every tuple touched by the selection, also hide
/// that tuple's cells under each sensitive attribute.
pub fn protect_cloak(
    mut selection: HideSelection,
    sensitive_attrs: &[String],
    view: &QuerierView<'_>,
) -> Result<HideSelection> {
    let schema: &Schema = &view.instance.schema;
    let attr_ids: Vec<usize> = sensitive_attrs
        .iter()
        .map(|name| schema.attr(name).map(|(i, _)| i))
        .collect::<Result<_>>()?;
    let tuples: BTreeSet<usize> = selection.cells.iter().map(|c| c.tuple).collect();
    for t in tuples {
        for &a in &attr_ids {
            selection.cells.insert(CellRef::new(t, a));
        }
    }
    Ok(selection)
}
