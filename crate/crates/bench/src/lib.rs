//! Shared fixtures for the engine benchmarks.

use std::collections::BTreeSet;

use tattle_core::{
    generate_instance, parse_constraints, AttrKind, AttributeDef, CellRef, DependencySet, Policy,
    RelationInstance, Schema, Value,
};

/// Tax-like schema: Zip functionally determines five dependent attributes.
pub fn tax_schema() -> Schema {
    Schema::new(
        "Tax",
        vec![
            ("Zip", 12),
            ("City", 6),
            ("State", 4),
            ("AreaCode", 8),
            ("SingleExemp", 5),
            ("ChildExemp", 3),
        ]
        .into_iter()
        .map(|(name, dom)| AttributeDef {
            name: name.into(),
            kind: AttrKind::Discrete(
                (0..dom).map(|v| Value::Text(format!("{name}{v}"))).collect(),
            ),
        })
        .collect(),
    )
    .expect("valid schema")
}

pub fn tax_deps(schema: &Schema) -> DependencySet {
    parse_constraints(
        "dc: !(t1.Zip == t2.Zip & t1.City != t2.City)\n\
         dc: !(t1.Zip == t2.Zip & t1.State != t2.State)\n\
         dc: !(t1.Zip == t2.Zip & t1.AreaCode != t2.AreaCode)\n\
         dc: !(t1.Zip == t2.Zip & t1.SingleExemp != t2.SingleExemp)\n\
         dc: !(t1.Zip == t2.Zip & t1.ChildExemp != t2.ChildExemp)\n",
        schema,
    )
    .expect("valid constraints")
}

pub fn tax_instance(schema: &Schema, deps: &DependencySet, n: usize) -> RelationInstance {
    generate_instance(schema, deps, n, 0xBE7C, 10 * n.max(1000)).expect("generation within budget")
}

/// Direct policies over the dependent attributes, spread across tuples.
pub fn tax_policies(n_rows: usize, count: usize) -> Vec<Policy> {
    let attrs = ["City", "State", "AreaCode", "SingleExemp", "ChildExemp"];
    (0..count)
        .map(|i| Policy::Direct {
            querier: "Q".into(),
            cells: vec![((i * 53) % n_rows, attrs[i % attrs.len()].into())],
        })
        .collect()
}

pub fn sensitive_cells(schema: &Schema, n_rows: usize, count: usize) -> BTreeSet<CellRef> {
    let attrs = ["City", "State", "AreaCode", "SingleExemp", "ChildExemp"];
    (0..count)
        .map(|i| {
            let attr = schema.attr(attrs[i % attrs.len()]).expect("known attr").0;
            CellRef::new((i * 53) % n_rows, attr)
        })
        .collect()
}
