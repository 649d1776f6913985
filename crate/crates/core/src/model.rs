//! Relational data model: schema, instance, cells, querier views, and
//! access-control policies with sensitivity determination.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for equality between continuous values.
pub const NUM_EPS: f64 = 1e-9;

/// A single domain value: either text or a 64-bit float.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Text(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(n) => Some(*n),
            Value::Text(_) => None,
        }
    }

    /// Tolerance-aware comparison used by predicate evaluation.
    /// Numbers compare numerically (equal within [`NUM_EPS`]); text compares
    /// lexicographically; mixed kinds are unordered.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => {
                if (a - b).abs() <= NUM_EPS {
                    Some(Ordering::Equal)
                } else if a < b {
                    Some(Ordering::Less)
                } else {
                    Some(Ordering::Greater)
                }
            }
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    pub fn equals(&self, other: &Value) -> bool {
        self.compare(other) == Some(Ordering::Equal)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => write!(f, "{n}"),
            Value::Text(s) => write!(f, "{s}"),
        }
    }
}

// Total order for use as a set/map key. Numbers sort before text; NaN is
// rejected at load time so total_cmp is safe here.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Value {}
impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Num(_), Value::Text(_)) => Ordering::Less,
            (Value::Text(_), Value::Num(_)) => Ordering::Greater,
        }
    }
}

/// Discrete domains list their values; continuous domains are a closed interval.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrKind {
    Discrete(Vec<Value>),
    Continuous {
        min: f64,
        max: f64,
        /// Bin count for oracle enumeration over this attribute.
        bins: usize,
    },
}

pub const DEFAULT_ORACLE_BINS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDef {
    pub name: String,
    pub kind: AttrKind,
}

impl AttributeDef {
    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, AttrKind::Continuous { .. })
    }

    /// Whether comparison operators (<, <=, >, >=) make sense on this attribute.
    pub fn is_numeric(&self) -> bool {
        match &self.kind {
            AttrKind::Continuous { .. } => true,
            AttrKind::Discrete(vals) => vals.iter().all(|v| matches!(v, Value::Num(_))),
        }
    }

    /// Discrete cardinality, or interval length for continuous domains.
    pub fn domain_size(&self) -> f64 {
        match &self.kind {
            AttrKind::Discrete(vals) => vals.len() as f64,
            AttrKind::Continuous { min, max, .. } => max - min,
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match &self.kind {
            AttrKind::Discrete(vals) => vals.iter().any(|d| d.equals(v)),
            AttrKind::Continuous { min, max, .. } => match v {
                Value::Num(n) => *n >= min - NUM_EPS && *n <= max + NUM_EPS,
                Value::Text(_) => false,
            },
        }
    }

    /// The finite value grid used for brute-force enumeration: the discrete
    /// domain itself, or `bins + 1` evenly spaced points over the interval.
    pub fn enumeration_values(&self) -> Vec<Value> {
        match &self.kind {
            AttrKind::Discrete(vals) => vals.clone(),
            AttrKind::Continuous { min, max, bins } => {
                let step = (max - min) / *bins as f64;
                (0..=*bins).map(|i| Value::Num(min + step * i as f64)).collect()
            }
        }
    }
}

/// How an FC's `fn` combines its inputs when validating fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FcCombine {
    #[default]
    Product,
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub relation: String,
    pub attributes: Vec<AttributeDef>,
    /// Attribute holding the per-tuple owner identifier, when ownership matters.
    pub owner_column: Option<String>,
    pub fc_combine: FcCombine,
}

impl Schema {
    pub fn new(relation: impl Into<String>, attributes: Vec<AttributeDef>) -> Result<Self> {
        let schema = Schema {
            relation: relation.into(),
            attributes,
            owner_column: None,
            fc_combine: FcCombine::Product,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for attr in &self.attributes {
            if !seen.insert(attr.name.clone()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate attribute `{}`",
                    attr.name
                )));
            }
            match &attr.kind {
                AttrKind::Discrete(vals) => {
                    if vals.is_empty() {
                        return Err(Error::InvalidSchema(format!(
                            "attribute `{}` has an empty discrete domain",
                            attr.name
                        )));
                    }
                    let mut dv = BTreeSet::new();
                    for v in vals {
                        if let Value::Num(n) = v {
                            if n.is_nan() {
                                return Err(Error::InvalidSchema("NaN domain value".into()));
                            }
                        }
                        if !dv.insert(v.clone()) {
                            return Err(Error::InvalidSchema(format!(
                                "duplicate value `{v}` in domain of `{}`",
                                attr.name
                            )));
                        }
                    }
                }
                AttrKind::Continuous { min, max, bins } => {
                    if !(min < max) {
                        return Err(Error::InvalidSchema(format!(
                            "attribute `{}`: continuous domain requires min < max",
                            attr.name
                        )));
                    }
                    if *bins == 0 {
                        return Err(Error::InvalidSchema(format!(
                            "attribute `{}`: bin count must be positive",
                            attr.name
                        )));
                    }
                }
            }
        }
        if let Some(owner) = &self.owner_column {
            if self.attr_index(owner).is_none() {
                return Err(Error::UnknownAttribute(owner.clone()));
            }
        }
        Ok(())
    }

    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn attr(&self, name: &str) -> Result<(usize, &AttributeDef)> {
        self.attr_index(name)
            .map(|i| (i, &self.attributes[i]))
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    /// Parse from the JSON schema-file format.
    pub fn from_json(text: &str) -> Result<Schema> {
        let raw: SchemaFile = serde_json::from_str(text)?;
        let attributes = raw
            .attributes
            .into_iter()
            .map(|a| {
                let kind = match a.kind.as_str() {
                    "discrete" => AttrKind::Discrete(a.values.ok_or_else(|| {
                        Error::InvalidSchema(format!("attribute `{}`: missing `values`", a.name))
                    })?),
                    "continuous" => {
                        let [min, max] = a.range.ok_or_else(|| {
                            Error::InvalidSchema(format!("attribute `{}`: missing `range`", a.name))
                        })?;
                        AttrKind::Continuous {
                            min,
                            max,
                            bins: a.bins.unwrap_or(DEFAULT_ORACLE_BINS),
                        }
                    }
                    other => {
                        return Err(Error::InvalidSchema(format!(
                            "attribute `{}`: unknown kind `{other}`",
                            a.name
                        )))
                    }
                };
                Ok(AttributeDef { name: a.name, kind })
            })
            .collect::<Result<Vec<_>>>()?;
        let schema = Schema {
            relation: raw.relation,
            attributes,
            owner_column: raw.owner_column,
            fc_combine: raw.fc_combine.unwrap_or_default(),
        };
        schema.validate()?;
        Ok(schema)
    }
}

#[derive(Deserialize)]
struct SchemaFile {
    relation: String,
    attributes: Vec<AttrFile>,
    owner_column: Option<String>,
    fc_combine: Option<FcCombine>,
}

#[derive(Deserialize)]
struct AttrFile {
    name: String,
    kind: String,
    values: Option<Vec<Value>>,
    range: Option<[f64; 2]>,
    bins: Option<usize>,
}

/// Address of a single cell; ordered lexicographically by (tuple, attribute).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellRef {
    pub tuple: usize,
    pub attr: usize,
}

impl CellRef {
    pub fn new(tuple: usize, attr: usize) -> Self {
        CellRef { tuple, attr }
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(t{},a{})", self.tuple, self.attr)
    }
}

/// A single table instance; the cell universe of one protection run.
#[derive(Debug, Clone)]
pub struct RelationInstance {
    pub schema: Schema,
    pub rows: Vec<Vec<Value>>,
}

impl RelationInstance {
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>) -> Result<Self> {
        for (ri, row) in rows.iter().enumerate() {
            if row.len() != schema.attributes.len() {
                return Err(Error::SchemaMismatch(format!(
                    "row {ri} has {} fields, schema has {} attributes",
                    row.len(),
                    schema.attributes.len()
                )));
            }
            for (ai, v) in row.iter().enumerate() {
                let attr = &schema.attributes[ai];
                if !attr.contains(v) {
                    return Err(Error::DomainViolation {
                        row: ri,
                        column: attr.name.clone(),
                        detail: format!("value `{v}` outside declared domain"),
                    });
                }
            }
        }
        Ok(RelationInstance { schema, rows })
    }

    pub fn tuple_count(&self) -> usize {
        self.rows.len()
    }

    pub fn cell_count(&self) -> usize {
        self.rows.len() * self.schema.attributes.len()
    }

    pub fn value(&self, c: CellRef) -> &Value {
        &self.rows[c.tuple][c.attr]
    }

    pub fn all_cells(&self) -> impl Iterator<Item = CellRef> + '_ {
        let width = self.schema.attributes.len();
        (0..self.rows.len()).flat_map(move |t| (0..width).map(move |a| CellRef::new(t, a)))
    }

    /// Owner identifier of a tuple, read from the schema's owner column.
    pub fn owner_of(&self, tuple: usize) -> Result<String> {
        let col = self
            .schema
            .owner_column
            .as_deref()
            .ok_or(Error::MissingOwnership)?;
        let (idx, _) = self.schema.attr(col)?;
        Ok(self.rows[tuple][idx].to_string())
    }
}

/// Parse a CSV document (header row required) into an instance.
pub fn load_relation(csv_text: &str, schema: &Schema) -> Result<RelationInstance> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = schema.attributes.iter().map(|a| a.name.as_str()).collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != names {
        return Err(Error::SchemaMismatch(format!(
            "header {:?} does not match schema attributes {:?}",
            got, names
        )));
    }
    let mut rows = Vec::new();
    for (ri, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != schema.attributes.len() {
            return Err(Error::SchemaMismatch(format!(
                "row {ri} has {} fields, expected {}",
                record.len(),
                schema.attributes.len()
            )));
        }
        let mut row = Vec::with_capacity(record.len());
        for (ai, field) in record.iter().enumerate() {
            row.push(parse_field(field, &schema.attributes[ai], ri)?);
        }
        rows.push(row);
    }
    RelationInstance::new(schema.clone(), rows)
}

fn parse_field(field: &str, attr: &AttributeDef, row: usize) -> Result<Value> {
    let v = match &attr.kind {
        AttrKind::Continuous { .. } => {
            let n: f64 = field.trim().parse().map_err(|_| Error::DomainViolation {
                row,
                column: attr.name.clone(),
                detail: format!("`{field}` is not a number"),
            })?;
            Value::Num(n)
        }
        AttrKind::Discrete(vals) => {
            // Match against declared values; numeric domains accept numeric text.
            if let Some(v) = vals.iter().find(|v| match v {
                Value::Text(s) => s == field,
                Value::Num(n) => field.trim().parse::<f64>().map(|p| (p - n).abs() <= NUM_EPS)
                    == Ok(true),
            }) {
                v.clone()
            } else {
                return Err(Error::DomainViolation {
                    row,
                    column: attr.name.clone(),
                    detail: format!("value `{field}` outside declared domain"),
                });
            }
        }
    };
    if !attr.contains(&v) {
        return Err(Error::DomainViolation {
            row,
            column: attr.name.clone(),
            detail: format!("value `{v}` outside declared domain"),
        });
    }
    Ok(v)
}

/// NULL token in emitted CSV views.
pub const NULL_TOKEN: &str = "\\N";

/// A querier's view: each cell shows its true value or NULL (hidden).
#[derive(Debug, Clone)]
pub struct QuerierView<'a> {
    pub instance: &'a RelationInstance,
    pub hidden: BTreeSet<CellRef>,
}

impl<'a> QuerierView<'a> {
    pub fn full(instance: &'a RelationInstance) -> Self {
        QuerierView {
            instance,
            hidden: BTreeSet::new(),
        }
    }

    pub fn with_hidden(instance: &'a RelationInstance, hidden: BTreeSet<CellRef>) -> Self {
        QuerierView { instance, hidden }
    }

    pub fn is_hidden(&self, c: CellRef) -> bool {
        self.hidden.contains(&c)
    }

    /// The observable value: `None` means NULL.
    pub fn observable(&self, c: CellRef) -> Option<&Value> {
        if self.is_hidden(c) {
            None
        } else {
            Some(self.instance.value(c))
        }
    }

    pub fn hiding(mut self, cells: impl IntoIterator<Item = CellRef>) -> Self {
        self.hidden.extend(cells);
        self
    }

    /// Serialize as CSV with hidden cells rendered as `\N`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self
            .instance
            .schema
            .attributes
            .iter()
            .map(|a| a.name.as_str())
            .collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for t in 0..self.instance.tuple_count() {
            let fields: Vec<String> = (0..names.len())
                .map(|a| match self.observable(CellRef::new(t, a)) {
                    Some(v) => v.to_string(),
                    None => NULL_TOKEN.to_string(),
                })
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// The base view: every cell is NULL.
pub fn base_view(instance: &RelationInstance) -> QuerierView<'_> {
    let hidden = instance.all_cells().collect();
    QuerierView::with_hidden(instance, hidden)
}

/// Read a previously emitted view CSV back, returning the hidden cell set.
/// Visible values must match the original instance.
pub fn load_view_hidden(csv_text: &str, instance: &RelationInstance) -> Result<BTreeSet<CellRef>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(csv_text.as_bytes());
    let mut hidden = BTreeSet::new();
    for (ri, record) in reader.records().enumerate() {
        let record = record?;
        for (ai, field) in record.iter().enumerate() {
            let cell = CellRef::new(ri, ai);
            if field == NULL_TOKEN {
                hidden.insert(cell);
            } else {
                let v = parse_field(field, &instance.schema.attributes[ai], ri)?;
                if !v.equals(instance.value(cell)) {
                    return Err(Error::SchemaMismatch(format!(
                        "view value `{v}` at {cell} disagrees with the instance"
                    )));
                }
            }
        }
    }
    Ok(hidden)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==", alias = "=")]
    Eq,
    #[serde(rename = "!=", alias = "≠", alias = "<>")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
}

impl CmpOp {
    pub fn apply(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    /// Whether swapping operand order preserves truth.
    pub fn is_symmetric(self) -> bool {
        matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            other => other,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// One condition in a policy's selection clause.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelCond {
    pub attr: String,
    pub op: CmpOp,
    pub value: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyAction {
    Deny,
    Allow,
}

/// A fine-grained access-control policy, either as selection + projection
/// over the relation or as an explicit cell list (fixture form).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Policy {
    Select {
        querier: String,
        relation: String,
        selection: Vec<SelCond>,
        projection: Vec<String>,
        action: PolicyAction,
    },
    Direct {
        querier: String,
        cells: Vec<(usize, String)>,
    },
}

impl Policy {
    pub fn querier(&self) -> &str {
        match self {
            Policy::Select { querier, .. } | Policy::Direct { querier, .. } => querier,
        }
    }
}

/// Cells sensitive to one querier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensitiveSet {
    pub querier: String,
    pub cells: BTreeSet<CellRef>,
}

/// Union of all matching deny policies for `querier`; allow is the default.
pub fn sensitivity_determination(
    policies: &[Policy],
    querier: &str,
    instance: &RelationInstance,
) -> Result<SensitiveSet> {
    let mut cells = BTreeSet::new();
    for policy in policies {
        if policy.querier() != querier {
            continue;
        }
        match policy {
            Policy::Select {
                relation,
                selection,
                projection,
                action,
                ..
            } => {
                if *action != PolicyAction::Deny || *relation != instance.schema.relation {
                    continue;
                }
                let proj: Vec<usize> = projection
                    .iter()
                    .map(|name| instance.schema.attr(name).map(|(i, _)| i))
                    .collect::<Result<_>>()?;
                let sel: Vec<(usize, CmpOp, &Value)> = selection
                    .iter()
                    .map(|c| instance.schema.attr(&c.attr).map(|(i, _)| (i, c.op, &c.value)))
                    .collect::<Result<_>>()?;
                for t in 0..instance.tuple_count() {
                    let matches = sel.iter().all(|(ai, op, v)| {
                        instance.rows[t][*ai]
                            .compare(v)
                            .map(|ord| op.apply(ord))
                            .unwrap_or(false)
                    });
                    if matches {
                        for &ai in &proj {
                            cells.insert(CellRef::new(t, ai));
                        }
                    }
                }
            }
            Policy::Direct { cells: listed, .. } => {
                for (tuple, attr_name) in listed {
                    let (ai, _) = instance.schema.attr(attr_name)?;
                    if *tuple >= instance.tuple_count() {
                        return Err(Error::SchemaMismatch(format!(
                            "policy references tuple {tuple} beyond instance"
                        )));
                    }
                    cells.insert(CellRef::new(*tuple, ai));
                }
            }
        }
    }
    Ok(SensitiveSet {
        querier: querier.to_string(),
        cells,
    })
}
