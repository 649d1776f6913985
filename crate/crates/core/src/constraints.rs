//! Textual constraint language: denial constraints and function-based
//! constraints, with a parser, canonical formatter, and instance validator.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{CmpOp, FcCombine, RelationInstance, Schema, Value, NUM_EPS};

/// Which of a binary constraint's two tuple variables an operand refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TupleSlot {
    T1,
    T2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    /// `t1.Attr` / `t2.Attr`; attribute stored by schema index.
    TupleAttr { slot: TupleSlot, attr: usize },
    Const(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

impl Predicate {
    pub fn slots(&self) -> impl Iterator<Item = TupleSlot> + '_ {
        [&self.lhs, &self.rhs].into_iter().filter_map(|o| match o {
            Operand::TupleAttr { slot, .. } => Some(*slot),
            Operand::Const(_) => None,
        })
    }
}

/// ¬(Pred₁ ∧ … ∧ Predₙ) over one or two tuple variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DenialConstraint {
    pub id: String,
    pub arity: u8,
    pub predicates: Vec<Predicate>,
}

impl DenialConstraint {
    /// Whether every predicate op is symmetric (=, ≠), letting instantiation
    /// use one canonical slot order.
    pub fn all_symmetric(&self) -> bool {
        self.predicates.iter().all(|p| p.op.is_symmetric())
    }
}

/// `out := fn(in₁, …, inₙ)` on a single tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionConstraint {
    pub id: String,
    pub output_attr: usize,
    pub input_attrs: Vec<usize>,
    pub invertible: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DependencySet {
    pub dcs: Vec<DenialConstraint>,
    pub fcs: Vec<FunctionConstraint>,
}

impl DependencySet {
    pub fn is_empty(&self) -> bool {
        self.dcs.is_empty() && self.fcs.is_empty()
    }
}

/// A constraint the instance fails to satisfy; data, not an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub constraint_id: String,
    pub tuples: Vec<usize>,
}

// ---------------------------------------------------------------------------
// Parsing

struct Cursor<'a> {
    text: &'a [u8],
    pos: usize,
    line: usize,
    line_start: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, line: usize) -> Self {
        Cursor {
            text: text.as_bytes(),
            pos: 0,
            line,
            line_start: 0,
        }
    }

    fn col(&self) -> usize {
        self.pos - self.line_start + 1
    }

    fn err(&self, detail: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.col(),
            detail: detail.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.text.len() && (self.text[self.pos] == b' ' || self.text[self.pos] == b'\t') {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.text.get(self.pos).copied()
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{token}`")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.text.len()
            && (self.text[self.pos].is_ascii_alphanumeric() || self.text[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected identifier"));
        }
        Ok(std::str::from_utf8(&self.text[start..self.pos]).unwrap().to_string())
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.text.len()
    }
}

/// Parse the constraint file format: one constraint per non-comment line,
/// `#` comments, `dc`/`fc` lines per the grammar in the crate docs.
pub fn parse_constraints(text: &str, schema: &Schema) -> Result<DependencySet> {
    let mut set = DependencySet::default();
    let mut auto = 0usize;
    for (li, raw) in text.lines().enumerate() {
        let line_no = li + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        auto += 1;
        let mut cur = Cursor::new(raw, line_no);
        cur.skip_ws();
        if cur.eat("dc") {
            let dc = parse_dc_line(&mut cur, schema, auto)?;
            check_unique_id(&set, &dc.id, &cur)?;
            set.dcs.push(dc);
        } else if cur.eat("fc") {
            let fc = parse_fc_line(&mut cur, schema, auto)?;
            check_unique_id(&set, &fc.id, &cur)?;
            set.fcs.push(fc);
        } else {
            return Err(cur.err("expected `dc` or `fc`"));
        }
    }
    Ok(set)
}

fn check_unique_id(set: &DependencySet, id: &str, cur: &Cursor<'_>) -> Result<()> {
    let dup = set.dcs.iter().any(|d| d.id == id) || set.fcs.iter().any(|f| f.id == id);
    if dup {
        Err(cur.err(format!("duplicate constraint id `{id}`")))
    } else {
        Ok(())
    }
}

// `["dc"] [":" id] ":" "!(" pred {"&" pred} ")"` — the leading "dc" is
// consumed by the caller. An id is present when two `:` appear.
fn parse_dc_line(cur: &mut Cursor<'_>, schema: &Schema, auto: usize) -> Result<DenialConstraint> {
    cur.expect(":")?;
    let id = if cur.peek() != Some(b'!') {
        let id = cur.ident()?;
        cur.expect(":")?;
        id
    } else {
        format!("dc{auto}")
    };
    cur.expect("!")?;
    cur.expect("(")?;
    let mut predicates = vec![parse_pred(cur, schema)?];
    while cur.eat("&") {
        predicates.push(parse_pred(cur, schema)?);
    }
    cur.expect(")")?;
    if !cur.at_end() {
        return Err(cur.err("trailing input after constraint"));
    }
    let uses_t2 = predicates
        .iter()
        .any(|p| p.slots().any(|s| s == TupleSlot::T2));
    Ok(DenialConstraint {
        id,
        arity: if uses_t2 { 2 } else { 1 },
        predicates,
    })
}

fn parse_pred(cur: &mut Cursor<'_>, schema: &Schema) -> Result<Predicate> {
    let lhs = parse_operand(cur, schema)?;
    let op = parse_op(cur)?;
    let rhs = parse_operand(cur, schema)?;
    if matches!((&lhs, &rhs), (Operand::Const(_), Operand::Const(_))) {
        return Err(cur.err("predicate must reference at least one tuple attribute"));
    }
    if lhs == rhs {
        return Err(Error::TrivialPredicate {
            line: cur.line,
            detail: "identical operands on both sides".into(),
        });
    }
    if !op.is_symmetric() {
        for o in [&lhs, &rhs] {
            if let Operand::TupleAttr { attr, .. } = o {
                if !schema.attributes[*attr].is_numeric() {
                    return Err(cur.err(format!(
                        "comparison `{}` requires a numeric attribute, `{}` is not",
                        op.token(),
                        schema.attributes[*attr].name
                    )));
                }
            }
        }
    }
    Ok(Predicate { lhs, op, rhs })
}

fn parse_operand(cur: &mut Cursor<'_>, schema: &Schema) -> Result<Operand> {
    match cur.peek() {
        Some(b't') if cur.text[cur.pos..].starts_with(b"t1.") || cur.text[cur.pos..].starts_with(b"t2.") => {
            let slot = if cur.text[cur.pos + 1] == b'1' {
                TupleSlot::T1
            } else {
                TupleSlot::T2
            };
            cur.pos += 3;
            let name = cur.ident()?;
            let (attr, _) = schema.attr(&name)?;
            Ok(Operand::TupleAttr { slot, attr })
        }
        Some(b'"') => {
            cur.pos += 1;
            let start = cur.pos;
            while cur.pos < cur.text.len() && cur.text[cur.pos] != b'"' {
                cur.pos += 1;
            }
            if cur.pos >= cur.text.len() {
                return Err(cur.err("unterminated string literal"));
            }
            let s = std::str::from_utf8(&cur.text[start..cur.pos])
                .map_err(|_| cur.err("invalid UTF-8 in string literal"))?
                .to_string();
            cur.pos += 1;
            Ok(Operand::Const(Value::Text(s)))
        }
        Some(c) if c == b'-' || c == b'.' || c.is_ascii_digit() => {
            let start = cur.pos;
            cur.pos += 1;
            while cur.pos < cur.text.len()
                && (cur.text[cur.pos].is_ascii_digit() || cur.text[cur.pos] == b'.' || cur.text[cur.pos] == b'e'
                    || cur.text[cur.pos] == b'E' || cur.text[cur.pos] == b'-' || cur.text[cur.pos] == b'+')
            {
                cur.pos += 1;
            }
            let s = std::str::from_utf8(&cur.text[start..cur.pos]).unwrap();
            let n: f64 = s.parse().map_err(|_| cur.err(format!("invalid number `{s}`")))?;
            Ok(Operand::Const(Value::Num(n)))
        }
        _ => Err(cur.err("expected operand (t1.Attr, t2.Attr, number, or quoted string)")),
    }
}

fn parse_op(cur: &mut Cursor<'_>) -> Result<CmpOp> {
    // Two-character operators first.
    for (tok, op) in [
        ("==", CmpOp::Eq),
        ("!=", CmpOp::Ne),
        ("<=", CmpOp::Le),
        (">=", CmpOp::Ge),
        ("<", CmpOp::Lt),
        (">", CmpOp::Gt),
    ] {
        if cur.eat(tok) {
            return Ok(op);
        }
    }
    Err(cur.err("expected comparison operator"))
}

// `["fc"] [":" id] ":" "t1." attr "=" "fn(" args ")" flag` — leading "fc"
// consumed by the caller.
fn parse_fc_line(cur: &mut Cursor<'_>, schema: &Schema, auto: usize) -> Result<FunctionConstraint> {
    cur.expect(":")?;
    let id = {
        cur.skip_ws();
        if !cur.text[cur.pos..].starts_with(b"t1.") {
            let id = cur.ident()?;
            cur.expect(":")?;
            id
        } else {
            format!("fc{auto}")
        }
    };
    cur.expect("t1.")?;
    let out_name = cur.ident()?;
    let (output_attr, _) = schema.attr(&out_name)?;
    cur.expect("=")?;
    cur.expect("fn")?;
    cur.expect("(")?;
    let mut input_attrs = Vec::new();
    loop {
        cur.expect("t1.")?;
        let name = cur.ident()?;
        let (idx, _) = schema.attr(&name)?;
        input_attrs.push(idx);
        if !cur.eat(",") {
            break;
        }
    }
    cur.expect(")")?;
    let invertible = if cur.eat("invertible") {
        true
    } else if cur.eat("noninvertible") {
        false
    } else {
        return Err(cur.err("expected `invertible` or `noninvertible`"));
    };
    if !cur.at_end() {
        return Err(cur.err("trailing input after constraint"));
    }
    let mut all = input_attrs.clone();
    all.push(output_attr);
    all.sort_unstable();
    all.dedup();
    if all.len() != input_attrs.len() + 1 {
        return Err(cur.err("function constraint attributes must be distinct"));
    }
    Ok(FunctionConstraint {
        id,
        output_attr,
        input_attrs,
        invertible,
    })
}

// ---------------------------------------------------------------------------
// Formatting

pub fn format_dc(dc: &DenialConstraint, schema: &Schema) -> String {
    let mut out = format!("dc:{}:!(", dc.id);
    for (i, p) in dc.predicates.iter().enumerate() {
        if i > 0 {
            out.push_str(" & ");
        }
        write!(
            out,
            "{} {} {}",
            format_operand(&p.lhs, schema),
            p.op.token(),
            format_operand(&p.rhs, schema)
        )
        .unwrap();
    }
    out.push(')');
    out
}

pub fn format_fc(fc: &FunctionConstraint, schema: &Schema) -> String {
    let inputs: Vec<String> = fc
        .input_attrs
        .iter()
        .map(|&a| format!("t1.{}", schema.attributes[a].name))
        .collect();
    format!(
        "fc:{}:t1.{} = fn({}) {}",
        fc.id,
        schema.attributes[fc.output_attr].name,
        inputs.join(", "),
        if fc.invertible { "invertible" } else { "noninvertible" }
    )
}

fn format_operand(o: &Operand, schema: &Schema) -> String {
    match o {
        Operand::TupleAttr { slot, attr } => {
            let t = if *slot == TupleSlot::T1 { "t1" } else { "t2" };
            format!("{t}.{}", schema.attributes[*attr].name)
        }
        Operand::Const(Value::Num(n)) => format!("{n}"),
        Operand::Const(Value::Text(s)) => format!("\"{s}\""),
    }
}

/// Render the whole set in file form; parsing it back reproduces the set.
pub fn format_constraints(set: &DependencySet, schema: &Schema) -> String {
    let mut out = String::new();
    for dc in &set.dcs {
        out.push_str(&format_dc(dc, schema));
        out.push('\n');
    }
    for fc in &set.fcs {
        out.push_str(&format_fc(fc, schema));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Instance validation

fn operand_value<'a>(
    o: &'a Operand,
    t1: &'a [Value],
    t2: &'a [Value],
) -> &'a Value {
    match o {
        Operand::TupleAttr { slot: TupleSlot::T1, attr } => &t1[*attr],
        Operand::TupleAttr { slot: TupleSlot::T2, attr } => &t2[*attr],
        Operand::Const(v) => v,
    }
}

fn dc_conjunction_holds(dc: &DenialConstraint, t1: &[Value], t2: &[Value]) -> bool {
    dc.predicates.iter().all(|p| {
        operand_value(&p.lhs, t1, t2)
            .compare(operand_value(&p.rhs, t1, t2))
            .map(|ord| p.op.apply(ord))
            .unwrap_or(false)
    })
}

/// Evaluate an FC's `fn` on a row per the schema's combine mode.
pub fn fc_value(fc: &FunctionConstraint, row: &[Value], combine: FcCombine) -> Option<f64> {
    let mut acc = match combine {
        FcCombine::Product => 1.0,
        FcCombine::Sum => 0.0,
    };
    for &a in &fc.input_attrs {
        let v = row[a].as_num()?;
        match combine {
            FcCombine::Product => acc *= v,
            FcCombine::Sum => acc += v,
        }
    }
    Some(acc)
}

/// All constraint violations in the instance. DCs with only symmetric ops
/// report unordered pairs once; asymmetric DCs report ordered pairs.
pub fn validate_instance(instance: &RelationInstance, deps: &DependencySet) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = instance.tuple_count();
    for dc in &deps.dcs {
        if dc.arity == 1 {
            for t in 0..n {
                let row = &instance.rows[t];
                if dc_conjunction_holds(dc, row, row) {
                    out.push(Violation {
                        constraint_id: dc.id.clone(),
                        tuples: vec![t],
                    });
                }
            }
        } else {
            let symmetric = dc.all_symmetric();
            for i in 0..n {
                for j in 0..n {
                    if i == j || (symmetric && j < i) {
                        continue;
                    }
                    if dc_conjunction_holds(dc, &instance.rows[i], &instance.rows[j]) {
                        out.push(Violation {
                            constraint_id: dc.id.clone(),
                            tuples: vec![i, j],
                        });
                    }
                }
            }
        }
    }
    for fc in &deps.fcs {
        for (t, row) in instance.rows.iter().enumerate() {
            let holds = match (fc_value(fc, row, instance.schema.fc_combine), row[fc.output_attr].as_num()) {
                (Some(expect), Some(actual)) => (expect - actual).abs() <= NUM_EPS,
                _ => false,
            };
            if !holds {
                out.push(Violation {
                    constraint_id: fc.id.clone(),
                    tuples: vec![t],
                });
            }
        }
    }
    out
}
