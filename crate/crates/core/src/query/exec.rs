// SPDX-License-Identifier: Apache-2.0

//! Executor. Rows stay borrowed model structs until the final output;
//! fields are read through index accessors resolved by the type checker.
//! The source and any leading filters run as one pass, and `sort_by`
//! followed by `top` uses a bounded heap.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::model::{
    Aggressor, ArcInfo, ArcRole, ClkReportEntry, ClockEdge, Edge, LcEntry, PathOrigin, PathSummary, Payload,
    ReportDb, Stage as ModelStage, TimingPath, WireNet, XtalkEntry,
};

use super::ast::{AggOp, CmpOp, FieldPath, Operand, Pred, QueryProgram, Shape, Stage, StrOp};
use super::schema::{self, SubTable, Ty};
use super::value::Value;
use super::{Provenance, QueryError, QueryResult, RowId, SandboxBudget};

#[derive(Debug, Clone)]
enum Row<'a> {
    Path(&'a TimingPath),
    Summary(&'a PathSummary),
    Info(&'a ArcInfo),
    /// A stage; `Some(path_id)` when flattened out of its path.
    Stage(&'a ModelStage, Option<u64>),
    Xtalk(&'a XtalkEntry),
    Aggr(&'a Aggressor, Option<&'a XtalkEntry>),
    Wire(&'a WireNet),
    Lc(&'a LcEntry),
    Clk(&'a ClkReportEntry),
    Freq(&'a str, f64),
    Val(Value),
}

#[derive(Debug, Clone)]
enum Ids {
    One(RowId),
    Many(Vec<RowId>),
}

impl Ids {
    fn extend_into(&self, out: &mut Vec<RowId>) {
        match self {
            Ids::One(id) => out.push(*id),
            Ids::Many(ids) => out.extend_from_slice(ids),
        }
    }

    fn first(&self) -> Option<RowId> {
        match self {
            Ids::One(id) => Some(*id),
            Ids::Many(ids) => ids.first().copied(),
        }
    }
}

#[derive(Debug, Clone)]
struct Item<'a> {
    row: Row<'a>,
    ids: Ids,
}

/// A field read from a row, borrowed where possible.
enum Cell<'r> {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(&'r str),
    V(&'r Value),
    Owned(Value),
}

impl Cell<'_> {
    fn into_value(self) -> Value {
        match self {
            Cell::Null => Value::Null,
            Cell::Bool(b) => Value::Bool(b),
            Cell::Int(i) => Value::Int(i),
            Cell::Num(x) => Value::Num(x),
            Cell::Str(s) => Value::Str(s.to_string()),
            Cell::V(v) => v.clone(),
            Cell::Owned(v) => v,
        }
    }

    fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }
}

fn cell_of_value(v: &Value) -> Cell<'_> {
    match v {
        Value::Null => Cell::Null,
        Value::Bool(b) => Cell::Bool(*b),
        Value::Int(i) => Cell::Int(*i),
        Value::Num(x) => Cell::Num(*x),
        Value::Str(s) => Cell::Str(s),
        other => Cell::V(other),
    }
}

fn cmp_cells(a: &Cell, b: &Cell) -> Option<Ordering> {
    let num = |c: &Cell| match c {
        Cell::Int(i) => Some(*i as f64),
        Cell::Num(x) => Some(*x),
        _ => None,
    };
    match (a, b) {
        (Cell::Int(x), Cell::Int(y)) => Some(x.cmp(y)),
        (Cell::Str(x), Cell::Str(y)) => Some(x.as_bytes().cmp(y.as_bytes())),
        (Cell::Bool(x), Cell::Bool(y)) => Some(x.cmp(y)),
        _ => num(a)?.partial_cmp(&num(b)?),
    }
}

fn origin_str(o: PathOrigin) -> &'static str {
    match o {
        PathOrigin::Internal => "internal",
        PathOrigin::External => "external",
    }
}

fn role_str(r: ArcRole) -> &'static str {
    match r {
        ArcRole::Data => "data",
        ArcRole::Clock => "clock",
    }
}

fn clock_edge_str(e: ClockEdge) -> &'static str {
    match e {
        ClockEdge::Rise => "rise",
        ClockEdge::Fall => "fall",
        ClockEdge::Missing => "missing",
    }
}

fn edge_str(e: Edge) -> &'static str {
    match e {
        Edge::Rise => "rise",
        Edge::Fall => "fall",
    }
}

fn opt(x: Option<f64>) -> Cell<'static> {
    x.map_or(Cell::Null, Cell::Num)
}

fn summary_cell(s: &PathSummary, i: usize) -> Cell<'_> {
    match i {
        0 => Cell::Int(s.path_id as i64),
        1 => Cell::Str(&s.startpoint),
        2 => Cell::Str(&s.endpoint),
        3 => Cell::Num(s.slack),
        4 => Cell::Num(s.constraint),
        5 => Cell::Num(s.arrival),
        6 => Cell::Str(&s.path_group),
        7 => Cell::Str(origin_str(s.internal_external)),
        _ => Cell::Null,
    }
}

fn info_cell(a: &ArcInfo, i: usize) -> Cell<'_> {
    match i {
        0 => Cell::Str(role_str(a.role)),
        1 => Cell::Num(a.pbsa_adjustment),
        2 => Cell::Num(a.arrival_time),
        3 => Cell::Str(&a.launch_clock),
        4 => Cell::Str(&a.capture_clock),
        5 => Cell::Str(clock_edge_str(a.clock_edge)),
        _ => Cell::Null,
    }
}

fn stage_cell(s: &ModelStage, path_id: Option<u64>, i: usize) -> Cell<'_> {
    match i {
        0 => Cell::Int(s.index as i64),
        1 => Cell::Str(&s.point),
        2 => Cell::Str(&s.net),
        3 => Cell::Str(&s.cell),
        4 => Cell::Str(edge_str(s.edge)),
        5 => Cell::Num(s.delay),
        6 => Cell::Num(s.slew),
        7 => Cell::Num(s.xtalk_delta),
        8 => Cell::Num(s.cumulative),
        9 => path_id.map_or(Cell::Null, |p| Cell::Int(p as i64)),
        _ => Cell::Null,
    }
}

fn aggr_cell<'r>(a: &'r Aggressor, owner: Option<&'r XtalkEntry>, i: usize) -> Cell<'r> {
    match (i, owner) {
        (0, _) => Cell::Str(&a.net),
        (1, _) => Cell::Num(a.coupling_delta),
        (2, Some(e)) => Cell::Int(e.path_id as i64),
        (3, Some(e)) => Cell::Str(&e.victim),
        _ => Cell::Null,
    }
}

fn stages_value(stages: &[ModelStage]) -> Value {
    Value::List(stages.iter().map(|s| row_value(&Row::Stage(s, None))).collect())
}

/// Reads the field at `idx` (resolved indices) from a model row.
fn cell_idx<'r>(row: &'r Row<'_>, idx: &[usize]) -> Cell<'r> {
    let whole = idx.len() == 1;
    match row {
        Row::Path(p) => match idx[0] {
            0 if whole => Cell::Owned(row_value(&Row::Summary(&p.summary))),
            0 => summary_cell(&p.summary, idx[1]),
            1 if whole => Cell::Owned(row_value(&Row::Info(&p.data_info))),
            1 => info_cell(&p.data_info, idx[1]),
            2 if whole => Cell::Owned(row_value(&Row::Info(&p.clock_info))),
            2 => info_cell(&p.clock_info, idx[1]),
            3 => Cell::Owned(stages_value(&p.data_stages)),
            4 => Cell::Owned(stages_value(&p.clock_stages)),
            _ => Cell::Null,
        },
        Row::Summary(s) => summary_cell(s, idx[0]),
        Row::Info(a) => info_cell(a, idx[0]),
        Row::Stage(s, pid) => stage_cell(s, *pid, idx[0]),
        Row::Xtalk(e) => match idx[0] {
            0 => Cell::Int(e.path_id as i64),
            1 => Cell::Str(&e.victim),
            2 => Cell::Owned(Value::List(e.aggressors.iter().map(|a| row_value(&Row::Aggr(a, None))).collect())),
            3 => Cell::Str(&e.worst_aggressor),
            _ => Cell::Null,
        },
        Row::Aggr(a, owner) => aggr_cell(a, *owner, idx[0]),
        Row::Wire(w) => match idx[0] {
            0 => Cell::Str(&w.net),
            1 => Cell::Num(w.worst_r),
            2 => Cell::Num(w.worst_c),
            3 => Cell::Num(w.worst_rc),
            _ => Cell::Null,
        },
        Row::Lc(e) => match idx[0] {
            0 => Cell::Str(&e.net),
            1 => Cell::Str(&e.constraint_kind),
            2 => Cell::Str(&e.value),
            _ => Cell::Null,
        },
        Row::Clk(e) => match idx[0] {
            0 => Cell::Str(&e.clock),
            1 => Cell::Str(&e.net),
            2 => opt(e.rise_arrival),
            3 => opt(e.fall_arrival),
            _ => Cell::Null,
        },
        Row::Freq(c, m) => match idx[0] {
            0 => Cell::Str(c),
            1 => Cell::Num(*m),
            _ => Cell::Null,
        },
        Row::Val(_) => Cell::Null,
    }
}

fn cell<'r>(row: &'r Row<'_>, path: &FieldPath) -> Cell<'r> {
    match row {
        Row::Val(v) => {
            let mut cur = v;
            for name in &path.names {
                match cur.field(name) {
                    Some(next) => cur = next,
                    None => return Cell::Null,
                }
            }
            cell_of_value(cur)
        }
        _ => cell_idx(row, &path.index),
    }
}

fn row_names(row: &Row) -> &'static [&'static str] {
    match row {
        Row::Path(_) => &schema::PATH,
        Row::Summary(_) => &schema::SUMMARY,
        Row::Info(_) => &schema::INFO,
        Row::Stage(_, None) => &schema::STAGE,
        Row::Stage(_, Some(_)) => &schema::FLAT_STAGE,
        Row::Xtalk(_) => &schema::XTALK,
        Row::Aggr(_, None) => &schema::AGGRESSOR,
        Row::Aggr(_, Some(_)) => &schema::FLAT_AGGRESSOR,
        Row::Wire(_) => &schema::WIRE,
        Row::Lc(_) => &schema::LC,
        Row::Clk(_) => &schema::CLK,
        Row::Freq(..) => &schema::FREQ,
        Row::Val(_) => &[],
    }
}

fn row_value(row: &Row) -> Value {
    if let Row::Val(v) = row {
        return v.clone();
    }
    let names = row_names(row);
    let mut m = BTreeMap::new();
    for (i, n) in names.iter().enumerate() {
        m.insert(n.to_string(), cell_idx(row, &[i]).into_value());
    }
    Value::Record(m)
}

/// Elements of a list-of-records field, as rows.
fn list_rows<'a>(row: &Row<'a>, path: &FieldPath) -> Vec<Row<'a>> {
    match row {
        Row::Path(p) => match path.index.first() {
            Some(3) => p.data_stages.iter().map(|s| Row::Stage(s, None)).collect(),
            Some(4) => p.clock_stages.iter().map(|s| Row::Stage(s, None)).collect(),
            _ => Vec::new(),
        },
        Row::Xtalk(e) => e.aggressors.iter().map(|a| Row::Aggr(a, None)).collect(),
        Row::Val(_) => match cell(row, path) {
            Cell::V(Value::List(items)) => items.iter().map(|v| Row::Val(v.clone())).collect(),
            _ => Vec::new(),
        },
        _ => Vec::new(),
    }
}

/// A record-typed field as a row.
fn record_row<'a>(row: &Row<'a>, path: &FieldPath) -> Row<'a> {
    match (row, path.index.as_slice()) {
        (Row::Path(p), [0]) => Row::Summary(&p.summary),
        (Row::Path(p), [1]) => Row::Info(&p.data_info),
        (Row::Path(p), [2]) => Row::Info(&p.clock_info),
        _ => Row::Val(cell(row, path).into_value()),
    }
}

pub(crate) fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || (p[pi] != '*' && p[pi] == t[ti])) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '*' {
        pi += 1;
    }
    pi == p.len()
}

fn operand<'r>(row: &'r Row<'_>, o: &'r Operand) -> Cell<'r> {
    match o {
        Operand::Path(p) => cell(row, p),
        Operand::Lit(v) => cell_of_value(v),
    }
}

fn eval(pred: &Pred, row: &Row) -> bool {
    match pred {
        Pred::And(a, b) => eval(a, row) && eval(b, row),
        Pred::Or(a, b) => eval(a, row) || eval(b, row),
        Pred::Not(p) => !eval(p, row),
        Pred::Cmp { lhs, op, rhs } => {
            let Some(ord) = cmp_cells(&operand(row, lhs), &operand(row, rhs)) else {
                return false;
            };
            match op {
                CmpOp::Eq => ord == Ordering::Equal,
                CmpOp::Ne => ord != Ordering::Equal,
                CmpOp::Lt => ord == Ordering::Less,
                CmpOp::Le => ord != Ordering::Greater,
                CmpOp::Gt => ord == Ordering::Greater,
                CmpOp::Ge => ord != Ordering::Less,
            }
        }
        Pred::In { path, list } => {
            let c = cell(row, path);
            list.iter().any(|v| cmp_cells(&c, &cell_of_value(v)) == Some(Ordering::Equal))
        }
        Pred::IsNull { path, negated } => cell(row, path).is_null() != *negated,
        Pred::Str { path, op, pattern } => match cell(row, path) {
            Cell::Str(s) => match op {
                StrOp::Prefix => s.starts_with(pattern.as_str()),
                StrOp::Suffix => s.ends_with(pattern.as_str()),
                StrOp::Contains => s.contains(pattern.as_str()),
                StrOp::Glob => glob_match(pattern, s),
            },
            _ => false,
        },
        Pred::Quant { all, path, pred } => {
            let rows = list_rows(row, path);
            if *all {
                rows.iter().all(|r| eval(pred, r))
            } else {
                rows.iter().any(|r| eval(pred, r))
            }
        }
    }
}

struct Meter {
    steps: u64,
    max: u64,
}

impl Meter {
    fn tick(&mut self, n: usize) -> Result<(), QueryError> {
        self.steps += n as u64;
        if self.steps > self.max {
            Err(QueryError::BudgetExceeded(format!("more than {} steps", self.max)))
        } else {
            Ok(())
        }
    }
}

enum Cur<'a> {
    Stream(Vec<Item<'a>>),
    Record(Item<'a>),
    Scalar(Value, Vec<RowId>),
    Column(Vec<(Value, Ids)>),
    Grouped(Vec<(Value, Vec<Item<'a>>)>),
}

fn for_each_source<'a>(
    payload: &'a Payload,
    sub: Option<SubTable>,
    mut f: impl FnMut(Row<'a>, RowId) -> Result<(), QueryError>,
) -> Result<(), QueryError> {
    match (payload, sub) {
        (Payload::Max(paths) | Payload::Min(paths), None) => {
            for (i, p) in paths.iter().enumerate() {
                f(Row::Path(p), RowId::top(i))?;
            }
        }
        (Payload::Max(paths) | Payload::Min(paths), Some(s)) => {
            for (i, p) in paths.iter().enumerate() {
                let stages = if s == SubTable::ClockStages { &p.clock_stages } else { &p.data_stages };
                for (j, st) in stages.iter().enumerate() {
                    f(Row::Stage(st, Some(p.summary.path_id)), RowId { row: i, sub: Some(j) })?;
                }
            }
        }
        (Payload::XtalkMax(es) | Payload::XtalkMin(es), None) => {
            for (i, e) in es.iter().enumerate() {
                f(Row::Xtalk(e), RowId::top(i))?;
            }
        }
        (Payload::XtalkMax(es) | Payload::XtalkMin(es), Some(_)) => {
            for (i, e) in es.iter().enumerate() {
                for (j, a) in e.aggressors.iter().enumerate() {
                    f(Row::Aggr(a, Some(e)), RowId { row: i, sub: Some(j) })?;
                }
            }
        }
        (Payload::Wire(ws), _) => {
            for (i, w) in ws.iter().enumerate() {
                f(Row::Wire(w), RowId::top(i))?;
            }
        }
        (Payload::Lc(es), _) => {
            for (i, e) in es.iter().enumerate() {
                f(Row::Lc(e), RowId::top(i))?;
            }
        }
        (Payload::Clk(es), _) => {
            for (i, e) in es.iter().enumerate() {
                f(Row::Clk(e), RowId::top(i))?;
            }
        }
        (Payload::Freq(m), _) => {
            for (i, (c, mhz)) in m.iter().enumerate() {
                f(Row::Freq(c, *mhz), RowId::top(i))?;
            }
        }
    }
    Ok(())
}

/// Sort key order: non-null values by `cmp` (reversed when descending),
/// nulls last in both directions, then report order.
fn key_order(a: &(Value, usize), b: &(Value, usize), desc: bool) -> Ordering {
    let ord = match (a.0.is_null(), b.0.is_null()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (false, false) => {
            let o = cmp_cells(&cell_of_value(&a.0), &cell_of_value(&b.0)).unwrap_or(Ordering::Equal);
            if desc {
                o.reverse()
            } else {
                o
            }
        }
    };
    ord.then(a.1.cmp(&b.1))
}

struct HeapEntry {
    key: (Value, usize),
    desc: bool,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        key_order(&self.key, &other.key, self.desc)
    }
}

fn sorted_indices(items: &[Item], key: &FieldPath, desc: bool, limit: Option<usize>) -> Vec<usize> {
    let keyed = items.iter().enumerate().map(|(i, it)| (cell(&it.row, key).into_value(), i));
    match limit {
        Some(k) => {
            let mut heap = BinaryHeap::with_capacity(k + 1);
            if k > 0 {
                for key in keyed {
                    heap.push(HeapEntry { key, desc });
                    if heap.len() > k {
                        heap.pop();
                    }
                }
            }
            heap.into_sorted_vec().into_iter().map(|e| e.key.1).collect()
        }
        None => {
            let mut all: Vec<(Value, usize)> = keyed.collect();
            all.sort_by(|a, b| key_order(a, b, desc));
            all.into_iter().map(|(_, i)| i).collect()
        }
    }
}

fn take_indices<'a>(items: Vec<Item<'a>>, order: &[usize]) -> Vec<Item<'a>> {
    let mut slots: Vec<Option<Item<'a>>> = items.into_iter().map(Some).collect();
    order.iter().map(|&i| slots[i].take().expect("each index once")).collect()
}

/// Numeric and count aggregation over cells. `None` means no non-null input
/// for an op that needs one.
fn aggregate<'r>(op: AggOp, int: bool, cells: impl Iterator<Item = Cell<'r>>, n_rows: usize, counted: bool) -> Option<Value> {
    if op == AggOp::Count && !counted {
        return Some(Value::Int(n_rows as i64));
    }
    let mut count = 0i64;
    let mut isum = 0i64;
    let mut fsum = 0.0f64;
    let mut best: Option<Cell> = None;
    for c in cells {
        if c.is_null() {
            continue;
        }
        count += 1;
        match op {
            AggOp::Sum | AggOp::Avg => match c {
                Cell::Int(i) if int && op == AggOp::Sum => isum = isum.saturating_add(i),
                Cell::Int(i) => fsum += i as f64,
                Cell::Num(x) => fsum += x,
                _ => {}
            },
            AggOp::Min | AggOp::Max => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let o = cmp_cells(&c, b);
                        if op == AggOp::Min {
                            o == Some(Ordering::Less)
                        } else {
                            o == Some(Ordering::Greater)
                        }
                    }
                };
                if better {
                    best = Some(c);
                }
            }
            AggOp::Count => {}
        }
    }
    match op {
        AggOp::Count => Some(Value::Int(count)),
        AggOp::Sum if int => Some(Value::Int(isum)),
        AggOp::Sum => Some(Value::Num(fsum)),
        AggOp::Avg if count == 0 => None,
        AggOp::Avg => Some(Value::Num(fsum / count as f64)),
        AggOp::Min | AggOp::Max => best.map(Cell::into_value),
    }
}

/// Whether a grouped aggregate yields ints (its `value` column type).
fn agg_is_int(shape: &Shape) -> bool {
    matches!(shape, Shape::Stream(r) if r.lookup("value").is_some_and(|(_, t)| *t == Ty::Int))
}

fn group_key(v: &Value) -> GroupKey {
    match v {
        Value::Null => GroupKey::Null,
        Value::Bool(b) => GroupKey::Bool(*b),
        Value::Int(i) => GroupKey::Int(*i),
        Value::Num(x) => GroupKey::Num(if *x == 0.0 { 0 } else { x.to_bits() }),
        Value::Str(s) => GroupKey::Str(s.clone()),
        other => GroupKey::Str(other.to_string()),
    }
}

#[derive(Hash, PartialEq, Eq)]
enum GroupKey {
    Null,
    Bool(bool),
    Int(i64),
    Num(u64),
    Str(String),
}

pub(crate) fn execute(program: &QueryProgram, db: &ReportDb, budget: &SandboxBudget) -> Result<QueryResult, QueryError> {
    let kind = program.source.kind;
    let payload = db.lookup(kind).map_err(|_| QueryError::KindAbsent(kind))?;
    let mut meter = Meter { steps: 0, max: budget.max_steps };
    let mut table = program.source.sub.map(|s| s.as_str().to_string());

    let lead = program.stages.iter().take_while(|s| matches!(s, Stage::Filter(_))).count();
    let filters: Vec<&Pred> = program.stages[..lead]
        .iter()
        .map(|s| match s {
            Stage::Filter(p) => p,
            _ => unreachable!(),
        })
        .collect();
    let mut items = Vec::new();
    for_each_source(payload, program.source.sub, |row, id| {
        meter.tick(1)?;
        for f in &filters {
            meter.tick(1)?;
            if !eval(f, &row) {
                return Ok(());
            }
        }
        items.push(Item { row, ids: Ids::One(id) });
        Ok(())
    })?;
    let mut cur = Cur::Stream(items);

    let mut i = lead;
    while i < program.stages.len() {
        let n = i + 1;
        let stage = &program.stages[i];
        let out_shape = &program.shapes[n];
        cur = match (stage, cur) {
            (Stage::Filter(p), Cur::Stream(items)) => {
                meter.tick(items.len())?;
                Cur::Stream(items.into_iter().filter(|it| eval(p, &it.row)).collect())
            }
            (Stage::Map(projs), Cur::Stream(items)) => {
                meter.tick(items.len())?;
                Cur::Stream(items.into_iter().map(|it| project(projs, it)).collect())
            }
            (Stage::Map(projs), Cur::Record(it)) => {
                meter.tick(1)?;
                Cur::Record(project(projs, it))
            }
            (Stage::SortBy { key, desc }, Cur::Stream(items)) => {
                meter.tick(items.len())?;
                let fused = match program.stages.get(i + 1) {
                    Some(Stage::Top(k)) => Some(*k),
                    _ => None,
                };
                if fused.is_some() {
                    meter.tick(items.len())?;
                    i += 1;
                }
                let order = sorted_indices(&items, key, *desc, fused);
                Cur::Stream(take_indices(items, &order))
            }
            (Stage::Top(k), Cur::Stream(mut items)) => {
                meter.tick(items.len())?;
                items.truncate(*k);
                Cur::Stream(items)
            }
            (Stage::Top(k), Cur::Column(mut vals)) => {
                meter.tick(vals.len())?;
                vals.truncate(*k);
                Cur::Column(vals)
            }
            (Stage::MinBy(key) | Stage::MaxBy(key), Cur::Stream(items)) => {
                meter.tick(items.len())?;
                let want = if matches!(stage, Stage::MinBy(_)) { Ordering::Less } else { Ordering::Greater };
                let mut best: Option<(usize, Value)> = None;
                for (j, it) in items.iter().enumerate() {
                    let c = cell(&it.row, key);
                    if c.is_null() {
                        continue;
                    }
                    let better = match &best {
                        None => true,
                        Some((_, b)) => cmp_cells(&c, &cell_of_value(b)) == Some(want),
                    };
                    if better {
                        best = Some((j, c.into_value()));
                    }
                }
                let Some((j, _)) = best else {
                    return Err(QueryError::EmptyInput { stage: n, op: stage.name().into() });
                };
                Cur::Record(items.into_iter().nth(j).expect("index in range"))
            }
            (Stage::Aggregate { op, path }, Cur::Stream(items)) => {
                meter.tick(items.len())?;
                let int = matches!(out_shape, Shape::Scalar(Ty::Int));
                let value = match path {
                    Some(p) => aggregate(*op, int, items.iter().map(|it| cell(&it.row, p)), items.len(), true),
                    None => aggregate(*op, int, std::iter::empty(), items.len(), false),
                }
                .ok_or_else(|| QueryError::EmptyInput { stage: n, op: format!("aggregate({})", op.as_str()) })?;
                let mut ids = Vec::new();
                items.iter().for_each(|it| it.ids.extend_into(&mut ids));
                Cur::Scalar(value, ids)
            }
            (Stage::Aggregate { op, .. }, Cur::Column(vals)) => {
                meter.tick(vals.len())?;
                let int = matches!(out_shape, Shape::Scalar(Ty::Int));
                let value = aggregate(*op, int, vals.iter().map(|(v, _)| cell_of_value(v)), vals.len(), true)
                    .ok_or_else(|| QueryError::EmptyInput { stage: n, op: format!("aggregate({})", op.as_str()) })?;
                let mut ids = Vec::new();
                vals.iter().for_each(|(_, i)| i.extend_into(&mut ids));
                Cur::Scalar(value, ids)
            }
            (Stage::Aggregate { op, path }, Cur::Grouped(groups)) => {
                meter.tick(groups.iter().map(|(_, g)| g.len()).sum())?;
                let int = agg_is_int(out_shape);
                let mut out = Vec::with_capacity(groups.len());
                for (key, rows) in groups {
                    let value = match path {
                        Some(p) => aggregate(*op, int, rows.iter().map(|it| cell(&it.row, p)), rows.len(), true),
                        None => aggregate(*op, int, std::iter::empty(), rows.len(), false),
                    }
                    .unwrap_or(Value::Null);
                    let mut ids = Vec::new();
                    rows.iter().for_each(|it| it.ids.extend_into(&mut ids));
                    let rec = BTreeMap::from([("key".to_string(), key), ("value".to_string(), value)]);
                    out.push(Item { row: Row::Val(Value::Record(rec)), ids: Ids::Many(ids) });
                }
                Cur::Stream(out)
            }
            (Stage::Get(p), Cur::Record(it)) => {
                meter.tick(1)?;
                match out_shape {
                    Shape::Stream(_) => {
                        let parent = it.ids.first().map_or(0, |id| id.row);
                        table = Some(p.names.last().expect("non-empty").clone());
                        let rows = list_rows(&it.row, p);
                        Cur::Stream(
                            rows.into_iter()
                                .enumerate()
                                .map(|(j, row)| Item { row, ids: Ids::One(RowId { row: parent, sub: Some(j) }) })
                                .collect(),
                        )
                    }
                    Shape::Record(_) => Cur::Record(Item { row: record_row(&it.row, p), ids: it.ids }),
                    _ => {
                        let mut ids = Vec::new();
                        it.ids.extend_into(&mut ids);
                        Cur::Scalar(cell(&it.row, p).into_value(), ids)
                    }
                }
            }
            (Stage::Get(p), Cur::Stream(items)) => {
                meter.tick(items.len())?;
                match out_shape {
                    Shape::Stream(_) => Cur::Stream(
                        items.into_iter().map(|it| Item { row: record_row(&it.row, p), ids: it.ids }).collect(),
                    ),
                    _ => Cur::Column(items.into_iter().map(|it| (cell(&it.row, p).into_value(), it.ids)).collect()),
                }
            }
            (Stage::GroupBy(p), Cur::Stream(items)) => {
                meter.tick(items.len())?;
                let mut index: HashMap<GroupKey, usize> = HashMap::new();
                let mut groups: Vec<(Value, Vec<Item>)> = Vec::new();
                for it in items {
                    let key = cell(&it.row, p).into_value();
                    let slot = *index.entry(group_key(&key)).or_insert_with(|| {
                        groups.push((key, Vec::new()));
                        groups.len() - 1
                    });
                    groups[slot].1.push(it);
                }
                Cur::Grouped(groups)
            }
            _ => unreachable!("shapes are checked before execution"),
        };
        i += 1;
    }

    let mut rows = Vec::new();
    let (value, len) = match cur {
        Cur::Stream(items) => {
            items.iter().for_each(|it| it.ids.extend_into(&mut rows));
            let len = items.len();
            (Value::List(items.iter().map(|it| row_value(&it.row)).collect()), len)
        }
        Cur::Record(it) => {
            it.ids.extend_into(&mut rows);
            (row_value(&it.row), 0)
        }
        Cur::Scalar(v, ids) => {
            rows = ids;
            (v, 0)
        }
        Cur::Column(vals) => {
            vals.iter().for_each(|(_, ids)| ids.extend_into(&mut rows));
            let len = vals.len();
            (Value::List(vals.into_iter().map(|(v, _)| v).collect()), len)
        }
        Cur::Grouped(groups) => {
            let len = groups.len();
            let mut out = Vec::with_capacity(len);
            for (key, items) in groups {
                items.iter().for_each(|it| it.ids.extend_into(&mut rows));
                let list = Value::List(items.iter().map(|it| row_value(&it.row)).collect());
                out.push(Value::Record(BTreeMap::from([("key".to_string(), key), ("rows".to_string(), list)])));
            }
            (Value::List(out), len)
        }
    };
    if len > budget.max_result_rows {
        return Err(QueryError::BudgetExceeded(format!("more than {} result rows", budget.max_result_rows)));
    }
    rows.sort_unstable();
    rows.dedup();
    Ok(QueryResult { value, provenance: Provenance { corner_mode: db.corner_mode.clone(), kind, table, rows } })
}

fn project<'a>(projs: &[super::ast::Projection], it: Item<'a>) -> Item<'a> {
    let mut m = BTreeMap::new();
    for p in projs {
        m.insert(p.output_name().to_string(), cell(&it.row, &p.path).into_value());
    }
    Item { row: Row::Val(Value::Record(m)), ids: it.ids }
}
