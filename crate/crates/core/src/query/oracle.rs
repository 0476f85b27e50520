// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference interpreter. Every row is materialized through
//! serde as a [`Value`] record and looked up by field name; each stage
//! consumes and produces a complete list. No fusion, no heaps, no hashing.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use regex::Regex;

use crate::model::{ReportDb, ReportKind};

use super::ast::{AggOp, CmpOp, FieldPath, Operand, Pred, QueryProgram, Shape, Stage, StrOp};
use super::schema::{SubTable, Ty};
use super::value::{compare, Value};
use super::{Provenance, QueryError, QueryResult, RowId, SandboxBudget};

pub(crate) type Rows = Vec<(Value, Vec<RowId>)>;

/// Source rows of `from <kind>[.<sub>]` as JSON-derived records.
pub(crate) fn materialize(kind: ReportKind, sub: Option<SubTable>, db: &ReportDb) -> Result<Rows, QueryError> {
    let payload = db.lookup(kind).map_err(|_| QueryError::KindAbsent(kind))?;
    let json = serde_json::to_value(payload).expect("payloads serialize");
    let rows = json.get("rows").cloned().unwrap_or(serde_json::Value::Null);
    let mut out = Vec::new();
    match rows {
        serde_json::Value::Array(items) => {
            for (i, item) in items.into_iter().enumerate() {
                let mut v = Value::from_json(item);
                if let Value::Record(m) = &mut v {
                    m.remove("unusual");
                }
                match sub {
                    None => out.push((v, vec![RowId::top(i)])),
                    Some(sub) => {
                        let (list_name, extra): (&str, Vec<&str>) = match sub {
                            SubTable::DataStages => ("data_stages", vec![]),
                            SubTable::ClockStages => ("clock_stages", vec![]),
                            SubTable::Aggressors => ("aggressors", vec!["victim"]),
                        };
                        let path_id = v
                            .field("path_id")
                            .or_else(|| v.field("summary").and_then(|s| s.field("path_id")))
                            .cloned()
                            .unwrap_or(Value::Null);
                        let Some(Value::List(elems)) = v.field(list_name).cloned() else { continue };
                        for (j, e) in elems.into_iter().enumerate() {
                            let Value::Record(mut m) = e else { continue };
                            m.insert("path_id".into(), path_id.clone());
                            for name in &extra {
                                m.insert(name.to_string(), v.field(name).cloned().unwrap_or(Value::Null));
                            }
                            out.push((Value::Record(m), vec![RowId { row: i, sub: Some(j) }]));
                        }
                    }
                }
            }
        }
        serde_json::Value::Object(map) => {
            for (i, (clock, mhz)) in map.into_iter().enumerate() {
                let rec = BTreeMap::from([("clock".to_string(), Value::Str(clock)), ("mhz".to_string(), Value::from_json(mhz))]);
                out.push((Value::Record(rec), vec![RowId::top(i)]));
            }
        }
        _ => {}
    }
    Ok(out)
}

fn lookup(v: &Value, path: &FieldPath) -> Value {
    let mut cur = v;
    for n in &path.names {
        match cur.field(n) {
            Some(x) => cur = x,
            None => return Value::Null,
        }
    }
    cur.clone()
}

pub(crate) fn glob_regex(pattern: &str) -> Regex {
    let mut re = String::from("(?s)^");
    for c in pattern.chars() {
        match c {
            '*' => re.push_str(".*"),
            '?' => re.push('.'),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).expect("escaped pattern compiles")
}

fn eval(pred: &Pred, row: &Value) -> bool {
    match pred {
        Pred::And(a, b) => {
            let l = eval(a, row);
            let r = eval(b, row);
            l && r
        }
        Pred::Or(a, b) => {
            let l = eval(a, row);
            let r = eval(b, row);
            l || r
        }
        Pred::Not(p) => !eval(p, row),
        Pred::Cmp { lhs, op, rhs } => {
            let get = |o: &Operand| match o {
                Operand::Path(p) => lookup(row, p),
                Operand::Lit(v) => v.clone(),
            };
            match compare(&get(lhs), &get(rhs)) {
                None => false,
                Some(o) => match op {
                    CmpOp::Eq => o.is_eq(),
                    CmpOp::Ne => o.is_ne(),
                    CmpOp::Lt => o.is_lt(),
                    CmpOp::Le => o.is_le(),
                    CmpOp::Gt => o.is_gt(),
                    CmpOp::Ge => o.is_ge(),
                },
            }
        }
        Pred::In { path, list } => {
            let v = lookup(row, path);
            let mut hit = false;
            for item in list {
                if compare(&v, item) == Some(Ordering::Equal) {
                    hit = true;
                }
            }
            hit
        }
        Pred::IsNull { path, negated } => lookup(row, path).is_null() != *negated,
        Pred::Str { path, op, pattern } => match lookup(row, path) {
            Value::Str(s) => match op {
                StrOp::Prefix => s.len() >= pattern.len() && s.as_bytes()[..pattern.len()] == *pattern.as_bytes(),
                StrOp::Suffix => s.len() >= pattern.len() && s.as_bytes()[s.len() - pattern.len()..] == *pattern.as_bytes(),
                StrOp::Contains => Regex::new(&regex::escape(pattern)).expect("escaped").is_match(&s),
                StrOp::Glob => glob_regex(pattern).is_match(&s),
            },
            _ => false,
        },
        Pred::Quant { all, path, pred } => {
            let Value::List(items) = lookup(row, path) else { return *all };
            let results: Vec<bool> = items.iter().map(|i| eval(pred, i)).collect();
            if *all {
                results.iter().all(|b| *b)
            } else {
                results.iter().any(|b| *b)
            }
        }
    }
}

fn aggregate(op: AggOp, int: bool, values: Vec<Value>, counted: bool, n_rows: usize) -> Option<Value> {
    if op == AggOp::Count && !counted {
        return Some(Value::Int(n_rows as i64));
    }
    let present: Vec<Value> = values.into_iter().filter(|v| !v.is_null()).collect();
    match op {
        AggOp::Count => Some(Value::Int(present.len() as i64)),
        AggOp::Sum if int => Some(Value::Int(present.iter().fold(0i64, |acc, v| match v {
            Value::Int(i) => acc.saturating_add(*i),
            _ => acc,
        }))),
        AggOp::Sum => Some(Value::Num(present.iter().fold(0.0, |acc, v| acc + v.as_f64().unwrap_or(0.0)))),
        AggOp::Avg => {
            if present.is_empty() {
                return None;
            }
            let total = present.iter().fold(0.0, |acc, v| acc + v.as_f64().unwrap_or(0.0));
            Some(Value::Num(total / present.len() as f64))
        }
        AggOp::Min | AggOp::Max => {
            let mut best: Option<Value> = None;
            for v in present {
                let replace = match &best {
                    None => true,
                    Some(b) => match compare(&v, b) {
                        Some(Ordering::Less) => op == AggOp::Min,
                        Some(Ordering::Greater) => op == AggOp::Max,
                        _ => false,
                    },
                };
                if replace {
                    best = Some(v);
                }
            }
            best
        }
    }
}

enum State {
    Stream(Rows),
    Record(Value, Vec<RowId>),
    Scalar(Value, Vec<RowId>),
    Column(Rows),
    Grouped(Vec<(Value, Rows)>),
}

pub(crate) fn execute(program: &QueryProgram, db: &ReportDb, budget: &SandboxBudget) -> Result<QueryResult, QueryError> {
    let kind = program.source.kind;
    let mut steps: u64 = 0;
    let mut spend = |n: usize| -> Result<(), QueryError> {
        steps += n as u64;
        if steps > budget.max_steps {
            Err(QueryError::BudgetExceeded(format!("more than {} steps", budget.max_steps)))
        } else {
            Ok(())
        }
    };
    let source = materialize(kind, program.source.sub, db)?;
    spend(source.len())?;
    let mut table = program.source.sub.map(|s| s.as_str().to_string());
    let mut state = State::Stream(source);

    for (i, stage) in program.stages.iter().enumerate() {
        let n = i + 1;
        let shape = &program.shapes[n];
        let empty = || QueryError::EmptyInput { stage: n, op: stage.name().to_string() };
        state = match (stage, state) {
            (Stage::Filter(p), State::Stream(rows)) => {
                spend(rows.len())?;
                State::Stream(rows.into_iter().filter(|(v, _)| eval(p, v)).collect())
            }
            (Stage::Map(projs), State::Stream(rows)) => {
                spend(rows.len())?;
                let mut out = Vec::new();
                for (v, ids) in rows {
                    let rec = projs.iter().map(|p| (p.output_name().to_string(), lookup(&v, &p.path))).collect();
                    out.push((Value::Record(rec), ids));
                }
                State::Stream(out)
            }
            (Stage::Map(projs), State::Record(v, ids)) => {
                spend(1)?;
                let rec = projs.iter().map(|p| (p.output_name().to_string(), lookup(&v, &p.path))).collect();
                State::Record(Value::Record(rec), ids)
            }
            (Stage::SortBy { key, desc }, State::Stream(rows)) => {
                spend(rows.len())?;
                let mut keyed: Vec<(Value, (Value, Vec<RowId>))> = rows.into_iter().map(|r| (lookup(&r.0, key), r)).collect();
                keyed.sort_by(|a, b| match (a.0.is_null(), b.0.is_null()) {
                    (true, true) => Ordering::Equal,
                    (true, false) => Ordering::Greater,
                    (false, true) => Ordering::Less,
                    (false, false) => {
                        let o = compare(&a.0, &b.0).unwrap_or(Ordering::Equal);
                        if *desc {
                            o.reverse()
                        } else {
                            o
                        }
                    }
                });
                State::Stream(keyed.into_iter().map(|(_, r)| r).collect())
            }
            (Stage::Top(k), State::Stream(rows)) => {
                spend(rows.len())?;
                State::Stream(rows.into_iter().take(*k).collect())
            }
            (Stage::Top(k), State::Column(rows)) => {
                spend(rows.len())?;
                State::Column(rows.into_iter().take(*k).collect())
            }
            (Stage::MinBy(key) | Stage::MaxBy(key), State::Stream(rows)) => {
                spend(rows.len())?;
                let is_min = matches!(stage, Stage::MinBy(_));
                let mut best: Option<(Value, Value, Vec<RowId>)> = None;
                for (v, ids) in rows {
                    let k = lookup(&v, key);
                    if k.is_null() {
                        continue;
                    }
                    let replace = match &best {
                        None => true,
                        Some((bk, _, _)) => {
                            let o = compare(&k, bk);
                            if is_min {
                                o == Some(Ordering::Less)
                            } else {
                                o == Some(Ordering::Greater)
                            }
                        }
                    };
                    if replace {
                        best = Some((k, v, ids));
                    }
                }
                let (_, v, ids) = best.ok_or_else(empty)?;
                State::Record(v, ids)
            }
            (Stage::Aggregate { op, path }, State::Stream(rows)) => {
                spend(rows.len())?;
                let int = *shape == Shape::Scalar(Ty::Int);
                let n_rows = rows.len();
                let values: Vec<Value> = match path {
                    Some(p) => rows.iter().map(|(v, _)| lookup(v, p)).collect(),
                    None => Vec::new(),
                };
                let value = aggregate(*op, int, values, path.is_some(), n_rows)
                    .ok_or_else(|| QueryError::EmptyInput { stage: n, op: format!("aggregate({})", op.as_str()) })?;
                State::Scalar(value, rows.into_iter().flat_map(|(_, ids)| ids).collect())
            }
            (Stage::Aggregate { op, .. }, State::Column(rows)) => {
                spend(rows.len())?;
                let int = *shape == Shape::Scalar(Ty::Int);
                let values: Vec<Value> = rows.iter().map(|(v, _)| v.clone()).collect();
                let value = aggregate(*op, int, values, true, rows.len())
                    .ok_or_else(|| QueryError::EmptyInput { stage: n, op: format!("aggregate({})", op.as_str()) })?;
                State::Scalar(value, rows.into_iter().flat_map(|(_, ids)| ids).collect())
            }
            (Stage::Aggregate { op, path }, State::Grouped(groups)) => {
                spend(groups.iter().map(|(_, g)| g.len()).sum())?;
                let int = match shape {
                    Shape::Stream(r) => r.fields().iter().any(|(name, t)| name == "value" && *t == Ty::Int),
                    _ => false,
                };
                let mut out = Vec::new();
                for (key, rows) in groups {
                    let values: Vec<Value> = match path {
                        Some(p) => rows.iter().map(|(v, _)| lookup(v, p)).collect(),
                        None => Vec::new(),
                    };
                    let value = aggregate(*op, int, values, path.is_some(), rows.len()).unwrap_or(Value::Null);
                    let rec = BTreeMap::from([("key".to_string(), key), ("value".to_string(), value)]);
                    out.push((Value::Record(rec), rows.into_iter().flat_map(|(_, ids)| ids).collect()));
                }
                State::Stream(out)
            }
            (Stage::Get(p), State::Record(v, ids)) => {
                spend(1)?;
                let field = lookup(&v, p);
                match shape {
                    Shape::Stream(_) => {
                        table = p.names.last().cloned();
                        let parent = ids.first().map_or(0, |id| id.row);
                        let Value::List(items) = field else { unreachable!("checked list of records") };
                        State::Stream(
                            items
                                .into_iter()
                                .enumerate()
                                .map(|(j, e)| (e, vec![RowId { row: parent, sub: Some(j) }]))
                                .collect(),
                        )
                    }
                    Shape::Record(_) => State::Record(field, ids),
                    _ => State::Scalar(field, ids),
                }
            }
            (Stage::Get(p), State::Stream(rows)) => {
                spend(rows.len())?;
                let out: Rows = rows.into_iter().map(|(v, ids)| (lookup(&v, p), ids)).collect();
                match shape {
                    Shape::Stream(_) => State::Stream(out),
                    _ => State::Column(out),
                }
            }
            (Stage::GroupBy(p), State::Stream(rows)) => {
                spend(rows.len())?;
                let mut groups: Vec<(Value, Rows)> = Vec::new();
                for (v, ids) in rows {
                    let key = lookup(&v, p);
                    let pos = groups.iter().position(|(k, _)| {
                        (k.is_null() && key.is_null()) || compare(k, &key) == Some(Ordering::Equal)
                    });
                    match pos {
                        Some(g) => groups[g].1.push((v, ids)),
                        None => groups.push((key, vec![(v, ids)])),
                    }
                }
                State::Grouped(groups)
            }
            _ => unreachable!("shapes are checked before execution"),
        };
    }

    let (value, mut rows, len) = match state {
        State::Stream(rows) | State::Column(rows) => {
            let len = rows.len();
            let ids = rows.iter().flat_map(|(_, ids)| ids.clone()).collect();
            (Value::List(rows.into_iter().map(|(v, _)| v).collect()), ids, len)
        }
        State::Record(v, ids) | State::Scalar(v, ids) => (v, ids, 0),
        State::Grouped(groups) => {
            let len = groups.len();
            let mut ids = Vec::new();
            let mut out = Vec::new();
            for (key, rows) in groups {
                ids.extend(rows.iter().flat_map(|(_, i)| i.clone()));
                let list = Value::List(rows.into_iter().map(|(v, _)| v).collect());
                out.push(Value::Record(BTreeMap::from([("key".to_string(), key), ("rows".to_string(), list)])));
            }
            (Value::List(out), ids, len)
        }
    };
    if len > budget.max_result_rows {
        return Err(QueryError::BudgetExceeded(format!("more than {} result rows", budget.max_result_rows)));
    }
    rows.sort();
    rows.dedup();
    Ok(QueryResult { value, provenance: Provenance { corner_mode: db.corner_mode.clone(), kind, table, rows } })
}
