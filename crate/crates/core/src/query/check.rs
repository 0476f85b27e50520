// SPDX-License-Identifier: Apache-2.0

//! Static shape and type checking. Resolves every field path to accessor
//! indices so that the executor never looks fields up by name on model rows.

use super::ast::{AggOp, CmpOp, FieldPath, Operand, Pred, QueryProgram, Shape, Stage};
use super::parse::Parsed;
use super::schema::{self, Rec, Ty};
use super::value::Value;
use super::QueryError;

fn type_err(stage: usize, expected: impl Into<String>, found: impl Into<String>) -> QueryError {
    QueryError::Type { stage, expected: expected.into(), found: found.into() }
}

fn resolve(stage: usize, rec: &Rec, path: &mut FieldPath) -> Result<Ty, QueryError> {
    let mut cur = rec.clone();
    let mut index = Vec::with_capacity(path.names.len());
    let mut ty = None;
    for (i, name) in path.names.iter().enumerate() {
        let (idx, t) = cur.lookup(name).ok_or_else(|| {
            type_err(
                stage,
                format!("a field of {}", Ty::Record(cur.clone())),
                format!("'{}'", path.names[..=i].join(".")),
            )
        })?;
        index.push(idx);
        let t = t.clone();
        if i + 1 < path.names.len() {
            match &t {
                Ty::Record(r) => cur = r.clone(),
                other => {
                    return Err(type_err(stage, "a record to select fields from", format!("{other} at '{name}'")));
                }
            }
        }
        ty = Some(t);
    }
    path.index = index;
    ty.ok_or_else(|| type_err(stage, "a field path", "empty path"))
}

fn lit_ty(v: &Value) -> Option<Ty> {
    match v {
        Value::Bool(_) => Some(Ty::Bool),
        Value::Int(_) => Some(Ty::Int),
        Value::Num(_) => Some(Ty::Num),
        Value::Str(_) => Some(Ty::Str),
        _ => None,
    }
}

fn compatible(a: &Ty, b: &Ty) -> bool {
    (a.is_numeric() && b.is_numeric()) || (a == b && a.is_scalar())
}

fn check_pred(stage: usize, rec: &Rec, pred: &mut Pred) -> Result<(), QueryError> {
    match pred {
        Pred::And(a, b) | Pred::Or(a, b) => {
            check_pred(stage, rec, a)?;
            check_pred(stage, rec, b)
        }
        Pred::Not(p) => check_pred(stage, rec, p),
        Pred::Cmp { lhs, op, rhs } => {
            let operand_ty = |o: &mut Operand| -> Result<Ty, QueryError> {
                match o {
                    Operand::Path(p) => {
                        let t = resolve(stage, rec, p)?;
                        if t.is_scalar() {
                            Ok(t)
                        } else {
                            Err(type_err(stage, "a scalar operand", format!("{t} at '{p}'")))
                        }
                    }
                    Operand::Lit(v) => lit_ty(v).ok_or_else(|| type_err(stage, "a non-null literal (use 'is null')", "null")),
                }
            };
            let (a, b) = (operand_ty(lhs)?, operand_ty(rhs)?);
            if !compatible(&a, &b) {
                return Err(type_err(stage, format!("an operand comparable with {a}"), b.to_string()));
            }
            if a == Ty::Bool && !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                return Err(type_err(stage, "'=' or '!=' for bool", format!("'{}'", op.as_str())));
            }
            Ok(())
        }
        Pred::In { path, list } => {
            let t = resolve(stage, rec, path)?;
            if !t.is_scalar() {
                return Err(type_err(stage, "a scalar field before 'in'", t.to_string()));
            }
            for v in list.iter() {
                let lt = lit_ty(v).ok_or_else(|| type_err(stage, "non-null list items", "null"))?;
                if !compatible(&t, &lt) {
                    return Err(type_err(stage, format!("list items comparable with {t}"), lt.to_string()));
                }
            }
            Ok(())
        }
        Pred::IsNull { path, .. } => resolve(stage, rec, path).map(|_| ()),
        Pred::Str { path, .. } => match resolve(stage, rec, path)? {
            Ty::Str => Ok(()),
            t => Err(type_err(stage, "a str field for string matching", t.to_string())),
        },
        Pred::Quant { path, pred, .. } => match resolve(stage, rec, path)? {
            Ty::List(inner) => match *inner {
                Ty::Record(er) => check_pred(stage, &er, pred),
                t => Err(type_err(stage, "a list of records", format!("list<{t}>"))),
            },
            t => Err(type_err(stage, "a list field for any/all", t.to_string())),
        },
    }
}

fn agg_ty(stage: usize, op: AggOp, t: &Ty) -> Result<Ty, QueryError> {
    match op {
        AggOp::Count => Ok(Ty::Int),
        _ if !t.is_numeric() => Err(type_err(stage, format!("a numeric field for {}", op.as_str()), t.to_string())),
        AggOp::Avg => Ok(Ty::Num),
        _ => Ok(t.clone()),
    }
}

fn stream_agg(stage: usize, rec: &Rec, op: AggOp, path: &mut Option<FieldPath>) -> Result<Ty, QueryError> {
    match (op, path) {
        (AggOp::Count, None) => Ok(Ty::Int),
        (_, None) => Err(type_err(stage, format!("aggregate({}, <field>)", op.as_str()), "no field")),
        (_, Some(p)) => {
            let t = resolve(stage, rec, p)?;
            if op == AggOp::Count && !t.is_scalar() {
                return Err(type_err(stage, "a scalar field to count", t.to_string()));
            }
            agg_ty(stage, op, &t)
        }
    }
}

fn orderable(stage: usize, rec: &Rec, path: &mut FieldPath) -> Result<(), QueryError> {
    let t = resolve(stage, rec, path)?;
    if t.is_orderable() {
        Ok(())
    } else {
        Err(type_err(stage, "an int, num or str key", format!("{t} at '{path}'")))
    }
}

pub(crate) fn check(parsed: Parsed) -> Result<QueryProgram, QueryError> {
    let Parsed { source, mut stages } = parsed;
    let mut shapes = vec![Shape::Stream(schema::source_row(source.kind, source.sub))];
    for (i, stage) in stages.iter_mut().enumerate() {
        let n = i + 1;
        let shape = shapes.last().expect("non-empty").clone();
        let sname = stage.name();
        let mismatch = |expected: &str| type_err(n, format!("{expected} input for {sname}"), shape.to_string());
        let next = match (stage, &shape) {
            (Stage::Filter(p), Shape::Stream(r)) => {
                check_pred(n, r, p)?;
                Shape::Stream(r.clone())
            }
            (Stage::Map(projs), Shape::Stream(r) | Shape::Record(r)) => {
                let mut fields: Vec<(String, Ty)> = Vec::new();
                for p in projs.iter_mut() {
                    let t = resolve(n, r, &mut p.path)?;
                    let name = p.output_name().to_string();
                    if fields.iter().any(|(f, _)| *f == name) {
                        return Err(type_err(n, "distinct output names (use 'as')", format!("duplicate '{name}'")));
                    }
                    fields.push((name, t));
                }
                let rec = Rec::new(fields);
                if matches!(shape, Shape::Stream(_)) {
                    Shape::Stream(rec)
                } else {
                    Shape::Record(rec)
                }
            }
            (Stage::SortBy { key, .. }, Shape::Stream(r)) => {
                orderable(n, r, key)?;
                Shape::Stream(r.clone())
            }
            (Stage::Top(_), Shape::Stream(_) | Shape::Column(_)) => shape.clone(),
            (Stage::MinBy(p) | Stage::MaxBy(p), Shape::Stream(r)) => {
                orderable(n, r, p)?;
                Shape::Record(r.clone())
            }
            (Stage::Aggregate { op, path }, Shape::Stream(r)) => Shape::Scalar(stream_agg(n, r, *op, path)?),
            (Stage::Aggregate { op, path }, Shape::Grouped { key, row }) => {
                let t = stream_agg(n, row, *op, path)?;
                Shape::Stream(Rec::new(vec![("key".into(), key.clone()), ("value".into(), t)]))
            }
            (Stage::Aggregate { op, path: None }, Shape::Column(t)) => Shape::Scalar(agg_ty(n, *op, t)?),
            (Stage::Aggregate { path: Some(_), .. }, Shape::Column(_)) => {
                return Err(type_err(n, "aggregate(<op>) without a field on a column", "a field"));
            }
            (Stage::Get(p), Shape::Record(r)) => match resolve(n, r, p)? {
                Ty::List(inner) => match *inner {
                    Ty::Record(er) => Shape::Stream(er),
                    t => Shape::Scalar(Ty::List(Box::new(t))),
                },
                Ty::Record(er) => Shape::Record(er),
                t => Shape::Scalar(t),
            },
            (Stage::Get(p), Shape::Stream(r)) => match resolve(n, r, p)? {
                Ty::Record(er) => Shape::Stream(er),
                t if t.is_scalar() => Shape::Column(t),
                t => return Err(type_err(n, "a scalar or record field on a stream", t.to_string())),
            },
            (Stage::GroupBy(p), Shape::Stream(r)) => {
                let key = resolve(n, r, p)?;
                if !key.is_scalar() {
                    return Err(type_err(n, "a scalar group key", key.to_string()));
                }
                Shape::Grouped { key, row: r.clone() }
            }
            (Stage::Filter(_) | Stage::SortBy { .. } | Stage::MinBy(_) | Stage::MaxBy(_) | Stage::GroupBy(_), _) => {
                return Err(mismatch("stream"));
            }
            (Stage::Map(_), _) => return Err(mismatch("stream or record")),
            (Stage::Top(_), _) => return Err(mismatch("stream or column")),
            (Stage::Aggregate { .. }, _) => return Err(mismatch("stream, column or grouped")),
            (Stage::Get(_), _) => return Err(mismatch("stream or record")),
        };
        shapes.push(next);
    }
    Ok(QueryProgram { source, stages, shapes })
}
