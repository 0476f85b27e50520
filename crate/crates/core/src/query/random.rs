// SPDX-License-Identifier: Apache-2.0

//! Random well-typed programs for differential testing. Literals are drawn
//! from values that occur in the database so filters are selective.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{ReportDb, ReportKind};

use super::oracle::materialize;
use super::schema::{self, Rec, SubTable, Ty};
use super::value::Value;

/// Reachable field of the current row type. `pool` names the original leaf
/// field whose observed values feed literals.
#[derive(Clone)]
struct Field {
    path: Vec<String>,
    ty: Ty,
    pool: String,
}

struct Pools(HashMap<String, Vec<Value>>);

impl Pools {
    fn collect(&mut self, name: &str, v: &Value) {
        match v {
            Value::Record(m) => m.iter().for_each(|(k, x)| self.collect(k, x)),
            Value::List(items) => items.iter().for_each(|x| self.collect(name, x)),
            Value::Null => {}
            scalar => {
                let pool = self.0.entry(name.to_string()).or_default();
                if pool.len() < 256 {
                    pool.push(scalar.clone());
                }
            }
        }
    }
}

fn fields(rec: &Rec, prefix: &[String], pools_from: Option<&HashMap<String, String>>) -> Vec<Field> {
    let mut out = Vec::new();
    for (name, ty) in rec.fields() {
        let mut path = prefix.to_vec();
        path.push(name.clone());
        let pool = pools_from.and_then(|m| m.get(name).cloned()).unwrap_or_else(|| name.clone());
        match ty {
            Ty::Record(r) => {
                out.push(Field { path: path.clone(), ty: ty.clone(), pool: pool.clone() });
                out.extend(fields(r, &path, None));
            }
            _ => out.push(Field { path, ty: ty.clone(), pool }),
        }
    }
    out
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    pools: Pools,
}

impl<R: Rng> Gen<'_, R> {
    fn literal(&mut self, f: &Field) -> Value {
        let pool = self.pools.0.get(&f.pool).filter(|p| !p.is_empty());
        let picked = pool.and_then(|p| p.choose(self.rng)).cloned();
        match (&f.ty, picked) {
            (Ty::Num, Some(Value::Num(x))) => {
                match self.rng.gen_range(0..4) {
                    0 => Value::Num(x + self.rng.gen_range(-5..=5) as f64 * 0.25),
                    1 => Value::Int(x.round() as i64),
                    _ => Value::Num(x),
                }
            }
            (Ty::Int, Some(Value::Int(i))) => {
                if self.rng.gen_bool(0.2) {
                    Value::Int(i + self.rng.gen_range(-2..=2))
                } else {
                    Value::Int(i)
                }
            }
            (Ty::Str, Some(Value::Str(s))) => Value::Str(s),
            (Ty::Bool, _) => Value::Bool(self.rng.gen()),
            (Ty::Int, _) => Value::Int(self.rng.gen_range(-10..1000)),
            (Ty::Num, _) => Value::Num(self.rng.gen_range(-100..400) as f64 / 4.0),
            _ => Value::Str("u_top".into()),
        }
    }

    fn string_pattern(&mut self, f: &Field, op: &str) -> String {
        let base = match self.literal(f) {
            Value::Str(s) => s,
            _ => String::new(),
        };
        let chars: Vec<char> = base.chars().collect();
        let n = chars.len();
        let cut = if n == 0 { 0 } else { self.rng.gen_range(0..=n) };
        match op {
            "prefix" => chars[..cut].iter().collect(),
            "suffix" => chars[cut..].iter().collect(),
            "contains" => {
                let start = self.rng.gen_range(0..=cut);
                chars[start..cut].iter().collect()
            }
            _ => {
                let mut p: String = chars[..cut].iter().collect();
                p.push('*');
                if cut < n && self.rng.gen_bool(0.5) {
                    p.push('?');
                    p.extend(chars[(cut + 1).min(n)..].iter().rev().take(3).collect::<Vec<_>>().into_iter().rev());
                }
                p
            }
        }
    }

    fn pred(&mut self, rec: &Rec, alias: Option<&HashMap<String, String>>, depth: u32) -> String {
        let all = fields(rec, &[], alias);
        let scalars: Vec<&Field> = all.iter().filter(|f| f.ty.is_scalar()).collect();
        let lists: Vec<(&Field, Rec)> = all
            .iter()
            .filter_map(|f| match &f.ty {
                Ty::List(inner) => match inner.as_ref() {
                    Ty::Record(r) => Some((f, r.clone())),
                    _ => None,
                },
                _ => None,
            })
            .collect();
        let roll = self.rng.gen_range(0..100);
        if depth < 2 && roll < 20 {
            let op = if self.rng.gen_bool(0.5) { "and" } else { "or" };
            let a = self.pred(rec, alias, depth + 1);
            let b = self.pred(rec, alias, depth + 1);
            return format!("({a} {op} {b})");
        }
        if depth < 2 && roll < 27 {
            return format!("not {}", self.pred(rec, alias, depth + 1));
        }
        if depth < 2 && roll < 35 && !lists.is_empty() {
            let (f, inner) = lists.choose(self.rng).expect("non-empty").clone();
            let q = if self.rng.gen_bool(0.5) { "any" } else { "all" };
            return format!("{q}({}, {})", f.path.join("."), self.pred(&inner, None, 2));
        }
        let Some(f) = scalars.choose(self.rng).copied().cloned() else {
            return "true = true".into();
        };
        let path = f.path.join(".");
        match (&f.ty, self.rng.gen_range(0..10)) {
            (_, 0) => format!("{path} is {}null", if self.rng.gen_bool(0.5) { "not " } else { "" }),
            (Ty::Str, 1..=4) => {
                let op = *["prefix", "suffix", "contains", "glob"].choose(self.rng).expect("non-empty");
                let pat = self.string_pattern(&f, op);
                format!("{path} {op} {}", Value::Str(pat))
            }
            (Ty::Int | Ty::Num | Ty::Str, 5) => {
                let k = self.rng.gen_range(0..4);
                let items: Vec<String> = (0..k).map(|_| self.literal(&f).to_string()).collect();
                format!("{path} in [{}]", items.join(", "))
            }
            (Ty::Bool, _) => format!("{path} {} {}", ["=", "!="].choose(self.rng).expect("non-empty"), self.literal(&f)),
            _ => {
                let same: Vec<&&Field> =
                    scalars.iter().filter(|g| g.path != f.path && (g.ty == f.ty || (g.ty.is_numeric() && f.ty.is_numeric()))).collect();
                let op = *["=", "!=", "<", "<=", ">", ">=", "==", "\u{2260}"].choose(self.rng).expect("non-empty");
                if !same.is_empty() && self.rng.gen_bool(0.15) {
                    let g = same.choose(self.rng).expect("non-empty");
                    format!("{path} {op} {}", g.path.join("."))
                } else if self.rng.gen_bool(0.1) {
                    format!("{} {op} {path}", self.literal(&f))
                } else {
                    format!("{path} {op} {}", self.literal(&f))
                }
            }
        }
    }
}

/// Returns the text of a random program that type-checks against `db`'s
/// kinds. Absent kinds are chosen occasionally to exercise `KindAbsent`.
pub fn random_program<R: Rng>(rng: &mut R, db: &ReportDb) -> String {
    let present: Vec<ReportKind> = db.kinds().collect();
    let kind = if present.is_empty() || rng.gen_bool(0.02) {
        *ReportKind::ALL.choose(rng).expect("non-empty")
    } else {
        *present.choose(rng).expect("non-empty")
    };
    let sub = match kind {
        ReportKind::Max | ReportKind::Min => match rng.gen_range(0..10) {
            0..=3 => Some(SubTable::DataStages),
            4 => Some(SubTable::ClockStages),
            _ => None,
        },
        ReportKind::XtalkMax | ReportKind::XtalkMin if rng.gen_bool(0.4) => Some(SubTable::Aggressors),
        _ => None,
    };
    let mut pools = Pools(HashMap::new());
    if let Ok(rows) = materialize(kind, sub, db) {
        for (v, _) in rows.iter().take(400) {
            pools.collect("", v);
        }
    }
    let mut g = Gen { rng, pools };
    let mut text = format!("from {kind}");
    if let Some(s) = sub {
        text.push('.');
        text.push_str(s.as_str());
    }
    let mut rec = schema::source_row(kind, sub);
    // Map aliases back to the leaf names their literal pools come from.
    let mut alias: Option<HashMap<String, String>> = None;

    let orderable = |rec: &Rec, alias: Option<&HashMap<String, String>>| -> Vec<Field> {
        fields(rec, &[], alias).into_iter().filter(|f| f.ty.is_orderable()).collect()
    };

    for _ in 0..g.rng.gen_range(0..=3) {
        match g.rng.gen_range(0..10) {
            0..=4 => {
                let p = g.pred(&rec, alias.as_ref(), 0);
                text.push_str(&format!(" | filter({p})"));
            }
            5 | 6 => {
                let keys = orderable(&rec, alias.as_ref());
                if let Some(k) = keys.choose(g.rng) {
                    let dir = *["", ", asc", ", desc"].choose(g.rng).expect("non-empty");
                    text.push_str(&format!(" | sort_by({}{dir})", k.path.join(".")));
                }
            }
            7 => text.push_str(&format!(" | top({})", g.rng.gen_range(0..8))),
            _ => {
                let all = fields(&rec, &[], alias.as_ref());
                let n = g.rng.gen_range(1..=3).min(all.len());
                let picks: Vec<Field> = all.choose_multiple(g.rng, n).cloned().collect();
                let mut out_fields = Vec::new();
                let mut names = HashMap::new();
                let mut parts = Vec::new();
                for (i, f) in picks.iter().enumerate() {
                    let name = format!("f{i}");
                    parts.push(format!("{} as {name}", f.path.join(".")));
                    names.insert(name.clone(), f.pool.clone());
                    out_fields.push((name, f.ty.clone()));
                }
                text.push_str(&format!(" | map({})", parts.join(", ")));
                rec = Rec::new(out_fields);
                alias = Some(names);
            }
        }
    }

    let scalars: Vec<Field> = fields(&rec, &[], alias.as_ref()).into_iter().filter(|f| f.ty.is_scalar()).collect();
    let numeric: Vec<&Field> = scalars.iter().filter(|f| f.ty.is_numeric()).collect();
    let keys = orderable(&rec, alias.as_ref());
    match g.rng.gen_range(0..10) {
        0 => {}
        1 | 2 if !keys.is_empty() => {
            let k = keys.choose(g.rng).expect("non-empty");
            let by = if g.rng.gen_bool(0.5) { "min_by" } else { "max_by" };
            text.push_str(&format!(" | {by}({})", k.path.join(".")));
            let all = fields(&rec, &[], alias.as_ref());
            if let Some(f) = all.choose(g.rng) {
                if g.rng.gen_bool(0.7) {
                    text.push_str(&format!(" | get({})", f.path.join(".")));
                    if let Ty::List(inner) = &f.ty {
                        if let Ty::Record(r) = inner.as_ref() {
                            let sub_keys = orderable(r, None);
                            if let Some(k) = sub_keys.choose(g.rng) {
                                text.push_str(&format!(" | max_by({})", k.path.join(".")));
                            }
                        }
                    }
                }
            }
        }
        3 | 4 => {
            let op = *["min", "max", "avg", "sum", "count"].choose(g.rng).expect("non-empty");
            match (op, numeric.choose(g.rng)) {
                ("count", _) if g.rng.gen_bool(0.5) => text.push_str(" | aggregate(count)"),
                ("count", _) => {
                    if let Some(f) = scalars.choose(g.rng) {
                        text.push_str(&format!(" | aggregate(count, {})", f.path.join(".")));
                    }
                }
                (_, Some(f)) => text.push_str(&format!(" | aggregate({op}, {})", f.path.join("."))),
                _ => text.push_str(" | aggregate(count)"),
            }
        }
        5 | 6 if !scalars.is_empty() => {
            let f = scalars.choose(g.rng).expect("non-empty");
            text.push_str(&format!(" | get({})", f.path.join(".")));
            match g.rng.gen_range(0..4) {
                0 => text.push_str(&format!(" | top({})", g.rng.gen_range(0..5))),
                1 if f.ty.is_numeric() => {
                    let op = *["min", "max", "avg", "sum", "count"].choose(g.rng).expect("non-empty");
                    text.push_str(&format!(" | aggregate({op})"));
                }
                _ => {}
            }
        }
        7 | 8 if !scalars.is_empty() => {
            let k = scalars.choose(g.rng).expect("non-empty");
            text.push_str(&format!(" | group_by({})", k.path.join(".")));
            if g.rng.gen_bool(0.8) {
                let op = *["min", "max", "avg", "sum", "count"].choose(g.rng).expect("non-empty");
                match (op, numeric.choose(g.rng)) {
                    ("count", _) | (_, None) => text.push_str(" | aggregate(count)"),
                    (_, Some(f)) => text.push_str(&format!(" | aggregate({op}, {})", f.path.join("."))),
                }
                if g.rng.gen_bool(0.5) {
                    text.push_str(" | sort_by(value, desc) | top(3)");
                }
            }
        }
        _ => {
            if let Some(k) = keys.choose(g.rng) {
                text.push_str(&format!(" | sort_by({}, desc) | top({})", k.path.join("."), g.rng.gen_range(0..6)));
            }
        }
    }
    text
}
