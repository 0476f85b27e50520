// SPDX-License-Identifier: Apache-2.0

//! Lexer and recursive-descent parser. Produces an untyped pipeline; the
//! type checker resolves field paths and shapes afterwards.

use crate::model::ReportKind;

use super::ast::{AggOp, CmpOp, FieldPath, Operand, Pred, Projection, Source, Stage, StrOp};
use super::schema::SubTable;
use super::value::Value;
use super::QueryError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Lit(Value),
    Pipe,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Op(CmpOp),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Str(_) => "string".into(),
            Tok::Lit(_) => "number".into(),
            Tok::Pipe => "'|'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Comma => "','".into(),
            Tok::Dot => "'.'".into(),
            Tok::Op(op) => format!("'{}'", op.as_str()),
            Tok::End => "end of input".into(),
        }
    }
}

fn syntax(position: usize, expected: &[&str]) -> QueryError {
    QueryError::Syntax { position, expected: expected.iter().map(|s| s.to_string()).collect() }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            b'|' => Some(Tok::Pipe),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'[' => Some(Tok::LBracket),
            b']' => Some(Tok::RBracket),
            b',' => Some(Tok::Comma),
            b'.' => Some(Tok::Dot),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, start));
            i += 1;
            continue;
        }
        let rest = &text[i..];
        let ops: [(&str, CmpOp); 10] = [
            ("==", CmpOp::Eq),
            ("!=", CmpOp::Ne),
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("\u{2260}", CmpOp::Ne),
            ("\u{2264}", CmpOp::Le),
            ("\u{2265}", CmpOp::Ge),
            ("=", CmpOp::Eq),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
        ];
        if let Some((s, op)) = ops.iter().find(|(s, _)| rest.starts_with(s)) {
            out.push((Tok::Op(*op), start));
            i += s.len();
            continue;
        }
        if c == b'"' {
            let mut s = String::new();
            let mut chars = rest[1..].char_indices();
            let mut closed = false;
            while let Some((j, ch)) = chars.next() {
                match ch {
                    '"' => {
                        i += 1 + j + 1;
                        closed = true;
                        break;
                    }
                    '\\' => match chars.next() {
                        Some((_, 'n')) => s.push('\n'),
                        Some((_, 't')) => s.push('\t'),
                        Some((_, e @ ('"' | '\\'))) => s.push(e),
                        Some((k, _)) => return Err(syntax(i + 1 + k, &["escape \\\" \\\\ \\n \\t"])),
                        None => return Err(syntax(text.len(), &["'\"'"])),
                    },
                    ch => s.push(ch),
                }
            }
            if !closed {
                return Err(syntax(text.len(), &["'\"'"]));
            }
            out.push((Tok::Str(s), start));
            continue;
        }
        if c.is_ascii_digit() || (c == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let mut float = false;
            if j + 1 < bytes.len() && bytes[j] == b'.' && bytes[j + 1].is_ascii_digit() {
                float = true;
                j += 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                let mut k = j + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    float = true;
                    j = k;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
            }
            let lit = &text[i..j];
            let v = if float {
                lit.parse::<f64>().ok().filter(|x| x.is_finite()).map(Value::Num)
            } else {
                lit.parse::<i64>().ok().map(Value::Int)
            };
            out.push((Tok::Lit(v.ok_or_else(|| syntax(start, &["number in range"]))?), start));
            i = j;
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            out.push((Tok::Ident(text[i..j].to_string()), start));
            i = j;
            continue;
        }
        return Err(syntax(start, &["token"]));
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

pub(crate) struct Parsed {
    pub source: Source,
    pub stages: Vec<Stage>,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

const STAGES: [&str; 9] = ["filter", "map", "sort_by", "top", "min_by", "max_by", "aggregate", "get", "group_by"];
const RESERVED: [&str; 14] =
    ["and", "or", "not", "in", "is", "null", "true", "false", "any", "all", "prefix", "suffix", "contains", "glob"];

pub(crate) fn parse(text: &str) -> Result<Parsed, QueryError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let source = p.source()?;
    let mut stages = Vec::new();
    loop {
        match p.peek() {
            Tok::End => break,
            Tok::Pipe => {
                p.bump();
                stages.push(p.stage()?);
            }
            _ => return Err(p.error(&["'|'", "end of input"])),
        }
    }
    Ok(Parsed { source, stages })
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].0
    }

    fn here(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> QueryError {
        syntax(self.here(), expected)
    }

    fn expect(&mut self, tok: Tok) -> Result<(), QueryError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&[&tok.describe()]))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<String, QueryError> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(&[expected])),
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn source(&mut self) -> Result<Source, QueryError> {
        if !self.keyword("from") {
            return Err(self.error(&["'from'"]));
        }
        self.bump();
        let at = self.here();
        let name = self.ident("report kind")?;
        let kind: ReportKind = name.parse().map_err(|_| syntax(at, &ReportKind::ALL.map(|k| k.as_str())))?;
        let sub = if *self.peek() == Tok::Dot {
            self.bump();
            let at = self.here();
            let name = self.ident("sub-table")?;
            let sub = SubTable::parse(&name)
                .filter(|s| s.valid_for(kind))
                .ok_or_else(|| {
                    let options: &[&str] = if kind.is_path_report() {
                        &["data_stages", "clock_stages"]
                    } else if kind.is_xtalk() {
                        &["aggressors"]
                    } else {
                        &["'|'", "end of input"]
                    };
                    syntax(at, options)
                })?;
            Some(sub)
        } else {
            None
        };
        Ok(Source { kind, sub })
    }

    fn stage(&mut self) -> Result<Stage, QueryError> {
        let at = self.here();
        let name = match self.peek() {
            Tok::Ident(s) if STAGES.contains(&s.as_str()) => s.clone(),
            _ => return Err(syntax(at, &STAGES)),
        };
        self.bump();
        self.expect(Tok::LParen)?;
        let stage = match name.as_str() {
            "filter" => Stage::Filter(self.pred()?),
            "map" => {
                let mut projs = vec![self.projection()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    projs.push(self.projection()?);
                }
                Stage::Map(projs)
            }
            "sort_by" => {
                let key = self.path()?;
                let mut desc = false;
                if *self.peek() == Tok::Comma {
                    self.bump();
                    let at = self.here();
                    match self.ident("'asc' or 'desc'")?.as_str() {
                        "asc" => {}
                        "desc" => desc = true,
                        _ => return Err(syntax(at, &["'asc'", "'desc'"])),
                    }
                }
                Stage::SortBy { key, desc }
            }
            "top" => match self.peek().clone() {
                Tok::Lit(Value::Int(k)) if k >= 0 => {
                    self.bump();
                    Stage::Top(k as usize)
                }
                _ => return Err(self.error(&["non-negative integer"])),
            },
            "min_by" => Stage::MinBy(self.path()?),
            "max_by" => Stage::MaxBy(self.path()?),
            "aggregate" => {
                let at = self.here();
                let op = match self.ident("aggregate op")?.as_str() {
                    "min" => AggOp::Min,
                    "max" => AggOp::Max,
                    "avg" => AggOp::Avg,
                    "sum" => AggOp::Sum,
                    "count" => AggOp::Count,
                    _ => return Err(syntax(at, &["'min'", "'max'", "'avg'", "'sum'", "'count'"])),
                };
                let path = if *self.peek() == Tok::Comma {
                    self.bump();
                    Some(self.path()?)
                } else {
                    None
                };
                Stage::Aggregate { op, path }
            }
            "get" => Stage::Get(self.path()?),
            "group_by" => Stage::GroupBy(self.path()?),
            _ => unreachable!("checked against STAGES"),
        };
        self.expect(Tok::RParen)?;
        Ok(stage)
    }

    fn projection(&mut self) -> Result<Projection, QueryError> {
        let path = self.path()?;
        let alias = if self.keyword("as") {
            self.bump();
            Some(self.ident("alias")?)
        } else {
            None
        };
        Ok(Projection { path, alias })
    }

    fn path(&mut self) -> Result<FieldPath, QueryError> {
        let mut names = vec![self.field_name()?];
        while *self.peek() == Tok::Dot {
            self.bump();
            names.push(self.field_name()?);
        }
        Ok(FieldPath::new(names))
    }

    fn field_name(&mut self) -> Result<String, QueryError> {
        match self.peek() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(&["field name"])),
        }
    }

    fn pred(&mut self) -> Result<Pred, QueryError> {
        let mut lhs = self.conj()?;
        while self.keyword("or") {
            self.bump();
            lhs = Pred::Or(Box::new(lhs), Box::new(self.conj()?));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<Pred, QueryError> {
        let mut lhs = self.unary()?;
        while self.keyword("and") {
            self.bump();
            lhs = Pred::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Pred, QueryError> {
        if self.keyword("not") {
            self.bump();
            return Ok(Pred::Not(Box::new(self.unary()?)));
        }
        if *self.peek() == Tok::LParen {
            self.bump();
            let p = self.pred()?;
            self.expect(Tok::RParen)?;
            return Ok(p);
        }
        if (self.keyword("any") || self.keyword("all")) && *self.peek_at(1) == Tok::LParen {
            let all = self.keyword("all");
            self.bump();
            self.bump();
            let path = self.path()?;
            self.expect(Tok::Comma)?;
            let pred = self.pred()?;
            self.expect(Tok::RParen)?;
            return Ok(Pred::Quant { all, path, pred: Box::new(pred) });
        }
        self.comparison()
    }

    fn literal(&mut self) -> Result<Value, QueryError> {
        let v = match self.peek() {
            Tok::Lit(v) => v.clone(),
            Tok::Str(s) => Value::Str(s.clone()),
            Tok::Ident(s) if s == "true" => Value::Bool(true),
            Tok::Ident(s) if s == "false" => Value::Bool(false),
            Tok::Ident(s) if s == "null" => Value::Null,
            _ => return Err(self.error(&["literal"])),
        };
        self.bump();
        Ok(v)
    }

    fn operand(&mut self) -> Result<Operand, QueryError> {
        match self.peek() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => Ok(Operand::Path(self.path()?)),
            Tok::Lit(_) | Tok::Str(_) => Ok(Operand::Lit(self.literal()?)),
            Tok::Ident(s) if matches!(s.as_str(), "true" | "false" | "null") => Ok(Operand::Lit(self.literal()?)),
            _ => Err(self.error(&["field name", "literal", "'('", "'not'", "'any'", "'all'"])),
        }
    }

    fn comparison(&mut self) -> Result<Pred, QueryError> {
        let lhs = self.operand()?;
        if let Tok::Op(op) = self.peek() {
            let op = *op;
            self.bump();
            let rhs = self.operand()?;
            return Ok(Pred::Cmp { lhs, op, rhs });
        }
        let Operand::Path(path) = lhs else {
            return Err(self.error(&["comparison operator"]));
        };
        let at = self.here();
        let word = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return Err(syntax(at, &["comparison operator", "'in'", "'is'", "'prefix'", "'suffix'", "'contains'", "'glob'"])),
        };
        self.bump();
        match word.as_str() {
            "in" => {
                self.expect(Tok::LBracket)?;
                let mut list = Vec::new();
                if *self.peek() != Tok::RBracket {
                    list.push(self.literal()?);
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        list.push(self.literal()?);
                    }
                }
                self.expect(Tok::RBracket)?;
                Ok(Pred::In { path, list })
            }
            "is" => {
                let negated = self.keyword("not");
                if negated {
                    self.bump();
                }
                if !self.keyword("null") {
                    return Err(self.error(&["'null'"]));
                }
                self.bump();
                Ok(Pred::IsNull { path, negated })
            }
            "prefix" | "suffix" | "contains" | "glob" => {
                let op = match word.as_str() {
                    "prefix" => StrOp::Prefix,
                    "suffix" => StrOp::Suffix,
                    "contains" => StrOp::Contains,
                    _ => StrOp::Glob,
                };
                match self.peek().clone() {
                    Tok::Str(pattern) => {
                        self.bump();
                        Ok(Pred::Str { path, op, pattern })
                    }
                    _ => Err(self.error(&["string"])),
                }
            }
            _ => Err(syntax(at, &["comparison operator", "'in'", "'is'", "'prefix'", "'suffix'", "'contains'", "'glob'"])),
        }
    }
}
