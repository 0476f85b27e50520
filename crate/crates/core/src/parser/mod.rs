// SPDX-License-Identifier: Apache-2.0

//! Line-oriented parser for the textual timing-report grammar described in
//! `docs/report_grammar.md`.
//!
//! The parser works one block at a time: a path block in max/min reports, a
//! victim block in xtalk reports, and a single row elsewhere. Only the lines
//! of the block under construction are buffered, so peak memory stays at one
//! block plus the parsed output regardless of file size. A malformed block is
//! skipped with an error diagnostic; only a malformed header aborts the file.

mod corpus;
mod write;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Aggressor, ArcInfo, ArcRole, ClkReportEntry, ClockEdge, CornerMode, Edge, LcEntry, PathOrigin,
    PathSummary, Payload, ReportKind, Stage, TimingPath, WireNet, XtalkEntry,
};

pub use corpus::{load_corpus, parse_corpus, write_corpus, write_corpus_json, CorpusLoad, ReportDocument};
pub use write::{serialize, serialize_to};

/// Column order of the `DataStages:` / `ClockStages:` tables.
pub const STAGE_COLUMNS: [&str; 9] =
    ["index", "point", "net", "cell", "edge", "delay", "slew", "xtalk_delta", "cumulative"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub line: usize,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.file {
            Some(file) => write!(f, "{}:{}: {sev}: {}", file.display(), self.line, self.message),
            None => write!(f, "line {}: {sev}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed header at line {line}: {message}")]
    MalformedHeader { line: usize, message: String },
    #[error("report is not valid UTF-8")]
    InvalidUtf8,
    #[error("no corner/mode directories found under {0}")]
    EmptyCorpus(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<ParseError>,
    },
}

/// The `# KIND ... CORNER ... MODE ... UNIT ps` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportHeader {
    pub kind: ReportKind,
    pub corner_mode: CornerMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub header: ReportHeader,
    pub payload: Payload,
    pub diagnostics: Vec<ParseDiagnostic>,
}

impl ParsedReport {
    pub fn errors(&self) -> impl Iterator<Item = &ParseDiagnostic> {
        self.diagnostics.iter().filter(|d| d.severity == Severity::Error)
    }
}

/// Parses report text of the expected `kind`.
pub fn parse_report(text: &str, kind: ReportKind) -> Result<ParsedReport, ParseError> {
    parse_lines(text.lines().map(|l| Ok(l.to_owned())), kind)
}

/// Like [`parse_report`] but accepts raw bytes, rejecting invalid UTF-8.
pub fn parse_report_bytes(bytes: &[u8], kind: ReportKind) -> Result<ParsedReport, ParseError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ParseError::InvalidUtf8)?;
    parse_report(text, kind)
}

/// Streams a report from `reader` without loading the whole file.
pub fn parse_report_reader<R: BufRead>(reader: R, kind: ReportKind) -> Result<ParsedReport, ParseError> {
    parse_lines(reader.lines(), kind)
}

type Line = (usize, String);
type BlockResult<T> = Result<T, (usize, String)>;

fn parse_lines<I>(lines: I, kind: ReportKind) -> Result<ParsedReport, ParseError>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let mut lines = lines.enumerate().map(|(i, l)| (i + 1, l));
    let header = loop {
        match lines.next() {
            None => return Err(ParseError::MalformedHeader { line: 1, message: "empty report".into() }),
            Some((n, Err(e))) => return Err(io_as_header_error(n, e)),
            Some((_, Ok(l))) if l.trim().is_empty() => continue,
            Some((n, Ok(l))) => break parse_header(n, &l, kind)?,
        }
    };

    let mut sink = Sink::new(kind);
    let mut block: Vec<Line> = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| io_as_header_error(n, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if starts_block(kind, trimmed) {
            if !block.is_empty() {
                sink.finish_block(std::mem::take(&mut block));
            }
            block.push((n, line));
        } else if block.is_empty() && groups_lines(kind) {
            sink.diagnostics.push(error_at(n, "content outside of any block"));
        } else {
            block.push((n, line));
        }
    }
    if !block.is_empty() {
        sink.finish_block(block);
    }
    Ok(ParsedReport { header, payload: sink.payload, diagnostics: sink.diagnostics })
}

fn io_as_header_error(line: usize, e: std::io::Error) -> ParseError {
    if e.kind() == std::io::ErrorKind::InvalidData {
        ParseError::InvalidUtf8
    } else {
        ParseError::MalformedHeader { line, message: format!("read error: {e}") }
    }
}

fn parse_header(n: usize, line: &str, expected: ReportKind) -> Result<ReportHeader, ParseError> {
    let bad = |message: String| ParseError::MalformedHeader { line: n, message };
    let toks: Vec<&str> = line.split_whitespace().collect();
    let [hash, kw_kind, kind, kw_corner, corner, kw_mode, mode, kw_unit, unit] = toks[..] else {
        return Err(bad(format!("expected `# KIND <kind> CORNER <c> MODE <m> UNIT ps`, found `{}`", line.trim())));
    };
    if hash != "#" || kw_kind != "KIND" || kw_corner != "CORNER" || kw_mode != "MODE" || kw_unit != "UNIT" {
        return Err(bad(format!("unexpected header layout `{}`", line.trim())));
    }
    let kind: ReportKind = kind.parse().map_err(|e| bad(format!("{e}")))?;
    if kind != expected {
        return Err(bad(format!("report declares kind `{kind}`, expected `{expected}`")));
    }
    if unit != "ps" {
        return Err(bad(format!("unsupported unit `{unit}`")));
    }
    let corner_mode = CornerMode::new(corner, mode).map_err(|e| bad(e.to_string()))?;
    Ok(ReportHeader { kind, corner_mode })
}

fn groups_lines(kind: ReportKind) -> bool {
    kind.is_path_report() || kind.is_xtalk()
}

fn starts_block(kind: ReportKind, trimmed: &str) -> bool {
    let first = trimmed.split_whitespace().next().unwrap_or("");
    match kind {
        ReportKind::Max | ReportKind::Min => first == "Path",
        ReportKind::XtalkMax | ReportKind::XtalkMin => first == "Victim",
        _ => true,
    }
}

fn error_at(line: usize, message: impl Into<String>) -> ParseDiagnostic {
    ParseDiagnostic { file: None, line, severity: Severity::Error, message: message.into() }
}

fn warning_at(line: usize, message: impl Into<String>) -> ParseDiagnostic {
    ParseDiagnostic { file: None, line, severity: Severity::Warning, message: message.into() }
}

/// Accumulates parsed blocks into a payload.
struct Sink {
    payload: Payload,
    diagnostics: Vec<ParseDiagnostic>,
    seen_ids: HashSet<u64>,
}

impl Sink {
    fn new(kind: ReportKind) -> Self {
        Self { payload: Payload::empty(kind), diagnostics: Vec::new(), seen_ids: HashSet::new() }
    }

    fn finish_block(&mut self, block: Vec<Line>) {
        let first_line = block[0].0;
        let mut warnings = Vec::new();
        let result = match &mut self.payload {
            Payload::Max(v) | Payload::Min(v) => parse_path_block(&block, &mut warnings).and_then(|p| {
                if self.seen_ids.insert(p.summary.path_id) {
                    v.push(p);
                    Ok(())
                } else {
                    Err((first_line, format!("duplicate path id {}", p.summary.path_id)))
                }
            }),
            Payload::XtalkMax(v) | Payload::XtalkMin(v) => parse_victim_block(&block).map(|e| v.push(e)),
            Payload::Wire(v) => single_line(&block).and_then(parse_wire_row).map(|r| v.push(r)),
            Payload::Lc(v) => single_line(&block).and_then(parse_lc_row).map(|r| v.push(r)),
            Payload::Clk(v) => single_line(&block).and_then(parse_clk_row).map(|r| v.push(r)),
            Payload::Freq(m) => single_line(&block).and_then(parse_freq_row).and_then(|(n, clock, mhz)| {
                if m.contains_key(&clock) {
                    Err((n, format!("duplicate clock `{clock}`")))
                } else {
                    m.insert(clock, mhz);
                    Ok(())
                }
            }),
        };
        self.diagnostics.extend(warnings);
        if let Err((line, message)) = result {
            self.diagnostics.push(error_at(line, message));
        }
    }
}

fn single_line(block: &[Line]) -> BlockResult<(usize, &str)> {
    match block {
        [(n, l)] => Ok((*n, l.as_str())),
        _ => Err((block[0].0, "expected a single-line row".into())),
    }
}

fn num(n: usize, what: &str, tok: &str) -> BlockResult<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err((n, format!("invalid number `{tok}` for {what}"))),
    }
}

fn opt_num(n: usize, what: &str, tok: &str) -> BlockResult<Option<f64>> {
    if tok == "-" {
        Ok(None)
    } else {
        num(n, what, tok).map(Some)
    }
}

fn parse_wire_row((n, line): (usize, &str)) -> BlockResult<WireNet> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let [net, r, c, rc] = toks[..] else {
        return Err((n, format!("wire row needs 4 fields, found {}", toks.len())));
    };
    Ok(WireNet {
        net: net.to_string(),
        worst_r: num(n, "worst_r", r)?,
        worst_c: num(n, "worst_c", c)?,
        worst_rc: num(n, "worst_rc", rc)?,
    })
}

fn parse_lc_row((n, line): (usize, &str)) -> BlockResult<LcEntry> {
    let line = line.trim();
    let mut it = line.splitn(2, char::is_whitespace);
    let net = it.next().unwrap_or("");
    let rest = it.next().unwrap_or("").trim_start();
    let mut it = rest.splitn(2, char::is_whitespace);
    let kind = it.next().unwrap_or("");
    let value = it.next().unwrap_or("").trim();
    if net.is_empty() || kind.is_empty() || value.is_empty() {
        return Err((n, "lc row needs `net kind value`".into()));
    }
    Ok(LcEntry { net: net.into(), constraint_kind: kind.into(), value: value.into(), unusual: false })
}

fn parse_clk_row((n, line): (usize, &str)) -> BlockResult<ClkReportEntry> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let [clock, net, "rise", rise, "fall", fall] = toks[..] else {
        return Err((n, "clk row needs `clock net rise <ps|-> fall <ps|->`".into()));
    };
    Ok(ClkReportEntry {
        clock: clock.into(),
        net: net.into(),
        rise_arrival: opt_num(n, "rise", rise)?,
        fall_arrival: opt_num(n, "fall", fall)?,
    })
}

fn parse_freq_row((n, line): (usize, &str)) -> BlockResult<(usize, String, f64)> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let [clock, mhz] = toks[..] else {
        return Err((n, "freq row needs `clock mhz`".into()));
    };
    Ok((n, clock.into(), num(n, "mhz", mhz)?))
}

fn parse_victim_block(block: &[Line]) -> BlockResult<XtalkEntry> {
    let (n, head) = (&block[0].0, block[0].1.as_str());
    let toks: Vec<&str> = head.split_whitespace().collect();
    let ["Victim", victim, "path", id] = toks[..] else {
        return Err((*n, "expected `Victim <net> path <id>`".into()));
    };
    let path_id = id.parse::<u64>().map_err(|_| (*n, format!("invalid path id `{id}`")))?;
    let mut aggressors = Vec::with_capacity(block.len() - 1);
    for (m, line) in &block[1..] {
        let toks: Vec<&str> = line.split_whitespace().collect();
        let ["Aggr", net, "delta", delta] = toks[..] else {
            return Err((*m, "expected `Aggr <net> delta <ps>`".into()));
        };
        aggressors.push(Aggressor { net: net.into(), coupling_delta: num(*m, "delta", delta)? });
    }
    XtalkEntry::new(path_id, victim.into(), aggressors).ok_or((*n, format!("victim `{victim}` has no aggressors")))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Summary,
    DataInfo,
    ClockInfo,
    DataStages,
    ClockStages,
}

impl Section {
    fn from_token(tok: &str) -> Option<Self> {
        Some(match tok {
            "Summary:" => Section::Summary,
            "DataInfo:" => Section::DataInfo,
            "ClockInfo:" => Section::ClockInfo,
            "DataStages:" => Section::DataStages,
            "ClockStages:" => Section::ClockStages,
            _ => return None,
        })
    }

    fn is_table(self) -> bool {
        matches!(self, Section::DataStages | Section::ClockStages)
    }
}

#[derive(Default)]
struct PathParts {
    kv: [BTreeMap<String, (usize, String)>; 3],
    tables: [Option<Vec<Stage>>; 2],
}

fn parse_path_block(block: &[Line], warnings: &mut Vec<ParseDiagnostic>) -> BlockResult<TimingPath> {
    let (n0, head) = (block[0].0, block[0].1.as_str());
    let toks: Vec<&str> = head.split_whitespace().collect();
    let ["Path", id] = toks[..] else {
        return Err((n0, "expected `Path <id>`".into()));
    };
    let path_id = id.parse::<u64>().map_err(|_| (n0, format!("invalid path id `{id}`")))?;

    let mut parts = PathParts::default();
    let mut seen = Vec::new();
    let mut current: Option<Section> = None;
    let mut table_header_seen = false;
    for (n, line) in &block[1..] {
        let n = *n;
        let trimmed = line.trim();
        let first = trimmed.split_whitespace().next().unwrap_or("");
        if let Some(sec) = Section::from_token(first) {
            if seen.contains(&sec) {
                return Err((n, format!("duplicate section `{first}`")));
            }
            seen.push(sec);
            current = Some(sec);
            table_header_seen = false;
            let rest = trimmed[first.len()..].trim();
            if sec.is_table() {
                if !rest.is_empty() {
                    return Err((n, format!("unexpected text after `{first}`")));
                }
                parts.tables[(sec == Section::ClockStages) as usize] = Some(Vec::new());
            } else {
                add_pairs(&mut parts, sec, n, rest)?;
            }
            continue;
        }
        match current {
            None => return Err((n, format!("expected a section header, found `{trimmed}`"))),
            Some(sec) if sec.is_table() => {
                if trimmed.chars().all(|c| c == '-' || c == '+' || c == '|') {
                    continue;
                }
                if !table_header_seen {
                    check_table_header(n, trimmed)?;
                    table_header_seen = true;
                    continue;
                }
                let table = parts.tables[(sec == Section::ClockStages) as usize].as_mut().expect("table opened");
                let stage = parse_stage_row(n, trimmed)?;
                if stage.index as usize != table.len() {
                    return Err((n, format!("stage index {} out of sequence, expected {}", stage.index, table.len())));
                }
                table.push(stage);
            }
            Some(sec) => add_pairs(&mut parts, sec, n, trimmed)?,
        }
    }

    for sec in [Section::Summary, Section::DataInfo, Section::ClockInfo, Section::DataStages, Section::ClockStages] {
        if !seen.contains(&sec) {
            return Err((n0, format!("path {path_id} is missing section {sec:?}")));
        }
    }

    let [summary_kv, data_kv, clock_kv] = parts.kv;
    let summary = build_summary(n0, path_id, summary_kv, warnings)?;
    let data_info = build_arc_info(n0, ArcRole::Data, data_kv, warnings)?;
    let clock_info = build_arc_info(n0, ArcRole::Clock, clock_kv, warnings)?;
    let [data_stages, clock_stages] = parts.tables;
    Ok(TimingPath {
        summary,
        data_info,
        clock_info,
        data_stages: data_stages.unwrap_or_default(),
        clock_stages: clock_stages.unwrap_or_default(),
    })
}

fn add_pairs(parts: &mut PathParts, sec: Section, n: usize, text: &str) -> BlockResult<()> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() % 2 != 0 {
        return Err((n, "key-value line has an odd number of tokens".into()));
    }
    let map = match sec {
        Section::Summary => &mut parts.kv[0],
        Section::DataInfo => &mut parts.kv[1],
        Section::ClockInfo => &mut parts.kv[2],
        _ => unreachable!("tables take no pairs"),
    };
    for pair in toks.chunks(2) {
        if map.insert(pair[0].to_string(), (n, pair[1].to_string())).is_some() {
            return Err((n, format!("duplicate key `{}`", pair[0])));
        }
    }
    Ok(())
}

struct Fields {
    block_line: usize,
    map: BTreeMap<String, (usize, String)>,
}

impl Fields {
    fn take(&mut self, key: &str) -> BlockResult<(usize, String)> {
        self.map.remove(key).ok_or_else(|| (self.block_line, format!("missing key `{key}`")))
    }

    fn string(&mut self, key: &str) -> BlockResult<String> {
        self.take(key).map(|(_, v)| v)
    }

    fn number(&mut self, key: &str) -> BlockResult<f64> {
        let (n, v) = self.take(key)?;
        num(n, key, &v)
    }

    fn finish(self, section: &str, warnings: &mut Vec<ParseDiagnostic>) {
        for (key, (n, _)) in self.map {
            warnings.push(warning_at(n, format!("ignoring unknown {section} key `{key}`")));
        }
    }
}

fn build_summary(
    n0: usize,
    path_id: u64,
    map: BTreeMap<String, (usize, String)>,
    warnings: &mut Vec<ParseDiagnostic>,
) -> BlockResult<PathSummary> {
    let mut f = Fields { block_line: n0, map };
    let (tn, ty) = f.take("type")?;
    let internal_external = match ty.as_str() {
        "internal" => PathOrigin::Internal,
        "external" => PathOrigin::External,
        other => return Err((tn, format!("invalid path type `{other}`"))),
    };
    let summary = PathSummary {
        path_id,
        startpoint: f.string("startpoint")?,
        endpoint: f.string("endpoint")?,
        slack: f.number("slack")?,
        constraint: f.number("constraint")?,
        arrival: f.number("arrival")?,
        path_group: f.string("path_group")?,
        internal_external,
    };
    f.finish("Summary", warnings);
    Ok(summary)
}

fn build_arc_info(
    n0: usize,
    role: ArcRole,
    map: BTreeMap<String, (usize, String)>,
    warnings: &mut Vec<ParseDiagnostic>,
) -> BlockResult<ArcInfo> {
    let mut f = Fields { block_line: n0, map };
    let (en, edge) = f.take("clock_edge")?;
    let clock_edge = match edge.as_str() {
        "rise" => ClockEdge::Rise,
        "fall" => ClockEdge::Fall,
        "missing" | "-" => ClockEdge::Missing,
        other => return Err((en, format!("invalid clock edge `{other}`"))),
    };
    let info = ArcInfo {
        role,
        pbsa_adjustment: f.number("pbsa_adjustment")?,
        arrival_time: f.number("arrival_time")?,
        launch_clock: f.string("launch_clock")?,
        capture_clock: f.string("capture_clock")?,
        clock_edge,
    };
    f.finish(if role == ArcRole::Data { "DataInfo" } else { "ClockInfo" }, warnings);
    Ok(info)
}

fn check_table_header(n: usize, line: &str) -> BlockResult<()> {
    let cols: Vec<&str> = line.split('|').map(str::trim).collect();
    if cols != STAGE_COLUMNS {
        return Err((n, format!("stage table header must be `{}`", STAGE_COLUMNS.join(" | "))));
    }
    Ok(())
}

fn parse_stage_row(n: usize, line: &str) -> BlockResult<Stage> {
    let cols: Vec<&str> = line.split('|').map(str::trim).collect();
    let [index, point, net, cell, edge, delay, slew, xtalk, cumulative] = cols[..] else {
        return Err((n, format!("stage row has {} columns, expected {}", cols.len(), STAGE_COLUMNS.len())));
    };
    let index = index.parse::<u32>().map_err(|_| (n, format!("invalid stage index `{index}`")))?;
    let edge = match edge {
        "rise" | "r" => Edge::Rise,
        "fall" | "f" => Edge::Fall,
        other => return Err((n, format!("invalid edge `{other}`"))),
    };
    for (what, v) in [("point", point), ("net", net), ("cell", cell)] {
        if v.is_empty() || v.contains(char::is_whitespace) {
            return Err((n, format!("invalid {what} `{v}`")));
        }
    }
    Ok(Stage {
        index,
        point: point.into(),
        net: net.into(),
        cell: cell.into(),
        edge,
        delay: num(n, "delay", delay)?,
        slew: num(n, "slew", slew)?,
        xtalk_delta: num(n, "xtalk_delta", xtalk)?,
        cumulative: num(n, "cumulative", cumulative)?,
    })
}
