// SPDX-License-Identifier: Apache-2.0

//! Directory-level ingestion: `<root>/<CORNER>_<mode>/<kind>.rpt`.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Corpus, CornerMode, Manifest, Payload, ReportDb, ReportKind};

use super::{parse_report_reader, serialize, ParseDiagnostic, ParseError, Severity};

/// Canonical JSON document for one (corner/mode, kind) report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub corner_mode: CornerMode,
    pub report: Payload,
}

#[derive(Debug)]
pub struct CorpusLoad {
    pub corpus: Corpus,
    pub diagnostics: Vec<ParseDiagnostic>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ParseError + '_ {
    move |source| ParseError::Io { path: path.to_path_buf(), source }
}

fn corner_mode_dirs(root: &Path) -> Result<Vec<(CornerMode, PathBuf)>, ParseError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        if let Some(cm) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.parse::<CornerMode>().ok()) {
            dirs.push((cm, path));
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Parses every `<kind>.rpt` under each corner/mode directory of `root`.
/// Files are parsed in parallel; results merge in sorted corner/mode order.
/// Missing kinds are allowed and recorded in the manifest.
pub fn parse_corpus(root: &Path) -> Result<CorpusLoad, ParseError> {
    let dirs = corner_mode_dirs(root)?;
    let jobs: Vec<(CornerMode, ReportKind, PathBuf)> = dirs
        .iter()
        .flat_map(|(cm, dir)| {
            ReportKind::ALL.into_iter().filter_map(move |kind| {
                let file = dir.join(format!("{kind}.rpt"));
                file.is_file().then(|| (cm.clone(), kind, file))
            })
        })
        .collect();
    if jobs.is_empty() {
        return Err(ParseError::EmptyCorpus(root.to_path_buf()));
    }

    let parsed: Vec<_> = jobs
        .par_iter()
        .map(|(cm, kind, file)| {
            let f = fs::File::open(file).map_err(io_err(file))?;
            let report = parse_report_reader(BufReader::new(f), *kind)
                .map_err(|e| ParseError::File { path: file.clone(), source: Box::new(e) })?;
            let mut diags = report.diagnostics;
            if &report.header.corner_mode != cm {
                diags.push(ParseDiagnostic {
                    file: None,
                    line: 1,
                    severity: Severity::Warning,
                    message: format!("header declares {}, directory is {cm}", report.header.corner_mode),
                });
            }
            for d in &mut diags {
                d.file = Some(file.clone());
            }
            Ok((cm.clone(), report.payload, diags))
        })
        .collect::<Result<_, ParseError>>()?;

    let mut databases = BTreeMap::new();
    let mut diagnostics = Vec::new();
    for (cm, payload, diags) in parsed {
        databases.entry(cm.clone()).or_insert_with(|| ReportDb::new(cm)).insert(payload);
        diagnostics.extend(diags);
    }
    let manifest = Manifest {
        sources: jobs.iter().map(|(_, _, f)| f.display().to_string()).collect(),
        ..Manifest::default()
    };
    Ok(CorpusLoad { corpus: Corpus::new(databases, manifest), diagnostics })
}

/// Loads a corpus from either `.rpt` reports or canonical `.json` documents.
pub fn load_corpus(root: &Path) -> Result<CorpusLoad, ParseError> {
    match parse_corpus(root) {
        Err(ParseError::EmptyCorpus(_)) => load_corpus_json(root),
        other => other,
    }
}

fn load_corpus_json(root: &Path) -> Result<CorpusLoad, ParseError> {
    let mut databases = BTreeMap::new();
    let mut sources = Vec::new();
    for (cm, dir) in corner_mode_dirs(root)? {
        for kind in ReportKind::ALL {
            let file = dir.join(format!("{kind}.json"));
            if !file.is_file() {
                continue;
            }
            let f = fs::File::open(&file).map_err(io_err(&file))?;
            let doc: ReportDocument = serde_json::from_reader(BufReader::new(f))
                .map_err(|source| ParseError::Json { path: file.clone(), source })?;
            databases.entry(cm.clone()).or_insert_with(|| ReportDb::new(cm.clone())).insert(doc.report);
            sources.push(file.display().to_string());
        }
    }
    if databases.is_empty() {
        return Err(ParseError::EmptyCorpus(root.to_path_buf()));
    }
    let manifest = Manifest { sources, ..Manifest::default() };
    Ok(CorpusLoad { corpus: Corpus::new(databases, manifest), diagnostics: Vec::new() })
}

/// Writes every payload as `<root>/<cm>/<kind>.rpt` plus `manifest.json`.
pub fn write_corpus(corpus: &Corpus, root: &Path) -> std::io::Result<()> {
    for (cm, db) in &corpus.databases {
        let dir = root.join(cm.to_string());
        fs::create_dir_all(&dir)?;
        for payload in db.payloads() {
            fs::write(dir.join(format!("{}.rpt", payload.kind())), serialize(payload, cm))?;
        }
    }
    let manifest = serde_json::to_string_pretty(&corpus.manifest).map_err(std::io::Error::other)?;
    fs::write(root.join("manifest.json"), manifest + "\n")
}

/// Writes every payload as a canonical JSON document `<root>/<cm>/<kind>.json`.
pub fn write_corpus_json(corpus: &Corpus, root: &Path) -> std::io::Result<()> {
    for (cm, db) in &corpus.databases {
        let dir = root.join(cm.to_string());
        fs::create_dir_all(&dir)?;
        for payload in db.payloads() {
            let doc = ReportDocument { corner_mode: cm.clone(), report: payload.clone() };
            let text = serde_json::to_string(&doc).map_err(std::io::Error::other)?;
            fs::write(dir.join(format!("{}.json", payload.kind())), text)?;
        }
    }
    Ok(())
}
