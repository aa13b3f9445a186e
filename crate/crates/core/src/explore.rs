//! The end-to-end workflow: localize each distinct crash, derive and match
//! templates, rank the matches by fuzz coverage, and render a report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{compute_coverset, CorpusEntry, CorpusError, Coverset, FuzzCorpus};
use crate::frontend::{NodeId, TranslationUnit};
use crate::interp::{CrashKind, CrashReport, FunctionKey};
use crate::localize::{localize_failure, parse_crash_report, FaultLocus, LocalizeError};
use crate::rank::is_high;
use crate::semantic::{callsite_matches, taint_scan, SemanticError, TaintFinding, DEFAULT_SINKS};
use crate::templates::{
    derive_syntactic_template, match_template, render_match_block, render_matcher, Match, MatchSet,
    TemplateError, TemplateRule,
};

pub const TEMPLATE_MODE: &str = "any-of-lines";
pub const TAINT_SCOPE: &str = "whole-program";

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExploreOptions {
    pub template_rule: TemplateRule,
    pub sinks: Vec<String>,
    pub semantic: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            template_rule: TemplateRule::Auto,
            sinks: DEFAULT_SINKS.iter().map(|s| s.to_string()).collect(),
            semantic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rank {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchSource {
    Syntactic,
    Callsite,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportedMatch {
    #[serde(flatten)]
    pub m: Match,
    pub rank: Rank,
    pub known: bool,
    pub source: MatchSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrashSection {
    pub id: String,
    /// Other crash entries with the same dedup key.
    pub duplicates: Vec<String>,
    pub crash_kind: Option<CrashKind>,
    /// Why no template could be derived, when that happened.
    pub unlocalized: Option<String>,
    pub locus: Option<FaultLocus>,
    pub template: Option<String>,
    pub callsite_template: Option<String>,
    /// High matches first, then low; each in match order.
    pub matches: Vec<ReportedMatch>,
    pub taint: Vec<TaintFinding>,
    pub taint_guarded: usize,
    pub explored_matches: usize,
    pub ranked_high: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExploreReport {
    pub template_mode: &'static str,
    pub taint_scope: &'static str,
    pub crash_entries: usize,
    pub sections: Vec<CrashSection>,
    pub explored_matches: usize,
    pub ranked_high: usize,
}

fn read_report(entry: &CorpusEntry) -> Option<CrashReport> {
    let text = std::fs::read_to_string(entry.report_path.as_ref()?).ok()?;
    parse_crash_report(&text).ok()
}

type DedupKey = (Option<CrashKind>, Option<FunctionKey>, Option<u32>, Option<String>);

fn dedup_key(entry: &CorpusEntry, report: Option<&CrashReport>) -> DedupKey {
    match report {
        Some(r) => (Some(r.kind), Some(r.stack[0].function_key()), Some(r.site.line), None),
        None => (None, None, None, Some(entry.id.clone())),
    }
}

fn unlocalized(id: &str, duplicates: Vec<String>, kind: Option<CrashKind>, why: String) -> CrashSection {
    CrashSection {
        id: id.to_string(),
        duplicates,
        crash_kind: kind,
        unlocalized: Some(why),
        locus: None,
        template: None,
        callsite_template: None,
        matches: Vec::new(),
        taint: Vec::new(),
        taint_guarded: 0,
        explored_matches: 0,
        ranked_high: 0,
    }
}

fn is_known_syntactic(m: &Match, locus: &FaultLocus) -> bool {
    locus
        .lines
        .iter()
        .any(|(f, l)| &*m.loc.file == f && m.loc.line <= *l && *l <= m.end_loc.line)
}

fn explore_crash(
    entry: &CorpusEntry,
    duplicates: Vec<String>,
    report: Option<&CrashReport>,
    corpus: &FuzzCorpus,
    tus: &[TranslationUnit],
    coverset: &Coverset,
    opts: &ExploreOptions,
) -> Result<CrashSection, ExploreError> {
    let kind = report.map(|r| r.kind);
    let locus = match localize_failure(entry, corpus, tus) {
        Ok(l) => l,
        Err(e @ (LocalizeError::EmptyDice { .. } | LocalizeError::NoFocus { .. })) => {
            return Ok(unlocalized(&entry.id, duplicates, kind, e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let template = match derive_syntactic_template(tus, &locus, opts.template_rule) {
        Ok(t) => t,
        Err(e @ TemplateError::NoAnchor { .. }) => {
            let mut s = unlocalized(&entry.id, duplicates, kind, e.to_string());
            s.locus = Some(locus);
            return Ok(s);
        }
    };
    let syntactic = match_template(tus, &template);
    let mut known: Vec<(String, NodeId)> = syntactic
        .iter()
        .filter(|m| is_known_syntactic(m, &locus))
        .map(|m| (m.loc.file.to_string(), m.node_id))
        .collect();

    let semantic = opts.semantic || kind == Some(CrashKind::AssertionFailure);
    let mut callsite = MatchSet::default();
    let mut callsite_template = None;
    let mut taint = Vec::new();
    let mut taint_guarded = 0;
    if semantic {
        if let Some(r) = report {
            let c = callsite_matches(r, tus);
            callsite_template = Some(render_matcher(&crate::templates::Matcher::call_to(&r.stack[0].function)));
            known.extend(c.known);
            callsite = c.matches;
        }
        if let (Some(true), Some((record, _))) = (kind.map(|k| k.is_buffer_overflow()), &locus.faulty_member) {
            let scan = taint_scan(tus, record, &opts.sinks)?;
            taint = scan.findings;
            taint_guarded = scan.guarded.len();
        }
    }

    let mut source: HashMap<(String, NodeId), MatchSource> = HashMap::new();
    for m in syntactic.iter() {
        source.insert((m.loc.file.to_string(), m.node_id), MatchSource::Syntactic);
    }
    for m in callsite.iter() {
        source
            .entry((m.loc.file.to_string(), m.node_id))
            .and_modify(|s| *s = MatchSource::Both)
            .or_insert(MatchSource::Callsite);
    }
    let all = syntactic.union(&callsite);
    let reported: Vec<ReportedMatch> = all
        .iter()
        .map(|m| {
            let id = (m.loc.file.to_string(), m.node_id);
            ReportedMatch {
                rank: if is_high(m, coverset) { Rank::High } else { Rank::Low },
                known: known.contains(&id),
                source: source[&id],
                m: m.clone(),
            }
        })
        .collect();
    let (high, low): (Vec<_>, Vec<_>) = reported.into_iter().partition(|r| r.rank == Rank::High);
    let known_count = high.iter().chain(&low).filter(|r| r.known).count();
    let ranked_high = high.iter().filter(|r| !r.known).count();
    let explored_matches = high.len() + low.len() - known_count;
    Ok(CrashSection {
        id: entry.id.clone(),
        duplicates,
        crash_kind: kind.or(locus.crash_kind),
        unlocalized: None,
        template: Some(render_matcher(&template)),
        locus: Some(locus),
        callsite_template,
        matches: high.into_iter().chain(low).collect(),
        taint,
        taint_guarded,
        explored_matches,
        ranked_high,
    })
}

/// Run the workflow over every distinct crash of `corpus`.
pub fn explore(
    tus: &[TranslationUnit],
    corpus: &FuzzCorpus,
    opts: &ExploreOptions,
) -> Result<ExploreReport, ExploreError> {
    let coverset = compute_coverset(corpus)?;
    let crashes: Vec<&CorpusEntry> = corpus.crashes().collect();
    let reports: Vec<Option<CrashReport>> = crashes.iter().map(|e| read_report(e)).collect();

    let mut groups: BTreeMap<DedupKey, Vec<usize>> = BTreeMap::new();
    for (i, e) in crashes.iter().enumerate() {
        groups.entry(dedup_key(e, reports[i].as_ref())).or_default().push(i);
    }
    let mut reps: Vec<(usize, Vec<String>)> = groups
        .into_values()
        .map(|ix| (ix[0], ix[1..].iter().map(|&i| crashes[i].id.clone()).collect()))
        .collect();
    reps.sort_by(|a, b| crashes[a.0].id.cmp(&crashes[b.0].id));

    let sections: Vec<CrashSection> = reps
        .into_par_iter()
        .map(|(i, dups)| explore_crash(crashes[i], dups, reports[i].as_ref(), corpus, tus, &coverset, opts))
        .collect::<Result<_, _>>()?;
    Ok(ExploreReport {
        template_mode: TEMPLATE_MODE,
        taint_scope: TAINT_SCOPE,
        crash_entries: crashes.len(),
        explored_matches: sections.iter().map(|s| s.explored_matches).sum(),
        ranked_high: sections.iter().map(|s| s.ranked_high).sum(),
        sections,
    })
}

pub fn render_text(report: &ExploreReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vexplore report");
    let _ = writeln!(out, "template-mode: {}", report.template_mode);
    let _ = writeln!(out, "taint-scope: {}", report.taint_scope);
    if report.sections.is_empty() {
        let _ = writeln!(out, "no crashes to explore");
        return out;
    }
    let _ = writeln!(
        out,
        "crashes: {} entries, {} distinct",
        report.crash_entries,
        report.sections.len()
    );
    for s in &report.sections {
        let _ = writeln!(out, "\n== crash {} ==", s.id);
        if !s.duplicates.is_empty() {
            let _ = writeln!(out, "duplicates: {}", s.duplicates.join(" "));
        }
        let _ = writeln!(
            out,
            "kind: {}",
            s.crash_kind.map_or("unknown", |k| k.as_str())
        );
        if let Some(l) = &s.locus {
            let lines: Vec<String> = l.lines.iter().map(|(f, n)| format!("{f}:{n}")).collect();
            let method = match l.method {
                crate::localize::LocusMethod::Report => "report",
                crate::localize::LocusMethod::Dice => "dice",
            };
            let _ = writeln!(out, "locus: {} ({method})", lines.join(" "));
            let _ = writeln!(out, "focus: {}", l.focus_function);
            if let Some((r, f)) = &l.faulty_member {
                let _ = writeln!(out, "faulty-member: {r}.{f}");
            }
        }
        if let Some(why) = &s.unlocalized {
            let _ = writeln!(out, "unlocalized: {why}");
            continue;
        }
        if let Some(t) = &s.template {
            let _ = writeln!(out, "template: {t}");
        }
        if let Some(t) = &s.callsite_template {
            let _ = writeln!(out, "callsite-template: {t}");
        }
        for (i, r) in s.matches.iter().enumerate() {
            out.push('\n');
            out.push_str(&render_match_block(i + 1, &r.m));
            let rank = if r.rank == Rank::High { "high" } else { "low" };
            let source = match r.source {
                MatchSource::Syntactic => "syntactic",
                MatchSource::Callsite => "callsite",
                MatchSource::Both => "both",
            };
            let _ = writeln!(
                out,
                "rank={rank} known={} source={source} function={}",
                r.known, r.m.enclosing_function
            );
        }
        if !s.taint.is_empty() || s.taint_guarded > 0 {
            out.push('\n');
        }
        for t in &s.taint {
            let _ = writeln!(
                out,
                "TAINT {} sink={} arg={} source={}",
                t.sink_call, t.sink_name, t.tainted_arg_index, t.source_type
            );
        }
        if s.taint_guarded > 0 {
            let _ = writeln!(out, "taint-guarded: {}", s.taint_guarded);
        }
        let _ = writeln!(out, "\nexplored={} high={}", s.explored_matches, s.ranked_high);
    }
    let _ = writeln!(
        out,
        "\ntotal explored={} high={}",
        report.explored_matches, report.ranked_high
    );
    out
}

pub fn render_json(report: &ExploreReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}
