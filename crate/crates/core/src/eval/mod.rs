//! Event-level scoring.
//!
//! Predicted and gold records of one type are paired greedily by argument
//! overlap; paired and unpaired records then contribute role-level TP/FP/FN
//! counts which are micro-aggregated into precision/recall/F1, overall and
//! per type, with a separate breakdown for single-event versus multi-event
//! documents.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::edag::{EventRecord, SchemaSet};
use crate::error::{Error, Result};

/// Pooled TP/FP/FN with the derived metrics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// Zero predictions score zero precision by convention.
    pub fn precision(&self) -> f64 {
        let denom = self.tp + self.fp;
        if denom == 0 { 0.0 } else { self.tp as f64 / denom as f64 }
    }

    pub fn recall(&self) -> f64 {
        let denom = self.tp + self.fn_;
        if denom == 0 { 0.0 } else { self.tp as f64 / denom as f64 }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
    }
}

/// Metrics for one slice of the corpus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub documents: usize,
    pub per_type: Vec<(String, Counts)>,
    pub total: Counts,
}

impl SliceReport {
    fn add_type(&mut self, type_name: &str, counts: Counts) {
        match self.per_type.iter_mut().find(|(n, _)| n == type_name) {
            Some((_, c)) => c.add(counts),
            None => self.per_type.push((type_name.to_string(), counts)),
        }
        self.total.add(counts);
    }

    fn merge(&mut self, other: &SliceReport) {
        self.documents += other.documents;
        for (name, counts) in &other.per_type {
            self.add_type(name, *counts);
        }
    }
}

/// Corpus metrics plus the single-event / multi-event split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub all: SliceReport,
    pub single: SliceReport,
    pub multi: SliceReport,
}

fn arg_text<'a>(record: &'a EventRecord, role: &str) -> Option<&'a str> {
    record.arg(role).map(|a| a.text.as_str())
}

/// Number of roles where both records carry the same non-null argument.
fn overlap(a: &EventRecord, b: &EventRecord) -> usize {
    a.roles
        .iter()
        .filter(|(role, arg)| {
            matches!((arg, b.arg(role)), (Some(x), Some(y)) if x.text == y.text)
        })
        .count()
}

/// Greedy pairing by descending argument overlap, ties broken by (pred
/// index, gold index). Records pair at most once; zero-overlap pairs are
/// still taken so counts stay comparable across orderings.
pub fn match_events(predicted: &[EventRecord], gold: &[EventRecord]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut used_p: BTreeSet<usize> = BTreeSet::new();
    let mut used_g: BTreeSet<usize> = BTreeSet::new();
    while used_p.len() < predicted.len() && used_g.len() < gold.len() {
        let mut best: Option<(usize, usize, usize)> = None;
        for (pi, p) in predicted.iter().enumerate() {
            if used_p.contains(&pi) {
                continue;
            }
            for (gi, g) in gold.iter().enumerate() {
                if used_g.contains(&gi) {
                    continue;
                }
                let ov = overlap(p, g);
                let better = match best {
                    None => true,
                    Some((b, ..)) => ov > b,
                };
                if better {
                    best = Some((ov, pi, gi));
                }
            }
        }
        let (_, pi, gi) = best.expect("loop guard ensures a candidate");
        used_p.insert(pi);
        used_g.insert(gi);
        pairs.push((pi, gi));
    }
    pairs
}

/// Role-level counts for one type's record lists: paired records compare
/// per role (wrong non-null predictions count once as FP and once as FN);
/// unpaired records contribute all their non-null roles one-sidedly.
pub fn role_counts(predicted: &[EventRecord], gold: &[EventRecord]) -> Counts {
    let pairs = match_events(predicted, gold);
    let mut c = Counts::default();
    let paired_p: BTreeSet<usize> = pairs.iter().map(|&(p, _)| p).collect();
    let paired_g: BTreeSet<usize> = pairs.iter().map(|&(_, g)| g).collect();
    for &(pi, gi) in &pairs {
        let (p, g) = (&predicted[pi], &gold[gi]);
        for role in p.roles.keys() {
            match (arg_text(p, role), arg_text(g, role)) {
                (Some(x), Some(y)) if x == y => c.tp += 1,
                (Some(_), Some(_)) => {
                    c.fp += 1;
                    c.fn_ += 1;
                }
                (Some(_), None) => c.fp += 1,
                (None, Some(_)) => c.fn_ += 1,
                (None, None) => {}
            }
        }
    }
    for (pi, p) in predicted.iter().enumerate() {
        if !paired_p.contains(&pi) {
            c.fp += p.roles.values().filter(|a| a.is_some()).count();
        }
    }
    for (gi, g) in gold.iter().enumerate() {
        if !paired_g.contains(&gi) {
            c.fn_ += g.roles.values().filter(|a| a.is_some()).count();
        }
    }
    c
}

/// One scored document: predictions versus gold.
#[derive(Clone, Debug)]
pub struct DocOutcome {
    pub doc_id: String,
    pub predicted: Vec<EventRecord>,
    pub gold: Vec<EventRecord>,
}

/// Scores a corpus. Records are grouped by event type within each document
/// and paired type by type; documents land in the single or multi slice by
/// their gold event count (zero-event documents count as single).
pub fn evaluate(outcomes: &[DocOutcome], schemas: &SchemaSet) -> Result<MatchReport> {
    let mut report = MatchReport::default();
    for outcome in outcomes {
        let bucket = |records: &[EventRecord]| -> Result<Vec<Vec<EventRecord>>> {
            let mut buckets = vec![Vec::new(); schemas.len()];
            for r in records {
                let (idx, _) = r
                    .validate(schemas)
                    .map_err(|e| Error::data(format!("document {}: {e}", outcome.doc_id)))?;
                buckets[idx].push(r.clone());
            }
            Ok(buckets)
        };
        let preds = bucket(&outcome.predicted)?;
        let golds = bucket(&outcome.gold)?;
        let mut slice = SliceReport { documents: 1, ..SliceReport::default() };
        for (schema, (p, g)) in schemas.iter().zip(preds.iter().zip(&golds)) {
            if p.is_empty() && g.is_empty() {
                continue;
            }
            slice.add_type(&schema.name, role_counts(p, g));
        }
        report.all.merge(&slice);
        if outcome.gold.len() > 1 {
            report.multi.merge(&slice);
        } else {
            report.single.merge(&slice);
        }
    }
    Ok(report)
}

fn render_slice(out: &mut String, label: &str, slice: &SliceReport) {
    use std::fmt::Write;
    if slice.documents == 0 {
        let _ = writeln!(out, "{label}: N/A (no documents)");
        return;
    }
    let _ = writeln!(out, "{label} ({} documents)", slice.documents);
    let _ = writeln!(out, "  {:<20} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7}", "type", "TP", "FP", "FN", "P", "R", "F1");
    for (name, c) in &slice.per_type {
        let _ = writeln!(
            out,
            "  {:<20} {:>6} {:>6} {:>6} {:>7.4} {:>7.4} {:>7.4}",
            name, c.tp, c.fp, c.fn_, c.precision(), c.recall(), c.f1()
        );
    }
    let c = &slice.total;
    let _ = writeln!(
        out,
        "  {:<20} {:>6} {:>6} {:>6} {:>7.4} {:>7.4} {:>7.4}",
        "total", c.tp, c.fp, c.fn_, c.precision(), c.recall(), c.f1()
    );
}

/// Plain-text report: overall table plus the single/multi split.
pub fn render_report(report: &MatchReport) -> String {
    let mut out = String::new();
    render_slice(&mut out, "all", &report.all);
    render_slice(&mut out, "single-event", &report.single);
    render_slice(&mut out, "multi-event", &report.multi);
    out
}
