//! Per-(site, relation) verdict counts and their `count(rate%)` rendering.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::llm::Answer;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCell {
    pub relation: String,
    pub candidates: usize,
    pub positives: usize,
    pub negatives: usize,
    pub malformed: usize,
}

impl RelationCell {
    fn new(relation: &str) -> Self {
        RelationCell { relation: relation.to_string(), ..Default::default() }
    }

    fn record(&mut self, answer: Answer) {
        self.candidates += 1;
        match answer {
            Answer::Yes => self.positives += 1,
            Answer::No => self.negatives += 1,
            Answer::Malformed => self.malformed += 1,
        }
    }

    fn absorb(&mut self, other: &RelationCell) {
        self.candidates += other.candidates;
        self.positives += other.positives;
        self.negatives += other.negatives;
        self.malformed += other.malformed;
    }

    /// 0 when there are no candidates.
    pub fn positive_rate(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.positives as f64 / self.candidates as f64
        }
    }

    pub fn is_conserved(&self) -> bool {
        self.positives + self.negatives + self.malformed == self.candidates
    }

    pub fn display(&self) -> String {
        format_cell(self.positives, self.candidates)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteRow {
    pub site_id: String,
    pub pages: usize,
    pub cells: Vec<RelationCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub relations: Vec<String>,
    pub sites: Vec<SiteRow>,
}

impl ExtractionReport {
    pub fn new(relations: Vec<String>) -> Self {
        ExtractionReport { relations, sites: Vec::new() }
    }

    fn site_mut(&mut self, site_id: &str) -> &mut SiteRow {
        if let Some(i) = self.sites.iter().position(|s| s.site_id == site_id) {
            return &mut self.sites[i];
        }
        let cells = self.relations.iter().map(|r| RelationCell::new(r)).collect();
        self.sites.push(SiteRow { site_id: site_id.to_string(), pages: 0, cells });
        self.sites.last_mut().expect("just pushed")
    }

    /// Add a site row (if absent) and set its page count.
    pub fn set_pages(&mut self, site_id: &str, pages: usize) {
        self.site_mut(site_id).pages = pages;
    }

    pub fn record(&mut self, site_id: &str, relation: &str, answer: Answer) {
        let idx = match self.relations.iter().position(|r| r == relation) {
            Some(i) => i,
            None => {
                self.relations.push(relation.to_string());
                for s in &mut self.sites {
                    s.cells.push(RelationCell::new(relation));
                }
                self.relations.len() - 1
            }
        };
        self.site_mut(site_id).cells[idx].record(answer);
    }

    pub fn totals(&self) -> Vec<RelationCell> {
        let mut out: Vec<RelationCell> = self.relations.iter().map(|r| RelationCell::new(r)).collect();
        for s in &self.sites {
            for (t, c) in out.iter_mut().zip(&s.cells) {
                t.absorb(c);
            }
        }
        out
    }

    pub fn total_pages(&self) -> usize {
        self.sites.iter().map(|s| s.pages).sum()
    }

    pub fn is_conserved(&self) -> bool {
        self.sites.iter().flat_map(|s| &s.cells).all(RelationCell::is_conserved)
            && self.totals().iter().all(RelationCell::is_conserved)
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// `positives(rate%)` with the rate rounded half-up to one decimal, computed
/// in integers so the display never depends on float formatting.
pub fn format_cell(positives: usize, candidates: usize) -> String {
    if candidates == 0 {
        return format!("{positives}(0.0%)");
    }
    let (p, c) = (positives as u128, candidates as u128);
    let tenths = (p * 2000 + c) / (2 * c);
    format!("{positives}({}.{}%)", tenths / 10, tenths % 10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub table: String,
    pub json: Value,
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn cell_json(c: &RelationCell) -> Value {
    json!({
        "candidates": c.candidates,
        "positives": c.positives,
        "negatives": c.negatives,
        "malformed": c.malformed,
        "positive_rate": c.positive_rate(),
        "display": c.display(),
    })
}

fn cells_json(cells: &[RelationCell]) -> Value {
    let mut m = Map::new();
    for c in cells {
        m.insert(c.relation.clone(), cell_json(c));
    }
    Value::Object(m)
}

pub fn render_report(report: &ExtractionReport) -> RenderedReport {
    let totals = report.totals();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Site".to_string(), "Pages".to_string()];
    header.extend(report.relations.iter().map(|r| title_case(r)));
    rows.push(header);
    for s in &report.sites {
        let mut row = vec![s.site_id.clone(), s.pages.to_string()];
        row.extend(s.cells.iter().map(RelationCell::display));
        rows.push(row);
    }
    let mut total = vec!["Total".to_string(), report.total_pages().to_string()];
    total.extend(totals.iter().map(RelationCell::display));
    rows.push(total);

    let cols = rows[0].len();
    let widths: Vec<usize> =
        (0..cols).map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
    let mut table = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| if i == 0 { format!("{cell:<w$}", w = widths[i]) } else { format!("{cell:>w$}", w = widths[i]) })
            .collect();
        table.push_str(line.join("  ").trim_end());
        table.push('\n');
    }

    let sites: Vec<Value> = report
        .sites
        .iter()
        .map(|s| json!({"site_id": s.site_id, "pages": s.pages, "cells": cells_json(&s.cells)}))
        .collect();
    let json = json!({
        "relations": report.relations,
        "sites": sites,
        "totals": {"pages": report.total_pages(), "cells": cells_json(&totals)},
    });
    RenderedReport { table, json }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(80910, 109486), "80910(73.9%)");
        assert_eq!(format_cell(0, 0), "0(0.0%)");
        assert_eq!(format_cell(9354, 10992), "9354(85.1%)");
        assert_eq!(format_cell(1, 3), "1(33.3%)");
        assert_eq!(format_cell(2, 3), "2(66.7%)");
        assert_eq!(format_cell(1, 8), "1(12.5%)");
        assert_eq!(format_cell(1, 16), "1(6.3%)");
        assert_eq!(format_cell(5, 5), "5(100.0%)");
    }

    #[test]
    fn counts_and_totals() {
        let mut r = ExtractionReport::new(vec!["manifestation".into(), "treatment".into()]);
        r.set_pages("a", 2);
        r.set_pages("b", 1);
        for ans in [Answer::Yes, Answer::No, Answer::Yes, Answer::Malformed] {
            r.record("a", "treatment", ans);
        }
        r.record("b", "manifestation", Answer::Yes);
        let t = r.totals();
        assert_eq!(t[1].candidates, 4);
        assert_eq!(t[1].positives, 2);
        assert_eq!(t[1].malformed, 1);
        assert!(r.is_conserved());

        let out = render_report(&r);
        assert!(out.table.contains("2(50.0%)"));
        assert!(out.table.lines().next().unwrap().contains("Manifestation"));
        assert_eq!(out.table.lines().count(), 4);
        assert_eq!(out.json["totals"]["pages"], 3);
        assert_eq!(out.json["sites"][0]["cells"]["treatment"]["display"], "2(50.0%)");
        assert_eq!(out.json["sites"][1]["cells"]["treatment"]["display"], "0(0.0%)");
    }

    #[test]
    fn empty_report() {
        let r = ExtractionReport::new(vec!["diagnosis".into()]);
        assert!(r.is_empty());
        let out = render_report(&r);
        assert_eq!(out.json["sites"].as_array().unwrap().len(), 0);
        assert!(out.table.contains("Total"));
    }
}
