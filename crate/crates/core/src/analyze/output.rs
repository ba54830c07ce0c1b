use std::io::Write;

use serde::Serialize;

use super::{AnalyzeError, ClusterResult, CoverageRow, Pca, ResidualTable};
use crate::newscube::WeekCalendar;

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

pub fn write_residuals_csv<W: Write>(table: &ResidualTable, writer: W) -> Result<(), AnalyzeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "country", "observed", "predicted", "residual", "pearson", "cells"])?;
    for r in &table.rows {
        w.write_record([
            r.rank.to_string(),
            r.country.clone(),
            num(r.observed),
            num(r.predicted),
            num(r.residual),
            num(r.pearson),
            r.cells.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coverage_csv<W: Write>(rows: &[CoverageRow], calendar: &WeekCalendar, writer: W) -> Result<(), AnalyzeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["media", "week", "week_start", "observed", "predicted"])?;
    for r in rows {
        w.write_record([
            r.media.clone(),
            r.week.to_string(),
            calendar.week_start(r.week).to_string(),
            num(r.observed),
            r.predicted.map_or_else(String::new, num),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per (component, term).
pub fn write_pca_loadings_csv<W: Write>(pca: &Pca, writer: W) -> Result<(), AnalyzeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["component", "term", "loading", "eigenvalue", "explained"])?;
    let explained = pca.explained();
    for c in 0..pca.n_components() {
        for (j, t) in pca.terms.iter().enumerate() {
            w.write_record([
                format!("PC{}", c + 1),
                t.clone(),
                num(pca.loading(j, c)),
                num(pca.eigenvalues[c]),
                num(explained[c]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_pca_scores_csv<W: Write>(pca: &Pca, writer: W) -> Result<(), AnalyzeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["media", "component", "score"])?;
    for (i, m) in pca.media.iter().enumerate() {
        for c in 0..pca.n_components() {
            w.write_record([m.clone(), format!("PC{}", c + 1), num(pca.score(i, c))])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_assignments_csv<W: Write>(result: &ClusterResult, writer: W) -> Result<(), AnalyzeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["media", "cluster"])?;
    for (m, c) in result.labels.iter().zip(&result.assignments) {
        w.write_record([m.clone(), (c + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Dendrogram<'a> {
    labels: &'a [String],
    k: usize,
    merges: Vec<DendrogramNode<'a>>,
}

#[derive(Serialize)]
struct DendrogramNode<'a> {
    id: usize,
    left: usize,
    right: usize,
    left_label: Option<&'a str>,
    right_label: Option<&'a str>,
    cost: f64,
    height: f64,
    size: usize,
}

/// Merge tree with leaves `0..n` and internal nodes numbered from `n`.
pub fn write_dendrogram_json<W: Write>(result: &ClusterResult, writer: W) -> Result<(), AnalyzeError> {
    let n = result.labels.len();
    let label = |i: usize| result.labels.get(i).map(String::as_str);
    let doc = Dendrogram {
        labels: &result.labels,
        k: result.k,
        merges: result
            .merges
            .iter()
            .enumerate()
            .map(|(s, m)| DendrogramNode {
                id: n + s,
                left: m.a,
                right: m.b,
                left_label: label(m.a),
                right_label: label(m.b),
                cost: m.cost,
                height: m.height,
                size: m.size,
            })
            .collect(),
    };
    serde_json::to_writer_pretty(writer, &doc)?;
    Ok(())
}
