use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use vcm_econometrics::TobitFit;

use crate::analysis::AnalysisReport;
use crate::{Error, Result};

/// Significance marker for a two-tailed p-value.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

fn regressor_label(name: &str) -> &str {
    match name {
        "intercept" => "Intercept",
        "first" => "Own contribution in round 1",
        "lag1" => "Own contribution in round t-1",
        "lag2" => "Own contribution in round t-2",
        "over" => "Over-contribution in t-1 vs others' mean",
        "under" => "Under-contribution in t-1 vs others' mean",
        "zero_count" => "Zero contributors in session, t-1",
        "full_count" => "Full contributors in session, t-1",
        other => other,
    }
}

/// Aligned plain-text table: first column left-aligned, the rest right-aligned.
fn text_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, w) in widths.iter().enumerate().take(cols) {
            let cell = cells.get(i).map_or("", String::as_str);
            let pad = w - cell.chars().count();
            if i == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |r| format!("{r:.2}"))
}

fn table3(report: &AnalysisReport) -> String {
    let mut header = vec!["".to_string()];
    header.extend(report.cells.iter().map(|c| c.label.clone()));
    let row = |label: &str, f: &dyn Fn(&crate::CellAnalysis) -> String| {
        let mut r = vec![label.to_string()];
        r.extend(report.cells.iter().map(f));
        r
    };
    let rows = vec![
        row("Number of subjects", &|c| c.subjects.to_string()),
        row("Mean individual correlation", &|c| opt(c.reciprocity.mean_individual_r)),
        row("Subjects excluded (constant series)", &|c| c.reciprocity.subjects_excluded.to_string()),
        row("Correlation with free riders in group, t-1", &|c| opt(c.reciprocity.free_rider_r)),
    ];
    text_table(&header, &rows)
}

fn table4(report: &AnalysisReport) -> String {
    let mut header = vec!["".to_string()];
    header.extend(report.cells.iter().map(|c| c.label.clone()));
    let fits: Vec<Option<&TobitFit>> = report.cells.iter().map(|c| c.fit.as_ref().ok()).collect();
    let mut names: Vec<&str> = Vec::new();
    for f in fits.iter().flatten() {
        for n in &f.names {
            if !names.contains(&n.as_str()) {
                names.push(n);
            }
        }
    }
    let mut rows = Vec::new();
    for name in names {
        let mut r = vec![regressor_label(name).to_string()];
        for f in &fits {
            r.push(match f.and_then(|f| f.index_of(name).map(|j| (f, j))) {
                Some((f, j)) => {
                    format!("{:.2}{} ({:.2})", f.coefficients[j], stars(f.p(j)), f.std_errors[j])
                }
                None => String::new(),
            });
        }
        rows.push(r);
    }
    let diag = |label: &str, g: &dyn Fn(&TobitFit) -> String| {
        let mut r = vec![label.to_string()];
        r.extend(fits.iter().map(|f| f.map_or_else(|| "n/a".to_string(), g)));
        r
    };
    rows.push(diag("N", &|f| f.n.to_string()));
    rows.push(diag("Clusters", &|f| f.clusters.to_string()));
    rows.push(diag("Sigma", &|f| format!("{:.2} ({:.2})", f.sigma, f.sigma_se)));
    rows.push(diag("McFadden pseudo R^2", &|f| format!("{:.2}", f.pseudo_r2)));
    rows.push(diag("LLF", &|f| format!("{:.2}", f.llf)));
    rows.push(diag("Correlation observed - predicted", &|f| opt(f.corr_observed_predicted)));
    rows.push(diag("% censored at lower bound", &|f| format!("{:.0}%", 100.0 * f.censored_lower)));
    rows.push(diag("% censored at upper bound", &|f| format!("{:.0}%", 100.0 * f.censored_upper)));
    let mut out = text_table(&header, &rows);
    for c in &report.cells {
        if let Err(e) = &c.fit {
            let _ = writeln!(out, "{}: not estimated ({e})", c.label);
        }
    }
    out
}

fn table5(report: &AnalysisReport) -> String {
    let mut out = String::new();
    for cmp in &report.comparisons {
        let header = vec![String::new(), format!("{} minus {}", cmp.first, cmp.second), "z".to_string()];
        let rows: Vec<Vec<String>> = cmp
            .rows
            .iter()
            .map(|r| {
                vec![
                    regressor_label(&r.name).to_string(),
                    format!("{:.2}", r.difference),
                    format!("{:.2}{}", r.test.z.abs(), stars(r.test.p_two_tailed)),
                ]
            })
            .collect();
        out.push_str(&text_table(&header, &rows));
        if cmp.rows.is_empty() {
            out.push_str("(no estimates to compare)\n");
        }
        out.push('\n');
    }
    out
}

fn csv_line(fields: &[String]) -> String {
    let quoted: Vec<String> = fields
        .iter()
        .map(|f| {
            if f.contains([',', '"', '\n']) {
                format!("\"{}\"", f.replace('"', "\"\""))
            } else {
                f.clone()
            }
        })
        .collect();
    quoted.join(",") + "\n"
}

fn num(v: f64) -> String {
    // Shortest representation that parses back to the same bits.
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn means_csv(report: &AnalysisReport) -> String {
    let mut header = vec!["round".to_string()];
    header.extend(report.cells.iter().map(|c| c.label.clone()));
    let mut out = csv_line(&header);
    let rounds = report.cells.iter().map(|c| c.means.len()).max().unwrap_or(0);
    for t in 0..rounds {
        let mut row = vec![(t + 1).to_string()];
        row.extend(report.cells.iter().map(|c| c.means.get(t).map(|&m| num(m)).unwrap_or_default()));
        out.push_str(&csv_line(&row));
    }
    out
}

fn reciprocity_csv(report: &AnalysisReport) -> String {
    let mut out = csv_line(&[
        "cell", "subjects", "mean_individual_r", "subjects_used", "subjects_excluded", "free_rider_r", "observations",
    ].map(String::from));
    for c in &report.cells {
        let m = &c.reciprocity;
        out.push_str(&csv_line(&[
            c.label.clone(),
            c.subjects.to_string(),
            opt_num(m.mean_individual_r),
            m.subjects_used.to_string(),
            m.subjects_excluded.to_string(),
            opt_num(m.free_rider_r),
            m.observations.to_string(),
        ]));
    }
    out
}

fn coefficients_csv(report: &AnalysisReport) -> String {
    let mut out = csv_line(&["cell", "coefficient", "estimate", "std_error", "z", "p"].map(String::from));
    for c in &report.cells {
        if let Ok(f) = &c.fit {
            for (j, name) in f.names.iter().enumerate() {
                out.push_str(&csv_line(&[
                    c.label.clone(),
                    name.clone(),
                    num(f.coefficients[j]),
                    num(f.std_errors[j]),
                    num(f.z(j)),
                    num(f.p(j)),
                ]));
            }
            out.push_str(&csv_line(&[
                c.label.clone(),
                "sigma".into(),
                num(f.sigma),
                num(f.sigma_se),
                String::new(),
                String::new(),
            ]));
        }
    }
    out
}

fn fit_summary_csv(report: &AnalysisReport) -> String {
    let mut out = csv_line(&[
        "cell", "n", "clusters", "llf", "llf_null", "pseudo_r2", "corr_observed_predicted", "censored_lower",
        "censored_upper", "error",
    ].map(String::from));
    for c in &report.cells {
        let row = match &c.fit {
            Ok(f) => vec![
                c.label.clone(),
                f.n.to_string(),
                f.clusters.to_string(),
                num(f.llf),
                num(f.llf_null),
                num(f.pseudo_r2),
                opt_num(f.corr_observed_predicted),
                num(f.censored_lower),
                num(f.censored_upper),
                String::new(),
            ],
            Err(e) => {
                let mut r = vec![c.label.clone()];
                r.extend(std::iter::repeat_n(String::new(), 8));
                r.push(e.clone());
                r
            }
        };
        out.push_str(&csv_line(&row));
    }
    out
}

fn comparisons_csv(report: &AnalysisReport) -> String {
    let mut out = csv_line(&["first", "second", "coefficient", "difference", "z", "p"].map(String::from));
    for cmp in &report.comparisons {
        for r in &cmp.rows {
            out.push_str(&csv_line(&[
                cmp.first.clone(),
                cmp.second.clone(),
                r.name.clone(),
                num(r.difference),
                num(r.test.z),
                num(r.test.p_two_tailed),
            ]));
        }
    }
    out
}

fn metadata(report: &AnalysisReport) -> String {
    let cells: Vec<_> = report
        .cells
        .iter()
        .map(|c| {
            serde_json::json!({
                "label": c.label,
                "treatment": c.treatment.label(),
                "sessions": c.sessions,
                "seeds": c.seeds,
                "started_at": c.started_at,
            })
        })
        .collect();
    let rounds = report.rounds.as_ref().map(|r| format!("{}..{}", r.start(), r.end()));
    let value = serde_json::json!({
        "generated_at": report.generated_at,
        "rounds": rounds,
        "cells": cells,
    });
    serde_json::to_string_pretty(&value).expect("json values serialize") + "\n"
}

/// Writes the text tables and CSV files into `dir`, returning the paths written.
pub fn render_report(report: &AnalysisReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut text = String::from("Reciprocity\n\n");
    text.push_str(&table3(report));
    text.push_str("\nTobit regressions, standard errors clustered by subject in parentheses\n\n");
    text.push_str(&table4(report));
    text.push_str("\nCoefficient differences between cells\n\n");
    text.push_str(&table5(report));
    text.push_str("** p < 0.01, * p < 0.05 (two-tailed)\n");

    let files = [
        ("tables.txt", text),
        ("means.csv", means_csv(report)),
        ("reciprocity.csv", reciprocity_csv(report)),
        ("coefficients.csv", coefficients_csv(report)),
        ("fit_summary.csv", fit_summary_csv(report)),
        ("comparisons.csv", comparisons_csv(report)),
        ("metadata.json", metadata(report)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads `means.csv` back as `(cell, series)` pairs.
pub fn read_means_csv(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let mut series: Vec<(String, Vec<f64>)> =
        header.iter().skip(1).map(|h| (h.to_string(), Vec::new())).collect();
    for (i, line) in lines.enumerate() {
        for (j, field) in line.split(',').skip(1).enumerate() {
            if field.is_empty() {
                continue;
            }
            let v = field
                .parse()
                .map_err(|_| Error::Structure(format!("{}: line {}: bad number `{field}`", path.display(), i + 2)))?;
            series
                .get_mut(j)
                .ok_or_else(|| Error::Structure(format!("{}: line {} has extra fields", path.display(), i + 2)))?
                .1
                .push(v);
        }
    }
    Ok(series)
}
