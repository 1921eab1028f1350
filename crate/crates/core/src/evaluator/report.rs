use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::rank::{RankedResult, Tally};
use crate::dataset::PoseBin;

/// `100 · correct / total` to one decimal, halves rounded up, computed in
/// integers so no binary rounding leaks into the last digit.
pub fn format_percent(correct: usize, total: usize) -> String {
    assert!(
        total > 0 && correct <= total,
        "invalid tally {correct}/{total}"
    );
    let tenths = (2000 * correct as u128 + total as u128) / (2 * total as u128);
    format!("{}.{}", tenths / 10, tenths % 10)
}

fn format_angle(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

fn format_pitch(v: f64) -> String {
    if v > 0.0 {
        format!("+{}", format_angle(v))
    } else {
        format_angle(v)
    }
}

/// One pitch group laid out as pitch rows against merged `±yaw` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportTable {
    pub title: String,
    pub pitches: Vec<f64>,
    pub yaws: Vec<f64>,
    /// `cells[method][row][col]`; `None` where no probe fell in the bin.
    pub cells: Vec<Vec<Vec<Option<Tally>>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub methods: Vec<String>,
    pub tables: Vec<ReportTable>,
    pub overall: Vec<Tally>,
}

fn layout(pitch_group: i64) -> Option<(&'static str, Vec<f64>, Vec<f64>)> {
    let yaw15 = |from: f64| {
        (0..=6)
            .map(|i| i as f64 * 15.0)
            .filter(|&y| y >= from)
            .collect()
    };
    match pitch_group {
        0 => Some(("pitch 0", vec![0.0], yaw15(15.0))),
        15 => Some(("pitch ±15", vec![15.0, -15.0], yaw15(0.0))),
        30 => Some((
            "pitch ±30",
            vec![30.0, -30.0],
            vec![0.0, 22.5, 45.0, 67.5, 90.0],
        )),
        _ => None,
    }
}

fn group_of(bin: &PoseBin) -> i64 {
    let (pitch, _) = bin.key();
    if pitch % 100 == 0 {
        (pitch / 100).abs()
    } else {
        i64::MIN
    }
}

/// Rank-1 tables for every pitch group that holds at least one probe.
/// Bins outside the standard layouts land in a final `other poses` table.
pub fn pose_binned_report(results: &[(&str, &RankedResult)]) -> Report {
    let per_method: Vec<BTreeMap<PoseBin, Tally>> =
        results.iter().map(|(_, r)| r.by_bin()).collect();
    let bins: BTreeSet<PoseBin> = per_method.iter().flat_map(|m| m.keys().copied()).collect();

    let mut tables = Vec::new();
    let mut placed = BTreeSet::new();
    for group in [0, 15, 30] {
        let (title, pitches, yaws) = layout(group).expect("standard group");
        let members: Vec<PoseBin> = bins
            .iter()
            .filter(|b| group_of(b) == group)
            .copied()
            .collect();
        let fits = |b: &PoseBin| yaws.contains(&b.abs_yaw_deg) && pitches.contains(&b.pitch_deg);
        if members.is_empty() {
            continue;
        }
        placed.extend(members.iter().filter(|b| fits(b)).copied());
        tables.push((title.to_string(), pitches, yaws));
    }
    let rest: Vec<PoseBin> = bins
        .iter()
        .filter(|b| !placed.contains(b))
        .copied()
        .collect();
    if !rest.is_empty() {
        let pitches: BTreeSet<_> = rest.iter().map(|b| b.key().0).collect();
        let yaws: BTreeSet<_> = rest.iter().map(|b| b.key().1).collect();
        tables.push((
            "other poses".to_string(),
            pitches.iter().rev().map(|&p| p as f64 / 100.0).collect(),
            yaws.iter().map(|&y| y as f64 / 100.0).collect(),
        ));
    }

    let tables = tables
        .into_iter()
        .map(|(title, pitches, yaws)| {
            let cells = per_method
                .iter()
                .map(|m| {
                    pitches
                        .iter()
                        .map(|&p| {
                            yaws.iter()
                                .map(|&y| m.get(&PoseBin::new(y, p)).copied())
                                .collect()
                        })
                        .collect()
                })
                .collect();
            ReportTable {
                title,
                pitches,
                yaws,
                cells,
            }
        })
        .collect();
    Report {
        methods: results.iter().map(|(name, _)| name.to_string()).collect(),
        tables,
        overall: results.iter().map(|(_, r)| r.overall()).collect(),
    }
}

impl Report {
    /// One block per table, each with its own header row; blocks are
    /// separated by blank lines. Absent cells are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for t in &self.tables {
            out.push_str("table,method,pitch");
            for &y in &t.yaws {
                write!(out, ",±{}", format_angle(y)).unwrap();
            }
            out.push('\n');
            for (m, method) in self.methods.iter().enumerate() {
                for (r, &p) in t.pitches.iter().enumerate() {
                    write!(out, "{},{},{}", t.title, method, format_pitch(p)).unwrap();
                    for cell in &t.cells[m][r] {
                        out.push(',');
                        if let Some(c) = cell {
                            out.push_str(&format_percent(c.correct, c.total));
                        }
                    }
                    out.push('\n');
                }
            }
            out.push('\n');
        }
        out.push_str("method,correct,total,rank1\n");
        for (method, t) in self.methods.iter().zip(&self.overall) {
            let acc = if t.total > 0 {
                format_percent(t.correct, t.total)
            } else {
                String::new()
            };
            writeln!(out, "{method},{},{},{acc}", t.correct, t.total).unwrap();
        }
        out
    }

    /// Fixed-width grid; absent cells print as `-`.
    pub fn to_text(&self) -> String {
        let name_w = self
            .methods
            .iter()
            .map(|m| m.len())
            .max()
            .unwrap_or(0)
            .max(6);
        let mut out = String::new();
        for t in &self.tables {
            writeln!(out, "Rank-1 (%), {}", t.title).unwrap();
            write!(out, "{:<name_w$}  {:>6}", "method", "pitch").unwrap();
            for &y in &t.yaws {
                write!(out, "  {:>6}", format!("±{}", format_angle(y))).unwrap();
            }
            out.push('\n');
            for (m, method) in self.methods.iter().enumerate() {
                for (r, &p) in t.pitches.iter().enumerate() {
                    write!(out, "{method:<name_w$}  {:>6}", format_pitch(p)).unwrap();
                    for cell in &t.cells[m][r] {
                        let s =
                            cell.map_or("-".to_string(), |c| format_percent(c.correct, c.total));
                        write!(out, "  {s:>6}").unwrap();
                    }
                    out.push('\n');
                }
            }
            out.push('\n');
        }
        for (method, t) in self.methods.iter().zip(&self.overall) {
            let acc = if t.total > 0 {
                format_percent(t.correct, t.total)
            } else {
                "-".into()
            };
            writeln!(
                out,
                "{method:<name_w$}  overall {acc} ({}/{})",
                t.correct, t.total
            )
            .unwrap();
        }
        out
    }
}
