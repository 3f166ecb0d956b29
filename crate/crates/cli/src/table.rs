//! The relations table: which relations occur for operation/effect pairs.

use qcompat::compat::{classify, weakly_compatible, DecideOptions, Outcome, Relation};
use qcompat::{Device, Result};
use serde_json::{json, Value};

use crate::devfile::DeviceFile;

pub const COLUMNS: [&str; 3] = ["op-op", "op-ef", "ef-ef"];
pub const ROWS: [Relation; 3] = [
    Relation::Compatible,
    Relation::WeaklyCompatibleOnly,
    Relation::StronglyIncompatible,
];

pub fn row_title(r: Relation) -> &'static str {
    match r {
        Relation::Compatible => "compatible",
        Relation::WeaklyCompatibleOnly => "incompatible but weakly compatible",
        Relation::StronglyIncompatible => "strongly incompatible",
        Relation::Undecided => "undecided",
    }
}

/// Example pair for each populated cell, by fixture name.
const EXAMPLES: [(usize, Relation, &str, &str); 8] = [
    (0, Relation::Compatible, "luders_px", "half_luders_px"),
    (0, Relation::WeaklyCompatibleOnly, "luders_px", "half_sigma_x"),
    (0, Relation::StronglyIncompatible, "luders_px", "luders_pz"),
    (1, Relation::Compatible, "luders_pz", "pz"),
    (1, Relation::WeaklyCompatibleOnly, "px", "luders_pz"),
    (1, Relation::StronglyIncompatible, "px", "luders_soft_z"),
    (2, Relation::Compatible, "half_identity", "px"),
    (2, Relation::WeaklyCompatibleOnly, "px", "pz"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    /// An example pair realizes the relation.
    Shown,
    /// The relation cannot occur for this pair type.
    Impossible,
    /// The designated example did not land in this row.
    Missing,
}

impl Mark {
    pub fn symbol(&self) -> &'static str {
        match self {
            Mark::Shown => "✓",
            Mark::Impossible => "×",
            Mark::Missing => "?",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub column: usize,
    pub row: Relation,
    pub example: Option<(&'static str, &'static str)>,
    pub observed: Option<Relation>,
    pub fast_path: Option<&'static str>,
    pub mark: Mark,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub cells: Vec<Cell>,
    /// Effect pairs confirmed weakly compatible for the impossibility entry.
    pub effect_pairs_checked: usize,
}

/// Classifies the example pairs of `file` and assembles the table.
pub fn table1(file: &DeviceFile, opts: &DecideOptions) -> Result<Table> {
    let mut cells = Vec::new();
    let mut checked = 0;
    for (column, _) in COLUMNS.iter().enumerate() {
        for row in ROWS {
            let ex = EXAMPLES.iter().find(|(c, r, _, _)| *c == column && *r == row);
            let cell = match ex {
                Some(&(_, _, a, b)) => {
                    let (da, db) = (lookup(file, a)?, lookup(file, b)?);
                    let v = classify(da, db, opts)?;
                    Cell {
                        column,
                        row,
                        example: Some((a, b)),
                        observed: Some(v.relation),
                        fast_path: v.fast_path,
                        mark: if v.relation == row { Mark::Shown } else { Mark::Missing },
                    }
                }
                None => {
                    // Only ef-ef strong incompatibility lacks an example: every effect pair
                    // is weakly compatible, which is confirmed on the file's effects.
                    let effects: Vec<&Device> = file
                        .iter()
                        .filter_map(|(_, e)| match e {
                            crate::devfile::Entry::Device(d @ Device::Effect(_)) => Some(d),
                            _ => None,
                        })
                        .collect();
                    let mut all_weak = true;
                    for a in &effects {
                        for b in &effects {
                            if a.dim_in() != b.dim_in() {
                                continue;
                            }
                            all_weak &= weakly_compatible(a, b, opts)?.outcome == Outcome::Holds;
                            checked += 1;
                        }
                    }
                    Cell {
                        column,
                        row,
                        example: None,
                        observed: None,
                        fast_path: None,
                        mark: if all_weak { Mark::Impossible } else { Mark::Missing },
                    }
                }
            };
            cells.push(cell);
        }
    }
    Ok(Table {
        cells,
        effect_pairs_checked: checked,
    })
}

fn lookup<'a>(file: &'a DeviceFile, name: &str) -> Result<&'a Device> {
    file.device(name)
        .map_err(|e| qcompat::Error::InvalidState(e.to_string()))
}

impl Table {
    /// `marks()[row][column]`.
    pub fn marks(&self) -> [[Mark; 3]; 3] {
        let mut m = [[Mark::Missing; 3]; 3];
        for c in &self.cells {
            let r = ROWS.iter().position(|&x| x == c.row).expect("row");
            m[r][c.column] = c.mark;
        }
        m
    }

    pub fn render_text(&self) -> String {
        let marks = self.marks();
        let mut out = format!("{:<36}{:>7}{:>7}{:>7}\n", "", COLUMNS[0], COLUMNS[1], COLUMNS[2]);
        for (r, row) in ROWS.iter().enumerate() {
            out.push_str(&format!("{:<36}", row_title(*row)));
            for m in marks[r] {
                out.push_str(&format!("{:>7}", m.symbol()));
            }
            out.push('\n');
        }
        out.push_str("\nexamples:\n");
        for c in &self.cells {
            let what = match (c.example, c.observed) {
                (Some((a, b)), Some(v)) => format!(
                    "{a} / {b} -> {}{}",
                    v.as_str(),
                    c.fast_path.map(|t| format!(" [{t}]")).unwrap_or_default()
                ),
                _ => format!(
                    "impossible: {} effect pairs checked, all weakly compatible",
                    self.effect_pairs_checked
                ),
            };
            out.push_str(&format!("  {:<6} {:<36}{what}\n", COLUMNS[c.column], row_title(c.row)));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "columns": COLUMNS,
            "rows": ROWS.iter().map(|r| row_title(*r)).collect::<Vec<_>>(),
            "marks": self.marks().iter().map(|row| row.iter().map(|m| m.symbol()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "cells": self.cells.iter().map(|c| json!({
                "column": COLUMNS[c.column],
                "row": row_title(c.row),
                "example": c.example.map(|(a, b)| vec![a, b]),
                "observed": c.observed.map(|v| v.as_str()),
                "fast_path": c.fast_path,
                "mark": c.mark.symbol(),
            })).collect::<Vec<_>>(),
            "effect_pairs_checked": self.effect_pairs_checked,
        })
    }
}
