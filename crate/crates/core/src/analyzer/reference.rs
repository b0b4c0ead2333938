//! Published cost figures and the comparison used by `repro-tables`.
//!
//! The numbers live in `data/reference_values.json`; nothing here
//! hard-codes them.

use std::fmt::Write as _;

use serde::Deserialize;

use super::cost::{cost_table, ops_ratio, CostModel, CostTable};
use super::first_order_efficiency;
use super::zoo::builtin;
use crate::error::{Error, Result};

pub const REFERENCE_FORMAT: &str = "wrpn-reference/1";
const REFERENCE_JSON: &str = include_str!("../../data/reference_values.json");

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CostCell {
    pub source: String,
    pub network: String,
    pub widen: f64,
    pub bits_a: u32,
    pub bits_w: u32,
    pub value: f64,
    /// Decimal places the published value was printed with.
    pub decimals: u32,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct OpsGrowth {
    pub source: String,
    pub network: String,
    pub widen: f64,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FirstOrder {
    pub source: String,
    pub bits_a: u32,
    pub bits_w: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceValues {
    pub format: String,
    pub cost_cells: Vec<CostCell>,
    pub ops_growth: Vec<OpsGrowth>,
    pub first_order: Vec<FirstOrder>,
}

pub fn reference_values() -> Result<ReferenceValues> {
    let r: ReferenceValues = serde_json::from_str(REFERENCE_JSON)?;
    if r.format != REFERENCE_FORMAT {
        return Err(Error::Format {
            what: "reference values",
            detail: format!("unexpected format {:?}", r.format),
        });
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: String,
    pub computed: f64,
    /// `computed` rounded the way the published figure was printed.
    pub rounded: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl Comparison {
    pub fn delta(&self) -> f64 {
        self.rounded - self.expected
    }

    pub fn passed(&self) -> bool {
        self.delta().abs() <= self.tolerance + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproReport {
    pub model: CostModel,
    pub rows: Vec<Comparison>,
}

impl ReproReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(Comparison::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Comparison> {
        self.rows.iter().filter(|c| !c.passed())
    }

    pub const CSV_HEADER: &'static str = "label,computed,rounded,expected,delta,tolerance,status";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for c in &self.rows {
            writeln!(
                s,
                "\"{}\",{:.6},{},{},{:+.4},{},{}",
                c.label,
                c.computed,
                c.rounded,
                c.expected,
                c.delta(),
                c.tolerance,
                if c.passed() { "ok" } else { "FAIL" }
            )
            .unwrap();
        }
        s
    }

    pub fn pretty(&self) -> String {
        let mut s = String::new();
        for c in &self.rows {
            writeln!(
                s,
                "{:<4} {:<60} computed {:>8.4}  shown {:>8.4}  published {:>6}  delta {:+.3}",
                if c.passed() { "ok" } else { "FAIL" },
                c.label,
                c.computed,
                c.rounded,
                c.expected,
                c.delta()
            )
            .unwrap();
        }
        let failed = self.failures().count();
        writeln!(
            s,
            "{} of {} values within tolerance",
            self.rows.len() - failed,
            self.rows.len()
        )
        .unwrap();
        s
    }
}

fn round_to(x: f64, decimals: u32) -> f64 {
    let p = 10f64.powi(decimals as i32);
    (x * p).round() / p
}

/// Recomputes every published cost figure from the shipped descriptors.
pub fn reproduce(model: CostModel) -> Result<ReproReport> {
    let refs = reference_values()?;
    let mut rows = Vec::new();

    // One table per (network, widen) pair keeps the work proportional to the
    // number of distinct tables rather than cells.
    let mut tables: Vec<(String, CostTable)> = Vec::new();
    for cell in &refs.cost_cells {
        if !tables
            .iter()
            .any(|(n, t)| *n == cell.network && t.blocks.iter().any(|b| b.widen == cell.widen))
        {
            let desc = builtin(&cell.network)?;
            let grid = [32, 8, 4, 2, 1];
            tables.push((
                cell.network.clone(),
                cost_table(&desc, &[cell.widen], &grid, model)?,
            ));
        }
        let table = tables
            .iter()
            .find(|(n, t)| *n == cell.network && t.blocks.iter().any(|b| b.widen == cell.widen))
            .map(|(_, t)| t)
            .expect("table inserted above");
        let computed = table
            .cell(cell.widen, cell.bits_a, cell.bits_w)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "bits {}/{} outside the cost grid",
                    cell.bits_a, cell.bits_w
                ))
            })?;
        rows.push(Comparison {
            label: format!(
                "{}: {}x wide, {}b A / {}b W",
                cell.source, cell.widen, cell.bits_a, cell.bits_w
            ),
            computed,
            rounded: round_to(computed, cell.decimals),
            expected: cell.value,
            tolerance: cell.tolerance,
        });
    }
    for g in &refs.ops_growth {
        let computed = ops_ratio(&builtin(&g.network)?, g.widen)?;
        rows.push(Comparison {
            label: format!("{} ({}x)", g.source, g.widen),
            computed,
            rounded: computed,
            expected: g.value,
            tolerance: g.tolerance,
        });
    }
    for f in &refs.first_order {
        let computed = first_order_efficiency(f.bits_a, f.bits_w)?;
        rows.push(Comparison {
            label: f.source.clone(),
            computed,
            rounded: computed,
            expected: f.value,
            tolerance: 0.0,
        });
    }
    Ok(ReproReport { model, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_file_parses_and_has_every_cell() {
        let r = reference_values().unwrap();
        let count = |n: &str| r.cost_cells.iter().filter(|c| c.network == n).count();
        assert_eq!(count("alexnet"), 25);
        assert_eq!(count("resnet34"), 9);
        assert_eq!(count("inception-bn"), 5);
        assert_eq!(r.first_order.len(), 3);
    }

    #[test]
    fn rounding_follows_printed_precision() {
        assert_eq!(round_to(0.551, 1), 0.6);
        assert_eq!(round_to(0.4899, 2), 0.49);
        let c = Comparison {
            label: String::new(),
            computed: 0.44,
            rounded: 0.44,
            expected: 0.39,
            tolerance: 0.05,
        };
        assert!(c.passed());
        let c = Comparison { rounded: 0.45, ..c };
        assert!(!c.passed());
    }
}
