//! Bit-weighted compute cost: Σ FMA · (activation bits + weight bits),
//! reported as a ratio against the same network at 1× width and FP32.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::descriptor::{widen_descriptor, NetworkDescriptor};
use crate::error::{Error, Result};

pub const ALLOWED_BITS: [u32; 6] = [1, 2, 4, 8, 16, 32];
pub const FULL_PRECISION_BITS: u32 = 32;

/// The standard 32/8/4/2/1 precision axis.
pub const STANDARD_GRID: [u32; 5] = [32, 8, 4, 2, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerBits {
    pub acts: u32,
    pub weights: u32,
}

impl LayerBits {
    pub const FP32: LayerBits = LayerBits {
        acts: FULL_PRECISION_BITS,
        weights: FULL_PRECISION_BITS,
    };

    pub fn new(acts: u32, weights: u32) -> Result<Self> {
        for b in [acts, weights] {
            if !ALLOWED_BITS.contains(&b) {
                return Err(Error::InvalidArgument(format!(
                    "bit width {b} not in {ALLOWED_BITS:?}"
                )));
            }
        }
        Ok(Self { acts, weights })
    }

    pub fn is_full_precision(&self) -> bool {
        *self == Self::FP32
    }
}

/// Per-layer bit assignment: a default, layers pinned to FP32, and
/// explicit overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionPolicy {
    pub default: LayerBits,
    pub exempt: BTreeSet<String>,
    pub overrides: BTreeMap<String, LayerBits>,
}

impl PrecisionPolicy {
    /// Same bits on every layer, no exemptions.
    pub fn uniform(bits: LayerBits) -> Self {
        Self {
            default: bits,
            exempt: BTreeSet::new(),
            overrides: BTreeMap::new(),
        }
    }

    pub fn full_precision() -> Self {
        Self::uniform(LayerBits::FP32)
    }

    /// `bits` everywhere except the first and last conv/FC layers and any
    /// layer the descriptor flags as exempt, which stay at FP32.
    pub fn standard(desc: &NetworkDescriptor, bits: LayerBits) -> Self {
        let tr = desc.trainable_indices();
        let mut exempt: BTreeSet<String> = desc
            .layers
            .iter()
            .filter(|l| l.exempt)
            .map(|l| l.id.clone())
            .collect();
        if let (Some(&first), Some(&last)) = (tr.first(), tr.last()) {
            exempt.insert(desc.layers[first].id.clone());
            exempt.insert(desc.layers[last].id.clone());
        }
        Self {
            default: bits,
            exempt,
            overrides: BTreeMap::new(),
        }
    }

    pub fn bits_for(&self, id: &str) -> LayerBits {
        if self.exempt.contains(id) {
            LayerBits::FP32
        } else {
            self.overrides.get(id).copied().unwrap_or(self.default)
        }
    }

    /// Rejects references to layers the descriptor does not contain.
    pub fn validate(&self, desc: &NetworkDescriptor) -> Result<()> {
        let ids: BTreeSet<&str> = desc.layers.iter().map(|l| l.id.as_str()).collect();
        for id in self.exempt.iter().chain(self.overrides.keys()) {
            if !ids.contains(id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "policy references unknown layer {id:?}"
                )));
            }
        }
        for b in std::iter::once(&self.default).chain(self.overrides.values()) {
            LayerBits::new(b.acts, b.weights)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostModel {
    /// Precision applied to every layer, first and last included.
    Uniform,
    /// First and last conv/FC layers charged at FP32.
    ExemptFirstLast,
}

impl CostModel {
    pub fn policy(self, desc: &NetworkDescriptor, bits: LayerBits) -> PrecisionPolicy {
        match self {
            CostModel::Uniform => PrecisionPolicy::uniform(bits),
            CostModel::ExemptFirstLast => PrecisionPolicy::standard(desc, bits),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub id: String,
    pub fma: u64,
    pub bits: LayerBits,
    pub bit_cost: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub network: String,
    pub layers: Vec<LayerCost>,
    pub total_fma: u64,
    pub total_bit_cost: u128,
}

impl CostReport {
    pub fn ratio_to(&self, baseline: &CostReport) -> f64 {
        self.total_bit_cost as f64 / baseline.total_bit_cost as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,fma,bits_a,bits_w,bit_cost\n");
        for l in &self.layers {
            writeln!(
                s,
                "{},{},{},{},{}",
                l.id, l.fma, l.bits.acts, l.bits.weights, l.bit_cost
            )
            .unwrap();
        }
        writeln!(s, "total,{},,,{}", self.total_fma, self.total_bit_cost).unwrap();
        s
    }
}

/// Only conv and FC layers contribute; additions, normalisation and pooling
/// carry no FMA cost.
pub fn compute_cost(desc: &NetworkDescriptor, policy: &PrecisionPolicy) -> Result<CostReport> {
    policy.validate(desc)?;
    let layers: Vec<LayerCost> = desc
        .resolve()?
        .into_iter()
        .filter(|l| l.kind.is_trainable())
        .map(|l| {
            let bits = policy.bits_for(&l.id);
            LayerCost {
                bit_cost: u128::from(l.fma) * u128::from(bits.acts + bits.weights),
                id: l.id,
                fma: l.fma,
                bits,
            }
        })
        .collect();
    Ok(CostReport {
        network: desc.name.clone(),
        total_fma: layers.iter().map(|l| l.fma).sum(),
        total_bit_cost: layers.iter().map(|l| l.bit_cost).sum(),
        layers,
    })
}

/// Raw FMA growth of a widened network over the original.
pub fn ops_ratio(desc: &NetworkDescriptor, factor: f64) -> Result<f64> {
    let wide = widen_descriptor(desc, factor)?;
    Ok(wide.total_fma()? as f64 / desc.total_fma()? as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBlock {
    pub widen: f64,
    pub ops_ratio: f64,
    /// `cells[w][a]`: weight bits down the rows, activation bits across.
    pub cells: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub network: String,
    pub model: CostModel,
    pub grid: Vec<u32>,
    pub blocks: Vec<CostBlock>,
}

impl CostTable {
    pub fn cell(&self, widen: f64, bits_a: u32, bits_w: u32) -> Option<f64> {
        let a = self.grid.iter().position(|&b| b == bits_a)?;
        let w = self.grid.iter().position(|&b| b == bits_w)?;
        self.blocks
            .iter()
            .find(|b| b.widen == widen)
            .map(|b| b.cells[w][a])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("widen,ops_ratio,weights");
        for a in &self.grid {
            write!(s, ",{a}b A").unwrap();
        }
        s.push('\n');
        for b in &self.blocks {
            for (row, w) in b.cells.iter().zip(&self.grid) {
                write!(s, "{},{:.4},{w}b W", b.widen, b.ops_ratio).unwrap();
                for v in row {
                    write!(s, ",{v:.4}").unwrap();
                }
                s.push('\n');
            }
        }
        s
    }

    /// Fixed-width rendering with the usual one-decimal "x" suffix.
    pub fn pretty(&self) -> String {
        let mut s = String::new();
        for b in &self.blocks {
            writeln!(
                s,
                "{} {}x wide (raw ops {:.2}x), cost relative to 1x FP32:",
                self.network, b.widen, b.ops_ratio
            )
            .unwrap();
            write!(s, "{:>8}", "").unwrap();
            for a in &self.grid {
                write!(s, "{:>8}", format!("{a}b A")).unwrap();
            }
            s.push('\n');
            for (row, w) in b.cells.iter().zip(&self.grid) {
                write!(s, "{:>8}", format!("{w}b W")).unwrap();
                for v in row {
                    write!(s, "{:>8}", format!("{v:.2}x")).unwrap();
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Widens `desc` by each factor and evaluates every (acts, weights) pair of
/// `grid` against the 1× FP32 baseline.
pub fn cost_table(
    desc: &NetworkDescriptor,
    widen_factors: &[f64],
    grid: &[u32],
    model: CostModel,
) -> Result<CostTable> {
    let baseline = compute_cost(desc, &PrecisionPolicy::full_precision())?;
    let mut blocks = Vec::with_capacity(widen_factors.len());
    for &f in widen_factors {
        let wide = widen_descriptor(desc, f)?;
        let mut cells = Vec::with_capacity(grid.len());
        for &bw in grid {
            let mut row = Vec::with_capacity(grid.len());
            for &ba in grid {
                let policy = model.policy(&wide, LayerBits::new(ba, bw)?);
                row.push(compute_cost(&wide, &policy)?.ratio_to(&baseline));
            }
            cells.push(row);
        }
        blocks.push(CostBlock {
            widen: f,
            ops_ratio: wide.total_fma()? as f64 / baseline.total_fma as f64,
            cells,
        });
    }
    Ok(CostTable {
        network: desc.name.clone(),
        model,
        grid: grid.to_vec(),
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::descriptor::{LayerKind, LayerSpec};

    fn net() -> NetworkDescriptor {
        NetworkDescriptor::new(
            "toy",
            [3, 16, 16],
            vec![
                LayerSpec::conv("c1", 8, 3, 1, 1),
                LayerSpec::new("r1", LayerKind::Relu),
                LayerSpec::conv("c2", 16, 3, 2, 1),
                LayerSpec::new("r2", LayerKind::Relu),
                LayerSpec::conv("c3", 16, 3, 1, 1),
                LayerSpec::new("gap", LayerKind::GlobalAvgpool),
                LayerSpec::fc("fc", 10),
            ],
        )
    }

    #[test]
    fn self_ratio_is_one_and_totals_add_up() {
        let d = net();
        let r = compute_cost(&d, &PrecisionPolicy::full_precision()).unwrap();
        assert_eq!(r.ratio_to(&r), 1.0);
        assert_eq!(r.total_fma, r.layers.iter().map(|l| l.fma).sum::<u64>());
        assert_eq!(r.total_bit_cost, u128::from(r.total_fma) * 64);
        assert_eq!(r.layers.len(), 4);
    }

    #[test]
    fn uniform_cost_has_closed_form() {
        let d = net();
        let base = compute_cost(&d, &PrecisionPolicy::full_precision()).unwrap();
        for f in [1.0, 1.5, 2.0, 3.0] {
            let wide = widen_descriptor(&d, f).unwrap();
            for (a, w) in [(4, 4), (4, 2), (1, 1), (8, 32)] {
                let r = compute_cost(
                    &wide,
                    &PrecisionPolicy::uniform(LayerBits::new(a, w).unwrap()),
                )
                .unwrap();
                // ratio == (fma_wide / fma_base) · (a + w) / 64, checked exactly.
                assert_eq!(
                    r.total_bit_cost * u128::from(base.total_fma) * 64,
                    u128::from(r.total_fma) * u128::from(a + w) * base.total_bit_cost
                );
            }
        }
    }

    #[test]
    fn exemption_never_lowers_cost() {
        let d = widen_descriptor(&net(), 2.0).unwrap();
        for &a in &STANDARD_GRID {
            for &w in &STANDARD_GRID {
                let bits = LayerBits::new(a, w).unwrap();
                let u = compute_cost(&d, &PrecisionPolicy::uniform(bits)).unwrap();
                let e = compute_cost(&d, &PrecisionPolicy::standard(&d, bits)).unwrap();
                assert!(e.total_bit_cost >= u.total_bit_cost);
            }
        }
    }

    #[test]
    fn policy_validation() {
        let d = net();
        let mut p = PrecisionPolicy::uniform(LayerBits::new(4, 2).unwrap());
        p.exempt.insert("missing".into());
        assert!(compute_cost(&d, &p).is_err());
        assert!(LayerBits::new(3, 4).is_err());
        let s = PrecisionPolicy::standard(&d, LayerBits::new(2, 2).unwrap());
        assert_eq!(s.bits_for("c1"), LayerBits::FP32);
        assert_eq!(s.bits_for("fc"), LayerBits::FP32);
        assert_eq!(s.bits_for("c2"), LayerBits::new(2, 2).unwrap());
    }

    #[test]
    fn table_layout() {
        let t = cost_table(&net(), &[1.0, 2.0], &STANDARD_GRID, CostModel::Uniform).unwrap();
        assert_eq!(t.cell(1.0, 32, 32), Some(1.0));
        let csv = t.to_csv();
        assert!(csv.starts_with("widen,ops_ratio,weights,32b A,8b A,4b A,2b A,1b A\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 5);
        // symmetric in (a, w) under the uniform model
        assert_eq!(t.cell(2.0, 8, 32), t.cell(2.0, 32, 8));
    }
}
