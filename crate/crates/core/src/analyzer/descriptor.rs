//! Network descriptors: a JSON layer list with optional explicit inputs
//! (for residual sums and concatenations), resolved to concrete shapes.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ConvGeometry;

pub const DESCRIPTOR_FORMAT: &str = "wrpn-descriptor/1";
/// Reserved input id naming the network input tensor.
pub const NETWORK_INPUT: &str = "input";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Fc,
    Relu,
    Maxpool,
    Avgpool,
    GlobalAvgpool,
    Batchnorm,
    Add,
    Concat,
}

impl LayerKind {
    pub fn is_trainable(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Fc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Extent2 {
    Square(usize),
    Rect([usize; 2]),
}

impl Extent2 {
    pub fn hw(self) -> (usize, usize) {
        match self {
            Extent2::Square(k) => (k, k),
            Extent2::Rect([h, w]) => (h, w),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Extent2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub padding: Option<usize>,
    /// Source layer ids; defaults to the previous layer (or the network
    /// input for the first layer).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exempt: bool,
}

impl LayerSpec {
    pub fn new(id: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            id: id.into(),
            kind,
            out_channels: None,
            kernel: None,
            stride: None,
            padding: None,
            inputs: None,
            exempt: false,
        }
    }

    pub fn conv(
        id: impl Into<String>,
        out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            out_channels: Some(out),
            kernel: Some(Extent2::Square(kernel)),
            stride: Some(stride),
            padding: Some(padding),
            ..Self::new(id, LayerKind::Conv)
        }
    }

    pub fn fc(id: impl Into<String>, out: usize) -> Self {
        Self {
            out_channels: Some(out),
            ..Self::new(id, LayerKind::Fc)
        }
    }

    pub fn pool(
        id: impl Into<String>,
        kind: LayerKind,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            kernel: Some(Extent2::Square(kernel)),
            stride: Some(stride),
            padding: Some(padding),
            ..Self::new(id, kind)
        }
    }

    pub fn with_inputs(mut self, inputs: &[&str]) -> Self {
        self.inputs = Some(inputs.iter().map(|s| s.to_string()).collect());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescriptor {
    pub format: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    /// Input image as [C, H, W].
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// Channels × height × width of one activation tensor (per batch item).
pub type Shape3 = [usize; 3];

pub fn volume(s: &Shape3) -> u64 {
    s.iter().map(|&d| d as u64).product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedLayer {
    pub index: usize,
    pub id: String,
    pub kind: LayerKind,
    /// Source layer indices; `None` is the network input.
    pub inputs: Vec<Option<usize>>,
    pub in_shapes: Vec<Shape3>,
    pub out_shape: Shape3,
    pub conv: Option<ConvGeometry>,
    pub fma: u64,
    pub params: u64,
    pub exempt: bool,
}

impl NetworkDescriptor {
    pub fn new(name: impl Into<String>, input: [usize; 3], layers: Vec<LayerSpec>) -> Self {
        Self {
            format: DESCRIPTOR_FORMAT.into(),
            name: name.into(),
            notes: String::new(),
            input,
            layers,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text)?;
        if d.format != DESCRIPTOR_FORMAT {
            return Err(Error::Descriptor(format!(
                "unsupported descriptor format {:?}, expected {DESCRIPTOR_FORMAT:?}",
                d.format
            )));
        }
        d.resolve()?;
        Ok(d)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serialises")
    }

    /// Indices of conv/FC layers in declaration order.
    pub fn trainable_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind.is_trainable())
            .map(|(i, _)| i)
            .collect()
    }

    /// True when every layer consumes exactly the layer before it.
    pub fn is_sequential(&self) -> bool {
        self.layers
            .iter()
            .enumerate()
            .all(|(i, l)| match &l.inputs {
                None => true,
                Some(ins) => {
                    let prev = if i == 0 {
                        NETWORK_INPUT
                    } else {
                        self.layers[i - 1].id.as_str()
                    };
                    ins.len() == 1 && ins[0] == prev
                }
            })
    }

    pub fn resolve(&self) -> Result<Vec<ResolvedLayer>> {
        let err = |msg: String| Err(Error::Descriptor(format!("{}: {msg}", self.name)));
        if self.input.contains(&0) {
            return err(format!(
                "input extents must be positive, got {:?}",
                self.input
            ));
        }
        if self.layers.is_empty() {
            return err("no layers".into());
        }
        let mut index_of: HashMap<&str, usize> = HashMap::new();
        let mut out: Vec<ResolvedLayer> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            if l.id == NETWORK_INPUT || index_of.insert(&l.id, i).is_some() {
                return err(format!("duplicate or reserved layer id {:?}", l.id));
            }
            let inputs: Vec<Option<usize>> = match &l.inputs {
                None if i == 0 => vec![None],
                None => vec![Some(i - 1)],
                Some(ids) => {
                    let mut v = Vec::with_capacity(ids.len());
                    for id in ids {
                        if id == NETWORK_INPUT {
                            v.push(None);
                        } else {
                            match index_of.get(id.as_str()) {
                                Some(&j) if j < i => v.push(Some(j)),
                                _ => {
                                    return err(format!(
                                        "layer {:?} reads unknown or later layer {id:?}",
                                        l.id
                                    ))
                                }
                            }
                        }
                    }
                    v
                }
            };
            if inputs.is_empty() {
                return err(format!("layer {:?} has no inputs", l.id));
            }
            let in_shapes: Vec<Shape3> = inputs
                .iter()
                .map(|s| s.map_or(self.input, |j| out[j].out_shape))
                .collect();
            let multi = matches!(l.kind, LayerKind::Add | LayerKind::Concat);
            if !multi && in_shapes.len() != 1 {
                return err(format!("layer {:?} takes exactly one input", l.id));
            }
            let [c, h, w] = in_shapes[0];
            let need = |field: Option<usize>, name: &str| -> Result<usize> {
                field.filter(|&v| v > 0).ok_or_else(|| {
                    Error::Descriptor(format!(
                        "{}: layer {:?} needs a positive {name}",
                        self.name, l.id
                    ))
                })
            };
            let window = |l: &LayerSpec| -> Result<ConvGeometry> {
                let (kh, kw) = l.kernel.map(Extent2::hw).ok_or_else(|| {
                    Error::Descriptor(format!("{}: layer {:?} needs a kernel", self.name, l.id))
                })?;
                let g = ConvGeometry {
                    in_channels: c,
                    out_channels: l.out_channels.unwrap_or(c),
                    kernel_h: kh,
                    kernel_w: kw,
                    stride: l.stride.unwrap_or(1),
                    padding: l.padding.unwrap_or(0),
                    input_h: h,
                    input_w: w,
                };
                g.validate().map_err(|e| {
                    Error::Descriptor(format!("{}: layer {:?}: {e}", self.name, l.id))
                })?;
                Ok(g)
            };
            let (out_shape, conv, fma, params) = match l.kind {
                LayerKind::Conv => {
                    need(l.out_channels, "out_channels")?;
                    let g = window(l)?;
                    let fma = (g.output_h() * g.output_w() * g.out_channels) as u64
                        * g.window_len() as u64;
                    let params = (g.out_channels * g.window_len()) as u64;
                    (
                        [g.out_channels, g.output_h(), g.output_w()],
                        Some(g),
                        fma,
                        params,
                    )
                }
                LayerKind::Fc => {
                    let o = need(l.out_channels, "out_channels")? as u64;
                    let fan_in = volume(&in_shapes[0]);
                    ([o as usize, 1, 1], None, fan_in * o, fan_in * o)
                }
                LayerKind::Maxpool | LayerKind::Avgpool => {
                    let g = window(l)?;
                    ([c, g.output_h(), g.output_w()], None, 0, 0)
                }
                LayerKind::GlobalAvgpool => ([c, 1, 1], None, 0, 0),
                LayerKind::Relu => (in_shapes[0], None, 0, 0),
                LayerKind::Batchnorm => (in_shapes[0], None, 0, 2 * c as u64),
                LayerKind::Add => {
                    if in_shapes.iter().any(|s| *s != in_shapes[0]) {
                        return err(format!("add {:?} mixes shapes {in_shapes:?}", l.id));
                    }
                    (in_shapes[0], None, 0, 0)
                }
                LayerKind::Concat => {
                    if in_shapes.iter().any(|s| s[1..] != in_shapes[0][1..]) {
                        return err(format!(
                            "concat {:?} mixes spatial extents {in_shapes:?}",
                            l.id
                        ));
                    }
                    ([in_shapes.iter().map(|s| s[0]).sum(), h, w], None, 0, 0)
                }
            };
            out.push(ResolvedLayer {
                index: i,
                id: l.id.clone(),
                kind: l.kind,
                inputs,
                in_shapes,
                out_shape,
                conv,
                fma,
                params,
                exempt: l.exempt,
            });
        }
        Ok(out)
    }

    pub fn total_fma(&self) -> Result<u64> {
        Ok(self.resolve()?.iter().map(|l| l.fma).sum())
    }

    /// Logit count: output channels of the last conv/FC layer.
    pub fn num_classes(&self) -> Option<usize> {
        self.trainable_indices()
            .last()
            .and_then(|&i| self.layers[i].out_channels)
    }
}

/// Scale every hidden conv/FC channel count by `factor`, rounding to the
/// nearest integer (at least 1). The input image and the final classifier
/// width are unchanged.
pub fn widen_descriptor(desc: &NetworkDescriptor, factor: f64) -> Result<NetworkDescriptor> {
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "widening factor must be >= 1, got {factor}"
        )));
    }
    let last = desc.trainable_indices().last().copied();
    let mut out = desc.clone();
    for (i, l) in out.layers.iter_mut().enumerate() {
        if l.kind.is_trainable() && Some(i) != last {
            if let Some(c) = l.out_channels.as_mut() {
                *c = ((*c as f64 * factor).round() as usize).max(1);
            }
        }
    }
    if factor != 1.0 {
        out.name = format!("{}-{}x", desc.name, factor);
    }
    out.resolve()?;
    Ok(out)
}

/// FMA count of one resolved layer.
pub fn fma_count(layer: &ResolvedLayer) -> u64 {
    layer.fma
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(chans: &[usize]) -> NetworkDescriptor {
        let mut layers = vec![];
        for (i, &c) in chans.iter().enumerate() {
            layers.push(LayerSpec::conv(format!("c{i}"), c, 3, 1, 1));
            layers.push(LayerSpec::new(format!("r{i}"), LayerKind::Relu));
        }
        layers.pop();
        NetworkDescriptor::new("stack", [3, 8, 8], layers)
    }

    fn out_channels(d: &NetworkDescriptor) -> Vec<usize> {
        d.layers.iter().filter_map(|l| l.out_channels).collect()
    }

    #[test]
    fn fma_points() {
        let one = NetworkDescriptor::new("one", [1, 1, 1], vec![LayerSpec::conv("c", 1, 1, 1, 0)]);
        assert_eq!(one.resolve().unwrap()[0].fma, 1);
        let fc = NetworkDescriptor::new("fc", [512, 1, 1], vec![LayerSpec::fc("fc", 1000)]);
        assert_eq!(fc.total_fma().unwrap(), 512_000);
        let relu =
            NetworkDescriptor::new("r", [4, 2, 2], vec![LayerSpec::new("r", LayerKind::Relu)]);
        assert_eq!(relu.total_fma().unwrap(), 0);
    }

    #[test]
    fn widening_keeps_endpoints() {
        let d = stack(&[64, 10]);
        assert_eq!(
            out_channels(&widen_descriptor(&d, 1.0).unwrap()),
            vec![64, 10]
        );
        assert_eq!(widen_descriptor(&d, 1.0).unwrap(), d);
        assert_eq!(
            out_channels(&widen_descriptor(&d, 2.0).unwrap()),
            vec![128, 10]
        );
        let d = stack(&[64, 128, 10]);
        assert_eq!(
            out_channels(&widen_descriptor(&d, 2.0).unwrap()),
            vec![128, 256, 10]
        );
        assert_eq!(
            out_channels(&widen_descriptor(&d, 1.3).unwrap()),
            vec![83, 166, 10]
        );
        assert!(widen_descriptor(&d, 0.5).is_err());
        assert!(widen_descriptor(&d, f64::NAN).is_err());
    }

    #[test]
    fn widening_scales_interior_conv_by_square() {
        let d = stack(&[16, 32, 10]);
        let w = widen_descriptor(&d, 3.0).unwrap();
        let (a, b) = (d.resolve().unwrap(), w.resolve().unwrap());
        assert_eq!(b[2].fma, 9 * a[2].fma);
        assert_eq!(b[0].fma, 3 * a[0].fma);
        assert_eq!(b[4].fma, 3 * a[4].fma);
    }

    #[test]
    fn resolves_branches() {
        let d = NetworkDescriptor::new(
            "branchy",
            [4, 8, 8],
            vec![
                LayerSpec::conv("a", 6, 1, 1, 0),
                LayerSpec::conv("b", 6, 3, 1, 1).with_inputs(&["input"]),
                LayerSpec::new("sum", LayerKind::Add).with_inputs(&["a", "b"]),
                LayerSpec::new("cat", LayerKind::Concat).with_inputs(&["sum", "a", "input"]),
                LayerSpec::new("gap", LayerKind::GlobalAvgpool),
                LayerSpec::fc("fc", 3),
            ],
        );
        let r = d.resolve().unwrap();
        assert_eq!(r[3].out_shape, [16, 8, 8]);
        assert_eq!(r[5].fma, 16 * 3);
        assert!(!d.is_sequential());
        assert_eq!(d.num_classes(), Some(3));
    }

    #[test]
    fn rejects_malformed_descriptors() {
        let bad_ref = NetworkDescriptor::new(
            "x",
            [1, 4, 4],
            vec![LayerSpec::new("r", LayerKind::Relu).with_inputs(&["nope"])],
        );
        assert!(bad_ref.resolve().is_err());
        let dup = NetworkDescriptor::new(
            "x",
            [1, 4, 4],
            vec![
                LayerSpec::new("r", LayerKind::Relu),
                LayerSpec::new("r", LayerKind::Relu),
            ],
        );
        assert!(dup.resolve().is_err());
        let no_out =
            NetworkDescriptor::new("x", [1, 4, 4], vec![LayerSpec::new("c", LayerKind::Conv)]);
        assert!(no_out.resolve().is_err());
        let too_big =
            NetworkDescriptor::new("x", [1, 2, 2], vec![LayerSpec::conv("c", 1, 5, 1, 0)]);
        assert!(too_big.resolve().is_err());
        let text = stack(&[4, 2])
            .to_json()
            .replace(DESCRIPTOR_FORMAT, "other/9");
        assert!(NetworkDescriptor::from_json(&text).is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = stack(&[5, 7, 2]);
        assert_eq!(NetworkDescriptor::from_json(&d.to_json()).unwrap(), d);
    }
}
