//! Layout assignment.
//!
//! Each op may require particular layouts for its inputs and produce its
//! output in a particular layout; unspecified positions mean row-major.
//! `ConvertLayout` nodes are inserted exactly on the edges where a producer's
//! layout differs from what the consumer requires. Results are handed back
//! row-major unless they come straight from a parameter or an explicit
//! `ConvertLayout`.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::ir::{Function, Node, NodeId, Op, OpTag, Output};
use crate::layout::Layout;

/// Layout requirements of one op kind.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OpLayout {
    /// Per input position; `None` means row-major.
    pub inputs: Vec<Option<Layout>>,
    pub output: Option<Layout>,
}

/// Choice of layout for `Conv2D` data and results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvLayout {
    #[default]
    Identity,
    /// Channels-last data and output; the filter stays row-major.
    Nhwc,
}

impl ConvLayout {
    pub const ENV_VAR: &'static str = "GRAPHFORGE_CONV_LAYOUT";

    /// Reads [`ConvLayout::ENV_VAR`]; unset or empty means identity.
    pub fn from_env() -> Result<Self, String> {
        match std::env::var(Self::ENV_VAR) {
            Ok(v) if !v.is_empty() => v.parse(),
            _ => Ok(ConvLayout::Identity),
        }
    }
}

impl FromStr for ConvLayout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(ConvLayout::Identity),
            "nhwc" => Ok(ConvLayout::Nhwc),
            other => Err(format!(
                "unknown conv layout `{other}` (expected identity or nhwc)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LayoutPreferences {
    prefs: BTreeMap<OpTag, OpLayout>,
}

impl LayoutPreferences {
    /// Row-major everywhere.
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn for_conv(conv: ConvLayout) -> Self {
        let mut prefs = Self::identity();
        if conv == ConvLayout::Nhwc {
            prefs.set(
                OpTag::Conv2D,
                OpLayout {
                    inputs: vec![Some(Layout::nhwc()), None],
                    output: Some(Layout::nhwc()),
                },
            );
        }
        prefs
    }

    pub fn set(&mut self, tag: OpTag, layout: OpLayout) {
        self.prefs.insert(tag, layout);
    }

    fn fit(layout: Option<&Layout>, rank: usize) -> Layout {
        match layout {
            Some(l) if l.rank() == rank => l.clone(),
            _ => Layout::identity(rank),
        }
    }

    /// Layout `node` needs on input `index`, or `None` if it accepts any.
    pub fn required_input(&self, node: &Node, index: usize, rank: usize) -> Option<Layout> {
        if matches!(node.op, Op::ConvertLayout { .. }) {
            return None;
        }
        let pref = self
            .prefs
            .get(&node.op.tag())
            .and_then(|p| p.inputs.get(index))
            .and_then(Option::as_ref);
        Some(Self::fit(pref, rank))
    }

    pub fn produced(&self, node: &Node) -> Layout {
        let rank = node.descriptor().shape.rank();
        match &node.op {
            Op::ConvertLayout { order } => Layout::new(order.clone()).expect("validated order"),
            _ => Self::fit(
                self.prefs
                    .get(&node.op.tag())
                    .and_then(|p| p.output.as_ref()),
                rank,
            ),
        }
    }
}

/// Layout of every tensor, given the layouts the caller supplies parameters in.
pub fn tensor_layouts(
    f: &Function,
    prefs: &LayoutPreferences,
    parameter_layouts: &[Layout],
) -> BTreeMap<Output, Layout> {
    let mut out = BTreeMap::new();
    for node in f.nodes() {
        let layout = match node.op {
            Op::Parameter(ref d) => f
                .parameters()
                .iter()
                .position(|p| *p == node.id)
                .and_then(|i| parameter_layouts.get(i).cloned())
                .unwrap_or_else(|| Layout::identity(d.shape.rank())),
            Op::Constant { ref descriptor, .. } => Layout::identity(descriptor.shape.rank()),
            _ => prefs.produced(node),
        };
        out.insert(Output::from(node.id), layout);
    }
    out
}

/// Inserts the conversions needed for row-major parameters.
pub fn assign_layouts(f: &Function, prefs: &LayoutPreferences) -> Function {
    assign_layouts_with(f, prefs, &[])
}

pub fn assign_layouts_with(
    f: &Function,
    prefs: &LayoutPreferences,
    parameter_layouts: &[Layout],
) -> Function {
    let mut g = f.clone();
    let layouts = tensor_layouts(f, prefs, parameter_layouts);
    let order = f
        .topological_order()
        .expect("layout assignment requires a valid function");
    let mut conversions: BTreeMap<(Output, Layout), NodeId> = BTreeMap::new();

    let mut convert = |g: &mut Function, source: Output, target: Layout| -> Output {
        if let Some(&id) = conversions.get(&(source, target.clone())) {
            return id.into();
        }
        let id = g
            .add_node(
                Op::ConvertLayout {
                    order: target.order().to_vec(),
                },
                [source],
            )
            .expect("conversion of a valid tensor");
        conversions.insert((source, target), id);
        id.into()
    };

    for id in order {
        let node = f.node(id).unwrap();
        for (index, input) in node.inputs.iter().enumerate() {
            let rank = f.descriptor(*input).unwrap().shape.rank();
            let Some(required) = prefs.required_input(node, index, rank) else {
                continue;
            };
            if layouts[input] != required {
                let converted = convert(&mut g, *input, required);
                g.node_mut(id).unwrap().inputs[index] = converted;
            }
        }
    }

    let mut results = g.results().to_vec();
    for r in results.iter_mut() {
        let producer = f.node(r.node).unwrap();
        if matches!(producer.op, Op::Parameter(_) | Op::ConvertLayout { .. }) {
            continue;
        }
        let layout = &layouts[r];
        if !layout.is_identity() {
            *r = convert(&mut g, *r, Layout::identity(layout.rank()));
        }
    }
    g.set_results(results).expect("results exist");
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ElementType, Padding, TensorDescriptor};

    fn d(shape: &[usize]) -> TensorDescriptor {
        TensorDescriptor::new(ElementType::F64, shape)
    }

    fn conv_net() -> Function {
        let mut f = Function::new("net");
        let x = f.add_parameter(d(&[1, 4])).unwrap();
        let w = f.add_parameter(d(&[4, 18])).unwrap();
        let h = f.add_node(Op::Dot, [x, w]).unwrap();
        let img = f.add_node(Op::reshape([0, 1], [1, 2, 3, 3]), [h]).unwrap();
        let k = f.add_parameter(d(&[2, 2, 2, 2])).unwrap();
        let c = f
            .add_node(Op::conv2d((1, 1), Padding::default()), [img, k])
            .unwrap();
        let flat = f.add_node(Op::reshape([0, 1, 2, 3], [1, 8]), [c]).unwrap();
        let w2 = f.add_parameter(d(&[8, 2])).unwrap();
        let out = f.add_node(Op::Dot, [flat, w2]).unwrap();
        f.add_result(out).unwrap();
        f
    }

    #[test]
    fn identity_prefs_insert_nothing() {
        let f = conv_net();
        assert_eq!(assign_layouts(&f, &LayoutPreferences::identity()), f);
    }

    #[test]
    fn nhwc_conv_gets_one_conversion_per_boundary() {
        let f = conv_net();
        let g = assign_layouts(&f, &LayoutPreferences::for_conv(ConvLayout::Nhwc));
        assert_eq!(g.count_ops(OpTag::ConvertLayout), 2);
        assert!(g.validate().is_empty());
        // idempotent once conversions are in place
        let again = assign_layouts(&g, &LayoutPreferences::for_conv(ConvLayout::Nhwc));
        assert_eq!(again, g);
    }

    #[test]
    fn shared_conversions_are_reused() {
        let mut f = Function::new("shared");
        let x = f.add_parameter(d(&[1, 2, 3, 3])).unwrap();
        let k1 = f.add_parameter(d(&[1, 2, 2, 2])).unwrap();
        let k2 = f.add_parameter(d(&[1, 2, 2, 2])).unwrap();
        let c1 = f
            .add_node(Op::conv2d((1, 1), Padding::default()), [x, k1])
            .unwrap();
        let c2 = f
            .add_node(Op::conv2d((1, 1), Padding::default()), [x, k2])
            .unwrap();
        let s = f.add_node(Op::Add, [c1, c2]).unwrap();
        f.add_result(s).unwrap();
        let g = assign_layouts(&f, &LayoutPreferences::for_conv(ConvLayout::Nhwc));
        // x once, then c1 and c2 back to row-major for the Add
        assert_eq!(g.count_ops(OpTag::ConvertLayout), 3);
    }

    #[test]
    fn result_conv_is_returned_row_major() {
        let mut f = Function::new("r");
        let x = f.add_parameter(d(&[1, 1, 3, 3])).unwrap();
        let k = f.add_parameter(d(&[1, 1, 2, 2])).unwrap();
        let c = f
            .add_node(Op::conv2d((1, 1), Padding::default()), [x, k])
            .unwrap();
        f.add_result(c).unwrap();
        let g = assign_layouts(&f, &LayoutPreferences::for_conv(ConvLayout::Nhwc));
        let r = g.results()[0];
        assert_ne!(r.node, c);
        assert_eq!(
            g.node(r.node).unwrap().op,
            Op::ConvertLayout {
                order: vec![0, 1, 2, 3]
            }
        );
    }

    #[test]
    fn parse_conv_layout() {
        assert_eq!("nhwc".parse::<ConvLayout>().unwrap(), ConvLayout::Nhwc);
        assert_eq!(
            "identity".parse::<ConvLayout>().unwrap(),
            ConvLayout::Identity
        );
        assert!("nchw".parse::<ConvLayout>().is_err());
    }
}
