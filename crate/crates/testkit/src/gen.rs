use graphforge::interp::TensorValue;
use graphforge::ir::{
    build_softmax, Buffer, ElementType, Function, NodeId, Op, Padding, Shape, TensorDescriptor,
};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct GraphConfig {
    pub max_nodes: usize,
    pub element_type: ElementType,
    /// Add a small I64 subgraph with its own result.
    pub integer_branch: bool,
    /// Leave out ops the gradient builder rejects: standalone max
    /// reductions, strided convolutions and `ConvertLayout`.
    pub differentiable_only: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            max_nodes: 25,
            element_type: ElementType::F64,
            integer_branch: true,
            differentiable_only: false,
        }
    }
}

pub fn random_buffer(rng: &mut impl Rng, et: ElementType, len: usize) -> Buffer {
    match et {
        ElementType::F32 => Buffer::F32((0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()),
        ElementType::F64 => Buffer::F64((0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()),
        ElementType::I64 => Buffer::I64((0..len).map(|_| rng.gen_range(-5..=5)).collect()),
        ElementType::Bool => Buffer::Bool((0..len).map(|_| rng.gen()).collect()),
    }
}

/// Row-major random values for every parameter of `f`.
pub fn random_inputs(rng: &mut impl Rng, f: &Function) -> Vec<TensorValue> {
    f.parameter_descriptors()
        .into_iter()
        .map(|d| {
            let b = random_buffer(rng, d.element_type, d.element_count());
            TensorValue::from_row_major(d, b).unwrap()
        })
        .collect()
}

struct Gen<'r, R: Rng> {
    f: Function,
    rng: &'r mut R,
    et: ElementType,
    max: usize,
    pool: Vec<NodeId>,
    smooth: bool,
}

impl<R: Rng> Gen<'_, R> {
    fn room(&self, cost: usize) -> bool {
        self.f.node_count() + cost <= self.max
    }

    fn shape_of(&self, id: NodeId) -> Shape {
        self.f.node(id).unwrap().descriptor().shape.clone()
    }

    fn random_shape(&mut self, max_rank: usize) -> Shape {
        let rank = self.rng.gen_range(0..=max_rank);
        let dims: Vec<usize> = (0..rank)
            .map(|_| {
                if self.rng.gen_ratio(1, 25) {
                    0
                } else {
                    self.rng.gen_range(1..=4)
                }
            })
            .collect();
        Shape::new(dims)
    }

    fn desc(&self, shape: Shape) -> TensorDescriptor {
        TensorDescriptor::new(self.et, shape)
    }

    fn constant(&mut self, shape: Shape) -> NodeId {
        let d = self.desc(shape);
        let value = random_buffer(self.rng, self.et, d.element_count());
        self.f.add_constant(d, value).unwrap()
    }

    fn filled(&mut self, shape: Shape, v: f64) -> NodeId {
        let d = self.desc(shape);
        let value = Buffer::filled(self.et, d.element_count(), v);
        self.f.add_constant(d, value).unwrap()
    }

    fn leaf(&mut self, shape: Shape) -> NodeId {
        if self.rng.gen_bool(0.6) {
            self.f.add_parameter(self.desc(shape)).unwrap()
        } else {
            self.constant(shape)
        }
    }

    fn pick(&mut self) -> NodeId {
        // favour recent tensors so graphs grow deep as well as wide
        let n = self.pool.len();
        if self.rng.gen_bool(0.5) {
            self.pool[n - 1 - self.rng.gen_range(0..n.min(3))]
        } else {
            *self.pool.choose(self.rng).unwrap()
        }
    }

    fn pick_where(&mut self, ok: impl Fn(&Shape) -> bool) -> Option<NodeId> {
        let fits: Vec<NodeId> = self
            .pool
            .iter()
            .copied()
            .filter(|&id| ok(&self.shape_of(id)))
            .collect();
        fits.choose(self.rng).copied()
    }

    fn add(&mut self, op: Op, inputs: &[NodeId]) -> NodeId {
        let id = self.f.add_node(op, inputs.iter().copied()).unwrap();
        self.pool.push(id);
        id
    }

    fn partner(&mut self, a: NodeId) -> NodeId {
        let d = self.f.node(a).unwrap().descriptor().clone();
        let same: Vec<NodeId> = self
            .pool
            .iter()
            .copied()
            .filter(|&id| *self.f.node(id).unwrap().descriptor() == d)
            .collect();
        match self.rng.gen_range(0..4) {
            0 => a,
            1 | 2 => *same.choose(self.rng).unwrap(),
            _ => self.leaf(d.shape),
        }
    }

    fn permutation(&mut self, rank: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..rank).collect();
        p.shuffle(self.rng);
        p
    }

    fn step(&mut self) {
        match self.rng.gen_range(0..15) {
            0 | 1 if self.room(1) => {
                let a = self.pick();
                let op = [Op::Negate, Op::Exp, Op::Tanh, Op::Sigmoid, Op::Relu]
                    .choose(self.rng)
                    .unwrap()
                    .clone();
                self.add(op, &[a]);
            }
            2 if self.room(2) => {
                let a = self.pick();
                let x = if self.rng.gen_ratio(3, 4) {
                    self.add(Op::Sigmoid, &[a])
                } else {
                    a
                };
                self.add(Op::Log, &[x]);
            }
            3 | 4 if self.room(2) => {
                let a = self.pick();
                let b = self.partner(a);
                let op = [Op::Add, Op::Subtract, Op::Multiply, Op::Divide, Op::Maximum]
                    .choose(self.rng)
                    .unwrap()
                    .clone();
                let (x, y) = if self.rng.gen() { (a, b) } else { (b, a) };
                self.add(op, &[x, y]);
            }
            5 if self.room(3) => {
                let a = self.pick();
                let shape = self.shape_of(a);
                match self.rng.gen_range(0..7) {
                    0 => {
                        let z = self.filled(shape, 0.0);
                        self.add(Op::Add, &[a, z]);
                    }
                    1 => {
                        let z = self.filled(shape, 0.0);
                        self.add(Op::Add, &[z, a]);
                    }
                    2 => {
                        let z = self.filled(shape, 0.0);
                        self.add(Op::Subtract, &[a, z]);
                    }
                    3 => {
                        let one = self.filled(shape, 1.0);
                        self.add(Op::Multiply, &[a, one]);
                    }
                    4 => {
                        let one = self.filled(shape, 1.0);
                        self.add(Op::Multiply, &[one, a]);
                    }
                    5 => {
                        let one = self.filled(shape, 1.0);
                        self.add(Op::Divide, &[a, one]);
                    }
                    _ => {
                        let n = self.add(Op::Negate, &[a]);
                        self.add(Op::Negate, &[n]);
                    }
                }
            }
            6 if self.room(3) => {
                let a = match self.pick_where(|s| s.rank() == 2) {
                    Some(a) => a,
                    None => {
                        let dims = [self.rng.gen_range(1..=3), self.rng.gen_range(1..=3)];
                        self.leaf(Shape::new(dims))
                    }
                };
                let k = self.shape_of(a).0[1];
                let n = self.rng.gen_range(1..=3);
                let b = self.leaf(Shape::new([k, n]));
                self.add(Op::Dot, &[a, b]);
            }
            7 if self.room(1) => {
                let Some(a) = self.pick_where(|s| s.rank() <= 3) else {
                    return;
                };
                let mut dims = self.shape_of(a).0;
                let axis = self.rng.gen_range(0..=dims.len());
                dims.insert(axis, self.rng.gen_range(1..=3));
                self.add(Op::broadcast(dims, [axis]), &[a]);
            }
            8 if self.room(1) => {
                let Some(a) = self.pick_where(|s| s.rank() >= 1) else {
                    return;
                };
                let rank = self.shape_of(a).rank();
                let axes: Vec<usize> = (0..rank).filter(|_| self.rng.gen_bool(0.5)).collect();
                let op = if !self.smooth && self.rng.gen_ratio(1, 5) {
                    Op::max_reduce(axes)
                } else {
                    Op::sum(axes)
                };
                self.add(op, &[a]);
            }
            9 if self.room(2) => {
                let a = self.pick();
                let shape = self.shape_of(a);
                let order = self.permutation(shape.rank());
                let permuted = shape.permuted(&order);
                match self.rng.gen_range(0..3) {
                    0 => {
                        self.add(Op::reshape(order, permuted), &[a]);
                    }
                    1 => {
                        self.add(Op::reshape(order, [shape.element_count()]), &[a]);
                    }
                    _ if shape.rank() == 2 => {
                        let t = self.add(Op::reshape([1, 0], permuted), &[a]);
                        self.add(Op::reshape([1, 0], shape), &[t]);
                    }
                    _ => {
                        let mut dims = permuted.0.clone();
                        dims.insert(0, 1);
                        self.add(Op::reshape(order, dims), &[a]);
                    }
                }
            }
            10 if self.room(7) => {
                let Some(a) = self.pick_where(|s| s.rank() >= 1) else {
                    return;
                };
                let axis = self.rng.gen_range(0..self.shape_of(a).rank());
                let out = build_softmax(&mut self.f, a, axis).unwrap();
                self.pool.push(out);
            }
            11 if self.room(4) => {
                let existing = self.pick_where(|s| s.rank() == 4 && s.0[2] >= 3 && s.0[3] >= 3);
                let x = match existing {
                    Some(x) if self.rng.gen() => x,
                    _ => {
                        let dims = [
                            self.rng.gen_range(1..=2),
                            self.rng.gen_range(1..=2),
                            self.rng.gen_range(3..=5),
                            self.rng.gen_range(3..=5),
                        ];
                        self.leaf(Shape::new(dims))
                    }
                };
                let c = self.shape_of(x).0[1];
                let filter = [
                    self.rng.gen_range(1..=2),
                    c,
                    self.rng.gen_range(1..=3),
                    self.rng.gen_range(1..=3),
                ];
                let w = self.leaf(Shape::new(filter));
                let top = if self.smooth { 1 } else { 2 };
                let strides = (self.rng.gen_range(1..=top), self.rng.gen_range(1..=top));
                let padding = Padding {
                    top: self.rng.gen_range(0..=1),
                    bottom: self.rng.gen_range(0..=1),
                    left: self.rng.gen_range(0..=1),
                    right: self.rng.gen_range(0..=1),
                };
                self.add(Op::conv2d(strides, padding), &[x, w]);
            }
            12 if self.room(1) && !self.smooth => {
                let Some(a) = self.pick_where(|s| s.rank() >= 2) else {
                    return;
                };
                let order = self.permutation(self.shape_of(a).rank());
                self.add(Op::ConvertLayout { order }, &[a]);
            }
            13 if self.room(4) => {
                let shape = self.random_shape(2);
                let c = self.constant(shape.clone());
                let op = [Op::Exp, Op::Tanh, Op::Negate]
                    .choose(self.rng)
                    .unwrap()
                    .clone();
                let u = self.add(op, &[c]);
                if self.rng.gen() {
                    let b = self.constant(shape);
                    self.add(Op::Add, &[u, b]);
                }
            }
            _ if self.room(1) => {
                let shape = self.random_shape(3);
                let l = self.leaf(shape);
                self.pool.push(l);
            }
            _ => {}
        }
    }

    fn integer_branch(&mut self) -> Option<NodeId> {
        if !self.room(6) {
            return None;
        }
        let d = TensorDescriptor::new(ElementType::I64, [2, 3]);
        let p = self.f.add_parameter(d.clone()).unwrap();
        let c = self
            .f
            .add_constant(d, Buffer::I64(vec![3, -1, 0, 7, 2, -4]))
            .unwrap();
        let m = self.f.add_node(Op::Multiply, [p, c]).unwrap();
        let a = self.f.add_node(Op::Add, [m, p]).unwrap();
        let n = self.f.add_node(Op::Negate, [a]).unwrap();
        let s = self.f.add_node(Op::sum([1]), [n]).unwrap();
        Some(s)
    }
}

/// A random valid function of at most `config.max_nodes` nodes drawing on
/// the whole user-facing op set.
pub fn random_function(rng: &mut impl Rng, config: &GraphConfig) -> Function {
    let target = rng.gen_range(4..=config.max_nodes.max(4));
    let mut g = Gen {
        f: Function::new("random"),
        rng,
        et: config.element_type,
        max: config.max_nodes,
        pool: Vec::new(),
        smooth: config.differentiable_only,
    };
    let shape = g.random_shape(3);
    let p = g.f.add_parameter(g.desc(shape)).unwrap();
    g.pool.push(p);
    let int_result = if config.integer_branch && g.rng.gen_ratio(1, 4) {
        g.integer_branch()
    } else {
        None
    };
    let mut attempts = 0;
    while g.f.node_count() < target && attempts < 200 {
        g.step();
        attempts += 1;
    }

    let last = *g.pool.last().unwrap();
    g.f.add_result(last).unwrap();
    for _ in 0..g.rng.gen_range(0..=2) {
        let extra = *g.pool.choose(g.rng).unwrap();
        g.f.add_result(extra).unwrap();
    }
    if let Some(s) = int_result {
        g.f.add_result(s).unwrap();
    }
    g.f
}
