use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use super::buffer::Buffer;
use super::infer::infer_output;
use super::op::{Op, OpTag};
use super::types::TensorDescriptor;
use super::IrError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

/// One output port of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Output {
    pub node: NodeId,
    pub port: u32,
}

impl Output {
    pub fn new(node: NodeId, port: u32) -> Self {
        Output { node, port }
    }
}

impl From<NodeId> for Output {
    fn from(node: NodeId) -> Self {
        Output { node, port: 0 }
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub op: Op,
    pub inputs: Vec<Output>,
    pub outputs: Vec<TensorDescriptor>,
}

impl Node {
    /// Descriptor of port 0. Every core op has exactly one output.
    pub fn descriptor(&self) -> &TensorDescriptor {
        &self.outputs[0]
    }
}

/// A violation of the graph invariants, reported by [`Function::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    CycleDetected {
        nodes: Vec<NodeId>,
    },
    UnknownInput {
        node: NodeId,
        input: Output,
    },
    DescriptorMismatch {
        node: NodeId,
        stored: Vec<TensorDescriptor>,
        inferred: TensorDescriptor,
    },
    InferenceFailed {
        node: NodeId,
        error: IrError,
    },
    ParameterNotListed {
        node: NodeId,
    },
    ParameterListedTwice {
        node: NodeId,
    },
    NotAParameter {
        node: NodeId,
    },
    InvalidResult {
        output: Output,
    },
    IdMismatch {
        key: NodeId,
        node: NodeId,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::CycleDetected { nodes } => {
                let ids: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
                write!(f, "cycle detected among nodes {{{}}}", ids.join(", "))
            }
            Diagnostic::UnknownInput { node, input } => {
                write!(f, "node {node}: input {input} does not exist")
            }
            Diagnostic::DescriptorMismatch {
                node,
                stored,
                inferred,
            } => {
                let stored: Vec<String> = stored.iter().map(|d| d.to_string()).collect();
                write!(
                    f,
                    "node {node}: stored output [{}] disagrees with inferred {inferred}",
                    stored.join(", ")
                )
            }
            Diagnostic::InferenceFailed { node, error } => write!(f, "node {node}: {error}"),
            Diagnostic::ParameterNotListed { node } => {
                write!(f, "node {node}: parameter missing from the parameter list")
            }
            Diagnostic::ParameterListedTwice { node } => {
                write!(f, "node {node}: listed more than once as a parameter")
            }
            Diagnostic::NotAParameter { node } => {
                write!(
                    f,
                    "node {node}: listed as a parameter but is not a Parameter node"
                )
            }
            Diagnostic::InvalidResult { output } => {
                write!(f, "result {output} does not refer to an existing output")
            }
            Diagnostic::IdMismatch { key, node } => {
                write!(f, "node stored under id {key} carries id {node}")
            }
        }
    }
}

/// A directed acyclic graph of stateless ops with ordered parameters and results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    name: String,
    nodes: BTreeMap<NodeId, Node>,
    parameters: Vec<NodeId>,
    results: Vec<Output>,
}

impl Function {
    pub fn new(name: impl Into<String>) -> Self {
        Function {
            name: name.into(),
            nodes: BTreeMap::new(),
            parameters: Vec::new(),
            results: Vec::new(),
        }
    }

    /// Assembles a function without checking anything. Use
    /// [`Function::validate`] before handing the result to a pass.
    pub fn from_parts(
        name: impl Into<String>,
        nodes: impl IntoIterator<Item = Node>,
        parameters: Vec<NodeId>,
        results: Vec<Output>,
    ) -> Self {
        Function {
            name: name.into(),
            nodes: nodes.into_iter().map(|n| (n.id, n)).collect(),
            parameters,
            results,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn parameters(&self) -> &[NodeId] {
        &self.parameters
    }

    pub fn results(&self) -> &[Output] {
        &self.results
    }

    pub fn descriptor(&self, output: Output) -> Option<&TensorDescriptor> {
        self.nodes
            .get(&output.node)
            .and_then(|n| n.outputs.get(output.port as usize))
    }

    pub fn parameter_descriptors(&self) -> Vec<TensorDescriptor> {
        self.parameters
            .iter()
            .map(|p| self.nodes[p].descriptor().clone())
            .collect()
    }

    pub fn result_descriptors(&self) -> Vec<TensorDescriptor> {
        self.results
            .iter()
            .map(|r| self.descriptor(*r).expect("dangling result").clone())
            .collect()
    }

    fn next_id(&self) -> NodeId {
        NodeId(self.nodes.keys().next_back().map_or(1, |id| id.0 + 1))
    }

    pub fn add_parameter(&mut self, descriptor: TensorDescriptor) -> Result<NodeId, IrError> {
        self.add_node(Op::Parameter(descriptor), Vec::<Output>::new())
    }

    pub fn add_constant(
        &mut self,
        descriptor: TensorDescriptor,
        value: Buffer,
    ) -> Result<NodeId, IrError> {
        self.add_node(Op::Constant { descriptor, value }, Vec::<Output>::new())
    }

    /// Appends a node with id one past the current maximum. Parameter nodes
    /// are also appended to the parameter list. Internal ops are rejected.
    pub fn add_node<I, O>(&mut self, op: Op, inputs: I) -> Result<NodeId, IrError>
    where
        I: IntoIterator<Item = O>,
        O: Into<Output>,
    {
        if op.tag().is_internal() {
            return Err(IrError::InternalOp(op.tag()));
        }
        self.add_op(op, inputs.into_iter().map(Into::into).collect())
    }

    pub(crate) fn add_op(&mut self, op: Op, inputs: Vec<Output>) -> Result<NodeId, IrError> {
        let mut descs = Vec::with_capacity(inputs.len());
        for input in &inputs {
            match self.descriptor(*input) {
                Some(d) => descs.push(d.clone()),
                None => return Err(IrError::UnknownInput(*input)),
            }
        }
        let out = infer_output(&op, &descs)?;
        let id = self.next_id();
        if matches!(op, Op::Parameter(_)) {
            self.parameters.push(id);
        }
        self.nodes.insert(
            id,
            Node {
                id,
                op,
                inputs,
                outputs: vec![out],
            },
        );
        Ok(id)
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Option<&mut Node> {
        self.nodes.get_mut(&id)
    }

    pub fn add_result(&mut self, output: impl Into<Output>) -> Result<(), IrError> {
        let output = output.into();
        if self.descriptor(output).is_none() {
            return Err(IrError::UnknownInput(output));
        }
        self.results.push(output);
        Ok(())
    }

    pub fn set_results(&mut self, results: Vec<Output>) -> Result<(), IrError> {
        if let Some(bad) = results.iter().find(|r| self.descriptor(**r).is_none()) {
            return Err(IrError::UnknownInput(*bad));
        }
        self.results = results;
        Ok(())
    }

    /// Consumer node ids per producer, one entry per input edge, in id order.
    pub fn consumers(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut map: BTreeMap<NodeId, Vec<NodeId>> =
            self.nodes.keys().map(|&id| (id, Vec::new())).collect();
        for node in self.nodes.values() {
            for input in &node.inputs {
                if let Some(list) = map.get_mut(&input.node) {
                    list.push(node.id);
                }
            }
        }
        map
    }

    /// Kahn's algorithm, always taking the smallest ready id.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, IrError> {
        let (order, leftover) = self.kahn();
        if leftover.is_empty() {
            Ok(order)
        } else {
            Err(IrError::CycleDetected(self.cycle_members(&leftover)))
        }
    }

    fn kahn(&self) -> (Vec<NodeId>, BTreeSet<NodeId>) {
        let mut indegree: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut users: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for node in self.nodes.values() {
            let deg = node
                .inputs
                .iter()
                .filter(|i| self.nodes.contains_key(&i.node))
                .count();
            indegree.insert(node.id, deg);
            for input in &node.inputs {
                if self.nodes.contains_key(&input.node) {
                    users.entry(input.node).or_default().push(node.id);
                }
            }
        }
        let mut ready: BinaryHeap<Reverse<NodeId>> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| Reverse(id))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(id)) = ready.pop() {
            order.push(id);
            for user in users.get(&id).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indegree.get_mut(user).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(*user));
                }
            }
        }
        let placed: BTreeSet<NodeId> = order.iter().copied().collect();
        let leftover = self
            .nodes
            .keys()
            .filter(|id| !placed.contains(id))
            .copied()
            .collect();
        (order, leftover)
    }

    /// Narrows the nodes Kahn could not place down to those lying on a cycle,
    /// by repeatedly trimming nodes with no remaining successor.
    fn cycle_members(&self, leftover: &BTreeSet<NodeId>) -> Vec<NodeId> {
        let mut remaining = leftover.clone();
        loop {
            let has_successor: BTreeSet<NodeId> = remaining
                .iter()
                .flat_map(|id| self.nodes[id].inputs.iter().map(|i| i.node))
                .filter(|p| remaining.contains(p))
                .collect();
            let before = remaining.len();
            remaining.retain(|id| has_successor.contains(id));
            if remaining.len() == before {
                break;
            }
        }
        remaining.into_iter().collect()
    }

    /// Checks every graph invariant. An empty list means the function is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut wired = BTreeSet::new();

        for (&key, node) in &self.nodes {
            if key != node.id {
                diags.push(Diagnostic::IdMismatch { key, node: node.id });
            }
            let mut ok = true;
            for input in &node.inputs {
                if self.descriptor(*input).is_none() {
                    diags.push(Diagnostic::UnknownInput {
                        node: node.id,
                        input: *input,
                    });
                    ok = false;
                }
            }
            if ok {
                wired.insert(key);
            }
        }

        let mut listed = BTreeSet::new();
        for &p in &self.parameters {
            match self.nodes.get(&p) {
                Some(n) if matches!(n.op, Op::Parameter(_)) => {
                    if !listed.insert(p) {
                        diags.push(Diagnostic::ParameterListedTwice { node: p });
                    }
                }
                _ => diags.push(Diagnostic::NotAParameter { node: p }),
            }
        }
        for node in self.nodes.values() {
            if matches!(node.op, Op::Parameter(_)) && !listed.contains(&node.id) {
                diags.push(Diagnostic::ParameterNotListed { node: node.id });
            }
        }

        for &r in &self.results {
            if self.descriptor(r).is_none() {
                diags.push(Diagnostic::InvalidResult { output: r });
            }
        }

        let (_, leftover) = self.kahn();
        let cyclic: BTreeSet<NodeId> = if leftover.is_empty() {
            BTreeSet::new()
        } else {
            let members = self.cycle_members(&leftover);
            diags.push(Diagnostic::CycleDetected {
                nodes: members.clone(),
            });
            leftover
        };

        for node in self.nodes.values() {
            if !wired.contains(&node.id) || cyclic.contains(&node.id) {
                continue;
            }
            let descs: Vec<TensorDescriptor> = node
                .inputs
                .iter()
                .map(|i| self.descriptor(*i).unwrap().clone())
                .collect();
            match infer_output(&node.op, &descs) {
                Ok(inferred) => {
                    if node.outputs.len() != 1 || node.outputs[0] != inferred {
                        diags.push(Diagnostic::DescriptorMismatch {
                            node: node.id,
                            stored: node.outputs.clone(),
                            inferred,
                        });
                    }
                }
                Err(error) => diags.push(Diagnostic::InferenceFailed {
                    node: node.id,
                    error,
                }),
            }
        }
        diags
    }

    /// Nodes reachable backwards from the results. Parameters are always kept.
    pub fn reachable(&self) -> BTreeSet<NodeId> {
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.results.iter().map(|r| r.node).collect();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            if let Some(node) = self.nodes.get(&id) {
                stack.extend(node.inputs.iter().map(|i| i.node));
            }
        }
        seen.extend(self.parameters.iter().copied());
        seen
    }

    /// Drops every node not reachable from a result, except parameters.
    /// Returns the number of nodes removed.
    pub fn prune_unreachable(&mut self) -> usize {
        let keep = self.reachable();
        let before = self.nodes.len();
        self.nodes.retain(|id, _| keep.contains(id));
        before - self.nodes.len()
    }

    /// Redirects every use of `old` (node inputs and results) to `new`.
    pub(crate) fn replace_uses(&mut self, old: Output, new: Output) {
        for node in self.nodes.values_mut() {
            for input in node.inputs.iter_mut() {
                if *input == old {
                    *input = new;
                }
            }
        }
        for r in self.results.iter_mut() {
            if *r == old {
                *r = new;
            }
        }
    }

    pub(crate) fn remove_node(&mut self, id: NodeId) -> Option<Node> {
        self.parameters.retain(|p| *p != id);
        self.nodes.remove(&id)
    }

    /// Replaces a node's op and inputs in place, re-inferring its output.
    pub(crate) fn replace_op(
        &mut self,
        id: NodeId,
        op: Op,
        inputs: Vec<Output>,
    ) -> Result<(), IrError> {
        let descs: Vec<TensorDescriptor> = inputs
            .iter()
            .map(|i| {
                self.descriptor(*i)
                    .cloned()
                    .ok_or(IrError::UnknownInput(*i))
            })
            .collect::<Result<_, _>>()?;
        let out = infer_output(&op, &descs)?;
        let node = self.nodes.get_mut(&id).ok_or(IrError::UnknownNode(id))?;
        node.op = op;
        node.inputs = inputs;
        node.outputs = vec![out];
        Ok(())
    }

    pub fn count_ops(&self, tag: OpTag) -> usize {
        self.nodes.values().filter(|n| n.op.tag() == tag).count()
    }
}
