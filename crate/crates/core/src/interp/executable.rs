use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ir::{Buffer, Function, NodeId, Op, Output, TensorDescriptor};
use crate::layout::Layout;
use crate::passes::{
    assign_layouts_with, plan_memory, run_pipeline, tensor_layouts, ConvLayout, LayoutPreferences,
    MemoryPlan, Pass,
};

use super::kernels::{evaluate, KernelInput};
use super::{ExecError, TensorValue};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileOptions {
    /// Run simplify, cse and fold before lowering.
    pub optimize: bool,
    pub conv_layout: ConvLayout,
    /// Layouts callers will pass parameters in; empty means row-major.
    pub parameter_layouts: Vec<Layout>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            optimize: true,
            conv_layout: ConvLayout::Identity,
            parameter_layouts: Vec::new(),
        }
    }
}

impl CompileOptions {
    pub fn unoptimized() -> Self {
        CompileOptions {
            optimize: false,
            ..Self::default()
        }
    }

    pub fn pipeline(&self) -> Vec<Pass> {
        if self.optimize {
            vec![Pass::Simplify, Pass::Cse, Pass::Fold]
        } else {
            Vec::new()
        }
    }
}

/// Where a tensor lives during a call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Parameter(usize),
    Constant(usize),
    Arena { offset: usize },
    Result(usize),
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Parameter(i) => write!(f, "param{i}"),
            Slot::Constant(i) => write!(f, "const{i}"),
            Slot::Arena { offset } => write!(f, "arena+{offset}"),
            Slot::Result(i) => write!(f, "result{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operand {
    pub tensor: Output,
    pub slot: Slot,
    pub descriptor: TensorDescriptor,
    pub layout: Layout,
    /// Buffer position of each logical element; `None` for row-major.
    positions: Option<Vec<usize>>,
}

impl Operand {
    fn new(tensor: Output, slot: Slot, descriptor: TensorDescriptor, layout: Layout) -> Self {
        let positions = (!layout.is_identity()).then(|| layout.positions(&descriptor.shape));
        Operand {
            tensor,
            slot,
            descriptor,
            layout,
            positions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub node: NodeId,
    pub op: Op,
    pub inputs: Vec<Operand>,
    pub output: Operand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub parameters: Vec<(TensorDescriptor, Layout)>,
    pub results: Vec<(TensorDescriptor, Layout)>,
}

/// A compiled function. Immutable; every call gets its own arena.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Executable {
    function: Function,
    instructions: Vec<Instruction>,
    plan: MemoryPlan,
    constants: Vec<Buffer>,
    signature: Signature,
    results: Vec<Operand>,
    result_slots: usize,
}

pub fn compile(f: &Function, options: &CompileOptions) -> Result<Executable, ExecError> {
    let diagnostics = f.validate();
    if !diagnostics.is_empty() {
        return Err(ExecError::Invalid(diagnostics));
    }
    let parameter_layouts: Vec<Layout> = if options.parameter_layouts.is_empty() {
        f.parameter_descriptors()
            .iter()
            .map(|d| Layout::identity(d.shape.rank()))
            .collect()
    } else {
        if options.parameter_layouts.len() != f.parameters().len() {
            return Err(ExecError::SignatureMismatch(format!(
                "{} parameter layouts for {} parameters",
                options.parameter_layouts.len(),
                f.parameters().len()
            )));
        }
        for (d, l) in f
            .parameter_descriptors()
            .iter()
            .zip(&options.parameter_layouts)
        {
            if d.shape.rank() != l.rank() {
                return Err(ExecError::RankMismatch {
                    shape: d.shape.clone(),
                    layout: l.rank(),
                });
            }
        }
        options.parameter_layouts.clone()
    };

    let prefs = LayoutPreferences::for_conv(options.conv_layout);
    let mut g = run_pipeline(f, &options.pipeline(), &prefs)?;
    g.prune_unreachable();
    let g = assign_layouts_with(&g, &prefs, &parameter_layouts);
    let layouts = tensor_layouts(&g, &prefs, &parameter_layouts);
    let plan = plan_memory(&g);

    let mut slots: BTreeMap<Output, Slot> = BTreeMap::new();
    for (i, p) in g.parameters().iter().enumerate() {
        slots.insert((*p).into(), Slot::Parameter(i));
    }
    let mut constants = Vec::new();
    for node in g.nodes() {
        if let Op::Constant { value, .. } = &node.op {
            slots.insert(node.id.into(), Slot::Constant(constants.len()));
            constants.push(value.clone());
        }
    }
    for p in &plan.placements {
        slots.insert(p.tensor(), Slot::Arena { offset: p.offset });
    }
    let mut result_slots = 0;
    for r in g.results() {
        slots.entry(*r).or_insert_with(|| {
            result_slots += 1;
            Slot::Result(result_slots - 1)
        });
    }

    let operand = |t: Output| {
        Operand::new(
            t,
            slots[&t],
            g.descriptor(t).unwrap().clone(),
            layouts[&t].clone(),
        )
    };
    let order = g.topological_order()?;
    let instructions = order
        .iter()
        .map(|&id| g.node(id).unwrap())
        .filter(|n| !n.op.is_source())
        .map(|n| Instruction {
            node: n.id,
            op: n.op.clone(),
            inputs: n.inputs.iter().map(|&i| operand(i)).collect(),
            output: operand(n.id.into()),
        })
        .collect();
    let results: Vec<Operand> = g.results().iter().map(|&r| operand(r)).collect();
    let signature = Signature {
        parameters: g
            .parameters()
            .iter()
            .map(|&p| {
                let t = Output::from(p);
                (g.descriptor(t).unwrap().clone(), layouts[&t].clone())
            })
            .collect(),
        results: results
            .iter()
            .map(|o| (o.descriptor.clone(), o.layout.clone()))
            .collect(),
    };
    Ok(Executable {
        function: g,
        instructions,
        plan,
        constants,
        signature,
        results,
        result_slots,
    })
}

enum Storage {
    Arena(Vec<u8>),
    Private(BTreeMap<Output, Buffer>),
}

struct Frame<'a> {
    exe: &'a Executable,
    inputs: &'a [TensorValue],
    storage: Storage,
    produced: Vec<Option<Buffer>>,
}

impl<'a> Frame<'a> {
    fn load(&self, o: &Operand) -> Cow<'a, Buffer>
    where
        Self: 'a,
    {
        match o.slot {
            Slot::Parameter(i) => Cow::Borrowed(self.inputs[i].buffer()),
            Slot::Constant(i) => Cow::Borrowed(&self.exe.constants[i]),
            Slot::Result(i) => Cow::Owned(
                self.produced[i]
                    .clone()
                    .expect("result read before it was produced"),
            ),
            Slot::Arena { offset } => match &self.storage {
                Storage::Arena(bytes) => Cow::Owned(Buffer::read_bytes(
                    o.descriptor.element_type,
                    &bytes[offset..offset + o.descriptor.byte_size()],
                )),
                Storage::Private(map) => Cow::Owned(
                    map.get(&o.tensor)
                        .cloned()
                        .expect("tensor read before it was produced"),
                ),
            },
        }
    }

    fn store(&mut self, o: &Operand, value: Buffer) {
        match o.slot {
            Slot::Result(i) => self.produced[i] = Some(value),
            Slot::Arena { offset } => match &mut self.storage {
                Storage::Arena(bytes) => {
                    value.write_bytes(&mut bytes[offset..offset + o.descriptor.byte_size()])
                }
                Storage::Private(map) => {
                    map.insert(o.tensor, value);
                }
            },
            Slot::Parameter(_) | Slot::Constant(_) => unreachable!("write to read-only slot"),
        }
    }

    fn step(&mut self, instr: &Instruction) -> Result<(), ExecError> {
        let logical: Vec<Buffer> = instr
            .inputs
            .iter()
            .map(|o| {
                let physical = self.load(o);
                match &o.positions {
                    Some(p) => physical.gather(p),
                    None => physical.into_owned(),
                }
            })
            .collect();
        let kernel_inputs: Vec<KernelInput> = logical
            .iter()
            .zip(&instr.inputs)
            .map(|(buffer, o)| KernelInput {
                buffer,
                shape: &o.descriptor.shape,
            })
            .collect();
        let value = evaluate(&instr.op, &kernel_inputs, &instr.output.descriptor)?;
        let physical = match &instr.output.positions {
            Some(p) => value.scatter(p),
            None => value,
        };
        self.store(&instr.output, physical);
        Ok(())
    }

    fn finish(self) -> Result<Vec<TensorValue>, ExecError> {
        self.exe
            .results
            .iter()
            .map(|o| {
                let buffer = self.load(o).into_owned();
                TensorValue::new(o.descriptor.clone(), o.layout.clone(), buffer)
            })
            .collect()
    }
}

impl Executable {
    pub fn function(&self) -> &Function {
        &self.function
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn plan(&self) -> &MemoryPlan {
        &self.plan
    }

    pub fn constants(&self) -> &[Buffer] {
        &self.constants
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    fn check_inputs(&self, inputs: &[TensorValue]) -> Result<(), ExecError> {
        let expected = &self.signature.parameters;
        if inputs.len() != expected.len() {
            return Err(ExecError::SignatureMismatch(format!(
                "expected {} inputs, got {}",
                expected.len(),
                inputs.len()
            )));
        }
        for (i, (t, (d, l))) in inputs.iter().zip(expected).enumerate() {
            if t.descriptor() != d || t.layout() != l {
                return Err(ExecError::SignatureMismatch(format!(
                    "input {i}: expected {d} order {l}, got {} order {}",
                    t.descriptor(),
                    t.layout()
                )));
            }
        }
        Ok(())
    }

    fn frame<'a>(&'a self, inputs: &'a [TensorValue], private: bool) -> Frame<'a> {
        let storage = if private {
            Storage::Private(BTreeMap::new())
        } else {
            Storage::Arena(vec![0u8; self.plan.arena_size])
        };
        Frame {
            exe: self,
            inputs,
            storage,
            produced: vec![None; self.result_slots],
        }
    }

    /// Executes through the memory plan.
    pub fn call(&self, inputs: &[TensorValue]) -> Result<Vec<TensorValue>, ExecError> {
        self.check_inputs(inputs)?;
        let mut frame = self.frame(inputs, false);
        for instr in &self.instructions {
            frame.step(instr)?;
        }
        frame.finish()
    }

    /// Executes with one private buffer per tensor, ignoring the plan.
    pub fn call_private(&self, inputs: &[TensorValue]) -> Result<Vec<TensorValue>, ExecError> {
        let order: Vec<usize> = (0..self.instructions.len()).collect();
        self.call_in_order(inputs, &order)
    }

    /// Executes instructions in `order` (indices into [`Executable::instructions`]),
    /// which must respect every data dependency. Uses private buffers, since
    /// the plan is only valid for the compiled order.
    pub fn call_in_order(
        &self,
        inputs: &[TensorValue],
        order: &[usize],
    ) -> Result<Vec<TensorValue>, ExecError> {
        self.check_inputs(inputs)?;
        if order.len() != self.instructions.len()
            || order.iter().collect::<BTreeSet<_>>().len() != order.len()
            || order.iter().any(|&i| i >= self.instructions.len())
        {
            return Err(ExecError::InvalidOrder(
                "not a permutation of the instructions".into(),
            ));
        }
        let produced_by: BTreeSet<Output> =
            self.instructions.iter().map(|i| i.output.tensor).collect();
        let mut done: BTreeSet<Output> = BTreeSet::new();
        let mut frame = self.frame(inputs, true);
        for &index in order {
            let instr = &self.instructions[index];
            if let Some(missing) = instr
                .inputs
                .iter()
                .find(|o| produced_by.contains(&o.tensor) && !done.contains(&o.tensor))
            {
                return Err(ExecError::InvalidOrder(format!(
                    "node {} runs before its input {}",
                    instr.node, missing.tensor
                )));
            }
            frame.step(instr)?;
            done.insert(instr.output.tensor);
        }
        frame.finish()
    }
}

/// The instruction listing: signature, one line per instruction, arena size.
impl fmt::Display for Executable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sig = |list: &[(TensorDescriptor, Layout)]| {
            list.iter()
                .map(|(d, l)| format!("{d}{l}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        writeln!(
            f,
            "({}) -> ({})",
            sig(&self.signature.parameters),
            sig(&self.signature.results)
        )?;
        for (i, instr) in self.instructions.iter().enumerate() {
            let inputs: Vec<String> = instr.inputs.iter().map(|o| o.slot.to_string()).collect();
            writeln!(
                f,
                "{i}\t{}\t{}\t{}\t{}\t{}{}",
                instr.node,
                instr.op,
                inputs.join(","),
                instr.output.slot,
                instr.output.descriptor,
                instr.output.layout
            )?;
        }
        writeln!(f, "arena {} bytes", self.plan.arena_size)
    }
}
