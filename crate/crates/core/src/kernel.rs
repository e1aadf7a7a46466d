//! Per-index scalar kernels: a hash-consed expression DAG evaluated at one
//! grid index, with structural sparsity detection, reverse-mode Jacobians
//! and forward-over-reverse Hessians.
//!
//! A kernel reads its inputs through [`SlotRef`]s. The owner resolves each
//! reference to an affine map `base + stride * index` into the flat decision
//! vector, so a kernel is independent of the grid size.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::UnaryOp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("non-finite value while evaluating a kernel at index {index}")]
    Domain { index: usize },
    #[error("evaluation worker panicked: {0}")]
    Panic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Slab {
    State,
    Control,
    Free,
}

/// Which grid node a reference reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum NodeRef {
    /// `index + k`.
    Offset(i32),
    First,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SlotRef {
    pub slab: Slab,
    pub comp: usize,
    /// Ignored for free variables.
    pub at: NodeRef,
}

impl SlotRef {
    pub fn state(comp: usize, at: NodeRef) -> Self {
        SlotRef { slab: Slab::State, comp, at }
    }

    pub fn control(comp: usize, at: NodeRef) -> Self {
        SlotRef { slab: Slab::Control, comp, at }
    }

    pub fn free(comp: usize) -> Self {
        SlotRef { slab: Slab::Free, comp, at: NodeRef::First }
    }

    pub fn label(&self) -> String {
        let at = match self.at {
            NodeRef::Offset(0) => "@i".to_string(),
            NodeRef::Offset(k) => format!("@i{k:+}"),
            NodeRef::First => "@first".to_string(),
            NodeRef::Last => "@last".to_string(),
        };
        match self.slab {
            Slab::State => format!("x[{}]{at}", self.comp),
            Slab::Control => format!("u[{}]{at}", self.comp),
            Slab::Free => format!("v[{}]", self.comp),
        }
    }
}

/// Affine address of an input: slot `base + stride * index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Affine {
    pub base: usize,
    pub stride: usize,
}

impl Affine {
    #[inline]
    pub fn at(&self, index: usize) -> usize {
        self.base + self.stride * index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Const(f64),
    /// Local input number.
    Input(u32),
    /// The grid index plus an offset, as a real number.
    Index(i32),
    Unary(UnaryOp, u32),
    Binary(BinOp, u32, u32),
    PowConst(u32, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Const(u64),
    Input(u32),
    Index(i32),
    Unary(UnaryOp, u32),
    Binary(BinOp, u32, u32),
    PowConst(u32, u64),
}

impl Node {
    fn key(&self) -> Key {
        match *self {
            Node::Const(c) => Key::Const(c.to_bits()),
            Node::Input(k) => Key::Input(k),
            Node::Index(o) => Key::Index(o),
            Node::Unary(op, a) => Key::Unary(op, a),
            Node::Binary(op, a, b) => Key::Binary(op, a, b),
            Node::PowConst(a, p) => Key::PowConst(a, p.to_bits()),
        }
    }
}

/// Handle to a node of a [`KernelBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

/// Builds a kernel DAG. Structurally identical subexpressions share one
/// node and constant subexpressions are folded on the fly.
#[derive(Debug, Default)]
pub struct KernelBuilder {
    nodes: Vec<Node>,
    memo: HashMap<Key, u32>,
    inputs: Vec<SlotRef>,
    input_ids: HashMap<SlotRef, u32>,
}

impl KernelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, node: Node) -> Var {
        let key = node.key();
        if let Some(&id) = self.memo.get(&key) {
            return Var(id);
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(node);
        self.memo.insert(key, id);
        Var(id)
    }

    fn as_const(&self, v: Var) -> Option<f64> {
        match self.nodes[v.0 as usize] {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn constant(&mut self, c: f64) -> Var {
        self.push(Node::Const(c))
    }

    pub fn input(&mut self, slot: SlotRef) -> Var {
        let k = match self.input_ids.get(&slot) {
            Some(&k) => k,
            None => {
                let k = self.inputs.len() as u32;
                self.inputs.push(slot);
                self.input_ids.insert(slot, k);
                k
            }
        };
        self.push(Node::Input(k))
    }

    pub fn index(&mut self, offset: i32) -> Var {
        self.push(Node::Index(offset))
    }

    pub fn binary(&mut self, op: BinOp, a: Var, b: Var) -> Var {
        if let (Some(x), Some(y)) = (self.as_const(a), self.as_const(b)) {
            let v = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            };
            return self.constant(v);
        }
        self.push(Node::Binary(op, a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(BinOp::Div, a, b)
    }

    pub fn unary(&mut self, op: UnaryOp, a: Var) -> Var {
        if let Some(x) = self.as_const(a) {
            return self.constant(op.apply(x));
        }
        self.push(Node::Unary(op, a.0))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(UnaryOp::Neg, a)
    }

    pub fn powc(&mut self, a: Var, p: f64) -> Var {
        if let Some(x) = self.as_const(a) {
            return self.constant(x.powf(p));
        }
        if p == 1.0 {
            return a;
        }
        if p == 0.0 {
            return self.constant(1.0);
        }
        self.push(Node::PowConst(a.0, p))
    }

    /// Finishes the kernel. Nodes not reachable from `outputs` are dropped
    /// and inputs renumbered in first-use order.
    pub fn finish(self, outputs: &[Var]) -> Kernel {
        let n = self.nodes.len();
        let mut live = vec![false; n];
        for o in outputs {
            live[o.0 as usize] = true;
        }
        for i in (0..n).rev() {
            if !live[i] {
                continue;
            }
            match self.nodes[i] {
                Node::Unary(_, a) | Node::PowConst(a, _) => live[a as usize] = true,
                Node::Binary(_, a, b) => {
                    live[a as usize] = true;
                    live[b as usize] = true;
                }
                _ => {}
            }
        }
        let mut remap = vec![u32::MAX; n];
        let mut input_remap = vec![u32::MAX; self.inputs.len()];
        let mut nodes = Vec::new();
        let mut inputs = Vec::new();
        for i in 0..n {
            if !live[i] {
                continue;
            }
            remap[i] = nodes.len() as u32;
            let r = |a: u32| remap[a as usize];
            nodes.push(match self.nodes[i] {
                Node::Input(k) => {
                    let k = k as usize;
                    if input_remap[k] == u32::MAX {
                        input_remap[k] = inputs.len() as u32;
                        inputs.push(self.inputs[k]);
                    }
                    Node::Input(input_remap[k])
                }
                Node::Unary(op, a) => Node::Unary(op, r(a)),
                Node::Binary(op, a, b) => Node::Binary(op, r(a), r(b)),
                Node::PowConst(a, p) => Node::PowConst(r(a), p),
                other => other,
            });
        }
        let outputs = outputs.iter().map(|o| remap[o.0 as usize]).collect();
        Kernel::new(nodes, inputs, outputs)
    }
}

/// Per-index sparsity of a kernel, in local input numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stencil {
    /// `(output, input)`, output-major and sorted; the order of Jacobian
    /// values written by [`Kernel::jacobian`].
    pub jacobian: Vec<(usize, usize)>,
    /// `(a, b)` with `a >= b`, sorted; the order of Hessian values.
    pub hessian: Vec<(usize, usize)>,
}

/// Scratch buffers for evaluating kernels; sized once for the largest
/// kernel it will serve.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    val: Vec<f64>,
    tan: Vec<f64>,
    adj: Vec<f64>,
    adot: Vec<f64>,
}

impl Workspace {
    pub fn new(tape_len: usize) -> Self {
        Workspace {
            val: vec![0.0; tape_len],
            tan: vec![0.0; tape_len],
            adj: vec![0.0; tape_len],
            adot: vec![0.0; tape_len],
        }
    }

    pub fn for_kernels<'a>(kernels: impl IntoIterator<Item = &'a Kernel>) -> Self {
        Self::new(kernels.into_iter().map(Kernel::tape_len).max().unwrap_or(0))
    }
}

/// A compiled kernel with its structural sparsity.
#[derive(Debug, Clone)]
pub struct Kernel {
    nodes: Vec<Node>,
    inputs: Vec<SlotRef>,
    input_nodes: Vec<u32>,
    outputs: Vec<u32>,
    stencil: Stencil,
    /// Hessian columns: seed input and the `(value position, partner input)` pairs it fills.
    hess_cols: Vec<(usize, Vec<(usize, usize)>)>,
}

fn first_derivs(op: UnaryOp, x: f64, v: f64) -> (f64, f64) {
    match op {
        UnaryOp::Neg => (-1.0, 0.0),
        UnaryOp::Sin => (x.cos(), -v),
        UnaryOp::Cos => (-x.sin(), -v),
        UnaryOp::Tan => {
            let d = 1.0 + v * v;
            (d, 2.0 * v * d)
        }
        UnaryOp::Exp => (v, v),
        UnaryOp::Log => (1.0 / x, -1.0 / (x * x)),
        UnaryOp::Sqrt => (0.5 / v, -0.25 / (v * x)),
    }
}

impl Kernel {
    fn new(nodes: Vec<Node>, inputs: Vec<SlotRef>, outputs: Vec<u32>) -> Self {
        let mut input_nodes = vec![0u32; inputs.len()];
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Input(k) = n {
                input_nodes[*k as usize] = i as u32;
            }
        }
        let stencil = detect_sparsity(&nodes, &outputs);
        let mut cols: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
        for (pos, &(a, b)) in stencil.hessian.iter().enumerate() {
            match cols.iter_mut().find(|(seed, _)| *seed == b) {
                Some((_, list)) => list.push((pos, a)),
                None => cols.push((b, vec![(pos, a)])),
            }
        }
        Kernel { nodes, inputs, input_nodes, outputs, stencil, hess_cols: cols }
    }

    pub fn out_dim(&self) -> usize {
        self.outputs.len()
    }

    pub fn inputs(&self) -> &[SlotRef] {
        &self.inputs
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn tape_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    #[inline]
    fn forward(&self, x: &[f64], slots: &[Affine], index: usize, val: &mut [f64]) -> Result<(), EvalError> {
        let mut ok = true;
        for (i, node) in self.nodes.iter().enumerate() {
            let v = match *node {
                Node::Const(c) => c,
                Node::Input(k) => x[slots[k as usize].at(index)],
                Node::Index(o) => (index as i64 + o as i64) as f64,
                Node::Unary(op, a) => op.apply(val[a as usize]),
                Node::Binary(op, a, b) => {
                    let (a, b) = (val[a as usize], val[b as usize]);
                    match op {
                        BinOp::Add => a + b,
                        BinOp::Sub => a - b,
                        BinOp::Mul => a * b,
                        BinOp::Div => a / b,
                    }
                }
                Node::PowConst(a, p) => powc(val[a as usize], p),
            };
            ok &= v.is_finite();
            val[i] = v;
        }
        if ok {
            Ok(())
        } else {
            Err(EvalError::Domain { index })
        }
    }

    /// Writes the `out_dim` outputs at `index` into `out`.
    pub fn values(
        &self,
        x: &[f64],
        slots: &[Affine],
        index: usize,
        ws: &mut Workspace,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        self.forward(x, slots, index, &mut ws.val)?;
        for (o, &node) in out.iter_mut().zip(&self.outputs) {
            *o = ws.val[node as usize];
        }
        Ok(())
    }

    /// Weighted sum of the outputs.
    pub fn weighted_value(
        &self,
        x: &[f64],
        slots: &[Affine],
        index: usize,
        weights: &[f64],
        ws: &mut Workspace,
    ) -> Result<f64, EvalError> {
        self.forward(x, slots, index, &mut ws.val)?;
        Ok(self.outputs.iter().zip(weights).map(|(&o, w)| w * ws.val[o as usize]).sum())
    }

    fn reverse(&self, seed_out: usize, upto: usize, val: &[f64], adj: &mut [f64]) {
        adj[..=upto].fill(0.0);
        adj[seed_out] = 1.0;
        for i in (0..=upto).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.nodes[i] {
                Node::Unary(op, a) => {
                    let (d, _) = first_derivs(op, val[a as usize], val[i]);
                    adj[a as usize] += g * d;
                }
                Node::PowConst(a, p) => adj[a as usize] += g * p * powc(val[a as usize], p - 1.0),
                Node::Binary(op, a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    match op {
                        BinOp::Add => {
                            adj[a] += g;
                            adj[b] += g;
                        }
                        BinOp::Sub => {
                            adj[a] += g;
                            adj[b] -= g;
                        }
                        BinOp::Mul => {
                            adj[a] += g * val[b];
                            adj[b] += g * val[a];
                        }
                        BinOp::Div => {
                            adj[a] += g / val[b];
                            adj[b] -= g * val[i] / val[b];
                        }
                    }
                }
                _ => {}
            }
        }
    }

    /// Writes the stencil Jacobian values (order of `stencil().jacobian`).
    pub fn jacobian(
        &self,
        x: &[f64],
        slots: &[Affine],
        index: usize,
        ws: &mut Workspace,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        self.forward(x, slots, index, &mut ws.val)?;
        let mut pos = 0;
        let mut ok = true;
        for (r, &onode) in self.outputs.iter().enumerate() {
            let onode = onode as usize;
            let count = self.stencil.jacobian[pos..].iter().take_while(|(row, _)| *row == r).count();
            if count == 0 {
                continue;
            }
            self.reverse(onode, onode, &ws.val, &mut ws.adj);
            for &(_, k) in &self.stencil.jacobian[pos..pos + count] {
                let d = ws.adj[self.input_nodes[k] as usize];
                ok &= d.is_finite();
                out[pos] = d;
                pos += 1;
            }
        }
        if ok {
            Ok(())
        } else {
            Err(EvalError::Domain { index })
        }
    }

    /// Writes the lower-triangle Hessian of `Σ_r w_r out_r` (order of
    /// `stencil().hessian`).
    pub fn hessian(
        &self,
        x: &[f64],
        slots: &[Affine],
        index: usize,
        weights: &[f64],
        ws: &mut Workspace,
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        if self.hess_cols.is_empty() {
            return Ok(());
        }
        let n = self.nodes.len();
        let Workspace { val, tan, adj, adot } = ws;
        self.forward(x, slots, index, val)?;
        let mut ok = true;
        for (seed, entries) in &self.hess_cols {
            // forward tangent along the seed input
            let seed_node = self.input_nodes[*seed] as usize;
            for i in 0..n {
                tan[i] = match self.nodes[i] {
                    Node::Input(_) => (i == seed_node) as u8 as f64,
                    Node::Const(_) | Node::Index(_) => 0.0,
                    Node::Unary(op, a) => first_derivs(op, val[a as usize], val[i]).0 * tan[a as usize],
                    Node::PowConst(a, p) => p * powc(val[a as usize], p - 1.0) * tan[a as usize],
                    Node::Binary(op, a, b) => {
                        let (a, b) = (a as usize, b as usize);
                        match op {
                            BinOp::Add => tan[a] + tan[b],
                            BinOp::Sub => tan[a] - tan[b],
                            BinOp::Mul => tan[a] * val[b] + val[a] * tan[b],
                            BinOp::Div => (tan[a] - val[i] * tan[b]) / val[b],
                        }
                    }
                };
            }
            // reverse sweep of adjoints and their tangents
            adj[..n].fill(0.0);
            adot[..n].fill(0.0);
            for (&o, &w) in self.outputs.iter().zip(weights.iter()) {
                adj[o as usize] += w;
            }
            for i in (0..n).rev() {
                let (g, gd) = (adj[i], adot[i]);
                if g == 0.0 && gd == 0.0 {
                    continue;
                }
                match self.nodes[i] {
                    Node::Unary(op, a) => {
                        let a = a as usize;
                        let (d, dd) = first_derivs(op, val[a], val[i]);
                        adj[a] += g * d;
                        adot[a] += gd * d + g * dd * tan[a];
                    }
                    Node::PowConst(a, p) => {
                        let a = a as usize;
                        let d = p * powc(val[a], p - 1.0);
                        let dd = p * (p - 1.0) * powc(val[a], p - 2.0);
                        adj[a] += g * d;
                        adot[a] += gd * d + g * dd * tan[a];
                    }
                    Node::Binary(op, a, b) => {
                        let (a, b) = (a as usize, b as usize);
                        match op {
                            BinOp::Add => {
                                adj[a] += g;
                                adj[b] += g;
                                adot[a] += gd;
                                adot[b] += gd;
                            }
                            BinOp::Sub => {
                                adj[a] += g;
                                adj[b] -= g;
                                adot[a] += gd;
                                adot[b] -= gd;
                            }
                            BinOp::Mul => {
                                adj[a] += g * val[b];
                                adj[b] += g * val[a];
                                adot[a] += gd * val[b] + g * tan[b];
                                adot[b] += gd * val[a] + g * tan[a];
                            }
                            BinOp::Div => {
                                let vb = val[b];
                                let q = val[i];
                                adj[a] += g / vb;
                                adot[a] += gd / vb - g * tan[b] / (vb * vb);
                                adj[b] -= g * q / vb;
                                adot[b] -= gd * q / vb + g * (tan[i] - q * tan[b] / vb) / vb;
                            }
                        }
                    }
                    _ => {}
                }
            }
            for &(pos, partner) in entries {
                let h = adot[self.input_nodes[partner] as usize];
                ok &= h.is_finite();
                out[pos] = h;
            }
        }
        if ok {
            Ok(())
        } else {
            Err(EvalError::Domain { index })
        }
    }

    /// Prefix-notation dump of output `r`, e.g. `(- x[0]@i+1 (* 0.5 u[0]@i))`.
    pub fn prefix(&self, r: usize) -> String {
        let mut s = String::new();
        self.write_prefix(self.outputs[r] as usize, &mut s);
        s
    }

    fn write_prefix(&self, i: usize, s: &mut String) {
        match self.nodes[i] {
            Node::Const(c) => {
                let _ = write!(s, "{c:?}");
            }
            Node::Input(k) => s.push_str(&self.inputs[k as usize].label()),
            Node::Index(0) => s.push('i'),
            Node::Index(o) => {
                let _ = write!(s, "i{o:+}");
            }
            Node::Unary(op, a) => {
                let name = if op == UnaryOp::Neg { "neg" } else { op.name() };
                let _ = write!(s, "({name} ");
                self.write_prefix(a as usize, s);
                s.push(')');
            }
            Node::PowConst(a, p) => {
                s.push_str("(^ ");
                self.write_prefix(a as usize, s);
                let _ = write!(s, " {p:?})");
            }
            Node::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                let _ = write!(s, "({sym} ");
                self.write_prefix(a as usize, s);
                s.push(' ');
                self.write_prefix(b as usize, s);
                s.push(')');
            }
        }
    }
}

#[inline]
fn powc(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p.fract() == 0.0 && p.abs() < 64.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

fn pairs(a: &BTreeSet<usize>, b: &BTreeSet<usize>, into: &mut BTreeSet<(usize, usize)>) {
    for &i in a {
        for &j in b {
            into.insert((i.max(j), i.min(j)));
        }
    }
}

/// Exact structural sparsity: an input appears in a Jacobian row when the
/// output depends on it, and a pair appears in the Hessian when some
/// nonlinear node couples the two.
pub fn detect_sparsity(nodes: &[Node], outputs: &[u32]) -> Stencil {
    let n = nodes.len();
    let mut deps: Vec<BTreeSet<usize>> = Vec::with_capacity(n);
    let mut hess: Vec<BTreeSet<(usize, usize)>> = Vec::with_capacity(n);
    for node in nodes {
        let (d, h) = match *node {
            Node::Const(_) | Node::Index(_) => (BTreeSet::new(), BTreeSet::new()),
            Node::Input(k) => (BTreeSet::from([k as usize]), BTreeSet::new()),
            Node::Unary(op, a) => {
                let a = a as usize;
                let mut h = hess[a].clone();
                if op != UnaryOp::Neg {
                    pairs(&deps[a], &deps[a], &mut h);
                }
                (deps[a].clone(), h)
            }
            Node::PowConst(a, _) => {
                let a = a as usize;
                let mut h = hess[a].clone();
                pairs(&deps[a], &deps[a], &mut h);
                (deps[a].clone(), h)
            }
            Node::Binary(op, a, b) => {
                let (a, b) = (a as usize, b as usize);
                let d: BTreeSet<usize> = deps[a].union(&deps[b]).copied().collect();
                let mut h: BTreeSet<(usize, usize)> = hess[a].union(&hess[b]).copied().collect();
                match op {
                    BinOp::Add | BinOp::Sub => {}
                    BinOp::Mul => pairs(&deps[a], &deps[b], &mut h),
                    BinOp::Div => {
                        pairs(&deps[a], &deps[b], &mut h);
                        pairs(&deps[b], &deps[b], &mut h);
                    }
                }
                (d, h)
            }
        };
        deps.push(d);
        hess.push(h);
    }
    let mut jacobian = Vec::new();
    let mut hessian = BTreeSet::new();
    for (r, &o) in outputs.iter().enumerate() {
        jacobian.extend(deps[o as usize].iter().map(|&k| (r, k)));
        hessian.extend(hess[o as usize].iter().copied());
    }
    Stencil { jacobian, hessian: hessian.into_iter().collect() }
}
