//! Direct transcription of an [`OcpProblem`] on a uniform grid of `N`
//! steps into a [`StructuredNlp`].
//!
//! Dynamics, path and boundary constraints become kernels mapped over
//! index ranges; box constraints become variable bounds. Rows are ordered
//! dynamics first, then the declared constraints in source order.

mod nlp;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{BinaryOp, ConstraintKind, Expr, Instant, OcpProblem, TimeBound, UnaryOp};
use crate::kernel::{KernelBuilder, NodeRef, SlotRef, Var};

pub use nlp::{ConstraintGroup, GroupKind, IndexRange, NlpMeta, ObjectiveGroup, StructuredNlp, VariableLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Trapezoid,
}

impl std::str::FromStr for Scheme {
    type Err = TranscriptionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "trapezoid" => Ok(Scheme::Trapezoid),
            other => Err(TranscriptionError::Argument(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranscriptionError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("fixed horizon must satisfy t0 < tf, got [{t0}, {tf}]")]
    EmptyHorizon { t0: f64, tf: f64 },
}

/// Start values per slab: a constant per slab, or explicit vectors. A
/// vector may hold one value per component (repeated over the grid) or
/// one value per slot of the slab.
#[derive(Debug, Clone, PartialEq)]
pub enum InitPolicy {
    Constant { variable: f64, state: f64, control: f64 },
    Slabs { variable: Vec<f64>, state: Vec<f64>, control: Vec<f64> },
}

impl Default for InitPolicy {
    fn default() -> Self {
        InitPolicy::Constant { variable: 0.1, state: 0.1, control: 0.1 }
    }
}

struct Lowering<'a> {
    b: KernelBuilder,
    p: &'a OcpProblem,
    h: Option<Var>,
}

impl Lowering<'_> {
    fn new(p: &OcpProblem, grid_size: usize) -> Lowering<'_> {
        let mut l = Lowering { b: KernelBuilder::new(), p, h: None };
        let t0 = l.bound(p.time.t0);
        let tf = l.bound(p.time.tf);
        let span = l.b.sub(tf, t0);
        let n = l.b.constant(grid_size as f64);
        l.h = Some(l.b.div(span, n));
        l
    }

    fn bound(&mut self, t: TimeBound) -> Var {
        match t {
            TimeBound::Fixed(c) => self.b.constant(c),
            TimeBound::Variable(k) => self.b.input(SlotRef::free(k)),
        }
    }

    fn h(&self) -> Var {
        self.h.expect("step initialised")
    }

    fn node(at: Instant, shift: i32) -> NodeRef {
        match at {
            Instant::Now => NodeRef::Offset(shift),
            Instant::Initial => NodeRef::First,
            Instant::Final => NodeRef::Last,
        }
    }

    /// Lowers `e` with running references read at `index + shift`.
    fn expr(&mut self, e: &Expr, shift: i32) -> Var {
        match e {
            Expr::Const(c) => self.b.constant(*c),
            Expr::Time => {
                let t0 = self.bound(self.p.time.t0);
                let i = self.b.index(shift);
                let ih = self.b.mul(i, self.h());
                self.b.add(t0, ih)
            }
            Expr::State(k, at) => self.b.input(SlotRef::state(*k, Self::node(*at, shift))),
            Expr::Control(k, at) => self.b.input(SlotRef::control(*k, Self::node(*at, shift))),
            Expr::Variable(k) => self.b.input(SlotRef::free(*k)),
            Expr::Unary(op, a) => {
                let a = self.expr(a, shift);
                self.b.unary(*op, a)
            }
            Expr::Binary(BinaryOp::Pow, a, b) => {
                let base = self.expr(a, shift);
                match b.as_const() {
                    Some(p) => self.b.powc(base, p),
                    // a^b = exp(b log a) for non-constant exponents
                    None => {
                        let e = self.expr(b, shift);
                        let l = self.b.unary(UnaryOp::Log, base);
                        let el = self.b.mul(e, l);
                        self.b.unary(UnaryOp::Exp, el)
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = (self.expr(a, shift), self.expr(b, shift));
                match op {
                    BinaryOp::Add => self.b.add(a, b),
                    BinaryOp::Sub => self.b.sub(a, b),
                    BinaryOp::Mul => self.b.mul(a, b),
                    BinaryOp::Div => self.b.div(a, b),
                    BinaryOp::Pow => unreachable!(),
                }
            }
        }
    }
}

/// Discretises `p` with `scheme` on `grid_size` uniform steps.
pub fn transcribe(
    p: &OcpProblem,
    name: &str,
    scheme: Scheme,
    grid_size: usize,
    init: &InitPolicy,
) -> Result<StructuredNlp, TranscriptionError> {
    if grid_size == 0 {
        return Err(TranscriptionError::Argument("grid size must be at least 1".into()));
    }
    if let (TimeBound::Fixed(t0), TimeBound::Fixed(tf)) = (p.time.t0, p.time.tf) {
        if tf <= t0 {
            return Err(TranscriptionError::EmptyHorizon { t0, tf });
        }
    }
    let n_steps = grid_size;
    let (n, m, nv) = (p.state_dim(), p.control_dim(), p.variable_dim());
    let layout = VariableLayout::new(n, m, nv, n_steps);
    let mut groups = Vec::new();

    // dynamics
    let mut l = Lowering::new(p, n_steps);
    let h = l.h();
    let mut outs = Vec::with_capacity(n);
    for (k, dynamics) in p.dynamics.iter().enumerate() {
        let x0 = l.b.input(SlotRef::state(k, NodeRef::Offset(0)));
        let x1 = l.b.input(SlotRef::state(k, NodeRef::Offset(1)));
        let f0 = l.expr(&dynamics.expr, 0);
        let step = match scheme {
            Scheme::Euler => l.b.mul(h, f0),
            Scheme::Trapezoid => {
                let f1 = l.expr(&dynamics.expr, 1);
                let sum = l.b.add(f0, f1);
                let half = l.b.constant(0.5);
                let hh = l.b.mul(half, h);
                l.b.mul(hh, sum)
            }
        };
        let diff = l.b.sub(x1, x0);
        outs.push(l.b.sub(diff, step));
    }
    groups.push(ConstraintGroup::new(
        "dynamics",
        GroupKind::Dynamics,
        l.b.finish(&outs),
        IndexRange::Span { start: 0, end: n_steps },
        &layout,
        vec![0.0; n],
        vec![0.0; n],
    ));

    let mut lvar = vec![f64::NEG_INFINITY; layout.nvar];
    let mut uvar = vec![f64::INFINITY; layout.nvar];
    for c in &p.constraints {
        match c.kind {
            ConstraintKind::Boundary | ConstraintKind::Path => {
                let mut l = Lowering::new(p, n_steps);
                let outs: Vec<Var> = c.exprs.iter().map(|e| l.expr(e, 0)).collect();
                let (kind, range) = if c.kind == ConstraintKind::Boundary {
                    (GroupKind::Boundary, IndexRange::Points(vec![0]))
                } else {
                    let controls_only = !c.exprs.iter().any(|e| e.any(|s| matches!(s, Expr::State(..))));
                    let end = if scheme == Scheme::Euler && controls_only { n_steps } else { n_steps + 1 };
                    (GroupKind::Path, IndexRange::Span { start: 0, end })
                };
                groups.push(ConstraintGroup::new(
                    format!("{}@line{}", if kind == GroupKind::Boundary { "boundary" } else { "path" }, c.line),
                    kind,
                    l.b.finish(&outs),
                    range,
                    &layout,
                    c.lower.clone(),
                    c.upper.clone(),
                ));
            }
            ConstraintKind::BoxState | ConstraintKind::BoxControl | ConstraintKind::BoxVariable => {
                for (row, e) in c.exprs.iter().enumerate() {
                    let slots: Vec<usize> = match *e {
                        Expr::State(k, _) => (0..=n_steps).map(|j| layout.state(k, j)).collect(),
                        Expr::Control(k, _) => (0..=n_steps).map(|j| layout.control(k, j)).collect(),
                        Expr::Variable(k) => vec![layout.free(k)],
                        _ => unreachable!("box constraints hold bare references"),
                    };
                    for s in slots {
                        lvar[s] = lvar[s].max(c.lower[row]);
                        uvar[s] = uvar[s].min(c.upper[row]);
                    }
                }
            }
        }
    }

    // a free endpoint may not cross the fixed one
    match (p.time.t0, p.time.tf) {
        (TimeBound::Fixed(t0), TimeBound::Variable(k)) => {
            let s = layout.free(k);
            lvar[s] = lvar[s].max(t0);
        }
        (TimeBound::Variable(k), TimeBound::Fixed(tf)) => {
            let s = layout.free(k);
            uvar[s] = uvar[s].min(tf);
        }
        _ => {}
    }

    let mut objective = Vec::new();
    if let Some(mayer) = &p.cost.mayer {
        let mut l = Lowering::new(p, n_steps);
        let out = l.expr(mayer, 0);
        objective.push(ObjectiveGroup::new("mayer", l.b.finish(&[out]), IndexRange::Points(vec![0]), &layout, 1.0));
    }
    if let Some(lagrange) = &p.cost.lagrange {
        let mut l = Lowering::new(p, n_steps);
        let f = l.expr(lagrange, 0);
        let out = l.b.mul(l.h(), f);
        let kernel = l.b.finish(&[out]);
        match scheme {
            Scheme::Euler => objective.push(ObjectiveGroup::new(
                "lagrange",
                kernel,
                IndexRange::Span { start: 0, end: n_steps },
                &layout,
                1.0,
            )),
            Scheme::Trapezoid => {
                objective.push(ObjectiveGroup::new(
                    "lagrange_ends",
                    kernel.clone(),
                    IndexRange::Points(vec![0, n_steps]),
                    &layout,
                    0.5,
                ));
                if n_steps >= 2 {
                    objective.push(ObjectiveGroup::new(
                        "lagrange_interior",
                        kernel,
                        IndexRange::Span { start: 1, end: n_steps },
                        &layout,
                        1.0,
                    ));
                }
            }
        }
    }

    let meta = NlpMeta { name: name.to_string(), scheme: Some(scheme), grid_size: n_steps, sense: p.cost.sense };
    let x_start = vec![0.0; layout.nvar];
    let mut nlp = StructuredNlp::new(layout, groups, objective, lvar, uvar, x_start, meta);
    if scheme == Scheme::Euler {
        nlp.pinned = (0..m)
            .map(|k| {
                let s = layout.control(k, n_steps);
                (s, nlp.lvar[s], nlp.uvar[s])
            })
            .collect();
    }
    initial_point(&mut nlp, init)?;
    Ok(nlp)
}

fn fill_slab(
    out: &mut [f64],
    values: &[f64],
    dim: usize,
    nodes: usize,
    slab: &str,
) -> Result<(), TranscriptionError> {
    if values.len() == dim {
        for (s, v) in out.iter_mut().enumerate() {
            *v = values[s % dim];
        }
    } else if values.len() == dim * nodes {
        out.copy_from_slice(values);
    } else {
        return Err(TranscriptionError::Argument(format!(
            "{slab} start vector has length {}, expected {dim} or {}",
            values.len(),
            dim * nodes
        )));
    }
    Ok(())
}

/// Fills `nlp.x_start` from `policy`, clipped into `[lvar, uvar]`. Pinned
/// slots get bounds equal to their start value.
pub fn initial_point(nlp: &mut StructuredNlp, policy: &InitPolicy) -> Result<(), TranscriptionError> {
    let l = nlp.layout;
    let nodes = l.grid_size + 1;
    let (xs, rest) = nlp.x_start.split_at_mut(l.control_offset);
    let (us, vs) = rest.split_at_mut(l.free_offset - l.control_offset);
    match policy {
        InitPolicy::Constant { variable, state, control } => {
            xs.fill(*state);
            us.fill(*control);
            vs.fill(*variable);
        }
        InitPolicy::Slabs { variable, state, control } => {
            fill_slab(xs, state, l.n, nodes, "state")?;
            fill_slab(us, control, l.m, nodes, "control")?;
            if variable.len() != l.nv {
                return Err(TranscriptionError::Argument(format!(
                    "variable start vector has length {}, expected {}",
                    variable.len(),
                    l.nv
                )));
            }
            vs.copy_from_slice(variable);
        }
    }
    for &(s, lo, hi) in &nlp.pinned {
        nlp.lvar[s] = lo;
        nlp.uvar[s] = hi;
    }
    for ((x, lo), hi) in nlp.x_start.iter_mut().zip(&nlp.lvar).zip(&nlp.uvar) {
        *x = x.clamp(*lo, *hi);
    }
    for &(s, _, _) in &nlp.pinned {
        nlp.lvar[s] = nlp.x_start[s];
        nlp.uvar[s] = nlp.x_start[s];
    }
    Ok(())
}
