//! The structured NLP: a flat decision vector plus constraint and objective
//! groups, each a kernel mapped over an index range.

use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::backend::Backend;
use crate::dsl::Sense;
use crate::kernel::{Affine, EvalError, Kernel, NodeRef, Slab, SlotRef, Workspace};

use super::Scheme;

/// Offsets of the state, control and free-variable slabs. States and
/// controls are stored node-major: component `i` at node `j` lives at
/// `offset + j * dim + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariableLayout {
    pub n: usize,
    pub m: usize,
    pub nv: usize,
    /// Number of steps; there are `grid_size + 1` nodes.
    pub grid_size: usize,
    pub state_offset: usize,
    pub control_offset: usize,
    pub free_offset: usize,
    pub nvar: usize,
}

impl VariableLayout {
    pub fn new(n: usize, m: usize, nv: usize, grid_size: usize) -> Self {
        let nodes = grid_size + 1;
        let control_offset = n * nodes;
        let free_offset = control_offset + m * nodes;
        VariableLayout {
            n,
            m,
            nv,
            grid_size,
            state_offset: 0,
            control_offset,
            free_offset,
            nvar: free_offset + nv,
        }
    }

    /// Layout with free variables only.
    pub fn free_only(nv: usize) -> Self {
        Self::new(0, 0, nv, 1)
    }

    pub fn state(&self, comp: usize, node: usize) -> usize {
        self.state_offset + node * self.n + comp
    }

    pub fn control(&self, comp: usize, node: usize) -> usize {
        self.control_offset + node * self.m + comp
    }

    pub fn free(&self, comp: usize) -> usize {
        self.free_offset + comp
    }

    /// Affine address of a kernel input under this layout.
    pub fn resolve(&self, s: &SlotRef) -> Affine {
        let (offset, dim) = match s.slab {
            Slab::State => (self.state_offset, self.n),
            Slab::Control => (self.control_offset, self.m),
            Slab::Free => return Affine { base: self.free(s.comp), stride: 0 },
        };
        match s.at {
            NodeRef::Offset(k) => Affine { base: offset + k as usize * dim + s.comp, stride: dim },
            NodeRef::First => Affine { base: offset + s.comp, stride: 0 },
            NodeRef::Last => Affine { base: offset + self.grid_size * dim + s.comp, stride: 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum IndexRange {
    /// `start..end`.
    Span { start: usize, end: usize },
    Points(Vec<usize>),
}

impl IndexRange {
    pub fn len(&self) -> usize {
        match self {
            IndexRange::Span { start, end } => end.saturating_sub(*start),
            IndexRange::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, pos: usize) -> usize {
        match self {
            IndexRange::Span { start, .. } => start + pos,
            IndexRange::Points(p) => p[pos],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GroupKind {
    Dynamics,
    Boundary,
    Path,
    General,
}

#[derive(Debug, Clone)]
pub struct ConstraintGroup {
    pub name: String,
    pub kind: GroupKind,
    pub kernel: Arc<Kernel>,
    pub range: IndexRange,
    pub slots: Vec<Affine>,
    /// Bounds of the `out_dim` rows at one index.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub row_offset: usize,
    jac_offset: usize,
    hess_offset: usize,
}

impl ConstraintGroup {
    pub fn new(
        name: impl Into<String>,
        kind: GroupKind,
        kernel: Kernel,
        range: IndexRange,
        layout: &VariableLayout,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Self {
        assert_eq!(lower.len(), kernel.out_dim());
        assert_eq!(upper.len(), kernel.out_dim());
        let slots = kernel.inputs().iter().map(|s| layout.resolve(s)).collect();
        ConstraintGroup {
            name: name.into(),
            kind,
            kernel: Arc::new(kernel),
            range,
            slots,
            lower,
            upper,
            row_offset: 0,
            jac_offset: 0,
            hess_offset: 0,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.kernel.out_dim()
    }

    pub fn rows(&self) -> usize {
        self.out_dim() * self.range.len()
    }
}

/// `Σ_{i in range} weight * kernel(i)`.
#[derive(Debug, Clone)]
pub struct ObjectiveGroup {
    pub name: String,
    pub kernel: Arc<Kernel>,
    pub range: IndexRange,
    pub slots: Vec<Affine>,
    pub weight: f64,
    grad_offset: usize,
    hess_offset: usize,
}

impl ObjectiveGroup {
    pub fn new(name: impl Into<String>, kernel: Kernel, range: IndexRange, layout: &VariableLayout, weight: f64) -> Self {
        assert_eq!(kernel.out_dim(), 1);
        let slots = kernel.inputs().iter().map(|s| layout.resolve(s)).collect();
        ObjectiveGroup {
            name: name.into(),
            kernel: Arc::new(kernel),
            range,
            slots,
            weight,
            grad_offset: 0,
            hess_offset: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NlpMeta {
    pub name: String,
    pub scheme: Option<Scheme>,
    pub grid_size: usize,
    /// The objective is always minimised; `Max` means the user-facing
    /// value is its negation.
    pub sense: Sense,
}

impl NlpMeta {
    pub fn reported_objective(&self, f: f64) -> f64 {
        match self.sense {
            Sense::Min => f,
            Sense::Max => -f,
        }
    }
}

/// Transcribed (or hand-built) nonlinear program
/// `min f(x)  s.t.  lcon <= c(x) <= ucon,  lvar <= x <= uvar`.
#[derive(Debug, Clone)]
pub struct StructuredNlp {
    pub layout: VariableLayout,
    pub constraint_groups: Vec<ConstraintGroup>,
    pub objective_groups: Vec<ObjectiveGroup>,
    pub lvar: Vec<f64>,
    pub uvar: Vec<f64>,
    pub lcon: Vec<f64>,
    pub ucon: Vec<f64>,
    pub x_start: Vec<f64>,
    pub meta: NlpMeta,
    /// Slots pinned to their start value (unused controls under euler),
    /// with their box before pinning.
    pub pinned: Vec<(usize, f64, f64)>,
    jac_rows: Vec<usize>,
    jac_cols: Vec<usize>,
    grad_slots: Vec<usize>,
    /// Objective entries first, then constraint entries; `row >= col`.
    hess_rows: Vec<usize>,
    hess_cols: Vec<usize>,
}

impl StructuredNlp {
    /// Assembles the NLP, assigning row numbers in group order and
    /// materialising the global coordinate patterns.
    pub fn new(
        layout: VariableLayout,
        mut constraint_groups: Vec<ConstraintGroup>,
        mut objective_groups: Vec<ObjectiveGroup>,
        lvar: Vec<f64>,
        uvar: Vec<f64>,
        x_start: Vec<f64>,
        meta: NlpMeta,
    ) -> Self {
        assert_eq!(lvar.len(), layout.nvar);
        assert_eq!(uvar.len(), layout.nvar);
        assert_eq!(x_start.len(), layout.nvar);
        let (mut lcon, mut ucon) = (Vec::new(), Vec::new());
        let (mut jac_rows, mut jac_cols) = (Vec::new(), Vec::new());
        let mut grad_slots = Vec::new();
        let (mut hess_rows, mut hess_cols) = (Vec::new(), Vec::new());

        for g in &mut objective_groups {
            g.grad_offset = grad_slots.len();
            g.hess_offset = hess_rows.len();
            let st = g.kernel.stencil();
            for p in 0..g.range.len() {
                let i = g.range.get(p);
                grad_slots.extend(st.jacobian.iter().map(|&(_, k)| g.slots[k].at(i)));
                for &(a, b) in &st.hessian {
                    let (ga, gb) = (g.slots[a].at(i), g.slots[b].at(i));
                    hess_rows.push(ga.max(gb));
                    hess_cols.push(ga.min(gb));
                }
            }
        }
        let mut row = 0;
        for g in &mut constraint_groups {
            g.row_offset = row;
            g.jac_offset = jac_rows.len();
            g.hess_offset = hess_rows.len();
            let st = g.kernel.stencil();
            let od = g.out_dim();
            for p in 0..g.range.len() {
                let i = g.range.get(p);
                lcon.extend_from_slice(&g.lower);
                ucon.extend_from_slice(&g.upper);
                for &(r, k) in &st.jacobian {
                    jac_rows.push(row + p * od + r);
                    jac_cols.push(g.slots[k].at(i));
                }
                for &(a, b) in &st.hessian {
                    let (ga, gb) = (g.slots[a].at(i), g.slots[b].at(i));
                    hess_rows.push(ga.max(gb));
                    hess_cols.push(ga.min(gb));
                }
            }
            row += g.rows();
        }
        StructuredNlp {
            layout,
            constraint_groups,
            objective_groups,
            lvar,
            uvar,
            lcon,
            ucon,
            x_start,
            meta,
            pinned: Vec::new(),
            jac_rows,
            jac_cols,
            grad_slots,
            hess_rows,
            hess_cols,
        }
    }

    pub fn nvar(&self) -> usize {
        self.layout.nvar
    }

    pub fn ncon(&self) -> usize {
        self.lcon.len()
    }

    pub fn jacobian_pattern(&self) -> (&[usize], &[usize]) {
        (&self.jac_rows, &self.jac_cols)
    }

    /// Lower-triangle coordinate pattern of the Lagrangian Hessian.
    pub fn hessian_pattern(&self) -> (&[usize], &[usize]) {
        (&self.hess_rows, &self.hess_cols)
    }

    pub fn gradient_pattern(&self) -> &[usize] {
        &self.grad_slots
    }

    pub fn nnz_jacobian(&self) -> usize {
        self.jac_rows.len()
    }

    pub fn nnz_hessian(&self) -> usize {
        self.hess_rows.len()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::for_kernels(
            self.constraint_groups
                .iter()
                .map(|g| &*g.kernel)
                .chain(self.objective_groups.iter().map(|g| &*g.kernel)),
        )
    }

    pub fn objective(&self, x: &[f64], backend: &Backend, ws: &mut Workspace) -> Result<f64, EvalError> {
        let mut total = 0.0;
        for g in &self.objective_groups {
            total += backend.reduce_chunks(g.range.len(), ws, |w, r| {
                let mut acc = 0.0;
                let mut out = [0.0];
                for p in r {
                    g.kernel.values(x, &g.slots, g.range.get(p), w, &mut out)?;
                    acc += g.weight * out[0];
                }
                Ok(acc)
            })?;
        }
        Ok(total)
    }

    /// Objective gradient in coordinate form (order of `gradient_pattern`).
    pub fn gradient_coo(&self, x: &[f64], backend: &Backend, ws: &mut Workspace, vals: &mut [f64]) -> Result<(), EvalError> {
        for g in &self.objective_groups {
            let nnz = g.kernel.stencil().jacobian.len();
            let buf = &mut vals[g.grad_offset..g.grad_offset + nnz * g.range.len()];
            backend.map_chunks(g.range.len(), buf, nnz, ws, |w, r, out| {
                let start = r.start;
                for p in r {
                    let o = &mut out[(p - start) * nnz..(p - start + 1) * nnz];
                    g.kernel.jacobian(x, &g.slots, g.range.get(p), w, o)?;
                    o.iter_mut().for_each(|v| *v *= g.weight);
                }
                Ok(())
            })?;
        }
        Ok(())
    }

    /// Dense objective gradient; `coo` is scratch of `gradient_pattern().len()`.
    pub fn gradient(
        &self,
        x: &[f64],
        backend: &Backend,
        ws: &mut Workspace,
        coo: &mut [f64],
        grad: &mut [f64],
    ) -> Result<(), EvalError> {
        self.gradient_coo(x, backend, ws, coo)?;
        grad.fill(0.0);
        for (&s, &v) in self.grad_slots.iter().zip(coo.iter()) {
            grad[s] += v;
        }
        Ok(())
    }

    pub fn constraints(&self, x: &[f64], backend: &Backend, ws: &mut Workspace, c: &mut [f64]) -> Result<(), EvalError> {
        for g in &self.constraint_groups {
            let od = g.out_dim();
            let buf = &mut c[g.row_offset..g.row_offset + g.rows()];
            backend.map_chunks(g.range.len(), buf, od, ws, |w, r, out| {
                let start = r.start;
                for p in r {
                    g.kernel.values(x, &g.slots, g.range.get(p), w, &mut out[(p - start) * od..(p - start + 1) * od])?;
                }
                Ok(())
            })?;
        }
        Ok(())
    }

    /// Constraint Jacobian values (order of `jacobian_pattern`).
    pub fn jacobian(&self, x: &[f64], backend: &Backend, ws: &mut Workspace, vals: &mut [f64]) -> Result<(), EvalError> {
        for g in &self.constraint_groups {
            let nnz = g.kernel.stencil().jacobian.len();
            let buf = &mut vals[g.jac_offset..g.jac_offset + nnz * g.range.len()];
            backend.map_chunks(g.range.len(), buf, nnz, ws, |w, r, out| {
                let start = r.start;
                for p in r {
                    g.kernel.jacobian(x, &g.slots, g.range.get(p), w, &mut out[(p - start) * nnz..(p - start + 1) * nnz])?;
                }
                Ok(())
            })?;
        }
        Ok(())
    }

    /// Lower triangle of `σ∇²f + Σ λ_r ∇²c_r` (order of `hessian_pattern`).
    pub fn hessian(
        &self,
        x: &[f64],
        sigma: f64,
        lambda: &[f64],
        backend: &Backend,
        ws: &mut Workspace,
        vals: &mut [f64],
    ) -> Result<(), EvalError> {
        for g in &self.objective_groups {
            let nnz = g.kernel.stencil().hessian.len();
            let buf = &mut vals[g.hess_offset..g.hess_offset + nnz * g.range.len()];
            let w8 = [sigma * g.weight];
            backend.map_chunks(g.range.len(), buf, nnz, ws, |w, r, out| {
                let start = r.start;
                for p in r {
                    let o = &mut out[(p - start) * nnz..(p - start + 1) * nnz];
                    g.kernel.hessian(x, &g.slots, g.range.get(p), &w8, w, o)?;
                }
                Ok(())
            })?;
        }
        for g in &self.constraint_groups {
            let nnz = g.kernel.stencil().hessian.len();
            let od = g.out_dim();
            let buf = &mut vals[g.hess_offset..g.hess_offset + nnz * g.range.len()];
            backend.map_chunks(g.range.len(), buf, nnz, ws, |w, r, out| {
                let start = r.start;
                for p in r {
                    let lam = &lambda[g.row_offset + p * od..g.row_offset + (p + 1) * od];
                    let o = &mut out[(p - start) * nnz..(p - start + 1) * nnz];
                    g.kernel.hessian(x, &g.slots, g.range.get(p), lam, w, o)?;
                }
                Ok(())
            })?;
        }
        Ok(())
    }

    /// JSON debug dump: layout, groups with kernels in prefix notation,
    /// and bounds. Infinite bounds are written as the strings `"Inf"` and
    /// `"-Inf"`.
    pub fn debug_dump(&self) -> Value {
        let num = |v: f64| -> Value {
            if v.is_finite() {
                json!(v)
            } else {
                json!(crate::dsl::fmt_num(v))
            }
        };
        let nums = |v: &[f64]| Value::Array(v.iter().map(|&x| num(x)).collect());
        let kernels = |k: &Kernel| Value::Array((0..k.out_dim()).map(|r| json!(k.prefix(r))).collect());
        json!({
            "meta": self.meta,
            "layout": self.layout,
            "constraint_groups": self.constraint_groups.iter().map(|g| json!({
                "name": g.name,
                "kind": g.kind,
                "range": g.range,
                "out_dim": g.out_dim(),
                "row_offset": g.row_offset,
                "kernel": kernels(&g.kernel),
                "lower": nums(&g.lower),
                "upper": nums(&g.upper),
            })).collect::<Vec<_>>(),
            "objective_groups": self.objective_groups.iter().map(|g| json!({
                "name": g.name,
                "range": g.range,
                "weight": g.weight,
                "kernel": kernels(&g.kernel),
            })).collect::<Vec<_>>(),
            "lvar": nums(&self.lvar),
            "uvar": nums(&self.uvar),
            "x_start": nums(&self.x_start),
        })
    }
}
