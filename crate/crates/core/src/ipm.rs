//! Filter line-search primal-dual interior-point solver for a
//! [`StructuredNlp`].
//!
//! Inequality rows `lcon <= c(x) <= ucon` get a slack `s` with `c(x) - s = 0`
//! and barrier terms on `s`; the slack step is eliminated into the dual
//! diagonal so the factorized system has dimension `free vars + rows`.
//! Fixed variables (`lvar == uvar`) stay at their value and are left out of
//! the linear algebra.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::Backend;
use crate::kernel::{EvalError, Workspace};
use crate::sparse::{analyze_paired, gmres_refine, refine_with, PivotScale, Inertia, LdlFactor, SparseSym, Symbolic};
use crate::transcription::StructuredNlp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Lower bound of the fraction-to-boundary parameter `max(tau_min, 1 - mu)`.
    pub tau_min: f64,
    /// Relative push of the start point and slacks into the box.
    pub bound_push: f64,
    /// Non-fixed bounds are widened by `bound_relax * max(1, |bound|)` so that
    /// bounds touched by equality constraints keep a nonempty interior.
    pub bound_relax: f64,
    /// Starting value of every bound dual; `None` starts them at `mu / gap`.
    pub bound_mult_init: Option<f64>,
    /// First nonzero primal regularization, relative to `max(1, |W|max)`.
    pub delta_w_first: f64,
    pub delta_w_growth: f64,
    /// Divisor applied to the last successful `delta_w` for the next first guess.
    pub delta_w_shrink: f64,
    pub delta_w_min: f64,
    pub delta_w_max: f64,
    /// Dual regularization `delta_c * mu^delta_c_exponent`.
    pub delta_c: f64,
    pub delta_c_exponent: f64,
    pub pivot_threshold: f64,
    pub pivot_scale: PivotScale,
    /// Factorize each constraint row together with a matched variable as a
    /// 2×2 pivot.
    pub paired_pivots: bool,
    pub scaling: bool,
    pub scaling_target: f64,
    /// Smallest scale factor applied to the objective or a row.
    pub scaling_min: f64,
    pub refine_rounds: usize,
    /// Refine when the step residual exceeds `refine_trigger * (1 + |rhs|inf)`.
    pub refine_trigger: f64,
    pub min_step: f64,
    pub kappa_sigma: f64,
    pub verbose: bool,
    /// Writes the first assembled KKT matrix in Matrix Market format.
    pub kkt_dump: Option<PathBuf>,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions {
            tol: 1e-8,
            max_iter: 3000,
            mu_init: 1e-1,
            tau_min: 0.99,
            bound_push: 1e-2,
            bound_relax: 1e-8,
            bound_mult_init: Some(1.0),
            delta_w_first: 1e-4,
            delta_w_growth: 8.0,
            delta_w_shrink: 3.0,
            delta_w_min: 1e-20,
            delta_w_max: 1e40,
            delta_c: 1e-8,
            delta_c_exponent: 0.25,
            pivot_threshold: crate::sparse::DEFAULT_PIVOT_THRESHOLD,
            pivot_scale: PivotScale::Column,
            paired_pivots: true,
            scaling: true,
            scaling_target: 100.0,
            scaling_min: 1e-8,
            refine_rounds: 5,
            refine_trigger: 1e-8,
            min_step: 1e-12,
            kappa_sigma: 1e10,
            verbose: false,
            kkt_dump: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OptionsError {
    #[error("tol must be positive")]
    Tol,
    #[error("max_iter must be at least 1")]
    MaxIter,
    #[error("mu_init must be positive")]
    MuInit,
    #[error("{0} must be greater than 1")]
    Factor(&'static str),
}

impl IpmOptions {
    pub fn validate(&self) -> Result<(), OptionsError> {
        if !(self.tol > 0.0) {
            return Err(OptionsError::Tol);
        }
        if self.max_iter == 0 {
            return Err(OptionsError::MaxIter);
        }
        if !(self.mu_init > 0.0) {
            return Err(OptionsError::MuInit);
        }
        if !(self.delta_w_growth > 1.0) {
            return Err(OptionsError::Factor("delta_w_growth"));
        }
        if !(self.delta_w_shrink > 1.0) {
            return Err(OptionsError::Factor("delta_w_shrink"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    MaxIter,
    InfeasibleDetected,
    EvalError,
    /// The line search failed twice in a row, or no regularization gave the
    /// right inertia.
    RestorationFailed,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::MaxIter => "max_iter",
            Status::InfeasibleDetected => "infeasible_detected",
            Status::EvalError => "eval_error",
            Status::RestorationFailed => "restoration_failed",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Wall time per phase, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Timings {
    pub derivatives: f64,
    pub factorization: f64,
    pub solves: f64,
    pub total: f64,
}

/// Unscaled KKT residuals at the returned point, plus the scaled error used
/// for termination.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Residuals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub scaled: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub status: Status,
    /// Objective in the user's sense (sign restored for maximization).
    pub objective: f64,
    pub iterations: usize,
    pub x: Vec<f64>,
    /// Constraint multipliers of `f + λᵀc`.
    pub lambda: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    /// Final `‖c - s‖₁` in the scaled problem.
    pub theta: f64,
    pub residuals: Residuals,
    pub timings: Timings,
    pub mu: f64,
    pub nnz_kkt: usize,
    pub nnz_l: usize,
    /// Number of symbolic analyses performed (one per solve).
    pub symbolic_analyses: usize,
    pub message: Option<String>,
}

impl Solution {
    /// Machine-readable summary without the primal-dual vectors.
    pub fn report(&self) -> Value {
        json!({
            "status": self.status,
            "objective": self.objective,
            "iterations": self.iterations,
            "theta": self.theta,
            "residuals": self.residuals,
            "timings": self.timings,
            "nnz_kkt": self.nnz_kkt,
            "nnz_l": self.nnz_l,
            "message": self.message,
        })
    }
}

/// Objective and row scales, `min(1, target / ‖·‖∞)`, with 1 for zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub objective: f64,
    pub rows: Vec<f64>,
}

fn scale_factor(norm: f64, target: f64, floor: f64) -> f64 {
    if norm.is_nan() || norm <= 0.0 {
        1.0
    } else {
        (target / norm).clamp(floor.min(1.0), 1.0)
    }
}

/// Gradient-based scaling from derivatives at `x`.
pub fn scale_problem(
    nlp: &StructuredNlp,
    x: &[f64],
    backend: &Backend,
    ws: &mut Workspace,
    target: f64,
    floor: f64,
) -> Result<Scaling, EvalError> {
    let mut coo = vec![0.0; nlp.gradient_pattern().len()];
    let mut g = vec![0.0; nlp.nvar()];
    nlp.gradient(x, backend, ws, &mut coo, &mut g)?;
    let mut jv = vec![0.0; nlp.nnz_jacobian()];
    nlp.jacobian(x, backend, ws, &mut jv)?;
    Ok(scaling_from(nlp, &g, &jv, target, floor))
}

fn scaling_from(nlp: &StructuredNlp, g: &[f64], jv: &[f64], target: f64, floor: f64) -> Scaling {
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // a row's entries may be split over duplicate coordinates; bound by the sum
    let mut rmax = vec![0.0f64; nlp.ncon()];
    let (rows, _) = nlp.jacobian_pattern();
    for (&r, v) in rows.iter().zip(jv) {
        rmax[r] = rmax[r].max(v.abs());
    }
    Scaling {
        objective: scale_factor(gmax, target, floor),
        rows: rmax.into_iter().map(|n| scale_factor(n, target, floor)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Equality,
    Inequality,
    Free,
}

const NONE: usize = usize::MAX;

// filter constants
const S_PHI: f64 = 2.3;
const S_THETA: f64 = 1.1;
const DELTA: f64 = 1.0;
const ETA: f64 = 1e-4;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const KAPPA_EPS: f64 = 10.0;
const S_MAX: f64 = 100.0;

struct Model<'a> {
    nlp: &'a StructuredNlp,
    backend: &'a Backend,
    ws: Workspace,
    obj_scale: f64,
    row_scale: Vec<f64>,
    grad_coo: Vec<f64>,
    lam_nlp: Vec<f64>,
    time: f64,
}

impl Model<'_> {
    fn f_and_c(&mut self, x: &[f64], c: &mut [f64]) -> Result<f64, EvalError> {
        let t = Instant::now();
        let r = (|| {
            let f = self.nlp.objective(x, self.backend, &mut self.ws)?;
            self.nlp.constraints(x, self.backend, &mut self.ws, c)?;
            Ok(f)
        })();
        self.time += t.elapsed().as_secs_f64();
        let f = r?;
        for (ci, s) in c.iter_mut().zip(&self.row_scale) {
            *ci *= s;
        }
        Ok(f * self.obj_scale)
    }

    fn grad_jac(&mut self, x: &[f64], g: &mut [f64], jv: &mut [f64]) -> Result<(), EvalError> {
        let t = Instant::now();
        let r = (|| {
            self.nlp.gradient(x, self.backend, &mut self.ws, &mut self.grad_coo, g)?;
            self.nlp.jacobian(x, self.backend, &mut self.ws, jv)
        })();
        self.time += t.elapsed().as_secs_f64();
        r?;
        g.iter_mut().for_each(|v| *v *= self.obj_scale);
        let (rows, _) = self.nlp.jacobian_pattern();
        for (v, &r) in jv.iter_mut().zip(rows) {
            *v *= self.row_scale[r];
        }
        Ok(())
    }

    fn hessian(&mut self, x: &[f64], lam: &[f64], hv: &mut [f64]) -> Result<(), EvalError> {
        let t = Instant::now();
        for ((l, &lam), s) in self.lam_nlp.iter_mut().zip(lam).zip(&self.row_scale) {
            *l = lam * s;
        }
        let r = self.nlp.hessian(x, self.obj_scale, &self.lam_nlp, self.backend, &mut self.ws, hv);
        self.time += t.elapsed().as_secs_f64();
        r
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest `a <= 1` keeping `v + a dv >= (1 - tau) v` for positive `v`.
fn ftb(v: f64, dv: f64, tau: f64, a: f64) -> f64 {
    if dv < 0.0 {
        a.min(-tau * v / dv)
    } else {
        a
    }
}

/// The fixed KKT pattern and the positions every derivative entry is summed
/// into.
pub struct KktStructure {
    pub matrix: SparseSym,
    pub n_primal: usize,
    hess_map: Vec<usize>,
    jac_map: Vec<usize>,
    primal_diag: Vec<usize>,
    dual_diag: Vec<usize>,
}

impl KktStructure {
    /// `kidx[slot]` is the primal KKT index of a free slot or `usize::MAX`.
    fn new(nlp: &StructuredNlp, kidx: &[usize], nf: usize, rows: &[RowKind]) -> Self {
        let m = nlp.ncon();
        let (hr, hc) = nlp.hessian_pattern();
        let (jr, jc) = nlp.jacobian_pattern();
        let mut coords = Vec::with_capacity(hr.len() + jr.len() + nf + m);
        let mut tags = Vec::with_capacity(coords.capacity());
        for (k, (&r, &c)) in hr.iter().zip(hc).enumerate() {
            if kidx[r] != NONE && kidx[c] != NONE {
                coords.push((kidx[r], kidx[c]));
                tags.push((0u8, k));
            }
        }
        for (k, (&r, &c)) in jr.iter().zip(jc).enumerate() {
            if kidx[c] != NONE && rows[r] != RowKind::Free {
                coords.push((nf + r, kidx[c]));
                tags.push((1, k));
            }
        }
        for i in 0..nf {
            coords.push((i, i));
            tags.push((2, i));
        }
        for r in 0..m {
            coords.push((nf + r, nf + r));
            tags.push((3, r));
        }
        let (matrix, pos) = SparseSym::from_pattern(nf + m, coords);
        let mut s = KktStructure {
            matrix,
            n_primal: nf,
            hess_map: vec![NONE; hr.len()],
            jac_map: vec![NONE; jr.len()],
            primal_diag: vec![0; nf],
            dual_diag: vec![0; m],
        };
        for ((kind, k), p) in tags.into_iter().zip(pos) {
            match kind {
                0 => s.hess_map[k] = p,
                1 => s.jac_map[k] = p,
                2 => s.primal_diag[k] = p,
                _ => s.dual_diag[k] = p,
            }
        }
        s
    }

    /// Writes `[[W + Σ, Jᵀ], [J, -D]]`; regularization is added by the
    /// factorization.
    fn assemble(&mut self, hv: &[f64], jv: &[f64], sigma_x: &[f64], dual: &[f64]) {
        let vals = &mut self.matrix.values;
        vals.fill(0.0);
        for (&p, &v) in self.hess_map.iter().zip(hv) {
            if p != NONE {
                vals[p] += v;
            }
        }
        for (&p, &v) in self.jac_map.iter().zip(jv) {
            if p != NONE {
                vals[p] += v;
            }
        }
        for (&p, &v) in self.primal_diag.iter().zip(sigma_x) {
            vals[p] += v;
        }
        for (&p, &v) in self.dual_diag.iter().zip(dual) {
            vals[p] = -v;
        }
    }

    fn set_dual_diag(&mut self, dual: &[f64]) {
        for (&p, &v) in self.dual_diag.iter().zip(dual) {
            self.matrix.values[p] = -v;
        }
    }
}

/// Standalone KKT assembly for a single iterate: `W` values in Hessian
/// pattern order, Jacobian values in Jacobian pattern order, primal
/// barrier diagonal per variable and dual diagonal per row. Fixed variables
/// (`lvar == uvar`) are dropped. Returns the matrix with the regularization
/// already applied.
pub fn assemble_kkt(
    nlp: &StructuredNlp,
    hess: &[f64],
    jac: &[f64],
    sigma: &[f64],
    delta_w: f64,
    delta_c: f64,
) -> SparseSym {
    let (kidx, free) = free_index(nlp);
    let rows: Vec<RowKind> = (0..nlp.ncon()).map(|r| row_kind(nlp.lcon[r], nlp.ucon[r])).collect();
    let mut k = KktStructure::new(nlp, &kidx, free.len(), &rows);
    let sig: Vec<f64> = free.iter().map(|&s| sigma[s] + delta_w).collect();
    let dual = vec![delta_c; nlp.ncon()];
    k.assemble(hess, jac, &sig, &dual);
    k.matrix
}

/// Matches constraint rows to free variables through the Jacobian pattern
/// (augmenting paths, larger `|J|` first) and returns `(variable, row)` pairs
/// in KKT indices. Free rows and rows left unmatched stay single pivots.
fn pivot_pairs(nlp: &StructuredNlp, kidx: &[usize], nf: usize, rows: &[RowKind], jv: &[f64]) -> Vec<(usize, usize)> {
    let m = rows.len();
    let (jr, jc) = nlp.jacobian_pattern();
    let mut cand: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for ((&r, &c), &v) in jr.iter().zip(jc).zip(jv) {
        if rows[r] != RowKind::Free && kidx[c] != NONE {
            cand[r].push((kidx[c], v.abs()));
        }
    }
    for list in &mut cand {
        list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        list.dedup_by_key(|e| e.0);
    }
    let mut owner = vec![NONE; nf];
    let mut seen = vec![NONE; nf];
    fn augment(r: usize, stamp: usize, cand: &[Vec<(usize, f64)>], owner: &mut [usize], seen: &mut [usize]) -> bool {
        // greedy pass first keeps the search short on banded patterns
        for &(v, _) in &cand[r] {
            if owner[v] == NONE {
                owner[v] = r;
                return true;
            }
        }
        for &(v, _) in &cand[r] {
            if seen[v] == stamp {
                continue;
            }
            seen[v] = stamp;
            if augment(owner[v], stamp, cand, owner, seen) {
                owner[v] = r;
                return true;
            }
        }
        false
    }
    for r in 0..m {
        augment(r, r, &cand, &mut owner, &mut seen);
    }
    let mut pairs: Vec<(usize, usize)> = (0..nf).filter(|&v| owner[v] != NONE).map(|v| (v, nf + owner[v])).collect();
    pairs.sort_by_key(|p| p.1);
    pairs
}

fn free_index(nlp: &StructuredNlp) -> (Vec<usize>, Vec<usize>) {
    let mut kidx = vec![NONE; nlp.nvar()];
    let mut free = Vec::new();
    for i in 0..nlp.nvar() {
        if nlp.lvar[i] < nlp.uvar[i] {
            kidx[i] = free.len();
            free.push(i);
        }
    }
    (kidx, free)
}

fn row_kind(l: f64, u: f64) -> RowKind {
    if l == u {
        RowKind::Equality
    } else if l == f64::NEG_INFINITY && u == f64::INFINITY {
        RowKind::Free
    } else {
        RowKind::Inequality
    }
}

fn relax(b: f64, factor: f64) -> f64 {
    if b.is_finite() {
        b + factor * b.abs().max(1.0)
    } else {
        b
    }
}

fn push_into(v: f64, l: f64, u: f64, kappa: f64) -> f64 {
    let w = (u - l).min(1.0);
    let lo = if l.is_finite() { l + kappa * w } else { l };
    let hi = if u.is_finite() { u - kappa * w } else { u };
    v.max(lo).min(hi)
}

#[derive(Debug, Clone, Copy)]
enum Failure {
    Eval,
    LineSearch,
    Inertia,
}

struct Iterate {
    x: Vec<f64>,
    s: Vec<f64>,
    lam: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
    vl: Vec<f64>,
    vu: Vec<f64>,
    f: f64,
    c: Vec<f64>,
    g: Vec<f64>,
    jv: Vec<f64>,
}

struct Ipm<'a> {
    opts: &'a IpmOptions,
    model: Model<'a>,
    nf: usize,
    m: usize,
    free: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    rows: Vec<RowKind>,
    slo: Vec<f64>,
    shi: Vec<f64>,
    kkt: KktStructure,
    sym: Symbolic,
    factor: LdlFactor,
    it: Iterate,
    mu: f64,
    hv: Vec<f64>,
    sigma_x: Vec<f64>,
    sigma_s: Vec<f64>,
    dual: Vec<f64>,
    rhs: Vec<f64>,
    sol: Vec<f64>,
    resid: Vec<f64>,
    scratch: Vec<f64>,
    jtl: Vec<f64>,
    dx: Vec<f64>,
    ds: Vec<f64>,
    dlam: Vec<f64>,
    xt: Vec<f64>,
    st: Vec<f64>,
    ct: Vec<f64>,
    last_delta_w: f64,
    delta_c_active: bool,
    t_factor: f64,
    t_solve: f64,
}

impl<'a> Ipm<'a> {
    fn jt_mul(&mut self, v: &[f64]) {
        self.jtl.fill(0.0);
        let (jr, jc) = self.model.nlp.jacobian_pattern();
        for ((&r, &c), &j) in jr.iter().zip(jc).zip(&self.it.jv) {
            self.jtl[c] += j * v[r];
        }
    }

    fn theta_of(&self, c: &[f64], s: &[f64]) -> f64 {
        let mut t = 0.0;
        for r in 0..self.m {
            t += match self.rows[r] {
                RowKind::Equality => (c[r] - self.slo[r]).abs(),
                RowKind::Inequality => (c[r] - s[r]).abs(),
                RowKind::Free => 0.0,
            };
        }
        t
    }

    fn barrier(&self, f: f64, x: &[f64], s: &[f64]) -> f64 {
        let mut b = 0.0;
        for (k, &i) in self.free.iter().enumerate() {
            if self.lo[k].is_finite() {
                b += (x[i] - self.lo[k]).ln();
            }
            if self.hi[k].is_finite() {
                b += (self.hi[k] - x[i]).ln();
            }
        }
        for r in 0..self.m {
            if self.rows[r] == RowKind::Inequality {
                if self.slo[r].is_finite() {
                    b += (s[r] - self.slo[r]).ln();
                }
                if self.shi[r].is_finite() {
                    b += (self.shi[r] - s[r]).ln();
                }
            }
        }
        f - self.mu * b
    }

    /// Returns `(stationarity, feasibility, complementarity)` of the scaled
    /// barrier problem with parameter `mu`, and the scale-adjusted max.
    fn kkt_error(&mut self, mu: f64) -> ([f64; 3], f64) {
        let lam = std::mem::take(&mut self.it.lam);
        self.jt_mul(&lam);
        self.it.lam = lam;
        let it = &self.it;
        let (mut stat, mut feas, mut comp) = (0.0f64, 0.0f64, 0.0f64);
        let (mut lam1, mut z1, mut nz) = (0.0, 0.0, 0usize);
        for (k, &i) in self.free.iter().enumerate() {
            stat = stat.max((it.g[i] + self.jtl[i] - it.zl[k] + it.zu[k]).abs());
            if self.lo[k].is_finite() {
                comp = comp.max(((it.x[i] - self.lo[k]) * it.zl[k] - mu).abs());
                z1 += it.zl[k];
                nz += 1;
            }
            if self.hi[k].is_finite() {
                comp = comp.max(((self.hi[k] - it.x[i]) * it.zu[k] - mu).abs());
                z1 += it.zu[k];
                nz += 1;
            }
        }
        for r in 0..self.m {
            lam1 += it.lam[r].abs();
            match self.rows[r] {
                RowKind::Equality => feas = feas.max((it.c[r] - self.slo[r]).abs()),
                RowKind::Inequality => {
                    feas = feas.max((it.c[r] - it.s[r]).abs());
                    stat = stat.max((-it.lam[r] - it.vl[r] + it.vu[r]).abs());
                    if self.slo[r].is_finite() {
                        comp = comp.max(((it.s[r] - self.slo[r]) * it.vl[r] - mu).abs());
                        z1 += it.vl[r];
                        nz += 1;
                    }
                    if self.shi[r].is_finite() {
                        comp = comp.max(((self.shi[r] - it.s[r]) * it.vu[r] - mu).abs());
                        z1 += it.vu[r];
                        nz += 1;
                    }
                }
                RowKind::Free => {}
            }
        }
        let s_d = (S_MAX.max((lam1 + z1) / ((self.m + nz).max(1)) as f64)) / S_MAX;
        let s_c = (S_MAX.max(z1 / nz.max(1) as f64)) / S_MAX;
        ([stat, feas, comp], (stat / s_d).max(feas).max(comp / s_c))
    }

    fn sigma(&mut self) {
        let it = &self.it;
        for (k, &i) in self.free.iter().enumerate() {
            let mut s = 0.0;
            if self.lo[k].is_finite() {
                s += it.zl[k] / (it.x[i] - self.lo[k]);
            }
            if self.hi[k].is_finite() {
                s += it.zu[k] / (self.hi[k] - it.x[i]);
            }
            self.sigma_x[k] = s;
        }
        for r in 0..self.m {
            let mut s = 0.0;
            if self.rows[r] == RowKind::Inequality {
                if self.slo[r].is_finite() {
                    s += it.vl[r] / (it.s[r] - self.slo[r]);
                }
                if self.shi[r].is_finite() {
                    s += it.vu[r] / (self.shi[r] - it.s[r]);
                }
            }
            self.sigma_s[r] = s;
        }
    }

    fn set_dual(&mut self, delta_w: f64) {
        for r in 0..self.m {
            self.dual[r] = match self.rows[r] {
                RowKind::Equality => 0.0,
                RowKind::Inequality => 1.0 / (self.sigma_s[r] + delta_w),
                RowKind::Free => 1.0,
            };
        }
    }

    /// Factorizes with inertia correction; returns the `delta_w` used.
    fn factorize(&mut self) -> Result<(f64, f64), Failure> {
        let t = Instant::now();
        let target = Inertia { positive: self.nf, negative: self.m, zero: 0 };
        let w_max = norm_inf(&self.hv);
        let mut delta_w = 0.0;
        let mut delta_c = if self.delta_c_active { self.opts.delta_c * self.mu.powf(self.opts.delta_c_exponent) } else { 0.0 };
        let result = loop {
            self.set_dual(delta_w);
            self.kkt.set_dual_diag(&self.dual);
            self.factor.refactor(&self.kkt.matrix, &self.sym, self.nf, delta_w, delta_c, self.opts.pivot_threshold);
            let inertia = self.factor.inertia;
            if inertia == target {
                if delta_w > 0.0 {
                    self.last_delta_w = delta_w;
                }
                self.delta_c_active = delta_c > 0.0;
                break Ok((delta_w, delta_c));
            }
            if inertia.zero > 0 {
                if delta_c == 0.0 {
                    delta_c = self.opts.delta_c * self.mu.powf(self.opts.delta_c_exponent);
                    continue;
                }
                // a dual pivot of -delta_c under the threshold reads as zero
                if delta_c < 10.0 * self.factor.threshold {
                    delta_c = 10.0 * self.factor.threshold;
                    continue;
                }
                delta_c *= self.opts.delta_w_growth;
            }
            delta_w = if delta_w == 0.0 {
                if self.last_delta_w == 0.0 {
                    self.opts.delta_w_first * w_max.max(1.0)
                } else {
                    (self.last_delta_w / self.opts.delta_w_shrink).max(self.opts.delta_w_min)
                }
            } else {
                delta_w * self.opts.delta_w_growth
            };
            if delta_w > self.opts.delta_w_max {
                break Err(Failure::Inertia);
            }
        };
        self.t_factor += t.elapsed().as_secs_f64();
        result
    }

    fn build_rhs(&mut self, delta_w: f64) {
        let lam = std::mem::take(&mut self.it.lam);
        self.jt_mul(&lam);
        self.it.lam = lam;
        let (it, mu) = (&self.it, self.mu);
        for (k, &i) in self.free.iter().enumerate() {
            let mut r = it.g[i] + self.jtl[i];
            if self.lo[k].is_finite() {
                r -= mu / (it.x[i] - self.lo[k]);
            }
            if self.hi[k].is_finite() {
                r += mu / (self.hi[k] - it.x[i]);
            }
            self.rhs[k] = -r;
        }
        for r in 0..self.m {
            self.rhs[self.nf + r] = match self.rows[r] {
                RowKind::Equality => -(it.c[r] - self.slo[r]),
                RowKind::Inequality => {
                    let rs = self.slack_residual(r);
                    -(it.c[r] - it.s[r]) - rs / (self.sigma_s[r] + delta_w)
                }
                RowKind::Free => 0.0,
            };
        }
    }

    fn slack_residual(&self, r: usize) -> f64 {
        let it = &self.it;
        let mut rs = -it.lam[r];
        if self.slo[r].is_finite() {
            rs -= self.mu / (it.s[r] - self.slo[r]);
        }
        if self.shi[r].is_finite() {
            rs += self.mu / (self.shi[r] - it.s[r]);
        }
        rs
    }

    fn solve_direction(&mut self, delta_w: f64, delta_c: f64) -> Result<(), Failure> {
        let t = Instant::now();
        self.sol.copy_from_slice(&self.rhs);
        self.factor.solve_in_place(&mut self.sol).map_err(|_| Failure::Inertia)?;
        // the dual regularization only stabilizes the pivots; refine toward
        // the system without it
        let target = |a: &SparseSym, x: &[f64], y: &mut [f64], nf: usize| {
            a.mul_vec(x, y);
            for i in 0..nf {
                y[i] += delta_w * x[i];
            }
        };
        target(&self.kkt.matrix, &self.sol, &mut self.resid, self.nf);
        let res = self.resid.iter().zip(&self.rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let trigger = self.opts.refine_trigger * (1.0 + norm_inf(&self.rhs));
        if delta_c > 0.0 {
            gmres_refine(
                &self.kkt.matrix,
                &mut self.factor,
                delta_w,
                0.0,
                &self.rhs,
                &mut self.sol,
                self.opts.refine_rounds,
                self.opts.refine_rounds,
                1e-14,
            )
            .map_err(|_| Failure::Inertia)?;
        } else if res > trigger {
            refine_with(&self.kkt.matrix, &mut self.factor, &self.rhs, &mut self.sol, self.opts.refine_rounds, &mut self.scratch)
                .map_err(|_| Failure::Inertia)?;
        }
        self.dx.copy_from_slice(&self.sol[..self.nf]);
        self.dlam.copy_from_slice(&self.sol[self.nf..]);
        for r in 0..self.m {
            self.ds[r] = match self.rows[r] {
                RowKind::Inequality => (self.dlam[r] - self.slack_residual(r)) / (self.sigma_s[r] + delta_w),
                _ => 0.0,
            };
            if self.rows[r] == RowKind::Free {
                self.dlam[r] = 0.0;
            }
        }
        self.t_solve += t.elapsed().as_secs_f64();
        Ok(())
    }
}

/// Solves the NLP. `nlp.x_start` is pushed into the interior of the box.
pub fn solve(nlp: &StructuredNlp, opts: &IpmOptions, backend: &Backend) -> Solution {
    let start = Instant::now();
    let mut sol = run(nlp, opts, backend);
    sol.timings.total = start.elapsed().as_secs_f64();
    sol
}

fn run(nlp: &StructuredNlp, opts: &IpmOptions, backend: &Backend) -> Solution {
    let n = nlp.nvar();
    let m = nlp.ncon();
    let (kidx, free) = free_index(nlp);
    let nf = free.len();
    let lo: Vec<f64> = free.iter().map(|&i| relax(nlp.lvar[i], -opts.bound_relax)).collect();
    let hi: Vec<f64> = free.iter().map(|&i| relax(nlp.uvar[i], opts.bound_relax)).collect();
    let rows: Vec<RowKind> = (0..m).map(|r| row_kind(nlp.lcon[r], nlp.ucon[r])).collect();

    let mut x = nlp.x_start.clone();
    for i in 0..n {
        x[i] = if kidx[i] == NONE { nlp.lvar[i] } else { push_into(x[i], nlp.lvar[i], nlp.uvar[i], opts.bound_push) };
    }

    let mut model = Model {
        nlp,
        backend,
        ws: nlp.workspace(),
        obj_scale: 1.0,
        row_scale: vec![1.0; m],
        grad_coo: vec![0.0; nlp.gradient_pattern().len()],
        lam_nlp: vec![0.0; m],
        time: 0.0,
    };
    let mut g = vec![0.0; n];
    let mut jv = vec![0.0; nlp.nnz_jacobian()];
    let mut c = vec![0.0; m];

    let kkt = KktStructure::new(nlp, &kidx, nf, &rows);
    let nnz_kkt = kkt.matrix.nnz();
    let early = |status, x: Vec<f64>, msg: String, model: &Model| Solution {
        status,
        objective: f64::NAN,
        iterations: 0,
        x,
        lambda: vec![0.0; m],
        z_lower: vec![0.0; n],
        z_upper: vec![0.0; n],
        theta: f64::NAN,
        residuals: Residuals::default(),
        timings: Timings { derivatives: model.time, ..Default::default() },
        mu: opts.mu_init,
        nnz_kkt,
        nnz_l: 0,
        symbolic_analyses: 0,
        message: Some(msg),
    };

    if opts.scaling {
        // scale at the user's starting point; the pushed point is the fallback
        let at = if model.grad_jac(&nlp.x_start, &mut g, &mut jv).is_ok() { &nlp.x_start } else { &x };
        if let Err(e) = model.grad_jac(at, &mut g, &mut jv) {
            return early(Status::EvalError, x, e.to_string(), &model);
        }
        let s = scaling_from(nlp, &g, &jv, opts.scaling_target, opts.scaling_min);
        model.obj_scale = s.objective;
        model.row_scale = s.rows;
    }
    if let Err(e) = model.grad_jac(&x, &mut g, &mut jv) {
        return early(Status::EvalError, x, e.to_string(), &model);
    }
    let f = match model.f_and_c(&x, &mut c) {
        Ok(f) => f,
        Err(e) => return early(Status::EvalError, x, e.to_string(), &model),
    };

    let (slo, shi): (Vec<f64>, Vec<f64>) = (0..m)
        .map(|r| {
            let (l, u) = (nlp.lcon[r] * model.row_scale[r], nlp.ucon[r] * model.row_scale[r]);
            match rows[r] {
                RowKind::Inequality => (relax(l, -opts.bound_relax), relax(u, opts.bound_relax)),
                _ => (l, u),
            }
        })
        .unzip();
    let s: Vec<f64> = (0..m)
        .map(|r| match rows[r] {
            RowKind::Inequality => push_into(c[r], slo[r], shi[r], opts.bound_push),
            RowKind::Equality => slo[r],
            RowKind::Free => c[r],
        })
        .collect();

    let sym = {
        let _t = Instant::now();
        let pairs = if opts.paired_pivots { pivot_pairs(nlp, &kidx, nf, &rows, &jv) } else { Vec::new() };
        analyze_paired(&kkt.matrix, &pairs).expect("ordering of a well-formed pattern")
    };
    let symbolic_analyses = 1;
    let mut factor = LdlFactor::new(&sym);
    factor.pivot_scale = opts.pivot_scale;
    let nnz_l = sym.nnz_l();

    let mu = opts.mu_init;
    let gap_dual = |gap: f64| match (gap.is_finite(), opts.bound_mult_init) {
        (false, _) => 0.0,
        (true, Some(z)) => z,
        (true, None) => mu / gap,
    };
    let zl: Vec<f64> = free.iter().zip(&lo).map(|(&i, &l)| gap_dual(x[i] - l)).collect();
    let zu: Vec<f64> = free.iter().zip(&hi).map(|(&i, &u)| gap_dual(u - x[i])).collect();
    let vl: Vec<f64> = (0..m)
        .map(|r| if rows[r] == RowKind::Inequality { gap_dual(s[r] - slo[r]) } else { 0.0 })
        .collect();
    let vu: Vec<f64> = (0..m)
        .map(|r| if rows[r] == RowKind::Inequality { gap_dual(shi[r] - s[r]) } else { 0.0 })
        .collect();

    let nk = nf + m;
    let mut ipm = Ipm {
        opts,
        model,
        nf,
        m,
        free,
        lo,
        hi,
        rows,
        slo,
        shi,
        kkt,
        sym,
        factor,
        it: Iterate { x, s, lam: vec![0.0; m], zl, zu, vl, vu, f, c, g, jv },
        mu,
        hv: vec![0.0; nlp.nnz_hessian()],
        sigma_x: vec![0.0; nf],
        sigma_s: vec![0.0; m],
        dual: vec![0.0; m],
        rhs: vec![0.0; nk],
        sol: vec![0.0; nk],
        resid: vec![0.0; nk],
        scratch: vec![0.0; nk],
        jtl: vec![0.0; n],
        dx: vec![0.0; nf],
        ds: vec![0.0; m],
        dlam: vec![0.0; m],
        xt: vec![0.0; n],
        st: vec![0.0; m],
        ct: vec![0.0; m],
        last_delta_w: 0.0,
        delta_c_active: false,
        t_factor: 0.0,
        t_solve: 0.0,
    };
    let (status, iterations, message) = ipm.iterate();
    ipm.finish(status, iterations, message, nnz_kkt, nnz_l, symbolic_analyses)
}

impl Ipm<'_> {
    fn iterate(&mut self) -> (Status, usize, Option<String>) {
        let opts = self.opts;
        let theta0 = self.theta_of(&self.it.c, &self.it.s);
        let theta_max = 1e4 * theta0.max(1.0);
        let theta_min = 1e-4 * theta0.max(1.0);
        let mut filter: Vec<(f64, f64)> = Vec::new();
        let mut retried = false;
        let mut dumped = false;
        let mu_min = opts.tol / 10.0;
        if opts.verbose {
            println!("{:>5} {:>14} {:>10} {:>10} {:>9} {:>9} {:>9} {:>3}", "iter", "objective", "theta", "mu", "alpha_pr", "alpha_du", "delta_w", "ls");
        }
        let mut iter = 0;
        loop {
            let (_, e0) = self.kkt_error(0.0);
            if e0 <= opts.tol {
                return (Status::Optimal, iter, None);
            }
            loop {
                let (_, emu) = self.kkt_error(self.mu);
                if emu > KAPPA_EPS * self.mu || self.mu <= mu_min {
                    break;
                }
                self.mu = mu_min.max((0.2 * self.mu).min(self.mu.powf(1.5)));
                filter.clear();
            }
            if iter >= opts.max_iter {
                return (Status::MaxIter, iter, None);
            }

            if let Err(e) = self.model.hessian(&self.it.x, &self.it.lam, &mut self.hv) {
                return (Status::EvalError, iter, Some(e.to_string()));
            }
            self.sigma();
            self.set_dual(0.0);
            self.kkt.assemble(&self.hv, &self.it.jv, &self.sigma_x, &self.dual);
            if let (Some(path), false) = (&opts.kkt_dump, dumped) {
                let _ = std::fs::write(path, self.kkt.matrix.to_matrix_market());
                dumped = true;
            }
            let (delta_w, delta_c) = match self.factorize() {
                Ok(d) => d,
                Err(_) => return (Status::RestorationFailed, iter, Some("no regularization gave the required inertia".into())),
            };
            self.build_rhs(delta_w);
            if self.solve_direction(delta_w, delta_c).is_err() {
                return (Status::RestorationFailed, iter, Some("singular KKT system".into()));
            }

            let tau = opts.tau_min.max(1.0 - self.mu);
            let (alpha_max, alpha_z) = self.step_bounds(tau);
            let theta = self.theta_of(&self.it.c, &self.it.s);
            let phi = self.barrier(self.it.f, &self.it.x, &self.it.s);
            let gphi = self.barrier_slope();

            let mut alpha = alpha_max;
            let mut trials = 0;
            let tiny = self.tiny_step();
            let mut last_failure = Failure::LineSearch;
            let accepted = loop {
                trials += 1;
                self.trial_point(alpha);
                let ft = {
                    let (x, c) = (&self.xt, &mut self.ct);
                    self.model.f_and_c(x, c)
                };
                match ft {
                    Err(_) => last_failure = Failure::Eval,
                    Ok(ft) => {
                        for r in 0..self.m {
                            if self.rows[r] == RowKind::Free {
                                self.st[r] = self.ct[r];
                            }
                        }
                        let theta_t = self.theta_of(&self.ct, &self.st);
                        let phi_t = self.barrier(ft, &self.xt, &self.st);
                        if tiny && phi_t.is_finite() {
                            break Some((ft, false));
                        }
                        let switching = gphi < 0.0 && alpha * (-gphi).powf(S_PHI) > DELTA * theta.powf(S_THETA);
                        let armijo = phi_t <= phi + ETA * alpha * gphi;
                        let in_filter = filter.iter().all(|&(th, ph)| theta_t < th || phi_t < ph);
                        let ok = phi_t.is_finite()
                            && theta_t < theta_max
                            && in_filter
                            && if theta <= theta_min && switching {
                                armijo
                            } else {
                                theta_t <= (1.0 - GAMMA_THETA) * theta || phi_t <= phi - GAMMA_PHI * theta
                            };
                        if ok {
                            break Some((ft, !(switching && armijo)));
                        }
                        last_failure = Failure::LineSearch;
                    }
                }
                alpha *= 0.5;
                if alpha < opts.min_step {
                    break None;
                }
            };

            match accepted {
                None => {
                    if retried {
                        let status = match last_failure {
                            Failure::Eval => Status::EvalError,
                            _ if theta > 1e2 * opts.tol => Status::InfeasibleDetected,
                            _ => Status::RestorationFailed,
                        };
                        return (status, iter, Some("line search failed at the minimal step".into()));
                    }
                    retried = true;
                    self.mu *= 10.0;
                    filter.clear();
                    if opts.verbose {
                        println!("{:>5} line search failed; retrying with mu = {:.2e}", iter, self.mu);
                    }
                }
                Some((ft, augment)) => {
                    retried = false;
                    if augment {
                        let entry = ((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta);
                        filter.retain(|&(th, ph)| !(th >= entry.0 && ph >= entry.1));
                        filter.push(entry);
                    }
                    self.accept(alpha, alpha_z, ft);
                    if let Err(e) = self.model.grad_jac(&self.it.x, &mut self.it.g, &mut self.it.jv) {
                        return (Status::EvalError, iter + 1, Some(e.to_string()));
                    }
                    if opts.verbose {
                        let obj = self.model.nlp.meta.reported_objective(self.it.f / self.model.obj_scale);
                        let th = self.theta_of(&self.it.c, &self.it.s);
                        println!(
                            "{:>5} {:>14.7e} {:>10.3e} {:>10.3e} {:>9.2e} {:>9.2e} {:>9.2e} {:>3}",
                            iter + 1,
                            obj,
                            th,
                            self.mu,
                            alpha,
                            alpha_z,
                            delta_w,
                            trials
                        );
                    }
                }
            }
            iter += 1;
        }
    }

    fn step_bounds(&self, tau: f64) -> (f64, f64) {
        let it = &self.it;
        let (mut ap, mut az) = (1.0f64, 1.0f64);
        for (k, &i) in self.free.iter().enumerate() {
            let dx = self.dx[k];
            if self.lo[k].is_finite() {
                ap = ftb(it.x[i] - self.lo[k], dx, tau, ap);
                az = ftb(it.zl[k], self.dz_lower(k), tau, az);
            }
            if self.hi[k].is_finite() {
                ap = ftb(self.hi[k] - it.x[i], -dx, tau, ap);
                az = ftb(it.zu[k], self.dz_upper(k), tau, az);
            }
        }
        for r in 0..self.m {
            if self.rows[r] != RowKind::Inequality {
                continue;
            }
            if self.slo[r].is_finite() {
                ap = ftb(it.s[r] - self.slo[r], self.ds[r], tau, ap);
                az = ftb(it.vl[r], self.dv_lower(r), tau, az);
            }
            if self.shi[r].is_finite() {
                ap = ftb(self.shi[r] - it.s[r], -self.ds[r], tau, ap);
                az = ftb(it.vu[r], self.dv_upper(r), tau, az);
            }
        }
        (ap, az)
    }

    fn dz_lower(&self, k: usize) -> f64 {
        let gap = self.it.x[self.free[k]] - self.lo[k];
        self.mu / gap - self.it.zl[k] - self.it.zl[k] * self.dx[k] / gap
    }

    fn dz_upper(&self, k: usize) -> f64 {
        let gap = self.hi[k] - self.it.x[self.free[k]];
        self.mu / gap - self.it.zu[k] + self.it.zu[k] * self.dx[k] / gap
    }

    fn dv_lower(&self, r: usize) -> f64 {
        let gap = self.it.s[r] - self.slo[r];
        self.mu / gap - self.it.vl[r] - self.it.vl[r] * self.ds[r] / gap
    }

    fn dv_upper(&self, r: usize) -> f64 {
        let gap = self.shi[r] - self.it.s[r];
        self.mu / gap - self.it.vu[r] + self.it.vu[r] * self.ds[r] / gap
    }

    fn barrier_slope(&self) -> f64 {
        let it = &self.it;
        let mut d = 0.0;
        for (k, &i) in self.free.iter().enumerate() {
            let mut gk = it.g[i];
            if self.lo[k].is_finite() {
                gk -= self.mu / (it.x[i] - self.lo[k]);
            }
            if self.hi[k].is_finite() {
                gk += self.mu / (self.hi[k] - it.x[i]);
            }
            d += gk * self.dx[k];
        }
        for r in 0..self.m {
            if self.rows[r] == RowKind::Inequality {
                let mut gs = 0.0;
                if self.slo[r].is_finite() {
                    gs -= self.mu / (it.s[r] - self.slo[r]);
                }
                if self.shi[r].is_finite() {
                    gs += self.mu / (self.shi[r] - it.s[r]);
                }
                d += gs * self.ds[r];
            }
        }
        d
    }

    fn tiny_step(&self) -> bool {
        let eps = 10.0 * f64::EPSILON;
        self.free.iter().enumerate().all(|(k, &i)| self.dx[k].abs() <= eps * (1.0 + self.it.x[i].abs()))
            && (0..self.m).all(|r| self.ds[r].abs() <= eps * (1.0 + self.it.s[r].abs()))
    }

    fn trial_point(&mut self, alpha: f64) {
        self.xt.copy_from_slice(&self.it.x);
        for (k, &i) in self.free.iter().enumerate() {
            self.xt[i] += alpha * self.dx[k];
        }
        for r in 0..self.m {
            self.st[r] = self.it.s[r] + alpha * self.ds[r];
        }
    }

    fn accept(&mut self, alpha: f64, alpha_z: f64, f: f64) {
        for k in 0..self.nf {
            if self.lo[k].is_finite() {
                self.it.zl[k] += alpha_z * self.dz_lower(k);
            }
            if self.hi[k].is_finite() {
                self.it.zu[k] += alpha_z * self.dz_upper(k);
            }
        }
        for r in 0..self.m {
            if self.rows[r] != RowKind::Inequality {
                continue;
            }
            if self.slo[r].is_finite() {
                self.it.vl[r] += alpha_z * self.dv_lower(r);
            }
            if self.shi[r].is_finite() {
                self.it.vu[r] += alpha_z * self.dv_upper(r);
            }
        }
        std::mem::swap(&mut self.it.x, &mut self.xt);
        std::mem::swap(&mut self.it.s, &mut self.st);
        std::mem::swap(&mut self.it.c, &mut self.ct);
        self.it.f = f;
        for r in 0..self.m {
            self.it.lam[r] += alpha * self.dlam[r];
        }
        let (ks, mu) = (self.opts.kappa_sigma, self.mu);
        let clamp = |z: f64, gap: f64| z.max(mu / (ks * gap)).min(ks * mu / gap);
        for (k, &i) in self.free.iter().enumerate() {
            if self.lo[k].is_finite() {
                self.it.zl[k] = clamp(self.it.zl[k], self.it.x[i] - self.lo[k]);
            }
            if self.hi[k].is_finite() {
                self.it.zu[k] = clamp(self.it.zu[k], self.hi[k] - self.it.x[i]);
            }
        }
        for r in 0..self.m {
            if self.rows[r] != RowKind::Inequality {
                continue;
            }
            if self.slo[r].is_finite() {
                self.it.vl[r] = clamp(self.it.vl[r], self.it.s[r] - self.slo[r]);
            }
            if self.shi[r].is_finite() {
                self.it.vu[r] = clamp(self.it.vu[r], self.shi[r] - self.it.s[r]);
            }
        }
    }

    fn finish(
        mut self,
        status: Status,
        iterations: usize,
        message: Option<String>,
        nnz_kkt: usize,
        nnz_l: usize,
        symbolic_analyses: usize,
    ) -> Solution {
        let ([stat, feas, comp], scaled) = self.kkt_error(0.0);
        let of = self.model.obj_scale;
        let n = self.model.nlp.nvar();
        let mut z_lower = vec![0.0; n];
        let mut z_upper = vec![0.0; n];
        for (k, &i) in self.free.iter().enumerate() {
            z_lower[i] = self.it.zl[k] / of;
            z_upper[i] = self.it.zu[k] / of;
        }
        let rs = &self.model.row_scale;
        let lambda: Vec<f64> = self.it.lam.iter().zip(rs).map(|(l, s)| l * s / of).collect();
        let feas_unscaled = (0..self.m)
            .map(|r| match self.rows[r] {
                RowKind::Equality => (self.it.c[r] - self.slo[r]).abs() / rs[r],
                RowKind::Inequality => (self.it.c[r] - self.it.s[r]).abs() / rs[r],
                RowKind::Free => 0.0,
            })
            .fold(0.0, f64::max);
        let _ = feas;
        Solution {
            status,
            objective: self.model.nlp.meta.reported_objective(self.it.f / of),
            iterations,
            theta: self.theta_of(&self.it.c, &self.it.s),
            residuals: Residuals { stationarity: stat / of, feasibility: feas_unscaled, complementarity: comp / of, scaled },
            timings: Timings { derivatives: self.model.time, factorization: self.t_factor, solves: self.t_solve, total: 0.0 },
            mu: self.mu,
            x: std::mem::take(&mut self.it.x),
            lambda,
            z_lower,
            z_upper,
            nnz_kkt,
            nnz_l,
            symbolic_analyses,
            message,
        }
    }
}
