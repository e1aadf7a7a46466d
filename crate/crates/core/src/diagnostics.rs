//! Finite-difference checks of the AD derivatives of a [`StructuredNlp`].

use std::collections::HashMap;

use serde::Serialize;

use crate::backend::Backend;
use crate::kernel::EvalError;
use crate::transcription::StructuredNlp;

/// Largest relative errors `|ad - fd| / max(1, |fd|)` found at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeCheck {
    pub gradient: f64,
    pub jacobian: f64,
    /// AD Hessian of the Lagrangian against differences of the AD gradient.
    pub hessian: f64,
    /// Finite-difference nonzeros (above `1e-12`) missing from the
    /// structural patterns.
    pub missing_jacobian: usize,
    pub missing_hessian: usize,
}

fn rel(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / fd.abs().max(1.0)
}

struct Evaluator<'a> {
    nlp: &'a StructuredNlp,
    backend: Backend,
    ws: crate::kernel::Workspace,
}

impl Evaluator<'_> {
    fn f(&mut self, x: &[f64]) -> Result<f64, EvalError> {
        self.nlp.objective(x, &self.backend, &mut self.ws)
    }

    fn grad(&mut self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut coo = vec![0.0; self.nlp.gradient_pattern().len()];
        let mut g = vec![0.0; self.nlp.nvar()];
        self.nlp.gradient(x, &self.backend, &mut self.ws, &mut coo, &mut g)?;
        Ok(g)
    }

    fn cons(&mut self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut c = vec![0.0; self.nlp.ncon()];
        self.nlp.constraints(x, &self.backend, &mut self.ws, &mut c)?;
        Ok(c)
    }

    fn jac(&mut self, x: &[f64]) -> Result<HashMap<(usize, usize), f64>, EvalError> {
        let mut vals = vec![0.0; self.nlp.nnz_jacobian()];
        self.nlp.jacobian(x, &self.backend, &mut self.ws, &mut vals)?;
        let (rows, cols) = self.nlp.jacobian_pattern();
        let mut m = HashMap::new();
        for ((&r, &c), v) in rows.iter().zip(cols).zip(vals) {
            *m.entry((r, c)).or_insert(0.0) += v;
        }
        Ok(m)
    }

    /// `σ∇f + Jᵀλ`, dense.
    fn lagrangian_grad(&mut self, x: &[f64], sigma: f64, lambda: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut g = self.grad(x)?;
        g.iter_mut().for_each(|v| *v *= sigma);
        let mut vals = vec![0.0; self.nlp.nnz_jacobian()];
        self.nlp.jacobian(x, &self.backend, &mut self.ws, &mut vals)?;
        let (rows, cols) = self.nlp.jacobian_pattern();
        for ((&r, &c), v) in rows.iter().zip(cols).zip(vals) {
            g[c] += lambda[r] * v;
        }
        Ok(g)
    }
}

/// Compares AD derivatives at `x` with central differences of step `h`.
/// `sigma` and `lambda` weight the Lagrangian whose Hessian is checked.
pub fn derivative_check(
    nlp: &StructuredNlp,
    x: &[f64],
    sigma: f64,
    lambda: &[f64],
    h: f64,
) -> Result<DerivativeCheck, EvalError> {
    let mut ev = Evaluator { nlp, backend: Backend::serial(), ws: nlp.workspace() };
    let n = nlp.nvar();
    let grad = ev.grad(x)?;
    let jac = ev.jac(x)?;
    let mut hess: HashMap<(usize, usize), f64> = HashMap::new();
    {
        let mut vals = vec![0.0; nlp.nnz_hessian()];
        nlp.hessian(x, sigma, lambda, &ev.backend, &mut ev.ws, &mut vals)?;
        let (rows, cols) = nlp.hessian_pattern();
        for ((&r, &c), v) in rows.iter().zip(cols).zip(vals) {
            *hess.entry((r, c)).or_insert(0.0) += v;
        }
    }
    let mut out = DerivativeCheck { gradient: 0.0, jacobian: 0.0, hessian: 0.0, missing_jacobian: 0, missing_hessian: 0 };
    let mut xp = x.to_vec();
    for s in 0..n {
        xp[s] = x[s] + h;
        let (fp, cp, lp) = (ev.f(&xp)?, ev.cons(&xp)?, ev.lagrangian_grad(&xp, sigma, lambda)?);
        xp[s] = x[s] - h;
        let (fm, cm, lm) = (ev.f(&xp)?, ev.cons(&xp)?, ev.lagrangian_grad(&xp, sigma, lambda)?);
        xp[s] = x[s];

        out.gradient = out.gradient.max(rel(grad[s], (fp - fm) / (2.0 * h)));
        for r in 0..cp.len() {
            let fd = (cp[r] - cm[r]) / (2.0 * h);
            match jac.get(&(r, s)) {
                Some(&ad) => out.jacobian = out.jacobian.max(rel(ad, fd)),
                None if fd.abs() > 1e-12 => out.missing_jacobian += 1,
                None => {}
            }
        }
        for t in 0..n {
            let fd = (lp[t] - lm[t]) / (2.0 * h);
            match hess.get(&(t.max(s), t.min(s))) {
                Some(&ad) => out.hessian = out.hessian.max(rel(ad, fd)),
                None if fd.abs() > 1e-12 => out.missing_hessian += 1,
                None => {}
            }
        }
    }
    Ok(out)
}
