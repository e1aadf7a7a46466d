//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use octrans::dsl::Sense;
use octrans::kernel::{KernelBuilder, SlotRef};
use octrans::sparse::{Inertia, SparseSym};
use octrans::transcription::{IndexRange, NlpMeta, ObjectiveGroup, StructuredNlp, VariableLayout};

/// Random quasi-definite matrix `[H Bᵀ; B -D]` with `H`, `D` positive definite,
/// scattered with the given density.
pub fn quasi_definite(np: usize, nd: usize, density: f64, seed: u64) -> SparseSym {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = np + nd;
    let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
    for i in 0..n {
        for j in 0..i {
            if rng.random_range(0.0..1.0) < density {
                let same = (i < np) == (j < np);
                let x: f64 = rng.random_range(-1.0..1.0);
                r.push(i);
                c.push(j);
                v.push(if same { 0.1 * x } else { x });
            }
        }
    }
    let mut a = SparseSym::from_triplets(n, &r, &c, &v);
    // make H and -D diagonally dominant within their blocks
    let dense = a.to_dense();
    let (mut r2, mut c2, mut v2) = (r.clone(), c.clone(), v.clone());
    for i in 0..n {
        let block: f64 = (0..n).filter(|&j| j != i && (i < np) == (j < np)).map(|j| dense[i][j].abs()).sum();
        r2.push(i);
        c2.push(i);
        v2.push(if i < np { 1.0 + block } else { -(1.0 + block) });
    }
    a = SparseSym::from_triplets(n, &r2, &c2, &v2);
    a
}

/// Saddle point `[H Jᵀ; J 0]` with an indefinite `H` whose diagonal may be
/// zero, and `J[r][match_r]` structurally nonzero for every row.
pub fn saddle_point(np: usize, nd: usize, density: f64, seed: u64) -> (SparseSym, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut r, mut c, mut v) = (vec![], vec![], vec![]);
    for i in 0..np {
        for j in 0..=i {
            if rng.random_range(0.0..1.0) < density {
                r.push(i);
                c.push(j);
                v.push(rng.random_range(-1.0..1.0));
            }
        }
    }
    let mut pairs = Vec::new();
    for k in 0..nd {
        let var = (k + 3) % np;
        let row = np + k;
        pairs.push((var, row));
        r.push(row);
        c.push(var);
        v.push(1.0 + rng.random_range(0.0..1.0));
        for j in 0..np {
            if j != var && rng.random_range(0.0..1.0) < density {
                r.push(row);
                c.push(j);
                v.push(rng.random_range(-1.0..1.0));
            }
        }
    }
    (SparseSym::from_triplets(np + nd, &r, &c, &v), pairs)
}

pub fn to_nalgebra(a: &SparseSym) -> DMatrix<f64> {
    let d = a.to_dense();
    DMatrix::from_fn(a.n, a.n, |i, j| d[i][j])
}

pub fn eigen_inertia(m: &DMatrix<f64>) -> Inertia {
    let e = SymmetricEigen::new(m.clone());
    let scale = e.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut out = Inertia::default();
    for &l in e.eigenvalues.iter() {
        if l.abs() <= 1e-12 * scale {
            out.zero += 1;
        } else if l > 0.0 {
            out.positive += 1;
        } else {
            out.negative += 1;
        }
    }
    out
}

/// `½ xᵀQx + cᵀx` over a box, with `Q` expanded term by term.
pub fn qp_nlp(q: &DMatrix<f64>, c: &[f64], lvar: Vec<f64>, uvar: Vec<f64>) -> StructuredNlp {
    let n = c.len();
    let layout = VariableLayout::free_only(n);
    let mut kb = KernelBuilder::new();
    let x: Vec<_> = (0..n).map(|i| kb.input(SlotRef::free(i))).collect();
    let mut acc = kb.constant(0.0);
    for i in 0..n {
        let ci = kb.constant(c[i]);
        let t = kb.mul(ci, x[i]);
        acc = kb.add(acc, t);
        for j in 0..=i {
            let w = if i == j { 0.5 * q[(i, i)] } else { q[(i, j)] };
            if w != 0.0 {
                let wc = kb.constant(w);
                let p = kb.mul(x[i], x[j]);
                let t = kb.mul(wc, p);
                acc = kb.add(acc, t);
            }
        }
    }
    let obj = ObjectiveGroup::new("f", kb.finish(&[acc]), IndexRange::Points(vec![0]), &layout, 1.0);
    let meta = NlpMeta { name: "qp".into(), scheme: None, grid_size: 0, sense: Sense::Min };
    let x0 = vec![0.0; n];
    StructuredNlp::new(layout, vec![], vec![obj], lvar, uvar, x0, meta)
}

/// Enumerates active sets by increasing size; each candidate fixes the
/// active variables at their bound, solves the reduced stationarity system
/// and is accepted when primal feasible with nonnegative bound multipliers.
pub fn brute_force(q: &DMatrix<f64>, c: &[f64], l: &[f64], u: &[f64], max_active: usize) -> Option<Vec<f64>> {
    let n = c.len();
    // side[i]: 0 free, 1 lower, 2 upper
    fn rec(
        q: &DMatrix<f64>,
        c: &[f64],
        l: &[f64],
        u: &[f64],
        side: &mut Vec<u8>,
        from: usize,
        left: usize,
    ) -> Option<Vec<f64>> {
        if left == 0 {
            return check(q, c, l, u, side);
        }
        for i in from..c.len() {
            for s in [1, 2] {
                side[i] = s;
                if let Some(x) = rec(q, c, l, u, side, i + 1, left - 1) {
                    return Some(x);
                }
            }
            side[i] = 0;
        }
        None
    }
    fn check(q: &DMatrix<f64>, c: &[f64], l: &[f64], u: &[f64], side: &[u8]) -> Option<Vec<f64>> {
        let n = c.len();
        let mut x = vec![0.0; n];
        for i in 0..n {
            match side[i] {
                1 => x[i] = l[i],
                2 => x[i] = u[i],
                _ => {}
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| side[i] == 0).collect();
        if !free.is_empty() {
            let qf = DMatrix::from_fn(free.len(), free.len(), |a, b| q[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                -c[i] - (0..n).filter(|&j| side[j] != 0).map(|j| q[(i, j)] * x[j]).sum::<f64>()
            });
            let xf = qf.cholesky()?.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                if xf[a] < l[i] - 1e-12 || xf[a] > u[i] + 1e-12 {
                    return None;
                }
                x[i] = xf[a];
            }
        }
        for i in 0..n {
            let g = c[i] + (0..n).map(|j| q[(i, j)] * x[j]).sum::<f64>();
            match side[i] {
                1 if g < -1e-12 => return None,
                2 if g > 1e-12 => return None,
                _ => {}
            }
        }
        Some(x)
    }
    let mut side = vec![0u8; n];
    (0..=max_active.min(n)).find_map(|k| rec(q, c, l, u, &mut side, 0, k))
}

/// Random strictly convex box QP whose solution has at most three active
/// bounds, each with a multiplier in [0.5, 2].
pub fn random_qp(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=20usize);
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
    let l: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..-0.5)).collect();
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut x: Vec<f64> = (0..n).map(|i| rng.random_range(l[i] + 0.1..u[i] - 0.1)).collect();
    let mut z = vec![0.0; n];
    for _ in 0..rng.random_range(0..=3usize) {
        let i = rng.random_range(0..n);
        let m = rng.random_range(0.5..2.0);
        if rng.random_range(0.0..1.0) < 0.5 {
            x[i] = l[i];
            z[i] = m;
        } else {
            x[i] = u[i];
            z[i] = -m;
        }
    }
    let qx = &q * DVector::from_vec(x);
    let c: Vec<f64> = (0..n).map(|i| z[i] - qx[i]).collect();
    (q, c, l, u)
}


/// Uniform inside finite boxes; `[l, l + 1]` or `[u - 1, u]` for half
/// boxes; `[0.5, 1.5]` for free slots.
pub fn random_point(nlp: &StructuredNlp, rng: &mut ChaCha8Rng) -> Vec<f64> {
    nlp.lvar
        .iter()
        .zip(&nlp.uvar)
        .map(|(&l, &u)| match (l.is_finite(), u.is_finite()) {
            (true, true) if l == u => l,
            (true, true) => rng.random_range(l..u),
            (true, false) => rng.random_range(l..l + 1.0),
            (false, true) => rng.random_range(u - 1.0..u),
            (false, false) => rng.random_range(0.5..1.5),
        })
        .collect()
}


/// `|L| |D| |L|ᵀ`, the scale of the rounding error in `L D Lᵀ`.
pub fn abs_product(f: &octrans::sparse::LdlFactor) -> Vec<Vec<f64>> {
    let n = f.n;
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        l[j][j] = 1.0;
        for p in f.lp[j]..f.lp[j + 1] {
            l[f.li[p]][j] = f.lx[p].abs();
        }
    }
    let mut dm = vec![vec![0.0; n]; n];
    for k in 0..n {
        dm[k][k] = f.d[k].abs();
        if f.d_off[k] != 0.0 {
            dm[k][k + 1] = f.d_off[k].abs();
            dm[k + 1][k] = f.d_off[k].abs();
        }
    }
    let ld: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| l[i][k] * dm[k][j]).sum()).collect()).collect();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| ld[i][k] * l[j][k]).sum()).collect()).collect()
}
