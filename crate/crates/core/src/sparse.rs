//! Symmetric sparse matrices and an up-looking LDLᵀ factorization with
//! 1×1 pivots in a fixed fill-reducing order.

use std::fmt::Write;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SparseError {
    #[error("factorization has {0} zero pivots; regularize and refactorize")]
    Singular(usize),
    #[error("fill-reducing ordering failed: {0}")]
    Ordering(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Lower triangle of a symmetric matrix in compressed-column form. Row
/// indices are strictly increasing inside each column and never above the
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSym {
    /// Builds the pattern of the given coordinates (either triangle; mirrored
    /// into the lower one, duplicates merged). Returns the matrix with zero
    /// values and, for every input coordinate, its position in `values`.
    pub fn from_pattern(n: usize, coords: impl IntoIterator<Item = (usize, usize)>) -> (SparseSym, Vec<usize>) {
        let coords: Vec<(usize, usize)> = coords.into_iter().map(|(i, j)| (i.max(j), i.min(j))).collect();
        let mut order: Vec<usize> = (0..coords.len()).collect();
        order.sort_unstable_by_key(|&e| (coords[e].1, coords[e].0));
        let mut colptr = vec![0; n + 1];
        let mut rowind = Vec::with_capacity(coords.len());
        let mut map = vec![0; coords.len()];
        let mut last = None;
        for e in order {
            let (i, j) = coords[e];
            assert!(i < n, "coordinate ({i}, {j}) outside a {n}x{n} matrix");
            if last != Some((i, j)) {
                rowind.push(i);
                colptr[j + 1] += 1;
                last = Some((i, j));
            }
            map[e] = rowind.len() - 1;
        }
        for j in 0..n {
            colptr[j + 1] += colptr[j];
        }
        let nnz = rowind.len();
        (SparseSym { n, colptr, rowind, values: vec![0.0; nnz] }, map)
    }

    /// Sums triplets into a new matrix.
    pub fn from_triplets(n: usize, rows: &[usize], cols: &[usize], vals: &[f64]) -> SparseSym {
        let (mut a, map) = SparseSym::from_pattern(n, rows.iter().copied().zip(cols.iter().copied()));
        for (&p, &v) in map.iter().zip(vals) {
            a.values[p] += v;
        }
        a
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = A x` using both triangles.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let (i, v) = (self.rowind[p], self.values[p]);
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
    }

    /// Infinity norm (max absolute row sum) of the full symmetric matrix.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let (i, v) = (self.rowind[p], self.values[p].abs());
                rows[i] += v;
                if i != j {
                    rows[j] += v;
                }
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowind[p];
                d[i][j] = self.values[p];
                d[j][i] = self.values[p];
            }
        }
        d
    }

    /// Matrix Market `coordinate real symmetric` text (lower triangle).
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        let _ = writeln!(s, "{} {} {}", self.n, self.n, self.nnz());
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let _ = writeln!(s, "{} {} {:e}", self.rowind[p] + 1, j + 1, self.values[p]);
            }
        }
        s
    }
}

/// Result of [`analyze`]: the ordering and the elimination structure.
///
/// Pivots are 1×1 or 2×2 blocks of consecutive permuted indices; a 2×2
/// block always holds a primal index followed by its paired dual index.
#[derive(Debug, Clone)]
pub struct Symbolic {
    pub n: usize,
    /// `perm[k]` is the original index eliminated at step `k`.
    pub perm: Vec<usize>,
    pub iperm: Vec<usize>,
    /// Block `b` covers permuted indices `bp[b]..bp[b + 1]`.
    pub bp: Vec<usize>,
    /// Elimination tree over blocks.
    pub parent: Vec<Option<usize>>,
    /// Column pointers of `L`.
    pub lp: Vec<usize>,
    block_of: Vec<usize>,
    /// Upper triangle of `C = PAPᵀ` by columns, diagonal included.
    cp: Vec<usize>,
    ci: Vec<usize>,
    /// Position in `C` of every entry of `A`.
    a_to_c: Vec<usize>,
    c_diag: Vec<usize>,
    a_nnz: usize,
}

impl Symbolic {
    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    pub fn blocks(&self) -> usize {
        self.bp.len() - 1
    }
}

/// Symbolic analysis with the given elimination order and 1×1 pivots.
pub fn analyze_with_order(a: &SparseSym, perm: Vec<usize>) -> Symbolic {
    let bp = (0..=a.n).collect();
    analyze_blocks(a, perm, bp)
}

/// Symbolic analysis with the given order and block boundaries (`bp[b]..bp[b + 1]`
/// in permuted indices, blocks of size 1 or 2).
fn analyze_blocks(a: &SparseSym, perm: Vec<usize>, bp: Vec<usize>) -> Symbolic {
    let n = a.n;
    let nb = bp.len() - 1;
    let mut iperm = vec![0; n];
    for (k, &i) in perm.iter().enumerate() {
        iperm[i] = k;
    }
    let mut block_of = vec![0; n];
    for b in 0..nb {
        for k in bp[b]..bp[b + 1] {
            block_of[k] = b;
        }
    }
    // permuted upper triangle, plus every diagonal
    let mut coords: Vec<(usize, usize)> = Vec::with_capacity(a.nnz() + n);
    for j in 0..n {
        for p in a.colptr[j]..a.colptr[j + 1] {
            let (pi, pj) = (iperm[a.rowind[p]], iperm[j]);
            coords.push((pi.min(pj), pi.max(pj)));
        }
    }
    coords.extend((0..n).map(|k| (k, k)));
    let mut order: Vec<usize> = (0..coords.len()).collect();
    order.sort_unstable_by_key(|&e| (coords[e].1, coords[e].0));
    let mut cp = vec![0; n + 1];
    let mut ci = Vec::with_capacity(coords.len());
    let mut pos = vec![0; coords.len()];
    let mut last = None;
    for e in order {
        let (i, j) = coords[e];
        if last != Some((i, j)) {
            ci.push(i);
            cp[j + 1] += 1;
            last = Some((i, j));
        }
        pos[e] = ci.len() - 1;
    }
    for j in 0..n {
        cp[j + 1] += cp[j];
    }
    let a_to_c = pos[..a.nnz()].to_vec();
    let c_diag = pos[a.nnz()..].to_vec();

    // block elimination tree and column counts
    let mut parent = vec![None; nb];
    let mut flag = vec![usize::MAX; nb];
    let mut lnz = vec![0usize; nb];
    for kb in 0..nb {
        flag[kb] = kb;
        let size = bp[kb + 1] - bp[kb];
        for k in bp[kb]..bp[kb + 1] {
            for p in cp[k]..cp[k + 1] {
                let mut b = block_of[ci[p]];
                while b < kb && flag[b] != kb {
                    if parent[b].is_none() {
                        parent[b] = Some(kb);
                    }
                    lnz[b] += size;
                    flag[b] = kb;
                    b = parent[b].unwrap_or(kb);
                }
            }
        }
    }
    let mut lp = vec![0; n + 1];
    for k in 0..n {
        lp[k + 1] = lp[k] + lnz[block_of[k]];
    }
    Symbolic { n, perm, iperm, bp, parent, lp, block_of, cp, ci, a_to_c, c_diag, a_nnz: a.nnz() }
}

/// Approximate-minimum-degree ordering followed by symbolic analysis.
pub fn analyze(a: &SparseSym) -> Result<Symbolic, SparseError> {
    analyze_paired(a, &[])
}

/// Like [`analyze`], but every `(primal, dual)` pair is kept together and
/// factorized as one 2×2 pivot. The ordering is computed on the graph with
/// each pair merged into a single node. Indices may appear in one pair only.
pub fn analyze_paired(a: &SparseSym, pairs: &[(usize, usize)]) -> Result<Symbolic, SparseError> {
    let n = a.n;
    // node of every index in the compressed graph
    let mut node = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(n - pairs.len().min(n));
    for &(p, d) in pairs {
        if p >= n || d >= n || p == d || node[p] != usize::MAX || node[d] != usize::MAX {
            return Err(SparseError::Ordering(format!("invalid pivot pair ({p}, {d})")));
        }
        node[p] = members.len();
        node[d] = members.len();
        members.push(vec![p, d]);
    }
    for i in 0..n {
        if node[i] == usize::MAX {
            node[i] = members.len();
            members.push(vec![i]);
        }
    }
    let nn = members.len();
    let compressed = if pairs.is_empty() {
        a.clone()
    } else {
        let mut coords = Vec::with_capacity(a.nnz());
        for j in 0..n {
            for p in a.colptr[j]..a.colptr[j + 1] {
                coords.push((node[a.rowind[p]], node[j]));
            }
        }
        coords.extend((0..nn).map(|k| (k, k)));
        SparseSym::from_pattern(nn, coords).0
    };
    let order = amd_order(&compressed)?;
    let mut perm = Vec::with_capacity(n);
    let mut bp = Vec::with_capacity(nn + 1);
    bp.push(0);
    for v in order {
        perm.extend_from_slice(&members[v]);
        bp.push(perm.len());
    }
    Ok(analyze_blocks(a, perm, bp))
}

fn amd_order(a: &SparseSym) -> Result<Vec<usize>, SparseError> {
    if a.n == 0 {
        return Ok(Vec::new());
    }
    // the amd crate underflows on patterns with fewer entries than columns;
    // a full diagonal does not change the ordering
    let mut colptr = Vec::with_capacity(a.n + 1);
    let mut rowind = Vec::with_capacity(a.rowind.len() + a.n);
    colptr.push(0);
    for j in 0..a.n {
        let col = &a.rowind[a.colptr[j]..a.colptr[j + 1]];
        let at = col.partition_point(|&i| i < j);
        rowind.extend_from_slice(&col[..at]);
        if col.get(at) != Some(&j) {
            rowind.push(j);
        }
        rowind.extend_from_slice(&col[at..]);
        colptr.push(rowind.len());
    }
    let (p, _, _) = amd::order::<usize>(a.n, &colptr, &rowind, &amd::Control::default())
        .map_err(|s| SparseError::Ordering(format!("{s:?}")))?;
    Ok(p)
}

/// Counts of positive, negative and zero pivots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone)]
pub struct LdlFactor {
    pub n: usize,
    pub perm: Vec<usize>,
    pub bp: Vec<usize>,
    pub lp: Vec<usize>,
    pub li: Vec<usize>,
    pub lx: Vec<f64>,
    /// Diagonal of `D`.
    pub d: Vec<f64>,
    /// `d_off[k]` couples permuted indices `k` and `k + 1` inside a 2×2 block.
    pub d_off: Vec<f64>,
    pub inertia: Inertia,
    /// Absolute pivot threshold: `rel_threshold * max|A + reg|`, or under
    /// [`PivotScale::Column`] the one applied at the last pivot examined.
    pub threshold: f64,
    pub pivot_scale: PivotScale,
    /// Regularization applied: `+delta_w` on the first `n_primal` original
    /// indices, `-delta_c` on the rest.
    pub n_primal: usize,
    pub delta_w: f64,
    pub delta_c: f64,
    // workspace
    cx: Vec<f64>,
    y: [Vec<f64>; 2],
    flag: Vec<usize>,
    pattern: Vec<usize>,
    lnz: Vec<usize>,
    tmp: Vec<f64>,
    colmax: Vec<f64>,
}

pub const DEFAULT_PIVOT_THRESHOLD: f64 = 1e-14;

/// What the relative zero-pivot threshold multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotScale {
    /// Largest entry of the whole regularized matrix.
    #[default]
    Global,
    /// Largest entry in the pivot's own column of the regularized matrix.
    Column,
}

/// Eigenvalues of the symmetric 2×2 matrix `[a b; b c]`, ascending.
fn eig2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let m = 0.5 * (a + c);
    let r = (0.5 * (a - c)).hypot(b);
    // the smaller-magnitude root from the product keeps its accuracy
    let big = if m >= 0.0 { m + r } else { m - r };
    let det = a * c - b * b;
    let small = if big != 0.0 { det / big } else { 0.0 };
    if big >= small {
        (small, big)
    } else {
        (big, small)
    }
}

impl LdlFactor {
    pub fn new(sym: &Symbolic) -> Self {
        let n = sym.n;
        let nl = sym.nnz_l();
        LdlFactor {
            n,
            perm: sym.perm.clone(),
            bp: sym.bp.clone(),
            lp: sym.lp.clone(),
            li: vec![0; nl],
            lx: vec![0.0; nl],
            d: vec![0.0; n],
            d_off: vec![0.0; n],
            inertia: Inertia::default(),
            threshold: 0.0,
            pivot_scale: PivotScale::Global,
            n_primal: n,
            delta_w: 0.0,
            delta_c: 0.0,
            cx: vec![0.0; sym.ci.len()],
            y: [vec![0.0; n], vec![0.0; n]],
            flag: vec![0; sym.blocks()],
            pattern: vec![0; sym.blocks()],
            lnz: vec![0; n],
            tmp: vec![0.0; n],
            colmax: vec![0.0; n],
        }
    }

    /// Numeric factorization of `P (A + R) Pᵀ = L D Lᵀ` into this factor's
    /// buffers. Stops at the first pivot block with an eigenvalue of
    /// magnitude `<= threshold`; all remaining pivots are then counted as
    /// zero.
    pub fn refactor(
        &mut self,
        a: &SparseSym,
        sym: &Symbolic,
        n_primal: usize,
        delta_w: f64,
        delta_c: f64,
        rel_threshold: f64,
    ) {
        assert_eq!(a.nnz(), sym.a_nnz, "matrix pattern does not match the analysis");
        let n = self.n;
        self.n_primal = n_primal;
        self.delta_w = delta_w;
        self.delta_c = delta_c;
        self.cx.fill(0.0);
        for (p, &v) in a.values.iter().enumerate() {
            self.cx[sym.a_to_c[p]] += v;
        }
        for (k, &q) in sym.c_diag.iter().enumerate() {
            self.cx[q] += if sym.perm[k] < n_primal { delta_w } else { -delta_c };
        }
        let max_abs = self.cx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.threshold = rel_threshold * max_abs;
        let (cp, ci) = (&sym.cp, &sym.ci);
        if self.pivot_scale == PivotScale::Column {
            self.colmax.fill(0.0);
            for k in 0..n {
                for p in cp[k]..cp[k + 1] {
                    let v = self.cx[p].abs();
                    self.colmax[k] = self.colmax[k].max(v);
                    self.colmax[ci[p]] = self.colmax[ci[p]].max(v);
                }
            }
        }
        self.lnz.fill(0);
        self.d_off.fill(0.0);
        let nb = sym.blocks();
        let mut inertia = Inertia::default();
        for kb in 0..nb {
            let (k0, k1) = (sym.bp[kb], sym.bp[kb + 1]);
            let size = k1 - k0;
            // scatter the block's columns of C; reach in the block tree
            let mut top = nb;
            self.flag[kb] = kb;
            for (s, k) in (k0..k1).enumerate() {
                for p in cp[k]..cp[k + 1] {
                    let i = ci[p];
                    self.y[s][i] += self.cx[p];
                    let mut b = sym.block_of[i];
                    let mut len = 0;
                    while b < kb && self.flag[b] != kb {
                        self.pattern[len] = b;
                        len += 1;
                        self.flag[b] = kb;
                        b = sym.parent[b].unwrap_or(kb);
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        self.pattern[top] = self.pattern[len];
                    }
                }
            }
            // pivot block, initialized from A and cleared from y
            let mut dk = [[0.0f64; 2]; 2];
            for s in 0..size {
                for t in 0..size {
                    if t <= s {
                        dk[t][s] = self.y[s][k0 + t];
                        dk[s][t] = dk[t][s];
                    }
                }
            }
            for s in 0..size {
                for t in 0..size {
                    self.y[s][k0 + t] = 0.0;
                }
            }
            for &jb in &self.pattern[top..nb] {
                let (j0, j1) = (sym.bp[jb], sym.bp[jb + 1]);
                // z = y restricted to block jb, final at this point
                let mut z = [[0.0f64; 2]; 2];
                for s in 0..size {
                    for (t, j) in (j0..j1).enumerate() {
                        z[s][t] = self.y[s][j];
                        self.y[s][j] = 0.0;
                    }
                }
                for (t, j) in (j0..j1).enumerate() {
                    let (start, end) = (self.lp[j], self.lp[j] + self.lnz[j]);
                    for p in start..end {
                        let i = self.li[p];
                        for s in 0..size {
                            self.y[s][i] -= self.lx[p] * z[s][t];
                        }
                    }
                }
                // w = D_j⁻¹ z, appended to L as rows k0..k1
                for s in 0..size {
                    let w = if j1 - j0 == 1 {
                        [z[s][0] / self.d[j0], 0.0]
                    } else {
                        let (a, b, c) = (self.d[j0], self.d_off[j0], self.d[j0 + 1]);
                        let det = a * c - b * b;
                        [(c * z[s][0] - b * z[s][1]) / det, (a * z[s][1] - b * z[s][0]) / det]
                    };
                    for (t, j) in (j0..j1).enumerate() {
                        let p = self.lp[j] + self.lnz[j];
                        self.li[p] = k0 + s;
                        self.lx[p] = w[t];
                        self.lnz[j] += 1;
                    }
                    for s2 in 0..size {
                        for t in 0..j1 - j0 {
                            dk[s2][s] -= z[s2][t] * w[t];
                        }
                    }
                }
            }
            let thr = match self.pivot_scale {
                PivotScale::Global => self.threshold,
                PivotScale::Column => rel_threshold * (k0..k1).map(|k| self.colmax[k]).fold(0.0, f64::max),
            };
            self.threshold = thr;
            let eigs = if size == 1 {
                self.d[k0] = dk[0][0];
                [dk[0][0], dk[0][0]]
            } else {
                let b = 0.5 * (dk[0][1] + dk[1][0]);
                self.d[k0] = dk[0][0];
                self.d[k0 + 1] = dk[1][1];
                self.d_off[k0] = b;
                let (l0, l1) = eig2(dk[0][0], b, dk[1][1]);
                [l0, l1]
            };
            // a 2×2 block is degenerate when tiny or relatively singular;
            // NaN pivots count as zero too
            let degenerate = if size == 1 {
                !(eigs[0].abs() > thr)
            } else {
                let (a, b, c) = (self.d[k0], self.d_off[k0], self.d[k0 + 1]);
                let det = a * c - b * b;
                !(a.abs().max(b.abs()).max(c.abs()) > thr) || !(det.abs() > rel_threshold * (a * c).abs().max(b * b))
            };
            if degenerate {
                for s in 0..2 {
                    self.y[s].fill(0.0);
                }
                inertia.zero = n - inertia.positive - inertia.negative;
                self.inertia = inertia;
                return;
            }
            for e in &eigs[..size] {
                if *e > 0.0 {
                    inertia.positive += 1;
                } else {
                    inertia.negative += 1;
                }
            }
        }
        self.inertia = inertia;
    }

    pub fn is_singular(&self) -> bool {
        self.inertia.zero > 0
    }

    /// Solves `(A + R) x = b` in place.
    pub fn solve_in_place(&mut self, x: &mut [f64]) -> Result<(), SparseError> {
        if self.is_singular() {
            return Err(SparseError::Singular(self.inertia.zero));
        }
        if x.len() != self.n {
            return Err(SparseError::Dimension { expected: self.n, got: x.len() });
        }
        let w = &mut self.tmp;
        for k in 0..self.n {
            w[k] = x[self.perm[k]];
        }
        for j in 0..self.n {
            let wj = w[j];
            for p in self.lp[j]..self.lp[j + 1] {
                w[self.li[p]] -= self.lx[p] * wj;
            }
        }
        for b in 0..self.bp.len() - 1 {
            let k = self.bp[b];
            if self.bp[b + 1] - k == 1 {
                w[k] /= self.d[k];
            } else {
                let (a, o, c) = (self.d[k], self.d_off[k], self.d[k + 1]);
                let det = a * c - o * o;
                let (u, v) = (w[k], w[k + 1]);
                w[k] = (c * u - o * v) / det;
                w[k + 1] = (a * v - o * u) / det;
            }
        }
        for j in (0..self.n).rev() {
            let mut s = w[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * w[self.li[p]];
            }
            w[j] = s;
        }
        for k in 0..self.n {
            x[self.perm[k]] = w[k];
        }
        Ok(())
    }

    pub fn solve(&mut self, b: &[f64]) -> Result<Vec<f64>, SparseError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    /// `y = (A + R) x`.
    pub fn apply_regularized(&self, a: &SparseSym, x: &[f64], y: &mut [f64]) {
        a.mul_vec(x, y);
        for i in 0..self.n {
            y[i] += if i < self.n_primal { self.delta_w } else { -self.delta_c } * x[i];
        }
    }

    /// Dense reconstruction `L D Lᵀ` of the permuted matrix (tests only).
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut l = vec![vec![0.0; n]; n];
        for j in 0..n {
            l[j][j] = 1.0;
            for p in self.lp[j]..self.lp[j + 1] {
                l[self.li[p]][j] = self.lx[p];
            }
        }
        let mut dm = vec![vec![0.0; n]; n];
        for k in 0..n {
            dm[k][k] = self.d[k];
            if self.d_off[k] != 0.0 {
                dm[k][k + 1] = self.d_off[k];
                dm[k + 1][k] = self.d_off[k];
            }
        }
        let mut ld = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                ld[i][j] = (0..n).map(|k| l[i][k] * dm[k][j]).sum();
            }
        }
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                out[i][j] = (0..n).map(|k| ld[i][k] * l[j][k]).sum();
            }
        }
        out
    }
}

/// Factorizes `A + R` in the order of `sym`.
pub fn factorize(a: &SparseSym, sym: &Symbolic, n_primal: usize, delta_w: f64, delta_c: f64) -> LdlFactor {
    let mut f = LdlFactor::new(sym);
    f.refactor(a, sym, n_primal, delta_w, delta_c, DEFAULT_PIVOT_THRESHOLD);
    f
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineReport {
    pub rounds: usize,
    /// Final `‖b - (A + R) x‖∞`.
    pub residual: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Iterative refinement of `x` for the system factorized in `f`. Stops when
/// `‖r‖∞ <= 1e-12 (‖A‖∞ ‖x‖∞ + ‖b‖∞)` or after `max_rounds` corrections.
/// `r` and `dx` are scratch of length `n`.
pub fn refine_with(
    a: &SparseSym,
    f: &mut LdlFactor,
    b: &[f64],
    x: &mut [f64],
    max_rounds: usize,
    r: &mut [f64],
) -> Result<RefineReport, SparseError> {
    let a_norm = a.norm_inf() + f.delta_w.max(f.delta_c);
    let b_norm = inf_norm(b);
    let mut rounds = 0;
    loop {
        f.apply_regularized(a, x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let res = inf_norm(r);
        if res <= 1e-12 * (a_norm * inf_norm(x) + b_norm) || rounds >= max_rounds {
            return Ok(RefineReport { rounds, residual: res });
        }
        f.solve_in_place(r)?;
        for (xi, di) in x.iter_mut().zip(r.iter()) {
            *xi += di;
        }
        rounds += 1;
    }
}

/// Solves `(A + R') x = b`, where `R'` has `delta_w` on the primal block and
/// `-delta_c` on the dual block, by restarted GMRES preconditioned on the
/// right with `f` (a factorization of a differently regularized matrix).
/// Rows are weighted by `1 / (|b| + |A + R'| |x|)` at the starting `x`, so
/// the minimized residual is a componentwise backward error. Stops once the
/// weighted residual is at most `rtol` or after `max_iter` Krylov steps. On
/// return `x` holds the iterate with the smallest weighted residual.
#[allow(clippy::too_many_arguments)]
pub fn gmres_refine(
    a: &SparseSym,
    f: &mut LdlFactor,
    delta_w: f64,
    delta_c: f64,
    b: &[f64],
    x: &mut [f64],
    max_iter: usize,
    restart: usize,
    rtol: f64,
) -> Result<RefineReport, SparseError> {
    let n = a.n;
    let np = f.n_primal;
    let shift = |i: usize| if i < np { delta_w } else { -delta_c };
    let apply = |v: &[f64], out: &mut [f64]| {
        a.mul_vec(v, out);
        for i in 0..n {
            out[i] += shift(i) * v[i];
        }
    };
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();

    // |A + R'| |x| + |b|
    let mut wt = vec![0.0; n];
    for j in 0..n {
        for p in a.colptr[j]..a.colptr[j + 1] {
            let (i, v) = (a.rowind[p], a.values[p].abs());
            wt[i] += v * x[j].abs();
            if i != j {
                wt[j] += v * x[i].abs();
            }
        }
    }
    for i in 0..n {
        wt[i] += shift(i).abs() * x[i].abs() + b[i].abs();
        wt[i] = if wt[i] > 0.0 { 1.0 / wt[i] } else { 1.0 };
    }

    let m = restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut best_x = x.to_vec();
    let mut basis: Vec<Vec<f64>> = (0..=m).map(|_| vec![0.0; n]).collect();
    let mut h = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn, mut g) = (vec![0.0; m], vec![0.0; m], vec![0.0; m + 1]);
    let mut steps = 0;
    let (mut best, mut best_raw) = (f64::INFINITY, f64::INFINITY);
    loop {
        apply(x, &mut r);
        let mut omega = 0.0f64;
        let mut raw = 0.0f64;
        for i in 0..n {
            raw = raw.max((b[i] - r[i]).abs());
            r[i] = wt[i] * (b[i] - r[i]);
            omega = omega.max(r[i].abs());
        }
        if omega < best {
            best = omega;
            best_raw = raw;
            best_x.copy_from_slice(x);
        }
        let beta = dot(&r, &r).sqrt();
        if omega <= rtol || steps >= max_iter || !beta.is_finite() || beta == 0.0 {
            break;
        }
        for i in 0..n {
            basis[0][i] = r[i] / beta;
        }
        g.fill(0.0);
        g[0] = beta;
        let mut k = 0;
        while k < m && steps < max_iter {
            z.copy_from_slice(&basis[k]);
            f.solve_in_place(&mut z)?;
            apply(&z, &mut w);
            for i in 0..n {
                w[i] *= wt[i];
            }
            for j in 0..=k {
                let hj = dot(&w, &basis[j]);
                h[j][k] = hj;
                for i in 0..n {
                    w[i] -= hj * basis[j][i];
                }
            }
            let norm = dot(&w, &w).sqrt();
            h[k + 1][k] = norm;
            if norm > 0.0 {
                for i in 0..n {
                    basis[k + 1][i] = w[i] / norm;
                }
            }
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let rho = h[k][k].hypot(h[k + 1][k]);
            (cs[k], sn[k]) = if rho > 0.0 { (h[k][k] / rho, h[k + 1][k] / rho) } else { (1.0, 0.0) };
            h[k][k] = rho;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k += 1;
            steps += 1;
            if g[k].abs() <= rtol || norm == 0.0 {
                break;
            }
        }
        // x += M⁻¹ V H⁻¹ g
        let mut y = vec![0.0; k];
        for j in (0..k).rev() {
            let mut t = g[j];
            for l in j + 1..k {
                t -= h[j][l] * y[l];
            }
            y[j] = if h[j][j] != 0.0 { t / h[j][j] } else { 0.0 };
        }
        w.fill(0.0);
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                w[i] += yj * basis[j][i];
            }
        }
        f.solve_in_place(&mut w)?;
        for i in 0..n {
            x[i] += w[i];
        }
    }
    x.copy_from_slice(&best_x);
    Ok(RefineReport { rounds: steps, residual: best_raw })
}

pub fn refine(a: &SparseSym, f: &mut LdlFactor, b: &[f64], x: &[f64], max_rounds: usize) -> Result<(Vec<f64>, RefineReport), SparseError> {
    let mut x = x.to_vec();
    let mut r = vec![0.0; a.n];
    let rep = refine_with(a, f, b, &mut x, max_rounds, &mut r)?;
    Ok((x, rep))
}
