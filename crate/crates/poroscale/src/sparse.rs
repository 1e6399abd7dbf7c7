//! Sparse matrices and the direct solvers behind every linear solve.
//!
//! The SPD path is an LDL^T factorization (up-looking, elimination-tree
//! based) with a nested-dissection fill-reducing ordering computed by
//! recursive BFS bisection. Saddle-point and nonsymmetric macro systems are
//! handled elsewhere (Uzawa on the pressure Schur complement, banded LU).

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            y[r] = s;
        }
    }

    /// y += A^T x
    pub fn mul_transpose_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                y[*c] += v * x[r];
            }
        }
    }

    /// Maximum absolute asymmetry |a_ij - a_ji| (square matrices).
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let vt = self.get(*c, r);
                worst = worst.max((v - vt).abs());
            }
        }
        worst
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Half bandwidth max |i - j| over the nonzero pattern.
    pub fn bandwidth(&self) -> usize {
        let mut b = 0usize;
        for r in 0..self.n_rows {
            let (cols, _) = self.row(r);
            for &c in cols {
                b = b.max(r.abs_diff(c));
            }
        }
        b
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                d[r][*c] = *v;
            }
        }
        d
    }
}

fn adjacency(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let n = a.n_rows;
    let mut adj = vec![Vec::new(); n];
    for r in 0..n {
        let (cols, _) = a.row(r);
        for &c in cols {
            if c != r {
                adj[r].push(c);
            }
        }
    }
    adj
}

/// Fill-reducing ordering by recursive BFS bisection (a light-weight nested
/// dissection). Returns `perm` with `perm[new] = old`.
pub fn nested_dissection_order(a: &CsrMatrix) -> Vec<usize> {
    let adj = adjacency(a);
    let n = adj.len();
    let mut perm = Vec::with_capacity(n);
    let all: Vec<usize> = (0..n).collect();
    let mut level = vec![usize::MAX; n];
    nd_recurse(&adj, all, &mut perm, &mut level);
    debug_assert_eq!(perm.len(), n);
    perm
}

fn nd_recurse(adj: &[Vec<usize>], nodes: Vec<usize>, perm: &mut Vec<usize>, level: &mut [usize]) {
    if nodes.len() <= 48 {
        perm.extend_from_slice(&nodes);
        return;
    }
    let in_set: std::collections::HashSet<usize> = nodes.iter().copied().collect();
    // Two BFS sweeps to get a pseudo-peripheral start node.
    let start = bfs_far(adj, &in_set, nodes[0], level);
    let start = bfs_far(adj, &in_set, start, level);
    let levels = bfs_levels(adj, &in_set, start, level);
    let reached: usize = levels.iter().map(|l| l.len()).sum();
    if reached < nodes.len() {
        // Disconnected: order the reached component, recurse on the rest.
        let comp: Vec<usize> = levels.into_iter().flatten().collect();
        let comp_set: std::collections::HashSet<usize> = comp.iter().copied().collect();
        let rest: Vec<usize> = nodes.iter().copied().filter(|v| !comp_set.contains(v)).collect();
        nd_recurse(adj, comp, perm, level);
        nd_recurse(adj, rest, perm, level);
        return;
    }
    if levels.len() < 3 {
        perm.extend_from_slice(&nodes);
        return;
    }
    // Separator: the level whose cumulative count crosses half.
    let mut cum = 0usize;
    let mut sep = levels.len() / 2;
    for (k, l) in levels.iter().enumerate() {
        cum += l.len();
        if cum * 2 >= nodes.len() {
            sep = k.clamp(1, levels.len() - 2);
            break;
        }
    }
    let mut part_a = Vec::new();
    let mut part_b = Vec::new();
    let mut sep_nodes = Vec::new();
    for (k, l) in levels.into_iter().enumerate() {
        if k < sep {
            part_a.extend(l);
        } else if k == sep {
            sep_nodes.extend(l);
        } else {
            part_b.extend(l);
        }
    }
    nd_recurse(adj, part_a, perm, level);
    nd_recurse(adj, part_b, perm, level);
    perm.extend_from_slice(&sep_nodes);
}

fn bfs_far(
    adj: &[Vec<usize>],
    in_set: &std::collections::HashSet<usize>,
    start: usize,
    level: &mut [usize],
) -> usize {
    let levels = bfs_levels(adj, in_set, start, level);
    *levels.last().and_then(|l| l.first()).unwrap_or(&start)
}

fn bfs_levels(
    adj: &[Vec<usize>],
    in_set: &std::collections::HashSet<usize>,
    start: usize,
    level: &mut [usize],
) -> Vec<Vec<usize>> {
    for &v in in_set {
        level[v] = usize::MAX;
    }
    let mut levels = vec![vec![start]];
    level[start] = 0;
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &w in &adj[v] {
                if in_set.contains(&w) && level[w] == usize::MAX {
                    level[w] = levels.len();
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        levels.push(next);
    }
    levels
}

/// Geometric nested dissection: recursive coordinate bisection with a thin
/// vertex separator (the boundary layer of one half against the other).
/// Far better fill than the graph-only ordering when dof coordinates exist,
/// which is the case for all assembled systems.
pub fn geometric_nd_order(a: &CsrMatrix, coords: &[[f64; 2]]) -> Vec<usize> {
    debug_assert_eq!(coords.len(), a.n_rows);
    let adj = adjacency(a);
    let mut perm = Vec::with_capacity(a.n_rows);
    let all: Vec<usize> = (0..a.n_rows).collect();
    rcb_recurse(&adj, coords, all, &mut perm);
    debug_assert_eq!(perm.len(), a.n_rows);
    perm
}

fn rcb_recurse(adj: &[Vec<usize>], coords: &[[f64; 2]], mut nodes: Vec<usize>, perm: &mut Vec<usize>) {
    if nodes.len() <= 48 {
        perm.extend_from_slice(&nodes);
        return;
    }
    // split along the longer bounding-box axis at the median
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &v in &nodes {
        for d in 0..2 {
            lo[d] = lo[d].min(coords[v][d]);
            hi[d] = hi[d].max(coords[v][d]);
        }
    }
    let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
    let mid = nodes.len() / 2;
    nodes.sort_unstable_by(|&x, &y| {
        coords[x][axis]
            .partial_cmp(&coords[y][axis])
            .unwrap()
            .then(x.cmp(&y))
    });
    let side_a: std::collections::HashSet<usize> = nodes[..mid].iter().copied().collect();
    let in_set: std::collections::HashSet<usize> = nodes.iter().copied().collect();
    let mut part_a = Vec::with_capacity(mid);
    let mut part_b = Vec::new();
    let mut sep = Vec::new();
    for &v in &nodes {
        if side_a.contains(&v) {
            part_a.push(v);
        } else if adj[v].iter().any(|w| side_a.contains(w) && in_set.contains(w)) {
            sep.push(v);
        } else {
            part_b.push(v);
        }
    }
    if part_a.is_empty() || part_b.is_empty() {
        perm.extend_from_slice(&nodes);
        return;
    }
    rcb_recurse(adj, coords, part_a, perm);
    rcb_recurse(adj, coords, part_b, perm);
    perm.extend_from_slice(&sep);
}

/// Sparse LDL^T factorization of a symmetric matrix, preceded by a
/// nested-dissection permutation. Intended for SPD systems; a zero pivot is
/// reported as an error.
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>, // perm[new] = old
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl LdlFactor {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let perm = nested_dissection_order(a);
        Self::with_order(a, perm)
    }

    /// Factor with dof coordinates available (geometric nested dissection).
    pub fn new_geometric(a: &CsrMatrix, coords: &[[f64; 2]]) -> Result<Self> {
        let perm = geometric_nd_order(a, coords);
        Self::with_order(a, perm)
    }

    pub fn with_order(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::Solver("LDL^T requires a square matrix".into()));
        }
        let n = a.n_rows;
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // Upper triangle of P A P^T in CSC (column = new index).
        let mut tri: Vec<(usize, usize, f64)> = Vec::with_capacity(a.nnz() / 2 + n);
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let (ni, nj) = (iperm[r], iperm[*c]);
                if ni <= nj {
                    tri.push((nj, ni, *v)); // (column, row, value)
                }
            }
        }
        tri.sort_unstable_by_key(|&(c, r, _)| (c, r));
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(tri.len());
        let mut ax = Vec::with_capacity(tri.len());
        for &(c, r, v) in &tri {
            ai.push(r);
            ax.push(v);
            ap[c + 1] += 1;
        }
        for c in 0..n {
            ap[c + 1] += ap[c];
        }

        // Symbolic: elimination tree and column counts.
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in ap[k]..ap[k + 1] {
                let mut i = ai[p];
                while i < k && flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }
        let nnz_l = lp[n];
        let mut li = vec![0usize; nnz_l];
        let mut lx = vec![0.0f64; nnz_l];
        let mut d = vec![0.0f64; n];

        // Numeric (up-looking, row k of L per step).
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        let mut lnz_used = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            y[k] = 0.0;
            for p in ap[k]..ap[k + 1] {
                let i0 = ai[p];
                if i0 > k {
                    continue;
                }
                y[i0] += ax[p];
                let mut len = 0usize;
                let mut i = i0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            for s in top..n {
                let i = pattern[s];
                let yi = y[i];
                y[i] = 0.0;
                let p2 = lp[i] + lnz_used[i];
                for p in lp[i]..p2 {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[p2] = k;
                lx[p2] = l_ki;
                lnz_used[i] += 1;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(Error::Solver(format!(
                    "zero pivot in LDL^T at eliminated column {k} of {n}"
                )));
            }
        }

        Ok(LdlFactor {
            n,
            perm,
            lp,
            li,
            lx,
            d,
        })
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; n];
        for new in 0..n {
            x[new] = b[self.perm[new]];
        }
        // L z = b
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        // L^T y = z
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[j] = s;
        }
        let mut out = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l_nnz(&self) -> usize {
        self.lx.len()
    }
}

/// Direct solve with one round of iterative refinement and a residual
/// contract check.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
    let factor = LdlFactor::new(a)?;
    solve_spd_with(&factor, a, b, tol)
}

/// As [`solve_spd`] but reusing an existing factorization.
pub fn solve_spd_with(
    factor: &LdlFactor,
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut x = factor.solve(b);
    let norm_b = norm2(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; b.len()];
    for _ in 0..2 {
        a.mul_vec(&x, &mut r);
        for i in 0..r.len() {
            r[i] = b[i] - r[i];
        }
        let rel = norm2(&r) / norm_b;
        if rel <= tol {
            return Ok((x, rel));
        }
        let dx = factor.solve(&r);
        for i in 0..x.len() {
            x[i] += dx[i];
        }
    }
    a.mul_vec(&x, &mut r);
    for i in 0..r.len() {
        r[i] = b[i] - r[i];
    }
    let rel = norm2(&r) / norm_b;
    if rel <= tol {
        Ok((x, rel))
    } else {
        Err(Error::SolverTolerance {
            tol,
            achieved: rel,
            iterations: 2,
        })
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Banded LU with partial pivoting for the macro-scale systems (structured
/// meshes, moderate bandwidth, possibly nonsymmetric).
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Band storage, column-major: entry (i, j) at `ab[j * ldab + kv + i - j]`
    /// with `kv = kl + ku`.
    ab: Vec<f64>,
    ldab: usize,
    ipiv: Vec<usize>,
}

impl BandedLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::Solver("banded LU requires a square matrix".into()));
        }
        let n = a.n_rows;
        let band = a.bandwidth();
        let (kl, ku) = (band, band);
        if n > 200 && band > n / 2 {
            return Err(Error::Solver(format!(
                "bandwidth {band} too large for banded LU on n = {n}"
            )));
        }
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0f64; ldab * n];
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (c, v) in cols.iter().zip(vals) {
                ab[c * ldab + kv + r - c] = *v;
            }
        }
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // pivot search in column j, rows j..=j+km
            let mut jp = 0usize;
            let mut best = ab[j * ldab + kv].abs();
            for i in 1..=km {
                let v = ab[j * ldab + kv + i].abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            if best == 0.0 {
                return Err(Error::Solver(format!("banded LU: zero pivot at column {j}")));
            }
            let jmax = (j + kv).min(n - 1);
            if jp != 0 {
                for c in j..=jmax {
                    let a1 = c * ldab + kv + j - c;
                    let a2 = c * ldab + kv + j + jp - c;
                    ab.swap(a1, a2);
                }
            }
            let piv = ab[j * ldab + kv];
            for i in 1..=km {
                ab[j * ldab + kv + i] /= piv;
            }
            for c in j + 1..=jmax {
                let f = ab[c * ldab + kv + j - c];
                if f != 0.0 {
                    for i in 1..=km {
                        ab[c * ldab + kv + j + i - c] -= ab[j * ldab + kv + i] * f;
                    }
                }
            }
        }
        Ok(BandedLu {
            n,
            kl,
            ku,
            ab,
            ldab,
            ipiv,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, ku, kv, ldab) = (self.n, self.kl, self.ku, self.kl + self.ku, self.ldab);
        let mut x = b.to_vec();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let xj = x[j];
            for i in 1..=km {
                x[j + i] -= self.ab[j * ldab + kv + i] * xj;
            }
        }
        for j in (0..n).rev() {
            let lo = j.saturating_sub(kv);
            x[j] /= self.ab[j * ldab + kv];
            let xj = x[j];
            for r in lo..j {
                x[r] -= self.ab[j * ldab + (kv + r) - j] * xj;
            }
        }
        let _ = ku;
        x
    }
}

/// Banded solve with a residual check and one refinement pass.
pub fn solve_banded(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
    let lu = BandedLu::new(a)?;
    solve_banded_with(&lu, a, b, tol)
}

pub fn solve_banded_with(
    lu: &BandedLu,
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut x = lu.solve(b);
    let norm_b = norm2(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; b.len()];
    for _ in 0..2 {
        a.mul_vec(&x, &mut r);
        for i in 0..r.len() {
            r[i] = b[i] - r[i];
        }
        let rel = norm2(&r) / norm_b;
        if rel <= tol {
            return Ok((x, rel));
        }
        let dx = lu.solve(&r);
        for i in 0..x.len() {
            x[i] += dx[i];
        }
    }
    a.mul_vec(&x, &mut r);
    for i in 0..r.len() {
        r[i] = b[i] - r[i];
    }
    let rel = norm2(&r) / norm_b;
    if rel <= tol {
        Ok((x, rel))
    } else {
        Err(Error::SolverTolerance {
            tol,
            achieved: rel,
            iterations: 2,
        })
    }
}

/// Conjugate gradients on an abstract SPD operator; used on pressure Schur
/// complements where the operator is only available as matrix-vector
/// products. Optionally projects iterates onto the complement of a kernel
/// vector (weighted by `kernel_weight`).
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub fn cg_operator<F>(
    apply: F,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
    kernel: Option<(&[f64], &[f64])>,
    precond_diag: Option<&[f64]>,
) -> CgOutcome
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let project = |v: &mut [f64]| {
        if let Some((k, w)) = kernel {
            let num: f64 = v.iter().zip(k).zip(w).map(|((vi, ki), wi)| vi * ki * wi).sum();
            let den: f64 = k.iter().zip(w).map(|(ki, wi)| ki * ki * wi).sum();
            let c = num / den;
            for (vi, ki) in v.iter_mut().zip(k) {
                *vi -= c * ki;
            }
        }
    };
    let precondition = |r: &[f64], z: &mut [f64]| match precond_diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = r[i] / d[i];
            }
        }
        None => z.copy_from_slice(r),
    };
    let mut bp = b.to_vec();
    project(&mut bp);
    let norm_b = norm2(&bp).max(f64::MIN_POSITIVE);
    project(x);
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = bp[i] - r[i];
    }
    project(&mut r);
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    project(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rel = norm2(&r) / norm_b;
        if rel <= tol {
            return CgOutcome {
                iterations: it,
                relative_residual: rel,
            };
        }
        apply(&p, &mut ap);
        project(&mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        project(&mut r);
        precondition(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        iterations: max_iter,
        relative_residual: norm2(&r) / norm_b,
    }
}
