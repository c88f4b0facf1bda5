//! Sparse symmetric LDLᵀ without pivoting, for quasi-definite KKT matrices.
//!
//! The symbolic phase (ordering, elimination tree, column counts) is done
//! once per sparsity pattern; numeric factorizations reuse it. The diagonal
//! factor's sign counts give the inertia, which the interior-point method
//! uses to decide whether the Hessian block needs regularization.

use std::collections::VecDeque;

const NONE: usize = usize::MAX;

/// Result of a numeric factorization attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Symmetric sparse matrix given by its lower-triangle coordinates
/// (duplicates are summed).
#[derive(Clone, Debug)]
pub struct SymmetricPattern {
    pub dim: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Symbolic factorization: permuted upper-triangular CSC layout plus the
/// map from the caller's coordinate list into it.
#[derive(Clone, Debug)]
pub struct LdlSymbolic {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    ap: Vec<usize>,
    ai: Vec<usize>,
    slot: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LdlFactor {
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    pub inertia: Inertia,
}

impl LdlSymbolic {
    /// Analyse a pattern under the given elimination order (`perm[new] = old`).
    pub fn new(pattern: &SymmetricPattern, perm: Vec<usize>) -> Self {
        let n = pattern.dim;
        assert_eq!(perm.len(), n);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        // entries in permuted upper triangle, column-major; diagonal always present
        let mut coords: Vec<(usize, usize, usize)> = pattern
            .rows
            .iter()
            .zip(&pattern.cols)
            .enumerate()
            .map(|(k, (&r, &c))| {
                let (a, b) = (iperm[r], iperm[c]);
                (a.max(b), a.min(b), k)
            })
            .collect();
        coords.extend((0..n).map(|i| (i, i, NONE)));
        coords.sort_unstable();
        let mut ap = vec![0; n + 1];
        let mut ai = Vec::with_capacity(coords.len());
        let mut slot = vec![0; pattern.rows.len()];
        let mut last = (NONE, NONE);
        for &(col, row, k) in &coords {
            if (col, row) != last {
                ai.push(row);
                ap[col + 1] += 1;
                last = (col, row);
            }
            if k != NONE {
                slot[k] = ai.len() - 1;
            }
        }
        for j in 0..n {
            ap[j + 1] += ap[j];
        }

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for &row in &ai[ap[j]..ap[j + 1]] {
                let mut i = row;
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        Self {
            n,
            perm,
            ap,
            ai,
            slot,
            etree,
            lp,
        }
    }

    /// Nonzeros in the strictly lower factor.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Numeric factorization of the matrix whose coordinate values are `vals`
    /// (same order as the pattern). Always completes; zero pivots are
    /// reported through the inertia and replaced by a huge value so that a
    /// caller who ignores the inertia still gets finite numbers.
    pub fn factor(&self, vals: &[f64]) -> LdlFactor {
        let n = self.n;
        let mut ax = vec![0.0; self.ai.len()];
        for (k, &v) in vals.iter().enumerate() {
            ax[self.slot[k]] += v;
        }
        let nnz = self.factor_nnz();
        let mut li = vec![0; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next = self.lp[..n].to_vec();
        let mut y = vec![0.0; n];
        let mut mark = vec![false; n];
        let mut pattern = Vec::with_capacity(n);
        let mut stack = Vec::with_capacity(n);
        let mut inertia = Inertia {
            positive: 0,
            negative: 0,
            zero: 0,
        };
        let scale = ax.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);

        for k in 0..n {
            pattern.clear();
            for p in self.ap[k]..self.ap[k + 1] {
                let i = self.ai[p];
                if i == k {
                    d[k] = ax[p];
                    continue;
                }
                y[i] = ax[p];
                let mut j = i;
                while j != NONE && j < k && !mark[j] {
                    mark[j] = true;
                    stack.push(j);
                    j = self.etree[j];
                }
                while let Some(j) = stack.pop() {
                    pattern.push(j);
                }
            }
            for &c in pattern.iter().rev() {
                let yc = y[c];
                let end = next[c];
                for q in self.lp[c]..end {
                    y[li[q]] -= lx[q] * yc;
                }
                li[end] = k;
                let l = yc * dinv[c];
                lx[end] = l;
                d[k] -= yc * l;
                next[c] += 1;
                y[c] = 0.0;
                mark[c] = false;
            }
            if d[k].abs() <= 1e-18 * scale || !d[k].is_finite() {
                inertia.zero += 1;
                d[k] = if d[k].is_finite() { 1e300 } else { d[k] };
            } else if d[k] > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            dinv[k] = 1.0 / d[k];
        }
        debug_assert!(next.iter().zip(&self.lp[1..]).all(|(a, b)| a == b));
        LdlFactor { li, lx, d, inertia }
    }

    /// Solve `A x = b` in place using a factor produced by [`Self::factor`].
    pub fn solve(&self, f: &LdlFactor, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let xi = x[i];
            for q in self.lp[i]..self.lp[i + 1] {
                x[f.li[q]] -= f.lx[q] * xi;
            }
        }
        for i in 0..n {
            x[i] /= f.d[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for q in self.lp[i]..self.lp[i + 1] {
                acc -= f.lx[q] * x[f.li[q]];
            }
            x[i] = acc;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

/// `y = A x` for a symmetric matrix in lower-triangle coordinates.
pub fn sym_matvec(p: &SymmetricPattern, vals: &[f64], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for ((&r, &c), &v) in p.rows.iter().zip(&p.cols).zip(vals) {
        y[r] += v * x[c];
        if r != c {
            y[c] += v * x[r];
        }
    }
}

/// Adjacency lists (without self loops) of a symmetric pattern.
pub fn adjacency(p: &SymmetricPattern) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); p.dim];
    for (&r, &c) in p.rows.iter().zip(&p.cols) {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}

/// Reverse Cuthill–McKee ordering of a graph (handles disconnected graphs);
/// each component starts from a pseudo-peripheral node.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut level = vec![NONE; n];
    // breadth-first levels from `start`; returns the visit order and resets `level`
    let mut bfs = |start: usize| -> (Vec<usize>, Vec<usize>) {
        let mut out = vec![start];
        level[start] = 0;
        let mut head = 0;
        while head < out.len() {
            let u = out[head];
            head += 1;
            for &w in &adj[u] {
                if level[w] == NONE {
                    level[w] = level[u] + 1;
                    out.push(w);
                }
            }
        }
        let depth: Vec<usize> = out.iter().map(|&u| level[u]).collect();
        for &u in &out {
            level[u] = NONE;
        }
        (out, depth)
    };

    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if placed[root] {
            continue;
        }
        let mut start = root;
        let (mut comp, mut depth) = bfs(start);
        loop {
            let ecc = *depth.last().expect("non-empty");
            let cand = comp
                .iter()
                .zip(&depth)
                .filter(|&(_, &d)| d == ecc)
                .map(|(&u, _)| u)
                .min_by_key(|&u| (adj[u].len(), u))
                .expect("non-empty last level");
            let (c2, d2) = bfs(cand);
            if *d2.last().expect("non-empty") > ecc {
                start = cand;
                comp = c2;
                depth = d2;
            } else {
                break;
            }
        }
        let _ = comp;
        let mut queue = VecDeque::from([start]);
        placed[start] = true;
        let mut comp_order = Vec::new();
        while let Some(u) = queue.pop_front() {
            comp_order.push(u);
            let mut nb: Vec<usize> = adj[u].iter().copied().filter(|&w| !placed[w]).collect();
            nb.sort_by_key(|&w| (adj[w].len(), w));
            for w in nb {
                placed[w] = true;
                queue.push_back(w);
            }
        }
        comp_order.reverse();
        order.extend(comp_order);
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_from(p: &SymmetricPattern, vals: &[f64]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; p.dim]; p.dim];
        for ((&r, &c), &v) in p.rows.iter().zip(&p.cols).zip(vals) {
            a[r][c] += v;
            if r != c {
                a[c][r] += v;
            }
        }
        a
    }

    fn kkt_example() -> (SymmetricPattern, Vec<f64>) {
        // [H  J^T; J  -eps]: H = diag(4, 2, 1) + offdiag, J = [[1, 1, 0], [0, 1, -1]]
        let rows = vec![0, 1, 1, 2, 3, 3, 4, 4, 3, 4];
        let cols = vec![0, 0, 1, 2, 0, 1, 1, 2, 3, 4];
        let vals = vec![4.0, 0.5, 2.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1e-8, -1e-8];
        (SymmetricPattern { dim: 5, rows, cols }, vals)
    }

    #[test]
    fn solves_quasidefinite_system_any_order() {
        let (p, vals) = kkt_example();
        let a = dense_from(&p, &vals);
        let b = [1.0, -2.0, 0.5, 3.0, -1.0];
        for perm in [vec![0, 1, 2, 3, 4], vec![4, 3, 2, 1, 0], vec![0, 3, 1, 4, 2]] {
            let sym = LdlSymbolic::new(&p, perm);
            let f = sym.factor(&vals);
            assert_eq!(f.inertia, Inertia { positive: 3, negative: 2, zero: 0 });
            let mut x = b.to_vec();
            sym.solve(&f, &mut x);
            for i in 0..5 {
                let r: f64 = (0..5).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i];
                assert!(r.abs() < 1e-6, "residual {r}");
            }
        }
    }

    #[test]
    fn detects_wrong_inertia() {
        let p = SymmetricPattern { dim: 2, rows: vec![0, 1, 1], cols: vec![0, 0, 1] };
        // eigenvalues of [[1,2],[2,1]] are 3 and -1
        let sym = LdlSymbolic::new(&p, vec![0, 1]);
        let f = sym.factor(&[1.0, 2.0, 1.0]);
        assert_eq!(f.inertia.positive, 1);
        assert_eq!(f.inertia.negative, 1);
        let f = sym.factor(&[0.0, 0.0, 1.0]);
        assert_eq!(f.inertia.zero, 1);
    }

    #[test]
    fn rcm_reduces_bandwidth_of_shuffled_path() {
        // path graph with shuffled labels
        let labels = [5, 2, 8, 0, 7, 3, 9, 1, 6, 4];
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for w in labels.windows(2) {
            rows.push(w[0].max(w[1]));
            cols.push(w[0].min(w[1]));
        }
        let p = SymmetricPattern { dim: 10, rows, cols };
        let order = reverse_cuthill_mckee(&adjacency(&p));
        let mut pos = [0usize; 10];
        for (i, &o) in order.iter().enumerate() {
            pos[o] = i;
        }
        for w in labels.windows(2) {
            assert_eq!(pos[w[0]].abs_diff(pos[w[1]]), 1);
        }
        let sym = LdlSymbolic::new(&p, order);
        assert_eq!(sym.factor_nnz(), 9);
    }
}
