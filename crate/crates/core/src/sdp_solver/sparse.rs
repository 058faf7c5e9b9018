//! Supernodal multifrontal Cholesky factorization of the Schur complement.
//!
//! The symbolic phase orders the variables (nested dissection on the
//! sparse part, dense variables last), builds the elimination tree and
//! groups columns into fundamental supernodes. Each supernode owns a dense
//! column-major panel `rows x cols` holding its columns of `L`.

use std::collections::HashMap;

use super::ordering::{nested_dissection, Graph};

const NONE: usize = usize::MAX;
/// Column block width of the dense frontal kernels.
const NB: usize = 48;
/// Pivots below this fraction of the assembled diagonal are replaced.
const PIVOT_TOL: f64 = 1e-15;
const HUGE_PIVOT: f64 = 1e64;

#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    /// New index -> original variable.
    perm: Vec<u32>,
    /// Original variable -> new index.
    iperm: Vec<u32>,
    sn_cols: Vec<usize>,
    row_start: Vec<usize>,
    rows: Vec<u32>,
    val_start: Vec<usize>,
    sn_parent: Vec<usize>,
    col_sn: Vec<u32>,
}

impl Symbolic {
    /// Analyzes the pattern of `sum_e K_e` where each element `e` couples
    /// all variables in `elements[e]`. Variables flagged in `dense` (and
    /// any touching too many elements) are ordered last.
    pub fn analyze(n: usize, elements: &[Vec<u32>], force_dense: &[u32]) -> Self {
        // variable -> elements
        let mut count = vec![0usize; n + 1];
        for e in elements {
            for &v in e {
                count[v as usize + 1] += 1;
            }
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut var_elems = vec![0u32; count[n]];
        for (k, e) in elements.iter().enumerate() {
            for &v in e {
                var_elems[fill[v as usize]] = k as u32;
                fill[v as usize] += 1;
            }
        }
        let threshold = 64usize.max((8.0 * (elements.len() as f64).sqrt()) as usize);
        let mut dense = vec![false; n];
        for v in 0..n {
            dense[v] = count[v + 1] - count[v] > threshold;
        }
        for &v in force_dense {
            dense[v as usize] = true;
        }

        // full adjacency (without self loops)
        let mut marker = vec![NONE; n];
        let mut xadj = vec![0usize];
        let mut adj: Vec<u32> = Vec::new();
        for v in 0..n {
            marker[v] = v;
            for &e in &var_elems[count[v]..count[v + 1]] {
                for &u in &elements[e as usize] {
                    if marker[u as usize] != v {
                        marker[u as usize] = v;
                        adj.push(u);
                    }
                }
            }
            xadj.push(adj.len());
        }

        let order = Self::fill_reducing_order(n, &xadj, &adj, &dense);
        Self::from_order(n, &xadj, &adj, order)
    }

    /// Nested dissection on the sparse variables after merging variables
    /// with identical neighbourhoods; dense variables follow in index order.
    fn fill_reducing_order(n: usize, xadj: &[usize], adj: &[u32], dense: &[bool]) -> Vec<u32> {
        let mut group_of = vec![u32::MAX; n];
        let mut members: Vec<Vec<u32>> = Vec::new();
        let mut seen: HashMap<Vec<u32>, u32> = HashMap::new();
        for v in 0..n {
            if dense[v] {
                continue;
            }
            let mut key: Vec<u32> =
                adj[xadj[v]..xadj[v + 1]].iter().copied().filter(|&u| !dense[u as usize]).collect();
            key.push(v as u32);
            key.sort_unstable();
            let next = members.len() as u32;
            let g = *seen.entry(key).or_insert(next);
            if g == next {
                members.push(Vec::new());
            }
            members[g as usize].push(v as u32);
            group_of[v] = g;
        }
        let ng = members.len();
        let mut mark = vec![u32::MAX; ng];
        let mut gx = vec![0usize];
        let mut ga = Vec::new();
        for (g, mem) in members.iter().enumerate() {
            mark[g] = g as u32;
            // members share their neighbourhood; one representative suffices
            let v = mem[0] as usize;
            for &u in &adj[xadj[v]..xadj[v + 1]] {
                let h = group_of[u as usize];
                if h != u32::MAX && mark[h as usize] != g as u32 {
                    mark[h as usize] = g as u32;
                    ga.push(h);
                }
            }
            gx.push(ga.len());
        }
        let graph = Graph { xadj: gx, adj: ga, weight: members.iter().map(|m| m.len() as u32).collect() };
        let mut order = Vec::with_capacity(n);
        for g in nested_dissection(&graph) {
            order.extend_from_slice(&members[g as usize]);
        }
        order.extend((0..n as u32).filter(|&v| dense[v as usize]));
        order
    }

    fn from_order(n: usize, xadj: &[usize], adj: &[u32], order: Vec<u32>) -> Self {
        let mut iperm = vec![0u32; n];
        for (k, &v) in order.iter().enumerate() {
            iperm[v as usize] = k as u32;
        }
        let parent = etree(n, xadj, adj, &order, &iperm);

        // postorder the tree so that subtrees are contiguous
        let (first_child, next_sibling) = children(&parent);
        let mut post = Vec::with_capacity(n);
        let mut stack = Vec::new();
        for r in 0..n {
            if parent[r] != NONE {
                continue;
            }
            stack.push((r, false));
            while let Some((v, expanded)) = stack.pop() {
                if expanded {
                    post.push(v);
                    continue;
                }
                stack.push((v, true));
                // push children in reverse so the lowest is visited first
                let mut kids = Vec::new();
                let mut c = first_child[v];
                while c != NONE {
                    kids.push(c);
                    c = next_sibling[c];
                }
                for &c in kids.iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        let perm: Vec<u32> = post.iter().map(|&k| order[k]).collect();
        let mut inv_post = vec![0usize; n];
        for (k, &old) in post.iter().enumerate() {
            inv_post[old] = k;
        }
        let parent: Vec<usize> =
            post.iter().map(|&old| if parent[old] == NONE { NONE } else { inv_post[parent[old]] }).collect();
        for (k, &v) in perm.iter().enumerate() {
            iperm[v as usize] = k as u32;
        }
        let (first_child, next_sibling) = children(&parent);

        // column structures, kept only until the parent absorbs them
        let mut open: Vec<Option<Vec<u32>>> = vec![None; n];
        let mut marker = vec![NONE; n];
        let mut sn_cols = Vec::new();
        let mut row_start = vec![0usize];
        let mut rows: Vec<u32> = Vec::new();
        let mut prev_len = 0usize;
        for j in 0..n {
            let mut st = vec![j as u32];
            marker[j] = j;
            let v = perm[j] as usize;
            for &u in &adj[xadj[v]..xadj[v + 1]] {
                let i = iperm[u as usize] as usize;
                if i > j && marker[i] != j {
                    marker[i] = j;
                    st.push(i as u32);
                }
            }
            let mut c = first_child[j];
            while c != NONE {
                for &i in open[c].take().unwrap().iter().skip(1) {
                    if marker[i as usize] != j {
                        marker[i as usize] = j;
                        st.push(i);
                    }
                }
                c = next_sibling[c];
            }
            st[1..].sort_unstable();
            let joins = j > 0 && parent[j - 1] == j && prev_len == st.len() + 1;
            if !joins {
                if j > 0 {
                    row_start.push(rows.len());
                }
                sn_cols.push(j);
                rows.extend_from_slice(&st);
            }
            prev_len = st.len();
            if parent[j] != NONE {
                open[j] = Some(st);
            }
        }
        sn_cols.push(n);
        row_start.push(rows.len());
        let nsn = sn_cols.len() - 1;
        let mut col_sn = vec![0u32; n];
        let mut val_start = vec![0usize];
        for s in 0..nsn {
            for c in sn_cols[s]..sn_cols[s + 1] {
                col_sn[c] = s as u32;
            }
            let nr = row_start[s + 1] - row_start[s];
            let nc = sn_cols[s + 1] - sn_cols[s];
            val_start.push(val_start[s] + nr * nc);
        }
        let sn_parent = (0..nsn)
            .map(|s| {
                let p = parent[sn_cols[s + 1] - 1];
                if p == NONE {
                    NONE
                } else {
                    col_sn[p] as usize
                }
            })
            .collect();
        Self { n, perm, iperm, sn_cols, row_start, rows, val_start, sn_parent, col_sn }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn num_supernodes(&self) -> usize {
        self.sn_cols.len() - 1
    }

    /// Stored entries of `L` (including the unused upper parts of the
    /// diagonal blocks).
    pub fn storage(&self) -> usize {
        *self.val_start.last().unwrap()
    }

    /// Approximate floating-point operations of one factorization.
    pub fn flops(&self) -> f64 {
        (0..self.num_supernodes())
            .map(|s| {
                let r = (self.row_start[s + 1] - self.row_start[s]) as f64;
                let k = (self.sn_cols[s + 1] - self.sn_cols[s]) as f64;
                let u = r - k;
                k * k * k / 3.0 + k * k * u + k * u * u
            })
            .sum()
    }

    fn sn_rows(&self, s: usize) -> &[u32] {
        &self.rows[self.row_start[s]..self.row_start[s + 1]]
    }

    /// Storage offset of entry `(a, b)` (original variable indices).
    pub fn offset(&self, a: u32, b: u32) -> usize {
        let (i, j) = (self.iperm[a as usize], self.iperm[b as usize]);
        let (row, col) = if i >= j { (i, j) } else { (j, i) };
        let s = self.col_sn[col as usize] as usize;
        let c = col as usize - self.sn_cols[s];
        let rs = self.sn_rows(s);
        let r = rs.binary_search(&row).expect("entry outside the symbolic pattern");
        self.val_start[s] + c * rs.len() + r
    }
}

fn etree(n: usize, xadj: &[usize], adj: &[u32], order: &[u32], iperm: &[u32]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for j in 0..n {
        let v = order[j] as usize;
        for &u in &adj[xadj[v]..xadj[v + 1]] {
            let mut r = iperm[u as usize] as usize;
            if r >= j {
                continue;
            }
            while ancestor[r] != NONE && ancestor[r] != j {
                let next = ancestor[r];
                ancestor[r] = j;
                r = next;
            }
            if ancestor[r] == NONE {
                ancestor[r] = j;
                parent[r] = j;
            }
        }
    }
    parent
}

fn children(parent: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n = parent.len();
    let mut first = vec![NONE; n];
    let mut next = vec![NONE; n];
    for v in (0..n).rev() {
        if parent[v] != NONE {
            next[v] = first[parent[v]];
            first[parent[v]] = v;
        }
    }
    (first, next)
}

/// Numeric factor sharing the layout of a [`Symbolic`].
#[derive(Debug, Clone)]
pub struct Factor {
    values: Vec<f64>,
    diag: Vec<f64>,
    stack: Vec<f64>,
    front: Vec<f64>,
    /// Pivots replaced during the last factorization.
    pub replaced_pivots: usize,
}

impl Factor {
    pub fn new(sym: &Symbolic) -> Self {
        Self { values: vec![0.0; sym.storage()], diag: vec![0.0; sym.n], stack: Vec::new(), front: Vec::new(), replaced_pivots: 0 }
    }

    /// Entry storage for assembly through [`Symbolic::offset`].
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Factorizes the assembled matrix in place. Tiny or negative pivots
    /// are replaced by a huge value, which zeroes that direction in
    /// solves. Returns `false` on non-finite input.
    pub fn factorize(&mut self, sym: &Symbolic) -> bool {
        self.replaced_pivots = 0;
        for s in 0..sym.num_supernodes() {
            let nr = sym.row_start[s + 1] - sym.row_start[s];
            for c in 0..sym.sn_cols[s + 1] - sym.sn_cols[s] {
                self.diag[sym.sn_cols[s] + c] = self.values[sym.val_start[s] + c * nr + c];
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return false;
        }
        // update matrices of finished supernodes: (supernode, start offset)
        let mut pending: Vec<(usize, usize)> = Vec::new();
        let mut rel: Vec<usize> = Vec::new();
        for s in 0..sym.num_supernodes() {
            let rows = sym.sn_rows(s);
            let nr = rows.len();
            let k = sym.sn_cols[s + 1] - sym.sn_cols[s];
            let u = nr - k;
            self.front.clear();
            self.front.resize(u * u, 0.0);
            let panel_start = sym.val_start[s];
            // extend-add children (the top of the stack, in postorder)
            let mut base = self.stack.len();
            while let Some(&(c, start)) = pending.last() {
                if sym.sn_parent[c] != s {
                    break;
                }
                pending.pop();
                let crow = sym.sn_rows(c);
                let ck = sym.sn_cols[c + 1] - sym.sn_cols[c];
                let cu = &crow[ck..];
                let m = cu.len();
                rel.clear();
                let mut p = 0;
                for &r in cu {
                    while rows[p] != r {
                        p += 1;
                    }
                    rel.push(p);
                }
                let upd = &self.stack[start..start + m * m];
                for jj in 0..m {
                    let pj = rel[jj];
                    for ii in jj..m {
                        let v = upd[jj * m + ii];
                        let pi = rel[ii];
                        if pj < k {
                            self.values[panel_start + pj * nr + pi] += v;
                        } else {
                            self.front[(pj - k) * u + (pi - k)] += v;
                        }
                    }
                }
                base = start;
            }
            self.stack.truncate(base);
            let panel = &mut self.values[panel_start..panel_start + nr * k];
            let col0 = sym.sn_cols[s];
            self.replaced_pivots += factor_panel(panel, nr, k, &self.diag[col0..col0 + k]);
            if u > 0 {
                // front -= L21 L21^T (lower part, by column blocks)
                let l21 = &panel[k..];
                let mut cb = 0;
                while cb < u {
                    let w = NB.min(u - cb);
                    let rows_left = u - cb;
                    unsafe {
                        matrixmultiply::dgemm(
                            rows_left,
                            k,
                            w,
                            -1.0,
                            l21.as_ptr().add(cb),
                            1,
                            nr as isize,
                            l21.as_ptr().add(cb),
                            nr as isize,
                            1,
                            1.0,
                            self.front.as_mut_ptr().add(cb * u + cb),
                            1,
                            u as isize,
                        );
                    }
                    cb += w;
                }
                if sym.sn_parent[s] != NONE {
                    pending.push((s, self.stack.len()));
                    self.stack.extend_from_slice(&self.front);
                }
            }
        }
        true
    }

    /// Solves `A x = b` in place (`b` indexed by original variable).
    pub fn solve(&self, sym: &Symbolic, b: &mut [f64]) {
        let mut x: Vec<f64> = sym.perm.iter().map(|&v| b[v as usize]).collect();
        for s in 0..sym.num_supernodes() {
            let rows = sym.sn_rows(s);
            let nr = rows.len();
            let panel = &self.values[sym.val_start[s]..];
            for c in 0..sym.sn_cols[s + 1] - sym.sn_cols[s] {
                let col = &panel[c * nr..(c + 1) * nr];
                let xj = x[rows[c] as usize] / col[c];
                x[rows[c] as usize] = xj;
                for r in c + 1..nr {
                    x[rows[r] as usize] -= col[r] * xj;
                }
            }
        }
        for s in (0..sym.num_supernodes()).rev() {
            let rows = sym.sn_rows(s);
            let nr = rows.len();
            let panel = &self.values[sym.val_start[s]..];
            for c in (0..sym.sn_cols[s + 1] - sym.sn_cols[s]).rev() {
                let col = &panel[c * nr..(c + 1) * nr];
                let mut acc = x[rows[c] as usize];
                for r in c + 1..nr {
                    acc -= col[r] * x[rows[r] as usize];
                }
                x[rows[c] as usize] = acc / col[c];
            }
        }
        for (k, &v) in sym.perm.iter().enumerate() {
            b[v as usize] = x[k];
        }
    }
}

/// Cholesky of the leading `k x k` block of a column-major `nr x k` panel
/// and the triangular solve for the rows below it. Returns the number of
/// replaced pivots.
fn factor_panel(panel: &mut [f64], nr: usize, k: usize, diag0: &[f64]) -> usize {
    let mut replaced = 0;
    let mut jb = 0;
    while jb < k {
        let b = NB.min(k - jb);
        // left-looking inside the block column
        for j in jb..jb + b {
            for l in jb..j {
                let ljl = panel[l * nr + j];
                if ljl == 0.0 {
                    continue;
                }
                let (left, right) = panel.split_at_mut(j * nr);
                let src = &left[l * nr + j..l * nr + nr];
                let dst = &mut right[j..nr];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= ljl * s;
                }
            }
            let d = panel[j * nr + j];
            if !(d > PIVOT_TOL * diag0[j].abs()) || d <= 0.0 {
                replaced += 1;
                panel[j * nr + j] = HUGE_PIVOT;
                for v in &mut panel[j * nr + j + 1..(j + 1) * nr] {
                    *v = 0.0;
                }
                continue;
            }
            let piv = d.sqrt();
            panel[j * nr + j] = piv;
            let inv = 1.0 / piv;
            for v in &mut panel[j * nr + j + 1..(j + 1) * nr] {
                *v *= inv;
            }
        }
        let next = jb + b;
        if next < k {
            // trailing panel columns next..k, rows next..nr
            let m = nr - next;
            let ncols = k - next;
            let ptr = panel.as_mut_ptr();
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    b,
                    ncols,
                    -1.0,
                    ptr.add(jb * nr + next),
                    1,
                    nr as isize,
                    ptr.add(jb * nr + next),
                    nr as isize,
                    1,
                    1.0,
                    ptr.add(next * nr + next),
                    1,
                    nr as isize,
                );
            }
        }
        jb = next;
    }
    replaced
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random SPD matrix `sum_e B_e B_e^T + I` over random elements.
    fn random_problem(n: usize, ne: usize, size: usize, seed: u64) -> (Vec<Vec<u32>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut elements = Vec::new();
        let mut dense = vec![0.0; n * n];
        for i in 0..n {
            dense[i * n + i] = 1.0;
        }
        for _ in 0..ne {
            let mut e: Vec<u32> = (0..size).map(|_| rng.random_range(0..n as u32)).collect();
            e.sort_unstable();
            e.dedup();
            let v: Vec<f64> = e.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            for (a, &i) in e.iter().enumerate() {
                for (b, &j) in e.iter().enumerate() {
                    dense[i as usize * n + j as usize] += v[a] * v[b];
                }
            }
            elements.push(e);
        }
        for i in 0..n {
            elements.push(vec![i as u32]);
        }
        (elements, dense)
    }

    fn factor_and_solve(n: usize, elements: &[Vec<u32>], dense: &[f64], force: &[u32]) -> f64 {
        let sym = Symbolic::analyze(n, elements, force);
        let mut f = Factor::new(&sym);
        for i in 0..n {
            for j in 0..=i {
                if dense[i * n + j] != 0.0 {
                    let o = sym.offset(i as u32, j as u32);
                    f.values_mut()[o] = dense[i * n + j];
                }
            }
        }
        assert!(f.factorize(&sym));
        assert_eq!(f.replaced_pivots, 0);
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| dense[i * n + j] * xs[j]).sum()).collect();
        f.solve(&sym, &mut b);
        b.iter().zip(&xs).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn random_sparse_systems_solve() {
        for (n, ne, size, seed) in [(1, 1, 1, 0), (10, 5, 3, 1), (200, 150, 5, 2), (400, 100, 12, 3)] {
            let (el, dense) = random_problem(n, ne, size, seed);
            let err = factor_and_solve(n, &el, &dense, &[]);
            assert!(err < 1e-9, "n={n}: {err}");
        }
    }

    #[test]
    fn dense_variables_and_large_fronts() {
        // a grid-like pattern plus two variables coupled to everything
        let side = 30;
        let n = side * side + 2;
        let mut elements = Vec::new();
        for i in 0..side - 1 {
            for j in 0..side - 1 {
                let id = |a: usize, b: usize| (a * side + b) as u32;
                elements.push(vec![id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1), n as u32 - 2, n as u32 - 1]);
            }
        }
        let mut dense = vec![0.0; n * n];
        for (k, e) in elements.iter().enumerate() {
            for &a in e {
                for &b in e {
                    let w = if a == b { 2.0 } else { 0.1 + 0.01 * (k % 7) as f64 };
                    dense[a as usize * n + b as usize] += w;
                }
            }
        }
        let err = factor_and_solve(n, &elements, &dense, &[n as u32 - 1]);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn singular_directions_are_zeroed() {
        let elements = vec![vec![0, 1], vec![2]];
        let sym = Symbolic::analyze(3, &elements, &[]);
        let mut f = Factor::new(&sym);
        f.values_mut()[sym.offset(0, 0)] = 4.0;
        f.values_mut()[sym.offset(1, 1)] = 1.0;
        assert!(f.factorize(&sym));
        assert_eq!(f.replaced_pivots, 1);
        let mut b = vec![8.0, 3.0, 5.0];
        f.solve(&sym, &mut b);
        assert_eq!(&b[..2], &[2.0, 3.0]);
        assert!(b[2].abs() < 1e-100);
    }
}
