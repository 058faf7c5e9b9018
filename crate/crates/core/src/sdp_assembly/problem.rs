//! Block-diagonal semidefinite programs in the standard form
//! `min c^T y  s.t.  X = sum_i F_i y_i - F_0 >= 0`.
//!
//! Every block stores `F_0` and the nonzero `F_i` restricted to it as packed
//! upper triangles (row-major, an off-diagonal entry stands for both
//! mirrored positions). Storage is flat so that problems with millions of
//! small blocks stay compact.

use crate::cpa_metric::packed_len;

/// Which family a block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    /// `M(x_k) - eps0 I >= 0`, one per vertex slot.
    Positivity,
    /// `C I - M(x_k) >= 0`.
    MetricBound,
    /// `D/(n+1) +- (w_ij)_l >= 0`.
    GradientBound,
    /// Negated contraction matrix at a simplex vertex.
    Contraction,
    /// `C_max - C_nu >= 0`.
    MaxLink,
    /// Block without a provenance (parsed or hand-built problems).
    Generic,
}

/// Where a block came from: family, simplex (or `u32::MAX`) and a
/// family-specific index (slot, local vertex, or gradient row code).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockTag {
    pub kind: BlockKind,
    pub simplex: u32,
    pub index: u32,
}

impl BlockTag {
    pub const NONE: u32 = u32::MAX;

    pub fn generic() -> Self {
        Self { kind: BlockKind::Generic, simplex: Self::NONE, index: Self::NONE }
    }
}

/// Borrowed view of one block.
#[derive(Debug, Clone, Copy)]
pub struct BlockRef<'a> {
    pub size: usize,
    /// Packed `F_0`.
    pub f0: &'a [f64],
    /// Variable indices in ascending order.
    pub vars: &'a [u32],
    /// Packed coefficient matrices, one per entry of `vars`.
    pub coefs: &'a [f64],
    pub tag: BlockTag,
}

impl BlockRef<'_> {
    pub fn coef(&self, term: usize) -> &[f64] {
        let p = packed_len(self.size);
        &self.coefs[term * p..(term + 1) * p]
    }
}

/// Packed position of `(i, j)`, `i <= j`, in an `n x n` upper triangle.
pub fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    // rows 0..i hold n, n-1, .., n-i+1 entries
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// Frobenius inner product of two packed symmetric matrices.
pub fn packed_dot(a: &[f64], b: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    let mut k = 0;
    for i in 0..n {
        s += a[k] * b[k];
        k += 1;
        for _ in i + 1..n {
            s += 2.0 * a[k] * b[k];
            k += 1;
        }
    }
    s
}

/// Packed upper triangle of a row-major symmetric matrix (averaging the
/// mirrored entries).
pub fn pack(full: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(packed_len(n));
    for i in 0..n {
        out.push(full[i * n + i]);
        for j in i + 1..n {
            out.push(0.5 * (full[i * n + j] + full[j * n + i]));
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpProblem {
    num_vars: usize,
    objective: Vec<f64>,
    block_size: Vec<u32>,
    tags: Vec<(BlockKind, u32, u32)>,
    term_start: Vec<u32>,
    term_var: Vec<u32>,
    coef_start: Vec<u64>,
    coefs: Vec<f64>,
    f0_start: Vec<u64>,
    f0: Vec<f64>,
}

impl SdpProblem {
    pub fn new(num_vars: usize, objective: Vec<f64>) -> Self {
        assert_eq!(objective.len(), num_vars);
        Self {
            num_vars,
            objective,
            term_start: vec![0],
            ..Default::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn num_blocks(&self) -> usize {
        self.block_size.len()
    }

    pub fn block_size(&self, b: usize) -> usize {
        self.block_size[b] as usize
    }

    pub fn tag(&self, b: usize) -> BlockTag {
        let (kind, simplex, index) = self.tags[b];
        BlockTag { kind, simplex, index }
    }

    /// Appends a block given packed `F_0` and `(variable, packed F_i)`
    /// terms. Terms on the same variable are summed; zero coefficient
    /// matrices are dropped.
    pub fn push_block(&mut self, size: usize, f0: &[f64], terms: &mut Vec<(u32, Vec<f64>)>, tag: BlockTag) {
        let p = packed_len(size);
        assert_eq!(f0.len(), p);
        terms.sort_by_key(|t| t.0);
        self.block_size.push(size as u32);
        self.tags.push((tag.kind, tag.simplex, tag.index));
        self.f0_start.push(self.f0.len() as u64);
        self.f0.extend_from_slice(f0);
        self.coef_start.push(self.coefs.len() as u64);
        let mut i = 0;
        while i < terms.len() {
            let var = terms[i].0;
            assert!((var as usize) < self.num_vars, "variable {var} out of range");
            let mut acc = terms[i].1.clone();
            let mut j = i + 1;
            while j < terms.len() && terms[j].0 == var {
                for (a, b) in acc.iter_mut().zip(&terms[j].1) {
                    *a += b;
                }
                j += 1;
            }
            if acc.iter().any(|&v| v != 0.0) {
                assert_eq!(acc.len(), p);
                self.term_var.push(var);
                self.coefs.extend_from_slice(&acc);
            }
            i = j;
        }
        self.term_start.push(self.term_var.len() as u32);
    }

    /// Appends a block given row-major full matrices.
    pub fn push_dense_block(&mut self, size: usize, f0: &[f64], terms: &[(usize, Vec<f64>)], tag: BlockTag) {
        let mut packed: Vec<(u32, Vec<f64>)> =
            terms.iter().map(|(v, m)| (*v as u32, pack(m, size))).collect();
        self.push_block(size, &pack(f0, size), &mut packed, tag);
    }

    pub fn block(&self, b: usize) -> BlockRef<'_> {
        let size = self.block_size[b] as usize;
        let p = packed_len(size);
        let (t0, t1) = (self.term_start[b] as usize, self.term_start[b + 1] as usize);
        let c0 = self.coef_start[b] as usize;
        let f = self.f0_start[b] as usize;
        BlockRef {
            size,
            f0: &self.f0[f..f + p],
            vars: &self.term_var[t0..t1],
            coefs: &self.coefs[c0..c0 + (t1 - t0) * p],
            tag: self.tag(b),
        }
    }

    /// Total number of stored `(block, variable)` terms.
    pub fn num_terms(&self) -> usize {
        self.term_var.len()
    }

    /// Packed `sum_i F_i y_i - F_0` on block `b`.
    pub fn residual_packed(&self, y: &[f64], b: usize) -> Vec<f64> {
        let blk = self.block(b);
        let mut out: Vec<f64> = blk.f0.iter().map(|v| -v).collect();
        for (t, &v) in blk.vars.iter().enumerate() {
            let yv = y[v as usize];
            for (o, c) in out.iter_mut().zip(blk.coef(t)) {
                *o += c * yv;
            }
        }
        out
    }

    /// Block counts by size.
    pub fn size_histogram(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut h = std::collections::BTreeMap::new();
        for &s in &self.block_size {
            *h.entry(s as usize).or_insert(0) += 1;
        }
        h
    }

    /// Block counts by family.
    pub fn kind_histogram(&self) -> std::collections::BTreeMap<BlockKind, usize> {
        let mut h = std::collections::BTreeMap::new();
        for t in &self.tags {
            *h.entry(t.0).or_insert(0) += 1;
        }
        h
    }
}
