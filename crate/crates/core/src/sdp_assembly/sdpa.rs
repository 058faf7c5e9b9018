//! Sparse SDPA text format.
//!
//! ```text
//! m
//! nblocks
//! size_1 size_2 ... (a negative size is a diagonal block)
//! c_1 ... c_m
//! i blk r c value      (r <= c, i = 0 for F_0)
//! ```
//!
//! All size-1 blocks are merged into one diagonal block placed last.
//! Numbers are written in the shortest form that parses back to the same
//! `f64`, so export, parse and re-export reproduce the text exactly.

use std::fmt::Write as _;

use super::{AssemblyError, BlockTag, SdpProblem};
use crate::cpa_metric::packed_len;

/// Maps problem block `b` to `(sdpa block, offset)`; offset is the diagonal
/// position inside the merged scalar block.
fn layout(problem: &SdpProblem) -> (Vec<i64>, Vec<(usize, usize)>) {
    let mut sizes = Vec::new();
    let mut place = Vec::with_capacity(problem.num_blocks());
    let scalars = (0..problem.num_blocks()).filter(|&b| problem.block_size(b) == 1).count();
    let matrix_blocks = problem.num_blocks() - scalars;
    let mut next_scalar = 0;
    for b in 0..problem.num_blocks() {
        let size = problem.block_size(b);
        if size == 1 {
            place.push((matrix_blocks + 1, next_scalar));
            next_scalar += 1;
        } else {
            sizes.push(size as i64);
            place.push((sizes.len(), 0));
        }
    }
    if scalars > 0 {
        sizes.push(-(scalars as i64));
    }
    (sizes, place)
}

pub fn export_sdpa(problem: &SdpProblem) -> Result<String, AssemblyError> {
    if problem.num_blocks() == 0 {
        return Err(AssemblyError::EmptyComplex);
    }
    let (sizes, place) = layout(problem);
    let mut out = String::new();
    let _ = writeln!(out, "{}", problem.num_vars());
    let _ = writeln!(out, "{}", sizes.len());
    let _ = writeln!(out, "{}", sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "));
    let _ = writeln!(
        out,
        "{}",
        problem.objective().iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(" ")
    );
    // (var, block, row, col, value)
    let mut entries: Vec<(u32, u32, u32, u32, f64)> = Vec::new();
    let mut push = |var: u32, b: usize, packed: &[f64], size: usize| {
        let (blk, off) = place[b];
        let mut k = 0;
        for i in 0..size {
            for j in i..size {
                let v = packed[k];
                k += 1;
                if v != 0.0 {
                    let (r, c) = if size == 1 { (off + 1, off + 1) } else { (i + 1, j + 1) };
                    entries.push((var, blk as u32, r as u32, c as u32, v));
                }
            }
        }
    };
    for b in 0..problem.num_blocks() {
        let blk = problem.block(b);
        push(0, b, blk.f0, blk.size);
        for (t, &v) in blk.vars.iter().enumerate() {
            push(v + 1, b, blk.coef(t), blk.size);
        }
    }
    entries.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    for (i, blk, r, c, v) in entries {
        let _ = writeln!(out, "{i} {blk} {r} {c} {v:?}");
    }
    Ok(out)
}

fn err(line: usize, message: impl Into<String>) -> AssemblyError {
    AssemblyError::Sdpa { line, message: message.into() }
}

/// Parses sparse SDPA text. Diagonal blocks come back as individual size-1
/// blocks after the matrix blocks.
pub fn parse_sdpa(text: &str) -> Result<SdpProblem, AssemblyError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('*') && !l.starts_with('"'));
    let clean = |s: &str| s.replace([',', '(', ')', '{', '}'], " ");
    let mut header = |what: &str| lines.next().ok_or_else(|| err(0, format!("missing {what}")));

    let (ln, l) = header("variable count")?;
    let m: usize = clean(l).split_whitespace().next().and_then(|t| t.parse().ok()).ok_or_else(|| err(ln, "bad m"))?;
    let (ln, l) = header("block count")?;
    let nb: usize = clean(l).split_whitespace().next().and_then(|t| t.parse().ok()).ok_or_else(|| err(ln, "bad nblocks"))?;
    let (ln, l) = header("block sizes")?;
    let sizes: Vec<i64> = clean(l)
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(ln, format!("bad block size `{t}`"))))
        .collect::<Result<_, _>>()?;
    if sizes.len() != nb || sizes.contains(&0) {
        return Err(err(ln, "block sizes do not match the block count"));
    }
    let (ln, l) = header("objective")?;
    let c: Vec<f64> = clean(l)
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(ln, format!("bad objective entry `{t}`"))))
        .collect::<Result<_, _>>()?;
    if c.len() != m {
        return Err(err(ln, format!("objective has {} entries, expected {m}", c.len())));
    }

    // dense per-block accumulators: F_0 and each F_i
    let mut dense: Vec<std::collections::BTreeMap<usize, Vec<f64>>> = vec![Default::default(); nb];
    for (ln, l) in lines {
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() != 5 {
            return Err(err(ln, "expected `i blk r c value`"));
        }
        let idx = |k: usize| tok[k].parse::<usize>().map_err(|_| err(ln, format!("bad index `{}`", tok[k])));
        let (i, blk, r, cc) = (idx(0)?, idx(1)?, idx(2)?, idx(3)?);
        let v: f64 = tok[4].parse().map_err(|_| err(ln, format!("bad value `{}`", tok[4])))?;
        if i > m || blk == 0 || blk > nb {
            return Err(err(ln, "index out of range"));
        }
        let size = sizes[blk - 1].unsigned_abs() as usize;
        if r == 0 || cc == 0 || r > size || cc > size {
            return Err(err(ln, "row/column out of range"));
        }
        let (r, cc) = (r.min(cc) - 1, r.max(cc) - 1);
        let mat = dense[blk - 1].entry(i).or_insert_with(|| {
            if sizes[blk - 1] < 0 {
                vec![0.0; size]
            } else {
                vec![0.0; packed_len(size)]
            }
        });
        if sizes[blk - 1] < 0 {
            if r != cc {
                return Err(err(ln, "off-diagonal entry in a diagonal block"));
            }
            mat[r] = v;
        } else {
            mat[super::packed_index(size, r, cc)] = v;
        }
    }

    let mut problem = SdpProblem::new(m, c);
    let mut push_all = |diagonal: bool| {
        for (b, &sz) in sizes.iter().enumerate() {
            if (sz < 0) != diagonal {
                continue;
            }
            let size = sz.unsigned_abs() as usize;
            if diagonal {
                for k in 0..size {
                    let f0 = dense[b].get(&0).map_or(0.0, |v| v[k]);
                    let mut terms: Vec<(u32, Vec<f64>)> = dense[b]
                        .iter()
                        .filter(|(&i, v)| i > 0 && v[k] != 0.0)
                        .map(|(&i, v)| ((i - 1) as u32, vec![v[k]]))
                        .collect();
                    problem.push_block(1, &[f0], &mut terms, BlockTag::generic());
                }
            } else {
                let f0 = dense[b].get(&0).cloned().unwrap_or_else(|| vec![0.0; packed_len(size)]);
                let mut terms: Vec<(u32, Vec<f64>)> = dense[b]
                    .iter()
                    .filter(|(&i, _)| i > 0)
                    .map(|(&i, v)| ((i - 1) as u32, v.clone()))
                    .collect();
                problem.push_block(size, &f0, &mut terms, BlockTag::generic());
            }
        }
    };
    push_all(false);
    push_all(true);
    Ok(problem)
}

/// Reads a whitespace-separated vector of reals.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, AssemblyError> {
    text.split_whitespace()
        .enumerate()
        .map(|(k, t)| t.parse().map_err(|_| err(0, format!("entry {k}: bad number `{t}`"))))
        .collect()
}
