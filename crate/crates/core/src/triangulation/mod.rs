//! Simplicial complexes on the phase cylinder `[0, T) x R^n`.
//!
//! The lattice construction splits every scaled unit cell into `(n+1)!`
//! Kuhn simplices (one per ordering of the coordinate axes), mirrors the
//! pattern across the coordinate hyperplanes `x_i = 0` so that the mesh is
//! symmetric, and keeps the simplices meeting the open region
//! `(0, T) x C`. Vertices are integer lattice points scaled by
//! `rho * diag(1, s_1, .., s_n)` with `rho = 2^-K T`; vertices at `t = 0` and
//! `t = T` share a storage slot.

mod lp;

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{determinant, lu_inverse, one_norm};
use crate::system::{DerivativeBounds, PhaseBox, SystemDefinition, SystemError};
pub use lp::{maximize as lp_maximize, LpOutcome};

/// Condition estimate above which a simplex counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriangulationError {
    #[error("the interior of the region is not connected")]
    DisconnectedRegion,
    #[error("no simplex meets the interior of the region")]
    EmptySelection,
    #[error("singular simplex (condition estimate {0:e})")]
    SingularSimplex(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// `diag(1, s_1, .., s_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    diag: Vec<f64>,
}

impl ScalingMatrix {
    /// `s` holds `s_1 .. s_n`.
    pub fn new(s: &[f64]) -> Result<Self, TriangulationError> {
        if s.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(TriangulationError::InvalidInput(format!(
                "scaling factors must be positive, got {s:?}"
            )));
        }
        let mut diag = vec![1.0];
        diag.extend_from_slice(s);
        Ok(Self { diag })
    }

    pub fn identity(n: usize) -> Self {
        Self { diag: vec![1.0; n + 1] }
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.diag.len() - 1
    }

    /// Full diagonal `(1, s_1, .., s_n)`.
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// `S* = sqrt(n+1) max(1, s_i)`.
    pub fn s_star(&self) -> f64 {
        let m = self.diag.iter().copied().fold(0.0, f64::max);
        ((self.diag.len()) as f64).sqrt() * m
    }

    /// `s* = min(1, s_i)`.
    pub fn s_lower(&self) -> f64 {
        self.diag.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Finite union of closed axis-aligned boxes in `x` whose interior is
/// connected.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    boxes: Vec<Vec<(f64, f64)>>,
}

impl Region {
    pub fn new(boxes: Vec<Vec<(f64, f64)>>) -> Result<Self, TriangulationError> {
        let Some(first) = boxes.first() else {
            return Err(TriangulationError::InvalidInput("region has no boxes".into()));
        };
        let n = first.len();
        for b in &boxes {
            if b.len() != n || n == 0 {
                return Err(TriangulationError::InvalidInput(
                    "region boxes must share one positive dimension".into(),
                ));
            }
            if b.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
                return Err(TriangulationError::InvalidInput(format!(
                    "region box {b:?} has empty interior"
                )));
            }
        }
        let region = Self { boxes };
        if !region.interior_connected() {
            return Err(TriangulationError::DisconnectedRegion);
        }
        Ok(region)
    }

    pub fn single(bounds: Vec<(f64, f64)>) -> Result<Self, TriangulationError> {
        Self::new(vec![bounds])
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].len()
    }

    pub fn boxes(&self) -> &[Vec<(f64, f64)>] {
        &self.boxes
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes
            .iter()
            .any(|b| b.iter().zip(x).all(|(&(lo, hi), &v)| lo <= v && v <= hi))
    }

    /// Two boxes belong to the same interior component when they overlap in
    /// every coordinate with positive length, except possibly one coordinate
    /// where they touch.
    fn interior_connected(&self) -> bool {
        let m = self.boxes.len();
        let adjacent = |a: &[(f64, f64)], b: &[(f64, f64)]| {
            let mut touching = 0;
            for (&(al, ah), &(bl, bh)) in a.iter().zip(b) {
                let overlap = ah.min(bh) - al.max(bl);
                if overlap < 0.0 {
                    return false;
                }
                if overlap == 0.0 {
                    touching += 1;
                }
            }
            touching <= 1
        };
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                if !seen[j] && adjacent(&self.boxes[i], &self.boxes[j]) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// Cached geometry of one simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGeometry {
    /// Rows `x_k - x_0`, `k = 1..=n+1`, row-major `(n+1) x (n+1)`.
    pub x: Vec<f64>,
    pub inverse: Vec<f64>,
    /// Diameter.
    pub h: f64,
    pub inverse_one_norm: f64,
}

/// Shape matrix, inverse and diameter of the simplex spanned by `vertices`
/// (each of length `n+1`, `n+2` of them).
pub fn simplex_geometry(vertices: &[&[f64]]) -> Result<SimplexGeometry, TriangulationError> {
    let d = vertices[0].len();
    if vertices.len() != d + 1 {
        return Err(TriangulationError::InvalidInput(format!(
            "{} vertices given for a {d}-simplex",
            vertices.len()
        )));
    }
    let mut x = vec![0.0; d * d];
    for k in 1..=d {
        for i in 0..d {
            x[(k - 1) * d + i] = vertices[k][i] - vertices[0][i];
        }
    }
    let inv = lu_inverse(&x, d).ok_or(TriangulationError::SingularSimplex(f64::INFINITY))?;
    if !(inv.condition <= MAX_CONDITION) {
        return Err(TriangulationError::SingularSimplex(inv.condition));
    }
    let mut h: f64 = 0.0;
    for a in 0..=d {
        for b in a + 1..=d {
            let dist2: f64 = (0..d).map(|i| (vertices[a][i] - vertices[b][i]).powi(2)).sum();
            h = h.max(dist2.sqrt());
        }
    }
    Ok(SimplexGeometry {
        inverse_one_norm: one_norm(&inv.inverse, d),
        x,
        inverse: inv.inverse,
        h,
    })
}

/// Lattice data `(cell, axis order)` a simplex was generated from; the cell
/// is given by its lower lattice corner.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Generator {
    pub cell: Vec<i64>,
    pub perm: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    /// `n + 2` vertex ids; the first is the base vertex `x_0`.
    pub vertices: Vec<u32>,
    pub geometry: u32,
    pub generator: Option<Generator>,
}

#[derive(Debug, Clone)]
struct Lattice {
    k: u32,
    rho: f64,
    scaling: ScalingMatrix,
    region: Region,
    cells: HashMap<Vec<i64>, Vec<u32>>,
    x_star: f64,
}

/// A point located in a simplex: barycentric weights for the point shifted
/// in time by `time_shift` (a multiple of `T`) into the simplex's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub simplex: usize,
    pub weights: Vec<f64>,
    pub time_shift: f64,
}

#[derive(Debug, Clone)]
pub struct SimplicialComplex {
    n: usize,
    period: Option<f64>,
    lattice: Option<Lattice>,
    coords: Vec<f64>,
    vertex_slot: Vec<u32>,
    num_slots: usize,
    pub(crate) pairing: Vec<Option<u32>>,
    simplices: Vec<Simplex>,
    geometries: Vec<SimplexGeometry>,
    bounds: Option<Vec<DerivativeBounds>>,
}

fn permutations(d: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut cur: Vec<u8> = (0..d as u8).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (0..d.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            return out;
        };
        let j = (i + 1..d).rev().find(|&j| cur[j] > cur[i]).unwrap_or(i + 1);
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
}

/// Does `{u : 1 >= u_p0 >= .. >= u_pn >= 0}` meet the open box `lo < u < hi`?
fn chain_meets_open_box(perm: &[u8], lo: &[f64], hi: &[f64]) -> bool {
    let mut inf = 0.0;
    let mut strict = false;
    for &p in perm.iter().rev() {
        let i = p as usize;
        if lo[i] >= inf {
            inf = lo[i];
            strict = true;
        }
        if inf >= hi[i] {
            return false;
        }
    }
    if strict {
        inf < 1.0
    } else {
        inf <= 1.0
    }
}

/// Local coordinate in the Kuhn frame of a cell for lattice coordinate `p`
/// lying in cell `[c, c+1]`.
fn local_bounds(c: i64, reflected: bool, lo: f64, hi: f64) -> (f64, f64) {
    let c = c as f64;
    if reflected {
        (c + 1.0 - hi, c + 1.0 - lo)
    } else {
        (lo - c, hi - c)
    }
}

/// Lattice point of chain vertex `j` (0-based, `j = 0` is the base vertex).
fn chain_vertex(cell: &[i64], perm: &[u8], j: usize) -> Vec<i64> {
    let mut u = vec![0i64; cell.len()];
    for &p in &perm[..j] {
        u[p as usize] = 1;
    }
    cell.iter()
        .enumerate()
        .map(|(i, &c)| if i > 0 && c < 0 { c + 1 - u[i] } else { c + u[i] })
        .collect()
}

/// Builds the lattice complex of level `k` on `[0, period] x region`.
pub fn build_complex(
    region: &Region,
    period: f64,
    k: u32,
    scaling: &ScalingMatrix,
) -> Result<SimplicialComplex, TriangulationError> {
    let n = region.dim();
    if scaling.dim() != n {
        return Err(TriangulationError::InvalidInput(format!(
            "scaling has dimension {}, region {n}",
            scaling.dim()
        )));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(TriangulationError::InvalidInput(format!("period {period}")));
    }
    if k > 30 {
        return Err(TriangulationError::InvalidInput(format!("refinement level {k} too large")));
    }
    let d = n + 1;
    let slabs = 1i64 << k;
    let rho = period / slabs as f64;
    let s = scaling.diag();

    // region boxes in lattice units
    let lattice_boxes: Vec<Vec<(f64, f64)>> = region
        .boxes()
        .iter()
        .map(|b| {
            let mut lb = vec![(0.0, slabs as f64)];
            lb.extend(b.iter().enumerate().map(|(i, &(lo, hi))| {
                let u = rho * s[i + 1];
                (lo / u, hi / u)
            }));
            lb
        })
        .collect();

    let mut x_cells: BTreeSet<Vec<i64>> = BTreeSet::new();
    for b in &lattice_boxes {
        let ranges: Vec<(i64, i64)> = b[1..]
            .iter()
            .map(|&(lo, hi)| (lo.floor() as i64, hi.ceil() as i64 - 1))
            .collect();
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            x_cells.insert(cur.clone());
            for i in 0..n {
                if cur[i] < ranges[i].1 {
                    cur[i] += 1;
                    continue 'outer;
                }
                cur[i] = ranges[i].0;
            }
            break;
        }
    }

    let perms = permutations(d);
    let mut complex = SimplicialComplex {
        n,
        period: Some(period),
        lattice: None,
        coords: Vec::new(),
        vertex_slot: Vec::new(),
        num_slots: 0,
        pairing: Vec::new(),
        simplices: Vec::new(),
        geometries: Vec::new(),
        bounds: None,
    };
    let mut vertex_ids: HashMap<Vec<i64>, u32> = HashMap::new();
    let mut slot_ids: HashMap<Vec<i64>, u32> = HashMap::new();
    let mut geometry_ids: HashMap<(usize, u32), u32> = HashMap::new();
    let mut cells: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];

    for ti in 0..slabs {
        for xc in &x_cells {
            let mut cell = Vec::with_capacity(d);
            cell.push(ti);
            cell.extend_from_slice(xc);
            let mask: u32 = (1..d).filter(|&i| cell[i] < 0).fold(0, |m, i| m | (1 << i));
            for (pi, perm) in perms.iter().enumerate() {
                let meets = lattice_boxes.iter().any(|b| {
                    for i in 0..d {
                        (lo[i], hi[i]) = local_bounds(cell[i], mask & (1 << i) != 0, b[i].0, b[i].1);
                    }
                    chain_meets_open_box(perm, &lo, &hi)
                });
                if !meets {
                    continue;
                }
                let mut vids = Vec::with_capacity(d + 1);
                for j in 0..=d {
                    let p = chain_vertex(&cell, perm, j);
                    let next = vertex_ids.len() as u32;
                    let id = *vertex_ids.entry(p.clone()).or_insert_with(|| {
                        for i in 0..d {
                            complex.coords.push(p[i] as f64 * rho * s[i]);
                        }
                        let mut key = p.clone();
                        key[0] = key[0].rem_euclid(slabs);
                        let ns = slot_ids.len() as u32;
                        complex.vertex_slot.push(*slot_ids.entry(key).or_insert(ns));
                        next
                    });
                    vids.push(id);
                }
                let gkey = (pi, mask);
                let geometry = match geometry_ids.get(&gkey) {
                    Some(&g) => g,
                    None => {
                        let verts: Vec<&[f64]> =
                            vids.iter().map(|&v| complex.vertex(v as usize)).collect();
                        let g = simplex_geometry(&verts)?;
                        complex.geometries.push(g);
                        let id = complex.geometries.len() as u32 - 1;
                        geometry_ids.insert(gkey, id);
                        id
                    }
                };
                let sid = complex.simplices.len() as u32;
                cells.entry(cell.clone()).or_default().push(sid);
                complex.simplices.push(Simplex {
                    vertices: vids,
                    geometry,
                    generator: Some(Generator { cell: cell.clone(), perm: perm.clone() }),
                });
            }
        }
    }
    if complex.simplices.is_empty() {
        return Err(TriangulationError::EmptySelection);
    }
    complex.num_slots = slot_ids.len();

    // pair t = 0 with t = T vertices
    complex.pairing = vec![None; vertex_ids.len()];
    for (p, &id) in &vertex_ids {
        if p[0] == 0 || p[0] == slabs {
            let mut q = p.clone();
            q[0] = slabs - p[0];
            if let Some(&other) = vertex_ids.get(&q) {
                complex.pairing[id as usize] = Some(other);
            }
        }
    }

    complex.lattice = Some(Lattice {
        k,
        rho,
        scaling: scaling.clone(),
        region: region.clone(),
        cells,
        x_star: reference_x_star(n)?,
    });
    Ok(complex)
}

/// `max ||X^-1||_1` over the `2^n (n+1)!` reference simplices (unit cell,
/// identity scaling, every reflection).
pub fn reference_x_star(n: usize) -> Result<f64, TriangulationError> {
    let d = n + 1;
    let mut best: f64 = 0.0;
    for mask in 0..(1u32 << n) {
        let cell: Vec<i64> =
            (0..d).map(|i| if i > 0 && mask & (1 << (i - 1)) != 0 { -1 } else { 0 }).collect();
        for perm in permutations(d) {
            let pts: Vec<Vec<f64>> = (0..=d)
                .map(|j| chain_vertex(&cell, &perm, j).iter().map(|&v| v as f64).collect())
                .collect();
            let refs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
            best = best.max(simplex_geometry(&refs)?.inverse_one_norm);
        }
    }
    Ok(best)
}

impl SimplicialComplex {
    /// Complex from explicit vertices and simplices (no periodic
    /// identification; every vertex gets its own slot).
    pub fn from_simplices(
        coords: Vec<Vec<f64>>,
        simplices: Vec<Vec<usize>>,
    ) -> Result<Self, TriangulationError> {
        let d = coords.first().map(Vec::len).unwrap_or(0);
        if d < 2 || coords.iter().any(|c| c.len() != d) {
            return Err(TriangulationError::InvalidInput("vertex dimension".into()));
        }
        if simplices.is_empty() {
            return Err(TriangulationError::EmptySelection);
        }
        let mut complex = SimplicialComplex {
            n: d - 1,
            period: None,
            lattice: None,
            coords: coords.concat(),
            vertex_slot: (0..coords.len() as u32).collect(),
            num_slots: coords.len(),
            pairing: vec![None; coords.len()],
            simplices: Vec::new(),
            geometries: Vec::new(),
            bounds: None,
        };
        for s in simplices {
            if s.len() != d + 1 || s.iter().any(|&v| v >= coords.len()) {
                return Err(TriangulationError::InvalidInput(format!("simplex {s:?}")));
            }
            let verts: Vec<&[f64]> = s.iter().map(|&v| coords[v].as_slice()).collect();
            complex.geometries.push(simplex_geometry(&verts)?);
            complex.simplices.push(Simplex {
                vertices: s.iter().map(|&v| v as u32).collect(),
                geometry: complex.geometries.len() as u32 - 1,
                generator: None,
            });
        }
        Ok(complex)
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn level(&self) -> Option<u32> {
        self.lattice.as_ref().map(|l| l.k)
    }

    /// `rho = 2^-K T` for lattice complexes.
    pub fn rho(&self) -> Option<f64> {
        self.lattice.as_ref().map(|l| l.rho)
    }

    pub fn scaling(&self) -> Option<&ScalingMatrix> {
        self.lattice.as_ref().map(|l| &l.scaling)
    }

    pub fn region(&self) -> Option<&Region> {
        self.lattice.as_ref().map(|l| &l.region)
    }

    /// Reference constant bounding `||X^-1||_1 s* rho` for every simplex.
    pub fn x_star(&self) -> Option<f64> {
        self.lattice.as_ref().map(|l| l.x_star)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_slot.len()
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn num_simplices(&self) -> usize {
        self.simplices.len()
    }

    /// Coordinates `(t, x_1, .., x_n)` of a vertex (time unwrapped).
    pub fn vertex(&self, v: usize) -> &[f64] {
        let d = self.n + 1;
        &self.coords[v * d..(v + 1) * d]
    }

    pub fn slot(&self, v: usize) -> usize {
        self.vertex_slot[v] as usize
    }

    /// Vertex at the other end of the period, for vertices at `t = 0` or `t = T`.
    pub fn paired_vertex(&self, v: usize) -> Option<usize> {
        self.pairing[v].map(|p| p as usize)
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn simplex(&self, i: usize) -> &Simplex {
        &self.simplices[i]
    }

    pub fn geometry(&self, i: usize) -> &SimplexGeometry {
        &self.geometries[self.simplices[i].geometry as usize]
    }

    /// Slot ids of the vertices of simplex `i`, in vertex order.
    pub fn simplex_slots(&self, i: usize) -> Vec<usize> {
        self.simplices[i].vertices.iter().map(|&v| self.slot(v as usize)).collect()
    }

    pub fn bounding_box(&self, i: usize) -> PhaseBox {
        let d = self.n + 1;
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for &v in &self.simplices[i].vertices {
            for (k, &c) in self.vertex(v as usize).iter().enumerate() {
                b[k].0 = b[k].0.min(c);
                b[k].1 = b[k].1.max(c);
            }
        }
        PhaseBox::new(b)
    }

    /// Computes and caches `B_nu` (and `B_3,nu` for C3 systems) over each
    /// simplex's bounding box.
    pub fn attach_bounds(&mut self, sys: &SystemDefinition) -> Result<(), SystemError> {
        if sys.dim() != self.n {
            return Err(SystemError::DimensionMismatch(format!(
                "system dimension {} vs complex dimension {}",
                sys.dim(),
                self.n
            )));
        }
        let mut by_cell: HashMap<Vec<i64>, DerivativeBounds> = HashMap::new();
        let mut out = Vec::with_capacity(self.simplices.len());
        for i in 0..self.simplices.len() {
            let b = match &self.simplices[i].generator {
                Some(g) => match by_cell.get(&g.cell) {
                    Some(b) => *b,
                    None => {
                        let b = sys.derivative_bounds(&self.bounding_box(i))?;
                        by_cell.insert(g.cell.clone(), b);
                        b
                    }
                },
                None => sys.derivative_bounds(&self.bounding_box(i))?,
            };
            out.push(b);
        }
        self.bounds = Some(out);
        Ok(())
    }

    pub fn bounds(&self, i: usize) -> Option<DerivativeBounds> {
        self.bounds.as_ref().map(|b| b[i])
    }

    pub fn has_bounds(&self) -> bool {
        self.bounds.is_some()
    }

    /// Barycentric weights `(l_0, .., l_{n+1})` of `point` (already in the
    /// simplex's time frame) with respect to simplex `i`.
    pub fn barycentric_raw(&self, i: usize, point: &[f64]) -> Vec<f64> {
        let d = self.n + 1;
        let g = self.geometry(i);
        let v0 = self.vertex(self.simplices[i].vertices[0] as usize);
        let mut w = vec![0.0; d + 1];
        let mut rest = 0.0;
        for k in 0..d {
            let mut s = 0.0;
            for r in 0..d {
                s += g.inverse[r * d + k] * (point[r] - v0[r]);
            }
            w[k + 1] = s;
            rest += s;
        }
        w[0] = 1.0 - rest;
        w
    }

    /// Shift (multiple of `T`) that moves time `t` closest to the middle of
    /// simplex `i`.
    pub fn time_shift(&self, i: usize, t: f64) -> f64 {
        let Some(period) = self.period else {
            return 0.0;
        };
        let verts = &self.simplices[i].vertices;
        let mid = verts.iter().map(|&v| self.vertex(v as usize)[0]).sum::<f64>()
            / verts.len() as f64;
        ((mid - t) / period).round() * period
    }

    /// Every simplex containing `point`, with barycentric weights `>= -tol`.
    pub fn locate(&self, point: &[f64], tol: f64) -> Vec<Location> {
        let d = self.n + 1;
        let mut out = Vec::new();
        let Some(lat) = &self.lattice else {
            for i in 0..self.simplices.len() {
                let w = self.barycentric_raw(i, point);
                if w.iter().all(|&l| l >= -tol) {
                    out.push(Location { simplex: i, weights: w, time_shift: 0.0 });
                }
            }
            return out;
        };
        let period = self.period.unwrap_or(f64::INFINITY);
        let slabs = 1i64 << lat.k;
        let t0 = point[0].rem_euclid(period);
        let base_shift = t0 - point[0];
        let s = lat.scaling.diag();
        let mut choices: Vec<Vec<i64>> = Vec::with_capacity(d);
        for i in 0..d {
            let c = if i == 0 { t0 } else { point[i] };
            let q = c / (lat.rho * s[i]);
            let f = q.floor();
            let mut opts = vec![f as i64];
            if q - f <= 1e-9 {
                opts.push(f as i64 - 1);
            }
            if f + 1.0 - q <= 1e-9 {
                opts.push(f as i64 + 1);
            }
            choices.push(opts);
        }
        let mut seen: HashSet<(usize, i64)> = HashSet::new();
        let mut idx = vec![0usize; d];
        let mut shifted = point.to_vec();
        loop {
            let mut cell: Vec<i64> = (0..d).map(|i| choices[i][idx[i]]).collect();
            let wraps = cell[0].div_euclid(slabs);
            cell[0] = cell[0].rem_euclid(slabs);
            if let Some(list) = lat.cells.get(&cell) {
                let shift = base_shift - wraps as f64 * period;
                shifted[0] = point[0] + shift;
                for &sid in list {
                    let w = self.barycentric_raw(sid as usize, &shifted);
                    if w.iter().all(|&l| l >= -tol) && seen.insert((sid as usize, wraps)) {
                        out.push(Location { simplex: sid as usize, weights: w, time_shift: shift });
                    }
                }
            }
            let mut i = 0;
            loop {
                if i == d {
                    out.sort_by_key(|l| l.simplex);
                    return out;
                }
                idx[i] += 1;
                if idx[i] < choices[i].len() {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }

    /// Facets `(simplex, omitted local vertex)` that belong to exactly one
    /// simplex.
    pub fn boundary_facets(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        let key = |s: &Simplex, omit: usize| {
            let mut k: Vec<usize> = s
                .vertices
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != omit)
                .map(|(_, &v)| self.slot(v as usize))
                .collect();
            k.sort_unstable();
            k
        };
        for s in &self.simplices {
            for omit in 0..s.vertices.len() {
                *count.entry(key(s, omit)).or_default() += 1;
            }
        }
        let mut out = Vec::new();
        for (i, s) in self.simplices.iter().enumerate() {
            for omit in 0..s.vertices.len() {
                if count[&key(s, omit)] == 1 {
                    out.push((i, omit));
                }
            }
        }
        out
    }

    /// Candidate neighbours `(j, shift)` of simplex `i` with `j >= i`,
    /// where `shift` moves simplex `j` next to simplex `i` in time.
    fn neighbour_candidates(&self, i: usize) -> Vec<(usize, f64)> {
        let Some(lat) = &self.lattice else {
            return (i + 1..self.simplices.len()).map(|j| (j, 0.0)).collect();
        };
        let d = self.n + 1;
        let period = self.period.unwrap_or(0.0);
        let slabs = 1i64 << lat.k;
        let cell = &self.simplices[i].generator.as_ref().expect("lattice simplex").cell;
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let total = 3usize.pow(d as u32);
        for code in 0..total {
            let mut c = code;
            let mut nb = cell.clone();
            for v in nb.iter_mut() {
                *v += (c % 3) as i64 - 1;
                c /= 3;
            }
            let wraps = nb[0].div_euclid(slabs);
            nb[0] = nb[0].rem_euclid(slabs);
            let shift = wraps as f64 * period;
            if let Some(list) = lat.cells.get(&nb) {
                for &j in list {
                    let j = j as usize;
                    if (j > i || (j == i && wraps > 0)) && seen.insert((j, wraps)) {
                        out.push((j, shift));
                    }
                }
            }
        }
        out
    }
}

/// Findings of [`check_complex`]; empty lists mean the complex is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    /// Simplex pairs (with the time shift applied to the second) whose
    /// intersection is not a common face.
    pub face_violations: Vec<(usize, usize, f64)>,
    /// Vertices at `t = 0` or `t = T` without a partner at identical `x`.
    pub unpaired_vertices: Vec<usize>,
    /// Sampled region points not covered by any simplex.
    pub uncovered_points: Vec<Vec<f64>>,
    pub pairs_checked: usize,
    pub coverage_samples: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.face_violations.is_empty()
            && self.unpaired_vertices.is_empty()
            && self.uncovered_points.is_empty()
    }
}

fn same_point(a: &[f64], b: &[f64], shift: f64) -> bool {
    a.iter().zip(b).enumerate().all(|(k, (&x, &y))| {
        let y = if k == 0 { y + shift } else { y };
        (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()))
    })
}

/// Is the intersection of simplices `a` and `b + shift e_t` a common face?
fn common_face(c: &SimplicialComplex, a: usize, b: usize, shift: f64) -> bool {
    let d = c.n + 1;
    let va: Vec<&[f64]> = c.simplices[a].vertices.iter().map(|&v| c.vertex(v as usize)).collect();
    let vb: Vec<Vec<f64>> = c.simplices[b]
        .vertices
        .iter()
        .map(|&v| {
            let mut p = c.vertex(v as usize).to_vec();
            p[0] += shift;
            p
        })
        .collect();
    let mut shared_a = vec![false; d + 1];
    let mut shared_b = vec![false; d + 1];
    for i in 0..=d {
        for j in 0..=d {
            if !shared_b[j] && same_point(va[i], &vb[j], 0.0) {
                shared_a[i] = true;
                shared_b[j] = true;
                break;
            }
        }
    }
    let shared = shared_a.iter().filter(|&&s| s).count();
    if shared == d + 1 {
        return false;
    }
    // bounding boxes
    for k in 0..d {
        let (alo, ahi) = va.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, p| {
            (acc.0.min(p[k]), acc.1.max(p[k]))
        });
        let (blo, bhi) = vb.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, p| {
            (acc.0.min(p[k]), acc.1.max(p[k]))
        });
        let tol = 1e-9 * (1.0 + ahi.abs().max(bhi.abs()));
        if alo > bhi + tol || blo > ahi + tol {
            return true;
        }
    }
    let scale: Vec<f64> = (0..d)
        .map(|k| {
            let (lo, hi) = va.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, p| {
                (acc.0.min(p[k]), acc.1.max(p[k]))
            });
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();
    let origin = va[0].to_vec();
    let norm = |p: &[f64]| -> Vec<f64> { (0..d).map(|k| (p[k] - origin[k]) / scale[k]).collect() };
    let na: Vec<Vec<f64>> = va.iter().map(|p| norm(p)).collect();
    let nb: Vec<Vec<f64>> = vb.iter().map(|p| norm(p)).collect();

    if shared == d {
        // shared facet: the apexes must lie on opposite sides
        let facet: Vec<&Vec<f64>> = (0..=d).filter(|&i| shared_a[i]).map(|i| &na[i]).collect();
        let apex_a = &na[(0..=d).find(|&i| !shared_a[i]).unwrap_or(0)];
        let apex_b = &nb[(0..=d).find(|&j| !shared_b[j]).unwrap_or(0)];
        let orient = |apex: &Vec<f64>| {
            let mut m = Vec::with_capacity(d * d);
            for f in &facet[1..] {
                m.extend((0..d).map(|k| f[k] - facet[0][k]));
            }
            m.extend((0..d).map(|k| apex[k] - facet[0][k]));
            determinant(&m, d)
        };
        let (sa, sb) = (orient(apex_a), orient(apex_b));
        return sa * sb < 0.0 && sa.abs() > 1e-12 && sb.abs() > 1e-12;
    }

    // general case: maximise the weight on non-shared vertices over the
    // intersection
    let cols = 2 * (d + 1);
    let rows = d + 2;
    let mut a_mat = vec![0.0; rows * cols];
    let mut b_vec = vec![0.0; rows];
    for k in 0..d {
        for i in 0..=d {
            a_mat[k * cols + i] = na[i][k];
            a_mat[k * cols + d + 1 + i] = -nb[i][k];
        }
    }
    for i in 0..=d {
        a_mat[d * cols + i] = 1.0;
        a_mat[(d + 1) * cols + d + 1 + i] = 1.0;
    }
    b_vec[d] = 1.0;
    b_vec[d + 1] = 1.0;
    let cost: Vec<f64> = (0..=d)
        .map(|i| if shared_a[i] { 0.0 } else { 1.0 })
        .chain((0..=d).map(|j| if shared_b[j] { 0.0 } else { 1.0 }))
        .collect();
    match lp_maximize(&cost, &a_mat, &b_vec) {
        LpOutcome::Infeasible => true,
        LpOutcome::Optimal(v) => v <= 1e-7,
        LpOutcome::Unbounded => false,
    }
}

/// Structural validation: face-to-face property, periodic pairing, and
/// coverage of the region (sampled with `samples` seeded points).
pub fn check_complex(complex: &SimplicialComplex, samples: usize, seed: u64) -> ValidationReport {
    let mut report = ValidationReport::default();
    for i in 0..complex.simplices.len() {
        for (j, shift) in complex.neighbour_candidates(i) {
            report.pairs_checked += 1;
            if !common_face(complex, i, j, shift) {
                report.face_violations.push((i, j, shift));
            }
        }
    }
    if let Some(period) = complex.period {
        for v in 0..complex.num_vertices() {
            let t = complex.vertex(v)[0];
            if t != 0.0 && t != period {
                continue;
            }
            let ok = complex.paired_vertex(v).is_some_and(|p| {
                let (a, b) = (complex.vertex(v), complex.vertex(p));
                a[0] + b[0] == period
                    && a[0] != b[0]
                    && a[1..] == b[1..]
                    && complex.slot(v) == complex.slot(p)
            });
            if !ok {
                report.unpaired_vertices.push(v);
            }
        }
    }
    if let (Some(region), Some(period)) = (complex.region(), complex.period) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let b = &region.boxes()[rng.random_range(0..region.boxes().len())];
            let mut p = vec![rng.random_range(0.0..period)];
            p.extend(b.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)));
            if complex.locate(&p, 1e-9).is_empty() {
                report.uncovered_points.push(p);
            }
            report.coverage_samples += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_1d(k: u32) -> SimplicialComplex {
        build_complex(&Region::single(vec![(0.0, 1.0)]).unwrap(), 1.0, k, &ScalingMatrix::identity(1))
            .unwrap()
    }

    #[test]
    fn permutations_are_lexicographic() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
    }

    #[test]
    fn level_zero_unit_square() {
        let c = unit_1d(0);
        assert_eq!(c.num_simplices(), 2);
        assert_eq!(c.num_vertices(), 4);
        assert_eq!(c.num_slots(), 2);
        let find = |p: [f64; 2]| (0..4).find(|&v| c.vertex(v) == p).unwrap();
        assert_eq!(c.paired_vertex(find([0.0, 0.0])), Some(find([1.0, 0.0])));
        assert_eq!(c.paired_vertex(find([0.0, 1.0])), Some(find([1.0, 1.0])));
        assert!(check_complex(&c, 200, 1).is_valid());
    }

    #[test]
    fn level_one_unit_square() {
        let c = unit_1d(1);
        assert_eq!(c.rho(), Some(0.5));
        assert_eq!(c.num_simplices(), 8);
    }

    #[test]
    fn disconnected_region_is_rejected() {
        assert_eq!(
            Region::new(vec![vec![(0.0, 1.0)], vec![(3.0, 4.0)]]),
            Err(TriangulationError::DisconnectedRegion)
        );
        assert!(Region::new(vec![vec![(0.0, 1.0)], vec![(1.0, 4.0)]]).is_ok());
        // corner contact only
        assert_eq!(
            Region::new(vec![vec![(0.0, 1.0), (0.0, 1.0)], vec![(1.0, 2.0), (1.0, 2.0)]]),
            Err(TriangulationError::DisconnectedRegion)
        );
    }

    #[test]
    fn geometry_of_reference_triangle() {
        let g = simplex_geometry(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]).unwrap();
        assert_eq!(g.x, vec![1.0, 0.0, 1.0, 1.0]);
        assert_eq!(g.inverse, vec![1.0, 0.0, -1.0, 1.0]);
        assert_eq!(g.inverse_one_norm, 2.0);
        assert!((g.h - 2f64.sqrt()).abs() < 1e-15);
        let g = simplex_geometry(&[&[0.0, 0.0], &[0.5, 0.0], &[0.5, 0.5]]).unwrap();
        assert_eq!(g.inverse_one_norm, 4.0);
        assert!((g.h - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(matches!(
            simplex_geometry(&[&[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]]),
            Err(TriangulationError::SingularSimplex(_))
        ));
    }

    #[test]
    fn overlapping_hand_built_triangles_are_flagged() {
        // the second triangle shares vertex (0,0) and half of an edge
        let c = SimplicialComplex::from_simplices(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.0], vec![0.5, -1.0]],
            vec![vec![0, 1, 2], vec![0, 3, 4]],
        )
        .unwrap();
        let r = check_complex(&c, 0, 0);
        assert_eq!(r.face_violations.len(), 1);

        let ok = SimplicialComplex::from_simplices(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
            vec![vec![0, 1, 2], vec![0, 3, 2]],
        )
        .unwrap();
        assert!(check_complex(&ok, 0, 0).is_valid());
    }

    #[test]
    fn corrupted_pairing_is_reported() {
        let mut c = unit_1d(1);
        let v = (0..c.num_vertices()).find(|&v| c.vertex(v)[0] == 0.0).unwrap();
        c.pairing[v] = None;
        let r = check_complex(&c, 0, 0);
        assert_eq!(r.unpaired_vertices, vec![v]);
    }

    #[test]
    fn reflected_cells_mirror_the_pattern() {
        let c = build_complex(
            &Region::single(vec![(-1.0, 1.0)]).unwrap(),
            1.0,
            0,
            &ScalingMatrix::identity(1),
        )
        .unwrap();
        assert_eq!(c.num_simplices(), 4);
        // both cells have their diagonal through the lattice point (t, x) = (0, 0)
        for s in c.simplices() {
            let base = c.vertex(s.vertices[0] as usize);
            assert_eq!(base[1], 0.0, "{:?}", base);
        }
        assert!(check_complex(&c, 500, 3).is_valid());
    }

    #[test]
    fn locate_finds_interior_and_shared_points() {
        let c = unit_1d(1);
        let inside = c.locate(&[0.3, 0.1], 1e-12);
        assert_eq!(inside.len(), 1);
        let w = &inside[0].weights;
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // a vertex at t = 0 is also reached through the seam
        let at_seam = c.locate(&[0.0, 0.5], 1e-12);
        assert!(at_seam.iter().any(|l| l.time_shift == 1.0));
        assert!(at_seam.iter().any(|l| l.time_shift == 0.0));
    }

    #[test]
    fn chain_test_respects_strictness() {
        // identity chain u0 >= u1, box 0 < u0 < 1, 1 < u1 < 2 is empty
        assert!(!chain_meets_open_box(&[0, 1], &[0.0, 1.0], &[1.0, 2.0]));
        // the box touching only the top vertex u = (1, 1) from above
        assert!(!chain_meets_open_box(&[0, 1], &[1.0, 1.0], &[2.0, 2.0]));
        assert!(chain_meets_open_box(&[0, 1], &[0.5, -1.0], &[2.0, 0.1]));
        // u1 > u0 forced by the box: not in this simplex
        assert!(!chain_meets_open_box(&[0, 1], &[-1.0, 0.6], &[0.5, 2.0]));
        assert!(chain_meets_open_box(&[1, 0], &[-1.0, 0.6], &[0.5, 2.0]));
    }
}
