//! Dense linear algebra over the chain ring `Z/p^N`.
//!
//! Matrices act on column vectors. Submodules of `(Z/p^N)^n` are stored by
//! their Howell form, which is canonical: two submodules are equal exactly
//! when their Howell bases are.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::padic::Zpn;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ZMatrix {
    ring: Zpn,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl ZMatrix {
    pub fn zeros(ring: Zpn, rows: usize, cols: usize) -> Self {
        ZMatrix { ring, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(ring: Zpn, n: usize) -> Self {
        let mut m = Self::zeros(ring, n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn scalar(ring: Zpn, n: usize, c: u64) -> Self {
        let mut m = Self::zeros(ring, n, n);
        for i in 0..n {
            m.set(i, i, ring.from_u64(c));
        }
        m
    }

    pub fn from_i64_rows(ring: Zpn, rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        Self::from_i64_rows_with_cols(ring, rows, cols)
    }

    pub fn from_i64_rows_with_cols(ring: Zpn, rows: &[Vec<i64>], cols: usize) -> Self {
        let mut m = Self::zeros(ring, rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged matrix");
            for (j, x) in r.iter().enumerate() {
                m.set(i, j, ring.from_i64(*x));
            }
        }
        m
    }

    pub fn from_rows(ring: Zpn, rows: &[Vec<u64>], cols: usize) -> Self {
        let mut m = Self::zeros(ring, rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged matrix");
            for (j, x) in r.iter().enumerate() {
                m.set(i, j, ring.from_u64(*x));
            }
        }
        m
    }

    pub fn from_columns(ring: Zpn, rows: usize, cols: &[Vec<u64>]) -> Self {
        let mut m = Self::zeros(ring, rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), rows);
            for (i, x) in c.iter().enumerate() {
                m.set(i, j, ring.from_u64(*x));
            }
        }
        m
    }

    pub fn ring(&self) -> &Zpn {
        &self.ring
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> Vec<u64> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn column(&self, j: usize) -> Vec<u64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn row_vecs(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| *x == 0)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.ring, self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, rhs: &ZMatrix) -> ZMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let r = &self.ring;
        let mut out = Self::zeros(self.ring, self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    let idx = i * rhs.cols + j;
                    out.data[idx] = r.add(out.data[idx], r.mul(a, rhs.get(k, j)));
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(self.cols, v.len());
        let r = &self.ring;
        (0..self.rows)
            .map(|i| (0..self.cols).fold(0, |acc, j| r.add(acc, r.mul(self.get(i, j), v[j]))))
            .collect()
    }

    /// Row vector times matrix.
    pub fn vec_mul(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(self.rows, v.len());
        let r = &self.ring;
        let mut out = vec![0; self.cols];
        for (i, x) in v.iter().enumerate() {
            if *x == 0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o = r.add(*o, r.mul(*x, self.get(i, j)));
            }
        }
        out
    }

    pub fn add(&self, rhs: &ZMatrix) -> ZMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let r = &self.ring;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| r.add(*a, *b)).collect();
        ZMatrix { data, ..*self }
    }

    pub fn sub(&self, rhs: &ZMatrix) -> ZMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let r = &self.ring;
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| r.sub(*a, *b)).collect();
        ZMatrix { data, ..*self }
    }

    pub fn scale(&self, c: u64) -> ZMatrix {
        let r = &self.ring;
        let data = self.data.iter().map(|a| r.mul(*a, c)).collect();
        ZMatrix { data, ..*self }
    }

    pub fn pow(&self, e: u32) -> ZMatrix {
        assert!(self.is_square());
        let mut acc = Self::identity(self.ring, self.rows);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    /// Rows `[r0, r1)` and columns `[c0, c1)`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> ZMatrix {
        let mut m = Self::zeros(self.ring, r1 - r0, c1 - c0);
        for i in r0..r1 {
            for j in c0..c1 {
                m.set(i - r0, j - c0, self.get(i, j));
            }
        }
        m
    }

    pub fn vstack(&self, other: &ZMatrix) -> ZMatrix {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        ZMatrix { ring: self.ring, rows: self.rows + other.rows, cols: self.cols, data }
    }

    pub fn hstack(&self, other: &ZMatrix) -> ZMatrix {
        self.transpose().vstack(&other.transpose()).transpose()
    }

    /// Reduce into a ring of the same prime and lower precision.
    pub fn reduce_to(&self, ring: &Zpn) -> ZMatrix {
        ZMatrix {
            ring: *ring,
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| self.ring.reduce_into(*x, ring)).collect(),
        }
    }

    /// Entries as decimal strings, row-major.
    pub fn to_strings(&self) -> Vec<Vec<String>> {
        (0..self.rows).map(|i| self.row(i).iter().map(|x| x.to_string()).collect()).collect()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// `row[dst] += c·row[src]`
    fn add_row_multiple(&mut self, dst: usize, src: usize, c: u64) {
        if c == 0 {
            return;
        }
        let r = self.ring;
        for j in 0..self.cols {
            let v = r.add(self.get(dst, j), r.mul(c, self.get(src, j)));
            self.set(dst, j, v);
        }
    }

    /// `col[dst] += c·col[src]`
    fn add_col_multiple(&mut self, dst: usize, src: usize, c: u64) {
        if c == 0 {
            return;
        }
        let r = self.ring;
        for i in 0..self.rows {
            let v = r.add(self.get(i, dst), r.mul(c, self.get(i, src)));
            self.set(i, dst, v);
        }
    }

    fn scale_row(&mut self, i: usize, c: u64) {
        let r = self.ring;
        for j in 0..self.cols {
            let v = r.mul(self.get(i, j), c);
            self.set(i, j, v);
        }
    }

    fn scale_col(&mut self, j: usize, c: u64) {
        let r = self.ring;
        for i in 0..self.rows {
            let v = r.mul(self.get(i, j), c);
            self.set(i, j, v);
        }
    }

    /// Determinant via the Smith form (unit factors tracked).
    pub fn is_invertible(&self) -> bool {
        self.is_square() && snf(self).exponents().iter().all(|e| *e == 0)
    }

    /// Inverse of a square matrix with unit determinant.
    pub fn inverse(&self) -> Option<ZMatrix> {
        if !self.is_invertible() {
            return None;
        }
        let s = snf(self);
        // A = U^-1 D V^-1 with D = I
        Some(s.v.mul(&s.u))
    }
}

impl fmt::Display for ZMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| self.ring.centered(*x).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Smith normal form `U·A·V = D` together with `U^-1` and `V^-1`.
#[derive(Clone, Debug)]
pub struct Snf {
    pub u: ZMatrix,
    pub u_inv: ZMatrix,
    pub d: ZMatrix,
    pub v: ZMatrix,
    pub v_inv: ZMatrix,
}

impl Snf {
    /// Diagonal length `min(rows, cols)`.
    pub fn diag_len(&self) -> usize {
        self.d.rows.min(self.d.cols)
    }

    /// Valuations of the diagonal entries; zero entries report `N`.
    pub fn exponents(&self) -> Vec<u32> {
        (0..self.diag_len()).map(|k| self.d.ring.valuation(self.d.get(k, k))).collect()
    }
}

/// Diagonalize by minimal-valuation pivoting; ties go to the smallest row,
/// then the smallest column. The pivot is normalized to `p^e`, so the
/// diagonal is a divisor chain `p^e1 | p^e2 | …`.
pub fn snf(a: &ZMatrix) -> Snf {
    let ring = a.ring;
    let (m, n) = (a.rows, a.cols);
    let mut d = a.clone();
    let mut u = ZMatrix::identity(ring, m);
    let mut u_inv = ZMatrix::identity(ring, m);
    let mut v = ZMatrix::identity(ring, n);
    let mut v_inv = ZMatrix::identity(ring, n);
    for t in 0..m.min(n) {
        let mut best: Option<(u32, usize, usize)> = None;
        for i in t..m {
            for j in t..n {
                let x = d.get(i, j);
                if x == 0 {
                    continue;
                }
                let val = ring.valuation(x);
                if best.map_or(true, |(bv, _, _)| val < bv) {
                    best = Some((val, i, j));
                }
            }
        }
        let Some((e, pi, pj)) = best else { break };
        d.swap_rows(t, pi);
        u.swap_rows(t, pi);
        u_inv.swap_cols(t, pi);
        d.swap_cols(t, pj);
        v.swap_cols(t, pj);
        v_inv.swap_rows(t, pj);

        let pe = ring.p_pow(e);
        let w = d.get(t, t) / pe;
        let w_inv = ring.inv(w).expect("unit part");
        d.scale_row(t, w_inv);
        u.scale_row(t, w_inv);
        u_inv.scale_col(t, w);

        for i in t + 1..m {
            let x = d.get(i, t);
            if x == 0 {
                continue;
            }
            let q = x / pe;
            d.add_row_multiple(i, t, ring.neg(q));
            u.add_row_multiple(i, t, ring.neg(q));
            u_inv.add_col_multiple(t, i, q);
        }
        for j in t + 1..n {
            let x = d.get(t, j);
            if x == 0 {
                continue;
            }
            let q = x / pe;
            d.add_col_multiple(j, t, ring.neg(q));
            v.add_col_multiple(j, t, ring.neg(q));
            v_inv.add_row_multiple(t, j, q);
        }
    }
    Snf { u, u_inv, d, v, v_inv }
}

/// Some `X` with `A·X = B`, or `None` when the system has no solution over
/// `Z/p^N`. Free directions are set to zero, so the answer is deterministic.
pub fn solve(a: &ZMatrix, b: &ZMatrix) -> Option<ZMatrix> {
    assert_eq!(a.rows, b.rows, "solve: row mismatch");
    let ring = a.ring;
    let s = snf(a);
    let ub = s.u.mul(b);
    let exps = s.exponents();
    let mut y = ZMatrix::zeros(ring, a.cols, b.cols);
    for k in 0..a.rows {
        let e = exps.get(k).copied().unwrap_or(ring.n());
        for c in 0..b.cols {
            let t = ub.get(k, c);
            if t == 0 {
                continue;
            }
            if ring.valuation(t) < e {
                return None;
            }
            if e < ring.n() {
                y.set(k, c, t / ring.p_pow(e));
            }
        }
    }
    Some(s.v.mul(&y))
}

/// A submodule of `(Z/p^N)^n`, stored by its Howell basis (rows).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Submodule {
    ambient: usize,
    basis: ZMatrix,
}

/// Canonical Howell form of the row space of `a`.
pub fn howell(a: &ZMatrix) -> Submodule {
    let ring = a.ring;
    let n = a.cols;
    let mut rows: Vec<Vec<u64>> = a.row_vecs().into_iter().filter(|r| r.iter().any(|x| *x != 0)).collect();
    let mut done = 0;
    for c in 0..n {
        let mut best: Option<(u32, usize)> = None;
        for (k, r) in rows.iter().enumerate().skip(done) {
            if r[c] == 0 {
                continue;
            }
            let v = ring.valuation(r[c]);
            if best.map_or(true, |(bv, _)| v < bv) {
                best = Some((v, k));
            }
        }
        let Some((e, k)) = best else { continue };
        rows.swap(done, k);
        let pe = ring.p_pow(e);
        let w_inv = ring.inv(rows[done][c] / pe).expect("unit part");
        for x in rows[done].iter_mut() {
            *x = ring.mul(*x, w_inv);
        }
        let pivot = rows[done].clone();
        for r in rows.iter_mut().skip(done + 1) {
            if r[c] != 0 {
                let q = r[c] / pe;
                sub_multiple(&ring, r, &pivot, q);
            }
        }
        if e > 0 {
            let ann: Vec<u64> = pivot.iter().map(|x| ring.mul(*x, ring.p_pow(ring.n() - e))).collect();
            if ann.iter().any(|x| *x != 0) {
                rows.push(ann);
            }
        }
        for r in rows.iter_mut().take(done) {
            let q = r[c] / pe;
            sub_multiple(&ring, r, &pivot, q);
        }
        done += 1;
    }
    rows.truncate(done);
    debug_assert!(rows.iter().all(|r| r.iter().any(|x| *x != 0)));
    Submodule { ambient: n, basis: ZMatrix::from_rows(ring, &rows, n) }
}

fn sub_multiple(ring: &Zpn, r: &mut [u64], pivot: &[u64], q: u64) {
    if q == 0 {
        return;
    }
    for (x, y) in r.iter_mut().zip(pivot) {
        *x = ring.sub(*x, ring.mul(q, *y));
    }
}

/// `{x : A·x = 0}` in `(Z/p^N)^cols`, taken literally over `Z/p^N`.
pub fn kernel(a: &ZMatrix) -> Submodule {
    let ring = a.ring;
    let s = snf(a);
    let exps = s.exponents();
    let mut gens = Vec::new();
    for k in 0..a.cols {
        let e = exps.get(k).copied().unwrap_or(ring.n());
        let scale = ring.p_pow(ring.n() - e);
        if scale == 0 {
            continue;
        }
        gens.push(s.v.column(k).iter().map(|x| ring.mul(*x, scale)).collect::<Vec<_>>());
    }
    howell(&ZMatrix::from_rows(ring, &gens, a.cols))
}

/// The reduction mod `p^N` of the `Z_p`-kernel of a lift of `A`: spanned by
/// the columns of `V` whose Smith entry vanishes at this precision. Always a
/// free direct summand.
pub fn integral_kernel(a: &ZMatrix) -> FreeSummand {
    let ring = a.ring;
    let s = snf(a);
    let exps = s.exponents();
    let gens: Vec<Vec<u64>> = (0..a.cols)
        .filter(|k| exps.get(*k).map_or(true, |e| *e >= ring.n()))
        .map(|k| s.v.column(k))
        .collect();
    FreeSummand::new(&ZMatrix::from_rows(ring, &gens, a.cols)).expect("columns of V span a summand")
}

impl Submodule {
    pub fn zero(ring: Zpn, n: usize) -> Self {
        Submodule { ambient: n, basis: ZMatrix::zeros(ring, 0, n) }
    }

    pub fn full(ring: Zpn, n: usize) -> Self {
        howell(&ZMatrix::identity(ring, n))
    }

    /// Submodule generated by the rows of `gens`.
    pub fn generated_by(gens: &ZMatrix) -> Self {
        howell(gens)
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn ring(&self) -> &Zpn {
        &self.basis.ring
    }

    pub fn basis(&self) -> &ZMatrix {
        &self.basis
    }

    pub fn is_zero(&self) -> bool {
        self.basis.rows == 0
    }

    /// `log_p` of the cardinality.
    pub fn log_order(&self) -> u32 {
        let ring = self.ring();
        (0..self.basis.rows)
            .map(|i| {
                let row = self.basis.row(i);
                let pivot = row.iter().find(|x| **x != 0).copied().unwrap_or(0);
                ring.n() - ring.valuation(pivot)
            })
            .sum()
    }

    /// Canonical remainder of `v` modulo this submodule.
    pub fn reduce(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(v.len(), self.ambient);
        let ring = *self.ring();
        let mut out = v.to_vec();
        for i in 0..self.basis.rows {
            let row = self.basis.row(i);
            let c = row.iter().position(|x| *x != 0).expect("nonzero Howell row");
            let pe = row[c];
            let q = out[c] / pe;
            sub_multiple(&ring, &mut out, &row, q);
        }
        out
    }

    pub fn contains(&self, v: &[u64]) -> bool {
        self.reduce(v).iter().all(|x| *x == 0)
    }

    pub fn contains_submodule(&self, other: &Submodule) -> bool {
        (0..other.basis.rows).all(|i| self.contains(&other.basis.row(i)))
    }

    pub fn sum(&self, other: &Submodule) -> Submodule {
        howell(&self.basis.vstack(&other.basis))
    }

    pub fn intersect(&self, other: &Submodule) -> Submodule {
        let ring = *self.ring();
        let k = self.basis.rows;
        if k == 0 || other.basis.rows == 0 {
            return Submodule::zero(ring, self.ambient);
        }
        let stacked = self.basis.vstack(&other.basis);
        let left = kernel(&stacked.transpose());
        let gens: Vec<Vec<u64>> = (0..left.basis.rows)
            .map(|i| {
                let coeffs = &left.basis.row(i)[..k];
                self.basis.vec_mul(coeffs)
            })
            .collect();
        howell(&ZMatrix::from_rows(ring, &gens, self.ambient))
    }

    /// Image under the linear map `m` (acting on column vectors).
    pub fn map(&self, m: &ZMatrix) -> Submodule {
        assert_eq!(m.cols, self.ambient);
        howell(&self.basis.mul(&m.transpose()))
    }
}

/// Elementary divisors of a finite `Z/p^N`-module. Exponents `e < N` are
/// torsion summands `Z/p^e`; summands `Z/p^N` are counted in `free_rank`
/// ("free at this precision"), never certified as genuinely free.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DivisorProfile {
    pub torsion: Vec<u32>,
    pub free_rank: usize,
}

impl DivisorProfile {
    pub fn from_exponents(n: u32, exps: impl IntoIterator<Item = u32>) -> Self {
        let mut torsion = Vec::new();
        let mut free_rank = 0;
        for e in exps {
            if e >= n {
                free_rank += 1;
            } else if e > 0 {
                torsion.push(e);
            }
        }
        torsion.sort_unstable();
        DivisorProfile { torsion, free_rank }
    }

    pub fn is_empty(&self) -> bool {
        self.torsion.is_empty() && self.free_rank == 0
    }

    pub fn has_torsion(&self) -> bool {
        !self.torsion.is_empty()
    }

    /// All exponents, torsion first, with free summands reported as `n`.
    pub fn exponents(&self, n: u32) -> Vec<u32> {
        let mut v = self.torsion.clone();
        v.extend(std::iter::repeat(n).take(self.free_rank));
        v
    }
}

impl fmt::Display for DivisorProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tors: Vec<String> = self.torsion.iter().map(|e| format!("Z/p^{e}")).collect();
        write!(f, "free {} torsion [{}]", self.free_rank, tors.join(", "))
    }
}

/// Elementary divisors of `big / small`.
pub fn quotient_divisors(big: &Submodule, small: &Submodule) -> Result<DivisorProfile> {
    if big.ambient != small.ambient {
        return Err(Error::Dimension("submodules of different ambient modules".into()));
    }
    if !big.contains_submodule(small) {
        return Err(Error::Containment);
    }
    let ring = *big.ring();
    let g = big.basis.rows;
    if g == 0 {
        return Ok(DivisorProfile::default());
    }
    // relations c with c·G ∈ small: left kernel of [G; S], first g coordinates
    let stacked = big.basis.vstack(&small.basis);
    let left = kernel(&stacked.transpose());
    let rel: Vec<Vec<u64>> = (0..left.basis.rows).map(|i| left.basis.row(i)[..g].to_vec()).collect();
    let r = ZMatrix::from_rows(ring, &rel, g);
    let exps = snf(&r).exponents();
    let all = (0..g).map(|k| exps.get(k).copied().unwrap_or(ring.n()));
    Ok(DivisorProfile::from_exponents(ring.n(), all))
}

/// A free direct summand of `(Z/p^N)^n` with a coordinate system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreeSummand {
    basis: ZMatrix,
    // basis·V = [I 0]
    v: ZMatrix,
}

impl FreeSummand {
    /// From generating rows; fails unless they span a saturated submodule.
    pub fn new(gens: &ZMatrix) -> Result<Self> {
        let n = gens.ring.n();
        let s = snf(gens);
        let exps = s.exponents();
        if exps.iter().any(|e| *e > 0 && *e < n) {
            return Err(Error::NotSaturated(format!("Smith exponents {exps:?}")));
        }
        let k = exps.iter().filter(|e| **e == 0).count();
        let basis = s.v_inv.block(0, k, 0, gens.cols);
        Ok(FreeSummand { basis, v: s.v })
    }

    pub fn full(ring: Zpn, n: usize) -> Self {
        Self::new(&ZMatrix::identity(ring, n)).expect("identity is free")
    }

    pub fn rank(&self) -> usize {
        self.basis.rows
    }

    pub fn ambient(&self) -> usize {
        self.basis.cols
    }

    pub fn ring(&self) -> &Zpn {
        &self.basis.ring
    }

    /// Basis vectors as rows.
    pub fn basis(&self) -> &ZMatrix {
        &self.basis
    }

    /// The spanned submodule, in canonical form.
    pub fn submodule(&self) -> Submodule {
        howell(&self.basis)
    }

    /// Coordinates of `x` in the basis, or `None` when `x` lies outside.
    pub fn coords(&self, x: &[u64]) -> Option<Vec<u64>> {
        let k = self.rank();
        let y = self.v.vec_mul(x);
        if y[k..].iter().any(|c| *c != 0) {
            return None;
        }
        Some(y[..k].to_vec())
    }

    /// Coordinates of the component of `x` transverse to the summand, in a
    /// fixed complement.
    pub fn transverse(&self, x: &[u64]) -> Vec<u64> {
        self.v.vec_mul(x)[self.rank()..].to_vec()
    }

    pub fn combine(&self, coords: &[u64]) -> Vec<u64> {
        self.basis.vec_mul(coords)
    }

    pub fn reduce_to(&self, ring: &Zpn) -> Result<FreeSummand> {
        FreeSummand::new(&self.basis.reduce_to(ring))
    }

    /// `self / sub`, which must again be free.
    pub fn quotient(&self, sub: &FreeSummand) -> Result<FreeQuotient> {
        let ring = *self.ring();
        let k = sub.rank();
        let mut rows = Vec::with_capacity(k);
        for i in 0..k {
            let c = self.coords(&sub.basis.row(i)).ok_or(Error::Containment)?;
            rows.push(c);
        }
        let c = ZMatrix::from_rows(ring, &rows, self.rank());
        let s = snf(&c);
        let exps = s.exponents();
        if exps.iter().any(|e| *e > 0) || exps.len() < k {
            return Err(Error::NotSaturated(format!("quotient has torsion, Smith exponents {exps:?}")));
        }
        let lifts_in_big = s.v_inv.block(k, self.rank(), 0, self.rank());
        let lifts = lifts_in_big.mul(&self.basis);
        Ok(FreeQuotient { big: self.clone(), sub_rank: k, v: s.v, lifts })
    }
}

/// The free quotient `L / K` of two free summands.
#[derive(Clone, Debug)]
pub struct FreeQuotient {
    big: FreeSummand,
    sub_rank: usize,
    v: ZMatrix,
    lifts: ZMatrix,
}

impl FreeQuotient {
    pub fn rank(&self) -> usize {
        self.lifts.rows
    }

    pub fn big(&self) -> &FreeSummand {
        &self.big
    }

    /// Lifts of the quotient basis, as ambient row vectors.
    pub fn lifts(&self) -> &ZMatrix {
        &self.lifts
    }

    /// Quotient coordinates of an ambient vector of `L`.
    pub fn project(&self, x: &[u64]) -> Option<Vec<u64>> {
        let c = self.big.coords(x)?;
        Some(self.project_coords(&c))
    }

    /// Quotient coordinates from coordinates in `L`.
    pub fn project_coords(&self, c: &[u64]) -> Vec<u64> {
        self.v.vec_mul(c)[self.sub_rank..].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(p: u64, n: u32) -> Zpn {
        Zpn::new(p, n).unwrap()
    }

    fn m(ring: Zpn, rows: &[&[i64]]) -> ZMatrix {
        let v: Vec<Vec<i64>> = rows.iter().map(|r| r.to_vec()).collect();
        ZMatrix::from_i64_rows(ring, &v)
    }

    fn check_snf(a: &ZMatrix) -> Snf {
        let s = snf(a);
        assert_eq!(s.u.mul(a).mul(&s.v), s.d);
        assert_eq!(s.u.mul(&s.u_inv), ZMatrix::identity(*a.ring(), a.rows()));
        assert_eq!(s.v.mul(&s.v_inv), ZMatrix::identity(*a.ring(), a.cols()));
        s
    }

    #[test]
    fn snf_examples() {
        let r = z(3, 2);
        let s = check_snf(&m(r, &[&[3, 0], &[0, 1]]));
        assert_eq!(s.d, m(r, &[&[1, 0], &[0, 3]]));
        let s = check_snf(&m(r, &[&[3, 3], &[3, 3]]));
        assert_eq!(s.d, m(r, &[&[3, 0], &[0, 0]]));
        let s = check_snf(&m(r, &[&[0]]));
        assert_eq!(s.d, m(r, &[&[0]]));
    }

    #[test]
    fn kernel_examples() {
        let r = z(3, 2);
        let k = kernel(&m(r, &[&[3]]));
        assert_eq!(k.basis(), &m(r, &[&[3]]));
        let k = kernel(&m(r, &[&[1, 0], &[0, 3]]));
        assert_eq!(k.basis(), &m(r, &[&[0, 3]]));
        assert!(kernel(&ZMatrix::identity(r, 3)).is_zero());
    }

    #[test]
    fn integral_kernel_drops_spurious_torsion() {
        let r = z(3, 4);
        assert_eq!(integral_kernel(&m(r, &[&[3]])).rank(), 0);
        let k = integral_kernel(&m(r, &[&[1, 1]]));
        assert_eq!(k.rank(), 1);
        assert!(k.coords(&[1, r.from_i64(-1)]).is_some());
    }

    #[test]
    fn howell_examples() {
        let r = z(3, 2);
        assert_eq!(howell(&ZMatrix::identity(r, 2)), Submodule::full(r, 2));
        let h = howell(&m(r, &[&[3, 0], &[6, 0]]));
        assert_eq!(h.basis(), &m(r, &[&[3, 0]]));
        assert!(howell(&ZMatrix::zeros(r, 0, 2)).is_zero());
    }

    #[test]
    fn howell_property_closes_annihilators() {
        // (3, 1) has 3·(3,1) = (0, 3); the Howell basis must expose it.
        let r = z(3, 2);
        let h = howell(&m(r, &[&[3, 1]]));
        assert!(h.contains(&[0, 3]));
        assert_eq!(h.basis().rows(), 2);
    }

    #[test]
    fn quotient_divisor_examples() {
        let r = z(3, 2);
        let full = Submodule::full(r, 2);
        let small = howell(&m(r, &[&[3, 0]]));
        assert_eq!(
            quotient_divisors(&full, &small).unwrap(),
            DivisorProfile { torsion: vec![1], free_rank: 1 }
        );
        assert!(quotient_divisors(&full, &full).unwrap().is_empty());
        assert_eq!(
            quotient_divisors(&full, &Submodule::zero(r, 2)).unwrap(),
            DivisorProfile { torsion: vec![], free_rank: 2 }
        );
        assert_eq!(quotient_divisors(&small, &full), Err(Error::Containment));
    }

    #[test]
    fn intersection_of_coordinate_lines() {
        let r = z(5, 3);
        let a = howell(&m(r, &[&[1, 1, 0]]));
        let b = howell(&m(r, &[&[5, 5, 0], &[0, 0, 1]]));
        assert_eq!(a.intersect(&b), howell(&m(r, &[&[5, 5, 0]])));
    }

    #[test]
    fn free_quotient_coordinates() {
        let r = z(3, 3);
        let big = FreeSummand::full(r, 3);
        let sub = FreeSummand::new(&m(r, &[&[1, 2, 0]])).unwrap();
        let q = big.quotient(&sub).unwrap();
        assert_eq!(q.rank(), 2);
        assert_eq!(q.project(&[1, 2, 0]).unwrap(), vec![0, 0]);
        for i in 0..2 {
            let mut e = vec![0; 2];
            e[i] = 1;
            assert_eq!(q.project(&q.lifts().row(i)).unwrap(), e);
        }
        let bad = FreeSummand::new(&m(r, &[&[1, 0, 0]])).unwrap();
        let nonsat = howell(&m(r, &[&[3, 0, 0]]));
        assert!(FreeSummand::new(nonsat.basis()).is_err());
        assert!(big.quotient(&bad).is_ok());
    }

    #[test]
    fn solve_examples() {
        let r = z(3, 2);
        let a = m(r, &[&[3, 0], &[0, 1]]);
        let x = solve(&a, &m(r, &[&[6], &[4]])).unwrap();
        assert_eq!(a.mul(&x), m(r, &[&[6], &[4]]));
        assert!(solve(&a, &m(r, &[&[1], &[0]])).is_none());
    }

    #[test]
    fn inverse_roundtrip() {
        let r = z(5, 4);
        let a = m(r, &[&[1, 5], &[2, 1]]);
        let inv = a.inverse().unwrap();
        assert_eq!(a.mul(&inv), ZMatrix::identity(r, 2));
        assert!(m(r, &[&[5, 0], &[0, 1]]).inverse().is_none());
    }
}
