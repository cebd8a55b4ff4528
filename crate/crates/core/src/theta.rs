//! Filtered `Θ`-modules: finite increasing filtrations of free modules with
//! an endomorphism acting as `-i` on the `i`-th graded piece, and the
//! splitting procedure that decomposes them.
//!
//! Vectors are columns. For each index `i`, `ι_i: Fil_{i-1} → Fil_i` is an
//! `n_i × n_{i-1}` matrix and `Θ_i` an `n_i × n_i` matrix.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{howell, kernel, snf, solve, DivisorProfile, ZMatrix};
use crate::padic::Zpn;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThetaLayer {
    pub iota: ZMatrix,
    pub theta: ZMatrix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilteredThetaModule {
    ring: Zpn,
    lo: i64,
    layers: Vec<ThetaLayer>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Dimension,
    NotInjective,
    NotEquivariant,
    WrongGradedAction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub index: i64,
    pub kind: ViolationKind,
    pub detail: String,
}

/// `gr_i = Fil_i / ι(Fil_{i-1})` in Smith coordinates `y = U·x`: component
/// `k` is `Z/p^{exps[k]}` (exponent `N` means free at this precision).
#[derive(Clone, Debug)]
pub struct GradedPiece {
    pub u: ZMatrix,
    pub u_inv: ZMatrix,
    pub exps: Vec<u32>,
}

impl GradedPiece {
    /// Components that survive in the quotient.
    pub fn generators(&self) -> Vec<usize> {
        (0..self.exps.len()).filter(|k| self.exps[*k] > 0).collect()
    }

    pub fn profile(&self, n: u32) -> DivisorProfile {
        DivisorProfile::from_exponents(n, self.exps.iter().copied())
    }

    /// Image of a vector of `Fil_i` in `gr_i`, generator components only.
    pub fn project(&self, ring: &Zpn, x: &[u64]) -> Vec<u64> {
        let y = self.u.mul_vec(x);
        self.generators()
            .into_iter()
            .map(|k| if self.exps[k] >= ring.n() { y[k] } else { y[k] % ring.p_pow(self.exps[k]) })
            .collect()
    }
}

/// A section `s: gr_i → Fil_i`; column `k` is the image of the `k`-th
/// generator of `gr_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Section {
    pub index: i64,
    pub matrix: ZMatrix,
}

/// The correction could not be completed; `layer` is the first `j < i` met
/// in descending order where `p | i - j` and `gr_j ≠ 0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obstruction {
    pub index: i64,
    pub layer: i64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Split {
    Section(Section),
    Obstruction(Obstruction),
}

impl Split {
    pub fn section(&self) -> Option<&Section> {
        match self {
            Split::Section(s) => Some(s),
            Split::Obstruction(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropVerdict {
    pub pass: bool,
    pub offending: Vec<i64>,
    pub torsion: Vec<i64>,
    pub ht: BTreeMap<i64, usize>,
    pub profiles: BTreeMap<i64, DivisorProfile>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summand {
    pub index: i64,
    /// Spanning vectors in the coordinates of the top layer.
    pub vectors: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub summands: Vec<Summand>,
    pub skipped: Vec<i64>,
}

impl FilteredThetaModule {
    /// `layers[k]` is the layer of index `lo + k`; the first `ι` must have
    /// zero columns.
    pub fn new(ring: Zpn, lo: i64, layers: Vec<ThetaLayer>) -> Result<Self> {
        let mut prev = 0;
        for (k, l) in layers.iter().enumerate() {
            let n = l.theta.rows();
            if !l.theta.is_square() || l.iota.rows() != n || l.iota.cols() != prev {
                return Err(Error::Dimension(format!(
                    "layer {}: Θ is {}×{}, ι is {}×{} after rank {prev}",
                    lo + k as i64,
                    l.theta.rows(),
                    l.theta.cols(),
                    l.iota.rows(),
                    l.iota.cols()
                )));
            }
            if l.theta.ring() != &ring || l.iota.ring() != &ring {
                return Err(Error::Dimension("matrices over different rings".into()));
            }
            prev = n;
        }
        Ok(FilteredThetaModule { ring, lo, layers })
    }

    pub fn ring(&self) -> &Zpn {
        &self.ring
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.layers.len() as i64 - 1
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi()
    }

    pub fn layer(&self, i: i64) -> &ThetaLayer {
        &self.layers[(i - self.lo) as usize]
    }

    pub fn layers(&self) -> &[ThetaLayer] {
        &self.layers
    }

    pub fn rank(&self, i: i64) -> usize {
        if i < self.lo || i > self.hi() {
            return 0;
        }
        self.layer(i).theta.rows()
    }

    fn check_index(&self, i: i64) -> Result<()> {
        if i < self.lo || i > self.hi() {
            return Err(Error::Precondition(format!("index {i} outside [{}, {}]", self.lo, self.hi())));
        }
        Ok(())
    }

    /// `Θ_i + i`.
    pub fn shifted_theta(&self, i: i64, shift: i64) -> ZMatrix {
        let l = self.layer(i);
        l.theta.add(&ZMatrix::scalar(self.ring, l.theta.rows(), self.ring.from_i64(shift)))
    }

    /// Composite `Fil_j → Fil_i` for `j ≤ i`.
    pub fn inclusion(&self, j: i64, i: i64) -> ZMatrix {
        let mut m = ZMatrix::identity(self.ring, self.rank(j));
        for t in j + 1..=i {
            m = self.layer(t).iota.mul(&m);
        }
        m
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.ring.n();
        for i in self.indices() {
            let l = self.layer(i);
            let s = snf(&l.iota);
            if s.exponents().len() < l.iota.cols() || s.exponents().iter().any(|e| *e >= n) {
                out.push(Violation {
                    index: i,
                    kind: ViolationKind::NotInjective,
                    detail: format!("ι has Smith exponents {:?}", s.exponents()),
                });
            }
            if i > self.lo {
                let lhs = l.theta.mul(&l.iota);
                let rhs = l.iota.mul(&self.layer(i - 1).theta);
                if lhs != rhs {
                    out.push(Violation {
                        index: i,
                        kind: ViolationKind::NotEquivariant,
                        detail: "Θ_i·ι_i ≠ ι_i·Θ_{i-1}".into(),
                    });
                }
            }
            let image = howell(&l.iota.transpose());
            let shifted = self.shifted_theta(i, i);
            if (0..shifted.cols()).any(|c| !image.contains(&shifted.column(c))) {
                out.push(Violation {
                    index: i,
                    kind: ViolationKind::WrongGradedAction,
                    detail: format!("Θ does not act as {} on gr_{i}", -i),
                });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn graded(&self, i: i64) -> GradedPiece {
        let l = self.layer(i);
        let s = snf(&l.iota);
        let d = s.exponents();
        let n = self.ring.n();
        let exps = (0..l.theta.rows()).map(|k| d.get(k).copied().unwrap_or(n)).collect();
        GradedPiece { u: s.u, u_inv: s.u_inv, exps }
    }

    pub fn profile(&self, i: i64) -> DivisorProfile {
        self.graded(i).profile(self.ring.n())
    }

    /// The scalar `i - j` by which `ad Θ` acts on `Hom(gr_i, gr_j)`, and
    /// whether it is a unit.
    pub fn ad_theta(&self, i: i64, j: i64) -> Result<(i64, bool)> {
        if j >= i {
            return Err(Error::Precondition(format!("ad_theta needs j < i, got ({i}, {j})")));
        }
        self.check_index(i)?;
        self.check_index(j)?;
        let d = i - j;
        Ok((d, d % self.ring.p() as i64 != 0))
    }

    fn blocking_layer(&self, i: i64) -> i64 {
        let p = self.ring.p() as i64;
        (self.lo..i)
            .rev()
            .find(|j| (i - j) % p == 0 && !self.profile(*j).is_empty())
            .unwrap_or(self.lo.min(i - 1))
    }

    /// The standard lift `σ` of the generators of `gr_i`.
    pub fn standard_lift(&self, i: i64) -> ZMatrix {
        let g = self.graded(i);
        let cols: Vec<Vec<u64>> = g.generators().into_iter().map(|k| g.u_inv.column(k)).collect();
        ZMatrix::from_columns(self.ring, self.rank(i), &cols)
    }

    pub fn split_layer(&self, i: i64) -> Result<Split> {
        let z = ZMatrix::zeros(self.ring, self.rank(i - 1), self.standard_lift_width(i)?);
        self.split_layer_from(i, &z)
    }

    fn standard_lift_width(&self, i: i64) -> Result<usize> {
        self.check_index(i)?;
        Ok(self.graded(i).generators().len())
    }

    /// Split starting from the lift `σ + ι·z` instead of `σ`.
    pub fn split_layer_from(&self, i: i64, z: &ZMatrix) -> Result<Split> {
        self.check_index(i)?;
        let violations = self.validate();
        if let Some(v) = violations.first() {
            return Err(Error::Precondition(format!("invalid module at index {}: {}", v.index, v.detail)));
        }
        let n = self.ring.n();
        let g = self.graded(i);
        if g.exps.iter().any(|e| *e > 0 && *e < n) {
            return Ok(Split::Obstruction(Obstruction {
                index: i,
                layer: self.blocking_layer(i),
                reason: format!("gr_{i} has torsion {}; it admits no section into a free module", g.profile(n)),
            }));
        }
        let mut sigma = self.standard_lift(i);
        if i == self.lo || self.rank(i - 1) == 0 {
            return Ok(Split::Section(Section { index: i, matrix: sigma }));
        }
        let iota = &self.layer(i).iota;
        sigma = sigma.add(&iota.mul(z));
        let shifted = self.shifted_theta(i, i);
        let defect = shifted.mul(&sigma);
        // descending dévissage: every gap i - j that meets a nonzero gr_j is
        // a unit, so the correction exists layer by layer; otherwise the
        // literal system decides
        let system = shifted.mul(iota);
        match solve(&system, &defect.scale(self.ring.neg(1))) {
            Some(x) => Ok(Split::Section(Section { index: i, matrix: sigma.add(&iota.mul(&x)) })),
            None => Ok(Split::Obstruction(Obstruction {
                index: i,
                layer: self.blocking_layer(i),
                reason: "the defect (Θ+i)σ is not killed by any correction through Fil_{i-1}".into(),
            })),
        }
    }

    /// `π∘s = id` and `Θ∘s + i·s = 0`, exactly.
    pub fn verify_section(&self, s: &Section) -> bool {
        let i = s.index;
        let g = self.graded(i);
        let gens = g.generators();
        if s.matrix.rows() != self.rank(i) || s.matrix.cols() != gens.len() {
            return false;
        }
        if !self.shifted_theta(i, i).mul(&s.matrix).is_zero() {
            return false;
        }
        let y = g.u.mul(&s.matrix);
        gens.iter().enumerate().all(|(c, _)| {
            gens.iter().enumerate().all(|(r, k)| {
                let modulus = self.ring.p_pow(g.exps[*k]);
                let want = u64::from(r == c);
                let got = y.get(*k, c);
                if g.exps[*k] >= self.ring.n() {
                    got == want
                } else {
                    (got % modulus) == want % modulus
                }
            })
        })
    }

    /// Whether every `Θ`-equivariant map `gr_i → Fil_{i-1}` vanishes. Torsion
    /// generators map to zero in a free module; a free generator may go to
    /// any `ι(w)` with `(Θ_i + i)·ι(w) = 0`.
    pub fn hom_vanish(&self, i: i64) -> Result<bool> {
        self.check_index(i)?;
        let n = self.ring.n();
        let g = self.graded(i);
        if !g.exps.iter().any(|e| *e >= n) || i == self.lo || self.rank(i - 1) == 0 {
            return Ok(true);
        }
        let iota = &self.layer(i).iota;
        let h = kernel(&self.shifted_theta(i, i).mul(iota));
        Ok(h.map(iota).is_zero())
    }

    pub fn check_prop(&self) -> PropVerdict {
        let p = self.ring.p() as i64;
        let profiles: BTreeMap<i64, DivisorProfile> = self.indices().map(|i| (i, self.profile(i))).collect();
        let ht: BTreeMap<i64, usize> =
            profiles.iter().filter(|(_, d)| d.free_rank > 0).map(|(i, d)| (*i, d.free_rank)).collect();
        let torsion: Vec<i64> = profiles.iter().filter(|(_, d)| d.has_torsion()).map(|(i, _)| *i).collect();
        let offending: Vec<i64> = torsion
            .iter()
            .copied()
            .filter(|i| !ht.keys().any(|r| i > r && (i - r) % p == 0))
            .collect();
        PropVerdict { pass: offending.is_empty(), offending, torsion, ht, profiles }
    }

    /// Split every layer from the bottom up; layers that cannot be split are
    /// reported and skipped.
    pub fn decompose(&self) -> Result<Decomposition> {
        let top = self.hi();
        let mut summands = Vec::new();
        let mut skipped = Vec::new();
        for i in self.indices() {
            if self.graded(i).generators().is_empty() {
                continue;
            }
            match self.split_layer(i)? {
                Split::Section(s) => {
                    let up = self.inclusion(i, top).mul(&s.matrix);
                    let vectors = (0..up.cols()).map(|c| up.column(c)).collect();
                    summands.push(Summand { index: i, vectors });
                }
                Split::Obstruction(_) => skipped.push(i),
            }
        }
        Ok(Decomposition { summands, skipped })
    }

    /// Apply `x ↦ P_i·x` on every layer.
    pub fn change_basis(&self, ps: &[(ZMatrix, ZMatrix)]) -> Result<Self> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            let (p, p_inv) = &ps[k];
            let iota = if k == 0 { p.mul(&l.iota) } else { p.mul(&l.iota).mul(&ps[k - 1].1) };
            layers.push(ThetaLayer { iota, theta: p.mul(&l.theta).mul(p_inv) });
        }
        Self::new(self.ring, self.lo, layers)
    }

    pub fn reduce_to(&self, ring: &Zpn) -> Result<Self> {
        let layers = self
            .layers
            .iter()
            .map(|l| ThetaLayer { iota: l.iota.reduce_to(ring), theta: l.theta.reduce_to(ring) })
            .collect();
        Self::new(*ring, self.lo, layers)
    }
}

/// A random invertible matrix: lower unitriangular times upper triangular
/// with unit diagonal.
pub fn random_unimodular<R: Rng>(ring: &Zpn, n: usize, rng: &mut R) -> (ZMatrix, ZMatrix) {
    let m = ring.modulus();
    let mut lower = ZMatrix::identity(*ring, n);
    let mut upper = ZMatrix::identity(*ring, n);
    for i in 0..n {
        for j in 0..n {
            if i > j {
                lower.set(i, j, rng.gen_range(0..m));
            } else if i < j {
                upper.set(i, j, rng.gen_range(0..m));
            } else {
                let mut w = rng.gen_range(1..m);
                while !ring.is_unit(w) {
                    w = rng.gen_range(1..m);
                }
                upper.set(i, i, w);
            }
        }
    }
    let a = lower.mul(&upper);
    let inv = a.inverse().expect("unit determinant");
    (a, inv)
}

/// Parameters for [`random_ftm`].
#[derive(Clone, Copy, Debug)]
pub struct RandomFtmParams {
    pub max_rank: usize,
    pub window: usize,
    pub max_drop: u32,
    pub base_change: bool,
}

/// A random valid filtered `Θ`-module. Inside a top lattice with basis
/// `e_k` of weight `w_k`, `Fil_i` is spanned by `p^{a_{k,i}}·e_k` for
/// `w_k ≤ i`, where the exponent may only drop by `v_p(i - w_k)` from one
/// index to the next. `Θ = -diag(w) + C` with `C_{kl}` supported on
/// `w_k < w_l` and divisible enough to preserve every layer. Random
/// unimodular base changes then hide the diagonal shape.
pub fn random_ftm<R: Rng>(ring: &Zpn, lo: i64, params: RandomFtmParams, rng: &mut R) -> FilteredThetaModule {
    let p = ring.p() as i64;
    let n = rng.gen_range(1..=params.max_rank);
    let len = rng.gen_range(1..=params.window);
    let hi = lo + len as i64 - 1;
    let mut w: Vec<i64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    w.sort_unstable();
    let vp = |x: i64| -> u32 {
        let mut x = x.abs();
        let mut v = 0;
        while x != 0 && x % p == 0 {
            x /= p;
            v += 1;
        }
        v
    };
    // a[k][i - lo], meaningful for i >= w_k; a[k][hi] = 0
    let mut a = vec![vec![0u32; len]; n];
    for k in 0..n {
        for i in (w[k]..hi).rev() {
            let t = (i - lo) as usize;
            let next = a[k][t + 1];
            let room = vp(i + 1 - w[k]).min(params.max_drop);
            a[k][t] = next + rng.gen_range(0..=room);
        }
    }
    // coupling C_kl = p^need · r, kept split so layer entries stay exact
    let mut coupling: Vec<(usize, usize, u32, u64)> = Vec::new();
    for l in 0..n {
        for k in 0..n {
            if w[k] < w[l] {
                let need: u32 = (w[l]..=hi)
                    .map(|i| {
                        let t = (i - lo) as usize;
                        a[k][t - 1].saturating_sub(a[l][t])
                    })
                    .max()
                    .unwrap_or(0);
                coupling.push((k, l, need, rng.gen_range(0..ring.modulus())));
            }
        }
    }
    let members = |i: i64| -> Vec<usize> { (0..n).filter(|k| w[*k] <= i).collect() };
    let mut layers = Vec::with_capacity(len);
    for i in lo..=hi {
        let t = (i - lo) as usize;
        let cur = members(i);
        let prev = members(i - 1);
        let mut iota = ZMatrix::zeros(*ring, cur.len(), prev.len());
        for (c, k) in prev.iter().enumerate() {
            let r = cur.iter().position(|x| x == k).unwrap();
            iota.set(r, c, ring.p_pow(a[*k][t - 1] - a[*k][t]));
        }
        let pos = |k: usize| cur.iter().position(|x| *x == k);
        let mut theta = ZMatrix::zeros(*ring, cur.len(), cur.len());
        for (cl, l) in cur.iter().enumerate() {
            theta.set(cl, cl, ring.from_i64(-w[*l]));
        }
        for (k, l, need, r) in &coupling {
            let (Some(rk), Some(cl)) = (pos(*k), pos(*l)) else { continue };
            // Θ(p^{a_l} e_l) has e_k-coefficient C·p^{a_l}, i.e. C·p^{a_l - a_k} on g_k
            let e = need + a[*l][t] - a[*k][t];
            theta.set(rk, cl, ring.mul(ring.p_pow(e), *r));
        }
        layers.push(ThetaLayer { iota, theta });
    }
    let ftm = FilteredThetaModule::new(*ring, lo, layers).expect("consistent dimensions");
    if !params.base_change {
        return ftm;
    }
    let ps: Vec<(ZMatrix, ZMatrix)> = ftm.indices().map(|i| random_unimodular(ring, ftm.rank(i), rng)).collect();
    ftm.change_basis(&ps).expect("consistent dimensions")
}
