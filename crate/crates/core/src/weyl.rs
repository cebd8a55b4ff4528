//! Graded modules over `Z{u, D}/(Du - uD - 1)` with `deg u = -1` and
//! `deg D = +1`, the Rees dictionary with filtered modules, and the Sen
//! operator `Θ = uD - i`.
//!
//! Components `M^n` are free `Z/p^N`-modules stored on a window `[lo, hi]`.
//! Above `hi` the module is zero; below `lo` multiplication by `u` is an
//! isomorphism, so `M^lo` is the colimit of the Rees filtration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{snf, ZMatrix};
use crate::padic::Zpn;
use crate::theta::{FilteredThetaModule, ThetaLayer};

/// A homogeneous operator `M^from → M^to`; columns are images of basis vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Operator {
    pub from: i64,
    pub to: i64,
    pub matrix: ZMatrix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradedWeylModule {
    ring: Zpn,
    lo: i64,
    ranks: Vec<usize>,
    u_ops: Vec<Operator>,
    d_ops: Vec<Operator>,
    labels: Option<Vec<Vec<String>>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeylViolation {
    pub degree: i64,
    pub detail: String,
}

/// `Fil_i = M^{-i}` with `u: Fil_{i-1} → Fil_i` and `D: Fil_i → Fil_{i-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReesFiltration {
    pub ring: Zpn,
    pub lo: i64,
    pub layers: Vec<ReesLayer>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReesLayer {
    pub index: i64,
    pub transition: ZMatrix,
    pub derivation: ZMatrix,
}

/// The colimit `N = M^lo` of the Rees filtration with its Sen operator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SenModule {
    pub degree: i64,
    pub theta: ZMatrix,
}

impl GradedWeylModule {
    /// `ranks[k]` is the rank of `M^{lo+k}`. Operators are checked by
    /// [`GradedWeylModule::check`], not here.
    pub fn new(ring: Zpn, lo: i64, ranks: Vec<usize>, u_ops: Vec<Operator>, d_ops: Vec<Operator>) -> Result<Self> {
        if ranks.is_empty() && !(u_ops.is_empty() && d_ops.is_empty()) {
            return Err(Error::Dimension("operators on an empty window".into()));
        }
        Ok(GradedWeylModule { ring, lo, ranks, u_ops, d_ops, labels: None })
    }

    pub fn zero(ring: Zpn) -> Self {
        GradedWeylModule { ring, lo: 0, ranks: Vec::new(), u_ops: Vec::new(), d_ops: Vec::new(), labels: None }
    }

    /// The free graded Weyl module on generators `g_k` of degree `deg_k`,
    /// with `D(g_k) = Σ c·u^{deg_l - deg_k - 1}·g_l` over the listed
    /// `(l, c)` (each `l` must have larger degree), extended by
    /// `D(u^a g) = a·u^{a-1}g + u^a·Dg`.
    pub fn free(ring: Zpn, gens: &[(i64, Vec<(usize, i64)>)]) -> Result<Self> {
        if gens.is_empty() {
            return Ok(Self::zero(ring));
        }
        let lo = gens.iter().map(|g| g.0).min().unwrap();
        let hi = gens.iter().map(|g| g.0).max().unwrap();
        for (k, (d, img)) in gens.iter().enumerate() {
            if let Some((l, _)) = img.iter().find(|(l, _)| *l >= gens.len() || gens[*l].0 <= *d) {
                return Err(Error::Dimension(format!("D(g_{k}) mentions g_{l} of degree not above {d}")));
            }
        }
        // basis of M^n: (g, a) with deg g - a = n
        let basis = |n: i64| -> Vec<(usize, u32)> {
            gens.iter().enumerate().filter(|(_, g)| g.0 >= n).map(|(k, g)| (k, (g.0 - n) as u32)).collect()
        };
        let ranks: Vec<usize> = (lo..=hi).map(|n| basis(n).len()).collect();
        let pos = |n: i64, k: usize| basis(n).iter().position(|(g, _)| *g == k);
        let mut u_ops = Vec::new();
        let mut d_ops = Vec::new();
        for n in lo..=hi {
            let src = basis(n);
            if n > lo {
                let mut m = ZMatrix::zeros(ring, basis(n - 1).len(), src.len());
                for (c, (g, _)) in src.iter().enumerate() {
                    m.set(pos(n - 1, *g).unwrap(), c, 1);
                }
                u_ops.push(Operator { from: n, to: n - 1, matrix: m });
            }
            if n < hi {
                let mut m = ZMatrix::zeros(ring, basis(n + 1).len(), src.len());
                for (c, (g, a)) in src.iter().enumerate() {
                    if *a > 0 {
                        let r = pos(n + 1, *g).unwrap();
                        m.set(r, c, ring.add(m.get(r, c), ring.from_u64(*a as u64)));
                    }
                    for (l, coef) in &gens[*g].1 {
                        let r = pos(n + 1, *l).unwrap();
                        m.set(r, c, ring.add(m.get(r, c), ring.from_i64(*coef)));
                    }
                }
                d_ops.push(Operator { from: n, to: n + 1, matrix: m });
            }
        }
        let labels = (lo..=hi)
            .map(|n| {
                basis(n)
                    .iter()
                    .map(|(g, a)| match a {
                        0 => format!("g{g}"),
                        1 => format!("u·g{g}"),
                        _ => format!("u^{a}·g{g}"),
                    })
                    .collect()
            })
            .collect();
        Ok(GradedWeylModule { ring, lo, ranks, u_ops, d_ops, labels: Some(labels) })
    }

    pub fn ring(&self) -> &Zpn {
        &self.ring
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.ranks.len() as i64 - 1
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn degrees(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn u_ops(&self) -> &[Operator] {
        &self.u_ops
    }

    pub fn d_ops(&self) -> &[Operator] {
        &self.d_ops
    }

    /// Human-readable basis names per degree, when known.
    pub fn labels(&self) -> Option<&Vec<Vec<String>>> {
        self.labels.as_ref()
    }

    /// Rank of `M^n`; zero above the window, `rank(lo)` below it.
    pub fn rank(&self, n: i64) -> usize {
        if self.is_empty() || n > self.hi() {
            0
        } else {
            self.ranks[(n.max(self.lo) - self.lo) as usize]
        }
    }

    /// `u: M^n → M^{n-1}` for `lo < n ≤ hi`.
    pub fn u(&self, n: i64) -> ZMatrix {
        self.u_ops
            .iter()
            .find(|o| o.from == n && o.to == n - 1)
            .map(|o| o.matrix.clone())
            .unwrap_or_else(|| ZMatrix::zeros(self.ring, self.rank(n - 1), self.rank(n)))
    }

    /// `D: M^n → M^{n+1}` for `lo ≤ n ≤ hi` (zero at the top).
    pub fn d(&self, n: i64) -> ZMatrix {
        self.d_ops
            .iter()
            .find(|o| o.from == n && o.to == n + 1)
            .map(|o| o.matrix.clone())
            .unwrap_or_else(|| ZMatrix::zeros(self.ring, self.rank(n + 1), self.rank(n)))
    }

    /// Degree conventions, the relation `Du - uD = 1` on every component, and
    /// local nilpotence of `D` modulo `p` over the window.
    pub fn check(&self) -> Vec<WeylViolation> {
        let mut out = Vec::new();
        let in_window = |n: i64| !self.is_empty() && n >= self.lo && n <= self.hi();
        for o in &self.u_ops {
            if o.to != o.from - 1 {
                out.push(WeylViolation { degree: o.from, detail: format!("u maps degree {} to {}", o.from, o.to) });
            } else if !in_window(o.from) || o.from == self.lo {
                out.push(WeylViolation { degree: o.from, detail: "u declared outside (lo, hi]".into() });
            } else if o.matrix.rows() != self.rank(o.to) || o.matrix.cols() != self.rank(o.from) {
                out.push(WeylViolation { degree: o.from, detail: "u has the wrong shape".into() });
            }
        }
        for o in &self.d_ops {
            if o.to != o.from + 1 {
                out.push(WeylViolation { degree: o.from, detail: format!("D maps degree {} to {}", o.from, o.to) });
            } else if !in_window(o.from) || o.from == self.hi() {
                out.push(WeylViolation { degree: o.from, detail: "D declared outside [lo, hi)".into() });
            } else if o.matrix.rows() != self.rank(o.to) || o.matrix.cols() != self.rank(o.from) {
                out.push(WeylViolation { degree: o.from, detail: "D has the wrong shape".into() });
            }
        }
        if !out.is_empty() {
            return out;
        }
        for n in self.degrees().skip(1) {
            let lhs = self.d(n - 1).mul(&self.u(n)).sub(&self.u(n + 1).mul(&self.d(n)));
            if lhs != ZMatrix::identity(self.ring, self.rank(n)) {
                out.push(WeylViolation { degree: n, detail: "Du - uD ≠ 1".into() });
            }
        }
        if !self.is_empty() {
            let len = self.ranks.len() as i64;
            for n in self.degrees() {
                let mut m = ZMatrix::identity(self.ring, self.rank(n));
                for t in n..n + len {
                    m = self.d(t).mul(&m);
                }
                if !m.reduce_to(&self.ring.with_precision(1).unwrap()).is_zero() {
                    out.push(WeylViolation { degree: n, detail: "D is not nilpotent mod p".into() });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_empty()
    }

    /// `u^{n-m}: M^n → M^m` for `m ≤ n`.
    pub fn u_power(&self, n: i64, m: i64) -> ZMatrix {
        let mut acc = ZMatrix::identity(self.ring, self.rank(n));
        for t in (m + 1..=n).rev() {
            acc = self.u(t).mul(&acc);
        }
        acc
    }

    /// `D^k: M^n → M^{n+k}`.
    pub fn d_power(&self, n: i64, k: usize) -> ZMatrix {
        let mut acc = ZMatrix::identity(self.ring, self.rank(n));
        for t in n..n + k as i64 {
            acc = self.d(t).mul(&acc);
        }
        acc
    }

    /// `[m, Dm, D²m, …, D^k m]`; entry `t` lives in degree `n + t`.
    pub fn coaction(&self, n: i64, m: &[u64], k: usize) -> Vec<Vec<u64>> {
        let mut out = vec![m.to_vec()];
        let mut cur = m.to_vec();
        for t in 0..k {
            cur = self.d(n + t as i64).mul_vec(&cur);
            out.push(cur.clone());
        }
        out
    }

    /// `D^i u - u D^i = i·D^{i-1}` on every component where both sides stay
    /// inside the window.
    pub fn check_power_identity(&self, i: usize) -> bool {
        if i == 0 || self.is_empty() {
            return true;
        }
        let scalar = self.ring.from_u64(i as u64);
        self.degrees().skip(1).all(|n| {
            let lhs = self.d_power(n - 1, i).mul(&self.u(n));
            let rhs = self.u(n + i as i64).mul(&self.d_power(n, i));
            let target = self.d_power(n, i - 1).scale(scalar);
            lhs.sub(&rhs) == target
        })
    }

    pub fn rees(&self) -> ReesFiltration {
        if self.is_empty() {
            return ReesFiltration { ring: self.ring, lo: 0, layers: Vec::new() };
        }
        let layers = (-self.hi()..=-self.lo)
            .map(|i| ReesLayer { index: i, transition: self.u(-i + 1), derivation: self.d(-i) })
            .collect();
        ReesFiltration { ring: self.ring, lo: -self.hi(), layers }
    }

    /// `Θ_i = uD - i` on each layer, as a filtered `Θ`-module.
    pub fn theta_layers(&self) -> Result<FilteredThetaModule> {
        self.rees().theta_module()
    }

    pub fn sen_module(&self) -> Result<SenModule> {
        if self.is_empty() {
            return Ok(SenModule { degree: 0, theta: ZMatrix::zeros(self.ring, 0, 0) });
        }
        let n = self.ring.n();
        for t in self.degrees().skip(1) {
            let e = snf(&self.u(t)).exponents();
            if e.len() < self.rank(t) || e.iter().any(|x| *x >= n) {
                return Err(Error::Precondition(format!("u is not injective on M^{t}; the colimit does not stabilise")));
            }
        }
        let lo = self.lo;
        let shift = ZMatrix::scalar(self.ring, self.rank(lo), self.ring.from_i64(lo));
        let theta = self.u(lo + 1).mul(&self.d(lo)).add(&shift);
        Ok(SenModule { degree: lo, theta })
    }

    /// Compare `Θ_N·T(m)` against `T(Dm) + deg(m)·T(m)` on every basis vector
    /// of every component, where `T = u^{n - lo}: M^n → N`.
    pub fn sen_agreement(&self) -> Result<bool> {
        let sen = self.sen_module()?;
        for n in self.degrees() {
            let t = self.u_power(n, self.lo);
            let route1 = sen.theta.mul(&t);
            let t_next = if n < self.hi() { self.u_power(n + 1, self.lo) } else { ZMatrix::zeros(self.ring, self.rank(self.lo), 0) };
            let dm = self.d(n);
            let td = if n < self.hi() { t_next.mul(&dm) } else { ZMatrix::zeros(self.ring, self.rank(self.lo), self.rank(n)) };
            let route2 = td.add(&t.scale(self.ring.from_i64(n)));
            if route1 != route2 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl ReesFiltration {
    pub fn hi(&self) -> i64 {
        self.lo + self.layers.len() as i64 - 1
    }

    pub fn unrees(&self) -> Result<GradedWeylModule> {
        if self.layers.is_empty() {
            return Ok(GradedWeylModule::zero(self.ring));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.index != self.lo + k as i64 {
                return Err(Error::Dimension(format!("layer {k} carries index {}", l.index)));
            }
        }
        let lo = -self.hi();
        let ranks: Vec<usize> = self.layers.iter().rev().map(|l| l.transition.rows()).collect();
        let mut u_ops = Vec::new();
        let mut d_ops = Vec::new();
        for l in &self.layers {
            let n = -l.index;
            if l.index > self.lo {
                u_ops.push(Operator { from: n + 1, to: n, matrix: l.transition.clone() });
            }
        }
        for l in &self.layers {
            let n = -l.index;
            if l.index > self.lo {
                d_ops.push(Operator { from: n, to: n + 1, matrix: l.derivation.clone() });
            }
        }
        u_ops.sort_by_key(|o| o.from);
        d_ops.sort_by_key(|o| o.from);
        GradedWeylModule::new(self.ring, lo, ranks, u_ops, d_ops)
    }

    pub fn theta_module(&self) -> Result<FilteredThetaModule> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let n = l.transition.rows();
                let uds = l.transition.mul(&l.derivation);
                let theta = if n == 0 {
                    ZMatrix::zeros(self.ring, 0, 0)
                } else {
                    uds.sub(&ZMatrix::scalar(self.ring, n, self.ring.from_i64(l.index)))
                };
                ThetaLayer { iota: l.transition.clone(), theta }
            })
            .collect();
        FilteredThetaModule::new(self.ring, self.lo, layers)
    }
}

/// Whether `(Θ^p - Θ) mod p` is nilpotent on `M/pM` and on `M[p]`, for `Θ`
/// acting on `(Z/p^N)^n`.
pub fn nilpotence_check(theta: &ZMatrix, p: u64) -> bool {
    let ring = *theta.ring();
    assert_eq!(ring.p(), p, "operator over a different prime");
    let n = theta.rows();
    let a = theta.pow(p as u32).sub(theta);
    let an = a.pow(n as u32);
    let fp = ring.with_precision(1).unwrap();
    let on_quotient = an.reduce_to(&fp).is_zero();
    // M[p] = p^{N-1}·M; Θ acts there through its reduction mod p
    let torsion = crate::linalg::kernel(&ZMatrix::scalar(ring, n, p));
    let on_torsion = torsion.map(&an).is_zero();
    on_quotient && on_torsion
}

/// A random free Weyl module on 1 to `max_gens` generators with degrees in
/// `[lo, hi]` and random `D` on generators.
pub fn random_weyl<R: Rng>(ring: &Zpn, max_gens: usize, lo: i64, hi: i64, rng: &mut R) -> GradedWeylModule {
    let k = rng.gen_range(1..=max_gens);
    let mut degs: Vec<i64> = (0..k).map(|_| rng.gen_range(lo..=hi)).collect();
    degs.sort_unstable();
    let gens: Vec<(i64, Vec<(usize, i64)>)> = degs
        .iter()
        .map(|d| {
            let img = (0..k)
                .filter(|l| degs[*l] > *d)
                .filter_map(|l| {
                    let c = rng.gen_range(-(ring.p() as i64)..=ring.p() as i64);
                    (c != 0).then_some((l, c))
                })
                .collect();
            (*d, img)
        })
        .collect();
    GradedWeylModule::free(*ring, &gens).expect("degrees are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(p: u64) -> Zpn {
        Zpn::new(p, 6).unwrap()
    }

    /// `g0` in degree 0 with `D g0 = 0`, `g1` in degree -1 with `D g1 = g0`.
    fn two_gen(p: u64) -> GradedWeylModule {
        GradedWeylModule::free(ring(p), &[(0, vec![]), (-1, vec![(0, 1)])]).unwrap()
    }

    #[test]
    fn check_examples() {
        let w = two_gen(3);
        assert_eq!(w.check(), vec![]);
        let r = ring(3);
        let bad_degree = GradedWeylModule::new(
            r,
            -1,
            vec![2, 1],
            w.u_ops().to_vec(),
            vec![Operator { from: 0, to: -1, matrix: ZMatrix::zeros(r, 2, 1) }],
        )
        .unwrap();
        assert!(!bad_degree.is_valid());
        let commuting = GradedWeylModule::new(
            r,
            -1,
            vec![2, 1],
            w.u_ops().to_vec(),
            vec![Operator { from: -1, to: 0, matrix: ZMatrix::zeros(r, 1, 2) }],
        )
        .unwrap();
        assert!(commuting.check().iter().any(|v| v.detail.contains("Du - uD")));
    }

    #[test]
    fn rees_examples() {
        let w = two_gen(3);
        let f = w.rees();
        assert_eq!(f.lo, 0);
        assert_eq!(f.layers[0].transition.rows(), 1);
        assert_eq!(f.layers[1].transition.rows(), 2);
        assert_eq!(w.labels().unwrap()[0], vec!["u·g0", "g1"]);
        assert_eq!(f.unrees().unwrap().rees(), f);
        let z = GradedWeylModule::zero(ring(3));
        assert!(z.rees().layers.is_empty());
    }

    #[test]
    fn theta_layer_examples() {
        let w = two_gen(3);
        let ftm = w.theta_layers().unwrap();
        let r = ring(3);
        // basis of Fil_1 = M^{-1} is (u·g0, g1)
        let t1 = &ftm.layer(1).theta;
        assert_eq!(t1.column(1), vec![1, r.from_i64(-1)]);
        assert_eq!(t1.column(0), vec![0, 0]);
        assert!(ftm.is_valid());
        assert!(GradedWeylModule::zero(r).theta_layers().unwrap().layers().is_empty());
    }

    #[test]
    fn sen_examples() {
        let r = ring(3);
        let w = two_gen(3);
        let sen = w.sen_module().unwrap();
        assert_eq!(sen.theta, ZMatrix::from_i64_rows(r, &[vec![0, 1], vec![0, -1]]));
        assert!(w.sen_agreement().unwrap());
        assert!(nilpotence_check(&sen.theta, 3));
        let single = GradedWeylModule::free(r, &[(0, vec![])]).unwrap();
        assert_eq!(single.sen_module().unwrap().theta, ZMatrix::zeros(r, 1, 1));
        let weight = GradedWeylModule::free(r, &[(-1, vec![])]).unwrap();
        assert_eq!(weight.sen_module().unwrap().theta, ZMatrix::from_i64_rows(r, &[vec![-1]]));
    }

    #[test]
    fn coaction_examples() {
        let w = two_gen(3);
        // M^0 = ⟨g0⟩, M^{-1} = ⟨u·g0, g1⟩
        assert_eq!(w.coaction(0, &[1], 3), vec![vec![1], vec![], vec![], vec![]]);
        let c = w.coaction(-1, &[0, 1], 3);
        assert_eq!(c[0], vec![0, 1]);
        assert_eq!(c[1], vec![1]);
        assert!(c[2..].iter().all(|v| v.iter().all(|x| *x == 0)));
        for i in 1..=4 {
            assert!(w.check_power_identity(i), "i = {i}");
        }
    }

    #[test]
    fn nilpotence_examples() {
        let r = ring(3);
        assert!(nilpotence_check(&ZMatrix::from_i64_rows(r, &[vec![0, 1], vec![0, -1]]), 3));
        assert!(nilpotence_check(&ZMatrix::from_i64_rows(r, &[vec![0, 1], vec![0, 0]]), 3));
        assert!(!nilpotence_check(&ZMatrix::from_i64_rows(r, &[vec![0, -1], vec![1, 0]]), 3));
    }
}
