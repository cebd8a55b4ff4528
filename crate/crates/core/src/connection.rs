//! The connection `∇ = d/du + N` on `𝔐*[1/p]` compatible with Frobenius,
//! Griffiths transversality of the Nygaard filtration, and the induced
//! `Θ`-action on the conjugate layers.
//!
//! `N` is the unique solution of `N·C + C' = p·u^(p-1)·C·φ(N)` with
//! `C = φ(A)`, found by fixed-point iteration starting from `-C'·C⁻¹`.
//! All series arithmetic is exact over `Z[1/p]`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

use crate::bk::{conj_fil, nygaard, times_e, BKModule, ConjFiltration, NygaardFiltration};
use crate::error::{Error, Result};
use crate::linalg::{FreeSummand, ZMatrix};
use crate::padic::{big_valuation, e_pow_ints, PAdicValue, ScaledSeries, Zpn};
use crate::theta::{FilteredThetaModule, ThetaLayer};

pub type ScaledMatrix = Vec<Vec<ScaledSeries>>;

fn sm_mul(a: &ScaledMatrix, b: &ScaledMatrix) -> ScaledMatrix {
    let r = a.len();
    let c = b.first().map_or(0, |row| row.len());
    let k = b.len();
    (0..r)
        .map(|i| {
            (0..c)
                .map(|j| {
                    let mut acc = a[i][0].mul(&b[0][j]);
                    for l in 1..k {
                        acc = acc.add(&a[i][l].mul(&b[l][j]));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn sm_map2(a: &ScaledMatrix, b: &ScaledMatrix, f: impl Fn(&ScaledSeries, &ScaledSeries) -> ScaledSeries) -> ScaledMatrix {
    a.iter().zip(b).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| f(x, y)).collect()).collect()
}

fn sm_map(a: &ScaledMatrix, f: impl Fn(&ScaledSeries) -> ScaledSeries) -> ScaledMatrix {
    a.iter().map(|row| row.iter().map(&f).collect()).collect()
}

fn sm_minor(a: &ScaledMatrix, row: usize, col: usize) -> ScaledMatrix {
    a.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| r.iter().enumerate().filter(|(j, _)| *j != col).map(|(_, x)| x.clone()).collect())
        .collect()
}

fn sm_det(a: &ScaledMatrix, p: u64, u_prec: usize) -> ScaledSeries {
    match a.len() {
        0 => ScaledSeries::one(p, u_prec),
        1 => a[0][0].clone(),
        n => {
            let mut acc = ScaledSeries::zero(p, u_prec);
            for j in 0..n {
                let term = a[0][j].mul(&sm_det(&sm_minor(a, 0, j), p, u_prec));
                acc = if j % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
            }
            acc
        }
    }
}

fn sm_adjugate(a: &ScaledMatrix, p: u64, u_prec: usize) -> ScaledMatrix {
    let n = a.len();
    if n == 1 {
        return vec![vec![ScaledSeries::one(p, u_prec)]];
    }
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let m = sm_det(&sm_minor(a, j, i), p, u_prec);
                    if (i + j) % 2 == 0 {
                        m
                    } else {
                        m.neg()
                    }
                })
                .collect()
        })
        .collect()
}

fn sm_agree(a: &ScaledMatrix, b: &ScaledMatrix) -> bool {
    a.iter().zip(b).all(|(ra, rb)| ra.iter().zip(rb).all(|(x, y)| agree(x, y)))
}

fn agree(x: &ScaledSeries, y: &ScaledSeries) -> bool {
    let m = x.u_prec().min(y.u_prec());
    x.clone().with_u_prec(m).sub(&y.clone().with_u_prec(m)).is_zero()
}

fn lift_frobenius(bk: &BKModule) -> ScaledMatrix {
    bk.frobenius().iter().map(|row| row.iter().map(ScaledSeries::lift_exact).collect()).collect()
}

fn monomial(p: u64, c: BigInt, k: usize, u_prec: usize) -> ScaledSeries {
    let mut coeffs = vec![BigInt::zero(); k + 1];
    coeffs[k] = c;
    ScaledSeries::from_ints(p, &coeffs, u_prec)
}

#[derive(Clone, Debug)]
pub struct ConnectionMatrix {
    p: u64,
    n_mat: ScaledMatrix,
    initial: ScaledMatrix,
    iterations: usize,
}

impl ConnectionMatrix {
    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn rank(&self) -> usize {
        self.n_mat.len()
    }

    pub fn matrix(&self) -> &ScaledMatrix {
        &self.n_mat
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScaledSeries {
        &self.n_mat[i][j]
    }

    /// The starting iterate `-C'·C⁻¹`.
    pub fn initial(&self) -> &ScaledMatrix {
        &self.initial
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn u_prec(&self) -> usize {
        self.n_mat.iter().flatten().map(|x| x.u_prec()).min().unwrap_or(0)
    }

    pub fn max_denominator(&self) -> u32 {
        self.n_mat.iter().flatten().map(|x| x.max_denominator()).max().unwrap_or(0)
    }

    /// `N(p)` entrywise.
    pub fn ev_p(&self) -> Vec<Vec<PAdicValue>> {
        self.n_mat.iter().map(|row| row.iter().map(|x| x.ev_p()).collect()).collect()
    }

    /// A copy with `delta` added to entry `(i, j)`, for negative controls.
    pub fn perturbed(&self, i: usize, j: usize, delta: &ScaledSeries) -> Self {
        let mut out = self.clone();
        out.n_mat[i][j] = out.n_mat[i][j].add(delta);
        out
    }
}

/// Solve for `N` by iterating `N ↦ (p·u^(p-1)·C·φ(N) - C')·C⁻¹` until the
/// iterate is stable at the working `u`-precision.
pub fn solve_connection(bk: &BKModule) -> Result<ConnectionMatrix> {
    let p = bk.p();
    let m = bk.ctx().m();
    let r = bk.rank();
    if r == 0 {
        return Ok(ConnectionMatrix { p, n_mat: vec![], initial: vec![], iterations: 0 });
    }
    let c = sm_map(&lift_frobenius(bk), |x| x.frob());
    let cp = sm_map(&c, |x| x.ddu());
    let det_inv = sm_det(&c, p, m).invert(4 * bk.ring().n())?;
    let c_inv = sm_map(&sm_adjugate(&c, p, m), |x| x.mul(&det_inv));
    let lead = monomial(p, BigInt::from(p), p as usize - 1, m);
    let lead_c = sm_map(&c, |x| lead.mul(x));

    let initial = sm_map(&sm_mul(&cp, &c_inv), |x| x.neg());
    let mut n = initial.clone();
    let budget = 4 * m;
    for it in 1..=budget {
        let phi_n = sm_map(&n, |x| x.frob());
        let next = sm_mul(&sm_map2(&sm_mul(&lead_c, &phi_n), &cp, |a, b| a.sub(b)), &c_inv);
        if sm_agree(&next, &n) {
            return Ok(ConnectionMatrix { p, n_mat: next, initial, iterations: it });
        }
        n = next;
    }
    Err(Error::ConnectionDiverged(budget))
}

/// `∇x = x' + N·x` for a column vector of series.
pub fn apply_nabla(conn: &ConnectionMatrix, x: &[ScaledSeries]) -> Vec<ScaledSeries> {
    let r = conn.rank();
    (0..r)
        .map(|j| {
            let mut acc = x[j].ddu();
            for (l, xl) in x.iter().enumerate() {
                acc = acc.add(&xl.mul(&conn.n_mat[j][l]));
            }
            acc
        })
        .collect()
}

/// Check `∇(E·x) - E·∇x = x` at the common truncation order.
pub fn check_leibniz(conn: &ConnectionMatrix, x: &[ScaledSeries]) -> bool {
    let p = conn.p;
    let u_prec = x.iter().map(|s| s.u_prec()).min().unwrap_or(0);
    let e = ScaledSeries::from_ints(p, &e_pow_ints(p, 1), u_prec);
    let ex: Vec<ScaledSeries> = x.iter().map(|s| e.mul(s)).collect();
    let lhs = apply_nabla(conn, &ex);
    let rhs = apply_nabla(conn, x);
    lhs.iter().zip(&rhs).zip(x).all(|((a, b), xi)| agree(&a.sub(&e.mul(b)), xi))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HorizontalityReport {
    pub holds: bool,
    /// `u`-adic order up to which the residual was compared.
    pub u_prec: usize,
    /// First nonzero residual coefficient as `(row, col, degree)`.
    pub witness: Option<(usize, usize, usize)>,
}

/// Residual of `N·C + C' - p·u^(p-1)·C·φ(N)`.
pub fn verify_horizontality(bk: &BKModule, conn: &ConnectionMatrix) -> HorizontalityReport {
    let p = bk.p();
    let m = bk.ctx().m();
    let r = bk.rank();
    if r == 0 {
        return HorizontalityReport { holds: true, u_prec: m, witness: None };
    }
    let c = sm_map(&lift_frobenius(bk), |x| x.frob());
    let cp = sm_map(&c, |x| x.ddu());
    let lead = monomial(p, BigInt::from(p), p as usize - 1, m);
    let phi_n = sm_map(&conn.n_mat, |x| x.frob());
    let rhs = sm_map(&sm_mul(&c, &phi_n), |x| lead.mul(x));
    let lhs = sm_map2(&sm_mul(&conn.n_mat, &c), &cp, |a, b| a.add(b));
    let res = sm_map2(&lhs, &rhs, |a, b| a.sub(b));
    let u_prec = res.iter().flatten().map(|x| x.u_prec()).min().unwrap_or(m);
    for (i, row) in res.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            if let Some(k) = (0..u_prec).find(|k| !x.coeff(*k).0.is_zero()) {
                return HorizontalityReport { holds: false, u_prec, witness: Some((i, j, k)) };
            }
        }
    }
    HorizontalityReport { holds: true, u_prec, witness: None }
}

/// `∇x mod E^i` as numerators over `p^denom`, known to absolute precision
/// `p^cert`, in the coordinates `j·i + a`.
#[derive(Clone, Debug)]
struct RationalImage {
    nums: Vec<BigInt>,
    denom: u32,
    cert: i64,
}

fn nabla_mod_e(conn: &ConnectionMatrix, x: &[ScaledSeries], i: usize) -> RationalImage {
    let p = conn.p;
    let pb = BigInt::from(p);
    let parts: Vec<(Vec<BigInt>, u32, i64)> = apply_nabla(conn, x).iter().map(|y| y.rem_e_pow(i)).collect();
    let denom = parts.iter().map(|t| t.1).max().unwrap_or(0);
    let cert = parts.iter().map(|t| t.2).min().unwrap_or(i64::MAX);
    let mut nums = Vec::with_capacity(i * parts.len());
    for (v, d, _) in parts {
        let s = pb.pow(denom - d);
        nums.extend(v.into_iter().map(|c| c * &s));
    }
    let v = nums.iter().filter(|c| !c.is_zero()).map(|c| big_valuation(c, p)).min();
    let shift = v.unwrap_or(denom).min(denom);
    let ps = pb.pow(shift);
    for c in nums.iter_mut() {
        *c /= &ps;
    }
    RationalImage { nums, denom: denom - shift, cert }
}

/// `p^d · num / p^denom mod p^W`, or `None` when that is not integral within
/// the certified digits. Requires `cert ≥ W - d`.
fn scaled_residue(num: &BigInt, denom: u32, cert: i64, d: u32, ring: &Zpn) -> Option<u64> {
    let p = ring.p();
    let pb = BigInt::from(p);
    if d >= denom {
        return Some(ring.from_bigint(&(num * pb.pow(d - denom))));
    }
    let k = denom - d;
    let known = (cert + denom as i64).max(0) as u32;
    let x = num.mod_floor(&pb.pow(known));
    let pk = pb.pow(k);
    if !x.is_multiple_of(&pk) {
        return None;
    }
    Some(ring.from_bigint(&(x / pk)))
}

fn poly_vector(p: u64, ring: &Zpn, x: &[u64], r: usize, deg: usize, u_prec: usize) -> Vec<ScaledSeries> {
    (0..r)
        .map(|j| {
            let c: Vec<BigInt> = (0..deg).map(|a| BigInt::from(ring.centered(x[j * deg + a]))).collect();
            ScaledSeries::from_ints(p, &c, u_prec)
        })
        .collect()
}

fn divide_p_power(ring: &Zpn, v: u64, d: u32) -> Option<u64> {
    if d == 0 {
        return Some(v);
    }
    if v != 0 && ring.valuation(v) < d {
        return None;
    }
    Some(v / ring.p().pow(d))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GriffithsReport {
    pub index: usize,
    pub generators: usize,
    /// Exponent of `p` clearing denominators of `∇ mod E^i` on integral input.
    pub denominator: u32,
}

/// `∇` on Nygaard layers, with all filtrations recomputed at a working
/// precision `W = N + d + 1` that absorbs the denominators `p^d` of the
/// connection after reduction modulo `E^i`.
pub struct ConnectionLayers<'a> {
    conn: &'a ConnectionMatrix,
    ring_n: Zpn,
    ring_w: Zpn,
    rank: usize,
    u_prec: usize,
    i_max: usize,
    nyg: NygaardFiltration,
    conj: ConjFiltration,
    // nabla[i]: (𝔖/E^(i+1))^r → p^(-d_i)·(𝔖/E^i)^r, scaled by p^(d_i), over Z/p^W
    nabla: Vec<(ZMatrix, u32)>,
}

impl<'a> ConnectionLayers<'a> {
    pub fn new(bk: &BKModule, conn: &'a ConnectionMatrix, i_max: usize) -> Result<Self> {
        let p = bk.p();
        let r = bk.rank();
        let m = bk.ctx().m();
        let n = bk.ring().n();
        let u_prec = conn.u_prec().max(1);
        let top = i_max + 1;
        let mut images: Vec<Vec<RationalImage>> = vec![vec![]];
        for i in 1..=top {
            let mut cols = Vec::with_capacity(r * (i + 1));
            for j in 0..r {
                for a in 0..=i {
                    let mut x = vec![ScaledSeries::zero(p, u_prec); r];
                    x[j] = monomial(p, BigInt::one(), a, u_prec);
                    cols.push(nabla_mod_e(conn, &x, i));
                }
            }
            images.push(cols);
        }
        let denoms: Vec<u32> = images.iter().map(|c| c.iter().map(|x| x.denom).max().unwrap_or(0)).collect();
        let d = denoms.iter().copied().max().unwrap_or(0);
        let w = n + d + 1;
        if w > Zpn::max_precision(p) {
            return Err(Error::UncertifiedPrecision(format!(
                "connection denominators p^{d} need working precision {w}, above the limit {}",
                Zpn::max_precision(p)
            )));
        }
        let ring_w = Zpn::new(p, w)?;
        let mut nabla = vec![(ZMatrix::zeros(ring_w, 0, r), 0)];
        for i in 1..=top {
            let di = denoms[i];
            let mut mat = ZMatrix::zeros(ring_w, r * i, r * (i + 1));
            for (col, img) in images[i].iter().enumerate() {
                if img.cert < (w - di) as i64 {
                    return Err(Error::UncertifiedPrecision(format!(
                        "∇ mod E^{i} is certified to p^{} only, need p^{}; raise M",
                        img.cert,
                        w - di
                    )));
                }
                for (row, num) in img.nums.iter().enumerate() {
                    let v = scaled_residue(num, img.denom, img.cert, di, &ring_w).expect("d_i clears the column");
                    mat.set(row, col, v);
                }
            }
            nabla.push((mat, di));
        }
        let bk_w = bk.lifted(w, m)?;
        let nyg = nygaard(&bk_w, i_max)?;
        if nyg.certified_precision() < w {
            return Err(Error::UncertifiedPrecision(format!(
                "M = {m} certifies the Nygaard layers only to p^{}, need p^{w}",
                nyg.certified_precision()
            )));
        }
        let conj = conj_fil(&bk_w, &nyg)?;
        Ok(ConnectionLayers { conn, ring_n: *bk.ring(), ring_w, rank: r, u_prec, i_max, nyg, conj, nabla })
    }

    pub fn working_precision(&self) -> u32 {
        self.ring_w.n()
    }

    pub fn i_max(&self) -> usize {
        self.i_max
    }

    /// `∇(Fil^i) ⊆ S_p ⊗ Fil^(i-1)`, checked on generators of `Fil^i`: lifts
    /// of a basis of `K_i` together with `E^i·f_j`. Membership is tested
    /// modulo `E·S[1/p]·Fil^(i-1)`, where it becomes integrality in
    /// `Fil^(i-1)/E·Fil^(i-1)`.
    pub fn verify_griffiths(&self, i: usize) -> Result<GriffithsReport> {
        if i > self.i_max + 1 {
            return Err(Error::Precondition(format!("index {i} is outside the computed window")));
        }
        let p = self.conn.p;
        if i == 0 {
            for row in self.conn.ev_p() {
                for v in row {
                    if v.is_integral(p) {
                        continue;
                    }
                    if v.certified <= -(v.denom_exp as i64) {
                        return Err(Error::UncertifiedPrecision("N(p) is not certified to any digit".into()));
                    }
                    return Err(Error::GriffithsViolation { index: 0, detail: "N(p) is not p-integral".into() });
                }
            }
            return Ok(GriffithsReport { index: 0, generators: self.rank, denominator: 0 });
        }
        let ring = self.ring_w;
        let r = self.rank;
        let (g, di) = &self.nabla[i];
        let l = &self.conj.layers[i - 1].l;
        let prev = self.nyg.kernel(i - 1);
        let ek: Vec<Vec<u64>> = (0..prev.rank()).map(|k| times_e(&ring, &prev.basis().row(k), r, i - 1)).collect();
        let ek = FreeSummand::new(&ZMatrix::from_rows(ring, &ek, r * i))?;
        let q = l.quotient(&ek).map_err(|e| Error::FreenessViolation { index: i - 1, detail: e.to_string() })?;

        let mut gens = Vec::new();
        let ki = self.nyg.kernel(i);
        for k in 0..ki.rank() {
            gens.push(embed(&ki.basis().row(k), r, i, i + 1));
        }
        let ei = e_pow_ints(p, i);
        for j in 0..r {
            let mut x = vec![0; r * (i + 1)];
            for (a, c) in ei.iter().enumerate() {
                x[j * (i + 1) + a] = ring.from_bigint(c);
            }
            gens.push(x);
        }
        for x in &gens {
            let y = g.mul_vec(x);
            let c = l.coords(&y).ok_or_else(|| Error::GriffithsViolation {
                index: i,
                detail: format!("∇ of a generator leaves Fil^{}[1/p]", i - 1),
            })?;
            if q.project_coords(&c).iter().any(|v| *v != 0 && ring.valuation(*v) < *di) {
                return Err(Error::GriffithsViolation {
                    index: i,
                    detail: format!("∇ of a generator is not integral in Fil^{}/E·Fil^{}", i - 1, i as i64 - 2),
                });
            }
        }
        Ok(GriffithsReport { index: i, generators: gens.len(), denominator: *di })
    }

    pub fn verify_all(&self) -> Result<Vec<GriffithsReport>> {
        (0..=self.i_max + 1).map(|i| self.verify_griffiths(i)).collect()
    }

    /// `D̄_i(t)` for `t` given in `(𝔖/E^(i+1))^r` coordinates, through the
    /// tabulated `∇ mod E^i`.
    fn dbar_column(&self, i: usize, t: &[u64]) -> Result<Vec<u64>> {
        let (g, di) = &self.nabla[i];
        self.project_dbar(i, &g.mul_vec(t), *di)
    }

    fn project_dbar(&self, i: usize, y: &[u64], d: u32) -> Result<Vec<u64>> {
        let q = &self.conj.layers[i - 1].quotient;
        let c = q.project(y).ok_or_else(|| Error::GriffithsViolation {
            index: i,
            detail: format!("∇ of a lift leaves Fil^{}[1/p]", i - 1),
        })?;
        c.iter()
            .map(|v| {
                let x = divide_p_power(&self.ring_w, *v, d).ok_or_else(|| Error::GriffithsViolation {
                    index: i,
                    detail: "D̄ is not integral".into(),
                })?;
                Ok(self.ring_w.reduce_into(x, &self.ring_n))
            })
            .collect()
    }

    /// The conjugate layers with `ι_i = ×E` and `Θ_i = E∘D̄_i - i`.
    /// Every column of `D̄_i` is recomputed from a perturbed lift
    /// `t + k + E^(i+1)·w` with `k ∈ K_(i+1)`, directly from the series.
    pub fn conj_theta<R: Rng>(&self, rng: &mut R) -> Result<ConjThetaExport> {
        let ring = self.ring_n;
        let mut layers = Vec::with_capacity(self.i_max + 1);
        let mut dbars = Vec::with_capacity(self.i_max + 1);
        for i in 0..=self.i_max {
            let lay = &self.conj.layers[i];
            let ni = lay.rank();
            let iota = self.conj.transitions[i].reduce_to(&ring);
            if i == 0 {
                dbars.push(ZMatrix::zeros(ring, 0, ni));
                layers.push(ThetaLayer { iota, theta: ZMatrix::zeros(ring, ni, ni) });
                continue;
            }
            let prev_rank = self.conj.layers[i - 1].rank();
            let mut cols = Vec::with_capacity(ni);
            for k in 0..ni {
                let t = lay.quotient.lifts().row(k);
                let col = self.dbar_column(i, &t)?;
                let alt = self.perturbed_dbar(i, &t, rng)?;
                if alt != col {
                    return Err(Error::WellDefinednessFailure { index: i });
                }
                cols.push(col);
            }
            let dbar = ZMatrix::from_columns(ring, prev_rank, &cols);
            let theta = iota.mul(&dbar).sub(&ZMatrix::scalar(ring, ni, ring.from_u64(i as u64)));
            dbars.push(dbar);
            layers.push(ThetaLayer { iota, theta });
        }
        let ftm = FilteredThetaModule::new(ring, 0, layers)?;
        Ok(ConjThetaExport { ftm, dbar: dbars, working_precision: self.ring_w.n() })
    }

    fn perturbed_dbar<R: Rng>(&self, i: usize, t: &[u64], rng: &mut R) -> Result<Vec<u64>> {
        let ring = self.ring_w;
        let p = ring.p();
        let r = self.rank;
        let deg = i + 1;
        let kb = self.nyg.kernel(i + 1);
        let mut x = t.to_vec();
        for k in 0..kb.rank() {
            let c = rng.gen_range(0..p.pow(3));
            for (xa, ka) in x.iter_mut().zip(kb.basis().row(k)) {
                *xa = ring.add(*xa, ring.mul(c, ka));
            }
        }
        let mut series = poly_vector(p, &ring, &x, r, deg, self.u_prec);
        let e = ScaledSeries::from_ints(p, &e_pow_ints(p, deg), self.u_prec);
        for s in series.iter_mut() {
            let w = ScaledSeries::from_i64s(p, &[rng.gen_range(-3..=3), rng.gen_range(-3..=3)], self.u_prec);
            *s = s.add(&e.mul(&w));
        }
        let img = nabla_mod_e(self.conn, &series, i);
        let (_, di) = self.nabla[i];
        if img.cert < (ring.n() - di) as i64 {
            return Err(Error::UncertifiedPrecision(format!("perturbed lift at layer {i} is under-certified")));
        }
        let mut y = Vec::with_capacity(img.nums.len());
        for num in &img.nums {
            let v = scaled_residue(num, img.denom, img.cert, di, &ring)
                .ok_or(Error::WellDefinednessFailure { index: i })?;
            y.push(v);
        }
        self.project_dbar(i, &y, di)
    }
}

/// Pad coordinates `j·from + a` to `j·to + a`.
fn embed(x: &[u64], r: usize, from: usize, to: usize) -> Vec<u64> {
    let mut out = vec![0; r * to];
    for j in 0..r {
        out[j * to..j * to + from].copy_from_slice(&x[j * from..(j + 1) * from]);
    }
    out
}

#[derive(Clone, Debug)]
pub struct ConjThetaExport {
    pub ftm: FilteredThetaModule,
    /// `D̄_i: Fil_i → Fil_(i-1)`, columns are images.
    pub dbar: Vec<ZMatrix>,
    pub working_precision: u32,
}

pub fn verify_griffiths(bk: &BKModule, nyg: &NygaardFiltration, conn: &ConnectionMatrix, i: usize) -> Result<GriffithsReport> {
    ConnectionLayers::new(bk, conn, nyg.i_max())?.verify_griffiths(i)
}

pub fn conj_theta<R: Rng>(bk: &BKModule, nyg: &NygaardFiltration, conn: &ConnectionMatrix, rng: &mut R) -> Result<ConjThetaExport> {
    ConnectionLayers::new(bk, conn, nyg.i_max())?.conj_theta(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bk::{check_theorem, graded, ht_weights};
    use crate::padic::PrecisionCtx;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(p: u64, n: u32, m: usize) -> PrecisionCtx {
        PrecisionCtx::new(p, n, m).unwrap()
    }

    #[test]
    fn trivial_module_has_zero_connection() {
        let bk = BKModule::diagonal(ctx(3, 8, 32), &[0, 0], true);
        let conn = solve_connection(&bk).unwrap();
        assert!(conn.matrix().iter().flatten().all(|x| x.is_zero()));
        assert!(verify_horizontality(&bk, &conn).holds);
    }

    #[test]
    fn rank_one_initial_value() {
        let bk = BKModule::diagonal(ctx(3, 12, 48), &[1], true);
        let conn = solve_connection(&bk).unwrap();
        let ring = *bk.ring();
        let v = conn.initial()[0][0].ev_p().to_residue(&ring).unwrap();
        assert_eq!(ring.mul(v, 8), ring.from_i64(-9));
        assert!(verify_horizontality(&bk, &conn).holds);
        assert!(conn.iterations() < 10);
    }

    #[test]
    fn block_diagonal_connection() {
        let bk = BKModule::diagonal(ctx(3, 8, 32), &[1, 0], true);
        let single = BKModule::diagonal(ctx(3, 8, 32), &[1], true);
        let conn = solve_connection(&bk).unwrap();
        let one = solve_connection(&single).unwrap();
        assert!(agree(conn.entry(0, 0), one.entry(0, 0)));
        assert!(conn.entry(0, 1).is_zero() && conn.entry(1, 0).is_zero() && conn.entry(1, 1).is_zero());
    }

    #[test]
    fn leibniz_rule() {
        let bk = BKModule::from_i64(ctx(3, 8, 32), &[vec![vec![1], vec![0, 1]], vec![vec![0], vec![81, -108, 54, -12, 1]]], 4, false)
            .unwrap();
        let conn = solve_connection(&bk).unwrap();
        let x = vec![ScaledSeries::from_i64s(3, &[2, 0, 5], 30), ScaledSeries::from_i64s(3, &[-1, 7], 30)];
        assert!(check_leibniz(&conn, &x));
    }

    #[test]
    fn perturbation_breaks_horizontality_and_griffiths() {
        let bk = BKModule::diagonal(ctx(3, 8, 40), &[2, 0], true);
        let conn = solve_connection(&bk).unwrap();
        let delta = ScaledSeries::from_i64s(3, &[1], conn.u_prec());
        let delta = delta.mul(&ScaledSeries::from_i64s(3, &[3], conn.u_prec()).invert(8).unwrap());
        let bad = conn.perturbed(0, 0, &delta);
        assert!(!verify_horizontality(&bk, &bad).holds);
        let layers = ConnectionLayers::new(&bk, &bad, 4).unwrap();
        assert!(matches!(layers.verify_griffiths(0), Err(Error::GriffithsViolation { index: 0, .. })));
    }

    #[test]
    fn griffiths_holds_on_diagonal_modules() {
        for (p, exps) in [(3u64, vec![2u32, 0, 1]), (5, vec![3, 1])] {
            let bk = BKModule::diagonal(ctx(p, 8, 48), &exps, true);
            let conn = solve_connection(&bk).unwrap();
            let layers = ConnectionLayers::new(&bk, &conn, 6).unwrap();
            let reports = layers.verify_all().unwrap();
            assert_eq!(reports.len(), 8);
        }
    }

    #[test]
    fn theta_on_trivial_and_tate_twists() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let bk = BKModule::diagonal(ctx(3, 8, 40), &[0], true);
        let conn = solve_connection(&bk).unwrap();
        let out = ConnectionLayers::new(&bk, &conn, 5).unwrap().conj_theta(&mut rng).unwrap();
        for l in out.ftm.layers() {
            assert!(l.theta.is_zero());
        }

        let bk = BKModule::diagonal(ctx(3, 8, 40), &[1], true);
        let conn = solve_connection(&bk).unwrap();
        let out = ConnectionLayers::new(&bk, &conn, 5).unwrap().conj_theta(&mut rng).unwrap();
        let ring = *bk.ring();
        for (i, l) in out.ftm.layers().iter().enumerate().skip(1) {
            assert_eq!(l.theta, ZMatrix::scalar(ring, 1, ring.from_i64(-1)), "layer {i}");
        }
        assert!(out.ftm.is_valid());
    }

    fn unipotent_conjugate(ctx: PrecisionCtx) -> BKModule {
        let s = |c: &[i64]| crate::padic::TruncSeries::from_i64s(ctx, c);
        let p = vec![vec![s(&[1]), s(&[0, 1, 1]), s(&[0])], vec![s(&[0]), s(&[1]), s(&[0, 0, 2])], vec![s(&[0]), s(&[0]), s(&[1])]];
        let p_inv = crate::bk::smat_adjugate(&p, ctx);
        BKModule::diagonal(ctx, &[2, 0, 1], true).base_change(&p, &p_inv).unwrap()
    }

    #[test]
    fn griffiths_survives_base_change() {
        let bk = unipotent_conjugate(ctx(3, 8, 48));
        let conn = solve_connection(&bk).unwrap();
        assert!(verify_horizontality(&bk, &conn).holds);
        let layers = ConnectionLayers::new(&bk, &conn, 6).unwrap();
        layers.verify_all().unwrap();
        let out = layers.conj_theta(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(out.ftm.is_valid() && out.ftm.check_prop().pass);
    }

    #[test]
    fn non_crystalline_control_fails_griffiths() {
        let bk = BKModule::from_i64(ctx(3, 8, 48), &[vec![vec![1], vec![0, 1]], vec![vec![0], vec![81, -108, 54, -12, 1]]], 4, false)
            .unwrap();
        let conn = solve_connection(&bk).unwrap();
        let layers = ConnectionLayers::new(&bk, &conn, 6).unwrap();
        assert!(matches!(layers.verify_griffiths(0), Err(Error::GriffithsViolation { .. })));
    }

    #[test]
    fn conj_theta_matches_theorem() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bk = BKModule::diagonal(ctx(3, 8, 48), &[2, 0, 1], true);
        let nyg = nygaard(&bk, 6).unwrap();
        let report = graded(&nyg).unwrap();
        let v = check_theorem(&report, &ht_weights(&report), 3, true);
        let conn = solve_connection(&bk).unwrap();
        let out = conj_theta(&bk, &nyg, &conn, &mut rng).unwrap();
        assert!(out.ftm.is_valid());
        assert_eq!(out.ftm.check_prop().pass, v.pass);
    }
}
