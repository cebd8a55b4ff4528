//! Exact arithmetic in `Z/p^N`, the truncated series ring `(Z/p^N)[u]/(u^M)`,
//! and its `p`-inverted variant.
//!
//! Every series carries its own precision ledger: the number of `u`-adic
//! coefficients that are known, and (for [`ScaledSeries`]) how many `p`-adic
//! digits of the numerator are known. Each operation documents how it moves
//! the ledger.
//!
//! The distinguished element is fixed to `E(u) = u - p`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Residues beyond this bound would overflow the `u64 + u64` fast path.
const MODULUS_LIMIT: u64 = 1 << 62;

pub(crate) fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// The chain ring `Z/p^N`. Elements are plain `u64` residues in `[0, p^N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Zpn {
    p: u64,
    n: u32,
    modulus: u64,
}

impl Zpn {
    pub fn new(p: u64, n: u32) -> Result<Self> {
        if p < 3 || !is_prime(p) {
            return Err(Error::InvalidPrime(p));
        }
        if n == 0 {
            return Err(Error::InvalidPrecision("N must be at least 1".into()));
        }
        let mut modulus = 1u64;
        for _ in 0..n {
            modulus = modulus
                .checked_mul(p)
                .filter(|m| *m < MODULUS_LIMIT)
                .ok_or_else(|| Error::InvalidPrecision(format!("{p}^{n} exceeds 62 bits")))?;
        }
        Ok(Zpn { p, n, modulus })
    }

    /// Largest `N` such that `p^N` still fits the residue representation.
    pub fn max_precision(p: u64) -> u32 {
        let mut n = 0;
        let mut m = 1u64;
        while let Some(next) = m.checked_mul(p).filter(|m| *m < MODULUS_LIMIT) {
            m = next;
            n += 1;
        }
        n
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn with_precision(&self, n: u32) -> Result<Zpn> {
        Zpn::new(self.p, n)
    }

    pub fn from_i64(&self, x: i64) -> u64 {
        (x as i128).rem_euclid(self.modulus as i128) as u64
    }

    pub fn from_u64(&self, x: u64) -> u64 {
        x % self.modulus
    }

    pub fn from_bigint(&self, x: &BigInt) -> u64 {
        x.mod_floor(&BigInt::from(self.modulus)).to_u64().expect("residue fits u64")
    }

    /// Centered lift in `(-p^N/2, p^N/2]`.
    pub fn centered(&self, a: u64) -> i64 {
        if a > self.modulus / 2 {
            a as i64 - self.modulus as i64
        } else {
            a as i64
        }
    }

    /// Reduce a residue of `self` into a coarser ring of the same prime.
    pub fn reduce_into(&self, a: u64, coarser: &Zpn) -> u64 {
        debug_assert!(coarser.p == self.p && coarser.n <= self.n);
        a % coarser.modulus
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.modulus - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.modulus as u128) as u64
    }

    pub fn pow(&self, a: u64, mut e: u64) -> u64 {
        let mut base = a % self.modulus;
        let mut acc = 1 % self.modulus;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// `p^e` as a residue (zero once `e >= N`).
    pub fn p_pow(&self, e: u32) -> u64 {
        if e >= self.n {
            0
        } else {
            self.p.pow(e)
        }
    }

    /// `p`-adic valuation of a residue; zero has valuation `N`.
    pub fn valuation(&self, a: u64) -> u32 {
        if a == 0 {
            return self.n;
        }
        let mut v = 0;
        let mut x = a;
        while x % self.p == 0 {
            x /= self.p;
            v += 1;
        }
        v
    }

    pub fn is_unit(&self, a: u64) -> bool {
        a % self.p != 0
    }

    pub fn inv(&self, a: u64) -> Option<u64> {
        if !self.is_unit(a) {
            return None;
        }
        let (mut r0, mut r1) = (self.modulus as i128, a as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        Some(t0.rem_euclid(self.modulus as i128) as u64)
    }

    /// Solve `b·x = a`. The solution is unique modulo `p^(N - v(b))`; the
    /// representative returned lies in `[0, p^(N - v(b)))`.
    pub fn div(&self, a: u64, b: u64) -> Option<u64> {
        if a == 0 {
            return Some(0);
        }
        let vb = self.valuation(b);
        if vb >= self.n || self.valuation(a) < vb {
            return None;
        }
        let scale = self.p.pow(vb);
        let unit = b / scale;
        let x = self.mul(a / scale, self.inv(unit)?);
        Some(x % (self.modulus / scale))
    }
}

/// Shared context of a truncated computation: `p`, the `p`-adic precision
/// `N`, and the `u`-adic truncation order `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PrecisionCtx {
    ring: Zpn,
    m: usize,
}

impl PrecisionCtx {
    pub fn new(p: u64, n: u32, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidPrecision("M must be at least 1".into()));
        }
        Ok(PrecisionCtx { ring: Zpn::new(p, n)?, m })
    }

    pub fn ring(&self) -> &Zpn {
        &self.ring
    }

    pub fn p(&self) -> u64 {
        self.ring.p
    }

    pub fn n(&self) -> u32 {
        self.ring.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn with_precision(&self, n: u32, m: usize) -> Result<Self> {
        PrecisionCtx::new(self.p(), n, m)
    }
}

/// An element of `(Z/p^N)[u]/(u^M)` whose first `u_prec` coefficients are
/// trustworthy.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TruncSeries {
    ctx: PrecisionCtx,
    coeffs: Vec<u64>,
    u_prec: usize,
}

/// Output of [`TruncSeries::eis_divide`]: `f = quotient·E^i + remainder`.
#[derive(Clone, Debug)]
pub struct EisDivision {
    pub quotient: TruncSeries,
    pub remainder: TruncSeries,
    /// `u`-adic precision of the quotient, `M - i`.
    pub quotient_u_prec: usize,
    /// The truncated tail `u^k, k >= M` contributes multiples of
    /// `p^(M - i + 1)` to the remainder; this is `min(N, M - i + 1)`.
    pub remainder_p_prec: u32,
}

/// `p`-adic evaluation result `num / p^denom_exp`, correct modulo
/// `p^certified` (absolute precision; may be zero or negative).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PAdicValue {
    pub num: BigInt,
    pub denom_exp: u32,
    pub certified: i64,
}

impl PAdicValue {
    /// `p`-adic valuation of the value, `None` for zero.
    pub fn valuation(&self, p: u64) -> Option<i64> {
        if self.num.is_zero() {
            return None;
        }
        Some(big_valuation(&self.num, p) as i64 - self.denom_exp as i64)
    }

    pub fn is_integral(&self, p: u64) -> bool {
        self.valuation(p).map_or(true, |v| v >= 0)
    }

    /// Reduce an integral value into `ring`, provided enough digits are certified.
    pub fn to_residue(&self, ring: &Zpn) -> Result<u64> {
        if self.certified < ring.n() as i64 {
            return Err(Error::UncertifiedPrecision(format!(
                "value certified to p^{} but N = {}",
                self.certified,
                ring.n()
            )));
        }
        if !self.is_integral(ring.p()) {
            return Err(Error::Precondition("value is not p-integral".into()));
        }
        let pd = BigInt::from(ring.p()).pow(self.denom_exp);
        let num = self.num.div_floor(&pd);
        Ok(ring.from_bigint(&num))
    }
}

impl TruncSeries {
    pub fn zero(ctx: PrecisionCtx) -> Self {
        TruncSeries { ctx, coeffs: vec![0; ctx.m], u_prec: ctx.m }
    }

    pub fn one(ctx: PrecisionCtx) -> Self {
        Self::constant(ctx, 1)
    }

    pub fn constant(ctx: PrecisionCtx, c: i64) -> Self {
        let mut s = Self::zero(ctx);
        s.coeffs[0] = ctx.ring.from_i64(c);
        s
    }

    /// `u^k` (zero when `k >= M`).
    pub fn monomial(ctx: PrecisionCtx, k: usize) -> Self {
        let mut s = Self::zero(ctx);
        if k < ctx.m {
            s.coeffs[k] = 1 % ctx.ring.modulus;
        }
        s
    }

    /// From signed integer coefficients, lowest degree first; terms at or
    /// beyond `u^M` are dropped.
    pub fn from_i64s(ctx: PrecisionCtx, coeffs: &[i64]) -> Self {
        let mut s = Self::zero(ctx);
        for (k, c) in coeffs.iter().enumerate().take(ctx.m) {
            s.coeffs[k] = ctx.ring.from_i64(*c);
        }
        s
    }

    pub fn from_residues(ctx: PrecisionCtx, coeffs: &[u64]) -> Self {
        let mut s = Self::zero(ctx);
        for (k, c) in coeffs.iter().enumerate().take(ctx.m) {
            s.coeffs[k] = ctx.ring.from_u64(*c);
        }
        s
    }

    /// The distinguished element `E = u - p`.
    pub fn eisenstein(ctx: PrecisionCtx) -> Self {
        Self::from_i64s(ctx, &[-(ctx.p() as i64), 1])
    }

    /// `E^i`, computed exactly by the binomial expansion.
    pub fn eisenstein_pow(ctx: PrecisionCtx, i: usize) -> Self {
        let mut acc = Self::one(ctx);
        let e = Self::eisenstein(ctx);
        for _ in 0..i {
            acc = &acc * &e;
        }
        acc
    }

    pub fn ctx(&self) -> PrecisionCtx {
        self.ctx
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> u64 {
        self.coeffs.get(k).copied().unwrap_or(0)
    }

    pub fn u_prec(&self) -> usize {
        self.u_prec
    }

    pub fn with_u_prec(mut self, u_prec: usize) -> Self {
        self.u_prec = u_prec.min(self.ctx.m);
        for c in self.coeffs.iter_mut().skip(self.u_prec) {
            *c = 0;
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0)
    }

    /// Index of the highest nonzero coefficient.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| *c != 0)
    }

    fn check_ctx(&self, other: &Self) {
        assert_eq!(self.ctx, other.ctx, "series from different precision contexts");
    }

    pub fn scale(&self, c: u64) -> Self {
        let r = &self.ctx.ring;
        TruncSeries {
            ctx: self.ctx,
            coeffs: self.coeffs.iter().map(|a| r.mul(*a, c)).collect(),
            u_prec: self.u_prec,
        }
    }

    /// Multiply by `u^k`; the ledger shifts up with the coefficients.
    pub fn shift(&self, k: usize) -> Self {
        let m = self.ctx.m;
        let mut out = Self::zero(self.ctx);
        for j in 0..m.saturating_sub(k) {
            out.coeffs[j + k] = self.coeffs[j];
        }
        out.u_prec = (self.u_prec + k).min(m);
        out
    }

    /// `f(u^p)`. If `f` is known mod `u^k` the output is known mod
    /// `u^(p·k)` (capped at `M`), so input precision `ceil(M/p)` already
    /// gives a fully precise result.
    pub fn frob(&self) -> Self {
        let p = self.ctx.p() as usize;
        let m = self.ctx.m;
        let mut out = Self::zero(self.ctx);
        for (k, c) in self.coeffs.iter().enumerate() {
            if k * p >= m {
                break;
            }
            out.coeffs[k * p] = *c;
        }
        out.u_prec = self.u_prec.saturating_mul(p).min(m);
        out
    }

    /// `d/du`; output precision drops by one.
    pub fn ddu(&self) -> Self {
        let r = &self.ctx.ring;
        let mut out = Self::zero(self.ctx);
        for k in 1..self.ctx.m {
            out.coeffs[k - 1] = r.mul(self.coeffs[k], r.from_u64(k as u64));
        }
        out.u_prec = self.u_prec.saturating_sub(1);
        out
    }

    /// Long division by the monic polynomial `E^i`.
    pub fn eis_divide(&self, i: usize) -> Result<EisDivision> {
        let m = self.ctx.m;
        if i > m {
            return Err(Error::Precision(format!("cannot divide by E^{i} with M = {m}")));
        }
        let r = &self.ctx.ring;
        let divisor = Self::eisenstein_pow(self.ctx, i);
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0u64; m];
        for k in (i..m).rev() {
            let c = rem[k];
            if c == 0 {
                continue;
            }
            quot[k - i] = c;
            for j in 0..=i {
                let t = r.mul(c, divisor.coeffs[j]);
                rem[k - i + j] = r.sub(rem[k - i + j], t);
            }
        }
        let q_prec = self.u_prec.saturating_sub(i);
        let tail = (self.u_prec + 1).saturating_sub(i) as u64;
        Ok(EisDivision {
            quotient: TruncSeries { ctx: self.ctx, coeffs: quot, u_prec: q_prec },
            remainder: TruncSeries { ctx: self.ctx, coeffs: rem, u_prec: self.u_prec },
            quotient_u_prec: q_prec,
            remainder_p_prec: tail.min(self.ctx.n() as u64) as u32,
        })
    }

    /// Substitute `u = p`. Certified to `min(N, u_prec)` digits.
    pub fn ev_p(&self) -> (u64, u32) {
        let r = &self.ctx.ring;
        let mut acc = 0u64;
        for c in self.coeffs.iter().rev() {
            acc = r.add(r.mul(acc, r.p() % r.modulus()), *c);
        }
        (acc, (self.u_prec as u32).min(self.ctx.n()))
    }

    /// Multiplicative inverse; requires a unit constant term.
    pub fn invert_unit(&self) -> Result<Self> {
        let r = &self.ctx.ring;
        let c0inv = r.inv(self.coeffs[0]).ok_or(Error::UnitExpected)?;
        let m = self.ctx.m;
        let mut g = vec![0u64; m];
        g[0] = c0inv;
        for k in 1..m {
            let mut s = 0u64;
            for j in 1..=k {
                s = r.add(s, r.mul(self.coeffs[j], g[k - j]));
            }
            g[k] = r.neg(r.mul(s, c0inv));
        }
        Ok(TruncSeries { ctx: self.ctx, coeffs: g, u_prec: self.u_prec })
    }

    /// Reduce into a context with the same `p` and `M` but smaller `N`.
    pub fn reduce_to(&self, ctx: PrecisionCtx) -> Self {
        let coeffs: Vec<u64> = (0..ctx.m).map(|k| ctx.ring.from_u64(self.coeff(k))).collect();
        TruncSeries { ctx, coeffs, u_prec: self.u_prec.min(ctx.m) }
    }
}

impl Add for &TruncSeries {
    type Output = TruncSeries;
    fn add(self, rhs: &TruncSeries) -> TruncSeries {
        self.check_ctx(rhs);
        let r = &self.ctx.ring;
        TruncSeries {
            ctx: self.ctx,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| r.add(*a, *b)).collect(),
            u_prec: self.u_prec.min(rhs.u_prec),
        }
    }
}

impl Sub for &TruncSeries {
    type Output = TruncSeries;
    fn sub(self, rhs: &TruncSeries) -> TruncSeries {
        self.check_ctx(rhs);
        let r = &self.ctx.ring;
        TruncSeries {
            ctx: self.ctx,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| r.sub(*a, *b)).collect(),
            u_prec: self.u_prec.min(rhs.u_prec),
        }
    }
}

impl Neg for &TruncSeries {
    type Output = TruncSeries;
    fn neg(self) -> TruncSeries {
        let r = &self.ctx.ring;
        TruncSeries {
            ctx: self.ctx,
            coeffs: self.coeffs.iter().map(|a| r.neg(*a)).collect(),
            u_prec: self.u_prec,
        }
    }
}

impl Mul for &TruncSeries {
    type Output = TruncSeries;
    fn mul(self, rhs: &TruncSeries) -> TruncSeries {
        self.check_ctx(rhs);
        let r = &self.ctx.ring;
        let m = self.ctx.m;
        let mut out = vec![0u64; m];
        let da = self.degree();
        let db = rhs.degree();
        if let (Some(da), Some(db)) = (da, db) {
            for i in 0..=da {
                let a = self.coeffs[i];
                if a == 0 {
                    continue;
                }
                for j in 0..=db.min(m - 1 - i) {
                    out[i + j] = r.add(out[i + j], r.mul(a, rhs.coeffs[j]));
                }
            }
        }
        // Unknown tails of one factor only pollute terms above its own
        // precision shifted by the other factor's valuation.
        let va = self.coeffs.iter().position(|c| *c != 0).unwrap_or(m);
        let vb = rhs.coeffs.iter().position(|c| *c != 0).unwrap_or(m);
        let u_prec = (self.u_prec + vb).min(rhs.u_prec + va).min(m);
        TruncSeries { ctx: self.ctx, coeffs: out, u_prec }
    }
}

impl fmt::Display for TruncSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if *c == 0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "{c}·u")?,
                _ => write!(f, "{c}·u^{k}")?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, " + O(u^{})", self.u_prec)
    }
}

pub(crate) fn big_valuation(x: &BigInt, p: u64) -> u32 {
    if x.is_zero() {
        return u32::MAX;
    }
    let pb = BigInt::from(p);
    let mut v = 0;
    let mut y = x.clone();
    loop {
        let (q, r) = y.div_rem(&pb);
        if !r.is_zero() {
            return v;
        }
        y = q;
        v += 1;
    }
}

/// An element `p^(-denom_exp) · body` of `Z[1/p][u]/(u^M)`.
///
/// The numerator `body` is either exact (`body_p_prec = None`) or known
/// modulo `p^body_p_prec`. Sums take the minimum of the guarantees; products
/// add denominators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScaledSeries {
    p: u64,
    denom_exp: u32,
    body: Vec<BigInt>,
    body_p_prec: Option<u32>,
    u_prec: usize,
}

impl ScaledSeries {
    pub fn zero(p: u64, u_prec: usize) -> Self {
        ScaledSeries { p, denom_exp: 0, body: vec![BigInt::zero(); u_prec], body_p_prec: None, u_prec }
    }

    pub fn one(p: u64, u_prec: usize) -> Self {
        Self::from_ints(p, &[BigInt::one()], u_prec)
    }

    pub fn from_i64s(p: u64, coeffs: &[i64], u_prec: usize) -> Self {
        let v: Vec<BigInt> = coeffs.iter().map(|c| BigInt::from(*c)).collect();
        Self::from_ints(p, &v, u_prec)
    }

    /// Exact integer polynomial, truncated at `u^u_prec`.
    pub fn from_ints(p: u64, coeffs: &[BigInt], u_prec: usize) -> Self {
        let mut body = vec![BigInt::zero(); u_prec];
        for (k, c) in coeffs.iter().enumerate().take(u_prec) {
            body[k] = c.clone();
        }
        ScaledSeries { p, denom_exp: 0, body, body_p_prec: None, u_prec }
    }

    /// Exact lift of a truncated series: residues are read as their centered
    /// integer representatives.
    pub fn lift_exact(f: &TruncSeries) -> Self {
        let ring = f.ctx.ring;
        let coeffs: Vec<BigInt> = f.coeffs.iter().map(|c| BigInt::from(ring.centered(*c))).collect();
        let mut s = Self::from_ints(ring.p(), &coeffs, f.ctx.m);
        s.u_prec = f.u_prec;
        s
    }

    /// Lift of a truncated series remembering that it is only known mod `p^N`.
    pub fn from_trunc(f: &TruncSeries) -> Self {
        let mut s = Self::lift_exact(f);
        s.body_p_prec = Some(f.ctx.n());
        s
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn denom_exp(&self) -> u32 {
        self.denom_exp
    }

    pub fn body(&self) -> &[BigInt] {
        &self.body
    }

    pub fn u_prec(&self) -> usize {
        self.u_prec
    }

    pub fn body_p_prec(&self) -> Option<u32> {
        self.body_p_prec
    }

    /// Guaranteed absolute `p`-adic precision of the coefficients.
    pub fn p_prec(&self) -> Option<i64> {
        self.body_p_prec.map(|b| b as i64 - self.denom_exp as i64)
    }

    pub fn is_zero(&self) -> bool {
        self.body.iter().all(|c| c.is_zero())
    }

    pub fn with_u_prec(mut self, u_prec: usize) -> Self {
        self.u_prec = self.u_prec.min(u_prec);
        self.body.truncate(self.u_prec);
        self
    }

    /// Coefficient `k` as `(numerator, denominator exponent)` in lowest terms.
    pub fn coeff(&self, k: usize) -> (BigInt, u32) {
        let c = self.body.get(k).cloned().unwrap_or_default();
        if c.is_zero() {
            return (c, 0);
        }
        let v = big_valuation(&c, self.p).min(self.denom_exp);
        (c / BigInt::from(self.p).pow(v), self.denom_exp - v)
    }

    /// Largest denominator exponent among the coefficients in lowest terms.
    pub fn max_denominator(&self) -> u32 {
        (0..self.body.len()).map(|k| self.coeff(k).1).max().unwrap_or(0)
    }

    fn normalize(mut self) -> Self {
        if let Some(b) = self.body_p_prec {
            let m = BigInt::from(self.p).pow(b);
            for c in self.body.iter_mut() {
                *c = c.mod_floor(&m);
            }
        }
        if self.body_p_prec.is_none() {
            let v = self.body.iter().filter(|c| !c.is_zero()).map(|c| big_valuation(c, self.p)).min();
            let shift = v.unwrap_or(self.denom_exp).min(self.denom_exp);
            if shift > 0 {
                let pd = BigInt::from(self.p).pow(shift);
                for c in self.body.iter_mut() {
                    *c /= &pd;
                }
                self.denom_exp -= shift;
            }
        }
        self
    }

    fn body_valuation(&self) -> u32 {
        self.body.iter().filter(|c| !c.is_zero()).map(|c| big_valuation(c, self.p)).min().unwrap_or(u32::MAX)
    }

    fn rescaled_body(&self, d: u32) -> Vec<BigInt> {
        let f = BigInt::from(self.p).pow(d - self.denom_exp);
        self.body.iter().map(|c| c * &f).collect()
    }

    pub fn add(&self, rhs: &Self) -> Self {
        assert_eq!(self.p, rhs.p);
        let d = self.denom_exp.max(rhs.denom_exp);
        let a = self.rescaled_body(d);
        let b = rhs.rescaled_body(d);
        let u_prec = self.u_prec.min(rhs.u_prec);
        let body = (0..u_prec).map(|k| &a[k] + &b[k]).collect();
        let lift = |s: &Self| s.body_p_prec.map(|b| b + d - s.denom_exp);
        let body_p_prec = match (lift(self), lift(rhs)) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
        ScaledSeries { p: self.p, denom_exp: d, body, body_p_prec, u_prec }.normalize()
    }

    pub fn neg(&self) -> Self {
        let mut s = self.clone();
        for c in s.body.iter_mut() {
            *c = -&*c;
        }
        s
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.p, rhs.p);
        let va = self.body.iter().position(|c| !c.is_zero()).unwrap_or(self.u_prec);
        let vb = rhs.body.iter().position(|c| !c.is_zero()).unwrap_or(rhs.u_prec);
        let u_prec = (self.u_prec + vb).min(rhs.u_prec + va).min(self.u_prec.max(rhs.u_prec));
        let mut body = vec![BigInt::zero(); u_prec];
        for (i, a) in self.body.iter().enumerate() {
            if a.is_zero() || i >= u_prec {
                continue;
            }
            for (j, b) in rhs.body.iter().enumerate().take(u_prec - i) {
                if !b.is_zero() {
                    body[i + j] += a * b;
                }
            }
        }
        let body_p_prec = match (self.body_p_prec, rhs.body_p_prec) {
            (None, None) => None,
            (Some(x), None) => Some(x.saturating_add(rhs.body_valuation())),
            (None, Some(y)) => Some(y.saturating_add(self.body_valuation())),
            (Some(x), Some(y)) => Some(
                x.saturating_add(rhs.body_valuation()).min(y.saturating_add(self.body_valuation())),
            ),
        };
        ScaledSeries { p: self.p, denom_exp: self.denom_exp + rhs.denom_exp, body, body_p_prec, u_prec }
            .normalize()
    }

    pub fn scale_int(&self, c: &BigInt) -> Self {
        let mut s = self.clone();
        for x in s.body.iter_mut() {
            *x *= c;
        }
        s.normalize()
    }

    /// Multiply by `u^k`.
    pub fn shift(&self, k: usize) -> Self {
        let mut body = vec![BigInt::zero(); self.u_prec];
        for j in 0..self.u_prec.saturating_sub(k) {
            body[j + k] = self.body[j].clone();
        }
        ScaledSeries { body, ..self.clone() }
    }

    /// `f(u^p)`, keeping the truncation order fixed.
    pub fn frob(&self) -> Self {
        let p = self.p as usize;
        let m = self.u_prec;
        let mut body = vec![BigInt::zero(); m];
        for (k, c) in self.body.iter().enumerate() {
            if k * p >= m {
                break;
            }
            body[k * p] = c.clone();
        }
        ScaledSeries { body, ..self.clone() }
    }

    pub fn ddu(&self) -> Self {
        let m = self.u_prec;
        let mut body = vec![BigInt::zero(); m.saturating_sub(1)];
        for k in 1..m {
            body[k - 1] = &self.body[k] * BigInt::from(k);
        }
        ScaledSeries { body, u_prec: m.saturating_sub(1), ..self.clone() }.normalize()
    }

    /// Multiplicative inverse. The constant term must be nonzero; if its unit
    /// part is not `±1` the coefficients are only known to absolute
    /// precision `p^work_prec`.
    pub fn invert(&self, work_prec: u32) -> Result<Self> {
        let m = self.u_prec;
        let b0 = self.body.first().cloned().unwrap_or_default();
        if b0.is_zero() {
            return Err(Error::UnitExpected);
        }
        let v = big_valuation(&b0, self.p);
        let pb = BigInt::from(self.p);
        let w = &b0 / pb.pow(v);
        let exact = w.abs().is_one() && self.body_p_prec.is_none();
        // H_k = p^(v(k+1)) h_k with h the inverse of the numerator.
        let modulus = pb.pow(work_prec + v * m as u32);
        let winv = if exact {
            w.clone()
        } else {
            w.extended_gcd(&modulus).x.mod_floor(&modulus)
        };
        let mut h: Vec<BigInt> = Vec::with_capacity(m);
        h.push(winv.clone());
        for k in 1..m {
            let mut s = BigInt::zero();
            for j in 1..=k {
                if self.body[j].is_zero() {
                    continue;
                }
                s += &self.body[j] * pb.pow(v * (j as u32 - 1)) * &h[k - j];
            }
            let mut hk = -(winv.clone() * s);
            if !exact {
                hk = hk.mod_floor(&modulus);
            }
            h.push(hk);
        }
        // inverse = p^denom · Σ H_k p^(-v(k+1)) u^k
        let d_total = v * m as u32;
        let body: Vec<BigInt> = h
            .iter()
            .enumerate()
            .map(|(k, hk)| hk * pb.pow(d_total - v * (k as u32 + 1)))
            .collect();
        let out = ScaledSeries {
            p: self.p,
            denom_exp: d_total,
            body,
            body_p_prec: if exact { None } else { Some(work_prec + d_total) },
            u_prec: m,
        };
        // multiply by p^denom_exp of self
        let scale = ScaledSeries::from_ints(self.p, &[pb.pow(self.denom_exp)], m);
        Ok(out.mul(&scale))
    }

    /// Substitute `u = p`. Certified to `min(body precision, u_prec) - denom_exp`
    /// digits, since the truncated tail contributes multiples of `p^u_prec`
    /// to the numerator.
    pub fn ev_p(&self) -> PAdicValue {
        let pb = BigInt::from(self.p);
        let mut acc = BigInt::zero();
        for c in self.body.iter().rev() {
            acc = acc * &pb + c;
        }
        let cap = self.body_p_prec.map_or(self.u_prec as i64, |b| (b as i64).min(self.u_prec as i64));
        let mut value = PAdicValue { num: acc, denom_exp: self.denom_exp, certified: cap - self.denom_exp as i64 };
        if !value.num.is_zero() {
            let v = big_valuation(&value.num, self.p).min(value.denom_exp);
            value.num /= pb.pow(v);
            value.denom_exp -= v;
        }
        value
    }

    /// Remainder modulo `E^i`, as numerators over `p^denom_exp` in the
    /// `u`-basis `1, u, …, u^(i-1)`, with its certified absolute precision
    /// `u_prec - i + 1 - denom_exp`.
    pub fn rem_e_pow(&self, i: usize) -> (Vec<BigInt>, u32, i64) {
        let mut rem = self.body.clone();
        let e = e_pow_ints(self.p, i);
        for k in (i..rem.len()).rev() {
            if rem[k].is_zero() {
                continue;
            }
            let c = rem[k].clone();
            for j in 0..=i {
                rem[k - i + j] -= &c * &e[j];
            }
        }
        rem.truncate(i);
        rem.resize(i, BigInt::zero());
        let mut cert = self.u_prec as i64 - i as i64 + 1;
        if let Some(b) = self.body_p_prec {
            cert = cert.min(b as i64);
        }
        (rem, self.denom_exp, cert - self.denom_exp as i64)
    }
}

/// Integer coefficients of `(u - p)^i`.
pub(crate) fn e_pow_ints(p: u64, i: usize) -> Vec<BigInt> {
    let mut acc = vec![BigInt::one()];
    let pb = BigInt::from(p);
    for _ in 0..i {
        let mut next = vec![BigInt::zero(); acc.len() + 1];
        for (k, c) in acc.iter().enumerate() {
            next[k + 1] += c;
            next[k] -= c * &pb;
        }
        acc = next;
    }
    acc
}

impl fmt::Display for ScaledSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p^-{} · (", self.denom_exp)?;
        let mut first = true;
        for (k, c) in self.body.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}·u^{k}")?;
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, ") + O(u^{})", self.u_prec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: u64, n: u32, m: usize) -> PrecisionCtx {
        PrecisionCtx::new(p, n, m).unwrap()
    }

    #[test]
    fn rejects_small_and_composite_primes() {
        assert_eq!(Zpn::new(2, 4), Err(Error::InvalidPrime(2)));
        assert_eq!(Zpn::new(9, 4), Err(Error::InvalidPrime(9)));
        assert!(Zpn::new(3, 0).is_err());
        assert!(PrecisionCtx::new(3, 4, 0).is_err());
    }

    #[test]
    fn eis_divide_examples() {
        let c = ctx(3, 6, 8);
        let e = TruncSeries::eisenstein(c);
        let d = e.eis_divide(1).unwrap();
        assert_eq!(d.quotient, TruncSeries::one(c).with_u_prec(7));
        assert!(d.remainder.is_zero());

        let u2 = TruncSeries::monomial(c, 2);
        let d = u2.eis_divide(1).unwrap();
        assert_eq!(d.quotient.coeffs()[..2], [3, 1]);
        assert_eq!(d.remainder.coeffs()[0], 9);
        assert_eq!(d.remainder.degree(), Some(0));

        let u = TruncSeries::monomial(c, 1);
        let d = u.eis_divide(2).unwrap();
        assert!(d.quotient.is_zero());
        assert_eq!(d.remainder, u);

        assert!(matches!(u.eis_divide(9), Err(Error::Precision(_))));
    }

    #[test]
    fn ev_p_examples() {
        let c = ctx(3, 4, 6);
        assert_eq!(TruncSeries::eisenstein(c).ev_p().0, 0);
        assert_eq!(TruncSeries::monomial(c, 2).ev_p().0, 9);
        let f = TruncSeries::from_i64s(c, &[1, 1, 1, 1, 1, 1]);
        assert_eq!(f.ev_p(), (40, 4));
    }

    #[test]
    fn frob_examples() {
        let c = ctx(3, 6, 4);
        let u = TruncSeries::monomial(c, 1);
        assert_eq!(u.frob(), TruncSeries::monomial(c, 3));
        let e = TruncSeries::eisenstein(c);
        assert_eq!(e.frob(), TruncSeries::from_i64s(c, &[-3, 0, 0, 1]));
        let f = TruncSeries::monomial(c, 2).frob();
        assert!(f.is_zero());
        assert_eq!(f.u_prec(), 4);
    }

    #[test]
    fn ddu_examples() {
        let c = ctx(5, 6, 8);
        assert_eq!(TruncSeries::monomial(c, 2).ddu().coeffs()[..2], [0, 2]);
        let de = TruncSeries::eisenstein(c).ddu();
        assert_eq!(de.coeffs()[0], 1);
        assert_eq!(de.degree(), Some(0));
        assert!(TruncSeries::constant(c, 7).ddu().is_zero());
        assert_eq!(de.u_prec(), 7);
    }

    #[test]
    fn invert_unit_examples() {
        let c = ctx(3, 6, 3);
        let f = TruncSeries::from_i64s(c, &[1, -1]);
        assert_eq!(f.invert_unit().unwrap(), TruncSeries::from_i64s(c, &[1, 1, 1]));
        let c2 = ctx(3, 2, 3);
        assert_eq!(TruncSeries::constant(c2, 2).invert_unit().unwrap().coeffs()[0], 5);
        assert_eq!(TruncSeries::monomial(c, 1).invert_unit(), Err(Error::UnitExpected));
    }

    #[test]
    fn div_handles_valuations() {
        let r = Zpn::new(3, 3).unwrap();
        assert_eq!(r.div(6, 3), Some(2));
        assert_eq!(r.div(3, 9), None);
        assert_eq!(r.mul(r.div(18, 9).unwrap(), 9), 18);
        assert_eq!(r.valuation(0), 3);
    }

    #[test]
    fn scaled_inverse_of_frobenius_of_e() {
        // (u^3 - 3)^{-1} = -1/3 · Σ (u^3/3)^k
        let f = ScaledSeries::from_i64s(3, &[-3, 0, 0, 1], 10);
        let g = f.invert(20).unwrap();
        assert_eq!(g.body_p_prec(), None);
        let prod = f.mul(&g);
        assert_eq!(prod, ScaledSeries::one(3, 10));
        assert_eq!(g.coeff(9), (BigInt::from(-1), 4));
    }

    #[test]
    fn scaled_inverse_with_non_trivial_unit() {
        let f = ScaledSeries::from_i64s(5, &[2, 5, 1], 6);
        let g = f.invert(30).unwrap();
        let prod = f.mul(&g);
        let one = prod.ev_p();
        // 1 up to the tracked precision
        let diff = &one.num - BigInt::from(5).pow(one.denom_exp);
        assert!(diff.is_zero() || big_valuation(&diff, 5) as i64 - one.denom_exp as i64 >= 20);
    }

    #[test]
    fn scaled_ev_p_of_connection_seed() {
        // -3u^2/(u^3-3) evaluated at u = 3 is -9/8.
        let num = ScaledSeries::from_i64s(3, &[0, 0, -3], 64);
        let den = ScaledSeries::from_i64s(3, &[-3, 0, 0, 1], 64).invert(0).unwrap();
        let v = num.mul(&den).ev_p();
        assert!(v.certified >= 12);
        // -9/8 ≡ num / 3^d mod 3^certified
        let m = BigInt::from(3).pow(v.certified as u32 + v.denom_exp);
        let lhs = (&v.num * BigInt::from(8)).mod_floor(&m);
        let rhs = (BigInt::from(-9) * BigInt::from(3).pow(v.denom_exp)).mod_floor(&m);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn rem_e_pow_matches_truncated_division() {
        let c = ctx(3, 10, 12);
        let f = TruncSeries::from_i64s(c, &[4, -2, 7, 1, 0, 5]);
        let d = f.eis_divide(3).unwrap();
        let (rem, den, cert) = ScaledSeries::lift_exact(&f).rem_e_pow(3);
        assert_eq!(den, 0);
        assert!(cert >= 10);
        for k in 0..3 {
            assert_eq!(c.ring().from_bigint(&rem[k]), d.remainder.coeff(k));
        }
    }
}
