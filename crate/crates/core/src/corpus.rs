//! The shipped instance corpus: diagonal `E`-power modules, their conjugates
//! under unimodular changes of basis, and triangular controls whose
//! crystallinity is not asserted.

use crate::bk::BKModule;
use crate::error::Result;
use crate::padic::PrecisionCtx;

/// Integer polynomial, lowest degree first.
pub type Poly = Vec<i64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusEntry {
    pub name: String,
    pub p: u64,
    pub frobenius: Vec<Vec<Poly>>,
    pub height: u32,
    pub assume_crystalline: bool,
}

impl CorpusEntry {
    pub fn rank(&self) -> usize {
        self.frobenius.len()
    }

    pub fn module(&self, n: u32, m: usize) -> Result<BKModule> {
        let ctx = PrecisionCtx::new(self.p, n, m)?;
        BKModule::from_i64(ctx, &self.frobenius, self.height, self.assume_crystalline)
    }
}

fn trim(mut a: Poly) -> Poly {
    while a.len() > 1 && a.last() == Some(&0) {
        a.pop();
    }
    if a.is_empty() {
        a.push(0);
    }
    a
}

fn poly_add(a: &[i64], b: &[i64]) -> Poly {
    let mut out = vec![0; a.len().max(b.len())];
    for (k, c) in a.iter().enumerate() {
        out[k] += c;
    }
    for (k, c) in b.iter().enumerate() {
        out[k] += c;
    }
    trim(out)
}

fn poly_mul(a: &[i64], b: &[i64]) -> Poly {
    let mut out = vec![0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim(out)
}

/// `f(u^p)`.
fn poly_frob(a: &[i64], p: u64) -> Poly {
    let p = p as usize;
    let mut out = vec![0; (a.len() - 1) * p + 1];
    for (k, c) in a.iter().enumerate() {
        out[k * p] = *c;
    }
    out
}

/// `(u - p)^k`.
pub fn e_pow(p: u64, k: u32) -> Poly {
    (0..k).fold(vec![1], |acc, _| poly_mul(&acc, &[-(p as i64), 1]))
}

type PolyMatrix = Vec<Vec<Poly>>;

fn pm_mul(a: &PolyMatrix, b: &PolyMatrix) -> PolyMatrix {
    let r = a.len();
    (0..r)
        .map(|i| {
            (0..b[0].len())
                .map(|j| (0..b.len()).fold(vec![0], |acc, l| poly_add(&acc, &poly_mul(&a[i][l], &b[l][j]))))
                .collect()
        })
        .collect()
}

fn diag(p: u64, exps: &[u32]) -> PolyMatrix {
    let r = exps.len();
    (0..r).map(|i| (0..r).map(|j| if i == j { e_pow(p, exps[i]) } else { vec![0] }).collect()).collect()
}

fn diagonal_entry(p: u64, exps: &[u32]) -> CorpusEntry {
    let tag: Vec<String> = exps.iter().map(|e| e.to_string()).collect();
    CorpusEntry {
        name: format!("diag-p{p}-{}", tag.join("-")),
        p,
        frobenius: diag(p, exps),
        height: exps.iter().copied().max().unwrap_or(0),
        assume_crystalline: true,
    }
}

/// `P⁻¹·diag(E^n)·φ(P)`, the module in the basis `e·P`.
fn conjugate_entry(p: u64, exps: &[u32], name: &str, pm: PolyMatrix, pm_inv: PolyMatrix) -> CorpusEntry {
    let r = exps.len();
    let id: PolyMatrix = (0..r).map(|i| (0..r).map(|j| vec![i64::from(i == j)]).collect()).collect();
    assert_eq!(pm_mul(&pm, &pm_inv), id, "{name}: inverse mismatch");
    let phi_p: PolyMatrix = pm.iter().map(|row| row.iter().map(|x| poly_frob(x, p)).collect()).collect();
    let a = pm_mul(&pm_mul(&pm_inv, &diag(p, exps)), &phi_p);
    CorpusEntry {
        name: format!("conj-p{p}-{name}"),
        p,
        frobenius: a,
        height: exps.iter().copied().max().unwrap_or(0),
        assume_crystalline: true,
    }
}

/// Inverse of `I + N` for strictly upper triangular `N`.
fn unipotent_inverse(pm: &PolyMatrix) -> PolyMatrix {
    let r = pm.len();
    let id: PolyMatrix = (0..r).map(|i| (0..r).map(|j| vec![i64::from(i == j)]).collect()).collect();
    let neg_n: PolyMatrix = (0..r)
        .map(|i| (0..r).map(|j| if i == j { vec![0] } else { pm[i][j].iter().map(|c| -c).collect() }).collect())
        .collect();
    let mut acc = id.clone();
    let mut term = id;
    for _ in 1..r {
        term = pm_mul(&term, &neg_n);
        acc = acc.iter().zip(&term).map(|(ra, rt)| ra.iter().zip(rt).map(|(x, y)| poly_add(x, y)).collect()).collect();
    }
    acc
}

fn unipotent(p: u64, exps: &[u32], name: &str, pm: PolyMatrix) -> CorpusEntry {
    let inv = unipotent_inverse(&pm);
    conjugate_entry(p, exps, name, pm, inv)
}

/// Crystalline instances: every diagonal `E`-power module is the Breuil–Kisin
/// module of a sum of cyclotomic twists, and a change of basis preserves that.
pub fn crystalline() -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    for exps in [&[0][..], &[1], &[2], &[3], &[0, 1], &[1, 2], &[0, 3], &[0, 1, 2], &[2, 2, 0]] {
        out.push(diagonal_entry(3, exps));
    }
    for exps in [&[0][..], &[1], &[2], &[3], &[0, 1], &[1, 3], &[0, 2, 4]] {
        out.push(diagonal_entry(5, exps));
    }
    let z = || vec![0];
    let one = || vec![1];
    out.push(unipotent(3, &[0, 1], "u", vec![vec![one(), vec![0, 1]], vec![z(), one()]]));
    out.push(unipotent(3, &[1, 2], "u2p1", vec![vec![one(), vec![1, 0, 1]], vec![z(), one()]]));
    out.push(unipotent(
        3,
        &[0, 1, 2],
        "tri",
        vec![vec![one(), vec![0, 1], vec![0, 0, 1]], vec![z(), one(), vec![0, 3]], vec![z(), z(), one()]],
    ));
    out.push(conjugate_entry(
        3,
        &[2, 0],
        "const",
        vec![vec![vec![2], vec![1]], vec![vec![1], vec![1]]],
        vec![vec![vec![1], vec![-1]], vec![vec![-1], vec![2]]],
    ));
    out.push(unipotent(5, &[0, 1], "u", vec![vec![one(), vec![0, 1]], vec![z(), one()]]));
    out.push(conjugate_entry(
        5,
        &[1, 3],
        "const",
        vec![vec![vec![2], vec![1]], vec![vec![1], vec![1]]],
        vec![vec![vec![1], vec![-1]], vec![vec![-1], vec![2]]],
    ));
    out
}

/// Triangular controls. Their crystallinity is not settled, so theorem
/// verdicts on them carry no guarantee.
pub fn controls() -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    for p in [3u64, 5] {
        out.push(CorpusEntry {
            name: format!("tri-p{p}-u-e4"),
            p,
            frobenius: vec![vec![vec![1], vec![0, 1]], vec![vec![0], e_pow(p, 4)]],
            height: 4,
            assume_crystalline: false,
        });
    }
    out.push(CorpusEntry {
        name: "tri-p3-e-1-e".into(),
        p: 3,
        frobenius: vec![vec![e_pow(3, 1), vec![1]], vec![vec![0], e_pow(3, 1)]],
        height: 2,
        assume_crystalline: false,
    });
    out
}

pub fn all() -> Vec<CorpusEntry> {
    let mut out = crystalline();
    out.extend(controls());
    out
}
