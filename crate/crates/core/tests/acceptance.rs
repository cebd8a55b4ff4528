//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nkit_core::bk::{check_effective_di, check_theorem, graded, ht_weights, nygaard, precision_escalate, BKModule};
use nkit_core::connection::{check_leibniz, solve_connection, verify_horizontality, ConnectionLayers};
use nkit_core::corpus::{self, CorpusEntry};
use nkit_core::linalg::{howell, quotient_divisors, snf, ZMatrix};
use nkit_core::padic::{PrecisionCtx, ScaledSeries, Zpn};
use nkit_core::theta::{random_ftm, FilteredThetaModule, RandomFtmParams, Split};
use nkit_core::weyl::{nilpotence_check, random_weyl, GradedWeylModule};
use nkit_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t: Instant, limit: Duration, what: &str) -> std::result::Result<(), String> {
    let e = t.elapsed();
    ensure(e < limit, || format!("{what} took {e:.2?}, limit {limit:?}"))
}

fn rank_one_exactness() -> Outcome {
    for p in [3u64, 5] {
        for n in 0..=3u32 {
            let t = Instant::now();
            let bk = BKModule::diagonal(PrecisionCtx::new(p, 12, 64).map_err(|e| e.to_string())?, &[n], true);
            let nyg = nygaard(&bk, bk.default_imax()).map_err(|e| e.to_string())?;
            let rep = graded(&nyg).map_err(|e| e.to_string())?;
            let ht = ht_weights(&rep);
            ensure(ht.len() == 1 && ht.get(&(n as usize)) == Some(&1), || format!("p={p} n={n}: HT {ht:?}"))?;
            for (i, piece) in rep.pieces.iter().enumerate() {
                let want_free = usize::from(i == n as usize);
                ensure(piece.free_rank == want_free && piece.torsion.is_empty(), || {
                    format!("p={p} n={n}: gr^{i} = {piece}")
                })?;
            }
            within(t, Duration::from_secs(5), &format!("p={p} n={n}"))?;
        }
    }
    Ok("8 instances, HT = {n}, gr^n free of rank 1".into())
}

fn theorem_consistency() -> Outcome {
    let t = Instant::now();
    let entries = corpus::crystalline();
    ensure(entries.len() >= 20, || format!("only {} crystalline instances", entries.len()))?;
    for e in &entries {
        let bk = e.module(12, 64).map_err(|x| x.to_string())?;
        let rep = graded(&nygaard(&bk, bk.default_imax()).map_err(|x| x.to_string())?).map_err(|x| x.to_string())?;
        let v = check_theorem(&rep, &ht_weights(&rep), e.p, true);
        ensure(v.pass, || format!("{}: offending {:?}", e.name, v.offending))?;
    }
    within(t, Duration::from_secs(120), "corpus")?;
    Ok(format!("{} crystalline instances pass over i ≤ h + 3p", entries.len()))
}

fn effective_di() -> Outcome {
    for e in corpus::crystalline() {
        let bk = e.module(12, 64).map_err(|x| x.to_string())?;
        let rep = graded(&nygaard(&bk, bk.default_imax()).map_err(|x| x.to_string())?).map_err(|x| x.to_string())?;
        let v = check_effective_di(&rep, e.p);
        ensure(v.pass, || format!("{}: torsion below p at {:?}", e.name, v.offending))?;
    }
    Ok("gr^i torsion free for i < p on the crystalline corpus".into())
}

/// Sections `gr_i → Fil_i` found by brute force over `Z/p²`: for each
/// generator, search its whole coset `σ_c + ι(Fil_{i-1})` for an element
/// killed by `Θ + i` and by the order of the generator.
fn brute_force_splits(m: &FilteredThetaModule, i: i64) -> bool {
    let ring = *m.ring();
    let q = ring.modulus();
    let prev = if i == m.lo() { 0 } else { m.rank(i - 1) };
    let iota = &m.layer(i).iota;
    let mut image = HashSet::new();
    let total = q.pow(prev as u32);
    for code in 0..total {
        let mut x = vec![0u64; prev];
        let mut c = code;
        for slot in x.iter_mut() {
            *slot = c % q;
            c /= q;
        }
        image.insert(iota.mul_vec(&x));
    }
    let shifted = m.shifted_theta(i, i);
    let sigma = m.standard_lift(i);
    let p = ring.p();
    (0..sigma.cols()).all(|c| {
        let s0 = sigma.column(c);
        let scaled = |v: &[u64], k: u64| v.iter().map(|x| ring.mul(*x, k)).collect::<Vec<_>>();
        let order = if image.contains(&scaled(&s0, p)) { p } else { 0 };
        image.iter().any(|y| {
            let s: Vec<u64> = s0.iter().zip(y).map(|(a, b)| ring.add(*a, *b)).collect();
            shifted.mul_vec(&s).iter().all(|x| *x == 0) && scaled(&s, order).iter().all(|x| *x == 0)
        })
    })
}

fn prop_soundness() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut modules = 0;
    let mut layers_checked = 0;
    let mut obstructed = 0;
    for k in 0..500 {
        let p = if k % 2 == 0 { 3 } else { 5 };
        let ring = Zpn::new(p, 6).unwrap();
        let lo = rng.gen_range(-3..=1);
        let params = RandomFtmParams { max_rank: 6, window: 8, max_drop: 3, base_change: true };
        let m = random_ftm(&ring, lo, params, &mut rng);
        ensure(m.is_valid(), || format!("module {k} is invalid: {:?}", m.validate()))?;
        let v = m.check_prop();
        ensure(v.pass, || format!("module {k}: offending {:?}", v.offending))?;
        modules += 1;

        let small = Zpn::new(p, 2).unwrap();
        let Ok(sub) = m.reduce_to(&small) else { continue };
        if !sub.is_valid() {
            continue;
        }
        for i in sub.indices() {
            let card = |r: usize| (p * p).pow(r as u32);
            let prev = if i == sub.lo() { 1 } else { card(sub.rank(i - 1)) };
            if card(sub.rank(i)) > p.pow(4) || prev > p.pow(4) {
                continue;
            }
            let ours = matches!(sub.split_layer(i).map_err(|e| e.to_string())?, Split::Section(_));
            let brute = brute_force_splits(&sub, i);
            ensure(ours == brute, || format!("module {k} layer {i}: split {ours}, enumeration {brute}"))?;
            layers_checked += 1;
            obstructed += usize::from(!ours);
        }
    }
    within(t, Duration::from_secs(300), "suite")?;
    ensure(layers_checked > 100 && obstructed > 0, || {
        format!("only {layers_checked} sub-instance layers, {obstructed} obstructed")
    })?;
    Ok(format!("{modules} modules pass; {layers_checked} layers over Z/p² match enumeration ({obstructed} obstructed)"))
}

fn splitting_uniqueness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut sections = 0;
    let mut compared = 0;
    for k in 0..300 {
        let p = if k % 2 == 0 { 3 } else { 5 };
        let ring = Zpn::new(p, 6).unwrap();
        let params = RandomFtmParams { max_rank: 5, window: 6, max_drop: 2, base_change: true };
        let m = random_ftm(&ring, rng.gen_range(-2..=1), params, &mut rng);
        for i in m.indices() {
            let Split::Section(s) = m.split_layer(i).map_err(|e| e.to_string())? else { continue };
            ensure(m.verify_section(&s), || format!("module {k} layer {i}: section fails π∘s = id or Θs + is = 0"))?;
            sections += 1;
            if i == m.lo() || !m.hom_vanish(i).map_err(|e| e.to_string())? {
                continue;
            }
            let z = ZMatrix::from_rows(
                ring,
                &(0..m.rank(i - 1)).map(|_| (0..s.matrix.cols()).map(|_| rng.gen_range(0..ring.modulus())).collect()).collect::<Vec<_>>(),
                s.matrix.cols(),
            );
            let other = m.split_layer_from(i, &z).map_err(|e| e.to_string())?;
            let other = other.section().ok_or_else(|| format!("module {k} layer {i}: second lift failed"))?;
            ensure(m.verify_section(other) && other.matrix == s.matrix, || format!("module {k} layer {i}: sections differ"))?;
            compared += 1;
        }
    }
    ensure(compared > 0, || "no layer with vanishing Hom".into())?;
    Ok(format!("{sections} sections verified, {compared} uniqueness comparisons"))
}

fn sen_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut count = 0;
    for k in 0..120 {
        let p = if k % 2 == 0 { 3 } else { 5 };
        let ring = Zpn::new(p, 6).unwrap();
        let w = random_weyl(&ring, 4, -4, 2, &mut rng);
        ensure(w.sen_agreement().map_err(|e| e.to_string())?, || format!("module {k}: routes disagree"))?;
        count += 1;
    }
    let ring = Zpn::new(3, 6).unwrap();
    let golden = GradedWeylModule::free(ring, &[(0, vec![]), (-1, vec![(0, 1)])]).map_err(|e| e.to_string())?;
    let sen = golden.sen_module().map_err(|e| e.to_string())?;
    ensure(sen.theta == ZMatrix::from_i64_rows(ring, &[vec![0, 1], vec![0, -1]]), || format!("golden Θ_N = {}", sen.theta))?;
    ensure(nilpotence_check(&sen.theta, 3), || "golden Θ_N is not nilpotent mod p".into())?;
    Ok(format!("{count} random modules agree; golden Θ_N = [[0,1],[0,-1]]"))
}

fn weyl_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut count = 0;
    for k in 0..120 {
        let p = if k % 2 == 0 { 3 } else { 5 };
        let ring = Zpn::new(p, 6).unwrap();
        let w = random_weyl(&ring, 4, -4, 3, &mut rng);
        if !w.is_valid() {
            continue;
        }
        for i in 1..=4 {
            ensure(w.check_power_identity(i), || format!("module {k}: D^{i}u - uD^{i} ≠ {i}D^{}", i - 1))?;
        }
        let f = w.rees();
        let back = f.unrees().map_err(|e| e.to_string())?;
        ensure(back.lo() == w.lo() && back.ranks() == w.ranks(), || format!("module {k}: shape changed"))?;
        ensure(back.u_ops() == w.u_ops() && back.d_ops() == w.d_ops(), || format!("module {k}: operators changed"))?;
        ensure(back.rees() == f, || format!("module {k}: rees round trip"))?;
        count += 1;
    }
    ensure(count >= 100, || format!("only {count} valid modules"))?;
    Ok(format!("{count} modules: Du - uD = 1, power identities i ≤ 4, round trip"))
}

fn connection_certification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let entries = corpus::crystalline();
    for e in &entries {
        let bk = e.module(12, 64).map_err(|x| x.to_string())?;
        let imax = bk.default_imax();
        let conn = solve_connection(&bk).map_err(|x| format!("{}: {x}", e.name))?;
        let h = verify_horizontality(&bk, &conn);
        ensure(h.holds, || format!("{}: residual nonzero at {:?}", e.name, h.witness))?;
        let x: Vec<ScaledSeries> = (0..bk.rank()).map(|j| ScaledSeries::from_i64s(e.p, &[1 + j as i64, -2, 3], 40)).collect();
        ensure(check_leibniz(&conn, &x), || format!("{}: [D, E] ≠ id", e.name))?;
        let layers = ConnectionLayers::new(&bk, &conn, imax).map_err(|x| format!("{}: {x}", e.name))?;
        layers.verify_all().map_err(|x| format!("{}: {x}", e.name))?;
        let out = layers.conj_theta(&mut rng).map_err(|x| format!("{}: {x}", e.name))?;
        ensure(out.ftm.is_valid(), || format!("{}: exported module invalid", e.name))?;
        let rep = graded(&nygaard(&bk, imax).map_err(|x| x.to_string())?).map_err(|x| x.to_string())?;
        for (i, piece) in rep.pieces.iter().enumerate() {
            let ours = out.ftm.profile(i as i64);
            ensure(ours == *piece, || format!("{}: gr_{i} = {ours}, gr^{i} M = {piece}", e.name))?;
        }
        let thm = check_theorem(&rep, &ht_weights(&rep), e.p, true);
        ensure(out.ftm.check_prop().pass == thm.pass, || format!("{}: verdicts disagree", e.name))?;

        let delta = ScaledSeries::from_i64s(e.p, &[1], conn.u_prec())
            .mul(&ScaledSeries::from_i64s(e.p, &[e.p as i64], conn.u_prec()).invert(12).unwrap());
        let bad = conn.perturbed(0, 0, &delta);
        ensure(!verify_horizontality(&bk, &bad).holds, || format!("{}: perturbed N is horizontal", e.name))?;
        let caught = ConnectionLayers::new(&bk, &bad, imax).and_then(|l| l.verify_all());
        ensure(matches!(caught, Err(Error::GriffithsViolation { .. })), || {
            format!("{}: perturbed N passes Griffiths ({caught:?})", e.name)
        })?;
    }
    Ok(format!("{} instances certified; perturbed controls rejected", entries.len()))
}

fn precision_stability() -> Outcome {
    let all: Vec<CorpusEntry> = corpus::all();
    for e in &all {
        let bk = e.module(12, 64).map_err(|x| x.to_string())?;
        let s = precision_escalate(&bk, 8, 12, bk.default_imax()).map_err(|x| format!("{}: {x}", e.name))?;
        for (i, (lo, hi)) in s.graded_low.pieces.iter().zip(&s.graded_high.pieces).enumerate() {
            ensure(lo.free_rank == hi.free_rank, || format!("{}: free ranks differ at {i}", e.name))?;
            ensure(lo.torsion.iter().all(|t| *t < 8) && lo.torsion == hi.torsion, || {
                format!("{}: torsion {lo} vs {hi} at {i}", e.name)
            })?;
        }
    }
    Ok(format!("{} instances stable between N = 8 and N = 12", all.len()))
}

fn random_matrix(ring: &Zpn, rng: &mut ChaCha8Rng) -> ZMatrix {
    let rows = rng.gen_range(1..=6);
    let cols = rng.gen_range(1..=6);
    let p = ring.p();
    let data: Vec<Vec<u64>> = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let e = rng.gen_range(0..=ring.n());
                    ring.mul(rng.gen_range(0..ring.modulus()), if e == ring.n() { 0 } else { p.pow(e) })
                })
                .collect()
        })
        .collect();
    ZMatrix::from_rows(*ring, &data, cols)
}

fn linalg_invariants() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for p in [3u64, 5] {
        let ring = Zpn::new(p, 5).unwrap();
        for k in 0..1000 {
            let a = random_matrix(&ring, &mut rng);
            let s = snf(&a);
            ensure(s.u.mul(&a).mul(&s.v) == s.d, || format!("p={p} #{k}: U·A·V ≠ D"))?;
            ensure(s.u.mul(&s.u_inv) == ZMatrix::identity(ring, a.rows()), || format!("p={p} #{k}: U not invertible"))?;
            ensure(s.v.mul(&s.v_inv) == ZMatrix::identity(ring, a.cols()), || format!("p={p} #{k}: V not invertible"))?;
            let e = s.exponents();
            ensure(e.windows(2).all(|w| w[0] <= w[1]), || format!("p={p} #{k}: divisors {e:?} not a chain"))?;
            ensure(snf(&s.d).d == s.d, || format!("p={p} #{k}: SNF not idempotent"))?;
            let h = howell(&a);
            ensure(howell(h.basis()) == h, || format!("p={p} #{k}: Howell not idempotent"))?;
            ensure(a.row_vecs().iter().all(|r| h.contains(r)), || format!("p={p} #{k}: rows outside span"))?;
            let b = random_matrix(&ring, &mut rng);
            if b.cols() == a.cols() {
                let big = howell(&a.vstack(&b));
                ensure(big.contains_submodule(&h), || format!("p={p} #{k}: span not monotone"))?;
                ensure(quotient_divisors(&big, &h).is_ok(), || format!("p={p} #{k}: containment rejected"))?;
            }
        }
    }
    within(t, Duration::from_secs(60), "suite")?;
    Ok("2000 random matrices: U·A·V = D, chain, idempotence, containment".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("rank-one exactness", rank_one_exactness),
        ("theorem consistency", theorem_consistency),
        ("effective Deligne–Illusie", effective_di),
        ("split soundness", prop_soundness),
        ("splitting uniqueness", splitting_uniqueness),
        ("Sen agreement", sen_agreement),
        ("Weyl identities", weyl_identities),
        ("connection certification", connection_certification),
        ("precision stability", precision_stability),
        ("chain-ring linear algebra", linalg_invariants),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panic: {}", msg.unwrap_or_default()))
        });
        let el = t.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {:2} PASS  {name}: {detail} [{el:.2?}]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:2} FAIL  {name}: {detail} [{el:.2?}]", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
