//! Conversions from in-memory objects to instance documents, used to build
//! the shipped corpus.

use nkit_core::corpus::CorpusEntry;
use nkit_core::linalg::ZMatrix;
use nkit_core::theta::FilteredThetaModule;
use nkit_core::weyl::{GradedWeylModule, Operator};
use num_bigint::BigInt;

use crate::doc::{BkDoc, InstanceDoc, Matrix, OperatorDoc, Payload, ThetaDoc, ThetaLayerDoc, WeylDoc};
use crate::run::{BK_COMMANDS, THETA_COMMANDS, WEYL_COMMANDS};

fn centered(m: &ZMatrix) -> Matrix {
    let ring = m.ring();
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| BigInt::from(ring.centered(m.get(i, j)))).collect()).collect()
}

fn commands(list: &[&str]) -> Vec<String> {
    list.iter().map(|c| c.to_string()).collect()
}

pub fn bk_doc(e: &CorpusEntry, n: u32, m: usize) -> InstanceDoc {
    let frobenius =
        e.frobenius.iter().map(|row| row.iter().map(|f| f.iter().map(|c| BigInt::from(*c)).collect()).collect()).collect();
    InstanceDoc {
        name: Some(e.name.clone()),
        p: e.p,
        n,
        m: Some(m),
        seed: None,
        commands: commands(&BK_COMMANDS),
        payload: Payload::Bk(BkDoc { frobenius, height: e.height, assume_crystalline: e.assume_crystalline }),
    }
}

pub fn theta_doc(name: &str, t: &FilteredThetaModule) -> InstanceDoc {
    let layers = t.layers().iter().map(|l| ThetaLayerDoc { iota: centered(&l.iota), theta: centered(&l.theta) }).collect();
    InstanceDoc {
        name: Some(name.into()),
        p: t.ring().p(),
        n: t.ring().n(),
        m: None,
        seed: None,
        commands: commands(&THETA_COMMANDS),
        payload: Payload::Theta(ThetaDoc { lo: t.lo(), layers }),
    }
}

pub fn weyl_doc(name: &str, w: &GradedWeylModule) -> InstanceDoc {
    let ops = |v: &[Operator]| -> Vec<OperatorDoc> {
        v.iter().map(|o| OperatorDoc { from: o.from, to: o.to, matrix: centered(&o.matrix) }).collect()
    };
    InstanceDoc {
        name: Some(name.into()),
        p: w.ring().p(),
        n: w.ring().n(),
        m: None,
        seed: None,
        commands: commands(&WEYL_COMMANDS),
        payload: Payload::Weyl(WeylDoc { lo: w.lo(), ranks: w.ranks().to_vec(), u: ops(w.u_ops()), d: ops(w.d_ops()) }),
    }
}

/// Every document shipped under `corpus/`, named after its file stem.
pub fn shipped() -> nkit_core::Result<Vec<InstanceDoc>> {
    use nkit_core::connection::{solve_connection, ConnectionLayers};
    use nkit_core::padic::Zpn;
    use nkit_core::theta::{random_ftm, RandomFtmParams};
    use nkit_core::weyl::random_weyl;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut out: Vec<InstanceDoc> = nkit_core::corpus::all().iter().map(|e| bk_doc(e, 12, 64)).collect();
    for name in ["diag-p3-1", "diag-p3-0-1-2", "conj-p5-u"] {
        let e = nkit_core::corpus::all().into_iter().find(|e| e.name == name).expect("corpus entry");
        let bk = e.module(8, 48)?;
        let conn = solve_connection(&bk)?;
        let layers = ConnectionLayers::new(&bk, &conn, bk.default_imax())?;
        let export = layers.conj_theta(&mut ChaCha8Rng::seed_from_u64(0))?;
        let ftm = export.ftm.reduce_to(&Zpn::new(e.p, 8)?)?;
        out.push(theta_doc(&format!("theta-{name}"), &ftm));
    }
    for (k, p) in [(1u64, 3u64), (2, 3), (3, 5), (4, 5)] {
        let ring = Zpn::new(p, 6)?;
        let params = RandomFtmParams { max_rank: 3, window: 5, max_drop: 2, base_change: true };
        let t = random_ftm(&ring, -1, params, &mut ChaCha8Rng::seed_from_u64(k));
        out.push(theta_doc(&format!("theta-random-{k}"), &t));
    }
    let ring = Zpn::new(3, 6)?;
    out.push(weyl_doc("weyl-two-generator", &GradedWeylModule::free(ring, &[(0, vec![]), (-1, vec![(0, 1)])])?));
    for k in 1..=3u64 {
        let p = if k == 3 { 5 } else { 3 };
        let w = random_weyl(&Zpn::new(p, 5)?, 3, -2, 2, &mut ChaCha8Rng::seed_from_u64(k));
        out.push(weyl_doc(&format!("weyl-random-{k}"), &w));
    }
    Ok(out)
}
