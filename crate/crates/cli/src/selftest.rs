//! Built-in sanity run over small known instances.

use nkit_core::bk::{check_theorem, graded, ht_weights, nygaard, BKModule};
use nkit_core::connection::{solve_connection, ConnectionLayers};
use nkit_core::padic::{PrecisionCtx, Zpn};
use nkit_core::theta::{random_ftm, RandomFtmParams};
use nkit_core::weyl::random_weyl;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn tate() -> nkit_core::Result<bool> {
    let ctx = PrecisionCtx::new(3, 8, 48)?;
    let bk = BKModule::diagonal(ctx, &[1], true);
    let g = graded(&nygaard(&bk, bk.default_imax())?)?;
    let ht = ht_weights(&g);
    Ok(ht.into_iter().collect::<Vec<_>>() == vec![(1, 1)] && check_theorem(&g, &ht_weights(&g), 3, true).pass)
}

fn connection(seed: u64) -> nkit_core::Result<bool> {
    let ctx = PrecisionCtx::new(3, 6, 48)?;
    let bk = BKModule::diagonal(ctx, &[0, 1], true);
    let conn = solve_connection(&bk)?;
    let layers = ConnectionLayers::new(&bk, &conn, 2)?;
    layers.verify_all()?;
    let out = layers.conj_theta(&mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(out.ftm.is_valid() && out.ftm.check_prop().pass)
}

fn theta(seed: u64) -> nkit_core::Result<bool> {
    let ring = Zpn::new(5, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RandomFtmParams { max_rank: 3, window: 4, max_drop: 1, base_change: true };
    let m = random_ftm(&ring, 0, params, &mut rng);
    for i in m.indices() {
        if let Some(s) = m.split_layer(i)?.section() {
            if !m.verify_section(s) {
                return Ok(false);
            }
        }
    }
    Ok(m.is_valid() && m.check_prop().pass)
}

fn weyl(seed: u64) -> nkit_core::Result<bool> {
    let ring = Zpn::new(3, 4)?;
    let w = random_weyl(&ring, 2, -2, 2, &mut ChaCha8Rng::seed_from_u64(seed));
    let f = w.rees();
    Ok(w.is_valid() && w.sen_agreement()? && f.unrees()?.rees() == f)
}

pub fn selftest(seed: u64) -> Value {
    let checks: [(&str, nkit_core::Result<bool>); 4] =
        [("tate", tate()), ("connection", connection(seed)), ("theta", theta(seed)), ("weyl", weyl(seed))];
    let mut pass = true;
    let mut rows = serde_json::Map::new();
    for (name, r) in checks {
        let v = match r {
            Ok(b) => {
                pass &= b;
                json!(b)
            }
            Err(e) => {
                pass = false;
                json!(e.to_string())
            }
        };
        rows.insert(name.into(), v);
    }
    json!({"pass": pass, "checks": rows})
}
