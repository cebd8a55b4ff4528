//! Command dispatch. Every command yields a JSON value or an error that is
//! embedded in the report; verdicts and precision failures set the exit
//! status.

use std::cell::OnceCell;

use nkit_core::bk::{
    check_effective_di, check_theorem, conj_fil, graded, hodge_fil, ht_weights, nygaard, precision_escalate, BKModule,
    GradedReport, NygaardFiltration,
};
use nkit_core::connection::{solve_connection, verify_horizontality, ConnectionLayers, ConnectionMatrix};
use nkit_core::linalg::{quotient_divisors, DivisorProfile, Submodule, ZMatrix};
use nkit_core::padic::{PrecisionCtx, TruncSeries, Zpn};
use nkit_core::theta::{FilteredThetaModule, Split, ThetaLayer};
use nkit_core::weyl::{nilpotence_check, GradedWeylModule, Operator};
use nkit_core::Error;
use num_bigint::BigInt;
use num_integer::Integer;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::doc::{InstanceDoc, Matrix, Payload};
use crate::selftest::selftest;

pub const BK_COMMANDS: [&str; 10] =
    ["nygaard", "hodge", "graded", "ht", "check-theorem", "check-di", "conj-fil", "connection", "griffiths", "conj-theta"];
pub const THETA_COMMANDS: [&str; 5] = ["validate", "check-prop", "split", "decompose", "hom-vanish"];
pub const WEYL_COMMANDS: [&str; 3] = ["weyl-check", "rees", "sen"];

const VERDICT_COMMANDS: [&str; 10] =
    ["check-theorem", "check-di", "connection", "griffiths", "conj-theta", "validate", "check-prop", "weyl-check", "sen", "selftest"];

/// Process outcome, ordered by severity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    VerdictFailure,
    Usage,
    Precision,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::VerdictFailure => 1,
            Status::Usage => 2,
            Status::Precision => 3,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::VerdictFailure => "verdict-failure",
            Status::Usage => "usage",
            Status::Precision => "uncertified-precision",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub n: Option<u32>,
    pub m: Option<usize>,
    pub imax: Option<usize>,
    pub seed: Option<u64>,
    pub escalate: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub commands: Vec<String>,
    pub value: Value,
    pub status: Status,
}

fn allowed(payload: &Payload) -> &'static [&'static str] {
    match payload {
        Payload::Bk(_) => &BK_COMMANDS,
        Payload::Theta(_) => &THETA_COMMANDS,
        Payload::Weyl(_) => &WEYL_COMMANDS,
    }
}

/// Requested commands in dependency order, or the names that do not apply.
pub fn plan(payload: &Payload, requested: &[String]) -> Result<Vec<String>, Vec<String>> {
    let table = allowed(payload);
    let unknown: Vec<String> =
        requested.iter().filter(|c| c.as_str() != "selftest" && !table.contains(&c.as_str())).cloned().collect();
    if !unknown.is_empty() {
        return Err(unknown);
    }
    let mut out: Vec<String> = table.iter().filter(|c| requested.iter().any(|r| r == *c)).map(|c| c.to_string()).collect();
    if requested.iter().any(|r| r == "selftest") {
        out.push("selftest".into());
    }
    Ok(out)
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidPrime(_) => "invalid-prime",
        Error::InvalidPrecision(_) => "invalid-precision",
        Error::Precision(_) => "precision",
        Error::UnitExpected => "unit-expected",
        Error::Dimension(_) => "dimension",
        Error::Containment => "containment",
        Error::NotSaturated(_) => "not-saturated",
        Error::NotFiniteHeight { .. } => "not-finite-height",
        Error::FreenessViolation { .. } => "freeness-violation",
        Error::UncertifiedPrecision(_) => "uncertified-precision",
        Error::Precondition(_) => "precondition",
        Error::ConnectionDiverged(_) => "connection-diverged",
        Error::GriffithsViolation { .. } => "griffiths-violation",
        Error::WellDefinednessFailure { .. } => "well-definedness",
        Error::Parse(_) => "parse",
    }
}

pub fn profile_json(d: &DivisorProfile) -> Value {
    json!({"torsion": d.torsion, "free_rank": d.free_rank})
}

fn matrix_json(m: &ZMatrix) -> Value {
    json!(m.to_strings())
}

/// `N_mat` with one `{"denom_exp": d, "coeffs": [...]}` per entry, the
/// numerators reduced to the symmetric range mod `p^(n + d)` so the output
/// depends only on `N_mat` modulo `p^n`.
fn n_mat_json(conn: &ConnectionMatrix, n: u32) -> Value {
    let p = BigInt::from(conn.p());
    let rows: Vec<Vec<Value>> = conn
        .matrix()
        .iter()
        .map(|row| {
            row.iter()
                .map(|f| {
                    let d = f.denom_exp();
                    let m = p.pow(n + d);
                    let coeffs: Vec<String> = f
                        .body()
                        .iter()
                        .take(f.u_prec())
                        .map(|c| {
                            let mut r = c.mod_floor(&m);
                            if &r + &r > m {
                                r -= &m;
                            }
                            r.to_string()
                        })
                        .collect();
                    json!({"denom_exp": d, "coeffs": coeffs})
                })
                .collect()
        })
        .collect();
    json!(rows)
}

fn residues(ring: &Zpn, m: &Matrix, cols: usize) -> ZMatrix {
    let rows: Vec<Vec<u64>> = m.iter().map(|r| r.iter().map(|x| ring.from_bigint(x)).collect()).collect();
    ZMatrix::from_rows(*ring, &rows, cols)
}

pub fn bk_module(doc: &InstanceDoc, n: u32, m: usize) -> nkit_core::Result<BKModule> {
    let Payload::Bk(b) = &doc.payload else {
        return Err(Error::Precondition("not a Breuil-Kisin document".into()));
    };
    let ctx = PrecisionCtx::new(doc.p, n, m)?;
    let ring = *ctx.ring();
    let a = b
        .frobenius
        .iter()
        .map(|row| {
            row.iter()
                .map(|s| TruncSeries::from_residues(ctx, &s.iter().map(|c| ring.from_bigint(c)).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    BKModule::new(ctx, a, b.height, b.assume_crystalline)
}

pub fn theta_module(doc: &InstanceDoc, n: u32) -> nkit_core::Result<FilteredThetaModule> {
    let Payload::Theta(t) = &doc.payload else {
        return Err(Error::Precondition("not a theta-module document".into()));
    };
    let ring = Zpn::new(doc.p, n)?;
    let mut prev = 0;
    let mut layers = Vec::with_capacity(t.layers.len());
    for l in &t.layers {
        let rank = l.theta.len();
        layers.push(ThetaLayer { iota: residues(&ring, &l.iota, prev), theta: residues(&ring, &l.theta, rank) });
        prev = rank;
    }
    FilteredThetaModule::new(ring, t.lo, layers)
}

pub fn weyl_module(doc: &InstanceDoc, n: u32) -> nkit_core::Result<GradedWeylModule> {
    let Payload::Weyl(w) = &doc.payload else {
        return Err(Error::Precondition("not a Weyl-module document".into()));
    };
    let ring = Zpn::new(doc.p, n)?;
    let rank = |d: i64| w.ranks[(d - w.lo) as usize];
    let ops = |v: &[crate::doc::OperatorDoc]| -> Vec<Operator> {
        v.iter().map(|o| Operator { from: o.from, to: o.to, matrix: residues(&ring, &o.matrix, rank(o.from)) }).collect()
    };
    GradedWeylModule::new(ring, w.lo, w.ranks.clone(), ops(&w.u), ops(&w.d))
}

struct BkSession<'a> {
    bk: &'a BKModule,
    i_max: usize,
    seed: u64,
    nyg: OnceCell<nkit_core::Result<NygaardFiltration>>,
    graded: OnceCell<nkit_core::Result<GradedReport>>,
    conn: OnceCell<nkit_core::Result<ConnectionMatrix>>,
}

impl<'a> BkSession<'a> {
    fn nyg(&self) -> nkit_core::Result<&NygaardFiltration> {
        self.nyg.get_or_init(|| nygaard(self.bk, self.i_max)).as_ref().map_err(Clone::clone)
    }

    fn graded(&self) -> nkit_core::Result<&GradedReport> {
        self.graded.get_or_init(|| graded(self.nyg()?)).as_ref().map_err(Clone::clone)
    }

    fn conn(&self) -> nkit_core::Result<&ConnectionMatrix> {
        self.conn.get_or_init(|| solve_connection(self.bk)).as_ref().map_err(Clone::clone)
    }

    fn run(&self, cmd: &str) -> nkit_core::Result<Value> {
        let p = self.bk.p();
        match cmd {
            "nygaard" => {
                let nyg = self.nyg()?;
                let layers: Vec<Value> = (0..=nyg.i_max() + 1)
                    .map(|i| {
                        json!({
                            "i": i,
                            "rank": nyg.kernel(i).rank(),
                            "ambient": nyg.kernel(i).ambient(),
                            "e_intersection": nyg.check_e_intersection(i),
                            "nested": nyg.check_nested(i),
                        })
                    })
                    .collect();
                Ok(json!({"certified_precision": nyg.certified_precision(), "i_max": nyg.i_max(), "layers": layers}))
            }
            "hodge" => {
                let h = hodge_fil(self.nyg()?);
                let full = Submodule::full(*self.bk.ring(), self.bk.rank());
                let layers = h
                    .fil
                    .iter()
                    .enumerate()
                    .map(|(i, f)| {
                        let q = quotient_divisors(&full, f)?;
                        Ok(json!({"i": i, "quotient_torsion": q.torsion, "quotient_free_rank": q.free_rank}))
                    })
                    .collect::<nkit_core::Result<Vec<Value>>>()?;
                Ok(json!({"layers": layers}))
            }
            "graded" => {
                let g = self.graded()?;
                let pieces: Vec<Value> = g
                    .pieces
                    .iter()
                    .enumerate()
                    .map(|(i, d)| json!({"i": i, "torsion": d.torsion, "free_rank": d.free_rank}))
                    .collect();
                Ok(json!({"certified_precision": g.certified_precision, "window": g.window, "pieces": pieces}))
            }
            "ht" => {
                let ht: Map<String, Value> = ht_weights(self.graded()?).into_iter().map(|(i, m)| (i.to_string(), json!(m))).collect();
                Ok(json!({"weights": ht}))
            }
            "check-theorem" => {
                let g = self.graded()?;
                Ok(serde_json::to_value(check_theorem(g, &ht_weights(g), p, self.bk.assume_crystalline())).expect("serializable"))
            }
            "check-di" => Ok(serde_json::to_value(check_effective_di(self.graded()?, p)).expect("serializable")),
            "conj-fil" => {
                let c = conj_fil(self.bk, self.nyg()?)?;
                let layers: Vec<Value> = c
                    .layers
                    .iter()
                    .map(|l| {
                        let d = c.cokernel_divisors(l.index);
                        json!({"i": l.index, "rank": l.rank(), "cokernel_torsion": d.torsion, "cokernel_free_rank": d.free_rank})
                    })
                    .collect();
                Ok(json!({
                    "layers": layers,
                    "stabilization_index": c.stabilization_index,
                    "transitions_injective": c.transitions_injective(),
                }))
            }
            "connection" => {
                let conn = self.conn()?;
                let h = verify_horizontality(self.bk, conn);
                let ev: Vec<Vec<Value>> = conn
                    .ev_p()
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|v| {
                                json!({
                                    "num": v.num.to_string(),
                                    "denom_exp": v.denom_exp,
                                    "certified": v.certified,
                                    "integral": v.is_integral(p),
                                })
                            })
                            .collect()
                    })
                    .collect();
                Ok(json!({
                    "pass": h.holds,
                    "iterations": conn.iterations(),
                    "u_prec": conn.u_prec(),
                    "max_denominator": conn.max_denominator(),
                    "residual_zero_to_u_prec": h.u_prec,
                    "residual_witness": h.witness,
                    "ev_p": ev,
                    "n_mat": n_mat_json(conn, self.bk.ctx().n()),
                }))
            }
            "griffiths" => {
                let conn = self.conn()?;
                let layers = ConnectionLayers::new(self.bk, conn, self.i_max)?;
                let mut rows = Vec::new();
                for i in 0..=self.i_max + 1 {
                    match layers.verify_griffiths(i) {
                        Ok(r) => rows.push(json!({"i": r.index, "generators": r.generators, "denominator": r.denominator})),
                        Err(Error::GriffithsViolation { index, detail }) => {
                            return Ok(json!({
                                "pass": false,
                                "working_precision": layers.working_precision(),
                                "layers": rows,
                                "violation": {"i": index, "detail": detail},
                            }));
                        }
                        Err(e) => return Err(e),
                    }
                }
                Ok(json!({"pass": true, "working_precision": layers.working_precision(), "layers": rows}))
            }
            "conj-theta" => {
                let conn = self.conn()?;
                let layers = ConnectionLayers::new(self.bk, conn, self.i_max)?;
                let out = layers.conj_theta(&mut ChaCha8Rng::seed_from_u64(self.seed))?;
                let g = self.graded()?;
                let matches = g.pieces.iter().enumerate().all(|(i, d)| out.ftm.profile(i as i64) == *d);
                let prop = out.ftm.check_prop();
                let thm = check_theorem(g, &ht_weights(g), p, self.bk.assume_crystalline());
                let rows: Vec<Value> = out
                    .ftm
                    .layers()
                    .iter()
                    .enumerate()
                    .map(|(i, l)| json!({"i": i, "rank": l.theta.rows(), "theta": matrix_json(&l.theta), "iota": matrix_json(&l.iota)}))
                    .collect();
                let valid = out.ftm.is_valid();
                Ok(json!({
                    "pass": valid && matches && prop.pass == thm.pass,
                    "valid": valid,
                    "divisors_match_graded": matches,
                    "check_prop": prop.pass,
                    "check_theorem": thm.pass,
                    "working_precision": out.working_precision,
                    "layers": rows,
                }))
            }
            other => Err(Error::Precondition(format!("command {other} does not apply"))),
        }
    }
}

fn run_theta(m: &FilteredThetaModule, cmd: &str) -> nkit_core::Result<Value> {
    match cmd {
        "validate" => {
            let v = m.validate();
            Ok(json!({"pass": v.is_empty(), "violations": serde_json::to_value(&v).expect("serializable")}))
        }
        "check-prop" => Ok(serde_json::to_value(m.check_prop()).expect("serializable")),
        "split" => {
            let mut rows = Vec::new();
            for i in m.indices() {
                let row = match m.split_layer(i)? {
                    Split::Section(s) => json!({"i": i, "section": matrix_json(&s.matrix), "verified": m.verify_section(&s)}),
                    Split::Obstruction(o) => json!({"i": i, "obstruction": {"layer": o.layer, "reason": o.reason}}),
                };
                rows.push(row);
            }
            Ok(json!({"layers": rows}))
        }
        "decompose" => Ok(serde_json::to_value(m.decompose()?).expect("serializable")),
        "hom-vanish" => {
            let rows = m.indices().map(|i| Ok(json!({"i": i, "vanishes": m.hom_vanish(i)?}))).collect::<nkit_core::Result<Vec<_>>>()?;
            Ok(json!({"layers": rows}))
        }
        other => Err(Error::Precondition(format!("command {other} does not apply"))),
    }
}

fn run_weyl(w: &GradedWeylModule, cmd: &str) -> nkit_core::Result<Value> {
    match cmd {
        "weyl-check" => {
            let v: Vec<Value> = w.check().iter().map(|x| json!({"degree": x.degree, "detail": x.detail})).collect();
            let powers: Vec<bool> = (1..=4).map(|i| w.check_power_identity(i)).collect();
            Ok(json!({"pass": v.is_empty() && powers.iter().all(|b| *b), "violations": v, "power_identities": powers}))
        }
        "rees" => {
            let f = w.rees();
            let rows: Vec<Value> = f.layers.iter().map(|l| json!({"i": l.index, "rank": l.derivation.cols()})).collect();
            let back = f.unrees()?;
            Ok(json!({"lo": f.lo, "layers": rows, "round_trip": back.rees() == f}))
        }
        "sen" => {
            let s = w.sen_module()?;
            let agree = w.sen_agreement()?;
            Ok(json!({
                "pass": agree,
                "degree": s.degree,
                "theta": matrix_json(&s.theta),
                "agreement": agree,
                "nilpotent": nilpotence_check(&s.theta, w.ring().p()),
            }))
        }
        other => Err(Error::Precondition(format!("command {other} does not apply"))),
    }
}

fn classify(cmd: &str, result: &nkit_core::Result<Value>) -> Status {
    match result {
        Err(Error::UncertifiedPrecision(_)) => Status::Precision,
        Err(_) => Status::VerdictFailure,
        Ok(v) if VERDICT_COMMANDS.contains(&cmd) && v.get("pass") != Some(&Value::Bool(true)) => Status::VerdictFailure,
        Ok(_) => Status::Ok,
    }
}

fn embed(result: nkit_core::Result<Value>) -> Value {
    match result {
        Ok(v) => v,
        Err(e) => json!({"error": {"kind": error_kind(&e), "message": e.to_string()}}),
    }
}

/// Execute `commands` (already planned) on a parsed document.
pub fn run(doc: &InstanceDoc, commands: &[String], input_sha256: &str, opts: &Options) -> Report {
    let n = opts.n.unwrap_or(doc.n);
    let m = opts.m.or(doc.m);
    let seed = opts.seed.or(doc.seed).unwrap_or(0);
    let mut results = Map::new();
    let mut status = Status::Ok;
    let mut record = |cmd: &str, r: nkit_core::Result<Value>, status: &mut Status| {
        *status = (*status).max(classify(cmd, &r));
        results.insert(cmd.to_string(), embed(r));
    };
    let mut i_max_used = None;
    match &doc.payload {
        Payload::Bk(_) => {
            let m = m.unwrap_or(64);
            match bk_module(doc, n, m) {
                Ok(bk) => {
                    let i_max = opts.imax.unwrap_or_else(|| bk.default_imax());
                    i_max_used = Some(i_max);
                    let s = BkSession { bk: &bk, i_max, seed, nyg: OnceCell::new(), graded: OnceCell::new(), conn: OnceCell::new() };
                    for c in commands.iter().filter(|c| *c != "selftest") {
                        record(c, s.run(c), &mut status);
                    }
                    if let Some(n2) = opts.escalate {
                        let r = bk_module(doc, n2.max(n), m).and_then(|b| precision_escalate(&b, n, n2, i_max)).map(|rep| {
                            let pieces = |g: &GradedReport| g.pieces.iter().map(profile_json).collect::<Vec<_>>();
                            json!({"stable": true, "low": rep.low, "high": rep.high, "graded_low": pieces(&rep.graded_low), "graded_high": pieces(&rep.graded_high)})
                        });
                        record("escalate", r, &mut status);
                    }
                }
                Err(e) => {
                    for c in commands.iter().filter(|c| *c != "selftest") {
                        record(c, Err(e.clone()), &mut status);
                    }
                }
            }
        }
        Payload::Theta(_) => {
            let module = theta_module(doc, n);
            for c in commands.iter().filter(|c| *c != "selftest") {
                let r = module.as_ref().map_err(Clone::clone).and_then(|t| run_theta(t, c));
                record(c, r, &mut status);
            }
        }
        Payload::Weyl(_) => {
            let module = weyl_module(doc, n);
            for c in commands.iter().filter(|c| *c != "selftest") {
                let r = module.as_ref().map_err(Clone::clone).and_then(|w| run_weyl(w, c));
                record(c, r, &mut status);
            }
        }
    }
    if commands.iter().any(|c| c == "selftest") {
        record("selftest", Ok(selftest(seed)), &mut status);
    }
    let mut precision = json!({"p": doc.p, "N": n});
    if let (Payload::Bk(_), obj) = (&doc.payload, precision.as_object_mut().expect("object")) {
        obj.insert("M".into(), json!(m.unwrap_or(64)));
        obj.insert("i_max".into(), json!(i_max_used));
    }
    let value = json!({
        "tool": {"name": "nkit", "version": crate::VERSION},
        "input_sha256": input_sha256,
        "input": doc.to_json(),
        "precision": precision,
        "seed": seed,
        "commands": commands,
        "results": results,
        "status": status.label(),
    });
    Report { commands: commands.to_vec(), value, status }
}
