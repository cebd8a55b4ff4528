//! Instance documents: parsing with JSON-pointer error paths, and the
//! canonical echo used in reports.

use std::fmt;

use num_bigint::BigInt;
use serde_json::{json, Map, Value};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "/" } else { &self.path };
        write!(f, "{path}: {}", self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemaErrors(pub Vec<SchemaError>);

impl fmt::Display for SchemaErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.0 {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for SchemaErrors {}

pub type Matrix = Vec<Vec<BigInt>>;
pub type Series = Vec<BigInt>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BkDoc {
    pub frobenius: Vec<Vec<Series>>,
    pub height: u32,
    pub assume_crystalline: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThetaLayerDoc {
    pub iota: Matrix,
    pub theta: Matrix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThetaDoc {
    pub lo: i64,
    pub layers: Vec<ThetaLayerDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperatorDoc {
    pub from: i64,
    pub to: i64,
    pub matrix: Matrix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeylDoc {
    pub lo: i64,
    pub ranks: Vec<usize>,
    pub u: Vec<OperatorDoc>,
    pub d: Vec<OperatorDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Bk(BkDoc),
    Theta(ThetaDoc),
    Weyl(WeylDoc),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Bk(_) => "bk",
            Payload::Theta(_) => "theta",
            Payload::Weyl(_) => "weyl",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceDoc {
    pub name: Option<String>,
    pub p: u64,
    pub n: u32,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub commands: Vec<String>,
    pub payload: Payload,
}

pub const TOP_KEYS: [&str; 9] = ["p", "N", "M", "seed", "commands", "bk", "theta", "weyl", "name"];

struct Parser {
    errors: Vec<SchemaError>,
}

impl Parser {
    fn err(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(SchemaError { path: path.to_string(), message: message.into() });
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        let Some(obj) = v.as_object() else {
            self.err(path, "expected an object");
            return None;
        };
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&format!("{path}/{k}"), "unknown key");
            }
        }
        Some(obj)
    }

    fn field<'a>(&mut self, obj: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a Value> {
        let v = obj.get(key);
        if v.is_none() {
            self.err(&format!("{path}/{key}"), "missing required field");
        }
        v
    }

    fn uint(&mut self, v: &Value, path: &str) -> Option<u64> {
        let r = v.as_u64();
        if r.is_none() {
            self.err(path, "expected a nonnegative integer");
        }
        r
    }

    fn int(&mut self, v: &Value, path: &str) -> Option<i64> {
        let r = v.as_i64();
        if r.is_none() {
            self.err(path, "expected an integer");
        }
        r
    }

    fn bigint(&mut self, v: &Value, path: &str) -> Option<BigInt> {
        match v {
            Value::String(s) => match s.trim().parse::<BigInt>() {
                Ok(x) => Some(x),
                Err(_) => {
                    self.err(path, format!("{s:?} is not a decimal integer"));
                    None
                }
            },
            Value::Number(n) if n.is_i64() => Some(BigInt::from(n.as_i64().unwrap())),
            _ => {
                self.err(path, "expected a decimal string");
                None
            }
        }
    }

    /// A series is a coefficient list (lowest degree first) or a single constant.
    fn series(&mut self, v: &Value, path: &str) -> Option<Series> {
        match v {
            Value::Array(items) => {
                let out: Vec<Option<BigInt>> =
                    items.iter().enumerate().map(|(k, x)| self.bigint(x, &format!("{path}/{k}"))).collect();
                out.into_iter().collect()
            }
            _ => self.bigint(v, path).map(|c| vec![c]),
        }
    }

    fn matrix(&mut self, v: &Value, path: &str, rows: usize, cols: usize) -> Option<Matrix> {
        let Some(items) = v.as_array() else {
            self.err(path, "expected an array of rows");
            return None;
        };
        if items.len() != rows {
            self.err(path, format!("expected {rows} rows, found {}", items.len()));
            return None;
        }
        let mut out = Vec::with_capacity(rows);
        let mut ok = true;
        for (i, row) in items.iter().enumerate() {
            let rp = format!("{path}/{i}");
            let Some(entries) = row.as_array() else {
                self.err(&rp, "expected a row array");
                ok = false;
                continue;
            };
            if entries.len() != cols {
                self.err(&rp, format!("expected {cols} entries, found {}", entries.len()));
                ok = false;
                continue;
            }
            let parsed: Vec<Option<BigInt>> =
                entries.iter().enumerate().map(|(j, x)| self.bigint(x, &format!("{rp}/{j}"))).collect();
            match parsed.into_iter().collect::<Option<Vec<_>>>() {
                Some(r) => out.push(r),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn bk(&mut self, v: &Value) -> Option<BkDoc> {
        let path = "/bk";
        let obj = self.object(v, path, &["frobenius", "height", "assume_crystalline"])?;
        let height = self.field(obj, path, "height").and_then(|h| self.uint(h, "/bk/height"));
        let crys = match obj.get("assume_crystalline") {
            None => Some(false),
            Some(Value::Bool(b)) => Some(*b),
            Some(_) => {
                self.err("/bk/assume_crystalline", "expected a boolean");
                None
            }
        };
        let fp = "/bk/frobenius";
        let a = self.field(obj, path, "frobenius")?;
        let Some(rows) = a.as_array() else {
            self.err(fp, "expected a square matrix of series");
            return None;
        };
        // rank-one shorthand: [["c0", "c1", ...]] is the 1×1 matrix of that series
        let shorthand = rows.len() == 1 && rows[0].as_array().is_some_and(|r| r.iter().all(|x| !x.is_array()));
        let frobenius = if shorthand {
            vec![vec![self.series(&rows[0], &format!("{fp}/0"))?]]
        } else {
            let r = rows.len();
            let mut out = Vec::with_capacity(r);
            for (i, row) in rows.iter().enumerate() {
                let rp = format!("{fp}/{i}");
                match row.as_array() {
                    Some(entries) if entries.len() == r => {
                        let parsed: Vec<Option<Series>> =
                            entries.iter().enumerate().map(|(j, x)| self.series(x, &format!("{rp}/{j}"))).collect();
                        out.push(parsed.into_iter().collect::<Option<Vec<_>>>());
                    }
                    Some(entries) => {
                        self.err(&rp, format!("row has {} entries in a rank {r} matrix", entries.len()));
                        out.push(None);
                    }
                    None => {
                        self.err(&rp, "expected a row array");
                        out.push(None);
                    }
                }
            }
            out.into_iter().collect::<Option<Vec<_>>>()?
        };
        if frobenius.is_empty() {
            self.err(fp, "rank must be positive");
            return None;
        }
        Some(BkDoc { frobenius, height: u32::try_from(height?).ok()?, assume_crystalline: crys? })
    }

    fn theta(&mut self, v: &Value) -> Option<ThetaDoc> {
        let path = "/theta";
        let obj = self.object(v, path, &["lo", "layers"])?;
        let lo = self.field(obj, path, "lo").and_then(|x| self.int(x, "/theta/lo"));
        let layers_v = self.field(obj, path, "layers")?;
        let Some(items) = layers_v.as_array() else {
            self.err("/theta/layers", "expected an array of layers");
            return None;
        };
        let mut layers = Vec::with_capacity(items.len());
        let mut prev = 0usize;
        for (k, l) in items.iter().enumerate() {
            let lp = format!("/theta/layers/{k}");
            let lobj = self.object(l, &lp, &["iota", "theta"])?;
            let th = self.field(lobj, &lp, "theta")?;
            let rank = th.as_array().map_or(0, |a| a.len());
            let theta = self.matrix(th, &format!("{lp}/theta"), rank, rank);
            let iota = self.field(lobj, &lp, "iota").and_then(|x| self.matrix(x, &format!("{lp}/iota"), rank, prev));
            layers.push(ThetaLayerDoc { iota: iota?, theta: theta? });
            prev = rank;
        }
        Some(ThetaDoc { lo: lo?, layers })
    }

    fn operators(&mut self, v: &Value, path: &str, lo: i64, ranks: &[usize]) -> Option<Vec<OperatorDoc>> {
        let Some(items) = v.as_array() else {
            self.err(path, "expected an array of operators");
            return None;
        };
        let rank = |n: i64| -> Option<usize> { usize::try_from(n - lo).ok().and_then(|k| ranks.get(k).copied()) };
        let mut out = Vec::with_capacity(items.len());
        let mut ok = true;
        for (k, op) in items.iter().enumerate() {
            let op_path = format!("{path}/{k}");
            let Some(obj) = self.object(op, &op_path, &["from", "to", "matrix"]) else {
                ok = false;
                continue;
            };
            let from = self.field(obj, &op_path, "from").and_then(|x| self.int(x, &format!("{op_path}/from")));
            let to = self.field(obj, &op_path, "to").and_then(|x| self.int(x, &format!("{op_path}/to")));
            let (Some(from), Some(to)) = (from, to) else {
                ok = false;
                continue;
            };
            let (Some(rf), Some(rt)) = (rank(from), rank(to)) else {
                self.err(&op_path, format!("degrees {from} → {to} leave the window"));
                ok = false;
                continue;
            };
            let matrix = self.field(obj, &op_path, "matrix").and_then(|x| self.matrix(x, &format!("{op_path}/matrix"), rt, rf));
            match matrix {
                Some(matrix) => out.push(OperatorDoc { from, to, matrix }),
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    fn weyl(&mut self, v: &Value) -> Option<WeylDoc> {
        let path = "/weyl";
        let obj = self.object(v, path, &["lo", "ranks", "u", "d"])?;
        let lo = self.field(obj, path, "lo").and_then(|x| self.int(x, "/weyl/lo"))?;
        let ranks_v = self.field(obj, path, "ranks")?;
        let Some(items) = ranks_v.as_array() else {
            self.err("/weyl/ranks", "expected an array of ranks");
            return None;
        };
        let ranks: Vec<usize> = items
            .iter()
            .enumerate()
            .map(|(k, x)| self.uint(x, &format!("/weyl/ranks/{k}")).map(|r| r as usize))
            .collect::<Option<Vec<_>>>()?;
        let u = self.field(obj, path, "u").and_then(|x| self.operators(x, "/weyl/u", lo, &ranks));
        let d = self.field(obj, path, "d").and_then(|x| self.operators(x, "/weyl/d", lo, &ranks));
        Some(WeylDoc { lo, ranks, u: u?, d: d? })
    }
}

fn is_odd_prime(p: u64) -> bool {
    p > 2 && p % 2 == 1 && (3..).step_by(2).take_while(|d| d * d <= p).all(|d| p % d != 0)
}

pub fn parse(bytes: &[u8]) -> Result<InstanceDoc, SchemaErrors> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| {
        SchemaErrors(vec![SchemaError { path: String::new(), message: format!("not UTF-8 JSON: {e}") }])
    })?;
    parse_value(&value)
}

pub fn parse_value(value: &Value) -> Result<InstanceDoc, SchemaErrors> {
    let mut ps = Parser { errors: Vec::new() };
    let doc = parse_inner(&mut ps, value);
    match doc {
        Some(d) if ps.errors.is_empty() => Ok(d),
        _ => {
            if ps.errors.is_empty() {
                ps.err("", "invalid document");
            }
            Err(SchemaErrors(ps.errors))
        }
    }
}

fn parse_inner(ps: &mut Parser, value: &Value) -> Option<InstanceDoc> {
    let obj = ps.object(value, "", &TOP_KEYS)?;
    let p = ps.field(obj, "", "p").and_then(|x| ps.uint(x, "/p"));
    if let Some(p) = p {
        if !is_odd_prime(p) {
            ps.err("/p", format!("p = {p} must be an odd prime"));
        }
    }
    let n = ps.field(obj, "", "N").and_then(|x| ps.uint(x, "/N"));
    if n == Some(0) {
        ps.err("/N", "precision must be positive");
    }
    let m = obj.get("M").and_then(|x| ps.uint(x, "/M"));
    if m == Some(0) {
        ps.err("/M", "precision must be positive");
    }
    let seed = obj.get("seed").and_then(|x| ps.uint(x, "/seed"));
    let name = match obj.get("name") {
        None => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => {
            ps.err("/name", "expected a string");
            None
        }
    };
    let mut commands = Vec::new();
    if let Some(c) = obj.get("commands") {
        match c.as_array() {
            Some(items) => {
                for (k, x) in items.iter().enumerate() {
                    match x.as_str() {
                        Some(s) => commands.push(s.to_string()),
                        None => ps.err(&format!("/commands/{k}"), "expected a command name"),
                    }
                }
            }
            None => ps.err("/commands", "expected an array of command names"),
        }
    }
    let kinds: Vec<&str> = ["bk", "theta", "weyl"].into_iter().filter(|k| obj.contains_key(*k)).collect();
    if kinds.len() != 1 {
        ps.err("", format!("exactly one of bk, theta, weyl is required, found {}", kinds.len()));
        return None;
    }
    let payload = match kinds[0] {
        "bk" => {
            if m.is_none() && !obj.contains_key("M") {
                ps.err("/M", "missing required field for a Breuil-Kisin module");
            }
            Payload::Bk(ps.bk(&obj["bk"])?)
        }
        "theta" => Payload::Theta(ps.theta(&obj["theta"])?),
        _ => Payload::Weyl(ps.weyl(&obj["weyl"])?),
    };
    Some(InstanceDoc { name, p: p?, n: u32::try_from(n?).ok()?, m: m.map(|x| x as usize), seed, commands, payload })
}

fn big(x: &BigInt) -> Value {
    Value::String(x.to_string())
}

fn matrix_json(m: &Matrix) -> Value {
    Value::Array(m.iter().map(|r| Value::Array(r.iter().map(big).collect())).collect())
}

impl InstanceDoc {
    /// Canonical echo; parsing it gives back the same document.
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        if let Some(n) = &self.name {
            obj.insert("name".into(), json!(n));
        }
        obj.insert("p".into(), json!(self.p));
        obj.insert("N".into(), json!(self.n));
        if let Some(m) = self.m {
            obj.insert("M".into(), json!(m));
        }
        if let Some(s) = self.seed {
            obj.insert("seed".into(), json!(s));
        }
        if !self.commands.is_empty() {
            obj.insert("commands".into(), json!(self.commands));
        }
        let payload = match &self.payload {
            Payload::Bk(b) => json!({
                "frobenius": b.frobenius.iter().map(|row| {
                    row.iter().map(|s| Value::Array(s.iter().map(big).collect())).collect::<Vec<_>>()
                }).collect::<Vec<_>>(),
                "height": b.height,
                "assume_crystalline": b.assume_crystalline,
            }),
            Payload::Theta(t) => json!({
                "lo": t.lo,
                "layers": t.layers.iter().map(|l| json!({"iota": matrix_json(&l.iota), "theta": matrix_json(&l.theta)})).collect::<Vec<_>>(),
            }),
            Payload::Weyl(w) => {
                let ops = |v: &[OperatorDoc]| {
                    v.iter().map(|o| json!({"from": o.from, "to": o.to, "matrix": matrix_json(&o.matrix)})).collect::<Vec<_>>()
                };
                json!({"lo": w.lo, "ranks": w.ranks, "u": ops(&w.u), "d": ops(&w.d)})
            }
        };
        obj.insert(self.payload.kind().into(), payload);
        Value::Object(obj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths(r: Result<InstanceDoc, SchemaErrors>) -> Vec<String> {
        r.unwrap_err().0.into_iter().map(|e| e.path).collect()
    }

    #[test]
    fn minimal_rank_one() {
        let doc = parse(br#"{"p": 3, "N": 8, "M": 32, "bk": {"frobenius": [["-3", "1"]], "height": 1}}"#).unwrap();
        let Payload::Bk(b) = &doc.payload else { panic!() };
        assert_eq!(b.frobenius, vec![vec![vec![BigInt::from(-3), BigInt::from(1)]]]);
        assert!(!b.assume_crystalline);
        assert_eq!(parse_value(&doc.to_json()).unwrap(), doc);
    }

    #[test]
    fn rejects_two_and_missing_height() {
        let p = paths(parse(br#"{"p": 2, "N": 8, "M": 32, "bk": {"frobenius": [["1"]], "height": 0}}"#));
        assert_eq!(p, vec!["/p"]);
        let p = paths(parse(br#"{"p": 3, "N": 8, "M": 32, "bk": {"frobenius": [["1"]]}}"#));
        assert_eq!(p, vec!["/bk/height"]);
    }

    #[test]
    fn pointer_paths() {
        let p = paths(parse(br#"{"p": 3, "N": 8, "M": 32, "bk": {"frobenius": [[["1"], ["x"]], [["0"], ["1"]]], "height": 0}}"#));
        assert_eq!(p, vec!["/bk/frobenius/0/1/0"]);
        let p = paths(parse(br#"{"p": 3, "N": 8, "theta": {"lo": 0, "layers": [{"iota": [[]], "theta": [["0", "1"]]}]}}"#));
        assert_eq!(p, vec!["/theta/layers/0/theta/0"]);
        let p = paths(parse(br#"{"p": 3, "N": 8, "extra": 1, "weyl": {"lo": 0, "ranks": [1], "u": [], "d": []}}"#));
        assert_eq!(p, vec!["/extra"]);
    }

    #[test]
    fn theta_and_weyl_round_trip() {
        let t = br#"{"p": 5, "N": 4, "theta": {"lo": -1, "layers": [
            {"iota": [[]], "theta": [["1"]]},
            {"iota": [["1"], ["0"]], "theta": [["1", "0"], ["0", "0"]]}]}}"#;
        let doc = parse(t).unwrap();
        assert_eq!(parse_value(&doc.to_json()).unwrap(), doc);
        let w = br#"{"p": 3, "N": 6, "weyl": {"lo": -1, "ranks": [1, 2],
            "u": [{"from": 0, "to": -1, "matrix": [["1", "0"]]}],
            "d": [{"from": -1, "to": 0, "matrix": [["0"], ["1"]]}]}}"#;
        let doc = parse(w).unwrap();
        assert_eq!(parse_value(&doc.to_json()).unwrap(), doc);
    }
}
