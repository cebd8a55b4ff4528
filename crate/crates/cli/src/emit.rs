//! Report rendering. JSON output is canonical: keys sorted, two-space
//! indentation, trailing newline.

use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

pub fn json(report: &Value) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("serializable");
    s.push('\n');
    s
}

fn summary(v: &Value) -> String {
    if let Some(e) = v.get("error") {
        return format!("error {}: {}", e["kind"].as_str().unwrap_or("?"), e["message"].as_str().unwrap_or(""));
    }
    let mut parts = Vec::new();
    if let Some(b) = v.get("pass").and_then(Value::as_bool) {
        parts.push(if b { "PASS".to_string() } else { "FAIL".to_string() });
    }
    if let Some(w) = v.get("weights").and_then(Value::as_object) {
        let ws: Vec<String> = w.iter().map(|(k, m)| format!("{k}^{m}")).collect();
        parts.push(format!("HT = {{{}}}", ws.join(", ")));
    }
    if let Some(o) = v.get("offending").and_then(Value::as_array).filter(|o| !o.is_empty()) {
        parts.push(format!("offending {}", Value::Array(o.clone())));
    }
    if let Some(l) = v.get("layers").and_then(Value::as_array) {
        parts.push(format!("{} layers", l.len()));
    }
    if let Some(p) = v.get("pieces").and_then(Value::as_array) {
        let ps: Vec<String> = p
            .iter()
            .map(|x| {
                let t = x["torsion"].as_array().map_or(0, Vec::len);
                format!("{}:{}+{}t", x["i"], x["free_rank"], t)
            })
            .collect();
        parts.push(ps.join(" "));
    }
    if let (Some(s), Some(k)) = (v.get("summands").and_then(Value::as_array), v.get("skipped").and_then(Value::as_array)) {
        parts.push(format!("{} summands, {} skipped", s.len(), k.len()));
    }
    if let Some(vi) = v.get("violation") {
        parts.push(format!("violation at i = {}", vi["i"]));
    }
    if parts.is_empty() {
        "ok".into()
    } else {
        parts.join("; ")
    }
}

/// One aligned row per command, followed by the status line.
pub fn text(report: &Value) -> String {
    let mut out = String::new();
    let results = report["results"].as_object().cloned().unwrap_or_default();
    let order: Vec<String> = report["commands"]
        .as_array()
        .map(|a| a.iter().filter_map(|c| c.as_str().map(String::from)).collect())
        .unwrap_or_default();
    let names: Vec<&String> = order.iter().chain(results.keys().filter(|k| !order.contains(k))).collect();
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0);
    out.push_str(&format!("nkit {}", report["tool"]["version"].as_str().unwrap_or("")));
    if let Some(pr) = report.get("precision") {
        out.push_str(&format!("  p = {}  N = {}", pr["p"], pr["N"]));
    }
    out.push('\n');
    for n in names {
        if let Some(v) = results.get(n.as_str()) {
            out.push_str(&format!("  {n:<width$}  {}\n", summary(v)));
        }
    }
    out.push_str(&format!("status: {}\n", report["status"].as_str().unwrap_or("")));
    out
}

pub fn render(report: &Value, format: Format) -> String {
    match format {
        Format::Json => json(report),
        Format::Text => text(report),
    }
}
