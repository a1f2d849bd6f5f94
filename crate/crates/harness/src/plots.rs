//! Self-contained matplotlib scripts with the data embedded.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use voronoi_perc::{Error, Result};

use crate::store::{digest_hex, Check, ExperimentManifest, Staging};

fn missing(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

/// Digest of every input manifest, in the given order.
pub fn input_digests(inputs: &[PathBuf]) -> Result<Vec<String>> {
    if inputs.is_empty() {
        return Err(missing("no result directories given"));
    }
    inputs
        .iter()
        .map(|dir| {
            let bytes = fs::read(dir.join("manifest.json"))
                .map_err(|_| missing(format!("{} is not a result directory", dir.display())))?;
            Ok(digest_hex(&bytes))
        })
        .collect()
}

/// Rows of a CSV file as column name to text.
fn read_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|_| missing(format!("cannot read {}", path.display())))?;
    let head = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(head.iter().map(String::from).zip(rec.iter().map(String::from)).collect());
    }
    Ok(rows)
}

fn num(row: &BTreeMap<String, String>, key: &str) -> Result<Value> {
    let s = row.get(key).ok_or_else(|| Error::Format(format!("missing column {key}")))?;
    if s.is_empty() {
        return Ok(Value::Null);
    }
    let x: f64 = s.parse().map_err(|_| Error::Format(format!("bad number {s:?} in column {key}")))?;
    Ok(json!(x))
}

fn columns(rows: &[BTreeMap<String, String>], keys: &[&str]) -> Result<Value> {
    let mut out = serde_json::Map::new();
    for &k in keys {
        let col: Vec<Value> = rows.iter().map(|r| num(r, k)).collect::<Result<_>>()?;
        out.insert(k.into(), Value::Array(col));
    }
    Ok(Value::Object(out))
}

const PRELUDE: &str = r#"import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
"#;

fn script(data: &Value, body: &str, png: &str) -> String {
    format!(
        "{PRELUDE}DATA = json.loads(r'''{}''')\n\n{}\nfig.tight_layout()\nfig.savefig(os.path.join(HERE, \"{png}\"), dpi=150)\n",
        data, body
    )
}

const DECAY: &str = r#"c = DATA["columns"]
p = np.array(c["p"]); n = np.array(c["n"]); m = np.array(c["mean"]); se = np.array(c["stderr"])
fig, ax = plt.subplots()
for fit in DATA["fits"]:
    sel = (p == fit["p"]) & (m > 0)
    ax.errorbar(n[sel], m[sel], yerr=se[sel], fmt="o", ms=3, label=f"p = {fit['p']}")
    if "fit" in fit:
        f = fit["fit"]
        xs = np.linspace(f["n_min"], f["n_max"], 50)
        ax.plot(xs, np.exp(f["intercept"] + f["slope"] * xs), "--", label=f"slope {f['slope']:.3f}")
ax.set_yscale("log")
ax.set_xlabel("n")
ax.set_ylabel("theta_n")
ax.legend()"#;

const CURVES: &str = r#"c = DATA["columns"]
p = np.array(c["p"]); n = np.array(c["n"]); m = np.array(c["mean"]); se = np.array(c["stderr"])
fig, ax = plt.subplots()
if len(set(p)) > 1:
    for r in sorted(set(n)):
        sel = n == r
        ax.errorbar(p[sel], m[sel], yerr=se[sel], marker="o", ms=3, label=f"n = {r:g}")
    ax.set_xlabel("p")
else:
    ax.errorbar(n, m, yerr=se, marker="o", ms=3, label=f"p = {p[0]:g}")
    ax.set_xlabel("n")
ax.set_ylabel(DATA["label"])
ax.legend()"#;

const HEAT: &str = r#"c = DATA["columns"]
x = np.array(c["x1"], dtype=int); y = np.array(c["x2"], dtype=int); v = np.array(c[DATA["value"]], dtype=float)
groups = DATA.get("groups") or [None]
fig, axes = plt.subplots(1, len(groups), figsize=(5 * len(groups), 4), squeeze=False)
for ax, g in zip(axes[0], groups):
    sel = np.ones(len(v), dtype=bool) if g is None else (np.array(c["p"]) == g[0]) & (np.array(c["k"]) == g[1])
    img = np.full((y.max() - y.min() + 1, x.max() - x.min() + 1), np.nan)
    img[y[sel] - y.min(), x[sel] - x.min()] = v[sel]
    eps = DATA["eps"]
    extent = [x.min() * eps, (x.max() + 1) * eps, y.min() * eps, (y.max() + 1) * eps]
    im = ax.imshow(img, origin="lower", extent=extent, cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_title(DATA["value"] if g is None else f"p = {g[0]}, k = {g[1]}")"#;

fn plot_for(dir: &Path, m: &ExperimentManifest, stem: &str) -> Result<String> {
    let params = m.params.get(&m.command).cloned().unwrap_or(Value::Null);
    let d = params.get("d").and_then(Value::as_u64).unwrap_or(2);
    let name = &m.command;
    let text = match name.as_str() {
        "decay" => {
            let rows = read_rows(&dir.join("estimates.csv"))?;
            let fits: Value = serde_json::from_str(&fs::read_to_string(dir.join("fits.json"))?)
                .map_err(|e| Error::Format(e.to_string()))?;
            let data = json!({ "columns": columns(&rows, &["p", "n", "mean", "stderr"])?, "fits": fits });
            script(&data, DECAY, &format!("{stem}.png"))
        }
        "theta" | "crossing" => {
            let rows = read_rows(&dir.join("estimates.csv"))?;
            let label = if name == "theta" { "theta_n(p)" } else { "P[crossing]" };
            let data = json!({ "columns": columns(&rows, &["p", "n", "mean", "stderr"])?, "label": label });
            script(&data, CURVES, &format!("{stem}.png"))
        }
        "influence" | "explore" if d == 2 => {
            let (file, value) = if name == "influence" {
                ("influence.csv", "mean")
            } else {
                ("revealments.csv", "revealment")
            };
            let rows = read_rows(&dir.join(file))?;
            let mut keys = vec!["x1", "x2", value];
            let mut groups = Value::Null;
            if name == "explore" {
                keys.extend(["p", "k"]);
                let mut g: Vec<(String, String)> =
                    rows.iter().map(|r| (r["p"].clone(), r["k"].clone())).collect();
                g.dedup();
                groups = json!(g
                    .iter()
                    .map(|(p, k)| json!([p.parse::<f64>().unwrap_or(f64::NAN), k.parse::<f64>().unwrap_or(f64::NAN)]))
                    .collect::<Vec<_>>());
            }
            let eps = params.get("eps").and_then(Value::as_f64).unwrap_or(1.0);
            let data = json!({ "columns": columns(&rows, &keys)?, "value": value, "eps": eps, "groups": groups });
            script(&data, HEAT, &format!("{stem}.png"))
        }
        other => return Err(missing(format!("no plot is defined for {other} results in d = {d}"))),
    };
    Ok(text)
}

/// Builds every script first so that a bad input leaves nothing behind.
pub fn emit(inputs: &[PathBuf], st: &Staging) -> Result<Option<Check>> {
    let mut scripts = Vec::new();
    for (i, dir) in inputs.iter().enumerate() {
        let m = ExperimentManifest::read(dir).map_err(|_| missing(format!("{} is not a result directory", dir.display())))?;
        let stem = format!("{i:02}-{}", m.command);
        let text = plot_for(dir, &m, &stem)?;
        scripts.push((format!("{stem}.py"), text));
    }
    if scripts.is_empty() {
        return Err(missing("no result directories given"));
    }
    for (name, text) in scripts {
        fs::write(st.file(&name), text)?;
    }
    Ok(None)
}
