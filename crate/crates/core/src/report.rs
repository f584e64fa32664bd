//! Canonical serialization of reports, traces and plot data.
//!
//! Object keys are sorted, floats carry 6 significant digits, and an
//! undefined metric is `null` next to a reason string. Equal inputs give
//! byte-equal output.

use serde_json::{json, Map, Value};

use crate::diagnostics::DiagnosticsReport;
use crate::estimator::EstimatorConfig;
use crate::model::{Level, Taxonomy, ValidatedDataset};
use crate::pruner::{PruneConfig, PruneTrace, Termination};
use crate::rank_analysis::{Cell, RankCells, RankReport};
use crate::simulator::GroundTruth;

pub const SCHEMA_VERSION: &str = "1.0.0";

/// Six significant digits; plain notation for magnitudes in [1e-4, 1e15),
/// exponent notation otherwise. Never emits `-0`.
pub fn format_number(x: f64) -> String {
    debug_assert!(x.is_finite());
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..15).contains(&exp) {
        // place the point inside the six rounded digits
        let (sign, mantissa) = mantissa.strip_prefix('-').map_or(("", mantissa), |m| ("-", m));
        let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
        let fixed = if exp >= 5 {
            format!("{digits}{}", "0".repeat((exp - 5) as usize))
        } else if exp >= 0 {
            let (int, frac) = digits.split_at(exp as usize + 1);
            format!("{int}.{frac}")
        } else {
            format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
        };
        format!("{sign}{}", trim_fraction(&fixed))
    } else {
        format!("{}e{exp}", trim_fraction(mantissa))
    }
}

fn trim_fraction(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// JSON number for finite values, `null` otherwise.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

/// Pretty-printed canonical text with a trailing newline.
pub fn to_canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, depth: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => out.push_str(&i.to_string()),
            (_, Some(u)) => out.push_str(&u.to_string()),
            _ => out.push_str(&format_number(n.as_f64().expect("finite float"))),
        },
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string escapes")),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            // arrays of scalars stay on one line
            if items.iter().all(|i| !i.is_array() && !i.is_object()) {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(item, depth + 1, out);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                indent(depth + 1, out);
                write_value(item, depth + 1, out);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(depth, out);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                indent(depth + 1, out);
                out.push_str(&serde_json::to_string(key).expect("string escapes"));
                out.push_str(": ");
                write_value(&map[*key], depth + 1, out);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(depth, out);
            out.push('}');
        }
    }
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn level_name(level: Level) -> &'static str {
    match level {
        Level::First => "first",
        Level::Second => "second",
    }
}

fn vif_entry(vif: Option<f64>) -> (Value, &'static str) {
    match vif {
        Some(v) if v.is_infinite() => (Value::Null, "infinite"),
        Some(v) => (num(v), "finite"),
        None => (Value::Null, "undefined"),
    }
}

/// The measurement, structural and benchmark-level sections shared by the
/// analyze report and the prune trace.
pub fn diagnostics_value(diag: &DiagnosticsReport) -> Value {
    let constructs: Vec<Value> = diag
        .per_construct
        .iter()
        .map(|c| {
            let indicators: Vec<Value> = c
                .indicators
                .iter()
                .map(|i| {
                    let (vif, status) = vif_entry(i.vif);
                    json!({
                        "id": i.indicator,
                        "loading": num(i.loading),
                        "weight": num(i.weight),
                        "vif": vif,
                        "vif_status": status,
                        "external": i.external,
                    })
                })
                .collect();
            json!({
                "id": c.construct,
                "level": level_name(c.level),
                "cronbach_alpha": opt(c.cronbach_alpha),
                "composite_reliability": num(c.composite_reliability),
                "ave": num(c.ave),
                "r_squared": opt(c.r_squared),
                "indicators": indicators,
            })
        })
        .collect();
    let htmt_values: Vec<Value> = diag
        .htmt
        .values
        .iter()
        .map(|row| Value::Array(row.iter().map(|v| opt(*v)).collect()))
        .collect();
    let paths: Vec<Value> = diag
        .paths
        .iter()
        .map(|p| json!({"source": p.source, "target": p.target, "coefficient": num(p.coefficient)}))
        .collect();
    let undefined: Vec<Value> = diag
        .undefined
        .iter()
        .map(|(metric, reason)| json!({"metric": metric, "reason": reason}))
        .collect();
    let human = if diag.human_alignment_n > 0 || diag.human_alignment_pearson.is_some() {
        json!({"pearson": opt(diag.human_alignment_pearson), "n": diag.human_alignment_n})
    } else {
        Value::Null
    };
    json!({
        "estimation": {"converged": diag.converged, "iterations": diag.iterations, "n_models": diag.n_models},
        "constructs": constructs,
        "paths": paths,
        "htmt": {"constructs": diag.htmt.construct_ids, "values": htmt_values},
        "srmr": num(diag.srmr),
        "benchmark": {
            "d_div": opt(diag.d_div),
            "tc": opt(diag.tc),
            "d_valid": opt(diag.d_valid),
            "overall": opt(diag.overall),
            "collinear": diag.collinear,
        },
        "human_alignment": human,
        "undefined": undefined,
        "notes": diag.notes,
    })
}

fn estimator_value(cfg: &EstimatorConfig) -> Value {
    json!({"epsilon": num(cfg.epsilon), "max_iter": cfg.max_iter})
}

/// Input description echoed into every report.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    /// (flag, value) pairs: input file names and other effective settings.
    pub inputs: Vec<(String, Value)>,
}

impl Provenance {
    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.inputs.push((key.to_string(), value.into()));
        self
    }

    fn value(&self) -> Value {
        Value::Object(self.inputs.iter().cloned().collect::<Map<String, Value>>())
    }
}

fn data_value(data: &ValidatedDataset) -> Value {
    json!({
        "n_models": data.n_rows(),
        "n_indicators": data.indicator_ids().len(),
        "dropped_models": data.dropped_models(),
        "unused_indicators": data.unused_indicators(),
    })
}

pub fn analyze_value(
    diag: &DiagnosticsReport,
    data: &ValidatedDataset,
    estimator: &EstimatorConfig,
    provenance: &Provenance,
) -> Value {
    let mut v = diagnostics_value(diag);
    v["schema_version"] = json!(SCHEMA_VERSION);
    v["kind"] = json!("analyze");
    v["config"] = json!({"estimator": estimator_value(estimator), "inputs": provenance.value()});
    v["data"] = data_value(data);
    v
}

pub fn prune_value(trace: &PruneTrace, data: &ValidatedDataset, config: &PruneConfig, provenance: &Provenance) -> Value {
    let steps: Vec<Value> = trace
        .steps
        .iter()
        .map(|s| {
            json!({
                "iteration": s.iteration,
                "indicator": s.indicator,
                "construct": s.construct,
                "reason": serde_json::to_value(s.reason).expect("reason serializes"),
                "value": num(s.value),
                "severity": num(s.severity),
            })
        })
        .collect();
    let violations: Vec<Value> = trace
        .remaining_violations
        .iter()
        .map(|v| {
            json!({
                "indicator": v.indicator,
                "construct": v.construct,
                "reason": serde_json::to_value(v.reason).expect("reason serializes"),
                "value": num(v.value),
                "severity": num(v.severity),
            })
        })
        .collect();
    let fallback: Vec<Value> = trace
        .fallback_notes
        .iter()
        .map(|n| json!({"construct": n.construct, "retained": n.retained, "closest": n.closest, "message": n.message}))
        .collect();
    let termination = match &trace.termination {
        Termination::Clean => json!({"kind": "clean"}),
        Termination::Protected => json!({"kind": "protected"}),
        Termination::Error { indicator, message } => {
            json!({"kind": "error", "indicator": indicator, "message": message})
        }
    };
    let removed: Vec<&str> = trace.steps.iter().map(|s| s.indicator.as_str()).collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "prune",
        "config": {
            "vif_threshold": num(config.vif_threshold),
            "loading_threshold": num(config.loading_threshold),
            "min_indicators": config.min_indicators,
            "estimator": estimator_value(&config.estimator),
            "inputs": provenance.value(),
        },
        "data": data_value(data),
        "steps": steps,
        "removed": removed,
        "termination": termination,
        "fallback_notes": fallback,
        "remaining_violations": violations,
        "initial": diagnostics_value(&trace.initial_report),
        "final": diagnostics_value(&trace.final_report),
        "final_taxonomy": trace.final_taxonomy.to_json_value(),
    })
}

fn cell_value(c: &Cell) -> Value {
    json!({"value": opt(c.value), "n": c.n, "reason": c.reason})
}

fn cells_value(c: &RankCells) -> Value {
    json!({
        "spearman_origin_vs_refined": cell_value(&c.spearman_origin_vs_refined),
        "spearman_origin_vs_human": cell_value(&c.spearman_origin_vs_human),
        "spearman_refined_vs_human": cell_value(&c.spearman_refined_vs_human),
        "pearson_refined_vs_human": cell_value(&c.pearson_refined_vs_human),
    })
}

pub fn rank_value(report: &RankReport, provenance: &Provenance) -> Value {
    let subsets: Vec<Value> = report
        .subsets
        .iter()
        .map(|(def, cells)| {
            json!({
                "name": def.name,
                "key": serde_json::to_value(def.key).expect("key serializes"),
                "side": serde_json::to_value(def.side).expect("side serializes"),
                "size": def.size,
                "cells": cells_value(cells),
            })
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "rank",
        "config": {"inputs": provenance.value()},
        "n_models": report.n_models,
        "dropped_ids": report.dropped_ids,
        "overall": cells_value(&report.overall),
        "subsets": subsets,
    })
}

pub fn truth_value(truth: &GroundTruth) -> Value {
    let mut v = truth.to_json_value();
    v["schema_version"] = json!(SCHEMA_VERSION);
    v["kind"] = json!("ground_truth");
    v["generator"] = json!("ChaCha8");
    v
}

pub fn taxonomy_text(taxonomy: &Taxonomy) -> String {
    to_canonical_json(&taxonomy.to_json_value())
}

fn csv_num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format_number(v),
        Some(v) if v.is_infinite() => "inf".to_string(),
        _ => String::new(),
    }
}

/// Per-metric CSV tables for external plotting: `(file name, contents)`.
pub fn plot_data(diag: &DiagnosticsReport) -> Vec<(String, String)> {
    let mut indicators = String::from("construct,indicator,loading,weight,vif\n");
    for c in &diag.per_construct {
        for i in &c.indicators {
            indicators.push_str(&format!(
                "{},{},{},{},{}\n",
                c.construct,
                i.indicator,
                csv_num(Some(i.loading)),
                csv_num(Some(i.weight)),
                csv_num(i.vif)
            ));
        }
    }
    let mut constructs = String::from("construct,cronbach_alpha,composite_reliability,ave,r_squared\n");
    for c in &diag.per_construct {
        constructs.push_str(&format!(
            "{},{},{},{},{}\n",
            c.construct,
            csv_num(c.cronbach_alpha),
            csv_num(Some(c.composite_reliability)),
            csv_num(Some(c.ave)),
            csv_num(c.r_squared)
        ));
    }
    let mut htmt = String::from("construct");
    for id in &diag.htmt.construct_ids {
        htmt.push(',');
        htmt.push_str(id);
    }
    htmt.push('\n');
    for (id, row) in diag.htmt.construct_ids.iter().zip(&diag.htmt.values) {
        htmt.push_str(id);
        for v in row {
            htmt.push(',');
            htmt.push_str(&csv_num(*v));
        }
        htmt.push('\n');
    }
    let mut benchmark = String::from("metric,value\n");
    for (name, v) in [
        ("d_div", diag.d_div),
        ("tc", diag.tc),
        ("d_valid", diag.d_valid),
        ("overall", diag.overall),
        ("srmr", Some(diag.srmr)),
    ] {
        benchmark.push_str(&format!("{name},{}\n", csv_num(v)));
    }
    vec![
        ("indicators.csv".into(), indicators),
        ("constructs.csv".into(), constructs),
        ("htmt.csv".into(), htmt),
        ("benchmark.csv".into(), benchmark),
    ]
}
