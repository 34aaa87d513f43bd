//! Deterministic JSON emission for graphs, traces, and synthesis reports.
//!
//! All maps are key-sorted and all numbers are rendered as exact rational
//! strings, so identical inputs produce byte-identical JSON. Wall-clock
//! measurements live under the single `timing` key, which comparison
//! tooling strips.

use serde_json::{json, Map, Value};

use foray_core::constraints::ConstraintSet;
use foray_core::ir::ProtocolIR;
use foray_core::num::render_rational;
use foray_core::sim::{ChainState, ExecutionTrace, Verdict};
use foray_core::sketch::ProbeTraceEntry;
use foray_core::synth::{Outcome, SynthesisReport};
use foray_core::tfg::TokenFlowGraph;

pub fn graph_json(graph: &TokenFlowGraph) -> Value {
    let nodes: Vec<Value> = graph.nodes.iter().map(|n| json!(n.to_string())).collect();
    let edges: Vec<Value> = graph
        .edges
        .iter()
        .map(|e| {
            let mut m = Map::new();
            m.insert("id".into(), json!(e.id.to_string()));
            m.insert("label".into(), json!(graph.display_label(e.id)));
            m.insert("op".into(), json!(e.op.to_string()));
            m.insert("src".into(), json!(e.src.to_string()));
            m.insert("dst".into(), json!(e.dst.to_string()));
            m.insert("function".into(), json!(e.provenance.function.to_string()));
            m.insert(
                "statements".into(),
                json!(e
                    .provenance
                    .statements
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()),
            );
            m.insert(
                "counterparty".into(),
                match &e.provenance.counterparty {
                    Some(c) => json!(c.to_string()),
                    None => Value::Null,
                },
            );
            m.insert("reverse".into(), json!(e.provenance.reverse));
            m.insert("phi".into(), json!(e.constraint.to_string()));
            if e.constraint.omits_counterparty {
                m.insert(
                    "phi_note".into(),
                    json!("counterparty-side constraints omitted"),
                );
            }
            Value::Object(m)
        })
        .collect();
    json!({ "nodes": nodes, "edges": edges })
}

pub fn trace_json(trace: &ExecutionTrace) -> Value {
    let ops: Vec<Value> = trace
        .ops
        .iter()
        .map(|d| {
            json!({
                "op": d.op_index,
                "deltas": d
                    .deltas
                    .iter()
                    .map(|(t, a, v)| json!([t.to_string(), a.to_string(), render_rational(v)]))
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut m = Map::new();
    m.insert("ops".into(), Value::Array(ops));
    if let Some((at, why)) = &trace.revert {
        m.insert("revert".into(), json!({ "op": at, "reason": why }));
    }
    Value::Object(m)
}

pub fn verdict_json(v: &Verdict) -> Value {
    let mut m = Map::new();
    m.insert(
        "verdict".into(),
        json!(if v.pass { "pass" } else { "fail" }),
    );
    if let Some(f) = &v.failure {
        m.insert("failure".into(), json!(f));
    }
    m.insert("trace".into(), trace_json(&v.trace));
    Value::Object(m)
}

pub fn probe_trace_json(trace: &[ProbeTraceEntry]) -> Value {
    Value::Array(
        trace
            .iter()
            .map(|p| json!({ "depth": p.depth, "edge": p.edge.to_string(), "sat": p.sat }))
            .collect(),
    )
}

pub fn synthesis_report_json(report: &SynthesisReport, total_ms: u64) -> Value {
    let mut m = Map::new();
    m.insert(
        "outcome".into(),
        json!(match report.outcome {
            Outcome::Attack(_) => "attack",
            Outcome::Exhausted => "exhausted",
        }),
    );
    m.insert("goal".into(), json!(report.goal));
    if let Outcome::Attack(program) = &report.outcome {
        let binding: Map<String, Value> = program
            .binding
            .iter()
            .map(|(k, v)| (k.clone(), json!(render_rational(v))))
            .collect();
        m.insert(
            "attack".into(),
            json!({
                "ops": program.ops.iter().map(|o| o.to_string()).collect::<Vec<_>>(),
                "binding": binding,
            }),
        );
    }
    let profit: Map<String, Value> = report
        .profit
        .iter()
        .map(|(t, v)| (t.to_string(), json!(render_rational(v))))
        .collect();
    m.insert("profit".into(), Value::Object(profit));
    m.insert(
        "stats".into(),
        json!({
            "sketches_tried": report.sketches_tried,
            "models_tried": report.models_tried,
            "kappa_size": report.kappa_size,
            "solver_queries": report.solver.queries,
            "solver_sat": report.solver.sat,
            "solver_unsat": report.solver.unsat,
            "solver_unknown": report.solver.unknown,
        }),
    );
    m.insert(
        "attempts".into(),
        Value::Array(
            report
                .attempts
                .iter()
                .map(|a| {
                    json!({
                        "index": a.index,
                        "ops": a.ops,
                        "constraint_count": a.constraint_count,
                        "models_tried": a.models_tried,
                        "result": a.result,
                        "failures": a.failures,
                    })
                })
                .collect(),
        ),
    );
    m.insert(
        "timing".into(),
        json!({ "solver_ms": report.solver.wall_ms, "total_ms": total_ms }),
    );
    Value::Object(m)
}

pub fn constraints_json(cs: &ConstraintSet) -> Value {
    Value::Array(
        cs.atoms
            .iter()
            .map(|a| {
                json!({
                    "name": a.name,
                    "label": a.label.to_string(),
                    "formula": foray_core::constraints::render_formula(&a.formula),
                })
            })
            .collect(),
    )
}

pub fn protocol_json(p: &ProtocolIR) -> Value {
    let tokens: Vec<Value> = p
        .tokens
        .iter()
        .map(|t| {
            json!({
                "id": t.id.to_string(),
                "decimals": t.decimals,
                "stablecoin": t.is_stablecoin,
                "minters": t.authorized_minters.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let contracts: Vec<Value> = p
        .contracts
        .iter()
        .map(|c| {
            json!({
                "id": c.id.to_string(),
                "functions": c
                    .functions
                    .iter()
                    .map(|f| json!({
                        "name": f.name,
                        "public": f.is_public,
                        "bidirectional": f.bidirectional,
                        "statements": f.body.len(),
                    }))
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "attacker": p.attacker.to_string(),
        "tokens": tokens,
        "contracts": contracts,
        "hooks": p.hooks.iter().map(|h| json!(h.name)).collect::<Vec<_>>(),
    })
}

pub fn state_json(s: &ChainState) -> Value {
    let balances: Map<String, Value> = s
        .balances
        .iter()
        .map(|((t, a), v)| (format!("{t}@{a}"), json!(render_rational(v))))
        .collect();
    json!({ "attacker": s.attacker.to_string(), "balances": balances })
}

/// Pretty string with a trailing newline; stable across runs.
pub fn to_pretty(v: &Value) -> String {
    let mut out = serde_json::to_string_pretty(v).expect("serializable");
    out.push('\n');
    out
}
