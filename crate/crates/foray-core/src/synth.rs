//! The synthesis driver: alternate sketch enumeration, constraint solving,
//! completion, and simulator validation, learning blocking clauses from
//! failed candidates into a growing knowledge base.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;


use crate::afl::{complete, AttackProgram, AttackSketch};
use crate::constraints::{compile_sketch, CompileError, MarketModel, NamedAtom};
use crate::goal::{render_goal, target_tokens, Goal};
use crate::ir::{ProtocolIR, TokenId};
use crate::num::{abs, rat, Rational};
use crate::sim::{execute, validate, ChainState};
use crate::sketch::{ProbeTraceEntry, SketchBudget, SketchEnumerator, SketchGenError};
use crate::solver::{blocking_formula, Model, SmtBackend, SolverError, SolverStats};

/// Learned clauses with provenance. Clauses only ever accumulate within a
/// run.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    clauses: Vec<NamedAtom>,
    provenance: Vec<ClauseProvenance>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseProvenance {
    pub sketch_index: usize,
    pub model_hash: u64,
    pub reason: String,
}

impl KnowledgeBase {
    pub fn atoms(&self) -> &[NamedAtom] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn provenance(&self) -> &[ClauseProvenance] {
        &self.provenance
    }

    fn push(&mut self, atom: NamedAtom, provenance: ClauseProvenance) {
        // A clause over no variables would be vacuously false and poison
        // every later query.
        if let crate::constraints::Formula::Or(parts) = &atom.formula {
            if parts.is_empty() {
                return;
            }
        }
        self.clauses.push(atom);
        self.provenance.push(provenance);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthBudget {
    pub sketch: SketchBudget,
    pub max_models_per_sketch: usize,
    pub solve_timeout_ms: u64,
    pub blocking_radius: Rational,
}

impl Default for SynthBudget {
    fn default() -> Self {
        SynthBudget {
            sketch: SketchBudget::default(),
            max_models_per_sketch: 16,
            solve_timeout_ms: 10_000,
            blocking_radius: rat(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Attack(AttackProgram),
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchAttempt {
    pub index: usize,
    pub ops: Vec<String>,
    pub constraint_count: usize,
    pub models_tried: usize,
    pub result: String,
    /// One entry per rejected model: why validation failed.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub outcome: Outcome,
    pub goal: String,
    pub sketches_tried: usize,
    pub models_tried: usize,
    pub kappa_size: usize,
    pub solver: SolverStats,
    pub attempts: Vec<SketchAttempt>,
    /// Attacker balance change per goal target token, simulator-verified.
    pub profit: Vec<(TokenId, Rational)>,
    pub probe_trace: Vec<ProbeTraceEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Sketch(#[from] SketchGenError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("solver failure: {0}")]
    Solver(#[from] SolverError),
}

/// Stable label for grouping repeated failures of the same kind. Digit
/// runs are squashed so the same revert with different magnitudes still
/// counts as a repeat.
pub fn failure_signature(verdict: &crate::sim::Verdict) -> String {
    let raw = match &verdict.trace.revert {
        Some((k, why)) => format!("revert@{k}: {why}"),
        None => verdict
            .failure
            .clone()
            .unwrap_or_else(|| "goal not satisfied".to_string()),
    };
    let mut out = String::with_capacity(raw.len());
    let mut in_digits = false;
    for c in raw.chars() {
        if c.is_ascii_digit() {
            if !in_digits {
                out.push('#');
                in_digits = true;
            }
        } else {
            in_digits = false;
            out.push(c);
        }
    }
    out
}

/// Builds a blocking clause from a failed validation.
///
/// A revert at op `k` blames the hole values of ops up to and including
/// `k`: the clause excludes that prefix assignment within `radius`. A
/// goal miss without revert blames the whole model.
pub fn learn_conflict(
    sketch: &AttackSketch,
    model: &Model,
    verdict: &crate::sim::Verdict,
    radius: &Rational,
    seq: usize,
) -> (NamedAtom, String) {
    let (vars, reason): (BTreeSet<String>, String) = match &verdict.trace.revert {
        Some((k, why)) => {
            let mut vars = BTreeSet::new();
            for op in sketch.ops.iter().take(k + 1) {
                for h in op.holes() {
                    vars.insert(h.to_string());
                }
            }
            (vars, format!("revert at op {k}: {why}"))
        }
        None => (
            model.values.keys().cloned().collect(),
            verdict
                .failure
                .clone()
                .unwrap_or_else(|| "goal not satisfied".to_string()),
        ),
    };
    let restricted = Model {
        values: model
            .values
            .iter()
            .filter(|(k, _)| vars.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    };
    let atom = NamedAtom {
        name: format!("kb{seq}"),
        label: crate::constraints::Label::Knowledge,
        formula: blocking_formula(&restricted, radius),
    };
    (atom, reason)
}

fn model_magnitude(m: &Model) -> Rational {
    m.values
        .values()
        .map(abs)
        .max()
        .unwrap_or_else(|| rat(0))
}

/// Blocking radius for the `streak`-th consecutive failure with the same
/// signature. Real-valued models can hug the feasible boundary within a
/// base unit, where floor semantics always revert them; a pointwise block
/// only nudges the solver by an epsilon. Start at one base unit and grow
/// geometrically, capped by half the magnitude of the blocked values.
fn escalated_radius(base: &Rational, streak: u32, magnitude: &Rational) -> Rational {
    let mut radius = base.clone();
    if radius < rat(1) {
        radius = rat(1);
    }
    let factor = rat(4).pow(streak.min(10) as i32);
    radius *= factor;
    let cap = magnitude.clone() / rat(2);
    if radius > cap && cap >= rat(1) {
        radius = cap;
    }
    radius
}

/// Runs the full synthesis loop for one goal. The protocol must already be
/// validated and inlined. Deterministic given the budget and a
/// deterministic backend.
pub fn synthesize(
    p: &ProtocolIR,
    s0: &ChainState,
    goal: &Goal,
    budget: &SynthBudget,
    backend: &mut dyn SmtBackend,
) -> Result<SynthesisReport, SynthError> {
    let graph = crate::tfg::build_tfg(p).expect("validated protocol builds a graph");
    let mm = MarketModel::from_protocol(p, s0);
    let targets = target_tokens(goal);
    let mut enumerator = SketchEnumerator::new(&graph, s0, targets.clone(), budget.sketch);

    let mut kappa = KnowledgeBase::default();
    let mut attempts = Vec::new();
    let mut sketches_tried = 0usize;
    let mut models_tried = 0usize;
    let mut kb_seq = 0usize;

    loop {
        let Some(sketch) = enumerator.next_sketch(kappa.atoms(), backend)? else {
            break;
        };
        let sketch_index = sketches_tried;
        sketches_tried += 1;
        let mut attempt = SketchAttempt {
            index: sketch_index,
            ops: sketch.ops.iter().map(|o| o.to_string()).collect(),
            constraint_count: 0,
            models_tried: 0,
            result: "exhausted model budget".to_string(),
            failures: Vec::new(),
        };

        let mut last_signature: Option<String> = None;
        let mut dup_streak = 0u32;
        for _ in 0..budget.max_models_per_sketch {
            let cs = compile_sketch(s0, &sketch, goal, kappa.atoms(), &mm)?;
            attempt.constraint_count = cs.len();
            match backend.check_set(&cs, budget.solve_timeout_ms)? {
                crate::solver::Verdict::Unsat(_) => {
                    attempt.result = "unsat".to_string();
                    break;
                }
                crate::solver::Verdict::Unknown => {
                    attempt.result = "unknown".to_string();
                    break;
                }
                crate::solver::Verdict::Sat(model) => {
                    models_tried += 1;
                    attempt.models_tried += 1;
                    let program = match complete(&sketch, model.as_assignment()) {
                        Ok(p) => p,
                        Err(e) => {
                            // Defensive: block the model and move on.
                            let radius = rat(0);
                            let atom = crate::solver::block_model(&cs, &model, &radius, kb_seq);
                            kb_seq += 1;
                            kappa.push(
                                atom,
                                ClauseProvenance {
                                    sketch_index,
                                    model_hash: model.content_hash(),
                                    reason: format!("completion failed: {e}"),
                                },
                            );
                            continue;
                        }
                    };
                    let verdict = validate(&program, s0, goal);
                    if verdict.pass {
                        // Final gate: re-validate before reporting.
                        let confirm = validate(&program, s0, goal);
                        if confirm.pass {
                            attempt.result = "validated".to_string();
                            attempts.push(attempt);
                            let profit = measure_profit(&program, s0, &targets);
                            return Ok(SynthesisReport {
                                outcome: Outcome::Attack(program),
                                goal: render_goal(goal),
                                sketches_tried,
                                models_tried,
                                kappa_size: kappa.len(),
                                solver: backend.stats(),
                                attempts,
                                profit,
                                probe_trace: enumerator.trace.clone(),
                            });
                        }
                    }
                    // Failed candidate: learn the conflict. Repeats of the
                    // same failure signature escalate the blocking radius so
                    // the solver leaves the boundary orbit instead of moving
                    // by an epsilon.
                    let signature = failure_signature(&verdict);
                    if last_signature.as_deref() == Some(signature.as_str()) {
                        dup_streak += 1;
                    } else {
                        dup_streak = 0;
                    }
                    last_signature = Some(signature);
                    let radius = escalated_radius(
                        &budget.blocking_radius,
                        dup_streak,
                        &model_magnitude(&model),
                    );
                    let (atom, reason) =
                        learn_conflict(&sketch, &model, &verdict, &radius, kb_seq);
                    attempt.failures.push(reason.clone());
                    kb_seq += 1;
                    kappa.push(
                        atom,
                        ClauseProvenance {
                            sketch_index,
                            model_hash: model.content_hash(),
                            reason,
                        },
                    );
                }
            }
        }
        attempts.push(attempt);
    }

    Ok(SynthesisReport {
        outcome: Outcome::Exhausted,
        goal: render_goal(goal),
        sketches_tried,
        models_tried,
        kappa_size: kappa.len(),
        solver: backend.stats(),
        attempts,
        profit: Vec::new(),
        probe_trace: enumerator.trace.clone(),
    })
}

fn measure_profit(
    program: &AttackProgram,
    s0: &ChainState,
    targets: &BTreeSet<TokenId>,
) -> Vec<(TokenId, Rational)> {
    match execute(program, s0) {
        Ok((end, _)) => targets
            .iter()
            .map(|t| {
                let delta = end.balance_or_zero(t, &s0.attacker)
                    - s0.balance_or_zero(t, &s0.attacker);
                (t.clone(), delta)
            })
            .collect(),
        Err(_) => Vec::new(),
    }
}

/// Tries each goal in order and returns the first report containing an
/// attack, or the last exhausted report.
pub fn synthesize_any(
    p: &ProtocolIR,
    s0: &ChainState,
    goals: &[Goal],
    budget: &SynthBudget,
    backend: &mut dyn SmtBackend,
) -> Result<Option<SynthesisReport>, SynthError> {
    let mut last = None;
    for goal in goals {
        let report = synthesize(p, s0, goal, budget, backend)?;
        if matches!(report.outcome, Outcome::Attack(_)) {
            return Ok(Some(report));
        }
        last = Some(report);
    }
    Ok(last)
}
