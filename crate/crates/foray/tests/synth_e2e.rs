//! Library-level synthesis runs beyond the acceptance criteria: goal
//! handling corner cases and report invariants.

mod common;

use common::{fixture_text, transcript_backend};

use foray_core::goal::{generate_goals, parse_goal};
use foray_core::ir::{inline_calls, parse_protocol, DEFAULT_INLINE_DEPTH};
use foray_core::num::rat;
use foray_core::sim::load_state;
use foray_core::synth::{synthesize, Outcome, SynthBudget};

#[test]
fn absurd_goal_exhausts_without_models() {
    // `0 < 0` is unsatisfiable at every compile, so synthesis walks all
    // sketches and returns exhausted having tried no models.
    let ir = parse_protocol(&fixture_text("mumug.ir")).unwrap();
    let ir = inline_calls(&ir, DEFAULT_INLINE_DEPTH).unwrap();
    let s0 = load_state(&fixture_text("mumug.state")).unwrap();
    let goal = parse_goal("0 < 0", &ir).unwrap();
    let mut backend = transcript_backend("absurd_goal");
    let report = synthesize(&ir, &s0, &goal, &SynthBudget::default(), &mut backend).unwrap();
    assert!(matches!(report.outcome, Outcome::Exhausted));
    assert_eq!(report.models_tried, 0);
    assert!(report.sketches_tried > 0);
    assert!(report
        .attempts
        .iter()
        .all(|a| a.result == "unsat"));
}

#[test]
fn mumug_attack_revalidates_and_reports_positive_profit() {
    let ir = parse_protocol(&fixture_text("mumug.ir")).unwrap();
    let ir = inline_calls(&ir, DEFAULT_INLINE_DEPTH).unwrap();
    let s0 = load_state(&fixture_text("mumug.state")).unwrap();
    let goal = &generate_goals(&ir)[0];
    let mut backend = transcript_backend("mumug");
    let report = synthesize(&ir, &s0, goal, &SynthBudget::default(), &mut backend).unwrap();
    let Outcome::Attack(program) = &report.outcome else {
        panic!("expected attack");
    };
    // Soundness of success: the returned program re-validates.
    let verdict = foray_core::sim::validate(program, &s0, goal);
    assert!(verdict.pass);
    assert!(report.profit.iter().any(|(_, v)| v > &rat(0)));
    // Statistics line up with the attempt log.
    let attempted_models: usize = report.attempts.iter().map(|a| a.models_tried).sum();
    assert_eq!(attempted_models, report.models_tried);
    assert_eq!(report.sketches_tried, report.attempts.len());
    // The probe trace is present and every entry is within depth budget.
    assert!(!report.probe_trace.is_empty());
    assert!(report.probe_trace.iter().all(|p| p.depth < 4));
}

#[test]
fn goals_are_attempted_in_declaration_order() {
    // Two stablecoins: the first (hopeless) goal exhausts, the second is
    // the real one; first success wins.
    let ir = parse_protocol(&fixture_text("mumug.ir")).unwrap();
    let ir = inline_calls(&ir, DEFAULT_INLINE_DEPTH).unwrap();
    let s0 = load_state(&fixture_text("mumug.state")).unwrap();
    let hopeless = parse_goal("0 < 0", &ir).unwrap();
    let real = generate_goals(&ir).remove(0);
    let goals = vec![hopeless, real];
    // The absurd goal replays from its corpus, the real one from mumug's;
    // chain the lookups by trying both corpora.
    struct Chain {
        a: Box<dyn foray_core::solver::SmtBackend>,
        b: Box<dyn foray_core::solver::SmtBackend>,
    }
    impl foray_core::solver::SmtBackend for Chain {
        fn check(
            &mut self,
            q: &foray_core::smtlib::SmtQuery,
        ) -> Result<foray_core::solver::Verdict, foray_core::solver::SolverError> {
            match self.a.check(q) {
                Err(foray_core::solver::SolverError::MissingTranscript { .. }) => self.b.check(q),
                other => other,
            }
        }
    }
    let mut backend = Chain {
        a: transcript_backend("absurd_goal"),
        b: transcript_backend("mumug"),
    };
    let report =
        foray_core::synth::synthesize_any(&ir, &s0, &goals, &SynthBudget::default(), &mut backend)
            .unwrap()
            .unwrap();
    assert!(matches!(report.outcome, Outcome::Attack(_)));
    assert!(report.goal.contains("USDCe"));
}
