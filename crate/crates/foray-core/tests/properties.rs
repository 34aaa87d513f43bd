//! Randomized property suites over the pure pipeline stages.

use std::collections::{BTreeMap, BTreeSet};

use foray_core::afl::{AflOp, AttackProgram, Term};
use foray_core::constraints::eval_formula;
use foray_core::goal::{eval_goal, generate_goals, parse_goal, render_goal};
use foray_core::ir::{
    inline_calls, parse_protocol, render_protocol, statements_preorder, validate_protocol,
    StatementKind, TokenId, DEFAULT_INLINE_DEPTH,
};
use foray_core::num::{rat, Rational};
use foray_core::sim::{execute, load_state, ChainState};
use foray_core::sketch::{SketchBudget, SketchEnumerator};
use foray_core::solver::{blocking_formula, Model};
use foray_core::testkit::{
    brute_force_yields, random_graph, random_program, random_protocol, random_state,
    random_transfer_program, LinearBackend, XorShift64,
};
use foray_core::tfg::{infer_edges, infer_flows, EdgeOp};

const CASES: usize = 1000;

fn token_supply(state: &ChainState, token: &TokenId) -> Rational {
    state
        .balances
        .iter()
        .filter(|((t, _), _)| t == token)
        .map(|(_, v)| v.clone())
        .fold(rat(0), |acc, v| acc + v)
}

#[test]
fn transfer_only_programs_conserve_tokens() {
    let mut rng = XorShift64::new(0x5eed_0001);
    let mut executed = 0;
    for _ in 0..CASES {
        let s0 = random_state(&mut rng);
        let p = random_transfer_program(&mut rng);
        if let Ok((end, _)) = execute(&p, &s0) {
            executed += 1;
            for tok in ["T0", "T1"] {
                let tok = TokenId(tok.to_string());
                assert_eq!(token_supply(&s0, &tok), token_supply(&end, &tok));
            }
        }
    }
    assert!(executed > CASES / 4, "too few non-reverting runs: {executed}");
}

#[test]
fn pool_product_never_shrinks() {
    let mut rng = XorShift64::new(0x5eed_0002);
    let mut swapped = 0;
    for _ in 0..CASES {
        let s0 = random_state(&mut rng);
        let p = random_program(&mut rng);
        let amm = foray_core::ir::AddrId("amm".to_string());
        let t0 = TokenId("T0".to_string());
        let t1 = TokenId("T1".to_string());
        let before = s0.balance_or_zero(&t0, &amm) * s0.balance_or_zero(&t1, &amm);
        if let Ok((end, _)) = execute(&p, &s0) {
            if p.ops.iter().any(|o| matches!(o, AflOp::Swap { .. })) {
                swapped += 1;
            }
            let after = end.balance_or_zero(&t0, &amm) * end.balance_or_zero(&t1, &amm);
            assert!(after >= before, "product shrank: {before:?} -> {after:?}");
        }
    }
    assert!(swapped > 20, "too few swap runs: {swapped}");
}

#[test]
fn reverted_runs_leave_the_input_state_untouched() {
    let mut rng = XorShift64::new(0x5eed_0003);
    let mut reverted = 0;
    for _ in 0..CASES {
        let s0 = random_state(&mut rng);
        let snapshot = s0.clone();
        let p = random_program(&mut rng);
        match execute(&p, &s0) {
            Ok(_) => {}
            Err(revert) => {
                reverted += 1;
                assert_eq!(s0, snapshot);
                // Replays are bit-identical: no hidden state.
                let again = execute(&p, &s0).unwrap_err();
                assert_eq!(revert, again);
            }
        }
    }
    assert!(reverted > CASES / 4, "too few reverting runs: {reverted}");
}

#[test]
fn fee_free_loan_roundtrip_is_neutral() {
    let mut rng = XorShift64::new(0x5eed_0004);
    let mut checked = 0;
    for _ in 0..CASES {
        let mut s0 = random_state(&mut rng);
        if let Some(lender) = s0.lenders.get_mut(&foray_core::ir::AddrId("bank".into())) {
            lender.fee = rat(0);
        }
        let amount = rat(rng.below(100) as i64);
        let p = AttackProgram {
            ops: vec![
                AflOp::Borrow {
                    lender: foray_core::ir::AddrId("bank".into()),
                    token: TokenId("T0".into()),
                    amount: Term::Const(amount.clone()),
                },
                AflOp::Payback {
                    lender: foray_core::ir::AddrId("bank".into()),
                    token: TokenId("T0".into()),
                    amount: Term::Const(amount),
                },
            ],
            binding: Default::default(),
        };
        if let Ok((end, _)) = execute(&p, &s0) {
            checked += 1;
            assert_eq!(end.balances, s0.balances);
        }
    }
    assert!(checked > CASES / 2);
}

#[test]
fn enumeration_matches_brute_force_on_small_graphs() {
    let mut rng = XorShift64::new(0x5eed_0005);
    let mut nonempty = 0;
    for case in 0..300 {
        let (graph, s0) = random_graph(&mut rng, 4);
        let targets: BTreeSet<TokenId> = match rng.below(3) {
            0 => BTreeSet::new(),
            _ => graph
                .nodes
                .iter()
                .filter_map(|n| match n {
                    foray_core::tfg::Node::Token(t) => Some(t.clone()),
                    _ => None,
                })
                .take(1)
                .collect(),
        };
        let budget = SketchBudget {
            max_depth: 4,
            max_sketches: 100_000,
            probe_timeout_ms: 1_000,
        };
        let mut enumerated = BTreeSet::new();
        let mut e = SketchEnumerator::new(&graph, &s0, targets.clone(), budget);
        let mut backend = LinearBackend::default();
        while let Some(s) = e.next_sketch(&[], &mut backend).unwrap() {
            enumerated.insert(s.source_path.clone());
        }
        let mut oracle = LinearBackend::default();
        let expected = brute_force_yields(&graph, &s0, &targets, 4, &mut oracle);
        assert_eq!(enumerated, expected, "case {case}");
        if !expected.is_empty() {
            nonempty += 1;
        }
    }
    assert!(nonempty > 30, "too few nonempty cases: {nonempty}");
}

#[test]
fn flow_predicates_feed_exactly_one_edge() {
    let mut rng = XorShift64::new(0x5eed_0006);
    for case in 0..CASES {
        let p = random_protocol(&mut rng);
        if !validate_protocol(&p).is_empty() {
            continue;
        }
        let mut states = BTreeMap::new();
        for f in p.all_functions() {
            states.insert(f.id(), infer_flows(f, &p.attacker));
        }
        let Ok(edges) = infer_edges(&states, &p) else {
            // Ambiguous loan patterns are a reported error, not a panic.
            continue;
        };
        // Count how many edges each public-function flow feeds. Loan
        // edges consume one public flow (borrow) and one hook flow
        // (payback), swaps consume two, everything else one.
        let mut consumption: BTreeMap<foray_core::ir::StmtId, usize> = BTreeMap::new();
        for e in &edges {
            let counted: Vec<foray_core::ir::StmtId> = match e.op {
                // The callback statement in provenance is bookkeeping, not
                // a flow.
                EdgeOp::Borrow => e.provenance.statements[..1].to_vec(),
                EdgeOp::Payback => e.provenance.statements[1..].to_vec(),
                _ => e.provenance.statements.clone(),
            };
            for sid in counted {
                *consumption.entry(sid).or_default() += 1;
            }
        }
        for f in p.entry_functions() {
            let flows = infer_flows(f, &p.attacker);
            for (sid, _) in &flows.entries {
                let n = consumption.get(sid).copied().unwrap_or(0);
                let bidir_swap = f.bidirectional;
                if bidir_swap {
                    assert!(n >= 1, "case {case}: flow {sid} feeds no edge");
                } else {
                    assert_eq!(n, 1, "case {case}: flow {sid} feeds {n} edges");
                }
            }
        }
    }
}

#[test]
fn parse_render_round_trip_on_random_protocols() {
    let mut rng = XorShift64::new(0x5eed_0007);
    for _ in 0..CASES {
        let p = random_protocol(&mut rng);
        let rendered = render_protocol(&p);
        let reparsed = parse_protocol(&rendered).unwrap();
        let reinlined = inline_calls(&reparsed, DEFAULT_INLINE_DEPTH).unwrap();
        assert_eq!(p, reinlined);
    }
}

#[test]
fn inline_is_idempotent_on_random_protocols() {
    let mut rng = XorShift64::new(0x5eed_0008);
    for _ in 0..CASES {
        let p = random_protocol(&mut rng);
        let again = inline_calls(&p, DEFAULT_INLINE_DEPTH).unwrap();
        assert_eq!(p, again);
        // And no call statements remain in public bodies.
        for f in p.entry_functions() {
            for s in statements_preorder(&f.body) {
                assert!(!matches!(s.kind, StatementKind::Call { .. }));
            }
        }
    }
}

#[test]
fn blocking_a_model_excludes_it() {
    let mut rng = XorShift64::new(0x5eed_0009);
    for _ in 0..CASES {
        let n = 1 + rng.below(5);
        let mut values = BTreeMap::new();
        for i in 0..n {
            let v = Rational::new((rng.below(2000) as i64 - 1000).into(), (1 + rng.below(9) as i64).into());
            values.insert(format!("v{i}"), v);
        }
        let model = Model { values };
        let formula = blocking_formula(&model, &rat(0));
        assert!(!eval_formula(&formula, model.as_assignment()));
        // Any assignment differing in one coordinate satisfies the block.
        let mut other = model.values.clone();
        let key = other.keys().next().unwrap().clone();
        other.insert(key, rat(1_000_000));
        assert!(eval_formula(&formula, &other));
    }
}

#[test]
fn profit_goals_are_monotone_in_end_balance() {
    let mut rng = XorShift64::new(0x5eed_000a);
    let ir = parse_protocol(include_str!("../../foray/fixtures/mumug.ir")).unwrap();
    let goal = &generate_goals(&ir)[0];
    let usdce = TokenId("USDCe".into());
    for _ in 0..CASES {
        let start_v = rat(rng.below(1000) as i64);
        let low_v = rat(rng.below(1000) as i64);
        let bump = rat(rng.below(1000) as i64);
        let mut start = ChainState {
            attacker: ir.attacker.clone(),
            ..Default::default()
        };
        start.set_balance(usdce.clone(), ir.attacker.clone(), start_v);
        let mut low = start.clone();
        low.set_balance(usdce.clone(), ir.attacker.clone(), low_v.clone());
        let mut high = start.clone();
        high.set_balance(usdce.clone(), ir.attacker.clone(), low_v + bump);
        // Increasing the end balance never flips true -> false.
        if eval_goal(goal, &start, &low) {
            assert!(eval_goal(goal, &start, &high));
        }
    }
}

#[test]
fn goal_text_round_trips_on_generated_formulas() {
    let mut rng = XorShift64::new(0x5eed_000b);
    let ir = parse_protocol(include_str!("../../foray/fixtures/mumug.ir")).unwrap();
    for _ in 0..CASES {
        // Assemble a random goal text from safe pieces, then round-trip.
        let atom = |rng: &mut XorShift64| {
            let t = if rng.chance(50) { "MU" } else { "USDCe" };
            let e = if rng.chance(50) { "start" } else { "end" };
            format!("balance({t}, attacker, {e})")
        };
        let expr = |rng: &mut XorShift64| {
            let a = atom(rng);
            match rng.below(3) {
                0 => a,
                1 => format!("{a} + {}", rng.below(50)),
                _ => format!("{a} - {} * {}", atom(rng), 1 + rng.below(9)),
            }
        };
        let cmp = match rng.below(3) {
            0 => "=",
            1 => ">=",
            _ => "<",
        };
        let mut text = format!("{} {cmp} {}", expr(&mut rng), expr(&mut rng));
        if rng.chance(30) {
            text = format!("!({text})");
        }
        if rng.chance(30) {
            text = format!("{text} && 0 < 1");
        }
        let goal = parse_goal(&text, &ir).unwrap();
        let rendered = render_goal(&goal);
        let reparsed = parse_goal(&rendered, &ir).unwrap();
        assert_eq!(goal, reparsed, "through {rendered}");
    }
}

#[test]
fn sim_execution_satisfies_compiled_atoms_without_flooring_loss() {
    // For concrete runs where no division flooring occurs, every atom the
    // compiler would emit holds on the simulator's step states.
    let mut rng = XorShift64::new(0x5eed_000c);
    let ir = parse_protocol(include_str!("../../foray/fixtures/mumug.ir")).unwrap();
    let ir = inline_calls(&ir, DEFAULT_INLINE_DEPTH).unwrap();
    let mut checked = 0;
    for _ in 0..200 {
        // Fee-free pool sized so chosen swaps divide exactly.
        let r0 = 1000 * (1 + rng.below(5) as i64);
        let state_text = format!(
            "attacker attacker\npool amm tokens=MU/USDCe reserves={r0}/{r0} fee=0\nlender defilender token=MU liquidity=5000 fee=0\nbank mubank in=USDCe out=MU quote=pool_ratio(amm)\nbalance mubank MU 100000\nbalance mubank USDCe 1000\nbalance attacker MU {m}\nbalance attacker USDCe 0\n",
            m = 500 + rng.below(1000),
        );
        let s0 = load_state(&state_text).unwrap();
        // Swap chosen backwards from an integral output: y integral and
        // x = y*r0/(r0-y) rational keeps sim division exact.
        let y = 1 + rng.below((r0 / 2) as usize) as i64;
        let x = Rational::new((y * r0).into(), (r0 - y).into());
        if s0.balance_or_zero(&TokenId("MU".into()), &s0.attacker) < x {
            continue;
        }
        let program = AttackProgram {
            ops: vec![AflOp::Swap {
                market: foray_core::ir::AddrId("amm".into()),
                src_token: TokenId("MU".into()),
                dst_token: TokenId("USDCe".into()),
                amount_in: Term::Const(x.clone()),
                min_out: Term::Const(rat(y)),
                to: s0.attacker.clone(),
            }],
            binding: Default::default(),
        };
        let Ok((end, _)) = execute(&program, &s0) else {
            continue;
        };
        checked += 1;
        // Compile the same op as a zero-hole sketch and evaluate.
        let mm = foray_core::constraints::MarketModel::from_protocol(&ir, &s0);
        let sketch = foray_core::afl::AttackSketch {
            ops: program.ops.clone(),
            holes: Default::default(),
            source_path: vec![],
        };
        let goal = parse_goal("0 < 1", &ir).unwrap();
        let cs = foray_core::constraints::compile_sketch(&s0, &sketch, &goal, &[], &mm).unwrap();
        let mut assignment = foray_core::constraints::Assignment::new();
        for tok in &mm.tokens {
            for addr in &mm.addresses {
                assignment.insert(
                    foray_core::constraints::balance_var(tok, addr, 0),
                    s0.balance_or_zero(tok, addr),
                );
                assignment.insert(
                    foray_core::constraints::balance_var(tok, addr, 1),
                    end.balance_or_zero(tok, addr),
                );
            }
        }
        for atom in &cs.atoms {
            assert!(
                eval_formula(&atom.formula, &assignment),
                "atom {} violated by exact sim run",
                atom.name
            );
        }
    }
    assert!(checked > 50, "too few exact cases: {checked}");
}

#[test]
fn transfer_class_op_deltas_sum_to_zero_per_token() {
    // Transfer, swap, borrow, and payback move value between parties; the
    // per-op trace deltas must cancel per token. Mint and burn do not.
    let mut rng = XorShift64::new(0x5eed_000d);
    for _ in 0..CASES {
        let s0 = random_state(&mut rng);
        let p = random_program(&mut rng);
        if let Ok((_, trace)) = execute(&p, &s0) {
            for delta in &trace.ops {
                let op = &p.ops[delta.op_index];
                if matches!(op, AflOp::Mint { .. } | AflOp::Burn { .. }) {
                    continue;
                }
                let mut sums: BTreeMap<TokenId, Rational> = BTreeMap::new();
                for (tok, _, d) in &delta.deltas {
                    *sums.entry(tok.clone()).or_insert_with(|| rat(0)) += d.clone();
                }
                for (tok, sum) in sums {
                    assert_eq!(sum, rat(0), "op {} leaks {tok}", delta.op_index);
                }
            }
        }
    }
}
