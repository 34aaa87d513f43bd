//! Command-line surface: `graph`, `sketch`, `synth`, `validate`.


use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use foray_core::afl::{parse_afl_ops, AttackProgram, Term};
use foray_core::constraints::{compile_sketch, MarketModel};
use foray_core::goal::{generate_goals, parse_goal, target_tokens, Goal};
use foray_core::ir::{inline_calls, parse_protocol, validate_protocol, ProtocolIR, DEFAULT_INLINE_DEPTH};

use foray_core::sim::{load_state, validate, ChainState};
use foray_core::sketch::{SketchBudget, SketchEnumerator};
use foray_core::synth::{synthesize_any, Outcome, SynthBudget};
use foray_core::tfg::build_tfg;

use crate::backend::choose_backend;
use crate::dot::graph_dot;
use crate::report;

/// Exit codes: 0 success (attack found, verdict pass), 1 negative verdict,
/// 2 synthesis exhausted, 64 usage/missing file, 65 malformed input,
/// 69 solver unavailable, 70 internal/protocol error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_EXHAUSTED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_SOLVER: i32 = 69;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Parser)]
#[command(
    name = "foray",
    about = "Attack synthesis for DeFi protocol descriptions: token flow graphs, sketch search, solver completion, simulator validation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphFormat {
    Dot,
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct ProtocolOpts {
    /// Protocol description (.ir)
    #[arg(long)]
    pub protocol: PathBuf,
    /// Inline expansion bound for helper calls
    #[arg(long, default_value_t = DEFAULT_INLINE_DEPTH)]
    pub inline_depth: u32,
}

#[derive(Debug, Args)]
pub struct GoalOpts {
    /// Goal formula file
    #[arg(long, conflicts_with = "auto_goals")]
    pub goal: Option<PathBuf>,
    /// Generate one profit goal per declared stablecoin
    #[arg(long)]
    pub auto_goals: bool,
}

#[derive(Debug, Args)]
pub struct SolverOpts {
    /// Transcript file for hermetic replay (or recording with --record)
    #[arg(long)]
    pub transcripts: Option<PathBuf>,
    /// Record live solver replies into --transcripts
    #[arg(long)]
    pub record: bool,
    /// Solver command; defaults to $FORAY_SOLVER_CMD
    #[arg(long)]
    pub solver: Option<String>,
}

impl SolverOpts {
    pub fn backend(
        &self,
    ) -> Result<Box<dyn foray_core::solver::SmtBackend>, foray_core::solver::SolverError> {
        let env_cmd = std::env::var("FORAY_SOLVER_CMD").ok();
        let cmd = self.solver.as_deref().or(env_cmd.as_deref());
        choose_backend(cmd, self.transcripts.as_deref(), self.record)
    }
}

#[derive(Debug, Args)]
pub struct BudgetOpts {
    /// Longest path the sketch search explores
    #[arg(long, default_value_t = 4)]
    pub max_depth: usize,
    /// Sketches to try before giving up
    #[arg(long, default_value_t = 64)]
    pub max_sketches: usize,
    /// Soft solver timeout per feasibility probe
    #[arg(long, default_value_t = 2000)]
    pub probe_timeout_ms: u64,
    /// Models per sketch before moving on
    #[arg(long, default_value_t = 16)]
    pub max_models: usize,
    /// Soft solver timeout per completion query
    #[arg(long, default_value_t = 10000)]
    pub solve_timeout_ms: u64,
    /// Initial blocking radius for model enumeration (rational)
    #[arg(long, default_value = "0")]
    pub blocking_radius: String,
}

impl BudgetOpts {
    fn synth_budget(&self) -> Result<SynthBudget, CliError> {
        let radius = foray_core::num::parse_rational(&self.blocking_radius)
            .ok_or_else(|| CliError::data(format!("bad blocking radius {}", self.blocking_radius)))?;
        if self.max_depth == 0 || self.max_sketches == 0 || self.max_models == 0 {
            return Err(CliError::data("budgets must be positive".into()));
        }
        Ok(SynthBudget {
            sketch: SketchBudget {
                max_depth: self.max_depth,
                max_sketches: self.max_sketches,
                probe_timeout_ms: self.probe_timeout_ms,
            },
            max_models_per_sketch: self.max_models,
            solve_timeout_ms: self.solve_timeout_ms,
            blocking_radius: radius,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Build and print the token flow graph
    Graph {
        #[command(flatten)]
        protocol: ProtocolOpts,
        #[arg(long, value_enum, default_value_t = GraphFormat::Dot)]
        format: GraphFormat,
        /// Write output here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enumerate attack sketches with constraint counts
    Sketch {
        #[command(flatten)]
        protocol: ProtocolOpts,
        /// Initial chain state (.state)
        #[arg(long)]
        state: PathBuf,
        #[command(flatten)]
        goal: GoalOpts,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        solver: SolverOpts,
        /// Write the probe trace (one line per expansion) here
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Synthesize a validated attack program
    Synth {
        #[command(flatten)]
        protocol: ProtocolOpts,
        #[arg(long)]
        state: PathBuf,
        #[command(flatten)]
        goal: GoalOpts,
        #[command(flatten)]
        budget: BudgetOpts,
        #[command(flatten)]
        solver: SolverOpts,
        /// Write the JSON report here (also printed to stdout)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Execute a concrete attack program and check the goal
    Validate {
        #[command(flatten)]
        protocol: ProtocolOpts,
        #[arg(long)]
        state: PathBuf,
        /// Attack program in canonical text form
        #[arg(long)]
        program: PathBuf,
        #[command(flatten)]
        goal: GoalOpts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: String) -> Self {
        CliError {
            code: EXIT_USAGE,
            message,
        }
    }

    fn data(message: String) -> Self {
        CliError {
            code: EXIT_DATA,
            message,
        }
    }

    fn internal(message: String) -> Self {
        CliError {
            code: EXIT_INTERNAL,
            message,
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("FileNotFound: {} ({e})", path.display())))
}

fn load_protocol(opts: &ProtocolOpts) -> Result<ProtocolIR, CliError> {
    let text = read_file(&opts.protocol)?;
    let parsed = parse_protocol(&text).map_err(|e| CliError::data(format!("parse error: {e}")))?;
    let inlined = inline_calls(&parsed, opts.inline_depth)
        .map_err(|e| CliError::data(format!("inline error: {e}")))?;
    let diags = validate_protocol(&inlined);
    if !diags.is_empty() {
        let mut message = String::from("protocol invalid:");
        for d in &diags {
            message.push_str(&format!("\n  {:?}", d));
        }
        return Err(CliError::data(message));
    }
    Ok(inlined)
}

fn load_chain_state(path: &Path, ir: &ProtocolIR) -> Result<ChainState, CliError> {
    let text = read_file(path)?;
    let state = load_state(&text).map_err(|e| CliError::data(format!("state error: {e}")))?;
    if state.attacker != ir.attacker {
        return Err(CliError::data(format!(
            "state attacker {} does not match protocol attacker {}",
            state.attacker, ir.attacker
        )));
    }
    Ok(state)
}

fn resolve_goals(opts: &GoalOpts, ir: &ProtocolIR) -> Result<Vec<Goal>, CliError> {
    if let Some(path) = &opts.goal {
        let text = read_file(path)?;
        let goal =
            parse_goal(text.trim(), ir).map_err(|e| CliError::data(format!("goal error: {e}")))?;
        Ok(vec![goal])
    } else if opts.auto_goals {
        let goals = generate_goals(ir);
        if goals.is_empty() {
            return Err(CliError::data(
                "no stablecoins declared, nothing to auto-generate".into(),
            ));
        }
        Ok(goals)
    } else {
        Err(CliError::usage("pass --goal FILE or --auto-goals".into()))
    }
}

fn emit(out: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::internal(format!("write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn solver_error(e: foray_core::solver::SolverError) -> CliError {
    use foray_core::solver::SolverError::*;
    let code = match &e {
        SolverUnavailable(_) => EXIT_NO_SOLVER,
        ProtocolError { .. } | MissingTranscript { .. } => EXIT_INTERNAL,
    };
    CliError {
        code,
        message: format!("{e}"),
    }
}

pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Cmd::Graph {
            protocol,
            format,
            out,
        } => {
            let ir = load_protocol(&protocol)?;
            let graph =
                build_tfg(&ir).map_err(|e| CliError::data(format!("graph error: {e}")))?;
            let content = match format {
                GraphFormat::Dot => graph_dot(&graph),
                GraphFormat::Json => report::to_pretty(&report::graph_json(&graph)),
                GraphFormat::Text => {
                    let mut s = String::new();
                    for e in &graph.edges {
                        s.push_str(&format!(
                            "{}: {} {} -> {}  [{}]\n",
                            e.id,
                            graph.display_label(e.id),
                            e.src,
                            e.dst,
                            e.constraint
                        ));
                    }
                    s
                }
            };
            emit(out.as_ref(), &content)?;
            Ok(EXIT_OK)
        }
        Cmd::Sketch {
            protocol,
            state,
            goal,
            budget,
            solver,
            trace,
        } => {
            let ir = load_protocol(&protocol)?;
            let s0 = load_chain_state(&state, &ir)?;
            let goals = resolve_goals(&goal, &ir)?;
            let budget = budget.synth_budget()?;
            let mut backend = solver.backend().map_err(solver_error)?;
            let graph =
                build_tfg(&ir).map_err(|e| CliError::data(format!("graph error: {e}")))?;
            let mm = MarketModel::from_protocol(&ir, &s0);
            let goal = &goals[0];
            let targets = target_tokens(goal);
            let mut enumerator = SketchEnumerator::new(&graph, &s0, targets, budget.sketch);
            let mut lines = String::new();
            loop {
                match enumerator.next_sketch(&[], backend.as_mut()) {
                    Ok(Some(sketch)) => {
                        let count = compile_sketch(&s0, &sketch, goal, &[], &mm)
                            .map(|cs| cs.len())
                            .unwrap_or(0);
                        let ops: Vec<String> =
                            sketch.ops.iter().map(|o| o.to_string()).collect();
                        lines.push_str(&format!(
                            "sketch {}: {} constraints | {}\n",
                            enumerator.yielded() - 1,
                            count,
                            ops.join(" ; ")
                        ));
                    }
                    Ok(None) => break,
                    Err(e) => return Err(CliError::internal(format!("{e}"))),
                }
            }
            print!("{lines}");
            if let Some(path) = trace {
                let mut t = String::new();
                for p in &enumerator.trace {
                    t.push_str(&format!(
                        "depth={} edge={} {}\n",
                        p.depth,
                        p.edge,
                        if p.sat { "sat" } else { "unsat" }
                    ));
                }
                std::fs::write(&path, t)
                    .map_err(|e| CliError::internal(format!("write trace: {e}")))?;
            }
            Ok(EXIT_OK)
        }
        Cmd::Synth {
            protocol,
            state,
            goal,
            budget,
            solver,
            report: report_path,
        } => {
            let started = Instant::now();
            let ir = load_protocol(&protocol)?;
            let s0 = load_chain_state(&state, &ir)?;
            let goals = resolve_goals(&goal, &ir)?;
            let budget = budget.synth_budget()?;
            let mut backend = solver.backend().map_err(solver_error)?;
            let outcome = synthesize_any(&ir, &s0, &goals, &budget, backend.as_mut())
                .map_err(|e| match e {
                    foray_core::synth::SynthError::Solver(se) => solver_error(se),
                    foray_core::synth::SynthError::Sketch(
                        foray_core::sketch::SketchGenError::Probe { source, .. },
                    ) => solver_error(source),
                    other => CliError::internal(format!("{other}")),
                })?;
            let Some(result) = outcome else {
                return Err(CliError::data("no goals to synthesize against".into()));
            };
            let total_ms = started.elapsed().as_millis() as u64;
            let json = report::synthesis_report_json(&result, total_ms);
            let content = report::to_pretty(&json);
            print!("{content}");
            if let Some(path) = report_path {
                std::fs::write(&path, &content)
                    .map_err(|e| CliError::internal(format!("write report: {e}")))?;
            }
            match result.outcome {
                Outcome::Attack(_) => Ok(EXIT_OK),
                Outcome::Exhausted => Ok(EXIT_EXHAUSTED),
            }
        }
        Cmd::Validate {
            protocol,
            state,
            program,
            goal,
            out,
        } => {
            let ir = load_protocol(&protocol)?;
            let s0 = load_chain_state(&state, &ir)?;
            let goals = resolve_goals(&goal, &ir)?;
            let text = read_file(&program)?;
            let ops =
                parse_afl_ops(&text).map_err(|e| CliError::data(format!("program error: {e}")))?;
            if let Some(hole) = ops.iter().flat_map(|o| o.holes()).next() {
                return Err(CliError::data(format!(
                    "program is not concrete: hole ?{hole}"
                )));
            }
            let program = AttackProgram {
                ops,
                binding: Default::default(),
            };
            let verdict = validate(&program, &s0, &goals[0]);
            let content = report::to_pretty(&report::verdict_json(&verdict));
            emit(out.as_ref(), &content)?;
            Ok(if verdict.pass { EXIT_OK } else { EXIT_FAIL })
        }
    }
}
