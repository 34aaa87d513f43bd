//! Solver transports: an external SMT-LIB2 process, a transcript replay
//! store, and a recording wrapper that captures live replies for later
//! hermetic runs.
//!
//! One query is one process invocation: the full script goes to the
//! solver's stdin, the reply comes back on stdout. Transcripts are keyed
//! by the query's content hash, so replay is byte-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use foray_core::smtlib::{fnv1a, SmtQuery};
use foray_core::solver::{Model, SmtBackend, SolverError, SolverStats, UnsatCore, Verdict};

// ---------------------------------------------------------------------------
// Reply parsing
// ---------------------------------------------------------------------------

/// Parses a raw solver reply into a verdict. The reply may interleave
/// `(error ...)` lines for the batch commands that did not apply.
pub fn parse_reply(query: &SmtQuery, reply: &str) -> Result<Verdict, SolverError> {
    let exprs = top_level_exprs(reply);
    let mut verdict: Option<&str> = None;
    let mut value_lists: Vec<Vec<SExpr>> = Vec::new();
    let mut core: Option<Vec<String>> = None;

    for e in &exprs {
        match e {
            SExpr::Atom(a) => match a.as_str() {
                "sat" | "unsat" | "unknown" | "timeout" => {
                    if verdict.is_none() {
                        verdict = Some(if a == "timeout" { "unknown" } else { a });
                    }
                }
                _ => {}
            },
            SExpr::List(items) => {
                if let Some(SExpr::Atom(head)) = items.first() {
                    if head == "error" {
                        continue;
                    }
                }
                // Either a get-value reply `((x v) ...)` or a core `(a b)`.
                let all_pairs = !items.is_empty()
                    && items.iter().all(|i| matches!(i, SExpr::List(p) if p.len() == 2));
                let all_atoms = items.iter().all(|i| matches!(i, SExpr::Atom(_)));
                if all_pairs {
                    value_lists.push(items.clone());
                } else if all_atoms {
                    core = Some(
                        items
                            .iter()
                            .map(|i| match i {
                                SExpr::Atom(a) => a.clone(),
                                _ => unreachable!(),
                            })
                            .collect(),
                    );
                }
            }
        }
    }

    let fail = |message: String| SolverError::ProtocolError {
        message,
        transcript: format!("--- query\n{}\n--- reply\n{}", query.text, reply),
    };

    match verdict {
        Some("sat") => {
            let mut values = BTreeMap::new();
            for items in &value_lists {
                for pair in items {
                    let SExpr::List(kv) = pair else { continue };
                    let (SExpr::Atom(name), value) = (&kv[0], &kv[1]) else {
                        continue;
                    };
                    let rendered = value.render();
                    let parsed = foray_core::solver::parse_value_sexpr(&rendered)
                        .ok_or_else(|| fail(format!("unparseable value for {name}: {rendered}")))?;
                    values.insert(name.clone(), parsed);
                }
            }
            for v in &query.vars {
                if !values.contains_key(v) {
                    return Err(fail(format!("model misses declared variable {v}")));
                }
            }
            Ok(Verdict::Sat(Model { values }))
        }
        Some("unsat") => Ok(Verdict::Unsat(UnsatCore {
            names: core.unwrap_or_default(),
        })),
        Some("unknown") => Ok(Verdict::Unknown),
        _ => Err(fail("reply carries no sat/unsat/unknown verdict".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

impl SExpr {
    fn render(&self) -> String {
        match self {
            SExpr::Atom(a) => a.clone(),
            SExpr::List(items) => {
                let parts: Vec<String> = items.iter().map(|i| i.render()).collect();
                format!("({})", parts.join(" "))
            }
        }
    }
}

fn top_level_exprs(text: &str) -> Vec<SExpr> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '(' || c == ')' {
            toks.push(text[i..i + 1].to_string());
            i += 1;
            continue;
        }
        if c == '"' {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i] as char != '"' {
                i += 1;
            }
            i = (i + 1).min(bytes.len());
            toks.push(text[start..i].to_string());
            continue;
        }
        let start = i;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            i += 1;
        }
        toks.push(text[start..i].to_string());
    }

    let mut stack: Vec<Vec<SExpr>> = vec![Vec::new()];
    for t in toks {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().unwrap_or_default();
                if let Some(top) = stack.last_mut() {
                    top.push(SExpr::List(done));
                } else {
                    stack.push(vec![SExpr::List(done)]);
                }
            }
            atom => {
                if let Some(top) = stack.last_mut() {
                    top.push(SExpr::Atom(atom.to_string()));
                }
            }
        }
    }
    stack.pop().unwrap_or_default()
}

// ---------------------------------------------------------------------------
// External process backend
// ---------------------------------------------------------------------------

/// Spawns the configured solver command once per query, batch mode.
pub struct ProcessBackend {
    pub command: Vec<String>,
    stats: SolverStats,
}

impl ProcessBackend {
    pub fn new(command: Vec<String>) -> Self {
        ProcessBackend {
            command,
            stats: SolverStats::default(),
        }
    }

    /// Splits a `FORAY_SOLVER_CMD` value on whitespace.
    pub fn from_command_line(cmd: &str) -> Self {
        Self::new(cmd.split_whitespace().map(str::to_string).collect())
    }

    fn run_once(&self, query: &SmtQuery) -> Result<String, SolverError> {
        let unavailable = |e: String| SolverError::SolverUnavailable(e);
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| unavailable("empty solver command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| unavailable(format!("spawn {program}: {e}")))?;
        child
            .stdin
            .take()
            .ok_or_else(|| unavailable("no stdin handle".into()))?
            .write_all(query.text.as_bytes())
            .map_err(|e| unavailable(format!("write query: {e}")))?;
        // stdin handle dropped: the solver sees EOF and evaluates.

        let mut stdout = child
            .stdout
            .take()
            .ok_or_else(|| unavailable("no stdout handle".into()))?;
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout.read_to_string(&mut buf);
            buf
        });

        // The script carries a soft solver timeout; this is the hard stop.
        let deadline = Instant::now() + Duration::from_millis(query.timeout_ms * 2 + 10_000);
        loop {
            match child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(unavailable(format!("wait: {e}"))),
            }
        }
        reader
            .join()
            .map_err(|_| unavailable("reader thread panicked".into()))
    }
}

impl SmtBackend for ProcessBackend {
    fn check(&mut self, query: &SmtQuery) -> Result<Verdict, SolverError> {
        let started = Instant::now();
        let reply = self.run_once(query)?;
        let verdict = if reply.trim().is_empty() {
            // Hard-killed without output.
            Ok(Verdict::Unknown)
        } else {
            parse_reply(query, &reply)
        }?;
        self.stats.queries += 1;
        self.stats.wall_ms += started.elapsed().as_millis() as u64;
        match &verdict {
            Verdict::Sat(_) => self.stats.sat += 1,
            Verdict::Unsat(_) => self.stats.unsat += 1,
            Verdict::Unknown => self.stats.unknown += 1,
        }
        Ok(verdict)
    }

    fn stats(&self) -> SolverStats {
        self.stats
    }
}

// ---------------------------------------------------------------------------
// Transcript store
// ---------------------------------------------------------------------------

/// An append-only log of (query, reply) records, framed with byte lengths:
///
/// ```text
/// --- <hash:016x> q=<len> r=<len>
/// <query bytes>
/// <reply bytes>
/// ```
#[derive(Debug, Default, Clone)]
pub struct TranscriptStore {
    records: BTreeMap<u64, (String, String)>,
}

impl TranscriptStore {
    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let mut records = BTreeMap::new();
        let mut rest = text.as_str();
        while let Some(start) = rest.find("--- ") {
            rest = &rest[start + 4..];
            let Some(nl) = rest.find('\n') else { break };
            let header = &rest[..nl];
            rest = &rest[nl + 1..];
            let mut parts = header.split_whitespace();
            let hash = parts
                .next()
                .and_then(|h| u64::from_str_radix(h, 16).ok())
                .unwrap_or(0);
            let qlen: usize = parts
                .next()
                .and_then(|q| q.strip_prefix("q="))
                .and_then(|q| q.parse().ok())
                .unwrap_or(0);
            let rlen: usize = parts
                .next()
                .and_then(|r| r.strip_prefix("r="))
                .and_then(|r| r.parse().ok())
                .unwrap_or(0);
            if rest.len() < qlen + 1 + rlen {
                break;
            }
            let query = rest[..qlen].to_string();
            let reply = rest[qlen + 1..qlen + 1 + rlen].to_string();
            rest = &rest[qlen + 1 + rlen..];
            // Integrity: the header hash must match the stored bytes.
            if fnv1a(query.as_bytes()) == hash {
                records.insert(hash, (query, reply));
            }
        }
        Ok(TranscriptStore { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, query: &SmtQuery) -> Option<&str> {
        let (stored_query, reply) = self.records.get(&query.content_hash())?;
        if stored_query == &query.text {
            Some(reply)
        } else {
            None
        }
    }

    pub fn insert(&mut self, query: &str, reply: &str) {
        self.records
            .insert(fnv1a(query.as_bytes()), (query.to_string(), reply.to_string()));
    }

    pub fn save(&self, path: &Path) -> Result<(), std::io::Error> {
        let mut out = String::new();
        for (hash, (query, reply)) in &self.records {
            out.push_str(&format!(
                "--- {:016x} q={} r={}\n",
                hash,
                query.len(),
                reply.len()
            ));
            out.push_str(query);
            out.push('\n');
            out.push_str(reply);
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, out)
    }
}

/// Replays recorded replies; a query without a record is an error, which
/// keeps hermetic runs honest.
pub struct ReplayBackend {
    store: TranscriptStore,
    stats: SolverStats,
}

impl ReplayBackend {
    pub fn new(store: TranscriptStore) -> Self {
        ReplayBackend {
            store,
            stats: SolverStats::default(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, std::io::Error> {
        Ok(Self::new(TranscriptStore::load(path)?))
    }
}

impl SmtBackend for ReplayBackend {
    fn check(&mut self, query: &SmtQuery) -> Result<Verdict, SolverError> {
        let started = Instant::now();
        let reply = self
            .store
            .lookup(query)
            .ok_or(SolverError::MissingTranscript {
                hash: query.content_hash(),
            })?
            .to_string();
        let verdict = parse_reply(query, &reply)?;
        self.stats.queries += 1;
        self.stats.wall_ms += started.elapsed().as_millis() as u64;
        match &verdict {
            Verdict::Sat(_) => self.stats.sat += 1,
            Verdict::Unsat(_) => self.stats.unsat += 1,
            Verdict::Unknown => self.stats.unknown += 1,
        }
        Ok(verdict)
    }

    fn stats(&self) -> SolverStats {
        self.stats
    }
}

/// Runs a live solver and appends every (query, reply) pair to a
/// transcript file on drop.
pub struct RecordingBackend {
    inner: ProcessBackend,
    store: TranscriptStore,
    path: PathBuf,
    stats: SolverStats,
}

impl RecordingBackend {
    pub fn new(inner: ProcessBackend, path: PathBuf) -> Self {
        let store = TranscriptStore::load(&path).unwrap_or_default();
        RecordingBackend {
            inner,
            store,
            path,
            stats: SolverStats::default(),
        }
    }
}

impl SmtBackend for RecordingBackend {
    fn check(&mut self, query: &SmtQuery) -> Result<Verdict, SolverError> {
        let started = Instant::now();
        let verdict = if let Some(reply) = self.store.lookup(query) {
            let reply = reply.to_string();
            parse_reply(query, &reply)?
        } else {
            let reply = self.inner.run_once(query)?;
            let verdict = parse_reply(query, &reply)?;
            self.store.insert(&query.text, &reply);
            // Persist eagerly so partial runs still leave usable transcripts.
            self.store
                .save(&self.path)
                .map_err(|e| SolverError::SolverUnavailable(format!("save transcript: {e}")))?;
            verdict
        };
        self.stats.queries += 1;
        self.stats.wall_ms += started.elapsed().as_millis() as u64;
        match &verdict {
            Verdict::Sat(_) => self.stats.sat += 1,
            Verdict::Unsat(_) => self.stats.unsat += 1,
            Verdict::Unknown => self.stats.unknown += 1,
        }
        Ok(verdict)
    }

    fn stats(&self) -> SolverStats {
        self.stats
    }
}

/// Chooses a backend: recording when both a live command and a record flag
/// are configured, replay when a transcript is given, live otherwise.
pub fn choose_backend(
    solver_cmd: Option<&str>,
    transcripts: Option<&Path>,
    record: bool,
) -> Result<Box<dyn SmtBackend>, SolverError> {
    match (solver_cmd, transcripts, record) {
        (Some(cmd), Some(path), true) => Ok(Box::new(RecordingBackend::new(
            ProcessBackend::from_command_line(cmd),
            path.to_path_buf(),
        ))),
        (_, Some(path), false) => Ok(Box::new(
            ReplayBackend::from_file(path).map_err(|e| {
                SolverError::SolverUnavailable(format!("load transcripts {}: {e}", path.display()))
            })?,
        )),
        (Some(cmd), None, _) => Ok(Box::new(ProcessBackend::from_command_line(cmd))),
        (None, Some(path), true) => Err(SolverError::SolverUnavailable(format!(
            "recording into {} requires FORAY_SOLVER_CMD",
            path.display()
        ))),
        (None, None, _) => Err(SolverError::SolverUnavailable(
            "no solver configured: set FORAY_SOLVER_CMD or pass --transcripts".into(),
        )),
    }
}
