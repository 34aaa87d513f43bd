//! Shared helpers for the integration suites: fixture paths and
//! transcript-backed solver construction.
//!
//! By default every suite replays the transcripts committed under
//! `fixtures/transcripts/`, so no solver needs to be installed. To
//! re-record, run with a live solver:
//!
//! ```sh
//! FORAY_RECORD_TRANSCRIPTS=1 FORAY_SOLVER_CMD=path/to/z3run cargo test
//! ```

#![allow(dead_code)]

use std::path::PathBuf;

use foray::backend::choose_backend;
use foray_core::solver::SmtBackend;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn recording() -> bool {
    std::env::var("FORAY_RECORD_TRANSCRIPTS").is_ok()
}

/// Replay backend over a named transcript corpus; recording when the
/// environment provides a live solver and asks for it.
pub fn transcript_backend(corpus: &str) -> Box<dyn SmtBackend> {
    let path = fixture(&format!("transcripts/{corpus}.smtlog"));
    let cmd = std::env::var("FORAY_SOLVER_CMD").ok();
    choose_backend(cmd.as_deref(), Some(&path), recording())
        .unwrap_or_else(|e| panic!("backend for {corpus}: {e}"))
}

/// Boxed variant used where the suite builds backends dynamically.
pub struct BoxedModelLog {
    pub inner: Box<dyn SmtBackend>,
    pub model_hashes: Vec<u64>,
}

impl BoxedModelLog {
    pub fn new(inner: Box<dyn SmtBackend>) -> Self {
        BoxedModelLog {
            inner,
            model_hashes: Vec::new(),
        }
    }
}

impl SmtBackend for BoxedModelLog {
    fn check(
        &mut self,
        query: &foray_core::smtlib::SmtQuery,
    ) -> Result<foray_core::solver::Verdict, foray_core::solver::SolverError> {
        let verdict = self.inner.check(query)?;
        if let foray_core::solver::Verdict::Sat(m) = &verdict {
            self.model_hashes.push(m.content_hash());
        }
        Ok(verdict)
    }

    fn stats(&self) -> foray_core::solver::SolverStats {
        self.inner.stats()
    }
}
