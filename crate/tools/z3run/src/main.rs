//! Reads one SMT-LIB2 script from stdin, evaluates it with the embedded
//! Z3, and prints the replies to stdout. Suitable as a `FORAY_SOLVER_CMD`
//! when no system solver is installed:
//!
//! ```sh
//! cargo build --release -p z3run
//! FORAY_SOLVER_CMD=target/release/z3run foray synth ...
//! ```

use std::ffi::{CStr, CString};
use std::io::Read;

fn main() {
    let mut input = String::new();
    std::io::stdin()
        .read_to_string(&mut input)
        .expect("read stdin");
    unsafe {
        let cfg = z3_sys::Z3_mk_config();
        let ctx = z3_sys::Z3_mk_context(cfg);
        // Errors (e.g. get-unsat-core after sat) are reported in-band as
        // `(error "...")` lines; without this the default handler aborts.
        z3_sys::Z3_set_error_handler(ctx, None);
        let c_input = CString::new(input).expect("script contains NUL");
        let result = z3_sys::Z3_eval_smtlib2_string(ctx, c_input.as_ptr());
        let out = CStr::from_ptr(result).to_string_lossy().into_owned();
        print!("{out}");
        z3_sys::Z3_del_context(ctx);
        z3_sys::Z3_del_config(cfg);
    }
}
