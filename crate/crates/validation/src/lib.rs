//! Acceptance checks for the whole pipeline live in `tests/acceptance.rs`.
//! This library only holds the verdict printer they share.

use std::fmt::Display;
use std::io::Write;

/// Writes one `PASS`/`FAIL` line to stderr and returns `pass`.
///
/// Goes straight to the stderr handle so the line shows up even when the
/// test harness captures output.
pub fn verdict(name: &str, pass: bool, detail: impl Display) -> bool {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} {name}: {detail}");
    pass
}

/// Wall-clock seconds spent in `f`, with its result.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
