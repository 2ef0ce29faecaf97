//! Acceptance suite for the workspace. The checks live in
//! `tests/acceptance.rs`; each prints one PASS/FAIL line.
