//! Oracle checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod aggregators;
pub mod fuzz;
pub mod clustering;
pub mod grad;

/// `Err(msg)` unless `cond`.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}
