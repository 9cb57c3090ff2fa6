#![no_main]

#[allow(dead_code)]
#[path = "../../crates/core/tests/support/fuzz.rs"]
mod bodies;

libfuzzer_sys::fuzz_target!(|data: &[u8]| bodies::dataset_json_input(data));
