#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // Parsing must never panic, and anything accepted must satisfy the
    // trace invariants the energy code relies on.
    if let Ok(trace) = spillscope::trace::read_trace(data) {
        assert!(spillscope::trace::validate_trace(&trace).is_empty());
        let _ = spillscope::energy::energy_series(&trace, 1.0);
    }
    let _ = spillscope::trace::parse_trace_unchecked(data);
});
