#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cells) = spillscope::eval::report::read_cells_csv(data) {
        let _ = spillscope::eval::report::aggregate(&cells);
    }
});
