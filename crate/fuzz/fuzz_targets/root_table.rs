#![no_main]

use fbspca::bessel::RootTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = RootTable::parse_cache(data) {
        // rounding to 15 digits may merge nearly equal roots, so only require no panic
        let text = table.to_cache_string();
        if let Ok(again) = RootTable::parse_cache(text.as_bytes()) {
            assert_eq!(again.order_count(), table.order_count());
        }
    }
});
