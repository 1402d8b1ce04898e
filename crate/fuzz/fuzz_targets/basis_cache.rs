#![no_main]

use fbspca::basis::BasisIndexSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(basis) = BasisIndexSet::from_cache_bytes(data) {
        assert_eq!(BasisIndexSet::from_cache_bytes(&basis.to_cache_bytes()).unwrap(), basis);
    }
});
