#![no_main]

use fbspca::basis::BasisIndexSet;
use fbspca::expansion::{coefficient_header, decode_coefficients, encode_coefficients};
use libfuzzer_sys::fuzz_target;

// keeps basis construction cheap
const MAX_L: usize = 24;

fuzz_target!(|data: &[u8]| {
    let Ok((_, l, _)) = coefficient_header(data) else {
        return;
    };
    if l == 0 || l > MAX_L {
        return;
    }
    let basis = BasisIndexSet::truncate(l).unwrap();
    if let Ok(sets) = decode_coefficients(data, &basis) {
        assert_eq!(encode_coefficients(&sets, &basis).unwrap(), data);
    }
});
