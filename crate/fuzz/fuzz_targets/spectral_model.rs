#![no_main]

use fbspca::spectrum::SpectralModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = SpectralModel::from_bytes(data) {
        let again = SpectralModel::from_bytes(&model.to_bytes()).unwrap();
        assert_eq!(again.block_sizes(), model.block_sizes());
    }
});
