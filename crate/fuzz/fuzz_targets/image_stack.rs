#![no_main]

use fbspca::data_io::ImageStack;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(stack) = ImageStack::from_bytes(data) {
        assert_eq!(stack.to_bytes(), data);
    }
});
