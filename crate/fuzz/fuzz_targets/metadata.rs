#![no_main]

use fbspca::data_io::Metadata;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(meta) = Metadata::parse(text) {
        let _ = meta.get_f64("snr");
        let _ = meta.to_text();
    }
});
