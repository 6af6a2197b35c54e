#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|bytes: &[u8]| {
    if let Ok(text) = std::str::from_utf8(bytes) {
        if let Ok(cfg) = pfo_cli::parse_config(text) {
            // validation of the parsed document must not panic either
            let _ = cfg.params.rate_params();
            let _ = cfg.integrator.build();
            let _ = cfg.timescales.validate();
        }
    }
});
