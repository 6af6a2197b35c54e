#![no_main]

use libfuzzer_sys::fuzz_target;
use pfo_core::data::{parse_observations, write_observations};

fuzz_target!(|bytes: &[u8]| {
    if let Ok(rows) = parse_observations(bytes) {
        // anything accepted must survive a write/parse round trip
        let mut buf = Vec::new();
        write_observations(&mut buf, &rows).unwrap();
        assert_eq!(parse_observations(buf.as_slice()).unwrap(), rows);
    }
});
