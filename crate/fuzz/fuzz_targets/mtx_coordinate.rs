#![no_main]

use libfuzzer_sys::fuzz_target;
use rmc_core::mtx;

fuzz_target!(|data: &[u8]| {
    if let Ok(x) = mtx::read_coordinate(data) {
        // anything accepted must survive a write/read round trip
        let mut buf = Vec::new();
        mtx::write_coordinate(&mut buf, &x).unwrap();
        let back = mtx::read_coordinate(buf.as_slice()).unwrap();
        assert_eq!(back.mask(), x.mask());
        assert_eq!(back.values(), x.values());
    }
});
