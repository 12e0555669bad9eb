#![no_main]

use libfuzzer_sys::fuzz_target;
use rmc_core::mtx;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = mtx::read_array(data) {
        let mut buf = Vec::new();
        mtx::write_array(&mut buf, &a).unwrap();
        let back = mtx::read_array(buf.as_slice()).unwrap();
        assert_eq!(back.shape(), a.shape());
        assert!(back.iter().zip(a.iter()).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())));
    }
});
