#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_cc::io::samples::{parse_samples, write_samples};

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = parse_samples(data) {
        let sum: f64 = f.set.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6 || !sum.is_finite());
        let mut out = Vec::new();
        write_samples(&mut out, f.layout, &f.set).unwrap();
        let back = parse_samples(out.as_slice()).unwrap();
        assert_eq!(back.set.values(), f.set.values());
    }
});
