#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_cc::io::samples::{parse_holdout, Holdout};

fuzz_target!(|data: &[u8]| {
    match parse_holdout(data) {
        Ok(Holdout::Planar { robot, obstacles }) => {
            assert!(!obstacles.is_empty());
            assert!(obstacles.iter().all(|o| o.len() == robot.len()));
        }
        Ok(Holdout::Joint { q, qd }) => assert_eq!(q.len(), qd.len()),
        Err(_) => {}
    }
});
