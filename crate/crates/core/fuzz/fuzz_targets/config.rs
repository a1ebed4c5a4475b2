#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_cc::io::config::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::parse(src) {
            for key in ["d", "rho1", "n_w", "scale", "tau_max"] {
                let _ = cfg.with_override(key, "2");
            }
        }
    }
});
