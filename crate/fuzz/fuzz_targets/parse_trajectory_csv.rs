#![no_main]

use libfuzzer_sys::fuzz_target;
use multibubble::io::parse_trajectory_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = parse_trajectory_csv(text) {
        assert!(!table.samples.is_empty());
        assert!(table.samples.windows(2).all(|w| w[0].t < w[1].t));
        for s in &table.samples {
            assert_eq!(s.scales.len(), table.bubbles);
            assert!(s.centers.iter().all(|c| c.len() == table.space_dim));
        }
    }
});
