#![no_main]

use libfuzzer_sys::fuzz_target;
use rplsim::battery::{parse_battery_list, BatteryType};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(list) = parse_battery_list(text) {
        for b in list {
            assert!(b.capacity_mah > 0.0 && b.capacity_mah.is_finite());
            let again: BatteryType = b.to_string().parse().expect("display reparses");
            assert_eq!(again.capacity_mah, b.capacity_mah);
        }
    }
});
