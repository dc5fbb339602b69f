#![no_main]

use libfuzzer_sys::fuzz_target;
use rplsim::metrics::{read_csv, write_csv_string};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = read_csv(data) {
        let text = write_csv_string(&m);
        let again = read_csv(text.as_bytes()).expect("written csv reads back");
        assert_eq!(write_csv_string(&again), text);
    }
});
