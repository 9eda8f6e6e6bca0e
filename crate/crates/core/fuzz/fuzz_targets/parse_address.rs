#![no_main]

use desvn_core::ledger::Address;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(a) = Address::from_hex(text) {
        assert_eq!(Address::from_hex(&a.to_hex()).unwrap(), a);
    }
});
