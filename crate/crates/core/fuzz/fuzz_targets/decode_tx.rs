#![no_main]

use desvn_core::ledger::Transaction;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(tx) = Transaction::decode(data) {
        assert_eq!(Transaction::decode(&tx.encode()).unwrap(), tx);
    }
});
