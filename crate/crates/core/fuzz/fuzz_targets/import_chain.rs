#![no_main]

use desvn_core::ledger::LedgerChain;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(chain) = LedgerChain::import(text) {
        let _ = chain.verify_chain();
        let again = LedgerChain::import(&chain.export()).expect("export reimports");
        assert_eq!(again.export(), chain.export());
    }
});
