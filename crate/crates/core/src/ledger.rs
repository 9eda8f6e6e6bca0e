//! Simulated permissioned ledger for registering and authenticating drones,
//! RSUs and smart vehicles.
//!
//! Only the command-and-control (C&C) address may register entities. Each
//! accepted registration becomes a gas-metered transaction in a pending
//! pool; [`LedgerChain::mine_block`] packs the pool first-come-first-served
//! into hash-linked blocks under a block gas limit. The registry of
//! registered entities is always the replay of the committed blocks.
//!
//! # Export format
//!
//! [`LedgerChain::export`] writes UTF-8 text, one record per line, fields
//! separated by single spaces:
//!
//! ```text
//! desvn-ledger 1 <cc_hex40> <base_tx_gas> <per_byte_gas> <drone_gas> <rsu_gas> <sv_gas>
//! block <index> <gas_limit> <gas_total> <prev_hash_hex64> <hash_hex64> <tx_count> [<len>:<tx_hex>]...
//! pending <len>:<tx_hex>
//! ```
//!
//! `<len>` is the decimal byte length of the encoded transaction and
//! `<tx_hex>` its lowercase hex. A transaction encodes as
//!
//! ```text
//! sender[20] kind[1] address[20] gas_used[u64 BE] strings...
//! ```
//!
//! where `kind` is 0 (drone), 1 (RSU) or 2 (SV) and the strings are, for a
//! drone, `id_len[1] id area_len[1] area`, for an RSU `area_len[1] area`,
//! and nothing for an SV. Block hashes are SHA-256 over
//!
//! ```text
//! "desvn-block" index[u64 BE] prev_hash[32] gas_limit[u64 BE] gas_total[u64 BE]
//! tx_count[u32 BE] (tx_len[u32 BE] tx)...
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::seed;

pub const DRONE_ID_MAX_CHARS: usize = 5;
pub const AREA_CODE_MAX_CHARS: usize = 4;
pub const ADDRESS_LEN: usize = 20;
pub const HASH_LEN: usize = 32;

const EXPORT_MAGIC: &str = "desvn-ledger";
const EXPORT_VERSION: &str = "1";
const HASH_DOMAIN: &[u8] = b"desvn-block";

/// 20-byte account address.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(pub [u8; ADDRESS_LEN]);

impl Address {
    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        if s.len() != 2 * ADDRESS_LEN {
            return Err(Error::Parse(format!(
                "address must be {} hex characters, got {}",
                2 * ADDRESS_LEN,
                s.len()
            )));
        }
        let mut out = [0u8; ADDRESS_LEN];
        hex::decode_to_slice(s, &mut out).map_err(|e| Error::Parse(format!("address: {e}")))?;
        Ok(Address(out))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Deterministic pseudo-random address.
    pub fn derive(seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        Address(rng.random())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl FromStr for Address {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Address::from_hex(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Drone,
    Rsu,
    Sv,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Drone, EntityKind::Rsu, EntityKind::Sv];

    fn tag(self) -> u8 {
        match self {
            EntityKind::Drone => 0,
            EntityKind::Rsu => 1,
            EntityKind::Sv => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityKind::Drone => "drone",
            EntityKind::Rsu => "rsu",
            EntityKind::Sv => "sv",
        }
    }
}

impl FromStr for EntityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drone" => Ok(EntityKind::Drone),
            "rsu" => Ok(EntityKind::Rsu),
            "sv" => Ok(EntityKind::Sv),
            other => Err(Error::Parse(format!("unknown entity kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntityRecord {
    Drone {
        address: Address,
        drone_id: String,
        area_code: String,
    },
    Rsu {
        address: Address,
        area_code: String,
    },
    Sv {
        address: Address,
    },
}

impl EntityRecord {
    pub fn drone(address: Address, drone_id: impl Into<String>, area_code: impl Into<String>) -> Self {
        EntityRecord::Drone {
            address,
            drone_id: drone_id.into(),
            area_code: area_code.into(),
        }
    }

    pub fn rsu(address: Address, area_code: impl Into<String>) -> Self {
        EntityRecord::Rsu {
            address,
            area_code: area_code.into(),
        }
    }

    pub fn sv(address: Address) -> Self {
        EntityRecord::Sv { address }
    }

    pub fn kind(&self) -> EntityKind {
        match self {
            EntityRecord::Drone { .. } => EntityKind::Drone,
            EntityRecord::Rsu { .. } => EntityKind::Rsu,
            EntityRecord::Sv { .. } => EntityKind::Sv,
        }
    }

    pub fn address(&self) -> Address {
        match self {
            EntityRecord::Drone { address, .. } | EntityRecord::Rsu { address, .. } | EntityRecord::Sv { address } => {
                *address
            }
        }
    }

    fn strings(&self) -> Vec<(&'static str, &str, usize)> {
        match self {
            EntityRecord::Drone {
                drone_id, area_code, ..
            } => vec![
                ("drone_id", drone_id, DRONE_ID_MAX_CHARS),
                ("area_code", area_code, AREA_CODE_MAX_CHARS),
            ],
            EntityRecord::Rsu { area_code, .. } => vec![("area_code", area_code, AREA_CODE_MAX_CHARS)],
            EntityRecord::Sv { .. } => vec![],
        }
    }

    /// Bytes stored on chain: the address plus the UTF-8 string fields.
    pub fn payload_bytes(&self) -> usize {
        ADDRESS_LEN + self.strings().iter().map(|(_, s, _)| s.len()).sum::<usize>()
    }

    pub fn check_lengths(&self) -> Result<(), Rejection> {
        for (field, value, max) in self.strings() {
            let len = value.chars().count();
            if len > max {
                return Err(Rejection::PayloadTooLong { field, len, max });
            }
        }
        Ok(())
    }
}

/// Gas charged per registration: `base_tx_gas + per_byte_gas * payload
/// bytes + the overhead for the entity kind`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasSchedule {
    pub base_tx_gas: u64,
    pub per_byte_gas: u64,
    pub drone_overhead_gas: u64,
    pub rsu_overhead_gas: u64,
    pub sv_overhead_gas: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        // Drones write two strings, RSUs one, SVs only the address.
        GasSchedule {
            base_tx_gas: 21_000,
            per_byte_gas: 68,
            drone_overhead_gas: 40_000,
            rsu_overhead_gas: 20_000,
            sv_overhead_gas: 20_000,
        }
    }
}

impl GasSchedule {
    pub fn overhead(&self, kind: EntityKind) -> u64 {
        match kind {
            EntityKind::Drone => self.drone_overhead_gas,
            EntityKind::Rsu => self.rsu_overhead_gas,
            EntityKind::Sv => self.sv_overhead_gas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_tx_gas == 0 {
            return Err(Error::invalid("base_tx_gas must be positive"));
        }
        Ok(())
    }
}

pub fn gas_cost(record: &EntityRecord, schedule: &GasSchedule) -> u64 {
    schedule.base_tx_gas
        + schedule.per_byte_gas * record.payload_bytes() as u64
        + schedule.overhead(record.kind())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub sender: Address,
    pub record: EntityRecord,
    pub gas_used: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("sender is not the command-and-control authority")]
    Unauthorized,
    #[error("{field} has {len} characters, at most {max} allowed")]
    PayloadTooLong {
        field: &'static str,
        len: usize,
        max: usize,
    },
    #[error("address already registered")]
    AlreadyRegistered,
    #[error("transaction needs {gas} gas, block limit is {limit}")]
    OverGasLimit { gas: u64, limit: u64 },
}

impl Transaction {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        out.extend_from_slice(&self.sender.0);
        out.push(self.record.kind().tag());
        out.extend_from_slice(&self.record.address().0);
        out.extend_from_slice(&self.gas_used.to_be_bytes());
        for (_, s, _) in self.record.strings() {
            out.push(s.len() as u8);
            out.extend_from_slice(s.as_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        let sender = Address(rd.array()?);
        let tag = rd.byte()?;
        let address = Address(rd.array()?);
        let gas_used = u64::from_be_bytes(rd.array()?);
        let record = match tag {
            0 => EntityRecord::drone(address, rd.short_string()?, rd.short_string()?),
            1 => EntityRecord::rsu(address, rd.short_string()?),
            2 => EntityRecord::sv(address),
            t => return Err(Error::Parse(format!("unknown entity tag {t}"))),
        };
        if rd.pos != bytes.len() {
            return Err(Error::Parse(format!("{} trailing bytes after transaction", bytes.len() - rd.pos)));
        }
        record
            .check_lengths()
            .map_err(|e| Error::Parse(format!("transaction payload: {e}")))?;
        Ok(Transaction {
            sender,
            record,
            gas_used,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Parse("transaction truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn byte(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn short_string(&mut self) -> Result<String> {
        let n = self.byte()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Parse("string field is not UTF-8".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub index: u64,
    pub prev_hash: [u8; HASH_LEN],
    pub transactions: Vec<Transaction>,
    pub gas_limit: u64,
    pub gas_total: u64,
    pub hash: [u8; HASH_LEN],
}

impl Block {
    pub fn compute_hash(&self) -> [u8; HASH_LEN] {
        let mut h = Sha256::new();
        h.update(HASH_DOMAIN);
        h.update(self.index.to_be_bytes());
        h.update(self.prev_hash);
        h.update(self.gas_limit.to_be_bytes());
        h.update(self.gas_total.to_be_bytes());
        h.update((self.transactions.len() as u32).to_be_bytes());
        for tx in &self.transactions {
            let bytes = tx.encode();
            h.update((bytes.len() as u32).to_be_bytes());
            h.update(&bytes);
        }
        h.finalize().into()
    }

    fn sealed(index: u64, prev_hash: [u8; HASH_LEN], transactions: Vec<Transaction>, gas_limit: u64) -> Self {
        let gas_total = transactions.iter().map(|t| t.gas_used).sum();
        let mut block = Block {
            index,
            prev_hash,
            transactions,
            gas_limit,
            gas_total,
            hash: [0; HASH_LEN],
        };
        block.hash = block.compute_hash();
        block
    }

    /// Binary form: the hashed fields in hash order with the hash
    /// inserted after `gas_total`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.index.to_be_bytes());
        out.extend_from_slice(&self.prev_hash);
        out.extend_from_slice(&self.gas_limit.to_be_bytes());
        out.extend_from_slice(&self.gas_total.to_be_bytes());
        out.extend_from_slice(&self.hash);
        out.extend_from_slice(&(self.transactions.len() as u32).to_be_bytes());
        for tx in &self.transactions {
            let bytes = tx.encode();
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        let index = u64::from_be_bytes(rd.array()?);
        let prev_hash = rd.array()?;
        let gas_limit = u64::from_be_bytes(rd.array()?);
        let gas_total = u64::from_be_bytes(rd.array()?);
        let hash = rd.array()?;
        let count = u32::from_be_bytes(rd.array()?);
        let mut transactions = Vec::new();
        for _ in 0..count {
            let len = u32::from_be_bytes(rd.array()?) as usize;
            transactions.push(Transaction::decode(rd.take(len)?)?);
        }
        if rd.pos != bytes.len() {
            return Err(Error::Parse("trailing bytes after block".into()));
        }
        Ok(Block {
            index,
            prev_hash,
            transactions,
            gas_limit,
            gas_total,
            hash,
        })
    }

    fn export_line(&self) -> String {
        let mut line = format!(
            "block {} {} {} {} {} {}",
            self.index,
            self.gas_limit,
            self.gas_total,
            hex::encode(self.prev_hash),
            hex::encode(self.hash),
            self.transactions.len()
        );
        for tx in &self.transactions {
            line.push(' ');
            line.push_str(&export_tx(tx));
        }
        line
    }
}

fn export_tx(tx: &Transaction) -> String {
    let bytes = tx.encode();
    format!("{}:{}", bytes.len(), hex::encode(bytes))
}

fn parse_tx(field: &str) -> Result<Transaction> {
    let (len, body) = field
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("transaction field {field:?} lacks a length prefix")))?;
    let len: usize = len
        .parse()
        .map_err(|_| Error::Parse(format!("bad transaction length {len:?}")))?;
    let bytes = hex::decode(body).map_err(|e| Error::Parse(format!("transaction hex: {e}")))?;
    if bytes.len() != len {
        return Err(Error::Parse(format!(
            "transaction length prefix {len} does not match {} decoded bytes",
            bytes.len()
        )));
    }
    Transaction::decode(&bytes)
}

fn parse_hash(s: &str) -> Result<[u8; HASH_LEN]> {
    let mut out = [0u8; HASH_LEN];
    hex::decode_to_slice(s, &mut out).map_err(|e| Error::Parse(format!("hash {s:?}: {e}")))?;
    Ok(out)
}

fn parse_num<T: FromStr>(s: Option<&str>, what: &str) -> Result<T> {
    let s = s.ok_or_else(|| Error::Parse(format!("missing {what}")))?;
    s.parse().map_err(|_| Error::Parse(format!("bad {what} {s:?}")))
}

/// Result of authenticating one address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthOutcome {
    pub authenticated: bool,
    /// Registered addresses compared before the scan ended.
    pub comparisons: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MineReport {
    pub index: u64,
    pub tx_count: usize,
    pub gas_total: u64,
    /// Pending transactions discarded because they can never fit a block.
    pub dropped: Vec<(Transaction, Rejection)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainFault {
    #[error("chain has no genesis block")]
    Empty,
    #[error("block {0} has a bad index")]
    Index(u64),
    #[error("block {0} hash does not match its contents")]
    Hash(u64),
    #[error("block {0} does not link to its predecessor")]
    Link(u64),
    #[error("block {0} gas total is inconsistent or over its limit")]
    Gas(u64),
    #[error("block {0} holds a transaction not sent by the C&C")]
    Sender(u64),
    #[error("block {0} registers an address twice or breaks a length limit")]
    Payload(u64),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Registry {
    records: BTreeMap<Address, EntityRecord>,
    by_kind: BTreeMap<EntityKind, Vec<Address>>,
}

impl Registry {
    fn insert(&mut self, record: EntityRecord) -> bool {
        let address = record.address();
        if self.records.contains_key(&address) {
            return false;
        }
        self.by_kind.entry(record.kind()).or_default().push(address);
        self.records.insert(address, record);
        true
    }

    fn replay(blocks: &[Block]) -> Self {
        let mut reg = Registry::default();
        for tx in blocks.iter().flat_map(|b| &b.transactions) {
            reg.insert(tx.record.clone());
        }
        reg
    }
}

/// Hash-linked chain with a pending pool. Readers borrow it immutably;
/// registration and mining need `&mut`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerChain {
    cc_address: Address,
    schedule: GasSchedule,
    blocks: Vec<Block>,
    pending: Vec<Transaction>,
    registry: Registry,
}

impl LedgerChain {
    /// New chain holding only the genesis block.
    pub fn new(cc_address: Address, schedule: GasSchedule) -> Self {
        LedgerChain {
            cc_address,
            schedule,
            blocks: vec![Block::sealed(0, [0; HASH_LEN], Vec::new(), 0)],
            pending: Vec::new(),
            registry: Registry::default(),
        }
    }

    pub fn cc_address(&self) -> Address {
        self.cc_address
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn record(&self, address: &Address) -> Option<&EntityRecord> {
        self.registry.records.get(address)
    }

    pub fn registered(&self) -> impl Iterator<Item = &EntityRecord> {
        self.registry.records.values()
    }

    pub fn registered_count(&self, kind: EntityKind) -> usize {
        self.registry.by_kind.get(&kind).map_or(0, Vec::len)
    }

    /// Queues a registration. Only the C&C may register, string fields must
    /// respect their length limits, and an address can be registered once.
    pub fn register_entity(&mut self, sender: Address, record: EntityRecord) -> Result<(), Rejection> {
        if sender != self.cc_address {
            return Err(Rejection::Unauthorized);
        }
        record.check_lengths()?;
        let address = record.address();
        if self.registry.records.contains_key(&address) || self.pending.iter().any(|t| t.record.address() == address) {
            return Err(Rejection::AlreadyRegistered);
        }
        let gas_used = gas_cost(&record, &self.schedule);
        self.pending.push(Transaction {
            sender,
            record,
            gas_used,
        });
        Ok(())
    }

    /// Linear scan of the registered addresses of `kind`.
    pub fn authenticate(&self, kind: EntityKind, address: &Address) -> AuthOutcome {
        let list = self.registry.by_kind.get(&kind).map_or(&[][..], Vec::as_slice);
        match list.iter().position(|a| a == address) {
            Some(k) => AuthOutcome {
                authenticated: true,
                comparisons: k + 1,
            },
            None => AuthOutcome {
                authenticated: false,
                comparisons: list.len(),
            },
        }
    }

    /// Packs pending transactions in arrival order until the next one would
    /// exceed `gas_limit`, then appends the block. Transactions that exceed
    /// the limit on their own are dropped from the pool.
    pub fn mine_block(&mut self, gas_limit: u64) -> MineReport {
        let mut dropped = Vec::new();
        let mut keep = Vec::with_capacity(self.pending.len());
        for tx in self.pending.drain(..) {
            if tx.gas_used > gas_limit {
                let rejection = Rejection::OverGasLimit {
                    gas: tx.gas_used,
                    limit: gas_limit,
                };
                dropped.push((tx, rejection));
            } else {
                keep.push(tx);
            }
        }

        let mut gas = 0u64;
        let take = keep
            .iter()
            .take_while(|tx| {
                let fits = gas + tx.gas_used <= gas_limit;
                if fits {
                    gas += tx.gas_used;
                }
                fits
            })
            .count();
        self.pending = keep.split_off(take);

        let prev = self.blocks.last().expect("genesis present");
        let block = Block::sealed(prev.index + 1, prev.hash, keep, gas_limit);
        for tx in &block.transactions {
            self.registry.insert(tx.record.clone());
        }
        let report = MineReport {
            index: block.index,
            tx_count: block.transactions.len(),
            gas_total: block.gas_total,
            dropped,
        };
        self.blocks.push(block);
        report
    }

    pub fn verify(&self) -> Result<(), ChainFault> {
        let genesis = self.blocks.first().ok_or(ChainFault::Empty)?;
        if genesis.prev_hash != [0; HASH_LEN] {
            return Err(ChainFault::Link(genesis.index));
        }
        let mut seen = HashSet::new();
        for (k, block) in self.blocks.iter().enumerate() {
            if block.index != k as u64 {
                return Err(ChainFault::Index(block.index));
            }
            if block.compute_hash() != block.hash {
                return Err(ChainFault::Hash(block.index));
            }
            if k > 0 && block.prev_hash != self.blocks[k - 1].hash {
                return Err(ChainFault::Link(block.index));
            }
            let total = block
                .transactions
                .iter()
                .try_fold(0u64, |acc, t| acc.checked_add(t.gas_used));
            if total != Some(block.gas_total) || block.gas_total > block.gas_limit {
                return Err(ChainFault::Gas(block.index));
            }
            for tx in &block.transactions {
                if tx.sender != self.cc_address {
                    return Err(ChainFault::Sender(block.index));
                }
                if tx.record.check_lengths().is_err() || !seen.insert(tx.record.address()) {
                    return Err(ChainFault::Payload(block.index));
                }
            }
        }
        Ok(())
    }

    /// Recomputes every hash and link; true iff the chain is intact.
    pub fn verify_chain(&self) -> bool {
        self.verify().is_ok() && Registry::replay(&self.blocks) == self.registry
    }

    pub fn export(&self) -> String {
        let s = &self.schedule;
        let mut out = format!(
            "{EXPORT_MAGIC} {EXPORT_VERSION} {} {} {} {} {} {}\n",
            self.cc_address,
            s.base_tx_gas,
            s.per_byte_gas,
            s.drone_overhead_gas,
            s.rsu_overhead_gas,
            s.sv_overhead_gas
        );
        for block in &self.blocks {
            out.push_str(&block.export_line());
            out.push('\n');
        }
        for tx in &self.pending {
            out.push_str("pending ");
            out.push_str(&export_tx(tx));
            out.push('\n');
        }
        out
    }

    /// Parses an exported chain. Only the syntax is checked here; call
    /// [`LedgerChain::verify_chain`] to check integrity.
    pub fn import(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty ledger file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(EXPORT_MAGIC) || fields.next() != Some(EXPORT_VERSION) {
            return Err(Error::Parse("not a desvn-ledger v1 file".into()));
        }
        let cc_address = Address::from_hex(fields.next().ok_or_else(|| Error::Parse("missing C&C address".into()))?)?;
        let schedule = GasSchedule {
            base_tx_gas: parse_num(fields.next(), "base gas")?,
            per_byte_gas: parse_num(fields.next(), "per-byte gas")?,
            drone_overhead_gas: parse_num(fields.next(), "drone overhead")?,
            rsu_overhead_gas: parse_num(fields.next(), "RSU overhead")?,
            sv_overhead_gas: parse_num(fields.next(), "SV overhead")?,
        };
        if fields.next().is_some() {
            return Err(Error::Parse("trailing fields in header".into()));
        }

        let mut blocks = Vec::new();
        let mut pending = Vec::new();
        for line in lines {
            let mut fields = line.split_whitespace();
            match fields.next() {
                Some("block") => {
                    if !pending.is_empty() {
                        return Err(Error::Parse("block after pending transactions".into()));
                    }
                    let index = parse_num(fields.next(), "block index")?;
                    let gas_limit = parse_num(fields.next(), "gas limit")?;
                    let gas_total = parse_num(fields.next(), "gas total")?;
                    let prev_hash = parse_hash(fields.next().ok_or_else(|| Error::Parse("missing prev hash".into()))?)?;
                    let hash = parse_hash(fields.next().ok_or_else(|| Error::Parse("missing hash".into()))?)?;
                    let count: usize = parse_num(fields.next(), "transaction count")?;
                    let transactions = fields.map(parse_tx).collect::<Result<Vec<_>>>()?;
                    if transactions.len() != count {
                        return Err(Error::Parse(format!(
                            "block {index} declares {count} transactions, found {}",
                            transactions.len()
                        )));
                    }
                    blocks.push(Block {
                        index,
                        prev_hash,
                        transactions,
                        gas_limit,
                        gas_total,
                        hash,
                    });
                }
                Some("pending") => {
                    let field = fields.next().ok_or_else(|| Error::Parse("empty pending line".into()))?;
                    if fields.next().is_some() {
                        return Err(Error::Parse("trailing fields on pending line".into()));
                    }
                    pending.push(parse_tx(field)?);
                }
                Some(other) => return Err(Error::Parse(format!("unknown record {other:?}"))),
                None => unreachable!("blank lines filtered"),
            }
        }
        if blocks.is_empty() {
            return Err(Error::Parse("ledger file has no genesis block".into()));
        }
        let registry = Registry::replay(&blocks);
        Ok(LedgerChain {
            cc_address,
            schedule,
            blocks,
            pending,
            registry,
        })
    }

    /// Total gas over committed blocks.
    pub fn committed_gas(&self) -> u64 {
        self.blocks.iter().map(|b| b.gas_total).sum()
    }

    /// Mutable access to committed blocks, for tamper experiments.
    #[doc(hidden)]
    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(n: u8) -> Address {
        Address([n; ADDRESS_LEN])
    }

    fn chain() -> LedgerChain {
        LedgerChain::new(addr(0xcc), GasSchedule::default())
    }

    #[test]
    fn cc_can_register_a_drone() {
        let mut c = chain();
        assert_eq!(c.register_entity(addr(0xcc), EntityRecord::drone(addr(1), "D0001", "A001")), Ok(()));
        assert_eq!(c.pending().len(), 1);
    }

    #[test]
    fn non_cc_sender_is_turned_down() {
        let mut c = chain();
        assert_eq!(
            c.register_entity(addr(2), EntityRecord::sv(addr(1))),
            Err(Rejection::Unauthorized)
        );
        assert!(c.pending().is_empty());
    }

    #[test]
    fn long_strings_are_rejected() {
        let mut c = chain();
        assert!(matches!(
            c.register_entity(addr(0xcc), EntityRecord::drone(addr(1), "ABCDEF", "A001")),
            Err(Rejection::PayloadTooLong { field: "drone_id", len: 6, max: 5 })
        ));
        assert!(matches!(
            c.register_entity(addr(0xcc), EntityRecord::rsu(addr(2), "AREA5")),
            Err(Rejection::PayloadTooLong { field: "area_code", .. })
        ));
    }

    #[test]
    fn duplicate_address_is_rejected() {
        let mut c = chain();
        c.register_entity(addr(0xcc), EntityRecord::sv(addr(1))).unwrap();
        assert_eq!(
            c.register_entity(addr(0xcc), EntityRecord::rsu(addr(1), "A")),
            Err(Rejection::AlreadyRegistered)
        );
        c.mine_block(6_000_000);
        assert_eq!(
            c.register_entity(addr(0xcc), EntityRecord::sv(addr(1))),
            Err(Rejection::AlreadyRegistered)
        );
    }

    #[test]
    fn authentication_counts_comparisons() {
        let mut c = chain();
        assert_eq!(
            c.authenticate(EntityKind::Sv, &addr(1)),
            AuthOutcome {
                authenticated: false,
                comparisons: 0
            }
        );
        for n in 1..=10 {
            c.register_entity(addr(0xcc), EntityRecord::sv(addr(n))).unwrap();
        }
        // Pending registrations do not authenticate.
        assert!(!c.authenticate(EntityKind::Sv, &addr(3)).authenticated);
        c.mine_block(6_000_000);
        assert_eq!(
            c.authenticate(EntityKind::Sv, &addr(3)),
            AuthOutcome {
                authenticated: true,
                comparisons: 3
            }
        );
        assert_eq!(c.authenticate(EntityKind::Sv, &addr(99)).comparisons, 10);
        assert!(!c.authenticate(EntityKind::Drone, &addr(3)).authenticated);
    }

    #[test]
    fn sv_gas_reference() {
        let schedule = GasSchedule {
            base_tx_gas: 21_000,
            per_byte_gas: 68,
            drone_overhead_gas: 20_000,
            rsu_overhead_gas: 20_000,
            sv_overhead_gas: 20_000,
        };
        assert_eq!(gas_cost(&EntityRecord::sv(addr(1)), &schedule), 42_360);
        let short = gas_cost(&EntityRecord::drone(addr(1), "", ""), &schedule);
        let long = gas_cost(&EntityRecord::drone(addr(1), "D0001", "A001"), &schedule);
        assert!(short < long);
        // Equal overheads: payload size alone orders the kinds.
        let drone = gas_cost(&EntityRecord::drone(addr(1), "D1", "A001"), &schedule);
        let rsu = gas_cost(&EntityRecord::rsu(addr(1), "A001"), &schedule);
        let sv = gas_cost(&EntityRecord::sv(addr(1)), &schedule);
        assert!(drone >= rsu && rsu >= sv);
    }

    #[test]
    fn uniform_gas_packs_sixty_per_block() {
        let schedule = GasSchedule {
            base_tx_gas: 100_000 - 68 * 20,
            per_byte_gas: 68,
            drone_overhead_gas: 0,
            rsu_overhead_gas: 0,
            sv_overhead_gas: 0,
        };
        let mut c = LedgerChain::new(addr(0xcc), schedule);
        for n in 0..100u8 {
            c.register_entity(addr(0xcc), EntityRecord::sv(Address::derive(n as u64))).unwrap();
        }
        assert!(c.pending().iter().all(|t| t.gas_used == 100_000));
        let report = c.mine_block(6_000_000);
        assert_eq!(report.tx_count, 60);
        assert_eq!(c.pending().len(), 40);
    }

    #[test]
    fn tiny_gas_limit_gives_empty_block_and_drops() {
        let mut c = chain();
        c.register_entity(addr(0xcc), EntityRecord::sv(addr(1))).unwrap();
        let report = c.mine_block(1_000);
        assert_eq!(report.tx_count, 0);
        assert_eq!(report.dropped.len(), 1);
        assert!(matches!(report.dropped[0].1, Rejection::OverGasLimit { .. }));
        assert!(c.pending().is_empty());
        assert!(c.verify_chain());
    }

    #[test]
    fn genesis_only_chain_verifies() {
        assert!(chain().verify_chain());
    }

    #[test]
    fn tampering_is_detected() {
        let mut c = chain();
        c.register_entity(addr(0xcc), EntityRecord::drone(addr(1), "D0001", "A001")).unwrap();
        c.register_entity(addr(0xcc), EntityRecord::rsu(addr(2), "A001")).unwrap();
        c.mine_block(6_000_000);
        c.register_entity(addr(0xcc), EntityRecord::sv(addr(3))).unwrap();
        c.mine_block(6_000_000);
        assert!(c.verify_chain());

        let mut t = c.clone();
        if let EntityRecord::Drone { drone_id, .. } = &mut t.blocks_mut()[1].transactions[0].record {
            drone_id.replace_range(0..1, "X");
        }
        assert!(!t.verify_chain());

        let mut t = c.clone();
        t.blocks_mut()[1].prev_hash[0] ^= 1;
        assert!(!t.verify_chain());
    }

    #[test]
    fn export_import_roundtrip() {
        let mut c = chain();
        c.register_entity(addr(0xcc), EntityRecord::drone(addr(1), "D0001", "A001")).unwrap();
        c.mine_block(6_000_000);
        c.register_entity(addr(0xcc), EntityRecord::sv(addr(3))).unwrap();
        let text = c.export();
        let back = LedgerChain::import(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.export(), text);
        assert!(back.verify_chain());
    }

    #[test]
    fn import_rejects_garbage() {
        assert!(LedgerChain::import("").is_err());
        assert!(LedgerChain::import("hello").is_err());
        let c = chain().export();
        assert!(LedgerChain::import(&c.replace("block 0", "block x")).is_err());
        assert!(LedgerChain::import(&format!("{c}pending 3:00\n")).is_err());
    }

    #[test]
    fn transaction_decoding_checks_limits() {
        let tx = Transaction {
            sender: addr(0xcc),
            record: EntityRecord::drone(addr(1), "D0001", "A001"),
            gas_used: 7,
        };
        let bytes = tx.encode();
        assert_eq!(Transaction::decode(&bytes).unwrap(), tx);
        assert!(Transaction::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Transaction::decode(&long).is_err());
    }

    #[test]
    fn block_binary_roundtrip() {
        let mut c = chain();
        c.register_entity(addr(0xcc), EntityRecord::rsu(addr(4), "B2")).unwrap();
        c.mine_block(6_000_000);
        let block = &c.blocks()[1];
        assert_eq!(&Block::decode(&block.encode()).unwrap(), block);
    }

    #[test]
    fn address_hex() {
        let a = Address::derive(5);
        assert_eq!(Address::from_hex(&a.to_hex()).unwrap(), a);
        assert_eq!(Address::from_hex(&format!("0x{a}")).unwrap(), a);
        assert!(Address::from_hex("abc").is_err());
        assert!(Address::from_hex(&"zz".repeat(20)).is_err());
    }
}
