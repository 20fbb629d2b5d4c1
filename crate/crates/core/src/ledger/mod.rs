//! The permissioned ledger: signed transactions, round-robin blocks, and
//! weight-based fork choice for healing partitions.
//!
//! Only gateways with an active certificate may propose, and only in their
//! turn: the proposer for height `h` is `active_set[h mod n]`. Chain weight
//! counts object registrations only, so a partition side that published more
//! objects wins the merge regardless of how many gateways it had.

mod block;
mod chain;
mod pool;
mod transaction;

use thiserror::Error;

use crate::codec::DecodeError;

pub use block::{Block, ZERO_DIGEST};
pub use chain::{
    chain_weight, merge_after_partition, next_proposer, prefers, prefers_summary, select_chain,
    validate_block, CertRecord, Chain, ChainState,
};
pub use pool::PendingPool;
pub use transaction::{
    make_certificate_transaction, make_object_transaction, Transaction, TxBody, TxKey, TxKind,
};

/// Default bound on transactions per block.
pub const DEFAULT_MAX_BLOCK_TXS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("origin has no registered certificate")]
    NoCertificate,
    #[error("signature does not verify")]
    BadSignature,
    #[error("signed with a key that has since been replaced")]
    RevokedKey,
    #[error("object already registered")]
    DuplicateOid,
    #[error("certificate not signed by the authority")]
    BadAuthoritySignature,
    #[error("certificate serial not above the active one")]
    StaleSerial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum BlockReject {
    #[error("block does not extend the current tip")]
    BadLink,
    #[error("proposer out of turn or signature invalid")]
    BadProposer,
    #[error("transaction {0} rejected: {1}")]
    BadTransaction(usize, RejectReason),
    #[error("block digest does not recompute")]
    BadDigest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("active proposer set is empty")]
    EmptyActiveSet,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("not a chain dump")]
    BadHeader,
    #[error("dump holds no blocks")]
    Empty,
    #[error("block at height {0} invalid: {1}")]
    Invalid(u64, BlockReject),
}

/// Convenience wrapper matching [`Chain::validate_transaction`].
pub fn validate_transaction(tx: &Transaction, chain: &Chain) -> Result<(), RejectReason> {
    chain.validate_transaction(tx)
}

/// Packages the oldest valid pending transactions into a signed block when
/// `proposer` holds the next slot. No empty blocks.
pub fn propose_block(
    chain: &Chain,
    pool: &mut PendingPool,
    proposer: crate::identity::MacAddress,
    keys: &crate::identity::KeyPair,
    active_set: &[crate::identity::MacAddress],
    max_txs: usize,
) -> Option<Block> {
    if next_proposer(chain, active_set).ok()? != proposer {
        return None;
    }
    let txs = pool.take_for_block(chain, max_txs);
    if txs.is_empty() {
        return None;
    }
    Some(Block::new(chain.height() + 1, chain.tip_digest(), proposer, txs, keys))
}

#[cfg(test)]
pub(crate) mod tests;
