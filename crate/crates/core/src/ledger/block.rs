use std::fmt;

use crate::codec::{DecodeError, Reader, Writer};
use crate::identity::{digest, KeyPair, MacAddress, PublicKey};

use super::Transaction;

pub const ZERO_DIGEST: [u8; 32] = [0u8; 32];

#[derive(Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_digest: [u8; 32],
    pub proposer: MacAddress,
    pub transactions: Vec<Transaction>,
    pub block_digest: [u8; 32],
    /// Proposer's signature over `block_digest`.
    pub signature: Vec<u8>,
}

impl Block {
    pub fn new(
        height: u64,
        prev_digest: [u8; 32],
        proposer: MacAddress,
        transactions: Vec<Transaction>,
        keys: &KeyPair,
    ) -> Self {
        let block_digest = Self::content_digest(height, &prev_digest, proposer, &transactions);
        let signature = keys.sign(&block_digest);
        Self {
            height,
            prev_digest,
            proposer,
            transactions,
            block_digest,
            signature,
        }
    }

    pub fn content_digest(
        height: u64,
        prev_digest: &[u8; 32],
        proposer: MacAddress,
        transactions: &[Transaction],
    ) -> [u8; 32] {
        let mut w = Writer::new();
        w.u64(height).fixed(prev_digest).fixed(&proposer.0);
        w.u32(transactions.len() as u32);
        for tx in transactions {
            tx.encode(&mut w);
        }
        digest(w.as_slice())
    }

    pub fn digest_matches(&self) -> bool {
        Self::content_digest(self.height, &self.prev_digest, self.proposer, &self.transactions)
            == self.block_digest
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&self.block_digest, &self.signature)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.height)
            .fixed(&self.prev_digest)
            .fixed(&self.proposer.0)
            .u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.encode(w);
        }
        w.fixed(&self.block_digest).bytes(&self.signature);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let height = r.u64()?;
        let prev_digest = r.array()?;
        let proposer = MacAddress(r.array()?);
        let count = r.u32()? as usize;
        let mut transactions = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            transactions.push(Transaction::decode(r)?);
        }
        Ok(Self {
            height,
            prev_digest,
            proposer,
            transactions,
            block_digest: r.array()?,
            signature: r.bytes()?.to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Block(h={} by {} txs={} digest={}..)",
            self.height,
            self.proposer,
            self.transactions.len(),
            &hex::encode(self.block_digest)[..12]
        )
    }
}
