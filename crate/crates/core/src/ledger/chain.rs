use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use crate::codec::{Reader, Writer};
use crate::identity::{Authority, Certificate, MacAddress, Oid, PublicKey};

use super::transaction::{validate_against, LedgerView};
use super::{
    make_certificate_transaction, Block, BlockReject, LedgerError, LoadError, RejectReason,
    Transaction, TxBody, TxKey, ZERO_DIGEST,
};

const DUMP_MAGIC: &[u8; 4] = b"DWCH";
const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct CertRecord {
    pub certificate: Certificate,
    pub height: u64,
    /// Registered by the authority after genesis, i.e. a revocation.
    pub authority_submitted: bool,
}

/// Everything derivable from the committed blocks that validation and
/// scheduling need.
#[derive(Clone, Debug)]
pub struct ChainState {
    authority_id: MacAddress,
    authority_key: PublicKey,
    oids: HashSet<Oid>,
    keys: HashSet<TxKey>,
    certs: HashMap<MacAddress, Vec<CertRecord>>,
    first_registered: BTreeMap<MacAddress, u64>,
    weight: u64,
}

impl ChainState {
    fn new(authority_id: MacAddress, authority_key: PublicKey) -> Self {
        Self {
            authority_id,
            authority_key,
            oids: HashSet::new(),
            keys: HashSet::new(),
            certs: HashMap::new(),
            first_registered: BTreeMap::new(),
            weight: 0,
        }
    }

    pub fn authority_key(&self) -> PublicKey {
        self.authority_key
    }

    pub fn authority_id(&self) -> MacAddress {
        self.authority_id
    }

    pub fn active_certificate(&self, subject: MacAddress) -> Option<&Certificate> {
        self.certs
            .get(&subject)
            .and_then(|records| records.last())
            .map(|r| &r.certificate)
    }

    pub fn certificate_history(&self, subject: MacAddress) -> &[CertRecord] {
        self.certs.get(&subject).map_or(&[], Vec::as_slice)
    }

    pub fn is_committed(&self, key: &TxKey) -> bool {
        self.keys.contains(key)
    }

    pub fn oid_committed(&self, oid: &Oid) -> bool {
        self.oids.contains(oid)
    }

    pub fn weight(&self) -> u64 {
        self.weight
    }

    /// Gateways allowed to propose, in registration order (ties by MAC).
    /// A subject whose latest registration came from the authority after
    /// genesis has been revoked and drops out.
    pub fn active_set(&self) -> Vec<MacAddress> {
        let mut set: Vec<(u64, MacAddress)> = self
            .first_registered
            .iter()
            .filter(|(mac, _)| {
                self.certs[*mac]
                    .last()
                    .is_some_and(|r| !r.authority_submitted)
            })
            .map(|(mac, h)| (*h, *mac))
            .collect();
        set.sort();
        set.into_iter().map(|(_, mac)| mac).collect()
    }

    pub fn validate_transaction(&self, tx: &Transaction) -> Result<(), RejectReason> {
        validate_against(tx, self)
    }

    fn apply(&mut self, tx: &Transaction, height: u64) {
        self.keys.insert(tx.key());
        match &tx.body {
            TxBody::ObjectRegistration { oid, .. } => {
                self.oids.insert(*oid);
                self.weight += 1;
            }
            TxBody::CertificateRegistration { certificate } => {
                let subject = certificate.subject;
                self.first_registered.entry(subject).or_insert(height);
                self.certs.entry(subject).or_default().push(CertRecord {
                    certificate: certificate.clone(),
                    height,
                    authority_submitted: height > 0 && tx.origin == self.authority_id,
                });
            }
        }
    }
}

impl LedgerView for ChainState {
    fn authority_id(&self) -> MacAddress {
        self.authority_id
    }

    fn authority_key(&self) -> PublicKey {
        self.authority_key
    }

    fn active_certificate(&self, subject: MacAddress) -> Option<Certificate> {
        ChainState::active_certificate(self, subject).cloned()
    }

    fn earlier_keys(&self, subject: MacAddress) -> Vec<PublicKey> {
        self.certificate_history(subject)
            .iter()
            .map(|r| r.certificate.public_key)
            .collect()
    }

    fn oid_committed(&self, oid: &Oid) -> bool {
        self.oids.contains(oid)
    }
}

/// Committed state plus the effects of transactions earlier in the same
/// block.
pub(crate) struct Staged<'a> {
    base: &'a ChainState,
    oids: HashSet<Oid>,
    certs: HashMap<MacAddress, Vec<Certificate>>,
}

impl<'a> Staged<'a> {
    pub(crate) fn new(base: &'a ChainState) -> Self {
        Self {
            base,
            oids: HashSet::new(),
            certs: HashMap::new(),
        }
    }

    pub(crate) fn check_and_stage(&mut self, tx: &Transaction) -> Result<(), RejectReason> {
        validate_against(tx, self)?;
        match &tx.body {
            TxBody::ObjectRegistration { oid, .. } => {
                self.oids.insert(*oid);
            }
            TxBody::CertificateRegistration { certificate } => {
                self.certs
                    .entry(certificate.subject)
                    .or_default()
                    .push(certificate.clone());
            }
        }
        Ok(())
    }
}

impl LedgerView for Staged<'_> {
    fn authority_id(&self) -> MacAddress {
        self.base.authority_id
    }

    fn authority_key(&self) -> PublicKey {
        self.base.authority_key
    }

    fn active_certificate(&self, subject: MacAddress) -> Option<Certificate> {
        match self.certs.get(&subject).and_then(|c| c.last()) {
            Some(cert) => Some(cert.clone()),
            None => self.base.active_certificate(subject).cloned(),
        }
    }

    fn earlier_keys(&self, subject: MacAddress) -> Vec<PublicKey> {
        let mut keys = self.base.earlier_keys(subject);
        if let Some(staged) = self.certs.get(&subject) {
            keys.extend(staged.iter().map(|c| c.public_key));
        }
        keys
    }

    fn oid_committed(&self, oid: &Oid) -> bool {
        self.oids.contains(oid) || self.base.oids.contains(oid)
    }
}

#[derive(Clone, Debug)]
pub struct Chain {
    blocks: Vec<Arc<Block>>,
    state: ChainState,
}

impl Chain {
    /// Genesis: one authority-signed registration per bootstrap certificate.
    pub fn genesis_block(authority: &Authority, bootstrap: &[Certificate]) -> Block {
        let txs = bootstrap
            .iter()
            .map(|c| make_certificate_transaction(c.clone(), authority.keys(), authority.id()))
            .collect();
        Block::new(0, ZERO_DIGEST, authority.id(), txs, authority.keys())
    }

    pub fn from_genesis(
        genesis: Block,
        authority_id: MacAddress,
        authority_key: PublicKey,
    ) -> Result<Self, BlockReject> {
        let mut state = ChainState::new(authority_id, authority_key);
        if genesis.height != 0 || genesis.prev_digest != ZERO_DIGEST {
            return Err(BlockReject::BadLink);
        }
        if !genesis.digest_matches() {
            return Err(BlockReject::BadDigest);
        }
        if genesis.proposer != authority_id || !genesis.verify_signature(&authority_key) {
            return Err(BlockReject::BadProposer);
        }
        let mut staged = Staged::new(&state);
        for (i, tx) in genesis.transactions.iter().enumerate() {
            if tx.origin != authority_id || !matches!(tx.body, TxBody::CertificateRegistration { .. }) {
                return Err(BlockReject::BadTransaction(i, RejectReason::BadSignature));
            }
            staged
                .check_and_stage(tx)
                .map_err(|e| BlockReject::BadTransaction(i, e))?;
        }
        for tx in &genesis.transactions {
            state.apply(tx, 0);
        }
        Ok(Self {
            blocks: vec![Arc::new(genesis)],
            state,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }

    pub fn genesis(&self) -> &Block {
        &self.blocks[0]
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always has genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn tip_digest(&self) -> [u8; 32] {
        self.tip().block_digest
    }

    pub fn weight(&self) -> u64 {
        self.state.weight
    }

    pub fn active_set(&self) -> Vec<MacAddress> {
        self.state.active_set()
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.blocks.iter().flat_map(|b| b.transactions.iter())
    }

    pub fn contains_block(&self, digest: &[u8; 32]) -> bool {
        self.blocks.iter().rev().any(|b| b.block_digest == *digest)
    }

    /// True when `self` is a (non-strict) prefix of `other`.
    pub fn is_prefix_of(&self, other: &Chain) -> bool {
        let h = self.height() as usize;
        other.blocks.len() > h && other.blocks[h].block_digest == self.tip_digest()
    }

    pub fn validate_transaction(&self, tx: &Transaction) -> Result<(), RejectReason> {
        self.state.validate_transaction(tx)
    }

    pub fn validate_block(&self, block: &Block, active_set: &[MacAddress]) -> Result<(), BlockReject> {
        if !block.digest_matches() {
            return Err(BlockReject::BadDigest);
        }
        if block.prev_digest != self.tip_digest() || block.height != self.height() + 1 {
            return Err(BlockReject::BadLink);
        }
        match next_proposer(self, active_set) {
            Ok(expected) if expected == block.proposer => {}
            _ => return Err(BlockReject::BadProposer),
        }
        self.check_proposer_signature(block)?;
        self.check_transactions(block)
    }

    fn check_proposer_signature(&self, block: &Block) -> Result<(), BlockReject> {
        match self.state.active_certificate(block.proposer) {
            Some(cert) if block.verify_signature(&cert.public_key) => Ok(()),
            _ => Err(BlockReject::BadProposer),
        }
    }

    fn check_transactions(&self, block: &Block) -> Result<(), BlockReject> {
        let mut staged = Staged::new(&self.state);
        for (i, tx) in block.transactions.iter().enumerate() {
            staged
                .check_and_stage(tx)
                .map_err(|e| BlockReject::BadTransaction(i, e))?;
        }
        Ok(())
    }

    pub fn append(&mut self, block: Arc<Block>, active_set: &[MacAddress]) -> Result<(), BlockReject> {
        self.validate_block(&block, active_set)?;
        self.apply(block);
        Ok(())
    }

    /// Validation for blocks replayed from a dump. The reachable set a block
    /// was produced under is not recorded, so the proposer only has to be an
    /// active gateway holding the signing key.
    fn append_replayed(&mut self, block: Arc<Block>) -> Result<(), BlockReject> {
        if !block.digest_matches() {
            return Err(BlockReject::BadDigest);
        }
        if block.prev_digest != self.tip_digest() || block.height != self.height() + 1 {
            return Err(BlockReject::BadLink);
        }
        if !self.state.active_set().contains(&block.proposer) {
            return Err(BlockReject::BadProposer);
        }
        self.check_proposer_signature(&block)?;
        self.check_transactions(&block)?;
        self.apply(block);
        Ok(())
    }

    fn apply(&mut self, block: Arc<Block>) {
        for tx in &block.transactions {
            self.state.apply(tx, block.height);
        }
        self.blocks.push(block);
    }

    /// Length-prefixed binary stream: magic, version, block count, then each
    /// block's encoding behind a `u32` length.
    pub fn dump(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(DUMP_MAGIC).u32(DUMP_VERSION).u32(self.blocks.len() as u32);
        for block in &self.blocks {
            w.bytes(&block.to_bytes());
        }
        w.finish()
    }

    pub fn load(
        bytes: &[u8],
        authority_id: MacAddress,
        authority_key: PublicKey,
    ) -> Result<Self, LoadError> {
        let mut r = Reader::new(bytes);
        if r.fixed(4)? != DUMP_MAGIC || r.u32()? != DUMP_VERSION {
            return Err(LoadError::BadHeader);
        }
        let count = r.u32()?;
        if count == 0 {
            return Err(LoadError::Empty);
        }
        let decode_block = |r: &mut Reader<'_>| -> Result<Block, LoadError> {
            let raw = r.bytes()?;
            let mut inner = Reader::new(raw);
            let block = Block::decode(&mut inner)?;
            inner.finish()?;
            Ok(block)
        };
        let genesis = decode_block(&mut r)?;
        let mut chain = Chain::from_genesis(genesis, authority_id, authority_key)
            .map_err(|e| LoadError::Invalid(0, e))?;
        for h in 1..count as u64 {
            let block = decode_block(&mut r)?;
            chain
                .append_replayed(Arc::new(block))
                .map_err(|e| LoadError::Invalid(h, e))?;
        }
        r.finish()?;
        Ok(chain)
    }
}

/// Number of committed object registrations. Certificate registrations do
/// not count.
pub fn chain_weight(chain: &Chain) -> u64 {
    chain.weight()
}

pub fn next_proposer(chain: &Chain, active_set: &[MacAddress]) -> Result<MacAddress, LedgerError> {
    if active_set.is_empty() {
        return Err(LedgerError::EmptyActiveSet);
    }
    let next_height = chain.height() + 1;
    Ok(active_set[(next_height % active_set.len() as u64) as usize])
}

pub fn validate_block(block: &Block, chain: &Chain, active_set: &[MacAddress]) -> Result<(), BlockReject> {
    chain.validate_block(block, active_set)
}

/// Heavier chain wins; equal weights go to the smaller tip digest.
pub fn select_chain<'a>(a: &'a Chain, b: &'a Chain) -> &'a Chain {
    if prefers(b, a) {
        b
    } else {
        a
    }
}

/// Strict preference of `candidate` over `current` under [`select_chain`].
pub fn prefers(candidate: &Chain, current: &Chain) -> bool {
    prefers_summary(
        (candidate.weight(), candidate.tip_digest()),
        (current.weight(), current.tip_digest()),
    )
}

pub fn prefers_summary(candidate: (u64, [u8; 32]), current: (u64, [u8; 32])) -> bool {
    candidate.0 > current.0 || (candidate.0 == current.0 && candidate.1 < current.1)
}

/// Adopts `winner` and returns the transactions `local` committed that the
/// winner lacks, in local chain order.
pub fn merge_after_partition(local: &Chain, winner: &Chain) -> (Chain, Vec<Transaction>) {
    let rebroadcast = local
        .transactions()
        .filter(|tx| !winner.state.is_committed(&tx.key()))
        .cloned()
        .collect();
    (winner.clone(), rebroadcast)
}
