use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::identity::{active_certificate, Authority, KeyPair, MacAddress, Metadata};

pub(crate) struct Fixture {
    pub ca: Authority,
    pub gateways: Vec<(MacAddress, KeyPair)>,
    pub chain: Chain,
}

pub(crate) fn gw(i: u8) -> MacAddress {
    MacAddress([2, 0, 0, 0, 0, i])
}

impl Fixture {
    pub fn new(n: u8) -> Self {
        let mut ca = Authority::new(7);
        let gateways: Vec<_> = (1..=n).map(|i| (gw(i), KeyPair::derive("gw", i as u64))).collect();
        let certs: Vec<_> = gateways
            .iter()
            .map(|(mac, k)| ca.issue_certificate(*mac, k.public_key()))
            .collect();
        let genesis = Chain::genesis_block(&ca, &certs);
        let chain = Chain::from_genesis(genesis, ca.id(), ca.public_key()).unwrap();
        Self { ca, gateways, chain }
    }

    pub fn keys(&self, mac: MacAddress) -> &KeyPair {
        &self.gateways.iter().find(|(m, _)| *m == mac).unwrap().1
    }

    pub fn object_tx(&self, origin: MacAddress, n: u32) -> Transaction {
        let payload = format!("object-{n}").into_bytes();
        let meta = Metadata {
            name: format!("object {n}"),
            keywords: vec!["test".into()],
            publisher: MacAddress([0x0a, 0, 0, 0, 0, 1]),
            created_at: n as u64,
            size_bytes: payload.len() as u64,
        };
        make_object_transaction(&payload, meta, self.keys(origin), origin).unwrap()
    }

    /// Appends a block of `txs` built by whoever holds the next slot.
    pub fn extend(chain: &mut Chain, keys: &[(MacAddress, KeyPair)], txs: Vec<Transaction>) -> Arc<Block> {
        let active = chain.active_set();
        let proposer = next_proposer(chain, &active).unwrap();
        let k = &keys.iter().find(|(m, _)| *m == proposer).unwrap().1;
        let block = Arc::new(Block::new(chain.height() + 1, chain.tip_digest(), proposer, txs, k));
        chain.append(block.clone(), &active).unwrap();
        block
    }

    pub fn commit(&mut self, txs: Vec<Transaction>) -> Arc<Block> {
        Self::extend(&mut self.chain, &self.gateways, txs)
    }
}

#[test]
fn well_signed_object_transaction_accepted() {
    let f = Fixture::new(2);
    let tx = f.object_tx(gw(1), 1);
    assert_eq!(tx.kind(), TxKind::ObjectRegistration);
    assert_eq!(validate_transaction(&tx, &f.chain), Ok(()));
}

#[test]
fn size_mismatch_blocks_construction() {
    let f = Fixture::new(1);
    let meta = Metadata {
        name: "x".into(),
        keywords: vec![],
        publisher: gw(9),
        created_at: 0,
        size_bytes: 10,
    };
    assert!(make_object_transaction(b"abc", meta, f.keys(gw(1)), gw(1)).is_err());
}

#[test]
fn tampered_and_unsigned_transactions_rejected() {
    let f = Fixture::new(2);
    let mut tx = f.object_tx(gw(1), 1);
    if let TxBody::ObjectRegistration { metadata, .. } = &mut tx.body {
        metadata.name.push('!');
    }
    assert_eq!(validate_transaction(&tx, &f.chain), Err(RejectReason::BadSignature));

    let mut unsigned = f.object_tx(gw(1), 2);
    unsigned.signature.clear();
    assert_eq!(validate_transaction(&unsigned, &f.chain), Err(RejectReason::BadSignature));
}

#[test]
fn unknown_origin_has_no_certificate() {
    let f = Fixture::new(1);
    let stranger = KeyPair::derive("stranger", 0);
    let meta = Metadata {
        name: "s".into(),
        keywords: vec![],
        publisher: gw(50),
        created_at: 0,
        size_bytes: 1,
    };
    let tx = make_object_transaction(b"s", meta, &stranger, gw(50)).unwrap();
    assert_eq!(validate_transaction(&tx, &f.chain), Err(RejectReason::NoCertificate));
}

#[test]
fn duplicate_oid_rejected_once_committed() {
    let mut f = Fixture::new(2);
    let a = f.object_tx(gw(1), 1);
    let b = f.object_tx(gw(2), 1);
    assert_eq!(a.oid(), b.oid());
    f.commit(vec![a]);
    assert_eq!(validate_transaction(&b, &f.chain), Err(RejectReason::DuplicateOid));
}

#[test]
fn duplicate_within_one_pool_commits_once() {
    let mut f = Fixture::new(2);
    let mut pool = PendingPool::new();
    pool.insert(f.object_tx(gw(1), 1));
    pool.insert(f.object_tx(gw(2), 1));
    let active = f.chain.active_set();
    let proposer = next_proposer(&f.chain, &active).unwrap();
    let keys = f.keys(proposer).clone();
    let block = propose_block(&f.chain, &mut pool, proposer, &keys, &active, 100).unwrap();
    assert_eq!(block.transactions.len(), 1);
    f.chain.append(Arc::new(block), &active).unwrap();
    pool.prune(&f.chain);
    assert!(pool.is_empty());
    assert_eq!(chain_weight(&f.chain), 1);
}

#[test]
fn revoked_key_rejected_after_dummy_certificate() {
    let mut f = Fixture::new(3);
    let before = f.object_tx(gw(2), 1);
    f.commit(vec![before.clone()]);

    let dummy = f.ca.make_dummy_certificate(gw(2));
    assert_eq!(dummy.serial, 2);
    let revoke = make_certificate_transaction(dummy.clone(), f.ca.keys(), f.ca.id());
    assert_eq!(validate_transaction(&revoke, &f.chain), Ok(()));
    f.commit(vec![revoke]);

    assert_eq!(active_certificate(&f.chain, gw(2)).unwrap(), dummy);
    let after = f.object_tx(gw(2), 2);
    assert_eq!(validate_transaction(&after, &f.chain), Err(RejectReason::RevokedKey));
    // what was committed before revocation stays
    assert!(f.chain.state().is_committed(&before.key()));
    assert_eq!(f.chain.active_set(), vec![gw(1), gw(3)]);
}

#[test]
fn certificate_registration_checks() {
    let mut f = Fixture::new(1);
    let newcomer = gw(9);
    let keys = KeyPair::derive("new", 9);
    let cert = f.ca.issue_certificate(newcomer, keys.public_key());
    let tx = make_certificate_transaction(cert.clone(), &keys, newcomer);
    assert_eq!(validate_transaction(&tx, &f.chain), Ok(()));
    f.commit(vec![tx.clone()]);
    assert_eq!(validate_transaction(&tx, &f.chain), Err(RejectReason::StaleSerial));

    let rogue = Authority::new(999);
    let mut forged = cert.clone();
    forged.serial = 5;
    forged.authority_signature = rogue
        .keys()
        .sign(&crate::identity::Certificate::signed_bytes(newcomer, &forged.public_key, 5));
    let tx = make_certificate_transaction(forged, &keys, newcomer);
    assert_eq!(
        validate_transaction(&tx, &f.chain),
        Err(RejectReason::BadAuthoritySignature)
    );

    // someone else cannot register a certificate on the subject's behalf
    let other = make_certificate_transaction(cert, f.keys(gw(1)), gw(1));
    assert_eq!(validate_transaction(&other, &f.chain), Err(RejectReason::BadSignature));
}

#[test]
fn active_certificate_lookup() {
    let mut f = Fixture::new(2);
    assert_eq!(active_certificate(&f.chain, gw(2)).unwrap().serial, 1);
    assert!(active_certificate(&f.chain, gw(7)).is_none());
    let k = KeyPair::derive("rekey", 2);
    let c2 = f.ca.issue_certificate(gw(2), k.public_key());
    let tx = make_certificate_transaction(c2, &k, gw(2));
    let mut pool = PendingPool::new();
    pool.insert(tx.clone());
    // pending only: still serial 1
    assert_eq!(active_certificate(&f.chain, gw(2)).unwrap().serial, 1);
    f.commit(vec![tx]);
    assert_eq!(active_certificate(&f.chain, gw(2)).unwrap().serial, 2);
    // a self-submitted re-key keeps the gateway in the schedule
    assert_eq!(f.chain.active_set(), vec![gw(1), gw(2)]);
}

#[test]
fn next_proposer_round_robin() {
    let mut f = Fixture::new(3);
    for n in 0..3 {
        let origin = gw(1 + (n % 3) as u8);
        let tx = f.object_tx(origin, n);
        f.commit(vec![tx]);
    }
    assert_eq!(f.chain.height(), 3);
    let active = vec![gw(1), gw(2), gw(3)];
    assert_eq!(next_proposer(&f.chain, &active), Ok(gw(2)));
    assert_eq!(next_proposer(&f.chain, &[gw(1)]), Ok(gw(1)));
    assert_eq!(next_proposer(&f.chain, &[]), Err(LedgerError::EmptyActiveSet));

    let tx = f.object_tx(gw(1), 10);
    f.commit(vec![tx]);
    assert_eq!(next_proposer(&f.chain, &[gw(1), gw(3)]), Ok(gw(3)));
}

#[test]
fn propose_block_bounds() {
    let f = Fixture::new(3);
    let active = f.chain.active_set();
    let slot = next_proposer(&f.chain, &active).unwrap();
    let keys = f.keys(slot).clone();

    let mut pool = PendingPool::new();
    assert!(propose_block(&f.chain, &mut pool, slot, &keys, &active, 100).is_none());

    for n in 0..3 {
        pool.insert(f.object_tx(gw(1), n));
    }
    let block = propose_block(&f.chain, &mut pool, slot, &keys, &active, 100).unwrap();
    assert_eq!(block.transactions.len(), 3);
    assert_eq!(block.height, 1);

    let mut big = PendingPool::new();
    let txs: Vec<_> = (0..150).map(|n| f.object_tx(gw(1), n)).collect();
    for tx in &txs {
        big.insert(tx.clone());
    }
    let block = propose_block(&f.chain, &mut big, slot, &keys, &active, 100).unwrap();
    assert_eq!(block.transactions, txs[..100].to_vec());
    let mut chain = f.chain.clone();
    chain.append(Arc::new(block), &active).unwrap();
    big.prune(&chain);
    assert_eq!(big.len(), 50);
    assert_eq!(big.iter().next().unwrap(), &txs[100]);

    // out of turn: nothing
    let other = active.iter().find(|m| **m != slot).copied().unwrap();
    let mut pool = PendingPool::new();
    pool.insert(f.object_tx(gw(1), 0));
    assert!(propose_block(&f.chain, &mut pool, other, f.keys(other), &active, 100).is_none());
}

#[test]
fn validate_block_rejections() {
    let f = Fixture::new(3);
    let active = f.chain.active_set();
    let slot = next_proposer(&f.chain, &active).unwrap();
    let wrong = active.iter().find(|m| **m != slot).copied().unwrap();
    let txs = vec![f.object_tx(gw(1), 1)];

    let good = Block::new(1, f.chain.tip_digest(), slot, txs.clone(), f.keys(slot));
    assert_eq!(validate_block(&good, &f.chain, &active), Ok(()));

    let out_of_turn = Block::new(1, f.chain.tip_digest(), wrong, txs.clone(), f.keys(wrong));
    assert_eq!(validate_block(&out_of_turn, &f.chain, &active), Err(BlockReject::BadProposer));

    let impostor = Block::new(1, f.chain.tip_digest(), slot, txs.clone(), f.keys(wrong));
    assert_eq!(validate_block(&impostor, &f.chain, &active), Err(BlockReject::BadProposer));

    let mut unsigned_tx = f.object_tx(gw(2), 2);
    unsigned_tx.signature.clear();
    let bad_tx = Block::new(
        1,
        f.chain.tip_digest(),
        slot,
        vec![txs[0].clone(), unsigned_tx],
        f.keys(slot),
    );
    assert_eq!(
        validate_block(&bad_tx, &f.chain, &active),
        Err(BlockReject::BadTransaction(1, RejectReason::BadSignature))
    );

    let unlinked = Block::new(1, [9; 32], slot, txs.clone(), f.keys(slot));
    assert_eq!(validate_block(&unlinked, &f.chain, &active), Err(BlockReject::BadLink));

    let mut tampered = good.clone();
    tampered.transactions.pop();
    assert_eq!(validate_block(&tampered, &f.chain, &active), Err(BlockReject::BadDigest));
}

#[test]
fn weight_counts_object_registrations_only() {
    let mut f = Fixture::new(3);
    assert_eq!(chain_weight(&f.chain), 0);
    let objects: Vec<_> = (0..5).map(|n| f.object_tx(gw(1), n)).collect();
    let mut certs = Vec::new();
    for i in 10..13u8 {
        let k = KeyPair::derive("extra", i as u64);
        let c = f.ca.issue_certificate(gw(i), k.public_key());
        certs.push(make_certificate_transaction(c, &k, gw(i)));
    }
    f.commit(objects);
    f.commit(certs);
    assert_eq!(chain_weight(&f.chain), 5);
}

fn two_forks(left_objects: u32, right_objects: u32) -> (Fixture, Chain, Chain) {
    let f = Fixture::new(4);
    let mut left = f.chain.clone();
    let mut right = f.chain.clone();
    for n in 0..left_objects {
        let tx = f.object_tx(gw(1), n);
        Fixture::extend(&mut left, &f.gateways, vec![tx]);
    }
    for n in 0..right_objects {
        let tx = f.object_tx(gw(4), 1000 + n);
        Fixture::extend(&mut right, &f.gateways, vec![tx]);
    }
    (f, left, right)
}

#[test]
fn select_chain_by_weight_then_digest() {
    let (_, heavy, light) = two_forks(5, 3);
    assert_eq!(select_chain(&heavy, &light).tip_digest(), heavy.tip_digest());
    assert_eq!(select_chain(&light, &heavy).tip_digest(), heavy.tip_digest());

    let (f, one, _) = two_forks(1, 0);
    assert_eq!(select_chain(&f.chain, &one).weight(), 1);

    let (_, a, b) = two_forks(7, 7);
    assert_eq!(chain_weight(&a), chain_weight(&b));
    let winner_ab = select_chain(&a, &b).tip_digest();
    let winner_ba = select_chain(&b, &a).tip_digest();
    assert_eq!(winner_ab, winner_ba);
    assert_eq!(winner_ab, a.tip_digest().min(b.tip_digest()));
}

#[test]
fn merge_rebroadcasts_local_only_transactions() {
    let (f, main, side) = two_forks(5, 2);
    let winner = select_chain(&side, &main).clone();
    let (adopted, rebroadcast) = merge_after_partition(&side, &winner);
    assert_eq!(adopted.tip_digest(), main.tip_digest());
    assert_eq!(rebroadcast.len(), 2);
    let mut merged = adopted;
    Fixture::extend(&mut merged, &f.gateways, rebroadcast);
    assert_eq!(chain_weight(&merged), 7);

    let (_, unchanged) = merge_after_partition(&f.chain, &main);
    assert!(unchanged.is_empty());
}

#[test]
fn merge_skips_objects_committed_on_both_sides() {
    let f = Fixture::new(4);
    let mut a = f.chain.clone();
    let mut b = f.chain.clone();
    let shared_left = f.object_tx(gw(1), 77);
    let shared_right = f.object_tx(gw(4), 77);
    Fixture::extend(&mut a, &f.gateways, vec![shared_left, f.object_tx(gw(1), 1)]);
    Fixture::extend(&mut b, &f.gateways, vec![shared_right]);
    let winner = select_chain(&a, &b).clone();
    let loser = if winner.tip_digest() == a.tip_digest() { &b } else { &a };
    let (_, rebroadcast) = merge_after_partition(loser, &winner);
    assert!(rebroadcast.is_empty());
}

#[test]
fn dump_load_round_trip() {
    let (f, chain, _) = two_forks(4, 0);
    let bytes = chain.dump();
    assert_eq!(bytes, chain.dump());
    let loaded = Chain::load(&bytes, f.ca.id(), f.ca.public_key()).unwrap();
    assert_eq!(loaded.dump(), bytes);
    assert_eq!(loaded.weight(), 4);
    assert_eq!(loaded.active_set(), chain.active_set());

    let mut corrupt = bytes.clone();
    let last = corrupt.len() - 70;
    corrupt[last] ^= 1;
    assert!(Chain::load(&corrupt, f.ca.id(), f.ca.public_key()).is_err());
    assert_eq!(
        Chain::load(b"nope", f.ca.id(), f.ca.public_key()).unwrap_err(),
        LoadError::BadHeader
    );
    let other_ca = Authority::new(8);
    assert!(Chain::load(&bytes, other_ca.id(), other_ca.public_key()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn schedule_is_fair(n in 1u8..6, blocks in 1u32..40) {
        let mut f = Fixture::new(n);
        let mut counts = std::collections::HashMap::new();
        let mut last_weight = 0;
        for i in 0..blocks {
            let tx = f.object_tx(gw(1), i);
            let block = f.commit(vec![tx]);
            *counts.entry(block.proposer).or_insert(0u32) += 1;
            prop_assert!(f.chain.weight() >= last_weight);
            last_weight = f.chain.weight();
        }
        let lo = blocks / n as u32;
        let hi = blocks.div_ceil(n as u32);
        for (mac, _) in &f.gateways {
            let c = counts.get(mac).copied().unwrap_or(0);
            prop_assert!(c >= lo && c <= hi, "{mac} proposed {c}, expected {lo}..={hi}");
        }
    }
}
