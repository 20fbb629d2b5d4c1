//! Object fingerprints, gateway keys, and authority-issued certificates.
//!
//! An object's [`Oid`] is the digest of its payload followed by the canonical
//! encoding of its [`Metadata`]. The same digest doubles as the integrity
//! check a consumer runs on every delivered object.
//!
//! Certificates bind a [`MacAddress`] to a signing key. Revocation works by
//! registering a *dummy* certificate for the subject: a normally issued
//! certificate whose secret key was thrown away at generation time, so the
//! subject can no longer produce signatures that verify.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, LazyLock, Mutex, OnceLock};

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::ledger::Chain;
use crate::SimTime;

/// Name of the digest every node in a scenario agrees on.
pub const DIGEST_ALGORITHM: &str = "sha256";

/// Address reserved for the in-simulation certification authority.
pub const AUTHORITY_MAC: MacAddress = MacAddress([0x02, 0xff, 0xff, 0xff, 0xff, 0xff]);

pub fn digest(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

fn digest_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
    #[error("metadata declares {declared} bytes but payload has {actual}")]
    SizeMismatch { declared: u64, actual: u64 },
    #[error("invalid MAC address {0:?}")]
    BadMac(String),
}

/// Six-byte link-layer address. Ordered lexicographically on its bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddress(pub [u8; 6]);

impl MacAddress {
    pub const fn new(bytes: [u8; 6]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 6] {
        &self.0
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

impl fmt::Debug for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mac({self})")
    }
}

impl FromStr for MacAddress {
    type Err = IdentityError;

    /// Accepts `aa:bb:cc:dd:ee:ff` or twelve bare hex digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IdentityError::BadMac(s.to_string());
        let hexdigits: String = s.trim().split(':').collect();
        if hexdigits.len() != 12 {
            return Err(bad());
        }
        let raw = hex::decode(&hexdigits).map_err(|_| bad())?;
        let mut out = [0u8; 6];
        out.copy_from_slice(&raw);
        Ok(Self(out))
    }
}

/// Object identifier: digest of payload ∥ canonical metadata.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Oid(pub [u8; 32]);

impl Oid {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Oid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Oid({}..)", &self.to_hex()[..12])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Metadata {
    pub name: String,
    pub keywords: Vec<String>,
    pub publisher: MacAddress,
    pub created_at: SimTime,
    pub size_bytes: u64,
}

impl Metadata {
    /// Fixed field order, every variable-length field length-prefixed, and
    /// the keyword list prefixed by its count.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.str(&self.name);
        w.u32(self.keywords.len() as u32);
        for kw in &self.keywords {
            w.str(kw);
        }
        w.fixed(&self.publisher.0);
        w.u64(self.created_at);
        w.u64(self.size_bytes);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let name = r.string()?;
        let count = r.u32()? as usize;
        let mut keywords = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            keywords.push(r.string()?);
        }
        let publisher = MacAddress(r.array()?);
        let created_at = r.u64()?;
        let size_bytes = r.u64()?;
        Ok(Self {
            name,
            keywords,
            publisher,
            created_at,
            size_bytes,
        })
    }
}

pub fn compute_oid(payload: &[u8], metadata: &Metadata) -> Result<Oid, IdentityError> {
    if metadata.size_bytes != payload.len() as u64 {
        return Err(IdentityError::SizeMismatch {
            declared: metadata.size_bytes,
            actual: payload.len() as u64,
        });
    }
    Ok(Oid(digest_parts(&[payload, &metadata.canonical_bytes()])))
}

/// True iff `payload` and `metadata` hash to `claimed`. A size mismatch is
/// just another way of not matching.
pub fn verify_object(payload: &[u8], metadata: &Metadata, claimed: &Oid) -> bool {
    compute_oid(payload, metadata).is_ok_and(|oid| oid == *claimed)
}

/// A published object: payload, metadata, and the OID they claim to hash to.
/// Cheap to clone; clones share payload, metadata and the result of hashing
/// them, so an object that crosses many hops is only hashed once.
#[derive(Clone, Debug)]
pub struct Object {
    pub oid: Oid,
    payload: Arc<[u8]>,
    metadata: Arc<Metadata>,
    content: Arc<OnceLock<Option<Oid>>>,
}

impl PartialEq for Object {
    fn eq(&self, other: &Self) -> bool {
        self.oid == other.oid && self.payload == other.payload && self.metadata == other.metadata
    }
}

impl Eq for Object {}

impl Object {
    pub fn new(payload: Vec<u8>, metadata: Metadata) -> Result<Self, IdentityError> {
        let oid = compute_oid(&payload, &metadata)?;
        Ok(Self {
            oid,
            payload: payload.into(),
            metadata: Arc::new(metadata),
            content: Arc::new(OnceLock::from(Some(oid))),
        })
    }

    pub fn payload(&self) -> &Arc<[u8]> {
        &self.payload
    }

    pub fn metadata(&self) -> &Arc<Metadata> {
        &self.metadata
    }

    pub fn size(&self) -> u64 {
        self.payload.len() as u64
    }

    /// OID the carried bytes actually hash to, or `None` on a size mismatch.
    pub fn content_oid(&self) -> Option<Oid> {
        *self
            .content
            .get_or_init(|| compute_oid(&self.payload, &self.metadata).ok())
    }

    /// True iff the carried bytes hash to `claimed`.
    pub fn matches(&self, claimed: &Oid) -> bool {
        self.content_oid() == Some(*claimed)
    }

    pub fn verify(&self) -> bool {
        self.matches(&self.oid)
    }

    /// Copy with one payload byte flipped; the claimed OID is kept.
    pub fn corrupted(&self, at: usize) -> Self {
        let mut bytes = self.payload.to_vec();
        if !bytes.is_empty() {
            let i = at % bytes.len();
            bytes[i] ^= 0x01;
        }
        Self {
            oid: self.oid,
            payload: bytes.into(),
            metadata: self.metadata.clone(),
            content: Arc::new(OnceLock::new()),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; 32]);

/// Digests of (key, message, signature) triples that verified. Gossip makes
/// every gateway check the same signatures many times over; a hit here is
/// only ever a repeat of a successful check.
static VERIFIED: LazyLock<Mutex<HashSet<[u8; 32]>>> = LazyLock::new(Default::default);
const VERIFIED_CAP: usize = 1 << 20;

impl PublicKey {
    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let mut h = Sha256::new();
        h.update(self.0);
        h.update((message.len() as u64).to_be_bytes());
        h.update(message);
        h.update(signature);
        let memo: [u8; 32] = h.finalize().into();
        if VERIFIED.lock().unwrap_or_else(|e| e.into_inner()).contains(&memo) {
            return true;
        }
        let Ok(key) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
            return false;
        };
        let ok = key.verify(message, &sig).is_ok();
        if ok {
            let mut set = VERIFIED.lock().unwrap_or_else(|e| e.into_inner());
            if set.len() >= VERIFIED_CAP {
                set.clear();
            }
            set.insert(memo);
        }
        ok
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}..)", &hex::encode(self.0)[..12])
    }
}

/// Ed25519 key pair. Keys come from a 32-byte seed so runs are reproducible.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    /// Derives a key pair from a domain label and an integer, e.g. a
    /// scenario seed and a node index.
    pub fn derive(label: &str, index: u64) -> Self {
        let mut w = Writer::new();
        w.str("dweb-key").str(label).u64(index);
        Self::from_seed(digest(w.as_slice()))
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        self.signing.sign(message).to_bytes().to_vec()
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public_key", &self.public_key())
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Certificate {
    pub subject: MacAddress,
    pub public_key: PublicKey,
    pub issuer: MacAddress,
    pub authority_signature: Vec<u8>,
    pub serial: u64,
}

impl Certificate {
    /// The bytes the authority signs: subject ∥ public key ∥ serial.
    pub fn signed_bytes(subject: MacAddress, public_key: &PublicKey, serial: u64) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(&subject.0).fixed(&public_key.0).u64(serial);
        w.finish()
    }

    pub fn verify_issuer(&self, authority_key: &PublicKey) -> bool {
        authority_key.verify(
            &Self::signed_bytes(self.subject, &self.public_key, self.serial),
            &self.authority_signature,
        )
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.fixed(&self.subject.0)
            .fixed(&self.public_key.0)
            .fixed(&self.issuer.0)
            .bytes(&self.authority_signature)
            .u64(self.serial);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            subject: MacAddress(r.array()?),
            public_key: PublicKey(r.array()?),
            issuer: MacAddress(r.array()?),
            authority_signature: r.bytes()?.to_vec(),
            serial: r.u64()?,
        })
    }
}

/// The in-simulation certification authority. It also plays the "super
/// node" role that registers dummy certificates.
#[derive(Debug)]
pub struct Authority {
    id: MacAddress,
    keys: KeyPair,
    issued: HashMap<MacAddress, u64>,
    rng: ChaCha20Rng,
}

impl Authority {
    pub fn new(seed: u64) -> Self {
        Self {
            id: AUTHORITY_MAC,
            keys: KeyPair::derive("authority", seed),
            issued: HashMap::new(),
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_d00d),
        }
    }

    pub fn id(&self) -> MacAddress {
        self.id
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys.public_key()
    }

    pub fn keys(&self) -> &KeyPair {
        &self.keys
    }

    pub fn highest_serial(&self, subject: MacAddress) -> u64 {
        self.issued.get(&subject).copied().unwrap_or(0)
    }

    pub fn issue_certificate(&mut self, subject: MacAddress, public_key: PublicKey) -> Certificate {
        let serial = self.highest_serial(subject) + 1;
        self.issued.insert(subject, serial);
        let authority_signature = self
            .keys
            .sign(&Certificate::signed_bytes(subject, &public_key, serial));
        Certificate {
            subject,
            public_key,
            issuer: self.id,
            authority_signature,
            serial,
        }
    }

    /// Issues a certificate for a fresh key whose secret half is dropped
    /// before this function returns.
    pub fn make_dummy_certificate(&mut self, subject: MacAddress) -> Certificate {
        let mut seed = [0u8; 32];
        self.rng.fill_bytes(&mut seed);
        let public_key = KeyPair::from_seed(seed).public_key();
        seed.fill(0);
        self.issue_certificate(subject, public_key)
    }
}

/// Highest-serial certificate for `subject` committed on `chain`.
pub fn active_certificate(chain: &Chain, subject: MacAddress) -> Option<Certificate> {
    chain.state().active_certificate(subject).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;
    use std::collections::HashSet;

    fn meta(name: &str, size: u64) -> Metadata {
        Metadata {
            name: name.to_string(),
            keywords: vec!["news".into(), "local".into()],
            publisher: MacAddress([0x0a, 0, 0, 0, 1, 0]),
            created_at: 5,
            size_bytes: size,
        }
    }

    #[test]
    fn empty_payload_oid_is_digest_of_metadata_alone() {
        let m = meta("empty", 0);
        let a = compute_oid(&[], &m).unwrap();
        let b = compute_oid(&[], &m).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0, digest(&m.canonical_bytes()));
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let m = meta("x", 3);
        assert_eq!(
            compute_oid(b"ab", &m),
            Err(IdentityError::SizeMismatch {
                declared: 3,
                actual: 2
            })
        );
        assert!(!verify_object(b"ab", &m, &Oid([0; 32])));
    }

    #[test]
    fn extra_keyword_changes_oid() {
        let m = meta("doc", 4);
        let mut m2 = m.clone();
        m2.keywords.push("extra".into());
        assert_ne!(
            compute_oid(b"abcd", &m).unwrap(),
            compute_oid(b"abcd", &m2).unwrap()
        );
    }

    #[test]
    fn verify_object_cases() {
        let m = meta("doc", 4);
        let oid = compute_oid(b"abcd", &m).unwrap();
        assert!(verify_object(b"abcd", &m, &oid));
        assert!(!verify_object(b"abce", &m, &oid));
        let mut wrong = m.clone();
        wrong.name = "other".into();
        assert!(!verify_object(b"abcd", &wrong, &oid));
    }

    #[test]
    fn thousand_random_objects_have_no_collisions() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut seen = HashSet::new();
        let mut oids = Vec::new();
        for i in 0..1000u64 {
            let len = (rng.next_u32() % 64) as usize;
            let mut payload = vec![0u8; len];
            rng.fill_bytes(&mut payload);
            let m = Metadata {
                name: format!("obj-{}", rng.next_u32() % 50),
                keywords: vec![format!("k{}", rng.next_u32() % 7)],
                publisher: MacAddress([0, 0, 0, 0, 0, (i % 4) as u8]),
                created_at: rng.next_u64() % 3,
                size_bytes: len as u64,
            };
            let key = (payload.clone(), m.canonical_bytes());
            if seen.insert(key) {
                oids.push(compute_oid(&payload, &m).unwrap());
            }
        }
        // brute-force pairwise scan
        for i in 0..oids.len() {
            for j in i + 1..oids.len() {
                assert_ne!(oids[i], oids[j]);
            }
        }
    }

    #[test]
    fn mac_parse_and_display() {
        let mac: MacAddress = "02:00:00:00:0a:ff".parse().unwrap();
        assert_eq!(mac.0, [2, 0, 0, 0, 10, 255]);
        assert_eq!(mac.to_string(), "02:00:00:00:0a:ff");
        assert!("0200000000aff".parse::<MacAddress>().is_err());
        assert_eq!("020000000aff".parse::<MacAddress>().unwrap().0[4], 0x0a);
        assert!(MacAddress([0, 0, 0, 0, 0, 1]) < MacAddress([0, 0, 0, 0, 1, 0]));
    }

    #[test]
    fn certificate_serials_and_verification() {
        let mut ca = Authority::new(1);
        let g1 = MacAddress([2, 0, 0, 0, 0, 1]);
        let k1 = KeyPair::derive("g", 1);
        let c1 = ca.issue_certificate(g1, k1.public_key());
        assert_eq!(c1.serial, 1);
        assert!(c1.verify_issuer(&ca.public_key()));
        let c2 = ca.issue_certificate(g1, k1.public_key());
        assert_eq!(c2.serial, 2);

        let mut forged = c1.clone();
        forged.authority_signature = KeyPair::derive("mallory", 0)
            .sign(&Certificate::signed_bytes(g1, &forged.public_key, 1));
        assert!(!forged.verify_issuer(&ca.public_key()));
    }

    #[test]
    fn dummy_certificate_locks_out_old_key() {
        let mut ca = Authority::new(3);
        let g2 = MacAddress([2, 0, 0, 0, 0, 2]);
        let old = KeyPair::derive("g", 2);
        let first = ca.issue_certificate(g2, old.public_key());
        let dummy = ca.make_dummy_certificate(g2);
        assert_eq!(dummy.serial, first.serial + 1);
        assert!(dummy.verify_issuer(&ca.public_key()));
        let sig = old.sign(b"new transaction");
        assert!(first.public_key.verify(b"new transaction", &sig));
        assert!(!dummy.public_key.verify(b"new transaction", &sig));
    }

    #[test]
    fn keys_are_seed_deterministic() {
        let a = KeyPair::derive("x", 9);
        let b = KeyPair::derive("x", 9);
        assert_eq!(a.public_key(), b.public_key());
        assert_eq!(a.sign(b"m"), b.sign(b"m"));
        assert!(a.public_key().verify(b"m", &a.sign(b"m")));
        assert!(!a.public_key().verify(b"m", &[]));
    }

    fn arb_metadata() -> impl Strategy<Value = Metadata> {
        (
            "[a-c ]{0,4}",
            prop::collection::vec("[a-c]{0,3}", 0..4),
            any::<[u8; 6]>(),
            0u64..4,
            0u64..4,
        )
            .prop_map(|(name, keywords, mac, created_at, size_bytes)| Metadata {
                name,
                keywords,
                publisher: MacAddress(mac),
                created_at,
                size_bytes,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn canonical_serialization_is_injective(a in arb_metadata(), b in arb_metadata()) {
            prop_assert_eq!(a == b, a.canonical_bytes() == b.canonical_bytes());
        }

        #[test]
        fn canonical_bytes_decode_back(m in arb_metadata()) {
            let bytes = m.canonical_bytes();
            let mut r = Reader::new(&bytes);
            prop_assert_eq!(Metadata::decode(&mut r).unwrap(), m);
            prop_assert!(r.finish().is_ok());
        }

        #[test]
        fn single_byte_perturbation_breaks_verification(
            payload in prop::collection::vec(any::<u8>(), 1..128),
            idx in any::<prop::sample::Index>(),
            flip in 1u8..=255,
        ) {
            let m = Metadata {
                name: "p".into(),
                keywords: vec![],
                publisher: MacAddress::default(),
                created_at: 0,
                size_bytes: payload.len() as u64,
            };
            let oid = compute_oid(&payload, &m).unwrap();
            prop_assert!(verify_object(&payload, &m, &oid));
            let mut bad = payload.clone();
            let i = idx.index(bad.len());
            bad[i] ^= flip;
            prop_assert!(!verify_object(&bad, &m, &oid));
            let mut meta_bytes = m.canonical_bytes();
            let j = idx.index(meta_bytes.len());
            meta_bytes[j] ^= flip;
            if let Ok(m2) = Metadata::decode(&mut Reader::new(&meta_bytes)) {
                if m2 != m {
                    prop_assert!(!verify_object(&payload, &m2, &oid));
                }
            }
        }
    }
}
