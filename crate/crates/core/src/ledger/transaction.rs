use std::fmt;

use crate::codec::{DecodeError, Reader, Writer};
use crate::identity::{compute_oid, digest, Certificate, IdentityError, KeyPair, MacAddress, Metadata, Oid, PublicKey};

use super::RejectReason;

const TAG_OBJECT: u8 = 1;
const TAG_CERTIFICATE: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TxKind {
    ObjectRegistration,
    CertificateRegistration,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TxBody {
    ObjectRegistration { oid: Oid, metadata: Metadata },
    CertificateRegistration { certificate: Certificate },
}

impl TxBody {
    fn encode(&self, w: &mut Writer) {
        match self {
            TxBody::ObjectRegistration { oid, metadata } => {
                w.u8(TAG_OBJECT).fixed(&oid.0);
                metadata.encode(w);
            }
            TxBody::CertificateRegistration { certificate } => {
                w.u8(TAG_CERTIFICATE);
                certificate.encode(w);
            }
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            TAG_OBJECT => Ok(TxBody::ObjectRegistration {
                oid: Oid(r.array()?),
                metadata: Metadata::decode(r)?,
            }),
            TAG_CERTIFICATE => Ok(TxBody::CertificateRegistration {
                certificate: Certificate::decode(r)?,
            }),
            other => Err(DecodeError::BadTag(other)),
        }
    }
}

/// Identity used for de-duplication across forks: an object registration is
/// the same event wherever its OID appears; a certificate registration is
/// identified by subject, serial, and key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxKey {
    Object(Oid),
    Certificate(MacAddress, u64, [u8; 32]),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub body: TxBody,
    pub origin: MacAddress,
    pub signature: Vec<u8>,
}

impl Transaction {
    pub fn kind(&self) -> TxKind {
        match self.body {
            TxBody::ObjectRegistration { .. } => TxKind::ObjectRegistration,
            TxBody::CertificateRegistration { .. } => TxKind::CertificateRegistration,
        }
    }

    pub fn key(&self) -> TxKey {
        match &self.body {
            TxBody::ObjectRegistration { oid, .. } => TxKey::Object(*oid),
            TxBody::CertificateRegistration { certificate } => TxKey::Certificate(
                certificate.subject,
                certificate.serial,
                certificate.public_key.0,
            ),
        }
    }

    pub fn oid(&self) -> Option<Oid> {
        match &self.body {
            TxBody::ObjectRegistration { oid, .. } => Some(*oid),
            TxBody::CertificateRegistration { .. } => None,
        }
    }

    /// canonical body ∥ origin
    pub fn signing_bytes(body: &TxBody, origin: MacAddress) -> Vec<u8> {
        let mut w = Writer::new();
        body.encode(&mut w);
        w.fixed(&origin.0);
        w.finish()
    }

    pub fn signed(body: TxBody, origin: MacAddress, keys: &KeyPair) -> Self {
        let signature = keys.sign(&Self::signing_bytes(&body, origin));
        Self {
            body,
            origin,
            signature,
        }
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&Self::signing_bytes(&self.body, self.origin), &self.signature)
    }

    /// Digest of the full encoding, signature included.
    pub fn id(&self) -> [u8; 32] {
        let mut w = Writer::new();
        self.encode(&mut w);
        digest(w.as_slice())
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        self.body.encode(w);
        w.fixed(&self.origin.0).bytes(&self.signature);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            body: TxBody::decode(r)?,
            origin: MacAddress(r.array()?),
            signature: r.bytes()?.to_vec(),
        })
    }
}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.body {
            TxBody::ObjectRegistration { oid, metadata } => write!(
                f,
                "ObjectTx({:?} {:?} from {})",
                oid, metadata.name, self.origin
            ),
            TxBody::CertificateRegistration { certificate } => write!(
                f,
                "CertTx({} serial {} from {})",
                certificate.subject, certificate.serial, self.origin
            ),
        }
    }
}

pub fn make_object_transaction(
    payload: &[u8],
    metadata: Metadata,
    origin_keys: &KeyPair,
    origin: MacAddress,
) -> Result<Transaction, IdentityError> {
    let oid = compute_oid(payload, &metadata)?;
    Ok(Transaction::signed(
        TxBody::ObjectRegistration { oid, metadata },
        origin,
        origin_keys,
    ))
}

/// A certificate registration. Signed either by the subject with the key
/// being registered, or by the authority (bootstrap and revocation).
pub fn make_certificate_transaction(
    certificate: Certificate,
    signer: &KeyPair,
    origin: MacAddress,
) -> Transaction {
    Transaction::signed(
        TxBody::CertificateRegistration { certificate },
        origin,
        signer,
    )
}

/// What validation needs from a chain. Implemented by the committed state
/// and by the per-block staging overlay.
pub(crate) trait LedgerView {
    fn authority_id(&self) -> MacAddress;
    fn authority_key(&self) -> PublicKey;
    fn active_certificate(&self, subject: MacAddress) -> Option<Certificate>;
    fn earlier_keys(&self, subject: MacAddress) -> Vec<PublicKey>;
    fn oid_committed(&self, oid: &Oid) -> bool;
}

pub(crate) fn validate_against(tx: &Transaction, view: &impl LedgerView) -> Result<(), RejectReason> {
    if tx.signature.is_empty() {
        return Err(RejectReason::BadSignature);
    }
    match &tx.body {
        TxBody::ObjectRegistration { oid, .. } => {
            let Some(active) = view.active_certificate(tx.origin) else {
                return Err(RejectReason::NoCertificate);
            };
            if !tx.verify_signature(&active.public_key) {
                let stale = view
                    .earlier_keys(tx.origin)
                    .iter()
                    .any(|k| *k != active.public_key && tx.verify_signature(k));
                return Err(if stale {
                    RejectReason::RevokedKey
                } else {
                    RejectReason::BadSignature
                });
            }
            if view.oid_committed(oid) {
                return Err(RejectReason::DuplicateOid);
            }
            Ok(())
        }
        TxBody::CertificateRegistration { certificate } => {
            let signer = if tx.origin == view.authority_id() {
                view.authority_key()
            } else if tx.origin == certificate.subject {
                certificate.public_key
            } else {
                return Err(RejectReason::BadSignature);
            };
            if !tx.verify_signature(&signer) {
                return Err(RejectReason::BadSignature);
            }
            if certificate.issuer != view.authority_id()
                || !certificate.verify_issuer(&view.authority_key())
            {
                return Err(RejectReason::BadAuthoritySignature);
            }
            let current = view
                .active_certificate(certificate.subject)
                .map_or(0, |c| c.serial);
            if certificate.serial <= current {
                return Err(RejectReason::StaleSerial);
            }
            Ok(())
        }
    }
}
