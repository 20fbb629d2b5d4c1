use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::identity::{MacAddress, Metadata, Oid};
use crate::ledger::{Chain, Transaction, TxBody};

/// A search result: what a consumer clicks to fetch an object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Link {
    pub oid: Oid,
    pub metadata: Arc<Metadata>,
}

/// Lowercased whitespace tokens of the name and every keyword.
pub fn tokenize(metadata: &Metadata) -> BTreeSet<String> {
    std::iter::once(metadata.name.as_str())
        .chain(metadata.keywords.iter().map(String::as_str))
        .flat_map(str::split_whitespace)
        .map(str::to_lowercase)
        .collect()
}

/// Conjunctive inverted index over committed object registrations. Fully
/// determined by the chain, so every synchronized gateway holds the same one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchIndex {
    postings: BTreeMap<String, BTreeSet<Oid>>,
    links: HashMap<Oid, Arc<Metadata>>,
    origins: HashMap<Oid, MacAddress>,
}

impl SearchIndex {
    pub fn from_chain(chain: &Chain) -> Self {
        let mut index = Self::default();
        for tx in chain.transactions() {
            index.add(tx);
        }
        index
    }

    pub fn add(&mut self, tx: &Transaction) {
        let TxBody::ObjectRegistration { oid, metadata } = &tx.body else {
            return;
        };
        for token in tokenize(metadata) {
            self.postings.entry(token).or_default().insert(*oid);
        }
        self.links.insert(*oid, Arc::new(metadata.clone()));
        self.origins.insert(*oid, tx.origin);
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Gateway that registered `oid`.
    pub fn origin_of(&self, oid: &Oid) -> Option<MacAddress> {
        self.origins.get(oid).copied()
    }

    pub fn link(&self, oid: &Oid) -> Option<Link> {
        self.links.get(oid).map(|m| Link {
            oid: *oid,
            metadata: m.clone(),
        })
    }

    /// Links whose tokens include every query token, ordered by OID.
    pub fn search<S: AsRef<str>>(&self, query: &[S]) -> Vec<Link> {
        let tokens: Vec<String> = query
            .iter()
            .flat_map(|q| q.as_ref().split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
            .collect();
        if tokens.is_empty() {
            return Vec::new();
        }
        let mut lists = Vec::with_capacity(tokens.len());
        for t in &tokens {
            match self.postings.get(t) {
                Some(list) => lists.push(list),
                None => return Vec::new(),
            }
        }
        lists.sort_by_key(|l| l.len());
        lists[0]
            .iter()
            .filter(|oid| lists[1..].iter().all(|l| l.contains(oid)))
            .filter_map(|oid| self.link(oid))
            .collect()
    }

    /// Sorted `token<TAB>oid` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (token, oids) in &self.postings {
            for oid in oids {
                out.push_str(token);
                out.push('\t');
                out.push_str(&oid.to_hex());
                out.push('\n');
            }
        }
        out
    }
}
