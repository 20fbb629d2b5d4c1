pub mod cache;
pub mod codec;
pub mod gateway;
pub mod harness;
pub mod identity;
pub mod ledger;
pub mod simnet;

/// Simulation time in abstract units; one unit is the default link latency.
pub type SimTime = u64;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/identity.md")]
    mod identity {}
    #[doc = include_str!("../../../book/src/ledger.md")]
    mod ledger {}
    #[doc = include_str!("../../../book/src/cache.md")]
    mod cache {}
    #[doc = include_str!("../../../book/src/simnet.md")]
    mod simnet {}
    #[doc = include_str!("../../../book/src/gateway.md")]
    mod gateway {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
