//! Country-level mobility from geo-located events.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clean;
pub mod community;
pub mod config;
pub mod country;
pub mod geo;
pub mod ingest;
pub mod metrics;
pub mod models;
pub mod network;
pub mod numeric;
pub mod pipeline;
pub mod residence;
pub mod synth;

pub use country::CountryCode;
pub use geo::LatLon;

// Book chapters compile and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/cleaning.md")]
    mod cleaning {}
    #[doc = include_str!("../../../book/src/residence.md")]
    mod residence {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/communities.md")]
    mod communities {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
