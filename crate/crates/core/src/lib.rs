//! Privacy-preserving publication of classification data through vertical
//! fragmentation and per-fragment anonymization.

pub mod attacks;
pub mod error;
pub mod infotheory;
pub mod ldiversity;
pub mod metrics;
pub mod model;
pub mod mondrian;
pub mod pipeline;
pub mod publish;
pub mod reconstruct;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{AttributeKind, AttributeSchema, ClassValue, Dataset, Fragment, Fragmentation, GeneralizedValue, Role, Schema};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tables.md")]
    mod tables {}
    #[doc = include_str!("../../../book/src/fragmentation.md")]
    mod fragmentation {}
    #[doc = include_str!("../../../book/src/anonymization.md")]
    mod anonymization {}
    #[doc = include_str!("../../../book/src/joins.md")]
    mod joins {}
    #[doc = include_str!("../../../book/src/selectivity.md")]
    mod selectivity {}
    #[doc = include_str!("../../../book/src/ldiversity.md")]
    mod ldiversity {}
    #[doc = include_str!("../../../book/src/auditing.md")]
    mod auditing {}
    #[doc = include_str!("../../../book/src/publishing.md")]
    mod publishing {}
}
