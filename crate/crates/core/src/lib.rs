//! Bit-exact multi-precision multiplier model and cycle-level simulator of a
//! fusible/fissionable MAC array.

pub mod array;
pub mod bench;
pub mod error;
pub mod formats;
pub mod isa;
pub mod multiplier;
pub mod timing;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    pub mod chapter1 {}
    #[doc = include_str!("../../../book/src/multiplier.md")]
    pub mod chapter2 {}
    #[doc = include_str!("../../../book/src/array.md")]
    pub mod chapter3 {}
    #[doc = include_str!("../../../book/src/timing.md")]
    pub mod chapter4 {}
    #[doc = include_str!("../../../book/src/isa.md")]
    pub mod chapter5 {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod chapter6 {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod chapter7 {}
}
