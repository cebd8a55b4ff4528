//! Nygaard and Hodge filtrations of Breuil–Kisin modules over `Z_p[[u]]`,
//! computed exactly at finite `(p, u)`-adic precision.

pub mod error;
pub mod bk;
pub mod connection;
pub mod corpus;
pub mod linalg;
pub mod padic;
pub mod theta;
pub mod weyl;

pub use error::{Error, Result};

// The guide's snippets are compiled and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/precision.md")]
    mod precision {}
    #[doc = include_str!("../../../book/src/linear-algebra.md")]
    mod linear_algebra {}
    #[doc = include_str!("../../../book/src/nygaard.md")]
    mod nygaard {}
    #[doc = include_str!("../../../book/src/theta-modules.md")]
    mod theta_modules {}
    #[doc = include_str!("../../../book/src/weyl.md")]
    mod weyl {}
    #[doc = include_str!("../../../book/src/connection.md")]
    mod connection {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
