//! Pseudo log-likelihood estimation for generalized linear models whose link
//! saturates.
//!
//! - [`linkfn`]: links `μ`, the antiderivative `m`, smoothness bounds.
//! - [`tailfix`]: tail-extended links `h` that agree with `μ` on the
//!   reachable input range and diverge at both ends.
//! - [`mle`]: the objective, its derivatives, the damped Newton maximizer and
//!   unboundedness certificates.
//! - [`bandit`]: a GLM-bandit simulator comparing corrected and uncorrected
//!   estimation.
//! - [`expcli`]: configuration, canned counterexample scenarios and report
//!   emission behind the `plle` binary.

pub mod bandit;
pub mod expcli;
pub mod linkfn;
pub mod mle;
pub mod quadrature;
pub mod tailfix;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/links.md")]
    mod links {}
    #[doc = include_str!("../../../book/src/tail-extension.md")]
    mod tail_extension {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/counterexamples.md")]
    mod counterexamples {}
    #[doc = include_str!("../../../book/src/bandit.md")]
    mod bandit {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
