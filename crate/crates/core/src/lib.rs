// NaN must fail range checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod experiments;
pub mod fitting;
pub mod hilbert;
pub mod linalg;
pub mod measures;
pub mod model;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/hilbert-space.md")]
    mod hilbert_space {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/non-markovianity.md")]
    mod non_markovianity {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/decay-rates.md")]
    mod decay_rates {}
    #[doc = include_str!("../../../book/src/memristor.md")]
    mod memristor {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
