//! Flux-based volume-penalization solver for elliptic problems with immersed
//! Neumann and Robin interfaces on uniform Cartesian grids.
//!
//! The library discretizes
//! `-div([kappa(1-chi) + eta*chi] grad q) = (1-chi) f + div(chi beta) - chi div beta`
//! where `chi` is an indicator of the solid region and the flux field `beta`
//! carries the interface condition `beta . n = -g`. Modules build up from grid
//! primitives to a verification harness with manufactured solutions.

pub mod cases;
pub mod cli;
pub mod error;
pub mod forcing;
pub mod geometry;
pub mod grid;
pub mod indicator;
pub mod operator;
pub mod solver;
pub mod verify;

pub use error::VpError;

#[cfg(doctest)]
mod book_doctests {
    #![doc = include_str!("../../../book/src/overview.md")]

    #[doc = include_str!("../../../book/src/indicator.md")]
    mod indicator {}
    #[doc = include_str!("../../../book/src/forcing.md")]
    mod forcing {}
    #[doc = include_str!("../../../book/src/solving.md")]
    mod solving {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
