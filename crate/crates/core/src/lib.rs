//! Numerical weak KAM machinery for contact Hamilton-Jacobi equations on flat
//! tori T^1 and T^2.
//!
//! The pipeline: a contact Lagrangian L(x, v, u) = |v - V(x)|^2/2 + W(x) + g(x, u)
//! is discretized onto a periodic cost graph ([`grid`]). On the graph we compute
//! the Mane critical value and Mather measures via min-mean cycles ([`critical`]),
//! Mane potentials and Peierls barriers via shortest walks ([`barrier`]), and the
//! discounted/contact value functions via a monotone implicit Lax-Oleinik
//! fixed point ([`weakkam`]). The [`vanishing`] module drives the discount
//! parameter to zero and evaluates the barrier-based selection formulas that
//! identify the limit among all critical subsolutions.
//!
//! Data-parallel kernels run on rayon when the `parallel` feature (default) is
//! enabled; a sequential fallback produces bit-identical results.

pub mod barrier;
pub mod cli;
pub mod critical;
pub mod error;
pub mod exec;
pub mod grid;
pub mod model;
pub mod vanishing;
pub mod weakkam;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
