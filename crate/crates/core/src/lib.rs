//! Exact symbolic algebra for quantum mechanics on phase space.
//!
//! The crate implements, over exact big-rational complex scalars:
//!
//! - a small computer-algebra layer for phase-space symbols built from
//!   variables, `hbar`, abstract function symbols and the half-integer
//!   atoms `sgn`, `abs`, `sqrtabs` ([`expr`]);
//! - truncated graded power series in `hbar` ([`series`]);
//! - rings of linear differential operators with symbol coefficients,
//!   composed by the Leibniz rule ([`diffop`]);
//! - the Moyal star product, star commutators and brackets, and the
//!   star-monomial basis ([`starprod`]);
//! - canonical transformations, their generating functions, pushforward
//!   derivations and transformed star products ([`cantrans`]);
//! - gauge isomorphisms intertwining the Moyal product with a transformed
//!   product, solved order by order in `hbar`, together with normal-ordered
//!   operator polynomials and Weyl/S-ordering ([`gauge`]).
//!
//! Everything here is exact: coefficients are complex numbers with
//! big-rational parts and all identities are decided structurally.  The
//! companion crate layers floating-point grids, transform kernels and a
//! command line on top.
//!
//! The crate is `no_std` (it allocates but never needs an OS).

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cantrans;
pub mod diffop;
pub mod error;
pub mod expr;
pub mod gauge;
pub mod scalar;
pub mod series;
pub mod starprod;

pub use error::AlgError;
pub use expr::{Atom, Expr, FuncSym, Monomial, Var};
pub use scalar::{Rat, Scalar};
pub use series::HbarSeries;
