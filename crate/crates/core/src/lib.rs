//! Numerics for Sudler products `P_N(α) = Π_{r=1..N} 2|sin πrα|` at quadratic
//! irrationals `β = [b,b,b,...]`, their perturbed variants along convergent
//! denominators, the limit functions `G_β(ε)` with rigorous truncation bounds,
//! the constants `C_b`, and the Ostrowski/Zeckendorff machinery used to
//! decompose and certify the growth behaviour of `P_N(β)`.
//!
//! Layout:
//! - [`qcf`]: exact continued-fraction data (surds, convergents, digit expansions)
//! - [`kernel`]: fixed-point fractional parts and log-domain product evaluation
//! - [`limitfn`]: `u_b(r)`, `G_β`, `C_b`, roots, log-concavity certificates
//! - [`growth`]: block decompositions, perturbation ranges, witness sequences,
//!   and the growth-dichotomy certification

pub mod growth;
pub mod kernel;
pub mod limitfn;
pub mod qcf;

pub use kernel::{Alpha, EvalOptions, EvalWithBound};
pub use qcf::QuadraticSurd;
