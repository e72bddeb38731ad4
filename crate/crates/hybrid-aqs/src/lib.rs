//! Classical simulator for small spin-graph quantum experiments.
//!
//! The crate models the full life cycle of an adiabatic ground-state
//! experiment on a register of at most seven qubits:
//!
//! * build a spin-graph Hamiltonian from one- and two-body Pauli terms
//!   ([`spin_model`]),
//! * sweep the register from a trivial Hamiltonian into the target one,
//!   either unitarily or coupled to per-qubit bosonic baths ([`evolution`],
//!   [`noise`]),
//! * interrogate the prepared state with a two-level probe qubit through a
//!   Ramsey sequence ([`measurement`]),
//! * recover the probed observable from the sampled fringe by a damped
//!   cosine fit ([`estimation`]).
//!
//! Two auxiliary modules stand alone: [`gadget`] verifies a perturbative
//! three-body coupling construction, and [`avg_hamiltonian`] checks the
//! pulse-sequence identities used to realise sums and commutators of
//! drive Hamiltonians.
//!
//! Internally `ħ = 1`, energies are measured in units of the reference
//! angular frequency `ω0` and times in `1/ω0`. Conversions to laboratory
//! units (seconds, mK) happen only at configuration and output boundaries;
//! see [`units`].

pub mod avg_hamiltonian;
pub mod error;
pub mod estimation;
pub mod evolution;
pub mod experiment;
pub mod gadget;
pub mod measurement;
pub mod noise;
pub mod operator;
pub mod spin_model;
pub mod units;

pub use error::AqsError;
pub use operator::HermitianOperator;
