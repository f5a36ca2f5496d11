//! Exact S-arithmetic computation for quadratic forms of rank 3 and 4.
//!
//! The crate works over a finite set of places S = {inf} ∪ {odd primes}: the
//! real place carries f64 scalars, every finite place carries exact rational
//! arithmetic. On top of that it provides
//!
//! * [`arith`] — places, p-adic valuations and norms, real/p-adic intervals,
//!   and the radius vectors used to dilate star bodies;
//! * [`forms`] — per-place quadratic forms, the isotropic standard shapes,
//!   unimodular coordinate changes, and seeded generic deformations;
//! * [`enumerate`] — S-integral vectors, star-body membership, box
//!   enumeration, and congruence sieve planning;
//! * [`counting`] — point counts N(T), exact finite-place volumes, Monte-Carlo
//!   real-place volumes, and the N/V ratio experiments;
//! * [`geometry`] — hyperbolic and (p+1)-regular-tree displacement measures
//!   with their exponential bounds, plus S-lattice covolumes, the alpha
//!   characteristic, and a Siegel-style lattice-sum transform.
//!
//! Everything downstream of a seed is deterministic: reruns with the same
//! configuration produce byte-identical outputs regardless of worker count.

pub mod arith;
pub mod counting;
pub mod enumerate;
pub mod forms;
pub mod geometry;
pub(crate) mod linalg;
