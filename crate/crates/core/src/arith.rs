//! Places, valuations, norms, intervals, and radii.
//!
//! A place is either the real place `inf` or an odd prime p. Finite-place
//! scalars are exact rationals ([`Rational`], backed by `num_rational`), real
//! scalars are f64. All comparisons at the real place are exact comparisons on
//! the stored f64 — no epsilons are introduced anywhere in membership tests.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Exact rational scalar used at every finite place. Always in lowest terms
/// with a positive denominator (guaranteed by the underlying representation).
pub type Rational = num_rational::BigRational;

/// Errors from place/interval/radius construction and normalization.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ArithError {
    #[error("finite places must be odd primes; 2 is not supported")]
    EvenPrime,
    #[error("finite places must be odd primes; {0} is not prime")]
    NotPrime(u64),
    #[error("duplicate finite place {0}")]
    DuplicatePlace(u64),
    #[error("interval is empty: lo = {lo} must be strictly less than hi = {hi}")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error("interval endpoints must be finite numbers")]
    NonFiniteEndpoint,
    #[error("cannot normalize the zero vector")]
    ZeroVector,
    #[error("T_inf must be positive and finite, got {0}")]
    BadRealRadius(f64),
    #[error("cannot parse rational from {0:?}")]
    BadRational(String),
    #[error("place {0} does not belong to the S-set")]
    PlaceNotInS(String),
}

/// One place of the rationals: the real place or an odd prime.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Place {
    /// The archimedean (real) place. Sorts before every finite place.
    Infinite,
    /// A finite place, i.e. an odd prime number.
    Finite(u64),
}

impl Place {
    /// Validated constructor for a finite place. Rejects 2 (the machinery
    /// here — nonresidue units, clopen balls, residue sieves — assumes odd
    /// residue characteristic) and every composite.
    pub fn finite(p: u64) -> Result<Place, ArithError> {
        if p == 2 {
            return Err(ArithError::EvenPrime);
        }
        if !is_prime(p) {
            return Err(ArithError::NotPrime(p));
        }
        Ok(Place::Finite(p))
    }

    /// Scaling sign convention for unit normalization: −1 at finite places
    /// (divide by p^val to scale *down*), +1 at the real place.
    pub fn sigma(&self) -> i32 {
        match self {
            Place::Infinite => 1,
            Place::Finite(_) => -1,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Place::Finite(_))
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Place::Infinite => write!(f, "inf"),
            Place::Finite(p) => write!(f, "{p}"),
        }
    }
}

/// Deterministic primality test for u64 (trial division; inputs here are
/// desk-scale primes, so this is never a bottleneck).
fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// A finite set of places S = {inf} ∪ S_f with S_f a (possibly empty) set of
/// odd primes. The real place is always present and sorts first; finite
/// places are kept strictly increasing.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SSet {
    places: Vec<Place>,
}

impl SSet {
    /// Build an S-set from its finite primes (deduplicated input is required;
    /// order is normalized to increasing).
    pub fn new(finite_primes: &[u64]) -> Result<SSet, ArithError> {
        let mut primes = Vec::with_capacity(finite_primes.len());
        for &p in finite_primes {
            Place::finite(p)?;
            primes.push(p);
        }
        primes.sort_unstable();
        for w in primes.windows(2) {
            if w[0] == w[1] {
                return Err(ArithError::DuplicatePlace(w[0]));
            }
        }
        let mut places = vec![Place::Infinite];
        places.extend(primes.into_iter().map(Place::Finite));
        Ok(SSet { places })
    }

    /// All places, real place first, finite places increasing.
    pub fn places(&self) -> &[Place] {
        &self.places
    }

    /// The finite primes in increasing order.
    pub fn finite_primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.places.iter().filter_map(|pl| match pl {
            Place::Finite(p) => Some(*p),
            Place::Infinite => None,
        })
    }

    /// Number of finite places |S_f|.
    pub fn num_finite(&self) -> usize {
        self.places.len() - 1
    }

    pub fn contains(&self, place: &Place) -> bool {
        self.places.contains(place)
    }
}

/// p^e as an exact rational; e may be negative.
pub fn p_pow(p: u64, e: i64) -> Rational {
    let base = BigInt::from(p);
    if e >= 0 {
        Rational::from_integer(base.pow(e as u32))
    } else {
        Rational::new(BigInt::one(), base.pow((-e) as u32))
    }
}

/// p-adic valuation of a nonzero integer (number of times p divides it).
pub fn int_valuation(x: &BigInt, p: u64) -> Option<i64> {
    if x.is_zero() {
        return None;
    }
    let p = BigInt::from(p);
    let mut v = 0i64;
    let mut x = x.abs();
    loop {
        let (q, r) = x.div_rem(&p);
        if r.is_zero() {
            v += 1;
            x = q;
        } else {
            return Some(v);
        }
    }
}

/// p-adic valuation of a rational: val(num) − val(den). `None` encodes +∞,
/// the conventional valuation of zero. `p` may be any prime here; the odd
/// restriction applies to *places*, not to raw valuations.
pub fn valuation(r: &Rational, p: u64) -> Option<i64> {
    if r.is_zero() {
        return None;
    }
    let vn = int_valuation(r.numer(), p).expect("nonzero numerator");
    let vd = int_valuation(r.denom(), p).expect("nonzero denominator");
    Some(vn - vd)
}

/// A per-place scalar: exact rational at finite places, f64 at the real
/// place. Used for norms, quadratic form values, and measures alike.
#[derive(Clone, PartialEq, Debug)]
pub enum PlaceScalar {
    Real(f64),
    Exact(Rational),
}

impl PlaceScalar {
    pub fn to_f64(&self) -> f64 {
        match self {
            PlaceScalar::Real(x) => *x,
            PlaceScalar::Exact(r) => r.to_f64().expect("rational fits in f64 range"),
        }
    }

    /// The exact rational value; panics on real-place norms.
    pub fn expect_exact(&self) -> &Rational {
        match self {
            PlaceScalar::Exact(r) => r,
            PlaceScalar::Real(_) => panic!("expected an exact finite-place norm"),
        }
    }
}

/// Single-scalar norm at a place: p^{−val} (exactly) at a finite place, the
/// absolute value at the real place. The norm of 0 is 0.
pub fn p_norm(r: &Rational, place: &Place) -> PlaceScalar {
    match place {
        Place::Infinite => PlaceScalar::Real(r.to_f64().expect("rational fits in f64 range").abs()),
        Place::Finite(p) => match valuation(r, *p) {
            None => PlaceScalar::Exact(Rational::zero()),
            Some(v) => PlaceScalar::Exact(p_pow(*p, -v)),
        },
    }
}

/// Vector norm at a place: max of coordinate norms (= p^{−min val}) at a
/// finite place, the Euclidean norm at the real place (the name keeps the
/// finite-place convention).
pub fn sup_norm(v: &[Rational], place: &Place) -> PlaceScalar {
    match place {
        Place::Infinite => {
            let s: f64 = v
                .iter()
                .map(|x| {
                    let xf = x.to_f64().expect("rational fits in f64 range");
                    xf * xf
                })
                .sum();
            PlaceScalar::Real(s.sqrt())
        }
        Place::Finite(p) => {
            let mut min_val: Option<i64> = None;
            for x in v {
                if let Some(val) = valuation(x, *p) {
                    min_val = Some(min_val.map_or(val, |m| m.min(val)));
                }
            }
            match min_val {
                None => PlaceScalar::Exact(Rational::zero()),
                Some(m) => PlaceScalar::Exact(p_pow(*p, -m)),
            }
        }
    }
}

/// A vector scaled to norm exactly 1: exact rationals at finite places, f64
/// at the real place (where the norm is irrational in general).
#[derive(Clone, PartialEq, Debug)]
pub enum UnitVector {
    Real(Vec<f64>),
    Finite(Vec<Rational>),
}

/// Scale a nonzero vector to sup-norm exactly 1 at the given place. At a
/// finite place this multiplies by p^{min val} (exact); at the real place it
/// divides by the Euclidean norm.
pub fn unit_normalize(v: &[Rational], place: &Place) -> Result<UnitVector, ArithError> {
    match place {
        Place::Infinite => {
            let norm = sup_norm(v, place).to_f64();
            if norm == 0.0 {
                return Err(ArithError::ZeroVector);
            }
            Ok(UnitVector::Real(
                v.iter()
                    .map(|x| x.to_f64().expect("rational fits in f64 range") / norm)
                    .collect(),
            ))
        }
        Place::Finite(p) => {
            let mut min_val: Option<i64> = None;
            for x in v {
                if let Some(val) = valuation(x, *p) {
                    min_val = Some(min_val.map_or(val, |m| m.min(val)));
                }
            }
            let m = min_val.ok_or(ArithError::ZeroVector)?;
            let scale = p_pow(*p, -m);
            Ok(UnitVector::Finite(v.iter().map(|x| x * &scale).collect()))
        }
    }
}

/// Open real interval (lo, hi).
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct RealInterval {
    pub lo: f64,
    pub hi: f64,
}

impl RealInterval {
    pub fn new(lo: f64, hi: f64) -> Result<RealInterval, ArithError> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(ArithError::NonFiniteEndpoint);
        }
        if lo >= hi {
            return Err(ArithError::EmptyInterval { lo, hi });
        }
        Ok(RealInterval { lo, hi })
    }

    /// Strict membership on both ends (the interval is open).
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// p-adic interval (ball) center + p^exponent · Z_p. The exponent may be
/// negative; the ball has Haar measure p^{−exponent} (with Z_p normalized to
/// measure 1).
#[derive(Clone, PartialEq, Debug)]
pub struct PAdicInterval {
    pub p: u64,
    pub center: Rational,
    pub exponent: i64,
}

impl PAdicInterval {
    pub fn new(place: Place, center: Rational, exponent: i64) -> Result<PAdicInterval, ArithError> {
        match place {
            Place::Finite(p) => Ok(PAdicInterval { p, center, exponent }),
            Place::Infinite => Err(ArithError::PlaceNotInS("inf".into())),
        }
    }

    /// Membership: val_p(r − center) ≥ exponent.
    pub fn contains(&self, r: &Rational) -> bool {
        match valuation(&(r - &self.center), self.p) {
            None => true, // r == center
            Some(v) => v >= self.exponent,
        }
    }

    /// Haar measure p^{−exponent}, exact.
    pub fn measure(&self) -> Rational {
        p_pow(self.p, -self.exponent)
    }
}

/// Free-function alias for [`PAdicInterval::contains`].
pub fn in_p_interval(r: &Rational, interval: &PAdicInterval) -> bool {
    interval.contains(r)
}

/// Product interval I_S = (lo, hi) × ∏_p (a_p + p^{b_p} Z_p), one p-adic
/// factor per finite place of the ambient S-set.
#[derive(Clone, PartialEq, Debug)]
pub struct SInterval {
    pub real: RealInterval,
    pub finite: BTreeMap<u64, PAdicInterval>,
}

impl SInterval {
    /// Build and check that the finite factors exactly cover the finite
    /// places of `s`.
    pub fn new(
        s: &SSet,
        real: RealInterval,
        finite: BTreeMap<u64, PAdicInterval>,
    ) -> Result<SInterval, ArithError> {
        for p in s.finite_primes() {
            if !finite.contains_key(&p) {
                return Err(ArithError::PlaceNotInS(p.to_string()));
            }
        }
        for (&p, ival) in &finite {
            if !s.contains(&Place::Finite(p)) || ival.p != p {
                return Err(ArithError::PlaceNotInS(p.to_string()));
            }
        }
        Ok(SInterval { real, finite })
    }

    /// Exact product of the finite-place measures.
    pub fn finite_measure(&self) -> Rational {
        self.finite
            .values()
            .fold(Rational::one(), |acc, i| acc * i.measure())
    }
}

/// Product Haar measure: real length times the exact finite-place factor.
pub fn s_interval_measure(interval: &SInterval) -> f64 {
    interval.real.length()
        * interval
            .finite_measure()
            .to_f64()
            .expect("measure fits in f64 range")
}

/// Radius at one finite place: either p^exponent (any sign of exponent — the
/// radius space is p^Z ∪ {0}) or the degenerate radius 0, the "ball" that
/// contains only the zero vector. Zero radii are legal but flagged by
/// downstream report writers.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FiniteRadius {
    Zero,
    Exp(i32),
}

impl FiniteRadius {
    /// T_p as an exact rational (0 for the degenerate radius).
    pub fn value(&self, p: u64) -> Rational {
        match self {
            FiniteRadius::Zero => Rational::zero(),
            FiniteRadius::Exp(e) => p_pow(p, *e as i64),
        }
    }
}

/// Dilation radii T = (T_inf, (T_p)_p): a positive real radius at the real
/// place and a p-power radius per finite place.
#[derive(Clone, PartialEq, Debug)]
pub struct Radii {
    pub t_inf: f64,
    pub finite: BTreeMap<u64, FiniteRadius>,
}

impl Radii {
    pub fn new(
        s: &SSet,
        t_inf: f64,
        finite: BTreeMap<u64, FiniteRadius>,
    ) -> Result<Radii, ArithError> {
        if !(t_inf.is_finite() && t_inf > 0.0) {
            return Err(ArithError::BadRealRadius(t_inf));
        }
        for p in s.finite_primes() {
            if !finite.contains_key(&p) {
                return Err(ArithError::PlaceNotInS(p.to_string()));
            }
        }
        for &p in finite.keys() {
            if !s.contains(&Place::Finite(p)) {
                return Err(ArithError::PlaceNotInS(p.to_string()));
            }
        }
        Ok(Radii { t_inf, finite })
    }

    /// Convenience constructor: the same exponent at every finite place.
    pub fn uniform(s: &SSet, t_inf: f64, exp: i32) -> Result<Radii, ArithError> {
        let finite = s
            .finite_primes()
            .map(|p| (p, FiniteRadius::Exp(exp)))
            .collect();
        Radii::new(s, t_inf, finite)
    }

    /// |T| = T_inf · ∏_p T_p (0 if any finite radius is degenerate).
    pub fn abs_t(&self) -> f64 {
        let mut t = self.t_inf;
        for (&p, r) in &self.finite {
            t *= r.value(p).to_f64().expect("radius fits in f64 range");
        }
        t
    }

    /// Exact finite part ∏_p T_p of |T|.
    pub fn finite_product(&self) -> Rational {
        self.finite
            .iter()
            .fold(Rational::one(), |acc, (&p, r)| acc * r.value(p))
    }

    /// True if any finite place carries the degenerate radius 0.
    pub fn has_zero_radius(&self) -> bool {
        self.finite.values().any(|r| matches!(r, FiniteRadius::Zero))
    }
}

/// Parse an exact rational from "num/den" or integer shorthand ("-3/4", "7").
pub fn parse_rational(s: &str) -> Result<Rational, ArithError> {
    Rational::from_str(s.trim()).map_err(|_| ArithError::BadRational(s.to_string()))
}

/// Convenience: rational from an integer pair (den > 0 normalized inside).
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}
