//! S-integral vectors, dilated star bodies, deterministic box enumeration,
//! and congruence sieve planning.
//!
//! Enumeration works in cleared-denominator coordinates: with D = ∏ p^{t_p},
//! every candidate v ∈ Z_S^n inside the dilated body is w/D for an integer
//! vector w in a finite box, so a lexicographic integer scan visits each
//! candidate exactly once (byte-reproducible order). A sieve plan reduces the
//! residue classes of w that can possibly satisfy the finite-place value
//! constraints; it is exact (sound and complete) at its stabilization
//! modulus, not a heuristic.

use crate::arith::{Place, Radii, Rational, SInterval, SSet};
use crate::forms::SQuadraticForm;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnumError {
    #[error("denominator {0} is not supported on the S-set's finite places")]
    BadDenominator(u64),
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("enumeration box has {points} lattice points, over the cap {cap}; shrink T or raise the cap")]
    BoxCapExceeded { points: u128, cap: u64 },
    #[error("sieve table at p = {p} needs {entries} residues, over the cap {cap}")]
    SieveCapExceeded { p: u64, entries: u128, cap: u64 },
    #[error("denominator overflows u64: finite radii are too large")]
    DenominatorOverflow,
    #[error("radius table: {0}")]
    BadTable(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Arith(#[from] crate::arith::ArithError),
}

/// An S-integral vector stored as integer coordinates over a denominator
/// supported on the finite places: v = w / denom. The representation is
/// canonical: no finite place divides both the denominator and every
/// coordinate.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct SVector {
    w: Vec<i64>,
    denom: u64,
}

impl SVector {
    /// Canonicalizing constructor; rejects denominators with prime factors
    /// outside the S-set.
    pub fn new(s: &SSet, w: Vec<i64>, denom: u64) -> Result<SVector, EnumError> {
        if denom == 0 {
            return Err(EnumError::ZeroDenominator);
        }
        let mut rest = denom;
        for p in s.finite_primes() {
            while rest.is_multiple_of(p) {
                rest /= p;
            }
        }
        if rest != 1 {
            return Err(EnumError::BadDenominator(denom));
        }
        Ok(Self::canonical(w, denom, s))
    }

    /// Internal constructor for callers that already know the denominator is
    /// S-supported (the enumeration hot path).
    pub(crate) fn canonical(mut w: Vec<i64>, mut denom: u64, s: &SSet) -> SVector {
        for p in s.finite_primes() {
            while denom.is_multiple_of(p) && w.iter().all(|&x| x % p as i64 == 0) {
                denom /= p;
                for x in &mut w {
                    *x /= p as i64;
                }
            }
        }
        SVector { w, denom }
    }

    pub fn coords(&self) -> &[i64] {
        &self.w
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|&x| x == 0)
    }

    pub fn to_rationals(&self) -> Vec<Rational> {
        let d = BigInt::from(self.denom);
        self.w
            .iter()
            .map(|&x| Rational::new(BigInt::from(x), d.clone()))
            .collect()
    }
}

impl fmt::Display for SVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coords: Vec<String> = self.w.iter().map(|x| x.to_string()).collect();
        write!(f, "({})/{}", coords.join(", "), self.denom)
    }
}

/// Radius profile at the real place: a constant, or a positive table over
/// the unit sphere with multilinear interpolation in the angles.
#[derive(Clone, PartialEq, Debug)]
pub enum RealRadius {
    ConstantRadius(f64),
    Table(SphereTable),
}

/// A positive radius function tabulated over an even angle grid on the unit
/// sphere of R^n (n = 2, 3, 4). The first angle is periodic (azimuth in
/// [0, 2π)); the remaining angles run over [0, π] inclusive. Lookup is
/// multilinear in the angles, so values between grid nodes stay within the
/// tabulated range (continuity and positivity are preserved).
#[derive(Clone, PartialEq, Debug)]
pub struct SphereTable {
    n: usize,
    sizes: Vec<usize>,
    values: Vec<f64>,
}

impl SphereTable {
    pub fn new(n: usize, sizes: Vec<usize>, values: Vec<f64>) -> Result<SphereTable, EnumError> {
        if !(2..=4).contains(&n) {
            return Err(EnumError::BadTable(format!("tables support n ∈ {{2,3,4}}, got {n}")));
        }
        if sizes.len() != n - 1 {
            return Err(EnumError::BadTable(format!(
                "need {} angle axes for n = {n}, got {}",
                n - 1,
                sizes.len()
            )));
        }
        if sizes[0] < 1 || sizes[1..].iter().any(|&k| k < 2) {
            return Err(EnumError::BadTable("each non-periodic axis needs ≥ 2 nodes".into()));
        }
        let total: usize = sizes.iter().product();
        if values.len() != total {
            return Err(EnumError::BadTable(format!(
                "expected {total} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(EnumError::BadTable("radius values must be positive and finite".into()));
        }
        Ok(SphereTable { n, sizes, values })
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// Interpolated radius in the direction of `dir` (any nonzero vector).
    pub fn lookup(&self, dir: &[f64]) -> f64 {
        use std::f64::consts::PI;
        assert_eq!(dir.len(), self.n);
        let r: f64 = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        debug_assert!(r > 0.0, "direction must be nonzero");
        // angles: azimuth (periodic) first, then polar angles in [0, π]
        let mut angles = Vec::with_capacity(self.n - 1);
        match self.n {
            2 => {
                angles.push(dir[1].atan2(dir[0]).rem_euclid(2.0 * PI));
            }
            3 => {
                angles.push(dir[1].atan2(dir[0]).rem_euclid(2.0 * PI));
                angles.push((dir[2] / r).clamp(-1.0, 1.0).acos());
            }
            4 => {
                let t1 = (dir[0] / r).clamp(-1.0, 1.0).acos();
                let s1 = t1.sin();
                let (t2, phi) = if s1.abs() < 1e-12 {
                    (0.0, 0.0)
                } else {
                    let t2 = (dir[1] / (r * s1)).clamp(-1.0, 1.0).acos();
                    let phi = dir[3].atan2(dir[2]).rem_euclid(2.0 * PI);
                    (t2, phi)
                };
                angles.push(phi);
                angles.push(t1);
                angles.push(t2);
            }
            _ => unreachable!("validated at construction"),
        }
        // multilinear interpolation, axis 0 periodic
        let mut coords = Vec::with_capacity(angles.len());
        for (ax, &a) in angles.iter().enumerate() {
            let m = self.sizes[ax];
            if ax == 0 {
                let u = a / (2.0 * PI) * m as f64;
                let i0 = (u.floor() as usize) % m;
                coords.push((i0, (i0 + 1) % m, u - u.floor()));
            } else {
                let u = (a / PI) * (m - 1) as f64;
                let i0 = (u.floor() as usize).min(m - 2);
                coords.push((i0, i0 + 1, (u - i0 as f64).clamp(0.0, 1.0)));
            }
        }
        // accumulate over the 2^(n−1) corners
        let axes = coords.len();
        let mut acc = 0.0;
        for corner in 0..(1usize << axes) {
            let mut weight = 1.0;
            let mut idx = 0usize;
            for (ax, &(i0, i1, frac)) in coords.iter().enumerate() {
                let (i, wgt) = if corner >> ax & 1 == 0 { (i0, 1.0 - frac) } else { (i1, frac) };
                weight *= wgt;
                idx = idx * self.sizes[ax] + i;
            }
            acc += weight * self.values[idx];
        }
        acc
    }
}

/// A star-shaped body given by per-place radius profiles: Ω contains v when
/// ‖v‖_p ≤ ρ_p(direction) at every place. Finite-place radii are constant
/// powers of p (stored as exponents — ultrametric balls only see p-power
/// radii, and shell decompositions need exact p-power boundaries).
#[derive(Clone, PartialEq, Debug)]
pub struct StarBody {
    pub n: usize,
    pub real: RealRadius,
    /// exponent k_p per finite place: ρ_p = p^{k_p}
    pub finite: BTreeMap<u64, i64>,
}

impl StarBody {
    /// The unit ball: ρ ≡ 1 at every place.
    pub fn ball(s: &SSet, n: usize) -> StarBody {
        StarBody {
            n,
            real: RealRadius::ConstantRadius(1.0),
            finite: s.finite_primes().map(|p| (p, 0)).collect(),
        }
    }

    pub fn validate(&self, s: &SSet) -> Result<(), EnumError> {
        if self.n == 0 {
            return Err(EnumError::Dimension("n must be ≥ 1".into()));
        }
        match &self.real {
            RealRadius::ConstantRadius(c) => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(EnumError::BadTable(format!("real radius must be positive, got {c}")));
                }
            }
            RealRadius::Table(t) => {
                if t.n != self.n {
                    return Err(EnumError::Dimension(format!(
                        "table is for n = {}, body is n = {}",
                        t.n, self.n
                    )));
                }
            }
        }
        for p in s.finite_primes() {
            if !self.finite.contains_key(&p) {
                return Err(EnumError::Dimension(format!("missing finite radius at p = {p}")));
            }
        }
        Ok(())
    }

    /// Largest real radius over all directions (bounding-box radius).
    pub fn rho_inf_max(&self) -> f64 {
        match &self.real {
            RealRadius::ConstantRadius(c) => *c,
            RealRadius::Table(t) => t.max_value(),
        }
    }

    /// Real radius in the direction of `dir` (nonzero).
    pub fn rho_inf(&self, dir: &[f64]) -> f64 {
        match &self.real {
            RealRadius::ConstantRadius(c) => *c,
            RealRadius::Table(t) => t.lookup(dir),
        }
    }
}

/// Which part of the dilated body membership refers to.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Region {
    /// The whole dilated body: ‖v‖_p ≤ T_p·ρ_p at every place.
    Body,
    /// The outer shell: T·ρ/2 < ‖v‖ ≤ T·ρ at the real place and
    /// ‖v‖_p = T_p·ρ_p exactly at finite places.
    Shell,
}

/// The natural denominator D = ∏ p^{t_p} that clears every finite place of
/// the dilated unit ball (negative exponents contribute nothing: those radii
/// need no denominators at all).
pub fn denominator_of(s: &SSet, t: &Radii) -> Result<u64, EnumError> {
    use crate::arith::FiniteRadius;
    let mut d: u64 = 1;
    for p in s.finite_primes() {
        let exp = match t.finite.get(&p) {
            Some(FiniteRadius::Exp(e)) => (*e).max(0),
            Some(FiniteRadius::Zero) | None => 0,
        };
        for _ in 0..exp {
            d = d.checked_mul(p).ok_or(EnumError::DenominatorOverflow)?;
        }
    }
    Ok(d)
}

/// Integer-side view of the membership data for one finite place.
#[derive(Clone, Debug)]
struct FinitePlaceGeom {
    p: u64,
    /// minimal valuation of w required: minval_p(w) ≥ e_p − (t_p + k_p) for
    /// Body, = for Shell (negative thresholds mean "no constraint"/"empty")
    threshold: i64,
    zero_radius: bool,
}

/// Precomputed membership geometry for (Ω, T) in cleared-denominator
/// coordinates; shared by the public membership test and the enumeration
/// hot path.
#[derive(Clone, Debug)]
pub struct BodyGeometry {
    n: usize,
    denom: u64,
    t_inf: f64,
    real: RealRadius,
    places: Vec<FinitePlaceGeom>,
}

impl BodyGeometry {
    pub fn new(s: &SSet, omega: &StarBody, t: &Radii) -> Result<BodyGeometry, EnumError> {
        use crate::arith::FiniteRadius;
        omega.validate(s)?;
        // The clearing denominator must absorb the body's own radius
        // exponents: the deepest denominator a member can carry at p is
        // p^{t_p + k_p}, not p^{t_p}.
        let mut denom: u64 = 1;
        let mut places = Vec::new();
        for p in s.finite_primes() {
            let k_p = *omega.finite.get(&p).expect("validated above");
            match t.finite.get(&p) {
                Some(FiniteRadius::Exp(t_p)) => {
                    let total = *t_p as i64 + k_p;
                    let e_p = total.max(0);
                    for _ in 0..e_p {
                        denom = denom.checked_mul(p).ok_or(EnumError::DenominatorOverflow)?;
                    }
                    places.push(FinitePlaceGeom { p, threshold: e_p - total, zero_radius: false });
                }
                Some(FiniteRadius::Zero) => {
                    places.push(FinitePlaceGeom { p, threshold: 0, zero_radius: true });
                }
                None => unreachable!("Radii validated against the S-set"),
            }
        }
        Ok(BodyGeometry {
            n: omega.n,
            denom,
            t_inf: t.t_inf,
            real: omega.real.clone(),
            places,
        })
    }

    pub fn denom(&self) -> u64 {
        self.denom
    }

    /// Half-open box bound: every member has |w_i| ≤ bound.
    pub fn box_bound(&self) -> i64 {
        let rho_max = match &self.real {
            RealRadius::ConstantRadius(c) => *c,
            RealRadius::Table(t) => t.max_value(),
        };
        (self.denom as f64 * self.t_inf * rho_max).floor() as i64
    }

    /// Membership of w/denom in the dilated body (integer fast path).
    pub fn contains_w(&self, w: &[i64], region: Region) -> bool {
        debug_assert_eq!(w.len(), self.n);
        let zero = w.iter().all(|&x| x == 0);
        // finite places first: pure integer arithmetic
        for pg in &self.places {
            if pg.zero_radius {
                if !zero || region == Region::Shell {
                    return false;
                }
                continue;
            }
            match region {
                Region::Body => {
                    if pg.threshold > 0 && !zero && min_val(w, pg.p) < pg.threshold {
                        return false;
                    }
                    // zero vector has norm 0 ≤ anything
                }
                Region::Shell => {
                    if zero {
                        return false;
                    }
                    if pg.threshold < 0 {
                        return false; // integer w has valuation ≥ 0 > threshold
                    }
                    if min_val(w, pg.p) != pg.threshold {
                        return false;
                    }
                }
            }
        }
        // real place
        let ssum: f64 = w.iter().map(|&x| (x as f64) * (x as f64)).sum();
        let norm = ssum.sqrt() / self.denom as f64;
        let rho = match &self.real {
            RealRadius::ConstantRadius(c) => *c,
            RealRadius::Table(t) => {
                if zero {
                    // direction undefined; 0 belongs to Body, never to Shell
                    return region == Region::Body;
                }
                let dir: Vec<f64> = w.iter().map(|&x| x as f64).collect();
                t.lookup(&dir)
            }
        };
        let bound = self.t_inf * rho;
        match region {
            Region::Body => norm <= bound,
            Region::Shell => bound / 2.0 < norm && norm <= bound,
        }
    }
}

fn val_u64(mut x: u64, p: u64) -> u32 {
    let mut v = 0;
    while x.is_multiple_of(p) {
        x /= p;
        v += 1;
    }
    v
}

/// Minimal p-adic valuation over the nonzero coordinates (caller ensures the
/// vector is nonzero). Cheap early exit: valuation 0 the moment a coordinate
/// is coprime to p.
fn min_val(w: &[i64], p: u64) -> i64 {
    let p = p as i64;
    let mut min = i64::MAX;
    for &x in w {
        if x == 0 {
            continue;
        }
        let mut x = x;
        let mut v = 0i64;
        while x % p == 0 {
            x /= p;
            v += 1;
            if v >= min {
                break;
            }
        }
        if v < min {
            min = v;
            if min == 0 {
                return 0;
            }
        }
    }
    min
}

/// Membership of an S-vector in the dilated body or its outer shell.
pub fn omega_membership(
    s: &SSet,
    v: &SVector,
    omega: &StarBody,
    t: &Radii,
    region: Region,
) -> Result<bool, EnumError> {
    let geom = BodyGeometry::new(s, omega, t)?;
    // Re-express v over the body's natural denominator if possible; if the
    // vector's denominator has extra factors the norms rule it out anyway,
    // so fall back to the exact rational check in that case.
    if geom.denom % v.denom() == 0 {
        let scale = (geom.denom / v.denom()) as i64;
        let w: Vec<i64> = v.coords().iter().map(|&x| x * scale).collect();
        return Ok(geom.contains_w(&w, region));
    }
    // v has a finite-place norm strictly larger than the body can hold at
    // some p (its denominator exponent exceeds t_p + k_p ≥ t_p ≥ e_p): for
    // Body this still needs the exact comparison, done here with rationals.
    let vr = v.to_rationals();
    use crate::arith::{sup_norm, FiniteRadius, PlaceScalar};
    for p in s.finite_primes() {
        let k_p = *omega.finite.get(&p).ok_or_else(|| {
            EnumError::Dimension(format!("missing finite radius at p = {p}"))
        })?;
        let bound = match t.finite.get(&p) {
            Some(FiniteRadius::Exp(e)) => crate::arith::p_pow(p, *e as i64 + k_p),
            Some(FiniteRadius::Zero) => Rational::zero(),
            None => unreachable!(),
        };
        let norm = match sup_norm(&vr, &Place::Finite(p)) {
            PlaceScalar::Exact(r) => r,
            PlaceScalar::Real(_) => unreachable!(),
        };
        let ok = match region {
            Region::Body => norm <= bound,
            Region::Shell => !norm.is_zero() && norm == bound,
        };
        if !ok {
            return Ok(false);
        }
    }
    let vf: Vec<f64> = vr
        .iter()
        .map(|x| x.to_f64().expect("coordinate fits in f64 range"))
        .collect();
    let nrm: f64 = vf.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm == 0.0 {
        return Ok(region == Region::Body);
    }
    let bound = t.t_inf * omega.rho_inf(&vf);
    Ok(match region {
        Region::Body => nrm <= bound,
        Region::Shell => bound / 2.0 < nrm && nrm <= bound,
    })
}

/// Options for enumeration and counting.
#[derive(Clone, Debug)]
pub struct EnumOptions {
    pub region: Region,
    pub include_origin: bool,
    /// refuse to scan boxes with more lattice points than this
    pub box_cap: u64,
}

impl Default for EnumOptions {
    fn default() -> Self {
        EnumOptions { region: Region::Body, include_origin: true, box_cap: 2_000_000_000 }
    }
}

/// Lazy lexicographic enumeration of the S-vectors in the dilated body (or
/// shell). The stream yields canonicalized vectors in increasing
/// lexicographic order of the integer coordinate vector w.
pub struct EnumStream<'a> {
    s: &'a SSet,
    geom: BodyGeometry,
    region: Region,
    include_origin: bool,
    cursor: Vec<i64>,
    bound: i64,
    done: bool,
}

impl<'a> EnumStream<'a> {
    pub fn geom(&self) -> &BodyGeometry {
        &self.geom
    }
}

/// Start a streaming enumeration. Refuses with a cost estimate when the box
/// exceeds `opts.box_cap`.
pub fn enumerate_zs<'a>(
    s: &'a SSet,
    omega: &StarBody,
    t: &Radii,
    opts: &EnumOptions,
) -> Result<EnumStream<'a>, EnumError> {
    let geom = BodyGeometry::new(s, omega, t)?;
    let bound = geom.box_bound();
    let side = 2 * bound as u128 + 1;
    let points = side.pow(geom.n as u32);
    if points > opts.box_cap as u128 {
        return Err(EnumError::BoxCapExceeded { points, cap: opts.box_cap });
    }
    Ok(EnumStream {
        s,
        region: opts.region,
        include_origin: opts.include_origin,
        cursor: vec![-bound; geom.n],
        bound,
        done: bound < 0,
        geom,
    })
}

impl<'a> Iterator for EnumStream<'a> {
    type Item = SVector;

    fn next(&mut self) -> Option<SVector> {
        while !self.done {
            let w = self.cursor.clone();
            // advance odometer (last coordinate fastest = lexicographic)
            let mut i = self.geom.n;
            loop {
                if i == 0 {
                    self.done = true;
                    break;
                }
                i -= 1;
                if self.cursor[i] < self.bound {
                    self.cursor[i] += 1;
                    break;
                }
                self.cursor[i] = -self.bound;
            }
            let zero = w.iter().all(|&x| x == 0);
            if zero && !self.include_origin {
                continue;
            }
            if self.geom.contains_w(&w, self.region) {
                return Some(SVector::canonical(w, self.geom.denom, self.s));
            }
        }
        None
    }
}

/// Congruence sieve for one finite place: membership of q_p(w/D) in the
/// p-adic interval depends only on w mod p^m; `admissible` records which
/// residue vectors survive. Exact at the stabilization modulus: filtering
/// with it loses nothing and admits nothing spurious.
#[derive(Clone, Debug)]
pub struct PlaceSieve {
    pub p: u64,
    /// modulus exponent: the condition is determined by w mod p^m
    pub m: u32,
    /// p^m
    pub modulus: u64,
    /// flat table over residue vectors (mixed-radix index, last coordinate
    /// fastest), length modulus^n
    pub admissible: Vec<bool>,
    /// number of `true` entries
    pub admitted: u64,
    /// stabilization certificate: admissible set recomputed at modulus
    /// p^{m+1} equals the cylinder lift (None when the certificate table
    /// would exceed the cap; the m-minimality scan still ran)
    pub certified: Option<bool>,
}

impl PlaceSieve {
    /// Sieve lookup for an integer vector (reduces each coordinate mod p^m).
    pub fn admits(&self, w: &[i64]) -> bool {
        if self.modulus == 1 {
            return true;
        }
        let m = self.modulus as i64;
        let mut idx = 0usize;
        for &x in w {
            let r = x.rem_euclid(m) as usize;
            idx = idx * self.modulus as usize + r;
        }
        self.admissible[idx]
    }
}

/// Sieve plan across all finite places of the form's S-set.
#[derive(Clone, Debug)]
pub struct SievePlan {
    pub n: usize,
    pub places: Vec<PlaceSieve>,
}

impl SievePlan {
    pub fn admits(&self, w: &[i64]) -> bool {
        self.places.iter().all(|ps| ps.admits(w))
    }

    /// Product of admitted-fraction over places: the expected fraction of
    /// box points that reach the exact check.
    pub fn admitted_fraction(&self) -> f64 {
        self.places
            .iter()
            .map(|ps| ps.admitted as f64 / (ps.modulus as f64).powi(self.n as i32))
            .product()
    }
}

/// Upper bound for sieve table sizes (residue vectors per place).
pub const SIEVE_TABLE_CAP: u64 = 20_000_000;

/// Build the congruence sieve for "q_p(w/D) ∈ I_p at every finite place",
/// where D is the natural denominator of the radii. The modulus starts at
/// the provable determination exponent b + 2e_p + c_p, is shrunk to the
/// minimal determined exponent, and (size permitting) is certified by
/// recomputation one level up.
pub fn sieve_plan(
    q: &SQuadraticForm,
    interval: &SInterval,
    t: &Radii,
) -> Result<SievePlan, EnumError> {
    let denom = denominator_of(q.s(), t)?;
    sieve_plan_for_denom(q, interval, denom)
}

/// Variant keyed directly by the clearing denominator in use. Counting uses
/// this with the body geometry's denominator (which can exceed ∏ p^{t_p}
/// when the star body itself carries positive radius exponents).
pub fn sieve_plan_for_denom(
    q: &SQuadraticForm,
    interval: &SInterval,
    denom: u64,
) -> Result<SievePlan, EnumError> {
    let s = q.s();
    let n = q.rank();
    let mut places = Vec::new();
    for p in s.finite_primes() {
        let gram = q
            .place_form(&Place::Finite(p))
            .expect("aligned form")
            .gram_exact()
            .expect("finite place is exact");
        let ival = interval
            .finite
            .get(&p)
            .ok_or_else(|| EnumError::Dimension(format!("interval missing place {p}")))?;
        places.push(build_place_sieve(p, n, gram, &ival.center, ival.exponent, denom)?);
    }
    Ok(SievePlan { n, places })
}

/// Reduce a rational with p-free denominator mod p^k via a modular inverse.
fn reduce_mod(x: &Rational, modulus: u64) -> u64 {
    let m = BigInt::from(modulus);
    let num = x.numer().mod_floor(&m);
    let den = x.denom().mod_floor(&m);
    let num = num.to_u64().expect("reduced below modulus");
    let den = den.to_u64().expect("reduced below modulus");
    debug_assert!(den != 0, "denominator must be coprime to the modulus");
    mul_mod(num, inv_mod(den, modulus), modulus)
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// Modular inverse for units (extended Euclid).
fn inv_mod(a: u64, m: u64) -> u64 {
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        let tr = old_r - q * r;
        old_r = r;
        r = tr;
        let ts = old_s - q * s;
        old_s = s;
        s = ts;
    }
    debug_assert_eq!(old_r, 1, "input must be a unit");
    old_s.rem_euclid(m as i128) as u64
}

pub(crate) fn build_place_sieve(
    p: u64,
    n: usize,
    gram: &[Rational],
    center: &Rational,
    b: i64,
    denom: u64,
) -> Result<PlaceSieve, EnumError> {
    use crate::arith::valuation;
    let e_p = val_u64(denom, p) as i64;
    // c_p: clear negative valuations of the gram entries and the shifted
    // center so everything reduces mod p^k with p-free denominators.
    let mut min_entry_val: i64 = 0;
    for g in gram {
        if let Some(v) = valuation(g, p) {
            min_entry_val = min_entry_val.min(v);
        }
    }
    let d2 = Rational::from_integer(BigInt::from(denom) * BigInt::from(denom));
    let a_d2 = center * d2;
    if let Some(v) = valuation(&a_d2, p) {
        min_entry_val = min_entry_val.min(v);
    }
    let c = (-min_entry_val).max(0);
    let beta = (b + 2 * e_p + c).max(0);
    // determination exponent: w mod p^beta fixes the condition
    let (table, modulus) = admissible_table(p, n, gram, &a_d2, b + 2 * e_p, c, beta as u32)?;
    let admitted = table.iter().filter(|&&x| x).count() as u64;
    // shrink to the minimal determined exponent
    let mut m = beta as u32;
    let mut final_table = table;
    let mut final_modulus = modulus;
    let mut final_admitted = admitted;
    while m > 0 {
        let smaller = p.pow(m - 1);
        match project_table(&final_table, final_modulus, smaller, n) {
            Some(proj) => {
                final_admitted = proj.iter().filter(|&&x| x).count() as u64;
                final_table = proj;
                final_modulus = smaller;
                m -= 1;
            }
            None => break,
        }
    }
    // stabilization certificate at m + 1 (skip if the table would be huge)
    let next = (final_modulus as u128).saturating_mul(p as u128);
    let cert_entries = next.pow(n as u32);
    let certified = if cert_entries <= SIEVE_TABLE_CAP as u128 {
        let (up_table, up_modulus) =
            admissible_table(p, n, gram, &a_d2, b + 2 * e_p, c, m + 1)?;
        let lifted_ok = check_cylinder_lift(&final_table, final_modulus, &up_table, up_modulus, n);
        Some(lifted_ok)
    } else {
        None
    };
    Ok(PlaceSieve {
        p,
        m,
        modulus: final_modulus,
        admissible: final_table,
        admitted: final_admitted,
        certified,
    })
}

/// Compute the admissible residue table indexed by w mod p^k. Each entry is
/// the exact value of the congruence predicate on the class representative
/// in [0, p^k)^n, evaluated at working modulus p^max(k, θ+c) so nothing is
/// truncated. When the predicate is determined at level k (which the caller
/// establishes separately) representative values equal class values.
fn admissible_table(
    p: u64,
    n: usize,
    gram: &[Rational],
    a_d2: &Rational,
    theta: i64,
    c: i64,
    k: u32,
) -> Result<(Vec<bool>, u64), EnumError> {
    let modulus = p
        .checked_pow(k)
        .ok_or(EnumError::SieveCapExceeded { p, entries: u128::MAX, cap: SIEVE_TABLE_CAP })?;
    let entries = (modulus as u128)
        .checked_pow(n as u32)
        .ok_or(EnumError::SieveCapExceeded { p, entries: u128::MAX, cap: SIEVE_TABLE_CAP })?;
    if entries > SIEVE_TABLE_CAP as u128 {
        return Err(EnumError::SieveCapExceeded { p, entries, cap: SIEVE_TABLE_CAP });
    }
    if theta + c <= 0 {
        // condition holds for every integer vector
        return Ok((vec![true; entries as usize], modulus));
    }
    // scaled integer congruence: p^c·(q(w) − a·D²) ≡ 0 mod p^{θ+c}
    let need = (theta + c) as u32;
    let work = p
        .checked_pow(k.max(need))
        .ok_or(EnumError::SieveCapExceeded { p, entries: u128::MAX, cap: SIEVE_TABLE_CAP })?;
    let test_mod = p.pow(need);
    let scale = crate::arith::p_pow(p, c);
    let gm: Vec<u64> = gram.iter().map(|g| reduce_mod(&(g * &scale), work)).collect();
    let am = reduce_mod(&(a_d2 * &scale), work);
    let mut table = vec![false; entries as usize];
    let mut u = vec![0u64; n];
    let total = entries as usize;
    for (idx, slot) in table.iter_mut().enumerate().take(total) {
        // decode mixed-radix index (last coordinate fastest)
        let mut rem = idx as u64;
        for i in (0..n).rev() {
            u[i] = rem % modulus;
            rem /= modulus;
        }
        let mut val: u64 = 0;
        for i in 0..n {
            for j in 0..n {
                let g = gm[i * n + j];
                if g == 0 {
                    continue;
                }
                val = (val + mul_mod(mul_mod(g, u[i], work), u[j], work)) % work;
            }
        }
        let diff = (val + work - am) % work;
        *slot = diff.is_multiple_of(test_mod);
    }
    Ok((table, modulus))
}

/// Project a table to a smaller modulus if the set is a union of cylinders
/// over it; `None` when the condition is not determined at the smaller
/// modulus.
fn project_table(table: &[bool], modulus: u64, smaller: u64, n: usize) -> Option<Vec<bool>> {
    let small_entries = (smaller as u128).pow(n as u32) as usize;
    let mut proj: Vec<Option<bool>> = vec![None; small_entries];
    let total = table.len();
    let mut u = vec![0u64; n];
    for (idx, &adm) in table.iter().enumerate().take(total) {
        let mut rem = idx as u64;
        for i in (0..n).rev() {
            u[i] = rem % modulus;
            rem /= modulus;
        }
        let mut sidx = 0usize;
        for &ui in &u {
            sidx = sidx * smaller as usize + (ui % smaller) as usize;
        }
        match proj[sidx] {
            None => proj[sidx] = Some(adm),
            Some(prev) => {
                if prev != adm {
                    return None;
                }
            }
        }
    }
    Some(proj.into_iter().map(|x| x.expect("all classes hit")).collect())
}

/// Check that the bigger table is exactly the cylinder lift of the smaller.
fn check_cylinder_lift(
    small: &[bool],
    small_mod: u64,
    big: &[bool],
    big_mod: u64,
    n: usize,
) -> bool {
    let mut u = vec![0u64; n];
    for (idx, &adm) in big.iter().enumerate() {
        let mut rem = idx as u64;
        for i in (0..n).rev() {
            u[i] = rem % big_mod;
            rem /= big_mod;
        }
        let mut sidx = 0usize;
        for &ui in &u {
            sidx = sidx * small_mod as usize + (ui % small_mod) as usize;
        }
        if small[sidx] != adm {
            return false;
        }
    }
    true
}
