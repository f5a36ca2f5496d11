//! Quadratic forms over an S-set: one symmetric gram matrix per place (exact
//! rationals at finite places, f64 at the real place), the isotropic standard
//! shapes of rank 3 and 4, unit-determinant coordinate changes, seeded
//! generic deformations, and a rationality witness.
//!
//! A form value is v·G·v with G symmetric, so the rank-3 standard gram
//! `[[0,0,1],[0,a,0],[1,0,0]]` evaluates to 2·x1·x3 + a·x2².

use crate::arith::{p_pow, Place, PlaceScalar, Rational, SSet};
use crate::linalg;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Determinant tolerance for real-place unit-determinant checks.
pub const DET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormsError {
    #[error("gram matrix must be {expected} entries for rank {rank}, got {got}")]
    BadGramSize { rank: usize, expected: usize, got: usize },
    #[error("gram matrix is not symmetric at entry ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("form is degenerate (zero determinant) at place {0}")]
    Degenerate(String),
    #[error("real-place gram must use real entries and finite-place grams exact entries")]
    CarrierMismatch,
    #[error("standard forms exist for rank 3 and 4 only, got {0}")]
    BadRank(usize),
    #[error("coefficient {0:?} is not available at the real place (only 1 and -1 are)")]
    BadRealCoeff(CoeffChoice),
    #[error("unknown coefficient token {0:?}")]
    BadCoeffToken(String),
    #[error("expected {expected} standard-form coefficients, got {got}")]
    BadCoeffCount { expected: usize, got: usize },
    #[error("u0 = {u0} is invalid at p = {p}: must be a square-free quadratic nonresidue unit")]
    BadU0 { p: u64, u0: u64 },
    #[error("transform matrix at place {place} has determinant {det}, expected 1")]
    NotUnimodular { place: String, det: String },
    #[error("transform and form live over different S-sets or ranks")]
    ShapeMismatch,
    #[error("place {0} does not belong to the form's S-set")]
    NoSuchPlace(String),
    #[error("cannot parse form text: {0}")]
    Parse(String),
    #[error(transparent)]
    Arith(#[from] crate::arith::ArithError),
}

/// Gram matrix carrier: f64 at the real place, exact rationals elsewhere.
#[derive(Clone, PartialEq, Debug)]
pub enum Gram {
    Real(Vec<f64>),
    Exact(Vec<Rational>),
}

/// A quadratic form at a single place: a symmetric nondegenerate n×n gram
/// matrix, evaluated as v·G·v.
#[derive(Clone, PartialEq, Debug)]
pub struct PlaceForm {
    place: Place,
    n: usize,
    gram: Gram,
}

impl PlaceForm {
    /// Validated constructor: square symmetric nondegenerate, and the carrier
    /// must match the place (real ↔ f64, finite ↔ exact).
    pub fn new(place: Place, n: usize, gram: Gram) -> Result<PlaceForm, FormsError> {
        let len = match &gram {
            Gram::Real(g) => g.len(),
            Gram::Exact(g) => g.len(),
        };
        if len != n * n {
            return Err(FormsError::BadGramSize { rank: n, expected: n * n, got: len });
        }
        match (&place, &gram) {
            (Place::Infinite, Gram::Real(g)) => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        if g[i * n + j] != g[j * n + i] {
                            return Err(FormsError::NotSymmetric(i, j));
                        }
                    }
                }
                if linalg::fdet(g, n) == 0.0 {
                    return Err(FormsError::Degenerate(place.to_string()));
                }
            }
            (Place::Finite(_), Gram::Exact(g)) => {
                for i in 0..n {
                    for j in (i + 1)..n {
                        if g[i * n + j] != g[j * n + i] {
                            return Err(FormsError::NotSymmetric(i, j));
                        }
                    }
                }
                if linalg::rdet(g, n).is_zero() {
                    return Err(FormsError::Degenerate(place.to_string()));
                }
            }
            _ => return Err(FormsError::CarrierMismatch),
        }
        Ok(PlaceForm { place, n, gram })
    }

    pub fn place(&self) -> &Place {
        &self.place
    }

    pub fn rank(&self) -> usize {
        self.n
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    /// The exact gram entries; `None` at the real place.
    pub fn gram_exact(&self) -> Option<&[Rational]> {
        match &self.gram {
            Gram::Exact(g) => Some(g),
            Gram::Real(_) => None,
        }
    }

    /// The f64 gram entries; `None` at finite places.
    pub fn gram_real(&self) -> Option<&[f64]> {
        match &self.gram {
            Gram::Real(g) => Some(g),
            Gram::Exact(_) => None,
        }
    }

    /// Evaluate v·G·v on a rational vector: exact at finite places, f64 at
    /// the real place (the vector is converted).
    pub fn evaluate(&self, v: &[Rational]) -> PlaceScalar {
        assert_eq!(v.len(), self.n, "vector dimension mismatch");
        match &self.gram {
            Gram::Exact(g) => {
                let mut acc = Rational::zero();
                for i in 0..self.n {
                    for j in 0..self.n {
                        if g[i * self.n + j].is_zero() {
                            continue;
                        }
                        acc += &g[i * self.n + j] * &v[i] * &v[j];
                    }
                }
                PlaceScalar::Exact(acc)
            }
            Gram::Real(_) => {
                let vf: Vec<f64> = v
                    .iter()
                    .map(|x| x.to_f64().expect("coordinate fits in f64 range"))
                    .collect();
                PlaceScalar::Real(self.evaluate_f64(&vf))
            }
        }
    }

    /// Fast-path evaluation on an f64 vector (real place only).
    pub fn evaluate_f64(&self, v: &[f64]) -> f64 {
        let Gram::Real(g) = &self.gram else {
            panic!("evaluate_f64 is only valid at the real place");
        };
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += g[i * n + j] * v[j];
            }
            acc += v[i] * row;
        }
        acc
    }
}

/// A quadratic form over an S-set: one [`PlaceForm`] per place, aligned with
/// the S-set's place order (real place first).
#[derive(Clone, PartialEq, Debug)]
pub struct SQuadraticForm {
    s: SSet,
    forms: Vec<PlaceForm>,
}

impl SQuadraticForm {
    pub fn new(s: SSet, forms: Vec<PlaceForm>) -> Result<SQuadraticForm, FormsError> {
        if forms.len() != s.places().len() {
            return Err(FormsError::ShapeMismatch);
        }
        let n = forms[0].rank();
        for (pl, f) in s.places().iter().zip(&forms) {
            if f.place() != pl || f.rank() != n {
                return Err(FormsError::ShapeMismatch);
            }
        }
        Ok(SQuadraticForm { s, forms })
    }

    pub fn s(&self) -> &SSet {
        &self.s
    }

    pub fn rank(&self) -> usize {
        self.forms[0].rank()
    }

    pub fn forms(&self) -> &[PlaceForm] {
        &self.forms
    }

    pub fn place_form(&self, place: &Place) -> Option<&PlaceForm> {
        self.forms.iter().find(|f| f.place() == place)
    }

    /// The real-place component (always present).
    pub fn infinite(&self) -> &PlaceForm {
        &self.forms[0]
    }

    /// One line per place: `place: upper-triangular gram entries`, exact
    /// rationals at finite places, round-trippable f64 at the real place.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.forms {
            let _ = write!(out, "{}:", f.place());
            let n = f.rank();
            for i in 0..n {
                for j in i..n {
                    match &f.gram {
                        Gram::Real(g) => {
                            let _ = write!(out, " {}", g[i * n + j]);
                        }
                        Gram::Exact(g) => {
                            let _ = write!(out, " {}", g[i * n + j]);
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parse the [`Self::to_text`] format back into a form.
    pub fn parse(text: &str) -> Result<SQuadraticForm, FormsError> {
        let mut primes = Vec::new();
        let mut entries: Vec<(Place, Vec<String>)> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, rest) = line
                .split_once(':')
                .ok_or_else(|| FormsError::Parse(format!("missing ':' in {line:?}")))?;
            let place = if head.trim() == "inf" {
                Place::Infinite
            } else {
                let p: u64 = head
                    .trim()
                    .parse()
                    .map_err(|_| FormsError::Parse(format!("bad place {head:?}")))?;
                primes.push(p);
                Place::finite(p)?
            };
            entries.push((place, rest.split_whitespace().map(String::from).collect()));
        }
        let s = SSet::new(&primes)?;
        if entries.is_empty() || entries[0].0 != Place::Infinite {
            return Err(FormsError::Parse("first line must be the inf place".into()));
        }
        // upper-triangle count k = n(n+1)/2 determines n
        let k = entries[0].1.len();
        let n = match k {
            6 => 3,
            10 => 4,
            _ => return Err(FormsError::Parse(format!("{k} entries is not an upper triangle of rank 3 or 4"))),
        };
        let mut forms = Vec::new();
        for (place, toks) in entries {
            if toks.len() != k {
                return Err(FormsError::Parse("inconsistent entry counts across places".into()));
            }
            let gram = match place {
                Place::Infinite => {
                    let mut g = vec![0.0f64; n * n];
                    let mut it = toks.iter();
                    for i in 0..n {
                        for j in i..n {
                            let x: f64 = it
                                .next()
                                .unwrap()
                                .parse()
                                .map_err(|_| FormsError::Parse("bad real entry".into()))?;
                            g[i * n + j] = x;
                            g[j * n + i] = x;
                        }
                    }
                    Gram::Real(g)
                }
                Place::Finite(_) => {
                    let mut g = vec![Rational::zero(); n * n];
                    let mut it = toks.iter();
                    for i in 0..n {
                        for j in i..n {
                            let x = crate::arith::parse_rational(it.next().unwrap())?;
                            g[i * n + j] = x.clone();
                            g[j * n + i] = x;
                        }
                    }
                    Gram::Exact(g)
                }
            };
            forms.push(PlaceForm::new(place, n, gram)?);
        }
        // Parsed lines may list finite places in any order; re-align with s.
        let mut aligned = Vec::with_capacity(forms.len());
        for pl in s.places() {
            let f = forms
                .iter()
                .find(|f| f.place() == pl)
                .ok_or_else(|| FormsError::Parse(format!("missing place {pl}")))?;
            aligned.push(f.clone());
        }
        SQuadraticForm::new(s, aligned)
    }
}

/// Evaluate the form's component at one place on a rational vector.
pub fn evaluate_place(
    q: &SQuadraticForm,
    place: &Place,
    v: &[Rational],
) -> Result<PlaceScalar, FormsError> {
    let f = q
        .place_form(place)
        .ok_or_else(|| FormsError::NoSuchPlace(place.to_string()))?;
    Ok(f.evaluate(v))
}

/// Evaluate at every place of S on the diagonally embedded rational vector.
pub fn evaluate_s(q: &SQuadraticForm, v: &[Rational]) -> Vec<(Place, PlaceScalar)> {
    q.forms()
        .iter()
        .map(|f| (*f.place(), f.evaluate(v)))
        .collect()
}

/// Coefficient menu for the standard forms. At the real place only `1` and
/// `-1` are available; at a finite place the unit u0 (a square-free quadratic
/// nonresidue) and the uniformizer p enlarge the menu to the eight square
/// classes ±1, ±u0, ±p, ±p·u0.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CoeffChoice {
    One,
    MinusOne,
    U0,
    MinusU0,
    P,
    MinusP,
    PU0,
    MinusPU0,
}

impl CoeffChoice {
    pub fn parse(tok: &str) -> Result<CoeffChoice, FormsError> {
        Ok(match tok.trim() {
            "1" => CoeffChoice::One,
            "-1" => CoeffChoice::MinusOne,
            "u0" => CoeffChoice::U0,
            "-u0" => CoeffChoice::MinusU0,
            "p" => CoeffChoice::P,
            "-p" => CoeffChoice::MinusP,
            "p*u0" => CoeffChoice::PU0,
            "-p*u0" => CoeffChoice::MinusPU0,
            other => return Err(FormsError::BadCoeffToken(other.to_string())),
        })
    }

    fn value_finite(&self, p: u64, u0: u64) -> Rational {
        let (sign, mag) = match self {
            CoeffChoice::One => (1i64, Rational::one()),
            CoeffChoice::MinusOne => (-1, Rational::one()),
            CoeffChoice::U0 => (1, Rational::from_integer(BigInt::from(u0))),
            CoeffChoice::MinusU0 => (-1, Rational::from_integer(BigInt::from(u0))),
            CoeffChoice::P => (1, p_pow(p, 1)),
            CoeffChoice::MinusP => (-1, p_pow(p, 1)),
            CoeffChoice::PU0 => (1, p_pow(p, 1) * Rational::from_integer(BigInt::from(u0))),
            CoeffChoice::MinusPU0 => (-1, p_pow(p, 1) * Rational::from_integer(BigInt::from(u0))),
        };
        if sign < 0 {
            -mag
        } else {
            mag
        }
    }

    fn value_real(&self) -> Result<f64, FormsError> {
        match self {
            CoeffChoice::One => Ok(1.0),
            CoeffChoice::MinusOne => Ok(-1.0),
            other => Err(FormsError::BadRealCoeff(*other)),
        }
    }
}

/// Recipe for a standard form: rank, a default coefficient tuple (length
/// rank − 2), optional per-prime coefficient overrides, and optional
/// per-prime u0 overrides (default: smallest quadratic nonresidue).
#[derive(Clone, PartialEq, Debug)]
pub struct StandardSpec {
    pub rank: usize,
    pub coeffs: Vec<CoeffChoice>,
    pub overrides: BTreeMap<u64, Vec<CoeffChoice>>,
    pub u0: BTreeMap<u64, u64>,
}

impl StandardSpec {
    /// Rank-3 form with a1 = 1 everywhere; rank-4 adds a2 = −1.
    pub fn default_for_rank(rank: usize) -> Result<StandardSpec, FormsError> {
        let coeffs = match rank {
            3 => vec![CoeffChoice::One],
            4 => vec![CoeffChoice::One, CoeffChoice::MinusOne],
            r => return Err(FormsError::BadRank(r)),
        };
        Ok(StandardSpec { rank, coeffs, overrides: BTreeMap::new(), u0: BTreeMap::new() })
    }

    /// The u0 unit actually used at p (override or the default nonresidue).
    pub fn u0_at(&self, p: u64) -> u64 {
        self.u0.get(&p).copied().unwrap_or_else(|| default_u0(p))
    }
}

/// Smallest quadratic nonresidue mod p (p an odd prime). Always square-free
/// (it is prime: the set of residues is multiplicatively closed, so the
/// smallest non-member of a proper subgroup is prime).
pub fn default_u0(p: u64) -> u64 {
    (2..p).find(|&n| !is_quadratic_residue(n, p)).expect("odd prime has a nonresidue")
}

fn mod_pow(base: u64, mut exp: u64, modulus: u64) -> u64 {
    let m = modulus as u128;
    let mut acc: u128 = 1;
    let mut b = (base % modulus) as u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

/// Euler criterion: n^((p−1)/2) ≡ 1 mod p for nonzero residues.
pub fn is_quadratic_residue(n: u64, p: u64) -> bool {
    let n = n % p;
    assert!(n != 0, "0 is neither residue n or nonresidue here");
    mod_pow(n, (p - 1) / 2, p) == 1
}

fn is_square_free(mut n: u64) -> bool {
    let mut d = 2u64;
    while d.saturating_mul(d) <= n {
        if n.is_multiple_of(d) {
            n /= d;
            if n.is_multiple_of(d) {
                return false;
            }
        }
        d += 1;
    }
    true
}

fn standard_gram_pattern(rank: usize) -> Vec<(usize, usize)> {
    // positions of the hyperbolic pair (1, n) and the diagonal block
    match rank {
        3 => vec![(1, 1)],
        4 => vec![(1, 1), (2, 2)],
        _ => unreachable!("rank validated earlier"),
    }
}

/// Build the standard isotropic form of the given rank over S:
/// 2·x1·xn + Σ a_i·x_{i+1}² with per-place coefficients from the menu.
pub fn standard_form(s: &SSet, spec: &StandardSpec) -> Result<SQuadraticForm, FormsError> {
    if spec.rank != 3 && spec.rank != 4 {
        return Err(FormsError::BadRank(spec.rank));
    }
    let n = spec.rank;
    let want = n - 2;
    if spec.coeffs.len() != want {
        return Err(FormsError::BadCoeffCount { expected: want, got: spec.coeffs.len() });
    }
    for ov in spec.overrides.values() {
        if ov.len() != want {
            return Err(FormsError::BadCoeffCount { expected: want, got: ov.len() });
        }
    }
    let diag = standard_gram_pattern(n);
    let mut forms = Vec::new();
    for pl in s.places() {
        match pl {
            Place::Infinite => {
                let mut g = vec![0.0f64; n * n];
                g[n - 1] = 1.0; // entry (1, n)
                g[(n - 1) * n] = 1.0;
                for (k, &(i, j)) in diag.iter().enumerate() {
                    g[i * n + j] = spec.coeffs[k].value_real()?;
                }
                forms.push(PlaceForm::new(Place::Infinite, n, Gram::Real(g))?);
            }
            Place::Finite(p) => {
                let u0 = spec.u0_at(*p);
                if u0.is_multiple_of(*p) || !is_square_free(u0) || is_quadratic_residue(u0, *p) {
                    return Err(FormsError::BadU0 { p: *p, u0 });
                }
                let coeffs = spec.overrides.get(p).unwrap_or(&spec.coeffs);
                let mut g = vec![Rational::zero(); n * n];
                g[n - 1] = Rational::one();
                g[(n - 1) * n] = Rational::one();
                for (k, &(i, j)) in diag.iter().enumerate() {
                    g[i * n + j] = coeffs[k].value_finite(*p, u0);
                }
                forms.push(PlaceForm::new(*pl, n, Gram::Exact(g))?);
            }
        }
    }
    SQuadraticForm::new(s.clone(), forms)
}

/// A per-place matrix: f64 at the real place, exact rationals elsewhere.
#[derive(Clone, PartialEq, Debug)]
pub enum PlaceMatrix {
    Real(Vec<f64>),
    Exact(Vec<Rational>),
}

/// Unit-determinant coordinate change, one matrix per place (aligned with
/// the S-set's place order).
#[derive(Clone, PartialEq, Debug)]
pub struct STransform {
    s: SSet,
    n: usize,
    mats: Vec<PlaceMatrix>,
}

impl STransform {
    /// Validated constructor: determinant exactly 1 at finite places, within
    /// [`DET_TOL`] of 1 at the real place.
    pub fn new(s: SSet, n: usize, mats: Vec<PlaceMatrix>) -> Result<STransform, FormsError> {
        if mats.len() != s.places().len() {
            return Err(FormsError::ShapeMismatch);
        }
        for (pl, m) in s.places().iter().zip(&mats) {
            match (pl, m) {
                (Place::Infinite, PlaceMatrix::Real(g)) => {
                    if g.len() != n * n {
                        return Err(FormsError::ShapeMismatch);
                    }
                    let det = linalg::fdet(g, n);
                    if (det - 1.0).abs() > DET_TOL {
                        return Err(FormsError::NotUnimodular {
                            place: pl.to_string(),
                            det: det.to_string(),
                        });
                    }
                }
                (Place::Finite(_), PlaceMatrix::Exact(g)) => {
                    if g.len() != n * n {
                        return Err(FormsError::ShapeMismatch);
                    }
                    let det = linalg::rdet(g, n);
                    if !det.is_one() {
                        return Err(FormsError::NotUnimodular {
                            place: pl.to_string(),
                            det: det.to_string(),
                        });
                    }
                }
                _ => return Err(FormsError::CarrierMismatch),
            }
        }
        Ok(STransform { s, n, mats })
    }

    /// The identity transform over S in dimension n.
    pub fn identity(s: &SSet, n: usize) -> STransform {
        let mats = s
            .places()
            .iter()
            .map(|pl| match pl {
                Place::Infinite => {
                    let mut g = vec![0.0; n * n];
                    for i in 0..n {
                        g[i * n + i] = 1.0;
                    }
                    PlaceMatrix::Real(g)
                }
                Place::Finite(_) => {
                    let mut g = vec![Rational::zero(); n * n];
                    for i in 0..n {
                        g[i * n + i] = Rational::one();
                    }
                    PlaceMatrix::Exact(g)
                }
            })
            .collect();
        STransform { s: s.clone(), n, mats }
    }

    pub fn s(&self) -> &SSet {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mats(&self) -> &[PlaceMatrix] {
        &self.mats
    }

    /// Place-wise product self·other (matrix product at every place).
    pub fn compose(&self, other: &STransform) -> Result<STransform, FormsError> {
        if self.s != other.s || self.n != other.n {
            return Err(FormsError::ShapeMismatch);
        }
        let mats = self
            .mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| match (a, b) {
                (PlaceMatrix::Real(x), PlaceMatrix::Real(y)) => {
                    PlaceMatrix::Real(linalg::fmul(x, y, self.n))
                }
                (PlaceMatrix::Exact(x), PlaceMatrix::Exact(y)) => {
                    PlaceMatrix::Exact(linalg::rmul(x, y, self.n))
                }
                _ => unreachable!("carriers validated at construction"),
            })
            .collect();
        // Skip re-validation: products of unit-determinant matrices stay unit
        // up to float rounding, which the DET_TOL check at use sites absorbs.
        Ok(STransform { s: self.s.clone(), n: self.n, mats })
    }
}

/// Pull back the form along g: gram ← gᵀ·gram·g at every place (the right
/// action, so (q∘g)∘h = q∘(g·h)).
pub fn apply_transform(q: &SQuadraticForm, g: &STransform) -> Result<SQuadraticForm, FormsError> {
    if q.s() != g.s() || q.rank() != g.dim() {
        return Err(FormsError::ShapeMismatch);
    }
    let n = q.rank();
    let forms = q
        .forms()
        .iter()
        .zip(g.mats())
        .map(|(f, m)| match (f.gram(), m) {
            (Gram::Real(gr), PlaceMatrix::Real(mat)) => {
                let gt = linalg::ftranspose(mat, n);
                let mut new = linalg::fmul(&gt, &linalg::fmul(gr, mat, n), n);
                // AᵀGA is symmetric exactly; the two triangles can still
                // disagree by an ulp because their sums accumulate in
                // different orders, so mirror the upper triangle.
                for i in 0..n {
                    for j in (i + 1)..n {
                        new[j * n + i] = new[i * n + j];
                    }
                }
                PlaceForm::new(*f.place(), n, Gram::Real(new))
            }
            (Gram::Exact(gr), PlaceMatrix::Exact(mat)) => {
                let gt = linalg::rtranspose(mat, n);
                let new = linalg::rmul(&gt, &linalg::rmul(gr, mat, n), n);
                PlaceForm::new(*f.place(), n, Gram::Exact(new))
            }
            _ => unreachable!("carriers validated at construction"),
        })
        .collect::<Result<Vec<_>, _>>()?;
    SQuadraticForm::new(q.s().clone(), forms)
}

/// Deterministic generic deformation: build g as a product of `steps` random
/// elementary shears per place (amounts uniform in [−1, 1] at the real place;
/// numerator in [−p², p²] over a denominator coprime to p at finite p), then
/// return (q∘g, g). Seeded: the same seed always produces the same pair, and
/// each place draws from its own ChaCha8 stream.
pub fn random_generic_form(
    seed: u64,
    base: &SQuadraticForm,
    steps: usize,
) -> Result<(SQuadraticForm, STransform), FormsError> {
    let n = base.rank();
    let s = base.s().clone();
    let mut mats = Vec::new();
    for (idx, pl) in s.places().iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        match pl {
            Place::Infinite => {
                let mut g = vec![0.0f64; n * n];
                for i in 0..n {
                    g[i * n + i] = 1.0;
                }
                for _ in 0..steps {
                    let (i, j) = distinct_pair(&mut rng, n);
                    let amount: f64 = rng.random_range(-1.0..1.0);
                    // right-multiply by the shear I + amount·E_{ij}
                    for r in 0..n {
                        let add = g[r * n + i] * amount;
                        g[r * n + j] += add;
                    }
                }
                mats.push(PlaceMatrix::Real(g));
            }
            Place::Finite(p) => {
                let p2 = (p * p) as i64;
                let mut g = vec![Rational::zero(); n * n];
                for i in 0..n {
                    g[i * n + i] = Rational::one();
                }
                for _ in 0..steps {
                    let (i, j) = distinct_pair(&mut rng, n);
                    let num: i64 = rng.random_range(-p2..=p2);
                    let den: i64 = loop {
                        let d = rng.random_range(1..=p2);
                        if d % (*p as i64) != 0 {
                            break d;
                        }
                    };
                    let amount = Rational::new(BigInt::from(num), BigInt::from(den));
                    for r in 0..n {
                        let add = &g[r * n + i] * &amount;
                        g[r * n + j] += add;
                    }
                }
                mats.push(PlaceMatrix::Exact(g));
            }
        }
    }
    let g = STransform::new(s, n, mats)?;
    let q = apply_transform(base, &g)?;
    Ok((q, g))
}

fn distinct_pair(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let i = rng.random_range(0..n);
    loop {
        let j = rng.random_range(0..n);
        if j != i {
            return (i, j);
        }
    }
}

/// Outcome of the rationality check: either a common rational gram (up to
/// per-place scaling) or the place and entry where proportionality fails.
#[derive(Clone, PartialEq, Debug)]
pub enum RationalityVerdict {
    /// The form is a scalar multiple of this primitive integer gram at every
    /// place (within tol at the real place).
    Rational { gram: Vec<Rational> },
    /// Proportionality fails at this place; `detail` names the witnessing
    /// entry and the two incompatible values.
    Irrational { place: Place, detail: String },
}

impl RationalityVerdict {
    pub fn is_rational(&self) -> bool {
        matches!(self, RationalityVerdict::Rational { .. })
    }
}

/// Decide whether all place components are scalar multiples of one rational
/// gram. Finite places are compared exactly; the real place within `tol` on
/// scale-free entries. With no finite place the real gram is reconstructed
/// entry-wise as bounded-denominator rationals (denominator ≤ 10⁶) within
/// `tol` — the operational meaning of "rational" without an exact anchor.
pub fn rationality_witness(q: &SQuadraticForm, tol: f64) -> RationalityVerdict {
    let n = q.rank();
    let finite: Vec<&PlaceForm> = q.forms().iter().filter(|f| f.place().is_finite()).collect();

    if let Some(first) = finite.first() {
        let anchor = scale_free_exact(first.gram_exact().unwrap());
        for f in finite.iter().skip(1) {
            let other = scale_free_exact(f.gram_exact().unwrap());
            for k in 0..n * n {
                if anchor[k] != other[k] {
                    return RationalityVerdict::Irrational {
                        place: *f.place(),
                        detail: format!(
                            "scale-free entry ({}, {}) is {} here but {} at the anchor place",
                            k / n,
                            k % n,
                            other[k],
                            anchor[k]
                        ),
                    };
                }
            }
        }
        let gr = q.infinite().gram_real().unwrap();
        let grf = scale_free_real(gr);
        for k in 0..n * n {
            let want = anchor[k].to_f64().expect("gram entry fits in f64 range");
            if (grf[k] - want).abs() > tol {
                return RationalityVerdict::Irrational {
                    place: Place::Infinite,
                    detail: format!(
                        "scale-free entry ({}, {}) is {} at inf but {} at the finite places",
                        k / n,
                        k % n,
                        grf[k],
                        want
                    ),
                };
            }
        }
        RationalityVerdict::Rational { gram: primitive_integer(&anchor) }
    } else {
        // No finite anchor: reconstruct each scale-free real entry as a
        // bounded-denominator rational.
        let grf = scale_free_real(q.infinite().gram_real().unwrap());
        let mut gram = Vec::with_capacity(n * n);
        for (k, &x) in grf.iter().enumerate() {
            match approx_rational(x, 1_000_000, tol) {
                Some(r) => gram.push(r),
                None => {
                    return RationalityVerdict::Irrational {
                        place: Place::Infinite,
                        detail: format!(
                            "scale-free entry ({}, {}) = {} admits no rational of denominator ≤ 1e6 within {}",
                            k / n,
                            k % n,
                            x,
                            tol
                        ),
                    }
                }
            }
        }
        RationalityVerdict::Rational { gram: primitive_integer(&gram) }
    }
}

/// Divide by the first nonzero entry (nondegenerate forms have one).
fn scale_free_exact(g: &[Rational]) -> Vec<Rational> {
    let pivot = g.iter().find(|x| !x.is_zero()).expect("nondegenerate gram");
    g.iter().map(|x| x / pivot).collect()
}

fn scale_free_real(g: &[f64]) -> Vec<f64> {
    let pivot = *g.iter().find(|x| **x != 0.0).expect("nondegenerate gram");
    g.iter().map(|x| x / pivot).collect()
}

/// Scale a rational matrix to a primitive integer matrix (clear denominators,
/// divide by the gcd, make the first nonzero entry positive).
fn primitive_integer(g: &[Rational]) -> Vec<Rational> {
    let mut lcm = BigInt::one();
    for x in g {
        lcm = lcm.lcm(x.denom());
    }
    let ints: Vec<BigInt> = g.iter().map(|x| (x * Rational::from_integer(lcm.clone())).to_integer()).collect();
    let mut gcd = BigInt::zero();
    for x in &ints {
        gcd = gcd.gcd(x);
    }
    if gcd.is_zero() {
        gcd = BigInt::one();
    }
    let mut out: Vec<BigInt> = ints.into_iter().map(|x| x / &gcd).collect();
    if let Some(first) = out.iter().find(|x| !x.is_zero()) {
        if first.is_negative() {
            out = out.into_iter().map(|x| -x).collect();
        }
    }
    out.into_iter().map(Rational::from_integer).collect()
}

/// Best continued-fraction approximation of x with denominator ≤ max_den;
/// `None` if no convergent lands within tol.
pub fn approx_rational(x: f64, max_den: u64, tol: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let neg = x < 0.0;
    let mut y = x.abs();
    let max_den = BigInt::from(max_den);
    // convergent recurrence p_n = a_n·p_{n−1} + p_{n−2}
    let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
    let (mut p_cur, mut q_cur) = (BigInt::from(y.floor() as u64), BigInt::one());
    let mut frac = y - y.floor();
    for _ in 0..64 {
        if frac < 1e-15 {
            break;
        }
        y = 1.0 / frac;
        let a = y.floor();
        if a >= 9.0e18 {
            break;
        }
        let ab = BigInt::from(a as u64);
        let p_next = &ab * &p_cur + &p_prev;
        let q_next = &ab * &q_cur + &q_prev;
        if q_next > max_den {
            break;
        }
        p_prev = std::mem::replace(&mut p_cur, p_next);
        q_prev = std::mem::replace(&mut q_cur, q_next);
        frac = y - a;
    }
    let mut cand = Rational::new(p_cur, q_cur);
    if neg {
        cand = -cand;
    }
    if (cand.to_f64()? - x).abs() <= tol {
        Some(cand)
    } else {
        None
    }
}
