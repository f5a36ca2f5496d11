//! The two sides of the counting comparison: exact lattice counts N(T),
//! product-measure volumes V(T) (exact residue counting at finite places,
//! seeded Monte Carlo at the real place), the asymptotic constant estimate,
//! and the ratio experiment with CSV output.
//!
//! Everything here is deterministic: counts come from a fixed lexicographic
//! scan, and Monte Carlo reduces integer hit counts over a fixed set of
//! per-stream substreams, so results are byte-identical for a given seed
//! regardless of worker count.

use crate::arith::{
    s_interval_measure, FiniteRadius, PAdicInterval, Place, Radii, Rational, RealInterval,
    SInterval, SSet,
};
use crate::enumerate::{
    sieve_plan_for_denom, BodyGeometry, EnumError, RealRadius, Region, SVector, StarBody,
};
use crate::forms::{rationality_witness, FormsError, PlaceForm, RationalityVerdict, SQuadraticForm};
use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CountError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Monte Carlo needs at least 10000 samples, got {0}")]
    McTooFewSamples(u64),
    #[error("quadrature input: {0}")]
    BadQuadratureInput(String),
    #[error("the real-place gram is not in standard hyperbolic-pair shape: {0}")]
    NotStandardShape(String),
    #[error("schedule: {0}")]
    BadSchedule(String),
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error(transparent)]
    Forms(#[from] FormsError),
    #[error(transparent)]
    Arith(#[from] crate::arith::ArithError),
}

/// Monte Carlo budget and master seed.
#[derive(Clone, Copy, Debug)]
pub struct McOptions {
    pub samples: u64,
    pub seed: u64,
}

/// Fixed number of RNG substreams: the sample budget is split across this
/// many deterministic streams regardless of thread count, which is what
/// makes the reduction bit-identical under any parallelism.
pub const MC_STRATA: u64 = 256;

/// Options for [`count_n`] and the experiments built on it.
#[derive(Clone, Debug)]
pub struct CountOptions {
    pub region: Region,
    /// count the origin when it satisfies the conditions (it does exactly
    /// when 0 ∈ I at every place and the region is Body)
    pub include_origin: bool,
    /// filter residue classes through the congruence sieve before exact
    /// checks; with the sieve off, finite-place conditions are evaluated in
    /// exact rational arithmetic per point (slow; meant for cross-checks)
    pub use_sieve: bool,
    pub box_cap: u64,
    /// collect the counted vectors (lexicographic order) into the result
    pub collect_vectors: bool,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            region: Region::Body,
            include_origin: true,
            use_sieve: true,
            box_cap: 2_000_000_000,
            collect_vectors: false,
        }
    }
}

/// Outcome of one count: the count itself plus scan statistics.
#[derive(Clone, Debug)]
pub struct CountResult {
    pub count: u64,
    /// box points examined
    pub tried: u64,
    /// points that passed the congruence sieve (equals `tried` with the
    /// sieve off)
    pub sieve_admitted: u64,
    pub box_points: u128,
    pub wall: Duration,
    pub vectors: Option<Vec<SVector>>,
}

struct SlabOut {
    count: u64,
    tried: u64,
    admitted: u64,
    vecs: Vec<SVector>,
}

/// Count the S-vectors of the dilated body (or shell) on which the form's
/// value lands in the product interval. The congruence sieve (when enabled)
/// decides the finite-place interval conditions — it is exact at its
/// stabilization modulus — and the real-place interval and all norm
/// conditions are then checked directly.
pub fn count_n(
    q: &SQuadraticForm,
    omega: &StarBody,
    interval: &SInterval,
    t: &Radii,
    opts: &CountOptions,
) -> Result<CountResult, CountError> {
    let start = Instant::now();
    let s = q.s();
    let n = q.rank();
    if omega.n != n {
        return Err(CountError::Dimension(format!(
            "form has rank {n} but the star body is {}-dimensional",
            omega.n
        )));
    }
    for p in s.finite_primes() {
        if !interval.finite.contains_key(&p) {
            return Err(CountError::Dimension(format!("interval missing place {p}")));
        }
    }
    let geom = BodyGeometry::new(s, omega, t)?;

    // Degenerate radius: the body collapses to the origin.
    if t.has_zero_radius() {
        let origin_counts = opts.include_origin
            && opts.region == Region::Body
            && value_in_interval_exact(q, interval, &vec![Rational::zero(); n]);
        let count = u64::from(origin_counts);
        let vectors = opts.collect_vectors.then(|| {
            if origin_counts {
                vec![SVector::canonical(vec![0; n], 1, s)]
            } else {
                Vec::new()
            }
        });
        return Ok(CountResult {
            count,
            tried: 1,
            sieve_admitted: 1,
            box_points: 1,
            wall: start.elapsed(),
            vectors,
        });
    }

    let bound = geom.box_bound();
    let side = 2 * bound.max(0) as u128 + 1;
    let box_points = side.pow(n as u32);
    if box_points > opts.box_cap as u128 {
        return Err(CountError::Enum(EnumError::BoxCapExceeded {
            points: box_points,
            cap: opts.box_cap,
        }));
    }
    let plan = if opts.use_sieve {
        Some(sieve_plan_for_denom(q, interval, geom.denom())?)
    } else {
        None
    };
    // exact finite-place checks for the sieve-off path
    let finite_checks: Vec<(u64, &PlaceForm, &PAdicInterval)> = if opts.use_sieve {
        Vec::new()
    } else {
        s.finite_primes()
            .map(|p| {
                let pf = q.place_form(&Place::Finite(p)).expect("aligned form");
                (p, pf, &interval.finite[&p])
            })
            .collect()
    };
    let inf_form = q.infinite();
    let d_f = geom.denom() as f64;
    let real_i = interval.real;

    let slabs: Vec<SlabOut> = (-bound..bound + 1)
        .into_par_iter()
        .map(|w1| {
            let mut out = SlabOut { count: 0, tried: 0, admitted: 0, vecs: Vec::new() };
            let mut w = vec![-bound; n];
            w[0] = w1;
            let mut vf = vec![0.0f64; n];
            loop {
                out.tried += 1;
                let admitted = plan.as_ref().is_none_or(|pl| pl.admits(&w));
                if admitted {
                    out.admitted += 1;
                    let zero = w.iter().all(|&x| x == 0);
                    let skip_origin = zero && !opts.include_origin;
                    if !skip_origin && geom.contains_w(&w, opts.region) {
                        for (slot, &x) in vf.iter_mut().zip(&w) {
                            *slot = x as f64 / d_f;
                        }
                        let qv = inf_form.evaluate_f64(&vf);
                        if real_i.contains(qv) {
                            let finite_ok = finite_checks.is_empty() || {
                                let vr: Vec<Rational> = w
                                    .iter()
                                    .map(|&x| {
                                        Rational::new(BigInt::from(x), BigInt::from(geom.denom()))
                                    })
                                    .collect();
                                finite_checks.iter().all(|(_, pf, ival)| {
                                    ival.contains(pf.evaluate(&vr).expect_exact())
                                })
                            };
                            if finite_ok {
                                out.count += 1;
                                if opts.collect_vectors {
                                    out.vecs.push(SVector::canonical(
                                        w.clone(),
                                        geom.denom(),
                                        s,
                                    ));
                                }
                            }
                        }
                    }
                }
                // advance the inner odometer (coordinates 1..n)
                let mut i = n;
                let mut rolled_over = true;
                while i > 1 {
                    i -= 1;
                    if w[i] < bound {
                        w[i] += 1;
                        rolled_over = false;
                        break;
                    }
                    w[i] = -bound;
                }
                if rolled_over || n == 1 {
                    break;
                }
            }
            out
        })
        .collect();

    let mut count = 0u64;
    let mut tried = 0u64;
    let mut admitted = 0u64;
    let mut vectors = opts.collect_vectors.then(Vec::new);
    for slab in slabs {
        count += slab.count;
        tried += slab.tried;
        admitted += slab.admitted;
        if let Some(v) = vectors.as_mut() {
            v.extend(slab.vecs);
        }
    }
    Ok(CountResult {
        count,
        tried,
        sieve_admitted: admitted,
        box_points,
        wall: start.elapsed(),
        vectors,
    })
}

/// Exact membership of q(v) in the product interval (all places).
fn value_in_interval_exact(q: &SQuadraticForm, interval: &SInterval, v: &[Rational]) -> bool {
    for f in q.forms() {
        match f.place() {
            Place::Infinite => {
                let vf: Vec<f64> = v
                    .iter()
                    .map(|x| x.to_f64().expect("coordinate fits in f64 range"))
                    .collect();
                if !interval.real.contains(f.evaluate_f64(&vf)) {
                    return false;
                }
            }
            Place::Finite(p) => {
                if !interval.finite[p].contains(f.evaluate(v).expect_exact()) {
                    return false;
                }
            }
        }
    }
    true
}

/// Exact Haar measure of one finite-place condition set, with its
/// stabilization certificate.
#[derive(Clone, PartialEq, Debug)]
pub struct FiniteVolume {
    pub value: Rational,
    /// stabilization modulus exponent the residue count was taken at
    pub modulus_exp: u32,
    /// recomputation check one modulus level up (None = table too large to
    /// certify; the minimality scan against the provable level still ran)
    pub certified: Option<bool>,
    pub admitted: u64,
}

/// Exact Haar measure of {v : ‖v‖_p ≤ T_p·p^{rho_exp}, q_p(v) ∈ I} for one
/// finite place, by residue counting at the stabilization modulus. With
/// τ = t_p + rho_exp, substituting v = p^{−τ}·u maps the radius-p^τ ball
/// onto Z_p^n (Haar mass p^{nτ}) and moves the interval condition to
/// val(q(u) − a·p^{2τ}) ≥ b + 2τ over u ∈ Z_p^n.
pub fn finite_place_volume(
    form: &PlaceForm,
    rho_exp: i64,
    ival: &PAdicInterval,
    radius: FiniteRadius,
) -> Result<FiniteVolume, CountError> {
    let Place::Finite(p) = *form.place() else {
        return Err(CountError::Dimension("finite_place_volume needs a finite place".into()));
    };
    if p != ival.p {
        return Err(CountError::Dimension(format!(
            "interval is at p = {} but the form is at p = {p}",
            ival.p
        )));
    }
    let gram = form
        .gram_exact()
        .ok_or_else(|| CountError::Dimension("finite-place gram must be rational".into()))?;
    let n = form.rank();
    let tau = match radius {
        FiniteRadius::Zero => {
            return Ok(FiniteVolume {
                value: Rational::zero(),
                modulus_exp: 0,
                certified: Some(true),
                admitted: 0,
            })
        }
        FiniteRadius::Exp(t_p) => t_p as i64 + rho_exp,
    };
    let shifted_center = &ival.center * crate::arith::p_pow(p, 2 * tau);
    let shifted_exp = ival.exponent + 2 * tau;
    let sieve = crate::enumerate::build_place_sieve(p, n, gram, &shifted_center, shifted_exp, 1)?;
    let scale = crate::arith::p_pow(p, (n as i64) * tau);
    let density = Rational::new(
        BigInt::from(sieve.admitted),
        BigInt::from(sieve.modulus).pow(n as u32),
    );
    Ok(FiniteVolume {
        value: scale * density,
        modulus_exp: sieve.m,
        certified: sieve.certified,
        admitted: sieve.admitted,
    })
}

/// Closed per-coordinate boxes on the coordinates x_2 .. x_n (the first
/// coordinate is pinned to r by the caller).
#[derive(Clone, Debug)]
pub struct SlabIndicator {
    pub bounds: Vec<(f64, f64)>,
}

impl SlabIndicator {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<SlabIndicator, CountError> {
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(CountError::BadQuadratureInput(format!(
                    "bad slab bound [{lo}, {hi}]"
                )));
            }
        }
        Ok(SlabIndicator { bounds })
    }
}

/// Extract (a_1[, a_2]) from a standard-shape real gram
/// [[0,…,1],[·,a_1,…],[…],[1,…,0]] or report how it deviates.
fn standard_real_coeffs(form: &PlaceForm) -> Result<Vec<f64>, CountError> {
    let n = form.rank();
    let g = form
        .gram_real()
        .ok_or_else(|| CountError::NotStandardShape("real-place gram expected".into()))?;
    let tol = 1e-12;
    let expect = |i: usize, j: usize, want: Option<f64>| -> Result<(), CountError> {
        let got = g[i * n + j];
        match want {
            Some(w) if (got - w).abs() <= tol => Ok(()),
            None => Ok(()),
            _ => Err(CountError::NotStandardShape(format!(
                "entry ({i}, {j}) = {got}, expected {}",
                want.map_or("free".to_string(), |w| w.to_string())
            ))),
        }
    };
    for i in 0..n {
        for j in 0..n {
            let want = if (i, j) == (0, n - 1) || (i, j) == (n - 1, 0) {
                Some(1.0)
            } else if i == j && i > 0 && i < n - 1 {
                None // the diagonal coefficients a_1 (, a_2)
            } else {
                Some(0.0)
            };
            expect(i, j, want)?;
        }
    }
    Ok((1..n - 1).map(|i| g[i * n + i]).collect())
}

/// The reduced fiber integral J(r, ζ) = r^{−(n−2)} ∫ f(r, x_2, …, x_{n−1},
/// x_n(ζ)) dx_2 … dx_{n−1}, where x_n is solved from q(r, x_2, …, x_n) = ζ
/// using the standard hyperbolic-pair shape (rank 3: x_3 = (ζ − a_1x_2²)/2r;
/// rank 4: x_4 = (ζ − a_1x_2² − a_2x_3²)/2r). Deterministic midpoint grid
/// with `grid` nodes per axis.
pub fn jf_real(
    form: &PlaceForm,
    f: &SlabIndicator,
    r: f64,
    zeta: f64,
    grid: usize,
) -> Result<f64, CountError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(CountError::BadQuadratureInput(format!("r must be positive, got {r}")));
    }
    if grid == 0 {
        return Err(CountError::BadQuadratureInput("grid must have at least one node".into()));
    }
    let n = form.rank();
    if f.bounds.len() != n - 1 {
        return Err(CountError::BadQuadratureInput(format!(
            "need {} slab bounds for rank {n}, got {}",
            n - 1,
            f.bounds.len()
        )));
    }
    let coeffs = standard_real_coeffs(form)?;
    let in_closed = |x: f64, (lo, hi): (f64, f64)| lo <= x && x <= hi;
    match n {
        3 => {
            let a1 = coeffs[0];
            let (lo2, hi2) = f.bounds[0];
            let h = (hi2 - lo2) / grid as f64;
            let mut acc = 0.0;
            for i in 0..grid {
                let x2 = lo2 + (i as f64 + 0.5) * h;
                let x3 = (zeta - a1 * x2 * x2) / (2.0 * r);
                if in_closed(x3, f.bounds[1]) {
                    acc += h;
                }
            }
            Ok(acc / r)
        }
        4 => {
            let (a1, a2) = (coeffs[0], coeffs[1]);
            let (lo2, hi2) = f.bounds[0];
            let (lo3, hi3) = f.bounds[1];
            let h2 = (hi2 - lo2) / grid as f64;
            let h3 = (hi3 - lo3) / grid as f64;
            let mut acc = 0.0;
            for i in 0..grid {
                let x2 = lo2 + (i as f64 + 0.5) * h2;
                for j in 0..grid {
                    let x3 = lo3 + (j as f64 + 0.5) * h3;
                    let x4 = (zeta - a1 * x2 * x2 - a2 * x3 * x3) / (2.0 * r);
                    if in_closed(x4, f.bounds[2]) {
                        acc += h2 * h3;
                    }
                }
            }
            Ok(acc / (r * r))
        }
        _ => Err(CountError::NotStandardShape(format!("rank {n} has no reduced fiber form"))),
    }
}

/// Monte Carlo estimate of vol{v ∈ T·Ω_∞(region) : q_∞(v) ∈ I} with a
/// binomial standard error, by uniform sampling of the bounding box
/// [−R, R]^n, R = T_∞·max ρ. Deterministic in the seed: the budget is split
/// over [`MC_STRATA`] substreams and hit counts are summed as integers.
pub fn real_place_volume(
    form: &PlaceForm,
    real: &RealRadius,
    ival: &RealInterval,
    t_inf: f64,
    region: Region,
    mc: &McOptions,
) -> Result<(f64, f64), CountError> {
    if mc.samples < 10_000 {
        return Err(CountError::McTooFewSamples(mc.samples));
    }
    if !(t_inf.is_finite() && t_inf > 0.0) {
        return Err(CountError::BadQuadratureInput(format!("T_inf must be positive, got {t_inf}")));
    }
    let n = form.rank();
    let rho_max = match real {
        RealRadius::ConstantRadius(c) => *c,
        RealRadius::Table(t) => t.max_value(),
    };
    let r_box = t_inf * rho_max;
    let box_vol = (2.0 * r_box).powi(n as i32);
    let base = mc.samples / MC_STRATA;
    let rem = mc.samples % MC_STRATA;
    let hits: u64 = (0..MC_STRATA)
        .into_par_iter()
        .map(|stratum| {
            let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
            rng.set_stream(stratum);
            let draws = base + u64::from(stratum < rem);
            let mut v = vec![0.0f64; n];
            let mut hits = 0u64;
            for _ in 0..draws {
                for slot in v.iter_mut() {
                    *slot = rng.random_range(-r_box..r_box);
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                let rho = match real {
                    RealRadius::ConstantRadius(c) => *c,
                    RealRadius::Table(t) => t.lookup(&v),
                };
                let bound = t_inf * rho;
                let inside = match region {
                    Region::Body => norm <= bound,
                    Region::Shell => bound / 2.0 < norm && norm <= bound,
                };
                if inside && ival.contains(form.evaluate_f64(&v)) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let p_hat = hits as f64 / mc.samples as f64;
    let value = box_vol * p_hat;
    let std_err = box_vol * (p_hat * (1.0 - p_hat) / mc.samples as f64).sqrt();
    Ok((value, std_err))
}

/// Product-measure volume: exact rationals at the finite places times the
/// Monte Carlo real-place part.
#[derive(Clone, Debug)]
pub struct VolumeResult {
    pub real_value: f64,
    pub real_err: f64,
    pub finite: Vec<(u64, FiniteVolume)>,
    pub total: f64,
    pub mc_error: f64,
    pub region: Region,
}

/// V(T) = real_place_volume × ∏_p finite_place_volume, for the chosen
/// region. Shell volumes at finite places are differences of two ball
/// volumes (the sphere is ball(τ) minus ball(τ−1)).
pub fn total_volume(
    q: &SQuadraticForm,
    omega: &StarBody,
    interval: &SInterval,
    t: &Radii,
    region: Region,
    mc: &McOptions,
) -> Result<VolumeResult, CountError> {
    let s = q.s();
    let n = q.rank();
    if omega.n != n {
        return Err(CountError::Dimension(format!(
            "form has rank {n} but the star body is {}-dimensional",
            omega.n
        )));
    }
    let (real_value, real_err) =
        real_place_volume(q.infinite(), &omega.real, &interval.real, t.t_inf, region, mc)?;
    let mut finite = Vec::new();
    let mut finite_product = Rational::one();
    for p in s.finite_primes() {
        let pf = q.place_form(&Place::Finite(p)).expect("aligned form");
        let ival = interval
            .finite
            .get(&p)
            .ok_or_else(|| CountError::Dimension(format!("interval missing place {p}")))?;
        let rho_exp = *omega
            .finite
            .get(&p)
            .ok_or_else(|| CountError::Dimension(format!("missing finite radius at p = {p}")))?;
        let radius = *t.finite.get(&p).expect("radii validated against the S-set");
        let fv = match region {
            Region::Body => finite_place_volume(pf, rho_exp, ival, radius)?,
            Region::Shell => match radius {
                FiniteRadius::Zero => FiniteVolume {
                    value: Rational::zero(),
                    modulus_exp: 0,
                    certified: Some(true),
                    admitted: 0,
                },
                FiniteRadius::Exp(t_p) => {
                    let outer = finite_place_volume(pf, rho_exp, ival, FiniteRadius::Exp(t_p))?;
                    let inner =
                        finite_place_volume(pf, rho_exp, ival, FiniteRadius::Exp(t_p - 1))?;
                    FiniteVolume {
                        value: &outer.value - &inner.value,
                        modulus_exp: outer.modulus_exp.max(inner.modulus_exp),
                        certified: match (outer.certified, inner.certified) {
                            (Some(a), Some(b)) => Some(a && b),
                            _ => None,
                        },
                        admitted: outer.admitted,
                    }
                }
            },
        };
        finite_product *= &fv.value;
        finite.push((p, fv));
    }
    let fp = finite_product.to_f64().expect("volume fits in f64 range");
    Ok(VolumeResult {
        real_value,
        real_err,
        finite,
        total: real_value * fp,
        mc_error: real_err * fp,
        region,
    })
}

/// λ̂ per schedule entry, plus the headline value at the largest |T|.
#[derive(Clone, Debug)]
pub struct LambdaEstimate {
    pub lambda_hat: f64,
    /// (|T|, λ̂) per schedule entry, |T| increasing
    pub per_t: Vec<(f64, f64)>,
}

fn validate_schedule(s: &SSet, schedule: &[Radii]) -> Result<(), CountError> {
    if schedule.is_empty() {
        return Err(CountError::BadSchedule("schedule is empty".into()));
    }
    for t in schedule {
        for p in s.finite_primes() {
            if !t.finite.contains_key(&p) {
                return Err(CountError::BadSchedule(format!(
                    "schedule entry missing radius at p = {p}"
                )));
            }
        }
    }
    for w in schedule.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.t_inf < a.t_inf {
            return Err(CountError::BadSchedule("T_inf must be nondecreasing".into()));
        }
        for (p, ra) in &a.finite {
            let rb = &b.finite[p];
            let (va, vb) = (ra.value(*p), rb.value(*p));
            if vb < va {
                return Err(CountError::BadSchedule(format!(
                    "T_{p} must be nondecreasing"
                )));
            }
        }
        if b.abs_t() <= a.abs_t() {
            return Err(CountError::BadSchedule("|T| must be strictly increasing".into()));
        }
    }
    Ok(())
}

/// The Monte Carlo options for one schedule row: decorrelates the rows by
/// shifting the master seed deterministically, so experiments driven row by
/// row reproduce the exact streams of the batched entry points.
pub fn schedule_mc(mc: &McOptions, row: usize) -> McOptions {
    McOptions {
        samples: mc.samples,
        seed: mc.seed.wrapping_add(1_000_003u64.wrapping_mul(row as u64)),
    }
}

/// λ̂ = V(T) / (μ(I_S)·|T|^{n−2}) along a schedule of at least three
/// entries with |T| strictly increasing; the headline value is taken at the
/// largest |T| and the whole sequence is reported for convergence checks.
pub fn lambda_estimate(
    q: &SQuadraticForm,
    omega: &StarBody,
    interval: &SInterval,
    schedule: &[Radii],
    region: Region,
    mc: &McOptions,
) -> Result<LambdaEstimate, CountError> {
    validate_schedule(q.s(), schedule)?;
    if schedule.len() < 3 {
        return Err(CountError::BadSchedule(format!(
            "need at least 3 schedule entries for a convergence sequence, got {}",
            schedule.len()
        )));
    }
    let mu = s_interval_measure(interval);
    let n = q.rank();
    let mut per_t = Vec::with_capacity(schedule.len());
    for (row, t) in schedule.iter().enumerate() {
        let v = total_volume(q, omega, interval, t, region, &schedule_mc(mc, row))?;
        let abs_t = t.abs_t();
        let lambda = v.total / (mu * abs_t.powi(n as i32 - 2));
        per_t.push((abs_t, lambda));
    }
    Ok(LambdaEstimate { lambda_hat: per_t.last().expect("≥ 3 entries").1, per_t })
}

/// One schedule row of the ratio experiment.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub radii: Radii,
    pub abs_t: f64,
    pub count: u64,
    pub volume: f64,
    pub volume_err: f64,
    /// N / V (NaN when V = 0)
    pub ratio: f64,
    pub lambda_hat: f64,
}

/// Full experiment output: one row per schedule entry plus the provenance
/// needed to reproduce it (seed, serialized form, rationality verdict).
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub s: SSet,
    pub rows: Vec<ReportRow>,
    pub seed: u64,
    pub form_text: String,
    pub rationality: RationalityVerdict,
    pub region: Region,
    pub flags: Vec<String>,
}

/// Run the count/volume comparison along a schedule. Rows are ordered by
/// |T| increasing; all randomness is derived from `mc.seed`.
pub fn ratio_experiment(
    q: &SQuadraticForm,
    omega: &StarBody,
    interval: &SInterval,
    schedule: &[Radii],
    mc: &McOptions,
    opts: &CountOptions,
) -> Result<ExperimentReport, CountError> {
    validate_schedule(q.s(), schedule)?;
    let mu = s_interval_measure(interval);
    let n = q.rank();
    let mut rows = Vec::with_capacity(schedule.len());
    let mut flags = Vec::new();
    for (row, t) in schedule.iter().enumerate() {
        if t.has_zero_radius() {
            flags.push(format!(
                "schedule row {row} has a degenerate (zero) finite radius: the ball collapses to the origin"
            ));
        }
        let c = count_n(q, omega, interval, t, opts)?;
        let v = total_volume(q, omega, interval, t, opts.region, &schedule_mc(mc, row))?;
        let abs_t = t.abs_t();
        let denomv = mu * abs_t.powi(n as i32 - 2);
        let lambda = if denomv > 0.0 { v.total / denomv } else { f64::NAN };
        let ratio = if v.total != 0.0 { c.count as f64 / v.total } else { f64::NAN };
        rows.push(ReportRow {
            radii: t.clone(),
            abs_t,
            count: c.count,
            volume: v.total,
            volume_err: v.mc_error,
            ratio,
            lambda_hat: lambda,
        });
    }
    let rationality = rationality_witness(q, crate::forms::DET_TOL);
    if rationality.is_rational() {
        flags.push(
            "rationality_witness = rational: the form is proportional to a rational form, \
             outside the generic (almost-every) counting regime"
                .to_string(),
        );
    }
    Ok(ExperimentReport {
        s: q.s().clone(),
        rows,
        seed: mc.seed,
        form_text: q.to_text(),
        rationality,
        region: opts.region,
        flags,
    })
}

impl ExperimentReport {
    /// Render the report as CSV: `#`-prefixed provenance comments (caller
    /// comments first, e.g. a config hash), a header line, then one row per
    /// schedule entry. 12 significant digits, LF line endings.
    pub fn to_csv(&self, extra_comments: &[String]) -> String {
        let mut out = String::new();
        for c in extra_comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&format!(
            "# region = {}\n",
            match self.region {
                Region::Body => "body",
                Region::Shell => "shell",
            }
        ));
        out.push_str(&format!("# seed = {}\n", self.seed));
        for line in self.form_text.lines() {
            out.push_str("# form ");
            out.push_str(line);
            out.push('\n');
        }
        match &self.rationality {
            RationalityVerdict::Rational { .. } => out.push_str("# rationality = rational\n"),
            RationalityVerdict::Irrational { place, detail } => {
                out.push_str(&format!("# rationality = irrational at {place}: {detail}\n"));
            }
        }
        for f in &self.flags {
            out.push_str("# flag: ");
            out.push_str(f);
            out.push('\n');
        }
        out.push_str("Tinf");
        let primes: Vec<u64> = self.s.finite_primes().collect();
        for p in &primes {
            out.push_str(&format!(",t_{p}"));
        }
        out.push_str(",absT,N,V,V_err,ratio,lambda_hat\n");
        for row in &self.rows {
            out.push_str(&format_sig(row.radii.t_inf, 12));
            for p in &primes {
                match row.radii.finite[p] {
                    FiniteRadius::Zero => out.push_str(",-inf"),
                    FiniteRadius::Exp(e) => out.push_str(&format!(",{e}")),
                }
            }
            out.push_str(&format!(
                ",{},{},{},{},{},{}\n",
                format_sig(row.abs_t, 12),
                row.count,
                format_sig(row.volume, 12),
                format_sig(row.volume_err, 12),
                format_sig(row.ratio, 12),
                format_sig(row.lambda_hat, 12),
            ));
        }
        out
    }
}

/// Shortest-form decimal with the given number of significant digits
/// (scientific notation outside [1e−4, 10^sig), trailing zeros trimmed).
pub fn format_sig(x: f64, sig: usize) -> String {
    assert!((1..=17).contains(&sig));
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mant, exp) = sci.split_once('e').expect("scientific form");
    let exp: i32 = exp.parse().expect("exponent parses");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let body = if exp < -4 || exp >= sig as i32 {
        let (first, rest) = digits.split_at(1);
        if rest.is_empty() {
            format!("{first}e{exp}")
        } else {
            format!("{first}.{rest}e{exp}")
        }
    } else if exp >= 0 {
        let e = exp as usize;
        if digits.len() > e + 1 {
            format!("{}.{}", &digits[..e + 1], &digits[e + 1..])
        } else {
            format!("{}{}", digits, "0".repeat(e + 1 - digits.len()))
        }
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}
