//! Acceptance gate: ten end-to-end release checks, one test per criterion.
//!
//! Each test prints a `criterion N: PASS` line (visible under
//! `--nocapture`); a failing criterion panics with the accumulated list of
//! problems instead. Every quantitative claim is checked against an
//! independent route — exhaustive rational scans, explicit residue counts,
//! closed forms, a matrix-action oracle — or against constants measured
//! once and frozen together with every input that determines them (seeds,
//! sample budgets, schedules), so reruns are exact reproductions.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqcount_core::arith::{
    p_pow, valuation, FiniteRadius, PAdicInterval, Place, Radii, Rational, RealInterval,
    SInterval, SSet,
};
use sqcount_core::counting::{
    count_n, finite_place_volume, ratio_experiment, real_place_volume, schedule_mc, CountOptions,
    McOptions,
};
use sqcount_core::enumerate::{RealRadius, Region, StarBody};
use sqcount_core::forms::{random_generic_form, standard_form, PlaceForm, SQuadraticForm, StandardSpec};
use sqcount_core::geometry::{
    alpha_lower, conj_displacement, corner_envelope_grid, random_slattice, siegel_transform,
    tree_conj_measure, tree_sphere_size, CompactIndicator, SLattice, TreeParams,
};

macro_rules! check {
    ($problems:expr, $cond:expr, $($msg:tt)+) => {
        match $cond {
            true => {}
            false => $problems.push(format!($($msg)+)),
        }
    };
}

fn report(n: u32, problems: Vec<String>) {
    if problems.is_empty() {
        println!("criterion {n}: PASS");
    } else {
        println!("criterion {n}: FAIL");
        panic!(
            "criterion {n} failed ({} problem(s)):\n  {}",
            problems.len(),
            problems.join("\n  ")
        );
    }
}

fn s_set(with_three: bool) -> SSet {
    if with_three {
        SSet::new(&[3]).unwrap()
    } else {
        SSet::new(&[]).unwrap()
    }
}

fn rank3_form(s: &SSet, seed: Option<u64>) -> SQuadraticForm {
    let base = standard_form(s, &StandardSpec::default_for_rank(3).unwrap()).unwrap();
    match seed {
        None => base,
        Some(seed) => random_generic_form(seed, &base, 3).unwrap().0,
    }
}

fn interval_for(s: &SSet, real: (f64, f64), i3: Option<(i64, i64, i64)>) -> SInterval {
    let mut finite = BTreeMap::new();
    if let Some((num, den, exp)) = i3 {
        let center = Rational::new(BigInt::from(num), BigInt::from(den));
        finite.insert(3, PAdicInterval::new(Place::finite(3).unwrap(), center, exp).unwrap());
    }
    SInterval::new(s, RealInterval::new(real.0, real.1).unwrap(), finite).unwrap()
}

fn radii_for(s: &SSet, t_inf: f64, t3: Option<i32>) -> Radii {
    let mut finite = BTreeMap::new();
    if let Some(e) = t3 {
        finite.insert(3, FiniteRadius::Exp(e));
    }
    Radii::new(s, t_inf, finite).unwrap()
}

/// Exhaustive rank-3 reference count over the full denominator box, sharing
/// no code with the library scan: real and 3-adic norms, the real interval
/// and the 3-adic congruence are all evaluated per point.
fn oracle_count(
    q: &SQuadraticForm,
    t_inf: f64,
    t3: Option<i32>,
    ival: &SInterval,
    region: Region,
    include_origin: bool,
) -> u64 {
    assert_eq!(q.rank(), 3, "reference scan is specialized to rank 3");
    let denom: i64 = match t3 {
        Some(e) if e > 0 => 3i64.pow(e as u32),
        _ => 1,
    };
    let bound = (denom as f64 * t_inf).floor() as i64;
    let d_big = BigInt::from(denom);
    let d_f = denom as f64;
    let inf = q.infinite();
    let finite_form = t3.map(|_| q.place_form(&Place::Finite(3)).unwrap());
    let mut count = 0u64;
    for w1 in -bound..=bound {
        for w2 in -bound..=bound {
            for w3 in -bound..=bound {
                let w = [w1, w2, w3];
                if w == [0, 0, 0] && !include_origin {
                    continue;
                }
                let vf = [w1 as f64 / d_f, w2 as f64 / d_f, w3 as f64 / d_f];
                let norm = vf.iter().map(|x| x * x).sum::<f64>().sqrt();
                let real_ok = match region {
                    Region::Body => norm <= t_inf,
                    Region::Shell => t_inf / 2.0 < norm && norm <= t_inf,
                };
                if !real_ok {
                    continue;
                }
                let v: Vec<Rational> = w
                    .iter()
                    .map(|&x| Rational::new(BigInt::from(x), d_big.clone()))
                    .collect();
                if let Some(e) = t3 {
                    let min_val = v.iter().filter_map(|c| valuation(c, 3)).min();
                    let ok = match (region, min_val) {
                        (Region::Body, None) => true,
                        (Region::Body, Some(m)) => -m <= e as i64,
                        (Region::Shell, None) => false,
                        (Region::Shell, Some(m)) => -m == e as i64,
                    };
                    if !ok {
                        continue;
                    }
                }
                if !ival.real.contains(inf.evaluate_f64(&vf)) {
                    continue;
                }
                if let Some(pf) = finite_form {
                    if !ival.finite[&3].contains(pf.evaluate(&v).expect_exact()) {
                        continue;
                    }
                }
                count += 1;
            }
        }
    }
    count
}

/// One randomized (or hand-checked) counting instance for criteria 2 and 3.
struct Instance {
    with_three: bool,
    form_seed: Option<u64>,
    t_inf: f64,
    t3: Option<i32>,
    real_i: (f64, f64),
    i3: Option<(i64, i64, i64)>,
    expect: Option<u64>,
}

fn counting_instances() -> Vec<Instance> {
    let mut list = vec![
        // hand-checked: zeros of 2x₁x₃ + x₂² in the closed unit ball are
        // 0, ±e₁, ±e₃ (five), and the value-1 vectors there are ±e₂ (two);
        // the third instance re-reads the first over S = {∞, 3} with the
        // 3-adic radius and interval both trivial
        Instance {
            with_three: false,
            form_seed: None,
            t_inf: 1.0,
            t3: None,
            real_i: (-0.5, 0.5),
            i3: None,
            expect: Some(5),
        },
        Instance {
            with_three: false,
            form_seed: None,
            t_inf: 1.0,
            t3: None,
            real_i: (0.5, 1.5),
            i3: None,
            expect: Some(2),
        },
        Instance {
            with_three: true,
            form_seed: None,
            t_inf: 1.0,
            t3: Some(0),
            real_i: (-0.5, 0.5),
            i3: Some((0, 1, 0)),
            expect: Some(5),
        },
    ];
    // radii avoid integer multiples of 1/3 so no lattice point can tie the
    // real boundary; the interval palette mixes signs and widths
    let reals = [(-0.5f64, 0.5f64), (0.3, 1.7), (-2.0, -0.25), (-1.1, 0.9)];
    let ts = [1.3f64, 2.3, 3.3];
    for k in 0..10u64 {
        list.push(Instance {
            with_three: false,
            form_seed: Some(101 + k),
            t_inf: ts[(k % 3) as usize],
            t3: None,
            real_i: reals[(k % 4) as usize],
            i3: None,
            expect: None,
        });
    }
    // 3-adic interval palette: Z₃, 3Z₃, 1 + 3Z₃
    let i3s = [(0i64, 1i64, 0i64), (0, 1, 1), (1, 1, 1)];
    for k in 0..10u64 {
        list.push(Instance {
            with_three: true,
            form_seed: Some(201 + k),
            t_inf: ts[((k + 1) % 3) as usize],
            t3: Some((k % 2) as i32),
            real_i: reals[((k + 2) % 4) as usize],
            i3: Some(i3s[(k % 3) as usize]),
            expect: None,
        });
    }
    list
}

/// Fraction of residue triples u mod 3^k with val₃(q(u) − center) ≥ 1,
/// as an exact rational with denominator 3^{3k}. Because the form has an
/// integral gram matrix, the k = 1 table already determines the Haar
/// measure of {v ∈ Z₃³ : q(v) ∈ center + 3Z₃}; k = 2 must reproduce it.
fn residue_fraction(pf: &PlaceForm, center: i64, k: u32) -> Rational {
    let m = 3i64.pow(k);
    let c = Rational::from_integer(BigInt::from(center));
    let mut hits = 0u64;
    for u1 in 0..m {
        for u2 in 0..m {
            for u3 in 0..m {
                let v = [
                    Rational::from_integer(BigInt::from(u1)),
                    Rational::from_integer(BigInt::from(u2)),
                    Rational::from_integer(BigInt::from(u3)),
                ];
                let scalar = pf.evaluate(&v);
                let diff = scalar.expect_exact() - &c;
                let ok = match valuation(&diff, 3) {
                    None => true,
                    Some(w) => w >= 1,
                };
                if ok {
                    hits += 1;
                }
            }
        }
    }
    Rational::new(BigInt::from(hits), BigInt::from(3u64.pow(3 * k)))
}

#[test]
fn acceptance_01_exact_finite_volumes_with_residue_oracle() {
    let start = Instant::now();
    let mut problems = Vec::new();
    let s = s_set(true);
    let q = rank3_form(&s, None);
    let pf = q.place_form(&Place::Finite(3)).unwrap();
    for (center, num, den) in [(0i64, 1i64, 3i64), (1, 4, 9)] {
        let ival = PAdicInterval::new(
            Place::finite(3).unwrap(),
            Rational::from_integer(BigInt::from(center)),
            1,
        )
        .unwrap();
        let vol = finite_place_volume(pf, 0, &ival, FiniteRadius::Exp(0)).unwrap();
        let expect = Rational::new(BigInt::from(num), BigInt::from(den));
        check!(
            problems,
            vol.value == expect,
            "volume of {{q ∈ {center} + 3Z₃}}: got {}, want {expect}",
            vol.value
        );
        check!(
            problems,
            vol.certified == Some(true),
            "stabilization recheck not certified at center {center}: {:?}",
            vol.certified
        );
        let f1 = residue_fraction(pf, center, 1);
        let f2 = residue_fraction(pf, center, 2);
        check!(
            problems,
            f1 == expect,
            "mod-3 residue oracle at center {center}: got {f1}, want {expect}"
        );
        check!(
            problems,
            f2 == f1,
            "mod-9 stabilization at center {center}: {f2} != {f1}"
        );
    }
    let elapsed = start.elapsed();
    check!(
        problems,
        elapsed < Duration::from_secs(1),
        "runtime {elapsed:?} is not under 1 s"
    );
    report(1, problems);
}

#[test]
fn acceptance_02_counts_match_exhaustive_oracle() {
    let mut problems = Vec::new();
    let mut randomized = 0u32;
    for (idx, inst) in counting_instances().iter().enumerate() {
        let s = s_set(inst.with_three);
        let q = rank3_form(&s, inst.form_seed);
        let omega = StarBody::ball(&s, 3);
        let ival = interval_for(&s, inst.real_i, inst.i3);
        let t = radii_for(&s, inst.t_inf, inst.t3);
        let denom: i64 = match inst.t3 {
            Some(e) if e > 0 => 3i64.pow(e as u32),
            _ => 1,
        };
        let bound = (denom as f64 * inst.t_inf).floor() as i64;
        let box_points = (2 * bound + 1).pow(3);
        check!(
            problems,
            box_points <= 100_000,
            "instance {idx}: full box has {box_points} points, over the 10⁵ budget"
        );
        let got = count_n(&q, &omega, &ival, &t, &CountOptions::default())
            .unwrap()
            .count;
        let want = oracle_count(&q, inst.t_inf, inst.t3, &ival, Region::Body, true);
        check!(
            problems,
            got == want,
            "instance {idx} (seed {:?}): count {got} != oracle {want}",
            inst.form_seed
        );
        if let Some(e) = inst.expect {
            check!(
                problems,
                got == e,
                "instance {idx}: count {got} != hand-checked {e}"
            );
        }
        if inst.form_seed.is_some() {
            randomized += 1;
        }
    }
    check!(
        problems,
        randomized >= 20,
        "only {randomized} randomized instances, need at least 20"
    );
    report(2, problems);
}

#[test]
fn acceptance_03_sieve_never_changes_counts_and_prunes() {
    let mut problems = Vec::new();
    let mut reduction_checked = 0u32;
    for (idx, inst) in counting_instances().iter().enumerate() {
        let s = s_set(inst.with_three);
        let q = rank3_form(&s, inst.form_seed);
        let omega = StarBody::ball(&s, 3);
        let ival = interval_for(&s, inst.real_i, inst.i3);
        let t = radii_for(&s, inst.t_inf, inst.t3);
        let on = count_n(&q, &omega, &ival, &t, &CountOptions::default()).unwrap();
        let off_opts = CountOptions {
            use_sieve: false,
            ..CountOptions::default()
        };
        let off = count_n(&q, &omega, &ival, &t, &off_opts).unwrap();
        check!(
            problems,
            on.count == off.count,
            "instance {idx}: sieve changed the count: {} (on) vs {} (off)",
            on.count,
            off.count
        );
        if inst.i3 == Some((0, 1, 1)) {
            // I₃ = 3Z₃ admits a strict minority of residue classes, so the
            // sieve must cut the exactly-checked points at least in half
            check!(
                problems,
                2 * on.sieve_admitted <= on.tried,
                "instance {idx}: sieve admitted {} of {} tried, reduction below 2×",
                on.sieve_admitted,
                on.tried
            );
            reduction_checked += 1;
        }
    }
    check!(
        problems,
        reduction_checked >= 3,
        "only {reduction_checked} reduction instances with I₃ = 3Z₃"
    );
    report(3, problems);
}

#[test]
fn acceptance_04_tree_measures_are_exact() {
    let mut problems = Vec::new();
    let tree3 = TreeParams::new(3).unwrap();
    let m = tree_conj_measure(tree3, 2, 0).unwrap();
    let want = Rational::new(BigInt::one(), BigInt::from(108));
    check!(problems, m == want, "measure(p=3, t=2, r=0) = {m}, want 1/108");
    let closed = Rational::new(BigInt::from(3), BigInt::from(4)) * p_pow(3, -4);
    check!(
        problems,
        m == closed,
        "closed form (3/4)·3⁻⁴ = {closed} does not match {m}"
    );
    for p in [3u64, 5, 7] {
        let tree = TreeParams::new(p).unwrap();
        for t in 1i64..=3 {
            for r in [0i64, 2, 4] {
                if r >= 4 * t {
                    continue;
                }
                let measure = tree_conj_measure(tree, t, r).unwrap();
                let sphere = tree_sphere_size(tree, 2 * t - r / 2).unwrap();
                let sphere_q = Rational::from_integer(BigInt::from(sphere));
                let recip = measure.recip();
                check!(
                    problems,
                    recip == sphere_q,
                    "p={p} t={t} r={r}: 1/measure = {recip} but sphere(2t − r/2) = {sphere_q}"
                );
            }
        }
    }
    report(4, problems);
}

/// Displacement of the basepoint under a_t k_θ a_{−t}, read off the Möbius
/// action of the explicit 2×2 matrix with the distance taken in the upper
/// half-plane — an independent route sharing no trigonometry with the
/// library's closed form.
fn displacement_matrix_oracle(t: f64, theta: f64) -> f64 {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let e2t = (2.0 * t).exp();
    let (ga, gb, gc, gd) = (c, -e2t * s, s / e2t, c);
    let den = gc * gc + gd * gd;
    let x = (gb * gd + ga * gc) / den;
    let h = 1.0 / den;
    let cosh_d = 1.0 + (x * x + (h - 1.0) * (h - 1.0)) / (2.0 * h);
    cosh_d.acosh()
}

#[test]
fn acceptance_05_displacement_and_real_envelope() {
    let mut problems = Vec::new();
    // θ = π is the farthest rotation: displacement exactly 4t
    for &t in &[0.5f64, 1.0, 2.0, 4.0] {
        let d = conj_displacement(t, PI).unwrap();
        check!(
            problems,
            (d - 4.0 * t).abs() <= 1e-9,
            "displacement at θ=π, t={t}: {d}, want {}",
            4.0 * t
        );
    }
    // one calibrated constant must dominate the whole grid
    let (c, rows) = corner_envelope_grid().unwrap();
    check!(problems, c.is_finite() && c > 0.0, "bad calibration constant {c}");
    check!(problems, !rows.is_empty(), "empty envelope grid");
    for row in &rows {
        check!(
            problems,
            row.pass,
            "envelope failed at t={} r={}: measure {} > bound {}",
            row.t,
            row.r,
            row.measure,
            row.bound
        );
        check!(
            problems,
            row.measure <= c * (-2.0 * row.t + row.r).exp() + 1e-12,
            "recomputed envelope C·e^(−2t+r) fails at t={} r={}",
            row.t,
            row.r
        );
    }
    // 100 deterministic pseudo-random (t, θ) pairs against the matrix action
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let t: f64 = rng.random_range(0.1..4.0);
        let theta: f64 = rng.random_range(0.01..PI);
        let lib = conj_displacement(t, theta).unwrap();
        let oracle = displacement_matrix_oracle(t, theta);
        check!(
            problems,
            (lib - oracle).abs() <= 1e-9,
            "displacement mismatch at t={t}, θ={theta}: {lib} vs {oracle}"
        );
    }
    report(5, problems);
}

#[test]
fn acceptance_06_real_volume_ball_and_doubling() {
    let mut problems = Vec::new();
    let s = s_set(false);
    let q = rank3_form(&s, None);
    let ball = RealRadius::ConstantRadius(1.0);

    // with the interval covering the full value range the condition is
    // vacuous and the estimate must reproduce the ball volume (4/3)πT³
    let t = 5.0f64;
    let full = RealInterval::new(-(t * t + 1.0), t * t + 1.0).unwrap();
    let mc = McOptions { samples: 1_000_000, seed: 7 };
    let (v, e) = real_place_volume(q.infinite(), &ball, &full, t, Region::Body, &mc).unwrap();
    let exact = 4.0 / 3.0 * PI * t.powi(3);
    check!(
        problems,
        (v - exact).abs() <= 3.0 * e,
        "ball volume {v} vs exact {exact}: off by {} SEs",
        (v - exact).abs() / e
    );

    // rank 3 slab volume grows linearly in T, so doubling T doubles it
    let slab = RealInterval::new(-0.5, 0.5).unwrap();
    let mc = McOptions { samples: 200_000, seed: 0 };
    let (v1, e1) =
        real_place_volume(q.infinite(), &ball, &slab, 10.0, Region::Body, &schedule_mc(&mc, 0))
            .unwrap();
    let (v2, e2) =
        real_place_volume(q.infinite(), &ball, &slab, 20.0, Region::Body, &schedule_mc(&mc, 1))
            .unwrap();
    let ratio = v2 / v1;
    let rel = ((e1 / v1).powi(2) + (e2 / v2).powi(2)).sqrt();
    check!(
        problems,
        (ratio - 2.0).abs() / 2.0 <= 3.0 * rel,
        "V(2T)/V(T) = {ratio}, outside 2·(1 ± 3·{rel})"
    );
    report(6, problems);
}

#[test]
fn acceptance_07_ratio_convergence_on_seeded_forms() {
    let start = Instant::now();
    let mut problems = Vec::new();
    let s = s_set(true);
    let base = rank3_form(&s, None);
    let omega = StarBody::ball(&s, 3);
    let interval = interval_for(&s, (-0.5, 0.5), Some((0, 1, 0)));
    let schedule: Vec<Radii> = [10.0f64, 20.0, 40.0]
        .iter()
        .map(|&t| radii_for(&s, t, Some(1)))
        .collect();
    let mc = McOptions { samples: 2_000_000, seed: 0 };
    for &seed in &[13u64, 18, 19] {
        let (q, _) = random_generic_form(seed, &base, 3).unwrap();
        let rep =
            ratio_experiment(&q, &omega, &interval, &schedule, &mc, &CountOptions::default())
                .unwrap();
        let ds: Vec<f64> = rep.rows.iter().map(|r| (r.ratio - 1.0).abs()).collect();
        check!(
            problems,
            ds[2] <= ds[1],
            "seed {seed}: |N/V − 1| rose from {:.4} at T=20 to {:.4} at T=40",
            ds[1],
            ds[2]
        );
        check!(
            problems,
            ds[2] <= 0.3,
            "seed {seed}: final |N/V − 1| = {:.4} exceeds 0.3",
            ds[2]
        );
    }
    let elapsed = start.elapsed();
    check!(
        problems,
        elapsed <= Duration::from_secs(600),
        "runtime {elapsed:?} exceeds 10 minutes"
    );
    report(7, problems);
}

#[test]
fn acceptance_08_body_equals_sum_of_shells() {
    let mut problems = Vec::new();
    let s = s_set(true);
    let q = rank3_form(&s, Some(13));
    let omega = StarBody::ball(&s, 3);
    let ival = interval_for(&s, (-0.5, 0.5), Some((0, 1, 0)));
    let t_inf = 40.0f64;
    let t3 = 1i32;

    let no_origin = CountOptions { include_origin: false, ..CountOptions::default() };
    let t = radii_for(&s, t_inf, Some(t3));
    let body = count_n(&q, &omega, &ival, &t, &no_origin).unwrap().count;
    let with_origin = count_n(&q, &omega, &ival, &t, &CountOptions::default())
        .unwrap()
        .count;
    check!(
        problems,
        with_origin == body + 1,
        "origin accounting: {with_origin} (with) != {body} (without) + 1"
    );

    // every nonzero vector of the body lies in exactly one cell (k, m):
    // real norm in (T/2^{k+1}, T/2^k], 3-adic norm exactly 3^m. k stops
    // after the real edge drops below the minimal positive norm 1/3 and m
    // spans −4…1, one step beyond the coarsest class that still fits the
    // radius-40 box, so both tails are demonstrated empty.
    let shell_opts = CountOptions {
        region: Region::Shell,
        include_origin: false,
        ..CountOptions::default()
    };
    let mut total = 0u64;
    for k in 0..=7i32 {
        for m in -4i32..=1 {
            let t = radii_for(&s, t_inf / 2f64.powi(k), Some(m));
            total += count_n(&q, &omega, &ival, &t, &shell_opts).unwrap().count;
        }
    }
    check!(
        problems,
        body == total,
        "body count {body} != sum of 48 shell counts {total}"
    );
    report(8, problems);
}

fn rational_to_f64(x: &Rational) -> f64 {
    x.to_f64().expect("fits in f64")
}

fn sq_f64(x: &Rational) -> f64 {
    let f = rational_to_f64(x);
    f * f
}

/// Inverse of a 2×2 rational matrix given as rows, returned row-major.
fn inverse2(basis: &[Vec<Rational>]) -> Vec<Rational> {
    let (a, b, c, d) = (&basis[0][0], &basis[0][1], &basis[1][0], &basis[1][1]);
    let det = a * d - b * c;
    vec![d / &det, -(b / &det), -(c / &det), a / &det]
}

#[test]
fn acceptance_09_alpha_floor_and_siegel_bound() {
    let mut problems = Vec::new();
    // the standard lattice is unimodular and so is every coordinate line:
    // the certified lower bound must be exactly 1, witnessed by span(e₁)
    for with_three in [false, true] {
        let s = s_set(with_three);
        for dim in [2usize, 3] {
            let lat = SLattice::standard(&s, dim).unwrap();
            let out = alpha_lower(&lat, 2).unwrap();
            check!(
                problems,
                out.alpha == 1.0,
                "standard lattice ({} finite places, dim {dim}): alpha {}",
                s.finite_primes().count(),
                out.alpha
            );
            let mut e1 = vec![Rational::zero(); dim];
            e1[0] = Rational::one();
            check!(
                problems,
                out.witness.vectors == vec![e1],
                "standard lattice dim {dim}: witness is not span(e₁): {:?}",
                out.witness.vectors
            );
        }
    }

    // radius-1.5 real ball over Z²: the origin plus the eight neighbours
    let s_inf = s_set(false);
    let f = CompactIndicator::ball(&s_inf, 1.0, 1.5);
    let z2 = SLattice::standard(&s_inf, 2).unwrap();
    let got = siegel_transform(&f, &z2).unwrap();
    check!(problems, got == 9.0, "ball-1.5 transform over Z²: {got}, want 9");

    // 100 seeded lattices: α̂ ≥ 1 always, and the transform (max |f| = 1)
    // never exceeds the member-count bound from the inverse basis
    let s = s_set(true);
    let radius = 1.2f64;
    let f = CompactIndicator::ball(&s, 1.0, radius);
    for seed in 0..100u64 {
        let lat = random_slattice(&s, 2, seed, 3).unwrap();
        let transform = siegel_transform(&f, &lat).unwrap();
        let alpha = alpha_lower(&lat, 2).unwrap();
        check!(
            problems,
            alpha.alpha >= 1.0,
            "seed {seed}: alpha {} below the unimodular floor 1",
            alpha.alpha
        );
        let binv = inverse2(lat.basis());
        let min_val = binv.iter().filter_map(|e| valuation(e, 3)).min().unwrap_or(0);
        let denom = 3f64.powi((-min_val).max(0) as i32);
        let mut cand_bound = 1.0f64;
        for j in 0..2 {
            let col_norm = (sq_f64(&binv[j]) + sq_f64(&binv[2 + j])).sqrt();
            let m = (denom * col_norm * radius * (1.0 + 1e-9) + 1e-9).floor();
            cand_bound *= 2.0 * m + 1.0;
        }
        check!(
            problems,
            transform <= cand_bound + 0.5,
            "seed {seed}: transform {transform} exceeds candidate bound {cand_bound}"
        );
    }
    report(9, problems);
}

fn read_csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            if name.ends_with(".csv") {
                out.insert(name, fs::read(e.path()).unwrap());
            }
        }
    }
    out
}

#[test]
fn acceptance_10_csv_outputs_are_byte_identical() {
    let mut problems = Vec::new();
    let bin = env!("CARGO_BIN_EXE_sqcount");
    let base = std::env::temp_dir().join(format!("sqcount-acceptance-{}", std::process::id()));
    fs::create_dir_all(&base).unwrap();
    let cases: &[(&str, &str, &[&str])] = &[
        (
            "count",
            "primes = 3\nT = 2,4\nt_3 = 1\nI = -0.5,0.5\n",
            &["--dump-vectors"],
        ),
        ("volume", "primes = 3\nT = 2,4\nt_3 = 1\nmc_samples = 20000\n", &[]),
        (
            "ratio",
            "primes = 3\nT = 2,4\nt_3 = 1\nmc_samples = 20000\n",
            &["--dump-vectors"],
        ),
        ("lemmas", "", &[]),
        ("alpha", "primes = 3\nlattice = random\nlattice_seed = 5\n", &[]),
    ];
    for (cmd, cfg, extra) in cases {
        let cfg_path = base.join(format!("{cmd}.cfg"));
        if !cfg.is_empty() {
            fs::write(&cfg_path, cfg).unwrap();
        }
        let mut runs: Vec<BTreeMap<String, Vec<u8>>> = Vec::new();
        for (run_idx, workers) in [None, Some("1"), Some("4")].iter().enumerate() {
            let out_dir = base.join(format!("{cmd}-run{run_idx}"));
            let mut args: Vec<String> = vec![
                cmd.to_string(),
                "--out".into(),
                out_dir.to_string_lossy().into_owned(),
            ];
            if !cfg.is_empty() {
                args.push("--config".into());
                args.push(cfg_path.to_string_lossy().into_owned());
            }
            if let Some(w) = workers {
                args.push("--workers".into());
                args.push((*w).into());
            }
            for e in *extra {
                args.push((*e).into());
            }
            let out = Command::new(bin).args(&args).output().unwrap();
            check!(
                problems,
                out.status.success(),
                "{cmd} run {run_idx}: exit {:?}\nstderr: {}",
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            );
            runs.push(read_csvs(&out_dir));
        }
        check!(problems, !runs[0].is_empty(), "{cmd}: produced no CSV files");
        for i in 1..runs.len() {
            check!(
                problems,
                runs[i] == runs[0],
                "{cmd}: CSVs of run {i} differ from run 0 (files {:?} vs {:?})",
                runs[i].keys().collect::<Vec<_>>(),
                runs[0].keys().collect::<Vec<_>>()
            );
        }
    }
    fs::remove_dir_all(&base).ok();
    report(10, problems);
}
