//! Property-based tests over randomized inputs: algebraic identities of the
//! p-adic norms, interval structure, covolume invariances, and formatting
//! round-trips that must hold for every input, not just the worked examples.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use proptest::prelude::*;

use sqcount_core::arith::{
    p_norm, p_pow, sup_norm, unit_normalize, valuation, FiniteRadius, PAdicInterval, Place,
    PlaceScalar, Radii, Rational, RealInterval, SInterval, SSet, UnitVector,
};
use sqcount_core::counting::{count_n, format_sig, CountOptions};
use sqcount_core::enumerate::StarBody;
use sqcount_core::forms::{standard_form, StandardSpec};
use sqcount_core::geometry::{tree_conj_measure, tree_sphere_size, wedge_covolume, TreeParams};

fn rational() -> impl Strategy<Value = Rational> {
    (-100_000i64..100_000, 1i64..10_000)
        .prop_map(|(n, d)| Rational::new(BigInt::from(n), BigInt::from(d)))
}

fn nonzero_rational() -> impl Strategy<Value = Rational> {
    rational().prop_filter("nonzero", |r| !r.is_zero())
}

fn odd_prime() -> impl Strategy<Value = u64> {
    prop::sample::select(vec![3u64, 5, 7, 11, 13])
}

fn exact(scalar: PlaceScalar) -> Rational {
    match scalar {
        PlaceScalar::Exact(r) => r,
        PlaceScalar::Real(_) => panic!("expected an exact finite-place value"),
    }
}

proptest! {
    #[test]
    fn ultrametric_inequality_with_equality_when_distinct(
        x in rational(),
        y in rational(),
        p in odd_prime(),
    ) {
        let place = Place::finite(p).unwrap();
        let nx = exact(p_norm(&x, &place));
        let ny = exact(p_norm(&y, &place));
        let nsum = exact(p_norm(&(&x + &y), &place));
        let max = nx.clone().max(ny.clone());
        prop_assert!(nsum <= max, "|x+y| = {nsum} > max(|x|, |y|) = {max}");
        if nx != ny {
            prop_assert_eq!(nsum, max, "distinct norms force equality");
        }
    }

    #[test]
    fn finite_norm_is_multiplicative(
        x in nonzero_rational(),
        y in nonzero_rational(),
        p in odd_prime(),
    ) {
        let place = Place::finite(p).unwrap();
        let nx = exact(p_norm(&x, &place));
        let ny = exact(p_norm(&y, &place));
        let nxy = exact(p_norm(&(&x * &y), &place));
        prop_assert_eq!(nxy, nx * ny);
    }

    #[test]
    fn valuation_is_additive(
        x in nonzero_rational(),
        y in nonzero_rational(),
        p in odd_prime(),
    ) {
        let vx = valuation(&x, p).unwrap();
        let vy = valuation(&y, p).unwrap();
        let vxy = valuation(&(&x * &y), p).unwrap();
        prop_assert_eq!(vxy, vx + vy);
    }

    #[test]
    fn product_formula_for_s_units(
        sign in prop::bool::ANY,
        e3 in -6i64..=6,
        e5 in -6i64..=6,
        e7 in -6i64..=6,
    ) {
        // x = ±3^e₃·5^e₅·7^e₇ has |x|_∞·∏|x|_p = 1 over S = {∞,3,5,7}
        let mut x = p_pow(3, e3) * p_pow(5, e5) * p_pow(7, e7);
        if sign {
            x = -x;
        }
        let mut product = x.abs(); // the real absolute value, exactly
        for p in [3u64, 5, 7] {
            product *= exact(p_norm(&x, &Place::finite(p).unwrap()));
        }
        prop_assert_eq!(product, Rational::one());
    }

    #[test]
    fn normalized_vectors_have_unit_norm(
        coords in prop::collection::vec(rational(), 2..5),
        p in odd_prime(),
    ) {
        prop_assume!(coords.iter().any(|c| !c.is_zero()));
        let place = Place::finite(p).unwrap();
        let unit = match unit_normalize(&coords, &place).unwrap() {
            UnitVector::Finite(v) => v,
            UnitVector::Real(_) => unreachable!("finite-place normalization is exact"),
        };
        prop_assert_eq!(exact(sup_norm(&unit, &place)), Rational::one());

        let real_unit = match unit_normalize(&coords, &Place::Infinite).unwrap() {
            UnitVector::Real(v) => v,
            UnitVector::Finite(_) => unreachable!("real-place normalization is floating"),
        };
        let norm: f64 = real_unit.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() <= 1e-12, "real norm after normalizing: {norm}");
    }

    #[test]
    fn padic_intervals_are_translation_invariant(
        r in rational(),
        c in rational(),
        b in -4i64..=6,
        k in -1_000i64..=1_000,
        p in odd_prime(),
    ) {
        // membership is invariant under shifting by p^b·(integer)
        let ival = PAdicInterval::new(Place::finite(p).unwrap(), c, b).unwrap();
        let shifted = &r + p_pow(p, b) * Rational::from_integer(BigInt::from(k));
        prop_assert_eq!(ival.contains(&r), ival.contains(&shifted));
    }

    #[test]
    fn tree_measure_is_the_exact_sphere_reciprocal(
        p in prop::sample::select(vec![3u64, 5, 7]),
        t in 1i64..=4,
        half_r in 0i64..=3,
    ) {
        let r = 2 * half_r;
        prop_assume!(r < 4 * t);
        let tree = TreeParams::new(p).unwrap();
        let measure = tree_conj_measure(tree, t, r).unwrap();
        let sphere = tree_sphere_size(tree, 2 * t - half_r).unwrap();
        let product = measure * Rational::from_integer(BigInt::from(sphere));
        prop_assert_eq!(product, Rational::one());
    }

    #[test]
    fn wedge_covolume_is_invariant_under_s_unit_scaling(
        coords in prop::collection::vec(rational(), 3),
        e in -5i64..=5,
    ) {
        // scaling a generator by the S-unit 3^e moves real and 3-adic norms
        // in opposite directions and leaves the product untouched
        prop_assume!(coords.iter().any(|c| !c.is_zero()));
        let s = SSet::new(&[3]).unwrap();
        let before = wedge_covolume(&s, std::slice::from_ref(&coords)).unwrap();
        let scaled: Vec<Rational> = coords.iter().map(|c| c * p_pow(3, e)).collect();
        let after = wedge_covolume(&s, &[scaled]).unwrap();
        prop_assert_eq!(
            after.finite_part.clone(),
            before.finite_part.clone() * p_pow(3, -e),
            "3-adic part must shrink by exactly the scaling unit"
        );
        // the total is computed from an exact rational square, so the
        // invariance holds to the last bit, not merely within a tolerance
        prop_assert_eq!(after.total.to_bits(), before.total.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn body_counts_are_monotone_in_the_real_radius(
        t_lo in 0.6f64..2.0,
        growth in 0.1f64..1.5,
        hi in 0.2f64..1.2,
    ) {
        let s = SSet::new(&[]).unwrap();
        let q = standard_form(&s, &StandardSpec::default_for_rank(3).unwrap()).unwrap();
        let omega = StarBody::ball(&s, 3);
        let ival = SInterval::new(
            &s,
            RealInterval::new(-0.3, hi).unwrap(),
            BTreeMap::new(),
        ).unwrap();
        let opts = CountOptions::default();
        let small = count_n(&q, &omega, &ival, &Radii::new(&s, t_lo, BTreeMap::new()).unwrap(), &opts).unwrap();
        let large = count_n(&q, &omega, &ival, &Radii::new(&s, t_lo + growth, BTreeMap::new()).unwrap(), &opts).unwrap();
        prop_assert!(small.count <= large.count, "{} > {}", small.count, large.count);
    }

    #[test]
    fn format_sig_round_trips_and_picks_notation_by_magnitude(
        mantissa in -1.0f64..1.0,
        exponent in -12i32..=14,
    ) {
        prop_assume!(mantissa.abs() > 1e-3);
        let x = mantissa * 10f64.powi(exponent);
        let text = format_sig(x, 12);
        let back: f64 = text.parse().unwrap();
        prop_assert!(
            (back - x).abs() <= 1e-10 * x.abs(),
            "{x} printed as {text}, parsed back to {back}"
        );
        let magnitude = x.abs();
        let scientific = text.contains('e');
        let expect_scientific = !(1e-4..1e12).contains(&magnitude);
        prop_assert_eq!(
            scientific,
            expect_scientific,
            "{} rendered as {} (|x| = {})", x, text, magnitude
        );
    }
}

#[test]
fn radius_vectors_reject_wrong_supports() {
    let s = SSet::new(&[3]).unwrap();
    assert!(Radii::new(&s, 1.0, BTreeMap::new()).is_err(), "missing finite radius");
    let mut extra = BTreeMap::new();
    extra.insert(3, FiniteRadius::Exp(0));
    extra.insert(5, FiniteRadius::Exp(0));
    assert!(Radii::new(&s, 1.0, extra).is_err(), "radius at a place outside S");
}
