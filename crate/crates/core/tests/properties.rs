//! Property tests for the measure-level primitives and the file format.

use proptest::prelude::*;

use pqlab::instance::{gen_random, RandomParams};
use pqlab::interp::marcinkiewicz_split;
use pqlab::io::{parse_instance, render_instance};
use pqlab::measure::{
    bracket, conjugate_exponent, distribution, inner, norm_s, s_power, weak_quasinorm, DataPair,
    ExponentPair, Field, MeasureSpace, ScalarField,
};

fn finite_vec(len: usize, mag: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-mag..mag, len)
}

fn weights_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1f64..3.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn s_power_round_trip_and_homogeneity(
        v in finite_vec(3, 10.0),
        p in 1.05f64..4.0,
        lambda in 0.0f64..3.0,
    ) {
        let q = conjugate_exponent(p).unwrap();
        let forward = s_power(&v, p - 1.0).unwrap();
        let back = s_power(&forward, q - 1.0).unwrap();
        let scale = v.iter().map(|x| x.abs()).fold(1e-300, f64::max);
        for (x, y) in v.iter().zip(&back) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
        // |v^s| = |v|^s and positive homogeneity of degree s.
        let s = p - 1.0;
        let norm_v = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_fwd = forward.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm_fwd - norm_v.powf(s)).abs() <= 1e-10 * norm_v.powf(s).max(1e-300));
        let scaled = s_power(&v.iter().map(|x| lambda * x).collect::<Vec<_>>(), s).unwrap();
        for (a, b) in scaled.iter().zip(&forward) {
            prop_assert!((a - lambda.powf(s) * b).abs() <= 1e-9 * (1.0 + lambda.powf(s) * b.abs()));
        }
    }

    #[test]
    fn hoelder_inequality(
        weights in weights_vec(5),
        u in finite_vec(10, 5.0),
        v in finite_vec(10, 5.0),
        p in 1.05f64..4.0,
    ) {
        let sp = MeasureSpace::new(weights, 2).unwrap();
        let u = Field::new(sp.clone(), u).unwrap();
        let v = Field::new(sp.clone(), v).unwrap();
        let q = conjugate_exponent(p).unwrap();
        let lhs = inner(&u, &v).unwrap().abs();
        let rhs = norm_s(&u, p).unwrap() * norm_s(&v, q).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn layer_cake_identity(
        weights in weights_vec(6),
        raw in prop::collection::vec(0.0f64..8.0, 6),
        tau in 1.0f64..3.0,
    ) {
        let sp = MeasureSpace::new(weights, 1).unwrap();
        let g = ScalarField::new(sp, raw).unwrap();
        let mut cuts: Vec<f64> = g.values().to_vec();
        cuts.push(0.0);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut rhs = 0.0;
        for w in cuts.windows(2) {
            rhs += distribution(&g, w[0]).unwrap() * (w[1].powf(tau) - w[0].powf(tau));
        }
        let lhs = g.power_integral(tau);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1e-300));
    }

    #[test]
    fn chebyshev_weak_le_strong(
        weights in weights_vec(6),
        raw in prop::collection::vec(0.0f64..8.0, 6),
        lambda in 0.2f64..2.5,
    ) {
        let sp = MeasureSpace::new(weights, 1).unwrap();
        let g = ScalarField::new(sp, raw).unwrap();
        let weak = weak_quasinorm(&g, lambda).unwrap();
        let strong = g.power_integral(lambda);
        prop_assert!(weak <= strong * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn split_is_exact_with_disjoint_supports(
        weights in weights_vec(5),
        a in finite_vec(10, 4.0),
        b in finite_vec(10, 4.0),
        p in 1.05f64..4.0,
        pick in 0.0f64..1.0,
    ) {
        let sp = MeasureSpace::new(weights, 2).unwrap();
        let f = DataPair::new(
            Field::new(sp.clone(), a).unwrap(),
            Field::new(sp.clone(), b).unwrap(),
            ExponentPair::new(p).unwrap(),
        ).unwrap();
        let t = bracket(&f).max_value() * pick;
        let s = marcinkiewicz_split(&f, t).unwrap();
        let sum = s.upper.try_add(&s.lower).unwrap();
        prop_assert_eq!(sum.a.values(), f.a.values());
        prop_assert_eq!(sum.b.values(), f.b.values());
        let bu = bracket(&s.upper);
        let bl = bracket(&s.lower);
        for (u, l) in bu.values().iter().zip(bl.values()) {
            prop_assert!(*u == 0.0 || *l == 0.0);
        }
        for v in bl.values() {
            prop_assert!(*v <= t);
        }
        for v in bu.values() {
            prop_assert!(*v == 0.0 || *v > t);
        }
    }

    #[test]
    fn distribution_is_monotone_in_threshold(
        weights in weights_vec(6),
        raw in prop::collection::vec(0.0f64..8.0, 6),
        t1 in 0.0f64..8.0,
        t2 in 0.0f64..8.0,
    ) {
        let sp = MeasureSpace::new(weights, 1).unwrap();
        let g = ScalarField::new(sp, raw).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(distribution(&g, lo).unwrap() >= distribution(&g, hi).unwrap());
    }

    #[test]
    fn instance_files_round_trip(
        points in 1usize..8,
        dim in 1usize..3,
        m_frac in 0.0f64..1.0,
        p in 1.05f64..4.0,
        seed in any::<u64>(),
        unit_w in any::<bool>(),
        unit_c in any::<bool>(),
    ) {
        let m = ((points * dim) as f64 * m_frac) as usize;
        let file = gen_random(
            RandomParams {
                points,
                dim,
                subspace_dim: m,
                unit_weights: unit_w,
                unit_coefficient: unit_c,
            },
            p,
            seed,
        ).unwrap();
        let text = render_instance(&file);
        let parsed = parse_instance(&text).unwrap();
        prop_assert_eq!(&parsed, &file);
        prop_assert_eq!(render_instance(&parsed), text);
    }
}
