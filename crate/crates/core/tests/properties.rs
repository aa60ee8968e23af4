use proptest::prelude::*;

use qbound_core::bounds::{AlphaEvaluator, BStarBands};
use qbound_core::solver::{point_mass, uniform_grid};
use qbound_core::{
    alpha_for_d, bstar_numeric, compute_u, conjugate_numeric, integrate, scale_d, sweep_delta,
    theorem1_certificate, CertificateConfig, ChainModel, Multipliers, PatternSearch, RateFunction,
    ReducedMatrix, ScalingFamily, ScalingRule, SignPattern, StateRate,
};

fn rate() -> BoxedStrategy<RateFunction> {
    prop_oneof![
        (0.0..5.0f64).prop_map(|v| RateFunction::constant(v).unwrap()),
        (0.0..5.0f64, -1.0..=1.0f64, 0.05..3.0f64, -3.0..3.0f64)
            .prop_map(|(b, a, f, p)| RateFunction::sinusoidal(b, a, f, p).unwrap()),
        (
            prop::collection::vec(0.1..3.0f64, 1..5),
            prop::collection::vec(0.0..5.0f64, 6)
        )
            .prop_map(|(gaps, vals)| {
                let breaks: Vec<f64> = gaps
                    .iter()
                    .scan(0.0, |acc, g| {
                        *acc += g;
                        Some(*acc)
                    })
                    .collect();
                let values = vals[..breaks.len() + 1].to_vec();
                RateFunction::piecewise(breaks, values).unwrap()
            }),
    ]
    .boxed()
}

fn constant_rate() -> BoxedStrategy<RateFunction> {
    (0.0..5.0f64)
        .prop_map(|v| RateFunction::constant(v).unwrap())
        .boxed()
}

fn multipliers() -> impl Strategy<Value = Multipliers> {
    prop_oneof![
        Just(Multipliers::Constant),
        (1usize..4).prop_map(|cap| Multipliers::LinearCapped { cap }),
        prop::collection::vec(0.5..2.0f64, 1..6)
            .prop_map(|values| Multipliers::Explicit { values }),
    ]
}

/// A model of any class with band `R <= 3`, built from `leaf` rates.
fn model_with(leaf: BoxedStrategy<RateFunction>) -> BoxedStrategy<ChainModel> {
    let batch = prop::collection::vec(leaf.clone(), 1..=3);
    prop_oneof![
        (leaf.clone(), leaf.clone(), multipliers(), multipliers()).prop_map(|(l, m, ml, mm)| {
            ChainModel::birth_death(StateRate::new(l, ml), StateRate::new(m, mm)).unwrap()
        }),
        (batch.clone(), leaf.clone(), multipliers()).prop_map(|(a, m, mm)| {
            ChainModel::batch_arrivals(a, StateRate::new(m, mm)).unwrap()
        }),
        (leaf.clone(), batch.clone(), multipliers()).prop_map(|(l, b, ml)| {
            ChainModel::batch_services(StateRate::new(l, ml), b).unwrap()
        }),
        (batch.clone(), batch).prop_map(|(a, b)| ChainModel::batch_both(a, b).unwrap()),
    ]
    .boxed()
}

fn any_model() -> BoxedStrategy<ChainModel> {
    model_with(rate())
}

fn tail_matrix(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if j >= i { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rate_integrals_are_additive(r in rate(), a in 0.0..40.0f64, b in 0.0..40.0f64, c in 0.0..40.0f64) {
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        let [s, u, t] = v;
        let whole = r.integrate(s, t).unwrap();
        let split = r.integrate(s, u).unwrap() + r.integrate(u, t).unwrap();
        prop_assert!((whole - split).abs() <= 1e-13 * whole.abs().max(1.0), "{whole} vs {split}");
    }

    #[test]
    fn column_sums_vanish_and_band_is_respected(m in any_model(), n in 4usize..60, t in 0.0..10.0f64) {
        let n = n.max(m.band());
        let a = m.generator(n, t).unwrap();
        let l = m.intensity_bound(t.max(1e-3), 16).max(1.0);
        let worst = a.column_sums().iter().fold(0.0f64, |w, s| w.max(s.abs()));
        prop_assert!(worst <= 1e-14 * l * n as f64, "{worst}");
        let dense = a.to_dense();
        for (i, row) in dense.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i.abs_diff(j) > m.band() {
                    prop_assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn batch_arrival_entries_do_not_depend_on_state(m in any_model(), t in 0.0..5.0f64) {
        let n = 30;
        let a = m.generator(n, t).unwrap();
        let has_batches = matches!(
            m.class(),
            qbound_core::ChainClass::II | qbound_core::ChainClass::IV
        );
        prop_assume!(has_batches);
        for k in 1..=m.band() {
            let first = a.get(5 + k, 5);
            for i in 5..n - 2 * m.band() {
                prop_assert_eq!(a.get(i + k, i), first);
            }
        }
    }

    #[test]
    fn conjugation_is_a_similarity(
        entries in prop::collection::vec(-3.0..3.0f64, 64),
        u in prop::collection::vec(-1.0..1.0f64, 8),
    ) {
        let n = 8;
        let b = nalgebra::DMatrix::from_row_slice(n, n, &entries);
        let bs = conjugate_numeric(&ReducedMatrix::from_dense(b.clone()));
        let lhs: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| bs.get(i + 1, j + 1) * u[j]).sum())
            .collect();
        // T^{-1} u = (u_1 - u_2, ..., u_{n-1} - u_n, u_n)
        let tinv_u: Vec<f64> = (0..n).map(|i| u[i] - u.get(i + 1).copied().unwrap_or(0.0)).collect();
        let b_rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| b[(i, j)]).collect()).collect();
        let rhs = matvec(&tail_matrix(n), &matvec(&b_rows, &tinv_u));
        for (x, y) in lhs.iter().zip(&rhs) {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn rescaling_keeps_the_band(m in model_with(constant_rate()), delta in 1.01..3.0f64, size in 6usize..16) {
        let size = size.max(m.band() + 2);
        let bstar = bstar_numeric(&m, size, 0.0).unwrap();
        let d: Vec<f64> = (0..size).map(|k| delta.powi(k as i32)).collect();
        let scaled = scale_d(&bstar, &d).unwrap();
        let scale = (1..=size).map(|j| bstar.get(j, j).abs()).fold(1.0, f64::max);
        prop_assert!(bstar.max_off_band(m.band()) <= 1e-13 * scale);
        for i in 1..=size {
            for j in 1..=size {
                if i.abs_diff(j) > m.band() {
                    let bound = 1e-13 * scale * (d[i - 1] / d[j - 1]).max(1.0);
                    prop_assert!(scaled.get(i, j).abs() <= bound);
                }
            }
        }
    }

    #[test]
    fn alpha_ignores_global_scale_and_sign(
        m in any_model(),
        signs in prop::collection::vec(prop::bool::ANY, 10),
        mags in prop::collection::vec(0.2..5.0f64, 10),
        c in prop_oneof![-10.0..-0.1f64, 0.1..10.0f64],
        t in 0.0..5.0f64,
    ) {
        let d: Vec<f64> = signs.iter().zip(&mags).map(|(&s, &g)| if s { g } else { -g }).collect();
        let base = alpha_for_d(&m, 10, &d, t).unwrap();
        let scaled: Vec<f64> = d.iter().map(|x| c * x).collect();
        let other = alpha_for_d(&m, 10, &scaled, t).unwrap();
        prop_assert!((base - other).abs() <= 1e-10 * base.abs().max(1.0), "{base} vs {other}");
    }

    #[test]
    fn pair_service_alpha_dominates_closed_form(
        lambda in 0.0..3.0f64,
        mu in 0.0..6.0f64,
        delta in 1.05..4.0f64,
        size in 4usize..=14,
    ) {
        let m = ChainModel::pair_service(
            RateFunction::constant(lambda).unwrap(),
            RateFunction::constant(mu).unwrap(),
        ).unwrap();
        let family = ScalingFamily::satin(delta).unwrap();
        let a = AlphaEvaluator::new(&m, family, size, PatternSearch::Exhaustive).unwrap().eval(0.0);
        let closed = qbound_core::example_alpha(
            &RateFunction::constant(lambda).unwrap(),
            &RateFunction::constant(mu).unwrap(),
            delta,
            0.0,
        ).unwrap();
        prop_assert!(a.value >= closed - 1e-9, "{} < {closed}", a.value);
    }

    #[test]
    fn tail_norm_controls_total_variation(
        a in prop::collection::vec(0.0..1.0f64, 12),
        b in prop::collection::vec(0.0..1.0f64, 12),
    ) {
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        prop_assume!(sa > 0.0 && sb > 0.0);
        let pa: Vec<f64> = a.iter().map(|v| v / sa).collect();
        let pb: Vec<f64> = b.iter().map(|v| v / sb).collect();
        let u = compute_u(&pa, &pb).unwrap();
        let tv: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum();
        let un: f64 = u.iter().map(|x| x.abs()).sum();
        prop_assert!(tv <= 2.0 * un + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rates_stay_nonnegative(r in rate(), horizon in 1.0..100.0f64, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let t = rng.random_range(0.0..=horizon);
            prop_assert!(r.eval(t).unwrap() >= 0.0);
        }
    }

    #[test]
    fn essentially_nonnegative_models_are_minimized_by_positive_pattern(
        l in 0.0..3.0f64,
        m in 0.0..5.0f64,
        mut b in prop::collection::vec(0.0..3.0f64, 1..=3),
        mut arrivals in prop::collection::vec(0.0..2.0f64, 1..=3),
        which in 0usize..3,
        delta in 1.05..3.0f64,
    ) {
        // nonincreasing jump rates keep the truncation edge nonnegative too
        b.sort_by(|x, y| y.total_cmp(x));
        arrivals.sort_by(|x, y| y.total_cmp(x));
        let c = |v: f64| RateFunction::constant(v).unwrap();
        let model = match which {
            0 => ChainModel::simple_birth_death(c(l), c(m)).unwrap(),
            1 => ChainModel::batch_arrivals(arrivals.into_iter().map(c).collect(), StateRate::uniform(c(m))).unwrap(),
            _ => ChainModel::batch_services(StateRate::uniform(c(l)), b.into_iter().map(c).collect()).unwrap(),
        };
        let size = 10;
        let bands = BStarBands::new(&model, size).unwrap();
        prop_assert!(bands.essentially_nonnegative(0.0));
        let family = ScalingFamily::geometric(delta).unwrap();
        let eval = AlphaEvaluator::new(&model, family, size, PatternSearch::Exhaustive).unwrap();
        let star = eval.eval(0.0).value;
        let positive = eval.alpha_on_pattern(&SignPattern::all_positive(size), 0.0);
        prop_assert!((star - positive).abs() <= 1e-12 * star.abs().max(1.0), "{star} vs {positive}");
    }

    #[test]
    fn envelope_holds_on_random_grid_pairs(
        base in 0.5..2.0f64,
        amp in 0.0..1.0f64,
        freq in 0.5..2.0f64,
        mu in 2.0..6.0f64,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let m = ChainModel::pair_service(
            RateFunction::sinusoidal(base, amp, freq, 0.0).unwrap(),
            RateFunction::constant(mu).unwrap(),
        ).unwrap();
        let cert = theorem1_certificate(
            &m,
            ScalingFamily::satin(2.0).unwrap(),
            &CertificateConfig { size: 6, resolution: 64, ..Default::default() },
        ).unwrap();
        let p = cert.horizon_profile(5.0 / freq, 64);
        let (times, cum) = (p.times(), p.cumulative());
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        for _ in 0..1000 {
            let i = rng.random_range(0..times.len());
            let j = rng.random_range(i..times.len());
            let lhs = (-(cum[j] - cum[i])).exp();
            let rhs = cert.m * (-cert.beta * (times[j] - times[i])).exp() * (1.0 + 1e-9);
            prop_assert!(lhs <= rhs, "s={} t={}: {lhs} > {rhs}", times[i], times[j]);
        }
    }

    #[test]
    fn enlarging_the_delta_grid_never_lowers_the_best_beta(
        lambda in 0.2..2.0f64,
        ratio in 1.5..6.0f64,
        grid in prop::collection::vec(1.05..5.0f64, 1..4),
        extra in prop::collection::vec(1.05..5.0f64, 1..3),
    ) {
        let c = |v: f64| RateFunction::constant(v).unwrap();
        let m = ChainModel::pair_service(c(lambda), c(lambda * ratio)).unwrap();
        let cfg = CertificateConfig { size: 8, ..Default::default() };
        let best = |g: &[f64]| {
            sweep_delta(&m, ScalingRule::SatinExample, &cfg, g)
                .unwrap()
                .iter()
                .map(|r| r.beta)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let mut larger = grid.clone();
        larger.extend(extra);
        prop_assert!(best(&larger) >= best(&grid));
    }

    #[test]
    fn forward_solution_conserves_mass_and_contracts(m in any_model(), start in 0usize..20) {
        let n = 40;
        let grid = uniform_grid(4.0, 40);
        let pa = integrate(&m, n, &point_mass(n, start), &grid, 1e-10).unwrap();
        let pb = integrate(&m, n, &point_mass(n, 0), &grid, 1e-10).unwrap();
        prop_assert!(pa.max_drift() <= 1e-9);
        prop_assert!(pa.min_entry() >= -1e-12);
        let gaps: Vec<f64> = pa.states.iter().zip(&pb.states)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
            .collect();
        for w in gaps.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }
}
