mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use common::*;
use rcv_core::linalg::dot;
use rcv_core::morpho::{glcm, haralick, region_eccentricity, region_euler};
use rcv_core::rcvfit::{fit_rcv, r_squared_on, unit_direction, FitOptions};
use rcv_core::scoring::{br_score, normalize_br, pearson, sensitivity, tcav_score, SensitivitySet};
use rcv_core::stats::special::student_t_two_sided;
use rcv_core::stats::{
    corrected_threshold, evaluate_significance, one_sample_ttest, run_repetitions,
    ConceptRepetitions, RepetitionConfig, RepetitionInputs,
};
use rcv_core::tensorio::{read_npy, write_npy, Dtype, Grid, ReadOptions, Tensor};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        -1.0f64..1.0,
        prop::num::f64::NORMAL,
        prop::num::f64::SUBNORMAL,
        Just(0.0),
        Just(-0.0),
    ]
}

fn shape() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..6, 0..4)
}

fn tensor() -> impl Strategy<Value = Tensor> {
    shape().prop_flat_map(|s| {
        let n = s.iter().product::<usize>();
        prop::collection::vec(finite(), n).prop_map(move |d| Tensor::new(s.clone(), d).unwrap())
    })
}

fn roundtrip(t: &Tensor) -> Tensor {
    let mut buf = Vec::new();
    write_npy(t, &mut buf).unwrap();
    read_npy(&mut buf.as_slice(), ReadOptions::default()).unwrap()
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn mask_grid(h: usize, w: usize) -> impl Strategy<Value = Grid<bool>> {
    prop::collection::vec(any::<bool>(), h * w).prop_map(move |d| Grid::new(h, w, d).unwrap())
}

fn patch() -> impl Strategy<Value = (Grid<u32>, Grid<bool>)> {
    (2usize..10, 2usize..10).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(0u32..8, h * w).prop_map(move |d| Grid::new(h, w, d).unwrap()),
            mask_grid(h, w),
        )
    })
}

fn offset() -> impl Strategy<Value = (isize, isize)> {
    (-2isize..=2, -2isize..=2).prop_filter("nonzero", |o| *o != (0, 0))
}

fn translate(m: &Grid<bool>, dy: usize, dx: usize) -> Grid<bool> {
    Grid::from_fn(m.height() + dy, m.width() + dx, |r, c| {
        r >= dy && c >= dx && m.get(r - dy, c - dx)
    })
}

fn rotate(m: &Grid<bool>) -> Grid<bool> {
    let h = m.height();
    Grid::from_fn(m.width(), h, |r, c| m.get(h - 1 - c, r))
}

fn sens(values: Vec<f64>) -> SensitivitySet {
    let n = values.len();
    SensitivitySet {
        values,
        concept_name: "c".into(),
        layer_id: "layer".into(),
        sample_ids: ids("t", n),
    }
}

fn rows(k: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), k)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn npy_roundtrip_is_identity(t in tensor()) {
        let back = roundtrip(&t);
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert_eq!(bits(back.data()), bits(t.data()));
    }

    #[test]
    fn npy_f4_roundtrip(s in shape(), seed in any::<u64>()) {
        let n = s.iter().product::<usize>();
        let mut r = rng(seed);
        let data: Vec<f64> = (0..n).map(|_| normal(&mut r) as f32 as f64).collect();
        let t = Tensor::new(s, data).unwrap().with_dtype(Dtype::F4);
        let back = roundtrip(&t);
        prop_assert_eq!(back.dtype(), Dtype::F4);
        prop_assert_eq!(bits(back.data()), bits(t.data()));
    }

    #[test]
    fn glcm_is_a_distribution((img, mask) in patch(), off in offset(), symmetric in any::<bool>()) {
        if let Ok(g) = glcm(&img, &mask, 8, off, symmetric) {
            let total: f64 = g.probabilities().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            if symmetric {
                for i in 0..8 {
                    for j in 0..8 {
                        prop_assert_eq!(g.count(i, j), g.count(j, i));
                    }
                }
            }
            let h = haralick(&g);
            let nonzero = g.probabilities().iter().filter(|p| **p > 0.0).count();
            prop_assert!(h.asm > 0.0 && h.asm <= 1.0);
            prop_assert_eq!(h.asm == 1.0, nonzero == 1);
            let all_equal = (0..8).all(|i| (0..8).all(|j| i == j || g.count(i, j) == 0));
            prop_assert_eq!(h.contrast == 0.0, all_equal);
            if let Some(c) = h.correlation {
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn eccentricity_translation_and_rotation(m in (1usize..9, 1usize..9).prop_flat_map(|(h, w)| mask_grid(h, w)),
                                             dy in 0usize..4, dx in 0usize..4) {
        prop_assume!(m.data().iter().any(|b| *b));
        let e = region_eccentricity(&m).unwrap();
        prop_assert_eq!(region_eccentricity(&translate(&m, dy, dx)).unwrap(), e);
        let rotated = region_eccentricity(&rotate(&m)).unwrap();
        prop_assert!((rotated - e).abs() <= 1e-12, "{} vs {}", rotated, e);
        prop_assert_eq!(region_euler(&translate(&m, dy, dx)), region_euler(&m));
    }

    #[test]
    fn euler_is_additive_over_separated_masks(a in (1usize..6, 1usize..6).prop_flat_map(|(h, w)| mask_grid(h, w)),
                                              b in (1usize..6, 1usize..6).prop_flat_map(|(h, w)| mask_grid(h, w)),
                                              gap in 2usize..4) {
        let (wa, wb) = (a.width(), b.width());
        let h = a.height().max(b.height());
        let joined = Grid::from_fn(h, wa + gap + wb, |r, c| {
            if c < wa {
                r < a.height() && a.get(r, c)
            } else if c >= wa + gap {
                r < b.height() && b.get(r, c - wa - gap)
            } else {
                false
            }
        });
        prop_assert_eq!(region_euler(&joined), region_euler(&a) + region_euler(&b));
    }

    #[test]
    fn pearson_matches_direct_formula(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..100)) {
        let (c, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let n = c.len() as f64;
        let (mc, mf) = (c.iter().sum::<f64>() / n, f.iter().sum::<f64>() / n);
        let sxy: f64 = c.iter().zip(&f).map(|(a, b)| (a - mc) * (b - mf)).sum();
        let sxx: f64 = c.iter().map(|a| (a - mc).powi(2)).sum();
        let syy: f64 = f.iter().map(|b| (b - mf).powi(2)).sum();
        prop_assume!(sxx > 0.0 && syy > 0.0);
        let rho = sxy / (sxx * syy).sqrt();
        let r = pearson(&c, &f).unwrap();
        prop_assert!((r.rho - rho).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0).contains(&r.rho));
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn explanation_continuity(x in rows(12, 4), c in prop::collection::vec(-5.0f64..5.0, 12),
                              g in prop::collection::vec(-2.0f64..2.0, 4),
                              delta in prop::collection::vec(-0.1f64..0.1, 4)) {
        let rcv = fit_rcv(&acts(&x), &measures("c", &c), FitOptions::default()).unwrap();
        prop_assume!(!rcv.degenerate && rcv.v.iter().any(|v| *v != 0.0));
        let moved: Vec<f64> = g.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let s = sensitivity(&grads(&[g.clone(), moved]), &rcv).unwrap();
        let eps = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((s.values[0] - s.values[1]).abs() <= eps + 1e-12);
        let unit = unit_direction(&rcv).unwrap();
        prop_assert!((dot(&unit, &unit).sqrt() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sensitivity_ignores_rcv_scale(x in rows(10, 3), c in prop::collection::vec(-5.0f64..5.0, 10),
                                     g in rows(6, 3), a in 1e-3f64..1e3) {
        let mut rcv = fit_rcv(&acts(&x), &measures("c", &c), FitOptions::default()).unwrap();
        prop_assume!(rcv.v.iter().any(|v| *v != 0.0));
        let s1 = sensitivity(&grads(&g), &rcv).unwrap();
        rcv.v.iter_mut().for_each(|v| *v *= a);
        let s2 = sensitivity(&grads(&g), &rcv).unwrap();
        for (p, q) in s1.values.iter().zip(&s2.values) {
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0));
        }
    }

    #[test]
    fn br_sign_coherence(s in prop::collection::vec(1e-3f64..10.0, 2..30), r2 in 1e-3f64..1.0) {
        prop_assert!(br_score(&sens(s.clone()), r2).unwrap().br_raw > 0.0);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!(br_score(&sens(neg), r2).unwrap().br_raw < 0.0);
    }

    #[test]
    fn tcav_in_unit_interval(s in prop::collection::vec(-10.0f64..10.0, 1..50)) {
        let t = tcav_score(&sens(s.clone())).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        let positives = s.iter().filter(|v| **v > 0.0).count() as f64;
        prop_assert_eq!(t, positives / s.len() as f64);
    }

    #[test]
    fn normalize_br_is_order_independent(values in prop::collection::vec(-10.0f64..10.0, 1..8)) {
        prop_assume!(values.iter().any(|v| *v != 0.0));
        let forward: BTreeMap<String, f64> = values.iter().enumerate().map(|(i, v)| (format!("c{i}"), *v)).collect();
        let reversed: BTreeMap<String, f64> = values.iter().enumerate().rev().map(|(i, v)| (format!("c{i}"), *v)).collect();
        prop_assert_eq!(normalize_br(&forward).unwrap(), normalize_br(&reversed).unwrap());
    }

    #[test]
    fn exact_interpolation_when_underdetermined(d in 3usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = d - 1;
        let x: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| normal(&mut r)).collect()).collect();
        let c: Vec<f64> = (0..k).map(|_| normal(&mut r)).collect();
        let rcv = fit_rcv(&acts(&x), &measures("c", &c), FitOptions::default()).unwrap();
        prop_assert!((rcv.r_squared - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn affine_equivariance_of_v(k in 5usize..30, d in 1usize..8, seed in any::<u64>(),
                                a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0], b in -50.0f64..50.0) {
        let mut r = rng(seed);
        let x: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| normal(&mut r)).collect()).collect();
        let c: Vec<f64> = (0..k).map(|_| normal(&mut r)).collect();
        let base = fit_rcv(&acts(&x), &measures("c", &c), FitOptions::default()).unwrap();
        let moved: Vec<f64> = c.iter().map(|v| a * v + b).collect();
        let fit = fit_rcv(&acts(&x), &measures("c", &moved), FitOptions::default()).unwrap();
        let scaled: Vec<f64> = base.v.iter().map(|v| a * v).collect();
        prop_assert!(rel_err(&fit.v, &scaled) <= 1e-10);
        prop_assert!((fit.r_squared - base.r_squared).abs() <= 1e-10);
    }

    #[test]
    fn r_squared_matches_direct_formula(x in rows(15, 3), c in prop::collection::vec(-5.0f64..5.0, 15),
                                        v in prop::collection::vec(-2.0f64..2.0, 3), b in -1.0f64..1.0) {
        let mut rcv = fit_rcv(&acts(&x), &measures("c", &c), FitOptions::default()).unwrap();
        prop_assume!(!rcv.degenerate);
        rcv.v = v.clone();
        rcv.intercept = b;
        let mean = c.iter().sum::<f64>() / 15.0;
        let ss_tot: f64 = c.iter().map(|y| (y - mean).powi(2)).sum();
        let ss_res: f64 = x.iter().zip(&c).map(|(row, y)| (y - dot(row, &v) - b).powi(2)).sum();
        let direct = 1.0 - ss_res / ss_tot;
        let got = r_squared_on(&rcv, &acts(&x), &measures("c", &c)).unwrap();
        prop_assert!((got - direct).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn p_value_bounded_and_monotone(df in 1u32..200, t1 in 0.0f64..50.0, t2 in 0.0f64..50.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (p_lo, p_hi) = (student_t_two_sided(lo, df as f64), student_t_two_sided(hi, df as f64));
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        prop_assert!(p_hi <= p_lo);
        prop_assert_eq!(student_t_two_sided(-hi, df as f64), p_hi);
    }

    #[test]
    fn ttest_p_in_unit_interval(xs in prop::collection::vec(-5.0f64..5.0, 2..40), null in -1.0f64..1.0) {
        let t = one_sample_ttest(&xs, null).unwrap();
        prop_assert!((0.0..=1.0).contains(&t.p));
    }

    #[test]
    fn bonferroni_monotonicity(lists in prop::collection::vec(prop::collection::vec(-1.0f64..1.5, 5), 1..6),
                               m in 1usize..20, extra in 1usize..20) {
        let reps: Vec<ConceptRepetitions> = lists.iter().enumerate().map(|(i, l)| ConceptRepetitions {
            concept_name: format!("c{i}"),
            tcav: l.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            br_raw: l.clone(),
            r_squared: vec![0.5; l.len()],
        }).collect();
        let mut cfg = RepetitionConfig { n_comparisons: Some(m), alpha: 0.05, ..RepetitionConfig::default() };
        let few = evaluate_significance(&reps, &cfg).unwrap();
        cfg.n_comparisons = Some(m + extra);
        let many = evaluate_significance(&reps, &cfg).unwrap();
        for (a, b) in few.iter().zip(&many) {
            prop_assert!(!b.reject_null || a.reject_null);
        }
        prop_assert!(corrected_threshold(0.05, m + extra) < corrected_threshold(0.05, m));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn repetitions_are_deterministic(seed in any::<u64>(), data_seed in any::<u64>()) {
        let mut r = rng(data_seed);
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..5).map(|_| normal(&mut r)).collect()).collect();
        let c: Vec<f64> = x.iter().map(|row| row[0] + 0.3 * normal(&mut r)).collect();
        let g: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| normal(&mut r)).collect()).collect();
        let (a, m, gs) = (acts(&x), [measures("c", &c)], grads(&g));
        let inputs = RepetitionInputs { concept_acts: &a, measures: &m, test_grads: &gs, fit: FitOptions::default() };
        let cfg = RepetitionConfig { n_repetitions: 5, seed, ..RepetitionConfig::default() };
        let first = evaluate_significance(&run_repetitions(&inputs, &cfg).unwrap(), &cfg).unwrap();
        let second = evaluate_significance(&run_repetitions(&inputs, &cfg).unwrap(), &cfg).unwrap();
        prop_assert_eq!(format!("{first:?}"), format!("{second:?}"));
        for (p, q) in first.iter().zip(&second) {
            prop_assert_eq!(bits(&p.scores), bits(&q.scores));
            prop_assert_eq!(p.p_value.to_bits(), q.p_value.to_bits());
        }
    }
}

#[test]
fn npy_roundtrip_of_1000_random_values() {
    let mut r = rng(56);
    let data: Vec<f64> = (0..1000).map(|_| normal(&mut r) * 1e3).collect();
    let t = Tensor::new(vec![10, 100], data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.npy");
    rcv_core::tensorio::write_tensor(&t, &path).unwrap();
    let back = rcv_core::tensorio::read_tensor(&path).unwrap();
    assert_eq!(back.shape(), [10, 100]);
    assert_eq!(bits(back.data()), bits(t.data()));
}
