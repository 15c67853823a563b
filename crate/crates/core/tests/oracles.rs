mod common;

use rand::Rng;

use common::*;
use rcv_core::linalg::Matrix;
use rcv_core::morpho::{glcm, haralick, patch_concept_measures, ExtractOptions};
use rcv_core::pipeline::DemoConfig;
use rcv_core::scoring::pearson;
use rcv_core::stats::one_sample_ttest;
use rcv_core::tensorio::{Grid, MaskedImage};
use rcv_core::toynet::{make_synthetic, SyntheticSpec, ToyNet, TrainOptions};

#[test]
fn forward_matches_step_by_step_oracle() {
    let mut r = rng(477);
    for _ in 0..50 {
        let net = if r.random_bool(0.5) {
            random_net(&mut r)
        } else {
            ToyNet::new(r.random_range(1..10), &[7, 5, 3], r.random()).unwrap()
        };
        let x: Vec<f64> = (0..net.input_dim()).map(|_| 2.0 * normal(&mut r)).collect();
        let fwd = net.forward(&x).unwrap();
        let (acts, f) = forward_oracle(&net, &x);
        assert!((fwd.f - f).abs() <= 1e-12);
        assert!(fwd.f > 0.0 && fwd.f < 1.0);
        for (a, b) in fwd.activations.iter().zip(&acts) {
            assert!(rel_err(a, b) <= 1e-12 || a == b);
        }
    }
}

#[test]
fn gradient_matches_finite_differences_with_default_step() {
    let mut r = rng(486);
    for _ in 0..100 {
        let net = random_net(&mut r);
        let x: Vec<f64> = (0..net.input_dim()).map(|_| normal(&mut r)).collect();
        for layer in net.layer_ids() {
            let g = net.grad_wrt_layer(&x, layer).unwrap();
            let fd = fd_grad(&net, &x, layer, 1e-5);
            assert!(rel_err(&g, &fd) <= 1e-5, "{layer}: {g:?} vs {fd:?}");
        }
    }
}

#[test]
fn gradient_chain_consistency() {
    let mut r = rng(508);
    for _ in 0..50 {
        let net = random_net(&mut r);
        let ids = net.layer_ids().to_vec();
        if ids.len() < 2 {
            continue;
        }
        let x: Vec<f64> = (0..net.input_dim()).map(|_| normal(&mut r)).collect();
        let fwd = net.forward(&x).unwrap();
        for l in 0..ids.len() - 1 {
            let upper = net.grad_wrt_layer(&x, &ids[l + 1]).unwrap();
            let lower = net.grad_wrt_layer(&x, &ids[l]).unwrap();
            let layer = &net.hidden()[l + 1];
            let z = &fwd.pre_activations[l + 1];
            let manual: Vec<f64> = (0..layer.weights.cols())
                .map(|j| {
                    (0..layer.weights.rows())
                        .filter(|&i| z[i] > 0.0)
                        .map(|i| upper[i] * layer.weights.get(i, j))
                        .sum()
                })
                .collect();
            assert!(rel_err(&lower, &manual) <= 1e-12 || lower == manual);
        }
    }
}

#[test]
fn training_separates_one_dimensional_data() {
    let mut r = rng(493);
    let xs: Vec<f64> = (0..400)
        .map(|_| {
            let v: f64 = r.random_range(0.1..2.0);
            if r.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let labels: Vec<f64> = xs
        .iter()
        .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let inputs = Matrix::new(xs.len(), 1, xs);
    let mut net = ToyNet::new(1, &[8], 3).unwrap();
    let opts = TrainOptions {
        epochs: 40,
        ..TrainOptions::default()
    };
    let report = net.train(&inputs, &labels, &opts, 4).unwrap();
    assert!(report.losses.last().unwrap() < &report.losses[0]);
    let preds = net.predict_all(&inputs).unwrap();
    let correct = preds
        .iter()
        .zip(&labels)
        .filter(|(p, y)| (**p > 0.5) == (**y == 1.0))
        .count();
    let accuracy = correct as f64 / labels.len() as f64;
    assert!(accuracy >= 0.95, "accuracy {accuracy}");

    let mut again = ToyNet::new(1, &[8], 3).unwrap();
    again.train(&inputs, &labels, &opts, 4).unwrap();
    assert_eq!(again, net);
}

fn check_concept_correlations(spec: &SyntheticSpec, seed: u64) {
    let data = make_synthetic(spec, 2000, seed).unwrap();
    let causal = pearson(&data.concept_values[&spec.causal], &data.labels).unwrap();
    assert!(causal.rho > 0.5, "causal rho {}", causal.rho);
    for c in spec.concepts.iter().filter(|c| c.name != spec.causal) {
        let rho = pearson(&data.concept_values[&c.name], &data.labels)
            .unwrap()
            .rho;
        assert!(rho.abs() < 0.1, "{} rho {rho}", c.name);
    }
}

#[test]
fn synthetic_concepts_have_planted_correlations() {
    for seed in 0..3 {
        check_concept_correlations(&SyntheticSpec::default(), seed);
        check_concept_correlations(&DemoConfig::default().synthetic, seed);
    }
}

#[test]
fn null_world_labels_ignore_concepts() {
    let spec = SyntheticSpec {
        slope: 0.0,
        ..SyntheticSpec::default()
    };
    let data = make_synthetic(&spec, 2000, 11).unwrap();
    for c in &spec.concepts {
        let rho = pearson(&data.concept_values[&c.name], &data.labels)
            .unwrap()
            .rho;
        assert!(rho.abs() < 0.1, "{} rho {rho}", c.name);
    }
}

#[test]
fn uniform_noise_texture_is_uncorrelated() {
    let mut r = rng(166);
    let img = Grid::from_fn(128, 128, |_, _| r.random_range(0..8u32));
    let mask = Grid::filled(128, 128, true);
    for off in [(0, 1), (1, 0), (1, 1), (1, -1)] {
        let h = haralick(&glcm(&img, &mask, 8, off, true).unwrap());
        let c = h.correlation.unwrap();
        assert!(c.abs() < 0.05, "{off:?}: {c}");
    }
}

#[test]
fn ttest_detects_shifted_mean() {
    let mut r = rng(405);
    let xs: Vec<f64> = (0..30).map(|_| 0.5 + 0.01 * normal(&mut r)).collect();
    let t = one_sample_ttest(&xs, 0.0).unwrap();
    assert!(t.p < 1e-10);
    assert!((t.p - t_two_sided_series(t.t, 29)).abs() <= 1e-12);
}

#[test]
fn pearson_hand_value() {
    let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((r.rho - 0.8).abs() <= 1e-12);
}

/// Components (8-connected) minus holes (4-connected background components
/// not touching the border) by flood fill.
fn euler_flood(mask: &Grid<bool>) -> i64 {
    let (h, w) = (mask.height() as isize + 2, mask.width() as isize + 2);
    let at = |r: isize, c: isize| r >= 1 && c >= 1 && mask.get_signed(r - 1, c - 1) == Some(true);
    let count = |fg: bool, eight: bool| {
        let mut seen = vec![false; (h * w) as usize];
        let mut n = 0;
        for r0 in 0..h {
            for c0 in 0..w {
                if at(r0, c0) != fg || seen[(r0 * w + c0) as usize] {
                    continue;
                }
                n += 1;
                let mut stack = vec![(r0, c0)];
                seen[(r0 * w + c0) as usize] = true;
                while let Some((r, c)) = stack.pop() {
                    for dr in -1..=1isize {
                        for dc in -1..=1isize {
                            if (dr, dc) == (0, 0) || (!eight && dr != 0 && dc != 0) {
                                continue;
                            }
                            let (rr, cc) = (r + dr, c + dc);
                            if rr < 0 || cc < 0 || rr >= h || cc >= w {
                                continue;
                            }
                            let i = (rr * w + cc) as usize;
                            if !seen[i] && at(rr, cc) == fg {
                                seen[i] = true;
                                stack.push((rr, cc));
                            }
                        }
                    }
                }
            }
        }
        n
    };
    count(true, true) - (count(false, false) - 1)
}

fn eccentricity_float(mask: &Grid<bool>) -> f64 {
    let pts: Vec<(f64, f64)> = (0..mask.height())
        .flat_map(|r| (0..mask.width()).map(move |c| (r, c)))
        .filter(|&(r, c)| mask.get(r, c))
        .map(|(r, c)| (r as f64, c as f64))
        .collect();
    let n = pts.len() as f64;
    let (mr, mc) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let a = pts.iter().map(|p| (p.0 - mr).powi(2)).sum::<f64>() / n;
    let c = pts.iter().map(|p| (p.1 - mc).powi(2)).sum::<f64>() / n;
    let b = pts.iter().map(|p| (p.0 - mr) * (p.1 - mc)).sum::<f64>() / n;
    let root = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    let (l1, l2) = ((a + c) / 2.0 + root, (a + c) / 2.0 - root);
    if l1 <= 0.0 {
        0.0
    } else {
        (1.0 - l2 / l1).max(0.0).sqrt()
    }
}

#[test]
fn patch_measures_match_per_instance_reference() {
    let mut r = rng(175);
    let opts = ExtractOptions::default();
    let max_value = 255u32;
    let mut checked = 0;
    for case in 0..30 {
        let (h, w) = (r.random_range(8..16), r.random_range(8..16));
        let image = Grid::from_fn(h, w, |_, _| r.random_range(0..=max_value));
        let mut labels = Grid::filled(h, w, 0u32);
        let n_nuclei = r.random_range(1..4u32);
        for label in 1..=n_nuclei {
            let (r0, c0) = (r.random_range(0..h - 4), r.random_range(0..w - 4));
            let (rh, cw) = (r.random_range(2..5), r.random_range(2..5));
            for rr in r0..(r0 + rh).min(h) {
                for cc in c0..(c0 + cw).min(w) {
                    if r.random_bool(0.85) {
                        labels.set(rr, cc, label);
                    }
                }
            }
        }
        let patch = MaskedImage::new(format!("p{case}"), image.clone(), labels.clone()).unwrap();
        let got = match patch_concept_measures(&patch, max_value, &opts) {
            Ok(m) => m,
            Err(_) => continue,
        };

        let quantized = image.map(|v| v * 8 / (max_value + 1));
        let present: Vec<u32> = (1..=n_nuclei)
            .filter(|l| labels.data().contains(l))
            .collect();
        let (mut area, mut ecc, mut euler, mut asm, mut contrast, mut corr) =
            (vec![], vec![], vec![], vec![], vec![], vec![]);
        for label in &present {
            let m = labels.map(|v| v == *label);
            area.push(m.data().iter().filter(|b| **b).count() as f64);
            ecc.push(eccentricity_float(&m));
            euler.push(euler_flood(&m) as f64);
            let (mut a, mut c, mut k) = (vec![], vec![], vec![]);
            for &off in &opts.offsets {
                let counts = brute_glcm(&quantized, &m, 8, off, true);
                if counts.iter().sum::<u64>() == 0 {
                    continue;
                }
                let (x, y, z) = brute_haralick(&counts, 8);
                a.push(x);
                c.push(y);
                if let Some(z) = z {
                    k.push(z);
                }
            }
            let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            if !a.is_empty() {
                asm.push(avg(&a));
                contrast.push(avg(&c));
            }
            if !k.is_empty() {
                corr.push(avg(&k));
            }
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let expected = [
            ("area", avg(&area)),
            ("eccentricity", avg(&ecc)),
            ("euler", avg(&euler)),
            ("asm", avg(&asm)),
            ("contrast", avg(&contrast)),
            ("correlation", avg(&corr)),
        ];
        for (name, want) in expected {
            let have = got[name];
            assert!(
                (have - want).abs() <= 1e-9,
                "case {case} {name}: {have} vs {want}"
            );
        }
        checked += 1;
    }
    assert!(
        checked >= 20,
        "only {checked} patches had every concept defined"
    );
}
