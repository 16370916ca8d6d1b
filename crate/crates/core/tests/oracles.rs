//! Numerical checks of the enhancement and simulation kernels against
//! independent oracles.

use nalgebra::{DMatrix, DVector};
use plume_core::enhance::{
    enhance_scene, fit_background_regression, fit_scale_c, predict_r12, sanchez_ratio, stack_vsv,
    varon_ratio, zscore, BackgroundSupport, EnhanceConfig,
};
use plume_core::synth::{
    add_gaussian_noise, background_mask_percentile, generate_scene, inject_plume, BandTexture,
    LinearRelation, NoiseSpec, PlumeSpec, SceneConfig,
};
use plume_core::{BandId, Field, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f32, hi: f32) -> Field {
    Field::from_fn(w, h, |_, _| rng.random_range(lo..hi))
}

fn sse(c: f64, r12: &Field, r11: &Field) -> f64 {
    r12.values()
        .iter()
        .zip(r11.values())
        .map(|(&a, &b)| (c * f64::from(a) - f64::from(b)).powi(2))
        .sum()
}

#[test]
fn scale_factor_is_a_minimizer_under_random_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let r11 = random_field(&mut rng, 16, 16, 50.0, 500.0);
        let r12 = Field::from_fn(16, 16, |x, y| r11.get(x, y) * 0.7 + rng.random_range(-20.0..20.0));
        let best = fit_scale_c(&r12, &r11, None).unwrap().c;
        let e_best = sse(best, &r12, &r11);
        for _ in 0..1000 {
            let c = best + rng.random_range(-0.5..0.5);
            assert!(e_best <= sse(c, &r12, &r11) * (1.0 + 1e-12));
        }
    }
}

/// Normal equations solved by nalgebra's LU, independent of the QR path.
fn normal_equation_oracle(scene: &Scene, predictors: &[BandId]) -> Vec<f64> {
    let y: Vec<f64> = scene.band(&BandId::b12()).unwrap().values().iter().map(|&v| f64::from(v)).collect();
    let n = y.len();
    let p = predictors.len() + 1;
    let x = DMatrix::from_fn(n, p, |i, j| {
        if j < predictors.len() {
            f64::from(scene.band(&predictors[j]).unwrap().values()[i])
        } else {
            1.0
        }
    });
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * DVector::from_vec(y);
    xtx.lu().solve(&xty).unwrap().iter().copied().collect()
}

#[test]
fn regression_matches_normal_equation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let predictors: Vec<BandId> = ["B11", "B8A", "B04"].into_iter().map(BandId::from).collect();
    for _ in 0..10 {
        let mut scene = Scene::new(10, 5, 20.0);
        for b in &predictors {
            scene.insert_band(b.clone(), random_field(&mut rng, 10, 5, 10.0, 1000.0)).unwrap();
        }
        let b12 = Field::from_fn(10, 5, |_, _| rng.random_range(10.0..900.0));
        scene.insert_band(BandId::b12(), b12).unwrap();
        let model = fit_background_regression(&scene, None, &predictors).unwrap();
        let oracle = normal_equation_oracle(&scene, &predictors);
        let ours: Vec<f64> = model.coefficients.iter().copied().chain([model.intercept]).collect();
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12), "{a} vs {b}");
        }
        assert!(model.residual_rms > 0.0);
    }
}

#[test]
fn proportional_scene_has_zero_varon() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let k = rng.random_range(0.3f32..3.0);
        let r11 = random_field(&mut rng, 20, 20, 100.0, 2000.0);
        let r12 = r11.map(|v| v * k);
        let c = fit_scale_c(&r12, &r11, None).unwrap();
        let v = varon_ratio(&r12, &r11, c).unwrap();
        assert!(v.field.values().iter().all(|x| x.abs() < 1e-6));
    }
}

#[test]
fn noiseless_generated_background_has_zero_sanchez() {
    let cfg = SceneConfig {
        width: 48,
        height: 40,
        seed: 17,
        ..SceneConfig::default()
    };
    let g = generate_scene(&cfg).unwrap();
    let e = enhance_scene(&g.scene, &EnhanceConfig { zscore: false, ..EnhanceConfig::default() }).unwrap();
    assert!(e.sanchez.ratio.field.values().iter().all(|s| s.abs() < 1e-5));
    assert!(e.model.residual_rms < 1e-3);
}

#[test]
fn plume_drives_both_ratios_negative() {
    let cfg = SceneConfig {
        width: 32,
        height: 32,
        seed: 5,
        ..SceneConfig::default()
    };
    let clean = generate_scene(&cfg).unwrap();
    let spec = PlumeSpec {
        center_xy: (15.0, 16.0),
        sigma_px: 2.0,
        peak_enhancement: 0.5,
        absorption_kappa: 0.4,
        label_threshold: 0.3,
        source_id: 1,
    };
    let inj = inject_plume(&clean.scene, &spec).unwrap();
    let enh_cfg = EnhanceConfig {
        background: BackgroundSupport::All,
        zscore: false,
        ..EnhanceConfig::default()
    };
    // Fix the calibration on the clean scene so only the plume differs.
    let before = enhance_scene(&clean.scene, &enh_cfg).unwrap();
    let (r11, r12) = inj.scene.swir().unwrap();
    let v_after = varon_ratio(r12, r11, before.varon_scale).unwrap().field;
    let r12_hat = predict_r12(&before.model, &inj.scene).unwrap();
    let c_prime = before.sanchez.scale;
    let s_after = varon_ratio(r12, &r12_hat, c_prime).unwrap().field;
    for y in 0..32 {
        for x in 0..32 {
            if inj.mask.get(x, y) != 0 {
                assert!(v_after.get(x, y) < before.varon.field.get(x, y));
                assert!(s_after.get(x, y) < before.sanchez.ratio.field.get(x, y));
                assert!(s_after.get(x, y) < 0.0);
            }
        }
    }
}

#[test]
fn injection_only_darkens_b12_and_labels_exact_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base = Scene::new(25, 25, 20.0)
        .with_band("B11", random_field(&mut rng, 25, 25, 100.0, 200.0))
        .unwrap()
        .with_band("B12", random_field(&mut rng, 25, 25, 80.0, 160.0))
        .unwrap();
    for _ in 0..30 {
        let spec = PlumeSpec {
            center_xy: (rng.random_range(0.0..24.0), rng.random_range(0.0..24.0)),
            sigma_px: rng.random_range(0.3..4.0),
            peak_enhancement: rng.random_range(0.01..2.0),
            absorption_kappa: rng.random_range(0.01..1.0),
            label_threshold: rng.random_range(0.05..0.95),
            source_id: 7,
        };
        let inj = inject_plume(&base, &spec).unwrap();
        let before = base.band(&BandId::b12()).unwrap();
        let after = inj.scene.band(&BandId::b12()).unwrap();
        assert_eq!(inj.scene.band(&BandId::b11()).unwrap(), base.band(&BandId::b11()).unwrap());
        for y in 0..25 {
            for x in 0..25 {
                let e = spec.enhancement(x, y);
                let labelled = e > 0.0 && e >= spec.label_threshold * spec.peak_enhancement;
                assert_eq!(inj.mask.get(x, y) == 7, labelled);
                assert!(after.get(x, y) <= before.get(x, y));
                if labelled {
                    assert!(after.get(x, y) < before.get(x, y));
                }
            }
        }
    }
}

#[test]
fn percentile_background_count_matches_nearest_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.random_range(5..200);
        let mut values: Vec<f32> = (0..n).map(|i| i as f32 * 0.5 + 0.1).collect();
        // Distinct values in shuffled order.
        for i in (1..n).rev() {
            values.swap(i, rng.random_range(0..=i));
        }
        let field = Field::new(n, 1, values).unwrap();
        let p_lo = rng.random_range(0.0..50.0);
        let p_hi = rng.random_range(p_lo + 0.1..=100.0);
        let rank = |p: f64| ((p * n as f64 / 100.0).ceil() as usize).clamp(1, n);
        let expected = rank(p_hi) - rank(p_lo) + 1;
        let m = background_mask_percentile(&field, p_lo, p_hi).unwrap();
        assert_eq!(m.count_foreground(), expected);
    }
}

#[test]
fn gaussian_noise_is_calibrated() {
    let n = 1_000_000;
    let input = Field::filled(1000, 1000, 1000.0);
    let out = add_gaussian_noise(&input, 1.0, 2024).unwrap();
    let diffs: Vec<f64> = out
        .values()
        .iter()
        .map(|&v| f64::from(v) - 1000.0)
        .collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "mean {mean}");
    assert!((0.99..=1.01).contains(&std), "std {std}");
}

#[test]
fn zscore_moments_match_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let v = random_field(&mut rng, 30, 20, -3.0, 5.0);
        let s = random_field(&mut rng, 30, 20, -0.1, 0.2);
        let z = zscore(&stack_vsv(&v, &s).unwrap()).unwrap();
        for ch in z.channels() {
            let vals: Vec<f64> = ch.values().iter().map(|&x| f64::from(x)).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() <= 1e-6);
            assert!((std - 1.0).abs() <= 1e-6);
        }
        assert!(z.channels()[0].bit_eq(&z.channels()[2]));
    }
}

#[test]
fn sanchez_handles_multi_band_background() {
    let cfg = SceneConfig {
        width: 40,
        height: 40,
        bands: vec![
            BandTexture { band: BandId::b11(), base_level: 900.0, correlation_length_px: 3.0, amplitude: 80.0 },
            BandTexture { band: BandId::new("B8A"), base_level: 1500.0, correlation_length_px: 6.0, amplitude: 150.0 },
        ],
        b12_relation: LinearRelation {
            predictors: vec![BandId::b11(), BandId::new("B8A")],
            coefficients: vec![0.6, 0.2],
            intercept: 15.0,
        },
        noise: NoiseSpec::default(),
        seed: 99,
        ..SceneConfig::default()
    };
    let g = generate_scene(&cfg).unwrap();
    let single = enhance_scene(&g.scene, &EnhanceConfig { zscore: false, ..EnhanceConfig::default() }).unwrap();
    let both = enhance_scene(
        &g.scene,
        &EnhanceConfig {
            predictors: vec![BandId::b11(), BandId::new("B8A")],
            zscore: false,
            ..EnhanceConfig::default()
        },
    )
    .unwrap();
    let max_abs = |f: &Field| f.values().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    assert!(max_abs(&both.sanchez.ratio.field) < 1e-5);
    assert!(max_abs(&single.sanchez.ratio.field) > 1e-3);
    let direct = sanchez_ratio(
        g.scene.band(&BandId::b12()).unwrap(),
        &predict_r12(&both.model, &g.scene).unwrap(),
        Some(&both.background),
    )
    .unwrap();
    assert!(direct.ratio.field.bit_eq(&both.sanchez.ratio.field));
}
