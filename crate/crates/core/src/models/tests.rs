use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::circle_flow::flow_support;
use crate::geometry::chordal_distance_sq;
use crate::nn::{mlp_forward, RAdamConfig};

fn small_arch() -> Architecture {
    Architecture {
        encoder_hidden: vec![12, 10],
        decoder_hidden: vec![10, 12],
        harmonics: 2,
        channels: 2,
        ..Architecture::default()
    }
}

fn images(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Tensor {
    Tensor::matrix(rows, dim, (0..rows * dim).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn labels(rng: &mut ChaCha8Rng, rows: usize, circles: usize) -> Tensor {
    Tensor::matrix(rows, circles, (0..rows * circles).map(|_| rng.random_range(-PI..PI)).collect()).unwrap()
}

fn all_variants() -> Vec<ModelVariant> {
    let mut v = vec![
        ModelVariant::new(ModelKind::Ae, 0.0),
        ModelVariant::new(ModelKind::Vae, 1.0),
        ModelVariant::new(ModelKind::Vae, 4.0),
        ModelVariant { y_reg_weight: 0.5, ..ModelVariant::new(ModelKind::Vae, 1.0) },
        ModelVariant { decode_from_y: true, y_reg_weight: 1.0, ..ModelVariant::new(ModelKind::Vae, 1.0) },
        ModelVariant { decode_from_y: true, y_reg_weight: 1.0, ..ModelVariant::new(ModelKind::Ae, 0.0) },
        ModelVariant::new(ModelKind::SupVae, 1.0),
        ModelVariant::new(ModelKind::GfVae, 4.0),
        ModelVariant::new(ModelKind::ActionGfVae, 4.0),
    ];
    for kind in [ModelKind::Vae, ModelKind::GfVae, ModelKind::ActionGfVae] {
        v.push(ModelVariant { latent: LatentKind::Torus, ..ModelVariant::new(kind, 2.0) });
    }
    v
}

#[test]
fn y_regularizer_examples() {
    assert!(y_regularizer([0.6, 0.8]).abs() < 1e-15);
    assert_eq!(y_regularizer([3.0, 4.0]), 16.0);
    assert_eq!(y_regularizer([0.0, 0.0]), 1.0);
}

#[test]
fn supervised_loss_examples() {
    let t: Vec<CircleAngle> = [0.3, -1.2, 2.9].iter().map(|&a| CircleAngle::new(a)).collect();
    assert_eq!(supervised_loss(&t, &t).unwrap(), 0.0);
    let anti: Vec<CircleAngle> = t.iter().map(|a| a.compose(CircleAngle::new(PI))).collect();
    assert!((supervised_loss(&anti, &t).unwrap() - 4.0).abs() < 1e-12);
    let ortho: Vec<CircleAngle> = t.iter().map(|a| a.compose(CircleAngle::new(PI / 2.0))).collect();
    assert!((supervised_loss(&ortho, &t).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(supervised_loss(&t, &[]), Err(ModelError::MissingLabels));
}

#[test]
fn action_layer_examples() {
    let coeffs = FourierCoefficients { harmonics: vec![vec![[1.0, 0.0], [0.3, -0.7]], vec![[2.0, 1.0]]], constant: vec![0.5] };
    let f = action_decoder_first_layer(CircleAngle::new(0.0), &coeffs);
    assert_eq!(f, vec![1.0, 0.0, 0.3, -0.7, 2.0, 1.0, 0.5]);
    let single = FourierCoefficients { harmonics: vec![vec![[1.0, 0.0]]], constant: vec![] };
    let f = action_decoder_first_layer(CircleAngle::new(PI / 2.0), &single);
    assert!(f[0].abs() < 1e-15 && (f[1] - 1.0).abs() < 1e-15);
}

#[test]
fn action_layer_is_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let coeffs = FourierCoefficients {
        harmonics: (0..3).map(|_| (0..4).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect()).collect(),
        constant: vec![0.1, 0.2],
    };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let z = CircleAngle::new(rng.random_range(-PI..PI));
        let d = CircleAngle::new(rng.random_range(-PI..PI));
        let shifted = action_decoder_first_layer(z.compose(d), &coeffs);
        let base = action_decoder_first_layer(z, &coeffs);
        let mut k = 0;
        for (n, channels) in coeffs.harmonics.iter().enumerate() {
            let rot = CircleAngle::new((n + 1) as f64 * d.radians());
            for _ in channels {
                let expect = crate::geometry::rotate_vector(rot, [base[k], base[k + 1]]);
                worst = worst.max((expect[0] - shifted[k]).abs()).max((expect[1] - shifted[k + 1]).abs());
                k += 2;
            }
        }
        assert_eq!(&shifted[k..], &base[k..]);
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn tape_action_layer_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let layer = ActionLayer::new(&mut store, "a", 3, 2, &mut rng).unwrap();
    let zs: Vec<f64> = (0..5).map(|_| rng.random_range(-PI..PI)).collect();
    let tape = Tape::new();
    let z = tape.input(Tensor::matrix(5, 1, zs.clone()).unwrap());
    let out = tape.value(layer.forward(&tape, &store, z).unwrap());
    let coeffs = layer.coefficients(&store);
    for (r, &zr) in zs.iter().enumerate() {
        let reference = action_decoder_first_layer(CircleAngle::new(zr), &coeffs);
        for (a, b) in out.row(r).iter().zip(&reference) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}

#[test]
fn decode_from_y_requires_projected_model() {
    let v = ModelVariant { decode_from_y: true, ..ModelVariant::new(ModelKind::GfVae, 1.0) };
    assert!(matches!(Model::new(v, small_arch(), 16, 0), Err(ModelError::InvalidVariant(_))));
    let v = ModelVariant { decode_from_y: true, ..ModelVariant::new(ModelKind::SupVae, 1.0) };
    assert!(matches!(Model::new(v, small_arch(), 16, 0), Err(ModelError::InvalidVariant(_))));
}

#[test]
fn perfect_reconstruction_with_unit_variance() {
    // Zero last-layer weights and bias = x make the decoder return x
    // exactly, so the loss is the Gaussian normalizer (n/2)·log 2π.
    let arch = Architecture { sigma_x: 1.0, output: OutputKind::Linear, ..small_arch() };
    let mut model = Model::new(ModelVariant::new(ModelKind::Vae, 0.0), arch, 8, 3).unwrap();
    let x: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
    let last = model.decoder.layers.last().unwrap().0;
    model.store.values_mut(last.weight).iter_mut().for_each(|w| *w = 0.0);
    model.store.values_mut(last.bias).copy_from_slice(&x);
    let batch = Tensor::from_rows(&[x.clone(), x.clone(), x]).unwrap();
    let loss = elbo_loss(&batch, &model, 7).unwrap();
    assert!((loss - 4.0 * TAU.ln()).abs() < 1e-12, "{loss}");
}

#[test]
fn elbo_rejects_autoencoder() {
    let model = Model::new(ModelVariant::new(ModelKind::Ae, 0.0), small_arch(), 8, 0).unwrap();
    assert!(matches!(elbo_loss(&Tensor::zeros(2, 8), &model, 0), Err(ModelError::InvalidVariant(_))));
}

#[test]
fn doubling_beta_doubles_kl_contribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = images(&mut rng, 6, 16);
    for kind in [ModelKind::Vae, ModelKind::GfVae] {
        let m1 = Model::new(ModelVariant::new(kind, 1.5), small_arch(), 16, 5).unwrap();
        let mut m2 = m1.clone();
        m2.variant.beta = 3.0;
        let noise = Noise::sample(&m1, 6, &mut rng);
        let a = m1.loss(&x, None, &noise).unwrap();
        let b = m2.loss(&x, None, &noise).unwrap();
        assert_eq!(a.kl, b.kl);
        let (ca, cb) = (a.total - a.recon, b.total - b.recon);
        assert!((cb - 2.0 * ca).abs() < 1e-12 * cb.abs().max(1.0), "{ca} {cb}");
    }
}

#[test]
fn flow_kl_matches_quadrature() {
    // With zero flow-head weights every row gets the same near-identity
    // flow. Averaging the single-sample KL over a stratified grid of base
    // points gives its expectation, compared with ∫ q log q + log 2π.
    let mut model = Model::new(ModelVariant::new(ModelKind::GfVae, 1.0), small_arch(), 16, 6).unwrap();
    let Head::Flow { params } = model.heads[0] else { unreachable!() };
    model.store.values_mut(params.weight).iter_mut().for_each(|w| *w = 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bias: Vec<f64> = (0..model.store.values(params.bias).len()).map(|_| rng.random_range(-0.1..0.1)).collect();
    model.store.values_mut(params.bias).copy_from_slice(&bias);
    let n = 20_000;
    let x = images(&mut rng, 1, 16);
    let batch = Tensor::from_rows(&vec![x.values.clone(); n]).unwrap();
    let grid: Vec<f64> = (0..n).map(|i| -PI + (i as f64 + 0.5) * TAU / n as f64).collect();
    let kl = model.loss(&batch, None, &Noise { per_circle: vec![grid] }).unwrap().kl;

    let flow = model.flow_params(&bias).unwrap();
    let (lo, hi) = flow_support(&flow);
    let (vlo, vhi) = ((lo / PI).atanh(), (hi / PI).atanh());
    let m = 20_000;
    let h = (vhi - vlo) / m as f64;
    let mut integral = 0.0;
    for i in 0..m {
        let v = vlo + (i as f64 + 0.5) * h;
        let lq = flow_log_density(CircleAngle::new(PI * v.tanh()), &flow).unwrap();
        integral += lq.exp() * lq * PI / v.cosh().powi(2) * h;
    }
    let oracle = integral + TAU.ln();
    assert!((kl - oracle).abs() < 1e-3, "{kl} vs {oracle}");
}

#[test]
fn autoencoder_is_the_deterministic_vae_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let arch = Architecture { sigma_x: 1.0, ..small_arch() };
    let ae = Model::new(ModelVariant::new(ModelKind::Ae, 0.0), arch.clone(), 16, 9).unwrap();
    let mut vae = Model::new(ModelVariant::new(ModelKind::Vae, 0.0), arch, 16, 9).unwrap();
    vae.fixed_scale = Some(1e-8);
    let x = images(&mut rng, 6, 16);
    let noise = Noise::sample(&vae, 6, &mut rng);
    let a = ae.loss(&x, None, &Noise::zeros(&ae, 6)).unwrap();
    let v = vae.loss(&x, None, &noise).unwrap();
    assert!((a.total - v.total).abs() < 1e-6, "{} vs {}", a.total, v.total);
    assert_eq!(a.total, a.recon);
}

#[test]
fn decode_from_y_feeds_raw_y_and_adds_regularizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let v = ModelVariant { decode_from_y: true, y_reg_weight: 0.7, ..ModelVariant::new(ModelKind::Ae, 0.0) };
    let model = Model::new(v, small_arch(), 16, 11).unwrap();
    let x = images(&mut rng, 4, 16);
    let loss = model.loss(&x, None, &Noise::zeros(&model, 4)).unwrap();
    let enc = model.encode(&x).unwrap();
    let ys = Tensor::from_rows(&enc.iter().map(|e| e.y[0].clone()).collect::<Vec<_>>()).unwrap();
    let xhat = mlp_forward(&ys, &model.decoder, &model.store).unwrap();
    let s2 = 0.01;
    let mut recon = 0.0;
    let mut reg = 0.0;
    for r in 0..4 {
        let sq: f64 = xhat.row(r).iter().zip(x.row(r)).map(|(a, b)| (a - b).powi(2)).sum();
        recon += 0.5 * sq / s2 + 8.0 * (TAU * s2).ln();
        reg += y_regularizer([ys.get(r, 0), ys.get(r, 1)]);
    }
    recon /= 4.0;
    reg /= 4.0;
    assert!((loss.recon - recon).abs() < 1e-9 * recon.abs());
    assert!((loss.y_reg - reg).abs() < 1e-12);
    assert!((loss.total - (recon + 0.7 * reg)).abs() < 1e-9 * recon.abs());
}

#[test]
fn supervised_term_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = Model::new(ModelVariant::new(ModelKind::SupVae, 1.0), small_arch(), 16, 13).unwrap();
    let x = images(&mut rng, 5, 16);
    let lab = labels(&mut rng, 5, 1);
    let loss = model.loss(&x, Some(&lab), &Noise::zeros(&model, 5)).unwrap();
    let reps: Vec<CircleAngle> = model.encode(&x).unwrap().iter().map(|e| e.representation.angles()[0]).collect();
    let truth: Vec<CircleAngle> = (0..5).map(|r| CircleAngle::new(lab.get(r, 0))).collect();
    assert!((loss.sup - supervised_loss(&reps, &truth).unwrap()).abs() < 1e-12);
    assert_eq!(model.loss(&x, None, &Noise::zeros(&model, 5)), Err(ModelError::MissingLabels));
}

#[test]
fn representations_follow_their_definitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = images(&mut rng, 3, 16);
    let vae = Model::new(ModelVariant::new(ModelKind::Vae, 1.0), small_arch(), 16, 15).unwrap();
    for e in vae.encode(&x).unwrap() {
        assert_eq!(e.representation, Representation::Circle(project_to_circle([e.y[0][0], e.y[0][1]]).unwrap()));
        assert!(e.scale[0] > 0.0);
    }
    let gf = Model::new(ModelVariant::new(ModelKind::GfVae, 1.0), small_arch(), 16, 15).unwrap();
    for e in gf.encode(&x).unwrap() {
        let mode = find_mode(&gf.flow_params(&e.y[0]).unwrap(), ModeSearch::default()).unwrap();
        assert_eq!(e.representation, Representation::Circle(mode));
        assert!(e.scale.is_empty());
    }
}

#[test]
fn torus_density_factorizes() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = images(&mut rng, 4, 16);
    for kind in [ModelKind::Vae, ModelKind::GfVae] {
        let model = Model::new(ModelVariant { latent: LatentKind::Torus, ..ModelVariant::new(kind, 1.0) }, small_arch(), 16, 17).unwrap();
        let enc = model.encode(&x).unwrap();
        let z: Vec<TorusPoint> = enc
            .iter()
            .map(|e| match e.representation {
                Representation::Torus(t) => t,
                _ => unreachable!(),
            })
            .collect();
        let joint = model.joint_log_density(&x, &z).unwrap();
        let qa = model.circle_log_density(&x, 0, &z.iter().map(|t| t.a).collect::<Vec<_>>()).unwrap();
        let qb = model.circle_log_density(&x, 1, &z.iter().map(|t| t.b).collect::<Vec<_>>()).unwrap();
        for r in 0..4 {
            assert_eq!(joint[r] - qa[r] - qb[r], 0.0);
        }
    }
}

#[test]
fn torus_kl_is_additive() {
    // Per-circle KL estimates from independent noise against a joint
    // Monte-Carlo estimate of E[log q(z₁, z₂)] + 2 log 2π.
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let arch = Architecture { encoder_hidden: vec![8], ..small_arch() };
    let model = Model::new(ModelVariant { latent: LatentKind::Torus, ..ModelVariant::new(ModelKind::GfVae, 1.0) }, arch, 16, 19).unwrap();
    let x = images(&mut rng, 1, 16);
    let n = 40_000;
    let batch = Tensor::from_rows(&vec![x.values.clone(); n]).unwrap();
    let loss = model.loss(&batch, None, &Noise::sample(&model, n, &mut rng)).unwrap();
    let raw = model.encode_heads(&x).unwrap().remove(0).y;
    let (fa, fb) = (model.flow_params(&raw[0]).unwrap(), model.flow_params(&raw[1]).unwrap());
    let mut joint = 0.0;
    for _ in 0..n {
        let za = crate::circle_flow::flow_sample(&fa, &mut rng).unwrap().z;
        let zb = crate::circle_flow::flow_sample(&fb, &mut rng).unwrap().z;
        joint += model.joint_log_density(&x, &[TorusPoint { a: za, b: zb }]).unwrap()[0];
    }
    let joint = joint / n as f64 + 2.0 * TAU.ln();
    assert_eq!(loss.kl_per_circle.len(), 2);
    assert!((loss.kl - joint).abs() < 0.02, "{} vs {joint}", loss.kl);
}

#[test]
fn torus_objective_needs_torus() {
    let model = Model::new(ModelVariant::new(ModelKind::Vae, 1.0), small_arch(), 16, 0).unwrap();
    assert_eq!(torus_objective(&Tensor::zeros(2, 16), &model, 0).unwrap_err(), ModelError::NotTorus);
    assert_eq!(model.joint_log_density(&Tensor::zeros(1, 16), &[TorusPoint::new(0.0, 0.0)]).unwrap_err(), ModelError::NotTorus);
}

#[test]
fn every_variant_has_correct_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let x = images(&mut rng, 6, 64);
    for variant in all_variants() {
        let mut model = Model::new(variant, small_arch(), 64, 21).unwrap();
        let lab = labels(&mut rng, 6, model.circles());
        let noise = Noise::sample(&model, 6, &mut rng);
        let lab = (variant.kind == ModelKind::SupVae).then_some(&lab);
        model.compute_gradients(&x, lab, &noise).unwrap();
        let h = 1e-6;
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            let analytic = model.store.grad(id).to_vec();
            for i in 0..analytic.len() {
                let orig = model.store.values(id)[i];
                model.store.values_mut(id)[i] = orig + h;
                let lp = model.loss(&x, lab, &noise).unwrap().total;
                model.store.values_mut(id)[i] = orig - h;
                let lm = model.loss(&x, lab, &noise).unwrap().total;
                model.store.values_mut(id)[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let err = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-3);
                assert!(err < 1e-3, "{} {}[{i}]: {} vs {fd}", variant.name(), model.store.param(id).name, analytic[i]);
            }
        }
    }
}

#[test]
fn encoder_target_step_has_correct_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let x = images(&mut rng, 5, 64);
    for variant in [
        ModelVariant::new(ModelKind::Vae, 1.0),
        ModelVariant::new(ModelKind::GfVae, 1.0),
        ModelVariant { latent: LatentKind::Torus, ..ModelVariant::new(ModelKind::GfVae, 1.0) },
    ] {
        let mut model = Model::new(variant, small_arch(), 64, 27).unwrap();
        let cols = 2 * model.circles();
        let mut t: Vec<f64> = (0..5 * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        // A target at the origin is skipped by flow heads.
        t[0] = 0.0;
        t[1] = 0.0;
        let t = Tensor::matrix(5, cols, t).unwrap();
        let noise = Noise::sample(&model, 5, &mut rng);
        let frozen = RAdamConfig { learning_rate: 0.0, ..RAdamConfig::default() };
        let mut opt = OptimizerState::new(&model.store, frozen);
        let mut loss = |m: &mut Model| m.encoder_target_step(&x, &t, &noise, &mut opt).unwrap();
        loss(&mut model);
        let h = 1e-6;
        let ids: Vec<_> = model.store.ids().collect();
        for id in ids {
            let analytic = model.store.grad(id).to_vec();
            for i in 0..analytic.len() {
                let orig = model.store.values(id)[i];
                model.store.values_mut(id)[i] = orig + h;
                let lp = loss(&mut model);
                model.store.values_mut(id)[i] = orig - h;
                let lm = loss(&mut model);
                model.store.values_mut(id)[i] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let err = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs()).max(1e-3);
                assert!(err < 1e-3, "{} {}[{i}]: {} vs {fd}", variant.name(), model.store.param(id).name, analytic[i]);
            }
        }
    }
}

#[test]
fn flow_target_fit_moves_the_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let x = images(&mut rng, 8, 16);
    let mut model = Model::new(ModelVariant::new(ModelKind::GfVae, 1.0), small_arch(), 16, 29).unwrap();
    let target = CircleAngle::new(1.0).unit_vector();
    let t = Tensor::matrix(8, 2, [target.y1, target.y2].repeat(8)).unwrap();
    let mut opt = OptimizerState::new(&model.store, RAdamConfig { learning_rate: 1e-2, ..RAdamConfig::default() });
    for _ in 0..400 {
        let noise = Noise::sample(&model, 8, &mut rng);
        model.encoder_target_step(&x, &t, &noise, &mut opt).unwrap();
    }
    for e in model.encode(&x).unwrap() {
        let z = e.representation.angles()[0];
        assert!(crate::geometry::geodesic_distance(z, CircleAngle::new(1.0)) < 0.5, "{}", z.radians());
    }
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = images(&mut rng, 8, 16);
        let mut model = Model::new(ModelVariant::new(ModelKind::GfVae, 1.0), small_arch(), 16, 23).unwrap();
        let mut opt = OptimizerState::new(&model.store, RAdamConfig { learning_rate: 1e-2, ..RAdamConfig::default() });
        let mut losses = Vec::new();
        for _ in 0..60 {
            let noise = Noise::sample(&model, 8, &mut rng);
            losses.push(model.train_step(&x, None, &noise, &mut opt).unwrap().total);
        }
        losses
    };
    let a = run();
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), run().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert!(a[59] < a[0]);
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = images(&mut rng, 5, 16);
    for variant in all_variants() {
        let mut model = Model::new(variant, small_arch(), 16, 25).unwrap();
        let mut opt = OptimizerState::new(&model.store, RAdamConfig::default());
        let lab = labels(&mut rng, 5, model.circles());
        let lab = (variant.kind == ModelKind::SupVae).then_some(&lab);
        let noise = Noise::sample(&model, 5, &mut rng);
        model.train_step(&x, lab, &noise, &mut opt).unwrap();
        let ckpt = Checkpoint::capture(&model, Some(&opt), 3, "echo = 1");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, &ckpt).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        let mut fresh = Model::new(variant, small_arch(), 16, 999).unwrap();
        back.restore(&mut fresh).unwrap();
        let a = model.loss(&x, lab, &noise).unwrap();
        let b = fresh.loss(&x, lab, &noise).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
        let angles: Vec<Vec<CircleAngle>> = (0..4).map(|i| vec![CircleAngle::new(i as f64); model.circles()]).collect();
        let (da, db) = (model.decode(&angles).unwrap(), fresh.decode(&angles).unwrap());
        assert!(da.values.iter().zip(&db.values).all(|(p, q)| (p - q).abs() < 1e-12));
    }
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let model = Model::new(ModelVariant::new(ModelKind::Vae, 1.0), small_arch(), 16, 26).unwrap();
    let bytes = Checkpoint::capture(&model, None, 0, "").to_bytes();
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(CheckpointError::CheckpointCorrupt(_))));
    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::CheckpointCorrupt(_))));
    let mut other = Model::new(ModelVariant::new(ModelKind::GfVae, 1.0), small_arch(), 16, 26).unwrap();
    let ckpt = Checkpoint::from_bytes(&bytes).unwrap();
    assert!(matches!(ckpt.restore(&mut other), Err(CheckpointError::Mismatch(_))));
}

#[test]
fn chordal_helper_agrees_with_supervised_term() {
    let a = CircleAngle::new(0.4);
    let b = CircleAngle::new(-2.0);
    assert!((supervised_loss(&[a], &[b]).unwrap() - chordal_distance_sq(a, b)).abs() < 1e-15);
}
