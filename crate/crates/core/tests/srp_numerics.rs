use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srp_core::srp::{
    backward, forward, forward_gated, predict, srp_loss, train, Sample, SrpConfig, SrpParams, TrainConfig,
    TrainingTarget, TENSOR_NAMES,
};

fn small(t_e: usize, t_d: usize) -> SrpConfig {
    SrpConfig {
        t_e,
        t_d,
        feature_dim: 7,
        hidden_dim: 8,
        logit_embed_dim: 4,
        ..Default::default()
    }
}

fn random_params(cfg: &SrpConfig, rng: &mut ChaCha8Rng, scale: f64) -> SrpParams {
    let mut p = SrpParams::zeros(cfg);
    for t in p.tensors_mut() {
        for v in &mut t.data {
            *v = rng.random_range(-scale..scale);
        }
    }
    p
}

fn random_window(cfg: &SrpConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..cfg.t_e)
        .map(|_| (0..cfg.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn random_target(cfg: &SrpConfig, rng: &mut ChaCha8Rng) -> TrainingTarget {
    let o: u8 = rng.random_range(0..2);
    let vocab = if o == 1 { 13 } else { 5 };
    TrainingTarget {
        topology: vec![o; cfg.t_e],
        regions: (0..cfg.t_e)
            .map(|_| rng.random_bool(0.85).then(|| rng.random_range(0..vocab)))
            .collect(),
        future: (0..cfg.t_d)
            .map(|_| rng.random_bool(0.75).then(|| rng.random_range(0..vocab)))
            .collect(),
    }
}

fn loss_at(p: &SrpParams, cfg: &SrpConfig, w: &[Vec<f64>], t: &TrainingTarget) -> f64 {
    let out = forward_gated(p, cfg, w, &t.topology).unwrap();
    srp_loss(&out, t, cfg).unwrap().total
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for draw in 0..20 {
        let cfg = small(1 + draw % 3, 1 + draw % 4);
        let p = random_params(&cfg, &mut rng, 0.6);
        let w = random_window(&cfg, &mut rng);
        let t = random_target(&cfg, &mut rng);
        let (_, g) = backward(&p, &cfg, &w, &t).unwrap();
        for (ti, name) in TENSOR_NAMES.iter().enumerate() {
            for j in 0..g.tensors()[ti].data.len() {
                let mut plus = p.clone();
                plus.tensors_mut()[ti].data[j] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[ti].data[j] -= h;
                let fd = (loss_at(&plus, &cfg, &w, &t) - loss_at(&minus, &cfg, &w, &t)) / (2.0 * h);
                let an = g.tensors()[ti].data[j];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                // absolute floor: both sides below FD resolution
                let err = if (an - fd).abs() < 1e-9 { 0.0 } else { rel };
                assert!(err < 1e-4, "draw {draw} {name}[{j}]: analytic {an} fd {fd}");
                worst = worst.max(err);
            }
        }
    }
    println!("max relative gradient error {worst:.3e}");
}

#[test]
fn non_selected_classifier_has_no_effect_on_loss_or_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = small(3, 5);
    for o in [0u8, 1] {
        let p = random_params(&cfg, &mut rng, 0.5);
        let w = random_window(&cfg, &mut rng);
        let mut t = random_target(&cfg, &mut rng);
        let vocab = if o == 1 { 13 } else { 5 };
        t.topology = vec![o; 3];
        t.regions = vec![Some(vocab - 1); 3];
        t.future = vec![Some(1); 5];
        let base_out = forward_gated(&p, &cfg, &w, &t.topology).unwrap();
        let base = srp_loss(&base_out, &t, &cfg).unwrap();

        let mut q = p.clone();
        let other = if o == 1 { &mut q.region_non } else { &mut q.region_int };
        for v in other.w.data.iter_mut().chain(other.b.data.iter_mut()) {
            *v += rng.random_range(-3.0..3.0);
        }
        let out = forward_gated(&q, &cfg, &w, &t.topology).unwrap();
        assert_ne!(out, base_out);
        assert_eq!(srp_loss(&out, &t, &cfg).unwrap(), base);

        let (_, g) = backward(&p, &cfg, &w, &t).unwrap();
        let (gw, ge) = if o == 1 {
            (&g.region_non, &g.expand_non)
        } else {
            (&g.region_int, &g.expand_int)
        };
        assert!(gw.w.data.iter().chain(&gw.b.data).all(|&v| v == 0.0));
        assert!(ge.w.data.iter().chain(&ge.b.data).all(|&v| v == 0.0));
    }
}

#[test]
fn uniform_logit_losses() {
    let cfg = small(1, 1);
    let p = SrpParams::zeros(&cfg);
    let w = vec![vec![0.5; 7]];
    let out = forward(&p, &cfg, &w).unwrap();
    for (o, s, want) in [(1u8, 3usize, 13f64.ln()), (0, 2, 5f64.ln())] {
        let t = TrainingTarget {
            topology: vec![o],
            regions: vec![Some(s)],
            future: vec![None],
        };
        let l = srp_loss(&out, &t, &cfg).unwrap();
        assert!((l.topology - 2f64.ln()).abs() < 1e-9);
        assert!((l.encoder_region - want).abs() < 1e-9);
        assert_eq!(l.decoder_region, 0.0);
    }
}

/// Standalone arithmetic for a two-frame example whose logits are pinned
/// through the biases: every classifier weight is zero, so logits equal biases.
#[test]
fn two_frame_loss_matches_scripted_reference() {
    let cfg = small(2, 2);
    let mut p = SrpParams::zeros(&cfg);
    // topology favours intersection by a margin of 10
    p.topology.b.data = vec![0.0, 10.0];
    p.region_int.b.data[3] = 10.0;
    p.region_non.b.data[1] = 10.0;
    let w = vec![vec![0.1; 7]; 2];
    let t = TrainingTarget {
        topology: vec![1, 1],
        regions: vec![Some(3), Some(4)],
        future: vec![Some(3), None],
    };
    let out = forward_gated(&p, &cfg, &w, &t.topology).unwrap();
    let l = srp_loss(&out, &t, &cfg).unwrap();

    let e10 = 10f64.exp();
    let topo = (1.0 + e10).ln() - 10.0;
    let hit = (12.0 + e10).ln() - 10.0; // correct class among 13 with margin 10
    let miss = (12.0 + e10).ln(); // wrong class, logit 0
    let reference = 2.0 * topo + (hit + miss) + hit;
    assert!((l.total - reference).abs() < 1e-3, "{} vs {reference}", l.total);
    assert!((l.total - 10.001_724_75).abs() < 1e-3);
}

#[test]
fn saturated_optimum_has_tiny_gradient() {
    let cfg = small(2, 3);
    let mut p = SrpParams::zeros(&cfg);
    p.topology.b.data = vec![0.0, 40.0];
    p.region_int.b.data[2] = 40.0;
    let w = vec![vec![0.2; 7]; 2];
    let t = TrainingTarget {
        topology: vec![1, 1],
        regions: vec![Some(2), Some(2)],
        future: vec![None; 3],
    };
    let (_, g) = backward(&p, &cfg, &w, &t).unwrap();
    assert!(g.norm() < 1e-6, "{}", g.norm());
}

#[test]
fn zeroed_expansion_cuts_the_feedback_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = small(2, 4);
    let mut p = random_params(&cfg, &mut rng, 0.5);
    let w = random_window(&cfg, &mut rng);
    let mut q = p.clone();
    for v in &mut q.region_int.w.data {
        *v += 1.0;
    }
    let a = forward_gated(&p, &cfg, &w, &[1, 1]).unwrap();
    let b = forward_gated(&q, &cfg, &w, &[1, 1]).unwrap();
    assert_ne!(a.decoder_hidden, b.decoder_hidden);

    for lin in [&mut p.expand_int, &mut p.expand_non] {
        lin.w.fill(0.0);
        lin.b.fill(0.0);
    }
    let mut q = p.clone();
    for v in &mut q.region_int.w.data {
        *v += 1.0;
    }
    let a = forward_gated(&p, &cfg, &w, &[1, 1]).unwrap();
    let b = forward_gated(&q, &cfg, &w, &[1, 1]).unwrap();
    assert_eq!(a.decoder_hidden, b.decoder_hidden);
    assert_eq!(a.hidden, b.hidden);
}

#[test]
fn forward_is_deterministic_and_ties_pick_lowest() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = small(3, 2);
    let p = random_params(&cfg, &mut rng, 0.5);
    let w = random_window(&cfg, &mut rng);
    assert_eq!(forward(&p, &cfg, &w).unwrap(), forward(&p, &cfg, &w).unwrap());

    let z = SrpParams::zeros(&cfg);
    let pr = predict(&z, &cfg, &w).unwrap();
    assert_eq!(pr.topology_class, 0);
    assert_eq!(pr.current_region, 0);
    assert!(pr.future_regions.iter().all(|&r| r == 0));
}

#[test]
fn non_intersection_prediction_uses_five_labels() {
    let cfg = small(2, 3);
    let mut p = SrpParams::zeros(&cfg);
    p.topology.b.data = vec![5.0, 0.0];
    p.region_int.b.data[12] = 9.0;
    p.region_non.b.data[4] = 1.0;
    let pr = predict(&p, &cfg, &[vec![0.0; 7], vec![0.0; 7]]).unwrap();
    assert_eq!(pr.topology_class, 0);
    assert_eq!(pr.current_region, 4);
    assert!(pr.future_regions.iter().all(|&r| r < 5));
}

fn toy_dataset(cfg: &SrpConfig, n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let o: u8 = rng.random_range(0..2);
            let vocab = if o == 1 { 13 } else { 5 };
            let s = rng.random_range(0..vocab - 2);
            let mut w = random_window(cfg, &mut rng);
            for x in &mut w {
                x[0] = o as f64;
                x[1] = s as f64 / vocab as f64;
            }
            let t = TrainingTarget {
                topology: vec![o; cfg.t_e],
                regions: vec![Some(s); cfg.t_e],
                future: (0..cfg.t_d).map(|m| Some((s + m / 2).min(vocab - 1))).collect(),
            };
            (w, t)
        })
        .collect()
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let cfg = small(3, 2);
    let data = toy_dataset(&cfg, 120, 1);
    let mut hyper = TrainConfig {
        epochs: 15,
        batch_size: 16,
        ..Default::default()
    };
    hyper.adam.lr = 1e-2;
    let (a, ra) = train(&cfg, &data, &hyper).unwrap();
    let (b, rb) = train(&cfg, &data, &hyper).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert!(ra.epoch_losses.last().unwrap() < &(0.5 * ra.initial_loss), "{ra:?}");
}
