use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reaas_core::attack::{find_label_flip, sample_in_ball, AttackConfig};
use reaas_core::crown::{bc_feature_radius, MarginRule};
use reaas_core::data::{ImageShape, SyntheticTask};
use reaas_core::f2i::{f2i_radius, SearchConfig};
use reaas_core::io::{load_dataset, load_model, model_from_text, model_to_text, save_dataset, save_model};
use reaas_core::AffineNetwork;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn files_round_trip_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = AffineNetwork::random(&[12, 9, 5, 3], &mut rng).unwrap();
    save_model(&net, dir.path().join("m.bin")).unwrap();
    assert_eq!(load_model(dir.path().join("m.bin")).unwrap(), net);
    assert_eq!(model_from_text(&model_to_text(&net)).unwrap(), net);

    let data = SyntheticTask::new(3, 2, 0).unwrap().generate(20, ImageShape::new(3, 2, 2), 4).unwrap();
    save_dataset(&data, dir.path().join("d.bin")).unwrap();
    let back = load_dataset(dir.path().join("d.bin")).unwrap();
    assert_eq!(back.labels(), data.labels());
    assert_eq!(back.num_classes(), 3);
    assert!(back.inputs().iter().zip(data.inputs()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn f2i_radius_keeps_sampled_features_inside() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = SearchConfig::default();
    for _ in 0..10 {
        let encoder = AffineNetwork::random(&[10, 24, 16, 6], &mut rng).unwrap();
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..1.0)).collect();
        let fx = encoder.forward(&x).unwrap();
        let rf = rng.random_range(0.05..1.0);
        let r = f2i_radius(&encoder, &x, rf, &cfg).unwrap().radius;
        assert!(r > 0.0);
        for _ in 0..2000 {
            let d = sample_in_ball(10, r, &mut rng);
            let p: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            assert!(dist(&encoder.forward(&p).unwrap(), &fx) < rf);
        }
    }
}

#[test]
fn bc_radius_resists_attack() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = SearchConfig::default();
    let mut certified = 0;
    for seed in 0..10 {
        let g = AffineNetwork::random(&[6, 20, 4], &mut rng).unwrap();
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bc = bc_feature_radius(&g, &v, &cfg, MarginRule::default()).unwrap();
        if bc.radius == 0.0 {
            continue;
        }
        certified += 1;
        let attack = AttackConfig { restarts: 20, steps: 40, seed };
        assert!(find_label_flip(&g, &v, bc.label, 0.99 * bc.radius, &attack).unwrap().is_none());
    }
    assert!(certified > 0);
}
