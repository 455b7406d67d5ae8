mod checks;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ris_see::channel::{sample_channels, EveErrorModel};
use ris_see::linalg::{CMat, CVec, C64};
use ris_see::metrics::{theta_hat, BeamformingState};
use checks::random_phases;
use ris_see::rng::complex_normal_vec;
use ris_see::scenario::ScenarioConfig;
use ris_see::validate::{complexity_estimate, mc_outage, quadratic_form_oracle, Subproblem};

#[test]
fn quadratic_and_trace_forms_agree() {
    checks::quadratic_trace_forms(1000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (q, t) = quadratic_form_oracle(&theta_hat(&random_phases(&mut rng, 3)), &CMat::zeros(4, 2), &CVec::zeros(2)).unwrap();
    assert_eq!((q, t), (0.0, 0.0));
}

#[test]
fn direct_link_only_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (rn, mb) = (5, 3);
    let hd = complex_normal_vec(&mut rng, mb);
    let mut h = CMat::zeros(rn + 1, mb);
    h.row_mut(rn).copy_from(&hd.adjoint());
    let w = complex_normal_vec(&mut rng, mb);
    let (q, _) = quadratic_form_oracle(&theta_hat(&random_phases(&mut rng, rn)), &h, &w).unwrap();
    assert!((q - hd.dotc(&w).norm_sqr()).abs() <= 1e-12 * q);
}

#[test]
fn effective_channel_matches_per_link_sum() {
    checks::effective_channel_assembly(5, 100).unwrap();
}

#[test]
fn complexity_barrier_parameters_at_defaults() {
    let cfg = ScenarioConfig::default();
    let p4 = complexity_estimate(&cfg, Subproblem::P4, 0.01).unwrap();
    let p6 = complexity_estimate(&cfg, Subproblem::P6, 0.01).unwrap();
    assert_eq!(p4.delta, 44.0);
    assert_eq!(p6.delta, 44.0);
    assert!((p4.iterations - 44f64.sqrt() * 100f64.ln()).abs() < 1e-12);
    for (plain, robust) in [(Subproblem::P4, Subproblem::RobustP4), (Subproblem::P6, Subproblem::RobustP6)] {
        let a = complexity_estimate(&cfg, plain, 0.01).unwrap();
        let b = complexity_estimate(&cfg, robust, 0.01).unwrap();
        assert!(b.total >= a.total && b.delta >= a.delta);
    }
    let mut prev = 0.0;
    for n in 1..12 {
        let mut c = cfg.clone();
        c.elements_per_ris = n;
        let t = complexity_estimate(&c, Subproblem::P6, 0.01).unwrap().total;
        assert!(t > prev);
        prev = t;
    }
    assert!(complexity_estimate(&cfg, Subproblem::P4, 1.0).is_err());
}

#[test]
fn outage_examples() {
    let cfg = ScenarioConfig::default();
    let ch = sample_channels(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let theta = random_phases(&mut rng, cfg.ris_dim());
    let zero = BeamformingState::from_vectors(
        vec![CVec::zeros(cfg.tx_dim()); 2],
        vec![CVec::zeros(cfg.tx_dim()); 2],
        theta.clone(),
    )
    .unwrap();
    let errors = EveErrorModel::from_sigma_bar(&ch, 0.05);
    let rep = mc_outage(&zero, &ch, &errors, 0.5, cfg.noise_eve_mw, 2000, &mut rng).unwrap();
    assert_eq!(rep.max(), 0.0);

    let beams: Vec<CVec> = (0..2).map(|_| complex_normal_vec(&mut rng, cfg.tx_dim()) * C64::new(0.1, 0.0)).collect();
    let state = BeamformingState::from_vectors(beams, vec![CVec::zeros(cfg.tx_dim()); 2], theta).unwrap();
    let rep = mc_outage(&state, &ch, &EveErrorModel::zero(2), 0.5, cfg.noise_eve_mw, 1000, &mut rng).unwrap();
    assert!(rep.probability.iter().flatten().all(|&p| p == 0.0 || p == 1.0));
    assert!(rep.std_error.iter().flatten().all(|&s| s == 0.0));
}

#[test]
fn outage_error_shrinks_with_samples() {
    let cfg = ScenarioConfig::default();
    let ch = sample_channels(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let theta = random_phases(&mut rng, cfg.ris_dim());
    let beams: Vec<CVec> = ch.h_de.iter().map(|h| h * C64::new(1.0 / h.norm(), 0.0) * C64::new(0.05, 0.0)).collect();
    let state = BeamformingState::from_vectors(beams, vec![CVec::zeros(cfg.tx_dim()); 2], theta).unwrap();
    let errors = EveErrorModel::from_sigma_bar(&ch, 0.5);
    let spread = |n: usize, rng: &mut ChaCha8Rng| {
        let est: Vec<f64> = (0..30)
            .map(|_| mc_outage(&state, &ch, &errors, 0.5, cfg.noise_eve_mw, n, rng).unwrap().probability[0][0])
            .collect();
        let m = est.iter().sum::<f64>() / 30.0;
        (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / 29.0).sqrt()
    };
    let small = spread(250, &mut rng);
    let large = spread(4000, &mut rng);
    if small > 0.0 {
        // Sixteen times the samples: a quarter of the spread, with slack for noise.
        assert!(large < 0.5 * small, "{small} -> {large}");
    }
}
