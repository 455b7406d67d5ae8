mod checks;

use checks::start_point;
use ris_see::alg_perfect::{build_beamforming_subproblem, build_phase_subproblem, run_algorithm1};
use ris_see::alg_robust::{build_robust_beamforming_subproblem, build_robust_phase_subproblem, run_algorithm2};
use ris_see::channel::{sample_channels, EveErrorModel};
use ris_see::conic::{solve, Census, SolverOptions};
use ris_see::engine::{evaluate, mrt_beams, refresh_auxiliary, AlgorithmOptions, Mode, Network};
use ris_see::metrics::theta_hat;
use ris_see::scenario::{build_scenario, ScenarioConfig};

fn defaults() -> ScenarioConfig {
    build_scenario(None, &[]).unwrap()
}

#[test]
fn census_counts_at_defaults() {
    let cfg = defaults();
    let (b, k, j, rn) = (cfg.num_bs, cfg.num_users, cfg.num_eves, cfg.ris_dim());
    let ch = sample_channels(&cfg).unwrap();
    let opts = AlgorithmOptions::default();

    let net = Network::perfect(&ch, &cfg).unwrap();
    let x = start_point(&net);
    let aux = refresh_auxiliary(&net, Mode::Perfect, opts.scheme, &evaluate(&net, Mode::Perfect, &opts, &x));
    let (p4, _) = build_beamforming_subproblem(&net, &theta_hat(&x.theta), &aux, &opts).unwrap();
    let (p6, _) = build_phase_subproblem(&net, &x.w, &x.v, &aux, &opts).unwrap();
    assert_eq!((p4.census().lmi, p4.census().soc), (b + 3 * k + 4 * k * j, k));
    assert_eq!((p6.census().lmi, p6.census().soc), (2 + k + 4 * k * j + rn, k));
    assert_eq!(p4.census().lmi, 24);
    assert_eq!(p6.census().lmi, 28);

    let errors = EveErrorModel::from_sigma_bar(&ch, cfg.sigma_bar);
    let net = Network::robust(&ch, &errors, &cfg).unwrap();
    let aux = refresh_auxiliary(&net, Mode::Robust, opts.scheme, &evaluate(&net, Mode::Robust, &opts, &x));
    let (r4, _) = build_robust_beamforming_subproblem(&net, &theta_hat(&x.theta), &aux, &opts).unwrap();
    let (r6, _) = build_robust_phase_subproblem(&net, &x.w, &x.v, &aux, &opts).unwrap();
    assert_eq!(r4.census(), Census { lmi: 40, soc: k + k * j, auxiliary: k });
    assert_eq!(r6.census(), Census { lmi: 2 + rn + k + 8 * k * j, soc: 6, auxiliary: k });
}

#[test]
fn phase_subproblem_returns_unit_diagonal() {
    let cfg = defaults();
    let ch = sample_channels(&cfg).unwrap();
    let opts = AlgorithmOptions::default();
    let net = Network::perfect(&ch, &cfg).unwrap();
    let x = start_point(&net);
    let aux = refresh_auxiliary(&net, Mode::Perfect, opts.scheme, &evaluate(&net, Mode::Perfect, &opts, &x));
    let (p6, vars) = build_phase_subproblem(&net, &x.w, &x.v, &aux, &opts).unwrap();
    let sol = solve(&p6, &opts.solver).unwrap();
    assert!(sol.status.is_usable(), "{}", sol.status);
    let q = sol.matrix(vars.q_hat);
    for i in 0..q.nrows() {
        assert!((q[(i, i)].re - 1.0).abs() <= 1e-7, "diagonal entry {i}: {}", q[(i, i)]);
    }
}

#[test]
fn lifted_phase_quadratic_matches_vector_form() {
    let cfg = defaults();
    let ch = sample_channels(&cfg).unwrap();
    let net = Network::perfect(&ch, &cfg).unwrap();
    let x = start_point(&net);
    let th = theta_hat(&x.theta);
    let q = &th * th.adjoint();
    for k in 0..cfg.num_users {
        let hbar = &ch.h_eff[k] * &x.w[k] * ch.h_eff[k].adjoint();
        let lifted = (&hbar * &q).trace().re;
        let beam = mrt_beams(&net, &x.theta)[k].clone();
        let direct = th.dotc(&(&ch.h_eff[k] * &beam)).norm_sqr();
        assert!((lifted - direct).abs() <= 1e-10 * direct.max(1e-300), "{lifted} vs {direct}");
    }
}

/// At a stationary point of the rate-capped perfect-CSI loop, the robust
/// beamforming subproblem with zero error reaches the same optimum.
#[test]
fn zero_error_robust_subproblem_matches_rate_capped_perfect() {
    for seed in 0..2 {
        let cfg = defaults().with_seed(seed);
        let ch = sample_channels(&cfg).unwrap();
        let mut opts = AlgorithmOptions::default();
        opts.seed = seed;
        opts.rate_cap = true;
        opts.tau = 1e-6;
        opts.max_iters = 60;
        let x = run_algorithm1(&ch, &cfg, &opts).unwrap().lifted;

        let net = Network::perfect(&ch, &cfg).unwrap();
        let aux = refresh_auxiliary(&net, Mode::Perfect, opts.scheme, &evaluate(&net, Mode::Perfect, &opts, &x));
        let (p4, _) = build_beamforming_subproblem(&net, &theta_hat(&x.theta), &aux, &opts).unwrap();
        let perfect = solve(&p4, &SolverOptions::default()).unwrap();

        let rnet = Network::robust(&ch, &EveErrorModel::zero(cfg.num_eves), &cfg).unwrap();
        let raux = refresh_auxiliary(&rnet, Mode::Robust, opts.scheme, &evaluate(&rnet, Mode::Robust, &opts, &x));
        let (r4, _) = build_robust_beamforming_subproblem(&rnet, &theta_hat(&x.theta), &raux, &opts).unwrap();
        let robust = solve(&r4, &SolverOptions::default()).unwrap();
        assert!(perfect.status.is_usable() && robust.status.is_usable());
        assert!((perfect.objective - robust.objective).abs() <= 1e-3, "seed {seed}: {} vs {}", perfect.objective, robust.objective);
    }
}

#[test]
fn looser_outage_target_never_lowers_the_robust_optimum() {
    let cfg = defaults();
    let ch = sample_channels(&cfg).unwrap();
    let errors = EveErrorModel::from_sigma_bar(&ch, cfg.sigma_bar);
    let opts = AlgorithmOptions::default();
    let x = run_algorithm2(&ch, &errors, &cfg, &opts).unwrap().lifted;
    let tight = Network::robust(&ch, &errors, &cfg).unwrap();
    let aux = refresh_auxiliary(&tight, Mode::Robust, opts.scheme, &evaluate(&tight, Mode::Robust, &opts, &x));
    let mut prev = f64::NEG_INFINITY;
    for phi in [0.1, 0.3, 0.6, 0.95] {
        let mut c = cfg.clone();
        c.phi_outage = phi;
        let net = Network::robust(&ch, &errors, &c).unwrap();
        let (p, _) = build_robust_beamforming_subproblem(&net, &theta_hat(&x.theta), &aux, &opts).unwrap();
        let sol = solve(&p, &opts.solver).unwrap();
        assert!(sol.status.is_usable(), "phi={phi}: {}", sol.status);
        assert!(sol.objective >= prev - 1e-5, "phi={phi}: {} after {prev}", sol.objective);
        prev = sol.objective;
    }
}
