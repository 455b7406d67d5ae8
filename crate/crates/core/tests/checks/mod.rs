//! Property checks shared by the integration tests and the acceptance runner.
//!
//! Each check returns `Err` with a description of the first violation.
#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ris_see::alg_perfect::{build_beamforming_subproblem, build_phase_subproblem};
use ris_see::alg_robust::{
    ball_extreme, bti_margin, build_robust_beamforming_subproblem, build_robust_phase_subproblem, sandwich,
    sphere_radius, sprocedure_lmi, svd_reformulate, BallSide, SvdFactors,
};
use ris_see::channel::{sample_channels, EveErrorModel};
use ris_see::conic::{gaussian_randomize, project_phases, solve, ConicProgram, ConstraintClass, SolverOptions};
use ris_see::engine::{evaluate, mrt_beams, refresh_auxiliary, AlgorithmOptions, Lifted, Mode, Network};
use ris_see::linalg::{min_eigenvalue_herm, CMat, CVec, C64};
use ris_see::metrics::{quad_form, theta_hat};
use ris_see::rng::{complex_normal, complex_normal_vec};
use ris_see::scenario::ScenarioConfig;
use ris_see::surrogate::{
    bilinear_upper_bound, fp_value, log_lower_bound, rho_update, secrecy_surrogate, square_lower_bound,
};
use ris_see::validate::quadratic_form_oracle;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| complex_normal(rng));
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn random_phases<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| C64::from_polar(1.0, rng.random_range(0.0..TAU)))
}

/// Uniform draw from the complex ball `||d||^2 <= r2`.
pub fn in_ball<R: Rng>(rng: &mut R, n: usize, r2: f64) -> CVec {
    let d = complex_normal_vec(rng, n);
    let radius = r2.sqrt() * rng.random::<f64>().powf(1.0 / (2.0 * n as f64));
    &d * C64::new(radius / d.norm(), 0.0)
}

pub fn exact_gap(alpha: f64, beta: f64) -> f64 {
    (1.0 + alpha).log2() - (1.0 + beta).log2()
}

/// Maximizer of a concave function on `[lo, hi]` by bisection on the sign of
/// a central-difference slope.
pub fn bisect_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let h = 1e-3;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid + h) > f(mid - h) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn surrogates_tight(points: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..points {
        let a: f64 = rng.random_range(0.0..50.0);
        let b: f64 = rng.random_range(0.0..50.0);
        let d: f64 = rng.random_range(0.01..50.0);
        let s: f64 = rng.random_range(-20.0..20.0);
        let gap = secrecy_surrogate(a, b, b).map_err(|e| e.to_string())? - exact_gap(a, b);
        ensure!(gap.abs() <= 1e-12, "secrecy surrogate off by {gap:e} at ({a}, {b})");
        let a = a + 0.01;
        let gap = bilinear_upper_bound(a, d, a, d).map_err(|e| e.to_string())? - a * d;
        ensure!(gap.abs() <= 1e-12 * (1.0 + a * d), "bilinear bound off by {gap:e} at ({a}, {d})");
        let gap = square_lower_bound(s, s) - s * s;
        ensure!(gap.abs() <= 1e-12 * (1.0 + s * s), "square bound off by {gap:e} at {s}");
        let gap = log_lower_bound(a, a) - (1.0 + a).log2();
        ensure!(gap.abs() <= 1e-12, "log bound off by {gap:e} at {a}");
    }
    Ok(())
}

pub fn surrogates_bound(points: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..points {
        let (a, b, bh): (f64, f64, f64) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
        let v = secrecy_surrogate(a, b, bh).map_err(|e| e.to_string())?;
        ensure!(v <= exact_gap(a, b) + 1e-12, "secrecy surrogate above the gap at ({a}, {b}, {bh})");

        let (x, y, xh, yh): (f64, f64, f64, f64) = (
            rng.random_range(0.0..10.0),
            rng.random_range(0.0..10.0),
            rng.random_range(0.01..10.0),
            rng.random_range(0.01..10.0),
        );
        let v = bilinear_upper_bound(x, y, xh, yh).map_err(|e| e.to_string())?;
        ensure!(v >= x * y - 1e-12, "bilinear bound below the product at ({x}, {y}, {xh}, {yh})");

        let (s, sh): (f64, f64) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        ensure!(square_lower_bound(s, sh) <= s * s + 1e-12, "square bound above s^2 at ({s}, {sh})");

        let (u, uh): (f64, f64) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
        ensure!(log_lower_bound(u, uh) <= (1.0 + u).log2() + 1e-12, "log bound above log2(1+u) at ({u}, {uh})");
    }
    Ok(())
}

pub fn rho_matches_numeric(points: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..points {
        let f: f64 = rng.random_range(0.0..20.0);
        let denom: f64 = rng.random_range(0.05..10.0);
        let rho = rho_update(f, denom).map_err(|e| e.to_string())?;
        let numeric = bisect_max(|r| fp_value(f, denom, r), 0.0, 2.0 * f.sqrt() / denom + 1.0);
        ensure!((rho - numeric).abs() <= 1e-9, "f={f} denom={denom}: {rho} vs {numeric}");
        ensure!(
            (fp_value(f, denom, rho) - f / denom).abs() <= 1e-12 * (1.0 + f / denom),
            "transform not tight at f={f} denom={denom}"
        );
    }
    Ok(())
}

/// Draws of a standard complex Gaussian `d` satisfy `d^H A d + 2 Re(u^H d) + c >= 0`
/// with probability at least `1 - phi` when `c` is the smallest feasible constant.
pub fn bti_conservative(instances: usize, draws: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phi = 0.1;
    for inst in 0..instances {
        let n = rng.random_range(2..6);
        let a = random_hermitian(&mut rng, n) * C64::new(rng.random_range(0.1..2.0), 0.0);
        let u = complex_normal_vec(&mut rng, n) * C64::new(rng.random_range(0.0..2.0), 0.0);
        let c = -bti_margin(&a, &u, 0.0, phi);
        ensure!(bti_margin(&a, &u, c, phi).abs() < 1e-9, "instance {inst}: margin not zero at the threshold");
        let ok = (0..draws)
            .filter(|_| {
                let d = complex_normal_vec(&mut rng, n);
                quad_form(&a, &d) + 2.0 * u.dotc(&d).re + c >= 0.0
            })
            .count() as f64
            / draws as f64;
        ensure!(ok >= 1.0 - phi, "instance {inst}: satisfied with probability {ok}");
    }
    Ok(())
}

/// Smallest right-hand side making the S-procedure block semidefinite for a given multiplier.
pub fn minimal_rhs(side: BallSide, c: &CMat, x: &CVec, r2: f64, mult: f64) -> f64 {
    let n = c.nrows();
    let s = if side == BallSide::Upper { -1.0 } else { 1.0 };
    let top = c * C64::new(s, 0.0) + CMat::identity(n, n) * C64::new(mult, 0.0);
    let b = c * x * C64::new(s, 0.0);
    let inv = top.try_inverse().unwrap();
    let schur = b.dotc(&(inv * &b)).re;
    mult * r2 - s * quad_form(c, x) + schur
}

pub fn sprocedure_holds_on_ball(instances: usize, samples: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for inst in 0..instances {
        let n = rng.random_range(2..7);
        let c = random_hermitian(&mut rng, n);
        let x = complex_normal_vec(&mut rng, n);
        let r2: f64 = rng.random_range(0.01..2.0);
        let ev = min_eigenvalue_herm(&c);
        let lam_max = -min_eigenvalue_herm(&(-&c));

        let kappa = lam_max.max(0.0) + rng.random_range(0.1..3.0);
        let upper = minimal_rhs(BallSide::Upper, &c, &x, r2, kappa) + 1e-9;
        let block = sprocedure_lmi(BallSide::Upper, &c, &x, r2, kappa, upper).map_err(|e| e.to_string())?;
        ensure!(min_eigenvalue_herm(&block) >= -1e-8, "instance {inst}: upper block not semidefinite");

        let omega = (-ev).max(0.0) + rng.random_range(0.1..3.0);
        let lower = minimal_rhs(BallSide::Lower, &c, &x, r2, omega) + 1e-9;
        let block = sprocedure_lmi(BallSide::Lower, &c, &x, r2, omega, lower).map_err(|e| e.to_string())?;
        ensure!(min_eigenvalue_herm(&block) >= -1e-8, "instance {inst}: lower block not semidefinite");

        let hi = ball_extreme(&c, &x, r2, true);
        let lo = ball_extreme(&c, &x, r2, false);
        ensure!(hi <= upper + 1e-7 && lo + lower >= -1e-7, "instance {inst}: ball extremes outside the certified range");
        for _ in 0..samples {
            let v = quad_form(&c, &(&x + in_ball(&mut rng, n, r2)));
            ensure!(v <= upper + 1e-9, "instance {inst}: {v} above {upper}");
            ensure!(v + lower >= -1e-9, "instance {inst}: {v} below {}", -lower);
            ensure!(v <= hi + 1e-9 && v >= lo - 1e-9, "instance {inst}: {v} outside [{lo}, {hi}]");
        }
    }
    Ok(())
}

pub fn svd_exact(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for inst in 0..instances {
        let rn = rng.random_range(1..10);
        let g = CMat::from_fn(rn, 3, |_, _| complex_normal(&mut rng));
        let d = random_hermitian(&mut rng, 3);
        let middle = &g * d * g.adjoint();
        let theta = random_phases(&mut rng, rn);
        let th = theta_hat(&theta);
        let direct = sandwich(&middle, &theta);
        let lifted = svd_reformulate(&middle, &(&th * th.adjoint())).map_err(|e| e.to_string())?;
        let scale = 1e-9 * (1.0 + middle.norm());
        let diff = (direct - lifted).norm();
        ensure!(diff <= scale, "instance {inst}: lifted form differs by {diff:e}");
        let rebuilt = SvdFactors::new(&middle).map_err(|e| e.to_string())?.reconstruct();
        ensure!((rebuilt - &middle).norm() <= scale, "instance {inst}: factors do not reconstruct");
    }
    Ok(())
}

pub fn sphere_radius_closed_form() -> Check {
    for &phi in &[0.01, 0.05, 0.1, 0.3, 0.5, 0.9] {
        let psi = sphere_radius(phi, 1).map_err(|e| e.to_string())?;
        let exact = (-f64::ln(phi)).sqrt();
        ensure!((psi - exact).abs() <= 1e-10, "phi={phi}: {psi} vs {exact}");
    }
    Ok(())
}

/// Relative gap between the radius for 12 real degrees of freedom and the
/// empirical 0.9 quantile of the error norm.
pub fn sphere_radius_mc(draws: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut norms: Vec<f64> = (0..draws).map(|_| complex_normal_vec(&mut rng, 12).norm()).collect();
    norms.sort_by(|a, b| a.total_cmp(b));
    let empirical = norms[(0.9 * draws as f64) as usize];
    let psi = sphere_radius(0.1, 12).map_err(|e| e.to_string())?;
    let rel = (psi - empirical).abs() / empirical;
    ensure!(rel < 0.01, "{psi} vs empirical {empirical}");
    Ok(rel)
}

pub fn quadratic_trace_forms(instances: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..instances {
        let rn = rng.random_range(1..12);
        let mb = rng.random_range(1..9);
        let th = theta_hat(&random_phases(&mut rng, rn));
        let h = CMat::from_fn(rn + 1, mb, |_, _| complex_normal(&mut rng));
        let w = complex_normal_vec(&mut rng, mb);
        let (q, t) = quadratic_form_oracle(&th, &h, &w).map_err(|e| e.to_string())?;
        ensure!((q - t).abs() <= 1e-10 * q.max(1.0), "{q} vs {t}");
    }
    Ok(())
}

/// `sum_b (h_bk^H + sum_r f_rk^H Theta_r^H G_br) w_b` from the per-link blocks
/// against the assembled effective channel.
pub fn effective_channel_assembly(seeds: u64, draws: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for seed in 0..seeds {
        let cfg = ScenarioConfig::default().with_seed(seed);
        let ch = sample_channels(&cfg).map_err(|e| e.to_string())?;
        let (m, n) = (cfg.antennas_per_bs, cfg.elements_per_ris);
        for _ in 0..draws {
            let theta = random_phases(&mut rng, cfg.ris_dim());
            let w = complex_normal_vec(&mut rng, cfg.tx_dim());
            for k in 0..cfg.num_users {
                let mut direct = C64::new(0.0, 0.0);
                for b in 0..cfg.num_bs {
                    let wb = w.rows(b * m, m);
                    let mut row = ch.h_bk[b][k].adjoint();
                    for r in 0..cfg.num_ris {
                        let th = theta.rows(r * n, n);
                        let phase_row = CVec::from_fn(n, |i, _| ch.f_rk[r][k][i].conj() * th[i].conj()).transpose();
                        row += phase_row * &ch.g_br[b][r];
                    }
                    direct += (row * wb)[(0, 0)];
                }
                let assembled = ch.user_effective(k, &theta_hat(&theta)).dotc(&w);
                ensure!(
                    (direct - assembled).norm() <= 1e-10 * direct.norm().max(1e-30),
                    "seed {seed} user {k}: {direct} vs {assembled}"
                );
            }
        }
    }
    Ok(())
}

/// A real symmetric 2x2 block is semidefinite exactly when the Schur test passes.
pub fn schur_grid() -> Check {
    let grid: Vec<f64> = (-8..=8).map(|i| i as f64 * 0.5).collect();
    for &beta in grid.iter().filter(|&&b| b >= 0.0) {
        for &vs in &grid {
            for &chi in &grid {
                let c = |x: f64| C64::new(x, 0.0);
                let m = CMat::from_row_slice(2, 2, &[c(beta), c(vs), c(vs), c(chi)]);
                let psd = min_eigenvalue_herm(&m) >= -1e-12;
                let schur = chi >= 0.0 && beta * chi >= vs * vs;
                ensure!(psd == schur, "beta={beta} varsigma={vs} chi={chi}");
            }
        }
    }
    Ok(())
}

/// All-ones phases, maximum-ratio beams, no artificial noise.
pub fn start_point(net: &Network) -> Lifted {
    let theta = CVec::from_element(net.ris_dim(), C64::new(1.0, 0.0));
    let w: Vec<CMat> = mrt_beams(net, &theta).iter().map(|b| b * b.adjoint()).collect();
    let v = vec![CMat::zeros(net.tx_dim(), net.tx_dim()); net.num_users()];
    Lifted { w, v, theta }
}

/// LMI counts of the four subproblems at the default scenario, in the order
/// beamforming, phase, robust beamforming, robust phase.
pub fn census_lmi_counts() -> Result<[usize; 4], String> {
    let cfg = ScenarioConfig::default();
    let ch = sample_channels(&cfg).map_err(|e| e.to_string())?;
    let opts = AlgorithmOptions::default();
    let err = |e: ris_see::Error| e.to_string();

    let net = Network::perfect(&ch, &cfg).map_err(err)?;
    let x = start_point(&net);
    let aux = refresh_auxiliary(&net, Mode::Perfect, opts.scheme, &evaluate(&net, Mode::Perfect, &opts, &x));
    let (p4, _) = build_beamforming_subproblem(&net, &theta_hat(&x.theta), &aux, &opts).map_err(err)?;
    let (p6, _) = build_phase_subproblem(&net, &x.w, &x.v, &aux, &opts).map_err(err)?;

    let errors = EveErrorModel::from_sigma_bar(&ch, cfg.sigma_bar);
    let net = Network::robust(&ch, &errors, &cfg).map_err(err)?;
    let aux = refresh_auxiliary(&net, Mode::Robust, opts.scheme, &evaluate(&net, Mode::Robust, &opts, &x));
    let (r4, _) = build_robust_beamforming_subproblem(&net, &theta_hat(&x.theta), &aux, &opts).map_err(err)?;
    let (r6, _) = build_robust_phase_subproblem(&net, &x.w, &x.v, &aux, &opts).map_err(err)?;
    Ok([p4.census().lmi, p6.census().lmi, r4.census().lmi, r6.census().lmi])
}

/// `R = sum_i H w_i w_i^H H^H` for a random `3 x 4` cascaded channel and two beams.
pub fn toy_objective(rng: &mut ChaCha8Rng) -> CMat {
    let h = CMat::from_fn(3, 4, |_, _| complex_normal(rng));
    let mut r = CMat::zeros(3, 3);
    for _ in 0..2 {
        let w = complex_normal_vec(rng, 4);
        let g = &h * w;
        r += &g * g.adjoint();
    }
    r
}

/// Best value of `theta_hat^H R theta_hat` over eight phases per element.
pub fn grid_optimum(r: &CMat) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for a in 0..8 {
        for b in 0..8 {
            let th = CVec::from_vec(vec![
                C64::from_polar(1.0, TAU * a as f64 / 8.0),
                C64::from_polar(1.0, TAU * b as f64 / 8.0),
                C64::new(1.0, 0.0),
            ]);
            best = best.max(quad_form(r, &th));
        }
    }
    best
}

pub fn sdr_randomized(r: &CMat, rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let mut p = ConicProgram::new();
    let q = p.add_matrix("Q", 3);
    p.add_psd("psd", ConstraintClass::Lmi, q);
    for i in 0..3 {
        let d = p.real_affine(&[q.into()], move |e| e.matrix(q)[(i, i)].re - 1.0);
        p.add_eq(format!("diag[{i}]"), ConstraintClass::Lmi, d);
    }
    let rr = r.clone();
    let obj = p.real_affine(&[q.into()], move |e| (&rr * e.matrix(q)).trace().re);
    p.set_objective(obj);
    let sol = solve(&p, &SolverOptions::default()).map_err(|e| e.to_string())?;
    ensure!(sol.status.is_usable(), "relaxation ended with {}", sol.status);
    let (_, value) = gaussian_randomize(&sol.matrix(q), 100, rng, project_phases, |_| true, |t| quad_form(r, t))
        .map_err(|e| e.to_string())?;
    Ok(value)
}

/// Smallest ratio of the randomized relaxation to the grid optimum over the seeds.
pub fn sdr_quality(seeds: u64) -> Result<f64, String> {
    let mut worst = f64::INFINITY;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = toy_objective(&mut rng);
        let grid = grid_optimum(&r);
        let sdr = sdr_randomized(&r, &mut rng)?;
        ensure!(sdr >= 0.9 * grid, "seed {seed}: {sdr} vs grid {grid}");
        worst = worst.min(sdr / grid);
    }
    Ok(worst)
}
