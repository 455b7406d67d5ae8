mod checks;

use ris_see::conic::{
    extract_rank_one, gaussian_randomize, project_phases, solve, ConicProgram, ConstraintClass, RealAffine, SolveStatus,
    SolverOptions, VecAffine,
};
use ris_see::linalg::{min_eigenvalue_herm, outer, CMat, CVec, C64};
use ris_see::rng::{complex_normal_vec, stream, StreamKind};
use rand::Rng;

const LMI: ConstraintClass = ConstraintClass::Lmi;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[test]
fn two_by_two_psd_boundary() {
    let mut p = ConicProgram::new();
    let t = p.free_scalar("t");
    let expr = p.herm_affine(2, &[t.into()], |e| {
        let v = e.scalar(t);
        CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(v, 0.0), c(v, 0.0), c(1.0, 0.0)])
    });
    p.add_lmi("psd", LMI, expr);
    p.set_objective(RealAffine::scalar(t, 1.0));
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.scalar(t) - 1.0).abs() < 1e-6, "t = {}", sol.scalar(t));
}

#[test]
fn eigenvalue_program_picks_largest_diagonal() {
    let diag = [0.3, 2.5, -1.0, 1.7];
    let mut p = ConicProgram::new();
    let x = p.add_matrix("X", 4);
    p.add_psd("psd", LMI, x);
    let tr = p.real_affine(&[x.into()], |e| e.matrix(x).trace().re - 1.0);
    p.add_eq("trace", LMI, tr);
    let obj = p.real_affine(&[x.into()], |e| {
        let m = e.matrix(x);
        (0..4).map(|i| diag[i] * m[(i, i)].re).sum()
    });
    p.set_objective(obj);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 2.5).abs() < 1e-6);
    assert!(min_eigenvalue_herm(&sol.matrix(x)) > -1e-7);
}

#[test]
fn complex_hermitian_eigenvalue_program() {
    let mut rng = stream(11, StreamKind::MonteCarlo, 0, 0);
    let a = CMat::from_fn(3, 3, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let h = &a + a.adjoint();
    let (vals, _) = ris_see::linalg::hermitian_eig_desc(&h);
    let mut p = ConicProgram::new();
    let x = p.add_matrix("X", 3);
    p.add_psd("psd", LMI, x);
    let tr = p.real_affine(&[x.into()], |e| e.matrix(x).trace().re - 1.0);
    p.add_eq("trace", LMI, tr);
    let hh = h.clone();
    let obj = p.real_affine(&[x.into()], move |e| (&hh * e.matrix(x)).trace().re);
    p.set_objective(obj);
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - vals[0]).abs() < 1e-6);
}

/// max Tr(C X) s.t. Tr(A X) <= 1, X psd (2x2) against a fine search over the
/// rank-one extreme points x x^T with x^T A x = 1.
#[test]
fn random_small_sdp_matches_grid_search() {
    for seed in 0..10 {
        let mut rng = stream(seed, StreamKind::MonteCarlo, 7, 0);
        let mut u = || rng.random::<f64>() * 2.0 - 1.0;
        let (a11, a22, a12) = (1.0 + u().abs(), 1.0 + u().abs(), 0.4 * u());
        let (c11, c22, c12) = (u(), u(), u());
        let mut best: f64 = 0.0;
        let steps = 200_000;
        for i in 0..steps {
            let phi = std::f64::consts::PI * i as f64 / steps as f64;
            let (x, y) = (phi.cos(), phi.sin());
            let num = c11 * x * x + 2.0 * c12 * x * y + c22 * y * y;
            let den = a11 * x * x + 2.0 * a12 * x * y + a22 * y * y;
            best = best.max(num / den);
        }
        let mut p = ConicProgram::new();
        let xm = p.add_matrix("X", 2);
        p.add_psd("psd", LMI, xm);
        let lin = |m: &CMat, a: f64, b: f64, o: f64| a * m[(0, 0)].re + b * m[(1, 1)].re + 2.0 * o * m[(0, 1)].re;
        let budget = p.real_affine(&[xm.into()], |e| 1.0 - lin(&e.matrix(xm), a11, a22, a12));
        p.add_ge("budget", LMI, budget);
        let obj = p.real_affine(&[xm.into()], |e| lin(&e.matrix(xm), c11, c22, c12));
        p.set_objective(obj);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        assert!((sol.objective - best).abs() < 1e-4, "seed {seed}: {} vs {best}", sol.objective);
    }
}

#[test]
fn second_order_cone_projection() {
    // max x + y s.t. ||(x, y)|| <= 2
    let mut p = ConicProgram::new();
    let x = p.free_scalar("x");
    let y = p.free_scalar("y");
    let v = VecAffine::from_rows(&[RealAffine::scalar(x, 1.0), RealAffine::scalar(y, 1.0)]);
    p.add_soc("ball", ConstraintClass::Soc, RealAffine::constant(2.0), v);
    p.set_objective(RealAffine::linear(0.0, &[(x, 1.0), (y, 1.0)]));
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 2.0 * 2f64.sqrt()).abs() < 1e-6);
}

#[test]
fn bounds_and_mixed_cones() {
    // max t s.t. t <= 3, t <= 1 + s, s in [0, 0.5], [[s, 0],[0, 1]] psd
    let mut p = ConicProgram::new();
    let t = p.free_scalar("t");
    let s = p.add_scalar("s", Some(0.0), Some(0.5));
    p.add_ge("cap", LMI, RealAffine::linear(3.0, &[(t, -1.0)]));
    p.add_ge("link", LMI, RealAffine::linear(1.0, &[(s, 1.0), (t, -1.0)]));
    let expr = p.herm_affine(2, &[s.into()], |e| {
        CMat::from_row_slice(2, 2, &[c(e.scalar(s), 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])
    });
    p.add_lmi("psd", LMI, expr);
    p.set_objective(RealAffine::scalar(t, 1.0));
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 1.5).abs() < 1e-6);
    assert!(p.max_violation(&sol.x) < 1e-6);
}

#[test]
fn infeasible_program_is_reported() {
    let mut p = ConicProgram::new();
    let t = p.nonneg_scalar("t");
    p.add_ge("neg", LMI, RealAffine::linear(-1.0, &[(t, -1.0)]));
    p.set_objective(RealAffine::scalar(t, 1.0));
    let sol = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Infeasible);
}

#[test]
fn program_json_round_trip_is_identical() {
    let mut p = ConicProgram::new();
    let t = p.free_scalar("t");
    let x = p.add_matrix("X", 2);
    p.add_psd("psd", LMI, x);
    let e = p.herm_affine(2, &[t.into(), x.into()], |e| {
        e.matrix(x) * c(0.3, 0.0) + CMat::identity(2, 2) * c(e.scalar(t), 0.0)
    });
    p.add_lmi("mix", LMI, e);
    let v = VecAffine::from_rows(&[RealAffine::scalar(t, 1.0)]);
    p.add_soc("soc", ConstraintClass::Soc, RealAffine::constant(1.0), v);
    p.set_objective(RealAffine::scalar(t, 1.0));
    let text = p.to_json();
    let back = ConicProgram::from_json(&text).unwrap();
    assert_eq!(back, p);
}

#[test]
fn schur_two_by_two_equivalence_on_grid() {
    checks::schur_grid().unwrap();
}

#[test]
fn real_embedding_preserves_semidefiniteness() {
    let mut rng = stream(5, StreamKind::MonteCarlo, 2, 0);
    for trial in 0..200 {
        let vs: Vec<CVec> = (0..2).map(|_| complex_normal_vec(&mut rng, 4)).collect();
        let mut h = outer(&vs[0]) + outer(&vs[1]);
        if trial % 2 == 1 {
            h -= CMat::identity(4, 4) * c(rng.random::<f64>() * 3.0, 0.0);
        }
        let emb = ris_see::linalg::real_embedding(&h);
        let a = min_eigenvalue_herm(&h);
        let b = ris_see::linalg::min_eigenvalue_sym(&emb);
        assert!((a - b).abs() < 1e-9);
        assert_eq!(a >= -1e-12, b >= -1e-12);
    }
}

#[test]
fn rank_one_extraction_examples() {
    let w = CVec::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.3), c(0.0, -1.0)]);
    let got = extract_rank_one(&outer(&w), 1e-6).unwrap().unwrap();
    let rel = got.dotc(&w) / got.norm() / w.norm();
    assert!((rel.norm() - 1.0).abs() < 1e-8 && (got.norm() - w.norm()).abs() < 1e-8);
    assert!(extract_rank_one(&CMat::identity(2, 2), 1e-4).unwrap().is_none());
    let noisy = outer(&w) + CMat::identity(3, 3) * c(1e-12, 0.0);
    assert!(extract_rank_one(&noisy, 1e-6).unwrap().is_some());
    let mut asym = CMat::identity(2, 2);
    asym[(0, 1)] = c(1.0, 0.0);
    assert!(extract_rank_one(&asym, 1e-4).is_err());
}

#[test]
fn randomization_of_rank_one_phase_matrix_is_exact() {
    let mut rng = stream(2, StreamKind::Randomization, 0, 0);
    let theta = CVec::from_vec(vec![c(0.6, 0.8), c(-1.0, 0.0), c(1.0, 0.0)]);
    let h = outer(&theta);
    let (best, _) = gaussian_randomize(&h, 5, &mut rng, project_phases, |_| true, |_| 0.0).unwrap();
    assert!((best - &theta).norm() < 1e-9);
    let fail = gaussian_randomize(&h, 1, &mut rng, project_phases, |_| false, |_| 0.0);
    assert!(matches!(fail, Err(ris_see::Error::RandomizationExhausted(1))));
}
