//! Property tests for phase-space, kernel, dynamics and estimator invariants.

mod common;

use common::*;
use cpsdyn::cps::{check_constraints, gamma_w, sample_sphere, sample_stiefel, stream_rng, StiefelSignature, DEGENERACY_TOL};
use cpsdyn::dynamics::{invariant_drift, propagate_exact, propagate_rk4, trajectory, Backend};
use cpsdyn::estimators::{estimate_tcf, MethodSpec};
use cpsdyn::kernels::{
    classify_kernel, eval_inverse_kernel, eval_kernel, gdtwa_kernel, gdtwa_spectrum, point_from_kernel, KernelSpec,
};
use cpsdyn::linalg::{hermitian_eig, propagator, CMatrix};
use cpsdyn::models::{build, format_hamiltonian, parse_hamiltonian, ModelSpec};
use proptest::prelude::*;

fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.sub(b).as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn haar_ish_unitary(dim: usize, seed: u64) -> CMatrix {
    propagator(&build(&ModelSpec::Random { dim, seed, scale: 1.0 }).unwrap(), 1.7).matrix
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sphere_kernel_has_unit_trace_and_known_spectrum(dim in 2usize..7, gamma in -0.2f64..2.0, seed in any::<u64>()) {
        let gamma = gamma.max(-1.0 / dim as f64 + 0.05);
        let p = sample_sphere(dim, gamma, &mut stream_rng(seed, 0)).unwrap();
        let k = eval_kernel(&KernelSpec::CpsCovariant { gamma }, &p).unwrap();
        prop_assert!((k.as_matrix().trace().re - 1.0).abs() < 1e-12);
        let ev = hermitian_eig(&k).eigenvalues;
        let top = 1.0 + (dim as f64 - 1.0) * gamma;
        prop_assert!((ev[dim - 1] - top).abs() < 1e-10);
        for &v in &ev[..dim - 1] {
            prop_assert!((v + gamma).abs() < 1e-10);
        }
        let inv = eval_inverse_kernel(gamma, &p).unwrap();
        prop_assert!((inv.as_matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_under_unitaries(dim in 2usize..5, seed in any::<u64>()) {
        let gamma = gamma_w(dim);
        let p = sample_sphere(dim, gamma, &mut stream_rng(seed, 1)).unwrap();
        let g = haar_ish_unitary(dim, seed);
        let spec = KernelSpec::CpsCovariant { gamma };
        let lhs = eval_kernel(&spec, &p.transformed(&g).unwrap()).unwrap();
        let rhs = g.matmul(eval_kernel(&spec, &p).unwrap().as_matrix()).matmul(&g.adjoint());
        prop_assert!(max_diff(lhs.as_matrix(), &rhs) < 1e-9);
    }

    #[test]
    fn stiefel_kernel_covariance_and_round_trip(dim in 3usize..6, seed in any::<u64>()) {
        let mut eig = vec![1.4, -0.3, -0.3];
        eig.resize(dim, -0.3);
        let sig = StiefelSignature::from_spectrum(&{ let mut e = eig.clone(); e.sort_by(f64::total_cmp); e }, DEGENERACY_TOL);
        let p = sample_stiefel(&sig, &mut stream_rng(seed, 2)).unwrap();
        prop_assert!(check_constraints(&p, 1e-12).passed());
        let spec = KernelSpec::StiefelCovariant(sig.clone());
        let k = eval_kernel(&spec, &p).unwrap();
        let g = haar_ish_unitary(dim, seed ^ 0x55);
        let lhs = eval_kernel(&spec, &p.transformed(&g).unwrap()).unwrap();
        let rhs = g.matmul(k.as_matrix()).matmul(&g.adjoint());
        prop_assert!(max_diff(lhs.as_matrix(), &rhs) < 1e-9);
        let back = point_from_kernel(&k, DEGENERACY_TOL);
        prop_assert!(back.signature().same_component(&sig, 1e-9));
        let k2 = eval_kernel(&KernelSpec::StiefelCovariant(back.signature().clone()), &back).unwrap();
        prop_assert!(max_diff(k.as_matrix(), k2.as_matrix()) < 1e-9);
    }

    #[test]
    fn gdtwa_kernels_share_one_component(dim in 2usize..6, alpha_seed in any::<u64>()) {
        let count = 4usize.pow(dim as u32 - 1);
        let alpha = (alpha_seed % count as u64) as usize;
        let n = (alpha_seed / count as u64 % dim as u64) as usize;
        let k = gdtwa_kernel(dim, n, alpha).unwrap();
        let sig = classify_kernel(&k, DEGENERACY_TOL);
        let mut want = gdtwa_spectrum(dim);
        want.sort_by(f64::total_cmp);
        let ev = hermitian_eig(&k).eigenvalues;
        for (a, b) in ev.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        prop_assert!((k.as_matrix()[(n, n)].re - 1.0).abs() < 1e-14);
        prop_assert_eq!(sig.rank(), if dim == 2 { 1 } else { 2 });
    }

    #[test]
    fn exact_dynamics_preserves_constraints_and_energy(dim in 2usize..5, seed in any::<u64>()) {
        let h = bounded_random(dim, seed);
        let p = sample_sphere(dim, gamma_w(dim), &mut stream_rng(seed, 3)).unwrap();
        let seg = trajectory(&p, &h, &grid(21, 10.0), Backend::Exact).unwrap();
        prop_assert!(invariant_drift(&seg).unwrap().passed(1e-10));
    }

    #[test]
    fn rk4_tracks_exact(dim in 2usize..4, seed in any::<u64>()) {
        let h = bounded_random(dim, seed);
        let p = sample_sphere(dim, 0.0, &mut stream_rng(seed, 4)).unwrap();
        let a = propagate_rk4(&p, &h, 0.01, 100).unwrap();
        let b = propagate_exact(&p, &h, 1.0).unwrap();
        for (x, y) in a.frame(0).iter().zip(b.frame(0)) {
            prop_assert!((x - y).norm() < 1e-7);
        }
    }

    #[test]
    fn hamiltonian_text_round_trip(dim in 1usize..6, seed in any::<u64>(), scale in 0.01f64..100.0) {
        let h = build(&ModelSpec::Random { dim, seed, scale }).unwrap();
        let back = parse_hamiltonian(&format_hamiltonian(&h)).unwrap();
        prop_assert!(max_diff(h.as_matrix(), back.as_matrix()) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn window_window_is_positive_and_normalized(seed in any::<u64>(), which in 0usize..3) {
        let (dim, method) = match which {
            0 => (2, MethodSpec::TriangleWw),
            1 => (2, MethodSpec::TriangleF2Single { gamma: 0.5 }),
            _ => (3, MethodSpec::HillWw { gamma: gamma_w(3) }),
        };
        let req = request(bounded_random(dim, seed), (0, 0), diagonal(dim), method, 2_000, seed);
        let res = estimate_tcf(&req).unwrap();
        prop_assert!(res.min_contribution.unwrap() >= 0.0);
        for ti in 0..req.t_grid.len() {
            let total: f64 = res.curves.iter().map(|c| c.estimate[ti].re).sum();
            prop_assert!((total - 1.0).abs() < 1e-12, "sum {}", total);
        }
    }

    #[test]
    fn estimates_are_bitwise_reproducible(seed in any::<u64>()) {
        let req = request(bounded_random(3, seed), (0, 1), all_pairs(3), MethodSpec::Cmm { gamma: gamma_w(3) }, 500, seed);
        prop_assert_eq!(estimate_tcf(&req).unwrap(), estimate_tcf(&req).unwrap());
    }
}

#[test]
fn estimate_hermiticity() {
    let dim = 3;
    let h = bounded_random(dim, 21);
    for method in [MethodSpec::Cmm { gamma: gamma_w(dim) }, MethodSpec::Gdtwa, MethodSpec::TriangleSqc { fixed_gamma: false }] {
        let a = run(&request(h.clone(), (0, 1), vec![(2, 1)], method.clone(), 100_000, 1));
        let b = run(&request(h.clone(), (1, 0), vec![(1, 2)], method.clone(), 100_000, 2));
        let (ca, cb) = (&a.curves[0], &b.curves[0]);
        for ti in 0..ca.estimate.len() {
            let d = ca.estimate[ti] - cb.estimate[ti].conj();
            let se_re = (ca.se_re[ti].powi(2) + cb.se_re[ti].powi(2)).sqrt();
            let se_im = (ca.se_im[ti].powi(2) + cb.se_im[ti].powi(2)).sqrt();
            assert!(d.re.abs() <= 5.0 * se_re + 1e-12 && d.im.abs() <= 5.0 * se_im + 1e-12, "{} t index {ti}: {d}", method.name());
        }
    }
}

#[test]
fn cmm_is_gamma_invariant() {
    let dim = 2;
    let h = bounded_random(dim, 33);
    let curves: Vec<_> = [0.0, gamma_w(dim), 1.0]
        .iter()
        .enumerate()
        .map(|(i, &gamma)| run(&request(h.clone(), (0, 1), all_pairs(dim), MethodSpec::Cmm { gamma }, 100_000, 40 + i as u64)))
        .collect();
    for a in &curves {
        for b in &curves {
            for (ca, cb) in a.curves.iter().zip(&b.curves) {
                for ti in 0..ca.estimate.len() {
                    let d = ca.estimate[ti] - cb.estimate[ti];
                    let se_re = (ca.se_re[ti].powi(2) + cb.se_re[ti].powi(2)).sqrt();
                    let se_im = (ca.se_im[ti].powi(2) + cb.se_im[ti].powi(2)).sqrt();
                    assert!(d.re.abs() <= 5.0 * se_re + 1e-12 && d.im.abs() <= 5.0 * se_im + 1e-12);
                }
            }
        }
    }
}
