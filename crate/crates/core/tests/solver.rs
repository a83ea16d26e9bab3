use dmsol_core::solver::{maximize, residual};
use dmsol_core::{
    Complex64, DiffractionProfile, Functional, GridFunction, Shape, Site, SolverConfig,
    SolverMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(radius: usize) -> Shape {
    Shape::new(1, radius).unwrap()
}

fn two_step(radius: usize) -> Functional {
    Functional::for_profile(line(radius), &DiffractionProfile::two_step(1.0)).unwrap()
}

#[test]
fn converged_soliton_is_a_weak_solution() {
    let func = two_step(64);
    let res = maximize(&SolverConfig::default(), &func).unwrap();
    assert!(res.residual <= 1e-8);
    assert!((res.omega - res.p_lambda / res.lambda).abs() <= 1e-10);
    assert!(res.omega > 0.0);
    assert!((res.f.norm2_sqr() - 1.0).abs() <= 1e-10);
    assert!(residual(&func, &res.f, res.omega).unwrap() <= 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ev = func.evolve_all(&res.f).unwrap();
    for _ in 0..100 {
        let g = GridFunction::from_fn(func.shape(), |x| {
            if x.linf() <= 20 {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let g = g.scale_re(1.0 / g.norm2());
        let eg = func.evolve_all(&g).unwrap();
        let q = func.quad_form_cached(&eg, &ev, &ev, &ev);
        let w = g.inner(&res.f).unwrap() * res.omega;
        assert!((q - w).norm() <= 1e-6);
    }
}

#[test]
fn objective_trace_is_monotone() {
    let res = maximize(&SolverConfig::default(), &two_step(32)).unwrap();
    assert!(res.objective_trace.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn maximum_scales_quadratically() {
    let func = two_step(64);
    let ratios: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&lambda| {
            let res = maximize(
                &SolverConfig {
                    lambda,
                    ..SolverConfig::default()
                },
                &func,
            )
            .unwrap();
            res.p_lambda / (lambda * lambda)
        })
        .collect();
    for r in &ratios {
        assert!((r - ratios[1]).abs() <= 1e-6, "{ratios:?}");
    }
}

#[test]
fn methods_agree() {
    let func = two_step(64);
    let a = maximize(&SolverConfig::default(), &func).unwrap();
    let b = maximize(
        &SolverConfig {
            method: SolverMethod::FixedPoint,
            ..SolverConfig::default()
        },
        &func,
    )
    .unwrap();
    assert!((a.p_lambda - b.p_lambda).abs() <= 1e-6);
    assert!(a.f.distance(&b.f).unwrap() <= 1e-4);
}

#[test]
fn box_size_does_not_matter() {
    let a = maximize(&SolverConfig::default(), &two_step(64)).unwrap();
    let b = maximize(&SolverConfig::default(), &two_step(96)).unwrap();
    assert!((a.p_lambda - b.p_lambda).abs() <= 1e-8);
}

#[test]
fn unmanaged_maximizer_is_a_delta() {
    let func = Functional::for_profile(line(64), &DiffractionProfile::zero()).unwrap();
    let res = maximize(&SolverConfig::default(), &func).unwrap();
    assert!((res.p_lambda - 1.0).abs() <= 1e-9);
    let delta = GridFunction::delta(func.shape(), Site::ORIGIN).unwrap();
    assert!(res.f.distance(&delta).unwrap() <= 1e-4);
}
