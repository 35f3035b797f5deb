//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with its runtime. The tests serialise on a global lock so the
//! runtime limits are measured on a quiet machine.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::Instant;

use gaussflow_core::density::{
    density_via_inverse, entropy_bound_thm33, entropy_via_duality, lp_norm_via_duality,
    pushforward_kde, simulate_endpoints, theorem22_bound, tilde_density, EndpointMode,
};
use gaussflow_core::fields::{DerivMode, FieldEnsemble, FieldSpec};
use gaussflow_core::mollify::{lemma32_check, ou_identity_residuals, MollifyConfig};
use gaussflow_core::numerics::{ls_slope, mean_and_se};
use gaussflow_core::quadrature::GaussianIntegrator;
use gaussflow_core::rng::{CounterRng, Stream};
use gaussflow_core::sde::{
    flow_composition_residual, integrate_flow, BrownianPath, TimeGrid,
};
use gaussflow_core::stability::{
    cauchy_diagnostic, lusin_lipschitz_ratio, maximal_lp_ratio, SampleGrid, StabilityParams,
};
use nalgebra::DMatrix;

static GATE: Mutex<()> = Mutex::new(());

fn criterion(id: u32, name: &str, limit_s: f64, body: impl FnOnce()) {
    let _lock = GATE.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed().as_secs_f64();
    let ok = outcome.is_ok() && elapsed < limit_s;
    println!(
        "ACCEPTANCE {id:02} {name}: {} ({elapsed:.2} s / limit {limit_s} s)",
        if ok { "PASS" } else { "FAIL" }
    );
    if let Err(p) = outcome {
        std::panic::resume_unwind(p);
    }
    assert!(
        elapsed < limit_s,
        "criterion {id} exceeded its runtime limit: {elapsed:.2} s >= {limit_s} s"
    );
}

fn gamma_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let rng = CounterRng::new(seed, Stream::Initial, 0);
    (0..count)
        .map(|k| {
            let mut x = vec![0.0; dim];
            rng.gaussian_point(k as u64, &mut x);
            x
        })
        .collect()
}

fn smooth_ensembles() -> Vec<(&'static str, FieldEnsemble)> {
    vec![
        (
            "linear drift, constant diffusions (d=2)",
            FieldEnsemble::new(
                FieldSpec::linear(DMatrix::from_row_slice(2, 2, &[-1.0, 0.4, 0.2, -0.7])),
                vec![
                    FieldSpec::constant(vec![1.0, 0.0]),
                    FieldSpec::constant(vec![0.3, -0.5]),
                ],
            )
            .unwrap(),
        ),
        (
            "rotation drift, linear diffusion (d=2)",
            FieldEnsemble::new(
                FieldSpec::rotation(),
                vec![FieldSpec::linear(DMatrix::from_row_slice(
                    2,
                    2,
                    &[0.5, -0.1, 0.2, 0.4],
                ))],
            )
            .unwrap(),
        ),
        (
            "sine drift, linear diffusion (d=1)",
            FieldEnsemble::new(
                FieldSpec::sine(1, 0.8, 1.3),
                vec![FieldSpec::linear_scalar(1, 0.7), FieldSpec::constant(vec![0.4])],
            )
            .unwrap(),
        ),
        (
            "constant drift, sine diffusion (d=1)",
            FieldEnsemble::new(
                FieldSpec::constant(vec![0.6]),
                vec![FieldSpec::sine(1, 1.0, 1.0)],
            )
            .unwrap(),
        ),
    ]
}

#[test]
fn criterion_01_divergence_identity() {
    criterion(1, "divergence identity residuals", 5.0, || {
        for (name, ens) in smooth_ensembles() {
            let points = gamma_points(ens.dim(), 1000, 101);
            for x in &points {
                let analytic = ens.lemma21_residual(x, DerivMode::Analytic).unwrap();
                assert!(analytic <= 1e-6, "{name}: analytic residual {analytic} at {x:?}");
                let fd = ens.lemma21_residual(x, DerivMode::FiniteDifference).unwrap();
                assert!(fd <= 1e-4, "{name}: fd residual {fd} at {x:?}");
            }
        }
    });
}

#[test]
fn criterion_02_smoothing_identities() {
    criterion(2, "smoothing identities and inequalities", 10.0, || {
        let fields: Vec<(usize, FieldSpec)> = vec![
            (1, FieldSpec::constant(vec![1.7])),
            (1, FieldSpec::linear_scalar(1, 0.8)),
            (2, FieldSpec::constant(vec![0.4, -1.1])),
            (
                2,
                FieldSpec::linear(DMatrix::from_row_slice(2, 2, &[0.6, -0.3, 0.1, 0.9])),
            ),
        ];
        for eps in [1.0, 0.5, 0.125] {
            let cfg = MollifyConfig::new(eps).unwrap();
            for (dim, spec) in &fields {
                let sample = gamma_points(*dim, 20, 77);
                for x in &sample {
                    let (jac_res, div_res) = ou_identity_residuals(spec, &cfg, x).unwrap();
                    assert!(
                        jac_res <= 1e-8 && div_res <= 1e-8,
                        "{} eps={eps}: residuals ({jac_res}, {div_res})",
                        spec.family_id()
                    );
                }
                let report = lemma32_check(spec, &cfg, &sample).unwrap();
                assert!(
                    report.worst() <= 1e-8,
                    "{} eps={eps}: margin {}",
                    spec.family_id(),
                    report.worst()
                );
            }
        }
    });
}

#[test]
fn criterion_03_duality_moment() {
    criterion(3, "duality moment estimator", 60.0, || {
        // d = m = 1, A1 = 1, A0 = 0, p = 2, t = 0.1:
        // ||K_t||_2 = (1 - 2t)^{-1/4}
        let ens =
            FieldEnsemble::new(FieldSpec::zero(1), vec![FieldSpec::constant(vec![1.0])]).unwrap();
        let grid = TimeGrid::new(0.1, 100).unwrap();
        let rep = lp_norm_via_duality(&ens, grid, 2.0, 10_000, 1, 42).unwrap();
        let target = 0.8f64.powf(-0.25);
        assert!(
            (rep.lp_estimate - target).abs() <= 3.0 * rep.lp_standard_error,
            "estimate {} vs closed form {target} (se {})",
            rep.lp_estimate,
            rep.lp_standard_error
        );
        let quad = GaussianIntegrator::new(1, 64, 0, 0);
        let bound = theorem22_bound(&ens, 2.0, 0.1, &quad).unwrap();
        let rel_se = rep.lp_standard_error / rep.lp_estimate;
        assert!(
            rep.lp_estimate <= bound * (1.0 + 3.0 * rel_se) + 1e-12,
            "estimate {} exceeds bound {bound}",
            rep.lp_estimate
        );
    });
}

#[test]
fn criterion_04_inverse_flow_density() {
    criterion(4, "inverse-flow density", 120.0, || {
        // deterministic contraction: K_1(0) = e within 1% at h = 1e-3
        let contraction = FieldEnsemble::deterministic(FieldSpec::linear_scalar(1, -1.0));
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let path = BrownianPath::sample(grid, 0, 0, 0);
        let est = density_via_inverse(&contraction, &[0.0], &path, 1000, None).unwrap();
        let e = std::f64::consts::E;
        assert!(
            (est.values[0] - e).abs() <= 0.01 * e,
            "K_1(0) = {} vs e",
            est.values[0]
        );

        // stochastic affine case: inverse route vs KDE within 5% L^1 on [-2, 2]
        let ens = FieldEnsemble::new(
            FieldSpec::linear_scalar(1, -1.0),
            vec![FieldSpec::constant(vec![1.0])],
        )
        .unwrap();
        let path = BrownianPath::sample(grid, 1, 4242, 0);
        let step = 0.05;
        let eval: Vec<f64> = (0..=80).map(|k| -2.0 + k as f64 * step).collect();
        let endpoints = simulate_endpoints(
            &ens,
            grid,
            EndpointMode::PerOmega { path_index: 0 },
            40_000,
            4242,
        )
        .unwrap();
        let kde = pushforward_kde(&endpoints, 1, &eval, None).unwrap();
        let inv = density_via_inverse(&ens, &eval, &path, 1000, None).unwrap();
        assert_eq!(inv.excluded, 0, "inverse round trips were flagged");
        let norm = (2.0 * std::f64::consts::PI).sqrt().recip();
        let l1: f64 = (0..eval.len())
            .map(|i| {
                let phi = norm * (-0.5 * eval[i] * eval[i]).exp();
                (kde.values[i] - inv.values[i]).abs() * phi * step
            })
            .sum();
        assert!(l1 <= 0.05, "L1 gap {l1}");
    });
}

#[test]
fn criterion_05_rotation_invariance() {
    criterion(5, "rotation invariance", 60.0, || {
        let rot = FieldEnsemble::deterministic(FieldSpec::rotation());
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let rep = lp_norm_via_duality(&rot, grid, 2.0, 50, 200, 5).unwrap();
        assert!(
            (rep.lp_estimate - 1.0).abs() <= 3.0 * rep.lp_standard_error + 1e-12,
            "K estimate {}",
            rep.lp_estimate
        );
        assert!(
            rep.entropy_estimate <= 1e-3 + 3.0 * rep.entropy_standard_error,
            "entropy {}",
            rep.entropy_estimate
        );
        let quad = GaussianIntegrator::new(2, 32, 0, 0);
        let bound = theorem22_bound(&rot, 2.0, 1.0, &quad).unwrap();
        assert!((bound - 1.0).abs() <= 1e-12, "bound {bound}");
    });
}

#[test]
fn criterion_06_entropy_dominance() {
    criterion(6, "entropy bound dominance", 120.0, || {
        let ens =
            FieldEnsemble::new(FieldSpec::zero(1), vec![FieldSpec::constant(vec![0.2])]).unwrap();
        let t = 0.5;
        let grid = TimeGrid::new(t, 500).unwrap();
        let rep = entropy_via_duality(&ens, grid, 2000, 5, 6).unwrap();
        let quad = GaussianIntegrator::new(1, 64, 0, 0);
        let bound = entropy_bound_thm33(&ens, t, &quad).unwrap();
        assert!(
            rep.entropy_estimate + 3.0 * rep.entropy_standard_error <= bound.bound,
            "entropy {} vs bound {}",
            rep.entropy_estimate,
            bound.bound
        );
        assert!(bound.bound.is_finite() && bound.levels <= 8);
    });
}

#[test]
fn criterion_07_strong_order() {
    criterion(7, "strong-order slopes", 120.0, || {
        let additive = FieldEnsemble::new(
            FieldSpec::linear_scalar(1, -1.0),
            vec![FieldSpec::constant(vec![1.0])],
        )
        .unwrap();
        let multiplicative =
            FieldEnsemble::new(FieldSpec::zero(1), vec![FieldSpec::linear_scalar(1, 1.0)])
                .unwrap();
        let finest_pow = 18usize;
        let levels: Vec<usize> = (6..=12).collect();
        let n_paths = 128u64;
        let x0 = [1.0f64];

        let mut add_err = vec![Vec::new(); levels.len()];
        let mut mult_err = vec![Vec::new(); levels.len()];
        for p in 0..n_paths {
            let fine = BrownianPath::sample(
                TimeGrid::new(1.0, 1 << finest_pow).unwrap(),
                1,
                777,
                p,
            );
            // integrating-factor oracle with midpoint-weighted increments
            let hf = fine.grid().dt();
            let decay = (-hf).exp();
            let half = (-hf / 2.0).exp();
            let mut oracle = x0[0];
            for k in 0..fine.grid().steps() {
                oracle = decay * oracle + half * fine.increment(k)[0];
            }
            // multiplicative reference at h/64 per level
            let mut mult_ref = Vec::new();
            for (i, &pow) in levels.iter().enumerate() {
                let coarse = fine.coarsen(1 << (finest_pow - pow)).unwrap();
                let add_end = integrate_flow(&additive, &x0, &coarse, false)
                    .unwrap()
                    .end_state()[0];
                add_err[i].push((add_end - oracle).powi(2));

                let refine = fine.coarsen(1 << (finest_pow - pow - 6)).unwrap();
                let mult_end = integrate_flow(&multiplicative, &x0, &coarse, false)
                    .unwrap()
                    .end_state()[0];
                let mult_fine = integrate_flow(&multiplicative, &x0, &refine, false)
                    .unwrap()
                    .end_state()[0];
                mult_ref.push((mult_end - mult_fine).powi(2));
            }
            for (i, v) in mult_ref.into_iter().enumerate() {
                mult_err[i].push(v);
            }
        }
        let log_h: Vec<f64> = levels.iter().map(|&p| -(p as f64) * 2f64.ln()).collect();
        let rms = |errs: &Vec<Vec<f64>>| -> Vec<f64> {
            errs.iter()
                .map(|level| (level.iter().sum::<f64>() / level.len() as f64).sqrt().ln())
                .collect()
        };
        let add_slope = ls_slope(&log_h, &rms(&add_err));
        assert!(
            (0.9..=1.1).contains(&add_slope),
            "additive slope {add_slope}"
        );
        let mult_slope = ls_slope(&log_h, &rms(&mult_err));
        assert!(
            (0.35..=0.65).contains(&mult_slope),
            "multiplicative slope {mult_slope}"
        );
    });
}

#[test]
fn criterion_08_maximal_inequalities() {
    criterion(8, "maximal-function inequalities", 120.0, || {
        // Lusin-Lipschitz: fitted constant stable within 2x under dx -> dx/2
        let corpus: Vec<(FieldSpec, f64, f64, f64)> = vec![
            // (field, box radius, coarse dx, pair radius R)
            (
                FieldSpec::linear(DMatrix::from_row_slice(2, 2, &[0.6, -0.2, 0.3, 0.9])),
                3.0,
                0.1,
                1.0,
            ),
            (FieldSpec::sine(1, 1.0, 1.5), 3.0, 0.02, 0.5),
            (FieldSpec::power_alpha(1, 0.5, None).unwrap(), 3.0, 0.02, 0.5),
            (FieldSpec::power_alpha(2, 0.5, None).unwrap(), 3.0, 0.1, 1.0),
        ];
        for (spec, box_r, dx, max_r) in &corpus {
            let coarse =
                lusin_lipschitz_ratio(spec, *box_r, *dx, *max_r, 100_000, 8).unwrap();
            let fine =
                lusin_lipschitz_ratio(spec, *box_r, *dx / 2.0, *max_r, 100_000, 8).unwrap();
            assert!(coarse.max.is_finite() && fine.max.is_finite());
            assert_eq!(coarse.degenerate + fine.degenerate, 0);
            if coarse.max > 0.0 {
                let rel = fine.max / coarse.max;
                assert!(
                    (0.5..=2.0).contains(&rel),
                    "{}: fitted constants {} vs {}",
                    spec.family_id(),
                    coarse.max,
                    fine.max
                );
            }
        }

        // maximal L^p ratio stable within 2x across three resolutions
        let cases: Vec<(usize, Box<dyn Fn(&[f64]) -> f64 + Sync>)> = vec![
            (1, Box::new(|x: &[f64]| (-x[0] * x[0] / 2.0).exp())),
            (
                2,
                Box::new(|x: &[f64]| {
                    let inside = x[0].abs() <= 0.8 && x[1].abs() <= 0.5;
                    if inside {
                        1.0
                    } else {
                        0.0
                    }
                }),
            ),
        ];
        for (dim, f) in &cases {
            let mut ratios = Vec::new();
            for dx in [0.1, 0.05, 0.025] {
                let grid = SampleGrid::from_scalar_fn(*dim, 3.0, dx, f).unwrap();
                ratios.push(maximal_lp_ratio(&grid, 1.0, 2.0, 1.0).unwrap());
            }
            for w in ratios.windows(2) {
                let rel = w[1] / w[0];
                assert!((0.5..=2.0).contains(&rel), "d={dim} ratios {ratios:?}");
            }
        }
    });
}

#[test]
fn criterion_09_mollified_convergence_trend() {
    criterion(9, "mollified-family convergence trend", 600.0, || {
        let base = FieldEnsemble::new(
            FieldSpec::power_alpha(1, 0.5, None).unwrap(),
            vec![FieldSpec::constant(vec![0.5])],
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let mut params = StabilityParams::new(1.0, 4.0, 1000, 1000, 909);
        params.alpha = 2.0;
        params.lambda_paths = 256;
        params.lambda_initials = 8;

        let mut moments = Vec::new();
        let mut functionals = Vec::new();
        for (n, k) in [(4u32, 8u32), (16, 32), (64, 128)] {
            let diag = cauchy_diagnostic(&base, n, k, grid, &params, 16).unwrap();
            println!(
                "  pair ({n},{k}): sigma = {:.6e}, I = {:.4}, alpha-moment = {:.6e}, gr-mass = {:.4}",
                diag.sigma_nk, diag.log_functional, diag.alpha_moment, diag.report.gr_mass
            );
            moments.push(diag.alpha_moment);
            functionals.push(diag.log_functional);
        }
        assert!(
            moments[0] >= 10.0 * moments[2],
            "alpha-moment decay {:?} is below 10x",
            moments
        );
        for i in &functionals {
            assert!(
                *i <= 3.0 * functionals[0] && *i >= functionals[0] / 3.0,
                "log functional drifted beyond 3x: {functionals:?}"
            );
        }
    });
}

#[test]
fn criterion_10_flow_property() {
    criterion(10, "flow property residual", 5.0, || {
        let mut corpus: Vec<FieldEnsemble> = smooth_ensembles().into_iter().map(|e| e.1).collect();
        corpus.push(
            FieldEnsemble::new(FieldSpec::zero(1), vec![FieldSpec::zero(1)]).unwrap(),
        );
        corpus.push(
            FieldEnsemble::new(
                FieldSpec::power_alpha(1, 0.5, None).unwrap(),
                vec![FieldSpec::constant(vec![0.5])],
            )
            .unwrap(),
        );
        corpus.push(
            FieldEnsemble::new(
                FieldSpec::osgood(2),
                vec![FieldSpec::linear(DMatrix::from_row_slice(
                    2,
                    2,
                    &[0.3, -0.2, 0.1, 0.5],
                ))],
            )
            .unwrap(),
        );
        let grid = TimeGrid::new(1.0, 100).unwrap();
        for (e, ens) in corpus.iter().enumerate() {
            let path = BrownianPath::sample(grid, ens.noise_dim(), 31 + e as u64, 0);
            let x = gamma_points(ens.dim(), 1, 55 + e as u64).pop().unwrap();
            for (s, t) in [(0usize, 100usize), (30, 50), (50, 50), (99, 1)] {
                let r = flow_composition_residual(ens, &x, &path, s, t).unwrap();
                assert!(r <= 1e-12, "ensemble {e} split ({s},{t}): residual {r}");
            }
        }
    });
}

/// Exercised here so the acceptance target also covers the cross-check
/// between the two accumulation forms of the density exponent.
#[test]
fn stratonovich_cross_check_in_acceptance_corpus() {
    let ens = FieldEnsemble::new(
        FieldSpec::linear_scalar(1, -0.5),
        vec![FieldSpec::linear_scalar(1, 0.4)],
    )
    .unwrap();
    let grid = TimeGrid::new(0.5, 500).unwrap();
    let path = BrownianPath::sample(grid, 1, 12, 0);
    let traj = integrate_flow(&ens, &[0.6], &path, true).unwrap();
    let ito = tilde_density(&traj).unwrap();
    let strat =
        gaussflow_core::density::tilde_density_stratonovich(&ens, &traj, &path).unwrap();
    let gap = (ito.log_tilde_k(500) - strat[500]).abs();
    assert!(gap < 0.05, "Ito/Stratonovich gap {gap}");
    let (mean, _) = mean_and_se(&[gap]);
    assert!(mean.is_finite());
}
