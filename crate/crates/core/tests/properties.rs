use levy_qla::cqmle::{cauchy_g1, fit_increments, FitOptions, Increments};
use levy_qla::mc::{fmt_f64, freedman_diaconis, ks_statistic};
use levy_qla::simulator::{PathKind, PathSample};
use levy_qla::tqmle::{
    fit_tqmle, student_loglik, student_score, Boundary, ResidualSet, DEFAULT_NU_BOUNDS,
};
use levy_qla::{substream_seed, SamplingDesign};
use proptest::prelude::*;

fn residuals() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, 3..80)
}

/// Levels path on `n = 4, B = T = steps/4` from raw increments.
fn path_from(dx: &[(f64, f64)], dy: &[f64]) -> PathSample {
    let steps = dy.len();
    let design = SamplingDesign::new(4, steps as f64 / 4.0, steps as f64 / 4.0);
    let mut x = vec![vec![0.0, 0.0]];
    let mut y = vec![0.0];
    for (i, (a, b)) in dx.iter().enumerate() {
        let last = x[i].clone();
        x.push(vec![last[0] + a, last[1] + b]);
        y.push(y[i] + dy[i]);
    }
    PathSample {
        design,
        kind: PathKind::Levels,
        times: (0..=steps).map(|j| j as f64 / 4.0).collect(),
        covariates: x,
        responses: y,
        truth: None,
        warnings: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn g1_is_odd_and_bounded(e in -1e8f64..1e8) {
        prop_assert_eq!(cauchy_g1(-e), -cauchy_g1(e));
        prop_assert!(cauchy_g1(e).abs() <= 1.0);
    }

    #[test]
    fn tqmle_solves_its_score_equation(v in residuals()) {
        let r = ResidualSet::from_values(v);
        let fit = fit_tqmle(&r, DEFAULT_NU_BOUNDS).unwrap();
        if fit.boundary_flag == Boundary::None {
            let s = student_score(fit.nu_hat, &r).unwrap();
            prop_assert!(s.abs() <= 1e-8 * r.len() as f64, "score {s} at {}", fit.nu_hat);
        } else {
            let (lo, hi) = DEFAULT_NU_BOUNDS;
            prop_assert!(fit.nu_hat == lo || fit.nu_hat == hi);
        }
    }

    #[test]
    fn wider_residuals_mean_heavier_tails(v in residuals(), c in 1.5f64..10.0) {
        let a = fit_tqmle(&ResidualSet::from_values(v.clone()), DEFAULT_NU_BOUNDS).unwrap();
        let b = fit_tqmle(&ResidualSet::from_values(v.iter().map(|x| c * x).collect()), DEFAULT_NU_BOUNDS).unwrap();
        prop_assert!(b.nu_hat <= a.nu_hat);
    }

    #[test]
    fn student_loglik_is_concave(v in residuals()) {
        let r = ResidualSet::from_values(v);
        let grid: Vec<f64> = (0..40).map(|k| 0.1 * 1.15f64.powi(k)).collect();
        let h: Vec<f64> = grid.iter().map(|nu| student_loglik(*nu, &r).unwrap()).collect();
        for k in 1..grid.len() - 1 {
            // second divided difference on the uneven grid
            let l = (h[k] - h[k - 1]) / (grid[k] - grid[k - 1]);
            let u = (h[k + 1] - h[k]) / (grid[k + 1] - grid[k]);
            prop_assert!(u <= l + 1e-9 * l.abs().max(1.0));
        }
    }

    #[test]
    fn cqmle_is_affine_equivariant(
        raw in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -1.5f64..1.5), 40..80),
        scale in 0.1f64..20.0,
        shift in (-5.0f64..5.0, -5.0f64..5.0),
    ) {
        let steps = raw.len() - raw.len() % 4;
        let dx: Vec<(f64, f64)> = raw[..steps].iter().map(|r| (r.0, r.1)).collect();
        let noise: Vec<f64> = raw[..steps].iter().map(|r| (std::f64::consts::FRAC_PI_2 * r.2 * 0.99).tan()).collect();
        let base = path_from(&dx, &noise);
        let moved: Vec<f64> = dx
            .iter()
            .zip(&noise)
            .map(|((a, b), e)| scale * e + a * shift.0 + b * shift.1)
            .collect();
        let other = path_from(&dx, &moved);
        let opts = FitOptions::default();
        let f0 = fit_increments(&Increments::from_path(&base, &base.design).unwrap(), None, &opts).unwrap();
        let f1 = fit_increments(&Increments::from_path(&other, &other.design).unwrap(), None, &opts).unwrap();
        prop_assume!(f0.converged && f1.converged);
        prop_assert!((f1.sigma_hat / (scale * f0.sigma_hat) - 1.0).abs() < 1e-6);
        let want = [scale * f0.mu_hat[0] + shift.0, scale * f0.mu_hat[1] + shift.1];
        for (got, want) in f1.mu_hat.iter().zip(want) {
            prop_assert!((got - want).abs() < 1e-6 * (1.0 + scale * f0.sigma_hat));
        }
    }

    #[test]
    fn covariate_changes_add_up(
        raw in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 8..40),
        cuts in (0usize..100, 0usize..100, 0usize..100),
    ) {
        let dx: Vec<(f64, f64)> = raw.iter().map(|r| (r.0, r.1)).collect();
        let dy: Vec<f64> = raw.iter().map(|r| r.2).collect();
        let p = path_from(&dx, &dy);
        let mut idx = [cuts.0 % (raw.len() + 1), cuts.1 % (raw.len() + 1), cuts.2 % (raw.len() + 1)];
        idx.sort();
        let [a, b, c] = idx;
        let (mut ab, mut bc, mut ac) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        p.covariate_change(a, b, &mut ab);
        p.covariate_change(b, c, &mut bc);
        p.covariate_change(a, c, &mut ac);
        for k in 0..2 {
            prop_assert!((ab[k] + bc[k] - ac[k]).abs() < 1e-9);
        }
        let dy_sum = p.response_change(a, b) + p.response_change(b, c);
        prop_assert!((dy_sum - p.response_change(a, c)).abs() < 1e-9);
    }

    #[test]
    fn ks_and_histogram_are_well_formed(v in prop::collection::vec(-50.0f64..50.0, 1..300)) {
        let (d, p) = ks_statistic(&v).unwrap();
        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&p));
        let bins = freedman_diaconis(&v);
        prop_assert_eq!(bins.iter().map(|b| b.count).sum::<u64>(), v.len() as u64);
        prop_assert!(bins.windows(2).all(|w| w[0].right == w[1].left));
    }

    #[test]
    fn number_format_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn substreams_are_distinct(master in any::<u64>(), a in 0u64..1_000_000, b in 0u64..1_000_000) {
        prop_assume!(a != b);
        prop_assert_ne!(substream_seed(master, a), substream_seed(master, b));
        prop_assert_eq!(substream_seed(master, a), substream_seed(master, a));
    }
}
