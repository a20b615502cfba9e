use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sellab_core::basis::legendre_univariate;
use sellab_core::linalg::{dot, norm2, Matrix};
use sellab_core::model::selection_index;
use sellab_core::parametric::normal_cdf;
use sellab_core::simlab::{generate_dataset, DgpSpec, ErrorLaw};
use sellab_core::stage1::*;
use sellab_core::Dataset;

fn tiny(d: Vec<bool>) -> Dataset {
    let y = d.iter().map(|&b| b.then_some(false)).collect();
    Dataset::new(
        vec![0.0, 1.0],
        Matrix::from_rows(&[[1.0], [0.0]]).unwrap(),
        vec![0.0; 2],
        Matrix::zeros(2, 1),
        d,
        y,
    )
    .unwrap()
}

fn fixed(q: usize) -> GdConfig {
    GdConfig {
        sieve_order: SieveOrder::Fixed(q),
        ridge: 0.0,
        ..GdConfig::default()
    }
}

#[test]
fn all_selected_returns_start_after_one_round() {
    let data = tiny(vec![true, true]);
    let cfg = GdConfig {
        initial_guess: Some(vec![0.3]),
        ..fixed(1)
    };
    let fit = sbgd_first_stage(&data, &cfg).unwrap();
    assert!(fit.converged);
    assert_eq!(fit.iterations, 1);
    assert!((fit.delta[0] - 0.3).abs() < 1e-12);
}

#[test]
fn step_is_linear_in_learning_rate() {
    let data = tiny(vec![false, true]);
    let one = sbgd_step(&data, &[0.2], &fixed(0)).unwrap();
    let two = sbgd_step(&data, &[0.2], &GdConfig { learning_rate: 2.0, ..fixed(0) }).unwrap();
    assert!(((two.delta[0] - 0.2) - 2.0 * (one.delta[0] - 0.2)).abs() < 1e-15);
    assert_eq!(one.f_u, two.f_u);
}

#[test]
fn fitted_cdf_matches_recomputation() {
    let spec = DgpSpec {
        n: 400,
        true_delta: vec![1.0, -0.5],
        true_beta: vec![0.5],
        error_law: ErrorLaw::NormalPair,
        seed: 3,
    };
    let data = generate_dataset(&spec).unwrap();
    let step = sbgd_step(&data, &[0.4, 0.1], &fixed(3)).unwrap();
    let f = &step.f_u;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let u: f64 = rng.random_range(-1.0..3.0);
        let s = f.rescale.apply(u).clamp(0.0, 1.0);
        let want = dot(&legendre_univariate(s, 3), &f.coefficients.values);
        assert!((f.eval(u) - want).abs() < 1e-13);
    }
}

/// `Q(δ) = (1/n) Σ ∫₀^{s_i(δ)} (F(t) − D_i) dt` with `F` frozen; its gradient
/// is the first-stage update direction.
fn implied_objective(data: &Dataset, delta: &[f64], f: &dyn Fn(f64) -> f64) -> f64 {
    // 16-point Gauss–Legendre on each segment [0, s]
    const X: [f64; 8] = [
        0.095_012_509_837_637_44,
        0.281_603_550_779_258_9,
        0.458_016_777_657_227_4,
        0.617_876_244_402_643_8,
        0.755_404_408_355_003,
        0.865_631_202_387_831_8,
        0.944_575_023_073_232_6,
        0.989_400_934_991_649_9,
    ];
    const W: [f64; 8] = [
        0.189_450_610_455_068_5,
        0.182_603_415_044_923_6,
        0.169_156_519_395_002_5,
        0.149_595_988_816_576_7,
        0.124_628_971_255_533_9,
        0.095_158_511_682_492_78,
        0.062_253_523_938_647_89,
        0.027_152_459_411_754_09,
    ];
    let idx = selection_index(data, delta).unwrap();
    let d = data.d_f64();
    let mut total = 0.0;
    for (s, di) in idx.iter().zip(&d) {
        let (mid, half) = (s / 2.0, s / 2.0);
        let mut integral = 0.0;
        for (x, w) in X.iter().zip(&W) {
            integral += w * (f(mid + half * x) - di + f(mid - half * x) - di);
        }
        total += integral * half;
    }
    total / d.len() as f64
}

#[test]
fn update_direction_is_gradient_of_implied_objective() {
    let spec = DgpSpec {
        n: 300,
        true_delta: vec![1.0, -0.5],
        true_beta: vec![0.5],
        error_law: ErrorLaw::NormalPair,
        seed: 21,
    };
    let data = generate_dataset(&spec).unwrap();
    let delta = [0.6, -0.2];
    let step = sbgd_step(&data, &delta, &fixed(3)).unwrap();
    // the fitted function, clamped outside the sample range (continuous)
    let c = step.f_u.coefficients.values.clone();
    let r = step.f_u.rescale;
    let f = move |t: f64| dot(&legendre_univariate(r.apply(t).clamp(0.0, 1.0), 3), &c);
    let direction: Vec<f64> = step.delta.iter().zip(&delta).map(|(a, b)| b - a).collect();
    for j in 0..2 {
        let h = 1e-5;
        let mut up = delta;
        let mut dn = delta;
        up[j] += h;
        dn[j] -= h;
        let fd = (implied_objective(&data, &up, &f) - implied_objective(&data, &dn, &f)) / (2.0 * h);
        let rel = (fd - direction[j]).abs() / direction[j].abs().max(1e-12);
        assert!(rel < 1e-5, "coordinate {j}: fd {fd} vs update {}", direction[j]);
    }
}

#[test]
fn oracle_cdf_step_reduces_loss_for_small_rate() {
    for seed in 0..10 {
        let spec = DgpSpec {
            n: 2000,
            true_delta: vec![1.0, -0.5],
            true_beta: vec![0.5],
            error_law: ErrorLaw::NormalPair,
            seed: 100 + seed,
        };
        let data = generate_dataset(&spec).unwrap();
        let d = data.d_f64();
        let loss = |delta: &[f64]| {
            let idx = selection_index(&data, delta).unwrap();
            idx.iter().zip(&d).map(|(s, di)| (normal_cdf(*s) - di).powi(2)).sum::<f64>() / d.len() as f64
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = [rng.random_range(-1.0..2.0), rng.random_range(-1.5..0.5)];
        let idx = selection_index(&data, &start).unwrap();
        let z = data.z();
        let mut grad = [0.0; 2];
        for i in 0..data.n() {
            let r = normal_cdf(idx[i]) - d[i];
            grad[0] += r * z.get(i, 0) / data.n() as f64;
            grad[1] += r * z.get(i, 1) / data.n() as f64;
        }
        let base = loss(&start);
        let mut gamma = 1.0;
        let mut found = None;
        for _ in 0..40 {
            let next = [start[0] - gamma * grad[0], start[1] - gamma * grad[1]];
            if loss(&next) < base {
                found = Some(gamma);
                break;
            }
            gamma /= 2.0;
        }
        let gamma = found.unwrap_or_else(|| panic!("seed {seed}: no decreasing rate"));
        // every smaller rate in the bracket also decreases the loss
        for k in 1..6 {
            let g = gamma / f64::from(1 << k);
            assert!(loss(&[start[0] - g * grad[0], start[1] - g * grad[1]]) < base);
        }
    }
}

#[test]
fn recovers_selection_coefficients() {
    let truth = [1.0, -0.5];
    let mut errors = Vec::new();
    for seed in 0..20 {
        let spec = DgpSpec {
            n: 10_000,
            true_delta: truth.to_vec(),
            true_beta: vec![0.5],
            error_law: ErrorLaw::NormalPair,
            seed: 500 + seed,
        };
        let data = generate_dataset(&spec).unwrap();
        let cfg = GdConfig {
            sieve_order: SieveOrder::Fixed(4),
            ..GdConfig::default()
        };
        let fit = sbgd_first_stage(&data, &cfg).unwrap();
        assert!(fit.converged);
        let diff: Vec<f64> = fit.delta.iter().zip(&truth).map(|(a, b)| a - b).collect();
        errors.push(norm2(&diff));
        // no oscillation at the end of a converged run
        let tail = &fit.trace[fit.trace.len().saturating_sub(10)..];
        assert!(tail.windows(2).all(|w| w[1].max_change <= w[0].max_change));
    }
    errors.sort_by(f64::total_cmp);
    let median = 0.5 * (errors[9] + errors[10]);
    assert!(median < 0.1, "median error {median}");
}
