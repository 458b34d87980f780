use hdsi_core::lasso::{fit_lasso_fixed, post_lasso_refit, theory_lambda};
use hdsi_core::{fit_lasso, Dataset, PenaltyConfig};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

mod common;
use common::{gaussian, least_squares, names};

/// Columns with mean zero, mutually orthogonal, E_n[x^2] = 1.
fn orthonormal_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    let mut cols: Vec<Array1<f64>> = vec![Array1::ones(n) / (n as f64).sqrt()];
    let raw = gaussian(rng, n, p);
    for j in 0..p {
        let mut v = raw.column(j).to_owned();
        for _ in 0..2 {
            for q in &cols {
                let c = q.dot(&v);
                v.scaled_add(-c, q);
            }
        }
        let norm = v.dot(&v).sqrt();
        cols.push(v / norm);
    }
    let mut x = Array2::zeros((n, p));
    for j in 0..p {
        x.column_mut(j).assign(&(&cols[j + 1] * (n as f64).sqrt()));
    }
    x
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

#[test]
fn orthonormal_design_matches_soft_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 200;
    for p in [1, 2, 5] {
        let x = orthonormal_design(&mut rng, n, p);
        let beta: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { 0.8 } else { 0.05 }).collect();
        let noise: Array1<f64> = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let y = x.dot(&Array1::from(beta)) + noise + 2.0;
        let d = Dataset::new(y.clone(), x.clone(), names(p), vec![0]).unwrap();
        let loadings: Vec<f64> = (0..p).map(|j| 1.0 + 0.1 * j as f64).collect();
        let lambda = 30.0;
        let fit = fit_lasso_fixed(&d, lambda, &loadings, false).unwrap();
        for j in 0..p {
            let xj = x.column(j);
            let exy = xj.dot(&y) / n as f64;
            let exx = xj.dot(&xj) / n as f64;
            let expected = soft(exy, lambda * loadings[j] / (2.0 * n as f64)) / exx;
            assert!(
                (fit.coefficients[j] - expected).abs() < 1e-6,
                "p={p} j={j}: {} vs {expected}",
                fit.coefficients[j]
            );
        }
    }
}

#[test]
fn zero_penalty_is_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for p in [1, 2, 5] {
        let x = orthonormal_design(&mut rng, 200, p);
        let y = Array1::from_shape_fn(200, |i| {
            (i as f64 * 0.37).sin() * 3.0 + rng.sample::<f64, _>(StandardNormal)
        });
        let d = Dataset::new(y.clone(), x.clone(), names(p), vec![0]).unwrap();
        let fit = fit_lasso_fixed(&d, 0.0, &vec![1.0; p], false).unwrap();
        let ls = least_squares(&x, &y);
        assert!((fit.intercept - ls[0]).abs() < 1e-8);
        for j in 0..p {
            assert!((fit.coefficients[j] - ls[j + 1]).abs() < 1e-8);
        }
    }
}

#[test]
fn zero_penalty_correlated_design_converges_to_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut x = gaussian(&mut rng, 120, 4);
    let c0 = x.column(0).to_owned();
    x.column_mut(1).scaled_add(0.6, &c0);
    let y = Array1::from_shape_fn(120, |i| {
        x[[i, 0]] - 0.5 * x[[i, 2]] + rng.sample::<f64, _>(StandardNormal)
    });
    let d = Dataset::new(y.clone(), x.clone(), names(4), vec![0]).unwrap();
    let cfg = PenaltyConfig {
        lambda: Some(0.0),
        ..Default::default()
    };
    let fit = fit_lasso(&d, &cfg).unwrap();
    let ls = least_squares(&x, &y);
    for j in 0..4 {
        assert!((fit.coefficients[j] - ls[j + 1]).abs() < 1e-8);
    }
}

#[test]
fn kill_level_zeroes_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = gaussian(&mut rng, 80, 6);
    let y = Array1::from_shape_fn(80, |i| 2.0 * x[[i, 1]] + rng.sample::<f64, _>(StandardNormal) + 5.0);
    let d = Dataset::new(y.clone(), x, names(6), vec![0]).unwrap();
    let z = d.standardization().unwrap().apply(d.x().view());
    let ybar = y.mean().unwrap();
    let yc = y.mapv(|v| v - ybar);
    let loadings = vec![0.7, 1.0, 1.3, 0.9, 1.1, 1.2];
    let kill = (0..6)
        .map(|j| 2.0 * z.column(j).dot(&yc).abs() / loadings[j])
        .fold(0.0f64, f64::max);
    let fit = fit_lasso_fixed(&d, kill * (1.0 + 1e-9), &loadings, false).unwrap();
    assert!(fit.coefficients.iter().all(|&b| b == 0.0));
    assert!((fit.intercept - ybar).abs() < 1e-12);
    let below = fit_lasso_fixed(&d, kill * 0.99, &loadings, false).unwrap();
    assert_eq!(below.selected.len(), 1);
}

fn sparse_problem(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = gaussian(&mut rng, n, p);
    for j in 1..p {
        let prev = x.column(j - 1).to_owned();
        x.column_mut(j).scaled_add(0.5, &prev);
    }
    x.column_mut(2).mapv_inplace(|v| v * 10.0 + 3.0);
    let y = Array1::from_shape_fn(n, |i| {
        1.5 * x[[i, 0]] - 0.1 * x[[i, 2]] + 0.8 * x[[i, 5]] + rng.sample::<f64, _>(StandardNormal) + 1.0
    });
    Dataset::new(y, x, names(p), vec![0]).unwrap()
}

#[test]
fn kkt_conditions_hold_at_solution() {
    for (seed, hetero) in [(10, false), (11, true), (12, false)] {
        let d = sparse_problem(seed, 150, 30);
        let cfg = PenaltyConfig {
            homoscedastic: !hetero,
            post_lasso: false,
            ..Default::default()
        };
        let fit = fit_lasso(&d, &cfg).unwrap();
        assert!(!fit.selected.is_empty());

        // Recompute the gradient on the standardized scale from scratch.
        let n = d.n() as f64;
        let x = d.x();
        let ybar = d.y().mean().unwrap();
        let mut z = x.clone();
        for mut col in z.axis_iter_mut(Axis(1)) {
            let m = col.mean().unwrap();
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            col.mapv_inplace(|v| (v - m) / s);
        }
        let b = Array1::from(fit.penalized_coefficients.clone());
        let r = d.y().mapv(|v| v - ybar) - z.dot(&b);
        for j in 0..d.p() {
            let g = 2.0 * z.column(j).dot(&r) / n;
            let t = fit.lambda * fit.loadings[j] / n;
            if b[j] == 0.0 {
                assert!(g.abs() <= t * (1.0 + 1e-6), "j={j}: |g|={} t={t}", g.abs());
            } else {
                assert!((g - t * b[j].signum()).abs() <= 1e-6, "j={j}: g={g} t={t}");
            }
        }
        assert!(fit.kkt_violation <= 1e-6);
    }
}

#[test]
fn residual_identity_and_post_lasso_orthogonality() {
    let d = sparse_problem(20, 150, 30);
    let fit = fit_lasso(&d, &PenaltyConfig::default()).unwrap();
    assert!(fit.post_lasso);
    let fitted = d.x().dot(&Array1::from(fit.coefficients.clone())) + fit.intercept;
    let scale = d.y().iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    for i in 0..d.n() {
        assert!((d.y()[i] - fitted[i] - fit.residuals[i]).abs() <= 1e-10 * scale);
    }
    let e = Array1::from(fit.residuals.clone());
    let n = d.n() as f64;
    assert!(e.sum().abs() / n <= 1e-8);
    for &j in &fit.selected {
        assert!((e.dot(&d.x().column(j)) / n).abs() <= 1e-8);
    }
}

#[test]
fn outcome_scale_equivariance() {
    let d = sparse_problem(30, 150, 25);
    let k = 7.5;
    let scaled = d.with_outcome(d.y().mapv(|v| v * k)).unwrap();
    for post in [true, false] {
        let cfg = PenaltyConfig {
            post_lasso: post,
            ..PenaltyConfig::homoscedastic()
        };
        let a = fit_lasso(&d, &cfg).unwrap();
        let b = fit_lasso(&scaled, &cfg).unwrap();
        assert_eq!(a.selected, b.selected);
        let rel = |u: f64, v: f64| (u * k - v).abs() <= 1e-6 * (v.abs() + k);
        assert!(rel(a.intercept, b.intercept));
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!(rel(*u, *v), "{u} * {k} vs {v}");
        }
        for (u, v) in a.residuals.iter().zip(&b.residuals) {
            assert!(rel(*u, *v));
        }
    }
}

fn objective(d: &Dataset, fit: &hdsi_core::LassoFit) -> f64 {
    let n = d.n() as f64;
    let z = d.standardization().unwrap().apply(d.x().view());
    let ybar = d.y().mean().unwrap();
    let b = Array1::from(fit.penalized_coefficients.clone());
    let r = d.y().mapv(|v| v - ybar) - z.dot(&b);
    r.dot(&r) / n + fit.lambda / n * b.iter().zip(&fit.loadings).map(|(bj, l)| l * bj.abs()).sum::<f64>()
}

#[test]
fn duplicating_an_unselected_column_keeps_the_objective() {
    let d = sparse_problem(40, 150, 20);
    let lambda = theory_lambda(d.n(), d.p(), &PenaltyConfig::default()).unwrap();
    let cfg = PenaltyConfig {
        lambda: Some(lambda),
        post_lasso: false,
        ..Default::default()
    };
    let fit = fit_lasso(&d, &cfg).unwrap();
    let j = (0..d.p()).rev().find(|j| !fit.selected.contains(j)).unwrap();

    let mut x = Array2::zeros((d.n(), d.p() + 1));
    x.slice_mut(ndarray::s![.., ..d.p()]).assign(d.x());
    x.column_mut(d.p()).assign(&d.x().column(j));
    let mut nm = names(d.p());
    nm.push("dup".into());
    let dd = Dataset::new(d.y().clone(), x, nm, vec![0]).unwrap();
    let fit2 = fit_lasso(&dd, &cfg).unwrap();
    assert!((objective(&d, &fit) - objective(&dd, &fit2)).abs() < 1e-8);
}

#[test]
fn refit_matches_normal_equations_oracle() {
    // n = 6, two selected columns out of three.
    let x = ndarray::array![
        [0.2, 1.0, -0.3],
        [1.1, 0.4, 0.8],
        [-0.7, 2.1, 0.1],
        [0.5, -0.6, 1.9],
        [1.8, 0.9, -1.2],
        [-1.3, 0.3, 0.6]
    ];
    let y = ndarray::array![1.0, 2.2, -0.5, 0.7, 3.1, -1.4];
    let d = Dataset::new(y.clone(), x.clone(), names(3), vec![0]).unwrap();
    let fit = post_lasso_refit(&d, &[0, 2]).unwrap();
    let sub = x.select(Axis(1), &[0, 2]);
    let ls = least_squares(&sub, &y);
    assert!((fit.intercept - ls[0]).abs() < 1e-10);
    assert!((fit.coefficients[0] - ls[1]).abs() < 1e-10);
    assert_eq!(fit.coefficients[1], 0.0);
    assert!((fit.coefficients[2] - ls[2]).abs() < 1e-10);

    let all = post_lasso_refit(&d, &[0, 1, 2]).unwrap();
    let full = least_squares(&x, &y);
    for j in 0..3 {
        assert!((all.coefficients[j] - full[j + 1]).abs() < 1e-10);
    }
}
