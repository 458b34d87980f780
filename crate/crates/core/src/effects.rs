//! Double-selection estimates of the target coefficients.
//!
//! Selection runs two lasso passes per target: the target on every other
//! regressor, and the outcome on every regressor except the target. Controls
//! picked in either pass are pooled, and one least-squares regression of the
//! outcome on all targets plus the pooled controls gives the estimates.
//!
//! For a target with residualized regressor `v` (residual of the target on the
//! other final-stage columns) and final residual `e`, the per-observation score
//! is `psi_i = c v_i e_i / E_n[v^2]` and the standard error is
//! `sqrt(E_n[psi^2] / n)`: the heteroscedasticity-robust sandwich with the
//! degrees-of-freedom factor `c = sqrt(n / (n - d))`, `d` the final-stage rank
//! (HC1).

use std::collections::BTreeSet;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::lasso::{fit_lasso_xy, PenaltyConfig};
use crate::linalg::{Qr, RANK_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectMethod {
    Ds,
    Ols,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub method: EffectMethod,
    pub names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub std_err: Vec<f64>,
    pub t_stat: Vec<f64>,
    /// n x K, column k holds the scores of target k.
    pub scores: Array2<f64>,
    pub n: usize,
    /// Non-target columns in the final regression.
    pub selected_union: Vec<String>,
}

impl EffectEstimates {
    pub fn k(&self) -> usize {
        self.theta_hat.len()
    }

    /// `sqrt(E_n[psi_k^2])`.
    pub fn score_sd(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.scores.axis_iter(Axis(1)).map(|c| (c.dot(&c) / n).sqrt()).collect()
    }

    /// Consistency checks for estimates read from outside. The score matrix
    /// may be empty (see [`EffectEstimates::without_scores`]).
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(Error::InvalidInput("no estimates".into()));
        }
        if self.names.len() != k || self.std_err.len() != k || self.t_stat.len() != k {
            return Err(Error::InvalidInput("estimate vectors differ in length".into()));
        }
        if self.scores.ncols() != k || (self.scores.nrows() != self.n && self.scores.nrows() != 0) {
            return Err(Error::InvalidInput(format!(
                "scores are {:?}, expected ({}, {k})",
                self.scores.dim(),
                self.n
            )));
        }
        Ok(())
    }

    /// Drops the score matrix (zero rows) for compact output.
    pub fn without_scores(&self) -> EffectEstimates {
        EffectEstimates {
            scores: Array2::zeros((0, self.k())),
            ..self.clone()
        }
    }

    pub fn has_scores(&self) -> bool {
        self.scores.nrows() == self.n && self.n > 0
    }
}

/// Final-stage least squares: intercept, then `targets`, then `controls`.
fn final_stage(data: &Dataset, targets: &[usize], controls: &[usize], method: EffectMethod) -> Result<EffectEstimates> {
    let n = data.n();
    let x = data.x();
    let names = data.column_names();
    let width = 1 + targets.len() + controls.len();
    if width >= n {
        return Err(Error::InvalidInput(format!(
            "final regression has {width} columns for {n} observations"
        )));
    }
    let mut design = Array2::<f64>::ones((n, width));
    for (l, &j) in targets.iter().chain(controls).enumerate() {
        design.column_mut(l + 1).assign(&x.column(j));
    }
    let qr = Qr::new(design.view(), RANK_TOL);
    let label = |pos: usize| -> String {
        if pos == 0 {
            "(intercept)".into()
        } else {
            names[targets.iter().chain(controls).nth(pos - 1).copied().unwrap()].clone()
        }
    };
    if method == EffectMethod::Ols && !qr.dropped().is_empty() {
        return Err(Error::RankDeficient(qr.dropped().iter().map(|&p| label(p)).collect()));
    }
    if let Some(&pos) = qr.dropped().iter().find(|&&p| p >= 1 && p <= targets.len()) {
        return Err(Error::DegenerateTarget(label(pos)));
    }
    if !qr.dropped().is_empty() {
        let dropped: Vec<String> = qr.dropped().iter().map(|&p| label(p)).collect();
        warn!("final regression dropped collinear control(s): {}", dropped.join(", "));
    }

    let coef = qr.solve(data.y().view());
    let mut resid: Array1<f64> = data.y().clone();
    for (&pos, &b) in qr.kept().iter().zip(coef.iter()) {
        resid.scaled_add(-b, &design.column(pos));
    }

    let nf = n as f64;
    let dof = (nf / (nf - qr.rank() as f64)).sqrt();
    let k = targets.len();
    let mut theta_hat = Vec::with_capacity(k);
    let mut std_err = Vec::with_capacity(k);
    let mut t_stat = Vec::with_capacity(k);
    let mut scores = Array2::<f64>::zeros((n, k));
    // Targets are never dropped, so target l sits at kept position l + 1.
    for l in 0..k {
        let pos = l + 1;
        debug_assert_eq!(qr.kept()[pos], pos);
        let m = qr.inverse_gram_column(pos);
        let psi: Array1<f64> = &m * &resid * (nf * dof);
        let theta = coef[pos];
        let se = (psi.dot(&psi) / nf).sqrt() / nf.sqrt();
        let t = if se > 0.0 {
            theta / se
        } else if theta == 0.0 {
            0.0
        } else {
            return Err(Error::ZeroScoreVariance(names[targets[l]].clone()));
        };
        theta_hat.push(theta);
        std_err.push(se);
        t_stat.push(t);
        scores.column_mut(l).assign(&psi);
    }
    let kept_controls: Vec<String> = qr.kept().iter().filter(|&&p| p > k).map(|&p| label(p)).collect();

    Ok(EffectEstimates {
        method,
        names: targets.iter().map(|&j| names[j].clone()).collect(),
        theta_hat,
        std_err,
        t_stat,
        scores,
        n,
        selected_union: kept_controls,
    })
}

/// Columns chosen by the two selection passes for target `k`.
fn select_for_target(data: &Dataset, k: usize, controls: &BTreeSet<usize>, cfg: &PenaltyConfig) -> Result<Vec<usize>> {
    let others: Vec<usize> = (0..data.p()).filter(|&j| j != k).collect();
    let x_minus = data.x().select(Axis(1), &others);
    let names: Vec<String> = others.iter().map(|&j| data.column_names()[j].clone()).collect();
    let d_k: ArrayView1<f64> = data.x().column(k);

    let on_target = fit_lasso_xy(x_minus.view(), d_k, names.clone(), cfg)?;
    let on_outcome = fit_lasso_xy(x_minus.view(), data.y().view(), names, cfg)?;
    let picked: BTreeSet<usize> = on_target
        .selected
        .iter()
        .chain(&on_outcome.selected)
        .map(|&pos| others[pos])
        .filter(|j| controls.contains(j))
        .collect();
    Ok(picked.into_iter().collect())
}

/// Double-selection estimates for every target of `data`.
pub fn double_select_effects(data: &Dataset, cfg: &PenaltyConfig) -> Result<EffectEstimates> {
    let targets = data.target_index().to_vec();
    let controls: BTreeSet<usize> = data.control_index().into_iter().collect();
    // Without non-target columns there is nothing to select: every target
    // enters the final stage regardless of the lasso passes.
    let union: Vec<usize> = if controls.is_empty() {
        Vec::new()
    } else {
        let picks = targets
            .par_iter()
            .map(|&k| select_for_target(data, k, &controls, cfg))
            .collect::<Result<Vec<_>>>()?;
        picks
            .into_iter()
            .flatten()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    final_stage(data, &targets, &union, EffectMethod::Ds)
}

/// Least squares on all columns, reporting the coefficients in `index`.
pub fn ols_effects(data: &Dataset, index: &[usize]) -> Result<EffectEstimates> {
    let p = data.p();
    if p + 1 >= data.n() {
        return Err(Error::InvalidInput(format!(
            "least squares needs p + 1 < n (p = {p}, n = {})",
            data.n()
        )));
    }
    if index.is_empty() {
        return Err(Error::InvalidInput("empty coefficient index".into()));
    }
    if let Some(&j) = index.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidInput(format!("coefficient index {j} out of range")));
    }
    let mut idx = index.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let rest: Vec<usize> = (0..p).filter(|j| !idx.contains(j)).collect();
    let mut est = final_stage(data, &idx, &rest, EffectMethod::Ols)?;
    est.selected_union.clear();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn names(p: usize) -> Vec<String> {
        (1..=p).map(|j| format!("x{j}")).collect()
    }

    /// Gauss-Jordan inverse, independent of the QR path.
    fn invert(a: &Array2<f64>) -> Array2<f64> {
        let n = a.nrows();
        let mut m = a.clone();
        let mut inv = Array2::<f64>::eye(n);
        for c in 0..n {
            let piv = (c..n)
                .max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs()))
                .unwrap();
            for col in 0..n {
                m.swap([c, col], [piv, col]);
                inv.swap([c, col], [piv, col]);
            }
            let d = m[[c, c]];
            for col in 0..n {
                m[[c, col]] /= d;
                inv[[c, col]] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[[r, c]];
                    for col in 0..n {
                        m[[r, col]] -= f * m[[c, col]];
                        inv[[r, col]] -= f * inv[[c, col]];
                    }
                }
            }
        }
        inv
    }

    fn sample() -> (Array1<f64>, Array2<f64>) {
        let x = array![
            [0.5, 1.2],
            [1.5, -0.3],
            [-0.7, 2.2],
            [2.0, 0.4],
            [-1.1, -0.9],
            [0.3, 1.7],
            [1.8, -1.4],
            [-0.2, 0.6]
        ];
        let y = array![1.1, 2.3, -0.4, 3.5, -1.7, 1.9, 1.2, 0.3];
        (y, x)
    }

    #[test]
    fn no_controls_equals_ols_with_sandwich_se() {
        let (y, x) = sample();
        let d = Dataset::new(y.clone(), x.clone(), names(2), vec![0, 1]).unwrap();
        let est = double_select_effects(&d, &PenaltyConfig::default()).unwrap();

        let n = 8;
        let mut xd = Array2::<f64>::ones((n, 3));
        xd.slice_mut(ndarray::s![.., 1..]).assign(&x);
        let xtx_inv = invert(&xd.t().dot(&xd));
        let b = xtx_inv.dot(&xd.t().dot(&y));
        let e = &y - &xd.dot(&b);
        let mut meat = Array2::<f64>::zeros((3, 3));
        for i in 0..n {
            let row = xd.row(i);
            for a in 0..3 {
                for c in 0..3 {
                    meat[[a, c]] += row[a] * row[c] * e[i] * e[i];
                }
            }
        }
        // HC1: HC0 times n / (n - d).
        let v = xtx_inv.dot(&meat).dot(&xtx_inv) * (n as f64 / (n - 3) as f64);
        for k in 0..2 {
            assert_abs_diff_eq!(est.theta_hat[k], b[k + 1], epsilon = 1e-10);
            assert_abs_diff_eq!(est.std_err[k], v[[k + 1, k + 1]].sqrt(), epsilon = 1e-10);
            assert_abs_diff_eq!(est.t_stat[k] * est.std_err[k], est.theta_hat[k], epsilon = 1e-12);
            assert!(est.scores.column(k).sum().abs() < 1e-8);
        }
    }

    #[test]
    fn single_regressor_slope() {
        let x = array![[1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = array![2.0, 4.1, 5.9, 8.2, 9.8];
        let d = Dataset::new(y.clone(), x, names(1), vec![0]).unwrap();
        let est = ols_effects(&d, &[0]).unwrap();
        // Normal equations: slope = Sxy / Sxx with xbar = 3.
        let sxy: f64 = (0..5).map(|i| (i as f64 + 1.0 - 3.0) * y[i]).sum();
        assert_abs_diff_eq!(est.theta_hat[0], sxy / 10.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_outcome() {
        let (_, x) = sample();
        let d = Dataset::new(Array1::zeros(8), x, names(2), vec![0, 1]).unwrap();
        let est = double_select_effects(&d, &PenaltyConfig::default()).unwrap();
        assert_eq!(est.theta_hat, vec![0.0, 0.0]);
        assert!(est.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ols_index_bookkeeping_and_rank_errors() {
        let (y, x) = sample();
        let d = Dataset::new(y.clone(), x.clone(), names(2), vec![0]).unwrap();
        assert_eq!(ols_effects(&d, &[0, 1]).unwrap().k(), 2);

        let mut dup = Array2::<f64>::zeros((8, 3));
        dup.slice_mut(ndarray::s![.., ..2]).assign(&x);
        dup.column_mut(2).assign(&x.column(1));
        let d = Dataset::new(y, dup, names(3), vec![0]).unwrap();
        match ols_effects(&d, &[0]) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["x3"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_target_is_named() {
        let (y, x) = sample();
        let mut dup = Array2::<f64>::zeros((8, 3));
        dup.slice_mut(ndarray::s![.., ..2]).assign(&x);
        dup.column_mut(2).assign(&x.column(0));
        let d = Dataset::new(y, dup, names(3), vec![0, 2]).unwrap();
        assert!(matches!(
            double_select_effects(&d, &PenaltyConfig::default()),
            Err(Error::DegenerateTarget(name)) if name == "x3"
        ));
    }

    #[test]
    fn scores_can_be_stripped() {
        let (y, x) = sample();
        let d = Dataset::new(y, x, names(2), vec![0, 1]).unwrap();
        let est = ols_effects(&d, &[0, 1]).unwrap();
        assert!(est.has_scores());
        let slim = est.without_scores();
        assert!(!slim.has_scores());
        assert!(est.validate().is_ok());
    }
}
