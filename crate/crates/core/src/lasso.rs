//! Lasso with a theory-driven penalty level and iterated penalty loadings.
//!
//! The objective is
//!
//! ```text
//! E_n[(y - b0 - x'b)^2] + (lambda / n) * sum_j psi_j |b_j|
//! ```
//!
//! solved by cyclic coordinate descent on centered, unit-RMS columns. The
//! intercept is never penalized. Coefficients are reported on the original
//! scale; loadings and KKT quantities live on the standardized scale.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::linalg::{Qr, RANK_TOL};
use crate::rng::{multiplier_sums, GaussianMultipliers, Multipliers, DOMAIN_SUP_SCORE};
use crate::stats::{empirical_quantile, normal_upper_quantile};

/// Convergence threshold on the largest standardized coefficient change in a pass.
pub const CD_TOL: f64 = 1e-7;
pub const CD_MAX_PASSES: usize = 1000;
/// Loading updates always run at least this many fits.
pub const MIN_LOADING_ITERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    /// Slack constant `c` of the penalty level.
    pub c: f64,
    /// Tail mass; `None` means `0.1 / ln(max(n, p))`.
    pub gamma: Option<f64>,
    pub max_loading_iters: usize,
    pub loading_tol: f64,
    pub homoscedastic: bool,
    pub post_lasso: bool,
    /// Fixed penalty level instead of the theory rule.
    pub lambda: Option<f64>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            c: 1.1,
            gamma: None,
            max_loading_iters: 15,
            loading_tol: 1e-4,
            homoscedastic: false,
            post_lasso: true,
            lambda: None,
        }
    }
}

impl PenaltyConfig {
    pub fn homoscedastic() -> Self {
        PenaltyConfig {
            homoscedastic: true,
            ..Default::default()
        }
    }

    pub fn gamma_for(&self, n: usize, p: usize) -> f64 {
        self.gamma.unwrap_or_else(|| 0.1 / (n.max(p) as f64).ln())
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.c >= 1.0) {
            return bad(format!("penalty constant c must be >= 1, got {}", self.c));
        }
        let g = self.gamma_for(n, p);
        if !(g > 0.0 && g < 0.5) {
            return bad(format!("gamma must lie in (0, 0.5), got {g}"));
        }
        if self.max_loading_iters == 0 {
            return bad("max_loading_iters must be positive".into());
        }
        if !(self.loading_tol > 0.0) {
            return bad("loading_tol must be positive".into());
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return bad(format!("lambda must be finite and >= 0, got {l}"));
            }
        }
        Ok(())
    }
}

/// `lambda = 2 c sqrt(n) Q(1 - gamma / (2p))`.
pub fn theory_lambda(n: usize, p: usize, cfg: &PenaltyConfig) -> Result<f64> {
    if n < 2 || p < 1 {
        return Err(Error::InvalidInput(format!(
            "penalty level needs n >= 2 and p >= 1 (n = {n}, p = {p})"
        )));
    }
    cfg.validate(n, p)?;
    let gamma = cfg.gamma_for(n, p);
    Ok(2.0 * cfg.c * (n as f64).sqrt() * normal_upper_quantile(gamma / (2.0 * p as f64)))
}

/// Loadings from raw second moments of the columns of `x`; `Err(j)` flags a zero loading.
fn loadings_for(x: ArrayView2<f64>, residuals: &[f64], homoscedastic: bool) -> std::result::Result<Vec<f64>, usize> {
    let n = x.nrows() as f64;
    let sigma = if homoscedastic {
        (residuals.iter().map(|e| e * e).sum::<f64>() / n).sqrt()
    } else {
        0.0
    };
    let mut out = Vec::with_capacity(x.ncols());
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let psi = if homoscedastic {
            sigma * (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
        } else {
            (col.iter().zip(residuals).map(|(v, e)| v * v * e * e).sum::<f64>() / n).sqrt()
        };
        if !(psi > 0.0) {
            return Err(j);
        }
        out.push(psi);
    }
    Ok(out)
}

/// Penalty loadings for the columns of `data.x()` as given (no standardization).
pub fn penalty_loadings(data: &Dataset, residuals: &[f64], cfg: &PenaltyConfig) -> Result<Vec<f64>> {
    if residuals.len() != data.n() {
        return Err(Error::InvalidInput(format!(
            "{} residuals for {} observations",
            residuals.len(),
            data.n()
        )));
    }
    loadings_for(data.x().view(), residuals, cfg.homoscedastic)
        .map_err(|j| Error::ZeroLoading(data.column_names()[j].clone()))
}

/// Standardized design with per-column bookkeeping.
pub(crate) struct Design<'a> {
    x: ArrayView2<'a, f64>,
    z: Array2<f64>,
    std: Standardization,
    col_sq: Vec<f64>,
    names: Vec<String>,
}

impl<'a> Design<'a> {
    pub(crate) fn new(x: ArrayView2<'a, f64>, names: Vec<String>) -> Result<Design<'a>> {
        let std = Standardization::fit(x, &names)?;
        let z = std.apply(x);
        let n = x.nrows() as f64;
        let col_sq = z.axis_iter(Axis(1)).map(|c| c.dot(&c) / n).collect();
        Ok(Design {
            x,
            z,
            std,
            col_sq,
            names,
        })
    }

    fn column(&self, j: usize) -> &[f64] {
        self.z
            .column(j)
            .to_slice()
            .expect("standardized design is column-major")
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest KKT violation on the standardized scale.
///
/// With `g_j = (2/n) sum_i z_ij r_i` and `t_j = (lambda/n) psi_j`: for
/// `b_j = 0` the violation is `max(0, |g_j| - t_j)`, otherwise `|g_j - t_j sign(b_j)|`.
pub fn kkt_violation(z: ArrayView2<f64>, residuals: &[f64], beta: &[f64], lambda: f64, loadings: &[f64]) -> f64 {
    let n = z.nrows() as f64;
    let r = ArrayView1::from(residuals);
    let mut worst = 0.0f64;
    for (j, col) in z.axis_iter(Axis(1)).enumerate() {
        let g = 2.0 * col.dot(&r) / n;
        let t = lambda * loadings[j] / n;
        let v = if beta[j] == 0.0 {
            (g.abs() - t).max(0.0)
        } else {
            (g - t * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Cyclic coordinate descent with naive residual updates.
///
/// `beta` and `resid` are warm starts and must satisfy `resid = yc - Z beta`.
/// Returns the number of passes.
fn coordinate_descent(
    design: &Design,
    lambda: f64,
    loadings: &[f64],
    beta: &mut [f64],
    resid: &mut [f64],
) -> Result<usize> {
    let (n, p) = design.z.dim();
    let nf = n as f64;
    let thresholds: Vec<f64> = loadings.iter().map(|l| lambda * l / (2.0 * nf)).collect();

    let sweep = |idx: &mut dyn Iterator<Item = usize>, beta: &mut [f64], resid: &mut [f64]| {
        let mut max_change = 0.0f64;
        for j in idx {
            let col = design.column(j);
            let sq = design.col_sq[j];
            let corr: f64 = col.iter().zip(resid.iter()).map(|(a, b)| a * b).sum::<f64>() / nf;
            let old = beta[j];
            let new = soft_threshold(corr + old * sq, thresholds[j]) / sq;
            let delta = new - old;
            if delta != 0.0 {
                for (r, zij) in resid.iter_mut().zip(col) {
                    *r -= delta * zij;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    };

    let non_convergence = |passes: usize, beta: &[f64], resid: &[f64]| Error::NonConvergence {
        passes,
        max_kkt_violation: kkt_violation(design.z.view(), resid, beta, lambda, loadings),
        coefficients: beta.to_vec(),
    };

    let mut passes = 0;
    loop {
        let change = sweep(&mut (0..p), beta, resid);
        passes += 1;
        if change < CD_TOL {
            return Ok(passes);
        }
        loop {
            if passes >= CD_MAX_PASSES {
                return Err(non_convergence(passes, beta, resid));
            }
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            let change = sweep(&mut active.into_iter(), beta, resid);
            passes += 1;
            if change < CD_TOL {
                break;
            }
        }
        if passes >= CD_MAX_PASSES {
            return Err(non_convergence(passes, beta, resid));
        }
    }
}

/// Unpenalized refit on a subset of standardized columns.
struct Refit {
    beta: Vec<f64>,
    resid: Vec<f64>,
    dropped: Vec<usize>,
}

fn refit_standardized(design: &Design, yc: &[f64], selected: &[usize]) -> Refit {
    let p = design.z.ncols();
    let mut beta = vec![0.0; p];
    let mut resid = yc.to_vec();
    if selected.is_empty() {
        return Refit {
            beta,
            resid,
            dropped: Vec::new(),
        };
    }
    let sub = design.z.select(Axis(1), selected);
    let qr = Qr::new(sub.view(), RANK_TOL);
    let coef = qr.solve(ArrayView1::from(yc));
    for (&pos, &b) in qr.kept().iter().zip(coef.iter()) {
        let j = selected[pos];
        beta[j] = b;
        for (r, zij) in resid.iter_mut().zip(design.column(j)) {
            *r -= b * zij;
        }
    }
    let dropped: Vec<usize> = qr.dropped().iter().map(|&pos| selected[pos]).collect();
    if !dropped.is_empty() {
        let names: Vec<&str> = dropped.iter().map(|&j| design.names[j].as_str()).collect();
        warn!("post-lasso refit dropped collinear column(s): {}", names.join(", "));
    }
    Refit { beta, resid, dropped }
}

/// Penalized fit, coefficients on the original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Columns with nonzero reported coefficient.
    pub selected: Vec<usize>,
    pub lambda: f64,
    /// Standardized-scale penalty loadings used by the final fit.
    pub loadings: Vec<f64>,
    pub residuals: Vec<f64>,
    pub post_lasso: bool,
    /// Penalized solution before any refit, standardized scale.
    pub penalized_coefficients: Vec<f64>,
    /// KKT violation of `penalized_coefficients`.
    pub kkt_violation: f64,
    pub loading_iterations: usize,
    pub passes: usize,
    pub r_squared: f64,
}

impl LassoFit {
    pub fn selected_names(&self) -> Vec<&str> {
        self.selected.iter().map(|&j| self.names[j].as_str()).collect()
    }
}

enum LoadingRule<'c> {
    Iterated(&'c PenaltyConfig),
    Fixed(&'c [f64]),
}

fn fit_design(
    design: &Design,
    y: ArrayView1<f64>,
    lambda: f64,
    rule: LoadingRule,
    post_lasso: bool,
) -> Result<LassoFit> {
    let (n, p) = design.z.dim();
    let ybar = y.sum() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let constant_outcome = yc.iter().all(|&v| v == 0.0);

    let zero_loading = |j: usize| Error::ZeroLoading(design.names[j].clone());
    let (homoscedastic, max_iters, tol) = match &rule {
        LoadingRule::Iterated(cfg) => (cfg.homoscedastic, cfg.max_loading_iters, cfg.loading_tol),
        LoadingRule::Fixed(_) => (false, 1, f64::INFINITY),
    };
    let mut loadings = match &rule {
        LoadingRule::Fixed(l) => {
            if l.len() != p {
                return Err(Error::InvalidInput(format!("{} loadings for {p} columns", l.len())));
            }
            if let Some(j) = l.iter().position(|v| !(*v > 0.0)) {
                return Err(zero_loading(j));
            }
            l.to_vec()
        }
        // A constant outcome is fit exactly by the intercept for any loadings.
        LoadingRule::Iterated(_) if constant_outcome => vec![1.0; p],
        LoadingRule::Iterated(_) => loadings_for(design.z.view(), &yc, homoscedastic).map_err(zero_loading)?,
    };

    let mut beta = vec![0.0; p];
    let mut resid = yc.clone();
    let mut iterations = 0;
    let mut passes = 0;
    let mut refit;
    loop {
        passes += coordinate_descent(design, lambda, &loadings, &mut beta, &mut resid)?;
        iterations += 1;
        let selected: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        refit = post_lasso.then(|| refit_standardized(design, &yc, &selected));
        let fit_resid = refit.as_ref().map_or(&resid, |r| &r.resid);
        if iterations >= max_iters || fit_resid.iter().all(|&e| e == 0.0) {
            break;
        }
        let next = loadings_for(design.z.view(), fit_resid, homoscedastic).map_err(zero_loading)?;
        let change = next
            .iter()
            .zip(&loadings)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0f64, f64::max);
        if iterations >= MIN_LOADING_ITERS && change < tol {
            break;
        }
        loadings = next;
    }

    let kkt = kkt_violation(design.z.view(), &resid, &beta, lambda, &loadings);
    let std_coef = refit.as_ref().map_or(&beta, |r| &r.beta);
    let coefficients: Vec<f64> = std_coef.iter().zip(&design.std.scales).map(|(b, s)| b / s).collect();
    let intercept = ybar
        - coefficients
            .iter()
            .zip(&design.std.means)
            .map(|(b, m)| b * m)
            .sum::<f64>();
    let residuals = original_residuals(design.x, y, intercept, &coefficients);
    let selected = (0..p).filter(|&j| coefficients[j] != 0.0).collect();
    let tss: f64 = yc.iter().map(|v| v * v).sum();
    let rss: f64 = residuals.iter().map(|v| v * v).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };
    if let Some(r) = &refit {
        debug_assert!(r.dropped.iter().all(|&j| coefficients[j] == 0.0));
    }

    Ok(LassoFit {
        names: design.names.clone(),
        intercept,
        coefficients,
        selected,
        lambda,
        loadings,
        residuals,
        post_lasso,
        penalized_coefficients: beta,
        kkt_violation: kkt,
        loading_iterations: iterations,
        passes,
        r_squared,
    })
}

fn original_residuals(x: ArrayView2<f64>, y: ArrayView1<f64>, intercept: f64, coef: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    for (j, &b) in coef.iter().enumerate() {
        if b != 0.0 {
            for (ri, xij) in r.iter_mut().zip(x.column(j)) {
                *ri -= b * xij;
            }
        }
    }
    r
}

/// Lasso of `y` on the columns of `x` with the configured penalty rule.
pub(crate) fn fit_lasso_xy(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    names: Vec<String>,
    cfg: &PenaltyConfig,
) -> Result<LassoFit> {
    let (n, p) = x.dim();
    cfg.validate(n, p)?;
    let lambda = match cfg.lambda {
        Some(l) => l,
        None => theory_lambda(n, p, cfg)?,
    };
    let design = Design::new(x, names)?;
    fit_design(&design, y, lambda, LoadingRule::Iterated(cfg), cfg.post_lasso)
}

/// Lasso of the outcome on every regressor of `data`.
pub fn fit_lasso(data: &Dataset, cfg: &PenaltyConfig) -> Result<LassoFit> {
    fit_lasso_xy(data.x().view(), data.y().view(), data.column_names().to_vec(), cfg)
}

/// Single fit with given standardized-scale loadings and no loading iteration.
pub fn fit_lasso_fixed(data: &Dataset, lambda: f64, loadings: &[f64], post_lasso: bool) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    let design = Design::new(data.x().view(), data.column_names().to_vec())?;
    fit_design(
        &design,
        data.y().view(),
        lambda,
        LoadingRule::Fixed(loadings),
        post_lasso,
    )
}

/// Least squares of the outcome on an intercept and a column subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresFit {
    pub intercept: f64,
    /// Length p; zero outside the kept subset.
    pub coefficients: Vec<f64>,
    pub selected: Vec<usize>,
    /// Requested columns removed as collinear.
    pub dropped: Vec<usize>,
    pub residuals: Vec<f64>,
}

pub fn post_lasso_refit(data: &Dataset, selected: &[usize]) -> Result<LeastSquaresFit> {
    let (n, p) = data.x().dim();
    if selected.len() >= n {
        return Err(Error::InvalidInput(format!(
            "{} selected columns leave no degrees of freedom with n = {n}",
            selected.len()
        )));
    }
    if let Some(&j) = selected.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidInput(format!("column index {j} out of range")));
    }
    let mut design = Array2::<f64>::ones((n, selected.len() + 1));
    for (l, &j) in selected.iter().enumerate() {
        design.column_mut(l + 1).assign(&data.x().column(j));
    }
    let qr = Qr::new(design.view(), RANK_TOL);
    let coef = qr.solve(data.y().view());
    let mut intercept = 0.0;
    let mut coefficients = vec![0.0; p];
    for (&pos, &b) in qr.kept().iter().zip(coef.iter()) {
        if pos == 0 {
            intercept = b;
        } else {
            coefficients[selected[pos - 1]] = b;
        }
    }
    let dropped: Vec<usize> = qr.dropped().iter().map(|&pos| selected[pos - 1]).collect();
    if !dropped.is_empty() {
        let names: Vec<&str> = dropped.iter().map(|&j| data.column_names()[j].as_str()).collect();
        warn!("refit dropped collinear column(s): {}", names.join(", "));
    }
    let residuals = original_residuals(data.x().view(), data.y().view(), intercept, &coefficients);
    let kept = selected.iter().copied().filter(|j| !dropped.contains(j)).collect();
    Ok(LeastSquaresFit {
        intercept,
        coefficients,
        selected: kept,
        dropped,
        residuals,
    })
}

/// Sup-score test of joint insignificance of all regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupScoreResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub b: usize,
    pub alpha: f64,
}

impl SupScoreResult {
    pub fn rejects(&self) -> bool {
        self.statistic > self.critical_value
    }
}

pub fn sup_score_test(data: &Dataset, alpha: f64, b: usize, seed: u64) -> Result<SupScoreResult> {
    sup_score_test_with(
        data,
        alpha,
        b,
        &GaussianMultipliers {
            seed,
            domain: DOMAIN_SUP_SCORE,
        },
    )
}

/// Sup-score test with an explicit multiplier source.
pub fn sup_score_test_with(
    data: &Dataset,
    alpha: f64,
    b: usize,
    multipliers: &dyn Multipliers,
) -> Result<SupScoreResult> {
    if b < 100 {
        return Err(Error::InvalidInput(format!("need B >= 100 bootstrap draws, got {b}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let z = data.standardization()?.apply(data.x().view());
    let n = data.n() as f64;
    let ybar = data.y().mean().unwrap_or(0.0);
    let w: Array1<f64> = data.y().mapv(|v| v - ybar);

    // u_ij = (y_i - ybar) z_ij / sqrt(n), so S = max_j |sum_i u_ij|.
    let mut u = z;
    for (mut row, &wi) in u.axis_iter_mut(Axis(0)).zip(w.iter()) {
        row.mapv_inplace(|v| v * wi / n.sqrt());
    }
    let statistic = u.sum_axis(Axis(0)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sums = multiplier_sums(u.view(), b, multipliers);
    let draws: Vec<f64> = sums
        .axis_iter(Axis(0))
        .map(|row| row.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    let critical_value = empirical_quantile(&draws, 1.0 - alpha);
    let exceed = draws.iter().filter(|&&s| s >= statistic).count();
    let p_value = (1 + exceed) as f64 / (b + 1) as f64;
    Ok(SupScoreResult {
        statistic,
        critical_value,
        p_value,
        b,
        alpha,
    })
}
