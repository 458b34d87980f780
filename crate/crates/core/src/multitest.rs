//! Simultaneous inference on the target coefficients.
//!
//! Classical adjustments work on raw p-values alone. The Romano-Wolf stepdown
//! and the joint confidence region both use the multiplier bootstrap of the
//! effect scores; given the same seed they share the same draws.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::effects::EffectEstimates;
use crate::error::{Error, Result};
use crate::rng::{multiplier_sums, GaussianMultipliers, Multipliers, DOMAIN_MULTIPLIER};
use crate::stats::{empirical_quantile, normal_quantile, two_sided_pvalue};

pub const DEFAULT_B: usize = 1000;
pub const MIN_B: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "bonferroni")]
    Bonferroni,
    #[serde(rename = "holm")]
    Holm,
    BH,
    RW,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::None, Method::Bonferroni, Method::Holm, Method::BH, Method::RW];

    /// Rejection rule on adjusted p-values: strict for none and Bonferroni,
    /// `<=` for the stepwise methods.
    pub fn rejects(self, adjusted: f64, alpha: f64) -> bool {
        match self {
            Method::None | Method::Bonferroni => adjusted < alpha,
            Method::Holm | Method::BH | Method::RW => adjusted <= alpha,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::None => "none",
            Method::Bonferroni => "bonferroni",
            Method::Holm => "holm",
            Method::BH => "BH",
            Method::RW => "RW",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Method::None),
            "bonferroni" => Ok(Method::Bonferroni),
            "holm" => Ok(Method::Holm),
            "bh" | "fdr" => Ok(Method::BH),
            "rw" | "romano-wolf" => Ok(Method::RW),
            _ => Err(Error::InvalidInput(format!("unknown adjustment method '{s}'"))),
        }
    }
}

pub fn raw_pvalues_from_t(t: &[f64]) -> Vec<f64> {
    t.iter().map(|&v| two_sided_pvalue(v)).collect()
}

pub fn raw_pvalues(est: &EffectEstimates) -> Vec<f64> {
    raw_pvalues_from_t(&est.t_stat)
}

/// Indices sorted by ascending p-value, ties by position.
fn ascending(p: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    idx
}

pub fn adjust_bonferroni(p: &[f64]) -> Vec<f64> {
    let k = p.len() as f64;
    p.iter().map(|&v| (k * v).min(1.0)).collect()
}

/// Holm: cumulative max of `(K - j + 1) p_(j)` in ascending order.
pub fn adjust_holm(p: &[f64]) -> Vec<f64> {
    let k = p.len();
    let mut out = vec![0.0; k];
    let mut running = 0.0f64;
    for (j, &i) in ascending(p).iter().enumerate() {
        let q = ((k - j) as f64 * p[i]).min(1.0);
        running = running.max(q);
        out[i] = running;
    }
    out
}

/// Benjamini-Hochberg: cumulative min of `K p_(j) / j` from the largest p-value down.
pub fn adjust_bh(p: &[f64]) -> Vec<f64> {
    let k = p.len();
    let order = ascending(p);
    let mut out = vec![0.0; k];
    let mut running = 1.0f64;
    for (j, &i) in order.iter().enumerate().rev() {
        let factor = k as f64 / (j + 1) as f64;
        running = running.min((factor * p[i]).min(1.0));
        out[i] = running;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedPValues {
    pub names: Vec<String>,
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
    pub method: Method,
    pub alpha_meta: Option<f64>,
    pub b: Option<usize>,
    pub seed: Option<u64>,
}

impl AdjustedPValues {
    pub fn rejections(&self, alpha: f64) -> Vec<bool> {
        self.adjusted.iter().map(|&p| self.method.rejects(p, alpha)).collect()
    }
}

/// Bootstrap t-statistics, one row per draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraws {
    pub t_star: Array2<f64>,
    pub b: usize,
    pub seed: u64,
}

impl BootstrapDraws {
    /// `max_k |t*_k|` per draw.
    pub fn max_abs(&self) -> Vec<f64> {
        self.t_star
            .axis_iter(Axis(0))
            .map(|r| r.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }
}

pub fn multiplier_bootstrap(est: &EffectEstimates, b: usize, seed: u64) -> Result<BootstrapDraws> {
    let source = GaussianMultipliers {
        seed,
        domain: DOMAIN_MULTIPLIER,
    };
    multiplier_bootstrap_with(est, b, seed, &source)
}

/// `t*_k = sum_i g_i psi_ik / (sqrt(n) sigma_k)` for each draw of `g`.
pub fn multiplier_bootstrap_with(
    est: &EffectEstimates,
    b: usize,
    seed: u64,
    multipliers: &dyn Multipliers,
) -> Result<BootstrapDraws> {
    if b < MIN_B {
        return Err(Error::InvalidInput(format!(
            "need B >= {MIN_B} bootstrap draws, got {b}"
        )));
    }
    if !est.has_scores() {
        return Err(Error::InvalidInput(
            "effect estimates carry no scores; re-run effects with scores".into(),
        ));
    }
    let sigma = est.score_sd();
    if let Some(k) = sigma.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ZeroScoreVariance(est.names[k].clone()));
    }
    let sqrt_n = (est.n as f64).sqrt();
    let mut u = est.scores.clone();
    for (mut col, s) in u.axis_iter_mut(Axis(1)).zip(&sigma) {
        col.mapv_inplace(|v| v / (sqrt_n * s));
    }
    Ok(BootstrapDraws {
        t_star: multiplier_sums(u.view(), b, multipliers),
        b,
        seed,
    })
}

/// Romano-Wolf stepdown p-values from observed and bootstrap statistics.
///
/// Statistics are sorted by decreasing `|t|` (ties by position); for each
/// rank the initial p-value is the share of draws whose maximum `|t*|` over
/// that rank and all later ones reaches `|t|`; monotonicity is then enforced
/// by a running maximum. Output is in the original order.
pub fn romano_wolf(t: &[f64], t_star: ArrayView2<f64>) -> Vec<f64> {
    let k = t.len();
    assert_eq!(t_star.ncols(), k, "bootstrap draws have wrong width");
    let b = t_star.nrows();
    let abs_t: Vec<f64> = t.iter().map(|v| v.abs()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &c| abs_t[c].total_cmp(&abs_t[a]).then(a.cmp(&c)));

    let mut hits = vec![0usize; k];
    let mut tail = vec![0.0f64; k];
    for row in t_star.axis_iter(Axis(0)) {
        let mut m = 0.0f64;
        for r in (0..k).rev() {
            m = m.max(row[order[r]].abs());
            tail[r] = m;
        }
        for r in 0..k {
            if tail[r] >= abs_t[order[r]] {
                hits[r] += 1;
            }
        }
    }

    let mut out = vec![0.0; k];
    let mut running = 0.0f64;
    for r in 0..k {
        running = running.max(hits[r] as f64 / b as f64);
        out[order[r]] = running;
    }
    out
}

pub fn adjust_rw(est: &EffectEstimates, b: usize, seed: u64) -> Result<AdjustedPValues> {
    let draws = multiplier_bootstrap(est, b, seed)?;
    Ok(adjust_rw_from_draws(est, &draws))
}

pub fn adjust_rw_from_draws(est: &EffectEstimates, draws: &BootstrapDraws) -> AdjustedPValues {
    AdjustedPValues {
        names: est.names.clone(),
        raw: raw_pvalues(est),
        adjusted: romano_wolf(&est.t_stat, draws.t_star.view()),
        method: Method::RW,
        alpha_meta: None,
        b: Some(draws.b),
        seed: Some(draws.seed),
    }
}

/// Any method; `b` and `seed` are used by RW only.
pub fn adjust(est: &EffectEstimates, method: Method, b: usize, seed: u64) -> Result<AdjustedPValues> {
    if method == Method::RW {
        return adjust_rw(est, b, seed);
    }
    let raw = raw_pvalues(est);
    let adjusted = match method {
        Method::None => raw.clone(),
        Method::Bonferroni => adjust_bonferroni(&raw),
        Method::Holm => adjust_holm(&raw),
        Method::BH => adjust_bh(&raw),
        Method::RW => unreachable!(),
    };
    Ok(AdjustedPValues {
        names: est.names.clone(),
        raw,
        adjusted,
        method,
        alpha_meta: None,
        b: None,
        seed: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfidenceRegion {
    pub names: Vec<String>,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
    /// Half-width multiplier applied to each standard error.
    pub critical: f64,
    pub joint: bool,
    pub b: Option<usize>,
    pub seed: Option<u64>,
}

impl JointConfidenceRegion {
    fn around(est: &EffectEstimates, level: f64, critical: f64) -> JointConfidenceRegion {
        let (lower, upper) = est
            .theta_hat
            .iter()
            .zip(&est.std_err)
            .map(|(t, s)| (t - critical * s, t + critical * s))
            .unzip();
        JointConfidenceRegion {
            names: est.names.clone(),
            estimate: est.theta_hat.clone(),
            lower,
            upper,
            level,
            critical,
            joint: false,
            b: None,
            seed: None,
        }
    }

    /// Targets whose interval excludes zero.
    pub fn excludes_zero(&self) -> Vec<bool> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| l > 0.0 || u < 0.0)
            .collect()
    }

    pub fn covers(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(t, (l, u))| l <= t && t <= u)
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.5 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("level must lie in (0.5, 1), got {level}")))
    }
}

pub fn joint_confint(est: &EffectEstimates, level: f64, b: usize, seed: u64) -> Result<JointConfidenceRegion> {
    check_level(level)?;
    let draws = multiplier_bootstrap(est, b, seed)?;
    joint_confint_from_draws(est, level, &draws)
}

/// Half-width from the `level` quantile of `max_k |t*_k|`.
pub fn joint_confint_from_draws(
    est: &EffectEstimates,
    level: f64,
    draws: &BootstrapDraws,
) -> Result<JointConfidenceRegion> {
    check_level(level)?;
    let critical = empirical_quantile(&draws.max_abs(), level);
    Ok(JointConfidenceRegion {
        joint: true,
        b: Some(draws.b),
        seed: Some(draws.seed),
        ..JointConfidenceRegion::around(est, level, critical)
    })
}

/// Per-coordinate normal intervals.
pub fn marginal_confint(est: &EffectEstimates, level: f64) -> Result<JointConfidenceRegion> {
    check_level(level)?;
    let z = normal_quantile(0.5 + level / 2.0);
    Ok(JointConfidenceRegion::around(est, level, z))
}
