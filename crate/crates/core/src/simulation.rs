//! Monte Carlo comparison of the multiple-testing procedures.
//!
//! Each replication draws `d_i ~ N(0, Sigma)` with `Sigma_jk = rho^|j-k|`,
//! sets `y_i = beta0 + d_i' theta + e_i` with `e_i ~ N(0, sigma2)`, estimates
//! all K coefficients by double selection and records which hypotheses each
//! method rejects.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::effects::double_select_effects;
use crate::error::{Error, Result};
use crate::lasso::PenaltyConfig;
use crate::linalg::cholesky;
use crate::multitest::{
    adjust_bh, adjust_bonferroni, adjust_holm, joint_confint_from_draws, multiplier_bootstrap, raw_pvalues,
    romano_wolf, Method,
};
use crate::rng::{derive_seed, substream, DOMAIN_DGP, DOMAIN_REPLICATION_SEED};
use crate::stats::{mean, sample_sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n: usize,
    pub k: usize,
    pub rho: f64,
    pub sigma2: f64,
    pub theta: Vec<f64>,
    pub beta0: f64,
    pub seed: u64,
    pub replications: usize,
}

impl DgpConfig {
    /// `s` nonzero coefficients spread evenly over `k` positions, magnitudes
    /// cycling through 1.0, 0.8, 0.6 with alternating signs.
    pub fn sparse_theta(k: usize, s: usize) -> Vec<f64> {
        let mut theta = vec![0.0; k];
        if s == 0 {
            return theta;
        }
        let step = (k / s).max(1);
        const MAGNITUDES: [f64; 3] = [1.0, 0.8, 0.6];
        for i in 0..s.min(k) {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            theta[i * step] = sign * MAGNITUDES[i % 3];
        }
        theta
    }

    pub fn new(
        n: usize,
        k: usize,
        rho: f64,
        sigma2: f64,
        s: usize,
        seed: u64,
        replications: usize,
    ) -> Result<DgpConfig> {
        if s > k {
            return Err(Error::InvalidInput(format!("support size {s} exceeds K = {k}")));
        }
        let cfg = DgpConfig {
            n,
            k,
            rho,
            sigma2,
            theta: Self::sparse_theta(k, s),
            beta0: 0.0,
            seed,
            replications,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The n = 500 design: K = 60, rho = 0.9, sigma2 = 3, s = 12.
    pub fn reference(n: usize, seed: u64, replications: usize) -> DgpConfig {
        Self::new(n, 60, 0.9, 3.0, 12, seed, replications).expect("valid reference design")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.k == 0 {
            return bad("K must be positive".into());
        }
        if self.theta.len() != self.k {
            return bad(format!("theta has {} entries for K = {}", self.theta.len(), self.k));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.rho >= 0.0) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        Ok(())
    }

    /// Non-null hypotheses.
    pub fn support(&self) -> Vec<bool> {
        self.theta.iter().map(|&t| t != 0.0).collect()
    }

    pub fn toeplitz(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.k, self.k), |(a, b)| {
            self.rho.powi((a as i64 - b as i64).unsigned_abs() as i32)
        })
    }
}

/// One simulated dataset; every column is a target.
pub fn generate_dgp(cfg: &DgpConfig, replication: usize) -> Result<Dataset> {
    cfg.validate()?;
    if cfg.rho >= 1.0 {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = cholesky(cfg.toeplitz().view())?;
    let (n, k) = (cfg.n, cfg.k);
    let mut rng = substream(cfg.seed, DOMAIN_DGP, replication as u64);
    let sigma = cfg.sigma2.sqrt();
    let mut x = Array2::<f64>::zeros((n, k));
    let mut y = Array1::<f64>::zeros(n);
    let mut z = vec![0.0; k];
    for i in 0..n {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        let eps: f64 = StandardNormal.sample(&mut rng);
        let mut yi = cfg.beta0 + sigma * eps;
        for a in 0..k {
            let mut d = 0.0;
            for b in 0..=a {
                d += chol[[a, b]] * z[b];
            }
            x[[i, a]] = d;
            yi += cfg.theta[a] * d;
        }
        y[i] = yi;
    }
    let names = (1..=k).map(|j| format!("d{j}")).collect();
    Dataset::new(y, x, names, (0..k).collect())
}

/// Aggregate rejection quality for one method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub mean_correct: f64,
    pub sd_correct: f64,
    pub mean_incorrect: f64,
    pub sd_incorrect: f64,
    pub fwer: f64,
    pub fdr: f64,
}

/// `rejections[r][k]` against `truth[k]` (true = non-null). FDP is zero
/// when a replication rejects nothing.
pub fn aggregate_metrics(rejections: &[Vec<bool>], truth: &[bool]) -> MethodMetrics {
    let mut correct = Vec::with_capacity(rejections.len());
    let mut incorrect = Vec::with_capacity(rejections.len());
    let mut fdp = Vec::with_capacity(rejections.len());
    for row in rejections {
        assert_eq!(row.len(), truth.len(), "rejection row and truth differ in length");
        let c = row.iter().zip(truth).filter(|(&r, &t)| r && t).count();
        let w = row.iter().zip(truth).filter(|(&r, &t)| r && !t).count();
        correct.push(c as f64);
        incorrect.push(w as f64);
        fdp.push(if c + w == 0 { 0.0 } else { w as f64 / (c + w) as f64 });
    }
    let fwer = incorrect.iter().filter(|&&w| w >= 1.0).count() as f64 / rejections.len().max(1) as f64;
    MethodMetrics {
        mean_correct: mean(&correct),
        sd_correct: sample_sd(&correct),
        mean_incorrect: mean(&incorrect),
        sd_incorrect: sample_sd(&incorrect),
        fwer,
        fdr: mean(&fdp),
    }
}

/// Procedures compared by the study, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StudyMethod {
    #[serde(rename = "naive")]
    Naive,
    BH,
    #[serde(rename = "bonferroni")]
    Bonferroni,
    #[serde(rename = "holm")]
    Holm,
    RW,
    #[serde(rename = "jointCI")]
    JointCi,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 6] = [
        StudyMethod::Naive,
        StudyMethod::BH,
        StudyMethod::Bonferroni,
        StudyMethod::Holm,
        StudyMethod::RW,
        StudyMethod::JointCi,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StudyMethod::Naive => "naive",
            StudyMethod::BH => "BH",
            StudyMethod::Bonferroni => "bonferroni",
            StudyMethod::Holm => "holm",
            StudyMethod::RW => "RW",
            StudyMethod::JointCi => "jointCI",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: StudyMethod,
    #[serde(flatten)]
    pub metrics: MethodMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: DgpConfig,
    pub alpha: f64,
    pub b: usize,
    pub replications: usize,
    pub failures: usize,
    pub methods: Vec<MethodReport>,
}

impl SimulationReport {
    pub fn metrics(&self, method: StudyMethod) -> &MethodMetrics {
        &self
            .methods
            .iter()
            .find(|m| m.method == method)
            .expect("every method is reported")
            .metrics
    }
}

/// Rejection sets of one replication, indexed like [`StudyMethod::ALL`].
pub type ReplicationRejections = [Vec<bool>; 6];

pub fn run_replication(
    cfg: &DgpConfig,
    replication: usize,
    alpha: f64,
    b: usize,
    penalty: &PenaltyConfig,
) -> Result<ReplicationRejections> {
    let data = generate_dgp(cfg, replication)?;
    let est = double_select_effects(&data, penalty)?;
    let raw = raw_pvalues(&est);
    let reject = |m: Method, p: &[f64]| -> Vec<bool> { p.iter().map(|&v| m.rejects(v, alpha)).collect() };
    let seed = derive_seed(cfg.seed, DOMAIN_REPLICATION_SEED, replication as u64);
    let draws = multiplier_bootstrap(&est, b, seed)?;
    let region = joint_confint_from_draws(&est, 1.0 - alpha, &draws)?;
    Ok([
        reject(Method::None, &raw),
        reject(Method::BH, &adjust_bh(&raw)),
        reject(Method::Bonferroni, &adjust_bonferroni(&raw)),
        reject(Method::Holm, &adjust_holm(&raw)),
        reject(Method::RW, &romano_wolf(&est.t_stat, draws.t_star.view())),
        region.excludes_zero(),
    ])
}

/// Study with homoscedastic penalty loadings.
pub fn run_study(cfg: &DgpConfig, alpha: f64, b: usize) -> Result<SimulationReport> {
    run_study_with(cfg, alpha, b, &PenaltyConfig::homoscedastic())
}

pub fn run_study_with(cfg: &DgpConfig, alpha: f64, b: usize, penalty: &PenaltyConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    if cfg.replications == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    let results: Vec<Result<ReplicationRejections>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r, alpha, b, penalty))
        .collect();

    let mut per_method: Vec<Vec<Vec<bool>>> = vec![Vec::new(); StudyMethod::ALL.len()];
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(sets) => {
                for (slot, set) in per_method.iter_mut().zip(sets) {
                    slot.push(set);
                }
            }
            Err(e) => failures.push((r, e)),
        }
    }
    if failures.len() * 20 > cfg.replications || failures.len() == cfg.replications {
        let (r, e) = &failures[0];
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: cfg.replications,
            first: format!("replication {r}: {e}"),
        });
    }
    for (r, e) in &failures {
        log::warn!("replication {r} failed and is excluded: {e}");
    }
    let truth = cfg.support();
    let methods = StudyMethod::ALL
        .iter()
        .zip(&per_method)
        .map(|(&method, rej)| MethodReport {
            method,
            metrics: aggregate_metrics(rej, &truth),
        })
        .collect();
    Ok(SimulationReport {
        config: cfg.clone(),
        alpha,
        b,
        replications: cfg.replications - failures.len(),
        failures: failures.len(),
        methods,
    })
}
