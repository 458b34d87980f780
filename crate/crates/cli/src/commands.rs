use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use hdsi_core::multitest::{self, DEFAULT_B};
use hdsi_core::simulation::{run_study, StudyMethod};
use hdsi_core::{
    double_select_effects, fit_lasso, ols_effects, sup_score_test, Dataset, DgpConfig, EffectEstimates, Method,
    PenaltyConfig, TargetSpec,
};
use log::warn;
use serde::Serialize;

use crate::output::{sig6, Sink, Table, SCHEMA};
use crate::{
    AdjustArgs, ConfintArgs, DataArgs, EffectsArgs, EffectsMethod, FitArgs, OutputArgs, PenaltyArgs, SimulateArgs,
    SourceArgs,
};

pub struct Context {
    pub argv: Vec<String>,
    pub threads: usize,
}

impl Context {
    fn sink(&self, out: &OutputArgs) -> Sink {
        Sink {
            json: out.json,
            out: out.out.clone(),
            argv: self.argv.clone(),
            threads: self.threads,
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random();
        eprintln!("seed: {s}");
        s
    })
}

fn resolve_b(b: Option<usize>, what: &str) -> usize {
    b.unwrap_or_else(|| {
        warn!("--B not given for {what}; using {DEFAULT_B} draws");
        DEFAULT_B
    })
}

fn penalty(args: &PenaltyArgs) -> PenaltyConfig {
    PenaltyConfig {
        c: args.c,
        homoscedastic: !args.hetero,
        post_lasso: args.post_lasso,
        ..PenaltyConfig::default()
    }
}

#[derive(Serialize)]
struct DataConfig {
    data: PathBuf,
    outcome: String,
    targets: Option<String>,
    interact: Option<String>,
}

fn load(path: &Path, outcome: &str, targets: Option<&str>, interact: Option<&str>) -> Result<Dataset> {
    let spec = targets.map_or(TargetSpec::All, TargetSpec::parse);
    let mut d = Dataset::load_csv(path, outcome, &spec).context("loading data")?;
    if let Some(focal) = interact {
        let partners: Vec<String> = d.column_names().iter().filter(|c| *c != focal).cloned().collect();
        d = d
            .build_interactions(focal, &partners)
            .context("building interactions")?;
    }
    let drop = d.drop_constants().context("loading data")?;
    if !drop.dropped.is_empty() {
        warn!("dropped constant column(s): {}", drop.dropped.join(", "));
    }
    Ok(drop.data)
}

fn data_config(a: &DataArgs, targets: Option<&str>) -> DataConfig {
    DataConfig {
        data: a.data.clone(),
        outcome: a.outcome.clone(),
        targets: targets.map(str::to_string),
        interact: a.interact.clone(),
    }
}

#[derive(Serialize)]
struct FitConfig {
    #[serde(flatten)]
    data: DataConfig,
    penalty: PenaltyConfig,
    alpha: f64,
    b: usize,
}

#[derive(Serialize)]
struct FitResult {
    fit: hdsi_core::LassoFit,
    sup_score: hdsi_core::SupScoreResult,
}

pub fn fit(ctx: &Context, a: FitArgs) -> Result<()> {
    let start = Instant::now();
    let seed = resolve_seed(a.seed);
    let cfg = penalty(&a.penalty);
    let data = load(&a.data.data, &a.data.outcome, None, a.data.interact.as_deref())?;
    let fit = fit_lasso(&data, &cfg).context("fitting lasso")?;
    let sup = sup_score_test(&data, a.alpha, a.b, seed).context("sup-score test")?;

    let mut text = format!(
        "{}, {} loadings: n = {}, p = {}, lambda = {}\n",
        if fit.post_lasso { "Post-lasso" } else { "Lasso" },
        if cfg.homoscedastic {
            "homoscedastic"
        } else {
            "heteroscedastic"
        },
        data.n(),
        data.p(),
        sig6(fit.lambda)
    );
    text.push_str(&format!(
        "{} of {} regressors selected\n\n",
        fit.selected.len(),
        data.p()
    ));
    let mut t = Table::new(["", "Estimate"]);
    t.row("(Intercept)", [sig6(fit.intercept)]);
    for &j in &fit.selected {
        t.row(&fit.names[j], [sig6(fit.coefficients[j])]);
    }
    text.push_str(&t.render());
    text.push_str(&format!("\nR-squared: {}\n", sig6(fit.r_squared)));
    text.push_str(&format!(
        "Sup-score test: statistic = {}, critical value = {}, p-value = {} (B = {}, seed = {seed})\n",
        sig6(sup.statistic),
        sig6(sup.critical_value),
        sig6(sup.p_value),
        sup.b
    ));

    let config = FitConfig {
        data: data_config(&a.data, None),
        penalty: cfg,
        alpha: a.alpha,
        b: a.b,
    };
    let result = FitResult { fit, sup_score: sup };
    ctx.sink(&a.output)
        .emit("fit", Some(seed), &config, &result, &text, start.elapsed())
}

fn estimate(data: &Dataset, method: EffectsMethod, cfg: &PenaltyConfig) -> Result<EffectEstimates> {
    match method {
        EffectsMethod::Ds => double_select_effects(data, cfg),
        EffectsMethod::Ols => ols_effects(data, data.target_index()),
    }
    .context("estimating effects")
}

fn effects_table(est: &EffectEstimates) -> String {
    let label = match est.method {
        hdsi_core::EffectMethod::Ds => "Double selection",
        hdsi_core::EffectMethod::Ols => "Least squares",
    };
    let mut text = format!("{label}: n = {}, K = {}", est.n, est.k());
    if est.method == hdsi_core::EffectMethod::Ds {
        text.push_str(&format!(
            ", controls in final regression = {}",
            est.selected_union.len()
        ));
    }
    text.push_str("\n\n");
    let p = multitest::raw_pvalues(est);
    let mut t = Table::new(["", "Estimate", "Std. Error", "t value", "Pr(>|t|)"]);
    for k in 0..est.k() {
        t.row(
            &est.names[k],
            [
                sig6(est.theta_hat[k]),
                sig6(est.std_err[k]),
                sig6(est.t_stat[k]),
                sig6(p[k]),
            ],
        );
    }
    text.push_str(&t.render());
    text
}

#[derive(Serialize)]
struct EffectsConfig {
    #[serde(flatten)]
    data: DataConfig,
    method: EffectsMethod,
    penalty: Option<PenaltyConfig>,
    scores: bool,
}

pub fn effects(ctx: &Context, a: EffectsArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = penalty(&a.penalty);
    let data = load(
        &a.data.data,
        &a.data.outcome,
        Some(&a.targets),
        a.data.interact.as_deref(),
    )?;
    let est = estimate(&data, a.method, &cfg)?;
    let text = effects_table(&est);
    let config = EffectsConfig {
        data: data_config(&a.data, Some(&a.targets)),
        method: a.method,
        penalty: matches!(a.method, EffectsMethod::Ds).then_some(cfg),
        scores: a.scores,
    };
    let result = if a.scores { est } else { est.without_scores() };
    ctx.sink(&a.output)
        .emit("effects", None, &config, &result, &text, start.elapsed())
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum SourceConfig {
    Input(PathBuf),
    Inline {
        #[serde(flatten)]
        data: DataConfig,
        method: EffectsMethod,
        penalty: Option<PenaltyConfig>,
    },
}

fn read_effects(path: &Path) -> Result<EffectEstimates> {
    let text = fs::read_to_string(path).with_context(|| format!("reading effects: {}", path.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("reading effects: {}", path.display()))?;
    if let Some(obj) = value.as_object_mut() {
        if obj.contains_key("result") {
            if obj.get("schema").and_then(|s| s.as_u64()) != Some(SCHEMA.into()) {
                bail!("reading effects: {} has an unsupported schema", path.display());
            }
            if obj.get("command").and_then(|c| c.as_str()) != Some("effects") {
                bail!("reading effects: {} is not output of `hdsi effects`", path.display());
            }
            value = obj.remove("result").unwrap_or_default();
        }
    }
    let est: EffectEstimates =
        serde_json::from_value(value).with_context(|| format!("reading effects: {}", path.display()))?;
    est.validate()
        .with_context(|| format!("reading effects: {}", path.display()))?;
    Ok(est)
}

fn source(s: &SourceArgs) -> Result<(EffectEstimates, SourceConfig)> {
    if let Some(path) = &s.input {
        return Ok((read_effects(path)?, SourceConfig::Input(path.clone())));
    }
    let (Some(path), Some(outcome)) = (&s.data, &s.outcome) else {
        bail!("either --input or --data with --outcome is required");
    };
    let cfg = penalty(&s.penalty);
    let data = load(path, outcome, s.targets.as_deref(), s.interact.as_deref())?;
    let est = estimate(&data, s.effects_method, &cfg)?;
    let config = SourceConfig::Inline {
        data: DataConfig {
            data: path.clone(),
            outcome: outcome.clone(),
            targets: s.targets.clone(),
            interact: s.interact.clone(),
        },
        method: s.effects_method,
        penalty: matches!(s.effects_method, EffectsMethod::Ds).then_some(cfg),
    };
    Ok((est, config))
}

fn need_scores(est: &EffectEstimates) -> Result<()> {
    if !est.has_scores() {
        bail!("reading effects: no scores in the input; re-run `hdsi effects` with --scores");
    }
    Ok(())
}

#[derive(Serialize)]
struct AdjustConfig {
    source: SourceConfig,
    method: Method,
    b: Option<usize>,
}

#[derive(Serialize)]
struct AdjustResult {
    estimate: Vec<f64>,
    #[serde(flatten)]
    adjusted: multitest::AdjustedPValues,
}

pub fn adjust(ctx: &Context, a: AdjustArgs) -> Result<()> {
    let start = Instant::now();
    let (est, source) = source(&a.source)?;
    let (b, seed) = if a.method == Method::RW {
        need_scores(&est)?;
        (Some(resolve_b(a.b, "RW")), Some(resolve_seed(a.seed)))
    } else {
        (None, None)
    };
    let adjusted =
        multitest::adjust(&est, a.method, b.unwrap_or(DEFAULT_B), seed.unwrap_or(0)).context("adjusting p-values")?;

    let mut text = format!("Adjusted p-values, method {}", a.method);
    if let (Some(b), Some(seed)) = (b, seed) {
        text.push_str(&format!(" (B = {b}, seed = {seed})"));
    }
    text.push_str("\n\n");
    let mut t = Table::new(["", "Estimate", "pval"]);
    for k in 0..est.k() {
        t.row(&est.names[k], [sig6(est.theta_hat[k]), sig6(adjusted.adjusted[k])]);
    }
    text.push_str(&t.render());

    let config = AdjustConfig {
        source,
        method: a.method,
        b,
    };
    let result = AdjustResult {
        estimate: est.theta_hat.clone(),
        adjusted,
    };
    ctx.sink(&a.output)
        .emit("adjust", seed, &config, &result, &text, start.elapsed())
}

#[derive(Serialize)]
struct ConfintConfig {
    source: SourceConfig,
    level: f64,
    joint: bool,
    b: Option<usize>,
}

pub fn confint(ctx: &Context, a: ConfintArgs) -> Result<()> {
    let start = Instant::now();
    let (est, source) = source(&a.source)?;
    let (region, b, seed) = if a.joint {
        need_scores(&est)?;
        let b = resolve_b(a.b, "the joint region");
        let seed = resolve_seed(a.seed);
        let r = multitest::joint_confint(&est, a.level, b, seed).context("joint confidence region")?;
        (r, Some(b), Some(seed))
    } else {
        let r = multitest::marginal_confint(&est, a.level).context("confidence intervals")?;
        (r, None, None)
    };

    let pct = |v: f64| format!("{} %", sig6(100.0 * v).trim_end_matches('0').trim_end_matches('.'));
    let lo = (1.0 - a.level) / 2.0;
    let mut text = if a.joint {
        format!(
            "Joint {} confidence region (critical value {}, B = {}, seed = {})\n\n",
            pct(a.level),
            sig6(region.critical),
            b.unwrap_or_default(),
            seed.unwrap_or_default()
        )
    } else {
        format!("Marginal {} confidence intervals\n\n", pct(a.level))
    };
    let mut t = Table::new([String::new(), pct(lo), pct(1.0 - lo)]);
    for k in 0..est.k() {
        t.row(&region.names[k], [sig6(region.lower[k]), sig6(region.upper[k])]);
    }
    text.push_str(&t.render());

    let config = ConfintConfig {
        source,
        level: a.level,
        joint: a.joint,
        b,
    };
    ctx.sink(&a.output)
        .emit("confint", seed, &config, &region, &text, start.elapsed())
}

#[derive(Serialize)]
struct SimulateConfig {
    n: usize,
    #[serde(rename = "K")]
    k: usize,
    rho: f64,
    sigma2: f64,
    s: usize,
    #[serde(rename = "R")]
    r: usize,
    alpha: f64,
    #[serde(rename = "B")]
    b: usize,
}

pub fn simulate(ctx: &Context, a: SimulateArgs) -> Result<()> {
    let start = Instant::now();
    let seed = resolve_seed(a.seed);
    let cfg = DgpConfig::new(a.n, a.k, a.rho, a.sigma2, a.s, seed, a.r).context("simulation")?;
    let report = run_study(&cfg, a.alpha, a.b).context("simulation")?;

    let mut text = format!(
        "Simulation: n = {}, K = {}, rho = {}, sigma2 = {}, s = {}, R = {}, B = {}, alpha = {}, seed = {seed}\n",
        a.n, a.k, a.rho, a.sigma2, a.s, a.r, a.b, a.alpha
    );
    if report.failures > 0 {
        text.push_str(&format!("{} replication(s) failed and were skipped\n", report.failures));
    }
    text.push('\n');
    let mut t = Table::new(["", "correct", "(sd)", "incorrect", "(sd)", "FWER", "FDR"]);
    for m in StudyMethod::ALL {
        let x = report.metrics(m);
        t.row(
            m.label(),
            [
                sig6(x.mean_correct),
                sig6(x.sd_correct),
                sig6(x.mean_incorrect),
                sig6(x.sd_incorrect),
                sig6(x.fwer),
                sig6(x.fdr),
            ],
        );
    }
    text.push_str(&t.render());

    let config = SimulateConfig {
        n: a.n,
        k: a.k,
        rho: a.rho,
        sigma2: a.sigma2,
        s: a.s,
        r: a.r,
        alpha: a.alpha,
        b: a.b,
    };
    ctx.sink(&a.output)
        .emit("simulate", Some(seed), &config, &report, &text, start.elapsed())
}
