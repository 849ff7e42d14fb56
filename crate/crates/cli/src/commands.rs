//! Subcommand implementations. Each command resolves its flat configuration,
//! echoes the fully resolved header into the output, and writes a CSV or
//! json-lines table.

use crate::config::{CliError, CliResult, Registry, Resolved};
use auxvar::bench::{outcomes_to_csv, run_plan, summarize, summary_to_json, ExperimentPlan};
use auxvar::estimators::{
    run_replicates, AbcConfig, DistanceKind, EstimateSample, EstimatorConfig, RunSpec, SampleTag,
    Variant,
};
use auxvar::inference::{abc_mcmc, pseudo_marginal_mh, ChainRun, PosteriorSpec};
use auxvar::kernels::{detailed_balance_check, AnnealKernel, BridgeSchedule, ScanOrder};
use auxvar::mrf::{
    exact_likelihood, exact_log_partition, log_gamma, Boundary, LatticeConfig, MrfModel,
    ThetaParam,
};
use auxvar::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json-lines" => Ok(OutputFormat::JsonLines),
            other => Err(format!("unknown format `{other}` (csv|json-lines)")),
        }
    }
}

pub static ESTIMATE_REGISTRY: Registry = Registry {
    command: "estimate",
    defaults: &[
        ("rows", "2"),
        ("cols", "2"),
        ("boundary", "free"),
        ("theta", "0.5"),
        ("theta_ref", "0.2"),
        ("a", "10"),
        ("betas", ""),
        ("sweeps_per_level", "1"),
        ("variant", "mav"),
        ("b", "100"),
        ("replicates", "1000"),
        ("data", ""),
        ("epsilon", "0"),
        ("distance", "exact_match"),
        ("seed", "0"),
        ("format", "csv"),
        ("out", "-"),
    ],
};

pub static INFER_REGISTRY: Registry = Registry {
    command: "infer",
    defaults: &[
        ("rows", "2"),
        ("cols", "2"),
        ("boundary", "free"),
        ("theta_ref", "0.2"),
        ("a", "10"),
        ("betas", ""),
        ("sweeps_per_level", "1"),
        ("variant", "mav"),
        ("b", "100"),
        ("data", ""),
        ("prior_lo", "0"),
        ("prior_hi", "1.5"),
        ("proposal_sd", "0.1"),
        ("iterations", "10000"),
        ("init_theta", ""),
        ("epsilon", "0"),
        ("distance", "exact_match"),
        ("seed", "0"),
        ("format", "csv"),
        ("out", "-"),
    ],
};

pub static BENCH_REGISTRY: Registry = Registry {
    command: "bench",
    defaults: &[
        ("rows", "2"),
        ("cols", "2"),
        ("boundary", "free"),
        ("theta_grid", "0.2,0.5,0.8"),
        ("theta_ref_grid", "0,0.2"),
        ("a_grid", "2,10"),
        ("b_grid", "16,256"),
        ("variants", "mav"),
        ("replicates", "1000"),
        ("data", ""),
        ("epsilon", "0"),
        ("distance", "exact_match"),
        ("seed", "0"),
        ("timings", "false"),
        ("out", "-"),
        ("summary_out", ""),
    ],
};

pub static ORACLE_REGISTRY: Registry = Registry {
    command: "oracle",
    defaults: &[
        ("rows", "2"),
        ("cols", "2"),
        ("boundary", "free"),
        ("theta", "0.5"),
        ("data", ""),
        ("out", "-"),
    ],
};

pub static VERIFY_REGISTRY: Registry = Registry {
    command: "verify",
    defaults: &[
        ("rows", "1"),
        ("cols", "2"),
        ("boundary", "free"),
        ("theta", "0.7"),
        ("theta_ref", "0.2"),
        ("a", "5"),
        ("betas", ""),
        ("sweeps_per_level", "1"),
        ("b", "0"),
        ("data", ""),
        ("tolerance", "1e-12"),
        ("nonreversible", "false"),
        ("seed", "0"),
        ("out", "-"),
    ],
};

fn build_model(r: &Resolved) -> CliResult<MrfModel> {
    let rows: usize = r.get("rows")?;
    let cols: usize = r.get("cols")?;
    let boundary: Boundary = r.get("boundary")?;
    Ok(MrfModel::new(rows, cols, boundary)?)
}

/// Resolve the bridging ladder: an explicit `betas` list wins and `a` is
/// echoed as its length; otherwise `a` selects linear spacing.
fn build_schedule(r: &mut Resolved) -> CliResult<BridgeSchedule> {
    let betas: Vec<f64> = r.get_list("betas")?;
    let schedule = if betas.is_empty() {
        BridgeSchedule::linear(r.get("a")?)?
    } else {
        BridgeSchedule::new(betas)?
    };
    r.set("a", schedule.levels().to_string());
    r.set(
        "betas",
        schedule
            .betas()
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    Ok(schedule)
}

/// Resolve the dataset, defaulting to the all-up configuration, and echo the
/// resolved spins.
fn build_data(r: &mut Resolved, model: &MrfModel) -> CliResult<LatticeConfig> {
    let raw = r.raw("data").to_string();
    let data = if raw.is_empty() {
        LatticeConfig::all_plus(model.rows(), model.cols())
    } else {
        LatticeConfig::parse(model.rows(), model.cols(), &raw)
            .map_err(|e| CliError::config(format!("invalid data: {e}")))?
    };
    r.set("data", data.render());
    Ok(data)
}

fn write_out(path: &str, content: &str) -> CliResult<()> {
    if path == "-" {
        use std::io::Write;
        std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(|e| CliError::config(format!("cannot write to stdout: {e}")))
    } else {
        std::fs::write(path, content)
            .map_err(|e| CliError::config(format!("cannot write `{path}`: {e}")))
    }
}

fn fmt_or_na(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "na".into())
}

fn json_number(v: f64) -> serde_json::Value {
    // non-finite log values (rejected indicator draws) serialize as strings
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or_else(|| serde_json::Value::String(v.to_string()))
}

struct TagSummary {
    tag: SampleTag,
    mean_exp: f64,
    se: Option<f64>,
    exact: Option<f64>,
}

fn summarize_samples(
    samples: &[EstimateSample],
    model: &MrfModel,
    theta: &ThetaParam,
    y: &LatticeConfig,
) -> Vec<TagSummary> {
    let mut tags: Vec<SampleTag> = Vec::new();
    for s in samples {
        if !tags.contains(&s.tag) {
            tags.push(s.tag);
        }
    }
    let ratio_exact = || -> Option<f64> {
        let lzr = exact_log_partition(model, theta.theta_ref).ok()?;
        let lz = exact_log_partition(model, theta.theta).ok()?;
        Some((lzr - lz).exp())
    };
    tags.into_iter()
        .map(|tag| {
            let values: Vec<f64> = samples
                .iter()
                .filter(|s| s.tag == tag)
                .map(EstimateSample::exp_value)
                .collect();
            let exact = match tag {
                SampleTag::Sav | SampleTag::Mav | SampleTag::ReverseChainV => ratio_exact(),
                SampleTag::ReverseChainW => ratio_exact().and_then(|ratio| {
                    log_gamma(model, y, theta.theta)
                        .ok()
                        .map(|lg| lg.exp() * ratio)
                }),
                SampleTag::AbcIndicator => exact_likelihood(model, y, theta.theta).ok(),
            };
            TagSummary {
                tag,
                mean_exp: stats::mean(&values),
                se: stats::standard_error(&values),
                exact,
            }
        })
        .collect()
}

pub fn cmd_estimate(
    config_path: Option<&str>,
    flags: &[(&'static str, Option<String>)],
) -> CliResult<()> {
    let mut r = Resolved::build(&ESTIMATE_REGISTRY, config_path, flags)?;
    let model = build_model(&r)?;
    let schedule = build_schedule(&mut r)?;
    let data = build_data(&mut r, &model)?;
    let theta = ThetaParam::new(r.get("theta")?, r.get("theta_ref")?)?;
    let variant: Variant = r.get("variant")?;
    let abc = AbcConfig::new(r.get("epsilon")?, r.get::<DistanceKind>("distance")?)?;
    let config = EstimatorConfig::new(
        schedule.levels(),
        r.get("b")?,
        r.get("replicates")?,
        r.get("seed")?,
        variant,
    )?;
    let spec = RunSpec::new(&model, theta, &schedule, &config)
        .with_data(&data)
        .with_abc(&abc)
        .with_sweeps(r.get("sweeps_per_level")?);
    let samples = run_replicates(&spec)?;
    let format: OutputFormat = r.get("format")?;

    let mut out = r.header();
    let summaries = summarize_samples(&samples, &model, &theta, &data);
    match format {
        OutputFormat::Csv => {
            out.push_str("variant,theta,theta_ref,a,b,replicate,log_value\n");
            let per_replicate = if variant == Variant::ReverseChain { 2 } else { 1 };
            for (i, s) in samples.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    s.tag,
                    theta.theta,
                    theta.theta_ref,
                    config.a,
                    config.b,
                    i / per_replicate,
                    s.log_value
                ));
            }
            for s in &summaries {
                let bias = s.exact.map(|e| s.mean_exp - e);
                out.push_str(&format!(
                    "# summary tag={} mean_exp={} se={} exact={} bias={}\n",
                    s.tag,
                    s.mean_exp,
                    fmt_or_na(s.se),
                    fmt_or_na(s.exact),
                    fmt_or_na(bias)
                ));
            }
        }
        OutputFormat::JsonLines => {
            let per_replicate = if variant == Variant::ReverseChain { 2 } else { 1 };
            for (i, s) in samples.iter().enumerate() {
                let record = serde_json::json!({
                    "variant": s.tag.to_string(),
                    "theta": theta.theta,
                    "theta_ref": theta.theta_ref,
                    "a": config.a,
                    "b": config.b,
                    "replicate": i / per_replicate,
                    "log_value": json_number(s.log_value),
                });
                out.push_str(&record.to_string());
                out.push('\n');
            }
            for s in &summaries {
                let record = serde_json::json!({
                    "summary": {
                        "tag": s.tag.to_string(),
                        "mean_exp": s.mean_exp,
                        "se": s.se,
                        "exact": s.exact,
                        "bias": s.exact.map(|e| s.mean_exp - e),
                    }
                });
                out.push_str(&record.to_string());
                out.push('\n');
            }
        }
    }
    write_out(r.raw("out"), &out)
}

pub fn cmd_infer(
    config_path: Option<&str>,
    flags: &[(&'static str, Option<String>)],
) -> CliResult<()> {
    let mut r = Resolved::build(&INFER_REGISTRY, config_path, flags)?;
    let model = build_model(&r)?;
    let schedule = build_schedule(&mut r)?;
    let data = build_data(&mut r, &model)?;
    let prior_lo: f64 = r.get("prior_lo")?;
    let prior_hi: f64 = r.get("prior_hi")?;
    if r.raw("init_theta").is_empty() {
        r.set("init_theta", ((prior_lo + prior_hi) / 2.0).to_string());
    }
    let variant: Variant = r.get("variant")?;
    let estimator = EstimatorConfig::new(
        schedule.levels(),
        r.get("b")?,
        1,
        r.get("seed")?,
        variant,
    )?;
    let spec = PosteriorSpec {
        prior_lo,
        prior_hi,
        data: &data,
        estimator,
        schedule,
        theta_ref: r.get("theta_ref")?,
        proposal_sd: r.get("proposal_sd")?,
        iterations: r.get("iterations")?,
        init_theta: r.get("init_theta")?,
        sweeps_per_level: r.get("sweeps_per_level")?,
    };
    let mut rng = auxvar::streams::replicate_rng(r.get("seed")?, 0);
    let run: ChainRun = if variant == Variant::AbcIndicator {
        let abc = AbcConfig::new(r.get("epsilon")?, r.get::<DistanceKind>("distance")?)?;
        abc_mcmc(&model, &spec, &abc, &mut rng)?
    } else {
        pseudo_marginal_mh(&model, &spec, &mut rng)?
    };
    let format: OutputFormat = r.get("format")?;

    let thetas = run.thetas();
    let mut out = r.header();
    match format {
        OutputFormat::Csv => {
            out.push_str("iteration,theta,log_estimate,accepted\n");
            for row in &run.rows {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    row.iteration,
                    row.theta,
                    row.log_estimate,
                    u8::from(row.accepted)
                ));
            }
            out.push_str(&format!(
                "# summary mean={} acceptance_rate={} model_sims={} ess={}\n",
                stats::mean(&thetas),
                run.acceptance_rate(),
                run.model_sims,
                stats::effective_sample_size(&thetas)
            ));
        }
        OutputFormat::JsonLines => {
            for row in &run.rows {
                let record = serde_json::json!({
                    "iteration": row.iteration,
                    "theta": row.theta,
                    "log_estimate": json_number(row.log_estimate),
                    "accepted": row.accepted,
                });
                out.push_str(&record.to_string());
                out.push('\n');
            }
            let record = serde_json::json!({
                "summary": {
                    "mean": stats::mean(&thetas),
                    "acceptance_rate": run.acceptance_rate(),
                    "model_sims": run.model_sims,
                    "ess": stats::effective_sample_size(&thetas),
                }
            });
            out.push_str(&record.to_string());
            out.push('\n');
        }
    }
    write_out(r.raw("out"), &out)
}

pub fn cmd_bench(
    config_path: Option<&str>,
    flags: &[(&'static str, Option<String>)],
) -> CliResult<()> {
    let mut r = Resolved::build(&BENCH_REGISTRY, config_path, flags)?;
    let model = build_model(&r)?;
    let data = build_data(&mut r, &model)?;
    let variants: Vec<Variant> = r.get_list("variants")?;
    let plan = ExperimentPlan {
        rows: model.rows(),
        cols: model.cols(),
        boundary: model.boundary(),
        y: data,
        thetas: r.get_list("theta_grid")?,
        theta_refs: r.get_list("theta_ref_grid")?,
        a_values: r.get_list("a_grid")?,
        b_values: r.get_list("b_grid")?,
        replicates: r.get("replicates")?,
        root_seed: r.get("seed")?,
        variants,
        abc: AbcConfig::new(r.get("epsilon")?, r.get::<DistanceKind>("distance")?)?,
    };
    let outcomes = run_plan(&plan)?;
    let timings: bool = r.get("timings")?;

    let mut out = r.header();
    out.push_str(&outcomes_to_csv(&outcomes, timings));
    write_out(r.raw("out"), &out)?;

    let summary_path = r.raw("summary_out");
    if !summary_path.is_empty() {
        let mut doc = r.header();
        doc.push_str(&summary_to_json(&summarize(&outcomes)));
        doc.push('\n');
        write_out(summary_path, &doc)?;
    }
    Ok(())
}

pub fn cmd_oracle(
    config_path: Option<&str>,
    flags: &[(&'static str, Option<String>)],
) -> CliResult<()> {
    let r = Resolved::build(&ORACLE_REGISTRY, config_path, flags)?;
    let model = build_model(&r)?;
    let theta: f64 = r.get("theta")?;
    let mut out = r.header();
    let lz = exact_log_partition(&model, theta)?;
    out.push_str(&format!("log_partition = {lz}\n"));
    let raw_data = r.raw("data");
    if !raw_data.is_empty() {
        let data = LatticeConfig::parse(model.rows(), model.cols(), raw_data)
            .map_err(|e| CliError::config(format!("invalid data: {e}")))?;
        out.push_str(&format!(
            "log_gamma = {}\n",
            log_gamma(&model, &data, theta)?
        ));
        out.push_str(&format!(
            "likelihood = {}\n",
            exact_likelihood(&model, &data, theta)?
        ));
    }
    write_out(r.raw("out"), &out)
}

pub fn cmd_verify(
    config_path: Option<&str>,
    flags: &[(&'static str, Option<String>)],
) -> CliResult<()> {
    let mut r = Resolved::build(&VERIFY_REGISTRY, config_path, flags)?;
    let model = build_model(&r)?;
    let schedule = build_schedule(&mut r)?;
    let data = build_data(&mut r, &model)?;
    let theta = ThetaParam::new(r.get("theta")?, r.get("theta_ref")?)?;
    let tolerance: f64 = r.get("tolerance")?;
    let nonreversible: bool = r.get("nonreversible")?;
    let sweeps: usize = r.get("sweeps_per_level")?;
    let scan = if nonreversible {
        ScanOrder::Systematic
    } else {
        ScanOrder::Random
    };

    let mut out = r.header();
    out.push_str("check,level,status,detail\n");
    let mut all_passed = true;
    let mut failures = Vec::new();
    for level in 1..=schedule.levels() {
        let kernel = AnnealKernel::new(&model, theta, schedule.clone(), level)?
            .with_sweeps(sweeps)
            .with_scan(scan);
        let report = detailed_balance_check(&kernel, tolerance)?;
        let status = if report.passed { "pass" } else { "fail" };
        let detail = format!(
            "max_violation={} worst_pair=({};{})",
            report.max_violation, report.worst_pair.0, report.worst_pair.1
        );
        if !report.passed {
            all_passed = false;
            failures.push(format!("detailed_balance level {level}: {detail}"));
        }
        out.push_str(&format!("detailed_balance,{level},{status},{detail}\n"));
    }

    let equivalence = auxvar::mav_reverse_equivalence_check(
        &model,
        &data,
        &theta,
        &schedule,
        r.get("b")?,
        r.get("seed")?,
    )?;
    let status = if equivalence.passed() { "pass" } else { "fail" };
    let detail = format!(
        "bitwise={} ks_stat={} ks_p={}",
        equivalence.bitwise_equal, equivalence.ks.statistic, equivalence.ks.p_value
    );
    if !equivalence.passed() {
        all_passed = false;
        failures.push(format!("equivalence: {detail}"));
    }
    out.push_str(&format!("equivalence,,{status},{detail}\n"));
    out.push_str(&format!(
        "overall,,{},\n",
        if all_passed { "pass" } else { "fail" }
    ));
    write_out(r.raw("out"), &out)?;
    if all_passed {
        Ok(())
    } else {
        Err(CliError::check_failed(format!(
            "verification failed: {}",
            failures.join("; ")
        )))
    }
}
