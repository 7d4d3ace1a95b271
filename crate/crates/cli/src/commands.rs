use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use subgroup_causal::em::{
    check_expert_assumptions, em_fit, profile_sensitivity, select_mechanism, EmOptions, GofResult,
};
use subgroup_causal::gibbs::{
    effect_modification_test, gibbs_run, posterior_summary, GibbsOptions, PosteriorDraws, Target,
};
use subgroup_causal::identify::{
    bounds_m5, check_m2_rank, check_m3_condition, check_m4_condition, check_mx_rank, identify_m1, identify_m2,
    identify_m3_ce_randomized, identify_m3_cor, identify_m3_joint, identify_m4, identify_mx, Identified,
};
use subgroup_causal::measures::effects_from_joint;
use subgroup_causal::simulate::{
    generate_dataset, mask_and_recover, mask_preset, replicate_study, DgpSpec, StudyConfig,
};
use subgroup_causal::{Assumption, Error, Execution, Measure, MechanismKind, MechanismSpec, ObservedTable};

use crate::error::CliError;
use crate::report::{to_value, InputInfo, Report};
use crate::{ChainArgs, CommonArgs, Grid};

fn em_options(common: &CommonArgs) -> EmOptions {
    EmOptions { randomized: common.assume == Assumption::CompleteRandomization, ..EmOptions::default() }
}

fn gibbs_options(common: &CommonArgs, chain: &ChainArgs) -> GibbsOptions {
    GibbsOptions {
        iterations: chain.iters,
        burnin: chain.burnin,
        seed: common.seed,
        randomized: common.assume == Assumption::CompleteRandomization,
        ..GibbsOptions::default()
    }
}

fn or_error<T: Serialize>(result: subgroup_causal::Result<T>) -> Value {
    match result {
        Ok(v) => to_value(&v),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn emit(command: &'static str, input: Option<InputInfo>, common: &CommonArgs, options: Value, result: Value) -> Result<(), CliError> {
    Report::new(command, input, common.seed, options, result).write(common.out.as_deref())
}

fn conditions(table: &ObservedTable) -> Value {
    json!({
        "m2": (0..2).map(|t| or_error(check_m2_rank(table, t))).collect::<Vec<_>>(),
        "m3": (0..table.k().min(2)).map(|y| or_error(check_m3_condition(table, y))).collect::<Vec<_>>(),
        "m4": or_error(check_m4_condition(table)),
        "mx": or_error(check_mx_rank(table)),
    })
}

/// EM fit with effects, goodness of fit and the expert-assumption table.
fn fitted_mechanism(
    table: &ObservedTable,
    kind: MechanismKind,
    options: &EmOptions,
    measure: Measure,
    assume: Assumption,
) -> subgroup_causal::Result<Value> {
    let fit = em_fit(table, kind, options)?;
    if !fit.converged {
        return Err(Error::NonConvergence(format!("EM for {kind} stopped after {} iterations", fit.iterations)));
    }
    Ok(json!({
        "mechanism": kind,
        "fit": to_value(&fit),
        "effects": or_error(effects_from_joint(&fit.joint, measure, assume)),
        "gof": or_error(GofResult::from_fit(table, &fit)),
        "expert_assumptions": or_error(check_expert_assumptions(&fit.joint)),
    }))
}

fn posterior(draws: &PosteriorDraws, measure: Measure) -> Value {
    let effects: Vec<Value> = (0..draws.j)
        .map(|x| json!({ "x": x, "summary": or_error(posterior_summary(draws, Target::Effect { measure, x })) }))
        .collect();
    let outcomes: Vec<Value> = (0..2)
        .flat_map(|t| (0..draws.j).map(move |x| (t, x)))
        .map(|(t, x)| json!({ "t": t, "x": x, "summary": or_error(posterior_summary(draws, Target::Outcome { t, x })) }))
        .collect();
    json!({
        "mechanism": draws.mechanism,
        "draws": draws.len(),
        "effects": effects,
        "outcomes": outcomes,
        "effect_modification": or_error(effect_modification_test(draws, measure)),
        "acceptance_rate": draws.acceptance_rate,
        "warnings": draws.warnings,
    })
}

fn bounds_value(table: &ObservedTable, measure: Measure) -> subgroup_causal::Result<Value> {
    let bounds = bounds_m5(table, measure)?;
    Ok(json!({ "infinite": bounds.has_infinite(), "bounds": to_value(&bounds) }))
}

pub fn analyze(
    table: &ObservedTable,
    info: InputInfo,
    common: &CommonArgs,
    chain: &ChainArgs,
    measure: Measure,
) -> Result<(), CliError> {
    let em = em_options(common);
    let gibbs = gibbs_options(common, chain);
    let fits: Vec<Value> = MechanismKind::ESTIMABLE
        .iter()
        .map(|&kind| {
            fitted_mechanism(table, kind, &em, measure, common.assume)
                .unwrap_or_else(|e| json!({ "mechanism": kind, "error": e.to_string() }))
        })
        .collect();
    let selection = select_mechanism(table, &MechanismKind::ESTIMABLE, &em, Execution::Parallel)?;
    let draws = gibbs_run(table, selection.chosen, &gibbs)?;
    let result = json!({
        "conditions": conditions(table),
        "mechanisms": fits,
        "selection": to_value(&selection),
        "bounds": or_error(bounds_value(table, measure)),
        "posterior": posterior(&draws, measure),
    });
    let options = json!({ "measure": measure, "assume": common.assume, "em": to_value(&em), "gibbs": to_value(&gibbs) });
    emit("analyze", Some(info), common, options, result)
}

pub fn identify(
    table: &ObservedTable,
    info: InputInfo,
    common: &CommonArgs,
    mechanism: MechanismKind,
    measure: Measure,
) -> Result<(), CliError> {
    let with_joint = |solved: Identified| {
        json!({
            "identified": to_value(&solved),
            "effects": or_error(effects_from_joint(&solved.joint, measure, common.assume)),
            "expert_assumptions": or_error(check_expert_assumptions(&solved.joint)),
        })
    };
    let result = match mechanism {
        MechanismKind::M1 => with_joint(identify_m1(table)?),
        MechanismKind::M2 => {
            let conditions: Vec<Value> = (0..2).map(|t| or_error(check_m2_rank(table, t))).collect();
            let mut v = with_joint(identify_m2(table)?);
            v["conditions"] = json!(conditions);
            v
        }
        MechanismKind::M3 => {
            let conditions: Vec<Value> = (0..2).map(|y| or_error(check_m3_condition(table, y))).collect();
            let cor = identify_m3_cor(table)?;
            let mut v = json!({ "conditions": conditions, "log_cor": to_value(&cor) });
            match common.assume {
                Assumption::CompleteRandomization => {
                    v["randomized_effects"] = to_value(&identify_m3_ce_randomized(table, measure)?);
                }
                Assumption::LatentIgnorable => {
                    let solved = with_joint(identify_m3_joint(table)?);
                    v["identified"] = solved["identified"].clone();
                    v["effects"] = solved["effects"].clone();
                    v["expert_assumptions"] = solved["expert_assumptions"].clone();
                }
            }
            v
        }
        MechanismKind::M4 => {
            let condition = check_m4_condition(table)?;
            let mut v = with_joint(identify_m4(table)?);
            v["conditions"] = json!([to_value(&condition)]);
            v
        }
        MechanismKind::Mx => {
            let condition = check_mx_rank(table)?;
            let mut v = with_joint(identify_mx(table)?);
            v["conditions"] = json!([to_value(&condition)]);
            v
        }
        MechanismKind::M5 => json!({ "bounds": bounds_value(table, measure)? }),
        MechanismKind::Sensitivity => {
            return Err(Error::Unsupported("the sensitivity model is profiled, not identified; use `sensitivity`".into()).into())
        }
    };
    let result = json!({ "mechanism": mechanism, "result": result });
    let options = json!({ "mechanism": mechanism, "measure": measure, "assume": common.assume });
    emit("identify", Some(info), common, options, result)
}

pub fn gof(table: &ObservedTable, info: InputInfo, common: &CommonArgs, mechanism: Option<MechanismKind>) -> Result<(), CliError> {
    let em = em_options(common);
    let result = match mechanism {
        Some(kind) => fitted_mechanism(table, kind, &em, Measure::LogOddsRatio, common.assume)?,
        None => Value::Array(
            MechanismKind::ESTIMABLE
                .iter()
                .map(|&kind| {
                    fitted_mechanism(table, kind, &em, Measure::LogOddsRatio, common.assume)
                        .unwrap_or_else(|e| json!({ "mechanism": kind, "error": e.to_string() }))
                })
                .collect(),
        ),
    };
    let options = json!({ "mechanism": mechanism, "assume": common.assume, "em": to_value(&em) });
    emit("gof", Some(info), common, options, result)
}

pub fn bounds(table: &ObservedTable, info: InputInfo, common: &CommonArgs, measure: Measure) -> Result<(), CliError> {
    let result = bounds_value(table, measure)?;
    emit("bounds", Some(info), common, json!({ "measure": measure }), result)
}

pub fn gibbs(
    table: &ObservedTable,
    info: InputInfo,
    common: &CommonArgs,
    chain: &ChainArgs,
    mechanism: MechanismKind,
    measure: Measure,
    draws_out: Option<&Path>,
) -> Result<(), CliError> {
    let options = gibbs_options(common, chain);
    let draws = gibbs_run(table, mechanism, &options)?;
    if let Some(path) = draws_out {
        write_draws(&draws, measure, path)?;
    }
    let result = posterior(&draws, measure);
    let report_options = json!({
        "mechanism": mechanism,
        "measure": measure,
        "assume": common.assume,
        "gibbs": to_value(&options),
        "draws_out": draws_out.map(|p| p.display().to_string()),
    });
    emit("gibbs", Some(info), common, report_options, result)
}

fn missingness_values(spec: &MechanismSpec) -> (&'static str, Vec<f64>) {
    match spec {
        MechanismSpec::M1 { p_missing }
        | MechanismSpec::M2 { p_missing }
        | MechanismSpec::M3 { p_missing }
        | MechanismSpec::M5 { p_missing }
        | MechanismSpec::Mx { p_missing } => ("p_missing", p_missing.clone()),
        MechanismSpec::M4 { beta } => ("beta", beta.to_vec()),
        MechanismSpec::Sensitivity { beta, beta_y } => ("beta", beta.iter().copied().chain([*beta_y]).collect()),
    }
}

/// One CSV row per retained draw: the factored parameters followed by the
/// subgroup effects.
fn write_draws(draws: &PosteriorDraws, measure: Measure, path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::data(format!("cannot write {}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(io)?;
    let (j, k) = (draws.j, draws.k);
    let Some(first) = draws.params.first() else {
        return Err(CliError::data("the chain retained no draws"));
    };
    let (label, width) = {
        let (label, values) = missingness_values(&first.missingness);
        (label, values.len())
    };
    let mut header = vec!["draw".to_string()];
    header.extend((0..j).map(|x| format!("pi_x{x}")));
    header.extend((0..j).map(|x| format!("pi_t1_x{x}")));
    for t in 0..2 {
        for x in 0..j {
            header.extend((0..k).map(|y| format!("p_y{y}_t{t}_x{x}")));
        }
    }
    header.extend((0..width).map(|i| format!("{label}_{i}")));
    header.extend((0..j).map(|x| format!("{}_x{x}", measure.short_name())));
    writer.write_record(&header).map_err(io)?;
    for (i, params) in draws.params.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(params.pi_x.iter().map(f64::to_string));
        row.extend(params.pi_t_given_x.iter().map(f64::to_string));
        row.extend(params.pi_y_given_tx.iter().map(f64::to_string));
        row.extend(missingness_values(&params.missingness).1.iter().map(f64::to_string));
        row.extend((0..j).map(|x| Target::Effect { measure, x }.evaluate(draws, i).to_string()));
        writer.write_record(&row).map_err(io)?;
    }
    writer.flush().map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn sensitivity(table: &ObservedTable, info: InputInfo, common: &CommonArgs, grid: &Grid) -> Result<(), CliError> {
    let em = em_options(common);
    let curve = profile_sensitivity(table, &grid.points(), &em, Execution::Parallel)?;
    let feasible: Vec<f64> = curve.feasible().map(|p| p.beta_y).collect();
    let result = json!({ "curve": to_value(&curve), "feasible_beta_y": feasible });
    let options = json!({ "grid": grid, "assume": common.assume, "em": to_value(&em) });
    emit("sensitivity", Some(info), common, options, result)
}

pub fn simulate(
    common: &CommonArgs,
    chain: &ChainArgs,
    mechanism: Option<MechanismKind>,
    n: u64,
    replicates: usize,
    em_only: bool,
) -> Result<(), CliError> {
    let defaults = StudyConfig::default();
    let config = StudyConfig {
        dgps: mechanism.map(|k| vec![k]).unwrap_or(defaults.dgps.clone()),
        n,
        replicates,
        base_seed: common.seed,
        run_gibbs: !em_only,
        gibbs: gibbs_options(common, chain),
        em: em_options(common),
        ..defaults
    };
    let result = replicate_study(&config, Execution::Parallel)?;
    emit("simulate", None, common, to_value(&config), to_value(&result))
}

pub fn mask(loaded: Option<(ObservedTable, InputInfo)>, common: &CommonArgs, n: u64) -> Result<(), CliError> {
    let (complete, info) = match loaded {
        Some((table, info)) => (table, Some(info)),
        None => {
            let spec = DgpSpec {
                missingness: MechanismSpec::Mx { p_missing: vec![0.0, 0.0] },
                ..DgpSpec::simulation(MechanismKind::M1, n, common.seed)?
            };
            (generate_dataset(&spec)?, None)
        }
    };
    let masks = MechanismKind::ESTIMABLE
        .iter()
        .map(|&k| Ok((k, mask_preset(k)?)))
        .collect::<subgroup_causal::Result<Vec<_>>>()?;
    let em = em_options(common);
    let result = mask_and_recover(&complete, &masks, &MechanismKind::ESTIMABLE, common.seed, &em, Execution::Parallel)?;
    let value = json!({ "rmse": to_value(&result), "row_minimizers": result.row_minimizers() });
    let options = json!({
        "masks": masks.iter().map(|(_, spec)| to_value(spec)).collect::<Vec<_>>(),
        "synthetic_n": info.is_none().then_some(n),
        "em": to_value(&em),
    });
    emit("mask", info, common, options, value)
}

pub fn select(table: &ObservedTable, info: InputInfo, common: &CommonArgs) -> Result<(), CliError> {
    let em = em_options(common);
    let selection = select_mechanism(table, &MechanismKind::ESTIMABLE, &em, Execution::Parallel)?;
    emit("select", Some(info), common, json!({ "assume": common.assume, "em": to_value(&em) }), to_value(&selection))
}
