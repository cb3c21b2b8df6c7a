use marketlab::experiment::run_replications_with;
use marketlab::meanfield::{
    asymptotic_bias, booking_rate_supremum, calibrate_phi, estimator_limit, find_lambda_star,
    gte_limit, scaled_variance_limit,
};
use marketlab::oracle::{exact_expectations, simulate_tiny};
use marketlab::sweeps::{
    bias_band, recommend_design, run_sweep, Objective, SweepAxis, SweepMode, SweepPlan, COLUMNS,
};
use marketlab::{Design, DesignKind, RunOptions};
use serde_json::{json, Value};

use crate::config::{RunConfig, DEFAULT_REPLICATIONS};
use crate::output::{self, Format};
use crate::CliError;

/// Finished output of a command, before it is written anywhere.
pub enum Rendered {
    Data(Value),
    /// A table with a fixed header.
    Table {
        header: Vec<String>,
        rows: Vec<Value>,
    },
    /// Plain text used when no format was requested.
    Text {
        text: String,
        data: Value,
    },
}

impl Rendered {
    pub fn render(&self, format: Option<Format>) -> Result<String, CliError> {
        match (self, format) {
            (Rendered::Text { text, .. }, None) => Ok(text.clone()),
            (Rendered::Text { data, .. } | Rendered::Data(data), f) => {
                output::render(data, f.unwrap_or(Format::Json))
            }
            (Rendered::Table { rows, .. }, None | Some(Format::Json)) => {
                output::to_json(&Value::Array(rows.clone()))
            }
            (Rendered::Table { header, rows }, Some(Format::Csv)) => output::write_csv(
                header,
                rows.iter().map(|r| {
                    header
                        .iter()
                        .map(|h| output::cell(&r[h.as_str()]))
                        .collect()
                }),
            ),
        }
    }
}

fn runtime(e: marketlab::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn design_fields(design: Design) -> (&'static str, Option<f64>) {
    (design.kind().as_str(), design.allocation().map(|a| a.get()))
}

pub fn analytic(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let spec = cfg.market_spec()?;
    let design = cfg.design()?;
    let (kind, allocation) = design_fields(design);
    let homogeneous = spec.as_homogeneous();
    let mut out = json!({
        "design": kind,
        "allocation": allocation,
        "lambda": spec.lambda(),
        "gte": gte_limit(&spec),
    });
    if design.is_randomized() {
        let report = asymptotic_bias(&spec, design).map_err(runtime)?;
        let band = bias_band(&spec, design.kind()).map_err(runtime)?;
        let scaled = homogeneous
            .map(|(phi, phi_t)| scaled_variance_limit(phi, phi_t, spec.lambda(), design))
            .transpose()
            .map_err(runtime)?;
        out["estimator_limit"] = json!(report.estimator_limit);
        out["bias"] = json!(report.bias);
        out["relative_bias"] = json!(report.relative_bias);
        out["bias_band"] = json!({ "min": band.min, "max": band.max });
        out["scaled_variance"] = json!(scaled);
    } else {
        out["estimator_limit"] = json!(estimator_limit(&spec, design).map_err(runtime)?);
    }
    let lambda_star = match homogeneous {
        Some((phi, phi_t)) if phi != phi_t => find_lambda_star(phi, phi_t).ok(),
        _ => None,
    };
    out["lambda_star"] = json!(lambda_star);
    Ok(Rendered::Data(out))
}

pub fn simulate(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let spec = cfg.market_spec()?;
    let design = cfg.design()?;
    let n = cfg.n()?;
    let replications = cfg.replications()?;
    let seed = cfg.master_seed();
    let options = RunOptions { gte: cfg.gte()? };
    let s =
        run_replications_with(&spec, design, n, replications, seed, &options).map_err(runtime)?;
    let (kind, allocation) = design_fields(design);
    let gte_source = match s.gte_source {
        marketlab::GteReference::Analytic => "analytic",
        marketlab::GteReference::MonteCarlo { .. } => "montecarlo",
    };
    Ok(Rendered::Data(json!({
        "design": kind,
        "allocation": allocation,
        "lambda": spec.lambda(),
        "n": n,
        "n_listings": s.n_listings,
        "n_customers": s.n_customers,
        "replications": s.replications,
        "master_seed": seed,
        "estimator_mean": s.estimator_mean,
        "estimator_sd": s.estimator_sd,
        "standard_error": s.standard_error(),
        "ci_half_width": s.ci_half_width,
        "gte_reference": s.gte_reference,
        "gte_source": gte_source,
        "bias": s.bias,
        "relative_bias": s.relative_bias,
        "mse": s.mse,
        "scaled_variance": s.scaled_variance,
        "analytic_limit": estimator_limit(&spec, design).map_err(runtime)?,
    })))
}

/// Maps a sweep plan rejection to the config field it is about.
fn sweep_field(message: &str) -> &'static str {
    if message.contains("replications") {
        "execution.replications"
    } else if message.contains("need n") {
        "execution.n"
    } else if message.contains("design") {
        "sweep.designs"
    } else {
        "sweep.values"
    }
}

pub fn sweep(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let mode = cfg.execution.mode.unwrap_or(SweepMode::Analytic);
    let monte_carlo = mode != SweepMode::Analytic;
    let axis = cfg
        .sweep
        .axis
        .ok_or_else(|| CliError::config("sweep.axis", "missing"))?;
    let values = cfg
        .sweep
        .values
        .clone()
        .ok_or_else(|| CliError::config("sweep.values", "missing"))?;
    // A lambda sweep overrides the base lambda, so it may be left out.
    let base = match (axis, cfg.market.lambda, values.first()) {
        (SweepAxis::Lambda, None, Some(&first)) => {
            let mut cfg = cfg.clone();
            cfg.market.lambda = Some(first);
            cfg.market_spec()?
        }
        _ => cfg.market_spec()?,
    };
    let plan = SweepPlan {
        base,
        axis,
        values,
        designs: cfg
            .sweep
            .designs
            .clone()
            .unwrap_or_else(|| vec![DesignKind::Cr, DesignKind::Lr]),
        allocation: cfg.allocation()?,
        n: cfg.execution.n,
        mode,
        replications: if monte_carlo {
            cfg.replications()?
        } else {
            cfg.execution.replications.unwrap_or(DEFAULT_REPLICATIONS)
        },
        master_seed: cfg.master_seed(),
        gte: cfg.gte()?,
    };
    plan.validate().map_err(|e| {
        let message = e.to_string();
        CliError::config(sweep_field(&message), message)
    })?;
    let rows = run_sweep(&plan).map_err(runtime)?;
    let rows = rows
        .iter()
        .map(serde_json::to_value)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(Rendered::Table {
        header: COLUMNS.iter().map(|c| c.to_string()).collect(),
        rows,
    })
}

pub fn oracle(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let market = cfg.tiny_market()?;
    let exact = exact_expectations(&market).map_err(runtime)?;
    let (kind, allocation) = design_fields(exact.design);
    let mut out = json!({
        "design": kind,
        "allocation": allocation,
        "customers": market.customers(),
        "listings": market.listings(),
        "total_mass": exact.total_mass,
        "expected_bookings": exact.expected_bookings,
        "estimator_mean": exact.estimator_mean,
        "estimator_variance": exact.estimator_variance,
        "bookings_by_listing": exact.bookings_by_listing,
        "bookings_by_customer": exact.bookings_by_customer,
    });
    // Monte Carlo check only when replications are asked for.
    if cfg.execution.replications.is_some() {
        let replications = cfg.replications()?;
        let seed = cfg.master_seed();
        let mc = simulate_tiny(&market, replications, seed).map_err(runtime)?;
        let z = |mean: f64, exact: f64, se: f64| {
            if se > 0.0 {
                Some((mean - exact) / se)
            } else {
                None
            }
        };
        out["monte_carlo"] = json!({
            "replications": replications,
            "master_seed": seed,
            "bookings_mean": mc.bookings_mean,
            "bookings_se": mc.bookings_standard_error(),
            "bookings_z": z(mc.bookings_mean, exact.expected_bookings, mc.bookings_standard_error()),
            "estimator_mean": mc.estimator_mean,
            "estimator_se": mc.estimator_standard_error(),
            "estimator_z": z(mc.estimator_mean, exact.estimator_mean, mc.estimator_standard_error()),
        });
    }
    Ok(Rendered::Data(out))
}

pub fn calibrate(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let target = cfg
        .calibrate
        .target
        .ok_or_else(|| CliError::config("calibrate.target", "missing"))?;
    let lambda = cfg
        .market
        .lambda
        .ok_or_else(|| CliError::config("market.lambda", "missing"))?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CliError::config(
            "market.lambda",
            format!("must be positive and finite, got {lambda}"),
        ));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(CliError::config(
            "calibrate.target",
            format!("must lie in (0, 1), got {target}"),
        ));
    }
    let phi = calibrate_phi(target, lambda).map_err(runtime)?;
    Ok(Rendered::Text {
        text: format!("phi={phi}\n"),
        data: json!({
            "target": target,
            "lambda": lambda,
            "phi": phi,
            "booking_rate_supremum": booking_rate_supremum(lambda),
        }),
    })
}

pub fn recommend(cfg: &RunConfig) -> Result<Rendered, CliError> {
    let spec = cfg.market_spec()?;
    let objective = cfg.recommend.objective.unwrap_or(Objective::Bias);
    let n = cfg.execution.n;
    if n == Some(0) {
        return Err(CliError::config("execution.n", "must be positive"));
    }
    let r = recommend_design(&spec, objective, n).map_err(runtime)?;
    let (kind, allocation) = design_fields(r.design);
    Ok(Rendered::Data(json!({
        "objective": r.objective,
        "design": kind,
        "allocation": allocation,
        "lambda": spec.lambda(),
        "n": n,
        "bias": r.bias,
        "relative_bias": r.relative_bias,
        "scaled_variance": r.scaled_variance,
        "sd": r.sd,
        "mse": r.mse,
    })))
}
