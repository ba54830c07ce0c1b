use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{ByMedia, ByWeek, ChoiceRow, EstimateError, EstimationRun, ParamMatrix, SelectionRow, SimParams};
use crate::countglm::{wald_statistic, FitResult};
use crate::newscube::WeekCalendar;

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

/// `term,estimate,std_error,z,p`: count terms, then `theta` (NB) or the
/// zero-part terms prefixed `zero_` (ZIP).
pub fn write_table5_csv<W: Write>(fit: &FitResult, writer: W) -> Result<(), EstimateError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["term", "estimate", "std_error", "z", "p"])?;
    for (i, t) in fit.terms.iter().enumerate() {
        w.write_record([
            t.clone(),
            num(fit.coefficients[i]),
            num(fit.std_errors[i]),
            num(fit.z_values[i]),
            num(fit.p_values[i]),
        ])?;
    }
    if let Some(theta) = fit.theta {
        w.write_record(["theta".to_string(), num(theta), opt(fit.theta_std_error), String::new(), String::new()])?;
    }
    for (i, t) in fit.zero_terms.iter().enumerate() {
        let (est, se) = (fit.zero_model_coefficients[i], fit.zero_std_errors[i]);
        let (z, p) = wald_statistic(est, se);
        w.write_record([format!("zero_{t}"), num(est), num(se), num(z), num(p)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `term,estimate[,…]` rows (as written to table5.csv) into
/// simulation parameters; a `theta` row sets the dispersion.
pub fn read_params_csv<R: Read>(reader: R) -> Result<SimParams, EstimateError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(term), Some(value)) = (col("term"), col("estimate").or_else(|| col("value"))) else {
        return Err(EstimateError::InvalidParams("params file needs `term` and `estimate` columns".into()));
    };
    let mut coefficients = BTreeMap::new();
    let mut theta = None;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let name = rec.get(term).unwrap_or("").trim().to_string();
        let raw = rec.get(value).unwrap_or("").trim();
        let v: f64 = raw
            .parse()
            .map_err(|_| EstimateError::InvalidParams(format!("line {}: `{raw}` is not a number", line + 2)))?;
        if name == "theta" {
            theta = Some(v);
        } else if !name.starts_with("zero_") && name != "log_volume" {
            coefficients.insert(name, v);
        }
    }
    let params = SimParams {
        coefficients,
        theta,
        media_overrides: BTreeMap::new(),
    };
    params.validate()?;
    Ok(params)
}

pub fn write_table4_csv<W: Write>(rows: &[SelectionRow], writer: W) -> Result<(), EstimateError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["family", "layer", "df", "aic", "log_likelihood", "theta", "converged", "best_in_layer", "error"])?;
    for r in rows {
        w.write_record([
            r.family.to_string(),
            r.layer.to_string(),
            r.df.map_or_else(String::new, |d| d.to_string()),
            opt(r.aic),
            opt(r.log_likelihood),
            opt(r.theta),
            r.converged.to_string(),
            r.best_in_layer.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Weeks × terms matrix of z-values.
pub fn write_byweek_z_csv<W: Write>(by_week: &ByWeek, calendar: &WeekCalendar, writer: W) -> Result<(), EstimateError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["week".to_string(), "week_start".to_string()];
    header.extend(by_week.run.columns.iter().cloned());
    header.push("converged".into());
    w.write_record(&header)?;
    for s in &by_week.weeks {
        let mut rec = vec![s.week.to_string(), calendar.week_start(s.week).to_string()];
        rec.extend(s.z.iter().map(|z| num(*z)));
        rec.push(s.converged.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_byweek_dev_csv<W: Write>(by_week: &ByWeek, calendar: &WeekCalendar, writer: W) -> Result<(), EstimateError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "week",
        "week_start",
        "deviance_explained",
        "clamped",
        "null_deviance",
        "residual_deviance",
        "converged",
    ])?;
    for s in &by_week.weeks {
        w.write_record([
            s.week.to_string(),
            calendar.week_start(s.week).to_string(),
            opt(s.deviance_explained),
            s.clamped.to_string(),
            opt(s.null_deviance),
            opt(s.residual_deviance),
            s.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_matrix<W: Write>(m: &ParamMatrix, values: &[f64], writer: W) -> Result<(), EstimateError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["media".to_string()];
    header.extend(m.terms.iter().cloned());
    w.write_record(&header)?;
    for (i, media) in m.media.iter().enumerate() {
        let mut rec = vec![media.clone()];
        rec.extend(values[i * m.n_cols()..(i + 1) * m.n_cols()].iter().map(|v| num(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Coefficient matrix to `params`, z-value matrix to `z`.
pub fn write_bymedia_csv<W: Write, V: Write>(by_media: &ByMedia, params: W, z: V) -> Result<(), EstimateError> {
    write_matrix(&by_media.params, &by_media.params.values, params)?;
    write_matrix(&by_media.params, &by_media.params.z_values, z)
}

pub fn write_choiceprobs_csv<W: Write>(rows: &[ChoiceRow], writer: W) -> Result<(), EstimateError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["media", "week", "country", "probability", "unnormalized"])?;
    for r in rows {
        w.write_record([r.media.clone(), r.week.to_string(), r.country.clone(), num(r.probability), num(r.unnormalized)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_run_json<W: Write>(run: &EstimationRun, writer: W) -> Result<(), EstimateError> {
    serde_json::to_writer_pretty(writer, run)?;
    Ok(())
}

pub fn read_run_json<R: Read>(reader: R) -> Result<EstimationRun, EstimateError> {
    Ok(serde_json::from_reader(reader)?)
}
