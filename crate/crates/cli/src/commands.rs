use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use newsgravity::analyze::{
    coverage_series_design, pca, residuals_by_country_design, ward_cluster, write_assignments_csv, write_coverage_csv,
    write_dendrogram_json, write_pca_loadings_csv, write_pca_scores_csv, write_residuals_csv,
};
use newsgravity::covariates::{
    build_design_with_offsets, read_countries_csv, read_dyads_csv, read_media_csv, write_countries_csv,
    write_dyads_csv, write_media_csv, Covariates, DyadTable, OffsetSource,
};
use newsgravity::estimate::{
    choice_table, fit_by_media_design, fit_by_week_design, global_run, model_selection, read_params_csv, read_run_json,
    simulate_cube, synthetic_world, write_bymedia_csv, write_byweek_dev_csv, write_byweek_z_csv, write_choiceprobs_csv,
    write_run_json, write_table4_csv, write_table5_csv, EstimateError, SimOffsets,
};
use newsgravity::newscube::{
    build_cube_parallel, read_cube_csv, read_items_csv, read_items_jsonl, salience_table, write_cube_csv,
    write_salience_csv, RawItem, UnknownCountryPolicy,
};
use newsgravity::{DesignMatrix, EstimationRun, Family, Layer, NewsCube, WeekCalendar};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, Context};
use crate::manifest::{self, Step};
use crate::{Analysis, AnalyzeArgs, BuildArgs, FitArgs, FitScope, SimulateArgs, Tables, Window};

fn config<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or_default()
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::at(path, "missing_input", e))
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = out.join(name);
    Ok(BufWriter::new(File::create(&path).at(&path, "io")?))
}

fn out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).at(out, "io")
}

fn calendar(w: &Window) -> Result<WeekCalendar, CliError> {
    WeekCalendar::new(w.start, w.weeks).map_err(|e| CliError::input("config", e.to_string()))
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::input("config", format!("--{flag} is required")))
}

fn read_items(path: &Path) -> Result<Vec<RawItem>, CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let file = open(path)?;
    if matches!(ext, "jsonl" | "json" | "ndjson") {
        read_items_jsonl(BufReader::new(file)).at(path, "items")
    } else {
        read_items_csv(file).at(path, "items")
    }
}

/// Reads countries and media, plus dyads when `with_dyads`.
fn load_tables(t: &Tables, step: &mut Step, with_dyads: bool) -> Result<Covariates, CliError> {
    let cpath = required(&t.countries, "countries")?;
    let mpath = required(&t.media, "media")?;
    let countries = read_countries_csv(open(cpath)?).at(cpath, "countries")?;
    step.input(cpath)?;
    let media = read_media_csv(open(mpath)?).at(mpath, "media")?;
    step.input(mpath)?;
    let dyads = match (&t.dyads, with_dyads) {
        (Some(dpath), _) => {
            let d = read_dyads_csv(open(dpath)?, &countries).at(dpath, "dyads")?;
            step.input(dpath)?;
            d
        }
        (None, true) => return Err(CliError::input("config", "--dyads is required")),
        (None, false) => DyadTable::new(),
    };
    Ok(Covariates { countries, dyads, media })
}

fn media_codes(cov: &Covariates) -> Vec<String> {
    cov.media.iter().map(|m| m.media_code.clone()).collect()
}

/// The cube from `items` when given, otherwise from `<out>/cube.csv`.
fn load_cube(items: &Option<PathBuf>, out: &Path, cal: WeekCalendar, cov: &Covariates, step: &mut Step) -> Result<NewsCube, CliError> {
    let cube = match items {
        Some(path) => {
            let raw = read_items(path)?;
            step.input(path)?;
            build_cube_parallel(&raw, cal, media_codes(cov), cov.countries.codes(), UnknownCountryPolicy::Reject)
                .at(path, "items")?
                .0
        }
        None => {
            let path = out.join("cube.csv");
            if !path.exists() {
                return Err(CliError::MissingFit {
                    missing: path,
                    prerequisite: "newsgravity build".into(),
                });
            }
            let cube = read_cube_csv(open(&path)?, cal, media_codes(cov), cov.countries.codes()).at(&path, "cube")?;
            step.input(&path)?;
            cube
        }
    };
    Ok(if cube.weighted().is_some() { cube } else { cube.weighted_cube().0 })
}

fn read_offsets(path: &Path, cube: &NewsCube) -> Result<Vec<f64>, CliError> {
    let (n_m, n_t) = (cube.n_media(), cube.n_weeks());
    let mut offsets = vec![f64::NAN; n_m * n_t];
    let mut rdr = csv::Reader::from_reader(open(path)?);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.at(path, "offsets")?;
        let bad = |what: &str| CliError::at(path, "offsets", format!("line {}: {what}", i + 2));
        let m = cube.media_index(rec.get(0).unwrap_or("")).ok_or_else(|| bad("unknown media"))?;
        let t: usize = rec.get(1).and_then(|s| s.parse().ok()).filter(|t| *t < n_t).ok_or_else(|| bad("bad week"))?;
        offsets[m * n_t + t] = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad offset"))?;
    }
    if let Some(i) = offsets.iter().position(|o| !o.is_finite()) {
        return Err(CliError::at(
            path,
            "offsets",
            format!("no offset for media {} week {}", cube.media()[i / n_t], i % n_t),
        ));
    }
    Ok(offsets)
}

fn offset_source(path: &Option<PathBuf>, cube: &NewsCube, step: &mut Step) -> Result<OffsetSource, CliError> {
    match path {
        Some(p) => {
            let o = read_offsets(p, cube)?;
            step.input(p)?;
            Ok(OffsetSource::Supplied(o))
        }
        None => Ok(OffsetSource::RowTotal),
    }
}

fn estimate_err(e: EstimateError) -> CliError {
    match e {
        EstimateError::AllFailed | EstimateError::Glm(_) => CliError::Estimation(e.to_string()),
        other => CliError::input("estimation_input", other.to_string()),
    }
}

pub fn build(a: &BuildArgs) -> Result<(), CliError> {
    let mut step = Step::new("build", config(a), a.seed);
    let cov = load_tables(&a.tables, &mut step, false)?;
    let cal = calendar(&a.window)?;
    let items = read_items(&a.items)?;
    step.input(&a.items)?;
    let policy = if a.drop_unknown_countries { UnknownCountryPolicy::DropAndRenormalize } else { UnknownCountryPolicy::Reject };
    let (cube, ingest) =
        build_cube_parallel(&items, cal, media_codes(&cov), cov.countries.codes(), policy).at(&a.items, "items")?;
    let (cube, weighting) = cube.weighted_cube();
    log::info!("{} of {} items accepted", ingest.accepted, items.len());

    out_dir(&a.out)?;
    write_cube_csv(&cube, create(&a.out, "cube.csv")?).at(&a.out.join("cube.csv"), "io")?;
    let sal_raw = salience_table(&cube, Layer::Raw).map_err(|e| CliError::input("cube", e.to_string()))?;
    let sal_w = salience_table(&cube, Layer::Weighted).map_err(|e| CliError::input("cube", e.to_string()))?;
    write_salience_csv(&sal_raw, &sal_w, create(&a.out, "salience.csv")?).at(&a.out.join("salience.csv"), "io")?;
    let dispersion = |layer| {
        let (mean, sd) = cube.dispersion_stats(layer).unwrap_or((f64::NAN, f64::NAN));
        json!({ "mean": mean, "sd": sd })
    };
    let diagnostics = json!({
        "items_read": items.len(),
        "ingest": ingest,
        "weighting": weighting,
        "dispersion": { "raw": dispersion(Layer::Raw), "weighted": dispersion(Layer::Weighted) },
        "cells": cube.n_cells(),
    });
    write_json(&a.out, "diagnostics.json", &diagnostics)?;
    for f in ["cube.csv", "salience.csv", "diagnostics.json"] {
        step.output(&a.out, f)?;
    }
    manifest::record(&a.out, "build", step)?;
    Ok(())
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::input("json", e.to_string()))?;
    let path = out.join(name);
    fs::write(&path, text + "\n").at(&path, "io")
}

fn note_run(step: &mut Step, run: &EstimationRun) {
    step.non_converged = run.fits.iter().filter(|f| !f.fit.converged).map(|f| f.key.to_string()).collect();
    step.failures = run.failures.iter().map(|f| (f.key.to_string(), f.error.clone())).collect();
}

fn save_run(out: &Path, name: &str, run: &EstimationRun) -> Result<(), CliError> {
    write_run_json(run, create(out, name)?).at(&out.join(name), "io")
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let key = format!("fit_{}", config(&a.scope).as_str().unwrap_or("global"));
    let mut step = Step::new("fit", config(a), a.seed);
    let cov = load_tables(&a.tables, &mut step, true)?;
    let cube = load_cube(&a.items, &a.out, calendar(&a.window)?, &cov, &mut step)?;
    let spec = a.model.spec()?;
    out_dir(&a.out)?;

    if a.scope == FitScope::Select {
        if a.offsets.is_some() {
            log::warn!("--offsets is ignored by model selection");
        }
        let rows = model_selection(&cube, &cov, &spec).map_err(estimate_err)?;
        write_table4_csv(&rows, create(&a.out, "table4.csv")?).at(&a.out.join("table4.csv"), "io")?;
        step.output(&a.out, "table4.csv")?;
        step.non_converged = rows
            .iter()
            .filter(|r| r.error.is_none() && !r.converged)
            .map(|r| format!("{} {}", r.family, r.layer))
            .collect();
        step.failures = rows
            .iter()
            .filter_map(|r| r.error.as_ref().map(|e| (format!("{} {}", r.family, r.layer), e.clone())))
            .collect();
        let all_failed = rows.iter().all(|r| r.error.is_some());
        manifest::record(&a.out, &key, step)?;
        return if all_failed { Err(CliError::Estimation("every family x layer fit failed".into())) } else { Ok(()) };
    }

    let offsets = offset_source(&a.offsets, &cube, &mut step)?;
    let design =
        build_design_with_offsets(&cube, &cov, &spec, &offsets).map_err(|e| CliError::input("design", e.to_string()))?;
    let (run, files) = match a.scope {
        FitScope::Global => {
            let run = global_run(&design, &spec);
            if let Some(slice) = run.fits.first() {
                write_table5_csv(&slice.fit, create(&a.out, "table5.csv")?).at(&a.out.join("table5.csv"), "io")?;
                let probs = choice_table(&slice.fit, &design).map_err(estimate_err)?;
                write_choiceprobs_csv(&probs, create(&a.out, "choiceprobs.csv")?)
                    .at(&a.out.join("choiceprobs.csv"), "io")?;
            }
            (run, vec!["table5.csv", "choiceprobs.csv", "fit_global.json"])
        }
        FitScope::ByWeek => {
            let bw = fit_by_week_design(&design, &spec).map_err(estimate_err)?;
            write_byweek_z_csv(&bw, cube.calendar(), create(&a.out, "byweek_z.csv")?).at(&a.out.join("byweek_z.csv"), "io")?;
            write_byweek_dev_csv(&bw, cube.calendar(), create(&a.out, "byweek_dev.csv")?)
                .at(&a.out.join("byweek_dev.csv"), "io")?;
            (bw.run, vec!["byweek_z.csv", "byweek_dev.csv", "fit_by_week.json"])
        }
        FitScope::ByMedia => {
            let bm = fit_by_media_design(&design, &spec).map_err(estimate_err)?;
            write_bymedia_csv(&bm, create(&a.out, "bymedia_params.csv")?, create(&a.out, "bymedia_z.csv")?)
                .at(&a.out.join("bymedia_params.csv"), "io")?;
            (bm.run, vec!["bymedia_params.csv", "bymedia_z.csv", "fit_by_media.json"])
        }
        FitScope::Select => unreachable!(),
    };
    save_run(&a.out, files[files.len() - 1], &run)?;
    for f in &files {
        if a.out.join(f).exists() {
            step.output(&a.out, f)?;
        }
    }
    note_run(&mut step, &run);
    log::info!("{}: {} fits, {} failed", key, run.fits.len(), run.failures.len());
    manifest::record(&a.out, &key, step)?;
    if run.fits.is_empty() {
        return Err(CliError::Estimation(format!(
            "every fit failed: {}",
            run.failures.iter().map(|f| format!("{}: {}", f.key, f.error)).collect::<Vec<_>>().join("; ")
        )));
    }
    Ok(())
}

fn load_run(out: &Path, file: &str, prerequisite: &str) -> Result<EstimationRun, CliError> {
    let path = out.join(file);
    if !path.exists() {
        return Err(CliError::MissingFit {
            missing: path,
            prerequisite: prerequisite.into(),
        });
    }
    read_run_json(BufReader::new(open(&path)?)).at(&path, "fit")
}

/// Rebuilds the design a stored run was fitted on.
fn rebuild_design(a: &AnalyzeArgs, run: &EstimationRun, step: &mut Step) -> Result<(NewsCube, DesignMatrix), CliError> {
    let cov = load_tables(&a.tables, step, true)?;
    let cube = load_cube(&a.items, &a.out, calendar(&a.window)?, &cov, step)?;
    let offsets = offset_source(&a.offsets, &cube, step)?;
    let design =
        build_design_with_offsets(&cube, &cov, &run.spec, &offsets).map_err(|e| CliError::input("design", e.to_string()))?;
    if design.digest() != run.design_digest {
        return Err(CliError::input(
            "stale_fit",
            "the stored fit was made on different data or offsets; rerun `newsgravity fit`",
        ));
    }
    Ok((cube, design))
}

pub fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let mut step = Step::new("analyze", config(a), a.seed);
    let analysis_err = |e: newsgravity::analyze::AnalyzeError| CliError::input("analysis", e.to_string());
    let (key, files) = match a.what {
        Analysis::Residuals | Analysis::Coverage => {
            let run = load_run(&a.out, "fit_global.json", "newsgravity fit --scope global")?;
            step.input(&a.out.join("fit_global.json"))?;
            let (cube, design) = rebuild_design(a, &run, &mut step)?;
            if a.what == Analysis::Residuals {
                let table = residuals_by_country_design(&design, &run).map_err(analysis_err)?;
                write_residuals_csv(&table, create(&a.out, "residuals_country.csv")?)
                    .at(&a.out.join("residuals_country.csv"), "io")?;
                ("analyze_residuals".to_string(), vec!["residuals_country.csv".to_string()])
            } else {
                let country = a
                    .country
                    .as_deref()
                    .ok_or_else(|| CliError::input("config", "--country is required for coverage"))?;
                let rows = coverage_series_design(&cube, &design, &run, country).map_err(analysis_err)?;
                let name = format!("coverage_{country}.csv");
                write_coverage_csv(&rows, cube.calendar(), create(&a.out, &name)?).at(&a.out.join(&name), "io")?;
                (format!("analyze_coverage_{country}"), vec![name])
            }
        }
        Analysis::Pca | Analysis::Cluster => {
            let run = load_run(&a.out, "fit_by_media.json", "newsgravity fit --scope by_media")?;
            step.input(&a.out.join("fit_by_media.json"))?;
            let matrix = newsgravity::ParamMatrix::from_run(&run, None);
            let standardize = !a.unstandardized;
            if a.what == Analysis::Pca {
                let p = pca(&matrix, standardize).map_err(analysis_err)?;
                write_pca_loadings_csv(&p, create(&a.out, "pca_loadings.csv")?).at(&a.out.join("pca_loadings.csv"), "io")?;
                write_pca_scores_csv(&p, create(&a.out, "pca_scores.csv")?).at(&a.out.join("pca_scores.csv"), "io")?;
                ("analyze_pca".to_string(), vec!["pca_loadings.csv".to_string(), "pca_scores.csv".to_string()])
            } else {
                let c = ward_cluster(&matrix, a.k, standardize).map_err(analysis_err)?;
                write_assignments_csv(&c, create(&a.out, "cluster_assignments.csv")?)
                    .at(&a.out.join("cluster_assignments.csv"), "io")?;
                write_dendrogram_json(&c, create(&a.out, "dendrogram.json")?).at(&a.out.join("dendrogram.json"), "io")?;
                ("analyze_cluster".to_string(), vec!["cluster_assignments.csv".to_string(), "dendrogram.json".to_string()])
            }
        }
    };
    for f in &files {
        step.output(&a.out, f)?;
    }
    manifest::record(&a.out, &key, step)?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut step = Step::new("simulate", config(a), a.seed);
    let mut params = read_params_csv(open(&a.params)?).at(&a.params, "params")?;
    step.input(&a.params)?;
    match a.family {
        Family::NegBin if params.theta.is_none() => {
            return Err(CliError::at(&a.params, "params", "field `theta` is required for family negbin"));
        }
        Family::NegBin => {}
        Family::Poisson => params.theta = None,
        Family::Zip => return Err(CliError::input("config", "simulation supports poisson and negbin only")),
    }
    if !params.coefficients.contains_key("intercept") {
        return Err(CliError::at(&a.params, "params", "field `intercept` is missing"));
    }
    if a.no_kickoff {
        params.coefficients.remove("kickoff");
    }
    let cal = calendar(&a.window)?;
    out_dir(&a.out)?;
    let mut files = vec!["cube.csv", "offsets.csv", "truth.csv"];
    let (cov, media) = match a.synthetic_countries {
        Some(n) => {
            let world = synthetic_world(n, a.synthetic_media, a.seed).map_err(|e| CliError::input("config", e.to_string()))?;
            write_countries_csv(&world.covariates.countries, create(&a.out, "countries.csv")?)
                .at(&a.out.join("countries.csv"), "io")?;
            write_dyads_csv(&world.covariates.dyads, create(&a.out, "dyads.csv")?).at(&a.out.join("dyads.csv"), "io")?;
            write_media_csv(&world.covariates.media, create(&a.out, "media.csv")?).at(&a.out.join("media.csv"), "io")?;
            files.extend(["countries.csv", "dyads.csv", "media.csv"]);
            (world.covariates, world.media)
        }
        None => {
            let cov = load_tables(&a.tables, &mut step, true)?;
            let media = media_codes(&cov);
            (cov, media)
        }
    };
    let sim = simulate_cube(&params, &cov, &cal, &media, &SimOffsets::TargetRowTotal(a.row_total), a.include_home, a.seed)
        .map_err(|e| CliError::input("simulation", e.to_string()))?;
    write_cube_csv(&sim.cube, create(&a.out, "cube.csv")?).at(&a.out.join("cube.csv"), "io")?;

    let path = a.out.join("offsets.csv");
    let mut w = csv::Writer::from_writer(create(&a.out, "offsets.csv")?);
    w.write_record(["media", "week", "offset"]).at(&path, "io")?;
    for (i, o) in sim.offsets.iter().enumerate() {
        let (m, t) = (i / cal.n_weeks(), i % cal.n_weeks());
        w.write_record([media[m].clone(), t.to_string(), o.to_string()]).at(&path, "io")?;
    }
    w.flush().at(&path, "io")?;

    let path = a.out.join("truth.csv");
    let mut w = csv::Writer::from_writer(create(&a.out, "truth.csv")?);
    w.write_record(["term", "estimate"]).at(&path, "io")?;
    for (term, v) in &params.coefficients {
        w.write_record([term.clone(), v.to_string()]).at(&path, "io")?;
    }
    if let Some(theta) = params.theta {
        w.write_record(["theta".to_string(), theta.to_string()]).at(&path, "io")?;
    }
    w.flush().at(&path, "io")?;

    for f in files {
        step.output(&a.out, f)?;
    }
    step.extra = Some(json!({ "parameters": params, "row_total": a.row_total }));
    manifest::record(&a.out, "simulate", step)?;
    Ok(())
}
