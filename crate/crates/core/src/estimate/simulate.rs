use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EstimateError;
use crate::covariates::{
    build_design_with_offsets, great_circle_distance, CountryAttributes, CountryTable, Covariates, Dyad, DyadTable,
    MediaOutlet, ModelSpec, OffsetMode, OffsetSource, Term,
};
use crate::countglm::Family;
use crate::newscube::{Layer, NewsCube, WeekCalendar};

/// Generating parameters of a synthetic cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// `intercept` plus any of the term names.
    pub coefficients: BTreeMap<String, f64>,
    /// NB2 dispersion; `None` (or infinity) draws Poisson counts.
    pub theta: Option<f64>,
    /// Per-outlet replacements for individual coefficients.
    #[serde(default)]
    pub media_overrides: BTreeMap<String, BTreeMap<String, f64>>,
}

impl SimParams {
    /// The global negative binomial estimates reported for the 2015 corpus.
    pub fn table5(theta: Option<f64>) -> Self {
        let values = [
            ("intercept", -3.735),
            ("log_sup", 0.505),
            ("log_density", 0.553),
            ("log_gdpc", 0.184),
            ("pm5", 0.633),
            ("g14", 0.077),
            ("vat", 5.163),
            ("log_invdist", 0.333),
            ("lang", 0.331),
            ("kickoff", 1.818),
        ];
        Self {
            coefficients: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            theta,
            media_overrides: BTreeMap::new(),
        }
    }

    /// Terms present, in canonical order.
    pub fn terms(&self) -> Result<Vec<Term>, EstimateError> {
        self.validate()?;
        Ok(Term::ALL.into_iter().filter(|t| self.coefficients.contains_key(t.name())).collect())
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        if !self.coefficients.contains_key("intercept") {
            return Err(EstimateError::InvalidParams("missing `intercept`".into()));
        }
        let check = |map: &BTreeMap<String, f64>| -> Result<(), EstimateError> {
            for (k, v) in map {
                if k != "intercept" && k.parse::<Term>().is_err() {
                    return Err(EstimateError::InvalidParams(format!("unknown term `{k}`")));
                }
                if !v.is_finite() {
                    return Err(EstimateError::InvalidParams(format!("`{k}` is not finite")));
                }
            }
            Ok(())
        };
        check(&self.coefficients)?;
        for (m, o) in &self.media_overrides {
            check(o)?;
            if let Some(k) = o.keys().find(|k| !self.coefficients.contains_key(*k)) {
                return Err(EstimateError::InvalidParams(format!("override `{k}` for {m} has no global value")));
            }
        }
        if let Some(t) = self.theta {
            if !(t > 0.0) {
                return Err(EstimateError::InvalidParams(format!("theta must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn value(&self, media: &str, name: &str) -> f64 {
        self.media_overrides
            .get(media)
            .and_then(|o| o.get(name))
            .or_else(|| self.coefficients.get(name))
            .copied()
            .unwrap_or(0.0)
    }

    fn poisson(&self) -> bool {
        self.theta.is_none_or(f64::is_infinite)
    }
}

/// How each media-week's volume is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimOffsets {
    /// Log offsets per (media, week), media-major.
    Supplied(Vec<f64>),
    /// Offsets chosen so each media-week's expected total equals this.
    TargetRowTotal(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub cube: NewsCube,
    /// The log offsets used, media-major; pass them back as
    /// `OffsetSource::Supplied` to refit the generating model.
    pub offsets: Vec<f64>,
}

/// Draws every (media, week, country) cell from the model with mean
/// exp(Xβ + offset). The kickoff covariate is generated week by week from
/// the counts just drawn. Home cells stay empty unless `include_home`.
pub fn simulate_cube(
    params: &SimParams,
    cov: &Covariates,
    calendar: &WeekCalendar,
    media: &[String],
    offsets: &SimOffsets,
    include_home: bool,
    seed: u64,
) -> Result<Simulated, EstimateError> {
    let terms = params.terms()?;
    let countries = cov.countries.codes();
    let (n_m, n_t, n_p) = (media.len(), calendar.n_weeks(), countries.len());
    if let SimOffsets::Supplied(v) = offsets {
        if v.len() != n_m * n_t || v.iter().any(|o| !o.is_finite()) {
            return Err(EstimateError::InvalidParams(format!(
                "need {} finite offsets, got {}",
                n_m * n_t,
                v.len()
            )));
        }
    }
    if let SimOffsets::TargetRowTotal(t) = offsets {
        if !(*t > 0.0 && t.is_finite()) {
            return Err(EstimateError::InvalidParams(format!("target row total {t}")));
        }
    }
    let static_terms: Vec<Term> = terms.iter().copied().filter(|t| *t != Term::Kickoff).collect();
    let template = NewsCube::from_raw(media.to_vec(), calendar.clone(), countries.clone(), vec![1.0; n_m * n_t * n_p])?;
    let spec = ModelSpec {
        terms: static_terms,
        family: Family::Poisson,
        response_layer: Layer::Raw,
        include_home,
        offset_mode: OffsetMode::Fixed,
    };
    let design = build_design_with_offsets(&template, cov, &spec, &OffsetSource::Supplied(vec![0.0; n_m * n_t]))?;
    let has_kickoff = terms.contains(&Term::Kickoff);

    // rows are ordered media, week, country; collect the range for each media
    let mut bounds = vec![(0usize, 0usize); n_m];
    for (i, k) in design.keys().iter().enumerate() {
        let b = &mut bounds[k.media as usize];
        if b.1 == 0 {
            b.0 = i;
        }
        b.1 = i + 1;
    }

    let per_media: Vec<(Vec<f64>, Vec<f64>)> = (0..n_m)
        .into_par_iter()
        .map(|m| {
            let code = &media[m];
            let beta: Vec<f64> = design.columns().iter().map(|c| params.value(code, c)).collect();
            let kappa = if has_kickoff { params.value(code, Term::Kickoff.name()) } else { 0.0 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            let mut counts = vec![0.0; n_t * n_p];
            let mut offs = vec![0.0; n_t];
            let (lo, hi) = bounds[m];
            let rows: Vec<usize> = (lo..hi).collect();
            for t in 0..n_t {
                let week_rows: Vec<usize> = rows
                    .iter()
                    .copied()
                    .filter(|&i| design.keys()[i].week as usize == t)
                    .collect();
                let lin: Vec<f64> = week_rows
                    .iter()
                    .map(|&i| {
                        let p = design.keys()[i].country as usize;
                        let prev = t > 0 && counts[(t - 1) * n_p + p] > 0.0;
                        design.eta(i, &beta) + if prev { kappa } else { 0.0 }
                    })
                    .collect();
                let o = match offsets {
                    SimOffsets::Supplied(v) => v[m * n_t + t],
                    SimOffsets::TargetRowTotal(total) => {
                        let top = lin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let lse = top + lin.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
                        total.ln() - lse
                    }
                };
                offs[t] = o;
                for (&i, l) in week_rows.iter().zip(&lin) {
                    let p = design.keys()[i].country as usize;
                    let mean = (l + o).exp();
                    counts[t * n_p + p] = draw(params, mean, &mut rng);
                }
            }
            (counts, offs)
        })
        .collect();

    let mut raw = Vec::with_capacity(n_m * n_t * n_p);
    let mut offsets_used = Vec::with_capacity(n_m * n_t);
    for (counts, offs) in per_media {
        raw.extend(counts);
        offsets_used.extend(offs);
    }
    let (cube, _) = NewsCube::from_raw(media.to_vec(), calendar.clone(), countries, raw)?.weighted_cube();
    Ok(Simulated {
        cube,
        offsets: offsets_used,
    })
}

fn draw(params: &SimParams, mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    let lambda = if params.poisson() {
        mean
    } else {
        let theta = params.theta.expect("checked");
        Gamma::new(theta, mean / theta).map_or(mean, |g| g.sample(rng))
    };
    if !(lambda > 0.0) {
        return 0.0;
    }
    Poisson::new(lambda.min(1e15)).map_or(0.0, |d| d.sample(rng))
}

/// A generated universe of countries, dyads and outlets.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub covariates: Covariates,
    pub media: Vec<String>,
}

fn code(i: usize) -> String {
    let letters = [i / 676 % 26, i / 26 % 26, i % 26];
    letters.iter().map(|&l| (b'A' + l as u8) as char).collect()
}

/// `n_countries` countries (the first five P5, the next fourteen G14, the
/// last one the city-state `VAT`) with log-normal size attributes,
/// random capitals and eight language groups, plus `n_media` outlets homed
/// in distinct non-VAT countries. Deterministic in `seed`.
pub fn synthetic_world(n_countries: usize, n_media: usize, seed: u64) -> Result<SyntheticWorld, EstimateError> {
    if !(21..=14_000).contains(&n_countries) || n_media + 1 > n_countries {
        return Err(EstimateError::InvalidParams(format!(
            "{n_countries} countries cannot host {n_media} media (need at least 21 countries)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = Normal::new(11.0f64, 2.0).unwrap();
    let density = Normal::new(4.3f64, 1.3).unwrap();
    let gdpc = Normal::new(9.3f64, 1.1).unwrap();
    let lang_weights = [0.3, 0.2, 0.15, 0.1, 0.1, 0.07, 0.05, 0.03];
    let mut rows = Vec::with_capacity(n_countries);
    let mut languages = Vec::with_capacity(n_countries);
    for i in 0..n_countries {
        let vat = i == n_countries - 1;
        let p5 = i < 5;
        let g14 = (5..19).contains(&i);
        let mut log_area: f64 = area.sample(&mut rng);
        if p5 || g14 {
            log_area += 2.0;
        }
        let (area_km2, population, gdp) = if vat {
            (0.44, 800.0, 800.0 * 4.0e4)
        } else {
            let a = log_area.clamp(3.0, 17.0).exp();
            let pop = a * density.sample(&mut rng).clamp(0.0, 9.0).exp();
            let g = pop * gdpc.sample(&mut rng).clamp(6.0, 12.0).exp();
            (a, pop, g)
        };
        let u: f64 = rng.random();
        let lat = (2.0 * u - 1.0).asin().to_degrees();
        let lon = rng.random_range(-180.0..180.0);
        let mut pick: f64 = rng.random();
        let mut lang = lang_weights.len() - 1;
        for (l, w) in lang_weights.iter().enumerate() {
            if pick < *w {
                lang = l;
                break;
            }
            pick -= w;
        }
        languages.push(format!("L{lang}"));
        rows.push(CountryAttributes {
            iso3: if vat { "VAT".to_string() } else { code(i) },
            area_km2,
            population,
            gdp_ppp: gdp,
            p5,
            g14,
            vat,
            capital_lat: lat,
            capital_lon: lon,
        });
    }
    let mut dyads = DyadTable::new();
    for i in 0..n_countries {
        for j in i + 1..n_countries {
            let (a, b) = (&rows[i], &rows[j]);
            let d = great_circle_distance(a.capital_lat, a.capital_lon, b.capital_lat, b.capital_lon).max(1.0);
            dyads.insert(Dyad {
                home_iso3: a.iso3.clone(),
                guest_iso3: b.iso3.clone(),
                distance_km: d,
                common_language: languages[i] == languages[j],
            })?;
        }
    }
    let mut homes: Vec<usize> = (0..n_countries - 1).collect();
    homes.shuffle(&mut rng);
    homes.truncate(n_media);
    homes.sort_unstable();
    let media: Vec<MediaOutlet> = homes
        .iter()
        .enumerate()
        .map(|(k, &h)| MediaOutlet {
            media_code: format!("M{:02}", k + 1),
            home_iso3: rows[h].iso3.clone(),
            language: languages[h].clone(),
        })
        .collect();
    let codes = media.iter().map(|m| m.media_code.clone()).collect();
    Ok(SyntheticWorld {
        covariates: Covariates {
            countries: CountryTable::new(rows)?,
            dyads,
            media,
        },
        media: codes,
    })
}
