use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Covariates, DesignError, ModelSpec, OffsetMode, Term};
use crate::newscube::{Layer, NewsCube};

/// Position of a design row in its cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub media: u32,
    pub week: u32,
    pub country: u32,
}

/// Cells dropped from estimation, by the first rule that excluded them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub total_cells: usize,
    pub zero_media_weeks: usize,
    pub first_week: usize,
    pub home: usize,
    pub used: usize,
    /// `log_volume` was requested but is constant over the used rows.
    pub volume_column_dropped: bool,
}

impl ExclusionReport {
    pub fn is_consistent(&self) -> bool {
        self.zero_media_weeks + self.first_week + self.home + self.used == self.total_cells
    }
}

/// Where the offset comes from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum OffsetSource {
    /// log of the (media, week) row total on the response layer.
    #[default]
    RowTotal,
    /// Known log offsets, one per (media, week), laid out as `m * T + t`.
    Supplied(Vec<f64>),
}

/// Row-major design with response, offset and optional prior weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    columns: Vec<String>,
    x: Vec<f64>,
    y: Vec<f64>,
    offset: Vec<f64>,
    weights: Option<Vec<f64>>,
    keys: Vec<CellKey>,
    media: Vec<String>,
    countries: Vec<String>,
    exclusions: ExclusionReport,
}

impl DesignMatrix {
    /// A design not tied to any cube. `x` is row-major with one column per name.
    pub fn from_parts(
        columns: Vec<String>,
        x: Vec<f64>,
        y: Vec<f64>,
        offset: Option<Vec<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self, DesignError> {
        let n = y.len();
        let p = columns.len();
        if p == 0 || x.len() != n * p {
            return Err(DesignError::Shape(format!("{} values for {n} rows × {p} columns", x.len())));
        }
        let offset = offset.unwrap_or_else(|| vec![0.0; n]);
        if offset.len() != n || weights.as_ref().is_some_and(|w| w.len() != n) {
            return Err(DesignError::Shape("offset/weights length differs from response".into()));
        }
        let d = Self {
            columns,
            x,
            y,
            offset,
            weights,
            keys: Vec::new(),
            media: Vec::new(),
            countries: Vec::new(),
            exclusions: ExclusionReport {
                total_cells: n,
                used: n,
                ..Default::default()
            },
        };
        d.check_finite()?;
        Ok(d)
    }

    fn check_finite(&self) -> Result<(), DesignError> {
        let p = self.n_cols();
        for i in 0..self.n_rows() {
            if let Some(j) = self.row(i).iter().position(|v| !v.is_finite()) {
                return Err(DesignError::NonFinite {
                    row: i,
                    column: self.columns[j].clone(),
                });
            }
            let named = |c: &str| DesignError::NonFinite {
                row: i,
                column: c.to_string(),
            };
            if !self.y[i].is_finite() {
                return Err(named("response"));
            }
            if !self.offset[i].is_finite() {
                return Err(named("offset"));
            }
            if let Some(w) = &self.weights {
                if !(w[i].is_finite() && w[i] >= 0.0) {
                    return Err(named("weight"));
                }
            }
        }
        debug_assert_eq!(self.x.len(), self.n_rows() * p);
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn has_intercept(&self) -> bool {
        self.columns.first().is_some_and(|c| c == "intercept")
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.x[i * p..(i + 1) * p]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn keys(&self) -> &[CellKey] {
        &self.keys
    }

    pub fn media(&self) -> &[String] {
        &self.media
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn exclusions(&self) -> &ExclusionReport {
        &self.exclusions
    }

    /// Linear predictor Xβ + offset for one row.
    #[inline]
    pub fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        self.offset[i] + self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Rows in the given order; cube keys are kept when present.
    pub fn subset(&self, rows: &[usize]) -> DesignMatrix {
        let p = self.n_cols();
        let mut x = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            x.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            columns: self.columns.clone(),
            x,
            y: rows.iter().map(|&i| self.y[i]).collect(),
            offset: rows.iter().map(|&i| self.offset[i]).collect(),
            weights: self.weights.as_ref().map(|w| rows.iter().map(|&i| w[i]).collect()),
            keys: if self.keys.is_empty() {
                Vec::new()
            } else {
                rows.iter().map(|&i| self.keys[i]).collect()
            },
            media: self.media.clone(),
            countries: self.countries.clone(),
            exclusions: ExclusionReport {
                total_cells: rows.len(),
                used: rows.len(),
                ..Default::default()
            },
        }
    }

    /// Row indices whose cube key satisfies the predicate.
    pub fn rows_where(&self, pred: impl Fn(&CellKey) -> bool) -> Vec<usize> {
        self.keys.iter().enumerate().filter(|(_, k)| pred(k)).map(|(i, _)| i).collect()
    }

    /// Drops columns (other than the intercept) that are constant over the rows.
    pub fn without_constant_columns(&self) -> (DesignMatrix, Vec<String>) {
        let p = self.n_cols();
        let n = self.n_rows();
        let keep: Vec<usize> = (0..p)
            .filter(|&j| {
                if j == 0 && self.has_intercept() {
                    return true;
                }
                let first = if n > 0 { self.x[j] } else { 0.0 };
                (0..n).any(|i| self.x[i * p + j] != first)
            })
            .collect();
        if keep.len() == p {
            return (self.clone(), Vec::new());
        }
        let dropped = (0..p).filter(|j| !keep.contains(j)).map(|j| self.columns[j].clone()).collect();
        let mut x = Vec::with_capacity(n * keep.len());
        for i in 0..n {
            let r = self.row(i);
            x.extend(keep.iter().map(|&j| r[j]));
        }
        let mut out = self.clone();
        out.columns = keep.iter().map(|&j| self.columns[j].clone()).collect();
        out.x = x;
        (out, dropped)
    }

    pub fn with_offset_shift(&self, c: f64) -> DesignMatrix {
        let mut out = self.clone();
        out.offset.iter_mut().for_each(|o| *o += c);
        out
    }

    /// Same rows with a different response.
    pub fn with_response(&self, y: Vec<f64>) -> Result<DesignMatrix, DesignError> {
        if y.len() != self.n_rows() {
            return Err(DesignError::Shape("response length differs from design".into()));
        }
        let mut out = self.clone();
        out.y = y;
        out.check_finite()?;
        Ok(out)
    }

    pub fn with_weights(&self, weights: Option<Vec<f64>>) -> Result<DesignMatrix, DesignError> {
        if weights.as_ref().is_some_and(|w| w.len() != self.n_rows()) {
            return Err(DesignError::Shape("weights length differs from design".into()));
        }
        let mut out = self.clone();
        out.weights = weights;
        out.check_finite()?;
        Ok(out)
    }

    /// The named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<DesignMatrix, DesignError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| DesignError::UnknownTerm(n.clone())))
            .collect::<Result<_, _>>()?;
        let n = self.n_rows();
        let mut x = Vec::with_capacity(n * idx.len());
        for i in 0..n {
            let r = self.row(i);
            x.extend(idx.iter().map(|&j| r[j]));
        }
        let mut out = self.clone();
        out.columns = names.to_vec();
        out.x = x;
        Ok(out)
    }

    pub fn without_offset(&self) -> DesignMatrix {
        let mut out = self.clone();
        out.offset.iter_mut().for_each(|o| *o = 0.0);
        out
    }

    /// Intercept-only design sharing response, offset and weights.
    pub fn intercept_only(&self) -> DesignMatrix {
        let mut out = self.clone();
        out.columns = vec!["intercept".into()];
        out.x = vec![1.0; self.n_rows()];
        out
    }

    /// SHA-256 over columns, values, response, offset and weights.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.columns {
            h.update(c.as_bytes());
            h.update([0u8]);
        }
        for slice in [&self.x, &self.y, &self.offset] {
            h.update((slice.len() as u64).to_le_bytes());
            for v in slice.iter() {
                h.update(v.to_le_bytes());
            }
        }
        if let Some(w) = &self.weights {
            for v in w {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Whether outlet `m` mentioned country `p` during week `t − 1`.
pub fn kickoff_indicator(cube: &NewsCube, m: usize, p: usize, t: usize) -> Result<u8, DesignError> {
    if t == 0 {
        return Err(DesignError::FirstWeekUndefined);
    }
    Ok(u8::from(cube.get(Layer::Raw, m, t - 1, p)? > 0.0))
}

/// Builds the design with offsets taken from the response layer's row totals.
pub fn build_design(cube: &NewsCube, cov: &Covariates, spec: &ModelSpec) -> Result<DesignMatrix, DesignError> {
    build_design_with_offsets(cube, cov, spec, &OffsetSource::RowTotal)
}

struct GuestCovariates {
    log_invdist: f64,
    lang: f64,
}

pub fn build_design_with_offsets(
    cube: &NewsCube,
    cov: &Covariates,
    spec: &ModelSpec,
    source: &OffsetSource,
) -> Result<DesignMatrix, DesignError> {
    spec.validate()?;
    let (n_m, n_t, n_p) = (cube.n_media(), cube.n_weeks(), cube.n_countries());
    let cells = cube.layer(spec.response_layer)?;
    let raw = cube.raw();

    let log_volume: Vec<Option<f64>> = match source {
        OffsetSource::RowTotal => cube
            .row_sums(spec.response_layer)?
            .into_iter()
            .map(|s| (s > 0.0).then(|| s.ln()))
            .collect(),
        OffsetSource::Supplied(v) => {
            if v.len() != n_m * n_t {
                return Err(DesignError::Shape(format!(
                    "{} supplied offsets for {} media-weeks",
                    v.len(),
                    n_m * n_t
                )));
            }
            v.iter().map(|o| Some(*o)).collect()
        }
    };

    let size: Vec<[f64; 6]> = cube
        .countries()
        .iter()
        .map(|code| {
            let c = cov
                .countries
                .get(code)
                .ok_or_else(|| DesignError::MissingCovariate(format!("country {code}")))?;
            Ok([
                c.area_km2.ln(),
                c.density().ln(),
                c.gdp_per_capita().ln(),
                f64::from(u8::from(c.p5)),
                f64::from(u8::from(c.g14)),
                f64::from(u8::from(c.vat)),
            ])
        })
        .collect::<Result<_, DesignError>>()?;

    let mut homes = Vec::with_capacity(n_m);
    let mut relatedness: Vec<Vec<Option<GuestCovariates>>> = Vec::with_capacity(n_m);
    for code in cube.media() {
        let home = cov
            .home_of(code)
            .ok_or_else(|| DesignError::MissingCovariate(format!("home country of media {code}")))?;
        let home_p = cube.country_index(home);
        let mut row = Vec::with_capacity(n_p);
        for (p, guest) in cube.countries().iter().enumerate() {
            if Some(p) == home_p {
                if !spec.include_home {
                    row.push(None);
                    continue;
                }
                let attrs = cov.countries.get(guest).expect("checked above");
                let d = cov
                    .dyads
                    .get(home, guest)
                    .map(|(d, _)| d)
                    .filter(|d| *d > 0.0)
                    .unwrap_or_else(|| attrs.internal_distance());
                row.push(Some(GuestCovariates {
                    log_invdist: -d.ln(),
                    lang: 1.0,
                }));
                continue;
            }
            let (d, lang) = cov
                .dyads
                .get(home, guest)
                .ok_or_else(|| DesignError::MissingCovariate(format!("dyad {home}-{guest}")))?;
            row.push(Some(GuestCovariates {
                log_invdist: -d.ln(),
                lang: f64::from(u8::from(lang)),
            }));
        }
        homes.push(home_p);
        relatedness.push(row);
    }

    let kickoff = spec.has_kickoff();
    let mut report = ExclusionReport {
        total_cells: n_m * n_t * n_p,
        ..Default::default()
    };

    // which media-weeks are usable and what their volume is
    let mut used_volumes = Vec::new();
    for m in 0..n_m {
        for t in 0..n_t {
            match log_volume[m * n_t + t] {
                None => report.zero_media_weeks += n_p,
                Some(_) if kickoff && t == 0 => report.first_week += n_p,
                Some(v) => used_volumes.push(v),
            }
        }
    }
    let volume_column = spec.offset_mode == OffsetMode::Estimated && {
        let lo = used_volumes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = used_volumes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let constant = used_volumes.is_empty() || (hi - lo) <= 1e-12 * hi.abs().max(1.0);
        report.volume_column_dropped = constant;
        !constant
    };

    let mut columns = vec!["intercept".to_string()];
    columns.extend(spec.terms.iter().map(|t| t.name().to_string()));
    if volume_column {
        columns.push("log_volume".into());
    }
    let n_cols = columns.len();

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut offset = Vec::new();
    let mut keys = Vec::new();
    for m in 0..n_m {
        for t in 0..n_t {
            let Some(volume) = log_volume[m * n_t + t] else { continue };
            if kickoff && t == 0 {
                continue;
            }
            for p in 0..n_p {
                let Some(rel) = &relatedness[m][p] else {
                    report.home += 1;
                    continue;
                };
                let s = &size[p];
                x.push(1.0);
                for term in &spec.terms {
                    x.push(match term {
                        Term::LogSup => s[0],
                        Term::LogDensity => s[1],
                        Term::LogGdpc => s[2],
                        Term::Pm5 => s[3],
                        Term::G14 => s[4],
                        Term::Vat => s[5],
                        Term::LogInvdist => rel.log_invdist,
                        Term::Lang => rel.lang,
                        Term::Kickoff => f64::from(u8::from(raw[cube.index(m, t - 1, p)] > 0.0)),
                    });
                }
                if volume_column {
                    x.push(volume);
                    offset.push(0.0);
                } else {
                    offset.push(volume);
                }
                y.push(cells[cube.index(m, t, p)]);
                keys.push(CellKey {
                    media: m as u32,
                    week: t as u32,
                    country: p as u32,
                });
            }
        }
    }
    debug_assert_eq!(homes.len(), n_m);
    report.used = y.len();
    if y.is_empty() {
        return Err(DesignError::Empty);
    }
    let design = DesignMatrix {
        columns,
        x,
        y,
        offset,
        weights: None,
        keys,
        media: cube.media().to_vec(),
        countries: cube.countries().to_vec(),
        exclusions: report,
    };
    debug_assert_eq!(design.x.len(), design.n_rows() * n_cols);
    design.check_finite()?;
    Ok(design)
}
