use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{is_iso3, CubeError, Layer, RawItem, WeekCalendar};

/// What to do with an item that mentions a code outside the country universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownCountryPolicy {
    /// Reject the whole item.
    #[default]
    Reject,
    /// Drop the unknown codes and split the story between the remaining ones.
    DropAndRenormalize,
}

/// Counts of what happened to every record offered to the builder.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: u64,
    pub unknown_media: u64,
    pub out_of_window: u64,
    pub empty_country_set: u64,
    /// Items rejected because of unknown countries (or emptied by dropping them).
    pub unknown_country_rejected: u64,
    /// Individual codes removed under [`UnknownCountryPolicy::DropAndRenormalize`].
    pub unknown_country_dropped: u64,
    pub unknown_media_codes: BTreeSet<String>,
    pub unknown_country_codes: BTreeMap<String, u64>,
}

impl IngestReport {
    pub fn offered(&self) -> u64 {
        self.accepted
            + self.unknown_media
            + self.out_of_window
            + self.empty_country_set
            + self.unknown_country_rejected
    }

    fn merge(&mut self, other: IngestReport) {
        self.accepted += other.accepted;
        self.unknown_media += other.unknown_media;
        self.out_of_window += other.out_of_window;
        self.empty_country_set += other.empty_country_set;
        self.unknown_country_rejected += other.unknown_country_rejected;
        self.unknown_country_dropped += other.unknown_country_dropped;
        self.unknown_media_codes.extend(other.unknown_media_codes);
        for (code, n) in other.unknown_country_codes {
            *self.unknown_country_codes.entry(code).or_default() += n;
        }
    }
}

/// Zero media-weeks and the common row total after weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingReport {
    pub row_total: f64,
    pub zero_rows: Vec<(String, usize)>,
}

/// Raw and weighted story counts indexed by (media, week, country).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsCube {
    media: Vec<String>,
    calendar: WeekCalendar,
    countries: Vec<String>,
    raw: Vec<f64>,
    weighted: Option<Vec<f64>>,
}

fn index_of(codes: &[String], kind: &'static str) -> Result<HashMap<String, usize>, CubeError> {
    let mut map = HashMap::with_capacity(codes.len());
    for (i, c) in codes.iter().enumerate() {
        if map.insert(c.clone(), i).is_some() {
            return Err(CubeError::DuplicateCode { kind, code: c.clone() });
        }
    }
    Ok(map)
}

impl NewsCube {
    /// Wraps a dense raw layer laid out as `((m * T) + t) * P + p`.
    pub fn from_raw(
        media: Vec<String>,
        calendar: WeekCalendar,
        countries: Vec<String>,
        raw: Vec<f64>,
    ) -> Result<Self, CubeError> {
        index_of(&media, "media")?;
        index_of(&countries, "country")?;
        let n = media.len() * calendar.n_weeks() * countries.len();
        if raw.len() != n {
            return Err(CubeError::Shape(format!("expected {n} cells, got {}", raw.len())));
        }
        if let Some(bad) = raw.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CubeError::Shape(format!("cell value {bad} is not a nonnegative number")));
        }
        Ok(Self {
            media,
            calendar,
            countries,
            raw,
            weighted: None,
        })
    }

    pub fn media(&self) -> &[String] {
        &self.media
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn calendar(&self) -> &WeekCalendar {
        &self.calendar
    }

    pub fn n_media(&self) -> usize {
        self.media.len()
    }

    pub fn n_weeks(&self) -> usize {
        self.calendar.n_weeks()
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn n_cells(&self) -> usize {
        self.raw.len()
    }

    #[inline]
    pub fn index(&self, m: usize, t: usize, p: usize) -> usize {
        (m * self.n_weeks() + t) * self.n_countries() + p
    }

    pub fn media_index(&self, code: &str) -> Option<usize> {
        self.media.iter().position(|c| c == code)
    }

    pub fn country_index(&self, code: &str) -> Option<usize> {
        self.countries.iter().position(|c| c == code)
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn weighted(&self) -> Option<&[f64]> {
        self.weighted.as_deref()
    }

    pub fn layer(&self, layer: Layer) -> Result<&[f64], CubeError> {
        match layer {
            Layer::Raw => Ok(&self.raw),
            Layer::Weighted => self.weighted().ok_or(CubeError::LayerMissing(Layer::Weighted)),
        }
    }

    pub fn get(&self, layer: Layer, m: usize, t: usize, p: usize) -> Result<f64, CubeError> {
        Ok(self.layer(layer)?[self.index(m, t, p)])
    }

    /// Slice of one (media, week) row over all countries.
    pub fn row(&self, layer: Layer, m: usize, t: usize) -> Result<&[f64], CubeError> {
        let start = self.index(m, t, 0);
        Ok(&self.layer(layer)?[start..start + self.n_countries()])
    }

    pub fn row_sums(&self, layer: Layer) -> Result<Vec<f64>, CubeError> {
        let cells = self.layer(layer)?;
        Ok(cells.chunks(self.n_countries().max(1)).map(|c| c.iter().sum()).collect())
    }

    pub fn grand_total(&self, layer: Layer) -> Result<f64, CubeError> {
        Ok(self.layer(layer)?.iter().sum())
    }

    /// Fills the weighted layer so every nonzero (media, week) row sums to the
    /// same constant while the grand total is preserved.
    pub fn weight(&mut self) -> WeightingReport {
        let p = self.n_countries().max(1);
        let sums = self.row_sums(Layer::Raw).expect("raw layer always present");
        let total: f64 = sums.iter().sum();
        let nonzero = sums.iter().filter(|s| **s > 0.0).count();
        let row_total = if nonzero > 0 { total / nonzero as f64 } else { 0.0 };
        let mut weighted = vec![0.0; self.raw.len()];
        let mut zero_rows = Vec::new();
        for (r, (src, dst)) in self.raw.chunks(p).zip(weighted.chunks_mut(p)).enumerate() {
            let s = sums[r];
            if s > 0.0 {
                let scale = row_total / s;
                for (d, v) in dst.iter_mut().zip(src) {
                    *d = v * scale;
                }
            } else {
                let (m, t) = (r / self.n_weeks(), r % self.n_weeks());
                zero_rows.push((self.media[m].clone(), t));
            }
        }
        self.weighted = Some(weighted);
        WeightingReport { row_total, zero_rows }
    }

    /// Consuming form of [`NewsCube::weight`].
    pub fn weighted_cube(mut self) -> (Self, WeightingReport) {
        let report = self.weight();
        (self, report)
    }

    pub fn set_weighted(&mut self, weighted: Vec<f64>) -> Result<(), CubeError> {
        if weighted.len() != self.raw.len() {
            return Err(CubeError::Shape("weighted layer length differs from raw".into()));
        }
        self.weighted = Some(weighted);
        Ok(())
    }

    /// Population mean and standard deviation of all cells of a layer.
    pub fn dispersion_stats(&self, layer: Layer) -> Result<(f64, f64), CubeError> {
        let cells = self.layer(layer)?;
        if cells.is_empty() {
            return Ok((0.0, 0.0));
        }
        let n = cells.len() as f64;
        let mean = cells.iter().sum::<f64>() / n;
        let var = cells.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok((mean, var.sqrt()))
    }
}

/// Accumulates allocations as exact per-cell tallies of `1/k` shares, so the
/// finished cube does not depend on the order items arrive in.
#[derive(Debug, Clone)]
pub struct CubeBuilder {
    media: Vec<String>,
    countries: Vec<String>,
    media_index: HashMap<String, usize>,
    country_index: HashMap<String, usize>,
    calendar: WeekCalendar,
    policy: UnknownCountryPolicy,
    // (cell, k) -> number of items with k countries touching the cell
    tallies: HashMap<(usize, u32), u64>,
    report: IngestReport,
}

impl CubeBuilder {
    pub fn new(
        calendar: WeekCalendar,
        media: Vec<String>,
        countries: Vec<String>,
        policy: UnknownCountryPolicy,
    ) -> Result<Self, CubeError> {
        let media_index = index_of(&media, "media")?;
        let country_index = index_of(&countries, "country")?;
        if let Some(bad) = countries.iter().find(|c| !is_iso3(c)) {
            return Err(CubeError::Parse {
                line: 0,
                message: format!("`{bad}` is not an ISO3 code"),
            });
        }
        Ok(Self {
            media,
            countries,
            media_index,
            country_index,
            calendar,
            policy,
            tallies: HashMap::new(),
            report: IngestReport::default(),
        })
    }

    pub fn add(&mut self, item: &RawItem) {
        let Some(&m) = self.media_index.get(&item.media_code) else {
            self.report.unknown_media += 1;
            self.report.unknown_media_codes.insert(item.media_code.clone());
            return;
        };
        let Ok(t) = self.calendar.assign_week(&item.published_at) else {
            self.report.out_of_window += 1;
            return;
        };
        let mut codes: Vec<String> = item
            .countries
            .iter()
            .map(|c| c.trim().to_ascii_uppercase())
            .filter(|c| !c.is_empty())
            .collect();
        codes.sort();
        codes.dedup();
        if codes.is_empty() {
            self.report.empty_country_set += 1;
            return;
        }
        let mut known = Vec::with_capacity(codes.len());
        let mut unknown = 0;
        for code in codes {
            match self.country_index.get(&code) {
                Some(&p) => known.push(p),
                None => {
                    unknown += 1;
                    *self.report.unknown_country_codes.entry(code).or_default() += 1;
                }
            }
        }
        if unknown > 0 {
            match self.policy {
                UnknownCountryPolicy::Reject => {
                    self.report.unknown_country_rejected += 1;
                    return;
                }
                UnknownCountryPolicy::DropAndRenormalize => {
                    self.report.unknown_country_dropped += unknown;
                    if known.is_empty() {
                        self.report.unknown_country_rejected += 1;
                        return;
                    }
                }
            }
        }
        let k = known.len() as u32;
        let base = (m * self.calendar.n_weeks() + t) * self.countries.len();
        for p in known {
            *self.tallies.entry((base + p, k)).or_default() += 1;
        }
        self.report.accepted += 1;
    }

    /// Cell-wise addition of another partial cube over the same universe.
    pub fn merge(&mut self, other: CubeBuilder) {
        debug_assert_eq!(self.media, other.media);
        debug_assert_eq!(self.countries, other.countries);
        for (key, n) in other.tallies {
            *self.tallies.entry(key).or_default() += n;
        }
        self.report.merge(other.report);
    }

    fn empty_like(&self) -> Self {
        Self {
            media: self.media.clone(),
            countries: self.countries.clone(),
            media_index: self.media_index.clone(),
            country_index: self.country_index.clone(),
            calendar: self.calendar,
            policy: self.policy,
            tallies: HashMap::new(),
            report: IngestReport::default(),
        }
    }

    pub fn finish(self) -> (NewsCube, IngestReport) {
        let n = self.media.len() * self.calendar.n_weeks() * self.countries.len();
        let mut keys: Vec<((usize, u32), u64)> = self.tallies.into_iter().collect();
        keys.sort_unstable_by_key(|(k, _)| *k);
        let mut raw = vec![0.0; n];
        for ((cell, k), count) in keys {
            raw[cell] += count as f64 / k as f64;
        }
        let cube = NewsCube {
            media: self.media,
            calendar: self.calendar,
            countries: self.countries,
            raw,
            weighted: None,
        };
        (cube, self.report)
    }
}

/// Builds the raw layer from a stream of records.
pub fn build_cube<'a>(
    items: impl IntoIterator<Item = &'a RawItem>,
    calendar: WeekCalendar,
    media: Vec<String>,
    countries: Vec<String>,
    policy: UnknownCountryPolicy,
) -> Result<(NewsCube, IngestReport), CubeError> {
    let mut builder = CubeBuilder::new(calendar, media, countries, policy)?;
    for item in items {
        builder.add(item);
    }
    Ok(builder.finish())
}

/// Parallel form of [`build_cube`]; produces the identical cube.
pub fn build_cube_parallel(
    items: &[RawItem],
    calendar: WeekCalendar,
    media: Vec<String>,
    countries: Vec<String>,
    policy: UnknownCountryPolicy,
) -> Result<(NewsCube, IngestReport), CubeError> {
    let template = CubeBuilder::new(calendar, media, countries, policy)?;
    let merged = items
        .par_chunks(4096)
        .map(|chunk| {
            let mut b = template.empty_like();
            chunk.iter().for_each(|it| b.add(it));
            b
        })
        .reduce(
            || template.empty_like(),
            |mut a, b| {
                a.merge(b);
                a
            },
        );
    Ok(merged.finish())
}

/// Writes nonzero cells as `media,week,country,raw,weighted`.
pub fn write_cube_csv<W: Write>(cube: &NewsCube, writer: W) -> Result<(), CubeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["media", "week", "country", "raw", "weighted"])?;
    for m in 0..cube.n_media() {
        for t in 0..cube.n_weeks() {
            for p in 0..cube.n_countries() {
                let i = cube.index(m, t, p);
                let raw = cube.raw[i];
                let weighted = cube.weighted.as_ref().map(|w| w[i]);
                if raw == 0.0 && weighted.unwrap_or(0.0) == 0.0 {
                    continue;
                }
                w.write_record([
                    cube.media[m].clone(),
                    t.to_string(),
                    cube.countries[p].clone(),
                    raw.to_string(),
                    weighted.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a sparse cube CSV back over a known universe. The weighted layer is
/// restored when every row carries a weighted value.
pub fn read_cube_csv<R: Read>(
    reader: R,
    calendar: WeekCalendar,
    media: Vec<String>,
    countries: Vec<String>,
) -> Result<NewsCube, CubeError> {
    let mi = index_of(&media, "media")?;
    let ci = index_of(&countries, "country")?;
    let n = media.len() * calendar.n_weeks() * countries.len();
    let mut raw = vec![0.0; n];
    let mut weighted = vec![0.0; n];
    let mut has_weighted = true;
    let mut rdr = csv::Reader::from_reader(reader);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |message: String| CubeError::Parse { line, message };
        let m = *mi
            .get(&rec[0])
            .ok_or_else(|| bad(format!("unknown media `{}`", &rec[0])))?;
        let t: usize = rec[1].parse().map_err(|_| bad(format!("bad week `{}`", &rec[1])))?;
        if t >= calendar.n_weeks() {
            return Err(bad(format!("week {t} outside window")));
        }
        let p = *ci
            .get(&rec[2])
            .ok_or_else(|| bad(format!("unknown country `{}`", &rec[2])))?;
        let cell = (m * calendar.n_weeks() + t) * countries.len() + p;
        raw[cell] = rec[3].parse().map_err(|_| bad(format!("bad raw `{}`", &rec[3])))?;
        match rec.get(4).filter(|s| !s.is_empty()) {
            Some(s) => weighted[cell] = s.parse().map_err(|_| bad(format!("bad weighted `{s}`")))?,
            None => has_weighted = false,
        }
    }
    let mut cube = NewsCube::from_raw(media, calendar, countries, raw)?;
    if has_weighted {
        cube.weighted = Some(weighted);
    }
    Ok(cube)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newscube::parse_timestamp;

    fn item(media: &str, date: &str, countries: &[&str]) -> RawItem {
        RawItem {
            media_code: media.into(),
            published_at: parse_timestamp(date).unwrap(),
            countries: countries.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn codes(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn one_week() -> WeekCalendar {
        WeekCalendar::new(chrono::NaiveDate::from_ymd_opt(2015, 1, 5).unwrap(), 1).unwrap()
    }

    #[test]
    fn additivity_of_allocations() {
        let items = [item("A", "2015-01-05", &["XXX"]), item("A", "2015-01-06", &["XXX", "YYY"])];
        let (cube, report) = build_cube(
            &items,
            one_week(),
            codes(&["A"]),
            codes(&["XXX", "YYY"]),
            UnknownCountryPolicy::Reject,
        )
        .unwrap();
        assert_eq!(cube.get(Layer::Raw, 0, 0, 0).unwrap(), 1.5);
        assert_eq!(cube.get(Layer::Raw, 0, 0, 1).unwrap(), 0.5);
        assert_eq!(report.accepted, 2);
    }

    #[test]
    fn empty_stream_gives_zero_cube() {
        let (cube, report) = build_cube(
            &[],
            WeekCalendar::year_2015(),
            codes(&["A", "B"]),
            codes(&["FRA", "USA"]),
            UnknownCountryPolicy::Reject,
        )
        .unwrap();
        assert_eq!(cube.n_cells(), 2 * 52 * 2);
        assert!(cube.raw().iter().all(|v| *v == 0.0));
        assert_eq!(report.offered(), 0);
        assert_eq!(cube.dispersion_stats(Layer::Raw).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn rejected_items_are_counted() {
        let items = [
            item("A", "2015-01-05", &["FRA"]),
            item("Z", "2015-01-05", &["FRA"]),
            item("A", "2014-12-31", &["FRA"]),
            item("A", "2015-01-07", &[]),
            item("A", "2015-01-07", &["FRA", "QQQ"]),
        ];
        let (cube, report) = build_cube(
            &items,
            one_week(),
            codes(&["A"]),
            codes(&["FRA"]),
            UnknownCountryPolicy::Reject,
        )
        .unwrap();
        assert_eq!(report.accepted, 1);
        assert_eq!(report.unknown_media, 1);
        assert_eq!(report.out_of_window, 1);
        assert_eq!(report.empty_country_set, 1);
        assert_eq!(report.unknown_country_rejected, 1);
        assert_eq!(report.offered(), 5);
        assert_eq!(report.unknown_country_codes.get("QQQ"), Some(&1));
        assert_eq!(cube.grand_total(Layer::Raw).unwrap(), 1.0);
    }

    #[test]
    fn drop_policy_renormalizes() {
        let items = [item("A", "2015-01-05", &["FRA", "QQQ"]), item("A", "2015-01-05", &["QQQ"])];
        let (cube, report) = build_cube(
            &items,
            one_week(),
            codes(&["A"]),
            codes(&["FRA"]),
            UnknownCountryPolicy::DropAndRenormalize,
        )
        .unwrap();
        assert_eq!(cube.get(Layer::Raw, 0, 0, 0).unwrap(), 1.0);
        assert_eq!(report.accepted, 1);
        assert_eq!(report.unknown_country_dropped, 2);
        assert_eq!(report.unknown_country_rejected, 1);
    }

    #[test]
    fn duplicate_universe_rejected() {
        let err = CubeBuilder::new(one_week(), codes(&["A", "A"]), codes(&["FRA"]), Default::default());
        assert!(matches!(err, Err(CubeError::DuplicateCode { kind: "media", .. })));
    }

    #[test]
    fn weighting_equalizes_rows() {
        let cal = one_week();
        // media 1 rowsum 100, media 2 rowsum 300
        let raw = vec![60.0, 40.0, 100.0, 200.0];
        let (cube, report) = NewsCube::from_raw(codes(&["M1", "M2"]), cal, codes(&["AAA", "BBB"]), raw)
            .unwrap()
            .weighted_cube();
        assert_eq!(report.row_total, 200.0);
        let w = cube.weighted().unwrap();
        for (a, b) in w.iter().zip([120.0, 80.0, 200.0 / 3.0, 400.0 / 3.0]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(report.zero_rows.is_empty());
    }

    #[test]
    fn uniform_cube_is_weighting_fixed_point() {
        let raw = vec![1.0, 3.0, 2.0, 2.0];
        let (cube, _) = NewsCube::from_raw(codes(&["M1", "M2"]), one_week(), codes(&["AAA", "BBB"]), raw.clone())
            .unwrap()
            .weighted_cube();
        assert_eq!(cube.weighted().unwrap(), raw.as_slice());
    }

    #[test]
    fn zero_rows_flagged_and_total_preserved() {
        let raw = vec![0.0, 0.0, 1.0, 3.0, 2.0, 2.0];
        let (cube, report) =
            NewsCube::from_raw(codes(&["M1", "M2", "M3"]), one_week(), codes(&["AAA", "BBB"]), raw)
                .unwrap()
                .weighted_cube();
        assert_eq!(report.zero_rows, vec![("M1".to_string(), 0)]);
        assert_eq!(cube.grand_total(Layer::Weighted).unwrap(), 8.0);
        let sums = cube.row_sums(Layer::Weighted).unwrap();
        assert_eq!(sums, vec![0.0, 4.0, 4.0]);
    }

    #[test]
    fn dispersion_of_small_layer() {
        let cube = NewsCube::from_raw(codes(&["M1"]), one_week(), codes(&["AAA", "BBB", "CCC", "DDD"]), vec![0.0, 0.0, 3.0, 1.0])
            .unwrap();
        let (mu, sd) = cube.dispersion_stats(Layer::Raw).unwrap();
        assert_eq!(mu, 1.0);
        // population variance = (1 + 1 + 4 + 0) / 4 = 1.5
        assert!((sd - 1.5f64.sqrt()).abs() < 1e-15);
        assert!((sd - 1.2247).abs() < 1e-4);
        assert!(matches!(cube.dispersion_stats(Layer::Weighted), Err(CubeError::LayerMissing(_))));
    }

    #[test]
    fn csv_round_trip_preserves_cells() {
        let raw = vec![0.0, 1.0 / 3.0, 2.5, 0.0];
        let (cube, _) = NewsCube::from_raw(codes(&["M1", "M2"]), one_week(), codes(&["AAA", "BBB"]), raw)
            .unwrap()
            .weighted_cube();
        let mut buf = Vec::new();
        write_cube_csv(&cube, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        let back = read_cube_csv(buf.as_slice(), one_week(), codes(&["M1", "M2"]), codes(&["AAA", "BBB"])).unwrap();
        assert_eq!(back, cube);
    }
}
