use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{great_circle_distance, DesignError};

/// Size and elite covariates of one country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryAttributes {
    pub iso3: String,
    pub area_km2: f64,
    pub population: f64,
    pub gdp_ppp: f64,
    /// Permanent member of the UN Security Council.
    pub p5: bool,
    /// Other G20 member.
    pub g14: bool,
    /// Holy See.
    pub vat: bool,
    pub capital_lat: f64,
    pub capital_lon: f64,
}

impl CountryAttributes {
    pub fn validate(&self) -> Result<(), DesignError> {
        for (field, v) in [
            ("area_km2", self.area_km2),
            ("population", self.population),
            ("gdp_ppp", self.gdp_ppp),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DesignError::NonpositiveCovariate {
                    iso3: self.iso3.clone(),
                    field,
                });
            }
        }
        if self.p5 && self.g14 {
            return Err(DesignError::InvalidAttribute(format!("{}: p5 and g14 are exclusive", self.iso3)));
        }
        if self.vat && self.iso3 != "VAT" {
            return Err(DesignError::InvalidAttribute(format!("{}: vat flag is reserved for VAT", self.iso3)));
        }
        if !(-90.0..=90.0).contains(&self.capital_lat) || !(-180.0..=180.0).contains(&self.capital_lon) {
            return Err(DesignError::InvalidAttribute(format!("{}: capital coordinates out of range", self.iso3)));
        }
        Ok(())
    }

    pub fn density(&self) -> f64 {
        self.population / self.area_km2
    }

    pub fn gdp_per_capita(&self) -> f64 {
        self.gdp_ppp / self.population
    }

    /// Radius of a disc with the country's area, halved.
    pub fn internal_distance(&self) -> f64 {
        0.5 * (self.area_km2 / std::f64::consts::PI).sqrt()
    }
}

/// Validated country records indexed by ISO3 code.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountryTable {
    rows: Vec<CountryAttributes>,
    index: HashMap<String, usize>,
}

impl CountryTable {
    pub fn new(rows: Vec<CountryAttributes>) -> Result<Self, DesignError> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            r.validate()?;
            if index.insert(r.iso3.clone(), i).is_some() {
                return Err(DesignError::InvalidAttribute(format!("country {} listed twice", r.iso3)));
            }
        }
        Ok(Self { rows, index })
    }

    pub fn get(&self, iso3: &str) -> Option<&CountryAttributes> {
        self.index.get(iso3).map(|&i| &self.rows[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &CountryAttributes> {
        self.rows.iter()
    }

    pub fn codes(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.iso3.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Dyadic covariates for a (home, guest) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dyad {
    pub home_iso3: String,
    pub guest_iso3: String,
    pub distance_km: f64,
    pub common_language: bool,
}

/// Symmetric pair table keyed by the unordered country pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DyadTable {
    pairs: HashMap<(String, String), (f64, bool)>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl DyadTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, dyad: Dyad) -> Result<(), DesignError> {
        let same = dyad.home_iso3 == dyad.guest_iso3;
        if !dyad.distance_km.is_finite() || dyad.distance_km < 0.0 || (!same && dyad.distance_km == 0.0) {
            return Err(DesignError::NonpositiveCovariate {
                iso3: format!("{}-{}", dyad.home_iso3, dyad.guest_iso3),
                field: "distance_km",
            });
        }
        let key = pair_key(&dyad.home_iso3, &dyad.guest_iso3);
        let value = (dyad.distance_km, dyad.common_language);
        if let Some(prev) = self.pairs.get(&key) {
            if *prev != value {
                return Err(DesignError::Asymmetric { a: key.0, b: key.1 });
            }
        }
        self.pairs.insert(key, value);
        Ok(())
    }

    pub fn get(&self, a: &str, b: &str) -> Option<(f64, bool)> {
        self.pairs.get(&pair_key(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// All pairs in a deterministic order, one record per unordered pair.
    pub fn to_dyads(&self) -> Vec<Dyad> {
        let mut out: Vec<Dyad> = self
            .pairs
            .iter()
            .map(|((a, b), (d, l))| Dyad {
                home_iso3: a.clone(),
                guest_iso3: b.clone(),
                distance_km: *d,
                common_language: *l,
            })
            .collect();
        out.sort_by(|x, y| (&x.home_iso3, &x.guest_iso3).cmp(&(&y.home_iso3, &y.guest_iso3)));
        out
    }
}

/// A newspaper and the country it is published in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaOutlet {
    pub media_code: String,
    pub home_iso3: String,
    pub language: String,
}

/// Everything structural the design needs besides the cube.
#[derive(Debug, Clone, Default)]
pub struct Covariates {
    pub countries: CountryTable,
    pub dyads: DyadTable,
    pub media: Vec<MediaOutlet>,
}

impl Covariates {
    pub fn home_of(&self, media_code: &str) -> Option<&str> {
        self.media
            .iter()
            .find(|m| m.media_code == media_code)
            .map(|m| m.home_iso3.as_str())
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" | "t" => Some(true),
        "0" | "false" | "no" | "n" | "f" | "" => Some(false),
        _ => None,
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

struct Columns(csv::StringRecord);

impl Columns {
    fn find(&self, name: &str) -> Result<usize, DesignError> {
        self.0.iter().position(|h| h == name).ok_or_else(|| DesignError::Parse {
            line: 1,
            message: format!("missing column `{name}`"),
        })
    }
}

/// Reads `iso3,area_km2,population,gdp_ppp,p5,g14,vat,capital_lat,capital_lon`.
pub fn read_countries_csv<R: Read>(reader: R) -> Result<CountryTable, DesignError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = Columns(rdr.headers()?.clone());
    let idx: Vec<usize> = [
        "iso3", "area_km2", "population", "gdp_ppp", "p5", "g14", "vat", "capital_lat", "capital_lon",
    ]
    .iter()
    .map(|n| cols.find(n))
    .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |k: usize, name: &str| {
            parse_f64(&rec[idx[k]]).ok_or_else(|| DesignError::Parse {
                line,
                message: format!("bad {name} `{}`", &rec[idx[k]]),
            })
        };
        let flag = |k: usize, name: &str| {
            parse_bool(&rec[idx[k]]).ok_or_else(|| DesignError::Parse {
                line,
                message: format!("bad {name} `{}`", &rec[idx[k]]),
            })
        };
        rows.push(CountryAttributes {
            iso3: rec[idx[0]].to_ascii_uppercase(),
            area_km2: num(1, "area_km2")?,
            population: num(2, "population")?,
            gdp_ppp: num(3, "gdp_ppp")?,
            p5: flag(4, "p5")?,
            g14: flag(5, "g14")?,
            vat: flag(6, "vat")?,
            capital_lat: num(7, "capital_lat")?,
            capital_lon: num(8, "capital_lon")?,
        });
    }
    CountryTable::new(rows)
}

/// Reads `home_iso3,guest_iso3,distance_km,common_language`. A blank
/// distance is computed from the two capitals.
pub fn read_dyads_csv<R: Read>(reader: R, countries: &CountryTable) -> Result<DyadTable, DesignError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = Columns(rdr.headers()?.clone());
    let (h, g, d, l) = (
        cols.find("home_iso3")?,
        cols.find("guest_iso3")?,
        cols.find("distance_km")?,
        cols.find("common_language")?,
    );
    let mut table = DyadTable::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let home = rec[h].to_ascii_uppercase();
        let guest = rec[g].to_ascii_uppercase();
        let distance_km = if rec[d].trim().is_empty() {
            let (a, b) = (
                countries.get(&home).ok_or_else(|| DesignError::MissingCovariate(format!("capital of {home}")))?,
                countries.get(&guest).ok_or_else(|| DesignError::MissingCovariate(format!("capital of {guest}")))?,
            );
            great_circle_distance(a.capital_lat, a.capital_lon, b.capital_lat, b.capital_lon)
        } else {
            parse_f64(&rec[d]).ok_or_else(|| DesignError::Parse {
                line,
                message: format!("bad distance `{}`", &rec[d]),
            })?
        };
        let common_language = parse_bool(&rec[l]).ok_or_else(|| DesignError::Parse {
            line,
            message: format!("bad common_language `{}`", &rec[l]),
        })?;
        table.insert(Dyad {
            home_iso3: home,
            guest_iso3: guest,
            distance_km,
            common_language,
        })?;
    }
    Ok(table)
}

/// Reads `media_code,home_iso3,language`.
pub fn read_media_csv<R: Read>(reader: R) -> Result<Vec<MediaOutlet>, DesignError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let cols = Columns(rdr.headers()?.clone());
    let (c, h, l) = (cols.find("media_code")?, cols.find("home_iso3")?, cols.find("language")?);
    let mut out: Vec<MediaOutlet> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if out.iter().any(|m| m.media_code == rec[c]) {
            return Err(DesignError::InvalidAttribute(format!("media {} listed twice", &rec[c])));
        }
        out.push(MediaOutlet {
            media_code: rec[c].to_string(),
            home_iso3: rec[h].to_ascii_uppercase(),
            language: rec[l].to_string(),
        });
    }
    Ok(out)
}

pub fn write_countries_csv<W: Write>(table: &CountryTable, writer: W) -> Result<(), DesignError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iso3", "area_km2", "population", "gdp_ppp", "p5", "g14", "vat", "capital_lat", "capital_lon"])?;
    let b = |v: bool| if v { "1" } else { "0" }.to_string();
    for c in table.iter() {
        w.write_record([
            c.iso3.clone(),
            c.area_km2.to_string(),
            c.population.to_string(),
            c.gdp_ppp.to_string(),
            b(c.p5),
            b(c.g14),
            b(c.vat),
            c.capital_lat.to_string(),
            c.capital_lon.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dyads_csv<W: Write>(table: &DyadTable, writer: W) -> Result<(), DesignError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["home_iso3", "guest_iso3", "distance_km", "common_language"])?;
    for d in table.to_dyads() {
        w.write_record([
            d.home_iso3,
            d.guest_iso3,
            d.distance_km.to_string(),
            if d.common_language { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_media_csv<W: Write>(media: &[MediaOutlet], writer: W) -> Result<(), DesignError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["media_code", "home_iso3", "language"])?;
    for m in media {
        w.write_record([&m.media_code, &m.home_iso3, &m.language])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn country(iso3: &str) -> CountryAttributes {
        CountryAttributes {
            iso3: iso3.into(),
            area_km2: 1.0e6,
            population: 1.0e8,
            gdp_ppp: 1.0e12,
            p5: false,
            g14: false,
            vat: false,
            capital_lat: 0.0,
            capital_lon: 0.0,
        }
    }

    #[test]
    fn validation_rules() {
        let mut c = country("FRA");
        assert!(c.validate().is_ok());
        c.area_km2 = 0.0;
        assert!(matches!(c.validate(), Err(DesignError::NonpositiveCovariate { field: "area_km2", .. })));
        let mut c = country("FRA");
        c.p5 = true;
        c.g14 = true;
        assert!(c.validate().is_err());
        let mut c = country("ITA");
        c.vat = true;
        assert!(c.validate().is_err());
        let mut c = country("VAT");
        c.vat = true;
        assert!(c.validate().is_ok());
        c.capital_lat = 95.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn dyads_are_symmetric() {
        let mut t = DyadTable::new();
        t.insert(Dyad {
            home_iso3: "FRA".into(),
            guest_iso3: "GBR".into(),
            distance_km: 344.0,
            common_language: false,
        })
        .unwrap();
        assert_eq!(t.get("GBR", "FRA"), Some((344.0, false)));
        let clash = t.insert(Dyad {
            home_iso3: "GBR".into(),
            guest_iso3: "FRA".into(),
            distance_km: 350.0,
            common_language: false,
        });
        assert!(matches!(clash, Err(DesignError::Asymmetric { .. })));
        let zero = t.insert(Dyad {
            home_iso3: "GBR".into(),
            guest_iso3: "USA".into(),
            distance_km: 0.0,
            common_language: true,
        });
        assert!(zero.is_err());
    }

    #[test]
    fn blank_distance_uses_capitals() {
        let countries = "iso3,area_km2,population,gdp_ppp,p5,g14,vat,capital_lat,capital_lon\n\
            FRA,551695,66000000,2.7e12,1,0,0,48.8566,2.3522\n\
            GBR,243610,65000000,2.7e12,1,0,0,51.5074,-0.1278\n";
        let table = read_countries_csv(countries.as_bytes()).unwrap();
        assert!(table.get("FRA").unwrap().p5);
        let dyads = "home_iso3,guest_iso3,distance_km,common_language\nFRA,GBR,,0\n";
        let d = read_dyads_csv(dyads.as_bytes(), &table).unwrap();
        let (km, lang) = d.get("FRA", "GBR").unwrap();
        assert!((km - 343.556).abs() < 0.01);
        assert!(!lang);
    }

    #[test]
    fn csv_round_trips() {
        let table = CountryTable::new(vec![country("AAA"), country("BBB")]).unwrap();
        let mut buf = Vec::new();
        write_countries_csv(&table, &mut buf).unwrap();
        assert_eq!(read_countries_csv(buf.as_slice()).unwrap(), table);

        let media = vec![MediaOutlet {
            media_code: "en_AAA_x".into(),
            home_iso3: "AAA".into(),
            language: "en".into(),
        }];
        let mut buf = Vec::new();
        write_media_csv(&media, &mut buf).unwrap();
        assert_eq!(read_media_csv(buf.as_slice()).unwrap(), media);
    }
}
