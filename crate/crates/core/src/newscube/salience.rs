use std::io::Write;

use serde::Serialize;

use super::{CubeError, Layer, NewsCube};

/// One country's share of attention on a layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SalienceRow {
    pub iso3: String,
    pub count: f64,
    /// Percentage of the layer total.
    pub frequency: f64,
    pub rank: usize,
}

/// Per-country totals over media and weeks, ranked by descending count with
/// ties broken by ISO3 code.
pub fn salience_table(cube: &NewsCube, layer: Layer) -> Result<Vec<SalienceRow>, CubeError> {
    let cells = cube.layer(layer)?;
    let p = cube.n_countries();
    let mut totals = vec![0.0; p];
    for row in cells.chunks(p.max(1)) {
        for (acc, v) in totals.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let grand: f64 = totals.iter().sum();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        totals[b]
            .total_cmp(&totals[a])
            .then_with(|| cube.countries()[a].cmp(&cube.countries()[b]))
    });
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(r, i)| SalienceRow {
            iso3: cube.countries()[i].clone(),
            count: totals[i],
            frequency: if grand > 0.0 { 100.0 * totals[i] / grand } else { 0.0 },
            rank: r + 1,
        })
        .collect())
}

/// Writes the raw and weighted tables side by side, ordered by weighted rank.
pub fn write_salience_csv<W: Write>(
    raw: &[SalienceRow],
    weighted: &[SalienceRow],
    writer: W,
) -> Result<(), CubeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iso3", "raw_nb", "raw_freq", "raw_rank", "weighted_nb", "weighted_freq", "weighted_rank"])?;
    for row in weighted {
        let r = raw
            .iter()
            .find(|r| r.iso3 == row.iso3)
            .ok_or_else(|| CubeError::UnknownCountry(row.iso3.clone()))?;
        w.write_record([
            row.iso3.clone(),
            r.count.to_string(),
            r.frequency.to_string(),
            r.rank.to_string(),
            row.count.to_string(),
            row.frequency.to_string(),
            row.rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
