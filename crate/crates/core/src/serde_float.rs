//! Serde helpers mapping non-finite floats to JSON `null` and back to NaN.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize_vec<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let opt: Vec<Option<f64>> = values
        .iter()
        .map(|v| if v.is_finite() { Some(*v) } else { None })
        .collect();
    opt.serialize(s)
}

pub fn deserialize_vec<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let opt: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(opt.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
}

pub mod vec {
    pub use super::deserialize_vec as deserialize;
    pub use super::serialize_vec as serialize;
}
