//! Token dumps: a JSON header line
//! `{"shape":[rows,cols],"dtype":"f64le","order":"row-major"}` followed by
//! the raw little-endian values.

use ndarray::Array2;

use crate::error::parse;
use crate::Result;

pub fn write_tokens(m: &Array2<f64>) -> Vec<u8> {
    let (r, c) = m.dim();
    let mut out = format!("{{\"shape\":[{r},{c}],\"dtype\":\"f64le\",\"order\":\"row-major\"}}\n").into_bytes();
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_tokens(bytes: &[u8]) -> Result<Array2<f64>> {
    let (header, payload) = super::split_header(bytes)?;
    if header.get("dtype").and_then(|v| v.as_str()) != Some("f64le")
        || header.get("order").and_then(|v| v.as_str()) != Some("row-major")
    {
        return Err(parse("token dump must be f64le row-major"));
    }
    let dims: Vec<u64> = header
        .get("shape")
        .and_then(|v| v.as_array())
        .map(|a| a.iter().filter_map(|x| x.as_u64()).collect())
        .unwrap_or_default();
    let [r, c] = dims[..] else {
        return Err(parse("token dump shape must have two dimensions"));
    };
    let count = r.checked_mul(c).and_then(|n| n.checked_mul(8)).ok_or_else(|| parse("shape overflow"))?;
    if payload.len() as u64 != count {
        return Err(parse(format!("token payload is {} bytes, expected {count}", payload.len())));
    }
    let values = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((r as usize, c as usize), values).map_err(|e| parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let m = Array2::from_shape_fn((3, 2), |(i, j)| i as f64 - 0.5 * j as f64);
        assert_eq!(read_tokens(&write_tokens(&m)).unwrap(), m);
        assert!(read_tokens(b"{\"shape\":[1,1],\"dtype\":\"f64le\",\"order\":\"row-major\"}\n123").is_err());
        assert!(read_tokens(b"{\"shape\":[1],\"dtype\":\"f64le\",\"order\":\"row-major\"}\n").is_err());
    }
}
