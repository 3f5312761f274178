//! JSON and binary encodings of matrices, states, circuits and Choi matrices.
//!
//! JSON matrices are `{"rows": r, "cols": c, "data": [[re, im], ...]}` with
//! entries row-major. The binary form is a little-endian header
//! `rows: u64, cols: u64` followed by `re, im` float64 pairs, row-major.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, C64};

#[derive(Serialize, Deserialize)]
struct MatDoc {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl From<&Mat> for MatDoc {
    fn from(m: &Mat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                data.push([z.re, z.im]);
            }
        }
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl MatDoc {
    fn into_mat(self) -> std::result::Result<Mat, String> {
        if self.data.len() != self.rows * self.cols {
            return Err(format!("matrix has {} entries, header says {}x{}", self.data.len(), self.rows, self.cols));
        }
        Ok(Mat::from_fn(self.rows, self.cols, |r, c| {
            let [re, im] = self.data[r * self.cols + c];
            C64::new(re, im)
        }))
    }
}

pub mod mat_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatDoc::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        MatDoc::deserialize(d)?.into_mat().map_err(serde::de::Error::custom)
    }
}

pub mod mats_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter().map(MatDoc::from).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Mat>, D::Error> {
        Vec::<MatDoc>::deserialize(d)?
            .into_iter()
            .map(|m| m.into_mat().map_err(serde::de::Error::custom))
            .collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

pub fn write_matrix_binary<W: Write>(mut w: W, m: &Mat) -> Result<()> {
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut r: R) -> Result<Mat> {
    let mut u = [0u8; 8];
    r.read_exact(&mut u)?;
    let rows = u64::from_le_bytes(u) as usize;
    r.read_exact(&mut u)?;
    let cols = u64::from_le_bytes(u) as usize;
    if rows.saturating_mul(cols) > 1 << 28 {
        return Err(Error::Format(format!("binary matrix header {rows}x{cols} is implausibly large")));
    }
    let mut m = Mat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            r.read_exact(&mut u)?;
            let re = f64::from_le_bytes(u);
            r.read_exact(&mut u)?;
            let im = f64::from_le_bytes(u);
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let m = Mat::from_fn(3, 2, |r, c| C64::new(r as f64, -(c as f64) * 0.5));
        let mut buf = Vec::new();
        write_matrix_binary(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 16 + 6 * 16);
        assert_eq!(read_matrix_binary(&buf[..]).unwrap(), m);
    }

    #[test]
    fn json_round_trip() {
        let s = crate::state::DensityMatrix::zero_state(&crate::lattice::region([1, 3]));
        let text = serde_json::to_string(&s).unwrap();
        let back: crate::state::DensityMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
