//! Datasets, procedural generators and CSV loading.

mod csv;
mod synthetic;

pub use csv::{load_csv, read_numeric_csv, write_csv, CsvSpec, SplitDataset, Task};
pub use synthetic::{gen_banana, gen_sinusoid, BananaSpec, SinusoidSpec};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::Matrix;
use crate::{Error, Result};

/// Regression targets (`N x C`) or class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Real(Matrix),
    Class(Vec<usize>),
}

/// One example's target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetRef<'a> {
    Real(&'a [f64]),
    Class(usize),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Real(m) => m.rows(),
            Targets::Class(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, n: usize) -> TargetRef<'_> {
        match self {
            Targets::Real(m) => TargetRef::Real(m.row(n)),
            Targets::Class(v) => TargetRef::Class(v[n]),
        }
    }

    pub fn as_real(&self) -> Option<&Matrix> {
        match self {
            Targets::Real(m) => Some(m),
            Targets::Class(_) => None,
        }
    }

    pub fn as_class(&self) -> Option<&[usize]> {
        match self {
            Targets::Real(_) => None,
            Targets::Class(v) => Some(v),
        }
    }

    /// Output width a network needs for these targets.
    pub fn output_dim(&self) -> usize {
        match self {
            Targets::Real(m) => m.cols(),
            Targets::Class(v) => v.iter().max().map_or(0, |m| m + 1),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Real(m) => {
                let mut out = Matrix::zeros(idx.len(), m.cols());
                for (k, &n) in idx.iter().enumerate() {
                    out.row_mut(k).copy_from_slice(m.row(n));
                }
                Targets::Real(out)
            }
            Targets::Class(v) => Targets::Class(idx.iter().map(|&n| v[n]).collect()),
        }
    }
}

/// Inputs `x` (`N x D`) and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Targets,
}

impl Dataset {
    pub fn new(x: Matrix, y: Targets) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} targets",
                x.rows(),
                y.len()
            )));
        }
        if let Some(i) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "input",
                index: i,
            });
        }
        if let Targets::Real(m) = &y {
            if let Some(i) = m.as_slice().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "target",
                    index: i,
                });
            }
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Matrix::zeros(idx.len(), self.x.cols());
        for (k, &n) in idx.iter().enumerate() {
            x.row_mut(k).copy_from_slice(self.x.row(n));
        }
        Dataset {
            x,
            y: self.y.subset(idx),
        }
    }

    /// SHA-256 over the raw bit patterns of every input and target value.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.x.rows() as u64).to_le_bytes());
        h.update((self.x.cols() as u64).to_le_bytes());
        for v in self.x.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
        match &self.y {
            Targets::Real(m) => {
                h.update([0u8]);
                for v in m.as_slice() {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
            Targets::Class(v) => {
                h.update([1u8]);
                for c in v {
                    h.update((*c as u64).to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]),
            Targets::Class(vec![0, 2, 1]),
        )
        .unwrap()
    }

    #[test]
    fn subset_picks_rows() {
        let d = toy().subset(&[2, 0]);
        assert_eq!(d.x.row(0), &[5.0, 6.0]);
        assert_eq!(d.y, Targets::Class(vec![1, 0]));
        assert_eq!(toy().y.output_dim(), 3);
    }

    #[test]
    fn fingerprint_is_sensitive_to_every_value() {
        let base = toy();
        let fp = base.fingerprint();
        assert_eq!(fp.len(), 64);
        assert_eq!(fp, toy().fingerprint());
        for i in 0..6 {
            let mut d = toy();
            d.x.as_mut_slice()[i] += 1e-12;
            assert_ne!(d.fingerprint(), fp);
        }
        let mut d = toy();
        d.y = Targets::Class(vec![0, 2, 0]);
        assert_ne!(d.fingerprint(), fp);
    }

    #[test]
    fn rejects_mismatched_rows() {
        let r = Dataset::new(Matrix::zeros(2, 1), Targets::Class(vec![0]));
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
