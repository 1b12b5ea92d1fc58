use crate::error::{Error, Result};

/// Sample of covariate vectors with possibly missing responses.
///
/// A row is observed (`z = 1`) exactly when its response is present.
/// Covariates are stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    covariates: Vec<f64>,
    responses: Vec<Option<f64>>,
}

impl Dataset {
    pub fn new(dim: usize) -> Result<Dataset> {
        if dim == 0 {
            return Err(Error::InvalidData("covariate dimension must be positive".into()));
        }
        Ok(Dataset {
            dim,
            covariates: Vec::new(),
            responses: Vec::new(),
        })
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Result<Dataset> {
        let mut ds = Dataset::new(dim)?;
        ds.covariates.reserve(rows * dim);
        ds.responses.reserve(rows);
        Ok(ds)
    }

    /// Builds a dataset from `(x, y)` rows; `y = None` marks a missing response.
    pub fn from_rows<I, X>(dim: usize, rows: I) -> Result<Dataset>
    where
        I: IntoIterator<Item = (X, Option<f64>)>,
        X: AsRef<[f64]>,
    {
        let mut ds = Dataset::new(dim)?;
        for (x, y) in rows {
            ds.push(x.as_ref(), y)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, x: &[f64], y: Option<f64>) -> Result<()> {
        let row = self.responses.len();
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "dataset row",
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("row {row}: non-finite covariate")));
        }
        if let Some(v) = y {
            if !v.is_finite() {
                return Err(Error::InvalidData(format!("row {row}: non-finite response")));
            }
        }
        self.covariates.extend_from_slice(x);
        self.responses.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn y(&self, i: usize) -> Option<f64> {
        self.responses[i]
    }

    #[inline]
    pub fn observed(&self, i: usize) -> bool {
        self.responses[i].is_some()
    }

    pub fn n_observed(&self) -> usize {
        self.responses.iter().filter(|y| y.is_some()).count()
    }

    /// Fraction of rows with an observed response, the empirical `EZ`.
    pub fn observed_fraction(&self) -> f64 {
        self.n_observed() as f64 / self.len() as f64
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = (&[f64], Option<f64>)> + '_ {
        self.covariates
            .chunks_exact(self.dim)
            .zip(self.responses.iter().copied())
    }

    /// Fails unless at least one response is observed.
    pub fn require_observed(&self) -> Result<usize> {
        match self.n_observed() {
            0 => Err(Error::NoObservedResponses),
            k => Ok(k),
        }
    }

    /// Rows reordered so that row `i` of the result is row `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Dataset> {
        let mut ds = Dataset::with_capacity(self.dim, order.len())?;
        for &i in order {
            ds.push(self.x(i), self.y(i))?;
        }
        Ok(ds)
    }
}

/// Residual `y - r(x)` of one row; zero for rows with a missing response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub eps: f64,
    pub z: bool,
}

impl Residual {
    pub fn observed(eps: f64) -> Self {
        Residual { eps, z: true }
    }

    pub fn missing() -> Self {
        Residual { eps: 0.0, z: false }
    }

    /// `z * eps`
    #[inline]
    pub fn z_eps(&self) -> f64 {
        if self.z {
            self.eps
        } else {
            0.0
        }
    }
}
