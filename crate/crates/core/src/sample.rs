use crate::error::{Error, Result};

/// An `n x d` table of points, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    /// Builds a sample set from row-major data. `data.len()` must be a multiple
    /// of `dim`.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch("sample dimension must be >= 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(1);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "ragged rows: expected width {dim}, found {}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    /// One-dimensional sample set.
    pub fn from_column(values: Vec<f64>) -> Self {
        Self { dim: 1, data: values }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Keeps only the listed columns, in the given order.
    pub fn project(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() || cols.iter().any(|&c| c >= self.dim) {
            return Err(Error::DimensionMismatch(format!(
                "cannot project {}-dimensional samples onto columns {cols:?}",
                self.dim
            )));
        }
        let mut data = Vec::with_capacity(self.len() * cols.len());
        for r in self.rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Self::new(cols.len(), data)
    }

    /// Rows at the given indices, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    /// First offending coordinate outside the unit cube, if any.
    pub fn check_unit_cube(&self) -> Result<()> {
        for (i, r) in self.rows().enumerate() {
            for (c, &v) in r.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfDomain {
                        point: i,
                        column: c,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_and_select() {
        let s = SampleSet::from_rows(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]).unwrap();
        let p = s.project(&[2, 0]).unwrap();
        assert_eq!(p.row(1), &[0.6, 0.4]);
        assert_eq!(s.select(&[1, 1]).len(), 2);
        assert!(s.project(&[3]).is_err());
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows: Vec<Vec<f64>> = vec![vec![0.1, 0.2], vec![0.3]];
        assert!(SampleSet::from_rows(&rows).is_err());
    }

    #[test]
    fn unit_cube_check() {
        let s = SampleSet::from_column(vec![0.0, 1.0, 1.5]);
        assert!(matches!(s.check_unit_cube(), Err(Error::OutOfDomain { point: 2, .. })));
    }
}
