//! Minimal row-major matrix and labeled-batch containers.
//!
//! The models in this crate are small enough that a flat `Vec<f64>` with
//! explicit shape checks beats pulling in a linear-algebra dependency.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("data length {len} does not match {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
    #[error("batch has {inputs} input rows but {targets} target rows")]
    RowCountMismatch { inputs: usize, targets: usize },
    #[error("target entry at row {row}, column {col} is {value}, expected 0 or 1")]
    NonBinaryTarget { row: usize, col: usize, value: f64 },
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::ShapeMismatch { rows, cols, len: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(MatrixError::ShapeMismatch { rows: rows.len(), cols, len: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    /// New matrix containing the given rows of `self`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: indices.len(), cols: self.cols, data }
    }

    /// Per-column arithmetic mean. Empty matrices yield an empty vector.
    pub fn column_means(&self) -> Vec<f64> {
        if self.rows == 0 {
            return vec![0.0; self.cols];
        }
        let mut means = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= self.rows as f64;
        }
        means
    }
}

/// A batch of examples: `inputs` is `[batch x input_dim]`, `targets` is a
/// binary `[batch x num_classes]` matrix (multi-label, entries 0 or 1).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Matrix,
    pub targets: Matrix,
}

impl LabeledBatch {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self, MatrixError> {
        if inputs.rows() != targets.rows() {
            return Err(MatrixError::RowCountMismatch {
                inputs: inputs.rows(),
                targets: targets.rows(),
            });
        }
        for i in 0..targets.rows() {
            for j in 0..targets.cols() {
                let value = targets.get(i, j);
                if value != 0.0 && value != 1.0 {
                    return Err(MatrixError::NonBinaryTarget { row: i, col: j, value });
                }
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.targets.cols()
    }

    /// Sub-batch holding the given example rows in the given order.
    pub fn select(&self, indices: &[usize]) -> LabeledBatch {
        LabeledBatch {
            inputs: self.inputs.select_rows(indices),
            targets: self.targets.select_rows(indices),
        }
    }

    /// Concatenate batches row-wise. All batches must agree on both widths.
    pub fn concat(batches: &[&LabeledBatch]) -> Result<LabeledBatch, MatrixError> {
        let input_dim = batches.first().map_or(0, |b| b.input_dim());
        let num_classes = batches.first().map_or(0, |b| b.num_classes());
        let total: usize = batches.iter().map(|b| b.len()).sum();
        let mut inputs = Vec::with_capacity(total * input_dim);
        let mut targets = Vec::with_capacity(total * num_classes);
        for b in batches {
            if b.input_dim() != input_dim {
                return Err(MatrixError::ShapeMismatch {
                    rows: total,
                    cols: input_dim,
                    len: b.input_dim(),
                });
            }
            if b.num_classes() != num_classes {
                return Err(MatrixError::ShapeMismatch {
                    rows: total,
                    cols: num_classes,
                    len: b.num_classes(),
                });
            }
            inputs.extend_from_slice(b.inputs.values());
            targets.extend_from_slice(b.targets.values());
        }
        Ok(LabeledBatch {
            inputs: Matrix::new(total, input_dim, inputs).expect("sized above"),
            targets: Matrix::new(total, num_classes, targets).expect("sized above"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checked_construction() {
        assert!(Matrix::new(2, 3, vec![0.0; 6]).is_ok());
        assert_eq!(
            Matrix::new(2, 3, vec![0.0; 5]).unwrap_err(),
            MatrixError::ShapeMismatch { rows: 2, cols: 3, len: 5 }
        );
    }

    #[test]
    fn row_access_is_row_major() {
        let m = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.row(0), &[1.0, 2.0]);
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.get(1, 0), 3.0);
    }

    #[test]
    fn batch_rejects_non_binary_targets() {
        let inputs = Matrix::zeros(1, 2);
        let targets = Matrix::new(1, 2, vec![0.0, 0.5]).unwrap();
        let err = LabeledBatch::new(inputs, targets).unwrap_err();
        assert_eq!(err, MatrixError::NonBinaryTarget { row: 0, col: 1, value: 0.5 });
    }

    #[test]
    fn batch_rejects_row_count_mismatch() {
        let err = LabeledBatch::new(Matrix::zeros(2, 2), Matrix::zeros(1, 2)).unwrap_err();
        assert_eq!(err, MatrixError::RowCountMismatch { inputs: 2, targets: 1 });
    }

    #[test]
    fn select_and_concat_round_trip() {
        let batch = LabeledBatch::new(
            Matrix::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap(),
            Matrix::new(3, 1, vec![0.0, 1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let head = batch.select(&[0]);
        let tail = batch.select(&[1, 2]);
        let joined = LabeledBatch::concat(&[&head, &tail]).unwrap();
        assert_eq!(joined, batch);
    }

    #[test]
    fn column_means_average_rows() {
        let m = Matrix::new(2, 2, vec![0.2, 0.8, 0.4, 0.0]).unwrap();
        let means = m.column_means();
        assert!((means[0] - 0.3).abs() < 1e-15);
        assert!((means[1] - 0.4).abs() < 1e-15);
    }
}
