//! Dense row-major f64 tensors.
//!
//! Everything downstream (gates, losses, gradients) lives in these. Values
//! are 64-bit throughout; any operation that produces a NaN or infinity is
//! treated as an error state, not a silent value.

use super::NumError;

/// Dense tensor with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape accounts for every element.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumError> {
        let expected: usize = shape.iter().product();
        if shape.contains(&0) || expected != data.len() {
            return Err(NumError::BadShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    /// 1x1 tensor holding one value.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    /// Row vector of shape 1xN.
    pub fn row_vector(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![1, values.len()],
            data: values,
        }
    }

    /// 2-D tensor from nested rows; every row must have the same width.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(NumError::BadShape {
                    shape: vec![r, c],
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Single-element tensors broadcast against any shape.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn as_scalar(&self) -> Result<f64, NumError> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(NumError::NotScalar {
                shape: self.shape.clone(),
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows of a 2-D tensor.
    pub fn nrows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a 2-D tensor.
    pub fn ncols(&self) -> usize {
        self.shape[self.shape.len() - 1]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.ncols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.ncols();
        self.data[r * cols + c] = v;
    }

    fn require_2d(&self, op: &'static str) -> Result<(usize, usize), NumError> {
        if self.shape.len() == 2 {
            Ok((self.shape[0], self.shape[1]))
        } else {
            Err(NumError::NotMatrix {
                op,
                shape: self.shape.clone(),
            })
        }
    }

    /// Standard matrix product. Inner dimensions must agree.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, NumError> {
        let (m, k) = self.require_2d("matmul")?;
        let (k2, n) = rhs.require_2d("matmul")?;
        if k != k2 {
            return Err(NumError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let lhs_row = &rhs.data[p * n..(p + 1) * n];
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(lhs_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    pub fn transpose(&self) -> Tensor {
        let (m, n) = match self.shape.as_slice() {
            [m, n] => (*m, *n),
            _ => return self.clone(),
        };
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor {
            shape: vec![n, m],
            data,
        }
    }

    /// Elementwise combine with exact-shape or scalar broadcast.
    pub fn zip_map(
        &self,
        rhs: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NumError> {
        if self.shape == rhs.shape {
            let data = self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            Tensor::new(self.shape.clone(), data)
        } else if rhs.is_scalar() {
            let b = rhs.data[0];
            let data = self.data.iter().map(|&a| f(a, b)).collect();
            Tensor::new(self.shape.clone(), data)
        } else if self.is_scalar() {
            let a = self.data[0];
            let data = rhs.data.iter().map(|&b| f(a, b)).collect();
            Tensor::new(rhs.shape.clone(), data)
        } else {
            Err(NumError::ShapeMismatch {
                op,
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Column slice of a 2-D tensor: keeps all rows, columns [start, start+len).
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor, NumError> {
        let (m, n) = self.require_2d("slice_cols")?;
        if start + len > n || len == 0 {
            return Err(NumError::SliceOutOfRange {
                start,
                len,
                cols: n,
            });
        }
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&self.data[i * n + start..i * n + start + len]);
        }
        Tensor::new(vec![m, len], data)
    }

    /// One row of a 2-D tensor, as a 1xN row vector.
    pub fn row(&self, index: usize) -> Result<Tensor, NumError> {
        let (m, n) = self.require_2d("row")?;
        if index >= m {
            return Err(NumError::RowOutOfRange { index, rows: m });
        }
        Tensor::new(vec![1, n], self.data[index * n..(index + 1) * n].to_vec())
    }
}

/// Numerically stable sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn matmul_hand_oracle() {
        // [[1,2],[3,4]] x [[0],[1]] = [[2],[4]]
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_identity() {
        let i2 = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(i2.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = Tensor::zeros(vec![2, 3]);
        let m = Tensor::from_rows(&[
            vec![1.0, 2.0, 3.0, 4.0],
            vec![5.0, 6.0, 7.0, 8.0],
            vec![9.0, 1.0, 2.0, 3.0],
        ])
        .unwrap();
        let out = z.matmul(&m).unwrap();
        assert_eq!(out, Tensor::zeros(vec![2, 4]));
    }

    #[test]
    fn matmul_reports_both_shapes() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 3]);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "got: {msg}");
    }

    #[test]
    fn scalar_broadcast() {
        let a = Tensor::row_vector(vec![1.0, 2.0, 3.0]);
        let s = Tensor::scalar(10.0);
        let out = a.zip_map(&s, "add", |x, y| x + y).unwrap();
        assert_eq!(out.data(), &[11.0, 12.0, 13.0]);
        let out = s.zip_map(&a, "sub", |x, y| x - y).unwrap();
        assert_eq!(out.data(), &[9.0, 8.0, 7.0]);
    }

    #[test]
    fn incompatible_shapes_rejected() {
        let a = Tensor::row_vector(vec![1.0, 2.0]);
        let b = Tensor::row_vector(vec![1.0, 2.0, 3.0]);
        assert!(a.zip_map(&b, "add", |x, y| x + y).is_err());
    }

    #[test]
    fn slice_and_row() {
        let m = Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]]).unwrap();
        let s = m.slice_cols(1, 2).unwrap();
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[2.0, 3.0, 6.0, 7.0]);
        let r = m.row(1).unwrap();
        assert_eq!(r.data(), &[5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn stable_sigmoid_endpoints() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) - 0.8807970779778823).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}
