use crate::error::{Error, Result};

/// A batch of column vectors stored feature-major: `data[d * batch + b]` is
/// feature `d` of sample `b`.
///
/// This layout lets the dense kernels vectorize across the batch while every
/// individual output is still accumulated in a fixed, input-index order, so a
/// sample's result does not depend on which batch it was evaluated in.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMatrix {
    dim: usize,
    batch: usize,
    data: Vec<f64>,
}

impl BatchMatrix {
    pub fn zeros(dim: usize, batch: usize) -> Self {
        Self {
            dim,
            batch,
            data: vec![0.0; dim * batch],
        }
    }

    pub fn from_raw(dim: usize, batch: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * batch {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {dim}x{batch} batch",
                data.len()
            )));
        }
        Ok(Self { dim, batch, data })
    }

    /// Single sample as a batch of one.
    pub fn from_column(x: &[f64]) -> Self {
        Self {
            dim: x.len(),
            batch: 1,
            data: x.to_vec(),
        }
    }

    /// Packs samples (each of length `dim`) into a batch.
    pub fn from_samples<'a, I>(dim: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let samples: Vec<&[f64]> = samples.into_iter().collect();
        let batch = samples.len();
        let mut data = vec![0.0; dim * batch];
        for (b, s) in samples.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {b} has dimension {}, expected {dim}",
                    s.len()
                )));
            }
            for (d, v) in s.iter().enumerate() {
                data[d * batch + b] = *v;
            }
        }
        Ok(Self { dim, batch, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, d: usize, b: usize) -> f64 {
        self.data[d * self.batch + b]
    }

    pub fn set(&mut self, d: usize, b: usize, v: f64) {
        self.data[d * self.batch + b] = v;
    }

    /// All samples' values of feature `d`.
    pub fn row(&self, d: usize) -> &[f64] {
        &self.data[d * self.batch..(d + 1) * self.batch]
    }

    pub fn row_mut(&mut self, d: usize) -> &mut [f64] {
        &mut self.data[d * self.batch..(d + 1) * self.batch]
    }

    pub fn column(&self, b: usize) -> Vec<f64> {
        (0..self.dim).map(|d| self.get(d, b)).collect()
    }
}

/// Dot product with eight fixed partial sums combined in a fixed tree.
/// The summation order depends only on the length, never on the platform.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_and_unpack() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, 5.0, 6.0];
        let m = BatchMatrix::from_samples(3, [&a[..], &b[..]]).unwrap();
        assert_eq!(m.row(1), &[2.0, 5.0]);
        assert_eq!(m.column(1), b.to_vec());
        assert!(BatchMatrix::from_samples(2, [&a[..]]).is_err());
    }

    #[test]
    fn dot_matches_naive_on_integers() {
        let a: Vec<f64> = (0..21).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..21).map(|i| (i % 5) as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dot(&a, &b), naive);
        assert_eq!(dot(&[], &[]), 0.0);
    }
}
