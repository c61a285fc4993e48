use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self { rows: 1, cols: n, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self::row_vector(vec![v])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single entry of a 1x1 matrix.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        matmul_into(self, rhs, &mut out);
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign_scaled(&mut self, other: &Matrix, scale: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `out = a * b`, overwriting `out`. i-k-j loop order keeps the inner loop contiguous.
pub(crate) fn matmul_into(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    let (n, k, m) = (a.rows, a.cols, b.cols);
    out.data.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        let out_row = &mut out.data[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[p * m..(p + 1) * m];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a^T * b`.
pub(crate) fn matmul_tn_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    let (k, n, m) = (a.rows, a.cols, b.cols);
    for p in 0..k {
        let b_row = &b.data[p * m..(p + 1) * m];
        for i in 0..n {
            let av = a.data[p * n + i];
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * m..(i + 1) * m];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a * b^T`.
pub(crate) fn matmul_nt_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    let (n, k, m) = (a.rows, a.cols, b.rows);
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        for j in 0..m {
            let b_row = &b.data[j * k..(j + 1) * k];
            let dot: f64 = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            out.data[i * m + j] += dot;
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// `D^-1/2 (A + I) D^-1/2` with `D` the degree matrix of `A + I`. Existing
/// self-loops are kept as-is rather than doubled.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::Shape(format!("adjacency must be square, got {}x{}", a.rows(), a.cols())));
    }
    if !a.is_symmetric(0.0) {
        return Err(Error::Shape("adjacency must be symmetric".into()));
    }
    if a.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Shape("adjacency entries must be 0 or 1".into()));
    }
    let mut hat = a.clone();
    for i in 0..n {
        hat[(i, i)] = 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / hat.row(i).iter().sum::<f64>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            hat[(i, j)] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    Ok(hat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0], vec![6.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[17.0, 39.0]);
        assert!(b.matmul(&b).is_err());
    }

    #[test]
    fn transposed_products() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 1.0]]).unwrap();
        let mut tn = Matrix::zeros(3, 2);
        matmul_tn_acc(&a, &b, &mut tn);
        assert_eq!(tn, a.transpose().matmul(&b).unwrap());
        let mut nt = Matrix::zeros(2, 2);
        matmul_nt_acc(&a, &a, &mut nt);
        assert_eq!(nt, a.matmul(&a.transpose()).unwrap());
    }

    #[test]
    fn normalize_examples() {
        let two = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&two).unwrap();
        assert!(n.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));

        let none = Matrix::zeros(3, 3);
        assert_eq!(normalize_adjacency(&none).unwrap(), Matrix::identity(3));
        assert_eq!(normalize_adjacency(&Matrix::identity(3)).unwrap(), Matrix::identity(3));

        let mut k4 = Matrix::filled(4, 4, 1.0);
        for i in 0..4 {
            k4[(i, i)] = 0.0;
        }
        let n = normalize_adjacency(&k4).unwrap();
        assert!(n.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        // Same graph with explicit self-loops.
        assert_eq!(normalize_adjacency(&Matrix::filled(4, 4, 1.0)).unwrap(), n);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(normalize_adjacency(&Matrix::zeros(2, 3)).is_err());
        let asym = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(normalize_adjacency(&asym).is_err());
    }

    /// Largest eigenvalue magnitude by power iteration.
    fn spectral_radius(m: &Matrix) -> f64 {
        let n = m.rows();
        let mut v = Matrix::from_vec(n, 1, (0..n).map(|i| 1.0 + i as f64 * 0.1).collect()).unwrap();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = m.matmul(&v).unwrap();
            let norm = w.data().iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm / v.data().iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.map(|x| x / norm);
        }
        lambda
    }

    #[test]
    fn normalized_spectral_radius_at_most_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for n in 1..=8 {
            for _ in 0..10 {
                let mut a = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..i {
                        if rng.gen_bool(0.5) {
                            a[(i, j)] = 1.0;
                            a[(j, i)] = 1.0;
                        }
                    }
                }
                let norm = normalize_adjacency(&a).unwrap();
                assert!(norm.is_symmetric(1e-15));
                assert!(spectral_radius(&norm) <= 1.0 + 1e-9);
            }
        }
    }
}
