//! Minimal dense linear algebra, activations, initializers, and seeded
//! randomness. Everything is `f64`; vectors are rows, matrices row-major.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

/// Dense row vector of `f64`. Never empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec1 {
    data: Vec<f64>,
}

impl Vec1 {
    pub fn from_vec(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "Vec1 must be non-empty");
        Self { data }
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Self::from_vec(data.to_vec())
    }

    pub fn zeros(len: usize) -> Self {
        Self::from_vec(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self::from_vec(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// Elementwise product (the ⊙ operation).
    pub fn hadamard(&self, other: &Vec1) -> Vec1 {
        assert_eq!(
            self.len(),
            other.len(),
            "hadamard: length mismatch ({} vs {})",
            self.len(),
            other.len()
        );
        Vec1::from_vec(self.iter().zip(other.iter()).map(|(a, b)| a * b).collect())
    }

    pub fn add(&self, other: &Vec1) -> Vec1 {
        assert_eq!(
            self.len(),
            other.len(),
            "add: length mismatch ({} vs {})",
            self.len(),
            other.len()
        );
        Vec1::from_vec(self.iter().zip(other.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vec1) -> Vec1 {
        assert_eq!(
            self.len(),
            other.len(),
            "sub: length mismatch ({} vs {})",
            self.len(),
            other.len()
        );
        Vec1::from_vec(self.iter().zip(other.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, k: f64) -> Vec1 {
        Vec1::from_vec(self.iter().map(|a| a * k).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vec1 {
        Vec1::from_vec(self.iter().map(|&a| f(a)).collect())
    }

    pub fn dot(&self, other: &Vec1) -> f64 {
        assert_eq!(
            self.len(),
            other.len(),
            "dot: length mismatch ({} vs {})",
            self.len(),
            other.len()
        );
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.iter().map(|a| a * a).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|a| a.is_finite())
    }

    /// Concatenates parts in order into one vector.
    pub fn concat(parts: &[&Vec1]) -> Vec1 {
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for part in parts {
            data.extend_from_slice(part.as_slice());
        }
        Vec1::from_vec(data)
    }
}

impl std::ops::Index<usize> for Vec1 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vec1 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "Mat2 dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "Mat2 must have at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "Mat2 rows must have equal length");
            data.extend_from_slice(row);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    /// Standard matrix-vector product; `v.len()` must equal `self.cols`.
    pub fn matvec(&self, v: &Vec1) -> Vec1 {
        assert_eq!(
            v.len(),
            self.cols,
            "matvec: shape mismatch ({}x{} vs vector of length {})",
            self.rows,
            self.cols,
            v.len()
        );
        let mut out = vec![0.0; self.rows];
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *slot = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        Vec1::from_vec(out)
    }

    /// Transposed product `selfᵀ · v`; `v.len()` must equal `self.rows`.
    pub fn matvec_t(&self, v: &Vec1) -> Vec1 {
        assert_eq!(
            v.len(),
            self.rows,
            "matvec_t: shape mismatch ({}x{} transposed vs vector of length {})",
            self.rows,
            self.cols,
            v.len()
        );
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let vr = v[r];
            for (slot, a) in out.iter_mut().zip(row.iter()) {
                *slot += a * vr;
            }
        }
        Vec1::from_vec(out)
    }

    /// Outer product `u · vᵀ`, shape `u.len() × v.len()`.
    pub fn outer(u: &Vec1, v: &Vec1) -> Mat2 {
        let mut m = Mat2::zeros(u.len(), v.len());
        for r in 0..u.len() {
            for c in 0..v.len() {
                m.data[r * v.len() + c] = u[r] * v[c];
            }
        }
        m
    }

    /// Accumulates `u · vᵀ` into `self`.
    pub fn add_outer(&mut self, u: &Vec1, v: &Vec1) {
        assert_eq!(
            (u.len(), v.len()),
            (self.rows, self.cols),
            "add_outer: shape mismatch ({}x{} vs {}x{})",
            u.len(),
            v.len(),
            self.rows,
            self.cols
        );
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.data[r * self.cols + c] += u[r] * v[c];
            }
        }
    }

    pub fn add_assign(&mut self, other: &Mat2) {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "add_assign: shape mismatch ({}x{} vs {}x{})",
            self.rows,
            self.cols,
            other.rows,
            other.cols
        );
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise logistic sigmoid, output strictly in (0, 1).
pub fn sigmoid(v: &Vec1) -> Vec1 {
    v.map(sigmoid_scalar)
}

/// Elementwise hyperbolic tangent, output in (−1, 1).
pub fn tanh(v: &Vec1) -> Vec1 {
    v.map(f64::tanh)
}

/// Deterministic seeded random generator. Identical seeds yield identical
/// draw sequences across runs and platforms.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        Uniform::new(lo, hi)
            .expect("uniform: invalid range")
            .sample(&mut self.inner)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        Normal::new(mean, std)
            .expect("normal: invalid parameters")
            .sample(&mut self.inner)
    }

    pub fn range_i64(&mut self, lo: i64, hi: i64) -> i64 {
        use rand::Rng as _;
        self.inner.random_range(lo..hi)
    }
}

/// Glorot-uniform initialization: entries uniform in ±√(6/(rows+cols)).
pub fn glorot_init(rows: usize, cols: usize, rng: &mut Rng) -> Mat2 {
    assert!(
        rows > 0 && cols > 0,
        "glorot_init: dimensions must be positive"
    );
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Mat2::zeros(rows, cols);
    for slot in m.as_mut_slice() {
        *slot = rng.uniform(-bound, bound);
    }
    m
}
