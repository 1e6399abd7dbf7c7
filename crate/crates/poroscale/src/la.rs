//! Small fixed-size linear algebra: 2-vectors, 2x2 matrices, and a few dense
//! helpers used by solvers and verification sweeps.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Point / vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit basis vector e_i (i = 0, 1).
    pub fn basis(i: usize) -> Vec2 {
        match i {
            0 => Vec2::new(1.0, 0.0),
            1 => Vec2::new(0.0, 1.0),
            _ => panic!("basis index out of range: {i}"),
        }
    }

    pub fn comp(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => panic!("component index out of range: {i}"),
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

/// Row-major 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        m: [[1.0, 0.0], [0.0, 1.0]],
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub fn zero() -> Self {
        Mat2::new(0.0, 0.0, 0.0, 0.0)
    }

    /// Rank-one matrix v w^T.
    pub fn outer(v: Vec2, w: Vec2) -> Self {
        Mat2::new(v.x * w.x, v.x * w.y, v.y * w.x, v.y * w.y)
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.m[0][0], self.m[1][0], self.m[0][1], self.m[1][1])
    }

    pub fn inverse(&self) -> Mat2 {
        let d = self.det();
        Mat2::new(
            self.m[1][1] / d,
            -self.m[0][1] / d,
            -self.m[1][0] / d,
            self.m[0][0] / d,
        )
    }

    /// Adjugate: det(M) * M^{-1}, polynomial in the entries.
    pub fn adjugate(&self) -> Mat2 {
        Mat2::new(self.m[1][1], -self.m[0][1], -self.m[1][0], self.m[0][0])
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y,
            self.m[1][0] * v.x + self.m[1][1] * v.y,
        )
    }

    pub fn mul_mat(&self, o: &Mat2) -> Mat2 {
        let mut r = Mat2::zero();
        for i in 0..2 {
            for j in 0..2 {
                r.m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        r
    }

    /// Frobenius inner product A : B.
    pub fn frob_dot(&self, o: &Mat2) -> f64 {
        let mut s = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                s += self.m[i][j] * o.m[i][j];
            }
        }
        s
    }

    pub fn frob_norm(&self) -> f64 {
        self.frob_dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(
            self.m[0][0] * s,
            self.m[0][1] * s,
            self.m[1][0] * s,
            self.m[1][1] * s,
        )
    }

    pub fn add_mat(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] + o.m[0][0],
            self.m[0][1] + o.m[0][1],
            self.m[1][0] + o.m[1][0],
            self.m[1][1] + o.m[1][1],
        )
    }

    pub fn sub_mat(&self, o: &Mat2) -> Mat2 {
        self.add_mat(&o.scale(-1.0))
    }

    pub fn sym(&self) -> Mat2 {
        self.add_mat(&self.transpose()).scale(0.5)
    }

    /// Eigenvalues of a symmetric 2x2 matrix, ascending.
    pub fn sym_eigenvalues(&self) -> (f64, f64) {
        let t = self.trace();
        let d = self.det();
        let disc = (t * t / 4.0 - d).max(0.0).sqrt();
        (t / 2.0 - disc, t / 2.0 + disc)
    }

    pub fn is_spd(&self) -> bool {
        self.m[0][0] > 0.0 && self.det() > 0.0
    }

    pub fn quad_form(&self, v: Vec2) -> f64 {
        self.mul_vec(v).dot(v)
    }
}

/// Dense symmetric-positive-definite solve via Cholesky, used for small
/// systems (Schur-complement spectra, test oracles). Returns `None` if a
/// pivot is not positive.
pub fn dense_cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l[j][j] = d;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / d;
        }
    }
    // forward then backward substitution
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i][k] * y[k];
        }
        y[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k][i] * y[k];
        }
        y[i] /= l[i][i];
    }
    Some(y)
}

/// Smallest generalized eigenvalue of `a x = lambda m x` for dense symmetric
/// `a` (positive semidefinite up to the deflated directions) and SPD diagonal
/// weights `m`, via inverse power iteration with deflation of `kernel`.
pub fn smallest_generalized_eigenvalue(
    a: &[Vec<f64>],
    m_diag: &[f64],
    kernel: Option<&[f64]>,
    iters: usize,
) -> Option<f64> {
    let n = m_diag.len();
    // Regularize slightly so the Cholesky succeeds when `a` is singular in
    // the deflated direction.
    let shift = {
        let mut t = 0.0;
        for (i, row) in a.iter().enumerate() {
            t += row[i].abs();
        }
        1e-12 * t / n as f64
    };
    let mut areg = a.to_vec();
    for i in 0..n {
        areg[i][i] += shift;
    }
    let project = |x: &mut Vec<f64>| {
        if let Some(k) = kernel {
            let num: f64 = x.iter().zip(k).zip(m_diag).map(|((xi, ki), mi)| xi * ki * mi).sum();
            let den: f64 = k.iter().zip(m_diag).map(|(ki, mi)| ki * ki * mi).sum();
            let c = num / den;
            for (xi, ki) in x.iter_mut().zip(k) {
                *xi -= c * ki;
            }
        }
    };
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
    project(&mut x);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let rhs: Vec<f64> = x.iter().zip(m_diag).map(|(xi, mi)| xi * mi).collect();
        let mut y = dense_cholesky_solve(&areg, &rhs)?;
        project(&mut y);
        let norm: f64 = y
            .iter()
            .zip(m_diag)
            .map(|(yi, mi)| yi * yi * mi)
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return None;
        }
        for yi in y.iter_mut() {
            *yi /= norm;
        }
        // Rayleigh quotient with the original matrix.
        let ay: Vec<f64> = a
            .iter()
            .map(|row| row.iter().zip(&y).map(|(aij, yj)| aij * yj).sum())
            .collect();
        lambda = y.iter().zip(&ay).map(|(yi, ai)| yi * ai).sum();
        x = y;
    }
    Some(lambda)
}
