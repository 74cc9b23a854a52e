//! Small dense linear algebra: symmetric 2x2 matrices in closed form and a
//! Cholesky solver for normal equations that names collinear columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as negative rather than roundoff.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl From<[[f64; 2]; 2]> for Sym2 {
    fn from(m: [[f64; 2]; 2]) -> Self {
        Self::new(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1])
    }
}

impl From<Sym2> for [[f64; 2]; 2] {
    fn from(m: Sym2) -> Self {
        [[m.xx, m.xy], [m.xy, m.yy]]
    }
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, b)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn add(&self, o: &Sym2) -> Self {
        Self::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    /// `self * self`, symmetric because `self` is.
    pub fn square(&self) -> Self {
        Self::new(
            self.xx * self.xx + self.xy * self.xy,
            self.xy * (self.xx + self.yy),
            self.xy * self.xy + self.yy * self.yy,
        )
    }

    /// `self * o * self`, symmetric whenever both factors are.
    pub fn sandwich(&self, o: &Sym2) -> Self {
        let (a, b, d) = (self.xx, self.xy, self.yy);
        // self * o
        let p11 = a * o.xx + b * o.xy;
        let p12 = a * o.xy + b * o.yy;
        let p21 = b * o.xx + d * o.xy;
        let p22 = b * o.xy + d * o.yy;
        Self::new(
            p11 * a + p12 * b,
            0.5 * ((p11 * b + p12 * d) + (p21 * a + p22 * b)),
            p21 * b + p22 * d,
        )
    }

    /// Eigenvalues in ascending order together with the rotation angle of
    /// the eigenvector that belongs to the larger one.
    pub fn eigen(&self) -> ([f64; 2], f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let r = (0.5 * (self.xx - self.yy)).hypot(self.xy);
        let theta = 0.5 * (2.0 * self.xy).atan2(self.xx - self.yy);
        ([mean - r, mean + r], theta)
    }

    /// Spectral function `f(self)`, `f` applied to each eigenvalue.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        let ([lo, hi], theta) = self.eigen();
        let (s, c) = theta.sin_cos();
        let (fh, fl) = (f(hi), f(lo));
        Self::new(c * c * fh + s * s * fl, c * s * (fh - fl), s * s * fh + c * c * fl)
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Numerical("singular 2x2 matrix".into()));
        }
        Ok(Self::new(self.yy / det, -self.xy / det, self.xx / det))
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }
}

/// `(sigma + ridge * I)^(-1/2)` by eigendecomposition.
pub fn matrix_inv_sqrt(sigma: &Sym2, ridge: f64) -> Result<Sym2> {
    if !(ridge >= 0.0) || !sigma.is_finite() {
        return Err(Error::Numerical(format!("invalid input to inverse square root (ridge {ridge})")));
    }
    let ([lo, _], _) = sigma.eigen();
    if lo < -PSD_TOLERANCE {
        return Err(Error::NotPsd(lo));
    }
    if lo.max(0.0) + ridge <= 0.0 {
        return Err(Error::Numerical("matrix is singular and no ridge was given".into()));
    }
    Ok(sigma.map_spectrum(|l| 1.0 / (l.max(0.0) + ridge).sqrt()))
}

/// Symmetric square root of a PSD matrix.
pub fn matrix_sqrt(sigma: &Sym2) -> Result<Sym2> {
    let ([lo, _], _) = sigma.eigen();
    if lo < -PSD_TOLERANCE {
        return Err(Error::NotPsd(lo));
    }
    Ok(sigma.map_spectrum(|l| l.max(0.0).sqrt()))
}

/// Unbiased sample covariance of paired values.
pub fn sample_cov2(pairs: &[[f64; 2]]) -> Option<Sym2> {
    let n = pairs.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let (mut m0, mut m1) = (0.0, 0.0);
    for p in pairs {
        m0 += p[0];
        m1 += p[1];
    }
    m0 /= nf;
    m1 /= nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pairs {
        let (d0, d1) = (p[0] - m0, p[1] - m1);
        sxx += d0 * d0;
        sxy += d0 * d1;
        syy += d1 * d1;
    }
    let k = 1.0 / (nf - 1.0);
    Some(Sym2::new(sxx * k, sxy * k, syy * k))
}

/// Solves `gram * beta = rhs` for a symmetric positive definite `gram`
/// stored row-major. Columns whose pivot collapses relative to their
/// diagonal are reported by name.
pub fn solve_spd(gram: &[f64], rhs: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let p = rhs.len();
    debug_assert_eq!(gram.len(), p * p);
    let mut l = vec![0.0; p * p];
    let mut collinear = Vec::new();
    for j in 0..p {
        let mut d = gram[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        let scale = gram[j * p + j].abs().max(f64::MIN_POSITIVE);
        if !(d > 1e-11 * scale) {
            collinear.push(names.get(j).cloned().unwrap_or_else(|| format!("#{j}")));
            continue;
        }
        let djj = d.sqrt();
        l[j * p + j] = djj;
        for i in j + 1..p {
            let mut s = gram[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / djj;
        }
    }
    if !collinear.is_empty() {
        return Err(Error::SingularDesign(collinear));
    }
    let mut z = vec![0.0; p];
    for i in 0..p {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * p + k] * z[k];
        }
        z[i] = s / l[i * p + i];
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[k * p + i] * beta[k];
        }
        beta[i] = s / l[i * p + i];
    }
    Ok(beta)
}
