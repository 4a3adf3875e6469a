//! Forward-mode differentiation scalar and the abstraction that lets the
//! whole projection/fit/conversion pipeline run on either plain floats or
//! derivative-carrying values.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::linalg;

/// Value plus `N` derivative lanes, one per independent variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// Seeds derivative lane `lane` with 1.
    pub fn variable(v: f64, lane: usize) -> Self {
        let mut d = [0.0; N];
        d[lane] = 1.0;
        Self { v, d }
    }

    /// Univariate chain rule: new value `v`, lanes scaled by `dv`.
    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = dv * self.d[i];
        }
        Self { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] + rhs.d[i];
        }
        Self { v: self.v + rhs.v, d }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] - rhs.d[i];
        }
        Self { v: self.v - rhs.v, d }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Self { v: self.v * rhs.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        // value must round exactly like plain f64 division: the zero-residual
        // shortcut in the loss relies on the value lane mirroring the float
        // pipeline bit for bit
        let v = self.v / rhs.v;
        let inv = 1.0 / rhs.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = -self.d[i];
        }
        Self { v: -self.v, d }
    }
}

/// Scalar interface shared by `f64` and [`Dual`]. Comparisons and branch
/// decisions always go through [`Real::value`]; derivative lanes follow the
/// branch taken by the value.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    /// Four-quadrant arctangent with `self` as y and `x` as x, in radians.
    fn atan2(self, x: Self) -> Self;
    fn abs(self) -> Self;

    fn to_radians(self) -> Self {
        self * Self::cst(std::f64::consts::PI / 180.0)
    }

    fn to_degrees(self) -> Self {
        self * Self::cst(180.0 / std::f64::consts::PI)
    }

    /// Unit eigenvector for the smallest eigenvalue of a symmetric 6x6
    /// matrix. Errors when the two smallest eigenvalues are closer than
    /// 1e-9 of the spectrum scale: the minimizer is not unique there and
    /// neither the vector nor its derivative is stable.
    fn smallest_eigvec_sym6(m: &[[Self; 6]; 6]) -> Result<[Self; 6]>;
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }

    fn smallest_eigvec_sym6(m: &[[f64; 6]; 6]) -> Result<[f64; 6]> {
        let (vals, vecs) = linalg::eigen_sym6(m);
        if !linalg::eigen_gap_ok(&vals) {
            return Err(Error::DegenerateFit(format!(
                "conic solution is not unique (eigenvalue gap {:e} below threshold)",
                vals[1] - vals[0]
            )));
        }
        Ok(vecs[0])
    }
}

impl<const N: usize> Real for Dual<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn atan2(self, x: Self) -> Self {
        let v = self.v.atan2(x.v);
        let den = self.v * self.v + x.v * x.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (x.v * self.d[i] - self.v * x.d[i]) / den;
        }
        Self { v, d }
    }
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }

    fn smallest_eigvec_sym6(m: &[[Self; 6]; 6]) -> Result<[Self; 6]> {
        // Eigendecompose the value part, then push the derivative through
        // with first-order perturbation theory:
        //   dv0 = sum_{j>0} (vj . dM v0) / (l0 - lj) * vj
        // The correction is orthogonal to v0, so unit norm is preserved.
        let mut mv = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                mv[i][j] = m[i][j].v;
            }
        }
        let (vals, vecs) = linalg::eigen_sym6(&mv);
        if !linalg::eigen_gap_ok(&vals) {
            return Err(Error::DegenerateGradient(format!(
                "eigenvalue gap {:e} too small for a stable eigenvector derivative",
                vals[1] - vals[0]
            )));
        }
        let v0 = vecs[0];
        let mut out = [Dual::constant(0.0); 6];
        for i in 0..6 {
            out[i].v = v0[i];
        }
        for lane in 0..N {
            let mut dm_v0 = [0.0; 6];
            for r in 0..6 {
                let mut acc = 0.0;
                for c in 0..6 {
                    acc += m[r][c].d[lane] * v0[c];
                }
                dm_v0[r] = acc;
            }
            for j in 1..6 {
                let vj = vecs[j];
                let num: f64 = (0..6).map(|r| vj[r] * dm_v0[r]).sum();
                let coef = num / (vals[0] - vals[j]);
                for i in 0..6 {
                    out[i].d[lane] += coef * vj[i];
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn probe<R: Real>(x: R, y: R) -> R {
        // mixes every primitive the pipeline uses
        let s = (x * x + y * y + R::cst(1.0)).sqrt();
        let t = x.sin() * y.cos() + (x / y).abs();
        y.atan2(x) + s * t - x / (y + R::cst(3.0))
    }

    #[test]
    fn dual_matches_finite_differences() {
        let cases = [(0.7, 1.3), (-2.1, 0.9), (3.3, -1.7), (0.01, 2.0)];
        for (x, y) in cases {
            let g = probe(Dual::<2>::variable(x, 0), Dual::<2>::variable(y, 1));
            let e = 1e-6;
            let fdx = (probe(x + e, y) - probe(x - e, y)) / (2.0 * e);
            let fdy = (probe(x, y + e) - probe(x, y - e)) / (2.0 * e);
            assert_relative_eq!(g.v, probe(x, y), max_relative = 1e-15);
            assert_relative_eq!(g.d[0], fdx, max_relative = 1e-7);
            assert_relative_eq!(g.d[1], fdy, max_relative = 1e-7);
        }
    }

    #[test]
    fn atan2_covers_all_quadrants() {
        for (y, x) in [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)] {
            let d = Dual::<1>::variable(y, 0).atan2(Dual::constant(x));
            assert_eq!(d.v, f64::atan2(y, x));
            assert_relative_eq!(d.d[0], x / (x * x + y * y), max_relative = 1e-15);
        }
    }

    #[test]
    fn abs_flips_lanes_on_negative_values() {
        let d = Dual::<1>::variable(-2.0, 0).abs();
        assert_eq!(d.v, 2.0);
        assert_eq!(d.d[0], -1.0);
    }

    #[test]
    fn eigvec_derivative_matches_finite_differences() {
        // M(t) = A + t B, symmetric; compare the dual eigenvector against
        // central differences with sign alignment.
        let a = sym_from_seed(7);
        let b = sym_from_seed(19);
        let at = |t: f64| {
            let mut m = [[0.0; 6]; 6];
            for i in 0..6 {
                for j in 0..6 {
                    m[i][j] = a[i][j] + t * b[i][j];
                }
            }
            m
        };
        let mut md = [[Dual::<1>::constant(0.0); 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                md[i][j] = Dual {
                    v: a[i][j],
                    d: [b[i][j]],
                };
            }
        }
        let dv = Dual::<1>::smallest_eigvec_sym6(&md).unwrap();
        let e = 1e-6;
        let vp = f64::smallest_eigvec_sym6(&at(e)).unwrap();
        let vm = f64::smallest_eigvec_sym6(&at(-e)).unwrap();
        let v0: [f64; 6] = std::array::from_fn(|i| dv[i].v);
        let align = |v: [f64; 6]| {
            let dot: f64 = (0..6).map(|i| v[i] * v0[i]).sum();
            if dot < 0.0 {
                std::array::from_fn(|i| -v[i])
            } else {
                v
            }
        };
        let (vp, vm) = (align(vp), align(vm));
        for i in 0..6 {
            let fd = (vp[i] - vm[i]) / (2.0 * e);
            assert_relative_eq!(dv[i].d[0], fd, epsilon = 1e-7, max_relative = 1e-5);
        }
    }

    fn sym_from_seed(seed: u64) -> [[f64; 6]; 6] {
        // cheap deterministic entries; symmetry plus a diagonal boost keeps
        // the spectrum well separated
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut m = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..=i {
                let v = next();
                m[i][j] = v;
                m[j][i] = v;
            }
            m[i][i] += 2.0 * (i as f64 + 1.0);
        }
        m
    }
}
