//! Schwarzschild background in double-null coordinates.
//!
//! Radii are carried together with their offset above the horizon, `r - 2m`.
//! Deep in the tortoise tail the offset drops below the spacing of `f64`
//! around `2m`, so `r` alone cannot round-trip; every quantity that vanishes at
//! the horizon (η, the tortoise logarithm) is computed from the offset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NEWTON_MAX_ITER: usize = 100;
const BISECT_MAX_ITER: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    m: f64,
    r_floor: f64,
    flat: bool,
}

/// An area radius together with its distance above the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius {
    pub r: f64,
    pub offset: f64,
}

/// Pointwise metric data: μ = 2m/r, η = 1 − μ and the null block of
/// the metric and its inverse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub mu: f64,
    pub eta: f64,
    pub g_uub: f64,
    pub ginv_uub: f64,
}

/// A point of the quotient spacetime, labelled by its null coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullPoint {
    pub u: f64,
    pub ub: f64,
    pub r: f64,
    /// r − 2m, accurate even when r rounds to 2m.
    pub offset: f64,
    pub rstar: f64,
    pub mu: f64,
    pub eta: f64,
}

impl NullPoint {
    pub fn t(&self) -> f64 {
        self.u + self.ub
    }

    pub fn ginv_uub(&self) -> f64 {
        -0.5 / self.eta
    }
}

impl Default for Background {
    fn default() -> Self {
        Background {
            m: 1.0,
            r_floor: 1e-15,
            flat: false,
        }
    }
}

impl Background {
    pub fn schwarzschild(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Domain(format!(
                "physical runs need a positive finite mass, got m = {m}"
            )));
        }
        Ok(Background {
            m,
            ..Background::default()
        })
    }

    /// Flat validation branch (m = 0, r* = r, η = 1). Only the solver oracle
    /// tests and explicitly flagged configs construct it.
    pub fn minkowski() -> Self {
        Background {
            m: 0.0,
            r_floor: 1e-15,
            flat: true,
        }
    }

    /// Relative offset above the horizon used as the lower end of the
    /// bisection bracket in the tortoise inversion.
    pub fn with_r_floor(mut self, r_floor: f64) -> Result<Self> {
        if !(r_floor > 0.0 && r_floor.is_finite()) {
            return Err(Error::Domain(format!("r_floor must be positive, got {r_floor}")));
        }
        self.r_floor = r_floor;
        Ok(self)
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn r_floor(&self) -> f64 {
        self.r_floor
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn horizon(&self) -> f64 {
        2.0 * self.m
    }

    pub fn radius(&self, r: f64) -> Result<Radius> {
        let offset = r - self.horizon();
        if !(offset > 0.0) || !r.is_finite() {
            return Err(Error::Horizon {
                r,
                horizon: self.horizon(),
            });
        }
        Ok(Radius { r, offset })
    }

    pub fn radius_from_offset(&self, offset: f64) -> Result<Radius> {
        if !(offset > 0.0) || !offset.is_finite() {
            return Err(Error::Horizon {
                r: self.horizon() + offset,
                horizon: self.horizon(),
            });
        }
        Ok(Radius {
            r: self.horizon() + offset,
            offset,
        })
    }

    /// r* = r + 2m log(r − 2m) − 3m − 2m log m, normalized so r*(3m) = 0.
    pub fn tortoise(&self, r: f64) -> Result<f64> {
        Ok(self.tortoise_of(self.radius(r)?))
    }

    pub fn tortoise_of(&self, rad: Radius) -> f64 {
        if self.flat {
            return rad.r;
        }
        let m = self.m;
        // r − 2m + 2m + 2m log(x) − 3m − 2m log m, with x = r − 2m
        rad.offset + 2.0 * m * (rad.offset / m).ln() - m
    }

    /// Inverse of the tortoise map, accurate to a few ulps in r*.
    ///
    /// Newton runs in y = log((r − 2m)/m), where r*(y) = m e^y + 2m y − m is
    /// convex and increasing, so the iteration converges from any start.
    pub fn radius_from_tortoise(&self, rstar: f64) -> Result<Radius> {
        if !rstar.is_finite() {
            return Err(Error::Domain(format!("tortoise coordinate {rstar} is not finite")));
        }
        if self.flat {
            if rstar <= 0.0 {
                return Err(Error::Domain(format!(
                    "flat branch needs r = r* > 0, got {rstar}"
                )));
            }
            return Ok(Radius {
                r: rstar,
                offset: rstar,
            });
        }
        let m = self.m;
        let g = |y: f64| m * y.exp() + 2.0 * m * y - m - rstar;
        let mut y = if rstar > 4.0 * m {
            // r ≈ r*, so r − 2m ≈ r* − 2m
            ((rstar - 2.0 * m) / m).ln()
        } else {
            // x ≈ m exp((r* + m)/(2m)) once x is negligible next to 2m log x
            (rstar + m) / (2.0 * m)
        };
        for _ in 0..NEWTON_MAX_ITER {
            let ey = y.exp();
            let step = g(y) / (m * ey + 2.0 * m);
            if !step.is_finite() {
                break;
            }
            y -= step;
            if step.abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
                return self.radius_from_offset(m * y.exp());
            }
        }
        self.bisect_tortoise(rstar)
    }

    fn bisect_tortoise(&self, rstar: f64) -> Result<Radius> {
        let m = self.m;
        let g = |y: f64| m * y.exp() + 2.0 * m * y - m - rstar;
        let mut lo = (2.0 * self.r_floor).ln();
        let mut hi = ((rstar.abs() + 10.0 * m) / m).ln();
        while g(lo) > 0.0 {
            lo -= 2.0 * lo.abs().max(1.0);
        }
        while g(hi) < 0.0 {
            hi += hi.abs().max(1.0);
        }
        for _ in 0..BISECT_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                return self.radius_from_offset(m * mid.exp());
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(Error::NoConvergence {
            rstar,
            iterations: NEWTON_MAX_ITER + BISECT_MAX_ITER,
            residual: g(0.5 * (lo + hi)),
        })
    }

    pub fn background_at(&self, r: f64) -> Result<Coefficients> {
        Ok(self.coefficients(self.radius(r)?))
    }

    pub fn coefficients(&self, rad: Radius) -> Coefficients {
        let (mu, eta) = if self.flat {
            (0.0, 1.0)
        } else {
            (2.0 * self.m / rad.r, rad.offset / rad.r)
        };
        Coefficients {
            mu,
            eta,
            g_uub: -2.0 * eta,
            ginv_uub: -0.5 / eta,
        }
    }

    pub fn point(&self, u: f64, ub: f64) -> Result<NullPoint> {
        let rstar = ub - u;
        let rad = self.radius_from_tortoise(rstar)?;
        let c = self.coefficients(rad);
        Ok(NullPoint {
            u,
            ub,
            r: rad.r,
            offset: rad.offset,
            rstar,
            mu: c.mu,
            eta: c.eta,
        })
    }

    /// dη/dr = 2m/r².
    pub fn deta_dr(&self, r: f64) -> f64 {
        if self.flat {
            0.0
        } else {
            2.0 * self.m / (r * r)
        }
    }
}

/// ⟨x⟩ = √(1 + x²).
pub fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn photon_sphere_is_tortoise_zero() {
        let bg = Background::schwarzschild(1.0).unwrap();
        assert!(bg.tortoise(3.0).unwrap().abs() < 1e-15);
        let r = bg.radius_from_tortoise(0.0).unwrap();
        assert!((r.r - 3.0).abs() < 1e-14);
    }

    #[test]
    fn tortoise_at_ten() {
        let bg = Background::schwarzschild(1.0).unwrap();
        let want = 7.0 + 2.0 * 8f64.ln();
        assert!((bg.tortoise(10.0).unwrap() - want).abs() < 1e-13);
        assert!((bg.radius_from_tortoise(want).unwrap().r - 10.0).abs() < 1e-10);
    }

    #[test]
    fn horizon_limit_diverges() {
        let bg = Background::schwarzschild(1.0).unwrap();
        assert!(bg.tortoise(2.0 + 1e-12).unwrap() < -40.0);
        assert!(matches!(bg.tortoise(2.0), Err(Error::Horizon { .. })));
        assert!(bg.tortoise(1.0).is_err());
    }

    #[test]
    fn deep_tail_inversion() {
        let bg = Background::schwarzschild(1.0).unwrap();
        let r = bg.radius_from_tortoise(-60.0).unwrap();
        assert!(r.r - 2.0 < 1e-12);
        assert!((bg.tortoise_of(r) + 60.0).abs() < 60.0 * 1e-12);
    }

    #[test]
    fn coefficient_examples() {
        let bg = Background::schwarzschild(1.0).unwrap();
        let c = bg.background_at(4.0).unwrap();
        assert_eq!((c.mu, c.eta, c.g_uub, c.ginv_uub), (0.5, 0.5, -1.0, -1.0));
        let c = bg.background_at(2.0 + 1e-9).unwrap();
        assert!(c.eta < 1e-9);
        let c = bg.background_at(200.0).unwrap();
        assert!((c.mu - 0.01).abs() < 1e-16);
        assert!((c.ginv_uub + 1.0 / 1.98).abs() < 1e-14);
    }

    #[test]
    fn mass_must_be_positive() {
        assert!(Background::schwarzschild(0.0).is_err());
        assert!(Background::schwarzschild(-1.0).is_err());
        assert!(Background::schwarzschild(1.0).unwrap().with_r_floor(0.0).is_err());
    }

    #[test]
    fn flat_branch() {
        let bg = Background::minkowski();
        assert_eq!(bg.tortoise(5.0).unwrap(), 5.0);
        assert_eq!(bg.radius_from_tortoise(5.0).unwrap().r, 5.0);
        assert!(bg.radius_from_tortoise(-1.0).is_err());
        assert_eq!(bg.background_at(5.0).unwrap().eta, 1.0);
    }

    #[test]
    fn bisection_agrees_with_newton() {
        let bg = Background::schwarzschild(1.0).unwrap();
        for &x in &[-70.0, -5.0, 0.3, 12.0, 150.0] {
            let a = bg.radius_from_tortoise(x).unwrap();
            let b = bg.bisect_tortoise(x).unwrap();
            assert!((a.offset - b.offset).abs() <= 1e-12 * a.offset);
        }
    }
}
