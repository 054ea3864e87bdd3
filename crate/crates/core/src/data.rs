//! Short-pulse characteristic data on the outgoing cone C_{u₀}, with trivial
//! data on the incoming cone ū = 0.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::angular::{SphereField, SphereGrid};
use crate::error::{Error, Result};
use crate::solver::NullGrid;

/// exp(4 − 1/(s(1−s))) on (0, 1), zero elsewhere; maximum 1 at s = ½.
pub fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    (4.0 - 1.0 / (s * (1.0 - s))).exp()
}

pub fn bump_derivative(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let q = s * (1.0 - s);
    bump(s) * (1.0 - 2.0 * s) / (q * q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum AngularProfile {
    #[default]
    Constant,
    /// A single real harmonic Y_ℓm.
    Harmonic { l: usize, m: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseProfile {
    pub amplitude: f64,
    pub angular: AngularProfile,
}

impl Default for PulseProfile {
    fn default() -> Self {
        PulseProfile {
            amplitude: 1.0,
            angular: AngularProfile::Constant,
        }
    }
}

impl PulseProfile {
    pub fn angular_field(&self, sphere: &SphereGrid) -> Result<SphereField> {
        match self.angular {
            AngularProfile::Constant => Ok(SphereField::constant(sphere, 1.0)),
            AngularProfile::Harmonic { l, m } => SphereField::harmonic(sphere, l, m),
        }
    }
}

/// Closed form of the outgoing data: scale · bump(ū/δ) · angular.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSource {
    pub scale: f64,
    pub delta: f64,
    /// Coefficients of the angular factor.
    pub angular: Vec<f64>,
}

impl PulseSource {
    pub fn radial(&self, ub: f64) -> f64 {
        self.scale * bump(ub / self.delta)
    }

    pub fn radial_derivative(&self, ub: f64) -> f64 {
        self.scale * bump_derivative(ub / self.delta) / self.delta
    }
}

#[derive(Debug, Clone)]
pub struct CharacteristicData {
    pub u0: f64,
    /// Length of the ū-support of the pulse.
    pub delta: f64,
    /// φ on C_{u₀}, one sphere per ū node.
    pub outgoing: Vec<SphereField>,
    /// φ on C̄₀, one sphere per u node.
    pub incoming: Vec<SphereField>,
    pub source: Option<PulseSource>,
}

fn generate(grid: &NullGrid, delta: f64, profile: &PulseProfile, scale: f64) -> Result<CharacteristicData> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("pulse width must be positive, got {delta}")));
    }
    if delta <= grid.dub() {
        return Err(Error::Resolution(format!(
            "pulse width {delta} is not resolved by the ub spacing {}",
            grid.dub()
        )));
    }
    let sphere = grid.sphere();
    let ang = profile.angular_field(sphere)?;
    let scale = scale * profile.amplitude;
    let outgoing = (0..=grid.nub())
        .map(|j| {
            let a = scale * bump(grid.ub(j) / delta);
            let coeffs = ang.coeffs.iter().map(|c| a * c).collect();
            SphereField::from_coeffs(sphere, coeffs)
        })
        .collect::<Result<Vec<_>>>()?;
    let incoming = (0..=grid.nu()).map(|_| SphereField::zero(sphere)).collect();
    Ok(CharacteristicData {
        u0: grid.u0(),
        delta,
        outgoing,
        incoming,
        source: Some(PulseSource {
            scale,
            delta,
            angular: ang.coeffs,
        }),
    })
}

/// φ|_{C_{u₀}} = (δ^{1/2}/|u₀|) · amplitude · bump(ū/δ) · angular.
pub fn short_pulse_boundary(u0: f64, delta: f64, profile: &PulseProfile, grid: &NullGrid) -> Result<CharacteristicData> {
    if !(u0 < 0.0) {
        return Err(Error::Domain(format!("the pulse cone needs u0 < 0, got {u0}")));
    }
    if (grid.u0() - u0).abs() > 1e-12 * u0.abs() {
        return Err(Error::Config(format!(
            "data cone u0 = {u0} differs from the grid's u0 = {}",
            grid.u0()
        )));
    }
    generate(grid, delta, profile, delta.sqrt() / u0.abs())
}

/// δ^{1/2} ψ₀(ū/δ) without the 1/|u₀| factor.
///
/// This is the forward-in-ū realization of the scattering data: the profile is
/// posed on ū ∈ [0, δ] of the grid's first outgoing cone and the evolution runs
/// forward, the time-reversed picture of data given toward the past.
pub fn scattering_profile(delta: f64, profile: &PulseProfile, grid: &NullGrid) -> Result<CharacteristicData> {
    generate(grid, delta, profile, delta.sqrt())
}

impl CharacteristicData {
    pub fn sup_outgoing(&self) -> f64 {
        self.outgoing
            .iter()
            .flat_map(|f| f.values.iter())
            .fold(0.0, |a: f64, v| a.max(v.abs()))
    }

    /// Writes `u, ub, theta, phi, value` rows for both cones.
    pub fn write_csv<W: Write>(&self, grid: &NullGrid, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["u", "ub", "theta", "phi", "value"])?;
        let sphere = grid.sphere();
        let mut row = |u: f64, ub: f64, f: &SphereField| -> Result<()> {
            for (node, v) in f.values.iter().enumerate() {
                let (th, ph) = sphere.node(node);
                wr.write_record(&[
                    u.to_string(),
                    ub.to_string(),
                    th.to_string(),
                    ph.to_string(),
                    v.to_string(),
                ])?;
            }
            Ok(())
        };
        for (j, f) in self.outgoing.iter().enumerate() {
            row(self.u0, grid.ub(j), f)?;
        }
        for (i, f) in self.incoming.iter().enumerate().skip(1) {
            row(grid.u(i), 0.0, f)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn grid(delta: f64, nub: usize) -> NullGrid {
        NullGrid::new(-10.0, -1.0, delta, 16, nub, Arc::new(SphereGrid::new(0)), 1e-6).unwrap()
    }

    #[test]
    fn bump_values() {
        assert_eq!(bump(0.5), 1.0);
        assert_eq!(bump(0.0), 0.0);
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(-3.0), 0.0);
        let want = (4.0f64 - 16.0 / 3.0).exp();
        assert!((bump(0.25) - want).abs() < 1e-15);
        assert!((bump(0.25) - 0.26360).abs() < 1e-5);
    }

    #[test]
    fn bump_derivative_matches_fd() {
        for &s in &[0.1, 0.3, 0.5, 0.77] {
            let h = 1e-6;
            let fd = (bump(s + h) - bump(s - h)) / (2.0 * h);
            assert!((fd - bump_derivative(s)).abs() < 1e-6 * bump_derivative(s).abs().max(1.0));
        }
    }

    #[test]
    fn pulse_sup_example() {
        let g = grid(0.04, 64);
        let d = short_pulse_boundary(-10.0, 0.04, &PulseProfile::default(), &g).unwrap();
        assert!((d.sup_outgoing() - 0.02).abs() < 1e-12);
        assert!(d.incoming.iter().all(|f| f.values.iter().all(|v| *v == 0.0)));
        assert_eq!(d.outgoing[0].values[0], 0.0);
    }

    #[test]
    fn scattering_sup_example() {
        let g = grid(0.04, 64);
        let d = scattering_profile(0.04, &PulseProfile::default(), &g).unwrap();
        assert!((d.sup_outgoing() - 0.2).abs() < 1e-12);
        let twice = PulseProfile {
            amplitude: 2.0,
            ..Default::default()
        };
        let d2 = scattering_profile(0.04, &twice, &g).unwrap();
        assert!((d2.sup_outgoing() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn support_outside_pulse_vanishes() {
        let g = grid(0.08, 64);
        let d = scattering_profile(0.04, &PulseProfile::default(), &g).unwrap();
        for j in 0..=64 {
            if g.ub(j) >= 0.04 {
                assert_eq!(d.outgoing[j].values[0], 0.0);
            }
        }
    }

    #[test]
    fn errors() {
        let g = grid(0.04, 64);
        assert!(matches!(
            short_pulse_boundary(0.0, 0.04, &PulseProfile::default(), &g),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            short_pulse_boundary(-10.0, 0.0001, &PulseProfile::default(), &g),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn zero_amplitude_is_zero_data() {
        let g = grid(0.04, 32);
        let p = PulseProfile {
            amplitude: 0.0,
            ..Default::default()
        };
        let d = short_pulse_boundary(-10.0, 0.04, &p, &g).unwrap();
        assert_eq!(d.sup_outgoing(), 0.0);
    }

    #[test]
    fn csv_columns() {
        let g = grid(0.04, 8);
        let d = short_pulse_boundary(-10.0, 0.04, &PulseProfile::default(), &g).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&g, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("u,ub,theta,phi,value\n"));
        assert_eq!(s.lines().count(), 1 + 9 + 16);
    }
}
