//! Multipliers X = f₁L + f₂L̄ with optional modifier q, and the bulk current
//!
//! K^X(ψ, q) = T^{μν} ^Xπ_{μν} + q D^γψ D_γψ − ½ □q ψ²,  ^Xπ = ½ ℒ_X g,
//!
//! written in null-frame components. Coefficient functions depend on (u, ū)
//! only through r* and t, so their null derivatives are taken in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::NullPoint;
use crate::nullforms::GradientSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MultiplierName {
    Xi1,
    Xi2,
    Redshift,
    ConformalK,
    Xrho,
}

impl MultiplierName {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "xi1" => MultiplierName::Xi1,
            "xi2" => MultiplierName::Xi2,
            "redshift" | "Nh" | "N_h" => MultiplierName::Redshift,
            "conformalK" | "conformal_k" | "K" => MultiplierName::ConformalK,
            "Xrho" | "xrho" => MultiplierName::Xrho,
            _ => return Err(Error::Config(format!("unknown multiplier {s:?}"))),
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            MultiplierName::Xi1 => "xi1",
            MultiplierName::Xi2 => "xi2",
            MultiplierName::Redshift => "redshift",
            MultiplierName::ConformalK => "conformalK",
            MultiplierName::Xrho => "Xrho",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSpec {
    pub name: MultiplierName,
    pub delta: f64,
    /// Inner edge of the red-shift cutoff, in units of length.
    pub r_nh: f64,
    pub epsilon: f64,
    pub c: f64,
    pub rho: f64,
    /// Coefficient of ∂_t in X_ρ.
    pub time_weight: f64,
}

impl MultiplierSpec {
    fn base(name: MultiplierName, delta: f64) -> Self {
        MultiplierSpec {
            name,
            delta,
            r_nh: 2.2,
            epsilon: 0.1,
            c: 1.0,
            rho: 1.0,
            time_weight: 1.0,
        }
    }

    pub fn xi1(delta: f64) -> Self {
        Self::base(MultiplierName::Xi1, delta)
    }

    pub fn xi2(delta: f64) -> Self {
        Self::base(MultiplierName::Xi2, delta)
    }

    /// Red-shift field with the default cutoff r_NH = 2.2m, ε = 0.1, c = 1.
    pub fn redshift(delta: f64, m: f64) -> Self {
        MultiplierSpec {
            r_nh: 2.2 * m,
            ..Self::base(MultiplierName::Redshift, delta)
        }
    }

    pub fn conformal_k() -> Self {
        Self::base(MultiplierName::ConformalK, 1.0)
    }

    pub fn xrho(rho: f64, time_weight: f64) -> Self {
        MultiplierSpec {
            rho,
            time_weight,
            ..Self::base(MultiplierName::Xrho, 1.0)
        }
    }

    /// Checks parameter ranges; `m` is the background mass.
    pub fn validate(&self, m: f64) -> Result<()> {
        if matches!(self.name, MultiplierName::Xi1 | MultiplierName::Xi2 | MultiplierName::Redshift)
            && !(self.delta > 0.0 && self.delta.is_finite())
        {
            return Err(Error::Config(format!("multiplier needs delta > 0, got {}", self.delta)));
        }
        if self.name == MultiplierName::Redshift {
            if !(self.r_nh > 2.0 * m && 1.2 * self.r_nh < 3.0 * m) {
                return Err(Error::Config(format!(
                    "red-shift cutoff needs 2m < r_NH and 1.2 r_NH < 3m, got r_NH = {} with m = {m}",
                    self.r_nh
                )));
            }
            if !(self.epsilon > 0.0) {
                return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
            }
        }
        if self.name == MultiplierName::Xrho && !(self.rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}

/// q with its null derivatives and □q.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct QModifier {
    pub q: f64,
    pub q_u: f64,
    pub q_ub: f64,
    pub box_q: f64,
}

/// f₁, f₂ and their first null derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Reduction {
    pub f1: f64,
    pub f2: f64,
    pub f1_u: f64,
    pub f1_ub: f64,
    pub f2_u: f64,
    pub f2_ub: f64,
    pub q: Option<QModifier>,
}

/// C² smoothstep cutoff: 1 for r ≤ r_NH, 0 for r ≥ 1.2 r_NH.
/// Returns (ξ, dξ/dr).
fn cutoff(r: f64, r_nh: f64) -> (f64, f64) {
    let w = 0.2 * r_nh;
    let s = (r - r_nh) / w;
    if s <= 0.0 {
        (1.0, 0.0)
    } else if s >= 1.0 {
        (0.0, 0.0)
    } else {
        let step = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
        let dstep = 30.0 * s * s * (1.0 - s) * (1.0 - s);
        (1.0 - step, -dstep / w)
    }
}

/// Reduced coefficients of the multiplier at `p`. ∂_ū h = h′ and ∂_u h = −h′
/// for a function of r*, where ′ = d/dr* = η d/dr.
pub fn reduce(spec: &MultiplierSpec, p: &NullPoint) -> Result<Reduction> {
    let (r, eta, mu) = (p.r, p.eta, p.mu);
    let m = 0.5 * mu * r;
    spec.validate(m)?;
    if !(eta > 0.0) {
        return Err(Error::Capped { u: p.u, ub: p.ub });
    }
    let d = spec.delta;
    let eta_r = 2.0 * m / (r * r);
    Ok(match spec.name {
        MultiplierName::Xi1 => {
            let de = eta * eta_r;
            Reduction {
                f1: eta,
                f2: 1.0 / d,
                f1_u: -de,
                f1_ub: de,
                ..Default::default()
            }
        }
        MultiplierName::Xi2 => {
            let de = eta * eta_r;
            // (1 + μ)′ = −η′
            Reduction {
                f1: eta,
                f2: (1.0 + mu) / d,
                f1_u: -de,
                f1_ub: de,
                f2_u: de / d,
                f2_ub: -de / d,
                q: None,
            }
        }
        MultiplierName::Redshift => {
            let (xi, dxi_dr) = cutoff(r, spec.r_nh);
            if xi == 0.0 && dxi_dr == 0.0 {
                return Ok(Reduction {
                    f1: 1.0,
                    ..Default::default()
                });
            }
            if p.rstar >= 0.0 {
                return Err(Error::Domain(format!(
                    "red-shift cutoff support reaches r* = {} ≥ 0",
                    p.rstar
                )));
            }
            let a = -p.rstar;
            let eps = spec.epsilon;
            let dxi = eta * dxi_dr;
            let pe = a.powf(-eps);
            let y1 = xi * (1.0 + pe);
            // d|r*|/dr* = −1 on r* < 0
            let dy1 = dxi * (1.0 + pe) + xi * eps * pe / a;
            let pe1 = a.powf(-1.0 - eps);
            let y2 = spec.c * xi * pe1;
            let dy2 = spec.c * (dxi * pe1 + xi * (1.0 + eps) * pe1 / a);
            // (y₁/η)′ = y₁′/η − y₁ η′/η² with η′ = η · 2m/r²
            let dh = dy1 / eta - y1 * eta_r / eta;
            Reduction {
                f1: 1.0 + y2,
                f2: y1 / (d * eta),
                f1_u: -dy2,
                f1_ub: dy2,
                f2_u: -dh / d,
                f2_ub: dh / d,
                q: None,
            }
        }
        MultiplierName::ConformalK => {
            let (u, ub) = (p.u, p.ub);
            let a = eta / r;
            let b = -1.0 / (r * r) + 4.0 * m / (r * r * r);
            let b_r = 2.0 / (r * r * r) - 12.0 * m / (r * r * r * r);
            let a1 = eta * b;
            let a2 = eta * (eta_r * b + eta * b_r);
            let s = ub * ub - u * u;
            let q = a * s;
            let q_ub = a1 * s + 2.0 * ub * a;
            let q_u = -a1 * s - 2.0 * u * a;
            let q_uub = -a2 * s - 2.0 * ub * a1 - 2.0 * u * a1;
            Reduction {
                f1: ub * ub,
                f2: u * u,
                f1_u: 0.0,
                f1_ub: 2.0 * ub,
                f2_u: 2.0 * u,
                f2_ub: 0.0,
                q: Some(QModifier {
                    q,
                    q_u,
                    q_ub,
                    box_q: -q_uub / eta + (q_ub - q_u) / r,
                }),
            }
        }
        MultiplierName::Xrho => {
            let rho = spec.rho;
            let f = r / (r + rho);
            let f_r = rho / ((r + rho) * (r + rho));
            // h = f/(2η)
            let h_r = (f_r * eta - f * eta_r) / (2.0 * eta * eta);
            let dh = eta * h_r;
            let q = 1.0 / (r + rho);
            let q_r = -q * q;
            let q_rr = 2.0 * q * q * q;
            let ct = spec.time_weight;
            Reduction {
                f1: 0.5 * ct + f / (2.0 * eta),
                f2: 0.5 * ct - f / (2.0 * eta),
                f1_u: -dh,
                f1_ub: dh,
                f2_u: dh,
                f2_ub: -dh,
                q: Some(QModifier {
                    q,
                    q_u: -eta * q_r,
                    q_ub: eta * q_r,
                    box_q: eta_r * q_r + eta * q_rr + 2.0 * eta * q_r / r,
                }),
            }
        }
    })
}

/// Coefficients of K as a quadratic form in (Lψ, L̄ψ, |∇̸ψ|, ψ).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CurrentCoefficients {
    pub l2: f64,
    pub lb2: f64,
    pub nab2: f64,
    /// Coefficient of Lψ·L̄ψ.
    pub cross: f64,
    pub psi2: f64,
}

impl CurrentCoefficients {
    pub fn apply(&self, g: &GradientSample, psi: f64) -> f64 {
        self.l2 * g.lpsi * g.lpsi
            + self.lb2 * g.lbpsi * g.lbpsi
            + self.nab2 * g.nabla_sq()
            + self.cross * g.lpsi * g.lbpsi
            + self.psi2 * psi * psi
    }
}

pub fn coefficients_of(red: &Reduction, p: &NullPoint) -> CurrentCoefficients {
    let (r, eta, mu) = (p.r, p.eta, p.mu);
    let g = -0.5 / eta;
    let mut c = CurrentCoefficients {
        l2: red.f1_u * g,
        lb2: red.f2_ub * g,
        nab2: -0.5 * (red.f1_ub + mu * red.f1 / r) - 0.5 * (red.f2_u - mu * red.f2 / r),
        cross: 2.0 * eta / r * g * (red.f2 - red.f1),
        psi2: 0.0,
    };
    if let Some(q) = red.q {
        // D^γψ D_γψ = −LψL̄ψ/η + |∇̸ψ|²
        c.nab2 += q.q;
        c.cross -= q.q / eta;
        c.psi2 = -0.5 * q.box_q;
    }
    c
}

pub fn current_coefficients(spec: &MultiplierSpec, p: &NullPoint) -> Result<CurrentCoefficients> {
    Ok(coefficients_of(&reduce(spec, p)?, p))
}

pub fn multiplier_current(spec: &MultiplierSpec, p: &NullPoint, grads: &GradientSample, psi: f64) -> Result<f64> {
    Ok(current_coefficients(spec, p)?.apply(grads, psi))
}

/// T^{μν} ^Lπ_{μν} assembled from frame components: ^Lπ_{uū} = −μη/r,
/// ^Lπ_{AB} = (η/r) g̸_{AB}, all other components zero.
pub fn deformation_contraction_l(p: &NullPoint, g: &GradientSample) -> f64 {
    let (r, eta, mu) = (p.r, p.eta, p.mu);
    let ginv = -0.5 / eta;
    let nab2 = g.nabla_sq();
    // T_{uū} = η|∇̸ψ|², raised with g^{uū} on both slots
    let t_up_uub = ginv * ginv * eta * nab2;
    let pi_uub = -mu * eta / r;
    // trace of T_{AB} = ∇_Aψ∇_Bψ − ½ g̸_{AB} D^γψ D_γψ over the 2-sphere
    let dpsi2 = -g.lpsi * g.lbpsi / eta + nab2;
    let tr_t = nab2 - dpsi2;
    2.0 * t_up_uub * pi_uub + (eta / r) * tr_t
}
