//! Quadratic nonlinearities Q(∂φ, ∂φ) in the null frame.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Background;

/// First derivatives of a field at one spacetime point and one sphere node.
///
/// `angular` holds the orthonormal-frame components of ∇̸ψ, so that
/// |∇̸ψ|² = angular[0]² + angular[1]².
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientSample {
    /// Lψ = ∂_ū ψ.
    pub lpsi: f64,
    /// L̄ψ = ∂_u ψ.
    pub lbpsi: f64,
    pub angular: [f64; 2],
    pub eta: f64,
}

impl GradientSample {
    pub fn ypsi(&self) -> f64 {
        self.lbpsi / self.eta
    }

    pub fn nabla_sq(&self) -> f64 {
        self.angular[0] * self.angular[0] + self.angular[1] * self.angular[1]
    }

    pub fn component(&self, c: Component) -> f64 {
        match c {
            Component::L => self.lpsi,
            Component::Lb => self.lbpsi,
            Component::Y => self.ypsi(),
            Component::E1 => self.angular[0],
            Component::E2 => self.angular[1],
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        GradientSample {
            lpsi: a * self.lpsi,
            lbpsi: a * self.lbpsi,
            angular: [a * self.angular[0], a * self.angular[1]],
            eta: self.eta,
        }
    }
}

/// Spacetime coordinates (u, ū, θ, φ).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Coords {
    pub u: f64,
    pub ub: f64,
    pub theta: f64,
    pub phi: f64,
}

/// Frame derivative selector. L is the only "bad" direction; Y and the
/// angular components are "good".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Component {
    L,
    Lb,
    Y,
    E1,
    E2,
}

impl Component {
    pub fn is_good(self) -> bool {
        matches!(self, Component::Y | Component::E1 | Component::E2)
    }
}

pub type Sampler = Arc<dyn Fn(&Coords) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct GeneralNull {
    pub lambda1: Sampler,
    pub lambda2: Sampler,
    pub bad: Component,
    pub good: Component,
}

impl fmt::Debug for GeneralNull {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralNull")
            .field("bad", &self.bad)
            .field("good", &self.good)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum NullFormSpec {
    /// Q ≡ 0.
    Linear,
    /// g^{μν} ∂_μψ₁ ∂_νψ₂.
    Q0,
    /// D_aψ₁ D_bψ₂ − D_bψ₁ D_aψ₂.
    Qab(Component, Component),
    General(GeneralNull),
    /// (Lψ)², which pairs two bad derivatives.
    NonNullL2,
}

impl NullFormSpec {
    pub fn general(lambda1: Sampler, lambda2: Sampler, bad: Component, good: Component) -> Result<Self> {
        if !good.is_good() || bad == Component::Lb {
            return Err(Error::Config(format!(
                "general null form must pair a D derivative with a good one, got {bad:?}·{good:?}"
            )));
        }
        Ok(NullFormSpec::General(GeneralNull {
            lambda1,
            lambda2,
            bad,
            good,
        }))
    }

    /// General form with the default coefficients Λ₁ = Λ₂ = 1.
    pub fn general_unit(bad: Component, good: Component) -> Result<Self> {
        let one: Sampler = Arc::new(|_| 1.0);
        Self::general(one.clone(), one, bad, good)
    }

    pub fn label(&self) -> String {
        match self {
            NullFormSpec::Linear => "linear".into(),
            NullFormSpec::Q0 => "Q0".into(),
            NullFormSpec::Qab(a, b) => format!("Qab({a:?},{b:?})"),
            NullFormSpec::General(g) => format!("general({:?},{:?})", g.bad, g.good),
            NullFormSpec::NonNullL2 => "nonnull_L2".into(),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, NullFormSpec::Linear)
    }

    /// Parses the config-file names; general forms need samplers and are
    /// built in code.
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "linear" | "none" | "zero" => Ok(NullFormSpec::Linear),
            "q0" => Ok(NullFormSpec::Q0),
            "quub" | "qab" => Ok(NullFormSpec::Qab(Component::Lb, Component::L)),
            "nonnull_l2" | "nonnull" | "l2" => Ok(NullFormSpec::NonNullL2),
            "general_ly" => Self::general_unit(Component::L, Component::Y),
            other => Err(Error::Config(format!("unknown null form '{other}'"))),
        }
    }
}

pub fn eval_null_form(spec: &NullFormSpec, g1: &GradientSample, g2: &GradientSample, at: &Coords) -> Result<f64> {
    if !(g1.eta > 0.0) || !(g2.eta > 0.0) {
        return Err(Error::DegenerateFrame(g1.eta.min(g2.eta)));
    }
    Ok(match spec {
        NullFormSpec::Linear => 0.0,
        NullFormSpec::Q0 => {
            -0.5 / g1.eta * (g1.lpsi * g2.lbpsi + g2.lpsi * g1.lbpsi)
                + g1.angular[0] * g2.angular[0]
                + g1.angular[1] * g2.angular[1]
        }
        NullFormSpec::Qab(a, b) => {
            g1.component(*a) * g2.component(*b) - g1.component(*b) * g2.component(*a)
        }
        NullFormSpec::General(g) => {
            (g.lambda1)(at) * g1.component(g.bad) * g2.component(g.good)
                + (g.lambda2)(at) * g2.component(g.bad) * g1.component(g.good)
        }
        NullFormSpec::NonNullL2 => g1.lpsi * g2.lpsi,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Dt,
    Y,
    Omega(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct NullConditionOptions {
    /// Finite-difference step in u, ū and the angles.
    pub h: f64,
    /// Ratios above this value are flagged.
    pub threshold: f64,
}

impl Default for NullConditionOptions {
    fn default() -> Self {
        NullConditionOptions {
            h: 1e-3,
            threshold: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NullConditionEntry {
    /// 1 or 2.
    pub lambda: usize,
    /// Orders (i₁, i₂, i₃) of ∂_t, Y and Ω.
    pub orders: [usize; 3],
    /// max over samples of |∂_t^{i₁} Y^{i₂} Ω^{i₃} Λ| · |t|^{i₁} r^{i₂}.
    pub max_ratio: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NullConditionReport {
    pub entries: Vec<NullConditionEntry>,
    pub warnings: Vec<String>,
}

impl NullConditionReport {
    pub fn max_ratio(&self, lambda: usize, orders: [usize; 3]) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.lambda == lambda && e.orders == orders)
            .map(|e| e.max_ratio)
    }

    pub fn any_flagged(&self) -> bool {
        self.entries.iter().any(|e| e.flagged)
    }
}

fn words() -> Vec<Vec<Op>> {
    let ops = [Op::Dt, Op::Y, Op::Omega(1), Op::Omega(2), Op::Omega(3)];
    let mut out = vec![vec![]];
    for &a in &ops {
        out.push(vec![a]);
        for &b in &ops {
            out.push(vec![a, b]);
        }
    }
    out
}

fn orders(word: &[Op]) -> [usize; 3] {
    let mut o = [0; 3];
    for op in word {
        match op {
            Op::Dt => o[0] += 1,
            Op::Y => o[1] += 1,
            Op::Omega(_) => o[2] += 1,
        }
    }
    o
}

fn stencil(g: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    (-g(2.0 * h) + 8.0 * g(h) - 8.0 * g(-h) + g(-2.0 * h)) / (12.0 * h)
}

fn apply(word: &[Op], f: &dyn Fn(&Coords) -> f64, p: &Coords, bg: &Background, h: f64) -> Result<f64> {
    let Some((&op, rest)) = word.split_first() else {
        return Ok(f(p));
    };
    let inner = |q: &Coords| apply(rest, f, q, bg, h);
    let shifted = |du: f64, dub: f64, dth: f64, dph: f64| -> Result<f64> {
        inner(&Coords {
            u: p.u + du,
            ub: p.ub + dub,
            theta: p.theta + dth,
            phi: p.phi + dph,
        })
    };
    // Errors from nested evaluations surface as NaN and are reported by the caller.
    let lift = |r: Result<f64>| r.unwrap_or(f64::NAN);
    Ok(match op {
        // t = u + ū at fixed r*
        Op::Dt => stencil(&|s| lift(shifted(0.5 * s, 0.5 * s, 0.0, 0.0)), h),
        Op::Y => {
            let eta = bg.point(p.u, p.ub)?.eta;
            stencil(&|s| lift(shifted(s, 0.0, 0.0, 0.0)), h) / eta
        }
        Op::Omega(i) => {
            let dth = stencil(&|s| lift(shifted(0.0, 0.0, s, 0.0)), h);
            let dph = stencil(&|s| lift(shifted(0.0, 0.0, 0.0, s)), h);
            let (st, ct) = p.theta.sin_cos();
            let cot = ct / st;
            let (sp, cp) = p.phi.sin_cos();
            match i {
                1 => -sp * dth - cot * cp * dph,
                2 => cp * dth - cot * sp * dph,
                _ => dph,
            }
        }
    })
}

/// Finite-difference probe of the symbol bounds |∂_t^{i₁} Y^{i₂} Ω^{i₃} Λ_j| ≲ t^{−i₁} r^{−i₂}.
///
/// Raw weighted ratios are returned; `threshold` only sets the flag.
pub fn null_condition_report(
    lambda1: &Sampler,
    lambda2: &Sampler,
    samples: &[Coords],
    bg: &Background,
    opts: NullConditionOptions,
) -> Result<NullConditionReport> {
    if samples.is_empty() {
        return Err(Error::Domain("null condition probe needs at least one sample".into()));
    }
    let mut entries: Vec<NullConditionEntry> = Vec::new();
    let mut warnings = Vec::new();
    let words = words();
    for (j, lam) in [lambda1, lambda2].into_iter().enumerate() {
        let f = |c: &Coords| lam(c);
        for word in &words {
            let ord = orders(word);
            let mut max_ratio: f64 = 0.0;
            for p in samples {
                let pt = bg.point(p.u, p.ub)?;
                if ord[1] > 0 && pt.eta < 1e-12 {
                    warnings.push(format!(
                        "Y-derivative skipped at (u={}, ub={}): eta = {:e} underflows the stencil",
                        p.u, p.ub, pt.eta
                    ));
                    continue;
                }
                let d = apply(word, &f, p, bg, opts.h)?;
                if !d.is_finite() {
                    warnings.push(format!(
                        "non-finite derivative {ord:?} at (u={}, ub={})",
                        p.u, p.ub
                    ));
                    continue;
                }
                let w = pt.t().abs().powi(ord[0] as i32) * pt.r.powi(ord[1] as i32);
                max_ratio = max_ratio.max(d.abs() * w);
            }
            match entries.iter_mut().find(|e| e.lambda == j + 1 && e.orders == ord) {
                Some(e) => e.max_ratio = e.max_ratio.max(max_ratio),
                None => entries.push(NullConditionEntry {
                    lambda: j + 1,
                    orders: ord,
                    max_ratio,
                    flagged: false,
                }),
            }
        }
    }
    for e in &mut entries {
        e.flagged = e.max_ratio > opts.threshold;
    }
    Ok(NullConditionReport { entries, warnings })
}
