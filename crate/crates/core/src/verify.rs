//! Finite-difference checks of exact operator identities and numeric probes
//! of the Sobolev inequalities on spheres and outgoing cones.
//!
//! Null derivatives are fourth-order centred differences of step h, composed
//! for higher orders; angular operators act spectrally after sampling the
//! probe on the quadrature nodes of a sphere grid.

use std::rc::Rc;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angular::{harmonic_sum, real_harmonic, SphereGrid};
use crate::error::{Error, Result};
use crate::geometry::{Background, NullPoint};

/// Below this η the null frame is too degenerate for difference checks.
pub const ETA_FLOOR: f64 = 1e-3;

type Sampler = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    Analytic,
    Smooth,
}

/// A probe ψ(u, ū, θ, φ), band-limited to `lmax` in the angles.
#[derive(Clone)]
pub struct TestFunction {
    pub label: String,
    pub lmax: usize,
    pub smoothness: Smoothness,
    sampler: Sampler,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("lmax", &self.lmax)
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new(label: impl Into<String>, lmax: usize, smoothness: Smoothness, f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        TestFunction {
            label: label.into(),
            lmax,
            smoothness,
            sampler: Arc::new(f),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), 0, Smoothness::Analytic, move |_, _, _, _| c)
    }

    /// radial(u, ū) · Y_ℓm(θ, φ).
    pub fn separable(label: impl Into<String>, l: usize, m: i64, radial: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(label, l, Smoothness::Analytic, move |u, ub, th, ph| radial(u, ub) * real_harmonic(l, m, th, ph))
    }

    pub fn eval(&self, u: f64, ub: f64, theta: f64, phi: f64) -> f64 {
        (self.sampler)(u, ub, theta, phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommutatorId {
    BoxY,
    BoxL,
    BoxLb,
    LY,
    LbY,
    LbNab,
    LNab,
    OmBox,
}

impl CommutatorId {
    pub const ALL: [CommutatorId; 8] = [
        CommutatorId::BoxY,
        CommutatorId::BoxL,
        CommutatorId::BoxLb,
        CommutatorId::LY,
        CommutatorId::LbY,
        CommutatorId::LbNab,
        CommutatorId::LNab,
        CommutatorId::OmBox,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommutatorId::BoxY => "Box_Y",
            CommutatorId::BoxL => "Box_L",
            CommutatorId::BoxLb => "Box_Lb",
            CommutatorId::LY => "L_Y",
            CommutatorId::LbY => "Lb_Y",
            CommutatorId::LbNab => "Lb_nab",
            CommutatorId::LNab => "L_nab",
            CommutatorId::OmBox => "Om_Box",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown commutator id {s:?}")))
    }
}

/// Where and on what background the identities are sampled.
#[derive(Debug, Clone)]
pub struct CommutatorProbe {
    pub bg: Background,
    /// (u, ū) sample points.
    pub points: Vec<(f64, f64)>,
    pub sphere: Arc<SphereGrid>,
}

impl CommutatorProbe {
    /// Points spread over r ∈ [2.5m, 12m] and t ∈ [−3, 3], seeded.
    pub fn standard(bg: Background, lmax: usize, n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = if bg.is_flat() { 1.0 } else { bg.m() };
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let r = rng.gen_range(2.5 * m..12.0 * m);
            let t = rng.gen_range(-3.0..3.0);
            let rs = bg.tortoise(r)?;
            points.push((0.5 * (t - rs), 0.5 * (t + rs)));
        }
        Ok(CommutatorProbe {
            bg,
            points,
            sphere: Arc::new(SphereGrid::new(lmax)),
        })
    }
}

/// Nodal values on the probe sphere; vectors stack their two frame components.
type Fun<'a> = Rc<dyn Fn(f64, f64) -> Result<Vec<f64>> + 'a>;

struct Ops<'a> {
    bg: &'a Background,
    sphere: &'a SphereGrid,
    h: f64,
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

impl<'a> Ops<'a> {
    fn point(&self, u: f64, ub: f64) -> Result<NullPoint> {
        let p = self.bg.point(u, ub)?;
        if p.eta < ETA_FLOOR {
            return Err(Error::Domain(format!(
                "sample (u, ub) = ({u}, {ub}) has eta = {:e} below {ETA_FLOOR}",
                p.eta
            )));
        }
        Ok(p)
    }

    fn sample(&self, psi: &'a TestFunction) -> Fun<'a> {
        let sphere = self.sphere;
        Rc::new(move |u, ub| {
            Ok((0..sphere.nnodes())
                .map(|n| {
                    let (th, ph) = sphere.node(n);
                    psi.eval(u, ub, th, ph)
                })
                .collect())
        })
    }

    /// Fourth-order centred difference along u (`along_u`) or ū.
    fn diff(&self, f: Fun<'a>, along_u: bool) -> Fun<'a> {
        let h = self.h;
        Rc::new(move |u, ub| {
            let at = |s: f64| if along_u { f(u + s * h, ub) } else { f(u, ub + s * h) };
            let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
            Ok((0..m2.len())
                .map(|k| (m2[k] - 8.0 * m1[k] + 8.0 * p1[k] - p2[k]) / (12.0 * h))
                .collect())
        })
    }

    fn l(&self, f: Fun<'a>) -> Fun<'a> {
        self.diff(f, false)
    }

    fn lb(&self, f: Fun<'a>) -> Fun<'a> {
        self.diff(f, true)
    }

    /// Multiplies by a coefficient function of the point.
    fn scale(&self, f: Fun<'a>, c: impl Fn(&NullPoint) -> f64 + 'a) -> Fun<'a> {
        let me = Ops { ..*self };
        Rc::new(move |u, ub| {
            let p = me.point(u, ub)?;
            let a = c(&p);
            Ok(f(u, ub)?.into_iter().map(|v| a * v).collect())
        })
    }

    fn y(&self, f: Fun<'a>) -> Fun<'a> {
        self.scale(self.lb(f), |p| 1.0 / p.eta)
    }

    fn angular(&self, f: Fun<'a>, op: impl Fn(&SphereGrid, &[f64], f64) -> Vec<f64> + 'a) -> Fun<'a> {
        let me = Ops { ..*self };
        Rc::new(move |u, ub| {
            let p = me.point(u, ub)?;
            let vals = f(u, ub)?;
            let mut c = vec![0.0; me.sphere.ncoef()];
            me.sphere.analyze(&vals, &mut c);
            Ok(op(me.sphere, &c, p.r))
        })
    }

    fn lap(&self, f: Fun<'a>) -> Fun<'a> {
        self.angular(f, |s, c, r| {
            let scaled: Vec<f64> = c.iter().enumerate().map(|(k, v)| s.eigenvalue(k) * v / (r * r)).collect();
            let mut out = vec![0.0; s.nnodes()];
            s.synthesize(&scaled, &mut out);
            out
        })
    }

    fn omega(&self, f: Fun<'a>, i: usize) -> Fun<'a> {
        self.angular(f, move |s, c, _| {
            let mut rc = vec![0.0; c.len()];
            s.rotate_coeffs(i, c, &mut rc);
            let mut out = vec![0.0; s.nnodes()];
            s.synthesize(&rc, &mut out);
            out
        })
    }

    /// Orthonormal-frame components of ∇̸, stacked.
    fn nabla(&self, f: Fun<'a>) -> Fun<'a> {
        self.angular(f, |s, c, r| {
            let nn = s.nnodes();
            let (mut a, mut b) = (vec![0.0; nn], vec![0.0; nn]);
            s.synthesize_gradient(c, &mut a, &mut b);
            a.extend(b);
            a.iter_mut().for_each(|v| *v /= r);
            a
        })
    }

    /// □ = −η⁻¹ L L̄ + △̸ + (L − L̄)/r.
    fn wave(&self, f: Fun<'a>) -> Fun<'a> {
        let llb = self.scale(self.l(self.lb(f.clone())), |p| -1.0 / p.eta);
        let lap = self.lap(f.clone());
        let lf = self.scale(self.l(f.clone()), |p| 1.0 / p.r);
        let lbf = self.scale(self.lb(f), |p| -1.0 / p.r);
        sum(vec![llb, lap, lf, lbf])
    }
}

fn sum<'a>(terms: Vec<Fun<'a>>) -> Fun<'a> {
    Rc::new(move |u, ub| {
        let mut out = terms[0](u, ub)?;
        for t in &terms[1..] {
            axpy(&mut out, 1.0, &t(u, ub)?);
        }
        Ok(out)
    })
}

fn neg<'a>(f: Fun<'a>) -> Fun<'a> {
    Rc::new(move |u, ub| Ok(f(u, ub)?.into_iter().map(|v| -v).collect()))
}

/// max |LHS − RHS| of the identity over the probe points and sphere nodes.
pub fn commutator_residual(id: CommutatorId, psi: &TestFunction, h: f64, probe: &CommutatorProbe) -> Result<f64> {
    if psi.lmax > probe.sphere.lmax() {
        return Err(Error::Config(format!(
            "probe band limit {} exceeds the sphere's {}",
            psi.lmax,
            probe.sphere.lmax()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {h}")));
    }
    let ops = Ops {
        bg: &probe.bg,
        sphere: &probe.sphere,
        h,
    };
    let m = probe.bg.m();
    let f = ops.sample(psi);
    let residuals: Vec<Fun> = match id {
        CommutatorId::BoxY => {
            let lhs = sum(vec![ops.wave(ops.y(f.clone())), neg(ops.y(ops.wave(f.clone())))]);
            let rhs = sum(vec![
                ops.scale(ops.y(ops.y(f.clone())), move |p| 2.0 * m / (p.r * p.r)),
                ops.scale(ops.lap(f.clone()), |p| -2.0 / p.r),
                ops.scale(ops.y(f.clone()), |p| 1.0 / (p.r * p.r)),
                ops.scale(ops.l(f), |p| -1.0 / (p.r * p.r)),
            ]);
            vec![sum(vec![lhs, neg(rhs)])]
        }
        CommutatorId::BoxL | CommutatorId::BoxLb => {
            let s = if id == CommutatorId::BoxL { 1.0 } else { -1.0 };
            let along_u = id == CommutatorId::BoxLb;
            let lhs = sum(vec![ops.wave(ops.diff(f.clone(), along_u)), neg(ops.diff(ops.wave(f.clone()), along_u))]);
            let rhs = sum(vec![
                ops.scale(ops.l(f.clone()), move |p| s * (p.eta - p.mu) / (p.r * p.r)),
                ops.scale(ops.lb(f.clone()), move |p| -s * (p.eta - p.mu) / (p.r * p.r)),
                ops.scale(ops.lap(f.clone()), move |p| s * (2.0 * p.eta - p.mu) / p.r),
                ops.scale(ops.wave(f), move |p| s * p.mu / p.r),
            ]);
            vec![sum(vec![lhs, neg(rhs)])]
        }
        CommutatorId::LY => vec![sum(vec![
            ops.l(ops.y(f.clone())),
            neg(ops.y(ops.l(f.clone()))),
            ops.scale(ops.y(f), |p| p.mu / p.r),
        ])],
        CommutatorId::LbY => vec![sum(vec![
            ops.lb(ops.y(f.clone())),
            neg(ops.y(ops.lb(f.clone()))),
            ops.scale(ops.y(f), |p| -p.mu / p.r),
        ])],
        CommutatorId::LbNab => vec![sum(vec![
            ops.lb(ops.nabla(f.clone())),
            neg(ops.nabla(ops.lb(f.clone()))),
            ops.scale(ops.nabla(f), |p| -p.eta / p.r),
        ])],
        CommutatorId::LNab => vec![sum(vec![
            ops.l(ops.nabla(f.clone())),
            neg(ops.nabla(ops.l(f.clone()))),
            ops.scale(ops.nabla(f), |p| p.eta / p.r),
        ])],
        CommutatorId::OmBox => (1..=3)
            .map(|i| sum(vec![ops.wave(ops.omega(f.clone(), i)), neg(ops.omega(ops.wave(f.clone()), i))]))
            .collect(),
    };
    let mut worst: f64 = 0.0;
    for &(u, ub) in &probe.points {
        for res in &residuals {
            worst = res(u, ub)?.iter().fold(worst, |a, v| a.max(v.abs()));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub id: String,
    pub probe: String,
    pub steps: Vec<f64>,
    pub residuals: Vec<f64>,
    /// log₂ of successive residual ratios; infinite when both sit at roundoff.
    pub orders: Vec<f64>,
    pub min_order: f64,
}

/// Residuals below this are treated as roundoff in order estimates.
pub const ROUNDOFF_FLOOR: f64 = 1e-10;

/// Residuals at h, h/2, …, with `levels` halvings, and the observed orders.
pub fn commutator_order(id: CommutatorId, psi: &TestFunction, h0: f64, levels: usize, probe: &CommutatorProbe) -> Result<OrderReport> {
    let steps: Vec<f64> = (0..=levels).map(|k| h0 / 2f64.powi(k as i32)).collect();
    let residuals = steps
        .iter()
        .map(|&h| commutator_residual(id, psi, h, probe))
        .collect::<Result<Vec<_>>>()?;
    let orders: Vec<f64> = residuals
        .windows(2)
        .map(|w| {
            if w[0] < ROUNDOFF_FLOOR && w[1] < ROUNDOFF_FLOOR {
                f64::INFINITY
            } else {
                (w[0] / w[1]).log2()
            }
        })
        .collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(OrderReport {
        id: id.name().into(),
        probe: psi.label.clone(),
        steps,
        residuals,
        orders,
        min_order,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SobolevId {
    /// ‖ψ‖_∞ ≲ r^{-1/2}‖ψ‖₄ + r^{1/2}‖∇̸ψ‖₄ on a sphere.
    S2Inf,
    /// ‖ψ‖_p ≲ r^{2/p}(r⁻¹‖ψ‖₂ + ‖∇̸ψ‖₂) on a sphere.
    S2Lp,
    /// r^{1/2}‖ψ‖_{L⁴(S)} ≲ ‖Lψ‖^{1/2}(‖ψ‖^{1/2} + ‖r∇̸ψ‖^{1/2}) over C_u.
    Cu,
    /// The same with η^{1/2} inside every norm.
    CuDeg,
    /// ‖ψ‖₄ ≲ r^{-1/2}‖ψ‖₂ + r^{1/2}‖∇̸ψ‖₂ on a sphere.
    S2L4,
}

impl SobolevId {
    pub const ALL: [SobolevId; 5] = [SobolevId::S2Inf, SobolevId::S2Lp, SobolevId::Cu, SobolevId::CuDeg, SobolevId::S2L4];

    pub fn name(self) -> &'static str {
        match self {
            SobolevId::S2Inf => "S2_inf",
            SobolevId::S2Lp => "S2_Lp",
            SobolevId::Cu => "Cu",
            SobolevId::CuDeg => "Cu_deg",
            SobolevId::S2L4 => "S2_L4",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown Sobolev id {s:?}")))
    }
}

/// Geometry and resolution of the Sobolev probes.
#[derive(Debug, Clone)]
pub struct SobolevContext {
    pub bg: Background,
    /// Sphere radius for the sphere inequalities.
    pub radius: f64,
    /// (u, ū) at which probes are sampled for the sphere inequalities.
    pub sphere_point: (f64, f64),
    /// The cone C_u with ū ∈ [0, ub_end].
    pub cone_u: f64,
    pub ub_end: f64,
    /// Scales the node counts of the sphere and cone quadratures.
    pub resolution: usize,
    /// Exponent of the L^p inequality.
    pub p: u32,
}

impl SobolevContext {
    pub fn standard(bg: Background, resolution: usize) -> Self {
        SobolevContext {
            bg,
            radius: 1.0,
            sphere_point: (0.0, 0.5),
            cone_u: -5.0,
            ub_end: 1.0,
            resolution: resolution.max(1),
            p: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevReport {
    pub id: String,
    pub max_ratio: f64,
    /// (probe label, ratio)
    pub samples: Vec<(String, f64)>,
}

fn ratio(lhs: f64, rhs: f64) -> Result<f64> {
    if rhs == 0.0 {
        if lhs == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::Violation(lhs));
    }
    Ok(lhs / rhs)
}

/// Values and |∇̸| on a sphere of radius r (unit-sphere gradient / r).
struct SphereSample {
    v: Vec<f64>,
    grad: Vec<f64>,
}

fn sample_sphere(grid: &SphereGrid, psi: &TestFunction, u: f64, ub: f64, r: f64) -> SphereSample {
    let nn = grid.nnodes();
    let v: Vec<f64> = (0..nn)
        .map(|n| {
            let (th, ph) = grid.node(n);
            psi.eval(u, ub, th, ph)
        })
        .collect();
    let mut c = vec![0.0; grid.ncoef()];
    grid.analyze(&v, &mut c);
    let (mut a, mut b) = (vec![0.0; nn], vec![0.0; nn]);
    grid.synthesize_gradient(&c, &mut a, &mut b);
    let grad = a.iter().zip(&b).map(|(x, y)| (x * x + y * y).sqrt() / r).collect();
    SphereSample { v, grad }
}

/// (∫|f|^p r² dσ)^{1/p}
fn lp(grid: &SphereGrid, f: &[f64], p: f64, r: f64) -> f64 {
    let vals: Vec<f64> = f.iter().map(|x| x.abs().powf(p)).collect();
    (r * r * grid.integrate(&vals)).powf(1.0 / p)
}

/// Sphere grid fine enough to integrate |ψ|⁸ exactly for band limit `lmax`.
fn quadrature_grid(lmax: usize, resolution: usize) -> Result<SphereGrid> {
    let l = lmax.max(1);
    SphereGrid::with_nodes(l, resolution * (4 * l + 2), resolution * (8 * l + 2))
}

pub fn sobolev_ratio(id: SobolevId, samples: &[TestFunction], ctx: &SobolevContext) -> Result<SobolevReport> {
    let lmax = samples.iter().map(|s| s.lmax).max().unwrap_or(0);
    let grid = quadrature_grid(lmax, ctx.resolution)?;
    let mut out = Vec::with_capacity(samples.len());
    for psi in samples {
        let rat = match id {
            SobolevId::S2Inf | SobolevId::S2Lp | SobolevId::S2L4 => {
                let r = ctx.radius;
                let (u, ub) = ctx.sphere_point;
                let s = sample_sphere(&grid, psi, u, ub, r);
                let (lhs, rhs) = match id {
                    SobolevId::S2Inf => (
                        s.v.iter().fold(0.0f64, |a, x| a.max(x.abs())),
                        r.powf(-0.5) * lp(&grid, &s.v, 4.0, r) + r.sqrt() * lp(&grid, &s.grad, 4.0, r),
                    ),
                    SobolevId::S2Lp => {
                        let p = ctx.p as f64;
                        (
                            lp(&grid, &s.v, p, r),
                            r.powf(2.0 / p) * (lp(&grid, &s.v, 2.0, r) / r + lp(&grid, &s.grad, 2.0, r)),
                        )
                    }
                    _ => (
                        lp(&grid, &s.v, 4.0, r),
                        r.powf(-0.5) * lp(&grid, &s.v, 2.0, r) + r.sqrt() * lp(&grid, &s.grad, 2.0, r),
                    ),
                };
                ratio(lhs, rhs)?
            }
            SobolevId::Cu | SobolevId::CuDeg => cone_ratio(id == SobolevId::CuDeg, &grid, psi, ctx)?,
        };
        out.push((psi.label.clone(), rat));
    }
    let max_ratio = out.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(SobolevReport {
        id: id.name().into(),
        max_ratio,
        samples: out,
    })
}

/// Max over spheres S_{ū,u} ⊂ C_u of LHS/RHS, with the cone norms taken over
/// C_u ∩ {0 ≤ ū' ≤ ū}. Probes must vanish on ū = 0.
fn cone_ratio(degenerate: bool, grid: &SphereGrid, psi: &TestFunction, ctx: &SobolevContext) -> Result<f64> {
    let n = 32 * ctx.resolution;
    let dub = ctx.ub_end / n as f64;
    let u = ctx.cone_u;
    let hd = 1e-4 * ctx.ub_end;
    let (mut c_l, mut c_psi, mut c_nab) = (0.0, 0.0, 0.0);
    let mut prev: Option<(f64, f64, f64)> = None;
    let mut worst: f64 = 0.0;
    for j in 0..=n {
        let ub = j as f64 * dub;
        let p = ctx.bg.point(u, ub)?;
        let r = p.r;
        let w = if degenerate { p.eta } else { 1.0 };
        let s = sample_sphere(grid, psi, u, ub, r);
        let l: Vec<f64> = (0..grid.nnodes())
            .map(|k| {
                let (th, ph) = grid.node(k);
                let f = |x: f64| psi.eval(u, x, th, ph);
                (f(ub - 2.0 * hd) - 8.0 * f(ub - hd) + 8.0 * f(ub + hd) - f(ub + 2.0 * hd)) / (12.0 * hd)
            })
            .collect();
        let sq = |f: &[f64], a: f64| w * r * r * grid.integrate(&f.iter().map(|x| a * a * x * x).collect::<Vec<_>>());
        let dens = (sq(&l, 1.0), sq(&s.v, 1.0), sq(&s.grad, r));
        if let Some(pv) = prev {
            c_l += 0.5 * dub * (pv.0 + dens.0);
            c_psi += 0.5 * dub * (pv.1 + dens.1);
            c_nab += 0.5 * dub * (pv.2 + dens.2);
        }
        prev = Some(dens);
        if j == 0 {
            continue;
        }
        let weighted: Vec<f64> = s.v.iter().map(|x| w.sqrt() * x).collect();
        let lhs = r.sqrt() * lp(grid, &weighted, 4.0, r);
        let rhs = c_l.sqrt().sqrt() * (c_psi.sqrt().sqrt() + c_nab.sqrt().sqrt());
        worst = worst.max(ratio(lhs, rhs)?);
    }
    Ok(worst)
}

/// Seeded band-limited probes a(ū) Σ c_ℓm Y_ℓm with a(0) = 0.
pub fn random_samples(n: usize, lmax: usize, seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|s| {
            let coeffs: Vec<(usize, i64, f64)> = (0..=lmax)
                .flat_map(|l| (-(l as i64)..=(l as i64)).map(move |m| (l, m)))
                .map(|(l, m)| (l, m, rng.gen_range(-1.0..1.0)))
                .collect();
            let omega = rng.gen_range(0.5..4.0);
            let decay = rng.gen_range(0.0..2.0);
            TestFunction::new(format!("random#{s}"), lmax, Smoothness::Analytic, move |_, ub, th, ph| {
                let a = (omega * ub).sin() * (-decay * ub).exp();
                a * harmonic_sum(&coeffs, th, ph)
            })
        })
        .collect()
}

/// Smallest empirical order accepted for a commutator identity.
pub const ORDER_BAR: f64 = 1.8;
/// Residual bound for the [Ω, □] identity, which is exact in the angular sector.
pub const OMEGA_BOX_BAR: f64 = 1e-10;
/// Allowed relative change of a Sobolev max ratio between two resolutions.
pub const STABILITY_BAR: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub order: OrderReport,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SobolevCheck {
    pub id: String,
    pub coarse: f64,
    pub fine: f64,
    pub relative_change: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub commutators: Vec<IdentityCheck>,
    pub sobolev: Vec<SobolevCheck>,
    /// S2_inf ratio of ψ ≡ 1 on the unit sphere, (4π)^{-1/4} exactly.
    pub constant_sphere_ratio: f64,
    pub pass: bool,
}

/// Gaussian in r* times Y₁₀, the smooth probe of the commutator checks.
pub fn gaussian_probe() -> TestFunction {
    TestFunction::separable("exp(-r*^2) Y10", 1, 0, |u, ub| (-(ub - u).powi(2)).exp())
}

/// Every commutator at h0, h0/2, h0/4, h0/8 on Schwarzschild (m = 1), and
/// every Sobolev ratio over `n_samples` seeded probes at resolutions 1 and 2.
pub fn standard_suite(h0: f64, n_samples: usize, seed: u64) -> Result<VerifyReport> {
    let bg = Background::schwarzschild(1.0)?;
    let probe = CommutatorProbe::standard(bg, 1, 16, seed)?;
    let psi = gaussian_probe();
    let commutators = CommutatorId::ALL
        .iter()
        .map(|&id| {
            let order = commutator_order(id, &psi, h0, 3, &probe)?;
            let pass = if id == CommutatorId::OmBox {
                order.residuals.iter().all(|r| *r < OMEGA_BOX_BAR)
            } else {
                order.min_order >= ORDER_BAR
            };
            Ok(IdentityCheck { order, pass })
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = random_samples(n_samples, 3, seed);
    let sobolev = SobolevId::ALL
        .iter()
        .map(|&id| {
            let coarse = sobolev_ratio(id, &samples, &SobolevContext::standard(bg, 1))?.max_ratio;
            let fine = sobolev_ratio(id, &samples, &SobolevContext::standard(bg, 2))?.max_ratio;
            let relative_change = (coarse - fine).abs() / fine;
            Ok(SobolevCheck {
                id: id.name().into(),
                coarse,
                fine,
                relative_change,
                pass: coarse.is_finite() && fine.is_finite() && relative_change < STABILITY_BAR,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let constant_sphere_ratio =
        sobolev_ratio(SobolevId::S2Inf, &[TestFunction::constant(1.0)], &SobolevContext::standard(bg, 1))?.max_ratio;
    let pass = commutators.iter().all(|c| c.pass)
        && sobolev.iter().all(|c| c.pass)
        && (constant_sphere_ratio - (4.0 * std::f64::consts::PI).powf(-0.25)).abs() < 1e-6;
    Ok(VerifyReport {
        commutators,
        sobolev,
        constant_sphere_ratio,
        pass,
    })
}
