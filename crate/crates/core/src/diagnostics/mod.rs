//! Energy functionals, sphere norms, multiplier currents and sup profiles
//! evaluated on an evolved [`Field`].
//!
//! Cone integrals use the trapezoid rule in the running null coordinate and
//! exact sphere quadrature (Parseval in the real harmonic basis), so every
//! functional is a nonnegative combination of squared coefficients.

mod identity;
mod le;
mod multiplier;
mod profiles;

pub use identity::{energy_identity_residual, IdentityResidual};
pub use le::{le_norm, LeReport};
pub use multiplier::{
    coefficients_of, current_coefficients, deformation_contraction_l, multiplier_current, reduce, CurrentCoefficients, MultiplierName,
    MultiplierSpec, QModifier, Reduction,
};
pub use profiles::{sup_profiles, write_profiles_csv, SupProfile, SupWeights};

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::japanese;
use crate::solver::Field;

/// Largest total number of commutations (Ω-depth plus one flux derivative).
pub const MAX_COMMUTATION: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConeKind {
    /// C_{u_i}: fixed u, running ū.
    Outgoing,
    /// C̄_{ū_j}: fixed ū, running u.
    Incoming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Measure {
    /// r² d(running) dσ.
    #[default]
    Degenerate,
    /// η r² du dσ on incoming cones; identical to the degenerate measure on
    /// outgoing ones.
    NonDegenerate,
}

/// A segment of a null cone in index space: `index` labels the fixed
/// coordinate, `range` the inclusive span of the running one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub kind: ConeKind,
    pub index: usize,
    pub range: (usize, usize),
    pub measure: Measure,
}

impl ConeSpec {
    pub fn outgoing(i: usize, j0: usize, j1: usize) -> Self {
        ConeSpec {
            kind: ConeKind::Outgoing,
            index: i,
            range: (j0, j1),
            measure: Measure::Degenerate,
        }
    }

    pub fn incoming(j: usize, i0: usize, i1: usize) -> Self {
        ConeSpec {
            kind: ConeKind::Incoming,
            index: j,
            range: (i0, i1),
            measure: Measure::Degenerate,
        }
    }

    /// The whole outgoing cone C_{u_i}.
    pub fn full_outgoing(field: &Field, i: usize) -> Self {
        Self::outgoing(i, 0, field.grid().nub())
    }

    /// The uncapped part of the incoming cone C̄_{ū_j}.
    pub fn full_incoming(field: &Field, j: usize) -> Self {
        let n = (0..=field.grid().nu()).take_while(|&i| !field.is_capped(i, j)).count();
        Self::incoming(j, 0, n.saturating_sub(1))
    }

    pub fn with_measure(mut self, measure: Measure) -> Self {
        self.measure = measure;
        self
    }

    fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.range.0..=self.range.1).map(move |p| match self.kind {
            ConeKind::Outgoing => (self.index, p),
            ConeKind::Incoming => (p, self.index),
        })
    }

    fn check(&self, field: &Field) -> Result<()> {
        let g = field.grid();
        let (fixed_max, run_max) = match self.kind {
            ConeKind::Outgoing => (g.nu(), g.nub()),
            ConeKind::Incoming => (g.nub(), g.nu()),
        };
        if self.index > fixed_max || self.range.1 > run_max || self.range.0 > self.range.1 {
            return Err(Error::Domain(format!("cone {self:?} lies outside the grid")));
        }
        for (i, j) in self.nodes() {
            if field.is_capped(i, j) {
                return Err(Error::Capped {
                    u: g.u(i),
                    ub: g.ub(j),
                });
            }
        }
        Ok(())
    }

    fn step(&self, field: &Field) -> f64 {
        match self.kind {
            ConeKind::Outgoing => field.grid().dub(),
            ConeKind::Incoming => field.grid().du(),
        }
    }
}

/// Trapezoid weight of position `p` in the inclusive span `[a, b]`.
pub(crate) fn trapezoid(p: usize, a: usize, b: usize, h: f64) -> f64 {
    if a == b {
        0.0
    } else if p == a || p == b {
        0.5 * h
    } else {
        h
    }
}

/// Inclusive index rectangle [i0, i1] × [j0, j1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl Rect {
    pub fn new(i0: usize, i1: usize, j0: usize, j1: usize) -> Self {
        Rect { i0, i1, j0, j1 }
    }

    /// The largest uncapped rectangle anchored at the data corner.
    pub fn uncapped(field: &Field) -> Self {
        let g = field.grid();
        let mut i1 = g.nu();
        while i1 > 0 && field.is_capped(i1, g.nub()) {
            i1 -= 1;
        }
        Rect::new(0, i1, 0, g.nub())
    }

    fn check(&self, field: &Field) -> Result<()> {
        let g = field.grid();
        if self.i0 > self.i1 || self.j0 > self.j1 || self.i1 > g.nu() || self.j1 > g.nub() {
            return Err(Error::Domain(format!("rectangle {self:?} lies outside the grid")));
        }
        // capped sets are closed toward the future, so the far corner decides
        if field.is_capped(self.i1, self.j1) {
            return Err(Error::Capped {
                u: g.u(self.i1),
                ub: g.ub(self.j1),
            });
        }
        Ok(())
    }

    pub(crate) fn weight(&self, field: &Field, i: usize, j: usize) -> f64 {
        let g = field.grid();
        trapezoid(i, self.i0, self.i1, g.du()) * trapezoid(j, self.j0, self.j1, g.dub())
    }
}

/// Sphere integrals of the squared quantities of one field at one node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SphereSums {
    pub psi2: f64,
    pub l2: f64,
    pub lb2: f64,
    /// ∫|∇̸ψ|² dσ on the unit-sphere measure, i.e. Σ ℓ(ℓ+1)c²/r².
    pub nab2: f64,
}

impl SphereSums {
    pub fn at(field: &Field, i: usize, j: usize) -> Self {
        let sphere = field.grid().sphere();
        let r = field.geometry(i, j).r;
        let (phi, l, lb) = (field.phi(i, j), field.lphi(i, j), field.lbphi(i, j));
        let mut s = SphereSums::default();
        for k in 0..phi.len() {
            s.psi2 += phi[k] * phi[k];
            s.l2 += l[k] * l[k];
            s.lb2 += lb[k] * lb[k];
            s.nab2 -= sphere.eigenvalue(k) * phi[k] * phi[k];
        }
        s.nab2 /= r * r;
        s
    }

    fn add(&mut self, o: &SphereSums) {
        self.psi2 += o.psi2;
        self.l2 += o.l2;
        self.lb2 += o.lb2;
        self.nab2 += o.nab2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SphereNormKind {
    /// r² ∫|L̄ψ|² dσ.
    Chib,
    /// r² ∫|∇̸ψ|² dσ.
    Omega,
    /// r³ ∫|Lψ|² dσ.
    Chi,
    /// ∫|ψ|² dσ.
    H,
}

impl SphereNormKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "chib" => SphereNormKind::Chib,
            "omega" => SphereNormKind::Omega,
            "chi" => SphereNormKind::Chi,
            "h" => SphereNormKind::H,
            _ => return Err(Error::Config(format!("unknown sphere norm {s:?}"))),
        })
    }
}

fn grid_index(x: f64, x0: f64, h: f64, n: usize, what: &str) -> Result<usize> {
    let p = (x - x0) / h;
    let k = p.round();
    if (p - k).abs() > 1e-9 || k < 0.0 || k > n as f64 {
        return Err(Error::Domain(format!("{what} = {x} is not a grid node")));
    }
    Ok(k as usize)
}

pub fn sphere_norm(kind: SphereNormKind, field: &Field, u: f64, ub: f64) -> Result<f64> {
    let g = field.grid();
    let i = grid_index(u, g.u0(), g.du(), g.nu(), "u")?;
    let j = grid_index(ub, 0.0, g.dub(), g.nub(), "ub")?;
    if field.is_capped(i, j) {
        return Err(Error::Capped { u, ub });
    }
    let s = SphereSums::at(field, i, j);
    let r = field.geometry(i, j).r;
    Ok(match kind {
        SphereNormKind::Chib => r * r * s.lb2,
        SphereNormKind::Omega => r * r * s.nab2,
        SphereNormKind::Chi => r * r * r * s.l2,
        SphereNormKind::H => s.psi2,
    })
}

/// A single commutation applied to a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    L,
    Lb,
    Y,
    /// S̃ = ⟨u⟩ L̄.
    S,
    /// Rotation Ω_i, i ∈ {1, 2, 3}.
    Omega(u8),
}

fn apply_op(f: &Field, op: Op) -> Field {
    let g = f.grid();
    let nc = f.ncoef();
    let w = g.nub() + 1;
    match op {
        Op::Omega(a) => {
            let sphere = g.sphere();
            let rot = |src: &[f64]| {
                let mut out = vec![0.0; src.len()];
                for (blk, o) in src.chunks(nc).zip(out.chunks_mut(nc)) {
                    sphere.rotate_coeffs(a as usize, blk, o);
                }
                out
            };
            // Ω commutes with ∂_u and ∂_ū, so the derivative lattices rotate too
            f.with_lattices(rot(f.phi_lattice()), Some((rot(f.lbphi_lattice()), rot(f.lphi_lattice()))))
        }
        Op::L => f.with_lattices(f.lphi_lattice().to_vec(), None),
        Op::Lb => f.with_lattices(f.lbphi_lattice().to_vec(), None),
        Op::Y | Op::S => {
            let mut phi = f.lbphi_lattice().to_vec();
            for (node, blk) in phi.chunks_mut(nc).enumerate() {
                let (i, j) = (node / w, node % w);
                let s = if f.is_capped(i, j) {
                    0.0
                } else if op == Op::Y {
                    1.0 / f.geometry(i, j).eta
                } else {
                    japanese(g.u(i))
                };
                blk.iter_mut().for_each(|v| *v *= s);
            }
            f.with_lattices(phi, None)
        }
    }
}

/// Lazily built commuted fields Op_n ⋯ Op_1 φ, shared between diagnostics.
pub struct DerivedCache<'a> {
    base: &'a Field,
    cache: Mutex<HashMap<Vec<Op>, Arc<Field>>>,
}

impl<'a> DerivedCache<'a> {
    pub fn new(base: &'a Field) -> Self {
        DerivedCache {
            base,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn base(&self) -> &Field {
        self.base
    }

    /// The field obtained by applying `word` left to right.
    pub fn get(&self, word: &[Op]) -> Arc<Field> {
        if word.is_empty() {
            return Arc::new(self.base.clone());
        }
        if let Some(f) = self.cache.lock().unwrap().get(word) {
            return f.clone();
        }
        let parent = if word.len() == 1 {
            None
        } else {
            Some(self.get(&word[..word.len() - 1]))
        };
        let src = parent.as_deref().unwrap_or(self.base);
        let out = Arc::new(apply_op(src, word[word.len() - 1]));
        self.cache.lock().unwrap().insert(word.to_vec(), out.clone());
        out
    }

    fn with_word<T>(&self, word: &[Op], f: impl FnOnce(&Field) -> T) -> T {
        if word.is_empty() {
            f(self.base)
        } else {
            f(&self.get(word))
        }
    }
}

/// All Ω-words of length ≤ k; only the empty word when the band limit is 0,
/// since rotations annihilate constants.
pub fn omega_words(k: usize, lmax: usize) -> Vec<Vec<Op>> {
    let mut out = vec![Vec::new()];
    if lmax == 0 {
        return out;
    }
    let mut layer = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for w in &layer {
            for a in 1..=3u8 {
                let mut v = w.clone();
                v.push(Op::Omega(a));
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Named cone functionals. Densities are written for ψ = Ω^w φ summed over
/// words of length ≤ k, with D the kind's commutator applied to ψ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnergyKind {
    /// |Lψ|² + δ⁻¹|∇̸ψ|² on C_u.
    E,
    /// |∇̸ψ|² + δ⁻¹|L̄ψ|² on C̄_ū.
    Ebar,
    /// δ²|L²ψ|² + δ|∇̸Lψ|² on C_u.
    LF,
    /// δ²|∇̸Lψ|² + δ|L̄Lψ|² on C̄_ū.
    LFbar,
    /// δ⁻¹|∇̸S̃ψ|² on C_u.
    SF,
    /// δ⁻¹|L̄S̃ψ|² on C̄_ū.
    SFbar,
    /// ⟨u⟩²(δ⁻²|L̄ψ|² + |L̄Lψ|²) on C_u.
    TF,
    /// η(|Lψ|² + δ⁻¹|∇̸ψ|²) on C_u.
    Edeg,
    /// δ⁻¹|L̄ψ|² + η²|∇̸ψ|² on C̄_ū.
    EbarDeg,
    /// |Lψ|² + δ⁻¹|∇̸ψ|² on C_u.
    Endeg,
    /// δ⁻¹η⁻¹|L̄ψ|² + η|∇̸ψ|² on C̄_ū.
    EbarNdeg,
    /// E^deg of δLψ.
    LFdeg,
    /// E^ndeg of δLψ.
    LFndeg,
    /// η(|YLψ|² + δ⁻²|Yψ|²) on C_u.
    TFdeg,
    /// |YLψ|² + δ⁻¹|Yψ|² on C_u.
    TFndeg,
    /// E^deg of L̄ψ.
    LbFdeg,
    /// E^ndeg of Yψ.
    YFndeg,
    /// Ē^deg of δLψ.
    LFbarDeg,
    /// Ē^ndeg of δLψ.
    LFbarNdeg,
    /// Ē^deg of L̄ψ.
    LbFbarDeg,
    /// Ē^ndeg of Yψ.
    YFbarNdeg,
}

impl EnergyKind {
    pub const ALL: [EnergyKind; 21] = [
        EnergyKind::E,
        EnergyKind::Ebar,
        EnergyKind::LF,
        EnergyKind::LFbar,
        EnergyKind::SF,
        EnergyKind::SFbar,
        EnergyKind::TF,
        EnergyKind::Edeg,
        EnergyKind::EbarDeg,
        EnergyKind::Endeg,
        EnergyKind::EbarNdeg,
        EnergyKind::LFdeg,
        EnergyKind::LFndeg,
        EnergyKind::TFdeg,
        EnergyKind::TFndeg,
        EnergyKind::LbFdeg,
        EnergyKind::YFndeg,
        EnergyKind::LFbarDeg,
        EnergyKind::LFbarNdeg,
        EnergyKind::LbFbarDeg,
        EnergyKind::YFbarNdeg,
    ];

    pub fn cone(self) -> ConeKind {
        use EnergyKind::*;
        match self {
            E | LF | SF | TF | Edeg | Endeg | LFdeg | LFndeg | TFdeg | TFndeg | LbFdeg | YFndeg => ConeKind::Outgoing,
            Ebar | LFbar | SFbar | EbarDeg | EbarNdeg | LFbarDeg | LFbarNdeg | LbFbarDeg | YFbarNdeg => {
                ConeKind::Incoming
            }
        }
    }

    pub fn commutator(self) -> Option<Op> {
        use EnergyKind::*;
        match self {
            E | Ebar | Edeg | EbarDeg | Endeg | EbarNdeg => None,
            LF | LFbar | TF | LFdeg | LFndeg | TFdeg | TFndeg | LFbarDeg | LFbarNdeg => Some(Op::L),
            SF | SFbar => Some(Op::S),
            LbFdeg | LbFbarDeg => Some(Op::Lb),
            YFndeg | YFbarNdeg => Some(Op::Y),
        }
    }

    pub fn name(self) -> &'static str {
        use EnergyKind::*;
        match self {
            E => "E",
            Ebar => "Ebar",
            LF => "LF",
            LFbar => "LFbar",
            SF => "SF",
            SFbar => "SFbar",
            TF => "tF",
            Edeg => "Edeg",
            EbarDeg => "Ebar_deg",
            Endeg => "Endeg",
            EbarNdeg => "Ebar_ndeg",
            LFdeg => "LF_deg",
            LFndeg => "LF_ndeg",
            TFdeg => "tF_deg",
            TFndeg => "tF_ndeg",
            LbFdeg => "LbF_deg",
            YFndeg => "YF_ndeg",
            LFbarDeg => "LFbar_deg",
            LFbarNdeg => "LFbar_ndeg",
            LbFbarDeg => "LbFbar_deg",
            YFbarNdeg => "YFbar_ndeg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown energy kind {s:?}")))
    }

    /// Density per r² d(running) dσ, with ψ the base and c the commuted sums.
    fn density(self, psi: &SphereSums, c: &SphereSums, delta: f64, eta: f64, u: f64) -> f64 {
        use EnergyKind::*;
        let d = delta;
        match self {
            E | Endeg => psi.l2 + psi.nab2 / d,
            Ebar => psi.nab2 + psi.lb2 / d,
            LF | LFndeg => d * d * c.l2 + d * c.nab2,
            LFbar => d * d * c.nab2 + d * c.lb2,
            SF => c.nab2 / d,
            SFbar => c.lb2 / d,
            TF => {
                let w = 1.0 + u * u;
                w * (psi.lb2 / (d * d) + c.lb2)
            }
            Edeg => eta * (psi.l2 + psi.nab2 / d),
            EbarDeg => psi.lb2 / d + eta * eta * psi.nab2,
            EbarNdeg => psi.lb2 / (d * eta) + eta * psi.nab2,
            LFdeg => eta * (d * d * c.l2 + d * c.nab2),
            TFdeg => eta * (c.lb2 + psi.lb2 / (d * d)) / (eta * eta),
            TFndeg => (c.lb2 + psi.lb2 / d) / (eta * eta),
            LbFdeg => eta * (c.l2 + c.nab2 / d),
            YFndeg => c.l2 + c.nab2 / d,
            LFbarDeg => d * c.lb2 + eta * eta * d * d * c.nab2,
            LFbarNdeg => d * c.lb2 / eta + eta * d * d * c.nab2,
            LbFbarDeg => c.lb2 / d + eta * eta * c.nab2,
            YFbarNdeg => c.lb2 / (d * eta) + eta * c.nab2,
        }
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    Ok(())
}

fn check_depth(commutator: Option<Op>, k: usize) -> Result<()> {
    let total = k + commutator.map_or(0, |_| 1);
    if total > MAX_COMMUTATION {
        return Err(Error::Config(format!(
            "commutation depth {total} exceeds the supported {MAX_COMMUTATION}"
        )));
    }
    Ok(())
}

/// Per-node sums of ψ = φ_k and of its commuted partner, summed over all
/// Ω-words of length ≤ k.
fn commuted_sums(cache: &DerivedCache, commutator: Option<Op>, k: usize, nodes: &[(usize, usize)]) -> Vec<(SphereSums, SphereSums)> {
    let lmax = cache.base().grid().sphere().lmax();
    let mut out = vec![(SphereSums::default(), SphereSums::default()); nodes.len()];
    for w in omega_words(k, lmax) {
        cache.with_word(&w, |f| {
            for (o, &(i, j)) in out.iter_mut().zip(nodes) {
                o.0.add(&SphereSums::at(f, i, j));
            }
        });
        if let Some(op) = commutator {
            let mut wc = w.clone();
            wc.push(op);
            let f = cache.get(&wc);
            for (o, &(i, j)) in out.iter_mut().zip(nodes) {
                o.1.add(&SphereSums::at(&f, i, j));
            }
        }
    }
    out
}

/// The named functional on a cone segment, for ψ = φ_k.
pub fn cone_energy(kind: EnergyKind, field: &Field, cone: &ConeSpec, delta: f64, k: usize) -> Result<f64> {
    cone_energy_cached(kind, &DerivedCache::new(field), cone, delta, k)
}

pub fn cone_energy_cached(kind: EnergyKind, cache: &DerivedCache, cone: &ConeSpec, delta: f64, k: usize) -> Result<f64> {
    let field = cache.base();
    check_delta(delta)?;
    if kind.cone() != cone.kind {
        return Err(Error::Config(format!(
            "{} lives on {:?} cones, got {:?}",
            kind.name(),
            kind.cone(),
            cone.kind
        )));
    }
    check_depth(kind.commutator(), k)?;
    cone.check(field)?;
    let nodes: Vec<_> = cone.nodes().collect();
    let sums = commuted_sums(cache, kind.commutator(), k, &nodes);
    let h = cone.step(field);
    let mut total = 0.0;
    for (p, (&(i, j), (psi, c))) in (cone.range.0..).zip(nodes.iter().zip(&sums)) {
        let geo = field.geometry(i, j);
        let mut w = trapezoid(p, cone.range.0, cone.range.1, h) * geo.r * geo.r;
        if cone.measure == Measure::NonDegenerate && cone.kind == ConeKind::Incoming {
            w *= geo.eta;
        }
        total += w * kind.density(psi, c, delta, geo.eta, field.grid().u(i));
    }
    Ok(total)
}

/// Pointwise quantities whose squared cone norms are exposed directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Phi,
    L,
    Lb,
    Y,
    Nabla,
}

/// ‖q‖²_{L²} of φ on a cone segment, with the cone's measure.
pub fn cone_l2_sq(q: Quantity, field: &Field, cone: &ConeSpec) -> Result<f64> {
    cone.check(field)?;
    let h = cone.step(field);
    let mut total = 0.0;
    for (p, (i, j)) in (cone.range.0..).zip(cone.nodes()) {
        let geo = field.geometry(i, j);
        let s = SphereSums::at(field, i, j);
        let v = match q {
            Quantity::Phi => s.psi2,
            Quantity::L => s.l2,
            Quantity::Lb => s.lb2,
            Quantity::Y => s.lb2 / (geo.eta * geo.eta),
            Quantity::Nabla => s.nab2,
        };
        let mut w = trapezoid(p, cone.range.0, cone.range.1, h) * geo.r * geo.r;
        if cone.measure == Measure::NonDegenerate && cone.kind == ConeKind::Incoming {
            w *= geo.eta;
        }
        total += w * v;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntegratedKind {
    /// δ⁻¹|L̄ψ|² + δ⁻¹|∇̸ψ|² + |Lψ|², weighted by η.
    Sdeg,
    /// δ⁻¹|Yψ|² + δ⁻¹|∇̸ψ|² + |Lψ|², weighted by η.
    Sndeg,
    /// S^deg of δLψ.
    LSdeg,
    /// S^deg of L̄ψ.
    LbSdeg,
    /// S^ndeg of δLψ.
    LSndeg,
    /// S^ndeg of Yψ.
    YSndeg,
}

impl IntegratedKind {
    pub const ALL: [IntegratedKind; 6] = [
        IntegratedKind::Sdeg,
        IntegratedKind::Sndeg,
        IntegratedKind::LSdeg,
        IntegratedKind::LbSdeg,
        IntegratedKind::LSndeg,
        IntegratedKind::YSndeg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IntegratedKind::Sdeg => "Sdeg",
            IntegratedKind::Sndeg => "Sndeg",
            IntegratedKind::LSdeg => "LSdeg",
            IntegratedKind::LbSdeg => "LbSdeg",
            IntegratedKind::LSndeg => "LSndeg",
            IntegratedKind::YSndeg => "YSndeg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown integrated energy {s:?}")))
    }

    fn commutator(self) -> Option<Op> {
        match self {
            IntegratedKind::Sdeg | IntegratedKind::Sndeg => None,
            IntegratedKind::LSdeg | IntegratedKind::LSndeg => Some(Op::L),
            IntegratedKind::LbSdeg => Some(Op::Lb),
            IntegratedKind::YSndeg => Some(Op::Y),
        }
    }

    fn density(self, psi: &SphereSums, c: &SphereSums, delta: f64, eta: f64) -> f64 {
        let deg = |s: &SphereSums, a: f64| a * a * (s.lb2 / delta + s.nab2 / delta + s.l2);
        let ndeg = |s: &SphereSums, a: f64| a * a * (s.lb2 / (eta * eta * delta) + s.nab2 / delta + s.l2);
        eta * match self {
            IntegratedKind::Sdeg => deg(psi, 1.0),
            IntegratedKind::Sndeg => ndeg(psi, 1.0),
            IntegratedKind::LSdeg => deg(c, delta),
            IntegratedKind::LbSdeg => deg(c, 1.0),
            IntegratedKind::LSndeg => ndeg(c, delta),
            IntegratedKind::YSndeg => ndeg(c, 1.0),
        }
    }
}

/// Trapezoid quadrature of a per-node density over a rectangle with the
/// measure r² du dū dσ; the density already carries any η weight.
pub fn rectangle_quadrature(field: &Field, rect: &Rect, density: impl Fn(usize, usize) -> f64) -> Result<f64> {
    rect.check(field)?;
    let mut total = 0.0;
    for i in rect.i0..=rect.i1 {
        for j in rect.j0..=rect.j1 {
            let r = field.geometry(i, j).r;
            total += rect.weight(field, i, j) * r * r * density(i, j);
        }
    }
    Ok(total)
}

pub fn integrated_energy(kind: IntegratedKind, field: &Field, rect: &Rect, delta: f64, k: usize) -> Result<f64> {
    integrated_energy_cached(kind, &DerivedCache::new(field), rect, delta, k)
}

pub fn integrated_energy_cached(kind: IntegratedKind, cache: &DerivedCache, rect: &Rect, delta: f64, k: usize) -> Result<f64> {
    let field = cache.base();
    check_delta(delta)?;
    check_depth(kind.commutator(), k)?;
    rect.check(field)?;
    let nodes: Vec<_> = (rect.i0..=rect.i1)
        .flat_map(|i| (rect.j0..=rect.j1).map(move |j| (i, j)))
        .collect();
    let sums = commuted_sums(cache, kind.commutator(), k, &nodes);
    let w = rect.j1 - rect.j0 + 1;
    let total = rectangle_quadrature(field, rect, |i, j| {
        let (psi, c) = &sums[(i - rect.i0) * w + (j - rect.j0)];
        kind.density(psi, c, delta, field.geometry(i, j).eta)
    })?;
    if total < 0.0 {
        return Err(Error::Violation(total));
    }
    Ok(total)
}

/// One row of a per-cone table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    /// u for outgoing kinds, ū for incoming ones.
    pub coord: f64,
    pub kind: String,
    pub order: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EnergyReport {
    pub delta: f64,
    pub rows: Vec<EnergyRow>,
    /// Named scalar results, such as identity residuals and integrated energies.
    pub scalars: Vec<(String, f64)>,
    pub metadata: serde_json::Value,
}

impl EnergyReport {
    /// Tabulates every requested kind on every uncapped cone (whole
    /// outgoing cones and the uncapped part of each incoming cone).
    pub fn tabulate(field: &Field, kinds: &[EnergyKind], delta: f64, k: usize) -> Result<Self> {
        let cache = DerivedCache::new(field);
        let g = field.grid();
        let mut rows = Vec::new();
        for &kind in kinds {
            match kind.cone() {
                ConeKind::Outgoing => {
                    for i in (0..=g.nu()).take_while(|&i| field.cone_uncapped(i)) {
                        let cone = ConeSpec::full_outgoing(field, i);
                        rows.push(EnergyRow {
                            coord: g.u(i),
                            kind: kind.name().into(),
                            order: k,
                            value: cone_energy_cached(kind, &cache, &cone, delta, k)?,
                        });
                    }
                }
                ConeKind::Incoming => {
                    for j in 0..=g.nub() {
                        let cone = ConeSpec::full_incoming(field, j);
                        rows.push(EnergyRow {
                            coord: g.ub(j),
                            kind: kind.name().into(),
                            order: k,
                            value: cone_energy_cached(kind, &cache, &cone, delta, k)?,
                        });
                    }
                }
            }
        }
        if let Some(bad) = rows.iter().find(|r| !r.value.is_finite()) {
            return Err(Error::Domain(format!("{} is not finite at {}", bad.kind, bad.coord)));
        }
        Ok(EnergyReport {
            delta,
            rows,
            scalars: Vec::new(),
            metadata: serde_json::Value::Null,
        })
    }

    pub fn series(&self, kind: EnergyKind) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.kind == kind.name())
            .map(|r| (r.coord, r.value))
            .collect()
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// Columns: coord, kind, order, value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["coord", "kind", "order", "value"])?;
        for r in &self.rows {
            wr.write_record(&[r.coord.to_string(), r.kind.clone(), r.order.to_string(), format!("{:e}", r.value)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
