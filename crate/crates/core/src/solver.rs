//! Double-null characteristic integrator for
//! L L̄ φ = η(△̸φ + Lφ/r − L̄φ/r − Q(∂φ, ∂φ)).
//!
//! The lattice is stored in spherical-harmonic coefficients, one block of
//! `ncoef` values per (u_i, ū_j) node, row-major in i.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::angular::{SphereGrid, SphereSpec};
use crate::data::CharacteristicData;
use crate::error::{Error, Result};
use crate::geometry::{Background, NullPoint};
use crate::nullforms::{eval_null_form, Coords, GradientSample, NullFormSpec};

pub const DEFAULT_ETA_MIN: f64 = 1e-6;
pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct NullGrid {
    u0: f64,
    u_end: f64,
    ub_end: f64,
    nu: usize,
    nub: usize,
    sphere: Arc<SphereGrid>,
    eta_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullGridSpec {
    pub u0: f64,
    pub u_end: f64,
    pub ub_end: f64,
    pub nu: usize,
    pub nub: usize,
    pub sphere: SphereSpec,
    pub eta_min: f64,
}

impl NullGrid {
    /// Rectangle [u0, u_end] × [0, ub_end] with `nu` × `nub` cells.
    pub fn new(u0: f64, u_end: f64, ub_end: f64, nu: usize, nub: usize, sphere: Arc<SphereGrid>, eta_min: f64) -> Result<Self> {
        if !(u0 < u_end) || !u0.is_finite() || !u_end.is_finite() {
            return Err(Error::Config(format!("need u0 < u_end, got [{u0}, {u_end}]")));
        }
        if !(ub_end > 0.0) || !ub_end.is_finite() {
            return Err(Error::Config(format!("ub range must be positive, got {ub_end}")));
        }
        if nu < 8 || nub < 8 {
            return Err(Error::Resolution(format!(
                "need at least 8 cells per direction, got {nu} x {nub}"
            )));
        }
        if !(eta_min > 0.0 && eta_min < 1.0) {
            return Err(Error::Config(format!("eta_min must lie in (0, 1), got {eta_min}")));
        }
        Ok(NullGrid {
            u0,
            u_end,
            ub_end,
            nu,
            nub,
            sphere,
            eta_min,
        })
    }

    pub fn from_spec(spec: &NullGridSpec) -> Result<Self> {
        let sphere = Arc::new(SphereGrid::from_spec(spec.sphere)?);
        Self::new(spec.u0, spec.u_end, spec.ub_end, spec.nu, spec.nub, sphere, spec.eta_min)
    }

    pub fn spec(&self) -> NullGridSpec {
        NullGridSpec {
            u0: self.u0,
            u_end: self.u_end,
            ub_end: self.ub_end,
            nu: self.nu,
            nub: self.nub,
            sphere: self.sphere.spec(),
            eta_min: self.eta_min,
        }
    }

    /// Same rectangle with both cell counts multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(
            self.u0,
            self.u_end,
            self.ub_end,
            self.nu * factor,
            self.nub * factor,
            self.sphere.clone(),
            self.eta_min,
        )
    }

    pub fn u0(&self) -> f64 {
        self.u0
    }
    pub fn u_end(&self) -> f64 {
        self.u_end
    }
    pub fn ub_end(&self) -> f64 {
        self.ub_end
    }
    pub fn nu(&self) -> usize {
        self.nu
    }
    pub fn nub(&self) -> usize {
        self.nub
    }
    pub fn eta_min(&self) -> f64 {
        self.eta_min
    }
    pub fn sphere(&self) -> &SphereGrid {
        &self.sphere
    }
    pub fn sphere_arc(&self) -> Arc<SphereGrid> {
        self.sphere.clone()
    }
    pub fn du(&self) -> f64 {
        (self.u_end - self.u0) / self.nu as f64
    }
    pub fn dub(&self) -> f64 {
        self.ub_end / self.nub as f64
    }
    pub fn u(&self, i: usize) -> f64 {
        self.u0 + i as f64 * self.du()
    }
    pub fn ub(&self, j: usize) -> f64 {
        j as f64 * self.dub()
    }
    /// Index of the u node nearest to `u`.
    pub fn u_index(&self, u: f64) -> usize {
        (((u - self.u0) / self.du()).round().max(0.0) as usize).min(self.nu)
    }
    pub fn ub_index(&self, ub: f64) -> usize {
        ((ub / self.dub()).round().max(0.0) as usize).min(self.nub)
    }
}

/// Local state entering the right-hand side at one point and one sphere node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalState {
    pub phi: f64,
    pub lphi: f64,
    pub lbphi: f64,
    pub lap_phi: f64,
    /// Orthonormal components of ∇̸φ.
    pub angular: [f64; 2],
    pub theta: f64,
    pub phi_angle: f64,
}

/// L L̄ φ = η(△̸φ + Lφ/r − L̄φ/r − Q(∂φ, ∂φ)).
pub fn characteristic_rhs(point: &NullPoint, state: &LocalState, spec: &NullFormSpec, eta_min: f64) -> Result<f64> {
    if point.eta < eta_min {
        return Err(Error::Capped {
            u: point.u,
            ub: point.ub,
        });
    }
    let g = GradientSample {
        lpsi: state.lphi,
        lbpsi: state.lbphi,
        angular: state.angular,
        eta: point.eta,
    };
    let at = Coords {
        u: point.u,
        ub: point.ub,
        theta: state.theta,
        phi: state.phi_angle,
    };
    let q = eval_null_form(spec, &g, &g, &at)?;
    Ok(point.eta * (state.lap_phi + (state.lphi - state.lbphi) / point.r - q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeGeometry {
    pub r: f64,
    pub offset: f64,
    pub mu: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupReport {
    pub u: f64,
    pub ub: f64,
    pub i: usize,
    pub j: usize,
    /// (u, sup |φ|) for every completed outgoing cone.
    pub sup_history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    /// |φ| beyond this counts as blowup alongside non-finite values.
    pub blowup_threshold: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Field {
    grid: NullGrid,
    bg: Background,
    phi: Vec<f64>,
    dphi_du: Vec<f64>,
    dphi_dub: Vec<f64>,
    cap_mask: Vec<bool>,
    geom: Vec<NodeGeometry>,
    /// Set only by the integrator, so □φ = Q holds to truncation error.
    evolved: bool,
}

fn node_geometry(grid: &NullGrid, bg: &Background) -> Result<Vec<NodeGeometry>> {
    let mut geom = Vec::with_capacity((grid.nu + 1) * (grid.nub + 1));
    for i in 0..=grid.nu {
        for j in 0..=grid.nub {
            let p = bg.point(grid.u(i), grid.ub(j))?;
            geom.push(NodeGeometry {
                r: p.r,
                offset: p.offset,
                mu: p.mu,
                eta: p.eta,
            });
        }
    }
    Ok(geom)
}

/// Capped nodes: η below the cap, or any past neighbour capped. The result
/// is closed under increasing u and ū.
fn cap_mask(grid: &NullGrid, geom: &[NodeGeometry]) -> Vec<bool> {
    let w = grid.nub + 1;
    let mut mask = vec![false; geom.len()];
    for i in 0..=grid.nu {
        for j in 0..=grid.nub {
            let mut c = geom[i * w + j].eta < grid.eta_min;
            if i > 0 {
                c |= mask[(i - 1) * w + j];
            }
            if j > 0 {
                c |= mask[i * w + j - 1];
            }
            mask[i * w + j] = c;
        }
    }
    mask
}

/// Fourth-order first derivative along a strided line of `n` samples;
/// shorter lines fall back to lower order.
fn fd_line(f: &dyn Fn(usize) -> f64, n: usize, h: f64, out: &mut dyn FnMut(usize, f64)) {
    if n == 0 {
        return;
    }
    if n == 1 {
        out(0, 0.0);
        return;
    }
    if n < 5 {
        for p in 0..n {
            let d = if p == 0 {
                (f(1) - f(0)) / h
            } else if p == n - 1 {
                (f(n - 1) - f(n - 2)) / h
            } else {
                (f(p + 1) - f(p - 1)) / (2.0 * h)
            };
            out(p, d);
        }
        return;
    }
    for p in 0..n {
        let d = if p == 0 {
            -25.0 * f(0) + 48.0 * f(1) - 36.0 * f(2) + 16.0 * f(3) - 3.0 * f(4)
        } else if p == 1 {
            -3.0 * f(0) - 10.0 * f(1) + 18.0 * f(2) - 6.0 * f(3) + f(4)
        } else if p == n - 2 {
            3.0 * f(n - 1) + 10.0 * f(n - 2) - 18.0 * f(n - 3) + 6.0 * f(n - 4) - f(n - 5)
        } else if p == n - 1 {
            25.0 * f(n - 1) - 48.0 * f(n - 2) + 36.0 * f(n - 3) - 16.0 * f(n - 4) + 3.0 * f(n - 5)
        } else {
            f(p - 2) - 8.0 * f(p - 1) + 8.0 * f(p + 1) - f(p + 2)
        };
        out(p, d / (12.0 * h));
    }
}

impl Field {
    /// Builds a field from a coefficient lattice; derivative lattices are
    /// taken by fourth-order differences.
    pub fn from_phi(grid: NullGrid, bg: Background, phi: Vec<f64>) -> Result<Self> {
        let nc = grid.sphere.ncoef();
        let npts = (grid.nu + 1) * (grid.nub + 1);
        if phi.len() != npts * nc {
            return Err(Error::Config(format!(
                "lattice has {} values, grid needs {}",
                phi.len(),
                npts * nc
            )));
        }
        let geom = node_geometry(&grid, &bg)?;
        let cap = cap_mask(&grid, &geom);
        let mut f = Field {
            grid,
            bg,
            phi,
            dphi_du: vec![0.0; npts * nc],
            dphi_dub: vec![0.0; npts * nc],
            cap_mask: cap,
            geom,
            evolved: false,
        };
        f.differentiate();
        Ok(f)
    }

    /// Builds a field from explicit value and derivative lattices.
    pub fn from_lattices(grid: NullGrid, bg: Background, phi: Vec<f64>, dphi_du: Vec<f64>, dphi_dub: Vec<f64>) -> Result<Self> {
        let nc = grid.sphere.ncoef();
        let n = (grid.nu + 1) * (grid.nub + 1) * nc;
        if phi.len() != n || dphi_du.len() != n || dphi_dub.len() != n {
            return Err(Error::Config(format!("lattices must hold {n} values")));
        }
        let geom = node_geometry(&grid, &bg)?;
        let cap = cap_mask(&grid, &geom);
        Ok(Field {
            grid,
            bg,
            phi,
            dphi_du,
            dphi_dub,
            cap_mask: cap,
            geom,
            evolved: false,
        })
    }

    /// Same grid and mask with new lattices; skips the geometry rebuild.
    pub fn with_lattices(&self, phi: Vec<f64>, dphi_du: Option<(Vec<f64>, Vec<f64>)>) -> Field {
        let mut f = Field {
            grid: self.grid.clone(),
            bg: self.bg,
            dphi_du: vec![0.0; phi.len()],
            dphi_dub: vec![0.0; phi.len()],
            phi,
            cap_mask: self.cap_mask.clone(),
            geom: self.geom.clone(),
            evolved: false,
        };
        match dphi_du {
            Some((du, dub)) => {
                f.dphi_du = du;
                f.dphi_dub = dub;
            }
            None => f.differentiate(),
        }
        f
    }

    pub fn lbphi_lattice(&self) -> &[f64] {
        &self.dphi_du
    }

    pub fn lphi_lattice(&self) -> &[f64] {
        &self.dphi_dub
    }

    /// Builds a field whose values and derivatives are given in closed form:
    /// `f(u, ub)` returns coefficient vectors (φ, L̄φ, Lφ).
    pub fn from_closed_form<F>(grid: NullGrid, bg: Background, f: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> (Vec<f64>, Vec<f64>, Vec<f64>),
    {
        let nc = grid.sphere.ncoef();
        let npts = (grid.nu + 1) * (grid.nub + 1);
        let geom = node_geometry(&grid, &bg)?;
        let cap = cap_mask(&grid, &geom);
        let (mut phi, mut du, mut dub) = (Vec::with_capacity(npts * nc), Vec::with_capacity(npts * nc), Vec::with_capacity(npts * nc));
        for i in 0..=grid.nu {
            for j in 0..=grid.nub {
                let (a, b, c) = f(grid.u(i), grid.ub(j));
                if a.len() != nc || b.len() != nc || c.len() != nc {
                    return Err(Error::Config("closed form returned wrong coefficient count".into()));
                }
                phi.extend(a);
                du.extend(b);
                dub.extend(c);
            }
        }
        Ok(Field {
            grid,
            bg,
            phi,
            dphi_du: du,
            dphi_dub: dub,
            cap_mask: cap,
            geom,
            evolved: false,
        })
    }

    fn differentiate(&mut self) {
        let nc = self.grid.sphere.ncoef();
        let (nu, nub) = (self.grid.nu, self.grid.nub);
        let w = nub + 1;
        let (du, dub) = (self.grid.du(), self.grid.dub());
        let phi = &self.phi;
        for i in 0..=nu {
            let n = (0..=nub).take_while(|&j| !self.cap_mask[i * w + j]).count();
            for k in 0..nc {
                let out = &mut self.dphi_dub;
                fd_line(&|p| phi[(i * w + p) * nc + k], n, dub, &mut |p, d| out[(i * w + p) * nc + k] = d);
            }
        }
        for j in 0..=nub {
            let n = (0..=nu).take_while(|&i| !self.cap_mask[i * w + j]).count();
            for k in 0..nc {
                let out = &mut self.dphi_du;
                fd_line(&|p| phi[(p * w + j) * nc + k], n, du, &mut |p, d| out[(p * w + j) * nc + k] = d);
            }
        }
    }

    pub fn grid(&self) -> &NullGrid {
        &self.grid
    }

    pub fn is_solver_output(&self) -> bool {
        self.evolved
    }

    pub fn background(&self) -> &Background {
        &self.bg
    }

    pub fn ncoef(&self) -> usize {
        self.grid.sphere.ncoef()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.grid.nub + 1) + j
    }

    pub fn phi(&self, i: usize, j: usize) -> &[f64] {
        let nc = self.ncoef();
        let p = self.idx(i, j) * nc;
        &self.phi[p..p + nc]
    }

    /// L̄φ = ∂_u φ.
    pub fn lbphi(&self, i: usize, j: usize) -> &[f64] {
        let nc = self.ncoef();
        let p = self.idx(i, j) * nc;
        &self.dphi_du[p..p + nc]
    }

    /// Lφ = ∂_ū φ.
    pub fn lphi(&self, i: usize, j: usize) -> &[f64] {
        let nc = self.ncoef();
        let p = self.idx(i, j) * nc;
        &self.dphi_dub[p..p + nc]
    }

    pub fn phi_lattice(&self) -> &[f64] {
        &self.phi
    }

    pub fn is_capped(&self, i: usize, j: usize) -> bool {
        self.cap_mask[self.idx(i, j)]
    }

    pub fn cap_mask(&self) -> &[bool] {
        &self.cap_mask
    }

    pub fn any_capped(&self) -> bool {
        self.cap_mask.iter().any(|c| *c)
    }

    /// True when the whole outgoing cone C_{u_i} is uncapped.
    pub fn cone_uncapped(&self, i: usize) -> bool {
        !self.is_capped(i, self.grid.nub)
    }

    pub fn geometry(&self, i: usize, j: usize) -> NodeGeometry {
        self.geom[self.idx(i, j)]
    }

    pub fn point(&self, i: usize, j: usize) -> NullPoint {
        let g = self.geometry(i, j);
        let (u, ub) = (self.grid.u(i), self.grid.ub(j));
        NullPoint {
            u,
            ub,
            r: g.r,
            offset: g.offset,
            rstar: ub - u,
            mu: g.mu,
            eta: g.eta,
        }
    }

    /// Nodal values of a coefficient block.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.grid.sphere.nnodes()];
        self.grid.sphere.synthesize(coeffs, &mut v);
        v
    }

    pub fn sup_abs_phi(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for i in 0..=self.grid.nu {
            for j in 0..=self.grid.nub {
                if !self.is_capped(i, j) {
                    sup = self.synthesize(self.phi(i, j)).iter().fold(sup, |a, v| a.max(v.abs()));
                }
            }
        }
        sup
    }

    /// Binary (little-endian f64) or CSV dump of the φ lattice plus a JSON
    /// header `<base>.json`.
    pub fn write_checkpoint(&self, base: &Path, mut header: serde_json::Value, binary: bool) -> Result<()> {
        if let Some(dir) = base.parent() {
            fs::create_dir_all(dir)?;
        }
        if let serde_json::Value::Object(map) = &mut header {
            map.insert("grid".into(), serde_json::to_value(self.grid.spec())?);
            map.insert("background".into(), serde_json::to_value(self.bg)?);
            map.insert("layout".into(), serde_json::json!("phi[(i*(nub+1)+j)*ncoef + k], real harmonic coefficients"));
            map.insert("format".into(), serde_json::json!(if binary { "f64le" } else { "csv" }));
        }
        fs::write(base.with_extension("json"), serde_json::to_string_pretty(&header)?)?;
        if binary {
            let mut w = BufWriter::new(fs::File::create(base.with_extension("bin"))?);
            for v in &self.phi {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()?;
        } else {
            let mut wr = csv::Writer::from_path(base.with_extension("csv"))?;
            wr.write_record(["u", "ub", "k", "value"])?;
            let nc = self.ncoef();
            for i in 0..=self.grid.nu {
                for j in 0..=self.grid.nub {
                    for (k, v) in self.phi(i, j).iter().enumerate() {
                        wr.write_record(&[
                            self.grid.u(i).to_string(),
                            self.grid.ub(j).to_string(),
                            k.to_string(),
                            format!("{v:e}"),
                        ])?;
                    }
                    debug_assert_eq!(self.phi(i, j).len(), nc);
                }
            }
            wr.flush()?;
        }
        Ok(())
    }
}

struct Scratch {
    phi_c: Vec<f64>,
    l_c: Vec<f64>,
    lb_c: Vec<f64>,
    lv: Vec<f64>,
    lbv: Vec<f64>,
    dth: Vec<f64>,
    dph: Vec<f64>,
    qv: Vec<f64>,
    qk: Vec<f64>,
    rhs: Vec<f64>,
}

impl Scratch {
    fn new(sphere: &SphereGrid) -> Self {
        let (nc, nn) = (sphere.ncoef(), sphere.nnodes());
        Scratch {
            phi_c: vec![0.0; nc],
            l_c: vec![0.0; nc],
            lb_c: vec![0.0; nc],
            lv: vec![0.0; nn],
            lbv: vec![0.0; nn],
            dth: vec![0.0; nn],
            dph: vec![0.0; nn],
            qv: vec![0.0; nn],
            qk: vec![0.0; nc],
            rhs: vec![0.0; nc],
        }
    }
}

/// Coefficient-space right-hand side at a cell centre from its four corners.
#[allow(clippy::too_many_arguments)]
fn cell_rhs(
    sphere: &SphereGrid,
    spec: &NullFormSpec,
    c: &NullPoint,
    du: f64,
    dub: f64,
    s: &[f64],
    w: &[f64],
    e: &[f64],
    n: &[f64],
    sc: &mut Scratch,
) -> Result<()> {
    let nc = s.len();
    for k in 0..nc {
        sc.phi_c[k] = 0.25 * (s[k] + w[k] + e[k] + n[k]);
        sc.l_c[k] = 0.5 * ((e[k] - s[k]) + (n[k] - w[k])) / dub;
        sc.lb_c[k] = 0.5 * ((w[k] - s[k]) + (n[k] - e[k])) / du;
    }
    let r = c.r;
    for k in 0..nc {
        sc.rhs[k] = c.eta * (sphere.eigenvalue(k) * sc.phi_c[k] / (r * r) + (sc.l_c[k] - sc.lb_c[k]) / r);
    }
    if spec.is_linear() {
        return Ok(());
    }
    sphere.synthesize(&sc.l_c, &mut sc.lv);
    sphere.synthesize(&sc.lb_c, &mut sc.lbv);
    sphere.synthesize_gradient(&sc.phi_c, &mut sc.dth, &mut sc.dph);
    for node in 0..sphere.nnodes() {
        let (theta, phi) = sphere.node(node);
        let g = GradientSample {
            lpsi: sc.lv[node],
            lbpsi: sc.lbv[node],
            angular: [sc.dth[node] / r, sc.dph[node] / r],
            eta: c.eta,
        };
        let at = Coords {
            u: c.u,
            ub: c.ub,
            theta,
            phi,
        };
        sc.qv[node] = eval_null_form(spec, &g, &g, &at)?;
    }
    sphere.analyze(&sc.qv, &mut sc.qk);
    for k in 0..nc {
        sc.rhs[k] -= c.eta * sc.qk[k];
    }
    Ok(())
}

pub fn evolve(grid: &NullGrid, data: &CharacteristicData, spec: &NullFormSpec, bg: &Background) -> Result<Field> {
    evolve_with(grid, data, spec, bg, EvolveOptions::default())
}

/// Diamond scheme, one predictor and one corrector evaluation per cell.
pub fn evolve_with(grid: &NullGrid, data: &CharacteristicData, spec: &NullFormSpec, bg: &Background, opts: EvolveOptions) -> Result<Field> {
    let (nu, nub) = (grid.nu, grid.nub);
    let sphere = grid.sphere();
    let nc = sphere.ncoef();
    if data.outgoing.len() != nub + 1 || data.incoming.len() != nu + 1 {
        return Err(Error::Config(format!(
            "data has {} outgoing / {} incoming spheres, grid needs {} / {}",
            data.outgoing.len(),
            data.incoming.len(),
            nub + 1,
            nu + 1
        )));
    }
    if data.outgoing.iter().chain(&data.incoming).any(|f| f.coeffs.len() != nc) {
        return Err(Error::Config("data band limit differs from the grid's".into()));
    }
    let corner = data.outgoing[0]
        .coeffs
        .iter()
        .zip(&data.incoming[0].coeffs)
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    if corner > 1e-14 {
        return Err(Error::Config(format!("data violate corner compatibility by {corner:e}")));
    }
    let geom = node_geometry(grid, bg)?;
    let cap = cap_mask(grid, &geom);
    let w = nub + 1;
    let mut phi = vec![0.0; (nu + 1) * w * nc];
    for j in 0..=nub {
        phi[j * nc..(j + 1) * nc].copy_from_slice(&data.outgoing[j].coeffs);
    }
    for i in 0..=nu {
        phi[i * w * nc..i * w * nc + nc].copy_from_slice(&data.incoming[i].coeffs);
    }
    let (du, dub) = (grid.du(), grid.dub());
    let mut sc = Scratch::new(sphere);
    let (mut base, mut pred) = (vec![0.0; nc], vec![0.0; nc]);
    let mut history = Vec::with_capacity(nu + 1);
    let row_sup = |phi: &[f64], i: usize, sc: &mut Scratch| {
        let mut sup: f64 = 0.0;
        for j in 0..=nub {
            if cap[i * w + j] {
                continue;
            }
            sphere.synthesize(&phi[(i * w + j) * nc..(i * w + j + 1) * nc], &mut sc.qv);
            sup = sc.qv.iter().fold(sup, |a, v| a.max(v.abs()));
        }
        sup
    };
    history.push((grid.u(0), row_sup(&phi, 0, &mut sc)));
    for i in 0..nu {
        for j in 0..nub {
            let n_idx = (i + 1) * w + j + 1;
            if cap[n_idx] {
                continue;
            }
            let (s_idx, e_idx) = (i * w + j, i * w + j + 1);
            let centre = bg.point(grid.u(i) + 0.5 * du, grid.ub(j) + 0.5 * dub)?;
            let (past, future) = phi.split_at_mut((i + 1) * w * nc);
            let s = &past[s_idx * nc..(s_idx + 1) * nc];
            let e = &past[e_idx * nc..(e_idx + 1) * nc];
            let (wrow, nrow) = future.split_at_mut((j + 1) * nc);
            let wv = &wrow[j * nc..(j + 1) * nc];
            for k in 0..nc {
                base[k] = wv[k] + e[k] - s[k];
            }
            cell_rhs(sphere, spec, &centre, du, dub, s, wv, e, &base, &mut sc)?;
            for k in 0..nc {
                pred[k] = base[k] + du * dub * sc.rhs[k];
            }
            cell_rhs(sphere, spec, &centre, du, dub, s, wv, e, &pred, &mut sc)?;
            let nv = &mut nrow[..nc];
            let mut bad = false;
            for k in 0..nc {
                nv[k] = base[k] + du * dub * sc.rhs[k];
                bad |= !nv[k].is_finite() || nv[k].abs() > opts.blowup_threshold;
            }
            if bad {
                return Err(Error::Blowup(Box::new(BlowupReport {
                    u: grid.u(i + 1),
                    ub: grid.ub(j + 1),
                    i: i + 1,
                    j: j + 1,
                    sup_history: history,
                })));
            }
        }
        history.push((grid.u(i + 1), row_sup(&phi, i + 1, &mut sc)));
    }
    let npts = (nu + 1) * w;
    let mut f = Field {
        grid: grid.clone(),
        bg: *bg,
        phi,
        dphi_du: vec![0.0; npts * nc],
        dphi_dub: vec![0.0; npts * nc],
        cap_mask: cap,
        geom,
        evolved: true,
    };
    f.differentiate();
    Ok(f)
}

/// Exact flat-space solution with trivial incoming data:
/// φ(u, ū) = ((ū − u₀)/(ū − u)) · φ(u₀, ū), valid for the ℓ = 0 mode.
pub fn minkowski_reference(data: &CharacteristicData, grid: &NullGrid) -> Result<Field> {
    let src = data
        .source
        .clone()
        .ok_or_else(|| Error::Config("exact reference needs closed-form pulse data".into()))?;
    if src.angular.iter().skip(1).any(|c| *c != 0.0) {
        return Err(Error::Config("exact reference covers spherically symmetric data only".into()));
    }
    if grid.ub(0) - grid.u_end() <= 0.0 {
        return Err(Error::Domain(format!(
            "flat radius ub - u must stay positive, reaches {}",
            grid.ub(0) - grid.u_end()
        )));
    }
    let u0 = data.u0;
    let a0 = src.angular[0];
    let nc = grid.sphere().ncoef();
    Field::from_closed_form(grid.clone(), Background::minkowski(), move |u, ub| {
        let g = src.radial(ub);
        let dg = src.radial_derivative(ub);
        let r = ub - u;
        let ratio = (ub - u0) / r;
        let mut phi = vec![0.0; nc];
        let mut lb = vec![0.0; nc];
        let mut l = vec![0.0; nc];
        phi[0] = a0 * ratio * g;
        lb[0] = a0 * (ub - u0) * g / (r * r);
        l[0] = a0 * (g * (u0 - u) / (r * r) + ratio * dg);
        (phi, lb, l)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{short_pulse_boundary, PulseProfile};

    fn flat_grid(n: usize) -> NullGrid {
        NullGrid::new(-10.0, -1.0, 0.1, n, n, Arc::new(SphereGrid::new(0)), DEFAULT_ETA_MIN).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let bg = Background::schwarzschild(1.0).unwrap();
        // r = 4 sits at r* = 4 + 2 ln 2 − 3
        let rs = bg.tortoise(4.0).unwrap();
        let p = bg.point(0.0, rs).unwrap();
        let st = LocalState {
            lphi: 1.0,
            lbphi: p.eta,
            ..Default::default()
        };
        let v = characteristic_rhs(&p, &st, &NullFormSpec::Q0, DEFAULT_ETA_MIN).unwrap();
        assert!((v - 0.5625).abs() < 1e-12);
        let st = LocalState {
            phi: 3.7,
            ..Default::default()
        };
        assert_eq!(characteristic_rhs(&p, &st, &NullFormSpec::Q0, DEFAULT_ETA_MIN).unwrap(), 0.0);
        let deep = bg.point(40.0, 0.0).unwrap();
        assert!(matches!(
            characteristic_rhs(&deep, &st, &NullFormSpec::Q0, DEFAULT_ETA_MIN),
            Err(Error::Capped { .. })
        ));
    }

    #[test]
    fn grid_invariants() {
        let s = Arc::new(SphereGrid::new(0));
        assert!(NullGrid::new(1.0, 0.0, 0.1, 8, 8, s.clone(), 1e-6).is_err());
        assert!(NullGrid::new(0.0, 1.0, 0.0, 8, 8, s.clone(), 1e-6).is_err());
        assert!(matches!(NullGrid::new(0.0, 1.0, 0.1, 7, 8, s, 1e-6), Err(Error::Resolution(_))));
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let g = flat_grid(16);
        let bg = Background::schwarzschild(1.0).unwrap();
        let p = PulseProfile {
            amplitude: 0.0,
            ..Default::default()
        };
        let d = short_pulse_boundary(-10.0, 0.1, &p, &g).unwrap();
        for spec in [NullFormSpec::Q0, NullFormSpec::NonNullL2, NullFormSpec::Linear] {
            let f = evolve(&g, &d, &spec, &bg).unwrap();
            assert!(f.phi_lattice().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn reference_examples() {
        let g = NullGrid::new(-10.0, -2.0, 0.04, 8, 8, Arc::new(SphereGrid::new(0)), DEFAULT_ETA_MIN).unwrap();
        let d = short_pulse_boundary(-10.0, 0.04, &PulseProfile::default(), &g).unwrap();
        let f = minkowski_reference(&d, &g).unwrap();
        for j in 0..=8 {
            assert!((f.phi(0, j)[0] - d.outgoing[j].coeffs[0]).abs() < 1e-16);
        }
        for i in 0..=8 {
            assert_eq!(f.phi(i, 0)[0], 0.0);
        }
        let src = d.source.clone().unwrap();
        let at = src.radial(0.02) * src.angular[0];
        let want = 10.02 / 2.02 * at;
        let j = g.ub_index(0.02);
        let i = g.u_index(-2.0);
        assert!((f.phi(i, j)[0] - want).abs() < 1e-15);
    }

    #[test]
    fn minkowski_error_is_second_order() {
        let bg = Background::minkowski();
        let mut errs = Vec::new();
        for n in [32, 64, 128] {
            let g = flat_grid(n);
            let d = short_pulse_boundary(-10.0, 0.1, &PulseProfile::default(), &g).unwrap();
            let f = evolve(&g, &d, &NullFormSpec::Linear, &bg).unwrap();
            let ex = minkowski_reference(&d, &g).unwrap();
            let e = f
                .phi_lattice()
                .iter()
                .zip(ex.phi_lattice())
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            errs.push(e);
        }
        let o1 = (errs[0] / errs[1]).log2();
        let o2 = (errs[1] / errs[2]).log2();
        assert!((o1 - 2.0).abs() < 0.3 && (o2 - 2.0).abs() < 0.3, "{errs:?}");
    }

    #[test]
    fn fd_line_exact_on_quartics() {
        let f = |p: usize| (p as f64 * 0.1).powi(4);
        let mut worst: f64 = 0.0;
        fd_line(&f, 9, 0.1, &mut |p, d| {
            let x = p as f64 * 0.1;
            worst = worst.max((d - 4.0 * x.powi(3)).abs());
        });
        assert!(worst < 1e-12);
    }
}
