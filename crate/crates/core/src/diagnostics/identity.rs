//! Discrete check of the multiplier energy identity on a grid rectangle
//!
//! F(C_{u₁}) + F(C̄_{ū₁}) = F(C_{u₀}) + F(C̄_{ū₀}) − 2∬(K + Q·(Xψ + qψ)) η r² du dū dσ,
//!
//! with F(C_u) = ∫ (T(L, X) + qψLψ − ½Lq ψ²) r² dū dσ and likewise on C̄_ū with
//! L̄. The residual of a solver output shrinks with the truncation error.

use serde::Serialize;

use super::multiplier::{coefficients_of, reduce, MultiplierSpec};
use super::{trapezoid, Rect};
use crate::error::{Error, Result};
use crate::nullforms::{eval_null_form, Coords, GradientSample, NullFormSpec};
use crate::solver::Field;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct IdentityResidual {
    pub absolute: f64,
    /// |residual| over the sum of the absolute boundary fluxes.
    pub relative: f64,
    pub future_outgoing: f64,
    pub future_incoming: f64,
    pub past_outgoing: f64,
    pub past_incoming: f64,
    pub bulk: f64,
    pub warnings: Vec<String>,
}

/// Flux and bulk densities at one node, before the r² and quadrature weights.
struct NodeTerms {
    out_flux: f64,
    in_flux: f64,
    bulk: f64,
}

struct Buffers {
    phi: Vec<f64>,
    l: Vec<f64>,
    lb: Vec<f64>,
    dth: Vec<f64>,
    dph: Vec<f64>,
}

fn node_terms(field: &Field, spec: &MultiplierSpec, q_spec: &NullFormSpec, i: usize, j: usize, buf: &mut Buffers) -> Result<NodeTerms> {
    let sphere = field.grid().sphere();
    let p = field.point(i, j);
    let red = reduce(spec, &p)?;
    let c = coefficients_of(&red, &p);
    let (phi, l, lb) = (field.phi(i, j), field.lphi(i, j), field.lbphi(i, j));
    let r = p.r;
    let (mut l2, mut lb2, mut llb, mut nab2, mut psi2, mut psi_l, mut psi_lb) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..phi.len() {
        l2 += l[k] * l[k];
        lb2 += lb[k] * lb[k];
        llb += l[k] * lb[k];
        nab2 -= sphere.eigenvalue(k) * phi[k] * phi[k] / (r * r);
        psi2 += phi[k] * phi[k];
        psi_l += phi[k] * l[k];
        psi_lb += phi[k] * lb[k];
    }
    let q = red.q.unwrap_or_default();
    let k_int = c.l2 * l2 + c.lb2 * lb2 + c.nab2 * nab2 + c.cross * llb + c.psi2 * psi2;
    let mut source = 0.0;
    if !q_spec.is_linear() {
        sphere.synthesize(phi, &mut buf.phi);
        sphere.synthesize(l, &mut buf.l);
        sphere.synthesize(lb, &mut buf.lb);
        sphere.synthesize_gradient(phi, &mut buf.dth, &mut buf.dph);
        let w = sphere.weights();
        for node in 0..sphere.nnodes() {
            let (theta, ph) = sphere.node(node);
            let g = GradientSample {
                lpsi: buf.l[node],
                lbpsi: buf.lb[node],
                angular: [buf.dth[node] / r, buf.dph[node] / r],
                eta: p.eta,
            };
            let at = Coords {
                u: p.u,
                ub: p.ub,
                theta,
                phi: ph,
            };
            let qv = eval_null_form(q_spec, &g, &g, &at)?;
            source += w[node] * qv * (red.f1 * g.lpsi + red.f2 * g.lbpsi + q.q * buf.phi[node]);
        }
    }
    Ok(NodeTerms {
        out_flux: red.f1 * l2 + red.f2 * p.eta * nab2 + q.q * psi_l - 0.5 * q.q_ub * psi2,
        in_flux: red.f1 * p.eta * nab2 + red.f2 * lb2 + q.q * psi_lb - 0.5 * q.q_u * psi2,
        bulk: -2.0 * (k_int + source) * p.eta,
    })
}

pub fn energy_identity_residual(field: &Field, spec: &MultiplierSpec, rect: &Rect, q_spec: &NullFormSpec) -> Result<IdentityResidual> {
    rect.check(field)?;
    if rect.i0 == rect.i1 || rect.j0 == rect.j1 {
        return Err(Error::Domain(format!("rectangle {rect:?} has no interior")));
    }
    let mut warnings = Vec::new();
    if !field.is_solver_output() {
        warnings.push("field is not an integrator output, so the source term is not the field's wave operator".to_string());
    }
    let g = field.grid();
    let nn = g.sphere().nnodes();
    let mut buf = Buffers {
        phi: vec![0.0; nn],
        l: vec![0.0; nn],
        lb: vec![0.0; nn],
        dth: vec![0.0; nn],
        dph: vec![0.0; nn],
    };
    let (du, dub) = (g.du(), g.dub());
    let (mut fo, mut fi, mut po, mut pi, mut bulk) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in rect.i0..=rect.i1 {
        for j in rect.j0..=rect.j1 {
            let t = node_terms(field, spec, q_spec, i, j, &mut buf)?;
            let r = field.geometry(i, j).r;
            let r2 = r * r;
            bulk += trapezoid(i, rect.i0, rect.i1, du) * trapezoid(j, rect.j0, rect.j1, dub) * r2 * t.bulk;
            let wj = trapezoid(j, rect.j0, rect.j1, dub) * r2;
            let wi = trapezoid(i, rect.i0, rect.i1, du) * r2;
            if i == rect.i1 {
                fo += wj * t.out_flux;
            }
            if i == rect.i0 {
                po += wj * t.out_flux;
            }
            if j == rect.j1 {
                fi += wi * t.in_flux;
            }
            if j == rect.j0 {
                pi += wi * t.in_flux;
            }
        }
    }
    let res = fo + fi - po - pi - bulk;
    let scale = fo.abs() + fi.abs() + po.abs() + pi.abs();
    let relative = if scale > 0.0 { res.abs() / scale } else { 0.0 };
    if !res.is_finite() {
        return Err(Error::Domain("energy identity residual is not finite".into()));
    }
    Ok(IdentityResidual {
        absolute: res.abs(),
        relative,
        future_outgoing: fo,
        future_incoming: fi,
        past_outgoing: po,
        past_incoming: pi,
        bulk,
        warnings,
    })
}
