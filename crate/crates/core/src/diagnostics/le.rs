//! Local-energy norms over a time slab t ∈ [t₀, t₁] and the per-slice energy.
//!
//! Space-time integrals use dt dx = 2η r² du dū dσ. The Cartesian-like
//! gradient is |∂ψ|² = |∂_tψ|² + |∂_rψ|² + |∇̸ψ|² with ∂_t = (L + L̄)/2 and
//! ∂_r = (L − L̄)/(2η).

use serde::Serialize;

use super::trapezoid;
use crate::error::{Error, Result};
use crate::geometry::japanese;
use crate::solver::Field;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusRow {
    /// The annulus is R ≤ ⟨r⟩ < 2R.
    pub r_lo: f64,
    /// ‖⟨r⟩^{-1/2} ψ‖
    pub psi: f64,
    /// ‖⟨r⟩^{-1/2} ∂ψ‖
    pub dpsi: f64,
    /// ‖⟨r⟩^{-3/2} ψ‖
    pub psi_over_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeReport {
    pub le: f64,
    pub le1: f64,
    pub annuli: Vec<AnnulusRow>,
    /// (τ, E[ψ](τ)) on equally spaced slices.
    pub e_tau: Vec<(f64, f64)>,
}

/// (ψ², |∂ψ|²) integrated over the unit sphere from coefficient blocks.
fn point_sums(sphere_eig: &dyn Fn(usize) -> f64, phi: &[f64], l: &[f64], lb: &[f64], r: f64, eta: f64) -> (f64, f64) {
    let (mut p2, mut d2) = (0.0, 0.0);
    for k in 0..phi.len() {
        let dt = 0.5 * (l[k] + lb[k]);
        let dr = 0.5 * (l[k] - lb[k]) / eta;
        p2 += phi[k] * phi[k];
        d2 += dt * dt + dr * dr - sphere_eig(k) * phi[k] * phi[k] / (r * r);
    }
    (p2, d2)
}

pub fn le_norm(field: &Field, t0: f64, t1: f64, r0: f64, n_tau: usize) -> Result<LeReport> {
    if !(t0 <= t1) || !(r0 >= 1.0) {
        return Err(Error::Domain(format!("need t0 <= t1 and R0 >= 1, got [{t0}, {t1}] and {r0}")));
    }
    let g = field.grid();
    let sphere = g.sphere();
    let eig = |k: usize| sphere.eigenvalue(k);
    let (du, dub) = (g.du(), g.dub());
    let tol = 1e-12 * (1.0 + t0.abs().max(t1.abs()));
    // accumulate per dyadic annulus: index floor(log2(⟨r⟩/R0))
    let mut acc: Vec<[f64; 3]> = Vec::new();
    let mut hit = false;
    for i in 0..=g.nu() {
        for j in 0..=g.nub() {
            let t = g.u(i) + g.ub(j);
            if t < t0 - tol || t > t1 + tol || field.is_capped(i, j) {
                continue;
            }
            hit = true;
            let geo = field.geometry(i, j);
            let jr = japanese(geo.r);
            if jr < r0 {
                continue;
            }
            let a = (jr / r0).log2().floor() as usize;
            if acc.len() <= a {
                acc.resize(a + 1, [0.0; 3]);
            }
            let (p2, d2) = point_sums(&eig, field.phi(i, j), field.lphi(i, j), field.lbphi(i, j), geo.r, geo.eta);
            let w = trapezoid(i, 0, g.nu(), du) * trapezoid(j, 0, g.nub(), dub) * 2.0 * geo.eta * geo.r * geo.r;
            acc[a][0] += w * p2 / jr;
            acc[a][1] += w * d2 / jr;
            acc[a][2] += w * p2 / (jr * jr * jr);
        }
    }
    if !hit {
        return Err(Error::Domain(format!("slab t in [{t0}, {t1}] holds no uncapped grid node")));
    }
    let annuli: Vec<AnnulusRow> = acc
        .iter()
        .enumerate()
        .map(|(a, v)| AnnulusRow {
            r_lo: r0 * 2f64.powi(a as i32),
            psi: v[0].sqrt(),
            dpsi: v[1].sqrt(),
            psi_over_r: v[2].sqrt(),
        })
        .collect();
    let sup = |f: &dyn Fn(&AnnulusRow) -> f64| annuli.iter().map(f).fold(0.0, f64::max);
    let le = sup(&|a| a.psi);
    let le1 = sup(&|a| a.dpsi) + sup(&|a| a.psi_over_r);
    let n_tau = n_tau.max(1);
    let mut e_tau = Vec::with_capacity(n_tau);
    for s in 0..n_tau {
        let tau = if n_tau == 1 {
            t0
        } else {
            t0 + (t1 - t0) * s as f64 / (n_tau - 1) as f64
        };
        e_tau.push((tau, slice_energy(field, tau)?));
    }
    Ok(LeReport { le, le1, annuli, e_tau })
}

/// ∫_{t=τ} |∂ψ|² r² dr dσ, parametrized by r* with dr = η dr* and the
/// lattices interpolated bilinearly. Capped cells are left out.
fn slice_energy(field: &Field, tau: f64) -> Result<f64> {
    let g = field.grid();
    let sphere = g.sphere();
    let bg = field.background();
    let lo = (tau - 2.0 * g.u_end()).max(-tau);
    let hi = (tau - 2.0 * g.u0()).min(2.0 * g.ub_end() - tau);
    if !(hi > lo) {
        return Ok(0.0);
    }
    let n = 2 * g.nu().max(g.nub());
    let h = (hi - lo) / n as f64;
    let nc = field.ncoef();
    let (mut phi, mut l, mut lb) = (vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]);
    let mut total = 0.0;
    for s in 0..=n {
        let rs = lo + s as f64 * h;
        let (u, ub) = (0.5 * (tau - rs), 0.5 * (tau + rs));
        let x = ((u - g.u0()) / g.du()).clamp(0.0, g.nu() as f64);
        let y = (ub / g.dub()).clamp(0.0, g.nub() as f64);
        let (i, j) = ((x.floor() as usize).min(g.nu() - 1), (y.floor() as usize).min(g.nub() - 1));
        let (a, b) = (x - i as f64, y - j as f64);
        let corners = [(i, j, (1.0 - a) * (1.0 - b)), (i + 1, j, a * (1.0 - b)), (i, j + 1, (1.0 - a) * b), (i + 1, j + 1, a * b)];
        if corners.iter().any(|&(ci, cj, w)| w > 0.0 && field.is_capped(ci, cj)) {
            continue;
        }
        phi.fill(0.0);
        l.fill(0.0);
        lb.fill(0.0);
        for &(ci, cj, w) in &corners {
            for k in 0..nc {
                phi[k] += w * field.phi(ci, cj)[k];
                l[k] += w * field.lphi(ci, cj)[k];
                lb[k] += w * field.lbphi(ci, cj)[k];
            }
        }
        let p = bg.point(u, ub)?;
        let (_, d2) = point_sums(&|k| sphere.eigenvalue(k), &phi, &l, &lb, p.r, p.eta);
        total += trapezoid(s, 0, n, h) * d2 * p.r * p.r * p.eta;
    }
    Ok(total)
}
