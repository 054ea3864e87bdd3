//! Band-limited fields on the unit sphere in a real spherical-harmonic basis.
//!
//! Coefficients are stored (ℓ, m) row-major: index ℓ² + ℓ + m for
//! m ∈ [−ℓ, ℓ]. Nodes are Gauss–Legendre in cos θ times a uniform φ ring,
//! stored θ-major. The default node count follows the 3/2 rule so that cubic
//! products of degree-lmax fields still integrate exactly.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Analyze,
    Synthesize,
}

#[derive(Debug, Clone)]
pub struct SphereGrid {
    lmax: usize,
    ntheta: usize,
    nphi: usize,
    theta: Vec<f64>,
    phi: Vec<f64>,
    /// Combined Gauss–Legendre times uniform-φ weight per node.
    weight: Vec<f64>,
    /// Basis values, [coef][node].
    ylm: Vec<f64>,
    dylm_theta: Vec<f64>,
    /// ∂_φ Y / sin θ.
    dylm_phi_sin: Vec<f64>,
    /// Ω_i in coefficient space, [i][out][in].
    omega: [Vec<f64>; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub lmax: usize,
    pub ntheta: usize,
    pub nphi: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereField {
    pub values: Vec<f64>,
    pub coeffs: Vec<f64>,
}

pub fn coef_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (l as i64 + m) as usize
}

/// (ℓ, m) of a coefficient index.
pub fn coef_lm(k: usize) -> (usize, i64) {
    let l = (k as f64).sqrt() as usize;
    let l = if (l + 1) * (l + 1) <= k { l + 1 } else { l };
    (l, k as i64 - (l * l + l) as i64)
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Orthonormal associated Legendre values P̄_ℓ^m(cos θ) for 0 ≤ m ≤ ℓ ≤ lmax,
/// without the Condon–Shortley phase, indexed [ℓ][m].
fn legendre_table(lmax: usize, x: f64, s: f64) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; lmax + 1]; lmax + 1];
    p[0][0] = (0.25 / PI).sqrt();
    for m in 1..=lmax {
        p[m][m] = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s * p[m - 1][m - 1];
    }
    for m in 0..lmax {
        p[m + 1][m] = ((2 * m + 3) as f64).sqrt() * x * p[m][m];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[l][m] = a * (x * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    p
}

/// Real harmonic Y_ℓm(θ, φ) in the basis used by [`SphereGrid`].
pub fn real_harmonic(l: usize, m: i64, theta: f64, phi: f64) -> f64 {
    let am = m.unsigned_abs() as usize;
    if am > l {
        return 0.0;
    }
    let p = legendre_table(l, theta.cos(), theta.sin());
    let mf = am as f64;
    let ang = if m > 0 {
        2f64.sqrt() * (mf * phi).cos()
    } else if m < 0 {
        2f64.sqrt() * (mf * phi).sin()
    } else {
        1.0
    };
    p[l][am] * ang
}

/// Σ c · Y_ℓm(θ, φ) over (ℓ, m, c) triples, sharing one Legendre table.
pub fn harmonic_sum(terms: &[(usize, i64, f64)], theta: f64, phi: f64) -> f64 {
    let lmax = terms.iter().map(|t| t.0).max().unwrap_or(0);
    let p = legendre_table(lmax, theta.cos(), theta.sin());
    terms
        .iter()
        .filter(|t| t.1.unsigned_abs() as usize <= t.0)
        .map(|&(l, m, c)| {
            let mf = m.unsigned_abs() as f64;
            let ang = match m.signum() {
                1 => 2f64.sqrt() * (mf * phi).cos(),
                -1 => 2f64.sqrt() * (mf * phi).sin(),
                _ => 1.0,
            };
            c * p[l][m.unsigned_abs() as usize] * ang
        })
        .sum()
}

impl SphereGrid {
    /// Grid with the default dealiased sizing for band limit `lmax`.
    pub fn new(lmax: usize) -> Self {
        let ntheta = (3 * lmax + 2).div_ceil(2).max(lmax + 1);
        let nphi = 3 * lmax + 1;
        Self::with_nodes(lmax, ntheta, nphi).expect("default sizing is valid")
    }

    pub fn from_spec(spec: SphereSpec) -> Result<Self> {
        Self::with_nodes(spec.lmax, spec.ntheta, spec.nphi)
    }

    pub fn with_nodes(lmax: usize, ntheta: usize, nphi: usize) -> Result<Self> {
        if ntheta < lmax + 1 || nphi < 2 * lmax + 1 {
            return Err(Error::Config(format!(
                "sphere grid {ntheta}x{nphi} cannot resolve products at lmax = {lmax} \
                 (need ntheta >= {}, nphi >= {})",
                lmax + 1,
                2 * lmax + 1
            )));
        }
        let (x, wx) = gauss_legendre(ntheta);
        let theta: Vec<f64> = x.iter().map(|&c| c.acos()).collect();
        let phi: Vec<f64> = (0..nphi).map(|j| 2.0 * PI * j as f64 / nphi as f64).collect();
        let nnodes = ntheta * nphi;
        let ncoef = (lmax + 1) * (lmax + 1);
        let mut weight = vec![0.0; nnodes];
        let mut ylm = vec![0.0; ncoef * nnodes];
        let mut dth = vec![0.0; ncoef * nnodes];
        let mut dph = vec![0.0; ncoef * nnodes];
        for (it, &th) in theta.iter().enumerate() {
            let (c, s) = (th.cos(), th.sin());
            let p = legendre_table(lmax, c, s);
            // dP̄_ℓ^m/dθ = (ℓ x P̄_ℓ^m − √((2ℓ+1)(ℓ²−m²)/(2ℓ−1)) P̄_{ℓ−1}^m) / sin θ
            let mut dp = vec![vec![0.0; lmax + 1]; lmax + 1];
            for l in 0..=lmax {
                for m in 0..=l {
                    let lower = if l > m {
                        let (lf, mf) = (l as f64, m as f64);
                        ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt()
                            * p[l - 1][m]
                    } else {
                        0.0
                    };
                    dp[l][m] = (l as f64 * c * p[l][m] - lower) / s;
                }
            }
            for (ip, &ph) in phi.iter().enumerate() {
                let node = it * nphi + ip;
                weight[node] = wx[it] * 2.0 * PI / nphi as f64;
                for l in 0..=lmax {
                    for m in -(l as i64)..=(l as i64) {
                        let k = coef_index(l, m);
                        let am = m.unsigned_abs() as usize;
                        let mf = am as f64;
                        let (ang, dang) = if m > 0 {
                            (2f64.sqrt() * (mf * ph).cos(), -2f64.sqrt() * mf * (mf * ph).sin())
                        } else if m < 0 {
                            (2f64.sqrt() * (mf * ph).sin(), 2f64.sqrt() * mf * (mf * ph).cos())
                        } else {
                            (1.0, 0.0)
                        };
                        ylm[k * nnodes + node] = p[l][am] * ang;
                        dth[k * nnodes + node] = dp[l][am] * ang;
                        dph[k * nnodes + node] = p[l][am] * dang / s;
                    }
                }
            }
        }
        let mut grid = SphereGrid {
            lmax,
            ntheta,
            nphi,
            theta,
            phi,
            weight,
            ylm,
            dylm_theta: dth,
            dylm_phi_sin: dph,
            omega: [Vec::new(), Vec::new(), Vec::new()],
        };
        grid.omega = grid.build_rotation_matrices();
        Ok(grid)
    }

    fn build_rotation_matrices(&self) -> [Vec<f64>; 3] {
        let (nc, nn) = (self.ncoef(), self.nnodes());
        let mut out = [vec![0.0; nc * nc], vec![0.0; nc * nc], vec![0.0; nc * nc]];
        let mut vals = vec![0.0; nn];
        let mut coefs = vec![0.0; nc];
        for i in 0..3 {
            for kin in 0..nc {
                for node in 0..nn {
                    let (it, ip) = (node / self.nphi, node % self.nphi);
                    let (th, ph) = (self.theta[it], self.phi[ip]);
                    let dt = self.dylm_theta[kin * nn + node];
                    // ∂_φ Y = sin θ · (∂_φ Y / sin θ)
                    let dp = self.dylm_phi_sin[kin * nn + node] * th.sin();
                    let cot = th.cos() / th.sin();
                    vals[node] = match i {
                        0 => -ph.sin() * dt - cot * ph.cos() * dp,
                        1 => ph.cos() * dt - cot * ph.sin() * dp,
                        _ => dp,
                    };
                }
                self.analyze(&vals, &mut coefs);
                for kout in 0..nc {
                    out[i][kout * nc + kin] = coefs[kout];
                }
            }
        }
        out
    }

    pub fn spec(&self) -> SphereSpec {
        SphereSpec {
            lmax: self.lmax,
            ntheta: self.ntheta,
            nphi: self.nphi,
        }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn ntheta(&self) -> usize {
        self.ntheta
    }

    pub fn nphi(&self) -> usize {
        self.nphi
    }

    pub fn ncoef(&self) -> usize {
        (self.lmax + 1) * (self.lmax + 1)
    }

    pub fn nnodes(&self) -> usize {
        self.ntheta * self.nphi
    }

    /// (θ, φ) of a node.
    pub fn node(&self, node: usize) -> (f64, f64) {
        (self.theta[node / self.nphi], self.phi[node % self.nphi])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// −ℓ(ℓ+1) for coefficient k.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let (l, _) = coef_lm(k);
        -((l * (l + 1)) as f64)
    }

    /// ∫ f dσ over the unit sphere by node quadrature.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weight).map(|(v, w)| v * w).sum()
    }

    pub fn analyze(&self, values: &[f64], coeffs: &mut [f64]) {
        let nn = self.nnodes();
        for (k, c) in coeffs.iter_mut().enumerate() {
            let row = &self.ylm[k * nn..(k + 1) * nn];
            *c = row
                .iter()
                .zip(values)
                .zip(&self.weight)
                .map(|((y, v), w)| y * v * w)
                .sum();
        }
    }

    pub fn synthesize(&self, coeffs: &[f64], values: &mut [f64]) {
        self.synth_with(&self.ylm, coeffs, values);
    }

    /// Unit-sphere orthonormal-frame gradient components (∂_θ f, ∂_φ f / sin θ).
    pub fn synthesize_gradient(&self, coeffs: &[f64], dtheta: &mut [f64], dphi: &mut [f64]) {
        self.synth_with(&self.dylm_theta, coeffs, dtheta);
        self.synth_with(&self.dylm_phi_sin, coeffs, dphi);
    }

    fn synth_with(&self, table: &[f64], coeffs: &[f64], values: &mut [f64]) {
        let nn = self.nnodes();
        values.iter_mut().for_each(|v| *v = 0.0);
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &table[k * nn..(k + 1) * nn];
            for (v, y) in values.iter_mut().zip(row) {
                *v += c * y;
            }
        }
    }

    /// Applies Ω_i (i = 1, 2, 3) to a coefficient vector.
    pub fn rotate_coeffs(&self, i: usize, coeffs: &[f64], out: &mut [f64]) {
        let nc = self.ncoef();
        let mat = &self.omega[i - 1];
        for (kout, o) in out.iter_mut().enumerate() {
            *o = (0..nc).map(|kin| mat[kout * nc + kin] * coeffs[kin]).sum();
        }
    }

    fn check_len(&self, f: &SphereField) -> Result<()> {
        if f.values.len() != self.nnodes() || f.coeffs.len() != self.ncoef() {
            return Err(Error::Config(format!(
                "field with {} values / {} coefficients does not match a grid of {} nodes / {} coefficients",
                f.values.len(),
                f.coeffs.len(),
                self.nnodes(),
                self.ncoef()
            )));
        }
        Ok(())
    }
}

impl SphereField {
    pub fn zero(grid: &SphereGrid) -> Self {
        SphereField {
            values: vec![0.0; grid.nnodes()],
            coeffs: vec![0.0; grid.ncoef()],
        }
    }

    pub fn from_values(grid: &SphereGrid, values: Vec<f64>) -> Result<Self> {
        let mut f = SphereField {
            values,
            coeffs: vec![0.0; grid.ncoef()],
        };
        grid.check_len(&f)?;
        grid.analyze(&f.values, &mut f.coeffs);
        Ok(f)
    }

    pub fn from_coeffs(grid: &SphereGrid, coeffs: Vec<f64>) -> Result<Self> {
        let mut f = SphereField {
            values: vec![0.0; grid.nnodes()],
            coeffs,
        };
        grid.check_len(&f)?;
        grid.synthesize(&f.coeffs, &mut f.values);
        Ok(f)
    }

    pub fn constant(grid: &SphereGrid, c: f64) -> Self {
        let mut coeffs = vec![0.0; grid.ncoef()];
        coeffs[0] = c * (4.0 * PI).sqrt();
        SphereField::from_coeffs(grid, coeffs).expect("sized from grid")
    }

    /// The real harmonic Y_ℓm.
    pub fn harmonic(grid: &SphereGrid, l: usize, m: i64) -> Result<Self> {
        if l > grid.lmax() || m.unsigned_abs() as usize > l {
            return Err(Error::Config(format!(
                "harmonic ({l}, {m}) outside band limit {}",
                grid.lmax()
            )));
        }
        let mut coeffs = vec![0.0; grid.ncoef()];
        coeffs[coef_index(l, m)] = 1.0;
        SphereField::from_coeffs(grid, coeffs)
    }
}

pub fn sh_transform(grid: &SphereGrid, f: &SphereField, direction: Direction) -> Result<SphereField> {
    grid.check_len(f)?;
    let mut out = f.clone();
    match direction {
        Direction::Analyze => grid.analyze(&f.values, &mut out.coeffs),
        Direction::Synthesize => grid.synthesize(&f.coeffs, &mut out.values),
    }
    Ok(out)
}

/// △̸ f = r⁻² times the unit-sphere Laplacian.
pub fn laplace_beltrami(grid: &SphereGrid, f: &SphereField, r: f64) -> Result<SphereField> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("sphere radius must be positive, got {r}")));
    }
    grid.check_len(f)?;
    let coeffs = f
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * grid.eigenvalue(k) / (r * r))
        .collect();
    SphereField::from_coeffs(grid, coeffs)
}

/// Pointwise |∇̸f|² at radius r and the r-independent ∫ |∇̸f|² r² dσ.
///
/// The returned field's coefficients are the lmax projection of a degree
/// 2·lmax function; its values are exact.
pub fn angular_gradient_sq(grid: &SphereGrid, f: &SphereField, r: f64) -> Result<(SphereField, f64)> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("sphere radius must be positive, got {r}")));
    }
    grid.check_len(f)?;
    let nn = grid.nnodes();
    let (mut a, mut b) = (vec![0.0; nn], vec![0.0; nn]);
    grid.synthesize_gradient(&f.coeffs, &mut a, &mut b);
    let unit: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * x + y * y).collect();
    let integral = grid.integrate(&unit);
    let values = unit.iter().map(|v| v / (r * r)).collect();
    Ok((SphereField::from_values(grid, values)?, integral))
}

pub fn rotate_derivative(grid: &SphereGrid, f: &SphereField, i: usize) -> Result<SphereField> {
    if !(1..=3).contains(&i) {
        return Err(Error::Config(format!("rotation generator index {i} not in 1..=3")));
    }
    grid.check_len(f)?;
    let mut coeffs = vec![0.0; grid.ncoef()];
    grid.rotate_coeffs(i, &f.coeffs, &mut coeffs);
    SphereField::from_coeffs(grid, coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        for l in 0..6usize {
            for m in -(l as i64)..=(l as i64) {
                assert_eq!(coef_lm(coef_index(l, m)), (l, m));
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        // exact through degree 9
        let i8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((i8 - 2.0 / 9.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 2.0));
    }

    #[test]
    fn default_sizing() {
        let g = SphereGrid::new(0);
        assert_eq!((g.ntheta(), g.nphi()), (1, 1));
        let g = SphereGrid::new(8);
        assert_eq!((g.ntheta(), g.nphi()), (13, 25));
        assert!(SphereGrid::with_nodes(4, 4, 9).is_err());
        assert!(SphereGrid::with_nodes(4, 5, 8).is_err());
    }

    #[test]
    fn y00_analyzes_to_single_coefficient() {
        let g = SphereGrid::new(3);
        let v = vec![(0.25 / PI).sqrt(); g.nnodes()];
        let f = SphereField::from_values(&g, v).unwrap();
        assert!((f.coeffs[0] - 1.0).abs() < 1e-13);
        assert!(f.coeffs[1..].iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn eigen_examples() {
        let g = SphereGrid::new(3);
        let y10 = SphereField::harmonic(&g, 1, 0).unwrap();
        let l = laplace_beltrami(&g, &y10, 1.0).unwrap();
        for (a, b) in l.values.iter().zip(&y10.values) {
            assert!((a + 2.0 * b).abs() < 1e-13);
        }
        let y22 = SphereField::harmonic(&g, 2, 2).unwrap();
        let l = laplace_beltrami(&g, &y22, 2.0).unwrap();
        for (a, b) in l.values.iter().zip(&y22.values) {
            assert!((a + 1.5 * b).abs() < 1e-13);
        }
        let c = laplace_beltrami(&g, &SphereField::constant(&g, 3.0), 1.0).unwrap();
        assert!(c.values.iter().all(|v| v.abs() < 1e-13));
        assert!(laplace_beltrami(&g, &y10, 0.0).is_err());
    }

    #[test]
    fn gradient_of_y10() {
        let g = SphereGrid::new(2);
        let y10 = SphereField::harmonic(&g, 1, 0).unwrap();
        let (_, integral) = angular_gradient_sq(&g, &y10, 7.0).unwrap();
        assert!((integral - 2.0).abs() < 1e-12);
        let (pw, integral) = angular_gradient_sq(&g, &SphereField::constant(&g, 1.0), 7.0).unwrap();
        assert_eq!(integral, 0.0);
        assert!(pw.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn theta_derivative_matches_fd() {
        // Y_ℓm evaluated off-grid by the same recurrence
        let lmax = 5;
        let g = SphereGrid::new(lmax);
        let nn = g.nnodes();
        let h = 1e-5;
        for node in [0, 7, nn / 2] {
            let (th, ph) = g.node(node);
            let eval = |th: f64, k: usize| {
                let (l, m) = coef_lm(k);
                let p = legendre_table(lmax, th.cos(), th.sin());
                let am = m.unsigned_abs() as usize;
                let ang = if m > 0 {
                    2f64.sqrt() * (am as f64 * ph).cos()
                } else if m < 0 {
                    2f64.sqrt() * (am as f64 * ph).sin()
                } else {
                    1.0
                };
                p[l][am] * ang
            };
            for k in 0..g.ncoef() {
                let fd = (eval(th + h, k) - eval(th - h, k)) / (2.0 * h);
                assert!((fd - g.dylm_theta[k * nn + node]).abs() < 1e-8, "k={k}");
            }
        }
    }

    #[test]
    fn omega3_of_y11_is_phi_derivative() {
        let g = SphereGrid::new(2);
        let y11 = SphereField::harmonic(&g, 1, 1).unwrap();
        let o = rotate_derivative(&g, &y11, 3).unwrap();
        let norm = (3.0 / (4.0 * PI)).sqrt();
        let h = 1e-5;
        for node in 0..g.nnodes() {
            let (th, ph) = g.node(node);
            let f = |p: f64| norm * th.sin() * p.cos();
            let fd = (f(ph + h) - f(ph - h)) / (2.0 * h);
            assert!((o.values[node] - fd).abs() < 1e-9);
        }
    }

    #[test]
    fn rotations_annihilate_invariants() {
        let g = SphereGrid::new(3);
        let c = SphereField::constant(&g, 1.0);
        let y10 = SphereField::harmonic(&g, 1, 0).unwrap();
        for i in 1..=3 {
            let o = rotate_derivative(&g, &c, i).unwrap();
            assert!(o.coeffs.iter().all(|v| v.abs() < 1e-13));
        }
        let o = rotate_derivative(&g, &y10, 3).unwrap();
        assert!(o.coeffs.iter().all(|v| v.abs() < 1e-13));
        assert!(rotate_derivative(&g, &c, 4).is_err());
    }

    #[test]
    fn rotations_preserve_degree_and_norm_of_sum() {
        // Σ_i |Ω_i f|² integrates to ℓ(ℓ+1)‖f‖² for f of pure degree ℓ
        let g = SphereGrid::new(4);
        let f = SphereField::harmonic(&g, 3, -2).unwrap();
        let total: f64 = (1..=3)
            .map(|i| {
                let o = rotate_derivative(&g, &f, i).unwrap();
                o.coeffs.iter().map(|c| c * c).sum::<f64>()
            })
            .sum();
        assert!((total - 12.0).abs() < 1e-11);
    }
}
