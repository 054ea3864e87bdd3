use super::*;
use crate::angular::{coef_index, SphereGrid};
use crate::data::{short_pulse_boundary, PulseProfile};
use crate::geometry::{Background, NullPoint};
use crate::nullforms::{GradientSample, NullFormSpec};
use crate::solver::{evolve, NullGrid, DEFAULT_ETA_MIN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn grid(lmax: usize, n: usize) -> NullGrid {
    NullGrid::new(-10.0, -1.0, 0.1, n, n, Arc::new(SphereGrid::new(lmax)), DEFAULT_ETA_MIN).unwrap()
}

fn sch() -> Background {
    Background::schwarzschild(1.0).unwrap()
}

fn closed(lmax: usize, n: usize, f: impl Fn(f64, f64) -> (Vec<f64>, Vec<f64>, Vec<f64>)) -> Field {
    Field::from_closed_form(grid(lmax, n), sch(), f).unwrap()
}

fn point_at_r(bg: &Background, r: f64, t: f64) -> NullPoint {
    let rs = bg.tortoise(r).unwrap();
    bg.point(0.5 * (t - rs), 0.5 * (t + rs)).unwrap()
}

#[test]
fn zero_field_gives_zero_everywhere() {
    let f = closed(1, 16, |_, _| (vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]));
    for kind in EnergyKind::ALL {
        let cone = match kind.cone() {
            ConeKind::Outgoing => ConeSpec::full_outgoing(&f, 3),
            ConeKind::Incoming => ConeSpec::full_incoming(&f, 5),
        };
        for k in 0..=1 {
            assert_eq!(cone_energy(kind, &f, &cone, 0.1, k).unwrap(), 0.0, "{kind:?}");
        }
    }
    for kind in IntegratedKind::ALL {
        assert_eq!(integrated_energy(kind, &f, &Rect::uncapped(&f), 0.1, 0).unwrap(), 0.0);
    }
    for kind in [SphereNormKind::Chib, SphereNormKind::Omega, SphereNormKind::Chi, SphereNormKind::H] {
        assert_eq!(sphere_norm(kind, &f, f.grid().u(4), f.grid().ub(2)).unwrap(), 0.0);
    }
    let res = energy_identity_residual(&f, &MultiplierSpec::xi1(0.1), &Rect::uncapped(&f), &NullFormSpec::Q0).unwrap();
    assert_eq!(res.absolute, 0.0);
    assert!(sup_profiles(&f, &SupWeights::unweighted()).iter().all(|r| r.phi == 0.0 && r.l == 0.0 && r.dbar == 0.0));
    let le = le_norm(&f, -9.0, -5.0, 1.0, 3).unwrap();
    assert_eq!((le.le, le.le1), (0.0, 0.0));
    assert!(le.e_tau.iter().all(|(_, e)| *e == 0.0));
}

#[test]
fn sphere_norm_examples() {
    let c = 0.7;
    let s4 = (4.0 * PI).sqrt();
    let f = closed(1, 16, |_, _| {
        let mut l = vec![0.0; 4];
        l[coef_index(1, 0)] = 1.0;
        (vec![0.0; 4], vec![c * s4, 0.0, 0.0, 0.0], l)
    });
    let (u, ub) = (f.grid().u(5), f.grid().ub(7));
    let r = f.geometry(5, 7).r;
    let chib = sphere_norm(SphereNormKind::Chib, &f, u, ub).unwrap();
    assert!((chib - 4.0 * PI * r * r * c * c).abs() < 1e-12 * chib);
    let chi = sphere_norm(SphereNormKind::Chi, &f, u, ub).unwrap();
    assert!((chi - r * r * r).abs() < 1e-12 * chi);
    assert!(matches!(sphere_norm(SphereNormKind::H, &f, u + 1e-3, ub), Err(Error::Domain(_))));
    assert!(SphereNormKind::parse("nope").is_err());
}

#[test]
fn omega_and_h_norms_of_a_harmonic() {
    let f = closed(2, 16, |_, _| {
        let mut p = vec![0.0; 9];
        p[coef_index(2, 1)] = 2.0;
        (p, vec![0.0; 9], vec![0.0; 9])
    });
    let (u, ub) = (f.grid().u(2), f.grid().ub(3));
    assert!((sphere_norm(SphereNormKind::H, &f, u, ub).unwrap() - 4.0).abs() < 1e-14);
    // ∫|∇̸Y|² r² = ℓ(ℓ+1)
    assert!((sphere_norm(SphereNormKind::Omega, &f, u, ub).unwrap() - 24.0).abs() < 1e-12);
}

/// Fine Simpson rule, used as an independent quadrature oracle.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn outgoing_energy_matches_direct_quadrature() {
    let bg = sch();
    let g = |ub: f64| (20.0 * ub).sin() + 0.3;
    let s4 = (4.0 * PI).sqrt();
    let f = closed(0, 256, |_, ub| (vec![0.0], vec![0.0], vec![g(ub) * s4]));
    let i = 100;
    let u = f.grid().u(i);
    let e = cone_energy(EnergyKind::E, &f, &ConeSpec::full_outgoing(&f, i), 0.1, 0).unwrap();
    let want = 4.0 * PI
        * simpson(0.0, 0.1, 2000, |ub| {
            let r = bg.point(u, ub).unwrap().r;
            g(ub) * g(ub) * r * r
        });
    assert!((e - want).abs() < 1e-4 * want, "{e} vs {want}");
    let edeg = cone_energy(EnergyKind::Edeg, &f, &ConeSpec::full_outgoing(&f, i), 0.1, 0).unwrap();
    let want_deg = 4.0 * PI
        * simpson(0.0, 0.1, 2000, |ub| {
            let p = bg.point(u, ub).unwrap();
            p.eta * g(ub) * g(ub) * p.r * p.r
        });
    assert!((edeg - want_deg).abs() < 1e-4 * want_deg);
    // η < 1 on the whole cone, so the degenerate energy is strictly smaller
    assert!(edeg < e);
    let mean_eta = want_deg / want;
    assert!((edeg / e - mean_eta).abs() < 1e-4);
}

#[test]
fn degenerate_energies_are_dominated() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let coeffs: Vec<f64> = (0..3 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = closed(1, 16, |u, ub| {
        let s = (u + 3.0 * ub).cos();
        (
            coeffs[0..4].iter().map(|c| c * s).collect(),
            coeffs[4..8].iter().map(|c| c * s).collect(),
            coeffs[8..12].iter().map(|c| c * s).collect(),
        )
    });
    for i in [0, 5, 16] {
        let c = ConeSpec::full_outgoing(&f, i);
        let d = cone_energy(EnergyKind::Edeg, &f, &c, 0.05, 1).unwrap();
        let n = cone_energy(EnergyKind::Endeg, &f, &c, 0.05, 1).unwrap();
        assert!(d <= n && d > 0.0);
    }
    for j in [0, 7, 16] {
        let c = ConeSpec::full_incoming(&f, j);
        let d = cone_energy(EnergyKind::EbarDeg, &f, &c, 0.05, 0).unwrap();
        let n = cone_energy(EnergyKind::EbarNdeg, &f, &c, 0.05, 0).unwrap();
        assert!(d <= n);
    }
}

#[test]
fn omega_words_count_rotations() {
    assert_eq!(omega_words(2, 0).len(), 1);
    assert_eq!(omega_words(1, 3).len(), 4);
    assert_eq!(omega_words(2, 3).len(), 13);
    // Σ_i |Ω_i Y_ℓm|² integrates to ℓ(ℓ+1), so E_1 = (1 + 2) E_0 for ℓ = 1
    let f = closed(1, 16, |_, ub| {
        let mut l = vec![0.0; 4];
        l[coef_index(1, -1)] = 1.0 + ub;
        (vec![0.0; 4], vec![0.0; 4], l)
    });
    let c = ConeSpec::full_outgoing(&f, 4);
    let e0 = cone_energy(EnergyKind::Endeg, &f, &c, 1.0, 0).unwrap();
    let e1 = cone_energy(EnergyKind::Endeg, &f, &c, 1.0, 1).unwrap();
    assert!((e1 / e0 - 3.0).abs() < 1e-10, "{}", e1 / e0);
    assert!(cone_energy(EnergyKind::LF, &f, &c, 1.0, 2).is_err());
    assert!(cone_energy(EnergyKind::Ebar, &f, &c, 1.0, 0).is_err());
}

#[test]
fn commuted_fluxes_use_lattice_derivatives() {
    // φ = u ū, so L̄φ = ū and L̄Lφ = 1
    let s4 = (4.0 * PI).sqrt();
    let f = closed(0, 64, |u, ub| (vec![s4 * u * ub], vec![s4 * ub], vec![s4 * u]));
    let i = 20;
    let u = f.grid().u(i);
    let c = ConeSpec::full_outgoing(&f, i);
    // ^tF = ⟨u⟩²(δ⁻²|L̄φ|² + |L̄Lφ|²) with L̄Lφ = 1
    let d = 0.1;
    let tf = cone_energy(EnergyKind::TF, &f, &c, d, 0).unwrap();
    let mut want = 0.0;
    for j in 0..=64 {
        let geo = f.geometry(i, j);
        let ub = f.grid().ub(j);
        want += trapezoid(j, 0, 64, f.grid().dub()) * geo.r * geo.r * 4.0 * PI * (1.0 + u * u) * (ub * ub / (d * d) + 1.0);
    }
    assert!((tf - want).abs() < 1e-9 * want);
}

#[test]
fn rectangle_of_ones_matches_geometric_oracle() {
    let f = closed(0, 128, |_, _| (vec![0.0], vec![0.0], vec![0.0]));
    let rect = Rect::new(16, 112, 8, 120);
    let got = rectangle_quadrature(&f, &rect, |i, j| 4.0 * PI * f.geometry(i, j).eta).unwrap();
    let (g, bg) = (f.grid(), sch());
    let (u0, u1, v0, v1) = (g.u(16), g.u(112), g.ub(8), g.ub(120));
    let want = simpson(u0, u1, 400, |u| {
        simpson(v0, v1, 40, |v| {
            let p = bg.point(u, v).unwrap();
            4.0 * PI * p.eta * p.r * p.r
        })
    });
    assert!((got - want).abs() < 1e-4 * want, "{got} {want}");
}

#[test]
fn integrated_energy_is_nonnegative() {
    let s4 = (4.0 * PI).sqrt();
    let f = closed(0, 16, |u, ub| (vec![s4 * (u * ub).sin()], vec![s4 * ub * (u * ub).cos()], vec![s4 * u * (u * ub).cos()]));
    for kind in IntegratedKind::ALL {
        assert!(integrated_energy(kind, &f, &Rect::uncapped(&f), 0.1, 0).unwrap() > 0.0);
    }
    assert!(IntegratedKind::parse("sdeg").is_ok());
    assert!(EnergyKind::parse("tF_ndeg").is_ok());
}

#[test]
fn xi1_and_xi2_coefficients() {
    let bg = sch();
    for &r in &[2.05, 2.5, 3.0, 4.0, 10.0, 40.0] {
        let p = point_at_r(&bg, r, 1.3);
        let c1 = current_coefficients(&MultiplierSpec::xi1(0.1), &p).unwrap();
        assert!((c1.l2 - 1.0 / (r * r)).abs() < 1e-10 / (r * r));
        let c2 = current_coefficients(&MultiplierSpec::xi2(0.1), &p).unwrap();
        assert!((c2.l2 - 1.0 / (r * r)).abs() < 1e-10);
        assert!((c2.lb2 - 10.0 / (r * r)).abs() < 1e-10);
        // by hand, ∂_u f₂ = 2mη/(δr²) for f₂ = δ⁻¹(1 + μ)
        let red = reduce(&MultiplierSpec::xi2(0.1), &p).unwrap();
        let ang = -0.5 * (red.f2_u - p.mu * red.f2 / r);
        assert!((ang - 40.0 / r.powi(3)).abs() < 1e-10, "{ang}");
    }
    let p = point_at_r(&bg, 4.0, 0.0);
    let g = GradientSample {
        lpsi: 1.0,
        eta: p.eta,
        ..Default::default()
    };
    assert!((multiplier_current(&MultiplierSpec::xi1(0.1), &p, &g, 0.0).unwrap() - 1.0 / 16.0).abs() < 1e-12);
}

#[test]
fn current_of_l_matches_deformation_contraction() {
    let bg = sch();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let r = rng.gen_range(2.1..30.0);
        let p = point_at_r(&bg, r, rng.gen_range(-5.0..5.0));
        let g = GradientSample {
            lpsi: rng.gen_range(-2.0..2.0),
            lbpsi: rng.gen_range(-2.0..2.0),
            angular: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
            eta: p.eta,
        };
        let red = Reduction {
            f1: 1.0,
            ..Default::default()
        };
        let k = multiplier::coefficients_of(&red, &p).apply(&g, 0.0);
        let want = g.lpsi * g.lbpsi / r - g.nabla_sq() / (r * r);
        assert!((k - want).abs() < 1e-12);
        assert!((deformation_contraction_l(&p, &g) - k).abs() < 1e-12);
    }
}

#[test]
fn conformal_current_closed_form() {
    let bg = sch();
    let spec = MultiplierSpec::conformal_k();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let r = rng.gen_range(2.2..40.0);
        let t = rng.gen_range(-10.0..10.0);
        let p = point_at_r(&bg, r, t);
        let c = current_coefficients(&spec, &p).unwrap();
        let (mu, rs) = (p.mu, p.rstar);
        let nab = t * (rs / r * (1.0 - 3.0 / r) - 1.0);
        let psi = -0.5 * t * mu / (r * r) * (2.0 + rs / r * (4.0 * mu - 3.0));
        assert!(c.l2.abs() < 1e-12 && c.lb2.abs() < 1e-12 && c.cross.abs() < 1e-12, "{c:?}");
        assert!((c.nab2 - nab).abs() < 1e-9 * (1.0 + nab.abs()), "{} {}", c.nab2, nab);
        assert!((c.psi2 - psi).abs() < 1e-9 * (1.0 + psi.abs()), "{} {}", c.psi2, psi);
    }
    let p = point_at_r(&bg, 3.0, 2.5);
    let g = GradientSample {
        angular: [1.0, 0.0],
        eta: p.eta,
        ..Default::default()
    };
    assert!((multiplier_current(&spec, &p, &g, 0.0).unwrap() + 2.5).abs() < 1e-10);
}

#[test]
fn xrho_modifier_matches_finite_differences() {
    let bg = sch();
    let spec = MultiplierSpec::xrho(2.0, 1.0);
    let q_of = |u: f64, ub: f64| reduce(&spec, &bg.point(u, ub).unwrap()).unwrap().q.unwrap().q;
    let (u, ub) = (-2.0, 1.5);
    let p = bg.point(u, ub).unwrap();
    let q = reduce(&spec, &p).unwrap().q.unwrap();
    let h = 1e-4;
    let q_u = (q_of(u + h, ub) - q_of(u - h, ub)) / (2.0 * h);
    let q_ub = (q_of(u, ub + h) - q_of(u, ub - h)) / (2.0 * h);
    let q_uub = (q_of(u + h, ub + h) - q_of(u + h, ub - h) - q_of(u - h, ub + h) + q_of(u - h, ub - h)) / (4.0 * h * h);
    assert!((q.q_u - q_u).abs() < 1e-8 && (q.q_ub - q_ub).abs() < 1e-8);
    let box_q = -q_uub / p.eta + (q_ub - q_u) / p.r;
    assert!((q.box_q - box_q).abs() < 1e-6, "{} {}", q.box_q, box_q);
}

#[test]
fn redshift_coefficients() {
    let bg = sch();
    let spec = MultiplierSpec::redshift(0.05, 1.0);
    for &r in &[2.001, 2.05, 2.1, 2.2] {
        let c = current_coefficients(&spec, &point_at_r(&bg, r, 0.0)).unwrap();
        assert!(c.l2 > 0.0 && c.lb2 > 0.0 && c.nab2 > 0.0, "r = {r}: {c:?}");
    }
    let far = reduce(&spec, &point_at_r(&bg, 2.7, 0.0)).unwrap();
    assert_eq!((far.f1, far.f2, far.f1_u), (1.0, 0.0, 0.0));
    let mut bad = spec;
    bad.r_nh = 2.6;
    assert!(reduce(&bad, &point_at_r(&bg, 2.3, 0.0)).is_err());
    // the reduced derivatives agree with differences along r*
    let rs = bg.tortoise(2.3).unwrap();
    let f2 = |x: f64| reduce(&spec, &bg.point(0.0, x).unwrap()).unwrap().f2;
    let red = reduce(&spec, &bg.point(0.0, rs).unwrap()).unwrap();
    let h = 1e-5;
    assert!((red.f2_ub - (f2(rs + h) - f2(rs - h)) / (2.0 * h)).abs() < 1e-5 * red.f2_ub.abs().max(1.0));
}

#[test]
fn identity_converges_on_flat_branch() {
    let bg = Background::minkowski();
    let mut res = Vec::new();
    for n in [32, 64, 128] {
        let g = grid(0, n);
        let d = short_pulse_boundary(-10.0, 0.1, &PulseProfile::default(), &g).unwrap();
        let f = evolve(&g, &d, &NullFormSpec::Linear, &bg).unwrap();
        let r = energy_identity_residual(&f, &MultiplierSpec::xi1(0.1), &Rect::uncapped(&f), &NullFormSpec::Linear).unwrap();
        assert!(r.warnings.is_empty());
        res.push(r.absolute);
    }
    let o1 = (res[0] / res[1]).log2();
    let o2 = (res[1] / res[2]).log2();
    assert!(o1 > 1.7 && o2 > 1.7, "{res:?}");
}

#[test]
fn identity_on_schwarzschild_q0_run_is_small() {
    let bg = sch();
    let g = NullGrid::new(-10.0, -1.0, 0.05, 128, 64, Arc::new(SphereGrid::new(0)), DEFAULT_ETA_MIN).unwrap();
    let d = short_pulse_boundary(-10.0, 0.05, &PulseProfile::default(), &g).unwrap();
    let f = evolve(&g, &d, &NullFormSpec::Q0, &bg).unwrap();
    let r = energy_identity_residual(&f, &MultiplierSpec::xi2(0.05), &Rect::uncapped(&f), &NullFormSpec::Q0).unwrap();
    assert!(r.relative < 1e-3, "{r:?}");
}

#[test]
fn le_single_annulus_is_its_own_sup() {
    let s4 = (4.0 * PI).sqrt();
    let f = closed(0, 32, |u, ub| {
        let v = (ub - u - 5.0).max(0.0).min(1.0);
        (vec![s4 * v], vec![0.0], vec![0.0])
    });
    let rep = le_norm(&f, -9.0, -2.0, 1.0, 2).unwrap();
    let nonzero: Vec<_> = rep.annuli.iter().filter(|a| a.psi > 0.0).collect();
    assert!(!nonzero.is_empty());
    let top = nonzero.iter().map(|a| a.psi).fold(0.0, f64::max);
    assert_eq!(rep.le, top);
    assert!(le_norm(&f, 50.0, 60.0, 1.0, 2).is_err());
}

#[test]
fn minkowski_profiles_follow_the_closed_form() {
    let g = grid(0, 64);
    let d = short_pulse_boundary(-10.0, 0.1, &PulseProfile::default(), &g).unwrap();
    let f = crate::solver::minkowski_reference(&d, &g).unwrap();
    let rows = sup_profiles(&f, &SupWeights::unweighted());
    let s0 = d.sup_outgoing();
    for row in rows.iter().step_by(8) {
        // sup over ū of (ū − u₀)/(ū − u) bump(ū/δ), bounded by the scale at ū = δ/2
        let ub = 0.05;
        let want = s0 * (ub + 10.0) / (ub - row.u);
        assert!(row.phi >= want * (1.0 - 1e-12));
        assert!(row.phi <= s0 * (0.1 + 10.0) / (-row.u));
    }
}
