//! Per-cone weighted sup norms of φ and its first derivatives.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::japanese;
use crate::solver::Field;

/// Each sup is multiplied by δ^delta_power ⟨u⟩^u_power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupWeights {
    pub delta: f64,
    pub delta_power: f64,
    pub u_power: f64,
}

impl SupWeights {
    pub fn unweighted() -> Self {
        SupWeights {
            delta: 1.0,
            delta_power: 0.0,
            u_power: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupProfile {
    pub u: f64,
    pub phi: f64,
    pub l: f64,
    pub lb: f64,
    pub y: f64,
    pub nabla: f64,
    /// max(|L̄φ|, |∇̸φ|), the good derivatives.
    pub dbar: f64,
}

/// One row per outgoing cone holding at least one uncapped node; the sup
/// runs over the uncapped nodes of the cone and the sphere quadrature nodes.
pub fn sup_profiles(field: &Field, weights: &SupWeights) -> Vec<SupProfile> {
    let g = field.grid();
    let sphere = g.sphere();
    let nn = sphere.nnodes();
    let (mut p, mut l, mut lb, mut dth, mut dph) = (vec![0.0; nn], vec![0.0; nn], vec![0.0; nn], vec![0.0; nn], vec![0.0; nn]);
    let mut rows = Vec::new();
    for i in 0..=g.nu() {
        if field.is_capped(i, 0) {
            break;
        }
        let mut row = SupProfile {
            u: g.u(i),
            phi: 0.0,
            l: 0.0,
            lb: 0.0,
            y: 0.0,
            nabla: 0.0,
            dbar: 0.0,
        };
        for j in (0..=g.nub()).take_while(|&j| !field.is_capped(i, j)) {
            let geo = field.geometry(i, j);
            sphere.synthesize(field.phi(i, j), &mut p);
            sphere.synthesize(field.lphi(i, j), &mut l);
            sphere.synthesize(field.lbphi(i, j), &mut lb);
            sphere.synthesize_gradient(field.phi(i, j), &mut dth, &mut dph);
            for n in 0..nn {
                let nab = (dth[n] * dth[n] + dph[n] * dph[n]).sqrt() / geo.r;
                row.phi = row.phi.max(p[n].abs());
                row.l = row.l.max(l[n].abs());
                row.lb = row.lb.max(lb[n].abs());
                row.y = row.y.max(lb[n].abs() / geo.eta);
                row.nabla = row.nabla.max(nab);
            }
        }
        row.dbar = row.lb.max(row.nabla);
        let w = weights.delta.powf(weights.delta_power) * japanese(row.u).powf(weights.u_power);
        for v in [&mut row.phi, &mut row.l, &mut row.lb, &mut row.y, &mut row.nabla, &mut row.dbar] {
            *v *= w;
        }
        rows.push(row);
    }
    rows
}

/// Columns: u, phi, L, Lb, Y, nabla, dbar.
pub fn write_profiles_csv<W: Write>(rows: &[SupProfile], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["u", "phi", "L", "Lb", "Y", "nabla", "dbar"])?;
    for r in rows {
        wr.write_record(&[r.u, r.phi, r.l, r.lb, r.y, r.nabla, r.dbar].map(|v| format!("{v:e}")))?;
    }
    wr.flush()?;
    Ok(())
}
