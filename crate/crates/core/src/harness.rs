//! Experiment orchestration: single runs from a TOML config, δ-sweeps with a
//! fixed number of cells per δ, power-law fits, refinement studies and the
//! null versus non-null comparison.
//!
//! Everything a run writes is a pure function of its config, so repeated runs
//! produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::angular::{SphereGrid, SphereSpec};
use crate::data::{scattering_profile, short_pulse_boundary, AngularProfile, CharacteristicData, PulseProfile};
use crate::diagnostics::{
    cone_energy, cone_l2_sq, energy_identity_residual, le_norm, sup_profiles, write_profiles_csv, ConeSpec, EnergyKind,
    EnergyReport, IdentityResidual, MultiplierName, MultiplierSpec, Quantity, Rect, SupProfile, SupWeights,
};
use crate::error::{Error, Result};
use crate::geometry::{japanese, Background};
use crate::nullforms::NullFormSpec;
use crate::solver::{evolve_with, minkowski_reference, EvolveOptions, Field, NullGrid, DEFAULT_BLOWUP_THRESHOLD, DEFAULT_ETA_MIN};

/// Environment variable holding the worker count for sweeps and studies.
pub const THREADS_ENV: &str = "NULLPULSE_THREADS";

/// Fewest cells allowed across the pulse width.
pub const MIN_CELLS_PER_DELTA: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    /// m = 0 selects the flat validation branch.
    pub m: f64,
    pub r_floor: Option<f64>,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig { m: 1.0, r_floor: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub u0: f64,
    pub u_end: f64,
    pub nu: usize,
    /// Absolute ū extent; when absent it is `ub_span` · δ.
    pub ub_end: Option<f64>,
    pub ub_span: f64,
    pub cells_per_delta: usize,
    /// Explicit ū cell count, which turns off the cells-per-δ rule.
    pub nub: Option<usize>,
    pub lmax: usize,
    pub ntheta: Option<usize>,
    pub nphi: Option<usize>,
    pub eta_min: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            u0: -10.0,
            u_end: 1.0,
            nu: 352,
            ub_end: None,
            ub_span: 1.0,
            cells_per_delta: 128,
            nub: None,
            lmax: 0,
            ntheta: None,
            nphi: None,
            eta_min: DEFAULT_ETA_MIN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// δ^{1/2}/|u₀| scaling on C_{u₀}.
    #[default]
    ShortPulse,
    /// δ^{1/2} scaling without the 1/|u₀| factor.
    Scattering,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    pub delta: f64,
    pub amplitude: f64,
    /// Rescales the amplitude so the data's sup |φ| equals this.
    pub target_sup: Option<f64>,
    /// Angular factor Y_ℓm; constant when `l` is absent.
    pub l: Option<usize>,
    pub m: i64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DataKind::ShortPulse,
            delta: 0.05,
            amplitude: 1.0,
            target_sup: None,
            l: None,
            m: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NullFormConfig {
    pub kind: String,
}

impl Default for NullFormConfig {
    fn default() -> Self {
        NullFormConfig { kind: "Q0".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Cone functionals tabulated on every cone.
    pub energies: Vec<String>,
    /// Ω-commutation depth of the tabulated functionals.
    pub order: usize,
    /// Multipliers whose energy identity is checked on the uncapped rectangle.
    pub identity: Vec<String>,
    pub profiles: bool,
    pub tracked: bool,
    /// Local-energy norm over t ∈ [t0, t1] when both are given.
    pub le_t0: Option<f64>,
    pub le_t1: Option<f64>,
    pub le_r0: f64,
    pub blowup_threshold: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            energies: vec!["E".into(), "Ebar".into()],
            order: 0,
            identity: vec!["xi1".into()],
            profiles: true,
            tracked: true,
            le_t0: None,
            le_t1: None,
            le_r0: 1.0,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointFormat {
    #[default]
    None,
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Nothing is written when absent.
    pub dir: Option<PathBuf>,
    pub checkpoint: CheckpointFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub background: BackgroundConfig,
    pub grid: GridConfig,
    pub data: DataConfig,
    pub nullform: NullFormConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn ub_end(&self) -> f64 {
        self.grid.ub_end.unwrap_or(self.grid.ub_span * self.data.delta)
    }

    pub fn nub(&self) -> usize {
        self.grid.nub.unwrap_or_else(|| {
            (self.grid.cells_per_delta as f64 * self.ub_end() / self.data.delta).round() as usize
        })
    }

    pub fn background(&self) -> Result<Background> {
        let bg = if self.background.m == 0.0 {
            Background::minkowski()
        } else {
            Background::schwarzschild(self.background.m)?
        };
        match self.background.r_floor {
            Some(f) => bg.with_r_floor(f),
            None => Ok(bg),
        }
    }

    pub fn null_grid(&self) -> Result<NullGrid> {
        let g = &self.grid;
        let sphere = match (g.ntheta, g.nphi) {
            (None, None) => SphereGrid::new(g.lmax),
            (t, p) => {
                let d = SphereGrid::new(g.lmax).spec();
                SphereGrid::from_spec(SphereSpec {
                    lmax: g.lmax,
                    ntheta: t.unwrap_or(d.ntheta),
                    nphi: p.unwrap_or(d.nphi),
                })?
            }
        };
        NullGrid::new(g.u0, g.u_end, self.ub_end(), g.nu, self.nub(), Arc::new(sphere), g.eta_min)
    }

    pub fn null_form(&self) -> Result<NullFormSpec> {
        NullFormSpec::parse(&self.nullform.kind)
    }

    pub fn profile(&self) -> PulseProfile {
        PulseProfile {
            amplitude: self.data.amplitude,
            angular: match self.data.l {
                None => AngularProfile::Constant,
                Some(l) => AngularProfile::Harmonic { l, m: self.data.m },
            },
        }
    }

    /// Checks the mutual consistency of δ, the grid and the requests.
    pub fn validate(&self) -> Result<()> {
        let delta = self.data.delta;
        if !(delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {delta}")));
        }
        let cells = self.nub() as f64 * delta / self.ub_end();
        if cells + 1e-9 < MIN_CELLS_PER_DELTA as f64 {
            return Err(Error::Resolution(format!(
                "delta = {delta} spans {cells:.1} ub cells, need at least {MIN_CELLS_PER_DELTA}"
            )));
        }
        if self.data.kind == DataKind::ShortPulse && !(self.grid.u0 < 0.0) {
            return Err(Error::Config(format!("short-pulse data needs u0 < 0, got {}", self.grid.u0)));
        }
        if self.diagnostics.order > crate::diagnostics::MAX_COMMUTATION {
            return Err(Error::Config(format!(
                "commutation order {} exceeds {}",
                self.diagnostics.order,
                crate::diagnostics::MAX_COMMUTATION
            )));
        }
        // surface unknown names before any evolution work
        self.null_form()?;
        for e in &self.diagnostics.energies {
            EnergyKind::parse(e)?;
        }
        for x in &self.diagnostics.identity {
            MultiplierName::parse(x)?;
        }
        self.null_grid()?;
        self.background()?;
        Ok(())
    }

    /// Same config at a different δ, keeping the cells per δ.
    pub fn with_delta(&self, delta: f64) -> Self {
        let mut c = self.clone();
        c.data.delta = delta;
        c
    }

    /// Same config with both cell counts multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let mut c = self.clone();
        c.grid.nu *= factor;
        match c.grid.nub.as_mut() {
            Some(n) => *n *= factor,
            None => c.grid.cells_per_delta *= factor,
        }
        c
    }

    pub fn characteristic_data(&self, grid: &NullGrid) -> Result<CharacteristicData> {
        let mut profile = self.profile();
        let make = |p: &PulseProfile| match self.data.kind {
            DataKind::ShortPulse => short_pulse_boundary(self.grid.u0, self.data.delta, p, grid),
            DataKind::Scattering => scattering_profile(self.data.delta, p, grid),
        };
        let data = make(&profile)?;
        let Some(target) = self.data.target_sup else {
            return Ok(data);
        };
        let sup = data.sup_outgoing();
        if sup == 0.0 {
            return Err(Error::Config("cannot rescale zero data to a target sup".into()));
        }
        profile.amplitude *= target / sup;
        make(&profile)
    }
}

/// The fixed set of quantities compared across a δ-sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracked {
    /// sup |Lφ| over the part of the grid with u ≤ 1.
    pub sup_l: f64,
    /// sup max(|L̄φ|, |∇̸φ|) over the same set.
    pub sup_dbar: f64,
    /// ‖Lφ‖² on C̄_δ ∩ {u ≤ 1}.
    pub last_cone_l2: f64,
    /// E on the cone halfway between u₀ and min(u_end, 1).
    pub e_mid: f64,
    /// (name, order, value) of the incoming family on C̄_δ ∩ {u ≤ 1}.
    pub last_cone: Vec<(String, usize, f64)>,
    /// (u, δ^{1/2} sup_{C_u} |Lφ|).
    pub weighted_l: Vec<(f64, f64)>,
    /// (u, E^deg/E^ndeg, mean of η over the cone).
    pub deg_ratio: Vec<(f64, f64, f64)>,
    /// (u, E^ndeg).
    pub endeg: Vec<(f64, f64)>,
}

const LAST_CONE_FAMILY: [EnergyKind; 3] = [EnergyKind::Ebar, EnergyKind::LFbar, EnergyKind::SFbar];

fn last_row(field: &Field, u_max: f64) -> usize {
    let g = field.grid();
    (0..=g.nu()).take_while(|&i| g.u(i) <= u_max + 1e-12 * (1.0 + u_max.abs())).last().unwrap_or(0)
}

pub fn tracked_quantities(field: &Field, profiles: &[SupProfile], delta: f64, order: usize) -> Result<Tracked> {
    let g = field.grid();
    let in_r1: Vec<&SupProfile> = profiles.iter().filter(|p| p.u <= 1.0 + 1e-12).collect();
    let sup_l = in_r1.iter().map(|p| p.l).fold(0.0, f64::max);
    let sup_dbar = in_r1.iter().map(|p| p.dbar).fold(0.0, f64::max);
    let i1 = last_row(field, 1.0);
    let j_last = g.ub_index(delta.min(g.ub_end()));
    // the incoming cone is cut where it first meets the cap
    let i_cap = (0..=i1).take_while(|&i| !field.is_capped(i, j_last)).last().unwrap_or(0);
    let last = ConeSpec::incoming(j_last, 0, i_cap);
    let last_cone_l2 = cone_l2_sq(Quantity::L, field, &last)?;
    let mut last_cone = Vec::new();
    for k in 0..=order.min(g.sphere().lmax().min(crate::diagnostics::MAX_COMMUTATION)) {
        for kind in LAST_CONE_FAMILY {
            last_cone.push((kind.name().to_string(), k, cone_energy(kind, field, &last, delta, k)?));
        }
    }
    let mid = 0.5 * (g.u0() + g.u_end().min(1.0));
    let i_mid = g.u_index(mid);
    let e_mid = cone_energy(EnergyKind::E, field, &ConeSpec::full_outgoing(field, i_mid), delta, 0)?;
    let weighted_l = profiles.iter().map(|p| (p.u, delta.sqrt() * p.l)).collect();
    let mut deg_ratio = Vec::new();
    let mut endeg = Vec::new();
    for i in (0..=g.nu()).take_while(|&i| field.cone_uncapped(i)) {
        let cone = ConeSpec::full_outgoing(field, i);
        let nd = cone_energy(EnergyKind::Endeg, field, &cone, delta, 0)?;
        let d = cone_energy(EnergyKind::Edeg, field, &cone, delta, 0)?;
        let (j0, j1) = cone.range;
        let eta_mean = (j0..=j1).map(|j| field.geometry(i, j).eta).sum::<f64>() / (j1 - j0 + 1) as f64;
        endeg.push((g.u(i), nd));
        if nd > 0.0 {
            deg_ratio.push((g.u(i), d / nd, eta_mean));
        }
    }
    Ok(Tracked {
        sup_l,
        sup_dbar,
        last_cone_l2,
        e_mid,
        last_cone,
        weighted_l,
        deg_ratio,
        endeg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Blowup,
    Failed,
}

/// Structured record of a run that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub error: String,
    /// First failing cell for blowups.
    pub cell: Option<(usize, usize)>,
    pub at: Option<(f64, f64)>,
    pub sup_history: Vec<(f64, f64)>,
}

impl FailureRecord {
    fn from_error(e: &Error) -> Self {
        match e {
            Error::Blowup(b) => FailureRecord {
                error: e.to_string(),
                cell: Some((b.i, b.j)),
                at: Some((b.u, b.ub)),
                sup_history: b.sup_history.clone(),
            },
            _ => FailureRecord {
                error: e.to_string(),
                cell: None,
                at: None,
                sup_history: Vec::new(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub config_hash: String,
    pub null_form: String,
    pub delta: f64,
    pub data_sup: f64,
    pub sup_phi: Option<f64>,
    pub report: EnergyReport,
    pub profiles: Vec<SupProfile>,
    pub tracked: Option<Tracked>,
    pub identities: Vec<(String, IdentityResidual)>,
    pub failure: Option<FailureRecord>,
    #[serde(skip)]
    pub field: Option<Arc<Field>>,
}

impl RunOutcome {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Evolves and runs the requested diagnostics. Solver and diagnostic errors
/// are folded into the outcome's failure record; only config errors escape.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let grid = config.null_grid()?;
    let bg = config.background()?;
    let spec = config.null_form()?;
    let data = config.characteristic_data(&grid)?;
    let mut out = RunOutcome {
        status: RunStatus::Completed,
        config_hash: config.hash(),
        null_form: spec.label(),
        delta: config.data.delta,
        data_sup: data.sup_outgoing(),
        sup_phi: None,
        report: EnergyReport {
            delta: config.data.delta,
            ..EnergyReport::default()
        },
        profiles: Vec::new(),
        tracked: None,
        identities: Vec::new(),
        failure: None,
        field: None,
    };
    let opts = EvolveOptions {
        blowup_threshold: config.diagnostics.blowup_threshold,
    };
    let field = match evolve_with(&grid, &data, &spec, &bg, opts) {
        Ok(f) => f,
        Err(e) => {
            out.status = if matches!(e, Error::Blowup(_)) {
                RunStatus::Blowup
            } else {
                RunStatus::Failed
            };
            out.failure = Some(FailureRecord::from_error(&e));
            out.report.metadata = metadata(config, &out);
            write_outputs(config, &out)?;
            return Ok(out);
        }
    };
    out.sup_phi = Some(field.sup_abs_phi());
    if let Err(e) = diagnose(config, &field, &spec, &mut out) {
        out.status = RunStatus::Failed;
        out.failure = Some(FailureRecord::from_error(&e));
    }
    out.report.metadata = metadata(config, &out);
    if config.output.checkpoint != CheckpointFormat::None {
        if let Some(dir) = &config.output.dir {
            let header = serde_json::json!({ "config_hash": out.config_hash, "null_form": out.null_form });
            field.write_checkpoint(&dir.join("checkpoint"), header, config.output.checkpoint == CheckpointFormat::Binary)?;
        }
    }
    out.field = Some(Arc::new(field));
    write_outputs(config, &out)?;
    Ok(out)
}

fn diagnose(config: &RunConfig, field: &Field, spec: &NullFormSpec, out: &mut RunOutcome) -> Result<()> {
    let d = &config.diagnostics;
    let delta = config.data.delta;
    let kinds = d.energies.iter().map(|e| EnergyKind::parse(e)).collect::<Result<Vec<_>>>()?;
    let k = d.order.min(field.grid().sphere().lmax());
    out.report = EnergyReport::tabulate(field, &kinds, delta, k)?;
    let needs_profiles = d.profiles || d.tracked;
    if needs_profiles {
        out.profiles = sup_profiles(field, &SupWeights::unweighted());
    }
    if d.tracked {
        out.tracked = Some(tracked_quantities(field, &out.profiles, delta, k)?);
    }
    let m = field.background().m();
    for name in &d.identity {
        let spec_x = match MultiplierName::parse(name)? {
            MultiplierName::Xi1 => MultiplierSpec::xi1(delta),
            MultiplierName::Xi2 => MultiplierSpec::xi2(delta),
            MultiplierName::Redshift => MultiplierSpec::redshift(delta, m),
            MultiplierName::ConformalK => MultiplierSpec::conformal_k(),
            MultiplierName::Xrho => MultiplierSpec::xrho(1.0, 1.0),
        };
        let rect = Rect::uncapped(field);
        let res = energy_identity_residual(field, &spec_x, &rect, spec)?;
        out.report.scalars.push((format!("identity_{}_relative", spec_x.name.label()), res.relative));
        out.identities.push((spec_x.name.label().to_string(), res));
    }
    if let (Some(t0), Some(t1)) = (d.le_t0, d.le_t1) {
        let le = le_norm(field, t0, t1, d.le_r0, 8)?;
        out.report.scalars.push(("LE".into(), le.le));
        out.report.scalars.push(("LE1".into(), le.le1));
    }
    out.report.scalars.push(("sup_phi".into(), field.sup_abs_phi()));
    Ok(())
}

fn metadata(config: &RunConfig, out: &RunOutcome) -> serde_json::Value {
    serde_json::json!({
        "config_hash": out.config_hash,
        "seed": config.seed,
        "null_form": out.null_form,
        "status": out.status,
        "data_sup": out.data_sup,
        "grid": { "nu": config.grid.nu, "nub": config.nub(), "ub_end": config.ub_end(), "lmax": config.grid.lmax },
    })
}

fn write_outputs(config: &RunConfig, out: &RunOutcome) -> Result<()> {
    let Some(dir) = &config.output.dir else {
        return Ok(());
    };
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    fs::write(dir.join("outcome.json"), serde_json::to_string_pretty(out)?)?;
    out.report.write_csv(fs::File::create(dir.join("energies.csv"))?)?;
    if !out.profiles.is_empty() {
        write_profiles_csv(&out.profiles, fs::File::create(dir.join("profiles.csv"))?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for two points.
    pub stderr: f64,
    /// RMS residual in log y.
    pub residual_rms: f64,
    pub n: usize,
}

/// Least squares of log y against log x.
pub fn fit_powerlaw(points: &[(f64, f64)]) -> Result<PowerFit> {
    if points.len() < 3 {
        return Err(Error::Domain(format!("need at least 3 points to fit, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0) || !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Domain(format!("power-law fit needs positive finite values, got {p:?}")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("power-law fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(PowerFit {
        slope,
        intercept,
        stderr: (ss / (n - 2.0) / sxx).sqrt(),
        residual_rms: (ss / n).sqrt(),
        n: points.len(),
    })
}

/// Runs `f` on a pool sized by [`THREADS_ENV`], or rayon's default.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok());
    match threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMember {
    pub delta: f64,
    pub status: RunStatus,
    pub tracked: Option<Tracked>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedFit {
    pub quantity: String,
    pub fit: Option<PowerFit>,
    /// Why the fit was skipped, if it was.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub members: Vec<SweepMember>,
    pub fits: Vec<NamedFit>,
}

impl SweepResult {
    pub fn fit(&self, quantity: &str) -> Option<&PowerFit> {
        self.fits.iter().find(|f| f.quantity == quantity).and_then(|f| f.fit.as_ref())
    }
}

/// Fewest δ values a sweep accepts.
pub const MIN_SWEEP_DELTAS: usize = 4;

/// Independent runs at each δ (outputs under `<dir>/delta_<δ>`), then fits of
/// every tracked scalar against δ.
pub fn sweep(base: &RunConfig, deltas: &[f64]) -> Result<SweepResult> {
    if deltas.len() < MIN_SWEEP_DELTAS {
        return Err(Error::Config(format!("a sweep needs at least {MIN_SWEEP_DELTAS} deltas, got {}", deltas.len())));
    }
    let mut sorted = deltas.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let ratios: Vec<f64> = sorted.windows(2).map(|w| w[0] / w[1]).collect();
    if ratios.iter().any(|r| !(*r > 1.0) || (r - ratios[0]).abs() > 1e-6 * ratios[0]) {
        return Err(Error::Config(format!("sweep deltas must be geometrically spaced, got {deltas:?}")));
    }
    let configs: Vec<RunConfig> = deltas
        .iter()
        .map(|&d| {
            let mut c = base.with_delta(d);
            c.diagnostics.tracked = true;
            if let Some(dir) = &base.output.dir {
                c.output.dir = Some(dir.join(format!("delta_{d}")));
            }
            c
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let members: Vec<SweepMember> = with_pool(|| {
        configs
            .par_iter()
            .map(|c| match run(c) {
                Ok(o) => SweepMember {
                    delta: c.data.delta,
                    status: o.status,
                    tracked: o.tracked,
                    failure: o.failure.map(|f| f.error),
                },
                Err(e) => SweepMember {
                    delta: c.data.delta,
                    status: RunStatus::Failed,
                    tracked: None,
                    failure: Some(e.to_string()),
                },
            })
            .collect()
    });
    let quantities: [(&str, fn(&Tracked) -> f64); 4] = [
        ("sup_l", |t| t.sup_l),
        ("sup_dbar", |t| t.sup_dbar),
        ("last_cone_l2", |t| t.last_cone_l2),
        ("e_mid", |t| t.e_mid),
    ];
    let mut fits: Vec<NamedFit> = quantities
        .iter()
        .map(|(name, get)| fit_member_series(name, &members, |t| Some(get(t))))
        .collect();
    if let Some(first) = members.iter().find_map(|m| m.tracked.as_ref()) {
        for (name, k, _) in &first.last_cone {
            let q = format!("last_cone_{name}_{k}");
            fits.push(fit_member_series(&q, &members, |t| {
                t.last_cone.iter().find(|(n, kk, _)| n == name && kk == k).map(|e| e.2)
            }));
        }
    }
    Ok(SweepResult { members, fits })
}

fn fit_member_series(name: &str, members: &[SweepMember], get: impl Fn(&Tracked) -> Option<f64>) -> NamedFit {
    let failed = members.iter().filter(|m| m.tracked.is_none()).count();
    let pts: Vec<(f64, f64)> = members
        .iter()
        .filter_map(|m| m.tracked.as_ref().and_then(&get).map(|v| (m.delta, v)))
        .collect();
    let note = if failed > 0 {
        Some(format!("{failed} member(s) failed"))
    } else {
        None
    };
    if pts.iter().all(|p| p.1 == 0.0) {
        return NamedFit {
            quantity: name.into(),
            fit: None,
            note: Some("degenerate: every value is zero".into()),
        };
    }
    match fit_powerlaw(&pts) {
        Ok(f) => NamedFit {
            quantity: name.into(),
            fit: Some(f),
            note,
        },
        Err(e) => NamedFit {
            quantity: name.into(),
            fit: None,
            note: Some(e.to_string()),
        },
    }
}

/// Fitted exponent of δ^{1/2} sup_{C_u}|Lφ| against ⟨u⟩ over u ∈ [lo, hi].
pub fn u_decay_fit(tracked: &Tracked, lo: f64, hi: f64) -> Result<PowerFit> {
    let pts: Vec<(f64, f64)> = tracked
        .weighted_l
        .iter()
        .filter(|(u, _)| *u >= lo - 1e-12 && *u <= hi + 1e-12)
        .map(|&(u, v)| (japanese(u), v))
        .collect();
    fit_powerlaw(&pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceMode {
    /// Errors against the exact flat solution.
    Oracle,
    /// Differences of successive levels.
    SelfConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Ok,
    /// The error sequence is not monotone.
    Inconclusive,
    /// All errors vanish, so no order is defined.
    Undefined,
    /// A level failed to run.
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub mode: ConvergenceMode,
    pub status: ConvergenceStatus,
    /// (nu, nub) at each level.
    pub resolutions: Vec<(usize, usize)>,
    pub errors: Vec<f64>,
    /// log₂ of successive error ratios.
    pub orders: Vec<f64>,
    /// The order between the two finest comparisons.
    pub order: Option<f64>,
    pub note: Option<String>,
}

/// Max |φ_a − φ_b| over the nodes of the coarser grid that neither caps.
fn coarse_difference(coarse: &Field, fine: &Field, factor: usize) -> f64 {
    let g = coarse.grid();
    let mut worst: f64 = 0.0;
    for i in 0..=g.nu() {
        for j in 0..=g.nub() {
            if coarse.is_capped(i, j) || fine.is_capped(i * factor, j * factor) {
                continue;
            }
            for (a, b) in coarse.phi(i, j).iter().zip(fine.phi(i * factor, j * factor)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// Refinement study at h, h/2, …, `levels` grids in all. Linear spherically
/// symmetric flat runs are compared with the exact solution; anything else
/// self-converges, which needs at least three levels.
pub fn convergence(base: &RunConfig, levels: usize) -> Result<ConvergenceReport> {
    if levels < 3 {
        return Err(Error::Config(format!("a convergence study needs at least 3 levels, got {levels}")));
    }
    let configs: Vec<RunConfig> = (0..levels)
        .map(|k| {
            let mut c = base.refined(1 << k);
            c.output.dir = None;
            c.diagnostics = DiagnosticsConfig {
                energies: Vec::new(),
                identity: Vec::new(),
                profiles: false,
                tracked: false,
                ..base.diagnostics.clone()
            };
            c
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let bg = base.background()?;
    let oracle = bg.is_flat() && base.null_form()?.is_linear() && base.data.l.unwrap_or(0) == 0;
    let resolutions = configs.iter().map(|c| (c.grid.nu, c.nub())).collect();
    let fields: Vec<Result<(Field, Option<Field>)>> = with_pool(|| {
        configs
            .par_iter()
            .map(|c| {
                let grid = c.null_grid()?;
                let data = c.characteristic_data(&grid)?;
                let spec = c.null_form()?;
                let opts = EvolveOptions {
                    blowup_threshold: c.diagnostics.blowup_threshold,
                };
                let f = evolve_with(&grid, &data, &spec, &bg, opts)?;
                let exact = if oracle {
                    Some(minkowski_reference(&data, &grid)?)
                } else {
                    None
                };
                Ok((f, exact))
            })
            .collect()
    });
    let mode = if oracle {
        ConvergenceMode::Oracle
    } else {
        ConvergenceMode::SelfConvergence
    };
    let mut ok = Vec::with_capacity(levels);
    for f in fields {
        match f {
            Ok(v) => ok.push(v),
            Err(e) => {
                return Ok(ConvergenceReport {
                    mode,
                    status: ConvergenceStatus::Failed,
                    resolutions,
                    errors: Vec::new(),
                    orders: Vec::new(),
                    order: None,
                    note: Some(e.to_string()),
                })
            }
        }
    }
    let errors: Vec<f64> = if oracle {
        ok.iter().map(|(f, e)| coarse_difference(f, e.as_ref().expect("oracle level"), 1)).collect()
    } else {
        ok.windows(2).map(|w| coarse_difference(&w[0].0, &w[1].0, 2)).collect()
    };
    Ok(summarize_convergence(mode, resolutions, errors))
}

fn summarize_convergence(mode: ConvergenceMode, resolutions: Vec<(usize, usize)>, errors: Vec<f64>) -> ConvergenceReport {
    if errors.iter().all(|e| *e == 0.0) {
        return ConvergenceReport {
            mode,
            status: ConvergenceStatus::Undefined,
            resolutions,
            errors,
            orders: Vec::new(),
            order: None,
            note: Some("errors vanish identically".into()),
        };
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    ConvergenceReport {
        mode,
        status: if monotone {
            ConvergenceStatus::Ok
        } else {
            ConvergenceStatus::Inconclusive
        },
        resolutions,
        order: orders.last().copied(),
        orders,
        errors,
        note: if monotone {
            None
        } else {
            Some("error sequence is not monotone".into())
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NullComparison {
    pub null_run: RunStatus,
    pub null_sup: Option<f64>,
    pub nonnull_run: RunStatus,
    pub nonnull_sup: Option<f64>,
    pub nonnull_failure: Option<FailureRecord>,
    /// sup |φ| of the non-null run over the null run's, when both completed.
    pub ratio: Option<f64>,
}

/// The same config evolved with `base`'s null form and with (Lφ)².
pub fn compare_null(base: &RunConfig) -> Result<NullComparison> {
    let mut lean = base.clone();
    lean.output.dir = None;
    lean.diagnostics.energies = Vec::new();
    lean.diagnostics.identity = Vec::new();
    let mut nonnull = lean.clone();
    nonnull.nullform.kind = "nonnull_l2".into();
    let (a, b) = with_pool(|| rayon::join(|| run(&lean), || run(&nonnull)));
    let (a, b) = (a?, b?);
    let ratio = match (a.sup_phi, b.sup_phi) {
        (Some(x), Some(y)) if x > 0.0 && b.is_completed() => Some(y / x),
        _ => None,
    };
    Ok(NullComparison {
        null_run: a.status,
        null_sup: a.sup_phi,
        nonnull_run: b.status,
        nonnull_sup: b.sup_phi,
        nonnull_failure: b.failure,
        ratio,
    })
}
