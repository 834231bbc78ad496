//! Experiment runners: dispersion scans, transport, storage/reversal and the
//! adiabatic-elimination check, plus the named preset configurations.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    centroid_velocity, fit_gaussian, make_excitation, storage_efficiency, transport_metrics, ExcitationKind,
    ExcitationSpec, ReleaseDirection, StorageMetrics, TransportMetrics, DEFAULT_REFLECTION_MARGIN,
};
use crate::dynamics::{
    evolve_exact, evolve_schedule, normalized_profile, DenseOperator, Schedule, StateVector, Trajectory,
    DEFAULT_DT,
};
use crate::error::{Error, Result};
use crate::lattice::{
    adiabatic_reduce, build_chain_hamiltonian, build_sandwich_hamiltonian, build_sawtooth_hamiltonian, dispersion,
    group_velocity, ChainSpec, DefectSpec, SandwichSpec, SawtoothOperator, SawtoothSpec,
};
use crate::phase::Phase;

pub const DEFAULT_SAMPLE_DT: f64 = 0.25;
pub const DEFAULT_T_FINAL: f64 = 60.0;
/// Largest normalized norm tolerated on either end site of an auto-sized chain.
pub const EDGE_LEAK_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DispersionScan,
    TransportSingleSite,
    TransportGaussian,
    Storage,
    ReductionCheck,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::DispersionScan => "dispersion_scan",
            ExperimentKind::TransportSingleSite => "transport_single_site",
            ExperimentKind::TransportGaussian => "transport_gaussian",
            ExperimentKind::Storage => "storage",
            ExperimentKind::ReductionCheck => "reduction_check",
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, ExperimentKind::TransportSingleSite | ExperimentKind::TransportGaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectConfig {
    pub site: i64,
    #[serde(default)]
    pub v_real: f64,
    #[serde(default)]
    pub xi_imag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub kappa: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub phi: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_origin: Option<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub defects: Vec<DefectConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationShape {
    SingleSite,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    pub kind: ExcitationShape,
    pub n0: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Phase>,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_true() -> bool {
    true
}

impl ExcitationConfig {
    pub fn single_site(n0: i64) -> Self {
        ExcitationConfig {
            kind: ExcitationShape::SingleSite,
            n0,
            w0: None,
            q0: None,
            normalize: true,
        }
    }

    pub fn gaussian(n0: i64, w0: f64, q0: f64) -> Self {
        ExcitationConfig {
            kind: ExcitationShape::Gaussian,
            n0,
            w0: Some(w0),
            q0: Some(Phase(q0)),
            normalize: true,
        }
    }

    pub fn to_spec(&self) -> Result<ExcitationSpec> {
        let kind = match self.kind {
            ExcitationShape::SingleSite => ExcitationKind::SingleSite { n0: self.n0 },
            ExcitationShape::Gaussian => ExcitationKind::Gaussian {
                n0: self.n0,
                w0: self.w0.ok_or_else(|| Error::config("excitation.w0", "required for a Gaussian"))?,
                q0: self.q0.ok_or_else(|| Error::config("excitation.q0", "required for a Gaussian"))?.0,
            },
        };
        Ok(ExcitationSpec {
            kind,
            normalize: self.normalize,
        })
    }

    fn width(&self) -> f64 {
        match self.kind {
            ExcitationShape::SingleSite => 0.0,
            ExcitationShape::Gaussian => self.w0.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_prime: Option<f64>,
}

fn default_t_final() -> f64 {
    DEFAULT_T_FINAL
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_sample_dt() -> f64 {
    DEFAULT_SAMPLE_DT
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            t_final: DEFAULT_T_FINAL,
            dt: DEFAULT_DT,
            sample_dt: DEFAULT_SAMPLE_DT,
            t_prime: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    /// `[left, right]` barrier sites; defaults to the outermost defects, or
    /// the excitation site on a defect-free chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barriers: Option<[i64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflection_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retrieval {
    /// Release phase `phi = -q0`: the packet continues in its incident direction.
    Forward,
    /// Release phase `phi = +q0`: the packet comes back.
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Incidence {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageConfig {
    pub half_width: i64,
    pub v_c: f64,
    pub xi: f64,
    #[serde(default = "default_retrieval")]
    pub retrieval: Retrieval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incidence: Option<Incidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<i64>,
}

fn default_retrieval() -> Retrieval {
    Retrieval::Forward
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionConfig {
    pub phis: Vec<Phase>,
    #[serde(default = "default_q_points")]
    pub q_points: usize,
}

fn default_q_points() -> usize {
    801
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BInit {
    /// Start on the exact invariant slow manifold of the two-sublattice model
    /// and propagate within it.
    SlowManifold,
    /// B amplitudes slaved to A by the leading-order relation; full model
    /// propagated directly.
    Slaved,
    /// B amplitudes zero; full model propagated directly.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    pub j_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_init: Option<BInit>,
}

/// One experiment, as read from a config document or a preset. Sections not
/// used by the experiment kind must be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub lattice: LatticeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excitation: Option<ExcitationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<DispersionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<ReductionConfig>,
    /// Written into manifests; ignored when a manifest is read back.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<toml::Table>,
}

fn finite(key: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be finite, got {x}")))
    }
}

/// Site range `[lo, hi]` wide enough that a packet starting at `n0` with
/// width `w0` cannot reach either end within `t_final` at the maximal group
/// velocity `2 kappa`. The extra cube-root term covers the Airy-type front of
/// a spreading packet.
pub fn auto_range(n0: i64, w0: f64, kappa: f64, t_final: f64) -> (i64, i64) {
    let reach = 2.0 * kappa * t_final;
    let margin = 10.0 + 4.0 * reach.cbrt().ceil();
    let half = 4.0 * w0 + reach + margin;
    ((n0 as f64 - half).floor() as i64, (n0 as f64 + half).ceil() as i64)
}

impl ExperimentConfig {
    pub fn timing(&self) -> TimingConfig {
        self.timing.clone().unwrap_or_default()
    }

    fn check_sections(&self) -> Result<()> {
        let kind = self.experiment;
        let needs = |present: bool, key: &str, wanted: bool| -> Result<()> {
            match (present, wanted) {
                (false, true) => Err(Error::config(key, format!("section required for {}", kind.as_str()))),
                (true, false) => Err(Error::config(key, format!("section not used by {}", kind.as_str()))),
                _ => Ok(()),
            }
        };
        let transport = kind.is_transport();
        let storage = kind == ExperimentKind::Storage;
        let scan = kind == ExperimentKind::DispersionScan;
        let reduction = kind == ExperimentKind::ReductionCheck;
        needs(self.excitation.is_some(), "excitation", !scan)?;
        needs(self.dispersion.is_some(), "dispersion", scan)?;
        needs(self.storage.is_some(), "storage", storage)?;
        needs(self.reduction.is_some(), "reduction", reduction)?;
        if self.transport.is_some() && !transport {
            return Err(Error::config("transport", format!("section not used by {}", kind.as_str())));
        }
        if scan && self.timing.is_some() {
            return Err(Error::config("timing", "section not used by dispersion_scan"));
        }
        Ok(())
    }

    /// Validates the document and materializes every default, so the result
    /// is self-contained and re-running it is reproducible.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        self.check_sections()?;
        let mut out = self.clone();
        out.provenance = None;
        let l = &mut out.lattice;
        finite("lattice.kappa", l.kappa)?;
        finite("lattice.beta", l.beta)?;
        finite("lattice.gamma", l.gamma)?;
        finite("lattice.phi", l.phi.0)?;
        if l.kappa <= 0.0 {
            return Err(Error::config("lattice.kappa", "must be > 0"));
        }
        if l.beta < 0.0 {
            return Err(Error::config("lattice.beta", "must be >= 0"));
        }

        if self.experiment == ExperimentKind::DispersionScan {
            let d = out.dispersion.as_ref().expect("checked");
            if d.q_points < 2 {
                return Err(Error::config("dispersion.q_points", "must be >= 2"));
            }
            if d.phis.is_empty() {
                return Err(Error::config("dispersion.phis", "must not be empty"));
            }
            return Ok(out);
        }

        let timing = out.timing.get_or_insert_with(TimingConfig::default);
        finite("timing.t_final", timing.t_final)?;
        if timing.t_final < 0.0 {
            return Err(Error::config("timing.t_final", "must be >= 0"));
        }
        if !(timing.dt > 0.0) {
            return Err(Error::config("timing.dt", "must be > 0"));
        }
        if !(timing.sample_dt > 0.0) {
            return Err(Error::config("timing.sample_dt", "must be > 0"));
        }
        let t_final = timing.t_final;

        let ex = out.excitation.as_mut().expect("checked");
        match (self.experiment, ex.kind) {
            (ExperimentKind::TransportSingleSite, ExcitationShape::Gaussian) => {
                return Err(Error::config("excitation.kind", "transport_single_site needs a single_site excitation"))
            }
            (ExperimentKind::TransportGaussian | ExperimentKind::Storage, ExcitationShape::SingleSite) => {
                return Err(Error::config("excitation.kind", "this experiment needs a gaussian excitation"))
            }
            _ => {}
        }
        if ex.kind == ExcitationShape::SingleSite && (ex.w0.is_some() || ex.q0.is_some()) {
            return Err(Error::config("excitation", "w0/q0 are not used by a single_site excitation"));
        }
        if ex.kind == ExcitationShape::Gaussian {
            let w0 = ex.w0.ok_or_else(|| Error::config("excitation.w0", "required for a gaussian"))?;
            if !(w0 > 0.0) || !w0.is_finite() {
                return Err(Error::config("excitation.w0", "must be > 0"));
            }
            let q0 = ex.q0.ok_or_else(|| Error::config("excitation.q0", "required for a gaussian"))?;
            finite("excitation.q0", q0.0)?;
        }
        let n0 = ex.n0;
        let w0 = ex.width();

        let l = &mut out.lattice;
        let auto = l.chain_length.is_none() && l.index_origin.is_none();
        if auto {
            let (lo, hi) = auto_range(n0, w0, l.kappa, t_final);
            l.index_origin = Some(lo);
            l.chain_length = Some((hi - lo + 1) as usize);
        }
        let (origin, len) = match (l.index_origin, l.chain_length) {
            (Some(o), Some(n)) => (o, n),
            _ => {
                return Err(Error::config(
                    "lattice.chain_length",
                    "chain_length and index_origin must be given together",
                ))
            }
        };
        if len < 2 {
            return Err(Error::config("lattice.chain_length", "must be >= 2"));
        }
        let hi = origin + len as i64 - 1;
        let inside = |site: i64| site >= origin && site <= hi;
        if !inside(n0) {
            return Err(Error::config("excitation.n0", format!("site {n0} outside [{origin}, {hi}]")));
        }
        for d in &l.defects {
            if !inside(d.site) {
                return Err(Error::config("lattice.defects", format!("site {} outside [{origin}, {hi}]", d.site)));
            }
        }

        match self.experiment {
            ExperimentKind::TransportSingleSite | ExperimentKind::TransportGaussian => {
                let defects: Vec<i64> = l.defects.iter().map(|d| d.site).collect();
                let tr = out.transport.get_or_insert_with(TransportConfig::default);
                let barriers = *tr.barriers.get_or_insert_with(|| match (defects.iter().min(), defects.iter().max()) {
                    (Some(&a), Some(&b)) => [a, b],
                    _ => [n0, n0],
                });
                for b in barriers {
                    if !inside(b) {
                        return Err(Error::config("transport.barriers", format!("site {b} outside chain")));
                    }
                }
                tr.margin.get_or_insert(DEFAULT_REFLECTION_MARGIN);
                let t_eval = *tr.reflection_time.get_or_insert(t_final);
                if t_eval > t_final || t_eval < 0.0 {
                    return Err(Error::config("transport.reflection_time", "must lie in [0, t_final]"));
                }
                let w = *tr.velocity_window.get_or_insert([2.0f64.min(t_final), t_final]);
                if !(w[0] < w[1]) || w[1] > t_final || w[0] < 0.0 {
                    return Err(Error::config("transport.velocity_window", "must satisfy 0 <= a < b <= t_final"));
                }
            }
            ExperimentKind::Storage => {
                let t_prime = out
                    .timing
                    .as_ref()
                    .and_then(|t| t.t_prime)
                    .ok_or_else(|| Error::config("timing.t_prime", "required for storage"))?;
                if !(t_prime > 0.0 && t_prime < t_final) {
                    return Err(Error::config("timing.t_prime", "must satisfy 0 < t_prime < t_final"));
                }
                let q0 = out.excitation.as_ref().and_then(|e| e.q0).expect("checked").0;
                let st = out.storage.as_mut().expect("checked");
                finite("storage.v_c", st.v_c)?;
                finite("storage.xi", st.xi)?;
                if st.half_width < 1 {
                    return Err(Error::config("storage.half_width", "must be >= 1"));
                }
                if !(origin < -st.half_width && hi > st.half_width) {
                    return Err(Error::config("storage.half_width", "[-N, N] must lie strictly inside the chain"));
                }
                st.incidence.get_or_insert(if n0 < 0 { Incidence::Left } else { Incidence::Right });
                st.capture_window.get_or_insert([t_prime / 2.0, t_prime]);
                st.release_window.get_or_insert([(t_prime + 10.0).min(t_final), t_final]);
                st.margin.get_or_insert(2);
                // The capture stage uses phi = -q0 on the incident side.
                out.lattice.phi = Phase(-q0);
            }
            ExperimentKind::ReductionCheck => {
                let r = out.reduction.as_mut().expect("checked");
                if r.j_values.is_empty() || r.j_values.iter().any(|j| !(*j > 0.0) || !j.is_finite()) {
                    return Err(Error::config("reduction.j_values", "must be a non-empty list of positive rates"));
                }
                r.b_init.get_or_insert(BInit::SlowManifold);
                if !(out.lattice.beta > 0.0) {
                    return Err(Error::config("lattice.beta", "reduction check needs beta > 0 (U_b = i J^2 / beta)"));
                }
            }
            ExperimentKind::DispersionScan => unreachable!(),
        }
        Ok(out)
    }

    fn chain_spec(&self) -> ChainSpec {
        let l = &self.lattice;
        ChainSpec::new(
            l.kappa,
            l.beta,
            l.gamma,
            l.phi.0,
            l.chain_length.expect("resolved"),
            l.index_origin.expect("resolved"),
        )
        .with_defects(l.defects.iter().map(|d| DefectSpec {
            site: d.site,
            v_real: d.v_real,
            xi_imag: d.xi_imag,
        }))
    }

    fn auto_sized(&self, original: &ExperimentConfig) -> bool {
        original.lattice.chain_length.is_none() && original.lattice.index_origin.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub phi: f64,
    pub q: f64,
    pub energy: C64,
    pub group_velocity: f64,
}

/// `(phi, argmax_q Im E, max Im E)` over the grid, one entry per phase.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionSummary {
    pub phis: Vec<f64>,
    pub argmax_q: Vec<f64>,
    pub max_im: Vec<f64>,
}

/// Uniform grid of `points` values spanning `[-pi, pi]` inclusive.
pub fn q_grid(points: usize) -> Vec<f64> {
    let m = (points - 1) as f64;
    (0..points).map(|k| -PI + 2.0 * PI * k as f64 / m).collect()
}

pub fn run_dispersion_scan(kappa: f64, beta: f64, gamma: f64, phis: &[f64], qs: &[f64]) -> Result<Vec<ScanRow>> {
    if let Some(q) = qs.iter().find(|q| !(q.abs() <= PI + 1e-12)) {
        return Err(Error::param("q", format!("{q} outside [-pi, pi]")));
    }
    Ok(phis
        .iter()
        .flat_map(|&phi| {
            qs.iter().map(move |&q| ScanRow {
                phi,
                q,
                energy: dispersion(kappa, beta, gamma, phi, q),
                group_velocity: group_velocity(kappa, q),
            })
        })
        .collect())
}

pub fn summarize_scan(rows: &[ScanRow]) -> DispersionSummary {
    let mut s = DispersionSummary {
        phis: vec![],
        argmax_q: vec![],
        max_im: vec![],
    };
    for row in rows {
        if s.phis.last() != Some(&row.phi) {
            s.phis.push(row.phi);
            s.argmax_q.push(row.q);
            s.max_im.push(row.energy.im);
        } else if row.energy.im > *s.max_im.last().expect("pushed") {
            *s.argmax_q.last_mut().expect("pushed") = row.q;
            *s.max_im.last_mut().expect("pushed") = row.energy.im;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionPoint {
    pub j: f64,
    pub u_b_abs: f64,
    pub adiabaticity_ratio: f64,
    pub adiabaticity_warning: bool,
    /// Max over samples of the max-norm difference of normalized A profiles;
    /// infinite when the full-model run diverged.
    pub max_profile_error: f64,
    /// Residual of the invariant-manifold equation (slow-manifold runs only).
    pub manifold_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionSummary {
    pub points: Vec<ReductionPoint>,
    /// Errors strictly decrease with |U_b| over the sweep.
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metrics {
    Transport(TransportMetrics),
    Storage(StorageMetrics),
    Dispersion(DispersionSummary),
    Reduction(ReductionSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResultData {
    Trajectory(Trajectory),
    Scan(Vec<ScanRow>),
    Reduction(Vec<ReductionPoint>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Fully resolved configuration; re-running it reproduces this result.
    pub config: ExperimentConfig,
    pub data: ResultData,
    pub metrics: Metrics,
    pub method_tags: Vec<String>,
    /// Largest normalized norm seen on an end site (trajectory runs).
    pub edge_fraction_max: Option<f64>,
}

impl ExperimentResult {
    pub fn trajectory(&self) -> Option<&Trajectory> {
        match &self.data {
            ResultData::Trajectory(t) => Some(t),
            _ => None,
        }
    }
}

pub fn edge_fraction_max(traj: &Trajectory) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..traj.len() {
        let rho = normalized_profile(&traj.snapshot(k))?;
        let ends = rho[0] * rho[0] + rho[rho.len() - 1] * rho[rho.len() - 1];
        worst = worst.max(ends);
    }
    Ok(worst)
}

fn check_edges(traj: &Trajectory, auto: bool) -> Result<f64> {
    let edge = edge_fraction_max(traj)?;
    if auto && edge >= EDGE_LEAK_LIMIT {
        return Err(Error::config(
            "lattice.chain_length",
            format!("auto-sized chain leaks {edge:e} of the normalized norm to its ends"),
        ));
    }
    Ok(edge)
}

/// Runs one experiment of any kind.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let resolved = config.resolve()?;
    match resolved.experiment {
        ExperimentKind::DispersionScan => {
            let d = resolved.dispersion.as_ref().expect("resolved");
            let phis: Vec<f64> = d.phis.iter().map(|p| p.0).collect();
            let l = &resolved.lattice;
            let rows = run_dispersion_scan(l.kappa, l.beta, l.gamma, &phis, &q_grid(d.q_points))?;
            let summary = summarize_scan(&rows);
            Ok(ExperimentResult {
                config: resolved,
                data: ResultData::Scan(rows),
                metrics: Metrics::Dispersion(summary),
                method_tags: vec!["closed-form".into()],
                edge_fraction_max: None,
            })
        }
        ExperimentKind::TransportSingleSite | ExperimentKind::TransportGaussian => {
            run_transport_resolved(resolved, config.auto_sized(config))
        }
        ExperimentKind::Storage => run_storage_resolved(resolved, config.auto_sized(config)),
        ExperimentKind::ReductionCheck => run_reduction_resolved(resolved),
    }
}

pub fn run_transport(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if !config.experiment.is_transport() {
        return Err(Error::config("experiment", "not a transport experiment"));
    }
    run(config)
}

fn run_transport_resolved(cfg: ExperimentConfig, auto: bool) -> Result<ExperimentResult> {
    let chain = cfg.chain_spec();
    let h = build_chain_hamiltonian(&chain)?;
    let ex = make_excitation(&cfg.excitation.as_ref().expect("resolved").to_spec()?, h.site_labels())?;
    let t = cfg.timing();
    let schedule = Schedule::single(h);
    let traj = evolve_schedule(&schedule, &ex.state, t.t_final, t.dt, t.sample_dt)?;
    let edge = check_edges(&traj, auto)?;
    let tr = cfg.transport.as_ref().expect("resolved");
    let barriers = tr.barriers.expect("resolved");
    let window = tr.velocity_window.expect("resolved");
    let metrics = transport_metrics(
        &traj,
        (barriers[0], barriers[1]),
        tr.margin.expect("resolved"),
        tr.reflection_time.expect("resolved"),
        (window[0], window[1]),
    )?;
    Ok(ExperimentResult {
        method_tags: vec![traj.method.tag().into()],
        config: cfg,
        data: ResultData::Trajectory(traj),
        metrics: Metrics::Transport(metrics),
        edge_fraction_max: Some(edge),
    })
}

/// Capture and release Hamiltonians of a resolved storage configuration.
pub fn storage_hamiltonians(cfg: &ExperimentConfig) -> Result<(crate::lattice::Hamiltonian, crate::lattice::Hamiltonian)> {
    let st = cfg.storage.as_ref().ok_or_else(|| Error::config("storage", "missing section"))?;
    let q0 = cfg
        .excitation
        .as_ref()
        .and_then(|e| e.q0)
        .ok_or_else(|| Error::config("excitation.q0", "missing"))?
        .0;
    let mut chain = cfg.chain_spec();
    // Boundary defects live in the sandwich rows, not in the chain.
    chain.defects.clear();
    let structure_q = match st.incidence.unwrap_or(Incidence::Left) {
        Incidence::Left => q0,
        Incidence::Right => -q0,
    };
    let sandwich = SandwichSpec {
        chain: chain.clone(),
        half_width: st.half_width,
        q0: structure_q,
        v_c: st.v_c,
        xi: st.xi,
    };
    let release_phi = match st.retrieval {
        Retrieval::Forward => -q0,
        Retrieval::Reversed => q0,
    };
    let capture = build_sandwich_hamiltonian(&sandwich)?;
    let release = build_chain_hamiltonian(&sandwich.release_chain(release_phi))?;
    Ok((capture, release))
}

pub fn run_storage(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.experiment != ExperimentKind::Storage {
        return Err(Error::config("experiment", "not a storage experiment"));
    }
    run(config)
}

fn run_storage_resolved(cfg: ExperimentConfig, auto: bool) -> Result<ExperimentResult> {
    let (capture, release) = storage_hamiltonians(&cfg)?;
    let t = cfg.timing();
    let t_prime = t.t_prime.expect("resolved");
    let ex = make_excitation(&cfg.excitation.as_ref().expect("resolved").to_spec()?, capture.site_labels())?;
    let schedule = Schedule::new(vec![(0.0, capture), (t_prime, release)])?;
    let traj = evolve_schedule(&schedule, &ex.state, t.t_final, t.dt, t.sample_dt)?;
    let edge = check_edges(&traj, auto)?;
    let metrics = storage_metrics(&cfg, &traj)?;
    Ok(ExperimentResult {
        method_tags: vec![traj.method.tag().into()],
        config: cfg,
        data: ResultData::Trajectory(traj),
        metrics: Metrics::Storage(metrics),
        edge_fraction_max: Some(edge),
    })
}

/// Storage observables of a resolved configuration evaluated on `traj`.
pub fn storage_metrics(cfg: &ExperimentConfig, traj: &Trajectory) -> Result<StorageMetrics> {
    let st = cfg.storage.as_ref().expect("resolved");
    let ex = cfg.excitation.as_ref().expect("resolved");
    let q0 = ex.q0.expect("resolved").0;
    let t = cfg.timing();
    let big_n = st.half_width;
    let margin = st.margin.expect("resolved");
    let first = traj.site_labels[0];
    let last = *traj.site_labels.last().expect("non-empty");
    let incident_velocity = group_velocity(cfg.lattice.kappa, q0);
    let incident_left = st.incidence == Some(Incidence::Left);

    let rw = st.release_window.expect("resolved");
    let release_velocity = centroid_velocity(traj, rw[0], rw[1])?;
    let direction = ReleaseDirection::classify(incident_velocity, release_velocity);

    // The packet ends up right of the window when released forward from the
    // left, or reversed from the right.
    let ends_right = incident_left == (st.retrieval == Retrieval::Forward);
    let out_region = if ends_right { big_n + margin..=last } else { first..=-big_n - margin };
    let in_region = if incident_left { first..=-big_n - 1 } else { big_n + 1..=last };
    let efficiency = storage_efficiency(traj, 0.0, t.t_final, in_region, out_region.clone())?;

    let k_out = traj.nearest_index(t.t_final)?;
    let (a, b) = (
        (*out_region.start() - first) as usize,
        (*out_region.end() - first) as usize,
    );
    let retrieved = StateVector::new(traj.states[k_out][a..=b].to_vec(), traj.site_labels[a..=b].to_vec())?;
    let fit = fit_gaussian(&retrieved)?;

    let cw = st.capture_window.expect("resolved");
    let (lo, hi) = ((-big_n - 2 - first) as usize, (big_n + 2 - first) as usize);
    let mut capture_min = f64::INFINITY;
    for k in 0..traj.len() {
        let time = traj.times[k];
        if time + 1e-9 < cw[0] || time > cw[1] + 1e-9 {
            continue;
        }
        let total: f64 = traj.states[k].iter().map(|z| z.norm_sqr()).sum();
        let inside: f64 = traj.states[k][lo..=hi].iter().map(|z| z.norm_sqr()).sum();
        capture_min = capture_min.min(inside / total);
    }
    if !capture_min.is_finite() {
        return Err(Error::TooFewSamples { found: 0, required: 1 });
    }
    Ok(StorageMetrics {
        efficiency,
        shape_fidelity: fit.fidelity,
        fit_width: fit.width,
        incident_velocity,
        release_velocity,
        release_direction: direction,
        capture_fraction_min: capture_min,
    })
}

/// Exact invariant slow manifold `b = X a` of the two-sublattice model.
///
/// Returns `(X, H_slow, residual)` where `H_slow = H_AA + H_AB X` generates
/// the A dynamics on the manifold. The leading-order slaving of B is the
/// first iterate, `X_0 = -H_BA / U_b`.
pub fn slow_manifold(spec: &SawtoothSpec) -> Result<(DMatrix<C64>, DMatrix<C64>, f64)> {
    let op = build_sawtooth_hamiltonian(spec)?;
    let m = op.band.to_dense();
    let n = spec.n_cells;
    let block = |ro: usize, co: usize| DMatrix::from_fn(n, n, |r, c| m[(2 * r + ro, 2 * c + co)]);
    let h_aa = block(0, 0);
    let h_ab = block(0, 1);
    let h_ba = block(1, 0);
    let u_b = spec.u_b;
    let mut x = -&h_ba / u_b;
    let scale = h_ba.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    for _ in 0..200 {
        let h_s = &h_aa + &h_ab * &x;
        let next = (&x * &h_s - &h_ba) / u_b;
        let change = (&next - &x).iter().map(|z| z.norm()).fold(0.0, f64::max);
        x = next;
        if change <= 1e-15 * scale {
            break;
        }
    }
    let h_s = &h_aa + &h_ab * &x;
    let res = &x * &h_s - &h_ba - &x * u_b;
    let residual = res.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !residual.is_finite() {
        return Err(Error::param("U_b", "slow-manifold iteration diverged"));
    }
    Ok((x, h_s, residual))
}

/// The sawtooth model whose elimination yields the configured chain:
/// `theta = phi / 2`, `Gamma = gamma + 2 beta`, `U_b = i J^2 / beta`.
pub fn sawtooth_for(cfg: &ExperimentConfig, j: f64) -> SawtoothSpec {
    let l = &cfg.lattice;
    let mut spec = SawtoothSpec::new(
        l.kappa,
        j,
        l.phi.0 / 2.0,
        l.gamma + 2.0 * l.beta,
        SawtoothSpec::matched_u_b(j, l.beta),
        l.chain_length.expect("resolved"),
    );
    spec.index_origin = l.index_origin.expect("resolved");
    for d in &l.defects {
        spec.v_a[(d.site - spec.index_origin) as usize] = d.v_real;
    }
    spec
}

fn profile_error(full: &Trajectory, effective: &Trajectory) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..full.len() {
        let a = normalized_profile(&full.snapshot(k))?;
        let b = normalized_profile(&effective.snapshot(k))?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// Compares the two-sublattice model with its reduced chain for one `J`.
pub fn reduction_point(
    saw: &SawtoothSpec,
    excitation: &ExcitationSpec,
    t_final: f64,
    sample_dt: f64,
    b_init: BInit,
) -> Result<ReductionPoint> {
    let reduced = adiabatic_reduce(saw)?;
    let eff_h = reduced.hamiltonian()?;
    let a0 = make_excitation(excitation, eff_h.site_labels())?.state;
    let effective = evolve_exact(&eff_h, &a0, t_final, sample_dt)?;

    let (full_a, residual) = match b_init {
        BInit::SlowManifold => {
            let (_, h_s, residual) = slow_manifold(saw)?;
            let op = DenseOperator {
                matrix: h_s,
                site_labels: saw.cell_labels(),
            };
            (evolve_exact(&op, &a0, t_final, sample_dt), residual)
        }
        BInit::Slaved | BInit::Zero => {
            let op = build_sawtooth_hamiltonian(saw)?;
            let n = saw.n_cells;
            let mut c = vec![C64::new(0.0, 0.0); 2 * n];
            for k in 0..n {
                c[SawtoothOperator::a_index(k)] = a0.amplitudes[k];
            }
            if b_init == BInit::Slaved {
                let up = saw.j * C64::from_polar(1.0, saw.theta);
                let down = saw.j * C64::from_polar(1.0, -saw.theta);
                for k in 0..n {
                    let next = if k + 1 < n { a0.amplitudes[k + 1] } else { C64::new(0.0, 0.0) };
                    c[SawtoothOperator::b_index(k)] = -(up * next + down * a0.amplitudes[k]) / saw.u_b;
                }
            }
            let c0 = StateVector::new(c, op.site_labels.clone())?;
            let full = evolve_exact(&op, &c0, t_final, sample_dt).map(|tr| {
                let states = tr.states.iter().map(|s| SawtoothOperator::a_part(s)).collect();
                Trajectory::from_states(tr.times.clone(), states, saw.cell_labels(), tr.method)
            });
            (full, f64::NAN)
        }
    };
    let max_profile_error = match full_a {
        Ok(full) => profile_error(&full, &effective)?,
        Err(e) if e.is_numerical() => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(ReductionPoint {
        j: saw.j,
        u_b_abs: saw.u_b.norm(),
        adiabaticity_ratio: reduced.adiabaticity_ratio,
        adiabaticity_warning: reduced.adiabaticity_warning,
        max_profile_error,
        manifold_residual: residual,
    })
}

pub fn run_reduction_check(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.experiment != ExperimentKind::ReductionCheck {
        return Err(Error::config("experiment", "not a reduction check"));
    }
    run(config)
}

fn run_reduction_resolved(cfg: ExperimentConfig) -> Result<ExperimentResult> {
    let r = cfg.reduction.as_ref().expect("resolved");
    let b_init = r.b_init.expect("resolved");
    let excitation = cfg.excitation.as_ref().expect("resolved").to_spec()?;
    let t = cfg.timing();
    let mut points = Vec::with_capacity(r.j_values.len());
    for &j in &r.j_values {
        let saw = sawtooth_for(&cfg, j);
        points.push(reduction_point(&saw, &excitation, t.t_final, t.sample_dt, b_init)?);
    }
    let mut order: Vec<&ReductionPoint> = points.iter().collect();
    order.sort_by(|a, b| a.u_b_abs.total_cmp(&b.u_b_abs));
    let monotone = order.windows(2).all(|w| w[1].max_profile_error < w[0].max_profile_error);
    Ok(ExperimentResult {
        method_tags: vec![match b_init {
            BInit::SlowManifold => "slow-manifold".into(),
            BInit::Slaved => "full-slaved".into(),
            BInit::Zero => "full-zero-b".into(),
        }],
        config: cfg,
        data: ResultData::Reduction(points.clone()),
        metrics: Metrics::Reduction(ReductionSummary { points, monotone }),
        edge_fraction_max: None,
    })
}

pub const PRESET_NAMES: &[&str] = &[
    "fig2", "fig3a", "fig3b", "fig3c", "fig3d", "fig3e", "fig3f", "fig4a", "fig4b", "fig4c", "fig4d", "fig6a", "fig6b",
    "fig7a", "fig7b", "fig7c", "reduction",
];

/// Named sweeps that expand to several presets.
pub fn preset_group(name: &str) -> Option<&'static [&'static str]> {
    match name {
        "fig7" => Some(&["fig7a", "fig7b", "fig7c"]),
        _ => None,
    }
}

const NON_HERMITIAN_BETA: f64 = 0.4;
const NON_HERMITIAN_GAMMA: f64 = 0.8;

fn lattice(beta: f64, gamma: f64, phi: f64, defects: &[(i64, f64)]) -> LatticeConfig {
    LatticeConfig {
        kappa: 1.0,
        beta,
        gamma,
        phi: Phase(phi),
        chain_length: None,
        index_origin: None,
        defects: defects
            .iter()
            .map(|&(site, v)| DefectConfig {
                site,
                v_real: v,
                xi_imag: 0.0,
            })
            .collect(),
    }
}

fn base(kind: ExperimentKind, name: &str, lattice: LatticeConfig) -> ExperimentConfig {
    ExperimentConfig {
        experiment: kind,
        preset: Some(name.to_string()),
        lattice,
        excitation: None,
        timing: None,
        transport: None,
        storage: None,
        dispersion: None,
        reduction: None,
        provenance: None,
    }
}

fn transport_preset(name: &str, hermitian: bool, phi: f64, defects: &[(i64, f64)], gaussian: bool) -> ExperimentConfig {
    let (beta, gamma) = if hermitian {
        (0.0, 0.0)
    } else {
        (NON_HERMITIAN_BETA, NON_HERMITIAN_GAMMA)
    };
    let kind = if gaussian {
        ExperimentKind::TransportGaussian
    } else {
        ExperimentKind::TransportSingleSite
    };
    let mut cfg = base(kind, name, lattice(beta, gamma, if hermitian { 0.0 } else { phi }, defects));
    cfg.excitation = Some(if gaussian {
        ExcitationConfig::gaussian(-30, 5.0, -FRAC_PI_2)
    } else {
        ExcitationConfig::single_site(0)
    });
    cfg.timing = Some(TimingConfig::default());
    cfg.transport = Some(TransportConfig {
        velocity_window: Some(if gaussian { [25.0, 50.0] } else { [10.0, 30.0] }),
        ..TransportConfig::default()
    });
    cfg
}

fn storage_preset(name: &str, retrieval: Retrieval, xi: f64) -> ExperimentConfig {
    let mut cfg = base(
        ExperimentKind::Storage,
        name,
        lattice(NON_HERMITIAN_BETA, NON_HERMITIAN_GAMMA, FRAC_PI_2, &[]),
    );
    cfg.excitation = Some(ExcitationConfig::gaussian(-30, 5.0, -FRAC_PI_2));
    cfg.timing = Some(TimingConfig {
        t_prime: Some(30.0),
        ..TimingConfig::default()
    });
    cfg.storage = Some(StorageConfig {
        half_width: 3,
        v_c: 1.0,
        xi,
        retrieval,
        incidence: None,
        capture_window: Some([15.0, 30.0]),
        release_window: Some([40.0, 60.0]),
        margin: None,
    });
    cfg
}

/// Named immutable configuration for each figure panel.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let nh = false;
    let h = true;
    let fig3_defects = [(10, 2.0), (20, 2.0)];
    let fig4_defects = [(-5, 2.0), (5, 2.0)];
    Some(match name {
        "fig2" => {
            let mut cfg = base(
                ExperimentKind::DispersionScan,
                name,
                lattice(NON_HERMITIAN_BETA, NON_HERMITIAN_GAMMA, 0.0, &[]),
            );
            cfg.dispersion = Some(DispersionConfig {
                phis: vec![Phase(0.0), Phase(FRAC_PI_4), Phase(FRAC_PI_2)],
                q_points: default_q_points(),
            });
            cfg
        }
        "fig3a" => transport_preset(name, h, 0.0, &[], false),
        "fig3b" => transport_preset(name, nh, 0.0, &[], false),
        "fig3c" => transport_preset(name, nh, FRAC_PI_4, &[], false),
        "fig3d" => transport_preset(name, nh, FRAC_PI_2, &[], false),
        "fig3e" => transport_preset(name, h, 0.0, &fig3_defects, false),
        "fig3f" => transport_preset(name, nh, FRAC_PI_2, &fig3_defects, false),
        "fig4a" => transport_preset(name, h, 0.0, &fig4_defects, true),
        "fig4b" => transport_preset(name, nh, 0.0, &fig4_defects, true),
        "fig4c" => transport_preset(name, nh, FRAC_PI_4, &fig4_defects, true),
        "fig4d" => transport_preset(name, nh, FRAC_PI_2, &fig4_defects, true),
        "fig6a" => storage_preset(name, Retrieval::Forward, 0.4),
        "fig6b" => storage_preset(name, Retrieval::Reversed, 0.4),
        "fig7a" => storage_preset(name, Retrieval::Forward, 0.4),
        "fig7b" => storage_preset(name, Retrieval::Forward, 0.6),
        "fig7c" => storage_preset(name, Retrieval::Forward, 0.8),
        "reduction" => {
            let mut cfg = base(
                ExperimentKind::ReductionCheck,
                name,
                lattice(NON_HERMITIAN_BETA, NON_HERMITIAN_GAMMA, FRAC_PI_2, &[]),
            );
            cfg.excitation = Some(ExcitationConfig::gaussian(-20, 5.0, -FRAC_PI_2));
            cfg.timing = Some(TimingConfig {
                t_final: 20.0,
                ..TimingConfig::default()
            });
            cfg.reduction = Some(ReductionConfig {
                j_values: vec![4.0, 8.0],
                b_init: None,
            });
            cfg
        }
        _ => return None,
    })
}
