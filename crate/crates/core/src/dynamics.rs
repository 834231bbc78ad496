//! Time evolution of `i dc/dt = H c` under constant and piecewise-constant
//! Hamiltonians.
//!
//! Two propagators are provided: a fixed-step RK4 integrator that only needs
//! banded matrix-vector products, and an exact propagator built from a dense
//! eigendecomposition (falling back to scaling-and-squaring when the
//! eigenvector basis is ill-conditioned). The exact one is the oracle for the
//! integrator.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lattice::{Hamiltonian, SawtoothOperator};

const MINUS_I: C64 = C64 { re: 0.0, im: -1.0 };

/// Amplitude magnitude beyond which evolution aborts with a runaway error.
pub const RUNAWAY_LIMIT: f64 = 1e150;

/// Eigenvector condition number above which the exact propagator switches to
/// scaling-and-squaring.
pub const EIGEN_CONDITION_LIMIT: f64 = 1e8;

/// Default integration step in units of `1/kappa`.
pub const DEFAULT_DT: f64 = 1e-3;

/// A linear operator acting on lattice states.
pub trait Operator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64], y: &mut [C64]);
    fn to_dense(&self) -> DMatrix<C64>;
    fn max_abs_entry(&self) -> f64;
    fn site_labels(&self) -> &[i64];
}

impl Operator for Hamiltonian {
    fn dim(&self) -> usize {
        Hamiltonian::dim(self)
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        Hamiltonian::apply(self, x, y)
    }

    fn to_dense(&self) -> DMatrix<C64> {
        Hamiltonian::to_dense(self)
    }

    fn max_abs_entry(&self) -> f64 {
        Hamiltonian::max_abs_entry(self)
    }

    fn site_labels(&self) -> &[i64] {
        Hamiltonian::site_labels(self)
    }
}

impl Operator for SawtoothOperator {
    fn dim(&self) -> usize {
        self.band.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.band.apply(x, y)
    }

    fn to_dense(&self) -> DMatrix<C64> {
        self.band.to_dense()
    }

    fn max_abs_entry(&self) -> f64 {
        self.band.max_abs_entry()
    }

    fn site_labels(&self) -> &[i64] {
        &self.site_labels
    }
}

/// Dense operator, used for reduced dynamics that are not banded.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub matrix: DMatrix<C64>,
    pub site_labels: Vec<i64>,
}

impl Operator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.dim();
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..n {
                acc += self.matrix[(r, c)] * x[c];
            }
            *out = acc;
        }
    }

    fn to_dense(&self) -> DMatrix<C64> {
        self.matrix.clone()
    }

    fn max_abs_entry(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn site_labels(&self) -> &[i64] {
        &self.site_labels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<C64>,
    pub site_labels: Vec<i64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>, site_labels: Vec<i64>) -> Result<Self> {
        if amplitudes.len() != site_labels.len() {
            return Err(Error::DimensionMismatch {
                expected: site_labels.len(),
                got: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("state", "amplitudes must be finite"));
        }
        Ok(StateVector {
            amplitudes,
            site_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    /// `S = sum |c_n|^2`.
    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.amplitudes)
    }

    pub fn scaled(&self, factor: C64) -> StateVector {
        StateVector {
            amplitudes: self.amplitudes.iter().map(|z| z * factor).collect(),
            site_labels: self.site_labels.clone(),
        }
    }

    pub fn index_of(&self, site: i64) -> Option<usize> {
        let first = *self.site_labels.first()?;
        usize::try_from(site - first)
            .ok()
            .filter(|&i| i < self.len() && self.site_labels[i] == site)
    }
}

pub fn norm_sq(c: &[C64]) -> f64 {
    c.iter().map(|z| z.norm_sqr()).sum()
}

/// `rho_n = sqrt(|c_n|^2 / S)`.
pub fn normalized_profile(c: &StateVector) -> Result<Vec<f64>> {
    let s = c.norm_sq();
    if s <= 0.0 || !s.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(c.amplitudes.iter().map(|z| (z.norm_sqr() / s).sqrt()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactRoute {
    /// Dense eigendecomposition; `condition` is the 2-norm condition number
    /// of the column-normalized eigenvector matrix.
    Eigen { condition: f64 },
    /// Scaling-and-squaring matrix exponential, used because the eigenvector
    /// condition estimate exceeded [`EIGEN_CONDITION_LIMIT`] (or the Schur
    /// iteration failed, reported as an infinite condition).
    ScalingSquaring { condition: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 { dt: f64 },
    Exact(ExactRoute),
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Rk4 { .. } => "rk4",
            Method::Exact(ExactRoute::Eigen { .. }) => "exact-eigen",
            Method::Exact(ExactRoute::ScalingSquaring { .. }) => "exact-expm",
        }
    }

    pub fn fell_back(&self) -> bool {
        matches!(self, Method::Exact(ExactRoute::ScalingSquaring { .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub norm_series: Vec<f64>,
    pub site_labels: Vec<i64>,
    pub method: Method,
}

impl Trajectory {
    pub fn from_states(times: Vec<f64>, states: Vec<Vec<C64>>, site_labels: Vec<i64>, method: Method) -> Self {
        let norm_series = states.iter().map(|s| norm_sq(s)).collect();
        Trajectory {
            times,
            states,
            norm_series,
            site_labels,
            method,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.site_labels.len()
    }

    pub fn snapshot(&self, k: usize) -> StateVector {
        StateVector {
            amplitudes: self.states[k].clone(),
            site_labels: self.site_labels.clone(),
        }
    }

    pub fn last(&self) -> Option<StateVector> {
        (!self.is_empty()).then(|| self.snapshot(self.len() - 1))
    }

    /// Index of the sample nearest to `t`; errors if `t` is outside the span.
    pub fn nearest_index(&self, t: f64) -> Result<usize> {
        let (start, end) = match (self.times.first(), self.times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::EmptyTrajectory),
        };
        let slack = 1e-9 * end.abs().max(1.0);
        if !t.is_finite() || t < start - slack || t > end + slack {
            return Err(Error::TimeOutOfRange { time: t, start, end });
        }
        let k = self.times.partition_point(|&x| x < t);
        let best = match k {
            0 => 0,
            k if k >= self.len() => self.len() - 1,
            k if (self.times[k] - t).abs() < (t - self.times[k - 1]).abs() => k,
            k => k - 1,
        };
        Ok(best)
    }

    /// Largest amplitude difference over all samples (same grid required).
    pub fn max_abs_difference(&self, other: &Trajectory) -> Result<f64> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.len() * self.dim(),
                got: other.len() * other.dim(),
            });
        }
        Ok(self
            .states
            .iter()
            .zip(&other.states)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max))
    }
}

/// Ordered piecewise-constant sequence of operators.
#[derive(Debug, Clone)]
pub struct Schedule<O> {
    segments: Vec<(f64, O)>,
}

impl<O: Operator> Schedule<O> {
    pub fn new(segments: Vec<(f64, O)>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidSchedule("no segments".into()))?;
        if first.0 != 0.0 {
            return Err(Error::InvalidSchedule(format!("first segment starts at {}, not 0", first.0)));
        }
        for w in segments.windows(2) {
            if !(w[1].0 > w[0].0) || !w[1].0.is_finite() {
                return Err(Error::InvalidSchedule(format!(
                    "segment start times must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
            if w[1].1.site_labels() != w[0].1.site_labels() {
                return Err(Error::InvalidSchedule("segments disagree on dimension or site labels".into()));
            }
        }
        Ok(Schedule { segments })
    }

    pub fn single(op: O) -> Self {
        Schedule {
            segments: vec![(0.0, op)],
        }
    }

    pub fn segments(&self) -> &[(f64, O)] {
        &self.segments
    }

    pub fn dim(&self) -> usize {
        self.segments[0].1.dim()
    }

    pub fn site_labels(&self) -> &[i64] {
        self.segments[0].1.site_labels()
    }
}

fn sample_count(t_final: f64, sample_dt: f64) -> Result<usize> {
    if !(sample_dt > 0.0) || !sample_dt.is_finite() {
        return Err(Error::param("sample_dt", "must be > 0"));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::param("t_final", "must be finite and >= 0"));
    }
    Ok((t_final / sample_dt + 1e-9).floor() as usize + 1)
}

fn sample_times(n: usize, sample_dt: f64) -> Vec<f64> {
    (0..n).map(|k| k as f64 * sample_dt).collect()
}

fn check_initial(c0: &StateVector, labels: &[i64]) -> Result<()> {
    if c0.site_labels != labels {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: c0.len(),
        });
    }
    if c0.amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::param("c0", "amplitudes must be finite"));
    }
    Ok(())
}

fn runaway_check(c: &[C64], time: f64) -> Result<()> {
    let mut worst = 0.0f64;
    for z in c {
        let m = z.norm();
        if !(m <= RUNAWAY_LIMIT) {
            return Err(Error::GainRunaway {
                time,
                magnitude: if m.is_nan() { f64::INFINITY } else { m },
            });
        }
        worst = worst.max(m);
    }
    debug_assert!(worst <= RUNAWAY_LIMIT);
    Ok(())
}

/// Fixed-step RK4 under a single operator.
pub fn evolve_rk4<O: Operator>(h: &O, c0: &StateVector, t_final: f64, dt: f64, sample_dt: f64) -> Result<Trajectory> {
    evolve_schedule_segments(&[(0.0, h)], c0, t_final, dt, sample_dt)
}

/// Fixed-step RK4 under a piecewise-constant schedule. Switch times are snapped
/// to the nearest integration step; the state is continuous across switches.
pub fn evolve_schedule<O: Operator>(
    schedule: &Schedule<O>,
    c0: &StateVector,
    t_final: f64,
    dt: f64,
    sample_dt: f64,
) -> Result<Trajectory> {
    let segs: Vec<(f64, &O)> = schedule.segments.iter().map(|(t, o)| (*t, o)).collect();
    let last_start = segs.last().map(|s| s.0).unwrap_or(0.0);
    if t_final < last_start {
        return Err(Error::InvalidSchedule(format!(
            "t_final {t_final} precedes the last switch at {last_start}"
        )));
    }
    evolve_schedule_segments(&segs, c0, t_final, dt, sample_dt)
}

fn evolve_schedule_segments<O: Operator>(
    segments: &[(f64, &O)],
    c0: &StateVector,
    t_final: f64,
    dt: f64,
    sample_dt: f64,
) -> Result<Trajectory> {
    let labels = segments[0].1.site_labels().to_vec();
    check_initial(c0, &labels)?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::param("dt", "must be > 0"));
    }
    let n_samples = sample_count(t_final, sample_dt)?;
    let ratio = sample_dt / dt;
    let per_sample = ratio.round();
    if per_sample < 1.0 || (per_sample * dt - sample_dt).abs() > 1e-9 * sample_dt {
        return Err(Error::SampleNotMultiple { sample_dt, dt });
    }
    let per_sample = per_sample as usize;
    for (_, op) in segments {
        let limit = 0.05 / op.max_abs_entry();
        if dt > limit {
            return Err(Error::StepTooLarge { dt, limit });
        }
    }
    let switch_steps: Vec<usize> = segments.iter().map(|(t, _)| (t / dt).round() as usize).collect();

    let n = labels.len();
    let mut c = c0.amplitudes.clone();
    let mut k1 = vec![C64::default(); n];
    let mut k2 = vec![C64::default(); n];
    let mut k3 = vec![C64::default(); n];
    let mut k4 = vec![C64::default(); n];
    let mut tmp = vec![C64::default(); n];
    let mut states = Vec::with_capacity(n_samples);
    states.push(c.clone());

    let total_steps = (n_samples - 1) * per_sample;
    let mut seg = 0;
    let half = 0.5 * dt;
    let sixth = dt / 6.0;
    for step in 0..total_steps {
        while seg + 1 < segments.len() && step >= switch_steps[seg + 1] {
            seg += 1;
        }
        let op = segments[seg].1;

        op.apply(&c, &mut k1);
        scale_minus_i(&mut k1);
        axpy_into(&c, half, &k1, &mut tmp);
        op.apply(&tmp, &mut k2);
        scale_minus_i(&mut k2);
        axpy_into(&c, half, &k2, &mut tmp);
        op.apply(&tmp, &mut k3);
        scale_minus_i(&mut k3);
        axpy_into(&c, dt, &k3, &mut tmp);
        op.apply(&tmp, &mut k4);
        scale_minus_i(&mut k4);
        for i in 0..n {
            c[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * sixth;
        }
        runaway_check(&c, (step + 1) as f64 * dt)?;

        if (step + 1) % per_sample == 0 {
            states.push(c.clone());
        }
    }
    Ok(Trajectory::from_states(
        sample_times(n_samples, sample_dt),
        states,
        labels,
        Method::Rk4 { dt },
    ))
}

fn scale_minus_i(v: &mut [C64]) {
    for z in v {
        *z *= MINUS_I;
    }
}

fn axpy_into(x: &[C64], a: f64, y: &[C64], out: &mut [C64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + yi * a;
    }
}

/// Exact propagator `exp(-i H t)` for a fixed dense operator.
pub struct ExactPropagator {
    kind: PropagatorKind,
    route: ExactRoute,
}

enum PropagatorKind {
    Eigen {
        vectors: DMatrix<C64>,
        inverse: DMatrix<C64>,
        values: DVector<C64>,
    },
    Expm {
        h: DMatrix<C64>,
        cache: HashMap<u64, DMatrix<C64>>,
    },
}

impl ExactPropagator {
    pub fn new(h: &DMatrix<C64>) -> Self {
        if *h == h.adjoint() {
            let eig = h.clone().symmetric_eigen();
            let vectors = eig.eigenvectors;
            let inverse = vectors.adjoint();
            let values = eig.eigenvalues.map(|x| C64::new(x, 0.0));
            return ExactPropagator {
                kind: PropagatorKind::Eigen {
                    vectors,
                    inverse,
                    values,
                },
                route: ExactRoute::Eigen { condition: 1.0 },
            };
        }
        match general_eigen(h) {
            Some((vectors, inverse, values, condition)) if condition <= EIGEN_CONDITION_LIMIT => ExactPropagator {
                kind: PropagatorKind::Eigen {
                    vectors,
                    inverse,
                    values,
                },
                route: ExactRoute::Eigen { condition },
            },
            other => ExactPropagator {
                kind: PropagatorKind::Expm {
                    h: h.clone(),
                    cache: HashMap::new(),
                },
                route: ExactRoute::ScalingSquaring {
                    condition: other.map_or(f64::INFINITY, |e| e.3),
                },
            },
        }
    }

    pub fn route(&self) -> ExactRoute {
        self.route
    }

    /// `exp(-i H t) c`.
    pub fn propagate(&mut self, c: &DVector<C64>, t: f64) -> DVector<C64> {
        match &mut self.kind {
            PropagatorKind::Eigen {
                vectors,
                inverse,
                values,
            } => {
                let mut y = &*inverse * c;
                for (yk, lk) in y.iter_mut().zip(values.iter()) {
                    *yk *= (MINUS_I * lk * t).exp();
                }
                &*vectors * y
            }
            PropagatorKind::Expm { h, cache } => {
                let p = cache
                    .entry(t.to_bits())
                    .or_insert_with(|| (&*h * C64::new(0.0, -t)).exp());
                &*p * c
            }
        }
    }

    /// States at `start + offsets[k]` from `c_start` given at `start`.
    /// The eigen route evaluates each offset from `c_start` directly; the
    /// matrix-exponential route steps between consecutive offsets.
    fn sample(&mut self, c_start: &DVector<C64>, offsets: &[f64]) -> Vec<DVector<C64>> {
        let direct = matches!(self.kind, PropagatorKind::Eigen { .. });
        let mut out = Vec::with_capacity(offsets.len());
        let mut prev_t = 0.0;
        let mut prev = c_start.clone();
        for &t in offsets {
            let next = if direct {
                self.propagate(c_start, t)
            } else if t == prev_t {
                prev.clone()
            } else {
                self.propagate(&prev, t - prev_t)
            };
            prev_t = t;
            prev = next.clone();
            out.push(next);
        }
        out
    }
}

/// Eigenvectors, their inverse, eigenvalues and condition number.
type EigenParts = (DMatrix<C64>, DMatrix<C64>, DVector<C64>, f64);

/// Eigenvectors of a general complex matrix through its Schur form:
/// `H = Q T Q^H`, eigenvectors of the triangular `T` by back-substitution.
fn general_eigen(h: &DMatrix<C64>) -> Option<EigenParts> {
    let n = h.nrows();
    // Bounded: a non-converging Schur iteration falls back to scaling and squaring.
    let schur = h.clone().try_schur(f64::EPSILON, 30 * n.max(10))?;
    let (q, t) = schur.unpack();
    let tnorm = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * tnorm;
    let mut y = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        let lambda = t[(i, i)];
        y[(i, i)] = C64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut s = C64::new(0.0, 0.0);
            for k in j + 1..=i {
                s += t[(j, k)] * y[(k, i)];
            }
            let mut d = t[(j, j)] - lambda;
            if d.norm() < small {
                d = C64::new(small, 0.0);
            }
            y[(j, i)] = -s / d;
        }
    }
    let mut v = q * y;
    for mut col in v.column_iter_mut() {
        let norm = col.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        col /= C64::new(norm, 0.0);
    }
    let sv = v.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() {
        return Some((v.clone(), v, DVector::zeros(n), f64::INFINITY));
    }
    let inverse = v.clone().try_inverse()?;
    let values = DVector::from_iterator(n, (0..n).map(|i| t[(i, i)]));
    Some((v, inverse, values, condition))
}

/// Reference propagation by `exp(-i H t_k) c0` at each sample time.
pub fn evolve_exact<O: Operator>(h: &O, c0: &StateVector, t_final: f64, sample_dt: f64) -> Result<Trajectory> {
    let segs = [(0.0, h)];
    evolve_exact_segments(&segs, c0, t_final, sample_dt)
}

/// Exact propagation through a schedule; switches happen at the exact
/// segment start times.
pub fn evolve_schedule_exact<O: Operator>(
    schedule: &Schedule<O>,
    c0: &StateVector,
    t_final: f64,
    sample_dt: f64,
) -> Result<Trajectory> {
    let segs: Vec<(f64, &O)> = schedule.segments.iter().map(|(t, o)| (*t, o)).collect();
    evolve_exact_segments(&segs, c0, t_final, sample_dt)
}

fn evolve_exact_segments<O: Operator>(
    segments: &[(f64, &O)],
    c0: &StateVector,
    t_final: f64,
    sample_dt: f64,
) -> Result<Trajectory> {
    let labels = segments[0].1.site_labels().to_vec();
    check_initial(c0, &labels)?;
    let n_samples = sample_count(t_final, sample_dt)?;
    let times = sample_times(n_samples, sample_dt);

    let mut states: Vec<Vec<C64>> = Vec::with_capacity(n_samples);
    let mut c_start = DVector::from_vec(c0.amplitudes.clone());
    let mut worst_route: Option<ExactRoute> = None;
    let mut next_sample = 0;
    for (s, &(t_start, op)) in segments.iter().enumerate() {
        let t_end = segments.get(s + 1).map_or(f64::INFINITY, |seg| seg.0);
        let mut prop = ExactPropagator::new(&op.to_dense());
        worst_route = Some(match (worst_route, prop.route()) {
            (Some(r @ ExactRoute::ScalingSquaring { .. }), _) => r,
            (_, r) => r,
        });
        let mut offsets = Vec::new();
        while next_sample < n_samples && times[next_sample] < t_end {
            offsets.push(times[next_sample] - t_start);
            next_sample += 1;
        }
        let has_next = t_end.is_finite();
        if has_next {
            offsets.push(t_end - t_start);
        }
        let mut out = prop.sample(&c_start, &offsets);
        if has_next {
            c_start = out.pop().expect("segment end state");
        }
        for (k, v) in out.into_iter().enumerate() {
            let t = times[states.len()];
            runaway_check(v.as_slice(), t).map_err(|e| match e {
                Error::GainRunaway { magnitude, .. } => Error::GainRunaway { time: t, magnitude },
                e => e,
            })?;
            let _ = k;
            states.push(v.as_slice().to_vec());
        }
        runaway_check(c_start.as_slice(), t_end.min(t_final))?;
        if next_sample >= n_samples {
            break;
        }
    }
    let route = worst_route.expect("at least one segment");
    Ok(Trajectory::from_states(times, states, labels, Method::Exact(route)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_chain_hamiltonian, dispersion, Boundary, ChainSpec};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn state(amps: Vec<C64>, origin: i64) -> StateVector {
        let labels = (0..amps.len() as i64).map(|k| k + origin).collect();
        StateVector::new(amps, labels).unwrap()
    }

    fn zero_h(n: usize) -> Hamiltonian {
        Hamiltonian::new(
            vec![C64::default(); n],
            vec![C64::default(); n - 1],
            vec![C64::default(); n - 1],
            None,
            (0..n as i64).collect(),
        )
        .unwrap()
    }

    fn ring(n: usize, phi: f64) -> Hamiltonian {
        let spec = ChainSpec::new(1.0, 0.4, 0.8, phi, n, 0).with_boundary(Boundary::Periodic);
        build_chain_hamiltonian(&spec).unwrap()
    }

    fn ring_mode(n: usize, k: usize) -> (f64, StateVector) {
        let q = 2.0 * PI * k as f64 / n as f64;
        let amps = (0..n).map(|s| C64::from_polar(1.0, q * s as f64)).collect();
        (q, state(amps, 0))
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h = zero_h(4);
        let c0 = state(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 0.3), C64::new(2.0, -1.0)], 0);
        let ex = evolve_exact(&h, &c0, 3.0, 0.5).unwrap();
        for s in &ex.states {
            assert_eq!(s, &c0.amplitudes);
        }
        let rk = evolve_rk4(&h, &c0, 3.0, 1e-3, 0.5).unwrap();
        for s in &rk.states {
            assert_eq!(s, &c0.amplitudes);
        }
    }

    #[test]
    fn scalar_decay() {
        let gamma = 0.7;
        let h = Hamiltonian::new(vec![C64::new(0.0, -gamma)], vec![], vec![], None, vec![0]).unwrap();
        let c0 = state(vec![C64::new(1.0, 0.0)], 0);
        let ex = evolve_exact(&h, &c0, 5.0, 0.5).unwrap();
        let rk = evolve_rk4(&h, &c0, 5.0, 1e-3, 0.5).unwrap();
        for (k, &t) in ex.times.iter().enumerate() {
            let want = (-gamma * t).exp();
            assert!((ex.states[k][0] - want).norm() < 1e-14);
            assert!((rk.states[k][0] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn ring_eigenmode_phase_evolution() {
        let n = 24;
        let h = ring(n, FRAC_PI_2);
        for k in [0, 3, 7, 12, 19] {
            let (q, c0) = ring_mode(n, k);
            let e = dispersion(1.0, 0.4, 0.8, FRAC_PI_2, q);
            // Decay stays above ~1e-3 over this window, so round-off in the other
            // (undamped) modes stays well under the relative bound.
            let ex = evolve_exact(&h, &c0, 4.0, 0.5).unwrap();
            for (j, &t) in ex.times.iter().enumerate() {
                let factor = (MINUS_I * e * t).exp();
                for (a, b) in ex.states[j].iter().zip(&c0.amplitudes) {
                    let want = b * factor;
                    assert!((a - want).norm() <= 1e-10 * want.norm().max(1e-300), "k={k} t={t}");
                }
            }
        }
    }

    #[test]
    fn rk4_matches_exact_on_small_chain() {
        let spec = ChainSpec::new(1.0, 0.4, 0.8, FRAC_PI_2, 40, -20);
        let h = build_chain_hamiltonian(&spec).unwrap();
        let mut amps = vec![C64::default(); 40];
        amps[20] = C64::new(1.0, 0.0);
        let c0 = state(amps, -20);
        let ex = evolve_exact(&h, &c0, 20.0, 0.5).unwrap();
        let rk = evolve_rk4(&h, &c0, 20.0, 1e-3, 0.5).unwrap();
        assert!(ex.max_abs_difference(&rk).unwrap() < 1e-8);
        assert_eq!(rk.method.tag(), "rk4");
    }

    #[test]
    fn exact_falls_back_for_strongly_nonnormal_chain() {
        // Hoppings 0.6 / 1.4: eigenvectors scale like (1.4/0.6)^(n/2).
        let spec = ChainSpec::new(1.0, 0.4, 0.8, FRAC_PI_2, 80, 0);
        let h = build_chain_hamiltonian(&spec).unwrap();
        let mut amps = vec![C64::default(); 80];
        amps[10] = C64::new(1.0, 0.0);
        let ex = evolve_exact(&h, &state(amps, 0), 1.0, 0.5).unwrap();
        assert!(ex.method.fell_back(), "{:?}", ex.method);
    }

    #[test]
    fn hermitian_norm_conserved() {
        let spec = ChainSpec::new(1.0, 0.0, 0.0, 0.0, 60, -30);
        let h = build_chain_hamiltonian(&spec).unwrap();
        let mut amps = vec![C64::default(); 60];
        amps[30] = C64::new(1.0, 0.0);
        let rk = evolve_rk4(&h, &state(amps, -30), 10.0, 1e-3, 1.0).unwrap();
        let drift = (rk.norm_series.last().unwrap() / rk.norm_series[0] - 1.0).abs();
        assert!(drift < 1e-6, "{drift}");
    }

    #[test]
    fn rk4_rejects_bad_steps() {
        let h = ring(10, 0.3);
        let (_, c0) = ring_mode(10, 1);
        assert!(matches!(
            evolve_rk4(&h, &c0, 1.0, 0.1, 0.1),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(matches!(
            evolve_rk4(&h, &c0, 1.0, 1e-3, 0.0105),
            Err(Error::SampleNotMultiple { .. })
        ));
        assert!(evolve_rk4(&h, &c0, 1.0, -1e-3, 0.1).is_err());
    }

    #[test]
    fn rk4_gain_runaway_aborts() {
        let h = Hamiltonian::new(
            vec![C64::new(0.0, 10.0), C64::new(0.0, 10.0)],
            vec![C64::new(0.1, 0.0)],
            vec![C64::new(0.1, 0.0)],
            None,
            vec![0, 1],
        )
        .unwrap();
        let c0 = state(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)], 0);
        let err = evolve_rk4(&h, &c0, 50.0, 1e-3, 0.5).unwrap_err();
        assert!(matches!(err, Error::GainRunaway { time, .. } if time > 30.0 && time < 40.0), "{err}");
        assert!(err.is_numerical());
        assert!(evolve_exact(&h, &c0, 50.0, 0.5).unwrap_err().is_numerical());
    }

    #[test]
    fn schedule_single_segment_matches_rk4() {
        let h = ring(12, 0.7);
        let (_, c0) = ring_mode(12, 2);
        let a = evolve_rk4(&h, &c0, 2.0, 1e-3, 0.1).unwrap();
        let b = evolve_schedule(&Schedule::single(h.clone()), &c0, 2.0, 1e-3, 0.1).unwrap();
        assert_eq!(a, b);
        let split = Schedule::new(vec![(0.0, h.clone()), (1.2345, h)]).unwrap();
        let c = evolve_schedule(&split, &c0, 2.0, 1e-3, 0.1).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn schedule_validation() {
        let h = ring(12, 0.7);
        assert!(Schedule::new(vec![(0.5, h.clone())]).is_err());
        assert!(Schedule::new(vec![(0.0, h.clone()), (0.0, h.clone())]).is_err());
        assert!(Schedule::new(vec![(0.0, h.clone()), (1.0, ring(13, 0.7))]).is_err());
        assert!(Schedule::<Hamiltonian>::new(vec![]).is_err());
        let s = Schedule::new(vec![(0.0, h.clone()), (1.0, h)]).unwrap();
        let (_, c0) = ring_mode(12, 1);
        assert!(evolve_schedule(&s, &c0, 0.5, 1e-3, 0.1).is_err());
    }

    #[test]
    fn exact_schedule_matches_rk4_schedule() {
        let a = build_chain_hamiltonian(&ChainSpec::new(1.0, 0.4, 0.8, FRAC_PI_2, 30, -15)).unwrap();
        let b = build_chain_hamiltonian(&ChainSpec::new(1.0, 0.4, 0.8, -FRAC_PI_2, 30, -15)).unwrap();
        let sched = Schedule::new(vec![(0.0, a), (2.5, b)]).unwrap();
        let mut amps = vec![C64::default(); 30];
        amps[12] = C64::new(1.0, 0.0);
        let c0 = state(amps, -15);
        let ex = evolve_schedule_exact(&sched, &c0, 6.0, 0.25).unwrap();
        let rk = evolve_schedule(&sched, &c0, 6.0, 1e-3, 0.25).unwrap();
        assert!(ex.max_abs_difference(&rk).unwrap() < 1e-9);
    }

    #[test]
    fn normalized_profile_examples() {
        let delta = state(vec![C64::default(), C64::new(1.0, 0.0), C64::default()], -1);
        assert_eq!(normalized_profile(&delta).unwrap(), vec![0.0, 1.0, 0.0]);
        let pair = state(vec![C64::new(3.0, 0.0), C64::new(0.0, 3.0)], 0);
        let rho = normalized_profile(&pair).unwrap();
        assert!(rho.iter().all(|r| (r - 0.5f64.sqrt()).abs() < 1e-15));
        let decayed = pair.scaled(C64::new((-0.8f64 * 7.0).exp(), 0.0));
        let rho2 = normalized_profile(&decayed).unwrap();
        for (a, b) in rho.iter().zip(&rho2) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = state(vec![C64::default(); 3], 0);
        assert!(matches!(normalized_profile(&zero), Err(Error::ZeroNorm)));
    }

    #[test]
    fn nearest_index_bounds() {
        let h = ring(6, 0.0);
        let (_, c0) = ring_mode(6, 1);
        let tr = evolve_exact(&h, &c0, 1.0, 0.25).unwrap();
        assert_eq!(tr.nearest_index(0.0).unwrap(), 0);
        assert_eq!(tr.nearest_index(0.6).unwrap(), 2);
        assert_eq!(tr.nearest_index(1.0).unwrap(), 4);
        assert!(tr.nearest_index(1.5).is_err());
        assert!(tr.nearest_index(-0.1).is_err());
    }
}
