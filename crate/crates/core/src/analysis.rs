//! Initial excitations and the observables computed from trajectories.

use std::ops::RangeInclusive;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;

use crate::dynamics::{normalized_profile, StateVector, Trajectory};
use crate::error::{Error, Result};

/// Default number of sites excluded next to a barrier when summing reflected norm.
pub const DEFAULT_REFLECTION_MARGIN: i64 = 3;

/// Minimum number of samples for a velocity fit.
pub const MIN_VELOCITY_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExcitationKind {
    SingleSite { n0: i64 },
    /// `c_n ~ exp(-(n - n0)^2 / w0^2 + i q0 n)`.
    Gaussian { n0: i64, w0: f64, q0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationSpec {
    pub kind: ExcitationKind,
    pub normalize: bool,
}

impl ExcitationSpec {
    pub fn single_site(n0: i64) -> Self {
        ExcitationSpec {
            kind: ExcitationKind::SingleSite { n0 },
            normalize: true,
        }
    }

    pub fn gaussian(n0: i64, w0: f64, q0: f64) -> Self {
        ExcitationSpec {
            kind: ExcitationKind::Gaussian { n0, w0, q0 },
            normalize: true,
        }
    }

    pub fn n0(&self) -> i64 {
        match self.kind {
            ExcitationKind::SingleSite { n0 } | ExcitationKind::Gaussian { n0, .. } => n0,
        }
    }

    pub fn width(&self) -> f64 {
        match self.kind {
            ExcitationKind::SingleSite { .. } => 0.0,
            ExcitationKind::Gaussian { w0, .. } => w0,
        }
    }
}

/// Raised when a Gaussian sits closer than `4 w0` to either chain end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearanceWarning {
    pub left: f64,
    pub right: f64,
    pub required: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Excitation {
    pub state: StateVector,
    pub clearance_warning: Option<ClearanceWarning>,
}

pub fn make_excitation(spec: &ExcitationSpec, site_labels: &[i64]) -> Result<Excitation> {
    let (lo, hi) = match (site_labels.first(), site_labels.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::param("site_labels", "empty lattice")),
    };
    let n0 = spec.n0();
    if n0 < lo || n0 > hi {
        return Err(Error::SiteOutOfRange { site: n0, lo, hi });
    }
    let mut warning = None;
    let mut amps: Vec<C64> = match spec.kind {
        ExcitationKind::SingleSite { n0 } => site_labels
            .iter()
            .map(|&n| if n == n0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
            .collect(),
        ExcitationKind::Gaussian { n0, w0, q0 } => {
            if !(w0 > 0.0) || !w0.is_finite() {
                return Err(Error::param("w0", "must be > 0"));
            }
            if !q0.is_finite() {
                return Err(Error::param("q0", "must be finite"));
            }
            let left = (n0 - lo) as f64;
            let right = (hi - n0) as f64;
            let required = 4.0 * w0;
            if left < required || right < required {
                warning = Some(ClearanceWarning { left, right, required });
            }
            site_labels
                .iter()
                .map(|&n| {
                    let x = (n - n0) as f64;
                    C64::from_polar((-x * x / (w0 * w0)).exp(), q0 * n as f64)
                })
                .collect()
        }
    };
    if spec.normalize {
        let s: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        let scale = 1.0 / s.sqrt();
        for z in &mut amps {
            *z *= scale;
        }
    }
    Ok(Excitation {
        state: StateVector::new(amps, site_labels.to_vec())?,
        clearance_warning: warning,
    })
}

/// `sum n |c_n|^2 / sum |c_n|^2`.
pub fn centroid(c: &StateVector) -> Result<f64> {
    centroid_of(&c.amplitudes, &c.site_labels)
}

fn centroid_of(amps: &[C64], labels: &[i64]) -> Result<f64> {
    let mut s = 0.0;
    let mut m = 0.0;
    for (z, &n) in amps.iter().zip(labels) {
        let p = z.norm_sqr();
        s += p;
        m += p * n as f64;
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(m / s)
}

pub fn centroid_series(traj: &Trajectory) -> Result<Vec<f64>> {
    traj.states.iter().map(|s| centroid_of(s, &traj.site_labels)).collect()
}

/// Least-squares slope of the centroid against time over `[t_a, t_b]`.
pub fn centroid_velocity(traj: &Trajectory, t_a: f64, t_b: f64) -> Result<f64> {
    let (start, end) = match (traj.times.first(), traj.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::EmptyTrajectory),
    };
    let slack = 1e-9 * end.abs().max(1.0);
    for t in [t_a, t_b] {
        if !t.is_finite() || t < start - slack || t > end + slack {
            return Err(Error::TimeOutOfRange { time: t, start, end });
        }
    }
    let picked: Vec<usize> = (0..traj.len())
        .filter(|&k| traj.times[k] >= t_a - slack && traj.times[k] <= t_b + slack)
        .collect();
    if picked.len() < MIN_VELOCITY_SAMPLES {
        return Err(Error::TooFewSamples {
            found: picked.len(),
            required: MIN_VELOCITY_SAMPLES,
        });
    }
    let mut ts = Vec::with_capacity(picked.len());
    let mut xs = Vec::with_capacity(picked.len());
    for k in picked {
        ts.push(traj.times[k]);
        xs.push(centroid_of(&traj.states[k], &traj.site_labels)?);
    }
    Ok(least_squares_slope(&ts, &xs))
}

pub(crate) fn least_squares_slope(ts: &[f64], xs: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let x_mean = xs.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, x) in ts.iter().zip(xs) {
        num += (t - t_mean) * (x - x_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    num / den
}

fn region_indices(labels: &[i64], region: &RangeInclusive<i64>) -> Result<(usize, usize)> {
    let (lo, hi) = (*region.start(), *region.end());
    let (first, last) = match (labels.first(), labels.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::InvalidRegion { lo, hi }),
    };
    if lo > hi || lo < first || hi > last {
        return Err(Error::InvalidRegion { lo, hi });
    }
    Ok(((lo - first) as usize, (hi - first) as usize))
}

fn region_norm(amps: &[C64], labels: &[i64], region: &RangeInclusive<i64>) -> Result<f64> {
    let (a, b) = region_indices(labels, region)?;
    Ok(amps[a..=b].iter().map(|z| z.norm_sqr()).sum())
}

/// Share of the total norm carried by the sites in `region` (inclusive labels).
pub fn region_norm_fraction(c: &StateVector, region: RangeInclusive<i64>) -> Result<f64> {
    let part = region_norm(&c.amplitudes, &c.site_labels, &region)?;
    let total = c.norm_sq();
    if !(total > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(part / total)
}

/// Normalized norm on the sites `<= barrier_site - margin` at the sample
/// nearest to `t_eval`, for a packet launched left of the barrier.
pub fn measure_reflection(traj: &Trajectory, barrier_site: i64, t_eval: f64, margin: i64) -> Result<f64> {
    let k = traj.nearest_index(t_eval)?;
    let snap = traj.snapshot(k);
    let rho = normalized_profile(&snap)?;
    let first = traj.site_labels[0];
    let hi = barrier_site - margin;
    let (a, b) = region_indices(&traj.site_labels, &(first..=hi))?;
    Ok(rho[a..=b].iter().map(|r| r * r).sum::<f64>().clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportMetrics {
    pub centroid_series: Vec<f64>,
    pub velocity_estimate: f64,
    pub reflection_fraction: f64,
    pub transmission_fraction: f64,
    pub interior_fraction: f64,
}

/// Splits the normalized snapshot at `t_eval` into the reflected region
/// (`<= left - margin`), the transmitted region (`>= right + margin`) and the
/// interior in between.
pub fn transport_metrics(
    traj: &Trajectory,
    barriers: (i64, i64),
    margin: i64,
    t_eval: f64,
    velocity_window: (f64, f64),
) -> Result<TransportMetrics> {
    let (left, right) = (barriers.0.min(barriers.1), barriers.0.max(barriers.1));
    let k = traj.nearest_index(t_eval)?;
    let snap = traj.snapshot(k);
    let rho = normalized_profile(&snap)?;
    let first = traj.site_labels[0];
    let last = *traj.site_labels.last().expect("non-empty");
    let sum = |lo: i64, hi: i64| -> f64 {
        if lo > hi {
            return 0.0;
        }
        let (a, b) = ((lo - first) as usize, (hi - first) as usize);
        rho[a..=b].iter().map(|r| r * r).sum()
    };
    let refl_hi = (left - margin).min(last);
    let trans_lo = (right + margin).max(first);
    let interior_lo = refl_hi.max(first - 1) + 1;
    let interior_hi = trans_lo.min(last + 1) - 1;
    Ok(TransportMetrics {
        centroid_series: centroid_series(traj)?,
        velocity_estimate: centroid_velocity(traj, velocity_window.0, velocity_window.1)?,
        reflection_fraction: sum(first, refl_hi),
        transmission_fraction: sum(trans_lo, last),
        interior_fraction: sum(interior_lo, interior_hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
    /// `1 - RSS / sum |c_n|^2`, clamped to `[0, 1]`; 0 when `degenerate`.
    pub fidelity: f64,
    /// Profile is either flat or not resolved by the lattice (width below one
    /// site, or essentially a single occupied site).
    pub degenerate: bool,
}

/// Least-squares fit of `|c_n|` to `A exp(-(n - n0)^2 / w^2)` by
/// Levenberg-Marquardt, started from the moments of `|c_n|`.
pub fn fit_gaussian(c: &StateVector) -> Result<GaussianFit> {
    let x: Vec<f64> = c.site_labels.iter().map(|&n| n as f64).collect();
    let y: Vec<f64> = c.amplitudes.iter().map(|z| z.norm()).collect();
    fit_gaussian_profile(&x, &y)
}

pub fn fit_gaussian_profile(x: &[f64], y: &[f64]) -> Result<GaussianFit> {
    let tss: f64 = y.iter().map(|v| v * v).sum();
    if !(tss > 0.0) || !tss.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let quartic: f64 = y.iter().map(|v| v.powi(4)).sum();
    let participation = tss * tss / quartic;
    let span = x.last().unwrap_or(&0.0) - x.first().unwrap_or(&0.0);

    let weight: f64 = y.iter().map(|v| v.abs()).sum();
    let mu0 = x.iter().zip(y).map(|(xi, v)| xi * v.abs()).sum::<f64>() / weight;
    let var0 = x.iter().zip(y).map(|(xi, v)| (xi - mu0).powi(2) * v.abs()).sum::<f64>() / weight;
    let a0 = y.iter().cloned().fold(f64::MIN, f64::max);
    let mut p = Vector3::new(a0, mu0, (2.0 * var0).sqrt().max(0.5));

    let rss_of = |p: &Vector3<f64>| -> f64 {
        x.iter()
            .zip(y)
            .map(|(xi, yi)| {
                let d = xi - p[1];
                p[0] * (-d * d / (p[2] * p[2])).exp() - yi
            })
            .map(|r| r * r)
            .sum()
    };

    let mut rss = rss_of(&p);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (xi, yi) in x.iter().zip(y) {
            let d = xi - p[1];
            let w2 = p[2] * p[2];
            let g = (-d * d / w2).exp();
            let r = p[0] * g - yi;
            let jac = Vector3::new(g, p[0] * g * 2.0 * d / w2, p[0] * g * 2.0 * d * d / (w2 * p[2]));
            jtj += jac * jac.transpose();
            jtr += jac * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut damped = jtj;
            for i in 0..3 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            if trial[2].abs() < 1e-3 || !trial.iter().all(|v| v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let trial_rss = rss_of(&trial);
            if trial_rss < rss {
                let rel = (rss - trial_rss) / tss;
                p = trial;
                rss = trial_rss;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let width = p[2].abs();
    let degenerate = participation < 2.0 || width < 1.0 || width > span;
    let fidelity = if degenerate { 0.0 } else { (1.0 - rss / tss).clamp(0.0, 1.0) };
    Ok(GaussianFit {
        center: p[1],
        width,
        amplitude: p[0],
        fidelity,
        degenerate,
    })
}

/// Un-normalized norm in `out_region` at `t_out` over the norm in `in_region`
/// at `t_in` (nearest samples).
pub fn storage_efficiency(
    traj: &Trajectory,
    t_in: f64,
    t_out: f64,
    in_region: RangeInclusive<i64>,
    out_region: RangeInclusive<i64>,
) -> Result<f64> {
    let k_in = traj.nearest_index(t_in)?;
    let k_out = traj.nearest_index(t_out)?;
    let n_in = region_norm(&traj.states[k_in], &traj.site_labels, &in_region)?;
    let n_out = region_norm(&traj.states[k_out], &traj.site_labels, &out_region)?;
    if !(n_in > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(n_out / n_in)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleaseDirection {
    Forward,
    Reversed,
}

impl ReleaseDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReleaseDirection::Forward => "forward",
            ReleaseDirection::Reversed => "reversed",
        }
    }

    /// Forward iff the release moves with the same sign as the incident packet.
    pub fn classify(incident_velocity: f64, release_velocity: f64) -> Self {
        if incident_velocity.signum() == release_velocity.signum() {
            ReleaseDirection::Forward
        } else {
            ReleaseDirection::Reversed
        }
    }
}

impl std::str::FromStr for ReleaseDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(ReleaseDirection::Forward),
            "reversed" => Ok(ReleaseDirection::Reversed),
            other => Err(Error::config("release_direction", format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageMetrics {
    pub efficiency: f64,
    pub shape_fidelity: f64,
    pub fit_width: f64,
    pub incident_velocity: f64,
    pub release_velocity: f64,
    pub release_direction: ReleaseDirection,
    /// Smallest normalized norm inside the capture window over the capture interval.
    pub capture_fraction_min: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Method, Trajectory};
    use std::f64::consts::FRAC_PI_2;

    fn labels(lo: i64, hi: i64) -> Vec<i64> {
        (lo..=hi).collect()
    }

    fn traj_from(states: Vec<Vec<C64>>, labels: Vec<i64>, dt: f64) -> Trajectory {
        let times = (0..states.len()).map(|k| k as f64 * dt).collect();
        Trajectory::from_states(times, states, labels, Method::Rk4 { dt })
    }

    #[test]
    fn single_site_excitation() {
        let ex = make_excitation(&ExcitationSpec::single_site(0), &labels(-5, 5)).unwrap();
        for (z, &n) in ex.state.amplitudes.iter().zip(&ex.state.site_labels) {
            assert_eq!(*z, if n == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        }
        assert!(make_excitation(&ExcitationSpec::single_site(6), &labels(-5, 5)).is_err());
    }

    #[test]
    fn gaussian_excitation_normalized_and_symmetric() {
        let ex = make_excitation(&ExcitationSpec::gaussian(-30, 5.0, -FRAC_PI_2), &labels(-80, 40)).unwrap();
        assert!((ex.state.norm_sq() - 1.0).abs() < 1e-12);
        assert!(ex.clearance_warning.is_none());
        let k = ex.state.index_of(-30).unwrap();
        // Carrier phase e^{i q0 n} between neighbours.
        let ratio = ex.state.amplitudes[k + 1] / ex.state.amplitudes[k];
        assert!((ratio.arg() + FRAC_PI_2).abs() < 1e-12);

        let real = make_excitation(&ExcitationSpec::gaussian(0, 5.0, 0.0), &labels(-30, 30)).unwrap();
        for d in 0..30usize {
            let a = real.state.amplitudes[30 + d];
            let b = real.state.amplitudes[30 - d];
            assert!(a.im == 0.0 && a.re > 0.0);
            assert_eq!(a, b);
        }
        assert!((centroid(&real.state).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_clearance_warning() {
        let ex = make_excitation(&ExcitationSpec::gaussian(0, 5.0, 0.0), &labels(-10, 40)).unwrap();
        let w = ex.clearance_warning.unwrap();
        assert_eq!(w.left, 10.0);
        assert_eq!(w.required, 20.0);
        assert!(make_excitation(&ExcitationSpec::gaussian(0, 0.0, 0.0), &labels(-10, 10)).is_err());
    }

    #[test]
    fn centroid_examples() {
        let ex = make_excitation(&ExcitationSpec::single_site(7), &labels(0, 10)).unwrap();
        assert_eq!(centroid(&ex.state).unwrap(), 7.0);
        let g = make_excitation(&ExcitationSpec::gaussian(-30, 5.0, -FRAC_PI_2), &labels(-70, 10)).unwrap();
        assert!((centroid(&g.state).unwrap() + 30.0).abs() < 1e-6);
        let pair = StateVector::new(
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 1.0)],
            vec![-1, 0, 1],
        )
        .unwrap();
        assert!(centroid(&pair).unwrap().abs() < 1e-15);
        let zero = StateVector::new(vec![C64::new(0.0, 0.0); 3], vec![0, 1, 2]).unwrap();
        assert!(matches!(centroid(&zero), Err(Error::ZeroNorm)));
    }

    #[test]
    fn velocity_of_stationary_and_moving_states() {
        let l = labels(0, 20);
        let mut still = Vec::new();
        let mut moving = Vec::new();
        for k in 0..10 {
            let mut a = vec![C64::new(0.0, 0.0); 21];
            a[5] = C64::new(1.0, 0.0);
            still.push(a);
            let mut b = vec![C64::new(0.0, 0.0); 21];
            b[k * 2] = C64::new(0.5, 0.0);
            moving.push(b);
        }
        let tr = traj_from(still, l.clone(), 0.5);
        assert!(centroid_velocity(&tr, 0.0, 4.5).unwrap().abs() < 1e-6);
        let tm = traj_from(moving, l, 0.5);
        assert!((centroid_velocity(&tm, 1.0, 4.5).unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(
            centroid_velocity(&tm, 0.0, 1.0),
            Err(Error::TooFewSamples { found: 3, .. })
        ));
        assert!(centroid_velocity(&tm, 0.0, 9.0).is_err());
    }

    #[test]
    fn region_fractions() {
        let delta = make_excitation(&ExcitationSpec::single_site(0), &labels(-20, 20)).unwrap().state;
        assert_eq!(region_norm_fraction(&delta, -20..=20).unwrap(), 1.0);
        assert_eq!(region_norm_fraction(&delta, 1..=10).unwrap(), 0.0);
        let g = make_excitation(&ExcitationSpec::gaussian(0, 5.0, 0.3), &labels(-40, 40)).unwrap().state;
        let left = region_norm_fraction(&g, -40..=-1).unwrap();
        let mid = region_norm_fraction(&g, 0..=0).unwrap();
        assert!((left + 0.5 * mid - 0.5).abs() < 1e-3);
        assert!(region_norm_fraction(&g, RangeInclusive::new(5, 4)).is_err());
        assert!(region_norm_fraction(&g, 30..=50).is_err());
    }

    #[test]
    fn gaussian_self_fit() {
        let g = make_excitation(&ExcitationSpec::gaussian(3, 5.0, -FRAC_PI_2), &labels(-40, 40)).unwrap().state;
        let fit = fit_gaussian(&g).unwrap();
        assert!((fit.width - 5.0).abs() < 1e-3, "{fit:?}");
        assert!((fit.center - 3.0).abs() < 1e-6);
        assert!(fit.fidelity > 0.999);
        assert!(!fit.degenerate);
    }

    #[test]
    fn delta_and_flat_fits_are_degenerate() {
        let d = make_excitation(&ExcitationSpec::single_site(0), &labels(-20, 20)).unwrap().state;
        let fit = fit_gaussian(&d).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.fidelity, 0.0);
        let flat = StateVector::new(vec![C64::new(0.2, 0.0); 41], labels(-20, 20)).unwrap();
        let fit = fit_gaussian(&flat).unwrap();
        assert!(fit.degenerate, "{fit:?}");
        assert_eq!(fit.fidelity, 0.0);
    }

    #[test]
    fn efficiency_identity_and_scaling() {
        let g = make_excitation(&ExcitationSpec::gaussian(0, 3.0, 0.0), &labels(-20, 20)).unwrap().state;
        let tr = traj_from(vec![g.amplitudes.clone(), g.amplitudes.clone()], g.site_labels.clone(), 1.0);
        assert_eq!(storage_efficiency(&tr, 0.0, 0.0, -20..=20, -20..=20).unwrap(), 1.0);
        let doubled = traj_from(
            vec![g.amplitudes.clone(), g.amplitudes.iter().map(|z| z * 2.0).collect()],
            g.site_labels.clone(),
            1.0,
        );
        assert!((storage_efficiency(&doubled, 0.0, 1.0, -20..=20, -20..=20).unwrap() - 4.0).abs() < 1e-12);
        let zero = traj_from(vec![vec![C64::new(0.0, 0.0); 41]; 2], g.site_labels, 1.0);
        assert!(matches!(
            storage_efficiency(&zero, 0.0, 1.0, -20..=20, -20..=20),
            Err(Error::ZeroNorm)
        ));
    }

    #[test]
    fn transport_fractions_partition_unity() {
        let g = make_excitation(&ExcitationSpec::gaussian(0, 6.0, 0.0), &labels(-40, 40)).unwrap().state;
        let states = vec![g.amplitudes.clone(); 6];
        let tr = traj_from(states, g.site_labels, 1.0);
        let m = transport_metrics(&tr, (-5, 5), 3, 5.0, (0.0, 5.0)).unwrap();
        let total = m.reflection_fraction + m.transmission_fraction + m.interior_fraction;
        assert!((total - 1.0).abs() < 1e-10);
        assert!((m.reflection_fraction - m.transmission_fraction).abs() < 1e-12);
        assert!(m.velocity_estimate.abs() < 1e-9);
    }

    #[test]
    fn release_direction_sign_rule() {
        assert_eq!(ReleaseDirection::classify(2.0, 1.9), ReleaseDirection::Forward);
        assert_eq!(ReleaseDirection::classify(2.0, -1.9), ReleaseDirection::Reversed);
        assert_eq!(ReleaseDirection::classify(-2.0, -1.9), ReleaseDirection::Forward);
    }
}
