//! C ABI over `nhchain`.
//!
//! Objects are opaque handles created by `nh_*_new`/`nh_evolve_*` and released
//! with the matching `nh_*_free`. Every function returns an [`NhStatus`]; on
//! failure the message is available from [`nh_last_error_message`] on the
//! same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nhchain::dynamics::{evolve_exact, evolve_rk4, normalized_profile, StateVector, Trajectory};
use nhchain::lattice::{
    build_chain_hamiltonian, build_sandwich_hamiltonian, dispersion, group_velocity, Boundary, ChainSpec, DefectSpec,
    Hamiltonian, SandwichSpec,
};
use nhchain::{Error, C64};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericalFailure = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NhComplex {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for NhComplex {
    fn from(z: C64) -> Self {
        NhComplex { re: z.re, im: z.im }
    }
}

impl From<NhComplex> for C64 {
    fn from(z: NhComplex) -> Self {
        C64::new(z.re, z.im)
    }
}

/// Opaque tight-binding Hamiltonian.
pub struct NhHamiltonian {
    inner: Hamiltonian,
}

/// Opaque sampled trajectory.
pub struct NhTrajectory {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Fail(NhStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::GainRunaway { .. } | Error::ZeroNorm => NhStatus::NumericalFailure,
            Error::Io { .. } => NhStatus::Io,
            _ => NhStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NhStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(NhStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NhStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            NhStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not UTF-8")))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length plus one, so a caller
/// can size the buffer; `buf` may be null when `len` is 0.
///
/// # Safety
/// `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nh_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Builds a uniform chain. Defects are given as parallel arrays of length
/// `n_defects` (any may be null when `n_defects` is 0).
///
/// # Safety
/// Array pointers must be valid for `n_defects` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nh_chain_new(
    kappa: f64,
    beta: f64,
    gamma: f64,
    phi: f64,
    n_sites: usize,
    index_origin: i64,
    periodic: bool,
    defect_sites: *const i64,
    defect_v_real: *const f64,
    defect_xi_imag: *const f64,
    n_defects: usize,
    out: *mut *mut NhHamiltonian,
) -> NhStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let sites = slice(defect_sites, n_defects, "defect_sites")?;
        let v = slice(defect_v_real, n_defects, "defect_v_real")?;
        let xi = slice(defect_xi_imag, n_defects, "defect_xi_imag")?;
        let boundary = if periodic { Boundary::Periodic } else { Boundary::Open };
        let spec = ChainSpec::new(kappa, beta, gamma, phi, n_sites, index_origin)
            .with_boundary(boundary)
            .with_defects((0..n_defects).map(|k| DefectSpec {
                site: sites[k],
                v_real: v[k],
                xi_imag: xi[k],
            }));
        let inner = build_chain_hamiltonian(&spec)?;
        *out = Box::into_raw(Box::new(NhHamiltonian { inner }));
        Ok(())
    })
}

/// Builds the capture structure: lossy chains with opposite phases around a
/// Hermitian window `[-half_width, half_width]` bounded by `v_c + i xi`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nh_sandwich_new(
    kappa: f64,
    beta: f64,
    gamma: f64,
    n_sites: usize,
    index_origin: i64,
    half_width: i64,
    q0: f64,
    v_c: f64,
    xi: f64,
    out: *mut *mut NhHamiltonian,
) -> NhStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let spec = SandwichSpec {
            chain: ChainSpec::new(kappa, beta, gamma, 0.0, n_sites, index_origin),
            half_width,
            q0,
            v_c,
            xi,
        };
        let inner = build_sandwich_hamiltonian(&spec)?;
        *out = Box::into_raw(Box::new(NhHamiltonian { inner }));
        Ok(())
    })
}

/// # Safety
/// `h` must come from `nh_chain_new`/`nh_sandwich_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nh_hamiltonian_free(h: *mut NhHamiltonian) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle; `out_dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nh_hamiltonian_dim(h: *const NhHamiltonian, out_dim: *mut usize) -> NhStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        *out_ref(out_dim, "out_dim")? = h.inner.dim();
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle; `out_labels` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn nh_hamiltonian_site_labels(
    h: *const NhHamiltonian,
    out_labels: *mut i64,
    len: usize,
) -> NhStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        let labels = h.inner.site_labels();
        let buf = slice_mut(out_labels, len, "out_labels")?;
        if len != labels.len() {
            return Err(invalid(format!("buffer holds {len} labels, need {}", labels.len())));
        }
        buf.copy_from_slice(labels);
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nh_hamiltonian_is_hermitian(h: *const NhHamiltonian, out: *mut bool) -> NhStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        *out_ref(out, "out")? = h.inner.is_hermitian();
        Ok(())
    })
}

/// Writes the dense matrix row-major into `buf` (`dim * dim` entries).
///
/// # Safety
/// `h` must be a live handle; `buf` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn nh_hamiltonian_to_dense(h: *const NhHamiltonian, buf: *mut NhComplex, len: usize) -> NhStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        let n = h.inner.dim();
        if len != n * n {
            return Err(invalid(format!("buffer holds {len} entries, need {}", n * n)));
        }
        let buf = slice_mut(buf, len, "buf")?;
        let m = h.inner.to_dense();
        for r in 0..n {
            for c in 0..n {
                buf[r * n + c] = m[(r, c)].into();
            }
        }
        Ok(())
    })
}

/// Closed-form band energy at wavenumber `q`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nh_dispersion(
    kappa: f64,
    beta: f64,
    gamma: f64,
    phi: f64,
    q: f64,
    out: *mut NhComplex,
) -> NhStatus {
    guard(|| {
        *out_ref(out, "out")? = dispersion(kappa, beta, gamma, phi, q).into();
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn nh_group_velocity(kappa: f64, q: f64) -> f64 {
    group_velocity(kappa, q)
}

unsafe fn initial_state(h: &NhHamiltonian, c0: *const NhComplex, len: usize) -> Result<StateVector, Fail> {
    let amps: Vec<C64> = slice(c0, len, "c0")?.iter().map(|&z| z.into()).collect();
    Ok(StateVector::new(amps, h.inner.site_labels().to_vec())?)
}

/// RK4 evolution of `c0` (length `dim`) under `h`.
///
/// # Safety
/// `h` must be a live handle; `c0` must hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nh_evolve_rk4(
    h: *const NhHamiltonian,
    c0: *const NhComplex,
    len: usize,
    t_final: f64,
    dt: f64,
    sample_dt: f64,
    out: *mut *mut NhTrajectory,
) -> NhStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        let c0 = initial_state(h, c0, len)?;
        let inner = evolve_rk4(&h.inner, &c0, t_final, dt, sample_dt)?;
        *out = Box::into_raw(Box::new(NhTrajectory { inner }));
        Ok(())
    })
}

/// Exact (matrix-exponential) evolution of `c0` under `h`.
///
/// # Safety
/// `h` must be a live handle; `c0` must hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nh_evolve_exact(
    h: *const NhHamiltonian,
    c0: *const NhComplex,
    len: usize,
    t_final: f64,
    sample_dt: f64,
    out: *mut *mut NhTrajectory,
) -> NhStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let h = h.as_ref().ok_or_else(|| null("h"))?;
        let c0 = initial_state(h, c0, len)?;
        let inner = evolve_exact(&h.inner, &c0, t_final, sample_dt)?;
        *out = Box::into_raw(Box::new(NhTrajectory { inner }));
        Ok(())
    })
}

/// # Safety
/// `t` must come from `nh_evolve_*` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_free(t: *mut NhTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_shape(
    t: *const NhTrajectory,
    out_samples: *mut usize,
    out_dim: *mut usize,
) -> NhStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("t"))?;
        *out_ref(out_samples, "out_samples")? = t.inner.len();
        *out_ref(out_dim, "out_dim")? = t.inner.dim();
        Ok(())
    })
}

/// Sample times (`n_samples` entries).
///
/// # Safety
/// `t` must be a live handle; `buf` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_times(t: *const NhTrajectory, buf: *mut f64, len: usize) -> NhStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("t"))?;
        if len != t.inner.len() {
            return Err(invalid(format!("buffer holds {len} times, need {}", t.inner.len())));
        }
        slice_mut(buf, len, "buf")?.copy_from_slice(&t.inner.times);
        Ok(())
    })
}

/// Total norm `S(t)` per sample (`n_samples` entries).
///
/// # Safety
/// `t` must be a live handle; `buf` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_norms(t: *const NhTrajectory, buf: *mut f64, len: usize) -> NhStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("t"))?;
        if len != t.inner.len() {
            return Err(invalid(format!("buffer holds {len} norms, need {}", t.inner.len())));
        }
        slice_mut(buf, len, "buf")?.copy_from_slice(&t.inner.norm_series);
        Ok(())
    })
}

/// Amplitudes of sample `k` (`dim` entries).
///
/// # Safety
/// `t` must be a live handle; `buf` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn nh_trajectory_state(
    t: *const NhTrajectory,
    k: usize,
    buf: *mut NhComplex,
    len: usize,
) -> NhStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("t"))?;
        let state = t
            .inner
            .states
            .get(k)
            .ok_or_else(|| invalid(format!("sample {k} out of range ({} samples)", t.inner.len())))?;
        if len != state.len() {
            return Err(invalid(format!("buffer holds {len} amplitudes, need {}", state.len())));
        }
        for (dst, src) in slice_mut(buf, len, "buf")?.iter_mut().zip(state) {
            *dst = (*src).into();
        }
        Ok(())
    })
}

/// `sum n |c_n|^2 / sum |c_n|^2` over the given labels.
///
/// # Safety
/// `amplitudes` and `labels` must hold `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nh_centroid(
    amplitudes: *const NhComplex,
    labels: *const i64,
    len: usize,
    out: *mut f64,
) -> NhStatus {
    guard(|| {
        let amps: Vec<C64> = slice(amplitudes, len, "amplitudes")?.iter().map(|&z| z.into()).collect();
        let state = StateVector::new(amps, slice(labels, len, "labels")?.to_vec())?;
        *out_ref(out, "out")? = nhchain::analysis::centroid(&state)?;
        Ok(())
    })
}

/// `|c_n| / sqrt(S)` for each site.
///
/// # Safety
/// `amplitudes` and `out` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn nh_normalized_profile(amplitudes: *const NhComplex, len: usize, out: *mut f64) -> NhStatus {
    guard(|| {
        let amps: Vec<C64> = slice(amplitudes, len, "amplitudes")?.iter().map(|&z| z.into()).collect();
        let labels = (0..len as i64).collect();
        let rho = normalized_profile(&StateVector::new(amps, labels)?)?;
        slice_mut(out, len, "out")?.copy_from_slice(&rho);
        Ok(())
    })
}

/// Runs a named preset (or preset group such as `fig7`) and writes its
/// artifacts into `out_dir`, exactly as the command-line tool does.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn nh_run_preset_to_dir(name: *const c_char, out_dir: *const c_char) -> NhStatus {
    guard(|| {
        let name = c_str(name, "name")?;
        let out_dir = c_str(out_dir, "out_dir")?;
        let members: Vec<&str> = match nhchain::protocols::preset_group(name) {
            Some(m) => m.to_vec(),
            None => vec![name],
        };
        let grouped = members.len() > 1 || members[0] != name;
        for m in members {
            let cfg = nhchain::protocols::preset(m).ok_or_else(|| invalid(format!("unknown preset `{m}`")))?;
            let result = nhchain::protocols::run(&cfg)?;
            let dir = if grouped { Path::new(out_dir).join(m) } else { Path::new(out_dir).to_path_buf() };
            nhchain::io::write_artifacts(&result, &dir, true)?;
        }
        Ok(())
    })
}
