//! Lattice parameterizations and their Hamiltonians.
//!
//! All operators follow the convention `i dc/dt = H c`: row `n` of `H` is the
//! right-hand side of the equation of motion for amplitude `c_n`. Loss enters
//! as a negative imaginary diagonal (`-i gamma`), gain as a positive one.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Adiabaticity ratio above which [`adiabatic_reduce`] raises its warning flag.
pub const ADIABATICITY_WARN_RATIO: f64 = 0.2;

/// Reduces a phase to `(-pi, pi]`. Values already in range are returned
/// bit-for-bit unchanged.
pub fn reduce_phase(phi: f64) -> f64 {
    if phi > -PI && phi <= PI {
        return phi;
    }
    let r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {x}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Open,
    Periodic,
}

/// On-site potential `v_real + i xi_imag` added at one site label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectSpec {
    pub site: i64,
    pub v_real: f64,
    /// Positive values are gain.
    pub xi_imag: f64,
}

impl DefectSpec {
    pub fn real(site: i64, v_real: f64) -> Self {
        DefectSpec {
            site,
            v_real,
            xi_imag: 0.0,
        }
    }

    pub fn potential(&self) -> C64 {
        C64::new(self.v_real, self.xi_imag)
    }
}

/// Homogeneous chain with complex hoppings `kappa + i beta e^{+-i phi}` and
/// uniform loss `gamma`, plus optional point defects.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub kappa: f64,
    pub beta: f64,
    pub gamma: f64,
    phi: f64,
    pub n_sites: usize,
    pub index_origin: i64,
    pub boundary: Boundary,
    pub defects: Vec<DefectSpec>,
}

impl ChainSpec {
    /// Open chain without defects; `phi` is reduced to `(-pi, pi]`.
    pub fn new(kappa: f64, beta: f64, gamma: f64, phi: f64, n_sites: usize, index_origin: i64) -> Self {
        ChainSpec {
            kappa,
            beta,
            gamma,
            phi: reduce_phase(phi),
            n_sites,
            index_origin,
            boundary: Boundary::Open,
            defects: Vec::new(),
        }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_defects(mut self, defects: impl IntoIterator<Item = DefectSpec>) -> Self {
        self.defects.extend(defects);
        self
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn set_phi(&mut self, phi: f64) {
        self.phi = reduce_phase(phi);
    }

    pub fn first_site(&self) -> i64 {
        self.index_origin
    }

    pub fn last_site(&self) -> i64 {
        self.index_origin + self.n_sites as i64 - 1
    }

    pub fn contains(&self, site: i64) -> bool {
        site >= self.first_site() && site <= self.last_site()
    }

    pub fn site_labels(&self) -> Vec<i64> {
        (self.first_site()..=self.last_site()).collect()
    }

    /// `gamma >= 2 beta`: no Bloch mode is amplified.
    pub fn is_purely_dissipative(&self) -> bool {
        self.gamma >= 2.0 * self.beta
    }

    /// Hopping from site `n` to `n + 1` (coefficient of `c_{n+1}` in row `n`).
    pub fn forward_hopping(&self) -> C64 {
        self.kappa + I * self.beta * C64::from_polar(1.0, self.phi)
    }

    /// Hopping from site `n` to `n - 1` (coefficient of `c_{n-1}` in row `n`).
    pub fn backward_hopping(&self) -> C64 {
        self.kappa + I * self.beta * C64::from_polar(1.0, -self.phi)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite("kappa", self.kappa)?;
        check_finite("beta", self.beta)?;
        check_finite("gamma", self.gamma)?;
        check_finite("phi", self.phi)?;
        if self.kappa <= 0.0 {
            return Err(Error::param("kappa", "must be > 0"));
        }
        if self.beta < 0.0 {
            return Err(Error::param("beta", "must be >= 0"));
        }
        if self.n_sites < 2 {
            return Err(Error::param("n_sites", "must be >= 2"));
        }
        let mut seen = HashSet::new();
        for d in &self.defects {
            check_finite("defect.v_real", d.v_real)?;
            check_finite("defect.xi_imag", d.xi_imag)?;
            if !self.contains(d.site) {
                return Err(Error::DefectOutOfRange {
                    site: d.site,
                    lo: self.first_site(),
                    hi: self.last_site(),
                });
            }
            if !seen.insert(d.site) {
                return Err(Error::DuplicateDefect(d.site));
            }
        }
        Ok(())
    }
}

/// Tridiagonal complex operator with optional periodic wrap terms.
///
/// `upper[k]` couples row `k` to column `k + 1`, `lower[k]` couples row
/// `k + 1` to column `k`. `corner_upper` couples the last row to column 0 and
/// `corner_lower` couples row 0 to the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    diag: Vec<C64>,
    upper: Vec<C64>,
    lower: Vec<C64>,
    corner_upper: Option<C64>,
    corner_lower: Option<C64>,
    site_labels: Vec<i64>,
}

impl Hamiltonian {
    pub fn new(
        diag: Vec<C64>,
        upper: Vec<C64>,
        lower: Vec<C64>,
        corners: Option<(C64, C64)>,
        site_labels: Vec<i64>,
    ) -> Result<Self> {
        let dim = diag.len();
        if dim == 0 {
            return Err(Error::param("dim", "must be positive"));
        }
        for (len, _) in [(upper.len(), "upper"), (lower.len(), "lower")] {
            if len != dim - 1 {
                return Err(Error::DimensionMismatch {
                    expected: dim - 1,
                    got: len,
                });
            }
        }
        if site_labels.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: site_labels.len(),
            });
        }
        let all = diag.iter().chain(&upper).chain(&lower);
        let corner_vals = corners.iter().flat_map(|(a, b)| [a, b]);
        if all.chain(corner_vals).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("hamiltonian", "entries must be finite"));
        }
        Ok(Hamiltonian {
            diag,
            upper,
            lower,
            corner_upper: corners.map(|c| c.0),
            corner_lower: corners.map(|c| c.1),
            site_labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[C64] {
        &self.diag
    }

    pub fn upper(&self) -> &[C64] {
        &self.upper
    }

    pub fn lower(&self) -> &[C64] {
        &self.lower
    }

    pub fn corner_upper(&self) -> Option<C64> {
        self.corner_upper
    }

    pub fn corner_lower(&self) -> Option<C64> {
        self.corner_lower
    }

    pub fn site_labels(&self) -> &[i64] {
        &self.site_labels
    }

    pub fn index_of(&self, site: i64) -> Option<usize> {
        let first = *self.site_labels.first()?;
        let idx = site.checked_sub(first)?;
        usize::try_from(idx)
            .ok()
            .filter(|&i| i < self.dim() && self.site_labels[i] == site)
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for k in 0..n {
            let mut acc = self.diag[k] * x[k];
            if k + 1 < n {
                acc += self.upper[k] * x[k + 1];
            }
            if k > 0 {
                acc += self.lower[k - 1] * x[k - 1];
            }
            y[k] = acc;
        }
        if let (Some(cu), Some(cl)) = (self.corner_upper, self.corner_lower) {
            y[n - 1] += cu * x[0];
            y[0] += cl * x[n - 1];
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            m[(k, k)] += self.diag[k];
        }
        for k in 0..n - 1 {
            m[(k, k + 1)] += self.upper[k];
            m[(k + 1, k)] += self.lower[k];
        }
        if let (Some(cu), Some(cl)) = (self.corner_upper, self.corner_lower) {
            m[(n - 1, 0)] += cu;
            m[(0, n - 1)] += cl;
        }
        m
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.to_dense().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Exact check: real diagonal and conjugate-paired off-diagonals.
    pub fn is_hermitian(&self) -> bool {
        let diag_real = self.diag.iter().all(|z| z.im == 0.0);
        let offdiag = self
            .upper
            .iter()
            .zip(&self.lower)
            .all(|(u, l)| *l == u.conj());
        let corners = match (self.corner_upper, self.corner_lower) {
            (Some(cu), Some(cl)) => cl == cu.conj(),
            _ => true,
        };
        diag_real && offdiag && corners
    }

    /// Hermiticity of the rows with indices in `rows`, i.e. each row's diagonal
    /// is real and its hoppings are the conjugates of the reverse hoppings.
    pub fn rows_hermitian(&self, rows: std::ops::Range<usize>) -> bool {
        let n = self.dim();
        rows.into_iter().all(|k| {
            let up_ok = k + 1 >= n || self.lower[k] == self.upper[k].conj();
            let down_ok = k == 0 || self.upper[k - 1] == self.lower[k - 1].conj();
            self.diag[k].im == 0.0 && up_ok && down_ok
        })
    }
}

pub fn build_chain_hamiltonian(spec: &ChainSpec) -> Result<Hamiltonian> {
    spec.validate()?;
    let n = spec.n_sites;
    let mut diag = vec![C64::new(0.0, -spec.gamma); n];
    for d in &spec.defects {
        let idx = (d.site - spec.first_site()) as usize;
        diag[idx] += d.potential();
    }
    let fwd = spec.forward_hopping();
    let bwd = spec.backward_hopping();
    let corners = match spec.boundary {
        Boundary::Open => None,
        // Site 0 follows site n-1 going forward.
        Boundary::Periodic => Some((fwd, bwd)),
    };
    Hamiltonian::new(diag, vec![fwd; n - 1], vec![bwd; n - 1], corners, spec.site_labels())
}

/// Complex energy of the Bloch mode `e^{iqn}` of the defect-free chain.
pub fn dispersion(kappa: f64, beta: f64, gamma: f64, phi: f64, q: f64) -> C64 {
    C64::new(2.0 * kappa * q.cos(), 2.0 * beta * (q + phi).cos() - gamma)
}

/// `Re dE/dq`; independent of the non-Hermitian parameters.
pub fn group_velocity(kappa: f64, q: f64) -> f64 {
    -2.0 * kappa * q.sin()
}

/// Two-sublattice sawtooth lattice: main sublattice A with nearest-neighbour
/// hopping `kappa`, auxiliary sublattice B coupled with flux phase `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SawtoothSpec {
    pub kappa: f64,
    pub j: f64,
    pub theta: f64,
    /// Uniform loss on sublattice A.
    pub gamma_loss: f64,
    /// Real potential per A site (length `n_cells`).
    pub v_a: Vec<f64>,
    pub u_b: C64,
    pub n_cells: usize,
    /// Label of the first cell.
    pub index_origin: i64,
}

impl SawtoothSpec {
    pub fn new(kappa: f64, j: f64, theta: f64, gamma_loss: f64, u_b: C64, n_cells: usize) -> Self {
        SawtoothSpec {
            kappa,
            j,
            theta,
            gamma_loss,
            v_a: vec![0.0; n_cells],
            u_b,
            n_cells,
            index_origin: 0,
        }
    }

    /// Auxiliary potential `i J^2 / beta` that turns the reduced hoppings into
    /// `kappa + i beta e^{+-2 i theta}`.
    pub fn matched_u_b(j: f64, beta: f64) -> C64 {
        C64::new(0.0, j * j / beta)
    }

    pub fn adiabaticity_ratio(&self) -> f64 {
        self.j.max(2.0 * self.kappa) / self.u_b.norm()
    }

    pub fn cell_labels(&self) -> Vec<i64> {
        (0..self.n_cells as i64).map(|k| self.index_origin + k).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("kappa", self.kappa),
            ("J", self.j),
            ("theta", self.theta),
            ("Gamma", self.gamma_loss),
            ("U_b.re", self.u_b.re),
            ("U_b.im", self.u_b.im),
        ] {
            check_finite(name, x)?;
        }
        if self.kappa <= 0.0 {
            return Err(Error::param("kappa", "must be > 0"));
        }
        if self.j <= 0.0 {
            return Err(Error::param("J", "must be > 0"));
        }
        if self.gamma_loss < 0.0 {
            return Err(Error::param("Gamma", "must be >= 0"));
        }
        if self.u_b.norm() == 0.0 {
            return Err(Error::param("U_b", "must be nonzero"));
        }
        if self.n_cells < 2 {
            return Err(Error::param("n_cells", "must be >= 2"));
        }
        if self.v_a.len() != self.n_cells {
            return Err(Error::DimensionMismatch {
                expected: self.n_cells,
                got: self.v_a.len(),
            });
        }
        if let Some(v) = self.v_a.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("V_a", format!("must be finite, got {v}")));
        }
        Ok(())
    }
}

/// Square banded operator, stored row-major as `dim x (2 * bandwidth + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandOperator {
    dim: usize,
    bandwidth: usize,
    data: Vec<C64>,
}

impl BandOperator {
    pub fn zeros(dim: usize, bandwidth: usize) -> Self {
        BandOperator {
            dim,
            bandwidth,
            data: vec![C64::new(0.0, 0.0); dim * (2 * bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        assert!(row.abs_diff(col) <= self.bandwidth, "entry ({row}, {col}) outside band");
        row * (2 * self.bandwidth + 1) + (col + self.bandwidth - row)
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        if row.abs_diff(col) > self.bandwidth {
            return C64::new(0.0, 0.0);
        }
        self.data[self.slot(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        let s = self.slot(row, col);
        self.data[s] = value;
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let w = 2 * self.bandwidth + 1;
        for (row, out) in y.iter_mut().enumerate() {
            let lo = row.saturating_sub(self.bandwidth);
            let hi = (row + self.bandwidth).min(self.dim - 1);
            let base = row * w + self.bandwidth - row;
            let mut acc = C64::new(0.0, 0.0);
            for col in lo..=hi {
                acc += self.data[base + col] * x[col];
            }
            *out = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.get(r, c))
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Full two-sublattice operator on the interleaved basis `(a_1, b_1, a_2, b_2, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SawtoothOperator {
    pub band: BandOperator,
    pub n_cells: usize,
    /// Cell label of every entry of the interleaved state.
    pub site_labels: Vec<i64>,
}

impl SawtoothOperator {
    pub fn a_index(cell: usize) -> usize {
        2 * cell
    }

    pub fn b_index(cell: usize) -> usize {
        2 * cell + 1
    }

    /// Amplitudes of sublattice A extracted from an interleaved state.
    pub fn a_part(state: &[C64]) -> Vec<C64> {
        state.iter().step_by(2).copied().collect()
    }
}

/// Builds the two-sublattice operator. The last B site has only one A
/// neighbour; its coupling to the missing `a_{n+1}` is dropped.
pub fn build_sawtooth_hamiltonian(spec: &SawtoothSpec) -> Result<SawtoothOperator> {
    spec.validate()?;
    let n = spec.n_cells;
    let mut band = BandOperator::zeros(2 * n, 2);
    let up = spec.j * C64::from_polar(1.0, spec.theta);
    let down = spec.j * C64::from_polar(1.0, -spec.theta);
    let kappa = C64::new(spec.kappa, 0.0);
    for cell in 0..n {
        let a = SawtoothOperator::a_index(cell);
        let b = SawtoothOperator::b_index(cell);
        band.set(a, a, C64::new(spec.v_a[cell], -spec.gamma_loss));
        if cell + 1 < n {
            band.set(a, a + 2, kappa);
        }
        if cell > 0 {
            band.set(a, a - 2, kappa);
            band.set(a, b - 2, down);
        }
        band.set(a, b, up);

        band.set(b, b, spec.u_b);
        band.set(b, a, down);
        if cell + 1 < n {
            band.set(b, a + 2, up);
        }
    }
    let site_labels = spec.cell_labels().into_iter().flat_map(|l| [l, l]).collect();
    Ok(SawtoothOperator {
        band,
        n_cells: n,
        site_labels,
    })
}

/// Effective single-sublattice chain after eliminating sublattice B.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedChain {
    /// Coefficient of `a_{n+1}` in row `n`.
    pub j1: C64,
    /// Coefficient of `a_{n-1}` in row `n`.
    pub j2: C64,
    pub u_eff: Vec<C64>,
    pub site_labels: Vec<i64>,
    pub adiabaticity_ratio: f64,
    /// Set when `adiabaticity_ratio` exceeds [`ADIABATICITY_WARN_RATIO`].
    pub adiabaticity_warning: bool,
}

impl ReducedChain {
    pub fn hamiltonian(&self) -> Result<Hamiltonian> {
        let n = self.u_eff.len();
        Hamiltonian::new(
            self.u_eff.clone(),
            vec![self.j1; n - 1],
            vec![self.j2; n - 1],
            None,
            self.site_labels.clone(),
        )
    }
}

pub fn adiabatic_reduce(spec: &SawtoothSpec) -> Result<ReducedChain> {
    spec.validate()?;
    let j2_over_u = spec.j * spec.j / spec.u_b;
    let j1 = spec.kappa - j2_over_u * C64::from_polar(1.0, 2.0 * spec.theta);
    let j2 = spec.kappa - j2_over_u * C64::from_polar(1.0, -2.0 * spec.theta);
    let u_eff = spec
        .v_a
        .iter()
        .map(|&v| C64::new(v, -spec.gamma_loss) - 2.0 * j2_over_u)
        .collect();
    let ratio = spec.adiabaticity_ratio();
    Ok(ReducedChain {
        j1,
        j2,
        u_eff,
        site_labels: spec.cell_labels(),
        adiabaticity_ratio: ratio,
        adiabaticity_warning: ratio > ADIABATICITY_WARN_RATIO,
    })
}

/// The chain that the reduction maps onto when `U_b = i J^2 / beta`:
/// `phi = 2 theta`, `gamma = Gamma - 2 beta`, and the A-site potentials as
/// real defects. `None` when `U_b` is not purely imaginary with positive part.
pub fn reduced_chain_spec(spec: &SawtoothSpec, beta: f64) -> Option<ChainSpec> {
    if spec.u_b.re != 0.0 || spec.u_b.im <= 0.0 || beta <= 0.0 {
        return None;
    }
    let defects = spec
        .cell_labels()
        .into_iter()
        .zip(&spec.v_a)
        .filter(|(_, &v)| v != 0.0)
        .map(|(site, &v)| DefectSpec::real(site, v));
    Some(
        ChainSpec::new(
            spec.kappa,
            beta,
            spec.gamma_loss - 2.0 * beta,
            2.0 * spec.theta,
            spec.n_cells,
            spec.index_origin,
        )
        .with_defects(defects),
    )
}

/// Three-region capture structure: two non-Hermitian outer regions with
/// opposite phases around a Hermitian window `-N < n < N`, bounded by
/// defect sites at `n = +-N` carrying `V_c + i xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichSpec {
    /// Supplies `kappa`, `beta`, `gamma` and the site range; its `phi` is unused.
    pub chain: ChainSpec,
    pub half_width: i64,
    pub q0: f64,
    pub v_c: f64,
    pub xi: f64,
}

impl SandwichSpec {
    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.chain.boundary != Boundary::Open {
            return Err(Error::param("boundary", "sandwich structure requires an open chain"));
        }
        for (name, x) in [("q0", self.q0), ("V_c", self.v_c), ("xi", self.xi)] {
            check_finite(name, x)?;
        }
        if self.half_width < 1 {
            return Err(Error::param("N", "must be >= 1"));
        }
        // Strict containment: at least one outer site on each side.
        let lo = self.chain.first_site();
        let hi = self.chain.last_site();
        if !(lo < -self.half_width && hi > self.half_width) {
            return Err(Error::param(
                "N",
                format!("[-{0}, {0}] must lie strictly inside [{lo}, {hi}]", self.half_width),
            ));
        }
        Ok(())
    }

    /// Homogeneous defective chain used after the switch: phase `phi`
    /// everywhere and real defects `V_c` at `+-N`.
    pub fn release_chain(&self, phi: f64) -> ChainSpec {
        let mut chain = self.chain.clone();
        chain.set_phi(phi);
        chain.defects = vec![
            DefectSpec::real(-self.half_width, self.v_c),
            DefectSpec::real(self.half_width, self.v_c),
        ];
        chain
    }
}

/// Capture-stage operator. Defects already present on `spec.chain` are added
/// on top of the region potentials.
pub fn build_sandwich_hamiltonian(spec: &SandwichSpec) -> Result<Hamiltonian> {
    spec.validate()?;
    let c = &spec.chain;
    let big_n = spec.half_width;
    let kappa = C64::new(c.kappa, 0.0);
    let plus = c.kappa + I * c.beta * C64::from_polar(1.0, spec.q0);
    let minus = c.kappa + I * c.beta * C64::from_polar(1.0, -spec.q0);
    let loss = C64::new(0.0, -c.gamma);
    let edge = C64::new(spec.v_c, spec.xi);

    // (diagonal, hopping to n+1, hopping to n-1) for each row.
    let row = |n: i64| -> (C64, C64, C64) {
        if n < -big_n {
            (loss, minus, plus)
        } else if n == -big_n {
            (edge, kappa, plus)
        } else if n < big_n {
            (C64::new(0.0, 0.0), kappa, kappa)
        } else if n == big_n {
            (edge, plus, kappa)
        } else {
            (loss, plus, minus)
        }
    };

    let labels = c.site_labels();
    let dim = labels.len();
    let mut diag = Vec::with_capacity(dim);
    let mut upper = Vec::with_capacity(dim - 1);
    let mut lower = Vec::with_capacity(dim - 1);
    for (k, &n) in labels.iter().enumerate() {
        let (d, fwd, bwd) = row(n);
        diag.push(d);
        if k + 1 < dim {
            upper.push(fwd);
        }
        if k > 0 {
            lower.push(bwd);
        }
    }
    for d in &c.defects {
        diag[(d.site - c.first_site()) as usize] += d.potential();
    }
    Hamiltonian::new(diag, upper, lower, None, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn chain_example_quarter_turn() {
        let spec = ChainSpec::new(1.0, 0.4, 0.8, FRAC_PI_2, 3, 0);
        let h = build_chain_hamiltonian(&spec).unwrap();
        assert!(h.diag().iter().all(|&d| d == c(0.0, -0.8)));
        for (&u, &l) in h.upper().iter().zip(h.lower()) {
            assert!(close(u, c(0.6, 0.0), 1e-15), "{u}");
            assert!(close(l, c(1.4, 0.0), 1e-15), "{l}");
        }
        assert!(!h.is_hermitian());
    }

    #[test]
    fn chain_hermitian_limit() {
        let spec = ChainSpec::new(1.0, 0.0, 0.0, 1.234, 4, 0);
        let h = build_chain_hamiltonian(&spec).unwrap();
        let m = h.to_dense();
        for r in 0..4usize {
            for col in 0..4 {
                let want = if r.abs_diff(col) == 1 { 1.0 } else { 0.0 };
                assert_eq!(m[(r, col)], c(want, 0.0));
            }
        }
        assert!(h.is_hermitian());
    }

    #[test]
    fn chain_with_defect() {
        let spec = ChainSpec::new(1.0, 0.4, 0.8, FRAC_PI_2, 31, 0).with_defects([DefectSpec::real(10, 2.0)]);
        let h = build_chain_hamiltonian(&spec).unwrap();
        for (k, &d) in h.diag().iter().enumerate() {
            let want = if k == 10 { c(2.0, -0.8) } else { c(0.0, -0.8) };
            assert_eq!(d, want);
        }
    }

    #[test]
    fn chain_rejects_bad_specs() {
        let base = ChainSpec::new(1.0, 0.4, 0.8, 0.0, 5, -2);
        assert!(matches!(
            build_chain_hamiltonian(&base.clone().with_defects([DefectSpec::real(3, 1.0)])),
            Err(Error::DefectOutOfRange { site: 3, lo: -2, hi: 2 })
        ));
        assert!(matches!(
            build_chain_hamiltonian(&base.clone().with_defects([DefectSpec::real(0, 1.0), DefectSpec::real(0, 2.0)])),
            Err(Error::DuplicateDefect(0))
        ));
        let mut nan = base.clone();
        nan.gamma = f64::NAN;
        assert!(build_chain_hamiltonian(&nan).is_err());
        let mut short = base.clone();
        short.n_sites = 1;
        assert!(build_chain_hamiltonian(&short).is_err());
        let mut zero_k = base;
        zero_k.kappa = 0.0;
        assert!(build_chain_hamiltonian(&zero_k).is_err());
    }

    #[test]
    fn periodic_corners_follow_hopping_convention() {
        let spec = ChainSpec::new(1.0, 0.4, 0.8, FRAC_PI_2, 5, 0).with_boundary(Boundary::Periodic);
        let h = build_chain_hamiltonian(&spec).unwrap();
        let m = h.to_dense();
        assert_eq!(m[(4, 0)], spec.forward_hopping());
        assert_eq!(m[(0, 4)], spec.backward_hopping());
    }

    #[test]
    fn phase_reduction() {
        assert_eq!(reduce_phase(FRAC_PI_2), FRAC_PI_2);
        assert_eq!(reduce_phase(-FRAC_PI_2), -FRAC_PI_2);
        assert_eq!(reduce_phase(PI), PI);
        assert!((reduce_phase(-PI) - PI).abs() < 1e-15);
        assert!((reduce_phase(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
        assert!((reduce_phase(-5.0 * PI) - PI).abs() < 1e-14);
        let spec = ChainSpec::new(1.0, 0.4, 0.8, 2.0 * PI + 0.5, 3, 0);
        assert!((spec.phi() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dispersion_examples() {
        assert!(close(dispersion(1.0, 0.4, 0.8, FRAC_PI_2, -FRAC_PI_2), c(0.0, 0.0), 1e-15));
        assert!(close(dispersion(1.0, 0.4, 0.8, 0.0, 0.0), c(2.0, 0.0), 1e-15));
        assert!(close(dispersion(1.0, 0.4, 0.8, FRAC_PI_4, -FRAC_PI_4), c(SQRT_2, 0.0), 1e-15));
        for k in 1..200 {
            let q = -PI + 2.0 * PI * k as f64 / 200.0;
            if q.abs() > 1e-12 {
                assert!(dispersion(1.0, 0.4, 0.8, 0.0, q).im < 0.0);
            }
        }
    }

    #[test]
    fn group_velocity_examples() {
        assert_eq!(group_velocity(1.0, 0.0), 0.0);
        assert!((group_velocity(1.0, -FRAC_PI_2) - 2.0).abs() < 1e-15);
        assert!((group_velocity(1.0, FRAC_PI_2) + 2.0).abs() < 1e-15);
    }

    /// Eq. (1) written out directly on the interleaved basis, one term per
    /// coupling, without the banded storage.
    fn sawtooth_dense_reference(spec: &SawtoothSpec) -> DMatrix<C64> {
        let n = spec.n_cells;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        let e = |t: f64| C64::from_polar(1.0, t);
        for cell in 0..n {
            let (a, b) = (2 * cell, 2 * cell + 1);
            m[(a, a)] = c(spec.v_a[cell], -spec.gamma_loss);
            if cell + 1 < n {
                m[(a, 2 * (cell + 1))] = c(spec.kappa, 0.0);
            }
            if cell >= 1 {
                m[(a, 2 * (cell - 1))] = c(spec.kappa, 0.0);
            }
            m[(a, b)] = spec.j * e(spec.theta);
            if cell >= 1 {
                m[(a, 2 * (cell - 1) + 1)] = spec.j * e(-spec.theta);
            }
            m[(b, b)] = spec.u_b;
            if cell + 1 < n {
                m[(b, 2 * (cell + 1))] = spec.j * e(spec.theta);
            }
            m[(b, a)] = spec.j * e(-spec.theta);
        }
        m
    }

    #[test]
    fn sawtooth_theta_zero_two_cells() {
        let spec = SawtoothSpec::new(1.0, 1.0, 0.0, 0.0, c(5.0, 0.0), 2);
        let op = build_sawtooth_hamiltonian(&spec).unwrap();
        let m = op.band.to_dense();
        let (a1, b1, a2, b2) = (0, 1, 2, 3);
        assert_eq!(m[(a1, b1)], c(1.0, 0.0));
        assert_eq!(m[(b1, a2)], c(1.0, 0.0));
        assert_eq!(m[(b1, a1)], c(1.0, 0.0));
        assert_eq!(m[(a2, b1)], c(1.0, 0.0));
        assert_eq!(m[(a1, a2)], c(1.0, 0.0));
        assert_eq!(m[(b1, b1)], c(5.0, 0.0));
        // Last B site: coupling to the missing a_3 dropped.
        assert_eq!(m[(b2, a2)], c(1.0, 0.0));
        assert_eq!(m.row(b2).iter().filter(|z| z.norm() > 0.0).count(), 2);
        assert_eq!(m, sawtooth_dense_reference(&spec));
    }

    #[test]
    fn sawtooth_quarter_flux_phases() {
        let spec = SawtoothSpec::new(1.0, 1.0, FRAC_PI_4, 0.0, c(0.0, 2.5), 3);
        let m = build_sawtooth_hamiltonian(&spec).unwrap().band.to_dense();
        assert!(close(m[(1, 2)], C64::from_polar(1.0, FRAC_PI_4), 1e-15));
        assert!(close(m[(1, 0)], C64::from_polar(1.0, -FRAC_PI_4), 1e-15));
    }

    #[test]
    fn sawtooth_rejects_single_cell() {
        let spec = SawtoothSpec::new(1.0, 1.0, 0.0, 0.0, c(5.0, 0.0), 1);
        assert!(build_sawtooth_hamiltonian(&spec).is_err());
        let zero = SawtoothSpec::new(1.0, 1.0, 0.0, 0.0, c(0.0, 0.0), 4);
        assert!(build_sawtooth_hamiltonian(&zero).is_err());
        assert!(adiabatic_reduce(&zero).is_err());
    }

    #[test]
    fn reduce_quarter_flux_gives_real_asymmetric_hoppings() {
        let spec = SawtoothSpec::new(1.0, 1.0, FRAC_PI_4, 0.0, SawtoothSpec::matched_u_b(1.0, 0.4), 8);
        let r = adiabatic_reduce(&spec).unwrap();
        assert!(close(r.j1, c(0.6, 0.0), 1e-15), "{}", r.j1);
        assert!(close(r.j2, c(1.4, 0.0), 1e-15), "{}", r.j2);
        let chain = build_chain_hamiltonian(&ChainSpec::new(1.0, 0.4, 0.0, FRAC_PI_2, 8, 0)).unwrap();
        assert!(close(r.j1, chain.upper()[0], 1e-15));
        assert!(close(r.j2, chain.lower()[0], 1e-15));
        // Adiabaticity ratio is 2 / 2.5 here, far outside the valid regime.
        assert!(r.adiabaticity_warning);
    }

    #[test]
    fn reduce_effective_loss() {
        let spec = SawtoothSpec::new(1.0, 1.0, 0.0, 1.6, c(0.0, 2.5), 4);
        let r = adiabatic_reduce(&spec).unwrap();
        for u in &r.u_eff {
            assert!(close(*u, c(0.0, -0.8), 1e-15), "{u}");
        }
    }

    #[test]
    fn reduce_real_u_b_is_reciprocal() {
        let spec = SawtoothSpec::new(1.0, 2.0, 0.0, 0.0, c(30.0, 0.0), 4);
        let r = adiabatic_reduce(&spec).unwrap();
        assert_eq!(r.j1, r.j2);
        assert!(!r.adiabaticity_warning);
    }

    #[test]
    fn reduced_chain_spec_matches_direct_construction() {
        // beta = 0.5, J = 1 gives U_b = 2i exactly.
        let mut spec = SawtoothSpec::new(1.0, 1.0, 0.3, 1.6, SawtoothSpec::matched_u_b(1.0, 0.5), 6);
        spec.index_origin = -2;
        let chain = reduced_chain_spec(&spec, 0.5).unwrap();
        let direct = ChainSpec::new(1.0, 0.5, 1.6 - 2.0 * 0.5, 2.0 * 0.3, 6, -2);
        assert_eq!(chain, direct);
        assert_eq!(build_chain_hamiltonian(&chain).unwrap(), build_chain_hamiltonian(&direct).unwrap());
        assert!(reduced_chain_spec(&SawtoothSpec::new(1.0, 1.0, 0.3, 1.6, c(2.0, 0.0), 6), 0.5).is_none());
    }

    fn sandwich(q0: f64) -> SandwichSpec {
        SandwichSpec {
            chain: ChainSpec::new(1.0, 0.4, 0.8, 0.0, 21, -10),
            half_width: 3,
            q0,
            v_c: 1.0,
            xi: 0.4,
        }
    }

    #[test]
    fn sandwich_rows() {
        let spec = sandwich(-FRAC_PI_2);
        let h = build_sandwich_hamiltonian(&spec).unwrap();
        let m = h.to_dense();
        let idx = |n: i64| h.index_of(n).unwrap();
        // Interior row.
        assert_eq!(m[(idx(0), idx(0))], c(0.0, 0.0));
        assert_eq!(m[(idx(0), idx(1))], c(1.0, 0.0));
        assert_eq!(m[(idx(0), idx(-1))], c(1.0, 0.0));
        // Right boundary row.
        assert_eq!(m[(idx(3), idx(3))], c(1.0, 0.4));
        assert!(close(m[(idx(3), idx(4))], c(1.4, 0.0), 1e-15));
        assert_eq!(m[(idx(3), idx(2))], c(1.0, 0.0));
        // Right outer row.
        assert_eq!(m[(idx(5), idx(5))], c(0.0, -0.8));
        assert!(close(m[(idx(5), idx(6))], c(1.4, 0.0), 1e-15));
        assert!(close(m[(idx(5), idx(4))], c(0.6, 0.0), 1e-15));
        // Left boundary and outer rows mirror the right ones.
        assert_eq!(m[(idx(-3), idx(-3))], c(1.0, 0.4));
        assert_eq!(m[(idx(-3), idx(-2))], c(1.0, 0.0));
        assert!(close(m[(idx(-3), idx(-4))], c(1.4, 0.0), 1e-15));
        assert!(close(m[(idx(-5), idx(-4))], c(0.6, 0.0), 1e-15));
        assert!(close(m[(idx(-5), idx(-6))], c(1.4, 0.0), 1e-15));
        assert_eq!(m[(idx(-5), idx(-5))], c(0.0, -0.8));
    }

    #[test]
    fn sandwich_zero_carrier_is_symmetric() {
        let h = build_sandwich_hamiltonian(&sandwich(0.0)).unwrap();
        let m = h.to_dense();
        let idx = |n: i64| h.index_of(n).unwrap();
        for n in [-9, -6, 5, 8] {
            assert_eq!(m[(idx(n), idx(n + 1))], c(1.0, 0.4));
            assert_eq!(m[(idx(n), idx(n - 1))], c(1.0, 0.4));
        }
        assert!(!h.is_hermitian());
    }

    #[test]
    fn sandwich_interior_rows_hermitian() {
        for q0 in [-FRAC_PI_2, -0.3, 0.0, 1.1] {
            let h = build_sandwich_hamiltonian(&sandwich(q0)).unwrap();
            let lo = h.index_of(-2).unwrap();
            let hi = h.index_of(2).unwrap();
            assert!(h.rows_hermitian(lo..hi + 1));
            assert!(!h.rows_hermitian(lo - 1..hi + 1));
        }
    }

    #[test]
    fn sandwich_rejects_uncontained_window() {
        let mut spec = sandwich(-FRAC_PI_2);
        spec.half_width = 10;
        assert!(build_sandwich_hamiltonian(&spec).is_err());
    }

    #[test]
    fn release_chain_has_boundary_defects_only() {
        let spec = sandwich(-FRAC_PI_2);
        let chain = spec.release_chain(FRAC_PI_2);
        let h = build_chain_hamiltonian(&chain).unwrap();
        assert_eq!(h.diag()[h.index_of(3).unwrap()], c(1.0, -0.8));
        assert_eq!(h.diag()[h.index_of(-3).unwrap()], c(1.0, -0.8));
        assert_eq!(h.diag()[h.index_of(0).unwrap()], c(0.0, -0.8));
    }

    #[test]
    fn band_operator_apply_matches_dense() {
        let spec = SawtoothSpec::new(1.0, 2.0, 0.7, 0.3, c(1.0, 9.0), 5);
        let op = build_sawtooth_hamiltonian(&spec).unwrap();
        let x: Vec<C64> = (0..10).map(|k| c(k as f64 * 0.3 - 1.0, (k * k) as f64 * 0.1)).collect();
        let mut y = vec![C64::default(); 10];
        op.band.apply(&x, &mut y);
        let dense = op.band.to_dense() * nalgebra::DVector::from_vec(x);
        for (a, b) in y.iter().zip(dense.iter()) {
            assert!(close(*a, *b, 1e-13));
        }
    }
}
