//! Hilbert-space plumbing for registers of up to eight qubits.
//!
//! Conventions used across the crate:
//! - qubit 0 is the *most significant* tensor factor, so a basis index
//!   `a` carries the bit of qubit `i` at position `n - 1 - i`;
//! - density matrices and operators are dense row-major `Array2<C64>`;
//! - the duplicate space H⊗H orders the first copy before the second,
//!   i.e. composite index `(a, b) = a·d + b`.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;
/// Single-qubit operator in plain-array form (cheap in inner loops).
pub type Mat2 = [[C64; 2]; 2];

pub const MAX_QUBITS: usize = 8;

/// Register of `n` qubits with dimension `2^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QubitSystem {
    n_qubits: usize,
    dim: usize,
}

impl QubitSystem {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::SystemSize(n_qubits));
        }
        Ok(Self { n_qubits, dim: 1 << n_qubits })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Bit mask selecting `site`'s bit inside a basis index.
    pub fn mask(&self, site: usize) -> usize {
        1 << (self.n_qubits - 1 - site)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_qubits {
            return Err(Error::SiteOutOfRange { site, n_qubits: self.n_qubits });
        }
        Ok(())
    }
}

/// Pauli axis label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn label(&self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// 2×2 Pauli matrix for the given axis.
pub fn pauli(axis: Axis) -> CMat {
    let m: Mat2 = pauli2(axis);
    ndarray::arr2(&m)
}

/// Pauli matrix in plain-array form.
pub fn pauli2(axis: Axis) -> Mat2 {
    match axis {
        Axis::X => [[ZERO, ONE], [ONE, ZERO]],
        Axis::Y => [[ZERO, -I], [I, ZERO]],
        Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
    }
}

pub fn identity(dim: usize) -> CMat {
    Array2::eye(dim)
}

/// Kronecker product, first factor slowest.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    ndarray::linalg::kron(&a.view(), &b.view())
}

/// Embed a single-qubit operator at `site` (0-based) into the register.
pub fn embed_local(op: &CMat, site: usize, sys: QubitSystem) -> Result<CMat> {
    if op.nrows() != 2 || op.ncols() != 2 {
        return Err(Error::DimensionMismatch {
            context: "embed_local operator",
            expected: 2,
            got: op.nrows(),
        });
    }
    sys.check_site(site)?;
    let mut out = identity(1);
    for i in 0..sys.n_qubits() {
        let factor = if i == site { op.clone() } else { identity(2) };
        out = kron(&out, &factor);
    }
    Ok(out)
}

pub fn dagger(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) + b.dot(a)
}

pub fn trace(m: &CMat) -> C64 {
    m.diag().sum()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    let n = m.nrows();
    if n != m.ncols() {
        return false;
    }
    for r in 0..n {
        for c in r..n {
            if (m[[r, c]] - m[[c, r]].conj()).norm() > tol {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Structural single-qubit operations: O(d²) instead of dense d×d products.
// ---------------------------------------------------------------------------

fn y_left_phase(bit_set: bool) -> C64 {
    // σ_y row phase: ⟨a|σ_y|a⊕1⟩ = -i for a=0, +i for a=1.
    if bit_set {
        I
    } else {
        -I
    }
}

fn y_right_phase(bit_set: bool) -> C64 {
    // σ_y column phase: ⟨b⊕1|σ_y... entering M·σ_y at column b = +i for b=0, -i for b=1.
    if bit_set {
        -I
    } else {
        I
    }
}

/// Commutator `[σ_axis^(site), m]` without forming the embedded Pauli.
pub fn pauli_comm_local(axis: Axis, site: usize, m: &CMat, sys: QubitSystem) -> CMat {
    let d = sys.dim();
    let mask = sys.mask(site);
    let mut out = Array2::from_elem((d, d), ZERO);
    match axis {
        Axis::X => {
            for a in 0..d {
                for b in 0..d {
                    out[[a, b]] = m[[a ^ mask, b]] - m[[a, b ^ mask]];
                }
            }
        }
        Axis::Y => {
            for a in 0..d {
                let pl = y_left_phase(a & mask != 0);
                for b in 0..d {
                    let pr = y_right_phase(b & mask != 0);
                    out[[a, b]] = pl * m[[a ^ mask, b]] - pr * m[[a, b ^ mask]];
                }
            }
        }
        Axis::Z => {
            for a in 0..d {
                let sa = if a & mask == 0 { 1.0 } else { -1.0 };
                for b in 0..d {
                    let sb = if b & mask == 0 { 1.0 } else { -1.0 };
                    out[[a, b]] = m[[a, b]] * (sa - sb);
                }
            }
        }
    }
    out
}

/// Trace `Tr(σ_axis^(site) · m)` without forming the embedded Pauli.
pub fn pauli_trace_local(axis: Axis, site: usize, m: &CMat, sys: QubitSystem) -> C64 {
    let d = sys.dim();
    let mask = sys.mask(site);
    let mut acc = ZERO;
    match axis {
        Axis::X => {
            for a in 0..d {
                acc += m[[a ^ mask, a]];
            }
        }
        Axis::Y => {
            for a in 0..d {
                acc += y_left_phase(a & mask != 0) * m[[a ^ mask, a]];
            }
        }
        Axis::Z => {
            for a in 0..d {
                let s = if a & mask == 0 { 1.0 } else { -1.0 };
                acc += m[[a, a]] * s;
            }
        }
    }
    acc
}

/// Conjugate `m ← u m u†` by a single-qubit unitary acting on `site`.
pub fn conjugate_local(u: &Mat2, site: usize, m: &CMat, sys: QubitSystem) -> CMat {
    let left = apply_local_left(u, site, m, sys);
    apply_local_right_dagger(u, site, &left, sys)
}

fn apply_local_left(u: &Mat2, site: usize, m: &CMat, sys: QubitSystem) -> CMat {
    let d = sys.dim();
    let mask = sys.mask(site);
    let mut out = Array2::from_elem((d, d), ZERO);
    for a in 0..d {
        let bit = usize::from(a & mask != 0);
        let a0 = a & !mask;
        let a1 = a | mask;
        for b in 0..d {
            out[[a, b]] = u[bit][0] * m[[a0, b]] + u[bit][1] * m[[a1, b]];
        }
    }
    out
}

fn apply_local_right_dagger(u: &Mat2, site: usize, m: &CMat, sys: QubitSystem) -> CMat {
    // (m u†)[a,b] = Σ_c m[a,c]·conj(u[b_c... = Σ_c m[a,c] conj(u[b][c]) over site bit.
    let d = sys.dim();
    let mask = sys.mask(site);
    let mut out = Array2::from_elem((d, d), ZERO);
    for a in 0..d {
        for b in 0..d {
            let bit = usize::from(b & mask != 0);
            let b0 = b & !mask;
            let b1 = b | mask;
            out[[a, b]] = m[[a, b0]] * u[bit][0].conj() + m[[a, b1]] * u[bit][1].conj();
        }
    }
    out
}

/// Apply one single-qubit unitary to a state vector.
pub fn apply_local_to_state(u: &Mat2, site: usize, psi: &CVec, sys: QubitSystem) -> CVec {
    let d = sys.dim();
    let mask = sys.mask(site);
    let mut out = Array1::from_elem(d, ZERO);
    for a in 0..d {
        let bit = usize::from(a & mask != 0);
        out[a] = u[bit][0] * psi[a & !mask] + u[bit][1] * psi[a | mask];
    }
    out
}

/// Apply one unitary per qubit (tensor product of locals) to a state vector.
pub fn apply_locals_to_state(us: &[Mat2], psi: &CVec, sys: QubitSystem) -> CVec {
    let mut out = psi.clone();
    for (site, u) in us.iter().enumerate() {
        out = apply_local_to_state(u, site, &out, sys);
    }
    out
}

/// Conjugate a density matrix by a tensor product of single-qubit unitaries.
pub fn conjugate_locals(us: &[Mat2], rho: &CMat, sys: QubitSystem) -> CMat {
    let mut out = rho.clone();
    for (site, u) in us.iter().enumerate() {
        out = conjugate_local(u, site, &out, sys);
    }
    out
}

// ---------------------------------------------------------------------------
// SU(2) sampling and rotations.
// ---------------------------------------------------------------------------

/// SU(2) element from a unit quaternion (w, x, y, z):
/// `U = w·1 + i(x σ_x + y σ_y + z σ_z)`.
pub fn su2_from_quaternion(q: [f64; 4]) -> Mat2 {
    let [w, x, y, z] = q;
    [
        [C64::new(w, z), C64::new(y, x)],
        [C64::new(-y, x), C64::new(w, -z)],
    ]
}

/// Bloch rotation `exp(-i(angle/2) n̂·σ)` about unit axis `n`.
pub fn su2_rotation(n: [f64; 3], angle: f64) -> Mat2 {
    let half = 0.5 * angle;
    let s = -half.sin();
    su2_from_quaternion([half.cos(), s * n[0], s * n[1], s * n[2]])
}

/// One Haar-distributed SU(2) element per qubit, from uniform unit quaternions.
pub fn haar_local_unitaries(sys: QubitSystem, rng: &mut ChaCha8Rng) -> Vec<Mat2> {
    (0..sys.n_qubits()).map(|_| haar_su2(rng)).collect()
}

pub fn haar_su2(rng: &mut ChaCha8Rng) -> Mat2 {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let norm2: f64 = q.iter().map(|v| v * v).sum();
        if norm2 > 1e-12 {
            let norm = norm2.sqrt();
            return su2_from_quaternion([q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm]);
        }
    }
}

/// Uniform random unit vector in R³.
pub fn random_axis(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        if norm2 > 1e-12 {
            let norm = norm2.sqrt();
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

// ---------------------------------------------------------------------------
// Duplicate-space pairing permutation.
// ---------------------------------------------------------------------------

/// Permutation taking the duplicate-space label `(a₁…a_N | b₁…b_N)` to the
/// pairwise-interleaved label `(a₁b₁ | a₂b₂ | … | a_Nb_N)`.
///
/// Entry `k` of the returned vector is the pairwise index of global index `k`.
/// For N = 1 this is the identity.
pub fn duplicate_pairing_permutation(sys: QubitSystem) -> Vec<usize> {
    let n = sys.n_qubits();
    let d2 = sys.dim() * sys.dim();
    (0..d2)
        .map(|g| {
            let mut p = 0usize;
            for i in 0..n {
                let a = (g >> (2 * n - 1 - i)) & 1;
                let b = (g >> (n - 1 - i)) & 1;
                p |= a << (2 * n - 1 - 2 * i);
                p |= b << (2 * n - 2 - 2 * i);
            }
            p
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reproducible RNG streams.
// ---------------------------------------------------------------------------

/// Seeded, stream-addressable randomness source. Two `RngStream`s with the
/// same `(seed, stream)` yield bit-identical draws on any platform; distinct
/// streams are statistically independent, so parallel ensemble members can
/// draw without coordination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        Self { seed: self.seed, stream }
    }

    /// Stream id composed from a purpose tag and an ensemble index.
    pub fn substream(&self, purpose: u64, index: u64) -> Self {
        self.with_stream((purpose << 32) | index)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

// ---------------------------------------------------------------------------
// Hermitian eigenvalues (cyclic Jacobi) and dominant eigenvector.
// ---------------------------------------------------------------------------

/// Eigenvalues of a Hermitian matrix, ascending. Cyclic Jacobi with complex
/// rotations; intended for the small dense matrices this crate works with.
pub fn hermitian_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "hermitian_eigenvalues",
            expected: n,
            got: m.ncols(),
        });
    }
    if !is_hermitian(m, 1e-9) {
        return Err(Error::NonHermitian("eigenvalue input"));
    }
    let mut a = m.clone();
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-15 * scale;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[[p, q]].norm());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let abs = apq.norm();
                if abs <= tol {
                    continue;
                }
                let phase = apq / abs;
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let tau = (app - aqq) / (2.0 * abs);
                let t = if tau == 0.0 {
                    1.0
                } else {
                    tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U on the (p,q) plane: col p ← c·p + s e^{-iφ}·q, col q ← -s e^{iφ}·p + c·q.
                let se_m = phase.conj() * s;
                let se_p = phase * s;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = akp * c + akq * se_m;
                    a[[k, q]] = -akp * se_p + akq * c;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = apk * c + aqk * se_p;
                    a[[q, k]] = -apk * se_m + aqk * c;
                }
            }
        }
    }
    let mut evs: Vec<f64> = a.diag().iter().map(|z| z.re).collect();
    evs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(evs)
}

pub fn min_eigenvalue(m: &CMat) -> Result<f64> {
    Ok(hermitian_eigenvalues(m)?[0])
}

/// Dominant eigenvector of a positive-semidefinite Hermitian matrix by power
/// iteration; adequate for near-pure density matrices.
pub fn dominant_eigenvector(m: &CMat) -> CVec {
    let n = m.nrows();
    let start = (0..n)
        .max_by(|&i, &j| m[[i, i]].re.partial_cmp(&m[[j, j]].re).unwrap())
        .unwrap_or(0);
    let mut v: CVec = Array1::from_elem(n, ZERO);
    v[start] = ONE;
    for _ in 0..100 {
        let w = m.dot(&v);
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return v;
        }
        let w = w.mapv(|z| z / norm);
        let delta: f64 = w.iter().zip(v.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        v = w;
        if delta < 1e-30 {
            break;
        }
    }
    // Fix global phase: largest component real positive.
    let k = (0..n)
        .max_by(|&i, &j| v[i].norm_sqr().partial_cmp(&v[j].norm_sqr()).unwrap())
        .unwrap_or(0);
    let ph = v[k] / v[k].norm();
    v.mapv(|z| z * ph.conj())
}

// ---------------------------------------------------------------------------
// States.
// ---------------------------------------------------------------------------

/// Normalized pure state of an n-qubit register.
#[derive(Clone, Debug)]
pub struct PureState {
    amps: CVec,
}

impl PureState {
    pub fn new(amps: CVec) -> Result<Self> {
        let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(norm2));
        }
        if !amps.len().is_power_of_two() {
            return Err(Error::DimensionMismatch {
                context: "pure state length",
                expected: amps.len().next_power_of_two(),
                got: amps.len(),
            });
        }
        Ok(Self { amps })
    }

    pub fn renormalized(mut amps: CVec) -> Result<Self> {
        let norm2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if norm2 < 1e-300 {
            return Err(Error::NotNormalized(norm2));
        }
        let norm = norm2.sqrt();
        amps.mapv_inplace(|z| z / norm);
        Self::new(amps)
    }

    pub fn basis_state(sys: QubitSystem, index: usize) -> Self {
        let mut amps = Array1::from_elem(sys.dim(), ZERO);
        amps[index] = ONE;
        Self { amps }
    }

    /// `(√α·|0⟩ + √(1-α)·e^{iθ}|1⟩)^{⊗n}`.
    pub fn product_state(sys: QubitSystem, alpha: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha = {alpha} outside [0, 1]")));
        }
        let c0 = C64::new(alpha.sqrt(), 0.0);
        let c1 = C64::from_polar((1.0 - alpha).sqrt(), theta);
        let d = sys.dim();
        let n = sys.n_qubits();
        let amps = Array1::from_shape_fn(d, |a| {
            let mut v = ONE;
            for i in 0..n {
                v *= if a & sys.mask(i) == 0 { c0 } else { c1 };
            }
            v
        });
        let _ = n;
        Self::new(amps)
    }

    /// `√p·|0…0⟩ + √(1-p)·|1…1⟩`.
    pub fn ghz_family(sys: QubitSystem, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("p = {p} outside [0, 1]")));
        }
        let d = sys.dim();
        let mut amps = Array1::from_elem(d, ZERO);
        amps[0] = C64::new(p.sqrt(), 0.0);
        amps[d - 1] = C64::new((1.0 - p).sqrt(), 0.0);
        Self::new(amps)
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &CVec {
        &self.amps
    }

    pub fn to_density(&self) -> DensityMatrix {
        let d = self.dim();
        let m = Array2::from_shape_fn((d, d), |(r, c)| self.amps[r] * self.amps[c].conj());
        DensityMatrix { m }
    }

    pub fn overlap(&self, other: &PureState) -> C64 {
        self.amps.iter().zip(other.amps.iter()).map(|(a, b)| a.conj() * b).sum()
    }
}

/// Hermitian, unit-trace density matrix. Positivity is spot-checked where the
/// run recorders sample it rather than on every arithmetic intermediate.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    m: CMat,
}

impl DensityMatrix {
    pub fn from_matrix(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::BadDensityMatrix("not square"));
        }
        if !is_hermitian(&m, 1e-9) {
            return Err(Error::BadDensityMatrix("not Hermitian"));
        }
        let tr = trace(&m);
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::BadDensityMatrix("trace differs from one"));
        }
        Ok(Self { m })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        psi.to_density()
    }

    pub fn maximally_mixed(sys: QubitSystem) -> Self {
        let d = sys.dim();
        let m = identity(d).mapv(|z| z / d as f64);
        Self { m }
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn purity(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Smallest eigenvalue; the recorders assert it stays ≥ -1e-7.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        min_eigenvalue(&self.m)
    }
}
