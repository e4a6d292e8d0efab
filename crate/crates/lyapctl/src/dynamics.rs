//! Open-system dynamics: drift Hamiltonian, dephasing, and the fixed-step
//! integrator with in-loop feedback.
//!
//! The drift is an always-on two-body phase coupling (diagonal in the
//! computational basis), dephasing acts through per-qubit `σ_z` Lindblad
//! channels, and the controller contributes a local field re-evaluated at
//! every integrator stage from the stage state. Units: time in µs, energies
//! and rates in rad/µs (ħ = 1).

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::entanglement::ConcurrenceOperator;
use crate::error::{Error, Result};
use crate::hilbert::{CMat, DensityMatrix, QubitSystem};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Symmetric two-body coupling strengths λ_ij (rad/µs), stored for i < j.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    upper: Vec<f64>, // row-major upper triangle, pair (i, j), i < j
}

impl CouplingMatrix {
    pub fn zero(sys: QubitSystem) -> Self {
        let n = sys.n_qubits();
        Self { n, upper: vec![0.0; n * (n - 1) / 2] }
    }

    /// The four-qubit coupling set used throughout the reference scenarios
    /// (rad/µs): λ₁₂=9.8, λ₁₃=0.1, λ₁₄=0.3, λ₂₃=1.3, λ₂₄=0.5, λ₃₄=2.7.
    pub fn default_four_qubit() -> Self {
        let sys = QubitSystem::new(4).expect("4 qubits");
        let mut m = Self::zero(sys);
        m.set(0, 1, 9.8);
        m.set(0, 2, 0.1);
        m.set(0, 3, 0.3);
        m.set(1, 2, 1.3);
        m.set(1, 3, 0.5);
        m.set(2, 3, 2.7);
        m
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        // Offset of row i in the packed upper triangle.
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.upper[self.idx(a, b)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(i != j, "no self-coupling");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        let k = self.idx(a, b);
        self.upper[k] = value;
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            ((i + 1)..self.n).map(move |j| (i, j, self.upper[self.idx(i, j)]))
        })
    }

    pub fn is_zero(&self) -> bool {
        self.upper.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Multiplicative relative errors: λ'_ij = λ_ij · (1 + rel[k]) with `rel`
    /// in pair order. Symmetry is preserved by construction.
    pub fn with_relative_errors(&self, rel: &[f64]) -> Result<Self> {
        if rel.len() != self.upper.len() {
            return Err(Error::DimensionMismatch {
                context: "coupling error vector",
                expected: self.upper.len(),
                got: rel.len(),
            });
        }
        let upper = self.upper.iter().zip(rel).map(|(l, r)| l * (1.0 + r)).collect();
        Ok(Self { n: self.n, upper })
    }

    pub fn n_pairs(&self) -> usize {
        self.upper.len()
    }
}

/// Per-qubit dephasing rates γ_i ≥ 0 (1/µs); Lindblad operators are `σ_z`.
#[derive(Clone, Debug, PartialEq)]
pub struct DephasingSpec {
    rates: Vec<f64>,
}

impl DephasingSpec {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = rates.iter().find(|&&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::NegativeRate(bad));
        }
        Ok(Self { rates })
    }

    pub fn zero(sys: QubitSystem) -> Self {
        Self { rates: vec![0.0; sys.n_qubits()] }
    }

    pub fn uniform(sys: QubitSystem, gamma: f64) -> Result<Self> {
        Self::new(vec![gamma; sys.n_qubits()])
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn is_zero(&self) -> bool {
        self.rates.iter().all(|&g| g == 0.0)
    }
}

/// Precomputed generator of the dissipative drift dynamics:
/// `ρ̇ = −i[H₀ + H_c(field), ρ] + D(ρ)`.
///
/// The drift Hamiltonian is diagonal and dephasing is an elementwise damping
/// mask, so everything except the control term costs O(d²) per application.
#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    sys: QubitSystem,
    energies: Vec<f64>,
    /// Γ[a,b] = Σ_{i: a,b differ on qubit i} γ_i; D(ρ) = −Γ∘ρ, so a rate
    /// γ_i is the decay rate of a single-site coherence: ρ[a,b] ∝ e^{−γ_i t}
    /// when a and b differ on site i alone.
    gamma_mask: Vec<f64>,
    dissipative: bool,
}

impl LindbladGenerator {
    pub fn new(sys: QubitSystem, lambda: &CouplingMatrix, gamma: &DephasingSpec) -> Result<Self> {
        let n = sys.n_qubits();
        if lambda.n_qubits() != n {
            return Err(Error::DimensionMismatch {
                context: "coupling matrix size",
                expected: n,
                got: lambda.n_qubits(),
            });
        }
        if gamma.rates().len() != n {
            return Err(Error::DimensionMismatch {
                context: "dephasing rate count",
                expected: n,
                got: gamma.rates().len(),
            });
        }
        let d = sys.dim();
        let sign = |a: usize, i: usize| if a & sys.mask(i) == 0 { 1.0 } else { -1.0 };
        let energies = (0..d)
            .map(|a| lambda.pairs().map(|(i, j, l)| l * sign(a, i) * sign(a, j)).sum())
            .collect();
        let mut gamma_mask = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                gamma_mask[a * d + b] = (0..n)
                    .filter(|&i| (a ^ b) & sys.mask(i) != 0)
                    .map(|i| gamma.rates()[i])
                    .sum();
            }
        }
        Ok(Self { sys, energies, gamma_mask, dissipative: !gamma.is_zero() })
    }

    pub fn system(&self) -> QubitSystem {
        self.sys
    }

    pub fn is_dissipative(&self) -> bool {
        self.dissipative
    }

    /// Diagonal of the drift Hamiltonian (rad/µs).
    pub fn drift_energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn drift_hamiltonian(&self) -> CMat {
        let d = self.sys.dim();
        let mut h = Array2::from_elem((d, d), ZERO);
        for a in 0..d {
            h[[a, a]] = C64::new(self.energies[a], 0.0);
        }
        h
    }

    /// `[H₀, m]` using the diagonal structure.
    pub fn h_comm(&self, m: &CMat) -> CMat {
        let d = self.sys.dim();
        let ms = m.as_slice().expect("contiguous matrix");
        let mut out = vec![ZERO; d * d];
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = ms[a * d + b] * (self.energies[a] - self.energies[b]);
            }
        }
        Array2::from_shape_vec((d, d), out).expect("d² buffer")
    }

    /// Dephasing superoperator `D(m) = −Γ∘m` (element-wise coherence decay
    /// at the summed per-site rates).
    pub fn dissipate(&self, m: &CMat) -> CMat {
        let d = self.sys.dim();
        let ms = m.as_slice().expect("contiguous matrix");
        let mut out = vec![ZERO; d * d];
        for (o, (v, g)) in out.iter_mut().zip(ms.iter().zip(self.gamma_mask.iter())) {
            *o = v * (-g);
        }
        Array2::from_shape_vec((d, d), out).expect("d² buffer")
    }

    /// Full right-hand side `−i[H₀ + H_c, m] + D(m)` for an optional local
    /// control field (one `[x, y, z]` amplitude triple per qubit, rad/µs).
    pub fn rhs(&self, m: &CMat, field: Option<&[[f64; 3]]>) -> CMat {
        let d = self.sys.dim();
        let ms = m.as_slice().expect("contiguous matrix");
        let mut out = vec![ZERO; d * d];
        for a in 0..d {
            let ea = self.energies[a];
            for b in 0..d {
                let idx = a * d + b;
                // −i(E_a − E_b)·m − Γ·m in one complex weight.
                let w = C64::new(-self.gamma_mask[idx], -(ea - self.energies[b]));
                out[idx] = ms[idx] * w;
            }
        }
        if let Some(field) = field {
            add_field_commutator_times_minus_i(&mut out, ms, field, self.sys);
        }
        Array2::from_shape_vec((d, d), out).expect("d² buffer")
    }
}

/// Accumulate `−i·[H_c, m]` into `out`, where `H_c = Σ_{iξ} h_ξ⁽ⁱ⁾ σ_ξ⁽ⁱ⁾`.
fn add_field_commutator_times_minus_i(
    out: &mut [C64],
    m: &[C64],
    field: &[[f64; 3]],
    sys: QubitSystem,
) {
    let d = sys.dim();
    const MI: C64 = C64::new(0.0, -1.0); // −i
    for (site, &[hx, hy, hz]) in field.iter().enumerate() {
        if hx == 0.0 && hy == 0.0 && hz == 0.0 {
            continue;
        }
        let mask = sys.mask(site);
        // ⟨a|σ_x + phase·σ_y|a⊕1⟩ coefficients for the two bit values.
        let cm = C64::new(hx, -hy); // bit 0 rows / bit 1 columns
        let cp = C64::new(hx, hy); // bit 1 rows / bit 0 columns
        for a in 0..d {
            let (lc, sa) = if a & mask == 0 { (cm, hz) } else { (cp, -hz) };
            for b in 0..d {
                let (rc, sb) = if b & mask == 0 { (cp, -hz) } else { (cm, hz) };
                let comm = lc * m[(a ^ mask) * d + b] - rc * m[a * d + (b ^ mask)]
                    + m[a * d + b] * (sa + sb);
                out[a * d + b] += MI * comm;
            }
        }
    }
}

/// Dense local-field Hamiltonian (for inspection and cross-checks; the hot
/// path uses [`LindbladGenerator::rhs`] directly).
pub fn local_field_hamiltonian(field: &[[f64; 3]], sys: QubitSystem) -> CMat {
    let d = sys.dim();
    let mut h = Array2::from_elem((d, d), ZERO);
    for (site, &[hx, hy, hz]) in field.iter().enumerate() {
        let mask = sys.mask(site);
        for a in 0..d {
            let bit0 = a & mask == 0;
            h[[a, a]] += C64::new(if bit0 { hz } else { -hz }, 0.0);
            // ⟨a|σ_x|a⊕1⟩ = 1; ⟨a|σ_y|a⊕1⟩ = ∓i.
            h[[a, a ^ mask]] += if bit0 { C64::new(hx, -hy) } else { C64::new(hx, hy) };
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Propagation.
// ---------------------------------------------------------------------------

/// When the feedback field is (re)sampled within an integrator step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeedbackSampling {
    /// Sample the controller once at the step start and hold the field
    /// through all four stages. Each step then integrates a time-independent
    /// generator, which RK4 does to near machine accuracy — so positivity and
    /// purity survive even where the bang-bang law switches or slides. This
    /// is the default: the recorded field is exactly the applied one.
    #[default]
    StepStart,
    /// Re-evaluate the controller at every RK stage from the stage state.
    /// Fourth-order accurate while the closed-loop field is smooth, but
    /// injects non-unitarity wherever the normalized law slews fast, so it is
    /// not used for production scenarios.
    PerStage,
}

/// Fixed-step integration plan; `t_end` is rounded to a whole number of steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepPlan {
    pub dt_us: f64,
    pub n_steps: usize,
    pub sampling: FeedbackSampling,
}

impl StepPlan {
    pub fn new(dt_us: f64, t_end_us: f64) -> Result<Self> {
        if !(dt_us > 0.0) || !(t_end_us > 0.0) {
            return Err(Error::Config(format!(
                "step plan needs dt > 0 and t_end > 0, got dt = {dt_us}, t_end = {t_end_us}"
            )));
        }
        let n_steps = (t_end_us / dt_us).round().max(1.0) as usize;
        Ok(Self { dt_us, n_steps, sampling: FeedbackSampling::StepStart })
    }

    pub fn with_sampling(mut self, sampling: FeedbackSampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn t_end_us(&self) -> f64 {
        self.dt_us * self.n_steps as f64
    }
}

/// What to keep while integrating.
#[derive(Clone, Copy, Debug)]
pub struct RecordPlan {
    /// Keep every `every`-th step (plus the first and last).
    pub every: usize,
    /// Store density-matrix snapshots at record points.
    pub snapshots: bool,
    /// Compute the smallest eigenvalue at every `positivity_every`-th record
    /// point as a positivity witness (0 disables the check).
    pub positivity_every: usize,
}

impl Default for RecordPlan {
    fn default() -> Self {
        Self { every: 10, snapshots: false, positivity_every: 25 }
    }
}

/// Instantaneous field source driving a propagation. Implementations may be
/// stateful (noise caches, kick bookkeeping) but must be deterministic
/// functions of `(t, rho)` given their construction-time randomness stream.
pub trait FieldController {
    /// Called once at the start of each step; may apply a discrete transform
    /// to the state (e.g. a re-orientation kick). Returns true if it did.
    fn pre_step(&mut self, _t_us: f64, _rho: &mut CMat) -> bool {
        false
    }

    /// Applied local field at time `t` for state `rho`.
    fn field(&mut self, t_us: f64, rho: &CMat) -> Vec<[f64; 3]>;
}

/// Recorded time series of one propagation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n_qubits: usize,
    pub dt_us: f64,
    pub times_us: Vec<f64>,
    pub tau: Vec<f64>,
    pub purity: Vec<f64>,
    /// Applied field at each record time (empty triples when uncontrolled).
    pub fields: Vec<Vec<[f64; 3]>>,
    /// Density-matrix snapshots at record times (empty unless requested).
    pub snapshots: Vec<CMat>,
    /// Times at which the controller applied a discrete kick.
    pub kick_times_us: Vec<f64>,
    /// Smallest eigenvalue seen across positivity checks (+∞ if disabled).
    pub min_eigenvalue: f64,
    /// Largest Hermiticity defect ‖ρ − ρ†‖_max observed before re-symmetrization.
    pub hermiticity_drift: f64,
    /// Largest |Tr ρ − 1| observed before renormalization.
    pub trace_drift: f64,
    pub final_state: CMat,
}

impl Trajectory {
    /// Mean of the recorded `tau` samples with `from ≤ t ≤ to`.
    pub fn time_mean_tau(&self, from_us: f64, to_us: f64) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (t, v) in self.times_us.iter().zip(self.tau.iter()) {
            if *t >= from_us - 1e-12 && *t <= to_us + 1e-12 {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    }

    pub fn max_tau(&self) -> (f64, f64) {
        let mut best = (0.0, f64::NEG_INFINITY);
        for (t, v) in self.times_us.iter().zip(self.tau.iter()) {
            if *v > best.1 {
                best = (*t, *v);
            }
        }
        best
    }

    /// First recorded time with `tau ≥ level`.
    pub fn first_time_at_or_above(&self, level: f64) -> Option<f64> {
        self.times_us
            .iter()
            .zip(self.tau.iter())
            .find(|(_, v)| **v >= level)
            .map(|(t, _)| *t)
    }

    /// First recorded time with `tau < threshold` (entanglement lifetime).
    pub fn first_time_below(&self, threshold: f64) -> Option<f64> {
        self.times_us
            .iter()
            .zip(self.tau.iter())
            .find(|(_, v)| **v < threshold)
            .map(|(t, _)| *t)
    }

    /// Σ_i ‖h⁽ⁱ⁾(t)‖² integrated over the record grid (rectangle rule).
    pub fn field_energy(&self, from_us: f64, to_us: f64) -> f64 {
        if self.times_us.len() < 2 {
            return 0.0;
        }
        let dt = self.times_us[1] - self.times_us[0];
        self.times_us
            .iter()
            .zip(self.fields.iter())
            .filter(|(t, _)| **t >= from_us - 1e-12 && **t < to_us - 1e-12)
            .map(|(_, f)| {
                f.iter().map(|[x, y, z]| x * x + y * y + z * z).sum::<f64>() * dt
            })
            .sum()
    }

    pub fn tau_at(&self, t_us: f64) -> Option<f64> {
        self.times_us
            .iter()
            .position(|t| (t - t_us).abs() < 1e-9)
            .map(|i| self.tau[i])
    }
}

/// Integrate `ρ̇ = −i[H₀ + H_c, ρ] + D(ρ)` with the classic fourth-order
/// Runge–Kutta scheme. The feedback field is sampled according to
/// [`StepPlan::sampling`] (held across the step by default). The state is
/// re-symmetrized each step and the trace is renormalized when it drifts
/// beyond 1e−10.
pub fn propagate(
    op: &ConcurrenceOperator,
    plant: &LindbladGenerator,
    rho0: &DensityMatrix,
    plan: StepPlan,
    record: RecordPlan,
    mut controller: Option<&mut dyn FieldController>,
) -> Result<Trajectory> {
    let sys = plant.system();
    let n = sys.n_qubits();
    let d = sys.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "initial state dimension",
            expected: d,
            got: rho0.dim(),
        });
    }
    if record.every == 0 {
        return Err(Error::Config("record_every must be ≥ 1".into()));
    }
    let dt = plan.dt_us;
    let mut rho = rho0.matrix().clone();

    let mut traj = Trajectory {
        n_qubits: n,
        dt_us: dt,
        times_us: Vec::new(),
        tau: Vec::new(),
        purity: Vec::new(),
        fields: Vec::new(),
        snapshots: Vec::new(),
        kick_times_us: Vec::new(),
        min_eigenvalue: f64::INFINITY,
        hermiticity_drift: 0.0,
        trace_drift: 0.0,
        final_state: rho.clone(),
    };
    let mut records_seen = 0usize;

    for step in 0..=plan.n_steps {
        let t = step as f64 * dt;

        if let Some(ctrl) = controller.as_deref_mut() {
            if ctrl.pre_step(t, &mut rho) {
                traj.kick_times_us.push(t);
            }
        }

        // Stage-1 field doubles as the recorded "applied field at t".
        let f1 = controller.as_deref_mut().map(|c| c.field(t, &rho));

        if step % record.every == 0 || step == plan.n_steps {
            let g = op.contract(&rho);
            let tau = op.tau_with(&rho, &g)?;
            traj.times_us.push(t);
            traj.tau.push(tau);
            traj.purity.push(rho.iter().map(|z| z.norm_sqr()).sum());
            traj.fields.push(f1.clone().unwrap_or_else(|| vec![[0.0; 3]; n]));
            if record.snapshots {
                traj.snapshots.push(rho.clone());
            }
            if record.positivity_every > 0 && records_seen % record.positivity_every == 0 {
                let min_ev = crate::hilbert::min_eigenvalue(&rho)?;
                traj.min_eigenvalue = traj.min_eigenvalue.min(min_ev);
            }
            records_seen += 1;
        }

        if step == plan.n_steps {
            break;
        }

        // Classic RK4; the field is either held from the step start or
        // re-sampled per stage, depending on the plan.
        let per_stage = plan.sampling == FeedbackSampling::PerStage;
        let k1 = plant.rhs(&rho, f1.as_deref());
        let s2 = &rho + &k1.mapv(|z| z * (0.5 * dt));
        let f2 = if per_stage {
            controller.as_deref_mut().map(|c| c.field(t + 0.5 * dt, &s2))
        } else {
            f1.clone()
        };
        let k2 = plant.rhs(&s2, f2.as_deref());
        let s3 = &rho + &k2.mapv(|z| z * (0.5 * dt));
        let f3 = if per_stage {
            controller.as_deref_mut().map(|c| c.field(t + 0.5 * dt, &s3))
        } else {
            f1.clone()
        };
        let k3 = plant.rhs(&s3, f3.as_deref());
        let s4 = &rho + &k3.mapv(|z| z * dt);
        let f4 = if per_stage {
            controller.as_deref_mut().map(|c| c.field(t + dt, &s4))
        } else {
            f1.clone()
        };
        let k4 = plant.rhs(&s4, f4.as_deref());

        let sixth = dt / 6.0;
        for (r, (a, (b, (c3, d4)))) in rho
            .iter_mut()
            .zip(k1.iter().zip(k2.iter().zip(k3.iter().zip(k4.iter()))))
        {
            *r += (a + 2.0 * b + 2.0 * c3 + d4) * sixth;
        }

        // Numerical hygiene: re-symmetrize, renormalize, reject non-finite.
        let mut drift: f64 = 0.0;
        for a in 0..d {
            for b in (a + 1)..d {
                let upper = rho[[a, b]];
                let lower = rho[[b, a]];
                drift = drift.max((upper - lower.conj()).norm());
                let sym = 0.5 * (upper + lower.conj());
                rho[[a, b]] = sym;
                rho[[b, a]] = sym.conj();
            }
            let im = rho[[a, a]].im;
            drift = drift.max(im.abs());
            rho[[a, a]] = C64::new(rho[[a, a]].re, 0.0);
        }
        traj.hermiticity_drift = traj.hermiticity_drift.max(drift);
        let tr: f64 = (0..d).map(|a| rho[[a, a]].re).sum();
        traj.trace_drift = traj.trace_drift.max((tr - 1.0).abs());
        if (tr - 1.0).abs() > 1e-10 {
            let inv = 1.0 / tr;
            rho.mapv_inplace(|z| z * inv);
        }
        if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { step, t_us: t + dt });
        }
    }

    traj.final_state = rho;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{
        commutator, dagger, embed_local, max_abs_diff, pauli, Axis, PureState, RngStream,
    };
    use ndarray::Array1;
    use rand_distr::{Distribution, StandardNormal};

    fn sys(n: usize) -> QubitSystem {
        QubitSystem::new(n).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_density(n: usize, seed: u64) -> DensityMatrix {
        let mut rng = RngStream::new(seed).rng();
        let d = 1usize << n;
        let mut m = Array2::from_elem((d, d), ZERO);
        for &w in &[0.6, 0.25, 0.15] {
            let amps = Array1::from_shape_fn(d, |_| {
                c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
            });
            let psi = PureState::renormalized(amps).unwrap();
            m = m + psi.to_density().into_matrix().mapv(|z| z * w);
        }
        DensityMatrix::from_matrix(m).unwrap()
    }

    #[test]
    fn coupling_matrix_indexing_round_trips() {
        let mut m = CouplingMatrix::zero(sys(4));
        let mut v = 1.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                m.set(i, j, v);
                v += 1.0;
            }
        }
        let mut v = 1.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_eq!(m.get(i, j), v);
                assert_eq!(m.get(j, i), v);
                v += 1.0;
            }
        }
        assert_eq!(m.get(2, 2), 0.0);
        let d = CouplingMatrix::default_four_qubit();
        let sum: f64 = d.pairs().map(|(_, _, l)| l).sum();
        assert!((sum - 14.7).abs() < 1e-12);
        assert!(d.with_relative_errors(&[0.0; 5]).is_err());
        let perturbed = d.with_relative_errors(&[0.1, 0.0, 0.0, 0.0, 0.0, -0.1]).unwrap();
        assert!((perturbed.get(0, 1) - 9.8 * 1.1).abs() < 1e-12);
        assert!((perturbed.get(2, 3) - 2.7 * 0.9).abs() < 1e-12);
    }

    #[test]
    fn drift_energies_match_two_body_signs() {
        let s = sys(2);
        let mut lambda = CouplingMatrix::zero(s);
        lambda.set(0, 1, 2.0);
        let g = LindbladGenerator::new(s, &lambda, &DephasingSpec::zero(s)).unwrap();
        assert_eq!(g.drift_energies(), &[2.0, -2.0, -2.0, 2.0]);
    }

    #[test]
    fn fast_commutator_and_dissipator_match_dense_forms() {
        let s = sys(3);
        let lambda = {
            let mut m = CouplingMatrix::zero(s);
            m.set(0, 1, 1.7);
            m.set(1, 2, 0.4);
            m.set(0, 2, 0.9);
            m
        };
        let gamma = DephasingSpec::new(vec![0.12, 0.3, 0.05]).unwrap();
        let g = LindbladGenerator::new(s, &lambda, &gamma).unwrap();
        let rho = random_density(3, 3).into_matrix();

        let h = g.drift_hamiltonian();
        assert!(max_abs_diff(&g.h_comm(&rho), &commutator(&h, &rho)) < 1e-12);

        // Dissipator against the explicit Lindblad sum with L_i = σ_z⁽ⁱ⁾ and
        // coefficients γ_i/2, the normalization under which γ_i is the decay
        // rate of a single-site coherence.
        let mut dense = Array2::from_elem((8, 8), ZERO);
        for (i, &rate) in gamma.rates().iter().enumerate() {
            let z = embed_local(&pauli(Axis::Z), i, s).unwrap();
            let term = z.dot(&rho).dot(&z) - &rho;
            dense = dense + term.mapv(|v| v * (0.5 * rate));
        }
        assert!(max_abs_diff(&g.dissipate(&rho), &dense) < 1e-12);
    }

    #[test]
    fn rhs_field_term_matches_dense_hamiltonian() {
        let s = sys(3);
        let lambda = CouplingMatrix::zero(s);
        let gamma = DephasingSpec::new(vec![0.2, 0.0, 0.4]).unwrap();
        let g = LindbladGenerator::new(s, &lambda, &gamma).unwrap();
        let rho = random_density(3, 11).into_matrix();
        let field = vec![[1.3, -0.7, 2.2], [0.0, 0.0, 0.0], [-0.4, 0.9, -1.8]];

        let got = g.rhs(&rho, Some(&field));
        let hc = local_field_hamiltonian(&field, s);
        let want =
            commutator(&hc, &rho).mapv(|z| z * c(0.0, -1.0)) + g.dissipate(&rho);
        assert!(max_abs_diff(&got, &want) < 1e-12);

        // The dense field Hamiltonian itself must match embedded Paulis.
        let mut dense = Array2::from_elem((8, 8), ZERO);
        for (site, comps) in field.iter().enumerate() {
            for ax in Axis::ALL {
                let v = comps[ax as usize];
                dense = dense + embed_local(&pauli(ax), site, s).unwrap().mapv(|z| z * v);
            }
        }
        assert!(max_abs_diff(&hc, &dense) < 1e-12);
        // Trace preservation: the rhs of a trace-preserving flow is traceless,
        // and it maps Hermitian inputs to Hermitian outputs.
        let tr = got.diag().sum();
        assert!(tr.norm() < 1e-12);
        assert!(max_abs_diff(&got, &dagger(&got)) < 1e-12);
    }

    #[test]
    fn free_dephasing_follows_the_exact_exponential() {
        let s = sys(4);
        let op = ConcurrenceOperator::build(s).unwrap();
        let lambda = CouplingMatrix::default_four_qubit();
        let gamma = DephasingSpec::uniform(s, 0.3).unwrap();
        let g = LindbladGenerator::new(s, &lambda, &gamma).unwrap();
        let rho0 = random_density(4, 8);
        let plan = StepPlan::new(1e-4, 0.1).unwrap();
        let traj = propagate(&op, &g, &rho0, plan, RecordPlan::default(), None).unwrap();

        // Closed form: ρ(t)[a,b] = exp((−i(E_a−E_b) − Γ_ab)t)·ρ0[a,b].
        let d = s.dim();
        let t = plan.t_end_us();
        let mut expected = rho0.matrix().clone();
        for a in 0..d {
            for b in 0..d {
                let de = g.drift_energies()[a] - g.drift_energies()[b];
                let gamma_ab = g.gamma_mask[a * d + b];
                expected[[a, b]] *= C64::from_polar((-gamma_ab * t).exp(), -de * t);
            }
        }
        assert!(max_abs_diff(&traj.final_state, &expected) < 1e-9);
        assert!(traj.hermiticity_drift < 1e-12);
        assert!(traj.trace_drift < 1e-12);
        assert!(traj.min_eigenvalue > -1e-7);
    }

    #[test]
    fn ghz_coherence_decays_at_the_collective_rate() {
        let s = sys(4);
        let op = ConcurrenceOperator::build(s).unwrap();
        let gamma_val = 0.2;
        let g = LindbladGenerator::new(
            s,
            &CouplingMatrix::zero(s),
            &DephasingSpec::uniform(s, gamma_val).unwrap(),
        )
        .unwrap();
        let rho0 = PureState::ghz_family(s, 0.5).unwrap().to_density();
        let plan = StepPlan::new(1e-4, 0.5).unwrap();
        let traj = propagate(&op, &g, &rho0, plan, RecordPlan::default(), None).unwrap();
        // All four bits differ between |0000⟩ and |1111⟩ → rate 4γ.
        let t = plan.t_end_us();
        let expected = 0.5 * (-4.0 * gamma_val * t).exp();
        let got = traj.final_state[[0, 15]].re;
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        // tau decreases monotonically for this uncontrolled decay.
        for w in traj.tau.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn integrator_self_convergence_on_smooth_dynamics() {
        let s = sys(4);
        let op = ConcurrenceOperator::build(s).unwrap();
        let g = LindbladGenerator::new(
            s,
            &CouplingMatrix::default_four_qubit(),
            &DephasingSpec::uniform(s, 0.2).unwrap(),
        )
        .unwrap();
        let rho0 = PureState::product_state(s, 0.73, 0.51 * std::f64::consts::PI)
            .unwrap()
            .to_density();
        let run = |dt: f64| {
            let plan = StepPlan::new(dt, 0.2).unwrap();
            let record = RecordPlan { every: usize::MAX - 1, snapshots: false, positivity_every: 0 };
            propagate(&op, &g, &rho0, plan, record, None).unwrap().tau.last().copied().unwrap()
        };
        let coarse = run(1e-4);
        let fine = run(5e-5);
        assert!((coarse - fine).abs() < 1e-8, "Δτ = {}", (coarse - fine).abs());
    }

    #[test]
    fn recording_grid_covers_endpoints() {
        let s = sys(2);
        let op = ConcurrenceOperator::build(s).unwrap();
        let g = LindbladGenerator::new(s, &CouplingMatrix::zero(s), &DephasingSpec::zero(s))
            .unwrap();
        let rho0 = PureState::basis_state(s, 0).to_density();
        let plan = StepPlan::new(0.01, 0.25).unwrap();
        let record = RecordPlan { every: 10, snapshots: true, positivity_every: 1 };
        let traj = propagate(&op, &g, &rho0, plan, record, None).unwrap();
        assert_eq!(traj.times_us.first().copied().unwrap(), 0.0);
        assert!((traj.times_us.last().copied().unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(traj.snapshots.len(), traj.times_us.len());
        assert_eq!(traj.fields.len(), traj.times_us.len());
        // 25 steps with every=10 → records at steps 0, 10, 20, 25.
        assert_eq!(traj.times_us.len(), 4);
        assert!(traj.min_eigenvalue > -1e-12);
    }

    #[test]
    fn trajectory_summaries() {
        let traj = Trajectory {
            n_qubits: 1,
            dt_us: 0.1,
            times_us: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            tau: vec![0.9, 0.7, 0.5, 0.2, 0.0005],
            purity: vec![1.0; 5],
            fields: vec![vec![[1.0, 0.0, 0.0]]; 5],
            snapshots: vec![],
            kick_times_us: vec![],
            min_eigenvalue: f64::INFINITY,
            hermiticity_drift: 0.0,
            trace_drift: 0.0,
            final_state: Array2::from_elem((2, 2), ZERO),
        };
        assert!((traj.time_mean_tau(0.1, 0.3) - (0.7 + 0.5 + 0.2) / 3.0).abs() < 1e-12);
        assert_eq!(traj.max_tau(), (0.0, 0.9));
        assert_eq!(traj.first_time_at_or_above(0.5), Some(0.0));
        assert_eq!(traj.first_time_below(0.6), Some(0.2));
        assert_eq!(traj.first_time_below(1e-4), None);
        assert!((traj.tau_at(0.2).unwrap() - 0.5).abs() < 1e-15);
        // 4 intervals of the rectangle rule, ‖h‖² = 1 each.
        assert!((traj.field_energy(0.0, 0.4) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_plans_and_rates() {
        assert!(StepPlan::new(0.0, 1.0).is_err());
        assert!(StepPlan::new(1e-4, -1.0).is_err());
        assert!(DephasingSpec::new(vec![0.1, -0.2]).is_err());
        let s = sys(2);
        let g = LindbladGenerator::new(s, &CouplingMatrix::zero(s), &DephasingSpec::zero(s))
            .unwrap();
        let op = ConcurrenceOperator::build(s).unwrap();
        let rho0 = PureState::basis_state(s, 0).to_density();
        let record = RecordPlan { every: 0, snapshots: false, positivity_every: 0 };
        assert!(propagate(&op, &g, &rho0, StepPlan::new(0.1, 1.0).unwrap(), record, None)
            .is_err());
    }
}
