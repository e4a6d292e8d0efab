//! Scenario configuration and end-to-end studies: closed-loop entanglement
//! generation (coherent and dissipative), robust-state lifetime comparisons,
//! pulse-imperfection studies with mixtures and strength sweeps, and
//! local-unitary-maximized overlap tracking.

pub mod fidelity;
pub mod noise_study;
pub mod robust;

use serde::{Deserialize, Serialize};

use crate::controller::{
    perturbed_couplings, ControlPolicy, FeedbackController, FieldNoise, KickSpec,
};
use crate::dynamics::{
    propagate, CouplingMatrix, DephasingSpec, LindbladGenerator, RecordPlan, StepPlan,
    Trajectory,
};
use crate::entanglement::ConcurrenceOperator;
use crate::error::{Error, Result};
use crate::hilbert::{Axis, CMat, DensityMatrix, PureState, QubitSystem, RngStream};

// Randomness stream layout: every consumer derives its generator as
// `RngStream::new(seed).substream(purpose, index)`, so realizations are
// independent, reproducible, and order-insensitive.
/// Haar rotations for the uncontrolled robust-state ensemble.
pub const STREAM_HAAR: u64 = 1;
/// White-noise field disturbance, indexed by realization.
pub const STREAM_NOISE: u64 = 2;
/// Constant-offset sign vectors, indexed by realization.
pub const STREAM_OFFSET: u64 = 3;
/// Controller-side coupling miscalibrations, indexed by realization.
pub const STREAM_COUPLING: u64 = 4;
/// Random rotation directions for robustness probing.
pub const STREAM_DIRECTIONS: u64 = 5;
/// Multi-start seeds for the overlap optimizer.
pub const STREAM_OPTIMIZER: u64 = 6;
/// Random-field draws for optimality spot checks.
pub const STREAM_FIELDS: u64 = 7;

/// Which study a configuration drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Coherent,
    Dissipative,
    RobustStates,
    PulseRobustness,
    FidelityTrack,
}

/// One symmetric coupling entry, 1-based qubit labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

/// Per-qubit dephasing rates: a scalar applies uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Uniform(f64),
    PerQubit(Vec<f64>),
}

impl Default for GammaSpec {
    fn default() -> Self {
        Self::Uniform(0.0)
    }
}

impl GammaSpec {
    fn resolve(&self, sys: QubitSystem) -> Result<DephasingSpec> {
        match self {
            Self::Uniform(g) => DephasingSpec::uniform(sys, *g),
            Self::PerQubit(v) => {
                if v.len() != sys.n_qubits() {
                    return Err(Error::Config(format!(
                        "gamma_per_us: expected {} per-qubit rates, got {}",
                        sys.n_qubits(),
                        v.len()
                    )));
                }
                DephasingSpec::new(v.clone())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Uniform(g) => *g == 0.0,
            Self::PerQubit(v) => v.iter().all(|g| *g == 0.0),
        }
    }
}

/// Initial-state choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    /// `(√α|0⟩ + √(1−α)·e^{iθ}|1⟩)^⊗N`.
    Product { alpha: f64, theta_rad: f64 },
    /// `√p|0…0⟩ + √(1−p)|1…1⟩`.
    GhzFamily { p: f64 },
    /// Bisect the GHZ family to the requested invariant value.
    TauTarget { value: f64 },
    /// Raw amplitudes as `[re, im]` pairs in computational-basis order.
    Explicit { amplitudes: Vec<[f64; 2]> },
}

impl Default for InitialStateSpec {
    fn default() -> Self {
        Self::Product { alpha: 0.73, theta_rad: 0.51 * std::f64::consts::PI }
    }
}

/// Field-imperfection choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    #[default]
    None,
    WhiteNoise {
        epsilon: f64,
        #[serde(default = "default_cutoff")]
        cutoff_rad_per_us: f64,
    },
    ConstantOffset { epsilon: f64 },
    CouplingError { epsilon: f64 },
}

fn default_cutoff() -> f64 {
    100.0 * std::f64::consts::PI
}

impl PerturbationSpec {
    pub fn epsilon(&self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::WhiteNoise { epsilon, .. }
            | Self::ConstantOffset { epsilon }
            | Self::CouplingError { epsilon } => *epsilon,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        match self {
            Self::None => Self::None,
            Self::WhiteNoise { cutoff_rad_per_us, .. } => {
                Self::WhiteNoise { epsilon, cutoff_rad_per_us: *cutoff_rad_per_us }
            }
            Self::ConstantOffset { .. } => Self::ConstantOffset { epsilon },
            Self::CouplingError { .. } => Self::CouplingError { epsilon },
        }
    }
}

/// Re-orientation kick configuration. The pulse acts as the instantaneous
/// rotation `exp(−i·θ·Σσ_axis)`; give the angle directly or as
/// amplitude × duration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KickConfig {
    #[serde(default = "default_kick_axis")]
    pub axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_rad_per_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
    /// Demand `|τ̈₀| ≤ tol` in addition to a null gradient before kicking.
    #[serde(default = "default_true")]
    pub require_flat_curvature: bool,
}

fn default_kick_axis() -> Axis {
    Axis::X
}

fn default_true() -> bool {
    true
}

impl Default for KickConfig {
    fn default() -> Self {
        Self {
            axis: Axis::X,
            angle_rad: None,
            amplitude_rad_per_us: None,
            duration_us: None,
            require_flat_curvature: true,
        }
    }
}

impl KickConfig {
    pub fn resolve(&self) -> Result<KickSpec> {
        let angle_rad = match (self.angle_rad, self.amplitude_rad_per_us, self.duration_us) {
            (Some(a), None, None) => a,
            (None, Some(amp), Some(dur)) => amp * dur,
            (None, None, None) => 0.05 * std::f64::consts::PI,
            _ => {
                return Err(Error::Config(
                    "kick: give either angle_rad, or amplitude_rad_per_us with duration_us"
                        .into(),
                ))
            }
        };
        Ok(KickSpec {
            axis: self.axis,
            angle_rad,
            require_flat_curvature: self.require_flat_curvature,
        })
    }
}

/// Full run description. Unknown keys are rejected; every physical quantity
/// carries its unit in the key name (time µs, rates 1/µs, energies rad/µs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    #[serde(default = "default_n_qubits")]
    pub n_qubits: usize,
    /// Two-body couplings; omitted ⇒ the reference four-qubit set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_rad_per_us: Option<Vec<CouplingEntry>>,
    #[serde(default)]
    pub gamma_per_us: GammaSpec,
    #[serde(default)]
    pub initial: InitialStateSpec,
    #[serde(default = "default_h_max")]
    pub h_max_rad_per_us: f64,
    #[serde(default = "default_x_tolerance")]
    pub x_tolerance: f64,
    #[serde(default = "default_kick")]
    pub kick: Option<KickConfig>,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default = "default_t_end")]
    pub t_end_us: f64,
    #[serde(default = "default_dt")]
    pub dt_us: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Ensemble size for mixtures, sweeps, and robust ensembles.
    #[serde(default = "default_n_realizations")]
    pub n_realizations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Strength grid for the `sweep` command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_grid: Option<Vec<f64>>,
    /// Amplitude grid for the `sweep` command (alternative to epsilon_grid).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_max_grid: Option<Vec<f64>>,
    /// Multi-start count for the overlap optimizer.
    #[serde(default = "default_lu_starts")]
    pub lu_starts: usize,
}

fn default_scenario() -> Scenario {
    Scenario::Coherent
}
fn default_n_qubits() -> usize {
    4
}
fn default_h_max() -> f64 {
    17.0
}
fn default_x_tolerance() -> f64 {
    1e-9
}
fn default_kick() -> Option<KickConfig> {
    Some(KickConfig::default())
}
fn default_t_end() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-4
}
fn default_record_every() -> usize {
    10
}
fn default_n_realizations() -> usize {
    1
}
fn default_lu_starts() -> usize {
    32
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        parse_config("{}").expect("empty object is a valid config")
    }
}

/// Parse a configuration from JSON text. Schema violations name the failing
/// key path.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Read and parse a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config file `{}`: {e}", path.display()))
    })?;
    parse_config(&text)
}

fn validate(cfg: &ScenarioConfig) -> Result<()> {
    if !(cfg.t_end_us > 0.0) {
        return Err(Error::Config(format!("t_end_us must be > 0, got {}", cfg.t_end_us)));
    }
    if !(cfg.dt_us > 0.0) {
        return Err(Error::Config(format!("dt_us must be > 0, got {}", cfg.dt_us)));
    }
    if cfg.record_every == 0 {
        return Err(Error::Config("record_every must be ≥ 1".into()));
    }
    if cfg.n_realizations == 0 {
        return Err(Error::Config("n_realizations must be ≥ 1".into()));
    }
    if !(cfg.h_max_rad_per_us >= 0.0) {
        return Err(Error::Config(format!(
            "h_max_rad_per_us must be ≥ 0, got {}",
            cfg.h_max_rad_per_us
        )));
    }
    if !(cfg.x_tolerance > 0.0) {
        return Err(Error::Config(format!(
            "x_tolerance must be > 0, got {}",
            cfg.x_tolerance
        )));
    }
    match &cfg.gamma_per_us {
        GammaSpec::Uniform(g) if *g < 0.0 => {
            return Err(Error::Config(format!("gamma_per_us must be ≥ 0, got {g}")))
        }
        GammaSpec::PerQubit(v) if v.iter().any(|g| *g < 0.0) => {
            return Err(Error::Config("gamma_per_us entries must all be ≥ 0".into()))
        }
        _ => {}
    }
    if cfg.perturbation.epsilon() < 0.0 {
        return Err(Error::Config(format!(
            "perturbation epsilon must be ≥ 0, got {}",
            cfg.perturbation.epsilon()
        )));
    }
    if let PerturbationSpec::WhiteNoise { cutoff_rad_per_us, .. } = cfg.perturbation {
        if !(cutoff_rad_per_us > 0.0) {
            return Err(Error::Config(format!(
                "perturbation.white_noise.cutoff_rad_per_us must be > 0, got {cutoff_rad_per_us}"
            )));
        }
    }
    if cfg.lu_starts == 0 {
        return Err(Error::Config("lu_starts must be ≥ 1".into()));
    }
    Ok(())
}

/// Immutable per-run machinery shared by all realizations of a config.
pub struct Workspace {
    pub config: ScenarioConfig,
    pub sys: QubitSystem,
    pub op: ConcurrenceOperator,
    pub lambda: CouplingMatrix,
    pub gamma: DephasingSpec,
    pub plant: LindbladGenerator,
    pub seeds: RngStream,
}

impl Workspace {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        validate(&config)?;
        let sys = QubitSystem::new(config.n_qubits)?;
        let op = ConcurrenceOperator::build(sys)?;
        let lambda = resolve_couplings(&config, sys)?;
        let gamma = config.gamma_per_us.resolve(sys)?;
        let plant = LindbladGenerator::new(sys, &lambda, &gamma)?;
        let seeds = RngStream::new(config.seed);
        Ok(Self { config, sys, op, lambda, gamma, plant, seeds })
    }

    pub fn policy(&self) -> Result<ControlPolicy> {
        let kick = match &self.config.kick {
            Some(k) => Some(k.resolve()?),
            None => None,
        };
        Ok(ControlPolicy {
            h_max: self.config.h_max_rad_per_us,
            x_tolerance: self.config.x_tolerance,
            kick,
        })
    }

    pub fn initial_state(&self) -> Result<PureState> {
        match &self.config.initial {
            InitialStateSpec::Product { alpha, theta_rad } => {
                PureState::product_state(self.sys, *alpha, *theta_rad)
            }
            InitialStateSpec::GhzFamily { p } => PureState::ghz_family(self.sys, *p),
            InitialStateSpec::TauTarget { value } => find_state_with_tau(&self.op, *value),
            InitialStateSpec::Explicit { amplitudes } => {
                let amps = ndarray::Array1::from_iter(
                    amplitudes.iter().map(|[re, im]| num_complex::Complex64::new(*re, *im)),
                );
                PureState::new(amps)
            }
        }
    }

    pub fn step_plan(&self) -> Result<StepPlan> {
        StepPlan::new(self.config.dt_us, self.config.t_end_us)
    }

    pub fn record_plan(&self, snapshots: bool) -> RecordPlan {
        RecordPlan {
            every: self.config.record_every,
            snapshots,
            positivity_every: 25,
        }
    }

    /// Field noise for a given realization (white noise / constant offset).
    pub fn field_noise(&self, realization: u64) -> Result<Option<FieldNoise>> {
        let h_max = self.config.h_max_rad_per_us;
        let n = self.sys.n_qubits();
        Ok(match &self.config.perturbation {
            PerturbationSpec::None | PerturbationSpec::CouplingError { .. } => None,
            PerturbationSpec::WhiteNoise { epsilon, cutoff_rad_per_us } => {
                Some(FieldNoise::white(
                    *epsilon,
                    h_max,
                    *cutoff_rad_per_us,
                    n,
                    self.seeds.substream(STREAM_NOISE, realization),
                )?)
            }
            PerturbationSpec::ConstantOffset { epsilon } => Some(FieldNoise::constant_offset(
                *epsilon,
                h_max,
                n,
                &self.seeds.substream(STREAM_OFFSET, realization),
            )?),
        })
    }

    /// The generator the *controller* believes in: identical to the plant
    /// except under a coupling-error perturbation, where the gradient sees
    /// miscalibrated couplings while the plant keeps the true ones.
    pub fn model(&self, realization: u64) -> Result<LindbladGenerator> {
        match &self.config.perturbation {
            PerturbationSpec::CouplingError { epsilon } => {
                let lp = perturbed_couplings(
                    &self.lambda,
                    *epsilon,
                    &self.seeds.substream(STREAM_COUPLING, realization),
                )?;
                LindbladGenerator::new(self.sys, &lp, &self.gamma)
            }
            _ => Ok(self.plant.clone()),
        }
    }

    /// One closed-loop trajectory for the given realization of the
    /// configured perturbation.
    pub fn run_realization(
        &self,
        realization: u64,
        rho0: &DensityMatrix,
        snapshots: bool,
    ) -> Result<Trajectory> {
        let policy = self.policy()?;
        let model = self.model(realization)?;
        let noise = self.field_noise(realization)?;
        let plan = self.step_plan()?;
        let record = self.record_plan(snapshots);
        if self.config.h_max_rad_per_us == 0.0 && noise.is_none() {
            return propagate(&self.op, &self.plant, rho0, plan, record, None);
        }
        let mut ctrl = FeedbackController::new(&self.op, &model, policy, noise);
        propagate(&self.op, &self.plant, rho0, plan, record, Some(&mut ctrl))
    }
}

fn resolve_couplings(cfg: &ScenarioConfig, sys: QubitSystem) -> Result<CouplingMatrix> {
    let n = sys.n_qubits();
    match &cfg.lambda_rad_per_us {
        None => {
            if n == 4 {
                Ok(CouplingMatrix::default_four_qubit())
            } else {
                Ok(CouplingMatrix::zero(sys))
            }
        }
        Some(entries) => {
            let mut m = CouplingMatrix::zero(sys);
            let mut seen = std::collections::HashSet::new();
            for e in entries {
                if e.i == e.j || e.i == 0 || e.j == 0 || e.i > n || e.j > n {
                    return Err(Error::BadCouplings);
                }
                let key = (e.i.min(e.j), e.i.max(e.j));
                if !seen.insert(key) {
                    return Err(Error::BadCouplings);
                }
                m.set(e.i - 1, e.j - 1, e.value);
            }
            Ok(m)
        }
    }
}

/// Closed-loop coherent run (`Γ ≡ 0` required).
pub fn run_coherent(config: &ScenarioConfig) -> Result<Trajectory> {
    if !config.gamma_per_us.is_zero() {
        return Err(Error::Config(
            "coherent scenario requires gamma_per_us = 0 (use the dissipative scenario)".into(),
        ));
    }
    run_closed_loop(config)
}

/// Closed-loop run with dephasing in both the plant and the gradient.
pub fn run_dissipative(config: &ScenarioConfig) -> Result<Trajectory> {
    run_closed_loop(config)
}

fn run_closed_loop(config: &ScenarioConfig) -> Result<Trajectory> {
    let ws = Workspace::new(config.clone())?;
    let rho0 = ws.initial_state()?.to_density();
    ws.run_realization(0, &rho0, false)
}

/// The four-qubit state with the maximal invariant value
/// `½(|0000⟩ + i|0011⟩ + i|1100⟩ + |1111⟩)`.
pub fn maximal_state(sys: QubitSystem) -> Result<PureState> {
    if sys.n_qubits() != 4 {
        return Err(Error::DimensionMismatch {
            context: "maximal reference state",
            expected: 4,
            got: sys.n_qubits(),
        });
    }
    let mut amps = ndarray::Array1::from_elem(16, num_complex::Complex64::new(0.0, 0.0));
    amps[0] = num_complex::Complex64::new(0.5, 0.0);
    amps[3] = num_complex::Complex64::new(0.0, 0.5);
    amps[12] = num_complex::Complex64::new(0.0, 0.5);
    amps[15] = num_complex::Complex64::new(0.5, 0.0);
    PureState::new(amps)
}

/// Find a pure state with the requested invariant value by bisecting the
/// family `√p|0…0⟩ + √(1−p)|1…1⟩` on `p ∈ [0, ½]`; monotonicity on that
/// interval is verified at runtime. A target of 1 (four qubits) returns the
/// known maximal state, which lies outside the family.
pub fn find_state_with_tau(op: &ConcurrenceOperator, target: f64) -> Result<PureState> {
    const TOL: f64 = 1e-6;
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Config(format!("tau target must lie in [0, 1], got {target}")));
    }
    let sys = op.system();
    if (target - 1.0).abs() <= TOL && sys.n_qubits() == 4 {
        return maximal_state(sys);
    }
    let tau_at = |p: f64| -> Result<f64> {
        op.tau(&PureState::ghz_family(sys, p)?.to_density().matrix())
    };
    // Runtime monotonicity check on a coarse grid.
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=64 {
        let v = tau_at(0.5 * k as f64 / 64.0)?;
        if v < prev - 1e-12 {
            return Err(Error::NotMonotone);
        }
        prev = v;
    }
    let max = tau_at(0.5)?;
    if target > max + TOL {
        return Err(Error::TargetUnreachable { target, max });
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = tau_at(mid)?;
        if (v - target).abs() <= TOL {
            return PureState::ghz_family(sys, mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let v = tau_at(p)?;
    if (v - target).abs() <= TOL {
        PureState::ghz_family(sys, p)
    } else {
        Err(Error::TargetUnreachable { target, max })
    }
}

// ---------------------------------------------------------------------------
// Small fitting helpers (shared by the robustness studies).
// ---------------------------------------------------------------------------

/// Ordinary least-squares line `y = a + b·x`; returns `(a, b)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (sy / n, 0.0);
    }
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    (a, b)
}

/// Quadratic least-squares fit `y = a + b·x + c·x²` with the standard error
/// of the linear coefficient propagated from per-point uncertainties.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticFit {
    pub intercept: f64,
    pub slope: f64,
    pub curvature: f64,
    pub slope_sigma: f64,
}

pub fn quadratic_fit(xs: &[f64], ys: &[f64], sigmas: &[f64]) -> Result<QuadraticFit> {
    let n = xs.len();
    if n < 3 || ys.len() != n || sigmas.len() != n {
        return Err(Error::Config(format!(
            "quadratic fit needs ≥ 3 equally sized samples, got {n}"
        )));
    }
    // Normal equations for the unweighted fit: M·β = v with M = XᵀX.
    let mut m = [[0.0f64; 3]; 3];
    let mut v = [0.0f64; 3];
    for (x, y) in xs.iter().zip(ys) {
        let row = [1.0, *x, x * x];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += row[r] * row[c];
            }
            v[r] += row[r] * y;
        }
    }
    let inv = invert3(&m).ok_or_else(|| {
        Error::Config("quadratic fit is degenerate (need ≥ 3 distinct x values)".into())
    })?;
    let beta: Vec<f64> =
        (0..3).map(|r| (0..3).map(|c| inv[r][c] * v[c]).sum()).collect();
    // Var(β) = (XᵀX)⁻¹ Xᵀ diag(σ²) X (XᵀX)⁻¹; we only need the slope entry.
    let mut var_slope = 0.0;
    for (x, s) in xs.iter().zip(sigmas) {
        let row = [1.0, *x, x * x];
        // Sensitivity of β₁ to y_i: (inv · rowᵀ)₁.
        let g: f64 = (0..3).map(|c| inv[1][c] * row[c]).sum();
        var_slope += g * g * s * s;
    }
    Ok(QuadraticFit {
        intercept: beta[0],
        slope: beta[1],
        curvature: beta[2],
        slope_sigma: var_slope.sqrt(),
    })
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-300 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
            let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
            // Cofactor expansion with transpose baked in (out[c][r]).
            out[c][r] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) * inv_det;
        }
    }
    Some(out)
}

/// Rotate a density matrix by an independently drawn local unitary per qubit,
/// each a rotation by `angle` about a uniformly random axis.
pub fn rotate_by_random_locals(
    rho: &CMat,
    sys: QubitSystem,
    angle_rad: f64,
    stream: &RngStream,
) -> CMat {
    let mut rng = stream.rng();
    let us: Vec<_> = (0..sys.n_qubits())
        .map(|_| crate::hilbert::su2_rotation(crate::hilbert::random_axis(&mut rng), angle_rad))
        .collect();
    crate::hilbert::conjugate_locals(&us, rho, sys)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_yields_reference_defaults() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg.scenario, Scenario::Coherent);
        assert_eq!(cfg.n_qubits, 4);
        assert!(cfg.lambda_rad_per_us.is_none());
        assert_eq!(cfg.gamma_per_us, GammaSpec::Uniform(0.0));
        assert_eq!(
            cfg.initial,
            InitialStateSpec::Product { alpha: 0.73, theta_rad: 0.51 * std::f64::consts::PI }
        );
        assert_eq!(cfg.h_max_rad_per_us, 17.0);
        assert_eq!(cfg.x_tolerance, 1e-9);
        assert_eq!(cfg.t_end_us, 1.0);
        assert_eq!(cfg.dt_us, 1e-4);
        assert_eq!(cfg.record_every, 10);
        assert_eq!(cfg.n_realizations, 1);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.perturbation, PerturbationSpec::None);
        let ws = Workspace::new(cfg).unwrap();
        assert!((ws.lambda.get(0, 1) - 9.8).abs() < 1e-12);
        assert!((ws.lambda.get(2, 3) - 2.7).abs() < 1e-12);
        assert!(ws.gamma.is_zero());
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let err = parse_config(r#"{"h_mox_rad_per_us": 17}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("h_mox_rad_per_us"), "{msg}");

        let err =
            parse_config(r#"{"initial": {"product": {"alpha": 0.5, "beta": 1.0}}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("initial") && msg.contains("beta"), "{msg}");
    }

    #[test]
    fn negative_rates_and_strengths_are_schema_errors() {
        assert!(parse_config(r#"{"gamma_per_us": -1}"#).is_err());
        assert!(parse_config(r#"{"gamma_per_us": [0.1, -0.2, 0.0, 0.0]}"#).is_err());
        assert!(
            parse_config(r#"{"perturbation": {"white_noise": {"epsilon": -0.1}}}"#).is_err()
        );
        assert!(parse_config(r#"{"dt_us": 0}"#).is_err());
        assert!(parse_config(r#"{"record_every": 0}"#).is_err());
        assert!(parse_config(r#"{"h_max_rad_per_us": -3}"#).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = parse_config(
            r#"{
                "scenario": "dissipative",
                "gamma_per_us": 0.2,
                "h_max_rad_per_us": 17.0,
                "perturbation": {"white_noise": {"epsilon": 0.1}},
                "kick": {"axis": "x", "angle_rad": 0.15707963267948966},
                "initial": {"product": {"alpha": 0.73, "theta_rad": 1.602212253082}},
                "seed": 42,
                "n_realizations": 7
            }"#,
        )
        .unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let again = parse_config(&text).unwrap();
        assert_eq!(cfg, again);
        // The default config round-trips too.
        let d = ScenarioConfig::default();
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(d, parse_config(&text).unwrap());
    }

    #[test]
    fn coupling_lists_are_validated() {
        let cfg = parse_config(
            r#"{"lambda_rad_per_us": [{"i": 1, "j": 2, "value": 3.0}]}"#,
        )
        .unwrap();
        let ws = Workspace::new(cfg).unwrap();
        assert_eq!(ws.lambda.get(0, 1), 3.0);
        assert_eq!(ws.lambda.get(0, 2), 0.0);

        for bad in [
            r#"{"lambda_rad_per_us": [{"i": 1, "j": 1, "value": 3.0}]}"#,
            r#"{"lambda_rad_per_us": [{"i": 0, "j": 2, "value": 3.0}]}"#,
            r#"{"lambda_rad_per_us": [{"i": 1, "j": 5, "value": 3.0}]}"#,
            r#"{"lambda_rad_per_us": [{"i": 1, "j": 2, "value": 1.0}, {"i": 2, "j": 1, "value": 2.0}]}"#,
        ] {
            let cfg = parse_config(bad).unwrap();
            assert!(Workspace::new(cfg).is_err(), "should reject: {bad}");
        }
    }

    #[test]
    fn kick_config_resolves_angle_or_impulse() {
        let k = KickConfig::default().resolve().unwrap();
        assert!((k.angle_rad - 0.05 * std::f64::consts::PI).abs() < 1e-15);
        let k = KickConfig { angle_rad: Some(0.3), ..KickConfig::default() }.resolve().unwrap();
        assert_eq!(k.angle_rad, 0.3);
        let k = KickConfig {
            amplitude_rad_per_us: Some(200.0),
            duration_us: Some(0.001),
            ..KickConfig::default()
        }
        .resolve()
        .unwrap();
        assert!((k.angle_rad - 0.2).abs() < 1e-15);
        assert!(KickConfig {
            angle_rad: Some(0.3),
            amplitude_rad_per_us: Some(1.0),
            ..KickConfig::default()
        }
        .resolve()
        .is_err());
    }

    #[test]
    fn tau_target_bisection_hits_requested_values() {
        let sys = QubitSystem::new(4).unwrap();
        let op = ConcurrenceOperator::build(sys).unwrap();
        for target in [0.0, 0.2, 0.55, 0.8, 0.875] {
            let psi = find_state_with_tau(&op, target).unwrap();
            let tau = op.tau(psi.to_density().matrix()).unwrap();
            assert!(
                (tau - target).abs() <= 1e-6,
                "target {target}: got {tau}"
            );
        }
        // Unreachable inside the family, below the special-cased maximum.
        assert!(matches!(
            find_state_with_tau(&op, 0.95),
            Err(Error::TargetUnreachable { .. })
        ));
        // The maximum itself comes from the dedicated reference state.
        let psi = find_state_with_tau(&op, 1.0).unwrap();
        let tau = op.tau(psi.to_density().matrix()).unwrap();
        assert!((tau - 1.0).abs() < 1e-9);
        assert!(find_state_with_tau(&op, 1.5).is_err());
    }

    #[test]
    fn dissipative_with_zero_gamma_matches_coherent_bit_for_bit() {
        let mut cfg = ScenarioConfig::default();
        cfg.t_end_us = 0.02;
        cfg.record_every = 20;
        let a = run_coherent(&cfg).unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.scenario = Scenario::Dissipative;
        let b = run_dissipative(&cfg2).unwrap();
        assert_eq!(a.tau, b.tau);
        assert_eq!(a.purity, b.purity);
        assert_eq!(a.fields, b.fields);
        // And a nonzero gamma must change the answer.
        let mut cfg3 = cfg.clone();
        cfg3.scenario = Scenario::Dissipative;
        cfg3.gamma_per_us = GammaSpec::Uniform(0.2);
        let c = run_dissipative(&cfg3).unwrap();
        assert_ne!(a.tau, c.tau);
        // While coherent refuses dissipative configs.
        assert!(run_coherent(&cfg3).is_err());
    }

    #[test]
    fn linear_and_quadratic_fits_recover_known_coefficients() {
        let xs: Vec<f64> = (0..9).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 - 0.3 * x).collect();
        let (a, b) = linear_fit(&xs, &ys);
        assert!((a - 0.7).abs() < 1e-12 && (b + 0.3).abs() < 1e-12);

        let ys: Vec<f64> = xs.iter().map(|x| 0.9 + 0.05 * x - 2.0 * x * x).collect();
        let sigmas = vec![0.01; xs.len()];
        let fit = quadratic_fit(&xs, &ys, &sigmas).unwrap();
        assert!((fit.intercept - 0.9).abs() < 1e-10);
        assert!((fit.slope - 0.05).abs() < 1e-10);
        assert!((fit.curvature + 2.0).abs() < 1e-9);
        assert!(fit.slope_sigma > 0.0 && fit.slope_sigma < 0.2);
        assert!(quadratic_fit(&xs[..2], &ys[..2], &sigmas[..2]).is_err());
    }

    #[test]
    fn maximal_state_has_unit_invariant() {
        let sys = QubitSystem::new(4).unwrap();
        let op = ConcurrenceOperator::build(sys).unwrap();
        let psi = maximal_state(sys).unwrap();
        let tau = op.tau(psi.to_density().matrix()).unwrap();
        assert!((tau - 1.0).abs() < 1e-12);
    }
}
