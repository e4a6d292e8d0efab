//! Feedback control law, re-orientation kicks, and field imperfections.
//!
//! The controller maximizes the second time-derivative of the entanglement
//! functional at each instant. Because that derivative is affine in the local
//! field, the optimizer is bang-bang: each qubit's field points along its
//! gradient block at full amplitude, or is off when the block vanishes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{CouplingMatrix, FieldController, LindbladGenerator};
use crate::entanglement::{ConcurrenceOperator, ControlGradient};
use crate::error::{Error, Result};
use crate::hilbert::{conjugate_locals, su2_rotation, Axis, CMat, RngStream};

/// Discrete re-orientation pulse applied when the feedback law stalls.
///
/// The pulse is modeled as the instantaneous collective rotation
/// `exp(−i·θ·Σ_i σ_a⁽ⁱ⁾)` it generates; a finite-duration pulse of amplitude
/// `A` and length `T` corresponds to `θ = A·T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KickSpec {
    pub axis: Axis,
    pub angle_rad: f64,
    /// Require a flat curvature (|τ̈₀| below tolerance) in addition to a
    /// vanishing gradient before kicking. The stationary entangled states of
    /// the dissipative dynamics sit at gradient-null points with *nonzero*
    /// curvature, so drivers that must escape them disable this clause.
    pub require_flat_curvature: bool,
}

impl Default for KickSpec {
    fn default() -> Self {
        Self {
            axis: Axis::X,
            angle_rad: 0.05 * std::f64::consts::PI,
            require_flat_curvature: true,
        }
    }
}

/// Parameters of the feedback law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlPolicy {
    /// Per-qubit field amplitude cap (rad/µs).
    pub h_max: f64,
    /// Gradient blocks with norm at or below this are treated as null.
    pub x_tolerance: f64,
    pub kick: Option<KickSpec>,
}

impl Default for ControlPolicy {
    fn default() -> Self {
        Self { h_max: 17.0, x_tolerance: 1e-9, kick: Some(KickSpec::default()) }
    }
}

/// Bang-bang feedback law: `h⁽ⁱ⁾ = h_max · X⁽ⁱ⁾/‖X⁽ⁱ⁾‖` when the block norm
/// exceeds the tolerance, zero otherwise.
pub fn control_field(x: &ControlGradient, h_max: f64, x_tolerance: f64) -> Vec<[f64; 3]> {
    (0..x.n_qubits())
        .map(|i| {
            let block = x.site(i);
            let norm = x.site_norm(i);
            if norm > x_tolerance && h_max != 0.0 {
                let s = h_max / norm;
                [block[0] * s, block[1] * s, block[2] * s]
            } else {
                [0.0; 3]
            }
        })
        .collect()
}

/// Second derivative of the entanglement functional under a frozen generator
/// that includes the given local field.
pub fn curvature_with_field(
    op: &ConcurrenceOperator,
    model: &LindbladGenerator,
    rho: &CMat,
    field: Option<&[[f64; 3]]>,
) -> Result<f64> {
    op.tau_ddot(rho, |m| model.rhs(m, field))
}

/// Evidence that the bang-bang law maximizes the curvature: evaluates
/// `τ̈` under `n_samples` random fields with the same per-qubit norms as the
/// feedback field and returns the largest amount by which any of them beats
/// it (≤ 0 up to roundoff when the law is optimal).
pub fn optimality_margin(
    op: &ConcurrenceOperator,
    model: &LindbladGenerator,
    rho: &CMat,
    policy: &ControlPolicy,
    stream: &RngStream,
    n_samples: usize,
) -> Result<f64> {
    let g = op.contract(rho);
    let x = op.gradient_x(rho, &g, |m| model.h_comm(m), |m| model.dissipate(m));
    let h_opt = control_field(&x, policy.h_max, policy.x_tolerance);
    let tau_opt = curvature_with_field(op, model, rho, Some(&h_opt))?;
    let norms: Vec<f64> =
        h_opt.iter().map(|[a, b, c]| (a * a + b * b + c * c).sqrt()).collect();
    let mut rng = stream.rng();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let h_rand: Vec<[f64; 3]> = norms
            .iter()
            .map(|&n| {
                if n == 0.0 {
                    return [0.0; 3];
                }
                loop {
                    let v: [f64; 3] = [
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    ];
                    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if len > 1e-12 {
                        return [v[0] * n / len, v[1] * n / len, v[2] * n / len];
                    }
                }
            })
            .collect();
        let tau_rand = curvature_with_field(op, model, rho, Some(&h_rand))?;
        worst = worst.max(tau_rand - tau_opt);
    }
    Ok(worst)
}

/// Whether the kick condition holds at `rho`: all gradient blocks null, and
/// (if required) the zero-field curvature flat.
pub fn kick_condition(
    op: &ConcurrenceOperator,
    model: &LindbladGenerator,
    kick: &KickSpec,
    x_tolerance: f64,
    rho: &CMat,
) -> Result<bool> {
    let g = op.contract(rho);
    let x = op.gradient_x(rho, &g, |m| model.h_comm(m), |m| model.dissipate(m));
    if !x.is_null(x_tolerance) {
        return Ok(false);
    }
    if kick.require_flat_curvature {
        let tau_ddot0 = op.tau_ddot(rho, |m| model.rhs(m, None))?;
        if tau_ddot0.abs() > x_tolerance {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Apply the collective rotation `exp(−i·θ·Σ_i σ_a⁽ⁱ⁾)` to a density matrix.
pub fn apply_kick(kick: &KickSpec, rho: &CMat, model: &LindbladGenerator) -> CMat {
    let sys = model.system();
    let mut axis = [0.0; 3];
    axis[kick.axis as usize] = 1.0;
    let u = su2_rotation(axis, 2.0 * kick.angle_rad);
    let us = vec![u; sys.n_qubits()];
    conjugate_locals(&us, rho, sys)
}

/// Apply the kick once, at the initial state, if the condition holds there.
/// Returns the (possibly rotated) state and whether the kick fired.
pub fn initial_kick(
    op: &ConcurrenceOperator,
    model: &LindbladGenerator,
    policy: &ControlPolicy,
    rho0: &CMat,
) -> Result<(CMat, bool)> {
    if let Some(kick) = &policy.kick {
        if kick_condition(op, model, kick, policy.x_tolerance, rho0)? {
            return Ok((apply_kick(kick, rho0, model), true));
        }
    }
    Ok((rho0.clone(), false))
}

// ---------------------------------------------------------------------------
// Field imperfections.
// ---------------------------------------------------------------------------

/// Additive field disturbance, evaluated per integrator stage.
#[derive(Clone, Debug)]
pub enum FieldNoise {
    /// Band-limited white noise: each of the 3N field components gets an
    /// independent uniform sample from `[−1, 1]`, scaled by `ε·h_max`, held
    /// constant over cells of width `π/cutoff` (the Nyquist step of the
    /// stated bandwidth). Samples are addressed by cell index, so lookups at
    /// arbitrary times are deterministic and order-independent.
    WhiteNoise {
        epsilon: f64,
        h_max: f64,
        cell_us: f64,
        stream: RngStream,
        cache: Option<(u64, Vec<[f64; 3]>)>,
        n_qubits: usize,
    },
    /// Static miscalibration: each component is offset by `ε·h_max·s` with a
    /// sign `s ∈ {±1}` drawn once per run.
    ConstantOffset { offsets: Vec<[f64; 3]> },
}

/// Number of RNG words reserved per white-noise cell; 3N uniform doubles need
/// 6N words, so 64 leaves headroom for up to 8 qubits.
const NOISE_WORDS_PER_CELL: u128 = 64;

impl FieldNoise {
    pub fn white(
        epsilon: f64,
        h_max: f64,
        cutoff_rad_per_us: f64,
        n_qubits: usize,
        stream: RngStream,
    ) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::Config(format!("noise strength must be ≥ 0, got {epsilon}")));
        }
        if !(cutoff_rad_per_us > 0.0) {
            return Err(Error::Config(format!(
                "white noise needs a positive cutoff, got {cutoff_rad_per_us}"
            )));
        }
        Ok(Self::WhiteNoise {
            epsilon,
            h_max,
            cell_us: std::f64::consts::PI / cutoff_rad_per_us,
            stream,
            cache: None,
            n_qubits,
        })
    }

    pub fn constant_offset(
        epsilon: f64,
        h_max: f64,
        n_qubits: usize,
        stream: &RngStream,
    ) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::Config(format!("noise strength must be ≥ 0, got {epsilon}")));
        }
        let mut rng = stream.rng();
        let offsets = (0..n_qubits)
            .map(|_| {
                let mut o = [0.0; 3];
                for v in &mut o {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    *v = epsilon * h_max * sign;
                }
                o
            })
            .collect();
        Ok(Self::ConstantOffset { offsets })
    }

    /// Sample-and-hold cell width (white noise only).
    pub fn hold_time_us(&self) -> Option<f64> {
        match self {
            Self::WhiteNoise { cell_us, .. } => Some(*cell_us),
            Self::ConstantOffset { .. } => None,
        }
    }

    /// Add the disturbance at time `t` onto `field`.
    pub fn apply(&mut self, t_us: f64, field: &mut [[f64; 3]]) {
        match self {
            Self::WhiteNoise { epsilon, h_max, cell_us, stream, cache, n_qubits } => {
                let cell = (t_us / *cell_us).floor().max(0.0) as u64;
                let refresh = match cache {
                    Some((c, _)) => *c != cell,
                    None => true,
                };
                if refresh {
                    let mut rng = stream.rng();
                    rng.set_word_pos(cell as u128 * NOISE_WORDS_PER_CELL);
                    let scale = *epsilon * *h_max;
                    let values = (0..*n_qubits)
                        .map(|_| {
                            let mut v = [0.0; 3];
                            for o in &mut v {
                                *o = scale * rng.random_range(-1.0..1.0);
                            }
                            v
                        })
                        .collect();
                    *cache = Some((cell, values));
                }
                let values = &cache.as_ref().expect("cache filled above").1;
                for (f, v) in field.iter_mut().zip(values.iter()) {
                    f[0] += v[0];
                    f[1] += v[1];
                    f[2] += v[2];
                }
            }
            Self::ConstantOffset { offsets } => {
                for (f, o) in field.iter_mut().zip(offsets.iter()) {
                    f[0] += o[0];
                    f[1] += o[1];
                    f[2] += o[2];
                }
            }
        }
    }
}

/// Draw symmetric multiplicative coupling errors `λ'_ij = λ_ij(1 + ε·u_ij)`
/// with `u_ij ~ U[−1, 1]`, once per run. Only the controller's model should
/// use the result; the true plant keeps the unperturbed couplings.
pub fn perturbed_couplings(
    lambda: &CouplingMatrix,
    epsilon: f64,
    stream: &RngStream,
) -> Result<CouplingMatrix> {
    if !(epsilon >= 0.0) {
        return Err(Error::Config(format!("coupling error must be ≥ 0, got {epsilon}")));
    }
    let mut rng = stream.rng();
    let rel: Vec<f64> =
        (0..lambda.n_pairs()).map(|_| epsilon * rng.random_range(-1.0..1.0)).collect();
    lambda.with_relative_errors(&rel)
}

// ---------------------------------------------------------------------------
// Controllers for the integrator.
// ---------------------------------------------------------------------------

/// Closed-loop controller: evaluates the gradient of the curvature on the
/// *model* generator (which may carry miscalibrated couplings), applies the
/// bang-bang law, adds field noise, and fires re-orientation kicks when the
/// law stalls.
pub struct FeedbackController<'a> {
    op: &'a ConcurrenceOperator,
    model: &'a LindbladGenerator,
    policy: ControlPolicy,
    noise: Option<FieldNoise>,
}

impl<'a> FeedbackController<'a> {
    pub fn new(
        op: &'a ConcurrenceOperator,
        model: &'a LindbladGenerator,
        policy: ControlPolicy,
        noise: Option<FieldNoise>,
    ) -> Self {
        Self { op, model, policy, noise }
    }

    fn raw_field(&self, rho: &CMat) -> Vec<[f64; 3]> {
        if self.policy.h_max == 0.0 {
            return vec![[0.0; 3]; self.model.system().n_qubits()];
        }
        let g = self.op.contract(rho);
        let x = self.op.gradient_x(
            rho,
            &g,
            |m| self.model.h_comm(m),
            |m| self.model.dissipate(m),
        );
        control_field(&x, self.policy.h_max, self.policy.x_tolerance)
    }
}

impl FieldController for FeedbackController<'_> {
    fn pre_step(&mut self, _t_us: f64, rho: &mut CMat) -> bool {
        let Some(kick) = self.policy.kick else {
            return false;
        };
        match kick_condition(self.op, self.model, &kick, self.policy.x_tolerance, rho) {
            Ok(true) => {
                *rho = apply_kick(&kick, rho, self.model);
                true
            }
            _ => false,
        }
    }

    fn field(&mut self, t_us: f64, rho: &CMat) -> Vec<[f64; 3]> {
        let mut h = self.raw_field(rho);
        if let Some(noise) = self.noise.as_mut() {
            noise.apply(t_us, &mut h);
        }
        h
    }
}

/// Open-loop controller holding a fixed field (optionally with noise on top).
pub struct StaticFieldController {
    field: Vec<[f64; 3]>,
    noise: Option<FieldNoise>,
}

impl StaticFieldController {
    pub fn new(field: Vec<[f64; 3]>, noise: Option<FieldNoise>) -> Self {
        Self { field, noise }
    }
}

impl FieldController for StaticFieldController {
    fn field(&mut self, t_us: f64, _rho: &CMat) -> Vec<[f64; 3]> {
        let mut h = self.field.clone();
        if let Some(noise) = self.noise.as_mut() {
            noise.apply(t_us, &mut h);
        }
        h
    }
}
