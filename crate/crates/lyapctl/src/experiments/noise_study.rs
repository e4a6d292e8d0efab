//! Field-imperfection studies: single perturbed runs against a clean
//! baseline, ensemble mixtures over imperfection realizations, and
//! strength sweeps with a curvature fit at zero.

use rayon::prelude::*;

use super::{quadratic_fit, PerturbationSpec, QuadraticFit, ScenarioConfig, Workspace};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::hilbert::{CMat, DensityMatrix};

/// Ensemble average over imperfection realizations, tracked two ways: the
/// invariant of the averaged state and the average of the per-member
/// invariants. Convexity of state mixing makes the first no larger than the
/// second at every instant.
#[derive(Clone, Debug)]
pub struct MixtureStudy {
    pub times_us: Vec<f64>,
    pub tau_of_mixture: Vec<f64>,
    pub mean_member_tau: Vec<f64>,
    pub n_realizations: usize,
}

/// Single-realization comparison plus the optional mixture study.
#[derive(Clone, Debug)]
pub struct PulseReport {
    pub baseline: Trajectory,
    pub perturbed: Trajectory,
    pub peak_baseline: f64,
    pub peak_perturbed: f64,
    /// `1 − peak_perturbed / peak_baseline`.
    pub peak_reduction: f64,
    pub mixture: Option<MixtureStudy>,
}

/// Compare the configured imperfection against a clean run of the same
/// scenario; with `n_realizations > 1` also build the realization mixture.
pub fn run_pulse_robustness(config: &ScenarioConfig) -> Result<PulseReport> {
    let ws = Workspace::new(config.clone())?;
    let rho0 = ws.initial_state()?.to_density();

    let mut clean = config.clone();
    clean.perturbation = PerturbationSpec::None;
    let clean_ws = Workspace::new(clean)?;
    let baseline = clean_ws.run_realization(0, &rho0, false)?;
    let perturbed = ws.run_realization(0, &rho0, false)?;

    let peak_baseline = baseline.max_tau().1;
    let peak_perturbed = perturbed.max_tau().1;
    let peak_reduction =
        if peak_baseline > 0.0 { 1.0 - peak_perturbed / peak_baseline } else { 0.0 };

    let mixture = if config.n_realizations > 1
        && !matches!(config.perturbation, PerturbationSpec::None)
    {
        Some(mixture_study(&ws, &rho0)?)
    } else {
        None
    };

    Ok(PulseReport { baseline, perturbed, peak_baseline, peak_perturbed, peak_reduction, mixture })
}

/// Average the ensemble of perturbed-run states point by point and evaluate
/// the invariant of the averaged state. Members are accumulated strictly in
/// realization-index order, so the reduction is bitwise reproducible.
fn mixture_study(ws: &Workspace, rho0: &DensityMatrix) -> Result<MixtureStudy> {
    let m = ws.config.n_realizations;
    let mut acc: Vec<CMat> = Vec::new();
    let mut mean_member_tau: Vec<f64> = Vec::new();
    let mut times_us: Vec<f64> = Vec::new();
    for r in 0..m as u64 {
        let traj = ws.run_realization(r, rho0, true)?;
        if traj.snapshots.len() != traj.times_us.len() {
            return Err(Error::Config("mixture study needs snapshots at every record".into()));
        }
        if acc.is_empty() {
            times_us = traj.times_us.clone();
            acc = traj.snapshots.clone();
            mean_member_tau = traj.tau.clone();
        } else {
            for (a, s) in acc.iter_mut().zip(traj.snapshots.iter()) {
                *a += s;
            }
            for (t, v) in mean_member_tau.iter_mut().zip(traj.tau.iter()) {
                *t += v;
            }
        }
    }
    let inv = 1.0 / m as f64;
    let mut tau_of_mixture = Vec::with_capacity(acc.len());
    for a in &acc {
        let avg = a.mapv(|z| z * inv);
        tau_of_mixture.push(ws.op.tau(&avg)?);
    }
    for t in mean_member_tau.iter_mut() {
        *t *= inv;
    }
    Ok(MixtureStudy { times_us, tau_of_mixture, mean_member_tau, n_realizations: m })
}

/// One point of a strength sweep.
#[derive(Clone, Copy, Debug)]
pub struct SweepPoint {
    /// Swept abscissa: imperfection strength ε, or field amplitude for
    /// amplitude sweeps.
    pub x: f64,
    /// Ensemble mean of the late-window time-averaged invariant.
    pub tau_bar: f64,
    /// Standard error of that mean (0 for deterministic points).
    pub tau_bar_stderr: f64,
}

/// Late observation window for sweep averages: `[0.3, 1] µs` for horizons
/// that reach it, proportionally scaled for shorter test horizons.
pub fn sweep_window_us(t_end_us: f64) -> (f64, f64) {
    if t_end_us >= 0.4 {
        (0.3, t_end_us.min(1.0))
    } else {
        (0.3 * t_end_us, t_end_us)
    }
}

fn sweep_point(config: &ScenarioConfig, epsilon: f64) -> Result<SweepPoint> {
    let mut cfg = config.clone();
    cfg.perturbation = config.perturbation.with_epsilon(epsilon);
    let ws = Workspace::new(cfg)?;
    let rho0 = ws.initial_state()?.to_density();
    let (from, to) = sweep_window_us(config.t_end_us);
    // Every realization of a zero-strength imperfection is the same run.
    let m = if epsilon == 0.0 { 1 } else { ws.config.n_realizations };
    let taus: Vec<f64> = (0..m as u64)
        .into_par_iter()
        .map(|r| ws.run_realization(r, &rho0, false).map(|t| t.time_mean_tau(from, to)))
        .collect::<Result<_>>()?;
    let mean = taus.iter().sum::<f64>() / m as f64;
    let stderr = if m > 1 {
        let var = taus.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        0.0
    };
    Ok(SweepPoint { x: epsilon, tau_bar: mean, tau_bar_stderr: stderr })
}

/// Sweep the imperfection strength over the configured grid; each point
/// averages `n_realizations` independent realizations.
pub fn sweep_strength(config: &ScenarioConfig) -> Result<Vec<SweepPoint>> {
    let grid = config.epsilon_grid.clone().ok_or_else(|| {
        Error::Config("a strength sweep needs epsilon_grid in the config".into())
    })?;
    if grid.is_empty() {
        return Err(Error::Config("epsilon_grid must not be empty".into()));
    }
    if matches!(config.perturbation, PerturbationSpec::None) && grid.iter().any(|e| *e != 0.0) {
        return Err(Error::Config(
            "a strength sweep needs a perturbation kind to scale (got `none`)".into(),
        ));
    }
    grid.iter().map(|eps| sweep_point(config, *eps)).collect()
}

/// Sweep the field-amplitude cap over the configured grid.
pub fn sweep_amplitude(config: &ScenarioConfig) -> Result<Vec<SweepPoint>> {
    let grid = config.h_max_grid.clone().ok_or_else(|| {
        Error::Config("an amplitude sweep needs h_max_grid in the config".into())
    })?;
    if grid.is_empty() {
        return Err(Error::Config("h_max_grid must not be empty".into()));
    }
    let (from, to) = sweep_window_us(config.t_end_us);
    grid.iter()
        .map(|h| {
            let mut cfg = config.clone();
            cfg.h_max_rad_per_us = *h;
            let ws = Workspace::new(cfg)?;
            let rho0 = ws.initial_state()?.to_density();
            let m = if matches!(config.perturbation, PerturbationSpec::None) {
                1
            } else {
                config.n_realizations
            };
            let taus: Vec<f64> = (0..m as u64)
                .into_par_iter()
                .map(|r| ws.run_realization(r, &rho0, false).map(|t| t.time_mean_tau(from, to)))
                .collect::<Result<_>>()?;
            let mean = taus.iter().sum::<f64>() / m as f64;
            let stderr = if m > 1 {
                let var =
                    taus.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (m - 1) as f64;
                (var / m as f64).sqrt()
            } else {
                0.0
            };
            Ok(SweepPoint { x: *h, tau_bar: mean, tau_bar_stderr: stderr })
        })
        .collect()
}

/// Quadratic fit `τ̄(x) = a + b·x + c·x²` through sweep points, with the
/// standard error of `b` propagated from the per-point uncertainties.
pub fn sweep_curvature(points: &[SweepPoint]) -> Result<QuadraticFit> {
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.tau_bar).collect();
    let sigmas: Vec<f64> = points.iter().map(|p| p.tau_bar_stderr).collect();
    quadratic_fit(&xs, &ys, &sigmas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::parse_config;

    fn small_config(perturbation: &str) -> ScenarioConfig {
        parse_config(&format!(
            r#"{{
                "perturbation": {perturbation},
                "t_end_us": 0.1,
                "dt_us": 2e-4,
                "record_every": 25,
                "n_realizations": 4,
                "seed": 5
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn mixing_never_raises_the_invariant_above_the_member_mean() {
        let cfg = small_config(r#"{"white_noise": {"epsilon": 0.5}}"#);
        let report = run_pulse_robustness(&cfg).unwrap();
        let mix = report.mixture.expect("n_realizations > 1 builds a mixture");
        assert_eq!(mix.n_realizations, 4);
        assert_eq!(mix.times_us.len(), mix.tau_of_mixture.len());
        for (i, (m, s)) in
            mix.tau_of_mixture.iter().zip(mix.mean_member_tau.iter()).enumerate()
        {
            assert!(m <= &(s + 1e-9), "point {i}: mixture {m} above member mean {s}");
        }
        // The realizations genuinely differ, so the mixture ends below the mean.
        let last = mix.times_us.len() - 1;
        assert!(
            mix.mean_member_tau[last] - mix.tau_of_mixture[last] > 1e-9,
            "mixture should have lost coherence: {} vs {}",
            mix.tau_of_mixture[last],
            mix.mean_member_tau[last]
        );
    }

    #[test]
    fn a_zero_strength_perturbation_reproduces_the_baseline_bitwise() {
        let mut cfg = small_config(r#"{"white_noise": {"epsilon": 0.0}}"#);
        cfg.n_realizations = 1;
        let report = run_pulse_robustness(&cfg).unwrap();
        assert_eq!(report.baseline.tau, report.perturbed.tau);
        assert_eq!(report.peak_reduction, 0.0);
        assert!(report.mixture.is_none());
    }

    #[test]
    fn strength_sweeps_are_deterministic_and_well_shaped() {
        let mut cfg = small_config(r#"{"constant_offset": {"epsilon": 0.1}}"#);
        cfg.epsilon_grid = Some(vec![0.0, 0.3]);
        let a = sweep_strength(&cfg).unwrap();
        let b = sweep_strength(&cfg).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].x, 0.0);
        assert_eq!(a[0].tau_bar_stderr, 0.0);
        assert!(a[1].tau_bar_stderr >= 0.0);
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.tau_bar, q.tau_bar);
            assert_eq!(p.tau_bar_stderr, q.tau_bar_stderr);
        }
        // Degrading the field must not *help* on average in this scenario.
        assert!(a[1].tau_bar <= a[0].tau_bar + 0.05);
    }

    #[test]
    fn sweeps_demand_a_grid_and_a_kind() {
        let cfg = small_config(r#""none""#);
        assert!(sweep_strength(&cfg).is_err());
        let mut cfg = small_config(r#""none""#);
        cfg.epsilon_grid = Some(vec![0.0, 0.1]);
        assert!(sweep_strength(&cfg).is_err());
        let mut cfg = small_config(r#"{"white_noise": {"epsilon": 0.1}}"#);
        cfg.epsilon_grid = Some(vec![]);
        assert!(sweep_strength(&cfg).is_err());
    }

    #[test]
    fn amplitude_sweeps_cover_the_grid() {
        let mut cfg = small_config(r#""none""#);
        cfg.h_max_grid = Some(vec![0.0, 17.0]);
        let pts = sweep_amplitude(&cfg).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].x, 0.0);
        assert_eq!(pts[1].x, 17.0);
        // Control must do better than no control over the late window.
        assert!(pts[1].tau_bar > pts[0].tau_bar);
    }

    #[test]
    fn curvature_fit_consumes_sweep_points() {
        let pts: Vec<SweepPoint> = [0.0, 0.05, 0.1, 0.15]
            .iter()
            .map(|e| SweepPoint {
                x: *e,
                tau_bar: 0.9 - 1.2 * e * e,
                tau_bar_stderr: 0.001,
            })
            .collect();
        let fit = sweep_curvature(&pts).unwrap();
        assert!(fit.slope.abs() < 1e-9, "slope {}", fit.slope);
        assert!((fit.curvature + 1.2).abs() < 1e-6);
        assert!(fit.slope_sigma > 0.0);
    }
}
