//! Local-unitary-maximized overlaps and the entanglement-class tracker.
//!
//! `lu_fidelity` reports `max_U |⟨φ| U₁⊗…⊗U_N |ψ⟩|` over independent
//! single-qubit unitaries. Tracking that quantity against a ladder of
//! reference states (product → one entangled pair → two pairs → maximal)
//! shows in which order a trajectory climbs the entanglement classes.

use ndarray::Array1;
use num_complex::Complex64 as C64;

use super::{maximal_state, ScenarioConfig, Workspace, STREAM_OPTIMIZER};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::hilbert::{
    dominant_eigenvector, haar_local_unitaries, su2_rotation, CVec, Mat2, PureState,
    QubitSystem, RngStream,
};

const ZERO: C64 = C64::new(0.0, 0.0);

/// `(|00…0⟩ + |11·0…0⟩)/√2`: one entangled pair on the first two qubits,
/// the rest in `|0⟩`.
pub fn pair_state(sys: QubitSystem) -> Result<PureState> {
    let n = sys.n_qubits();
    if n < 2 {
        return Err(Error::DimensionMismatch { context: "pair state", expected: 2, got: n });
    }
    let mut amps = Array1::from_elem(sys.dim(), ZERO);
    let x = std::f64::consts::FRAC_1_SQRT_2;
    amps[0] = C64::new(x, 0.0);
    amps[0b11 << (n - 2)] = C64::new(x, 0.0);
    PureState::new(amps)
}

/// `(|0000⟩ + |0011⟩ + |1100⟩ + |1111⟩)/2`: two entangled pairs, (1,2)
/// and (3,4). Four qubits only.
pub fn double_pair_state(sys: QubitSystem) -> Result<PureState> {
    if sys.n_qubits() != 4 {
        return Err(Error::DimensionMismatch {
            context: "double pair state",
            expected: 4,
            got: sys.n_qubits(),
        });
    }
    let mut amps = Array1::from_elem(16, ZERO);
    for idx in [0usize, 3, 12, 15] {
        amps[idx] = C64::new(0.5, 0.0);
    }
    PureState::new(amps)
}

fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
        }
    }
    out
}

/// `Rz(a)·Ry(b)·Rz(c)` — three angles cover every SU(2) element up to a
/// global phase, which the modulus of the overlap ignores.
fn zyz(a: f64, b: f64, c: f64) -> Mat2 {
    let rz_a = su2_rotation([0.0, 0.0, 1.0], a);
    let ry_b = su2_rotation([0.0, 1.0, 0.0], b);
    let rz_c = su2_rotation([0.0, 0.0, 1.0], c);
    mat2_mul(&rz_a, &mat2_mul(&ry_b, &rz_c))
}

/// Apply one unitary per qubit to a pure state's amplitude vector.
fn apply_locals(sys: QubitSystem, us: &[Mat2], amps: &CVec) -> CVec {
    let n = sys.n_qubits();
    let dim = sys.dim();
    let mut v = amps.clone();
    for (site, u) in us.iter().enumerate() {
        let mask = 1usize << (n - 1 - site);
        for a in 0..dim {
            if a & mask == 0 {
                let b = a | mask;
                let (va, vb) = (v[a], v[b]);
                v[a] = u[0][0] * va + u[0][1] * vb;
                v[b] = u[1][0] * va + u[1][1] * vb;
            }
        }
    }
    v
}

fn overlap_mag(phi: &CVec, transformed_psi: &CVec) -> f64 {
    let mut acc = ZERO;
    for (p, q) in phi.iter().zip(transformed_psi.iter()) {
        acc += p.conj() * q;
    }
    acc.norm()
}

fn eval_angles(sys: QubitSystem, phi: &CVec, psi: &CVec, angles: &[f64]) -> f64 {
    let us: Vec<Mat2> =
        angles.chunks_exact(3).map(|c| zyz(c[0], c[1], c[2])).collect();
    overlap_mag(phi, &apply_locals(sys, &us, psi))
}

/// Coordinate pattern search from one starting point; returns the refined
/// objective value and angles.
fn pattern_search(sys: QubitSystem, phi: &CVec, psi: &CVec, start: Vec<f64>) -> (f64, Vec<f64>) {
    let mut x = start;
    let mut f = eval_angles(sys, phi, psi, &x);
    let mut step = 0.6f64;
    while step > 5e-4 {
        let mut improved = false;
        for i in 0..x.len() {
            for s in [step, -step] {
                let old = x[i];
                x[i] = old + s;
                let fy = eval_angles(sys, phi, psi, &x);
                if fy > f + 1e-15 {
                    f = fy;
                    improved = true;
                    break;
                }
                x[i] = old;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (f, x)
}

/// Best local-unitary overlap `max_U |⟨φ|U₁⊗…⊗U_N|ψ⟩|` over at least 32
/// random multi-starts (the requested count is raised to that floor).
pub fn lu_fidelity(
    phi: &PureState,
    psi: &PureState,
    n_starts: usize,
    stream: &RngStream,
) -> Result<f64> {
    Ok(lu_fidelity_seeded(phi, psi, n_starts.max(32), stream, None)?.0)
}

/// Multi-start driver with an optional warm-start angle vector (used when
/// tracking a slowly moving state). Returns `(value, best_angles)`.
pub fn lu_fidelity_seeded(
    phi: &PureState,
    psi: &PureState,
    n_starts: usize,
    stream: &RngStream,
    warm: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let (pa, qa) = (phi.amps(), psi.amps());
    if pa.len() != qa.len() {
        return Err(Error::DimensionMismatch {
            context: "overlap states",
            expected: pa.len(),
            got: qa.len(),
        });
    }
    let n = (pa.len().trailing_zeros()) as usize;
    let sys = QubitSystem::new(n)?;
    let dof = 3 * n;
    let mut rng = stream.rng();
    let mut best = (f64::NEG_INFINITY, vec![0.0; dof]);
    let consider = |cand: (f64, Vec<f64>), best: &mut (f64, Vec<f64>)| {
        if cand.0 > best.0 {
            *best = cand;
        }
    };
    if let Some(w) = warm {
        consider(pattern_search(sys, pa, qa, w.to_vec()), &mut best);
    }
    consider(pattern_search(sys, pa, qa, vec![0.0; dof]), &mut best);
    for _ in 0..n_starts.max(1) {
        let start: Vec<f64> = (0..dof)
            .map(|_| rand::Rng::random_range(&mut rng, -std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        consider(pattern_search(sys, pa, qa, start), &mut best);
    }
    Ok(best)
}

/// Independent maximizer used to cross-check the pattern search: alternating
/// per-qubit polar-factor updates. With all other qubits fixed the overlap is
/// `Tr(U_k·A)` for a 2×2 matrix `A`, and `U_k = (A†A)^{−1/2}A†` attains
/// `σ₁+σ₂ = max_U |Tr(U_k·A)|`, so every sweep is monotone.
pub fn lu_fidelity_alternating(
    phi: &PureState,
    psi: &PureState,
    n_inits: usize,
    stream: &RngStream,
) -> Result<f64> {
    let (pa, qa) = (phi.amps(), psi.amps());
    let n = (pa.len().trailing_zeros()) as usize;
    let sys = QubitSystem::new(n)?;
    let dim = sys.dim();
    let mut rng = stream.rng();
    let mut best = 0.0f64;
    for init in 0..n_inits.max(1) {
        let mut us: Vec<Mat2> = if init == 0 {
            vec![[[C64::new(1.0, 0.0), ZERO], [ZERO, C64::new(1.0, 0.0)]]; n]
        } else {
            haar_local_unitaries(sys, &mut rng)
        };
        let mut f_prev = 0.0;
        for _sweep in 0..200 {
            for site in 0..n {
                // ψ with every *other* qubit already rotated.
                let mut others = us.clone();
                others[site] = [[C64::new(1.0, 0.0), ZERO], [ZERO, C64::new(1.0, 0.0)]];
                let tilde = apply_locals(sys, &others, qa);
                // A[r][c] = Σ_{a: bit=r} φ*[a]·ψ̃[a with bit→c]; f = Tr(U·Aᵀ)…
                // assembled directly as the matrix M with f = Σ U[r][c]·M[r][c].
                let mask = 1usize << (n - 1 - site);
                let mut m = [[ZERO; 2]; 2];
                for a in 0..dim {
                    let r = usize::from(a & mask != 0);
                    for c in 0..2 {
                        let b = if c == 0 { a & !mask } else { a | mask };
                        m[r][c] += pa[a].conj() * tilde[b];
                    }
                }
                // f = Σ U[r][c] M[r][c] = Tr(U·Mᵀ); maximize via polar of Mᵀ.
                let a_mat = [[m[0][0], m[1][0]], [m[0][1], m[1][1]]];
                us[site] = polar_maximizer(&a_mat);
            }
            let f = overlap_mag(pa, &apply_locals(sys, &us, qa));
            if (f - f_prev).abs() < 1e-13 {
                f_prev = f;
                break;
            }
            f_prev = f;
        }
        best = best.max(f_prev);
    }
    Ok(best)
}

/// `U = (A†A)^{−1/2}·A†`, the unitary maximizing `Re Tr(U·A)`; a tiny ridge
/// keeps the inverse square root defined when `A` is singular.
fn polar_maximizer(a: &Mat2) -> Mat2 {
    let adj = [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]];
    let mut h = mat2_mul(&adj, a);
    let ridge = 1e-30 + 1e-14 * (h[0][0].re + h[1][1].re).abs();
    h[0][0] += C64::new(ridge, 0.0);
    h[1][1] += C64::new(ridge, 0.0);
    // Inverse square root of a 2×2 positive matrix without an explicit
    // eigenbasis: H^{−1/2} = α·I + β·H with α + β·μᵢ = μᵢ^{−1/2}.
    let tr = h[0][0].re + h[1][1].re;
    let det = (h[0][0] * h[1][1] - h[0][1] * h[1][0]).re;
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let (mu1, mu2) = (0.5 * tr + disc, (0.5 * tr - disc).max(1e-300));
    let (s1, s2) = (mu1.powf(-0.5), mu2.powf(-0.5));
    let (alpha, beta) = if (mu1 - mu2).abs() < 1e-14 * mu1 {
        (s1, 0.0)
    } else {
        let beta = (s1 - s2) / (mu1 - mu2);
        (s1 - beta * mu1, beta)
    };
    let mut inv_sqrt = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            inv_sqrt[r][c] = h[r][c] * beta;
        }
        inv_sqrt[r][r] += C64::new(alpha, 0.0);
    }
    mat2_mul(&inv_sqrt, &adj)
}

/// Overlap curves of one trajectory against the four reference states.
/// Columns map to the emitted file as `F_i` (initial), `F_2` (one pair),
/// `F_3` (two pairs), `F_f` (maximal state).
#[derive(Clone, Debug)]
pub struct FidelityTrack {
    pub times_us: Vec<f64>,
    pub initial: Vec<f64>,
    pub one_pair: Vec<f64>,
    pub two_pairs: Vec<f64>,
    pub maximal: Vec<f64>,
}

impl FidelityTrack {
    /// Time of the maximum of one column.
    pub fn argmax(series: &[f64], times: &[f64]) -> (f64, f64) {
        let mut best = (times[0], series[0]);
        for (t, v) in times.iter().zip(series) {
            if *v > best.1 {
                best = (*t, *v);
            }
        }
        best
    }
}

/// Run the configured closed-loop scenario and track the overlap ladder at
/// every recorded point. Four qubits only (the reference ladder is).
pub fn run_fidelity_track(config: &ScenarioConfig) -> Result<(Trajectory, FidelityTrack)> {
    let ws = Workspace::new(config.clone())?;
    if ws.sys.n_qubits() != 4 {
        return Err(Error::Config(format!(
            "the overlap ladder is defined for 4 qubits, config has {}",
            ws.sys.n_qubits()
        )));
    }
    let phi_i = ws.initial_state()?;
    let traj = ws.run_realization(0, &phi_i.to_density(), true)?;
    let track = track_snapshots(&ws, &phi_i, &traj)?;
    Ok((traj, track))
}

fn track_snapshots(
    ws: &Workspace,
    phi_i: &PureState,
    traj: &Trajectory,
) -> Result<FidelityTrack> {
    let targets: [(usize, PureState); 4] = [
        (0, phi_i.clone()),
        (1, pair_state(ws.sys)?),
        (2, double_pair_state(ws.sys)?),
        (3, maximal_state(ws.sys)?),
    ];
    let n_pts = traj.snapshots.len();
    if n_pts != traj.times_us.len() {
        return Err(Error::Config(
            "fidelity tracking needs snapshots at every recorded point".into(),
        ));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n_pts); 4];
    let mut warm: Vec<Option<Vec<f64>>> = vec![None; 4];
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let psi = PureState::new(dominant_eigenvector(snap))?;
        for (j, target) in &targets {
            let stream = ws.seeds.substream(STREAM_OPTIMIZER, (k * 4 + j) as u64);
            let (f, angles) = lu_fidelity_seeded(
                target,
                &psi,
                ws.config.lu_starts.max(32),
                &stream,
                warm[*j].as_deref(),
            )?;
            warm[*j] = Some(angles);
            columns[*j].push(f);
        }
    }
    let mut it = columns.into_iter();
    Ok(FidelityTrack {
        times_us: traj.times_us.clone(),
        initial: it.next().unwrap(),
        one_pair: it.next().unwrap(),
        two_pairs: it.next().unwrap(),
        maximal: it.next().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::conjugate_locals;

    fn random_state(sys: QubitSystem, stream: &RngStream) -> PureState {
        let mut rng = stream.rng();
        let amps: CVec = Array1::from_iter((0..sys.dim()).map(|_| {
            let re: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            let im: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            C64::new(re, im)
        }));
        PureState::renormalized(amps).unwrap()
    }

    #[test]
    fn identical_states_have_unit_overlap() {
        let sys = QubitSystem::new(4).unwrap();
        let stream = RngStream::new(11);
        let psi = random_state(sys, &stream.substream(0, 0));
        let f = lu_fidelity(&psi, &psi, 32, &stream.substream(0, 1)).unwrap();
        assert!((f - 1.0).abs() <= 1e-6, "got {f}");
    }

    #[test]
    fn local_rotations_cannot_hide_a_state_from_its_orbit() {
        let sys = QubitSystem::new(4).unwrap();
        let stream = RngStream::new(12);
        let psi = random_state(sys, &stream.substream(0, 0));
        // Rotate through a random local unitary...
        let us = haar_local_unitaries(sys, &mut stream.substream(0, 1).rng());
        let rho = psi.to_density();
        let rotated = conjugate_locals(&us, rho.matrix(), sys);
        let chi = PureState::new(dominant_eigenvector(&rotated)).unwrap();
        // ...and the maximized overlap still reaches one.
        let f = lu_fidelity(&psi, &chi, 32, &stream.substream(0, 2)).unwrap();
        assert!((f - 1.0).abs() <= 1e-3, "got {f}");
    }

    #[test]
    fn best_product_overlap_with_the_maximal_state_is_one_half() {
        let sys = QubitSystem::new(4).unwrap();
        let stream = RngStream::new(13);
        let phi = maximal_state(sys).unwrap();
        let zero = PureState::basis_state(sys, 0);
        let f = lu_fidelity(&phi, &zero, 48, &stream).unwrap();
        assert!((f - 0.5).abs() <= 1e-3, "got {f}");
    }

    #[test]
    fn bell_pair_against_a_product_gives_inverse_sqrt_two() {
        let sys = QubitSystem::new(2).unwrap();
        let stream = RngStream::new(14);
        let bell = pair_state(sys).unwrap();
        let zero = PureState::basis_state(sys, 0);
        let f = lu_fidelity(&bell, &zero, 32, &stream).unwrap();
        assert!((f - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-3, "got {f}");
    }

    #[test]
    fn pattern_search_matches_the_alternating_maximizer() {
        let sys = QubitSystem::new(4).unwrap();
        let stream = RngStream::new(15);
        for k in 0..4 {
            let phi = random_state(sys, &stream.substream(1, k));
            let psi = random_state(sys, &stream.substream(2, k));
            let a = lu_fidelity(&phi, &psi, 32, &stream.substream(3, k)).unwrap();
            let b = lu_fidelity_alternating(&phi, &psi, 24, &stream.substream(4, k)).unwrap();
            assert!((a - b).abs() <= 1e-3, "pair {k}: search {a} vs alternating {b}");
        }
    }

    #[test]
    fn reference_ladder_has_the_expected_invariants() {
        let sys = QubitSystem::new(4).unwrap();
        let op = crate::entanglement::ConcurrenceOperator::build(sys).unwrap();
        let tau =
            |s: &PureState| op.tau(s.to_density().matrix()).unwrap();
        let pair = pair_state(sys).unwrap();
        assert!((tau(&pair) - 0.5).abs() < 1e-12, "one pair: {}", tau(&pair));
        let double = double_pair_state(sys).unwrap();
        assert!(tau(&double) > 0.5, "two pairs: {}", tau(&double));
        let max = maximal_state(sys).unwrap();
        assert!((tau(&max) - 1.0).abs() < 1e-12);
        // Amplitude layout sanity for the pair states.
        assert!((pair.amps()[12].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((double.amps()[3].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn warm_started_tracking_matches_cold_optimization() {
        let sys = QubitSystem::new(4).unwrap();
        let stream = RngStream::new(16);
        let phi = maximal_state(sys).unwrap();
        let psi = random_state(sys, &stream.substream(0, 0));
        let (cold, angles) =
            lu_fidelity_seeded(&phi, &psi, 32, &stream.substream(0, 1), None).unwrap();
        let (warm, _) =
            lu_fidelity_seeded(&phi, &psi, 32, &stream.substream(0, 2), Some(&angles)).unwrap();
        assert!((cold - warm).abs() <= 1e-3, "cold {cold} vs warm {warm}");
    }
}
