//! Multipartite entanglement functional and its control derivatives.
//!
//! The functional is a quadratic form on density matrices,
//! `tau(ρ) = Tr[(ρ ⊗ ρ) A]`, built from a real symmetric kernel `A` on the
//! duplicated Hilbert space. For pure states `tau` equals the squared
//! multipartite concurrence (for two qubits, the squared Wootters
//! concurrence); for mixed states it is a computable lower bound of that
//! quantity. The kernel decomposes into three tensor-structured terms
//! (identity, copy swap, and a product of per-qubit pair symmetrizers), so it
//! is stored sparsely and every contraction costs O(nnz) with nnz ≤ 6^N.
//!
//! All time derivatives below treat the generator as frozen at the evaluation
//! instant: `tau_ddot` answers "what curvature does the *current* generator
//! produce", which is the quantity a time-local feedback law optimizes.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{
    commutator, duplicate_pairing_permutation, pauli_trace_local, Axis, CMat, PureState,
    QubitSystem,
};

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Relative tolerance for imaginary residues of quantities that must be real.
const IM_TOL: f64 = 1e-9;

/// One stored kernel entry, pre-arranged for the contraction
/// `G[out] += w · M[inp]` (both indices row-major over d×d matrices).
#[derive(Clone, Copy, Debug)]
struct Triple {
    out: u32,
    inp: u32,
    w: f64,
}

/// Per-qubit gradient of the entanglement curvature with respect to the
/// three local field components. Ordering follows [`Axis::ALL`].
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGradient {
    per_qubit: Vec<[f64; 3]>,
}

impl ControlGradient {
    pub fn n_qubits(&self) -> usize {
        self.per_qubit.len()
    }

    pub fn component(&self, site: usize, axis: Axis) -> f64 {
        self.per_qubit[site][axis as usize]
    }

    pub fn site(&self, site: usize) -> [f64; 3] {
        self.per_qubit[site]
    }

    /// Euclidean norm of one qubit's three-component gradient.
    pub fn site_norm(&self, site: usize) -> f64 {
        let [x, y, z] = self.per_qubit[site];
        (x * x + y * y + z * z).sqrt()
    }

    /// Euclidean norm over all qubits and axes.
    pub fn global_norm(&self) -> f64 {
        self.per_qubit
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_null(&self, tol: f64) -> bool {
        self.global_norm() <= tol
    }

    /// Assemble a gradient from raw per-qubit `(x, y, z)` components, e.g.
    /// to feed a hand-built direction through the control law.
    pub fn from_parts(per_qubit: Vec<[f64; 3]>) -> Self {
        Self { per_qubit }
    }
}

/// Sparse kernel of the entanglement functional for a fixed register size.
#[derive(Clone, Debug)]
pub struct ConcurrenceOperator {
    sys: QubitSystem,
    /// Full kernel `A` (bound for mixed states, exact for pure).
    triples: Vec<Triple>,
    /// Symmetric-sector part alone; on pure states its expectation equals
    /// the squared concurrence and is guaranteed nonnegative up to roundoff.
    pure_triples: Vec<Triple>,
}

impl ConcurrenceOperator {
    pub fn build(sys: QubitSystem) -> Result<Self> {
        let d = sys.dim() as f64;
        // Kernel = α·(I⊗I) + β·SWAP + γ·(⊗ᵢ P₊⁽ⁱ⁾) in the duplicated space:
        //   symmetric part  = pref·(½I + ½S − ⊗P₊), pref = 8/√d,
        //   antisym penalty = pref·(1 − 2/d)·(I − S)/2, subtracted.
        // Both terms share the single overall normalization `pref` (which
        // fixes τ = 1 on the maximally entangled state), so the mixed-state
        // bound is the same rescaled functional as the pure-state one.
        let pref = 8.0 / d.sqrt();
        let penalty = pref * (1.0 - 2.0 / d);
        let triples = assemble(
            sys,
            0.5 * pref - 0.5 * penalty,
            0.5 * pref + 0.5 * penalty,
            -pref,
        );
        let pure_triples = assemble(sys, 0.5 * pref, 0.5 * pref, -pref);
        Ok(Self { sys, triples, pure_triples })
    }

    pub fn system(&self) -> QubitSystem {
        self.sys
    }

    pub fn nnz(&self) -> usize {
        self.triples.len()
    }

    /// Contraction `G_M[j,i] = Σ_{k,l} A[(j,l),(i,k)] · M[k,l]`.
    ///
    /// `G_M` is Hermitian whenever `M` is, and the functional and all its
    /// bilinear forms reduce to `Tr(P · G_Q)`.
    pub fn contract(&self, m: &CMat) -> CMat {
        contract_with(&self.triples, self.sys.dim(), m)
    }

    /// Same contraction against the symmetric-sector kernel only.
    pub fn contract_pure_kernel(&self, m: &CMat) -> CMat {
        contract_with(&self.pure_triples, self.sys.dim(), m)
    }

    /// Bilinear form `T(P, Q) = Tr[(P ⊗ Q) A] = Tr(P · G_Q)`; symmetric in
    /// its arguments and complex-bilinear.
    pub fn pair_trace(&self, p: &CMat, g_q: &CMat) -> C64 {
        let d = self.sys.dim();
        let ps = p.as_slice().expect("contiguous matrix");
        let gs = g_q.as_slice().expect("contiguous matrix");
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += ps[i * d + j] * gs[j * d + i];
            }
        }
        acc
    }

    /// Entanglement functional `tau(ρ)`.
    pub fn tau(&self, rho: &CMat) -> Result<f64> {
        let g = self.contract(rho);
        self.tau_with(rho, &g)
    }

    /// `tau` reusing a precomputed contraction `g_rho = contract(ρ)`.
    pub fn tau_with(&self, rho: &CMat, g_rho: &CMat) -> Result<f64> {
        real_part(self.pair_trace(rho, g_rho), "tau")
    }

    /// Instantaneous rate `d tau/dt = 2·T(ρ̇, ρ)` for a given `ρ̇`.
    pub fn tau_dot(&self, rho: &CMat, drho: &CMat) -> Result<f64> {
        let g = self.contract(rho);
        self.tau_dot_with(drho, &g)
    }

    pub fn tau_dot_with(&self, drho: &CMat, g_rho: &CMat) -> Result<f64> {
        Ok(2.0 * real_part(self.pair_trace(drho, g_rho), "tau_dot")?)
    }

    /// Curvature `d²tau/dt² = 2·[T(ρ̈, ρ) + T(ρ̇, ρ̇)]` under the frozen
    /// generator `rhs` (so `ρ̈ = rhs(rhs(ρ))`).
    pub fn tau_ddot(&self, rho: &CMat, rhs: impl Fn(&CMat) -> CMat) -> Result<f64> {
        let drho = rhs(rho);
        let ddrho = rhs(&drho);
        let g_rho = self.contract(rho);
        let g_drho = self.contract(&drho);
        let val = self.pair_trace(&ddrho, &g_rho) + self.pair_trace(&drho, &g_drho);
        Ok(2.0 * real_part(val, "tau_ddot")?)
    }

    /// Rate gradient along one Hamiltonian direction: `∂(tau̇)/∂h` for the
    /// perturbation `H → H + h·basis`. Identically zero when `basis` acts on
    /// a single qubit — the reason the feedback law works at second order.
    pub fn gradient_y(&self, rho: &CMat, basis: &CMat) -> Result<f64> {
        let g = self.contract(rho);
        let m = commutator(basis, rho).mapv(|z| z * -I);
        Ok(2.0 * real_part(self.pair_trace(&m, &g), "gradient_y")?)
    }

    /// Curvature gradient: `X[i][ξ] = ∂(taü)/∂h_{iξ}` at the current state,
    /// where `h_{iξ}` multiplies the Pauli `ξ` on qubit `i` in the
    /// Hamiltonian. `taü` is exactly affine in the local field, so these
    /// twelve numbers determine the optimal field direction.
    ///
    /// `g_rho` must be `contract(ρ)`. `h_comm` must return `[H₀, m]` for the
    /// drift Hamiltonian and `dissipate` must apply the (self-adjoint)
    /// dissipator; both are plain matrix maps so callers can use fast paths.
    pub fn gradient_x(
        &self,
        rho: &CMat,
        g_rho: &CMat,
        h_comm: impl Fn(&CMat) -> CMat,
        dissipate: impl Fn(&CMat) -> CMat,
    ) -> ControlGradient {
        let n = self.sys.n_qubits();
        let c_h = h_comm(rho); // [H₀, ρ]
        let d_rho = dissipate(rho); // D(ρ)
        let g_ch = self.contract(&c_h);
        let g_dr = self.contract(&d_rho);
        let d_grho = dissipate(g_rho);
        let hg = h_comm(g_rho); // [H₀, G_ρ]

        // W = [G_ρ, H₀] + i·D(G_ρ) + 2·G_{[H₀,ρ]} + 2i·G_{D(ρ)}
        let mut w = hg.mapv(|z| -z);
        w.zip_mut_with(&d_grho, |a, b| *a += I * b);
        w.zip_mut_with(&g_ch, |a, b| *a += 2.0 * b);
        w.zip_mut_with(&g_dr, |a, b| *a += C64::new(0.0, 2.0) * b);

        // K = [ρ, W] + [[H₀,ρ] + i·D(ρ), G_ρ];  X_{iξ} = −2·Re Tr(σ_ξ⁽ⁱ⁾ K)
        let mut m2 = c_h;
        m2.zip_mut_with(&d_rho, |a, b| *a += I * b);
        let k = commutator(rho, &w) + commutator(&m2, g_rho);

        let per_qubit = (0..n)
            .map(|site| {
                let mut comps = [0.0; 3];
                for ax in Axis::ALL {
                    comps[ax as usize] =
                        -2.0 * pauli_trace_local(ax, site, &k, self.sys).re;
                }
                comps
            })
            .collect();
        ControlGradient { per_qubit }
    }

    /// Squared concurrence of a pure state via the symmetric-sector kernel
    /// (no antisymmetric penalty, so no cancellation noise).
    pub fn tau_pure(&self, psi: &PureState) -> Result<f64> {
        let rho = psi.to_density().into_matrix();
        let g = self.contract_pure_kernel(&rho);
        real_part(self.pair_trace(&rho, &g), "tau_pure")
    }

    /// Concurrence `C(ψ) = sqrt(tau_pure)` with a small-negative clamp.
    pub fn pure_concurrence(&self, psi: &PureState) -> Result<f64> {
        let radicand = self.tau_pure(psi)?;
        if radicand < -1e-10 {
            return Err(Error::NegativeRadicand(radicand));
        }
        Ok(radicand.max(0.0).sqrt())
    }

    /// Dense kernel reconstruction for inspection and cross-checks.
    pub fn to_dense(&self) -> Result<Array2<f64>> {
        densify(&self.triples, self.sys)
    }

    pub fn pure_kernel_to_dense(&self) -> Result<Array2<f64>> {
        densify(&self.pure_triples, self.sys)
    }
}

fn real_part(z: C64, context: &'static str) -> Result<f64> {
    if z.im.abs() > IM_TOL * z.re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue { context, residue: z.im });
    }
    Ok(z.re)
}

fn contract_with(triples: &[Triple], d: usize, m: &CMat) -> CMat {
    let ms = m.as_slice().expect("contiguous matrix");
    let mut g = vec![ZERO; d * d];
    for t in triples {
        g[t.out as usize] += ms[t.inp as usize] * t.w;
    }
    Array2::from_shape_vec((d, d), g).expect("d² buffer")
}

fn densify(triples: &[Triple], sys: QubitSystem) -> Result<Array2<f64>> {
    if sys.n_qubits() > 5 {
        return Err(Error::SystemSize(sys.n_qubits()));
    }
    let d = sys.dim();
    let dd = d * d;
    let mut a = Array2::zeros((dd, dd));
    for t in triples {
        let (j, i) = (t.out as usize / d, t.out as usize % d);
        let (k, l) = (t.inp as usize / d, t.inp as usize % d);
        a[[j * d + l, i * d + k]] = t.w;
    }
    Ok(a)
}

/// Assemble `α·(I⊗I) + β·SWAP + γ·(⊗P₊)` as contraction triples.
fn assemble(sys: QubitSystem, alpha: f64, beta: f64, gamma: f64) -> Vec<Triple> {
    let d = sys.dim();
    let n = sys.n_qubits();
    let mut acc: std::collections::HashMap<(u32, u32), f64> = std::collections::HashMap::new();

    let add = |r: usize, c: usize, w: f64, acc: &mut std::collections::HashMap<(u32, u32), f64>| {
        *acc.entry((r as u32, c as u32)).or_insert(0.0) += w;
    };

    for a in 0..d {
        for b in 0..d {
            // Identity on H⊗H at (R, C) = ((a,b), (a,b)).
            add(a * d + b, a * d + b, alpha, &mut acc);
            // Swap of the two copies: ⟨b,a|S|a,b⟩ = 1.
            add(b * d + a, a * d + b, beta, &mut acc);
        }
    }

    // ⊗ᵢ P₊ in the pairwise-interleaved basis, mapped back to the global
    // (copy-major) basis through the pairing permutation.
    let perm = duplicate_pairing_permutation(sys);
    let mut perm_inv = vec![0usize; perm.len()];
    for (g, &p) in perm.iter().enumerate() {
        perm_inv[p] = g;
    }
    // P₊ = ½(I + swap) on one qubit pair, basis index 2a_i + b_i.
    const P_PLUS: [(usize, usize, f64); 6] = [
        (0, 0, 1.0),
        (1, 1, 0.5),
        (1, 2, 0.5),
        (2, 1, 0.5),
        (2, 2, 0.5),
        (3, 3, 1.0),
    ];
    let mut stack: Vec<(usize, usize, usize, f64)> = vec![(0, 0, 0, gamma)];
    while let Some((i, r, c, w)) = stack.pop() {
        if i == n {
            add(perm_inv[r], perm_inv[c], w, &mut acc);
            continue;
        }
        for &(pr, pc, pw) in &P_PLUS {
            stack.push((i + 1, (r << 2) | pr, (c << 2) | pc, w * pw));
        }
    }

    let mut triples: Vec<Triple> = acc
        .into_iter()
        .filter(|&(_, w)| w.abs() > 1e-14)
        .map(|((r, c), w)| {
            // Rearrange (R, C) = ((j,l), (i,k)) into G/M addressing.
            let (j, l) = (r as usize / d, r as usize % d);
            let (i, k) = (c as usize / d, c as usize % d);
            Triple { out: (j * d + i) as u32, inp: (k * d + l) as u32, w }
        })
        .collect();
    triples.sort_by_key(|t| (t.inp, t.out));
    triples
}
