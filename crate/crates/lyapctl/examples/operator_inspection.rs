//! The entanglement invariant and its control gradient, taken apart.
//!
//! Evaluates the four-qubit invariant on named states, demonstrates its
//! defining properties (local-unitary invariance, squared concurrence on
//! pure states), and shows the gradient object the feedback law is built
//! from: the per-site, per-axis response of the invariant's curvature to a
//! local field.
//!
//! ```text
//! cargo run --release --example operator_inspection
//! ```

use lyapctl::dynamics::{CouplingMatrix, DephasingSpec, LindbladGenerator};
use lyapctl::experiments::maximal_state;
use lyapctl::hilbert::{conjugate_locals, haar_local_unitaries};
use lyapctl::{Axis, ConcurrenceOperator, PureState, QubitSystem, RngStream};

fn main() -> lyapctl::Result<()> {
    let sys = QubitSystem::new(4)?;
    let op = ConcurrenceOperator::build(sys)?;

    println!("invariant on named states:");
    let named: Vec<(&str, PureState)> = vec![
        ("product |0000⟩", PureState::ghz_family(sys, 1.0)?),
        ("GHZ, p = 1/2", PureState::ghz_family(sys, 0.5)?),
        ("GHZ family, p = 0.9", PureState::ghz_family(sys, 0.9)?),
        ("maximally entangled", maximal_state(sys)?),
    ];
    for (name, psi) in &named {
        let rho = psi.to_density();
        println!("  {name:<22} tau = {:.6}", op.tau(rho.matrix())?);
    }
    let dim = sys.dim() as f64;
    let mixed = lyapctl::hilbert::CMat::eye(sys.dim()).mapv(|v| v / dim);
    println!("  {:<22} tau = {:.6} (negative: deep inside the separable ball)", "maximally mixed", op.tau(&mixed)?);
    println!();

    // Local unitaries relabel each qubit's frame; the invariant cannot move.
    let mut rng = RngStream::new(7).substream(0, 0).rng();
    let ghz = PureState::ghz_family(sys, 0.5)?.to_density();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let us = haar_local_unitaries(sys, &mut rng);
        let rotated = conjugate_locals(&us, ghz.matrix(), sys);
        worst = worst.max((op.tau(&rotated)? - op.tau(ghz.matrix())?).abs());
    }
    println!("worst drift under 50 random local-unitary frames: {worst:.2e}");

    // On pure states the invariant is the square of the concurrence.
    let psi = PureState::product_state(sys, 0.73, 0.51 * std::f64::consts::PI)?;
    let c = op.pure_concurrence(&psi)?;
    let tau = op.tau(psi.to_density().matrix())?;
    println!("reference product state: concurrence {c:.6}, tau {tau:.6}, difference {:.2e}", (tau - c * c).abs());
    println!();

    // The gradient behind the feedback law: how the invariant's curvature
    // responds to each local field component at the current state.
    let model = LindbladGenerator::new(
        sys,
        &CouplingMatrix::default_four_qubit(),
        &DephasingSpec::uniform(sys, 0.05)?,
    )?;
    let rho = PureState::ghz_family(sys, 0.75)?.to_density();
    let g = op.contract(rho.matrix());
    let x = op.gradient_x(rho.matrix(), &g, |m| model.h_comm(m), |m| model.dissipate(m));
    println!("curvature gradient at the p = 0.75 family state (rows: qubits):");
    println!("{:>6}  {:>10}  {:>10}  {:>10}", "qubit", "x", "y", "z");
    for site in 0..4 {
        println!(
            "{site:>6}  {:>10.4}  {:>10.4}  {:>10.4}",
            x.component(site, Axis::X),
            x.component(site, Axis::Y),
            x.component(site, Axis::Z),
        );
    }
    println!("overall gradient norm: {:.4} (the bang-bang law aligns the field with the signs above)", x.global_norm);
    Ok(())
}
