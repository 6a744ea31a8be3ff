//! Riesz lifts of 16 averaged point sensors, orthonormalization, and the
//! split u = P_W u + P_W^perp u.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sensorcoord::coeff::{element_coefficients_s1, sample_param_s1};
use sensorcoord::fem::{assemble_stiffness, solve_dirichlet, FeSpace, InnerProductMode};
use sensorcoord::sensing::{place_uniform, MeasurementSpace, Orthonormalization};

fn main() -> sensorcoord::Result<()> {
    let space = FeSpace::with_subdivisions(64)?;
    let mesh = space.mesh();
    let y = sample_param_s1(&mut ChaCha8Rng::seed_from_u64(5));
    let a = assemble_stiffness(mesh, &element_coefficients_s1(&y, mesh))?;
    let u = solve_dirichlet(&a, &mesh.unit_load(), 1e-12)?;
    for mode in [InnerProductMode::H1Seminorm, InnerProductMode::L2] {
        let meas = MeasurementSpace::build(&space, &place_uniform(16)?, mode, Orthonormalization::Cholesky)?;
        let o = meas.observe(&u.coeffs);
        let w = meas.measure_coords(&o);
        let z = meas.project_complement(&u);
        let (nu, nz) = (space.norm(&u.coeffs, mode), space.norm(&z.coeffs, mode));
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        println!("[{mode}] Gram residual of Phi {:.2e}", meas.gram_residual());
        println!("[{mode}] |u|^2 = {:.6e}, |w|^2 + |z|^2 = {:.6e}", nu * nu, nw * nw + nz * nz);
        println!("[{mode}] observed share |w|/|u| = {:.3}", nw / nu);
    }
    Ok(())
}
