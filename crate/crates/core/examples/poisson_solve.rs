//! Piecewise-constant diffusion problem on the unit square: assemble, solve,
//! and report norms and a point value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sensorcoord::coeff::{element_coefficients_s1, sample_param_s1};
use sensorcoord::fem::{assemble_stiffness, solve_cg, CgOptions, FeSpace, InnerProductMode};

fn main() -> sensorcoord::Result<()> {
    let space = FeSpace::with_subdivisions(64)?;
    let mesh = space.mesh();
    let y = sample_param_s1(&mut ChaCha8Rng::seed_from_u64(1));
    let a = assemble_stiffness(mesh, &element_coefficients_s1(&y, mesh))?;
    let u = solve_cg(&a, &mesh.unit_load(), &CgOptions::default())?;
    println!("{} unknowns, {} nonzeros", a.dim(), a.nnz());
    println!("y = {:.3?}", y.y);
    println!("|u|_H1 = {:.6}", space.norm(&u.coeffs, InnerProductMode::H1Seminorm));
    println!("||u||_L2 = {:.6}", space.norm(&u.coeffs, InnerProductMode::L2));
    println!("u(0.5, 0.5) = {:.6}", mesh.evaluate(&u, [0.5, 0.5])?);
    Ok(())
}
