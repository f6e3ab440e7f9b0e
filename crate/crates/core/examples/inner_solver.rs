//! The inner empirical likelihood problem: Lagrange multiplier, weights and
//! the hull check, on a hand-made constraint matrix.

use nalgebra::DMatrix;

use el_adjust::solve_lambda;

fn main() -> el_adjust::Result<()> {
    // five observations of a two-dimensional constraint vector
    let g = DMatrix::from_row_slice(5, 2, &[-1.0, 0.3, 0.5, -0.2, 0.8, 0.4, -0.4, -0.6, 0.2, 0.1]);
    let sol = solve_lambda(&g, 1e-10, 100)?;
    println!("lambda      {:?}", sol.lambda);
    println!("weights     {:?}", sol.weights);
    println!("sum p_i     {:.12}", sol.weights.iter().sum::<f64>());
    println!("sum p_i g_i {:?}", sol.weighted_mean(&g).as_slice());
    println!("l_E         {:.6} after {} Newton steps", sol.loglik, sol.iterations);

    // zero outside the convex hull: every g_i has a positive first entry
    let shifted = g.map_with_location(|_, j, v| if j == 0 { v.abs() + 0.1 } else { v });
    let bad = solve_lambda(&shifted, 1e-10, 100)?;
    println!("\nall-positive column: feasible = {}, usable = {}", bad.feasible, bad.is_usable());
    Ok(())
}
