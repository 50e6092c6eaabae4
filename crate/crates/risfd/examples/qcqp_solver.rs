//! Uses the interior-point QCQP solver standalone: projects a point onto
//! the unit ball by maximizing a concave quadratic, and checks the result
//! against the closed form.

use nalgebra::{DMatrix, DVector};
use risfd::cplx::RealQuad;
use risfd::qcqp::{solve, ConvexQcqp, SolverCfg};

fn main() {
    // maximize -|x - p|^2  subject to  |x|^2 <= 1, with |p| > 1.
    let p = DVector::from_vec(vec![1.5, -2.0, 0.5]);
    let dim = p.len();

    let mut objective = RealQuad::zeros(dim);
    objective.a = -DMatrix::identity(dim, dim);
    objective.b = p.clone();
    objective.c = -p.norm_squared();

    let mut ball = RealQuad::zeros(dim);
    ball.a = DMatrix::identity(dim, dim);
    ball.c = -1.0;

    let problem = ConvexQcqp {
        objective,
        constraints: vec![ball],
    };
    let sol = solve(&problem, &DVector::zeros(dim), &SolverCfg::default()).expect("solve");

    let expected = &p / p.norm();
    println!("solver   x = {:?}", sol.x.as_slice());
    println!("closed-form = {:?}", expected.as_slice());
    println!(
        "objective {:.9} vs closed form {:.9}, kkt residual {:.2e}",
        sol.objective_value,
        -(p.norm() - 1.0).powi(2),
        sol.kkt_residual
    );
    assert!((&sol.x - &expected).norm() < 1e-5);
}
