use nalgebra::DMatrix;

/// Singular values at or below this are treated as zero when inverting
/// without damping.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    /// Set when undamped inversion had to drop singular values.
    pub truncated: bool,
}

/// `J^T (J J^T + damping^2 I)^-1`.
///
/// With zero damping this is the Moore-Penrose inverse computed by SVD, with
/// singular values below [`SINGULAR_CUTOFF`] dropped.
pub fn damped_pseudoinverse(j: &DMatrix<f64>, damping: f64) -> PseudoInverse {
    let (rows, cols) = j.shape();
    if rows == 0 || cols == 0 {
        return PseudoInverse {
            matrix: DMatrix::zeros(cols, rows),
            truncated: false,
        };
    }
    if damping > 0.0 {
        let lambda2 = damping * damping;
        let mut gram = j * j.transpose();
        for i in 0..rows {
            gram[(i, i)] += lambda2;
        }
        if let Some(chol) = gram.cholesky() {
            // gram is symmetric, so (gram^-1 J)^T = J^T gram^-1.
            return PseudoInverse {
                matrix: chol.solve(j).transpose(),
                truncated: false,
            };
        }
    }
    svd_pseudoinverse(j, damping)
}

fn svd_pseudoinverse(j: &DMatrix<f64>, damping: f64) -> PseudoInverse {
    let svd = j.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let lambda2 = damping * damping;
    let mut truncated = false;
    let mut out = DMatrix::zeros(j.ncols(), j.nrows());
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        let inv = if damping > 0.0 {
            sigma / (sigma * sigma + lambda2)
        } else if sigma > SINGULAR_CUTOFF {
            1.0 / sigma
        } else {
            truncated = true;
            continue;
        };
        out += v_t.row(k).transpose() * u.column(k).transpose() * inv;
    }
    if damping == 0.0 {
        // nalgebra's SVD can stop early when two singular values nearly
        // coincide, leaving |A A+ A - A| near 1e-10. One Newton-Schulz step
        // squares that error and keeps truncated directions truncated.
        out = &out * 2.0 - &out * j * &out;
    }
    PseudoInverse {
        matrix: out,
        truncated,
    }
}

/// `I - J^+ J`.
pub fn nullspace_projector(j: &DMatrix<f64>, j_pinv: &DMatrix<f64>) -> DMatrix<f64> {
    let m = j.ncols();
    DMatrix::identity(m, m) - j_pinv * j
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_examples() {
        let p = damped_pseudoinverse(&DMatrix::from_element(1, 1, 2.0), 0.0);
        assert!((p.matrix[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(!p.truncated);

        // 1 / (1 + 1)
        let p = damped_pseudoinverse(&DMatrix::from_element(1, 1, 1.0), 1.0);
        assert!((p.matrix[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unit_row() {
        let j = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let p = damped_pseudoinverse(&j, 0.0);
        assert_eq!(p.matrix.shape(), (3, 1));
        assert!((p.matrix.column(0) - nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0])).norm() < 1e-15);
        let n = nullspace_projector(&j, &p.matrix);
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0, 1.0]));
        assert!(max_abs(&(n - expected)) < 1e-15);
    }

    #[test]
    fn identity_has_empty_nullspace() {
        let j = DMatrix::<f64>::identity(4, 4);
        let p = damped_pseudoinverse(&j, 0.0);
        assert!(max_abs(&nullspace_projector(&j, &p.matrix)) < 1e-15);
    }

    #[test]
    fn rank_deficient_undamped_is_flagged() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0]);
        let p = damped_pseudoinverse(&j, 0.0);
        assert!(p.truncated);
        assert!(p.matrix.iter().all(|v| v.is_finite()));
        // Moore-Penrose conditions that survive rank deficiency.
        assert!(max_abs(&(&j * &p.matrix * &j - &j)) < 1e-12);
        assert!(max_abs(&(&p.matrix * &j * &p.matrix - &p.matrix)) < 1e-12);
    }

    #[test]
    fn damping_keeps_singular_inverse_bounded() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-12]);
        let p = damped_pseudoinverse(&j, 1e-3);
        assert!(max_abs(&p.matrix) < 1e3 + 1.0);
    }

    #[test]
    fn damped_matches_closed_form() {
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.2, 0.3, 2.0, 0.7]);
        let lambda = 0.3;
        let p = damped_pseudoinverse(&j, lambda);
        let gram = &j * j.transpose() + DMatrix::identity(2, 2) * lambda * lambda;
        let expected = j.transpose() * gram.try_inverse().unwrap();
        assert!(max_abs(&(p.matrix - expected)) < 1e-13);
    }

    #[test]
    fn undamped_inverse_is_exact_with_close_singular_values() {
        // A restricted task Jacobian from the demo humanoid whose two
        // largest singular values differ by 0.25%.
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(3, 16, &[
            -0.15973460004509352, 0.11140408877478593, -0.1135888035824333, -0.13889643265694226, 0.07371109946011849, 0.10008345151460064, -0.015016998153996389, -0.03544498168175587, -0.0028504504078308603, -0.18728194639840365, -0.13519299314051333, -0.022714676968075435, -0.058399664797282265, -0.01013384818067078, 0.02774321824448741, -0.004276398821290481,
            0.17375355628228795, 0.010145460178071377, 0.11983514336316065, 0.12517529289821963, -0.08134465910228278, 0.02733744725723755, 0.001407491550931768, 0.01917921382567496, 0.017254567506406863, -0.007433783848716126, 0.5234731639918941, 0.0959531359912289, 0.03701500351220291, 0.04297957434329347, -0.002865524150775017, 0.05955568751152891,
            -0.005718993296487762, -0.1885253036170205, 0.0013902918141115465, 0.033010764428070064, 0.00434595946488427, -0.19608106299667633, 0.021344726222201797, 0.027135347792919363, -0.020850537671468782, -0.5041034885427679, 0.06902357994025385, 0.01814684764024231, -0.27477262566931293, 0.008358673136879102, -0.04901794627733921, -0.005901906314944222,
        ]);
        let p = damped_pseudoinverse(&a, 0.0).matrix;
        assert!(max_abs(&(&a * &p * &a - &a)) <= 1e-14);
        assert!(max_abs(&(&p * &a * &p - &p)) <= 1e-14);
        let n = nullspace_projector(&a, &p);
        assert!(max_abs(&(&n * &n - &n)) <= 1e-14);
    }
}
