//! Reconstruction of the initial fields from a modal solution, and the
//! error metrics used to compare against known truth.
//!
//! With the modal fields `u_0 .. u_N` in hand, the space-time field is
//! `sum_n u_n(x) Psi_n(t)`; the initial displacement and velocity are its
//! value and time derivative at `t = 0`, both available in closed form from
//! the basis endpoint vectors.

use crate::basis::{BasisError, TimeBasis};
use crate::elasticity::VectorField;
use crate::reduction::ModalSolution;
use serde::{Deserialize, Serialize};

/// Metrics of one reconstructed scalar component against its truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentMetrics {
    pub max_computed: f64,
    pub max_truth: f64,
    /// `|max(computed) - max(truth)| / |max(truth)|`; falls back to the
    /// absolute computed maximum when the truth vanishes.
    pub max_relative_error: f64,
    pub truth_is_zero: bool,
    /// Relative L2 error over the grid.
    pub l2_relative_error: f64,
    /// Intersection-over-union of the supports thresholded at half of each
    /// field's own maximum.
    pub support_iou: f64,
}

/// Reconstruction output: both initial fields plus per-component metrics
/// when the truth is known.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub displacement: VectorField,
    pub velocity: VectorField,
    /// Metrics for `p1, p2, q1, q2` in that order, when truth was supplied.
    pub metrics: Option<[ComponentMetrics; 4]>,
}

/// Initial displacement and velocity of the expansion: `p = sum u_n Psi_n(0)`
/// and `q = sum u_n Psi_n'(0)` from the closed-form endpoint values.
pub fn reconstruct_initial(
    solution: &ModalSolution,
    basis: &TimeBasis,
) -> Result<(VectorField, VectorField), BasisError> {
    let n_modes = solution.layout.n_modes;
    if basis.n_modes() < n_modes {
        return Err(BasisError::ModeOutOfRange {
            n: n_modes - 1,
            max: basis.order(),
        });
    }
    let n_nodes = solution.layout.n_nodes();
    let mut p = vec![[0.0f64; 2]; n_nodes];
    let mut q = vec![[0.0f64; 2]; n_nodes];
    for m in 0..n_modes {
        let psi0 = basis.psi_at_zero()[m];
        let dpsi0 = basis.dpsi_at_zero()[m];
        for node in 0..n_nodes {
            let base = (m * n_nodes + node) * 2;
            for c in 0..2 {
                p[node][c] += solution.coeffs[base + c] * psi0;
                q[node][c] += solution.coeffs[base + c] * dpsi0;
            }
        }
    }
    let make = |data: Vec<[f64; 2]>| VectorField {
        nx: solution.layout.nx,
        ny: solution.layout.ny,
        data,
    };
    Ok((make(p), make(q)))
}

/// The expansion field at an arbitrary time in `[0, T]`.
pub fn spacetime_eval(
    solution: &ModalSolution,
    basis: &TimeBasis,
    t: f64,
) -> Result<VectorField, BasisError> {
    let n_modes = solution.layout.n_modes;
    let n_nodes = solution.layout.n_nodes();
    let mut out = vec![[0.0f64; 2]; n_nodes];
    for m in 0..n_modes {
        let (psi, _) = basis.eval_at(t, m)?;
        for node in 0..n_nodes {
            let base = (m * n_nodes + node) * 2;
            for c in 0..2 {
                out[node][c] += solution.coeffs[base + c] * psi;
            }
        }
    }
    Ok(VectorField {
        nx: solution.layout.nx,
        ny: solution.layout.ny,
        data: out,
    })
}

/// Compares one scalar component against its truth on the same grid.
pub fn metrics(computed: &[f64], truth: &[f64]) -> ComponentMetrics {
    assert_eq!(computed.len(), truth.len(), "fields must share the grid");
    let max_of = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_computed = max_of(computed);
    let max_truth = max_of(truth);
    let truth_is_zero = truth.iter().all(|&v| v == 0.0);
    let max_relative_error = if truth_is_zero {
        computed.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()))
    } else {
        (max_computed - max_truth).abs() / max_truth.abs()
    };
    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = computed
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let l2_relative_error = if truth_is_zero {
        l2(computed)
    } else {
        diff / l2(truth)
    };
    // supports thresholded at half of each field's own maximum
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (&c, &t) in computed.iter().zip(truth) {
        let in_c = max_computed > 0.0 && c >= 0.5 * max_computed;
        let in_t = max_truth > 0.0 && t >= 0.5 * max_truth;
        if in_c && in_t {
            intersection += 1;
        }
        if in_c || in_t {
            union += 1;
        }
    }
    let support_iou = if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    };
    ComponentMetrics {
        max_computed,
        max_truth,
        max_relative_error,
        truth_is_zero,
        l2_relative_error,
        support_iou,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::UnknownLayout;
    use approx::assert_abs_diff_eq;

    fn layout(n_modes: usize, n: usize) -> UnknownLayout {
        UnknownLayout {
            n_modes,
            nx: n,
            ny: n,
        }
    }

    fn single_mode_solution(mode: usize, n_modes: usize, n: usize, phi: f64) -> ModalSolution {
        let lay = layout(n_modes, n);
        let mut coeffs = vec![0.0; lay.n_unknowns()];
        for node in 0..lay.n_nodes() {
            coeffs[(mode * lay.n_nodes() + node) * 2] = phi;
        }
        ModalSolution::from_coeffs(lay, coeffs)
    }

    #[test]
    fn zeroth_mode_reconstruction() {
        // only u_0 = phi: p = phi Psi_0(0) = phi, q = phi Psi_0'(0) = phi
        // for T = 1 (Psi_0 = e^t)
        let basis = TimeBasis::gauss(1.0, 3).unwrap();
        let sol = single_mode_solution(0, 4, 5, 2.5);
        let (p, q) = reconstruct_initial(&sol, &basis).unwrap();
        for node in 0..25 {
            assert_abs_diff_eq!(p.data[node][0], 2.5, epsilon = 1e-12);
            assert_abs_diff_eq!(q.data[node][0], 2.5, epsilon = 1e-12);
            assert_eq!(p.data[node][1], 0.0);
        }
    }

    #[test]
    fn zero_solution_reconstructs_zero() {
        let basis = TimeBasis::gauss(1.0, 3).unwrap();
        let sol = ModalSolution::from_coeffs(layout(4, 4), vec![0.0; 4 * 16 * 2]);
        let (p, q) = reconstruct_initial(&sol, &basis).unwrap();
        assert_eq!(p.max_abs(), 0.0);
        assert_eq!(q.max_abs(), 0.0);
    }

    #[test]
    fn reconstruction_is_linear() {
        let basis = TimeBasis::gauss(1.0, 5).unwrap();
        let a = single_mode_solution(2, 6, 4, 1.0);
        let b = single_mode_solution(4, 6, 4, -0.7);
        let mut combined = a.clone();
        for (c, (x, y)) in combined
            .coeffs
            .iter_mut()
            .zip(a.coeffs.iter().zip(&b.coeffs))
        {
            *c = 2.0 * x + 3.0 * y;
        }
        let (pa, _) = reconstruct_initial(&a, &basis).unwrap();
        let (pb, _) = reconstruct_initial(&b, &basis).unwrap();
        let (pc, _) = reconstruct_initial(&combined, &basis).unwrap();
        for node in 0..16 {
            assert_abs_diff_eq!(
                pc.data[node][0],
                2.0 * pa.data[node][0] + 3.0 * pb.data[node][0],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn modes_of_synthetic_affine_time_field_reconstruct_it() {
        // w(x, t) = phi (1 + t): modes from quadrature, then p ~ phi and
        // q ~ phi with truncation error controlled by the projection oracle
        let order = 30;
        let basis = TimeBasis::gauss(1.0, order).unwrap();
        let phi = 1.3;
        let lay = layout(order + 1, 3);
        let mut coeffs = vec![0.0; lay.n_unknowns()];
        for m in 0..=order {
            let series: Vec<f64> = basis.quad().nodes.iter().map(|&t| phi * (1.0 + t)).collect();
            let cm = basis.fourier_mode(&series, m).unwrap();
            for node in 0..lay.n_nodes() {
                coeffs[(m * lay.n_nodes() + node) * 2] = cm;
            }
        }
        let sol = ModalSolution::from_coeffs(lay, coeffs);
        let (p, q) = reconstruct_initial(&sol, &basis).unwrap();
        // projection-error threshold measured from the residual of the
        // expansion itself at t = 0 (oracle: evaluate the truncated series)
        let mut p_expect = 0.0;
        let mut q_expect = 0.0;
        for m in 0..=order {
            let series: Vec<f64> = basis.quad().nodes.iter().map(|&t| phi * (1.0 + t)).collect();
            let cm = basis.fourier_mode(&series, m).unwrap();
            p_expect += cm * basis.psi_at_zero()[m];
            q_expect += cm * basis.dpsi_at_zero()[m];
        }
        assert_abs_diff_eq!(p.data[0][0], p_expect, epsilon = 1e-10);
        assert_abs_diff_eq!(q.data[0][0], q_expect, epsilon = 1e-10);
        // and the truncated series value is close to the true endpoint
        assert_abs_diff_eq!(p_expect, phi, epsilon = 2e-2 * phi);
        assert_abs_diff_eq!(q_expect, phi, epsilon = 0.5 * phi);
    }

    #[test]
    fn spacetime_eval_consistent_with_initial_reconstruction() {
        let basis = TimeBasis::gauss(1.0, 4).unwrap();
        let mut sol = single_mode_solution(1, 5, 4, 0.8);
        sol.coeffs[(3 * 16 + 5) * 2 + 1] = -0.3;
        let (p, _) = reconstruct_initial(&sol, &basis).unwrap();
        let at0 = spacetime_eval(&sol, &basis, 0.0).unwrap();
        for node in 0..16 {
            for c in 0..2 {
                assert_abs_diff_eq!(p.data[node][c], at0.data[node][c], epsilon = 1e-12);
            }
        }
        // single mode at a quadrature node reproduces u_k Psi_k(t)
        let single = single_mode_solution(2, 5, 4, 1.0);
        let tj = basis.quad().nodes[7];
        let field = spacetime_eval(&single, &basis, tj).unwrap();
        assert_abs_diff_eq!(field.data[0][0], basis.psi(2)[7], epsilon = 1e-12);
        assert!(spacetime_eval(&single, &basis, 1.5).is_err());
    }

    #[test]
    fn finite_difference_of_expansion_matches_velocity() {
        let basis = TimeBasis::gauss(1.0, 6).unwrap();
        let mut sol = single_mode_solution(1, 7, 4, 0.8);
        sol.coeffs[(4 * 16 + 3) * 2] = 0.45;
        let (_, q) = reconstruct_initial(&sol, &basis).unwrap();
        let dt = 1e-5;
        let w0 = spacetime_eval(&sol, &basis, 0.0).unwrap();
        let w1 = spacetime_eval(&sol, &basis, dt).unwrap();
        let w2 = spacetime_eval(&sol, &basis, 2.0 * dt).unwrap();
        for node in 0..16 {
            for c in 0..2 {
                let fd = (-3.0 * w0.data[node][c] + 4.0 * w1.data[node][c] - w2.data[node][c])
                    / (2.0 * dt);
                let expect = q.data[node][c];
                if expect.abs() > 1e-10 {
                    assert!(
                        ((fd - expect) / expect).abs() < 1e-3,
                        "node {node} comp {c}: fd {fd} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn round_trip_of_expansion_initial_value() {
        // a field already in the span reconstructs its t = 0 value exactly
        let order = 8;
        let basis = TimeBasis::gauss(1.0, order).unwrap();
        let lay = layout(order + 1, 2);
        let mut coeffs = vec![0.0; lay.n_unknowns()];
        let amplitudes = [0.9, -0.4, 0.2, 0.05, -0.6, 0.33, 0.0, 0.11, -0.02];
        for (m, &a) in amplitudes.iter().enumerate() {
            for node in 0..lay.n_nodes() {
                coeffs[(m * lay.n_nodes() + node) * 2] = a;
            }
        }
        let sol = ModalSolution::from_coeffs(lay, coeffs);
        let (p, _) = reconstruct_initial(&sol, &basis).unwrap();
        let expect: f64 = amplitudes
            .iter()
            .enumerate()
            .map(|(m, a)| a * basis.psi_at_zero()[m])
            .sum();
        assert_abs_diff_eq!(p.data[0][0], expect, epsilon = 1e-8);
    }

    #[test]
    fn metrics_examples() {
        let truth = vec![0.0, 1.0, 1.0, 0.0, 0.4];
        let same = metrics(&truth, &truth);
        assert_eq!(same.max_relative_error, 0.0);
        assert_eq!(same.l2_relative_error, 0.0);
        assert_eq!(same.support_iou, 1.0);

        // uniformly scaled field reproduces the scale gap as max error
        let scaled: Vec<f64> = truth.iter().map(|v| 1.0537 * v).collect();
        let m = metrics(&scaled, &truth);
        assert_abs_diff_eq!(m.max_relative_error, 0.0537, epsilon = 1e-12);
        assert_eq!(m.support_iou, 1.0);

        // disjoint supports
        let a = vec![1.0, 1.0, 0.0, 0.0];
        let b = vec![0.0, 0.0, 1.0, 1.0];
        assert_eq!(metrics(&a, &b).support_iou, 0.0);

        // zero truth falls back to the absolute maximum
        let z = vec![0.0; 4];
        let c = vec![0.1, -0.3, 0.0, 0.05];
        let m = metrics(&c, &z);
        assert!(m.truth_is_zero);
        assert_abs_diff_eq!(m.max_relative_error, 0.3, epsilon = 1e-12);
    }
}
