//! The Legendre polynomial–exponential time basis.
//!
//! Starting from the Legendre polynomials `P_n` on `[-1, 1]`, the change of
//! variables `x = 2t/T - 1` and the normalization `sqrt((2n+1)/T)` produce an
//! orthonormal family `Q_n` of `L^2(0, T)`. The working basis is
//!
//! ```text
//! Psi_n(t) = e^t Q_n(t),
//! ```
//!
//! orthonormal in the weighted space with inner product
//! `<u, v> = int_0^T e^{-2t} u v dt`. Because the weight cancels the
//! exponentials, every basis-internal integral reduces to a polynomial and is
//! evaluated exactly by a Gauss–Legendre rule of sufficient order.
//!
//! The module also provides the mode-coupling matrix
//! `s_mn = <Psi_m, Psi_n''>`, which is the identity on and below the diagonal
//! (differentiation only lowers polynomial degree), plus the endpoint values
//! `Psi_n(0)`, `Psi_n'(0)` used to read initial data off a modal expansion.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("Legendre argument {0} lies outside [-1, 1]")]
    ArgumentOutOfRange(f64),
    #[error("final time must be positive, got {0}")]
    InvalidFinalTime(f64),
    #[error("quadrature has {got} nodes but certifying order N = {order} requires at least {required}")]
    InsufficientQuadrature {
        got: usize,
        required: usize,
        order: usize,
    },
    #[error("quadrature nodes must lie in [0, {t_final}] and increase strictly")]
    MalformedQuadrature { t_final: f64 },
    #[error("time series has {got} samples, quadrature rule has {expected}")]
    SampleCountMismatch { got: usize, expected: usize },
    #[error("mode index {n} exceeds truncation order {max}")]
    ModeOutOfRange { n: usize, max: usize },
}

/// Values of `P_n`, `P_n'` and `P_n''` for `n = 0..=max_degree` at one point.
#[derive(Debug, Clone)]
pub struct LegendreTables {
    pub p: Vec<f64>,
    pub dp: Vec<f64>,
    pub ddp: Vec<f64>,
}

/// Evaluates all Legendre polynomials up to `max_degree` together with their
/// first two derivatives, via the three-term recurrence
/// `(n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}` and its derivatives.
///
/// Arguments within `1e-12` of the endpoints are accepted and clamped.
pub fn legendre_all(x: f64, max_degree: usize) -> Result<LegendreTables, BasisError> {
    if !(x.abs() <= 1.0 + 1e-12) {
        return Err(BasisError::ArgumentOutOfRange(x));
    }
    let x = x.clamp(-1.0, 1.0);
    let len = max_degree + 1;
    let mut t = LegendreTables {
        p: vec![0.0; len],
        dp: vec![0.0; len],
        ddp: vec![0.0; len],
    };
    t.p[0] = 1.0;
    if max_degree >= 1 {
        t.p[1] = x;
        t.dp[1] = 1.0;
    }
    for n in 1..max_degree {
        let a = (2 * n + 1) as f64;
        let b = n as f64;
        let c = (n + 1) as f64;
        t.p[n + 1] = (a * x * t.p[n] - b * t.p[n - 1]) / c;
        t.dp[n + 1] = (a * (t.p[n] + x * t.dp[n]) - b * t.dp[n - 1]) / c;
        t.ddp[n + 1] = (a * (2.0 * t.dp[n] + x * t.ddp[n]) - b * t.ddp[n - 1]) / c;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadKind {
    /// Gauss–Legendre nodes mapped onto `[0, T]`; exact for polynomials of
    /// degree `2n - 1`.
    GaussLegendre,
    /// Composite trapezoid on a uniform grid; used for measurement-grid data
    /// that exists only at sample times.
    TrapezoidGrid,
}

/// A quadrature rule on `[0, T]`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: QuadKind,
    t_final: f64,
}

impl QuadratureRule {
    /// Gauss–Legendre rule with `n` nodes on `[0, t_final]`.
    pub fn gauss(t_final: f64, n: usize) -> Result<Self, BasisError> {
        if !(t_final > 0.0) {
            return Err(BasisError::InvalidFinalTime(t_final));
        }
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        // Newton iteration on P_n from the Chebyshev initial guess; the
        // symmetric root -z and its weight come for free.
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..64 {
                let t = legendre_all(z, n).expect("Newton iterate stays in [-1, 1]");
                let step = t.p[n] / t.dp[n];
                z -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let dp = legendre_all(z, n).expect("converged root is in [-1, 1]").dp[n];
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes.push(-z);
            weights.push(w);
            if i != n - 1 - i {
                nodes.push(z);
                weights.push(w);
            }
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
        let half = t_final / 2.0;
        let rule = QuadratureRule {
            nodes: idx.iter().map(|&i| (nodes[i] + 1.0) * half).collect(),
            weights: idx.iter().map(|&i| weights[i] * half).collect(),
            kind: QuadKind::GaussLegendre,
            t_final,
        };
        rule.validate()?;
        Ok(rule)
    }

    /// Composite trapezoid rule on the uniform grid with `n_steps + 1` nodes.
    pub fn trapezoid(t_final: f64, n_steps: usize) -> Result<Self, BasisError> {
        if !(t_final > 0.0) {
            return Err(BasisError::InvalidFinalTime(t_final));
        }
        assert!(n_steps >= 1, "trapezoid rule needs at least one interval");
        let dt = t_final / n_steps as f64;
        let nodes: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
        let mut weights = vec![dt; n_steps + 1];
        weights[0] = dt / 2.0;
        weights[n_steps] = dt / 2.0;
        let rule = QuadratureRule {
            nodes,
            weights,
            kind: QuadKind::TrapezoidGrid,
            t_final,
        };
        rule.validate()?;
        Ok(rule)
    }

    fn validate(&self) -> Result<(), BasisError> {
        let ok_nodes = self
            .nodes
            .windows(2)
            .all(|w| w[0] < w[1])
            && self
                .nodes
                .iter()
                .all(|&t| (-1e-12..=self.t_final + 1e-12).contains(&t));
        let sum: f64 = self.weights.iter().sum();
        if !ok_nodes || (sum - self.t_final).abs() > 1e-12 * self.t_final {
            return Err(BasisError::MalformedQuadrature {
                t_final: self.t_final,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }
}

/// Per-node tables of the basis functions `Psi_n` (and `Q_n`) with their
/// first two derivatives, on one quadrature rule, plus the closed-form
/// endpoint values at `t = 0`.
///
/// Immutable after construction; cheap to share.
#[derive(Debug, Clone)]
pub struct TimeBasis {
    t_final: f64,
    order: usize,
    quad: QuadratureRule,
    /// `psi[n][i] = Psi_n(t_i)`, and likewise for the derivative tables.
    psi: Vec<Vec<f64>>,
    dpsi: Vec<Vec<f64>>,
    ddpsi: Vec<Vec<f64>>,
    psi_at_zero: Vec<f64>,
    dpsi_at_zero: Vec<f64>,
}

/// Builds the basis tables for `n = 0..=order` on the given rule.
///
/// A Gauss rule must carry at least `order + 1` nodes; with fewer nodes the
/// Gram identities are no longer exact and the basis cannot be certified.
pub fn build_basis(
    t_final: f64,
    order: usize,
    quad: QuadratureRule,
) -> Result<TimeBasis, BasisError> {
    if !(t_final > 0.0) {
        return Err(BasisError::InvalidFinalTime(t_final));
    }
    if (quad.t_final() - t_final).abs() > 1e-12 * t_final {
        return Err(BasisError::MalformedQuadrature { t_final });
    }
    if quad.kind == QuadKind::GaussLegendre && quad.len() < order + 1 {
        return Err(BasisError::InsufficientQuadrature {
            got: quad.len(),
            required: order + 1,
            order,
        });
    }
    let n_modes = order + 1;
    let n_nodes = quad.len();
    let mut psi = vec![vec![0.0; n_nodes]; n_modes];
    let mut dpsi = vec![vec![0.0; n_nodes]; n_modes];
    let mut ddpsi = vec![vec![0.0; n_nodes]; n_modes];
    let scale = 2.0 / t_final;
    for (i, &t) in quad.nodes.iter().enumerate() {
        let x = scale * t - 1.0;
        let tab = legendre_all(x, order)?;
        let et = t.exp();
        for n in 0..n_modes {
            let c = ((2 * n + 1) as f64 / t_final).sqrt();
            let q = c * tab.p[n];
            let dq = c * scale * tab.dp[n];
            let ddq = c * scale * scale * tab.ddp[n];
            // Psi = e^t Q, so each derivative picks up the lower ones.
            psi[n][i] = et * q;
            dpsi[n][i] = et * (q + dq);
            ddpsi[n][i] = et * (q + 2.0 * dq + ddq);
        }
    }
    // Endpoint identities P_n(-1) = (-1)^n and P_n'(-1) = (-1)^{n-1} n(n+1)/2
    // give Psi_n(0) and Psi_n'(0) without evaluating near the boundary.
    let mut psi_at_zero = Vec::with_capacity(n_modes);
    let mut dpsi_at_zero = Vec::with_capacity(n_modes);
    for n in 0..n_modes {
        let c = ((2 * n + 1) as f64 / t_final).sqrt();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let p0 = sign * c;
        psi_at_zero.push(p0);
        dpsi_at_zero.push(p0 * (1.0 - (n * (n + 1)) as f64 / t_final));
    }
    Ok(TimeBasis {
        t_final,
        order,
        quad,
        psi,
        dpsi,
        ddpsi,
        psi_at_zero,
        dpsi_at_zero,
    })
}

impl TimeBasis {
    /// Basis on the default Gauss rule with `max(2N + 2, 64)` nodes, which
    /// integrates every basis-internal polynomial exactly.
    pub fn gauss(t_final: f64, order: usize) -> Result<Self, BasisError> {
        let nodes = (2 * order + 2).max(64);
        build_basis(t_final, order, QuadratureRule::gauss(t_final, nodes)?)
    }

    /// Basis tabulated on the uniform measurement grid with `n_steps`
    /// intervals, for modal integrals of sampled trace data.
    pub fn on_time_grid(t_final: f64, order: usize, n_steps: usize) -> Result<Self, BasisError> {
        build_basis(t_final, order, QuadratureRule::trapezoid(t_final, n_steps)?)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_modes(&self) -> usize {
        self.order + 1
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn quad(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn psi(&self, n: usize) -> &[f64] {
        &self.psi[n]
    }

    pub fn dpsi(&self, n: usize) -> &[f64] {
        &self.dpsi[n]
    }

    pub fn ddpsi(&self, n: usize) -> &[f64] {
        &self.ddpsi[n]
    }

    pub fn psi_at_zero(&self) -> &[f64] {
        &self.psi_at_zero
    }

    pub fn dpsi_at_zero(&self) -> &[f64] {
        &self.dpsi_at_zero
    }

    /// `Psi_n` and `Psi_n'` at an arbitrary `t` in `[0, T]`.
    pub fn eval_at(&self, t: f64, n: usize) -> Result<(f64, f64), BasisError> {
        if n > self.order {
            return Err(BasisError::ModeOutOfRange { n, max: self.order });
        }
        if !(0.0..=self.t_final + 1e-12).contains(&t) {
            return Err(BasisError::ArgumentOutOfRange(t));
        }
        let x = 2.0 * t / self.t_final - 1.0;
        let tab = legendre_all(x, n)?;
        let c = ((2 * n + 1) as f64 / self.t_final).sqrt();
        let q = c * tab.p[n];
        let dq = c * (2.0 / self.t_final) * tab.dp[n];
        let et = t.exp();
        Ok((et * q, et * (q + dq)))
    }

    /// `<series, Psi_n>` in the `e^{-2t}`-weighted inner product, using this
    /// basis's own rule.
    pub fn fourier_mode(&self, series: &[f64], n: usize) -> Result<f64, BasisError> {
        if n > self.order {
            return Err(BasisError::ModeOutOfRange { n, max: self.order });
        }
        weighted_inner(series, &self.psi[n], &self.quad)
    }

    /// Orthogonal projection of a sampled series onto `span{Psi_0..Psi_N}`,
    /// returned as samples on the same nodes.
    pub fn project(&self, series: &[f64]) -> Result<Vec<f64>, BasisError> {
        let mut out = vec![0.0; series.len()];
        for n in 0..=self.order {
            let c = self.fourier_mode(series, n)?;
            for (o, &p) in out.iter_mut().zip(&self.psi[n]) {
                *o += c * p;
            }
        }
        Ok(out)
    }

    /// Coefficient-decay profile `n -> n^k |<series, Psi_n>|`, the quantity
    /// bounded for `C^k` inputs.
    pub fn decay_profile(&self, series: &[f64], k: u32) -> Result<Vec<f64>, BasisError> {
        (0..=self.order)
            .map(|n| Ok((n as f64).powi(k as i32) * self.fourier_mode(series, n)?.abs()))
            .collect()
    }

    /// Normalized derivative-norm growth over `n = 1..=N`: the weighted norm
    /// of `Psi_n'` divided by `n^{3/2}`, or of `Psi_n''` divided by
    /// `n^{7/2}`. Both profiles stay bounded by a `T`-dependent constant.
    pub fn derivative_growth_profile(&self, second: bool) -> Vec<f64> {
        (1..=self.order)
            .map(|n| {
                let table = if second { &self.ddpsi[n] } else { &self.dpsi[n] };
                let norm = weighted_inner(table, table, &self.quad)
                    .expect("basis tables match their own rule")
                    .sqrt();
                let exponent = if second { 3.5 } else { 1.5 };
                norm / (n as f64).powf(exponent)
            })
            .collect()
    }
}

/// `sum_i w_i e^{-2 t_i} u_i v_i`, the discrete weighted inner product.
pub fn weighted_inner(u: &[f64], v: &[f64], quad: &QuadratureRule) -> Result<f64, BasisError> {
    if u.len() != quad.len() {
        return Err(BasisError::SampleCountMismatch {
            got: u.len(),
            expected: quad.len(),
        });
    }
    if v.len() != quad.len() {
        return Err(BasisError::SampleCountMismatch {
            got: v.len(),
            expected: quad.len(),
        });
    }
    let mut acc = 0.0;
    for i in 0..u.len() {
        acc += quad.weights[i] * (-2.0 * quad.nodes[i]).exp() * u[i] * v[i];
    }
    Ok(acc)
}

/// The mode-coupling matrix `s_mn = <Psi_m, Psi_n''>`.
///
/// Identity on and below the diagonal: `Psi_n'' = e^t (Q_n + 2Q_n' + Q_n')`
/// and the derivative terms have degree below `n`, so they are orthogonal to
/// every `Q_m` with `m >= n`.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    n_modes: usize,
    entries: Vec<f64>,
}

impl CouplingMatrix {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.entries[m * self.n_modes + n]
    }
}

/// Computes the coupling matrix from the closed-form Legendre expansions
///
/// ```text
/// int P_m P_n'  dx = 2                       for m < n, n - m odd,
/// int P_m P_n'' dx = n(n+1) - m(m+1)         for m <= n - 2, n - m even,
/// ```
///
/// which make every entry exact in floating point. Quadrature of the
/// defining integral reproduces these values only to about `1e-8` at high
/// orders because `Q_n''` reaches magnitudes near `1e6`; see
/// [`coupling_matrix_quadrature`] for that route.
pub fn coupling_matrix(basis: &TimeBasis) -> CouplingMatrix {
    let t_final = basis.t_final();
    let n_modes = basis.n_modes();
    let mut entries = vec![0.0; n_modes * n_modes];
    for m in 0..n_modes {
        for n in 0..n_modes {
            let mut s = if m == n { 1.0 } else { 0.0 };
            let cc = (((2 * m + 1) * (2 * n + 1)) as f64).sqrt();
            if m < n && (n - m) % 2 == 1 {
                s += 4.0 * cc / t_final;
            }
            if n >= 2 && m <= n - 2 && (n - m) % 2 == 0 {
                s += 2.0 * cc * ((n * (n + 1) - m * (m + 1)) as f64) / (t_final * t_final);
            }
            entries[m * n_modes + n] = s;
        }
    }
    CouplingMatrix { n_modes, entries }
}

/// The same matrix by Gauss quadrature of `int e^{-2t} Psi_n'' Psi_m dt`.
///
/// The integrand reduces to the polynomial `Q_m (Q_n + 2Q_n' + Q_n'')` of
/// degree at most `2N`, so a Gauss rule with at least `N + 1` nodes is
/// required (and then the rule itself is exact; only rounding remains).
pub fn coupling_matrix_quadrature(basis: &TimeBasis) -> Result<CouplingMatrix, BasisError> {
    if basis.quad().kind != QuadKind::GaussLegendre || basis.quad().len() < basis.n_modes() {
        return Err(BasisError::InsufficientQuadrature {
            got: basis.quad().len(),
            required: basis.n_modes(),
            order: basis.order(),
        });
    }
    let n_modes = basis.n_modes();
    let mut entries = vec![0.0; n_modes * n_modes];
    for m in 0..n_modes {
        for n in 0..n_modes {
            entries[m * n_modes + n] = weighted_inner(basis.psi(m), basis.ddpsi(n), basis.quad())?;
        }
    }
    Ok(CouplingMatrix { n_modes, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Rodrigues-formula oracle: expand (x^2-1)^n, differentiate the
    /// coefficient vector n+extra times exactly, evaluate by Horner. Exact
    /// integer arithmetic keeps it independent of the recurrence path.
    fn rodrigues_eval(n: usize, x: f64, extra_derivs: usize) -> f64 {
        let mut coeffs = vec![0i128; 2 * n + 1];
        // (x^2 - 1)^n = sum_k C(n,k) (-1)^{n-k} x^{2k}
        let mut binom = 1i128;
        for k in 0..=n {
            let sign = if (n - k) % 2 == 0 { 1 } else { -1 };
            coeffs[2 * k] = sign * binom;
            binom = binom * (n as i128 - k as i128) / (k as i128 + 1);
        }
        for _ in 0..n + extra_derivs {
            for i in 1..coeffs.len() {
                coeffs[i - 1] = coeffs[i] * i as i128;
            }
            let len = coeffs.len();
            coeffs[len - 1] = 0;
        }
        let horner = coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * x + c as f64);
        let mut fact2n = 1.0;
        for i in 1..=n {
            fact2n *= 2.0 * i as f64;
        }
        horner / fact2n
    }

    #[test]
    fn legendre_endpoint_normalization() {
        let t = legendre_all(1.0, 12).unwrap();
        for n in 0..=12 {
            assert_abs_diff_eq!(t.p[n], 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn legendre_closed_form_degree_two() {
        let t = legendre_all(0.5, 2).unwrap();
        assert_abs_diff_eq!(t.p[2], -0.125, epsilon = 1e-15);
    }

    #[test]
    fn legendre_matches_rodrigues_oracle() {
        for &x in &[0.3, -0.7, 0.95, 0.0] {
            let t = legendre_all(x, 8).unwrap();
            for n in 0..=8 {
                assert_abs_diff_eq!(t.p[n], rodrigues_eval(n, x, 0), epsilon = 1e-12);
                assert_abs_diff_eq!(t.dp[n], rodrigues_eval(n, x, 1), epsilon = 1e-10);
                assert_abs_diff_eq!(t.ddp[n], rodrigues_eval(n, x, 2), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn legendre_rejects_out_of_domain() {
        assert!(legendre_all(1.1, 3).is_err());
        assert!(legendre_all(f64::NAN, 3).is_err());
        assert!(legendre_all(1.0 + 5e-13, 3).is_ok());
    }

    #[test]
    fn gauss_rule_weights_sum_to_t() {
        for &(t_final, n) in &[(1.0, 8), (2.0, 64), (0.5, 33)] {
            let rule = QuadratureRule::gauss(t_final, n).unwrap();
            let sum: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(sum, t_final, epsilon = 1e-12 * t_final);
            assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        // x^5 over [0,1] with a 3-node rule (exact through degree 5).
        let rule = QuadratureRule::gauss(1.0, 3).unwrap();
        let int: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &w)| w * t.powi(5))
            .sum();
        assert_abs_diff_eq!(int, 1.0 / 6.0, epsilon = 1e-14);
    }

    #[test]
    fn degree_zero_mode_is_exponential() {
        let basis = TimeBasis::gauss(1.0, 0).unwrap();
        for (i, &t) in basis.quad().nodes.iter().enumerate() {
            assert_abs_diff_eq!(basis.psi(0)[i], t.exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn psi_equals_exponential_times_q_at_nodes() {
        let basis = TimeBasis::gauss(2.0, 10).unwrap();
        for n in 0..=10 {
            for (i, &t) in basis.quad().nodes.iter().enumerate() {
                let x = 2.0 * t / 2.0 - 1.0;
                let tab = legendre_all(x, n).unwrap();
                let q = ((2 * n + 1) as f64 / 2.0).sqrt() * tab.p[n];
                assert_abs_diff_eq!(basis.psi(n)[i], t.exp() * q, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn gram_matrix_is_identity() {
        for &t_final in &[0.5, 1.0, 2.0] {
            let basis = TimeBasis::gauss(t_final, 30).unwrap();
            for m in 0..=30 {
                for n in m..=30 {
                    let g = weighted_inner(basis.psi(m), basis.psi(n), basis.quad()).unwrap();
                    let expect = if m == n { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(g, expect, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn initial_values_match_closed_form() {
        let basis = TimeBasis::gauss(1.0, 30).unwrap();
        for n in 0..=30 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let expect = sign * ((2 * n + 1) as f64).sqrt();
            assert_abs_diff_eq!(basis.psi_at_zero()[n], expect, epsilon = 1e-10);
        }
        // Psi_1'(0) = sqrt(3) for T = 1; cross-check by finite differences.
        assert_abs_diff_eq!(basis.dpsi_at_zero()[1], 3f64.sqrt(), epsilon = 1e-12);
        let h = 1e-6;
        let (psi_h, _) = basis.eval_at(h, 1).unwrap();
        let (psi_2h, _) = basis.eval_at(2.0 * h, 1).unwrap();
        let psi_0 = basis.psi_at_zero()[1];
        let fd = (-3.0 * psi_0 + 4.0 * psi_h - psi_2h) / (2.0 * h);
        assert_abs_diff_eq!(fd, 3f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn build_basis_rejects_underresolved_gauss_rule() {
        let quad = QuadratureRule::gauss(1.0, 8).unwrap();
        assert!(matches!(
            build_basis(1.0, 10, quad),
            Err(BasisError::InsufficientQuadrature { .. })
        ));
    }

    #[test]
    fn weighted_inner_examples() {
        let basis = TimeBasis::gauss(1.0, 8).unwrap();
        assert_abs_diff_eq!(
            weighted_inner(basis.psi(3), basis.psi(3), basis.quad()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            weighted_inner(basis.psi(2), basis.psi(5), basis.quad()).unwrap(),
            0.0,
            epsilon = 1e-10
        );
        // weight cancels the exponentials: <e^t, e^t> = T
        let et: Vec<f64> = basis.quad().nodes.iter().map(|&t| t.exp()).collect();
        assert_abs_diff_eq!(
            weighted_inner(&et, &et, basis.quad()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let short = vec![0.0; 3];
        assert!(weighted_inner(&short, &short, basis.quad()).is_err());
    }

    /// Composite-Simpson oracle on a dense uniform grid, independent of the
    /// Gauss machinery used by the implementation.
    fn simpson_mode_oracle(f: impl Fn(f64) -> f64, n: usize, t_final: f64, panels: usize) -> f64 {
        let m = 2 * panels;
        let dt = t_final / m as f64;
        let mut acc = 0.0;
        for i in 0..=m {
            let t = i as f64 * dt;
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let x = 2.0 * t / t_final - 1.0;
            let tab = legendre_all(x, n).unwrap();
            let psi = t.exp() * ((2 * n + 1) as f64 / t_final).sqrt() * tab.p[n];
            acc += w * (-2.0 * t).exp() * f(t) * psi;
        }
        acc * dt / 3.0
    }

    #[test]
    fn fourier_mode_examples() {
        let basis = TimeBasis::gauss(1.0, 8).unwrap();
        // sampled basis element projects to 1 on itself, 0 elsewhere
        let series: Vec<f64> = basis.psi(4).to_vec();
        assert_abs_diff_eq!(basis.fourier_mode(&series, 4).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(basis.fourier_mode(&series, 2).unwrap(), 0.0, epsilon = 1e-10);
        let zero = vec![0.0; basis.quad().len()];
        assert_abs_diff_eq!(basis.fourier_mode(&zero, 0).unwrap(), 0.0);
        assert!(basis.fourier_mode(&series, 9).is_err());

        // modes of u(t) = e^t t: closed forms 1/2 and sqrt(3)/6, confirmed by
        // the dense Simpson oracle.
        let u: Vec<f64> = basis.quad().nodes.iter().map(|&t| t.exp() * t).collect();
        let m0 = basis.fourier_mode(&u, 0).unwrap();
        let m1 = basis.fourier_mode(&u, 1).unwrap();
        assert_abs_diff_eq!(m0, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m1, 3f64.sqrt() / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            m0,
            simpson_mode_oracle(|t| t.exp() * t, 0, 1.0, 500_000),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            m1,
            simpson_mode_oracle(|t| t.exp() * t, 1, 1.0, 500_000),
            epsilon = 1e-10
        );
    }

    #[test]
    fn projection_fixes_basis_elements_and_kills_orthogonal_ones() {
        let big = TimeBasis::gauss(1.0, 12).unwrap();
        let small = build_basis(1.0, 8, big.quad().clone()).unwrap();
        let kept = small.project(big.psi(2)).unwrap();
        for (a, b) in kept.iter().zip(big.psi(2)) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        // Psi_{N+1} projects to zero under the order-N basis
        let killed = small.project(big.psi(9)).unwrap();
        for v in killed {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn projection_is_idempotent_and_residual_decreases() {
        let quad = QuadratureRule::gauss(1.0, 96).unwrap();
        let u: Vec<f64> = quad.nodes.iter().map(|&t| t.sin()).collect();
        let mut prev = f64::INFINITY;
        for order in [5usize, 10, 20] {
            let basis = build_basis(1.0, order, quad.clone()).unwrap();
            let proj = basis.project(&u).unwrap();
            let twice = basis.project(&proj).unwrap();
            for (a, b) in proj.iter().zip(&twice) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            let diff: Vec<f64> = u.iter().zip(&proj).map(|(a, b)| a - b).collect();
            let res = weighted_inner(&diff, &diff, &quad).unwrap().sqrt();
            assert!(
                res < prev,
                "projection residual must decrease: {res} !< {prev}"
            );
            prev = res;
        }
        // oracle value of the final residual: ||u||^2 - sum of coefficient
        // squares, both from dense Simpson quadrature
        let norm_u2 = {
            let m = 1_000_000usize;
            let dt = 1.0 / m as f64;
            let mut acc = 0.0;
            for i in 0..=m {
                let t = i as f64 * dt;
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                acc += w * (-2.0 * t).exp() * t.sin() * t.sin();
            }
            acc * dt
        };
        let mut coef2 = 0.0;
        for n in 0..=20 {
            let c = simpson_mode_oracle(|t| t.sin(), n, 1.0, 500_000);
            coef2 += c * c;
        }
        let oracle_res = (norm_u2 - coef2).max(0.0).sqrt();
        assert_abs_diff_eq!(prev, oracle_res, epsilon = 1e-6);
    }

    proptest::proptest! {
        /// `||P^N u|| <= ||u||` in the weighted norm for random polynomials.
        #[test]
        fn projection_contracts(coeffs in proptest::collection::vec(-1.0f64..1.0, 1..12)) {
            let basis = TimeBasis::gauss(1.0, 6).unwrap();
            let u: Vec<f64> = basis
                .quad()
                .nodes
                .iter()
                .map(|&t| coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c))
                .collect();
            let proj = basis.project(&u).unwrap();
            let nu = weighted_inner(&u, &u, basis.quad()).unwrap();
            let np = weighted_inner(&proj, &proj, basis.quad()).unwrap();
            proptest::prop_assert!(np <= nu + 1e-10);
        }
    }

    #[test]
    fn coupling_matrix_structure_and_values() {
        let basis = TimeBasis::gauss(1.0, 30).unwrap();
        let s = coupling_matrix(&basis);
        // triangular structure: delta_{mn} on and below the diagonal
        for m in 0..=30 {
            for n in 0..=m {
                let expect = if m == n { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(s.get(m, n), expect, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(s.get(0, 0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.get(1, 0), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.get(0, 1), 4.0 * 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn coupling_matrix_agrees_with_quadrature_route() {
        let basis = TimeBasis::gauss(1.0, 30).unwrap();
        let exact = coupling_matrix(&basis);
        let quad = coupling_matrix_quadrature(&basis).unwrap();
        for m in 0..=30 {
            for n in 0..=30 {
                // quadrature roundoff grows with |Psi_n''|, about 1e-7 at n=30
                assert_abs_diff_eq!(exact.get(m, n), quad.get(m, n), epsilon = 5e-7);
            }
        }
        let trap_basis = TimeBasis::on_time_grid(1.0, 4, 100).unwrap();
        assert!(coupling_matrix_quadrature(&trap_basis).is_err());
    }

    #[test]
    fn coupling_low_order_entries_match_dense_quadrature_oracle() {
        // 1e6-point composite Simpson of e^{-2t} Psi_n'' Psi_m; reliable for
        // moderate orders where the integrand stays small.
        let basis = TimeBasis::gauss(1.0, 30).unwrap();
        let s = coupling_matrix(&basis);
        let pairs = [(0usize, 1usize), (2, 3), (1, 4), (3, 3), (4, 2)];
        for &(m, n) in &pairs {
            let mm = 1_000_000usize;
            let dt = 1.0 / mm as f64;
            let mut acc = 0.0;
            for i in 0..=mm {
                let t = i as f64 * dt;
                let w = if i == 0 || i == mm {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let x = 2.0 * t - 1.0;
                let tm = legendre_all(x, m).unwrap();
                let tn = legendre_all(x, n).unwrap();
                let cm = ((2 * m + 1) as f64).sqrt();
                let cn = ((2 * n + 1) as f64).sqrt();
                let qm = cm * tm.p[m];
                let qn = cn * tn.p[n];
                let dqn = cn * 2.0 * tn.dp[n];
                let ddqn = cn * 4.0 * tn.ddp[n];
                acc += w * qm * (qn + 2.0 * dqn + ddqn);
            }
            acc *= dt / 3.0;
            assert_abs_diff_eq!(s.get(m, n), acc, epsilon = 1e-9);
        }
    }

    #[test]
    fn decay_profile_examples() {
        let basis = TimeBasis::gauss(1.0, 30).unwrap();
        // u = e^t = sqrt(T) Psi_0: all higher coefficients vanish
        let et: Vec<f64> = basis.quad().nodes.iter().map(|&t| t.exp()).collect();
        let prof = basis.decay_profile(&et, 3).unwrap();
        for &v in &prof[1..] {
            assert!(v < 1e-10, "e^t has a single mode, got profile value {v}");
        }

        // smooth input: profile bounded by its value at n = 2
        let smooth: Vec<f64> = basis
            .quad()
            .nodes
            .iter()
            .map(|&t| (std::f64::consts::PI * t).sin())
            .collect();
        let prof = basis.decay_profile(&smooth, 2).unwrap();
        let bound = prof[2];
        for &v in &prof[2..] {
            assert!(v <= bound * (1.0 + 1e-9));
        }

        // C^0 kink (negative control): coefficients decay only like n^{-2},
        // so the k=2 profile plateaus instead of decaying and the k=3
        // profile grows linearly.
        let kink: Vec<f64> = basis
            .quad()
            .nodes
            .iter()
            .map(|&t| (t - 0.5).abs())
            .collect();
        let prof2 = basis.decay_profile(&kink, 2).unwrap();
        assert!(
            prof2[30] > 0.5 * prof2[2],
            "kink k=2 profile should not decay: n=2 {} vs n=30 {}",
            prof2[2],
            prof2[30]
        );
        let prof3 = basis.decay_profile(&kink, 3).unwrap();
        assert!(
            prof3[30] > 5.0 * prof3[2],
            "kink k=3 profile should grow: n=2 {} vs n=30 {}",
            prof3[2],
            prof3[30]
        );
    }

    #[test]
    fn derivative_growth_profile_examples() {
        let basis = TimeBasis::gauss(1.0, 60).unwrap();
        let prof2 = basis.derivative_growth_profile(true);
        // ||Psi_1''|| = 7 exactly for T = 1 (degree-1 integrand squared)
        assert_abs_diff_eq!(prof2[0], 7.0, epsilon = 1e-10);
        let head_max = prof2[..10].iter().cloned().fold(0.0, f64::max);
        assert!(prof2[59] <= 2.0 * head_max);
        // Psi_n'' is never identically zero
        for n in 1..=60 {
            let max = basis.ddpsi(n).iter().cloned().fold(0.0, f64::max);
            assert!(max > 0.0);
        }
    }

    #[test]
    fn eval_at_rejects_out_of_range_time() {
        let basis = TimeBasis::gauss(1.0, 4).unwrap();
        assert!(basis.eval_at(1.5, 2).is_err());
        assert!(basis.eval_at(-0.1, 2).is_err());
        assert!(basis.eval_at(0.5, 2).is_ok());
    }
}
