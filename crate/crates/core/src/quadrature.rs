//! Gauss rules and Lagrange-Laguerre mesh functions.
//!
//! The Lagrange-Laguerre functions used throughout the crate are
//!
//! ```text
//! f_l(ξ) = λ_l^{-1/2} e^{-(ξ-ξ_l)/2} Π_{j≠l} (ξ-ξ_j)/(ξ_l-ξ_j)
//! ```
//!
//! where `ξ_l` are the zeros of the Laguerre polynomial `L_ν` and
//! `λ_l = w_l e^{ξ_l}` are the Gauss-Laguerre weights for the measure `dξ`.
//! They satisfy `f_l(ξ_m) = δ_lm / √λ_m` and are orthonormal at the Gauss
//! approximation. Indices are zero-based.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("rule size must be at least 1 (got {0})")]
    EmptyRule(usize),
    #[error("rule size {0} exceeds the supported maximum of {1}")]
    TooLarge(usize, usize),
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("Newton refinement of root {index} did not converge for order {order}")]
    RootNotConverged { order: usize, index: usize },
    #[error("basis index {index} out of range for a mesh of {size} points")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("derivative order {0} is not supported (0, 1 or 2)")]
    UnsupportedOrder(u8),
}

/// Largest Laguerre rule the root finder is validated for.
pub const MAX_LAGUERRE_ORDER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RuleKind {
    /// Weight `e^{-x}` on `[0, ∞)`.
    Laguerre,
    /// Unit weight on `[lo, hi]`.
    Legendre { lo: f64, hi: f64 },
}

/// Nodes and weights of a Gauss rule.
///
/// For Laguerre rules `weights` integrate against `e^{-x}` and may underflow
/// for the outermost nodes of very large rules; `scaled_weights` (`w e^{x}`,
/// the rule for the plain measure `dx`) never do.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    scaled_weights: Vec<f64>,
    kind: RuleKind,
}

impl GaussRule {
    pub fn laguerre(order: usize) -> Result<Self, QuadratureError> {
        laguerre_rule(order)
    }

    pub fn legendre(order: usize, lo: f64, hi: f64) -> Result<Self, QuadratureError> {
        legendre_rule(order, lo, hi)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights for the plain measure: `w_i e^{x_i}` for Laguerre rules, the
    /// ordinary weights for Legendre rules.
    pub fn scaled_weights(&self) -> &[f64] {
        &self.scaled_weights
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    /// Integrates `f` against the rule's weight function.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Integrates `f` over the rule's domain with the plain measure `dx`,
    /// the Laguerre case being mapped onto `[0, ∞)` with `x = scale·t`.
    pub fn integrate_plain<F: Fn(f64) -> f64>(&self, scale: f64, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.scaled_weights)
            .map(|(&t, &w)| w * scale * f(scale * t))
            .sum()
    }
}

/// Evaluates `L_n(x)` and `L_n'(x)` by the three-term recurrence.
///
/// The pair is returned as `(mantissa_value, mantissa_derivative, log_scale)`
/// where the true values are the mantissas times `e^{log_scale}`; this keeps
/// the recurrence finite for the large arguments of high-order rules.
fn laguerre_with_derivative(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p1 = 1.0_f64;
    let mut p2 = 0.0_f64;
    let mut log_scale = 0.0_f64;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = ((2.0 * jf + 1.0 - x) * p2 - jf * p3) / (jf + 1.0);
        if p1.abs() > 1e150 {
            p1 *= 1e-150;
            p2 *= 1e-150;
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    let nf = n as f64;
    let dp = nf * (p1 - p2) / x;
    (p1, dp, log_scale)
}

/// Gauss-Laguerre rule of the given order (weight `e^{-x}` on `[0, ∞)`).
pub fn laguerre_rule(order: usize) -> Result<GaussRule, QuadratureError> {
    if order == 0 {
        return Err(QuadratureError::EmptyRule(order));
    }
    if order > MAX_LAGUERRE_ORDER {
        return Err(QuadratureError::TooLarge(order, MAX_LAGUERRE_ORDER));
    }
    let n = order;
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut log_lambda = vec![0.0; n];
    let mut z = 0.0_f64;
    for i in 0..n {
        // Asymptotic starting values (Stroud & Secrest style extrapolation).
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + ((1.0 + 2.55 * ai) / (1.9 * ai)) * (z - nodes[i - 2])
            }
        };
        let mut converged = false;
        let mut dp = 0.0;
        let mut log_scale = 0.0;
        for _ in 0..200 {
            let (p, d, s) = laguerre_with_derivative(n, z);
            dp = d;
            log_scale = s;
            let step = p / d;
            z -= step;
            // The recurrence carries round-off of a few ulps times n, so
            // stop once the step is at that level and polish once more.
            if step.abs() <= 1e-12 * z.abs().max(1.0) {
                let (p, d, _) = laguerre_with_derivative(n, z);
                z -= p / d;
                converged = true;
                break;
            }
        }
        if !converged || !z.is_finite() || z <= 0.0 || (i > 0 && z <= nodes[i - 1]) {
            return Err(QuadratureError::RootNotConverged { order: n, index: i });
        }
        // Derivative at the converged root, re-evaluated for accuracy.
        let (_, d, s) = laguerre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
            log_scale = s;
        }
        nodes[i] = z;
        log_lambda[i] = z - z.ln() - 2.0 * (dp.abs().ln() + log_scale);
    }
    let scaled_weights: Vec<f64> = log_lambda.iter().map(|l| l.exp()).collect();
    let weights: Vec<f64> = log_lambda
        .iter()
        .zip(&nodes)
        .map(|(l, x)| (l - x).exp())
        .collect();
    Ok(GaussRule {
        nodes,
        weights,
        scaled_weights,
        kind: RuleKind::Laguerre,
    })
}

/// Gauss-Legendre rule of the given order mapped onto `[lo, hi]`.
pub fn legendre_rule(order: usize, lo: f64, hi: f64) -> Result<GaussRule, QuadratureError> {
    if order == 0 {
        return Err(QuadratureError::EmptyRule(order));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(QuadratureError::InvalidInterval { lo, hi });
    }
    let (t, w) = legendre_reference(order)?;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let nodes: Vec<f64> = t.iter().map(|&t| mid + half * t).collect();
    let weights: Vec<f64> = w.iter().map(|&w| half * w).collect();
    Ok(GaussRule {
        nodes,
        scaled_weights: weights.clone(),
        weights,
        kind: RuleKind::Legendre { lo, hi },
    })
}

/// Gauss-Legendre nodes (increasing) and weights on `[-1, 1]`.
pub(crate) fn legendre_reference(n: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut converged = false;
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 2.0 * f64::EPSILON {
                converged = true;
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            pp = 1.0;
            converged = true;
        }
        if !converged {
            return Err(QuadratureError::RootNotConverged { order: n, index: i });
        }
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Composite rule on `[0, ∞)` for integrands with near-singular points.
///
/// Gauss-Legendre panels are graded geometrically toward each requested
/// point, the rest of `[0, split]` is covered by panels no wider than
/// `max_panel`, and `[split, ∞)` by a Gauss-Laguerre tail `x = split + s·t`.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    panel: (Vec<f64>, Vec<f64>),
    tail: GaussRule,
    ratio: f64,
    max_panel: f64,
}

impl CompositeRule {
    pub fn new(
        panel_order: usize,
        tail_order: usize,
        ratio: f64,
        max_panel: f64,
    ) -> Result<Self, QuadratureError> {
        if panel_order == 0 {
            return Err(QuadratureError::EmptyRule(panel_order));
        }
        assert!(ratio > 1.0 && max_panel > 0.0);
        Ok(Self {
            panel: legendre_reference(panel_order)?,
            tail: laguerre_rule(tail_order)?,
            ratio,
            max_panel,
        })
    }

    /// Appends nodes and weights to `nodes`/`weights` (cleared first).
    ///
    /// `centres` holds `(c, δ)` pairs: panels adjacent to `c` have width `δ`
    /// and grow by `ratio` away from it.
    pub fn build(
        &self,
        centres: &[(f64, f64)],
        split: f64,
        tail_scale: f64,
        nodes: &mut Vec<f64>,
        weights: &mut Vec<f64>,
    ) {
        nodes.clear();
        weights.clear();
        let mut bp = vec![0.0, split];
        let m = (split / self.max_panel).ceil().max(1.0) as usize;
        bp.extend((1..m).map(|i| split * i as f64 / m as f64));
        for &(c, d) in centres {
            if !(c >= 0.0 && c <= split) || d >= self.max_panel {
                continue;
            }
            bp.push(c);
            let mut w = d;
            while w < self.max_panel {
                bp.push(c + w);
                bp.push(c - w);
                w *= self.ratio;
            }
        }
        bp.retain(|&b| (0.0..=split).contains(&b));
        bp.sort_by(f64::total_cmp);
        bp.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * split.max(1.0));
        let (t, w) = &self.panel;
        for win in bp.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (ti, wi) in t.iter().zip(w) {
                nodes.push(mid + half * ti);
                weights.push(half * wi);
            }
        }
        for (ti, wi) in self.tail.nodes().iter().zip(self.tail.scaled_weights()) {
            nodes.push(split + tail_scale * ti);
            weights.push(tail_scale * wi);
        }
    }
}

/// Lagrange-Laguerre functions attached to a Gauss-Laguerre rule.
#[derive(Debug, Clone)]
pub struct LagrangeLaguerre {
    rule: GaussRule,
    inv_sqrt_lambda: Vec<f64>,
}

impl LagrangeLaguerre {
    pub fn new(order: usize) -> Result<Self, QuadratureError> {
        let rule = laguerre_rule(order)?;
        Ok(Self::from_rule(rule))
    }

    pub fn from_rule(rule: GaussRule) -> Self {
        let inv_sqrt_lambda = rule.scaled_weights.iter().map(|l| 1.0 / l.sqrt()).collect();
        Self {
            rule,
            inv_sqrt_lambda,
        }
    }

    pub fn order(&self) -> usize {
        self.rule.len()
    }

    pub fn rule(&self) -> &GaussRule {
        &self.rule
    }

    /// Mesh points `ξ_m`.
    pub fn nodes(&self) -> &[f64] {
        self.rule.nodes()
    }

    /// Gauss weights `λ_m` for the measure `dξ`.
    pub fn lambdas(&self) -> &[f64] {
        self.rule.scaled_weights()
    }

    fn check_index(&self, l: usize) -> Result<(), QuadratureError> {
        if l >= self.order() {
            Err(QuadratureError::IndexOutOfRange {
                index: l,
                size: self.order(),
            })
        } else {
            Ok(())
        }
    }

    /// Value and first two derivatives of `f_l` at `xi`.
    ///
    /// Uses the product form with the exponential distributed over the
    /// factors, so no intermediate over- or underflows for large orders.
    pub fn eval_all(&self, l: usize, xi: f64) -> Result<[f64; 3], QuadratureError> {
        self.check_index(l)?;
        let nodes = self.nodes();
        let n = nodes.len();
        let xl = nodes[l];
        let pre = self.inv_sqrt_lambda[l];
        if n == 1 {
            let e = (-0.5 * (xi - xl)).exp();
            return Ok([pre * e, -0.5 * pre * e, 0.25 * pre * e]);
        }
        let c = 0.5 / (n as f64 - 1.0);
        let e = (-c * (xi - xl)).exp();
        // Dual number (value, first, second) accumulated over the factors.
        let (mut v, mut d1, mut d2) = (1.0_f64, 0.0_f64, 0.0_f64);
        for (j, &xj) in nodes.iter().enumerate() {
            if j == l {
                continue;
            }
            let inv = 1.0 / (xl - xj);
            let u = (xi - xj) * inv;
            let fv = u * e;
            let f1 = e * inv - c * u * e;
            let f2 = -2.0 * c * e * inv + c * c * u * e;
            let nv = v * fv;
            let n1 = d1 * fv + v * f1;
            let n2 = d2 * fv + 2.0 * d1 * f1 + v * f2;
            v = nv;
            d1 = n1;
            d2 = n2;
        }
        Ok([pre * v, pre * d1, pre * d2])
    }

    /// `f_l(ξ)` or one of its first two derivatives.
    pub fn eval(&self, l: usize, xi: f64, order: u8) -> Result<f64, QuadratureError> {
        if order > 2 {
            return Err(QuadratureError::UnsupportedOrder(order));
        }
        Ok(self.eval_all(l, xi)?[order as usize])
    }

    /// Values of all functions at `xi` in O(ν).
    ///
    /// Uses the first barycentric form `f_l(ξ) = Q(ξ) s_l √ξ_l / (ξ − ξ_l)`,
    /// with the node polynomial `Q` evaluated as a product. The second form
    /// is unusable here: its denominator cancels catastrophically away from
    /// the first nodes because the Laguerre weights span many decades.
    pub fn values_into(&self, xi: f64, out: &mut [f64]) {
        let nodes = self.nodes();
        let n = nodes.len();
        debug_assert_eq!(out.len(), n);
        if let Some(m) = nodes.iter().position(|&x| x == xi) {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[m] = self.inv_sqrt_lambda[m];
            return;
        }
        let x0 = nodes[0];
        // Q(ξ) = f_0(ξ) (ξ − ξ_0) / (s_0 √ξ_0), exponential spread over the factors.
        let c = 0.5 / n as f64;
        let e = (-c * (xi - x0)).exp();
        let mut q = self.inv_sqrt_lambda[0] / x0.sqrt() * (xi - x0) * e;
        for &xj in &nodes[1..] {
            q *= (xi - xj) / (x0 - xj) * e;
        }
        for (l, o) in out.iter_mut().enumerate() {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            *o = q * sign * nodes[l].sqrt() / (xi - nodes[l]);
        }
    }

    pub fn values(&self, xi: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.order()];
        self.values_into(xi, &mut out);
        out
    }

    /// `f_l'(ξ_m)` in closed form.
    pub fn derivative_at_node(&self, l: usize, m: usize) -> f64 {
        let x = self.nodes();
        if l == m {
            -0.5 * self.inv_sqrt_lambda[l] / x[l]
        } else {
            let sign = if (l + m) % 2 == 0 { 1.0 } else { -1.0 };
            sign * (x[l] / x[m]).sqrt() * self.inv_sqrt_lambda[m] / (x[m] - x[l])
        }
    }

    /// Matrix `D[l][m] = f_l'(ξ_m)`.
    pub fn derivative_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.order();
        (0..n)
            .map(|l| (0..n).map(|m| self.derivative_at_node(l, m)).collect())
            .collect()
    }
}

/// Stand-alone evaluation of `f_l^{(ν)}(ξ)` or its derivatives.
///
/// Builds the rule on every call; hold a [`LagrangeLaguerre`] for repeated use.
pub fn lagrange_eval(
    order: usize,
    l: usize,
    xi: f64,
    derivative: u8,
) -> Result<f64, QuadratureError> {
    LagrangeLaguerre::new(order)?.eval(l, xi, derivative)
}
