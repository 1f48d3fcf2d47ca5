//! The problem instance: drift fields and their mollifications, the vanishing
//! exponent β, and the desingularizing weights ψ_s.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quad;
use crate::specfun::{gamma_constant, sphere_area};

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Left-hand side of the β equation,
/// b(d+b−2)/(d+b−α) · γ(d+b−2)/γ(d+b−α).
pub fn kappa_of_beta(b: f64, d: usize, alpha: f64) -> Result<f64> {
    if !(b > 0.0 && b < alpha) {
        return Err(domain(
            "kappa_of_beta",
            format!("needs 0 < b < alpha = {alpha}, got {b}"),
        ));
    }
    let df = d as f64;
    let num = gamma_constant(d, df + b - 2.0)?;
    let den = gamma_constant(d, df + b - alpha)?;
    Ok(b * (df + b - 2.0) / (df + b - alpha) * num / den)
}

const BRACKET_EPS: f64 = 1e-12;

/// Solves kappa_of_beta(β) = κ for β ∈ (0, α) by bisection.
pub fn solve_beta(kappa: f64, d: usize, alpha: f64) -> Result<f64> {
    check_shape(d, alpha)?;
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(domain("solve_beta", format!("needs kappa > 0, got {kappa}")));
    }
    let mut lo = BRACKET_EPS;
    let mut hi = alpha - BRACKET_EPS;
    let f_lo = kappa_of_beta(lo, d, alpha)? - kappa;
    let f_hi = kappa_of_beta(hi, d, alpha)? - kappa;
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::Convergence {
            func: "solve_beta",
            msg: format!(
                "kappa = {kappa} not bracketed: lhs({lo:e}) = {:e}, lhs({hi}) = {:e}",
                f_lo + kappa,
                f_hi + kappa
            ),
        });
    }
    // Bisect to machine resolution; the stated residual bound is checked after.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kappa_of_beta(mid, d, alpha)? < kappa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r_lo = (kappa_of_beta(lo, d, alpha)? - kappa).abs();
    let r_hi = (kappa_of_beta(hi, d, alpha)? - kappa).abs();
    let (beta, resid) = if r_lo <= r_hi { (lo, r_lo) } else { (hi, r_hi) };
    if resid > 1e-10 * kappa.max(1.0) {
        return Err(Error::Convergence {
            func: "solve_beta",
            msg: format!("residual {resid:e} at beta = {beta}"),
        });
    }
    Ok(beta)
}

fn check_shape(d: usize, alpha: f64) -> Result<()> {
    if d < 3 {
        return Err(domain("ModelParams", format!("needs d >= 3, got {d}")));
    }
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(domain(
            "ModelParams",
            format!("needs 1 < alpha < 2, got {alpha}"),
        ));
    }
    Ok(())
}

/// Problem instance (d, α, κ) with the derived exponent β and a mollification ε ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub alpha: f64,
    pub kappa: f64,
    pub beta: f64,
    pub eps: f64,
}

impl ModelParams {
    pub fn new(d: usize, alpha: f64, kappa: f64, eps: f64) -> Result<Self> {
        check_shape(d, alpha)?;
        if !(kappa > 0.0) {
            return Err(domain("ModelParams", format!("needs kappa > 0, got {kappa}")));
        }
        if !(eps >= 0.0) {
            return Err(domain("ModelParams", format!("needs eps >= 0, got {eps}")));
        }
        let beta = solve_beta(kappa, d, alpha)?;
        Ok(Self {
            d,
            alpha,
            kappa,
            beta,
            eps,
        })
    }

    /// Zero-drift instance (κ = 0); β is set to 0 and the weights degenerate to 1.
    pub fn free(d: usize, alpha: f64, eps: f64) -> Result<Self> {
        check_shape(d, alpha)?;
        Ok(Self {
            d,
            alpha,
            kappa: 0.0,
            beta: 0.0,
            eps,
        })
    }

    pub fn with_eps(self, eps: f64) -> Self {
        Self { eps, ..self }
    }

    /// Re-validates a deserialized instance, including the β equation.
    pub fn validate(&self) -> Result<()> {
        check_shape(self.d, self.alpha)?;
        if !(self.eps >= 0.0) {
            return Err(domain("ModelParams", "eps must be >= 0"));
        }
        if self.kappa == 0.0 {
            return if self.beta == 0.0 {
                Ok(())
            } else {
                Err(domain("ModelParams", "kappa = 0 requires beta = 0"))
            };
        }
        if !(self.kappa > 0.0) {
            return Err(domain("ModelParams", "kappa must be >= 0"));
        }
        let k = kappa_of_beta(self.beta, self.d, self.alpha)?;
        if (k - self.kappa).abs() > 1e-8 * self.kappa.max(1.0) {
            return Err(domain(
                "ModelParams",
                format!("beta = {} does not solve the balance for kappa = {}", self.beta, self.kappa),
            ));
        }
        Ok(())
    }

    pub fn weights(&self) -> WeightFamily {
        WeightFamily {
            beta: self.beta,
            alpha: self.alpha,
        }
    }

    fn norm_eps(&self, x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() + self.eps).sqrt()
    }

    /// b(x) = κ|x|^{−α}x.
    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::Singularity { func: "drift" });
        }
        let c = self.kappa * r.powf(-self.alpha);
        Ok(x.iter().map(|v| c * v).collect())
    }

    /// b_ε(x) = κ|x|_ε^{−α}x.
    pub fn drift_eps(&self, x: &[f64]) -> Result<Vec<f64>> {
        let re = self.norm_eps(x);
        if re == 0.0 {
            return Err(Error::Singularity { func: "drift_eps" });
        }
        let c = self.kappa * re.powf(-self.alpha);
        Ok(x.iter().map(|v| c * v).collect())
    }

    /// Radial speed of b_ε at distance r: κ r (r² + ε)^{−α/2}.
    pub fn drift_eps_radial(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        self.kappa * r * (r * r + self.eps).powf(-0.5 * self.alpha)
    }

    /// div b_ε = κ(d|x|_ε^{−α} − α|x|_ε^{−α−2}|x|²).
    pub fn div_drift_eps(&self, x: &[f64]) -> Result<f64> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let re2 = r2 + self.eps;
        if re2 == 0.0 {
            return Err(Error::Singularity { func: "div_drift_eps" });
        }
        Ok(self.div_drift_eps_radial(r2.sqrt()))
    }

    pub fn div_drift_eps_radial(&self, r: f64) -> f64 {
        let re2 = r * r + self.eps;
        let re_a = re2.powf(-0.5 * self.alpha);
        self.kappa * (self.d as f64 * re_a - self.alpha * re_a / re2 * r * r)
    }

    /// U_ε = κ(d+β−α)(|x|^{−α} − |x|_ε^{−α}), the auxiliary potential.
    pub fn u_eps(&self, x: &[f64]) -> Result<f64> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::Singularity { func: "u_eps" });
        }
        let re = self.norm_eps(x);
        Ok(self.kappa
            * (self.d as f64 + self.beta - self.alpha)
            * (r.powf(-self.alpha) - re.powf(-self.alpha)))
    }

    /// W_ε = κ(d|x|_ε^{−α} − α|x|_ε^{−α−2}|x|²), the potential in the Duhamel
    /// expansion (identical to div b_ε).
    pub fn w_eps_div(&self, x: &[f64]) -> Result<f64> {
        self.div_drift_eps(x)
    }

    /// Residual potential κ(|x|_ε^{−α} − |x|^{−α})β + κ[d|x|_ε^{−α} − α|x|_ε^{−α−2}|x|² − (d−α)|x|^{−α}].
    pub fn w_eps_residual(&self, x: &[f64]) -> Result<f64> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::Singularity { func: "w_eps_residual" });
        }
        let re = self.norm_eps(x);
        let (a, df) = (self.alpha, self.d as f64);
        let diff = re.powf(-a) - r.powf(-a);
        let bracket = df * re.powf(-a) - a * re.powf(-a - 2.0) * r * r - (df - a) * r.powf(-a);
        Ok(self.kappa * diff * self.beta + self.kappa * bracket)
    }

    /// θ, q' and the weighted norm ‖ψ_s^{−θ}‖_{L^{q'}(B(0, s^{1/α}))}.
    pub fn theta_and_domain(&self, s: f64) -> Result<ThetaDomain> {
        if !(s > 0.0) {
            return Err(domain("theta_and_domain", format!("needs s > 0, got {s}")));
        }
        if !(self.beta > 0.0) {
            return Err(domain("theta_and_domain", "needs beta > 0"));
        }
        let (a, df, b) = (self.alpha, self.d as f64, self.beta);
        let theta = (2.0 - a) * df / ((2.0 - a) * df + 8.0 * b);
        let q_prime = 2.0 / (1.0 - theta);
        let expo = theta * q_prime;
        let w = self.weights();
        let radius = s.powf(1.0 / a);
        let integrand = |r: f64| {
            if r == 0.0 {
                return 0.0;
            }
            let psi = w.psi_radial(s, r);
            psi.powf(-expo) * r.powf(df - 1.0)
        };
        let integral = quad::adaptive_simpson(&integrand, 0.0, radius, 1e-10 * radius.powf(df));
        let weighted_norm = (sphere_area(self.d) * integral).powf(1.0 / q_prime);
        let c3 = weighted_norm / s.powf(df / a / q_prime);
        Ok(ThetaDomain {
            theta,
            q_prime,
            weighted_norm,
            c3,
        })
    }

    /// Δ(ψ̃ − ψ) at s = 1 on the transition shell 1 < |x| < 2, in closed form.
    pub fn transition_laplacian_gap(&self, r: f64) -> Result<f64> {
        if !(r > 1.0 && r < 2.0) {
            return Err(domain("transition_laplacian_gap", "needs 1 < r < 2"));
        }
        let (b, df) = (self.beta, self.d as f64);
        Ok(b / (r * r) * ((df + b - 2.0) * r.powf(b) + 1.0 - (df - 1.0) * (2.0 - r) * r))
    }
}

/// θ-dependent quantities on the ball Ω^s = B(0, s^{1/α}).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaDomain {
    pub theta: f64,
    pub q_prime: f64,
    pub weighted_norm: f64,
    /// weighted_norm · s^{−(d/α)/q'}; independent of s.
    pub c3: f64,
}

/// The desingularizing weights built from the profile η.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFamily {
    pub beta: f64,
    pub alpha: f64,
}

impl WeightFamily {
    /// η(t): t^β on (0,1), βt(2 − t/2) + 1 − 3β/2 on [1,2], 1 + β/2 beyond.
    pub fn eta(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(domain("eta", format!("needs t > 0, got {t}")));
        }
        Ok(self.eta_unchecked(t))
    }

    pub(crate) fn eta_unchecked(&self, t: f64) -> f64 {
        let b = self.beta;
        if t <= 0.0 {
            0.0
        } else if t < 1.0 {
            t.powf(b)
        } else if t <= 2.0 {
            b * t * (2.0 - 0.5 * t) + 1.0 - 1.5 * b
        } else {
            1.0 + 0.5 * b
        }
    }

    /// η'(t), one-sided from the right at the breakpoints.
    pub fn eta_prime(&self, t: f64) -> f64 {
        let b = self.beta;
        if t < 1.0 {
            b * t.powf(b - 1.0)
        } else if t < 2.0 {
            b * (2.0 - t)
        } else {
            0.0
        }
    }

    /// η₀(u): u^β on (0,1), 1 beyond.
    pub fn eta0(&self, u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else if u < 1.0 {
            u.powf(self.beta)
        } else {
            1.0
        }
    }

    pub fn psi_radial(&self, s: f64, r: f64) -> f64 {
        self.eta_unchecked(r * s.powf(-1.0 / self.alpha))
    }

    /// ψ_s(x) = η(s^{−1/α}|x|).
    pub fn psi(&self, s: f64, x: &[f64]) -> Result<f64> {
        if !(s > 0.0) {
            return Err(domain("psi", format!("needs s > 0, got {s}")));
        }
        Ok(self.psi_radial(s, norm(x)))
    }

    pub fn psi0_radial(&self, t: f64, r: f64) -> f64 {
        self.eta0(r * t.powf(-1.0 / self.alpha))
    }

    /// ψ_{0,t}(x) = η₀(t^{−1/α}|x|).
    pub fn psi0(&self, t: f64, x: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(domain("psi0", format!("needs t > 0, got {t}")));
        }
        Ok(self.psi0_radial(t, norm(x)))
    }

    /// ψ̃_s(x) = s^{−β/α}|x|^β, defined for every x.
    pub fn psi_tilde(&self, s: f64, x: &[f64]) -> Result<f64> {
        if !(s > 0.0) {
            return Err(domain("psi_tilde", format!("needs s > 0, got {s}")));
        }
        Ok(s.powf(-self.beta / self.alpha) * norm(x).powf(self.beta))
    }

    /// Compares t^{−1}∫₀ᵗ‖ψ_{0,τ}h‖₁dτ against ((2α−β)/(α−β))‖ψ_{0,t}h‖₁ for a
    /// radial density h tabulated on `radii` in dimension `d`.
    pub fn time_avg_weight_check(
        &self,
        d: usize,
        radii: &[f64],
        h: &[f64],
        t: f64,
    ) -> Result<TimeAverageCheck> {
        if radii.len() != h.len() || radii.len() < 2 {
            return Err(domain("time_avg_weight_check", "radii and h must match, len >= 2"));
        }
        if let Some(v) = h.iter().find(|v| !(**v >= 0.0)) {
            return Err(domain(
                "time_avg_weight_check",
                format!("h must be nonnegative, found {v}"),
            ));
        }
        if !(t > 0.0) {
            return Err(domain("time_avg_weight_check", "needs t > 0"));
        }
        let (a, b) = (self.alpha, self.beta);
        let dm1 = d as f64 - 1.0;
        let area = sphere_area(d);
        // ∫₀ᵗ ψ_{0,τ}(r) dτ per radius: the integrand is 1 for τ < r^α, (r τ^{−1/α})^β after.
        let time_integral = |r: f64| -> f64 {
            let kink = r.powf(a);
            if kink >= t {
                return t;
            }
            let tail = quad::gauss(32, kink, t, |tau| (r * tau.powf(-1.0 / a)).powf(b));
            kink + tail
        };
        let lhs_density: Vec<f64> = radii
            .iter()
            .zip(h)
            .map(|(&r, &hv)| time_integral(r) / t * hv * r.powf(dm1))
            .collect();
        let rhs_density: Vec<f64> = radii
            .iter()
            .zip(h)
            .map(|(&r, &hv)| self.psi0_radial(t, r) * hv * r.powf(dm1))
            .collect();
        let lhs = area * quad::trapezoid(radii, &lhs_density);
        let norm_t = area * quad::trapezoid(radii, &rhs_density);
        let rhs = (2.0 * a - b) / (a - b) * norm_t;
        Ok(TimeAverageCheck {
            lhs,
            rhs,
            ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        })
    }
}

/// Result of the time-averaged weight inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAverageCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl TimeAverageCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs * (1.0 + 1e-6)
    }
}
