//! Scalar inequalities behind the L^r semigroup comparison, the Coulhon–Raynaud
//! extrapolation constant and the Nash-iteration bookkeeping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::ModelParams;
use crate::specfun::{kappa_r, kappa_r_closed};

/// One side-by-side evaluation of an inequality lhs ≤ rhs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

const REL_TOL: f64 = 1e-12;

fn check(name: &'static str, lhs: f64, rhs: f64, scale: f64) -> InequalityCheck {
    InequalityCheck {
        name,
        lhs,
        rhs,
        holds: lhs <= rhs + REL_TOL * scale.max(lhs.abs()).max(rhs.abs()),
    }
}

/// Evaluates (l₁)–(l₅) at (s, t, r, b). The third and fifth inequalities are
/// taken in their homogeneous form
///   4/(rr')(s^r + t^r + 2b(st)^{r/2}) ≤ s^r + t^r + b(st^{r−1} + ts^{r−1})
///   s^r + t^r + b(st^{r−1} + ts^{r−1}) ≤ ϰ(r)(s^r + t^r + 2b(st)^{r/2}).
/// The tolerance is relative to the size of the individual terms, since both
/// sides can be differences of numbers near 10⁴⁰.
pub fn lemma_b1_check(s: f64, t: f64, r: f64, b: f64) -> Result<Vec<InequalityCheck>> {
    if !(s >= 0.0 && t >= 0.0) || !(r >= 1.0) || !r.is_finite() || !(-1.0..=1.0).contains(&b) {
        return Err(domain("lemma_b1_check", "needs s, t >= 0, 1 <= r < inf, |b| <= 1"));
    }
    Ok(lemma_terms(s, t, r, b, kappa_r_closed(r)))
}

fn lemma_terms(s: f64, t: f64, r: f64, b: f64, kap: f64) -> Vec<InequalityCheck> {
    let c = 4.0 * (r - 1.0) / (r * r);
    let (sr, tr) = (s.powf(r), t.powf(r));
    let (sh, th) = (s.powf(0.5 * r), t.powf(0.5 * r));
    let (sm, tm) = (s.powf(r - 1.0), t.powf(r - 1.0));
    let cross = s * tm + t * sm;
    let geo = (s * t).powf(0.5 * r);
    let scale = sr + tr + cross + 2.0 * geo;

    let l1_mid = (s - t) * (sm - tm);
    let l2_mid = (s + t) * (sm + tm);
    let minus = (sh - th).powi(2);
    let plus = (sh + th).powi(2);
    let homog = sr + tr + 2.0 * b * geo;
    let mid = sr + tr + b * cross;
    let l4_lhs = b.abs() * (s * tm - t * sm).abs();
    let bracket = sr + tr - (1.0 - b * b).sqrt() * cross;
    let l4_rhs = if r == 1.0 {
        // The prefactor blows up; the bracket is (s + t)(1 − √(1−b²)) ≥ 0.
        if bracket > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        (r - 2.0).abs() / (2.0 * (r - 1.0).sqrt()) * bracket
    };
    vec![
        check("l1_lower", c * minus, l1_mid, scale),
        check("l1_upper", l1_mid, minus, scale),
        check("l2_lower", plus, l2_mid, scale),
        check("l2_upper", l2_mid, kap * plus, scale),
        check("l3", c * homog, mid, scale),
        check("l4", l4_lhs, l4_rhs, scale),
        check("l5", mid, kap * homog, scale),
    ]
}

/// Result of the randomized lemma suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSuite {
    pub draws: usize,
    pub seed: u64,
    /// Violations per inequality name, in the order l1_lower … l5.
    pub violations: Vec<(String, usize)>,
    /// Largest (lhs − rhs)/scale seen per inequality.
    pub worst_margin: Vec<(String, f64)>,
    /// ϰ(r) at r = 1, 1.5, 2, 3, 4, 8, 20.
    pub kappa_table: Vec<(f64, f64)>,
    /// Largest side of (l₄) at r = 2 over 1000 draws; both sides vanish exactly.
    pub l4_tightness_max: f64,
}

impl LemmaSuite {
    pub fn total_violations(&self) -> usize {
        self.violations.iter().map(|(_, v)| v).sum()
    }
}

/// 10⁵-style random sweep: s, t ∈ [0, 100], r ∈ [1, 20], b ∈ [−1, 1].
/// Draw i uses its own ChaCha stream, so the outcome is thread-count free.
pub fn lemma_suite(draws: usize, seed: u64) -> LemmaSuite {
    let per_draw: Vec<Vec<InequalityCheck>> = (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let s = rng.random_range(0.0..=100.0);
            let t = rng.random_range(0.0..=100.0);
            let r = rng.random_range(1.0..=20.0);
            let b = rng.random_range(-1.0..=1.0);
            lemma_terms(s, t, r, b, kappa_r_closed(r))
        })
        .collect();
    let names: Vec<&str> = per_draw.first().map(|c| c.iter().map(|x| x.name).collect()).unwrap_or_default();
    let mut violations = vec![0usize; names.len()];
    let mut worst = vec![f64::NEG_INFINITY; names.len()];
    for checks in &per_draw {
        for (k, c) in checks.iter().enumerate() {
            if !c.holds {
                violations[k] += 1;
            }
            let scale = c.lhs.abs().max(c.rhs.abs()).max(f64::MIN_POSITIVE);
            if c.rhs.is_finite() {
                worst[k] = worst[k].max((c.lhs - c.rhs) / scale);
            }
        }
    }
    let mut tight = 0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..1000 {
        let s: f64 = rng.random_range(0.0..=100.0);
        let t: f64 = rng.random_range(0.0..=100.0);
        let b: f64 = rng.random_range(-1.0..=1.0);
        let l4 = &lemma_terms(s, t, 2.0, b, 1.0)[5];
        tight = tight.max(l4.lhs).max(l4.rhs);
    }
    let kappa_table = [1.0, 1.5, 2.0, 3.0, 4.0, 8.0, 20.0]
        .iter()
        .map(|&r| (r, kappa_r_closed(r)))
        .collect();
    LemmaSuite {
        draws,
        seed,
        violations: names.iter().zip(&violations).map(|(n, v)| (n.to_string(), *v)).collect(),
        worst_margin: names.iter().zip(&worst).map(|(n, v)| (n.to_string(), *v)).collect(),
        kappa_table,
        l4_tightness_max: tight,
    }
}

/// Upper exponent of the extrapolation theorem; ∞ is its own variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationInput {
    pub p: f64,
    pub q: f64,
    pub r: Exponent,
    pub nu: f64,
    pub m1: f64,
    pub m2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    /// (r/q)(q − p)/(r − p), or (q − p)/q for r = ∞.
    pub interp_exponent: f64,
    /// 2^{ν/(1−β)²} M₁ M₂^{1/(1−β)}
    pub m: f64,
    /// ν/(1 − β), the time exponent of the extrapolated bound.
    pub time_exponent: f64,
}

/// The constant of the Coulhon–Raynaud extrapolation.
///
/// 1 − β is formed as p(r − q)/(q(r − p)) so that rational inputs give exact
/// powers of two.
pub fn extrapolation_constant(input: &ExtrapolationInput) -> Result<Extrapolation> {
    let ExtrapolationInput { p, q, r, nu, m1, m2 } = *input;
    if !(p >= 1.0 && q > p) || !q.is_finite() {
        return Err(domain("extrapolation_constant", "needs 1 <= p < q"));
    }
    if !(nu > 0.0) || !(m1 >= 1.0) || !(m2 >= 1.0) {
        return Err(domain("extrapolation_constant", "needs nu > 0 and M1, M2 >= 1"));
    }
    let (beta, inv_gap) = match r {
        Exponent::Finite(r) => {
            if !(r > q) || !r.is_finite() {
                return Err(domain("extrapolation_constant", "needs q < r"));
            }
            ((r / q) * (q - p) / (r - p), (q * (r - p)) / (p * (r - q)))
        }
        Exponent::Infinity => ((q - p) / q, q / p),
    };
    Ok(Extrapolation {
        interp_exponent: beta,
        m: 2f64.powf(nu * inv_gap * inv_gap) * m1 * m2.powf(inv_gap),
        time_exponent: nu * inv_gap,
    })
}

/// Nash-iteration constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashConstants {
    pub j_prime: f64,
    /// C = 2 c_S M^{−2/j'} / j'
    pub c: f64,
    /// ‖e^{−tΛ}‖_{1→2} ≤ C^{−j'/2} t^{−j'/2}
    pub one_to_two: f64,
    /// (r, c₁(r)) with c₁(r) = C (α/d) · 4/(2r)', r = 1, 2, 4, …
    pub c1: Vec<(f64, f64)>,
    /// Π_{k<m} c₁(2^k)^{−d/(2α2^k)}, the coefficient of the 1 → 2^m bound
    /// after m doublings (time factors kept apart), for m = 1..=m_max.
    pub telescoped: Vec<f64>,
    /// Limit of `telescoped` as m → ∞.
    pub c_n: f64,
}

pub fn nash_constants(params: &ModelParams, m: f64, c_s: f64, m_max: usize) -> Result<NashConstants> {
    if !(m > 0.0) || !(c_s > 0.0) || m_max == 0 {
        return Err(domain("nash_constants", "needs M > 0, c_S > 0, m_max >= 1"));
    }
    let (d, a) = (params.d as f64, params.alpha);
    let jp = d / a;
    let c = 2.0 * c_s * m.powf(-2.0 / jp) / jp;
    let mut c1 = Vec::with_capacity(m_max);
    let mut telescoped = Vec::with_capacity(m_max);
    let mut log_coef = 0.0;
    for k in 0..m_max {
        let r = 2f64.powi(k as i32);
        let dual = 2.0 * r / (2.0 * r - 1.0);
        let c1r = c * (a / d) * 4.0 / dual;
        c1.push((r, c1r));
        log_coef += -d / (2.0 * a * r) * c1r.ln();
        telescoped.push(log_coef.exp());
    }
    // Increments decay like 2^{−k}.
    let mut tail = log_coef;
    for k in m_max..m_max + 200 {
        let r = 2f64.powi(k as i32);
        let dual = 2.0 * r / (2.0 * r - 1.0);
        let c1r = c * (a / d) * 4.0 / dual;
        tail += -d / (2.0 * a * r) * c1r.ln();
    }
    Ok(NashConstants {
        j_prime: jp,
        c,
        one_to_two: c.powf(-0.5 * jp),
        c1,
        telescoped,
        c_n: tail.exp(),
    })
}

/// Consistency report for the weight conditions on Ω^s = B(0, s^{1/α}).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConditions {
    pub theta: f64,
    /// max ψ_s^{−θ} over sampled points outside Ω^s; must be ≤ c₂ = 1.
    pub outside_max: f64,
    /// (s, c₃) at each requested s.
    pub c3: Vec<(f64, f64)>,
    /// max |c₃(s)/c₃(s₀) − 1|.
    pub c3_spread: f64,
    pub holds: bool,
}

pub fn b22_b23_verifier(params: &ModelParams, scales: &[f64]) -> Result<WeightConditions> {
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0)) {
        return Err(domain("b22_b23_verifier", "needs positive scales"));
    }
    let w = params.weights();
    let mut theta = 0.0;
    let mut outside_max: f64 = 0.0;
    let mut c3 = Vec::new();
    for &s in scales {
        let td = params.theta_and_domain(s)?;
        theta = td.theta;
        let radius = s.powf(1.0 / params.alpha);
        for i in 0..400 {
            let r = radius * (1.0 + 0.05 * i as f64).powf(1.5);
            outside_max = outside_max.max(w.psi_radial(s, r).powf(-theta));
        }
        c3.push((s, td.c3));
    }
    let c0 = c3[0].1;
    let spread = c3.iter().map(|(_, c)| (c / c0 - 1.0).abs()).fold(0.0, f64::max);
    Ok(WeightConditions {
        theta,
        outside_max,
        c3: c3.clone(),
        c3_spread: spread,
        holds: outside_max <= 1.0 && spread < 1e-6 && theta > 0.0 && theta < 1.0,
    })
}

/// ϰ on r > 1 (re-exported for the report tables).
pub fn kappa(r: f64) -> Result<f64> {
    if r == 1.0 {
        return Ok(2.0);
    }
    kappa_r(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equalities_at_r_two_and_diagonal() {
        let c = lemma_b1_check(3.0, 3.0, 5.0, 0.3).unwrap();
        assert_eq!(c[0].lhs, 0.0);
        assert_eq!(c[0].rhs, 0.0);
        let c = lemma_b1_check(2.0, 7.0, 2.0, -0.4).unwrap();
        assert!((c[0].lhs - c[0].rhs).abs() < 1e-12);
        assert!((c[4].lhs - c[4].rhs).abs() < 1e-12);
        assert_eq!(c[5].lhs, 0.0);
        assert!(c.iter().all(|x| x.holds));
    }

    #[test]
    fn printed_third_inequality_fails() {
        // With s^{r/2} + t^{r/2} on the left the statement is false for small s, t.
        let (s, t, r) = (0.01f64, 0.01f64, 4.0f64);
        let lhs = 4.0 * (r - 1.0) / (r * r) * (s.powf(r / 2.0) + t.powf(r / 2.0));
        let rhs = s.powf(r) + t.powf(r);
        assert!(lhs > rhs);
        assert!(lemma_b1_check(s, t, r, 0.0).unwrap().iter().all(|c| c.holds));
    }

    #[test]
    fn extrapolation_examples() {
        let e = extrapolation_constant(&ExtrapolationInput {
            p: 1.0,
            q: 2.0,
            r: Exponent::Finite(4.0),
            nu: 1.0,
            m1: 1.0,
            m2: 1.0,
        })
        .unwrap();
        assert_eq!(e.m, 512.0);
        assert!((e.interp_exponent - 2.0 / 3.0).abs() < 1e-15);
        let inf = extrapolation_constant(&ExtrapolationInput {
            p: 1.0,
            q: 2.0,
            r: Exponent::Infinity,
            nu: 1.0,
            m1: 1.0,
            m2: 1.0,
        })
        .unwrap();
        assert_eq!(inf.interp_exponent, 0.5);
        let small = extrapolation_constant(&ExtrapolationInput {
            p: 1.0,
            q: 2.0,
            r: Exponent::Finite(4.0),
            nu: 1e-12,
            m1: 1.0,
            m2: 1.0,
        })
        .unwrap();
        assert!((small.m - 1.0).abs() < 1e-10);
        let bad = ExtrapolationInput {
            p: 2.0,
            q: 2.0,
            r: Exponent::Finite(4.0),
            nu: 1.0,
            m1: 1.0,
            m2: 1.0,
        };
        assert!(extrapolation_constant(&bad).is_err());
    }

    #[test]
    fn extrapolation_monotone() {
        let base = ExtrapolationInput {
            p: 1.0,
            q: 2.0,
            r: Exponent::Finite(4.0),
            nu: 1.0,
            m1: 1.0,
            m2: 1.0,
        };
        let m = |f: &dyn Fn(&mut ExtrapolationInput, f64), v: f64| {
            let mut i = base;
            f(&mut i, v);
            extrapolation_constant(&i).unwrap().m
        };
        for k in 0..10 {
            let (a, b) = (1.0 + k as f64 * 0.5, 1.5 + k as f64 * 0.5);
            assert!(m(&|i, v| i.nu = v, a) < m(&|i, v| i.nu = v, b));
            assert!(m(&|i, v| i.m1 = v, a) < m(&|i, v| i.m1 = v, b));
            assert!(m(&|i, v| i.m2 = v, a) < m(&|i, v| i.m2 = v, b));
        }
    }

    #[test]
    fn nash_arithmetic() {
        let p = ModelParams::new(3, 1.5, 5.0, 0.0).unwrap();
        let n = nash_constants(&p, 1.0, 1.0, 30).unwrap();
        assert_eq!(n.c, 1.0);
        assert_eq!(n.one_to_two, 1.0);
        assert!((n.c1[0].1 - 2.0 * n.c * 1.5 / 3.0).abs() < 1e-15);
        // Between m = 20 and m = 30 the log changes by Σ_{k=20}^{29} (d/2α)2^{−k} ln c₁(2^k),
        // about 2^{−20} ln 2 · d/α here.
        let (a, b) = (n.telescoped[19], n.telescoped[29]);
        let bound = 2f64.powi(-20) * 2f64.ln() * 2.0 * 1.001;
        assert!(((a - b) / b).abs() < bound);
        assert!(((a - b) / b).abs() < 2e-6);
        assert!(((n.c_n - b) / b).abs() < 1e-6);
    }

    #[test]
    fn weight_conditions() {
        let p = ModelParams::new(3, 1.5, 5.0, 0.0).unwrap();
        let r = b22_b23_verifier(&p, &[0.1, 1.0, 10.0]).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(r.outside_max <= 1.0);
    }

    #[test]
    fn suite_is_clean_and_reproducible() {
        let a = lemma_suite(2000, 3);
        assert_eq!(a.total_violations(), 0, "{:?}", a.violations);
        assert_eq!(a, lemma_suite(2000, 3));
        assert!((a.kappa_table[2].1 - 1.0).abs() < 1e-12);
        assert_eq!(a.l4_tightness_max, 0.0);
    }
}
