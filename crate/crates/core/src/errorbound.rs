//! Explicit error bounds on `|F̄ − F|` for perturbed walks.
//!
//! With polynomial bounds on the bias terms along both axes and a constant
//! bound at the origin, the bound is linear in the bias-bound coefficients.
//! [`Multipliers`] holds the coefficient of each of them.

use serde::Serialize;

use crate::error::{Error, Result};
pub use crate::polylog::polylog_neg;
use crate::model::{RandomWalk, RateField, State};
use crate::perturb::{PerturbedWalk, ThresholdStatus};
use crate::polylog::li_neg;

/// Largest supported degree of a bias-bound polynomial.
pub const MAX_DEGREE: usize = 6;
const VALIDITY_WINDOW: u32 = 1000;

/// `B₁(n₁,0) = Σ_m b1[m] n₁^m`, `B₂(0,n₂) = Σ_m b2[m] n₂^m` and `B₃ = b3`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasBounds {
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub b3: f64,
}

impl BiasBounds {
    pub fn new(b1: Vec<f64>, b2: Vec<f64>, b3: f64) -> Result<Self> {
        if b1.is_empty() || b1.len() != b2.len() || b1.len() > MAX_DEGREE + 1 {
            return Err(Error::Domain(format!(
                "bias polynomials need equal degree at most {MAX_DEGREE} (got {} and {} coefficients)",
                b1.len(),
                b2.len()
            )));
        }
        if b1.iter().chain(&b2).chain([&b3]).any(|x| !x.is_finite()) {
            return Err(Error::Domain("bias coefficients must be finite".into()));
        }
        if b3 < 0.0 {
            return Err(Error::Domain(format!("origin bias bound {b3} is negative")));
        }
        let bounds = BiasBounds { b1, b2, b3 };
        for (name, coeffs) in [("B1", &bounds.b1), ("B2", &bounds.b2)] {
            if *coeffs.last().unwrap() < 0.0 {
                return Err(Error::Domain(format!("{name} has a negative leading coefficient")));
            }
            if let Some(n) = (1..=VALIDITY_WINDOW).find(|&n| poly(coeffs, f64::from(n)) < -1e-12) {
                return Err(Error::Domain(format!("{name} is negative at n = {n}")));
            }
        }
        Ok(bounds)
    }

    /// Constants `B₁ = B₂ = B₃ = b`.
    pub fn constant(b: f64) -> Result<Self> {
        BiasBounds::new(vec![b], vec![b], b)
    }

    pub fn degree(&self) -> usize {
        self.b1.len() - 1
    }

    pub fn horizontal(&self, n1: u32) -> f64 {
        poly(&self.b1, f64::from(n1))
    }

    pub fn vertical(&self, n2: u32) -> f64 {
        poly(&self.b2, f64::from(n2))
    }
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBoundReport {
    pub delta_h: f64,
    pub delta_v: f64,
    pub delta_r: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub total: f64,
}

/// Sums of absolute differences of the state-independent boundary rates:
/// upward off the horizontal axis, rightward off the vertical axis, and at
/// the origin.
pub fn rate_deltas(base: &RandomWalk, walk: &PerturbedWalk) -> (f64, f64, f64) {
    let diff = |s: State, di: i8, dj: i8| {
        let d = crate::model::Dir::new(di, dj);
        (walk.rate(s, d) - base.rate(s, d)).abs()
    };
    let h_axis = State::new(1, 0);
    let v_axis = State::new(0, 1);
    let delta_h = (-1..=1).map(|i| diff(h_axis, i, 1)).sum();
    let delta_v = (-1..=1).map(|j| diff(v_axis, 1, j)).sum();
    let delta_r = diff(State::ORIGIN, 1, 0) + diff(State::ORIGIN, 0, 1) + diff(State::ORIGIN, 1, 1);
    (delta_h, delta_v, delta_r)
}

/// Coefficients of the bound as a linear form in the bias-bound coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w3: f64,
    pub deltas: (f64, f64, f64),
}

impl Multipliers {
    /// Bound parts `(g1, g2, g3)` for the given bias bounds.
    pub fn parts(&self, bias: &BiasBounds) -> Result<(f64, f64, f64)> {
        if bias.b1.len() > self.w1.len() {
            return Err(Error::Domain(format!(
                "bias degree {} exceeds multiplier degree {}",
                bias.degree(),
                self.w1.len() - 1
            )));
        }
        let dot = |w: &[f64], b: &[f64]| w.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        Ok((dot(&self.w1, &bias.b1), dot(&self.w2, &bias.b2), self.w3 * bias.b3))
    }

    pub fn report(&self, bias: &BiasBounds) -> Result<ErrorBoundReport> {
        let (g1, g2, g3) = self.parts(bias)?;
        let (delta_h, delta_v, delta_r) = self.deltas;
        Ok(ErrorBoundReport { delta_h, delta_v, delta_r, g1, g2, g3, total: g1 + g2 + g3 })
    }
}

/// Closed-form multipliers up to `degree`. They are only a valid bound when
/// the perturbed downward axis rates dominate the base ones.
pub fn bound_multipliers(base: &RandomWalk, walk: &PerturbedWalk, degree: usize) -> Multipliers {
    let deltas = rate_deltas(base, walk);
    let (delta_h, delta_v, delta_r) = deltas;
    let p = walk.params();
    let terms = walk.pi_bar().terms();
    let lead_h = delta_h + (p.h_bar_10 - base.h(1, 0)).abs() - base.h(-1, 0);
    let lead_v = delta_v + (p.v_bar_01 - base.v(0, 1)).abs() - base.v(0, -1);
    let mut w1 = vec![0.0; degree + 1];
    let mut w2 = vec![0.0; degree + 1];
    for (m, (x1, x2)) in w1.iter_mut().zip(w2.iter_mut()).enumerate() {
        let m = m as u32;
        for (k, t) in terms.iter().enumerate() {
            let li_r = li_neg(m, t.rho);
            let li_s = li_neg(m, t.sigma);
            *x1 += t.c * li_r * (lead_h + p.h_bar_10 / t.rho - p.alpha[k] / (1.0 - t.rho));
            *x2 += t.c * li_s * (lead_v + p.v_bar_01 / t.sigma - p.beta[k] / (1.0 - t.sigma));
        }
    }
    let w3 = delta_r * walk.pi_bar().coefficient_sum();
    Multipliers { w1, w2, w3, deltas }
}

/// Multipliers of the summed bound `Σ π̄ Σ |q̄ − q| B`, valid without the
/// threshold condition. Axis sums stop once the remaining mass is negligible.
pub fn summed_multipliers(base: &RandomWalk, walk: &PerturbedWalk, degree: usize) -> Multipliers {
    let deltas = rate_deltas(base, walk);
    let (delta_h, delta_v, delta_r) = deltas;
    let p = walk.params();
    let fixed_h = delta_h + (p.h_bar_10 - base.h(1, 0)).abs();
    let fixed_v = delta_v + (p.v_bar_01 - base.v(0, 1)).abs();
    let pi = walk.pi_bar();
    let mut w1 = vec![0.0; degree + 1];
    let mut w2 = vec![0.0; degree + 1];
    let mut n = 1u32;
    loop {
        let nf = f64::from(n);
        let ph = pi.evaluate(State::new(n, 0));
        let pv = pi.evaluate(State::new(0, n));
        let gh = ph * (fixed_h + (walk.h_bar_down(n) - base.h(-1, 0)).abs());
        let gv = pv * (fixed_v + (walk.v_bar_down(n) - base.v(0, -1)).abs());
        let mut power = 1.0;
        for m in 0..=degree {
            w1[m] += gh * power;
            w2[m] += gv * power;
            power *= nf;
        }
        let scale = nf.powi(degree as i32 + 2);
        if (ph + pv) * scale < 1e-20 || n >= 1_000_000 {
            break;
        }
        n += 1;
    }
    let w3 = delta_r * pi.coefficient_sum();
    Multipliers { w1, w2, w3, deltas }
}

fn check_threshold(walk: &PerturbedWalk) -> Result<()> {
    match walk.threshold_status() {
        ThresholdStatus::Violated => {
            let (lh, lv) = walk.limit_rates();
            let (mh, mv) = walk.window_minima();
            Err(Error::ThresholdViolated(format!(
                "perturbed downward axis rates (window minima {mh:.6}, {mv:.6}; limits {lh:.6}, {lv:.6}) fall below the base rates"
            )))
        }
        _ => Ok(()),
    }
}

/// The bound with polynomial bias bounds of any supported degree.
pub fn error_bound(base: &RandomWalk, walk: &PerturbedWalk, bias: &BiasBounds) -> Result<ErrorBoundReport> {
    check_threshold(walk)?;
    bound_multipliers(base, walk, bias.degree()).report(bias)
}

/// The bound with constant bias bounds, evaluated through the geometric
/// series directly.
pub fn error_bound_constant(
    base: &RandomWalk,
    walk: &PerturbedWalk,
    b1: f64,
    b2: f64,
    b3: f64,
) -> Result<ErrorBoundReport> {
    check_threshold(walk)?;
    let (delta_h, delta_v, delta_r) = rate_deltas(base, walk);
    let p = walk.params();
    let terms = walk.pi_bar().terms();
    let lead_h = delta_h + (p.h_bar_10 - base.h(1, 0)).abs() - base.h(-1, 0);
    let lead_v = delta_v + (p.v_bar_01 - base.v(0, 1)).abs() - base.v(0, -1);
    let (mut s_r, mut s_r_up, mut s_a) = (0.0, 0.0, 0.0);
    let (mut s_s, mut s_s_up, mut s_b) = (0.0, 0.0, 0.0);
    for (k, t) in terms.iter().enumerate() {
        s_r += t.c * t.rho / (1.0 - t.rho);
        s_r_up += t.c / (1.0 - t.rho);
        s_a += t.c * p.alpha[k] * t.rho / (1.0 - t.rho).powi(2);
        s_s += t.c * t.sigma / (1.0 - t.sigma);
        s_s_up += t.c / (1.0 - t.sigma);
        s_b += t.c * p.beta[k] * t.sigma / (1.0 - t.sigma).powi(2);
    }
    let g1 = b1 * (lead_h * s_r + p.h_bar_10 * s_r_up - s_a);
    let g2 = b2 * (lead_v * s_s + p.v_bar_01 * s_s_up - s_b);
    let g3 = delta_r * b3 * walk.pi_bar().coefficient_sum();
    Ok(ErrorBoundReport { delta_h, delta_v, delta_r, g1, g2, g3, total: g1 + g2 + g3 })
}

/// Decay rate of the product-form stationary distribution of the
/// joint-departures walk at `μ* = μ/2`.
pub fn product_form_rho(lambda: f64, mu: f64) -> f64 {
    (-mu + (mu * mu + 8.0 * lambda * mu).sqrt()) / (2.0 * mu)
}

/// Closed-form bound of the homogeneous product-form perturbation of the
/// joint-departures walk for the empty-system probability.
pub fn homogeneous_bound_joint_departures(lambda: f64, mu: f64, mu_star: f64) -> Result<f64> {
    if !(lambda > 0.0 && mu_star > 0.0 && mu_star < mu) {
        return Err(Error::Domain(format!(
            "need λ > 0 and 0 < μ* < μ, got λ={lambda}, μ*={mu_star}, μ={mu}"
        )));
    }
    if (2.0 * lambda + mu - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("need 2λ + μ = 1, got {}", 2.0 * lambda + mu)));
    }
    let rho = product_form_rho(lambda, mu);
    Ok(2.0 * rho * (1.0 - rho) * (mu / 2.0 - mu_star).abs() * (mu - mu_star) / (mu * mu_star))
}

/// Constant bias bound `max{1/μ*, (μ−μ*)/(μμ*)}` for the empty-system reward.
pub fn joint_departures_bias_constant(mu: f64, mu_star: f64) -> f64 {
    (1.0 / mu_star).max((mu - mu_star) / (mu * mu_star))
}
