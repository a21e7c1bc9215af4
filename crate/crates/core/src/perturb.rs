//! Single-direction inhomogeneous perturbations.
//!
//! Given a base walk and a sum of geometric terms whose points all lie on
//! `Q`, the perturbed walk keeps every interior rate, copies the upward rates
//! off each axis from the interior, fixes the outward axis rates `h̄₁,₀` and
//! `v̄₀,₁`, and lets only the rates back toward the origin along each axis
//! depend on the state. The geometric sum is then stationary for it.

use crate::error::{Error, Result};
use crate::geomsum::{pow_n, GeometricSum};
use crate::model::{q_value, Component, Dir, RandomWalk, RateField, State};

/// Tolerance for a term to count as lying on `Q`.
pub const ON_Q_TOLERANCE: f64 = 1e-10;
/// Axis positions on which constructed rates are checked.
pub const RATE_WINDOW: u32 = 10_000;
/// Slack in rate comparisons that hold with equality in exact arithmetic.
pub const RATE_SLACK: f64 = 1e-12;

/// `Σ_i q_{i,1} − Σ_i ρ^{-i} σ q_{i,-1}`.
pub fn alpha(base: &RandomWalk, rho: f64, sigma: f64) -> f64 {
    (-1..=1i8)
        .map(|i| base.q(i, 1) - rho.powi(-i32::from(i)) * sigma * base.q(i, -1))
        .sum()
}

/// `Σ_j q_{1,j} − Σ_j ρ σ^{-j} q_{-1,j}`.
pub fn beta(base: &RandomWalk, rho: f64, sigma: f64) -> f64 {
    (-1..=1i8)
        .map(|j| base.q(1, j) - rho * sigma.powi(-i32::from(j)) * base.q(-1, j))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub h_bar_10: f64,
    pub v_bar_01: f64,
}

/// Dominant decay rates and their weighted partners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitParams {
    /// `max_k ρ_k`
    pub rho_star: f64,
    /// `c`-weighted mean of `σ_k` over terms with `ρ_k = rho_star`
    pub sigma_star: f64,
    /// `c`-weighted mean of `ρ_k` over terms with `σ_k = sigma_star2`
    pub rho_star2: f64,
    /// `max_k σ_k`
    pub sigma_star2: f64,
    /// Number of terms sharing `rho_star`
    pub rho_ties: usize,
    /// Number of terms sharing `sigma_star2`
    pub sigma_ties: usize,
}

fn same_rate(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

impl LimitParams {
    pub fn of(pi_bar: &GeometricSum) -> Self {
        let terms = pi_bar.terms();
        let rho_star = terms.iter().map(|t| t.rho).fold(f64::MIN, f64::max);
        let sigma_star2 = terms.iter().map(|t| t.sigma).fold(f64::MIN, f64::max);
        let (mut w1, mut s1, mut n1) = (0.0, 0.0, 0);
        let (mut w2, mut r2, mut n2) = (0.0, 0.0, 0);
        for t in terms {
            if same_rate(t.rho, rho_star) {
                w1 += t.c;
                s1 += t.c * t.sigma;
                n1 += 1;
            }
            if same_rate(t.sigma, sigma_star2) {
                w2 += t.c;
                r2 += t.c * t.rho;
                n2 += 1;
            }
        }
        LimitParams {
            rho_star,
            sigma_star: s1 / w1,
            rho_star2: r2 / w2,
            sigma_star2,
            rho_ties: n1,
            sigma_ties: n2,
        }
    }
}

/// How the perturbed rates were shown to dominate the base rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdStatus {
    /// Positive coefficients and outward rates at or above the sufficient thresholds.
    Certified,
    /// Checked on the rate window and in the limit only.
    Empirical,
    Violated,
}

impl ThresholdStatus {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdStatus::Certified => "certified",
            ThresholdStatus::Empirical => "empirical",
            ThresholdStatus::Violated => "violated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedWalk {
    base: RandomWalk,
    pi_bar: GeometricSum,
    params: PerturbationParams,
    limits: LimitParams,
    gamma_bar: f64,
    h_window_min: f64,
    v_window_min: f64,
}

impl PerturbedWalk {
    pub fn base(&self) -> &RandomWalk {
        &self.base
    }

    pub fn pi_bar(&self) -> &GeometricSum {
        &self.pi_bar
    }

    pub fn params(&self) -> &PerturbationParams {
        &self.params
    }

    pub fn limit_params(&self) -> LimitParams {
        self.limits
    }

    /// Uniform bound on the total outflow of every state.
    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }

    /// State-dependent rate from `(n₁, 0)` toward the origin, `n₁ ≥ 1`.
    pub fn h_bar_down(&self, n1: u32) -> f64 {
        let rho_star = self.limits.rho_star;
        let (mut den, mut up, mut drift) = (0.0, 0.0, 0.0);
        for (t, &a) in self.pi_bar.terms().iter().zip(&self.params.alpha) {
            let w = t.c * pow_n(t.rho / rho_star, n1);
            den += w;
            up += w / t.rho;
            drift += w * a / (1.0 - t.rho);
        }
        up / den * self.params.h_bar_10 - drift / den
    }

    /// State-dependent rate from `(0, n₂)` toward the origin, `n₂ ≥ 1`.
    pub fn v_bar_down(&self, n2: u32) -> f64 {
        let sigma_star = self.limits.sigma_star2;
        let (mut den, mut up, mut drift) = (0.0, 0.0, 0.0);
        for (t, &b) in self.pi_bar.terms().iter().zip(&self.params.beta) {
            let w = t.c * pow_n(t.sigma / sigma_star, n2);
            den += w;
            up += w / t.sigma;
            drift += w * b / (1.0 - t.sigma);
        }
        up / den * self.params.v_bar_01 - drift / den
    }

    /// Limits of `h_bar_down(n)` and `v_bar_down(n)` as `n → ∞`.
    pub fn limit_rates(&self) -> (f64, f64) {
        let l = self.limits;
        let base = &self.base;
        let limit_h = self.params.h_bar_10 / l.rho_star
            - alpha(base, l.rho_star, l.sigma_star) / (1.0 - l.rho_star);
        let limit_v = self.params.v_bar_01 / l.sigma_star2
            - beta(base, l.rho_star2, l.sigma_star2) / (1.0 - l.sigma_star2);
        (limit_h, limit_v)
    }

    /// Smallest `h_bar_down` and `v_bar_down` seen on the rate window.
    pub fn window_minima(&self) -> (f64, f64) {
        (self.h_window_min, self.v_window_min)
    }

    /// Whether the perturbed downward axis rates dominate the base ones.
    pub fn threshold_status(&self) -> ThresholdStatus {
        let base = &self.base;
        if let Ok((h_min, v_min)) = thresholds(base, &self.pi_bar) {
            if self.params.h_bar_10 >= h_min - RATE_SLACK
                && self.params.v_bar_01 >= v_min - RATE_SLACK
            {
                return ThresholdStatus::Certified;
            }
        }
        let (limit_h, limit_v) = self.limit_rates();
        let h = base.h(-1, 0);
        let v = base.v(0, -1);
        if self.h_window_min >= h - RATE_SLACK
            && self.v_window_min >= v - RATE_SLACK
            && limit_h >= h - RATE_SLACK
            && limit_v >= v - RATE_SLACK
        {
            ThresholdStatus::Empirical
        } else {
            ThresholdStatus::Violated
        }
    }
}

impl RateField for PerturbedWalk {
    fn rate(&self, s: State, d: Dir) -> f64 {
        let base = &self.base;
        match s.component() {
            Component::Interior => base.q(d.di, d.dj),
            Component::Horizontal => match (d.di, d.dj) {
                (i, 1) => base.q(i, 1),
                (1, 0) => self.params.h_bar_10,
                (-1, 0) => self.h_bar_down(s.n1),
                _ => 0.0,
            },
            Component::Vertical => match (d.di, d.dj) {
                (1, j) => base.q(1, j),
                (0, 1) => self.params.v_bar_01,
                (0, -1) => self.v_bar_down(s.n2),
                _ => 0.0,
            },
            Component::Origin => match (d.di, d.dj) {
                (1, 0) => self.params.h_bar_10,
                (0, 1) => self.params.v_bar_01,
                (1, 1) => base.q(1, 1),
                _ => 0.0,
            },
        }
    }
}

/// Builds the perturbed walk for which `pi_bar` is stationary.
pub fn build_perturbation(
    base: &RandomWalk,
    pi_bar: &GeometricSum,
    h_bar_10: f64,
    v_bar_01: f64,
) -> Result<PerturbedWalk> {
    for (index, t) in pi_bar.terms().iter().enumerate() {
        let residual = q_value(base, t.rho, t.sigma);
        if !(residual.abs() < ON_Q_TOLERANCE) {
            return Err(Error::NotOnQ { index, residual });
        }
    }
    for (rate, dir, state) in [
        (h_bar_10, Dir::new(1, 0), State::new(1, 0)),
        (v_bar_01, Dir::new(0, 1), State::new(0, 1)),
    ] {
        if !rate.is_finite() || rate < 0.0 {
            return Err(Error::NegativeRate { state, dir, rate });
        }
    }
    let terms = pi_bar.terms();
    let params = PerturbationParams {
        alpha: terms.iter().map(|t| alpha(base, t.rho, t.sigma)).collect(),
        beta: terms.iter().map(|t| beta(base, t.rho, t.sigma)).collect(),
        h_bar_10,
        v_bar_01,
    };
    let mut walk = PerturbedWalk {
        base: base.clone(),
        pi_bar: pi_bar.clone(),
        params,
        limits: LimitParams::of(pi_bar),
        gamma_bar: 0.0,
        h_window_min: f64::INFINITY,
        v_window_min: f64::INFINITY,
    };

    let (limit_h, limit_v) = walk.limit_rates();
    let mut h_max = limit_h;
    let mut v_max = limit_v;
    for n in 1..=RATE_WINDOW {
        let h = walk.h_bar_down(n);
        let v = walk.v_bar_down(n);
        for (rate, state, dir) in [
            (h, State::new(n, 0), Dir::new(-1, 0)),
            (v, State::new(0, n), Dir::new(0, -1)),
        ] {
            if !rate.is_finite() || rate < -RATE_SLACK {
                return Err(Error::NegativeRate { state, dir, rate });
            }
        }
        walk.h_window_min = walk.h_window_min.min(h);
        walk.v_window_min = walk.v_window_min.min(v);
        h_max = h_max.max(h);
        v_max = v_max.max(v);
    }
    for (rate, state, dir) in [
        (limit_h, State::new(u32::MAX, 0), Dir::new(-1, 0)),
        (limit_v, State::new(0, u32::MAX), Dir::new(0, -1)),
    ] {
        if !rate.is_finite() || rate < -RATE_SLACK {
            return Err(Error::NegativeRate { state, dir, rate });
        }
    }

    let up_h: f64 = (-1..=1i8).map(|i| base.q(i, 1)).sum();
    let up_v: f64 = (-1..=1i8).map(|j| base.q(1, j)).sum();
    let margin = 1e-9;
    walk.gamma_bar = [
        base.rates(Component::Interior).total(),
        up_h + h_bar_10 + h_max + margin,
        up_v + v_bar_01 + v_max + margin,
        h_bar_10 + v_bar_01 + base.q(1, 1),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(walk)
}

/// Smallest outward axis rates for which the construction keeps the
/// downward axis rates at or above those of the base walk.
pub fn thresholds(base: &RandomWalk, pi_bar: &GeometricSum) -> Result<(f64, f64)> {
    let mut h_min = f64::MIN;
    let mut v_min = f64::MIN;
    for (index, t) in pi_bar.terms().iter().enumerate() {
        if !(t.c > 0.0) {
            return Err(Error::NegativeCoefficient { index, value: t.c });
        }
        let a = alpha(base, t.rho, t.sigma);
        let b = beta(base, t.rho, t.sigma);
        h_min = h_min.max(t.rho * base.h(-1, 0) + t.rho * a / (1.0 - t.rho));
        v_min = v_min.max(t.sigma * base.v(0, -1) + t.sigma * b / (1.0 - t.sigma));
    }
    Ok((h_min, v_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geomsum::GeometricTerm;
    use crate::model::{balance_residual, intersect_q_with, q_sigma_branches, Curve, Rates};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn jd(mu_star: f64) -> RandomWalk {
        RandomWalk::joint_departures(0.2, 0.6, mu_star).unwrap()
    }

    fn two_terms(w: &RandomWalk) -> GeometricSum {
        let (r1, s1) = intersect_q_with(w, Curve::H).unwrap()[0];
        let (r2, s2) = intersect_q_with(w, Curve::V).unwrap()[0];
        GeometricSum::normalize(vec![
            GeometricTerm::new(r1, s1, 1.0),
            GeometricTerm::new(r2, s2, 1.0),
        ])
        .unwrap()
    }

    fn max_balance_residual(walk: &PerturbedWalk, n: u32) -> f64 {
        let pi = walk.pi_bar().clone();
        let mut worst: f64 = 0.0;
        for n1 in 0..=n {
            for n2 in 0..=n {
                let r = balance_residual(walk, |s| pi.evaluate(s), State::new(n1, n2));
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    #[test]
    fn single_term_on_h_keeps_base_rate() {
        let w = jd(0.18);
        let (rho, sigma) = intersect_q_with(&w, Curve::H).unwrap()[0];
        let pi = GeometricSum::product_form(rho, sigma).unwrap();
        let p = build_perturbation(&w, &pi, 0.2, 0.2).unwrap();
        assert_abs_diff_eq!(p.params().alpha[0], 0.2 - rho * sigma * 0.6, epsilon = 1e-16);
        for n in [1, 2, 10, 500, 5000] {
            assert_abs_diff_eq!(p.h_bar_down(n), 0.18, epsilon = 1e-12);
        }
        let (limit_h, _) = p.limit_rates();
        assert_abs_diff_eq!(limit_h, p.h_bar_down(7), epsilon = 1e-14);
    }

    #[test]
    fn two_term_case_at_018() {
        let w = jd(0.18);
        let pi = two_terms(&w);
        let p = build_perturbation(&w, &pi, 0.2, 0.2).unwrap();
        let (h_min, v_min) = thresholds(&w, &pi).unwrap();
        assert!(h_min <= 0.2 + RATE_SLACK && v_min <= 0.2 + RATE_SLACK);
        assert_eq!(p.threshold_status(), ThresholdStatus::Certified);
        let (lh, lv) = p.limit_rates();
        assert_abs_diff_eq!(lh, 0.18, epsilon = 1e-12);
        assert_abs_diff_eq!(lv, 0.18, epsilon = 1e-12);
        for n in 500..2000 {
            assert!((p.h_bar_down(n) - lh).abs() < 1e-8);
        }
        assert!(max_balance_residual(&p, 50) < 1e-10);
    }

    #[test]
    fn limit_at_seventy_percent() {
        let w = jd(0.42);
        let pi = two_terms(&w);
        let p = build_perturbation(&w, &pi, 0.2, 0.2).unwrap();
        let l = p.limit_params();
        let expected = 0.2 / l.rho_star - (0.2 - l.rho_star * l.sigma_star * 0.6) / (1.0 - l.rho_star);
        let (lh, _) = p.limit_rates();
        assert_abs_diff_eq!(lh, expected, epsilon = 1e-14);
        assert!((lh - 0.42).abs() > 0.1);
        assert_eq!(p.threshold_status(), ThresholdStatus::Violated);
        for n in 500..1000 {
            assert!((p.h_bar_down(n) - lh).abs() < 1e-8);
        }
    }

    #[test]
    fn off_curve_term_rejected() {
        let w = jd(0.18);
        let rho = 0.5;
        let sigma = q_sigma_branches(&w, rho)[0].unwrap();
        // shift so that the Q residual is about 1e-3
        let pi = GeometricSum::product_form(rho, sigma + 1e-3).unwrap();
        assert!(matches!(build_perturbation(&w, &pi, 0.2, 0.2), Err(Error::NotOnQ { index: 0, .. })));
    }

    #[test]
    fn negative_rate_rejected() {
        let w = jd(0.18);
        let pi = two_terms(&w);
        assert!(matches!(
            build_perturbation(&w, &pi, 0.0, 0.2),
            Err(Error::NegativeRate { .. })
        ));
    }

    #[test]
    fn copied_rates() {
        let w = jd(0.3);
        let pi = two_terms(&jd(0.18));
        let pi = GeometricSum::normalize(
            pi.terms().iter().map(|t| {
                let s = q_sigma_branches(&w, t.rho)
                    .into_iter()
                    .flatten()
                    .find(|s| *s > 0.0 && *s < 1.0)
                    .unwrap();
                GeometricTerm::new(t.rho, s, 1.0)
            })
            .collect(),
        )
        .unwrap();
        let p = build_perturbation(&w, &pi, 0.25, 0.3).unwrap();
        for d in Dir::ALL {
            assert_eq!(p.rate(State::new(4, 4), d), w.q(d.di, d.dj));
        }
        assert_eq!(p.rate(State::new(3, 0), Dir::new(0, 1)), w.q(0, 1));
        assert_eq!(p.rate(State::new(0, 3), Dir::new(1, 0)), w.q(1, 0));
        assert_eq!(p.rate(State::ORIGIN, Dir::new(1, 0)), 0.25);
        assert_eq!(p.rate(State::ORIGIN, Dir::new(0, 1)), 0.3);
        assert_eq!(p.rate(State::ORIGIN, Dir::new(1, 1)), w.q(1, 1));
        assert_eq!(p.rate(State::new(3, 0), Dir::new(0, -1)), 0.0);
    }

    #[test]
    fn thresholds_reduce_for_zero_alpha() {
        // purely horizontal interior motion: Q is the line ρ = 0.4 and α ≡ 0
        let interior = Rates::from_pairs(&[((1, 0), 0.2), ((-1, 0), 0.5)]);
        let horizontal = Rates::from_pairs(&[((1, 0), 0.2), ((-1, 0), 0.3), ((0, 1), 0.1)]);
        let vertical = Rates::from_pairs(&[((1, 0), 0.2), ((0, -1), 0.3)]);
        let origin = Rates::from_pairs(&[((1, 0), 0.2), ((0, 1), 0.1)]);
        let w = RandomWalk::new(interior, horizontal, vertical, origin, None).unwrap();
        let pi = GeometricSum::product_form(0.4, 0.7).unwrap();
        assert_eq!(alpha(&w, 0.4, 0.7), 0.0);
        let (h_min, _) = thresholds(&w, &pi).unwrap();
        assert_abs_diff_eq!(h_min, 0.4 * 0.3, epsilon = 1e-15);
    }

    #[test]
    fn thresholds_reject_nonpositive_coefficients() {
        let w = jd(0.18);
        let pi = two_terms(&w);
        let rho = (-0.6 + (0.36f64 + 8.0 * 0.2 * 0.6).sqrt()) / 1.2;
        let mut terms = pi.terms().to_vec();
        terms.push(GeometricTerm::new(rho, rho, -0.01));
        let pi = GeometricSum::normalize(terms).unwrap();
        assert!(matches!(
            thresholds(&w, &pi),
            Err(Error::NegativeCoefficient { index: 2, .. })
        ));
    }

    #[test]
    fn gamma_bar_bounds_sampled_outflow() {
        let w = jd(0.18);
        let pi = two_terms(&w);
        let p = build_perturbation(&w, &pi, 0.2, 0.2).unwrap();
        let g = p.gamma_bar();
        for n in 0..=10_000 {
            for s in [State::new(n, 0), State::new(0, n), State::new(n, n)] {
                assert!(p.outflow(s) <= g);
            }
        }
        assert!(g >= w.rates(Component::Interior).total());

        let rho = (-0.6 + (0.36f64 + 8.0 * 0.2 * 0.6).sqrt()) / 1.2;
        let pi = GeometricSum::product_form(rho, rho).unwrap();
        let p = build_perturbation(&jd(0.3), &pi, 0.2, 0.2).unwrap();
        assert_abs_diff_eq!(p.gamma_bar(), 1.0, epsilon = 1e-8);
    }

    /// Random walk with rates in all directions allowed by each component.
    fn arb_walk() -> impl Strategy<Value = RandomWalk> {
        let rates = |dirs: &'static [Dir]| {
            prop::collection::vec(0.0f64..1.0, dirs.len()).prop_map(move |v| {
                let mut r = Rates::zero();
                for (d, x) in dirs.iter().zip(v) {
                    r.set(*d, x);
                }
                r
            })
        };
        (
            rates(Component::Interior.directions()),
            rates(Component::Horizontal.directions()),
            rates(Component::Vertical.directions()),
            rates(Component::Origin.directions()),
        )
            .prop_map(|(q, h, v, r)| RandomWalk::new(q, h, v, r, None).unwrap())
    }

    fn points_on_q(w: &RandomWalk, picks: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &u in picks {
            for rho in [u, 1.0 - u, 0.5 * u + 0.25] {
                if let Some(s) = q_sigma_branches(w, rho)
                    .into_iter()
                    .flatten()
                    .find(|s| *s > 0.01 && *s < 0.99)
                {
                    if q_value(w, rho, s).abs() < 1e-13 {
                        out.push((rho, s));
                        break;
                    }
                }
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn stationarity_of_constructed_walk(
            w in arb_walk(),
            picks in prop::collection::vec(0.02f64..0.98, 1..=3),
            weights in prop::collection::vec(0.2f64..1.0, 3),
        ) {
            let pts = points_on_q(&w, &picks);
            prop_assume!(!pts.is_empty());
            let terms: Vec<_> = pts.iter().zip(&weights)
                .map(|(&(r, s), &c)| GeometricTerm::new(r, s, c)).collect();
            let pi = GeometricSum::normalize(terms).unwrap();
            let (h_min, v_min) = thresholds(&w, &pi).unwrap();
            let h10 = h_min.max(0.0) + 0.1;
            let v01 = v_min.max(0.0) + 0.1;
            let p = build_perturbation(&w, &pi, h10, v01);
            prop_assume!(p.is_ok());
            let p = p.unwrap();
            prop_assert!(max_balance_residual(&p, 50) < 1e-10);
        }

        #[test]
        fn threshold_is_sound(
            w in arb_walk(),
            picks in prop::collection::vec(0.02f64..0.98, 1..=3),
            weights in prop::collection::vec(0.2f64..1.0, 3),
        ) {
            let pts = points_on_q(&w, &picks);
            prop_assume!(!pts.is_empty());
            let terms: Vec<_> = pts.iter().zip(&weights)
                .map(|(&(r, s), &c)| GeometricTerm::new(r, s, c)).collect();
            let pi = GeometricSum::normalize(terms).unwrap();
            let (h_min, v_min) = thresholds(&w, &pi).unwrap();
            prop_assume!(h_min >= 0.0 && v_min >= 0.0);
            let p = build_perturbation(&w, &pi, h_min, v_min);
            prop_assume!(p.is_ok());
            let p = p.unwrap();
            let (hmin_seen, vmin_seen) = p.window_minima();
            prop_assert!(hmin_seen - w.h(-1, 0) >= -RATE_SLACK);
            prop_assert!(vmin_seen - w.v(0, -1) >= -RATE_SLACK);
        }

        #[test]
        fn monotone_in_outward_rate(extra in 0.0f64..0.5, n in 1u32..3000) {
            let w = jd(0.18);
            let pi = two_terms(&w);
            let a = build_perturbation(&w, &pi, 0.2, 0.2).unwrap();
            let b = build_perturbation(&w, &pi, 0.2 + extra, 0.2).unwrap();
            prop_assert!(b.h_bar_down(n) >= a.h_bar_down(n) - 1e-15);
        }
    }
}
