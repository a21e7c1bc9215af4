//! Measures of the form `Σ_k c_k ρ_k^n₁ σ_k^n₂`.

use crate::error::{Error, Result};
use crate::model::State;
use crate::polylog::moment_from_zero;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricTerm {
    pub rho: f64,
    pub sigma: f64,
    pub c: f64,
}

impl GeometricTerm {
    pub fn new(rho: f64, sigma: f64, c: f64) -> Self {
        GeometricTerm { rho, sigma, c }
    }

    fn mass(&self) -> f64 {
        self.c / ((1.0 - self.rho) * (1.0 - self.sigma))
    }
}

/// Window on which positivity of a sum is checked state by state.
pub const POSITIVITY_WINDOW: u32 = 200;
const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// A normalized, positive sum of geometric terms.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricSum {
    terms: Vec<GeometricTerm>,
}

pub(crate) fn pow_n(z: f64, n: u32) -> f64 {
    match i32::try_from(n) {
        Ok(k) => z.powi(k),
        Err(_) => z.powf(f64::from(n)),
    }
}

fn check_terms(terms: &[GeometricTerm]) -> Result<()> {
    if terms.is_empty() {
        return Err(Error::Domain("a geometric sum needs at least one term".into()));
    }
    for (k, t) in terms.iter().enumerate() {
        let inside = |z: f64| z > 0.0 && z < 1.0;
        if !inside(t.rho) || !inside(t.sigma) {
            return Err(Error::Domain(format!(
                "term {k}: ({}, {}) is outside (0,1)^2",
                t.rho, t.sigma
            )));
        }
        if !t.c.is_finite() {
            return Err(Error::Domain(format!("term {k}: coefficient {} is not finite", t.c)));
        }
    }
    Ok(())
}

impl GeometricSum {
    /// Accepts terms that are already normalized.
    pub fn new(terms: Vec<GeometricTerm>) -> Result<Self> {
        check_terms(&terms)?;
        let sum = GeometricSum { terms };
        let mass = sum.mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::NotPositive(format!("total mass is {mass}, not 1")));
        }
        sum.check_positive()?;
        Ok(sum)
    }

    /// Rescales all coefficients by one common factor to total mass one.
    pub fn normalize(mut terms: Vec<GeometricTerm>) -> Result<Self> {
        check_terms(&terms)?;
        let mass: f64 = terms.iter().map(GeometricTerm::mass).sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::DegenerateMass(mass));
        }
        for t in &mut terms {
            t.c /= mass;
        }
        let sum = GeometricSum { terms };
        sum.check_positive()?;
        Ok(sum)
    }

    /// Product form `(1-ρ)(1-σ) ρ^n₁ σ^n₂`.
    pub fn product_form(rho: f64, sigma: f64) -> Result<Self> {
        GeometricSum::normalize(vec![GeometricTerm::new(rho, sigma, 1.0)])
    }

    fn check_positive(&self) -> Result<()> {
        for (axis, pick) in [("rho", true), ("sigma", false)] {
            let key = |t: &GeometricTerm| if pick { t.rho } else { t.sigma };
            let top = self.terms.iter().map(key).fold(f64::MIN, f64::max);
            let lead: f64 = self
                .terms
                .iter()
                .filter(|t| key(t) >= top * (1.0 - 1e-12))
                .map(|t| t.c)
                .sum();
            if !(lead > 0.0) {
                return Err(Error::NotPositive(format!(
                    "terms with the largest {axis} have total coefficient {lead}"
                )));
            }
        }
        if self.terms.iter().all(|t| t.c > 0.0) {
            return Ok(());
        }
        let n = POSITIVITY_WINDOW as usize + 1;
        let mut grid = vec![0.0; n * n];
        for t in &self.terms {
            let mut r = t.c;
            for n1 in 0..n {
                let mut v = r;
                for n2 in 0..n {
                    grid[n1 * n + n2] += v;
                    v *= t.sigma;
                }
                r *= t.rho;
            }
        }
        if let Some(pos) = grid.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::NotPositive(format!(
                "value {} at {}",
                grid[pos],
                State::new((pos / n) as u32, (pos % n) as u32)
            )));
        }
        Ok(())
    }

    pub fn terms(&self) -> &[GeometricTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn evaluate(&self, s: State) -> f64 {
        self.terms
            .iter()
            .map(|t| t.c * pow_n(t.rho, s.n1) * pow_n(t.sigma, s.n2))
            .sum()
    }

    pub fn mass(&self) -> f64 {
        self.terms.iter().map(GeometricTerm::mass).sum()
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.c).sum()
    }

    /// Mass outside the box `[0,n]²`.
    pub fn tail_mass(&self, n: u32) -> f64 {
        self.tail_moment(n, 0, 0)
    }

    /// `Σ_{s ∉ [0,n]²} π(s) n₁^a n₂^b`.
    pub fn tail_moment(&self, n: u32, a: u32, b: u32) -> f64 {
        let mut total = 0.0;
        for t in &self.terms {
            let full = moment_from_zero(a, t.rho) * moment_from_zero(b, t.sigma);
            let inner = finite_moment(a, t.rho, n) * finite_moment(b, t.sigma, n);
            total += t.c * (full - inner);
        }
        total.max(0.0)
    }

    /// Closed-form expectation of a reward under this measure.
    pub fn expected_reward(&self, reward: &Reward) -> Result<f64> {
        match reward {
            Reward::OriginIndicator => Ok(self.coefficient_sum()),
            Reward::Polynomial(monomials) => {
                let mut total = 0.0;
                for m in monomials {
                    if m.a > crate::polylog::MAX_ORDER || m.b > crate::polylog::MAX_ORDER {
                        return Err(Error::UnsupportedReward(format!(
                            "monomial degree ({}, {}) too large",
                            m.a, m.b
                        )));
                    }
                    for t in &self.terms {
                        total += m.coeff
                            * t.c
                            * moment_from_zero(m.a, t.rho)
                            * moment_from_zero(m.b, t.sigma);
                    }
                }
                Ok(total)
            }
        }
    }
}

/// `Σ_{k=0}^{n} k^m z^k`.
fn finite_moment(m: u32, z: f64, n: u32) -> f64 {
    let mut acc = 0.0;
    let mut zk = 1.0;
    for k in 0..=n {
        acc += if m == 0 { zk } else { f64::from(k).powi(m as i32) * zk };
        zk *= z;
        if zk == 0.0 {
            break;
        }
    }
    acc
}

/// `c · n₁^a · n₂^b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub a: u32,
    pub b: u32,
}

/// Reward functions with closed-form expectations.
#[derive(Debug, Clone, PartialEq)]
pub enum Reward {
    /// `1{(n₁,n₂) = (0,0)}`, the probability of an empty system.
    OriginIndicator,
    Polynomial(Vec<Monomial>),
}

impl Reward {
    /// Number of jobs in the first queue.
    pub fn queue_length() -> Self {
        Reward::Polynomial(vec![Monomial { coeff: 1.0, a: 1, b: 0 }])
    }

    /// `empty` or `n1`; other names are rejected.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "empty" => Ok(Reward::OriginIndicator),
            "n1" => Ok(Reward::queue_length()),
            other => Err(Error::UnsupportedReward(other.to_string())),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Reward::OriginIndicator => "empty".into(),
            Reward::Polynomial(m) if *m == [Monomial { coeff: 1.0, a: 1, b: 0 }] => "n1".into(),
            Reward::Polynomial(_) => "polynomial".into(),
        }
    }

    pub fn eval(&self, s: State) -> f64 {
        match self {
            Reward::OriginIndicator => {
                if s == State::ORIGIN {
                    1.0
                } else {
                    0.0
                }
            }
            Reward::Polynomial(monomials) => monomials
                .iter()
                .map(|m| {
                    m.coeff * f64::from(s.n1).powi(m.a as i32) * f64::from(s.n2).powi(m.b as i32)
                })
                .sum(),
        }
    }

    /// Largest total degree; zero for the indicator.
    pub fn degree(&self) -> u32 {
        match self {
            Reward::OriginIndicator => 0,
            Reward::Polynomial(m) => m.iter().map(|x| x.a + x.b).max().unwrap_or(0),
        }
    }

    /// `Σ_{s ∉ [0,n]²} π(s) |F(s)|` under a geometric sum.
    pub fn tail_under(&self, sum: &GeometricSum, n: u32) -> f64 {
        match self {
            Reward::OriginIndicator => 0.0,
            Reward::Polynomial(monomials) => monomials
                .iter()
                .map(|m| m.coeff.abs() * sum.tail_moment(n, m.a, m.b))
                .sum(),
        }
    }
}
