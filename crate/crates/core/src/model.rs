//! Homogeneous quarter-plane random walks.
//!
//! The state space `{0,1,..}²` splits into the horizontal axis `S₁`, the
//! vertical axis `S₂`, the origin `S₃` and the interior `S₄`. Within each
//! component the rates are translation invariant and only nearest-neighbour
//! jumps are allowed. This module also carries the characteristic curves
//! `Q`, `H` and `V` on which a single geometric measure `ρ^n₁ σ^n₂` satisfies
//! the interior, horizontal and vertical balance equations.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub n1: u32,
    pub n2: u32,
}

impl State {
    pub const ORIGIN: State = State { n1: 0, n2: 0 };

    pub fn new(n1: u32, n2: u32) -> Self {
        State { n1, n2 }
    }

    pub fn component(self) -> Component {
        match (self.n1, self.n2) {
            (0, 0) => Component::Origin,
            (_, 0) => Component::Horizontal,
            (0, _) => Component::Vertical,
            _ => Component::Interior,
        }
    }

    /// Directions with a non-zero rate allowed from this state.
    pub fn neighborhood(self) -> &'static [Dir] {
        self.component().directions()
    }

    /// Target of a jump, `None` when it leaves the quarter plane.
    pub fn step(self, d: Dir) -> Option<State> {
        let n1 = i64::from(self.n1) + i64::from(d.di);
        let n2 = i64::from(self.n2) + i64::from(d.dj);
        if n1 < 0 || n2 < 0 {
            return None;
        }
        Some(State::new(n1 as u32, n2 as u32))
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n1, self.n2)
    }
}

/// A nearest-neighbour jump `(i, j)` with `i, j ∈ {-1, 0, 1}`, never `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dir {
    pub di: i8,
    pub dj: i8,
}

impl Dir {
    pub const fn new(di: i8, dj: i8) -> Self {
        Dir { di, dj }
    }

    pub fn try_new(di: i64, dj: i64) -> Result<Self> {
        if !(-1..=1).contains(&di) || !(-1..=1).contains(&dj) || (di == 0 && dj == 0) {
            return Err(Error::Domain(format!("({di},{dj}) is not a nearest-neighbour jump")));
        }
        Ok(Dir::new(di as i8, dj as i8))
    }

    pub fn reversed(self) -> Dir {
        Dir::new(-self.di, -self.dj)
    }

    /// Slot in a 3×3 rate table; the centre slot 4 is never used by a jump.
    pub(crate) fn slot(self) -> usize {
        ((self.di + 1) * 3 + (self.dj + 1)) as usize
    }

    pub const ALL: [Dir; 8] = [
        Dir::new(-1, -1),
        Dir::new(-1, 0),
        Dir::new(-1, 1),
        Dir::new(0, -1),
        Dir::new(0, 1),
        Dir::new(1, -1),
        Dir::new(1, 0),
        Dir::new(1, 1),
    ];
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.di, self.dj)
    }
}

const N1: [Dir; 5] = [
    Dir::new(-1, 0),
    Dir::new(-1, 1),
    Dir::new(0, 1),
    Dir::new(1, 0),
    Dir::new(1, 1),
];
const N2: [Dir; 5] = [
    Dir::new(0, -1),
    Dir::new(0, 1),
    Dir::new(1, -1),
    Dir::new(1, 0),
    Dir::new(1, 1),
];
const N3: [Dir; 3] = [Dir::new(0, 1), Dir::new(1, 0), Dir::new(1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    /// `S₁ = {1,2,..} × {0}`
    Horizontal,
    /// `S₂ = {0} × {1,2,..}`
    Vertical,
    /// `S₃ = {(0,0)}`
    Origin,
    /// `S₄ = {1,2,..}²`
    Interior,
}

impl Component {
    pub fn directions(self) -> &'static [Dir] {
        match self {
            Component::Horizontal => &N1,
            Component::Vertical => &N2,
            Component::Origin => &N3,
            Component::Interior => &Dir::ALL,
        }
    }

    pub fn allows(self, d: Dir) -> bool {
        self.directions().contains(&d)
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Horizontal => "horizontal",
            Component::Vertical => "vertical",
            Component::Origin => "origin",
            Component::Interior => "interior",
        }
    }
}

/// Rates of one component, indexed by direction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Rates([f64; 9]);

impl Rates {
    pub fn zero() -> Self {
        Rates([0.0; 9])
    }

    pub fn from_pairs(pairs: &[((i8, i8), f64)]) -> Self {
        let mut r = Rates::zero();
        for &((di, dj), rate) in pairs {
            r.set(Dir::new(di, dj), rate);
        }
        r
    }

    pub fn get(&self, d: Dir) -> f64 {
        self.0[d.slot()]
    }

    pub fn set(&mut self, d: Dir, rate: f64) {
        self.0[d.slot()] = rate;
    }

    pub fn total(&self) -> f64 {
        Dir::ALL.iter().map(|&d| self.get(d)).sum()
    }

    /// `q_{i,j}` with the diagonal convention `q_{0,0} = -Σ q_{i,j}`.
    pub fn with_diagonal(&self, di: i8, dj: i8) -> f64 {
        if di == 0 && dj == 0 {
            -self.total()
        } else {
            self.get(Dir::new(di, dj))
        }
    }
}

/// Anything that assigns a jump rate to each state and direction.
pub trait RateField {
    /// Rate from `s` in direction `d`; zero when `d` is not allowed at `s`.
    fn rate(&self, s: State, d: Dir) -> f64;

    fn outflow(&self, s: State) -> f64 {
        s.neighborhood().iter().map(|&d| self.rate(s, d)).sum()
    }
}

impl<T: RateField + ?Sized> RateField for &T {
    fn rate(&self, s: State, d: Dir) -> f64 {
        (**self).rate(s, d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomWalk {
    interior: Rates,
    horizontal: Rates,
    vertical: Rates,
    origin: Rates,
    gamma: f64,
}

impl RandomWalk {
    /// Validates the four rate families. `gamma = None` picks the smallest
    /// uniformization constant, the largest total outflow of a component.
    pub fn new(
        interior: Rates,
        horizontal: Rates,
        vertical: Rates,
        origin: Rates,
        gamma: Option<f64>,
    ) -> Result<Self> {
        let families = [
            (Component::Interior, &interior),
            (Component::Horizontal, &horizontal),
            (Component::Vertical, &vertical),
            (Component::Origin, &origin),
        ];
        let mut max_outflow: f64 = 0.0;
        for (component, rates) in families {
            for d in Dir::ALL {
                let rate = rates.get(d);
                if !rate.is_finite() || rate < 0.0 {
                    return Err(Error::InvalidWalk(format!(
                        "{} rate in direction {d} is {rate}",
                        component.name()
                    )));
                }
                if rate > 0.0 && !component.allows(d) {
                    return Err(Error::InvalidWalk(format!(
                        "direction {d} is not allowed on the {} component",
                        component.name()
                    )));
                }
            }
            max_outflow = max_outflow.max(rates.total());
        }
        if interior.total() <= 0.0 {
            return Err(Error::InvalidWalk("zero total interior outflow".into()));
        }
        let gamma = match gamma {
            None => max_outflow,
            Some(g) if g.is_finite() && g >= max_outflow * (1.0 - 1e-12) && g > 0.0 => g,
            Some(g) => {
                return Err(Error::InvalidWalk(format!(
                    "gamma {g} is below the largest outflow {max_outflow}"
                )))
            }
        };
        Ok(RandomWalk { interior, horizontal, vertical, origin, gamma })
    }

    /// Two queues with arrivals `λ` each, joint service `μ`, and service
    /// `μ*` of one queue while the other is empty.
    pub fn joint_departures(lambda: f64, mu: f64, mu_star: f64) -> Result<Self> {
        let interior = Rates::from_pairs(&[((1, 0), lambda), ((0, 1), lambda), ((-1, -1), mu)]);
        let horizontal =
            Rates::from_pairs(&[((1, 0), lambda), ((0, 1), lambda), ((-1, 0), mu_star)]);
        let vertical =
            Rates::from_pairs(&[((1, 0), lambda), ((0, 1), lambda), ((0, -1), mu_star)]);
        let origin = Rates::from_pairs(&[((1, 0), lambda), ((0, 1), lambda)]);
        RandomWalk::new(interior, horizontal, vertical, origin, None)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn q(&self, di: i8, dj: i8) -> f64 {
        self.interior.with_diagonal(di, dj)
    }

    pub fn h(&self, di: i8, dj: i8) -> f64 {
        self.horizontal.get(Dir::new(di, dj))
    }

    pub fn v(&self, di: i8, dj: i8) -> f64 {
        self.vertical.get(Dir::new(di, dj))
    }

    pub fn r(&self, di: i8, dj: i8) -> f64 {
        self.origin.get(Dir::new(di, dj))
    }

    pub fn rates(&self, component: Component) -> &Rates {
        match component {
            Component::Interior => &self.interior,
            Component::Horizontal => &self.horizontal,
            Component::Vertical => &self.vertical,
            Component::Origin => &self.origin,
        }
    }
}

impl RateField for RandomWalk {
    fn rate(&self, s: State, d: Dir) -> f64 {
        let component = s.component();
        if component.allows(d) {
            self.rates(component).get(d)
        } else {
            0.0
        }
    }
}

fn check_unit_square(rho: f64, sigma: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 && sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("({rho}, {sigma}) is outside (0,1)^2")))
    }
}

pub(crate) fn q_value(walk: &RandomWalk, rho: f64, sigma: f64) -> f64 {
    let mut acc = 0.0;
    for i in -1..=1i8 {
        for j in -1..=1i8 {
            acc += rho.powi(-i32::from(i)) * sigma.powi(-i32::from(j)) * walk.q(i, j);
        }
    }
    acc
}

pub(crate) fn h_value(walk: &RandomWalk, rho: f64, sigma: f64) -> f64 {
    let mut lhs = rho.recip() * walk.h(1, 0) + rho * walk.h(-1, 0);
    let mut rhs = walk.h(-1, 0) + walk.h(1, 0);
    for i in -1..=1i8 {
        lhs += rho.powi(-i32::from(i)) * sigma * walk.q(i, -1);
        rhs += walk.h(i, 1);
    }
    lhs - rhs
}

pub(crate) fn v_value(walk: &RandomWalk, rho: f64, sigma: f64) -> f64 {
    let mut lhs = sigma.recip() * walk.v(0, 1) + sigma * walk.v(0, -1);
    let mut rhs = walk.v(0, -1) + walk.v(0, 1);
    for j in -1..=1i8 {
        lhs += rho * sigma.powi(-i32::from(j)) * walk.q(-1, j);
        rhs += walk.v(1, j);
    }
    lhs - rhs
}

/// `Σ ρ^{-i} σ^{-j} q_{i,j}`; zero exactly on `Q`.
pub fn curve_residual_q(walk: &RandomWalk, rho: f64, sigma: f64) -> Result<f64> {
    check_unit_square(rho, sigma)?;
    Ok(q_value(walk, rho, sigma))
}

/// Left minus right side of the horizontal-axis balance of `ρ^n₁ σ^n₂`.
pub fn curve_residual_h(walk: &RandomWalk, rho: f64, sigma: f64) -> Result<f64> {
    check_unit_square(rho, sigma)?;
    Ok(h_value(walk, rho, sigma))
}

/// Left minus right side of the vertical-axis balance of `ρ^n₁ σ^n₂`.
pub fn curve_residual_v(walk: &RandomWalk, rho: f64, sigma: f64) -> Result<f64> {
    check_unit_square(rho, sigma)?;
    Ok(v_value(walk, rho, sigma))
}

/// The two `σ` branches of `Q` above a fixed `ρ`.
///
/// Multiplying the `Q` equation by `ρσ` gives `a σ² + b σ + c = 0`. The
/// branches are `(-b ∓ √disc) / 2a`, `None` where complex. Values are not
/// restricted to `(0,1)`.
pub fn q_sigma_branches(walk: &RandomWalk, rho: f64) -> [Option<f64>; 2] {
    let coeff = |j: i8| -> f64 {
        (-1..=1i8)
            .map(|i| rho.powi(1 - i32::from(i)) * walk.q(i, j))
            .sum()
    };
    let (a, b, c) = (coeff(-1), coeff(0), coeff(1));
    let polish = |s: f64| {
        let f = (a * s + b) * s + c;
        let df = 2.0 * a * s + b;
        if df != 0.0 {
            s - f / df
        } else {
            s
        }
    };
    if a.abs() < 1e-300 {
        return if b != 0.0 { [Some(-c / b), None] } else { [None, None] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return [None, None];
    }
    let root = disc.sqrt();
    [
        Some(polish((-b - root) / (2.0 * a))),
        Some(polish((-b + root) / (2.0 * a))),
    ]
}

/// `σ` on `H` for a fixed `ρ` (the `H` equation is linear in `σ`).
pub fn h_sigma(walk: &RandomWalk, rho: f64) -> Option<f64> {
    let slope: f64 = (-1..=1i8)
        .map(|i| rho.powi(-i32::from(i)) * walk.q(i, -1))
        .sum();
    if slope == 0.0 {
        return None;
    }
    let rest = h_value(walk, rho, 0.0);
    Some(-rest / slope)
}

/// `ρ` on `V` for a fixed `σ`.
pub fn v_rho(walk: &RandomWalk, sigma: f64) -> Option<f64> {
    let slope: f64 = (-1..=1i8)
        .map(|j| sigma.powi(-i32::from(j)) * walk.q(-1, j))
        .sum();
    if slope == 0.0 {
        return None;
    }
    let rest = v_value(walk, 0.0, sigma);
    Some(-rest / slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    H,
    V,
}

impl Curve {
    fn name(self) -> &'static str {
        match self {
            Curve::H => "H",
            Curve::V => "V",
        }
    }
}

pub const CURVE_TOLERANCE: f64 = 1e-10;
const SCAN_POINTS: usize = 2000;

/// All points of `Q ∩ H` (or `Q ∩ V`) in `(0,1)²`.
///
/// Both `σ`-branches of `Q` are scanned over `ρ ∈ [1e-6, 1-1e-6]`; every sign
/// change of the second residual along a branch is refined by bisection.
pub fn intersect_q_with(walk: &RandomWalk, curve: Curve) -> Result<Vec<(f64, f64)>> {
    let lo = 1e-6;
    let hi = 1.0 - 1e-6;
    let on_branch = |rho: f64, branch: usize| -> Option<(f64, f64)> {
        let sigma = q_sigma_branches(walk, rho)[branch]?;
        if !(sigma > 0.0 && sigma < 1.0) {
            return None;
        }
        let res = match curve {
            Curve::H => h_value(walk, rho, sigma),
            Curve::V => v_value(walk, rho, sigma),
        };
        Some((sigma, res))
    };

    let mut found: Vec<(f64, f64)> = Vec::new();
    for branch in 0..2 {
        let grid: Vec<f64> = (0..=SCAN_POINTS)
            .map(|k| lo + (hi - lo) * k as f64 / SCAN_POINTS as f64)
            .collect();
        let values: Vec<Option<(f64, f64)>> = grid.iter().map(|&r| on_branch(r, branch)).collect();
        for k in 0..SCAN_POINTS {
            let (Some((_, fa)), Some((_, fb))) = (values[k], values[k + 1]) else {
                continue;
            };
            let candidate = if fa == 0.0 {
                Some(grid[k])
            } else if fa.signum() != fb.signum() && fb != 0.0 {
                bisect(|r| on_branch(r, branch).map(|(_, f)| f), grid[k], grid[k + 1], fa)
            } else {
                None
            };
            let Some(rho) = candidate else { continue };
            let Some((sigma, res)) = on_branch(rho, branch) else { continue };
            let q_res = q_value(walk, rho, sigma);
            if res.abs() < CURVE_TOLERANCE && q_res.abs() < CURVE_TOLERANCE {
                let duplicate = found
                    .iter()
                    .any(|&(r, s)| (r - rho).abs() < 1e-8 && (s - sigma).abs() < 1e-8);
                if !duplicate {
                    found.push((rho, sigma));
                }
            }
        }
    }
    if found.is_empty() {
        return Err(Error::NoIntersection(curve.name()));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(found)
}

fn bisect(f: impl Fn(f64) -> Option<f64>, mut a: f64, mut b: f64, mut fa: f64) -> Option<f64> {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// `Σ_{d∈N(s)} π(s+d) q_{-d}(s+d) + π(s) q_{0,0}(s)`, zero iff `π` balances at `s`.
pub fn balance_residual<F: RateField + ?Sized>(
    field: &F,
    pi: impl Fn(State) -> f64,
    s: State,
) -> f64 {
    let mut acc = -pi(s) * field.outflow(s);
    for &d in s.neighborhood() {
        let from = s.step(d).expect("neighbourhood stays in the quarter plane");
        acc += pi(from) * field.rate(from, d.reversed());
    }
    acc
}
