//! Choosing bias-bound coefficients by minimizing the error bound.
//!
//! The bound is linear in the coefficients of `B₁`, `B₂` and `B₃`. The
//! polynomial bounds are required to dominate the observed bias terms on the
//! constraint window and to be nondecreasing beyond it, which is enforced by
//! nonnegative derivatives of every order at the window edge.
//!
//! Inside the LP the coefficient of `n^m` is scaled by `N_c^m`, so that all
//! constraint entries lie in `[0, 1]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::errorbound::{BiasBounds, Multipliers, MAX_DEGREE};
use crate::oracle::BiasData;
use crate::simplex::{LinearProgram, LpSolution, Relation};

#[derive(Debug, Clone)]
pub struct BiasLpProblem {
    pub degree: usize,
    pub window: u32,
    pub lp: LinearProgram,
    pub multipliers: Multipliers,
    pub data: BiasData,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasLpSolution {
    pub bounds: BiasBounds,
    pub objective: f64,
    /// Largest violation of primal/dual feasibility or complementary
    /// slackness, in the LP's scaled variables.
    pub cs_residual: f64,
    /// Solution in the LP's scaled variables.
    #[serde(skip)]
    pub scaled: Vec<f64>,
}

/// Largest multiplier magnitude treated as rounding noise around zero.
const MULTIPLIER_NOISE: f64 = 1e-12;

fn variable_name(k: usize, degree: usize) -> String {
    let per = degree + 1;
    match k / per {
        0 => format!("b1[{}]", k % per),
        1 => format!("b2[{}]", k % per),
        _ => "b3".to_string(),
    }
}

/// Falling factorial `m (m-1) … (m-k+1)`.
fn falling(m: usize, k: usize) -> f64 {
    (m + 1 - k..=m).map(|x| x as f64).product()
}

/// Builds the LP for bias bounds of `degree` against `data`, with the
/// objective given by `multipliers`.
pub fn assemble(multipliers: Multipliers, degree: usize, data: &BiasData) -> Result<BiasLpProblem> {
    if degree > MAX_DEGREE {
        return Err(Error::Domain(format!("bias degree {degree} above {MAX_DEGREE}")));
    }
    if multipliers.w1.len() <= degree || multipliers.w2.len() <= degree {
        return Err(Error::Domain("multipliers computed for a lower degree".into()));
    }
    let window = (data.horizontal.len().min(data.vertical.len()) - 1) as u32;
    let scale = f64::from(window.max(1));
    let per = degree + 1;
    let nvars = 2 * per + 1;

    let mut raw = Vec::with_capacity(nvars);
    raw.extend_from_slice(&multipliers.w1[..per]);
    raw.extend_from_slice(&multipliers.w2[..per]);
    raw.push(multipliers.w3);
    let mut objective = Vec::with_capacity(nvars);
    for (k, &w) in raw.iter().enumerate() {
        if w < -MULTIPLIER_NOISE {
            return Err(Error::IllPosed { variable: variable_name(k, degree), value: w });
        }
        let m = if k < 2 * per { k % per } else { 0 };
        objective.push(w.max(0.0) / scale.powi(m as i32));
    }

    let mut lp = LinearProgram::new(objective);
    for axis in 0..2 {
        let offset = axis * per;
        let d = if axis == 0 { &data.horizontal } else { &data.vertical };
        // lower-order coefficients may be negative; the leading one may not
        for m in 0..degree {
            lp.free[offset + m] = true;
        }
        for n in 1..=window {
            let x = f64::from(n) / scale;
            let mut row = vec![0.0; nvars];
            let mut p = 1.0;
            for m in 0..per {
                row[offset + m] = p;
                p *= x;
            }
            lp.add(row, Relation::Ge, d[n as usize]);
        }
        for k in 1..=degree {
            let mut row = vec![0.0; nvars];
            for m in k..per {
                row[offset + m] = falling(m, k);
            }
            lp.add(row, Relation::Ge, 0.0);
        }
    }
    let mut row = vec![0.0; nvars];
    row[nvars - 1] = 1.0;
    lp.add(row, Relation::Ge, data.origin);

    Ok(BiasLpProblem { degree, window, lp, multipliers, data: data.clone() })
}

impl BiasLpProblem {
    fn unscale(&self, x: &[f64]) -> Result<BiasBounds> {
        let per = self.degree + 1;
        let scale = f64::from(self.window.max(1));
        let b1: Vec<f64> = (0..per).map(|m| x[m] / scale.powi(m as i32)).collect();
        let b2: Vec<f64> = (0..per).map(|m| x[per + m] / scale.powi(m as i32)).collect();
        BiasBounds::new(b1, b2, x[2 * per].max(0.0))
    }

    /// Maps bias bounds to the LP's scaled variables.
    pub fn scale(&self, bounds: &BiasBounds) -> Vec<f64> {
        let scale = f64::from(self.window.max(1));
        let s = |b: &[f64]| -> Vec<f64> {
            b.iter().enumerate().map(|(m, v)| v * scale.powi(m as i32)).collect()
        };
        let mut x = s(&bounds.b1);
        x.extend(s(&bounds.b2));
        x.push(bounds.b3);
        x
    }

    /// Constant bounds take the largest observed bias directly; higher
    /// degrees go through the simplex.
    pub fn solve(&self) -> Result<BiasLpSolution> {
        let sol = if self.degree == 0 { self.solve_box() } else { self.lp.solve()? };
        let cs_residual = self.lp.kkt_residual(&sol);
        let bounds = self.unscale(&sol.x)?;
        Ok(BiasLpSolution { bounds, objective: sol.objective, cs_residual, scaled: sol.x })
    }

    fn solve_box(&self) -> LpSolution {
        let rows = &self.lp.constraints;
        let mut x = vec![0.0; 3];
        let mut duals = vec![0.0; rows.len()];
        for var in 0..3 {
            let mut best: Option<(usize, f64)> = None;
            for (i, c) in rows.iter().enumerate() {
                if c.coeffs[var] != 0.0 && best.is_none_or(|(_, v)| c.rhs > v) {
                    best = Some((i, c.rhs));
                }
            }
            if let Some((i, v)) = best {
                x[var] = v;
                duals[i] = self.lp.objective[var];
            }
        }
        LpSolution { objective: self.lp.value(&x), x, duals }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn multipliers(w1: Vec<f64>, w2: Vec<f64>, w3: f64) -> Multipliers {
        Multipliers { w1, w2, w3, deltas: (0.0, 0.0, 0.0) }
    }

    fn data(window: usize, f: impl Fn(usize) -> f64, origin: f64) -> BiasData {
        let mut horizontal: Vec<f64> = (0..=window).map(&f).collect();
        horizontal[0] = 0.0;
        let vertical: Vec<f64> = horizontal.iter().map(|x| 0.5 * x).collect();
        BiasData { horizontal, vertical, origin }
    }

    #[test]
    fn constant_case_takes_maxima() {
        let d = data(50, |n| (n as f64 * 0.3).sin().abs() * 2.0 + 0.01 * n as f64, 1.25);
        let p = assemble(multipliers(vec![1.0], vec![2.0], 0.5), 0, &d).unwrap();
        let s = p.solve().unwrap();
        let m1 = d.horizontal.iter().copied().fold(0.0, f64::max);
        let m2 = d.vertical.iter().copied().fold(0.0, f64::max);
        assert_eq!(s.bounds.b1, vec![m1]);
        assert_eq!(s.bounds.b2, vec![m2]);
        assert_eq!(s.bounds.b3, 1.25);
        assert!(s.cs_residual < 1e-9);
        // the simplex finds the same optimum
        let general = p.lp.solve().unwrap();
        assert!((general.objective - s.objective).abs() < 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_bounds() {
        let d = data(20, |_| 0.0, 0.0);
        for degree in 0..=2 {
            let w = vec![1.0; degree + 1];
            let p = assemble(multipliers(w.clone(), w, 1.0), degree, &d).unwrap();
            let s = p.solve().unwrap();
            assert!(s.objective.abs() < 1e-14);
            assert!(s.bounds.b1.iter().all(|b| b.abs() < 1e-14));
        }
    }

    #[test]
    fn negative_multiplier_is_ill_posed() {
        let d = data(10, |n| n as f64, 0.0);
        let err = assemble(multipliers(vec![1.0, -0.5], vec![1.0, 1.0], 0.0), 1, &d).unwrap_err();
        assert!(matches!(err, Error::IllPosed { ref variable, .. } if variable == "b1[1]"));
        // rounding-level negatives are treated as zero
        assert!(assemble(multipliers(vec![1.0, -1e-15], vec![1.0, 1.0], 0.0), 1, &d).is_ok());
    }

    #[test]
    fn linear_data_recovered() {
        let d = data(40, |n| 0.5 + 0.25 * n as f64, 0.3);
        let p = assemble(multipliers(vec![1.0, 30.0], vec![1.0, 30.0], 1.0), 1, &d).unwrap();
        let s = p.solve().unwrap();
        assert!((s.bounds.b1[0] - 0.5).abs() < 1e-10);
        assert!((s.bounds.b1[1] - 0.25).abs() < 1e-10);
        assert!(s.cs_residual < 1e-9);
        assert!((s.objective - p.multipliers.report(&s.bounds).unwrap().total).abs() < 1e-10);
    }

    fn random_problem(seed: u64, degree: usize) -> BiasLpProblem {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let window = 30;
        let wiggle: Vec<f64> = (0..=window).map(|_| rng.gen_range(0.0..1.0)).collect();
        let slope = rng.gen_range(0.0..0.2);
        let d = data(window, |n| wiggle[n] + slope * n as f64, rng.gen_range(0.0..2.0));
        // real multipliers are moments Σ_{n≥1} g(n) n^m of a positive weight
        let mut moments = |decay: f64| -> Vec<f64> {
            let g: Vec<f64> = (1..=300).map(|n| rng.gen_range(0.5..1.0) * decay.powi(n)).collect();
            (0..=degree)
                .map(|m| g.iter().enumerate().map(|(k, x)| x * ((k + 1) as f64).powi(m as i32)).sum())
                .collect()
        };
        let w1 = moments(0.7);
        let w2 = moments(0.5);
        assemble(multipliers(w1, w2, rng.gen_range(0.0..1.0)), degree, &d).unwrap()
    }

    #[test]
    fn kkt_and_local_optimality() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for seed in 0..6 {
            let degree = 1 + seed as usize % 3;
            let p = random_problem(seed, degree);
            let s = p.solve().unwrap();
            assert!(s.cs_residual < 1e-9, "residual {}", s.cs_residual);
            let base = s.scaled.clone();
            let per = degree + 1;
            let mut tried = 0;
            while tried < 1000 {
                let eps = 1e-3;
                let mut x: Vec<f64> = base.iter().map(|v| v + eps * rng.gen_range(-1.0..1.0)).collect();
                // restore feasibility by lifting the constant terms
                for axis in 0..2 {
                    let lift = p.lp.constraints.iter()
                        .filter(|c| c.coeffs[axis * per] != 0.0)
                        .map(|c| c.rhs - c.coeffs.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>())
                        .fold(0.0, f64::max);
                    x[axis * per] += lift;
                }
                x[2 * per] = x[2 * per].max(p.data.origin);
                if p.lp.infeasibility(&x) > 1e-12 {
                    continue;
                }
                tried += 1;
                assert!(p.lp.value(&x) >= s.objective - 1e-12);
            }
        }
    }

    #[test]
    fn larger_window_never_lowers_optimum() {
        for seed in 0..4 {
            let full = random_problem(seed, 1);
            let mut prev = f64::NEG_INFINITY;
            for w in [5usize, 10, 20, 30] {
                let d = BiasData {
                    horizontal: full.data.horizontal[..=w].to_vec(),
                    vertical: full.data.vertical[..=w].to_vec(),
                    origin: full.data.origin,
                };
                let p = assemble(full.multipliers.clone(), 1, &d).unwrap();
                let v = p.solve().unwrap().objective;
                assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
