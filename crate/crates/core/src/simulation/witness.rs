//! Two monotone joint laws of `(tier(Y^0), tier(Y^1))` with identical
//! margins but different probability of tiered benefit.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use serde::Serialize;

use crate::error::{Error, Result};

const MARGIN_TOL: f64 = 1e-9;

/// Cell probabilities `q(a, b) = P(Y^0 in I_a, Y^1 in I_b)`, tiers 0-based.
///
/// Displayed (and serialized) with rows indexed by the `Y^1` tier, so that a
/// nonharmful joint law is lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualCellMatrix {
    k: usize,
    cells: Vec<f64>,
}

impl Serialize for CounterfactualCellMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl CounterfactualCellMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            cells: vec![0.0; k * k],
        }
    }

    pub fn tiers(&self) -> usize {
        self.k
    }

    pub fn q(&self, a: usize, b: usize) -> f64 {
        self.cells[a * self.k + b]
    }

    pub fn set(&mut self, a: usize, b: usize, v: f64) {
        self.cells[a * self.k + b] = v;
    }

    /// `P(Y^0 in I_a)`.
    pub fn margin0(&self) -> Vec<f64> {
        (0..self.k).map(|a| (0..self.k).map(|b| self.q(a, b)).sum()).collect()
    }

    /// `P(Y^1 in I_b)`.
    pub fn margin1(&self) -> Vec<f64> {
        (0..self.k).map(|b| (0..self.k).map(|a| self.q(a, b)).sum()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.k).map(|a| self.q(a, a)).sum()
    }

    pub fn benefit(&self) -> f64 {
        self.sum_where(|a, b| b > a)
    }

    pub fn harm(&self) -> f64 {
        self.sum_where(|a, b| b < a)
    }

    fn sum_where(&self, keep: impl Fn(usize, usize) -> bool) -> f64 {
        let mut s = 0.0;
        for a in 0..self.k {
            for b in 0..self.k {
                if keep(a, b) {
                    s += self.q(a, b);
                }
            }
        }
        s
    }

    pub fn is_monotone(&self) -> bool {
        self.harm() == 0.0
    }

    /// Rows indexed by the `Y^1` tier.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|b| (0..self.k).map(|a| self.q(a, b)).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    #[serde(rename = "K")]
    pub k: usize,
    pub margins0: Vec<f64>,
    pub margins1: Vec<f64>,
    /// Least-benefit monotone law (maximal trace).
    #[serde(rename = "Q_a")]
    pub q_a: CounterfactualCellMatrix,
    /// Most-benefit monotone law (minimal trace).
    #[serde(rename = "Q_b")]
    pub q_b: CounterfactualCellMatrix,
    pub pb_a: f64,
    pub pb_b: f64,
    /// True when the margins admit a single monotone law.
    pub unique: bool,
}

fn check_margin(name: &str, m: &[f64], k: usize) -> Result<()> {
    if m.len() != k {
        return Err(Error::Config(format!("{name} has {} entries, expected K = {k}", m.len())));
    }
    if m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (m.iter().sum::<f64>() - 1.0).abs() > MARGIN_TOL {
        return Err(Error::Config(format!("{name} is not a probability vector: {m:?}")));
    }
    Ok(())
}

/// Extreme points of the monotone cell system along the benefit direction.
pub fn nonidentifiability_witness(k: usize, margins0: &[f64], margins1: &[f64]) -> Result<Witness> {
    if k <= 2 {
        return Err(Error::UniquelySolvable(k));
    }
    check_margin("margins0", margins0, k)?;
    check_margin("margins1", margins1, k)?;
    let q_a = solve_extreme(k, margins0, margins1, OptimizationDirection::Maximize)?;
    let q_b = solve_extreme(k, margins0, margins1, OptimizationDirection::Minimize)?;
    let (pb_a, pb_b) = (q_a.benefit(), q_b.benefit());
    let unique = (pb_b - pb_a).abs() <= 1e-9;
    Ok(Witness {
        k,
        margins0: margins0.to_vec(),
        margins1: margins1.to_vec(),
        q_b: if unique { q_a.clone() } else { q_b },
        pb_b: if unique { pb_a } else { pb_b },
        q_a,
        pb_a,
        unique,
    })
}

/// Optimizes the trace over `{q >= 0, q(a, b) = 0 for a > b, margins fixed}`.
fn solve_extreme(
    k: usize,
    m0: &[f64],
    m1: &[f64],
    direction: OptimizationDirection,
) -> Result<CounterfactualCellMatrix> {
    let mut lp = Problem::new(direction);
    let mut vars = Vec::new();
    for a in 0..k {
        for b in a..k {
            let obj = if a == b { 1.0 } else { 0.0 };
            vars.push((a, b, lp.add_var(obj, (0.0, f64::INFINITY))));
        }
    }
    for (a, &target) in m0.iter().enumerate() {
        let mut e = LinearExpr::empty();
        vars.iter().filter(|v| v.0 == a).for_each(|v| e.add(v.2, 1.0));
        lp.add_constraint(e, ComparisonOp::Eq, target);
    }
    // The last column constraint is implied by the others.
    for (b, &target) in m1.iter().enumerate().take(k - 1) {
        let mut e = LinearExpr::empty();
        vars.iter().filter(|v| v.1 == b).for_each(|v| e.add(v.2, 1.0));
        lp.add_constraint(e, ComparisonOp::Eq, target);
    }
    let sol = lp.solve().map_err(|e| match e {
        minilp::Error::Infeasible => Error::Infeasible(format!("no monotone law has margins {m0:?} and {m1:?}")),
        other => Error::Numerical(format!("linear program failed: {other}")),
    })?;
    let mut q = CounterfactualCellMatrix::zeros(k);
    for (a, b, v) in vars {
        let val = *sol.var_value(v);
        q.set(a, b, if val.abs() < 1e-14 { 0.0 } else { val });
    }
    for (got, want) in q.margin0().iter().zip(m0).chain(q.margin1().iter().zip(m1)) {
        if (got - want).abs() > MARGIN_TOL {
            return Err(Error::Infeasible(format!("no monotone law has margins {m0:?} and {m1:?}")));
        }
    }
    Ok(q)
}
