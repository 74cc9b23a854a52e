use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Upper bound on basis length; lets evaluation use a stack buffer.
pub const MAX_TERMS: usize = 64;

/// Term list such as `["1", "w1", "x", "a*w1"]`. `1` is the intercept, `a`
/// the exposure, `x` the stratum label; any other factor names a covariate
/// column. Factors inside a term are multiplied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BasisSpec(pub Vec<String>);

impl BasisSpec {
    pub fn new<S: Into<String>>(terms: impl IntoIterator<Item = S>) -> Self {
        Self(terms.into_iter().map(Into::into).collect())
    }

    /// Outcome basis in which the simulation design's mean is exactly linear.
    pub fn saturated_outcome() -> Self {
        Self::new(["1", "w1", "x", "a", "a*w1", "a*x", "a*w2", "a*w2*w1", "a*w2*x"])
    }

    pub fn main_effects_propensity() -> Self {
        Self::new(["1", "w1", "x"])
    }

    /// Accepts a JSON array or a comma-separated list.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('[') {
            return serde_json::from_str(s).map_err(|e| Error::Config(format!("bad basis `{s}`: {e}")));
        }
        let terms: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        if terms.is_empty() {
            return Err(Error::Config("empty basis".into()));
        }
        Ok(Self::new(terms))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Factor {
    Exposure,
    Stratum,
    Covariate(usize),
}

/// A [`BasisSpec`] resolved against a table's covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    spec: BasisSpec,
    terms: Vec<Vec<Factor>>,
}

impl Serialize for Basis {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.spec.serialize(s)
    }
}

impl Basis {
    pub fn compile(spec: &BasisSpec, covariates: &[String]) -> Result<Self> {
        if spec.0.is_empty() {
            return Err(Error::Config("empty basis".into()));
        }
        if spec.0.len() > MAX_TERMS {
            return Err(Error::Config(format!("basis has more than {MAX_TERMS} terms")));
        }
        let mut terms = Vec::with_capacity(spec.0.len());
        for term in &spec.0 {
            let mut factors = Vec::new();
            for raw in term.split('*').map(str::trim) {
                match raw {
                    "1" => {}
                    "a" => factors.push(Factor::Exposure),
                    "x" => factors.push(Factor::Stratum),
                    name => match covariates.iter().position(|c| c == name) {
                        Some(i) => factors.push(Factor::Covariate(i)),
                        None => {
                            return Err(Error::Config(format!(
                                "basis term `{term}`: unknown factor `{name}` (covariates: {covariates:?})"
                            )))
                        }
                    },
                }
            }
            terms.push(factors);
        }
        Ok(Self {
            spec: spec.clone(),
            terms,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.spec.0
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn uses_exposure(&self) -> bool {
        self.terms.iter().flatten().any(|f| *f == Factor::Exposure)
    }

    pub fn eval(&self, w: &[f64], x: i64, a: f64, out: &mut [f64]) {
        for (slot, factors) in out.iter_mut().zip(&self.terms) {
            let mut v = 1.0;
            for f in factors {
                v *= match *f {
                    Factor::Exposure => a,
                    Factor::Stratum => x as f64,
                    Factor::Covariate(i) => w[i],
                };
            }
            *slot = v;
        }
    }

    /// Inner product of the evaluated basis with `coef`.
    pub fn dot(&self, coef: &[f64], w: &[f64], x: i64, a: f64) -> f64 {
        let mut buf = [0.0; MAX_TERMS];
        let row = &mut buf[..self.len()];
        self.eval(w, x, a, row);
        row.iter().zip(coef).map(|(r, c)| r * c).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov() -> Vec<String> {
        vec!["w1".into(), "w2".into()]
    }

    #[test]
    fn evaluates_products() {
        let b = Basis::compile(&BasisSpec::saturated_outcome(), &cov()).unwrap();
        let mut row = vec![0.0; b.len()];
        b.eval(&[0.5, 1.0], 1, 1.0, &mut row);
        assert_eq!(row, vec![1.0, 0.5, 1.0, 1.0, 0.5, 1.0, 1.0, 0.5, 1.0]);
        b.eval(&[0.5, 1.0], 1, 0.0, &mut row);
        assert_eq!(&row[3..], &[0.0; 6]);
        assert!(b.uses_exposure());
    }

    #[test]
    fn unknown_factor_is_a_config_error() {
        let e = Basis::compile(&BasisSpec::new(["1", "w9"]), &cov()).unwrap_err();
        assert!(e.to_string().contains("w9"));
    }

    #[test]
    fn parses_both_forms() {
        let a = BasisSpec::parse(r#"["1","a*w1"]"#).unwrap();
        let b = BasisSpec::parse("1, a*w1").unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"["1","a*w1"]"#);
    }
}
