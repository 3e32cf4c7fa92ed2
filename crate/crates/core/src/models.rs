//! Built-in functions used by the tests, benchmarks and fitting examples.
//! Sources live in `models/*.dl` at the repository root.

use std::f64::consts::PI;

use rand::Rng;
use thiserror::Error;

use crate::ast::{FuncDef, Program, Type};
use crate::eval::Value;
use crate::parser::parse;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("point outside the model domain: {0}")]
    DomainError(String),
    #[error("malformed point for `{model}`: {reason}")]
    BadPoint { model: String, reason: String },
}

#[derive(Debug)]
pub struct ModelEntry {
    /// Function name, also the lookup key.
    pub name: &'static str,
    pub file: &'static str,
    pub source: &'static str,
    /// Parameters the correctness suite differentiates with respect to.
    pub wrt: &'static [&'static str],
    /// Sampling box for double parameters and array elements.
    pub domain: &'static [(&'static str, f64, f64)],
    /// Range of the `dim` parameter for array models.
    pub dims: Option<(i64, i64)>,
    /// Closed-form gradient used as the reference, in words.
    pub reference: &'static str,
}

pub const MODEL_NAMES: [&str; 5] = ["sum", "mvn", "breitwigner_pdf", "gaus", "expo"];

static MODELS: [ModelEntry; 5] = [
    ModelEntry {
        name: "sum",
        file: "sum.dl",
        source: include_str!("../../../models/sum.dl"),
        wrt: &["p"],
        domain: &[("p", -2.0, 2.0)],
        dims: Some((1, 16)),
        reference: "d/dp_i = 1",
    },
    ModelEntry {
        name: "mvn",
        file: "mvn.dl",
        source: include_str!("../../../models/mvn.dl"),
        wrt: &["p", "sigma"],
        domain: &[("x", -1.5, 1.5), ("p", -1.5, 1.5), ("sigma", 0.5, 2.0)],
        dims: Some((1, 8)),
        reference: "d/dp_i = f (x_i - p_i) / sigma^2; d/dsigma = f (-1/(2 sigma) + sum (x - p)^2 / sigma^3)",
    },
    ModelEntry {
        name: "breitwigner_pdf",
        file: "breitwigner.dl",
        source: include_str!("../../../models/breitwigner.dl"),
        wrt: &["x", "gamma", "x0"],
        domain: &[("x", -3.0, 3.0), ("gamma", 0.1, 4.0), ("x0", -1.0, 1.0)],
        dims: None,
        reference: "with u = x - x0: d/dgamma = -(2/pi) (gamma^2 - 4u^2) / (gamma^2 + 4u^2)^2; \
                    d/dx = -16 gamma u / (pi (gamma^2 + 4u^2)^2); d/dx0 = -d/dx",
    },
    ModelEntry {
        name: "gaus",
        file: "gaus.dl",
        source: include_str!("../../../models/gaus.dl"),
        wrt: &["A", "mu", "sigma"],
        domain: &[("x", -3.0, 3.0), ("A", 0.5, 2.0), ("mu", -1.0, 1.0), ("sigma", 0.5, 2.0)],
        dims: None,
        reference: "with t = (x - mu)/sigma, g = A exp(-t^2/2): d/dA = g/A; d/dmu = g t/sigma; d/dsigma = g t^2/sigma",
    },
    ModelEntry {
        name: "expo",
        file: "expo.dl",
        source: include_str!("../../../models/expo.dl"),
        wrt: &["a", "b"],
        domain: &[("x", -2.0, 2.0), ("a", -1.0, 1.0), ("b", -1.0, 1.0)],
        dims: None,
        reference: "f = exp(a + b x): d/da = f; d/db = x f",
    },
];

pub fn get_model(name: &str) -> Result<&'static ModelEntry, ModelError> {
    MODELS.iter().find(|m| m.name == name).ok_or_else(|| ModelError::UnknownModel(name.to_string()))
}

pub fn all_models() -> &'static [ModelEntry] {
    &MODELS
}

impl ModelEntry {
    pub fn program(&self) -> Program {
        parse(self.source).expect("built-in model parses")
    }

    pub fn function(&self) -> FuncDef {
        self.program().function(self.name).expect("model defines its function").clone()
    }

    pub fn wrt(&self) -> Vec<String> {
        self.wrt.iter().map(|s| s.to_string()).collect()
    }

    fn range(&self, param: &str) -> (f64, f64) {
        self.domain.iter().find(|(p, ..)| *p == param).map(|&(_, lo, hi)| (lo, hi)).unwrap_or((-1.0, 1.0))
    }

    /// Uniform draw from the sampling box, arguments in parameter order.
    pub fn sample_point(&self, rng: &mut impl Rng) -> Vec<Value> {
        let f = self.function();
        let dim = self.dims.map(|(lo, hi)| rng.random_range(lo..=hi)).unwrap_or(0);
        f.params
            .iter()
            .map(|p| match p.ty {
                Type::Int => Value::I(dim),
                Type::DoubleArray => {
                    let (lo, hi) = self.range(&p.name);
                    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..hi)).collect();
                    Value::array(&v)
                }
                _ => {
                    let (lo, hi) = self.range(&p.name);
                    Value::D(rng.random_range(lo..hi))
                }
            })
            .collect()
    }

    /// Deterministic benchmark inputs: `p[i] = 1 + i/dim`, `x[i] = 0.5 +
    /// i/dim`, `sigma = 1`; other doubles take the middle of their box.
    pub fn bench_point(&self, dim: usize) -> Vec<Value> {
        let n = dim.max(1) as f64;
        self.function()
            .params
            .iter()
            .map(|p| match (p.ty, p.name.as_str()) {
                (Type::Int, _) => Value::I(dim as i64),
                (Type::DoubleArray, "x") => Value::array(&(0..dim).map(|i| 0.5 + i as f64 / n).collect::<Vec<_>>()),
                (Type::DoubleArray, _) => Value::array(&(0..dim).map(|i| 1.0 + i as f64 / n).collect::<Vec<_>>()),
                (_, "sigma") => Value::D(1.0),
                _ => {
                    let (lo, hi) = self.range(&p.name);
                    Value::D(0.5 * (lo + hi))
                }
            })
            .collect()
    }
}

fn bad(model: &str, reason: impl Into<String>) -> ModelError {
    ModelError::BadPoint { model: model.to_string(), reason: reason.into() }
}

fn scalar(model: &str, point: &[Value], i: usize) -> Result<f64, ModelError> {
    point.get(i).and_then(Value::as_f64).ok_or_else(|| bad(model, format!("argument {} must be a number", i + 1)))
}

fn array(model: &str, point: &[Value], i: usize) -> Result<Vec<f64>, ModelError> {
    match point.get(i) {
        Some(Value::Arr(a)) => Ok(a.to_vec()),
        _ => Err(bad(model, format!("argument {} must be an array", i + 1))),
    }
}

fn dim(model: &str, point: &[Value], i: usize, arrays: &[&[f64]]) -> Result<usize, ModelError> {
    let d = match point.get(i) {
        Some(Value::I(d)) if *d >= 0 => *d as usize,
        _ => return Err(bad(model, "dim must be a non-negative int")),
    };
    if arrays.iter().any(|a| a.len() < d) {
        return Err(bad(model, "array shorter than dim"));
    }
    Ok(d)
}

/// Closed-form gradient of a built-in model at `point` (arguments in
/// parameter order), with respect to the model's `wrt` list in gradient
/// layout order.
pub fn reference_gradient(name: &str, point: &[Value]) -> Result<Vec<f64>, ModelError> {
    let m = get_model(name)?;
    match m.name {
        "sum" => {
            let p = array(name, point, 0)?;
            let d = dim(name, point, 1, &[&p])?;
            Ok(vec![1.0; d])
        }
        "mvn" => {
            let (x, p) = (array(name, point, 0)?, array(name, point, 1)?);
            let sigma = scalar(name, point, 2)?;
            let d = dim(name, point, 3, &[&x, &p])?;
            if sigma <= 0.0 {
                return Err(ModelError::DomainError(format!("sigma = {sigma}")));
            }
            let s2 = sigma * sigma;
            let t: f64 = (0..d).map(|i| (x[i] - p[i]).powi(2)).sum();
            let f = (2.0 * PI).powf(-(d as f64) / 2.0) * sigma.powf(-0.5) * (-t / (2.0 * s2)).exp();
            let mut g: Vec<f64> = (0..d).map(|i| f * (x[i] - p[i]) / s2).collect();
            g.push(f * (-0.5 / sigma + t / (s2 * sigma)));
            Ok(g)
        }
        "breitwigner_pdf" => {
            let (x, gamma) = (scalar(name, point, 0)?, scalar(name, point, 1)?);
            let x0 = if point.len() > 2 { scalar(name, point, 2)? } else { 0.0 };
            let u = x - x0;
            let den = gamma * gamma + 4.0 * u * u;
            if den == 0.0 {
                return Err(ModelError::DomainError("gamma = 0 at the peak".into()));
            }
            let dgamma = -(2.0 / PI) * (gamma * gamma - 4.0 * u * u) / (den * den);
            let dx = -16.0 * gamma * u / (PI * den * den);
            Ok(vec![dx, dgamma, -dx])
        }
        "gaus" => {
            let [x, a, mu, sigma] = [0, 1, 2, 3].map(|i| scalar(name, point, i));
            let (x, a, mu, sigma) = (x?, a?, mu?, sigma?);
            if sigma == 0.0 {
                return Err(ModelError::DomainError("sigma = 0".into()));
            }
            let t = (x - mu) / sigma;
            let e = (-0.5 * t * t).exp();
            Ok(vec![e, a * e * t / sigma, a * e * t * t / sigma])
        }
        "expo" => {
            let [x, a, b] = [0, 1, 2].map(|i| scalar(name, point, i));
            let (x, a, b) = (x?, a?, b?);
            let f = (a + b * x).exp();
            Ok(vec![f, x * f])
        }
        _ => unreachable!("every model has a reference"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_model_parses_and_validates() {
        for m in all_models() {
            let p = m.program();
            assert!(validate(&p).is_empty(), "{}", m.name);
            assert_eq!(p.functions.len(), 1);
            let f = m.function();
            for w in m.wrt {
                assert!(f.param(w).is_some(), "{} {}", m.name, w);
            }
        }
    }

    #[test]
    fn lookup() {
        assert_eq!(get_model("sum").unwrap().function().params[0].ty, Type::DoubleArray);
        assert_eq!(get_model("nope").unwrap_err(), ModelError::UnknownModel("nope".into()));
        let bw = get_model("breitwigner_pdf").unwrap().function();
        assert_eq!(bw.params[2].default, Some(crate::ast::Literal::Double(0.0)));
    }

    #[test]
    fn breit_wigner_critical_point() {
        let g = reference_gradient("breitwigner_pdf", &[Value::D(1.0), Value::D(2.0), Value::D(0.0)]).unwrap();
        assert_eq!(g[1], 0.0);
        let g2 = reference_gradient("breitwigner_pdf", &[Value::D(1.0), Value::D(2.0)]).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn sum_and_domain_errors() {
        assert_eq!(reference_gradient("sum", &[Value::array(&[4.0, 5.0]), Value::I(2)]).unwrap(), vec![1.0, 1.0]);
        let bad_sigma = [Value::array(&[0.0]), Value::array(&[0.0]), Value::D(-1.0), Value::I(1)];
        assert!(matches!(reference_gradient("mvn", &bad_sigma), Err(ModelError::DomainError(_))));
        assert!(matches!(reference_gradient("sum", &[Value::D(1.0)]), Err(ModelError::BadPoint { .. })));
    }

    #[test]
    fn sampled_points_have_the_right_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in all_models() {
            let pt = m.sample_point(&mut rng);
            assert_eq!(pt.len(), m.function().params.len());
            assert!(reference_gradient(m.name, &pt).is_ok());
        }
        let pt = get_model("mvn").unwrap().bench_point(4);
        assert_eq!(pt[1], Value::array(&[1.0, 1.25, 1.5, 1.75]));
        assert_eq!(pt[2], Value::D(1.0));
    }
}
