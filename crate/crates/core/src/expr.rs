//! Small expression trees over the spatial variables, used for coefficient
//! fields in problem configs.
//!
//! JSON form: a number is a constant, a string names a variable
//! (`"x"`, `"y"`, `"zx"`, `"zy"`, alias `"z"` for `"zx"`), and an object with a
//! single key applies an operator, e.g. `{"add": [1, {"mul": ["x", "x"]}]}`.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

/// Nesting limit for parsed trees.
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("operator `{op}` expects {expected}")]
    Arity { op: String, expected: &'static str },
    #[error("expression must be a number, a variable name or a single-key object")]
    Malformed,
    #[error("expression nested deeper than {MAX_DEPTH}")]
    TooDeep,
    #[error("non-finite constant")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    Zx,
    Zy,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Zx => "zx",
            Var::Zy => "zy",
        }
    }

    fn parse(s: &str) -> Option<Var> {
        match s {
            "x" => Some(Var::X),
            "y" => Some(Var::Y),
            "z" | "zx" => Some(Var::Zx),
            "zy" => Some(Var::Zy),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
}

impl UnaryOp {
    const ALL: [UnaryOp; 7] =
        [UnaryOp::Neg, UnaryOp::Abs, UnaryOp::Sqrt, UnaryOp::Exp, UnaryOp::Ln, UnaryOp::Sin, UnaryOp::Cos];

    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Neg => -v,
            UnaryOp::Abs => v.abs(),
            UnaryOp::Sqrt => v.sqrt(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Ln => v.ln(),
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
    Unary(UnaryOp, Box<Expr>),
}

impl Default for Expr {
    fn default() -> Self {
        Expr::Const(0.0)
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Const(v)
    }
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Evaluate at position `x` (length 1 or 2) and jump `z` (may be empty).
    pub fn eval_xz(&self, x: &[f64], z: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(var) => {
                let (src, i) = match var {
                    Var::X => (x, 0),
                    Var::Y => (x, 1),
                    Var::Zx => (z, 0),
                    Var::Zy => (z, 1),
                };
                src.get(i).copied().unwrap_or(0.0)
            }
            Expr::Add(args) => args.iter().map(|e| e.eval_xz(x, z)).sum(),
            Expr::Mul(args) => args.iter().map(|e| e.eval_xz(x, z)).product(),
            Expr::Sub(a, b) => a.eval_xz(x, z) - b.eval_xz(x, z),
            Expr::Div(a, b) => a.eval_xz(x, z) / b.eval_xz(x, z),
            Expr::Pow(a, b) => a.eval_xz(x, z).powf(b.eval_xz(x, z)),
            Expr::Min(args) => args.iter().map(|e| e.eval_xz(x, z)).fold(f64::INFINITY, f64::min),
            Expr::Max(args) => args.iter().map(|e| e.eval_xz(x, z)).fold(f64::NEG_INFINITY, f64::max),
            Expr::Unary(op, a) => op.apply(a.eval_xz(x, z)),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_xz(x, &[])
    }

    pub fn from_json(value: &Value) -> Result<Expr, ExprError> {
        Self::from_json_depth(value, 0)
    }

    fn from_json_depth(value: &Value, depth: usize) -> Result<Expr, ExprError> {
        if depth > MAX_DEPTH {
            return Err(ExprError::TooDeep);
        }
        match value {
            Value::Number(n) => {
                let v = n.as_f64().ok_or(ExprError::NonFinite)?;
                if !v.is_finite() {
                    return Err(ExprError::NonFinite);
                }
                Ok(Expr::Const(v))
            }
            Value::String(s) => Var::parse(s).map(Expr::Var).ok_or_else(|| ExprError::UnknownVariable(s.clone())),
            Value::Object(map) if map.len() == 1 => {
                let (op, arg) = map.iter().next().expect("one entry");
                let list = |min: usize| -> Result<Vec<Expr>, ExprError> {
                    match arg {
                        Value::Array(items) if items.len() >= min => {
                            items.iter().map(|v| Self::from_json_depth(v, depth + 1)).collect()
                        }
                        _ => Err(ExprError::Arity { op: op.clone(), expected: "a list of arguments" }),
                    }
                };
                let pair = || -> Result<(Box<Expr>, Box<Expr>), ExprError> {
                    match arg {
                        Value::Array(items) if items.len() == 2 => Ok((
                            Box::new(Self::from_json_depth(&items[0], depth + 1)?),
                            Box::new(Self::from_json_depth(&items[1], depth + 1)?),
                        )),
                        _ => Err(ExprError::Arity { op: op.clone(), expected: "exactly two arguments" }),
                    }
                };
                match op.as_str() {
                    "add" => Ok(Expr::Add(list(1)?)),
                    "mul" => Ok(Expr::Mul(list(1)?)),
                    "min" => Ok(Expr::Min(list(1)?)),
                    "max" => Ok(Expr::Max(list(1)?)),
                    "sub" => pair().map(|(a, b)| Expr::Sub(a, b)),
                    "div" => pair().map(|(a, b)| Expr::Div(a, b)),
                    "pow" => pair().map(|(a, b)| Expr::Pow(a, b)),
                    name => {
                        let op = UnaryOp::ALL
                            .into_iter()
                            .find(|u| u.name() == name)
                            .ok_or_else(|| ExprError::UnknownOperator(name.to_string()))?;
                        Ok(Expr::Unary(op, Box::new(Self::from_json_depth(arg, depth + 1)?)))
                    }
                }
            }
            _ => Err(ExprError::Malformed),
        }
    }

    pub fn to_json(&self) -> Value {
        let obj = |k: &str, v: Value| {
            let mut m = Map::new();
            m.insert(k.to_string(), v);
            Value::Object(m)
        };
        let list = |args: &[Expr]| Value::Array(args.iter().map(Expr::to_json).collect());
        match self {
            Expr::Const(v) => serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
            Expr::Var(v) => Value::String(v.name().to_string()),
            Expr::Add(a) => obj("add", list(a)),
            Expr::Mul(a) => obj("mul", list(a)),
            Expr::Min(a) => obj("min", list(a)),
            Expr::Max(a) => obj("max", list(a)),
            Expr::Sub(a, b) => obj("sub", Value::Array(vec![a.to_json(), b.to_json()])),
            Expr::Div(a, b) => obj("div", Value::Array(vec![a.to_json(), b.to_json()])),
            Expr::Pow(a, b) => obj("pow", Value::Array(vec![a.to_json(), b.to_json()])),
            Expr::Unary(op, a) => obj(op.name(), a.to_json()),
        }
    }

    /// True if the tree references any jump variable.
    pub fn uses_jump_vars(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => matches!(v, Var::Zx | Var::Zy),
            Expr::Add(a) | Expr::Mul(a) | Expr::Min(a) | Expr::Max(a) => a.iter().any(Expr::uses_jump_vars),
            Expr::Sub(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => a.uses_jump_vars() || b.uses_jump_vars(),
            Expr::Unary(_, a) => a.uses_jump_vars(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Expr::from_json(&v).map_err(D::Error::custom)
    }
}
