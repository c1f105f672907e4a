//! Random expression-tree objectives.
//!
//! Trees have depth at most four. Leaves are coordinates or constants drawn
//! from U[-1, 1]; inner nodes use only bounded-growth operators (no division,
//! no exponentials) so every tree is finite on any bounded box.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;

pub const MAX_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    SinPi,
    CosPi,
    Square,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Grows a random tree whose root is always an operator. Regenerates from
    /// the same stream until at least one coordinate appears.
    pub fn random<R: Rng>(dim: usize, rng: &mut R) -> Expr {
        loop {
            let tree = grow(0, dim, rng);
            if tree.has_var() {
                return tree;
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Var(i) => x[*i],
            Expr::Const(c) => *c,
            Expr::Unary(op, a) => {
                let u = a.eval(x);
                match op {
                    UnaryOp::Neg => -u,
                    UnaryOp::Abs => u.abs(),
                    UnaryOp::SinPi => (PI * u).sin(),
                    UnaryOp::CosPi => (PI * u).cos(),
                    UnaryOp::Square => u * u,
                    UnaryOp::Tanh => u.tanh(),
                }
            }
            Expr::Binary(op, a, b) => {
                let (u, v) = (a.eval(x), b.eval(x));
                match op {
                    BinaryOp::Add => u + v,
                    BinaryOp::Sub => u - v,
                    BinaryOp::Mul => u * v,
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 0,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn has_var(&self) -> bool {
        match self {
            Expr::Var(_) => true,
            Expr::Const(_) => false,
            Expr::Unary(_, a) => a.has_var(),
            Expr::Binary(_, a, b) => a.has_var() || b.has_var(),
        }
    }
}

fn grow<R: Rng>(depth: usize, dim: usize, rng: &mut R) -> Expr {
    let leaf_prob = match depth {
        0 => 0.0,
        d if d >= MAX_DEPTH => 1.0,
        d => 0.1 + 0.2 * d as f64,
    };
    if rng.random::<f64>() < leaf_prob {
        return if rng.random::<f64>() < 0.7 {
            Expr::Var(rng.random_range(0..dim))
        } else {
            Expr::Const(rng.random_range(-1.0..=1.0))
        };
    }
    match rng.random_range(0..9u8) {
        0 => Expr::Binary(BinaryOp::Add, Box::new(grow(depth + 1, dim, rng)), Box::new(grow(depth + 1, dim, rng))),
        1 => Expr::Binary(BinaryOp::Sub, Box::new(grow(depth + 1, dim, rng)), Box::new(grow(depth + 1, dim, rng))),
        2 => Expr::Binary(BinaryOp::Mul, Box::new(grow(depth + 1, dim, rng)), Box::new(grow(depth + 1, dim, rng))),
        3 => Expr::Unary(UnaryOp::Neg, Box::new(grow(depth + 1, dim, rng))),
        4 => Expr::Unary(UnaryOp::Abs, Box::new(grow(depth + 1, dim, rng))),
        5 => Expr::Unary(UnaryOp::SinPi, Box::new(grow(depth + 1, dim, rng))),
        6 => Expr::Unary(UnaryOp::CosPi, Box::new(grow(depth + 1, dim, rng))),
        7 => Expr::Unary(UnaryOp::Square, Box::new(grow(depth + 1, dim, rng))),
        _ => Expr::Unary(UnaryOp::Tanh, Box::new(grow(depth + 1, dim, rng))),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Const(c) => write!(f, "{c:.3}"),
            Expr::Unary(op, a) => {
                let name = match op {
                    UnaryOp::Neg => "neg",
                    UnaryOp::Abs => "abs",
                    UnaryOp::SinPi => "sinpi",
                    UnaryOp::CosPi => "cospi",
                    UnaryOp::Square => "sq",
                    UnaryOp::Tanh => "tanh",
                };
                write!(f, "{name}({a})")
            }
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinaryOp::Add => "+",
                    BinaryOp::Sub => "-",
                    BinaryOp::Mul => "*",
                };
                write!(f, "({a} {sym} {b})")
            }
        }
    }
}
