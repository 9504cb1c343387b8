//! Expression language of the micro simulator: literals, identifiers,
//! arithmetic, comparisons, `pre(v)`, and a few elementary functions.

use std::collections::HashMap;

use crate::frontend::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Bool(bool),
    Var(String),
    Pre(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }
}

/// Variable bindings for evaluation; `pre` values are only present while a
/// when-body executes.
pub struct Env<'a> {
    pub values: &'a HashMap<String, f64>,
    pub pre: Option<&'a HashMap<String, f64>>,
}

pub fn parse_expr(text: &str) -> Result<Expr, String> {
    let tokens = tokenize(text).map_err(|e| e.to_string())?;
    let tokens: Vec<Token> =
        tokens.into_iter().filter(|t| t.kind != TokenKind::Comment).collect();
    let mut parser = ExprParser { tokens: &tokens, pos: 0 };
    let expr = parser.comparison()?;
    match parser.peek() {
        None => Ok(expr),
        Some(t) => Err(format!("unexpected '{}' in expression '{text}'", t.text)),
    }
}

struct ExprParser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn eat_op(&mut self, ops: &[&str]) -> Option<String> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Operator && ops.contains(&t.text.as_str()) => {
                let text = t.text.clone();
                self.pos += 1;
                Some(text)
            }
            _ => None,
        }
    }

    fn comparison(&mut self) -> Result<Expr, String> {
        let lhs = self.additive()?;
        if let Some(op) = self.eat_op(&["<", "<=", ">", ">="]) {
            let rhs = self.additive()?;
            let op = match op.as_str() {
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                _ => BinOp::Ge,
            };
            return Ok(Expr::Bin(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, String> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&["+", "-"]) {
            let rhs = self.term()?;
            let op = if op == "+" { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&["*", "/"]) {
            let rhs = self.unary()?;
            let op = if op == "*" { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.eat_op(&["-"]).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op(&["+"]).is_some() {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, String> {
        let tok = self.bump().ok_or("unexpected end of expression")?.clone();
        match tok.kind {
            TokenKind::Number => {
                tok.text.parse::<f64>().map(Expr::Number).map_err(|e| e.to_string())
            }
            TokenKind::Keyword if tok.text == "true" => Ok(Expr::Bool(true)),
            TokenKind::Keyword if tok.text == "false" => Ok(Expr::Bool(false)),
            TokenKind::Identifier => {
                if self.peek().is_some_and(|t| t.is_punct("(")) {
                    self.pos += 1;
                    if tok.text == "pre" {
                        let var = match self.bump() {
                            Some(t) if t.kind == TokenKind::Identifier => t.text.clone(),
                            _ => return Err("pre() expects a variable name".into()),
                        };
                        self.expect_close()?;
                        return Ok(Expr::Pre(var));
                    }
                    let func = Func::from_name(&tok.text)
                        .ok_or_else(|| format!("unsupported function '{}'", tok.text))?;
                    let arg = self.comparison()?;
                    self.expect_close()?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if self.peek().is_some_and(|t| t.is_punct(".")) {
                    return Err(format!("dotted reference '{}.…' is not supported", tok.text));
                }
                Ok(Expr::Var(tok.text))
            }
            TokenKind::Punctuation if tok.text == "(" => {
                let inner = self.comparison()?;
                self.expect_close()?;
                Ok(inner)
            }
            _ => Err(format!("unexpected '{}' in expression", tok.text)),
        }
    }

    fn expect_close(&mut self) -> Result<(), String> {
        match self.bump() {
            Some(t) if t.is_punct(")") => Ok(()),
            Some(t) => Err(format!("expected ')', found '{}'", t.text)),
            None => Err("expected ')'".into()),
        }
    }
}

pub fn eval(expr: &Expr, env: &Env) -> Result<f64, String> {
    match expr {
        Expr::Number(v) => Ok(*v),
        Expr::Bool(b) => Ok(if *b { 1.0 } else { 0.0 }),
        Expr::Var(name) => env
            .values
            .get(name)
            .copied()
            .ok_or_else(|| format!("unknown identifier '{name}'")),
        Expr::Pre(name) => match env.pre {
            Some(pre) => pre
                .get(name)
                .copied()
                .ok_or_else(|| format!("pre() of unknown variable '{name}'")),
            None => Err("pre() is only available inside a when body".into()),
        },
        Expr::Neg(inner) => Ok(-eval(inner, env)?),
        Expr::Bin(op, lhs, rhs) => {
            let l = eval(lhs, env)?;
            let r = eval(rhs, env)?;
            Ok(match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => l / r,
                BinOp::Lt => bool_value(l < r),
                BinOp::Le => bool_value(l <= r),
                BinOp::Gt => bool_value(l > r),
                BinOp::Ge => bool_value(l >= r),
            })
        }
        Expr::Call(func, arg) => {
            let v = eval(arg, env)?;
            Ok(match func {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Exp => v.exp(),
                Func::Sqrt => v.sqrt(),
                Func::Abs => v.abs(),
            })
        }
    }
}

fn bool_value(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_str(text: &str, vars: &[(&str, f64)]) -> Result<f64, String> {
        let expr = parse_expr(text)?;
        let values: HashMap<String, f64> =
            vars.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        eval(&expr, &Env { values: &values, pre: None })
    }

    #[test]
    fn arithmetic_precedence() {
        assert_eq!(eval_str("1 + 2*3", &[]).unwrap(), 7.0);
        assert_eq!(eval_str("(1 + 2)*3", &[]).unwrap(), 9.0);
        assert_eq!(eval_str("-2*3", &[]).unwrap(), -6.0);
        assert_eq!(eval_str("4/2/2", &[]).unwrap(), 1.0);
    }

    #[test]
    fn comparisons_yield_unit_values() {
        assert_eq!(eval_str("1 < 2", &[]).unwrap(), 1.0);
        assert_eq!(eval_str("x >= 3", &[("x", 2.0)]).unwrap(), 0.0);
    }

    #[test]
    fn functions() {
        assert!((eval_str("sin(0)", &[]).unwrap()).abs() < 1e-15);
        assert_eq!(eval_str("sqrt(9)", &[]).unwrap(), 3.0);
        assert_eq!(eval_str("abs(-4)", &[]).unwrap(), 4.0);
    }

    #[test]
    fn pre_requires_when_context() {
        let expr = parse_expr("-c*pre(velocity)").unwrap();
        let values: HashMap<String, f64> = [("c".to_string(), 0.9)].into();
        assert!(eval(&expr, &Env { values: &values, pre: None }).is_err());
        let pre: HashMap<String, f64> = [("velocity".to_string(), -4.0)].into();
        let v = eval(&expr, &Env { values: &values, pre: Some(&pre) }).unwrap();
        assert_eq!(v, -(0.9 * -4.0));
    }

    #[test]
    fn unsupported_constructs_error() {
        assert!(parse_expr("a.b").is_err());
        assert!(parse_expr("foo(1)").is_err());
        assert!(parse_expr("1 +").is_err());
        assert!(eval_str("missing", &[]).is_err());
    }
}
