//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr    := ['-'] term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := atom ['^' ['-'] integer]
//! atom    := number | 'hbar' | 'i'
//!          | 'abs' '(' expr ')' | 'sgn' '(' expr ')' | 'sqrtabs' '(' expr ')'
//!          | ident '\''* '(' expr ')'      -- function application
//!          | ident                          -- variable
//!          | '(' expr ')'
//! number  := digits ['.' digits]
//! ident   := [A-Za-z_][A-Za-z0-9_]*
//! ```
//!
//! `sin`, `cos`, `exp` are built-in function names; primes mark derivative
//! order (`phi''(xp)`).  Division is exact and only defined when the divisor
//! normalizes to a single invertible term.

use alloc::string::{String, ToString};

use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::{canon, Expr, FuncSym};
use crate::error::AlgError;
use crate::scalar::{Rat, Scalar};

pub fn parse_expr(src: &str) -> Result<Expr, AlgError> {
    let mut p = Parser {
        s: src.as_bytes(),
        pos: 0,
    };
    p.ws();
    let e = p.expr()?;
    p.ws();
    if p.pos != p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> AlgError {
        AlgError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            self.ws();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), AlgError> {
        if self.eat(b) {
            Ok(())
        } else {
            Err(self.err(&alloc::format!("expected '{}'", b as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, AlgError> {
        let mut acc = if self.eat(b'-') {
            self.term()?.neg()
        } else {
            self.term()?
        };
        loop {
            if self.eat(b'+') {
                acc = acc.add(&self.term()?);
            } else if self.eat(b'-') {
                acc = acc.sub(&self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, AlgError> {
        let mut acc = self.factor()?;
        loop {
            if self.eat(b'*') {
                acc = acc.mul(&self.factor()?);
            } else if self.eat(b'/') {
                acc = acc.div(&self.factor()?)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, AlgError> {
        // Unary minus binds looser than '^': -x^2 is -(x^2).
        if self.eat(b'-') {
            return Ok(self.factor()?.neg());
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            let neg = self.eat(b'-');
            let n = self.integer()?;
            let e = if neg { -n } else { n };
            return base.pow(e);
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i64, AlgError> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected an integer"));
        }
        let text = core::str::from_utf8(&self.s[start..self.pos]).unwrap();
        let v: i64 = text
            .parse()
            .map_err(|_| self.err("integer exponent out of range"))?;
        self.ws();
        Ok(v)
    }

    fn atom(&mut self) -> Result<Expr, AlgError> {
        match self.peek() {
            Some(b'(') => {
                self.expect(b'(')?;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(b) if b.is_ascii_digit() => self.number(),
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => self.ident_atom(),
            _ => Err(self.err("expected a number, name or parenthesized expression")),
        }
    }

    fn number(&mut self) -> Result<Expr, AlgError> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        let mut num = BigInt::parse_bytes(&self.s[start..self.pos], 10).unwrap();
        let mut den = BigInt::one();
        if self.peek() == Some(b'.') {
            self.pos += 1;
            let fstart = self.pos;
            while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == fstart {
                return Err(self.err("expected digits after decimal point"));
            }
            let frac = BigInt::parse_bytes(&self.s[fstart..self.pos], 10).unwrap();
            for _ in 0..(self.pos - fstart) {
                den *= 10;
            }
            num = num * &den + frac;
        }
        self.ws();
        Ok(Expr::from_scalar(Scalar::new(
            Rat::new(num, den),
            Rat::zero(),
        )))
    }

    fn ident_atom(&mut self) -> Result<Expr, AlgError> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_')
        {
            self.pos += 1;
        }
        let name = core::str::from_utf8(&self.s[start..self.pos]).unwrap();
        let name_owned: String = name.into();
        // primes mark derivative order
        let mut order: u32 = 0;
        while self.peek() == Some(b'\'') {
            order += 1;
            self.pos += 1;
        }
        self.ws();

        match name_owned.as_str() {
            "hbar" => {
                if order > 0 || self.peek() == Some(b'(') {
                    return Err(self.err("'hbar' is a constant, not a function"));
                }
                return Ok(Expr::hbar());
            }
            "i" => {
                if order > 0 || self.peek() == Some(b'(') {
                    return Err(self.err("'i' is a constant, not a function"));
                }
                return Ok(Expr::i());
            }
            "abs" | "sgn" | "sqrtabs" => {
                if order > 0 {
                    return Err(self.err("sign-like atoms take no derivative primes"));
                }
                self.expect(b'(')?;
                let inner = self.expr()?;
                self.expect(b')')?;
                return Ok(match name_owned.as_str() {
                    "abs" => canon::abs_of(&inner),
                    "sgn" => canon::sgn_of(&inner),
                    _ => canon::sqrtabs_of(&inner),
                });
            }
            _ => {}
        }

        if self.peek() == Some(b'(') {
            self.expect(b'(')?;
            let arg = self.expr()?;
            self.expect(b')')?;
            let sym = match name_owned.as_str() {
                "sin" => FuncSym::Sin,
                "cos" => FuncSym::Cos,
                "exp" => FuncSym::Exp,
                _ => FuncSym::named(&name_owned),
            };
            Ok(canon::func_of(&sym, order, &arg))
        } else {
            if order > 0 {
                return Err(self.err("derivative primes need a function application"));
            }
            Ok(Expr::var(&name_owned))
        }
    }
}

/// Parse a rational written as `n`, `-n`, or `n/d`.
pub fn parse_rat(src: &str) -> Result<Rat, AlgError> {
    let e = parse_expr(src)?;
    match e.to_scalar() {
        Some(s) if s.im.is_zero() => Ok(s.re),
        _ => Err(AlgError::Parse {
            pos: 0,
            msg: alloc::format!("expected a rational constant, got '{src}'"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{abs_of, func_of, int_mul, sgn_of, sqrtabs_of};

    fn x() -> Expr {
        Expr::var("x")
    }

    fn p() -> Expr {
        Expr::var("p")
    }

    #[test]
    fn parses_polynomials() {
        let e = parse_expr("x^2*p - 3/2*x + 1").unwrap();
        let expect = &(&x().pow(2).unwrap().mul(&p()) - &x().mul_rat(3, 2)) + &Expr::one();
        assert_eq!(e, expect);
    }

    #[test]
    fn parses_unary_minus_and_parens() {
        assert_eq!(parse_expr("-x").unwrap(), x().neg());
        assert_eq!(parse_expr("-(x + p)^2").unwrap(), (&x() + &p()).pow(2).unwrap().neg());
        assert_eq!(parse_expr("2 - -1").unwrap(), Expr::from_int(3));
    }

    #[test]
    fn parses_constants() {
        assert_eq!(parse_expr("3/4").unwrap(), Expr::from_rat(3, 4));
        assert_eq!(parse_expr("0.25").unwrap(), Expr::from_rat(1, 4));
        assert_eq!(parse_expr("i^2").unwrap(), Expr::from_int(-1));
        assert_eq!(
            parse_expr("hbar^2/4").unwrap(),
            crate::expr::hbar_pow(2).mul_rat(1, 4)
        );
    }

    #[test]
    fn parses_functions_and_primes() {
        let e = parse_expr("phi''(xp)").unwrap();
        assert_eq!(e, func_of(&FuncSym::named("phi"), 2, &Expr::var("xp")));
        let s = parse_expr("sin(w*t)").unwrap();
        assert_eq!(
            s,
            func_of(&FuncSym::Sin, 0, &Expr::var("w").mul(&Expr::var("t")))
        );
        // primes on builtins fold: sin''(t) = -sin(t)
        let d2 = parse_expr("sin''(t)").unwrap();
        assert_eq!(d2, func_of(&FuncSym::Sin, 0, &Expr::var("t")).neg());
    }

    #[test]
    fn parses_halfinteger_atoms() {
        assert_eq!(parse_expr("sgn(x)").unwrap(), sgn_of(&x()));
        assert_eq!(parse_expr("abs(2*x)").unwrap(), abs_of(&int_mul(2, &x())));
        assert_eq!(
            parse_expr("sqrtabs(2*x)^-1").unwrap(),
            sqrtabs_of(&int_mul(2, &x())).pow(-1).unwrap()
        );
    }

    #[test]
    fn division_is_monomial_only() {
        assert_eq!(parse_expr("x/2").unwrap(), x().mul_rat(1, 2));
        assert_eq!(
            parse_expr("1/(2*x)").unwrap(),
            x().pow(-1).unwrap().mul_rat(1, 2)
        );
        assert!(matches!(
            parse_expr("1/(x+1)"),
            Err(AlgError::NonMonomialDivisor(_))
        ));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_expr("x +").is_err());
        assert!(parse_expr("(x").is_err());
        assert!(parse_expr("x^p").is_err());
        assert!(parse_expr("x y").is_err());
        assert!(parse_expr("hbar(3)").is_err());
        assert!(parse_expr("x'").is_err());
    }

    #[test]
    fn rational_helper() {
        assert_eq!(parse_rat("3/2").unwrap(), crate::scalar::rat(3, 2));
        assert_eq!(parse_rat("-5").unwrap(), crate::scalar::rat(-5, 1));
        assert!(parse_rat("x").is_err());
    }
}
