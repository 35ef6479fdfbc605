//! Stable textual rendering; output re-parses to the same expression.

use alloc::string::String;
use core::fmt;

use num_traits::One;

use super::{Atom, Expr, FuncSym, Monomial};
use crate::scalar::{scalar_string, Scalar};

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (k, (m, c)) in self.terms().iter().enumerate() {
            let rendered = render_term(m, c);
            if k == 0 {
                f.write_str(&rendered)?;
            } else if let Some(rest) = rendered.strip_prefix('-') {
                write!(f, " - {rest}")?;
            } else {
                write!(f, " + {rendered}")?;
            }
        }
        Ok(())
    }
}

fn render_term(m: &Monomial, c: &Scalar) -> String {
    if m.is_one() {
        return scalar_string(c);
    }
    if c.is_one() {
        return alloc::format!("{m}");
    }
    if (-c).is_one() {
        return alloc::format!("-{m}");
    }
    alloc::format!("{}*{m}", scalar_string(c))
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (a, e)) in self.factors().iter().enumerate() {
            if k > 0 {
                f.write_str("*")?;
            }
            if *e == 1 {
                write!(f, "{a}")?;
            } else if *e < 0 {
                write!(f, "{a}^-{}", -e)?;
            } else {
                write!(f, "{a}^{e}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Hbar => f.write_str("hbar"),
            Atom::Var(v) => f.write_str(v.name()),
            Atom::Func { sym, order, arg } => {
                f.write_str(sym.name())?;
                for _ in 0..*order {
                    f.write_str("'")?;
                }
                write!(f, "({arg})")
            }
            Atom::Sgn(u) => write!(f, "sgn({u})"),
            Atom::SqrtAbs(u) => write!(f, "sqrtabs({u})"),
            Atom::Abs(u) => write!(f, "abs({u})"),
        }
    }
}

impl fmt::Display for FuncSym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for super::Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
