//! Error type shared by the symbolic layers.

use alloc::string::String;
use core::fmt;

/// Errors produced by exact symbolic operations.
///
/// Everything that can fail does so structurally (there is no floating-point
/// state to poison), so a single enum with a human-readable payload is enough.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlgError {
    /// Division was requested by an expression that is not a single
    /// invertible term.  The payload prints the offending divisor.
    NonMonomialDivisor(String),
    /// Division by an exact zero.
    DivisionByZero,
    /// A Jacobian determinant did not reduce to an invertible monomial,
    /// so the transformation cannot be inverted on the symbol level.
    SingularJacobian(String),
    /// A power series or graded expansion was asked for a negative or
    /// otherwise unrepresentable `hbar` exponent.
    InvalidHbarPower(i64),
    /// `exp`/`log`-style operator constructions need an argument of
    /// `hbar`-grade at least one; the payload names the operation.
    NotGraded(&'static str),
    /// Two differential operators that must act in the same variable frame
    /// were combined across different frames.
    FrameMismatch,
    /// Numeric evaluation hit a function symbol with no numeric definition.
    UnknownFunction(String),
    /// Numeric evaluation hit an unbound variable.
    UnboundVariable(String),
    /// Numeric evaluation of `sgn`/`abs`/`sqrtabs` at a point where the
    /// argument is not real.
    NonRealArgument(String),
    /// The order-by-order gauge solve found contradictory coefficient
    /// candidates at the given `hbar` order.
    GaugeInconsistent { order: u32, detail: String },
    /// The transformation lies outside the catalog a routine supports.
    Unsupported(String),
    /// Expression parsing failed at `pos` (byte offset into the input).
    Parse { pos: usize, msg: String },
}

impl fmt::Display for AlgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgError::NonMonomialDivisor(d) => {
                write!(f, "division by non-monomial expression: {d}")
            }
            AlgError::DivisionByZero => write!(f, "division by zero"),
            AlgError::SingularJacobian(d) => {
                write!(f, "Jacobian determinant is not an invertible monomial: {d}")
            }
            AlgError::InvalidHbarPower(k) => write!(f, "invalid hbar power {k}"),
            AlgError::NotGraded(op) => {
                write!(f, "{op} needs an operator of hbar-grade >= 1")
            }
            AlgError::FrameMismatch => write!(f, "operator frames do not match"),
            AlgError::UnknownFunction(n) => {
                write!(f, "function '{n}' has no numeric definition")
            }
            AlgError::UnboundVariable(v) => write!(f, "unbound variable '{v}'"),
            AlgError::NonRealArgument(e) => {
                write!(f, "sign-like atom evaluated at non-real argument: {e}")
            }
            AlgError::GaugeInconsistent { order, detail } => {
                write!(f, "gauge equations inconsistent at hbar^{order}: {detail}")
            }
            AlgError::Unsupported(what) => write!(f, "unsupported: {what}"),
            AlgError::Parse { pos, msg } => write!(f, "parse error at byte {pos}: {msg}"),
        }
    }
}
