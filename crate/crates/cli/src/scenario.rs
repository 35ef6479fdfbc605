//! Scenario files: JSON task lists evaluated by the runner.
//!
//! A scenario names a truncation order, a table of numeric bindings, and a
//! list of tasks. Expressions are grammar strings handed to the library
//! parser, so rationals stay exact; numeric parameters come from the
//! bindings table. The schema is documented in the README next to the
//! sample files under `scenarios/`.

use moyal::cantrans::{
    build_transformation, phi_arg, quantum_flow, standard_vars, GeneratingFunction,
    Transformation,
};
use moyal::expr::{parse_expr, Expr, Var};
use moyal::gauge::{
    anharmonic_gauge_generator, shear_gauge_generator, solve_gauge, sqrt_gauge_generator,
    GaugeIso,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{CliError, Result};

/// Cost guard: truncation orders above this are rejected at load time.
pub const MAX_ORDER: u16 = 12;

fn default_order() -> u16 {
    4
}

fn default_dim() -> usize {
    1
}

fn default_time() -> String {
    "t".to_string()
}

fn zero_expr() -> String {
    "0".to_string()
}

/// Parse a grammar string, tagging errors with the offending source.
pub fn parse(src: &str) -> Result<Expr> {
    parse_expr(src).map_err(|e| CliError::Scenario(format!("cannot parse '{src}': {e}")))
}

/// Top-level scenario document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Default truncation order for symbolic tasks.
    #[serde(default = "default_order")]
    pub k: u16,
    /// Named numeric parameters (hbar, omega, masses, ...).
    #[serde(default)]
    pub bindings: BTreeMap<String, f64>,
    #[serde(default)]
    pub tasks: Vec<Task>,
}

impl Scenario {
    pub fn from_json(src: &str) -> Result<Self> {
        let sc: Scenario =
            serde_json::from_str(src).map_err(|e| CliError::Scenario(format!("{e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Load-time invariants: order guard, unique labels, finite bindings.
    pub fn validate(&self) -> Result<()> {
        if self.k > MAX_ORDER {
            return Err(CliError::Scenario(format!(
                "truncation order {} exceeds the guard {MAX_ORDER}",
                self.k
            )));
        }
        for (name, v) in &self.bindings {
            if !v.is_finite() {
                return Err(CliError::Scenario(format!("binding {name} is not finite")));
            }
        }
        let mut seen = BTreeSet::new();
        for task in &self.tasks {
            if let Some(k) = task.spec.order_override() {
                if k > MAX_ORDER {
                    return Err(CliError::Scenario(format!(
                        "task truncation order {k} exceeds the guard {MAX_ORDER}"
                    )));
                }
            }
            if let Some(label) = &task.label {
                if label.is_empty() || !seen.insert(label.clone()) {
                    return Err(CliError::Scenario(format!(
                        "task labels must be unique and non-empty: '{label}'"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The numeric Planck constant used by grid tasks.
    pub fn hbar(&self) -> f64 {
        self.bindings.get("hbar").copied().unwrap_or(1.0)
    }

    /// Bindings as the (name, value) list the evaluators consume.
    pub fn binding_list(&self) -> Vec<(String, f64)> {
        self.bindings
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    }
}

/// One task entry: an optional stable label plus the dispatch payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Task {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub spec: TaskSpec,
}

/// The task grammar. Tags follow the documented schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum TaskSpec {
    /// Star product (or deformed bracket) of two expressions.
    StarEval {
        f: String,
        g: String,
        #[serde(default = "default_dim")]
        n: usize,
        #[serde(default)]
        bracket: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<u16>,
    },
    /// Classical and quantum canonicity of a transformation.
    Canonicity {
        transform: TransformSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<u16>,
    },
    /// Solve for the gauge map of a transformation, then verify it.
    SolveSt {
        transform: TransformSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<u16>,
    },
    /// Verify a named gauge map against a transformation.
    VerifySt {
        transform: TransformSpec,
        generator: GeneratorSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<u16>,
    },
    /// Pull an observable through a transformation and order it.
    TransformObservable {
        transform: TransformSpec,
        observable: String,
        #[serde(default)]
        generator: GeneratorSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<u16>,
    },
    /// Apply a unitary kernel to a Gaussian packet on a grid.
    UopApply {
        unitary: UnitarySpec,
        #[serde(default)]
        packet: PacketSpec,
        #[serde(default)]
        grid: GridSpec,
        #[serde(default)]
        inverse: bool,
        #[serde(default)]
        output: OutputKind,
    },
    /// A bundled end-to-end example.
    #[serde(rename = "example-id")]
    Example { id: String },
}

impl TaskSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            TaskSpec::StarEval { .. } => "star-eval",
            TaskSpec::Canonicity { .. } => "canonicity",
            TaskSpec::SolveSt { .. } => "solve-st",
            TaskSpec::VerifySt { .. } => "verify-st",
            TaskSpec::TransformObservable { .. } => "transform-observable",
            TaskSpec::UopApply { .. } => "uop-apply",
            TaskSpec::Example { .. } => "example-id",
        }
    }

    fn order_override(&self) -> Option<u16> {
        match self {
            TaskSpec::StarEval { k, .. }
            | TaskSpec::Canonicity { k, .. }
            | TaskSpec::SolveSt { k, .. }
            | TaskSpec::VerifySt { k, .. }
            | TaskSpec::TransformObservable { k, .. } => *k,
            TaskSpec::UopApply { .. } | TaskSpec::Example { .. } => None,
        }
    }
}

/// Transformation constructors. Expression fields are grammar strings in
/// the formal argument `u` (generating data) or in the coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TransformSpec {
    /// x = d x' - b p', p = -c x' + a p', with a d - b c = 1.
    Linear {
        a: String,
        b: String,
        c: String,
        d: String,
    },
    F1 {
        phi1: String,
        #[serde(default = "zero_expr")]
        phi2: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi1_inverse: Option<String>,
    },
    F2 {
        phi1: String,
        #[serde(default = "zero_expr")]
        phi2: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi1_inverse: Option<String>,
    },
    F3 {
        phi1: String,
        #[serde(default = "zero_expr")]
        phi2: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi1_inverse: Option<String>,
    },
    F4 {
        phi1: String,
        #[serde(default = "zero_expr")]
        phi2: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phi1_inverse: Option<String>,
    },
    /// x = -p', p = x'.
    Interchange,
    /// The quantum flow of a polynomial Hamiltonian.
    Flow {
        h: String,
        #[serde(default = "default_dim")]
        n: usize,
        #[serde(default = "default_time")]
        time: String,
    },
    /// Forward (and optionally inverse) components on the standard frames.
    Explicit {
        n: usize,
        forward: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        inverse: Option<Vec<String>>,
        #[serde(default)]
        label: String,
    },
}

impl TransformSpec {
    pub fn build(&self) -> Result<Transformation> {
        let scalar = |phi1: &String,
                      phi2: &String,
                      phi1_inverse: &Option<String>|
         -> Result<(Expr, Expr, Option<Expr>)> {
            let inv = phi1_inverse.as_ref().map(|s| parse(s)).transpose()?;
            Ok((parse(phi1)?, parse(phi2)?, inv))
        };
        let gen = match self {
            TransformSpec::Linear { a, b, c, d } => GeneratingFunction::Linear {
                a: parse(a)?,
                b: parse(b)?,
                c: parse(c)?,
                d: parse(d)?,
            },
            TransformSpec::F1 {
                phi1,
                phi2,
                phi1_inverse,
            } => {
                let (phi1, phi2, phi1_inverse) = scalar(phi1, phi2, phi1_inverse)?;
                GeneratingFunction::F1 {
                    phi1,
                    phi2,
                    phi1_inverse,
                }
            }
            TransformSpec::F2 {
                phi1,
                phi2,
                phi1_inverse,
            } => {
                let (phi1, phi2, phi1_inverse) = scalar(phi1, phi2, phi1_inverse)?;
                GeneratingFunction::F2 {
                    phi1,
                    phi2,
                    phi1_inverse,
                }
            }
            TransformSpec::F3 {
                phi1,
                phi2,
                phi1_inverse,
            } => {
                let (phi1, phi2, phi1_inverse) = scalar(phi1, phi2, phi1_inverse)?;
                GeneratingFunction::F3 {
                    phi1,
                    phi2,
                    phi1_inverse,
                }
            }
            TransformSpec::F4 {
                phi1,
                phi2,
                phi1_inverse,
            } => {
                let (phi1, phi2, phi1_inverse) = scalar(phi1, phi2, phi1_inverse)?;
                GeneratingFunction::F4 {
                    phi1,
                    phi2,
                    phi1_inverse,
                }
            }
            TransformSpec::Interchange => GeneratingFunction::Interchange,
            TransformSpec::Flow { h, n, time } => {
                let (unprimed, primed) = standard_vars(*n);
                return quantum_flow(&parse(h)?, &unprimed, &primed, &Var::new(time))
                    .map_err(CliError::from);
            }
            TransformSpec::Explicit {
                n,
                forward,
                inverse,
                label,
            } => {
                let fw: Result<Vec<Expr>> = forward.iter().map(|s| parse(s)).collect();
                let inv: Result<Option<Vec<Expr>>> = inverse
                    .as_ref()
                    .map(|v| v.iter().map(|s| parse(s)).collect())
                    .transpose();
                GeneratingFunction::Explicit {
                    n: *n,
                    forward: fw?,
                    inverse: inv?,
                    label: label.clone(),
                }
            }
        };
        build_transformation(&gen).map_err(CliError::from)
    }
}

/// Gauge-map constructors for verify/transform tasks.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    /// S = 1.
    Identity,
    /// Solve the intertwining conditions order by order.
    #[default]
    Solve,
    /// The closed-form exponent of the momentum-shear family, for the
    /// generating data phi(u).
    Shear { phi: String },
    /// The closed-form exponent of the square-root point map, with `nmax`
    /// graded terms.
    Sqrt { nmax: usize },
    /// The closed-form three-term exponent of the anharmonic chain;
    /// expression fields name the coupling, the mass, and the time symbol.
    Anharmonic {
        kappa: String,
        m1: String,
        #[serde(default = "default_time")]
        time: String,
    },
}

impl GeneratorSpec {
    pub fn build_iso(&self, t: &Transformation, k: u32) -> Result<GaugeIso> {
        let iso = match self {
            GeneratorSpec::Identity => GaugeIso::identity(t),
            GeneratorSpec::Solve => solve_gauge(t, k)?,
            GeneratorSpec::Shear { phi } => {
                let v = parse(phi)?;
                let gen = shear_gauge_generator(&v, k)?;
                GaugeIso::from_exponent(t, &gen, k)?
            }
            GeneratorSpec::Sqrt { nmax } => {
                let gen = sqrt_gauge_generator(*nmax)?;
                GaugeIso::from_exponent(t, &gen, k)?
            }
            GeneratorSpec::Anharmonic { kappa, m1, time } => {
                let gen = anharmonic_gauge_generator(&parse(kappa)?, &parse(m1)?, &parse(time)?)?;
                GaugeIso::from_exponent(t, &gen, k)?
            }
        };
        Ok(iso)
    }
}

/// Unitary kernels applicable to one-dimensional packets. Curve fields are
/// grammar strings in the formal argument `u`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum UnitarySpec {
    /// The identity map (useful to plot the packet itself).
    Identity,
    Fourier,
    InverseFourier,
    /// The kernel of the linear transformation with b != 0.
    Linear { a: f64, b: f64, d: f64 },
    /// Integral kernel of a momentum-shear transformation.
    Ut1 {
        phi1: String,
        #[serde(default = "zero_expr")]
        phi2: String,
    },
    /// Point-map kernel of a position substitution.
    Ut4 {
        phi1: String,
        #[serde(default = "zero_expr")]
        phi2: String,
    },
}

/// Initial Gaussian packet parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub p0: f64,
    #[serde(default = "one")]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for PacketSpec {
    fn default() -> Self {
        PacketSpec {
            x0: 0.0,
            p0: 0.0,
            sigma: 1.0,
        }
    }
}

/// Grid parameters for numeric tasks.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_l")]
    pub l: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
}

fn default_l() -> f64 {
    20.0
}

fn default_m() -> usize {
    2048
}

fn default_eps() -> f64 {
    0.05
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            l: default_l(),
            m: default_m(),
            epsilon: default_eps(),
        }
    }
}

/// What a grid task attaches to its report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    #[default]
    State,
    Wigner,
}

/// The formal curve argument used by unitary kernel expressions.
pub fn curve_arg() -> Var {
    phi_arg()
}
