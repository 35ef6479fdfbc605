//! Property tests for the exact star-product algebra: associativity,
//! left-multiplication consistency, the star-monomial basis and the
//! parser/printer round trip, all on randomly generated polynomials.

use moyal::expr::parse_expr;
use moyal::starprod::StarProduct;
use moyal::{Expr, Var};
use proptest::prelude::*;

/// High enough that every star product of the generated polynomials is
/// exact (grades are bounded by the polynomial degrees).
const K: u32 = 12;

#[derive(Clone, Debug)]
struct Poly {
    terms: Vec<(i64, Vec<u16>)>,
}

impl Poly {
    fn build(&self, vars: &[Var]) -> Expr {
        let mut e = Expr::zero();
        for (c, exps) in &self.terms {
            let mut term = Expr::from_int(*c);
            for (v, k) in vars.iter().zip(exps) {
                term = term.mul(&Expr::var_of(v).pow(*k as i64).expect("nonnegative"));
            }
            e = &e + &term;
        }
        e
    }
}

fn poly_strategy(nvars: usize, max_exp: u16) -> impl Strategy<Value = Poly> {
    let term = (
        -4i64..=4,
        prop::collection::vec(0..=max_exp, nvars..=nvars),
    );
    prop::collection::vec(term, 1..4).prop_map(|terms| Poly { terms })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn moyal_star_is_associative(
        f in poly_strategy(2, 2),
        g in poly_strategy(2, 2),
        h in poly_strategy(2, 2),
    ) {
        let sp = StarProduct::moyal(1);
        let vars: Vec<Var> = sp.frame().to_vec();
        let (f, g, h) = (f.build(&vars), g.build(&vars), h.build(&vars));
        let left = sp.star_expr(&sp.star_expr(&f, &g, K).unwrap(), &h, K).unwrap();
        let right = sp.star_expr(&f, &sp.star_expr(&g, &h, K).unwrap(), K).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn left_multiplication_operator_reproduces_star(
        f in poly_strategy(2, 2),
        g in poly_strategy(2, 2),
    ) {
        let sp = StarProduct::moyal(1);
        let vars: Vec<Var> = sp.frame().to_vec();
        let (f, g) = (f.build(&vars), g.build(&vars));
        let op = sp.left_mult_operator(&f, K).unwrap();
        let via_op = op.apply(&g).unwrap().to_expr();
        let direct = sp.star_expr(&f, &g, K).unwrap();
        prop_assert_eq!(via_op, direct);
    }

    #[test]
    fn star_basis_expansion_round_trips(f in poly_strategy(2, 3)) {
        let sp = StarProduct::moyal(1);
        let vars: Vec<Var> = sp.frame().to_vec();
        let f = f.build(&vars);
        let mut back = Expr::zero();
        for ((n, m), c) in sp.to_star_basis(&f).unwrap() {
            back = &back + &c.mul(&sp.star_monomial(n, m).unwrap());
        }
        prop_assert_eq!(back, f);
    }

    #[test]
    fn two_degree_associativity_spot_check(
        f in poly_strategy(4, 1),
        g in poly_strategy(4, 1),
        h in poly_strategy(4, 1),
    ) {
        let sp = StarProduct::moyal(2);
        let vars: Vec<Var> = sp.frame().to_vec();
        let (f, g, h) = (f.build(&vars), g.build(&vars), h.build(&vars));
        let left = sp.star_expr(&sp.star_expr(&f, &g, K).unwrap(), &h, K).unwrap();
        let right = sp.star_expr(&f, &sp.star_expr(&g, &h, K).unwrap(), K).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn printed_expressions_parse_back(
        p in poly_strategy(2, 3),
        num in -9i64..=9,
        den in 1i64..=9,
        hpow in 0u32..=3,
    ) {
        let vars = [Var::new("x"), Var::new("p")];
        let e = p
            .build(&vars)
            .mul_rat(num, den)
            .mul_hbar_pow(hpow)
            .add(&Expr::var("x").mul(&parse_expr("i").unwrap()));
        let printed = format!("{e}");
        let round = parse_expr(&printed).unwrap();
        prop_assert_eq!(round, e, "printed form: {}", printed);
    }
}

#[test]
fn canonical_pair_relations() {
    let sp = StarProduct::moyal(1);
    let x = Expr::var_of(&sp.xs()[0]);
    let p = Expr::var_of(&sp.ps()[0]);
    let comm = sp.star_commutator(&x, &p, 6).unwrap();
    assert!(comm.is_exact());
    assert_eq!(comm.to_expr(), moyal::expr::i_hbar_rat(1, 1));
    let br = sp.bracket(&x, &p, 6).unwrap();
    assert_eq!(br.to_expr(), Expr::one());
}
