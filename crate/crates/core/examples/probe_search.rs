use dynr_core::chart::*;
use dynr_core::curve::CurveModel;
use dynr_core::looplie::LieData;
use num::BigRational;
use std::sync::Arc;

fn q2(n: i64, d: i64) -> BigRational { BigRational::new(n.into(), d.into()) }
fn q(n: i64) -> BigRational { BigRational::from_integer(n.into()) }

fn main() {
    let d1 = Arc::new(CurveModel::build(&[q(-1), q(0), q(0), q(0), q(0), q(1)]).unwrap());
    let lie = Arc::new(LieData::new(2));
    let coeffs = [q(1), q(-1), q(2), q(-2), q2(1,2), q2(-1,2)];
    let mut pass = 0usize;
    let mut total = 0usize;
    let mut reasons: std::collections::BTreeMap<String, usize> = Default::default();
    let mut passing: Vec<String> = vec![];
    for k1 in -2..=2i64 {
        for k2 in -2..=2i64 {
            for a in &coeffs {
                for b in &coeffs {
                    total += 1;
                    let spec = ChartSpec {
                        sigma0: Sigma0Spec { factors: vec![
                            ElementaryFactor { punct: 0, c: a.clone(), k: k1, row: 0, col: 1 },
                            ElementaryFactor { punct: 0, c: b.clone(), k: k2, row: 1, col: 0 },
                        ]},
                        eta: default_eta_spec(&lie, 1, 3),
                        jet_order: 2,
                        depth: 4,
                        slack: 2,
                    };
                    match BundleChart::build(d1.clone(), lie.clone(), spec) {
                        Ok(_) => { pass += 1; passing.push(format!("u({a}·z^{k1}) l({b}·z^{k2})")); }
                        Err(e) => {
                            let s: String = e.to_string().chars().take(72).collect();
                            *reasons.entry(s).or_insert(0) += 1;
                        }
                    }
                }
            }
        }
    }
    println!("two-factor: {pass}/{total} pass");
    for p in passing.iter().take(20) { println!("  PASS {p}"); }
    for (k, v) in reasons { println!("  {v:4}  {k}"); }
}
