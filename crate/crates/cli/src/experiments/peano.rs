//! Peano selections: Markov defect and extremality gap.

use anyhow::Result;
use mlab_core::peano::{extremality_gap, markov_defect, SelectionFamily};
use serde_json::json;

use super::{no_check, observable, Experiment, OBSERVABLES};
use crate::params::{Kind, Param, Params};
use crate::report::{cell, num, Assertion, Outcome, Relation, Series};

pub const MARKOV: Experiment = Experiment {
    name: "peano-markov",
    description: "Markov defect of the Peano selection with a given departure law over an (s, t, f) lattice",
    params: &[
        Param::req("peano.delay", Kind::Law, "exponential(1)", "departure-time law at 0"),
        Param::opt("peano.times", Kind::Positives, "0.25,1,4", "s and t lattice"),
        Param::opt("peano.observables", Kind::Choices(OBSERVABLES), "x,x2,cos", "test functions"),
        Param::opt("peano.tolerance", Kind::Positive, "1e-8", "largest admissible |defect|"),
    ],
    check: no_check,
    run: run_markov,
};

pub const EXTREMAL: Experiment = Experiment {
    name: "peano-extremal",
    description: "Resolvent gap between exponential selections against its closed form",
    params: &[
        Param::opt("peano.lambdas", Kind::Positives, "0.5,1,2", "resolvent parameters"),
        Param::opt("peano.rates", Kind::Rates, "0,0.5,1,2,inf", "departure rates a and b"),
        Param::opt("peano.observables", Kind::Choices(OBSERVABLES), "x,x2", "test functions"),
        Param::opt("peano.tolerance", Kind::Positive, "1e-8", "largest admissible |gap - formula|"),
    ],
    check: no_check,
    run: run_extremal,
};

fn run_markov(p: &Params, _seed: u64) -> Result<Outcome> {
    let law = p.law("peano.delay").clone();
    let label = law.label();
    let family = SelectionFamily::new(law);
    let times = p.list("peano.times");
    let mut rows = Vec::new();
    let mut series = Series::new("defects", &["s", "t", "f", "defect"]);
    let mut worst = 0.0f64;
    for &s in times {
        for &t in times {
            for name in p.words("peano.observables") {
                let f = observable(name)?;
                let d = markov_defect(&family, s, t, f)?;
                worst = worst.max(d.abs());
                rows.push(json!({"nu": label, "s": s, "t": t, "f": name, "defect": num(d)}));
                series.push(vec![cell(s), cell(t), name.clone(), cell(d)]);
            }
        }
    }
    Ok(Outcome {
        results: json!({"nu": label, "max_abs_defect": num(worst), "rows": rows}),
        assertions: vec![Assertion::new("max |defect|", worst, Relation::Less, p.num("peano.tolerance"))],
        series: vec![series],
        blobs: Vec::new(),
    })
}

fn run_extremal(p: &Params, _seed: u64) -> Result<Outcome> {
    let rates = p.list("peano.rates");
    let mut rows = Vec::new();
    let mut series = Series::new("extremality", &["a", "b", "lambda", "f", "gap", "formula_gap", "abs_err"]);
    let mut worst = 0.0f64;
    for &lambda in p.list("peano.lambdas") {
        for name in p.words("peano.observables") {
            let f = observable(name)?;
            for &a in rates {
                for &b in rates {
                    let g = extremality_gap(lambda, f, a, b)?;
                    worst = worst.max(g.abs_err);
                    rows.push(json!({
                        "lambda": lambda,
                        "f": name,
                        "a": num(a),
                        "b": num(b),
                        "gap": num(g.gap),
                        "formula_gap": num(g.formula_gap),
                        "abs_err": num(g.abs_err),
                    }));
                    series.push(vec![
                        cell(a),
                        cell(b),
                        cell(lambda),
                        name.clone(),
                        cell(g.gap),
                        cell(g.formula_gap),
                        cell(g.abs_err),
                    ]);
                }
            }
        }
    }
    Ok(Outcome {
        results: json!({"max_abs_err": num(worst), "rows": rows}),
        assertions: vec![Assertion::new("max |gap - formula_gap|", worst, Relation::Less, p.num("peano.tolerance"))],
        series: vec![series],
        blobs: Vec::new(),
    })
}
