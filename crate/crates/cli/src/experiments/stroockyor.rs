//! Stroock-Yor families: submartingale suite and strong Feller moduli.

use anyhow::Result;
use mlab_core::semigroup::EnsembleSpec;
use mlab_core::stroockyor::{
    kernel_tv, strong_feller_modulus, submartingale_check, wiener_modulus_closed_form, BoundaryFunction,
    BoundaryTestFunction, Family, KernelSpec,
};
use mlab_core::RandomSource;
use serde_json::json;

use super::{pairs_within, Experiment};
use crate::params::{Kind, Param, Params};
use crate::report::{cell, num, Assertion, Outcome, Relation, Series};

const FAMILIES: &[&str] = &["wiener", "reflected"];
const BOUNDARY: &[&str] = &["x", "x+t", "arctan", "x+x2/2", "exp(-t)sin", "-x", "t-x"];

pub const SUBMARTINGALE: Experiment = Experiment {
    name: "sy-submartingale",
    description: "One-sided submartingale tests of both families against the boundary test functions",
    params: &[
        Param::opt("stroockyor.families", Kind::Choices(FAMILIES), "wiener,reflected", "families tested"),
        Param::opt("stroockyor.x", Kind::Reals, "0,1,-0.5", "start points"),
        Param::opt("stroockyor.phis", Kind::Choices(BOUNDARY), "x,x+t,arctan,x+x2/2,exp(-t)sin", "test functions"),
        Param::opt("stroockyor.horizon", Kind::Positive, "1", "final time"),
        Param::opt("stroockyor.pairs", Kind::Pairs, "0:0.5,0.25:1,0.5:1,0:1", "(s, t) pairs"),
        Param::opt("stroockyor.paths", Kind::Count, "4000", "paths per test"),
        Param::opt("stroockyor.dt", Kind::Positive, "2e-3", "time step"),
        Param::opt("stroockyor.z_crit", Kind::Positive, "3", "largest admissible violation z"),
    ],
    check: check_submartingale,
    run: run_submartingale,
};

pub const STRONG_FELLER: Experiment = Experiment {
    name: "sy-strongfeller",
    description: "TV distance between transition kernels from two start points, and between the families",
    params: &[
        Param::opt("stroockyor.families", Kind::Choices(FAMILIES), "wiener,reflected", "families"),
        Param::opt("stroockyor.times", Kind::Positives, "0.1,1,10", "kernel times"),
        Param::opt("stroockyor.x", Kind::Real, "1", "first start point"),
        Param::opt("stroockyor.xprime", Kind::Real, "0", "second start point"),
        Param::opt("stroockyor.closed_form_tol", Kind::Positive, "1e-6", "wiener quadrature vs closed form"),
        Param::opt("stroockyor.min_family_tv", Kind::NonNegative, "0.1", "required TV between families at x"),
    ],
    check: super::no_check,
    run: run_strong_feller,
};

fn check_submartingale(p: &Params) -> std::result::Result<(), (&'static str, String)> {
    pairs_within(p, "stroockyor.pairs", "stroockyor.horizon")?;
    if p.num("stroockyor.dt") >= p.num("stroockyor.horizon") {
        return Err(("stroockyor.dt", "must be smaller than the horizon".into()));
    }
    Ok(())
}

fn run_submartingale(p: &Params, seed: u64) -> Result<Outcome> {
    let pairs = p.pairs("stroockyor.pairs");
    let z_crit = p.num("stroockyor.z_crit");
    let mut reports = Vec::new();
    let mut series = Series::new(
        "submartingale",
        &["family", "x", "phi", "s", "t", "weight", "mean", "std_error", "violation_z"],
    );
    let mut worst = f64::NEG_INFINITY;
    let mut stream = 0;
    for fam in p.words("stroockyor.families") {
        let family: Family = fam.parse()?;
        for &x in p.list("stroockyor.x") {
            for name in p.words("stroockyor.phis") {
                let f: BoundaryFunction = name.parse()?;
                let phi = BoundaryTestFunction::new(f, p.num("stroockyor.horizon"))?;
                let spec = EnsembleSpec::new(p.count("stroockyor.paths"), p.num("stroockyor.dt"), RandomSource::new(seed, stream));
                stream += 1;
                let r = submartingale_check(family, x, phi, pairs, &spec)?;
                worst = worst.max(r.max_violation());
                for q in &r.pairs {
                    series.push(vec![
                        fam.clone(),
                        cell(x),
                        name.clone(),
                        cell(q.s),
                        cell(q.t),
                        q.weight.clone(),
                        cell(q.mean),
                        cell(q.std_error),
                        cell(q.violation_z),
                    ]);
                }
                reports.push(json!({
                    "family": fam,
                    "x": x,
                    "phi": name,
                    "n_paths": r.n_paths,
                    "max_violation_z": num(r.max_violation()),
                    "pairs": r.pairs.iter().map(|q| json!({
                        "s": q.s,
                        "t": q.t,
                        "weight": q.weight,
                        "mean": num(q.mean),
                        "std_error": num(q.std_error),
                        "violation_z": num(q.violation_z),
                    })).collect::<Vec<_>>(),
                }));
            }
        }
    }
    Ok(Outcome {
        results: json!({"max_violation_z": num(worst), "reports": reports}),
        assertions: vec![Assertion::new("max one-sided violation z", worst, Relation::AtMost, z_crit)],
        series: vec![series],
        blobs: Vec::new(),
    })
}

fn run_strong_feller(p: &Params, _seed: u64) -> Result<Outcome> {
    let (x, xp) = (p.num("stroockyor.x"), p.num("stroockyor.xprime"));
    let families = p.words("stroockyor.families");
    let mut rows = Vec::new();
    let mut series = Series::new("strongfeller", &["t", "family", "x", "xprime", "tv"]);
    let mut closed_err = 0.0f64;
    let mut family_rows = Vec::new();
    let mut family_max = 0.0f64;
    for &t in p.list("stroockyor.times") {
        for fam in families {
            let family: Family = fam.parse()?;
            let tv = strong_feller_modulus(family, t, x, xp)?;
            if family == Family::Wiener {
                closed_err = closed_err.max((tv - wiener_modulus_closed_form(t, x, xp)).abs());
            }
            rows.push(json!({"family": fam, "t": t, "x": x, "xprime": xp, "tv": num(tv)}));
            series.push(vec![cell(t), fam.clone(), cell(x), cell(xp), cell(tv)]);
        }
        let between = kernel_tv(&KernelSpec::new(Family::Wiener, t, x)?, &KernelSpec::new(Family::Reflected, t, x)?);
        family_max = family_max.max(between);
        family_rows.push(json!({"t": t, "x": x, "tv": num(between)}));
    }
    let mut assertions = Vec::new();
    if families.iter().any(|f| f == "wiener") {
        assertions.push(Assertion::new(
            "|wiener modulus - closed form|",
            closed_err,
            Relation::Less,
            p.num("stroockyor.closed_form_tol"),
        ));
    }
    assertions.push(Assertion::new(
        "max TV(wiener, reflected) at x",
        family_max,
        Relation::Greater,
        p.num("stroockyor.min_family_tv"),
    ));
    Ok(Outcome {
        results: json!({"rows": rows, "families_tv": family_rows, "wiener_closed_form_error": num(closed_err)}),
        assertions,
        series: vec![series],
        blobs: Vec::new(),
    })
}
