//! Semigroup estimators: resolvent identity, finite-difference generator and
//! martingale-problem residuals.

use anyhow::Result;
use mlab_core::girsanov::{generator_action, Girsanov, Selection, Sigma, StickyParam};
use mlab_core::nse::{formal_generator_cylinder, CylinderFunction, CylinderKind, SpectralField};
use mlab_core::observable::ScalarObservable;
use mlab_core::peano::SelectionFamily;
use mlab_core::semigroup::{
    generator_fd, martingale_problem_residual, resolvent_identity_residual, BoundedObservable, BrownianDynamics,
    Dynamics, EnsembleSpec, FdOutcome, ResolventOptions,
};
use mlab_core::stroockyor::Family;
use mlab_core::RandomSource;
use serde_json::{json, Value};

use super::girsanov::ALPHA;
use super::nse::{check_system, system, ALPHA0, CUTOFF, N, NU};
use super::{observable, pairs_within, Experiment, OBSERVABLES};
use crate::params::{Kind, Param, Params};
use crate::report::{num, Assertion, Outcome, Relation, Series};

const SCALAR: &[&str] = &["peano", "girsanov", "brownian", "wiener", "reflected"];
const WITH_NSE: &[&str] = &["peano", "girsanov", "brownian", "wiener", "reflected", "nse"];
const CYLINDERS: &[&str] = &["linear", "quadratic", "cosine"];
const PHIS: &[&str] = &["one", "x", "x2", "cos", "sin", "tanh", "abs_tanh", "linear", "quadratic", "cosine"];

const DELAY: Param = Param::opt("peano.delay", Kind::Law, "exponential(1)", "Peano departure-time law at 0");
const Z_CRIT: Param = Param::opt("semigroup.z_crit", Kind::Positive, "3", "standard errors allowed");

pub const RESOLVENT_IDENTITY: Experiment = Experiment {
    name: "resolvent-identity",
    description: "Residual of R_a - R_b = (b - a) R_a R_b with every error component reported",
    params: &[
        Param::opt("semigroup.dynamics", Kind::Choice(SCALAR), "girsanov", "dynamics"),
        Param::opt("semigroup.x", Kind::Real, "1", "start point"),
        Param::opt("semigroup.phi", Kind::Choice(OBSERVABLES), "cos", "bounded observable"),
        Param::opt("semigroup.lambda1", Kind::Positive, "1", "first resolvent parameter"),
        Param::opt("semigroup.lambda2", Kind::Positive, "2", "second resolvent parameter"),
        Param::opt("semigroup.ensemble", Kind::Count, "10000", "number of paths"),
        Param::opt("semigroup.dt", Kind::Positive, "1e-2", "time step"),
        Param::opt("semigroup.tolerance", Kind::Positive, "1e-3", "tail tolerance of the time integrals"),
        Param::opt("semigroup.floor", Kind::NonNegative, "1e-8", "absolute slack added to the error bound"),
        Z_CRIT,
        ALPHA,
        DELAY,
    ],
    check: check_resolvent,
    run: run_resolvent,
};

pub const GENERATOR_CHECK: Experiment = Experiment {
    name: "generator-check",
    description: "Richardson finite-difference generator against the formal generator",
    params: &[
        Param::opt("semigroup.dynamics", Kind::Choice(WITH_NSE), "nse", "dynamics"),
        Param::opt("semigroup.x", Kind::Real, "0", "start point (nse: coefficient along the direction)"),
        Param::opt("semigroup.phi", Kind::Choice(PHIS), "quadratic", "observable (nse: cylinder profile)"),
        Param::opt("semigroup.eps", Kind::Positives, "1e-2,1e-3", "decreasing difference steps"),
        Param::opt("semigroup.ensemble", Kind::Count, "10000", "number of paths"),
        Param::opt("semigroup.dt", Kind::Positive, "1e-3", "time step"),
        Param::opt("semigroup.tolerance", Kind::NonNegative, "1e-3", "absolute slack (discretization bias)"),
        Z_CRIT,
        ALPHA,
        DELAY,
        N,
        NU,
        ALPHA0,
        CUTOFF,
        Param::opt("nse.mode", Kind::CountIn(0, 100_000), "0", "real coordinate used as the direction"),
        Param::opt("nse.background", Kind::NonNegative, "0", "amplitude c/|k|^2 of a random background field"),
    ],
    check: check_generator,
    run: run_generator,
};

pub const MP_RESIDUAL: Experiment = Experiment {
    name: "mp-residual",
    description: "Martingale-problem increments of phi(X_t) - int L phi(X_s) ds for a generator table",
    params: &[
        Param::opt("semigroup.dynamics", Kind::Choice(SCALAR), "girsanov", "dynamics (not peano)"),
        Param::opt("semigroup.generator", Kind::Choice(&["matching", "absorbing"]), "matching", "generator table"),
        Param::opt("semigroup.x", Kind::Real, "0", "start point"),
        Param::opt("semigroup.phi", Kind::Choice(OBSERVABLES), "cos", "observable"),
        Param::opt("semigroup.horizon", Kind::Positive, "1", "final time"),
        Param::opt("semigroup.pairs", Kind::Pairs, "0:0.5,0.5:1,0.25:1", "(s, t) pairs"),
        Param::opt("semigroup.ensemble", Kind::Count, "2000", "number of paths"),
        Param::opt("semigroup.dt", Kind::Positive, "1e-2", "time step"),
        Z_CRIT,
        ALPHA,
    ],
    check: check_mp,
    run: run_mp,
};

/// The scalar dynamics selectable by name.
enum Scalar {
    Peano(SelectionFamily),
    Girsanov(Girsanov),
    Brownian(BrownianDynamics),
    StroockYor(Family),
}

macro_rules! with_dynamics {
    ($s:expr, $d:ident => $body:expr) => {
        match $s {
            Scalar::Peano($d) => $body,
            Scalar::Girsanov($d) => $body,
            Scalar::Brownian($d) => $body,
            Scalar::StroockYor($d) => $body,
        }
    };
}

fn scalar(p: &Params, name: &str) -> Result<Scalar> {
    Ok(match name {
        "peano" => Scalar::Peano(SelectionFamily::new(p.law("peano.delay").clone())),
        "girsanov" => Scalar::Girsanov(Girsanov::new(Sigma::alpha(p.num("girsanov.alpha"))?, Selection::NoDelay)),
        "brownian" => Scalar::Brownian(BrownianDynamics),
        other => Scalar::StroockYor(other.parse()?),
    })
}

impl Scalar {
    fn name(&self) -> String {
        with_dynamics!(self, d => Dynamics::name(d))
    }

    /// The Itô generator applied to `f` at `x`.
    fn generator(&self, f: ScalarObservable, x: f64) -> f64 {
        match self {
            Scalar::Peano(_) => (-x + x.max(0.0).sqrt()) * f.d1(x),
            Scalar::Girsanov(g) => 0.5 * g.sigma.eval(x).powi(2) * f.d2(x),
            Scalar::Brownian(_) | Scalar::StroockYor(_) => 0.5 * f.d2(x),
        }
    }
}

fn check_resolvent(p: &Params) -> std::result::Result<(), (&'static str, String)> {
    if p.num("semigroup.lambda1") == p.num("semigroup.lambda2") {
        return Err(("semigroup.lambda2", "must differ from lambda1".into()));
    }
    let phi: ScalarObservable = p.word("semigroup.phi").parse().map_err(|e| ("semigroup.phi", format!("{e}")))?;
    let x = p.num("semigroup.x");
    let peano = p.word("semigroup.dynamics") == "peano";
    if peano && x < 0.0 {
        return Err(("semigroup.x", "peano states are nonnegative".into()));
    }
    let (lo, hi) = if peano { (0.0, x.max(1.0)) } else { (f64::NEG_INFINITY, f64::INFINITY) };
    if phi.sup_norm(lo, hi).is_none() {
        return Err(("semigroup.phi", format!("`{phi}` is unbounded on the state space")));
    }
    Ok(())
}

fn run_resolvent(p: &Params, seed: u64) -> Result<Outcome> {
    let dyn_name = p.word("semigroup.dynamics");
    let d = scalar(p, dyn_name)?;
    let f = observable(p.word("semigroup.phi"))?;
    let x = p.num("semigroup.x");
    let (lo, hi) = if dyn_name == "peano" { (0.0, x.max(1.0)) } else { (f64::NEG_INFINITY, f64::INFINITY) };
    let sup = f.sup_norm(lo, hi).unwrap_or(f64::INFINITY);
    let eval = |y: &f64| f.eval(*y);
    let phi = BoundedObservable::new(f.name(), &eval, Some(sup))?;
    let (a, b) = (p.num("semigroup.lambda1"), p.num("semigroup.lambda2"));
    let spec = EnsembleSpec::new(p.count("semigroup.ensemble"), p.num("semigroup.dt"), RandomSource::new(seed, 0));
    let opts = ResolventOptions::for_tolerance(a.min(b), sup, p.num("semigroup.tolerance"), spec);
    let r = with_dynamics!(&d, dynamics => resolvent_identity_residual(dynamics, &x, &phi, a, b, &opts))?;
    let bound = p.num("semigroup.z_crit") * r.combined_error() + p.num("semigroup.floor");
    Ok(Outcome {
        results: json!({
            "dynamics": d.name(),
            "x": x,
            "phi": f.name(),
            "lambda1": a,
            "lambda2": b,
            "product": num(r.product),
            "residual": num(r.residual),
            "quadrature_error": num(r.quadrature_error),
            "mc_error": num(r.mc_error),
            "combined_error": num(r.combined_error()),
            "n_paths": spec.n_paths,
        }),
        assertions: vec![Assertion::new("residual", r.residual, Relation::AtMost, bound)],
        series: Vec::new(),
        blobs: Vec::new(),
    })
}

fn check_generator(p: &Params) -> std::result::Result<(), (&'static str, String)> {
    let eps = p.list("semigroup.eps");
    if eps.len() < 2 || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(("semigroup.eps", "need at least two strictly decreasing steps".into()));
    }
    let dyn_name = p.word("semigroup.dynamics");
    let phi = p.word("semigroup.phi");
    let cylinder = CYLINDERS.contains(&phi);
    if dyn_name == "nse" {
        if !cylinder {
            return Err(("semigroup.phi", format!("nse needs one of {}", CYLINDERS.join("|"))));
        }
        check_system(p, p.num("semigroup.dt"), eps[0])?;
        let dim = mlab_core::nse::WaveLattice::new(p.count("nse.n")).map(|l| l.real_dim()).unwrap_or(0);
        if p.count("nse.mode") >= dim {
            return Err(("nse.mode", format!("must be below the real dimension {dim}")));
        }
    } else if cylinder {
        return Err(("semigroup.phi", format!("scalar dynamics need one of {}", OBSERVABLES.join("|"))));
    } else if dyn_name == "peano" && p.num("semigroup.x") < 0.0 {
        return Err(("semigroup.x", "peano states are nonnegative".into()));
    }
    Ok(())
}

fn fd_json(out: &FdOutcome) -> Value {
    let e = out.estimate();
    json!({
        "value": num(e.value),
        "std_error": num(e.std_error),
        "conclusive": out.is_conclusive(),
        "n": e.n,
        "quotients": e.quotients.iter().map(|(eps, q, se)| json!({"eps": eps, "quotient": num(*q), "std_error": num(*se)})).collect::<Vec<_>>(),
    })
}

fn run_generator(p: &Params, seed: u64) -> Result<Outcome> {
    let dyn_name = p.word("semigroup.dynamics");
    let eps = p.list("semigroup.eps");
    let spec = EnsembleSpec::new(p.count("semigroup.ensemble"), p.num("semigroup.dt"), RandomSource::new(seed, 0));
    let x = p.num("semigroup.x");
    let (out, formal, extra) = if dyn_name == "nse" {
        let sys = system(p)?;
        let lat = sys.lattice.clone();
        let e = SpectralField::coordinate(&lat, p.count("nse.mode"))?;
        let c = p.num("nse.background");
        let background = SpectralField::random(&lat, |k2| c / k2, &mut RandomSource::new(seed, 1).rng());
        let state = background.add(&e.scale(x));
        let cyl = CylinderFunction::new(CylinderKind::from_name(p.word("semigroup.phi"))?, e);
        let f = |u: &SpectralField| cyl.eval(u);
        let out = generator_fd(&sys, &state, &f, eps, &spec)?;
        let formal = formal_generator_cylinder(&sys, &state, &cyl);
        (out, formal, json!({"chi_weight": num(sys.chi_weight(&state)), "w_norm_sq": num(sys.w_norm_sq(&state))}))
    } else {
        let d = scalar(p, dyn_name)?;
        let f = observable(p.word("semigroup.phi"))?;
        let eval = |y: &f64| f.eval(*y);
        let out = with_dynamics!(&d, dynamics => generator_fd(dynamics, &x, &eval, eps, &spec))?;
        (out, d.generator(f, x), Value::Null)
    };
    let est = out.estimate();
    let diff = (est.value - formal).abs();
    let bound = p.num("semigroup.z_crit") * est.std_error + p.num("semigroup.tolerance");
    Ok(Outcome {
        results: json!({
            "dynamics": dyn_name,
            "x": x,
            "phi": p.word("semigroup.phi"),
            "fd": fd_json(&out),
            "formal_generator": num(formal),
            "abs_difference": num(diff),
            "state": extra,
        }),
        assertions: vec![
            Assertion::holds("finite-difference estimate is conclusive", out.is_conclusive()),
            Assertion::new("|FD - formal generator|", diff, Relation::AtMost, bound),
        ],
        series: Vec::new(),
        blobs: Vec::new(),
    })
}

fn check_mp(p: &Params) -> std::result::Result<(), (&'static str, String)> {
    if p.word("semigroup.dynamics") == "peano" {
        return Err((
            "semigroup.dynamics",
            "peano paths give a constant functional; use resolvent-identity or generator-check".into(),
        ));
    }
    pairs_within(p, "semigroup.pairs", "semigroup.horizon")
}

fn run_mp(p: &Params, seed: u64) -> Result<Outcome> {
    let d = scalar(p, p.word("semigroup.dynamics"))?;
    let f = observable(p.word("semigroup.phi"))?;
    let table = p.word("semigroup.generator");
    let absorbing = table == "absorbing";
    let sigma = Sigma::alpha(p.num("girsanov.alpha"))?;
    let l_phi = |y: &f64| {
        if absorbing {
            // the absorbing table predicts stasis at 0
            if *y == 0.0 {
                generator_action(StickyParam::Absorbing, &f, 0.0, sigma).unwrap_or(0.0)
            } else {
                d.generator(f, *y)
            }
        } else {
            d.generator(f, *y)
        }
    };
    let eval = |y: &f64| f.eval(*y);
    let x = p.num("semigroup.x");
    let spec = EnsembleSpec::new(p.count("semigroup.ensemble"), p.num("semigroup.dt"), RandomSource::new(seed, 0));
    let pairs = p.pairs("semigroup.pairs");
    let horizon = p.num("semigroup.horizon");
    let report = with_dynamics!(&d, dynamics => martingale_problem_residual(dynamics, &x, &eval, &l_phi, horizon, pairs, &spec))?;
    let mut series = Series::new("increments", &["s", "t", "coefficient", "std_error", "z"]);
    let rows: Vec<Value> = report
        .pairs
        .iter()
        .zip(pairs)
        .map(|(q, &(s, t))| {
            series.push(vec![
                crate::report::cell(s),
                crate::report::cell(t),
                crate::report::cell(q.coefficients[0]),
                crate::report::cell(q.std_errors[0]),
                crate::report::cell(q.z_scores[0]),
            ]);
            json!({
                "s": s,
                "t": t,
                "coefficients": q.coefficients.iter().map(|v| num(*v)).collect::<Vec<_>>(),
                "std_errors": q.std_errors.iter().map(|v| num(*v)).collect::<Vec<_>>(),
                "z_scores": q.z_scores.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            })
        })
        .collect();
    Ok(Outcome {
        results: json!({
            "dynamics": d.name(),
            "generator": table,
            "x": x,
            "phi": f.name(),
            "n_paths": report.n_paths,
            "max_abs_z": num(report.max_abs_z()),
            "pairs": rows,
        }),
        assertions: vec![Assertion::new("max |z|", report.max_abs_z(), Relation::AtMost, p.num("semigroup.z_crit"))],
        series: vec![series],
        blobs: Vec::new(),
    })
}
