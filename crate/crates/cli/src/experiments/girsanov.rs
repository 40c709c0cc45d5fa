//! Girsanov example: quadratic variation, delayed Chapman-Kolmogorov and
//! invariant measures of the damped selections.

use anyhow::Result;
use mlab_core::girsanov::{
    chapman_kolmogorov, invariant_histogram, occupation, simulate_no_delay, ClockSpec, Sigma, StickyParam,
};
use mlab_core::pathcore::quadrature::cumulative_trapezoid;
use mlab_core::pathcore::{ensemble, BinEdges, MeanEstimate};
use mlab_core::{RandomSource, TimeGrid};
use serde_json::{json, Value};

use super::Experiment;
use crate::params::{Kind, Param, Params};
use crate::report::{cell, num, Assertion, Outcome, Relation, Series};

pub(super) const ALPHA: Param = Param::opt("girsanov.alpha", Kind::Open(0.0, 0.5), "0.25", "exponent of sigma");

pub const QV: Experiment = Experiment {
    name: "girsanov-qv",
    description: "Realized quadratic variation against the integrated sigma^2 and the occupation of 0",
    params: &[
        ALPHA,
        Param::opt("girsanov.x0", Kind::Real, "1", "start point"),
        Param::opt("girsanov.dt", Kind::Positive, "1e-3", "time step"),
        Param::opt("girsanov.horizon", Kind::Positive, "1", "final time"),
        Param::opt("girsanov.paths", Kind::Count, "200", "number of paths"),
        Param::opt("girsanov.eps", Kind::Positive, "0.1", "occupation half-width (compared with 2*eps)"),
        Param::opt("girsanov.qv_tolerance", Kind::Positive, "0.05", "largest relative QV difference"),
        Param::opt("girsanov.occupation_ratio_max", Kind::Open(0.0, 1.0), "0.9", "bound on occ(eps)/occ(2 eps)"),
        Param::opt("girsanov.dump_paths", Kind::CountIn(0, 1000), "0", "paths written to paths.csv"),
    ],
    check: check_qv,
    run: run_qv,
};

pub const DELAY_MARKOV: Experiment = Experiment {
    name: "girsanov-delay-markov",
    description: "Chapman-Kolmogorov TV check of the delayed (sticky) solution",
    params: &[
        ALPHA,
        Param::opt("girsanov.x0", Kind::Real, "0", "start point"),
        Param::opt("girsanov.rate", Kind::Positive, "1", "rate of the exponential clocks"),
        Param::opt("girsanov.s", Kind::Positive, "0.5", "restart time"),
        Param::opt("girsanov.t", Kind::Positive, "0.5", "time after the restart"),
        Param::opt("girsanov.dt", Kind::Positive, "1e-3", "time step"),
        Param::opt("girsanov.paths", Kind::Count, "10000", "paths per law"),
        Param::opt("girsanov.bins", Kind::Count, "12", "histogram bins on [-range, range]"),
        Param::opt("girsanov.range", Kind::Positive, "1.2", "histogram half-width"),
        Param::opt("girsanov.tv_max", Kind::Positive, "0.05", "largest admissible TV"),
    ],
    check: check_delay,
    run: run_delay,
};

pub const INVARIANT: Experiment = Experiment {
    name: "girsanov-invariant",
    description: "Atom at 0 of the absorbed and no-delay damped selections' long-run laws",
    params: &[
        ALPHA,
        Param::opt("girsanov.x0", Kind::Real, "1", "start point"),
        Param::opt("girsanov.burn_in", Kind::NonNegative, "0", "discarded initial time"),
        Param::opt("girsanov.horizon", Kind::Positive, "30", "final time"),
        Param::opt("girsanov.dt", Kind::Positive, "1e-2", "time step"),
        Param::opt("girsanov.paths", Kind::Count, "200", "independent paths per selection"),
        Param::opt("girsanov.bins", Kind::Count, "20", "histogram bins on [-range, range]"),
        Param::opt("girsanov.range", Kind::Positive, "2", "histogram half-width"),
        Param::opt("girsanov.z_crit", Kind::Positive, "3", "required separation in standard errors"),
    ],
    check: check_invariant,
    run: run_invariant,
};

fn check_qv(p: &Params) -> std::result::Result<(), (&'static str, String)> {
    if p.num("girsanov.dt") >= p.num("girsanov.horizon") {
        return Err(("girsanov.dt", "must be smaller than the horizon".into()));
    }
    Ok(())
}

fn check_delay(p: &Params) -> std::result::Result<(), (&'static str, String)> {
    let dt = p.num("girsanov.dt");
    for key in ["girsanov.s", "girsanov.t"] {
        if p.num(key) <= dt {
            return Err((key, format!("must exceed dt = {dt}")));
        }
    }
    Ok(())
}

fn check_invariant(p: &Params) -> std::result::Result<(), (&'static str, String)> {
    if p.num("girsanov.horizon") <= p.num("girsanov.burn_in") + p.num("girsanov.dt") {
        return Err(("girsanov.horizon", "must exceed burn_in by more than one step".into()));
    }
    Ok(())
}

fn summary(alpha: f64, param: &str, statistic: &str, value: f64, std_error: Option<f64>) -> Value {
    json!({
        "alpha": alpha,
        "param": param,
        "statistic": statistic,
        "value": num(value),
        "std_error": std_error.map_or(Value::Null, num),
    })
}

fn run_qv(p: &Params, seed: u64) -> Result<Outcome> {
    let alpha = p.num("girsanov.alpha");
    let sigma = Sigma::alpha(alpha)?;
    let x0 = p.num("girsanov.x0");
    let g = TimeGrid::horizon(p.num("girsanov.horizon"), p.num("girsanov.dt"))?;
    let eps = p.num("girsanov.eps");
    let dump = p.count("girsanov.dump_paths").min(p.count("girsanov.paths"));
    let rows = ensemble(p.count("girsanov.paths"), RandomSource::new(seed, 0), |src| {
        let path = simulate_no_delay(sigma, x0, &g, src)?;
        let v = path.values();
        let qv: f64 = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        let sig: Vec<f64> = v.iter().map(|x| sigma.eval(*x).powi(2)).collect();
        let int = cumulative_trapezoid(&sig, g.dt()).last().copied().unwrap_or(0.0);
        Ok::<_, mlab_core::Error>((qv, int, occupation(&path, 0.0, eps), occupation(&path, 0.0, 2.0 * eps), v.to_vec()))
    })
    .into_iter()
    .collect::<std::result::Result<Vec<_>, _>>()?;
    let qv = MeanEstimate::from_samples(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let int = MeanEstimate::from_samples(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let rel = qv.mean / int.mean - 1.0;
    let o1: f64 = rows.iter().map(|r| r.2).sum();
    let o2: f64 = rows.iter().map(|r| r.3).sum();
    let ratio = if o2 > 0.0 { o1 / o2 } else { f64::NAN };
    let param = format!("x0={x0},dt={},horizon={},eps={eps}", g.dt(), g.end());
    let summaries = vec![
        summary(alpha, &param, "quadratic_variation", qv.mean, Some(qv.std_error)),
        summary(alpha, &param, "integrated_sigma_sq", int.mean, Some(int.std_error)),
        summary(alpha, &param, "relative_difference", rel, None),
        summary(alpha, &param, "occupation_eps", o1 / rows.len() as f64, None),
        summary(alpha, &param, "occupation_2eps", o2 / rows.len() as f64, None),
        summary(alpha, &param, "occupation_ratio", ratio, None),
    ];
    let mut series = Vec::new();
    if dump > 0 {
        let mut cols = vec!["t".to_string()];
        cols.extend((0..dump).map(|i| format!("path{i}")));
        let mut s = Series::new("paths", &[]);
        s.columns = cols;
        for (k, t) in g.times().enumerate() {
            let mut row = vec![cell(t)];
            row.extend(rows[..dump].iter().map(|r| cell(r.4[k])));
            s.push(row);
        }
        series.push(s);
    }
    Ok(Outcome {
        results: json!({"summaries": summaries, "n_paths": rows.len()}),
        assertions: vec![
            Assertion::new("|E[X]_T / E int sigma^2 - 1|", rel.abs(), Relation::Less, p.num("girsanov.qv_tolerance")),
            Assertion::new("occ(eps) / occ(2 eps)", ratio, Relation::Less, p.num("girsanov.occupation_ratio_max")),
        ],
        series,
        blobs: Vec::new(),
    })
}

fn run_delay(p: &Params, seed: u64) -> Result<Outcome> {
    let alpha = p.num("girsanov.alpha");
    let range = p.num("girsanov.range");
    let edges = BinEdges::uniform_with_tails(-range, range, p.count("girsanov.bins"))?.with_atom(0.0, 1e-12)?;
    let (s, t) = (p.num("girsanov.s"), p.num("girsanov.t"));
    let ck = chapman_kolmogorov(
        Sigma::alpha(alpha)?,
        p.num("girsanov.x0"),
        ClockSpec::new(p.num("girsanov.rate"))?,
        s,
        t,
        p.num("girsanov.dt"),
        p.count("girsanov.paths"),
        &edges,
        RandomSource::new(seed, 0),
    )?;
    let param = format!("rate={},s={s},t={t}", p.num("girsanov.rate"));
    Ok(Outcome {
        results: json!({
            "summaries": [
                summary(alpha, &param, "tv", ck.tv, None),
                summary(alpha, &param, "atom_direct", ck.atom_direct, None),
                summary(alpha, &param, "atom_restarted", ck.atom_restarted, None),
            ],
            "n_paths": ck.n_paths,
        }),
        assertions: vec![Assertion::new("TV(direct, restarted)", ck.tv, Relation::AtMost, p.num("girsanov.tv_max"))],
        series: Vec::new(),
        blobs: Vec::new(),
    })
}

fn run_invariant(p: &Params, seed: u64) -> Result<Outcome> {
    let alpha = p.num("girsanov.alpha");
    let sigma = Sigma::alpha(alpha)?;
    let range = p.num("girsanov.range");
    let edges = BinEdges::uniform_with_tails(-range, range, p.count("girsanov.bins"))?.with_atom(0.0, 1e-12)?;
    let n_bins = edges.n_bins();
    let run = |sticky: StickyParam, stream: u64| -> Result<(MeanEstimate, Vec<f64>)> {
        let hs = ensemble(p.count("girsanov.paths"), RandomSource::new(seed, stream), |src| {
            invariant_histogram(
                sigma,
                sticky,
                p.num("girsanov.x0"),
                p.num("girsanov.burn_in"),
                p.num("girsanov.horizon"),
                p.num("girsanov.dt"),
                &edges,
                src,
            )
        })
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
        let atoms: Vec<f64> = hs.iter().map(|h| h.atom_mass).collect();
        let mut probs = vec![0.0; n_bins];
        for h in &hs {
            if let Some(hist) = &h.law.histogram {
                for (acc, q) in probs.iter_mut().zip(hist.probabilities()) {
                    *acc += q / hs.len() as f64;
                }
            }
        }
        Ok((MeanEstimate::from_samples(&atoms), probs))
    };
    let (absorbed, pa) = run(StickyParam::Absorbing, 0)?;
    let (free, pf) = run(StickyParam::Finite(0.0), 1)?;
    let diff = absorbed.mean - free.mean;
    let err = (absorbed.std_error.powi(2) + free.std_error.powi(2)).sqrt();
    let z = p.num("girsanov.z_crit");
    let mut hist = Series::new("histogram", &["bin_lo", "bin_hi", "absorbed", "no_delay"]);
    let e = edges.edges();
    for i in 0..n_bins {
        hist.push(vec![cell(e[i]), cell(e[i + 1]), cell(pa[i]), cell(pf[i])]);
    }
    let param = format!(
        "x0={},burn_in={},horizon={}",
        p.num("girsanov.x0"),
        p.num("girsanov.burn_in"),
        p.num("girsanov.horizon")
    );
    Ok(Outcome {
        results: json!({
            "summaries": [
                summary(alpha, &param, "atom_mass_absorbed", absorbed.mean, Some(absorbed.std_error)),
                summary(alpha, &param, "atom_mass_no_delay", free.mean, Some(free.std_error)),
                summary(alpha, &param, "atom_mass_difference", diff, Some(err)),
            ],
            "n_paths": absorbed.n,
        }),
        assertions: vec![Assertion::new("atom mass difference / combined error", diff / err, Relation::Greater, z)],
        series: vec![hist],
        blobs: Vec::new(),
    })
}
