//! Galerkin Navier-Stokes: martingale functional and energy balance.

use anyhow::Result;
use mlab_core::nse::{full_trace, write_snapshot, CutoffSpec, GalerkinParams, NseSystem, SpectralField};
use mlab_core::pathcore::{ensemble, martingale_increment_test, MeanEstimate};
use mlab_core::RandomSource;
use serde_json::json;

use super::{pairs_within, Experiment};
use crate::params::{Kind, Param, Params};
use crate::report::{cell, num, Assertion, Outcome, Relation, Series};

pub(super) const N: Param = Param::opt("nse.n", Kind::CountIn(1, 8), "2", "Galerkin cutoff |k|_inf <= N");
pub(super) const NU: Param = Param::opt("nse.nu", Kind::Positive, "1", "viscosity");
pub(super) const ALPHA0: Param = Param::opt("nse.alpha0", Kind::Positive, "0.5", "noise regularity, > 1/6");
pub(super) const CUTOFF: Param = Param::opt("nse.cutoff", Kind::Positive, "50", "cut-off radius R");

/// Test direction: fixed real coordinates of the lattice.
const DIRECTION: [(usize, f64); 3] = [(0, 0.8), (5, 0.6), (13, -0.3)];

pub const MARTINGALE: Experiment = Experiment {
    name: "nse-martingale",
    description: "Martingale functional M^phi and the energy balance of the cut-off Galerkin system",
    params: &[
        N,
        NU,
        ALPHA0,
        CUTOFF,
        Param::opt("nse.dt", Kind::Positive, "1e-3", "time step"),
        Param::opt("nse.horizon", Kind::Positive, "0.5", "final time"),
        Param::opt("nse.paths", Kind::Count, "2000", "number of paths"),
        Param::opt("nse.init_scale", Kind::NonNegative, "0.5", "initial field amplitude c/|k|^2"),
        Param::opt("nse.pairs", Kind::Pairs, "0:0.25,0.25:0.5,0.1:0.4", "(s, t) pairs"),
        Param::opt("nse.z_crit", Kind::Positive, "3", "largest admissible |z|"),
        Param::opt("nse.qv_tolerance", Kind::Positive, "0.05", "largest |QV ratio - 1|"),
    ],
    check: check_martingale,
    run: run_martingale,
};

pub(super) fn check_system(p: &Params, dt: f64, horizon: f64) -> std::result::Result<(), (&'static str, String)> {
    if p.num("nse.alpha0") <= 1.0 / 6.0 {
        return Err(("nse.alpha0", "must exceed 1/6".into()));
    }
    GalerkinParams::new(p.num("nse.nu"), p.count("nse.n"), dt, horizon).map_err(|e| ("nse.dt", e.to_string()))?;
    Ok(())
}

fn check_martingale(p: &Params) -> std::result::Result<(), (&'static str, String)> {
    check_system(p, p.num("nse.dt"), p.num("nse.horizon"))?;
    pairs_within(p, "nse.pairs", "nse.horizon")
}

pub(super) fn system(p: &Params) -> Result<NseSystem> {
    Ok(NseSystem::new(
        p.count("nse.n"),
        p.num("nse.nu"),
        p.num("nse.alpha0"),
        Some(CutoffSpec::new(p.num("nse.cutoff"))?),
    )?)
}

fn run_martingale(p: &Params, seed: u64) -> Result<Outcome> {
    let sys = system(p)?;
    let lat = sys.lattice.clone();
    let g = GalerkinParams::new(sys.nu, p.count("nse.n"), p.num("nse.dt"), p.num("nse.horizon"))?.grid()?;
    let scale = p.num("nse.init_scale");
    let u0 = SpectralField::random(&lat, |k2| scale / k2, &mut RandomSource::new(seed, 0).rng());
    let mut dir = vec![0.0; lat.real_dim()];
    for (i, v) in DIRECTION {
        dir[i] = v;
    }
    let phi = SpectralField::from_real_coords(&lat, &dir)?;
    let trunc = sys.noise.truncated_trace();
    let full = full_trace(sys.alpha0)?;
    let runs = ensemble(p.count("nse.paths"), RandomSource::new(seed, 1), |src| {
        let path = sys.simulate(&u0, &g, src)?;
        let m = sys.martingale_m(&path, &g, &phi)?.values().to_vec();
        let e = sys.energy_process(&path, &g, 1, trunc)?.values().to_vec();
        let f = sys.energy_process(&path, &g, 1, full)?.values().to_vec();
        let proj: Vec<f64> = path.iter().map(|u| u.inner(&phi)).collect();
        let last = path.last().cloned().unwrap_or_else(|| u0.clone());
        Ok::<_, mlab_core::Error>((m, e, f, proj, last))
    })
    .into_iter()
    .collect::<std::result::Result<Vec<_>, _>>()?;

    let idx: Vec<(usize, usize)> = p.pairs("nse.pairs").iter().map(|&(s, t)| (g.index_of(s), g.index_of(t))).collect();
    let m: Vec<Vec<f64>> = runs.iter().map(|r| r.0.clone()).collect();
    let qphi = sys.noise.quadratic_form(&phi);
    let dt = g.dt();
    let report = martingale_increment_test(
        &m,
        |i, s| if s == 0 { vec![1.0] } else { vec![1.0, runs[i].3[s]] },
        &idx,
        Some(|s: usize, t: usize| (t - s) as f64 * dt * qphi),
    )?;
    let increment = |full: bool, s: usize, t: usize| {
        let v: Vec<f64> = runs
            .iter()
            .map(|r| if full { r.2[t] - r.2[s] } else { r.1[t] - r.1[s] })
            .collect();
        MeanEstimate::from_samples(&v)
    };
    let mut energy = Vec::new();
    let (mut trunc_worst, mut full_worst) = (0.0f64, f64::NEG_INFINITY);
    for &(s, t) in &idx {
        let a = increment(false, s, t);
        let b = increment(true, s, t);
        trunc_worst = trunc_worst.max(a.z(0.0).abs());
        full_worst = full_worst.max(b.z(0.0));
        energy.push(json!({
            "s": g.time(s),
            "t": g.time(t),
            "truncated_mean": num(a.mean),
            "truncated_std_error": num(a.std_error),
            "truncated_z": num(a.z(0.0)),
            "full_mean": num(b.mean),
            "full_std_error": num(b.std_error),
            "full_z": num(b.z(0.0)),
        }));
    }
    let pairs: Vec<_> = report
        .pairs
        .iter()
        .map(|q| {
            json!({
                "s": g.time(q.s),
                "t": g.time(q.t),
                "coefficients": q.coefficients.iter().map(|v| num(*v)).collect::<Vec<_>>(),
                "std_errors": q.std_errors.iter().map(|v| num(*v)).collect::<Vec<_>>(),
                "z_scores": q.z_scores.iter().map(|v| num(*v)).collect::<Vec<_>>(),
                "qv_ratio": q.qv_ratio.map(num),
                "qv_ratio_se": q.qv_ratio_se.map(num),
            })
        })
        .collect();
    let qv = report.qv_ratios();
    let qv_dev = qv.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);

    let mut curve = Series::new("martingale", &["t", "mean_m", "std_error_m", "mean_energy_truncated", "mean_energy_full"]);
    for k in 0..g.n_nodes() {
        let col = |j: usize| -> Vec<f64> {
            runs.iter()
                .map(|r| match j {
                    0 => r.0[k],
                    1 => r.1[k],
                    _ => r.2[k],
                })
                .collect()
        };
        let mk = MeanEstimate::from_samples(&col(0));
        curve.push(vec![
            cell(g.time(k)),
            cell(mk.mean),
            cell(mk.std_error),
            cell(MeanEstimate::from_samples(&col(1)).mean),
            cell(MeanEstimate::from_samples(&col(2)).mean),
        ]);
    }
    let mut initial = Vec::new();
    write_snapshot(&mut initial, &u0)?;
    let mut last = Vec::new();
    write_snapshot(&mut last, &runs[0].4)?;
    let z_crit = p.num("nse.z_crit");
    Ok(Outcome {
        results: json!({
            "n_paths": report.n_paths,
            "max_abs_z": num(report.max_abs_z()),
            "qv_ratios": qv.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "phi_quadratic_form": num(qphi),
            "truncated_trace": num(trunc),
            "full_trace": num(full),
            "pairs": pairs,
            "energy": energy,
        }),
        assertions: vec![
            Assertion::new("max |z| of M^phi increments", report.max_abs_z(), Relation::AtMost, z_crit),
            Assertion::new("max |QV ratio - 1|", qv_dev, Relation::AtMost, p.num("nse.qv_tolerance")),
            Assertion::new("max |z| energy increment (truncated trace)", trunc_worst, Relation::AtMost, z_crit),
            Assertion::new("max z energy increment (full trace)", full_worst, Relation::AtMost, z_crit),
        ],
        series: vec![curve],
        blobs: vec![("initial_state.nse".into(), initial), ("final_state_path0.nse".into(), last)],
    })
}
