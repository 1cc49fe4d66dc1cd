use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use perlat::curve::{CurveKind, SummaryCurve};
use perlat::envelope::{count_histogram, global_envelope_test, NullModel};
use perlat::estimators::{
    default_bandwidth, exponent_fit, g_nearest_neighbor, k_empirical, l_centered_empirical, nn_angle_histogram,
    pcf_empirical, rescale_to_unit_intensity, scattering_intensity_with, BoxDesign,
};
use perlat::field::CovarianceKind;
use perlat::fit::{fit_min_contrast, fit_two_stage, Bounds, ContrastSpec, StageTwo};
use perlat::ktheory::{
    hyperuniformity_condition_report, k_theoretical, l_centered_from_k, spectral_variance_iid,
};
use perlat::sim::{LatticeSimulator, PerturbedLatticeSpec};
use perlat::{PointPattern, SeedSpec};
use serde_json::{json, Value};

use crate::config::{Command, NullKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io;

/// Files written by a command plus values echoed in the manifest.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
    /// Curve files for the optional gnuplot script.
    pub plots: Vec<(PathBuf, String)>,
    pub extra: BTreeMap<String, Value>,
}

impl Artifacts {
    fn file(&mut self, path: PathBuf) -> PathBuf {
        self.files.push(path.clone());
        path
    }

    fn curve(&mut self, dir: &Path, name: &str, c: &SummaryCurve) -> CliResult<()> {
        let path = self.file(dir.join(format!("{name}.csv")));
        io::write_curve(&path, c)?;
        self.plots.push((path, name.to_string()));
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, dir: &Path, name: &str, v: &T) -> CliResult<()> {
        let path = self.file(dir.join(format!("{name}.json")));
        io::write_json(&path, v)
    }
}

fn load_input(cfg: &RunConfig) -> CliResult<PointPattern> {
    let path = cfg.input.as_ref().ok_or_else(|| CliError::config("missing input CSV"))?;
    let p = io::ingest_csv(path, cfg.dim, cfg.window.clone())?;
    if cfg.rescale {
        Ok(rescale_to_unit_intensity(&p)?)
    } else {
        Ok(p)
    }
}

fn seed_of(cfg: &RunConfig) -> CliResult<SeedSpec> {
    cfg.seed
        .ok_or_else(|| CliError::config(format!("command {:?} needs a seed", cfg.command)))
}

pub fn execute(cfg: &RunConfig) -> CliResult<Artifacts> {
    io::create_dir(&cfg.out)?;
    let mut art = Artifacts::default();
    match cfg.command {
        Command::Simulate => simulate(cfg, &mut art)?,
        Command::Ktheory => ktheory(cfg, &mut art)?,
        Command::Summarize => summarize(cfg, &mut art)?,
        Command::Diagnose => diagnose(cfg, &mut art)?,
        Command::Fit => fit(cfg, &mut art)?,
        Command::Envelope => envelope(cfg, &mut art)?,
    }
    if cfg.gnuplot && !art.plots.is_empty() {
        let path = art.file(cfg.out.join("plot.gp"));
        io::write_text(&path, &gnuplot_script(&art.plots))?;
    }
    Ok(art)
}

fn gnuplot_script(plots: &[(PathBuf, String)]) -> String {
    let mut s = String::from("set datafile separator ','\nset key autotitle columnhead\nset xlabel 'r'\n");
    for (path, name) in plots {
        let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        s.push_str(&format!(
            "set title '{name}'\nplot '{file}' using 1:2 with lines title '{name}'\npause -1\n"
        ));
    }
    s
}

fn simulate(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let model = cfg.require_model()?;
    let window = cfg.require_window()?;
    let mut spec = PerturbedLatticeSpec::new(model, window, seed_of(cfg)?);
    if let Some(b) = cfg.buffer {
        spec = spec.with_buffer(b);
    }
    let sim = LatticeSimulator::new(&spec)?;
    let mut counts = Vec::new();
    for j in 0..cfg.replicates {
        let run = sim.run(spec.seed.offset(j as u64));
        let name = if cfg.replicates == 1 {
            "points.csv".to_string()
        } else {
            format!("points_{j:04}.csv")
        };
        let path = art.file(cfg.out.join(&name));
        io::write_points(&path, &run.pattern)?;
        art.files.push(io::window_sidecar(&path));
        counts.push(run.pattern.len());
        if j == 0 {
            art.extra.insert("method".into(), json!(run.method));
            art.extra.insert("recommended_buffer".into(), json!(run.recommended_buffer));
            art.extra.insert("buffer".into(), json!(spec.buffer));
        }
    }
    art.extra.insert("counts".into(), json!(counts));
    Ok(())
}

fn ktheory(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let model = cfg.require_model()?;
    let grid = cfg.r_grid_values()?;
    let k = k_theoretical(&model, &grid, cfg.q_value())?;
    art.curve(&cfg.out, "k_theory", &k)?;
    art.curve(&cfg.out, "l_theory", &l_centered_from_k(&k, cfg.dim)?)?;
    if model.kind != CovarianceKind::Stationarized {
        art.json(&cfg.out, "hyperuniformity", &hyperuniformity_condition_report(&model)?)?;
    }
    if model.kind != CovarianceKind::Powexp && !cfg.variance_radii.is_empty() {
        let values = cfg
            .variance_radii
            .iter()
            .map(|&r| spectral_variance_iid(&model, r))
            .collect::<perlat::Result<Vec<f64>>>()?;
        let c = SummaryCurve::new(cfg.variance_radii.clone(), values, CurveKind::Numvar)?;
        art.curve(&cfg.out, "numvar_theory", &c)?;
    }
    Ok(())
}

fn pattern_summary(p: &PointPattern) -> Value {
    json!({
        "count": p.len(),
        "intensity": p.intensity(),
        "window": p.window(),
    })
}

fn summarize(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let p = load_input(cfg)?;
    let grid = cfg.r_grid_values()?;
    let k = k_empirical(&p, &grid)?;
    art.curve(&cfg.out, "k", &k)?;
    art.curve(&cfg.out, "l", &l_centered_from_k(&k, cfg.dim)?)?;
    let bw = cfg.bandwidth.unwrap_or_else(|| default_bandwidth(&p));
    art.curve(&cfg.out, "pcf", &pcf_empirical(&p, &cfg.pcf_grid_values()?, bw)?)?;
    art.curve(&cfg.out, "g", &g_nearest_neighbor(&p, &grid)?)?;
    let spectrum = scattering_intensity_with(&p, cfg.k_cutoff, cfg.taper)?;
    let path = art.file(cfg.out.join("spectrum.csv"));
    io::write_spectrum(&path, &spectrum)?;
    let mut summary = pattern_summary(&p);
    summary["bandwidth"] = json!(bw);
    art.json(&cfg.out, "summary", &summary)?;
    Ok(())
}

fn diagnose(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let path = cfg.input.as_ref().ok_or_else(|| CliError::config("missing input CSV"))?;
    let raw = io::ingest_csv(path, cfg.dim, cfg.window.clone())?;
    let p = rescale_to_unit_intensity(&raw)?;
    let mut report = pattern_summary(&p);
    report["input_window"] = json!(raw.window());
    art.extra.insert("rescaled_window".into(), json!(p.window()));
    art.extra.insert("count".into(), json!(p.len()));

    let design = BoxDesign {
        side: cfg.box_side,
        gap: cfg.box_gap,
    };
    match count_histogram(&p, design.side, design.gap) {
        Ok(h) => {
            let lo: Vec<f64> = h.values.iter().map(|&v| v as f64 - 0.5).collect();
            let hi: Vec<f64> = h.values.iter().map(|&v| v as f64 + 0.5).collect();
            let path = art.file(cfg.out.join("count_histogram.csv"));
            io::write_table(&path, &["bin_lo", "bin_hi", "count"], &[&lo, &hi, &h.observed])?;
            let path = art.file(cfg.out.join("count_poisson.csv"));
            io::write_table(&path, &["bin_lo", "bin_hi", "count"], &[&lo, &hi, &h.poisson])?;
            let vol = design.side.powi(cfg.dim as i32);
            report["boxes"] = json!({
                "side": design.side,
                "gap": design.gap,
                "count": h.counts.len(),
                "mean": h.mean,
                "variance": h.variance,
                "number_variance": h.variance / vol,
                "variance_to_mean": if h.mean > 0.0 { h.variance / h.mean } else { f64::NAN },
            });
        }
        Err(e) => report["boxes"] = json!({ "error": e.to_string() }),
    }

    let spectrum = scattering_intensity_with(&p, cfg.k_cutoff, cfg.taper)?;
    let radial = spectrum.radial();
    let path = art.file(cfg.out.join("spectrum_radial.csv"));
    io::write_table(
        &path,
        &["bin_lo", "bin_hi", "k", "S", "modes"],
        &[
            &radial.bin_lo,
            &radial.bin_hi,
            &radial.mean_k,
            &radial.mean_s,
            &radial.modes.iter().map(|&m| m as f64).collect::<Vec<_>>(),
        ],
    )?;
    report["exponent"] = match exponent_fit(&spectrum, cfg.k_max) {
        Ok(f) => json!({ "fit": f, "taper": cfg.taper }),
        Err(e) => json!({ "error": e.to_string() }),
    };

    if cfg.dim >= 2 {
        let pairs: Vec<(usize, usize)> = if cfg.dim == 3 { vec![(0, 1), (0, 2), (1, 2)] } else { vec![(0, 1)] };
        for (a, b) in pairs {
            let h = nn_angle_histogram(&p, (a, b), cfg.angle_bins)?;
            let name = format!("nn_angles_{}{}.csv", ["x", "y", "z"][a], ["x", "y", "z"][b]);
            let path = art.file(cfg.out.join(name));
            io::write_histogram(&path, &h)?;
        }
    }
    let grid = cfg.r_grid_values()?;
    art.curve(&cfg.out, "l", &l_centered_empirical(&p, &grid)?)?;
    let bw = cfg.bandwidth.unwrap_or_else(|| default_bandwidth(&p));
    art.curve(&cfg.out, "pcf", &pcf_empirical(&p, &cfg.pcf_grid_values()?, bw)?)?;
    if let Some(m) = &cfg.model {
        report["hyperuniformity"] = json!(hyperuniformity_condition_report(m)?);
    }
    art.json(&cfg.out, "diagnose", &report)?;
    Ok(())
}

fn fit(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let p = load_input(cfg)?;
    let init = cfg.require_model()?;
    let grid = cfg.r_grid_values()?;
    let k_hat = k_empirical(&p, &grid)?;
    let mut spec = ContrastSpec::new(cfg.r1, cfg.r2);
    spec.q = cfg.q_value();
    let bounds = Bounds::default();
    let result = if cfg.two_stage {
        let mut stage2 = StageTwo::new(p.window().clone(), seed_of(cfg)?);
        stage2.r1 = cfg.stage2_r1;
        stage2.r2 = cfg.stage2_r2;
        stage2.n_sims = cfg.n_sims.unwrap_or(100);
        fit_two_stage(&k_hat, &init, &spec, &stage2, &bounds)?
    } else {
        fit_min_contrast(&k_hat, &init, &spec, &bounds)?
    };
    let k_fit = k_theoretical(&result.model, &grid, spec.q)?;
    let path = art.file(cfg.out.join("fitted_k.csv"));
    io::write_table(&path, &["r", "k_hat", "k_fit"], &[&grid, &k_hat.values, &k_fit.values])?;
    art.plots.push((path, "fitted_k".into()));
    let stage = |f: &perlat::fit::FitResult| {
        json!({
            "model": f.model,
            "theta_hat": f.theta_hat,
            "contrast_value": f.contrast_value,
            "n_evals": f.n_evals,
            "converged": f.converged,
            "trace_length": f.trace.len(),
        })
    };
    let mut out = stage(&result);
    if let Some(s1) = &result.stage1 {
        out["stage1"] = stage(s1);
    }
    art.extra.insert("theta_hat".into(), json!(result.theta_hat));
    art.json(&cfg.out, "fit", &out)?;
    Ok(())
}

fn envelope(cfg: &RunConfig, art: &mut Artifacts) -> CliResult<()> {
    let p = load_input(cfg)?;
    let null = match cfg.null {
        NullKind::Model => NullModel::Lattice(cfg.require_model()?),
        NullKind::Poisson => NullModel::Poisson { intensity: None },
    };
    let grid = cfg.r_grid_values()?;
    let n_sims = cfg.n_sims.unwrap_or(999);
    let res = global_envelope_test(&p, &null, &grid, n_sims, seed_of(cfg)?, cfg.measure, cfg.alpha)?;
    let path = art.file(cfg.out.join("envelope.csv"));
    io::write_table(
        &path,
        &["r", "data", "lower", "upper"],
        &[&res.r_grid, &res.data_curve, &res.lower, &res.upper],
    )?;
    art.plots.push((path, "envelope".into()));
    art.json(
        &cfg.out,
        "envelope",
        &json!({
            "p_interval": [res.p_interval.0, res.p_interval.1],
            "p_value": res.p_interval.1,
            "rejected": res.rejected,
            "alpha": res.alpha,
            "measure": res.measure,
            "n_sims": res.n_sims,
            "null": null,
        }),
    )?;
    art.extra.insert("p_interval".into(), json!([res.p_interval.0, res.p_interval.1]));
    Ok(())
}
