//! Subcommand pipelines. Each one reads its inputs, writes its outputs into
//! the run directory and returns nothing else.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qrouter_core::calibration::{calibrate_responses, circle_fit, loss_budget, CircleFitResult, LossBudget};
use qrouter_core::estimation::{
    efficiency_trace, fit_flux_noise, fit_four_channel, fit_saturation, fit_thermal, gamma_phi_from_e, initial_guess,
    resonant_efficiency, FitReport,
};
use qrouter_core::io::{ingest_spectrum, write_csv, write_touchstone, SpectrumFormat, TouchstoneFormat};
use qrouter_core::model::{
    coefficients, dressed_lines, efficiency_thermal, n_thermal, omega_ge_of_bias, saturation_curve, CellParams,
};
use qrouter_core::synth::{gen_bias_sweep, gen_power_sweep, gen_spectrum, gen_temperature_sweep};
use qrouter_core::units::{amplitude_db, angular_to_hz, hz_to_angular};
use qrouter_core::{Channel, ChannelSpectrum};
use serde::{Deserialize, Serialize};

use crate::config::{CellSection, Config};
use crate::run::{read_record, Run};
use crate::CliError;

/// Writes `spectra` as `<stem>.csv`, or as one touchstone file per spectrum.
fn write_spectra(run: &mut Run, stem: &str, spectra: &[ChannelSpectrum], fmt: SpectrumFormat) -> Result<(), CliError> {
    let comments = [format!("run {}", run.id)];
    match fmt {
        SpectrumFormat::Csv => {
            run.write(&format!("{stem}.csv"), &write_csv(spectra, &comments))?;
        }
        SpectrumFormat::S4p if spectra.len() == 1 => {
            run.write(
                &format!("{stem}.s4p"),
                &write_touchstone(&spectra[0], TouchstoneFormat::Ri, &comments),
            )?;
        }
        SpectrumFormat::S4p => {
            for (k, s) in spectra.iter().enumerate() {
                run.write(
                    &format!("{stem}_{k:03}.s4p"),
                    &write_touchstone(s, TouchstoneFormat::Ri, &comments),
                )?;
            }
        }
    }
    Ok(())
}

/// Plain CSV table with a run-id comment line.
fn table(run: &Run, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = format!("# run {}\n{header}\n", run.id);
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

fn read_single(path: &Path) -> Result<ChannelSpectrum, CliError> {
    Ok(ingest_spectrum(path, None)?.into_single()?)
}

pub fn simulate(cfg: &Config, out: &Path) -> Result<Run, CliError> {
    let mut run = Run::create(out, "simulate", cfg, &[])?;
    let p = cfg.cell();
    let s = ChannelSpectrum::from_fn(cfg.freqs_hz()?, |w| coefficients(w, &p).map(|c| c.to_array()))?;
    write_spectra(&mut run, "cell", std::slice::from_ref(&s), cfg.run.format)?;
    let mut text = format!("# run {}\nfreq_hz,channel,magnitude,magnitude_db,phase_rad\n", run.id);
    for (i, f) in s.freqs_hz().iter().enumerate() {
        for (ch, z) in Channel::ALL.iter().zip(s.at(i)) {
            let _ = writeln!(text, "{f},{ch},{},{},{}", z.norm(), amplitude_db(z.norm()), z.arg());
        }
    }
    run.write("table.csv", &text)?;
    Ok(run)
}

#[derive(Serialize)]
struct Truth<'a> {
    seed: u64,
    cell: CellSection,
    lines: &'a qrouter_core::synth::LineSpec,
    noise_sigma: f64,
}

pub fn synth(cfg: &Config, out: &Path) -> Result<Run, CliError> {
    let mut run = Run::create(out, "synth", cfg, &[])?;
    let s = gen_spectrum(&cfg.campaign()?)?;
    write_spectra(&mut run, "meas", std::slice::from_ref(&s.meas), cfg.run.format)?;
    write_spectra(&mut run, "hd", std::slice::from_ref(&s.hd), cfg.run.format)?;
    run.write_json(
        "truth.json",
        &Truth {
            seed: s.seed,
            cell: CellSection::from_params(&s.truth),
            lines: &cfg.lines,
            noise_sigma: cfg.synth.noise_sigma,
        },
    )?;
    Ok(run)
}

/// Circle fit in Hz.
#[derive(Serialize)]
struct CircleSummary {
    f_res_hz: f64,
    kappa_loaded_hz: f64,
    diameter: f64,
    arc_coverage_rad: f64,
}

impl From<&CircleFitResult> for CircleSummary {
    fn from(c: &CircleFitResult) -> Self {
        Self {
            f_res_hz: angular_to_hz(c.omega_res),
            kappa_loaded_hz: angular_to_hz(c.kappa_loaded),
            diameter: c.diameter,
            arc_coverage_rad: c.arc_coverage,
        }
    }
}

#[derive(Serialize)]
struct BudgetSummary {
    kappa_l_mean_hz: f64,
    uncertainty_hz: f64,
    kappa_i_hz: f64,
    over_coupled: bool,
}

impl From<&LossBudget> for BudgetSummary {
    fn from(b: &LossBudget) -> Self {
        Self {
            kappa_l_mean_hz: angular_to_hz(b.kappa_l_mean),
            uncertainty_hz: angular_to_hz(b.uncertainty),
            kappa_i_hz: angular_to_hz(b.kappa_i),
            over_coupled: b.over_coupled,
        }
    }
}

#[derive(Serialize)]
struct CalibrationSummary {
    circle_aa: CircleSummary,
    circle_bb: CircleSummary,
    /// Against the configured couplings.
    loss_budget: BudgetSummary,
}

pub fn calibrate(cfg: &Config, out: &Path, meas: &Path, hd: &Path) -> Result<Run, CliError> {
    let mut run = Run::create(out, "calibrate", cfg, &[meas, hd])?;
    let cal = calibrate_responses(&read_single(meas)?, &read_single(hd)?)?;
    write_spectra(&mut run, "calibrated", std::slice::from_ref(&cal), cfg.run.format)?;
    let aa = circle_fit(cal.trace(Channel::AA), cal.freqs_hz())?;
    let bb = circle_fit(cal.trace(Channel::BB), cal.freqs_hz())?;
    let p = cfg.cell();
    let budget = loss_budget(&aa, &bb, p.gamma_a, p.gamma_b)?;
    run.write_json(
        "calibration.json",
        &CalibrationSummary {
            circle_aa: (&aa).into(),
            circle_bb: (&bb).into(),
            loss_budget: (&budget).into(),
        },
    )?;
    Ok(run)
}

/// Where `fit` takes its data from.
pub enum FitInput {
    Calibrated(PathBuf),
    Raw { meas: PathBuf, hd: PathBuf },
}

/// Fitted parameter in the units of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub params: Vec<ParamSummary>,
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub flags: Vec<String>,
    /// Raw report, angular units.
    pub report: FitReport,
}

fn summarize(report: FitReport) -> FitSummary {
    let params = report
        .params
        .iter()
        .map(|p| {
            let (k, unit) = if p.name.starts_with("phi") {
                (1.0 / PI, "pi")
            } else {
                (1.0 / (2.0 * PI), "Hz")
            };
            let name = match p.name.as_str() {
                "omega_ge" => "f_ge".to_string(),
                n => n.to_string(),
            };
            ParamSummary {
                name,
                value: p.value * k,
                sigma: p.sigma * k,
                unit: unit.to_string(),
            }
        })
        .collect();
    FitSummary {
        params,
        residual_norm: report.residual_norm,
        converged: report.converged,
        n_iter: report.n_iter,
        flags: report.flags.clone(),
        report,
    }
}

fn fit_calibrated(cal: &ChannelSpectrum, cfg: &Config) -> Result<(FitReport, CellParams), CliError> {
    let c = cfg.cell();
    let init = initial_guess(cal)?.with_dephasing(c.gamma_phi).with_bath(c.gamma_bath);
    let report = fit_four_channel(cal, &init)?.with_seed(cfg.run.seed);
    let p = report.cell_params(&init);
    Ok((report, p))
}

pub fn fit(cfg: &Config, out: &Path, input: &FitInput) -> Result<Run, CliError> {
    let (mut run, cal) = match input {
        FitInput::Calibrated(path) => (Run::create(out, "fit", cfg, &[path])?, read_single(path)?),
        FitInput::Raw { meas, hd } => (
            Run::create(out, "fit", cfg, &[meas, hd])?,
            calibrate_responses(&read_single(meas)?, &read_single(hd)?)?,
        ),
    };
    let (report, p) = fit_calibrated(&cal, cfg)?;
    let model = ChannelSpectrum::from_fn(cal.freqs_hz().to_vec(), |w| coefficients(w, &p).map(|c| c.to_array()))?;
    write_spectra(&mut run, "model", std::slice::from_ref(&model), cfg.run.format)?;
    run.write_json("fit.json", &summarize(report))?;
    Ok(run)
}

#[derive(Serialize)]
struct FluxSummary {
    s_i: f64,
    gamma_phi0_hz: f64,
    truth_s_i: f64,
    truth_gamma_phi0_hz: f64,
    report: FitReport,
}

pub fn sweep_bias(cfg: &Config, out: &Path) -> Result<Run, CliError> {
    let mut run = Run::create(out, "sweep-bias", cfg, &[])?;
    let mut campaign = cfg.campaign()?;
    campaign.bias_ma = cfg.bias_ma()?;
    let b = &cfg.bias_sweep;
    let sweep = gen_bias_sweep(&campaign, b.s_i, hz_to_angular(b.gamma_phi0_hz))?;
    let (ga, gb) = (campaign.cell.gamma_a, campaign.cell.gamma_b);

    let mut grid = Vec::new();
    let mut ridge = Vec::new();
    let mut gammas = Vec::new();
    for s in &sweep {
        let ib = s.meas.meta.bias_ma.unwrap_or_default();
        let cal = calibrate_responses(&s.meas, &s.hd)?;
        let (_, p) = fit_calibrated(&cal, cfg)?;
        let e = efficiency_trace(&cal)?;
        let f = cal.freqs_hz();
        for (fi, z) in f.iter().zip(&e) {
            grid.push(vec![ib, *fi, z.re, z.im, z.norm()]);
        }
        let r = resonant_efficiency(&e, f, p.omega_ge)?;
        let g = gamma_phi_from_e(r.value, ga, gb)?;
        gammas.push(g);
        let model = angular_to_hz(omega_ge_of_bias(ib, &campaign.flux));
        ridge.push(vec![
            ib,
            ridge_hz(f, &e),
            model,
            angular_to_hz(p.omega_ge),
            r.value,
            angular_to_hz(g),
        ]);
    }
    let fit = fit_flux_noise(&campaign.bias_ma, &gammas, &campaign.flux)?;

    let meas: Vec<ChannelSpectrum> = sweep.iter().map(|s| s.meas.clone()).collect();
    let hd: Vec<ChannelSpectrum> = sweep.iter().map(|s| s.hd.clone()).collect();
    write_spectra(&mut run, "meas", &meas, cfg.run.format)?;
    write_spectra(&mut run, "hd", &hd, cfg.run.format)?;
    let text = table(&run, "bias_ma,freq_hz,e_re,e_im,e_abs", grid);
    run.write("efficiency_grid.csv", &text)?;
    let text = table(
        &run,
        "bias_ma,ridge_hz,f_ge_model_hz,f_ge_fit_hz,e_resonant,gamma_phi_hz",
        ridge,
    );
    run.write("ridge.csv", &text)?;
    run.write_json(
        "flux_fit.json",
        &FluxSummary {
            s_i: fit.s_i,
            gamma_phi0_hz: angular_to_hz(fit.gamma_phi_0),
            truth_s_i: b.s_i,
            truth_gamma_phi0_hz: b.gamma_phi0_hz,
            report: fit.report,
        },
    )?;
    Ok(run)
}

/// Peak of |E| over the grid, refined by a parabola through the three
/// samples around the maximum.
fn ridge_hz(f: &[f64], e: &[qrouter_core::C64]) -> f64 {
    let k = (0..e.len())
        .max_by(|&a, &b| e[a].norm().total_cmp(&e[b].norm()))
        .unwrap_or(0);
    if k == 0 || k + 1 >= e.len() {
        return f[k];
    }
    let (y0, y1, y2) = (e[k - 1].norm(), e[k].norm(), e[k + 1].norm());
    let den = y0 - 2.0 * y1 + y2;
    if den == 0.0 {
        return f[k];
    }
    let x = 0.5 * (y0 - y2) / den;
    f[k] + x * 0.5 * (f[k + 1] - f[k - 1])
}

#[derive(Serialize)]
struct ThermalSummary {
    gamma1_zero_hz: f64,
    gamma_phi_zero_hz: f64,
    truth_gamma1_zero_hz: f64,
    truth_gamma_phi_zero_hz: f64,
    report: FitReport,
}

pub fn sweep_temp(cfg: &Config, out: &Path) -> Result<Run, CliError> {
    let mut run = Run::create(out, "sweep-temp", cfg, &[])?;
    let mut campaign = cfg.campaign()?;
    campaign.temps_k = cfg.temps_k()?;
    let sw = gen_temperature_sweep(&campaign, cfg.thermal(), cfg.temp_sweep.sigma)?;
    let c = &campaign.cell;
    let fit = fit_thermal(&sw.temps_k, &sw.e, c.gamma_a, c.gamma_b, c.omega_ge)?;
    let mut rows = Vec::new();
    for (&t, &e) in sw.temps_k.iter().zip(&sw.e) {
        let n = n_thermal(t, c.omega_ge)?;
        rows.push(vec![
            t,
            n,
            e,
            efficiency_thermal(n, c.gamma_a, c.gamma_b, &fit.coefficients)?,
        ]);
    }
    let text = table(&run, "temp_k,n_th,e,e_fit", rows);
    run.write("thermal.csv", &text)?;
    run.write_json(
        "thermal_fit.json",
        &ThermalSummary {
            gamma1_zero_hz: angular_to_hz(fit.coefficients.gamma1_zero),
            gamma_phi_zero_hz: angular_to_hz(fit.coefficients.gamma_phi_zero_per_photon),
            truth_gamma1_zero_hz: cfg.temp_sweep.gamma1_zero_hz,
            truth_gamma_phi_zero_hz: cfg.temp_sweep.gamma_phi_zero_hz,
            report: fit.report,
        },
    )?;
    Ok(run)
}

#[derive(Serialize)]
struct SaturationSummary {
    through: qrouter_core::estimation::SaturationFit,
    cross: qrouter_core::estimation::SaturationFit,
}

pub fn sweep_power(cfg: &Config, out: &Path) -> Result<Run, CliError> {
    let mut run = Run::create(out, "sweep-power", cfg, &[])?;
    let mut campaign = cfg.campaign()?;
    campaign.power_n = cfg.power_n()?;
    let ps = &cfg.power_sweep;
    let sw = gen_power_sweep(&campaign, ps.c, ps.d, ps.sigma)?;
    let through = fit_saturation(&sw.n_avg, &sw.through)?;
    let cross = fit_saturation(&sw.n_avg, &sw.cross)?;
    let rows = (0..sw.n_avg.len()).map(|i| {
        let n = sw.n_avg[i];
        vec![
            n,
            sw.through[i],
            sw.cross[i],
            saturation_curve(n, &through.params),
            saturation_curve(n, &cross.params),
        ]
    });
    let text = table(&run, "n_avg,through,cross,through_fit,cross_fit", rows);
    run.write("power.csv", &text)?;
    run.write_json("saturation_fit.json", &SaturationSummary { through, cross })?;
    Ok(run)
}

pub fn dressed(cfg: &Config, out: &Path) -> Result<Run, CliError> {
    let mut run = Run::create(out, "dressed", cfg, &[])?;
    let m = cfg.dressed()?;
    let d = &cfg.dressed;
    let drive = m.omega_ge + hz_to_angular(d.detuning_hz);
    let n = d.points.max(2);
    let mut rows = Vec::new();
    for k in 0..n {
        let photons = d.n_max * k as f64 / (n - 1) as f64;
        let l = dressed_lines(drive, photons, &m)?;
        rows.push(vec![
            photons,
            angular_to_hz(l.ge.red),
            angular_to_hz(l.ge.blue),
            angular_to_hz(l.ef.red),
            angular_to_hz(l.ef.blue),
            angular_to_hz(l.ge.red - m.omega_ge),
            angular_to_hz(l.ge.blue - m.omega_ge),
        ]);
    }
    let header = "photons,ge_red_hz,ge_blue_hz,ef_red_hz,ef_blue_hz,ge_red_shift_hz,ge_blue_shift_hz";
    let text = table(&run, header, rows);
    run.write("dressed.csv", &text)?;
    Ok(run)
}

/// Human-readable summary of a finished run. Returns the run and the text.
pub fn report(cfg: &Config, out: &Path, target: &Path) -> Result<(Run, String), CliError> {
    let record = read_record(target)?;
    // run.json carries a timestamp; the config snapshot identifies the run.
    let mut inputs = vec![target.join("config.toml")];
    let fit_path = target.join("fit.json");
    let has_fit = fit_path.exists();
    if has_fit {
        inputs.push(fit_path.clone());
    }
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let mut run = Run::create(out, "report", cfg, &refs)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "run {} ({}, qrouter {})",
        record.run_id, record.subcommand, record.tool_version
    );
    let _ = writeln!(text, "seed {}", record.config.run.seed);
    if has_fit {
        let raw = std::fs::read_to_string(&fit_path).map_err(|e| CliError::io(&fit_path, e))?;
        let fit: FitSummary =
            serde_json::from_str(&raw).map_err(|e| CliError::new("parse", format!("{}: {e}", fit_path.display())))?;
        let _ = writeln!(
            text,
            "four-channel fit: {} after {} iterations, residual norm {:.3e}",
            if fit.converged { "converged" } else { "NOT converged" },
            fit.n_iter,
            fit.residual_norm
        );
        for p in &fit.params {
            let _ = match p.unit.as_str() {
                "Hz" if p.name == "f_ge" => writeln!(
                    text,
                    "  {:<8} = {:.6} GHz ± {:.3} kHz",
                    p.name,
                    p.value / 1e9,
                    p.sigma / 1e3
                ),
                "Hz" => writeln!(
                    text,
                    "  {:<8} = {:.5} MHz ± {:.5} MHz (/2π)",
                    p.name,
                    p.value / 1e6,
                    p.sigma / 1e6
                ),
                _ => writeln!(text, "  {:<8} = {:.5} π ± {:.5} π", p.name, p.value, p.sigma),
            };
        }
        for f in &fit.flags {
            let _ = writeln!(text, "  flag: {f}");
        }
    } else {
        let _ = writeln!(text, "outputs:");
        for o in &record.outputs {
            let _ = writeln!(text, "  {} {}", &o.sha256[..12], o.path);
        }
    }
    run.write("report.txt", &text)?;
    Ok((run, text))
}
