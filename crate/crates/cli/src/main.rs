use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lightsync::atomic::ClockState;
use lightsync::array::{array_shift_map, fit_misalignment, optimize_compensation_power, spread_metric, ShiftMap};
use lightsync::config::{load_run, CompensationMode, LoadedRun};
use lightsync::constants::{rad_to_hz, wavelength_to_omega, BOLTZMANN};
use lightsync::fit::FitReport;
use lightsync::io::{parse_shift_map_csv, shift_map_csv, to_json, trace_csv, write_all, Provenance};
use lightsync::pipeline::{
    calibrate_heating, calibrate_temperature, resolve_compensation, Experiment, TemperatureCalibration, Window,
};
use lightsync::spectroscopy::HeatingModel;
use lightsync::stark::{required_intensity_ratio, scattering_rate, scattering_ratio};
use lightsync::trap::trap_site;
use lightsync::{Error, Result};

const CONFIG_DIR_ENV: &str = "LIGHTSYNC_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "lightsync", version, about = "Light-shift maps, compensation and Ramsey/echo simulation for trap arrays")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file [default: $LIGHTSYNC_CONFIG_DIR/run.toml, else config/run.toml]
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Default config directory
    #[arg(long, global = true, env = CONFIG_DIR_ENV, hide_env_values = true)]
    config_dir: Option<PathBuf>,
    /// Output directory [default: output_dir from the run file]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the run file seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated site labels, or `all`
    #[arg(long, global = true)]
    sites: Option<String>,
    /// on | off | power=<W>
    #[arg(long, global = true)]
    compensation: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Uncompensated and compensated shift maps with a summary
    Map,
    /// Ramsey traces and fits for selected sites or all
    Ramsey,
    /// Spin-echo trace and fit
    Echo,
    /// Optimal compensation power, η and scattering budget
    Optimize,
    /// Fit the compensation beam displacement to a measured map
    FitMisalignment {
        /// Shift map CSV (row,col,label,shift_Hz)
        #[arg(long)]
        measured: PathBuf,
    },
    /// Check the configuration; optionally calibrate temperature and heating
    Validate {
        #[arg(long)]
        calibrate: bool,
    },
}

struct Context {
    run: LoadedRun,
    out: PathBuf,
    seed: u64,
    provenance: Provenance,
    sites: Option<Vec<String>>,
    site_flag: Option<String>,
    compensation: Option<CompensationMode>,
}

fn config_path(common: &Common) -> PathBuf {
    if let Some(p) = &common.config {
        return p.clone();
    }
    common
        .config_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("config"))
        .join("run.toml")
}

fn parse_sites(spec: &str) -> Result<Option<Vec<String>>> {
    let spec = spec.trim();
    if spec == "all" {
        return Ok(None);
    }
    let list: Vec<String> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if list.is_empty() {
        return Err(Error::Empty("site list"));
    }
    Ok(Some(list))
}

impl Context {
    fn load(common: &Common) -> Result<Self> {
        let path = config_path(common);
        let run = load_run(&path)?;
        let seed = common.seed.unwrap_or(run.run.seed);
        let out = common.out.clone().unwrap_or_else(|| {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            if run.run.output_dir.is_absolute() {
                run.run.output_dir.clone()
            } else {
                base.join(&run.run.output_dir)
            }
        });
        let sites = match &common.sites {
            Some(s) => parse_sites(s)?,
            None if run.run.sites.is_empty() => None,
            None => Some(run.run.sites.clone()),
        };
        let compensation = common.compensation.as_deref().map(str::parse).transpose()?;
        let provenance = Provenance::new(run.config_hash.clone(), seed);
        Ok(Self {
            run,
            out,
            seed,
            provenance,
            sites,
            site_flag: common.sites.clone(),
            compensation,
        })
    }

    fn scene(&self) -> &lightsync::geometry::TrapArrayScene {
        &self.run.scene.scene
    }

    fn json<T: Serialize>(&self, body: &T) -> Result<String> {
        to_json(&self.provenance, body)
    }
}

#[derive(Serialize)]
struct MapSidecar<'a> {
    scene_hash: &'a str,
    compensation_power_w: f64,
    displacement_m: [f64; 2],
    sites: usize,
}

fn map_files(ctx: &Context, name: &str, map: &ShiftMap) -> Result<Vec<(String, String)>> {
    let sidecar = MapSidecar {
        scene_hash: &map.metadata.scene_hash,
        compensation_power_w: map.metadata.compensation_power,
        displacement_m: map.metadata.displacement,
        sites: map.entries.len(),
    };
    Ok(vec![
        (format!("{name}.csv"), shift_map_csv(map, &ctx.provenance)),
        (format!("{name}.json"), ctx.json(&sidecar)?),
    ])
}

#[derive(Serialize)]
struct MapSummary {
    compensation_power_w: f64,
    uncompensated: lightsync::array::Spread,
    compensated: lightsync::array::Spread,
    /// Ratio of peak-to-peak spreads.
    reduction_factor: f64,
    reduction_factor_std: f64,
}

fn cmd_map(ctx: &Context) -> Result<()> {
    let scene = ctx.scene();
    let power = resolve_compensation(scene, ctx.compensation.unwrap_or(CompensationMode::Optimized))?;
    let uncomp = array_shift_map(scene, 0.0)?;
    let comp = array_shift_map(scene, power)?;
    let (u, c) = (spread_metric(&uncomp)?, spread_metric(&comp)?);
    let summary = MapSummary {
        compensation_power_w: power,
        uncompensated: u,
        compensated: c,
        reduction_factor: u.peak_to_peak / c.peak_to_peak,
        reduction_factor_std: u.std / c.std,
    };
    let mut files = map_files(ctx, "map_uncompensated", &uncomp)?;
    files.extend(map_files(ctx, "map_compensated", &comp)?);
    files.push(("map_summary.json".into(), ctx.json(&summary)?));
    write_all(&ctx.out, &files)?;
    println!(
        "uncompensated spread {:.2} Hz, compensated {:.2} Hz at {:.3e} W (factor {:.1})",
        u.peak_to_peak, c.peak_to_peak, power, summary.reduction_factor
    );
    Ok(())
}

#[derive(Serialize)]
struct SiteFit<'a> {
    site: &'a str,
    trap_bottom_shift_hz: f64,
    depth_k: f64,
    measured_shift_hz: Option<f64>,
    fit: &'a FitReport,
}

#[derive(Serialize)]
struct SequenceReport<'a> {
    sequence: &'a str,
    compensation_power_w: f64,
    temperature_k: f64,
    atoms: usize,
    coupling_detuning_hz: f64,
    heating: HeatingModel,
    sites: Vec<SiteFit<'a>>,
    average: Option<&'a FitReport>,
}

fn cmd_ramsey(ctx: &Context) -> Result<()> {
    let scene = ctx.scene();
    let mode = ctx.compensation.unwrap_or(ctx.run.run.compensation);
    let power = resolve_compensation(scene, mode)?;
    let exp = Experiment::from_run(&ctx.run, power, ctx.seed);
    let window_cfg = if power > 0.0 {
        &ctx.run.run.ramsey.compensated
    } else {
        &ctx.run.run.ramsey.uncompensated
    };
    let window = Window::from(window_cfg);
    let result = exp.ramsey_sites(ctx.sites.as_deref(), &window)?;

    let mut files = Vec::new();
    for r in &result.sites {
        files.push((
            format!("ramsey_{}.csv", r.result.site),
            trace_csv(&r.result.trace, &ctx.provenance, &r.result.site),
        ));
    }
    if let Some(avg) = &result.average {
        files.push(("ramsey_all.csv".into(), trace_csv(&avg.trace, &ctx.provenance, "all")));
    }
    let report = SequenceReport {
        sequence: "ramsey",
        compensation_power_w: power,
        temperature_k: exp.ensemble.temperature,
        atoms: exp.ensemble.atoms,
        coupling_detuning_hz: window_cfg.coupling_detuning_hz,
        heating: exp.heating,
        sites: result
            .sites
            .iter()
            .map(|r| SiteFit {
                site: &r.result.site,
                trap_bottom_shift_hz: rad_to_hz(r.trap.residual_shift),
                depth_k: r.trap.depth / BOLTZMANN,
                measured_shift_hz: r.measured_shift_hz,
                fit: r.fit(),
            })
            .collect(),
        average: result.average.as_ref().and_then(|a| a.fit.as_ref()),
    };
    files.push(("ramsey_fits.json".into(), ctx.json(&report)?));
    write_all(&ctx.out, &files)?;
    for s in &report.sites {
        println!("{:>4}  T2* = {:.4e} s", s.site, s.fit.decay_time);
    }
    if let Some(a) = report.average {
        println!(" all  T2* = {:.4e} s", a.decay_time);
    }
    Ok(())
}

fn cmd_echo(ctx: &Context) -> Result<()> {
    let scene = ctx.scene();
    let echo = &ctx.run.run.echo;
    let site = match ctx.site_flag.as_deref().map(parse_sites).transpose()? {
        None => echo.site.clone(),
        Some(Some(list)) if list.len() == 1 => list[0].clone(),
        Some(_) => return Err(Error::Config("echo runs on exactly one site".into())),
    };
    let power = resolve_compensation(scene, ctx.compensation.unwrap_or(echo.compensation))?;
    let mut exp = Experiment::from_run(&ctx.run, power, ctx.seed);
    exp.heating = ctx.run.run.heating.model();
    exp.envelope = echo.envelope;
    let window = Window::from(&echo.window);
    let r = exp.echo_site(&site, &window)?;
    let report = SequenceReport {
        sequence: "spin_echo",
        compensation_power_w: power,
        temperature_k: exp.ensemble.temperature,
        atoms: exp.ensemble.atoms,
        coupling_detuning_hz: echo.window.coupling_detuning_hz,
        heating: exp.heating,
        sites: vec![SiteFit {
            site: &r.result.site,
            trap_bottom_shift_hz: rad_to_hz(r.trap.residual_shift),
            depth_k: r.trap.depth / BOLTZMANN,
            measured_shift_hz: None,
            fit: r.fit(),
        }],
        average: None,
    };
    write_all(
        &ctx.out,
        &[
            (format!("echo_{site}.csv"), trace_csv(&r.result.trace, &ctx.provenance, &site)),
            ("echo_fit.json".into(), ctx.json(&report)?),
        ],
    )?;
    println!("{site}  T2' = {:.4e} s", r.fit().decay_time);
    Ok(())
}

#[derive(Serialize)]
struct OptimizeReport {
    compensation_power_w: f64,
    power_ratio: f64,
    eta_exact: f64,
    eta_approximate: f64,
    effective_detuning_hz: f64,
    uncompensated: lightsync::array::Spread,
    compensated: lightsync::array::Spread,
    evaluations: usize,
    central_site: String,
    trap_scattering_rate_per_s: f64,
    compensation_scattering_rate_per_s: f64,
    scattering_ratio: f64,
}

fn central_site(scene: &lightsync::geometry::TrapArrayScene) -> Result<&lightsync::geometry::Site> {
    let c = scene.trap.beam.center;
    scene
        .sites
        .iter()
        .min_by(|a, b| {
            let d = |s: &lightsync::geometry::Site| {
                let p = scene.array.lens_center(s.index);
                (p[0] - c[0]).hypot(p[1] - c[1])
            };
            d(a).total_cmp(&d(b))
        })
        .ok_or(Error::Empty("occupied sites"))
}

fn mean_state_rate(species: &lightsync::atomic::AtomSpecies, omega: f64, intensity: f64) -> Result<f64> {
    Ok(0.5
        * (scattering_rate(species, ClockState::Lower, omega, intensity)?
            + scattering_rate(species, ClockState::Upper, omega, intensity)?))
}

fn cmd_optimize(ctx: &Context) -> Result<()> {
    let scene = ctx.scene();
    let opt = optimize_compensation_power(scene)?;
    let omega_l = wavelength_to_omega(scene.trap.wavelength);
    let omega_c = wavelength_to_omega(scene.compensation.wavelength);
    let eta = required_intensity_ratio(&scene.species, omega_l, omega_c)?;
    let centre = central_site(scene)?;
    let trap = trap_site(scene, centre, opt.power)?;
    let gamma_trap = mean_state_rate(&scene.species, omega_l, trap.peak_intensity)?;
    let gamma_comp = mean_state_rate(&scene.species, omega_c, eta.exact * trap.peak_intensity)?;
    let report = OptimizeReport {
        compensation_power_w: opt.power,
        power_ratio: opt.power_ratio,
        eta_exact: eta.exact,
        eta_approximate: eta.approximate,
        effective_detuning_hz: rad_to_hz(eta.effective_detuning),
        uncompensated: opt.uncompensated,
        compensated: opt.spread,
        evaluations: opt.evaluations,
        central_site: centre.label.clone(),
        trap_scattering_rate_per_s: gamma_trap,
        compensation_scattering_rate_per_s: gamma_comp,
        scattering_ratio: scattering_ratio(&scene.species, omega_l, omega_c, eta.exact)?,
    };
    write_all(&ctx.out, &[("optimize.json".into(), ctx.json(&report)?)])?;
    println!(
        "P_c* = {:.4e} W (P_c/P = {:.3e}), eta exact {:.3e}, approx {:.3e}, scattering ratio {:.3}",
        report.compensation_power_w, report.power_ratio, report.eta_exact, report.eta_approximate, report.scattering_ratio
    );
    Ok(())
}

#[derive(Serialize)]
struct MisalignmentReport {
    displacement_m: [f64; 2],
    displacement_magnitude_m: f64,
    compensation_power_w: f64,
    rms_residual_hz: f64,
    centered_spread: lightsync::array::Spread,
    evaluations: usize,
}

fn cmd_fit_misalignment(ctx: &Context, measured: &Path) -> Result<()> {
    let scene = ctx.scene();
    let text = std::fs::read_to_string(measured)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", measured.display())))?;
    let entries = parse_shift_map_csv(&text)?;
    let map = ShiftMap {
        entries,
        metadata: lightsync::array::MapMetadata {
            scene_hash: String::new(),
            compensation_power: f64::NAN,
            displacement: [f64::NAN; 2],
        },
    };
    let fit = fit_misalignment(&map, scene)?;
    let report = MisalignmentReport {
        displacement_m: fit.displacement,
        displacement_magnitude_m: fit.displacement[0].hypot(fit.displacement[1]),
        compensation_power_w: fit.compensation_power,
        rms_residual_hz: fit.rms_residual,
        centered_spread: fit.centered_prediction,
        evaluations: fit.evaluations,
    };
    let mut files = map_files(ctx, "misalignment_map", &fit.fitted_map)?;
    files.push(("misalignment.json".into(), ctx.json(&report)?));
    write_all(&ctx.out, &files)?;
    println!(
        "d* = ({:.3}, {:.3}) um, rms {:.3} Hz, centred-beam spread {:.3} Hz",
        fit.displacement[0] * 1e6,
        fit.displacement[1] * 1e6,
        fit.rms_residual,
        fit.centered_prediction.peak_to_peak
    );
    Ok(())
}

#[derive(Serialize)]
struct CalibrationReport {
    site: String,
    temperature: TemperatureCalibration,
    heating: HeatingModel,
    heating_jump_rate_per_s: f64,
    heating_jump_energy_k: f64,
}

fn cmd_validate(ctx: &Context, calibrate: bool) -> Result<()> {
    let scene = ctx.scene();
    println!(
        "ok: {} sites, species {}, config hash {}",
        scene.sites.len(),
        scene.species.name,
        ctx.run.config_hash
    );
    if !calibrate {
        return Ok(());
    }
    let cfg = ctx
        .run
        .run
        .calibration
        .as_ref()
        .ok_or_else(|| Error::Config("run file has no [calibration] section".into()))?;
    let exp = Experiment::from_run(&ctx.run, 0.0, ctx.seed);
    let window = Window::from(&ctx.run.run.ramsey.uncompensated);
    let temperature = calibrate_temperature(&exp, &cfg.site, &window, cfg.ramsey_decay_s)?;
    let mut echo = exp.clone();
    echo.ensemble.temperature = temperature.temperature;
    echo.envelope = ctx.run.run.echo.envelope;
    let jump_energy = ctx.run.run.heating.model().jump_energy;
    let heating = calibrate_heating(
        &echo,
        &cfg.site,
        &Window::from(&ctx.run.run.echo.window),
        jump_energy,
        cfg.echo_decay_s,
    )?;
    let report = CalibrationReport {
        site: cfg.site.clone(),
        temperature,
        heating,
        heating_jump_rate_per_s: heating.jump_rate,
        heating_jump_energy_k: heating.jump_energy / BOLTZMANN,
    };
    write_all(&ctx.out, &[("calibration.json".into(), ctx.json(&report)?)])?;
    println!(
        "temperature_k = {:e}  # T2* {:.4e} s{}",
        temperature.temperature,
        temperature.decay_time,
        if temperature.reached { "" } else { " (closest achievable)" }
    );
    println!("jump_rate_per_s = {:e}", heating.jump_rate);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Context::load(&cli.common)?;
    match &cli.command {
        Command::Map => cmd_map(&ctx),
        Command::Ramsey => cmd_ramsey(&ctx),
        Command::Echo => cmd_echo(&ctx),
        Command::Optimize => cmd_optimize(&ctx),
        Command::FitMisalignment { measured } => cmd_fit_misalignment(&ctx, measured),
        Command::Validate { calibrate } => cmd_validate(&ctx, *calibrate),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
