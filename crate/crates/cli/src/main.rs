use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use rideshare_core::assign::StopKind;
use rideshare_core::combos::write_combinations_csv;
use rideshare_core::dtree::RoutingContext;
use rideshare_core::engine::{run_batch, BatchRun, EngineError};
use rideshare_core::mipexport::{export_mip, verify_solution};
use rideshare_core::model::{EngineConfig, Instance};
use rideshare_core::network::{screen_participants, PdNetwork, Travel};
use rideshare_core::oracle::brute_force_matching;
use rideshare_core::scenario::{
    generate_grid, load_instance, load_network, run_sweep, save_instance, write_sweep_csv, ConstraintMode,
    GridScenarioParams, ScenarioError, SweepAxis, SweepSpec,
};
use rideshare_core::MatchResult;

#[derive(Parser)]
#[command(name = "rideshare", version, about = "Batch ride-sharing matcher")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded grid instance.
    Generate {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match one batch and write the result.
    Match {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Result JSON; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// One-row metrics CSV, including stage timings.
        #[arg(long)]
        metrics_csv: Option<PathBuf>,
        /// Every feasible combination as CSV.
        #[arg(long)]
        combos_csv: Option<PathBuf>,
        /// Also write the LP model of the batch.
        #[arg(long)]
        export_lp: Option<PathBuf>,
        /// With --export-lp: skip pruning in the model.
        #[arg(long)]
        full_model: bool,
        /// Route coordinates per driver, for plotting.
        #[arg(long)]
        emit_plot_data: Option<PathBuf>,
    },
    /// Compare the pipeline with exhaustive matching on small seeded grids.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, default_value_t = 2)]
        drivers: usize,
        #[arg(long, default_value_t = 4)]
        passengers: usize,
        #[arg(long, default_value_t = 4)]
        max_combo_size: usize,
        /// Scattered driver trips with proportional limits instead of the
        /// depot grid.
        #[arg(long)]
        scattered: bool,
        #[arg(long, default_value_t = 20.0)]
        excess_pct: f64,
        #[arg(long, default_value_t = 50.0)]
        wait_pct: f64,
    },
    /// Replicated parameter sweep, one CSV row per run.
    Sweep {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated axis values (percent for excess-pct).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        replications: usize,
        /// Replications run concurrently; timings then interfere.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the LP model of a batch.
    ExportLp {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        full_model: bool,
    },
    /// Check a result against every constraint of the model.
    Verify {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        result: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        eps: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    DriverRatio,
    ExcessPct,
    Capacity,
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    drivers: usize,
    #[arg(long, default_value_t = 10)]
    passengers: usize,
    #[arg(long, default_value_t = 4)]
    capacity: u32,
    /// Δ as a percentage of the direct travel time.
    #[arg(long, default_value_t = 20.0)]
    excess_pct: f64,
    /// Ω as a percentage of Δ.
    #[arg(long, default_value_t = 50.0)]
    wait_pct: f64,
    /// Common depot at the origin with fixed grid limits (30 km per driver,
    /// 240 min per passenger, 15 min wait) instead of scattered trips with
    /// proportional limits.
    #[arg(long)]
    depot: bool,
    #[arg(long, default_value_t = 60.0)]
    speed: f64,
}

impl GridArgs {
    fn params(&self) -> GridScenarioParams {
        let mut p = if self.depot {
            GridScenarioParams { seed: self.seed, drivers: self.drivers, passengers: self.passengers, ..Default::default() }
        } else {
            GridScenarioParams::scattered(
                self.seed,
                self.drivers,
                self.passengers,
                self.excess_pct / 100.0,
                self.wait_pct / 100.0,
            )
        };
        p.capacity = self.capacity;
        p.speed_kmh = self.speed;
        p
    }
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Instance JSON. Without it a grid instance is generated from the grid
    /// flags.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Road network JSON; instance locations are then node ids.
    #[arg(long)]
    network: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Clone)]
struct EngineArgs {
    #[arg(long, default_value_t = 4)]
    max_combo_size: usize,
    #[arg(long)]
    no_prune: bool,
    /// Pruning speed bound, km/h; derived from the travel model by default.
    #[arg(long)]
    v_max: Option<f64>,
    #[arg(long, env = "RIDESHARE_THREADS", default_value_t = 1)]
    threads: usize,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        EngineConfig {
            max_combo_size: self.max_combo_size,
            v_max: self.v_max,
            prune: !self.no_prune,
            threads: self.threads.max(1),
            ..Default::default()
        }
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Exit 2.
    Input(anyhow::Error),
    /// Exit 1.
    Io(anyhow::Error),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io(_) | ScenarioError::Json(_) | ScenarioError::Csv(_) => Failure::Io(e.into()),
            _ => Failure::Input(e.into()),
        }
    }
}

impl Failure {
    fn context(self, what: String) -> Self {
        match self {
            Failure::Input(e) => Failure::Input(e.context(what)),
            Failure::Io(e) => Failure::Io(e.context(what)),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Failure::Input(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(Failure::Input(e)) => {
            report(&e);
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            report(&e);
            ExitCode::from(1)
        }
    }
}

/// Prints the error chain, skipping causes already quoted by their parent.
fn report(e: &anyhow::Error) {
    let mut msg = e.to_string();
    let mut last = msg.clone();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !last.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
        last = c;
    }
    eprintln!("error: {msg}");
}

fn load(input: &InputArgs) -> Result<(Travel, Instance), Failure> {
    let travel = match &input.network {
        Some(p) => Travel::Road(
            load_network(p).map_err(|e| Failure::from(e).context(format!("loading {}", p.display())))?,
        ),
        None => Travel::Euclidean { speed_kmh: input.grid.speed },
    };
    let inst = match &input.instance {
        Some(p) => load_instance(p, &travel, input.grid.excess_pct / 100.0, input.grid.wait_pct / 100.0)
            .map_err(|e| Failure::from(e).context(format!("loading {}", p.display())))?,
        None => {
            if input.network.is_some() {
                return Err(Failure::Input(anyhow::anyhow!("--network needs --instance")));
            }
            generate_grid(&input.grid.params())?
        }
    };
    Ok((travel, inst))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn result_json(result: &MatchResult) -> String {
    serde_json::to_string_pretty(result).expect("result serializes") + "\n"
}

fn run(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Generate { grid, out } => {
            let inst = generate_grid(&grid.params())?;
            save_instance(&out, &inst)?;
        }
        Command::Match { input, engine, out, metrics_csv, combos_csv, export_lp, full_model, emit_plot_data } => {
            let (travel, inst) = load(&input)?;
            let run = run_batch(&travel, &inst, &engine.config())?;
            let json = result_json(&run.result);
            match out {
                Some(p) => std::fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{json}"),
            }
            if let Some(p) = metrics_csv {
                write_metrics(&p, &run)?;
            }
            let ctx = RoutingContext::new(&run.instance, &run.pd, engine.config().eps);
            if let Some(p) = combos_csv {
                write_combinations_csv(&ctx, &run.combinations, create(&p)?).context("writing combinations")?;
            }
            if let Some(p) = export_lp {
                let cands = (!full_model).then_some(run.candidates.as_slice());
                std::fs::write(&p, export_mip(&ctx, cands)).with_context(|| format!("writing {}", p.display()))?;
            }
            if let Some(p) = emit_plot_data {
                write_plot_data(&p, &travel, &run)?;
            }
        }
        Command::OracleCheck { seeds, first_seed, drivers, passengers, max_combo_size, scattered, excess_pct, wait_pct } => {
            let cfg = EngineConfig { max_combo_size, ..Default::default() };
            let mut passed = 0;
            for seed in first_seed..first_seed + seeds {
                let p = if scattered {
                    GridScenarioParams::scattered(seed, drivers, passengers, excess_pct / 100.0, wait_pct / 100.0)
                } else {
                    GridScenarioParams { seed, drivers, passengers, ..Default::default() }
                };
                let inst = generate_grid(&p)?;
                let travel = p.travel();
                let run = run_batch(&travel, &inst, &cfg)?;
                let pd = PdNetwork::build(&travel, &inst).map_err(|e| Failure::Input(e.into()))?;
                let oracle = brute_force_matching(&inst, &pd, max_combo_size, cfg.eps)
                    .map_err(|e| Failure::Input(e.into()))?;
                let ok = (run.result.objective_km - oracle.objective).abs() <= 1e-9;
                passed += ok as u64;
                println!(
                    "seed {seed}: {} z={:.9} oracle={:.9}",
                    if ok { "pass" } else { "FAIL" },
                    run.result.objective_km,
                    oracle.objective
                );
            }
            println!("{passed}/{seeds} pass");
            if passed != seeds {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Sweep { grid, engine, axis, values, replications, workers, out } => {
            let axis = match axis {
                Axis::DriverRatio => SweepAxis::DriverRatio,
                Axis::ExcessPct => SweepAxis::ExcessPct,
                Axis::Capacity => SweepAxis::Capacity,
            };
            let mut base = grid.params();
            if axis == SweepAxis::ExcessPct && grid.depot {
                base.constraints = ConstraintMode::Proportional { excess: 0.2, wait: grid.wait_pct / 100.0 };
            }
            let spec = SweepSpec { axis, values, replications };
            let rows = run_sweep(&spec, &base, &engine.config(), workers.max(1))?;
            match out {
                Some(p) => write_sweep_csv(&rows, create(&p)?)?,
                None => write_sweep_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::ExportLp { input, engine, out, full_model } => {
            let (travel, inst) = load(&input)?;
            let cfg = engine.config();
            let run = run_batch(&travel, &inst, &cfg)?;
            let ctx = RoutingContext::new(&run.instance, &run.pd, cfg.eps);
            let cands = (!full_model).then_some(run.candidates.as_slice());
            std::fs::write(&out, export_mip(&ctx, cands)).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Verify { input, result, eps } => {
            let (travel, inst) = load(&input)?;
            let text = std::fs::read_to_string(&result).with_context(|| format!("reading {}", result.display()))?;
            let res: MatchResult = serde_json::from_str(&text).context("parsing result")?;
            let (inst, _) = screen_participants(&travel, &inst).map_err(|e| Failure::Input(e.into()))?;
            let pd = PdNetwork::build(&travel, &inst).map_err(|e| Failure::Input(e.into()))?;
            let ctx = RoutingContext::new(&inst, &pd, eps);
            let report = verify_solution(&ctx, &res, eps);
            for v in &report.violations {
                println!("violated {} by {:e}", v.row, v.amount);
            }
            println!(
                "{}: {} rows checked, {} violated",
                if report.passed() { "pass" } else { "FAIL" },
                report.rows_checked,
                report.violations.len()
            );
            if !report.passed() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_metrics(path: &Path, run: &BatchRun) -> Result<(), Failure> {
    let m = &run.result.metrics;
    let t = &run.timings;
    let mut w = create(path)?;
    writeln!(
        w,
        "batch_id,prep_ms,combo_ms,ilp_ms,total_ms,n_combos,z_km,baseline_km,match_rate,prune_strength,mean_delta_v,mean_delta_r,mean_omega_r,vkt_saved_km,trips_saved"
    )?;
    writeln!(
        w,
        "{},{:.3},{:.3},{:.3},{:.3},{},{},{},{},{},{},{},{},{},{}",
        run.result.batch_id,
        t.prep_ms,
        t.combo_ms,
        t.ilp_ms,
        t.total_ms,
        run.combinations.len(),
        run.result.objective_km,
        run.result.baseline_km,
        m.match_rate,
        m.prune_strength,
        m.mean_delta_v,
        m.mean_delta_r,
        m.mean_omega_r,
        m.vkt_saved_km,
        m.trips_saved
    )?;
    w.flush()?;
    Ok(())
}

fn write_plot_data(path: &Path, travel: &Travel, run: &BatchRun) -> Result<(), Failure> {
    let inst = &run.instance;
    let mut w = create(path)?;
    writeln!(w, "driver,seq,kind,participant,x,y,time")?;
    for route in &run.result.routes {
        for (k, s) in route.stops.iter().enumerate() {
            let loc = match s.kind {
                StopKind::Origin => inst.drivers[inst.driver_index(s.participant).unwrap()].origin,
                StopKind::Destination => inst.drivers[inst.driver_index(s.participant).unwrap()].destination,
                StopKind::Pickup => inst.passengers[inst.passenger_index(s.participant).unwrap()].pickup,
                StopKind::Dropoff => inst.passengers[inst.passenger_index(s.participant).unwrap()].dropoff,
            };
            let (x, y) = match travel.coordinates(&loc) {
                Ok(p) => (p.x.to_string(), p.y.to_string()),
                Err(_) => (String::new(), String::new()),
            };
            let kind = serde_json::to_value(&s.kind).unwrap();
            writeln!(w, "{},{k},{},{},{x},{y},{}", route.driver, kind.as_str().unwrap(), s.participant, s.time)?;
        }
    }
    w.flush()?;
    Ok(())
}
