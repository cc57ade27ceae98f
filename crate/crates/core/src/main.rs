use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use informa::data_model::{
    build_instrument, build_io_matrices, build_state_matrices, load_instrument, load_trajectory, make_cross_cov_bound,
    noise_bound_matrix, Instrument, InstrumentSpec, NoiseBound, TrajectoryKind, TrajectorySchema,
};
use informa::experiments::{emit_plot_data, run_experiment, ExperimentConfig};
use informa::informativity::{
    build_feasible_form_io, build_feasible_form_state, decide_h2, decide_hinf, decide_stab, h2_problem, hinf_problem,
    stab_problem, stab_problem_max_beta, FeasibleSetForm, SynthesisResult,
};
use informa::lifting::{controller_from_gain, default_io_performance, lift_arx, lift_structure, LiftingStructure, ModelFile};
use informa::linalg::{self, Mat};
use informa::sdp::sdpa::export_standard_form;
use informa::sdp::SolverContract;
use informa::verification::{audit, AuditSetup};
use informa::{Error, Result};

#[derive(Parser)]
#[command(name = "informa", version, about = "Informativity tests and certified controller synthesis from noisy data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lift an ARX or state-space model into the ζ-realization.
    Lift {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a recorded noise sequence against the configured bound.
    BoundCheck {
        #[command(flatten)]
        data: DataArgs,
        /// Headerless CSV, one row per noise channel, one column per data sample.
        #[arg(long)]
        noise: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide informativity and synthesize a gain.
    Synth {
        #[arg(value_enum)]
        objective: ObjectiveArg,
        #[command(flatten)]
        data: DataArgs,
        /// Fixed H∞ level; bisection when omitted.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit a synthesized gain on sampled members of the feasible set.
    Verify {
        #[arg(long)]
        result: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo sweep and write plot data.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Write the assembled LMI in sparse block standard form.
    ExportSdpa {
        #[arg(long, value_enum)]
        problem: ProblemArg,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Stab,
    Hinf,
    H2,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Stab,
    StabMaxBeta,
    Hinf,
    H2,
}

#[derive(Args)]
struct DataArgs {
    /// Trajectory CSV with columns t,u1..,y1.. (or x1..).
    #[arg(long)]
    data: PathBuf,
    /// Treat the data as input-state (default: inferred from the header).
    #[arg(long, conflicts_with = "io")]
    state: bool,
    #[arg(long)]
    io: bool,
    /// ARX order l for input-output data.
    #[arg(long)]
    lag: Option<usize>,
    /// `identity`, `lags:K`, `lags:0,2,5` or a path to a headerless M×N CSV.
    #[arg(long, default_value = "identity")]
    instrument: String,
    /// Scalar h (H_u = h·I) or a JSON file with the rows of H_u.
    #[arg(long)]
    hu: String,
    /// Performance output rows, `;`-separated, e.g. `0,0,1`.
    #[arg(long)]
    cz: Option<String>,
    #[arg(long)]
    dz: Option<String>,
}

struct Loaded {
    form: FeasibleSetForm,
    structure: Option<LiftingStructure>,
    instrument: Instrument,
    bound: NoiseBound,
    cz: Mat,
    dz: Mat,
}

fn parse_matrix(s: &str) -> Result<Mat> {
    let rows = s
        .split(';')
        .map(|r| {
            r.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad number `{v}`"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::InvalidArgument("ragged matrix".into()));
    }
    Ok(linalg::from_rows(&rows))
}

fn parse_hu(s: &str, dim: usize) -> Result<Mat> {
    if let Ok(h) = s.trim().parse::<f64>() {
        return Ok(Mat::identity(dim, dim) * h);
    }
    let rows: Vec<Vec<f64>> = serde_json::from_str(&std::fs::read_to_string(s)?)?;
    let hu = linalg::from_rows(&rows);
    if hu.shape() != (dim, dim) {
        return Err(Error::Dimension(format!("H_u is {:?}, expected {dim}×{dim}", hu.shape())));
    }
    Ok(hu)
}

fn parse_instrument(s: &str) -> Result<Option<InstrumentSpec>> {
    if s == "identity" {
        return Ok(Some(InstrumentSpec::Identity));
    }
    if let Some(rest) = s.strip_prefix("lags:") {
        let parts: Vec<usize> = rest
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad lag `{v}`"))))
            .collect::<Result<_>>()?;
        return Ok(Some(if parts.len() == 1 { InstrumentSpec::lagged(parts[0]) } else { InstrumentSpec::LaggedInput { lags: parts } }));
    }
    Ok(None)
}

fn load(args: &DataArgs) -> Result<Loaded> {
    let mut schema = TrajectorySchema::default();
    if args.state {
        schema.kind = Some(TrajectoryKind::InputState);
    } else if args.io {
        schema.kind = Some(TrajectoryKind::InputOutput);
    }
    let traj = load_trajectory(&args.data, &schema)?;
    let instrument_for = |n_data: usize| -> Result<Instrument> {
        match parse_instrument(&args.instrument)? {
            Some(spec) => build_instrument(&traj, &spec, n_data),
            None => {
                let r = load_instrument(&args.instrument)?;
                if r.samples() != n_data {
                    return Err(Error::Dimension(format!("instrument has {} columns, data has {n_data}", r.samples())));
                }
                Ok(r)
            }
        }
    };
    let (form, structure, instrument, bound) = match traj.kind() {
        TrajectoryKind::InputState => {
            let d = build_state_matrices(&traj)?;
            let r = instrument_for(d.samples())?;
            let q = make_cross_cov_bound(&parse_hu(&args.hu, d.state_dim())?, d.samples(), r.rows())?;
            (build_feasible_form_state(&d, &r, &q)?, None, r, q)
        }
        TrajectoryKind::InputOutput => {
            let l = args.lag.ok_or_else(|| Error::InvalidArgument("--lag is required for input-output data".into()))?;
            let d = build_io_matrices(&traj, l)?;
            let s = lift_structure(l, d.output_dim(), d.input_dim())?;
            let r = instrument_for(d.samples())?;
            let q = make_cross_cov_bound(&parse_hu(&args.hu, d.output_dim())?, d.samples(), r.rows())?;
            (build_feasible_form_io(&d, &r, &q, &s)?, Some(s), r, q)
        }
    };
    let (cz, dz) = match (&args.cz, &structure) {
        (Some(c), _) => {
            let cz = parse_matrix(c)?;
            let dz = match &args.dz {
                Some(d) => parse_matrix(d)?,
                None => Mat::zeros(cz.nrows(), form.m),
            };
            (cz, dz)
        }
        (None, Some(s)) => default_io_performance(s),
        (None, None) => (Mat::identity(form.n, form.n), Mat::zeros(form.n, form.m)),
    };
    if cz.ncols() != form.n || dz.shape() != (cz.nrows(), form.m) {
        return Err(Error::Dimension("Cz/Dz do not match the state and input dimensions".into()));
    }
    Ok(Loaded { form, structure, instrument, bound, cz, dz })
}

fn emit(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn mat_json(m: &Mat) -> serde_json::Value {
    json!(linalg::to_rows(m))
}

fn read_result(path: &Path) -> Result<SynthesisResult> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let inner = match v.get("result") {
        Some(serde_json::Value::Null) => return Err(Error::Precondition("the decision file carries no synthesis result".into())),
        Some(r) => r.clone(),
        None => v,
    };
    Ok(serde_json::from_value(inner)?)
}

fn run(cli: Cli) -> Result<u8> {
    let contract = SolverContract::from_env();
    match cli.cmd {
        Cmd::Lift { model, out } => {
            let arx = ModelFile::load(&model)?.to_arx()?;
            let ss = lift_arx(&arx)?;
            let s = lift_structure(arx.l, arx.p, arx.m)?;
            emit(
                out.as_deref(),
                &json!({
                    "l": arx.l, "p": arx.p, "m": arx.m, "n": s.n,
                    "Az": mat_json(&ss.az), "Bz": mat_json(&ss.bz), "Hz": mat_json(&ss.hz),
                    "Cz": mat_json(&ss.cz), "Dz": mat_json(&ss.dz),
                    "J1": mat_json(&s.j1), "J2": mat_json(&s.j2),
                }),
            )?;
            Ok(0)
        }
        Cmd::BoundCheck { data, noise, out } => {
            let l = load(&data)?;
            let em = load_instrument(&noise)?.rm;
            let m = noise_bound_matrix(&em, &l.instrument, &l.bound)?;
            let min_eig = linalg::min_sym_eigenvalue(&m);
            let ok = min_eig >= -l.bound.tol_psd();
            emit(out.as_deref(), &json!({ "satisfied": ok, "min_eigenvalue": min_eig }))?;
            Ok(if ok { 0 } else { 2 })
        }
        Cmd::Synth { objective, data, gamma, out } => {
            let l = load(&data)?;
            let s = l.structure.as_ref();
            let d = match objective {
                ObjectiveArg::Stab => decide_stab(&l.form, s, None, &contract)?,
                ObjectiveArg::Hinf => decide_hinf(&l.form, s, &l.cz, &l.dz, gamma, None, &contract)?,
                ObjectiveArg::H2 => decide_h2(&l.form, s, &l.cz, &l.dz, None, &contract)?,
            };
            let mut v = serde_json::to_value(&d)?;
            if let (Some(s), Some(r)) = (s, &d.result) {
                let c = controller_from_gain(&r.k, s.l, s.p, s.m)?;
                v["controller"] = json!({
                    "C_coeffs": c.c_coeffs.iter().map(mat_json).collect::<Vec<_>>(),
                    "D_coeffs": c.d_coeffs.iter().map(mat_json).collect::<Vec<_>>(),
                });
            }
            emit(out.as_deref(), &v)?;
            if out.is_some() {
                println!("{}", v["verdict"].as_str().unwrap_or("unknown"));
            }
            Ok(d.verdict.exit_code() as u8)
        }
        Cmd::Verify { result, data, samples, seed, out } => {
            let l = load(&data)?;
            let r = read_result(&result)?;
            let setup = AuditSetup {
                form: &l.form,
                structure: l.structure.as_ref(),
                cz: Some(&l.cz),
                dz: Some(&l.dz),
                objective: r.objective,
            };
            let report = audit(&r, &setup, &l.form.center(), samples, seed)?;
            emit(out.as_deref(), &serde_json::to_value(&report)?)?;
            Ok(if report.violations.is_empty() { 0 } else { 3 })
        }
        Cmd::Experiment { config, outdir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = run_experiment(&cfg)?;
            emit_plot_data(&r, &outdir)?;
            let aggs = r.aggregates();
            std::fs::write(outdir.join("summary.json"), serde_json::to_string_pretty(&aggs)? + "\n")?;
            for a in &aggs {
                println!("{:>24} N={:<4} informative={:.2} violations={}", a.series, a.n, a.fraction, a.bound_violations);
            }
            Ok(0)
        }
        Cmd::ExportSdpa { problem, data, gamma, out } => {
            let l = load(&data)?;
            let s = l.structure.as_ref();
            let p = match problem {
                ProblemArg::Stab => stab_problem(&l.form, s)?,
                ProblemArg::StabMaxBeta => stab_problem_max_beta(&l.form, s)?,
                ProblemArg::Hinf => hinf_problem(&l.form, s, &l.cz, &l.dz, gamma)?,
                ProblemArg::H2 => h2_problem(&l.form, s, &l.cz, &l.dz)?,
            };
            export_standard_form(&p.sdp, &out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
