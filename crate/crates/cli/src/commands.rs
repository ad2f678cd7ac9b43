use std::path::PathBuf;
use std::time::Instant;

use nalgebra::DVector;
use trussqa_core::{
    assemble_unit_stiffness, direct_solve, load_model, optimize as run_optimize, potential_energy,
    solve_equilibrium, volume, BenchmarkCase, DesignVector, DofMap, ExhaustiveSampler,
    OptimizationResult, RemoteSampler, Sampler, SimulatedAnnealingSampler, StateVector, StopReason,
    TrussModel,
};

use crate::config::{self, Overrides, Resolved, RunConfig, SamplerKind};
use crate::output::{self, DesignFile, Displacements, EquilibriumRow, OptimizeRow, Summary};
use crate::{Failure, RunArgs};

struct Run {
    model: TrussModel,
    label: String,
    case: Option<BenchmarkCase>,
    settings: Resolved,
}

fn parse_case(id: &str) -> Result<BenchmarkCase, Failure> {
    id.parse().map_err(|e| Failure::Input(format!("{e}")))
}

fn prepare(args: &RunArgs) -> Result<Run, Failure> {
    let file = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let flags = Overrides {
        sampler: args.sampler,
        endpoint: args.endpoint.clone(),
        seed: args.seed,
        out: args.out.clone(),
    };
    let mut settings = config::resolve(file, flags, std::env::var(config::ENDPOINT_ENV).ok())?;
    if args.initial.is_some() {
        settings.initial_design = args.initial.clone();
    }
    let (model, label, case) = match (&args.model, &args.case) {
        (Some(path), _) => (load_model(path)?, path.display().to_string(), None),
        (None, Some(id)) => {
            let case = parse_case(id)?;
            (case.model(), case.id().to_string(), Some(case))
        }
        (None, None) => {
            return Err(Failure::Input(
                "either --model or --case is required".into(),
            ))
        }
    };
    Ok(Run {
        model,
        label,
        case,
        settings,
    })
}

fn sampler(settings: &Resolved) -> Box<dyn Sampler> {
    match settings.sampler {
        SamplerKind::Exhaustive => Box::new(ExhaustiveSampler),
        SamplerKind::Sa => Box::new(SimulatedAnnealingSampler),
        SamplerKind::Remote => Box::new(RemoteSampler::new(
            settings
                .endpoint
                .clone()
                .expect("endpoint checked when resolving"),
        )),
    }
}

fn initial_design(run: &Run) -> Result<DesignVector, Failure> {
    let n = run.model.n_bars();
    let opt = &run.settings.optimizer;
    let alpha = match &run.settings.initial_design {
        Some(path) => DesignFile::load(path, &run.model)?,
        None => {
            let a = run
                .settings
                .initial_alpha
                .or(run.case.map(|c| c.initial_alpha()))
                .unwrap_or(1.0);
            vec![a; n]
        }
    };
    DesignVector::new(
        DVector::from_vec(alpha),
        DVector::from_element(n, opt.alpha_min),
        DVector::from_element(n, opt.alpha_max),
    )
    .map_err(|e| Failure::Input(format!("initial design: {e}")))
}

pub fn equilibrium(args: &RunArgs) -> Result<(), Failure> {
    let run = prepare(args)?;
    let design = initial_design(&run)?;
    let dofs = DofMap::new(&run.model);
    let units = assemble_unit_stiffness(&run.model, &dofs).map_err(trussqa_core::OptError::from)?;
    let loads = run.model.reduced_loads(&dofs);
    let alpha = design.alpha();
    let exact = direct_solve(&units, alpha, &loads).map_err(trussqa_core::OptError::from)?;
    let psi_direct =
        potential_energy(&units, alpha, &exact, &loads).map_err(trussqa_core::OptError::from)?;
    let opt = &run.settings.optimizer;
    let eq = solve_equilibrium(
        &units,
        alpha,
        &loads,
        &StateVector::zeros(dofs.n_free()),
        opt,
        sampler(&run.settings).as_ref(),
        opt.sampler.seed,
    )?;
    let rel = |psi: f64| {
        if psi_direct != 0.0 {
            (psi - psi_direct).abs() / psi_direct.abs()
        } else {
            (psi - psi_direct).abs()
        }
    };
    let rows: Vec<EquilibriumRow> = eq
        .runs
        .iter()
        .flat_map(|r| &r.iterations)
        .enumerate()
        .map(|(k, it)| {
            let psi = if it.accepted { it.f_trial } else { it.f };
            EquilibriumRow {
                iter: k,
                psi,
                rel_error_vs_direct: rel(psi),
                epsilon: it.epsilon_max,
                accepted: it.accepted,
            }
        })
        .collect();
    let psi =
        potential_energy(&units, alpha, &eq.state, &loads).map_err(trussqa_core::OptError::from)?;
    let out = &run.settings.out;
    output::prepare_dir(out)?;
    output::write_csv(out.join(output::EQUILIBRIUM_TRACE), &rows)?;
    output::write_json(
        out.join(output::DISPLACEMENTS),
        &Displacements {
            psi,
            psi_direct,
            rel_error_vs_direct: rel(psi),
            residual: eq.residual,
            compliance: loads.dot(&eq.state.u),
            stop_reason: eq.runs.last().map_or(StopReason::NSteps, |r| r.stop_reason),
            qasp_iterations: rows.len(),
            nodes: Displacements::node_table(&run.model, &dofs, &eq.state.u),
            seeds: eq
                .runs
                .iter()
                .filter_map(|r| r.iterations.first().map(|it| it.seed))
                .collect(),
        },
    )?;
    println!(
        "{}: psi = {psi:.6e}, direct {psi_direct:.6e}, relative error {:.2e}, {} QA-SP iterations; wrote {}",
        run.label,
        rel(psi),
        rows.len(),
        out.display()
    );
    Ok(())
}

pub struct Optimized {
    pub run_label: String,
    pub n_bars: usize,
    pub dimension: usize,
    pub sampler: &'static str,
    pub result: OptimizationResult,
    pub elapsed: f64,
    pub out: PathBuf,
}

fn optimize_run(run: Run) -> Result<Optimized, Failure> {
    let initial = initial_design(&run)?;
    let opt = &run.settings.optimizer;
    let start = Instant::now();
    let result = run_optimize(&run.model, &initial, opt, sampler(&run.settings).as_ref())?;
    let elapsed = start.elapsed().as_secs_f64();

    let out = run.settings.out.clone();
    output::prepare_dir(&out)?;
    let rows: Vec<OptimizeRow> = result
        .trace
        .iterations
        .iter()
        .map(|r| OptimizeRow {
            iter: r.k,
            compliance: r.compliance,
            volume_ratio: r.volume_ratio,
            accepted: r.accepted,
        })
        .collect();
    output::write_csv(out.join(output::OPTIMIZE_TRACE), &rows)?;
    let vol = volume(&run.model, result.design.alpha()).map_err(trussqa_core::OptError::from)?;
    let dofs = DofMap::new(&run.model);
    let loads = run.model.reduced_loads(&dofs);
    let direct = assemble_unit_stiffness(&run.model, &dofs)
        .and_then(|units| direct_solve(&units, result.design.alpha(), &loads))
        .map_err(trussqa_core::OptError::from)?;
    output::write_json(
        out.join(output::DESIGN_FINAL),
        &DesignFile::new(
            &run.model,
            result.design.alpha().as_slice(),
            result.compliance,
            loads.dot(&direct.u),
            vol,
        ),
    )?;
    output::write_json(
        out.join(output::SUMMARY),
        &Summary::new(
            run.label.clone(),
            run.settings.sampler.name(),
            opt.sampler.seed,
            &result,
            elapsed,
        ),
    )?;
    Ok(Optimized {
        run_label: run.label,
        n_bars: run.model.n_bars(),
        dimension: run.model.dimension(),
        sampler: run.settings.sampler.name(),
        result,
        elapsed,
        out,
    })
}

pub fn optimize(args: &RunArgs) -> Result<Optimized, Failure> {
    let o = optimize_run(prepare(args)?)?;
    println!(
        "{}: C = {:.6}, V/Vt = {:.5}, {} outer iterations ({}), {:.1} s; wrote {}",
        o.run_label,
        o.result.compliance,
        o.result.volume_ratio,
        o.result.trace.iterations.len(),
        o.result.stop,
        o.elapsed,
        o.out.display()
    );
    Ok(o)
}

pub fn bench(args: &RunArgs) -> Result<(), Failure> {
    if args.model.is_some() {
        return Err(Failure::Input("bench takes --case, not --model".into()));
    }
    let id = args
        .case
        .as_deref()
        .ok_or_else(|| Failure::Input("bench needs --case".into()))?;
    let case = parse_case(id)?;
    let mut run = prepare(args)?;
    if args.out.is_none() {
        run.settings.out = run.settings.out.join(case.id());
    }
    let o = optimize_run(run)?;
    let r = &o.result;
    let first = r
        .trace
        .iterations
        .first()
        .map_or(f64::NAN, |row| row.compliance);
    let reference = case
        .reference_compliance()
        .map_or("-".to_string(), |c| format!("{c:.2}"));
    println!(
        "{:<7} {:>4} {:>3} {:<10} {:>6} {:>10} {:>10} {:>6} {:>8} {:>5} {:<14} {:>8}",
        "case",
        "bars",
        "dim",
        "sampler",
        "alpha0",
        "C_initial",
        "C_final",
        "C_ref",
        "V/Vt",
        "outer",
        "stop",
        "time_s"
    );
    println!(
        "{:<7} {:>4} {:>3} {:<10} {:>6.2} {:>10.4} {:>10.4} {:>6} {:>8.5} {:>5} {:<14} {:>8.1}",
        case.id(),
        o.n_bars,
        o.dimension,
        o.sampler,
        r.trace
            .iterations
            .first()
            .map_or(f64::NAN, |row| row.alpha[0]),
        first,
        r.compliance,
        reference,
        r.volume_ratio,
        r.trace.iterations.len(),
        r.stop.to_string(),
        o.elapsed
    );
    println!("outputs in {}", o.out.display());
    Ok(())
}
