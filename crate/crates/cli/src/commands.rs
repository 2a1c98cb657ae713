use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use dpms_core::csv_input::{read_csv, RawTable};
use dpms_core::diagnostics::{radius_guidance, sparse_min_eigenvalue};
use dpms_core::selection::{Algorithm, Mechanism};
use dpms_core::{
    pcls_select, pcpl_select, run_sweep, standardize, Dataset, ModelSpec, PhiGrid,
    PrivacyBudget, RngStream, SelectionConfig, StandardizePolicy, SweepGrid, SyntheticSpec,
};

use crate::args::{AlgorithmArg, MechanismArg, SelectArgs, StandardizeArg, SweepArgs, ValidateArgs};
use crate::config::{self, PhiEntry, Real};
use crate::error::CliError;

const INTERCEPT_NAME: &str = "(intercept)";

fn algorithm(a: AlgorithmArg) -> Algorithm {
    match a {
        AlgorithmArg::Pcls => Algorithm::Pcls,
        AlgorithmArg::Pcpl => Algorithm::Pcpl,
    }
}

fn mechanism(m: MechanismArg) -> Mechanism {
    match m {
        MechanismArg::NoisyArgmin => Mechanism::NoisyArgmin,
        MechanismArg::Exponential => Mechanism::Exponential,
    }
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing required setting --{flag}")))
}

fn read_table(path: &Path, response: &str) -> Result<RawTable, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(BufReader::new(file), response).map_err(|e| CliError::from_core(e, &[]))
}

fn write_output(out: Option<&PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    let res = match out {
        Some(p) => std::fs::write(p, bytes),
        None => std::io::stdout().write_all(bytes),
    };
    res.map_err(|e| CliError::Data(format!("cannot write output: {e}")))
}

/// Covariate names as seen by the models (intercept first when present).
fn model_names(table: &RawTable, intercept: bool) -> Vec<String> {
    let mut names = Vec::with_capacity(table.columns.len() + 1);
    if intercept {
        names.push(INTERCEPT_NAME.to_string());
    }
    names.extend(table.covariate_names.iter().cloned());
    names
}

fn parse_models(spec: &str) -> Result<ModelSpec, CliError> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read models file {path}: {e}")))?;
        let sets: Vec<Vec<usize>> = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("models file {path}: expected a JSON list of index lists: {e}"))
        })?;
        Ok(ModelSpec::Explicit(sets))
    } else {
        spec.parse().map_err(CliError::from)
    }
}

pub fn select(args: SelectArgs) -> Result<(), CliError> {
    let file = config::load(args.config.as_deref())?.select;
    let input = required(args.input.or(file.input), "input")?;
    let response = required(args.response.or(file.response), "response")?;
    let algo = algorithm(args.algorithm.or(file.algorithm).unwrap_or(AlgorithmArg::Pcls));
    let radius = required(args.radius.or(config::real(file.radius)), "R")?;
    let phi = required(args.phi.or(config::real(file.phi)), "phi")?;
    let epsilon = required(args.epsilon.or(config::real(file.epsilon)), "epsilon")?;
    let stage1 = args.stage1_epsilon.or(config::real(file.stage1_epsilon));
    let delta = args.delta.or(config::real(file.delta)).unwrap_or(match algo {
        Algorithm::Pcls => 0.0,
        Algorithm::Pcpl => 1e-4,
    });
    let r = args.r.or(config::real(file.r));
    let models = args.models.or(file.models).unwrap_or_else(|| "all-nonempty".into());
    let mech = mechanism(args.mechanism.or(file.mechanism).unwrap_or(MechanismArg::NoisyArgmin));
    let seed = args.seed.or(file.seed).unwrap_or_else(rand::random);
    let out = args.out.or(file.out);
    let debug_unsafe = args.debug_unsafe || file.debug_unsafe.unwrap_or(false);
    let intercept = !args.no_intercept && file.intercept.unwrap_or(true);
    let policy = args.standardize.or(file.standardize).unwrap_or(StandardizeArg::None);
    let x_ranges = if args.x_ranges.is_empty() {
        file.x_ranges
            .unwrap_or_default()
            .into_iter()
            .map(|(a, b)| (a.0, b.0))
            .collect()
    } else {
        args.x_ranges
    };
    let y_range = args.y_range.or(file.y_range.map(|(a, b)| (a.0, b.0)));

    // Check the cheap configuration before touching the data.
    let budget = PrivacyBudget::new(epsilon, delta)?;
    let spec = parse_models(&models)?;
    match algo {
        Algorithm::Pcls if delta != 0.0 => {
            return Err(CliError::Config("pcls is pure ε-DP; --delta must be 0".into()))
        }
        Algorithm::Pcpl if !(delta > 0.0) => {
            return Err(CliError::Config("pcpl needs --delta in (0, 1)".into()))
        }
        _ => {}
    }

    let table = read_table(&input, &response)?;
    let raw_names = table.covariate_names.clone();
    let data = match policy {
        StandardizeArg::None => match r {
            Some(r) => Dataset::new(table.columns.clone(), table.response.clone(), r),
            None => Dataset::with_observed_bound(table.columns.clone(), table.response.clone()),
        },
        StandardizeArg::Clip => standardize(&table.columns, &table.response, &StandardizePolicy::Clip { r }),
        StandardizeArg::Rescale => {
            let y_range = required(y_range, "y-range")?;
            standardize(
                &table.columns,
                &table.response,
                &StandardizePolicy::Rescale { x_ranges, y_range, r },
            )
        }
    }
    .map_err(|e| CliError::from_core(e, &raw_names))?;
    if data.r_is_data_dependent() {
        eprintln!(
            "warning: r = {} was taken from the data; pass --r for a privacy guarantee",
            data.r()
        );
    }
    let data = if intercept { data.with_intercept()? } else { data };
    let names = model_names(&table, intercept);
    let candidates = spec.build(data.d())?;

    let mut cfg = SelectionConfig::new(radius, phi, budget, data.r())?.with_mechanism(mech);
    if let Some(e1) = stage1 {
        cfg = cfg.with_stage1_epsilon(e1)?;
    }
    let rng = RngStream::from_seed(seed);
    let report = match algo {
        Algorithm::Pcls => pcls_select(&data, candidates.masks(), &cfg, &rng),
        Algorithm::Pcpl => pcpl_select(&data, candidates.masks(), &cfg, &rng),
    }
    .map_err(|e| CliError::from_core(e, &names))?;
    let report = if debug_unsafe { report } else { report.redacted() };

    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    write_output(out.as_ref(), &json)?;

    let chosen: Vec<&str> = report.chosen.indices().map(|j| names[j].as_str()).collect();
    let line = format!("chosen: {{{}}}", chosen.join(", "));
    if out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    if report.fallback_uniform {
        eprintln!("warning: sensitivity bound was not positive; the model was drawn uniformly");
    }
    if report.nonconverged_fits > 0 {
        eprintln!("warning: {} fits hit the iteration limit", report.nonconverged_fits);
    }
    Ok(())
}

/// Removes repeated values (keeping first occurrences), warning once per list.
fn dedup<T: PartialEq + Copy + std::fmt::Display>(values: Vec<T>, flag: &str) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(values.len());
    let mut dropped = Vec::new();
    for v in values {
        if out.contains(&v) {
            dropped.push(v.to_string());
        } else {
            out.push(v);
        }
    }
    if !dropped.is_empty() {
        eprintln!("warning: dropped duplicate --{flag} values: {}", dropped.join(", "));
    }
    out
}

fn reals(cli: Vec<f64>, file: Option<config::OneOrMany<Real>>) -> Option<Vec<f64>> {
    if !cli.is_empty() {
        Some(cli)
    } else {
        file.map(|v| v.into_vec().into_iter().map(|r| r.0).collect())
    }
}

fn phi_grid(cli: Vec<String>, file: Option<config::OneOrMany<PhiEntry>>) -> Result<PhiGrid, CliError> {
    let entries: Vec<PhiEntry> = if !cli.is_empty() {
        cli.into_iter()
            .map(|s| match crate::args::parse_real(&s) {
                Ok(v) => PhiEntry::Value(Real(v)),
                Err(_) => PhiEntry::Keyword(s),
            })
            .collect()
    } else {
        match file {
            Some(v) => v.into_vec(),
            None => return Ok(PhiGrid::Default),
        }
    };
    match entries.as_slice() {
        [PhiEntry::Keyword(k)] if k == "default" => Ok(PhiGrid::Default),
        _ => entries
            .into_iter()
            .map(|e| match e {
                PhiEntry::Value(v) => Ok(v.0),
                PhiEntry::Keyword(k) => Err(CliError::Config(format!(
                    "--phi takes numbers or the single keyword `default`, got {k:?}"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|v| PhiGrid::Explicit(dedup(v, "phi"))),
    }
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let file = config::load(args.config.as_deref())?.sweep;
    let algo = algorithm(args.algorithm.or(file.algorithm).unwrap_or(AlgorithmArg::Pcls));
    let mut grid = SweepGrid::new(algo);
    let model_id = args.model_id.or(file.model_id).unwrap_or(1);
    grid.model_id = model_id;
    let n = if args.n.is_empty() {
        file.n.map(|v| v.into_vec())
    } else {
        Some(args.n)
    };
    if let Some(n) = n {
        grid.n_values = dedup(n, "n");
    }
    if let Some(v) = reals(args.eps, file.eps) {
        grid.eps_values = dedup(v, "eps");
    }
    if let Some(v) = reals(args.radius, file.radius) {
        grid.radius_values = dedup(v, "R");
    }
    if let Some(v) = reals(args.delta, file.delta) {
        grid.delta_values = dedup(v, "delta");
    }
    grid.phi = phi_grid(args.phi, file.phi)?;
    if let Some(k) = args.replications.or(file.replications) {
        grid.replications = k;
    }
    if let Some(m) = args.mechanism.or(file.mechanism) {
        grid.mechanism = mechanism(m);
    }
    grid.timing = args.timing || file.timing.unwrap_or(false);
    let seed = args.seed.or(file.seed).unwrap_or(1);
    let out = args.out.or(file.out);

    let template = SyntheticSpec::preset(model_id, grid.n_values[0], RngStream::from_seed(seed))?;
    let result = run_sweep(&grid, &template)?;
    if result.nonconverged_fits() > 0 {
        eprintln!("warning: {} fits hit the iteration limit", result.nonconverged_fits());
    }

    let json = out
        .as_ref()
        .is_some_and(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")));
    let mut bytes = Vec::new();
    if json {
        bytes = serde_json::to_vec_pretty(&result).expect("sweep serializes");
        bytes.push(b'\n');
    } else {
        result.write_csv(&mut bytes)?;
    }
    write_output(out.as_ref(), &bytes)?;
    if out.is_some() {
        eprintln!("wrote {} rows", result.rows.len());
    }
    Ok(())
}

pub fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let file = config::load(args.config.as_deref())?.validate;
    let input = required(args.input.or(file.input), "input")?;
    let response = required(args.response.or(file.response), "response")?;
    let r = args.r.or(config::real(file.r));
    let intercept = !args.no_intercept && file.intercept.unwrap_or(true);

    let table = read_table(&input, &response)?;
    let data = match r {
        Some(r) => Dataset::new(table.columns.clone(), table.response.clone(), r),
        None => Dataset::with_observed_bound(table.columns.clone(), table.response.clone()),
    }
    .map_err(|e| CliError::from_core(e, &table.covariate_names))?;
    let data = if intercept { data.with_intercept()? } else { data };
    let names = model_names(&table, intercept);
    let max_size = args.max_size.or(file.max_size).unwrap_or(data.d());
    if max_size == 0 || max_size > data.d() {
        return Err(CliError::Config(format!(
            "--max-size must be in 1..={}, got {max_size}",
            data.d()
        )));
    }

    let kappa = sparse_min_eigenvalue(&data, max_size);
    println!("rows: {}", data.n());
    println!("covariates: {} ({})", data.d(), names.join(", "));
    println!(
        "response bound r: {} ({})",
        data.r(),
        if data.r_is_data_dependent() { "observed max |y|, not private" } else { "supplied" }
    );
    println!("bounds: ok");
    println!(
        "kappa0: {} ({} over {} supports of size {})",
        kappa.value,
        if kappa.exact { "exact" } else { "full-matrix lower bound" },
        kappa.masks_examined,
        kappa.max_size
    );
    println!(
        "R guidance: r * sqrt({} / kappa0) = {}",
        kappa.max_size,
        radius_guidance(data.r(), kappa.max_size, kappa.value)
    );
    Ok(())
}

