use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use structprox::data::reorder_columns;
use structprox::evaluation::{self, format_table, hyper_grid, log_grid, table_label};
use structprox::scalar::format_full;
use structprox::{
    fit_scaler, kfold_cv, reduce_parameters, screen_lambda_max, solver, CvConfig, Dataset,
    Error, GroupStructure, Hyperparameters, ParameterSet, Result, ScalingRecord, Selection, SyntheticSpec,
    Variant,
};

use crate::{CvArgs, DataArgs, FitArgs, GenerateArgs, PredictArgs, ScreenArgs};

fn load(a: &DataArgs) -> Result<(Dataset<f64>, GroupStructure<f64>)> {
    let d = Dataset::<f64>::read_csv(&a.genetic, &a.imaging, &a.labels)?;
    let gs = GroupStructure::read_file(&a.groups, d.n_genetic())?;
    Ok((d, gs))
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn write(path: impl AsRef<Path>, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let (d, gs) = load(&a.data)?;
    let h = Hyperparameters::new(a.lambda_w, a.lambda_i, a.lambda_g)
        .with_variant(a.variant)
        .with_eta(a.eta)
        .with_max_outer_iters(a.max_iters);
    h.validate()?;
    let start = Instant::now();
    let sr = fit_scaler(&d, a.data.normalization)?;
    let design = sr.design(&d, &gs)?;
    let (p, state) = solver::fit(&design, &gs, &h, None)?;
    let secs = start.elapsed().as_secs_f64();

    fs::create_dir_all(&a.out)?;
    write(a.out.join("model.txt"), &p.to_model_string(a.variant))?;
    write(a.out.join("scaler.txt"), &sr.to_text())?;
    write(a.out.join("groups.tsv"), &gs.to_file_string())?;

    let mut trace = String::from("iteration,risk,penalty,objective,stepsize,shrinks\n");
    for (t, v) in state.trace.iter().enumerate() {
        let (eps, shrinks) = match t.checked_sub(1).map(|i| state.steps[i]) {
            Some(s) => (format_full(s.stepsize), s.shrinks.to_string()),
            None => ("NA".into(), "NA".into()),
        };
        let _ = writeln!(
            trace,
            "{t},{},{},{},{eps},{shrinks}",
            format_full(v.risk),
            format_full(v.penalty),
            format_full(v.total)
        );
    }
    write(a.out.join("trace.csv"), &trace)?;

    let red = reduce_parameters(&p, &gs)?;
    write(a.out.join("reduced_w.csv"), &red.w_csv(&d.imaging_names, gs.names()))?;
    write(a.out.join("reduced_beta_i.csv"), &red.beta_i_csv(&d.imaging_names))?;
    write(a.out.join("reduced_beta_g.csv"), &red.beta_g_csv(gs.names()))?;

    let selected = p.active_groups(&gs);
    let names: Vec<&str> = selected.iter().map(|&l| gs.names()[l].as_str()).collect();
    let last = state.final_objective();
    let summary = format!(
        "variant = {}\nlambda_w = {}\nlambda_i = {}\nlambda_g = {}\niterations = {}\nconverged = {}\nstop_reason = {:?}\nobjective = {}\nrisk = {}\npenalty = {}\nselected_groups = {}\nselected_group_names = {}\nwall_time_s = {secs:.3}\n",
        a.variant,
        format_full(h.lambda_w),
        format_full(h.lambda_i),
        format_full(h.lambda_g),
        state.iterations,
        state.converged,
        state.stop_reason,
        format_full(last.total),
        format_full(last.risk),
        format_full(last.penalty),
        selected.len(),
        names.join(","),
    );
    write(a.out.join("summary.txt"), &summary)?;
    emit(&summary);
    Ok(())
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let dir = &a.model_dir;
    let (p, _) = ParameterSet::<f64>::parse_model(&fs::read_to_string(dir.join("model.txt"))?, "model.txt")?;
    let sr = ScalingRecord::<f64>::read_file(dir.join("scaler.txt"))?;
    let gs = GroupStructure::<f64>::read_file(dir.join("groups.tsv"), sr.n_genetic())?;
    if p.n_imaging() != sr.n_imaging() || p.expanded_size() != gs.expanded_size() {
        return Err(Error::InvalidInput(format!(
            "model has |I| = {}, expanded |G| = {} but scaler/groups give |I| = {}, expanded |G| = {}",
            p.n_imaging(),
            p.expanded_size(),
            sr.n_imaging(),
            gs.expanded_size()
        )));
    }
    let (gn, g) = structprox::data::read_matrix_csv::<f64>(&a.genetic)?;
    let (inames, i) = structprox::data::read_matrix_csv::<f64>(&a.imaging)?;
    let g = reorder_columns(g.view(), &gn, &sr.genetic_names, "genetic")?;
    let i = reorder_columns(i.view(), &inames, &sr.imaging_names, "imaging")?;
    let n = g.nrows();
    let d = Dataset::with_names(g, i, ndarray::Array1::zeros(n), sr.genetic_names.clone(), sr.imaging_names.clone())?;
    let probs = evaluation::predict_proba(&p, &sr, &gs, &d)?;
    let mut out = String::from("sample,probability,label\n");
    for (k, &q) in probs.iter().enumerate() {
        let _ = writeln!(out, "{k},{},{}", format_full(q), u8::from(q >= a.threshold));
    }
    write(&a.out, &out)
}

fn parse_values(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("grid '{spec}' is neither lo:hi:points nor a comma list"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        return log_grid(lo, hi, n);
    }
    let vals = spec
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    if vals.is_empty() || vals.iter().any(|&v| !(v > 0.0)) {
        return Err(bad());
    }
    Ok(vals)
}

fn parse_variants(spec: &str) -> Result<Vec<Variant>> {
    if spec.trim() == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    spec.split(',').map(|v| v.trim().parse::<Variant>()).collect()
}

pub fn cv(a: &CvArgs) -> Result<()> {
    let (d, gs) = load(&a.data)?;
    let values = parse_values(&a.grid)?;
    let variants = parse_variants(&a.variant)?;
    let selection = match a.selection.as_str() {
        "nested" => Selection::Nested { inner_folds: a.inner_folds },
        "oracle" => Selection::Oracle,
        other => return Err(Error::InvalidInput(format!("unknown selection '{other}' (nested|oracle)"))),
    };
    let cfg = CvConfig {
        folds: a.folds,
        seed: a.seed,
        selection,
        normalization: a.data.normalization,
        threshold: a.threshold,
    };
    fs::create_dir_all(&a.out)?;
    let mut rows = Vec::new();
    let mut mean_rows = String::from("variant,sen,spe,pre,bacc\n");
    for v in variants {
        let base = Hyperparameters::new(values[0], values[0], values[0])
            .with_variant(v)
            .with_eta(a.eta)
            .with_max_outer_iters(a.max_iters);
        let grid = hyper_grid(&base, &values, &values, &values);
        let r = kfold_cv(&d, &gs, &grid, &cfg)?;
        write(a.out.join(format!("folds_{v}.csv")), &r.folds_csv())?;
        write(a.out.join(format!("summary_{v}.csv")), &r.summary_csv())?;
        let m = r.mean;
        let _ = writeln!(
            mean_rows,
            "{v},{},{},{},{}",
            format_full(m.sen),
            format_full(m.spe),
            m.pre.map(format_full).unwrap_or_else(|| "NA".into()),
            format_full(m.bacc)
        );
        rows.push((table_label(v).to_string(), r.pooled));
    }
    let table = format_table(&rows);
    write(a.out.join("table.txt"), &table)?;
    write(a.out.join("fold_means.csv"), &mean_rows)?;
    emit(&table);
    Ok(())
}

pub fn screen(a: &ScreenArgs) -> Result<()> {
    let (d, gs) = load(&a.data)?;
    let sr = fit_scaler(&d, a.data.normalization)?;
    let design = sr.design(&d, &gs)?;
    let b = screen_lambda_max(&design, &gs)?;
    let mut out = format!(
        "lambda_g_max = {}\nlambda_w_max = {}\ngroup\tweight\tbeta_g_grad_norm\tw_grad_norm_max\n",
        format_full(b.lambda_g_max),
        format_full(b.lambda_w_max)
    );
    for (name, g) in gs.names().iter().zip(&b.per_group) {
        let _ = writeln!(
            out,
            "{name}\t{}\t{}\t{}",
            format_full(g.weight),
            format_full(g.beta_g_norm),
            format_full(g.w_norm_max)
        );
    }
    emit(&out);
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = if a.study_scale {
        SyntheticSpec::study_scale(a.seed)
    } else {
        SyntheticSpec {
            n_samples: a.samples,
            n_genetic: a.genetic_features,
            n_imaging: a.imaging_features,
            n_groups: a.n_groups,
            overlap: a.overlap,
            active_groups: a.active_groups,
            active_imaging: a.active_imaging,
            effect_w: a.effect_w,
            effect_i: a.effect_i,
            effect_g: a.effect_g,
            beta0: a.beta0,
            noise: a.noise,
            seed: a.seed,
            ..Default::default()
        }
    };
    let s = structprox::generate::<f64>(&spec)?;
    s.write(&a.out)?;
    let names: Vec<&str> = s.active_groups.iter().map(|&l| s.groups.names()[l].as_str()).collect();
    emit(&format!(
        "wrote {} samples, {} genetic, {} imaging, {} groups to {} (active groups: {})\n",
        s.dataset.n_samples(),
        s.dataset.n_genetic(),
        s.dataset.n_imaging(),
        s.groups.n_groups(),
        a.out.display(),
        names.join(",")
    ));
    Ok(())
}
