//! Implementations of the five subcommands.
//!
//! Configuration problems (unreadable files, bad lambda, grids outside the
//! theorem's window) surface as `Err(String)` and exit code 2. Per-row domain
//! violations inside an otherwise valid run become null cells plus a single
//! stderr warning, and the run still exits 0.

use std::path::Path;
use std::process::ExitCode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rectfree::mc::{estimate_classical_cumulant_c2, estimate_in, sample_sum_singular_law};
use rectfree::verify::{self, VerifyConfig};
use rectfree::{
    rect_cumulants, rect_free_convolve, DiscreteMeasure, MatrixModel, ScalarField,
    TransformContext,
};

use crate::table::{write_table, write_text, Cell, Format, Table};
use crate::{ConvolveArgs, CumulantArgs, IntegralArgs, TransformArgs, VerifyArgs};

fn load_measure(path: &Path) -> Result<DiscreteMeasure, String> {
    DiscreteMeasure::from_json_file(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn field_from_beta(beta: u8) -> Result<ScalarField, String> {
    match beta {
        1 => Ok(ScalarField::Real),
        2 => Ok(ScalarField::Complex),
        other => Err(format!("beta must be 1 or 2, got {other}")),
    }
}

fn warn_incomplete(table: &Table) {
    let bad = table.incomplete_rows();
    if bad > 0 {
        eprintln!(
            "warning: {bad} of {} rows contain out-of-domain cells (left null)",
            table.len()
        );
    }
}

/// Classical R-transform side of the corollary matching `C` at this lambda:
/// the symmetrized measure at `sqrt(z)` for lambda 1, the squared measure at
/// `z` for lambda 0.
fn corollary_r(ctx: &TransformContext, z: f64) -> Option<f64> {
    let t = if ctx.lambda() == 1.0 {
        if z < 0.0 {
            return None;
        }
        z.sqrt()
    } else {
        z
    };
    ctx.corollary_pair(t).ok().map(|(_, r)| r)
}

pub fn transform(args: &TransformArgs) -> Result<ExitCode, String> {
    let measure = load_measure(&args.measure)?;
    let ctx = TransformContext::new(measure, args.lambda, args.beta)
        .map_err(|e| e.to_string())?;
    let with_r = args.lambda == 0.0 || args.lambda == 1.0;

    let mut columns = vec!["z", "C", "H", "H_inv"];
    if with_r {
        columns.push("R");
    }
    let mut table = Table::new(columns);
    for z in args.z_grid.points() {
        let mut row = vec![
            Cell::num(z),
            Cell::opt(ctx.rect_r(z).ok()),
            Cell::opt(ctx.h(z).ok()),
            Cell::opt(ctx.h_inverse(z).ok()),
        ];
        if with_r {
            row.push(Cell::opt(corollary_r(&ctx, z)));
        }
        table.push(row);
    }
    warn_incomplete(&table);
    write_table(&table, args.out.format, args.out.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

pub fn integral(args: &IntegralArgs) -> Result<ExitCode, String> {
    let measure = load_measure(&args.measure)?;
    let ctx = TransformContext::new(measure, args.lambda, args.beta)
        .map_err(|e| e.to_string())?;
    let points = args.theta_grid.points();
    let bound = ctx.theta_bound();
    for &t in &points {
        if !(t.abs() < bound) {
            return Err(format!(
                "theta = {t} lies outside the open interval (-{bound}, {bound}) \
                 allowed by the measure's support bound"
            ));
        }
    }

    let mut table;
    if args.mc {
        let field = field_from_beta(args.beta)?;
        let model = MatrixModel::from_measure_quantiles(ctx.measure(), args.n, args.m, field)
            .map_err(|e| e.to_string())?;
        table = Table::new(vec!["theta", "I_hat", "std_error", "n", "m", "samples"]);
        for t in points {
            let est = estimate_in(&model, t, args.samples, args.seed)
                .map_err(|e| e.to_string())?;
            table.push(vec![
                Cell::num(t),
                Cell::num(est.value),
                Cell::num(est.std_error),
                Cell::Int(args.n as u64),
                Cell::Int(args.m as u64),
                Cell::Int(args.samples as u64),
            ]);
        }
    } else {
        table = Table::new(vec!["theta", "I_quadrature", "I_closed_form", "discrepancy"]);
        for t in points {
            let quad = ctx.limit_integral(t).ok();
            let closed = ctx.closed_form_integral(t).ok();
            let gap = quad.zip(closed).map(|(a, b)| (a - b).abs());
            table.push(vec![
                Cell::num(t),
                Cell::opt(quad),
                Cell::opt(closed),
                Cell::opt(gap),
            ]);
        }
    }
    warn_incomplete(&table);
    write_table(&table, args.out.format, args.out.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

pub fn convolve(args: &ConvolveArgs) -> Result<ExitCode, String> {
    if args.measure.len() != 2 {
        return Err(format!(
            "convolve needs exactly two --measure flags, got {}",
            args.measure.len()
        ));
    }
    let mu = load_measure(&args.measure[0])?;
    let nu = load_measure(&args.measure[1])?;
    if args.order == 0 {
        return Err("order must be at least 1".into());
    }
    let predicted =
        rect_free_convolve(&mu, &nu, args.lambda, args.order).map_err(|e| e.to_string())?;

    let empirical = if args.mc_check {
        let field = field_from_beta(args.beta)?;
        if args.samples == 0 {
            return Err("--mc-check needs at least one realization".into());
        }
        let a_vals: Vec<f64> =
            (0..args.n).map(|i| mu.quantile((i as f64 + 0.5) / args.n as f64)).collect();
        let b_vals: Vec<f64> =
            (0..args.n).map(|i| nu.quantile((i as f64 + 0.5) / args.n as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let mut sums = vec![0.0; args.order];
        for _ in 0..args.samples {
            let law = sample_sum_singular_law(&a_vals, &b_vals, args.n, args.m, field, &mut rng)
                .map_err(|e| e.to_string())?;
            for (k, slot) in sums.iter_mut().enumerate() {
                *slot += law.moment(2 * (k as u32 + 1));
            }
        }
        Some(sums.into_iter().map(|s| s / args.samples as f64).collect::<Vec<f64>>())
    } else {
        None
    };

    let mut columns = vec!["k", "moment"];
    if empirical.is_some() {
        columns.push("moment_mc");
        columns.push("rel_error");
    }
    let mut table = Table::new(columns);
    for (idx, &p) in predicted.iter().enumerate() {
        let mut row = vec![Cell::Int(idx as u64 + 1), Cell::num(p)];
        if let Some(emp) = &empirical {
            let e = emp[idx];
            let err = if p != 0.0 { (e - p).abs() / p.abs() } else { (e - p).abs() };
            row.push(Cell::num(e));
            row.push(Cell::num(err));
        }
        table.push(row);
    }
    write_table(&table, args.out.format, args.out.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

pub fn cumulant(args: &CumulantArgs) -> Result<ExitCode, String> {
    let measure = load_measure(&args.measure)?;
    if args.order == 0 {
        return Err("order must be at least 1".into());
    }
    let cumulants =
        rect_cumulants(&measure, args.lambda, args.order).map_err(|e| e.to_string())?;

    let estimate = if args.mc {
        let field = field_from_beta(args.beta)?;
        let model = MatrixModel::from_measure_quantiles(&measure, args.n, args.m, field)
            .map_err(|e| e.to_string())?;
        Some(
            estimate_classical_cumulant_c2(&model, args.samples, args.seed)
                .map_err(|e| e.to_string())?,
        )
    } else {
        None
    };

    let mut columns = vec!["k", "c_2k"];
    if estimate.is_some() {
        columns.push("c2_estimate");
        columns.push("std_error");
    }
    let mut table = Table::new(columns);
    for (idx, &c) in cumulants.iter().enumerate() {
        let mut row = vec![Cell::Int(idx as u64 + 1), Cell::num(c)];
        if let Some(est) = &estimate {
            if idx == 0 {
                row.push(Cell::num(est.value));
                row.push(Cell::num(est.std_error));
            } else {
                row.push(Cell::Null);
                row.push(Cell::Null);
            }
        }
        table.push(row);
    }
    write_table(&table, args.out.format, args.out.output.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: &VerifyArgs) -> Result<ExitCode, String> {
    let config = VerifyConfig {
        tolerance_scale: args.tolerance_scale,
        criteria: if args.criteria.is_empty() { None } else { Some(args.criteria.clone()) },
    };
    let report = verify::run(&config).map_err(|e| e.to_string())?;

    let json_to_stdout = args.out.format == Format::Json && args.out.output.is_none();
    if !json_to_stdout {
        for c in &report.criteria {
            let status = if c.passed { "PASS" } else { "FAIL" };
            println!(
                "criterion {:2} ({}): {} worst error {:.3e} vs tolerance {:.3e} [{}]",
                c.id, c.name, status, c.worst_error, c.tolerance, c.detail
            );
        }
        let passed = report.criteria.iter().filter(|c| c.passed).count();
        let verdict = if report.passed { "passed" } else { "FAILED" };
        println!("verification {verdict}: {passed}/{} criteria", report.criteria.len());
    }

    match args.out.format {
        Format::Json => {
            let mut text =
                serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            text.push('\n');
            write_text(&text, args.out.output.as_deref())?;
        }
        Format::Csv => {
            if let Some(path) = args.out.output.as_deref() {
                let mut table = Table::new(vec![
                    "id",
                    "name",
                    "passed",
                    "worst_error",
                    "tolerance",
                    "detail",
                ]);
                for c in &report.criteria {
                    table.push(vec![
                        Cell::Int(c.id as u64),
                        Cell::Text(c.name.clone()),
                        Cell::Int(c.passed as u64),
                        Cell::num(c.worst_error),
                        Cell::num(c.tolerance),
                        Cell::Text(c.detail.replace(',', ";")),
                    ]);
                }
                write_table(&table, Format::Csv, Some(path))?;
            }
        }
    }

    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
