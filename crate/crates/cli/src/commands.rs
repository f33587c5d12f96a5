use crate::bench::{header as bench_header, run_plan, BenchPlan};
use crate::config::{RunConfig, BENCH_KEYS};
use crate::report::{expansion_curves, group_medians, load_all, Table};
use crate::CliError;
use dpagg_core::accountant::{
    continuous_curve, degraded_guarantee, discrete_curve, to_eps_delta, DpConfig, RdpCurve,
};
use dpagg_core::codec::{
    decode_sum, encode, quantize, sidecar_path, CodecConfig, GradientFileWriter, SCALE,
};
use dpagg_core::fedsim::{
    ingest_gradients, synthetic, train as run_training, Aggregator, Dataset, GradientSource,
    LocalModel, Model, ModelKind, SecureAggregation, TrainingConfig,
};
use dpagg_core::field::PrimeFieldCtx;
use dpagg_core::lwe::{max_clients_for_modulus, LweParams, LwePreset, NOISE_MARGIN};
use dpagg_core::protocol::{
    measure_transcript, run_masking_aggregation, AdversarySpec, CommunicationReport, DropoutRound,
    MatrixMode, ProtocolConfig, Routing, SecurityMode,
};
use dpagg_core::sampler::{derive_seed, ChiWidth, Prg};
use rand::Rng;
use std::fs;
use std::io::Write;
use std::path::Path;

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    create_parent(path)?;
    let table = Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: rows.into_iter().collect(),
    };
    table.write(path)
}

pub fn adversary_from(
    cfg: &RunConfig,
    dropout_key: Option<&str>,
) -> Result<AdversarySpec, CliError> {
    let mut spec: AdversarySpec = cfg.get("adversary")?;
    if let Some(key) = dropout_key {
        let f: f64 = cfg.get(key)?;
        if f > 0.0 {
            spec = spec.with_dropouts(f, cfg.get::<DropoutRound>("dropout_round")?);
        }
    }
    Ok(spec)
}

pub fn aggregate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let k: usize = cfg.get("clients")?;
    let m: usize = cfg.get("dim")?;
    let preset: LwePreset = cfg.get("lwe_preset")?;
    let adversary = adversary_from(cfg, Some("dropout"))?;
    let mut lwe = LweParams::preset(preset, m);
    if cfg.flag("zero_error")? {
        lwe = lwe.with_zero_error_for_testing();
    }
    let mut proto =
        ProtocolConfig::for_clients(k, lwe, cfg.get::<SecurityMode>("mode")?, &adversary)?
            .with_routing(cfg.get::<Routing>("routing")?)
            .with_parallel(cfg.flag("parallel")?);
    if cfg.flag("streamed")? {
        proto = proto.with_matrix(MatrixMode::Streamed);
    }
    let field = proto.lwe.field()?;

    let mut rng = Prg::new(derive_seed(&seed, "aggregate-inputs", 0), 0);
    let reals: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let inputs = reals
        .iter()
        .map(|g| Ok(encode(g, &field)?.elements))
        .collect::<Result<Vec<_>, CliError>>()?;
    let outcome = run_masking_aggregation(&inputs, &proto, &adversary, &seed)?;
    let report = measure_transcript(&outcome);

    writeln!(
        out,
        "k = {k}, m = {m}, n = {}, q = {}, t = {}, p = {}",
        proto.lwe.n,
        proto.lwe.q,
        proto.sagg.sharing.t(),
        proto.sagg.sharing.p()
    )?;
    writeln!(out, "adversary: {adversary}")?;
    writeln!(
        out,
        "U1 = {} clients, U2 = {} clients",
        outcome.state.u1.len(),
        outcome.state.u2.len()
    )?;
    writeln!(
        out,
        "client bytes (max) = {}, server bytes = {}, expansion = {:.4}",
        report.client_bytes, report.server_bytes, report.expansion
    )?;
    writeln!(
        out,
        "client ms (mean) = {:.3}, server ms = {:.3}",
        report.client_ms, report.server_ms
    )?;
    if let Ok(sum) = &outcome.result {
        let u2 = outcome.participants();
        let noise_sd = proto.lwe.sigma_chi() * (u2.len() as f64).sqrt() / SCALE;
        let decoded = decode_sum(
            sum,
            u2.len(),
            &CodecConfig {
                clip_c: f64::INFINITY,
                noise_sd,
            },
            &field,
        )?;
        let max_err = (0..m)
            .map(|j| {
                let plain: f64 = u2
                    .iter()
                    .map(|&i| quantize(reals[i][j]).0 as f64 / SCALE)
                    .sum();
                (decoded[j] - plain).abs()
            })
            .fold(0.0, f64::max);
        writeln!(out, "max |decoded - plaintext sum over U2| = {max_err:.3e}")?;
    }
    writeln!(out, "outcome: {}", report.outcome)?;
    if let Some(path) = cfg.output_path("report") {
        write_csv(
            &path,
            &CommunicationReport::CSV_HEADER,
            [report.csv_record()],
        )?;
    }
    match outcome.result {
        Ok(_) => Ok(()),
        Err(reason) => Err(CliError::Abort(reason.to_string())),
    }
}

pub fn bench_plan(cfg: &RunConfig) -> Result<BenchPlan, CliError> {
    let paper_scale = cfg.flag("paper_scale")?;
    let default_of = |key: &str| BENCH_KEYS.iter().find(|k| k.name == key).map(|k| k.default);
    let untouched = |key: &str| Some(cfg.str(key)) == default_of(key);
    let mut plan = BenchPlan {
        clients: cfg.list("clients")?,
        dims: cfg.list("dims")?,
        dropouts: cfg.list("dropouts")?,
        dropout_round: cfg.get("dropout_round")?,
        presets: cfg.list("presets")?,
        modes: cfg.list("modes")?,
        reps: cfg.get("reps")?,
        paper_scale,
    };
    if paper_scale {
        if untouched("clients") {
            plan.clients = vec![100, 500, 1000];
        }
        if untouched("dims") {
            plan.dims = vec![100_000];
        }
        if untouched("presets") {
            plan.presets = vec![LwePreset::C];
        }
    }
    Ok(plan)
}

pub fn bench(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let plan = bench_plan(cfg)?;
    let seed = cfg.seed()?;
    let rows = run_plan(&plan, &seed, |c, rep| {
        log::info!(
            "k = {}, m = {}, dropout = {}, preset {}, {}, rep {rep}",
            c.k,
            c.m,
            c.dropout,
            c.preset,
            c.mode
        )
    })?;
    let path = cfg.output_path("output").expect("output has a default");
    write_csv(&path, &bench_header(), rows.iter().map(|r| r.record()))?;
    writeln!(out, "{} rows written to {}", rows.len(), path.display())?;
    Ok(())
}

pub fn params(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let beta_q: f64 = cfg.get("beta_q")?;
    let width = match cfg.str("chi_width") {
        "over-sqrt-2pi" => ChiWidth::WidthOverSqrtTwoPi,
        "std-dev" => ChiWidth::WidthIsStdDev,
        other => {
            return Err(CliError::Config(format!(
                "chi_width = {other:?} (over-sqrt-2pi, std-dev)"
            )))
        }
    };
    let lwe = match (cfg.optional("n"), cfg.optional("q")) {
        (None, None) => {
            let mut p = LweParams::preset(cfg.get("preset")?, 1);
            p.beta_q = beta_q;
            p
        }
        (Some(_), Some(_)) => LweParams::new(cfg.get("n")?, cfg.get("q")?, beta_q, 1)?,
        _ => {
            return Err(CliError::Config(
                "custom parameters need both n and q".into(),
            ))
        }
    }
    .with_chi_width(width);
    lwe.chi()?;
    let field = PrimeFieldCtx::new(lwe.q)?;
    writeln!(out, "n = {}", lwe.n)?;
    writeln!(out, "q = {}", lwe.q)?;
    writeln!(out, "beta_q = {}", lwe.beta_q)?;
    writeln!(out, "sigma_chi = {:.6}", lwe.sigma_chi())?;
    writeln!(out, "two_adicity = {}", field.two_adicity())?;
    writeln!(
        out,
        "max_clients = {} (floor((q - {NOISE_MARGIN}) / 2^16))",
        max_clients_for_modulus(lwe.q)
    )?;
    writeln!(
        out,
        "note: concrete security is not estimated here; use an external LWE estimator"
    )?;
    Ok(())
}

pub fn accountant(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let dp = DpConfig {
        sigma: cfg.get("sigma")?,
        clip_c: cfg.get("clip")?,
        batch_size: cfg.get("batch")?,
        epochs: cfg.get("epochs")?,
        delta: cfg.get("delta")?,
        dimension: cfg.get("dim")?,
        honest_fraction: cfg.get("honest_fraction")?,
    };
    dp.validate()?;
    let mut curves: Vec<(&str, RdpCurve)> = vec![
        ("continuous", continuous_curve(&dp)?),
        ("discrete", discrete_curve(&dp)?),
    ];
    if dp.honest_fraction < 1.0 {
        curves.push(("degraded", degraded_guarantee(&dp)?));
    }
    let mut headline = None;
    for (name, curve) in &curves {
        let (eps, alpha) = to_eps_delta(curve, dp.delta)?;
        writeln!(out, "epsilon_{name} = {eps:.6} (alpha* = {alpha})")?;
        let chosen = match (*name, cfg.flag("discrete")?, dp.honest_fraction < 1.0) {
            ("degraded", _, true) => true,
            ("discrete", true, false) => true,
            ("continuous", false, false) => true,
            _ => false,
        };
        if chosen {
            headline = Some((eps, alpha));
        }
    }
    let (eps, alpha) = headline.expect("one curve is always selected");
    writeln!(
        out,
        "epsilon = {eps:.6}, alpha* = {alpha}, delta = {}",
        dp.delta
    )?;

    let mut header = vec!["alpha".to_string()];
    header.extend(curves.iter().map(|(n, _)| format!("rdp_{n}")));
    let rows: Vec<Vec<String>> = (0..curves[0].1.points.len())
        .map(|i| {
            let mut r = vec![curves[0].1.points[i].0.to_string()];
            r.extend(curves.iter().map(|(_, c)| format!("{:.9e}", c.points[i].1)));
            r
        })
        .collect();
    match cfg.output_path("curves") {
        Some(path) => {
            create_parent(&path)?;
            Table { header, rows }.write(&path)?;
            writeln!(out, "curves written to {}", path.display())?;
        }
        None => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(&header)
                .map_err(|e| CliError::Io(e.to_string()))?;
            for r in rows {
                w.write_record(&r)
                    .map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Rows of `x_1, ..., x_d, label`; a first row that does not parse as
/// numbers is taken as a header.
pub fn load_csv_dataset(path: &Path) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let nums: Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        let nums = match nums {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => {
                return Err(CliError::Config(format!(
                    "{} row {}: {e}",
                    path.display(),
                    i + 1
                )))
            }
        };
        let (label, x) = nums
            .split_last()
            .ok_or_else(|| CliError::Config(format!("{} row {}: empty", path.display(), i + 1)))?;
        if *label != 0.0 && *label != 1.0 {
            return Err(CliError::Config(format!(
                "{} row {}: label {label} is not 0 or 1",
                path.display(),
                i + 1
            )));
        }
        features.push(x.to_vec());
        labels.push(*label as u8);
    }
    Ok(Dataset::new(features, labels)?)
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let tc = TrainingConfig {
        batch_size: cfg.get("batch")?,
        epochs: cfg.get("epochs")?,
        learning_rate: cfg.get("learning_rate")?,
        momentum: cfg.get("momentum")?,
        clip_c: cfg.get("clip")?,
        sigma: cfg.get("sigma")?,
        delta: cfg.get("delta")?,
        seed: derive_seed(&seed, "train", 0),
    };
    tc.validate()?;
    let aggregator = match cfg.str("aggregator") {
        "plain" | "plaintext" => Aggregator::Plaintext,
        "secure" => Aggregator::Secure(SecureAggregation {
            lwe: LweParams::preset(cfg.get("lwe_preset")?, 1),
            mode: cfg.get("mode")?,
            routing: Routing::ServerAssisted,
            adversary: adversary_from(cfg, None)?,
        }),
        other => {
            return Err(CliError::Config(format!(
                "aggregator = {other:?} (secure, plain)"
            )))
        }
    };

    let model: ModelKind = cfg.get("model")?;
    let mut held_out = None;
    let (mut source, init, shapes): (Box<dyn GradientSource>, Vec<f64>, _) =
        match cfg.optional("gradients") {
            Some(path) => {
                let src = ingest_gradients(Path::new(path))?;
                let shapes = src.manifest().cloned();
                let m = src.dim();
                (Box::new(src), vec![0.0; m], shapes)
            }
            None => {
                let data = match cfg.str("data") {
                    "synthetic" => synthetic(
                        cfg.get("examples")?,
                        cfg.get("features")?,
                        cfg.get("margin")?,
                        &derive_seed(&seed, "data", 0),
                    ),
                    path => load_csv_dataset(Path::new(path))?,
                };
                let (train_set, val) = data.split(cfg.get("validation")?);
                let model = Model::new(model, train_set.dim());
                let init = model.init(&mut Prg::new(derive_seed(&seed, "init", 0), 0));
                held_out = Some((model, val));
                let shapes = Some(model.shapes());
                (
                    Box::new(LocalModel::new(
                        model,
                        train_set,
                        derive_seed(&seed, "order", 0),
                    )?),
                    init,
                    shapes,
                )
            }
        };

    let mut dump = match cfg.output_path("dump_gradients") {
        Some(path) => {
            create_parent(&path)?;
            let per_epoch = source.examples() / tc.batch_size * tc.batch_size;
            if let Some(s) = &shapes {
                fs::write(sidecar_path(&path), s.to_text())?;
            }
            Some(GradientFileWriter::create(
                &path,
                source.dim(),
                per_epoch * tc.epochs,
            )?)
        }
        None => None,
    };
    let mut write_batch = |batch: &[Vec<f64>]| -> Result<(), dpagg_core::fedsim::FedsimError> {
        if let Some(w) = dump.as_mut() {
            for g in batch {
                w.write_record(&g.iter().map(|&x| x as f32).collect::<Vec<_>>())?;
            }
        }
        Ok(())
    };
    let validation = held_out.as_ref().map(|(m, d)| (m, d));
    let run = run_training(
        &tc,
        source.as_mut(),
        init,
        validation,
        &aggregator,
        Some(&mut write_batch),
    )?;
    if let Some(w) = dump {
        w.finish()?;
    }

    let path = cfg.output_path("metrics").expect("metrics has a default");
    write_csv(
        &path,
        &dpagg_core::fedsim::EpochMetrics::CSV_HEADER,
        run.metrics.iter().map(|m| m.csv_record()),
    )?;
    let last = run.metrics.last().expect("at least one epoch");
    writeln!(
        out,
        "epochs = {}, released batches = {}, aborts = {}, clamped = {}",
        tc.epochs, run.released, run.aborts, run.clamped
    )?;
    writeln!(out, "accuracy = {:.4}", last.accuracy)?;
    writeln!(
        out,
        "epsilon continuous = {:.4}, discrete = {:.4} (delta = {})",
        last.eps_continuous, last.eps_discrete, tc.delta
    )?;
    writeln!(out, "metrics written to {}", path.display())?;
    Ok(())
}

pub fn report(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let inputs: Vec<String> = cfg.list("inputs")?;
    let paths: Vec<&Path> = inputs.iter().map(Path::new).collect();
    let merged = load_all(&paths)?;
    let grouped = group_medians(&merged)?;
    let path = cfg.output_path("output").expect("output has a default");
    create_parent(&path)?;
    grouped.write(&path)?;
    writeln!(
        out,
        "{} input rows, {} grouped rows written to {}",
        merged.rows.len(),
        grouped.rows.len(),
        path.display()
    )?;
    if let Some(curves) = cfg.output_path("curves") {
        create_parent(&curves)?;
        expansion_curves(&grouped)?.write(&curves)?;
        writeln!(out, "expansion curves written to {}", curves.display())?;
    }
    Ok(())
}
