//! Subcommand bodies, kept free of clap so they take plain paths and a
//! [`RunConfig`] and return printable text. Exit-code policy lives in
//! [`CliError`]: input we cannot read or parse is code 2, input we can
//! parse but must reject is code 3.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use spectr_core::adapter::{align_library, AdapterLibrary, AlignedAdapter, LibraryMode};
use spectr_core::bundle::{inspect_bundle, load_bundle, save_bundle};
use spectr_core::linalg::Vector;
use spectr_core::router::{
    arrow_prototypes, arrow_scores, mu_weights, softmax_weights, spectr_scores, top_k,
    ArrowPrototypeMatrix, RouterKind, RoutingScores,
};
use spectr_core::synth::{
    adapter_cosine_matrix, eval_routing_accuracy, forge_library, gen_tasks, run_rank_sweep,
    ExpertForgeConfig, ForgeMode, SweepConfig,
};
use spectr_core::Error;

use crate::config::{RunConfig, WeightingKind};
use crate::CliError;

/// Formats a float with 6 significant digits, plain decimal notation, `.`
/// separator -- the contract for every number in CSV output.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    if !x.is_finite() {
        // Never expected in validated output; printed for diagnosability.
        return format!("{x}");
    }
    // The shortest scientific rendering carries an exact decimal exponent.
    let sci = format!("{:e}", x.abs());
    let exp: i32 = sci
        .split('e')
        .nth(1)
        .expect("scientific format")
        .parse()
        .expect("exponent");
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Percentage with 3 decimals: `0.44444.. -> "44.444"`.
fn pct3(x: f64) -> String {
    format!("{:.3}", 100.0 * x)
}

fn join_ranks(ranks: &[usize]) -> String {
    ranks
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Aligns a raw bundle and writes the aligned bundle next to a per-layer
/// singular-value summary (printed to standard output by the caller).
pub fn cmd_align(in_path: &Path, out_path: &Path) -> Result<String, CliError> {
    let raw = load_bundle(in_path).map_err(CliError::Engine)?;
    let aligned = align_library(&raw).map_err(CliError::Engine)?;
    save_bundle(&aligned, out_path).map_err(CliError::Engine)?;

    let mut out = String::new();
    for idx in 0..aligned.num_layers() {
        let experts = aligned.aligned_layer(idx).expect("aligned mode");
        let layer = &aligned.layers[idx];
        let mut sigma1 = (f64::INFINITY, f64::NEG_INFINITY);
        let mut sigma_last = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ranks = (usize::MAX, 0_usize);
        for e in &experts {
            let s1 = e.singular_values.first().map_or(0.0, |s| *s as f64);
            let sl = e.singular_values.last().map_or(0.0, |s| *s as f64);
            sigma1 = (sigma1.0.min(s1), sigma1.1.max(s1));
            sigma_last = (sigma_last.0.min(sl), sigma_last.1.max(sl));
            ranks = (ranks.0.min(e.rank()), ranks.1.max(e.rank()));
        }
        let rank_txt = if ranks.0 == ranks.1 {
            format!("rank {}", ranks.0)
        } else {
            format!("ranks {}..{}", ranks.0, ranks.1)
        };
        writeln!(
            out,
            "{}: {} experts, {}, sigma_1 in [{}, {}], sigma_r in [{}, {}]",
            layer.layer_id,
            experts.len(),
            rank_txt,
            sig6(sigma1.0),
            sig6(sigma1.1),
            sig6(sigma_last.0),
            sig6(sigma_last.1),
        )
        .expect("string write");
    }
    write!(
        out,
        "aligned {} -> {}",
        in_path.display(),
        out_path.display()
    )
    .expect("string write");
    Ok(out)
}

fn read_vectors(path: &Path, d_in: usize) -> Result<Vec<Vector<f32>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Input(format!("cannot read vector file `{}`: {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let values: Result<Vec<f32>, _> = line
            .split(',')
            .map(|field| field.trim().parse::<f32>())
            .collect();
        let values =
            values.map_err(|e| CliError::Input(format!("vector file line {}: {e}", idx + 1)))?;
        if values.len() != d_in {
            return Err(CliError::Input(format!(
                "vector file line {} has width {} but the bundle expects {}",
                idx + 1,
                values.len(),
                d_in
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Input(format!(
                "vector file line {} contains a non-finite value",
                idx + 1
            )));
        }
        out.push(Vector::new(values));
    }
    if out.is_empty() {
        return Err(CliError::Input(format!(
            "vector file `{}` contains no token vectors",
            path.display()
        )));
    }
    Ok(out)
}

fn layer_scores(
    router: RouterKind,
    experts: &[&AlignedAdapter<f32>],
    protos: Option<&ArrowPrototypeMatrix<f32>>,
    x: &Vector<f32>,
) -> Result<RoutingScores<f32>, Error> {
    match router {
        RouterKind::Mu => {
            let layer_id = experts
                .first()
                .map(|e| e.layer_id.clone())
                .unwrap_or_default();
            RoutingScores::new(layer_id, vec![1.0; experts.len()])
        }
        RouterKind::Arrow => arrow_scores(protos.expect("prototypes precomputed"), x),
        RouterKind::Spectr => spectr_scores(experts, x).map(|(s, _)| s),
    }
}

/// Scores every token in the vector file against every layer of an aligned
/// bundle and reports all scores plus the top-k decision as CSV.
pub fn cmd_route(bundle: &Path, vectors: &Path, cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate().map_err(CliError::Engine)?;
    let lib: AdapterLibrary<f32> = load_bundle(bundle).map_err(CliError::Engine)?;
    if lib.mode != LibraryMode::Aligned {
        return Err(CliError::Engine(Error::Validation(
            "routing needs an aligned bundle; run `spectr align` first".into(),
        )));
    }
    let views: Vec<Vec<&AlignedAdapter<f32>>> = (0..lib.num_layers())
        .map(|l| lib.aligned_layer(l).expect("mode checked above"))
        .collect();
    let t_count = lib.num_experts();
    if t_count == 0 {
        return Err(CliError::Engine(Error::Validation(
            "the bundle holds no experts".into(),
        )));
    }
    if cfg.k > t_count {
        return Err(CliError::Engine(Error::Parameter {
            name: "k",
            detail: format!("k = {} exceeds the bundle's {} experts", cfg.k, t_count),
        }));
    }
    let d_in = views[0][0].d_in();
    for v in &views {
        if v[0].d_in() != d_in {
            return Err(CliError::Engine(Error::Validation(format!(
                "layer `{}` expects width {} but layer `{}` expects {}; \
                 per-layer scoring of one token needs a uniform input width",
                v[0].layer_id,
                v[0].d_in(),
                views[0][0].layer_id,
                d_in
            ))));
        }
    }
    let tokens = read_vectors(vectors, d_in)?;

    let protos: Option<Vec<_>> = match cfg.router {
        RouterKind::Arrow => Some(
            views
                .iter()
                .map(|v| arrow_prototypes(v))
                .collect::<Result<_, _>>()
                .map_err(CliError::Engine)?,
        ),
        _ => None,
    };

    let mut out = String::from("token,layer,expert,score,selected,weight\n");
    for (token_idx, x) in tokens.iter().enumerate() {
        for (layer_idx, experts) in views.iter().enumerate() {
            let scores = layer_scores(
                cfg.router,
                experts,
                protos.as_ref().map(|p| &p[layer_idx]),
                x,
            )
            .map_err(CliError::Engine)?;
            let mut decision = match cfg.router {
                RouterKind::Mu => mu_weights::<f32>(t_count),
                _ => top_k(&scores, cfg.k),
            }
            .map_err(CliError::Engine)?;
            if cfg.weighting == WeightingKind::Softmax {
                decision = softmax_weights(&decision, &scores, cfg.temperature as f32)
                    .map_err(CliError::Engine)?;
            }
            for (t, expert) in experts.iter().enumerate() {
                let slot = decision.selected.iter().position(|&s| s == t);
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    token_idx,
                    expert.layer_id,
                    expert.expert_id,
                    sig6(scores.scores[t] as f64),
                    u8::from(slot.is_some()),
                    sig6(slot.map_or(0.0, |p| decision.weights[p] as f64)),
                )
                .expect("string write");
            }
        }
    }
    Ok(out)
}

/// Runs the full synthetic experiment: forge, align, evaluate the
/// configured router, sweep ranks, and measure adapter similarity. Writes
/// the three CSVs into `out_dir` and returns the summary text.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<String, CliError> {
    cfg.validate().map_err(CliError::Engine)?;
    fs::create_dir_all(out_dir).map_err(|e| {
        CliError::Input(format!(
            "cannot create output directory `{}`: {e}",
            out_dir.display()
        ))
    })?;

    let tasks = gen_tasks::<f64>(
        cfg.t_count,
        cfg.d,
        cfg.m,
        cfg.overlap_angle,
        cfg.noise_sigma,
        cfg.seed,
    )
    .map_err(CliError::Engine)?;
    let forge = ExpertForgeConfig {
        rank: cfg.rank,
        mode: ForgeMode::Analytic {
            spectrum: vec![1.0; cfg.rank],
        },
        left_seed: cfg.seed,
    };
    let lib = forge_library(&tasks, &forge, cfg.num_layers, cfg.seed)
        .and_then(|raw| align_library(&raw))
        .map_err(CliError::Engine)?;

    let metrics = eval_routing_accuracy(&lib, &tasks, cfg.router, cfg.k, cfg.n_per_task, cfg.seed)
        .map_err(CliError::Engine)?;
    let mut accuracy_csv = String::from("task_id,router,k,top1,topk,n\n");
    for tm in &metrics.per_task {
        writeln!(
            accuracy_csv,
            "{},{},{},{},{},{}",
            tm.task_id,
            cfg.router,
            cfg.k,
            sig6(tm.top1),
            sig6(tm.topk),
            tm.n
        )
        .expect("string write");
    }

    let sweep_rows = run_rank_sweep::<f64>(&SweepConfig {
        ranks: cfg.ranks.clone(),
        t_count: cfg.t_count,
        d: cfg.d,
        n_per_task: cfg.n_per_task,
        overlap_angle: cfg.overlap_angle,
        noise_sigma: cfg.noise_sigma,
        seed: cfg.seed,
    })
    .map_err(CliError::Engine)?;
    let mut sweep_csv = String::from("rank,router,mean_ratio,std_ratio,n\n");
    for row in &sweep_rows {
        writeln!(
            sweep_csv,
            "{},{},{},{},{}",
            row.rank,
            row.router,
            sig6(row.mean_ratio),
            sig6(row.std_ratio),
            row.n
        )
        .expect("string write");
    }

    let sim = adapter_cosine_matrix(&lib).map_err(CliError::Engine)?;
    let mut sim_csv = String::from("task_i,task_j,cosine\n");
    for (i, row) in sim.cosines.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            writeln!(
                sim_csv,
                "{},{},{}",
                sim.expert_ids[i],
                sim.expert_ids[j],
                sig6(c)
            )
            .expect("string write");
        }
    }

    let paths = [
        ("routing_accuracy.csv", accuracy_csv),
        ("rank_sweep.csv", sweep_csv),
        ("similarity.csv", sim_csv),
    ];
    for (name, content) in &paths {
        let path = out_dir.join(name);
        fs::write(&path, content)
            .map_err(|e| CliError::Input(format!("cannot write `{}`: {e}", path.display())))?;
    }

    let mut summary = String::new();
    writeln!(
        summary,
        "config: router={} k={} merge={} weighting={} temperature={} seed={}",
        cfg.router, cfg.k, cfg.merge, cfg.weighting, cfg.temperature, cfg.seed
    )
    .expect("string write");
    writeln!(
        summary,
        "tasks: T={} d={} m={} rank={} layers={} overlap_angle={:.4} noise_sigma={}",
        cfg.t_count, cfg.d, cfg.m, cfg.rank, cfg.num_layers, cfg.overlap_angle, cfg.noise_sigma
    )
    .expect("string write");
    writeln!(
        summary,
        "routing accuracy ({}, k={}): mean_top1={}% mean_topk={}% random_baseline={}%",
        cfg.router,
        cfg.k,
        pct3(metrics.mean_top1),
        pct3(metrics.mean_topk),
        pct3(metrics.random_baseline),
    )
    .expect("string write");
    writeln!(
        summary,
        "similarity: mean_off_diagonal_cosine={}",
        sig6(sim.mean_off_diagonal())
    )
    .expect("string write");
    writeln!(
        summary,
        "rank sweep: ranks={} rows={}",
        join_ranks(&cfg.ranks),
        sweep_rows.len()
    )
    .expect("string write");
    write!(
        summary,
        "wrote routing_accuracy.csv, rank_sweep.csv, similarity.csv to {}",
        out_dir.display()
    )
    .expect("string write");
    Ok(summary)
}

/// Prints a bundle's JSON header, tensor count, and payload size without
/// reading the payload.
pub fn cmd_inspect(bundle: &Path) -> Result<String, CliError> {
    let info = inspect_bundle(bundle).map_err(CliError::Engine)?;
    let json = serde_json::to_string_pretty(&info.header).expect("header serializes");
    Ok(format!(
        "{json}\ntensors: {}\npayload_bytes: {}",
        info.tensor_count, info.payload_bytes
    ))
}
