use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use rolestab_core::features::{
    build_ufs, normalize, BuildOptions, ContextAxis, FeatureMetadata, FeatureTable, Normalization, PairMetadata,
    ViewAxis,
};
use rolestab_core::ingest::{self, parse_checkins, ColumnSchema, HomeConfig, ParseOptions, RootCategoryMap};
use rolestab_core::kmeans::{elbow_curve, kmeans_pp, pick_elbow, ElbowCurve, LloydConfig};
use rolestab_core::quality::{breakdown, Partition};
use rolestab_core::report::{compare_runs, comparison_svg, elbow_svg, partition_of, role_names};
use rolestab_core::stabilize::{OrderPolicy, ReferenceMode, StabilizeConfig};
use rolestab_core::{seed, stabilize, testkit, Error};
use serde::{Deserialize, Serialize};

use crate::manifest::Run;
use crate::{
    BlobArgs, CheckinArgs, ClusterArgs, ElbowArgs, Failure, FeaturizeArgs, IngestArgs, Normalize, Order, Reference,
    ReportArgs, Schema, StabilizeArgs, StabilizeCmdArgs,
};

type CmdResult = Result<(), Failure>;

fn require(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> rolestab_core::Result<()>) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn read_table(run: &mut Run, path: &Path) -> anyhow::Result<FeatureTable> {
    let bytes = run.read(path)?;
    Ok(FeatureTable::read_csv(&bytes[..], path)?)
}

pub fn ingest(a: &IngestArgs) -> CmdResult {
    require(&a.input)?;
    let mut run = Run::start("ingest", a, &a.out_dir)?;
    let bytes = run.read(&a.input)?;
    let schema = match a.schema {
        Schema::Auto => ColumnSchema::Auto,
        Schema::WithOffset => ColumnSchema::WithOffset,
        Schema::WithoutOffset => ColumnSchema::WithoutOffset,
    };
    let parsed = parse_checkins(&bytes[..], ParseOptions { schema, strict: a.strict })
        .with_context(|| format!("parsing {}", a.input.display()))?;
    log::info!("{} rows accepted, {} rejected", parsed.stats.accepted, parsed.stats.rejected);
    run.write("checkins.tsv", &csv_bytes(|w| ingest::write_tsv(w, &parsed.checkins))?)?;
    run.write("checkins.ndjson", &csv_bytes(|w| ingest::write_canonical(w, &parsed.checkins))?)?;
    run.write_json("ingest_stats.json", &parsed.stats)?;
    run.finish()?;
    Ok(())
}

pub fn featurize(a: &FeaturizeArgs) -> CmdResult {
    require(&a.input)?;
    require(&a.root_map)?;
    if a.night_start > 23 || a.night_end > 23 {
        return Err(Failure::Usage("night hours must lie in 0..=23".into()));
    }
    let mut run = Run::start("featurize", a, &a.out_dir)?;
    let map_bytes = run.read(&a.root_map)?;
    let map = RootCategoryMap::from_json(&map_bytes[..]).with_context(|| format!("reading {}", a.root_map.display()))?;
    let bytes = run.read(&a.input)?;
    let checkins = parse_checkins(&bytes[..], ParseOptions::default())
        .with_context(|| format!("parsing {}", a.input.display()))?
        .checkins;
    let homes = ingest::infer_homes(
        &checkins,
        &HomeConfig { night_start: a.night_start, night_end: a.night_end, ..HomeConfig::default() },
    );
    let set = build_ufs(
        &checkins,
        &[ContextAxis::hour(), ContextAxis::home_distance()],
        &[ViewAxis::root_category(&map)],
        &map,
        &homes,
        BuildOptions { strict: a.strict },
    )?;
    let mode = match a.normalize {
        Normalize::None => Normalization::None,
        Normalize::L1 => Normalization::L1Global,
    };
    let mut pairs = Vec::new();
    for (i, pair) in set.pairs.iter().enumerate() {
        let file = format!("{}.csv", pair.name());
        let table = set.table(i, mode);
        run.write(&file, &csv_bytes(|w| table.write_csv(w))?)?;
        pairs.push(PairMetadata {
            name: pair.name(),
            file,
            context: pair.context.clone(),
            view: pair.view.clone(),
            rows: pair.context.len(),
            cols: pair.view.len(),
            zero_matrices: set.matrices[i].iter().filter(|m| normalize(m, mode).1).count(),
        });
    }
    let meta = FeatureMetadata {
        normalization: mode,
        user_count: set.users.len(),
        checkin_count: checkins.len(),
        skipped_checkins: set.skipped,
        pairs,
    };
    run.write_json("features.json", &meta)?;
    run.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct ElbowFile<'a> {
    chosen_k: usize,
    curve: &'a ElbowCurve,
}

pub fn elbow(a: &ElbowArgs) -> CmdResult {
    require(&a.features)?;
    if a.k_min == 0 || a.k_max < a.k_min + 2 {
        return Err(Failure::Usage("need 1 <= k-min and at least three k values".into()));
    }
    let mut run = Run::start("elbow", a, &a.out_dir)?;
    run.seed("elbow", a.seed);
    let table = read_table(&mut run, &a.features)?;
    let curve = elbow_curve(&table.rows, a.k_min..=a.k_max, a.repeats, a.seed, LloydConfig::default())?;
    let chosen_k = pick_elbow(&curve)?;
    log::info!("elbow at k = {chosen_k}");
    run.write("elbow.csv", &csv_bytes(|w| curve.write_csv(w))?)?;
    run.write("elbow.svg", elbow_svg(&curve, Some(chosen_k)).as_bytes())?;
    run.write_json("elbow.json", &ElbowFile { chosen_k, curve: &curve })?;
    run.finish()?;
    Ok(())
}

/// `model.json`: a clustering with assignments keyed by user id.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    k: usize,
    seed: u64,
    rmse: f64,
    iterations: usize,
    roles: Vec<String>,
    columns: Vec<String>,
    centroids: Vec<Vec<f64>>,
    sizes: Vec<usize>,
    assignments: BTreeMap<String, String>,
    objective_trace: Vec<f64>,
}

pub fn cluster(a: &ClusterArgs) -> CmdResult {
    require(&a.features)?;
    let mut run = Run::start("cluster", a, &a.out_dir)?;
    let table = read_table(&mut run, &a.features)?;
    let kseed = seed::derive(a.seed, "cluster", 0);
    run.seed("kmeans", kseed);
    let model = kmeans_pp(&table.rows, a.k, kseed, LloydConfig::default())?;
    let partition = partition_of(&table, &model)?;
    let file = ModelFile {
        k: model.k,
        seed: kseed,
        rmse: model.rmse,
        iterations: model.iterations,
        roles: partition.roles().to_vec(),
        columns: table.columns.clone(),
        centroids: model.centroids.clone(),
        sizes: model.cluster_sizes(),
        assignments: partition.labels(),
        objective_trace: model.objective_trace.clone(),
    };
    run.write_json("model.json", &file)?;
    let sil = breakdown(&partition)?;
    run.write("silhouette.csv", &csv_bytes(|w| sil.write_csv(w))?)?;
    run.write_json("silhouette.json", &sil)?;
    run.finish()?;
    Ok(())
}

fn stabilize_config(p: &StabilizeArgs, users: usize, seed: u64) -> Result<StabilizeConfig, Failure> {
    let cfg = StabilizeConfig {
        alpha: p.alpha,
        beta: p.beta,
        gamma: p.gamma,
        max_rounds: p.max_rounds,
        order: match p.order {
            Order::Sorted => OrderPolicy::Sorted,
            Order::Shuffle => OrderPolicy::Shuffle,
        },
        reference: match p.reference {
            Reference::Snapshot => ReferenceMode::Snapshot,
            Reference::Incremental => ReferenceMode::Incremental,
        },
        seed,
        ..StabilizeConfig::default()
    }
    .with_delta_frac(users, p.delta_frac);
    cfg.validate()?;
    Ok(cfg)
}

fn model_partition(table: &FeatureTable, model: &ModelFile, path: &Path) -> anyhow::Result<Partition> {
    let schema = |reason: String| Error::Schema { path: path.to_path_buf(), reason };
    if model.columns != table.columns {
        return Err(schema("field \"columns\" does not match the feature table header".into()).into());
    }
    if model.roles.len() != model.k {
        return Err(schema(format!("field \"roles\" has {} entries for k = {}", model.roles.len(), model.k)).into());
    }
    let mut assignment = Vec::with_capacity(table.len());
    for u in &table.user_ids {
        let role = model
            .assignments
            .get(u)
            .ok_or_else(|| schema(format!("field \"assignments\" has no entry for user {u:?}")))?;
        let r = model
            .roles
            .iter()
            .position(|x| x == role)
            .ok_or_else(|| schema(format!("field \"assignments\" names unknown role {role:?}")))?;
        assignment.push(r);
    }
    if model.assignments.len() != table.len() {
        return Err(schema(format!(
            "field \"assignments\" has {} users, the feature table {}",
            model.assignments.len(),
            table.len()
        ))
        .into());
    }
    Ok(Partition::new(table.user_ids.clone(), table.rows.clone(), model.roles.clone(), assignment)?)
}

pub fn stabilize(a: &StabilizeCmdArgs) -> CmdResult {
    require(&a.features)?;
    require(&a.model)?;
    let mut run = Run::start("stabilize", a, &a.out_dir)?;
    let table = read_table(&mut run, &a.features)?;
    let model_bytes = run.read(&a.model)?;
    let model: ModelFile = serde_json::from_slice(&model_bytes).map_err(|e| Error::Schema {
        path: a.model.clone(),
        reason: e.to_string(),
    })?;
    let initial = model_partition(&table, &model, &a.model)?;
    let sseed = seed::derive(a.seed, "stabilize", 0);
    run.seed("stabilize", sseed);
    let cfg = stabilize_config(&a.params, table.len(), sseed)?;
    let report = stabilize::stabilize(&initial, &cfg)?;
    log::info!("converged = {} after {} rounds", report.converged, report.rounds_used());
    run.write_json("stabilize_report.json", &report.summary())?;
    run.write("state.csv", &csv_bytes(|w| report.final_state.write_csv(w))?)?;
    let sil = breakdown(&report.final_partition)?;
    run.write("silhouette.csv", &csv_bytes(|w| sil.write_csv(w))?)?;
    run.finish()?;
    Ok(())
}

pub fn report(a: &ReportArgs) -> CmdResult {
    require(&a.features)?;
    if a.runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    let mut run = Run::start("report", a, &a.out_dir)?;
    run.seed("base", a.seed);
    let table = read_table(&mut run, &a.features)?;
    let feature = a.features.file_stem().map_or_else(|| "features".to_string(), |s| s.to_string_lossy().into_owned());
    let cfg = stabilize_config(&a.params, table.len(), 0)?;
    let out = compare_runs(&table, &feature, a.k, a.runs, a.seed, LloydConfig::default(), &cfg)?;
    let c = &out.comparison;
    run.write("comparison.csv", &csv_bytes(|w| c.write_csv(w))?)?;
    run.write_json("comparison.json", c)?;
    let (sil_svg, rand_svg) = comparison_svg(c);
    run.write("silhouette.svg", sil_svg.as_bytes())?;
    run.write("randomness.svg", rand_svg.as_bytes())?;
    run.finish()?;
    Ok(())
}

pub fn synth_blobs(a: &BlobArgs) -> CmdResult {
    let mut run = Run::start("synth-blobs", a, &a.out_dir)?;
    run.seed("synth", a.seed);
    let spec = testkit::SyntheticSpec {
        noise: a.noise,
        clip_nonnegative: a.clip,
        ..testkit::SyntheticSpec::new(a.k_true, a.per_cluster, a.dims, a.separation, a.seed)
    };
    let data = testkit::gen_clusters(&spec)?;
    run.write("features.csv", &csv_bytes(|w| data.table.write_csv(w))?)?;
    let names = role_names(a.k_true);
    let mut labels = csv::Writer::from_writer(Vec::new());
    labels.write_record(["user_id", "label"]).map_err(anyhow::Error::from)?;
    for (u, &l) in data.table.user_ids.iter().zip(&data.labels) {
        labels.write_record([u.as_str(), names[l].as_str()]).map_err(anyhow::Error::from)?;
    }
    let labels = labels.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    run.write("labels.csv", &labels)?;
    run.finish()?;
    Ok(())
}

pub fn synth_checkins(a: &CheckinArgs) -> CmdResult {
    if a.users == 0 || a.rows < a.users {
        return Err(Failure::Usage("need at least one user and one row per user".into()));
    }
    let mut run = Run::start("synth-checkins", a, &a.out_dir)?;
    run.seed("synth", a.seed);
    let (checkins, map) = testkit::gen_checkins(a.users, a.rows, a.archetypes, a.seed);
    run.write("checkins.tsv", &csv_bytes(|w| ingest::write_tsv(w, &checkins))?)?;
    run.write_json("root_map.json", &map.to_json())?;
    run.finish()?;
    Ok(())
}
