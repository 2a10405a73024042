//! Stage orchestration with partial-run semantics.
//!
//! Stages run in order and write their artifacts before the next stage
//! starts, so every completed stage's outputs are on disk even when a later
//! stage fails. A failure writes the manifest with the failing stage named
//! and drops a FAILED marker into the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::cluster::{
    self, agreement, cluster_profile, cut_tree, kmeans_fit, renumber_by_descending, silhouette,
    ward_linkage, ClusterProfile, FeatureMatrix, KDiagnostics, KmeansParams,
};
use crate::geom::build_contiguity;
use crate::indices::{composite_index, domain_score, flood_exposure, top_decile, VulnProfile};
use crate::ingest::{
    join_sources, read_attribute_table, read_city_boundary, read_feature_collection_geometry,
    read_tract_boundaries, AttributeTable, Column, ColumnKind, Direction, IndicatorSpec,
    JoinReport, TractFrame,
};
use crate::preprocess::{
    column_stats, log_transform_if_skewed, minmax_normalize, quartile_bins, tukey_fences,
    winsorize, ColumnStats, TransformRecord, TransformStep,
};
use crate::seed::derive_seed;
use crate::spatial::{
    fisher_jenks, local_moran, morans_i_test, JenksClassification, LisaResult, MoranTest,
    SpatialWeights, WeightsMode,
};
use crate::stats::{correlation_matrix, ej_compare, vif, CorrelationMatrix, EjKind, EjOutcome};

use super::config::{KPolicy, PipelineConfig};
use super::geojson_out::{scored_geojson, ScoredFeature};
use super::manifest::{digest_file, sha256_hex, RunManifest, StageRecord};
use super::svg::{render_category_map, render_choropleth, render_scatter};
use super::tables::{cluster_profile_csv, correlation_csv, ej_csv, k_selection_csv, vif_csv};
use super::{write_file, PipelineError, Stage};

const STREAM_KMEANS: u64 = 101;
const STREAM_MORAN: u64 = 102;
const STREAM_LISA: u64 = 103;

/// Derived vulnerability column names in emitted artifacts.
pub const FLOOD_COLUMN: &str = "flood_exposure_pct";

#[derive(Default)]
struct PipelineState {
    frame: Option<TractFrame>,
    join_report: Option<JoinReport>,
    warnings: usize,
    stats_by_column: BTreeMap<String, ColumnStats>,
    records: Vec<TransformRecord>,
    normalized: BTreeMap<String, Vec<Option<f64>>>,
    profile: Option<VulnProfile>,
    correlation: Option<CorrelationMatrix>,
    vif_rows: Vec<(String, f64)>,
    ej: Vec<EjOutcome>,
    k_table: Vec<KDiagnostics>,
    k_used: usize,
    kmeans_assignments: Vec<usize>,
    ward_assignments: Vec<usize>,
    ari_kmeans_ward: f64,
    typology_profile: Option<ClusterProfile>,
    moran: Option<MoranTest>,
    lisa: Option<LisaResult>,
    jenks: Option<JenksClassification>,
    island_flags: Vec<bool>,
}

pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub manifest: RunManifest,
}

/// Execute ingest -> preprocess -> indices -> stats -> cluster -> spatial
/// -> emit under the given config.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    let out = config.run.output_dir.clone();
    std::fs::create_dir_all(&out)
        .map_err(|e| PipelineError::Io { path: out.display().to_string(), source: e })?;

    let mut manifest = RunManifest {
        software_version: crate::VERSION.to_string(),
        config_digest: sha256_hex(config.canonical_json().as_bytes()),
        input_digests: BTreeMap::new(),
        master_seed: config.run.master_seed,
        stages: Vec::new(),
        failed_stage: None,
    };
    for path in input_paths(config) {
        if let Ok(digest) = digest_file(&path) {
            manifest.input_digests.insert(path.display().to_string(), digest);
        }
    }

    let mut state = PipelineState::default();
    for stage in Stage::ALL {
        let started = Instant::now();
        let result = run_stage(stage, config, &mut state, &out);
        let wall_ms = started.elapsed().as_millis();
        match result {
            Ok(params) => manifest.stages.push(StageRecord {
                name: stage.name().to_string(),
                wall_ms,
                params,
                error: None,
            }),
            Err(e) => {
                manifest.stages.push(StageRecord {
                    name: stage.name().to_string(),
                    wall_ms,
                    params: json!({}),
                    error: Some(e.to_string()),
                });
                manifest.failed_stage = Some(stage.name().to_string());
                write_manifest(&out, &manifest)?;
                write_file(&out.join("FAILED"), stage.name().as_bytes())?;
                return Err(e);
            }
        }
    }
    write_manifest(&out, &manifest)?;
    Ok(RunOutcome { output_dir: out, manifest })
}

fn input_paths(config: &PipelineConfig) -> Vec<PathBuf> {
    let mut paths = vec![
        config.inputs.boundaries.clone(),
        config.inputs.flood_layer.clone(),
        config.inputs.city_boundary.clone(),
    ];
    for t in &config.inputs.tables {
        paths.push(t.path.clone());
    }
    if let Some(aqi) = &config.inputs.aqi {
        paths.push(aqi.clone());
    }
    paths
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<(), PipelineError> {
    write_file(
        &out.join("manifest.json"),
        serde_json::to_string_pretty(manifest).expect("serializable").as_bytes(),
    )
}

fn run_stage(
    stage: Stage,
    config: &PipelineConfig,
    state: &mut PipelineState,
    out: &Path,
) -> Result<Value, PipelineError> {
    match stage {
        Stage::Ingest => stage_ingest(config, state, out),
        Stage::Preprocess => stage_preprocess(config, state, out),
        Stage::Indices => stage_indices(config, state, out),
        Stage::Stats => stage_stats(config, state, out),
        Stage::Cluster => stage_cluster(config, state, out),
        Stage::Spatial => stage_spatial(config, state, out),
        Stage::Emit => stage_emit(config, state, out),
    }
}

// ---------------------------------------------------------------------------
// ingest

fn stage_ingest(
    config: &PipelineConfig,
    state: &mut PipelineState,
    out: &Path,
) -> Result<Value, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Ingest, e);

    let boundaries = read_tract_boundaries(&config.inputs.boundaries, &config.inputs.geoid_property)
        .map_err(|e| err(&e))?;

    // route each indicator spec to the first table whose header carries its
    // source column
    let mut remaining: Vec<&IndicatorSpec> = config.indicators.iter().collect();
    let mut tables: Vec<AttributeTable> = Vec::new();
    let mut warnings = 0usize;
    for input in &config.inputs.tables {
        let header = csv_header(&input.path).map_err(|e| err(&e))?;
        let (mine, rest): (Vec<&IndicatorSpec>, Vec<&IndicatorSpec>) = remaining
            .into_iter()
            .partition(|s| header.iter().any(|h| h == &s.source_column));
        remaining = rest;
        if mine.is_empty() {
            continue;
        }
        let specs: Vec<IndicatorSpec> = mine.into_iter().cloned().collect();
        let table = read_attribute_table(&input.path, &input.source, &specs, "GEOID")
            .map_err(|e| err(&e))?;
        warnings += table.warnings;
        tables.push(table);
    }
    if let Some(spec) = remaining.first() {
        return Err(err(&format!(
            "indicator {:?}: source column {:?} not found in any table",
            spec.name, spec.source_column
        )));
    }

    let (frame, report) = join_sources(&boundaries, &tables).map_err(|e| err(&e))?;
    let city = read_city_boundary(&config.inputs.city_boundary).map_err(|e| err(&e))?;
    let mut frame = frame.subset_to_city(&city).map_err(|e| err(&e))?;

    if let Some(aqi_path) = &config.inputs.aqi {
        let aqi = read_county_aqi(aqi_path).map_err(|e| err(&e))?;
        frame
            .add_column(Column {
                name: "county_aqi".to_string(),
                kind: ColumnKind::IndexScore,
                source: "aqi".to_string(),
                values: vec![Some(aqi); frame.n_rows()],
            })
            .map_err(|e| err(&e))?;
    }

    write_file(&out.join("ingest/attributes.csv"), frame_csv(&frame).as_bytes())?;
    write_file(
        &out.join("ingest/join_report.json"),
        serde_json::to_string_pretty(&report).expect("serializable").as_bytes(),
    )?;
    write_file(&out.join("ingest/subset.geojson"), subset_geojson(&frame)?.as_bytes())?;

    let params = json!({
        "rows": frame.n_rows(),
        "tables": tables.len(),
        "rate_warnings": warnings,
        "geoid_property": config.inputs.geoid_property,
    });
    state.frame = Some(frame);
    state.join_report = Some(report);
    state.warnings = warnings;
    Ok(params)
}

fn csv_header(path: &Path) -> Result<Vec<String>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    Ok(rdr
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(|s| s.trim().to_string())
        .collect())
}

fn read_county_aqi(path: &Path) -> Result<f64, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    let idx = headers
        .iter()
        .position(|h| h == "aqi")
        .ok_or_else(|| "AQI file missing 'aqi' column".to_string())?;
    let record = rdr
        .records()
        .next()
        .ok_or_else(|| "AQI file has no data rows".to_string())?
        .map_err(|e| e.to_string())?;
    record
        .get(idx)
        .unwrap_or("")
        .trim()
        .parse::<f64>()
        .map_err(|e| format!("AQI value not numeric: {e}"))
}

fn frame_csv(frame: &TractFrame) -> String {
    let mut csv = String::from("GEOID");
    for c in frame.columns() {
        csv.push(',');
        csv.push_str(&c.name);
    }
    csv.push('\n');
    for (i, geoid) in frame.geoids().iter().enumerate() {
        csv.push_str(geoid);
        for c in frame.columns() {
            csv.push(',');
            if let Some(v) = c.values[i] {
                csv.push_str(&v.to_string());
            }
        }
        csv.push('\n');
    }
    csv
}

fn subset_geojson(frame: &TractFrame) -> Result<String, PipelineError> {
    let features: Vec<ScoredFeature<'_>> = frame
        .geoids()
        .iter()
        .zip(frame.geometry())
        .map(|(geoid, geom)| ScoredFeature { geoid, geometry: geom, properties: vec![] })
        .collect();
    scored_geojson(&features)
}

// ---------------------------------------------------------------------------
// preprocess

fn stage_preprocess(
    config: &PipelineConfig,
    state: &mut PipelineState,
    out: &Path,
) -> Result<Value, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Preprocess, e);
    let frame = state.frame.as_mut().expect("ingest ran");

    let mut log_applied = Vec::new();
    let mut winsorized = Vec::new();
    for spec in &config.indicators {
        let raw = frame
            .values(&spec.name)
            .ok_or_else(|| err(&format!("column {} missing after join", spec.name)))?
            .to_vec();
        let mut record = TransformRecord::new(spec.name.clone());
        let mut cleaned = raw.clone();

        let stats = column_stats(&cleaned).map_err(|e| err(&e))?;
        state.stats_by_column.insert(spec.name.clone(), stats);

        if spec.winsorize {
            let flags = match tukey_fences(&cleaned) {
                Ok(f) => f,
                Err(_) => vec![false; cleaned.len()],
            };
            if flags.iter().any(|f| *f) {
                let (w, cuts) = winsorize(&cleaned, 5.0, 95.0).map_err(|e| err(&e))?;
                cleaned = w;
                record.push(TransformStep::Winsorize(cuts));
                winsorized.push(spec.name.clone());
            }
        }
        if spec.log_if_skewed {
            let (l, decision) = log_transform_if_skewed(&cleaned);
            if decision.applied {
                cleaned = l;
                record.push(TransformStep::Log1p);
                log_applied.push(spec.name.clone());
            }
        }
        frame.replace_values(&spec.name, cleaned.clone());

        // normalized 0-100 column, reflected so higher always means worse
        match minmax_normalize(&cleaned) {
            Ok((mut norm, params)) => {
                record.push(TransformStep::MinMax(params));
                if spec.direction == Direction::RiskDecreases {
                    norm = TransformStep::Reflect.apply(&norm);
                    record.push(TransformStep::Reflect);
                }
                state.normalized.insert(spec.name.clone(), norm);
            }
            Err(e) => {
                // degenerate columns stay un-normalized; index stages will
                // reject them if referenced
                if config.index.health_indicators.contains(&spec.name)
                    || config.index.socio_indicators.contains(&spec.name)
                {
                    return Err(err(&format!("index indicator {:?}: {e}", spec.name)));
                }
            }
        }
        state.records.push(record);
    }

    if let Some(poverty) = frame.values("poverty_rate").map(|v| v.to_vec()) {
        if let Ok(bins) = quartile_bins(&poverty) {
            let codes: Vec<Option<f64>> = bins
                .iter()
                .map(|b| b.map(|q| (q as u8 as f64) + 1.0))
                .collect();
            let _ = frame.add_column(Column {
                name: "poverty_quartile".to_string(),
                kind: ColumnKind::Categorical,
                source: "derived".to_string(),
                values: codes,
            });
        }
    }

    write_file(
        &out.join("preprocess/transform_records.json"),
        serde_json::to_string_pretty(&state.records).expect("serializable").as_bytes(),
    )?;
    write_file(
        &out.join("preprocess/column_stats.json"),
        serde_json::to_string_pretty(&state.stats_by_column).expect("serializable").as_bytes(),
    )?;
    write_file(&out.join("preprocess/cleaned.csv"), frame_csv(frame).as_bytes())?;

    Ok(json!({
        "winsorized": winsorized,
        "log_transformed": log_applied,
        "normalized_columns": state.normalized.len(),
    }))
}

// ---------------------------------------------------------------------------
// indices

fn stage_indices(
    config: &PipelineConfig,
    state: &mut PipelineState,
    out: &Path,
) -> Result<Value, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Indices, e);
    config.index.validate_weights().map_err(|e| err(&e))?;
    let frame = state.frame.as_mut().expect("ingest ran");

    let flood_layer =
        read_feature_collection_geometry(&config.inputs.flood_layer).map_err(|e| err(&e))?;
    let buffered = crate::geom::buffer(&flood_layer, 1.0).map_err(|e| err(&e))?;
    let mut flood_pct = Vec::with_capacity(frame.n_rows());
    for geom in frame.geometry() {
        flood_pct.push(flood_exposure(geom, &buffered, 0.0).map_err(|e| err(&e))?);
    }
    let _ = frame.add_column(Column {
        name: FLOOD_COLUMN.to_string(),
        kind: ColumnKind::RatePercent,
        source: "derived".to_string(),
        values: flood_pct.iter().map(|&v| Some(v)).collect(),
    });

    let gather = |names: &[String]| -> Result<Vec<(String, Vec<Option<f64>>)>, PipelineError> {
        names
            .iter()
            .map(|n| {
                state
                    .normalized
                    .get(n)
                    .cloned()
                    .map(|v| (n.clone(), v))
                    .ok_or_else(|| err(&format!("indicator {n:?} has no normalized column")))
            })
            .collect()
    };
    let health_cols = gather(&config.index.health_indicators)?;
    let socio_cols = gather(&config.index.socio_indicators)?;
    let health = domain_score(&health_cols).map_err(|e| err(&e))?;
    let socio = domain_score(&socio_cols).map_err(|e| err(&e))?;
    let composite = composite_index(
        &health,
        &socio,
        config.index.weight_health,
        config.index.weight_socio,
    )
    .map_err(|e| err(&e))?;
    let flags = top_decile(&composite).map_err(|e| err(&e))?;

    let mut csv = String::from("GEOID,flood_exposure_pct,health_score,socio_score,composite_v,top_decile\n");
    for (i, geoid) in frame.geoids().iter().enumerate() {
        csv.push_str(&format!(
            "{geoid},{},{},{},{},{}\n",
            flood_pct[i], health[i], socio[i], composite[i], flags[i]
        ));
    }
    write_file(&out.join("indices/scores.csv"), csv.as_bytes())?;

    state.profile = Some(VulnProfile {
        flood_exposure: flood_pct,
        health_score: health,
        socio_score: socio,
        composite,
        top_decile: flags,
    });
    Ok(json!({
        "health_indicators": config.index.health_indicators,
        "socio_indicators": config.index.socio_indicators,
        "weight_health": config.index.weight_health,
        "weight_socio": config.index.weight_socio,
        "buffer_m": 1.0,
    }))
}

// ---------------------------------------------------------------------------
// stats

fn stage_stats(
    config: &PipelineConfig,
    state: &mut PipelineState,
    out: &Path,
) -> Result<Value, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Stats, e);
    let frame = state.frame.as_ref().expect("ingest ran");
    let profile = state.profile.as_ref().expect("indices ran");

    let mut corr_names: Vec<String> = if config.stats.correlation_columns.is_empty() {
        let mut names: Vec<String> =
            config.indicators.iter().map(|s| s.name.clone()).collect();
        names.push(FLOOD_COLUMN.to_string());
        names
    } else {
        config.stats.correlation_columns.clone()
    };
    corr_names.retain(|n| frame.column(n).is_some());
    let mut corr_cols: Vec<(String, Vec<Option<f64>>)> = corr_names
        .iter()
        .map(|n| (n.clone(), frame.values(n).unwrap().to_vec()))
        .collect();
    corr_cols.push((
        "composite_v".to_string(),
        profile.composite.iter().map(|&v| Some(v)).collect(),
    ));
    let correlation = correlation_matrix(&corr_cols, true).map_err(|e| err(&e))?;

    let vif_names: Vec<String> = if config.stats.vif_columns.is_empty() {
        config
            .index
            .health_indicators
            .iter()
            .chain(&config.index.socio_indicators)
            .cloned()
            .collect()
    } else {
        config.stats.vif_columns.clone()
    };
    let mut vif_input: Vec<(String, Vec<f64>)> = Vec::new();
    let n = frame.n_rows();
    let complete_rows: Vec<usize> = (0..n)
        .filter(|&i| {
            vif_names
                .iter()
                .all(|name| frame.values(name).map(|v| v[i].is_some()).unwrap_or(false))
        })
        .collect();
    for name in &vif_names {
        if let Some(values) = frame.values(name) {
            vif_input.push((
                name.clone(),
                complete_rows.iter().map(|&i| values[i].unwrap()).collect(),
            ));
        }
    }
    let vif_rows = if vif_input.len() >= 2 {
        vif(&vif_input).map_err(|e| err(&e))?
    } else {
        Vec::new()
    };

    let mut ej_cols: Vec<(String, Vec<Option<f64>>, EjKind)> = Vec::new();
    for name in &config.stats.ej_continuous {
        if let Some(v) = frame.values(name) {
            ej_cols.push((name.clone(), v.to_vec(), EjKind::Continuous));
        }
    }
    for name in &config.stats.ej_categorical {
        if let Some(v) = frame.values(name) {
            ej_cols.push((name.clone(), v.to_vec(), EjKind::Categorical));
        }
    }
    let ej = if ej_cols.is_empty() {
        Vec::new()
    } else {
        ej_compare(&ej_cols, &profile.top_decile).map_err(|e| err(&e))?
    };

    let stats_state = json!({
        "correlation": &correlation,
        "vif": vif_rows.iter().map(|(n, v)| json!({"predictor": n, "vif": if v.is_finite() { Value::from(*v) } else { Value::String("inf".into()) }})).collect::<Vec<_>>(),
        "ej": &ej,
    });
    write_file(
        &out.join("stats/stats.json"),
        serde_json::to_string_pretty(&stats_state).expect("serializable").as_bytes(),
    )?;

    let params = json!({
        "correlation_columns": corr_names,
        "vif_columns": vif_names,
        "ej_continuous": config.stats.ej_continuous,
        "ej_categorical": config.stats.ej_categorical,
    });
    state.correlation = Some(correlation);
    state.vif_rows = vif_rows;
    state.ej = ej;
    Ok(params)
}

// ---------------------------------------------------------------------------
// cluster

fn stage_cluster(
    config: &PipelineConfig,
    state: &mut PipelineState,
    out: &Path,
) -> Result<Value, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Cluster, e);
    let frame = state.frame.as_ref().expect("ingest ran");

    let named: Vec<(String, Vec<Option<f64>>)> = config
        .cluster
        .features
        .iter()
        .map(|n| {
            frame
                .values(n)
                .map(|v| (n.clone(), v.to_vec()))
                .ok_or_else(|| err(&format!("cluster feature {n:?} missing")))
        })
        .collect::<Result<_, _>>()?;
    let matrix =
        FeatureMatrix::standardize(frame.geoids().to_vec(), named).map_err(|e| err(&e))?;

    let params = KmeansParams {
        n_init: config.cluster.n_init,
        max_iter: config.cluster.max_iter,
        tol: config.cluster.tol,
    };
    let seed = derive_seed(config.run.master_seed, STREAM_KMEANS);

    let (k_used, k_table, kmeans_model) = match config.cluster.k_policy {
        KPolicy::Silhouette { min, max } => {
            let max = max.min(matrix.n_rows());
            let sel = cluster::select_k(&matrix, min..=max, seed, &params).map_err(|e| err(&e))?;
            (sel.k_best, sel.table, sel.best_model)
        }
        KPolicy::Fixed { k } => {
            let mut model = kmeans_fit(&matrix, k, derive_seed(seed, k as u64), &params)
                .map_err(|e| err(&e))?;
            let sil = if k >= 2 {
                silhouette(&matrix, &model.assignments).map_err(|e| err(&e))?.0
            } else {
                0.0
            };
            model.mean_silhouette = Some(sil);
            let table = vec![KDiagnostics { k, mean_silhouette: sil, wcss: model.wcss }];
            (k, table, model)
        }
    };

    let merges = ward_linkage(&matrix);
    let ward_raw = cut_tree(&merges, matrix.n_rows(), k_used).map_err(|e| err(&e))?;
    let (contingency, ari) = agreement(&kmeans_model.assignments, &ward_raw).map_err(|e| err(&e))?;

    // canonical presentation order: cluster 1 carries the highest mean of
    // the configured ranking column
    let rank_values: Vec<f64> = frame
        .values(&config.cluster.rank_by)
        .map(|v| v.iter().map(|x| x.unwrap_or(0.0)).collect())
        .unwrap_or_else(|| vec![0.0; frame.n_rows()]);
    let kmeans_canonical = renumber_by_descending(&kmeans_model.assignments, k_used, &rank_values);
    let ward_canonical = renumber_by_descending(&ward_raw, k_used, &rank_values);

    let profile_vars: Vec<(String, Vec<f64>)> = config
        .cluster
        .features
        .iter()
        .map(|n| {
            (
                n.clone(),
                frame.values(n).unwrap().iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            )
        })
        .collect();
    let typology_profile = cluster_profile(&profile_vars, &kmeans_canonical, k_used);

    let mut kmeans_dump = kmeans_model.clone();
    kmeans_dump.assignments = kmeans_canonical.clone();
    write_file(
        &out.join("cluster/kmeans.json"),
        serde_json::to_string_pretty(&kmeans_dump.dump(frame.geoids()))
            .expect("serializable")
            .as_bytes(),
    )?;
    let ward_dump = json!({
        "method": "ward",
        "k": k_used,
        "assignments": frame.geoids().iter().zip(&ward_canonical).map(|(g, a)| (g.clone(), *a)).collect::<BTreeMap<String, usize>>(),
        "merges": merges,
        "agreement": { "ari": ari, "contingency": contingency },
    });
    write_file(
        &out.join("cluster/ward.json"),
        serde_json::to_string_pretty(&ward_dump).expect("serializable").as_bytes(),
    )?;
    write_file(
        &out.join("cluster/profile.json"),
        serde_json::to_string_pretty(&typology_profile).expect("serializable").as_bytes(),
    )?;
    write_file(
        &out.join("cluster/k_selection.json"),
        serde_json::to_string_pretty(&k_table).expect("serializable").as_bytes(),
    )?;

    let params_echo = json!({
        "features": config.cluster.features,
        "k_policy": &config.cluster.k_policy,
        "k_used": k_used,
        "seed": seed,
        "n_init": config.cluster.n_init,
        "ari_kmeans_ward": ari,
    });
    state.k_table = k_table;
    state.k_used = k_used;
    state.kmeans_assignments = kmeans_canonical;
    state.ward_assignments = ward_canonical;
    state.ari_kmeans_ward = ari;
    state.typology_profile = Some(typology_profile);
    Ok(params_echo)
}

// ---------------------------------------------------------------------------
// spatial

fn stage_spatial(
    config: &PipelineConfig,
    state: &mut PipelineState,
    out: &Path,
) -> Result<Value, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Spatial, e);
    let frame = state.frame.as_ref().expect("ingest ran");
    let profile = state.profile.as_ref().expect("indices ran");

    let geometry_map = frame.geometry_map();
    let graph =
        build_contiguity(&geometry_map, config.spatial.contiguity.into()).map_err(|e| err(&e))?;
    let weights = SpatialWeights::from_graph(&graph, config.spatial.weights_mode);
    // LISA requires row-standardized weights regardless of the global mode
    let weights_lisa = if config.spatial.weights_mode == WeightsMode::RowStandardized {
        weights.clone()
    } else {
        SpatialWeights::from_graph(&graph, WeightsMode::RowStandardized)
    };

    let moran = morans_i_test(
        &profile.composite,
        &weights,
        config.spatial.permutations,
        derive_seed(config.run.master_seed, STREAM_MORAN),
    )
    .map_err(|e| err(&e))?;
    let lisa = local_moran(
        &profile.composite,
        &weights_lisa,
        config.spatial.permutations,
        derive_seed(config.run.master_seed, STREAM_LISA),
        config.spatial.alpha,
    )
    .map_err(|e| err(&e))?;
    let jenks =
        fisher_jenks(&profile.composite, config.spatial.jenks_classes).map_err(|e| err(&e))?;

    let island_flags: Vec<bool> = (0..frame.n_rows()).map(|i| weights.is_island(i)).collect();

    write_file(
        &out.join("spatial/moran.json"),
        serde_json::to_string_pretty(&moran).expect("serializable").as_bytes(),
    )?;
    write_file(
        &out.join("spatial/lisa.json"),
        serde_json::to_string_pretty(&json!({
            "geoids": frame.geoids(),
            "result": &lisa,
            "islands": graph.islands(),
        }))
        .expect("serializable")
        .as_bytes(),
    )?;
    write_file(
        &out.join("spatial/jenks.json"),
        serde_json::to_string_pretty(&jenks).expect("serializable").as_bytes(),
    )?;

    let params = json!({
        "contiguity": &config.spatial.contiguity,
        "weights_mode": &config.spatial.weights_mode,
        "permutations": config.spatial.permutations,
        "alpha": config.spatial.alpha,
        "jenks_classes": config.spatial.jenks_classes,
        "moran_i": moran.i_obs,
        "moran_pseudo_p": moran.pseudo_p,
        "islands": graph.islands().len(),
    });
    state.moran = Some(moran);
    state.lisa = Some(lisa);
    state.jenks = Some(jenks);
    state.island_flags = island_flags;
    Ok(params)
}

// ---------------------------------------------------------------------------
// emit

fn stage_emit(
    config: &PipelineConfig,
    state: &mut PipelineState,
    out: &Path,
) -> Result<Value, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::stage(Stage::Emit, e);
    let frame = state.frame.as_ref().expect("ingest ran");
    let profile = state.profile.as_ref().expect("indices ran");
    let lisa = state.lisa.as_ref().expect("spatial ran");
    let jenks = state.jenks.as_ref().expect("spatial ran");

    let num = |v: f64| {
        serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
    };

    let mut features = Vec::with_capacity(frame.n_rows());
    for (i, geoid) in frame.geoids().iter().enumerate() {
        let mut props: Vec<(String, Value)> = Vec::new();
        for spec in &config.indicators {
            if let Some(col) = frame.values(&spec.name) {
                props.push((
                    spec.name.clone(),
                    col[i].map(num).unwrap_or(Value::Null),
                ));
            }
        }
        props.push((FLOOD_COLUMN.to_string(), num(profile.flood_exposure[i])));
        props.push(("health_score".to_string(), num(profile.health_score[i])));
        props.push(("socio_score".to_string(), num(profile.socio_score[i])));
        props.push(("composite_v".to_string(), num(profile.composite[i])));
        props.push(("top_decile".to_string(), Value::Bool(profile.top_decile[i])));
        props.push((
            "cluster_kmeans".to_string(),
            Value::from(state.kmeans_assignments[i] as u64 + 1),
        ));
        props.push((
            "cluster_ward".to_string(),
            Value::from(state.ward_assignments[i] as u64 + 1),
        ));
        props.push((
            "lisa_quadrant".to_string(),
            lisa.quadrant[i]
                .map(|q| Value::String(format!("{q:?}")))
                .unwrap_or(Value::Null),
        ));
        props.push((
            "lisa_p".to_string(),
            lisa.pseudo_p[i].map(num).unwrap_or(Value::Null),
        ));
        props.push(("lisa_significant".to_string(), Value::Bool(lisa.significant[i])));
        props.push(("island".to_string(), Value::Bool(state.island_flags[i])));
        props.push(("jenks_class".to_string(), Value::from(jenks.labels[i] as u64)));
        features.push(ScoredFeature { geoid, geometry: &frame.geometry()[i], properties: props });
    }
    write_file(&out.join("scored.geojson"), scored_geojson(&features)?.as_bytes())?;

    // tables
    let typology_profile = state.typology_profile.as_ref().expect("cluster ran");
    write_file(
        &out.join("tables/cluster_profile.csv"),
        cluster_profile_csv(typology_profile).as_bytes(),
    )?;
    let correlation = state.correlation.as_ref().expect("stats ran");
    write_file(&out.join("tables/correlation.csv"), correlation_csv(correlation).as_bytes())?;
    write_file(&out.join("tables/ej_comparison.csv"), ej_csv(&state.ej).as_bytes())?;
    write_file(&out.join("tables/k_selection.csv"), k_selection_csv(&state.k_table).as_bytes())?;
    write_file(&out.join("tables/vif.csv"), vif_csv(&state.vif_rows).as_bytes())?;

    // plots
    write_file(
        &out.join("plots/choropleth_composite.svg"),
        render_choropleth(
            frame.geometry(),
            &profile.composite,
            "Composite vulnerability index",
            config.spatial.jenks_classes,
        )
        .as_bytes(),
    )?;
    write_file(
        &out.join("plots/choropleth_flood.svg"),
        render_choropleth(
            frame.geometry(),
            &profile.flood_exposure,
            "Flood exposure (%)",
            config.spatial.jenks_classes,
        )
        .as_bytes(),
    )?;
    let cluster_names: Vec<String> =
        (1..=state.k_used).map(|c| format!("Cluster {c}")).collect();
    write_file(
        &out.join("plots/clusters_map.svg"),
        render_category_map(
            frame.geometry(),
            &state.kmeans_assignments,
            &cluster_names,
            "Neighborhood typologies (k-means)",
        )
        .as_bytes(),
    )?;

    let (sx, sy) = match &config.stats.scatter {
        Some((a, b)) => (a.clone(), b.clone()),
        None => ("poverty_rate".to_string(), "health_score".to_string()),
    };
    let col_or_score = |name: &str| -> Option<Vec<f64>> {
        match name {
            "health_score" => Some(profile.health_score.clone()),
            "socio_score" => Some(profile.socio_score.clone()),
            "composite_v" => Some(profile.composite.clone()),
            other => frame.values(other).map(|v| {
                v.iter().map(|x| x.unwrap_or(f64::NAN)).collect()
            }),
        }
    };
    if let (Some(xv), Some(yv)) = (col_or_score(&sx), col_or_score(&sy)) {
        let pairs: Vec<(f64, f64)> = xv
            .iter()
            .zip(&yv)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (*a, *b))
            .collect();
        if pairs.len() >= 3 {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            write_file(
                &out.join("plots/scatter.svg"),
                render_scatter(&xs, &ys, &sx, &sy, true, config.stats.lowess_frac).as_bytes(),
            )?;
        }
    } else {
        return Err(err(&format!("scatter columns {sx:?}/{sy:?} not found")));
    }

    Ok(json!({
        "scored_geojson": "scored.geojson",
        "tables": ["cluster_profile.csv", "correlation.csv", "ej_comparison.csv", "k_selection.csv", "vif.csv"],
        "plots": ["choropleth_composite.svg", "choropleth_flood.svg", "clusters_map.svg", "scatter.svg"],
    }))
}

// ---------------------------------------------------------------------------
// re-rendering from stored stage outputs

/// Re-render plots and tables from a previous run's stage outputs.
pub fn rerender(run_dir: &Path) -> Result<(), PipelineError> {
    let err = |m: String| PipelineError::Config(m);
    let read = |rel: &str| -> Result<String, PipelineError> {
        std::fs::read_to_string(run_dir.join(rel)).map_err(|e| PipelineError::Io {
            path: run_dir.join(rel).display().to_string(),
            source: e,
        })
    };

    // geometry + geoids from the ingest snapshot
    let boundaries = read_tract_boundaries(&run_dir.join("ingest/subset.geojson"), "geoid")
        .map_err(|e| err(e.to_string()))?;
    let geoids: Vec<String> = boundaries.keys().cloned().collect();
    let geoms: Vec<crate::geom::MultiPolygon> = boundaries.values().cloned().collect();

    // scores
    let scores_text = read("indices/scores.csv")?;
    let mut by_geoid: BTreeMap<String, (f64, f64)> = BTreeMap::new(); // geoid -> (composite, flood)
    for line in scores_text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() >= 5 {
            let composite: f64 = cells[4].parse().map_err(|_| err("bad scores.csv".into()))?;
            let flood: f64 = cells[1].parse().map_err(|_| err("bad scores.csv".into()))?;
            by_geoid.insert(cells[0].to_string(), (composite, flood));
        }
    }
    let composite: Vec<f64> = geoids
        .iter()
        .map(|g| by_geoid.get(g).map(|v| v.0).ok_or_else(|| err(format!("missing score for {g}"))))
        .collect::<Result<_, _>>()?;
    let flood: Vec<f64> = geoids.iter().map(|g| by_geoid[g].1).collect();

    // cluster assignments
    let kmeans: Value =
        serde_json::from_str(&read("cluster/kmeans.json")?).map_err(|e| err(e.to_string()))?;
    let assignments: Vec<usize> = geoids
        .iter()
        .map(|g| {
            kmeans["assignments"][g]
                .as_u64()
                .map(|v| v as usize)
                .ok_or_else(|| err(format!("missing assignment for {g}")))
        })
        .collect::<Result<_, _>>()?;
    let k_used = kmeans["k"].as_u64().unwrap_or(1) as usize;

    let jenks_k = serde_json::from_str::<Value>(&read("spatial/jenks.json")?)
        .map_err(|e| err(e.to_string()))?["breaks"]
        .as_array()
        .map(|a| a.len())
        .unwrap_or(5);

    write_file(
        &run_dir.join("plots/choropleth_composite.svg"),
        render_choropleth(&geoms, &composite, "Composite vulnerability index", jenks_k).as_bytes(),
    )?;
    write_file(
        &run_dir.join("plots/choropleth_flood.svg"),
        render_choropleth(&geoms, &flood, "Flood exposure (%)", jenks_k).as_bytes(),
    )?;
    let cluster_names: Vec<String> = (1..=k_used).map(|c| format!("Cluster {c}")).collect();
    write_file(
        &run_dir.join("plots/clusters_map.svg"),
        render_category_map(&geoms, &assignments, &cluster_names, "Neighborhood typologies (k-means)")
            .as_bytes(),
    )?;

    // tables from stage state
    let profile: ClusterProfile =
        serde_json::from_str(&read("cluster/profile.json")?).map_err(|e| err(e.to_string()))?;
    write_file(&run_dir.join("tables/cluster_profile.csv"), cluster_profile_csv(&profile).as_bytes())?;
    let k_table: Vec<KDiagnostics> =
        serde_json::from_str(&read("cluster/k_selection.json")?).map_err(|e| err(e.to_string()))?;
    write_file(&run_dir.join("tables/k_selection.csv"), k_selection_csv(&k_table).as_bytes())?;
    let stats_state: Value =
        serde_json::from_str(&read("stats/stats.json")?).map_err(|e| err(e.to_string()))?;
    let correlation: CorrelationMatrix =
        serde_json::from_value(stats_state["correlation"].clone()).map_err(|e| err(e.to_string()))?;
    write_file(&run_dir.join("tables/correlation.csv"), correlation_csv(&correlation).as_bytes())?;
    let ej: Vec<EjOutcome> =
        serde_json::from_value(stats_state["ej"].clone()).map_err(|e| err(e.to_string()))?;
    write_file(&run_dir.join("tables/ej_comparison.csv"), ej_csv(&ej).as_bytes())?;
    Ok(())
}
