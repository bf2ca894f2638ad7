use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::prepare::load_inputs;
use super::stages::{write_json, write_text};
use super::{Command, Manifest, PipelineError, Result, RunConfig};
use crate::dataio::{EventLog, LayeredEmbeddings, MetadataTable};

/// `YYYY-MM` of a Unix timestamp (UTC).
pub fn month_of(ts: i64) -> Result<String> {
    let dt = DateTime::from_timestamp(ts, 0).ok_or_else(|| PipelineError::Data(format!("timestamp {ts} out of range")))?;
    Ok(format!("{:04}-{:02}", dt.year(), dt.month()))
}

fn next_month(m: &str) -> String {
    let (y, mo): (i32, u32) = (m[..4].parse().unwrap_or(0), m[5..].parse().unwrap_or(1));
    if mo == 12 {
        format!("{:04}-01", y + 1)
    } else {
        format!("{y:04}-{:02}", mo + 1)
    }
}

/// Weighted mean feature vector for one calendar month.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodProfile {
    pub period: String,
    /// Events that contributed (each weights its entity once).
    pub events: usize,
    pub values: Vec<f64>,
}

/// Per month, every event adds its entity's vector once, so entities are
/// weighted by their interaction count in that month. Events whose entity
/// has no vector are ignored; months left empty are dropped.
pub fn monthly_profiles<F>(events: &[(i64, u32)], dim: usize, features: F) -> Result<Vec<PeriodProfile>>
where
    F: Fn(u32) -> Option<Vec<f64>>,
{
    let mut acc: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();
    let mut cache: BTreeMap<u32, Option<Vec<f64>>> = BTreeMap::new();
    for &(ts, entity) in events {
        let x = cache.entry(entity).or_insert_with(|| features(entity));
        let Some(x) = x else { continue };
        let slot = acc.entry(month_of(ts)?).or_insert_with(|| (0, vec![0.0; dim]));
        slot.0 += 1;
        for (s, v) in slot.1.iter_mut().zip(x.iter()) {
            *s += v;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(period, (n, sum))| PeriodProfile {
            period,
            events: n,
            values: sum.iter().map(|s| s / n as f64).collect(),
        })
        .collect())
}

/// Min–max scaling per column; a column with a zero range maps to 0.5.
pub fn normalize_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(dim) = rows.first().map(Vec::len) else {
        return Vec::new();
    };
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for r in rows {
        for (j, &v) in r.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, &v)| if hi[j] > lo[j] { (v - lo[j]) / (hi[j] - lo[j]) } else { 0.5 })
                .collect()
        })
        .collect()
}

/// Two-component PCA of the rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    /// Share of total variance carried by each component.
    pub variance_share: [f64; 2],
}

/// Centres the rows and projects onto the top two right singular vectors.
/// Each component's sign is fixed so its largest-magnitude loading is
/// positive.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Projection> {
    let n = rows.len();
    let dim = rows.first().map_or(0, Vec::len);
    if n < 2 || dim == 0 {
        return Err(PipelineError::Data(format!("PCA needs at least 2 periods and 1 feature, got {n}×{dim}")));
    }
    let mut m = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
    for j in 0..dim {
        let mu = m.column(j).mean();
        m.column_mut(j).add_scalar_mut(-mu);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| PipelineError::Numerical("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut coords = vec![[0.0; 2]; n];
    let mut share = [0.0; 2];
    for (c, &idx) in order.iter().take(2).enumerate() {
        let mut axis: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let lead = axis.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        if lead < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        for (i, coord) in coords.iter_mut().enumerate() {
            coord[c] = (0..dim).map(|j| m[(i, j)] * axis[j]).sum();
        }
        let s = svd.singular_values[idx];
        share[c] = if total > 0.0 { s * s / total } else { 0.0 };
    }
    Ok(Projection {
        coords,
        variance_share: share,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideDrift {
    pub side: String,
    pub fields: Vec<String>,
    pub periods: Vec<PeriodProfile>,
    pub normalized: Vec<Vec<f64>>,
    pub projection: Projection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub sides: Vec<SideDrift>,
    /// Calendar months inside the observed range with no events.
    pub skipped_months: Vec<String>,
}

impl DriftReport {
    /// Long rows `side,period,events,field,value,normalized`.
    pub fn periods_csv(&self) -> String {
        let mut out = String::from("side,period,events,field,value,normalized\n");
        for s in &self.sides {
            for (p, norm) in s.periods.iter().zip(&s.normalized) {
                for ((f, v), nv) in s.fields.iter().zip(&p.values).zip(norm) {
                    out.push_str(&format!("{},{},{},{f},{v:.6},{nv:.6}\n", s.side, p.period, p.events));
                }
            }
        }
        out
    }

    /// Rows `side,period,pc1,pc2`.
    pub fn projection_csv(&self) -> String {
        let mut out = String::from("side,period,pc1,pc2\n");
        for s in &self.sides {
            for (p, c) in s.periods.iter().zip(&s.projection.coords) {
                out.push_str(&format!("{},{},{:.6},{:.6}\n", s.side, p.period, c[0], c[1]));
            }
        }
        out
    }
}

fn side(name: &str, fields: Vec<String>, periods: Vec<PeriodProfile>) -> Result<Option<SideDrift>> {
    if fields.is_empty() || periods.len() < 2 {
        log::warn!("drift: {name} side has {} fields over {} periods; skipped", fields.len(), periods.len());
        return Ok(None);
    }
    let values: Vec<Vec<f64>> = periods.iter().map(|p| p.values.clone()).collect();
    let normalized = normalize_columns(&values);
    let projection = pca_2d(&normalized)?;
    Ok(Some(SideDrift {
        side: name.into(),
        fields,
        periods,
        normalized,
        projection,
    }))
}

/// Monthly user and item feature profiles from a raw event log.
pub fn drift_report(
    log: &EventLog,
    user_meta: Option<&MetadataTable>,
    embeddings: Option<&LayeredEmbeddings>,
) -> Result<DriftReport> {
    let months: BTreeSet<String> = log.events.iter().map(|e| month_of(e.timestamp)).collect::<Result<_>>()?;
    if months.len() < 2 {
        return Err(PipelineError::Data(format!(
            "drift needs events in at least 2 calendar months, found {}",
            months.len()
        )));
    }
    let mut skipped = Vec::new();
    let (first, last) = (months.first().expect("non-empty").clone(), months.last().expect("non-empty").clone());
    let mut m = first;
    while m < last {
        if !months.contains(&m) {
            skipped.push(m.clone());
        }
        m = next_month(&m);
    }
    for s in &skipped {
        log::info!("drift: no events in {s}; month skipped");
    }
    let mut sides = Vec::new();
    if let Some(meta) = user_meta {
        let fields: Vec<String> = meta
            .rows
            .values()
            .flat_map(|r| r.numeric.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let events: Vec<(i64, u32)> = log.events.iter().map(|e| (e.timestamp, e.user)).collect();
        let periods = monthly_profiles(&events, fields.len(), |u| {
            let rec = meta.get(log.users.key(u))?;
            fields.iter().map(|f| rec.numeric.get(f).copied()).collect()
        })?;
        sides.extend(side("user", fields, periods)?);
    }
    if let Some(emb) = embeddings {
        let h = emb.audio_dim();
        let t = emb.text_dim();
        let fields: Vec<String> = (0..h).map(|j| format!("audio_{j}")).chain((0..t).map(|j| format!("text_{j}"))).collect();
        let events: Vec<(i64, u32)> = log.events.iter().map(|e| (e.timestamp, e.item)).collect();
        let periods = monthly_profiles(&events, h + t, |i| {
            let row = emb.row_of(log.items.key(i))?;
            let mut x = emb.mean_audio(row);
            x.extend(emb.text(row).iter().map(|&v| f64::from(v)));
            Some(x)
        })?;
        sides.extend(side("item", fields, periods)?);
    }
    Ok(DriftReport {
        sides,
        skipped_months: skipped,
    })
}

/// Writes `drift.json`, `drift_periods.csv` and `drift_pca.csv`.
pub fn cmd_drift(cfg: &RunConfig) -> Result<(DriftReport, Manifest)> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| PipelineError::io(&cfg.out_dir, e))?;
    let inputs = load_inputs(cfg, true)?;
    let log = inputs.events.as_ref().expect("events requested");
    let report = drift_report(log, inputs.user_meta.as_ref(), inputs.embeddings.as_ref())?;
    write_json(&cfg.out_dir.join("drift.json"), &report)?;
    write_text(&cfg.out_dir.join("drift_periods.csv"), &report.periods_csv())?;
    write_text(&cfg.out_dir.join("drift_pca.csv"), &report.projection_csv())?;
    let mut m = Manifest::new(Command::Drift, cfg);
    for f in &inputs.files {
        if f.exists() {
            m.add_input(f)?;
        }
    }
    for o in ["drift.json", "drift_periods.csv", "drift_pca.csv"] {
        m.add_output(o)?;
    }
    m.write()?;
    Ok((report, m))
}
