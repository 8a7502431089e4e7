//! Feature database, query ranking, evaluation and the on-disk format.
//!
//! Rankings are by fused distance ascending with ties broken by database
//! insertion order, everywhere.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::datasets::LabeledImage;
use crate::decimal::{format_sig9, quantize9};
use crate::error::{Error, Result};
use crate::gaussian::ScaleBank;
use crate::metrics::{block_distances, fuse, MetricId, WeightVector};
use crate::patterns::{extract_feature, FeatureRecord};
use crate::FEATURE_LEN;

/// First line of a database file.
pub const DB_MAGIC: &str = "FLNIPDB";
pub const DB_VERSION: &str = "1";

/// Ordered, labeled collection of feature records sharing one scale bank.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDatabase {
    records: Vec<FeatureRecord>,
    bank: ScaleBank,
    /// category index of each record
    labels: Vec<usize>,
    /// category names and members, in order of first appearance
    categories: Vec<(String, Vec<usize>)>,
}

fn check_label(s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidLabel(s.to_string()));
    }
    Ok(())
}

impl FeatureDatabase {
    pub fn new(records: Vec<FeatureRecord>, bank: ScaleBank) -> Result<Self> {
        if bank.len() != 3 {
            return Err(Error::InvalidScaleBank(format!("expected 3 sigmas, got {}", bank.len())));
        }
        let mut ids = HashMap::with_capacity(records.len());
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut categories: Vec<(String, Vec<usize>)> = Vec::new();
        let mut labels = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.feature.len() != FEATURE_LEN {
                return Err(Error::LengthMismatch(r.feature.len(), FEATURE_LEN));
            }
            if r.category.is_empty() {
                return Err(Error::EmptyCategoryName(r.id.clone()));
            }
            check_label(&r.id)?;
            check_label(&r.category)?;
            if ids.insert(r.id.as_str(), i).is_some() {
                return Err(Error::DuplicateId(r.id.clone()));
            }
            let c = *index.entry(r.category.as_str()).or_insert_with(|| {
                categories.push((r.category.clone(), Vec::new()));
                categories.len() - 1
            });
            categories[c].1.push(i);
            labels.push(c);
        }
        Ok(FeatureDatabase {
            records,
            bank,
            labels,
            categories,
        })
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn bank(&self) -> &ScaleBank {
        &self.bank
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Category index of every record.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn categories(&self) -> &[(String, Vec<usize>)] {
        &self.categories
    }

    pub fn category_size(&self, name: &str) -> usize {
        self.categories
            .iter()
            .find(|(n, _)| n == name)
            .map_or(0, |(_, m)| m.len())
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }
}

/// Extracts features for every image, in parallel, keeping input order.
pub fn build_index(images: &[LabeledImage], bank: &ScaleBank) -> Result<FeatureDatabase> {
    if images.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut seen = std::collections::HashSet::with_capacity(images.len());
    for img in images {
        if !seen.insert(img.id.as_str()) {
            return Err(Error::DuplicateId(img.id.clone()));
        }
    }
    let records = images
        .par_iter()
        .map(|li| extract_feature(&li.image, bank, li.id.clone(), li.category.clone()))
        .collect::<Result<Vec<_>>>()?;
    FeatureDatabase::new(records, bank.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub index: usize,
    pub id: String,
    pub category: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query_id: Option<String>,
    pub ranked: Vec<Hit>,
}

#[inline]
fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Sorts `(distance, index)` pairs and keeps the best `k`.
fn rank_top(mut scored: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_distance_then_index);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_distance_then_index);
    scored
}

/// Ranks the whole database against `q` and returns the first `top_k` hits.
pub fn query(db: &FeatureDatabase, q: &[f64], w: &WeightVector, top_k: usize) -> Result<QueryResult> {
    query_with(db, q, w, top_k, MetricId::D1)
}

pub fn query_with(
    db: &FeatureDatabase,
    q: &[f64],
    w: &WeightVector,
    top_k: usize,
    metric: MetricId,
) -> Result<QueryResult> {
    if q.len() != FEATURE_LEN {
        return Err(Error::LengthMismatch(q.len(), FEATURE_LEN));
    }
    if top_k == 0 {
        return Err(Error::NOutOfRange { n: 0, max: db.len() });
    }
    let scored: Vec<(f64, usize)> = db
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (fuse(w.as_array(), &block_distances(q, &r.feature, metric)), i))
        .collect();
    let ranked = rank_top(scored, top_k)
        .into_iter()
        .map(|(distance, index)| Hit {
            index,
            id: db.records[index].id.clone(),
            category: db.records[index].category.clone(),
            distance,
        })
        .collect();
    Ok(QueryResult {
        query_id: None,
        ranked,
    })
}

/// Fraction of the first `n` hits whose category is `truth`.
pub fn precision_at(result: &QueryResult, truth: &str, n: usize) -> Result<f64> {
    Ok(relevant_in_top(result, truth, n)? as f64 / n as f64)
}

/// Relevant hits among the first `n`, over the `category_size` relevant
/// records in the database.
pub fn recall_at(result: &QueryResult, truth: &str, category_size: usize, n: usize) -> Result<f64> {
    if category_size == 0 {
        return Err(Error::EmptyCategory(truth.to_string()));
    }
    Ok(relevant_in_top(result, truth, n)? as f64 / category_size as f64)
}

fn relevant_in_top(result: &QueryResult, truth: &str, n: usize) -> Result<usize> {
    if n == 0 || n > result.ranked.len() {
        return Err(Error::NOutOfRange {
            n,
            max: result.ranked.len(),
        });
    }
    Ok(result.ranked[..n].iter().filter(|h| h.category == truth).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub metric: MetricId,
    /// Drop each query from its own ranking; relevant count becomes size - 1.
    pub exclude_self: bool,
}

/// Precision/recall/F curves over the retrieved count, plus ARR.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_list: Vec<usize>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f_score: Vec<f64>,
    /// per category, precision at each `n` in `n_list`
    pub category_precision: Vec<(String, Vec<f64>)>,
    /// mean recall x 100 with each query cut off at its own category size
    pub arr: f64,
}

impl EvalReport {
    /// Tab-separated `n, P_tot, R_tot, F` rows followed by an `ARR` line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("n\tP_tot\tR_tot\tF\n");
        for (i, n) in self.n_list.iter().enumerate() {
            let _ = writeln!(
                out,
                "{n}\t{}\t{}\t{}",
                format_sig9(self.precision[i]),
                format_sig9(self.recall[i]),
                format_sig9(self.f_score[i])
            );
        }
        let _ = writeln!(out, "ARR\t{}", format_sig9(self.arr));
        out
    }
}

/// F-score, defined as 0 when precision and recall are both 0.
pub fn f_score(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Uses every record as a query against the whole database.
pub fn evaluate(db: &FeatureDatabase, w: &WeightVector, n_list: &[usize], opts: EvalOptions) -> Result<EvalReport> {
    let n = db.len();
    let exclude = usize::from(opts.exclude_self);
    let candidates = n - exclude;
    if let Some(&bad) = n_list.iter().find(|&&k| k == 0 || k > candidates) {
        return Err(Error::NOutOfRange { n: bad, max: candidates });
    }
    if let Some((name, _)) = db.categories.iter().find(|(_, m)| m.len() <= exclude) {
        return Err(Error::EmptyCategory(name.clone()));
    }
    let labels = &db.labels;

    // per query: (precision at each n, recall at each n, recall at own category size)
    let per_query: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|qi| {
            let q = &db.records[qi].feature;
            let scored: Vec<(f64, usize)> = db
                .records
                .iter()
                .enumerate()
                .filter(|&(i, _)| !(opts.exclude_self && i == qi))
                .map(|(i, r)| (fuse(w.as_array(), &block_distances(q, &r.feature, opts.metric)), i))
                .collect();
            let ranked = rank_top(scored, candidates);
            let mut hits = Vec::with_capacity(candidates + 1);
            hits.push(0usize);
            for (_, i) in &ranked {
                hits.push(hits.last().unwrap() + usize::from(labels[*i] == labels[qi]));
            }
            let relevant = db.categories[labels[qi]].1.len() - exclude;
            let p = n_list.iter().map(|&k| hits[k] as f64 / k as f64).collect();
            let r = n_list.iter().map(|&k| hits[k] as f64 / relevant as f64).collect();
            (p, r, hits[relevant] as f64 / relevant as f64)
        })
        .collect();

    let m = n_list.len();
    let k_cat = db.categories.len() as f64;
    let mut precision = vec![0.0; m];
    let mut recall = vec![0.0; m];
    let mut arr = 0.0;
    let mut category_precision = Vec::with_capacity(db.categories.len());
    for (name, members) in &db.categories {
        let size = members.len() as f64;
        let mut p_avg = vec![0.0; m];
        let mut r_avg = vec![0.0; m];
        let mut arr_avg = 0.0;
        for &i in members {
            let (p, r, a) = &per_query[i];
            for t in 0..m {
                p_avg[t] += p[t];
                r_avg[t] += r[t];
            }
            arr_avg += a;
        }
        p_avg.iter_mut().for_each(|v| *v /= size);
        r_avg.iter_mut().for_each(|v| *v /= size);
        for t in 0..m {
            precision[t] += p_avg[t] / k_cat;
            recall[t] += r_avg[t] / k_cat;
        }
        arr += arr_avg / size / k_cat;
        category_precision.push((name.clone(), p_avg));
    }
    let f = precision.iter().zip(&recall).map(|(&p, &r)| f_score(p, r)).collect();
    Ok(EvalReport {
        n_list: n_list.to_vec(),
        precision,
        recall,
        f_score: f,
        category_precision,
        arr: 100.0 * arr,
    })
}

/// Serializes in the line-oriented `FLNIPDB 1` text format.
pub fn save_db(db: &FeatureDatabase) -> Vec<u8> {
    let mut out = String::with_capacity(db.len() * FEATURE_LEN * 12 + 64);
    let _ = writeln!(out, "{DB_MAGIC} {DB_VERSION}");
    let _ = writeln!(out, "{} {} {}", db.len(), FEATURE_LEN, db.bank);
    for r in &db.records {
        out.push_str(&r.id);
        out.push('\t');
        out.push_str(&r.category);
        out.push('\t');
        for (i, v) in r.feature.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format_sig9(*v));
        }
        out.push('\n');
    }
    let crc = crc32fast::hash(out.as_bytes());
    let _ = writeln!(out, "CRC32 {crc:08x}");
    out.into_bytes()
}

fn corrupt(line: usize, reason: impl Into<String>) -> Error {
    Error::CorruptRecord {
        line,
        reason: reason.into(),
    }
}

/// Parses a `FLNIPDB 1` file, verifying framing and checksum.
pub fn load_db(bytes: &[u8]) -> Result<FeatureDatabase> {
    let text = std::str::from_utf8(bytes).map_err(|e| corrupt(0, format!("not UTF-8: {e}")))?;
    let first = text.split('\n').next().unwrap_or("");
    let mut magic = first.split(' ');
    if magic.next() != Some(DB_MAGIC) {
        return Err(Error::BadMagic(first.to_string()));
    }
    match magic.next() {
        Some(DB_VERSION) if magic.next().is_none() => {}
        Some(v) => return Err(Error::VersionUnsupported(v.to_string())),
        None => return Err(Error::BadMagic(first.to_string())),
    }

    // checksum trailer
    let body_end = text
        .strip_suffix('\n')
        .ok_or_else(|| corrupt(0, "missing final line feed"))?;
    let crc_start = body_end.rfind('\n').map_or(0, |p| p + 1);
    let trailer = &body_end[crc_start..];
    let stored = trailer
        .strip_prefix("CRC32 ")
        .filter(|h| h.len() == 8)
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .ok_or_else(|| corrupt(0, format!("missing checksum line, found {trailer:?}")))?;
    let body = &text[..crc_start];
    let computed = crc32fast::hash(body.as_bytes());
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let mut lines = body.lines().enumerate().skip(1);
    let (_, header) = lines.next().ok_or_else(|| corrupt(2, "missing header line"))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let [count, len, sigmas] = fields[..] else {
        return Err(corrupt(2, format!("header {header:?}")));
    };
    let count: usize = count.parse().map_err(|_| corrupt(2, "bad record count"))?;
    let len: usize = len.parse().map_err(|_| corrupt(2, "bad feature length"))?;
    if len != FEATURE_LEN {
        return Err(corrupt(2, format!("feature length {len}, expected {FEATURE_LEN}")));
    }
    let bank: ScaleBank = sigmas.parse().map_err(|e| corrupt(2, format!("{e}")))?;

    let mut records = Vec::with_capacity(count);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if records.len() == count {
            return Err(corrupt(lineno, "more records than the header count"));
        }
        let mut parts = line.split('\t');
        let (Some(id), Some(cat), Some(vals), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(corrupt(lineno, "expected id, category and values"));
        };
        let feature = vals
            .split(' ')
            .map(|t| match t.parse::<f64>() {
                Ok(v) if (0.0..=1.0).contains(&v) => Ok(quantize9(v)),
                _ => Err(corrupt(lineno, format!("bad value {t:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if feature.len() != len {
            return Err(corrupt(lineno, format!("{} values, expected {len}", feature.len())));
        }
        records.push(FeatureRecord::new(id, cat, feature)?);
    }
    if records.len() != count {
        return Err(corrupt(
            count + 2,
            format!("header promises {count} records, found {}", records.len()),
        ));
    }
    FeatureDatabase::new(records, bank)
}

pub fn write_db(db: &FeatureDatabase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, save_db(db)).map_err(|e| Error::io(path, e))
}

pub fn read_db(path: impl AsRef<Path>) -> Result<FeatureDatabase> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_db(&bytes)
}
