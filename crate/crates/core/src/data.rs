//! Logged-bandit datasets, labeled datasets, file formats and generators.
//!
//! A [`LoggedDataset`] holds the interaction log produced by a deployed
//! policy: per record a feature vector, the played action, its cost in
//! `[-1, 0]` and the exact logging propensity. When the log was produced by
//! playing each context several times, records carry a `group_id` and the
//! dataset exposes the context grouping needed by the multiple-interactions
//! bound. Storing the full logging-policy parameters alongside the records
//! lets downstream code recover `pi0(a|x)` for *every* action, which the
//! conditional moments require; per-record propensities alone would not.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::derive_seed;
use crate::policies::SoftmaxParams;

/// Tolerance for the stored-vs-recomputed logging propensity invariant.
pub const PROPENSITY_CONSISTENCY_TOL: f64 = 1e-9;

/// One logged interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRecord {
    pub features: Vec<f64>,
    pub action: usize,
    pub cost: f64,
    pub logging_propensity: f64,
    pub group_id: Option<usize>,
}

impl LoggedRecord {
    fn validate(&self, k: usize, p: usize, line: Option<usize>) -> Result<()> {
        let err = |what: &str, details: String| match line {
            Some(line) => Error::Parse {
                line,
                message: format!("{what} {details}"),
            },
            None => Error::range(what, details),
        };
        if self.features.len() != p {
            return Err(err(
                "features",
                format!("expected length {p}, got {}", self.features.len()),
            ));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(err("features", "non-finite entry".into()));
        }
        if self.action >= k {
            return Err(err("action", format!("{} not in [0, {k})", self.action)));
        }
        if !(self.cost >= -1.0 && self.cost <= 0.0) {
            return Err(err("cost", format!("{} not in [-1, 0]", self.cost)));
        }
        if !(self.logging_propensity > 0.0 && self.logging_propensity <= 1.0) {
            return Err(err(
                "propensity",
                format!("{} not in (0, 1]", self.logging_propensity),
            ));
        }
        Ok(())
    }
}

/// A logged-bandit dataset with shared action count `K` and feature
/// dimension `p`. Construction validates every invariant; the struct is
/// immutable afterwards.
#[derive(Debug, Clone)]
pub struct LoggedDataset {
    records: Vec<LoggedRecord>,
    num_actions: usize,
    feature_dim: usize,
    logger_params: Option<SoftmaxParams>,
    /// Contiguous record ranges, one per context. Singletons when ungrouped.
    context_ranges: Vec<Range<usize>>,
    grouped: bool,
}

impl LoggedDataset {
    pub fn new(
        records: Vec<LoggedRecord>,
        num_actions: usize,
        feature_dim: usize,
        logger_params: Option<SoftmaxParams>,
    ) -> Result<Self> {
        Self::build(records, num_actions, feature_dim, logger_params, false)
    }

    fn build(
        records: Vec<LoggedRecord>,
        num_actions: usize,
        feature_dim: usize,
        logger_params: Option<SoftmaxParams>,
        from_file: bool,
    ) -> Result<Self> {
        if num_actions < 2 {
            return Err(Error::range("K", format!("{num_actions} < 2")));
        }
        if feature_dim < 1 {
            return Err(Error::range("p", format!("{feature_dim} < 1")));
        }
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(logger) = &logger_params {
            if logger.num_actions() != num_actions || logger.feature_dim() != feature_dim {
                return Err(Error::dim(
                    "logger parameters",
                    num_actions * feature_dim,
                    logger.num_actions() * logger.feature_dim(),
                ));
            }
        }

        let grouped = records[0].group_id.is_some();
        let mut ranges = Vec::new();
        let mut start = 0usize;
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        for (i, rec) in records.iter().enumerate() {
            let line = from_file.then_some(i + 2);
            rec.validate(num_actions, feature_dim, line)?;
            if rec.group_id.is_some() != grouped {
                return Err(Error::Invalid(format!(
                    "record {i}: mixed grouped and ungrouped records"
                )));
            }
            if let Some(logger) = &logger_params {
                let recomputed = logger.propensities(&rec.features)?[rec.action];
                if (recomputed - rec.logging_propensity).abs() > PROPENSITY_CONSISTENCY_TOL {
                    return Err(Error::Invalid(format!(
                        "record {i}: stored propensity {} differs from logger softmax {recomputed}",
                        rec.logging_propensity
                    )));
                }
            }
            if grouped {
                let gid = rec.group_id.unwrap();
                let prev = records[start].group_id.unwrap();
                if gid != prev {
                    if seen.contains(&gid) {
                        return Err(Error::Invalid(format!(
                            "record {i}: group {gid} is not contiguous"
                        )));
                    }
                    seen.insert(prev);
                    ranges.push(start..i);
                    start = i;
                } else if rec.features != records[start].features {
                    return Err(Error::Invalid(format!(
                        "record {i}: features differ within group {gid}"
                    )));
                }
            }
        }
        if grouped {
            ranges.push(start..records.len());
        } else {
            ranges = (0..records.len()).map(|i| i..i + 1).collect();
        }

        Ok(Self {
            records,
            num_actions,
            feature_dim,
            logger_params,
            context_ranges: ranges,
            grouped,
        })
    }

    pub fn records(&self) -> &[LoggedRecord] {
        &self.records
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn logger_params(&self) -> Option<&SoftmaxParams> {
        self.logger_params.as_ref()
    }

    /// Total number of records `n`.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of distinct contexts `n_c` (equals `n` when ungrouped).
    pub fn num_contexts(&self) -> usize {
        self.context_ranges.len()
    }

    pub fn is_grouped(&self) -> bool {
        self.grouped
    }

    /// Record ranges per context, contiguous and in file order.
    pub fn context_ranges(&self) -> &[Range<usize>] {
        &self.context_ranges
    }

    /// Features of context `i` (shared by all its records).
    pub fn context_features(&self, ctx: usize) -> &[f64] {
        &self.records[self.context_ranges[ctx].start].features
    }

    /// The same records with group structure dropped (each record becomes
    /// its own context).
    pub fn ungrouped_view(&self) -> Result<LoggedDataset> {
        let records = self
            .records
            .iter()
            .map(|r| LoggedRecord {
                group_id: None,
                ..r.clone()
            })
            .collect();
        LoggedDataset::new(
            records,
            self.num_actions,
            self.feature_dim,
            self.logger_params.clone(),
        )
    }
}

/// Supervised multiclass / multilabel data used to simulate bandit feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub examples: Vec<LabeledExample>,
    pub num_actions: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(examples: Vec<LabeledExample>, num_actions: usize, feature_dim: usize) -> Result<Self> {
        if num_actions < 2 {
            return Err(Error::range("K", format!("{num_actions} < 2")));
        }
        if feature_dim < 1 {
            return Err(Error::range("p", format!("{feature_dim} < 1")));
        }
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, ex) in examples.iter().enumerate() {
            if ex.features.len() != feature_dim {
                return Err(Error::dim(format!("example {i} features"), feature_dim, ex.features.len()));
            }
            if ex.labels.is_empty() {
                return Err(Error::Invalid(format!("example {i}: empty label set")));
            }
            if ex.labels.iter().any(|&l| l >= num_actions) {
                return Err(Error::Invalid(format!("example {i}: label out of [0, K)")));
            }
        }
        Ok(Self {
            examples,
            num_actions,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Plays the logging policy on supervised data, recording the sampled
/// action, its cost `-1[a in labels]` and the exact softmax propensity.
///
/// The logger weights are scaled by the inverse temperature `alpha` before
/// sampling and the scaled parameters are stored in the result, so the
/// dataset is self-contained for moment computations. With `m > 1` every
/// example is played `m` times and records carry the example index as a
/// group id. Action draws are seeded per `(example, repeat)`, so the logs
/// for m = 1, 2, 4 on the same seed are nested prefixes of one another.
pub fn convert_supervised(
    data: &LabeledDataset,
    logger: &SoftmaxParams,
    alpha: f64,
    m: usize,
    seed: u64,
) -> Result<LoggedDataset> {
    if logger.num_actions() != data.num_actions || logger.feature_dim() != data.feature_dim {
        return Err(Error::dim(
            "logger parameters",
            data.num_actions * data.feature_dim,
            logger.num_actions() * logger.feature_dim(),
        ));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::range("alpha", format!("{alpha} not in [0, inf)")));
    }
    if m < 1 {
        return Err(Error::range("m", "must be >= 1".to_string()));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let scaled = logger.scaled(alpha);
    let mut records = Vec::with_capacity(data.len() * m);
    for (i, ex) in data.examples.iter().enumerate() {
        let probs = scaled.propensities(&ex.features)?;
        for j in 0..m {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[i as u64, j as u64]));
            let u: f64 = rng.gen();
            let action = sample_categorical(&probs, u);
            let cost = if ex.labels.contains(&action) { -1.0 } else { 0.0 };
            records.push(LoggedRecord {
                features: ex.features.clone(),
                action,
                cost,
                logging_propensity: probs[action],
                group_id: (m > 1).then_some(i),
            });
        }
    }
    LoggedDataset::new(records, data.num_actions, data.feature_dim, Some(scaled))
}

fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    probs.len() - 1
}

/// Synthetic multiclass data: spherical Gaussian features labeled by the
/// argmax of a hidden random linear scorer.
pub fn make_synthetic(
    num_examples: usize,
    num_actions: usize,
    feature_dim: usize,
    label_rule_seed: u64,
    seed: u64,
) -> Result<LabeledDataset> {
    synthetic_impl(num_examples, num_actions, feature_dim, label_rule_seed, seed, false)
}

/// Multilabel variant: each non-argmax action is added as an extra label
/// independently with probability 0.1.
pub fn make_synthetic_multilabel(
    num_examples: usize,
    num_actions: usize,
    feature_dim: usize,
    label_rule_seed: u64,
    seed: u64,
) -> Result<LabeledDataset> {
    synthetic_impl(num_examples, num_actions, feature_dim, label_rule_seed, seed, true)
}

const EXTRA_LABEL_PROB: f64 = 0.1;

fn synthetic_impl(
    num_examples: usize,
    num_actions: usize,
    feature_dim: usize,
    label_rule_seed: u64,
    seed: u64,
    multilabel: bool,
) -> Result<LabeledDataset> {
    if num_examples == 0 {
        return Err(Error::EmptyDataset);
    }
    if num_actions < 2 || feature_dim < 1 {
        return Err(Error::range(
            "synthetic sizes",
            format!("K={num_actions}, p={feature_dim}"),
        ));
    }
    let mut rule_rng = ChaCha12Rng::seed_from_u64(derive_seed(label_rule_seed, &[0]));
    let scorer: Vec<Vec<f64>> = (0..num_actions)
        .map(|_| (0..feature_dim).map(|_| rule_rng.sample(StandardNormal)).collect())
        .collect();

    let mut examples = Vec::with_capacity(num_examples);
    for i in 0..num_examples {
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[1, i as u64]));
        let features: Vec<f64> = (0..feature_dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (a, row) in scorer.iter().enumerate() {
            let s = crate::math::dot(row, &features);
            if s > best_score {
                best_score = s;
                best = a;
            }
        }
        let mut labels = vec![best];
        if multilabel {
            for a in 0..num_actions {
                if a != best && rng.gen::<f64>() < EXTRA_LABEL_PROB {
                    labels.push(a);
                }
            }
        }
        examples.push(LabeledExample { features, labels });
    }
    LabeledDataset::new(examples, num_actions, feature_dim)
}

/// Seeded disjoint split: the first part has `floor(fraction * N)` examples.
pub fn split_holdout(
    data: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::range("fraction", format!("{fraction} not in (0, 1)")));
    }
    let n = data.len();
    let n_left = (fraction * n as f64).floor() as usize;
    if n_left == 0 || n_left == n {
        return Err(Error::Invalid(format!(
            "degenerate split: sizes ({n_left}, {})",
            n - n_left
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, &[2]));
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let left = indices[..n_left]
        .iter()
        .map(|&i| data.examples[i].clone())
        .collect();
    let right = indices[n_left..]
        .iter()
        .map(|&i| data.examples[i].clone())
        .collect();
    Ok((
        LabeledDataset::new(left, data.num_actions, data.feature_dim)?,
        LabeledDataset::new(right, data.num_actions, data.feature_dim)?,
    ))
}

// ---------------------------------------------------------------------------
// File formats (JSON lines with a header line; see the guide for examples).
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LoggedHeader {
    #[serde(rename = "K")]
    k: usize,
    p: usize,
    logger: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct LoggedLine {
    features: Vec<f64>,
    action: usize,
    cost: f64,
    propensity: f64,
    group: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct LabeledHeader {
    #[serde(rename = "K")]
    k: usize,
    p: usize,
}

pub fn write_dataset(data: &LoggedDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = LoggedHeader {
        k: data.num_actions,
        p: data.feature_dim,
        logger: data.logger_params.as_ref().map(|l| l.weights().to_vec()),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for rec in &data.records {
        let line = LoggedLine {
            features: rec.features.clone(),
            action: rec.action,
            cost: rec.cost,
            propensity: rec.logging_propensity,
            group: rec.group_id,
        };
        writeln!(w, "{}", serde_json::to_string(&line).expect("record serializes"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<LoggedDataset> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, header_line) = lines.next().ok_or(Error::EmptyDataset)?;
    let header: LoggedHeader = parse_json_line(&header_line?, 1)?;
    let logger = header
        .logger
        .map(SoftmaxParams::new)
        .transpose()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LoggedLine = parse_json_line(&line, idx + 1)?;
        records.push(LoggedRecord {
            features: parsed.features,
            action: parsed.action,
            cost: parsed.cost,
            logging_propensity: parsed.propensity,
            group_id: parsed.group,
        });
    }
    LoggedDataset::build(records, header.k, header.p, logger, true)
}

pub fn write_labeled(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header = LabeledHeader {
        k: data.num_actions,
        p: data.feature_dim,
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for ex in &data.examples {
        writeln!(w, "{}", serde_json::to_string(ex).expect("example serializes"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labeled(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, header_line) = lines.next().ok_or(Error::EmptyDataset)?;
    let header: LabeledHeader = parse_json_line(&header_line?, 1)?;
    let mut examples = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample = parse_json_line(&line, idx + 1)?;
        examples.push(ex);
    }
    LabeledDataset::new(examples, header.k, header.p)
}

fn parse_json_line<T: serde::de::DeserializeOwned>(line: &str, line_no: usize) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_logger(k: usize, p: usize) -> SoftmaxParams {
        SoftmaxParams::new(vec![vec![0.0; p]; k]).unwrap()
    }

    #[test]
    fn alpha_zero_gives_uniform_propensities() {
        let data = make_synthetic(50, 5, 4, 11, 12).unwrap();
        let logger = SoftmaxParams::new(
            (0..5).map(|a| (0..4).map(|j| (a * 4 + j) as f64 * 0.1).collect()).collect(),
        )
        .unwrap();
        let logged = convert_supervised(&data, &logger, 0.0, 1, 3).unwrap();
        for rec in logged.records() {
            assert!((rec.logging_propensity - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn cost_rule_is_indicator_of_label_membership() {
        let data = LabeledDataset::new(
            vec![LabeledExample {
                features: vec![1.0, 0.0],
                labels: vec![2],
            }],
            3,
            2,
        )
        .unwrap();
        let logger = uniform_logger(3, 2);
        // Scan seeds until both cases appear.
        let mut saw_hit = false;
        let mut saw_miss = false;
        for seed in 0..200 {
            let logged = convert_supervised(&data, &logger, 1.0, 1, seed).unwrap();
            let rec = &logged.records()[0];
            if rec.action == 2 {
                assert_eq!(rec.cost, -1.0);
                saw_hit = true;
            } else {
                assert_eq!(rec.cost, 0.0);
                saw_miss = true;
            }
            if saw_hit && saw_miss {
                break;
            }
        }
        assert!(saw_hit && saw_miss);
    }

    #[test]
    fn grouped_conversion_counts_and_shared_features() {
        let data = make_synthetic(10, 4, 3, 1, 2).unwrap();
        let logged = convert_supervised(&data, &uniform_logger(4, 3), 0.5, 4, 9).unwrap();
        assert_eq!(logged.len(), 40);
        assert_eq!(logged.num_contexts(), 10);
        for range in logged.context_ranges() {
            assert_eq!(range.len(), 4);
            let first = &logged.records()[range.start];
            for r in &logged.records()[range.clone()] {
                assert_eq!(r.features, first.features);
            }
        }
    }

    #[test]
    fn grouped_conversion_is_nested_in_m() {
        let data = make_synthetic(6, 3, 2, 4, 5).unwrap();
        let logger = uniform_logger(3, 2);
        let m1 = convert_supervised(&data, &logger, 0.7, 1, 42).unwrap();
        let m2 = convert_supervised(&data, &logger, 0.7, 2, 42).unwrap();
        for i in 0..6 {
            assert_eq!(m1.records()[i].action, m2.records()[2 * i].action);
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_nondegenerate() {
        let a = make_synthetic(100, 5, 10, 7, 8).unwrap();
        let b = make_synthetic(100, 5, 10, 7, 8).unwrap();
        assert_eq!(a, b);
        assert!(a.examples.iter().all(|e| !e.labels.is_empty()));

        // Frequency oracle at scale: every action appears as a label.
        let big = make_synthetic(100_000, 5, 10, 7, 8).unwrap();
        let mut counts = vec![0usize; 5];
        for ex in &big.examples {
            for &l in &ex.labels {
                counts[l] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c > 0), "counts {counts:?}");
    }

    #[test]
    fn multilabel_mode_adds_extras_at_one_tenth_rate() {
        let data = make_synthetic_multilabel(50_000, 5, 10, 3, 4).unwrap();
        let extras: usize = data.examples.iter().map(|e| e.labels.len() - 1).sum();
        let rate = extras as f64 / (50_000.0 * 4.0);
        assert!((rate - EXTRA_LABEL_PROB).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn split_sizes_partition_and_determinism() {
        let data = make_synthetic(1000, 3, 4, 5, 6).unwrap();
        let (a, b) = split_holdout(&data, 0.05, 9).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(b.len(), 950);
        let (a2, _) = split_holdout(&data, 0.05, 9).unwrap();
        assert_eq!(a, a2);

        let mut all: Vec<&LabeledExample> = a.examples.iter().chain(&b.examples).collect();
        let mut orig: Vec<&LabeledExample> = data.examples.iter().collect();
        let key = |e: &&LabeledExample| {
            e.features
                .iter()
                .map(|v| v.to_bits())
                .chain(e.labels.iter().map(|&l| l as u64))
                .collect::<Vec<u64>>()
        };
        all.sort_by_key(key);
        orig.sort_by_key(key);
        assert_eq!(all, orig);
    }

    #[test]
    fn roundtrip_and_load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let data = make_synthetic(20, 3, 2, 1, 2).unwrap();
        let logger = SoftmaxParams::new(vec![vec![0.3, -0.2], vec![0.0, 0.4], vec![-0.1, 0.1]]).unwrap();
        let logged = convert_supervised(&data, &logger, 1.0, 2, 3).unwrap();
        write_dataset(&logged, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.records(), logged.records());
        assert_eq!(back.num_actions(), logged.num_actions());
        assert_eq!(
            back.logger_params().unwrap().weights(),
            logged.logger_params().unwrap().weights()
        );

        let bad = dir.path().join("bad.jsonl");
        std::fs::write(
            &bad,
            "{\"K\":2,\"p\":1,\"logger\":null}\n{\"features\":[0.0],\"action\":0,\"cost\":0.5,\"propensity\":0.5,\"group\":null}\n",
        )
        .unwrap();
        let err = read_dataset(&bad).unwrap_err();
        assert!(err.to_string().contains("cost"), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");

        let bad2 = dir.path().join("bad2.jsonl");
        std::fs::write(
            &bad2,
            "{\"K\":2,\"p\":1,\"logger\":null}\n{\"features\":[0.0],\"action\":0,\"cost\":0.0,\"propensity\":0.0,\"group\":null}\n",
        )
        .unwrap();
        assert!(read_dataset(&bad2).is_err());
    }

    #[test]
    fn mean_logged_cost_stays_in_range() {
        let data = make_synthetic(200, 4, 3, 10, 11).unwrap();
        let logged = convert_supervised(&data, &uniform_logger(4, 3), 1.0, 1, 12).unwrap();
        let mean: f64 =
            logged.records().iter().map(|r| r.cost).sum::<f64>() / logged.len() as f64;
        assert!((-1.0..=0.0).contains(&mean));
    }

    #[test]
    fn noncontiguous_groups_rejected() {
        let mk = |gid| LoggedRecord {
            features: vec![0.0],
            action: 0,
            cost: 0.0,
            logging_propensity: 0.5,
            group_id: Some(gid),
        };
        let err = LoggedDataset::new(vec![mk(0), mk(1), mk(0)], 2, 1, None).unwrap_err();
        assert!(err.to_string().contains("contiguous"), "{err}");
    }
}
