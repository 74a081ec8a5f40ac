//! Dataset loading, feature scaling, and stratified cross-validation folds.
//!
//! The native file format is line-oriented: a header `#MLL n=<n> d=<d>
//! q=<q>`, an optional `#LABELS name,...` line, then one line per instance
//! with `d` comma-separated reals, a `|`, and `q` comma-separated 0/1
//! labels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MultiLabelDataset {
    pub features: Array2<f64>,
    pub labels: Array2<u8>,
    pub label_names: Option<Vec<String>>,
}

impl MultiLabelDataset {
    pub fn new(features: Array2<f64>, labels: Array2<u8>) -> Result<Self> {
        if features.nrows() != labels.nrows() {
            return Err(Error::ShapeMismatch {
                context: "dataset",
                expected: format!("{} label rows", features.nrows()),
                actual: format!("{}", labels.nrows()),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::Domain {
                name: "label",
                value: f64::NAN,
                expected: "{0, 1}",
            });
        }
        Ok(MultiLabelDataset {
            features,
            labels,
            label_names: None,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn q(&self) -> usize {
        self.labels.ncols()
    }

    /// Feature rows for a set of indices, densely packed.
    pub fn gather_features(&self, idx: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((idx.len(), self.d()), |(r, c)| self.features[[idx[r], c]])
    }

    /// Label rows for a set of indices.
    pub fn gather_labels(&self, idx: &[usize]) -> Array2<u8> {
        Array2::from_shape_fn((idx.len(), self.q()), |(r, c)| self.labels[[idx[r], c]])
    }

    /// Labels as f64 for loss math.
    pub fn gather_labels_f64(&self, idx: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((idx.len(), self.q()), |(r, c)| {
            f64::from(self.labels[[idx[r], c]])
        })
    }
}

fn parse_header_fields(line: &str, path: &str) -> Result<(usize, usize, usize)> {
    let bad = |message: String| Error::Parse {
        path: path.into(),
        line: 1,
        message,
    };
    let rest = line
        .strip_prefix("#MLL")
        .ok_or_else(|| bad("expected header starting with #MLL".into()))?;
    let (mut n, mut d, mut q) = (None, None, None);
    for tok in rest.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header field '{tok}'")))?;
        let value: usize = value
            .parse()
            .map_err(|_| bad(format!("bad integer in header field '{tok}'")))?;
        match key {
            "n" => n = Some(value),
            "d" => d = Some(value),
            "q" => q = Some(value),
            other => return Err(bad(format!("unknown header field '{other}'"))),
        }
    }
    match (n, d, q) {
        (Some(n), Some(d), Some(q)) if n > 0 && d > 0 && q > 0 => Ok((n, d, q)),
        (Some(_), Some(_), Some(_)) => Err(bad("n, d, q must all be positive".into())),
        _ => Err(bad("header must set n=, d=, q=".into())),
    }
}

/// Reads a dataset in the native format described at module level.
pub fn load_mll(path: &Path) -> Result<MultiLabelDataset> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::Parse {
        path: display.clone(),
        line: 0,
        message: format!("cannot open: {e}"),
    })?;
    read_mll(BufReader::new(file), &display)
}

/// Same as [`load_mll`] but from any reader; `path` only labels errors.
pub fn read_mll<R: BufRead>(reader: R, path: &str) -> Result<MultiLabelDataset> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(l))) => l,
        Some((_, Err(e))) => return Err(e.into()),
        None => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: "empty file".into(),
            })
        }
    };
    let (n, d, q) = parse_header_fields(&header, path)?;

    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n * q);
    let mut label_names: Option<Vec<String>> = None;
    let mut rows = 0usize;
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line?;
        let bad = |message: String| Error::Parse {
            path: path.into(),
            line: lineno,
            message,
        };
        if line.is_empty() {
            continue;
        }
        if let Some(names) = line.strip_prefix("#LABELS") {
            let names: Vec<String> = names
                .trim()
                .split(',')
                .map(|s| s.trim().to_string())
                .collect();
            if names.len() != q {
                return Err(bad(format!(
                    "expected {q} label names, got {}",
                    names.len()
                )));
            }
            label_names = Some(names);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (feat_part, label_part) = line
            .split_once('|')
            .ok_or_else(|| bad("missing '|' separator".into()))?;
        let mut count = 0usize;
        for tok in feat_part.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad feature value '{}'", tok.trim())))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite feature value '{}'", tok.trim())));
            }
            features.push(v);
            count += 1;
        }
        if count != d {
            return Err(bad(format!("expected {d} features, got {count}")));
        }
        let mut count = 0usize;
        for tok in label_part.split(',') {
            let y = match tok.trim() {
                "0" => 0u8,
                "1" => 1u8,
                other => return Err(bad(format!("label must be 0 or 1, got '{other}'"))),
            };
            labels.push(y);
            count += 1;
        }
        if count != q {
            return Err(bad(format!("expected {q} labels, got {count}")));
        }
        rows += 1;
        if rows > n {
            return Err(bad(format!("more than the declared {n} data rows")));
        }
    }
    if rows != n {
        return Err(Error::Parse {
            path: path.into(),
            line: rows + 1,
            message: format!("header declares {n} rows but file has {rows}"),
        });
    }
    let features = Array2::from_shape_vec((n, d), features).expect("counted shape");
    let labels = Array2::from_shape_vec((n, q), labels).expect("counted shape");
    let mut ds = MultiLabelDataset::new(features, labels)?;
    ds.label_names = label_names;
    Ok(ds)
}

/// Writes a dataset in the native format with full f64 round-trip
/// precision.
pub fn write_mll(ds: &MultiLabelDataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "#MLL n={} d={} q={}", ds.n(), ds.d(), ds.q())?;
    if let Some(names) = &ds.label_names {
        writeln!(out, "#LABELS {}", names.join(","))?;
    }
    for i in 0..ds.n() {
        let feats = ds
            .features
            .row(i)
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",");
        let labs = ds
            .labels
            .row(i)
            .iter()
            .map(|y| y.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{feats}|{labs}")?;
    }
    out.flush()?;
    Ok(())
}

/// Per-feature min-max scaler fitted on a subset of rows (the training
/// fold) and applied everywhere.  Constant features map to 0; rows outside
/// the fitted range simply land outside [0, 1].
#[derive(Debug, Clone)]
pub struct MinMaxScaler {
    lo: Array1<f64>,
    span: Array1<f64>,
}

impl MinMaxScaler {
    pub fn fit(features: ArrayView2<'_, f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Precondition("scaler fitted on no rows".into()));
        }
        let d = features.ncols();
        let mut lo = Array1::from_elem(d, f64::INFINITY);
        let mut hi = Array1::from_elem(d, f64::NEG_INFINITY);
        for &i in rows {
            for c in 0..d {
                let v = features[[i, c]];
                if v < lo[c] {
                    lo[c] = v;
                }
                if v > hi[c] {
                    hi[c] = v;
                }
            }
        }
        let span = &hi - &lo;
        Ok(MinMaxScaler { lo, span })
    }

    pub fn transform(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = if self.span[c] > 0.0 {
                    (*v - self.lo[c]) / self.span[c]
                } else {
                    0.0
                };
            }
        }
        out
    }
}

/// Disjoint folds covering every instance, stratified on label positives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
}

/// Index sets for one cross-validation round.
#[derive(Debug, Clone)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold(&self, f: usize) -> &[usize] {
        &self.folds[f]
    }

    /// Round `r` tests on fold `r`, validates on fold `r+1` (mod k), and
    /// trains on the rest.  With only two folds there is no third fold to
    /// train on, so the validation set aliases the test fold and the other
    /// fold trains; epoch selection then peeks at test data, making k = 2
    /// suitable for smoke runs but not for reported numbers.
    pub fn split(&self, round: usize) -> Result<SplitIndices> {
        let k = self.k();
        if round >= k {
            return Err(Error::Config(format!("round {round} out of {k} folds")));
        }
        let val_fold = if k == 2 { round } else { (round + 1) % k };
        let mut train = Vec::new();
        for (f, fold) in self.folds.iter().enumerate() {
            if f != round && f != val_fold {
                train.extend_from_slice(fold);
            }
        }
        train.sort_unstable();
        Ok(SplitIndices {
            train,
            val: self.folds[val_fold].clone(),
            test: self.folds[round].clone(),
        })
    }
}

/// First-order iterative stratification.
///
/// Repeatedly takes the label with the fewest unassigned positive
/// instances and deals those instances to the fold wanting that label
/// most, breaking ties toward the fold with the most remaining capacity
/// and then the lowest index.  Instances with no positive labels are dealt
/// by capacity at the end.  `k` must be at least 2 and at most `n`.
pub fn stratified_kfold<R: Rng + ?Sized>(
    labels: ArrayView2<'_, u8>,
    k: usize,
    rng: &mut R,
) -> Result<FoldPlan> {
    let n = labels.nrows();
    let q = labels.ncols();
    if k < 2 || k > n {
        return Err(Error::Config(format!(
            "fold count {k} must be between 2 and the {n} instances"
        )));
    }
    let mut assigned = vec![false; n];
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    // real-valued targets: each fold wants 1/k of every label's positives
    // and 1/k of all instances
    let mut desire = Array2::<f64>::zeros((q, k));
    for j in 0..q {
        let pos = labels.column(j).iter().filter(|&&y| y == 1).count() as f64;
        for f in 0..k {
            desire[[j, f]] = pos / k as f64;
        }
    }
    let mut capacity = vec![n as f64 / k as f64; k];

    loop {
        // label with the fewest remaining positives, at least one
        let mut pick: Option<(usize, usize)> = None;
        for j in 0..q {
            let remaining = (0..n)
                .filter(|&i| !assigned[i] && labels[[i, j]] == 1)
                .count();
            if remaining > 0 && pick.is_none_or(|(_, best)| remaining < best) {
                pick = Some((j, remaining));
            }
        }
        let Some((j, _)) = pick else { break };
        let mut instances: Vec<usize> = (0..n)
            .filter(|&i| !assigned[i] && labels[[i, j]] == 1)
            .collect();
        instances.shuffle(rng);
        for i in instances {
            let f = best_fold(&desire, j, &capacity, k);
            folds[f].push(i);
            assigned[i] = true;
            for jj in 0..q {
                if labels[[i, jj]] == 1 {
                    desire[[jj, f]] -= 1.0;
                }
            }
            capacity[f] -= 1.0;
        }
    }

    let mut rest: Vec<usize> = (0..n).filter(|&i| !assigned[i]).collect();
    rest.shuffle(rng);
    for i in rest {
        let f = (0..k)
            .max_by(|&a, &b| capacity[a].total_cmp(&capacity[b]))
            .unwrap();
        folds[f].push(i);
        capacity[f] -= 1.0;
    }

    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { folds })
}

fn best_fold(desire: &Array2<f64>, j: usize, capacity: &[f64], k: usize) -> usize {
    let mut best = 0usize;
    for f in 1..k {
        let d = desire[[j, f]];
        let b = desire[[j, best]];
        if d > b || (d == b && capacity[f] > capacity[best]) {
            best = f;
        }
    }
    best
}
