//! Label-correlation weighting of the uncertainty matrix.
//!
//! Column pairs of the n x q uncertainty matrix are compared through a
//! histogram estimate of mutual information: each column is quantized into
//! `tau` equal-width bins over [0, 1] and MI is computed from the joint bin
//! counts, in bits.  The resulting q x q matrix reweights per-label
//! uncertainties so that uncertainty expressed consistently across
//! correlated labels counts for more than isolated noise.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_unit, Error, Result};

/// Equal-width bin index for a value in [0, 1]: `min(floor(u * tau), tau-1)`,
/// so 1.0 lands in the top bin instead of overflowing.
#[inline]
pub fn bin_index(u: f64, tau: usize) -> usize {
    ((u * tau as f64).floor() as usize).min(tau - 1)
}

/// Quantizes one column into `tau` bins, validating the domain of every
/// entry.
pub fn bin_column(col: ArrayView1<'_, f64>, tau: usize) -> Result<Vec<usize>> {
    if tau < 2 {
        return Err(Error::Domain {
            name: "tau",
            value: tau as f64,
            expected: "at least 2 bins",
        });
    }
    col.iter()
        .map(|&u| {
            check_unit("uncertainty", u)?;
            Ok(bin_index(u, tau))
        })
        .collect()
}

/// Joint and marginal bin frequencies for two equally long bin vectors.
///
/// Returns `(joint, marginal_a, marginal_b)` where `joint[[a, b]]` is the
/// fraction of positions falling in bin `a` of the first vector and bin `b`
/// of the second.  All three sum to 1.
pub fn joint_marginal(
    bins_a: &[usize],
    bins_b: &[usize],
    tau: usize,
) -> Result<(Array2<f64>, Array1<f64>, Array1<f64>)> {
    if bins_a.len() != bins_b.len() {
        return Err(Error::ShapeMismatch {
            context: "joint_marginal",
            expected: format!("{} entries", bins_a.len()),
            actual: format!("{} entries", bins_b.len()),
        });
    }
    if bins_a.is_empty() {
        return Err(Error::Precondition(
            "joint_marginal needs at least one observation".into(),
        ));
    }
    let mut joint = Array2::<f64>::zeros((tau, tau));
    for (&a, &b) in bins_a.iter().zip(bins_b) {
        joint[[a, b]] += 1.0;
    }
    joint /= bins_a.len() as f64;
    let ma = joint.sum_axis(Axis(1));
    let mb = joint.sum_axis(Axis(0));
    Ok((joint, ma, mb))
}

fn mi_from_bins(bins_a: &[usize], bins_b: &[usize], tau: usize) -> Result<f64> {
    // canonical argument order so (a, b) and (b, a) run the exact same
    // floating-point sum
    let (x, y) = if bins_a <= bins_b {
        (bins_a, bins_b)
    } else {
        (bins_b, bins_a)
    };
    let (joint, ma, mb) = joint_marginal(x, y, tau)?;
    let mut mi = 0.0;
    for a in 0..tau {
        for b in 0..tau {
            let pab = joint[[a, b]];
            if pab > 0.0 {
                mi += pab * (pab / (ma[a] * mb[b])).log2();
            }
        }
    }
    Ok(mi.max(0.0))
}

/// Histogram mutual information between two columns of values in [0, 1],
/// in bits.  Always non-negative and at most `log2(tau)`.
pub fn mutual_information(
    col_a: ArrayView1<'_, f64>,
    col_b: ArrayView1<'_, f64>,
    tau: usize,
) -> Result<f64> {
    if col_a.len() != col_b.len() {
        return Err(Error::ShapeMismatch {
            context: "mutual_information",
            expected: format!("{} entries", col_a.len()),
            actual: format!("{} entries", col_b.len()),
        });
    }
    let ba = bin_column(col_a, tau)?;
    let bb = bin_column(col_b, tau)?;
    mi_from_bins(&ba, &bb, tau)
}

/// Pairwise mutual information between the columns of an uncertainty
/// matrix, with the diagonal pinned to 1.
///
/// Needs at least two rows; fewer gives a degenerate histogram.
pub fn correlation_matrix(u: ArrayView2<'_, f64>, tau: usize) -> Result<Array2<f64>> {
    let (n, q) = u.dim();
    if n < 2 {
        return Err(Error::Precondition(format!(
            "correlation_matrix needs at least 2 rows, got {n}"
        )));
    }
    let bins: Vec<Vec<usize>> = u
        .columns()
        .into_iter()
        .map(|c| bin_column(c, tau))
        .collect::<Result<_>>()?;
    let mut c = Array2::<f64>::eye(q);
    for a in 0..q {
        for b in (a + 1)..q {
            let mi = mi_from_bins(&bins[a], &bins[b], tau)?;
            c[[a, b]] = mi;
            c[[b, a]] = mi;
        }
    }
    Ok(c)
}

/// Correlation-weighted uncertainty `U * C`.
pub fn weighted_uncertainty(u: ArrayView2<'_, f64>, c: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if u.ncols() != c.nrows() || c.nrows() != c.ncols() {
        return Err(Error::ShapeMismatch {
            context: "weighted_uncertainty",
            expected: format!("{0} x {0} correlation", u.ncols()),
            actual: format!("{} x {}", c.nrows(), c.ncols()),
        });
    }
    Ok(u.dot(&c))
}

/// Min-max normalization onto [0, 1].  A constant vector maps to all 0.5 so
/// downstream sampling degrades to uniform instead of dividing by zero.
pub fn minmax_unit(values: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if values.is_empty() {
        return Err(Error::Precondition("minmax_unit of an empty vector".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite("minmax_unit input".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == lo {
        return Ok(Array1::from_elem(values.len(), 0.5));
    }
    let span = hi - lo;
    Ok(values.mapv(|v| (v - lo) / span))
}

/// Per-instance sample weights: row sums of the weighted uncertainty,
/// min-max normalized onto [0, 1].
pub fn sample_weights(u_bar: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if u_bar.nrows() == 0 {
        return Err(Error::Precondition(
            "sample_weights of an empty matrix".into(),
        ));
    }
    let sums = u_bar.sum_axis(Axis(1));
    minmax_unit(sums.view())
}
