//! Charge-blocked SVD and QR factorizations of row-major matrices.
//!
//! A matrix whose rows and columns carry Z3 charges and whose entries vanish
//! unless the charges agree is block diagonal after sorting, so each block is
//! factorized on its own.

use faer::{MatMut, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{eigh, CMat, C64, ZERO};

/// Rows and columns belonging to one charge.
struct Block {
    charge: u8,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn blocks(row_q: &[u8], col_q: &[u8]) -> Vec<Block> {
    (0..3u8)
        .map(|c| Block {
            charge: c,
            rows: (0..row_q.len()).filter(|&i| row_q[i] == c).collect(),
            cols: (0..col_q.len()).filter(|&j| col_q[j] == c).collect(),
        })
        .filter(|b| !b.rows.is_empty() && !b.cols.is_empty())
        .collect()
}

fn gather(m: &[C64], ncols: usize, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| m[rows[i] * ncols + cols[j]])
}

/// Result of splitting `M = L · R` along a new bond.
pub(crate) struct Split {
    /// `nrows × k`, row-major.
    pub left: Vec<C64>,
    /// `k × ncols`, row-major.
    pub right: Vec<C64>,
    pub charges: Vec<u8>,
    /// Sum of squared discarded singular values over the total.
    pub discarded: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Absorb {
    /// Singular values go into the left factor; the right one is isometric.
    Left,
    /// Singular values go into the right factor; the left one is isometric.
    Right,
}

/// Singular values below this fraction of the largest, squared, are not
/// resolved by the Gram route.
const GRAM_FLOOR: f64 = 1e-12;

/// Factors of one charge block. `iso` holds the isometric factor as columns
/// (left singular vectors for `Absorb::Right`, right singular vectors for
/// `Absorb::Left`) and `rest` the other factor with the singular values
/// already folded in, one row or column per kept value.
struct Part {
    iso: CMat,
    rest: CMat,
    s: Vec<f64>,
}

/// Eigendecomposition of the Gram matrix on the isometric side; the other
/// factor follows by one product without dividing by singular values.
fn gram_part(sub: &CMat, absorb: Absorb) -> Option<Part> {
    let (gram, left_side) = match absorb {
        Absorb::Right => (sub * sub.adjoint(), true),
        Absorb::Left => (sub.adjoint() * sub, false),
    };
    let (vals, vecs) = eigh(gram.as_ref()).ok()?;
    let order: Vec<usize> = (0..vals.len()).rev().collect();
    let iso = CMat::from_fn(vecs.nrows(), order.len(), |i, j| vecs[(i, order[j])]);
    let s = order.iter().map(|&i| vals[i].max(0.0).sqrt()).collect();
    let rest = if left_side { iso.adjoint() * sub } else { sub * &iso };
    Some(Part { iso, rest, s })
}

fn svd_part(sub: &CMat, absorb: Absorb) -> Result<Part> {
    let svd = sub.thin_svd().map_err(|_| Error::Svd { rows: sub.nrows(), cols: sub.ncols() })?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Svd { rows: sub.nrows(), cols: sub.ncols() });
    }
    let (u, v) = (svd.U().to_owned(), svd.V().to_owned());
    let scaled = |m: &CMat| CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s[j]);
    Ok(match absorb {
        Absorb::Right => Part { rest: scaled(&v).adjoint().to_owned(), iso: u, s },
        Absorb::Left => Part { rest: scaled(&u), iso: v, s },
    })
}

/// Truncated SVD keeping at most `chi` values above `cutoff·s_max`. Kept
/// values are rescaled so the Frobenius norm is preserved.
///
/// Blocks are first factorized through the Gram matrix of the isometric
/// side, which is cheaper than an SVD. If any kept value falls below the
/// resolution of that route the split is redone with a full SVD.
pub(crate) fn svd_split(
    m: &[C64],
    nrows: usize,
    ncols: usize,
    row_q: &[u8],
    col_q: &[u8],
    chi: usize,
    cutoff: f64,
    absorb: Absorb,
) -> Result<Split> {
    let blks = blocks(row_q, col_q);
    let subs: Vec<CMat> = blks.iter().map(|b| gather(m, ncols, &b.rows, &b.cols)).collect();
    let gram_ok = subs.iter().all(|sub| {
        let side = if absorb == Absorb::Right { sub.nrows() } else { sub.ncols() };
        side <= 2 * sub.nrows().min(sub.ncols())
    });
    if gram_ok {
        if let Some(parts) = subs.iter().map(|sub| gram_part(sub, absorb)).collect::<Option<Vec<_>>>() {
            let split = assemble(&blks, &parts, nrows, ncols, chi, cutoff, absorb);
            if let Some(split) = split.filter(|sp| sp.resolved) {
                return Ok(split.split);
            }
        }
    }
    let parts = subs.iter().map(|sub| svd_part(sub, absorb)).collect::<Result<Vec<_>>>()?;
    Ok(assemble(&blks, &parts, nrows, ncols, chi, cutoff, absorb).expect("SVD factors are finite").split)
}

struct Assembled {
    split: Split,
    /// Every kept value lies above the Gram resolution floor.
    resolved: bool,
}

fn assemble(
    blks: &[Block],
    parts: &[Part],
    nrows: usize,
    ncols: usize,
    chi: usize,
    cutoff: f64,
    absorb: Absorb,
) -> Option<Assembled> {
    let mut values: Vec<(f64, usize, usize)> = Vec::new();
    for (bi, p) in parts.iter().enumerate() {
        if p.s.iter().any(|x| !x.is_finite()) {
            return None;
        }
        values.extend(p.s.iter().enumerate().map(|(i, &x)| (x, bi, i)));
    }
    if values.is_empty() {
        // structurally zero matrix: keep a single zero bond
        let split = Split { left: vec![ZERO; nrows], right: vec![ZERO; ncols], charges: vec![0], discarded: 0.0 };
        return Some(Assembled { split, resolved: true });
    }
    values.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let total: f64 = values.iter().map(|v| v.0 * v.0).sum();
    let smax = values[0].0;
    let keep = values.iter().take(chi.max(1)).take_while(|v| v.0 > cutoff * smax).count().max(1);
    let kept: f64 = values[..keep].iter().map(|v| v.0 * v.0).sum();
    let resolved = values[keep - 1].0 * values[keep - 1].0 >= GRAM_FLOOR * smax * smax;
    let discarded = if total > 0.0 { ((total - kept) / total).max(0.0) } else { 0.0 };
    let rescale = if kept > 0.0 { (total / kept).sqrt() } else { 1.0 };

    let mut left = vec![ZERO; nrows * keep];
    let mut right = vec![ZERO; keep * ncols];
    let mut charges = Vec::with_capacity(keep);
    for (k, &(_, bi, i)) in values[..keep].iter().enumerate() {
        let (b, p) = (&blks[bi], &parts[bi]);
        match absorb {
            Absorb::Right => {
                for (a, &r) in b.rows.iter().enumerate() {
                    left[r * keep + k] = p.iso[(a, i)];
                }
                for (a, &c) in b.cols.iter().enumerate() {
                    right[k * ncols + c] = p.rest[(i, a)] * rescale;
                }
            }
            Absorb::Left => {
                for (a, &r) in b.rows.iter().enumerate() {
                    left[r * keep + k] = p.rest[(a, i)] * rescale;
                }
                for (a, &c) in b.cols.iter().enumerate() {
                    right[k * ncols + c] = p.iso[(a, i)].conj();
                }
            }
        }
        charges.push(b.charge);
    }
    Some(Assembled { split: Split { left, right, charges, discarded }, resolved })
}

/// Exact QR-type split. With `Absorb::Right` the left factor is an isometry
/// (`M = Q R`); with `Absorb::Left` the right factor has orthonormal rows
/// (`M = L Q`).
pub(crate) fn qr_split(
    m: &[C64],
    nrows: usize,
    ncols: usize,
    row_q: &[u8],
    col_q: &[u8],
    absorb: Absorb,
) -> Split {
    let blks = blocks(row_q, col_q);
    let dims: Vec<usize> = blks.iter().map(|b| b.rows.len().min(b.cols.len())).collect();
    let k: usize = dims.iter().sum::<usize>().max(1);
    let mut left = vec![ZERO; nrows * k];
    let mut right = vec![ZERO; k * ncols];
    let mut charges = Vec::with_capacity(k);
    let mut offset = 0;
    for (b, &d) in blks.iter().zip(&dims) {
        let sub = gather(m, ncols, &b.rows, &b.cols);
        let (lf, rf) = match absorb {
            Absorb::Right => {
                let qr = sub.qr();
                (qr.compute_thin_Q(), qr.thin_R().to_owned())
            }
            Absorb::Left => {
                let adj = sub.adjoint().to_owned();
                let qr = adj.qr();
                (qr.thin_R().adjoint().to_owned(), qr.compute_thin_Q().adjoint().to_owned())
            }
        };
        for (a, &r) in b.rows.iter().enumerate() {
            for x in 0..d {
                left[r * k + offset + x] = lf[(a, x)];
            }
        }
        for x in 0..d {
            for (a, &c) in b.cols.iter().enumerate() {
                right[(offset + x) * ncols + c] = rf[(x, a)];
            }
        }
        charges.extend(std::iter::repeat(b.charge).take(d));
        offset += d;
    }
    if charges.is_empty() {
        charges.push(0);
    }
    Split { left, right, charges, discarded: 0.0 }
}

/// `C = A · B` for row-major buffers.
pub(crate) fn matmul_rm(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    let mut c = vec![ZERO; m * n];
    if m == 0 || n == 0 {
        return c;
    }
    if k == 0 {
        return c;
    }
    let ar = MatRef::from_row_major_slice(a, m, k);
    let br = MatRef::from_row_major_slice(b, k, n);
    let cm = MatMut::from_row_major_slice_mut(&mut c, m, n);
    faer::linalg::matmul::matmul(cm, faer::Accum::Replace, ar, br, C64::new(1.0, 0.0), faer::get_global_parallelism());
    c
}

/// `C = A† · B` where `A` is `k × m` and `B` is `k × n`, both row-major.
pub(crate) fn adj_matmul_rm(a: &[C64], b: &[C64], k: usize, m: usize, n: usize) -> Vec<C64> {
    let mut c = vec![ZERO; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    let ar = MatRef::from_row_major_slice(a, k, m);
    let br = MatRef::from_row_major_slice(b, k, n);
    let cm = MatMut::from_row_major_slice_mut(&mut c, m, n);
    faer::linalg::matmul::matmul(cm, faer::Accum::Replace, ar.adjoint(), br, C64::new(1.0, 0.0), faer::get_global_parallelism());
    c
}
