//! Infinite-temperature trace contractions.

use std::ops::Range;

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par};

use super::split::{adj_matmul_rm, matmul_rm};
use super::{CanonicalForm, Mpo, SiteTensor, PHYS};
use crate::algebra::{ChainGeometry, LocalOperator, OperatorString};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ONE, ZERO};

/// One step of `E' = Σ conj(A) E B` over a site, `E` is `dla × dlb`.
fn transfer(e: &[C64], a: &SiteTensor, b: &SiteTensor) -> Vec<C64> {
    let z = matmul_rm(e, &b.data, a.dl, b.dl, PHYS * b.dr);
    adj_matmul_rm(&a.data, &z, a.dl * PHYS, a.dr, b.dr)
}

/// `⟨a|b⟩ = Σ conj(a)·b` over the full network.
pub(crate) fn overlap(a: &Mpo, b: &Mpo) -> C64 {
    let mut e = vec![ONE];
    for (ta, tb) in a.tensors.iter().zip(&b.tensors) {
        e = transfer(&e, ta, tb);
    }
    e[0]
}

/// `V† T V` on the physical legs of one site.
fn sandwich(t: &SiteTensor, v: &LocalOperator) -> SiteTensor {
    let m = v.matrix();
    let mut out = SiteTensor::zeros(t.dl, t.dr);
    for l in 0..t.dl {
        for ob in 0..3 {
            for ia in 0..3 {
                let dst = out.idx(l, 3 * ob + ia, 0);
                for c in 0..3 {
                    let vc = m[c][ob].conj();
                    if vc == ZERO {
                        continue;
                    }
                    for d in 0..3 {
                        let z = vc * m[d][ia];
                        if z == ZERO {
                            continue;
                        }
                        let src = t.idx(l, 3 * c + d, 0);
                        for r in 0..t.dr {
                            out.data[dst + r] += z * t.data[src + r];
                        }
                    }
                }
            }
        }
    }
    out
}

fn contract_range(w: &Mpo, v: &OperatorString, s0: usize, s1: usize) -> C64 {
    let d0 = w.tensor(s0).dl;
    let mut e = vec![ZERO; d0 * d0];
    for i in 0..d0 {
        e[i * d0 + i] = ONE;
    }
    for site in s0..=s1 {
        let t = w.tensor(site);
        let op = v.local(site);
        e = if op.is_identity() { transfer(&e, t, t) } else { transfer(&e, t, &sandwich(t, &op)) };
    }
    let d1 = w.tensor(s1).dr;
    let tr: C64 = (0..d1).map(|i| e[i * d1 + i]).sum();
    tr * v.phase().norm_sqr()
}

fn check_sizes(w: &Mpo, v: &OperatorString, geom: ChainGeometry) -> Result<()> {
    if w.n_sites() != v.n_sites() || w.n_sites() != geom.n_spins() {
        return Err(Error::Precondition("MPO, operator and geometry sizes differ".into()));
    }
    Ok(())
}

/// `⟨W† V† W V⟩ = Tr(·)/3^N` for a static string `V` anchored to one end of
/// the chain. Sites where `V` is the identity and `W` is canonical reduce to
/// identities, so only the stretch between `V`'s support and the
/// orthogonality center is contracted.
pub fn otoc_contract(w: &Mpo, v: &OperatorString, geom: ChainGeometry) -> Result<C64> {
    check_sizes(w, v, geom)?;
    let n = w.n_sites();
    let Some((m, mm)) = v.support_range() else {
        return Ok(C64::from(w.vector_norm_sqr() * v.phase().norm_sqr()));
    };
    if m != 1 && mm != n {
        return Err(Error::NotAnchored(format!("support {m}..={mm} touches neither end of 1..={n}")));
    }
    let (s0, s1) = match w.canonical_form() {
        CanonicalForm::Mixed { center } => (m.min(center), mm.max(center)),
        CanonicalForm::LeftUpTo(k) => (m.min(k + 1).min(n), n),
        CanonicalForm::None => (1, n),
    };
    Ok(contract_range(w, v, s0, s1))
}

/// Same trace without any canonical-form shortcut.
pub fn otoc_contract_full(w: &Mpo, v: &OperatorString, geom: ChainGeometry) -> Result<C64> {
    check_sizes(w, v, geom)?;
    Ok(contract_range(w, v, 1, w.n_sites()))
}

/// Bond indices of an MPO regrouped so each Z3 charge occupies a contiguous
/// range. Without symmetry everything sits in charge 0.
struct Sorted {
    tensors: Vec<SiteTensor>,
    ranges: Vec<[Range<usize>; 3]>,
}

impl Sorted {
    fn new(m: &Mpo, symmetric: bool) -> Self {
        let n = m.n_sites();
        let mut perms = Vec::with_capacity(n + 1);
        let mut ranges = Vec::with_capacity(n + 1);
        for b in 0..=n {
            let q = &m.charges[b];
            let d = q.len();
            if symmetric {
                let mut p: Vec<usize> = (0..d).collect();
                p.sort_by_key(|&i| q[i]);
                let c0 = q.iter().filter(|&&x| x == 0).count();
                let c1 = c0 + q.iter().filter(|&&x| x == 1).count();
                perms.push(p);
                ranges.push([0..c0, c0..c1, c1..d]);
            } else {
                perms.push((0..d).collect());
                ranges.push([0..d, d..d, d..d]);
            }
        }
        let tensors = m
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (pl, pr) = (&perms[i], &perms[i + 1]);
                let mut out = SiteTensor::zeros(t.dl, t.dr);
                for (l, &ol) in pl.iter().enumerate() {
                    for p in 0..PHYS {
                        let dst = out.idx(l, p, 0);
                        let src = t.idx(ol, p, 0);
                        for (r, &or) in pr.iter().enumerate() {
                            out.data[dst + r] = t.data[src + or];
                        }
                    }
                }
                out
            })
            .collect();
        Self { tensors, ranges }
    }
}

fn view(data: &[C64], nrows: usize, ncols: usize) -> MatRef<'_, C64> {
    MatRef::from_row_major_slice(data, nrows, ncols)
}

/// `dst[rows, cols] += lhs · rhs` on row-major buffers.
fn gemm_add(dst: &mut [C64], ncols: usize, lhs: MatRef<'_, C64>, rhs: MatRef<'_, C64>, row0: usize, col0: usize) {
    let (m, k, n) = (lhs.nrows(), lhs.ncols(), rhs.ncols());
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let total_rows = dst.len() / ncols;
    let d = MatMut::from_row_major_slice_mut(dst, total_rows, ncols).submatrix_mut(row0, col0, m, n);
    matmul(d, Accum::Add, lhs, rhs, ONE, Par::Seq);
}

/// A fused index `(u, bond)` split into three charge groups. `list[g]` holds
/// the members of group `g` in order and `pos[u][bond]` their position in the
/// concatenation of all groups.
struct Grouping {
    list: [Vec<(usize, usize)>; 3],
    pos: Vec<Vec<usize>>,
}

impl Grouping {
    fn new(nu: usize, nb: usize, group: impl Fn(usize, usize) -> usize) -> Self {
        let mut list: [Vec<(usize, usize)>; 3] = Default::default();
        for u in 0..nu {
            for b in 0..nb {
                list[group(u, b)].push((u, b));
            }
        }
        let mut pos = vec![vec![0usize; nb]; nu];
        let mut at = 0;
        for l in &list {
            for &(u, b) in l {
                pos[u][b] = at;
                at += 1;
            }
        }
        Self { list, pos }
    }

    fn start(&self, g: usize) -> usize {
        self.list[..g].iter().map(Vec::len).sum()
    }

    fn len(&self) -> usize {
        self.list.iter().map(Vec::len).sum()
    }
}

/// Charge of every bond index of a sorted MPO bond.
fn charge_table(r: &[Range<usize>; 3]) -> Vec<usize> {
    let mut q = vec![0usize; r[2].end];
    for (c, rg) in r.iter().enumerate() {
        q[rg.clone()].iter_mut().for_each(|x| *x = c);
    }
    q
}

/// Elements per intermediate buffer in the four-layer contraction.
const CHUNK_ELEMENTS: usize = 1 << 22;

/// `⟨A† B† A B⟩ = Tr(·)/3^N` for two MPOs, contracted as a four-layer
/// network. The environment `E[a1, a2, a3, a4]` is swept through in chunks
/// of the last layer's bond index so intermediates stay bounded. With Z3
/// symmetry each product splits into three charge groups.
pub fn timesplit_contract(a: &Mpo, b: &Mpo) -> Result<C64> {
    if a.n_sites() != b.n_sites() {
        return Err(Error::Precondition("MPO lengths differ".into()));
    }
    let sym = a.symmetric && b.symmetric;
    let (sa, sb) = (Sorted::new(a, sym), Sorted::new(b, sym));
    let grp = |q: usize, shift: usize| if sym { (q + shift) % 3 } else { 0 };
    let mut env = vec![ONE];
    for site in 0..a.n_sites() {
        let (ta, tb) = (&sa.tensors[site], &sb.tensors[site]);
        let (al, ar, bl, br) = (ta.dl, ta.dr, tb.dl, tb.dr);
        let (qal, qar) = (charge_table(&sa.ranges[site]), charge_table(&sa.ranges[site + 1]));
        let (qbl, qbr) = (charge_table(&sb.ranges[site]), charge_table(&sb.ranges[site + 1]));
        let ral = &sa.ranges[site];

        // step 1: rows (y, x, b1) grouped by q(b1) − y + x = q(a1)
        let g1 = Grouping::new(PHYS, ar, |yx, b1| grp(qar[b1] + 6 - yx / 3 + yx % 3, 0));
        let blk1: Vec<CMat> = (0..3)
            .map(|g| {
                let rows = &g1.list[g];
                let cols = ral[g].clone();
                CMat::from_fn(rows.len(), cols.len(), |i, j| {
                    let (yx, b1) = rows[i];
                    ta.data[ta.idx(cols.start + j, yx, b1)].conj()
                })
            })
            .collect();
        // step 2: k = (y, a2) grouped by q(a2) − y, n = (z, b2) by q(b2) − z
        let k2 = Grouping::new(3, bl, |y, a2| grp(qbl[a2] + 3 - y, 0));
        let n2 = Grouping::new(3, br, |z, b2| grp(qbr[b2] + 3 - z, 0));
        let blk2: Vec<CMat> = (0..3)
            .map(|g| {
                let (rows, cols) = (&k2.list[g], &n2.list[g]);
                CMat::from_fn(rows.len(), cols.len(), |i, j| {
                    let ((y, a2), (z, b2)) = (rows[i], cols[j]);
                    tb.data[tb.idx(a2, 3 * z + y, b2)].conj()
                })
            })
            .collect();
        // step 3: k = (z, a3) grouped by q(a3) + z, n = (w, b3) by q(b3) + w
        let k3 = Grouping::new(3, al, |z, a3| grp(qal[a3] + z, 0));
        let n3 = Grouping::new(3, ar, |w, b3| grp(qar[b3] + w, 0));
        let blk3: Vec<CMat> = (0..3)
            .map(|g| {
                let (rows, cols) = (&k3.list[g], &n3.list[g]);
                CMat::from_fn(rows.len(), cols.len(), |i, j| {
                    let ((z, a3), (w, b3)) = (rows[i], cols[j]);
                    ta.data[ta.idx(a3, 3 * z + w, b3)]
                })
            })
            .collect();

        let per_a4 = PHYS * ar.max(al) * bl.max(br) * al.max(ar);
        let chunk = (CHUNK_ELEMENTS / per_a4.max(1)).clamp(1, bl);
        let mut next = vec![ZERO; ar * br * ar * br];
        let mut c0 = 0;
        while c0 < bl {
            let c = chunk.min(bl - c0);
            // S[a1, (a2, a3, a4c)]
            let mut s = Vec::with_capacity(al * bl * al * c);
            for head in 0..al * bl * al {
                s.extend_from_slice(&env[head * bl + c0..head * bl + c0 + c]);
            }
            if s.iter().all(|z| *z == ZERO) {
                c0 += c;
                continue;
            }
            let n1 = bl * al * c;
            // S1[g1 rows, (a2, a3, a4c)] = Σ_a1 conj(A[a1, (y, x), b1]) S[a1, ..]
            let mut s1 = vec![ZERO; g1.len() * n1];
            let sv = view(&s, al, n1);
            for g in 0..3 {
                gemm_add(&mut s1, n1, blk1[g].as_ref(), sv.subrows(ral[g].start, ral[g].len()), g1.start(g), 0);
            }
            drop(s);
            // S1p[(x, b1, a3, a4c), k2]
            let nk2 = k2.len();
            let mut s1p = Vec::with_capacity(3 * ar * al * c * nk2);
            let mut table = vec![0usize; nk2];
            for x in 0..3 {
                for b1 in 0..ar {
                    for l in &k2.list {
                        for &(y, a2) in l {
                            table[k2.pos[y][a2]] = g1.pos[3 * y + x][b1] * n1 + a2 * al * c;
                        }
                    }
                    for off in 0..al * c {
                        s1p.extend(table.iter().map(|&t| s1[t + off]));
                    }
                }
            }
            drop(s1);
            let m2 = 3 * ar * al * c;
            // S2[(x, b1, a3, a4c), n2] = Σ S1p · conj(B[a2, (z, y), b2])
            let nn2 = n2.len();
            let mut s2 = vec![ZERO; m2 * nn2];
            let lv = view(&s1p, m2, nk2);
            for g in 0..3 {
                gemm_add(&mut s2, nn2, lv.subcols(k2.start(g), k2.list[g].len()), blk2[g].as_ref(), 0, n2.start(g));
            }
            drop(s1p);
            // S2p[(x, b1, b2, a4c), k3]
            let nk3 = k3.len();
            let mut s2p = Vec::with_capacity(3 * ar * br * c * nk3);
            let mut table = vec![0usize; nk3];
            for x in 0..3 {
                for b1 in 0..ar {
                    let base = (x * ar + b1) * al * c * nn2;
                    for b2 in 0..br {
                        for l in &k3.list {
                            for &(z, a3) in l {
                                table[k3.pos[z][a3]] = base + a3 * c * nn2 + n2.pos[z][b2];
                            }
                        }
                        for cc in 0..c {
                            let off = cc * nn2;
                            s2p.extend(table.iter().map(|&t| s2[t + off]));
                        }
                    }
                }
            }
            drop(s2);
            let m3 = 3 * ar * br * c;
            // S3[(x, b1, b2, a4c), n3] = Σ S2p · A[a3, (z, w), b3]
            let nn3 = n3.len();
            let mut s3 = vec![ZERO; m3 * nn3];
            let lv = view(&s2p, m3, nk3);
            for g in 0..3 {
                gemm_add(&mut s3, nn3, lv.subcols(k3.start(g), k3.list[g].len()), blk3[g].as_ref(), 0, n3.start(g));
            }
            drop(s2p);
            // step 4: k = (w, x, a4c) grouped by q(a4) + w − x = q(b4)
            let k4 = Grouping::new(PHYS, c, |wx, cc| grp(qbl[c0 + cc] + 3 + wx / 3 - wx % 3, 0));
            let nk4 = k4.len();
            // S3p[(b1, b2, b3), k4]
            let mut s3p = Vec::with_capacity(ar * br * ar * nk4);
            let mut table = vec![0usize; nk4];
            for b1 in 0..ar {
                for b2 in 0..br {
                    for b3 in 0..ar {
                        for l in &k4.list {
                            for &(wx, cc) in l {
                                let (w, x) = (wx / 3, wx % 3);
                                table[k4.pos[wx][cc]] =
                                    (((x * ar + b1) * br + b2) * c + cc) * nn3 + n3.pos[w][b3];
                            }
                        }
                        s3p.extend(table.iter().map(|&t| s3[t]));
                    }
                }
            }
            drop(s3);
            let m4 = ar * br * ar;
            // E'[(b1, b2, b3), b4] += Σ S3p · B[a4, (w, x), b4]
            let lv = view(&s3p, m4, nk4);
            for g in 0..3 {
                let rows = &k4.list[g];
                let cols = sb.ranges[site + 1][g].clone();
                if rows.is_empty() || cols.is_empty() {
                    continue;
                }
                let blk = CMat::from_fn(rows.len(), cols.len(), |i, j| {
                    let (wx, cc) = rows[i];
                    tb.data[tb.idx(c0 + cc, wx, cols.start + j)]
                });
                gemm_add(&mut next, br, lv.subcols(k4.start(g), rows.len()), blk.as_ref(), 0, cols.start);
            }
            c0 += c;
        }
        // both layers carry a 1/√3 per site relative to the normalized trace
        next.iter_mut().for_each(|z| *z *= 3.0);
        env = next;
    }
    Ok(env[0])
}
