//! TEBD-style Heisenberg evolution: `O → G O G†` bond by bond.

use super::split::{matmul_rm, svd_split, Absorb};
use super::{CanonicalForm, Mpo, SiteTensor, TruncationReport, PHYS};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ZERO};
use crate::model::GateLayer;

/// Nonzero entries of a 9×9 gate as `(row, col, value)`.
fn sparse_gate(g: &CMat) -> Vec<(usize, usize, C64)> {
    let mut out = Vec::new();
    for r in 0..9 {
        for c in 0..9 {
            let z = g[(r, c)];
            if z.norm() > 1e-15 {
                out.push((r, c, z));
            }
        }
    }
    out
}

/// Applies `G` to the output legs and `G†` to the input legs of a two-site
/// block `θ[l, o1, i1, o2, i2, r]`.
fn conjugate_block(theta: &[C64], dl: usize, dr: usize, g: &[(usize, usize, C64)]) -> Vec<C64> {
    // strides
    let s_i2 = dr;
    let s_o2 = 3 * dr;
    let s_i1 = 9 * dr;
    let s_o1 = 27 * dr;
    let s_l = 81 * dr;
    let mut top = vec![ZERO; theta.len()];
    for l in 0..dl {
        for i1 in 0..3 {
            for i2 in 0..3 {
                let base = l * s_l + i1 * s_i1 + i2 * s_i2;
                for &(row, col, z) in g {
                    let dst = base + (row / 3) * s_o1 + (row % 3) * s_o2;
                    let src = base + (col / 3) * s_o1 + (col % 3) * s_o2;
                    for r in 0..dr {
                        top[dst + r] += z * theta[src + r];
                    }
                }
            }
        }
    }
    let mut out = vec![ZERO; theta.len()];
    for l in 0..dl {
        for o1 in 0..3 {
            for o2 in 0..3 {
                let base = l * s_l + o1 * s_o1 + o2 * s_o2;
                for &(row, col, z) in g {
                    let zc = z.conj();
                    let dst = base + (row / 3) * s_i1 + (row % 3) * s_i2;
                    let src = base + (col / 3) * s_i1 + (col % 3) * s_i2;
                    for r in 0..dr {
                        out[dst + r] += zc * top[src + r];
                    }
                }
            }
        }
    }
    out
}

impl Mpo {
    /// Conjugates bond `(b, b+1)` by `gate` and recompresses. The center ends
    /// on `b+1` when `move_right`, else on `b`. Returns the discarded weight.
    pub(crate) fn apply_bond_gate(
        &mut self,
        b: usize,
        gate: &[(usize, usize, C64)],
        chi: usize,
        cutoff: f64,
        move_right: bool,
    ) -> Result<f64> {
        match self.center() {
            Some(c) if c == b || c == b + 1 => {}
            Some(c) if c < b => self.move_center(b),
            _ => self.move_center(b + 1),
        }
        let (left, right) = (&self.tensors[b - 1], &self.tensors[b]);
        let (dl, dm, dr) = (left.dl, left.dr, right.dr);
        let theta = matmul_rm(&left.data, &right.data, dl * PHYS, dm, PHYS * dr);
        let theta = conjugate_block(&theta, dl, dr, gate);
        let rq = self.row_charges_left(b);
        let cq = self.col_charges_right(b + 1);
        let absorb = if move_right { Absorb::Right } else { Absorb::Left };
        let s = svd_split(&theta, dl * PHYS, PHYS * dr, &rq, &cq, chi, cutoff, absorb)?;
        let k = s.charges.len();
        self.tensors[b - 1] = SiteTensor { dl, dr: k, data: s.left };
        self.tensors[b] = SiteTensor { dl: k, dr, data: s.right };
        self.charges[b] = s.charges;
        if s.discarded > 0.0 {
            self.log_scale += 0.5 * (1.0 - s.discarded).ln();
            self.discarded += s.discarded;
        }
        self.canonical = CanonicalForm::Mixed { center: if move_right { b + 1 } else { b } };
        Ok(s.discarded)
    }

    /// Applies a sequence of gate layers in Heisenberg fashion with
    /// truncation to at most `chi` singular values per bond.
    pub fn apply_heisenberg_step(&mut self, layers: &[&GateLayer], chi: usize, cutoff: f64) -> Result<TruncationReport> {
        if chi == 0 {
            return Err(Error::Precondition("bond dimension must be at least 1".into()));
        }
        let n = self.n_sites();
        let mut report = TruncationReport::new(n.saturating_sub(1));
        for layer in layers {
            if self.symmetric && !layer.conserves_parity {
                self.drop_symmetry();
            }
            if layer.gates.is_empty() {
                continue;
            }
            if layer.gates.iter().any(|(b, _)| *b + 1 > n) {
                return Err(Error::Precondition("gate layer does not fit the MPO".into()));
            }
            if self.center().is_none() {
                self.move_center(1);
            }
            let c = self.center().unwrap();
            let first = layer.gates.first().unwrap().0;
            let last = layer.gates.last().unwrap().0;
            let ascending = c.abs_diff(first) <= c.abs_diff(last + 1);
            let order: Vec<&(usize, CMat)> =
                if ascending { layer.gates.iter().collect() } else { layer.gates.iter().rev().collect() };
            for (b, g) in order {
                let sparse = sparse_gate(g);
                let w = self.apply_bond_gate(*b, &sparse, chi, cutoff, ascending)?;
                report.record(*b, w);
            }
        }
        Ok(report)
    }
}
