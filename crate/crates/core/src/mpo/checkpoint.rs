//! Versioned little-endian binary snapshots of an MPO.
//!
//! Layout: magic `PFMPO\0`, `u16` version, `u64` N, `u64` max bond
//! dimension, `u8` symmetric flag, `u8` canonical tag + `u64` site,
//! `f64` log scale, `f64` discarded weight, then per site `u64 dl, u64 dr`,
//! per bond `0..=N` the `u8` charges, and finally the complex payload as
//! `(re, im)` `f64` pairs, site by site.

use std::io::{Read, Write};

use super::{CanonicalForm, Mpo, SiteTensor, PHYS};
use crate::error::{Error, Result};
use crate::linalg::C64;

const MAGIC: &[u8; 6] = b"PFMPO\0";
const VERSION: u16 = 1;
/// Refuses absurd headers before allocating.
const MAX_ELEMENTS: usize = 1 << 32;

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(get::<8>(r)?))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(get::<8>(r)?))
}

pub fn write_checkpoint(mpo: &Mpo, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_u64(w, mpo.n_sites() as u64)?;
    put_u64(w, mpo.max_bond_dim() as u64)?;
    w.write_all(&[mpo.symmetric as u8])?;
    let (tag, site) = match mpo.canonical {
        CanonicalForm::None => (0u8, 0usize),
        CanonicalForm::LeftUpTo(m) => (1, m),
        CanonicalForm::Mixed { center } => (2, center),
    };
    w.write_all(&[tag])?;
    put_u64(w, site as u64)?;
    put_f64(w, mpo.log_scale)?;
    put_f64(w, mpo.discarded)?;
    for t in &mpo.tensors {
        put_u64(w, t.dl as u64)?;
        put_u64(w, t.dr as u64)?;
    }
    for c in &mpo.charges {
        w.write_all(c)?;
    }
    for t in &mpo.tensors {
        for z in &t.data {
            put_f64(w, z.re)?;
            put_f64(w, z.im)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Mpo> {
    let magic = get::<6>(r)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(get::<2>(r)?);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = get_u64(r)? as usize;
    let chi = get_u64(r)? as usize;
    if n == 0 || n > 1 << 20 {
        return Err(Error::Checkpoint(format!("implausible site count {n}")));
    }
    let symmetric = get::<1>(r)?[0] != 0;
    let tag = get::<1>(r)?[0];
    let site = get_u64(r)? as usize;
    let canonical = match tag {
        0 => CanonicalForm::None,
        1 => CanonicalForm::LeftUpTo(site),
        2 => CanonicalForm::Mixed { center: site },
        t => return Err(Error::Checkpoint(format!("unknown canonical tag {t}"))),
    };
    let log_scale = get_f64(r)?;
    let discarded = get_f64(r)?;
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        let dl = get_u64(r)? as usize;
        let dr = get_u64(r)? as usize;
        if dl > chi.max(1) || dr > chi.max(1) || dl.saturating_mul(dr).saturating_mul(PHYS) > MAX_ELEMENTS {
            return Err(Error::Checkpoint(format!("bond dimensions {dl}x{dr} exceed header χ = {chi}")));
        }
        shapes.push((dl, dr));
    }
    let mut charges = Vec::with_capacity(n + 1);
    charges.push(get::<1>(r)?.to_vec());
    for &(_, dr) in &shapes {
        let mut c = vec![0u8; dr];
        r.read_exact(&mut c)?;
        if c.iter().any(|&q| q > 2) {
            return Err(Error::Checkpoint("charge label outside 0..3".into()));
        }
        charges.push(c);
    }
    let mut tensors = Vec::with_capacity(n);
    for &(dl, dr) in &shapes {
        let mut data = Vec::with_capacity(dl * PHYS * dr);
        for _ in 0..dl * PHYS * dr {
            let re = get_f64(r)?;
            let im = get_f64(r)?;
            data.push(C64::new(re, im));
        }
        tensors.push(SiteTensor { dl, dr, data });
    }
    let mut mpo = Mpo::from_tensors(tensors).map_err(|e| Error::Checkpoint(e.to_string()))?;
    mpo.charges = charges;
    mpo.symmetric = symmetric;
    mpo.canonical = canonical;
    mpo.log_scale = log_scale;
    mpo.discarded = discarded;
    Ok(mpo)
}
