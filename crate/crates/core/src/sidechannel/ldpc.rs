//! Regular (3,6) LDPC codes with a systematic encoder and a flooding
//! sum-product decoder.
//!
//! Construction pairs variable and check sockets through a seeded random
//! permutation, repairs parallel edges, then runs a bounded pass of edge swaps
//! that removes length-4 cycles. The encoder comes from reducing H to
//! row-echelon form over GF(2); constructions whose H is rank deficient are
//! retried with the next derived stream.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::trial_stream;

const COLUMN_WEIGHT: usize = 3;
const ROW_WEIGHT: usize = 6;
const MAX_ATTEMPTS: u32 = 64;
const CYCLE_PASSES: usize = 200;
/// Magnitude at which channel LLRs are clipped.
pub const LLR_CLIP: f64 = 30.0;

/// A binary LDPC code with its systematic encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpcCode {
    n: usize,
    m: usize,
    var_checks: Vec<Vec<u32>>,
    check_vars: Vec<Vec<u32>>,
    // edges grouped by check
    check_ptr: Vec<usize>,
    edge_var: Vec<u32>,
    var_edges: Vec<Vec<u32>>,
    info_pos: Vec<usize>,
    parity_pos: Vec<usize>,
    // for each parity position, its dependence on the info bits
    parity_rows: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    /// Hard decisions for all n code bits.
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

impl LdpcCode {
    /// Seeded regular (3,6) rate-1/2 code of length `n`.
    pub fn regular(n: usize, seed: u64) -> Result<Self> {
        if n == 0 || n % 2 != 0 || n < 2 * ROW_WEIGHT {
            return Err(Error::config(format!(
                "LDPC length must be even and at least {}, got {n}",
                2 * ROW_WEIGHT
            )));
        }
        let m = n / 2;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = trial_stream(seed, u32::MAX, attempt);
            let Some(var_checks) = random_regular(n, m, &mut rng) else {
                continue;
            };
            if let Ok(code) = Self::from_var_checks(n, m, var_checks) {
                return Ok(code);
            }
        }
        Err(Error::Domain(format!(
            "no full-rank (3,6) construction for n = {n} after {MAX_ATTEMPTS} attempts"
        )))
    }

    fn from_var_checks(n: usize, m: usize, mut var_checks: Vec<Vec<u32>>) -> Result<Self> {
        var_checks.iter_mut().for_each(|cs| cs.sort_unstable());
        let mut check_vars = vec![Vec::new(); m];
        for (v, cs) in var_checks.iter().enumerate() {
            for &c in cs {
                if c as usize >= m {
                    return Err(Error::Parse(format!("check index {c} out of range")));
                }
                check_vars[c as usize].push(v as u32);
            }
        }
        for cv in check_vars.iter_mut() {
            cv.sort_unstable();
        }
        let mut check_ptr = Vec::with_capacity(m + 1);
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); n];
        check_ptr.push(0);
        for cv in &check_vars {
            for &v in cv {
                var_edges[v as usize].push(edge_var.len() as u32);
                edge_var.push(v);
            }
            check_ptr.push(edge_var.len());
        }
        let (info_pos, parity_pos, parity_rows) = systematic_encoder(n, &check_vars)?;
        Ok(LdpcCode {
            n,
            m,
            var_checks,
            check_vars,
            check_ptr,
            edge_var,
            var_edges,
            info_pos,
            parity_pos,
            parity_rows,
        })
    }

    /// Codeword length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of parity checks.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of information bits per codeword.
    pub fn k(&self) -> usize {
        self.info_pos.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n as f64
    }

    pub fn column_weight(&self, v: usize) -> usize {
        self.var_checks[v].len()
    }

    pub fn row_weight(&self, c: usize) -> usize {
        self.check_vars[c].len()
    }

    /// Number of variable pairs sharing two or more checks.
    pub fn four_cycles(&self) -> usize {
        let mut count = 0;
        for v in 0..self.n {
            let mut seen = std::collections::HashMap::new();
            for &c in &self.var_checks[v] {
                for &u in &self.check_vars[c as usize] {
                    if (u as usize) > v {
                        *seen.entry(u).or_insert(0usize) += 1;
                    }
                }
            }
            count += seen.values().filter(|&&k| k >= 2).count();
        }
        count
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k() {
            return Err(Error::contract(format!(
                "LDPC encoder takes {} info bits, got {}",
                self.k(),
                info.len()
            )));
        }
        let words = pack_bits(info);
        let mut cw = vec![0u8; self.n];
        for (&pos, &b) in self.info_pos.iter().zip(info) {
            cw[pos] = b & 1;
        }
        for (&pos, row) in self.parity_pos.iter().zip(&self.parity_rows) {
            let ones: u32 = row.iter().zip(&words).map(|(a, b)| (a & b).count_ones()).sum();
            cw[pos] = (ones & 1) as u8;
        }
        Ok(cw)
    }

    /// Information bits at their systematic positions.
    pub fn extract_info(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_pos.iter().map(|&p| codeword[p]).collect()
    }

    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        self.check_vars
            .iter()
            .all(|cv| cv.iter().fold(0u8, |acc, &v| acc ^ bits[v as usize]) == 0)
    }

    /// Sum-product decoding. Positive LLR means bit 0.
    pub fn decode(&self, llrs: &[f64], max_iters: usize) -> Result<DecodeOutcome> {
        if llrs.len() != self.n {
            return Err(Error::contract(format!(
                "LDPC decoder takes {} LLRs, got {}",
                self.n,
                llrs.len()
            )));
        }
        let channel: Vec<f64> = llrs
            .iter()
            .map(|l| if l.is_nan() { 0.0 } else { l.clamp(-LLR_CLIP, LLR_CLIP) })
            .collect();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| channel[v as usize]).collect();
        let mut c2v = vec![0.0; v2c.len()];
        let mut bits: Vec<u8> = channel.iter().map(|&l| (l < 0.0) as u8).collect();
        let mut fwd = Vec::new();
        for iter in 1..=max_iters {
            for c in 0..self.m {
                let (lo, hi) = (self.check_ptr[c], self.check_ptr[c + 1]);
                let t: Vec<f64> = v2c[lo..hi].iter().map(|x| (0.5 * x).tanh()).collect();
                fwd.clear();
                let mut acc = 1.0;
                for &x in &t {
                    fwd.push(acc);
                    acc *= x;
                }
                let mut bwd = 1.0;
                for i in (0..t.len()).rev() {
                    let p = (fwd[i] * bwd).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[lo + i] = 2.0 * p.atanh();
                    bwd *= t[i];
                }
            }
            for v in 0..self.n {
                let edges = &self.var_edges[v];
                let total = channel[v] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                for &e in edges {
                    v2c[e as usize] = total - c2v[e as usize];
                }
                bits[v] = (total < 0.0) as u8;
            }
            if self.syndrome_ok(&bits) {
                return Ok(DecodeOutcome {
                    bits,
                    converged: true,
                    iterations: iter,
                });
            }
        }
        Ok(DecodeOutcome {
            bits,
            converged: false,
            iterations: max_iters,
        })
    }

    /// Serializes H in alist format (1-based indices, zero padded).
    pub fn to_alist(&self) -> String {
        let max_col = self.var_checks.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.check_vars.iter().map(Vec::len).max().unwrap_or(0);
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n, self.m);
        let _ = writeln!(s, "{max_col} {max_row}");
        let join = |it: &mut dyn Iterator<Item = usize>| {
            it.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(s, "{}", join(&mut self.var_checks.iter().map(Vec::len)));
        let _ = writeln!(s, "{}", join(&mut self.check_vars.iter().map(Vec::len)));
        for cs in &self.var_checks {
            let mut col: Vec<usize> = cs.iter().map(|&c| c as usize + 1).collect();
            col.resize(max_col, 0);
            let _ = writeln!(s, "{}", join(&mut col.into_iter()));
        }
        for vs in &self.check_vars {
            let mut row: Vec<usize> = vs.iter().map(|&v| v as usize + 1).collect();
            row.resize(max_row, 0);
            let _ = writeln!(s, "{}", join(&mut row.into_iter()));
        }
        s
    }

    /// Parses an alist file. H must have full row rank.
    pub fn from_alist(text: &str) -> Result<Self> {
        let mut nums = text.split_whitespace().map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Parse(format!("invalid alist token {t:?}")))
        });
        let mut next = || nums.next().unwrap_or_else(|| Err(Error::Parse("truncated alist".into())));
        let (n, m) = (next()?, next()?);
        let (max_col, max_row) = (next()?, next()?);
        if n == 0 || m == 0 || m >= n {
            return Err(Error::Parse(format!("unsupported alist shape {n}x{m}")));
        }
        let col_w: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_>>()?;
        let row_w: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_>>()?;
        let mut var_checks = Vec::with_capacity(n);
        for &w in &col_w {
            let entries: Vec<usize> = (0..max_col).map(|_| next()).collect::<Result<_>>()?;
            let cs: Vec<u32> = entries.iter().filter(|&&x| x != 0).map(|&x| (x - 1) as u32).collect();
            if cs.len() != w {
                return Err(Error::Parse("alist column weight mismatch".into()));
            }
            var_checks.push(cs);
        }
        let mut row_lists = Vec::with_capacity(m);
        for &w in &row_w {
            let entries: Vec<usize> = (0..max_row).map(|_| next()).collect::<Result<_>>()?;
            let vs: Vec<usize> = entries.iter().filter(|&&x| x != 0).map(|&x| x - 1).collect();
            if vs.len() != w || vs.iter().any(|&v| v >= n) {
                return Err(Error::Parse("alist row entries invalid".into()));
            }
            row_lists.push(vs);
        }
        let code = Self::from_var_checks(n, m, var_checks)?;
        for (c, vs) in row_lists.iter().enumerate() {
            let mut sorted = vs.clone();
            sorted.sort_unstable();
            if sorted.iter().map(|&v| v as u32).ne(code.check_vars[c].iter().copied()) {
                return Err(Error::Parse("alist row and column lists disagree".into()));
            }
        }
        Ok(code)
    }
}

fn pack_bits(bits: &[u8]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

/// Configuration-model edge assignment with parallel-edge repair and 4-cycle
/// removal. `None` if parallel edges could not be repaired.
fn random_regular<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Option<Vec<Vec<u32>>> {
    let mut sockets: Vec<u32> = (0..m as u32)
        .flat_map(|c| std::iter::repeat_n(c, ROW_WEIGHT))
        .collect();
    sockets.shuffle(rng);
    let mut var_checks: Vec<Vec<u32>> = sockets.chunks(COLUMN_WEIGHT).map(<[u32]>::to_vec).collect();
    let mut check_vars = vec![Vec::with_capacity(ROW_WEIGHT); m];
    for (v, cs) in var_checks.iter().enumerate() {
        for &c in cs {
            check_vars[c as usize].push(v as u32);
        }
    }

    let swap_ok = |vc: &[Vec<u32>], v: usize, slot: usize, w: usize, wslot: usize| {
        let (c1, c2) = (vc[v][slot], vc[w][wslot]);
        v != w && c1 != c2 && !vc[v].contains(&c2) && !vc[w].contains(&c1)
    };

    // parallel edges
    for _ in 0..CYCLE_PASSES {
        let mut clean = true;
        for v in 0..n {
            for slot in 0..COLUMN_WEIGHT {
                let c = var_checks[v][slot];
                if var_checks[v].iter().filter(|&&x| x == c).count() < 2 {
                    continue;
                }
                clean = false;
                let w = rng.random_range(0..n);
                let wslot = rng.random_range(0..COLUMN_WEIGHT);
                let c2 = var_checks[w][wslot];
                if v != w && c != c2 && !var_checks[v].contains(&c2) && !var_checks[w].contains(&c) {
                    apply_swap(&mut var_checks, &mut check_vars, v, slot, w, wslot);
                }
            }
        }
        if clean {
            break;
        }
    }
    if var_checks.iter().any(|cs| {
        let mut s = cs.clone();
        s.sort_unstable();
        s.dedup();
        s.len() != cs.len()
    }) {
        return None;
    }

    // length-4 cycles
    for _ in 0..CYCLE_PASSES {
        let mut clean = true;
        for v in 0..n {
            let Some(slot) = cycle_slot(&var_checks, &check_vars, v) else {
                continue;
            };
            clean = false;
            for _try in 0..32 {
                let w = rng.random_range(0..n);
                let wslot = rng.random_range(0..COLUMN_WEIGHT);
                if !swap_ok(&var_checks, v, slot, w, wslot) {
                    continue;
                }
                let had_w = cycle_slot(&var_checks, &check_vars, w).is_some();
                apply_swap(&mut var_checks, &mut check_vars, v, slot, w, wslot);
                let bad = cycle_slot(&var_checks, &check_vars, v).is_some()
                    || (!had_w && cycle_slot(&var_checks, &check_vars, w).is_some());
                if bad {
                    apply_swap(&mut var_checks, &mut check_vars, v, slot, w, wslot);
                } else {
                    break;
                }
            }
        }
        if clean {
            break;
        }
    }
    Some(var_checks)
}

fn apply_swap(
    var_checks: &mut [Vec<u32>],
    check_vars: &mut [Vec<u32>],
    v: usize,
    slot: usize,
    w: usize,
    wslot: usize,
) {
    let c1 = var_checks[v][slot];
    let c2 = var_checks[w][wslot];
    var_checks[v][slot] = c2;
    var_checks[w][wslot] = c1;
    for x in check_vars[c1 as usize].iter_mut() {
        if *x == v as u32 {
            *x = w as u32;
            break;
        }
    }
    for x in check_vars[c2 as usize].iter_mut() {
        if *x == w as u32 {
            *x = v as u32;
            break;
        }
    }
}

/// Slot of a check of `v` that lies on a 4-cycle through `v`, if any.
fn cycle_slot(var_checks: &[Vec<u32>], check_vars: &[Vec<u32>], v: usize) -> Option<usize> {
    let cs = &var_checks[v];
    for i in 0..cs.len() {
        for j in i + 1..cs.len() {
            let a = &check_vars[cs[i] as usize];
            let b = &check_vars[cs[j] as usize];
            if a.iter().any(|&u| u != v as u32 && b.contains(&u)) {
                return Some(i);
            }
        }
    }
    None
}

type Encoder = (Vec<usize>, Vec<usize>, Vec<Vec<u64>>);

/// Reduced row-echelon form of H over GF(2). Pivot columns carry parity bits,
/// the remaining columns carry information bits.
fn systematic_encoder(n: usize, check_vars: &[Vec<u32>]) -> Result<Encoder> {
    let m = check_vars.len();
    let words = n.div_ceil(64);
    let mut rows: Vec<Vec<u64>> = check_vars
        .iter()
        .map(|vs| {
            let mut r = vec![0u64; words];
            for &v in vs {
                r[v as usize / 64] ^= 1 << (v % 64);
            }
            r
        })
        .collect();
    let mut pivots = Vec::with_capacity(m);
    let mut r = 0;
    for col in 0..n {
        if r == m {
            break;
        }
        let (w, bit) = (col / 64, 1u64 << (col % 64));
        let Some(p) = (r..m).find(|&i| rows[i][w] & bit != 0) else {
            continue;
        };
        rows.swap(r, p);
        let pivot = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && row[w] & bit != 0 {
                row.iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= b);
            }
        }
        pivots.push(col);
        r += 1;
    }
    if pivots.len() < m {
        return Err(Error::Domain(format!(
            "parity-check matrix has rank {} < {m}",
            pivots.len()
        )));
    }
    let mut is_pivot = vec![false; n];
    pivots.iter().for_each(|&p| is_pivot[p] = true);
    let info_pos: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let k = info_pos.len();
    let parity_rows = rows
        .iter()
        .map(|row| {
            let mut out = vec![0u64; k.div_ceil(64)];
            for (j, &c) in info_pos.iter().enumerate() {
                if row[c / 64] >> (c % 64) & 1 == 1 {
                    out[j / 64] |= 1 << (j % 64);
                }
            }
            out
        })
        .collect();
    Ok((info_pos, pivots, parity_rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn regular_structure() {
        let code = LdpcCode::regular(256, 1).unwrap();
        assert_eq!(code.k(), 128);
        assert_eq!(code.rate(), 0.5);
        assert!((0..256).all(|v| code.column_weight(v) == 3));
        assert!((0..128).all(|c| code.row_weight(c) == 6));
        assert_eq!(code.four_cycles(), 0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = LdpcCode::regular(128, 9).unwrap();
        let b = LdpcCode::regular(128, 9).unwrap();
        let c = LdpcCode::regular(128, 10).unwrap();
        assert!(a == b);
        assert_ne!(a.to_alist(), c.to_alist());
    }

    #[test]
    fn codewords_satisfy_checks() {
        let code = LdpcCode::regular(256, 2).unwrap();
        let mut rng = seeded(5);
        for _ in 0..50 {
            let info: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
            let cw = code.encode(&info).unwrap();
            assert!(code.syndrome_ok(&cw));
            assert_eq!(code.extract_info(&cw), info);
        }
        assert!(code.encode(&[0; 3]).is_err());
    }

    #[test]
    fn noiseless_decodes_in_one_iteration() {
        let code = LdpcCode::regular(256, 3).unwrap();
        let info: Vec<u8> = (0..code.k()).map(|i| (i % 3 == 0) as u8).collect();
        let cw = code.encode(&info).unwrap();
        let llrs: Vec<f64> = cw
            .iter()
            .map(|&b| if b == 0 { f64::INFINITY } else { f64::NEG_INFINITY })
            .collect();
        let out = code.decode(&llrs, 50).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.bits, cw);
    }

    #[test]
    fn corrects_a_few_flips() {
        let code = LdpcCode::regular(512, 4).unwrap();
        let cw = vec![0u8; 512];
        let mut llrs = vec![4.0; 512];
        for i in [3, 100, 250, 400] {
            llrs[i] = -1.0;
        }
        let out = code.decode(&llrs, 50).unwrap();
        assert!(out.converged);
        assert_eq!(out.bits, cw);
    }

    #[test]
    fn alist_roundtrip() {
        let code = LdpcCode::regular(96, 7).unwrap();
        let text = code.to_alist();
        let first: Vec<&str> = text.lines().take(2).collect();
        assert_eq!(first, vec!["96 48", "3 6"]);
        let back = LdpcCode::from_alist(&text).unwrap();
        assert!(back == code);
        assert_eq!(back.to_alist(), text);
        assert!(LdpcCode::from_alist("4 2\n1 1\n").is_err());
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(LdpcCode::regular(7, 0).is_err());
        assert!(LdpcCode::regular(0, 0).is_err());
    }
}
