//! Warm-start step selection from the channel bandwidth ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(cbr, N_s)` pairs with increasing CBR and decreasing N_s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsTable {
    pub entries: Vec<(f64, usize)>,
}

impl Default for NsTable {
    fn default() -> Self {
        NsTable {
            entries: vec![(0.0020, 600), (0.0033, 500), (0.0059, 400), (0.011, 300)],
        }
    }
}

impl NsTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::config("N_s table is empty"));
        }
        for w in self.entries.windows(2) {
            if !(w[1].0 > w[0].0) || !(w[1].1 < w[0].1) {
                return Err(Error::config(
                    "N_s table needs strictly increasing CBR and strictly decreasing N_s",
                ));
            }
        }
        if self.entries.iter().any(|&(c, n)| !(c > 0.0) || n == 0) {
            return Err(Error::config("N_s table entries must have cbr > 0 and N_s >= 1"));
        }
        Ok(())
    }
}

/// Nearest-entry lookup; ties go to the larger N_s and values outside the
/// table clamp to the closest endpoint.
pub fn ns_for_cbr(cbr: f64, table: &NsTable) -> Result<usize> {
    if !(cbr > 0.0) {
        return Err(Error::config(format!("cbr must be > 0, got {cbr}")));
    }
    let mut best: Option<(f64, usize)> = None;
    for &(c, n) in &table.entries {
        let dist = (cbr - c).abs();
        best = match best {
            Some((bd, bn)) if bd < dist || (bd == dist && bn >= n) => Some((bd, bn)),
            _ => Some((dist, n)),
        };
    }
    best.map(|(_, n)| n).ok_or_else(|| Error::config("N_s table is empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_points() {
        let t = NsTable::default();
        assert_eq!(ns_for_cbr(0.0020, &t).unwrap(), 600);
        assert_eq!(ns_for_cbr(0.0033, &t).unwrap(), 500);
        assert_eq!(ns_for_cbr(0.0059, &t).unwrap(), 400);
        assert_eq!(ns_for_cbr(0.011, &t).unwrap(), 300);
    }

    #[test]
    fn clamping_and_ties() {
        let t = NsTable::default();
        assert_eq!(ns_for_cbr(0.5, &t).unwrap(), 300);
        assert_eq!(ns_for_cbr(1e-6, &t).unwrap(), 600);
        let t2 = NsTable { entries: vec![(1.0, 20), (3.0, 10)] };
        assert_eq!(ns_for_cbr(2.0, &t2).unwrap(), 20);
        assert!(ns_for_cbr(0.0, &t).is_err());
        assert!(ns_for_cbr(0.1, &NsTable { entries: vec![] }).is_err());
    }

    #[test]
    fn validation() {
        NsTable::default().validate().unwrap();
        assert!(NsTable { entries: vec![(0.1, 5), (0.2, 6)] }.validate().is_err());
    }
}
