use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// A growth exponent `num/den`, kept unreduced so that `8/24` prints as written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Epsilon {
    pub num: u32,
    pub den: u32,
}

impl Epsilon {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 || num == 0 || num >= den {
            return Err(Error::OutOfRange(format!("epsilon must lie strictly between 0 and 1, got {num}/{den}")));
        }
        Ok(Self { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `floor(n^(num/den))`, exactly: the largest `p` with `p^den <= n^num`.
    pub fn dim_for(&self, n: usize) -> usize {
        let target = BigUint::from(n).pow(self.num);
        let fits = |p: usize| BigUint::from(p).pow(self.den) <= target;
        let mut p = (n as f64).powf(self.value()).floor().max(1.0) as usize;
        while p > 1 && !fits(p) {
            p -= 1;
        }
        while fits(p + 1) {
            p += 1;
        }
        p
    }

    /// `a/d, (a+1)/d, ..., b/d` for `a/d..b/d`.
    pub fn parse_range(s: &str) -> Result<Vec<Self>> {
        let (lo, hi) = s
            .split_once("..")
            .ok_or_else(|| Error::InvalidInput(format!("epsilon range `{s}` must look like 3/24..23/24")))?;
        let (lo, hi) = (lo.parse::<Self>()?, hi.parse::<Self>()?);
        if lo.den != hi.den || lo.num > hi.num {
            return Err(Error::InvalidInput(format!(
                "epsilon range `{s}` needs a common denominator and increasing ends"
            )));
        }
        Ok((lo.num..=hi.num).map(|num| Self { num, den: lo.den }).collect())
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("epsilon `{s}` must be a fraction like 8/24"));
        let (a, b) = s.trim().split_once('/').ok_or_else(bad)?;
        let num = a.trim().parse().map_err(|_| bad())?;
        let den = b.trim().parse().map_err(|_| bad())?;
        Self::new(num, den)
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Stream id for replication `rep` of grid cell `cell`. Distinct pairs map to
/// distinct ChaCha streams, so replications are independent of scheduling.
pub fn stream_id(cell: usize, rep: usize) -> u64 {
    ((cell as u64) << 32) | rep as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_floor_at_perfect_powers() {
        // 1000^(8/24) = 10 exactly, which floating point lands just below
        let e: Epsilon = "8/24".parse().unwrap();
        assert_eq!(e.dim_for(1000), 10);
        assert_eq!(Epsilon::new(12, 24).unwrap().dim_for(900), 30);
        assert_eq!(Epsilon::new(12, 24).unwrap().dim_for(899), 29);
        assert_eq!(Epsilon::new(16, 24).unwrap().dim_for(1000), 100);
    }

    #[test]
    fn design_grid_dimensions() {
        let dims: Vec<usize> = [8, 10, 12, 14, 18, 20]
            .iter()
            .map(|&a| Epsilon::new(a, 24).unwrap().dim_for(1000))
            .collect();
        assert_eq!(dims, vec![10, 17, 31, 56, 177, 316]);
        assert_eq!(Epsilon::new(23, 24).unwrap().dim_for(2000), 1457);
        assert_eq!(Epsilon::new(3, 24).unwrap().dim_for(100), 1);
        assert_eq!(Epsilon::new(1, 3).unwrap().dim_for(2000), 12);
        assert_eq!(Epsilon::new(9, 10).unwrap().dim_for(2000), 935);
    }

    #[test]
    fn parse_and_display() {
        let e: Epsilon = " 14/24 ".parse().unwrap();
        assert_eq!(e.to_string(), "14/24");
        assert!("1/1".parse::<Epsilon>().is_err());
        assert!("0/4".parse::<Epsilon>().is_err());
        assert!("x".parse::<Epsilon>().is_err());
        let r = Epsilon::parse_range("3/24..23/24").unwrap();
        assert_eq!(r.len(), 21);
        assert_eq!(r[5].to_string(), "8/24");
        assert!(Epsilon::parse_range("3/24..2/3").is_err());
    }

    #[test]
    fn streams_are_distinct() {
        assert_ne!(stream_id(0, 1), stream_id(1, 0));
        assert_eq!(stream_id(2, 7), (2u64 << 32) + 7);
    }
}
