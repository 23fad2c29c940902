//! Photon arrival time tags: one channel per series, integer picoseconds,
//! strictly increasing.
//!
//! Binary layout (little endian):
//! `magic "TTAG" | version u16 | channel u16 | count u64 | duration_ps u64`
//! followed by `count` u64 timestamps.

use std::io::{Read, Write};

use thiserror::Error;

pub const TTAG_MAGIC: [u8; 4] = *b"TTAG";
pub const TTAG_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum TagError {
    #[error("timestamps must be strictly increasing and inside [0, duration)")]
    NotSorted,
    #[error("bad file: {0}")]
    BadFile(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeTagSeries {
    pub channel: u16,
    /// Acquisition length in picoseconds; every tag satisfies t < duration.
    pub duration_ps: u64,
    pub timestamps: Vec<u64>,
}

impl TimeTagSeries {
    /// Build from already-sorted timestamps, validating the invariants.
    pub fn new(channel: u16, duration_ps: u64, timestamps: Vec<u64>) -> Result<Self, TagError> {
        let s = TimeTagSeries {
            channel,
            duration_ps,
            timestamps,
        };
        if !s.is_valid() {
            return Err(TagError::NotSorted);
        }
        Ok(s)
    }

    /// Build from arbitrary timestamps: sorts, drops duplicates (sub-tick
    /// coincidences are unresolvable anyway) and tags outside [0, duration).
    pub fn from_unsorted(channel: u16, duration_ps: u64, mut timestamps: Vec<u64>) -> Self {
        timestamps.sort_unstable();
        timestamps.dedup();
        timestamps.retain(|&t| t < duration_ps);
        TimeTagSeries {
            channel,
            duration_ps,
            timestamps,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.timestamps.windows(2).all(|w| w[0] < w[1])
            && self.timestamps.last().map_or(true, |&t| t < self.duration_ps)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Mean count rate in counts/s.
    pub fn rate_hz(&self) -> f64 {
        if self.duration_ps == 0 {
            return 0.0;
        }
        self.timestamps.len() as f64 / (self.duration_ps as f64 * 1e-12)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), TagError> {
        w.write_all(&TTAG_MAGIC)?;
        w.write_all(&TTAG_VERSION.to_le_bytes())?;
        w.write_all(&self.channel.to_le_bytes())?;
        w.write_all(&(self.timestamps.len() as u64).to_le_bytes())?;
        w.write_all(&self.duration_ps.to_le_bytes())?;
        for t in &self.timestamps {
            w.write_all(&t.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, TagError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != TTAG_MAGIC {
            return Err(TagError::BadFile("wrong magic".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != TTAG_VERSION {
            return Err(TagError::BadFile(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b2)?;
        let channel = u16::from_le_bytes(b2);
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let duration_ps = u64::from_le_bytes(b8);
        let mut timestamps = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            timestamps.push(u64::from_le_bytes(b8));
        }
        Self::new(channel, duration_ps, timestamps)
    }

    /// CSV export: channel,timestamp_ps.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), TagError> {
        writeln!(w, "channel,timestamp_ps")?;
        for t in &self.timestamps {
            writeln!(w, "{},{}", self.channel, t)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_unsorted_and_out_of_range() {
        assert!(TimeTagSeries::new(0, 100, vec![5, 5]).is_err());
        assert!(TimeTagSeries::new(0, 100, vec![7, 3]).is_err());
        assert!(TimeTagSeries::new(0, 100, vec![99, 100]).is_err());
        assert!(TimeTagSeries::new(0, 100, vec![0, 99]).is_ok());
    }

    #[test]
    fn from_unsorted_normalizes() {
        let s = TimeTagSeries::from_unsorted(1, 100, vec![50, 10, 50, 120, 99]);
        assert_eq!(s.timestamps, vec![10, 50, 99]);
        assert!(s.is_valid());
    }

    #[test]
    fn binary_round_trip() {
        let s = TimeTagSeries::new(3, 1_000_000, vec![1, 17, 999_999]).unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TTAG");
        let r = TimeTagSeries::read_binary(buf.as_slice()).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn read_rejects_garbage() {
        assert!(TimeTagSeries::read_binary(&b"NOPE"[..]).is_err());
    }
}
