//! Frequency bands over a DCT spectrum and the named combinations that get masked.
//!
//! The default scheme uses fixed dyadic index boundaries, `[0,1] [2,3] [4,7]
//! [8,15] [16,n-1]`, so band meaning does not shift with sequence length.

use std::fmt;

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::BandFilter;

/// Tokens needed for one full cosine cycle at a frequency index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Period {
    Unbounded,
    Tokens(Ratio<u64>),
}

impl Period {
    pub fn to_f64(self) -> f64 {
        match self {
            Period::Unbounded => f64::INFINITY,
            Period::Tokens(r) => *r.numer() as f64 / *r.denom() as f64,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Unbounded => f.write_str("∞"),
            Period::Tokens(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Period::Tokens(_) => {
                let s = format!("{:.2}", self.to_f64());
                f.write_str(s.trim_end_matches('0').trim_end_matches('.'))
            }
        }
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Period::Unbounded => s.serialize_none(),
            Period::Tokens(_) => s.serialize_f64(self.to_f64()),
        }
    }
}

/// Period of DCT index `m` for a length-`n` sequence: `n / (2m)`, unbounded at `m = 0`.
pub fn period_of(m: usize, n: usize) -> Result<Period> {
    if m >= n {
        return Err(Error::IndexOutOfRange { index: m, n });
    }
    if m == 0 {
        return Ok(Period::Unbounded);
    }
    Ok(Period::Tokens(Ratio::new(n as u64, 2 * m as u64)))
}

/// A named contiguous index interval, `lo..=hi`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Band {
    pub name: String,
    pub lo: usize,
    pub hi: usize,
}

impl Band {
    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }

    pub fn contains(&self, m: usize) -> bool {
        self.indices().contains(&m)
    }
}

/// Ordered partition of `0..n` into named bands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandScheme {
    n: usize,
    bands: Vec<Band>,
}

pub const DYADIC_MIN_LEN: usize = 17;
const DYADIC_BOUNDS: [(usize, usize); 4] = [(0, 1), (2, 3), (4, 7), (8, 15)];

/// The 5-band dyadic scheme `b1..b5`; `b5` absorbs every index from 16 on.
pub fn default_scheme(n: usize) -> Result<BandScheme> {
    if n < DYADIC_MIN_LEN {
        return Err(Error::UnsupportedLength { n });
    }
    let mut bands: Vec<Band> =
        DYADIC_BOUNDS.iter().enumerate().map(|(k, &(lo, hi))| Band { name: format!("b{}", k + 1), lo, hi }).collect();
    bands.push(Band { name: "b5".into(), lo: 16, hi: n - 1 });
    BandScheme::new(n, bands)
}

impl BandScheme {
    /// Validates that `bands` is an ordered, gap-free partition of `0..n`.
    pub fn new(n: usize, bands: Vec<Band>) -> Result<Self> {
        let mut next = 0;
        for band in &bands {
            if band.lo != next || band.hi < band.lo {
                return Err(Error::Shape(format!(
                    "band {} = [{}, {}] does not continue the partition at index {next}",
                    band.name, band.lo, band.hi
                )));
            }
            next = band.hi + 1;
        }
        if next != n {
            return Err(Error::Shape(format!("bands cover 0..{next}, expected 0..{n}")));
        }
        for (k, band) in bands.iter().enumerate() {
            if bands[..k].iter().any(|b| b.name == band.name) {
                return Err(Error::Shape(format!("duplicate band name {}", band.name)));
            }
        }
        Ok(Self { n, bands })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band(&self, name: &str) -> Result<&Band> {
        self.bands.iter().find(|b| b.name == name).ok_or_else(|| Error::UnknownBand(name.to_string()))
    }

    pub fn band_of(&self, m: usize) -> Option<&Band> {
        self.bands.iter().find(|b| b.contains(m))
    }

    /// `(shortest, longest)` period within a band, from its endpoints.
    pub fn period_range(&self, band: &Band) -> (Period, Period) {
        let shortest = period_of(band.hi, self.n).expect("band within scheme");
        let longest = period_of(band.lo, self.n).expect("band within scheme");
        (shortest, longest)
    }

    /// Table rows: `band lo-hi shortest-longest`.
    pub fn table(&self) -> Vec<BandRow> {
        self.bands
            .iter()
            .map(|b| {
                let (shortest, longest) = self.period_range(b);
                BandRow { band: b.name.clone(), lo: b.lo, hi: b.hi, period_min: shortest, period_max: longest }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandRow {
    pub band: String,
    pub lo: usize,
    pub hi: usize,
    pub period_min: Period,
    pub period_max: Period,
}

impl fmt::Display for BandRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}-{} {}-{}", self.band, self.lo, self.hi, self.period_min, self.period_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComboName {
    C1,
    C2,
    C3,
    Custom,
}

impl ComboName {
    pub const NAMED: [ComboName; 3] = [ComboName::C1, ComboName::C2, ComboName::C3];

    pub fn as_str(self) -> &'static str {
        match self {
            ComboName::C1 => "c1",
            ComboName::C2 => "c2",
            ComboName::C3 => "c3",
            ComboName::Custom => "custom",
        }
    }
}

/// Bands to mask together. Custom combinations may also carry raw index ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandCombination {
    pub name: ComboName,
    pub bands: Vec<String>,
    pub ranges: Vec<(usize, usize)>,
}

impl BandCombination {
    pub fn named(name: ComboName) -> Self {
        let bands: &[&str] = match name {
            ComboName::C1 => &["b1", "b2", "b4"],
            ComboName::C2 => &["b1", "b2"],
            ComboName::C3 => &["b1"],
            ComboName::Custom => &[],
        };
        Self { name, bands: bands.iter().map(|s| s.to_string()).collect(), ranges: Vec::new() }
    }

    pub fn c1() -> Self {
        Self::named(ComboName::C1)
    }

    pub fn c2() -> Self {
        Self::named(ComboName::C2)
    }

    pub fn c3() -> Self {
        Self::named(ComboName::C3)
    }

    pub fn empty() -> Self {
        Self::named(ComboName::Custom)
    }

    pub fn custom(bands: Vec<String>, ranges: Vec<(usize, usize)>) -> Self {
        Self { name: ComboName::Custom, bands, ranges }
    }

    pub fn needs_scheme(&self) -> bool {
        !self.bands.is_empty()
    }

    /// Union of the named bands and raw ranges as a filter over `scheme.n()`.
    pub fn resolve(&self, scheme: &BandScheme) -> Result<BandFilter> {
        self.resolve_indices(scheme.n, Some(scheme))
    }

    /// Like [`resolve`](Self::resolve), building the default scheme only if a band
    /// name is referenced, so raw ranges work at any length.
    pub fn resolve_for_length(&self, n: usize) -> Result<BandFilter> {
        if self.needs_scheme() {
            self.resolve(&default_scheme(n)?)
        } else {
            self.resolve_indices(n, None)
        }
    }

    fn resolve_indices(&self, n: usize, scheme: Option<&BandScheme>) -> Result<BandFilter> {
        let mut masked = Vec::new();
        for name in &self.bands {
            let scheme = scheme.ok_or_else(|| Error::UnknownBand(name.clone()))?;
            masked.extend(scheme.band(name)?.indices());
        }
        for &(lo, hi) in &self.ranges {
            if hi >= n {
                return Err(Error::BandSpec {
                    token: format_range(lo, hi),
                    reason: format!("index {hi} out of range for n = {n}"),
                });
            }
            masked.extend(lo..=hi);
        }
        BandFilter::new(n, masked)
    }
}

impl fmt::Display for BandCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.name != ComboName::Custom {
            return f.write_str(self.name.as_str());
        }
        let parts: Vec<String> =
            self.bands.iter().cloned().chain(self.ranges.iter().map(|&(lo, hi)| format_range(lo, hi))).collect();
        f.write_str(&parts.join(","))
    }
}

fn format_range(lo: usize, hi: usize) -> String {
    if lo == hi {
        lo.to_string()
    } else {
        format!("{lo}-{hi}")
    }
}

/// Resolves a named combination against a scheme.
pub fn resolve_filter(combo: &BandCombination, scheme: &BandScheme) -> Result<BandFilter> {
    combo.resolve(scheme)
}

/// Parses a band spec.
///
/// Accepted forms: `c1`/`c2`/`c3`; a comma list of band names (`b1,b4`); a
/// comma list of index ranges (`0-1,8-15`, single indices allowed); mixes of
/// names and ranges. The empty string is the empty combination.
pub fn parse_band_spec(text: &str) -> Result<BandCombination> {
    let text = text.trim();
    match text {
        "" => return Ok(BandCombination::empty()),
        "c1" => return Ok(BandCombination::c1()),
        "c2" => return Ok(BandCombination::c2()),
        "c3" => return Ok(BandCombination::c3()),
        _ => {}
    }
    let mut bands = Vec::new();
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    for raw in text.split(',') {
        let token = raw.trim();
        let bad = |reason: &str| Error::BandSpec { token: token.to_string(), reason: reason.to_string() };
        if token.is_empty() {
            return Err(bad("empty list element"));
        }
        if is_band_name(token) {
            if bands.iter().any(|b| b == token) {
                return Err(bad("band listed twice"));
            }
            bands.push(token.to_string());
            continue;
        }
        let (lo, hi) = match token.split_once('-') {
            Some((lo, hi)) => (parse_index(lo.trim()), parse_index(hi.trim())),
            None => (parse_index(token), parse_index(token)),
        };
        let (Some(lo), Some(hi)) = (lo, hi) else {
            return Err(bad("expected c1|c2|c3, a band name like b4, or an index range like 8-15"));
        };
        if lo > hi {
            return Err(bad("range start exceeds range end"));
        }
        if ranges.iter().any(|&(a, b)| lo <= b && a <= hi) {
            return Err(bad("overlaps an earlier range"));
        }
        ranges.push((lo, hi));
    }
    Ok(BandCombination::custom(bands, ranges))
}

fn is_band_name(token: &str) -> bool {
    token.len() > 1 && token.starts_with('b') && token[1..].bytes().all(|c| c.is_ascii_digit())
}

fn parse_index(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|c| c.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periods_match_reference_values() {
        assert_eq!(period_of(1, 50).unwrap(), Period::Tokens(Ratio::from_integer(25)));
        assert_eq!(period_of(5, 50).unwrap(), Period::Tokens(Ratio::from_integer(5)));
        assert_eq!(period_of(0, 7).unwrap(), Period::Unbounded);
        assert!(matches!(period_of(50, 50), Err(Error::IndexOutOfRange { index: 50, n: 50 })));
    }

    #[test]
    fn period_display() {
        assert_eq!(period_of(0, 50).unwrap().to_string(), "∞");
        assert_eq!(period_of(1, 50).unwrap().to_string(), "25");
        assert_eq!(period_of(3, 50).unwrap().to_string(), "8.33");
        assert_eq!(period_of(4, 50).unwrap().to_string(), "6.25");
        assert_eq!(period_of(2, 50).unwrap().to_string(), "12.5");
    }

    #[test]
    fn default_scheme_at_50() {
        let s = default_scheme(50).unwrap();
        let got: Vec<(&str, usize, usize)> = s.bands().iter().map(|b| (b.name.as_str(), b.lo, b.hi)).collect();
        assert_eq!(got, vec![("b1", 0, 1), ("b2", 2, 3), ("b3", 4, 7), ("b4", 8, 15), ("b5", 16, 49)]);
        assert_eq!(s.table()[0].to_string(), "b1 0-1 25-∞");
    }

    #[test]
    fn default_scheme_generalizes() {
        let s = default_scheme(65).unwrap();
        assert_eq!(s.band("b5").unwrap().indices(), 16..=64);
        assert_eq!(s.band("b4").unwrap().indices(), 8..=15);
        assert!(default_scheme(17).is_ok());
        assert!(matches!(default_scheme(16), Err(Error::UnsupportedLength { n: 16 })));
    }

    #[test]
    fn scheme_validation() {
        let band = |name: &str, lo, hi| Band { name: name.into(), lo, hi };
        assert!(BandScheme::new(4, vec![band("a", 0, 1), band("b", 2, 3)]).is_ok());
        assert!(BandScheme::new(4, vec![band("a", 0, 1), band("b", 3, 3)]).is_err());
        assert!(BandScheme::new(4, vec![band("a", 0, 1), band("b", 2, 2)]).is_err());
        assert!(BandScheme::new(4, vec![band("a", 0, 1), band("a", 2, 3)]).is_err());
    }

    #[test]
    fn named_combinations_at_50() {
        let s = default_scheme(50).unwrap();
        assert_eq!(resolve_filter(&BandCombination::c3(), &s).unwrap().masked(), &[0, 1]);
        assert_eq!(resolve_filter(&BandCombination::c2(), &s).unwrap().masked(), &[0, 1, 2, 3]);
        let c1: Vec<usize> = [0, 1, 2, 3].into_iter().chain(8..=15).collect();
        assert_eq!(resolve_filter(&BandCombination::c1(), &s).unwrap().masked(), c1.as_slice());
        assert!(resolve_filter(&BandCombination::empty(), &s).unwrap().is_empty());
    }

    #[test]
    fn unknown_band_is_a_lookup_error() {
        let s = default_scheme(50).unwrap();
        let combo = BandCombination::custom(vec!["b9".into()], vec![]);
        assert!(matches!(combo.resolve(&s), Err(Error::UnknownBand(name)) if name == "b9"));
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_band_spec("c1").unwrap(), BandCombination::c1());
        assert_eq!(parse_band_spec("").unwrap(), BandCombination::empty());
        let s = default_scheme(50).unwrap();
        assert_eq!(parse_band_spec("b1,b2").unwrap().resolve(&s).unwrap(), BandCombination::c2().resolve(&s).unwrap());
        let ranges = parse_band_spec("0-1,8-15").unwrap().resolve_for_length(50).unwrap();
        let want: Vec<usize> = [0, 1].into_iter().chain(8..=15).collect();
        assert_eq!(ranges.masked(), want.as_slice());
        assert_eq!(
            parse_band_spec(" 3 , b4 ").unwrap().resolve(&s).unwrap().masked(),
            &[3, 8, 9, 10, 11, 12, 13, 14, 15]
        );
    }

    #[test]
    fn ranges_resolve_below_dyadic_length() {
        let f = parse_band_spec("1-2").unwrap().resolve_for_length(4).unwrap();
        assert_eq!(f.masked(), &[1, 2]);
        assert!(matches!(parse_band_spec("b1").unwrap().resolve_for_length(4), Err(Error::UnsupportedLength { n: 4 })));
    }

    #[test]
    fn parse_errors_name_the_token() {
        let token_of = |text: &str| match parse_band_spec(text) {
            Err(Error::BandSpec { token, .. }) => token,
            other => panic!("expected BandSpec error for {text:?}, got {other:?}"),
        };
        assert_eq!(token_of("0-3,2-5"), "2-5");
        assert_eq!(token_of("0-1,x"), "x");
        assert_eq!(token_of("5-2"), "5-2");
        assert_eq!(token_of("b1,,b2"), "");
        assert_eq!(token_of("b1,b1"), "b1");
        assert_eq!(token_of("-3"), "-3");
        match parse_band_spec("0-1,60-70").unwrap().resolve_for_length(50) {
            Err(Error::BandSpec { token, .. }) => assert_eq!(token, "60-70"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn display_roundtrips_through_parser() {
        for text in ["c1", "c3", "b1,b4", "0-1,8-15", "b2,7"] {
            let combo = parse_band_spec(text).unwrap();
            assert_eq!(parse_band_spec(&combo.to_string()).unwrap(), combo);
        }
    }
}
